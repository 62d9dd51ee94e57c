//! Tangent-space machinery for nuclear norm minimization: the projections
//! onto the tangent space at the ground truth, operator norms of linear maps
//! on matrix space, the iterative dual-certificate construction with its
//! verification report, the certificate's leave-one-out ledger, and an
//! operator-splitting primal solver used as a cross-check.

use crate::error::{Error, Result};
use crate::groundtruth::GroundTruth;
use crate::matcore::{self, Mat};
use crate::rng;
use crate::sampling::{GolfingPartition, ObservationMask};
use serde::{Deserialize, Serialize};

/// Orthogonal projections onto the tangent space at `M* = U Σ Vᵀ` and its
/// complement.
#[derive(Debug, Clone)]
pub struct TangentProjector {
    left: Mat,
    right: Mat,
}

impl TangentProjector {
    pub fn left(&self) -> &Mat {
        &self.left
    }

    pub fn right(&self) -> &Mat {
        &self.right
    }

    pub fn d1(&self) -> usize {
        self.left.nrows()
    }

    pub fn d2(&self) -> usize {
        self.right.nrows()
    }

    /// `UVᵀ`, the tangent-space anchor the certificate must reproduce.
    pub fn anchor(&self) -> Mat {
        &self.left * self.right.transpose()
    }

    /// `P_T(Z) = UUᵀZ + ZVVᵀ − UUᵀZVVᵀ`.
    pub fn apply(&self, z: &Mat) -> Mat {
        let a = self.left.transpose() * z; // r×d2
        let b = z * &self.right; // d1×r
        let c = &a * &self.right; // r×r
        &self.left * &a + &b * self.right.transpose()
            - &self.left * (&c * self.right.transpose())
    }

    /// `P_T⊥(Z) = (I − UUᵀ) Z (I − VVᵀ)`, evaluated in expanded form.
    pub fn apply_complement(&self, z: &Mat) -> Mat {
        let a = self.left.transpose() * z;
        let b = z * &self.right;
        let c = &a * &self.right;
        z - &self.left * &a - &b * self.right.transpose()
            + &self.left * (&c * self.right.transpose())
    }
}

/// Tangent projector from a ground truth with strictly positive spectrum.
pub fn make_tangent(truth: &GroundTruth) -> Result<TangentProjector> {
    if truth.factors.spectrum().iter().any(|s| !(s.abs() > 0.0)) {
        return Err(Error::Argument(
            "tangent space needs a strictly positive spectrum".into(),
        ));
    }
    Ok(TangentProjector {
        left: truth.factors.left_factor().clone(),
        right: truth.factors.right_factor().clone(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct OpnormOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for OpnormOptions {
    fn default() -> Self {
        OpnormOptions {
            tol: 1e-8,
            max_iter: 1000,
            seed: 0,
        }
    }
}

/// Operator norm `max_{‖Z‖_F = 1} ‖A(Z)‖_F` of a linear map on d1×d2
/// matrices, by power iteration on `A*∘A` from a seeded probe. Pass the
/// adjoint when the map is not self-adjoint.
pub fn opnorm_matrix_operator(
    rows: usize,
    cols: usize,
    apply: &dyn Fn(&Mat) -> Mat,
    adjoint: Option<&dyn Fn(&Mat) -> Mat>,
    opts: &OpnormOptions,
) -> Result<f64> {
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension("empty operator domain".into()));
    }
    let mut probe = {
        let mut s = rng::stream(opts.seed, &[rng::tag::PROBE, rows as u64, cols as u64]);
        use rand::Rng;
        use rand_distr::StandardNormal;
        Mat::from_fn(rows, cols, |_, _| s.sample::<f64, _>(StandardNormal))
    };
    let n = probe.norm();
    if n == 0.0 {
        return Err(Error::Numeric("zero probe".into()));
    }
    probe /= n;

    let mut estimate = 0.0f64;
    for iter in 0..opts.max_iter {
        let image = apply(&probe);
        let pulled = match adjoint {
            Some(adj) => adj(&image),
            None => apply(&image),
        };
        let new_estimate = image.norm();
        let pulled_norm = pulled.norm();
        // Numerically zero operator: the estimate is already the answer.
        if new_estimate <= 1e-13 || pulled_norm <= f64::MIN_POSITIVE {
            return Ok(new_estimate);
        }
        probe = pulled / pulled_norm;
        let delta = (new_estimate - estimate).abs();
        estimate = new_estimate;
        if iter > 0 && delta <= opts.tol * estimate + 1e-14 {
            return Ok(estimate);
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        estimate,
    })
}

/// `‖P_T R_Ω P_T − P_T‖`, the sampled-isometry defect on the tangent space.
pub fn check_candes1(
    mask: &ObservationMask,
    projector: &TangentProjector,
    opts: &OpnormOptions,
) -> Result<f64> {
    let apply = |z: &Mat| -> Mat {
        let pt_z = projector.apply(z);
        let resampled = mask
            .rescaled_project(&pt_z, None)
            .expect("shape checked at entry");
        projector.apply(&resampled) - pt_z
    };
    if mask.rows() != projector.d1() || mask.cols() != projector.d2() {
        return Err(Error::Argument("mask and projector shapes differ".into()));
    }
    opnorm_matrix_operator(mask.rows(), mask.cols(), &apply, None, opts)
}

/// Verification of the sufficient optimality conditions for the certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    /// ‖P_T R_Ω P_T − P_T‖ on the union mask.
    pub cond1: f64,
    /// ‖P_T⊥(Y)‖_op.
    pub cond2a: f64,
    /// ‖P_T(Y) − UVᵀ‖_F.
    pub cond2b: f64,
    /// Π_Ω(Y) = Y, bit for bit.
    pub support_ok: bool,
    pub threshold_cond1: f64,
    pub threshold_cond2a: f64,
    pub threshold_cond2b: f64,
    pub pass: bool,
    pub k0: usize,
    pub t0: usize,
    pub q: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct CertificateBuild {
    pub certificate: Mat,
    /// Warm-start iterates W^0..W^{k0−1} (independent sample layers).
    pub warm: Vec<Mat>,
    /// Same-sample iterates Z^0..Z^{t0}.
    pub chained: Vec<Mat>,
    pub report: CertificateReport,
}

/// Build the dual certificate by the layered construction: warm-start
/// iterates on independent layers, then chained iterates reusing the last
/// layer, summing rescaled projections of every iterate.
pub fn build_certificate(
    truth: &GroundTruth,
    partition: &GolfingPartition,
    t0: usize,
    opts: &OpnormOptions,
) -> Result<CertificateBuild> {
    if partition.k0 < 1 {
        return Err(Error::Argument("partition needs at least one layer".into()));
    }
    if t0 < 1 {
        return Err(Error::Argument("t0 must be at least 1".into()));
    }
    let projector = make_tangent(truth)?;
    let d1 = projector.d1();
    let d2 = projector.d2();
    if partition.layers[0].rows() != d1 || partition.layers[0].cols() != d2 {
        return Err(Error::Argument("partition and truth shapes differ".into()));
    }

    let anchor = projector.anchor();
    let mut certificate = Mat::zeros(d1, d2);

    // Warm phase: W^t = P_T H_{Ω_{t}}(W^{t−1}) across independent layers.
    let mut warm = vec![anchor.clone()];
    for layer in 0..(partition.k0 - 1) {
        let prev = warm.last().unwrap();
        certificate += partition.layers[layer].rescaled_project(prev, None)?;
        let next = projector.apply(&partition.layers[layer].deviation(prev, None)?);
        warm.push(next);
    }

    // Chained phase: reuse the last layer for t0 iterations.
    let last_layer = &partition.layers[partition.k0 - 1];
    let mut chained = vec![warm.last().unwrap().clone()];
    for _ in 0..t0 {
        let prev = chained.last().unwrap();
        certificate += last_layer.rescaled_project(prev, None)?;
        let next = projector.apply(&last_layer.deviation(prev, None)?);
        chained.push(next);
    }

    let union = partition.union_mask()?;
    let support_ok = {
        let mut ok = true;
        'outer: for i in 0..d1 {
            for j in 0..d2 {
                if !union.is_observed(i, j) && certificate[(i, j)] != 0.0 {
                    ok = false;
                    break 'outer;
                }
            }
        }
        ok
    };

    let cond1 = check_candes1(&union, &projector, opts)?;
    let cond2a = matcore::operator_norm(&projector.apply_complement(&certificate))?;
    let cond2b = (projector.apply(&certificate) - &anchor).norm();
    let threshold_cond2b = 1.0 / (4.0 * d1.max(d2) as f64);
    let pass = cond1 <= 0.5 && cond2a <= 0.5 && cond2b <= threshold_cond2b && support_ok;
    Ok(CertificateBuild {
        certificate,
        warm,
        chained,
        report: CertificateReport {
            cond1,
            cond2a,
            cond2b,
            support_ok,
            threshold_cond1: 0.5,
            threshold_cond2a: 0.5,
            threshold_cond2b,
            pass,
            k0: partition.k0,
            t0,
            q: partition.q,
            seed: partition.seed,
        },
    })
}

/// Desk-scale default for the chained-phase length: ⌈2·log2 d⌉ + 2.
pub fn default_t0(d: usize) -> usize {
    (2.0 * (d as f64).log2()).ceil() as usize + 2
}

/// Number of warm-start layers. The analysis asks for `C0·max(1, ln(μr))`
/// layers with `C0` "large enough" asymptotically; at desk scale each extra
/// layer thins its samples below the contraction threshold, so the usable
/// default is a single layer. Larger `c0` restores the asymptotic formula.
pub fn default_k0(mu: f64, r: usize, c0: f64) -> usize {
    let formula = (c0 * (mu * r as f64).ln()).ceil();
    (formula.max(1.0)) as usize
}

/// Scale factor `(1/2^{k0−1}) · (μr)^{−g_exp}` carried by the hypothesis
/// right-hand sides of the certificate ledger.
pub fn golfing_scale(k0: usize, mu: f64, r: usize, g_exp: f64) -> f64 {
    0.5f64.powi(k0 as i32 - 1) * (mu * r as f64).powf(-g_exp)
}

#[derive(Debug, Clone)]
pub struct NnmLooOptions {
    pub k0: usize,
    /// Exponent in the hypothesis scale factor; a proof artifact, exposed for
    /// inspection rather than asserted.
    pub g_exp: f64,
    /// Tolerance for the `Z0 ∈ T` precondition.
    pub tangency_tol: f64,
}

impl Default for NnmLooOptions {
    fn default() -> Self {
        NnmLooOptions {
            k0: 1,
            g_exp: 10.0,
            tangency_tol: 1e-10,
        }
    }
}

/// One base-sequence row of the certificate leave-one-out ledger.
#[derive(Debug, Clone)]
pub struct NnmBaseRow {
    pub t: usize,
    pub doubly: f64,
    pub entrywise: f64,
    pub frobenius: f64,
    pub rhs_doubly: f64,
    pub rhs_entrywise: f64,
}

/// One leave-one-out row: the cross index, the member norms, and the
/// distance to the base sequence.
#[derive(Debug, Clone)]
pub struct NnmLooRow {
    pub t: usize,
    pub w: (usize, usize),
    pub doubly: f64,
    pub entrywise: f64,
    pub distance: f64,
    pub rhs_doubly: f64,
    pub rhs_entrywise: f64,
    pub rhs_distance: f64,
}

#[derive(Debug, Clone)]
pub struct NnmLooLedger {
    pub base: Vec<NnmBaseRow>,
    pub members: Vec<NnmLooRow>,
    pub g_scale: f64,
}

/// Run the chained certificate sequence and its cross leave-one-out
/// companions `Z^{t,w} = (P_T H^{(−w)})(Z^{t−1,w})` under one shared layer
/// mask, and measure every hypothesis quantity.
pub fn run_nnm_loo(
    truth: &GroundTruth,
    layer_mask: &ObservationMask,
    z0: &Mat,
    t0: usize,
    w_subset: &[(usize, usize)],
    opts: &NnmLooOptions,
) -> Result<NnmLooLedger> {
    let projector = make_tangent(truth)?;
    if z0.nrows() != projector.d1() || z0.ncols() != projector.d2() {
        return Err(Error::Argument("z0 shape mismatch".into()));
    }
    let off_tangent = projector.apply_complement(z0).norm();
    if off_tangent > opts.tangency_tol * z0.norm().max(1.0) {
        return Err(Error::Argument(format!(
            "z0 is not in the tangent space (off-tangent mass {off_tangent:.3e})"
        )));
    }
    for &(w1, w2) in w_subset {
        if w1 >= projector.d1() || w2 >= projector.d2() {
            return Err(Error::Argument(format!(
                "cross index ({w1}, {w2}) out of range"
            )));
        }
    }

    let d = projector.d1().min(projector.d2()) as f64;
    let mu_scale = (truth.mu * truth.r as f64 / d).sqrt();
    let g_scale = golfing_scale(opts.k0, truth.mu, truth.r, opts.g_exp);

    let mut base_sequence = vec![z0.clone()];
    for _ in 0..t0 {
        let prev = base_sequence.last().unwrap();
        base_sequence.push(projector.apply(&layer_mask.deviation(prev, None)?));
    }

    let mut base = Vec::with_capacity(t0 + 1);
    for (t, z) in base_sequence.iter().enumerate() {
        let decay = 0.5f64.powi(t as i32) * g_scale;
        base.push(NnmBaseRow {
            t,
            doubly: matcore::doubly_l2_inf(z),
            entrywise: matcore::entrywise_inf(z),
            frobenius: z.norm(),
            rhs_doubly: decay * mu_scale,
            rhs_entrywise: decay * mu_scale * mu_scale,
        });
    }

    let mut members = Vec::new();
    for &w in w_subset {
        let mut z = z0.clone();
        for t in 0..=t0 {
            let decay = 0.5f64.powi(t as i32) * g_scale;
            members.push(NnmLooRow {
                t,
                w,
                doubly: matcore::doubly_l2_inf(&z),
                entrywise: matcore::entrywise_inf(&z),
                distance: (&z - &base_sequence[t]).norm(),
                rhs_doubly: decay * mu_scale,
                rhs_entrywise: decay * mu_scale * mu_scale,
                rhs_distance: decay * mu_scale,
            });
            if t < t0 {
                z = projector.apply(&layer_mask.deviation_minus_cross(&z, w, None)?);
            }
        }
    }
    Ok(NnmLooLedger {
        base,
        members,
        g_scale,
    })
}

/// Singular value soft-thresholding built on the Gram-side eigensolver.
fn soft_threshold_svd(x: &Mat, tau: f64) -> Result<Mat> {
    let (m, n) = (x.nrows(), x.ncols());
    if n > m {
        return Ok(soft_threshold_svd(&x.transpose(), tau)?.transpose());
    }
    let gram = matcore::symmetrize(&(x.transpose() * x));
    let (lambda, v) = matcore::full_eig_sym(&gram)?;
    let mut out = Mat::zeros(m, n);
    for (j, &l) in lambda.iter().enumerate() {
        let sigma = l.max(0.0).sqrt();
        if sigma <= tau {
            continue;
        }
        let u = x * v.column(j) / sigma;
        let scale = sigma - tau;
        for a in 0..m {
            for b in 0..n {
                out[(a, b)] += scale * u[a] * v[(b, j)];
            }
        }
    }
    Ok(out)
}

/// Minimal-nuclear-norm completion by operator splitting (Douglas-Rachford
/// with unit step): alternate the nuclear-norm proximal map with exact
/// projection onto the data constraint `{X : Π_Ω(X) = observed}`. The
/// threshold level decays geometrically toward a floor as continuation; the
/// splitting fixed point is the constrained minimizer for any positive
/// threshold. The returned matrix interpolates the observed entries exactly.
pub fn solve_nnm_primal(
    observed: &Mat,
    mask: &ObservationMask,
    max_iter: usize,
    tol: f64,
) -> Result<Mat> {
    if mask.observed_count() == 0 {
        return Err(Error::Argument("mask has no observed entries".into()));
    }
    if observed.nrows() != mask.rows() || observed.ncols() != mask.cols() {
        return Err(Error::Argument("observed shape mismatch".into()));
    }

    let interpolate = |z: &Mat| -> Mat {
        let mut out = z.clone();
        for &(i, j) in mask.observed_indices() {
            out[(i, j)] = observed[(i, j)];
        }
        out
    };

    let mut state = interpolate(&Mat::zeros(mask.rows(), mask.cols()));
    let scale = matcore::operator_norm(&state)?;
    if scale == 0.0 {
        // All observed values are zero: the zero completion is feasible and
        // has minimal nuclear norm.
        return Ok(state);
    }
    let mut tau = 0.5 * scale;
    let tau_floor = 1e-3 * scale;

    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let feasible = interpolate(&state);
        let shrunk = soft_threshold_svd(&(2.0 * &feasible - &state), tau)?;
        residual = (&shrunk - &feasible).norm() / feasible.norm().max(1.0);
        state += &shrunk - &feasible;
        if residual <= tol {
            return Ok(feasible);
        }
        tau = (tau * 0.95).max(tau_floor);
    }
    Err(Error::Convergence {
        iterations: max_iter,
        estimate: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::{gen_ground_truth, GenOptions, Variant};
    use crate::sampling::golfing_split;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn rect_truth(d: usize, r: usize, seed: u64) -> GroundTruth {
        let opts = GenOptions {
            variant: Variant::Rectangular,
            ..GenOptions::default()
        };
        gen_ground_truth(d, d, r, 2.0, &opts, seed).unwrap()
    }

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut s = rng::stream(seed, &[rng::tag::PROBE, 7]);
        Mat::from_fn(rows, cols, |_, _| s.sample(StandardNormal))
    }

    #[test]
    fn tangent_projector_fixes_the_truth() {
        let gt = rect_truth(20, 3, 3);
        let proj = make_tangent(&gt).unwrap();
        let m = gt.matrix();
        assert!((proj.apply(&m) - &m).norm() <= 1e-12 * m.norm());
        assert!(proj.apply_complement(&m).norm() <= 1e-12 * m.norm());
    }

    #[test]
    fn tangent_projections_are_complementary_and_idempotent() {
        let gt = rect_truth(15, 2, 5);
        let proj = make_tangent(&gt).unwrap();
        for seed in 0..20u64 {
            let z = gaussian(15, 15, 100 + seed);
            let pt = proj.apply(&z);
            let perp = proj.apply_complement(&z);
            assert!((&pt + &perp - &z).norm() <= 1e-12 * z.norm());
            assert!((proj.apply(&pt) - &pt).norm() <= 1e-12 * z.norm());
            assert!(proj.apply(&perp).norm() <= 1e-12 * z.norm());
        }
    }

    #[test]
    fn tangent_projection_is_self_adjoint() {
        let gt = rect_truth(12, 2, 7);
        let proj = make_tangent(&gt).unwrap();
        for seed in 0..20u64 {
            let a = gaussian(12, 12, 200 + seed);
            let a = &a / a.norm();
            let b = gaussian(12, 12, 300 + seed);
            let b = &b / b.norm();
            let lhs = proj.apply(&a).dot(&b);
            let rhs = a.dot(&proj.apply(&b));
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn opnorm_of_identity_operator_is_one() {
        let id = |z: &Mat| z.clone();
        let got = opnorm_matrix_operator(6, 6, &id, None, &OpnormOptions::default()).unwrap();
        assert!((got - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn opnorm_of_tangent_projection_is_one() {
        let gt = rect_truth(10, 2, 9);
        let proj = make_tangent(&gt).unwrap();
        let apply = |z: &Mat| proj.apply(z);
        let got = opnorm_matrix_operator(10, 10, &apply, None, &OpnormOptions::default()).unwrap();
        assert!((got - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn opnorm_matches_matricization_oracle() {
        // General (non-self-adjoint) operator given by a random d²×d² matrix.
        for d in [3usize, 4] {
            let n2 = d * d;
            let big = gaussian(n2, n2, 17 + d as u64);
            let apply = |z: &Mat| -> Mat {
                let mut out = Mat::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        let mut acc = 0.0;
                        for a in 0..d {
                            for b in 0..d {
                                acc += big[(i * d + j, a * d + b)] * z[(a, b)];
                            }
                        }
                        out[(i, j)] = acc;
                    }
                }
                out
            };
            let adjoint = |z: &Mat| -> Mat {
                let mut out = Mat::zeros(d, d);
                for a in 0..d {
                    for b in 0..d {
                        let mut acc = 0.0;
                        for i in 0..d {
                            for j in 0..d {
                                acc += big[(i * d + j, a * d + b)] * z[(i, j)];
                            }
                        }
                        out[(a, b)] = acc;
                    }
                }
                out
            };
            let opts = OpnormOptions {
                tol: 1e-12,
                max_iter: 200_000,
                seed: 3,
            };
            let got = opnorm_matrix_operator(d, d, &apply, Some(&adjoint), &opts).unwrap();
            let dense: Vec<Vec<f64>> = (0..n2)
                .map(|i| (0..n2).map(|j| big[(i, j)]).collect())
                .collect();
            let want = mclab_oracle::operator_norm(&dense);
            assert!(
                (got - want).abs() <= 1e-8 * want,
                "d={d}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn candes1_vanishes_at_full_observation() {
        let gt = rect_truth(12, 2, 21);
        let proj = make_tangent(&gt).unwrap();
        let mask = ObservationMask::sample(12, 12, 1.0, false, 22).unwrap();
        let got = check_candes1(&mask, &proj, &OpnormOptions::default()).unwrap();
        assert!(got <= 1e-12);
    }

    #[test]
    fn candes1_depends_only_on_the_subspaces() {
        let gt1 = rect_truth(14, 2, 23);
        // Same factors, rescaled spectrum.
        let mut gt2 = gt1.clone();
        if let matcore::RankRFactors::RectangularSvd {
            singular_values, ..
        } = &mut gt2.factors
        {
            for s in singular_values.iter_mut() {
                *s *= 37.0;
            }
        }
        let mask = ObservationMask::sample(14, 14, 0.5, false, 29).unwrap();
        let p1 = make_tangent(&gt1).unwrap();
        let p2 = make_tangent(&gt2).unwrap();
        let a = check_candes1(&mask, &p1, &OpnormOptions::default()).unwrap();
        let b = check_candes1(&mask, &p2, &OpnormOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn certificate_identity_holds_on_every_run() {
        for (d, r, kappa, p, k0, seed) in [
            (30usize, 2usize, 2.0f64, 0.5f64, 1usize, 31u64),
            (40, 1, 1.0, 0.4, 2, 37),
            (24, 3, 2.0, 0.6, 3, 41),
        ] {
            let opts = GenOptions {
                variant: Variant::Rectangular,
                ..GenOptions::default()
            };
            let gt = gen_ground_truth(d, d, r, kappa, &opts, seed).unwrap();
            let part = golfing_split(d, d, p, k0, seed + 1).unwrap();
            let build =
                build_certificate(&gt, &part, default_t0(d), &OpnormOptions::default()).unwrap();
            let proj = make_tangent(&gt).unwrap();
            let lhs = proj.apply(&build.certificate) - proj.anchor();
            let z_last = build.chained.last().unwrap();
            let gap = (&lhs + z_last).norm();
            assert!(
                gap <= 1e-10 * (1.0 + z_last.norm() + proj.anchor().norm()),
                "identity gap {gap:.3e} at d={d} k0={k0}"
            );
        }
    }

    #[test]
    fn certificate_support_is_exact_and_iterates_stay_tangent() {
        let gt = rect_truth(30, 2, 43);
        let part = golfing_split(30, 30, 0.5, 2, 44).unwrap();
        let build = build_certificate(&gt, &part, 12, &OpnormOptions::default()).unwrap();
        assert!(build.report.support_ok);
        let proj = make_tangent(&gt).unwrap();
        for w in build.warm.iter().chain(build.chained.iter()) {
            assert!(proj.apply_complement(w).norm() <= 1e-10 * (1.0 + w.norm()));
        }
    }

    #[test]
    fn full_observation_single_layer_certificate_is_exact() {
        let gt = rect_truth(16, 2, 47);
        // p_total must be < 1 for a partition; use a full mask directly.
        let full = ObservationMask::sample(16, 16, 1.0, false, 48).unwrap();
        let part = GolfingPartition {
            k0: 1,
            q: 1.0,
            p_total: 1.0,
            seed: 48,
            layers: vec![full],
        };
        let build = build_certificate(&gt, &part, 5, &OpnormOptions::default()).unwrap();
        assert!(build.report.cond2b <= 1e-12);
        for z in &build.chained[1..] {
            assert_eq!(z.norm(), 0.0);
        }
    }

    #[test]
    fn nnm_loo_starts_at_zero_distance_and_decays() {
        let d = 50;
        let gt = rect_truth(d, 2, 53);
        let mask = ObservationMask::sample(d, d, 0.5, false, 54).unwrap();
        let proj = make_tangent(&gt).unwrap();
        let z0 = proj.anchor();
        let w_subset = [(0usize, 0usize), (3, 11), (17, 42)];
        let ledger = run_nnm_loo(&gt, &mask, &z0, 8, &w_subset, &NnmLooOptions::default()).unwrap();
        for row in ledger.members.iter().filter(|row| row.t == 0) {
            assert_eq!(row.distance, 0.0);
        }
        // Base sequence contracts at this generous sampling level.
        let first = ledger.base[1].frobenius;
        let last = ledger.base.last().unwrap().frobenius;
        assert!(last < first, "no contraction: {first} -> {last}");
    }

    #[test]
    fn nnm_loo_rejects_off_tangent_start() {
        let d = 20;
        let gt = rect_truth(d, 2, 59);
        let mask = ObservationMask::sample(d, d, 0.5, false, 60).unwrap();
        let z0 = gaussian(d, d, 61);
        assert!(matches!(
            run_nnm_loo(&gt, &mask, &z0, 3, &[], &NnmLooOptions::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn primal_solver_trivial_cases() {
        let d = 12;
        let gt = rect_truth(d, 2, 67);
        let m_star = gt.matrix();
        let full = ObservationMask::sample(d, d, 1.0, false, 68).unwrap();
        let x = solve_nnm_primal(&full.project(&m_star).unwrap(), &full, 2000, 1e-9).unwrap();
        assert_eq!(x, m_star);

        let mask = ObservationMask::sample(d, d, 0.5, false, 69).unwrap();
        let zeros = Mat::zeros(d, d);
        let x0 = solve_nnm_primal(&zeros, &mask, 50, 1e-9).unwrap();
        assert_eq!(x0, zeros);
    }

    #[test]
    fn primal_solver_recovers_at_generous_sampling() {
        let mut hits = 0;
        let seeds = 5u64;
        for seed in 0..seeds {
            let d = 60;
            let gt = rect_truth(d, 2, 700 + seed);
            let m_star = gt.matrix();
            let mask = ObservationMask::sample(d, d, 0.4, false, 800 + seed).unwrap();
            let observed = mask.project(&m_star).unwrap();
            let x = solve_nnm_primal(&observed, &mask, 4000, 1e-9).unwrap();
            let rel = (&x - &m_star).norm() / m_star.norm();
            if rel <= 1e-6 {
                hits += 1;
            }
        }
        assert!(hits >= 4, "only {hits}/{seeds} recovered");
    }

    #[test]
    fn interpolation_is_bitwise_exact() {
        let d = 24;
        let gt = rect_truth(d, 2, 71);
        let m_star = gt.matrix();
        let mask = ObservationMask::sample(d, d, 0.45, false, 72).unwrap();
        let observed = mask.project(&m_star).unwrap();
        let x = solve_nnm_primal(&observed, &mask, 4000, 1e-7).unwrap();
        for &(i, j) in mask.observed_indices() {
            assert_eq!(x[(i, j)], observed[(i, j)]);
        }
    }
}
