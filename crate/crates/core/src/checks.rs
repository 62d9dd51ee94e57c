//! Executable verification of the supporting inequalities.
//!
//! Deterministic statements are checked exactly: premise-respecting random
//! instances must produce zero violations. Probabilistic statements are
//! measured from both sides: each check reports the satisfaction fraction
//! against the stated nominal constants and the smallest constant that makes
//! the bound hold on every trial. Uniform "for all Z" suprema are lower
//! bounds obtained from random directions plus local ascent — enough to
//! falsify, not to certify.

use crate::error::{Error, Result};
use crate::groundtruth::{self, gen_ground_truth, GenOptions, Variant};
use crate::matcore::{self, Mat};
use crate::rng;
use crate::sampling::ObservationMask;
use crate::tangentcert::{make_tangent, TangentProjector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeterministicLemma {
    /// Commutator of the truth spectrum with the alignment rotation under a
    /// symmetric perturbation bounded by half the smallest eigenvalue.
    AlignmentCommutator,
    /// Commutator mixing the spectra of a matrix and its perturbation,
    /// controlled by the projected perturbation.
    PerturbedCommutator,
    /// Davis-Kahan sin-theta bound for top-r eigenspaces.
    DavisKahan,
    /// Weyl eigenvalue stability.
    Weyl,
    /// Procrustes factor distance against the Gram-matrix distance.
    FactorProcrustes,
    /// Entrywise and row-wise bounds for a factored perturbation of the
    /// ground truth.
    EntrywisePerturbation,
    /// Two-sided equivalence of the sin-theta distance with the Procrustes
    /// distance.
    SinThetaProcrustes,
}

impl DeterministicLemma {
    pub const ALL: [DeterministicLemma; 7] = [
        DeterministicLemma::AlignmentCommutator,
        DeterministicLemma::PerturbedCommutator,
        DeterministicLemma::DavisKahan,
        DeterministicLemma::Weyl,
        DeterministicLemma::FactorProcrustes,
        DeterministicLemma::EntrywisePerturbation,
        DeterministicLemma::SinThetaProcrustes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DeterministicLemma::AlignmentCommutator => "alignment-commutator",
            DeterministicLemma::PerturbedCommutator => "perturbed-commutator",
            DeterministicLemma::DavisKahan => "davis-kahan",
            DeterministicLemma::Weyl => "weyl",
            DeterministicLemma::FactorProcrustes => "factor-procrustes",
            DeterministicLemma::EntrywisePerturbation => "entrywise-perturbation",
            DeterministicLemma::SinThetaProcrustes => "sintheta-procrustes",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbabilisticLemma {
    /// Operator norm of the sampling deviation of a fixed matrix against the
    /// entrywise norm.
    DeviationOpnormFixed,
    /// Uniform version over rank-r matrices.
    DeviationOpnormLowrank,
    /// Sampled inner products of factored matrices stay near their means.
    SampledInnerProduct,
    /// Sampled Frobenius mass of a factored Gram matrix.
    SampledGramNorm,
    /// Deviation of a factor outer product contracted back onto the factor.
    DeviationFactorFrobenius,
    /// Operator norm of the deviation against the doubly row/column norm.
    DeviationOpnormDoubly,
    /// Restricted-isometry-style correlation bound near the truth.
    LowrankRip,
    /// Uniform entrywise bound for tangent-projected deviations.
    TangentUniformLinf,
    /// Row/column recursion bound along the certificate sequence.
    TangentRowRecursion,
    /// Entry recursion bound along the certificate sequence.
    TangentEntryRecursion,
    /// Uniform doubly-norm bound for tangent-projected deviations.
    TangentUniformDoubly,
    /// Cross-supported discrepancy of the leave-one-out splitting.
    CrossDiscrepancy,
}

impl ProbabilisticLemma {
    pub const ALL: [ProbabilisticLemma; 12] = [
        ProbabilisticLemma::DeviationOpnormFixed,
        ProbabilisticLemma::DeviationOpnormLowrank,
        ProbabilisticLemma::SampledInnerProduct,
        ProbabilisticLemma::SampledGramNorm,
        ProbabilisticLemma::DeviationFactorFrobenius,
        ProbabilisticLemma::DeviationOpnormDoubly,
        ProbabilisticLemma::LowrankRip,
        ProbabilisticLemma::TangentUniformLinf,
        ProbabilisticLemma::TangentRowRecursion,
        ProbabilisticLemma::TangentEntryRecursion,
        ProbabilisticLemma::TangentUniformDoubly,
        ProbabilisticLemma::CrossDiscrepancy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbabilisticLemma::DeviationOpnormFixed => "deviation-opnorm-fixed",
            ProbabilisticLemma::DeviationOpnormLowrank => "deviation-opnorm-lowrank",
            ProbabilisticLemma::SampledInnerProduct => "sampled-inner-product",
            ProbabilisticLemma::SampledGramNorm => "sampled-gram-norm",
            ProbabilisticLemma::DeviationFactorFrobenius => "deviation-factor-frobenius",
            ProbabilisticLemma::DeviationOpnormDoubly => "deviation-opnorm-doubly",
            ProbabilisticLemma::LowrankRip => "lowrank-rip",
            ProbabilisticLemma::TangentUniformLinf => "tangent-uniform-linf",
            ProbabilisticLemma::TangentRowRecursion => "tangent-row-recursion",
            ProbabilisticLemma::TangentEntryRecursion => "tangent-entry-recursion",
            ProbabilisticLemma::TangentUniformDoubly => "tangent-uniform-doubly",
            ProbabilisticLemma::CrossDiscrepancy => "cross-discrepancy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BernsteinKind {
    Scalar,
    Vector,
    Matrix,
}

impl BernsteinKind {
    pub const ALL: [BernsteinKind; 3] = [
        BernsteinKind::Scalar,
        BernsteinKind::Vector,
        BernsteinKind::Matrix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BernsteinKind::Scalar => "bernstein-scalar",
            BernsteinKind::Vector => "bernstein-vector",
            BernsteinKind::Matrix => "bernstein-matrix",
        }
    }
}

/// Outcome of one lemma check, serialized into the checks report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaCheckResult {
    pub lemma: String,
    pub trials: usize,
    /// Hard failures. Deterministic lemmas require zero.
    pub violations: usize,
    /// Fraction of trials satisfying the bound at its nominal constants
    /// (probabilistic checks only).
    pub satisfaction: Option<f64>,
    /// Smallest constant multiplier making the bound hold on every trial.
    pub fitted_constant: Option<f64>,
    /// Smallest relative slack (RHS − LHS)/RHS seen over all instances;
    /// negative values are violations.
    pub worst_margin: f64,
}

const REL_TOL: f64 = 1e-9;
const RESAMPLE_CAP: usize = 100;

struct MarginTracker {
    violations: usize,
    worst: f64,
}

impl MarginTracker {
    fn new() -> Self {
        MarginTracker {
            violations: 0,
            worst: f64::INFINITY,
        }
    }

    fn note(&mut self, lhs: f64, rhs: f64) {
        let margin = (rhs - lhs) / rhs.abs().max(1e-300);
        if margin < self.worst {
            self.worst = margin;
        }
        if lhs > rhs * (1.0 + REL_TOL) + 1e-12 {
            self.violations += 1;
        }
    }
}

fn gaussian_from(stream: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| stream.sample(StandardNormal))
}

fn random_sym(stream: &mut ChaCha8Rng, d: usize) -> Mat {
    matcore::symmetrize(&gaussian_from(stream, d, d))
}

fn sym_with_opnorm(stream: &mut ChaCha8Rng, d: usize, target: f64) -> Result<Mat> {
    let raw = random_sym(stream, d);
    let op = matcore::operator_norm(&raw)?;
    Ok(raw * (target / op))
}

fn draw_dims(stream: &mut ChaCha8Rng, d_max: usize) -> (usize, usize) {
    let d = 8 + (stream.random::<u64>() % (d_max.max(9) as u64 - 8)) as usize;
    let r = 1 + (stream.random::<u64>() % 3) as usize;
    (d, r.min(d / 2).max(1))
}

fn uniform_in(stream: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * stream.random::<f64>()
}

/// Check one deterministic lemma on `trials` premise-respecting instances.
pub fn check_deterministic(
    lemma: DeterministicLemma,
    trials: usize,
    seed: u64,
) -> Result<LemmaCheckResult> {
    let mut tracker = MarginTracker::new();
    for trial in 0..trials as u64 {
        let mut stream = rng::stream(seed, &[rng::tag::CHECK, lemma as u64, trial]);
        match lemma {
            DeterministicLemma::AlignmentCommutator => {
                let (d, r) = draw_dims(&mut stream, 30);
                let kappa = if r == 1 { 1.0 } else { uniform_in(&mut stream, 1.0, 4.0) };
                let truth =
                    gen_ground_truth(d, d, r, kappa, &GenOptions::default(), stream.random())?;
                let sigma1 = truth.sigma_max();
                let sigma_r = truth.sigma_min();
                let e_norm = uniform_in(&mut stream, 0.05, 0.999) * 0.5 * sigma_r;
                let e = sym_with_opnorm(&mut stream, d, e_norm)?;
                let w = truth.matrix() + &e;
                let f = matcore::top_r_eig_sym(&w, r)?;
                let h = truth.factors.left_factor().transpose() * f.left_factor();
                let g = matcore::polar_factor(&h)?;
                let lam = Mat::from_diagonal(&nalgebra::DVector::from_vec(
                    truth.factors.spectrum().to_vec(),
                ));
                let gap = sigma_r - e_norm;
                tracker.note(
                    matcore::operator_norm(&(&lam * &g - &g * &lam))?,
                    (2.0 + 2.0 * sigma1 / gap) * e_norm,
                );
                tracker.note(
                    matcore::operator_norm(&(&lam * &h - &g * &lam))?,
                    (2.0 + sigma1 / gap) * e_norm,
                );
                tracker.note(
                    matcore::operator_norm(&(&lam * &g - &h * &lam))?,
                    (2.0 + sigma1 / gap) * e_norm,
                );
            }
            DeterministicLemma::PerturbedCommutator => {
                let (d, r) = draw_dims(&mut stream, 30);
                // Top-r positive eigenvalues, remainder strictly smaller in
                // magnitude with arbitrary signs.
                let mut eigs = vec![0.0f64; d];
                let lam_r = uniform_in(&mut stream, 1.0, 2.0);
                for (j, e) in eigs.iter_mut().enumerate().take(r) {
                    *e = if j == r - 1 {
                        lam_r
                    } else {
                        uniform_in(&mut stream, lam_r, 3.0)
                    };
                }
                let tail_cap = 0.8 * lam_r;
                for e in eigs.iter_mut().skip(r) {
                    *e = uniform_in(&mut stream, -tail_cap, tail_cap);
                }
                let basis = groundtruth::random_orthonormal(d, d, stream.random(), &[1]);
                let a = matcore::symmetrize(
                    &(&basis
                        * Mat::from_diagonal(&nalgebra::DVector::from_vec(eigs.clone()))
                        * basis.transpose()),
                );
                let (vals_a, vecs_a) = matcore::full_eig_sym(&a)?;
                let lam1 = &vals_a[..r];
                let tail_mag = vals_a[r..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let gap = vals_a[r - 1] - tail_mag;
                let e_norm = uniform_in(&mut stream, 0.05, 0.999) * 0.5 * gap;
                let e = sym_with_opnorm(&mut stream, d, e_norm)?;
                let perturbed = matcore::symmetrize(&(&a + &e));
                let tilde = matcore::top_r_eig_sym(&perturbed, r)?;
                let f1 = Mat::from_fn(d, r, |i, j| vecs_a[(i, j)]);
                let h = f1.transpose() * tilde.left_factor();
                let g = matcore::polar_factor(&h)?;
                let lam1_m = Mat::from_diagonal(&nalgebra::DVector::from_vec(lam1.to_vec()));
                let lam_tilde = Mat::from_diagonal(&nalgebra::DVector::from_vec(
                    tilde.spectrum().to_vec(),
                ));
                let commutator = &lam1_m * &g - &g * &lam_tilde;
                let e_f = &e * tilde.left_factor();
                let factor = (2.0 * vals_a[0] + e_norm) / (vals_a[r - 1] - e_norm) + 1.0;
                tracker.note(commutator.norm(), factor * e_f.norm());
                tracker.note(
                    matcore::operator_norm(&commutator)?,
                    factor * matcore::operator_norm(&e_f)?,
                );
            }
            DeterministicLemma::DavisKahan => {
                let (d, r) = draw_dims(&mut stream, 30);
                let mut eigs = vec![0.0f64; d];
                for e in eigs.iter_mut().take(r) {
                    *e = uniform_in(&mut stream, 2.0, 4.0);
                }
                for e in eigs.iter_mut().skip(r) {
                    *e = uniform_in(&mut stream, -1.5, 1.5);
                }
                let basis = groundtruth::random_orthonormal(d, d, stream.random(), &[2]);
                let a = matcore::symmetrize(
                    &(&basis
                        * Mat::from_diagonal(&nalgebra::DVector::from_vec(eigs))
                        * basis.transpose()),
                );
                let (vals_a, vecs_a) = matcore::full_eig_sym(&a)?;
                let delta = vals_a[r - 1] - vals_a[r];
                let w_norm = uniform_in(&mut stream, 0.05, 0.999) * delta;
                let w = sym_with_opnorm(&mut stream, d, w_norm)?;
                let u = Mat::from_fn(d, r, |i, j| vecs_a[(i, j)]);
                let tilde = matcore::top_r_eig_sym(&matcore::symmetrize(&(&a + &w)), r)?;
                let u_tilde = tilde.left_factor();
                let cosines = matcore::singular_values(&(u.transpose() * u_tilde))?;
                let sines: Vec<f64> = cosines
                    .iter()
                    .map(|c| (1.0 - (c * c).min(1.0)).max(0.0).sqrt())
                    .collect();
                let wu = &w * &u;
                let denom = delta - w_norm;
                let sin_op = sines.iter().fold(0.0f64, |m, s| m.max(*s));
                let sin_fro = sines.iter().map(|s| s * s).sum::<f64>().sqrt();
                tracker.note(sin_op, matcore::operator_norm(&wu)? / denom);
                tracker.note(sin_fro, wu.norm() / denom);
                // Consequence: an orthogonal alignment within sqrt(2) of it.
                let g = matcore::procrustes(u_tilde, &u)?;
                tracker.note(
                    (&u - u_tilde * g.matrix()).norm(),
                    2.0f64.sqrt() * wu.norm() / denom,
                );
            }
            DeterministicLemma::Weyl => {
                let (d, _) = draw_dims(&mut stream, 30);
                let a = random_sym(&mut stream, d);
                let e = random_sym(&mut stream, d) * uniform_in(&mut stream, 0.01, 2.0);
                let (va, _) = matcore::full_eig_sym(&a)?;
                let (vae, _) = matcore::full_eig_sym(&matcore::symmetrize(&(&a + &e)))?;
                let bound = matcore::operator_norm(&e)?;
                for i in 0..d {
                    tracker.note((vae[i] - va[i]).abs(), bound);
                }
            }
            DeterministicLemma::FactorProcrustes => {
                let (d, r) = draw_dims(&mut stream, 30);
                let f = gaussian_from(&mut stream, d, r);
                let f_plus = gaussian_from(&mut stream, d, r);
                let o = matcore::polar_factor(&(f_plus.transpose() * &f))?;
                let delta = &f - &f_plus * &o;
                let m = &f * f.transpose();
                let m_plus = &f_plus * f_plus.transpose();
                let dist2 = (&m - &m_plus).norm_squared();
                tracker.note((&delta * delta.transpose()).norm_squared(), 2.0 * dist2);
                let sigma_r_plus = matcore::singular_values(&f_plus)?[r - 1].powi(2);
                tracker.note(
                    sigma_r_plus * delta.norm_squared(),
                    dist2 / (2.0 * (2.0f64.sqrt() - 1.0)),
                );
            }
            DeterministicLemma::EntrywisePerturbation => {
                let (d, r) = draw_dims(&mut stream, 30);
                let kappa = if r == 1 { 1.0 } else { uniform_in(&mut stream, 1.0, 3.0) };
                let truth =
                    gen_ground_truth(d, d, r, kappa, &GenOptions::default(), stream.random())?;
                let sigma_r = truth.sigma_min();
                let m_star = truth.matrix();
                let mut accepted = None;
                for _ in 0..RESAMPLE_CAP {
                    let magnitude = uniform_in(&mut stream, 0.01, 1.0) * sigma_r / 20.0;
                    let e0 = sym_with_opnorm(&mut stream, d, magnitude)?;
                    let w = &m_star + &e0;
                    let f = matcore::top_r_eig_sym(&w, r)?;
                    if f.spectrum().iter().any(|l| !(*l > 0.0)) {
                        continue;
                    }
                    let m = f.reconstruct();
                    let e_op = matcore::operator_norm(&(&m - &m_star))?;
                    if e_op <= sigma_r / 10.0 {
                        accepted = Some((f, m, e_op));
                        break;
                    }
                }
                let (f, m, e_op) = accepted.ok_or_else(|| {
                    Error::Generation("no premise-respecting perturbation found".into())
                })?;
                let f_star = truth.factors.left_factor();
                let g = matcore::polar_factor(&(f_star.transpose() * f.left_factor()))?;
                let delta = f.left_factor() - f_star * &g;
                let lam_op = f.sigma_max();
                let kappa_star = truth.sigma_max() / sigma_r;
                let f2i = matcore::row_l2_inf(f.left_factor());
                let fs2i = matcore::row_l2_inf(f_star);
                let d2i = matcore::row_l2_inf(&delta);
                let diff = &m - &m_star;
                tracker.note(
                    matcore::entrywise_inf(&diff),
                    2.0 * d2i * f2i * lam_op + (1.0 + 5.0 * kappa_star) * fs2i * fs2i * e_op,
                );
                tracker.note(
                    matcore::row_l2_inf(&diff),
                    d2i * lam_op
                        + f2i * lam_op * delta.norm()
                        + (1.0 + 5.0 * kappa_star) * fs2i * e_op,
                );
            }
            DeterministicLemma::SinThetaProcrustes => {
                let (d, r) = draw_dims(&mut stream, 30);
                let a = groundtruth::random_orthonormal(d, r, stream.random(), &[3]);
                let b = groundtruth::random_orthonormal(d, r, stream.random(), &[4]);
                let s2 = matcore::sin_theta(&a, &b)?.powi(2);
                let g = matcore::procrustes(&b, &a)?;
                let dist2 = (&a - &b * g.matrix()).norm_squared();
                tracker.note(0.5 * dist2, s2);
                tracker.note(s2, dist2);
            }
        }
    }
    Ok(LemmaCheckResult {
        lemma: lemma.name().to_string(),
        trials,
        violations: tracker.violations,
        satisfaction: None,
        fitted_constant: None,
        worst_margin: tracker.worst,
    })
}

/// Random-direction + local-ascent lower bound on `sup ratio(Z)` over the
/// image of `project`.
fn maximize_ratio(
    stream: &mut ChaCha8Rng,
    dims: (usize, usize),
    directions: usize,
    steps: usize,
    project: &dyn Fn(&Mat) -> Mat,
    ratio: &dyn Fn(&Mat) -> f64,
) -> (Mat, f64) {
    let mut best_z = project(&gaussian_from(stream, dims.0, dims.1));
    let mut best = ratio(&best_z);
    for _ in 1..directions {
        let z = project(&gaussian_from(stream, dims.0, dims.1));
        let v = ratio(&z);
        if v > best {
            best = v;
            best_z = z;
        }
    }
    let mut step = 0.5;
    for _ in 0..steps {
        let cand = project(&(&best_z + step * gaussian_from(stream, dims.0, dims.1)));
        let v = ratio(&cand);
        if v > best {
            best = v;
            best_z = cand;
        } else {
            step *= 0.9;
        }
    }
    (best_z, best)
}

struct ProbOutcome {
    satisfied: usize,
    fitted: f64,
    tracker: MarginTracker,
}

impl ProbOutcome {
    fn new() -> Self {
        ProbOutcome {
            satisfied: 0,
            fitted: 0.0,
            tracker: MarginTracker::new(),
        }
    }

    /// Record one trial: the measured left side, the structural right side
    /// without its constant, and the nominal constant claimed by the lemma.
    fn note(&mut self, lhs: f64, rhs_unit: f64, nominal_constant: f64) {
        let nominal = nominal_constant * rhs_unit;
        if lhs <= nominal * (1.0 + REL_TOL) + 1e-15 {
            self.satisfied += 1;
        }
        self.tracker.note(lhs, nominal);
        if rhs_unit > 0.0 {
            self.fitted = self.fitted.max(lhs / rhs_unit);
        }
    }

    fn result(self, lemma: &str, trials: usize) -> LemmaCheckResult {
        LemmaCheckResult {
            lemma: lemma.to_string(),
            trials,
            violations: 0,
            satisfaction: Some(self.satisfied as f64 / trials.max(1) as f64),
            fitted_constant: Some(self.fitted),
            worst_margin: self.tracker.worst,
        }
    }
}

/// Search budgets for the uniform ("for all Z") suprema.
const SUP_DIRECTIONS: usize = 64;
const SUP_STEPS: usize = 50;

fn tangent_setup(
    d: usize,
    r: usize,
    p: f64,
    seed: u64,
    trial: u64,
    lemma: u64,
) -> Result<(groundtruth::GroundTruth, TangentProjector, ObservationMask, f64)> {
    let opts = GenOptions {
        variant: Variant::Rectangular,
        ..GenOptions::default()
    };
    let truth = gen_ground_truth(d, d, r, 2.0, &opts, rng::key(seed, &[lemma, trial, 1]))?;
    let projector = make_tangent(&truth)?;
    let mask = ObservationMask::sample(d, d, p, false, rng::key(seed, &[lemma, trial, 2]))?;
    let mu = truth.mu;
    Ok((truth, projector, mask, mu))
}

/// Measure one probabilistic lemma over `trials` sampled instances.
pub fn check_probabilistic(
    lemma: ProbabilisticLemma,
    d: usize,
    r: usize,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<LemmaCheckResult> {
    let mut out = ProbOutcome::new();
    let log_d = (d as f64).ln();
    let tag = 100 + lemma as u64;
    let mut recorded = 0usize;
    for trial in 0..trials as u64 {
        let mut stream = rng::stream(seed, &[rng::tag::CHECK, tag, trial]);
        match lemma {
            ProbabilisticLemma::DeviationOpnormFixed => {
                // Fixed matrix, fresh sampling: one shared Z across trials.
                let mut zstream = rng::stream(seed, &[rng::tag::CHECK, tag, u64::MAX]);
                let z = gaussian_from(&mut zstream, d, d);
                let mask = ObservationMask::sample(d, d, p, false, stream.random())?;
                let lhs = matcore::operator_norm(&mask.deviation(&z, None)?)?;
                let unit = (d as f64 * log_d / p).sqrt() * matcore::entrywise_inf(&z);
                out.note(lhs, unit, 2.0);
                // The line-removed deviation never exceeds the full one.
                let i = (stream.random::<u64>() % d as u64) as usize;
                let cut = matcore::operator_norm(&mask.deviation_minus_line(&z, i, None)?)?;
                if cut > lhs * (1.0 + REL_TOL) + 1e-12 {
                    out.tracker.violations += 1;
                }
                recorded += 1;
            }
            ProbabilisticLemma::DeviationOpnormLowrank => {
                let mask = ObservationMask::sample(d, d, p, false, stream.random())?;
                let unit_scale = (r as f64 * d as f64 * log_d / p).sqrt();
                let ratio = |z: &Mat| -> f64 {
                    let inf = matcore::entrywise_inf(z);
                    if inf <= 1e-300 {
                        return 0.0;
                    }
                    matcore::operator_norm(&mask.deviation(z, None).unwrap()).unwrap()
                        / (unit_scale * inf)
                };
                let project = |z: &Mat| -> Mat {
                    matcore::best_rank_r(z, r).unwrap().reconstruct()
                };
                let (_, sup) = maximize_ratio(
                    &mut stream,
                    (d, d),
                    SUP_DIRECTIONS,
                    SUP_STEPS,
                    &project,
                    &ratio,
                );
                out.note(sup, 1.0, 2.0);
                recorded += 1;
            }
            ProbabilisticLemma::SampledInnerProduct => {
                let truth = gen_ground_truth(
                    d,
                    d,
                    r,
                    2.0,
                    &GenOptions::default(),
                    rng::key(seed, &[tag, trial, 1]),
                )?;
                let f_star = truth.factors.left_factor().clone();
                let mask =
                    ObservationMask::sample(d, d, p, true, rng::key(seed, &[tag, trial, 2]))?;
                let unit = (truth.mu * r as f64 * log_d / (p * d as f64)).sqrt();
                let mut worst = 0.0f64;
                for _ in 0..SUP_DIRECTIONS {
                    let h = gaussian_from(&mut stream, d, r);
                    let g = gaussian_from(&mut stream, d, r);
                    let left = &f_star * h.transpose();
                    let right = &g * f_star.transpose();
                    let sampled = mask.project(&left)?.dot(&mask.project(&right)?) / p;
                    let exact = left.dot(&right);
                    let denom = h.norm() * g.norm();
                    worst = worst.max((sampled - exact).abs() / denom);
                }
                out.note(worst, unit, 1.0);
                recorded += 1;
            }
            ProbabilisticLemma::SampledGramNorm => {
                let truth = gen_ground_truth(
                    d,
                    d,
                    r,
                    2.0,
                    &GenOptions::default(),
                    rng::key(seed, &[tag, trial, 1]),
                )?;
                let mu = truth.mu;
                let mask =
                    ObservationMask::sample(d, d, p, true, rng::key(seed, &[tag, trial, 2]))?;
                let cap = 6.0 * (mu * r as f64 / d as f64).sqrt();
                let unit =
                    ((mu * mu * (r * r) as f64 + log_d) / (p * d as f64)).sqrt();
                let mut worst = 0.0f64;
                for _ in 0..SUP_DIRECTIONS {
                    let mut h = gaussian_from(&mut stream, d, r);
                    let row_max = matcore::row_l2_inf(&h);
                    h *= uniform_in(&mut stream, 0.2, 1.0) * cap / row_max;
                    let gram = &h * h.transpose();
                    let lhs = mask.project(&gram)?.norm_squared() / p;
                    let h2 = h.norm_squared();
                    let eps_needed = (lhs - h2 * h2) / (h2 * h2 + h2);
                    worst = worst.max(eps_needed);
                }
                out.note(worst.max(0.0), unit, 1.0);
                recorded += 1;
            }
            ProbabilisticLemma::DeviationFactorFrobenius => {
                let truth = gen_ground_truth(
                    d,
                    d,
                    r,
                    2.0,
                    &GenOptions::default(),
                    rng::key(seed, &[tag, trial, 1]),
                )?;
                let f_star = truth.factors.left_factor().clone();
                let mask =
                    ObservationMask::sample(d, d, p, true, rng::key(seed, &[tag, trial, 2]))?;
                let unit = (truth.mu * r as f64 * log_d / (p * d as f64)).sqrt();
                let ratio = |w: &Mat| -> f64 {
                    let n = w.norm();
                    if n <= 1e-300 {
                        return 0.0;
                    }
                    let dev = mask.deviation(&(w * f_star.transpose()), None).unwrap();
                    (dev * &f_star).norm() / n
                };
                let project = |w: &Mat| w.clone();
                let (_, sup) = maximize_ratio(
                    &mut stream,
                    (d, r),
                    SUP_DIRECTIONS,
                    SUP_STEPS,
                    &project,
                    &ratio,
                );
                out.note(sup, unit, 1.0);
                recorded += 1;
            }
            ProbabilisticLemma::DeviationOpnormDoubly => {
                let z = gaussian_from(&mut stream, d, d);
                let mask = ObservationMask::sample(d, d, p, false, stream.random())?;
                let lhs = matcore::operator_norm(&mask.deviation(&z, None)?)?;
                let unit = (log_d / p).sqrt() * matcore::doubly_l2_inf(&z)
                    + log_d / p * matcore::entrywise_inf(&z);
                out.note(lhs, unit, 1.0);
                recorded += 1;
            }
            ProbabilisticLemma::LowrankRip => {
                let truth = gen_ground_truth(
                    d,
                    d,
                    r,
                    2.0,
                    &GenOptions::default(),
                    rng::key(seed, &[tag, trial, 1]),
                )?;
                let mask =
                    ObservationMask::sample(d, d, p, true, rng::key(seed, &[tag, trial, 2]))?;
                let m_star = truth.matrix();
                let sigma1 = truth.sigma_max();
                let kappa = truth.kappa;
                let fro_cap = sigma1 / (64.0f64 * 64.0 * kappa * kappa);
                let inf_cap = 2.0 * truth.mu * r as f64 / d as f64 * sigma1;
                let mut pair = Vec::new();
                for side in 0..2u64 {
                    let mut found = None;
                    for _ in 0..RESAMPLE_CAP {
                        let dir = random_sym(&mut stream, d);
                        let scale = uniform_in(&mut stream, 0.1, 1.0) * fro_cap / dir.norm();
                        let cand = matcore::best_rank_r_sym(&(&m_star + scale * &dir), r)?
                            .reconstruct();
                        let dev = &cand - &m_star;
                        if dev.norm() <= fro_cap
                            && matcore::entrywise_inf(&cand) <= inf_cap
                        {
                            found = Some(cand);
                            break;
                        }
                    }
                    pair.push(found.ok_or_else(|| {
                        Error::Generation(format!("no admissible neighbor (side {side})"))
                    })?);
                }
                let w_a = &pair[0] - &m_star;
                let w_b = &pair[1] - &m_star;
                let exact = w_a.dot(&w_b);
                let sampled = mask.project(&w_a)?.dot(&mask.project(&w_b)?) / p;
                let lhs = (exact - sampled).abs();
                let unit = w_a.norm() * w_b.norm();
                out.note(lhs, unit, 0.25);
                recorded += 1;
            }
            ProbabilisticLemma::TangentUniformLinf => {
                let (_truth, projector, mask, mu) =
                    tangent_setup(d, r, p, seed, trial, tag)?;
                let unit = (mu * r as f64 / d as f64).sqrt();
                let ratio = |z: &Mat| -> f64 {
                    let n = z.norm();
                    if n <= 1e-300 {
                        return 0.0;
                    }
                    matcore::entrywise_inf(&projector.apply(&mask.deviation(z, None).unwrap()))
                        / n
                };
                let project = |z: &Mat| projector.apply(z);
                let (_, sup) = maximize_ratio(
                    &mut stream,
                    (d, d),
                    SUP_DIRECTIONS,
                    SUP_STEPS,
                    &project,
                    &ratio,
                );
                out.note(sup, unit, 0.125);
                recorded += 1;
            }
            ProbabilisticLemma::TangentRowRecursion
            | ProbabilisticLemma::TangentEntryRecursion => {
                let (truth, projector, mask, mu) =
                    tangent_setup(d, r, p, seed, trial, tag)?;
                let mu_scale = (mu * r as f64 / d as f64).sqrt();
                let anchor = projector.anchor();
                let t_depth = 4usize;
                let mut base = vec![anchor.clone()];
                for _ in 0..t_depth {
                    let prev = base.last().unwrap();
                    base.push(projector.apply(&mask.deviation(prev, None)?));
                }
                for _ in 0..8 {
                    let v = (
                        (stream.random::<u64>() % d as u64) as usize,
                        (stream.random::<u64>() % d as u64) as usize,
                    );
                    let mut loo = vec![anchor.clone()];
                    for _ in 0..t_depth {
                        let prev = loo.last().unwrap();
                        loo.push(projector.apply(&mask.deviation_minus_cross(prev, v, None)?));
                    }
                    for t in 1..=t_depth {
                        let prev = &base[t - 1];
                        let prev_loo = &loo[t - 1];
                        let diff = prev - prev_loo;
                        if lemma == ProbabilisticLemma::TangentRowRecursion {
                            let row_norm = base[t].row(v.0).norm();
                            let col_norm = base[t].column(v.1).norm();
                            let lhs = row_norm.max(col_norm);
                            let carried = projector.apply(&mask.deviation(&diff, None)?);
                            let unit = matcore::doubly_l2_inf(prev_loo) / 32.0
                                + (log_d / p).sqrt() * matcore::entrywise_inf(prev_loo) / 32.0
                                + mu_scale * prev.norm() / 32.0
                                + matcore::doubly_l2_inf(&carried);
                            out.note(lhs, unit, 1.0);
                        } else {
                            let lhs = base[t][(v.0, v.1)].abs();
                            let unit = matcore::entrywise_inf(prev_loo) / 32.0
                                + mu_scale * mu_scale * prev.norm() / 32.0
                                + mu_scale * diff.norm() / 32.0;
                            out.note(lhs, unit, 1.0);
                        }
                        recorded += 1;
                    }
                }
            }
            ProbabilisticLemma::TangentUniformDoubly => {
                let (_, projector, mask, _) = tangent_setup(d, r, p, seed, trial, tag)?;
                let ratio = |z: &Mat| -> f64 {
                    let n = z.norm();
                    if n <= 1e-300 {
                        return 0.0;
                    }
                    matcore::doubly_l2_inf(&projector.apply(&mask.deviation(z, None).unwrap()))
                        / n
                };
                let project = |z: &Mat| projector.apply(z);
                let (_, sup) = maximize_ratio(
                    &mut stream,
                    (d, d),
                    SUP_DIRECTIONS,
                    SUP_STEPS,
                    &project,
                    &ratio,
                );
                out.note(sup, 1.0, 1.0 / 32.0);
                recorded += 1;
            }
            ProbabilisticLemma::CrossDiscrepancy => {
                let (_, projector, mask, _) = tangent_setup(d, r, p, seed, trial, tag)?;
                let z = {
                    let raw = projector.apply(&gaussian_from(&mut stream, d, d));
                    &raw / raw.norm()
                };
                let w = (
                    (stream.random::<u64>() % d as u64) as usize,
                    (stream.random::<u64>() % d as u64) as usize,
                );
                let lhs = projector.apply(&mask.deviation_cross(&z, w, None)?).norm();
                let unit = matcore::doubly_l2_inf(&z) / 32.0
                    + (log_d / p).sqrt() * matcore::entrywise_inf(&z);
                out.note(lhs, unit, 1.0);
                recorded += 1;
            }
        }
    }
    let mut result = out.result(lemma.name(), trials);
    result.trials = recorded;
    if recorded > 0 {
        result.satisfaction = result
            .satisfaction
            .map(|_| out_satisfaction(recorded, &result));
    }
    Ok(result)
}

fn out_satisfaction(recorded: usize, result: &LemmaCheckResult) -> f64 {
    // `ProbOutcome::result` divided by the trial count passed in; rescale to
    // the recorded instance count.
    result.satisfaction.unwrap_or(0.0) * result.trials as f64 / recorded as f64
}

/// Empirical tail frequencies against the stated exponential bounds, at the
/// given thresholds, allowing three standard errors of Monte Carlo slack.
pub fn check_bernstein(
    kind: BernsteinKind,
    samples: usize,
    thresholds: &[f64],
    seed: u64,
) -> Result<LemmaCheckResult> {
    let n = 100usize;
    let dim = match kind {
        BernsteinKind::Scalar => 1,
        BernsteinKind::Vector => 20,
        BernsteinKind::Matrix => 10,
    };

    // Fixed direction data shared by all samples.
    let mut shape_stream = rng::stream(seed, &[rng::tag::CHECK, 200 + kind as u64]);
    let unit_vectors: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| shape_stream.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let sign_patterns: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| if shape_stream.random::<bool>() { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();

    let mut stats = vec![0usize; thresholds.len()];
    for sample in 0..samples as u64 {
        let mut stream = rng::stream(seed, &[rng::tag::CHECK, 210 + kind as u64, sample]);
        let signs: Vec<f64> = (0..n)
            .map(|_| if stream.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let statistic = match kind {
            BernsteinKind::Scalar => signs.iter().sum::<f64>().abs(),
            BernsteinKind::Vector => {
                let mut acc = vec![0.0f64; dim];
                for (k, sgn) in signs.iter().enumerate() {
                    for (j, a) in acc.iter_mut().enumerate() {
                        *a += sgn * unit_vectors[k][j];
                    }
                }
                acc.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
            BernsteinKind::Matrix => {
                // Diagonal sign ensembles: the operator norm is the largest
                // absolute diagonal accumulation.
                let mut acc = vec![0.0f64; dim];
                for (k, sgn) in signs.iter().enumerate() {
                    for (j, a) in acc.iter_mut().enumerate() {
                        *a += sgn * sign_patterns[k][j];
                    }
                }
                acc.iter().fold(0.0f64, |m, x| m.max(x.abs()))
            }
        };
        for (idx, &t) in thresholds.iter().enumerate() {
            if statistic >= t {
                stats[idx] += 1;
            }
        }
    }

    let variance = n as f64; // unit-magnitude summands
    let prefactor = match kind {
        BernsteinKind::Scalar => 2.0,
        BernsteinKind::Vector => (dim + 1) as f64,
        BernsteinKind::Matrix => 2.0 * dim as f64,
    };
    let mut tracker = MarginTracker::new();
    let mut satisfied = 0usize;
    for (idx, &t) in thresholds.iter().enumerate() {
        let bound = prefactor * (-t * t / (2.0 * variance + 2.0 * t / 3.0)).exp();
        let empirical = stats[idx] as f64 / samples as f64;
        let capped = bound.min(1.0);
        let slack = 3.0 * (capped * (1.0 - capped) / samples as f64).sqrt() + 3.0 / samples as f64;
        tracker.note(empirical, bound + slack);
        if empirical <= bound + slack {
            satisfied += 1;
        }
    }
    Ok(LemmaCheckResult {
        lemma: kind.name().to_string(),
        trials: samples,
        violations: tracker.violations,
        satisfaction: Some(satisfied as f64 / thresholds.len().max(1) as f64),
        fitted_constant: None,
        worst_margin: tracker.worst,
    })
}

/// Default thresholds for the tail checks: multiples of √n for n = 100.
pub fn default_bernstein_thresholds() -> Vec<f64> {
    let root_n = 10.0;
    vec![0.0, root_n, 1.5 * root_n, 2.0 * root_n, 3.0 * root_n]
}
