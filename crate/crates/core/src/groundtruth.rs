//! Rank-r ground-truth generation with controlled condition number, plus
//! incoherence measurement.

use crate::error::{Error, Result};
use crate::matcore::{Mat, RankRFactors};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Symmetric positive semidefinite `F Λ Fᵀ`.
    SymmetricPsd,
    /// General `U Σ Vᵀ`.
    Rectangular,
}

/// A generated ground truth with its measured incoherence and spectrum shape.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub factors: RankRFactors,
    /// max(μ_left, μ_right); both sides coincide for the symmetric variant.
    pub mu: f64,
    pub kappa: f64,
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    pub seed: u64,
}

/// Sidecar metadata serialized next to the factor matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthMeta {
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    pub mu: f64,
    pub kappa: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub variant: Variant,
    /// Optional rejection cap on the measured incoherence: resample until
    /// μ ≤ max_mu, up to `max_attempts` draws.
    pub max_mu: Option<f64>,
    pub max_attempts: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            variant: Variant::SymmetricPsd,
            max_mu: None,
            max_attempts: 100,
        }
    }
}

impl GroundTruth {
    pub fn matrix(&self) -> Mat {
        self.factors.reconstruct()
    }

    pub fn sigma_max(&self) -> f64 {
        self.factors.sigma_max()
    }

    pub fn sigma_min(&self) -> f64 {
        self.factors.sigma_min()
    }

    pub fn meta(&self) -> GroundTruthMeta {
        GroundTruthMeta {
            d1: self.d1,
            d2: self.d2,
            r: self.r,
            mu: self.mu,
            kappa: self.kappa,
            seed: self.seed,
        }
    }
}

/// Orthonormalize a Gaussian draw by QR with positive diagonal of R, so the
/// factor is a deterministic function of the stream.
pub(crate) fn random_orthonormal(rows: usize, cols: usize, seed: u64, tags: &[u64]) -> Mat {
    let mut stream = rng::stream(seed, tags);
    let g = Mat::from_fn(rows, cols, |_, _| stream.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            for i in 0..rows {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Geometric spectrum from σ_r = 1 up to σ_1 = κ.
fn geometric_spectrum(r: usize, kappa: f64) -> Vec<f64> {
    if r == 1 {
        return vec![kappa];
    }
    (0..r)
        .map(|j| kappa.powf((r - 1 - j) as f64 / (r - 1) as f64))
        .collect()
}

/// Smallest μ making the incoherence bound tight for each side:
/// `(d_side / r) · max_i ‖row i‖²`.
pub fn measure_incoherence(factors: &RankRFactors) -> Result<(f64, f64)> {
    if factors.orthonormality_defect() > 1e-8 {
        return Err(Error::Argument(
            "incoherence expects orthonormal factors".into(),
        ));
    }
    let side_mu = |f: &Mat| {
        let d = f.nrows() as f64;
        let r = f.ncols() as f64;
        let max_row = (0..f.nrows())
            .map(|i| f.row(i).norm_squared())
            .fold(0.0f64, f64::max);
        d / r * max_row
    };
    match factors {
        RankRFactors::SymmetricEig { basis, .. } => {
            let mu = side_mu(basis);
            Ok((mu, mu))
        }
        RankRFactors::RectangularSvd { left, right, .. } => Ok((side_mu(left), side_mu(right))),
    }
}

/// Generate a rank-r ground truth with condition number exactly
/// `kappa_target` and Gaussian-orthonormal factors.
pub fn gen_ground_truth(
    d1: usize,
    d2: usize,
    r: usize,
    kappa_target: f64,
    opts: &GenOptions,
    seed: u64,
) -> Result<GroundTruth> {
    if r == 0 || r > d1.min(d2) {
        return Err(Error::Argument(format!(
            "rank {r} infeasible for {d1}x{d2}"
        )));
    }
    if kappa_target < 1.0 {
        return Err(Error::Argument(format!(
            "condition number target {kappa_target} below 1"
        )));
    }
    if r == 1 && kappa_target != 1.0 {
        return Err(Error::Argument(
            "rank-1 ground truth forces condition number 1".into(),
        ));
    }
    if opts.variant == Variant::SymmetricPsd && d1 != d2 {
        return Err(Error::Argument(
            "symmetric variant requires square shape".into(),
        ));
    }
    let spectrum = geometric_spectrum(r, kappa_target);
    for attempt in 0..opts.max_attempts.max(1) as u64 {
        let factors = match opts.variant {
            Variant::SymmetricPsd => RankRFactors::SymmetricEig {
                basis: random_orthonormal(d1, r, seed, &[rng::tag::GROUND_TRUTH, attempt, 0]),
                eigenvalues: spectrum.clone(),
            },
            Variant::Rectangular => RankRFactors::RectangularSvd {
                left: random_orthonormal(d1, r, seed, &[rng::tag::GROUND_TRUTH, attempt, 0]),
                singular_values: spectrum.clone(),
                right: random_orthonormal(d2, r, seed, &[rng::tag::GROUND_TRUTH, attempt, 1]),
            },
        };
        let (mu_left, mu_right) = measure_incoherence(&factors)?;
        let mu = mu_left.max(mu_right);
        if let Some(cap) = opts.max_mu {
            if mu > cap {
                continue;
            }
        }
        return Ok(GroundTruth {
            factors,
            mu,
            kappa: kappa_target,
            d1,
            d2,
            r,
            seed,
        });
    }
    Err(Error::Generation(format!(
        "no draw with mu <= {:?} within {} attempts",
        opts.max_mu, opts.max_attempts
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore;

    #[test]
    fn rank_one_identity_spectrum() {
        let gt = gen_ground_truth(8, 8, 1, 1.0, &GenOptions::default(), 3).unwrap();
        assert_eq!(gt.factors.spectrum(), &[1.0]);
    }

    #[test]
    fn unit_condition_number_means_flat_spectrum() {
        let gt = gen_ground_truth(10, 10, 4, 1.0, &GenOptions::default(), 5).unwrap();
        for &s in gt.factors.spectrum() {
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn kappa_achieved_exactly() {
        let gt = gen_ground_truth(12, 12, 3, 7.5, &GenOptions::default(), 9).unwrap();
        let achieved = gt.sigma_max() / gt.sigma_min();
        assert!((achieved - 7.5).abs() <= 1e-12 * 7.5);
    }

    #[test]
    fn rejects_infeasible_requests() {
        assert!(gen_ground_truth(4, 4, 5, 1.0, &GenOptions::default(), 1).is_err());
        assert!(gen_ground_truth(4, 4, 2, 0.5, &GenOptions::default(), 1).is_err());
        assert!(gen_ground_truth(4, 4, 1, 2.0, &GenOptions::default(), 1).is_err());
        let opts = GenOptions {
            max_mu: Some(0.5), // below the μ ≥ 1 floor, can never be met
            max_attempts: 5,
            ..GenOptions::default()
        };
        assert!(matches!(
            gen_ground_truth(10, 10, 2, 1.0, &opts, 1),
            Err(Error::Generation(_))
        ));
    }

    #[test]
    fn gaussian_factors_are_incoherent_with_high_frequency() {
        let d = 100;
        let bound = 3.0 * (d as f64).ln();
        let mut hits = 0;
        let total = 200u64;
        for seed in 0..total {
            let gt = gen_ground_truth(d, d, 4, 2.0, &GenOptions::default(), 700 + seed).unwrap();
            if gt.mu <= bound {
                hits += 1;
            }
        }
        assert!(
            hits as f64 >= 0.95 * total as f64,
            "only {hits}/{total} draws below 3 log d"
        );
    }

    #[test]
    fn spiky_basis_hits_the_upper_bound() {
        let d = 12;
        let r = 3;
        let basis = Mat::from_fn(d, r, |i, j| if i == j { 1.0 } else { 0.0 });
        let f = RankRFactors::SymmetricEig {
            basis,
            eigenvalues: vec![1.0; r],
        };
        let (mu, _) = measure_incoherence(&f).unwrap();
        assert!((mu - d as f64 / r as f64).abs() < 1e-12);
    }

    #[test]
    fn flat_factor_has_unit_incoherence() {
        // Two exactly flat orthonormal columns on d = 8 (scaled sign patterns).
        let d = 8;
        let signs1 = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let signs2 = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let s = 1.0 / (d as f64).sqrt();
        let basis = Mat::from_fn(d, 2, |i, j| s * if j == 0 { signs1[i] } else { signs2[i] });
        let f = RankRFactors::SymmetricEig {
            basis,
            eigenvalues: vec![1.0, 1.0],
        };
        let (mu, _) = measure_incoherence(&f).unwrap();
        assert!((mu - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incoherence_matches_row_scan_oracle() {
        let gt = gen_ground_truth(30, 30, 3, 2.0, &GenOptions::default(), 17).unwrap();
        let f = gt.factors.left_factor();
        let mut max_row = 0.0f64;
        for i in 0..f.nrows() {
            let mut s = 0.0;
            for j in 0..f.ncols() {
                s += f[(i, j)] * f[(i, j)];
            }
            max_row = max_row.max(s);
        }
        let want = 30.0 / 3.0 * max_row;
        let (mu, _) = measure_incoherence(&gt.factors).unwrap();
        assert!((mu - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn mu_bounds_always_hold() {
        for seed in 0..20u64 {
            let gt = gen_ground_truth(20, 20, 4, 3.0, &GenOptions::default(), seed).unwrap();
            assert!(gt.mu >= 1.0 - 1e-12);
            assert!(gt.mu <= 20.0 / 4.0 + 1e-12);
        }
    }

    #[test]
    fn reconstruction_has_rank_r_and_operator_norm_sigma1() {
        let gt = gen_ground_truth(16, 16, 3, 4.0, &GenOptions::default(), 23).unwrap();
        let m = gt.matrix();
        let svals = matcore::singular_values(&m).unwrap();
        assert!((svals[0] - 4.0).abs() <= 1e-10 * 4.0);
        assert!(svals[2] > 0.9);
        assert!(svals[3] < 1e-10);
    }

    #[test]
    fn rectangular_variant_shapes() {
        let opts = GenOptions {
            variant: Variant::Rectangular,
            ..GenOptions::default()
        };
        let gt = gen_ground_truth(10, 7, 2, 3.0, &opts, 31).unwrap();
        let m = gt.matrix();
        assert_eq!((m.nrows(), m.ncols()), (10, 7));
        assert_eq!(gt.factors.left_factor().nrows(), 10);
        assert_eq!(gt.factors.right_factor().nrows(), 7);
    }
}
