//! Leave-one-out companions of the rank-constrained solver, and the ledger
//! that measures every quantity tracked by the convergence analysis.
//!
//! Member `m ≥ 1` reruns the iteration with row and column `m` treated as
//! fully observed noise-free data, which makes that run independent of the
//! randomness in line `m`. Member 0 is the original iteration and matches
//! `run_svp` at step size `1/p` bit for bit.

use crate::error::{Error, Result};
use crate::groundtruth::GroundTruth;
use crate::matcore::{self, Mat, RankRFactors};
use crate::sampling::ObservationMask;
use crate::svp;
use rayon::prelude::*;

/// One leave-one-out member: its index and the factored iterates for
/// t = 1..=t_max (the t = 0 iterate is identically zero).
#[derive(Debug, Clone)]
pub struct LooMember {
    pub m: usize,
    pub iterates: Vec<RankRFactors>,
}

#[derive(Debug, Clone)]
pub struct LooFamily {
    /// Member 0 first, then the requested line indices in increasing order.
    pub members: Vec<LooMember>,
    pub t_max: usize,
    pub rank: usize,
    pub eta: f64,
}

impl LooFamily {
    pub fn member(&self, m: usize) -> Option<&LooMember> {
        self.members.iter().find(|mem| mem.m == m)
    }
}

fn run_member(
    m: usize,
    truth_dense: &Mat,
    observed: &Mat,
    mask: &ObservationMask,
    rank: usize,
    eta: f64,
    t_max: usize,
) -> Result<LooMember> {
    let d = mask.rows();
    let mut current = Mat::zeros(d, d);
    let mut iterates = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let mut x = svp::gradient_step(&current, observed, mask, eta);
        if m > 0 {
            // Row and column m are fully observed: overwrite the cross with
            // the exact data, which is the leave-one-out recursion.
            let line = m - 1;
            for j in 0..d {
                x[(line, j)] = truth_dense[(line, j)];
            }
            for i in 0..d {
                x[(i, line)] = truth_dense[(i, line)];
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                last_finite_t: t,
                detail: format!("leave-one-out member {m} produced non-finite entries"),
            });
        }
        let f = svp::project_rank_r(&x, rank, true)?;
        current = f.reconstruct();
        iterates.push(f);
    }
    Ok(LooMember { m, iterates })
}

/// Run the base iteration plus the leave-one-out members under one shared
/// mask at step size `1/p`. `m_subset` restricts which line indices are run
/// (1-based line index = row/column number + 1; member 0 is always included);
/// `None` runs the full family.
pub fn run_loo_family(
    truth: &GroundTruth,
    mask: &ObservationMask,
    rank: usize,
    t_max: usize,
    m_subset: Option<&[usize]>,
) -> Result<LooFamily> {
    if !mask.symmetric() || truth.d1 != truth.d2 {
        return Err(Error::Argument(
            "leave-one-out families are defined in the symmetric setting".into(),
        ));
    }
    if truth.d1 != mask.rows() {
        return Err(Error::Argument("truth and mask shapes differ".into()));
    }
    if t_max == 0 {
        return Err(Error::Argument("t_max must be positive".into()));
    }
    let d = mask.rows();
    let mut member_ids: Vec<usize> = match m_subset {
        None => (0..=d).collect(),
        Some(subset) => {
            let mut ids = vec![0usize];
            for &m in subset {
                if m == 0 || m > d {
                    return Err(Error::Argument(format!(
                        "member index {m} out of range 1..={d}"
                    )));
                }
                ids.push(m);
            }
            ids.sort_unstable();
            ids.dedup();
            ids
        }
    };
    member_ids.sort_unstable();

    let truth_dense = truth.matrix();
    let observed = mask.project(&truth_dense)?;
    let eta = 1.0 / mask.p();

    let members: Vec<LooMember> = member_ids
        .par_iter()
        .map(|&m| run_member(m, &truth_dense, &observed, mask, rank, eta, t_max))
        .collect::<Result<_>>()?;
    Ok(LooFamily {
        members,
        t_max,
        rank,
        eta,
    })
}

/// Per-index ledger entry: one measured quantity at one (t, i, m).
#[derive(Debug, Clone)]
pub struct LedgerEntry {
    pub t: usize,
    /// Line index of the first sequence involved (0 = base run).
    pub i: usize,
    /// Line index of the second sequence involved.
    pub m: usize,
    pub quantity: LedgerQuantity,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedgerQuantity {
    /// Operator norm of the masked residual of member i at step t−1.
    ResidualOp,
    /// Row-wise norm of the factor misalignment against the truth basis.
    FactorDeviation,
    /// Frobenius distance between aligned factors of two members.
    Proximity,
    /// Commutator of member spectra with the pair alignment.
    NonCommutativity,
}

impl LedgerQuantity {
    pub fn name(self) -> &'static str {
        match self {
            LedgerQuantity::ResidualOp => "residual_op",
            LedgerQuantity::FactorDeviation => "factor_deviation",
            LedgerQuantity::Proximity => "proximity",
            LedgerQuantity::NonCommutativity => "noncommutativity",
        }
    }
}

/// Aggregates of one ledger row (fixed t): max over the index sets, the
/// hypothesis right-hand sides, and their ratios.
#[derive(Debug, Clone)]
pub struct LedgerRow {
    pub t: usize,
    pub residual_op: f64,
    pub factor_deviation: f64,
    pub proximity: f64,
    pub noncommutativity: f64,
    pub rhs_residual_op: f64,
    pub rhs_factor_deviation: f64,
    pub rhs_proximity: f64,
    pub rhs_noncommutativity: f64,
}

impl LedgerRow {
    pub fn ratios(&self) -> [f64; 4] {
        [
            self.residual_op / self.rhs_residual_op,
            self.factor_deviation / self.rhs_factor_deviation,
            self.proximity / self.rhs_proximity,
            self.noncommutativity / self.rhs_noncommutativity,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct SvpLedger {
    pub entries: Vec<LedgerEntry>,
    pub rows: Vec<LedgerRow>,
    pub c_hyp: f64,
}

fn align(basis_from: &Mat, basis_to: &Mat) -> Result<Mat> {
    Ok(matcore::procrustes(basis_from, basis_to)?.matrix().clone())
}

/// Measure every hypothesis quantity of a family. Rows start at t = 1 (the
/// zero iterate has no alignment). Right-hand sides are
/// `c_hyp · (1/2)^t · {σ_r, √(μr/d), √(μr/d), σ_1·√(μr/d)}`.
pub fn build_svp_ledger(
    family: &LooFamily,
    truth: &GroundTruth,
    mask: &ObservationMask,
    c_hyp: f64,
) -> Result<SvpLedger> {
    if !(c_hyp > 0.0) {
        return Err(Error::Argument("c_hyp must be positive".into()));
    }
    let d = truth.d1;
    let truth_dense = truth.matrix();
    let truth_basis = truth.factors.left_factor();
    let sigma1 = truth.sigma_max();
    let sigma_r = truth.sigma_min();
    let mu_scale = (truth.mu * truth.r as f64 / d as f64).sqrt();

    for member in &family.members {
        for (idx, f) in member.iterates.iter().enumerate() {
            let lambda_min = f.spectrum().last().copied().unwrap_or(0.0);
            if !(lambda_min > 0.0) {
                return Err(Error::DegenerateIterate {
                    t: idx + 1,
                    m: member.m,
                });
            }
        }
    }

    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for t in 1..=family.t_max {
        // Residual of step t−1 produced iterate t; the zero iterate's
        // residual is the masked ground truth itself.
        let mut residual_max = 0.0f64;
        for member in &family.members {
            let prev = if t == 1 {
                Mat::zeros(d, d)
            } else {
                member.iterates[t - 2].reconstruct()
            };
            let diff = &prev - &truth_dense;
            let masked = if member.m == 0 {
                mask.deviation(&diff, None)?
            } else {
                mask.deviation_minus_line(&diff, member.m - 1, None)?
            };
            let value = matcore::operator_norm(&masked)?;
            entries.push(LedgerEntry {
                t,
                i: member.m,
                m: member.m,
                quantity: LedgerQuantity::ResidualOp,
                value,
            });
            residual_max = residual_max.max(value);
        }

        let mut deviation_max = 0.0f64;
        let mut alignments = Vec::with_capacity(family.members.len());
        for member in &family.members {
            let f = member.iterates[t - 1].left_factor();
            let g = align(truth_basis, f)?;
            let delta = f - truth_basis * &g;
            let value = matcore::row_l2_inf(&delta);
            entries.push(LedgerEntry {
                t,
                i: member.m,
                m: member.m,
                quantity: LedgerQuantity::FactorDeviation,
                value,
            });
            deviation_max = deviation_max.max(value);
            alignments.push(g);
        }

        let mut proximity_max = 0.0f64;
        let mut noncomm_max = 0.0f64;
        for (a_idx, mem_a) in family.members.iter().enumerate() {
            for mem_b in family.members.iter().skip(a_idx + 1) {
                let fa = mem_a.iterates[t - 1].left_factor();
                let fb = mem_b.iterates[t - 1].left_factor();
                // Alignment of member a onto member b.
                let g = align(fb, fa)?;
                let dist = (fa - fb * &g).norm();
                entries.push(LedgerEntry {
                    t,
                    i: mem_a.m,
                    m: mem_b.m,
                    quantity: LedgerQuantity::Proximity,
                    value: dist,
                });
                proximity_max = proximity_max.max(dist);

                if mem_a.m == 0 {
                    // Spectrum commutator of the base run against member m.
                    let la = Mat::from_diagonal(&nalgebra::DVector::from_vec(
                        mem_a.iterates[t - 1].spectrum().to_vec(),
                    ));
                    let lb = Mat::from_diagonal(&nalgebra::DVector::from_vec(
                        mem_b.iterates[t - 1].spectrum().to_vec(),
                    ));
                    let s = &lb * &g - &g * &la;
                    let value = s.norm();
                    entries.push(LedgerEntry {
                        t,
                        i: 0,
                        m: mem_b.m,
                        quantity: LedgerQuantity::NonCommutativity,
                        value,
                    });
                    noncomm_max = noncomm_max.max(value);
                }
            }
        }

        let base = c_hyp * 0.5f64.powi(t as i32);
        rows.push(LedgerRow {
            t,
            residual_op: residual_max,
            factor_deviation: deviation_max,
            proximity: proximity_max,
            noncommutativity: noncomm_max,
            rhs_residual_op: base * sigma_r,
            rhs_factor_deviation: base * mu_scale,
            rhs_proximity: base * mu_scale,
            rhs_noncommutativity: base * mu_scale * sigma1,
        });
    }
    Ok(SvpLedger {
        entries,
        rows,
        c_hyp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::{gen_ground_truth, GenOptions};
    use crate::svp::{fit_log_linear, run_svp, SvpOptions};

    fn family_setup(
        d: usize,
        r: usize,
        p: f64,
        seed: u64,
    ) -> (GroundTruth, ObservationMask) {
        let gt = gen_ground_truth(d, d, r, 2.0, &GenOptions::default(), seed).unwrap();
        let mask = ObservationMask::sample(d, d, p, true, seed + 1).unwrap();
        (gt, mask)
    }

    #[test]
    fn full_observation_collapses_all_members() {
        let (gt, mask) = family_setup(12, 2, 1.0, 3);
        let fam = run_loo_family(&gt, &mask, 2, 2, None).unwrap();
        let base = fam.members[0].iterates[0].reconstruct();
        let m_star = gt.matrix();
        assert!((&base - &m_star).norm() <= 1e-10);
        for member in &fam.members {
            assert_eq!(member.iterates[0].reconstruct(), base);
            assert_eq!(member.iterates[1].reconstruct(), base);
        }
    }

    #[test]
    fn member_zero_matches_run_svp_bitwise() {
        let (gt, mask) = family_setup(20, 2, 0.6, 7);
        let t_max = 6;
        let fam = run_loo_family(&gt, &mask, 2, t_max, Some(&[3, 9])).unwrap();
        let observed = mask.project(&gt.matrix()).unwrap();
        let run = run_svp(
            &observed,
            &mask,
            &SvpOptions {
                rank: 2,
                eta: 1.0 / mask.p(),
                t_max,
                tol_objective: 0.0,
            },
            None,
        )
        .unwrap();
        let fam_last = fam.members[0].iterates.last().unwrap().reconstruct();
        assert_eq!(fam_last, run.factors.reconstruct());
    }

    #[test]
    fn member_ignores_its_own_cross_observations() {
        let d = 14;
        let (gt, mask) = family_setup(d, 2, 0.5, 11);
        let m = 5usize; // line index 4
        // Second mask: same except the whole row/col (m-1) marked observed.
        let mut grid: Vec<bool> = (0..d * d)
            .map(|idx| mask.is_observed(idx / d, idx % d))
            .collect();
        for k in 0..d {
            grid[(m - 1) * d + k] = true;
            grid[k * d + (m - 1)] = true;
        }
        let mask2 = ObservationMask::from_grid(d, d, grid, mask.p(), true).unwrap();
        let fam1 = run_loo_family(&gt, &mask, 2, 4, Some(&[m])).unwrap();
        let fam2 = run_loo_family(&gt, &mask2, 2, 4, Some(&[m])).unwrap();
        let a = fam1.member(m).unwrap();
        let b = fam2.member(m).unwrap();
        for (fa, fb) in a.iterates.iter().zip(&b.iterates) {
            assert_eq!(fa.reconstruct(), fb.reconstruct());
        }
    }

    #[test]
    fn ledger_identical_members_have_zero_distance() {
        let (gt, mask) = family_setup(16, 2, 0.6, 13);
        let fam = run_loo_family(&gt, &mask, 2, 3, Some(&[2, 6])).unwrap();
        let ledger = build_svp_ledger(&fam, &gt, &mask, 1.0).unwrap();
        // Proximity of a member with itself is not emitted; check the
        // commutator of identical spectra against the identity alignment.
        let member = fam.member(2).unwrap();
        let f = member.iterates[1].left_factor();
        let g = matcore::procrustes(f, f).unwrap();
        let lam = Mat::from_diagonal(&nalgebra::DVector::from_vec(
            member.iterates[1].spectrum().to_vec(),
        ));
        let s = &lam * g.matrix() - g.matrix() * &lam;
        assert!(s.norm() <= 1e-12);
        assert!(ledger.rows.first().unwrap().t == 1);
    }

    #[test]
    fn ledger_aggregates_are_maxima_and_follow_invariants() {
        let (gt, mask) = family_setup(18, 2, 0.6, 17);
        let fam = run_loo_family(&gt, &mask, 2, 4, Some(&[1, 4, 9])).unwrap();
        let ledger = build_svp_ledger(&fam, &gt, &mask, 1.0).unwrap();
        for row in &ledger.rows {
            for q in [
                LedgerQuantity::ResidualOp,
                LedgerQuantity::FactorDeviation,
                LedgerQuantity::Proximity,
                LedgerQuantity::NonCommutativity,
            ] {
                let max_entry = ledger
                    .entries
                    .iter()
                    .filter(|e| e.t == row.t && e.quantity == q)
                    .map(|e| e.value)
                    .fold(0.0f64, f64::max);
                let agg = match q {
                    LedgerQuantity::ResidualOp => row.residual_op,
                    LedgerQuantity::FactorDeviation => row.factor_deviation,
                    LedgerQuantity::Proximity => row.proximity,
                    LedgerQuantity::NonCommutativity => row.noncommutativity,
                };
                assert_eq!(agg, max_entry);
            }
            for ratio in row.ratios() {
                assert!(ratio.is_finite() && ratio >= 0.0);
            }
        }
    }

    #[test]
    fn procrustes_distance_is_symmetric_between_members() {
        let (gt, mask) = family_setup(15, 2, 0.7, 19);
        let fam = run_loo_family(&gt, &mask, 2, 3, Some(&[2, 7])).unwrap();
        let fa = fam.member(2).unwrap().iterates[2].left_factor().clone();
        let fb = fam.member(7).unwrap().iterates[2].left_factor().clone();
        let gab = matcore::procrustes(&fb, &fa).unwrap();
        let gba = matcore::procrustes(&fa, &fb).unwrap();
        let dab = (&fa - &fb * gab.matrix()).norm();
        let dba = (&fb - &fa * gba.matrix()).norm();
        assert!((dab - dba).abs() <= 1e-10 * (1.0 + dab));
    }

    #[test]
    fn residual_of_member_never_exceeds_full_deviation() {
        let (gt, mask) = family_setup(15, 2, 0.6, 23);
        let fam = run_loo_family(&gt, &mask, 2, 3, Some(&[3, 8])).unwrap();
        let m_star = gt.matrix();
        for member in fam.members.iter().filter(|mm| mm.m > 0) {
            for f in &member.iterates {
                let diff = f.reconstruct() - &m_star;
                let full = matcore::operator_norm(&mask.deviation(&diff, None).unwrap()).unwrap();
                let cut = matcore::operator_norm(
                    &mask
                        .deviation_minus_line(&diff, member.m - 1, None)
                        .unwrap(),
                )
                .unwrap();
                assert!(cut <= full + 1e-10 * (1.0 + full));
            }
        }
    }

    #[test]
    fn proximity_triangle_route_holds() {
        let (gt, mask) = family_setup(15, 2, 0.7, 29);
        let fam = run_loo_family(&gt, &mask, 2, 3, Some(&[2, 5])).unwrap();
        for t in 0..3 {
            let f0 = fam.members[0].iterates[t].left_factor().clone();
            let fi = fam.member(2).unwrap().iterates[t].left_factor().clone();
            let fm = fam.member(5).unwrap().iterates[t].left_factor().clone();
            let d = |a: &Mat, b: &Mat| {
                let g = matcore::procrustes(b, a).unwrap();
                (a - b * g.matrix()).norm()
            };
            assert!(d(&fi, &fm) <= d(&f0, &fi) + d(&f0, &fm) + 1e-10);
        }
    }

    #[test]
    fn commutator_bound_holds_where_premise_is_met() {
        // Bound on the spectrum commutator under a small masked residual,
        // evaluated at every ledger position that satisfies the premise.
        let (gt, mask) = family_setup(16, 2, 0.8, 31);
        let fam = run_loo_family(&gt, &mask, 2, 4, None).unwrap();
        let sigma1 = gt.sigma_max();
        let sigma_r = gt.sigma_min();
        let truth_basis = gt.factors.left_factor();
        let lam_star = Mat::from_diagonal(&nalgebra::DVector::from_vec(
            gt.factors.spectrum().to_vec(),
        ));
        let m_star = gt.matrix();
        let mut checked = 0;
        for member in &fam.members {
            for f in &member.iterates {
                let diff = f.reconstruct() - &m_star;
                let masked = if member.m == 0 {
                    mask.deviation(&diff, None).unwrap()
                } else {
                    mask.deviation_minus_line(&diff, member.m - 1, None).unwrap()
                };
                let e_op = matcore::operator_norm(&masked).unwrap();
                if e_op >= 0.5 * sigma_r {
                    continue;
                }
                let g = align(truth_basis, f.left_factor()).unwrap();
                let comm = matcore::operator_norm(&(&lam_star * &g - &g * &lam_star)).unwrap();
                let bound = (2.0 + 2.0 * sigma1 / (sigma_r - e_op)) * e_op;
                assert!(comm <= bound * (1.0 + 1e-9) + 1e-12);
                checked += 1;
            }
        }
        assert!(checked > 0, "no ledger position satisfied the premise");
    }

    #[test]
    fn family_aggregates_decay_at_generous_sampling() {
        let (gt, mask) = family_setup(40, 2, 0.7, 37);
        let fam = run_loo_family(&gt, &mask, 2, 10, Some(&[1, 11, 21, 31])).unwrap();
        let ledger = build_svp_ledger(&fam, &gt, &mask, 1.0).unwrap();
        let series: Vec<f64> = ledger.rows.iter().map(|r| r.factor_deviation).collect();
        let fit = fit_log_linear(&series).unwrap();
        assert!(fit.ratio < 1.0, "factor deviation not decaying: {fit:?}");
    }

    #[test]
    fn rejects_asymmetric_setting() {
        let gt = gen_ground_truth(10, 10, 2, 1.0, &GenOptions::default(), 41).unwrap();
        let mask = ObservationMask::sample(10, 10, 0.5, false, 42).unwrap();
        assert!(run_loo_family(&gt, &mask, 2, 3, None).is_err());
    }
}
