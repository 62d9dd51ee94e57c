//! Projected gradient descent on the rank-constrained completion objective:
//! `M⁰ = 0`, `M^{t+1} = P_r(M^t − η·(Π_Ω(M^t) − Π_Ω(M*)))`, with per-iteration
//! traces. The solver touches the ground truth only through the observed
//! entries; truth-dependent trace fields are filled only when a diagnostics
//! matrix is supplied.

use crate::error::{Error, Result};
use crate::matcore::{self, entrywise_inf, Mat, RankRFactors};
use crate::sampling::ObservationMask;

#[derive(Debug, Clone)]
pub struct SvpOptions {
    pub rank: usize,
    pub eta: f64,
    pub t_max: usize,
    pub tol_objective: f64,
}

/// The phase boundary used throughout: ⌈5·log2 d⌉ + 12.
pub fn default_t_max(d: usize) -> usize {
    (5.0 * (d as f64).log2()).ceil() as usize + 12
}

#[derive(Debug, Clone)]
pub struct SvpRecord {
    pub t: usize,
    /// ½‖Π_Ω(M^t) − Π_Ω(M*)‖²_F — computable from observed data alone.
    pub objective: f64,
    pub sigma1: f64,
    pub sigma_r: f64,
    pub err_inf: Option<f64>,
    pub err_fro: Option<f64>,
    /// err_inf(t) / err_inf(t−1).
    pub ratio_inf: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SvpRun {
    pub trace: Vec<SvpRecord>,
    pub factors: RankRFactors,
}

/// One gradient step on the observed residual. Shared verbatim by the solver
/// and the leave-one-out sequences so their common member is bitwise equal.
pub(crate) fn gradient_step(
    current: &Mat,
    observed: &Mat,
    mask: &ObservationMask,
    eta: f64,
) -> Mat {
    let mut x = current.clone();
    for &(i, j) in mask.observed_indices() {
        x[(i, j)] = current[(i, j)] - eta * (current[(i, j)] - observed[(i, j)]);
    }
    x
}

pub(crate) fn project_rank_r(x: &Mat, r: usize, symmetric: bool) -> Result<RankRFactors> {
    if symmetric {
        matcore::best_rank_r_sym(x, r)
    } else {
        matcore::best_rank_r(x, r)
    }
}

fn objective(iterate: &Mat, observed: &Mat, mask: &ObservationMask) -> f64 {
    let mut acc = 0.0;
    for &(i, j) in mask.observed_indices() {
        let d = iterate[(i, j)] - observed[(i, j)];
        acc += d * d;
    }
    0.5 * acc
}

fn validate_observed(observed: &Mat, mask: &ObservationMask) -> Result<()> {
    if observed.nrows() != mask.rows() || observed.ncols() != mask.cols() {
        return Err(Error::Argument("observed shape does not match mask".into()));
    }
    for i in 0..observed.nrows() {
        for j in 0..observed.ncols() {
            if !mask.is_observed(i, j) && observed[(i, j)] != 0.0 {
                return Err(Error::Argument(
                    "observed matrix carries data outside the mask support".into(),
                ));
            }
        }
    }
    Ok(())
}

fn truth_fields(
    iterate: &Mat,
    truth: Option<&Mat>,
    prev_err_inf: Option<f64>,
) -> (Option<f64>, Option<f64>, Option<f64>) {
    match truth {
        None => (None, None, None),
        Some(m_star) => {
            let diff = iterate - m_star;
            let err_inf = entrywise_inf(&diff);
            let err_fro = diff.norm();
            let ratio = prev_err_inf.and_then(|prev| {
                if prev > 0.0 {
                    Some(err_inf / prev)
                } else {
                    None
                }
            });
            (Some(err_inf), Some(err_fro), ratio)
        }
    }
}

/// Run the solver on `observed = Π_Ω(M*)`. Iterates are maintained in rank-r
/// factored form; symmetric masks take the symmetric eigen path so symmetric
/// data yields symmetric iterates.
pub fn run_svp(
    observed: &Mat,
    mask: &ObservationMask,
    opts: &SvpOptions,
    diagnostics_truth: Option<&Mat>,
) -> Result<SvpRun> {
    if opts.rank == 0 || opts.rank > mask.rows().min(mask.cols()) {
        return Err(Error::Argument(format!("rank {} out of range", opts.rank)));
    }
    if !(opts.eta > 0.0) {
        return Err(Error::Argument(format!("step size {} must be > 0", opts.eta)));
    }
    validate_observed(observed, mask)?;
    if let Some(t) = diagnostics_truth {
        if t.nrows() != mask.rows() || t.ncols() != mask.cols() {
            return Err(Error::Argument("diagnostics truth shape mismatch".into()));
        }
    }

    let mut current = Mat::zeros(mask.rows(), mask.cols());
    let mut factors: Option<RankRFactors> = None;
    let mut trace = Vec::with_capacity(opts.t_max + 1);

    let (err_inf, err_fro, _) = truth_fields(&current, diagnostics_truth, None);
    trace.push(SvpRecord {
        t: 0,
        objective: objective(&current, observed, mask),
        sigma1: 0.0,
        sigma_r: 0.0,
        err_inf,
        err_fro,
        ratio_inf: None,
    });

    let mut sigma1_first = None;
    for t in 0..opts.t_max {
        let x = gradient_step(&current, observed, mask, opts.eta);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                last_finite_t: t,
                detail: "gradient step produced non-finite entries".into(),
            });
        }
        let f = project_rank_r(&x, opts.rank, mask.symmetric())?;
        let next = f.reconstruct();
        let sigma1 = f.sigma_max();
        if !sigma1.is_finite() {
            return Err(Error::Divergence {
                last_finite_t: t,
                detail: "iterate spectrum is non-finite".into(),
            });
        }
        let first = *sigma1_first.get_or_insert(sigma1);
        if sigma1 > 1e3 * first.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence {
                last_finite_t: t,
                detail: format!("sigma1 grew to {sigma1:.3e} from {first:.3e}"),
            });
        }

        let prev_err = trace.last().and_then(|rec| rec.err_inf);
        let (err_inf, err_fro, ratio_inf) = truth_fields(&next, diagnostics_truth, prev_err);
        let obj = objective(&next, observed, mask);
        trace.push(SvpRecord {
            t: t + 1,
            objective: obj,
            sigma1,
            sigma_r: f.sigma_min(),
            err_inf,
            err_fro,
            ratio_inf,
        });
        current = next;
        factors = Some(f);
        if obj <= opts.tol_objective {
            break;
        }
    }

    let factors = factors.ok_or_else(|| Error::Argument("t_max of zero leaves no iterate".into()))?;
    Ok(SvpRun { trace, factors })
}

#[derive(Debug, Clone, Copy)]
pub struct LogFit {
    /// Per-step multiplicative ratio fitted to the series.
    pub ratio: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `log(values)` against the index. The window is
/// truncated at the first non-positive value.
pub fn fit_log_linear(values: &[f64]) -> Result<LogFit> {
    let cut = values
        .iter()
        .position(|&v| !(v > 0.0) || !v.is_finite())
        .unwrap_or(values.len());
    let window = &values[..cut];
    let n = window.len();
    if n < 2 {
        return Err(Error::Argument(
            "log-linear fit needs at least two positive values".into(),
        ));
    }
    let ys: Vec<f64> = window.iter().map(|v| v.ln()).collect();
    let xbar = (n as f64 - 1.0) / 2.0;
    let ybar = ys.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut stot = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - xbar;
        sxy += dx * (y - ybar);
        sxx += dx * dx;
        stot += (y - ybar) * (y - ybar);
    }
    let slope = sxy / sxx;
    let mut sres = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let fitted = ybar + slope * (i as f64 - xbar);
        sres += (y - fitted) * (y - fitted);
    }
    let r_squared = if stot <= 1e-30 {
        1.0
    } else {
        1.0 - sres / stot
    };
    Ok(LogFit {
        ratio: slope.exp(),
        r_squared,
        points: n,
    })
}

/// Fitted per-step Frobenius contraction of a trace after `burn_in`
/// iterations, from the truth-dependent error field.
pub fn frobenius_contraction_phase(trace: &[SvpRecord], burn_in: usize) -> Result<LogFit> {
    let series: Vec<f64> = trace
        .iter()
        .filter(|rec| rec.t >= burn_in)
        .map(|rec| {
            rec.err_fro
                .ok_or_else(|| Error::Argument("trace lacks ground-truth error fields".into()))
        })
        .collect::<Result<_>>()?;
    if series.len() < 5 {
        return Err(Error::Argument(format!(
            "need at least 5 post-burn-in records, have {}",
            series.len()
        )));
    }
    fit_log_linear(&series)
}
