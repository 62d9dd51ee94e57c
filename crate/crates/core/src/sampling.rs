//! Observation masks for the symmetric and asymmetric sampling models, the
//! sampling operators they induce, and the independent-layer partition used
//! by the dual certificate construction.
//!
//! Entry-level randomness is counter-based: whether entry `(i, j)` of layer
//! `l` is observed depends only on `(seed, l, i, j)`, so layers are mutually
//! independent and sampling order never matters.

use crate::error::{Error, Result};
use crate::matcore::Mat;
use crate::rng;
use std::fmt::Write as _;

/// The random index set Ω with its sampling probability.
#[derive(Debug, Clone)]
pub struct ObservationMask {
    rows: usize,
    cols: usize,
    observed: Vec<bool>,
    /// Model sampling probability the mask was drawn at.
    p: f64,
    symmetric: bool,
    /// Cached list of observed indices for fast projection.
    indices: Vec<(usize, usize)>,
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Argument(format!("probability {p} outside (0, 1]")));
    }
    Ok(())
}

impl ObservationMask {
    /// Draw a mask with each entry observed independently with probability
    /// `p`. Symmetric masks sample each unordered pair (diagonal included)
    /// once and mirror it.
    pub fn sample(
        rows: usize,
        cols: usize,
        p: f64,
        symmetric: bool,
        seed: u64,
    ) -> Result<ObservationMask> {
        check_probability(p)?;
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("empty mask".into()));
        }
        if symmetric && rows != cols {
            return Err(Error::Argument("symmetric mask must be square".into()));
        }
        Self::sample_layer(rows, cols, p, symmetric, seed, 0)
    }

    /// As `sample`, with an explicit layer index mixed into the entry keys.
    pub(crate) fn sample_layer(
        rows: usize,
        cols: usize,
        p: f64,
        symmetric: bool,
        seed: u64,
        layer: u64,
    ) -> Result<ObservationMask> {
        let mut observed = vec![false; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                let (a, b) = if symmetric {
                    (i.min(j), i.max(j))
                } else {
                    (i, j)
                };
                observed[i * cols + j] =
                    rng::uniform(seed, &[rng::tag::MASK, layer, a as u64, b as u64]) < p;
            }
        }
        Ok(Self::from_parts(rows, cols, observed, p, symmetric))
    }

    /// Build a mask from an explicit grid (used by IO and tests).
    pub fn from_grid(
        rows: usize,
        cols: usize,
        observed: Vec<bool>,
        p: f64,
        symmetric: bool,
    ) -> Result<ObservationMask> {
        check_probability(p)?;
        if observed.len() != rows * cols {
            return Err(Error::Dimension("grid length mismatch".into()));
        }
        if symmetric {
            if rows != cols {
                return Err(Error::Argument("symmetric mask must be square".into()));
            }
            for i in 0..rows {
                for j in 0..cols {
                    if observed[i * cols + j] != observed[j * cols + i] {
                        return Err(Error::Argument(
                            "grid is not symmetric but symmetric flag set".into(),
                        ));
                    }
                }
            }
        }
        Ok(Self::from_parts(rows, cols, observed, p, symmetric))
    }

    fn from_parts(rows: usize, cols: usize, observed: Vec<bool>, p: f64, symmetric: bool) -> Self {
        let mut indices = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                if observed[i * cols + j] {
                    indices.push((i, j));
                }
            }
        }
        ObservationMask {
            rows,
            cols,
            observed,
            p,
            symmetric,
            indices,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.cols + j]
    }

    pub fn observed_indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    pub fn observed_count(&self) -> usize {
        self.indices.len()
    }

    /// Fill fraction |Ω| / (rows·cols), counting mirrored entries.
    pub fn fill_fraction(&self) -> f64 {
        self.observed_count() as f64 / (self.rows * self.cols) as f64
    }

    /// Plug-in estimate p̂ = |Ω| / (rows·cols) for deployments where the model
    /// probability is unknown. The operators use the model `p` unless asked.
    pub fn estimate_p(&self) -> f64 {
        self.fill_fraction()
    }

    fn check_shape(&self, z: &Mat) -> Result<()> {
        if z.nrows() != self.rows || z.ncols() != self.cols {
            return Err(Error::Argument(format!(
                "shape mismatch: mask {}x{}, matrix {}x{}",
                self.rows,
                self.cols,
                z.nrows(),
                z.ncols()
            )));
        }
        Ok(())
    }

    fn effective_p(&self, prob_override: Option<f64>) -> Result<f64> {
        let p = prob_override.unwrap_or(self.p);
        check_probability(p)?;
        Ok(p)
    }

    /// Π_Ω: zero out unobserved entries.
    pub fn project(&self, z: &Mat) -> Result<Mat> {
        self.check_shape(z)?;
        let mut out = Mat::zeros(self.rows, self.cols);
        for &(i, j) in &self.indices {
            out[(i, j)] = z[(i, j)];
        }
        Ok(out)
    }

    /// R_Ω = (1/p)·Π_Ω, the unbiased reweighted projection.
    pub fn rescaled_project(&self, z: &Mat, prob_override: Option<f64>) -> Result<Mat> {
        self.check_shape(z)?;
        let p = self.effective_p(prob_override)?;
        let inv = 1.0 / p;
        let mut out = Mat::zeros(self.rows, self.cols);
        for &(i, j) in &self.indices {
            out[(i, j)] = inv * z[(i, j)];
        }
        Ok(out)
    }

    /// H_Ω = Id − (1/p)·Π_Ω, the centered sampling deviation: entrywise
    /// `(1 − δ_ij/p)·z_ij`. Zero in expectation for every entry.
    pub fn deviation(&self, z: &Mat, prob_override: Option<f64>) -> Result<Mat> {
        self.check_shape(z)?;
        let p = self.effective_p(prob_override)?;
        let observed_weight = 1.0 - 1.0 / p;
        let mut out = z.clone();
        for &(i, j) in &self.indices {
            out[(i, j)] = observed_weight * z[(i, j)];
        }
        Ok(out)
    }

    /// The deviation operator with row and column `m` treated as fully
    /// observed noise-free: output is zero on that cross and agrees with
    /// `deviation` elsewhere.
    pub fn deviation_minus_line(
        &self,
        z: &Mat,
        m: usize,
        prob_override: Option<f64>,
    ) -> Result<Mat> {
        if self.rows != self.cols {
            return Err(Error::Argument(
                "line leave-one-out requires a square mask".into(),
            ));
        }
        if m >= self.rows {
            return Err(Error::Argument(format!("line index {m} out of range")));
        }
        let mut out = self.deviation(z, prob_override)?;
        for j in 0..self.cols {
            out[(m, j)] = 0.0;
        }
        for i in 0..self.rows {
            out[(i, m)] = 0.0;
        }
        Ok(out)
    }

    /// The deviation operator with the cross of entry `w = (w1, w2)` left
    /// out: zero when `i = w1` or `j = w2`, `deviation` elsewhere.
    pub fn deviation_minus_cross(
        &self,
        z: &Mat,
        w: (usize, usize),
        prob_override: Option<f64>,
    ) -> Result<Mat> {
        if w.0 >= self.rows || w.1 >= self.cols {
            return Err(Error::Argument(format!(
                "cross index ({}, {}) out of range",
                w.0, w.1
            )));
        }
        let mut out = self.deviation(z, prob_override)?;
        for j in 0..self.cols {
            out[(w.0, j)] = 0.0;
        }
        for i in 0..self.rows {
            out[(i, w.1)] = 0.0;
        }
        Ok(out)
    }

    /// The cross-shaped remainder `H_Ω − H_Ω^(−w)`: supported on row `w1` and
    /// column `w2`, where it equals the deviation.
    pub fn deviation_cross(
        &self,
        z: &Mat,
        w: (usize, usize),
        prob_override: Option<f64>,
    ) -> Result<Mat> {
        if w.0 >= self.rows || w.1 >= self.cols {
            return Err(Error::Argument(format!(
                "cross index ({}, {}) out of range",
                w.0, w.1
            )));
        }
        let p = self.effective_p(prob_override)?;
        self.check_shape(z)?;
        let observed_weight = 1.0 - 1.0 / p;
        let mut out = Mat::zeros(self.rows, self.cols);
        for j in 0..self.cols {
            let weight = if self.is_observed(w.0, j) {
                observed_weight
            } else {
                1.0
            };
            out[(w.0, j)] = weight * z[(w.0, j)];
        }
        for i in 0..self.rows {
            if i == w.0 {
                continue;
            }
            let weight = if self.is_observed(i, w.1) {
                observed_weight
            } else {
                1.0
            };
            out[(i, w.1)] = weight * z[(i, w.1)];
        }
        Ok(out)
    }

    /// Union of two masks on the same shape, at the stated union probability.
    pub fn union(&self, other: &ObservationMask, p_union: f64) -> Result<ObservationMask> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Argument("mask shape mismatch in union".into()));
        }
        let observed: Vec<bool> = self
            .observed
            .iter()
            .zip(&other.observed)
            .map(|(a, b)| *a || *b)
            .collect();
        ObservationMask::from_grid(
            self.rows,
            self.cols,
            observed,
            p_union,
            self.symmetric && other.symmetric,
        )
    }

    /// Serialize as a `rows cols p symmetric` header followed by one `i j`
    /// pair per observed entry (0-indexed).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {}",
            self.rows, self.cols, self.p, self.symmetric
        );
        for &(i, j) in &self.indices {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<ObservationMask> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty mask text".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse("bad mask header".into()));
        }
        let rows: usize = fields[0]
            .parse()
            .map_err(|_| Error::Parse("bad mask rows".into()))?;
        let cols: usize = fields[1]
            .parse()
            .map_err(|_| Error::Parse("bad mask cols".into()))?;
        let p: f64 = fields[2]
            .parse()
            .map_err(|_| Error::Parse("bad mask probability".into()))?;
        let symmetric: bool = fields[3]
            .parse()
            .map_err(|_| Error::Parse("bad mask symmetry flag".into()))?;
        let mut observed = vec![false; rows * cols];
        for line in lines {
            let mut it = line.split_whitespace();
            let i: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Parse("bad mask entry".into()))?;
            let j: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Parse("bad mask entry".into()))?;
            if i >= rows || j >= cols {
                return Err(Error::Parse(format!("mask entry ({i}, {j}) out of range")));
            }
            observed[i * cols + j] = true;
        }
        ObservationMask::from_grid(rows, cols, observed, p, symmetric)
    }
}

/// Independent sampling layers whose union reproduces the target model:
/// `k0` layers each at probability `q = 1 − (1−p)^{1/k0}`, so the per-entry
/// union probability is exactly `p` again.
#[derive(Debug, Clone)]
pub struct GolfingPartition {
    pub k0: usize,
    pub q: f64,
    pub p_total: f64,
    pub seed: u64,
    pub layers: Vec<ObservationMask>,
}

impl GolfingPartition {
    pub fn layer_probability(p_total: f64, k0: usize) -> Result<f64> {
        if !(p_total > 0.0 && p_total < 1.0) {
            return Err(Error::Argument(format!(
                "total probability {p_total} outside (0, 1)"
            )));
        }
        if k0 < 1 {
            return Err(Error::Argument("k0 must be at least 1".into()));
        }
        Ok(1.0 - (1.0 - p_total).powf(1.0 / k0 as f64))
    }

    /// Union mask of all layers, carrying the total probability.
    pub fn union_mask(&self) -> Result<ObservationMask> {
        let mut acc = self.layers[0].clone();
        for layer in &self.layers[1..] {
            acc = acc.union(layer, self.p_total)?;
        }
        ObservationMask::from_grid(
            acc.rows(),
            acc.cols(),
            (0..acc.rows() * acc.cols())
                .map(|idx| acc.observed[idx])
                .collect(),
            self.p_total,
            acc.symmetric(),
        )
    }
}

/// Split a target observation probability into `k0` independent layers.
pub fn golfing_split(
    rows: usize,
    cols: usize,
    p_total: f64,
    k0: usize,
    seed: u64,
) -> Result<GolfingPartition> {
    let q = GolfingPartition::layer_probability(p_total, k0)?;
    let layers: Vec<ObservationMask> = (0..k0)
        .map(|l| ObservationMask::sample_layer(rows, cols, q, false, seed, l as u64))
        .collect::<Result<_>>()?;
    Ok(GolfingPartition {
        k0,
        q,
        p_total,
        seed,
        layers,
    })
}
