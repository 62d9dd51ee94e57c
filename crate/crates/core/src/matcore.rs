//! Dense matrix values, the norms used throughout the lab, truncated spectral
//! decompositions with a fixed sign convention, and orthogonal alignment.
//!
//! All decompositions go through nalgebra's dense backends (tridiagonal
//! symmetric eigen, bidiagonal SVD). At desk scale (d ≤ 500) these are exact
//! enough and, with the deterministic ordering and sign convention below,
//! bitwise reproducible across runs.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::fmt::Write as _;

/// The universal dense value carrier.
pub type Mat = DMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Frobenius,
    Operator,
    Nuclear,
    /// max_ij |z_ij|
    EntrywiseInf,
    /// max_i ‖row i‖₂
    RowL2Inf,
    /// max of RowL2Inf over the matrix and its transpose
    DoublyL2Inf,
}

fn ensure_nonempty(z: &Mat) -> Result<()> {
    if z.nrows() == 0 || z.ncols() == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    Ok(())
}

fn ensure_finite(z: &Mat) -> Result<()> {
    if z.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("matrix has non-finite entries".into()))
    }
}

pub fn entrywise_inf(z: &Mat) -> f64 {
    z.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub fn row_l2_inf(z: &Mat) -> f64 {
    (0..z.nrows())
        .map(|i| z.row(i).norm())
        .fold(0.0f64, f64::max)
}

pub fn doubly_l2_inf(z: &Mat) -> f64 {
    let cols = (0..z.ncols())
        .map(|j| z.column(j).norm())
        .fold(0.0f64, f64::max);
    row_l2_inf(z).max(cols)
}

/// Singular values sorted descending (stable order on ties).
pub fn singular_values(z: &Mat) -> Result<Vec<f64>> {
    ensure_nonempty(z)?;
    ensure_finite(z)?;
    let svd = z
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(s)
}

pub fn operator_norm(z: &Mat) -> Result<f64> {
    Ok(singular_values(z)?.first().copied().unwrap_or(0.0))
}

pub fn nuclear_norm(z: &Mat) -> Result<f64> {
    Ok(singular_values(z)?.iter().sum())
}

/// The named norm of `z`.
pub fn norm(z: &Mat, kind: NormKind) -> Result<f64> {
    ensure_nonempty(z)?;
    ensure_finite(z)?;
    Ok(match kind {
        NormKind::Frobenius => z.norm(),
        NormKind::Operator => operator_norm(z)?,
        NormKind::Nuclear => nuclear_norm(z)?,
        NormKind::EntrywiseInf => entrywise_inf(z),
        NormKind::RowL2Inf => row_l2_inf(z),
        NormKind::DoublyL2Inf => doubly_l2_inf(z),
    })
}

/// Factored representation of a rank-r matrix.
#[derive(Debug, Clone)]
pub enum RankRFactors {
    /// `basis · diag(eigenvalues) · basisᵀ`; eigenvalues sorted descending by
    /// algebraic value (they may be negative).
    SymmetricEig { basis: Mat, eigenvalues: Vec<f64> },
    /// `left · diag(singular_values) · rightᵀ`; singular values descending.
    RectangularSvd {
        left: Mat,
        singular_values: Vec<f64>,
        right: Mat,
    },
}

impl RankRFactors {
    pub fn rank(&self) -> usize {
        match self {
            RankRFactors::SymmetricEig { eigenvalues, .. } => eigenvalues.len(),
            RankRFactors::RectangularSvd { singular_values, .. } => singular_values.len(),
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            RankRFactors::SymmetricEig { basis, .. } => basis.nrows(),
            RankRFactors::RectangularSvd { left, .. } => left.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            RankRFactors::SymmetricEig { basis, .. } => basis.nrows(),
            RankRFactors::RectangularSvd { right, .. } => right.nrows(),
        }
    }

    /// Spectrum as stored: eigenvalues (symmetric variant) or singular values.
    pub fn spectrum(&self) -> &[f64] {
        match self {
            RankRFactors::SymmetricEig { eigenvalues, .. } => eigenvalues,
            RankRFactors::RectangularSvd { singular_values, .. } => singular_values,
        }
    }

    pub fn left_factor(&self) -> &Mat {
        match self {
            RankRFactors::SymmetricEig { basis, .. } => basis,
            RankRFactors::RectangularSvd { left, .. } => left,
        }
    }

    pub fn right_factor(&self) -> &Mat {
        match self {
            RankRFactors::SymmetricEig { basis, .. } => basis,
            RankRFactors::RectangularSvd { right, .. } => right,
        }
    }

    /// Largest spectral magnitude.
    pub fn sigma_max(&self) -> f64 {
        self.spectrum().iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    /// Smallest spectral magnitude among the kept rank-r directions.
    pub fn sigma_min(&self) -> f64 {
        self.spectrum()
            .iter()
            .fold(f64::INFINITY, |a, x| a.min(x.abs()))
    }

    /// Dense reconstruction. The symmetric variant is symmetrized exactly so
    /// iterates built from it stay symmetric bit-for-bit.
    pub fn reconstruct(&self) -> Mat {
        match self {
            RankRFactors::SymmetricEig { basis, eigenvalues } => {
                let scaled = scale_columns(basis, eigenvalues);
                let raw = &scaled * basis.transpose();
                symmetrize(&raw)
            }
            RankRFactors::RectangularSvd {
                left,
                singular_values,
                right,
            } => {
                let scaled = scale_columns(left, singular_values);
                &scaled * right.transpose()
            }
        }
    }

    /// Max entrywise deviation of `FᵀF` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let defect = |f: &Mat| {
            let g = f.transpose() * f;
            let mut worst = 0.0f64;
            for i in 0..g.nrows() {
                for j in 0..g.ncols() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((g[(i, j)] - target).abs());
                }
            }
            worst
        };
        match self {
            RankRFactors::SymmetricEig { basis, .. } => defect(basis),
            RankRFactors::RectangularSvd { left, right, .. } => defect(left).max(defect(right)),
        }
    }
}

/// r×r orthogonal alignment produced by `procrustes`.
#[derive(Debug, Clone)]
pub struct AlignmentMatrix {
    rotation: Mat,
}

impl AlignmentMatrix {
    pub fn matrix(&self) -> &Mat {
        &self.rotation
    }

    /// Max entrywise deviation of `GGᵀ` from the identity.
    pub fn orthogonality_defect(&self) -> f64 {
        let g = &self.rotation * self.rotation.transpose();
        let mut worst = 0.0f64;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

pub fn scale_columns(f: &Mat, scales: &[f64]) -> Mat {
    let mut out = f.clone();
    for (j, &s) in scales.iter().enumerate() {
        for i in 0..out.nrows() {
            out[(i, j)] *= s;
        }
    }
    out
}

pub fn symmetrize(z: &Mat) -> Mat {
    let mut out = z.clone();
    for i in 0..z.nrows() {
        for j in 0..z.ncols() {
            out[(i, j)] = 0.5 * (z[(i, j)] + z[(j, i)]);
        }
    }
    out
}

pub fn is_symmetric(z: &Mat, tol: f64) -> bool {
    if z.nrows() != z.ncols() {
        return false;
    }
    let scale = entrywise_inf(z).max(1.0);
    for i in 0..z.nrows() {
        for j in (i + 1)..z.ncols() {
            if (z[(i, j)] - z[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Flip each column of `u` (and the matching column of `v`, when given) so the
/// largest-magnitude entry of the `u` column is positive. First index wins on
/// magnitude ties, which makes the decomposition a deterministic function of
/// its input even for degenerate spectra.
fn apply_sign_convention(u: &mut Mat, mut v: Option<&mut Mat>) {
    for j in 0..u.ncols() {
        let mut arg = 0usize;
        let mut best = -1.0f64;
        for i in 0..u.nrows() {
            let a = u[(i, j)].abs();
            if a > best {
                best = a;
                arg = i;
            }
        }
        if u[(arg, j)] < 0.0 {
            for i in 0..u.nrows() {
                u[(i, j)] = -u[(i, j)];
            }
            if let Some(ref mut vm) = v {
                for i in 0..vm.nrows() {
                    vm[(i, j)] = -vm[(i, j)];
                }
            }
        }
    }
}

fn select_columns(m: &Mat, idx: &[usize]) -> Mat {
    let mut out = Mat::zeros(m.nrows(), idx.len());
    for (col, &j) in idx.iter().enumerate() {
        for i in 0..m.nrows() {
            out[(i, col)] = m[(i, j)];
        }
    }
    out
}

/// Orthonormalize the columns of `m` in place by two passes of modified
/// Gram-Schmidt, replacing any column that collapses (zero singular value)
/// with the first coordinate vector that survives orthogonalization. The
/// completion is deterministic.
fn orthonormalize_columns(m: &mut Mat) {
    let rows = m.nrows();
    for j in 0..m.ncols() {
        let mut candidate = 0usize;
        loop {
            for _pass in 0..2 {
                for k in 0..j {
                    let dot: f64 = (0..rows).map(|i| m[(i, k)] * m[(i, j)]).sum();
                    for i in 0..rows {
                        m[(i, j)] -= dot * m[(i, k)];
                    }
                }
            }
            let norm: f64 = (0..rows).map(|i| m[(i, j)] * m[(i, j)]).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for i in 0..rows {
                    m[(i, j)] /= norm;
                }
                break;
            }
            // Column vanished: seed it with the next coordinate vector.
            assert!(candidate < rows, "cannot complete orthonormal basis");
            for i in 0..rows {
                m[(i, j)] = if i == candidate { 1.0 } else { 0.0 };
            }
            candidate += 1;
        }
    }
}

/// Economy SVD of `z` built on the smaller-side Gram matrix and the symmetric
/// eigensolver: `z = u · diag(sigma) · vᵀ` with `k = min(rows, cols)` columns,
/// singular values sorted descending (stable on ties), factors exactly
/// orthonormalized. nalgebra's bidiagonal SVD loses accuracy on exactly
/// rank-deficient inputs, so everything that needs singular vectors goes
/// through here instead.
fn gram_svd(z: &Mat) -> Result<(Mat, Vec<f64>, Mat)> {
    let (m, n) = (z.nrows(), z.ncols());
    if n > m {
        let (u, s, v) = gram_svd(&z.transpose())?;
        return Ok((v, s, u));
    }
    let gram = symmetrize(&(z.transpose() * z));
    let (lambda, v) = eig_sorted(&gram)?;
    let sigma: Vec<f64> = lambda.iter().map(|l| l.max(0.0).sqrt()).collect();
    let cutoff = sigma.first().copied().unwrap_or(0.0) * 1e-12;
    let mut u = Mat::zeros(m, n);
    for j in 0..n {
        if sigma[j] > cutoff {
            let col = z * v.column(j);
            for i in 0..m {
                u[(i, j)] = col[i] / sigma[j];
            }
        }
    }
    orthonormalize_columns(&mut u);
    Ok((u, sigma, v))
}

/// Frobenius-optimal rank-`r` approximation of `z` in factored form.
///
/// Ties at the rank boundary are broken by the stable descending order of the
/// singular values, so the projection is a deterministic function of `z` even
/// off the generic-position assumption.
pub fn best_rank_r(z: &Mat, r: usize) -> Result<RankRFactors> {
    ensure_nonempty(z)?;
    if r == 0 || r > z.nrows().min(z.ncols()) {
        return Err(Error::Argument(format!(
            "rank {} out of range for {}x{} matrix",
            r,
            z.nrows(),
            z.ncols()
        )));
    }
    ensure_finite(z)?;
    let (u, sigma, v) = gram_svd(z)?;
    let keep: Vec<usize> = (0..r).collect();
    let mut left = select_columns(&u, &keep);
    let mut right = select_columns(&v, &keep);
    apply_sign_convention(&mut left, Some(&mut right));
    Ok(RankRFactors::RectangularSvd {
        left,
        singular_values: sigma[..r].to_vec(),
        right,
    })
}

fn eig_sorted(z: &Mat) -> Result<(Vec<f64>, Mat)> {
    let eig = z
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("symmetric eigendecomposition did not converge".into()))?;
    let vals = &eig.eigenvalues;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let sorted_vals: Vec<f64> = order.iter().map(|&j| vals[j]).collect();
    let mut vecs = select_columns(&eig.eigenvectors, &order);
    apply_sign_convention(&mut vecs, None);
    Ok((sorted_vals, vecs))
}

/// Full symmetric eigendecomposition, eigenvalues descending by algebraic
/// value, deterministic eigenvector signs.
pub fn full_eig_sym(z: &Mat) -> Result<(Vec<f64>, Mat)> {
    ensure_nonempty(z)?;
    ensure_finite(z)?;
    if !is_symmetric(z, 1e-10) {
        return Err(Error::Argument("matrix is not symmetric".into()));
    }
    eig_sorted(z)
}

/// Top-`r` eigenpairs of a symmetric matrix by algebraic eigenvalue.
pub fn top_r_eig_sym(z: &Mat, r: usize) -> Result<RankRFactors> {
    let (vals, vecs) = full_eig_sym(z)?;
    if r == 0 || r > vals.len() {
        return Err(Error::Argument(format!(
            "rank {} out of range for {}x{} matrix",
            r,
            z.nrows(),
            z.ncols()
        )));
    }
    let keep: Vec<usize> = (0..r).collect();
    Ok(RankRFactors::SymmetricEig {
        basis: select_columns(&vecs, &keep),
        eigenvalues: vals[..r].to_vec(),
    })
}

/// Frobenius-optimal rank-`r` projection of a symmetric matrix, in eigen form:
/// keeps the `r` eigenvalues of largest magnitude (stable order on ties) and
/// reports them sorted descending by algebraic value.
pub fn best_rank_r_sym(z: &Mat, r: usize) -> Result<RankRFactors> {
    let (vals, vecs) = full_eig_sym(z)?;
    if r == 0 || r > vals.len() {
        return Err(Error::Argument(format!(
            "rank {} out of range for {}x{} matrix",
            r,
            z.nrows(),
            z.ncols()
        )));
    }
    let mut by_mag: Vec<usize> = (0..vals.len()).collect();
    by_mag.sort_by(|&a, &b| vals[b].abs().partial_cmp(&vals[a].abs()).unwrap());
    let mut keep: Vec<usize> = by_mag[..r].to_vec();
    // Report in descending algebraic order.
    keep.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    Ok(RankRFactors::SymmetricEig {
        basis: select_columns(&vecs, &keep),
        eigenvalues: keep.iter().map(|&j| vals[j]).collect(),
    })
}

/// Orthogonal polar factor of `h`, completed through the SVD with the sign
/// convention of `best_rank_r` when `h` is rank deficient.
pub fn polar_factor(h: &Mat) -> Result<Mat> {
    ensure_nonempty(h)?;
    ensure_finite(h)?;
    let (mut u, _sigma, mut v) = gram_svd(h)?;
    apply_sign_convention(&mut u, Some(&mut v));
    Ok(&u * v.transpose())
}

fn ensure_orthonormal_columns(f: &Mat, what: &str) -> Result<()> {
    let g = f.transpose() * f;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            if (g[(i, j)] - target).abs() > 1e-8 {
                return Err(Error::Argument(format!(
                    "{what} does not have orthonormal columns"
                )));
            }
        }
    }
    Ok(())
}

/// Orthogonal `G` minimizing `‖B − A·G‖_F`: the polar factor of `AᵀB`.
pub fn procrustes(a: &Mat, b: &Mat) -> Result<AlignmentMatrix> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::Argument(format!(
            "factor shape mismatch: {}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    ensure_nonempty(a)?;
    ensure_orthonormal_columns(a, "first factor")?;
    ensure_orthonormal_columns(b, "second factor")?;
    let h = a.transpose() * b;
    Ok(AlignmentMatrix {
        rotation: polar_factor(&h)?,
    })
}

/// Frobenius norm of the sines of the principal angles between the column
/// spaces of `a` and `b`.
pub fn sin_theta(a: &Mat, b: &Mat) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::Argument("subspace dimension mismatch".into()));
    }
    ensure_nonempty(a)?;
    ensure_orthonormal_columns(a, "first factor")?;
    ensure_orthonormal_columns(b, "second factor")?;
    let cosines = singular_values(&(a.transpose() * b))?;
    let sum: f64 = cosines
        .iter()
        .map(|c| {
            let c2 = (c * c).min(1.0);
            1.0 - c2
        })
        .sum();
    Ok(sum.max(0.0).sqrt())
}

/// Serialize in the lab's text format: a `rows cols` header line followed by
/// one whitespace-separated row per line. Values round-trip exactly.
pub fn write_matrix_text(z: &Mat) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", z.nrows(), z.ncols());
    for i in 0..z.nrows() {
        let row: Vec<String> = (0..z.ncols()).map(|j| format!("{}", z[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn read_matrix_text(text: &str) -> Result<Mat> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix text".into()))?;
    let mut dims = header.split_whitespace();
    let rows: usize = dims
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse("bad matrix header".into()))?;
    let cols: usize = dims
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse("bad matrix header".into()))?;
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing row {i}")))?;
        let mut entries = line.split_whitespace();
        for j in 0..cols {
            let tok = entries
                .next()
                .ok_or_else(|| Error::Parse(format!("row {i} too short")))?;
            m[(i, j)] = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad entry at ({i}, {j})")))?;
        }
    }
    ensure_finite(&m)?;
    Ok(m)
}
