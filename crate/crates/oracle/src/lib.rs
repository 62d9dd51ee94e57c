//! Slow, self-contained reference decompositions for cross-checking the fast
//! paths in `mclab-core`. Everything here is plain cyclic Jacobi on
//! `Vec<Vec<f64>>`, deliberately sharing no code with the implementations it
//! is used to verify. Intended for small matrices (d ≲ 30).

/// Row-major dense matrix, `a[i][j]`.
pub type Dense = Vec<Vec<f64>>;

pub fn zeros(rows: usize, cols: usize) -> Dense {
    vec![vec![0.0; cols]; rows]
}

pub fn identity(n: usize) -> Dense {
    let mut m = zeros(n, n);
    for i in 0..n {
        m[i][i] = 1.0;
    }
    m
}

pub fn transpose(a: &Dense) -> Dense {
    let (r, c) = shape(a);
    let mut t = zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            t[j][i] = a[i][j];
        }
    }
    t
}

pub fn shape(a: &Dense) -> (usize, usize) {
    (a.len(), if a.is_empty() { 0 } else { a[0].len() })
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (ar, ac) = shape(a);
    let (br, bc) = shape(b);
    assert_eq!(ac, br, "matmul shape mismatch");
    let mut out = zeros(ar, bc);
    for i in 0..ar {
        for k in 0..ac {
            let aik = a[i][k];
            for j in 0..bc {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn sub(a: &Dense, b: &Dense) -> Dense {
    let (r, c) = shape(a);
    let mut out = zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            out[i][j] = a[i][j] - b[i][j];
        }
    }
    out
}

pub fn frobenius(a: &Dense) -> f64 {
    a.iter()
        .flat_map(|row| row.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted descending by algebraic value together with the
/// matching orthonormal eigenvectors as the columns of the returned matrix.
pub fn eigh(a: &Dense) -> (Vec<f64>, Dense) {
    let n = a.len();
    assert!(n > 0 && a[0].len() == n, "eigh expects a square matrix");
    let mut m = a.clone();
    let mut v = identity(n);
    let scale: f64 = frobenius(&m).max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[p][q].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let app = m[p][p];
                let aqq = m[q][q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| m[i][i]).collect();
    let mut vectors = zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row][col] = v[row][i];
        }
    }
    (values, vectors)
}

/// Full SVD by one-sided Jacobi. Returns `(u, sigma, v)` with singular values
/// sorted descending and `a ≈ u · diag(sigma) · vᵀ`. Columns of `u` matching a
/// zero singular value are left as zero vectors.
pub fn svd(a: &Dense) -> (Dense, Vec<f64>, Dense) {
    let (r, c) = shape(a);
    if r < c {
        let (u, s, v) = svd(&transpose(a));
        return (v, s, u);
    }
    let mut b = a.clone();
    let mut v = identity(c);
    let scale = frobenius(a).max(1.0);
    for _sweep in 0..100 {
        let mut converged = true;
        for p in 0..c {
            for q in (p + 1)..c {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..r {
                    alpha += b[i][p] * b[i][p];
                    beta += b[i][q] * b[i][q];
                    gamma += b[i][p] * b[i][q];
                }
                if gamma.abs() <= 1e-16 * scale * scale * 1e-14 + 1e-30
                    || gamma.abs() <= 1e-15 * (alpha * beta).sqrt()
                {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cos = 1.0 / (1.0 + t * t).sqrt();
                let sin = cos * t;
                for i in 0..r {
                    let bip = b[i][p];
                    let biq = b[i][q];
                    b[i][p] = cos * bip - sin * biq;
                    b[i][q] = sin * bip + cos * biq;
                }
                for i in 0..c {
                    let vip = v[i][p];
                    let viq = v[i][q];
                    v[i][p] = cos * vip - sin * viq;
                    v[i][q] = sin * vip + cos * viq;
                }
            }
        }
        if converged {
            break;
        }
    }
    let mut norms: Vec<f64> = (0..c)
        .map(|j| (0..r).map(|i| b[i][j] * b[i][j]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut u = zeros(r, c);
    let mut vv = zeros(c, c);
    let mut sigma = vec![0.0; c];
    for (col, &j) in order.iter().enumerate() {
        sigma[col] = norms[j];
        if norms[j] > 0.0 {
            for i in 0..r {
                u[i][col] = b[i][j] / norms[j];
            }
        }
        for i in 0..c {
            vv[i][col] = v[i][j];
        }
    }
    norms.sort_by(|x, y| y.partial_cmp(x).unwrap());
    (u, sigma, vv)
}

/// Singular values only, sorted descending.
pub fn singular_values(a: &Dense) -> Vec<f64> {
    svd(a).1
}

/// Largest singular value (operator norm).
pub fn operator_norm(a: &Dense) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Best rank-`r` approximation assembled from the full Jacobi SVD.
pub fn rank_r_truncation(a: &Dense, r: usize) -> Dense {
    let (u, s, v) = svd(a);
    let (rows, cols) = shape(a);
    let mut out = zeros(rows, cols);
    for k in 0..r.min(cols) {
        for i in 0..rows {
            for j in 0..cols {
                out[i][j] += s[k] * u[i][k] * v[j][k];
            }
        }
    }
    out
}

/// Best symmetric rank-`r` eigen-approximation: keep the `r` eigenvalues of
/// largest algebraic value.
pub fn top_r_eig_truncation(a: &Dense, r: usize) -> Dense {
    let n = a.len();
    let (vals, vecs) = eigh(a);
    let mut out = zeros(n, n);
    for k in 0..r.min(n) {
        for i in 0..n {
            for j in 0..n {
                out[i][j] += vals[k] * vecs[i][k] * vecs[j][k];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*state >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random_dense(r: usize, c: usize, seed: u64) -> Dense {
        let mut s = seed.max(1);
        (0..r).map(|_| (0..c).map(|_| lcg(&mut s)).collect()).collect()
    }

    #[test]
    fn eigh_reconstructs() {
        let g = random_dense(7, 7, 3);
        let mut a = zeros(7, 7);
        for i in 0..7 {
            for j in 0..7 {
                a[i][j] = 0.5 * (g[i][j] + g[j][i]);
            }
        }
        let (vals, vecs) = eigh(&a);
        let mut recon = zeros(7, 7);
        for k in 0..7 {
            for i in 0..7 {
                for j in 0..7 {
                    recon[i][j] += vals[k] * vecs[i][k] * vecs[j][k];
                }
            }
        }
        assert!(frobenius(&sub(&a, &recon)) < 1e-12);
        for k in 1..7 {
            assert!(vals[k - 1] >= vals[k]);
        }
    }

    #[test]
    fn svd_reconstructs() {
        let a = random_dense(6, 4, 9);
        let (u, s, v) = svd(&a);
        let mut recon = zeros(6, 4);
        for k in 0..4 {
            for i in 0..6 {
                for j in 0..4 {
                    recon[i][j] += s[k] * u[i][k] * v[j][k];
                }
            }
        }
        assert!(frobenius(&sub(&a, &recon)) < 1e-12);
        let utu = matmul(&transpose(&u), &u);
        for i in 0..4 {
            assert!((utu[i][i] - 1.0).abs() < 1e-12);
        }
    }
}
