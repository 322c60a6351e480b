//! Self-contained dense numerical kernels backing the distance computations:
//! symmetric eigendecomposition, SPD factorization and solves, vector and
//! matrix p-norms, matrix-exponential action, and Gauss-Laguerre quadrature.
//!
//! Everything operates on dense storage. Problem sizes are desk scale
//! (n up to a couple thousand), where a cyclic Jacobi eigensolver is simple,
//! accurate, and fast enough; no external LAPACK backend is required.

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

#[derive(Clone, Debug, Error)]
pub enum LinalgError {
    #[error("jacobi eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix is not positive definite: pivot {pivot:.6e} at index {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("quadrature order {0} outside supported range 1..=256")]
    QuadratureOrder(usize),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Input-norm selector. Only p in {1, 2, inf} is representable; other
/// exponents are rejected at the parsing boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PNorm {
    One,
    Two,
    Inf,
}

impl PNorm {
    pub const ALL: [PNorm; 3] = [PNorm::One, PNorm::Two, PNorm::Inf];
}

impl std::str::FromStr for PNorm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "1" => Ok(PNorm::One),
            "2" => Ok(PNorm::Two),
            "inf" => Ok(PNorm::Inf),
            other => Err(format!("unsupported p {other:?}; expected 1, 2, or inf")),
        }
    }
}

impl std::fmt::Display for PNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PNorm::One => f.write_str("1"),
            PNorm::Two => f.write_str("2"),
            PNorm::Inf => f.write_str("inf"),
        }
    }
}

/// Dense symmetric matrix. Construction enforces symmetry, so downstream
/// code never re-checks it: every constructor writes both mirror entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    data: Array2<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { data: Array2::zeros((n, n)) }
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix { data: Array2::eye(n) }
    }

    /// Builds from the upper triangle: `f` is called once per (i, j) with
    /// i <= j and the value is mirrored.
    pub fn from_upper(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                data[[i, j]] = v;
                data[[j, i]] = v;
            }
        }
        SymMatrix { data }
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }

    /// Sets both (i, j) and (j, i).
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[[i, j]] = v;
        self.data[[j, i]] = v;
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn matvec(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        self.data.dot(&v)
    }

    /// Returns I + c * self.
    pub fn scaled_plus_identity(&self, c: f64) -> SymMatrix {
        let n = self.n();
        let mut data = self.data.mapv(|x| c * x);
        for i in 0..n {
            data[[i, i]] += 1.0;
        }
        SymMatrix { data }
    }

    pub fn sub(&self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { data: &self.data - &rhs.data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[[i, j]]
    }
}

/// Eigendecomposition of a symmetric matrix: `values` ascending, `vectors`
/// orthonormal with eigenvectors in columns.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl EigenPair {
    pub fn n(&self) -> usize {
        self.values.len()
    }
}

const JACOBI_MAX_SWEEPS: usize = 30;

fn off_frobenius(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += a[[i, j]] * a[[i, j]];
        }
    }
    (2.0 * s).sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps row by row over all (p, q) pivots until the off-diagonal Frobenius
/// norm drops below 1e-12 times the Frobenius norm of the input, with a cap
/// of 30 sweeps; non-convergence signals pathological input.
pub fn sym_eigen(m: &SymMatrix) -> Result<EigenPair> {
    let n = m.n();
    let mut a = m.as_array().clone();
    let mut v: Array2<f64> = Array2::eye(n);
    let threshold = 1e-12 * m.frobenius();

    let mut converged = n < 2 || off_frobenius(&a) <= threshold;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                // t = sign(theta) / (|theta| + sqrt(theta^2 + 1)), guarded
                // against theta^2 overflow.
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let r = theta.hypot(1.0);
                    if theta >= 0.0 {
                        1.0 / (theta + r)
                    } else {
                        1.0 / (theta - r)
                    }
                };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                let tau = s / (1.0 + c);

                a[[p, p]] -= t * apq;
                a[[q, q]] += t * apq;
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = a[[r, p]];
                        let arq = a[[r, q]];
                        let nrp = arp - s * (arq + tau * arp);
                        let nrq = arq + s * (arp - tau * arq);
                        a[[r, p]] = nrp;
                        a[[p, r]] = nrp;
                        a[[r, q]] = nrq;
                        a[[q, r]] = nrq;
                    }
                }
                for r in 0..n {
                    let vrp = v[[r, p]];
                    let vrq = v[[r, q]];
                    v[[r, p]] = vrp - s * (vrq + tau * vrp);
                    v[[r, q]] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
        converged = off_frobenius(&a) <= threshold;
    }
    if !converged {
        return Err(LinalgError::NoConvergence(JACOBI_MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(EigenPair { values, vectors })
}

/// Cholesky factorization of a symmetric positive-definite matrix; solves
/// reuse the factor across many right-hand sides.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    lower: Array2<f64>,
}

pub fn spd_factorize(m: &SymMatrix) -> Result<SpdFactor> {
    let n = m.n();
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(SpdFactor { lower: l })
}

impl SpdFactor {
    pub fn n(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves M x = v by forward and back substitution.
    pub fn solve(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        let n = self.n();
        let l = &self.lower;
        let mut y = v.to_owned();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }
}

pub fn vector_pnorm(v: ArrayView1<'_, f64>, p: PNorm) -> f64 {
    match p {
        PNorm::One => v.iter().map(|x| x.abs()).sum(),
        PNorm::Two => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        PNorm::Inf => v.iter().fold(0.0, |m, &x| m.max(x.abs())),
    }
}

/// Induced matrix p-norm. p=1 is the maximum absolute column sum, p=inf the
/// maximum absolute row sum; p=2 comes from the eigendecomposition, which is
/// why the argument is restricted to symmetric matrices.
pub fn matrix_pnorm(m: &SymMatrix, p: PNorm) -> Result<f64> {
    let a = m.as_array();
    match p {
        PNorm::One => Ok((0..m.n())
            .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)),
        PNorm::Inf => Ok((0..m.n())
            .map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)),
        PNorm::Two => {
            let e = sym_eigen(m)?;
            Ok(e.values.iter().fold(0.0, |mx, &x| mx.max(x.abs())))
        }
    }
}

/// Applies e^{-s L} to `v` through the eigendecomposition of L:
/// Q diag(exp(-s lambda_k)) Q^T v.
pub fn expm_action(e: &EigenPair, s: f64, v: ArrayView1<'_, f64>) -> Array1<f64> {
    debug_assert!(s >= 0.0, "expm_action wants a nonnegative scale, got {s}");
    let mut y = e.vectors.t().dot(&v);
    for (yk, &lk) in y.iter_mut().zip(e.values.iter()) {
        *yk *= (-s * lk).exp();
    }
    e.vectors.dot(&y)
}

/// Gauss-Laguerre rule for integrals of the form int_0^inf e^{-t} f(t) dt:
/// nodes ascending, weights positive, sum of weights 1.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

/// Golub-Welsch construction: nodes are the eigenvalues of the symmetric
/// tridiagonal Jacobi matrix of the Laguerre recurrence (diagonal 2k+1,
/// off-diagonal k+1), and each weight is the squared first component of the
/// matching normalized eigenvector.
pub fn gauss_laguerre(n: usize) -> Result<QuadratureRule> {
    if n == 0 || n > 256 {
        return Err(LinalgError::QuadratureOrder(n));
    }
    let diag: Vec<f64> = (0..n).map(|k| (2 * k + 1) as f64).collect();
    let off: Vec<f64> = (1..n).map(|k| k as f64).collect();
    let (values, first) = tridiagonal_eigen_first_row(diag, off)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let nodes = order.iter().map(|&i| values[i]).collect();
    let weights = order.iter().map(|&i| first[i] * first[i]).collect();
    Ok(QuadratureRule { nodes, weights })
}

const QL_MAX_ITERATIONS: usize = 50;

/// QL with implicit shifts on a symmetric tridiagonal matrix. Returns the
/// eigenvalues (unsorted) and the first component of each normalized
/// eigenvector; full eigenvectors are never materialized, which keeps the
/// quadrature construction O(n^2). `off[k]` couples rows k and k+1.
fn tridiagonal_eigen_first_row(
    mut diag: Vec<f64>,
    mut off: Vec<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    debug_assert_eq!(off.len(), n.saturating_sub(1));
    off.push(0.0);
    let mut first = vec![0.0; n];
    first[0] = 1.0;
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let scale = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * scale {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > QL_MAX_ITERATIONS {
                return Err(LinalgError::NoConvergence(QL_MAX_ITERATIONS));
            }
            // shift from the leading 2x2 block, sign chosen to avoid cancellation
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                f = first[i + 1];
                first[i + 1] = s * first[i] + c * f;
                first[i] = c * first[i] - s * f;
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok((diag, first))
}
