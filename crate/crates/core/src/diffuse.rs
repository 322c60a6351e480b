//! Heat diffusion on a graph and the two distances built on it.
//!
//! For a graph with Laplacian L and diffusivity alpha > 0:
//!
//! * `diffuse` evolves a signal to time t via exp(-alpha L t).
//! * the superposition distance integrates the p-norm of the diffusing
//!   difference against an exponential time weight,
//!   integral of exp(-t) * ||exp(-alpha L t)(r - s)||_p dt over t >= 0,
//!   discretized with Gauss-Laguerre quadrature;
//! * the diffusion distance is the closed form ||(I + alpha L)^{-1}(r - s)||_p,
//!   computed with a Cholesky solve.
//!
//! `superposition_oracle` evaluates the same integral by adaptive Simpson
//! refinement on a truncated interval; it exists to validate the quadrature,
//! not for production use.

use crate::graph::Graph;
use crate::linalg::{
    expm_action, spd_factorize, sym_eigen, vector_pnorm, EigenPair, LinalgError, PNorm,
    QuadratureRule, SpdFactor,
};
use ndarray::{Array1, ArrayView1};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Clone, Debug, Error)]
pub enum DiffuseError {
    #[error("diffusivity {0} must be positive and finite")]
    InvalidAlpha(f64),
    #[error("diffusion time {0} must be finite and nonnegative")]
    InvalidTime(f64),
    #[error("oracle tolerance {0} must be positive and finite")]
    InvalidTol(f64),
    #[error("expected a length-{expected} signal, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("integral oracle failed to reach tolerance {tol}")]
    OracleDivergence { tol: f64 },
    #[error("signal set must contain at least one nonempty signal")]
    EmptySignalSet,
    #[error("signal {index} has length {got}, expected {expected}")]
    SignalLength { index: usize, expected: usize, got: usize },
    #[error("{signals} signals but {labels} labels")]
    LabelCount { signals: usize, labels: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, DiffuseError>;

/// Diffusion on a fixed graph with fixed diffusivity. The resolvent
/// I + alpha L is factorized on construction; the eigendecomposition of L
/// (needed only for exponential actions) is computed on first use.
#[derive(Debug)]
pub struct DiffusionOperator {
    graph: Graph,
    alpha: f64,
    factor: SpdFactor,
    eig: OnceLock<crate::linalg::Result<EigenPair>>,
}

impl DiffusionOperator {
    pub fn new(graph: Graph, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(DiffuseError::InvalidAlpha(alpha));
        }
        let factor = spd_factorize(&graph.laplacian().scaled_plus_identity(alpha))?;
        Ok(DiffusionOperator { graph, alpha, factor, eig: OnceLock::new() })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn eigen(&self) -> Result<&EigenPair> {
        self.eig
            .get_or_init(|| sym_eigen(&self.graph.laplacian()))
            .as_ref()
            .map_err(|e| DiffuseError::from(e.clone()))
    }

    fn check_len(&self, got: usize) -> Result<()> {
        let expected = self.graph.n();
        if got != expected {
            return Err(DiffuseError::Dimension { expected, got });
        }
        Ok(())
    }

    /// Signal at time t under dr/dt = -alpha L r, i.e. exp(-alpha L t) r.
    pub fn diffuse(&self, r: ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
        self.check_len(r.len())?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(DiffuseError::InvalidTime(t));
        }
        Ok(expm_action(self.eigen()?, self.alpha * t, r))
    }

    /// ||(I + alpha L)^{-1}(r - s)||_p.
    pub fn diffusion_distance(
        &self,
        r: ArrayView1<f64>,
        s: ArrayView1<f64>,
        p: PNorm,
    ) -> Result<f64> {
        self.check_len(r.len())?;
        self.check_len(s.len())?;
        let d = &r - &s;
        self.diffusion_norm(d.view(), p)
    }

    /// Diffusion distance of a precomputed difference vector.
    pub fn diffusion_norm(&self, d: ArrayView1<f64>, p: PNorm) -> Result<f64> {
        self.check_len(d.len())?;
        Ok(vector_pnorm(self.factor.solve(d).view(), p))
    }

    /// Gauss-Laguerre discretization of the superposition integral:
    /// sum_k w_k ||exp(-alpha x_k L)(r - s)||_p.
    pub fn superposition_distance(
        &self,
        r: ArrayView1<f64>,
        s: ArrayView1<f64>,
        p: PNorm,
        quad: &QuadratureRule,
    ) -> Result<f64> {
        self.check_len(r.len())?;
        self.check_len(s.len())?;
        let d = &r - &s;
        self.superposition_norm(d.view(), p, quad)
    }

    /// Superposition distance of a precomputed difference vector.
    pub fn superposition_norm(
        &self,
        d: ArrayView1<f64>,
        p: PNorm,
        quad: &QuadratureRule,
    ) -> Result<f64> {
        self.check_len(d.len())?;
        if d.iter().all(|&x| x == 0.0) {
            return Ok(0.0);
        }
        let eig = self.eigen()?;
        // the eigenbasis coefficients of d are shared by every quadrature node
        let coeffs = eig.vectors.t().dot(&d);
        Ok(quad
            .nodes
            .iter()
            .zip(&quad.weights)
            .map(|(&x, &w)| {
                let damped = &coeffs * &eig.values.mapv(|l| (-self.alpha * x * l).exp());
                w * vector_pnorm(eig.vectors.dot(&damped).view(), p)
            })
            .sum())
    }

    /// Quadrature-free reference value of the superposition integral.
    ///
    /// Truncates at T = ln(||d||_p / (tol/2)), where the tail is below tol/2
    /// because the integrand is bounded by exp(-t) ||d||_p, then refines a
    /// composite Simpson rule on [0, T] until successive halvings agree to
    /// tol/2.
    pub fn superposition_oracle(
        &self,
        r: ArrayView1<f64>,
        s: ArrayView1<f64>,
        p: PNorm,
        tol: f64,
    ) -> Result<f64> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(DiffuseError::InvalidTol(tol));
        }
        self.check_len(r.len())?;
        self.check_len(s.len())?;
        let d = &r - &s;
        if d.iter().all(|&x| x == 0.0) {
            return Ok(0.0);
        }
        let eig = self.eigen()?;
        let d0 = vector_pnorm(d.view(), p);
        let upper = (d0 / (tol / 2.0)).ln().max(1.0);
        let coeffs = eig.vectors.t().dot(&d);
        let n = d.len();
        let q = eig.vectors.as_slice().expect("eigenvector matrix is contiguous");
        // buffers reused across the ~10^4 integrand evaluations a run takes
        let mut evolved = vec![0.0; n];
        let mut f = |t: f64| {
            evolved.fill(0.0);
            for j in 0..n {
                let damped = coeffs[j] * (-self.alpha * t * eig.values[j]).exp();
                for (i, e) in evolved.iter_mut().enumerate() {
                    *e += q[i * n + j] * damped;
                }
            }
            (-t).exp() * vector_pnorm(ArrayView1::from(&evolved[..]), p)
        };
        // the contraction bound guarantees the discarded tail stays below tol/2
        debug_assert!(f(upper) <= tol);
        let mut intervals = 16usize;
        let mut prev = composite_simpson(&mut f, upper, intervals);
        loop {
            intervals *= 2;
            let cur = composite_simpson(&mut f, upper, intervals);
            if (cur - prev).abs() <= tol / 2.0 {
                return Ok(cur);
            }
            if intervals >= 1 << 20 {
                return Err(DiffuseError::OracleDivergence { tol });
            }
            prev = cur;
        }
    }

    /// (I + alpha L)^{-1} r, the feature map whose pairwise p-norm gaps equal
    /// diffusion distances.
    pub fn feature_transform(&self, r: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_len(r.len())?;
        Ok(self.factor.solve(r))
    }

    pub fn transform_set(&self, set: &SignalSet) -> Result<SignalSet> {
        let signals = set
            .signals()
            .iter()
            .map(|r| self.feature_transform(r.view()))
            .collect::<Result<Vec<_>>>()?;
        SignalSet::new(signals, set.labels().map(<[usize]>::to_vec))
    }
}

fn composite_simpson(f: &mut impl FnMut(f64) -> f64, upper: f64, intervals: usize) -> f64 {
    debug_assert!(intervals.is_multiple_of(2));
    let h = upper / intervals as f64;
    let mut acc = f(0.0) + f(upper);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * h);
    }
    acc * h / 3.0
}

/// A batch of equal-length signals with optional per-signal class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalSet {
    n: usize,
    signals: Vec<Array1<f64>>,
    labels: Option<Vec<usize>>,
}

impl SignalSet {
    pub fn new(signals: Vec<Array1<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        let n = match signals.first() {
            Some(first) if !first.is_empty() => first.len(),
            _ => return Err(DiffuseError::EmptySignalSet),
        };
        for (index, s) in signals.iter().enumerate() {
            if s.len() != n {
                return Err(DiffuseError::SignalLength { index, expected: n, got: s.len() });
            }
        }
        if let Some(l) = &labels {
            if l.len() != signals.len() {
                return Err(DiffuseError::LabelCount { signals: signals.len(), labels: l.len() });
            }
        }
        Ok(SignalSet { n, signals, labels })
    }

    /// Signal length (number of graph nodes).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of signals.
    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn signals(&self) -> &[Array1<f64>] {
        &self.signals
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }
}
