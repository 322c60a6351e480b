//! Distances between signals living on the nodes of a weighted undirected
//! graph, driven by heat diffusion.
//!
//! A signal is a real vector indexed by graph nodes. Two notions of distance
//! are provided, both parameterized by a diffusion constant `alpha` and an
//! input p-norm (p in {1, 2, inf}):
//!
//! * the superposition distance, the exponentially discounted time integral
//!   of the input-norm gap between the two diffusing heat profiles, and
//! * the diffusion distance, the input norm of `(I + alpha L)^{-1} (r - s)`,
//!   a closed form obtained by moving the integral inside the norm.
//!
//! The diffusion distance never exceeds the superposition distance, and both
//! are genuine metrics induced by norms.
//!
//! Module map:
//!
//! * [`graph`]: graph construction, Laplacians, generators, perturbation;
//! * [`linalg`]: dense symmetric eigensolver, SPD solves, p-norms,
//!   matrix-exponential action, Gauss-Laguerre quadrature;
//! * [`diffuse`]: the diffusion operator and both distances/norms;
//! * [`analysis`]: pairwise distance matrices, k-NN LOOCV, classical MDS,
//!   and the edge-perturbation stability experiment;
//! * [`datasets`]: IDX image ingestion and synthetic signal generators.

pub mod analysis;
pub mod datasets;
pub mod diffuse;
pub mod graph;
pub mod linalg;

pub use analysis::{DistanceMatrix, KnnReport, Metric, PerturbationSample};
pub use diffuse::{DiffusionOperator, SignalSet};
pub use graph::{Graph, PerturbationConfig};
pub use linalg::{PNorm, QuadratureRule};
