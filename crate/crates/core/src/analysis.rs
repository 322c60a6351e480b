//! Experiment layer: pairwise distance matrices, k-NN leave-one-out
//! cross-validation, classical MDS embeddings, and the perturbation-stability
//! experiment. Matrix fills and perturbation reps run in parallel; every rep
//! derives its RNG substream from (seed, rep index), so results do not depend
//! on worker scheduling.

use crate::diffuse::{DiffuseError, DiffusionOperator, SignalSet};
use crate::graph::{Graph, PerturbationConfig};
use crate::linalg::{
    matrix_pnorm, sym_eigen, vector_pnorm, LinalgError, PNorm, QuadratureRule, SymMatrix,
};
use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Clone, Debug, Error)]
pub enum AnalysisError {
    #[error("unknown metric {0:?} (expected input, diffusion, or superposition)")]
    UnknownMetric(String),
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("k = {k} outside 1..{n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("embedding dimension {dim} outside 1..={n}")]
    DimOutOfRange { dim: usize, n: usize },
    #[error("reps must be at least 1")]
    ZeroReps,
    #[error(transparent)]
    Diffuse(#[from] DiffuseError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Which distance fills a matrix: the plain input p-norm, the diffusion
/// distance, or the superposition distance.
#[derive(Clone, Copy, Debug, Eq, PartialEq)]
pub enum Metric {
    Input,
    Diffusion,
    Superposition,
}

impl FromStr for Metric {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(Metric::Input),
            "diff" | "diffusion" => Ok(Metric::Diffusion),
            "sps" | "superposition" => Ok(Metric::Superposition),
            other => Err(AnalysisError::UnknownMetric(other.to_string())),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Input => "input",
            Metric::Diffusion => "diffusion",
            Metric::Superposition => "superposition",
        })
    }
}

/// Symmetric nonnegative distance matrix with zero diagonal, tagged with the
/// metric and parameters that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    d: Array2<f64>,
    metric: Metric,
    p: PNorm,
    alpha: f64,
}

impl DistanceMatrix {
    pub fn new(mut d: Array2<f64>, metric: Metric, p: PNorm, alpha: f64) -> Result<Self> {
        let (rows, cols) = d.dim();
        if rows == 0 || rows != cols {
            return Err(AnalysisError::Csv {
                line: 0,
                msg: format!("distance matrix is {rows}x{cols}, expected square and nonempty"),
            });
        }
        for i in 0..rows {
            for j in 0..cols {
                let v = d[[i, j]];
                if !v.is_finite() || v < 0.0 {
                    return Err(AnalysisError::Csv {
                        line: i + 1,
                        msg: format!("entry ({i}, {j}) = {v} is not a finite nonnegative value"),
                    });
                }
                if i == j && v != 0.0 {
                    return Err(AnalysisError::Csv {
                        line: i + 1,
                        msg: format!("diagonal entry ({i}, {i}) = {v} must be 0"),
                    });
                }
                if j > i {
                    let w = d[[j, i]];
                    if (v - w).abs() > 1e-9 * v.abs().max(1.0) {
                        return Err(AnalysisError::Csv {
                            line: i + 1,
                            msg: format!("asymmetric at ({i}, {j}): {v} vs {w}"),
                        });
                    }
                }
            }
        }
        // canonicalize: lower triangle mirrors the upper one exactly
        for i in 0..rows {
            for j in (i + 1)..cols {
                d[[j, i]] = d[[i, j]];
            }
        }
        Ok(DistanceMatrix { d, metric, p, alpha })
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[[i, j]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.d
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn p(&self) -> PNorm {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Header-less CSV: n rows of n comma-separated values.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            for j in 0..self.n() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.d[[i, j]]);
            }
            out.push('\n');
        }
        out
    }

    /// Parses the `to_csv` format; the metric/p/alpha tags are supplied by
    /// the caller since the CSV carries only the values.
    pub fn from_csv(text: &str, metric: Metric, p: PNorm, alpha: f64) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let row = raw
                .split(',')
                .map(|f| {
                    let v: f64 = f.trim().parse().map_err(|_| AnalysisError::Csv {
                        line,
                        msg: format!("bad value {f:?}"),
                    })?;
                    Ok(v)
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(AnalysisError::Csv {
                        line,
                        msg: format!("row has {} values, expected {}", row.len(), first.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(AnalysisError::Csv { line: 0, msg: "empty distance matrix".into() });
        }
        let n = rows[0].len();
        if rows.len() != n {
            return Err(AnalysisError::Csv {
                line: 0,
                msg: format!("{} rows of {} values each", rows.len(), n),
            });
        }
        let mut d = Array2::zeros((n, n));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                d[[i, j]] = v;
            }
        }
        DistanceMatrix::new(d, metric, p, alpha)
    }
}

/// Fills the full pairwise distance matrix for a signal set under one shared
/// operator. Pairs are computed in parallel.
pub fn pairwise_distances(
    op: &DiffusionOperator,
    set: &SignalSet,
    metric: Metric,
    p: PNorm,
    quad: &QuadratureRule,
) -> Result<DistanceMatrix> {
    if set.n() != op.graph().n() {
        return Err(DiffuseError::Dimension { expected: op.graph().n(), got: set.n() }.into());
    }
    let m = set.len();
    let signals = set.signals();
    let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            pairs.push((i, j));
        }
    }
    let values = pairs
        .par_iter()
        .map(|&(i, j)| {
            let r = signals[i].view();
            let s = signals[j].view();
            match metric {
                Metric::Input => Ok(vector_pnorm((&r - &s).view(), p)),
                Metric::Diffusion => op.diffusion_distance(r, s, p),
                Metric::Superposition => op.superposition_distance(r, s, p, quad),
            }
        })
        .collect::<std::result::Result<Vec<f64>, DiffuseError>>()?;
    let mut d = Array2::zeros((m, m));
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        d[[i, j]] = v;
        d[[j, i]] = v;
    }
    DistanceMatrix::new(d, metric, p, op.alpha())
}

/// Leave-one-out k-NN report. `classes` lists the distinct labels in
/// ascending order; `confusion[[a, b]]` counts held-out points of true class
/// `classes[a]` predicted as `classes[b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnReport {
    pub k: usize,
    pub accuracy: f64,
    pub classes: Vec<usize>,
    pub per_class: Vec<f64>,
    pub confusion: Array2<usize>,
    pub predictions: Vec<usize>,
}

/// Leave-one-out cross-validation of a k-NN classifier over a precomputed
/// distance matrix. Neighbor ranking breaks distance ties by the smaller
/// index; vote ties go to the class of the nearest neighbor among the tied
/// classes. Both rules are deterministic, so reports are reproducible.
pub fn knn_loocv(dm: &DistanceMatrix, labels: &[usize], k: usize) -> Result<KnnReport> {
    let n = dm.n();
    if labels.len() != n {
        return Err(AnalysisError::LabelCount { expected: n, got: labels.len() });
    }
    if k == 0 || k >= n {
        return Err(AnalysisError::KOutOfRange { k, n });
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let class_of = |label: usize| classes.binary_search(&label).expect("label seen above");

    let mut confusion = Array2::zeros((classes.len(), classes.len()));
    let mut predictions = Vec::with_capacity(n);
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&a, &b| dm.get(i, a).total_cmp(&dm.get(i, b)).then(a.cmp(&b)));
        let neighbors = &order[..k];

        let mut votes = vec![0usize; classes.len()];
        for &j in neighbors {
            votes[class_of(labels[j])] += 1;
        }
        let top = *votes.iter().max().expect("k >= 1");
        let tied: Vec<usize> = (0..classes.len()).filter(|&c| votes[c] == top).collect();
        let predicted = if tied.len() == 1 {
            tied[0]
        } else {
            let nearest = neighbors
                .iter()
                .find(|&&j| tied.contains(&class_of(labels[j])))
                .expect("tied classes all have a voter");
            class_of(labels[*nearest])
        };
        predictions.push(classes[predicted]);
        confusion[[class_of(labels[i]), predicted]] += 1;
    }

    let correct: usize = (0..classes.len()).map(|c| confusion[[c, c]]).sum();
    let per_class = (0..classes.len())
        .map(|c| {
            let total: usize = confusion.row(c).sum();
            confusion[[c, c]] as f64 / total as f64
        })
        .collect();
    Ok(KnnReport {
        k,
        accuracy: correct as f64 / n as f64,
        classes,
        per_class,
        confusion,
        predictions,
    })
}

/// Classical MDS: double-center the squared distances into a Gram matrix,
/// eigendecompose, and scale the top-dim eigenvectors by sqrt(max(lambda, 0)).
/// Each output axis is sign-fixed so its largest-magnitude entry is positive.
pub fn classical_mds(dm: &DistanceMatrix, dim: usize) -> Result<Array2<f64>> {
    let n = dm.n();
    if dim == 0 || dim > n {
        return Err(AnalysisError::DimOutOfRange { dim, n });
    }
    let mut sq = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            sq[[i, j]] = dm.get(i, j) * dm.get(i, j);
        }
    }
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand_mean = row_mean.iter().sum::<f64>() / n as f64;
    let b = SymMatrix::from_upper(n, |i, j| {
        -0.5 * (sq[[i, j]] - row_mean[i] - row_mean[j] + grand_mean)
    });
    let eig = sym_eigen(&b)?;

    let mut coords = Array2::zeros((n, dim));
    for axis in 0..dim {
        let idx = n - 1 - axis;
        let scale = eig.values[idx].max(0.0).sqrt();
        let col = eig.vectors.column(idx);
        let mut lead = 0;
        for i in 1..n {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[[i, axis]] = sign * scale * col[i];
        }
    }
    Ok(coords)
}

/// One perturbation trial: the Laplacian perturbation norm alongside the
/// absolute and normalized distance deviations for both metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationSample {
    pub e_norm: f64,
    pub dev_diff: f64,
    pub dev_sps: f64,
    pub norm_dev_diff: f64,
    pub norm_dev_sps: f64,
}

/// Repeatedly perturbs the edge weights and records how much both distances
/// between r and s move. Rep `i` draws from substream `i` of the configured
/// seed, so the sample list is reproducible under any thread count.
#[allow(clippy::too_many_arguments)]
pub fn stability_experiment(
    g: &Graph,
    r: ArrayView1<f64>,
    s: ArrayView1<f64>,
    cfg: &PerturbationConfig,
    reps: usize,
    p: PNorm,
    alpha: f64,
    quad: &QuadratureRule,
) -> Result<Vec<PerturbationSample>> {
    if reps == 0 {
        return Err(AnalysisError::ZeroReps);
    }
    let base = DiffusionOperator::new(g.clone(), alpha)?;
    let base_diff = base.diffusion_distance(r, s, p)?;
    let base_sps = base.superposition_distance(r, s, p, quad)?;

    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
            rng.set_stream(rep as u64);
            let (perturbed, e) = g.perturb(cfg, &mut rng);
            let e_norm = matrix_pnorm(&e, p)?;
            let op = DiffusionOperator::new(perturbed, alpha)?;
            let dev_diff = (op.diffusion_distance(r, s, p)? - base_diff).abs();
            let dev_sps = (op.superposition_distance(r, s, p, quad)? - base_sps).abs();
            let (norm_dev_diff, norm_dev_sps) =
                if e_norm == 0.0 { (0.0, 0.0) } else { (dev_diff / e_norm, dev_sps / e_norm) };
            Ok(PerturbationSample { e_norm, dev_diff, dev_sps, norm_dev_diff, norm_dev_sps })
        })
        .collect()
}

/// Samples CSV: fixed header, one row per rep.
pub fn samples_to_csv(samples: &[PerturbationSample]) -> String {
    let mut out = String::from("e_norm,dev_diff,dev_sps,norm_dev_diff,norm_dev_sps\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.e_norm, s.dev_diff, s.dev_sps, s.norm_dev_diff, s.norm_dev_sps
        );
    }
    out
}

/// Coordinates CSV: header `x0..x{dim-1}` plus a trailing `label` column when
/// labels are given.
pub fn coords_to_csv(coords: &Array2<f64>, labels: Option<&[usize]>) -> Result<String> {
    let (n, dim) = coords.dim();
    if let Some(l) = labels {
        if l.len() != n {
            return Err(AnalysisError::LabelCount { expected: n, got: l.len() });
        }
    }
    let mut out = String::new();
    for axis in 0..dim {
        if axis > 0 {
            out.push(',');
        }
        let _ = write!(out, "x{axis}");
    }
    if labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for i in 0..n {
        for axis in 0..dim {
            if axis > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", coords[[i, axis]]);
        }
        if let Some(l) = labels {
            let _ = write!(out, ",{}", l[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{figure1, Graph};
    use crate::linalg::gauss_laguerre;
    use ndarray::{array, Array1};
    use rand::Rng;

    fn fig1_matrix(metric: Metric) -> DistanceMatrix {
        let (g, [r, gr, y]) = figure1();
        let op = DiffusionOperator::new(g, 1.0).unwrap();
        let set = SignalSet::new(vec![r, gr, y], None).unwrap();
        let quad = gauss_laguerre(64).unwrap();
        pairwise_distances(&op, &set, metric, PNorm::Two, &quad).unwrap()
    }

    fn euclidean_matrix(points: &Array2<f64>) -> DistanceMatrix {
        let n = points.nrows();
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let gap = &points.row(i) - &points.row(j);
                d[[i, j]] = gap.dot(&gap).sqrt();
            }
        }
        DistanceMatrix::new(d, Metric::Input, PNorm::Two, 1.0).unwrap()
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("input".parse::<Metric>().unwrap(), Metric::Input);
        assert_eq!("diff".parse::<Metric>().unwrap(), Metric::Diffusion);
        assert_eq!("diffusion".parse::<Metric>().unwrap(), Metric::Diffusion);
        assert_eq!("sps".parse::<Metric>().unwrap(), Metric::Superposition);
        assert_eq!("superposition".parse::<Metric>().unwrap(), Metric::Superposition);
        assert!("l2".parse::<Metric>().is_err());
        assert_eq!(Metric::Superposition.to_string(), "superposition");
    }

    #[test]
    fn pairwise_matches_worked_example() {
        let dm = fig1_matrix(Metric::Diffusion);
        assert_eq!(dm.n(), 3);
        assert!((dm.get(0, 1) - 0.6637870984755372).abs() <= 1e-9);
        assert!((dm.get(0, 2) - 0.6981348653730404).abs() <= 1e-9);
        assert!((dm.get(1, 2) - 0.4175869642943846).abs() <= 1e-9);
        for i in 0..3 {
            assert_eq!(dm.get(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(dm.get(i, j), dm.get(j, i));
            }
        }

        let dm = fig1_matrix(Metric::Superposition);
        assert!((dm.get(0, 1) - 0.7006354720786063).abs() <= 1e-9);
        assert!((dm.get(0, 2) - 0.7417865641013036).abs() <= 1e-9);
        assert!((dm.get(1, 2) - 0.4555979531860362).abs() <= 1e-9);

        let dm = fig1_matrix(Metric::Input);
        let root2 = 2.0f64.sqrt();
        assert!((dm.get(0, 1) - root2).abs() <= 1e-15);
        assert!((dm.get(1, 2) - root2).abs() <= 1e-15);
    }

    #[test]
    fn pairwise_single_signal_is_zero_matrix() {
        let (g, [r, _, _]) = figure1();
        let op = DiffusionOperator::new(g, 1.0).unwrap();
        let set = SignalSet::new(vec![r], None).unwrap();
        let quad = gauss_laguerre(8).unwrap();
        let dm = pairwise_distances(&op, &set, Metric::Diffusion, PNorm::Two, &quad).unwrap();
        assert_eq!(dm.n(), 1);
        assert_eq!(dm.get(0, 0), 0.0);
    }

    #[test]
    fn pairwise_input_equals_diffusion_on_edgeless_graph() {
        let g = Graph::new(3, []).unwrap();
        let op = DiffusionOperator::new(g, 2.0).unwrap();
        let set = SignalSet::new(
            vec![array![1.0, 0.0, 2.0], array![0.0, 1.0, -1.0], array![3.0, 3.0, 3.0]],
            None,
        )
        .unwrap();
        let quad = gauss_laguerre(8).unwrap();
        let input = pairwise_distances(&op, &set, Metric::Input, PNorm::Two, &quad).unwrap();
        let diff = pairwise_distances(&op, &set, Metric::Diffusion, PNorm::Two, &quad).unwrap();
        assert_eq!(input.as_array(), diff.as_array());
    }

    #[test]
    fn pairwise_rejects_mismatched_signals() {
        let (g, _) = figure1();
        let op = DiffusionOperator::new(g, 1.0).unwrap();
        let set = SignalSet::new(vec![array![1.0, 0.0]], None).unwrap();
        let quad = gauss_laguerre(8).unwrap();
        assert!(matches!(
            pairwise_distances(&op, &set, Metric::Diffusion, PNorm::Two, &quad),
            Err(AnalysisError::Diffuse(DiffuseError::Dimension { .. }))
        ));
    }

    #[test]
    fn distance_matrix_csv_round_trip() {
        let dm = fig1_matrix(Metric::Diffusion);
        let csv = dm.to_csv();
        assert_eq!(csv.lines().count(), 3);
        let back = DistanceMatrix::from_csv(&csv, Metric::Diffusion, PNorm::Two, 1.0).unwrap();
        assert_eq!(back, dm);
    }

    #[test]
    fn distance_matrix_rejects_malformed_input() {
        let ok = "0,1\n1,0\n";
        assert!(DistanceMatrix::from_csv(ok, Metric::Input, PNorm::Two, 1.0).is_ok());
        for bad in
            ["", "0,1\n", "0,x\nx,0\n", "0,1\n2,0\n", "0,-1\n-1,0\n", "1,1\n1,0\n", "0,1,2\n1,0\n"]
        {
            assert!(
                DistanceMatrix::from_csv(bad, Metric::Input, PNorm::Two, 1.0).is_err(),
                "accepted {bad:?}"
            );
        }
    }

    #[test]
    fn knn_two_points_with_opposite_labels() {
        let dm = DistanceMatrix::from_csv("0,1\n1,0\n", Metric::Input, PNorm::Two, 1.0).unwrap();
        let report = knn_loocv(&dm, &[0, 1], 1).unwrap();
        assert_eq!(report.accuracy, 0.0);
        assert_eq!(report.predictions, vec![1, 0]);
        assert_eq!(report.confusion[[0, 1]], 1);
        assert_eq!(report.confusion[[1, 0]], 1);
    }

    #[test]
    fn knn_duplicated_signals_classify_perfectly() {
        let (g, [r, gr, y]) = figure1();
        let op = DiffusionOperator::new(g, 1.0).unwrap();
        let signals = vec![r.clone(), r, gr.clone(), gr, y.clone(), y];
        let set = SignalSet::new(signals, None).unwrap();
        let quad = gauss_laguerre(16).unwrap();
        let dm = pairwise_distances(&op, &set, Metric::Diffusion, PNorm::Two, &quad).unwrap();
        let labels = [0, 0, 1, 1, 2, 2];
        for k in [1, 3, 5] {
            let report = knn_loocv(&dm, &labels, k).unwrap();
            if k == 1 {
                assert_eq!(report.accuracy, 1.0);
                assert_eq!(report.per_class, vec![1.0, 1.0, 1.0]);
            }
            assert_eq!(report.classes, vec![0, 1, 2]);
            let trace: usize = (0..3).map(|c| report.confusion[[c, c]]).sum();
            assert_eq!(report.accuracy, trace as f64 / 6.0);
            for c in 0..3 {
                assert_eq!(report.confusion.row(c).sum(), 2);
            }
        }
    }

    #[test]
    fn knn_distance_ties_prefer_smaller_index() {
        // point 0 is equidistant from 1 and 2; the tie goes to index 1
        let csv = "0,1,1\n1,0,5\n1,5,0\n";
        let dm = DistanceMatrix::from_csv(csv, Metric::Input, PNorm::Two, 1.0).unwrap();
        let report = knn_loocv(&dm, &[9, 7, 3], 1).unwrap();
        assert_eq!(report.predictions[0], 7);
    }

    #[test]
    fn knn_vote_ties_go_to_nearest_tied_class() {
        // point 0's two nearest neighbors split 1-1; class of the nearer wins
        let csv = "0,1,2,5\n1,0,5,2\n2,5,0,1\n5,2,1,0\n";
        let dm = DistanceMatrix::from_csv(csv, Metric::Input, PNorm::Two, 1.0).unwrap();
        let report = knn_loocv(&dm, &[0, 1, 0, 1], 2).unwrap();
        // neighbors of 0: j=1 (d=1, class 1), j=2 (d=2, class 0)
        assert_eq!(report.predictions[0], 1);
    }

    #[test]
    fn knn_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 12;
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let v = rng.random_range(0.1..5.0);
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let dm = DistanceMatrix::new(d.clone(), Metric::Input, PNorm::Two, 1.0).unwrap();
        let report = knn_loocv(&dm, &labels, 3).unwrap();

        // rotate indices by 5
        let perm: Vec<usize> = (0..n).map(|i| (i + 5) % n).collect();
        let mut dp = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                dp[[perm[i], perm[j]]] = d[[i, j]];
            }
        }
        let mut labels_p = vec![0usize; n];
        for (&to, &label) in perm.iter().zip(&labels) {
            labels_p[to] = label;
        }
        let dmp = DistanceMatrix::new(dp, Metric::Input, PNorm::Two, 1.0).unwrap();
        let report_p = knn_loocv(&dmp, &labels_p, 3).unwrap();
        assert_eq!(report.accuracy, report_p.accuracy);
        for (&pred, &to) in report.predictions.iter().zip(&perm) {
            assert_eq!(pred, report_p.predictions[to]);
        }
    }

    #[test]
    fn knn_rejects_bad_arguments() {
        let dm = DistanceMatrix::from_csv("0,1\n1,0\n", Metric::Input, PNorm::Two, 1.0).unwrap();
        assert!(matches!(
            knn_loocv(&dm, &[0], 1),
            Err(AnalysisError::LabelCount { expected: 2, got: 1 })
        ));
        assert!(matches!(knn_loocv(&dm, &[0, 1], 0), Err(AnalysisError::KOutOfRange { .. })));
        assert!(matches!(knn_loocv(&dm, &[0, 1], 2), Err(AnalysisError::KOutOfRange { .. })));
    }

    #[test]
    fn mds_equilateral_triangle() {
        let csv = "0,1,1\n1,0,1\n1,1,0\n";
        let dm = DistanceMatrix::from_csv(csv, Metric::Input, PNorm::Two, 1.0).unwrap();
        let coords = classical_mds(&dm, 2).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let gap = &coords.row(i) - &coords.row(j);
                assert!((gap.dot(&gap).sqrt() - 1.0).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn mds_zero_matrix_gives_zero_coordinates() {
        let dm = DistanceMatrix::from_csv("0,0\n0,0\n", Metric::Input, PNorm::Two, 1.0).unwrap();
        let coords = classical_mds(&dm, 2).unwrap();
        assert!(coords.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mds_recovers_planar_configurations() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 9;
        let points = Array2::from_shape_fn((n, 2), |_| rng.random_range(-2.0..2.0));
        let dm = euclidean_matrix(&points);
        let coords = classical_mds(&dm, 2).unwrap();
        for i in 0..n {
            for j in 0..n {
                let gap = &coords.row(i) - &coords.row(j);
                assert!((gap.dot(&gap).sqrt() - dm.get(i, j)).abs() <= 1e-8, "pair ({i}, {j})");
            }
        }
    }

    #[test]
    fn mds_sign_convention_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let points = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.0..1.0));
        let dm = euclidean_matrix(&points);
        let a = classical_mds(&dm, 2).unwrap();
        let b = classical_mds(&dm, 2).unwrap();
        assert_eq!(a, b);
        for axis in 0..2 {
            let col = a.column(axis);
            let mut lead = 0;
            for i in 1..6 {
                if col[i].abs() > col[lead].abs() {
                    lead = i;
                }
            }
            assert!(col[lead] >= 0.0);
        }
    }

    #[test]
    fn mds_rejects_bad_dimension() {
        let dm = DistanceMatrix::from_csv("0,1\n1,0\n", Metric::Input, PNorm::Two, 1.0).unwrap();
        assert!(matches!(
            classical_mds(&dm, 0),
            Err(AnalysisError::DimOutOfRange { dim: 0, n: 2 })
        ));
        assert!(matches!(
            classical_mds(&dm, 3),
            Err(AnalysisError::DimOutOfRange { dim: 3, n: 2 })
        ));
    }

    #[test]
    fn stability_zero_delta_gives_zero_deviations() {
        let (g, [r, gr, _]) = figure1();
        let cfg = PerturbationConfig::new(0.0, 0).unwrap();
        let quad = gauss_laguerre(32).unwrap();
        let samples =
            stability_experiment(&g, r.view(), gr.view(), &cfg, 5, PNorm::Two, 1.0, &quad).unwrap();
        assert_eq!(samples.len(), 5);
        for s in samples {
            assert_eq!(s.e_norm, 0.0);
            assert_eq!(s.dev_diff, 0.0);
            assert_eq!(s.dev_sps, 0.0);
            assert_eq!(s.norm_dev_diff, 0.0);
            assert_eq!(s.norm_dev_sps, 0.0);
        }
    }

    #[test]
    fn stability_respects_theoretical_bounds() {
        let (g, [r, gr, _]) = figure1();
        let cfg = PerturbationConfig::new(0.05, 1).unwrap();
        let quad = gauss_laguerre(64).unwrap();
        let p = PNorm::Two;
        let gamma = vector_pnorm(r.view(), p).max(vector_pnorm(gr.view(), p));
        let samples =
            stability_experiment(&g, r.view(), gr.view(), &cfg, 100, p, 1.0, &quad).unwrap();
        for s in &samples {
            assert!(s.e_norm > 0.0);
            assert!(s.norm_dev_diff < 2.0);
            assert!(s.norm_dev_sps < 2.0);
            assert!(s.dev_sps <= 2.0 * gamma * s.e_norm + 1e-6);
            let b = s.e_norm;
            assert!(b < 1.0, "perturbation too large for the bound: {b}");
            assert!(s.dev_diff <= 2.0 * gamma * b / (1.0 - b) + 1e-8);
        }
    }

    #[test]
    fn stability_is_deterministic_across_runs() {
        let (g, [r, _, y]) = figure1();
        let cfg = PerturbationConfig::new(0.1, 7).unwrap();
        let quad = gauss_laguerre(16).unwrap();
        let a =
            stability_experiment(&g, r.view(), y.view(), &cfg, 20, PNorm::One, 0.5, &quad).unwrap();
        let b =
            stability_experiment(&g, r.view(), y.view(), &cfg, 20, PNorm::One, 0.5, &quad).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            stability_experiment(&g, r.view(), y.view(), &cfg, 0, PNorm::One, 0.5, &quad),
            Err(AnalysisError::ZeroReps)
        ));
    }

    #[test]
    fn samples_csv_has_fixed_header() {
        let samples = vec![PerturbationSample {
            e_norm: 0.5,
            dev_diff: 0.1,
            dev_sps: 0.2,
            norm_dev_diff: 0.2,
            norm_dev_sps: 0.4,
        }];
        let csv = samples_to_csv(&samples);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "e_norm,dev_diff,dev_sps,norm_dev_diff,norm_dev_sps");
        assert_eq!(lines.next().unwrap(), "0.5,0.1,0.2,0.2,0.4");
    }

    #[test]
    fn coords_csv_layout() {
        let coords = array![[1.0, 2.0], [3.0, 4.0]];
        let plain = coords_to_csv(&coords, None).unwrap();
        assert_eq!(plain, "x0,x1\n1,2\n3,4\n");
        let labeled = coords_to_csv(&coords, Some(&[5, 6])).unwrap();
        assert_eq!(labeled, "x0,x1,label\n1,2,5\n3,4,6\n");
        assert!(matches!(
            coords_to_csv(&coords, Some(&[1])),
            Err(AnalysisError::LabelCount { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn pairwise_triangle_inequality_spot_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (g, _) = figure1();
        let op = DiffusionOperator::new(g, 1.0).unwrap();
        let signals: Vec<Array1<f64>> = (0..6)
            .map(|_| Array1::from_iter((0..10).map(|_| rng.random_range(-1.0..1.0))))
            .collect();
        let set = SignalSet::new(signals, None).unwrap();
        let quad = gauss_laguerre(32).unwrap();
        for metric in [Metric::Input, Metric::Diffusion, Metric::Superposition] {
            let dm = pairwise_distances(&op, &set, metric, PNorm::Two, &quad).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    for k in 0..6 {
                        assert!(dm.get(i, j) <= dm.get(i, k) + dm.get(k, j) + 1e-9);
                    }
                }
            }
        }
    }
}
