//! Command-line front end: distance matrices, perturbation experiments,
//! synthetic data, classification, embeddings, and signal transforms, all
//! emitted as plot-ready CSV with JSON provenance sidecars.
//!
//! Exit codes separate failure classes so scripts can branch on them:
//! 2 for unparseable or invalid inputs, 3 for dimension mismatches, 4 for
//! numeric failures, 1 for everything else. A run exits 0 only when every
//! output file was written; on failure, files written so far are removed.

use clap::{Args, Parser, Subcommand};
use netdist::analysis::{
    classical_mds, coords_to_csv, knn_loocv, pairwise_distances, samples_to_csv,
    stability_experiment, AnalysisError, DistanceMatrix, Metric,
};
use netdist::datasets::{
    cluster_signals, load_idx_images, signals_from_csv, signals_to_csv, DatasetError,
};
use netdist::diffuse::DiffuseError;
use netdist::graph::{
    figure1, format_labels, lattice, parse_labels, three_cluster, Graph, GraphError,
    PerturbationConfig,
};
use netdist::linalg::{gauss_laguerre, LinalgError, PNorm};
use netdist::{DiffusionOperator, SignalSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::path::{Path, PathBuf};

const EXIT_IO: i32 = 1;
const EXIT_PARSE: i32 = 2;
const EXIT_DIMENSION: i32 = 3;
const EXIT_NUMERIC: i32 = 4;

/// Distances, stability experiments, and classification utilities for
/// signals on weighted graphs.
#[derive(Debug, Parser)]
#[command(name = "netdist", version)]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pairwise distance matrix over a set of signals.
    Distance(DistanceArgs),
    /// Distance deviations under random edge-weight perturbations.
    Stability(StabilityArgs),
    /// Generate a clustered random graph, optionally with labeled signals.
    Synth(SynthArgs),
    /// k-nearest-neighbor leave-one-out accuracy over a distance matrix.
    Knn(KnnArgs),
    /// Classical multidimensional scaling of a distance matrix.
    Mds(MdsArgs),
    /// Diffuse signals through a graph and write the transformed set.
    Transform(TransformArgs),
    /// Write a built-in graph and its signals to disk.
    Fixture(FixtureArgs),
}

/// Where a graph and its signals come from: a named built-in or a pair of
/// files.
#[derive(Args, Debug)]
struct InputArgs {
    /// Built-in input; fig1 is the ten-node example graph with its three
    /// unit signals.
    #[arg(long, value_parser = ["fig1"], conflicts_with_all = ["graph", "signals", "labeled"])]
    fixture: Option<String>,

    /// Graph file: an `n m` header line, then one `i j w` edge per line.
    #[arg(long, requires = "signals")]
    graph: Option<PathBuf>,

    /// Signals CSV, one signal per row.
    #[arg(long, requires = "graph")]
    signals: Option<PathBuf>,

    /// Treat the final CSV column as an integer class label.
    #[arg(long, requires = "signals")]
    labeled: bool,
}

#[derive(Args, Debug)]
struct DistanceArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Distance to compute: input, diffusion, or superposition.
    #[arg(long, default_value_t = Metric::Diffusion)]
    metric: Metric,

    /// Signal norm: 1, 2, or inf.
    #[arg(long, default_value_t = PNorm::Two)]
    p: PNorm,

    /// Diffusivity.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,

    /// Gauss-Laguerre order for the superposition integral (1 to 256).
    #[arg(long, default_value_t = 64)]
    quad_order: usize,

    /// Output CSV; a .json provenance sidecar lands next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StabilityArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Relative edge-weight perturbation bound, in [0, 1).
    #[arg(long, default_value_t = 0.05)]
    delta: f64,

    /// Number of perturbation repetitions.
    #[arg(long, default_value_t = 1000)]
    reps: usize,

    /// RNG seed; each repetition draws from its own substream.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Signal norm: 1, 2, or inf.
    #[arg(long, default_value_t = PNorm::Two)]
    p: PNorm,

    /// Diffusivity.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,

    /// Gauss-Laguerre order for the superposition integral (1 to 256).
    #[arg(long, default_value_t = 64)]
    quad_order: usize,

    /// Samples CSV; the sidecar records the max normalized deviations.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Cluster sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "9,8,10")]
    sizes: Vec<usize>,

    /// Probability of an edge between two nodes of the same cluster.
    #[arg(long, default_value_t = 0.4)]
    p_intra: f64,

    /// Lower edge-weight bound.
    #[arg(long, default_value_t = 1.0)]
    w_lo: f64,

    /// Upper edge-weight bound.
    #[arg(long, default_value_t = 3.0)]
    w_hi: f64,

    /// Number of distinct cross-cluster edges.
    #[arg(long, default_value_t = 3)]
    bridges: usize,

    /// Signals generated per cluster.
    #[arg(long, default_value_t = 10)]
    per_type: usize,

    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Graph output path; the provenance sidecar lands next to it.
    #[arg(long)]
    out_graph: PathBuf,

    /// Signals CSV output path; signals are only generated when both this
    /// and --out-labels are given.
    #[arg(long, requires = "out_labels")]
    out_signals: Option<PathBuf>,

    /// Signal labels output path, one integer per line.
    #[arg(long, requires = "out_signals")]
    out_labels: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct KnnArgs {
    /// Distance matrix CSV, as written by the distance subcommand.
    #[arg(long)]
    distances: PathBuf,

    /// Label file, one integer per line.
    #[arg(long)]
    labels: PathBuf,

    /// Neighbor counts to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
    ks: Vec<usize>,

    /// Accuracy report, JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MdsArgs {
    /// Distance matrix CSV, as written by the distance subcommand.
    #[arg(long)]
    distances: PathBuf,

    /// Optional label file; labels become the last coordinate column.
    #[arg(long)]
    labels: Option<PathBuf>,

    /// Embedding dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,

    /// Coordinates CSV; a .json provenance sidecar lands next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TransformArgs {
    /// Graph file: an `n m` header line, then one `i j w` edge per line.
    #[arg(long, conflicts_with = "lattice")]
    graph: Option<PathBuf>,

    /// Grid graph over image pixels, e.g. 28x28.
    #[arg(long, value_name = "ROWSxCOLS")]
    lattice: Option<String>,

    /// Signals CSV, one signal per row.
    #[arg(long, conflicts_with = "idx_images")]
    signals: Option<PathBuf>,

    /// Treat the final CSV column as an integer class label.
    #[arg(long, requires = "signals")]
    labeled: bool,

    /// IDX image file; each image becomes one row-major signal.
    #[arg(long)]
    idx_images: Option<PathBuf>,

    /// Diffusivity.
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,

    /// Transformed signals CSV; a .json provenance sidecar lands next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FixtureArgs {
    /// Fixture name.
    #[arg(value_parser = ["fig1"])]
    name: String,

    /// Graph output path.
    #[arg(long)]
    out_graph: PathBuf,

    /// Signals CSV output path.
    #[arg(long)]
    out_signals: PathBuf,
}

/// A failed run: the message to print and the exit code class it belongs to.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Self {
        Failure { code: EXIT_PARSE, message: message.into() }
    }

    fn io(path: &Path, err: &std::io::Error) -> Self {
        Failure { code: EXIT_IO, message: format!("{}: {err}", path.display()) }
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Failure { code: EXIT_PARSE, message: e.to_string() }
    }
}

impl From<LinalgError> for Failure {
    fn from(e: LinalgError) -> Self {
        let code = match e {
            LinalgError::Dimension { .. } => EXIT_DIMENSION,
            LinalgError::NoConvergence(_) | LinalgError::NotPositiveDefinite { .. } => EXIT_NUMERIC,
            LinalgError::QuadratureOrder(_) => EXIT_PARSE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<DiffuseError> for Failure {
    fn from(e: DiffuseError) -> Self {
        let code = match &e {
            DiffuseError::Linalg(inner) => return inner.clone().into(),
            DiffuseError::OracleDivergence { .. } => EXIT_NUMERIC,
            DiffuseError::Dimension { .. }
            | DiffuseError::SignalLength { .. }
            | DiffuseError::LabelCount { .. } => EXIT_DIMENSION,
            DiffuseError::InvalidAlpha(_)
            | DiffuseError::InvalidTime(_)
            | DiffuseError::InvalidTol(_)
            | DiffuseError::EmptySignalSet => EXIT_PARSE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        let code = match &e {
            AnalysisError::Diffuse(inner) => return inner.clone().into(),
            AnalysisError::Linalg(inner) => return inner.clone().into(),
            AnalysisError::LabelCount { .. }
            | AnalysisError::KOutOfRange { .. }
            | AnalysisError::DimOutOfRange { .. } => EXIT_DIMENSION,
            AnalysisError::UnknownMetric(_)
            | AnalysisError::Csv { .. }
            | AnalysisError::ZeroReps => EXIT_PARSE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Diffuse(inner) => inner.into(),
            DatasetError::Io(inner) => Failure { code: EXIT_IO, message: inner.to_string() },
            err @ (DatasetError::LabelsMismatch { .. }
            | DatasetError::IndexOutOfRange { .. }
            | DatasetError::PixelCount { .. }) => {
                Failure { code: EXIT_DIMENSION, message: err.to_string() }
            }
            err => Failure { code: EXIT_PARSE, message: err.to_string() },
        }
    }
}

/// Files written by the current run. Dropped without commit, it removes them
/// so a failed run leaves nothing behind.
struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new() -> Self {
        Outputs { written: Vec::new(), committed: false }
    }

    fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
        std::fs::write(path, contents).map_err(|e| Failure::io(path, &e))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    /// Writes the provenance sidecar for an artifact at `<artifact>.json`.
    fn write_sidecar(&mut self, artifact: &Path, value: &serde_json::Value) -> Result<(), Failure> {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".json");
        self.write(Path::new(&name), format!("{value:#}\n"))
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for path in &self.written {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, &e))
}

fn fig1_input() -> (Graph, SignalSet) {
    let (g, signals) = figure1();
    let set = SignalSet::new(signals.to_vec(), None).expect("fixture signals are valid");
    (g, set)
}

impl InputArgs {
    fn load(&self) -> Result<(Graph, SignalSet), Failure> {
        match (&self.fixture, &self.graph, &self.signals) {
            (Some(_), _, _) => Ok(fig1_input()),
            (None, Some(gpath), Some(spath)) => {
                let g = Graph::from_text(&read_text(gpath)?)?;
                let set = signals_from_csv(&read_text(spath)?, self.labeled)?;
                Ok((g, set))
            }
            _ => Err(Failure::parse("pass either --fixture or --graph with --signals")),
        }
    }

    fn provenance(&self) -> serde_json::Value {
        if let Some(name) = &self.fixture {
            json!({ "fixture": name })
        } else {
            json!({
                "graph": self.graph.as_ref().map(|p| p.display().to_string()),
                "signals": self.signals.as_ref().map(|p| p.display().to_string()),
                "labeled": self.labeled,
            })
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(failure) = run(cli) {
        eprintln!("error: {}", failure.message);
        std::process::exit(failure.code);
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::parse("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure { code: EXIT_IO, message: e.to_string() })?;
    }
    match cli.command {
        Command::Distance(args) => cmd_distance(args),
        Command::Stability(args) => cmd_stability(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Knn(args) => cmd_knn(args),
        Command::Mds(args) => cmd_mds(args),
        Command::Transform(args) => cmd_transform(args),
        Command::Fixture(args) => cmd_fixture(args),
    }
}

fn cmd_distance(args: DistanceArgs) -> Result<(), Failure> {
    let (g, set) = args.input.load()?;
    let quad = gauss_laguerre(args.quad_order)?;
    let op = DiffusionOperator::new(g, args.alpha)?;
    let dm = pairwise_distances(&op, &set, args.metric, args.p, &quad)?;

    let mut outputs = Outputs::new();
    outputs.write(&args.out, dm.to_csv())?;
    outputs.write_sidecar(
        &args.out,
        &json!({
            "command": "distance",
            "input": args.input.provenance(),
            "metric": args.metric.to_string(),
            "p": args.p.to_string(),
            "alpha": args.alpha,
            "quad_order": args.quad_order,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    outputs.commit();
    Ok(())
}

fn cmd_stability(args: StabilityArgs) -> Result<(), Failure> {
    let (g, set) = args.input.load()?;
    if set.len() < 2 {
        return Err(Failure::parse(format!(
            "stability compares the first two signals, but the input has {}",
            set.len()
        )));
    }
    let cfg = PerturbationConfig::new(args.delta, args.seed)?;
    let quad = gauss_laguerre(args.quad_order)?;
    let samples = stability_experiment(
        &g,
        set.signals()[0].view(),
        set.signals()[1].view(),
        &cfg,
        args.reps,
        args.p,
        args.alpha,
        &quad,
    )?;
    let max_norm_dev_diff = samples.iter().map(|s| s.norm_dev_diff).fold(0.0, f64::max);
    let max_norm_dev_sps = samples.iter().map(|s| s.norm_dev_sps).fold(0.0, f64::max);

    let mut outputs = Outputs::new();
    outputs.write(&args.out, samples_to_csv(&samples))?;
    outputs.write_sidecar(
        &args.out,
        &json!({
            "command": "stability",
            "input": args.input.provenance(),
            "delta": args.delta,
            "reps": args.reps,
            "seed": args.seed,
            "p": args.p.to_string(),
            "alpha": args.alpha,
            "quad_order": args.quad_order,
            "max_norm_dev_diff": max_norm_dev_diff,
            "max_norm_dev_sps": max_norm_dev_sps,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    outputs.commit();
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (g, node_labels) =
        three_cluster(&args.sizes, args.p_intra, args.w_lo, args.w_hi, args.bridges, &mut rng)?;
    let set = match (&args.out_signals, &args.out_labels) {
        (Some(_), Some(_)) => Some(cluster_signals(&g, &node_labels, args.per_type, &mut rng)?),
        _ => None,
    };

    let mut outputs = Outputs::new();
    outputs.write(&args.out_graph, g.to_text())?;
    if let (Some(set), Some(spath), Some(lpath)) = (&set, &args.out_signals, &args.out_labels) {
        outputs.write(spath, signals_to_csv(set, false)?)?;
        let labels = set.labels().expect("cluster signals are labeled");
        outputs.write(lpath, format_labels(labels))?;
    }
    outputs.write_sidecar(
        &args.out_graph,
        &json!({
            "command": "synth",
            "sizes": args.sizes,
            "p_intra": args.p_intra,
            "w_lo": args.w_lo,
            "w_hi": args.w_hi,
            "bridges": args.bridges,
            "per_type": args.per_type,
            "seed": args.seed,
            "out_graph": args.out_graph.display().to_string(),
            "out_signals": args.out_signals.as_ref().map(|p| p.display().to_string()),
            "out_labels": args.out_labels.as_ref().map(|p| p.display().to_string()),
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    outputs.commit();
    Ok(())
}

fn cmd_knn(args: KnnArgs) -> Result<(), Failure> {
    // the metric tags only annotate provenance; neighbor ranking reads the
    // entries alone, so a loaded matrix gets placeholder tags
    let dm =
        DistanceMatrix::from_csv(&read_text(&args.distances)?, Metric::Input, PNorm::Two, 1.0)?;
    let labels = parse_labels(&read_text(&args.labels)?)?;
    let mut results = Vec::new();
    for &k in &args.ks {
        let report = knn_loocv(&dm, &labels, k)?;
        let confusion: Vec<Vec<usize>> =
            report.confusion.outer_iter().map(|row| row.to_vec()).collect();
        results.push(json!({
            "k": k,
            "accuracy": report.accuracy,
            "classes": report.classes,
            "per_class": report.per_class,
            "confusion": confusion,
        }));
    }

    let mut outputs = Outputs::new();
    let report = json!({
        "command": "knn",
        "distances": args.distances.display().to_string(),
        "labels": args.labels.display().to_string(),
        "ks": args.ks,
        "results": results,
        "version": env!("CARGO_PKG_VERSION"),
    });
    outputs.write(&args.out, format!("{report:#}\n"))?;
    outputs.commit();
    Ok(())
}

fn cmd_mds(args: MdsArgs) -> Result<(), Failure> {
    let dm =
        DistanceMatrix::from_csv(&read_text(&args.distances)?, Metric::Input, PNorm::Two, 1.0)?;
    let labels = match &args.labels {
        Some(path) => Some(parse_labels(&read_text(path)?)?),
        None => None,
    };
    let coords = classical_mds(&dm, args.dim)?;
    let csv = coords_to_csv(&coords, labels.as_deref())?;

    let mut outputs = Outputs::new();
    outputs.write(&args.out, csv)?;
    outputs.write_sidecar(
        &args.out,
        &json!({
            "command": "mds",
            "distances": args.distances.display().to_string(),
            "labels": args.labels.as_ref().map(|p| p.display().to_string()),
            "dim": args.dim,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    outputs.commit();
    Ok(())
}

fn parse_lattice(shape: &str) -> Result<(usize, usize), Failure> {
    if let Some((rows, cols)) = shape.split_once('x') {
        if let (Ok(rows), Ok(cols)) = (rows.parse(), cols.parse()) {
            return Ok((rows, cols));
        }
    }
    Err(Failure::parse(format!("bad lattice {shape:?}, expected ROWSxCOLS such as 28x28")))
}

fn cmd_transform(args: TransformArgs) -> Result<(), Failure> {
    let g = match (&args.graph, &args.lattice) {
        (Some(path), None) => Graph::from_text(&read_text(path)?)?,
        (None, Some(shape)) => {
            let (rows, cols) = parse_lattice(shape)?;
            lattice(rows, cols)?
        }
        _ => return Err(Failure::parse("pass exactly one of --graph or --lattice")),
    };
    let set = match (&args.signals, &args.idx_images) {
        (Some(path), None) => signals_from_csv(&read_text(path)?, args.labeled)?,
        (None, Some(path)) => {
            if !path.is_file() {
                return Err(Failure {
                    code: EXIT_IO,
                    message: format!(
                        "{}: not found. Digit data is never downloaded automatically; fetch the \
                         IDX files (for example train-images-idx3-ubyte and train-labels-idx1-ubyte \
                         from any MNIST mirror) and pass their local paths.",
                        path.display()
                    ),
                });
            }
            let images = load_idx_images(path)?;
            SignalSet::new(images.signals().to_vec(), None)?
        }
        _ => return Err(Failure::parse("pass exactly one of --signals or --idx-images")),
    };
    let op = DiffusionOperator::new(g, args.alpha)?;
    let transformed = op.transform_set(&set)?;
    let csv = signals_to_csv(&transformed, transformed.labels().is_some())?;

    let mut outputs = Outputs::new();
    outputs.write(&args.out, csv)?;
    outputs.write_sidecar(
        &args.out,
        &json!({
            "command": "transform",
            "graph": args.graph.as_ref().map(|p| p.display().to_string()),
            "lattice": args.lattice,
            "signals": args.signals.as_ref().map(|p| p.display().to_string()),
            "idx_images": args.idx_images.as_ref().map(|p| p.display().to_string()),
            "labeled": args.labeled,
            "alpha": args.alpha,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    outputs.commit();
    Ok(())
}

fn cmd_fixture(args: FixtureArgs) -> Result<(), Failure> {
    let (g, set) = match args.name.as_str() {
        "fig1" => fig1_input(),
        other => return Err(Failure::parse(format!("unknown fixture {other:?}"))),
    };
    let mut outputs = Outputs::new();
    outputs.write(&args.out_graph, g.to_text())?;
    outputs.write(&args.out_signals, signals_to_csv(&set, false)?)?;
    outputs.commit();
    Ok(())
}
