use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{ArgAction, Args, ValueEnum};
use serde::Serialize;

use eigengame::data_io::{
    load_edges, load_labels, load_matrix, sample_batch, save_labels, save_matrix, synth_covariance, Dataset,
    SamplerState, Spectrum,
};
use eigengame::graph::{run_graph, LambdaStarMode};
use eigengame::linalg::{dot, jacobi_eigh, Mat, SymEig};
use eigengame::metrics::{kmeans, v_measure, Labeling, MetricTrace};
use eigengame::rng;
use eigengame::solver::{run, Schedule, SolverConfig, Source};
use eigengame::updates::UpdateRule;

use crate::layering::Layered;
use crate::manifest::Manifest;
use crate::usage;

const KMEANS_MAX_ITERS: usize = 300;
const SYMMETRY_TOL: f64 = 1e-10;

/// Flags shared by every command.
#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Plain-text `key=value` file supplying defaults for any flag.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Re-run with the configuration recorded in a previous manifest.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub from_manifest: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumKind {
    Exp,
    Linear,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long, value_enum, default_value_t = SpectrumKind::Exp)]
    pub spectrum: SpectrumKind,
    #[arg(long, default_value_t = 1.0)]
    pub lambda1: f64,
    /// Decay ratio of the exponential spectrum.
    #[arg(long, default_value_t = 0.9)]
    pub ratio: f64,
    /// Smallest eigenvalue of the linear spectrum [default: lambda1 / d].
    #[arg(long)]
    pub lambda_d: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write this many Gaussian samples drawn with covariance sigma.
    #[arg(long)]
    pub samples: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleArg {
    Mu,
    Alpha,
    Gha,
    MuGrad,
}

impl From<RuleArg> for UpdateRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Mu => UpdateRule::Mu,
            RuleArg::Alpha => UpdateRule::Alpha,
            RuleArg::Gha => UpdateRule::Gha,
            RuleArg::MuGrad => UpdateRule::MuGrad,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleArg {
    Constant,
    InvT,
}

/// Optimizer flags shared by `pca` and `graph`.
#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SolverArgs {
    /// Number of eigenvectors to learn.
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Rows (or edges) per iteration [default: the whole dataset].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Simulated machines per player; must divide the batch size.
    #[arg(long, default_value_t = 1)]
    pub shards: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Constant)]
    pub schedule: ScheduleArg,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub nesterov: bool,
    /// Project directions onto the sphere's tangent space before stepping.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub riemannian_projection: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub eval_every: usize,
}

impl SolverArgs {
    fn config(&self, rule: UpdateRule, batch_size: usize) -> SolverConfig {
        let mut c = SolverConfig::new(self.k, rule);
        c.steps = self.steps;
        c.batch_size = batch_size;
        c.shards = self.shards;
        c.schedule = match self.schedule {
            ScheduleArg::Constant => Schedule::Constant(self.lr),
            ScheduleArg::InvT => Schedule::InverseT(self.lr),
        };
        c.momentum = self.momentum;
        c.nesterov = self.nesterov;
        c.riemannian_projection = self.riemannian_projection;
        c.seed = self.seed;
        c.eval_every = self.eval_every;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    /// Square symmetric matrices are covariances, anything else is rows.
    Auto,
    Cov,
    Rows,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PcaArgs {
    /// Covariance or `n x d` data matrix (`.egm` binary or `.csv`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataKind::Auto)]
    pub data_kind: DataKind,
    /// Ground-truth eigenvectors (`d x m`, m >= k, descending) for metrics.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RuleArg::Mu)]
    pub rule: RuleArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaStarArg {
    Fixed2v,
    Tracked,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GraphArgs {
    /// Edge list, one `out in` pair per line.
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long, value_enum, default_value_t = LambdaStarArg::Fixed2v)]
    pub lambda_star: LambdaStarArg,
    /// Compare against the dense Laplacian eigensystem in the trace.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub truth: bool,
    /// Run k-means with this many clusters on the learned embedding.
    #[arg(long)]
    pub cluster: Option<usize>,
    /// Reference node labels for the V-measure, one per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct OracleArgs {
    /// Matrix to decompose: itself if square and symmetric, else (1/n) XᵀX.
    #[arg(long, conflicts_with = "laplacian", required_unless_present = "laplacian")]
    pub data: Option<PathBuf>,
    /// Decompose the Laplacian of this edge list instead.
    #[arg(long)]
    pub laplacian: Option<PathBuf>,
    /// Treat a square input as data rows rather than a covariance.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub gram: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn record_layers(manifest: &mut Manifest, layered: &Layered) -> anyhow::Result<()> {
    for path in [&layered.config_file, &layered.manifest].into_iter().flatten() {
        manifest.input(path)?;
    }
    Ok(())
}

fn write_matrix(manifest: &mut Manifest, path: PathBuf, m: &Mat) -> anyhow::Result<()> {
    save_matrix(&path, m).with_context(|| format!("writing {}", path.display()))?;
    manifest.artifact(path);
    Ok(())
}

fn write_trace(manifest: &mut Manifest, path: PathBuf, trace: &MetricTrace, k: usize) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("writing {}", path.display()))?);
    trace.write_csv(&mut w, k)?;
    w.flush()?;
    manifest.artifact(path);
    Ok(())
}

fn column(values: &[f64]) -> Mat {
    Mat::from_vec(values.len(), 1, values.to_vec()).expect("one value per row")
}

pub fn synth(args: SynthArgs, layered: &Layered) -> anyhow::Result<()> {
    let spectrum = match args.spectrum {
        SpectrumKind::Exp => Spectrum::exponential(args.lambda1, args.ratio),
        SpectrumKind::Linear => Spectrum::linear(args.lambda1, args.lambda_d.unwrap_or(args.lambda1 / args.d as f64)),
    };
    let mut resolved = args.clone();
    if matches!(args.spectrum, SpectrumKind::Linear) {
        resolved.lambda_d = Some(args.lambda_d.unwrap_or(args.lambda1 / args.d as f64));
    }
    let mut manifest = Manifest::start("synth", &resolved, Some(args.seed))?;
    record_layers(&mut manifest, layered)?;

    let (sigma, _) = synth_covariance(&spectrum, args.d, args.seed)?;
    let oracle = jacobi_eigh(&sigma)?;
    let out = &args.common.out;
    prepare_out(out)?;
    write_matrix(&mut manifest, out.join("sigma.egm"), &sigma)?;
    write_matrix(&mut manifest, out.join("eigenvalues.egm"), &column(&oracle.eigenvalues))?;
    write_matrix(&mut manifest, out.join("eigenvectors.egm"), &oracle.eigenvectors)?;
    if let Some(n) = args.samples {
        let ds = Dataset::gaussian(&sigma)?;
        let mut sampler = SamplerState::from_rng(rng::stream(args.seed, rng::streams::GENERATOR));
        let rows = sample_batch(&ds, n, &mut sampler)?;
        write_matrix(&mut manifest, out.join("data.egm"), &rows)?;
    }
    manifest.finish(out)?;
    Ok(())
}

/// Rayleigh quotients of the truth columns, standing in for their eigenvalues.
fn truth_eigensystem(vectors: Mat, source: Source<'_>) -> anyhow::Result<SymEig> {
    let eigenvalues = vectors
        .columns()
        .iter()
        .map(|q| -> anyhow::Result<f64> {
            Ok(match source {
                Source::Covariance(s) => dot(q, &s.mat_vec(q)?),
                Source::Samples(Dataset::Rows { rows, .. }) => {
                    let xq = rows.mat_vec(q)?;
                    dot(&xq, &xq) / rows.rows() as f64
                }
                Source::Samples(_) => f64::NAN,
            })
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(SymEig {
        eigenvalues,
        eigenvectors: vectors,
    })
}

pub fn pca(args: PcaArgs, layered: &Layered) -> anyhow::Result<()> {
    let data = load_matrix(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    let as_covariance = match args.data_kind {
        DataKind::Cov => {
            if !data.is_square() || !data.is_symmetric(SYMMETRY_TOL) {
                return Err(usage("--data-kind cov needs a square symmetric matrix"));
            }
            true
        }
        DataKind::Rows => false,
        DataKind::Auto => data.is_square() && data.is_symmetric(SYMMETRY_TOL),
    };
    let n = data.rows();
    let batch_size = match (as_covariance, args.solver.batch_size) {
        (true, b) => b.unwrap_or(1),
        (false, b) => b.unwrap_or(n),
    };
    let config = args.solver.config(args.rule.into(), batch_size);
    config.validate()?;
    if config.k > data.cols() {
        return Err(usage(format!("--k {} exceeds the data dimension {}", config.k, data.cols())));
    }

    let mut resolved = args.clone();
    resolved.solver.batch_size = Some(batch_size);
    resolved.data_kind = if as_covariance { DataKind::Cov } else { DataKind::Rows };
    let mut manifest = Manifest::start("pca", &resolved, Some(config.seed))?;
    record_layers(&mut manifest, layered)?;
    manifest.input(&args.data)?;

    let (sigma, dataset);
    let source = if as_covariance {
        sigma = data.symmetrized()?;
        Source::Covariance(&sigma)
    } else if batch_size == n {
        dataset = Dataset::sequential(data);
        Source::Samples(&dataset)
    } else {
        dataset = Dataset::rows(data);
        Source::Samples(&dataset)
    };
    let truth = match &args.truth {
        Some(path) => {
            manifest.input(path)?;
            let vectors = load_matrix(path).with_context(|| format!("loading {}", path.display()))?;
            if vectors.rows() != source.dim() || vectors.cols() < config.k {
                return Err(usage(format!(
                    "truth is {}x{}, expected {} rows and at least {} columns",
                    vectors.rows(),
                    vectors.cols(),
                    source.dim(),
                    config.k
                )));
            }
            Some(truth_eigensystem(vectors, source)?)
        }
        None => {
            log::warn!("no --truth given; streak and subspace_distance are written as NaN");
            None
        }
    };

    let out = &args.common.out;
    prepare_out(out)?;
    let (state, trace) = run(&config, source, truth.as_ref())?;
    write_matrix(&mut manifest, out.join("vectors.egm"), state.vectors())?;
    write_trace(&mut manifest, out.join("trace.csv"), &trace, config.k)?;
    if let Some(last) = trace.last() {
        println!(
            "iteration={} streak={} subspace_distance={}",
            last.iteration,
            last.streak.map_or("NaN".to_string(), |s| s.to_string()),
            last.subspace_distance.unwrap_or(f64::NAN)
        );
    }
    manifest.finish(out)?;
    Ok(())
}

pub fn graph(args: GraphArgs, layered: &Layered) -> anyhow::Result<()> {
    let edges = load_edges(&args.edges).with_context(|| format!("loading {}", args.edges.display()))?;
    let k = args.solver.k;
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    if k >= edges.num_nodes() {
        return Err(usage(format!("--k {k} must be smaller than the node count {}", edges.num_nodes())));
    }
    if edges.is_empty() {
        return Err(usage("the edge list is empty"));
    }
    if args.labels.is_some() && args.cluster.is_none() {
        return Err(usage("--labels needs --cluster"));
    }
    if args.cluster == Some(0) {
        return Err(usage("--cluster must be at least 1"));
    }
    let batch_size = args.solver.batch_size.unwrap_or(edges.len());
    let config = args.solver.config(UpdateRule::Mu, batch_size);
    config.validate()?;
    let mode = match args.lambda_star {
        LambdaStarArg::Fixed2v => LambdaStarMode::FixedTwoV,
        LambdaStarArg::Tracked => LambdaStarMode::TrackedMax,
    };

    let mut resolved = args.clone();
    resolved.solver.batch_size = Some(batch_size);
    let mut manifest = Manifest::start("graph", &resolved, Some(config.seed))?;
    record_layers(&mut manifest, layered)?;
    manifest.input(&args.edges)?;
    let reference = match &args.labels {
        Some(path) => {
            manifest.input(path)?;
            let labels = load_labels(path).with_context(|| format!("loading {}", path.display()))?;
            if labels.len() != edges.num_nodes() {
                return Err(usage(format!(
                    "{} labels for {} nodes",
                    labels.len(),
                    edges.num_nodes()
                )));
            }
            Some(Labeling::from_labels(labels))
        }
        None => None,
    };

    let truth = if args.truth {
        Some(jacobi_eigh(&edges.laplacian())?)
    } else {
        None
    };
    let out = &args.common.out;
    prepare_out(out)?;
    let result = run_graph(&config, &edges, mode, truth.as_ref())?;
    write_matrix(&mut manifest, out.join("vectors.egm"), &result.vectors)?;
    write_trace(&mut manifest, out.join("trace.csv"), &result.trace, k)?;

    if let Some(c) = args.cluster {
        let clusters = kmeans(&result.vectors, c, config.seed, KMEANS_MAX_ITERS)?;
        let path = out.join("labels.csv");
        save_labels(&path, clusters.labeling.assignments())?;
        manifest.artifact(path);
        if let Some(reference) = &reference {
            println!("v_measure={:?}", v_measure(reference, &clusters.labeling)?);
        }
    }
    manifest.finish(out)?;
    Ok(())
}

pub fn oracle(args: OracleArgs, layered: &Layered) -> anyhow::Result<()> {
    let mut manifest = Manifest::start("oracle", &args, None)?;
    record_layers(&mut manifest, layered)?;
    let matrix = match (&args.data, &args.laplacian) {
        (Some(path), None) => {
            manifest.input(path)?;
            let m = load_matrix(path).with_context(|| format!("loading {}", path.display()))?;
            if args.gram || !m.is_square() {
                m.gram()
            } else if m.is_symmetric(SYMMETRY_TOL) {
                m.symmetrized()?
            } else {
                return Err(usage(
                    "square input is not symmetric; pass --gram to decompose (1/n) XᵀX of its rows",
                ));
            }
        }
        (None, Some(path)) => {
            manifest.input(path)?;
            load_edges(path)
                .with_context(|| format!("loading {}", path.display()))?
                .laplacian()
        }
        _ => return Err(usage("pass exactly one of --data or --laplacian")),
    };
    let eig = jacobi_eigh(&matrix)?;
    let out = &args.common.out;
    prepare_out(out)?;
    write_matrix(&mut manifest, out.join("eigenvalues.csv"), &column(&eig.eigenvalues))?;
    write_matrix(&mut manifest, out.join("eigenvectors.egm"), &eig.eigenvectors)?;
    manifest.finish(out)?;
    Ok(())
}
