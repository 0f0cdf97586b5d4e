//! `mlbn` subcommands. JSON goes to stdout, logs to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use mlbn_core::bench::{self, ExperimentConfig, Scale, Scenario};
use mlbn_core::gmm::{estimate_gmm, min_estimator, EmOptions, GmmOptions, DEFAULT_WEIGHT_FLOOR};
use mlbn_core::network::{
    atom_set, edge_occupancy, inactivation_flags, innovation_occupancy, WeightedDag, INACTIVATION_THRESHOLD,
};
use mlbn_core::qp::{auto_tune, default_schedule, default_threshold, solve_pair_1d, QpSolution, TuneStatus, TuneStep};
use mlbn_core::report::EstimateReport;
use mlbn_core::simulate::{sidecar_path, simulate_with_feed, InnovationSpec, NoiseFeed, NoiseSpec, SampleSet};
use mlbn_core::tropical::{classify_edges, kleene_star, polytrope_facets, TropicalMatrix};

use crate::error::AppError;
use crate::server;

#[derive(Parser, Debug)]
#[command(name = "mlbn", version, about = "Max-linear Bayesian network simulation and edge-weight estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a sample set and write it as CSV plus a JSON sidecar.
    Generate(GenerateArgs),
    /// Print the Kleene star of a graph or matrix.
    Kleene(KleeneArgs),
    /// Print the atoms of Y_ij for a pair.
    Atoms(AtomsArgs),
    /// Edge and innovation occupancy of a simulated sample set.
    Occupancy(OccupancyArgs),
    /// Estimate one edge weight.
    Estimate(EstimateArgs),
    /// Run a benchmark scenario and write CSV tables plus a manifest.
    Experiment(ExperimentArgs),
    /// Serve the tuning API on loopback.
    Serve(ServeArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum FeedArg {
    Measurement,
    Propagated,
}

impl From<FeedArg> for NoiseFeed {
    fn from(f: FeedArg) -> Self {
        match f {
            FeedArg::Measurement => NoiseFeed::Measurement,
            FeedArg::Propagated => NoiseFeed::Propagated,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Graph JSON file or preset name (gmm, ten-node, ten-node-tuning).
    #[arg(long)]
    pub graph: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise standard deviation applied to every vertex.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Per-vertex noise standard deviations, comma separated; overrides --sigma.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub xi: f64,
    #[arg(long, value_enum, default_value_t = FeedArg::Measurement)]
    pub feed: FeedArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct KleeneArgs {
    #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
    pub graph: Option<String>,
    /// Matrix JSON {"n", "entries"} with "-inf" for missing edges.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Also print polytrope facets and, for graphs, edge classes.
    #[arg(long)]
    pub facets: bool,
}

#[derive(Args, Debug)]
pub struct AtomsArgs {
    #[arg(long)]
    pub graph: String,
    /// 1-based pair, e.g. 2,4.
    #[arg(long, value_parser = parse_pair)]
    pub pair: (usize, usize),
}

#[derive(Args, Debug)]
pub struct OccupancyArgs {
    #[arg(long)]
    pub graph: String,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, default_value_t = INACTIVATION_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Min,
    Gmm,
    Qp,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub samples: PathBuf,
    /// 1-based pair, e.g. 2,4.
    #[arg(long, value_parser = parse_pair)]
    pub pair: (usize, usize),
    /// Graph used for the default k_max and occupancy diagnostics.
    #[arg(long)]
    pub graph: Option<String>,
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_WEIGHT_FLOOR)]
    pub floor: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the mixture fit next to the report.
    #[arg(long)]
    pub with_fit: bool,
    #[arg(long, requires = "k2", conflicts_with = "auto")]
    pub k1: Option<f64>,
    #[arg(long, requires = "k1", conflicts_with = "auto")]
    pub k2: Option<f64>,
    /// Step through the default schedule until ω' ≤ t (the default for qp).
    #[arg(long)]
    pub auto: bool,
    #[arg(long)]
    pub t: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub scenario: String,
    /// JSON object merged over the scenario preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
    pub scale: ScaleArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Full,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8787)]
    pub port: u16,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub host: IpAddr,
    #[arg(long)]
    pub graph: Option<String>,
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Directory holding the session ledger.
    #[arg(long, default_value = ".")]
    pub session_root: PathBuf,
    /// Optional directory of static UI assets served at /.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

/// Parses `i,j` with 1-based ids into a 0-based pair.
pub fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected i,j but got {s:?}"))?;
    let parse = |t: &str| -> Result<usize, String> {
        let v: usize = t.trim().parse().map_err(|_| format!("not a vertex id: {t:?}"))?;
        if v == 0 {
            return Err("vertex ids are 1-based".into());
        }
        Ok(v - 1)
    };
    let (i, j) = (parse(a)?, parse(b)?);
    if i == j {
        return Err(format!("pair ({}, {}) repeats a vertex", i + 1, j + 1));
    }
    Ok((i, j))
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = e.print();
                    1
                }
            };
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit<T: Serialize>(out: &mut dyn Write, v: &T) -> Result<(), AppError> {
    let s = serde_json::to_string_pretty(v).expect("serializable output");
    writeln!(out, "{s}")?;
    Ok(())
}

pub fn load_graph(spec: &str) -> Result<WeightedDag, AppError> {
    Ok(bench::load_graph(spec)?)
}

pub fn load_samples(path: &Path) -> Result<SampleSet, AppError> {
    SampleSet::load(path).map_err(|e| match e {
        mlbn_core::Error::Io(source) => AppError::Read { path: path.to_path_buf(), source },
        other => other.into(),
    })
}

fn read_json(path: &Path) -> Result<Value, AppError> {
    let text = std::fs::read_to_string(path).map_err(|source| AppError::Read { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| AppError::Json { path: path.into(), source })
}

fn check_pair(n: usize, (i, j): (usize, usize)) -> Result<(), AppError> {
    for v in [i, j] {
        if v >= n {
            return Err(mlbn_core::Error::VertexOutOfRange { vertex: v + 1, n }.into());
        }
    }
    Ok(())
}

fn run(cmd: Command, out: &mut dyn Write) -> Result<(), AppError> {
    match cmd {
        Command::Generate(a) => generate(a, out),
        Command::Kleene(a) => kleene(a, out),
        Command::Atoms(a) => {
            let dag = load_graph(&a.graph)?;
            check_pair(dag.n(), a.pair)?;
            emit(out, &atom_set(&dag, &dag.kleene_star(), a.pair.0, a.pair.1)?)
        }
        Command::Occupancy(a) => occupancy(a, out),
        Command::Estimate(a) => estimate(a, out),
        Command::Experiment(a) => experiment(a, out),
        Command::Serve(a) => serve(a),
    }
}

fn generate(a: GenerateArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let dag = load_graph(&a.graph)?;
    let noise = match a.sigmas {
        Some(s) => NoiseSpec { sigmas: s },
        None => NoiseSpec::uniform(dag.n(), a.sigma),
    };
    let inn = InnovationSpec { alpha: a.alpha, beta: a.beta, xi: a.xi };
    let samples = simulate_with_feed(&dag, &inn, &noise, a.n, a.seed, a.feed.into())?;
    samples.save(&a.out)?;
    tracing::info!(rows = a.n, out = %a.out.display(), "wrote samples");
    emit(
        out,
        &serde_json::json!({
            "out": a.out,
            "sidecar": sidecar_path(&a.out),
            "n_samples": samples.n_samples(),
            "n_vertices": samples.n_vertices(),
            "seed": a.seed,
            "graph_hash": dag.graph_hash(),
        }),
    )
}

fn kleene(a: KleeneArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let (ks, dag) = match (&a.graph, &a.matrix) {
        (Some(g), _) => {
            let dag = load_graph(g)?;
            (dag.kleene_star(), Some(dag))
        }
        (None, Some(m)) => {
            let v = read_json(m)?;
            let w: TropicalMatrix =
                serde_json::from_value(v).map_err(|source| AppError::Json { path: m.clone(), source })?;
            (kleene_star(&w)?, None)
        }
        (None, None) => return Err(AppError::Usage("either --graph or --matrix is required".into())),
    };
    if !a.facets {
        return emit(out, ks.closure());
    }
    emit(
        out,
        &serde_json::json!({
            "closure": ks.closure(),
            "facets": polytrope_facets(&ks),
            "edges": dag.as_ref().map(classify_edges),
        }),
    )
}

fn occupancy(a: OccupancyArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let dag = load_graph(&a.graph)?;
    let samples = load_samples(&a.samples)?;
    samples.verify_graph(&dag)?;
    let occ = edge_occupancy(&dag, &samples)?;
    let innovation: Vec<Value> = innovation_occupancy(&dag, &samples)?
        .into_iter()
        .enumerate()
        .map(|(v, f)| serde_json::json!({ "vertex": v + 1, "fraction": f }))
        .collect();
    emit(
        out,
        &serde_json::json!({
            "n_samples": samples.n_samples(),
            "threshold": a.threshold,
            "edges": occ,
            "flags": inactivation_flags(&occ, a.threshold),
            "innovation": innovation,
        }),
    )
}

/// Auto-tuned QP output: the final solution plus the path that led to it.
#[derive(Serialize)]
struct AutoQp {
    #[serde(flatten)]
    solution: QpSolution,
    status: TuneStatus,
    threshold: f64,
    trajectory: Vec<TuneStep>,
}

fn with_graph_diagnostics(
    report: EstimateReport,
    dag: Option<&WeightedDag>,
    samples: &SampleSet,
) -> Result<EstimateReport, AppError> {
    let Some(dag) = dag else { return Ok(report) };
    if samples.provenance().is_none() || dag.weight(report.i, report.j).is_none() {
        return Ok(report);
    }
    let occ = edge_occupancy(dag, samples)?;
    let o = occ.iter().find(|o| o.source == report.i && o.target == report.j).expect("edge exists");
    Ok(report.with_occupancy(o.fraction, INACTIVATION_THRESHOLD))
}

fn estimate(a: EstimateArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let samples = load_samples(&a.samples)?;
    let dag = a.graph.as_deref().map(load_graph).transpose()?;
    if let Some(d) = &dag {
        samples.verify_graph(d)?;
    }
    check_pair(samples.n_vertices(), a.pair)?;
    let y = samples.differences(a.pair.0, a.pair.1)?;
    match a.method {
        MethodArg::Min => {
            let r = with_graph_diagnostics(min_estimator(&y)?, dag.as_ref(), &samples)?;
            emit(out, &r)
        }
        MethodArg::Gmm => {
            let opts = GmmOptions {
                k_max: a.kmax,
                weight_floor: a.floor,
                em: EmOptions { seed: a.seed, ..EmOptions::default() },
            };
            let (report, fit) = estimate_gmm(&y, dag.as_ref(), &opts)?;
            let report = with_graph_diagnostics(report, dag.as_ref(), &samples)?;
            if a.with_fit {
                emit(out, &serde_json::json!({ "report": report, "fit": fit }))
            } else {
                emit(out, &report)
            }
        }
        MethodArg::Qp => match (a.k1, a.k2) {
            (Some(k1), Some(k2)) => emit(out, &solve_pair_1d(&y, k1, k2)?),
            _ => {
                let t = a.t.unwrap_or_else(|| default_threshold(&y));
                let r = auto_tune(&y, t, &default_schedule())?;
                let solution = r.solution.ok_or_else(|| AppError::Usage("empty tuning schedule".into()))?;
                emit(out, &AutoQp { solution, status: r.status, threshold: r.threshold, trajectory: r.trajectory })
            }
        },
    }
}

/// Merges `patch` into `base` key by key, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn experiment(a: ExperimentArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let scenario: Scenario = a.scenario.parse().map_err(|e: mlbn_core::Error| AppError::Usage(e.to_string()))?;
    let scale = match a.scale {
        ScaleArg::Desk => Scale::Desk,
        ScaleArg::Full => Scale::Full,
    };
    let mut cfg = ExperimentConfig::preset(scenario, scale);
    if let Some(path) = &a.config {
        let mut base = serde_json::to_value(&cfg).expect("config serializes");
        merge(&mut base, read_json(path)?);
        cfg = serde_json::from_value(base).map_err(|source| AppError::Json { path: path.clone(), source })?;
        if cfg.scenario != scenario {
            return Err(AppError::Usage(format!("config scenario {:?} contradicts --scenario {}", cfg.scenario, a.scenario)));
        }
    }
    for w in cfg.validate()? {
        tracing::warn!("{w}");
    }
    tracing::info!(scenario = %a.scenario, seeds = cfg.seeds.len(), "running experiment");
    let outcome = bench::run(&cfg)?;
    bench::write_outputs(&a.out, &cfg, &outcome)?;
    emit(out, &read_json(&a.out.join("manifest.json"))?)
}

fn serve(a: ServeArgs) -> Result<(), AppError> {
    let graph = a.graph.as_deref().map(load_graph).transpose()?;
    let samples = a.samples.as_deref().map(load_samples).transpose()?;
    let state = server::AppState::new(graph, samples, Some(a.session_root))?;
    let addr = SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(server::serve(addr, state, a.static_dir))?;
    Ok(())
}
