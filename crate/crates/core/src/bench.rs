//! Experiment drivers: exact recovery, the structural-inactivation sweep,
//! stability thresholds and the instability trace. Every run is a pure
//! function of its config.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{estimate_gmm, min_estimator, GmmOptions};
use crate::network::{edge_occupancy, WeightedDag, INACTIVATION_THRESHOLD};
use crate::presets;
use crate::qp::{auto_tune, centre_offset, default_schedule, default_threshold, tune_to_offset};
use crate::report::EstimateMethod;
use crate::simulate::{simulate, vertex_seed, InnovationSpec, NoiseSpec};
use crate::stats;
use crate::tropical::{classify_edges, EdgeClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Recovery,
    Inactivation,
    Table1,
    Instability,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recovery" => Ok(Scenario::Recovery),
            "inactivation" => Ok(Scenario::Inactivation),
            "table1" => Ok(Scenario::Table1),
            "instability" => Ok(Scenario::Instability),
            _ => Err(Error::Config(format!("unknown scenario {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub scale: Scale,
    /// Preset name or graph JSON path; used by `recovery`.
    #[serde(default)]
    pub graph: Option<String>,
    pub n_samples: usize,
    pub sigma: f64,
    pub seeds: Vec<u64>,
    pub methods: Vec<EstimateMethod>,
    /// Target path-observation counts, or sample sizes for `table1`.
    #[serde(default)]
    pub grid: Vec<f64>,
    /// Half-width used by the `table1` stability rule.
    #[serde(default = "default_band")]
    pub stability_band: f64,
    #[serde(default)]
    pub gmm: GmmOptions,
}

fn default_band() -> f64 {
    0.1
}

impl ExperimentConfig {
    /// Defaults for a scenario; desk scale divides the published sample sizes by ten.
    pub fn preset(scenario: Scenario, scale: Scale) -> Self {
        let div = match scale {
            Scale::Desk => 10.0,
            Scale::Full => 1.0,
        };
        let scaled = |v: &[f64]| v.iter().map(|x| (x / div).round()).collect::<Vec<_>>();
        let base = ExperimentConfig {
            scenario,
            scale,
            graph: None,
            n_samples: 50_000 / div as usize,
            sigma: 0.1,
            seeds: (0..20).collect(),
            methods: vec![EstimateMethod::Gmm, EstimateMethod::Qp],
            grid: Vec::new(),
            stability_band: default_band(),
            gmm: GmmOptions::default(),
        };
        match scenario {
            Scenario::Recovery => ExperimentConfig {
                graph: Some("gmm".into()),
                n_samples: 2000,
                sigma: 0.0,
                seeds: (0..5).collect(),
                methods: vec![EstimateMethod::Min],
                ..base
            },
            Scenario::Inactivation => ExperimentConfig {
                grid: scaled(&[50.0, 100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0, 6400.0]),
                ..base
            },
            Scenario::Table1 => ExperimentConfig {
                methods: vec![EstimateMethod::Gmm],
                grid: scaled(&[500.0, 1000.0, 5000.0, 10000.0, 50000.0]),
                ..base
            },
            Scenario::Instability => ExperimentConfig {
                methods: vec![EstimateMethod::Gmm],
                grid: scaled(&(0..=16).map(|k| 400.0 + 25.0 * k as f64).collect::<Vec<_>>()),
                ..base
            },
        }
    }

    /// Validates the config and returns warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.n_samples == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.sigma > 0.25 {
            warnings.push(format!(
                "sigma = {} exceeds 0.25; mixture components are poorly separated there",
                self.sigma
            ));
        }
        if self.scenario != Scenario::Recovery && self.grid.is_empty() {
            return Err(Error::Config("the sweep grid is empty".into()));
        }
        Ok(warnings)
    }
}

fn row_seed(seed: u64, grid_index: usize) -> u64 {
    vertex_seed(seed, grid_index.wrapping_mul(0x1_0000).wrapping_add(0x7e57))
}

// ---------------------------------------------------------------- recovery

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub seed: u64,
    #[serde(with = "crate::one_based")]
    pub source: usize,
    #[serde(with = "crate::one_based")]
    pub target: usize,
    pub weight: f64,
    /// Heaviest-path weight `ω*(i, j)`, the value the minimum converges to.
    pub closure: f64,
    pub estimate: f64,
    pub facet_defining: bool,
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub rows: Vec<RecoveryRow>,
    /// Share of facet-defining edges recovered exactly.
    pub exact_fraction: f64,
}

pub fn load_graph(spec: &str) -> Result<WeightedDag> {
    match presets::by_name(spec) {
        Some(g) => Ok(g),
        None => WeightedDag::from_json(&fs::read_to_string(spec)?),
    }
}

/// Noise-free simulation and the minimum estimator on every edge.
pub fn run_exact_recovery(cfg: &ExperimentConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    let dag = load_graph(cfg.graph.as_deref().unwrap_or("gmm"))?;
    run_exact_recovery_on(&dag, cfg.n_samples, &cfg.seeds)
}

pub fn run_exact_recovery_on(dag: &WeightedDag, n_samples: usize, seeds: &[u64]) -> Result<RecoveryResult> {
    let ks = dag.kleene_star();
    let classes = classify_edges(dag);
    let noise = NoiseSpec::noise_free(dag.n());
    let per_seed: Vec<Result<Vec<RecoveryRow>>> = seeds
        .par_iter()
        .map(|&seed| {
            let s = simulate(dag, &InnovationSpec::default(), &noise, n_samples, seed)?;
            classes
                .iter()
                .map(|c| {
                    let est = min_estimator(&s.differences(c.source, c.target)?)?.estimate;
                    Ok(RecoveryRow {
                        seed,
                        source: c.source,
                        target: c.target,
                        weight: c.weight,
                        closure: ks.weight(c.source, c.target).value(),
                        estimate: est,
                        facet_defining: c.class == EdgeClass::FacetDefining,
                        exact: est == c.weight,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    let facet: Vec<&RecoveryRow> = rows.iter().filter(|r| r.facet_defining).collect();
    let exact_fraction = if facet.is_empty() {
        f64::NAN
    } else {
        facet.iter().filter(|r| r.exact).count() as f64 / facet.len() as f64
    };
    Ok(RecoveryResult { rows, exact_fraction })
}

// ---------------------------------------------------------------- inactivation

/// Three vertices: target edge `1 → 3` with weight 0 and competitor `2 → 3`
/// with weight `w`. Under unit Fréchet innovations the edge `1 → 3` carries
/// the max with probability `1 / (2 + e^w)`.
pub fn inactivation_graph(competitor_weight: f64) -> WeightedDag {
    WeightedDag::from_triples(3, &[(0, 2, 0.0), (1, 2, competitor_weight)]).expect("valid graph")
}

/// Competitor weight giving `path_obs` expected observations through `1 → 3` out of `n`.
pub fn competitor_weight(n: usize, path_obs: f64) -> Result<f64> {
    let p = path_obs / n as f64;
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::Config(format!(
            "path observations must lie in (0, N/2), got {path_obs} with N = {n}"
        )));
    }
    Ok((1.0 / p - 2.0).ln())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub grid_point: f64,
    pub seed: u64,
    pub n_samples: usize,
    pub competitor_weight: f64,
    /// Realised count of samples whose max at vertex 3 came through `1 → 3`.
    pub path_obs: usize,
    pub occupancy: f64,
    pub approaching_inactivation: bool,
    pub gmm: Option<f64>,
    pub gmm_error: Option<f64>,
    pub gmm_log2_abs_error: Option<f64>,
    pub gmm_note: Option<String>,
    pub qp: Option<f64>,
    pub qp_error: Option<f64>,
    pub qp_auto: Option<f64>,
    pub qp_auto_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub grid_point: f64,
    pub mean_path_obs: f64,
    pub gmm_failures: usize,
    pub gmm_mean_abs_error: Option<f64>,
    pub gmm_median_abs_error: Option<f64>,
    pub gmm_iqr: Option<f64>,
    pub qp_median_abs_error: Option<f64>,
    pub qp_auto_median_abs_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<GridSummary>,
}

impl SweepResult {
    /// Mean absolute GMM error per grid point with a centred 3-point window.
    pub fn smoothed_gmm_error(&self) -> Vec<f64> {
        let m: Vec<f64> = self.summary.iter().map(|s| s.gmm_mean_abs_error.unwrap_or(f64::INFINITY)).collect();
        (0..m.len())
            .map(|k| {
                let lo = k.saturating_sub(1);
                let hi = (k + 1).min(m.len() - 1);
                stats::mean(&m[lo..=hi])
            })
            .collect()
    }
}

/// One simulated dataset at `path_obs` expected target-path observations.
pub fn inactivation_trial(
    n: usize,
    sigma: f64,
    path_obs: f64,
    seed: u64,
    methods: &[EstimateMethod],
    gmm: &GmmOptions,
) -> Result<SweepRow> {
    let w = competitor_weight(n, path_obs)?;
    let dag = inactivation_graph(w);
    let samples = simulate(&dag, &InnovationSpec::default(), &NoiseSpec::uniform(3, sigma), n, seed)?;
    let occ = edge_occupancy(&dag, &samples)?;
    let target = occ.iter().find(|o| o.source == 0 && o.target == 2).expect("target edge");
    let y = samples.differences(0, 2)?;
    let mut row = SweepRow {
        grid_point: path_obs,
        seed,
        n_samples: n,
        competitor_weight: w,
        path_obs: target.count,
        occupancy: target.fraction,
        approaching_inactivation: target.fraction < INACTIVATION_THRESHOLD,
        ..SweepRow::default()
    };
    if methods.contains(&EstimateMethod::Gmm) {
        if sigma == 0.0 {
            row.gmm_note = Some(Error::DegenerateNoise.to_string());
        } else {
            let mut opts = gmm.clone();
            opts.em.seed = seed;
            match estimate_gmm(&y, Some(&dag), &opts) {
                Ok((r, _)) => {
                    row.gmm = Some(r.estimate);
                    row.gmm_error = Some(r.estimate);
                    row.gmm_log2_abs_error = Some(r.estimate.abs().log2());
                }
                Err(e @ Error::NoComponentAboveFloor { .. }) => row.gmm_note = Some(e.to_string()),
                Err(e) => return Err(e),
            }
        }
    }
    if methods.contains(&EstimateMethod::Qp) {
        let offset = centre_offset(&y, sigma * std::f64::consts::SQRT_2)?;
        let centred = tune_to_offset(&y, offset)?;
        row.qp = Some(centred.omega_hat);
        row.qp_error = Some(centred.omega_hat);
        let tuned = auto_tune(&y, default_threshold(&y), &default_schedule())?;
        if let Some(s) = tuned.solution {
            row.qp_auto = Some(s.omega_hat);
            row.qp_auto_error = Some(s.omega_hat);
        }
    }
    Ok(row)
}

fn median_abs(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let x: Vec<f64> = v.flatten().map(f64::abs).collect();
    (!x.is_empty()).then(|| stats::median(&x))
}

fn summarise(grid: &[f64], rows: &[SweepRow]) -> Vec<GridSummary> {
    grid.iter()
        .map(|&g| {
            let at: Vec<&SweepRow> = rows.iter().filter(|r| r.grid_point == g).collect();
            let gmm: Vec<f64> = at.iter().filter_map(|r| r.gmm_error).collect();
            let abs: Vec<f64> = gmm.iter().map(|e| e.abs()).collect();
            GridSummary {
                grid_point: g,
                mean_path_obs: stats::mean(&at.iter().map(|r| r.path_obs as f64).collect::<Vec<_>>()),
                gmm_failures: at.iter().filter(|r| r.gmm.is_none() && r.gmm_note.is_some()).count(),
                gmm_mean_abs_error: (!abs.is_empty()).then(|| stats::mean(&abs)),
                gmm_median_abs_error: (!abs.is_empty()).then(|| stats::median(&abs)),
                gmm_iqr: (gmm.len() > 1).then(|| stats::iqr(&gmm)),
                qp_median_abs_error: median_abs(at.iter().map(|r| r.qp_error)),
                qp_auto_median_abs_error: median_abs(at.iter().map(|r| r.qp_auto_error)),
            }
        })
        .collect()
}

fn sweep(
    n: usize,
    sigma: f64,
    grid: &[f64],
    seeds: &[u64],
    methods: &[EstimateMethod],
    gmm: &GmmOptions,
) -> Result<SweepResult> {
    let jobs: Vec<(usize, f64, u64)> = grid
        .iter()
        .enumerate()
        .flat_map(|(gi, &g)| seeds.iter().map(move |&s| (gi, g, s)))
        .collect();
    let rows: Result<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(gi, g, s)| {
            let mut row = inactivation_trial(n, sigma, g, row_seed(s, gi), methods, gmm)?;
            row.seed = s;
            Ok(row)
        })
        .collect();
    let rows = rows?;
    let summary = summarise(grid, &rows);
    Ok(SweepResult { rows, summary })
}

/// GMM and QP estimates of `ω_13 = 0` while the competitor starves the edge.
pub fn run_inactivation_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    sweep(cfg.n_samples, cfg.sigma, &cfg.grid, &cfg.seeds, &cfg.methods, &cfg.gmm)
}

// ---------------------------------------------------------------- table 1

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublishedRow {
    pub n: usize,
    pub path_pct: f64,
    pub path_obs: usize,
    pub omega_hat: f64,
}

/// Published thresholds for `σ = 0.1`, `ω_ij = 0`.
pub const PUBLISHED_TABLE1: [PublishedRow; 5] = [
    PublishedRow { n: 500, path_pct: 4.0, path_obs: 20, omega_hat: 0.097 },
    PublishedRow { n: 1000, path_pct: 2.3, path_obs: 23, omega_hat: -0.002 },
    PublishedRow { n: 5000, path_pct: 1.48, path_obs: 74, omega_hat: 0.068 },
    PublishedRow { n: 10000, path_pct: 1.32, path_obs: 132, omega_hat: 0.054 },
    PublishedRow { n: 50000, path_pct: 1.16, path_obs: 578, omega_hat: 0.037 },
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub n: usize,
    /// Minimal stable expected path-observation count, if any was found.
    pub path_obs: Option<usize>,
    pub path_pct: Option<f64>,
    /// Median estimate at the threshold.
    pub omega_hat: Option<f64>,
    pub evaluations: usize,
    pub published_path_obs: Option<usize>,
    pub published_path_pct: Option<f64>,
    pub published_omega_hat: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityCheck {
    pub path_obs: usize,
    pub stable: bool,
    pub median_abs: f64,
    pub iqr: f64,
    pub median_estimate: f64,
}

/// GMM estimates over `seeds`; a failed fit counts as an infinite estimate.
pub fn gmm_estimates_at(n: usize, sigma: f64, path_obs: f64, seeds: &[u64], gmm: &GmmOptions) -> Result<Vec<f64>> {
    let gi = path_obs.to_bits() as usize;
    seeds
        .par_iter()
        .map(|&s| {
            let row = inactivation_trial(n, sigma, path_obs, row_seed(s, gi), &[EstimateMethod::Gmm], gmm)?;
            Ok(row.gmm.unwrap_or(f64::INFINITY))
        })
        .collect()
}

/// Stable when `median |ω̂| ≤ band` and `IQR(ω̂) ≤ band`.
pub fn stability_check(
    n: usize,
    sigma: f64,
    path_obs: usize,
    seeds: &[u64],
    band: f64,
    gmm: &GmmOptions,
) -> Result<StabilityCheck> {
    let est = gmm_estimates_at(n, sigma, path_obs as f64, seeds, gmm)?;
    let abs: Vec<f64> = est.iter().map(|e| e.abs()).collect();
    let median_abs = stats::median(&abs);
    let iqr = if est.iter().all(|e| e.is_finite()) { stats::iqr(&est) } else { f64::INFINITY };
    Ok(StabilityCheck {
        path_obs,
        stable: median_abs <= band && iqr <= band,
        median_abs,
        iqr,
        median_estimate: stats::median(&est),
    })
}

/// Binary search for the smallest stable path-observation count at size `n`.
pub fn stability_threshold(
    n: usize,
    sigma: f64,
    seeds: &[u64],
    band: f64,
    gmm: &GmmOptions,
) -> Result<(Option<StabilityCheck>, usize)> {
    let max_obs = (n - 1) / 2;
    if max_obs < 2 {
        return Ok((None, 0));
    }
    let mut evals = 0;
    let mut hi = (n / 16).clamp(2, max_obs);
    let mut hi_check = loop {
        let c = stability_check(n, sigma, hi, seeds, band, gmm)?;
        evals += 1;
        if c.stable {
            break c;
        }
        if hi == max_obs {
            return Ok((None, evals));
        }
        hi = (hi * 2).min(max_obs);
    };
    let mut lo = 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let c = stability_check(n, sigma, mid, seeds, band, gmm)?;
        evals += 1;
        if c.stable {
            hi = mid;
            hi_check = c;
        } else {
            lo = mid;
        }
    }
    Ok((Some(hi_check), evals))
}

pub fn run_stability_table(cfg: &ExperimentConfig) -> Result<Vec<StabilityRow>> {
    cfg.validate()?;
    cfg.grid
        .iter()
        .map(|&nf| {
            let n = nf as usize;
            let (check, evaluations) = stability_threshold(n, cfg.sigma, &cfg.seeds, cfg.stability_band, &cfg.gmm)?;
            let published = PUBLISHED_TABLE1.iter().find(|r| r.n == n);
            Ok(StabilityRow {
                n,
                path_obs: check.as_ref().map(|c| c.path_obs),
                path_pct: check.as_ref().map(|c| 100.0 * c.path_obs as f64 / n as f64),
                omega_hat: check.as_ref().map(|c| c.median_estimate),
                evaluations,
                published_path_obs: published.map(|p| p.path_obs),
                published_path_pct: published.map(|p| p.path_pct),
                published_omega_hat: published.map(|p| p.omega_hat),
            })
        })
        .collect()
}

// ---------------------------------------------------------------- instability

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub grid_point: f64,
    pub seed: u64,
    pub path_obs: usize,
    pub empirical_frequency: f64,
    pub estimate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub grid_point: f64,
    pub mean_frequency: f64,
    pub failures: usize,
    pub mean_estimate: Option<f64>,
    pub variance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilityTrace {
    pub rows: Vec<TraceRow>,
    pub points: Vec<TracePoint>,
}

impl InstabilityTrace {
    /// Grid point with the largest estimate variance.
    pub fn peak(&self) -> Option<&TracePoint> {
        self.points
            .iter()
            .filter(|p| p.variance.is_some())
            .max_by(|a, b| a.variance.unwrap().total_cmp(&b.variance.unwrap()))
    }
}

/// Per-seed GMM estimates and empirical edge frequency across path counts.
pub fn run_instability_trace(cfg: &ExperimentConfig) -> Result<InstabilityTrace> {
    cfg.validate()?;
    let res = sweep(cfg.n_samples, cfg.sigma, &cfg.grid, &cfg.seeds, &[EstimateMethod::Gmm], &cfg.gmm)?;
    let rows: Vec<TraceRow> = res
        .rows
        .iter()
        .map(|r| TraceRow {
            grid_point: r.grid_point,
            seed: r.seed,
            path_obs: r.path_obs,
            empirical_frequency: r.occupancy,
            estimate: r.gmm,
        })
        .collect();
    let points = cfg
        .grid
        .iter()
        .map(|&g| {
            let at: Vec<&TraceRow> = rows.iter().filter(|r| r.grid_point == g).collect();
            let est: Vec<f64> = at.iter().filter_map(|r| r.estimate).collect();
            TracePoint {
                grid_point: g,
                mean_frequency: stats::mean(&at.iter().map(|r| r.empirical_frequency).collect::<Vec<_>>()),
                failures: at.len() - est.len(),
                mean_estimate: (!est.is_empty()).then(|| stats::mean(&est)),
                variance: (est.len() > 1).then(|| stats::variance(&est)),
            }
        })
        .collect();
    Ok(InstabilityTrace { rows, points })
}

// ---------------------------------------------------------------- output

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case")]
pub enum Outcome {
    Recovery(RecoveryResult),
    Inactivation(SweepResult),
    Table1 { rows: Vec<StabilityRow> },
    Instability(InstabilityTrace),
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    Ok(match cfg.scenario {
        Scenario::Recovery => Outcome::Recovery(run_exact_recovery(cfg)?),
        Scenario::Inactivation => Outcome::Inactivation(run_inactivation_sweep(cfg)?),
        Scenario::Table1 => Outcome::Table1 { rows: run_stability_table(cfg)? },
        Scenario::Instability => Outcome::Instability(run_instability_trace(cfg)?),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: Scenario,
    pub scale: Scale,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub version: String,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Parse { path: path.to_path_buf(), line: 0, msg: e.to_string() }
}

/// Writes one CSV per table plus `manifest.json` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, outcome: &Outcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut notes = Vec::new();
    let mut put = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let p = dir.join(name);
        f(&p)?;
        files.push(p);
        Ok(())
    };
    match outcome {
        Outcome::Recovery(r) => put("recovery.csv", &|p| write_csv(p, &r.rows))?,
        Outcome::Inactivation(r) => {
            put("inactivation_rows.csv", &|p| write_csv(p, &r.rows))?;
            put("inactivation_summary.csv", &|p| write_csv(p, &r.summary))?;
            notes.push("errors are estimate minus the true weight 0; plot |error| on a log2 axis".into());
            notes.push("qp aims the hyperplane at the centre of the noisy boundary using the known sigma; qp_auto follows the default schedule".into());
        }
        Outcome::Table1 { rows } => {
            put("table1.csv", &|p| write_csv(p, rows))?;
            notes.push("estimates are raw values, not log2; the published caption says log2 but its values read as raw estimates near 0".into());
        }
        Outcome::Instability(t) => {
            put("instability_rows.csv", &|p| write_csv(p, &t.rows))?;
            put("instability_points.csv", &|p| write_csv(p, &t.points))?;
        }
    }
    let manifest = Manifest {
        scenario: cfg.scenario,
        scale: cfg.scale,
        config: cfg.clone(),
        files: files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
        warnings: cfg.validate()?,
        notes,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let mp = dir.join("manifest.json");
    fs::write(&mp, serde_json::to_string_pretty(&manifest)?)?;
    files.push(mp);
    Ok(files)
}
