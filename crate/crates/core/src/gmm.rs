//! One-dimensional Gaussian mixtures on coordinate differences `Y_ij`.
//!
//! Under log-normal noise `Y_ij` is a finite Gaussian mixture whose atom
//! components sit at `ω*(k,j) - ω*(k,i)` for common extended ancestors `k`,
//! plus a residual part. The leftmost component estimates `ω_ij`.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::WeightedDag;
use crate::report::{Diagnostics, EstimateMethod, EstimateReport, FLAG_PRUNED_COMPONENTS};
use crate::simulate::{
    simulate_with_feed, vertex_seed, DifferenceSample, InnovationSpec, NoiseFeed, NoiseSpec,
};
use crate::stats::{self, Summary};

pub const DEFAULT_WEIGHT_FLOOR: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    #[default]
    Unequal,
    /// One variance shared by all components.
    Equal,
}

impl VarianceMode {
    pub fn n_params(self, k: usize) -> usize {
        match self {
            VarianceMode::Unequal => 3 * k - 1,
            VarianceMode::Equal => 2 * k,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop once `|Δ loglik| < tol_per_sample · N`.
    pub tol_per_sample: f64,
    pub restarts: usize,
    pub seed: u64,
    pub variance_mode: VarianceMode,
    /// Components at the variance floor with less weight than this are pruned.
    pub weight_floor: f64,
    pub keep_responsibilities: bool,
    #[serde(skip)]
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iter: 500,
            tol_per_sample: 1e-8,
            restarts: 8,
            seed: 0,
            variance_mode: VarianceMode::Unequal,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            keep_responsibilities: false,
            cancel: None,
        }
    }
}

impl EmOptions {
    fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed))
    }
}

/// A fitted mixture; components are sorted by mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    #[serde(with = "crate::one_based")]
    pub i: usize,
    #[serde(with = "crate::one_based")]
    pub j: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub pi: Vec<f64>,
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
    pub loglik: f64,
    pub bic: f64,
    pub n_samples: usize,
    pub variance_mode: VarianceMode,
    pub variance_floor: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Components removed after collapsing.
    pub pruned: usize,
    /// Log-likelihood after each E-step of the final run.
    pub loglik_trace: Vec<f64>,
    /// Row-major `N × K` posterior probabilities, when retained.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub responsibilities: Option<Vec<f64>>,
}

impl MixtureFit {
    /// Mixture log-density at `x`.
    pub fn log_density(&self, x: f64) -> f64 {
        let terms: Vec<f64> = (0..self.k)
            .map(|c| self.pi[c].ln() + normal_log_pdf(x, self.mu[c], self.var[c]))
            .collect();
        log_sum_exp(&terms)
    }
}

/// One BIC evaluation during model selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicEntry {
    pub k_requested: usize,
    pub k: usize,
    pub loglik: f64,
    pub bic: f64,
}

fn normal_log_pdf(x: f64, mu: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (x - mu) * (x - mu) / (2.0 * var)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-likelihood of `y` under fixed parameters.
pub fn log_likelihood(y: &[f64], pi: &[f64], mu: &[f64], var: &[f64]) -> f64 {
    let p = Params { pi: pi.to_vec(), mu: mu.to_vec(), var: var.to_vec() };
    e_step(y, &p, None)
}

#[derive(Clone, Debug)]
struct Params {
    pi: Vec<f64>,
    mu: Vec<f64>,
    var: Vec<f64>,
}

impl Params {
    fn k(&self) -> usize {
        self.pi.len()
    }

    fn remove(&mut self, c: usize) {
        self.pi.remove(c);
        self.mu.remove(c);
        self.var.remove(c);
        let s: f64 = self.pi.iter().sum();
        self.pi.iter_mut().for_each(|p| *p /= s);
    }
}

/// Fills `resp` (if given) with posterior probabilities and returns the log-likelihood.
fn e_step(y: &[f64], p: &Params, mut resp: Option<&mut [f64]>) -> f64 {
    let k = p.k();
    let consts: Vec<f64> =
        (0..k).map(|c| p.pi[c].ln() - 0.5 * (2.0 * PI * p.var[c]).ln()).collect();
    let inv: Vec<f64> = p.var.iter().map(|v| 0.5 / v).collect();
    let mut lp = vec![0.0; k];
    // compensated sum keeps per-step changes visible near convergence
    let (mut ll, mut comp) = (0.0f64, 0.0f64);
    for (nu, &x) in y.iter().enumerate() {
        let mut m = f64::NEG_INFINITY;
        for c in 0..k {
            let d = x - p.mu[c];
            lp[c] = consts[c] - d * d * inv[c];
            m = m.max(lp[c]);
        }
        let mut sum = 0.0;
        for v in lp.iter_mut() {
            let t = *v - m;
            *v = if t < -40.0 { 0.0 } else { t.exp() };
            sum += *v;
        }
        let lse = m + sum.ln();
        let t = ll + lse;
        comp += if ll.abs() >= lse.abs() { (ll - t) + lse } else { (lse - t) + ll };
        ll = t;
        if let Some(r) = resp.as_deref_mut() {
            let row = &mut r[nu * k..(nu + 1) * k];
            for c in 0..k {
                row[c] = lp[c] / sum;
            }
        }
    }
    ll + comp
}

enum MStep {
    Ok(Params),
    Collapsed(Params, usize),
}

fn m_step(y: &[f64], resp: &[f64], k: usize, floor: f64, opts: &EmOptions) -> MStep {
    let n = y.len() as f64;
    let mut nk = vec![0.0; k];
    let mut sx = vec![0.0; k];
    for (nu, &x) in y.iter().enumerate() {
        for c in 0..k {
            let r = resp[nu * k + c];
            nk[c] += r;
            sx[c] += r * x;
        }
    }
    let mu: Vec<f64> = (0..k).map(|c| if nk[c] > 0.0 { sx[c] / nk[c] } else { 0.0 }).collect();
    let mut ss = vec![0.0; k];
    for (nu, &x) in y.iter().enumerate() {
        for c in 0..k {
            let d = x - mu[c];
            ss[c] += resp[nu * k + c] * d * d;
        }
    }
    let pi: Vec<f64> = nk.iter().map(|v| v / n).collect();
    let raw: Vec<f64> = match opts.variance_mode {
        VarianceMode::Unequal => {
            (0..k).map(|c| if nk[c] > 0.0 { ss[c] / nk[c] } else { 0.0 }).collect()
        }
        VarianceMode::Equal => vec![ss.iter().sum::<f64>() / n; k],
    };
    let var: Vec<f64> = raw.iter().map(|v| v.max(floor)).collect();
    let params = Params { pi, mu, var };
    if k > 1 {
        let min_mass = 1e-8 * n.max(1.0);
        for c in 0..k {
            if nk[c] < min_mass || (raw[c] <= floor && params.pi[c] < opts.weight_floor) {
                return MStep::Collapsed(params, c);
            }
        }
    }
    MStep::Ok(params)
}

/// Resumable EM run from one starting point.
struct EmState {
    params: Params,
    resp: Vec<f64>,
    loglik: f64,
    trace: Vec<f64>,
    iterations: usize,
    total_iter: usize,
    converged: bool,
    pruned: usize,
}

impl EmState {
    fn new(y: &[f64], params: Params) -> Self {
        let mut resp = vec![0.0; y.len() * params.k()];
        let loglik = e_step(y, &params, Some(&mut resp));
        EmState {
            params,
            resp,
            loglik,
            trace: vec![loglik],
            iterations: 0,
            total_iter: 0,
            converged: false,
            pruned: 0,
        }
    }

    /// Iterates until convergence or until `limit` M-steps have been taken overall.
    fn advance(&mut self, y: &[f64], floor: f64, opts: &EmOptions, limit: usize) -> Result<()> {
        let tol = opts.tol_per_sample * y.len() as f64;
        while !self.converged && self.total_iter < limit {
            if opts.cancelled() {
                return Err(Error::Cancelled);
            }
            self.total_iter += 1;
            match m_step(y, &self.resp, self.params.k(), floor, opts) {
                MStep::Ok(p) => self.params = p,
                MStep::Collapsed(mut p, c) => {
                    p.remove(c);
                    let total = self.total_iter;
                    *self = EmState { pruned: self.pruned + 1, total_iter: total, ..EmState::new(y, p) };
                    continue;
                }
            }
            self.iterations += 1;
            let ll = e_step(y, &self.params, Some(&mut self.resp));
            self.converged = (ll - self.loglik).abs() < tol;
            self.loglik = ll;
            self.trace.push(ll);
        }
        Ok(())
    }

    /// Fewer prunes first, then a log-likelihood gain above `margin`; starts
    /// that reached the same optimum keep the earlier one.
    fn beats(&self, other: &EmState, margin: f64) -> bool {
        self.pruned < other.pruned || (self.pruned == other.pruned && self.loglik > other.loglik + margin)
    }
}

/// Iterations every start receives before only the best one is continued.
const SHORT_RUN: usize = 25;

fn variance_floor(y: &[f64]) -> f64 {
    let range = stats::max(y) - stats::min(y);
    if range > 0.0 {
        1e-8 * range * range
    } else {
        1e-12
    }
}

fn initial_params(sorted: &[f64], k: usize, jitter: Option<&mut ChaCha8Rng>, floor: f64) -> Params {
    let var0 = (stats::variance(sorted) / (k * k) as f64).max(floor);
    let var0 = if var0.is_finite() { var0 } else { floor };
    let mut mu: Vec<f64> = (0..k)
        .map(|c| stats::quantile_sorted(sorted, (c as f64 + 0.5) / k as f64))
        .collect();
    if let Some(rng) = jitter {
        let sd = var0.sqrt();
        for m in mu.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *m += 0.5 * sd * e;
        }
    }
    Params { pi: vec![1.0 / k as f64; k], mu, var: vec![var0; k] }
}

/// Fits a `k`-component mixture by EM with the best of `opts.restarts` starts.
pub fn em_fit(y: &DifferenceSample, k: usize, opts: &EmOptions) -> Result<MixtureFit> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    if k == 0 || n < k {
        return Err(Error::Config(format!("need 1 <= K <= N, got K = {k} with N = {n}")));
    }
    if let Some(v) = y.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("differences must be finite, got {v}")));
    }
    // fit on centred data so a shift of y moves only the means
    let centre = stats::median(&y.values);
    let centred: Vec<f64> = y.values.iter().map(|v| v - centre).collect();
    let sorted = stats::sorted(&centred);
    let floor = variance_floor(&centred);

    let starts = if k == 1 { 1 } else { opts.restarts.max(1) };
    let mut best: Option<EmState> = None;
    for r in 0..starts {
        let init = if r == 0 {
            initial_params(&sorted, k, None, floor)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(vertex_seed(opts.seed, r));
            initial_params(&sorted, k, Some(&mut rng), floor)
        };
        let mut state = EmState::new(&centred, init);
        state.advance(&centred, floor, opts, SHORT_RUN.min(opts.max_iter))?;
        if best.as_ref().is_none_or(|b| state.beats(b, opts.tol_per_sample * n as f64)) {
            best = Some(state);
        }
    }
    let mut run = best.expect("at least one start");
    run.advance(&centred, floor, opts, opts.max_iter)?;

    let k_fit = run.params.k();
    let mut order: Vec<usize> = (0..k_fit).collect();
    order.sort_by(|&a, &b| run.params.mu[a].total_cmp(&run.params.mu[b]));
    let responsibilities = opts.keep_responsibilities.then(|| {
        let mut r = Vec::with_capacity(n * k_fit);
        for nu in 0..n {
            r.extend(order.iter().map(|&c| run.resp[nu * k_fit + c]));
        }
        r
    });
    let p = opts.variance_mode.n_params(k_fit) as f64;
    Ok(MixtureFit {
        i: y.i,
        j: y.j,
        k: k_fit,
        pi: order.iter().map(|&c| run.params.pi[c]).collect(),
        mu: order.iter().map(|&c| run.params.mu[c] + centre).collect(),
        var: order.iter().map(|&c| run.params.var[c]).collect(),
        loglik: run.loglik,
        bic: -2.0 * run.loglik + p * (n as f64).ln(),
        n_samples: n,
        variance_mode: opts.variance_mode,
        variance_floor: floor,
        iterations: run.iterations,
        converged: run.converged,
        pruned: run.pruned,
        loglik_trace: run.trace,
        responsibilities,
    })
}

/// Minimum-BIC fit over `K = 1..=k_max` together with every evaluation.
pub fn select_k_with_path(
    y: &DifferenceSample,
    k_max: usize,
    opts: &EmOptions,
) -> Result<(MixtureFit, Vec<BicEntry>)> {
    if k_max == 0 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    let mut best: Option<MixtureFit> = None;
    let mut path = Vec::new();
    for k in 1..=k_max.min(y.len().max(1)) {
        let fit = em_fit(y, k, opts)?;
        path.push(BicEntry { k_requested: k, k: fit.k, loglik: fit.loglik, bic: fit.bic });
        if best.as_ref().is_none_or(|b| fit.bic < b.bic) {
            best = Some(fit);
        }
    }
    Ok((best.expect("k_max >= 1"), path))
}

pub fn select_k(y: &DifferenceSample, k_max: usize, opts: &EmOptions) -> Result<MixtureFit> {
    select_k_with_path(y, k_max, opts).map(|(f, _)| f)
}

/// Components allowed for the non-atomic residual on top of one per atom.
pub const RESIDUAL_COMPONENTS: usize = 4;

/// Default `k_max`: one component per common extended ancestor plus room for the residual.
pub fn default_k_max(dag: &WeightedDag, i: usize, j: usize) -> Result<usize> {
    Ok(dag.common_extended_ancestors(i, j)?.len() + RESIDUAL_COMPONENTS)
}

/// Mean of the leftmost component whose weight reaches `weight_floor`.
pub fn smallest_peak(fit: &MixtureFit, weight_floor: f64) -> Result<EstimateReport> {
    let c = (0..fit.k)
        .filter(|&c| fit.pi[c] >= weight_floor)
        .min_by(|&a, &b| fit.mu[a].total_cmp(&fit.mu[b]))
        .ok_or(Error::NoComponentAboveFloor { floor: weight_floor })?;
    let mut flags = Vec::new();
    if fit.pruned > 0 {
        flags.push(FLAG_PRUNED_COMPONENTS.to_string());
    }
    Ok(EstimateReport {
        i: fit.i,
        j: fit.j,
        method: EstimateMethod::Gmm,
        estimate: fit.mu[c],
        diagnostics: Diagnostics {
            n_samples: fit.n_samples,
            chosen_k: Some(fit.k),
            leftmost_weight: Some(fit.pi[c]),
            leftmost_variance: Some(fit.var[c]),
            occupancy_fraction: None,
            flags,
        },
    })
}

/// `ω̂_ij = min_ν Y_ij^ν`, exact for noise-free data when the edge is realised.
pub fn min_estimator(y: &DifferenceSample) -> Result<EstimateReport> {
    if y.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(EstimateReport {
        i: y.i,
        j: y.j,
        method: EstimateMethod::Min,
        estimate: y.min(),
        diagnostics: Diagnostics { n_samples: y.len(), ..Diagnostics::default() },
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmOptions {
    pub k_max: Option<usize>,
    pub weight_floor: f64,
    pub em: EmOptions,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions { k_max: None, weight_floor: DEFAULT_WEIGHT_FLOOR, em: EmOptions::default() }
    }
}

/// BIC selection followed by the smallest-peak rule. `k_max` falls back to
/// `1 + RESIDUAL_COMPONENTS` when neither the options nor a graph provide one.
pub fn estimate_gmm(
    y: &DifferenceSample,
    dag: Option<&WeightedDag>,
    opts: &GmmOptions,
) -> Result<(EstimateReport, MixtureFit)> {
    let k_max = match (opts.k_max, dag) {
        (Some(k), _) => k,
        (None, Some(g)) => default_k_max(g, y.i, y.j)?,
        (None, None) => 1 + RESIDUAL_COMPONENTS,
    };
    let fit = select_k(y, k_max, &opts.em)?;
    let report = smallest_peak(&fit, opts.weight_floor)?;
    Ok((report, fit))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct VarianceCheckConfig {
    pub trials: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub feed: NoiseFeed,
    pub gmm: GmmOptions,
}

impl Default for VarianceCheckConfig {
    fn default() -> Self {
        VarianceCheckConfig {
            trials: 500,
            n_samples: 2000,
            seed: 0,
            feed: NoiseFeed::default(),
            gmm: GmmOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarianceCheck {
    #[serde(with = "crate::one_based")]
    pub i: usize,
    #[serde(with = "crate::one_based")]
    pub j: usize,
    /// `ω*(i, j)`.
    pub truth: f64,
    /// `σ_i² + σ_j²`.
    pub expected_variance: f64,
    pub trials: usize,
    /// Trials where no component passed the weight floor.
    pub failures: usize,
    pub peak: Summary,
    /// Average fitted variance of the winning component.
    pub mean_component_variance: f64,
    /// `min_ν Y_ij^ν` on noise-free data plus fresh `ε_j - ε_i`.
    pub literal: Summary,
    pub peak_estimates: Vec<f64>,
    pub literal_estimates: Vec<f64>,
}

impl VarianceCheck {
    /// Whether the mean peak estimate lies within `3·sqrt(var / trials)` of the truth.
    pub fn mean_within_clt_band(&self) -> bool {
        let band = 3.0 * (self.peak.variance / self.peak.count as f64).sqrt();
        (self.peak.mean - self.truth).abs() <= band
    }
}

/// Repeats the smallest-peak estimate over independent seeds.
pub fn estimator_variance_check(
    dag: &WeightedDag,
    inn: &InnovationSpec,
    noise: &NoiseSpec,
    i: usize,
    j: usize,
    cfg: &VarianceCheckConfig,
) -> Result<VarianceCheck> {
    noise.validate(dag.n())?;
    if !dag.is_ancestor(i, j)? {
        return Err(Error::Config(format!("vertex {} is not an ancestor of {}", i + 1, j + 1)));
    }
    let (si, sj) = (noise.sigmas[i], noise.sigmas[j]);
    let expected_variance = si * si + sj * sj;
    if expected_variance == 0.0 {
        return Err(Error::DegenerateNoise);
    }
    if cfg.trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let truth = dag.kleene_star().weight(i, j).value();
    let k_max = match cfg.gmm.k_max {
        Some(k) => k,
        None => default_k_max(dag, i, j)?,
    };
    let clean = NoiseSpec::noise_free(dag.n());

    let per_trial: Vec<Result<(Option<(f64, f64)>, f64)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = vertex_seed(cfg.seed, t);
            let noisy = simulate_with_feed(dag, inn, noise, cfg.n_samples, seed, cfg.feed)?;
            let y = noisy.differences(i, j)?;
            let mut em = cfg.gmm.em.clone();
            em.seed = seed;
            let fit = select_k(&y, k_max, &em)?;
            let peak = match smallest_peak(&fit, cfg.gmm.weight_floor) {
                Ok(r) => Some((r.estimate, r.diagnostics.leftmost_variance.unwrap_or(f64::NAN))),
                Err(Error::NoComponentAboveFloor { .. }) => None,
                Err(e) => return Err(e),
            };

            let base = simulate_with_feed(dag, inn, &clean, cfg.n_samples, seed, cfg.feed)?;
            let m = base.differences(i, j)?.min();
            let mut rng = ChaCha8Rng::seed_from_u64(vertex_seed(seed, usize::MAX));
            let (ei, ej): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            Ok((peak, m + sj * ej - si * ei))
        })
        .collect();

    let mut peak_estimates = Vec::new();
    let mut comp_vars = Vec::new();
    let mut literal_estimates = Vec::with_capacity(cfg.trials);
    let mut failures = 0;
    for r in per_trial {
        let (peak, lit) = r?;
        match peak {
            Some((e, v)) => {
                peak_estimates.push(e);
                comp_vars.push(v);
            }
            None => failures += 1,
        }
        literal_estimates.push(lit);
    }
    Ok(VarianceCheck {
        i,
        j,
        truth,
        expected_variance,
        trials: cfg.trials,
        failures,
        peak: Summary::of(&peak_estimates),
        mean_component_variance: stats::mean(&comp_vars),
        literal: Summary::of(&literal_estimates),
        peak_estimates,
        literal_estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::simulate::simulate;

    fn mixture_sample(n: usize, comps: &[(f64, f64, f64)], seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = comps.len() - 1;
                for (c, (w, _, _)) in comps.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                let (_, m, v) = comps[pick];
                let z: f64 = rng.sample(StandardNormal);
                m + v.sqrt() * z
            })
            .collect()
    }

    #[test]
    fn single_component_is_closed_form() {
        let y = DifferenceSample::from_values(vec![1.0, 2.0, 4.0, 7.0]);
        let fit = em_fit(&y, 1, &EmOptions::default()).unwrap();
        let m = 3.5;
        let v = [1.0f64, 2.0, 4.0, 7.0].iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
        assert!((fit.mu[0] - m).abs() < 1e-12);
        assert!((fit.var[0] - v).abs() < 1e-12);
        assert_eq!(fit.pi, vec![1.0]);
        assert!(fit.converged);
    }

    #[test]
    fn recovers_two_separated_components() {
        let x = mixture_sample(5000, &[(0.5, 0.0, 0.02), (0.5, 2.0, 0.02)], 11);
        let fit = em_fit(&DifferenceSample::from_values(x), 2, &EmOptions::default()).unwrap();
        assert!((fit.mu[0] - 0.0).abs() < 0.03, "{:?}", fit.mu);
        assert!((fit.mu[1] - 2.0).abs() < 0.03, "{:?}", fit.mu);
        assert!((fit.pi[0] - 0.5).abs() < 0.03 && (fit.pi[1] - 0.5).abs() < 0.03);
        assert!((fit.pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fit_dominates_generating_parameters() {
        let x = mixture_sample(5000, &[(0.5, 0.0, 0.02), (0.5, 2.0, 0.02)], 12);
        let truth = log_likelihood(&x, &[0.5, 0.5], &[0.0, 2.0], &[0.02, 0.02]);
        let fit = em_fit(&DifferenceSample::from_values(x), 2, &EmOptions::default()).unwrap();
        assert!(fit.loglik >= truth - 1e-6 * 5000.0);
    }

    #[test]
    fn loglik_trace_is_monotone_and_bic_matches() {
        let x = mixture_sample(800, &[(0.3, -1.0, 0.1), (0.7, 0.5, 0.3)], 3);
        let opts = EmOptions { keep_responsibilities: true, ..EmOptions::default() };
        let fit = em_fit(&DifferenceSample::from_values(x), 3, &opts).unwrap();
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()));
        }
        let p = (3 * fit.k - 1) as f64;
        assert!((fit.bic - (-2.0 * fit.loglik + p * (800f64).ln())).abs() < 1e-9);
        let r = fit.responsibilities.unwrap();
        for row in r.chunks(fit.k) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn smallest_peak_picks_leftmost_above_floor() {
        let mut fit = em_fit(&DifferenceSample::from_values(vec![0.0, 1.0, 2.0, 3.0]), 2, &EmOptions::default())
            .unwrap();
        fit.k = 2;
        fit.mu = vec![1.5, 3.1];
        fit.pi = vec![0.4, 0.6];
        fit.var = vec![0.02, 0.02];
        assert_eq!(smallest_peak(&fit, 0.01).unwrap().estimate, 1.5);
        fit.mu = vec![-0.2, 1.5];
        fit.pi = vec![0.004, 0.996];
        assert_eq!(smallest_peak(&fit, 0.01).unwrap().estimate, 1.5);
        assert!(matches!(smallest_peak(&fit, 0.999), Err(Error::NoComponentAboveFloor { .. })));
    }

    #[test]
    fn min_estimator_basics() {
        let r = min_estimator(&DifferenceSample::from_values(vec![2.5])).unwrap();
        assert_eq!(r.estimate, 2.5);
        assert!(min_estimator(&DifferenceSample::from_values(vec![])).is_err());
    }

    #[test]
    fn gmm_pair_two_four() {
        let dag = presets::example_gmm();
        let noise = NoiseSpec::uniform(4, 0.1);
        let s = simulate(&dag, &InnovationSpec::default(), &noise, 2000, 5).unwrap();
        let y = s.differences(1, 3).unwrap();
        let (r, _) = estimate_gmm(&y, Some(&dag), &GmmOptions::default()).unwrap();
        assert!((r.estimate - 1.5).abs() < 0.05, "{}", r.estimate);
        assert_eq!((r.i, r.j), (1, 3));
    }

    #[test]
    fn variance_check_refuses_noise_free() {
        let dag = presets::example_gmm();
        let err = estimator_variance_check(
            &dag,
            &InnovationSpec::default(),
            &NoiseSpec::noise_free(4),
            1,
            3,
            &VarianceCheckConfig { trials: 2, ..Default::default() },
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateNoise));
    }

    #[test]
    fn cancellation_stops_the_fit() {
        let flag = Arc::new(AtomicBool::new(true));
        let opts = EmOptions { cancel: Some(flag), ..EmOptions::default() };
        let y = DifferenceSample::from_values((0..50).map(|v| v as f64).collect());
        assert!(matches!(em_fit(&y, 2, &opts), Err(Error::Cancelled)));
    }
}
