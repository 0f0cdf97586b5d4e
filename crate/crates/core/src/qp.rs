//! Hyperplane fit of `ω_ij` by quadratic programming.
//!
//! For one pair the problem is
//!
//! ```text
//! min  K1 Σ_ν δ^ν + K2 ω'²   s.t.  Y'^ν ≤ ω' + δ^ν,  δ^ν ≥ 0
//! ```
//!
//! on shifted data `Y' = Y - min Y`. Eliminating the slacks leaves the convex
//! piecewise-quadratic `g(ω') = K1 Σ max(0, Y' - ω') + K2 ω'²`, solved exactly
//! by [`solve_pair_1d`]. The same instance in canonical form goes through the
//! dual active-set solver [`solve_qp_generic`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{Diagnostics, EstimateMethod, EstimateReport, FLAG_NEEDS_MANUAL_TUNING};
use crate::simulate::DifferenceSample;
use crate::stats;

/// Ridge added to the slack block of the per-pair canonical form.
pub const SLACK_REGULARIZATION: f64 = 1e-10;

/// `min -dᵀb + ½ bᵀ D b  s.t.  Aᵀ b ≥ b0`; `A` holds one constraint per column.
#[derive(Clone, Debug, PartialEq)]
pub struct QpCanonical {
    pub d_mat: DMatrix<f64>,
    pub d: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b0: DVector<f64>,
    /// Added to the diagonal of `D` for the dual method; the reported point is
    /// re-solved on the identified active set with the unregularized `D`.
    pub regularization: f64,
}

impl QpCanonical {
    pub fn new(d_mat: DMatrix<f64>, d: DVector<f64>, a: DMatrix<f64>, b0: DVector<f64>) -> Result<Self> {
        let n = d.len();
        if d_mat.nrows() != n || d_mat.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: d_mat.nrows() });
        }
        if a.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.nrows() });
        }
        if a.ncols() != b0.len() {
            return Err(Error::DimensionMismatch { expected: a.ncols(), found: b0.len() });
        }
        let asym = (&d_mat - d_mat.transpose()).amax();
        if asym > 1e-12 * (1.0 + d_mat.amax()) {
            return Err(Error::Config("D must be symmetric".into()));
        }
        Ok(QpCanonical { d_mat, d, a, b0, regularization: 0.0 })
    }

    pub fn n_vars(&self) -> usize {
        self.d.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.b0.len()
    }

    pub fn objective(&self, b: &DVector<f64>) -> f64 {
        -self.d.dot(b) + 0.5 * b.dot(&(&self.d_mat * b))
    }

    /// The per-pair instance over `b = (ω', δ^1, …, δ^N)` with `2N` constraints.
    pub fn pair(y_shifted: &[f64], k1: f64, k2: f64) -> Self {
        let n = y_shifted.len();
        let mut d_mat = DMatrix::zeros(n + 1, n + 1);
        d_mat[(0, 0)] = 2.0 * k2;
        let mut d = DVector::from_element(n + 1, -k1);
        d[0] = 0.0;
        let mut a = DMatrix::zeros(n + 1, 2 * n);
        let mut b0 = DVector::zeros(2 * n);
        for (nu, &y) in y_shifted.iter().enumerate() {
            a[(0, nu)] = 1.0;
            a[(nu + 1, nu)] = 1.0;
            b0[nu] = y;
            a[(nu + 1, n + nu)] = 1.0;
        }
        QpCanonical { d_mat, d, a, b0, regularization: SLACK_REGULARIZATION }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenericSolution {
    pub b: DVector<f64>,
    /// Indices of the active constraints.
    pub active: Vec<usize>,
    /// One multiplier per constraint, zero off the active set.
    pub multipliers: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub polished: bool,
}

/// Rotation `(c, s)` with `[c s; -s c]·[a; b] = [h; 0]`.
fn givens(a: f64, b: f64) -> (f64, f64) {
    let h = a.hypot(b);
    if h == 0.0 {
        (1.0, 0.0)
    } else {
        (a / h, b / h)
    }
}

fn rotate_cols(m: &mut DMatrix<f64>, i: usize, k: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (x, y) = (m[(r, i)], m[(r, k)]);
        m[(r, i)] = c * x + s * y;
        m[(r, k)] = -s * x + c * y;
    }
}

/// Goldfarb–Idnani dual active-set method.
pub fn solve_qp_generic(p: &QpCanonical) -> Result<GenericSolution> {
    let n = p.n_vars();
    let m = p.n_constraints();
    let mut g = p.d_mat.clone();
    for k in 0..n {
        g[(k, k)] += p.regularization;
    }
    let chol = g.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::NotPositiveDefinite)?;
    let mut j = l_inv.transpose();
    let mut r = DMatrix::<f64>::zeros(n, n);

    let mut x = chol.solve(&p.d);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let scale = 1.0 + p.b0.amax() + p.a.amax();
    let feas_tol = 1e-12 * scale;
    let max_iter = 10 * (n + m) + 100;
    let mut iterations = 0;

    let slack = |x: &DVector<f64>, c: usize| p.a.column(c).dot(x) - p.b0[c];

    loop {
        // most violated inactive constraint
        let mut pick: Option<(usize, f64)> = None;
        for c in 0..m {
            if active.contains(&c) {
                continue;
            }
            let s = slack(&x, c);
            if s < -feas_tol && pick.is_none_or(|(_, best)| s < best) {
                pick = Some((c, s));
            }
        }
        let Some((pc, _)) = pick else { break };
        let np = p.a.column(pc).clone_owned();
        u.push(0.0);

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::NotConverged { iterations: max_iter });
            }
            let q = active.len();
            let dv = j.transpose() * &np;
            let mut z = DVector::zeros(n);
            for k in q..n {
                z.axpy(dv[k], &j.column(k), 1.0);
            }
            let mut rv = vec![0.0; q];
            for row in (0..q).rev() {
                let mut acc = dv[row];
                for col in row + 1..q {
                    acc -= r[(row, col)] * rv[col];
                }
                rv[row] = acc / r[(row, row)];
            }

            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (k, &rk) in rv.iter().enumerate() {
                if rk > 0.0 {
                    let ratio = u[k] / rk;
                    if ratio < t1 {
                        t1 = ratio;
                        drop_at = Some(k);
                    }
                }
            }
            let zn = z.dot(&np);
            let z_small = z.amax() <= 1e-14 * (1.0 + np.amax());
            let t2 = if z_small || zn <= 0.0 { f64::INFINITY } else { -slack(&x, pc) / zn };

            if t1.is_infinite() && t2.is_infinite() {
                return Err(Error::Infeasible { constraint: pc });
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                x.axpy(t, &z, 1.0);
            }
            for k in 0..q {
                u[k] -= t * rv[k];
            }
            u[q] += t;

            if t2 <= t1 {
                // add pc: rotate dv so that only its first q+1 entries are non-zero
                let mut dv = dv;
                for k in (q + 1..n).rev() {
                    let (c, s) = givens(dv[k - 1], dv[k]);
                    if s == 0.0 {
                        continue;
                    }
                    dv[k - 1] = c * dv[k - 1] + s * dv[k];
                    dv[k] = 0.0;
                    rotate_cols(&mut j, k - 1, k, c, s);
                }
                for k in 0..=q {
                    r[(k, q)] = dv[k];
                }
                active.push(pc);
                break;
            }

            let l = drop_at.expect("partial step has a blocking constraint");
            active.remove(l);
            u.remove(l);
            for col in l..q - 1 {
                for row in 0..=col + 1 {
                    r[(row, col)] = r[(row, col + 1)];
                }
            }
            for row in 0..n {
                r[(row, q - 1)] = 0.0;
            }
            for k in l..q - 1 {
                let (c, s) = givens(r[(k, k)], r[(k + 1, k)]);
                for col in k..q - 1 {
                    let (a, b) = (r[(k, col)], r[(k + 1, col)]);
                    r[(k, col)] = c * a + s * b;
                    r[(k + 1, col)] = -s * a + c * b;
                }
                r[(k + 1, k)] = 0.0;
                rotate_cols(&mut j, k, k + 1, c, s);
            }
        }
    }

    let mut multipliers = DVector::zeros(m);
    for (k, &c) in active.iter().enumerate() {
        multipliers[c] = u[k];
    }
    let mut sol = GenericSolution {
        objective: p.objective(&x),
        b: x,
        active,
        multipliers,
        iterations,
        polished: false,
    };
    if p.regularization > 0.0 {
        if let Some(better) = polish(p, &sol) {
            sol = better;
        }
    }
    Ok(sol)
}

/// Re-solves the KKT system of the unregularized problem on the active set.
fn polish(p: &QpCanonical, sol: &GenericSolution) -> Option<GenericSolution> {
    let n = p.n_vars();
    let q = sol.active.len();
    let mut kkt = DMatrix::zeros(n + q, n + q);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.d_mat);
    let mut rhs = DVector::zeros(n + q);
    rhs.rows_mut(0, n).copy_from(&p.d);
    for (k, &c) in sol.active.iter().enumerate() {
        for row in 0..n {
            kkt[(row, n + k)] = -p.a[(row, c)];
            kkt[(n + k, row)] = p.a[(row, c)];
        }
        rhs[n + k] = p.b0[c];
    }
    let z = kkt.lu().solve(&rhs)?;
    let x = z.rows(0, n).clone_owned();
    let scale = 1.0 + p.b0.amax() + p.a.amax();
    let feasible = (0..p.n_constraints())
        .all(|c| p.a.column(c).dot(&x) - p.b0[c] >= -1e-10 * scale);
    let dual_ok = (0..q).all(|k| z[n + k] >= -1e-10 * scale);
    if !(feasible && dual_ok && x.iter().all(|v| v.is_finite())) {
        return None;
    }
    let mut multipliers = DVector::zeros(p.n_constraints());
    for (k, &c) in sol.active.iter().enumerate() {
        multipliers[c] = z[n + k].max(0.0);
    }
    Some(GenericSolution {
        objective: p.objective(&x),
        b: x,
        active: sol.active.clone(),
        multipliers,
        iterations: sol.iterations,
        polished: true,
    })
}

/// Solution of the per-pair hyperplane problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    #[serde(with = "crate::one_based")]
    pub i: usize,
    #[serde(with = "crate::one_based")]
    pub j: usize,
    /// `ω'` on shifted data.
    pub omega_prime: f64,
    /// `ω' + min Y`.
    pub omega_hat: f64,
    pub deltas: Vec<f64>,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    pub objective: f64,
    /// Number of tight boundary constraints `Y'^ν = ω' + δ^ν` with `Y'^ν ≥ ω'`.
    pub active_count: usize,
    /// `min Y`, subtracted before solving.
    pub shift: f64,
}

impl QpSolution {
    pub fn report(&self) -> EstimateReport {
        EstimateReport {
            i: self.i,
            j: self.j,
            method: EstimateMethod::Qp,
            estimate: self.omega_hat,
            diagnostics: Diagnostics { n_samples: self.deltas.len(), ..Diagnostics::default() },
        }
    }
}

fn check_tuning(k1: f64, k2: f64) -> Result<()> {
    if !(k1 >= 0.0 && k2 >= 0.0 && k1.is_finite() && k2.is_finite()) {
        return Err(Error::Config(format!("K1 and K2 must be non-negative, got ({k1}, {k2})")));
    }
    if (k1 + k2 - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("K1 + K2 must equal 1, got {}", k1 + k2)));
    }
    if k2 == 0.0 {
        return Err(Error::UnboundedTuning);
    }
    Ok(())
}

fn shifted(y: &DifferenceSample) -> Result<(f64, Vec<f64>)> {
    if y.is_empty() {
        return Err(Error::EmptySamples);
    }
    if let Some(v) = y.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("differences must be finite, got {v}")));
    }
    let shift = y.min();
    Ok((shift, y.values.iter().map(|v| v - shift).collect()))
}

/// `g(ω') = K1 Σ max(0, Y' - ω') + K2 ω'²`.
pub fn pair_objective(y_shifted: &[f64], k1: f64, k2: f64, omega: f64) -> f64 {
    k1 * y_shifted.iter().map(|v| (v - omega).max(0.0)).sum::<f64>() + k2 * omega * omega
}

/// Exact minimizer of `g` by a scan over sorted breakpoints.
pub fn minimize_pair_objective(y_shifted: &[f64], k1: f64, k2: f64) -> f64 {
    let s = stats::sorted(y_shifted);
    let n = s.len();
    let mut idx = 0;
    // g is decreasing left of the smallest breakpoint
    let mut prev = f64::NEG_INFINITY;
    let mut above = n;
    while idx < n {
        let b = s[idx];
        let cand = k1 * above as f64 / (2.0 * k2);
        if cand > prev && cand < b {
            return cand;
        }
        let mut end = idx;
        while end < n && s[end] == b {
            end += 1;
        }
        let ge = n - idx;
        let gt = n - end;
        let lo = 2.0 * k2 * b - k1 * ge as f64;
        let hi = 2.0 * k2 * b - k1 * gt as f64;
        if lo <= 0.0 && 0.0 <= hi {
            return b;
        }
        prev = b;
        above = gt;
        idx = end;
    }
    // past the last breakpoint only the quadratic remains
    0.0f64.max(prev)
}

fn build_solution(y: &DifferenceSample, shift: f64, ys: &[f64], omega: f64, k1: f64, k2: f64) -> QpSolution {
    let deltas: Vec<f64> = ys.iter().map(|v| (v - omega).max(0.0)).collect();
    QpSolution {
        i: y.i,
        j: y.j,
        omega_prime: omega,
        omega_hat: omega + shift,
        active_count: ys.iter().filter(|&&v| v >= omega).count(),
        objective: pair_objective(ys, k1, k2, omega),
        deltas,
        k1,
        k2,
        shift,
    }
}

pub fn solve_pair_1d(y: &DifferenceSample, k1: f64, k2: f64) -> Result<QpSolution> {
    check_tuning(k1, k2)?;
    let (shift, ys) = shifted(y)?;
    let omega = minimize_pair_objective(&ys, k1, k2);
    Ok(build_solution(y, shift, &ys, omega, k1, k2))
}

/// Same problem through the dual active-set solver, `O(N³)`.
pub fn solve_pair_generic(y: &DifferenceSample, k1: f64, k2: f64) -> Result<QpSolution> {
    check_tuning(k1, k2)?;
    let (shift, ys) = shifted(y)?;
    let sol = solve_qp_generic(&QpCanonical::pair(&ys, k1, k2))?;
    let omega = sol.b[0];
    let mut out = build_solution(y, shift, &ys, omega, k1, k2);
    out.deltas = sol.b.iter().skip(1).copied().collect();
    Ok(out)
}

/// `K1` from 0.5 down to 1e-5 in 12 geometric steps, `K2 = 1 - K1`.
pub fn default_schedule() -> Vec<(f64, f64)> {
    let steps = 12;
    let (hi, lo): (f64, f64) = (0.5, 1e-5);
    let ratio = (lo / hi).powf(1.0 / (steps - 1) as f64);
    (0..steps)
        .map(|s| {
            let k1 = if s == steps - 1 { lo } else { hi * ratio.powi(s as i32) };
            (k1, 1.0 - k1)
        })
        .collect()
}

/// `0.01 · IQR(Y')`, falling back to the range and then to `1e-12`.
pub fn default_threshold(y: &DifferenceSample) -> f64 {
    let iqr = stats::iqr(&y.values);
    if iqr > 0.0 {
        return 0.01 * iqr;
    }
    let range = stats::max(&y.values) - stats::min(&y.values);
    if range > 0.0 {
        0.01 * range
    } else {
        1e-12
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TuneStatus {
    Converged,
    NeedsManualTuning,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneStep {
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    pub omega_prime: f64,
    pub omega_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub status: TuneStatus,
    pub threshold: f64,
    /// Last solution when converged, otherwise the one with smallest `ω'`.
    pub solution: Option<QpSolution>,
    pub trajectory: Vec<TuneStep>,
}

impl TuneResult {
    pub fn report(&self) -> Option<EstimateReport> {
        self.solution.as_ref().map(|s| {
            let mut r = s.report();
            if self.status == TuneStatus::NeedsManualTuning {
                r.diagnostics.flags.push(FLAG_NEEDS_MANUAL_TUNING.to_string());
            }
            r
        })
    }
}

/// Steps through `schedule` until `ω' ≤ t`.
pub fn auto_tune(y: &DifferenceSample, t: f64, schedule: &[(f64, f64)]) -> Result<TuneResult> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Config(format!("threshold must be positive, got {t}")));
    }
    let mut trajectory = Vec::with_capacity(schedule.len());
    let mut best: Option<QpSolution> = None;
    for &(k1, k2) in schedule {
        let sol = solve_pair_1d(y, k1, k2)?;
        trajectory.push(TuneStep { k1, k2, omega_prime: sol.omega_prime, omega_hat: sol.omega_hat });
        let done = sol.omega_prime <= t;
        if best.as_ref().is_none_or(|b| sol.omega_prime < b.omega_prime) || done {
            best = Some(sol);
        }
        if done {
            return Ok(TuneResult { status: TuneStatus::Converged, threshold: t, solution: best, trajectory });
        }
    }
    Ok(TuneResult { status: TuneStatus::NeedsManualTuning, threshold: t, solution: best, trajectory })
}

/// Expected maximum of `m` standard normals (Blom's approximation).
fn expected_normal_max(m: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let std = Normal::standard();
    std.inverse_cdf((m - 0.375) / (m + 0.25)).max(0.0)
}

/// Depth of the noisy boundary below its centre, for boundary noise of
/// standard deviation `noise_sd`.
///
/// The lowest of `M` boundary points sits about `noise_sd · E[max of M
/// normals]` below the centre; `M` is taken self-consistently as twice the
/// number of shifted points below the offset.
pub fn centre_offset(y: &DifferenceSample, noise_sd: f64) -> Result<f64> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::Config(format!("noise standard deviation must be >= 0, got {noise_sd}")));
    }
    let (_, ys) = shifted(y)?;
    if noise_sd == 0.0 {
        return Ok(0.0);
    }
    let s = stats::sorted(&ys);
    let mut m = s.len() as f64;
    let mut offset = 0.0;
    for _ in 0..100 {
        offset = noise_sd * expected_normal_max(m);
        let below = s.partition_point(|&v| v < offset);
        let next = (2 * below).max(1) as f64;
        if next == m {
            break;
        }
        m = next;
    }
    Ok(offset)
}

/// Chooses `(K1, K2)` so that `ω'` lands as close to `target` as the data allow.
///
/// `ω'` is continuous and non-decreasing in `K1 / K2`, so bisection on
/// `ln(K1 / K2)` suffices.
pub fn tune_to_offset(y: &DifferenceSample, target: f64) -> Result<QpSolution> {
    let (shift, ys) = shifted(y)?;
    let solve = |r: f64| {
        let k1 = 1.0 / (1.0 + (-r).exp());
        let k2 = 1.0 - k1;
        let k2 = if k2 > 0.0 { k2 } else { f64::MIN_POSITIVE };
        let w = minimize_pair_objective(&ys, k1, k2);
        (k1, k2, w)
    };
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    let mut best = solve(lo);
    let consider = |c: (f64, f64, f64), best: &mut (f64, f64, f64)| {
        if (c.2 - target).abs() < (best.2 - target).abs() {
            *best = c;
        }
    };
    consider(solve(hi), &mut best);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let c = solve(mid);
        consider(c, &mut best);
        if c.2 < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (k1, k2, w) = best;
    Ok(build_solution(y, shift, &ys, w, k1, k2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max_ν (Y'^ν - ω' - δ^ν)⁺`.
    pub max_primal_violation: f64,
    /// `max_ν (-δ^ν)⁺`.
    pub max_negative_slack: f64,
    /// `max_ν min(|δ^ν|, |ω' + δ^ν - Y'^ν|)`.
    pub complementarity: f64,
    /// Distance from 0 to `[2K2ω' - K1(n_gt + ties), 2K2ω' - K1 n_gt]`.
    pub stationarity: f64,
    pub tie_count: usize,
    pub tie_tolerance: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.max_primal_violation
            .max(self.max_negative_slack)
            .max(self.complementarity)
            .max(self.stationarity)
    }
}

pub fn kkt_report(sol: &QpSolution, y: &DifferenceSample) -> KktReport {
    let omega = sol.omega_prime;
    let tie_tol = 1e-8 * (1.0 + omega.abs());
    let mut r = KktReport {
        max_primal_violation: 0.0,
        max_negative_slack: 0.0,
        complementarity: 0.0,
        stationarity: 0.0,
        tie_count: 0,
        tie_tolerance: tie_tol,
    };
    let mut gt = 0usize;
    for (v, &delta) in y.values.iter().zip(&sol.deltas) {
        let ys = v - sol.shift;
        r.max_primal_violation = r.max_primal_violation.max(ys - omega - delta);
        r.max_negative_slack = r.max_negative_slack.max(-delta);
        r.complementarity = r.complementarity.max(delta.abs().min((omega + delta - ys).abs()));
        if (ys - omega).abs() <= tie_tol {
            r.tie_count += 1;
        } else if ys > omega {
            gt += 1;
        }
    }
    let hi = 2.0 * sol.k2 * omega - sol.k1 * gt as f64;
    let lo = hi - sol.k1 * r.tie_count as f64;
    r.stationarity = if lo > 0.0 { lo } else if hi < 0.0 { -hi } else { 0.0 };
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(v: &[f64]) -> DifferenceSample {
        DifferenceSample::from_values(v.to_vec())
    }

    #[test]
    fn unconstrained_interior() {
        let d_mat = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let d = DVector::from_vec(vec![2.0, 4.0]);
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let b0 = DVector::from_vec(vec![-10.0]);
        let p = QpCanonical::new(d_mat, d, a, b0).unwrap();
        let s = solve_qp_generic(&p).unwrap();
        assert!((s.b[0] - 1.0).abs() < 1e-14 && (s.b[1] - 1.0).abs() < 1e-14);
        assert!(s.active.is_empty());
    }

    #[test]
    fn single_active_bound() {
        let p = QpCanonical::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let s = solve_qp_generic(&p).unwrap();
        assert!((s.b[0] - 1.0).abs() < 1e-14);
        assert_eq!(s.active, vec![0]);
        assert!((s.multipliers[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn infeasible_is_reported() {
        // b ≥ 1 and -b ≥ 0
        let p = QpCanonical::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.0),
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            DVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap();
        assert!(matches!(solve_qp_generic(&p), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn single_point_sits_at_zero() {
        let s = solve_pair_1d(&ds(&[3.25]), 0.5, 0.5).unwrap();
        assert_eq!(s.omega_prime, 0.0);
        assert_eq!(s.omega_hat, 3.25);
    }

    #[test]
    fn worked_segment_example() {
        let y = ds(&[0.0, 0.0, 10.0, 10.0]);
        let s = solve_pair_1d(&y, 0.5, 0.5).unwrap();
        assert_eq!(s.omega_prime, 1.0);
        assert_eq!(s.objective, 9.5);
        assert_eq!(pair_objective(&[0.0, 0.0, 10.0, 10.0], 0.5, 0.5, 0.0), 10.0);
        let g = solve_pair_generic(&y, 0.5, 0.5).unwrap();
        assert!((g.omega_prime - 1.0).abs() < 1e-8);
    }

    #[test]
    fn k2_zero_is_rejected() {
        assert!(matches!(solve_pair_1d(&ds(&[0.0, 1.0]), 1.0, 0.0), Err(Error::UnboundedTuning)));
        assert!(solve_pair_1d(&ds(&[0.0]), 0.3, 0.3).is_err());
    }

    #[test]
    fn kkt_detects_perturbation() {
        let y = ds(&[0.3, 0.0, 1.7, 2.2, 0.9, 0.9]);
        let s = solve_pair_1d(&y, 0.6, 0.4).unwrap();
        assert!(kkt_report(&s, &y).max_residual() <= 1e-8);
        let mut bad = s.clone();
        bad.omega_prime += 0.1;
        bad.deltas = y.values.iter().map(|v| (v - bad.shift - bad.omega_prime).max(0.0)).collect();
        assert!(kkt_report(&bad, &y).stationarity > 0.0);
    }

    #[test]
    fn auto_tune_edges() {
        let y = ds(&[0.0, 0.0, 0.0, 1.0, 2.0]);
        let r = auto_tune(&y, 0.01, &[]).unwrap();
        assert_eq!(r.status, TuneStatus::NeedsManualTuning);
        assert!(r.solution.is_none());
        let r = auto_tune(&y, 0.01, &default_schedule()).unwrap();
        assert_eq!(r.status, TuneStatus::Converged);
        assert!(r.solution.unwrap().omega_prime <= 0.01);
    }

    #[test]
    fn offset_targeting() {
        let y = ds(&[0.0, 0.2, 0.4, 1.0, 3.0, 5.0]);
        let s = tune_to_offset(&y, 0.3).unwrap();
        assert!(kkt_report(&s, &y).max_residual() <= 1e-8);
        // ω' can only sit at 0.2/0.4 breakpoints or interior points of the segments
        assert!((s.omega_prime - 0.3).abs() < 1e-6, "{}", s.omega_prime);
        assert_eq!(centre_offset(&y, 0.0).unwrap(), 0.0);
        let wide = centre_offset(&y, 0.5).unwrap();
        let narrow = centre_offset(&y, 0.1).unwrap();
        assert!(wide > narrow && narrow > 0.0);
    }

    #[test]
    fn schedule_shape() {
        let s = default_schedule();
        assert_eq!(s.len(), 12);
        assert_eq!(s[0], (0.5, 0.5));
        assert_eq!(s[11].0, 1e-5);
        assert!(s.windows(2).all(|w| w[1].0 < w[0].0));
        assert!(s.iter().all(|(a, b)| (a + b - 1.0).abs() < 1e-15));
    }
}
