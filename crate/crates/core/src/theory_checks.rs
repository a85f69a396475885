//! Numerical verification of the lemma-level formulas and inequalities.
//!
//! Every check is deterministic given its seed. Random searches split their
//! budget into fixed-size chunks, each with its own derived stream, so results
//! do not depend on the number of worker threads.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::fbm::{correlation_beta_gamma, disjoint_increment_correlation, BetaGamma, HurstParam, IncrementQuad};
use crate::quadrature::integrate;
use crate::report::Check;
use crate::rng::{derive_seed, Stream};

const CHUNK: usize = 1000;

fn chunks(budget: usize) -> Vec<(u64, usize)> {
    (0..budget.div_ceil(CHUNK))
        .map(|c| (c as u64, CHUNK.min(budget - c * CHUNK)))
        .collect()
}

// ---------------------------------------------------------------------------
// Variance lower bound

/// Both sides of `Var(sum v_i Y_i) >= det(G) / prod(G_ii) * (1/m) sum v_i^2 G_ii`.
pub fn variance_bound_sides(gamma: &DMatrix<f64>, v: &[f64]) -> Result<(f64, f64)> {
    let m = gamma.nrows();
    if gamma.ncols() != m || v.len() != m || m == 0 {
        return Err(Error::domain("dim", "covariance must be square and match v"));
    }
    let vv = nalgebra::DVector::from_column_slice(v);
    let lhs = (vv.transpose() * gamma * &vv)[(0, 0)];
    let diag: Vec<f64> = (0..m).map(|i| gamma[(i, i)]).collect();
    if diag.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::domain("gamma", "variables must be non-constant"));
    }
    let det = determinant(gamma);
    let rhs = det / diag.iter().product::<f64>() * v.iter().zip(&diag).map(|(v, d)| v * v * d).sum::<f64>()
        / m as f64;
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceBoundResult {
    pub dim: usize,
    pub trials: usize,
    pub worst_ratio: f64,
    /// Draws rejected because the normalized determinant fell below `1e-10`.
    pub resamples: usize,
    pub witness_trial: usize,
}

/// Minimum over random covariances and coefficient vectors of LHS / RHS.
pub fn check_variance_lower_bound(dim: usize, trials: usize, seed: u64) -> Result<VarianceBoundResult> {
    if dim < 2 {
        return Err(Error::domain("dim", format!("{dim} must be >= 2")));
    }
    if trials == 0 {
        return Err(Error::domain("trials", "must be >= 1"));
    }
    let per_chunk: Vec<(f64, usize, usize)> = chunks(trials)
        .into_par_iter()
        .map(|(c, len)| {
            let mut s = Stream::replica(seed, c);
            let mut worst = (f64::INFINITY, 0usize);
            let mut resamples = 0;
            for i in 0..len {
                let (gamma, v) = loop {
                    let g = random_covariance(&mut s, dim);
                    let norm_det = determinant(&g) / (0..dim).map(|k| g[(k, k)]).product::<f64>();
                    if norm_det > 1e-10 {
                        let mut v = vec![0.0; dim];
                        s.fill_normal(&mut v);
                        break (g, v);
                    }
                    resamples += 1;
                };
                let (lhs, rhs) = variance_bound_sides(&gamma, &v).expect("valid by construction");
                let ratio = lhs / rhs;
                if ratio < worst.0 {
                    worst = (ratio, c as usize * CHUNK + i);
                }
            }
            (worst.0, worst.1, resamples)
        })
        .collect();
    let (worst_ratio, witness_trial) = per_chunk
        .iter()
        .fold((f64::INFINITY, 0), |acc, &(r, i, _)| if r < acc.0 { (r, i) } else { acc });
    Ok(VarianceBoundResult {
        dim,
        trials,
        worst_ratio,
        resamples: per_chunk.iter().map(|c| c.2).sum(),
        witness_trial,
    })
}

/// `A A^T` with log-uniform row scales and, half the time, nearly collinear rows.
fn random_covariance(s: &mut Stream, dim: usize) -> DMatrix<f64> {
    let collinear = s.uniform() < 0.5;
    let base: Vec<f64> = (0..dim).map(|_| s.normal()).collect();
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let scale = 10f64.powf(s.uniform_range(-3.0, 3.0));
        let mix = if collinear { s.uniform() } else { 0.0 };
        for j in 0..dim {
            a[(i, j)] = scale * (mix * base[j] + (1.0 - mix) * s.normal());
        }
    }
    &a * a.transpose()
}

// ---------------------------------------------------------------------------
// Gaussian moment integral

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentIntegral {
    pub numeric: f64,
    pub closed: f64,
    pub quadrature_error: f64,
}

impl MomentIntegral {
    pub fn relative_error(&self) -> f64 {
        ((self.numeric - self.closed) / self.closed).abs()
    }
}

/// `∫_R |x|^alpha e^{-a x^2} dx` by adaptive quadrature against the closed form
/// `a^{-(alpha+1)/2} Gamma((alpha+1)/2)`.
pub fn check_gaussian_moment_integral(a: f64, alpha: f64) -> Result<MomentIntegral> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::domain("a", format!("{a} must be > 0")));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::domain("alpha", format!("{alpha} must lie in (0, 2)")));
    }
    // beyond sqrt(40 / a) the integrand is below e^{-40} of its scale
    let cut = (40.0 / a).sqrt();
    let knee = (1.0 / a).sqrt();
    let f = |x: f64| x.powf(alpha) * (-a * x * x).exp();
    let inner = integrate(f, 0.0, knee, 0.0, 1e-13)?;
    let outer = integrate(f, knee, cut, 0.0, 1e-13)?;
    let numeric = 2.0 * (inner.value + outer.value);
    let e = 0.5 * (alpha + 1.0);
    let closed = (-e * a.ln() + ln_gamma(e)).exp();
    Ok(MomentIntegral {
        numeric,
        closed,
        quadrature_error: 2.0 * (inner.error + outer.error),
    })
}

// ---------------------------------------------------------------------------
// sigma integral

fn sigma_exponent(h: HurstParam, delta: f64) -> Result<f64> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::domain("delta", format!("{delta} must be > 0")));
    }
    let q = h.value() * (1.0 + 2.0 * delta);
    if q >= 1.0 {
        return Err(Error::domain(
            "exponent",
            format!("H (1 + 2 delta) = {q} must be < 1 for the integral to converge"),
        ));
    }
    Ok(1.0 - q)
}

/// `∫_t^{t+window} s^{-H(1+2delta)} ds` in closed form.
pub fn sigma_integral(h: HurstParam, delta: f64, t: f64, window: f64) -> Result<f64> {
    let e = sigma_exponent(h, delta)?;
    if !(t >= 0.0 && window >= 0.0) {
        return Err(Error::domain("t", format!("need t >= 0 and window >= 0, got ({t}, {window})")));
    }
    Ok(((t + window).powf(e) - t.powf(e)) / e)
}

/// The same integral by adaptive quadrature (singular at 0 when `t = 0`).
pub fn sigma_integral_quadrature(h: HurstParam, delta: f64, t: f64, window: f64) -> Result<f64> {
    let e = sigma_exponent(h, delta)?;
    let q = 1.0 - e;
    Ok(integrate(|s: f64| s.powf(-q), t, t + window, 0.0, 1e-13)?.value)
}

/// `max(1, T^{2eta(1+2delta)}) / ((1 - (H0+eta)(1+2delta)) T^{1-(H0+eta)(1+2delta)})`.
pub fn sigma_constant(horizon: f64, h0: f64, eta: f64, delta: f64) -> Result<f64> {
    let e = sigma_constant_exponent(h0, eta, delta)?;
    Ok(1f64.max(horizon.powf(2.0 * eta * (1.0 + 2.0 * delta))) / (e * horizon.powf(e)))
}

/// `max(1, T^{2eta(1+2delta)}) / (1 - (H0+eta)(1+2delta))`, valid for every horizon.
pub fn sigma_constant_any_horizon(h0: f64, eta: f64, delta: f64, horizon: f64) -> Result<f64> {
    let e = sigma_constant_exponent(h0, eta, delta)?;
    Ok(1f64.max(horizon.powf(2.0 * eta * (1.0 + 2.0 * delta))) / e)
}

fn sigma_constant_exponent(h0: f64, eta: f64, delta: f64) -> Result<f64> {
    if !(eta > 0.0 && h0 - eta > 0.0 && h0 + eta < 1.0) {
        return Err(Error::domain("eta", format!("({h0} - {eta}, {h0} + {eta}) must lie in (0, 1)")));
    }
    let q = (h0 + eta) * (1.0 + 2.0 * delta);
    if !(delta > 0.0) || q >= 1.0 {
        return Err(Error::domain("exponent", format!("(H0 + eta)(1 + 2 delta) = {q} must be < 1")));
    }
    Ok(1.0 - q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaConstantResult {
    pub cells: usize,
    pub violations: usize,
    /// Largest `integral / (C window^exponent)` over the grid.
    pub worst_ratio: f64,
    pub witness: Option<[f64; 3]>,
}

/// Grid check of `sigma_integral(H, delta, t, w) <= C w^{1-(H0+eta)(1+2delta)}`
/// over `n x n` values of `(t, w)` in `[0, T] x (0, T]` and `n_h` values of
/// `H` in `[H0 - eta, H0 + eta]`.
pub fn check_sigma_constant(
    horizon: f64,
    h0: f64,
    eta: f64,
    delta: f64,
    n: usize,
    n_h: usize,
    constant: f64,
) -> Result<SigmaConstantResult> {
    let e = sigma_constant_exponent(h0, eta, delta)?;
    if n < 2 || n_h < 2 {
        return Err(Error::domain("n", "grid sizes must be >= 2"));
    }
    let mut out = SigmaConstantResult {
        cells: 0,
        violations: 0,
        worst_ratio: 0.0,
        witness: None,
    };
    for k in 0..n_h {
        let h = h0 - eta + 2.0 * eta * k as f64 / (n_h - 1) as f64;
        let hp = HurstParam::new(h)?;
        for i in 0..n {
            let t = horizon * i as f64 / (n - 1) as f64;
            for j in 1..=n {
                let w = horizon * j as f64 / n as f64;
                let ratio = sigma_integral(hp, delta, t, w)? / (constant * w.powf(e));
                out.cells += 1;
                if ratio > 1.0 + 1e-12 {
                    out.violations += 1;
                }
                if ratio > out.worst_ratio {
                    out.worst_ratio = ratio;
                    out.witness = Some([h, t, w]);
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Increment correlation matrices and determinants

/// Partition `0 = t_0 < t_1 < ... < t_m < T` with `m` even.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSample {
    times: Vec<f64>,
}

impl PartitionSample {
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        let m = times.len().saturating_sub(1);
        if times.first() != Some(&0.0) {
            return Err(Error::domain("times", "partition must start at t_0 = 0"));
        }
        if m < 2 || m % 2 != 0 {
            return Err(Error::domain("m", format!("{m} must be even and >= 2")));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("times", "partition must be strictly increasing"));
        }
        if !(times[m] < horizon) {
            return Err(Error::domain("times", format!("t_m = {} must be < T = {horizon}", times[m])));
        }
        Ok(PartitionSample { times })
    }

    pub fn m(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

/// Correlation matrix of the increments `B_{t_i} - B_{t_{i-1}}`, `i = 1..m`.
pub fn increment_correlation_matrix(h: HurstParam, p: &PartitionSample) -> DMatrix<f64> {
    correlation_matrix_of(h, p.times())
}

fn correlation_matrix_of(h: HurstParam, t: &[f64]) -> DMatrix<f64> {
    let m = t.len() - 1;
    let mut c = DMatrix::identity(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let q = IncrementQuad::new(t[i], t[i + 1], t[j], t[j + 1]).expect("strictly increasing partition");
            let r = disjoint_increment_correlation(h, &q);
            c[(i, j)] = r;
            c[(j, i)] = r;
        }
    }
    c
}

/// Determinant by partial-pivot LU; if a pivot is tiny relative to the
/// largest, the product of symmetric eigenvalues is used instead.
pub fn determinant(a: &DMatrix<f64>) -> f64 {
    let lu = a.clone().lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].abs()).collect();
    let max = pivots.iter().cloned().fold(0.0, f64::max);
    let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if max > 0.0 && min > 1e-13 * max {
        lu.determinant()
    } else {
        a.clone().symmetric_eigen().eigenvalues.iter().product()
    }
}

/// Best partition found by one search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetMinimum {
    pub h: f64,
    pub min_det: f64,
    pub partition: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetScanResult {
    pub h_values: Vec<f64>,
    pub min_dets: Vec<f64>,
    pub partitions_at_min: Vec<Vec<f64>>,
    pub m: usize,
    pub search_budget: usize,
    /// Adjacent minima within a factor 10 of each other.
    pub continuity_ok: bool,
    /// Any non-positive minimum, with its partition.
    pub violation: Option<DetMinimum>,
}

/// Partition times from log-gaps, normalized so that `t_m = T/2`.
fn times_from_log_gaps(log_gaps: &[f64], horizon: f64) -> Vec<f64> {
    let top = log_gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let gaps: Vec<f64> = log_gaps.iter().map(|g| (g - top).exp()).collect();
    let total: f64 = gaps.iter().sum();
    let mut times = Vec::with_capacity(gaps.len() + 1);
    let mut acc = 0.0;
    times.push(0.0);
    for g in &gaps {
        acc += g;
        times.push(0.5 * horizon * acc / total);
    }
    times
}

fn det_of_gaps(h: HurstParam, log_gaps: &[f64], horizon: f64) -> (f64, Vec<f64>) {
    let t = times_from_log_gaps(log_gaps, horizon);
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return (f64::INFINITY, t);
    }
    (determinant(&correlation_matrix_of(h, &t)), t)
}

fn random_log_gaps(s: &mut Stream, m: usize) -> Vec<f64> {
    if s.uniform() < 0.5 {
        // sorted uniform points
        let mut u: Vec<f64> = (0..m).map(|_| s.uniform()).collect();
        u.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        u.iter()
            .map(|&x| {
                let g = (x - prev).max(1e-300);
                prev = x;
                g.ln()
            })
            .collect()
    } else {
        (0..m).map(|_| s.uniform_range(-12.0, 0.0) * std::f64::consts::LN_10).collect()
    }
}

/// Pattern search in log-gap coordinates.
fn refine(h: HurstParam, start: &[f64], horizon: f64) -> (f64, Vec<f64>, usize) {
    let mut x = start.to_vec();
    let (mut best, _) = det_of_gaps(h, &x, horizon);
    let mut evals = 1;
    let mut step = 2.0;
    while step > 1e-3 {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [-1.0, 1.0] {
                let mut y = x.clone();
                y[i] += dir * step;
                let (d, _) = det_of_gaps(h, &y, horizon);
                evals += 1;
                if d < best {
                    best = d;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, x, evals)
}

/// Minimizes the increment-correlation determinant over partitions at one `h`:
/// `budget` random partitions, then pattern search from the best few.
pub fn determinant_minimum(h: HurstParam, m: usize, budget: usize, seed: u64, horizon: f64) -> Result<DetMinimum> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::domain("m", format!("{m} must be even and >= 2")));
    }
    if budget == 0 {
        return Err(Error::domain("budget", "must be >= 1"));
    }
    if !(horizon > 0.0) {
        return Err(Error::domain("horizon", "must be > 0"));
    }
    const KEEP: usize = 4;
    let per_chunk: Vec<Vec<(f64, Vec<f64>)>> = chunks(budget)
        .into_par_iter()
        .map(|(c, len)| {
            let mut s = Stream::replica(seed, c);
            let mut best: Vec<(f64, Vec<f64>)> = Vec::with_capacity(KEEP + 1);
            for _ in 0..len {
                let g = random_log_gaps(&mut s, m);
                let (d, _) = det_of_gaps(h, &g, horizon);
                if best.len() < KEEP || d < best[KEEP - 1].0 {
                    best.push((d, g));
                    best.sort_by(|a, b| a.0.total_cmp(&b.0));
                    best.truncate(KEEP);
                }
            }
            best
        })
        .collect();
    let mut pool: Vec<(f64, Vec<f64>)> = per_chunk.into_iter().flatten().collect();
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));
    pool.truncate(KEEP);
    let mut evaluations = budget;
    let mut best = (f64::INFINITY, Vec::new());
    for (_, g) in &pool {
        let (d, x, e) = refine(h, g, horizon);
        evaluations += e;
        if d < best.0 {
            best = (d, x);
        }
    }
    Ok(DetMinimum {
        h: h.value(),
        min_det: best.0,
        partition: times_from_log_gaps(&best.1, horizon),
        evaluations,
    })
}

/// Scans `n_h` Hurst values over `[h_center - eta, h_center + eta]`.
pub fn determinant_scan(
    h_center: HurstParam,
    eta: f64,
    m: usize,
    budget: usize,
    seed: u64,
    horizon: f64,
    n_h: usize,
) -> Result<DetScanResult> {
    let hc = h_center.value();
    if !(eta > 0.0 && eta < hc.min(1.0 - hc)) {
        return Err(Error::domain("eta", format!("{eta} must lie in (0, min(H0, 1 - H0))")));
    }
    if n_h < 1 {
        return Err(Error::domain("n_h", "must be >= 1"));
    }
    let h_values: Vec<f64> = if n_h == 1 {
        vec![hc]
    } else {
        (0..n_h).map(|i| hc - eta + 2.0 * eta * i as f64 / (n_h - 1) as f64).collect()
    };
    let mins: Vec<DetMinimum> = h_values
        .iter()
        .enumerate()
        .map(|(i, &h)| determinant_minimum(HurstParam::new(h)?, m, budget, derive_seed(seed, i as u64), horizon))
        .collect::<Result<_>>()?;
    Ok(scan_result(h_values, mins, m, budget))
}

fn scan_result(h_values: Vec<f64>, mins: Vec<DetMinimum>, m: usize, budget: usize) -> DetScanResult {
    let min_dets: Vec<f64> = mins.iter().map(|d| d.min_det).collect();
    let continuity_ok = min_dets.windows(2).all(|w| {
        let (a, b) = (w[0].max(f64::MIN_POSITIVE), w[1].max(f64::MIN_POSITIVE));
        a.max(b) / a.min(b) < 10.0
    });
    let violation = mins.iter().find(|d| !(d.min_det > 0.0)).cloned();
    DetScanResult {
        h_values,
        partitions_at_min: mins.iter().map(|d| d.partition.clone()).collect(),
        min_dets,
        m,
        search_budget: budget,
        continuity_ok,
        violation,
    }
}

/// Scan at explicitly listed Hurst values.
pub fn determinant_scan_at(h_values: &[f64], m: usize, budget: usize, seed: u64, horizon: f64) -> Result<DetScanResult> {
    let mins: Vec<DetMinimum> = h_values
        .iter()
        .enumerate()
        .map(|(i, &h)| determinant_minimum(HurstParam::new(h)?, m, budget, derive_seed(seed, i as u64), horizon))
        .collect::<Result<_>>()?;
    Ok(scan_result(h_values.to_vec(), mins, m, budget))
}

// ---------------------------------------------------------------------------
// Uniformity of correlations in H

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupDifference {
    pub value: f64,
    pub beta: f64,
    pub gamma: f64,
    pub evaluations: usize,
}

fn corr_gap(h1: HurstParam, h2: HurstParam, lb: f64, lg: f64) -> f64 {
    // lb = -inf encodes beta = 0
    let bg = BetaGamma {
        beta: lb.exp(),
        gamma: lg.exp(),
    };
    (correlation_beta_gamma(h1, bg) - correlation_beta_gamma(h2, bg)).abs()
}

/// Maximizes `|Corr_H1(beta, gamma) - Corr_H2(beta, gamma)|` over a log grid
/// spanning `[1e-6, 1e6]` in both coordinates (plus `beta = 0`), random
/// log-uniform restarts, and pattern-search refinement of the best points.
pub fn correlation_sup_difference(h1: HurstParam, h2: HurstParam, budget: usize, seed: u64) -> SupDifference {
    if h1 == h2 {
        return SupDifference {
            value: 0.0,
            beta: 0.0,
            gamma: 1.0,
            evaluations: 0,
        };
    }
    let lo = -6.0 * std::f64::consts::LN_10;
    let span = 12.0 * std::f64::consts::LN_10;
    let n = 121;
    let axis: Vec<f64> = (0..n).map(|i| lo + span * i as f64 / (n - 1) as f64).collect();
    let mut betas = vec![f64::NEG_INFINITY];
    betas.extend_from_slice(&axis);

    let mut starts: Vec<(f64, f64, f64)> = betas
        .par_iter()
        .flat_map_iter(|&lb| axis.iter().map(move |&lg| (corr_gap(h1, h2, lb, lg), lb, lg)))
        .collect();
    let mut evaluations = starts.len();
    let randoms: Vec<(f64, f64, f64)> = chunks(budget)
        .into_par_iter()
        .flat_map_iter(|(c, len)| {
            let mut s = Stream::replica(seed, c);
            (0..len)
                .map(|_| {
                    let lb = lo + span * s.uniform();
                    let lg = lo + span * s.uniform();
                    (corr_gap(h1, h2, lb, lg), lb, lg)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    evaluations += randoms.len();
    starts.extend(randoms);
    starts.sort_by(|a, b| b.0.total_cmp(&a.0));
    starts.truncate(8);

    let mut best = starts[0];
    for &(v0, lb0, lg0) in &starts {
        let (mut v, mut lb, mut lg) = (v0, lb0, lg0);
        let mut step = 0.5;
        while step > 1e-6 {
            let mut improved = false;
            let cands = if lb.is_finite() {
                vec![(lb + step, lg), (lb - step, lg), (lb, lg + step), (lb, lg - step)]
            } else {
                vec![(lb, lg + step), (lb, lg - step)]
            };
            for (b, g) in cands {
                let w = corr_gap(h1, h2, b, g);
                evaluations += 1;
                if w > v {
                    (v, lb, lg) = (w, b, g);
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if v > best.0 {
            best = (v, lb, lg);
        }
    }
    SupDifference {
        value: best.0,
        beta: best.1.exp(),
        gamma: best.2.exp(),
        evaluations,
    }
}

// ---------------------------------------------------------------------------
// Convexity inequality

/// `RHS - LHS` of the convexity inequality at `(beta, gamma)`, in correlation
/// units (both sides halved).
pub fn convexity_margin(h: HurstParam, beta: f64, gamma: f64) -> Result<f64> {
    let lhs = correlation_beta_gamma(h, BetaGamma::new(beta, gamma)?);
    let rhs = correlation_beta_gamma(h, BetaGamma::new(0.0, gamma)?);
    Ok(rhs - lhs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityResult {
    pub worst_margin: f64,
    pub beta: f64,
    pub gamma: f64,
    pub trials: usize,
}

/// Minimum margin over `(beta, gamma)` log-uniform in `[1e-6, 1e6]^2`.
pub fn check_convexity_inequality(h: HurstParam, trials: usize, seed: u64) -> Result<ConvexityResult> {
    if !(h.value() > 0.5) {
        return Err(Error::domain("hurst", format!("{h} must exceed 1/2")));
    }
    let per_chunk: Vec<(f64, f64, f64)> = chunks(trials)
        .into_par_iter()
        .map(|(c, len)| {
            let mut s = Stream::replica(seed, c);
            let mut worst = (f64::INFINITY, 0.0, 0.0);
            for _ in 0..len {
                let beta = 10f64.powf(s.uniform_range(-6.0, 6.0));
                let gamma = 10f64.powf(s.uniform_range(-6.0, 6.0));
                let m = convexity_margin(h, beta, gamma).expect("positive draws");
                if m < worst.0 {
                    worst = (m, beta, gamma);
                }
            }
            worst
        })
        .collect();
    let worst = per_chunk
        .into_iter()
        .fold((f64::INFINITY, 0.0, 0.0), |acc, w| if w.0 < acc.0 { w } else { acc });
    Ok(ConvexityResult {
        worst_margin: worst.0,
        beta: worst.1,
        gamma: worst.2,
        trials,
    })
}

// ---------------------------------------------------------------------------
// Verdicts

/// Parameters of the six-check suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteParams {
    pub seed: u64,
    pub variance_dims: Vec<usize>,
    pub variance_trials: usize,
    pub moment_a: Vec<f64>,
    pub moment_alpha: Vec<f64>,
    pub sigma_horizon: f64,
    pub sigma_h0: f64,
    pub sigma_eta: f64,
    pub sigma_delta: f64,
    pub sigma_grid: usize,
    pub sigma_h_values: usize,
    pub concave_h: Vec<f64>,
    pub concave_m: Vec<usize>,
    pub det_budget: usize,
    pub convexity_h: Vec<f64>,
    pub convexity_trials: usize,
    pub neighborhood_h0: Vec<f64>,
    pub neighborhood_eta: f64,
    pub neighborhood_m: usize,
    pub neighborhood_h_points: usize,
    pub sup_h0: f64,
    pub sup_offsets: Vec<f64>,
    pub sup_budget: usize,
}

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams {
            seed: 20240607,
            variance_dims: vec![2, 3, 4, 5, 6],
            variance_trials: 100_000,
            moment_a: vec![0.25, 1.0, 4.0, 16.0],
            moment_alpha: vec![0.01, 0.5, 1.0, 1.5, 1.99],
            sigma_horizon: 1.0,
            sigma_h0: 0.6,
            sigma_eta: 0.05,
            sigma_delta: 0.1,
            sigma_grid: 50,
            sigma_h_values: 11,
            concave_h: vec![0.2, 0.35, 0.5],
            concave_m: vec![2, 4],
            det_budget: 100_000,
            convexity_h: vec![0.51, 0.75, 0.99],
            convexity_trials: 1_000_000,
            neighborhood_h0: vec![0.6, 0.75],
            neighborhood_eta: 0.05,
            neighborhood_m: 4,
            neighborhood_h_points: 5,
            sup_h0: 0.75,
            sup_offsets: vec![0.10, 0.05, 0.02, 0.01],
            sup_budget: 20_000,
        }
    }
}

pub fn variance_check(p: &SuiteParams) -> Result<Check> {
    let mut worst: Option<VarianceBoundResult> = None;
    let mut resamples = 0;
    for (i, &d) in p.variance_dims.iter().enumerate() {
        let r = check_variance_lower_bound(d, p.variance_trials, derive_seed(p.seed, i as u64))?;
        resamples += r.resamples;
        if worst.as_ref().is_none_or(|w| r.worst_ratio < w.worst_ratio) {
            worst = Some(r);
        }
    }
    let w = worst.ok_or_else(|| Error::config("variance_dims", "must not be empty"))?;
    Ok(Check::at_least(
        "variance_lower_bound",
        json!({"dims": p.variance_dims, "trials": p.variance_trials, "resamples": resamples}),
        w.worst_ratio,
        1.0 - 1e-9,
    )
    .with_witness(json!({"dim": w.dim, "trial": w.witness_trial})))
}

pub fn moment_check(p: &SuiteParams) -> Result<Check> {
    let mut worst = (0.0, 0.0, 0.0);
    for &a in &p.moment_a {
        for &alpha in &p.moment_alpha {
            let r = check_gaussian_moment_integral(a, alpha)?;
            if r.relative_error() >= worst.0 {
                worst = (r.relative_error(), a, alpha);
            }
        }
    }
    Ok(Check::at_most(
        "gaussian_moment_integral",
        json!({"a": p.moment_a, "alpha": p.moment_alpha}),
        worst.0,
        1e-8,
    )
    .with_witness(json!({"a": worst.1, "alpha": worst.2})))
}

pub fn sigma_check(p: &SuiteParams) -> Result<Check> {
    let c = sigma_constant(p.sigma_horizon, p.sigma_h0, p.sigma_eta, p.sigma_delta)?;
    let r = check_sigma_constant(
        p.sigma_horizon,
        p.sigma_h0,
        p.sigma_eta,
        p.sigma_delta,
        p.sigma_grid,
        p.sigma_h_values,
        c,
    )?;
    // closed form against quadrature at 100 spot checks
    let mut s = Stream::replica(p.seed, 0x5157);
    let mut worst_quad: f64 = 0.0;
    for _ in 0..100 {
        let h = HurstParam::new(s.uniform_range(p.sigma_h0 - p.sigma_eta, p.sigma_h0 + p.sigma_eta))?;
        let t = s.uniform_range(0.0, p.sigma_horizon);
        let w = s.uniform_range(0.0, p.sigma_horizon);
        let t = if s.uniform() < 0.2 { 0.0 } else { t };
        let closed = sigma_integral(h, p.sigma_delta, t, w)?;
        let quad = sigma_integral_quadrature(h, p.sigma_delta, t, w)?;
        worst_quad = worst_quad.max(((closed - quad) / closed).abs());
    }
    let check = Check::at_most(
        "sigma_integral_constant",
        json!({
            "horizon": p.sigma_horizon, "h0": p.sigma_h0, "eta": p.sigma_eta, "delta": p.sigma_delta,
            "grid": p.sigma_grid, "h_values": p.sigma_h_values, "constant": c,
            "cells": r.cells, "worst_ratio": r.worst_ratio, "quadrature_rel_error": worst_quad,
        }),
        r.violations as f64,
        0.0,
    )
    .and(worst_quad <= 1e-8);
    Ok(match r.witness {
        Some([h, t, w]) if r.violations > 0 => check.with_witness(json!({"h": h, "t": t, "window": w})),
        _ => check,
    })
}

pub fn concave_check(p: &SuiteParams) -> Result<Check> {
    let mut worst: Option<(f64, f64, usize, Vec<f64>)> = None;
    for (k, &m) in p.concave_m.iter().enumerate() {
        let scan = determinant_scan_at(&p.concave_h, m, p.det_budget, derive_seed(p.seed, 100 + k as u64), 1.0)?;
        for (i, &d) in scan.min_dets.iter().enumerate() {
            let margin = d / 2f64.powi(-3 * m as i32);
            if worst.as_ref().is_none_or(|w| margin < w.0) {
                worst = Some((margin, scan.h_values[i], m, scan.partitions_at_min[i].clone()));
            }
        }
    }
    let (margin, h, m, part) = worst.ok_or_else(|| Error::config("concave_h", "must not be empty"))?;
    Ok(Check::at_least(
        "concave_determinant_bound",
        json!({"h": p.concave_h, "m": p.concave_m, "budget": p.det_budget, "statistic": "min det / 2^{-3m}"}),
        margin,
        1.0,
    )
    .with_witness(json!({"h": h, "m": m, "partition": part})))
}

pub fn convexity_check(p: &SuiteParams) -> Result<Check> {
    let mut worst: Option<(ConvexityResult, f64)> = None;
    for (i, &h) in p.convexity_h.iter().enumerate() {
        let r = check_convexity_inequality(HurstParam::new(h)?, p.convexity_trials, derive_seed(p.seed, 200 + i as u64))?;
        if worst.as_ref().is_none_or(|w| r.worst_margin < w.0.worst_margin) {
            worst = Some((r, h));
        }
    }
    let (r, h) = worst.ok_or_else(|| Error::config("convexity_h", "must not be empty"))?;
    Ok(Check::at_least(
        "convexity_inequality",
        json!({"h": p.convexity_h, "trials": p.convexity_trials}),
        r.worst_margin,
        -1e-12,
    )
    .with_witness(json!({"h": h, "beta": r.beta, "gamma": r.gamma})))
}

/// Neighborhood determinant positivity plus the decreasing trend of the
/// correlation sup-difference as `H -> H0`.
pub fn neighborhood_check(p: &SuiteParams) -> Result<Check> {
    let mut worst: Option<(f64, f64)> = None;
    let mut continuity = true;
    let mut violation = None;
    for (i, &h0) in p.neighborhood_h0.iter().enumerate() {
        let scan = determinant_scan(
            HurstParam::new(h0)?,
            p.neighborhood_eta,
            p.neighborhood_m,
            p.det_budget,
            derive_seed(p.seed, 300 + i as u64),
            1.0,
            p.neighborhood_h_points,
        )?;
        continuity &= scan.continuity_ok;
        if violation.is_none() {
            violation = scan.violation.clone();
        }
        for (k, &d) in scan.min_dets.iter().enumerate() {
            if worst.is_none_or(|w| d < w.0) {
                worst = Some((d, scan.h_values[k]));
            }
        }
    }
    let (min_det, h_at) = worst.ok_or_else(|| Error::config("neighborhood_h0", "must not be empty"))?;
    let h0 = HurstParam::new(p.sup_h0)?;
    let sups: Vec<f64> = p
        .sup_offsets
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let h = HurstParam::new(p.sup_h0 + d)?;
            Ok(correlation_sup_difference(h0, h, p.sup_budget, derive_seed(p.seed, 400 + i as u64)).value)
        })
        .collect::<Result<_>>()?;
    let decreasing = sups.windows(2).all(|w| w[1] < w[0]);
    let check = Check::at_least(
        "neighborhood_determinant_bound",
        json!({
            "h0": p.neighborhood_h0, "eta": p.neighborhood_eta, "m": p.neighborhood_m, "budget": p.det_budget,
            "h_points": p.neighborhood_h_points, "continuity_ok": continuity,
            "sup_h0": p.sup_h0, "sup_offsets": p.sup_offsets, "sup_differences": sups,
            "sup_decreasing": decreasing,
        }),
        min_det,
        f64::MIN_POSITIVE,
    )
    .and(decreasing && violation.is_none());
    Ok(check.with_witness(json!({"h": h_at, "violation": violation})))
}

/// Runs all six checks in a fixed order.
pub fn run_suite(p: &SuiteParams) -> Result<Vec<Check>> {
    Ok(vec![
        variance_check(p)?,
        moment_check(p)?,
        sigma_check(p)?,
        concave_check(p)?,
        convexity_check(p)?,
        neighborhood_check(p)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::consecutive_correlation;
    use proptest::prelude::*;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    #[test]
    fn variance_bound_closed_forms() {
        // identity: LHS = |v|^2, RHS = |v|^2 / m
        for m in 2..=6 {
            let v: Vec<f64> = (0..m).map(|i| i as f64 - 1.5).collect();
            let (l, r) = variance_bound_sides(&DMatrix::identity(m, m), &v).unwrap();
            assert!((l / r - m as f64).abs() < 1e-12);
        }
        // 2x2 with correlation rho, v = (1, -1): ratio = 2 / (1 + rho)
        for k in -9..=9 {
            let rho = k as f64 / 10.0;
            let g = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
            let (l, r) = variance_bound_sides(&g, &[1.0, -1.0]).unwrap();
            assert!((l - (2.0 - 2.0 * rho)).abs() < 1e-14);
            assert!((r - (1.0 - rho * rho)).abs() < 1e-14);
            assert!(l / r >= 1.0);
        }
    }

    #[test]
    fn variance_bound_random_search() {
        for dim in [2, 6] {
            let r = check_variance_lower_bound(dim, 5_000, 1).unwrap();
            assert!(r.worst_ratio >= 1.0 - 1e-9, "{r:?}");
            let again = check_variance_lower_bound(dim, 5_000, 1).unwrap();
            assert_eq!(r, again);
        }
        assert!(check_variance_lower_bound(1, 10, 1).is_err());
    }

    #[test]
    fn gaussian_moment_examples() {
        let r = check_gaussian_moment_integral(1.0, 1.0).unwrap();
        assert!((r.closed - 1.0).abs() < 1e-15);
        assert!((r.numeric - 1.0).abs() < 1e-10);
        let r = check_gaussian_moment_integral(4.0, 1.0).unwrap();
        assert!((r.closed - 0.25).abs() < 1e-15);
        assert!(r.relative_error() < 1e-10);
        let r = check_gaussian_moment_integral(1.0, 0.01).unwrap();
        assert!((r.closed - statrs::function::gamma::gamma(0.505)).abs() < 1e-12);
        assert!(r.relative_error() < 1e-8);
        assert!(check_gaussian_moment_integral(1.0, 2.0).is_err());
        assert!(check_gaussian_moment_integral(0.0, 1.0).is_err());
    }

    #[test]
    fn sigma_integral_examples() {
        let v = sigma_integral(hp(0.5), 0.1, 0.0, 1.0).unwrap();
        assert!((v - 2.5).abs() < 1e-14);
        let q = sigma_integral_quadrature(hp(0.5), 0.1, 0.0, 1.0).unwrap();
        assert!((q - 2.5).abs() < 1e-10);
        let v = sigma_integral(hp(0.5), 0.1, 1.0, 1.0).unwrap();
        assert!((v - (2f64.powf(0.4) - 1.0) / 0.4).abs() < 1e-14);
        assert!((v - 0.798770).abs() < 1e-6);
        let err = sigma_integral(hp(0.9), 0.1, 0.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("exponent"));
    }

    #[test]
    fn sigma_constant_holds_on_unit_horizon() {
        let c = sigma_constant(1.0, 0.6, 0.05, 0.1).unwrap();
        let r = check_sigma_constant(1.0, 0.6, 0.05, 0.1, 50, 11, c).unwrap();
        assert_eq!(r.cells, 50 * 50 * 11);
        assert_eq!(r.violations, 0, "{r:?}");
    }

    #[test]
    fn sigma_constant_fails_beyond_unit_horizon() {
        // with T = 2 the stated constant is too small at H = H0 + eta, t = 0
        let c = sigma_constant(2.0, 0.6, 0.05, 0.1).unwrap();
        let lhs = sigma_integral(hp(0.65), 0.1, 0.0, 2.0).unwrap();
        let rhs = c * 2f64.powf(1.0 - 0.65 * 1.2);
        assert!(lhs > rhs, "{lhs} <= {rhs}");
        let r = check_sigma_constant(2.0, 0.6, 0.05, 0.1, 50, 11, c).unwrap();
        assert!(r.violations > 0);
        // without the T^{exponent} denominator the bound holds for any horizon
        for horizon in [0.5, 1.0, 2.0, 10.0] {
            let c = sigma_constant_any_horizon(0.6, 0.05, 0.1, horizon).unwrap();
            let r = check_sigma_constant(horizon, 0.6, 0.05, 0.1, 30, 11, c).unwrap();
            assert_eq!(r.violations, 0, "T = {horizon}: {r:?}");
        }
    }

    #[test]
    fn correlation_matrix_examples() {
        let p = PartitionSample::new(vec![0.0, 0.1, 0.35, 0.4, 0.9], 1.0).unwrap();
        assert_eq!(increment_correlation_matrix(hp(0.5), &p), DMatrix::identity(4, 4));
        let p = PartitionSample::new(vec![0.0, 0.25, 0.5], 1.0).unwrap();
        let c = increment_correlation_matrix(hp(0.75), &p);
        let rho = consecutive_correlation(hp(0.75), 1.0).unwrap();
        assert!((c[(0, 1)] - 0.414214).abs() < 1e-6);
        assert!((c[(0, 1)] - rho).abs() < 1e-15);
        assert!((determinant(&c) - (1.0 - rho * rho)).abs() < 1e-14);
        assert!((determinant(&c) - 0.828427).abs() < 1e-6);
        assert!(PartitionSample::new(vec![0.0, 0.5, 1.0], 1.0).is_err());
        assert!(PartitionSample::new(vec![0.0, 0.2, 0.4, 0.6], 1.0).is_err());
    }

    #[test]
    fn determinant_fallback_on_singular_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(determinant(&a).abs() < 1e-15);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        assert!((determinant(&a) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn determinant_scans() {
        let r = determinant_minimum(hp(0.5), 4, 500, 1, 1.0).unwrap();
        assert_eq!(r.min_det, 1.0);
        for h in [0.2, 0.35] {
            let r = determinant_minimum(hp(h), 4, 2_000, 2, 1.0).unwrap();
            assert!(r.min_det >= 2f64.powi(-12) && r.min_det <= 1.0, "{r:?}");
            let p = PartitionSample::new(r.partition.clone(), 1.0).unwrap();
            assert!((determinant(&increment_correlation_matrix(hp(h), &p)) - r.min_det).abs() < 1e-12);
        }
        let scan = determinant_scan(hp(0.75), 0.05, 4, 2_000, 3, 1.0, 3).unwrap();
        assert!(scan.min_dets.iter().all(|d| *d > 0.0));
        assert!(scan.violation.is_none());
        assert!(scan.continuity_ok);
        assert_eq!(scan, determinant_scan(hp(0.75), 0.05, 4, 2_000, 3, 1.0, 3).unwrap());
        assert!(determinant_scan(hp(0.75), 0.3, 4, 10, 3, 1.0, 3).is_err());
    }

    #[test]
    fn sup_difference_examples() {
        assert_eq!(correlation_sup_difference(hp(0.75), hp(0.75), 100, 1).value, 0.0);
        let d: Vec<f64> = [0.80, 0.78, 0.76]
            .iter()
            .map(|&h| correlation_sup_difference(hp(0.75), hp(h), 2_000, 1).value)
            .collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
        assert!(d[2] < 0.05);
        let far = correlation_sup_difference(hp(0.5), hp(0.9), 2_000, 1).value;
        assert!(far > 0.3, "{far}");
    }

    #[test]
    fn convexity_examples() {
        for h in [0.51, 0.75, 0.99] {
            assert_eq!(convexity_margin(hp(h), 0.0, 0.7).unwrap(), 0.0);
            let r = check_convexity_inequality(hp(h), 20_000, 4).unwrap();
            assert!(r.worst_margin >= -1e-12, "{r:?}");
        }
        assert!(check_convexity_inequality(hp(0.5), 10, 1).is_err());
    }

    #[test]
    fn verdicts_serialize() {
        let p = SuiteParams::default();
        let c = moment_check(&p).unwrap();
        assert!(c.pass);
        let text = serde_json::to_string(&c).unwrap();
        let back: Check = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    proptest! {
        #[test]
        fn correlation_matrices_are_psd(
            h in 0.05f64..0.95,
            gaps in proptest::collection::vec(1e-4f64..1.0, 2..=3),
        ) {
            let mut gaps = gaps;
            gaps.extend(gaps.clone());
            let total: f64 = gaps.iter().sum();
            let mut t = vec![0.0];
            for g in &gaps {
                t.push(t.last().unwrap() + 0.9 * g / total);
            }
            let p = PartitionSample::new(t, 1.0).unwrap();
            let c = increment_correlation_matrix(hp(h), &p);
            prop_assert!((c.clone() - c.transpose()).abs().max() == 0.0);
            let eig = c.symmetric_eigen().eigenvalues;
            prop_assert!(eig.iter().all(|e| *e >= -1e-10));
        }

        #[test]
        fn convexity_margin_nonnegative(h in 0.5001f64..0.9999, lb in -6.0f64..6.0, lg in -6.0f64..6.0) {
            let m = convexity_margin(hp(h), 10f64.powf(lb), 10f64.powf(lg)).unwrap();
            prop_assert!(m >= -1e-12);
        }
    }
}
