//! Monte Carlo harness for the law of the local time as a function of `H`.
//!
//! An [`Ensemble`] holds one local-time field per path. Paths are drawn from
//! seeds `derive_seed(master_seed, r)` and are not stored: anything that needs
//! them again regenerates them from the seed.
//!
//! Two-sample comparisons use the energy distance with a permutation null.
//! Statistics are V-statistics (all pairs, including `i = j` terms, which are
//! zero), so the statistic is always `>= 0`.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::HurstParam;
use crate::occupation::{
    fourier_local_time, kernel_local_time, occupation_integral, Bandwidth, LocalTimeField, MollifierKernel,
};
use crate::path_gen::{FbmGenerator, Method, SamplePath, TimeGrid};
use crate::rng::{derive_seed, Stream};
use crate::stats::{kendall, mean, ols, quantile, KendallTest, LinearFit};

/// Local-time estimator configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorConfig {
    Kernel { bandwidth: Bandwidth },
    Fourier { n_cutoff: f64, du: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub horizon: f64,
    pub n_steps: usize,
    pub method: Method,
    pub estimator: EstimatorConfig,
    pub x_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub master_seed: u64,
    /// Upper bound on `n_paths * |x_grid| * |t_grid|` stored values.
    #[serde(default = "default_max_values")]
    pub max_values: usize,
}

pub fn default_max_values() -> usize {
    50_000_000
}

impl EnsembleConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.n_steps)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_paths as u64).map(|r| derive_seed(self.master_seed, r)).collect()
    }
}

/// Sampled local-time fields at one Hurst value.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub hurst: HurstParam,
    pub config: EnsembleConfig,
    pub fields: Vec<LocalTimeField>,
    pub seeds: Vec<u64>,
    /// Set when the circulant generator fell back to Cholesky.
    pub fallback: Option<String>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn generator(&self) -> Result<FbmGenerator> {
        FbmGenerator::new(self.hurst, self.config.grid()?, self.config.method)
    }

    /// Regenerates path `r`.
    pub fn path(&self, generator: &FbmGenerator, r: usize) -> SamplePath {
        generator.sample(self.seeds[r])
    }

    /// Field values at the probes, one vector per path.
    pub fn probe_values(&self, probes: &ProbeSet) -> Result<Vec<Vec<f64>>> {
        if self.is_empty() {
            return Err(Error::domain("n_paths", "ensemble is empty"));
        }
        let first = &self.fields[0];
        let idx: Vec<(usize, usize)> = probes
            .points
            .iter()
            .map(|&(x, t)| Ok((first.x_index(x)?, first.t_index(t)?)))
            .collect::<Result<_>>()?;
        Ok(self
            .fields
            .iter()
            .map(|f| idx.iter().map(|&(ix, it)| f.get(ix, it)).collect())
            .collect())
    }
}

/// Builds the fields for `n_paths` paths; deterministic in `master_seed`.
pub fn build_ensemble(h: HurstParam, config: &EnsembleConfig) -> Result<Ensemble> {
    let grid = config.grid()?;
    let cells = config
        .n_paths
        .checked_mul(config.x_grid.len())
        .and_then(|v| v.checked_mul(config.t_grid.len()))
        .unwrap_or(usize::MAX);
    if cells > config.max_values {
        return Err(Error::Resource {
            dimension: "n_paths x x_grid x t_grid",
            reason: format!("{cells} stored values exceed max_values = {}", config.max_values),
        });
    }
    let generator = FbmGenerator::new(h, grid, config.method)?;
    let seeds = config.seeds();
    let build = |seed: u64| -> Result<LocalTimeField> {
        let path = generator.sample(seed);
        match config.estimator {
            EstimatorConfig::Kernel { bandwidth } => {
                kernel_local_time(&path, &config.x_grid, &config.t_grid, bandwidth.resolve(h, &grid)?)
            }
            EstimatorConfig::Fourier { n_cutoff, du } => {
                fourier_local_time(&path, &config.x_grid, &config.t_grid, n_cutoff, du)
            }
        }
    };
    let fields = seeds.par_iter().map(|&s| build(s)).collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        hurst: h,
        config: config.clone(),
        fields,
        seeds,
        fallback: generator.fallback().map(str::to_string),
    })
}

/// Finite set of `(x, t)` probe points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSet {
    pub points: Vec<(f64, f64)>,
}

impl ProbeSet {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("probes", "need at least one probe point"));
        }
        Ok(ProbeSet { points })
    }

    /// `{(0, T/2), (0, T), (0.5, T)}`.
    pub fn default_for(horizon: f64) -> Self {
        ProbeSet {
            points: vec![(0.0, 0.5 * horizon), (0.0, horizon), (0.5, horizon)],
        }
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }
}

// ---------------------------------------------------------------------------
// Moment scaling

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `L(x, t0 + h) - L(x, t0)`.
    Time,
    /// `L(x0 + k, t) - L(x0, t)`.
    Space,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentScaling {
    pub fit: LinearFit,
    pub lags: Vec<f64>,
    pub log_lags: Vec<f64>,
    pub log_moments: Vec<f64>,
    /// Lags whose sample moment was exactly 0.
    pub dropped_lags: Vec<f64>,
}

/// Log-log regression of the sample `m`-th absolute moment of increments
/// against the lag, from the base point `(x, t)`.
pub fn moment_scaling(e: &Ensemble, m: u32, direction: Direction, base: (f64, f64), lags: &[f64]) -> Result<MomentScaling> {
    if m != 2 && m != 4 {
        return Err(Error::domain("m", format!("{m} must be 2 or 4")));
    }
    if e.is_empty() {
        return Err(Error::domain("n_paths", "ensemble is empty"));
    }
    if lags.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::domain("lags", "lags must be > 0"));
    }
    let f0 = &e.fields[0];
    let (x, t) = base;
    let (ix0, it0) = (f0.x_index(x)?, f0.t_index(t)?);
    let mut out = MomentScaling {
        fit: LinearFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            r2: f64::NAN,
        },
        lags: vec![],
        log_lags: vec![],
        log_moments: vec![],
        dropped_lags: vec![],
    };
    for &lag in lags {
        let (ix1, it1) = match direction {
            Direction::Time => (ix0, f0.t_index(t + lag)?),
            Direction::Space => (f0.x_index(x + lag)?, it0),
        };
        let moment = mean(
            &e.fields
                .iter()
                .map(|f| (f.get(ix1, it1) - f.get(ix0, it0)).abs().powi(m as i32))
                .collect::<Vec<_>>(),
        );
        if moment > 0.0 {
            out.lags.push(lag);
            out.log_lags.push(lag.ln());
            out.log_moments.push(moment.ln());
        } else {
            out.dropped_lags.push(lag);
        }
    }
    out.fit = ols(&out.log_lags, &out.log_moments)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Energy distance

fn check_sample(a: &[Vec<f64>], name: &'static str) -> Result<usize> {
    let k = a.first().map(|p| p.len()).ok_or_else(|| Error::domain(name, "sample is empty"))?;
    if k == 0 || a.iter().any(|p| p.len() != k) {
        return Err(Error::domain(name, "points must share a non-zero dimension"));
    }
    Ok(k)
}

#[inline]
fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `2 E|A - B| - E|A - A'| - E|B - B'|` over all pairs (V-statistic).
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let ka = check_sample(a, "a")?;
    let kb = check_sample(b, "b")?;
    if ka != kb {
        return Err(Error::domain("k", format!("probe dimensions differ: {ka} vs {kb}")));
    }
    let pooled: Vec<&[f64]> = a.iter().chain(b).map(|p| p.as_slice()).collect();
    let labels: Vec<bool> = (0..pooled.len()).map(|i| i >= a.len()).collect();
    Ok(energy_from_labels(&|i, j| dist(pooled[i], pooled[j]), &labels, a.len()))
}

fn energy_from_labels(d: &(dyn Fn(usize, usize) -> f64 + Sync), labels: &[bool], na: usize) -> f64 {
    let n = labels.len();
    let nb = n - na;
    let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (mut raa, mut rbb, mut rab) = (0.0, 0.0, 0.0);
        for j in 0..i {
            let v = d(i, j);
            match (labels[i], labels[j]) {
                (false, false) => raa += v,
                (true, true) => rbb += v,
                _ => rab += v,
            }
        }
        aa += raa;
        bb += rbb;
        ab += rab;
    }
    let (na, nb) = (na as f64, nb as f64);
    (2.0 * ab / (na * nb) - 2.0 * aa / (na * na) - 2.0 * bb / (nb * nb)).max(0.0)
}

/// Energy statistic with its permutation null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n_permutations: usize,
    pub null_q95: f64,
    pub null_q99: f64,
    pub null_q999: f64,
}

/// Pairwise-distance storage: precomputed when it fits, recomputed otherwise.
struct Distances<'a> {
    points: Vec<&'a [f64]>,
    packed: Option<Vec<f64>>,
}

impl<'a> Distances<'a> {
    const MAX_PRECOMPUTE: usize = 6000;

    fn new(points: Vec<&'a [f64]>) -> Self {
        let n = points.len();
        let packed = (n <= Self::MAX_PRECOMPUTE).then(|| {
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| (0..i).map(|j| dist(points[i], points[j])).collect())
                .collect();
            rows.concat()
        });
        Distances { points, packed }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        match &self.packed {
            Some(p) => p[i * (i - 1) / 2 + j],
            None => dist(self.points[i], self.points[j]),
        }
    }
}

/// Permutation test of equal laws; permutation `r` shuffles with stream
/// `derive_seed(seed, r)`.
pub fn energy_test(a: &[Vec<f64>], b: &[Vec<f64>], n_permutations: usize, seed: u64) -> Result<EnergyTest> {
    let ka = check_sample(a, "a")?;
    let kb = check_sample(b, "b")?;
    if ka != kb {
        return Err(Error::domain("k", format!("probe dimensions differ: {ka} vs {kb}")));
    }
    if n_permutations == 0 {
        return Err(Error::domain("n_permutations", "must be >= 1"));
    }
    let points: Vec<&[f64]> = a.iter().chain(b).map(|p| p.as_slice()).collect();
    let n = points.len();
    let d = Distances::new(points);
    let getter = |i: usize, j: usize| d.get(i, j);
    let labels: Vec<bool> = (0..n).map(|i| i >= a.len()).collect();
    let statistic = energy_from_labels(&getter, &labels, a.len());
    let null: Vec<f64> = (0..n_permutations as u64)
        .into_par_iter()
        .map(|r| {
            let mut l = labels.clone();
            Stream::replica(seed, r).shuffle(&mut l);
            energy_from_labels(&getter, &l, a.len())
        })
        .collect();
    let exceed = null.iter().filter(|&&v| v >= statistic).count();
    Ok(EnergyTest {
        statistic,
        p_value: (1 + exceed) as f64 / (1 + n_permutations) as f64,
        n_permutations,
        null_q95: quantile(&null, 0.95),
        null_q99: quantile(&null, 0.99),
        null_q999: quantile(&null, 0.999),
    })
}

// ---------------------------------------------------------------------------
// Convergence curves

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub h_center: f64,
    pub h_values: Vec<f64>,
    pub distances: Vec<f64>,
    /// 95th percentile of each permutation null (noise level of the statistic).
    pub ci_halfwidths: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Kendall's tau of distance against position in `h_values`.
    pub trend: KendallTest,
    /// Same-H comparison against an independent ensemble, if requested.
    pub null_check: Option<EnergyTest>,
    pub fallbacks: Vec<String>,
}

impl ConvergenceCurve {
    /// Monotone-decrease test at `alpha`.
    pub fn trend_pass(&self, alpha: f64) -> bool {
        self.trend.tau <= 0.0 && self.trend.p_lower < alpha
    }

    pub fn ci(&self, i: usize) -> (f64, f64) {
        ((self.distances[i] - self.ci_halfwidths[i]).max(0.0), self.distances[i] + self.ci_halfwidths[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub ensemble: EnsembleConfig,
    pub probes: ProbeSet,
    pub n_permutations: usize,
    /// Master seed of the `h_center` ensemble.
    pub center_seed: u64,
    /// Master seeds of the `h_list` ensembles, same order.
    pub seeds: Vec<u64>,
    /// Master seed of an independent `h_center` ensemble for the null check.
    #[serde(default)]
    pub null_seed: Option<u64>,
    pub permutation_seed: u64,
}

fn check_curve_inputs(h_center: HurstParam, h_list: &[HurstParam], seeds: &[u64]) -> Result<()> {
    if h_list.is_empty() {
        return Err(Error::domain("h_list", "must not be empty"));
    }
    if seeds.len() != h_list.len() {
        return Err(Error::config("seeds", format!("need {} seeds, got {}", h_list.len(), seeds.len())));
    }
    let gaps: Vec<f64> = h_list.iter().map(|h| (h.value() - h_center.value()).abs()).collect();
    if gaps.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::domain("h_list", "must be sorted by |h - h_center| descending"));
    }
    Ok(())
}

/// All master seeds must differ and their per-path seed sets must be disjoint.
pub fn check_seed_independence(masters: &[u64], n_paths: usize) -> Result<()> {
    let mut seen = HashSet::new();
    for &m in masters {
        for r in 0..n_paths as u64 {
            if !seen.insert(derive_seed(m, r)) {
                return Err(Error::config(
                    "seeds",
                    format!("master seed {m} produces path seeds that overlap another ensemble"),
                ));
            }
        }
    }
    Ok(())
}

/// Energy distances between probe vectors of `L^H` for each `H` in `h_list`
/// and those of `L^{h_center}`, with a Kendall trend test.
pub fn convergence_curve(h_center: HurstParam, h_list: &[HurstParam], cfg: &CurveConfig) -> Result<ConvergenceCurve> {
    check_curve_inputs(h_center, h_list, &cfg.seeds)?;
    let mut masters = vec![cfg.center_seed];
    masters.extend(&cfg.seeds);
    masters.extend(cfg.null_seed);
    check_seed_independence(&masters, cfg.ensemble.n_paths)?;

    let build = |h: HurstParam, seed: u64| -> Result<(Vec<Vec<f64>>, Option<String>)> {
        let mut c = cfg.ensemble.clone();
        c.master_seed = seed;
        let e = build_ensemble(h, &c)?;
        Ok((e.probe_values(&cfg.probes)?, e.fallback))
    };
    let (center, fb) = build(h_center, cfg.center_seed)?;
    let mut fallbacks: Vec<String> = fb.into_iter().collect();
    let mut out = ConvergenceCurve {
        h_center: h_center.value(),
        h_values: vec![],
        distances: vec![],
        ci_halfwidths: vec![],
        p_values: vec![],
        trend: KendallTest {
            tau: 0.0,
            p_lower: 1.0,
            exact: true,
        },
        null_check: None,
        fallbacks: vec![],
    };
    for (i, (&h, &seed)) in h_list.iter().zip(&cfg.seeds).enumerate() {
        let (sample, fb) = build(h, seed)?;
        fallbacks.extend(fb);
        let t = energy_test(&sample, &center, cfg.n_permutations, derive_seed(cfg.permutation_seed, i as u64))?;
        out.h_values.push(h.value());
        out.distances.push(t.statistic);
        out.ci_halfwidths.push(t.null_q95);
        out.p_values.push(t.p_value);
    }
    if out.distances.len() >= 2 {
        let pos: Vec<f64> = (0..out.distances.len()).map(|i| i as f64).collect();
        out.trend = kendall(&pos, &out.distances)?;
    }
    if let Some(seed) = cfg.null_seed {
        let (sample, _) = build(h_center, seed)?;
        out.null_check = Some(energy_test(
            &sample,
            &center,
            cfg.n_permutations,
            derive_seed(cfg.permutation_seed, 0xffff),
        )?);
    }
    out.fallbacks = fallbacks;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathCurveConfig {
    pub n_paths: usize,
    pub horizon: f64,
    pub n_steps: usize,
    pub method: Method,
    /// Observation times (must be grid points).
    pub times: Vec<f64>,
    pub n_permutations: usize,
    pub center_seed: u64,
    pub seeds: Vec<u64>,
    pub permutation_seed: u64,
}

/// Path-level analogue of [`convergence_curve`] on `(B_{t_1}, ..., B_{t_k})`.
pub fn path_convergence_curve(
    h_center: HurstParam,
    h_list: &[HurstParam],
    cfg: &PathCurveConfig,
) -> Result<ConvergenceCurve> {
    check_curve_inputs(h_center, h_list, &cfg.seeds)?;
    let mut masters = vec![cfg.center_seed];
    masters.extend(&cfg.seeds);
    check_seed_independence(&masters, cfg.n_paths)?;
    let grid = TimeGrid::new(cfg.horizon, cfg.n_steps)?;
    let idx: Vec<usize> = cfg
        .times
        .iter()
        .map(|&t| {
            let i = (t / grid.dt()).round();
            if (i * grid.dt() - t).abs() > 1e-12 * t.max(1.0) || i < 0.0 || i as usize > grid.n_steps() {
                Err(Error::domain("times", format!("{t} is not a grid point")))
            } else {
                Ok(i as usize)
            }
        })
        .collect::<Result<_>>()?;
    let sample = |h: HurstParam, master: u64| -> Result<Vec<Vec<f64>>> {
        let g = FbmGenerator::new(h, grid, cfg.method)?;
        Ok((0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|r| {
                let p = g.sample(derive_seed(master, r));
                idx.iter().map(|&i| p.values()[i]).collect()
            })
            .collect())
    };
    let center = sample(h_center, cfg.center_seed)?;
    let mut out = ConvergenceCurve {
        h_center: h_center.value(),
        h_values: vec![],
        distances: vec![],
        ci_halfwidths: vec![],
        p_values: vec![],
        trend: KendallTest {
            tau: 0.0,
            p_lower: 1.0,
            exact: true,
        },
        null_check: None,
        fallbacks: vec![],
    };
    for (i, (&h, &seed)) in h_list.iter().zip(&cfg.seeds).enumerate() {
        let t = energy_test(&sample(h, seed)?, &center, cfg.n_permutations, derive_seed(cfg.permutation_seed, i as u64))?;
        out.h_values.push(h.value());
        out.distances.push(t.statistic);
        out.ci_halfwidths.push(t.null_q95);
        out.p_values.push(t.p_value);
    }
    if out.distances.len() >= 2 {
        let pos: Vec<f64> = (0..out.distances.len()).map(|i| i as f64).collect();
        out.trend = kendall(&pos, &out.distances)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Identification through the occupation formula

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    /// Largest relative discrepancy over paths, probes and bandwidths.
    pub max_discrepancy: f64,
    /// Per-bandwidth maxima, same order as `eps_list`.
    pub per_epsilon: Vec<f64>,
    pub witness: (usize, f64, f64, f64),
}

/// Compares `∫ g_eps(u, x) L(u, t) du` (trapezoid on the field's x grid) with
/// `∫_0^t g_eps(X_s, x) ds` for every path, probe and bandwidth. Discrepancies
/// are relative to the largest direct value for the same probe and bandwidth.
pub fn identification_check(e: &Ensemble, probes: &ProbeSet, eps_list: &[f64]) -> Result<Identification> {
    if e.is_empty() {
        return Err(Error::domain("n_paths", "ensemble is empty"));
    }
    if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::domain("eps_list", "must be non-empty and strictly decreasing"));
    }
    let xg = &e.fields[0].x_grid;
    if xg.len() < 2 {
        return Err(Error::domain("x_grid", "needs at least two points"));
    }
    let dx = xg.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if let Some(eps) = eps_list.iter().find(|&&eps| eps < 2.0 * dx) {
        return Err(Error::domain(
            "eps_list",
            format!("epsilon {eps} is below twice the spatial grid step {dx}"),
        ));
    }
    for &(x, _) in &probes.points {
        for &eps in eps_list {
            if x - eps < xg[0] || x + eps > xg[xg.len() - 1] {
                return Err(Error::domain("x_grid", format!("support of g_eps around {x} leaves the grid")));
            }
        }
    }
    let kernel = MollifierKernel::new()?;
    let generator = e.generator()?;
    let it: Vec<usize> = probes.points.iter().map(|&(_, t)| e.fields[0].t_index(t)).collect::<Result<_>>()?;

    // (direct, via_field) per path, probe, epsilon
    let rows: Vec<Vec<(f64, f64)>> = (0..e.len())
        .into_par_iter()
        .map(|r| {
            let path = e.path(&generator, r);
            let f = &e.fields[r];
            let mut out = Vec::with_capacity(probes.k() * eps_list.len());
            for (p, &(x, t)) in probes.points.iter().enumerate() {
                for &eps in eps_list {
                    let direct = occupation_integral(&path, t, |u| kernel.g(u, x, eps))?;
                    let via = trapezoid(xg, |i| kernel.g(xg[i], x, eps) * f.get(i, it[p]));
                    out.push((direct, via));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let ne = eps_list.len();
    let mut per_epsilon = vec![0.0f64; ne];
    let mut best = (0.0, (0, 0.0, 0.0, 0.0));
    for p in 0..probes.k() {
        for (q, &eps) in eps_list.iter().enumerate() {
            let col = p * ne + q;
            let scale = rows.iter().map(|row| row[col].0.abs()).fold(0.0, f64::max);
            if scale == 0.0 {
                continue;
            }
            for (r, row) in rows.iter().enumerate() {
                let d = (row[col].1 - row[col].0).abs() / scale;
                per_epsilon[q] = per_epsilon[q].max(d);
                if d > best.0 {
                    best = (d, (r, probes.points[p].0, probes.points[p].1, eps));
                }
            }
        }
    }
    Ok(Identification {
        max_discrepancy: best.0,
        per_epsilon,
        witness: best.1,
    })
}

fn trapezoid(x: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    (1..x.len()).map(|i| 0.5 * (x[i] - x[i - 1]) * (f(i) + f(i - 1))).sum()
}

// ---------------------------------------------------------------------------
// Modulus of continuity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusStatistics {
    pub hurst: f64,
    pub time_lags: Vec<f64>,
    /// Mean over paths of `max_{x,t} |L(x, t + h) - L(x, t)|`, per lag.
    pub time_osc: Vec<f64>,
    pub space_lags: Vec<f64>,
    /// Mean over paths of `max_{x,t} |L(x + k, t) - L(x, t)|`, per lag.
    pub space_osc: Vec<f64>,
    pub max_time_osc: f64,
    pub max_space_osc: f64,
}

/// Dyadic index lags `1, 2, 4, ...` below the grid length.
fn dyadic(n: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |l| Some(l * 2)).take_while(|&l| l < n).collect()
}

/// Oscillation statistics over dyadic lag families. Grids must be uniform.
pub fn modulus_statistics(e: &Ensemble) -> Result<ModulusStatistics> {
    if e.is_empty() {
        return Err(Error::domain("n_paths", "ensemble is empty"));
    }
    let f0 = &e.fields[0];
    let (nx, nt) = (f0.nx(), f0.nt());
    let tl = dyadic(nt);
    let sl = dyadic(nx);
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = e
        .fields
        .par_iter()
        .map(|f| {
            let time = tl
                .iter()
                .map(|&l| {
                    let mut m: f64 = 0.0;
                    for it in 0..nt - l {
                        for ix in 0..nx {
                            m = m.max((f.get(ix, it + l) - f.get(ix, it)).abs());
                        }
                    }
                    m
                })
                .collect();
            let space = sl
                .iter()
                .map(|&l| {
                    let mut m: f64 = 0.0;
                    for it in 0..nt {
                        for ix in 0..nx - l {
                            m = m.max((f.get(ix + l, it) - f.get(ix, it)).abs());
                        }
                    }
                    m
                })
                .collect();
            (time, space)
        })
        .collect();
    let n = per_path.len() as f64;
    let time_osc: Vec<f64> = (0..tl.len()).map(|j| per_path.iter().map(|p| p.0[j]).sum::<f64>() / n).collect();
    let space_osc: Vec<f64> = (0..sl.len()).map(|j| per_path.iter().map(|p| p.1[j]).sum::<f64>() / n).collect();
    let dt = if nt > 1 { f0.t_grid[1] - f0.t_grid[0] } else { 0.0 };
    let dx = if nx > 1 { f0.x_grid[1] - f0.x_grid[0] } else { 0.0 };
    Ok(ModulusStatistics {
        hurst: e.hurst.value(),
        time_lags: tl.iter().map(|&l| l as f64 * dt).collect(),
        space_lags: sl.iter().map(|&l| l as f64 * dx).collect(),
        max_time_osc: time_osc.iter().cloned().fold(0.0, f64::max),
        max_space_osc: space_osc.iter().cloned().fold(0.0, f64::max),
        time_osc,
        space_osc,
    })
}

/// Power-law envelope `C lag^alpha` fitted to oscillation statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub c: f64,
    pub exponent: f64,
    pub r2: f64,
}

impl Envelope {
    pub fn fit(lags: &[f64], osc: &[f64]) -> Result<Self> {
        let pts: Vec<(f64, f64)> = lags
            .iter()
            .zip(osc)
            .filter(|(_, o)| **o > 0.0)
            .map(|(l, o)| (l.ln(), o.ln()))
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let f = ols(&x, &y)?;
        Ok(Envelope {
            c: f.intercept.exp(),
            exponent: f.slope,
            r2: f.r2,
        })
    }

    pub fn at(&self, lag: f64) -> f64 {
        self.c * lag.powf(self.exponent)
    }

    /// Largest `osc / envelope` over the lags.
    pub fn worst_ratio(&self, lags: &[f64], osc: &[f64]) -> f64 {
        lags.iter().zip(osc).map(|(l, o)| o / self.at(*l)).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupation::linspace;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    fn small_config(n_paths: usize, seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            n_paths,
            horizon: 1.0,
            n_steps: 256,
            method: Method::Circulant,
            estimator: EstimatorConfig::Kernel {
                bandwidth: Bandwidth::Fixed { epsilon: 0.1 },
            },
            x_grid: linspace(-1.0, 1.0, 21),
            t_grid: linspace(0.0, 1.0, 17),
            master_seed: seed,
            max_values: default_max_values(),
        }
    }

    fn normal_sample(n: usize, k: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut s = Stream::new(seed);
        (0..n).map(|_| (0..k).map(|_| s.normal() + shift).collect()).collect()
    }

    #[test]
    fn ensembles_are_deterministic_and_budgeted() {
        let c = small_config(20, 5);
        let a = build_ensemble(hp(0.5), &c).unwrap();
        let b = build_ensemble(hp(0.5), &c).unwrap();
        assert_eq!(a.fields, b.fields);
        let empty = build_ensemble(hp(0.5), &small_config(0, 5)).unwrap();
        assert!(empty.is_empty());
        assert!(empty.probe_values(&ProbeSet::default_for(1.0)).is_err());
        assert!(modulus_statistics(&empty).is_err());
        let mut big = small_config(1000, 5);
        big.max_values = 1000;
        let err = build_ensemble(hp(0.5), &big).unwrap_err();
        assert!(err.to_string().contains("x_grid"), "{err}");
    }

    #[test]
    fn energy_distance_properties() {
        let a = normal_sample(200, 2, 0.0, 1);
        assert_eq!(energy_distance(&a, &a).unwrap(), 0.0);
        let b = normal_sample(200, 2, 0.0, 2);
        assert!(energy_distance(&a, &b).unwrap() >= 0.0);
        assert!(energy_distance(&a, &[]).is_err());
        assert!(energy_distance(&a, &normal_sample(10, 3, 0.0, 3)).is_err());
        // closed form in 1-d: two point masses at 0 and 1 give 2*1 - 0 - 0
        let d = energy_distance(&[vec![0.0]], &[vec![1.0]]).unwrap();
        assert_eq!(d, 2.0);
    }

    #[test]
    fn permutation_test_null_and_shift() {
        let a = normal_sample(1000, 1, 0.0, 1);
        let b = normal_sample(1000, 1, 0.0, 2);
        let t = energy_test(&a, &b, 200, 7).unwrap();
        assert!(t.p_value > 0.05, "{t:?}");
        let a = normal_sample(300, 2, 0.0, 3);
        let b = normal_sample(300, 2, 10.0, 4);
        let t = energy_test(&a, &b, 200, 7).unwrap();
        assert!(t.statistic > t.null_q999);
        assert_eq!(t, energy_test(&a, &b, 200, 7).unwrap());
    }

    #[test]
    fn moment_scaling_errors_and_fit() {
        let e = build_ensemble(hp(0.5), &small_config(50, 1)).unwrap();
        assert!(moment_scaling(&e, 3, Direction::Time, (0.0, 0.0), &[0.25, 0.5]).is_err());
        assert!(moment_scaling(&e, 2, Direction::Time, (0.0, 0.0), &[0.0, 0.5]).is_err());
        assert!(moment_scaling(&e, 2, Direction::Time, (0.0, 0.0), &[0.5]).is_err());
        let s = moment_scaling(&e, 2, Direction::Time, (0.0, 0.0), &[0.125, 0.25, 0.5, 1.0]).unwrap();
        assert!(s.fit.slope > 0.5 && s.fit.slope < 2.0, "{s:?}");
        let s = moment_scaling(&e, 2, Direction::Space, (0.0, 1.0), &[0.1, 0.2, 0.4]).unwrap();
        assert!(s.fit.slope.is_finite());
    }

    #[test]
    fn seed_overlap_is_rejected() {
        let cfg = CurveConfig {
            ensemble: small_config(10, 0),
            probes: ProbeSet::default_for(1.0),
            n_permutations: 10,
            center_seed: 1,
            seeds: vec![1],
            null_seed: None,
            permutation_seed: 0,
        };
        let err = convergence_curve(hp(0.5), &[hp(0.6)], &cfg).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        assert!(convergence_curve(hp(0.5), &[hp(0.55), hp(0.7)], &CurveConfig { seeds: vec![2, 3], ..cfg }).is_err());
    }

    #[test]
    fn identification_on_kernel_fields() {
        let mut c = small_config(10, 3);
        c.x_grid = linspace(-2.0, 2.0, 401);
        c.estimator = EstimatorConfig::Kernel {
            bandwidth: Bandwidth::Fixed { epsilon: 0.02 },
        };
        let e = build_ensemble(hp(0.5), &c).unwrap();
        let probes = ProbeSet::default_for(1.0);
        let r = identification_check(&e, &probes, &[0.4, 0.2]).unwrap();
        assert!(r.max_discrepancy < 0.01, "{r:?}");
        assert!(identification_check(&e, &probes, &[0.2, 0.4]).is_err());
        assert!(identification_check(&e, &probes, &[0.015]).is_err());
    }

    #[test]
    fn modulus_of_zero_fields_is_zero() {
        let mut e = build_ensemble(hp(0.5), &small_config(3, 3)).unwrap();
        for f in &mut e.fields {
            f.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let m = modulus_statistics(&e).unwrap();
        assert_eq!((m.max_time_osc, m.max_space_osc), (0.0, 0.0));
    }

    #[test]
    fn envelope_fit_recovers_power_law() {
        let lags = [0.125, 0.25, 0.5];
        let osc: Vec<f64> = lags.iter().map(|l: &f64| 3.0 * l.powf(0.4)).collect();
        let env = Envelope::fit(&lags, &osc).unwrap();
        assert!((env.exponent - 0.4).abs() < 1e-12);
        assert!((env.c - 3.0).abs() < 1e-12);
        assert!((env.worst_ratio(&lags, &osc) - 1.0).abs() < 1e-12);
    }


    fn points(raw: &[(f64, f64)]) -> Vec<Vec<f64>> {
        raw.iter().map(|&(a, b)| vec![a, b]).collect()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn energy_distance_is_symmetric_nonnegative_and_translation_invariant(
            a in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20),
            b in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20),
            shift in -3.0f64..3.0,
        ) {
            let (pa, pb) = (points(&a), points(&b));
            let d = energy_distance(&pa, &pb).unwrap();
            proptest::prop_assert!(d >= -1e-12);
            proptest::prop_assert!((d - energy_distance(&pb, &pa).unwrap()).abs() <= 1e-12 * (1.0 + d));
            proptest::prop_assert!(energy_distance(&pa, &pa).unwrap().abs() <= 1e-12);
            let move_all = |p: &[Vec<f64>]| p.iter().map(|v| vec![v[0] + shift, v[1] - shift]).collect::<Vec<_>>();
            let ds = energy_distance(&move_all(&pa), &move_all(&pb)).unwrap();
            proptest::prop_assert!((d - ds).abs() <= 1e-9 * (1.0 + d));
        }

        #[test]
        fn permutation_p_values_lie_on_the_permutation_lattice(
            a in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..15),
            b in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..15),
            seed in proptest::prelude::any::<u64>(),
        ) {
            let t = energy_test(&points(&a), &points(&b), 39, seed).unwrap();
            proptest::prop_assert!(t.p_value > 0.0 && t.p_value <= 1.0);
            let k = t.p_value * 40.0;
            proptest::prop_assert!((k - k.round()).abs() < 1e-9);
            proptest::prop_assert!(t.null_q95 <= t.null_q99 && t.null_q99 <= t.null_q999);
        }
    }
}
