//! Experiment configurations: strict JSON, versioned, validated before any
//! compute starts.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::convergence::{check_seed_independence, CurveConfig, EnsembleConfig, EstimatorConfig, PathCurveConfig, ProbeSet};
use crate::error::{Error, Result};
use crate::fbm::HurstParam;
use crate::occupation::Bandwidth;
use crate::path_gen::{Method, TimeGrid, MAX_CHOLESKY_STEPS};
use crate::report::SCHEMA_VERSION;
use crate::theory_checks::SuiteParams;

fn hp(h: f64) -> HurstParam {
    HurstParam::new(h).expect("literal Hurst value")
}

fn field(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn positive(prefix: &str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field(prefix, name), format!("{v} must be finite and > 0")))
    }
}

fn at_least(prefix: &str, name: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::config(field(prefix, name), format!("{v} must be >= {min}")))
    }
}

fn non_empty<T>(prefix: &str, name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(Error::config(field(prefix, name), "must not be empty"))
    } else {
        Ok(())
    }
}

fn probability(prefix: &str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::config(field(prefix, name), format!("{v} must lie in (0, 1)")))
    }
}

/// Checks that a generator can be built on `(horizon, n_steps)` with `method`.
fn path_grid(prefix: &str, horizon: f64, n_steps: usize, method: Method) -> Result<()> {
    positive(prefix, "horizon", horizon)?;
    at_least(prefix, "n_steps", n_steps, 2)?;
    TimeGrid::new(horizon, n_steps).map_err(|e| Error::config(field(prefix, "n_steps"), e.to_string()))?;
    match method {
        Method::Circulant if !n_steps.is_power_of_two() => Err(Error::config(
            field(prefix, "n_steps"),
            format!("{n_steps} is not a power of two (required by the circulant generator)"),
        )),
        Method::Cholesky if n_steps > MAX_CHOLESKY_STEPS => Err(Error::config(
            field(prefix, "n_steps"),
            format!("{n_steps} exceeds the Cholesky budget of {MAX_CHOLESKY_STEPS} steps"),
        )),
        _ => Ok(()),
    }
}

fn bandwidth(prefix: &str, b: &Bandwidth) -> Result<()> {
    let (name, v) = match *b {
        Bandwidth::Rule { c } | Bandwidth::StepScaled { c } => ("bandwidth.c", c),
        Bandwidth::Fixed { epsilon } => ("bandwidth.epsilon", epsilon),
    };
    positive(prefix, name, v)
}

fn sorted_times(prefix: &str, name: &str, ts: &[f64], horizon: f64) -> Result<()> {
    non_empty(prefix, name, ts)?;
    if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0 && *t <= horizon)) {
        return Err(Error::config(field(prefix, name), format!("times must lie in [0, {horizon}]")));
    }
    if ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config(field(prefix, name), "must be strictly increasing"));
    }
    Ok(())
}

/// Indices of `ts` on the uniform grid of `n_steps` steps over `[0, horizon]`.
pub(crate) fn grid_indices(prefix: &str, name: &str, ts: &[f64], horizon: f64, n_steps: usize) -> Result<Vec<usize>> {
    let dt = horizon / n_steps as f64;
    ts.iter()
        .map(|&t| {
            let i = (t / dt).round();
            if (i * dt - t).abs() > 1e-12 * horizon || i < 0.0 || i > n_steps as f64 {
                Err(Error::config(field(prefix, name), format!("{t} is not a grid point")))
            } else {
                Ok(i as usize)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub master_seed: u64,
    pub hurst: Vec<HurstParam>,
    pub horizon: f64,
    pub n_steps: usize,
    pub methods: Vec<Method>,
    pub n_paths: usize,
    /// Largest tolerated `|estimate - exact| / standard error`.
    pub z_threshold: f64,
    /// Two-sample test between the generators on the values at these times.
    pub agreement_times: Vec<f64>,
    pub agreement_paths: usize,
    pub n_permutations: usize,
    pub agreement_alpha: f64,
    /// Number of sample paths written as CSV per Hurst value.
    pub dump_paths: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            master_seed: 11,
            hurst: vec![hp(0.2), hp(0.5), hp(0.8)],
            horizon: 1.0,
            n_steps: 256,
            methods: vec![Method::Cholesky, Method::Circulant],
            n_paths: 10_000,
            z_threshold: 4.0,
            agreement_times: vec![0.125, 0.25, 0.5, 0.75, 1.0],
            agreement_paths: 2000,
            n_permutations: 200,
            agreement_alpha: 0.01,
            dump_paths: 3,
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<()> {
        non_empty("", "hurst", &self.hurst)?;
        non_empty("", "methods", &self.methods)?;
        for &m in &self.methods {
            path_grid("", self.horizon, self.n_steps, m)?;
        }
        at_least("", "n_paths", self.n_paths, 2)?;
        positive("", "z_threshold", self.z_threshold)?;
        if self.methods.len() >= 2 {
            sorted_times("", "agreement_times", &self.agreement_times, self.horizon)?;
            grid_indices("", "agreement_times", &self.agreement_times, self.horizon, self.n_steps)?;
            at_least("", "agreement_paths", self.agreement_paths, 2)?;
            at_least("", "n_permutations", self.n_permutations, 1)?;
            probability("", "agreement_alpha", self.agreement_alpha)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// localtime

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeanCheckConfig {
    pub hurst: Vec<HurstParam>,
    pub n_paths: usize,
    pub bandwidth: Bandwidth,
    /// Level `x` and time `t` of the estimated `L(x, t)`.
    pub x: f64,
    pub t: f64,
    pub tolerance: f64,
}

impl Default for MeanCheckConfig {
    fn default() -> Self {
        MeanCheckConfig {
            hurst: vec![hp(0.5), hp(0.7)],
            n_paths: 10_000,
            bandwidth: Bandwidth::StepScaled { c: 0.9 },
            x: 0.0,
            t: 1.0,
            tolerance: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OccupationCheckConfig {
    pub hurst: HurstParam,
    pub n_paths: usize,
    pub n_functions: usize,
    pub dx: f64,
    pub tolerance: f64,
}

impl Default for OccupationCheckConfig {
    fn default() -> Self {
        OccupationCheckConfig {
            hurst: hp(0.5),
            n_paths: 100,
            n_functions: 10,
            dx: 0.01,
            tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldCheckConfig {
    pub hurst: HurstParam,
    pub n_paths: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_x: usize,
    pub t_grid: Vec<f64>,
    pub epsilon: f64,
    pub n_cutoff: f64,
    pub du: f64,
    /// Largest tolerated `sup |fourier - kernel| / sup |kernel|`.
    pub agreement_tolerance: f64,
    pub probes: ProbeSet,
    pub eps_list: Vec<f64>,
    pub identification_tolerance: f64,
    /// Number of fields written as CSV with a JSON sidecar.
    pub dump_fields: usize,
}

impl Default for FieldCheckConfig {
    fn default() -> Self {
        FieldCheckConfig {
            hurst: hp(0.5),
            n_paths: 20,
            x_lo: -3.0,
            x_hi: 3.0,
            n_x: 601,
            t_grid: vec![0.25, 0.5, 0.75, 1.0],
            epsilon: 0.02,
            n_cutoff: 200.0,
            du: 0.05,
            agreement_tolerance: 0.05,
            probes: ProbeSet::default_for(1.0),
            eps_list: vec![0.4, 0.2],
            identification_tolerance: 0.03,
            dump_fields: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocaltimeConfig {
    pub master_seed: u64,
    pub horizon: f64,
    pub n_steps: usize,
    pub method: Method,
    pub mean: MeanCheckConfig,
    pub occupation: OccupationCheckConfig,
    pub fields: FieldCheckConfig,
}

impl Default for LocaltimeConfig {
    fn default() -> Self {
        LocaltimeConfig {
            master_seed: 22,
            horizon: 1.0,
            n_steps: 2048,
            method: Method::Circulant,
            mean: MeanCheckConfig::default(),
            occupation: OccupationCheckConfig::default(),
            fields: FieldCheckConfig::default(),
        }
    }
}

impl LocaltimeConfig {
    pub fn validate(&self) -> Result<()> {
        path_grid("", self.horizon, self.n_steps, self.method)?;
        let m = &self.mean;
        non_empty("mean", "hurst", &m.hurst)?;
        at_least("mean", "n_paths", m.n_paths, 2)?;
        bandwidth("mean", &m.bandwidth)?;
        if !m.x.is_finite() {
            return Err(Error::config("mean.x", "must be finite"));
        }
        if !(m.t > 0.0 && m.t <= self.horizon) {
            return Err(Error::config("mean.t", format!("{} must lie in (0, horizon]", m.t)));
        }
        positive("mean", "tolerance", m.tolerance)?;
        let o = &self.occupation;
        at_least("occupation", "n_paths", o.n_paths, 1)?;
        at_least("occupation", "n_functions", o.n_functions, 1)?;
        positive("occupation", "dx", o.dx)?;
        positive("occupation", "tolerance", o.tolerance)?;
        let f = &self.fields;
        at_least("fields", "n_paths", f.n_paths, 1)?;
        if !(f.x_lo.is_finite() && f.x_hi.is_finite() && f.x_lo < f.x_hi) {
            return Err(Error::config("fields.x_lo", "need finite x_lo < x_hi"));
        }
        at_least("fields", "n_x", f.n_x, 2)?;
        sorted_times("fields", "t_grid", &f.t_grid, self.horizon)?;
        positive("fields", "epsilon", f.epsilon)?;
        positive("fields", "n_cutoff", f.n_cutoff)?;
        positive("fields", "du", f.du)?;
        positive("fields", "agreement_tolerance", f.agreement_tolerance)?;
        non_empty("fields", "probes", &f.probes.points)?;
        for &(x, t) in &f.probes.points {
            if !f.t_grid.iter().any(|&g| g == t) || x < f.x_lo || x > f.x_hi {
                return Err(Error::config("fields.probes", format!("probe ({x}, {t}) is not on the field grid")));
            }
        }
        non_empty("fields", "eps_list", &f.eps_list)?;
        if f.eps_list.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::config("fields.eps_list", "must be strictly decreasing"));
        }
        let dx = (f.x_hi - f.x_lo) / (f.n_x - 1) as f64;
        if f.eps_list.iter().any(|&e| e < 2.0 * dx) {
            return Err(Error::config("fields.eps_list", format!("bandwidths must be >= 2 dx = {}", 2.0 * dx)));
        }
        positive("fields", "identification_tolerance", f.identification_tolerance)?;
        if self.n_steps % 2 != 0 {
            return Err(Error::config("n_steps", "must be even (refinement check halves the grid)"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub suite: SuiteParams,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            suite: SuiteParams::default(),
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.suite;
        non_empty("suite", "variance_dims", &p.variance_dims)?;
        if p.variance_dims.iter().any(|&d| d < 1) {
            return Err(Error::config("suite.variance_dims", "dimensions must be >= 1"));
        }
        at_least("suite", "variance_trials", p.variance_trials, 1)?;
        non_empty("suite", "moment_a", &p.moment_a)?;
        non_empty("suite", "moment_alpha", &p.moment_alpha)?;
        if p.moment_a.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::config("suite.moment_a", "values must be > 0"));
        }
        if p.moment_alpha.iter().any(|a| !(*a > 0.0 && *a < 2.0)) {
            return Err(Error::config("suite.moment_alpha", "values must lie in (0, 2)"));
        }
        positive("suite", "sigma_horizon", p.sigma_horizon)?;
        for (name, h) in [("sigma_h0", p.sigma_h0), ("sup_h0", p.sup_h0)] {
            HurstParam::new(h).map_err(|e| Error::config(field("suite", name), e.to_string()))?;
        }
        positive("suite", "sigma_eta", p.sigma_eta)?;
        positive("suite", "sigma_delta", p.sigma_delta)?;
        at_least("suite", "sigma_grid", p.sigma_grid, 1)?;
        at_least("suite", "sigma_h_values", p.sigma_h_values, 1)?;
        for (name, hs) in [
            ("concave_h", &p.concave_h),
            ("convexity_h", &p.convexity_h),
            ("neighborhood_h0", &p.neighborhood_h0),
        ] {
            non_empty("suite", name, hs)?;
            for &h in hs.iter() {
                HurstParam::new(h).map_err(|e| Error::config(field("suite", name), e.to_string()))?;
            }
        }
        if p.concave_h.iter().any(|&h| h > 0.5) {
            return Err(Error::config("suite.concave_h", "values must be <= 1/2"));
        }
        if p.convexity_h.iter().any(|&h| h <= 0.5) {
            return Err(Error::config("suite.convexity_h", "values must be > 1/2"));
        }
        non_empty("suite", "concave_m", &p.concave_m)?;
        for &m in p.concave_m.iter().chain([&p.neighborhood_m]) {
            if m < 2 || m % 2 != 0 {
                return Err(Error::config("suite.concave_m", format!("{m} must be even and >= 2")));
            }
        }
        at_least("suite", "det_budget", p.det_budget, 16)?;
        at_least("suite", "convexity_trials", p.convexity_trials, 1)?;
        positive("suite", "neighborhood_eta", p.neighborhood_eta)?;
        at_least("suite", "neighborhood_h_points", p.neighborhood_h_points, 2)?;
        non_empty("suite", "sup_offsets", &p.sup_offsets)?;
        for &d in &p.sup_offsets {
            HurstParam::new(p.sup_h0 + d).map_err(|e| Error::config("suite.sup_offsets", e.to_string()))?;
        }
        at_least("suite", "sup_budget", p.sup_budget, 16)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// scaling

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulusConfig {
    pub h0: HurstParam,
    /// Neighbours of `h0` whose oscillations must sit under the `h0` envelope.
    pub hurst: Vec<HurstParam>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub bandwidth: Bandwidth,
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_x: usize,
    pub n_t: usize,
    pub envelope_factor: f64,
}

impl Default for ModulusConfig {
    fn default() -> Self {
        ModulusConfig {
            h0: hp(0.5),
            hurst: vec![hp(0.45), hp(0.55)],
            n_paths: 200,
            n_steps: 1024,
            bandwidth: Bandwidth::StepScaled { c: 1.0 },
            x_lo: -1.5,
            x_hi: 1.5,
            n_x: 61,
            n_t: 65,
            envelope_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub master_seed: u64,
    pub horizon: f64,
    pub n_steps: usize,
    pub method: Method,
    pub hurst: Vec<HurstParam>,
    pub n_paths: usize,
    pub bandwidth: Bandwidth,
    pub moment_order: u32,
    /// Base point `(x, t)` of the time increments.
    pub base: (f64, f64),
    pub lags: Vec<f64>,
    /// Slope must reach `m (1 - H) - slope_margin`.
    pub slope_margin: f64,
    pub min_r2: f64,
    pub modulus: ModulusConfig,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            master_seed: 33,
            horizon: 1.0,
            n_steps: 1024,
            method: Method::Circulant,
            hurst: vec![hp(0.3), hp(0.5), hp(0.7)],
            n_paths: 5000,
            bandwidth: Bandwidth::StepScaled { c: 1.0 },
            moment_order: 2,
            base: (0.0, 0.0),
            lags: (1..=7).rev().map(|k| 0.5f64.powi(k)).collect(),
            slope_margin: 0.3,
            min_r2: 0.95,
            modulus: ModulusConfig::default(),
        }
    }
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<()> {
        path_grid("", self.horizon, self.n_steps, self.method)?;
        non_empty("", "hurst", &self.hurst)?;
        at_least("", "n_paths", self.n_paths, 2)?;
        bandwidth("", &self.bandwidth)?;
        if self.moment_order != 2 && self.moment_order != 4 {
            return Err(Error::config("moment_order", format!("{} must be 2 or 4", self.moment_order)));
        }
        let (x, t) = self.base;
        if !x.is_finite() || !(t >= 0.0) {
            return Err(Error::config("base", "need finite x and t >= 0"));
        }
        if self.lags.len() < 2 {
            return Err(Error::config("lags", "need at least two lags"));
        }
        let times: Vec<f64> = self.lags.iter().map(|l| t + l).collect();
        if self.lags.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::config("lags", "lags must be > 0"));
        }
        sorted_times("", "lags", &times, self.horizon)?;
        positive("", "slope_margin", self.slope_margin)?;
        probability("", "min_r2", self.min_r2)?;
        let m = &self.modulus;
        path_grid("modulus", self.horizon, m.n_steps, self.method)?;
        non_empty("modulus", "hurst", &m.hurst)?;
        at_least("modulus", "n_paths", m.n_paths, 1)?;
        bandwidth("modulus", &m.bandwidth)?;
        if !(m.x_lo.is_finite() && m.x_hi.is_finite() && m.x_lo < m.x_hi) {
            return Err(Error::config("modulus.x_lo", "need finite x_lo < x_hi"));
        }
        at_least("modulus", "n_x", m.n_x, 3)?;
        at_least("modulus", "n_t", m.n_t, 3)?;
        positive("modulus", "envelope_factor", m.envelope_factor)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// converge

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub h_center: HurstParam,
    /// Sorted by `|H - h_center|` descending.
    pub h_list: Vec<HurstParam>,
    pub curve: CurveConfig,
    /// Significance level of the monotone-decrease test.
    pub alpha: f64,
    /// The same-`H` null must not be rejected at this level.
    pub null_alpha: f64,
    pub path_level: Option<PathLevelConfig>,
}

/// Same harness on `(B_{t_1}, ..., B_{t_k})` instead of local-time probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLevelConfig {
    /// Sorted by `|H - h_center|` descending.
    pub h_list: Vec<HurstParam>,
    pub curve: PathCurveConfig,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig {
            h_center: hp(0.6),
            h_list: vec![hp(0.75), hp(0.70), hp(0.65), hp(0.62)],
            curve: CurveConfig {
                ensemble: EnsembleConfig {
                    n_paths: 2000,
                    horizon: 1.0,
                    n_steps: 1024,
                    method: Method::Circulant,
                    estimator: EstimatorConfig::Kernel {
                        bandwidth: Bandwidth::Fixed { epsilon: 0.05 },
                    },
                    x_grid: vec![0.0, 0.5],
                    t_grid: vec![0.5, 1.0],
                    master_seed: 0,
                    max_values: crate::convergence::default_max_values(),
                },
                probes: ProbeSet::default_for(1.0),
                n_permutations: 200,
                center_seed: 100,
                seeds: vec![101, 102, 103, 104],
                null_seed: Some(105),
                permutation_seed: 7,
            },
            alpha: 0.05,
            null_alpha: 0.05,
            path_level: Some(PathLevelConfig {
                h_list: vec![hp(0.9), hp(0.8), hp(0.7), hp(0.65)],
                curve: PathCurveConfig {
                    n_paths: 2000,
                    horizon: 1.0,
                    n_steps: 1024,
                    method: Method::Circulant,
                    times: vec![0.5, 1.0],
                    n_permutations: 200,
                    center_seed: 200,
                    seeds: vec![201, 202, 203, 204],
                    permutation_seed: 8,
                },
            }),
        }
    }
}

impl ConvergeConfig {
    pub fn validate(&self) -> Result<()> {
        non_empty("", "h_list", &self.h_list)?;
        let gaps: Vec<f64> = self.h_list.iter().map(|h| (h.value() - self.h_center.value()).abs()).collect();
        if gaps.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config("h_list", "must be sorted by |H - h_center| descending"));
        }
        probability("", "alpha", self.alpha)?;
        probability("", "null_alpha", self.null_alpha)?;
        let c = &self.curve;
        let e = &c.ensemble;
        path_grid("curve.ensemble", e.horizon, e.n_steps, e.method)?;
        at_least("curve.ensemble", "n_paths", e.n_paths, 2)?;
        non_empty("curve.ensemble", "x_grid", &e.x_grid)?;
        sorted_times("curve.ensemble", "t_grid", &e.t_grid, e.horizon)?;
        match e.estimator {
            EstimatorConfig::Kernel { bandwidth: b } => bandwidth("curve.ensemble.estimator", &b)?,
            EstimatorConfig::Fourier { n_cutoff, du } => {
                positive("curve.ensemble.estimator", "n_cutoff", n_cutoff)?;
                positive("curve.ensemble.estimator", "du", du)?;
            }
        }
        let cells = e.n_paths.saturating_mul(e.x_grid.len()).saturating_mul(e.t_grid.len());
        if cells > e.max_values {
            return Err(Error::config(
                "curve.ensemble.n_paths",
                format!("{cells} stored values exceed max_values = {}", e.max_values),
            ));
        }
        non_empty("curve", "probes", &c.probes.points)?;
        for &(x, t) in &c.probes.points {
            if !e.x_grid.contains(&x) || !e.t_grid.contains(&t) {
                return Err(Error::config("curve.probes", format!("probe ({x}, {t}) is not on the ensemble grid")));
            }
        }
        at_least("curve", "n_permutations", c.n_permutations, 1)?;
        if c.seeds.len() != self.h_list.len() {
            return Err(Error::config(
                "curve.seeds",
                format!("need one seed per h_list entry ({}), got {}", self.h_list.len(), c.seeds.len()),
            ));
        }
        let mut masters = vec![c.center_seed];
        masters.extend(&c.seeds);
        masters.extend(c.null_seed);
        check_seed_independence(&masters, e.n_paths).map_err(|err| relabel(err, "curve.seeds"))?;
        if let Some(pl) = &self.path_level {
            let p = &pl.curve;
            non_empty("path_level", "h_list", &pl.h_list)?;
            let gaps: Vec<f64> = pl.h_list.iter().map(|h| (h.value() - self.h_center.value()).abs()).collect();
            if gaps.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::config("path_level.h_list", "must be sorted by |H - h_center| descending"));
            }
            path_grid("path_level.curve", p.horizon, p.n_steps, p.method)?;
            at_least("path_level.curve", "n_paths", p.n_paths, 2)?;
            sorted_times("path_level.curve", "times", &p.times, p.horizon)?;
            grid_indices("path_level.curve", "times", &p.times, p.horizon, p.n_steps)?;
            at_least("path_level.curve", "n_permutations", p.n_permutations, 1)?;
            if p.seeds.len() != pl.h_list.len() {
                return Err(Error::config(
                    "path_level.curve.seeds",
                    format!("need one seed per h_list entry ({}), got {}", pl.h_list.len(), p.seeds.len()),
                ));
            }
            let mut all = masters.clone();
            all.push(p.center_seed);
            all.extend(&p.seeds);
            check_seed_independence(&all, e.n_paths.max(p.n_paths))
                .map_err(|err| relabel(err, "path_level.curve.seeds"))?;
        }
        Ok(())
    }
}

fn relabel(err: Error, name: &str) -> Error {
    match err {
        Error::Config { reason, .. } => Error::config(name, reason),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Loading

/// Parses `{"schema_version": 1, ...}` into `T`, rejecting unknown keys.
pub(crate) fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| Error::config("<document>", format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::config("<document>", "top level must be a JSON object"))?;
    match obj.remove("schema_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION as u64) => {}
        Some(other) => {
            return Err(Error::config(
                "schema_version",
                format!("unsupported value {other}; expected {SCHEMA_VERSION}"),
            ))
        }
        None => return Err(Error::config("schema_version", "missing")),
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<document>".into() } else { path }, e.into_inner().to_string())
    })
}

/// Serializes `cfg` together with the schema version.
pub(crate) fn to_document<T: Serialize>(cfg: &T) -> Result<Value> {
    let body = serde_json::to_value(cfg)?;
    let mut doc = serde_json::Map::new();
    doc.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    if let Value::Object(m) = body {
        doc.extend(m);
    }
    Ok(Value::Object(doc))
}
