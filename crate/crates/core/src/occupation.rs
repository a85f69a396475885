//! Occupation measure and local-time estimators.
//!
//! All time integrals use the left-endpoint rule on the path grid: a time
//! `t` covers the steps `k` with `t_k < t`, each weighted by `dt`. Both
//! estimators are therefore exact sums over grid values, monotone in `t` where
//! the summand is nonnegative.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{pow_nonneg, HurstParam};
use crate::path_gen::{SamplePath, TimeGrid};

/// Allowed undershoot of a local-time field below zero.
pub const NEGATIVITY_TOL: f64 = 1e-9;

fn check_time(grid: &TimeGrid, t: f64) -> Result<()> {
    if !(t >= 0.0 && t <= grid.horizon() * (1.0 + 1e-12)) {
        return Err(Error::domain(
            "t",
            format!("{t} outside [0, horizon = {}]", grid.horizon()),
        ));
    }
    Ok(())
}

/// Binned occupation measure `mu^t` on `[x_lo, x_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationHistogram {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_bins: usize,
    pub masses: Vec<f64>,
    pub t: f64,
    /// Occupation time spent outside `[x_lo, x_hi]`.
    pub overflow: f64,
}

impl OccupationHistogram {
    pub fn bin_width(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.n_bins as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.x_lo + (i as f64 + 0.5) * self.bin_width()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Histogram density estimate (mass per unit space).
    pub fn density(&self) -> Vec<f64> {
        let w = self.bin_width();
        self.masses.iter().map(|m| m / w).collect()
    }

    /// `∫ g dmu^t` with `g` evaluated at bin centres.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, m)| m * g(self.bin_center(i)))
            .sum()
    }
}

pub fn occupation_histogram(
    path: &SamplePath,
    t: f64,
    x_lo: f64,
    x_hi: f64,
    n_bins: usize,
) -> Result<OccupationHistogram> {
    let grid = path.grid();
    check_time(grid, t)?;
    if !(x_lo < x_hi) || !x_lo.is_finite() || !x_hi.is_finite() {
        return Err(Error::domain("x_lo", format!("need finite x_lo < x_hi, got [{x_lo}, {x_hi}]")));
    }
    if n_bins == 0 {
        return Err(Error::domain("n_bins", "must be >= 1"));
    }
    let dt = grid.dt();
    let w = (x_hi - x_lo) / n_bins as f64;
    let mut masses = vec![0.0; n_bins];
    let mut overflow = 0.0;
    for &x in &path.values()[..grid.steps_before(t)] {
        if x < x_lo || x > x_hi {
            overflow += dt;
            continue;
        }
        let i = (((x - x_lo) / w) as usize).min(n_bins - 1);
        masses[i] += dt;
    }
    Ok(OccupationHistogram {
        x_lo,
        x_hi,
        n_bins,
        masses,
        t,
        overflow,
    })
}

/// `∫_0^t g(X_s) ds` by the left-endpoint rule.
pub fn occupation_integral<G: Fn(f64) -> f64>(path: &SamplePath, t: f64, g: G) -> Result<f64> {
    let grid = path.grid();
    check_time(grid, t)?;
    let dt = grid.dt();
    Ok(path.values()[..grid.steps_before(t)].iter().map(|&x| dt * g(x)).sum())
}

/// The bump `phi(y) = (15/16)(1 - y^2)^2` on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MollifierKernel {
    _checked: (),
}

impl MollifierKernel {
    /// Builds the kernel after checking `∫ phi = 1` numerically to `1e-10`.
    pub fn new() -> Result<Self> {
        let k = MollifierKernel { _checked: () };
        let mass = crate::quadrature::integrate(|y| k.phi(y), -1.0, 1.0, 1e-14, 1e-14)?.value;
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::numerical("mollifier", format!("integral {mass} != 1")));
        }
        Ok(k)
    }

    #[inline]
    pub fn phi(&self, y: f64) -> f64 {
        let s = 1.0 - y * y;
        if s > 0.0 {
            0.9375 * s * s
        } else {
            0.0
        }
    }

    /// `phi'`, for the C¹ check.
    #[inline]
    pub fn phi_prime(&self, y: f64) -> f64 {
        let s = 1.0 - y * y;
        if s > 0.0 {
            -3.75 * y * s
        } else {
            0.0
        }
    }

    /// `g_eps(u, x) = phi((u - x) / eps) / eps`.
    #[inline]
    pub fn g(&self, u: f64, x: f64, eps: f64) -> f64 {
        self.phi((u - x) / eps) / eps
    }
}

/// Kernel bandwidth choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Bandwidth {
    /// `eps = c * std(X_T) * n^{-1/5}` with `std(X_T) = T^H`.
    Rule { c: f64 },
    Fixed { epsilon: f64 },
    /// `eps = c * dt^H`, the typical one-step displacement.
    StepScaled { c: f64 },
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Rule { c: 1.06 }
    }
}

impl Bandwidth {
    pub fn resolve(&self, h: HurstParam, grid: &TimeGrid) -> Result<f64> {
        let eps = match *self {
            Bandwidth::Rule { c } => {
                c * pow_nonneg(grid.horizon(), h.value()) * (grid.n_steps() as f64).powf(-0.2)
            }
            Bandwidth::Fixed { epsilon } => epsilon,
            Bandwidth::StepScaled { c } => c * pow_nonneg(grid.dt(), h.value()),
        };
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::domain("epsilon", format!("bandwidth {eps} must be > 0")));
        }
        Ok(eps)
    }
}

/// Estimator used to build a field, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorParams {
    Kernel { epsilon: f64 },
    Fourier { n_cutoff: f64, du: f64 },
}

impl EstimatorParams {
    pub fn tag(&self) -> &'static str {
        match self {
            EstimatorParams::Kernel { .. } => "kernel",
            EstimatorParams::Fourier { .. } => "fourier",
        }
    }
}

/// Estimated local time `L^t_x` on an `(x, t)` grid.
///
/// `values` is stored time-major: entry `(ix, it)` lives at `it * nx + ix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeField {
    pub x_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub params: EstimatorParams,
    pub hurst: f64,
    pub seed: u64,
    pub path_grid: TimeGrid,
}

impl LocalTimeField {
    #[inline]
    pub fn nx(&self) -> usize {
        self.x_grid.len()
    }

    #[inline]
    pub fn nt(&self) -> usize {
        self.t_grid.len()
    }

    #[inline]
    pub fn get(&self, ix: usize, it: usize) -> f64 {
        self.values[it * self.nx() + ix]
    }

    pub fn estimator_tag(&self) -> &'static str {
        self.params.tag()
    }

    /// Index of `x` in `x_grid`; membership must be exact up to `1e-12` relative.
    pub fn x_index(&self, x: f64) -> Result<usize> {
        find_exact(&self.x_grid, x).ok_or_else(|| Error::domain("x", format!("{x} is not on the field's x grid")))
    }

    pub fn t_index(&self, t: f64) -> Result<usize> {
        find_exact(&self.t_grid, t).ok_or_else(|| Error::domain("t", format!("{t} is not on the field's t grid")))
    }

    pub fn value_at(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.get(self.x_index(x)?, self.t_index(t)?))
    }

    /// Values with negative entries set to 0, for statistics that need a density.
    pub fn clipped(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.max(0.0)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes the `x,t,value` CSV dump.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        use crate::artifacts::fmt17;
        writeln!(out, "x,t,value")?;
        for (it, t) in self.t_grid.iter().enumerate() {
            for (ix, x) in self.x_grid.iter().enumerate() {
                writeln!(out, "{},{},{}", fmt17(*x), fmt17(*t), fmt17(self.get(ix, it)))?;
            }
        }
        Ok(())
    }

    /// Metadata for the JSON sidecar.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "estimator": self.estimator_tag(),
            "params": self.params,
            "seed": self.seed,
            "hurst": self.hurst,
            "grid": {
                "horizon": self.path_grid.horizon(),
                "n_steps": self.path_grid.n_steps(),
                "x_grid": self.x_grid,
                "t_grid": self.t_grid,
            },
        })
    }
}

fn find_exact(grid: &[f64], v: f64) -> Option<usize> {
    let tol = 1e-12 * v.abs().max(1.0);
    grid.iter().position(|g| (g - v).abs() <= tol)
}

/// Uniform grid of `n` points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

fn validate_grids(path: &SamplePath, x_grid: &[f64], t_grid: &[f64]) -> Result<Vec<usize>> {
    if x_grid.is_empty() || x_grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("x_grid", "must be non-empty and finite"));
    }
    if t_grid.is_empty() {
        return Err(Error::domain("t_grid", "must be non-empty"));
    }
    t_grid
        .iter()
        .map(|&t| check_time(path.grid(), t).map(|_| path.grid().steps_before(t)))
        .collect()
}

/// Accumulates `sum_{k < steps[it]} dt * w(X_k)` for each requested step count.
fn cumulative_at<W: Fn(f64) -> f64>(values: &[f64], dt: f64, steps: &[usize], w: W) -> Vec<f64> {
    let last = steps.iter().copied().max().unwrap_or(0);
    let mut prefix = Vec::with_capacity(last + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for &x in &values[..last] {
        acc += dt * w(x);
        prefix.push(acc);
    }
    steps.iter().map(|&s| prefix[s]).collect()
}

fn assemble(per_x: Vec<Vec<f64>>, nt: usize) -> Vec<f64> {
    let nx = per_x.len();
    let mut values = vec![0.0; nx * nt];
    for (ix, col) in per_x.into_iter().enumerate() {
        for (it, v) in col.into_iter().enumerate() {
            values[it * nx + ix] = v;
        }
    }
    values
}

/// Kernel estimator `sum_{t_k < t} dt g_eps(X_{t_k}, x)`.
pub fn kernel_local_time(path: &SamplePath, x_grid: &[f64], t_grid: &[f64], epsilon: f64) -> Result<LocalTimeField> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::domain("epsilon", format!("{epsilon} must be > 0")));
    }
    let steps = validate_grids(path, x_grid, t_grid)?;
    let kernel = MollifierKernel::new()?;
    let dt = path.grid().dt();
    let vals = path.values();
    let per_x: Vec<Vec<f64>> = if x_grid.len() >= 8 {
        x_grid
            .par_iter()
            .map(|&x| cumulative_at(vals, dt, &steps, |u| kernel.g(u, x, epsilon)))
            .collect()
    } else {
        x_grid
            .iter()
            .map(|&x| cumulative_at(vals, dt, &steps, |u| kernel.g(u, x, epsilon)))
            .collect()
    };
    Ok(LocalTimeField {
        x_grid: x_grid.to_vec(),
        t_grid: t_grid.to_vec(),
        values: assemble(per_x, t_grid.len()),
        params: EstimatorParams::Kernel { epsilon },
        hurst: path.hurst().value(),
        seed: path.seed(),
        path_grid: *path.grid(),
    })
}

/// Dirichlet kernel `1 + 2 sum_{j=1}^J cos(j theta)`.
#[inline]
pub fn dirichlet(j_max: usize, theta: f64) -> f64 {
    let half = 0.5 * theta;
    let s = half.sin();
    if s.abs() < 1e-9 {
        // 2J+1 - J(J+1)(2J+1) theta^2 / 6 + O(theta^4)
        let j = j_max as f64;
        return (2.0 * j + 1.0) * (1.0 - j * (j + 1.0) * theta * theta / 6.0);
    }
    ((j_max as f64 + 0.5) * theta).sin() / s
}

/// Number of positive frequencies `J = floor(N / du)` on the u-grid.
pub fn fourier_frequencies(n_cutoff: f64, du: f64) -> usize {
    (n_cutoff / du * (1.0 + 1e-12)).floor() as usize
}

/// Fourier-truncation estimator
/// `psi_N(x, t) = (1/2pi) sum_{|u_j| <= N} du sum_{t_k < t} dt cos(u_j (X_k - x))`
/// on the symmetric grid `u_j = j du`. The frequency sum is evaluated in closed
/// form through the Dirichlet kernel.
pub fn fourier_local_time(
    path: &SamplePath,
    x_grid: &[f64],
    t_grid: &[f64],
    n_cutoff: f64,
    du: f64,
) -> Result<LocalTimeField> {
    if !(n_cutoff.is_finite() && n_cutoff > 0.0) {
        return Err(Error::domain("n_cutoff", format!("{n_cutoff} must be > 0")));
    }
    if !(du.is_finite() && du > 0.0) {
        return Err(Error::domain("du", format!("{du} must be > 0")));
    }
    let steps = validate_grids(path, x_grid, t_grid)?;
    let (lo, hi) = path.range();
    let max_x = x_grid.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let bound = PI / (4.0 * max_x + (hi - lo));
    if du > bound {
        return Err(Error::domain(
            "du",
            format!("{du} exceeds the aliasing bound pi / (4 max|x| + path range) = {bound}"),
        ));
    }
    let j_max = fourier_frequencies(n_cutoff, du);
    let dt = path.grid().dt();
    let vals = path.values();
    let scale = du / (2.0 * PI);
    let column = |x: f64| -> Vec<f64> {
        cumulative_at(vals, dt, &steps, |u| scale * dirichlet(j_max, du * (u - x)))
    };
    let per_x: Vec<Vec<f64>> = if x_grid.len() >= 8 {
        x_grid.par_iter().map(|&x| column(x)).collect()
    } else {
        x_grid.iter().map(|&x| column(x)).collect()
    };
    Ok(LocalTimeField {
        x_grid: x_grid.to_vec(),
        t_grid: t_grid.to_vec(),
        values: assemble(per_x, t_grid.len()),
        params: EstimatorParams::Fourier { n_cutoff, du },
        hurst: path.hurst().value(),
        seed: path.seed(),
        path_grid: *path.grid(),
    })
}

/// `Delta_{x,t} L(x + k, t + h) = L(x+k, t+h) - L(x+k, t) - L(x, t+h) + L(x, t)`.
pub fn rectangle_increment(field: &LocalTimeField, x: f64, t: f64, k: f64, h: f64) -> Result<f64> {
    let (ix0, ix1) = (field.x_index(x)?, field.x_index(x + k)?);
    let (it0, it1) = (field.t_index(t)?, field.t_index(t + h)?);
    Ok(rectangle_increment_at(field, ix0, it0, ix1, it1))
}

/// Rectangle increment between grid indices.
#[inline]
pub fn rectangle_increment_at(field: &LocalTimeField, ix0: usize, it0: usize, ix1: usize, it1: usize) -> f64 {
    (field.get(ix1, it1) - field.get(ix1, it0)) - (field.get(ix0, it1) - field.get(ix0, it0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_gen::{generate_circulant, FbmGenerator, Method};
    use crate::rng::{derive_seed, Stream};
    use proptest::prelude::*;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    fn linear_path(n: usize) -> SamplePath {
        let grid = TimeGrid::new(1.0, n).unwrap();
        SamplePath::from_values(grid, grid.points(), hp(0.5), 0).unwrap()
    }

    fn zero_path(n: usize) -> SamplePath {
        let grid = TimeGrid::new(1.0, n).unwrap();
        SamplePath::from_values(grid, vec![0.0; n + 1], hp(0.5), 0).unwrap()
    }

    #[test]
    fn mollifier_is_normalized_c1_and_supported() {
        let k = MollifierKernel::new().unwrap();
        assert_eq!(k.phi(1.0), 0.0);
        assert_eq!(k.phi(-1.5), 0.0);
        assert_eq!(k.phi_prime(1.0), 0.0);
        assert_eq!(k.phi(0.0), 0.9375);
        let h = 1e-6;
        for y in [-0.9, -0.3, 0.0, 0.4, 0.99] {
            let fd = (k.phi(y + h) - k.phi(y - h)) / (2.0 * h);
            assert!((fd - k.phi_prime(y)).abs() < 1e-8);
        }
    }

    #[test]
    fn histogram_of_constant_and_linear_paths() {
        let h = occupation_histogram(&zero_path(100), 1.0, -1.0, 1.0, 5).unwrap();
        assert_eq!(h.masses.iter().filter(|m| **m > 0.0).count(), 1);
        assert!((h.masses[2] - 1.0).abs() < 1e-12);

        let n = 1000;
        let h = occupation_histogram(&linear_path(n), 1.0, 0.0, 1.0, 4).unwrap();
        for m in &h.masses {
            assert!((m - 0.25).abs() <= 1.0 / n as f64 + 1e-12, "{m}");
        }
        assert!((h.total() + h.overflow - 1.0).abs() <= 1.0 / n as f64);
        assert!(occupation_histogram(&linear_path(n), 1.5, 0.0, 1.0, 4).is_err());
    }

    #[test]
    fn occupation_integral_basics() {
        let grid = TimeGrid::new(1.0, 2048).unwrap();
        let p = generate_circulant(hp(0.5), grid, 1).unwrap();
        let v = occupation_integral(&p, 0.7, |_| 1.0).unwrap();
        assert!((v - 0.7).abs() <= grid.dt());

        let g = FbmGenerator::new(hp(0.5), TimeGrid::new(1.0, 256).unwrap(), Method::Circulant).unwrap();
        let xs: Vec<f64> = (0..10_000)
            .map(|r| occupation_integral(&g.sample(derive_seed(2, r)), 1.0, |u| u).unwrap())
            .collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * sd / n.sqrt());
    }

    #[test]
    fn mollified_occupation_matches_fine_histogram() {
        let grid = TimeGrid::new(1.0, 2048).unwrap();
        let p = generate_circulant(hp(0.6), grid, 4).unwrap();
        let k = MollifierKernel::new().unwrap();
        let eps = 0.2;
        let hist = occupation_histogram(&p, 1.0, -4.0, 4.0, 8000).unwrap();
        for x in [-0.3, 0.0, 0.25] {
            let direct = occupation_integral(&p, 1.0, |u| k.g(u, x, eps)).unwrap();
            let via_hist = hist.integrate(|u| k.g(u, x, eps));
            assert!((direct - via_hist).abs() <= 1e-3 * direct.max(1.0), "{direct} vs {via_hist}");
        }
    }

    #[test]
    fn kernel_field_support_zero_and_mass() {
        let grid = TimeGrid::new(1.0, 1024).unwrap();
        let p = generate_circulant(hp(0.5), grid, 9).unwrap();
        let (lo, hi) = p.range();
        let eps = 0.05;
        let x_grid = linspace(-4.0, 4.0, 801);
        let t_grid = vec![0.0, 0.5, 1.0];
        let f = kernel_local_time(&p, &x_grid, &t_grid, eps).unwrap();
        for ix in 0..f.nx() {
            assert_eq!(f.get(ix, 0), 0.0);
            assert!(f.get(ix, 1) <= f.get(ix, 2));
            let x = x_grid[ix];
            if x < lo - eps || x > hi + eps {
                assert_eq!(f.get(ix, 2), 0.0);
            }
        }
        let dx = x_grid[1] - x_grid[0];
        let mass: f64 = (0..f.nx()).map(|ix| f.get(ix, 2)).sum::<f64>() * dx;
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
        assert!(kernel_local_time(&p, &x_grid, &t_grid, 0.0).is_err());
    }

    #[test]
    fn fourier_matches_direct_cosine_sum() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let p = generate_circulant(hp(0.4), grid, 5).unwrap();
        let (n_cut, du) = (30.0, 0.1);
        let x_grid = vec![-0.5, 0.0, 0.3];
        let t_grid = vec![0.0, 0.5, 1.0];
        let f = fourier_local_time(&p, &x_grid, &t_grid, n_cut, du).unwrap();
        let j_max = fourier_frequencies(n_cut, du);
        assert_eq!(j_max, 300);
        for (it, &t) in t_grid.iter().enumerate() {
            for (ix, &x) in x_grid.iter().enumerate() {
                let mut direct = 0.0;
                for j in -(j_max as i64)..=(j_max as i64) {
                    let u = j as f64 * du;
                    direct += du * occupation_integral(&p, t, |xk| (u * (xk - x)).cos()).unwrap();
                }
                direct /= 2.0 * PI;
                assert!((f.get(ix, it) - direct).abs() < 1e-10, "{} vs {direct}", f.get(ix, it));
            }
        }
        for ix in 0..3 {
            assert_eq!(f.get(ix, 0), 0.0);
        }
    }

    #[test]
    fn fourier_preconditions_name_the_bound() {
        let p = linear_path(16);
        let err = fourier_local_time(&p, &[0.0], &[1.0], 10.0, 4.0).unwrap_err();
        assert!(err.to_string().contains("du"));
        assert!(fourier_local_time(&p, &[0.0], &[1.0], -1.0, 0.1).is_err());
    }

    #[test]
    fn rectangle_increment_rules() {
        let grid = TimeGrid::new(1.0, 512).unwrap();
        let p = generate_circulant(hp(0.5), grid, 3).unwrap();
        let x_grid = linspace(-1.0, 1.0, 41);
        let t_grid = linspace(0.0, 1.0, 11);
        let f = kernel_local_time(&p, &x_grid, &t_grid, 0.1).unwrap();
        assert_eq!(rectangle_increment(&f, 0.0, 0.5, 0.0, 0.2).unwrap(), 0.0);
        assert_eq!(rectangle_increment(&f, 0.0, 0.5, 0.1, 0.0).unwrap(), 0.0);
        assert!(rectangle_increment(&f, 0.01, 0.5, 0.1, 0.1).is_err());

        let mut s = Stream::new(1);
        for _ in 0..200 {
            let (ix, it) = (s.below(39), s.below(9));
            let dk = 1 + s.below((40 - ix) / 2);
            let dh = 1 + s.below(10 - it);
            let a = rectangle_increment_at(&f, ix, it, ix + dk, it + dh);
            let direct = f.get(ix + dk, it + dh) - f.get(ix + dk, it) - f.get(ix, it + dh) + f.get(ix, it);
            assert!((a - direct).abs() <= 4.0 * f64::EPSILON * f.max_abs());
            if ix + 2 * dk < 41 {
                let b = rectangle_increment_at(&f, ix + dk, it, ix + 2 * dk, it + dh);
                let whole = rectangle_increment_at(&f, ix, it, ix + 2 * dk, it + dh);
                assert!((a + b - whole).abs() <= 1e-15 * f.max_abs().max(1.0));
            }
        }
    }

    #[test]
    fn csv_and_sidecar() {
        let p = linear_path(8);
        let f = kernel_local_time(&p, &[0.0, 0.5], &[0.0, 1.0], 0.3).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,t,value\n"));
        assert_eq!(text.lines().count(), 5);
        let meta = f.sidecar();
        assert_eq!(meta["estimator"], "kernel");
        assert_eq!(meta["params"]["epsilon"], 0.3);
    }

    #[test]
    fn bandwidth_rules() {
        let grid = TimeGrid::new(1.0, 1024).unwrap();
        let h = hp(0.5);
        let eps = Bandwidth::default().resolve(h, &grid).unwrap();
        assert!((eps - 1.06 * 1024f64.powf(-0.2)).abs() < 1e-15);
        let eps = Bandwidth::StepScaled { c: 2.0 }.resolve(h, &grid).unwrap();
        assert!((eps - 2.0 / 32.0).abs() < 1e-15);
        assert!(Bandwidth::Fixed { epsilon: 0.0 }.resolve(h, &grid).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kernel_fields_are_nonnegative_and_monotone(seed in any::<u64>(), h in 0.1f64..0.9, eps in 0.01f64..0.5) {
            let grid = TimeGrid::new(1.0, 128).unwrap();
            let p = generate_circulant(hp(h), grid, seed).unwrap();
            let f = kernel_local_time(&p, &linspace(-1.0, 1.0, 9), &linspace(0.0, 1.0, 5), eps).unwrap();
            for ix in 0..f.nx() {
                prop_assert_eq!(f.get(ix, 0), 0.0);
                for it in 1..f.nt() {
                    prop_assert!(f.get(ix, it) >= f.get(ix, it - 1));
                }
            }
        }

        #[test]
        fn histogram_conserves_mass(seed in any::<u64>(), t in 0.0f64..1.0, bins in 1usize..50) {
            let grid = TimeGrid::new(1.0, 256).unwrap();
            let p = generate_circulant(hp(0.5), grid, seed).unwrap();
            let hist = occupation_histogram(&p, t, -0.5, 0.5, bins).unwrap();
            prop_assert!(hist.masses.iter().all(|m| *m >= 0.0));
            prop_assert!((hist.total() + hist.overflow - t).abs() <= grid.dt() + 1e-12);
        }
    }


    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn kernel_mass_equals_elapsed_time(seed in any::<u64>(), h in 0.2f64..0.8, eps in 0.02f64..0.3, it in 1usize..=4) {
            let grid = TimeGrid::new(1.0, 256).unwrap();
            let p = generate_circulant(hp(h), grid, seed).unwrap();
            let (lo, hi) = p.range();
            let x_grid = linspace(lo - eps - 0.1, hi + eps + 0.1, 2001);
            let t = it as f64 * 0.25;
            let f = kernel_local_time(&p, &x_grid, &[t], eps).unwrap();
            let dx = x_grid[1] - x_grid[0];
            let mass: f64 = (0..f.nx()).map(|ix| f.get(ix, 0)).sum::<f64>() * dx;
            // trapezoid = plain sum since the field vanishes at both ends
            prop_assert!((mass - t).abs() < 1e-3 * t + 1e-9, "{} vs {}", mass, t);
        }
    }
}
