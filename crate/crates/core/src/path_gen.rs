//! Exact simulation of fractional Brownian motion on a uniform grid.
//!
//! Both generators produce the increments (fractional Gaussian noise) and
//! sum them left to right, so `values[0] = 0` and the grid values are jointly
//! Gaussian with covariance `R_H(t_i, t_j)`.
//!
//! * [`Method::Cholesky`] factors the `n x n` Toeplitz covariance of the
//!   increments once (`O(n^3)`), then each path costs `O(n^2)`.
//! * [`Method::Circulant`] embeds the increment autocovariance in a circulant
//!   matrix of order `2n` and diagonalises it with an FFT (Davies-Harte /
//!   Wood-Chan), `O(n log n)` per path.
//!
//! A generator is immutable after construction and can be shared between
//! threads; a path depends only on `(hurst, grid, method, seed)`.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{pow_nonneg, HurstParam};
use crate::rng::Stream;

/// Largest grid accepted by the Cholesky generator.
pub const MAX_CHOLESKY_STEPS: usize = 4096;

/// Relative threshold below which a negative circulant eigenvalue is round-off.
const EIGEN_CLIP_TOL: f64 = 1e-8;

/// Uniform grid `t_i = i T / n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain("horizon", format!("{horizon} must be finite and > 0")));
        }
        if n_steps == 0 {
            return Err(Error::domain("n_steps", "must be >= 1"));
        }
        Ok(TimeGrid { horizon, n_steps })
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.point(i)).collect()
    }

    /// Number of grid points `t_k` with `t_k < t` (left-endpoint quadrature
    /// count), for `0 <= t <= horizon`. Times within `1e-9 dt` of a grid point
    /// are treated as that point.
    pub fn steps_before(&self, t: f64) -> usize {
        let x = t / self.dt();
        let k = x.round();
        let k = if (x - k).abs() <= 1e-9 { k } else { x.ceil() };
        (k.max(0.0) as usize).min(self.n_steps + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cholesky,
    Circulant,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Cholesky => f.write_str("cholesky"),
            Method::Circulant => f.write_str("circulant"),
        }
    }
}

/// One realisation of `B^H` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    values: Vec<f64>,
    hurst: HurstParam,
    seed: u64,
}

impl SamplePath {
    /// Wraps externally produced values (e.g. deterministic test paths).
    pub fn from_values(grid: TimeGrid, values: Vec<f64>, hurst: HurstParam, seed: u64) -> Result<Self> {
        if values.len() != grid.n_steps() + 1 {
            return Err(Error::domain(
                "values",
                format!("length {} != n_steps + 1 = {}", values.len(), grid.n_steps() + 1),
            ));
        }
        if values[0] != 0.0 {
            return Err(Error::domain("values", "path must start at 0"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("values", "non-finite path value"));
        }
        Ok(SamplePath {
            grid,
            values,
            hurst,
            seed,
        })
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Value at the grid point nearest to `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let i = (t / self.grid.dt()).round().clamp(0.0, self.grid.n_steps() as f64) as usize;
        self.values[i]
    }

    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Writes the `t,value` CSV dump.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", crate::artifacts::fmt17(self.grid.point(i)), crate::artifacts::fmt17(*v))?;
        }
        Ok(())
    }
}

/// Autocovariance of fractional Gaussian noise with unit step at lag `k`.
pub fn fgn_autocovariance(h: HurstParam, k: usize) -> f64 {
    let p = h.two_h();
    let k = k as f64;
    0.5 * (pow_nonneg(k + 1.0, p) + pow_nonneg((k - 1.0).abs(), p) - 2.0 * pow_nonneg(k, p))
}

enum Kernel {
    /// Packed lower-triangular factor, row `i` at offset `i (i + 1) / 2`.
    Cholesky { lower: Vec<f64> },
    Circulant {
        /// `sqrt(lambda_k / 2n)` for `k = 0..=n`.
        scales: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
}

/// A reusable fBm sampler for a fixed `(hurst, grid, method)`.
pub struct FbmGenerator {
    hurst: HurstParam,
    grid: TimeGrid,
    requested: Method,
    kernel: Kernel,
    fallback: Option<String>,
    regularized: bool,
}

impl std::fmt::Debug for FbmGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmGenerator")
            .field("hurst", &self.hurst)
            .field("grid", &self.grid)
            .field("requested", &self.requested)
            .field("method", &self.method())
            .field("fallback", &self.fallback)
            .finish()
    }
}

impl FbmGenerator {
    pub fn new(hurst: HurstParam, grid: TimeGrid, method: Method) -> Result<Self> {
        match method {
            Method::Cholesky => Self::cholesky(hurst, grid),
            Method::Circulant => Self::circulant(hurst, grid),
        }
    }

    pub fn cholesky(hurst: HurstParam, grid: TimeGrid) -> Result<Self> {
        let n = grid.n_steps();
        if n > MAX_CHOLESKY_STEPS {
            return Err(Error::domain(
                "n_steps",
                format!("{n} exceeds the Cholesky budget of {MAX_CHOLESKY_STEPS} steps"),
            ));
        }
        let scale = pow_nonneg(grid.dt(), hurst.two_h());
        let acov: Vec<f64> = (0..n).map(|k| scale * fgn_autocovariance(hurst, k)).collect();
        let (lower, regularized) = match toeplitz_cholesky(&acov, 0.0) {
            Ok(l) => (l, false),
            Err(_) => {
                let jitter = 1e-12 * acov[0];
                let l = toeplitz_cholesky(&acov, jitter).map_err(|pivot| {
                    Error::numerical(
                        "cholesky",
                        format!("covariance not positive definite after jitter {jitter:e}; smallest pivot {pivot:e}"),
                    )
                })?;
                (l, true)
            }
        };
        Ok(FbmGenerator {
            hurst,
            grid,
            requested: Method::Cholesky,
            kernel: Kernel::Cholesky { lower },
            fallback: None,
            regularized,
        })
    }

    /// Circulant embedding; falls back to Cholesky when the embedding has a
    /// genuinely negative eigenvalue.
    pub fn circulant(hurst: HurstParam, grid: TimeGrid) -> Result<Self> {
        let n = grid.n_steps();
        if !n.is_power_of_two() {
            return Err(Error::domain(
                "n_steps",
                format!("{n} is not a power of two (required by the circulant generator)"),
            ));
        }
        let m = 2 * n;
        let mut row: Vec<Complex<f64>> = (0..m)
            .map(|k| {
                let lag = if k <= n { k } else { m - k };
                Complex::new(fgn_autocovariance(hurst, lag), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut row);
        let eig: Vec<f64> = row[..=n].iter().map(|c| c.re).collect();
        let max = eig.iter().cloned().fold(0.0, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -EIGEN_CLIP_TOL * max {
            let mut g = Self::cholesky(hurst, grid)?;
            g.requested = Method::Circulant;
            g.fallback = Some(format!(
                "circulant embedding has eigenvalue {min:e} (max {max:e}); used cholesky"
            ));
            return Ok(g);
        }
        let step_scale = pow_nonneg(grid.dt(), hurst.value());
        let scales = eig
            .iter()
            .map(|&l| step_scale * (l.max(0.0) / m as f64).sqrt())
            .collect();
        Ok(FbmGenerator {
            hurst,
            grid,
            requested: Method::Circulant,
            kernel: Kernel::Circulant { scales, fft },
            fallback: None,
            regularized: false,
        })
    }

    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn requested_method(&self) -> Method {
        self.requested
    }

    /// The method actually used to draw paths.
    pub fn method(&self) -> Method {
        match self.kernel {
            Kernel::Cholesky { .. } => Method::Cholesky,
            Kernel::Circulant { .. } => Method::Circulant,
        }
    }

    /// Reason for a circulant-to-Cholesky fallback, if one happened.
    pub fn fallback(&self) -> Option<&str> {
        self.fallback.as_deref()
    }

    pub fn regularized(&self) -> bool {
        self.regularized
    }

    pub fn sample(&self, seed: u64) -> SamplePath {
        let mut values = vec![0.0; self.grid.n_steps() + 1];
        self.sample_into(seed, &mut values);
        SamplePath {
            grid: self.grid,
            values,
            hurst: self.hurst,
            seed,
        }
    }

    /// Fills `values` (length `n + 1`) with the path for `seed`.
    pub fn sample_into(&self, seed: u64, values: &mut [f64]) {
        let n = self.grid.n_steps();
        assert_eq!(values.len(), n + 1, "output buffer must hold n_steps + 1 values");
        let mut stream = Stream::new(seed);
        let increments = match &self.kernel {
            Kernel::Cholesky { lower } => {
                let mut z = vec![0.0; n];
                stream.fill_normal(&mut z);
                (0..n)
                    .map(|i| {
                        let row = &lower[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
                        row.iter().zip(&z).map(|(l, z)| l * z).sum::<f64>()
                    })
                    .collect::<Vec<f64>>()
            }
            Kernel::Circulant { scales, fft } => {
                let m = 2 * n;
                let mut w = vec![Complex::new(0.0, 0.0); m];
                w[0] = Complex::new(scales[0] * stream.normal(), 0.0);
                w[n] = Complex::new(scales[n] * stream.normal(), 0.0);
                let half = std::f64::consts::FRAC_1_SQRT_2;
                for k in 1..n {
                    let a = scales[k] * half;
                    let c = Complex::new(a * stream.normal(), a * stream.normal());
                    w[k] = c;
                    w[m - k] = c.conj();
                }
                fft.process(&mut w);
                w[..n].iter().map(|c| c.re).collect()
            }
        };
        values[0] = 0.0;
        let mut acc = 0.0;
        for (i, dx) in increments.into_iter().enumerate() {
            acc += dx;
            values[i + 1] = acc;
        }
    }
}

/// Lower Cholesky factor of the symmetric Toeplitz matrix with first row
/// `acov` plus `jitter` on the diagonal. On failure returns the offending pivot.
fn toeplitz_cholesky(acov: &[f64], jitter: f64) -> std::result::Result<Vec<f64>, f64> {
    let n = acov.len();
    let mut l = vec![0.0; n * (n + 1) / 2];
    let mut min_pivot = f64::INFINITY;
    for i in 0..n {
        let ri = i * (i + 1) / 2;
        for j in 0..=i {
            let rj = j * (j + 1) / 2;
            let dot: f64 = l[ri..ri + j].iter().zip(&l[rj..rj + j]).map(|(a, b)| a * b).sum();
            let a = acov[i - j] + if i == j { jitter } else { 0.0 };
            if i == j {
                let pivot = a - dot;
                min_pivot = min_pivot.min(pivot);
                if !(pivot > 0.0) {
                    return Err(pivot);
                }
                l[ri + i] = pivot.sqrt();
            } else {
                l[ri + j] = (a - dot) / l[rj + j];
            }
        }
    }
    debug_assert!(min_pivot > 0.0);
    Ok(l)
}

/// Convenience: one Cholesky path.
pub fn generate_cholesky(h: HurstParam, grid: TimeGrid, seed: u64) -> Result<SamplePath> {
    Ok(FbmGenerator::cholesky(h, grid)?.sample(seed))
}

/// Convenience: one circulant-embedding path.
pub fn generate_circulant(h: HurstParam, grid: TimeGrid, seed: u64) -> Result<SamplePath> {
    Ok(FbmGenerator::circulant(h, grid)?.sample(seed))
}
