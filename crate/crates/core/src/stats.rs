//! Small statistics helpers: moments, least squares, Kendall's tau.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Empirical quantile with linear interpolation, `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::domain("x", "x and y lengths differ"));
    }
    if x.len() < 2 {
        return Err(Error::domain("lags", "a slope needs at least two points"));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("lags", "all abscissae coincide"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { slope, intercept, r2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KendallTest {
    pub tau: f64,
    /// One-sided p-value `P(tau <= observed)` under exchangeability.
    pub p_lower: f64,
    pub exact: bool,
}

fn tau_numerator(x: &[f64], y: &[f64]) -> i64 {
    let mut s = 0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let a = (x[j] - x[i]).signum() * (y[j] - y[i]).signum();
            s += a as i64;
        }
    }
    s
}

/// Kendall's tau-a between `x` and `y`, with the lower-tail p-value. Exact by
/// enumeration of all permutations for `n <= 9`, normal approximation above.
pub fn kendall(x: &[f64], y: &[f64]) -> Result<KendallTest> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::domain("n", "Kendall's tau needs two equal-length samples of size >= 2"));
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let s = tau_numerator(x, y);
    let tau = s as f64 / pairs;
    if n <= 9 {
        let mut idx: Vec<usize> = (0..n).collect();
        let (mut below, mut total) = (0u64, 0u64);
        permute(&mut idx, 0, &mut |perm| {
            let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
            total += 1;
            if tau_numerator(x, &yp) <= s {
                below += 1;
            }
        });
        return Ok(KendallTest {
            tau,
            p_lower: below as f64 / total as f64,
            exact: true,
        });
    }
    let nf = n as f64;
    let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let z = (s as f64 + 1.0) / var.sqrt();
    Ok(KendallTest {
        tau,
        p_lower: Normal::standard().cdf(z),
        exact: false,
    })
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}
