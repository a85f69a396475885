//! Closed-form analytics of fractional Brownian motion.
//!
//! Covariance, even increment moments and the correlation of two disjoint
//! increments, the latter both in raw endpoint coordinates and in the
//! scale-free `(beta, gamma)` coordinates where `u - t = beta (t - s)` and
//! `v - u = gamma (t - s)`.
//!
//! The correlation numerators are second-order finite differences of
//! `x -> x^{2H}` and lose every significant digit to cancellation when the
//! gap dwarfs the interval lengths (or vice versa). [`second_difference`]
//! evaluates them through `expm1`/`ln_1p` forms and a short Gauss-Legendre
//! rule so that the result carries a small *absolute* error relative to the
//! correlation scale over the whole `(beta, gamma)` quadrant.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hurst exponent, validated to lie in the open interval `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 && h < 1.0 {
            Ok(HurstParam(h))
        } else {
            Err(Error::domain(
                "hurst",
                format!("value {h} outside the open interval (0, 1)"),
            ))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn two_h(self) -> f64 {
        2.0 * self.0
    }

    /// `H = 1/2`: standard Brownian motion, independent increments.
    #[inline]
    pub fn is_brownian(self) -> bool {
        self.0 == 0.5
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;

    fn try_from(h: f64) -> Result<Self> {
        HurstParam::new(h)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

impl std::fmt::Display for HurstParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Four increment endpoints with `0 <= s < t <= u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementQuad {
    s: f64,
    t: f64,
    u: f64,
    v: f64,
}

impl IncrementQuad {
    pub fn new(s: f64, t: f64, u: f64, v: f64) -> Result<Self> {
        if !(s.is_finite() && t.is_finite() && u.is_finite() && v.is_finite()) {
            return Err(Error::domain("quad", "endpoints must be finite"));
        }
        if s < 0.0 {
            return Err(Error::domain("quad", format!("s = {s} is negative")));
        }
        if t <= s {
            return Err(Error::domain(
                "quad",
                format!("degenerate first interval: t = {t} <= s = {s}"),
            ));
        }
        if u < t {
            return Err(Error::domain(
                "quad",
                format!("increments overlap: u = {u} < t = {t}"),
            ));
        }
        if v <= u {
            return Err(Error::domain(
                "quad",
                format!("degenerate second interval: v = {v} <= u = {u}"),
            ));
        }
        Ok(IncrementQuad { s, t, u, v })
    }

    /// Like [`IncrementQuad::new`] but also requires `v <= horizon`.
    pub fn within(s: f64, t: f64, u: f64, v: f64, horizon: f64) -> Result<Self> {
        let q = Self::new(s, t, u, v)?;
        if v > horizon {
            return Err(Error::domain(
                "quad",
                format!("v = {v} exceeds the horizon {horizon}"),
            ));
        }
        Ok(q)
    }

    pub fn endpoints(&self) -> (f64, f64, f64, f64) {
        (self.s, self.t, self.u, self.v)
    }

    /// The scale-free coordinates of this quad.
    pub fn beta_gamma(&self) -> BetaGamma {
        let len = self.t - self.s;
        BetaGamma {
            beta: (self.u - self.t) / len,
            gamma: (self.v - self.u) / len,
        }
    }
}

/// Gap ratio `beta >= 0` and length ratio `gamma > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaGamma {
    pub beta: f64,
    pub gamma: f64,
}

impl BetaGamma {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::domain("beta", format!("{beta} must be finite and >= 0")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::domain("gamma", format!("{gamma} must be finite and > 0")));
        }
        Ok(BetaGamma { beta, gamma })
    }
}

/// `x^p` for `x >= 0`, with `0^p = 0` and an exact branch for `p = 1`.
#[inline]
pub(crate) fn pow_nonneg(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if p == 1.0 {
        x
    } else {
        (p * x.ln()).exp()
    }
}

fn check_time(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(name, format!("time {x} must be finite and >= 0")))
    }
}

/// `R_H(s, t) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2`.
pub fn covariance(h: HurstParam, s: f64, t: f64) -> Result<f64> {
    check_time("s", s)?;
    check_time("t", t)?;
    Ok(covariance_unchecked(h, s, t))
}

#[inline]
pub(crate) fn covariance_unchecked(h: HurstParam, s: f64, t: f64) -> f64 {
    let p = h.two_h();
    0.5 * (pow_nonneg(t, p) + pow_nonneg(s, p) - pow_nonneg((t - s).abs(), p))
}

/// `(2m - 1)!!`, the `2m`-th moment of a standard normal variable.
pub fn gaussian_even_moment(m: u32) -> f64 {
    if m <= 10 {
        // exact in f64: 19!! = 654_729_075
        (1..=m).map(|k| (2 * k - 1) as f64).product()
    } else {
        use statrs::function::gamma::ln_gamma;
        let m = m as f64;
        (ln_gamma(2.0 * m + 1.0) - m * std::f64::consts::LN_2 - ln_gamma(m + 1.0)).exp()
    }
}

/// `E (B_t - B_s)^{2m} = (2m)! / (2^m m!) |t - s|^{2Hm}`.
pub fn increment_moment(h: HurstParam, m: u32, s: f64, t: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::domain("m", "moment order must be >= 1"));
    }
    check_time("s", s)?;
    check_time("t", t)?;
    Ok(gaussian_even_moment(m) * pow_nonneg((t - s).abs(), h.two_h() * m as f64))
}

/// `g(x + d) - g(x)` for `g(x) = x^p`, `x >= 0`, `d > 0`, to full relative precision.
#[inline]
fn power_gap(p: f64, x: f64, d: f64) -> f64 {
    if x == 0.0 {
        pow_nonneg(d, p)
    } else {
        -pow_nonneg(x + d, p) * (-p * (d / x).ln_1p()).exp_m1()
    }
}

/// `d/dz [g(z + b) - g(z)]` for `g(x) = x^p`, `z > 0`.
#[inline]
fn power_gap_slope(p: f64, z: f64, b: f64) -> f64 {
    p * pow_nonneg(z, p - 1.0) * ((p - 1.0) * (b / z).ln_1p()).exp_m1()
}

const GL_ORDER: usize = 16;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

/// Second difference `Δ_a Δ_b g(x0) = g(x0+a+b) - g(x0+a) - g(x0+b) + g(x0)` of
/// `g(x) = x^{2H}`, with `x0 >= 0` and `a, b > 0`.
///
/// When the gap `x0` is at least twice the shorter length the difference is
/// the integral of a smooth, sign-definite slope and a fixed Gauss-Legendre
/// rule is exact to rounding; otherwise it is the difference of two
/// first differences whose magnitudes are well separated.
pub fn second_difference(h: HurstParam, x0: f64, a: f64, b: f64) -> f64 {
    let p = h.two_h();
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if x0 >= 2.0 * a {
        let half = 0.5 * a;
        let mid = x0 + half;
        let sum: f64 = gauss_legendre()
            .iter()
            .map(|&(node, weight)| weight * power_gap_slope(p, mid + half * node, b))
            .sum();
        half * sum
    } else {
        power_gap(p, x0 + b, a) - power_gap(p, x0, a)
    }
}

/// `Corr(B_t - B_s, B_v - B_u)` for `0 <= s < t <= u < v`.
pub fn disjoint_increment_correlation(h: HurstParam, q: &IncrementQuad) -> f64 {
    if h.is_brownian() {
        return 0.0;
    }
    let (s, t, u, v) = q.endpoints();
    let first = t - s;
    let second = v - u;
    let numer = second_difference(h, u - t, first, second);
    0.5 * numer / (pow_nonneg(first, h.value()) * pow_nonneg(second, h.value()))
}

/// The same correlation in `(beta, gamma)` coordinates:
/// `[beta^{2H} - (1+beta)^{2H} - (beta+gamma)^{2H} + (1+beta+gamma)^{2H}] / (2 gamma^H)`.
pub fn correlation_beta_gamma(h: HurstParam, bg: BetaGamma) -> f64 {
    if h.is_brownian() {
        return 0.0;
    }
    0.5 * second_difference(h, bg.beta, 1.0, bg.gamma) / pow_nonneg(bg.gamma, h.value())
}

/// Correlation of the consecutive increments `B_t - B_s` and `B_w - B_t`
/// with `w - t = gamma (t - s)`.
pub fn consecutive_correlation(h: HurstParam, gamma: f64) -> Result<f64> {
    Ok(correlation_beta_gamma(h, BetaGamma::new(0.0, gamma)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    /// Direct four-term evaluation; trustworthy only away from cancellation.
    fn naive_bg(h: f64, beta: f64, gamma: f64) -> f64 {
        let p = 2.0 * h;
        0.5 * (beta.powf(p) - (1.0 + beta).powf(p) - (beta + gamma).powf(p)
            + (1.0 + beta + gamma).powf(p))
            / gamma.powf(h)
    }

    /// `2H(2H-1) ∫_0^1 ∫_0^gamma (beta+x+y)^{2H-2} dy dx` by nested composite
    /// Simpson on a log-stretched grid; used where the naive form is useless.
    fn integral_bg(h: f64, beta: f64, gamma: f64) -> f64 {
        let p = 2.0 * h;
        // inner integral in closed form: ∫_0^gamma (c+y)^{p-2} dy
        let inner = |c: f64| {
            if c == 0.0 {
                gamma.powf(p - 1.0) / (p - 1.0)
            } else {
                c.powf(p - 1.0) * ((p - 1.0) * (gamma / c).ln_1p()).exp_m1() / (p - 1.0)
            }
        };
        // x = w^6 grades the mesh toward the weak singularity at x = 0
        let n = 20_000;
        let hstep = 1.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w_ = i as f64 * hstep;
            let x = w_.powi(6);
            let jac = 6.0 * w_.powi(5);
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * jac * inner(beta + x);
        }
        0.5 * p * (p - 1.0) * acc * hstep / 3.0 / gamma.powf(h)
    }

    #[test]
    fn hurst_rejects_boundary_and_outside() {
        for bad in [0.0, 1.0, -0.1, 1.2, f64::NAN, f64::INFINITY] {
            let err = HurstParam::new(bad).unwrap_err();
            assert!(err.to_string().contains("hurst"));
        }
        assert_eq!(hp(0.3).value(), 0.3);
    }

    #[test]
    fn covariance_examples() {
        assert_relative_eq!(covariance(hp(0.3), 2.0, 2.0).unwrap(), 2f64.powf(0.6), max_relative = 1e-15);
        assert_relative_eq!(covariance(hp(0.3), 2.0, 2.0).unwrap(), 1.515716566510398, max_relative = 1e-12);
        // H = 1/2: min(s, t)
        assert_eq!(covariance(hp(0.5), 1.0, 3.0).unwrap(), 1.0);
        assert_eq!(covariance(hp(0.7), 0.0, 5.0).unwrap(), 0.0);
        assert!(covariance(hp(0.7), -1.0, 5.0).is_err());
    }

    #[test]
    fn increment_moment_examples() {
        for h in [0.1, 0.5, 0.9] {
            assert_relative_eq!(increment_moment(hp(h), 1, 0.0, 1.0).unwrap(), 1.0);
        }
        assert_relative_eq!(increment_moment(hp(0.5), 2, 0.0, 1.0).unwrap(), 3.0);
        assert_relative_eq!(increment_moment(hp(0.8), 2, 1.0, 2.0).unwrap(), 3.0);
        assert!(increment_moment(hp(0.8), 0, 1.0, 2.0).is_err());
    }

    #[test]
    fn even_moment_constant_matches_factorial_ratio() {
        // (2m)! / (2^m m!) by exact u128 arithmetic while (2m)! fits
        for m in 1..=16u32 {
            let mut num: u128 = 1;
            for k in 1..=(2 * m as u128) {
                num *= k;
            }
            let mut den: u128 = 1 << m;
            for k in 1..=(m as u128) {
                den *= k;
            }
            let exact = (num / den) as f64;
            assert_relative_eq!(gaussian_even_moment(m), exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn disjoint_correlation_examples() {
        let q = IncrementQuad::new(0.0, 1.0, 1.0, 2.0).unwrap();
        let expected = (2f64.powf(1.5) - 2.0) / 2.0;
        assert_relative_eq!(disjoint_increment_correlation(hp(0.75), &q), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 0.414213562373095, max_relative = 1e-12);

        let far = IncrementQuad::new(0.0, 1.0, 10.0, 11.0).unwrap();
        let r = disjoint_increment_correlation(hp(0.75), &far);
        assert!(r > 0.0 && r < expected, "{r}");
        assert_relative_eq!(r, naive_bg(0.75, 9.0, 1.0), max_relative = 1e-12);

        let q = IncrementQuad::new(0.3, 0.4, 0.9, 1.7).unwrap();
        assert_eq!(disjoint_increment_correlation(hp(0.5), &q), 0.0);
    }

    #[test]
    fn degenerate_quads_rejected() {
        assert!(IncrementQuad::new(1.0, 1.0, 2.0, 3.0).is_err());
        assert!(IncrementQuad::new(0.0, 1.0, 2.0, 2.0).is_err());
        assert!(IncrementQuad::new(0.0, 2.0, 1.0, 3.0).is_err());
        assert!(IncrementQuad::within(0.0, 1.0, 2.0, 3.0, 2.5).is_err());
    }

    #[test]
    fn beta_gamma_examples() {
        let bg = BetaGamma::new(0.0, 1.0).unwrap();
        assert_relative_eq!(correlation_beta_gamma(hp(0.75), bg), 0.414213562373095, max_relative = 1e-12);
        assert_eq!(correlation_beta_gamma(hp(0.5), BetaGamma::new(0.0, 2.0).unwrap()), 0.0);

        let h = hp(0.9);
        let gapped = correlation_beta_gamma(h, BetaGamma::new(3.0, 0.5).unwrap());
        let consecutive = consecutive_correlation(h, 0.5).unwrap();
        assert!(gapped > 0.0 && gapped < consecutive, "{gapped} vs {consecutive}");
        assert!(BetaGamma::new(-1.0, 1.0).is_err());
        assert!(BetaGamma::new(1.0, 0.0).is_err());
    }

    #[test]
    fn consecutive_reduces_to_closed_form() {
        for h in [0.2f64, 0.35, 0.6, 0.75, 0.95] {
            for gamma in [1e-3f64, 0.1, 0.7, 1.0, 3.0, 50.0] {
                let p = 2.0 * h;
                let direct = 0.5 * ((1.0 + gamma).powf(p) - gamma.powf(p) - 1.0) / gamma.powf(h);
                let r = consecutive_correlation(hp(h), gamma).unwrap();
                assert!((r - direct).abs() < 1e-12, "h={h} gamma={gamma}: {r} vs {direct}");
            }
        }
    }

    #[test]
    fn stable_form_matches_naive_where_naive_is_accurate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5_000 {
            let h = rng.gen_range(0.05..0.95);
            let beta = 10f64.powf(rng.gen_range(-2.0..1.0));
            let gamma = 10f64.powf(rng.gen_range(-1.0..1.0));
            let stable = correlation_beta_gamma(hp(h), BetaGamma { beta, gamma });
            let naive = naive_bg(h, beta, gamma);
            assert!((stable - naive).abs() < 1e-11, "h={h} b={beta} g={gamma}: {stable} vs {naive}");
        }
    }

    #[test]
    fn stable_form_matches_quadrature_in_cancellation_regimes() {
        for &h in &[0.51, 0.75, 0.99, 0.3] {
            for &(beta, gamma) in &[
                (1e6, 1e-6),
                (1e6, 1.0),
                (1e5, 1e3),
                (1e-6, 1e6),
                (1e3, 1e-4),
                (0.0, 1e-6),
                (0.0, 1e6),
                (2.5, 1e-5),
            ] {
                let stable = correlation_beta_gamma(hp(h), BetaGamma { beta, gamma });
                let reference = integral_bg(h, beta, gamma);
                assert!(
                    (stable - reference).abs() < 1e-9 * reference.abs().max(1e-3),
                    "h={h} b={beta} g={gamma}: {stable} vs {reference}"
                );
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2_000))]

        #[test]
        fn covariance_symmetric_and_diagonal(h in 0.01f64..0.99, s in 0.0f64..10.0, t in 0.0f64..10.0) {
            let h = hp(h);
            prop_assert_eq!(covariance(h, s, t).unwrap(), covariance(h, t, s).unwrap());
            prop_assert_eq!(covariance(h, t, t).unwrap(), pow_nonneg(t, h.two_h()));
            prop_assert_eq!(covariance(h, 0.0, t).unwrap(), 0.0);
        }

        #[test]
        fn increment_moment_is_double_factorial_times_variance_power(
            h in 0.01f64..0.99, m in 1u32..20, s in 0.0f64..5.0, t in 0.0f64..5.0
        ) {
            let h = hp(h);
            let dfact: f64 = (1..=m).map(|k| (2 * k - 1) as f64).product();
            let expected = dfact * (t - s).abs().powf(h.two_h() * m as f64);
            let got = increment_moment(h, m, s, t).unwrap();
            prop_assert!((got - expected).abs() <= 1e-12 * expected.abs().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn disjoint_correlation_bounded_and_scale_free(
            h in 0.01f64..0.99,
            pts in proptest::collection::vec(0.0f64..1.0, 4)
        ) {
            let mut p = pts.clone();
            p.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assume!(p[1] > p[0] && p[3] > p[2]);
            let q = IncrementQuad::new(p[0], p[1], p[2], p[3]).unwrap();
            let bg = q.beta_gamma();
            prop_assume!(bg.gamma >= 1e-6);
            let hh = hp(h);
            let r = disjoint_increment_correlation(hh, &q);
            prop_assert!(r.abs() <= 1.0 + 1e-12, "{}", r);
            let r2 = correlation_beta_gamma(hh, bg);
            prop_assert!((r - r2).abs() <= 1e-10, "{} vs {}", r, r2);
            if h > 0.5 {
                prop_assert!(r > 0.0);
            }
        }

        #[test]
        fn gapped_correlation_below_consecutive(
            h in 0.5001f64..0.9999, lb in -6.0f64..6.0, lg in -6.0f64..6.0
        ) {
            let (beta, gamma) = (10f64.powf(lb), 10f64.powf(lg));
            let hh = hp(h);
            let gapped = correlation_beta_gamma(hh, BetaGamma { beta, gamma });
            let consecutive = consecutive_correlation(hh, gamma).unwrap();
            prop_assert!(gapped <= consecutive + 1e-12, "{} > {}", gapped, consecutive);
        }
    }
}
