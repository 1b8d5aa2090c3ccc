//! Scalar kernel: the Bernoulli Kullback–Leibler divergence `K(s,t)`, the
//! penalties `C`, `D`, `Γ`, logit/logistic, the auxiliary functions `H`,
//! `H̃` and their inverses, inversion of `K` in its second argument, the
//! standard Gaussian distribution and the regularized incomplete beta
//! function.
//!
//! All functions are pure. Checked entry points return [`Result`]; the
//! unchecked `kl` and `penalty_weight` are the hot-loop variants used by the
//! statistics and assume their arguments are in range.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Largest `f64` strictly below one.
pub const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// `H(x) = x − log(1 + x)` on `(−1, ∞)` without cancellation near zero.
#[inline]
fn h_raw(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // alternating series sum_{k>=2} (-1)^k x^k / k
        let mut acc = 0.0;
        for k in (2..=18).rev() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc = acc * x + sign / k as f64;
        }
        acc * x * x
    } else {
        x - x.ln_1p()
    }
}

/// Bernoulli KL divergence without argument checks.
///
/// Requires `0 ≤ s ≤ 1` and `0 < t < 1`. Evaluated as
/// `s·H((t−s)/s) + (1−s)·H((s−t)/(1−s))`, which keeps full relative
/// precision when `s` and `t` are close.
#[inline]
pub fn kl(s: f64, t: f64) -> f64 {
    if s <= 0.0 {
        return -(-t).ln_1p();
    }
    if s >= 1.0 {
        return -t.ln();
    }
    let d = t - s;
    let (sc, tc) = (1.0 - s, 1.0 - t);
    let v = s * h_ratio(d / s, t, s) + sc * h_ratio(-d / sc, tc, sc);
    v.max(0.0)
}

/// `H(x)` where `1 + x = num/den`; close to `x = −1` the logarithm is
/// taken of the ratio itself, since `1 + x` has lost its relative precision.
#[inline]
fn h_ratio(x: f64, num: f64, den: f64) -> f64 {
    if x < -0.5 {
        x - (num / den).ln()
    } else {
        h_raw(x)
    }
}

/// `K(s,t) := s log(s/t) + (1−s) log((1−s)/(1−t))` with `0·log 0 := 0`.
pub fn bernoulli_kl(s: f64, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(domain(format!("K(s,t) needs s in [0,1], got s = {s}")));
    }
    check_open_unit("K(s,t) needs t", t)?;
    Ok(kl(s, t))
}

/// `K(s,t)` extended by `+∞` for `s` outside `[0,1]`, as used in the
/// exponential binomial tail bound. `t` must still lie in `(0,1)`.
pub fn bernoulli_kl_extended(s: f64, t: f64) -> Result<f64> {
    check_open_unit("K(s,t) needs t", t)?;
    if s.is_nan() {
        return Err(domain("K(s,t) with s = NaN"));
    }
    if !(0.0..=1.0).contains(&s) {
        return Ok(f64::INFINITY);
    }
    Ok(kl(s, t))
}

/// Quadratic surrogate `K̃(s,t) = (s−t)² / (2t(1−t))`.
pub fn kl_quadratic(s: f64, t: f64) -> f64 {
    let d = s - t;
    d * d / (2.0 * t * (1.0 - t))
}

/// `K(s, 1 − e^λ)`: the divergence with its second argument given through
/// the logarithm of its complement, valid far beyond `f64` resolution near 1.
pub fn kl_log_complement(s: f64, log_comp: f64) -> f64 {
    let sc = 1.0 - s;
    let c = log_comp.exp();
    if c > 0.0 && c >= sc * 1e-3 && c < 1.0 {
        // K(s,t) = K(1−s, 1−t)
        return kl(sc, c);
    }
    // c ≪ 1 − s: no cancellation between the two terms
    let first = if sc > 0.0 { sc * (sc.ln() - log_comp) } else { 0.0 };
    let second = if s > 0.0 { s * (s.ln() - (-c).ln_1p()) } else { 0.0 };
    (first + second).max(0.0)
}

fn check_open_unit(what: &str, t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("{what} in (0,1), got {t}")))
    }
}

/// Values of the penalties at a point `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyValue {
    /// `C(t) = log log(e / (4t(1−t)))`
    pub c_val: f64,
    /// `D(t) = log(1 + C(t)²)`
    pub d_val: f64,
    /// `Γ(t) = C(t) + 1`, infinite at the endpoints
    pub gamma_cap: f64,
}

/// `log(4t(1−t))` accurate both near `t = 1/2` and near the endpoints.
#[inline]
fn log_four_t_one_minus_t(t: f64) -> f64 {
    let d = 2.0 * t - 1.0;
    if d.abs() < 0.5 {
        (-d * d).ln_1p()
    } else {
        (4.0 * t * (1.0 - t)).ln()
    }
}

/// `C(t)` without argument checks.
#[inline]
pub fn penalty_c(t: f64) -> f64 {
    (-log_four_t_one_minus_t(t)).ln_1p()
}

/// `C(t)` from `t` and its complement `1 − t` supplied separately, so that
/// `t` close to one keeps full relative precision in `1 − t`.
#[inline]
pub fn penalty_c_pair(t: f64, t_comp: f64) -> f64 {
    let d = t - t_comp;
    let log4 = if d.abs() < 0.5 {
        (-d * d).ln_1p()
    } else {
        (4.0 * t * t_comp).ln()
    };
    (-log4).ln_1p()
}

/// `C(t) + ν·D(t)` without argument checks.
#[inline]
pub fn penalty_weight(t: f64, nu: f64) -> f64 {
    let c = penalty_c(t);
    c + nu * (c * c).ln_1p()
}

/// Penalties `C`, `D` and `Γ` at `t ∈ (0,1)`.
pub fn penalty(t: f64) -> Result<PenaltyValue> {
    check_open_unit("penalty needs t", t)?;
    let c = penalty_c(t);
    Ok(PenaltyValue {
        c_val: c,
        d_val: (c * c).ln_1p(),
        gamma_cap: c + 1.0,
    })
}

/// Penalties on the closed interval with `C(0) = C(1) = +∞`.
pub fn penalty_extended(t: f64) -> Result<PenaltyValue> {
    if t == 0.0 || t == 1.0 {
        return Ok(PenaltyValue {
            c_val: f64::INFINITY,
            d_val: f64::INFINITY,
            gamma_cap: f64::INFINITY,
        });
    }
    penalty(t)
}

/// `Γ(t) = C(t) + 1` on `[0,1]`, infinite at the endpoints.
#[inline]
pub fn gamma_cap(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        f64::INFINITY
    } else {
        penalty_c(t) + 1.0
    }
}

pub fn logit(t: f64) -> Result<f64> {
    check_open_unit("logit needs t", t)?;
    Ok(t.ln() - (-t).ln_1p())
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the logistic function, `ℓ(x)(1 − ℓ(x))`.
pub fn logistic_deriv(x: f64) -> f64 {
    let a = x.abs();
    let e = (-a).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// `H(x) = x − log(1 + x)` for `x ≥ 0`.
pub fn h_fn(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(domain(format!("H(x) needs x >= 0, got {x}")));
    }
    Ok(h_raw(x))
}

/// `H̃(z) = −log(1 − z) − z` for `z ∈ [0,1)`.
pub fn h_tilde(z: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&z) {
        return Err(domain(format!("H~(z) needs z in [0,1), got {z}")));
    }
    Ok(h_raw(-z))
}

/// Bisection for an increasing `f` on `[lo, hi]` with `f(lo) ≤ target ≤ f(hi)`,
/// run until the bracket cannot be split further in `f64`.
fn bisect_increasing(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2200 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v < target {
            lo = mid;
        } else if v > target {
            hi = mid;
        } else {
            return mid;
        }
    }
    if (f(hi) - target).abs() < (target - f(lo)).abs() {
        hi
    } else {
        lo
    }
}

/// Inverse of `H` on `[0, ∞)`, bracketed by `[√(2y + y²/4) + y/2, √(2y) + y]`.
pub fn h_inv(y: f64) -> Result<f64> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(domain(format!("H^-1(y) needs finite y >= 0, got {y}")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let lo = (2.0 * y + y * y / 4.0).sqrt() + y / 2.0;
    let hi = (2.0 * y).sqrt() + y;
    Ok(bisect_increasing(h_raw, y, lo, hi.max(lo)))
}

/// Inverse of `H̃` on `[0, ∞)`, bracketed by `[1 − e^{−y}, √(1 − e^{−2y})]`.
/// Values that round to one are returned as [`ONE_MINUS_ULP`].
pub fn h_tilde_inv(y: f64) -> Result<f64> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(domain(format!("H~^-1(y) needs finite y >= 0, got {y}")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let lo = (-(-y).exp_m1()).min(ONE_MINUS_ULP);
    let hi = (-(-2.0 * y).exp_m1()).sqrt().min(ONE_MINUS_ULP);
    Ok(bisect_increasing(|z| h_raw(-z), y, lo, hi.max(lo)))
}

/// Root of `K(s, ·) = γ` together with a saturation flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KRoot {
    pub value: f64,
    /// The exact root is not representable and `value` was clamped
    /// (to [`ONE_MINUS_ULP`] for upper roots, to the smallest positive
    /// `f64` or zero for lower roots).
    pub saturated: bool,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("divergence budget must be finite and >= 0, got {gamma}")))
    }
}

/// `log(1 − b)` for the root `b ∈ [s, 1)` of `K(s, b) = γ`.
///
/// Working with the log-complement keeps the root meaningful when `b` is
/// closer to one than `f64` can resolve.
pub fn invert_k_upper_log_complement(s: f64, gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&s) {
        return Err(domain(format!("upper K inversion needs s in [0,1), got {s}")));
    }
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok((-s).ln_1p());
    }
    if s == 0.0 {
        // K(0,b) = −log(1−b)
        return Ok(-gamma);
    }
    if s < 0.5 && kl(s, 0.5) >= gamma {
        let b = bisect_increasing(|u| kl(s, u), gamma, s, 0.5);
        return Ok((-b).ln_1p());
    }
    // K(s, 1 − e^λ) is decreasing in λ; with −s·log(1−c) ≥ 0 and the
    // binary entropy ≤ log 2 the lower end has K ≥ γ + (1 − s).
    let lo = -(gamma + LN_2) / (1.0 - s) - 1.0;
    let hi = (-s.max(0.5)).ln_1p();
    let neg = bisect_increasing(|m| kl_log_complement(s, -m), gamma, -hi, -lo);
    Ok(-neg)
}

/// Upper root `b ∈ [s,1)` of `K(s,b) = γ`, flagged when it rounds to one.
///
/// At `s = 1` the endpoint convention `b = 1` applies, flagged when `γ > 0`.
pub fn invert_k_upper_flagged(s: f64, gamma: f64) -> Result<KRoot> {
    if s == 1.0 {
        check_gamma(gamma)?;
        return Ok(KRoot {
            value: 1.0,
            saturated: gamma > 0.0,
        });
    }
    let lc = invert_k_upper_log_complement(s, gamma)?;
    let b = -lc.exp_m1();
    if b >= 1.0 {
        Ok(KRoot {
            value: ONE_MINUS_ULP,
            saturated: true,
        })
    } else {
        Ok(KRoot {
            value: b.max(s),
            saturated: false,
        })
    }
}

/// Upper root `b ∈ [s,1)` of `K(s,b) = γ`; `b = s` when `γ = 0` and
/// `b = 1 − e^{−γ}` when `s = 0`. Roots closer to one than `f64` resolves
/// are clamped to [`ONE_MINUS_ULP`]; use [`invert_k_upper_flagged`] to
/// detect that.
pub fn invert_k_upper(s: f64, gamma: f64) -> Result<f64> {
    if s == 1.0 && gamma > 0.0 {
        return Err(domain(
            "upper K inversion at s = 1 with positive budget has no root below 1",
        ));
    }
    Ok(invert_k_upper_flagged(s, gamma)?.value)
}

/// Lower root `a ∈ (0,s]` of `K(s,a) = γ`, computed as `1 − b(1−s, γ)`.
pub fn invert_k_lower_flagged(s: f64, gamma: f64) -> Result<KRoot> {
    if !(s > 0.0 && s <= 1.0) {
        if s == 0.0 {
            check_gamma(gamma)?;
            return Ok(KRoot {
                value: 0.0,
                saturated: gamma > 0.0,
            });
        }
        return Err(domain(format!("lower K inversion needs s in (0,1], got {s}")));
    }
    let lc = invert_k_upper_log_complement(1.0 - s, gamma)?;
    let a = lc.exp();
    Ok(KRoot {
        value: a.min(s),
        saturated: a == 0.0,
    })
}

pub fn invert_k_lower(s: f64, gamma: f64) -> Result<f64> {
    if s == 0.0 && gamma > 0.0 {
        return Err(domain(
            "lower K inversion at s = 0 with positive budget has no root above 0",
        ));
    }
    Ok(invert_k_lower_flagged(s, gamma)?.value)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// `Φ(x)` from the complementary error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 − Φ(x)` without cancellation.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

const ACKLAM_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const ACKLAM_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const ACKLAM_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const ACKLAM_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

/// Lower-half quantile for `p ∈ (0, 1/2]`: Acklam's rational start refined
/// by Halley steps against the `erfc`-based distribution function.
fn normal_quantile_lower(p: f64) -> f64 {
    let mut z = if p > 0.02425 {
        let q = p - 0.5;
        let r = q * q;
        let a = &ACKLAM_A;
        let b = &ACKLAM_B;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    } else {
        let q = (-2.0 * p.ln()).sqrt();
        let c = &ACKLAM_C;
        let d = &ACKLAM_D;
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    };
    for _ in 0..3 {
        let pdf = std_normal_pdf(z);
        if !(pdf > 0.0) {
            break;
        }
        let u = (std_normal_cdf(z) - p) / pdf;
        if u == 0.0 {
            break;
        }
        z -= u / (1.0 + 0.5 * z * u);
    }
    z
}

/// `Φ^{−1}(p)` for `p ∈ (0,1)`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    check_open_unit("normal quantile needs p", p)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    Ok(if p < 0.5 {
        normal_quantile_lower(p)
    } else {
        -normal_quantile_lower(1.0 - p)
    })
}

/// Shapes of a beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub shape_a: f64,
    pub shape_b: f64,
}

impl BetaParams {
    pub fn new(shape_a: f64, shape_b: f64) -> Result<Self> {
        if !(shape_a > 0.0 && shape_a.is_finite() && shape_b > 0.0 && shape_b.is_finite()) {
            return Err(invalid(format!(
                "beta shapes must be positive and finite, got ({shape_a}, {shape_b})"
            )));
        }
        Ok(Self { shape_a, shape_b })
    }

    /// Law of the `i`-th of `n` uniform order statistics, `Beta(i, n+1−i)`.
    pub fn order_statistic(n: usize, i: usize) -> Result<Self> {
        if i == 0 || i > n {
            return Err(invalid(format!("order statistic index {i} outside 1..={n}")));
        }
        Self::new(i as f64, (n + 1 - i) as f64)
    }

    pub(crate) fn ln_beta(&self) -> f64 {
        libm::lgamma(self.shape_a) + libm::lgamma(self.shape_b)
            - libm::lgamma(self.shape_a + self.shape_b)
    }
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    let max_iter = 200 + 20 * (a.max(b).sqrt() as usize);
    for m in 1..=max_iter {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lower and upper tail `(I_u(a,b), 1 − I_u(a,b))`, each computed on the
/// side where it does not suffer cancellation.
pub fn reg_inc_beta_pair(params: BetaParams, u: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&u) {
        return Err(domain(format!("incomplete beta needs u in [0,1], got {u}")));
    }
    if u == 0.0 {
        return Ok((0.0, 1.0));
    }
    if u == 1.0 {
        return Ok((1.0, 0.0));
    }
    Ok(reg_inc_beta_pair_ln(params, params.ln_beta(), u))
}

/// `reg_inc_beta_pair` for `u ∈ (0,1)` with a precomputed `ln B(a,b)`.
pub(crate) fn reg_inc_beta_pair_ln(params: BetaParams, ln_beta: f64, u: f64) -> (f64, f64) {
    let (a, b) = (params.shape_a, params.shape_b);
    let log_front = a * u.ln() + b * (-u).ln_1p() - ln_beta;
    let front = log_front.exp();
    if u < (a + 1.0) / (a + b + 2.0) {
        let lower = (front * beta_cf(a, b, u) / a).clamp(0.0, 1.0);
        (lower, 1.0 - lower)
    } else {
        let upper = (front * beta_cf(b, a, 1.0 - u) / b).clamp(0.0, 1.0);
        (1.0 - upper, upper)
    }
}

/// Regularized incomplete beta function `I_u(a,b)`, the `Beta(a,b)` CDF.
pub fn reg_inc_beta(params: BetaParams, u: f64) -> Result<f64> {
    Ok(reg_inc_beta_pair(params, u)?.0)
}

/// Quantile of `Beta(a,b)` by bisection on the distribution function.
pub fn beta_quantile(params: BetaParams, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("beta quantile needs p in [0,1], got {p}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let x = if p <= 0.5 {
        bisect_increasing(
            |x| reg_inc_beta_pair(params, x).map(|v| v.0).unwrap_or(f64::NAN),
            p,
            0.0,
            1.0,
        )
    } else {
        // compare upper tails so that p close to one keeps its precision
        let q = 1.0 - p;
        bisect_increasing(
            |x| -reg_inc_beta_pair(params, x).map(|v| v.1).unwrap_or(f64::NAN),
            -q,
            0.0,
            1.0,
        )
    };
    Ok(x)
}
