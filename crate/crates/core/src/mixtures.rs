//! Sparse Gaussian location mixtures `(1−ε)·N(0,1) + ε·N(μ,1)` against the
//! standard normal null.
//!
//! Calibrations, with `ε_n = n^{−β}` exactly:
//!
//! * dense exponent: `μ_n = √(2r·log n)`;
//! * sparse regime: `π_n = √n·ε_n < 1` and `μ_n = √(2s·log(1/π_n))`.

use serde::Serialize;

use crate::error::{domain, invalid, Result};
use crate::gof::power_vs_fixed_alt;
use crate::model::CdfModel;
use crate::quantiles::QuantileTable;
use crate::sampling::{replicate, RateEstimate};
use crate::special::{penalty_c_pair, std_normal_cdf, std_normal_quantile, std_normal_sf};
use crate::statistics::PenaltySpec;
use rand_distr::StandardNormal;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparseMixtureParams {
    pub n: usize,
    pub beta: Option<f64>,
    pub r: Option<f64>,
    pub s_exp: Option<f64>,
    pub eps: f64,
    pub mu: f64,
    /// `√n·ε`.
    pub pi_n: f64,
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(invalid("sample size n must be >= 1"))
    } else {
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.5..1.0).contains(&beta) {
        return Err(invalid(format!("beta must lie in [1/2, 1), got {beta}")));
    }
    Ok(())
}

impl SparseMixtureParams {
    /// `ε = n^{−β}`, `μ = √(2r·log n)`.
    pub fn dense(n: usize, beta: f64, r: f64) -> Result<Self> {
        check_n(n)?;
        check_beta(beta)?;
        if !(r > 0.0 && r < 1.0) {
            return Err(invalid(format!("r must lie in (0,1), got {r}")));
        }
        let nf = n as f64;
        let eps = nf.powf(-beta);
        Ok(Self {
            n,
            beta: Some(beta),
            r: Some(r),
            s_exp: None,
            eps,
            mu: (2.0 * r * nf.ln()).sqrt(),
            pi_n: nf.sqrt() * eps,
        })
    }

    /// `μ = √(2s·log(1/π_n))` for a given `ε` with `π_n = √n·ε < 1`.
    pub fn sparse_eps(n: usize, eps: f64, s_exp: f64) -> Result<Self> {
        check_n(n)?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid(format!("eps must lie in (0,1), got {eps}")));
        }
        if !(s_exp > 0.0 && s_exp.is_finite()) {
            return Err(invalid(format!("s must be positive, got {s_exp}")));
        }
        let pi_n = (n as f64).sqrt() * eps;
        if pi_n >= 1.0 {
            return Err(invalid(format!(
                "sparse calibration needs sqrt(n)*eps < 1, got {pi_n}"
            )));
        }
        Ok(Self {
            n,
            beta: None,
            r: None,
            s_exp: Some(s_exp),
            eps,
            mu: (2.0 * s_exp * (1.0 / pi_n).ln()).sqrt(),
            pi_n,
        })
    }

    /// Sparse calibration with `ε = n^{−β}`.
    pub fn sparse(n: usize, beta: f64, s_exp: f64) -> Result<Self> {
        check_beta(beta)?;
        let mut p = Self::sparse_eps(n, (n as f64).powf(-beta), s_exp)?;
        p.beta = Some(beta);
        Ok(p)
    }

    pub fn explicit(n: usize, eps: f64, mu: f64) -> Result<Self> {
        check_n(n)?;
        CdfModel::mixture(eps, mu)?;
        Ok(Self {
            n,
            beta: None,
            r: None,
            s_exp: None,
            eps,
            mu,
            pi_n: (n as f64).sqrt() * eps,
        })
    }

    pub fn model(&self) -> CdfModel {
        CdfModel::GaussMixture {
            eps: self.eps,
            mu: self.mu,
        }
    }
}

/// `r*(β) = β − 1/2` on `(1/2, 3/4]` and `(1 − √(1−β))²` on `[3/4, 1)`.
pub fn detection_boundary(beta: f64) -> Result<f64> {
    if !(beta > 0.5 && beta < 1.0) {
        return Err(domain(format!("detection boundary needs beta in (1/2, 1), got {beta}")));
    }
    Ok(if beta <= 0.75 {
        beta - 0.5
    } else {
        let d = 1.0 - (1.0 - beta).sqrt();
        d * d
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaResult {
    pub delta: f64,
    pub argmax_x: f64,
}

pub const DELTA_GRID_POINTS: usize = 4096;

/// `√n·|F − F_o| / (√(Γ(F_o)·F_o·(1−F_o)) + Γ(F_o)/√n)` at one point, from
/// `(F, 1−F)` and `(F_o, 1−F_o)`.
fn delta_ratio(n: f64, f: (f64, f64), fo: (f64, f64)) -> Result<f64> {
    let (p, pc) = f;
    let (q, qc) = fo;
    if ![p, pc, q, qc].iter().all(|v| v.is_finite()) {
        return Err(domain("distribution function returned a non-finite value"));
    }
    // take the difference on the side where neither value is close to one
    let diff = if q <= 0.5 { (p - q).abs() } else { (pc - qc).abs() };
    if diff == 0.0 || q <= 0.0 || qc <= 0.0 {
        return Ok(0.0);
    }
    let gamma = penalty_c_pair(q, qc) + 1.0;
    let rn = n.sqrt();
    let den = (gamma * q * qc).sqrt() + gamma / rn;
    // log form guards against underflow of the tiny tail products
    let log_ratio = rn.ln() + diff.ln() - den.ln();
    Ok(log_ratio.exp())
}

/// `Δ_n` for distribution functions given as `x ↦ (F(x), 1 − F(x))` over
/// `[lo, hi]`: grid search followed by golden-section refinement.
pub fn delta_n_fn(
    n: usize,
    f: impl Fn(f64) -> Result<(f64, f64)>,
    fo: impl Fn(f64) -> Result<(f64, f64)>,
    lo: f64,
    hi: f64,
    grid_points: usize,
) -> Result<DeltaResult> {
    check_n(n)?;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) || grid_points < 3 {
        return Err(invalid("delta search needs a finite range lo < hi and >= 3 grid points"));
    }
    let nf = n as f64;
    let eval = |x: f64| -> Result<f64> { delta_ratio(nf, f(x)?, fo(x)?) };
    let step = (hi - lo) / (grid_points - 1) as f64;
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..grid_points {
        let v = eval(lo + k as f64 * step)?;
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let mut best_x = lo + best_k as f64 * step;
    let mut a = lo + best_k.saturating_sub(1) as f64 * step;
    let mut b = lo + (best_k + 1).min(grid_points - 1) as f64 * step;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    for _ in 0..200 {
        if (b - a).abs() <= 1e-12 * (1.0 + best_x.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d)?;
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best {
            best = v;
            best_x = x;
        }
    }
    Ok(DeltaResult {
        delta: best.max(0.0),
        argmax_x: best_x,
    })
}

fn model_pair(m: &CdfModel) -> impl Fn(f64) -> Result<(f64, f64)> + '_ {
    move |x| Ok((m.cdf(x)?, m.sf(x)?))
}

/// `Δ_n(F, F_o)` with the search range
/// `[F_o^{-1}(1e−12), max(F_o^{-1}(1 − 1e−12), μ + 10)]`, where `μ` is the
/// mixture shift of `F` (zero for other models).
pub fn delta_n_models(n: usize, f: &CdfModel, fo: &CdfModel, grid_points: usize) -> Result<DeltaResult> {
    let mut lo = fo.quantile(1e-12)?;
    let mut hi = fo.quantile(1.0 - 1e-12)?;
    if let CdfModel::GaussMixture { mu, .. } = f {
        if *mu >= 0.0 {
            hi = hi.max(mu + 10.0);
        } else {
            lo = lo.min(mu - 10.0);
        }
    }
    delta_n_fn(n, model_pair(f), model_pair(fo), lo, hi, grid_points)
}

/// `Δ_n(F_n, Φ)` for the mixture.
pub fn delta_n(params: &SparseMixtureParams) -> Result<DeltaResult> {
    let (eps, mu) = (params.eps, params.mu);
    let lo = std_normal_quantile(1e-12)?;
    let hi = std_normal_quantile(1.0 - 1e-12)?.max(mu + 10.0);
    let f = |x: f64| {
        Ok((
            (1.0 - eps) * std_normal_cdf(x) + eps * std_normal_cdf(x - mu),
            (1.0 - eps) * std_normal_sf(x) + eps * std_normal_sf(x - mu),
        ))
    };
    let fo = |x: f64| Ok((std_normal_cdf(x), std_normal_sf(x)));
    delta_n_fn(params.n, f, fo, lo, hi, DELTA_GRID_POINTS)
}

/// Rejection frequency of the standard normal null for mixture samples.
pub fn power_sim(
    params: &SparseMixtureParams,
    spec: PenaltySpec,
    alpha: f64,
    table: &QuantileTable,
    reps: usize,
    seed: u64,
) -> Result<RateEstimate> {
    power_vs_fixed_alt(
        &CdfModel::StdNormal,
        &params.model(),
        params.n,
        spec,
        alpha,
        table,
        reps,
        seed,
    )
}

/// Null behaviour of the log-likelihood ratio `Σ log(1 + V_n(X_i))` with
/// `V_n(x) = ε(exp(μx − μ²/2) − 1)` and `X_i ~ N(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LlrSummary {
    pub mean: f64,
    pub variance: f64,
    /// Fraction of replicates with `|LLR| > 0.1`.
    pub frac_large: f64,
    /// `π_n^{2(1−s)} − π_n²`, when a sparse exponent is set.
    pub second_moment_bound: Option<f64>,
    /// Empirical variance of `Σ V_n(X_i)` and its standard error.
    pub sum_v_variance: f64,
    pub sum_v_variance_se: f64,
    /// `π_n²(e^{μ²} − 1)`.
    pub sum_v_variance_theory: f64,
    /// False when `s ≥ 1`, where concentration is not guaranteed.
    pub concentration_expected: bool,
    pub reps: usize,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let r = v.len() as f64;
    let m = v.iter().sum::<f64>() / r;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (r - 1.0).max(1.0);
    (m, var)
}

pub fn llr_null_sim(params: &SparseMixtureParams, reps: usize, seed: u64) -> Result<LlrSummary> {
    if reps < 2 {
        return Err(invalid("reps must be >= 2"));
    }
    let (n, eps, mu) = (params.n, params.eps, params.mu);
    let half_mu2 = 0.5 * mu * mu;
    let draws = replicate(seed, reps, || (), |_, rng, _| {
        let mut llr = 0.0;
        let mut sum_v = 0.0;
        if eps > 0.0 {
            for _ in 0..n {
                let x: f64 = rng.sample(StandardNormal);
                let v = eps * (mu * x - half_mu2).exp_m1();
                llr += v.ln_1p();
                sum_v += v;
            }
        }
        (llr, sum_v)
    });
    let llr: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let sv: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let (mean, variance) = mean_var(&llr);
    let (sv_mean, sv_var) = mean_var(&sv);
    let r = reps as f64;
    let m4 = sv.iter().map(|x| (x - sv_mean).powi(4)).sum::<f64>() / r;
    let pi = params.pi_n;
    Ok(LlrSummary {
        mean,
        variance,
        frac_large: llr.iter().filter(|x| x.abs() > 0.1).count() as f64 / r,
        second_moment_bound: params
            .s_exp
            .map(|s| pi.powf(2.0 * (1.0 - s)) - pi * pi),
        sum_v_variance: sv_var,
        sum_v_variance_se: ((m4 - sv_var * sv_var) / r).max(0.0).sqrt(),
        sum_v_variance_theory: pi * pi * (mu * mu).exp_m1(),
        concentration_expected: params.s_exp.map_or(true, |s| s < 1.0),
        reps,
    })
}
