//! Simultaneous confidence bands for a continuous distribution function.
//!
//! A band is a pair of sequences `a_{n0..nn}`, `b_{n0..nn}`: for
//! `X_{n:j} ≤ x < X_{n:j+1}` it asserts `F(x) ∈ [a_{nj}, b_{nj}]`. Four
//! constructions are available:
//!
//! * `New`: `b_{nj}` is the upper root of `K(t_{n,j+1}, ·) = γ_n(t_{n,j+1})`
//!   with `γ_n(t) = (C(t) + ν·D(t) + κ̃)/(n+1)`, and `a_{nj} = 1 − b_{n,n−j}`.
//! * `Bjo`: `b_{nj}` is the upper root of `K(s_{nj}, ·) = κ/n`, lower limits
//!   by the same reflection.
//! * `Ks`: `s_{nj} ± κ/√n`, clipped to `[0,1]`.
//! * `Ui`: beta quantiles, `a_{nj} = B_{nj}^{-1}(κ)` for `j ≥ 1` and
//!   `b_{nj} = B_{n,j+1}^{-1}(1 − κ)` for `j < n`. The upper limit uses the
//!   shifted index because `Beta(0, n+1)` does not exist.
//!
//! Root finding is per index, so monotonicity in `j` is restored by a
//! running maximum over upper limits (lower limits follow by reflection
//! or a running minimum from the right); any correction larger than
//! `1e-9` is reported in `warnings`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::format::sig;
use crate::quantiles::QuantileTable;
use crate::sampling::{replicate, fill_uniform_order_stats, RateEstimate, SortedSample};
use crate::special::{beta_quantile, invert_k_upper_flagged, BetaParams};
use crate::statistics::{Family, PenaltySpec};

const ISOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandMethod {
    New,
    Bjo,
    Ks,
    Ui,
}

impl BandMethod {
    /// The statistic whose quantile calibrates the band.
    pub fn family(self) -> Family {
        match self {
            BandMethod::New => Family::NewOrderstat,
            BandMethod::Bjo => Family::BerkJones,
            BandMethod::Ks => Family::Ks,
            BandMethod::Ui => Family::UnionIntersection,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BandMethod::New => "new",
            BandMethod::Bjo => "bjo",
            BandMethod::Ks => "ks",
            BandMethod::Ui => "ui",
        }
    }
}

impl std::str::FromStr for BandMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "new" => BandMethod::New,
            "bjo" | "bj" => BandMethod::Bjo,
            "ks" => BandMethod::Ks,
            "ui" => BandMethod::Ui,
            _ => return Err(invalid(format!("unknown band method `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceBand {
    pub n: usize,
    pub method: BandMethod,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub kappa_used: f64,
    pub nu: Option<f64>,
    pub alpha: Option<f64>,
    /// Indices whose upper limit is closer to one than `f64` resolves.
    pub saturated: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Divergence budget of the band at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandBudget {
    pub t: f64,
    pub gamma: f64,
}

/// `γ_n(t) = (C(t) + ν·D(t) + κ̃)/(n+1)`.
pub fn budget_new(n: usize, spec: PenaltySpec, kappa: f64, t: f64) -> BandBudget {
    BandBudget {
        t,
        gamma: ((spec.weight(t) + kappa) / (n + 1) as f64).max(0.0),
    }
}

/// `γ = κ/n` at every `s_{nj}`.
pub fn budget_bjo(n: usize, kappa: f64, s: f64) -> BandBudget {
    BandBudget {
        t: s,
        gamma: (kappa / n as f64).max(0.0),
    }
}

fn check_n_kappa(n: usize, kappa: f64) -> Result<()> {
    if n == 0 {
        return Err(invalid("band needs n >= 1"));
    }
    if !(kappa >= 0.0) || kappa.is_nan() {
        return Err(invalid(format!("kappa must be >= 0, got {kappa}")));
    }
    Ok(())
}

/// Running maximum; returns the largest correction applied.
fn isotonize_up(v: &mut [f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 1..v.len() {
        if v[j] < v[j - 1] {
            worst = worst.max(v[j - 1] - v[j]);
            v[j] = v[j - 1];
        }
    }
    worst
}

/// Running minimum from the right; returns the largest correction applied.
fn isotonize_down(v: &mut [f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in (0..v.len().saturating_sub(1)).rev() {
        if v[j] > v[j + 1] {
            worst = worst.max(v[j] - v[j + 1]);
            v[j] = v[j + 1];
        }
    }
    worst
}

fn isotone_warning(which: &str, worst: f64) -> Option<String> {
    (worst > ISOTONE_TOL).then(|| format!("{which} limits corrected for monotonicity by up to {worst:.3e}"))
}

/// Builds a band from upper limits `b_{n0..n−1}` and `a_{nj} = 1 − b_{n,n−j}`.
fn reflected_band(
    n: usize,
    method: BandMethod,
    kappa: f64,
    nu: Option<f64>,
    budget: impl Fn(usize) -> BandBudget,
) -> Result<ConfidenceBand> {
    let mut upper = Vec::with_capacity(n + 1);
    let mut saturated = Vec::new();
    for j in 0..n {
        let b = budget(j);
        let root = invert_k_upper_flagged(b.t, b.gamma)?;
        if root.saturated {
            saturated.push(j);
        }
        upper.push(root.value);
    }
    upper.push(1.0);
    let mut warnings = Vec::new();
    warnings.extend(isotone_warning("upper", isotonize_up(&mut upper)));
    if !saturated.is_empty() {
        warnings.push(format!(
            "{} upper limits clamped just below 1 (budget too large for f64)",
            saturated.len()
        ));
    }
    let mut lower = Vec::with_capacity(n + 1);
    lower.push(0.0);
    lower.extend((1..=n).map(|j| 1.0 - upper[n - j]));
    Ok(ConfidenceBand {
        n,
        method,
        lower,
        upper,
        kappa_used: kappa,
        nu,
        alpha: None,
        saturated,
        warnings,
    })
}

pub fn band_new(n: usize, spec: PenaltySpec, kappa: f64) -> Result<ConfidenceBand> {
    check_n_kappa(n, kappa)?;
    let n1 = (n + 1) as f64;
    reflected_band(n, BandMethod::New, kappa, Some(spec.nu()), |j| {
        budget_new(n, spec, kappa, (j + 1) as f64 / n1)
    })
}

pub fn band_bjo(n: usize, kappa_bj: f64) -> Result<ConfidenceBand> {
    check_n_kappa(n, kappa_bj)?;
    let nf = n as f64;
    reflected_band(n, BandMethod::Bjo, kappa_bj, None, |j| {
        budget_bjo(n, kappa_bj, j as f64 / nf)
    })
}

pub fn band_ks(n: usize, kappa_ks: f64) -> Result<ConfidenceBand> {
    check_n_kappa(n, kappa_ks)?;
    let nf = n as f64;
    let w = kappa_ks / nf.sqrt();
    let s = |j: usize| j as f64 / nf;
    let mut lower: Vec<f64> = (0..=n).map(|j| (s(j) - w).max(0.0)).collect();
    let mut upper: Vec<f64> = (0..=n).map(|j| (s(j) + w).min(1.0)).collect();
    lower[0] = 0.0;
    upper[n] = 1.0;
    Ok(ConfidenceBand {
        n,
        method: BandMethod::Ks,
        lower,
        upper,
        kappa_used: kappa_ks,
        nu: None,
        alpha: None,
        saturated: Vec::new(),
        warnings: Vec::new(),
    })
}

pub fn band_ui(n: usize, kappa_ui: f64) -> Result<ConfidenceBand> {
    if n == 0 {
        return Err(invalid("band needs n >= 1"));
    }
    if !(kappa_ui > 0.0 && kappa_ui < 0.5) {
        return Err(invalid(format!(
            "union-intersection kappa must lie in (0, 1/2), got {kappa_ui}"
        )));
    }
    let mut lower = vec![0.0; n + 1];
    let mut upper = vec![1.0; n + 1];
    for j in 1..=n {
        lower[j] = beta_quantile(BetaParams::order_statistic(n, j)?, kappa_ui)?;
    }
    for j in 0..n {
        upper[j] = beta_quantile(BetaParams::order_statistic(n, j + 1)?, 1.0 - kappa_ui)?;
    }
    let mut warnings = Vec::new();
    warnings.extend(isotone_warning("lower", isotonize_down(&mut lower)));
    warnings.extend(isotone_warning("upper", isotonize_up(&mut upper)));
    Ok(ConfidenceBand {
        n,
        method: BandMethod::Ui,
        lower,
        upper,
        kappa_used: kappa_ui,
        nu: None,
        alpha: None,
        saturated: Vec::new(),
        warnings,
    })
}

/// Builds the band calibrated by `table`, which must come from the
/// statistic matching `method`.
pub fn band_from_table(
    method: BandMethod,
    spec: PenaltySpec,
    table: &QuantileTable,
) -> Result<ConfidenceBand> {
    table.check_matches(method.family(), table.n, spec.nu(), table.alpha)?;
    let band = match method {
        BandMethod::New => band_new(table.n, spec, table.kappa)?,
        BandMethod::Bjo => band_bjo(table.n, table.kappa)?,
        BandMethod::Ks => band_ks(table.n, table.kappa)?,
        BandMethod::Ui => band_ui(table.n, table.kappa)?,
    };
    Ok(band.with_alpha(table.alpha))
}

impl ConfidenceBand {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn s(&self, j: usize) -> f64 {
        j as f64 / self.n as f64
    }

    /// Whether the band contains the uniform distribution function given
    /// the sorted uniform sample `u`: on `[U_{n:j}, U_{n:j+1})` it needs
    /// `a_{nj} ≤ U_{n:j}` and `U_{n:j+1} ≤ b_{nj}`.
    pub fn covers_uniform(&self, u: &[f64]) -> bool {
        debug_assert_eq!(u.len(), self.n);
        let n = self.n;
        (1..=n).all(|j| self.lower[j] <= u[j - 1]) && (0..n).all(|j| u[j] <= self.upper[j])
    }

    /// CSV with header `j,s_nj,lower,upper,centered_lower,centered_upper`,
    /// numbers with 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,s_nj,lower,upper,centered_lower,centered_upper\n");
        for j in 0..=self.n {
            let s = self.s(j);
            let (a, b) = (self.lower[j], self.upper[j]);
            let _ = writeln!(
                out,
                "{j},{},{},{},{},{}",
                sig(s, 12),
                sig(a, 12),
                sig(b, 12),
                sig(a - s, 12),
                sig(b - s, 12)
            );
        }
        out
    }

    /// CSV of the centered limits only, `j,s_nj,centered_lower,centered_upper`.
    pub fn to_centered_csv(&self) -> String {
        let mut out = String::from("j,s_nj,centered_lower,centered_upper\n");
        for j in 0..=self.n {
            let s = self.s(j);
            let _ = writeln!(
                out,
                "{j},{},{},{}",
                sig(s, 12),
                sig(self.lower[j] - s, 12),
                sig(self.upper[j] - s, 12)
            );
        }
        out
    }
}

/// `(a_{nj}, b_{nj})` for the `j` with `X_{n:j} ≤ x < X_{n:j+1}`.
pub fn band_evaluate(band: &ConfidenceBand, data: &SortedSample, x: f64) -> Result<(f64, f64)> {
    if band.n != data.n() {
        return Err(Error::SizeMismatch {
            band: band.n,
            data: data.n(),
        });
    }
    let j = data.count_le(x);
    Ok((band.lower[j], band.upper[j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandComparison {
    pub n: usize,
    /// `max_{j<n} (b¹_{nj} − s_{nj})/(b²_{nj} − s_{nj})`.
    pub max_upper_ratio: f64,
    /// `max_{j>0} (s_{nj} − a¹_{nj})/(s_{nj} − a²_{nj})`.
    pub max_lower_ratio: f64,
    pub max_excess_first: f64,
    pub max_excess_second: f64,
    pub max_deficit_first: f64,
    pub max_deficit_second: f64,
    /// `√(log log n/(2n))`.
    pub lil_scale: f64,
    /// `n^{-1/2}`.
    pub root_n_scale: f64,
}

const RATIO_GUARD: f64 = 1e-15;

/// Ratios `(b¹_{nj} − s_{nj})/(b²_{nj} − s_{nj})` for `j = 0..n−1`, `None`
/// where the denominator is below `1e-15`.
pub fn upper_excess_ratios(b1: &ConfidenceBand, b2: &ConfidenceBand) -> Result<Vec<Option<f64>>> {
    if b1.n != b2.n {
        return Err(Error::SizeMismatch {
            band: b1.n,
            data: b2.n,
        });
    }
    Ok((0..b1.n)
        .map(|j| {
            let s = b1.s(j);
            let den = b2.upper[j] - s;
            (den >= RATIO_GUARD).then(|| (b1.upper[j] - s) / den)
        })
        .collect())
}

pub fn band_compare(b1: &ConfidenceBand, b2: &ConfidenceBand) -> Result<BandComparison> {
    let up = upper_excess_ratios(b1, b2)?;
    let n = b1.n;
    let nf = n as f64;
    let max_of = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    let lower_ratio = max_of(&mut (1..=n).filter_map(|j| {
        let s = b1.s(j);
        let den = s - b2.lower[j];
        (den >= RATIO_GUARD).then(|| (s - b1.lower[j]) / den)
    }));
    let excess = |b: &ConfidenceBand| max_of(&mut (0..=n).map(|j| b.upper[j] - b.s(j)));
    let deficit = |b: &ConfidenceBand| max_of(&mut (0..=n).map(|j| b.s(j) - b.lower[j]));
    let loglog = if nf.ln() > 1.0 { nf.ln().ln() } else { 0.0 };
    Ok(BandComparison {
        n,
        max_upper_ratio: max_of(&mut up.into_iter().flatten()),
        max_lower_ratio: lower_ratio,
        max_excess_first: excess(b1),
        max_excess_second: excess(b2),
        max_deficit_first: deficit(b1),
        max_deficit_second: deficit(b2),
        lil_scale: (loglog / (2.0 * nf)).sqrt(),
        root_n_scale: nf.powf(-0.5),
    })
}

/// Fraction of simulated uniform samples whose distribution function lies
/// inside the band.
pub fn coverage_sim(band: &ConfidenceBand, reps: usize, seed: u64) -> RateEstimate {
    let n = band.n;
    let flags = replicate(seed, reps, Vec::new, |buf, rng, _| {
        fill_uniform_order_stats(rng, n, buf);
        band.covers_uniform(buf)
    });
    RateEstimate::from_flags(&flags)
}

/// Builds the `method` band from `table` and estimates its coverage.
pub fn band_coverage_sim(
    method: BandMethod,
    n: usize,
    spec: PenaltySpec,
    alpha: f64,
    table: &QuantileTable,
    reps: usize,
    seed: u64,
) -> Result<RateEstimate> {
    table.check_matches(method.family(), n, spec.nu(), alpha)?;
    let band = band_from_table(method, spec, table)?;
    Ok(coverage_sim(&band, reps, seed))
}
