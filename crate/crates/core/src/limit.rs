//! The limit statistic
//! `T_ν = sup_t (𝕌(t)²/(2t(1−t)) − C(t) − ν·D(t))` of a Brownian bridge `𝕌`,
//! approximated on a finite grid, and empirical checks of the
//! sub-exponential tail bound `P(sup_{[ℓ(a), ℓ(a+c)]} X ≥ η) ≤ 2·exp(−e^{−c}η)`.
//!
//! Paths use the representation `𝕌(t) = (1−t)·W(t/(1−t))` with a standard
//! Brownian motion `W`, so the grid law is exact. With `s = t/(1−t)` the
//! standardized square is simply `W(s)²/(2s)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::quantiles::{empirical_quantile, table_from_sorted, QuantileTable};
use crate::sampling::{fill_uniform_order_stats, replicate, RateEstimate, RngKey};
use crate::special::{kl, logistic, penalty_c_pair};
use crate::statistics::{Family, PenaltySpec, StatisticResult};

/// Values of a Brownian bridge on a grid in `(0,1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgePath {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl BridgePath {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if grid.len() != values.len() {
            return Err(invalid("grid and values differ in length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("path values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("grid must not be empty"));
    }
    if !grid.iter().all(|&t| t > 0.0 && t < 1.0) {
        return Err(invalid("grid points must lie in (0,1)"));
    }
    if !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(invalid("grid must be strictly increasing"));
    }
    Ok(())
}

/// Half-width `L = log(4m)` of the logit range.
fn logit_half_width(m: usize) -> f64 {
    (4.0 * m as f64).ln()
}

fn logit_points(m: usize) -> Vec<f64> {
    let l = logit_half_width(m);
    (0..m)
        .map(|k| {
            // symmetric by construction, so t = 1/2 is hit exactly for odd m
            let j = 2 * k as i64 - (m as i64 - 1);
            l * j as f64 / (m - 1) as f64
        })
        .collect()
}

fn check_m(m: usize) -> Result<()> {
    if m < 3 {
        return Err(invalid(format!("grid size m must be >= 3, got {m}")));
    }
    Ok(())
}

/// `m` points equispaced in logit scale over `[−log(4m), log(4m)]`.
pub fn logit_grid(m: usize) -> Result<Vec<f64>> {
    check_m(m)?;
    Ok(logit_points(m).into_iter().map(logistic).collect())
}

/// Grid quantities in the time scale `s = e^x` of `W`.
struct TimeGrid {
    s: Vec<f64>,
    t: Vec<f64>,
    pen: Vec<f64>,
}

impl TimeGrid {
    fn from_logits(x: &[f64], nu: f64) -> Self {
        let mut s = Vec::with_capacity(x.len());
        let mut t = Vec::with_capacity(x.len());
        let mut pen = Vec::with_capacity(x.len());
        for &xi in x {
            let (ti, ci) = (logistic(xi), logistic(-xi));
            let c = penalty_c_pair(ti, ci);
            s.push(xi.exp());
            t.push(ti);
            pen.push(c + nu * (c * c).ln_1p());
        }
        Self { s, t, pen }
    }
}

/// Runs `W` through the times `s` and calls `f(k, W(s_k))`.
#[inline]
fn walk(s: &[f64], rng: &mut ChaCha8Rng, mut f: impl FnMut(usize, f64)) {
    let mut w = 0.0;
    let mut prev = 0.0;
    for (k, &sk) in s.iter().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        w += (sk - prev).sqrt() * z;
        prev = sk;
        f(k, w);
    }
}

pub fn simulate_bridge(m: usize, key: RngKey) -> Result<BridgePath> {
    check_m(m)?;
    let x = logit_points(m);
    let s: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let mut values = vec![0.0; m];
    walk(&s, &mut key.rng(), |k, w| values[k] = w / (1.0 + s[k]));
    BridgePath::new(x.into_iter().map(logistic).collect(), values)
}

/// Bridge values on an arbitrary strictly increasing grid in `(0,1)`.
pub fn simulate_bridge_on(grid: &[f64], key: RngKey) -> Result<BridgePath> {
    check_grid(grid)?;
    let s: Vec<f64> = grid.iter().map(|&t| t / (1.0 - t)).collect();
    let mut values = vec![0.0; grid.len()];
    walk(&s, &mut key.rng(), |k, w| values[k] = w * (1.0 - grid[k]));
    BridgePath::new(grid.to_vec(), values)
}

/// Grid maximum of `𝕌(t)²/(2t(1−t)) − C(t) − ν·D(t)`.
pub fn stat_limit(path: &BridgePath, spec: PenaltySpec) -> StatisticResult {
    let nu = spec.nu();
    let mut best = StatisticResult {
        value: f64::NEG_INFINITY,
        argmax_location: 0.5,
        argmax_index: 0,
        family: Family::Limit,
    };
    for (k, (&t, &u)) in path.grid.iter().zip(&path.values).enumerate() {
        let tc = 1.0 - t;
        let c = penalty_c_pair(t, tc);
        let v = u * u / (2.0 * t * tc) - c - nu * (c * c).ln_1p();
        if v > best.value {
            best.value = v;
            best.argmax_location = t;
            best.argmax_index = k + 1;
        }
    }
    best
}

/// `reps` grid statistics, replicate `r` drawn from stream `(seed, r)`
/// exactly as [`simulate_bridge`] would; in replicate order.
pub fn simulate_limit(spec: PenaltySpec, m: usize, reps: usize, seed: u64) -> Result<Vec<StatisticResult>> {
    check_m(m)?;
    let grid = TimeGrid::from_logits(&logit_points(m), spec.nu());
    Ok(replicate(seed, reps, || (), |_, rng, _| {
        let mut best = (f64::NEG_INFINITY, 0);
        walk(&grid.s, rng, |k, w| {
            let v = w * w / (2.0 * grid.s[k]) - grid.pen[k];
            if v > best.0 {
                best = (v, k);
            }
        });
        StatisticResult {
            value: best.0,
            argmax_location: grid.t[best.1],
            argmax_index: best.1 + 1,
            family: Family::Limit,
        }
    }))
}

fn check_quantile_args(alpha: f64, reps: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if reps < 100 {
        return Err(invalid(format!("reps must be >= 100, got {reps}")));
    }
    Ok(())
}

/// Estimate of `κ_{ν,α}`; the table records the grid size `m` as `n`.
pub fn estimate_limit_quantile(
    spec: PenaltySpec,
    alpha: f64,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<QuantileTable> {
    check_quantile_args(alpha, reps)?;
    let mut v: Vec<f64> = simulate_limit(spec, m, reps, seed)?.into_iter().map(|r| r.value).collect();
    v.sort_by(f64::total_cmp);
    Ok(table_from_sorted(Family::Limit, m, spec.nu(), alpha, seed, &v))
}

/// Quantile estimates on grids of size `m` and `2m` from the same paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSensitivity {
    pub m: usize,
    pub kappa_m: f64,
    pub se_m: f64,
    pub kappa_2m: f64,
    pub se_2m: f64,
    /// `kappa_2m − kappa_m`.
    pub shift: f64,
}

/// Simulates `W` on the union of both logit grids (common random numbers)
/// and reads off the maximum over each grid separately.
pub fn limit_grid_sensitivity(
    spec: PenaltySpec,
    alpha: f64,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<GridSensitivity> {
    check_m(m)?;
    check_quantile_args(alpha, reps)?;
    let mut merged: Vec<(f64, u8)> = logit_points(m)
        .into_iter()
        .map(|x| (x, 1))
        .chain(logit_points(2 * m).into_iter().map(|x| (x, 2)))
        .collect();
    merged.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut union: Vec<(f64, u8)> = Vec::with_capacity(merged.len());
    for (x, flag) in merged {
        match union.last_mut() {
            Some(last) if last.0 == x => last.1 |= flag,
            _ => union.push((x, flag)),
        }
    }
    let xs: Vec<f64> = union.iter().map(|u| u.0).collect();
    let grid = TimeGrid::from_logits(&xs, spec.nu());
    let pairs = replicate(seed, reps, || (), |_, rng, _| {
        let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        walk(&grid.s, rng, |k, w| {
            let v = w * w / (2.0 * grid.s[k]) - grid.pen[k];
            if union[k].1 & 1 != 0 {
                a = a.max(v);
            }
            if union[k].1 & 2 != 0 {
                b = b.max(v);
            }
        });
        (a, b)
    });
    let p = 1.0 - alpha;
    let mut a: Vec<f64> = pairs.iter().map(|q| q.0).collect();
    let mut b: Vec<f64> = pairs.iter().map(|q| q.1).collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (kappa_m, se_m) = empirical_quantile(&a, p);
    let (kappa_2m, se_2m) = empirical_quantile(&b, p);
    Ok(GridSensitivity {
        m,
        kappa_m,
        se_m,
        kappa_2m,
        se_2m,
        shift: kappa_2m - kappa_m,
    })
}

/// Least-squares slope of `log P̂(T > η)` against `η`, over the `η` with at
/// least one exceedance. `None` with fewer than two usable points.
pub fn exceedance_log_slope(samples: &[f64], etas: &[f64]) -> Option<f64> {
    let r = samples.len() as f64;
    let pts: Vec<(f64, f64)> = etas
        .iter()
        .filter_map(|&eta| {
            let k = samples.iter().filter(|&&v| v > eta).count();
            (k > 0).then(|| (eta, (k as f64 / r).ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let np = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / np;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / np;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailProcess {
    /// `𝕌(t)²/(2t(1−t))`
    BridgeSq,
    /// `n·K(Ĝ_n(t), t)`
    EpSup,
    /// `(n+1)·K(t_{nj}, U_{n:j})` on `t_{nj} = j/(n+1)`
    EpOrderstat,
}

/// Constants of the tail bound `M·exp(−L(c)·η)` on the window
/// `[ℓ(a), ℓ(a+c)]`, `ℓ` the logistic function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBoundParams {
    pub m_const: f64,
    pub l_fn_at_c: f64,
    pub a: f64,
    pub c: f64,
    pub eta: f64,
}

impl TailBoundParams {
    /// `M = 2`, `L(c) = e^{−c}`, shared by all three processes.
    pub fn standard(a: f64, c: f64, eta: f64) -> Result<Self> {
        if !a.is_finite() || !(c >= 0.0 && c.is_finite()) || !eta.is_finite() {
            return Err(invalid("tail window needs finite a, c >= 0 and finite eta"));
        }
        Ok(Self {
            m_const: 2.0,
            l_fn_at_c: (-c).exp(),
            a,
            c,
            eta,
        })
    }

    pub fn bound(&self) -> f64 {
        self.m_const * (-self.l_fn_at_c * self.eta).exp()
    }

    pub fn window(&self) -> (f64, f64) {
        (logistic(self.a), logistic(self.a + self.c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailCheckRow {
    pub params: TailBoundParams,
    pub exceedance: RateEstimate,
    /// One-sided 99% Clopper–Pearson upper limit.
    pub upper_99: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Grid size for the bridge supremum over a tail window.
pub const TAIL_WINDOW_POINTS: usize = 4096;

fn window_sup(process: TailProcess, n: usize, a: f64, c: f64, s: &[f64], buf: &mut Vec<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let (lo, hi) = (logistic(a), logistic(a + c));
    match process {
        TailProcess::BridgeSq => {
            let mut best = f64::NEG_INFINITY;
            walk(s, rng, |k, w| best = best.max(w * w / (2.0 * s[k])));
            best
        }
        TailProcess::EpSup => {
            fill_uniform_order_stats(rng, n, buf);
            let nf = n as f64;
            let below = buf.partition_point(|&u| u <= lo);
            let mut best = nf * kl(below as f64 / nf, lo);
            let mut i = below;
            while i < n && buf[i] <= hi {
                // between jumps K(j/n, ·) is convex, so only the jump points
                // and the window ends matter
                best = best.max(nf * kl(i as f64 / nf, buf[i]));
                best = best.max(nf * kl((i + 1) as f64 / nf, buf[i]));
                i += 1;
            }
            best.max(nf * kl(i as f64 / nf, hi))
        }
        TailProcess::EpOrderstat => {
            fill_uniform_order_stats(rng, n, buf);
            let n1 = (n + 1) as f64;
            let mut best = f64::NEG_INFINITY;
            let first = (lo * n1).ceil().max(1.0) as usize;
            for j in first..=n {
                let t = j as f64 / n1;
                if t > hi {
                    break;
                }
                if t >= lo {
                    best = best.max(n1 * kl(t, buf[j - 1]));
                }
            }
            best
        }
    }
}

/// Exceedance frequencies of the window supremum over the `η` values,
/// compared with `2·exp(−e^{−c}η)`. `n` is the sample size for the
/// empirical processes and ignored for the bridge. A window without grid
/// points gives supremum `−∞`.
pub fn tail_check(
    process: TailProcess,
    n: usize,
    a: f64,
    c: f64,
    etas: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<TailCheckRow>> {
    let params: Vec<TailBoundParams> = etas
        .iter()
        .map(|&eta| TailBoundParams::standard(a, c, eta))
        .collect::<Result<_>>()?;
    if reps == 0 {
        return Err(invalid("reps must be >= 1"));
    }
    if process != TailProcess::BridgeSq && n == 0 {
        return Err(invalid("sample size n must be >= 1"));
    }
    let points = if c > 0.0 { TAIL_WINDOW_POINTS } else { 1 };
    let s: Vec<f64> = (0..points)
        .map(|k| (a + c * k as f64 / (points.max(2) - 1) as f64).exp())
        .collect();
    let sups = replicate(seed, reps, Vec::new, |buf, rng, _| window_sup(process, n, a, c, &s, buf, rng));
    Ok(params
        .into_iter()
        .map(|p| {
            let hits = sups.iter().filter(|&&v| v >= p.eta).count();
            let exceedance = RateEstimate::from_counts(hits, reps);
            let upper_99 = exceedance.upper_limit(0.99);
            let bound = p.bound();
            TailCheckRow {
                params: p,
                exceedance,
                upper_99,
                bound,
                holds: upper_99 <= bound,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PenaltySpec {
        PenaltySpec::new(1.1).unwrap()
    }

    #[test]
    fn grid_shape() {
        assert!(logit_grid(2).is_err());
        let g = logit_grid(5).unwrap();
        assert_eq!(g[2], 0.5);
        assert!((g[0] - 1.0 / 21.0).abs() < 1e-15);
        assert!((g[0] + g[4] - 1.0).abs() < 1e-15);
        assert!(simulate_bridge(2, RngKey::new(1, 0)).is_err());
    }

    #[test]
    fn bridge_covariance() {
        let grid = [0.1, 0.25, 0.5, 0.75];
        let reps = 10_000;
        let paths: Vec<BridgePath> =
            (0..reps).map(|r| simulate_bridge_on(&grid, RngKey::new(44, r)).unwrap()).collect();
        let r = reps as f64;
        let col = |k: usize| paths.iter().map(move |p| p.values()[k]);
        for (k, t) in [(0, 0.1), (2, 0.5)] {
            let var = col(k).map(|v| v * v).sum::<f64>() / r;
            let truth = t * (1.0 - t);
            assert!((var - truth).abs() < 4.0 * truth * (2.0 / r).sqrt(), "{var} vs {truth}");
        }
        let cov = col(1).zip(col(3)).map(|(a, b)| a * b).sum::<f64>() / r;
        let se = ((0.1875f64 * 0.1875 + 0.0625 * 0.0625) / r).sqrt();
        assert!((cov - 0.0625).abs() < 4.0 * se, "{cov}");
    }

    #[test]
    fn endpoint_values_are_small() {
        let p = simulate_bridge(1001, RngKey::new(3, 0)).unwrap();
        let (g, v) = (p.grid(), p.values());
        assert!(v[0].abs() < 6.0 * (g[0] * (1.0 - g[0])).sqrt());
        assert!(v[1000].abs() < 6.0 * (g[1000] * (1.0 - g[1000])).sqrt());
    }

    #[test]
    fn zero_path() {
        let grid = logit_grid(7).unwrap();
        let path = BridgePath::new(grid, vec![0.0; 7]).unwrap();
        let r = stat_limit(&path, spec());
        assert_eq!(r.value, 0.0);
        assert_eq!(r.argmax_location, 0.5);
        assert_eq!(r.argmax_index, 4);
    }

    #[test]
    fn five_point_enumeration() {
        let grid = vec![0.1, 0.3, 0.5, 0.7, 0.9];
        let vals = vec![0.2, -0.4, 0.1, 0.5, -0.1];
        let path = BridgePath::new(grid.clone(), vals.clone()).unwrap();
        let nu = 1.1;
        let oracle: Vec<f64> = grid
            .iter()
            .zip(&vals)
            .map(|(&t, &u)| {
                let c = (1.0 - (4.0 * t * (1.0 - t)).ln()).ln();
                u * u / (2.0 * t * (1.0 - t)) - c - nu * (1.0 + c * c).ln()
            })
            .collect();
        let (k, best) = oracle
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
        let r = stat_limit(&path, spec());
        assert!((r.value - best).abs() < 1e-14);
        assert_eq!(r.argmax_index, k + 1);
    }

    #[test]
    fn scaling_is_monotone() {
        let p = simulate_bridge(501, RngKey::new(5, 2)).unwrap();
        let mut prev = stat_limit(&p, spec()).value;
        for lam in [1.5, 2.0, -3.0] {
            let scaled =
                BridgePath::new(p.grid().to_vec(), p.values().iter().map(|v| v * lam).collect()).unwrap();
            let v = stat_limit(&scaled, spec()).value;
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn fast_path_matches_paths() {
        let fast = simulate_limit(spec(), 301, 5, 17).unwrap();
        for (r, f) in fast.iter().enumerate() {
            let slow = stat_limit(&simulate_bridge(301, RngKey::new(17, r as u64)).unwrap(), spec());
            assert!((slow.value - f.value).abs() < 1e-10 * f.value.abs().max(1.0));
            assert_eq!(slow.argmax_index, f.argmax_index);
        }
    }

    #[test]
    fn alpha_near_one_gives_the_minimum() {
        let t = estimate_limit_quantile(spec(), 1.0 - 1e-9, 101, 100, 3).unwrap();
        let min = simulate_limit(spec(), 101, 100, 3)
            .unwrap()
            .iter()
            .map(|r| r.value)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(t.kappa, min);
        assert_eq!(t.family, Family::Limit);
    }

    #[test]
    fn tail_bounds_hold() {
        let etas = [0.0, 2.0, 4.0, 6.0];
        for process in [TailProcess::BridgeSq, TailProcess::EpSup, TailProcess::EpOrderstat] {
            let rows = tail_check(process, 200, 0.0, 1.0, &etas, 2000, 9).unwrap();
            assert_eq!(rows[0].exceedance.rate, 1.0);
            for row in &rows {
                assert!(row.holds, "{process:?} {row:?}");
            }
        }
    }

    #[test]
    fn log_slope() {
        let samples: Vec<f64> = (1..=10_000).map(|k| -((k as f64) / 10_001.0).ln()).collect();
        let slope = exceedance_log_slope(&samples, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((slope + 1.0).abs() < 0.01);
        assert!(exceedance_log_slope(&samples, &[100.0, 200.0]).is_none());
    }
}
