//! Test statistics on samples of `(0,1)`-valued points.
//!
//! With `Ĝ_n` the empirical distribution function of the points and
//! `pen(t) = C(t) + ν·D(t)`:
//!
//! * `NewSup`: `T_{n,ν} = sup_t (n·K(Ĝ_n(t), t) − pen(t))`
//! * `NewOrderstat`: `T̃_{n,ν} = max_j ((n+1)·K(t_{nj}, U_{n:j}) − pen(t_{nj}))`
//! * `BerkJones`: `n · sup_t K(Ĝ_n(t), t)`
//! * `Ks`: `√n · sup_t |Ĝ_n(t) − t|`
//! * `UnionIntersection`: `min_i min{B_{ni}(U_{n:i}), 1 − B_{ni}(U_{n:i})}`
//!
//! The suprema are exact maxima over finitely many candidates: on each
//! constancy interval of `Ĝ_n` the objective is maximal at an endpoint,
//! except for the penalized statistic whose penalty vanishes at `t = 1/2`,
//! which adds one more candidate there. Tied values are grouped so that
//! `Ĝ_n` and its left limit carry the multiplicity.
//!
//! When several candidates attain the maximum, the one with the smallest
//! order-statistic index wins.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{domain, invalid, Error, Result};
use crate::sampling::UniformOrderStats;
use crate::special::{kl, penalty_weight, reg_inc_beta_pair_ln, BetaParams};

/// The exponent `ν > 1` of the `D` penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    nu: f64,
}

impl PenaltySpec {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 1.0 && nu.is_finite()) {
            return Err(invalid(format!("nu must be finite and > 1, got {nu}")));
        }
        Ok(Self { nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `C(t) + ν·D(t)`.
    #[inline]
    pub fn weight(&self, t: f64) -> f64 {
        penalty_weight(t, self.nu)
    }
}

/// Index grid point with `t_nj = j/(n+1)` and `s_nj = j/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub n: usize,
    pub j: usize,
    pub t_nj: f64,
    pub s_nj: f64,
}

impl GridPoint {
    pub fn new(n: usize, j: usize) -> Result<Self> {
        if n == 0 || j > n {
            return Err(invalid(format!("grid point needs n >= 1 and j <= n, got n = {n}, j = {j}")));
        }
        Ok(Self {
            n,
            j,
            t_nj: j as f64 / (n + 1) as f64,
            s_nj: j as f64 / n as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "new-sup")]
    NewSup,
    #[serde(rename = "new-orderstat")]
    NewOrderstat,
    #[serde(rename = "bj")]
    BerkJones,
    #[serde(rename = "ks")]
    Ks,
    #[serde(rename = "ui")]
    UnionIntersection,
    /// The Brownian-bridge limit of the penalized statistics.
    #[serde(rename = "limit")]
    Limit,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::NewSup,
        Family::NewOrderstat,
        Family::BerkJones,
        Family::Ks,
        Family::UnionIntersection,
        Family::Limit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::NewSup => "new-sup",
            Family::NewOrderstat => "new-orderstat",
            Family::BerkJones => "bj",
            Family::Ks => "ks",
            Family::UnionIntersection => "ui",
            Family::Limit => "limit",
        }
    }

    pub fn uses_nu(self) -> bool {
        matches!(self, Family::NewSup | Family::NewOrderstat | Family::Limit)
    }

    /// Large values are evidence against the null, except for the
    /// union–intersection minimum of p-values.
    pub fn rejects_large(self) -> bool {
        self != Family::UnionIntersection
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "new-sup" | "new" => Family::NewSup,
            "new-orderstat" => Family::NewOrderstat,
            "bj" | "berk-jones" => Family::BerkJones,
            "ks" => Family::Ks,
            "ui" | "union-intersection" => Family::UnionIntersection,
            "limit" => Family::Limit,
            _ => return Err(invalid(format!("unknown statistic family `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticResult {
    pub value: f64,
    /// The `t` at which the extremum is attained.
    pub argmax_location: f64,
    /// One-based order-statistic index of the extremum. For `NewSup`, 0
    /// marks the extra candidate at `t = 1/2`.
    pub argmax_index: usize,
    pub family: Family,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Extremum {
    pub value: f64,
    pub location: f64,
    pub index: usize,
}

impl Extremum {
    fn start() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            location: 0.5,
            index: 0,
        }
    }

    #[inline]
    fn offer(&mut self, value: f64, location: f64, index: usize) {
        if value > self.value {
            self.value = value;
            self.location = location;
            self.index = index;
        }
    }

    fn into_result(self, family: Family) -> StatisticResult {
        StatisticResult {
            value: self.value,
            argmax_location: self.location,
            argmax_index: self.index,
            family,
        }
    }
}

/// Calls `f(first, v, below, upto)` for every run of equal values `v`
/// starting at zero-based position `first`, with `below = #{u < v}` and
/// `upto = #{u ≤ v}`.
#[inline]
fn for_each_group(u: &[f64], mut f: impl FnMut(usize, f64, usize, usize)) {
    let n = u.len();
    let mut i = 0;
    while i < n {
        let v = u[i];
        let mut k = i + 1;
        while k < n && u[k] == v {
            k += 1;
        }
        f(i, v, i, k);
        i = k;
    }
}

pub(crate) fn new_sup_raw(u: &[f64], nu: f64) -> Extremum {
    let n = u.len();
    let nf = n as f64;
    let mut best = Extremum::start();
    for_each_group(u, |first, v, below, upto| {
        let pen = penalty_weight(v, nu);
        best.offer(nf * kl(upto as f64 / nf, v) - pen, v, first + 1);
        best.offer(nf * kl(below as f64 / nf, v) - pen, v, first + 1);
    });
    let g_half = u.partition_point(|&v| v <= 0.5) as f64 / nf;
    best.offer(nf * kl(g_half, 0.5), 0.5, 0);
    best
}

pub(crate) fn berk_jones_raw(u: &[f64]) -> Extremum {
    let nf = u.len() as f64;
    let mut best = Extremum::start();
    for_each_group(u, |first, v, below, upto| {
        best.offer(nf * kl(upto as f64 / nf, v), v, first + 1);
        best.offer(nf * kl(below as f64 / nf, v), v, first + 1);
    });
    best
}

pub(crate) fn ks_raw(u: &[f64]) -> Extremum {
    let nf = u.len() as f64;
    let mut best = Extremum::start();
    for_each_group(u, |first, v, below, upto| {
        let d = (upto as f64 / nf - v).abs().max((below as f64 / nf - v).abs());
        best.offer(d, v, first + 1);
    });
    best.value *= nf.sqrt();
    best
}

/// Precomputed per-`n` constants so that Monte-Carlo loops only evaluate
/// the sample-dependent parts.
#[derive(Debug, Clone)]
pub struct StatEvaluator {
    family: Family,
    n: usize,
    nu: f64,
    /// `t_{nj}` and `pen(t_{nj})` for the order-statistic variant.
    grid: Vec<(f64, f64)>,
    /// `Beta(i, n+1−i)` and `ln B(i, n+1−i)` for the union–intersection statistic.
    betas: Vec<(BetaParams, f64)>,
}

impl StatEvaluator {
    pub fn new(family: Family, n: usize, spec: PenaltySpec) -> Result<Self> {
        if n == 0 {
            return Err(invalid("sample size n must be >= 1"));
        }
        let nu = spec.nu();
        let mut grid = Vec::new();
        let mut betas = Vec::new();
        match family {
            Family::Limit => {
                return Err(invalid("the limit family is evaluated on bridge paths, not samples"))
            }
            Family::NewOrderstat => {
                let n1 = (n + 1) as f64;
                grid = (1..=n)
                    .map(|j| {
                        let t = j as f64 / n1;
                        (t, penalty_weight(t, nu))
                    })
                    .collect();
            }
            Family::UnionIntersection => {
                betas = (1..=n)
                    .map(|i| {
                        let p = BetaParams::order_statistic(n, i).expect("valid index");
                        (p, p.ln_beta())
                    })
                    .collect();
            }
            _ => {}
        }
        Ok(Self {
            family,
            n,
            nu,
            grid,
            betas,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Evaluates the statistic on sorted values in `(0,1)` without checks.
    pub fn value(&self, u: &[f64]) -> f64 {
        self.extremum(u).value
    }

    pub(crate) fn extremum(&self, u: &[f64]) -> Extremum {
        debug_assert_eq!(u.len(), self.n);
        match self.family {
            Family::NewSup => new_sup_raw(u, self.nu),
            Family::BerkJones => berk_jones_raw(u),
            Family::Ks => ks_raw(u),
            Family::NewOrderstat => {
                let n1 = (self.n + 1) as f64;
                let mut best = Extremum::start();
                for (j, (&x, &(t, pen))) in u.iter().zip(&self.grid).enumerate() {
                    best.offer(n1 * kl(t, x) - pen, t, j + 1);
                }
                best
            }
            Family::UnionIntersection => {
                let mut best = Extremum {
                    value: f64::INFINITY,
                    location: 0.5,
                    index: 0,
                };
                for (i, (&x, &(p, lb))) in u.iter().zip(&self.betas).enumerate() {
                    let (lo, up) = reg_inc_beta_pair_ln(p, lb, x);
                    let v = lo.min(up);
                    if v < best.value {
                        best = Extremum {
                            value: v,
                            location: x,
                            index: i + 1,
                        };
                    }
                }
                best
            }
            Family::Limit => unreachable!("rejected in the constructor"),
        }
    }

    pub fn evaluate(&self, u: &UniformOrderStats) -> Result<StatisticResult> {
        if u.n() != self.n {
            return Err(invalid(format!(
                "evaluator built for n = {}, sample has n = {}",
                self.n,
                u.n()
            )));
        }
        check_interior(u.values())?;
        Ok(self.extremum(u.values()).into_result(self.family))
    }
}

fn check_interior(u: &[f64]) -> Result<()> {
    if let Some(v) = u.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(domain(format!("sample values must lie strictly inside (0,1), got {v}")));
    }
    Ok(())
}

fn run(family: Family, u: &UniformOrderStats, spec: PenaltySpec) -> Result<StatisticResult> {
    StatEvaluator::new(family, u.n(), spec)?.evaluate(u)
}

/// `nu` is irrelevant for the unpenalized families.
fn unpenalized() -> PenaltySpec {
    PenaltySpec { nu: 2.0 }
}

pub fn stat_new_sup(u: &UniformOrderStats, spec: PenaltySpec) -> Result<StatisticResult> {
    run(Family::NewSup, u, spec)
}

pub fn stat_new_orderstat(u: &UniformOrderStats, spec: PenaltySpec) -> Result<StatisticResult> {
    run(Family::NewOrderstat, u, spec)
}

pub fn stat_berk_jones(u: &UniformOrderStats) -> Result<StatisticResult> {
    run(Family::BerkJones, u, unpenalized())
}

pub fn stat_ks(u: &UniformOrderStats) -> Result<StatisticResult> {
    run(Family::Ks, u, unpenalized())
}

pub fn stat_union_intersection(u: &UniformOrderStats) -> Result<StatisticResult> {
    run(Family::UnionIntersection, u, unpenalized())
}
