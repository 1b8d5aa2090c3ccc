//! Seeded random generation with a reproducible substream contract.
//!
//! Every Monte-Carlo replicate `r` draws from its own generator
//! `RngKey { seed, stream_index: r }`: a ChaCha8 generator seeded with
//! `ChaCha8Rng::seed_from_u64(seed)` and switched to stream `r` with
//! `set_stream`. ChaCha streams are independent by construction, so results
//! never depend on how replicates are scheduled across worker threads.
//! This generator family is fixed; changing it invalidates stored
//! quantile tables.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::CdfModel;
use crate::special::{beta_quantile, BetaParams};

/// Identifies one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngKey {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngKey {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Runs `reps` replicates in parallel, replicate `r` on stream `(seed, r)`.
///
/// `init` builds per-worker scratch space; the returned vector is in
/// replicate order and independent of the worker count.
pub fn replicate<T, S, I, F>(seed: u64, reps: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &mut ChaCha8Rng, usize) -> T + Sync + Send,
{
    (0..reps)
        .into_par_iter()
        .map_init(init, |scratch, r| {
            let mut rng = RngKey::new(seed, r as u64).rng();
            f(scratch, &mut rng, r)
        })
        .collect()
}

/// Order statistics `U_{n:1} ≤ … ≤ U_{n:n}` of a uniform sample on `(0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformOrderStats {
    values: Vec<f64>,
}

impl UniformOrderStats {
    /// Wraps sorted values in `[0,1]`. Statistics additionally reject the
    /// endpoints themselves.
    pub fn from_sorted(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("uniform order statistics need n >= 1"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("uniform order statistics must lie in [0,1]"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("uniform order statistics must be sorted ascending"));
        }
        Ok(Self { values })
    }

    /// Sorts arbitrary values in `[0,1]`.
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(invalid("uniform sample contains NaN"));
        }
        values.sort_by(f64::total_cmp);
        Self::from_sorted(values)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Reflection `U_{n:i} ↦ 1 − U_{n:n+1−i}`.
    pub fn reflect(&self) -> Self {
        Self {
            values: self.values.iter().rev().map(|u| 1.0 - u).collect(),
        }
    }
}

/// Fills `out` with `n` uniform order statistics as normalized partial
/// sums `S_i / S_{n+1}` of standard exponentials. Sorted by construction.
pub fn fill_uniform_order_stats<R: Rng + ?Sized>(rng: &mut R, n: usize, out: &mut Vec<f64>) {
    out.clear();
    out.reserve(n + 1);
    let mut acc = 0.0;
    for _ in 0..n {
        let e: f64 = rng.sample(Exp1);
        acc += e;
        out.push(acc);
    }
    let e: f64 = rng.sample(Exp1);
    let total = acc + e;
    let inv = 1.0 / total;
    for v in out.iter_mut() {
        *v *= inv;
    }
}

pub fn gen_uniform_order_stats(n: usize, key: RngKey) -> Result<UniformOrderStats> {
    if n == 0 {
        return Err(invalid("sample size n must be >= 1"));
    }
    let mut rng = key.rng();
    let mut values = Vec::with_capacity(n + 1);
    fill_uniform_order_stats(&mut rng, n, &mut values);
    Ok(UniformOrderStats { values })
}

/// A sorted data sample `X_{n:1} ≤ … ≤ X_{n:n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    values: Vec<f64>,
    ties_present: bool,
}

impl SortedSample {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("sample must contain at least one value"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sample values must be finite"));
        }
        values.sort_by(f64::total_cmp);
        let ties_present = values.windows(2).any(|w| w[0] == w[1]);
        Ok(Self {
            values,
            ties_present,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ties_present(&self) -> bool {
        self.ties_present
    }

    /// Number of values `≤ x`.
    pub fn count_le(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v <= x)
    }

    /// Number of values `< x`.
    pub fn count_lt(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v < x)
    }
}

/// Right-continuous empirical distribution function at `x`.
pub fn ecdf_at(sample: &SortedSample, x: f64) -> f64 {
    sample.count_le(x) as f64 / sample.n() as f64
}

/// Left limit of the empirical distribution function at `x`.
pub fn ecdf_left_at(sample: &SortedSample, x: f64) -> f64 {
    sample.count_lt(x) as f64 / sample.n() as f64
}

/// Draws one value from a model.
pub fn draw<R: Rng + ?Sized>(model: &CdfModel, rng: &mut R) -> Result<f64> {
    Ok(match model {
        CdfModel::StdNormal => rng.sample(StandardNormal),
        CdfModel::Uniform01 => uniform_open(rng),
        CdfModel::GaussMixture { eps, mu } => {
            let z: f64 = rng.sample(StandardNormal);
            // the coin is always drawn so that eps = 0 keeps the stream layout
            let coin = uniform_open(rng);
            if coin < *eps {
                z + mu
            } else {
                z
            }
        }
        CdfModel::Tabulated(_) => model.quantile(uniform_open(rng))?,
    })
}

/// Uniform draw on the open interval `(0,1)`.
fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

pub(crate) fn fill_sample<R: Rng + ?Sized>(
    model: &CdfModel,
    rng: &mut R,
    n: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    out.clear();
    for _ in 0..n {
        out.push(draw(model, rng)?);
    }
    out.sort_by(f64::total_cmp);
    Ok(())
}

/// Sorted draw of size `n` from `model` on stream `key`.
pub fn gen_sample(n: usize, key: RngKey, model: &CdfModel) -> Result<SortedSample> {
    if n == 0 {
        return Err(invalid("sample size n must be >= 1"));
    }
    let mut rng = key.rng();
    let mut values = Vec::with_capacity(n);
    fill_sample(model, &mut rng, n, &mut values)?;
    SortedSample::from_values(values)
}

/// A Monte-Carlo frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub se: f64,
    pub hits: usize,
    pub reps: usize,
}

impl RateEstimate {
    pub fn from_counts(hits: usize, reps: usize) -> Self {
        let rate = if reps == 0 { f64::NAN } else { hits as f64 / reps as f64 };
        Self {
            rate,
            se: (rate * (1.0 - rate) / reps as f64).sqrt(),
            hits,
            reps,
        }
    }

    pub fn from_flags(flags: &[bool]) -> Self {
        Self::from_counts(flags.iter().filter(|&&f| f).count(), flags.len())
    }

    /// One-sided Clopper–Pearson upper confidence limit for the rate.
    pub fn upper_limit(&self, confidence: f64) -> f64 {
        if self.hits >= self.reps {
            return 1.0;
        }
        let p = BetaParams::new((self.hits + 1) as f64, (self.reps - self.hits) as f64)
            .expect("positive shapes");
        beta_quantile(p, confidence).expect("confidence in (0,1)")
    }

    /// One-sided Clopper–Pearson lower confidence limit for the rate.
    pub fn lower_limit(&self, confidence: f64) -> f64 {
        if self.hits == 0 {
            return 0.0;
        }
        let p = BetaParams::new(self.hits as f64, (self.reps - self.hits + 1) as f64)
            .expect("positive shapes");
        beta_quantile(p, 1.0 - confidence).expect("confidence in (0,1)")
    }
}
