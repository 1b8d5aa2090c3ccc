//! One-sample goodness-of-fit test of a fully specified continuous `F_o`.
//!
//! The data are mapped through `F_o` and the penalized supremum statistic
//! is computed on the transformed points, so the candidates are the data
//! points, their left limits and `F_o^{-1}(1/2)`. The Monte-Carlo p-value
//! is `(1 + #{T* ≥ T})/(R + 1)`, with `T*` simulated under uniformity.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::model::CdfModel;
use crate::quantiles::QuantileTable;
use crate::sampling::{fill_sample, fill_uniform_order_stats, replicate, RateEstimate, SortedSample};
use crate::special::ONE_MINUS_ULP;
use crate::statistics::{new_sup_raw, Family, PenaltySpec};

pub use crate::model::TabulatedCdf;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofReport {
    pub statistic: f64,
    pub kappa: f64,
    pub p_value: f64,
    pub reject: bool,
    /// The data value (or `F_o^{-1}(1/2)`) at which the supremum is attained.
    pub argmax_x: f64,
    pub n: usize,
    pub nu: f64,
    pub alpha: f64,
    /// Replicates behind the p-value.
    pub reps: usize,
    pub seed: u64,
    pub model: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Transformed sample `F_o(X_{n:i})` kept strictly inside `(0,1)`.
struct Transformed {
    u: Vec<f64>,
    clamped: usize,
    ties: bool,
}

fn transform(data: &[f64], model: &CdfModel) -> Result<Transformed> {
    let mut u = Vec::with_capacity(data.len());
    let mut clamped = 0;
    for &x in data {
        let p = model.cdf(x)?;
        let q = p.clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP);
        if q != p {
            clamped += 1;
        }
        u.push(q);
    }
    let ties = u.windows(2).any(|w| w[0] == w[1]);
    Ok(Transformed { u, clamped, ties })
}

/// `T_{n,ν}(F_o)` with the location of its supremum on the data scale.
pub fn gof_statistic(data: &SortedSample, model: &CdfModel, spec: PenaltySpec) -> Result<(f64, f64)> {
    let tr = transform(data.values(), model)?;
    let ext = new_sup_raw(&tr.u, spec.nu());
    let x = if ext.index == 0 {
        model.quantile(0.5)?
    } else {
        data.values()[ext.index - 1]
    };
    Ok((ext.value, x))
}

/// Null distribution of `T_{n,ν}`, sorted ascending.
fn simulate_null(n: usize, spec: PenaltySpec, reps: usize, seed: u64) -> Vec<f64> {
    let nu = spec.nu();
    let mut v = replicate(seed, reps, Vec::new, |buf, rng, _| {
        fill_uniform_order_stats(rng, n, buf);
        new_sup_raw(buf, nu).value
    });
    v.sort_by(f64::total_cmp);
    v
}

fn mc_p_value(null_sorted: &[f64], observed: f64) -> f64 {
    let at_least = null_sorted.len() - null_sorted.partition_point(|&t| t < observed);
    (1 + at_least) as f64 / (null_sorted.len() + 1) as f64
}

pub fn gof_test(
    data: &SortedSample,
    model: &CdfModel,
    spec: PenaltySpec,
    alpha: f64,
    table: &QuantileTable,
    pvalue_reps: usize,
    seed: u64,
) -> Result<GofReport> {
    let n = data.n();
    table.check_matches(Family::NewSup, n, spec.nu(), alpha)?;
    let tr = transform(data.values(), model)?;
    let mut warnings = Vec::new();
    if tr.ties {
        warnings.push(
            "ties among F_o(X): the hypothesized distribution is not continuous at the data"
                .to_string(),
        );
    }
    if tr.clamped > 0 {
        warnings.push(format!(
            "{} transformed values were 0 or 1 in floating point and were moved inside (0,1)",
            tr.clamped
        ));
    }
    let ext = new_sup_raw(&tr.u, spec.nu());
    let argmax_x = if ext.index == 0 {
        model.quantile(0.5)?
    } else {
        data.values()[ext.index - 1]
    };
    let null = simulate_null(n, spec, pvalue_reps, seed);
    Ok(GofReport {
        statistic: ext.value,
        kappa: table.kappa,
        p_value: mc_p_value(&null, ext.value),
        reject: ext.value > table.kappa,
        argmax_x,
        n,
        nu: spec.nu(),
        alpha,
        reps: pvalue_reps,
        seed,
        model: model.to_string(),
        warnings,
    })
}

/// Rejection frequency of `model_null` for samples of size `n` from
/// `model_alt`, at the critical value of `table`.
#[allow(clippy::too_many_arguments)]
pub fn power_vs_fixed_alt(
    model_null: &CdfModel,
    model_alt: &CdfModel,
    n: usize,
    spec: PenaltySpec,
    alpha: f64,
    table: &QuantileTable,
    reps: usize,
    seed: u64,
) -> Result<RateEstimate> {
    table.check_matches(Family::NewSup, n, spec.nu(), alpha)?;
    if reps == 0 {
        return Err(invalid("reps must be >= 1"));
    }
    let nu = spec.nu();
    let kappa = table.kappa;
    let outcomes = replicate(
        seed,
        reps,
        || (Vec::new(), Vec::new()),
        |(xs, us): &mut (Vec<f64>, Vec<f64>), rng, _| -> Result<bool> {
            fill_sample(model_alt, rng, n, xs)?;
            us.clear();
            for &x in xs.iter() {
                us.push(model_null.cdf(x)?.clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP));
            }
            Ok(new_sup_raw(us, nu).value > kappa)
        },
    );
    let flags = outcomes.into_iter().collect::<Result<Vec<bool>>>()?;
    Ok(RateEstimate::from_flags(&flags))
}
