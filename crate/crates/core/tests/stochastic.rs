use lilbands_core::gof::{gof_test, power_vs_fixed_alt};
use lilbands_core::mixtures::{delta_n, delta_n_models, llr_null_sim, power_sim, SparseMixtureParams, DELTA_GRID_POINTS};
use lilbands_core::quantiles::estimate_quantile;
use lilbands_core::sampling::{gen_sample, gen_uniform_order_stats, replicate};
use lilbands_core::statistics::stat_ks;
use lilbands_core::gof::TabulatedCdf;
use lilbands_core::{CdfModel, Family, PenaltySpec, RngKey, UniformOrderStats};

const R: usize = 10_000;

fn spec() -> PenaltySpec {
    PenaltySpec::new(1.1).unwrap()
}

fn order_stat_draws(n: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..R as u64)
        .map(|r| gen_uniform_order_stats(n, RngKey::new(seed, r)).unwrap().into_values())
        .collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var)
}

#[test]
fn order_statistic_means_match_beta_means() {
    let n = 20;
    let draws = order_stat_draws(n, 41);
    for i in [1, 2, 5, 10, 19, 20] {
        let col: Vec<f64> = draws.iter().map(|d| d[i - 1]).collect();
        let (m, var) = mean_var(&col);
        let se = (var / R as f64).sqrt();
        let target = i as f64 / (n + 1) as f64;
        assert!((m - target).abs() <= 4.0 * se, "i={i}: {m} vs {target}");
    }
}

#[test]
fn order_statistic_correlation_identity() {
    let n = 30;
    let draws = order_stat_draws(n, 42);
    for (i, j) in [(1, 2), (3, 10), (5, 25), (15, 16), (1, 30)] {
        let a: Vec<f64> = draws.iter().map(|d| d[i - 1]).collect();
        let b: Vec<f64> = draws.iter().map(|d| d[j - 1]).collect();
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (R - 1) as f64;
        let rho = cov / (va * vb).sqrt();
        let target = ((i * (n + 1 - j)) as f64 / (j * (n + 1 - i)) as f64).sqrt();
        let se = (1.0 - target * target) / (R as f64).sqrt();
        assert!((rho - target).abs() <= 4.0 * se.max(1e-12), "({i},{j}): {rho} vs {target}");
    }
}

#[test]
fn doubling_reps_keeps_kappa_within_its_error() {
    let runs = 100u64;
    let agree = (0..runs)
        .filter(|&k| {
            let a = estimate_quantile(Family::NewSup, 50, spec(), 0.05, 2000, 1000 + k).unwrap();
            let b = estimate_quantile(Family::NewSup, 50, spec(), 0.05, 4000, 5000 + k).unwrap();
            (a.kappa - b.kappa).abs() < 5.0 * a.std_err
        })
        .count();
    assert!(agree >= 99, "{agree} of {runs} runs agree");
}

#[test]
fn null_p_values_look_uniform() {
    let n = 50;
    let table = estimate_quantile(Family::NewSup, n, spec(), 0.05, 4000, 43).unwrap();
    let p: Vec<f64> = (0..2000u64)
        .map(|r| {
            let data = gen_sample(n, RngKey::new(44, r), &CdfModel::StdNormal).unwrap();
            gof_test(&data, &CdfModel::StdNormal, spec(), 0.05, &table, 199, 45 + r)
                .unwrap()
                .p_value
        })
        // the add-one estimate lives on {1/200, ..., 1}; use cell midpoints
        .map(|p| p - 0.5 / 200.0)
        .collect();
    let ks = stat_ks(&UniformOrderStats::from_unsorted(p).unwrap()).unwrap().value;
    // asymptotic 1% point of √n·D; p-values on a 1/200 lattice add at most √2000/200
    assert!(ks <= 1.628 + 2000f64.sqrt() / 200.0, "ks {ks}");
}

#[test]
fn nonrejection_falls_as_delta_grows() {
    let n = 2000;
    let table = estimate_quantile(Family::NewSup, n, spec(), 0.05, 10_000, 46).unwrap();
    let mut rows = Vec::new();
    for mu in [2.5, 3.0, 3.5, 4.0, 5.0, 6.0] {
        let params = SparseMixtureParams::explicit(n, 0.1, mu).unwrap();
        let delta = delta_n(&params).unwrap().delta;
        if delta < 20.0 {
            continue;
        }
        let rate = power_sim(&params, spec(), 0.05, &table, 2000, 47).unwrap();
        rows.push((delta, 1.0 - rate.rate, rate.se));
    }
    assert!(rows.len() >= 3, "{rows:?}");
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in rows.windows(2) {
        let slack = 3.0 * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt();
        assert!(w[1].1 <= w[0].1 + slack, "{rows:?}");
    }
}

#[test]
fn power_examples() {
    let n = 500;
    let table = estimate_quantile(Family::NewSup, n, spec(), 0.05, 20_000, 48).unwrap();

    let null = SparseMixtureParams::explicit(n, 0.0, 1.0).unwrap();
    let rate = power_sim(&null, spec(), 0.05, &table, 4000, 49).unwrap();
    // the table's own error adds to the binomial one
    let se = (rate.se.powi(2) + 0.05 * 0.95 / 20_000.0).sqrt();
    assert!((rate.rate - 0.05).abs() <= 2.0 * se, "null rate {}", rate.rate);

    let strong = SparseMixtureParams::explicit(n, 0.05, 10.0).unwrap();
    let rate = power_sim(&strong, spec(), 0.05, &table, 2000, 50).unwrap();
    assert!(rate.rate > 0.9, "rate {}", rate.rate);

    let n = 5000;
    let table = estimate_quantile(Family::NewSup, n, spec(), 0.05, 4000, 51).unwrap();
    let above = SparseMixtureParams::dense(n, 0.6, 0.3).unwrap();
    let below = SparseMixtureParams::dense(n, 0.6, 0.05).unwrap();
    let ra = power_sim(&above, spec(), 0.05, &table, 1000, 52).unwrap();
    let rb = power_sim(&below, spec(), 0.05, &table, 1000, 53).unwrap();
    assert!(ra.rate > rb.rate + 2.0 * (ra.se.powi(2) + rb.se.powi(2)).sqrt(), "{} vs {}", ra.rate, rb.rate);
}

#[test]
fn fixed_alternative_rejects_more_as_n_grows() {
    let alt = CdfModel::mixture(0.1, 1.5).unwrap();
    let delta = |n| delta_n_models(n, &alt, &CdfModel::StdNormal, DELTA_GRID_POINTS).unwrap().delta;
    assert!(delta(400) > delta(100));
    let mut rates = Vec::new();
    for n in [100, 400] {
        let table = estimate_quantile(Family::NewSup, n, spec(), 0.05, 4000, 54).unwrap();
        rates.push(power_vs_fixed_alt(&CdfModel::StdNormal, &alt, n, spec(), 0.05, &table, 2000, 55).unwrap());
    }
    assert!(rates[1].rate > rates[0].rate, "{rates:?}");
}

#[test]
fn llr_sum_variance_matches_theory() {
    let params = SparseMixtureParams::sparse(10_000, 0.7, 0.5).unwrap();
    let s = llr_null_sim(&params, 4000, 56).unwrap();
    assert!(
        (s.sum_v_variance - s.sum_v_variance_theory).abs() <= 4.0 * s.sum_v_variance_se,
        "{s:?}"
    );
    assert!(s.concentration_expected);
    assert!(s.second_moment_bound.unwrap() > 0.0);
}

#[test]
fn llr_concentrates_as_the_signal_thins() {
    let fracs: Vec<f64> = [0.002, 0.0005, 0.0001]
        .iter()
        .map(|&eps| {
            let params = SparseMixtureParams::sparse_eps(10_000, eps, 0.5).unwrap();
            llr_null_sim(&params, 2000, 57).unwrap().frac_large
        })
        .collect();
    assert!(fracs[0] > fracs[1] && fracs[1] > fracs[2], "{fracs:?}");
}

#[test]
fn replicate_collects_in_stream_order() {
    let a = replicate(58, 100, || (), |_, _, r| r);
    assert_eq!(a, (0..100).collect::<Vec<_>>());
}

#[test]
fn beta_tilt_against_the_uniform_is_detected() {
    // F(x) = x^1.5 on a fine knot grid
    let xs: Vec<f64> = (0..=2000).map(|k| k as f64 / 2000.0).collect();
    let ps = xs.iter().map(|x| x.powf(1.5)).collect();
    let alt = CdfModel::Tabulated(TabulatedCdf::new(xs, ps).unwrap());
    let n = 500;
    let table = estimate_quantile(Family::NewSup, n, spec(), 0.05, 10_000, 59).unwrap();
    let rate = power_vs_fixed_alt(&CdfModel::Uniform01, &alt, n, spec(), 0.05, &table, 2000, 60).unwrap();
    assert!(rate.rate > 0.05 + 4.0 * rate.se, "rate {}", rate.rate);
}
