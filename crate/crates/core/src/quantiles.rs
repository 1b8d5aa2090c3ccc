//! Monte-Carlo critical values and their on-disk cache.
//!
//! The estimate is the order statistic of rank `⌈(1−α)R⌉` among `R`
//! simulated statistics (rank `⌈αR⌉` for the union–intersection family,
//! whose small values reject). No interpolation.
//!
//! Cache layout: `<dir>/reps<R>_seed<S>/<family>_n<n>_nu<nu>_a<alpha>.json`.
//! The subdirectory keeps tables from different simulation runs apart, so
//! a lookup by `(family, n, nu, alpha)` can report every stored run and the
//! caller decides what to do with a run whose `(reps, seed)` differs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{invalid, Error, Result};
use crate::sampling::{fill_uniform_order_stats, replicate};
use crate::statistics::{PenaltySpec, StatEvaluator};

pub use crate::statistics::Family;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantileTable {
    pub family: Family,
    pub n: usize,
    /// Stored as 0 for families without a penalty.
    pub nu: f64,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
    pub kappa: f64,
    pub std_err: f64,
}

/// Key of one cached table, including the simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableKey {
    pub family: Family,
    pub n: usize,
    pub nu: f64,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
}

impl TableKey {
    pub fn new(family: Family, n: usize, nu: f64, alpha: f64, reps: usize, seed: u64) -> Self {
        Self {
            family,
            n,
            nu: normalized_nu(family, nu),
            alpha,
            reps,
            seed,
        }
    }

    fn file_name(&self) -> String {
        table_file_name(self.family, self.n, self.nu, self.alpha)
    }

    fn run_dir(&self) -> String {
        format!("reps{}_seed{}", self.reps, self.seed)
    }
}

fn normalized_nu(family: Family, nu: f64) -> f64 {
    if family.uses_nu() {
        nu
    } else {
        0.0
    }
}

fn table_file_name(family: Family, n: usize, nu: f64, alpha: f64) -> String {
    format!("{}_n{n}_nu{nu}_a{alpha}.json", family.name())
}

/// Formats with 17 significant digits, which round-trips every `f64`.
fn json_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        // JSON has no infinities; a table is never stored with one
        "null".to_string()
    }
}

impl QuantileTable {
    pub fn key(&self) -> TableKey {
        TableKey::new(self.family, self.n, self.nu, self.alpha, self.reps, self.seed)
    }

    pub fn to_json(&self) -> String {
        format!(
            "{{\n  \"family\": \"{}\",\n  \"n\": {},\n  \"nu\": {},\n  \"alpha\": {},\n  \"reps\": {},\n  \"seed\": {},\n  \"kappa\": {},\n  \"std_err\": {}\n}}\n",
            self.family.name(),
            self.n,
            json_number(self.nu),
            json_number(self.alpha),
            self.reps,
            self.seed,
            json_number(self.kappa),
            json_number(self.std_err),
        )
    }

    /// Checks that the table was estimated for this family and setting.
    pub fn check_matches(&self, family: Family, n: usize, nu: f64, alpha: f64) -> Result<()> {
        let nu = normalized_nu(family, nu);
        if self.family != family || self.n != n || self.nu != nu || self.alpha != alpha {
            return Err(Error::TableMismatch(format!(
                "table is for ({}, n = {}, nu = {}, alpha = {}), needed ({}, n = {n}, nu = {nu}, alpha = {alpha})",
                self.family, self.n, self.nu, self.alpha, family
            )));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    Ok(())
}

/// Zero-based index of the rank-`⌈p·R⌉` order statistic. The small slack
/// keeps products like `0.95 · 40000` from rounding up past an integer.
pub fn quantile_rank(p: f64, reps: usize) -> usize {
    let r = (p * reps as f64 - 1e-9).ceil().max(1.0) as usize;
    r.min(reps) - 1
}

/// Empirical quantile of rank `⌈p·R⌉` with its standard error.
///
/// The error is the asymptotic order-statistic standard deviation
/// `√(p(1−p)/R) / f̂(κ)`, with `f̂` a Gaussian kernel density estimate
/// using Silverman's bandwidth. Returns `(kappa, std_err)`; `sorted` must
/// be ascending.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> (f64, f64) {
    let r = sorted.len();
    let kappa = sorted[quantile_rank(p, r)];
    let rf = r as f64;
    let mean = sorted.iter().sum::<f64>() / rf;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (rf - 1.0).max(1.0);
    let iqr = sorted[quantile_rank(0.75, r)] - sorted[quantile_rank(0.25, r)];
    let mut spread = var.sqrt();
    if iqr > 0.0 {
        spread = spread.min(iqr / 1.34);
    }
    let h = 0.9 * spread * rf.powf(-0.2);
    if !(h > 0.0) {
        return (kappa, 0.0);
    }
    // only points within 8 bandwidths contribute measurably
    let lo = sorted.partition_point(|&x| x < kappa - 8.0 * h);
    let hi = sorted.partition_point(|&x| x <= kappa + 8.0 * h);
    let dens = sorted[lo..hi]
        .iter()
        .map(|&x| {
            let z = (x - kappa) / h;
            (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        / (rf * h * (2.0 * std::f64::consts::PI).sqrt());
    let se = (p * (1.0 - p) / rf).sqrt() / dens;
    (kappa, if se.is_finite() { se } else { 0.0 })
}

/// Simulates `reps` statistics of `family` under uniformity; sorted ascending.
pub fn simulate_statistics(
    family: Family,
    n: usize,
    spec: PenaltySpec,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let eval = StatEvaluator::new(family, n, spec)?;
    let mut values = replicate(seed, reps, Vec::new, |buf, rng, _| {
        fill_uniform_order_stats(rng, n, buf);
        eval.value(buf)
    });
    values.sort_by(f64::total_cmp);
    Ok(values)
}

pub fn estimate_quantile(
    family: Family,
    n: usize,
    spec: PenaltySpec,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<QuantileTable> {
    check_alpha(alpha)?;
    if reps < 100 {
        return Err(invalid(format!("reps must be >= 100, got {reps}")));
    }
    if family == Family::Limit {
        return Err(invalid(
            "limit quantiles are estimated from bridge paths (see the limit module)",
        ));
    }
    let values = simulate_statistics(family, n, spec, reps, seed)?;
    Ok(table_from_sorted(family, n, spec.nu(), alpha, seed, &values))
}

pub(crate) fn table_from_sorted(
    family: Family,
    n: usize,
    nu: f64,
    alpha: f64,
    seed: u64,
    sorted: &[f64],
) -> QuantileTable {
    let p = if family.rejects_large() { 1.0 - alpha } else { alpha };
    let (kappa, std_err) = empirical_quantile(sorted, p);
    QuantileTable {
        family,
        n,
        nu: normalized_nu(family, nu),
        alpha,
        reps: sorted.len(),
        seed,
        kappa,
        std_err,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the table atomically and returns its path.
pub fn store_table(table: &QuantileTable, cache_dir: &Path) -> Result<PathBuf> {
    if !table.kappa.is_finite() || !table.std_err.is_finite() {
        return Err(invalid("only tables with finite kappa and std_err can be stored"));
    }
    let key = table.key();
    let dir = cache_dir.join(key.run_dir());
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let path = dir.join(key.file_name());
    let mut tmp = tempfile_in(&dir)?;
    tmp.1
        .write_all(table.to_json().as_bytes())
        .and_then(|_| tmp.1.sync_all())
        .map_err(io_err(&tmp.0))?;
    drop(tmp.1);
    fs::rename(&tmp.0, &path).map_err(io_err(&path))?;
    Ok(path)
}

fn tempfile_in(dir: &Path) -> Result<(PathBuf, fs::File)> {
    for attempt in 0..100u32 {
        let path = dir.join(format!(".tmp-{}-{attempt}", std::process::id()));
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => return Ok((path, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_err(&path)(e)),
        }
    }
    Err(invalid(format!("cannot create a temporary file in {}", dir.display())))
}

pub fn read_table(path: &Path) -> Result<QuantileTable> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Loads the table stored under the full key, if any.
pub fn load_table_exact(key: &TableKey, cache_dir: &Path) -> Result<Option<QuantileTable>> {
    let path = cache_dir.join(key.run_dir()).join(key.file_name());
    if !path.exists() {
        return Ok(None);
    }
    read_table(&path).map(Some)
}

/// Every stored table for `(family, n, nu, alpha)`, ordered by `(reps, seed)`.
pub fn load_table(
    family: Family,
    n: usize,
    nu: f64,
    alpha: f64,
    cache_dir: &Path,
) -> Result<Vec<QuantileTable>> {
    let name = table_file_name(family, n, normalized_nu(family, nu), alpha);
    let entries = match fs::read_dir(cache_dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(cache_dir)(e)),
    };
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(io_err(cache_dir))?;
        let path = entry.path().join(&name);
        if path.is_file() {
            found.push(read_table(&path)?);
        }
    }
    found.sort_by_key(|t| (t.reps, t.seed));
    Ok(found)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CacheLookup {
    Hit(QuantileTable),
    /// Tables for the same setting but from other simulation runs.
    OtherRuns(Vec<QuantileTable>),
    Miss,
}

pub fn lookup(key: &TableKey, cache_dir: &Path) -> Result<CacheLookup> {
    if let Some(t) = load_table_exact(key, cache_dir)? {
        return Ok(CacheLookup::Hit(t));
    }
    let others = load_table(key.family, key.n, key.nu, key.alpha, cache_dir)?;
    Ok(if others.is_empty() {
        CacheLookup::Miss
    } else {
        CacheLookup::OtherRuns(others)
    })
}

/// Returns the cached table for the full key, estimating and storing it
/// on a miss.
pub fn cached_quantile(
    family: Family,
    n: usize,
    spec: PenaltySpec,
    alpha: f64,
    reps: usize,
    seed: u64,
    cache_dir: &Path,
) -> Result<(QuantileTable, CacheLookup)> {
    let key = TableKey::new(family, n, spec.nu(), alpha, reps, seed);
    let found = lookup(&key, cache_dir)?;
    if let CacheLookup::Hit(t) = &found {
        return Ok((t.clone(), found));
    }
    let table = estimate_quantile(family, n, spec, alpha, reps, seed)?;
    store_table(&table, cache_dir)?;
    Ok((table, found))
}
