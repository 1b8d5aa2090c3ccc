//! `lilbands`: critical values, confidence bands, goodness-of-fit tests,
//! sparse-mixture power tables and the limit statistic from the command line.
//!
//! Exit codes: 0 success, 2 invalid configuration or input, 3 I/O failure.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lilbands_core::bands::band_from_table;
use lilbands_core::format::sig;
use lilbands_core::gof::gof_test;
use lilbands_core::limit::{estimate_limit_quantile, limit_grid_sensitivity, tail_check, TailProcess};
use lilbands_core::mixtures::{delta_n, power_sim, SparseMixtureParams};
use lilbands_core::quantiles::{cached_quantile, lookup, store_table, CacheLookup, TableKey};
use lilbands_core::{
    BandMethod, CdfModel, Error, Family, PenaltySpec, QuantileTable, SortedSample, DEFAULT_SEED,
};

#[derive(Parser, Debug)]
#[command(name = "lilbands", version, about = "LIL-refined goodness-of-fit tests and confidence bands")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate (or fetch from the cache) a Monte-Carlo critical value.
    Quantile {
        /// new-sup | new-orderstat | bj | ks | ui
        #[arg(long)]
        family: Family,
        #[command(flatten)]
        common: Common,
    },
    /// Confidence band limits a_nj, b_nj for j = 0..n.
    Band {
        /// new | bjo | ks | ui
        #[arg(long, default_value = "new")]
        method: BandMethod,
        /// Emit only the centered limits a_nj - j/n and b_nj - j/n.
        #[arg(long)]
        centered: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Test whether a sample comes from a fully specified continuous distribution.
    Gof {
        /// Data file, one number per line; `#` starts a comment.
        #[arg(long)]
        input: PathBuf,
        /// normal | uniform | mixture:<eps>:<mu> | table:<path>
        #[arg(long)]
        cdf: String,
        /// Null replicates behind the Monte-Carlo p-value.
        #[arg(long, default_value_t = 9999)]
        pvalue_reps: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Divergence Delta_n and rejection rates for sparse normal mixtures.
    Power {
        #[arg(long)]
        beta: Option<f64>,
        /// Dense calibration mu = sqrt(2 r log n); needs --beta.
        #[arg(long, conflicts_with_all = ["sparse_s", "eps"])]
        r: Option<f64>,
        /// Sparse calibration mu = sqrt(2 s log(1/(sqrt(n) eps))); needs --beta or --eps.
        #[arg(long)]
        sparse_s: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, conflicts_with = "sparse_s")]
        mu: Option<f64>,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        n_grid: Vec<usize>,
        /// Replicates for the rejection rate; 0 skips the simulation.
        #[arg(long, default_value_t = 0)]
        sim_reps: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Quantile of the Brownian-bridge limit statistic with grid sensitivity.
    Limit {
        /// Grid size.
        #[arg(long, default_value_t = 10_000)]
        m: usize,
        /// Replicates per process for the tail-bound checks; 0 skips them.
        #[arg(long, default_value_t = 0)]
        tail_reps: usize,
        /// Also estimate the order-statistic quantile at this n and compare.
        #[arg(long)]
        compare_n: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Sample size.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Weight of the second penalty term, > 1.
    #[arg(long, default_value_t = 1.1)]
    nu: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Monte-Carlo replicates for critical values.
    #[arg(long, default_value_t = 40_000)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = ".lilbands-cache")]
    cache_dir: PathBuf,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format (default: json for gof, csv otherwise).
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn config(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

impl Common {
    fn spec(&self) -> Outcome<PenaltySpec> {
        Ok(PenaltySpec::new(self.nu)?)
    }

    fn validate(&self) -> Outcome<()> {
        if self.n == 0 {
            return Err(config("--n must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config("--alpha must lie in (0,1)"));
        }
        if self.threads == Some(0) {
            return Err(config("--threads must be >= 1"));
        }
        self.spec()?;
        Ok(())
    }

    fn format(&self) -> Format {
        self.format.unwrap_or(Format::Csv)
    }

    fn emit(&self, text: &str) -> Outcome<()> {
        match &self.out {
            Some(path) => fs::write(path, text)
                .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display()))),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Io(format!("cannot write to stdout: {e}"))),
        }
    }

    fn table(&self, family: Family, n: usize) -> Outcome<QuantileTable> {
        let (table, found) =
            cached_quantile(family, n, self.spec()?, self.alpha, self.reps, self.seed, &self.cache_dir)?;
        if let CacheLookup::OtherRuns(others) = found {
            eprintln!(
                "note: the cache also holds {} run(s) of {family} n={n} with other reps/seed",
                others.len()
            );
        }
        Ok(table)
    }
}

fn json<T: serde::Serialize>(value: &T) -> Outcome<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| config(format!("cannot serialize output: {e}")))
}

fn table_csv(t: &QuantileTable) -> String {
    format!(
        "family,n,nu,alpha,reps,seed,kappa,std_err\n{},{},{},{},{},{},{},{}\n",
        t.family,
        t.n,
        sig(t.nu, 12),
        sig(t.alpha, 12),
        t.reps,
        t.seed,
        sig(t.kappa, 12),
        sig(t.std_err, 12)
    )
}

fn cmd_quantile(family: Family, common: &Common) -> Outcome<()> {
    if family == Family::Limit {
        return Err(config("use the `limit` subcommand for the limit statistic"));
    }
    let t = common.table(family, common.n)?;
    let text = match common.format() {
        Format::Csv => table_csv(&t),
        Format::Json => t.to_json(),
    };
    common.emit(&text)
}

fn cmd_band(method: BandMethod, centered: bool, common: &Common) -> Outcome<()> {
    let table = common.table(method.family(), common.n)?;
    let band = band_from_table(method, common.spec()?, &table)?;
    for w in &band.warnings {
        eprintln!("warning: {w}");
    }
    let text = match (common.format(), centered) {
        (Format::Json, _) => json(&band)?,
        (Format::Csv, true) => band.to_centered_csv(),
        (Format::Csv, false) => band.to_csv(),
    };
    common.emit(&text)
}

fn read_data(path: &Path) -> Outcome<SortedSample> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let v: f64 = body.parse().map_err(|_| {
            config(format!("{}:{}: not a number: `{body}`", path.display(), k + 1))
        })?;
        if !v.is_finite() {
            return Err(config(format!("{}:{}: value is not finite", path.display(), k + 1)));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(config(format!("{}: no data values", path.display())));
    }
    Ok(SortedSample::from_values(values)?)
}

fn cmd_gof(input: &Path, cdf: &str, pvalue_reps: usize, common: &Common) -> Outcome<()> {
    if pvalue_reps == 0 {
        return Err(config("--pvalue-reps must be >= 1"));
    }
    let model = CdfModel::parse(cdf)?;
    let data = read_data(input)?;
    let table = common.table(Family::NewSup, data.n())?;
    let report = gof_test(
        &data,
        &model,
        common.spec()?,
        common.alpha,
        &table,
        pvalue_reps,
        common.seed.wrapping_add(1),
    )?;
    let text = match common.format.unwrap_or(Format::Json) {
        Format::Json => json(&report)?,
        Format::Csv => format!(
            "statistic,kappa,p_value,reject,argmax_x,n\n{},{},{},{},{},{}\n",
            sig(report.statistic, 12),
            sig(report.kappa, 12),
            sig(report.p_value, 12),
            report.reject,
            sig(report.argmax_x, 12),
            report.n
        ),
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    common.emit(&text)
}

struct Calibration {
    beta: Option<f64>,
    r: Option<f64>,
    sparse_s: Option<f64>,
    eps: Option<f64>,
    mu: Option<f64>,
}

impl Calibration {
    fn at(&self, n: usize) -> Outcome<SparseMixtureParams> {
        let p = match (self.beta, self.r, self.sparse_s, self.eps, self.mu) {
            (Some(b), Some(r), None, None, None) => SparseMixtureParams::dense(n, b, r),
            (Some(b), None, Some(s), None, None) => SparseMixtureParams::sparse(n, b, s),
            (None, None, Some(s), Some(e), None) => SparseMixtureParams::sparse_eps(n, e, s),
            (None, None, None, Some(e), Some(m)) => SparseMixtureParams::explicit(n, e, m),
            _ => {
                return Err(config(
                    "give one of: --beta with --r, --beta with --sparse-s, --eps with --sparse-s, --eps with --mu",
                ))
            }
        };
        Ok(p?)
    }
}

fn cmd_power(cal: &Calibration, n_grid: &[usize], sim_reps: usize, common: &Common) -> Outcome<()> {
    if n_grid.is_empty() {
        return Err(config("--n-grid must not be empty"));
    }
    let spec = common.spec()?;
    let mut rows = Vec::new();
    for &n in n_grid {
        let p = cal.at(n)?;
        // a point mass at zero has no divergence to locate
        let delta = if p.eps == 0.0 { 0.0 } else { delta_n(&p)?.delta };
        let rate = if sim_reps > 0 {
            let table = common.table(Family::NewSup, n)?;
            Some(power_sim(&p, spec, common.alpha, &table, sim_reps, common.seed.wrapping_add(2))?)
        } else {
            None
        };
        rows.push((p, delta, rate));
    }
    let text = match common.format() {
        Format::Csv => {
            let mut s = String::from("n,eps,mu,delta_n,rejection_rate,se\n");
            for (p, d, rate) in &rows {
                let (r, se) = rate.map_or((String::new(), String::new()), |r| (sig(r.rate, 12), sig(r.se, 12)));
                let _ = writeln!(s, "{},{},{},{},{r},{se}", p.n, sig(p.eps, 12), sig(p.mu, 12), sig(*d, 12));
            }
            s
        }
        Format::Json => {
            let v: Vec<serde_json::Value> = rows
                .iter()
                .map(|(p, d, rate)| {
                    serde_json::json!({
                        "n": p.n, "eps": p.eps, "mu": p.mu, "delta_n": d,
                        "rejection_rate": rate.map(|r| r.rate), "se": rate.map(|r| r.se),
                    })
                })
                .collect();
            json(&v)?
        }
    };
    common.emit(&text)
}

fn limit_table(common: &Common, m: usize) -> Outcome<QuantileTable> {
    let spec = common.spec()?;
    let key = TableKey::new(Family::Limit, m, spec.nu(), common.alpha, common.reps, common.seed);
    if let CacheLookup::Hit(t) = lookup(&key, &common.cache_dir)? {
        return Ok(t);
    }
    let t = estimate_limit_quantile(spec, common.alpha, m, common.reps, common.seed)?;
    store_table(&t, &common.cache_dir)?;
    Ok(t)
}

fn cmd_limit(m: usize, tail_reps: usize, compare_n: Option<usize>, common: &Common) -> Outcome<()> {
    let spec = common.spec()?;
    let table = limit_table(common, m)?;
    let sens = limit_grid_sensitivity(spec, common.alpha, m, common.reps, common.seed.wrapping_add(1))?;
    let mut fields: Vec<(String, String)> = vec![
        ("nu".into(), sig(spec.nu(), 12)),
        ("alpha".into(), sig(common.alpha, 12)),
        ("m".into(), m.to_string()),
        ("reps".into(), common.reps.to_string()),
        ("seed".into(), common.seed.to_string()),
        ("kappa".into(), sig(table.kappa, 12)),
        ("std_err".into(), sig(table.std_err, 12)),
        ("sensitivity_kappa_m".into(), sig(sens.kappa_m, 12)),
        ("sensitivity_kappa_2m".into(), sig(sens.kappa_2m, 12)),
        ("sensitivity_shift".into(), sig(sens.shift, 12)),
    ];
    if let Some(n) = compare_n {
        let t = common.table(Family::NewOrderstat, n)?;
        let tol = 3.0 * (t.std_err.powi(2) + table.std_err.powi(2)).sqrt() + 0.1;
        let diff = t.kappa - table.kappa;
        fields.push((format!("kappa_orderstat_n{n}"), sig(t.kappa, 12)));
        fields.push(("compare_difference".into(), sig(diff, 12)));
        fields.push(("compare_tolerance".into(), sig(tol, 12)));
        fields.push(("compare_within".into(), (diff.abs() <= tol).to_string()));
    }
    if tail_reps > 0 {
        let etas = [0.0, 2.0, 4.0, 6.0];
        for (label, process) in [
            ("bridge_sq", TailProcess::BridgeSq),
            ("ep_sup", TailProcess::EpSup),
            ("ep_orderstat", TailProcess::EpOrderstat),
        ] {
            let rows = tail_check(process, common.n, 0.0, 1.0, &etas, tail_reps, common.seed.wrapping_add(2))?;
            for row in rows {
                let eta = sig(row.params.eta, 12);
                fields.push((format!("tail_{label}_eta{eta}_rate"), sig(row.exceedance.rate, 12)));
                fields.push((format!("tail_{label}_eta{eta}_upper99"), sig(row.upper_99, 12)));
                fields.push((format!("tail_{label}_eta{eta}_bound"), sig(row.bound, 12)));
                fields.push((format!("tail_{label}_eta{eta}_holds"), row.holds.to_string()));
            }
        }
    }
    let text = match common.format() {
        Format::Csv => {
            let mut s = String::from("quantity,value\n");
            for (k, v) in &fields {
                let _ = writeln!(s, "{k},{v}");
            }
            s
        }
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = fields
                .into_iter()
                .map(|(k, v)| {
                    let val = v
                        .parse::<f64>()
                        .ok()
                        .and_then(|x| serde_json::Number::from_f64(x).map(serde_json::Value::Number))
                        .or_else(|| v.parse::<bool>().ok().map(serde_json::Value::Bool))
                        .unwrap_or(serde_json::Value::String(v));
                    (k, val)
                })
                .collect();
            json(&map)?
        }
    };
    common.emit(&text)
}

fn run(cli: Cli) -> Outcome<()> {
    let common = match &cli.command {
        Command::Quantile { common, .. }
        | Command::Band { common, .. }
        | Command::Gof { common, .. }
        | Command::Power { common, .. }
        | Command::Limit { common, .. } => common,
    };
    common.validate()?;
    if let Some(k) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| config(format!("cannot set up {k} threads: {e}")))?;
    }
    match &cli.command {
        Command::Quantile { family, common } => cmd_quantile(*family, common),
        Command::Band { method, centered, common } => cmd_band(*method, *centered, common),
        Command::Gof { input, cdf, pvalue_reps, common } => cmd_gof(input, cdf, *pvalue_reps, common),
        Command::Power { beta, r, sparse_s, eps, mu, n_grid, sim_reps, common } => {
            let cal = Calibration { beta: *beta, r: *r, sparse_s: *sparse_s, eps: *eps, mu: *mu };
            cmd_power(&cal, n_grid, *sim_reps, common)
        }
        Command::Limit { m, tail_reps, compare_n, common } => cmd_limit(*m, *tail_reps, *compare_n, common),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
