//! Continuous distribution functions used as hypotheses and alternatives.
//!
//! Textual form: `normal`, `uniform`, `mixture:<eps>:<mu>` or
//! `table:<path>`, where the table file holds one `x,F(x)` knot per line
//! (comma or whitespace separated, `#` starts a comment).

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Error, Result};
use crate::special::{std_normal_cdf, std_normal_quantile, std_normal_sf};

/// Piecewise-linear distribution function through sorted knots.
///
/// The first knot has `F = 0` and the last `F = 1`. Evaluation outside the
/// knot range is an error rather than an extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCdf {
    xs: Vec<f64>,
    ps: Vec<f64>,
    source: Option<PathBuf>,
}

impl TabulatedCdf {
    pub fn new(xs: Vec<f64>, ps: Vec<f64>) -> Result<Self> {
        if xs.len() != ps.len() || xs.len() < 2 {
            return Err(invalid("a tabulated CDF needs at least two (x, F) knots"));
        }
        if xs.iter().chain(ps.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("tabulated CDF knots must be finite"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("tabulated CDF abscissae must be strictly increasing"));
        }
        if ps.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("tabulated CDF values must be nondecreasing"));
        }
        if ps[0] != 0.0 || ps[ps.len() - 1] != 1.0 {
            return Err(invalid("tabulated CDF must start at F = 0 and end at F = 1"));
        }
        Ok(Self {
            xs,
            ps,
            source: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut xs = Vec::new();
        let mut ps = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                msg: format!("line {}: {msg}", lineno + 1),
            };
            if fields.len() != 2 {
                return Err(parse_err(format!("expected `x,F(x)`, got `{body}`")));
            }
            let x: f64 = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad number `{}`", fields[0])))?;
            let p: f64 = fields[1]
                .parse()
                .map_err(|_| parse_err(format!("bad number `{}`", fields[1])))?;
            xs.push(x);
            ps.push(p);
        }
        let mut table = Self::new(xs, ps).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        table.source = Some(path.to_path_buf());
        Ok(table)
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ps)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.support();
        if !(lo..=hi).contains(&x) {
            return None;
        }
        let k = self.xs.partition_point(|&v| v <= x);
        if k >= self.xs.len() {
            return Some(1.0);
        }
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (p0, p1) = (self.ps[k - 1], self.ps[k]);
        Some(p0 + (p1 - p0) * (x - x0) / (x1 - x0))
    }

    /// Generalized inverse `inf{x : F(x) ≥ p}`.
    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return self.xs[0];
        }
        let k = self.ps.partition_point(|&v| v < p);
        if k >= self.ps.len() {
            return self.xs[self.xs.len() - 1];
        }
        let (p0, p1) = (self.ps[k - 1], self.ps[k]);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        x0 + (x1 - x0) * (p - p0) / (p1 - p0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CdfModel {
    StdNormal,
    Uniform01,
    /// `(1−eps)·N(0,1) + eps·N(mu,1)`.
    GaussMixture { eps: f64, mu: f64 },
    Tabulated(TabulatedCdf),
}

impl CdfModel {
    pub fn mixture(eps: f64, mu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(invalid(format!("mixture weight eps must lie in [0,1], got {eps}")));
        }
        if !mu.is_finite() {
            return Err(invalid(format!("mixture shift mu must be finite, got {mu}")));
        }
        Ok(Self::GaussMixture { eps, mu })
    }

    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        match spec {
            "normal" => return Ok(Self::StdNormal),
            "uniform" => return Ok(Self::Uniform01),
            _ => {}
        }
        if let Some(rest) = spec.strip_prefix("mixture:") {
            let mut parts = rest.split(':');
            let (Some(e), Some(m), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(invalid(format!("expected mixture:<eps>:<mu>, got `{spec}`")));
            };
            let eps: f64 = e
                .parse()
                .map_err(|_| invalid(format!("bad mixture weight `{e}`")))?;
            let mu: f64 = m
                .parse()
                .map_err(|_| invalid(format!("bad mixture shift `{m}`")))?;
            return Self::mixture(eps, mu);
        }
        if let Some(path) = spec.strip_prefix("table:") {
            return Ok(Self::Tabulated(TabulatedCdf::load(Path::new(path))?));
        }
        Err(invalid(format!(
            "unknown model `{spec}` (expected normal, uniform, mixture:<eps>:<mu> or table:<path>)"
        )))
    }

    fn outside(&self, x: f64) -> Error {
        Error::OutsideSupport {
            model: self.to_string(),
            x,
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(self.outside(x));
        }
        match self {
            Self::StdNormal => Ok(std_normal_cdf(x)),
            Self::Uniform01 => Ok(x.clamp(0.0, 1.0)),
            Self::GaussMixture { eps, mu } => {
                Ok((1.0 - eps) * std_normal_cdf(x) + eps * std_normal_cdf(x - mu))
            }
            Self::Tabulated(t) => t.cdf(x).ok_or_else(|| self.outside(x)),
        }
    }

    /// Survival function `1 − F(x)`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(self.outside(x));
        }
        match self {
            Self::StdNormal => Ok(std_normal_sf(x)),
            Self::Uniform01 => Ok(1.0 - x.clamp(0.0, 1.0)),
            Self::GaussMixture { eps, mu } => {
                Ok((1.0 - eps) * std_normal_sf(x) + eps * std_normal_sf(x - mu))
            }
            Self::Tabulated(t) => t.cdf(x).map(|p| 1.0 - p).ok_or_else(|| self.outside(x)),
        }
    }

    /// Generalized inverse `inf{x : F(x) ≥ p}` for `p ∈ (0,1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(crate::error::domain(format!("quantile needs p in (0,1), got {p}")));
        }
        match self {
            Self::StdNormal => std_normal_quantile(p),
            Self::Uniform01 => Ok(p),
            Self::GaussMixture { eps, mu } => {
                // F lies between the two component CDFs
                let z = std_normal_quantile(p)?;
                let (mut lo, mut hi) = if *mu >= 0.0 { (z, z + mu) } else { (z + mu, z) };
                let f = |x: f64| (1.0 - eps) * std_normal_cdf(x) + eps * std_normal_cdf(x - mu);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if f(mid) >= p {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Ok(hi)
            }
            Self::Tabulated(t) => Ok(t.quantile(p)),
        }
    }

    /// Interval outside of which the model has (numerically) no mass.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Uniform01 => (0.0, 1.0),
            Self::Tabulated(t) => t.support(),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

impl fmt::Display for CdfModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StdNormal => write!(f, "normal"),
            Self::Uniform01 => write!(f, "uniform"),
            Self::GaussMixture { eps, mu } => write!(f, "mixture:{eps}:{mu}"),
            Self::Tabulated(t) => match &t.source {
                Some(p) => write!(f, "table:{}", p.display()),
                None => write!(f, "table:<inline>"),
            },
        }
    }
}
