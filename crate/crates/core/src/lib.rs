//! Goodness-of-fit tests and confidence bands for distribution functions
//! built on the Bernoulli Kullback–Leibler divergence with additive
//! law-of-the-iterated-logarithm penalties.
//!
//! The crate provides
//!
//! * the scalar kernel ([`special`]): `K(s,t)`, the penalties `C`, `D`, `Γ`,
//!   inversion of `K` in its second argument, Gaussian and beta
//!   distribution functions;
//! * seeded substream sampling of uniform order statistics ([`sampling`]);
//! * five test statistics ([`statistics`]) and Monte-Carlo critical values
//!   with an on-disk cache ([`quantiles`]);
//! * four confidence band families with evaluation and diagnostics
//!   ([`bands`]);
//! * one-sample tests against a hypothesized continuous distribution
//!   ([`gof`]), sparse Gaussian mixture analysis ([`mixtures`]) and the
//!   Brownian-bridge limit statistic ([`limit`]).
//!
//! ```
//! use lilbands_core::{bands, PenaltySpec};
//!
//! let spec = PenaltySpec::new(1.1).unwrap();
//! let band = bands::band_new(500, spec, 4.2471).unwrap();
//! assert_eq!(band.lower[0], 0.0);
//! assert_eq!(band.upper[500], 1.0);
//! ```

pub mod bands;
pub mod error;
pub mod format;
pub mod gof;
pub mod limit;
pub mod mixtures;
pub mod model;
pub mod quantiles;
pub mod sampling;
pub mod special;
pub mod statistics;

pub use bands::{BandMethod, ConfidenceBand};
pub use error::{Error, Result};
pub use gof::GofReport;
pub use model::CdfModel;
pub use quantiles::{Family, QuantileTable};
pub use sampling::{RngKey, SortedSample, UniformOrderStats};
pub use special::{BetaParams, PenaltyValue};
pub use statistics::{PenaltySpec, StatisticResult};

/// Seed used whenever the caller does not supply one.
pub const DEFAULT_SEED: u64 = 20140301;
