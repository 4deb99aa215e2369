//! Retail sales forecasting and dependence modelling.
//!
//! * [`data`], [`features`]: panels, splits and design matrices in the
//!   time-series and exchangeable framings.
//! * [`forecast`], [`ensemble`], [`evaluation`]: ARIMA, LASSO and boosted
//!   trees, linear blending, residual stacking and validation backtests.
//! * [`copula`], [`vine`]: rank-based bivariate copulas with gamma marginals,
//!   C-vines, sampling and value at risk.
//! * [`bayes`]: Gibbs samplers for Gaussian and Student-t regression with
//!   convergence diagnostics.
//! * [`report`], [`cli`]: SVG figures, sorted JSON and CSV reports, and the
//!   `salescast` command line.

pub mod bayes;
pub mod cli;
pub mod copula;
pub mod data;
pub mod date;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod forecast;
pub mod optim;
pub mod report;
pub mod special;
pub mod vine;
