//! Optimal investment, consumption and tontine allocation for a retiree with
//! time-dependent bequest preferences.
//!
//! The crate computes the closed-form controls for power utility in a
//! Black-Scholes market with Gompertz-Makeham mortality, calibrates the
//! bequest scale so that the initial tontine allocation is zero, and checks
//! the closed forms against Monte Carlo simulation of the wealth process and
//! its state-price density.

pub mod analytics;
pub mod controls;
pub mod error;
pub mod format;
pub mod mortality;
pub mod optimize;
pub mod preferences;
pub mod quadrature;
pub mod simulate;

pub use controls::{
    beta, build_control_schedule, denominator_integral, merton_fraction, ControlPoint,
    ControlSchedule, ControlWarning, MarketParams, OptimalControls,
};
pub use error::{Error, Result};
pub use mortality::{fit_gompertz_makeham, fit_gompertz_makeham_with_limit, GompertzMakehamParams, LifeTable, MortalityFit};
pub use preferences::{calibrate_kappa, BequestTable, BequestVariant, KappaCalibration, PreferenceSchedule};
