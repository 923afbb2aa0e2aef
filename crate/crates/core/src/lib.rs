//! Planning of fuel-optimal low-thrust rendezvous trajectories that remain
//! achievable, with prescribed probability, when the engine suffers a single
//! temporary failure at a random time.
//!
//! The crate is organized bottom-up:
//!
//! * [`dynamics`] - satellite dynamics in equinoctial coordinates with
//!   analytic Jacobians,
//! * [`propagation`] - fixed-step RK4 flow maps (nominal, failure, adjoint),
//! * [`failures`] - shifted-exponential failure model and scenario sampling,
//! * [`smoothing`] - smoothed indicator functions and iteration schedules,
//! * [`det_solver`] - deterministic Arrow-Hurwicz solver with augmented
//!   Lagrangian terminal constraint (nominal, recourse and projection modes),
//! * [`inner_value`] - per-scenario recourse value and its gradients,
//! * [`stoch_solver`] - the stochastic Arrow-Hurwicz outer loop,
//! * [`validation`] - Monte Carlo success-probability estimation and
//!   a posteriori multiplier checks,
//! * [`config`] - JSON run configuration shared with the CLI.

pub mod config;
pub mod det_solver;
pub mod dynamics;
pub mod failures;
pub mod inner_value;
pub mod propagation;
pub mod smoothing;
pub mod stoch_solver;
pub mod validation;
