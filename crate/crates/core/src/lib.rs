//! Adaptive homodyne tracking of a time-varying optical phase.
//!
//! A phase with a power-law spectrum is imprinted on a squeezed beam leaving
//! a cavity; a homodyne detector with a feedback-controlled local oscillator
//! tracks it in real time. This crate synthesizes such phase trajectories,
//! integrates the cavity quadratures and the measurement record with an
//! exact one-step update, runs the feedback filter loop, and checks the
//! measured mean-square error against the predicted parameter scaling laws.
//!
//! The library surface is organized by pipeline stage:
//!
//! - [`spectrum`]: power-law spectral density, FFT trajectory synthesis,
//!   theoretical autocovariance, periodograms.
//! - [`cavity`]: squeezed-cavity parameters and the exact-step integrator
//!   for the quadratures and the integrated homodyne current.
//! - [`feedback`]: the complex filter pair behind the phase estimate and
//!   the local-oscillator control.
//! - [`simulator`]: closed-loop runs, ensembles, and error statistics.
//! - [`scaling`]: parameter scaling laws, analytic constants, power-law
//!   fits, and operating-condition checks.
//! - [`optimizer`]: cyclic coordinate search over the control parameters
//!   and flux sweeps.
//! - [`cli`]: the `squeezetrack` command-line interface.
//!
//! Runnable examples, one per capability (`cargo run --release --example <name>`):
//!
//! - `generate_phase`: synthesize a trajectory, write CSV, check variance.
//! - `spectral_verification`: ensemble periodogram against the analytic density.
//! - `exact_step_vs_euler`: one-step moments against a brute-force integrator.
//! - `track_single_run`: a single closed-loop run with a trace file.
//! - `ensemble_mse`: a 64-run ensemble at predicted parameters.
//! - `scaling_report`: predictions, analytic constants, condition checks.
//! - `optimize_point`: coordinate search at one photon flux.
//! - `heisenberg_sweep`: flux sweep with fitted mean-square-error exponent.

pub mod cavity;
pub mod cli;
pub mod error;
pub mod feedback;
pub mod optimizer;
pub mod quad;
pub mod scaling;
pub mod simulator;
pub mod spectrum;

pub use error::{Error, Result};

/// Wrap an angle to the half-open interval `(-pi, pi]`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = x.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}
