//! Closed-loop Monte Carlo runs and ensemble error statistics.
//!
//! Each run synthesizes one phase trajectory, then steps the cavity and
//! the feedback filters on the locked grid `dt = 1/(10^3 chi)` so that
//! `chi dt = 1e-3` always. Statistics of the wrapped error `phi_est - phi`
//! are accumulated after a warm-up window and merged across an ensemble of
//! independent runs.
//!
//! A note on the output geometry: the carrier drives the y quadrature, so
//! at lock the estimate functional c points along `i e^{i phi}` and
//! `arg c` reads `phi + pi/2`. The loop therefore rotates both the
//! reported estimate and the LO command by `-pi/2`, which simultaneously
//! makes the estimate unbiased and parks the LO on the squeezed (x)
//! quadrature where the error signal `sin(theta - phi) E dt` is live.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::time::Instant;

use crate::cavity::{
    advance_cavity, measurement_increment, sample_step_noise, CavityParams, CavityState,
    StepCoefficients, StepNoise,
};
use crate::error::{Error, Result};
use crate::feedback::FilterState;
use crate::spectrum::{generate_phase, NoiseDraws, SpectrumParams};
use crate::wrap_angle;

/// Above this flux ratio the wrapped errors are so small that the plain
/// quadratic mean is used; below it the Holevo form is selected.
pub const HOLEVO_FLUX_CUTOFF: f64 = 5e7;

/// Default trace stride in steps: one point per `1/(10 chi)`.
pub const TRACE_STRIDE: usize = 100;

// Stream tags deriving per-run substreams from (base_seed, run_index).
const STREAM_PHASE: u64 = 0;
const STREAM_NOISE_X: u64 = 1;
const STREAM_NOISE_Y: u64 = 2;
const STREAM_INIT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub spectrum: SpectrumParams,
    /// Photon flux over kappa (the resource budget N/kappa).
    pub flux_over_kappa: f64,
    pub gamma_over_kappa: f64,
    pub chi_over_kappa: f64,
    pub r: f64,
    pub delta: f64,
    /// Warm-up window in units of 1/chi (default 100).
    pub warmup_multiple: f64,
    /// Total simulated time in units of 1/chi (default 300).
    pub total_multiple: f64,
    pub runs: u64,
    pub base_seed: u64,
}

impl SimConfig {
    /// Config with the standard protocol windows (100/chi warm-up, 300/chi
    /// total, 64 runs).
    pub fn new(
        spectrum: SpectrumParams,
        flux_over_kappa: f64,
        gamma_over_kappa: f64,
        chi_over_kappa: f64,
        r: f64,
        delta: f64,
    ) -> Self {
        SimConfig {
            spectrum,
            flux_over_kappa,
            gamma_over_kappa,
            chi_over_kappa,
            r,
            delta,
            warmup_multiple: 100.0,
            total_multiple: 300.0,
            runs: 64,
            base_seed: 0,
        }
    }

    pub fn flux(&self) -> f64 {
        self.flux_over_kappa * self.spectrum.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.gamma_over_kappa * self.spectrum.kappa
    }

    pub fn chi(&self) -> f64 {
        self.chi_over_kappa * self.spectrum.kappa
    }

    /// The step rule: `dt = 1/(10^3 chi)`, derived, never stored.
    pub fn dt(&self) -> f64 {
        1.0 / (1e3 * self.chi())
    }

    pub fn steps(&self) -> usize {
        (self.total_multiple * 1e3).ceil() as usize
    }

    pub fn warmup_steps(&self) -> usize {
        (self.warmup_multiple * 1e3).ceil() as usize
    }

    /// Independent error samples by the 1/chi decorrelation rule:
    /// `runs * (total - warmup)`.
    pub fn effective_samples(&self) -> u64 {
        (self.runs as f64 * (self.total_multiple - self.warmup_multiple)).round() as u64
    }

    pub fn cavity_params(&self) -> Result<CavityParams> {
        CavityParams::from_flux(self.gamma(), self.r, self.flux())
    }

    pub fn validate(&self) -> Result<()> {
        self.spectrum.validate()?;
        if !(self.spectrum.gamma_relax > 0.0) {
            return Err(Error::InvalidParameter(
                "simulation requires gamma_relax > 0 (phase synthesis)".into(),
            ));
        }
        for (name, v) in [
            ("flux_over_kappa", self.flux_over_kappa),
            ("gamma_over_kappa", self.gamma_over_kappa),
            ("chi_over_kappa", self.chi_over_kappa),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "squeezing r must be nonnegative, got {}",
                self.r
            )));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in [0, 1], got {}",
                self.delta
            )));
        }
        if !(self.warmup_multiple >= 0.0) || !(self.total_multiple > self.warmup_multiple) {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= warmup_multiple < total_multiple, got {} and {}",
                self.warmup_multiple, self.total_multiple
            )));
        }
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        // rejects Condition-4 violations before any run
        self.cavity_params()?;
        Ok(())
    }
}

/// Streaming accumulators of the wrapped error `wrap(phi_est - phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: u64,
    pub sum_sq: f64,
    pub sum_cos: f64,
    pub sum_sin: f64,
}

impl ErrorStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold in one wrapped error sample.
    pub fn push(&mut self, err: f64) {
        self.count += 1;
        self.sum_sq += err * err;
        let (s, c) = err.sin_cos();
        self.sum_cos += c;
        self.sum_sin += s;
    }

    /// Field-wise addition; associative and commutative up to float
    /// rounding, so ensembles merge as a pure fold.
    pub fn merge(&mut self, other: &ErrorStats) {
        self.count += other.count;
        self.sum_sq += other.sum_sq;
        self.sum_cos += other.sum_cos;
        self.sum_sin += other.sum_sin;
    }
}

/// Holevo-form MSE `(sum_cos / M)^{-2} - 1`. Robust to phase wrapping and
/// the estimator of record below the flux cutoff. Returns infinity when
/// the circular mean vanishes (no phase information).
pub fn holevo_mse(stats: &ErrorStats) -> Result<f64> {
    if stats.count == 0 {
        return Err(Error::InvalidParameter(
            "holevo_mse needs at least one sample".into(),
        ));
    }
    let mean_cos = stats.sum_cos / stats.count as f64;
    if mean_cos == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(mean_cos.powi(-2) - 1.0)
}

/// Plain quadratic mean `sum_sq / M` of the wrapped errors.
pub fn standard_mse(stats: &ErrorStats) -> Result<f64> {
    if stats.count == 0 {
        return Err(Error::InvalidParameter(
            "standard_mse needs at least one sample".into(),
        ));
    }
    Ok(stats.sum_sq / stats.count as f64)
}

/// The estimator of record for a given flux ratio.
pub fn selected_mse(stats: &ErrorStats, flux_over_kappa: f64) -> Result<f64> {
    if flux_over_kappa < HOLEVO_FLUX_CUTOFF {
        holevo_mse(stats)
    } else {
        standard_mse(stats)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub phi: f64,
    pub phi_est: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub stats: ErrorStats,
    pub trace: Option<Vec<TracePoint>>,
    /// Base seed of the ensemble; substreams derive from (seed, run_index).
    pub seed: u64,
}

fn stream_rng(base_seed: u64, run_index: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(run_index.wrapping_mul(4).wrapping_add(tag));
    rng
}

/// One closed-loop pass over a phase array. The rotation applied to the
/// estimate and LO command is `out_shift` (see module docs); production
/// code pins it to `-pi/2`, and `mi_shift` (an extra offset inside the
/// measurement angle) to zero.
#[allow(clippy::too_many_arguments)]
fn run_core<F>(
    coeffs: &StepCoefficients,
    phi: &[f64],
    dt: f64,
    warmup_steps: usize,
    mut filter: FilterState,
    mut state: CavityState,
    mut noise_source: F,
    mi_shift: f64,
    out_shift: f64,
    trace_stride: Option<usize>,
) -> Result<(ErrorStats, Option<Vec<TracePoint>>)>
where
    F: FnMut(&StepCoefficients) -> StepNoise,
{
    let mut stats = ErrorStats::new();
    let mut trace = trace_stride.map(|s| Vec::with_capacity(phi.len() / s + 1));
    for (n, &phi_n) in phi.iter().enumerate() {
        let noise = noise_source(coeffs);
        let angle = filter.theta - phi_n + mi_shift;
        let dq = measurement_increment(coeffs, &state, &noise, angle);
        state = advance_cavity(coeffs, &state, &noise);
        filter.update_filters(dq, dt)?;

        let c = filter.combined_estimate();
        let phi_est = if c == num_complex::Complex64::ZERO {
            0.0
        } else {
            wrap_angle(c.arg() + out_shift)
        };
        if let Some(blend) = filter.blended_phase() {
            filter.theta = wrap_angle(blend + out_shift);
        }

        if !phi_est.is_finite() || !state.x.is_finite() || !state.y.is_finite() {
            return Err(Error::Numeric {
                step: n,
                what: format!(
                    "non-finite loop state (x={}, y={}, est={phi_est})",
                    state.x, state.y
                ),
            });
        }

        if n >= warmup_steps {
            stats.push(wrap_angle(phi_est - phi_n));
        }
        if let (Some(tr), Some(stride)) = (trace.as_mut(), trace_stride) {
            if n % stride == 0 {
                tr.push(TracePoint {
                    t: n as f64 * dt,
                    phi: phi_n,
                    phi_est,
                    theta: filter.theta,
                });
            }
        }
    }
    Ok((stats, trace))
}

fn trajectory_with(
    config: &SimConfig,
    run_index: u64,
    trace_stride: Option<usize>,
) -> Result<RunResult> {
    config.validate()?;
    let params = config.cavity_params()?;
    let dt = config.dt();
    let coeffs = StepCoefficients::new(&params, dt)?;
    let steps = config.steps();

    let mut rng_phase = stream_rng(config.base_seed, run_index, STREAM_PHASE);
    let draws = NoiseDraws::sample(steps, &mut rng_phase);
    let phi = generate_phase(&config.spectrum, steps, dt, &draws)?;

    let mut rng_init = stream_rng(config.base_seed, run_index, STREAM_INIT);
    let state = CavityState::stationary(&params, &mut rng_init);
    let filter = FilterState::new(config.chi(), config.delta)?;

    let mut rng_x = stream_rng(config.base_seed, run_index, STREAM_NOISE_X);
    let mut rng_y = stream_rng(config.base_seed, run_index, STREAM_NOISE_Y);
    let (stats, trace) = run_core(
        &coeffs,
        &phi.values,
        dt,
        config.warmup_steps(),
        filter,
        state,
        |c| sample_step_noise(c, &mut rng_x, &mut rng_y),
        0.0,
        -FRAC_PI_2,
        trace_stride,
    )?;
    Ok(RunResult {
        stats,
        trace,
        seed: config.base_seed,
    })
}

/// One run of the closed loop, statistics only. Deterministic in
/// `(config, run_index)`.
pub fn run_trajectory(config: &SimConfig, run_index: u64) -> Result<RunResult> {
    trajectory_with(config, run_index, None)
}

/// Same, with a plotting trace sampled every [`TRACE_STRIDE`] steps.
pub fn run_trajectory_traced(config: &SimConfig, run_index: u64) -> Result<RunResult> {
    trajectory_with(config, run_index, Some(TRACE_STRIDE))
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub config: SimConfig,
    pub merged: ErrorStats,
    pub per_run: Vec<RunResult>,
    /// The estimator of record (Holevo below the flux cutoff).
    pub mse: f64,
    pub holevo: f64,
    pub standard: f64,
    /// Spread of the per-run record estimator over sqrt(runs).
    pub stderr_mse: f64,
    pub effective_samples: u64,
    pub wall_time_s: f64,
}

/// Run the whole ensemble on the current rayon pool and merge in run-index
/// order, so the result is bit-identical for any worker count.
pub fn run_ensemble(config: &SimConfig) -> Result<EnsembleResult> {
    run_ensemble_with_workers(config, None)
}

pub fn run_ensemble_with_workers(
    config: &SimConfig,
    workers: Option<usize>,
) -> Result<EnsembleResult> {
    config.validate()?;
    let started = Instant::now();
    let indices: Vec<u64> = (0..config.runs).collect();
    let job = || -> Result<Vec<RunResult>> {
        indices
            .par_iter()
            .map(|&i| run_trajectory(config, i))
            .collect()
    };
    let per_run = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?
            .install(job),
        None => job(),
    }?;

    let mut merged = ErrorStats::new();
    for r in &per_run {
        merged.merge(&r.stats);
    }
    let holevo = holevo_mse(&merged)?;
    let standard = standard_mse(&merged)?;
    let mse = selected_mse(&merged, config.flux_over_kappa)?;

    let per_run_mse: Vec<f64> = per_run
        .iter()
        .map(|r| selected_mse(&r.stats, config.flux_over_kappa))
        .collect::<Result<_>>()?;
    let stderr_mse = spread_stderr(&per_run_mse);

    Ok(EnsembleResult {
        config: *config,
        merged,
        per_run,
        mse,
        holevo,
        standard,
        stderr_mse,
        effective_samples: config.effective_samples(),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn spread_stderr(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (var / n as f64).sqrt()
}

/// `t,phi,phi_est,theta` rows with 17 significant digits.
pub fn write_trace_csv<W: Write>(trace: &[TracePoint], mut out: W) -> Result<()> {
    writeln!(out, "t,phi,phi_est,theta")?;
    for p in trace {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            p.t, p.phi, p.phi_est, p.theta
        )?;
    }
    Ok(())
}

/// `run,seed,mse,holevo_mse,samples` rows. The `mse` column is the
/// per-run standard form; `holevo_mse` the per-run Holevo form.
pub fn write_ensemble_csv<W: Write>(result: &EnsembleResult, mut out: W) -> Result<()> {
    writeln!(out, "run,seed,mse,holevo_mse,samples")?;
    for (i, r) in result.per_run.iter().enumerate() {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{}",
            i,
            r.seed,
            standard_mse(&r.stats)?,
            holevo_mse(&r.stats)?,
            r.stats.count
        )?;
    }
    Ok(())
}

/// JSON summary with the config echo and both estimator forms.
pub fn write_summary_json<W: Write>(result: &EnsembleResult, mut out: W) -> Result<()> {
    let summary = serde_json::json!({
        "config": result.config,
        "mse": result.mse,
        "holevo_mse": result.holevo,
        "stderr_mse": result.stderr_mse,
        "effective_samples": result.effective_samples,
        "wall_time_s": result.wall_time_s,
    });
    serde_json::to_writer_pretty(&mut out, &summary)?;
    writeln!(out)?;
    Ok(())
}
