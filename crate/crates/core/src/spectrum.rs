//! Power-law phase noise: spectral density, trajectory synthesis, analysis.
//!
//! The phase process has two-sided spectral density
//!
//! ```text
//! S(omega) = kappa^(p-1) / (|omega|^p + gamma_relax^p),   p > 1
//! ```
//!
//! `kappa` sets the magnitude of the fluctuations, `gamma_relax` regularizes
//! the divergence at zero frequency (p = 2 is an Ornstein-Uhlenbeck process
//! of bandwidth `gamma_relax`). Trajectories are synthesized on a uniform
//! grid by assigning independent Gaussian amplitudes to each FFT frequency
//! bin, weighted by the square root of the density.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumParams {
    /// Spectral exponent, must exceed 1.
    pub p: f64,
    /// Magnitude scale of the phase fluctuations.
    pub kappa: f64,
    /// Low-frequency regularization (relaxation rate).
    pub gamma_relax: f64,
}

impl SpectrumParams {
    pub fn new(p: f64, kappa: f64, gamma_relax: f64) -> Result<Self> {
        let s = Self {
            p,
            kappa,
            gamma_relax,
        };
        s.validate()?;
        Ok(s)
    }

    /// Default regularization: `gamma_relax = 1e-3 * kappa`.
    pub fn with_default_regularization(p: f64, kappa: f64) -> Result<Self> {
        Self::new(p, kappa, 1e-3 * kappa)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "spectral exponent p must satisfy p > 1, got {}",
                self.p
            )));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if !(self.gamma_relax >= 0.0) || !self.gamma_relax.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma_relax must be nonnegative, got {}",
                self.gamma_relax
            )));
        }
        Ok(())
    }

    fn require_regularized(&self) -> Result<()> {
        if self.gamma_relax > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "gamma_relax must be positive for this operation (zero-frequency divergence)"
                    .into(),
            ))
        }
    }

    /// Exact zero-lag autocovariance, used as the tolerance scale for the
    /// numerical transform: `kappa^(p-1) gamma_relax^(1-p) / (p sin(pi/p))`.
    fn c0_closed_form(&self) -> f64 {
        self.kappa.powf(self.p - 1.0) * self.gamma_relax.powf(1.0 - self.p)
            / (self.p * (PI / self.p).sin())
    }
}

/// Two-sided spectral density at angular frequency `omega`.
#[inline]
pub fn spectral_density(params: &SpectrumParams, omega: f64) -> f64 {
    params.kappa.powf(params.p - 1.0)
        / (omega.abs().powf(params.p) + params.gamma_relax.powf(params.p))
}

/// Autocovariance `(1/2pi) Int S(omega) exp(i omega tau) d omega` by adaptive
/// quadrature, folded onto `omega >= 0`. Absolute tolerance is 1e-10 of the
/// zero-lag value. The oscillatory tail is summed over half-periods of
/// `cos(omega tau)` with iterated averaging of the alternating partial sums.
pub fn theoretical_autocovariance(params: &SpectrumParams, tau: f64) -> Result<f64> {
    params.validate()?;
    params.require_regularized()?;
    if !tau.is_finite() {
        return Err(Error::InvalidParameter("tau must be finite".into()));
    }
    let tau = tau.abs();
    // Work with the raw folded integral Int_0^inf cos(omega tau) S d omega,
    // which equals pi * C(tau).
    let tol = 1e-10 * PI * params.c0_closed_form();
    let f = |w: f64| (w * tau).cos() * spectral_density(params, w);

    if tau == 0.0 {
        // Monotone integrand: head quadrature plus an analytic series tail.
        let w0 = 1e4 * params.gamma_relax;
        let head = adaptive_simpson(&f, 0.0, w0, 0.5 * tol)?;
        let a = params.kappa.powf(params.p - 1.0);
        let gp = params.gamma_relax.powf(params.p);
        let mut tail = 0.0;
        let mut sign = 1.0;
        for m in 0..4 {
            let q = params.p * (m as f64 + 1.0) - 1.0;
            tail += sign * a * gp.powi(m) * w0.powf(-q) / q;
            sign = -sign;
        }
        return Ok((head.value + tail) / PI);
    }

    // Zeros of cos(omega tau) bound the alternating half-period terms.
    let zero = |j: usize| (j as f64 + 0.5) * PI / tau;
    let head = adaptive_simpson(&f, 0.0, zero(0), 0.25 * tol)?;
    let term_tol = tol / 512.0;

    let mut sum = head.value;
    let mut partials: Vec<f64> = Vec::with_capacity(48);
    let mut prev = f64::NAN;
    let mut stable = 0usize;
    let mut achieved = f64::INFINITY;
    for j in 0..20_000usize {
        let t = adaptive_simpson(&f, zero(j), zero(j + 1), term_tol)?;
        sum += t.value;
        if partials.len() == 48 {
            partials.remove(0);
        }
        partials.push(sum);
        if partials.len() >= 8 {
            let e = euler_average(&partials);
            achieved = (e - prev).abs();
            if achieved <= 0.25 * tol {
                stable += 1;
                if stable >= 2 {
                    return Ok(e / PI);
                }
            } else {
                stable = 0;
            }
            prev = e;
        }
    }
    Err(Error::Quadrature {
        achieved,
        requested: tol,
    })
}

/// Iterated pairwise averaging of partial sums of an alternating series.
fn euler_average(partials: &[f64]) -> f64 {
    let mut row = partials.to_vec();
    while row.len() > 1 {
        for i in 0..row.len() - 1 {
            row[i] = 0.5 * (row[i] + row[i + 1]);
        }
        row.pop();
    }
    row[0]
}

/// Standard-normal draw pairs feeding the synthesis, one pair per frequency
/// bin of the padded grid.
#[derive(Debug, Clone)]
pub struct NoiseDraws {
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    /// Seed label carried into the trajectory (0 when draws are handmade).
    pub seed: u64,
}

impl NoiseDraws {
    /// Draws for a synthesis of `n` samples from a dedicated seeded stream:
    /// all of `z1` first, then all of `z2`.
    pub fn from_seed(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = Self::sample(n, &mut rng);
        d.seed = seed;
        d
    }

    /// Draws from a caller-supplied generator (same order as `from_seed`).
    pub fn sample<R: Rng>(n: usize, rng: &mut R) -> Self {
        let len = padded_len(n);
        let z1 = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let z2 = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        NoiseDraws { z1, z2, seed: 0 }
    }

    pub fn from_parts(z1: Vec<f64>, z2: Vec<f64>) -> Result<Self> {
        if z1.len() != z2.len() {
            return Err(Error::InvalidParameter(
                "noise draw vectors must have equal length".into(),
            ));
        }
        Ok(NoiseDraws { z1, z2, seed: 0 })
    }

    pub fn len(&self) -> usize {
        self.z1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z1.is_empty()
    }
}

/// FFT length backing a synthesis of `n` samples (next power of two).
pub fn padded_len(n: usize) -> usize {
    n.next_power_of_two()
}

/// A sampled phase trajectory.
#[derive(Debug, Clone)]
pub struct PhaseTrajectory {
    pub dt: f64,
    pub values: Vec<f64>,
    /// Seed of the draw stream that produced it (0 for handmade draws).
    pub seed: u64,
}

impl PhaseTrajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// Lag-`lag` sample autocovariance. The process is zero-mean by
    /// construction, so no mean is subtracted (the random DC component is
    /// part of the covariance).
    pub fn sample_autocovariance(&self, lag: usize) -> f64 {
        let n = self.values.len();
        assert!(lag < n, "lag {lag} out of range for length {n}");
        let mut acc = 0.0;
        for i in 0..n - lag {
            acc += self.values[i] * self.values[i + lag];
        }
        acc / (n - lag) as f64
    }

    /// Write `t,phi` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,phi")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e}", self.time(i), v)?;
        }
        Ok(())
    }
}

/// Synthesize `n` phase samples with spacing `dt` from the given draws.
///
/// The synthesis runs on the padded power-of-two grid of `padded_len(n)`
/// bins with `omega_k = k * domega`, `domega * dt = 2 pi / len`; the first
/// `n` samples are returned. The zero bin uses half of `z1[0]` and drops
/// `z2[0]` so the sequence is real with the correct variance.
pub fn generate_phase(
    params: &SpectrumParams,
    n: usize,
    dt: f64,
    draws: &NoiseDraws,
) -> Result<PhaseTrajectory> {
    params.validate()?;
    params.require_regularized()?;
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "trajectory length must be at least 2, got {n}"
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sample spacing dt must be positive, got {dt}"
        )));
    }
    let len = padded_len(n);
    if draws.len() != len {
        return Err(Error::InvalidParameter(format!(
            "need {len} draw pairs for {n} samples (padded FFT grid), got {}",
            draws.len()
        )));
    }

    let domega = 2.0 * PI / (len as f64 * dt);
    let mut buf: Vec<Complex64> = Vec::with_capacity(len);
    for k in 0..len {
        let amp = spectral_density(params, k as f64 * domega).sqrt();
        let z1 = if k == 0 { 0.5 * draws.z1[0] } else { draws.z1[k] };
        let z2 = if k == 0 { 0.0 } else { draws.z2[k] };
        buf.push(Complex64::new(amp * z1, amp * z2));
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);

    let scale = (2.0 / (len as f64 * dt)).sqrt();
    let values = buf[..n].iter().map(|c| scale * c.re).collect();
    Ok(PhaseTrajectory {
        dt,
        values,
        seed: draws.seed,
    })
}

/// Seeded convenience wrapper; same `(params, n, dt, seed)` always yields a
/// bit-identical trajectory.
pub fn generate_phase_seeded(
    params: &SpectrumParams,
    n: usize,
    dt: f64,
    seed: u64,
) -> Result<PhaseTrajectory> {
    generate_phase(params, n, dt, &NoiseDraws::from_seed(n, seed))
}

/// Periodogram `P_k = dt/n |FFT(phi)_k|^2` for bins `k = 0..n/2`, returned
/// as `(omega_k, power)`. Its expectation for synthesized trajectories is
/// `S(omega_k) + S(omega_{n-k})`, essentially `S(omega_k)` away from the
/// grid edges.
pub fn periodogram(traj: &PhaseTrajectory) -> Vec<(f64, f64)> {
    let n = traj.values.len();
    let mut buf: Vec<Complex64> = traj
        .values
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let domega = 2.0 * PI / (n as f64 * traj.dt);
    let scale = traj.dt / n as f64;
    buf[..=n / 2]
        .iter()
        .enumerate()
        .map(|(k, c)| (k as f64 * domega, scale * c.norm_sqr()))
        .collect()
}
