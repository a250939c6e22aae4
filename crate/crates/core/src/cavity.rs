//! Squeezed-cavity beam model and the exact one-step integrator.
//!
//! The beam is produced by a parametric cavity of linewidth `gamma` and
//! squeezing parameter `r`, carrying a coherent amplitude `amplitude` (E).
//! Inside one feedback interval the intracavity quadratures obey linear
//! SDEs with quadrature-dependent decay rates `gamma (1 +/- eps) / 2`,
//! `eps = (e^r - 1)/(e^r + 1)`, and the homodyne record integrates the
//! output field. Because the step dynamics are linear and Gaussian, the
//! joint law of the post-step state and the integrated photocurrent is
//! known in closed form; `StepCoefficients` holds that law so a step of
//! any size is sampled exactly, with no discretization error.
//!
//! Per quadrature the step involves two correlated Gaussian integrals of
//! one driving Wiener process: the cavity-filtered noise `chi` (which also
//! enters the next state) and the directly transmitted noise. The latter
//! is decomposed into its projection `lambda * chi` plus an independent
//! remainder `omega`, so sampling needs only independent normals.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Cavity linewidth (output coupling rate).
    pub gamma: f64,
    /// Squeezing parameter of the intracavity pump.
    pub r: f64,
    /// Coherent carrier amplitude E.
    pub amplitude: f64,
}

/// Squeezing asymmetry `eps = (e^r - 1)/(e^r + 1)`.
#[inline]
pub fn epsilon_from_r(r: f64) -> f64 {
    let er = r.exp();
    (er - 1.0) / (er + 1.0)
}

/// Total photon flux of the beam: coherent part `E^2/4` plus the squeezing
/// cost `(gamma/2) sinh^2(r/2)`.
#[inline]
pub fn photon_flux(gamma: f64, r: f64, amplitude: f64) -> f64 {
    amplitude * amplitude / 4.0 + gamma / 2.0 * (r / 2.0).sinh().powi(2)
}

/// Coherent amplitude that fills the flux budget after the squeezing cost:
/// `E = 2 sqrt(flux - (gamma/2) sinh^2(r/2))`. Errors when the squeezing
/// alone already exceeds the budget.
pub fn amplitude_from_flux(gamma: f64, r: f64, flux: f64) -> Result<f64> {
    let cost = gamma / 2.0 * (r / 2.0).sinh().powi(2);
    let coherent = flux - cost;
    if coherent < 0.0 {
        return Err(Error::FluxBudget {
            flux,
            gamma,
            r,
            squeezing_cost: cost,
        });
    }
    Ok(2.0 * coherent.sqrt())
}

impl CavityParams {
    pub fn new(gamma: f64, r: f64, amplitude: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "squeezing r must be nonnegative, got {r}"
            )));
        }
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "amplitude must be nonnegative, got {amplitude}"
            )));
        }
        Ok(CavityParams {
            gamma,
            r,
            amplitude,
        })
    }

    /// Build from a total photon flux instead of an explicit amplitude.
    pub fn from_flux(gamma: f64, r: f64, flux: f64) -> Result<Self> {
        let amplitude = amplitude_from_flux(gamma, r, flux)?;
        Self::new(gamma, r, amplitude)
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_from_r(self.r)
    }

    pub fn photon_flux(&self) -> f64 {
        photon_flux(self.gamma, self.r, self.amplitude)
    }
}

/// Intracavity quadratures (x is the squeezed one for r > 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityState {
    pub x: f64,
    pub y: f64,
}

impl CavityState {
    /// Draw from the stationary distribution: `Var(x) = 1/(1+eps)`,
    /// `Var(y) = 1/(1-eps)`, zero mean. Draws x then y.
    pub fn stationary<R: Rng>(params: &CavityParams, rng: &mut R) -> Self {
        let eps = params.epsilon();
        let gx: f64 = rng.sample(StandardNormal);
        let gy: f64 = rng.sample(StandardNormal);
        CavityState {
            x: gx * (1.0 / (1.0 + eps)).sqrt(),
            y: gy * (1.0 / (1.0 - eps)).sqrt(),
        }
    }
}

/// Closed-form law of one integration step of size `dt`.
///
/// Per quadrature q in {x, y} with rate `g_q = gamma (1 +/- eps)`:
///
/// ```text
/// q'      = decay_q * q + sqrt(gamma) * chi_q
/// bracket = m_q1 * q + m_q2 * chi_q + omega_q   (+ E dt on y)
/// dQ      = cos(theta - phi) * bracket_x + sin(theta - phi) * bracket_y
/// ```
///
/// `chi_q` and `omega_q` are independent zero-mean Gaussians with the
/// variances below; `lambda_q` is the regression coefficient of the direct
/// transmission noise on `chi_q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub dt: f64,
    pub decay_x: f64,
    pub decay_y: f64,
    pub m_x1: f64,
    pub m_y1: f64,
    pub m_x2: f64,
    pub m_y2: f64,
    pub var_chi_x: f64,
    pub var_chi_y: f64,
    pub var_omega_x: f64,
    pub var_omega_y: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub sqrt_gamma: f64,
    /// Carrier term `E * dt` entering the y bracket.
    pub drive: f64,
    sd_chi_x: f64,
    sd_chi_y: f64,
    sd_omega_x: f64,
    sd_omega_y: f64,
}

impl StepCoefficients {
    pub fn new(params: &CavityParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step size dt must be positive, got {dt}"
            )));
        }
        let gamma = params.gamma;
        let eps = params.epsilon();
        let emr = (-params.r).exp();
        let epr = params.r.exp();

        let decay_x = (-gamma * (1.0 + eps) * dt / 2.0).exp();
        let decay_y = (-gamma * (1.0 - eps) * dt / 2.0).exp();

        let m_x1 = (emr + 1.0) * (1.0 - decay_x) / gamma.sqrt();
        let m_y1 = (epr + 1.0) * (1.0 - decay_y) / gamma.sqrt();

        let var_chi_x = (emr + 1.0) * (1.0 - decay_x * decay_x) / (2.0 * gamma);
        let var_chi_y = (epr + 1.0) * (1.0 - decay_y * decay_y) / (2.0 * gamma);

        // covariance of chi with the direct transmission noise psi,
        // Var(psi_x) = e^{-2r} dt, Var(psi_y) = e^{2r} dt
        let cov_x = emr * (emr + 1.0) * (1.0 - decay_x) / gamma;
        let cov_y = epr * (epr + 1.0) * (1.0 - decay_y) / gamma;
        let lambda_x = cov_x / var_chi_x;
        let lambda_y = cov_y / var_chi_y;

        // nonnegative up to rounding; clamp the cancellation residue
        let var_omega_x = (emr * emr * dt - lambda_x * cov_x).max(0.0);
        let var_omega_y = (epr * epr * dt - lambda_y * cov_y).max(0.0);

        let m_x2 = lambda_x - emr - 1.0;
        let m_y2 = lambda_y - epr - 1.0;

        Ok(StepCoefficients {
            dt,
            decay_x,
            decay_y,
            m_x1,
            m_y1,
            m_x2,
            m_y2,
            var_chi_x,
            var_chi_y,
            var_omega_x,
            var_omega_y,
            lambda_x,
            lambda_y,
            sqrt_gamma: gamma.sqrt(),
            drive: params.amplitude * dt,
            sd_chi_x: var_chi_x.sqrt(),
            sd_chi_y: var_chi_y.sqrt(),
            sd_omega_x: var_omega_x.sqrt(),
            sd_omega_y: var_omega_y.sqrt(),
        })
    }
}

/// The four Gaussian draws of one exact step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepNoise {
    pub chi_x: f64,
    pub chi_y: f64,
    pub omega_x: f64,
    pub omega_y: f64,
}

/// Sample the step noises. The x channel draws chi then omega from `rng_x`,
/// the y channel likewise from `rng_y`, so the two quadratures can sit on
/// separate counter-based streams.
pub fn sample_step_noise<R: Rng>(
    coeffs: &StepCoefficients,
    rng_x: &mut R,
    rng_y: &mut R,
) -> StepNoise {
    let gx: f64 = rng_x.sample(StandardNormal);
    let gox: f64 = rng_x.sample(StandardNormal);
    let gy: f64 = rng_y.sample(StandardNormal);
    let goy: f64 = rng_y.sample(StandardNormal);
    StepNoise {
        chi_x: coeffs.sd_chi_x * gx,
        chi_y: coeffs.sd_chi_y * gy,
        omega_x: coeffs.sd_omega_x * gox,
        omega_y: coeffs.sd_omega_y * goy,
    }
}

/// Advance the intracavity state by one step.
#[inline]
pub fn advance_cavity(
    coeffs: &StepCoefficients,
    state: &CavityState,
    noise: &StepNoise,
) -> CavityState {
    CavityState {
        x: coeffs.decay_x * state.x + coeffs.sqrt_gamma * noise.chi_x,
        y: coeffs.decay_y * state.y + coeffs.sqrt_gamma * noise.chi_y,
    }
}

/// Integrated homodyne increment over the step, for local-oscillator angle
/// `theta` relative to the instantaneous beam phase `phi` (`angle` is
/// `theta - phi`). Uses the pre-step state together with the same noises
/// that advance it.
#[inline]
pub fn measurement_increment(
    coeffs: &StepCoefficients,
    state: &CavityState,
    noise: &StepNoise,
    angle: f64,
) -> f64 {
    let bracket_x = coeffs.m_x1 * state.x + coeffs.m_x2 * noise.chi_x + noise.omega_x;
    let bracket_y =
        coeffs.m_y1 * state.y + coeffs.drive + coeffs.m_y2 * noise.chi_y + noise.omega_y;
    angle.cos() * bracket_x + angle.sin() * bracket_y
}

/// One Euler-Maruyama substep of the same model, for cross-validation of
/// the exact step. The Wiener increment of each quadrature is shared
/// between the state update and the photocurrent, as in the continuous
/// model where the output field interferes with the input.
pub fn euler_reference_step<R: Rng>(
    params: &CavityParams,
    state: &CavityState,
    angle: f64,
    dt: f64,
    rng: &mut R,
) -> (CavityState, f64) {
    let eps = params.epsilon();
    let sg = params.gamma.sqrt();
    let sdt = dt.sqrt();
    let dw_x: f64 = rng.sample::<f64, _>(StandardNormal) * sdt;
    let dw_y: f64 = rng.sample::<f64, _>(StandardNormal) * sdt;
    let next = CavityState {
        x: state.x - state.x * params.gamma * (1.0 + eps) * dt / 2.0 + sg * dw_x,
        y: state.y - state.y * params.gamma * (1.0 - eps) * dt / 2.0 + sg * dw_y,
    };
    let di = angle.cos() * (sg * state.x * dt - dw_x)
        + angle.sin() * ((sg * state.y + params.amplitude) * dt - dw_y);
    (next, di)
}
