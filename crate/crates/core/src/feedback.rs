//! Exponentially-weighted measurement filters and local-oscillator control.
//!
//! Two complex accumulators digest the homodyne record: `a` weights the
//! photocurrent increments by the LO direction `e^{i theta}`, `b` tracks
//! the LO second harmonic. Their combination `c = a + chi b a*` yields the
//! running phase estimate `arg c`; the LO phase blends `arg c` with
//! `arg a` (weight `delta`) to break the pi ambiguity of near-noiseless
//! homodyne feedback.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wrap_angle;

/// Forgetting scheme of the accumulators. `Linearized` is the production
/// form (valid for `chi dt << 1`, the step rule keeps it at 1e-3);
/// `Exponential` integrates the decay exactly and exists for
/// cross-checking, since either choice defines a valid measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Forgetting {
    #[default]
    Linearized,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    /// Weighted signal functional.
    pub a: Complex64,
    /// Weighted LO functional, |b| <= 1/chi along any trajectory.
    pub b: Complex64,
    /// Memory rate of the exponential window.
    pub chi: f64,
    /// Blend weight pulling the LO phase from arg(c) toward arg(a).
    pub delta: f64,
    /// Current LO phase, applied to the next measurement interval.
    pub theta: f64,
    pub forgetting: Forgetting,
}

impl FilterState {
    pub fn new(chi: f64, delta: f64) -> Result<Self> {
        if !(chi > 0.0) || !chi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "filter memory rate chi must be positive, got {chi}"
            )));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!(
                "blend delta must lie in [0, 1], got {delta}"
            )));
        }
        Ok(FilterState {
            a: Complex64::ZERO,
            b: Complex64::ZERO,
            chi,
            delta,
            theta: 0.0,
            forgetting: Forgetting::Linearized,
        })
    }

    pub fn with_forgetting(mut self, forgetting: Forgetting) -> Self {
        self.forgetting = forgetting;
        self
    }

    /// Fold one photocurrent increment `dq` over an interval `dt` into the
    /// accumulators, using the theta that was active during the interval.
    ///
    /// Linearized: `a' = (1 - chi dt) a + dq e^{i theta}`,
    /// `b' = (1 - chi dt) b - e^{2 i theta} dt`.
    pub fn update_filters(&mut self, dq: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() || !dq.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bad filter update: dq={dq}, dt={dt}"
            )));
        }
        let cdt = self.chi * dt;
        let dir = Complex64::cis(self.theta);
        let dir2 = Complex64::cis(2.0 * self.theta);
        match self.forgetting {
            Forgetting::Linearized => {
                if cdt >= 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "chi*dt = {cdt} >= 1 makes the linearized filter unstable"
                    )));
                }
                let keep = 1.0 - cdt;
                self.a = keep * self.a + dq * dir;
                self.b = keep * self.b - dir2 * dt;
            }
            Forgetting::Exponential => {
                let keep = (-cdt).exp();
                self.a = keep * self.a + ((1.0 - keep) / cdt) * dq * dir;
                self.b = keep * self.b - dir2 * ((1.0 - keep) / self.chi);
            }
        }
        Ok(())
    }

    /// `c = a + chi b a*`, the harmonic-corrected estimate functional.
    pub fn combined_estimate(&self) -> Complex64 {
        self.a + self.chi * self.b * self.a.conj()
    }

    /// `arg c` in (-pi, pi]; 0 when c vanishes.
    pub fn phase_estimate(&self) -> f64 {
        let c = self.combined_estimate();
        if c == Complex64::ZERO {
            0.0
        } else {
            c.arg()
        }
    }

    /// Geodesic blend `arg(a) + (1 - delta) wrap(arg(c) - arg(a))`, or
    /// `None` while a or c vanish (start-up). Equals the principal-branch
    /// `arg(c^{1-delta} a^{delta})` whenever |arg(c) - arg(a)| < pi, but
    /// never jumps by 2 pi (1 - delta) at the branch cut.
    pub fn blended_phase(&self) -> Option<f64> {
        if self.a == Complex64::ZERO {
            return None;
        }
        let c = self.combined_estimate();
        if c == Complex64::ZERO {
            return None;
        }
        let aa = self.a.arg();
        Some(wrap_angle(aa + (1.0 - self.delta) * wrap_angle(c.arg() - aa)))
    }

    /// The blend when defined, otherwise the held LO phase.
    pub fn lo_phase(&self) -> f64 {
        self.blended_phase().unwrap_or(self.theta)
    }
}
