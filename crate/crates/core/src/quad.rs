//! Adaptive quadrature on a finite interval.
//!
//! Small self-contained integrator used for spectral integrals and for the
//! test oracles that cross-check the closed-form step coefficients. Classic
//! adaptive Simpson with Richardson extrapolation and a per-segment error
//! budget.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    /// Accumulated error estimate (absolute).
    pub error: f64,
    pub evaluations: usize,
}

const MAX_DEPTH: u32 = 60;

/// Integrate `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// Returns `Error::Quadrature` when the requested tolerance could not be
/// certified, with the achieved error estimate attached.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<Quadrature> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(
            "quadrature interval must be finite".into(),
        ));
    }
    if !(abs_tol > 0.0) {
        return Err(Error::InvalidParameter(
            "quadrature tolerance must be positive".into(),
        ));
    }
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (a, b, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    struct Seg {
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        s: f64,
        tol: f64,
        depth: u32,
    }

    let simpson = |fa: f64, fm: f64, fb: f64, h: f64| (fa + 4.0 * fm + fb) * h / 6.0;

    let mut evals = 3usize;
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let mut stack = vec![Seg {
        a,
        b,
        fa,
        fm,
        fb,
        s: simpson(fa, fm, fb, b - a),
        tol: abs_tol,
        depth: 0,
    }];

    let mut value = 0.0;
    let mut err = 0.0;
    while let Some(seg) = stack.pop() {
        let m = 0.5 * (seg.a + seg.b);
        let lm = 0.5 * (seg.a + m);
        let rm = 0.5 * (m + seg.b);
        let flm = f(lm);
        let frm = f(rm);
        evals += 2;
        let h = m - seg.a;
        let sl = simpson(seg.fa, flm, seg.fm, h);
        let sr = simpson(seg.fm, frm, seg.fb, h);
        let delta = sl + sr - seg.s;
        if delta.abs() <= 15.0 * seg.tol || seg.depth >= MAX_DEPTH {
            value += sl + sr + delta / 15.0;
            err += delta.abs() / 15.0;
        } else {
            let tol = 0.5 * seg.tol;
            stack.push(Seg {
                a: seg.a,
                b: m,
                fa: seg.fa,
                fm: flm,
                fb: seg.fm,
                s: sl,
                tol,
                depth: seg.depth + 1,
            });
            stack.push(Seg {
                a: m,
                b: seg.b,
                fa: seg.fm,
                fm: frm,
                fb: seg.fb,
                s: sr,
                tol,
                depth: seg.depth + 1,
            });
        }
    }

    if err > abs_tol {
        return Err(Error::Quadrature {
            achieved: err,
            requested: abs_tol,
        });
    }
    Ok(Quadrature {
        value: sign * value,
        error: err,
        evaluations: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_near_exact() {
        let q = adaptive_simpson(|x| x * x, 0.0, 1.0, 1e-12).unwrap();
        assert!((q.value - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sine_over_half_period() {
        let q = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((q.value - 2.0).abs() < 1e-11);
    }

    #[test]
    fn reversed_interval_negates() {
        let q = adaptive_simpson(|x| x, 1.0, 0.0, 1e-12).unwrap();
        assert!((q.value + 0.5).abs() < 1e-13);
    }

    #[test]
    fn lorentzian_matches_arctangent() {
        let gamma: f64 = 0.1;
        let w = 1e4;
        let q = adaptive_simpson(|x| 1.0 / (x * x + gamma * gamma), 0.0, w, 1e-10).unwrap();
        let exact = (w / gamma).atan() / gamma;
        assert!((q.value - exact).abs() < 1e-9, "diff {}", q.value - exact);
    }

    #[test]
    fn oscillatory_segment_converges() {
        // one full period integrates to ~0
        let q = adaptive_simpson(|x| (10.0 * x).cos(), 0.0, 2.0 * std::f64::consts::PI / 10.0, 1e-12)
            .unwrap();
        assert!(q.value.abs() < 1e-12);
    }

    #[test]
    fn square_root_singularity_reports_nonconvergence() {
        let r = adaptive_simpson(|x| x.abs().powf(-0.5), 1e-300, 1.0, 1e-15);
        match r {
            Err(Error::Quadrature { achieved, requested }) => {
                assert!(achieved > requested);
            }
            Ok(q) => panic!("expected non-convergence, got value {} err {}", q.value, q.error),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn zero_width_interval() {
        let q = adaptive_simpson(|x| x, 2.0, 2.0, 1e-12).unwrap();
        assert_eq!(q.value, 0.0);
    }
}
