//! Adaptive Gauss–Kronrod integration over the half line.

use std::f64::consts::FRAC_PI_2;

use gkquad::single::Integrator;
use gkquad::{RuntimeError, Tolerance};

use crate::{Error, Result};

const ABS_TOL: f64 = 1e-15;
const REL_TOL: f64 = 1e-13;
/// Accepted relative error when the integrator stops on roundoff before
/// reaching `REL_TOL`.
const ROUNDOFF_ACCEPT: f64 = 1e-10;
const MAX_SUBRANGES: usize = 500;

/// Integrates `f` over `[0, ∞)` using the substitution `s = m·tan²θ`, which
/// maps the half line onto `[0, π/2)`. `m` should be comparable to the
/// smallest length scale of the integrand (e.g. the smallest squared axis).
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, m: f64) -> Result<f64> {
    let g = |theta: f64| {
        let t = theta.tan();
        let c = theta.cos();
        let s = m * t * t;
        let jac = 2.0 * m * t / (c * c);
        let v = f(s) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let res = Integrator::new(g)
        .tolerance(Tolerance::AbsAndRel(ABS_TOL, REL_TOL))
        .max_iters(MAX_SUBRANGES)
        .run(0.0..FRAC_PI_2);
    match res.err() {
        None => res.estimate().map_err(|e| Error::Quadrature(format!("{e:?}"))),
        Some(RuntimeError::RoundoffError) => {
            // SAFETY: the unchecked accessors only skip the error flag; the
            // estimate is used when its own error bound is small enough.
            let (est, delta) = unsafe { res.estimate_delta_unchecked() };
            if est.is_finite() && delta <= ROUNDOFF_ACCEPT * est.abs() + ABS_TOL {
                Ok(est)
            } else {
                Err(Error::Quadrature(format!("roundoff limited: {est} ± {delta}")))
            }
        }
        Some(e) => Err(Error::Quadrature(format!("{e:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_tail() {
        // ∫₀^∞ (1+s)^(-3/2) ds = 2
        let v = integrate_half_line(|s| (1.0 + s).powf(-1.5), 1.0).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        // ∫₀^∞ (1+s)^(-7/2) ds = 2/5
        let v = integrate_half_line(|s| (1.0 + s).powf(-3.5), 0.3).unwrap();
        assert!((v - 0.4).abs() < 1e-12);
    }

    #[test]
    fn exponential_decay() {
        let v = integrate_half_line(|s| (-s).exp(), 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }
}
