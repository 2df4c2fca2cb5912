//! Interior shape integrals of an ellipsoid.
//!
//! With Δ(s) = √((a₁²+s)(a₂²+s)(a₃²+s)) and the prefactor a₁a₂a₃/2,
//!
//! ```text
//! I       = a₁a₂a₃/2 ∫₀^∞ ds / Δ
//! I_i     = a₁a₂a₃/2 ∫₀^∞ ds / ((a_i²+s) Δ)
//! I_ij    = a₁a₂a₃/2 ∫₀^∞ ds / ((a_i²+s)(a_j²+s) Δ)
//! I_ijk   = a₁a₂a₃/2 ∫₀^∞ ds / ((a_i²+s)(a_j²+s)(a_k²+s) Δ)
//! ```
//!
//! so that I₁+I₂+I₃ = 1 and a unit sphere has I = 1.

use serde::{Deserialize, Serialize};

use crate::quadrature::integrate_half_line;
use crate::{Error, Result};

/// Relative axis difference below which two axes count as repeated.
pub const REPEATED_AXIS_TOL: f64 = 1e-9;
/// Relative axis difference below which a divided difference loses too many
/// digits; such entries come from direct quadrature instead.
const CONDITIONING_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidAxes {
    pub a: [f64; 3],
}

impl EllipsoidAxes {
    pub fn new(a1: f64, a2: f64, a3: f64) -> Result<Self> {
        let a = [a1, a2, a3];
        if a.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain(format!("semi-axes must be positive, got {a:?}")));
        }
        Ok(Self { a })
    }

    pub fn sphere(r: f64) -> Result<Self> {
        Self::new(r, r, r)
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.a[0] * self.a[1] * self.a[2]
    }

    fn sq(&self, i: usize) -> f64 {
        self.a[i] * self.a[i]
    }

    fn rel_diff(&self, i: usize, j: usize) -> f64 {
        (self.a[i] - self.a[j]).abs() / self.a[i].max(self.a[j])
    }

    fn is_sphere(&self) -> bool {
        self.rel_diff(0, 1) <= REPEATED_AXIS_TOL
            && self.rel_diff(1, 2) <= REPEATED_AXIS_TOL
            && self.rel_diff(0, 2) <= REPEATED_AXIS_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IIntegralTable {
    pub i0: f64,
    pub i: [f64; 3],
    pub ij: [[f64; 3]; 3],
    pub ijk: [[[f64; 3]; 3]; 3],
}

/// Direct quadrature of the integral with extra factors 1/(a_k²+s) for each
/// k in `idx` (empty = I, one = I_i, ...).
pub fn direct_integral(axes: &EllipsoidAxes, idx: &[usize]) -> Result<f64> {
    let sq = [axes.sq(0), axes.sq(1), axes.sq(2)];
    let m = sq.iter().cloned().fold(f64::INFINITY, f64::min);
    let f = |s: f64| {
        let delta = ((sq[0] + s) * (sq[1] + s) * (sq[2] + s)).sqrt();
        let extra: f64 = idx.iter().map(|&k| sq[k] + s).product();
        1.0 / (delta * extra)
    };
    let p = 0.5 * axes.a[0] * axes.a[1] * axes.a[2];
    Ok(p * integrate_half_line(f, m)?)
}

/// a₁a₂a₃/2 ∫₀^∞ s ds / ((a_i²+s)(a_j²+s) Δ), the integral without a
/// recurrence that appears in the mixed quartic coefficients.
pub fn cross_integral(axes: &EllipsoidAxes, i: usize, j: usize) -> Result<f64> {
    let sq = [axes.sq(0), axes.sq(1), axes.sq(2)];
    if axes.is_sphere() {
        // ∫ s (a²+s)^(-7/2) ds = 4/(15 a³)
        return Ok(2.0 / 15.0);
    }
    let m = sq.iter().cloned().fold(f64::INFINITY, f64::min);
    let f = |s: f64| {
        let delta = ((sq[0] + s) * (sq[1] + s) * (sq[2] + s)).sqrt();
        s / ((sq[i] + s) * (sq[j] + s) * delta)
    };
    let p = 0.5 * axes.a[0] * axes.a[1] * axes.a[2];
    Ok(p * integrate_half_line(f, m)?)
}

fn sphere_table(r: f64) -> IIntegralTable {
    // a³/2 ∫ (a²+s)^(-(2m+3)/2) ds = a^(2-2m)/(2m+1)
    let r2 = r * r;
    IIntegralTable {
        i0: r2,
        i: [1.0 / 3.0; 3],
        ij: [[1.0 / (5.0 * r2); 3]; 3],
        ijk: [[[1.0 / (7.0 * r2 * r2); 3]; 3]; 3],
    }
}

/// All shape integrals of `axes`. I and I_i come from quadrature, the rest
/// from the standard recurrences; entries whose divided difference would be
/// ill-conditioned (nearly equal axes) are integrated directly.
pub fn compute_i_integrals(axes: &EllipsoidAxes) -> Result<IIntegralTable> {
    if axes.is_sphere() {
        let r = (axes.a[0] * axes.a[1] * axes.a[2]).cbrt();
        return Ok(sphere_table(r));
    }
    let sq = |i: usize| axes.sq(i);
    let close = |i: usize, j: usize| axes.rel_diff(i, j) <= CONDITIONING_TOL;

    let i0 = direct_integral(axes, &[])?;
    let mut ii = [0.0; 3];
    for (k, v) in ii.iter_mut().enumerate() {
        *v = direct_integral(axes, &[k])?;
    }

    let mut ij = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in (i + 1)..3 {
            let v = if close(i, j) {
                direct_integral(axes, &[i, j])?
            } else {
                (ii[j] - ii[i]) / (sq(i) - sq(j))
            };
            ij[i][j] = v;
            ij[j][i] = v;
        }
    }
    for i in 0..3 {
        let off: f64 = (0..3).filter(|&q| q != i).map(|q| ij[i][q]).sum();
        ij[i][i] = (1.0 / sq(i) - off) / 3.0;
    }

    let mut ijk = [[[0.0; 3]; 3]; 3];
    let set = |t: &mut [[[f64; 3]; 3]; 3], i: usize, j: usize, k: usize, v: f64| {
        for (p, q, r) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
            t[p][q][r] = v;
        }
    };
    // I_123
    let v123 = if !close(0, 1) {
        (ij[1][2] - ij[0][2]) / (sq(0) - sq(1))
    } else if !close(1, 2) {
        (ij[2][0] - ij[1][0]) / (sq(1) - sq(2))
    } else if !close(0, 2) {
        (ij[2][1] - ij[0][1]) / (sq(0) - sq(2))
    } else {
        direct_integral(axes, &[0, 1, 2])?
    };
    set(&mut ijk, 0, 1, 2, v123);
    // I_iij
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let v = if close(i, j) {
                direct_integral(axes, &[i, i, j])?
            } else {
                (ij[i][j] - ij[i][i]) / (sq(i) - sq(j))
            };
            set(&mut ijk, i, i, j, v);
        }
    }
    for i in 0..3 {
        let off: f64 = (0..3).filter(|&q| q != i).map(|q| ijk[i][i][q]).sum();
        ijk[i][i][i] = (1.0 / (sq(i) * sq(i)) - off) / 5.0;
    }
    Ok(IIntegralTable { i0, i: ii, ij, ijk })
}

/// Largest violation of the recurrence identities by `t`, each measured
/// relative to the magnitude of the entry it defines (the first identity,
/// I₁+I₂+I₃ = 1, is absolute).
pub fn recurrence_residual(axes: &EllipsoidAxes, t: &IIntegralTable) -> f64 {
    let sq = |i: usize| axes.sq(i);
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let mut worst = (t.i.iter().sum::<f64>() - 1.0).abs();
    for i in 0..3 {
        for j in 0..3 {
            if i != j && axes.rel_diff(i, j) > REPEATED_AXIS_TOL {
                worst = worst.max(rel(t.ij[i][j], (t.i[j] - t.i[i]) / (sq(i) - sq(j))));
                worst = worst.max(rel(t.ijk[i][i][j], (t.ij[i][j] - t.ij[i][i]) / (sq(i) - sq(j))));
                let k = 3 - i - j;
                worst = worst.max(rel(t.ijk[i][j][k], (t.ij[j][k] - t.ij[i][k]) / (sq(i) - sq(j))));
            }
        }
        let off: f64 = (0..3).filter(|&q| q != i).map(|q| t.ij[i][q]).sum();
        worst = worst.max(rel(t.ij[i][i], (1.0 / sq(i) - off) / 3.0));
        let off: f64 = (0..3).filter(|&q| q != i).map(|q| t.ijk[i][i][q]).sum();
        worst = worst.max(rel(t.ijk[i][i][i], (1.0 / (sq(i) * sq(i)) - off) / 5.0));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_sphere_values() {
        let t = compute_i_integrals(&EllipsoidAxes::sphere(1.0).unwrap()).unwrap();
        assert_eq!(t.i0, 1.0);
        assert!(t.i.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(t.ij.iter().flatten().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn sphere_closed_form_matches_quadrature() {
        let ax = EllipsoidAxes::sphere(1.7).unwrap();
        let t = compute_i_integrals(&ax).unwrap();
        assert!((direct_integral(&ax, &[]).unwrap() - t.i0).abs() < 1e-12);
        assert!((direct_integral(&ax, &[1, 2]).unwrap() - t.ij[1][2]).abs() < 1e-12);
        assert!((direct_integral(&ax, &[0, 1, 2]).unwrap() - t.ijk[0][1][2]).abs() < 1e-12);
        assert!(
            (cross_integral(&EllipsoidAxes::new(1.7, 1.7, 1.7 + 1e-6).unwrap(), 0, 1).unwrap() - 2.0 / 15.0).abs()
                < 1e-6
        );
    }

    #[test]
    fn distinct_axes_match_direct_quadrature() {
        let ax = EllipsoidAxes::new(1.0, 1.3, 1.7).unwrap();
        let t = compute_i_integrals(&ax).unwrap();
        assert!((t.i.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let d = direct_integral(&ax, &[i, j]).unwrap();
                assert!((t.ij[i][j] - d).abs() <= 1e-9 * d.abs());
                for k in 0..3 {
                    let d = direct_integral(&ax, &[i, j, k]).unwrap();
                    assert!((t.ijk[i][j][k] - d).abs() <= 1e-8 * d.abs(), "{i}{j}{k}");
                }
            }
        }
        assert!(recurrence_residual(&ax, &t) < 1e-10);
    }

    #[test]
    fn spheroid_uses_direct_entries() {
        let ax = EllipsoidAxes::new(1.0, 1.0, 0.5).unwrap();
        let t = compute_i_integrals(&ax).unwrap();
        let d = direct_integral(&ax, &[0, 1]).unwrap();
        assert!((t.ij[0][1] - d).abs() < 1e-13);
        assert!((t.i.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_axes() {
        assert!(EllipsoidAxes::new(1.0, 0.0, 1.0).is_err());
        assert!(EllipsoidAxes::new(1.0, -2.0, 1.0).is_err());
    }
}
