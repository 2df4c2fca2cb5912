//! Closed-form Newtonian potential of a posed ellipsoid carrying the density
//! ρ(x′) = −|x′|². In the body frame z (x′ = Q·z + d) the potential is a
//! quartic polynomial in z whose coefficients come from the shape integrals.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::elliptic::{compute_i_integrals, cross_integral, EllipsoidAxes, IIntegralTable};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidPose {
    pub axes: EllipsoidAxes,
    /// Columns are the body axes expressed in world coordinates.
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl EllipsoidPose {
    pub fn new(axes: EllipsoidAxes, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err <= 1e-12) {
            return Err(Error::Domain(format!(
                "rotation is not orthogonal (|QᵀQ − I| = {err:e})"
            )));
        }
        Ok(Self {
            axes,
            rotation,
            translation,
        })
    }

    /// Axis-aligned ellipsoid centered at the origin.
    pub fn centered(axes: EllipsoidAxes) -> Self {
        Self {
            axes,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Body-frame coordinates z = Qᵀ(x − d).
    pub fn to_body(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (x - self.translation)
    }

    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        let z = self.to_body(x);
        (0..3).map(|i| (z[i] / self.axes.a[i]).powi(2)).sum::<f64>() <= 1.0
    }

    /// f = 2·(d·Q), i.e. f_j = 2 Σ_i d_i Q_ij.
    pub fn f(&self) -> Vector3<f64> {
        2.0 * self.rotation.transpose() * self.translation
    }
}

/// Coefficients of
/// N(z) = C_E + Σ A_i z_i + Σ B_i z_i² + H₁z₁³ + H₂z₂³ + H₃z₃³ + H₄z₁z₂² + H₅z₁z₃²
///        + H₆z₂z₁² + H₇z₂z₃² + H₈z₃z₁² + H₉z₃z₂²
///        + J₁z₁⁴ + J₂z₂⁴ + J₃z₃⁴ + J₄z₁²z₂² + J₅z₂²z₃² + J₆z₃²z₁².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonianCoefficients {
    pub c_e: f64,
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub h: [f64; 9],
    pub j: [f64; 6],
}

/// Potential coefficients for ρ(x′) = −|x′|² on the posed ellipsoid.
pub fn quadratic_density_coefficients(pose: &EllipsoidPose) -> Result<NewtonianCoefficients> {
    let ax = &pose.axes;
    let t = compute_i_integrals(ax)?;
    let a2 = [ax.a[0].powi(2), ax.a[1].powi(2), ax.a[2].powi(2)];
    let a4 = [a2[0] * a2[0], a2[1] * a2[1], a2[2] * a2[2]];
    let s2 = a2[0] + a2[1] + a2[2];
    let f = pose.f();
    let dd = pose.translation.norm_squared();
    let (i0, ii, ij) = (t.i0, t.i, t.ij);

    let c_e = (s2 * i0 - (a4[0] * ii[0] + a4[1] * ii[1] + a4[2] * ii[2])) / 8.0 + 0.5 * dd * i0;
    let a = [
        0.5 * a2[0] * ii[0] * f[0],
        0.5 * a2[1] * ii[1] * f[1],
        0.5 * a2[2] * ii[2] * f[2],
    ];
    let mut b = [0.0; 3];
    for (i, bi) in b.iter_mut().enumerate() {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        *bi = 0.75 * ij[i][i] * a4[i] + 0.25 * ij[i][j] * a4[j] + 0.25 * ij[i][k] * a4[k]
            - 0.25 * s2 * ii[i]
            - 0.5 * dd * ii[i];
    }
    let h = [
        -0.5 * a2[0] * ij[0][0] * f[0],
        -0.5 * a2[1] * ij[1][1] * f[1],
        -0.5 * a2[2] * ij[2][2] * f[2],
        -0.5 * a2[0] * ij[1][0] * f[0],
        -0.5 * a2[0] * ij[2][0] * f[0],
        -0.5 * a2[1] * ij[1][0] * f[1],
        -0.5 * a2[1] * ij[1][2] * f[1],
        -0.5 * a2[2] * ij[0][2] * f[2],
        -0.5 * a2[2] * ij[1][2] * f[2],
    ];
    let j = quartic_j(ax, &t)?;
    Ok(NewtonianCoefficients { c_e, a, b, h, j })
}

/// J₁..J₆ in the form that stays valid for repeated axes.
fn quartic_j(ax: &EllipsoidAxes, t: &IIntegralTable) -> Result<[f64; 6]> {
    let a2 = [ax.a[0].powi(2), ax.a[1].powi(2), ax.a[2].powi(2)];
    let diag = |i: usize| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        -1.0 / 6.0 + (4.0 * a2[i] + 3.0 * a2[j]) * t.ij[i][j] / 24.0 + (4.0 * a2[i] + 3.0 * a2[k]) * t.ij[i][k] / 24.0
    };
    let mixed = |i: usize, j: usize| -> Result<f64> {
        Ok(0.25 * (t.i[i] + t.i[j]) - 0.75 * (a2[i] + a2[j]) * t.ij[i][j] + 0.25 * cross_integral(ax, i, j)?)
    };
    Ok([diag(0), diag(1), diag(2), mixed(0, 1)?, mixed(1, 2)?, mixed(2, 0)?])
}

/// J₁..J₆ from the divided-difference form, valid only for distinct axes.
/// Kept as an independent cross-check of [`quadratic_density_coefficients`].
pub fn j_simple(ax: &EllipsoidAxes) -> Result<[f64; 6]> {
    let a2 = [ax.a[0].powi(2), ax.a[1].powi(2), ax.a[2].powi(2)];
    for (p, q) in [(0, 1), (1, 2), (0, 2)] {
        if (ax.a[p] - ax.a[q]).abs() <= crate::elliptic::REPEATED_AXIS_TOL * ax.a[p].max(ax.a[q]) {
            return Err(Error::Domain("divided-difference form needs distinct axes".into()));
        }
    }
    let t = compute_i_integrals(ax)?;
    let i = t.i;
    let d = |p: usize, q: usize| (i[q] - i[p]) / (a2[p] - a2[q]);
    let diag = |p: usize| {
        let (q, r) = ((p + 1) % 3, (p + 2) % 3);
        -1.0 / 6.0 + d(p, q) * (4.0 * a2[p] + 3.0 * a2[q]) / 24.0 + d(p, r) * (4.0 * a2[p] + 3.0 * a2[r]) / 24.0
    };
    let mixed = |p: usize, q: usize| {
        ((5.0 * a2[p] + 2.0 * a2[q]) * i[p] - (5.0 * a2[q] + 2.0 * a2[p]) * i[q]) / (4.0 * (a2[p] - a2[q]))
    };
    Ok([diag(0), diag(1), diag(2), mixed(0, 1), mixed(1, 2), mixed(2, 0)])
}

/// Evaluates the quartic at body-frame point `z`.
pub fn eval_polynomial_potential(c: &NewtonianCoefficients, z: &Vector3<f64>) -> f64 {
    let (z1, z2, z3) = (z[0], z[1], z[2]);
    let (q1, q2, q3) = (z1 * z1, z2 * z2, z3 * z3);
    let h = &c.h;
    let j = &c.j;
    c.c_e
        + c.a[0] * z1
        + c.a[1] * z2
        + c.a[2] * z3
        + c.b[0] * q1
        + c.b[1] * q2
        + c.b[2] * q3
        + h[0] * z1 * q1
        + h[1] * z2 * q2
        + h[2] * z3 * q3
        + h[3] * z1 * q2
        + h[4] * z1 * q3
        + h[5] * z2 * q1
        + h[6] * z2 * q3
        + h[7] * z3 * q1
        + h[8] * z3 * q2
        + j[0] * q1 * q1
        + j[1] * q2 * q2
        + j[2] * q3 * q3
        + j[3] * q1 * q2
        + j[4] * q2 * q3
        + j[5] * q3 * q1
}

/// Potential of the ρ(x′) = −|x′|² ellipsoid at world point `x` (interior).
pub fn quadratic_potential_at(pose: &EllipsoidPose, c: &NewtonianCoefficients, x: &Vector3<f64>) -> f64 {
    eval_polynomial_potential(c, &pose.to_body(x))
}

/// Interior potential of a constant density `rho`: −(ρ/2)(I − Σ I_i z_i²).
pub fn constant_density_potential(pose: &EllipsoidPose, table: &IIntegralTable, rho: f64, x: &Vector3<f64>) -> f64 {
    let z = pose.to_body(x);
    let quad: f64 = (0..3).map(|i| table.i[i] * z[i] * z[i]).sum();
    -0.5 * rho * (table.i0 - quad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpheroidFamily {
    Oblate,
    Prolate,
}

/// Closed-form J for the spheroid with axes (1, 1, e): arccos for e < 1,
/// cosh⁻¹ for e > 1.
pub fn spheroid_quartic_coeffs(e: f64, family: SpheroidFamily) -> Result<[f64; 6]> {
    if !(e.is_finite() && e > 0.0) {
        return Err(Error::Domain(format!("aspect ratio must be positive, got {e}")));
    }
    if e == 1.0 {
        return Err(Error::Domain("e = 1 is a sphere; use the general-axes path".into()));
    }
    let (root, ang, q) = match family {
        SpheroidFamily::Oblate if e < 1.0 => {
            let w = 1.0 - e * e;
            (w.sqrt(), e.acos(), w.powf(2.5))
        }
        SpheroidFamily::Prolate if e > 1.0 => {
            let w = e * e - 1.0;
            (w.sqrt(), e.acosh(), w.powf(2.5))
        }
        _ => {
            return Err(Error::Domain(format!(
                "aspect ratio {e} inconsistent with {family:?} family"
            )))
        }
    };
    let e2 = e * e;
    let lg = 3.0 * e * (3.0 + 4.0 * e2) * ang;
    let n1 = (2.0 * e2 - 23.0) * e2 * root + lg;
    let j1 = -n1 / (64.0 * q);
    let j3 = -(-(2.0 + 19.0 * e2) * root + lg) / (24.0 * q);
    let j4 = -n1 / (32.0 * q);
    let j5 = -((2.0 * e2 * e2 + 15.0 * e2 + 4.0) * root - lg) / (8.0 * q);
    Ok([j1, j1, j3, j4, j5, j5])
}

/// The quartic parts an ellipsoid potential would need to reproduce the
/// obstacle polynomial C − (1/12)Σx_k⁴ under a rotation that keeps it
/// polynomial: either −(1/12)Σz_k⁴ or one of the three 45°-rotated forms.
pub fn target_quartic_patterns() -> [[f64; 6]; 4] {
    let s = -1.0 / 12.0;
    [
        [s, s, s, 0.0, 0.0, 0.0],
        [0.5 * s, 0.5 * s, s, 3.0 * s, 0.0, 0.0],
        [0.5 * s, s, 0.5 * s, 0.0, 0.0, 3.0 * s],
        [s, 0.5 * s, 0.5 * s, 0.0, 3.0 * s, 0.0],
    ]
}

/// Smallest relative distance ‖J − P‖/‖P‖ from `j` to the target patterns.
pub fn target_pattern_mismatch(j: &[f64; 6]) -> f64 {
    target_quartic_patterns()
        .iter()
        .map(|p| {
            let num: f64 = p.iter().zip(j).map(|(a, b)| (a - b).powi(2)).sum();
            let den: f64 = p.iter().map(|a| a * a).sum();
            (num / den).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn unit_sphere() -> EllipsoidPose {
        EllipsoidPose::centered(EllipsoidAxes::sphere(1.0).unwrap())
    }

    #[test]
    fn unit_sphere_coefficients() {
        let c = quadratic_density_coefficients(&unit_sphere()).unwrap();
        for k in 0..3 {
            assert!((c.j[k] + 0.05).abs() < 1e-12);
            assert!((c.j[k + 3] + 0.1).abs() < 1e-12);
        }
        assert!((c.c_e - 0.25).abs() < 1e-14);
        assert!(c.a.iter().chain(c.h.iter()).all(|v| *v == 0.0));
        let z = Vector3::new(0.5, 0.0, 0.0);
        let expect = c.c_e + c.b[0] * 0.25 + c.j[0] * 0.0625;
        assert!((eval_polynomial_potential(&c, &z) - expect).abs() < 1e-15);
        assert_eq!(eval_polynomial_potential(&c, &Vector3::zeros()), c.c_e);
    }

    #[test]
    fn zero_translation_kills_odd_terms() {
        let rot = Rotation3::from_euler_angles(0.3, -0.7, 1.1).into_inner();
        let pose = EllipsoidPose::new(EllipsoidAxes::new(0.7, 1.2, 1.9).unwrap(), rot, Vector3::zeros()).unwrap();
        let c = quadratic_density_coefficients(&pose).unwrap();
        assert!(c.a.iter().chain(c.h.iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn j_forms_agree_for_distinct_axes() {
        let ax = EllipsoidAxes::new(1.3, 0.8, 0.6).unwrap();
        let c = quadratic_density_coefficients(&EllipsoidPose::centered(ax)).unwrap();
        let js = j_simple(&ax).unwrap();
        for k in 0..6 {
            assert!((c.j[k] - js[k]).abs() < 1e-9, "{k}: {} vs {}", c.j[k], js[k]);
        }
    }

    #[test]
    fn spheroid_closed_forms() {
        let j = spheroid_quartic_coeffs(0.5, SpheroidFamily::Oblate).unwrap();
        assert!((j[0] - j[3] / 2.0).abs() < 1e-12);
        assert!((j[2] + 0.037422).abs() < 1e-6);
        let j = spheroid_quartic_coeffs(2.0, SpheroidFamily::Prolate).unwrap();
        let g = quadratic_density_coefficients(&EllipsoidPose::centered(EllipsoidAxes::new(1.0, 1.0, 2.0).unwrap()))
            .unwrap();
        for k in 0..6 {
            assert!((j[k] - g.j[k]).abs() < 1e-9);
        }
        assert!(spheroid_quartic_coeffs(1.0, SpheroidFamily::Oblate).is_err());
        assert!(spheroid_quartic_coeffs(2.0, SpheroidFamily::Oblate).is_err());
    }

    #[test]
    fn constant_density_sphere_center() {
        let pose = unit_sphere();
        let t = compute_i_integrals(&pose.axes).unwrap();
        assert!((constant_density_potential(&pose, &t, 1.0, &Vector3::zeros()) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn sphere_is_far_from_targets() {
        let c = quadratic_density_coefficients(&unit_sphere()).unwrap();
        assert!(target_pattern_mismatch(&c.j) > 0.1);
        assert_eq!(target_pattern_mismatch(&target_quartic_patterns()[2]), 0.0);
    }

    #[test]
    fn rejects_non_orthogonal_rotation() {
        let mut q = Matrix3::identity();
        q[(0, 1)] = 1e-6;
        assert!(EllipsoidPose::new(EllipsoidAxes::sphere(1.0).unwrap(), q, Vector3::zeros()).is_err());
    }
}
