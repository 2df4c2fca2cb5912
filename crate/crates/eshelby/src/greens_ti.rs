//! Closed-form Green functions of transversely isotropic media (x₃ is the
//! symmetry axis) and displacement fields of uniformly eigenstressed voxel
//! regions.
//!
//! Two branches, decided by δ = √(C11·C33) − C13 − 2·C44:
//!
//! * δ > 0: three "speeds" v₁ > v₂ and v₃ with R_i = √(ρ² + v_i²x₃²).
//! * δ = 0: a double root v = (C11/C33)^¼ and the R₀/R₃ form.
//!
//! Convention: C_ijkl ∂_j∂_l G_km = −δ_im δ(x), so G decays like 1/|x|.
//!
//! The coefficient of the R_i terms in G11, G12 and G22 is
//! `h_i = (−1)^(i+1)(C44 − C33·v_i²) / (8π·C33·C44·(v₂² − v₁²)·v_i²)`.
//! This sign is the one for which the 1/ρ² singularities on the symmetry axis
//! cancel and C:∇∇G = 0 holds (checked against finite differences in the
//! tests). The displacement tensors below are written in terms of the same
//! `h_i`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::VoxelRegion;
use crate::materials::{check_construction_constraints, quartic_residual, ElasticTensor, SymmetryClass, TiBranch};
use crate::{Error, Result};

const PI: f64 = std::f64::consts::PI;

/// ρ²/|x|² below which the non-degenerate form is replaced by its limit on
/// the symmetry axis (balances cancellation against truncation at ~1e-8).
const AXIS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "branch", rename_all = "snake_case")]
pub enum TIGreenConstants {
    NonDegenerate {
        /// v₁ > v₂ > 0.
        v: [f64; 2],
        v3: f64,
        a: [f64; 2],
        h: [f64; 2],
        k: [f64; 2],
        /// Quartic residuals of v₁ and v₂.
        residuals: [f64; 2],
    },
    Degenerate {
        v: f64,
        v3: f64,
        residual: f64,
    },
}

struct Moduli {
    c11: f64,
    c12: f64,
    c13: f64,
    c33: f64,
    c44: f64,
}

fn ti_moduli(c: &ElasticTensor) -> Result<(Moduli, TiBranch)> {
    if c.class() != SymmetryClass::TransverselyIsotropic {
        return Err(Error::Unsupported(format!(
            "expected a transversely isotropic tensor, got {}",
            c.class()
        )));
    }
    let report = check_construction_constraints(c)?;
    let status = report.ti.expect("TI status");
    if status.c13_plus_c44_zero {
        return Err(Error::Unsupported(
            "C13 + C44 = 0: the closed forms divide by C13 + C44".into(),
        ));
    }
    if status.branch == TiBranch::Complex {
        return Err(Error::Domain(format!(
            "sqrt(C11*C33) - C13 - 2*C44 < 0 (normalized {:e}): complex roots are not supported",
            status.degeneracy_margin
        )));
    }
    let m = Moduli {
        c11: c.c(1, 1),
        c12: c.c(1, 2),
        c13: c.c(1, 3),
        c33: c.c(3, 3),
        c44: c.c(4, 4),
    };
    Ok((m, status.branch))
}

pub fn ti_constants(c: &ElasticTensor) -> Result<TIGreenConstants> {
    let (m, branch) = ti_moduli(c)?;
    let v3 = ((m.c11 - m.c12) / (2.0 * m.c44)).sqrt();
    let s = (m.c11 * m.c33).sqrt();
    if branch == TiBranch::Degenerate {
        let v = (m.c11 / m.c33).powf(0.25);
        return Ok(TIGreenConstants::Degenerate {
            v,
            v3,
            residual: quartic_residual(c, v),
        });
    }
    let p = (s - m.c13) * (s + m.c13 + 2.0 * m.c44) / (4.0 * m.c33 * m.c44);
    let q = (s + m.c13) * (s - m.c13 - 2.0 * m.c44) / (4.0 * m.c33 * m.c44);
    let v = [p.sqrt() + q.max(0.0).sqrt(), p.sqrt() - q.max(0.0).sqrt()];
    // v₂² − v₁² = −4√(pq), computed without cancellation
    let d = -4.0 * (p * q.max(0.0)).sqrt();
    let sign = |i: usize| if i == 0 { 1.0 } else { -1.0 };
    let a = [0, 1].map(|i| sign(i) * (m.c13 + m.c44) / (4.0 * PI * m.c33 * m.c44 * d * v[i]));
    let h = [0, 1].map(|i| sign(i) * (m.c44 - m.c33 * v[i] * v[i]) / (8.0 * PI * m.c33 * m.c44 * d * v[i] * v[i]));
    let k = [0, 1].map(|i| (m.c11 / (v[i] * v[i]) - m.c44) / (m.c13 + m.c44));
    Ok(TIGreenConstants::NonDegenerate {
        v,
        v3,
        a,
        h,
        k,
        residuals: [quartic_residual(c, v[0]), quartic_residual(c, v[1])],
    })
}

/// Eigenstress ratio σ*₃₃/σ*₁₁ for which the displacement reduces to a single
/// potential in the v₁ (or v) frame.
pub fn gamma_ratio(c: &ElasticTensor) -> Result<f64> {
    let (m, _) = ti_moduli(c)?;
    let v = match ti_constants(c)? {
        TIGreenConstants::NonDegenerate { v, .. } => v[0],
        TIGreenConstants::Degenerate { v, .. } => v,
    };
    Ok((m.c11 * m.c33 - m.c33 * m.c44 * v * v) / ((m.c13 + m.c44) * m.c11))
}

pub fn green_ti(c: &ElasticTensor, x: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let k = ti_constants(c)?;
    let m = ti_moduli(c)?.0;
    green_with(&k, m.c13, m.c33, m.c44, x)
}

fn green_with(k: &TIGreenConstants, c13: f64, c33: f64, c44: f64, x: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let r2 = x.norm_squared();
    if !(r2 > 0.0) || !r2.is_finite() {
        return Err(Error::Singular(format!("Green function is singular at x = {x:?}")));
    }
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    let rho2 = x1 * x1 + x2 * x2;
    let mut g = Matrix3::zeros();
    match *k {
        TIGreenConstants::NonDegenerate { v, v3, a, h, k, .. } => {
            let c3 = 1.0 / (4.0 * PI * c44 * v3);
            if rho2 <= AXIS_TOL * r2 {
                let z = x3.abs();
                let t = (h[0] + h[1] + c3 / (2.0 * v3)) / z;
                g[(0, 0)] = t;
                g[(1, 1)] = t;
                g[(2, 2)] = (0..2).map(|i| v[i] * k[i] * a[i]).sum::<f64>() / z;
                return Ok(g);
            }
            let rho4 = rho2 * rho2;
            let ri = [0, 1].map(|i| (rho2 + v[i] * v[i] * x3 * x3).sqrt());
            let r3 = (rho2 + v3 * v3 * x3 * x3).sqrt();
            let mut g11 = c3 * (x1 * x1 * r3 * r3 - v3 * v3 * x2 * x2 * x3 * x3) / (rho4 * r3);
            let mut g22 = c3 * (x2 * x2 * r3 * r3 - v3 * v3 * x1 * x1 * x3 * x3) / (rho4 * r3);
            let mut g12 = c3 * x1 * x2 * (rho2 + 2.0 * v3 * v3 * x3 * x3) / (rho4 * r3);
            let (mut g13, mut g23, mut g33) = (0.0, 0.0, 0.0);
            for i in 0..2 {
                let (vi, r) = (v[i], ri[i]);
                let w = 2.0 * vi * h[i];
                g11 += w * (x2 * x2 * r * r - vi * vi * x1 * x1 * x3 * x3) / (rho4 * r);
                g22 += w * (x1 * x1 * r * r - vi * vi * x2 * x2 * x3 * x3) / (rho4 * r);
                g12 -= w * x1 * x2 * (rho2 + 2.0 * vi * vi * x3 * x3) / (rho4 * r);
                g13 -= vi * vi * a[i] * x1 * x3 / (rho2 * r);
                g23 -= vi * vi * a[i] * x2 * x3 / (rho2 * r);
                g33 += vi * vi * k[i] * a[i] / r;
            }
            g[(0, 0)] = g11;
            g[(1, 1)] = g22;
            g[(2, 2)] = g33;
            g[(0, 1)] = g12;
            g[(0, 2)] = g13;
            g[(1, 2)] = g23;
        }
        TIGreenConstants::Degenerate { v, v3, .. } => {
            let az = x3.abs();
            let r0 = (rho2 + v * v * x3 * x3).sqrt();
            let r3 = (rho2 + v3 * v3 * x3 * x3).sqrt();
            let s0 = r0 + v * az;
            let s3 = r3 + v3 * az;
            let r03 = r0 * r0 * r0;
            let u = -1.0 / (8.0 * PI * c33 * v.powi(3) * r03)
                + (2.0 * v * v * x3 * x3 * s0 * s0 - rho2 * rho2) / (8.0 * PI * c44 * v * r03 * s0.powi(4));
            let t = (1.0 / (c33 * v * v) + rho2 / (c44 * s0 * s0)) / (8.0 * PI * v * r0);
            let dd = 4.0 * PI * c44 * v3 * s3 * s3 * r3;
            let axial = 8.0 * PI * c33 * c44 * v * r03;
            g[(0, 0)] = (s3 * r3 - x2 * x2) / dd + t + u * x1 * x1;
            g[(1, 1)] = (s3 * r3 - x1 * x1) / dd + t + u * x2 * x2;
            g[(0, 1)] = x1 * x2 / dd + u * x1 * x2;
            g[(0, 2)] = (c13 + c44) * x1 * x3 / axial;
            g[(1, 2)] = (c13 + c44) * x2 * x3 / axial;
            g[(2, 2)] = ((v * v * c33 + c44) * rho2 + 2.0 * c33 * v.powi(4) * x3 * x3) / axial;
        }
    }
    g[(1, 0)] = g[(0, 1)];
    g[(2, 0)] = g[(0, 2)];
    g[(2, 1)] = g[(1, 2)];
    Ok(g)
}

/// Scalar potential kernels whose gradients build the displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKernel {
    /// 1/√(z₁² + z₂² + v²z₃²).
    InverseR { v: f64 },
    /// z₃²/R³ with R = √(z₁² + z₂² + v²z₃²).
    AxialSquareOverR3 { v: f64 },
}

impl PotentialKernel {
    /// ∇_x of the kernel evaluated at z = x − y.
    pub fn gradient(&self, z: &Vector3<f64>) -> Vector3<f64> {
        match *self {
            Self::InverseR { v } => {
                let r2 = z[0] * z[0] + z[1] * z[1] + v * v * z[2] * z[2];
                let r3 = r2 * r2.sqrt();
                -Vector3::new(z[0], z[1], v * v * z[2]) / r3
            }
            Self::AxialSquareOverR3 { v } => {
                let r2 = z[0] * z[0] + z[1] * z[1] + v * v * z[2] * z[2];
                let r = r2.sqrt();
                let r3 = r2 * r;
                let r5 = r3 * r2;
                let z3s = z[2] * z[2];
                Vector3::new(
                    -3.0 * z[0] * z3s / r5,
                    -3.0 * z[1] * z3s / r5,
                    2.0 * z[2] / r3 - 3.0 * v * v * z[2] * z3s / r5,
                )
            }
        }
    }
}

/// u(x) = −Σ_i diag(K^i)·∇_x ∫_Ω kernel_i(x − y) dy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisplacementTensors {
    pub terms: Vec<(PotentialKernel, [f64; 3])>,
}

/// Diagonal K-tensors for the axisymmetric eigenstress diag(σ11, σ11, σ33).
pub fn displacement_tensors(c: &ElasticTensor, s11: f64, s33: f64) -> Result<DisplacementTensors> {
    let (m, _) = ti_moduli(c)?;
    let terms = match ti_constants(c)? {
        TIGreenConstants::NonDegenerate { v, a, h, k, .. } => (0..2)
            .map(|i| {
                let t = v[i] * (2.0 * h[i] * s11 + a[i] * v[i] * s33);
                let t3 = a[i] * (k[i] * v[i] * v[i] * s33 - s11);
                (PotentialKernel::InverseR { v: v[i] }, [t, t, t3])
            })
            .collect(),
        TIGreenConstants::Degenerate { v, .. } => {
            let d = 8.0 * PI * m.c33 * m.c44 * v;
            let cv = m.c13 + m.c44;
            let b1 = ((m.c33 * v * v + m.c44) * s11 - cv * v * v * s33) / (d * v * v);
            let b1z = (-cv * s11 + (m.c33 * v * v + m.c44) * v * v * s33) / (d * v * v);
            let b2 = -((m.c33 * v * v - m.c44) * s11 - cv * v * v * s33) / d;
            let b2z = -(cv * s11 - (m.c33 * v * v - m.c44) * v * v * s33) / d;
            vec![
                (PotentialKernel::InverseR { v }, [b1, b1, b1z]),
                (PotentialKernel::AxialSquareOverR3 { v }, [b2, b2, b2z]),
            ]
        }
    };
    Ok(DisplacementTensors { terms })
}

fn axisymmetric_parts(sigma: &Matrix3<f64>) -> Result<(f64, f64)> {
    let scale = sigma.amax();
    if !sigma.iter().all(|v| v.is_finite()) || scale == 0.0 {
        return Err(Error::Unsupported("eigenstress must be finite and nonzero".into()));
    }
    let tol = 1e-12 * scale;
    let off = [(0, 1), (0, 2), (1, 2)]
        .iter()
        .any(|&(i, j)| sigma[(i, j)].abs() > tol || sigma[(j, i)].abs() > tol);
    if off || (sigma[(0, 0)] - sigma[(1, 1)]).abs() > tol {
        return Err(Error::Unsupported(
            "eigenstress must be of the form diag(s11, s11, s33) for the closed-form displacement".into(),
        ));
    }
    Ok((sigma[(0, 0)], sigma[(2, 2)]))
}

/// ∫ over the box [c − h/2, c + h/2] of ∇kernel(x − y) dy by an m³ midpoint
/// rule, skipping sub-cells inside the largest cube centred at `x` that fits
/// in the box (its contribution vanishes by symmetry).
fn cell_gradient(kernel: &PotentialKernel, x: &Vector3<f64>, c: &Vector3<f64>, h: &[f64; 3], m: usize) -> Vector3<f64> {
    let mut w = f64::INFINITY;
    for a in 0..3 {
        w = w.min(0.5 * h[a] - (x[a] - c[a]).abs());
    }
    let sub = [h[0] / m as f64, h[1] / m as f64, h[2] / m as f64];
    let vol = sub[0] * sub[1] * sub[2];
    let mut g = Vector3::zeros();
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let y = Vector3::new(
                    c[0] - 0.5 * h[0] + (i as f64 + 0.5) * sub[0],
                    c[1] - 0.5 * h[1] + (j as f64 + 0.5) * sub[1],
                    c[2] - 0.5 * h[2] + (k as f64 + 0.5) * sub[2],
                );
                let z = x - y;
                if w > 0.0 && z.amax() < w {
                    continue;
                }
                g += kernel.gradient(&z) * vol;
            }
        }
    }
    g
}

/// ∇_x ∫_region kernel(x − y) dy: midpoint rule for far cells, 4³ sub-cells
/// for the 26 neighbours, and the symmetric-cube split for the cell holding
/// `x` (exactly zero at a cell centre).
pub fn potential_gradient(region: &VoxelRegion, kernel: &PotentialKernel, x: &Vector3<f64>) -> Vector3<f64> {
    let h = region.spacing;
    let vol = region.voxel_volume();
    let f = region.lattice_coords(x);
    let mut g = Vector3::zeros();
    for [i, j, k] in region.indices() {
        let d = [f[0] - i as f64, f[1] - j as f64, f[2] - k as f64];
        let cheb = d.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let c = region.center(i, j, k);
        if cheb <= 0.5 {
            g += cell_gradient(kernel, x, &c, &h, 8);
        } else if cheb < 1.5 {
            g += cell_gradient(kernel, x, &c, &h, 4);
        } else {
            g += kernel.gradient(&(x - c)) * vol;
        }
    }
    g
}

/// Displacement at `points` induced by the uniform eigenstress `sigma_star`
/// (of the form diag(s11, s11, s33)) prescribed on `region`.
pub fn displacement_uniform_eigenstrain(
    region: &VoxelRegion,
    c: &ElasticTensor,
    sigma_star: &Matrix3<f64>,
    points: &[Vector3<f64>],
) -> Result<Vec<Vector3<f64>>> {
    let (s11, s33) = axisymmetric_parts(sigma_star)?;
    let tensors = displacement_tensors(c, s11, s33)?;
    Ok(points
        .par_iter()
        .map(|x| {
            let mut u = Vector3::zeros();
            for (kernel, kd) in &tensors.terms {
                if kd.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let g = potential_gradient(region, kernel, x);
                u -= Vector3::new(kd[0] * g[0], kd[1] * g[1], kd[2] * g[2]);
            }
            u
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nondeg() -> ElasticTensor {
        ElasticTensor::transversely_isotropic(10.0, 4.0, 3.0, 8.0, 2.0)
    }

    fn deg() -> ElasticTensor {
        ElasticTensor::transversely_isotropic(16.0, 6.0, 2.0, 1.0, 1.0)
    }

    fn stiffness(c: &ElasticTensor) -> [[[[f64; 3]; 3]; 3]; 3] {
        c.stiffness()
    }

    /// max |C_ijkl ∂_j∂_l G_km| over max of the same sum with absolute values.
    fn equilibrium_residual(c: &ElasticTensor, x: &Vector3<f64>, step: f64) -> f64 {
        let ct = stiffness(c);
        let g = |y: Vector3<f64>| green_ti(c, &y).unwrap();
        let mut hess = [[Matrix3::zeros(); 3]; 3];
        for j in 0..3 {
            for l in 0..3 {
                let ej = Vector3::ith(j, step);
                let el = Vector3::ith(l, step);
                hess[j][l] = (g(x + ej + el) - g(x + ej - el) - g(x - ej + el) + g(x - ej - el)) / (4.0 * step * step);
            }
        }
        let (mut res, mut scale) = (0.0f64, 0.0f64);
        for i in 0..3 {
            for mm in 0..3 {
                let (mut s, mut a) = (0.0, 0.0);
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            s += ct[i][j][k][l] * hess[j][l][(k, mm)];
                            a += (ct[i][j][k][l] * hess[j][l][(k, mm)]).abs();
                        }
                    }
                }
                res = res.max(s.abs());
                scale = scale.max(a);
            }
        }
        res / scale
    }

    /// ∮_{|x|=1} C_ijkl ∂_l G_km n_j dS, which must equal −I.
    fn unit_sphere_flux(c: &ElasticTensor) -> Matrix3<f64> {
        let ct = stiffness(c);
        let (nt, np) = (24, 48);
        let mut flux = Matrix3::zeros();
        let step = 1e-5;
        for a in 0..nt {
            // midpoint rule in cos θ
            let mu = -1.0 + (a as f64 + 0.5) * 2.0 / nt as f64;
            let st = (1.0 - mu * mu).sqrt();
            for b in 0..np {
                let ph = 2.0 * PI * (b as f64 + 0.5) / np as f64;
                let n = Vector3::new(st * ph.cos(), st * ph.sin(), mu);
                let dg: Vec<Matrix3<f64>> = (0..3)
                    .map(|l| {
                        let e = Vector3::ith(l, step);
                        (green_ti(c, &(n + e)).unwrap() - green_ti(c, &(n - e)).unwrap()) / (2.0 * step)
                    })
                    .collect();
                let w = (2.0 / nt as f64) * (2.0 * PI / np as f64);
                for i in 0..3 {
                    for mm in 0..3 {
                        let mut s = 0.0;
                        for j in 0..3 {
                            for k in 0..3 {
                                for l in 0..3 {
                                    s += ct[i][j][k][l] * dg[l][(k, mm)] * n[j];
                                }
                            }
                        }
                        flux[(i, mm)] += w * s;
                    }
                }
            }
        }
        flux
    }

    #[test]
    fn degenerate_speed_is_fourth_root() {
        match ti_constants(&deg()).unwrap() {
            TIGreenConstants::Degenerate { v, residual, .. } => {
                assert!((v - 2.0).abs() < 1e-12);
                assert!(residual.abs() < 1e-10);
            }
            other => panic!("expected degenerate branch, got {other:?}"),
        }
    }

    #[test]
    fn nondegenerate_constants() {
        let c = nondeg();
        let TIGreenConstants::NonDegenerate { v, a, residuals, .. } = ti_constants(&c).unwrap() else {
            panic!("expected non-degenerate branch");
        };
        assert!(v[0] > v[1] && v[1] > 0.0);
        assert!(residuals.iter().all(|r| r.abs() < 1e-10), "{residuals:?}");
        let prod = v[0] * v[0] * v[1] * v[1];
        assert!((prod - 10.0 / 8.0).abs() < 1e-10);
        assert!((a[0] / a[1] + v[1] / v[0]).abs() < 1e-12);
    }

    #[test]
    fn complex_branch_rejected() {
        // sqrt(C11*C33) - C13 - 2*C44 = 4 - 1 - 4 < 0
        let c = ElasticTensor::transversely_isotropic(4.0, 1.0, 1.0, 4.0, 2.0);
        assert!(matches!(ti_constants(&c), Err(Error::Domain(_))));
        let iso = ElasticTensor::isotropic(1.0, 1.0);
        assert!(matches!(ti_constants(&iso), Err(Error::Unsupported(_))));
    }

    #[test]
    fn origin_is_singular() {
        assert!(matches!(
            green_ti(&nondeg(), &Vector3::zeros()),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn determinant_of_the_potential_split() {
        // |2h_i v_i, -A_i v_i^2| built from the coefficients must be nonzero
        // and matches -(C13+C44)/(16 pi^2 C33^2 C44 (v2^2-v1^2) v1 v2) up to sign.
        let c = nondeg();
        let TIGreenConstants::NonDegenerate { v, a, h, .. } = ti_constants(&c).unwrap() else {
            unreachable!()
        };
        let det = (2.0 * h[0] * v[0]) * (-a[1] * v[1] * v[1]) - (2.0 * h[1] * v[1]) * (-a[0] * v[0] * v[0]);
        let expect = (3.0 + 2.0) / (16.0 * PI * PI * 64.0 * 2.0 * (v[1] * v[1] - v[0] * v[0]) * v[0] * v[1]);
        assert!(det.abs() > 0.0);
        assert!(
            (det.abs() - expect.abs()).abs() < 1e-12 * expect.abs(),
            "{det} vs {expect}"
        );
    }

    #[test]
    fn parity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for c in [nondeg(), deg()] {
            for _ in 0..20 {
                let x = Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                );
                let g = green_ti(&c, &x).unwrap();
                let gm = green_ti(&c, &-x).unwrap();
                assert!((g - gm).amax() <= 1e-14 * g.amax());
                assert!((g - g.transpose()).amax() == 0.0);
            }
        }
    }

    #[test]
    fn equilibrium_away_from_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for c in [nondeg(), deg()] {
            for _ in 0..10 {
                let x = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize();
                let r = equilibrium_residual(&c, &x, 1e-3);
                assert!(r < 1e-3, "{r}");
            }
        }
    }

    #[test]
    fn unit_point_force_normalisation() {
        for c in [nondeg(), deg()] {
            let f = unit_sphere_flux(&c);
            assert!((f + Matrix3::identity()).amax() < 5e-3, "{f}");
        }
    }

    #[test]
    fn axis_limit_is_continuous() {
        let c = nondeg();
        let on = green_ti(&c, &Vector3::new(0.0, 0.0, 0.7)).unwrap();
        // off-axis by 1e-4·|x|: the G13/G23 terms grow linearly with ρ
        let near = green_ti(&c, &Vector3::new(6e-5, -4e-5, 0.7)).unwrap();
        assert!((on - near).amax() < 5e-4 * on.amax(), "{on} {near}");
    }

    #[test]
    fn branches_agree_near_degeneracy() {
        // C13 = sqrt(C11*C33) - 2*C44 makes the tensor degenerate
        let (c11, c12, c33, c44): (f64, f64, f64, f64) = (16.0, 6.0, 1.0, 1.0);
        let c13 = (c11 * c33).sqrt() - 2.0 * c44;
        let d = ElasticTensor::transversely_isotropic(c11, c12, c13, c33, c44);
        let nd = ElasticTensor::transversely_isotropic(c11, c12, c13 - 1e-6, c33, c44);
        assert!(matches!(
            ti_constants(&nd).unwrap(),
            TIGreenConstants::NonDegenerate { .. }
        ));
        for x in [
            Vector3::new(0.3, -0.5, 0.8),
            Vector3::new(1.0, 0.2, -0.1),
            Vector3::new(0.01, 0.0, 1.0),
        ] {
            let gd = green_ti(&d, &x).unwrap();
            let gn = green_ti(&nd, &x).unwrap();
            assert!((gd - gn).amax() <= 1e-4 * gd.amax(), "{gd} {gn}");
        }
    }

    /// −∂_k G_ij(z) σ_jk: the displacement kernel from the Green function.
    fn kernel_from_green(c: &ElasticTensor, z: &Vector3<f64>, sigma: &Matrix3<f64>) -> Vector3<f64> {
        let step = 1e-6;
        let mut out = Vector3::zeros();
        for k in 0..3 {
            let e = Vector3::ith(k, step);
            let dg = (green_ti(c, &(z + e)).unwrap() - green_ti(c, &(z - e)).unwrap()) / (2.0 * step);
            out -= dg * sigma.column(k);
        }
        out
    }

    #[test]
    fn displacement_tensors_match_green_function() {
        for c in [nondeg(), deg()] {
            for (s11, s33) in [(1.3, 0.7), (1.0, 0.0), (0.0, 1.0)] {
                let sigma = Matrix3::from_diagonal(&Vector3::new(s11, s11, s33));
                let t = displacement_tensors(&c, s11, s33).unwrap();
                for z in [Vector3::new(0.3, -0.5, 0.8), Vector3::new(-0.9, 0.1, 0.2)] {
                    let expect = kernel_from_green(&c, &z, &sigma);
                    let mut got = Vector3::zeros();
                    for (kernel, kd) in &t.terms {
                        let g = kernel.gradient(&z);
                        got -= Vector3::new(kd[0] * g[0], kd[1] * g[1], kd[2] * g[2]);
                    }
                    assert!(
                        (got - expect).amax() < 1e-6 * expect.amax(),
                        "{s11} {s33}: {got} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn gamma_removes_second_potential() {
        for c in [nondeg(), deg()] {
            let g = gamma_ratio(&c).unwrap();
            let t = displacement_tensors(&c, 1.0, g).unwrap();
            let first = t.terms[0].1;
            let second = t.terms[1].1;
            for a in 0..3 {
                assert!(second[a].abs() <= 1e-12 * first[0].abs(), "{second:?} vs {first:?}");
            }
        }
    }

    #[test]
    fn rejects_non_axisymmetric_eigenstress() {
        let r = VoxelRegion::centered_cube(4, 0.25, |_| true).unwrap();
        let mut s = Matrix3::identity();
        s[(0, 1)] = 0.1;
        assert!(matches!(
            displacement_uniform_eigenstrain(&r, &nondeg(), &s, &[Vector3::zeros()]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn centre_of_symmetric_region_does_not_move() {
        let r = VoxelRegion::centered_cube(9, 0.1, |x| x.norm() < 0.4).unwrap();
        let u = displacement_uniform_eigenstrain(&r, &nondeg(), &Matrix3::identity(), &[Vector3::zeros()]).unwrap();
        assert!(u[0].amax() < 1e-14, "{}", u[0]);
    }

    #[test]
    fn displacement_scales_with_region() {
        let c = deg();
        let sigma = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.4));
        let x = Vector3::new(0.1, 0.2, -0.1);
        let small = VoxelRegion::centered_cube(10, 0.1, |y| y.norm() < 0.45).unwrap();
        let big = VoxelRegion::centered_cube(10, 0.2, |y| y.norm() < 0.9).unwrap();
        let us = displacement_uniform_eigenstrain(&small, &c, &sigma, &[x]).unwrap()[0];
        let ub = displacement_uniform_eigenstrain(&big, &c, &sigma, &[2.0 * x]).unwrap()[0];
        assert!((ub - 2.0 * us).amax() < 1e-12 * ub.amax(), "{ub} {us}");
    }
}
