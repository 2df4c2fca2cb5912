//! Independent checks on constructed inclusions: voxel quadrature of the
//! Newtonian potential N = −∫ρ/(4π|x−y|), finite-difference Hessians, the
//! Hessian-to-strain maps, polynomial certification of strain fields and a
//! non-ellipsoidality score.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ellipsoid_potential::{
    constant_density_potential, quadratic_density_coefficients, quadratic_potential_at, EllipsoidPose,
};
use crate::elliptic::compute_i_integrals;
use crate::geometry::{ellipsoid_fit, stretch_region, symmetric_difference_fraction, DiagonalStretch, VoxelRegion};
use crate::materials::{abc_constants, scale_factors, ElasticTensor, ScaleFactors, SymmetryClass};
use crate::{Error, Result};

/// Density ρ of the potential (and of the eigenstress magnitude).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum DensityPolynomial {
    /// ρ = c₀.
    Constant { c0: f64 },
    /// ρ = −Σ c_k x_k².
    Quadratic { c: [f64; 3] },
    /// ρ = −Σ d_k x_kⁿ, n even.
    EvenMonomial { d: [f64; 3], n: u32 },
}

impl DensityPolynomial {
    pub fn unit_quadratic() -> Self {
        Self::Quadratic { c: [1.0; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Self::Constant { c0 } if c0.is_finite() => Ok(()),
            Self::Quadratic { c } if finite(c) => Ok(()),
            Self::EvenMonomial { d, n } if finite(d) && n % 2 == 0 => Ok(()),
            Self::EvenMonomial { n, .. } if n % 2 != 0 => {
                Err(Error::Domain(format!("density degree must be even, got {n}")))
            }
            _ => Err(Error::Domain("density coefficients must be finite".into())),
        }
    }

    pub fn degree(&self) -> u32 {
        match self {
            Self::Constant { .. } => 0,
            Self::Quadratic { .. } => 2,
            Self::EvenMonomial { n, .. } => *n,
        }
    }

    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        match self {
            Self::Constant { c0 } => *c0,
            Self::Quadratic { c } => -(c[0] * x[0] * x[0] + c[1] * x[1] * x[1] + c[2] * x[2] * x[2]),
            Self::EvenMonomial { d, n } => {
                let p = *n as i32;
                -(d[0] * x[0].powi(p) + d[1] * x[1].powi(p) + d[2] * x[2].powi(p))
            }
        }
    }

    /// The same density written in the frame x′ = diag(q)·x, i.e.
    /// ρ′(x′) = ρ(diag(q)⁻¹x′).
    pub fn in_stretched_frame(&self, q: [f64; 3]) -> Self {
        match *self {
            Self::Constant { c0 } => Self::Constant { c0 },
            Self::Quadratic { c } => Self::Quadratic {
                c: [0, 1, 2].map(|k| c[k] / (q[k] * q[k])),
            },
            Self::EvenMonomial { d, n } => Self::EvenMonomial {
                d: [0, 1, 2].map(|k| d[k] / q[k].powi(n as i32)),
                n,
            },
        }
    }
}

/// ∫ over the box [lo, hi] of 1/|y| dy (closed form of the box potential).
pub fn box_inverse_distance(lo: &Vector3<f64>, hi: &Vector3<f64>) -> f64 {
    // stable log(a + r) when a < 0
    fn ln_plus(a: f64, r: f64, rest: f64) -> f64 {
        if a >= 0.0 {
            (a + r).ln()
        } else {
            (rest / (r - a)).ln()
        }
    }
    fn corner(x: f64, y: f64, z: f64) -> f64 {
        let (x2, y2, z2) = (x * x, y * y, z * z);
        let r = (x2 + y2 + z2).sqrt();
        let mut t = 0.0;
        if y * z != 0.0 {
            t += y * z * ln_plus(x, r, y2 + z2);
        }
        if x * z != 0.0 {
            t += x * z * ln_plus(y, r, x2 + z2);
        }
        if x * y != 0.0 {
            t += x * y * ln_plus(z, r, x2 + y2);
        }
        if x != 0.0 {
            t -= 0.5 * x2 * (y * z / (x * r)).atan();
        }
        if y != 0.0 {
            t -= 0.5 * y2 * (x * z / (y * r)).atan();
        }
        if z != 0.0 {
            t -= 0.5 * z2 * (x * y / (z * r)).atan();
        }
        t
    }
    let mut s = 0.0;
    for (a, sa) in [(hi[0], 1.0), (lo[0], -1.0)] {
        for (b, sb) in [(hi[1], 1.0), (lo[1], -1.0)] {
            for (c, sc) in [(hi[2], 1.0), (lo[2], -1.0)] {
                s += sa * sb * sc * corner(a, b, c);
            }
        }
    }
    s
}

const NEAR: i64 = 2;

/// Voxel quadrature of N = −∫ρ/(4π|x−y|). Far voxels use the midpoint rule;
/// voxels within two cells of the evaluation point use the exact box
/// integral of 1/|x−y| times ρ at the voxel center.
pub struct PotentialQuadrature {
    region: VoxelRegion,
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    ws: Vec<f64>,
    rho_dense: Vec<f64>,
    /// Exact integrals for lattice-aligned points, offsets in [−2, 2]³.
    near_table: Vec<f64>,
    tiny: f64,
}

impl PotentialQuadrature {
    pub fn new(region: &VoxelRegion, rho: &DensityPolynomial) -> Self {
        let vol = region.voxel_volume();
        let mut rho_dense = vec![0.0; region.mask().len()];
        let (mut xs, mut ys, mut zs, mut ws) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for [i, j, k] in region.indices() {
            let c = region.center(i, j, k);
            let r = rho.eval(&c);
            rho_dense[region.linear(i, j, k)] = r;
            xs.push(c[0]);
            ys.push(c[1]);
            zs.push(c[2]);
            ws.push(r * vol);
        }
        let h = Vector3::from(region.spacing);
        let mut near_table = Vec::new();
        for a in -NEAR..=NEAR {
            for b in -NEAR..=NEAR {
                for c in -NEAR..=NEAR {
                    let off = Vector3::new(a as f64 * h[0], b as f64 * h[1], c as f64 * h[2]);
                    near_table.push(box_inverse_distance(&(off - 0.5 * h), &(off + 0.5 * h)));
                }
            }
        }
        let tiny = 1e-9 * region.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
        Self {
            region: region.clone(),
            xs,
            ys,
            zs,
            ws,
            rho_dense,
            near_table,
            tiny,
        }
    }

    pub fn region(&self) -> &VoxelRegion {
        &self.region
    }

    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        let mut total = 0.0;
        for l in 0..self.ws.len() {
            let dx = x[0] - self.xs[l];
            let dy = x[1] - self.ys[l];
            let dz = x[2] - self.zs[l];
            let r = (dx * dx + dy * dy + dz * dz).sqrt();
            if r > self.tiny {
                total += self.ws[l] / r;
            }
        }
        let reg = &self.region;
        let f = reg.lattice_coords(x);
        let base = f.map(|v| v.round() as i64);
        let aligned = (0..3).all(|a| (f[a] - base[a] as f64).abs() < 1e-9);
        let h = Vector3::from(reg.spacing);
        let vol = reg.voxel_volume();
        let width = (2 * NEAR + 1) as usize;
        for a in -NEAR..=NEAR {
            for b in -NEAR..=NEAR {
                for c in -NEAR..=NEAR {
                    let (i, j, k) = (base[0] + a, base[1] + b, base[2] + c);
                    if !reg.get_signed(i, j, k) {
                        continue;
                    }
                    let l = reg.linear(i as usize, j as usize, k as usize);
                    let center = reg.center(i as usize, j as usize, k as usize);
                    let exact = if aligned {
                        let t = ((a + NEAR) as usize * width + (b + NEAR) as usize) * width + (c + NEAR) as usize;
                        self.near_table[t]
                    } else {
                        let off = center - x;
                        box_inverse_distance(&(off - 0.5 * h), &(off + 0.5 * h))
                    };
                    let r = (center - x).norm();
                    let rho = self.rho_dense[l];
                    total += rho * exact;
                    if r > self.tiny {
                        total -= rho * vol / r;
                    }
                }
            }
        }
        -total / (4.0 * PI)
    }

    pub fn eval_many(&self, points: &[Vector3<f64>]) -> Vec<f64> {
        points.par_iter().map(|x| self.eval(x)).collect()
    }
}

/// N at a single point; builds the quadrature on the fly.
pub fn potential_quadrature(region: &VoxelRegion, rho: &DensityPolynomial, x: &Vector3<f64>) -> f64 {
    PotentialQuadrature::new(region, rho).eval(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianSample {
    pub point: Vector3<f64>,
    pub hessian: Matrix3<f64>,
    /// Set when the stencil leaves the region; the Hessian is still
    /// computed but is not trustworthy there.
    pub flagged: bool,
}

/// Radius a point must sit inside the region for the step-2h stencil to
/// stay within it.
pub fn stencil_depth(region: &VoxelRegion) -> f64 {
    let mut s = region.spacing;
    s.sort_by(f64::total_cmp);
    2.0 * (s[1] * s[1] + s[2] * s[2]).sqrt() + 1e-9 * s[2]
}

/// Central differences of the quadrature potential with step 2h_a along
/// axis a (mixed terms from the four diagonal neighbours), symmetrized.
pub fn hessian_at(q: &PotentialQuadrature, x: &Vector3<f64>) -> Matrix3<f64> {
    let d = q.region().spacing.map(|h| 2.0 * h);
    let e = |a: usize| {
        let mut v = Vector3::zeros();
        v[a] = d[a];
        v
    };
    let n0 = q.eval(x);
    let mut hm = Matrix3::zeros();
    for a in 0..3 {
        let ea = e(a);
        hm[(a, a)] = (q.eval(&(x + ea)) - 2.0 * n0 + q.eval(&(x - ea))) / (d[a] * d[a]);
        for b in a + 1..3 {
            let eb = e(b);
            let v = (q.eval(&(x + ea + eb)) - q.eval(&(x + ea - eb)) - q.eval(&(x - ea + eb)) + q.eval(&(x - ea - eb)))
                / (4.0 * d[a] * d[b]);
            hm[(a, b)] = v;
            hm[(b, a)] = v;
        }
    }
    hm
}

pub fn hessian_field(region: &VoxelRegion, rho: &DensityPolynomial, points: &[Vector3<f64>]) -> Vec<HessianSample> {
    let q = PotentialQuadrature::new(region, rho);
    hessian_field_with(&q, points)
}

pub fn hessian_field_with(q: &PotentialQuadrature, points: &[Vector3<f64>]) -> Vec<HessianSample> {
    let depth = stencil_depth(q.region());
    points
        .par_iter()
        .map(|x| HessianSample {
            point: *x,
            hessian: hessian_at(q, x),
            flagged: !q.region().is_deep(x, depth),
        })
        .collect()
}

/// Which Hessian-to-strain relation applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrainCase {
    Cubic,
    Transiso,
    OrthoMono,
    Isotropic,
    GeneralEven,
}

/// Linear map ε = factor·(T + Tᵀ) with T = Q·H·Q·M, where the Hessian is
/// taken in the stretched frame x′ = Q·x (Q = diag(q)). The isotropic case
/// uses ε = factor·H with Q = I.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrainMap {
    pub case: StrainCase,
    pub q: [f64; 3],
    pub m: Matrix3<f64>,
    pub factor: f64,
    /// True when only the shape of the strain is meaningful (the even-degree
    /// relation is a proportionality).
    pub scale_free: bool,
}

pub fn strain_map(case: StrainCase, c: &ElasticTensor, p: &Matrix3<f64>) -> Result<StrainMap> {
    let need = |class: SymmetryClass| -> Result<()> {
        if c.class() != class {
            return Err(Error::Unsupported(format!(
                "case {case:?} needs a {class} tensor, got {}",
                c.class()
            )));
        }
        Ok(())
    };
    let missing = |sf: &ScaleFactors| {
        Error::Unsupported(format!(
            "scale_factors returned {sf:?}, which does not fit case {case:?}"
        ))
    };
    match case {
        StrainCase::Isotropic => {
            let (lambda, mu) = c.lame().ok_or_else(|| {
                Error::Unsupported(format!("isotropic case needs an isotropic tensor, got {}", c.class()))
            })?;
            Ok(StrainMap {
                case,
                q: [1.0; 3],
                m: Matrix3::identity(),
                factor: (3.0 * lambda + 2.0 * mu) / (lambda + 2.0 * mu),
                scale_free: false,
            })
        }
        StrainCase::Cubic => {
            need(SymmetryClass::Cubic)?;
            match scale_factors(c)? {
                ScaleFactors::CubicT { t } => Ok(StrainMap {
                    case,
                    q: [1.0, 1.0, t],
                    m: *p,
                    factor: 0.5 / c.c(4, 4),
                    scale_free: false,
                }),
                other => Err(missing(&other)),
            }
        }
        StrainCase::Transiso => {
            need(SymmetryClass::TransverselyIsotropic)?;
            match scale_factors(c)? {
                ScaleFactors::TransisoS { s } => Ok(StrainMap {
                    case,
                    q: [1.0, 1.0, s],
                    m: *p,
                    factor: 0.5 / c.c(4, 4),
                    scale_free: false,
                }),
                ScaleFactors::TransisoV { v, .. } => {
                    // K* for unit σ̄₁₁ with σ̄₃₃ = γσ̄₁₁; P does not enter.
                    let c11 = c.c(1, 1);
                    let k33 = (c11 - c.c(4, 4) * v * v) / (v * v * (c.c(1, 3) + c.c(4, 4)) * c11);
                    let m = Matrix3::from_diagonal(&Vector3::new(1.0 / c11, 1.0 / c11, k33));
                    Ok(StrainMap {
                        case,
                        q: [1.0, 1.0, v],
                        m,
                        factor: 0.5,
                        scale_free: false,
                    })
                }
                other => Err(missing(&other)),
            }
        }
        StrainCase::OrthoMono => {
            if !matches!(c.class(), SymmetryClass::Orthotropic | SymmetryClass::Monoclinic) {
                return Err(Error::Unsupported(format!(
                    "case ortho_mono needs an orthotropic or monoclinic tensor, got {}",
                    c.class()
                )));
            }
            match scale_factors(c)? {
                ScaleFactors::OrthoS1S2 { s1, s2 } => Ok(StrainMap {
                    case,
                    q: [s1, s2, 1.0],
                    m: *p,
                    factor: 0.5 / c.c(3, 3),
                    scale_free: false,
                }),
                other => Err(missing(&other)),
            }
        }
        StrainCase::GeneralEven => {
            let [a, b, cc] = abc_constants(c)?;
            Ok(StrainMap {
                case,
                q: [(cc / a).sqrt(), (cc / b).sqrt(), 1.0],
                m: *p,
                factor: 1.0,
                scale_free: true,
            })
        }
    }
}

pub fn strain_from_hessian(map: &StrainMap, h: &Matrix3<f64>) -> Matrix3<f64> {
    if map.case == StrainCase::Isotropic {
        return map.factor * h;
    }
    let q = Matrix3::from_diagonal(&Vector3::from(map.q));
    let t = q * h * q * map.m;
    map.factor * (t + t.transpose())
}

/// Exponents of the monomial basis up to `degree`, graded lexicographic:
/// by total degree, then by descending powers of x₁, then x₂.
pub fn monomial_exponents(degree: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for d in 0..=degree {
        for a in (0..=d).rev() {
            for b in (0..=d - a).rev() {
                out.push([a, b, d - a - b]);
            }
        }
    }
    out
}

fn monomial(e: &[u32; 3], x: &Vector3<f64>) -> f64 {
    x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32) * x[2].powi(e[2] as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolynomialFit {
    pub degree: u32,
    pub exponents: Vec<[u32; 3]>,
    pub coefficients: Vec<f64>,
    pub rms_residual: f64,
    /// rms residual over rms of the samples.
    pub relative_residual: f64,
    /// rms over the samples of the part of the fit of each total degree.
    pub degree_norms: Vec<f64>,
    /// Condition number of the column-scaled design matrix.
    pub condition_number: f64,
}

impl PolynomialFit {
    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        self.exponents
            .iter()
            .zip(&self.coefficients)
            .map(|(e, c)| c * monomial(e, x))
            .sum()
    }
}

/// Least-squares fit in the monomial basis up to `degree`.
pub fn fit_polynomial(points: &[Vector3<f64>], values: &[f64], degree: u32) -> Result<PolynomialFit> {
    if points.len() != values.len() {
        return Err(Error::Structural("points and values differ in length".into()));
    }
    let exps = monomial_exponents(degree);
    let m = exps.len();
    let n = points.len();
    if n < 2 * m {
        return Err(Error::Domain(format!(
            "need at least {} samples for degree {degree}, got {n}",
            2 * m
        )));
    }
    let mut a = DMatrix::from_fn(n, m, |r, c| monomial(&exps[c], &points[r]));
    let mut scale = vec![1.0; m];
    for (c, s) in scale.iter_mut().enumerate() {
        let norm = a.column(c).norm();
        if norm > 0.0 {
            *s = norm;
            a.column_mut(c).scale_mut(1.0 / norm);
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond < 1e12) {
        return Err(Error::Singular(format!(
            "rank-deficient design for degree {degree}: condition number {cond:.3e} over {n} samples"
        )));
    }
    let b = DVector::from_column_slice(values);
    let y = svd.solve(&b, 0.0).map_err(|e| Error::Singular(e.to_string()))?;
    let coefficients: Vec<f64> = (0..m).map(|c| y[c] / scale[c]).collect();
    let fitted = &a * &y;
    let resid = &b - &fitted;
    let rms = |v: f64| (v / n as f64).sqrt();
    let rms_residual = rms(resid.norm_squared());
    let sample_rms = rms(b.norm_squared());
    let mut degree_norms = Vec::new();
    for d in 0..=degree {
        let mut s = 0.0;
        for p in points {
            let v: f64 = exps
                .iter()
                .zip(&coefficients)
                .filter(|(e, _)| e.iter().sum::<u32>() == d)
                .map(|(e, c)| c * monomial(e, p))
                .sum();
            s += v * v;
        }
        degree_norms.push(rms(s));
    }
    Ok(PolynomialFit {
        degree,
        exponents: exps,
        coefficients,
        rms_residual,
        relative_residual: if sample_rms > 0.0 {
            rms_residual / sample_rms
        } else {
            0.0
        },
        degree_norms,
        condition_number: cond,
    })
}

/// Uniaxial eigenstress direction P, density ρ (in the inclusion frame) and
/// the strain relation to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenstrainSpec {
    #[serde(default = "default_p")]
    pub p: Matrix3<f64>,
    pub density: DensityPolynomial,
    pub case: StrainCase,
}

fn default_p() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(0.0, 0.0, 1.0))
}

impl EigenstrainSpec {
    pub fn new(case: StrainCase, density: DensityPolynomial) -> Self {
        Self {
            p: default_p(),
            density,
            case,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.density.validate()?;
        let p = &self.p;
        let zero_one = p.iter().all(|v| *v == 0.0 || *v == 1.0);
        let ones = p.iter().filter(|v| **v == 1.0).count();
        let symmetric = (p - p.transpose()).abs().max() == 0.0;
        if !(zero_one && symmetric && (ones == 1 && (0..3).any(|i| p[(i, i)] == 1.0))) {
            return Err(Error::Domain(format!(
                "P must be a uniaxial 0/1 matrix e_i⊗e_i, got {p:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyOptions {
    /// Relative tolerance on both the degree-n residual and the degree-(n+1)
    /// increment.
    pub tol: f64,
    pub max_samples: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            tol: 0.05,
            max_samples: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub case: StrainCase,
    pub degree: u32,
    pub samples: usize,
    pub field_rms: f64,
    /// Relative rms residual of the degree-n fit.
    pub residual_degree_n: f64,
    /// Relative rms residual of the degree-(n+1) fit.
    pub residual_degree_n1: f64,
    /// rms of (fit_{n+1} − fit_n) relative to the field rms.
    pub incremental_energy: f64,
    pub tol: f64,
    pub scale_free: bool,
    pub pass: bool,
    #[serde(skip)]
    pub points: Vec<Vector3<f64>>,
    #[serde(skip)]
    pub strains: Vec<Matrix3<f64>>,
}

const COMPONENTS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Evenly strided subset of at most `max` items, in order.
fn subsample<T: Clone>(items: &[T], max: usize) -> Vec<T> {
    if items.len() <= max {
        return items.to_vec();
    }
    (0..max).map(|i| items[i * items.len() / max].clone()).collect()
}

/// Region in the stretched frame x′ = diag(q)·x together with deep sample
/// points there.
fn stretched_samples(region: &VoxelRegion, q: [f64; 3], max: usize) -> Result<(VoxelRegion, Vec<Vector3<f64>>)> {
    let stretch = DiagonalStretch::new(1.0 / q[0], 1.0 / q[1], 1.0 / q[2])?;
    let primed = stretch_region(region, &stretch);
    let depth = stencil_depth(&primed);
    let deep: Vec<Vector3<f64>> = primed
        .centers()
        .into_iter()
        .filter(|x| primed.is_deep(x, depth))
        .collect();
    Ok((primed, subsample(&deep, max)))
}

/// Sample points with the strain tensor at each.
pub type StrainSamples = (Vec<Vector3<f64>>, Vec<Matrix3<f64>>);

/// A potential evaluable at world points.
pub type PotentialFn = Box<dyn Fn(&Vector3<f64>) -> f64 + Sync>;

/// Strain samples inside `region` (inclusion frame) with the strain map for
/// `eig.case`; points are returned in the inclusion frame.
pub fn strain_samples(
    region: &VoxelRegion,
    c: &ElasticTensor,
    eig: &EigenstrainSpec,
    max_samples: usize,
) -> Result<StrainSamples> {
    eig.validate()?;
    let map = strain_map(eig.case, c, &eig.p)?;
    let (primed, pts) = stretched_samples(region, map.q, max_samples)?;
    let rho = eig.density.in_stretched_frame(map.q);
    let hs = hessian_field(&primed, &rho, &pts);
    let strains = hs.iter().map(|s| strain_from_hessian(&map, &s.hessian)).collect();
    let back = pts
        .iter()
        .map(|x| Vector3::new(x[0] / map.q[0], x[1] / map.q[1], x[2] / map.q[2]))
        .collect();
    Ok((back, strains))
}

/// PASS iff the strain is captured by a degree-n polynomial (n = density
/// degree) to `tol` and the degree n+1 terms add at most `tol` of the
/// field norm.
pub fn certify_polynomial_conservation(
    region: &VoxelRegion,
    c: &ElasticTensor,
    eig: &EigenstrainSpec,
    opts: &CertifyOptions,
) -> Result<CertificationReport> {
    if region.is_empty() {
        return Err(Error::Domain("cannot certify an empty region".into()));
    }
    let map = strain_map(eig.case, c, &eig.p)?;
    let n = eig.density.degree();
    let (points, strains) = strain_samples(region, c, eig, opts.max_samples)?;
    let needed = 2 * monomial_exponents(n + 1).len();
    if points.len() < needed {
        return Err(Error::Domain(format!(
            "only {} interior samples deep enough for the stencil, need {needed}",
            points.len()
        )));
    }
    // fit in centred, unit-scaled coordinates for conditioning
    let centroid = points.iter().fold(Vector3::zeros(), |a, p| a + p) / points.len() as f64;
    let scale = points
        .iter()
        .map(|p| (p - centroid).amax())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let local: Vec<Vector3<f64>> = points.iter().map(|p| (p - centroid) / scale).collect();
    let mut field2 = 0.0;
    let mut res_n = 0.0;
    let mut res_n1 = 0.0;
    let mut incr = 0.0;
    for (a, b) in COMPONENTS {
        let vals: Vec<f64> = strains.iter().map(|e| e[(a, b)]).collect();
        field2 += vals.iter().map(|v| v * v).sum::<f64>();
        let fit_n = fit_polynomial(&local, &vals, n)?;
        let fit_n1 = fit_polynomial(&local, &vals, n + 1)?;
        for (p, v) in local.iter().zip(&vals) {
            let fa = fit_n.eval(p);
            let fb = fit_n1.eval(p);
            res_n += (v - fa).powi(2);
            res_n1 += (v - fb).powi(2);
            incr += (fb - fa).powi(2);
        }
    }
    let m = points.len() as f64;
    let field_rms = (field2 / m).sqrt();
    let rel = |s: f64| if field2 > 0.0 { (s / field2).sqrt() } else { 0.0 };
    let (residual_degree_n, residual_degree_n1, incremental_energy) = (rel(res_n), rel(res_n1), rel(incr));
    Ok(CertificationReport {
        case: eig.case,
        degree: n,
        samples: points.len(),
        field_rms,
        residual_degree_n,
        residual_degree_n1,
        incremental_energy,
        tol: opts.tol,
        scale_free: map.scale_free,
        pass: residual_degree_n <= opts.tol && incremental_energy <= opts.tol,
        points,
        strains,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonEllipsoidalityReport {
    pub fit: EllipsoidPose,
    /// Symmetric-difference volume over union volume.
    pub geometric_fraction: f64,
    /// rms(N_quadrature − N_ellipsoid) over the range of N_quadrature.
    pub potential_mismatch: f64,
    pub score: f64,
    pub samples: usize,
}

/// Closed-form potential of a posed ellipsoid for constant or isotropic
/// quadratic densities.
pub fn ellipsoid_potential_closed_form(pose: &EllipsoidPose, rho: &DensityPolynomial) -> Result<PotentialFn> {
    match *rho {
        DensityPolynomial::Constant { c0 } => {
            let table = compute_i_integrals(&pose.axes)?;
            let pose = pose.clone();
            Ok(Box::new(move |x| constant_density_potential(&pose, &table, c0, x)))
        }
        DensityPolynomial::Quadratic { c } if c[0] == c[1] && c[1] == c[2] => {
            let coeffs = quadratic_density_coefficients(pose)?;
            let pose = pose.clone();
            Ok(Box::new(move |x| c[0] * quadratic_potential_at(&pose, &coeffs, x)))
        }
        _ => Err(Error::Unsupported(
            "closed-form ellipsoid potential needs a constant or isotropic quadratic density".into(),
        )),
    }
}

pub fn non_ellipsoidality_score(region: &VoxelRegion, rho: &DensityPolynomial) -> Result<NonEllipsoidalityReport> {
    let fit = ellipsoid_fit(region)?;
    let closed = ellipsoid_potential_closed_form(&fit, rho)?;
    let geometric_fraction = symmetric_difference_fraction(region, &fit);
    let depth = 2.0 * region.spacing.iter().cloned().fold(0.0, f64::max);
    let deep: Vec<Vector3<f64>> = region
        .centers()
        .into_iter()
        .filter(|x| region.is_deep(x, depth) && fit.contains(x))
        .collect();
    let pts = subsample(&deep, 300);
    if pts.is_empty() {
        return Err(Error::Domain(
            "no interior points shared by the region and its fitted ellipsoid".into(),
        ));
    }
    let q = PotentialQuadrature::new(region, rho);
    let numeric = q.eval_many(&pts);
    let (mut lo, mut hi, mut err2) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for (p, nv) in pts.iter().zip(&numeric) {
        lo = lo.min(*nv);
        hi = hi.max(*nv);
        err2 += (nv - closed(p)).powi(2);
    }
    let range = (hi - lo).max(numeric.iter().fold(0.0, |m: f64, v| m.max(v.abs())) * 1e-12);
    let potential_mismatch = if range > 0.0 {
        (err2 / pts.len() as f64).sqrt() / range
    } else {
        0.0
    };
    Ok(NonEllipsoidalityReport {
        fit,
        geometric_fraction,
        potential_mismatch,
        score: geometric_fraction.max(potential_mismatch),
        samples: pts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfConsistencyReport {
    pub points: usize,
    pub rms_error: f64,
    /// Normalisation used for `relative`.
    pub field_range: f64,
    /// max − min of the target over the sampled points.
    pub set_range: f64,
    pub relative: f64,
    pub relative_to_set: f64,
}

/// Compares the quadrature potential of `region` under `rho` against
/// `target` at (up to `max_points`) occupied voxel centers. The rms error is
/// reported relative to `field_range` (typically max − min of the obstacle
/// field over the solver grid); when `None`, the range over the set is used.
pub fn self_consistency(
    region: &VoxelRegion,
    rho: &DensityPolynomial,
    target: impl Fn(&Vector3<f64>) -> f64 + Sync,
    max_points: usize,
    field_range: Option<f64>,
) -> Result<SelfConsistencyReport> {
    if region.is_empty() {
        return Err(Error::Domain("region is empty".into()));
    }
    if let Some(r) = field_range {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Domain(format!("field range must be positive, got {r}")));
        }
    }
    let pts = subsample(&region.centers(), max_points);
    let q = PotentialQuadrature::new(region, rho);
    let numeric = q.eval_many(&pts);
    let (mut lo, mut hi, mut err2) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for (p, nv) in pts.iter().zip(&numeric) {
        let t = target(p);
        lo = lo.min(t);
        hi = hi.max(t);
        err2 += (nv - t).powi(2);
    }
    let rms_error = (err2 / pts.len() as f64).sqrt();
    let set_range = hi - lo;
    let ratio = |r: f64| if r > 0.0 { rms_error / r } else { f64::INFINITY };
    let field_range = field_range.unwrap_or(set_range);
    Ok(SelfConsistencyReport {
        points: pts.len(),
        rms_error,
        field_range,
        set_range,
        relative: ratio(field_range),
        relative_to_set: ratio(set_range),
    })
}
