//! Anisotropic stiffness tensors in Voigt notation (1=11, 2=22, 3=33, 4=23,
//! 5=13, 6=12), positive-definiteness checks per symmetry class, the
//! material constraints under which the construction applies, and the
//! derived stretch factors.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative tolerance for structural checks (symmetry, tied entries).
const STRUCT_TOL: f64 = 1e-12;
/// Absolute tolerance for "= 0" constraints on stiffness normalized by its
/// largest entry.
pub const CONSTRAINT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryClass {
    Isotropic,
    Cubic,
    TransverselyIsotropic,
    Orthotropic,
    /// Monoclinic with x₃ normal to the mirror plane.
    Monoclinic,
}

impl fmt::Display for SymmetryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SymmetryClass::Isotropic => "isotropic",
            SymmetryClass::Cubic => "cubic",
            SymmetryClass::TransverselyIsotropic => "transversely_isotropic",
            SymmetryClass::Orthotropic => "orthotropic",
            SymmetryClass::Monoclinic => "monoclinic",
        };
        f.write_str(s)
    }
}

/// Stiffness in Voigt form together with its declared symmetry class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorDoc", into = "TensorDoc")]
pub struct ElasticTensor {
    voigt: Matrix6<f64>,
    class: SymmetryClass,
}

fn voigt_index(i: usize, j: usize) -> usize {
    match (i, j) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (1, 2) | (2, 1) => 3,
        (0, 2) | (2, 0) => 4,
        _ => 5,
    }
}

/// Upper-triangle positions (0-based) allowed to be nonzero for a class.
fn allowed(class: SymmetryClass, i: usize, j: usize) -> bool {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let base = (i < 3 && j < 3) || (i == j);
    match class {
        SymmetryClass::Monoclinic => base || matches!((i, j), (0, 5) | (1, 5) | (2, 5) | (3, 4)),
        _ => base,
    }
}

impl ElasticTensor {
    /// Wraps a full Voigt matrix after checking symmetry, the sparsity
    /// pattern of `class` and the entries the class ties together.
    pub fn new(voigt: Matrix6<f64>, class: SymmetryClass) -> Result<Self> {
        check_structure(&voigt, class)?;
        Ok(Self { voigt, class })
    }

    pub fn isotropic(lambda: f64, mu: f64) -> Self {
        let mut m = Matrix6::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = lambda;
            }
            m[(i, i)] = lambda + 2.0 * mu;
            m[(i + 3, i + 3)] = mu;
        }
        Self {
            voigt: m,
            class: SymmetryClass::Isotropic,
        }
    }

    pub fn cubic(c11: f64, c12: f64, c44: f64) -> Self {
        let mut m = Matrix6::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = c12;
            }
            m[(i, i)] = c11;
            m[(i + 3, i + 3)] = c44;
        }
        Self {
            voigt: m,
            class: SymmetryClass::Cubic,
        }
    }

    pub fn transversely_isotropic(c11: f64, c12: f64, c13: f64, c33: f64, c44: f64) -> Self {
        let mut m = Matrix6::zeros();
        m[(0, 0)] = c11;
        m[(1, 1)] = c11;
        m[(2, 2)] = c33;
        m[(0, 1)] = c12;
        m[(1, 0)] = c12;
        m[(0, 2)] = c13;
        m[(2, 0)] = c13;
        m[(1, 2)] = c13;
        m[(2, 1)] = c13;
        m[(3, 3)] = c44;
        m[(4, 4)] = c44;
        m[(5, 5)] = 0.5 * (c11 - c12);
        Self {
            voigt: m,
            class: SymmetryClass::TransverselyIsotropic,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn orthotropic(
        c11: f64,
        c12: f64,
        c13: f64,
        c22: f64,
        c23: f64,
        c33: f64,
        c44: f64,
        c55: f64,
        c66: f64,
    ) -> Self {
        let mut m = Matrix6::zeros();
        m[(0, 0)] = c11;
        m[(1, 1)] = c22;
        m[(2, 2)] = c33;
        m[(0, 1)] = c12;
        m[(1, 0)] = c12;
        m[(0, 2)] = c13;
        m[(2, 0)] = c13;
        m[(1, 2)] = c23;
        m[(2, 1)] = c23;
        m[(3, 3)] = c44;
        m[(4, 4)] = c55;
        m[(5, 5)] = c66;
        Self {
            voigt: m,
            class: SymmetryClass::Orthotropic,
        }
    }

    /// Monoclinic tensor: the orthotropic entries plus C16, C26, C36, C45.
    pub fn monoclinic(ortho: [f64; 9], c16: f64, c26: f64, c36: f64, c45: f64) -> Self {
        let [c11, c12, c13, c22, c23, c33, c44, c55, c66] = ortho;
        let mut t = Self::orthotropic(c11, c12, c13, c22, c23, c33, c44, c55, c66);
        for (i, j, v) in [(0, 5, c16), (1, 5, c26), (2, 5, c36), (3, 4, c45)] {
            t.voigt[(i, j)] = v;
            t.voigt[(j, i)] = v;
        }
        t.class = SymmetryClass::Monoclinic;
        t
    }

    pub fn class(&self) -> SymmetryClass {
        self.class
    }

    pub fn voigt(&self) -> &Matrix6<f64> {
        &self.voigt
    }

    /// Voigt entry with 1-based indices, `c(1, 1)` = C11.
    pub fn c(&self, i: usize, j: usize) -> f64 {
        self.voigt[(i - 1, j - 1)]
    }

    /// Full fourth-order stiffness C_ijkl.
    pub fn stiffness(&self) -> [[[[f64; 3]; 3]; 3]; 3] {
        let mut c = [[[[0.0; 3]; 3]; 3]; 3];
        for (i, ci) in c.iter_mut().enumerate() {
            for (j, cij) in ci.iter_mut().enumerate() {
                for (k, cijk) in cij.iter_mut().enumerate() {
                    for (l, v) in cijk.iter_mut().enumerate() {
                        *v = self.voigt[(voigt_index(i, j), voigt_index(k, l))];
                    }
                }
            }
        }
        c
    }

    /// Lamé constants (λ, μ) of an isotropic tensor.
    pub fn lame(&self) -> Option<(f64, f64)> {
        (self.class == SymmetryClass::Isotropic).then(|| (self.c(1, 2), self.c(4, 4)))
    }

    fn max_entry(&self) -> f64 {
        self.voigt.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Value normalized by the largest stiffness entry.
    fn normalized(&self, v: f64) -> f64 {
        v / self.max_entry()
    }
}

fn check_structure(m: &Matrix6<f64>, class: SymmetryClass) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Structural("non-finite stiffness entry".into()));
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Structural("stiffness matrix is identically zero".into()));
    }
    for i in 0..6 {
        for j in (i + 1)..6 {
            if (m[(i, j)] - m[(j, i)]).abs() > STRUCT_TOL * scale {
                return Err(Error::Structural(format!(
                    "Voigt matrix not symmetric at C{}{} / C{}{}",
                    i + 1,
                    j + 1,
                    j + 1,
                    i + 1
                )));
            }
            if !allowed(class, i, j) && m[(i, j)] != 0.0 {
                return Err(Error::Structural(format!(
                    "C{}{} must be zero for class {class}",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    let tie = |a: f64, b: f64, what: &str| -> Result<()> {
        if (a - b).abs() > STRUCT_TOL * scale {
            Err(Error::Structural(format!("{what} violated for class {class}")))
        } else {
            Ok(())
        }
    };
    let c = |i: usize, j: usize| m[(i - 1, j - 1)];
    match class {
        SymmetryClass::Isotropic | SymmetryClass::Cubic => {
            tie(c(1, 1), c(2, 2), "C11 = C22")?;
            tie(c(1, 1), c(3, 3), "C11 = C33")?;
            tie(c(1, 2), c(1, 3), "C12 = C13")?;
            tie(c(1, 2), c(2, 3), "C12 = C23")?;
            tie(c(4, 4), c(5, 5), "C44 = C55")?;
            tie(c(4, 4), c(6, 6), "C44 = C66")?;
            if class == SymmetryClass::Isotropic {
                tie(c(4, 4), 0.5 * (c(1, 1) - c(1, 2)), "C44 = (C11 - C12)/2")?;
            }
        }
        SymmetryClass::TransverselyIsotropic => {
            tie(c(1, 1), c(2, 2), "C11 = C22")?;
            tie(c(1, 3), c(2, 3), "C13 = C23")?;
            tie(c(4, 4), c(5, 5), "C44 = C55")?;
            tie(c(6, 6), 0.5 * (c(1, 1) - c(1, 2)), "C66 = (C11 - C12)/2")?;
        }
        SymmetryClass::Orthotropic | SymmetryClass::Monoclinic => {}
    }
    Ok(())
}

/// Outcome of the positive-definiteness inequalities of a symmetry class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub class: SymmetryClass,
    pub pass: bool,
    /// Every inequality checked, with its outcome.
    pub checked: Vec<(String, bool)>,
    /// Names of the violated inequalities.
    pub violated: Vec<String>,
}

/// Checks a raw Voigt matrix: structural problems are errors, failed
/// inequalities are reported.
pub fn validate_voigt(voigt: Matrix6<f64>, class: SymmetryClass) -> Result<ValidityReport> {
    let t = ElasticTensor::new(voigt, class)?;
    Ok(validate_elastic_tensor(&t))
}

/// Positive-definiteness inequalities of the declared symmetry class.
pub fn validate_elastic_tensor(t: &ElasticTensor) -> ValidityReport {
    let c = |i, j| t.c(i, j);
    let mut checked: Vec<(String, bool)> = Vec::new();
    let mut push = |name: &str, ok: bool| checked.push((name.to_string(), ok));
    match t.class {
        SymmetryClass::Isotropic => {
            let (lambda, mu) = (c(1, 2), c(4, 4));
            push("mu > 0", mu > 0.0);
            push("3*lambda + 2*mu > 0", 3.0 * lambda + 2.0 * mu > 0.0);
        }
        SymmetryClass::Cubic => {
            push("C11 > 0", c(1, 1) > 0.0);
            push("C44 > 0", c(4, 4) > 0.0);
            push("C11 > C12", c(1, 1) > c(1, 2));
            push("C12 > -C11/3", c(1, 2) > -c(1, 1) / 3.0);
        }
        SymmetryClass::TransverselyIsotropic => {
            let (c11, c12, c13, c33, c44) = (c(1, 1), c(1, 2), c(1, 3), c(3, 3), c(4, 4));
            push("C44 > 0", c44 > 0.0);
            push("C11 - C12 > 0", c11 - c12 > 0.0);
            push("C11 + C12 + C33 > 0", c11 + c12 + c33 > 0.0);
            push("(C11 + C12)*C33 > 2*C13^2", (c11 + c12) * c33 > 2.0 * c13 * c13);
        }
        SymmetryClass::Orthotropic | SymmetryClass::Monoclinic => {
            for (name, i) in [("C11", 1), ("C22", 2), ("C33", 3), ("C44", 4), ("C55", 5), ("C66", 6)] {
                push(&format!("{name} > 0"), c(i, i) > 0.0);
            }
            push("C11*C22 > C12^2", c(1, 1) * c(2, 2) > c(1, 2).powi(2));
            let lhs = c(1, 1) * c(2, 2) * c(3, 3) + 2.0 * c(1, 2) * c(2, 3) * c(1, 3);
            let rhs = c(1, 1) * c(2, 3).powi(2) + c(2, 2) * c(1, 3).powi(2) + c(3, 3) * c(1, 2).powi(2);
            push(
                "C11*C22*C33 + 2*C12*C23*C13 > C11*C23^2 + C22*C13^2 + C33*C12^2",
                lhs > rhs,
            );
            if t.class == SymmetryClass::Monoclinic {
                push("C44*C55 > C45^2", c(4, 4) * c(5, 5) > c(4, 5).powi(2));
                // The list above ignores the C16/C26/C36 coupling, so it is
                // necessary but not sufficient; require the full matrix too.
                push("Voigt matrix positive definite", t.voigt.cholesky().is_some());
            }
        }
    }
    let violated: Vec<String> = checked.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.clone()).collect();
    ValidityReport {
        class: t.class,
        pass: violated.is_empty(),
        checked,
        violated,
    }
}

/// Which transversely isotropic Green-function branch applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TiBranch {
    /// √(C11·C33) − C13 − 2·C44 > 0: two distinct real roots v₁ > v₂.
    NonDegenerate,
    /// √(C11·C33) − C13 − 2·C44 = 0: a double root v = (C11/C33)^¼.
    Degenerate,
    /// √(C11·C33) − C13 − 2·C44 < 0: complex roots, not supported.
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    /// The normalized quantity the check is about (e.g. (C12+C44)/max|C|).
    pub value: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiStatus {
    pub c13_plus_c44_zero: bool,
    /// (√(C11·C33) − C13 − 2·C44) / max|C|.
    pub degeneracy_margin: f64,
    pub branch: TiBranch,
}

/// Which construction scenario a tensor satisfies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub class: SymmetryClass,
    pub checks: Vec<ConstraintCheck>,
    pub ti: Option<TiStatus>,
    /// True when some construction scenario of the class applies.
    pub satisfied: bool,
}

fn zero_check(t: &ElasticTensor, name: &str, v: f64) -> ConstraintCheck {
    let value = t.normalized(v);
    ConstraintCheck {
        name: name.into(),
        value,
        satisfied: value.abs() <= CONSTRAINT_TOL,
    }
}

fn nonzero_check(t: &ElasticTensor, name: &str, v: f64) -> ConstraintCheck {
    let value = t.normalized(v);
    ConstraintCheck {
        name: name.into(),
        value,
        satisfied: value.abs() > CONSTRAINT_TOL,
    }
}

pub(crate) fn ti_status(t: &ElasticTensor) -> TiStatus {
    let (c11, c13, c33, c44) = (t.c(1, 1), t.c(1, 3), t.c(3, 3), t.c(4, 4));
    let margin = t.normalized((c11 * c33).sqrt() - c13 - 2.0 * c44);
    let branch = if margin.abs() <= CONSTRAINT_TOL {
        TiBranch::Degenerate
    } else if margin > 0.0 {
        TiBranch::NonDegenerate
    } else {
        TiBranch::Complex
    };
    TiStatus {
        c13_plus_c44_zero: t.normalized(c13 + c44).abs() <= CONSTRAINT_TOL,
        degeneracy_margin: margin,
        branch,
    }
}

/// Reports which construction scenario applies to `t`.
///
/// Requires `t` to pass [`validate_elastic_tensor`].
pub fn check_construction_constraints(t: &ElasticTensor) -> Result<ConstraintReport> {
    let validity = validate_elastic_tensor(t);
    if !validity.pass {
        return Err(Error::Domain(format!(
            "tensor is not positive definite: {}",
            validity.violated.join("; ")
        )));
    }
    let c = |i, j| t.c(i, j);
    let mut ti = None;
    let checks = match t.class {
        SymmetryClass::Isotropic => Vec::new(),
        SymmetryClass::Cubic => vec![zero_check(t, "C12 + C44 = 0", c(1, 2) + c(4, 4))],
        SymmetryClass::TransverselyIsotropic => {
            let status = ti_status(t);
            let checks = vec![
                zero_check(t, "C13 + C44 = 0", c(1, 3) + c(4, 4)),
                ConstraintCheck {
                    name: "sqrt(C11*C33) - C13 - 2*C44 >= 0".into(),
                    value: status.degeneracy_margin,
                    satisfied: status.branch != TiBranch::Complex,
                },
            ];
            ti = Some(status);
            checks
        }
        SymmetryClass::Orthotropic => vec![
            nonzero_check(t, "C33 != C44", c(3, 3) - c(4, 4)),
            nonzero_check(t, "C44 != C55", c(4, 4) - c(5, 5)),
            zero_check(t, "C12 + C66 = 0", c(1, 2) + c(6, 6)),
            zero_check(t, "C13 + C55 = 0", c(1, 3) + c(5, 5)),
            zero_check(t, "C23 + C44 = 0", c(2, 3) + c(4, 4)),
        ],
        SymmetryClass::Monoclinic => vec![
            nonzero_check(t, "C16 != 0", c(1, 6)),
            zero_check(t, "C36 = 0", c(3, 6)),
            zero_check(t, "C45 = 0", c(4, 5)),
            zero_check(t, "C13 + C55 = 0", c(1, 3) + c(5, 5)),
            zero_check(t, "C23 + C44 = 0", c(2, 3) + c(4, 4)),
        ],
    };
    let satisfied = match &ti {
        // Either the C13+C44=0 route or a real-root branch of the quartic.
        Some(s) => s.c13_plus_c44_zero || s.branch != TiBranch::Complex,
        None => checks.iter().all(|k| k.satisfied),
    };
    Ok(ConstraintReport {
        class: t.class,
        checks,
        ti,
        satisfied,
    })
}

/// Stretch factors mapping the inclusion to the frame where the strain is
/// a Hessian of a Newtonian potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleFactors {
    Isotropic,
    /// t = √(C44/C11).
    CubicT {
        t: f64,
    },
    /// Root of C33·C44·v⁴ − (C11·C33 + C44² − (C13+C44)²)·v² + C11·C44 = 0.
    /// `v` is the larger root v₁; `gamma` is the eigenstress ratio σ₃₃/σ₁₁
    /// that removes the v₂ potential.
    TransisoV {
        v: f64,
        v1: f64,
        v2: f64,
        gamma: f64,
        degenerate: bool,
    },
    /// s = √(C44/C33), used when C13 + C44 = 0.
    TransisoS {
        s: f64,
    },
    /// s₁ = √(C33/C55), s₂ = √(C33/C44).
    OrthoS1S2 {
        s1: f64,
        s2: f64,
    },
}

/// Coefficient `B` of the quartic in v (as a quadratic in v²).
fn quartic_b(t: &ElasticTensor) -> f64 {
    let (c11, c13, c33, c44) = (t.c(1, 1), t.c(1, 3), t.c(3, 3), t.c(4, 4));
    c11 * c33 + c44 * c44 - (c13 + c44).powi(2)
}

/// Residual of the quartic for `v`, relative to C11·C44.
pub fn quartic_residual(t: &ElasticTensor, v: f64) -> f64 {
    let (c11, c33, c44) = (t.c(1, 1), t.c(3, 3), t.c(4, 4));
    let w = v * v;
    (c33 * c44 * w * w - quartic_b(t) * w + c11 * c44) / (c11 * c44)
}

/// Both positive roots (v₁ ≥ v₂) of the quartic for a TI tensor.
pub fn quartic_roots(t: &ElasticTensor) -> Result<(f64, f64)> {
    let (c11, c33, c44) = (t.c(1, 1), t.c(3, 3), t.c(4, 4));
    if ti_status(t).branch == TiBranch::Degenerate {
        let v = (c11 / c33).powf(0.25);
        return Ok((v, v));
    }
    let b = quartic_b(t);
    let a = c33 * c44;
    let cc = c11 * c44;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return Err(Error::Domain(format!(
            "quartic in v has no real root: discriminant (C11*C33 + C44^2 - (C13+C44)^2)^2 \
             - 4*C11*C33*C44^2 = {disc:e} < 0"
        )));
    }
    if b <= 0.0 {
        return Err(Error::Domain(format!(
            "quartic in v has no positive root: C11*C33 + C44^2 - (C13+C44)^2 = {b:e} <= 0"
        )));
    }
    let q = 0.5 * (b + disc.sqrt());
    let w1 = q / a;
    let w2 = cc / q;
    Ok((w1.max(w2).sqrt(), w1.min(w2).sqrt()))
}

/// Stretch factors of the construction scenario that applies to `t`.
pub fn scale_factors(t: &ElasticTensor) -> Result<ScaleFactors> {
    let report = check_construction_constraints(t)?;
    let c = |i, j| t.c(i, j);
    let unmet = || {
        let names: Vec<_> = report
            .checks
            .iter()
            .filter(|k| !k.satisfied)
            .map(|k| k.name.clone())
            .collect();
        Error::Domain(format!("construction constraints not satisfied: {}", names.join("; ")))
    };
    match t.class {
        SymmetryClass::Isotropic => Ok(ScaleFactors::Isotropic),
        SymmetryClass::Cubic => {
            if !report.satisfied {
                return Err(unmet());
            }
            Ok(ScaleFactors::CubicT {
                t: (c(4, 4) / c(1, 1)).sqrt(),
            })
        }
        SymmetryClass::TransverselyIsotropic => {
            let status = report.ti.expect("TI status");
            if status.c13_plus_c44_zero {
                return Ok(ScaleFactors::TransisoS {
                    s: (c(4, 4) / c(3, 3)).sqrt(),
                });
            }
            let (v1, v2) = quartic_roots(t)?;
            let gamma = (c(1, 1) * c(3, 3) - c(3, 3) * c(4, 4) * v1 * v1) / ((c(1, 3) + c(4, 4)) * c(1, 1));
            Ok(ScaleFactors::TransisoV {
                v: v1,
                v1,
                v2,
                gamma,
                degenerate: status.branch == TiBranch::Degenerate,
            })
        }
        SymmetryClass::Orthotropic | SymmetryClass::Monoclinic => {
            if !report.satisfied {
                return Err(unmet());
            }
            Ok(ScaleFactors::OrthoS1S2 {
                s1: (c(3, 3) / c(5, 5)).sqrt(),
                s2: (c(3, 3) / c(4, 4)).sqrt(),
            })
        }
    }
}

/// The constants (a, b, c) of the even-degree strain integrals:
/// cubic (C44, C44, C11), TI (C44, C44, C33), orthotropic and monoclinic
/// (C55, C44, C33).
pub fn abc_constants(t: &ElasticTensor) -> Result<[f64; 3]> {
    let c = |i, j| t.c(i, j);
    match t.class {
        SymmetryClass::Cubic => Ok([c(4, 4), c(4, 4), c(1, 1)]),
        SymmetryClass::TransverselyIsotropic => Ok([c(4, 4), c(4, 4), c(3, 3)]),
        SymmetryClass::Orthotropic | SymmetryClass::Monoclinic => Ok([c(5, 5), c(4, 4), c(3, 3)]),
        SymmetryClass::Isotropic => Err(Error::Unsupported(
            "the (a, b, c) table is defined for cubic, TI, orthotropic and monoclinic media".into(),
        )),
    }
}

/// Document form: `symmetry_class` plus the independent entries by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorDoc {
    symmetry_class: SymmetryClass,
    #[serde(flatten)]
    entries: BTreeMap<String, f64>,
}

fn names_for(class: SymmetryClass) -> &'static [&'static str] {
    match class {
        SymmetryClass::Isotropic => &["lambda", "mu"],
        SymmetryClass::Cubic => &["C11", "C12", "C44"],
        SymmetryClass::TransverselyIsotropic => &["C11", "C12", "C13", "C33", "C44"],
        SymmetryClass::Orthotropic => &["C11", "C12", "C13", "C22", "C23", "C33", "C44", "C55", "C66"],
        SymmetryClass::Monoclinic => &[
            "C11", "C12", "C13", "C22", "C23", "C33", "C44", "C55", "C66", "C16", "C26", "C36", "C45",
        ],
    }
}

impl TryFrom<TensorDoc> for ElasticTensor {
    type Error = Error;

    fn try_from(doc: TensorDoc) -> Result<Self> {
        let names = names_for(doc.symmetry_class);
        for key in doc.entries.keys() {
            if !names.contains(&key.as_str()) {
                return Err(Error::Parse(format!(
                    "unexpected key '{key}' for class {}",
                    doc.symmetry_class
                )));
            }
        }
        let get = |k: &str| -> Result<f64> {
            doc.entries
                .get(k)
                .copied()
                .ok_or_else(|| Error::Parse(format!("missing key '{k}' for class {}", doc.symmetry_class)))
        };
        let t = match doc.symmetry_class {
            SymmetryClass::Isotropic => Self::isotropic(get("lambda")?, get("mu")?),
            SymmetryClass::Cubic => Self::cubic(get("C11")?, get("C12")?, get("C44")?),
            SymmetryClass::TransverselyIsotropic => {
                Self::transversely_isotropic(get("C11")?, get("C12")?, get("C13")?, get("C33")?, get("C44")?)
            }
            SymmetryClass::Orthotropic => Self::orthotropic(
                get("C11")?,
                get("C12")?,
                get("C13")?,
                get("C22")?,
                get("C23")?,
                get("C33")?,
                get("C44")?,
                get("C55")?,
                get("C66")?,
            ),
            SymmetryClass::Monoclinic => Self::monoclinic(
                [
                    get("C11")?,
                    get("C12")?,
                    get("C13")?,
                    get("C22")?,
                    get("C23")?,
                    get("C33")?,
                    get("C44")?,
                    get("C55")?,
                    get("C66")?,
                ],
                get("C16")?,
                get("C26")?,
                get("C36")?,
                get("C45")?,
            ),
        };
        check_structure(&t.voigt, t.class)?;
        Ok(t)
    }
}

impl From<ElasticTensor> for TensorDoc {
    fn from(t: ElasticTensor) -> Self {
        let mut entries = BTreeMap::new();
        for name in names_for(t.class) {
            let v = match *name {
                "lambda" => t.c(1, 2),
                "mu" => t.c(4, 4),
                n => {
                    let b = n.as_bytes();
                    t.c((b[1] - b'0') as usize, (b[2] - b'0') as usize)
                }
            };
            entries.insert(name.to_string(), v);
        }
        TensorDoc {
            symmetry_class: t.class,
            entries,
        }
    }
}
