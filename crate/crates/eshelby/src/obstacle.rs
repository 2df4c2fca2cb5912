//! Obstacle functions whose coincidence sets become the constructed
//! inclusions.
//!
//! * `quartic`: φ = C − (1/12)Σx_k⁴ on U = {Σx_k⁴ ≤ 48C}, −3C outside.
//! * `quartic_log`: the quartic plus the clamped logarithm ω*.
//! * `even_degree_log`: Ĉ − Σx_k^(n+2)/((n+1)(n+2)) on Û, −Ĉ outside, plus ω*.
//! * `constant`: a flat obstacle, handy for solver baselines.
//!
//! ω* is centered at (12√C, 12√C) in the (x₁, x₂) plane: zero within radius
//! 6√C, −β·log(r²/36C) up to radius 18√C, and −β·log 9 beyond.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", try_from = "RawSpec")]
pub enum ObstacleSpec {
    Quartic {
        #[serde(rename = "C")]
        c: f64,
    },
    QuarticLog {
        #[serde(rename = "C")]
        c: f64,
        beta: f64,
    },
    EvenDegreeLog {
        #[serde(rename = "C")]
        c: f64,
        beta: f64,
        n: u32,
        #[serde(rename = "C_hat")]
        c_hat: f64,
    },
    Constant {
        value: f64,
    },
}

/// Unchecked mirror used for deserialization.
#[derive(Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum RawSpec {
    Quartic {
        #[serde(rename = "C")]
        c: f64,
    },
    QuarticLog {
        #[serde(rename = "C")]
        c: f64,
        beta: f64,
    },
    EvenDegreeLog {
        #[serde(rename = "C")]
        c: f64,
        beta: f64,
        n: u32,
        #[serde(rename = "C_hat")]
        c_hat: f64,
    },
    Constant {
        value: f64,
    },
}

impl TryFrom<RawSpec> for ObstacleSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        let s = match r {
            RawSpec::Quartic { c } => ObstacleSpec::Quartic { c },
            RawSpec::QuarticLog { c, beta } => ObstacleSpec::QuarticLog { c, beta },
            RawSpec::EvenDegreeLog { c, beta, n, c_hat } => ObstacleSpec::EvenDegreeLog { c, beta, n, c_hat },
            RawSpec::Constant { value } => ObstacleSpec::Constant { value },
        };
        s.validate()?;
        Ok(s)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "obstacle parameter {name} must be positive, got {v}"
        )))
    }
}

impl ObstacleSpec {
    pub fn quartic(c: f64) -> Result<Self> {
        let s = Self::Quartic { c };
        s.validate()?;
        Ok(s)
    }

    pub fn quartic_log(c: f64, beta: f64) -> Result<Self> {
        let s = Self::QuarticLog { c, beta };
        s.validate()?;
        Ok(s)
    }

    pub fn even_degree_log(c: f64, beta: f64, n: u32, c_hat: f64) -> Result<Self> {
        let s = Self::EvenDegreeLog { c, beta, n, c_hat };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Quartic { c } => positive("C", c),
            Self::QuarticLog { c, beta } => {
                positive("C", c)?;
                positive("beta", beta)
            }
            Self::EvenDegreeLog { c, beta, n, c_hat } => {
                positive("C", c)?;
                positive("beta", beta)?;
                positive("C_hat", c_hat)?;
                if n < 4 || n % 2 != 0 {
                    return Err(Error::Domain(format!("n must be an even integer >= 4, got {n}")));
                }
                Ok(())
            }
            Self::Constant { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Domain("constant obstacle must be finite".into()))
                }
            }
        }
    }

    /// Degree of the density the polynomial part corresponds to
    /// (Δφ = −Σx_kⁿ inside the support set); `None` for the flat obstacle.
    pub fn density_degree(&self) -> Option<u32> {
        match *self {
            Self::Quartic { .. } | Self::QuarticLog { .. } => Some(2),
            Self::EvenDegreeLog { n, .. } => Some(n),
            Self::Constant { .. } => None,
        }
    }

    /// Half-width along a coordinate axis of the polynomial support set.
    pub fn support_extent(&self) -> Option<f64> {
        match *self {
            Self::Quartic { c } | Self::QuarticLog { c, .. } => Some((48.0 * c).powf(0.25)),
            Self::EvenDegreeLog { .. } => Some(obstacle_radius(self)),
            Self::Constant { .. } => None,
        }
    }
}

/// Clamped logarithm ω*(x₁, x₂).
pub fn omega_star(c: f64, beta: f64, x1: f64, x2: f64) -> f64 {
    let m = 12.0 * c.sqrt();
    let r2 = (x1 - m).powi(2) + (x2 - m).powi(2);
    if r2 <= 36.0 * c {
        0.0
    } else if r2 >= 324.0 * c {
        -beta * 9f64.ln()
    } else {
        -beta * (r2 / (36.0 * c)).ln()
    }
}

fn quartic_piece(c: f64, x: &Vector3<f64>) -> f64 {
    let s = x[0].powi(4) + x[1].powi(4) + x[2].powi(4);
    if s <= 48.0 * c {
        c - s / 12.0
    } else {
        -3.0 * c
    }
}

pub fn eval_obstacle(spec: &ObstacleSpec, x: &Vector3<f64>) -> f64 {
    match *spec {
        ObstacleSpec::Quartic { c } => quartic_piece(c, x),
        ObstacleSpec::QuarticLog { c, beta } => quartic_piece(c, x) + omega_star(c, beta, x[0], x[1]),
        ObstacleSpec::EvenDegreeLog { c, beta, n, c_hat } => {
            let p = (n + 2) as i32;
            let s = x[0].powi(p) + x[1].powi(p) + x[2].powi(p);
            let k = ((n + 1) * (n + 2)) as f64;
            let poly = if s <= 2.0 * k * c_hat { c_hat - s / k } else { -c_hat };
            poly + omega_star(c, beta, x[0], x[1])
        }
        ObstacleSpec::Constant { value } => value,
    }
}

/// The smooth function the obstacle equals near the origin (no clamping):
/// the value the Newtonian potential should reproduce on the coincidence set.
pub fn smooth_branch(spec: &ObstacleSpec, x: &Vector3<f64>) -> f64 {
    let log = |c: f64, beta: f64| {
        let m = 12.0 * c.sqrt();
        let r2 = (x[0] - m).powi(2) + (x[1] - m).powi(2);
        -beta * (r2 / (36.0 * c)).ln()
    };
    match *spec {
        ObstacleSpec::Quartic { c } => c - (x[0].powi(4) + x[1].powi(4) + x[2].powi(4)) / 12.0,
        ObstacleSpec::QuarticLog { c, beta } => c - (x[0].powi(4) + x[1].powi(4) + x[2].powi(4)) / 12.0 + log(c, beta),
        ObstacleSpec::EvenDegreeLog { c, beta, n, c_hat } => {
            let p = (n + 2) as i32;
            let k = ((n + 1) * (n + 2)) as f64;
            c_hat - (x[0].powi(p) + x[1].powi(p) + x[2].powi(p)) / k + log(c, beta)
        }
        ObstacleSpec::Constant { value } => value,
    }
}

/// r₀ = 6√C for the quartic families, r̂ = (2(n+1)(n+2)Ĉ)^(1/(n+2)) for the
/// even-degree family. The flat obstacle reports 0.
pub fn obstacle_radius(spec: &ObstacleSpec) -> f64 {
    match *spec {
        ObstacleSpec::Quartic { c } | ObstacleSpec::QuarticLog { c, .. } => 6.0 * c.sqrt(),
        ObstacleSpec::EvenDegreeLog { n, c_hat, .. } => {
            let nf = n as f64;
            (2.0 * (nf + 1.0) * (nf + 2.0) * c_hat).powf(1.0 / (nf + 2.0))
        }
        ObstacleSpec::Constant { .. } => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstacleReport {
    pub lipschitz_bound: f64,
    pub r0: f64,
    pub max_laplacian: f64,
    pub semiconvexity_constant: f64,
    /// Outcome of the four conditions: finite Lipschitz data, φ ≤ 0 outside
    /// r₀, bounded Laplacian in B_r₀, semiconvexity.
    pub conditions: [bool; 4],
    pub all_conditions_pass: bool,
    /// Condition number (1-based) and sample point of the first failure.
    pub first_violation: Option<(usize, [f64; 3])>,
}

/// Unit directions used for directional derivatives: axes, face and body
/// diagonals (13 up to sign).
fn directions() -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for i in -1i32..=1 {
        for j in -1i32..=1 {
            for k in -1i32..=1 {
                let v = Vector3::new(i as f64, j as f64, k as f64);
                // keep one of each ± pair
                let first = [i, j, k].into_iter().find(|&c| c != 0);
                if first == Some(1) {
                    out.push(v.normalize());
                }
            }
        }
    }
    out
}

/// Samples the four obstacle conditions on a `resolution`³ lattice over
/// [−3r₀, 3r₀]³ with finite-difference step 1e-4·r₀.
pub fn validate_obstacle(spec: &ObstacleSpec, resolution: usize) -> Result<ObstacleReport> {
    spec.validate()?;
    if resolution < 3 {
        return Err(Error::Domain("sampling resolution must be at least 3".into()));
    }
    let r0 = obstacle_radius(spec);
    let scale = if r0 > 0.0 { r0 } else { 1.0 };
    let half = 3.0 * scale;
    let h = 1e-4 * scale;
    let dirs = directions();
    let f = |x: &Vector3<f64>| eval_obstacle(spec, x);

    let mut lip = 0.0f64;
    let mut max_lap = 0.0f64;
    let mut sup_d1 = 0.0f64;
    let mut sup_d2 = 0.0f64;
    let mut conditions = [true; 4];
    let mut first: Option<(usize, [f64; 3])> = None;
    let mut fail = |k: usize, x: &Vector3<f64>, conds: &mut [bool; 4]| {
        conds[k - 1] = false;
        if first.is_none() {
            first = Some((k, [x[0], x[1], x[2]]));
        }
    };
    let mut second_diffs: Vec<(Vector3<f64>, f64)> = Vec::new();

    let step = 2.0 * half / (resolution - 1) as f64;
    for i in 0..resolution {
        for j in 0..resolution {
            for k in 0..resolution {
                let x = Vector3::new(
                    -half + i as f64 * step,
                    -half + j as f64 * step,
                    -half + k as f64 * step,
                );
                let v = f(&x);
                let mut grad = Vector3::zeros();
                for a in 0..3 {
                    let mut e = Vector3::zeros();
                    e[a] = h;
                    grad[a] = (f(&(x + e)) - f(&(x - e))) / (2.0 * h);
                }
                if !v.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                    fail(1, &x, &mut conditions);
                    continue;
                }
                lip = lip.max(grad.norm());
                let r = x.norm();
                if r >= r0 && v > 1e-12 {
                    fail(2, &x, &mut conditions);
                }
                let mut lap = 0.0;
                let mut worst_d2 = f64::INFINITY;
                for d in &dirs {
                    let fp = f(&(x + d * h));
                    let fm = f(&(x - d * h));
                    let d1 = (fp - fm) / (2.0 * h);
                    let d2 = (fp - 2.0 * v + fm) / (h * h);
                    sup_d1 = sup_d1.max(d1.abs());
                    sup_d2 = sup_d2.max(d2.abs());
                    worst_d2 = worst_d2.min(d2);
                    if d.iter().filter(|c| **c != 0.0).count() == 1 {
                        lap += d2;
                    }
                }
                if r < r0 {
                    if !lap.is_finite() {
                        fail(3, &x, &mut conditions);
                    } else {
                        max_lap = max_lap.max(lap.abs());
                    }
                }
                second_diffs.push((x, worst_d2));
            }
        }
    }
    let c_phi = sup_d1 + sup_d2;
    // second difference of φ + ½C^φ|x|² along a unit direction is D²φ + C^φ
    let tol = 1e-8 * c_phi.max(1.0);
    for (x, d2) in &second_diffs {
        if d2 + c_phi < -tol {
            fail(4, x, &mut conditions);
            break;
        }
    }
    let all = conditions.iter().all(|c| *c);
    Ok(ObstacleReport {
        lipschitz_bound: lip,
        r0,
        max_laplacian: max_lap,
        semiconvexity_constant: c_phi,
        conditions,
        all_conditions_pass: all,
        first_violation: first,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_values() {
        let s = ObstacleSpec::quartic(1.0 / 36.0).unwrap();
        assert_eq!(eval_obstacle(&s, &Vector3::zeros()), 1.0 / 36.0);
        // on ∂U along an axis: x⁴ = 4/3
        let b = (4.0f64 / 3.0).powf(0.25);
        let inside = eval_obstacle(&s, &Vector3::new(b * (1.0 - 1e-12), 0.0, 0.0));
        let outside = eval_obstacle(&s, &Vector3::new(b * (1.0 + 1e-12), 0.0, 0.0));
        assert!((inside + 1.0 / 12.0).abs() < 1e-10);
        assert!((outside + 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(obstacle_radius(&s), 1.0);
        assert_eq!(obstacle_radius(&ObstacleSpec::quartic(0.25).unwrap()), 3.0);
    }

    #[test]
    fn omega_star_clamps() {
        let c = 1.0 / 36.0;
        let beta = 1.0 / 600.0;
        assert_eq!(omega_star(c, beta, 3.0, 2.0), 0.0);
        assert_eq!(omega_star(c, beta, 2.0, 2.0), 0.0);
        assert!((omega_star(c, beta, 5.0, 2.0) + beta * 9f64.ln()).abs() < 1e-15);
        assert!((omega_star(c, beta, 2.0, 4.0) + beta * 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn even_degree_radius() {
        let s = ObstacleSpec::even_degree_log(1.0 / 36.0, 1.0 / 600.0, 4, 1.0 / 36.0).unwrap();
        assert!((obstacle_radius(&s) - (5.0f64 / 3.0).powf(1.0 / 6.0)).abs() < 1e-14);
        assert!((obstacle_radius(&s) - 1.0889).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ObstacleSpec::quartic(0.0).is_err());
        assert!(ObstacleSpec::quartic(-1.0).is_err());
        assert!(ObstacleSpec::quartic_log(1.0, 0.0).is_err());
        assert!(ObstacleSpec::even_degree_log(1.0, 1.0, 3, 1.0).is_err());
        assert!(serde_json::from_str::<ObstacleSpec>(r#"{"family":"quartic","C":-2}"#).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let s = ObstacleSpec::even_degree_log(1.0 / 36.0, 1.0 / 600.0, 4, 1.0 / 36.0).unwrap();
        let txt = serde_json::to_string(&s).unwrap();
        assert!(txt.contains("\"family\":\"even_degree_log\""));
        assert!(txt.contains("\"C_hat\""));
        assert_eq!(serde_json::from_str::<ObstacleSpec>(&txt).unwrap(), s);
    }

    #[test]
    fn quartic_passes_validation() {
        let r = validate_obstacle(&ObstacleSpec::quartic(1.0 / 36.0).unwrap(), 25).unwrap();
        assert!(r.all_conditions_pass, "{r:?}");
        assert_eq!(r.r0, 1.0);
    }

    #[test]
    fn smooth_branch_agrees_near_origin() {
        let s = ObstacleSpec::quartic_log(1.0 / 36.0, 1.0 / 600.0).unwrap();
        let x = Vector3::new(0.2, -0.3, 0.1);
        assert!((smooth_branch(&s, &x) - eval_obstacle(&s, &x)).abs() < 1e-15);
    }
}
