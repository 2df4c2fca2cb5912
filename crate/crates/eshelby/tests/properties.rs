//! Property-based checks of the invariants the pipeline relies on.
#![allow(clippy::needless_range_loop)]

use eshelby::ellipsoid_potential::EllipsoidPose;
use eshelby::elliptic::{compute_i_integrals, recurrence_residual, EllipsoidAxes};
use eshelby::geometry::{
    read_csv, stretch_region, symmetric_difference_count, write_csv, DiagonalStretch, VoxelRegion,
};
use eshelby::greens_ti::green_ti;
use eshelby::materials::{check_construction_constraints, validate_elastic_tensor, ElasticTensor};
use eshelby::obstacle::{eval_obstacle, smooth_branch, ObstacleSpec};
use eshelby::verify::{ellipsoid_potential_closed_form, fit_polynomial, DensityPolynomial};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

fn axes() -> impl Strategy<Value = [f64; 3]> {
    [0.5f64..2.0, 0.5f64..2.0, 0.5f64..2.0]
}

fn unit_point() -> impl Strategy<Value = Vector3<f64>> {
    [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0].prop_map(|p| Vector3::new(p[0], p[1], p[2]))
}

/// Non-degenerate transversely isotropic tensors with C13 + C44 > 0 on the
/// real-root branch.
fn ti_tensor() -> impl Strategy<Value = ElasticTensor> {
    (2.0f64..12.0, 0.5f64..3.0, 0.2f64..1.0, 0.5f64..3.0).prop_filter_map(
        "needs a real distinct-root branch",
        |(c33, c44, f13, k)| {
            let c11 = k * c33;
            let c13 = f13 * (c11 * c33).sqrt() - 2.0 * c44;
            let c12 = 0.3 * c11;
            let gap = (c11 * c33).sqrt() - c13 - 2.0 * c44;
            let t = ElasticTensor::transversely_isotropic(c11, c12, c13, c33, c44);
            (c13 + c44 > 0.05 && gap > 0.05 && validate_elastic_tensor(&t).pass).then_some(t)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn i_integrals_sum_to_one(a in axes()) {
        let ax = EllipsoidAxes::new(a[0], a[1], a[2]).unwrap();
        let t = compute_i_integrals(&ax).unwrap();
        prop_assert!((t.i.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(recurrence_residual(&ax, &t) < 1e-8);
    }

    #[test]
    fn i_integrals_follow_axis_permutation(a in axes()) {
        let t = compute_i_integrals(&EllipsoidAxes::new(a[0], a[1], a[2]).unwrap()).unwrap();
        let p = compute_i_integrals(&EllipsoidAxes::new(a[2], a[0], a[1]).unwrap()).unwrap();
        prop_assert!((t.i0 - p.i0).abs() < 1e-12 * t.i0);
        prop_assert!((t.i[0] - p.i[1]).abs() < 1e-12);
        prop_assert!((t.ij[0][2] - p.ij[1][0]).abs() < 1e-10 * t.ij[0][2].abs());
    }

    /// ΔN = ρ inside the ellipsoid, checked by central differences.
    #[test]
    fn closed_form_potential_solves_poisson(a in axes(), z in unit_point(), angles in [0.0f64..3.0, 0.0f64..3.0, 0.0f64..3.0], quad in any::<bool>()) {
        let rot = Rotation3::from_euler_angles(angles[0], angles[1], angles[2]);
        let pose = EllipsoidPose::new(EllipsoidAxes::new(a[0], a[1], a[2]).unwrap(), *rot.matrix(), Vector3::new(0.1, -0.2, 0.05)).unwrap();
        let rho = if quad { DensityPolynomial::unit_quadratic() } else { DensityPolynomial::Constant { c0: 1.7 } };
        let n = ellipsoid_potential_closed_form(&pose, &rho).unwrap();
        let body = 0.7 * Vector3::new(a[0] * z[0], a[1] * z[1], a[2] * z[2]) / z.norm().max(1.0);
        let x = rot * body + pose.translation;
        let h = 1e-3;
        let lap: f64 = (0..3).map(|k| {
            let e = Vector3::ith(k, h);
            (n(&(x + e)) - 2.0 * n(&x) + n(&(x - e))) / (h * h)
        }).sum();
        let want = rho.eval(&x);
        prop_assert!((lap - want).abs() < 1e-5 * (1.0 + want.abs()), "{} vs {}", lap, want);
    }

    /// The quartic obstacle is invariant under the 48 signed permutations.
    #[test]
    fn quartic_obstacle_symmetry(x in unit_point(), perm in 0usize..6, signs in 0u32..8) {
        let spec = ObstacleSpec::quartic(1.0 / 36.0).unwrap();
        let p = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]][perm];
        let y = Vector3::from_fn(|a, _| if signs >> a & 1 == 1 { -x[p[a]] } else { x[p[a]] });
        prop_assert!((eval_obstacle(&spec, &x) - eval_obstacle(&spec, &y)).abs() < 1e-15);
    }

    /// The quartic obstacle is its smooth branch clamped from below at −3C.
    #[test]
    fn quartic_obstacle_is_clamped_branch(x in unit_point()) {
        let c = 1.0 / 36.0;
        let spec = ObstacleSpec::quartic(c).unwrap();
        let x = 1.2 * x;
        let want = smooth_branch(&spec, &x).max(-3.0 * c);
        prop_assert!((eval_obstacle(&spec, &x) - want).abs() < 1e-15);
    }

    /// Symmetry, evenness and −1 homogeneity of the Green function.
    #[test]
    fn green_function_structure(c in ti_tensor(), x in unit_point(), lambda in 0.2f64..5.0) {
        prop_assume!(x.norm() > 1e-2);
        let g = green_ti(&c, &x).unwrap();
        let gm = green_ti(&c, &(-x)).unwrap();
        let gs = green_ti(&c, &(lambda * x)).unwrap();
        let scale = g.amax();
        prop_assert!((g - g.transpose()).amax() <= 1e-12 * scale);
        prop_assert!((g - gm).amax() <= 1e-12 * scale);
        prop_assert!((lambda * gs - g).amax() <= 1e-10 * scale);
    }

    /// Positive multiples of a valid tensor stay valid and keep their
    /// construction constraints.
    #[test]
    fn validity_is_scale_invariant(c11 in 2.0f64..10.0, c12f in -0.4f64..0.4, c44 in 0.2f64..3.0, s in 0.01f64..100.0) {
        let c12 = c12f * c11;
        let a = ElasticTensor::cubic(c11, c12, c44);
        let b = ElasticTensor::cubic(s * c11, s * c12, s * c44);
        prop_assert_eq!(validate_elastic_tensor(&a).pass, validate_elastic_tensor(&b).pass);
        if validate_elastic_tensor(&a).pass {
            let ra = check_construction_constraints(&a).unwrap();
            let rb = check_construction_constraints(&b).unwrap();
            prop_assert_eq!(ra.satisfied, rb.satisfied);
        }
    }

    /// Stretching is a voxel bijection with volume factor ∏ 1/d.
    #[test]
    fn stretch_round_trip(d in [0.3f64..3.0, 0.3f64..3.0, 0.3f64..3.0], r in 0.3f64..0.9) {
        let region = VoxelRegion::centered_cube(17, 0.1, |x| x.norm() <= r).unwrap();
        let s = DiagonalStretch::new(d[0], d[1], d[2]).unwrap();
        let out = stretch_region(&region, &s);
        prop_assert_eq!(out.count(), region.count());
        let ratio = out.voxel_volume() / region.voxel_volume();
        prop_assert!((ratio - s.volume_factor()).abs() < 1e-12 * ratio);
        let back = stretch_region(&out, &s.inverse());
        prop_assert_eq!(symmetric_difference_count(&back, &region).unwrap(), 0);
        for (p, q) in back.centers().iter().zip(region.centers()) {
            prop_assert!((p - q).amax() < 1e-12);
        }
    }

    /// CSV export followed by import reproduces the voxel set.
    #[test]
    fn csv_round_trip(bits in proptest::collection::vec(any::<bool>(), 5 * 5 * 5)) {
        prop_assume!(bits.iter().any(|b| *b));
        let region = VoxelRegion::new([0.1, 0.2, 0.05], [-0.2, 0.1, 0.0], [5, 5, 5], bits).unwrap();
        let mut buf = Vec::new();
        write_csv(&region, &mut buf).unwrap();
        let back = read_csv(std::str::from_utf8(&buf).unwrap(), Some(region.spacing)).unwrap();
        let mut a: Vec<[i64; 3]> = region.centers().iter().map(|c| [0, 1, 2].map(|k| (c[k] / region.spacing[k]).round() as i64)).collect();
        let mut b: Vec<[i64; 3]> = back.centers().iter().map(|c| [0, 1, 2].map(|k| (c[k] / region.spacing[k]).round() as i64)).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    /// Least squares reproduces any polynomial of the fitted degree.
    #[test]
    fn fit_recovers_polynomials(coef in proptest::collection::vec(-1.0f64..1.0, 10)) {
        let f = |x: &Vector3<f64>| coef[0] + coef[1] * x[0] + coef[2] * x[1] + coef[3] * x[2]
            + coef[4] * x[0] * x[0] + coef[5] * x[1] * x[1] + coef[6] * x[2] * x[2]
            + coef[7] * x[0] * x[1] + coef[8] * x[1] * x[2] + coef[9] * x[2] * x[0];
        let pts: Vec<Vector3<f64>> = (0..64).map(|i| {
            let t = i as f64;
            Vector3::new((0.7 * t).sin(), (1.3 * t).cos(), (0.37 * t).sin() * (0.11 * t).cos())
        }).collect();
        let vals: Vec<f64> = pts.iter().map(f).collect();
        let fit = fit_polynomial(&pts, &vals, 2).unwrap();
        for p in &pts {
            prop_assert!((fit.eval(p) - f(p)).abs() < 1e-9);
        }
    }
}
