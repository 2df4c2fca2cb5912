"""Smoke test for the eshelby_py extension.

Build and install first:
    pip install --no-build-isolation -e crates/eshelby-py
then run:
    python python/smoke_test.py
"""

import math

import eshelby_py as es


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")
    print(f"ok   {msg}")


def main():
    # closed-form potentials
    v = es.ellipsoid_potential([1.0, 1.0, 1.0], [0.0, 0.0, 0.0], "quadratic")
    check(abs(v - 0.25) < 1e-14, "quadratic-density ball potential at the centre is 1/4")
    v = es.ellipsoid_potential([1.0, 1.0, 1.0], [0.5, 0.0, 0.0], "constant")
    check(abs(v + (3.0 - 0.25) / 6.0) < 1e-14, "constant-density ball potential off centre")
    t = es.i_integrals([1.3, 0.8, 0.6])
    check(abs(sum(t["i"]) - 1.0) < 1e-12, "I1 + I2 + I3 = 1")

    # materials and the TI Green function
    cubic = es.ElasticTensor.cubic(4.0, -1.0, 1.0)
    check(cubic.symmetry_class == "cubic", "cubic tensor class")
    check(cubic.validate()["pass"], "cubic tensor is positive definite")
    sf = cubic.scale_factors()
    check(sf["kind"] == "cubic_t" and abs(sf["t"] - 0.5) < 1e-15, "cubic stretch t = 1/2")
    ti = es.ElasticTensor.transversely_isotropic(16.0, 6.0, 2.0, 1.0, 1.0)
    k = ti.ti_constants()
    check(k["branch"] == "degenerate" and abs(k["v"] - 2.0) < 1e-12, "degenerate TI speed v = 2")
    g = ti.green([0.3, -0.2, 0.5])
    check(all(g[i][j] == g[j][i] for i in range(3) for j in range(3)), "Green function is symmetric")
    try:
        ti.green([0.0, 0.0, 0.0])
        check(False, "Green function at the origin raises")
    except ValueError:
        check(True, "Green function at the origin raises")

    # obstacle and configuration
    check(math.isclose(es.obstacle({"family": "quartic", "C": 1 / 36}, [0, 0, 0]), 1 / 36), "quartic obstacle at origin")
    try:
        es.load_config({"material": {"symmetry_class": "isotropic", "lambda": 1, "mu": 1},
                        "obstacle": {"family": "quartic", "C": 0.03}, "grid": {"n": 8}})
        check(False, "coarse grid rejected")
    except ValueError as e:
        check("grid.n" in str(e), "coarse grid rejected with field path")

    # a small end-to-end construction
    cfg = es.preset("omega1")
    cfg["grid"]["n"] = 32
    run = es.construct(cfg)
    s = run.summary
    check(s["converged"] and s["components"] == 1 and s["contained"], "construction converged to one contained component")
    check(len(run.region) == s["voxel_count"] > 0, "region size matches summary")
    check(math.isclose(run.inclusion.volume(), run.region.volume() * 2.0, rel_tol=1e-12), "stretch (1,1,1/2) doubles the volume")
    back = es.VoxelRegion.from_csv(run.inclusion.to_csv())
    check(back.count() == run.inclusion.count(), "CSV round trip")
    out = run.verify()
    print(f"     certification residual {out['certification']['residual_degree_n']:.3e} at n=32")

    # voxelization helper
    ell = es.VoxelRegion.ellipsoid([0.6, 0.6, 1.2], 48, 0.03)
    check(ell.components() == 1, "voxelized ellipsoid is one component")
    print("smoke test passed")


if __name__ == "__main__":
    main()
