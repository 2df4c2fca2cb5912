//! Finite-difference obstacle problem on a uniform cubic grid.
//!
//! The energy ½∫|∇V|² is discretized with the 7-point stencil scaled by h,
//! so `K = h·(6V_i − ΣV_nb)` represents −Δ (SPD on interior nodes). The
//! constrained minimum over V ≥ φ is found by red-black projected SOR.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::VoxelRegion;
use crate::{Error, Result};

/// Nodes `(i − (n−1)/2)·h` per axis, h = 2L/(n−1), so the node set is
/// exactly symmetric under sign flips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub l: f64,
    pub h: f64,
}

impl Grid {
    pub fn new(n: usize, l: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Domain(format!("grid needs at least 3 nodes per axis, got {n}")));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Domain(format!("half-width must be positive, got {l}")));
        }
        Ok(Self {
            n,
            l,
            h: 2.0 * l / (n as f64 - 1.0),
        })
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.n as f64 - 1.0)) * self.h
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(self.coord(i), self.coord(j), self.coord(k))
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unidx(&self, l: usize) -> [usize; 3] {
        let n = self.n;
        [l / (n * n), (l / n) % n, l % n]
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        let m = self.n - 1;
        i == 0 || j == 0 || k == 0 || i == m || j == m || k == m
    }

    pub fn origin(&self) -> f64 {
        self.coord(0)
    }

    /// Empty voxel region on this grid's node lattice.
    pub fn empty_region(&self) -> VoxelRegion {
        let o = self.origin();
        VoxelRegion::empty([self.h; 3], [o; 3], [self.n; 3]).expect("grid lattice is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&Vector3<f64>) -> f64 + Sync) -> Self {
        let n = grid.n;
        let values = (0..grid.len())
            .into_par_iter()
            .map(|l| {
                let [i, j, k] = [l / (n * n), (l / n) % n, l % n];
                f(&grid.point(i, j, k))
            })
            .collect();
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.idx(i, j, k)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Legacy-ASCII structured-points export with one scalar array.
    pub fn write_vtk(&self, name: &str, w: impl std::io::Write) -> Result<()> {
        let g = self.grid;
        write_vtk_points(w, name, [g.n; 3], [g.origin(); 3], [g.h; 3], |i, j, k| self.at(i, j, k))
    }
}

/// Writes a legacy VTK structured-points file; `value(i, j, k)` is sampled
/// with the first index varying fastest, as the format requires.
pub fn write_vtk_points(
    mut w: impl std::io::Write,
    name: &str,
    dims: [usize; 3],
    origin: [f64; 3],
    spacing: [f64; 3],
    value: impl Fn(usize, usize, usize) -> f64,
) -> Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{name}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2])?;
    writeln!(w, "ORIGIN {} {} {}", origin[0], origin[1], origin[2])?;
    writeln!(w, "SPACING {} {} {}", spacing[0], spacing[1], spacing[2])?;
    writeln!(w, "POINT_DATA {}", dims[0] * dims[1] * dims[2])?;
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                writeln!(w, "{:e}", value(i, j, k))?;
            }
        }
    }
    Ok(())
}

/// Contents of a legacy VTK structured-points file with one scalar array.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkPoints {
    pub name: String,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    /// First index fastest.
    pub values: Vec<f64>,
}

/// Parses the dialect written by [`write_vtk_points`].
pub fn read_vtk_points(text: &str) -> Result<VtkPoints> {
    let bad = |m: String| Error::Parse(format!("vtk: {m}"));
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("missing {what}")));
    if !next("version line")?.starts_with("# vtk DataFile") {
        return Err(bad("not a legacy vtk file".into()));
    }
    let _title = next("title")?;
    if next("format")?.trim() != "ASCII" {
        return Err(bad("only ASCII files are supported".into()));
    }
    if next("dataset")?.trim() != "DATASET STRUCTURED_POINTS" {
        return Err(bad("only STRUCTURED_POINTS datasets are supported".into()));
    }
    fn triple<T: std::str::FromStr>(line: &str, key: &str) -> Result<[T; 3]> {
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(Error::Parse(format!("vtk: expected {key}, got '{line}'")));
        }
        let v: Vec<T> = it
            .map(|t| t.parse::<T>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("vtk: bad numbers in '{line}'")))?;
        v.try_into()
            .map_err(|_| Error::Parse(format!("vtk: {key} needs three values")))
    }
    let dims: [usize; 3] = triple(next("DIMENSIONS")?, "DIMENSIONS")?;
    let origin: [f64; 3] = triple(next("ORIGIN")?, "ORIGIN")?;
    let spacing: [f64; 3] = triple(next("SPACING")?, "SPACING")?;
    let count = dims[0] * dims[1] * dims[2];
    let pd = next("POINT_DATA")?;
    if pd.split_whitespace().nth(1).and_then(|t| t.parse::<usize>().ok()) != Some(count) {
        return Err(bad(format!("POINT_DATA does not match dimensions: '{pd}'")));
    }
    let sc = next("SCALARS")?;
    let name = match sc.split_whitespace().collect::<Vec<_>>()[..] {
        ["SCALARS", name, "double", ..] => name.to_string(),
        _ => return Err(bad(format!("expected 'SCALARS <name> double', got '{sc}'"))),
    };
    let _lut = next("LOOKUP_TABLE")?;
    let values: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().map_err(|_| bad(format!("bad value '{l}'"))))
        .collect::<Result<_>>()?;
    if values.len() != count {
        return Err(bad(format!("expected {count} values, found {}", values.len())));
    }
    Ok(VtkPoints {
        name,
        dims,
        origin,
        spacing,
        values,
    })
}

/// Writes a voxel region as a 0/1 "mask" volume.
pub fn write_vtk_mask(region: &VoxelRegion, w: impl std::io::Write) -> Result<()> {
    write_vtk_points(w, "mask", region.dims, region.origin, region.spacing, |i, j, k| {
        if region.get(i, j, k) {
            1.0
        } else {
            0.0
        }
    })
}

/// Matrix-free −Δ stencil scaled by h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffnessOperator {
    pub grid: Grid,
}

pub fn assemble_stiffness(grid: Grid) -> StiffnessOperator {
    StiffnessOperator { grid }
}

impl StiffnessOperator {
    /// `(Kv)_i = h(6v_i − Σ v_nb)` at interior nodes, 0 at boundary nodes.
    /// Boundary entries of `v` enter as Dirichlet data.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let n = g.n;
        let mut out = vec![0.0; g.len()];
        out.par_chunks_mut(n * n).enumerate().for_each(|(i, plane)| {
            if i == 0 || i == n - 1 {
                return;
            }
            for j in 1..n - 1 {
                for k in 1..n - 1 {
                    let l = g.idx(i, j, k);
                    let nb = v[l - n * n] + v[l + n * n] + v[l - n] + v[l + n] + v[l - 1] + v[l + 1];
                    plane[j * n + k] = g.h * (6.0 * v[l] - nb);
                }
            }
        });
        out
    }

    /// Discrete Dirichlet energy (h/2)·Σ(v_a − v_b)² over grid edges with at
    /// least one interior endpoint. Equals ½⟨Kv,v⟩ when v vanishes on the
    /// boundary.
    pub fn energy(&self, v: &[f64]) -> f64 {
        let g = self.grid;
        let n = g.n;
        let total: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        let l = g.idx(i, j, k);
                        let here_interior = !g.is_boundary(i, j, k);
                        let mut edge = |ni: usize, nj: usize, nk: usize, nl: usize| {
                            if here_interior || !g.is_boundary(ni, nj, nk) {
                                let d = v[l] - v[nl];
                                s += d * d;
                            }
                        };
                        if i + 1 < n {
                            edge(i + 1, j, k, l + n * n);
                        }
                        if j + 1 < n {
                            edge(i, j + 1, k, l + n);
                        }
                        if k + 1 < n {
                            edge(i, j, k + 1, l + 1);
                        }
                    }
                }
                s
            })
            .sum();
        0.5 * g.h * total
    }

    pub fn dot(u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Over-relaxation factor in (0, 2).
    pub omega: f64,
    /// Stop once the largest nodal update is at most `tol·max|φ|`.
    pub tol: f64,
    /// Defaults to 200·n when absent.
    pub max_iters: Option<usize>,
    /// Record the energy after every sweep pair.
    pub record_energy: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            omega: 1.5,
            tol: 1e-8,
            max_iters: None,
            record_energy: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub converged: bool,
    pub last_update: f64,
    pub energy_history: Vec<f64>,
    /// max over interior nodes of max(−(KV)_i, |(V_i−φ_i)(KV)_i|).
    pub complementarity_residual: f64,
    pub contact_nodes: usize,
}

/// Raw pointer shared across the threads of one colour sweep.
#[derive(Clone, Copy)]
struct SharedField(*mut f64);
// SAFETY: during a colour sweep each task writes only nodes of that colour in
// its own i-plane and reads only its own node and neighbours of the other
// colour, so no location is written by one task while touched by another.
unsafe impl Send for SharedField {}
unsafe impl Sync for SharedField {}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega > 0.0 && omega < 2.0) {
        return Err(Error::Domain(format!(
            "relaxation factor must be in (0,2), got {omega}"
        )));
    }
    Ok(())
}

/// Solves min ½⟨KV,V⟩ subject to V ≥ φ with V = 0 on the boundary.
pub fn solve_obstacle_qp(
    k: &StiffnessOperator,
    phi: &ScalarField,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveStats)> {
    let boundary = ScalarField::zeros(k.grid);
    solve_with_boundary(k, phi, &boundary, None, opts)
}

/// Same QP with prescribed boundary values taken from `boundary` (interior
/// entries ignored), optionally warm-started from `initial`.
pub fn solve_with_boundary(
    k: &StiffnessOperator,
    phi: &ScalarField,
    boundary: &ScalarField,
    initial: Option<&ScalarField>,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveStats)> {
    let g = k.grid;
    if phi.grid != g || boundary.grid != g || initial.is_some_and(|f| f.grid != g) {
        return Err(Error::Structural(
            "fields live on a different grid than the operator".into(),
        ));
    }
    check_omega(opts.omega)?;
    if phi.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("obstacle has non-finite values".into()));
    }
    let n = g.n;
    let mut v = vec![0.0; g.len()];
    for l in 0..g.len() {
        let [i, j, kk] = g.unidx(l);
        if g.is_boundary(i, j, kk) {
            if phi.values[l] > boundary.values[l] {
                return Err(Error::Domain(format!(
                    "obstacle exceeds the boundary value at node ({i},{j},{kk}): {} > {}",
                    phi.values[l], boundary.values[l]
                )));
            }
            v[l] = boundary.values[l];
        } else {
            let start = initial.map_or(0.0, |f| f.values[l]);
            v[l] = start.max(phi.values[l]);
        }
    }

    let max_iters = opts.max_iters.unwrap_or(200 * n);
    let threshold = opts.tol * phi.max_abs();
    let omega = opts.omega;
    let mut energy_history = Vec::new();
    if opts.record_energy {
        energy_history.push(k.energy(&v));
    }
    let mut iterations = 0;
    let mut last_update = f64::INFINITY;
    let mut converged = false;
    let phiv = &phi.values;
    while iterations < max_iters {
        let mut max_upd: f64 = 0.0;
        for colour in 0..2usize {
            let ptr = SharedField(v.as_mut_ptr());
            let upd = (1..n - 1)
                .into_par_iter()
                .map(move |i| {
                    let p = ptr;
                    let mut m: f64 = 0.0;
                    for j in 1..n - 1 {
                        let k0 = 1 + (i + j + 1 + colour) % 2;
                        let mut kk = k0;
                        while kk < n - 1 {
                            let l = (i * n + j) * n + kk;
                            // SAFETY: see `SharedField`; indices are in bounds
                            // because the node is interior.
                            unsafe {
                                let nb = *p.0.add(l - n * n)
                                    + *p.0.add(l + n * n)
                                    + *p.0.add(l - n)
                                    + *p.0.add(l + n)
                                    + *p.0.add(l - 1)
                                    + *p.0.add(l + 1);
                                let old = *p.0.add(l);
                                let relaxed = old + omega * (nb / 6.0 - old);
                                let new = relaxed.max(phiv[l]);
                                *p.0.add(l) = new;
                                m = m.max((new - old).abs());
                            }
                            kk += 2;
                        }
                    }
                    m
                })
                .reduce(|| 0.0, f64::max);
            max_upd = max_upd.max(upd);
        }
        iterations += 1;
        last_update = max_upd;
        if opts.record_energy {
            energy_history.push(k.energy(&v));
        }
        if max_upd <= threshold {
            converged = true;
            break;
        }
    }

    let kv = k.apply(&v);
    let mut resid: f64 = 0.0;
    let mut contact = 0;
    for l in 0..g.len() {
        let [i, j, kk] = g.unidx(l);
        if g.is_boundary(i, j, kk) {
            continue;
        }
        resid = resid.max(-kv[l]).max(((v[l] - phiv[l]) * kv[l]).abs());
        if v[l] <= phiv[l] {
            contact += 1;
        }
    }
    Ok((
        ScalarField { grid: g, values: v },
        SolveStats {
            iterations,
            converged,
            last_update,
            energy_history,
            complementarity_residual: resid,
            contact_nodes: contact,
        },
    ))
}

/// Outcome of the free-space boundary iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeSpaceReport {
    pub outer_iterations: usize,
    pub converged: bool,
    /// max |N[μ] − g| over boundary nodes, one entry per outer iteration.
    pub boundary_residuals: Vec<f64>,
    pub max_boundary_value: f64,
}

/// Options for [`solve_free_space`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreeSpaceOptions {
    pub max_outer: usize,
    /// Stop when max |N[μ] − g| ≤ `outer_tol`·max |N[μ]| on the boundary.
    pub outer_tol: f64,
    /// Mixing weight of the first outer step.
    pub first_step: f64,
}

impl Default for FreeSpaceOptions {
    fn default() -> Self {
        Self {
            max_outer: 30,
            outer_tol: 1e-4,
            first_step: 0.3,
        }
    }
}

/// Potential Σ q_i/(4π|x−y_i|) of point sources.
fn point_potential(sources: &[[f64; 4]], x: &Vector3<f64>) -> f64 {
    let mut s = 0.0;
    for y in sources {
        let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
        s += y[3] / (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    }
    s / (4.0 * PI)
}

/// Potential on the boundary nodes of the contact measure of `v`: the
/// nodes where V sits on φ carry charge (KV)_i = −h³(ΔV)_i, so the result
/// is N = −∫ΔV/(4π|x−y|) of the discrete contact density.
fn contact_boundary_potential(k: &StiffnessOperator, v: &ScalarField, phi: &ScalarField, bnodes: &[usize]) -> Vec<f64> {
    let g = k.grid;
    let kv = k.apply(&v.values);
    let sources: Vec<[f64; 4]> = (0..g.len())
        .filter_map(|l| {
            let [i, j, kk] = g.unidx(l);
            let active = !g.is_boundary(i, j, kk) && v.values[l] <= phi.values[l] && kv[l] != 0.0;
            active.then(|| {
                let p = g.point(i, j, kk);
                [p[0], p[1], p[2], kv[l]]
            })
        })
        .collect();
    bnodes
        .par_iter()
        .map(|&l| {
            let [i, j, kk] = g.unidx(l);
            point_potential(&sources, &g.point(i, j, kk))
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Approximates the whole-space problem (V → 0 at infinity) on a finite
/// cube: the boundary carries the potential of the contact measure, found
/// as the fixed point g = N[μ(g)]. A plain fixed-point iteration overshoots
/// (raising g shrinks the contact set by more than it compensates), so the
/// boundary data are updated with one-step Anderson mixing.
pub fn solve_free_space(
    k: &StiffnessOperator,
    phi: &ScalarField,
    opts: &SolverOptions,
    fs: &FreeSpaceOptions,
) -> Result<(ScalarField, SolveStats, FreeSpaceReport)> {
    let g = k.grid;
    let bnodes: Vec<usize> = (0..g.len())
        .filter(|&l| {
            let [i, j, kk] = g.unidx(l);
            g.is_boundary(i, j, kk)
        })
        .collect();
    let mut boundary = ScalarField::zeros(g);
    let mut gvec = vec![0.0; bnodes.len()];
    let (mut v, mut stats) = solve_obstacle_qp(k, phi, opts)?;
    let mut report = FreeSpaceReport {
        outer_iterations: 0,
        converged: false,
        boundary_residuals: Vec::new(),
        max_boundary_value: 0.0,
    };
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for _ in 0..fs.max_outer {
        let target = contact_boundary_potential(k, &v, phi, &bnodes);
        let resid: Vec<f64> = target.iter().zip(&gvec).map(|(t, b)| t - b).collect();
        let rmax = max_abs(&resid);
        report.boundary_residuals.push(rmax);
        report.max_boundary_value = max_abs(&target);
        if rmax <= fs.outer_tol * report.max_boundary_value.max(f64::MIN_POSITIVE) {
            report.converged = true;
            break;
        }
        let next: Vec<f64> = match &prev {
            None => gvec.iter().zip(&resid).map(|(b, r)| b + fs.first_step * r).collect(),
            Some((gp, rp)) => {
                let dg: Vec<f64> = gvec.iter().zip(gp).map(|(a, b)| a - b).collect();
                let dr: Vec<f64> = resid.iter().zip(rp).map(|(a, b)| a - b).collect();
                let den: f64 = dr.iter().map(|x| x * x).sum();
                let gamma = if den > 0.0 {
                    dr.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() / den
                } else {
                    0.0
                };
                (0..gvec.len())
                    .map(|i| gvec[i] + resid[i] - gamma * (dg[i] + dr[i]))
                    .collect()
            }
        };
        prev = Some((gvec, resid));
        gvec = next;
        for (&l, &b) in bnodes.iter().zip(&gvec) {
            // boundary data may never sit below the obstacle
            boundary.values[l] = b.max(phi.values[l]);
        }
        let (nv, ns) = solve_with_boundary(k, phi, &boundary, Some(&v), opts)?;
        v = nv;
        // energies of different boundary data are not comparable, so only
        // the last inner solve's history is kept
        stats = SolveStats {
            iterations: stats.iterations + ns.iterations,
            ..ns
        };
        report.outer_iterations += 1;
    }
    Ok((v, stats, report))
}

/// Nodes with |V − φ| ≤ eps (interior only) on the grid's node lattice.
pub fn extract_coincidence_set(v: &ScalarField, phi: &ScalarField, eps: f64) -> Result<VoxelRegion> {
    if v.grid != phi.grid {
        return Err(Error::Structural("V and phi live on different grids".into()));
    }
    let g = v.grid;
    let mut r = g.empty_region();
    for l in 0..g.len() {
        let [i, j, k] = g.unidx(l);
        if !g.is_boundary(i, j, k) && (v.values[l] - phi.values[l]).abs() <= eps {
            r.set(i, j, k, true);
        }
    }
    Ok(r)
}

pub use crate::geometry::{connected_components, ComponentReport};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stencil_on_quadratic() {
        let g = Grid::new(17, 1.0).unwrap();
        let k = assemble_stiffness(g);
        let f = ScalarField::from_fn(g, |x| x.norm_squared());
        let kv = k.apply(&f.values);
        for l in 0..g.len() {
            let [i, j, kk] = g.unidx(l);
            if !g.is_boundary(i, j, kk) {
                // K = −h³Δ on quadratics
                assert!((kv[l] / g.h.powi(3) + 6.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stencil_symmetric_and_positive() {
        let g = Grid::new(16, 1.0).unwrap();
        let k = assemble_stiffness(g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rand_field = || -> Vec<f64> {
            (0..g.len())
                .map(|l| {
                    let [i, j, kk] = g.unidx(l);
                    if g.is_boundary(i, j, kk) {
                        0.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        };
        for _ in 0..10 {
            let u = rand_field();
            let v = rand_field();
            let a = StiffnessOperator::dot(&k.apply(&u), &v);
            let b = StiffnessOperator::dot(&u, &k.apply(&v));
            let nu = StiffnessOperator::dot(&u, &u).sqrt();
            let nv = StiffnessOperator::dot(&v, &v).sqrt();
            assert!((a - b).abs() <= 1e-10 * nu * nv);
            let e = StiffnessOperator::dot(&k.apply(&u), &u);
            assert!(e > 0.0);
            assert!((0.5 * e - k.energy(&u)).abs() < 1e-10 * e);
        }
    }

    #[test]
    fn negative_obstacle_gives_zero() {
        let g = Grid::new(16, 1.0).unwrap();
        let k = assemble_stiffness(g);
        let phi = ScalarField::from_fn(g, |_| -1.0);
        let (v, s) = solve_obstacle_qp(&k, &phi, &SolverOptions::default()).unwrap();
        assert!(s.converged);
        assert_eq!(v.max_abs(), 0.0);
        assert!(extract_coincidence_set(&v, &phi, 1e-4).unwrap().is_empty());
    }

    #[test]
    fn single_interior_node() {
        let g = Grid::new(3, 1.0).unwrap();
        let k = assemble_stiffness(g);
        for phi0 in [-0.3, 0.0, 0.7] {
            let phi = ScalarField::from_fn(g, |x| if x.norm() < 1e-12 { phi0 } else { -1.0 });
            let (v, s) = solve_obstacle_qp(&k, &phi, &SolverOptions::default()).unwrap();
            assert!(s.converged);
            assert!((v.at(1, 1, 1) - f64::max(phi0, 0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_fields_give_all_interior() {
        let g = Grid::new(8, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0]);
        let r = extract_coincidence_set(&f, &f, 1e-4).unwrap();
        assert_eq!(r.count(), 6 * 6 * 6);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = Grid::new(8, 1.0).unwrap();
        let k = assemble_stiffness(g);
        let phi = ScalarField::from_fn(g, |_| 0.5);
        assert!(solve_obstacle_qp(&k, &phi, &SolverOptions::default()).is_err());
        let phi = ScalarField::from_fn(g, |_| -0.5);
        let bad = SolverOptions {
            omega: 2.0,
            ..Default::default()
        };
        assert!(solve_obstacle_qp(&k, &phi, &bad).is_err());
        assert!(Grid::new(2, 1.0).is_err());
    }

    #[test]
    fn energy_descends_and_stops_early() {
        let g = Grid::new(16, 1.2).unwrap();
        let k = assemble_stiffness(g);
        let phi = ScalarField::from_fn(g, |x| 0.1 - x.norm_squared());
        let opts = SolverOptions {
            max_iters: Some(5),
            ..Default::default()
        };
        let (_, s) = solve_obstacle_qp(&k, &phi, &opts).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 5);
        for w in s.energy_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-14));
        }
    }
}
