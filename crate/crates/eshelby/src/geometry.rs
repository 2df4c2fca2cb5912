//! Voxel regions on uniform (possibly anisotropic) lattices, diagonal
//! stretches between frames, and shape statistics.

use std::collections::VecDeque;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::ellipsoid_potential::EllipsoidPose;
use crate::elliptic::EllipsoidAxes;
use crate::{Error, Result};

/// A set of voxels on the lattice `origin + (i, j, k)·spacing` (voxel
/// centers), stored as a dense occupancy mask in `i`-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelRegion {
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub dims: [usize; 3],
    mask: Vec<bool>,
}

impl VoxelRegion {
    pub fn new(spacing: [f64; 3], origin: [f64; 3], dims: [usize; 3], mask: Vec<bool>) -> Result<Self> {
        if spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::Domain(format!(
                "voxel spacing must be positive, got {spacing:?}"
            )));
        }
        if mask.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::Structural(format!(
                "mask has {} entries, dims {dims:?} need {}",
                mask.len(),
                dims[0] * dims[1] * dims[2]
            )));
        }
        Ok(Self {
            spacing,
            origin,
            dims,
            mask,
        })
    }

    pub fn empty(spacing: [f64; 3], origin: [f64; 3], dims: [usize; 3]) -> Result<Self> {
        Self::new(spacing, origin, dims, vec![false; dims[0] * dims[1] * dims[2]])
    }

    /// Marks every lattice center for which `inside` holds.
    pub fn from_fn(
        spacing: [f64; 3],
        origin: [f64; 3],
        dims: [usize; 3],
        inside: impl Fn(&Vector3<f64>) -> bool,
    ) -> Result<Self> {
        let mut r = Self::empty(spacing, origin, dims)?;
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let c = r.center(i, j, k);
                    let l = r.linear(i, j, k);
                    r.mask[l] = inside(&c);
                }
            }
        }
        Ok(r)
    }

    /// Cubic lattice of `n` centers per axis symmetric about the origin,
    /// spacing `h`, occupied where `inside` holds.
    pub fn centered_cube(n: usize, h: f64, inside: impl Fn(&Vector3<f64>) -> bool) -> Result<Self> {
        let o = -0.5 * (n as f64 - 1.0) * h;
        Self::from_fn([h; 3], [o; 3], [n; 3], inside)
    }

    #[inline]
    pub fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn unlinear(&self, l: usize) -> [usize; 3] {
        let k = l % self.dims[2];
        let j = (l / self.dims[2]) % self.dims[1];
        let i = l / (self.dims[1] * self.dims[2]);
        [i, j, k]
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        )
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.mask[self.linear(i, j, k)]
    }

    /// Occupancy at a signed index; outside the lattice counts as empty.
    pub fn get_signed(&self, i: i64, j: i64, k: i64) -> bool {
        if i < 0 || j < 0 || k < 0 {
            return false;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        i < self.dims[0] && j < self.dims[1] && k < self.dims[2] && self.get(i, j, k)
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: bool) {
        let l = self.linear(i, j, k);
        self.mask[l] = v;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|m| *m)
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Occupied voxel indices in storage order.
    pub fn indices(&self) -> Vec<[usize; 3]> {
        (0..self.mask.len())
            .filter(|&l| self.mask[l])
            .map(|l| self.unlinear(l))
            .collect()
    }

    /// Occupied voxel centers in storage order.
    pub fn centers(&self) -> Vec<Vector3<f64>> {
        self.indices()
            .into_iter()
            .map(|[i, j, k]| self.center(i, j, k))
            .collect()
    }

    /// Fractional lattice coordinates of a point.
    pub fn lattice_coords(&self, x: &Vector3<f64>) -> [f64; 3] {
        [
            (x[0] - self.origin[0]) / self.spacing[0],
            (x[1] - self.origin[1]) / self.spacing[1],
            (x[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// Membership of the voxel whose cell contains `x`.
    pub fn contains_point(&self, x: &Vector3<f64>) -> bool {
        let f = self.lattice_coords(x);
        self.get_signed(f[0].round() as i64, f[1].round() as i64, f[2].round() as i64)
    }

    /// True when every lattice center within distance `r` of `x` is occupied
    /// (and lies on the lattice), i.e. `x` is at least roughly `r` deep.
    pub fn is_deep(&self, x: &Vector3<f64>, r: f64) -> bool {
        let f = self.lattice_coords(x);
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for a in 0..3 {
            let w = r / self.spacing[a];
            lo[a] = (f[a] - w).floor() as i64 - 1;
            hi[a] = (f[a] + w).ceil() as i64 + 1;
        }
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    let c = Vector3::new(
                        self.origin[0] + i as f64 * self.spacing[0],
                        self.origin[1] + j as f64 * self.spacing[1],
                        self.origin[2] + k as f64 * self.spacing[2],
                    );
                    if (c - x).norm() <= r && !self.get_signed(i, j, k) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Region with the same lattice keeping only voxels where `keep` holds.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mask = self.mask.iter().enumerate().map(|(l, m)| *m && keep(l)).collect();
        Self { mask, ..self.clone() }
    }

    /// Same occupancy with one voxel toggled off.
    pub fn without(&self, i: usize, j: usize, k: usize) -> Self {
        let mut r = self.clone();
        r.set(i, j, k, false);
        r
    }
}

/// Per-axis scale factors: a point x′ maps to x = diag(d)⁻¹·x′.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagonalStretch {
    pub d: [f64; 3],
}

impl DiagonalStretch {
    pub fn new(d1: f64, d2: f64, d3: f64) -> Result<Self> {
        let d = [d1, d2, d3];
        if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain(format!("stretch factors must be positive, got {d:?}")));
        }
        Ok(Self { d })
    }

    pub fn identity() -> Self {
        Self { d: [1.0; 3] }
    }

    pub fn inverse(&self) -> Self {
        Self {
            d: [1.0 / self.d[0], 1.0 / self.d[1], 1.0 / self.d[2]],
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(x[0] / self.d[0], x[1] / self.d[1], x[2] / self.d[2])
    }

    /// Factor by which volumes scale, ∏ 1/d_i.
    pub fn volume_factor(&self) -> f64 {
        1.0 / (self.d[0] * self.d[1] * self.d[2])
    }
}

/// Maps every voxel center x′ to diag(d)⁻¹·x′. The output lattice has
/// spacing h_i/d_i, so the map is a bijection of voxels and the volume scales
/// by ∏ 1/d_i exactly.
pub fn stretch_region(region: &VoxelRegion, stretch: &DiagonalStretch) -> VoxelRegion {
    let mut out = region.clone();
    for a in 0..3 {
        out.spacing[a] = region.spacing[a] / stretch.d[a];
        out.origin[a] = region.origin[a] / stretch.d[a];
    }
    out
}

/// Nearest-center resampling onto another lattice: a target voxel is
/// occupied when the source voxel containing its center is.
pub fn resample_region(
    region: &VoxelRegion,
    spacing: [f64; 3],
    origin: [f64; 3],
    dims: [usize; 3],
) -> Result<VoxelRegion> {
    VoxelRegion::from_fn(spacing, origin, dims, |x| region.contains_point(x))
}

/// Resamples onto a cubic lattice of spacing `h` covering the bounding box.
pub fn resample_isotropic(region: &VoxelRegion, h: f64) -> Result<VoxelRegion> {
    if region.is_empty() {
        return Err(Error::Domain("cannot resample an empty region".into()));
    }
    let (lo, hi) = bounding_box(region);
    let mut origin = [0.0; 3];
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let lo_a = lo[a] - region.spacing[a];
        let hi_a = hi[a] + region.spacing[a];
        origin[a] = (lo_a / h).floor() * h;
        dims[a] = ((hi_a - origin[a]) / h).ceil() as usize + 1;
    }
    resample_region(region, [h; 3], origin, dims)
}

/// Bounding box of the occupied voxel centers.
pub fn bounding_box(region: &VoxelRegion) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for c in region.centers() {
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionStats {
    pub volume: f64,
    pub centroid: Vector3<f64>,
    /// Central second moments per unit volume, ∫(x−c)(x−c)ᵀ dV / V, with
    /// each voxel treated as a uniform box.
    pub second_moment: Matrix3<f64>,
    pub voxel_count: usize,
}

pub fn region_stats(region: &VoxelRegion) -> Result<RegionStats> {
    let centers = region.centers();
    if centers.is_empty() {
        return Err(Error::Domain("region is empty".into()));
    }
    let n = centers.len() as f64;
    let centroid = centers.iter().fold(Vector3::zeros(), |a, c| a + c) / n;
    let mut m = Matrix3::zeros();
    for c in &centers {
        let d = c - centroid;
        m += d * d.transpose();
    }
    m /= n;
    for a in 0..3 {
        m[(a, a)] += region.spacing[a].powi(2) / 12.0;
    }
    Ok(RegionStats {
        volume: n * region.voxel_volume(),
        centroid,
        second_moment: m,
        voxel_count: centers.len(),
    })
}

/// Ellipsoid with the region's centroid, principal directions and volume,
/// and semi-axes in the ratios of the moment eigenvalues (a solid ellipsoid
/// has moments a_i²/5).
pub fn ellipsoid_fit(region: &VoxelRegion) -> Result<EllipsoidPose> {
    let s = region_stats(region)?;
    let eig = SymmetricEigen::new(s.second_moment);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lmax = eig.eigenvalues.max();
    if !(eig.eigenvalues.min() > 1e-12 * lmax) {
        return Err(Error::Domain("degenerate second moments (planar region)".into()));
    }
    let raw: Vec<f64> = order.iter().map(|&i| (5.0 * eig.eigenvalues[i]).sqrt()).collect();
    // rescale to match the region volume
    let vol_raw = 4.0 / 3.0 * std::f64::consts::PI * raw[0] * raw[1] * raw[2];
    let k = (s.volume / vol_raw).cbrt();
    let axes = EllipsoidAxes::new(k * raw[0], k * raw[1], k * raw[2])?;
    let mut rot = Matrix3::zeros();
    for (col, &i) in order.iter().enumerate() {
        rot.set_column(col, &eig.eigenvectors.column(i));
    }
    if rot.determinant() < 0.0 {
        let c = -rot.column(2);
        rot.set_column(2, &c);
    }
    EllipsoidPose::new(axes, rot, s.centroid)
}

/// Fraction of the union covered by exactly one of the region and the
/// posed ellipsoid, evaluated on the region's lattice (padded by the
/// ellipsoid's extent).
pub fn symmetric_difference_fraction(region: &VoxelRegion, pose: &EllipsoidPose) -> f64 {
    let mut both = 0usize;
    let mut only_region = 0usize;
    let mut only_ell = 0usize;
    let amax = pose.axes.a.iter().cloned().fold(0.0, f64::max);
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for a in 0..3 {
        lo[a] = ((pose.translation[a] - amax - region.origin[a]) / region.spacing[a]).floor() as i64 - 1;
        hi[a] = ((pose.translation[a] + amax - region.origin[a]) / region.spacing[a]).ceil() as i64 + 1;
        lo[a] = lo[a].min(0);
        hi[a] = hi[a].max(region.dims[a] as i64 - 1);
    }
    for i in lo[0]..=hi[0] {
        for j in lo[1]..=hi[1] {
            for k in lo[2]..=hi[2] {
                let c = Vector3::new(
                    region.origin[0] + i as f64 * region.spacing[0],
                    region.origin[1] + j as f64 * region.spacing[1],
                    region.origin[2] + k as f64 * region.spacing[2],
                );
                match (region.get_signed(i, j, k), pose.contains(&c)) {
                    (true, true) => both += 1,
                    (true, false) => only_region += 1,
                    (false, true) => only_ell += 1,
                    _ => {}
                }
            }
        }
    }
    let union = both + only_region + only_ell;
    if union == 0 {
        0.0
    } else {
        (only_region + only_ell) as f64 / union as f64
    }
}

/// Result of a 6-connected component labelling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    pub count: usize,
    /// Component sizes, largest first.
    pub sizes: Vec<usize>,
    #[serde(skip)]
    pub largest: Option<VoxelRegion>,
}

pub fn connected_components(region: &VoxelRegion) -> ComponentReport {
    let mut label = vec![usize::MAX; region.mask.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    let d = region.dims;
    for start in 0..region.mask.len() {
        if !region.mask[start] || label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        label[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(l) = queue.pop_front() {
            size += 1;
            let [i, j, k] = region.unlinear(l);
            let mut visit = |ni: usize, nj: usize, nk: usize| {
                let nl = region.linear(ni, nj, nk);
                if region.mask[nl] && label[nl] == usize::MAX {
                    label[nl] = id;
                    queue.push_back(nl);
                }
            };
            if i > 0 {
                visit(i - 1, j, k);
            }
            if i + 1 < d[0] {
                visit(i + 1, j, k);
            }
            if j > 0 {
                visit(i, j - 1, k);
            }
            if j + 1 < d[1] {
                visit(i, j + 1, k);
            }
            if k > 0 {
                visit(i, j, k - 1);
            }
            if k + 1 < d[2] {
                visit(i, j, k + 1);
            }
        }
        sizes.push(size);
    }
    let largest = sizes
        .iter()
        .enumerate()
        .max_by_key(|(_, s)| **s)
        .map(|(id, _)| region.filter(|l| label[l] == id));
    let mut sorted = sizes.clone();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    ComponentReport {
        count: sizes.len(),
        sizes: sorted,
        largest,
    }
}

/// Number of occupied voxels in exactly one of two regions on the same
/// lattice shape.
pub fn symmetric_difference_count(a: &VoxelRegion, b: &VoxelRegion) -> Result<usize> {
    if a.dims != b.dims {
        return Err(Error::Structural("regions live on different lattices".into()));
    }
    Ok(a.mask.iter().zip(&b.mask).filter(|(x, y)| x != y).count())
}

/// Writes occupied voxel centers as CSV with header `x,y,z`.
pub fn write_csv(region: &VoxelRegion, mut w: impl std::io::Write) -> Result<()> {
    writeln!(w, "x,y,z")?;
    for c in region.centers() {
        writeln!(w, "{:.17e},{:.17e},{:.17e}", c[0], c[1], c[2])?;
    }
    Ok(())
}

/// Reads a voxel-center CSV. The lattice spacing is taken from `spacing`
/// when given, otherwise inferred per axis as the smallest gap between
/// distinct coordinates (an axis with a single value gets the smallest
/// inferred gap of the others, or 1).
pub fn read_csv(text: &str, spacing: Option<[f64; 3]>) -> Result<VoxelRegion> {
    let mut pts = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (ln == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic())) {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
        if v.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected 3 columns", ln + 1)));
        }
        pts.push([v[0], v[1], v[2]]);
    }
    if pts.is_empty() {
        return Err(Error::Domain("no voxel centers in CSV".into()));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &pts {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let h = match spacing {
        Some(h) => h,
        None => {
            let mut gaps = [f64::INFINITY; 3];
            for a in 0..3 {
                let mut vals: Vec<f64> = pts.iter().map(|p| p[a]).collect();
                vals.sort_by(f64::total_cmp);
                let tol = 1e-9 * (hi[a] - lo[a]).abs().max(1.0);
                for w in vals.windows(2) {
                    let g = w[1] - w[0];
                    if g > tol {
                        gaps[a] = gaps[a].min(g);
                    }
                }
            }
            let fallback = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
            let fallback = if fallback.is_finite() { fallback } else { 1.0 };
            gaps.map(|g| if g.is_finite() { g } else { fallback })
        }
    };
    let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / h[a]).round() as usize + 1);
    let mut r = VoxelRegion::empty(h, lo, dims)?;
    for p in &pts {
        let idx = [0, 1, 2].map(|a| ((p[a] - lo[a]) / h[a]).round() as usize);
        r.set(idx[0], idx[1], idx[2], true);
    }
    Ok(r)
}
