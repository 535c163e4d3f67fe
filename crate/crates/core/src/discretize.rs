//! Potential generators, chart-aware masks, and assembly of the symmetric
//! sparse operator −h²Δ + Ṽ with periodic or Dirichlet convention.
//!
//! The operator is the plain 5-point stencil: this is deliberate — later
//! stages carve grid-subset domains (perforations, collars) out of the mesh,
//! and only a local stencil respects arbitrary masks. The metric enters
//! through the folded potential Ṽ = (V−E)/λ, so the same flat stencil serves
//! all charts.

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::{Field, Grid, Mask};
use crate::geometry::ChartModel;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

// ---- chart-aware masks -------------------------------------------------

/// Nodes where the discrete operator carries the stencil: everything on the
/// torus, the strict interior of the disk |x| < R0 otherwise.
pub fn interior_mask(chart: &ChartModel, grid: Grid) -> Mask {
    if chart.kind.is_periodic() {
        Mask::full(grid)
    } else {
        let r0 = chart.r0;
        Mask::from_fn(grid, |x, y| x.hypot(y) < r0)
    }
}

/// Ball in the chart's own distance (wrapped on the torus).
pub fn ball_mask(chart: &ChartModel, grid: Grid, center: (f64, f64), radius: f64) -> Mask {
    Mask::from_fn(grid, |x, y| chart.dist(x, y, center.0, center.1) < radius)
}

/// The configured observation region of the chart as a node mask.
pub fn observation_mask(chart: &ChartModel, grid: Grid) -> Mask {
    Mask::from_fn(grid, |x, y| {
        chart.observation.contains_radius(chart.dist_from_origin(x, y))
    })
}

// ---- potentials ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Zero,
    RandomLinfty,
    Lipschitz,
    Hoelder,
    Checkerboard,
}

/// Sampled potential with ‖V‖_∞ ≤ bound. Same (kind, bound, alpha, seed,
/// grid) always reproduces the identical array, bit for bit.
///
/// `random-linfty` and `checkerboard` are piecewise-constant per grid cell —
/// genuinely L∞-rough data. `lipschitz` / `hoelder(α)` filter white noise to
/// a |k|^{−(α+1)} spectrum and then rescale so the modulus of continuity over
/// adjacent (including diagonal) node pairs respects bound·dist^α.
pub fn generate_potential(
    kind: PotentialKind,
    bound: f64,
    alpha: f64,
    seed: u64,
    grid: Grid,
) -> Result<Field> {
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(Error::BadPotentialBound(bound));
    }
    match kind {
        PotentialKind::Zero => Ok(Field::zeros(grid)),
        PotentialKind::Checkerboard => Ok(Field::from_fn_indexed(grid, |ix, iy| {
            if (ix + iy) % 2 == 0 {
                bound
            } else {
                -bound
            }
        })),
        PotentialKind::RandomLinfty => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut f = Field::zeros(grid);
            for v in f.values.iter_mut() {
                *v = rng.gen_range(-1.0..1.0) * bound;
            }
            Ok(f)
        }
        PotentialKind::Lipschitz => filtered_noise(1.0, bound, seed, grid),
        PotentialKind::Hoelder => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::InvalidAlpha(alpha));
            }
            filtered_noise(alpha, bound, seed, grid)
        }
    }
}

/// White noise shaped to a |k|^{−(α+1)} amplitude spectrum, rescaled to the
/// Hölder-α modulus bound and to ‖·‖_∞ ≤ bound.
fn filtered_noise(alpha: f64, bound: f64, seed: u64, grid: Grid) -> Result<Field> {
    let n = grid.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<Complex64> = (0..n * n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let fft = Fft2::new(n);
    fft.forward(&mut data);
    for iy in 0..n {
        for ix in 0..n {
            let kx = Fft2::freq_of(n, ix) as f64;
            let ky = Fft2::freq_of(n, iy) as f64;
            let k = kx.hypot(ky);
            let w = if k == 0.0 {
                0.0 // zero mean: roughness, not offset, is the point
            } else {
                (1.0 + k).powf(-(alpha + 1.0))
            };
            data[iy * n + ix] *= w;
        }
    }
    fft.inverse(&mut data);
    let mut f = Field::zeros(grid);
    for (v, d) in f.values.iter_mut().zip(&data) {
        *v = d.re;
    }
    if bound == 0.0 {
        for v in f.values.iter_mut() {
            *v = 0.0;
        }
        return Ok(f);
    }

    // Rescale: adjacent + diagonal modulus and sup-norm both within bound.
    let s = grid.spacing;
    let mut max_ratio = 0.0f64;
    for iy in 0..n {
        for ix in 0..n {
            let v0 = f.get(ix, iy);
            for (dx, dy) in [(1isize, 0isize), (0, 1), (1, 1), (1, -1)] {
                if let Some((jx, jy)) = grid.step(ix, iy, dx, dy) {
                    let dist = s * ((dx * dx + dy * dy) as f64).sqrt();
                    let ratio = (f.get(jx, jy) - v0).abs() / dist.powf(alpha);
                    max_ratio = max_ratio.max(ratio);
                }
            }
        }
    }
    let sup = f.sup_norm();
    let scale = if max_ratio == 0.0 && sup == 0.0 {
        0.0
    } else {
        (bound / sup.max(1e-300)).min(bound / max_ratio.max(1e-300))
    };
    for v in f.values.iter_mut() {
        *v *= scale;
    }
    Ok(f)
}

impl Field {
    pub fn from_fn_indexed(grid: Grid, mut f: impl FnMut(usize, usize) -> f64) -> Field {
        let mut values = vec![0.0; grid.len()];
        for iy in 0..grid.n {
            for ix in 0..grid.n {
                values[grid.idx(ix, iy)] = f(ix, iy);
            }
        }
        Field { grid, values, mask: Mask::full(grid) }
    }
}

/// Folded potential Ṽ = (V−E)/λ on the chart interior (zero outside).
pub fn effective_potential(chart: &ChartModel, v: &Field, e: f64) -> Result<Field> {
    let grid = v.grid;
    let interior = interior_mask(chart, grid);
    let mut out = Field::zeros(grid);
    for iy in 0..grid.n {
        for ix in 0..grid.n {
            if interior.get(ix, iy) {
                let (x, y) = grid.point(ix, iy);
                let lam = chart.conformal_factor_at(x, y)?;
                out.set(ix, iy, (v.get(ix, iy) - e) / lam);
            }
        }
    }
    out.mask = interior;
    Ok(out)
}

// ---- sparse operator -----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    Dirichlet,
}

/// Symmetric sparse matrix in CSR form: 5-point −h²Δ plus diagonal Ṽ on the
/// masked-in rows; masked-out rows are decoupled with a large diagonal so the
/// matrix keeps dimension n² while their spurious eigenvalues sit far from
/// the energies of interest (which live near 0).
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub grid: Grid,
    pub boundary: Boundary,
    pub h: f64,
    pub e: f64,
    pub interior: Mask,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseOperator {
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Build from explicit CSR triplets; rejects asymmetric patterns.
    pub fn from_csr(
        grid: Grid,
        boundary: Boundary,
        h: f64,
        e: f64,
        interior: Mask,
        row_ptr: Vec<u32>,
        col_idx: Vec<u32>,
        vals: Vec<f64>,
    ) -> Result<SparseOperator> {
        let op = SparseOperator { grid, boundary, h, e, interior, row_ptr, col_idx, vals };
        op.validate_symmetry()?;
        Ok(op)
    }

    /// Entry-wise symmetry check: every stored (i, j, v) must have an exactly
    /// equal mirror (j, i, v).
    pub fn validate_symmetry(&self) -> Result<()> {
        for i in 0..self.dim() {
            for k in self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize {
                let j = self.col_idx[k] as usize;
                let v = self.vals[k];
                let mirror = self.entry(j, i);
                if mirror != v {
                    return Err(Error::Config(format!(
                        "asymmetric operator: A[{i},{j}] = {v} but A[{j},{i}] = {mirror}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize {
            if self.col_idx[k] as usize == j {
                return self.vals[k];
            }
        }
        0.0
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        for i in 0..self.dim() {
            let mut acc = 0.0;
            for k in self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize {
                acc += self.vals[k] * x[self.col_idx[k] as usize];
            }
            y[i] = acc;
        }
    }

    pub fn apply_field(&self, u: &Field) -> Result<Field> {
        self.grid.check_same(&u.grid)?;
        let mut out = Field::zeros(self.grid);
        self.apply(&u.values, &mut out.values);
        out.mask = u.mask.clone();
        Ok(out)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entry(i, i)).collect()
    }

    /// Iterate stored entries of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize)
            .map(move |k| (self.col_idx[k] as usize, self.vals[k]))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let d = self.dim();
        let mut m = nalgebra::DMatrix::zeros(d, d);
        for i in 0..d {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Assemble −h²Δ + diag(vtilde) on the masked-in nodes of `grid`, with the
/// given boundary convention at the window edge. Couplings exist only between
/// masked-in neighbor pairs (zero extension across the mask boundary), which
/// keeps the matrix exactly symmetric. Masked-out rows get the decoupled
/// diagonal `4h²/s² + max(1, sup|Ṽ|) + 1`.
pub fn assemble_masked(
    grid: Grid,
    boundary: Boundary,
    mask: &Mask,
    vtilde: &Field,
    h: f64,
    e: f64,
) -> Result<SparseOperator> {
    grid.check_same(&vtilde.grid)?;
    grid.check_same(&mask.grid)?;
    if !(h > 0.0) {
        return Err(Error::Config(format!("h must be positive, got {h}")));
    }
    let n = grid.n;
    let t = h * h / (grid.spacing * grid.spacing);
    let vmax = vtilde.sup_norm();
    let decoupled = 4.0 * t + vmax.max(1.0) + 1.0;
    let periodic_nbrs = boundary == Boundary::Periodic;

    let dim = grid.len();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut col_idx = Vec::with_capacity(dim * 5);
    let mut vals = Vec::with_capacity(dim * 5);
    row_ptr.push(0u32);
    for iy in 0..n {
        for ix in 0..n {
            let i = grid.idx(ix, iy);
            if mask.bits[i] {
                // Stencil row; keep entries ordered by column for binary
                // search friendliness and deterministic serialization.
                let mut entries: Vec<(usize, f64)> = Vec::with_capacity(5);
                entries.push((i, 4.0 * t + vtilde.values[i]));
                for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
                    let nbr = if periodic_nbrs {
                        let jx = (ix as isize + dx).rem_euclid(n as isize) as usize;
                        let jy = (iy as isize + dy).rem_euclid(n as isize) as usize;
                        Some((jx, jy))
                    } else {
                        let jx = ix as isize + dx;
                        let jy = iy as isize + dy;
                        if jx < 0 || jx >= n as isize || jy < 0 || jy >= n as isize {
                            None
                        } else {
                            Some((jx as usize, jy as usize))
                        }
                    };
                    if let Some((jx, jy)) = nbr {
                        let j = grid.idx(jx, jy);
                        if mask.bits[j] {
                            entries.push((j, -t));
                        }
                    }
                }
                entries.sort_by_key(|&(j, _)| j);
                entries.dedup_by(|a, b| {
                    // n = 2 would alias neighbors; grid guarantees n ≥ 8, so
                    // duplicates cannot appear — keep the guard cheap.
                    if a.0 == b.0 {
                        b.1 += a.1;
                        true
                    } else {
                        false
                    }
                });
                for (j, v) in entries {
                    col_idx.push(j as u32);
                    vals.push(v);
                }
            } else {
                col_idx.push(i as u32);
                vals.push(decoupled);
            }
            row_ptr.push(col_idx.len() as u32);
        }
    }
    SparseOperator::from_csr(grid, boundary, h, e, mask.clone(), row_ptr, col_idx, vals)
}

/// The full chart operator −h²Δ + (V−E)/λ: periodic on the torus, Dirichlet
/// truncation at |x| = R0 on disks.
pub fn assemble_operator(
    chart: &ChartModel,
    v: &Field,
    e: f64,
    h: f64,
    grid: Grid,
) -> Result<SparseOperator> {
    grid.check_same(&v.grid)?;
    let vtilde = effective_potential(chart, v, e)?;
    let boundary = if chart.kind.is_periodic() {
        Boundary::Periodic
    } else {
        Boundary::Dirichlet
    };
    let mask = interior_mask(chart, grid);
    assemble_masked(grid, boundary, &mask, &vtilde, h, e)
}
