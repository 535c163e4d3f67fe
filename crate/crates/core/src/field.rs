//! Uniform grids, validity masks, and sampled scalar fields.
//!
//! A grid covers the chart window with n×n nodes at `origin + (ix, iy)·spacing`,
//! stored row-major with x fastest (`idx = iy·n + ix`). Periodic grids wrap
//! neighbor lookups; non-periodic grids drop neighbors past the edge, which
//! is exactly the homogeneous Dirichlet (zero-extension) convention.
//!
//! Every reduction (mass, energy, norms) consumes only masked-in samples, so
//! perforated domains are just masks and need no special-case code paths.

use crate::error::{Error, Result};
use crate::geometry::ChartModel;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{Read as _, Write as _};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub spacing: f64,
    pub origin: (f64, f64),
    pub periodic: bool,
}

impl Grid {
    pub fn new(n: usize, spacing: f64, origin: (f64, f64), periodic: bool) -> Result<Grid> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::BadGridSize(n));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Config(format!("bad grid spacing {spacing}")));
        }
        Ok(Grid { n, spacing, origin, periodic })
    }

    /// Grid matched to a chart: n×n nodes over the chart window, spacing
    /// 2·R0/n, periodic exactly when the chart is the torus cell.
    pub fn for_chart(chart: &ChartModel, n: usize) -> Result<Grid> {
        Grid::new(
            n,
            chart.window_side() / n as f64,
            chart.window_origin(),
            chart.kind.is_periodic(),
        )
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.n && iy < self.n);
        iy * self.n + ix
    }

    #[inline]
    pub fn coords_of(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    #[inline]
    pub fn point(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin.0 + ix as f64 * self.spacing,
            self.origin.1 + iy as f64 * self.spacing,
        )
    }

    /// Neighbor one step in the given axis direction; None past a hard edge.
    #[inline]
    pub fn step(&self, ix: usize, iy: usize, dx: isize, dy: isize) -> Option<(usize, usize)> {
        let n = self.n as isize;
        let mut jx = ix as isize + dx;
        let mut jy = iy as isize + dy;
        if self.periodic {
            jx = jx.rem_euclid(n);
            jy = jy.rem_euclid(n);
        } else if jx < 0 || jx >= n || jy < 0 || jy >= n {
            return None;
        }
        Some((jx as usize, jy as usize))
    }

    /// Nearest node to a point, if it falls inside the window (always for
    /// periodic grids, which wrap first).
    pub fn nearest_node(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let side = self.n as f64 * self.spacing;
        let mut fx = x - self.origin.0;
        let mut fy = y - self.origin.1;
        if self.periodic {
            fx = fx.rem_euclid(side);
            fy = fy.rem_euclid(side);
        }
        let ix = (fx / self.spacing).round() as isize;
        let iy = (fy / self.spacing).round() as isize;
        let n = self.n as isize;
        if self.periodic {
            Some(((ix.rem_euclid(n)) as usize, (iy.rem_euclid(n)) as usize))
        } else if ix >= 0 && ix < n && iy >= 0 && iy < n {
            Some((ix as usize, iy as usize))
        } else {
            None
        }
    }

    fn signature(&self) -> String {
        format!(
            "n={} spacing={:.6e} origin=({:.6e},{:.6e}) periodic={}",
            self.n, self.spacing, self.origin.0, self.origin.1, self.periodic
        )
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(self.signature(), other.signature()))
        }
    }
}

/// A subset of grid nodes. Plain bit vector with set algebra; no geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub grid: Grid,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn full(grid: Grid) -> Mask {
        Mask { grid, bits: vec![true; grid.len()] }
    }

    pub fn empty(grid: Grid) -> Mask {
        Mask { grid, bits: vec![false; grid.len()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> bool) -> Mask {
        let mut bits = vec![false; grid.len()];
        for iy in 0..grid.n {
            for ix in 0..grid.n {
                let (x, y) = grid.point(ix, iy);
                bits[grid.idx(ix, iy)] = f(x, y);
            }
        }
        Mask { grid, bits }
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.bits[self.grid.idx(ix, iy)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_vacant(&self) -> bool {
        self.bits.iter().all(|&b| !b)
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.grid.check_same(&other.grid)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && b).collect();
        Ok(Mask { grid: self.grid, bits })
    }

    pub fn or(&self, other: &Mask) -> Result<Mask> {
        self.grid.check_same(&other.grid)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect();
        Ok(Mask { grid: self.grid, bits })
    }

    pub fn minus(&self, other: &Mask) -> Result<Mask> {
        self.grid.check_same(&other.grid)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect();
        Ok(Mask { grid: self.grid, bits })
    }

    pub fn complement(&self) -> Mask {
        Mask {
            grid: self.grid,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    /// Keep nodes whose four axis neighbors are all in the mask (edge nodes
    /// of non-periodic grids lose their missing neighbors and are eroded).
    pub fn erode(&self) -> Mask {
        let g = self.grid;
        let mut bits = vec![false; g.len()];
        for iy in 0..g.n {
            for ix in 0..g.n {
                if !self.get(ix, iy) {
                    continue;
                }
                let ok = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().all(|&(dx, dy)| {
                    g.step(ix, iy, dx, dy).is_some_and(|(jx, jy)| self.get(jx, jy))
                });
                bits[g.idx(ix, iy)] = ok;
            }
        }
        Mask { grid: g, bits }
    }

    pub fn dilate(&self) -> Mask {
        let g = self.grid;
        let mut bits = self.bits.clone();
        for iy in 0..g.n {
            for ix in 0..g.n {
                if !self.get(ix, iy) {
                    continue;
                }
                for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    if let Some((jx, jy)) = g.step(ix, iy, dx, dy) {
                        bits[g.idx(jx, jy)] = true;
                    }
                }
            }
        }
        Mask { grid: g, bits }
    }

    /// Nodes outside the mask that touch it (4-adjacency): the layer where
    /// Dirichlet data lives for solves on the mask interior.
    pub fn boundary_layer(&self) -> Mask {
        let dilated = self.dilate();
        dilated.minus(self).expect("same grid")
    }
}

/// Real scalar field with validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub mask: Mask,
}

impl Field {
    pub fn zeros(grid: Grid) -> Field {
        Field {
            grid,
            values: vec![0.0; grid.len()],
            mask: Mask::full(grid),
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Field {
        Field {
            grid,
            values: vec![c; grid.len()],
            mask: Mask::full(grid),
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Field {
        let mut values = vec![0.0; grid.len()];
        for iy in 0..grid.n {
            for ix in 0..grid.n {
                let (x, y) = grid.point(ix, iy);
                values[grid.idx(ix, iy)] = f(x, y);
            }
        }
        Field { grid, values, mask: Mask::full(grid) }
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.idx(ix, iy)]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, v: f64) {
        let i = self.grid.idx(ix, iy);
        self.values[i] = v;
    }

    pub fn with_mask(mut self, mask: Mask) -> Result<Field> {
        self.grid.check_same(&mask.grid)?;
        self.mask = mask;
        Ok(self)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.mask.bits)
            .filter(|&(_, &m)| m)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max)
    }

    /// Quadrature L² mass over `region` (intersected with the field's own
    /// mask): spacing²·Σ u². Empty region gives 0.
    pub fn l2_mass(&self, region: &Mask) -> Result<f64> {
        self.grid.check_same(&region.grid)?;
        let mut sum = 0.0;
        for i in 0..self.values.len() {
            if region.bits[i] && self.mask.bits[i] {
                sum += self.values[i] * self.values[i];
            }
        }
        Ok(sum * self.grid.spacing * self.grid.spacing)
    }

    pub fn l2_norm(&self) -> f64 {
        let full = Mask::full(self.grid);
        self.l2_mass(&full).expect("same grid").sqrt()
    }

    /// Masked quadrature of |h·∇u|²: per axis, the average of the squared
    /// forward and backward differences, skipping differences that would
    /// cross the mask (a sample with no valid difference in an axis
    /// contributes nothing there).
    pub fn gradient_energy_on(&self, h: f64, region: &Mask) -> Result<f64> {
        self.grid.check_same(&region.grid)?;
        let g = self.grid;
        let active = region.and(&self.mask)?;
        if active.is_vacant() {
            return Err(Error::EmptyMask(" in gradient_energy"));
        }
        let s = g.spacing;
        let mut sum = 0.0;
        for iy in 0..g.n {
            for ix in 0..g.n {
                if !active.get(ix, iy) {
                    continue;
                }
                let u0 = self.get(ix, iy);
                for (dx, dy) in [(1isize, 0isize), (0, 1)] {
                    let mut contribs = 0.0;
                    let mut count = 0;
                    for sign in [1isize, -1] {
                        if let Some((jx, jy)) = g.step(ix, iy, dx * sign, dy * sign) {
                            if active.get(jx, jy) {
                                let d = (self.get(jx, jy) - u0) / s;
                                contribs += d * d;
                                count += 1;
                            }
                        }
                    }
                    if count > 0 {
                        sum += contribs / count as f64;
                    }
                }
            }
        }
        Ok(sum * h * h * s * s)
    }

    pub fn gradient_energy(&self, h: f64) -> Result<f64> {
        let full = Mask::full(self.grid);
        self.gradient_energy_on(h, &full)
    }

    /// Bilinear interpolation at a point. Uses raw values (ignores the mask);
    /// callers restrict to regions where the stencil is valid. Periodic grids
    /// wrap; otherwise the point must keep the 2×2 stencil inside the window.
    pub fn bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let g = self.grid;
        let side = g.n as f64 * g.spacing;
        let mut fx = (x - g.origin.0) / g.spacing;
        let mut fy = (y - g.origin.1) / g.spacing;
        if g.periodic {
            fx = fx.rem_euclid(side / g.spacing);
            fy = fy.rem_euclid(side / g.spacing);
        } else if fx < 0.0 || fy < 0.0 || fx > (g.n - 1) as f64 || fy > (g.n - 1) as f64 {
            return None;
        }
        let ix = (fx.floor() as usize).min(g.n - 1);
        let iy = (fy.floor() as usize).min(g.n - 1);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let (ix1, iy1) = if g.periodic {
            ((ix + 1) % g.n, (iy + 1) % g.n)
        } else {
            ((ix + 1).min(g.n - 1), (iy + 1).min(g.n - 1))
        };
        let v00 = self.get(ix, iy);
        let v10 = self.get(ix1, iy);
        let v01 = self.get(ix, iy1);
        let v11 = self.get(ix1, iy1);
        Some(
            v00 * (1.0 - tx) * (1.0 - ty)
                + v10 * tx * (1.0 - ty)
                + v01 * (1.0 - tx) * ty
                + v11 * tx * ty,
        )
    }
}

/// Complex scalar field (Beltrami coefficients, map displacements).
#[derive(Debug, Clone, PartialEq)]
pub struct CField {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    pub mask: Mask,
}

impl CField {
    pub fn zeros(grid: Grid) -> CField {
        CField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            mask: Mask::full(grid),
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> Complex64) -> CField {
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        for iy in 0..grid.n {
            for ix in 0..grid.n {
                let (x, y) = grid.point(ix, iy);
                values[grid.idx(ix, iy)] = f(x, y);
            }
        }
        CField { grid, values, mask: Mask::full(grid) }
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> Complex64 {
        self.values[self.grid.idx(ix, iy)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.mask.bits)
            .filter(|&(_, &m)| m)
            .map(|(v, _)| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        let s = self.grid.spacing;
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * s * s).sqrt()
    }

    pub fn bilinear(&self, x: f64, y: f64) -> Option<Complex64> {
        // Same stencil as the real case, on re and im parts together.
        let g = self.grid;
        let side = g.n as f64 * g.spacing;
        let mut fx = (x - g.origin.0) / g.spacing;
        let mut fy = (y - g.origin.1) / g.spacing;
        if g.periodic {
            fx = fx.rem_euclid(side / g.spacing);
            fy = fy.rem_euclid(side / g.spacing);
        } else if fx < 0.0 || fy < 0.0 || fx > (g.n - 1) as f64 || fy > (g.n - 1) as f64 {
            return None;
        }
        let ix = (fx.floor() as usize).min(g.n - 1);
        let iy = (fy.floor() as usize).min(g.n - 1);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let (ix1, iy1) = if g.periodic {
            ((ix + 1) % g.n, (iy + 1) % g.n)
        } else {
            ((ix + 1).min(g.n - 1), (iy + 1).min(g.n - 1))
        };
        Some(
            self.get(ix, iy) * (1.0 - tx) * (1.0 - ty)
                + self.get(ix1, iy) * tx * (1.0 - ty)
                + self.get(ix, iy1) * (1.0 - tx) * ty
                + self.get(ix1, iy1) * tx * ty,
        )
    }
}

// ---- serialization ----------------------------------------------------

const MAGIC: [u8; 4] = *b"OLF1";
const KIND_REAL: u8 = 0;
const KIND_COMPLEX: u8 = 1;

fn write_header(w: &mut impl std::io::Write, grid: &Grid, kind: u8) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&(grid.n as u32).to_le_bytes())?;
    w.write_all(&[kind, grid.periodic as u8, 0, 0])?;
    w.write_all(&grid.spacing.to_le_bytes())?;
    w.write_all(&grid.origin.0.to_le_bytes())?;
    w.write_all(&grid.origin.1.to_le_bytes())?;
    Ok(())
}

fn read_header(r: &mut impl std::io::Read) -> Result<(Grid, u8)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::BadContainer(format!("bad magic {magic:?}")));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    let mut flags = [0u8; 4];
    r.read_exact(&mut flags)?;
    let kind = flags[0];
    let periodic = flags[1] != 0;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let spacing = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let ox = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let oy = f64::from_le_bytes(b8);
    let grid = Grid::new(n, spacing, (ox, oy), periodic)?;
    Ok((grid, kind))
}

impl Field {
    /// Flat binary container: header (magic, n, kind tag, spacing, origin),
    /// then n² little-endian f64 row-major, then n² mask bytes.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_header(&mut w, &self.grid, KIND_REAL)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        let maskbytes: Vec<u8> = self.mask.bits.iter().map(|&b| b as u8).collect();
        w.write_all(&maskbytes)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Field> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let (grid, kind) = read_header(&mut r)?;
        if kind != KIND_REAL {
            return Err(Error::BadContainer(format!(
                "expected real field (tag {KIND_REAL}), got tag {kind}"
            )));
        }
        let mut values = vec![0.0f64; grid.len()];
        let mut b8 = [0u8; 8];
        for v in values.iter_mut() {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        let mut maskbytes = vec![0u8; grid.len()];
        r.read_exact(&mut maskbytes)?;
        let bits = maskbytes.iter().map(|&b| b != 0).collect();
        Ok(Field { grid, values, mask: Mask { grid, bits } })
    }

    /// CSV dump for inspection: x, y, value, mask.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "x,y,value,mask")?;
        for iy in 0..self.grid.n {
            for ix in 0..self.grid.n {
                let (x, y) = self.grid.point(ix, iy);
                writeln!(
                    w,
                    "{},{},{},{}",
                    x,
                    y,
                    self.get(ix, iy),
                    self.mask.get(ix, iy) as u8
                )?;
            }
        }
        Ok(())
    }
}

impl CField {
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_header(&mut w, &self.grid, KIND_COMPLEX)?;
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        let maskbytes: Vec<u8> = self.mask.bits.iter().map(|&b| b as u8).collect();
        w.write_all(&maskbytes)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<CField> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let (grid, kind) = read_header(&mut r)?;
        if kind != KIND_COMPLEX {
            return Err(Error::BadContainer(format!(
                "expected complex field (tag {KIND_COMPLEX}), got tag {kind}"
            )));
        }
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut b8 = [0u8; 8];
        for v in values.iter_mut() {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            *v = Complex64::new(re, im);
        }
        let mut maskbytes = vec![0u8; grid.len()];
        r.read_exact(&mut maskbytes)?;
        let bits = maskbytes.iter().map(|&b| b != 0).collect();
        Ok(CField { grid, values, mask: Mask { grid, bits } })
    }
}
