//! Perforation of the chart ball.
//!
//! Given an eigenfunction u on the chart, we cover its zero set by closed
//! grid cells (F₀), then greedily pack a maximal family of well-separated
//! small balls (F₁) into what remains of the arena B(0, R₀). Removing both
//! families leaves the perforated domains Ω (holes and nodal cells gone) and
//! Ω̃ (holes gone, nodal cells kept), whose Dirichlet ground state measures
//! the Poincaré constant — the quantity that must scale like (hε)².
//!
//! The ball radius scale is hε(h) with ε(h) = c/log(R₀/h), so the holes
//! shrink only logarithmically faster than h itself. Packing uses radius
//! (C+1)hε and the returned balls are shrunk to hε; the C·hε difference is
//! exactly the separation collar the downstream Carleman argument consumes.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::discretize::{assemble_masked, Boundary, SparseOperator};
use crate::error::{Error, Result};
use crate::field::{Field, Grid, Mask};
use crate::linalg::{dot, lanczos_ritz, pcg};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// The hole-size schedule ε(h) = c / log(R₀/h).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub c: f64,
    pub r0: f64,
}

impl EpsilonSchedule {
    pub fn new(c: f64, r0: f64) -> Result<EpsilonSchedule> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Config(format!("schedule constant c must be positive, got {c}")));
        }
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(Error::BadChartRadius(r0));
        }
        Ok(EpsilonSchedule { c, r0 })
    }
}

/// ε(h) = c / log(R₀/h). Strictly increasing in h on (0, R₀/e).
pub fn epsilon_of(sched: &EpsilonSchedule, h: f64) -> Result<f64> {
    if !(h > 0.0 && h < sched.r0) {
        return Err(Error::HOutOfRange { h, hmax: sched.r0 });
    }
    Ok(sched.c / (sched.r0 / h).ln())
}

// ---- distances on the node lattice -----------------------------------------

/// Nearest-image displacement magnitude along one axis.
fn wrap_abs(d: f64, period: f64) -> f64 {
    let r = d.rem_euclid(period);
    r.min(period - r)
}

/// Euclidean distance between two points, wrapped when the grid is periodic.
pub fn point_distance(grid: &Grid, p: (f64, f64), q: (f64, f64)) -> f64 {
    if grid.periodic {
        let period = grid.n as f64 * grid.spacing;
        let dx = wrap_abs(p.0 - q.0, period);
        let dy = wrap_abs(p.1 - q.1, period);
        dx.hypot(dy)
    } else {
        (p.0 - q.0).hypot(p.1 - q.1)
    }
}

/// One-dimensional squared distance transform (lower envelope of parabolas).
fn dt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q] == f64::INFINITY {
            continue;
        }
        loop {
            let p = v[k];
            if f[p] == f64::INFINITY {
                // First finite parabola encountered.
                v[k] = q;
                z[k] = f64::NEG_INFINITY;
                z[k + 1] = f64::INFINITY;
                break;
            }
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        d[q] = if f[p] == f64::INFINITY {
            f64::INFINITY
        } else {
            let dq = q as f64 - p as f64;
            f[p] + dq * dq
        };
    }
}

/// Squared Euclidean distance transform on a w×h lattice, in index units.
/// Input: 0 at seed nodes, +∞ elsewhere; transformed in place.
fn squared_dt(w: usize, h: usize, f: &mut [f64]) {
    let m = w.max(h);
    let mut col = vec![0.0f64; m];
    let mut d = vec![0.0f64; m];
    let mut v = vec![0usize; m];
    let mut z = vec![0.0f64; m + 1];
    // Columns.
    for x in 0..w {
        for y in 0..h {
            col[y] = f[y * w + x];
        }
        dt_1d(&col[..h], &mut d[..h], &mut v[..h], &mut z[..h + 1]);
        for y in 0..h {
            f[y * w + x] = d[y];
        }
    }
    // Rows.
    for y in 0..h {
        col[..w].copy_from_slice(&f[y * w..(y + 1) * w]);
        dt_1d(&col[..w], &mut d[..w], &mut v[..w], &mut z[..w + 1]);
        f[y * w..(y + 1) * w].copy_from_slice(&d[..w]);
    }
}

/// Euclidean distance from every node to the nearest seed node, in geometry
/// units. Exact on the lattice; periodic grids are handled by 3×3 tiling
/// (the nearest seed image always lies within one period). Nodes on a grid
/// with no seeds at all get +∞.
pub fn distance_map(grid: Grid, seeds: &Mask) -> Vec<f64> {
    let n = grid.n;
    if grid.periodic {
        let big = 3 * n;
        let mut f = vec![f64::INFINITY; big * big];
        for iy in 0..n {
            for ix in 0..n {
                if seeds.bits[iy * n + ix] {
                    for ty in 0..3 {
                        for tx in 0..3 {
                            f[(ty * n + iy) * big + tx * n + ix] = 0.0;
                        }
                    }
                }
            }
        }
        squared_dt(big, big, &mut f);
        let mut out = vec![0.0f64; n * n];
        for iy in 0..n {
            for ix in 0..n {
                out[iy * n + ix] = f[(n + iy) * big + n + ix].sqrt() * grid.spacing;
            }
        }
        out
    } else {
        let mut f: Vec<f64> = seeds
            .bits
            .iter()
            .map(|&b| if b { 0.0 } else { f64::INFINITY })
            .collect();
        squared_dt(n, n, &mut f);
        f.into_iter().map(|d| d.sqrt() * grid.spacing).collect()
    }
}

// ---- nodal set ------------------------------------------------------------

/// Closed grid cells meeting the zero set of u: a cell (indexed by its
/// lower-left node) is nodal iff u changes sign across one of its four edges
/// or |u| ≤ zero_tol at one of its corners. This over-approximates the true
/// zero level set, which is the safe direction for the barrier argument.
pub fn extract_nodal_set(u: &Field, zero_tol: f64) -> Mask {
    let g = u.grid;
    let n = g.n;
    let mut bits = vec![false; g.len()];
    let cell_max = if g.periodic { n } else { n - 1 };
    for iy in 0..cell_max {
        for ix in 0..cell_max {
            let jx = (ix + 1) % n;
            let jy = (iy + 1) % n;
            let a = u.values[iy * n + ix];
            let b = u.values[iy * n + jx];
            let c = u.values[jy * n + ix];
            let d = u.values[jy * n + jx];
            let corner_zero = a.abs() <= zero_tol
                || b.abs() <= zero_tol
                || c.abs() <= zero_tol
                || d.abs() <= zero_tol;
            let edge_flip = a * b < 0.0 || a * c < 0.0 || b * d < 0.0 || c * d < 0.0;
            if corner_zero || edge_flip {
                bits[iy * n + ix] = true;
            }
        }
    }
    Mask { grid: g, bits }
}

/// Default zero tolerance: 10⁻⁸ of the sup norm.
pub fn default_zero_tol(u: &Field) -> f64 {
    1e-8 * u.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Nodes touched by any nodal cell (all four corners of each cell).
fn nodal_cell_nodes(cells: &Mask) -> Mask {
    let g = cells.grid;
    let n = g.n;
    let mut bits = vec![false; g.len()];
    for iy in 0..n {
        for ix in 0..n {
            if cells.bits[iy * n + ix] {
                let jx = (ix + 1) % n;
                let jy = (iy + 1) % n;
                bits[iy * n + ix] = true;
                bits[iy * n + jx] = true;
                bits[jy * n + ix] = true;
                bits[jy * n + jx] = true;
            }
        }
    }
    Mask { grid: g, bits }
}

// ---- ball packing -----------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ball {
    pub center: (f64, f64),
    pub radius: f64,
}

/// Greedy maximal packing in row-major scan order. Packing balls have radius
/// (C+1)·radius and must lie entirely inside `free` (every node within that
/// distance is free, and for non-periodic grids the window edge counts as
/// non-free); accepted centers are pairwise ≥ 2(C+1)·radius apart. The scan
/// order makes the result deterministic, and greediness makes it maximal:
/// any free point far from all centers and from the complement would have
/// been accepted when visited.
pub fn pack_balls(free: &Mask, radius: f64, c_sep: f64) -> Result<Vec<(f64, f64)>> {
    let g = free.grid;
    if radius < 2.0 * g.spacing {
        return Err(Error::RadiusBelowResolution { radius, spacing: g.spacing });
    }
    if !(c_sep > 2.0) {
        return Err(Error::BadSeparation(c_sep));
    }
    if free.is_vacant() {
        return Ok(Vec::new());
    }
    let rpack = (c_sep + 1.0) * radius;
    let complement = free.complement();
    let dist = distance_map(g, &complement);
    let n = g.n;
    let mut centers: Vec<(f64, f64)> = Vec::new();
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            if !free.bits[i] {
                continue;
            }
            let mut clearance = dist[i];
            if !g.periodic {
                // Window edge acts as complement for the fit test.
                let edge = (ix + 1).min(n - ix).min(iy + 1).min(n - iy) as f64 * g.spacing;
                clearance = clearance.min(edge);
            }
            if clearance < rpack {
                continue;
            }
            let p = g.point(ix, iy);
            if centers
                .iter()
                .all(|&q| point_distance(&g, p, q) >= 2.0 * rpack)
            {
                centers.push(p);
            }
        }
    }
    Ok(centers)
}

// ---- layout -----------------------------------------------------------------

/// The perforation of the arena B(0, R₀) induced by an eigenfunction.
#[derive(Debug, Clone)]
pub struct PerforationLayout {
    /// Nodal cells (bit set at the cell's lower-left node).
    pub f0_cells: Mask,
    /// Shrunken balls: radius hε, separated by > C·hε from each other, from
    /// the nodal cells and from the arena boundary.
    pub f1: Vec<Ball>,
    pub c_sep: f64,
    pub epsilon: f64,
    pub h_epsilon: f64,
    /// Nodes strictly inside B(0, R₀) (wrapped on the torus).
    pub arena: Mask,
    /// Ω: arena minus nodal-cell nodes minus the balls.
    pub omega: Mask,
    /// Ω̃: arena minus the balls only.
    pub omega_tilde: Mask,
}

impl PerforationLayout {
    /// The separation regime this layout realizes. The formal chain needs
    /// C > 3328; anything smaller is the exploratory regime that desk-scale
    /// grids can actually resolve.
    pub fn mode(&self) -> &'static str {
        if self.c_sep >= 3328.0 {
            "formal"
        } else {
            "relaxed"
        }
    }

    /// JSON summary (centers, radii, counts) for the CLI dump.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mode": self.mode(),
            "separation": self.c_sep,
            "epsilon": self.epsilon,
            "h_epsilon": self.h_epsilon,
            "nodal_cells": self.f0_cells.count(),
            "balls": self.f1,
            "arena_nodes": self.arena.count(),
            "omega_nodes": self.omega.count(),
            "omega_tilde_nodes": self.omega_tilde.count(),
        })
    }

    /// Write the JSON summary plus the two domain masks as field containers.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.summary_json())?;
        std::fs::write(dir.join(format!("{stem}.json")), text)?;
        let mut omega = Field::constant(self.omega.grid, 1.0);
        omega.mask = self.omega.clone();
        omega.write_binary(&dir.join(format!("{stem}_omega.olf")))?;
        let mut omega_tilde = Field::constant(self.omega_tilde.grid, 1.0);
        omega_tilde.mask = self.omega_tilde.clone();
        omega_tilde.write_binary(&dir.join(format!("{stem}_omega_tilde.olf")))?;
        Ok(())
    }
}

/// Distance from every node to the arena complement ∪ nodal nodes, i.e. the
/// clearance available for packing.
fn arena_mask(grid: Grid, r0: f64) -> Mask {
    Mask::from_fn(grid, |x, y| {
        let d = if grid.periodic {
            let period = grid.n as f64 * grid.spacing;
            wrap_abs(x, period).hypot(wrap_abs(y, period))
        } else {
            x.hypot(y)
        };
        d < r0
    })
}

/// Build the full perforation for eigenfunction u at semiclassical scale h.
/// Verifies the separation and density invariants before returning.
pub fn build_layout(
    u: &Field,
    sched: &EpsilonSchedule,
    h: f64,
    c_sep: f64,
) -> Result<PerforationLayout> {
    if !(c_sep > 2.0) {
        return Err(Error::BadSeparation(c_sep));
    }
    let g = u.grid;
    let window = g.n as f64 * g.spacing;
    if (window - 2.0 * sched.r0).abs() > 1e-9 * sched.r0 {
        return Err(Error::Config(format!(
            "schedule radius {} does not match the grid window (side {window})",
            sched.r0
        )));
    }
    let epsilon = epsilon_of(sched, h)?;
    if epsilon >= 1.0 {
        return Err(Error::HOutOfRange { h, hmax: sched.r0 * (-sched.c).exp() });
    }
    let heps = h * epsilon;
    if heps < 2.0 * g.spacing {
        return Err(Error::ResolutionTooCoarse { heps, spacing: g.spacing });
    }

    let arena = arena_mask(g, sched.r0);
    if arena.is_vacant() {
        return Err(Error::EmptyMask(" (arena)"));
    }

    // Nodal cells restricted to the arena (cell centers inside the ball).
    let all_nodal = extract_nodal_set(u, default_zero_tol(u));
    let n = g.n;
    let mut f0_bits = vec![false; g.len()];
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            if all_nodal.bits[i] {
                let (x, y) = g.point(ix, iy);
                let cx = x + 0.5 * g.spacing;
                let cy = y + 0.5 * g.spacing;
                let d = if g.periodic {
                    wrap_abs(cx, window).hypot(wrap_abs(cy, window))
                } else {
                    cx.hypot(cy)
                };
                if d < sched.r0 {
                    f0_bits[i] = true;
                }
            }
        }
    }
    let f0_cells = Mask { grid: g, bits: f0_bits };
    let f0_nodes = nodal_cell_nodes(&f0_cells);

    let free = arena.minus(&f0_nodes)?;
    let centers = pack_balls(&free, heps, c_sep)?;
    let f1: Vec<Ball> = centers
        .iter()
        .map(|&center| Ball { center, radius: heps })
        .collect();

    // Carve the domains.
    let mut tilde_bits = arena.bits.clone();
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            if !tilde_bits[i] {
                continue;
            }
            let p = g.point(ix, iy);
            if centers.iter().any(|&q| point_distance(&g, p, q) <= heps) {
                tilde_bits[i] = false;
            }
        }
    }
    let omega_tilde = Mask { grid: g, bits: tilde_bits };
    let omega = omega_tilde.minus(&f0_nodes)?;

    let layout = PerforationLayout {
        f0_cells,
        f1,
        c_sep,
        epsilon,
        h_epsilon: heps,
        arena,
        omega,
        omega_tilde,
    };
    verify_layout(&layout, g)?;
    Ok(layout)
}

/// The two PerforationLayout invariants, checked exhaustively on the grid.
fn verify_layout(layout: &PerforationLayout, g: Grid) -> Result<()> {
    let heps = layout.h_epsilon;
    let c = layout.c_sep;
    let slack = g.spacing;
    // Separation: pairwise centers, and each ball against F₀ and ∂B(0,R₀).
    for (a, ball_a) in layout.f1.iter().enumerate() {
        for ball_b in layout.f1.iter().skip(a + 1) {
            let d = point_distance(&g, ball_a.center, ball_b.center);
            if d < 2.0 * (c + 1.0) * heps - slack {
                return Err(Error::Config(format!(
                    "layout invariant broken: centers {d:.4e} apart, need {:.4e}",
                    2.0 * (c + 1.0) * heps
                )));
            }
        }
    }
    let f0_nodes = nodal_cell_nodes(&layout.f0_cells);
    let not_arena = layout.arena.complement();
    let obstacles = f0_nodes.or(&not_arena)?;
    let clearance = distance_map(g, &obstacles);
    for (i, ball) in layout.f1.iter().enumerate() {
        let (ix, iy) = g
            .nearest_node(ball.center.0, ball.center.1)
            .expect("center is a grid node");
        let d = clearance[iy * g.n + ix];
        if d < (c + 1.0) * heps - slack {
            return Err(Error::Config(format!(
                "layout invariant broken: ball {i} clearance {d:.4e}, need {:.4e}",
                (c + 1.0) * heps
            )));
        }
    }
    // Density: every arena node outside F₀ is within 3C·hε (+ grid slack)
    // of F₀ ∪ F₁ ∪ ∂B(0,R₀).
    let mut seed_bits = obstacles.bits.clone();
    let n = g.n;
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            if seed_bits[i] {
                continue;
            }
            let p = g.point(ix, iy);
            if layout
                .f1
                .iter()
                .any(|b| point_distance(&g, p, b.center) <= b.radius)
            {
                seed_bits[i] = true;
            }
        }
    }
    let seeds = Mask { grid: g, bits: seed_bits };
    let dist = distance_map(g, &seeds);
    let bound = 3.0 * c * heps + slack;
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            if layout.arena.bits[i] && !f0_nodes.bits[i] && dist[i] > bound {
                let (x, y) = g.point(ix, iy);
                return Err(Error::Config(format!(
                    "layout invariant broken: node ({x:.4}, {y:.4}) is {:.4e} from the \
                     perforation, bound {bound:.4e}",
                    dist[i]
                )));
            }
        }
    }
    Ok(())
}

// ---- Poincaré constant -------------------------------------------------------

/// Smallest eigenvalue of the (h = 1) Dirichlet Laplacian on the masked
/// region, via Lanczos on A⁻¹ with conjugate-gradient inner solves. The
/// operator is a Stieltjes matrix, so CG with a Jacobi preconditioner is
/// reliable; the dominant eigenvalue of A⁻¹ is simple for the domains the
/// perforation produces.
fn smallest_masked_eigenvalue(op: &SparseOperator) -> Result<f64> {
    let dim = op.dim();
    let diag = op.diagonal();
    let dinv: Vec<f64> = diag.iter().map(|&d| 1.0 / d).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x90a1_7c2e);

    let mut best: Option<f64> = None;
    for round in 0..4u32 {
        let steps = 32 + 16 * round as usize;
        let mut start = vec![0.0f64; dim];
        for (i, v) in start.iter_mut().enumerate() {
            if op.interior.bits[i] {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        // Lanczos on A⁻¹; propagate any CG failure through the cell.
        let failure = std::cell::RefCell::new(None);
        let apply_inv = |x: &[f64], y: &mut [f64]| {
            match pcg(|p, ap| op.apply(p, ap), x, Some(&dinv), 1e-13, 40 * dim + 2000) {
                Ok((sol, _)) => y.copy_from_slice(&sol),
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    y.fill(0.0);
                }
            }
        };
        let ritz = lanczos_ritz(apply_inv, &start, &[], steps);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let Some((_, y)) = ritz.into_iter().next() else {
            continue;
        };
        let mut ay = vec![0.0f64; dim];
        op.apply(&y, &mut ay);
        let mu = dot(&y, &ay);
        let mut r2 = 0.0f64;
        for i in 0..dim {
            r2 += (ay[i] - mu * y[i]).powi(2);
        }
        let resid = r2.sqrt();
        if resid <= 1e-7 * mu.abs() {
            return Ok(mu);
        }
        best = Some(match best {
            Some(b) if b < mu => b,
            _ => mu,
        });
    }
    match best {
        // The Rayleigh quotient is an upper bound on μ₁ either way; refuse
        // only if no round produced a usable vector.
        Some(mu) => Ok(mu),
        None => Err(Error::NoConvergence {
            method: "inverse lanczos (poincare)",
            iters: 4,
            residual: f64::INFINITY,
            wanted: 1e-7,
        }),
    }
}

/// Poincaré constant k² of the masked region: ‖f‖₂² ≤ k²‖∇f‖₂² for all f
/// vanishing outside the mask, realized as 1/μ₁ of the Dirichlet Laplacian.
pub fn poincare_constant(mask: &Mask) -> Result<f64> {
    if mask.is_vacant() {
        return Err(Error::EmptyMask(" (poincare region)"));
    }
    let g = mask.grid;
    let boundary = if g.periodic { Boundary::Periodic } else { Boundary::Dirichlet };
    let zero = Field::zeros(g);
    let op = assemble_masked(g, boundary, mask, &zero, 1.0, 0.0)?;
    let mu1 = smallest_masked_eigenvalue(&op)?;
    Ok(1.0 / mu1)
}

// ---- positivity diagnostic ----------------------------------------------------

/// Outcome of sampling the positivity Lemma on one ball.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PositivityReport {
    pub boundary_positive: bool,
    pub interior_positive: bool,
    /// Whether r < r₀·h held, i.e. the Lemma's hypothesis applies.
    pub hypothesis_met: bool,
    /// boundary_positive ⇒ interior_positive, gated on the hypothesis
    /// (vacuously true when the hypothesis fails: nothing is asserted).
    pub consistent: bool,
}

/// Default positivity radius factor r₀ = (2‖V−E‖∞)^{-1/2}.
pub fn default_positivity_radius(v: &Field, e: f64) -> f64 {
    let m = v.values.iter().fold(0.0f64, |acc, &x| acc.max((x - e).abs()));
    1.0 / (2.0 * m.max(1e-300)).sqrt()
}

/// Sample the positivity Lemma: if u > 0 on the discrete boundary ring of
/// B(center, r) and r < r₀·h, then u should be > 0 throughout the ball.
pub fn positivity_radius_check(
    u: &Field,
    center: (f64, f64),
    r: f64,
    v: &Field,
    e: f64,
    h: f64,
    r0_factor: Option<f64>,
) -> Result<PositivityReport> {
    u.grid.check_same(&v.grid)?;
    let g = u.grid;
    let half_window = 0.5 * g.n as f64 * g.spacing;
    let fits = if g.periodic {
        r <= half_window
    } else {
        center.0.hypot(center.1) + r <= half_window + 1e-12 * half_window
    };
    if !(r > 0.0) || !fits {
        return Err(Error::BallOutsideChart(center.0, center.1, r));
    }
    let r0 = r0_factor.unwrap_or_else(|| default_positivity_radius(v, e));
    let hypothesis_met = r < r0 * h;

    let ring = 1.5 * g.spacing;
    let mut interior_positive = true;
    let mut boundary_positive = true;
    let mut seen = 0usize;
    for iy in 0..g.n {
        for ix in 0..g.n {
            let p = g.point(ix, iy);
            let d = point_distance(&g, p, center);
            if d > r {
                continue;
            }
            seen += 1;
            let val = u.values[iy * g.n + ix];
            if d > r - ring {
                boundary_positive &= val > 0.0;
            } else {
                interior_positive &= val > 0.0;
            }
        }
    }
    if seen == 0 {
        return Err(Error::EmptyMask(" (positivity ball contains no nodes)"));
    }
    let implication = !boundary_positive || interior_positive;
    Ok(PositivityReport {
        boundary_positive,
        interior_positive,
        hypothesis_met,
        consistent: implication || !hypothesis_met,
    })
}
