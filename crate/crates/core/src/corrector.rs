//! The multiplier φ = 1 + φ̃ and the divergence-form identity.
//!
//! On the perforated domain Ω the corrector φ̃ solves the same Schrödinger
//! equation as the eigenfunction, (−h²Δ + (V−E))φ̃ = −(V−E), with zero
//! boundary values on the holes, the nodal cells and the arena boundary.
//! The Poincaré constant of Ω is small enough (∼ (hε)²) that the zero-order
//! term is a perturbation: φ̃ stays uniformly small and φ = 1 + φ̃ is a
//! positive multiplier. The quotient f = u/φ then satisfies the divergence
//! equation div(φ²∇f) = 0 — exactly in the continuum when E matches the
//! eigenvalue of u, so callers fold the computed eigenvalue defect λ into E.

use crate::discretize::{assemble_masked, Boundary};
use crate::error::{Error, Result};
use crate::field::{Field, Mask};
use crate::linalg::pcg;
use crate::perforate::{poincare_constant, PerforationLayout};

/// Smallness threshold for h⁻²·k²·‖V−E‖∞: the contraction behind the
/// corrector bound has to be comfortable, not marginal.
pub const SMALLNESS_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct CorrectorSolution {
    /// φ = 1 + φ̃ everywhere; φ̃ = 0 exactly outside Ω.
    pub phi: Field,
    /// ‖φ̃‖∞.
    pub sup_dev: f64,
    /// The Poincaré constant k² of Ω used in the smallness bound.
    pub poincare_bound_used: f64,
    /// h⁻²·k²·‖V−E‖∞ at solve time.
    pub smallness: f64,
    /// The domain φ̃ was solved on (needed downstream to excise the collar
    /// where φ has Dirichlet kinks).
    pub omega: Mask,
}

/// Solve for the corrector on the layout's Ω. `e` should be the energy the
/// eigenfunction actually attains (target plus eigenvalue defect) so that
/// the downstream divergence identity holds to discretization order.
pub fn solve_corrector(
    layout: &PerforationLayout,
    v: &Field,
    e: f64,
    h: f64,
) -> Result<CorrectorSolution> {
    let g = v.grid;
    g.check_same(&layout.omega.grid)?;
    if !(h > 0.0) {
        return Err(Error::Config(format!("h must be positive, got {h}")));
    }
    let omega = &layout.omega;
    if omega.is_vacant() {
        return Err(Error::EmptyMask(" (corrector domain)"));
    }
    let k2 = poincare_constant(omega)?;
    let m = v.values.iter().fold(0.0f64, |acc, &x| acc.max((x - e).abs()));
    let smallness = k2 * m / (h * h);
    if smallness > SMALLNESS_THRESHOLD {
        return Err(Error::SmallnessViolated(smallness));
    }

    // (−h²Δ + (V−E))φ̃ = −(V−E) on Ω, zero outside. The operator is
    // positive definite: its smallest eigenvalue is ≥ h²/k² − ‖V−E‖∞ > 0
    // by the smallness just verified, so conjugate gradients apply.
    let mut vme = Field::zeros(g);
    for (dst, src) in vme.values.iter_mut().zip(&v.values) {
        *dst = src - e;
    }
    let boundary = if g.periodic { Boundary::Periodic } else { Boundary::Dirichlet };
    let op = assemble_masked(g, boundary, omega, &vme, h, 0.0)?;
    let mut b = vec![0.0f64; g.len()];
    for i in 0..g.len() {
        if omega.bits[i] {
            b[i] = -vme.values[i];
        }
    }
    let diag = op.diagonal();
    let dinv: Vec<f64> = diag.iter().map(|&d| 1.0 / d).collect();
    let dim = g.len();
    let (tilde, _iters) = pcg(
        |p, ap| op.apply(p, ap),
        &b,
        Some(&dinv),
        1e-13,
        40 * dim + 2000,
    )?;

    let mut phi = Field::constant(g, 1.0);
    let mut sup_dev = 0.0f64;
    for i in 0..dim {
        phi.values[i] += tilde[i];
        sup_dev = sup_dev.max(tilde[i].abs());
    }
    let bound = 2.0 * smallness;
    if sup_dev > bound {
        return Err(Error::CorrectorTooLarge { dev: sup_dev, bound });
    }
    Ok(CorrectorSolution {
        phi,
        sup_dev,
        poincare_bound_used: k2,
        smallness,
        omega: omega.clone(),
    })
}

/// f = u/φ, the function that satisfies the divergence-form equation.
pub fn form_ratio(u: &Field, sol: &CorrectorSolution) -> Result<Field> {
    u.grid.check_same(&sol.phi.grid)?;
    if !(sol.sup_dev < 0.5) {
        return Err(Error::CorrectorTooLarge { dev: sol.sup_dev, bound: 0.5 });
    }
    let mut f = u.clone();
    for (fv, pv) in f.values.iter_mut().zip(&sol.phi.values) {
        *fv /= pv;
    }
    Ok(f)
}

/// Masked L² norm of the discrete div(φ²∇f), flux form (face-averaged φ²
/// times the face-normal difference of f), normalized by ‖f‖₂ over the mask.
///
/// Evaluation skips a one-node collar around the nodal set (where φ snaps
/// back to 1 without solving anything) and anything whose stencil leaves the
/// mask — the identity is only claimed inside Ω̃.
pub fn divergence_residual(f: &Field, sol: &CorrectorSolution, mask: &Mask) -> Result<f64> {
    f.grid.check_same(&mask.grid)?;
    f.grid.check_same(&sol.phi.grid)?;
    let g = f.grid;
    let n = g.n;
    // Nodes of the mask that are not in Ω carry the Dirichlet kink of φ;
    // cut them and one surrounding node out of the evaluation region.
    let kink = mask.minus(&sol.omega)?;
    let eval = mask.erode().minus(&kink.dilate())?;
    if eval.is_vacant() {
        return Err(Error::EmptyMask(" (divergence evaluation region)"));
    }
    let phi = &sol.phi.values;
    let fv = &f.values;
    let s2 = g.spacing * g.spacing;
    let mut acc = 0.0f64;
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            if !eval.bits[i] {
                continue;
            }
            let mut div = 0.0f64;
            for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
                let (jx, jy) = if g.periodic {
                    (
                        (ix as isize + dx).rem_euclid(n as isize) as usize,
                        (iy as isize + dy).rem_euclid(n as isize) as usize,
                    )
                } else {
                    // erode() already guarantees the neighbor exists.
                    ((ix as isize + dx) as usize, (iy as isize + dy) as usize)
                };
                let j = jy * n + jx;
                let face = 0.5 * (phi[i] * phi[i] + phi[j] * phi[j]);
                div += face * (fv[j] - fv[i]);
            }
            div /= s2;
            acc += div * div;
        }
    }
    let norm = f.l2_mass(mask)?.sqrt();
    if norm == 0.0 {
        return Err(Error::EmptyMask(" (f vanishes on the region)"));
    }
    Ok((s2 * acc).sqrt() / norm)
}
