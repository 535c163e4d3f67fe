//! Beltrami coefficients and the quasiconformal straightening map.
//!
//! The multiplier φ and the quotient f turn the eigenfunction equation into
//! div(φ²∇f) = 0; writing that in complex notation yields a Beltrami
//! coefficient μ = ((1−φ²)/(1+φ²))·(∂_x f + i∂_y f)/(∂_x f − i∂_y f) with
//! |μ| < 1 wherever φ > 0. Solving ∂_z̄ψ = μ∂_zψ produces a quasiconformal
//! map ψ that straightens f into a harmonic function.
//!
//! The plane problem is approximated on a periodic cell whose side is a
//! multiple of the chart window, with μ compactly supported in the middle;
//! there the Beurling transform S = ∂_z(∂_z̄)⁻¹ is an exact Fourier
//! multiplier ζ̄/ζ and the Neumann series g ← μS(g) + μ contracts at rate
//! sup|μ|. The mean of g has no periodic antiderivative and is carried as an
//! explicit secular term sec·z̄ in the displacement.

use crate::corrector::CorrectorSolution;
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::{CField, Field, Grid, Mask};
use crate::perforate::Ball;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// How strictly the solver polices the support of μ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeltramiMode {
    /// μ must vanish outside the central half of the cell (the embedding
    /// used for chart data); anything else is an error.
    CompactSupport,
    /// Whole-cell μ allowed — periodicity stands in for compact support.
    /// Used by synthetic tests such as constant μ.
    PeriodicTest,
}

#[derive(Debug, Clone)]
pub struct BeltramiField {
    pub mu: CField,
    pub sup_mu: f64,
}

impl BeltramiField {
    pub fn from_cfield(mu: CField) -> BeltramiField {
        let sup_mu = mu.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        BeltramiField { mu, sup_mu }
    }

    pub fn constant(grid: Grid, k: Complex64) -> BeltramiField {
        let mu = CField::from_fn(grid, |_, _| k);
        BeltramiField { mu, sup_mu: k.norm() }
    }
}

/// μ from the multiplier and the quotient: zero outside `mask`, zero where
/// the gradient is numerically degenerate (below 10⁻¹⁰·‖∇f‖∞), and equal to
/// ((1−φ²)/(1+φ²))·(∂_x f + i∂_y f)/(∂_x f − i∂_y f) elsewhere. The second
/// factor is unimodular, so |μ| ≤ |1−φ²|/(1+φ²) pointwise.
pub fn beltrami_coefficient(
    f: &Field,
    sol: &CorrectorSolution,
    mask: &Mask,
) -> Result<BeltramiField> {
    f.grid.check_same(&sol.phi.grid)?;
    f.grid.check_same(&mask.grid)?;
    if !(sol.sup_dev < 0.5) {
        return Err(Error::CorrectorTooLarge { dev: sol.sup_dev, bound: 0.5 });
    }
    let g = f.grid;
    let n = g.n;
    let inv2s = 1.0 / (2.0 * g.spacing);
    let grad_at = |ix: usize, iy: usize| -> Option<(f64, f64)> {
        let (ex, _) = g.step(ix, iy, 1, 0)?;
        let (wx, _) = g.step(ix, iy, -1, 0)?;
        let (_, ny) = g.step(ix, iy, 0, 1)?;
        let (_, sy) = g.step(ix, iy, 0, -1)?;
        let gx = (f.values[g.idx(ex, iy)] - f.values[g.idx(wx, iy)]) * inv2s;
        let gy = (f.values[g.idx(ix, ny)] - f.values[g.idx(ix, sy)]) * inv2s;
        Some((gx, gy))
    };
    let mut sup_grad = 0.0f64;
    for iy in 0..n {
        for ix in 0..n {
            if !mask.bits[g.idx(ix, iy)] {
                continue;
            }
            if let Some((gx, gy)) = grad_at(ix, iy) {
                sup_grad = sup_grad.max(gx.hypot(gy));
            }
        }
    }
    let grad_tol = 1e-10 * sup_grad;
    let mut mu = CField::zeros(g);
    mu.mask = mask.clone();
    let mut sup_mu = 0.0f64;
    for iy in 0..n {
        for ix in 0..n {
            let i = g.idx(ix, iy);
            if !mask.bits[i] {
                continue;
            }
            let Some((gx, gy)) = grad_at(ix, iy) else { continue };
            if gx.hypot(gy) <= grad_tol {
                continue;
            }
            let phi = sol.phi.values[i];
            let lead = (1.0 - phi * phi) / (1.0 + phi * phi);
            let num = Complex64::new(gx, gy);
            let den = Complex64::new(gx, -gy);
            let m = lead * num / den;
            sup_mu = sup_mu.max(m.norm());
            mu.values[i] = m;
        }
    }
    Ok(BeltramiField { mu, sup_mu })
}

/// Paste μ into the middle of a periodic cell `factor` times wider. Periodic
/// source grids (the torus, where the arena wraps through the corners) are
/// first rolled by half a period per axis so the support sits contiguously
/// around the origin; the roll is an exact torus translation.
pub fn embed_in_cell(mu: &BeltramiField, factor: usize) -> Result<BeltramiField> {
    if factor < 2 {
        return Err(Error::Config(format!(
            "embedding factor must be at least 2, got {factor}"
        )));
    }
    let g = mu.mu.grid;
    let n = g.n;
    let side = n as f64 * g.spacing;
    let big_n = factor * n;
    let big_origin = -(factor as f64) * side / 2.0;
    let big = Grid::new(big_n, g.spacing, (big_origin, big_origin), true)?;
    let mut out = CField::zeros(big);
    let offset = (factor - 1) * n / 2;
    for iy in 0..n {
        for ix in 0..n {
            let (sx, sy) = if g.periodic {
                ((ix + n / 2) % n, (iy + n / 2) % n)
            } else {
                (ix, iy)
            };
            out.values[(iy + offset) * big_n + (ix + offset)] = mu.mu.values[g.idx(sx, sy)];
        }
    }
    Ok(BeltramiField { mu: out, sup_mu: mu.sup_mu })
}

/// A solved quasiconformal map on the periodic cell: ψ(z) = z + displacement,
/// with the derivative fields, the dilatation bound, and the achieved
/// residual of the Beltrami equation.
#[derive(Debug, Clone)]
pub struct QCMap {
    /// ψ(z) − z sampled at the cell nodes (includes the secular part).
    pub displacement: CField,
    pub dz_psi: CField,
    pub dzbar_psi: CField,
    /// Coefficient of the non-periodic z̄ term (the mean of ∂_z̄ψ − 0).
    pub secular: Complex64,
    /// K = (1 + sup|μ|)/(1 − sup|μ|).
    pub k_dilatation: f64,
    /// ‖∂_z̄ψ − μ∂_zψ‖₂ / ‖∂_zψ‖₂ on the cell.
    pub beltrami_residual: f64,
}

#[derive(Serialize, Deserialize)]
struct QCMapMeta {
    k_dilatation: f64,
    beltrami_residual: f64,
    secular_re: f64,
    secular_im: f64,
    normalization: (f64, f64),
}

/// Cubic Lagrange basis on nodes {0,1,2,3} evaluated at xi. Exact on cubics;
/// at integer xi the weights are exactly 0/1, so node-aligned evaluations
/// reproduce samples bit-for-bit.
fn lagrange_w(xi: f64) -> [f64; 4] {
    [
        -(xi - 1.0) * (xi - 2.0) * (xi - 3.0) / 6.0,
        xi * (xi - 2.0) * (xi - 3.0) / 2.0,
        -xi * (xi - 1.0) * (xi - 3.0) / 2.0,
        xi * (xi - 1.0) * (xi - 2.0) / 6.0,
    ]
}

/// 1D stencil for bicubic interpolation at fractional index u: four sample
/// indices and their weights. Periodic grids wrap; bounded grids shift the
/// stencil inward near the edges (still exact on cubics) and refuse points
/// outside [0, n−1].
fn cubic_axis(n: usize, periodic: bool, u: f64) -> Option<([usize; 4], [f64; 4])> {
    let mut u = u;
    let r = u.round();
    if (u - r).abs() < 1e-9 * (1.0 + u.abs()) {
        u = r;
    }
    if periodic {
        let nn = n as f64;
        u = u.rem_euclid(nn);
        if u >= nn {
            u = 0.0; // rem_euclid can return nn when u is a tiny negative
        }
        let i0 = u.floor() as usize % n;
        let base = (i0 + n - 1) % n;
        let xi = u - i0 as f64 + 1.0;
        let idx = [base, (base + 1) % n, (base + 2) % n, (base + 3) % n];
        Some((idx, lagrange_w(xi)))
    } else {
        if u < 0.0 || u > (n - 1) as f64 {
            return None;
        }
        let i0 = (u.floor() as usize).min(n - 1);
        let base = i0.saturating_sub(1).min(n - 4);
        let xi = u - base as f64;
        let idx = [base, base + 1, base + 2, base + 3];
        Some((idx, lagrange_w(xi)))
    }
}

fn interp_complex(field: &CField, x: f64, y: f64) -> Option<Complex64> {
    let g = field.grid;
    let ux = (x - g.origin.0) / g.spacing;
    let uy = (y - g.origin.1) / g.spacing;
    let (xs, wx) = cubic_axis(g.n, g.periodic, ux)?;
    let (ys, wy) = cubic_axis(g.n, g.periodic, uy)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, &iy) in ys.iter().enumerate() {
        if wy[j] == 0.0 {
            continue;
        }
        let mut row = Complex64::new(0.0, 0.0);
        for (i, &ix) in xs.iter().enumerate() {
            row += wx[i] * field.values[iy * g.n + ix];
        }
        acc += wy[j] * row;
    }
    Some(acc)
}

/// Bicubic sample of a real field; `None` if the point falls outside a
/// bounded grid or any stencil sample is masked out.
fn interp_real_masked(field: &Field, x: f64, y: f64) -> Option<f64> {
    let g = field.grid;
    let ux = (x - g.origin.0) / g.spacing;
    let uy = (y - g.origin.1) / g.spacing;
    let (xs, wx) = cubic_axis(g.n, g.periodic, ux)?;
    let (ys, wy) = cubic_axis(g.n, g.periodic, uy)?;
    let mut acc = 0.0;
    for (j, &iy) in ys.iter().enumerate() {
        for (i, &ix) in xs.iter().enumerate() {
            if !field.mask.bits[iy * g.n + ix] {
                return None;
            }
            acc += wy[j] * wx[i] * field.values[iy * g.n + ix];
        }
    }
    Some(acc)
}

impl QCMap {
    pub fn grid(&self) -> Grid {
        self.displacement.grid
    }

    /// ψ(z), bicubic between nodes.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        z + interp_complex(&self.displacement, z.re, z.im)
            .expect("periodic cell interpolation cannot fail")
    }

    pub fn eval_dz(&self, z: Complex64) -> Complex64 {
        interp_complex(&self.dz_psi, z.re, z.im).expect("periodic cell")
    }

    pub fn eval_dzbar(&self, z: Complex64) -> Complex64 {
        interp_complex(&self.dzbar_psi, z.re, z.im).expect("periodic cell")
    }

    /// Serialize as two complex containers (displacement, ∂_zψ) plus JSON
    /// metadata; ∂_z̄ψ is reconstructed spectrally on load.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.displacement
            .write_binary(&dir.join(format!("{stem}_displacement.olf")))?;
        self.dz_psi
            .write_binary(&dir.join(format!("{stem}_dzpsi.olf")))?;
        let meta = QCMapMeta {
            k_dilatation: self.k_dilatation,
            beltrami_residual: self.beltrami_residual,
            secular_re: self.secular.re,
            secular_im: self.secular.im,
            normalization: (0.0, 0.0),
        };
        let text = serde_json::to_string_pretty(&meta)?;
        std::fs::write(dir.join(format!("{stem}.json")), text)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<QCMap> {
        let displacement =
            CField::read_binary(&dir.join(format!("{stem}_displacement.olf")))?;
        let dz_psi = CField::read_binary(&dir.join(format!("{stem}_dzpsi.olf")))?;
        let text = std::fs::read_to_string(dir.join(format!("{stem}.json")))?;
        let meta: QCMapMeta = serde_json::from_str(&text)?;
        let secular = Complex64::new(meta.secular_re, meta.secular_im);
        // ∂_z̄ψ = ∂_z̄(displacement − sec·z̄) + sec, computed as the exact
        // Fourier multiplier πiζ on the periodic part.
        let g = displacement.grid;
        let n = g.n;
        let side = n as f64 * g.spacing;
        let mut bins: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let (ix, iy) = (i % n, i / n);
                let (x, y) = g.point(ix, iy);
                displacement.values[i] - secular * Complex64::new(x, -y)
            })
            .collect();
        let fft = Fft2::new(n);
        fft.forward(&mut bins);
        for iy in 0..n {
            for ix in 0..n {
                let kx = Fft2::freq_of(n, ix) as f64;
                let ky = Fft2::freq_of(n, iy) as f64;
                let zeta = Complex64::new(kx / side, ky / side);
                bins[iy * n + ix] *= Complex64::new(0.0, PI) * zeta;
            }
        }
        fft.inverse(&mut bins);
        for v in bins.iter_mut() {
            *v += secular;
        }
        let mut dzbar_psi = CField::zeros(g);
        dzbar_psi.values = bins;
        Ok(QCMap {
            displacement,
            dz_psi,
            dzbar_psi,
            secular,
            k_dilatation: meta.k_dilatation,
            beltrami_residual: meta.beltrami_residual,
        })
    }
}

/// Beurling transform on the n×n periodic cell: the Fourier multiplier
/// ζ̄/ζ (zero on the mean mode). An L² isometry on mean-zero data.
pub fn beurling(n: usize, data: &[Complex64]) -> Vec<Complex64> {
    let fft = Fft2::new(n);
    let mut bins = data.to_vec();
    fft.forward(&mut bins);
    apply_beurling_multiplier(n, &mut bins);
    fft.inverse(&mut bins);
    bins
}

fn apply_beurling_multiplier(n: usize, bins: &mut [Complex64]) {
    for iy in 0..n {
        for ix in 0..n {
            let kx = Fft2::freq_of(n, ix) as f64;
            let ky = Fft2::freq_of(n, iy) as f64;
            if kx == 0.0 && ky == 0.0 {
                bins[iy * n + ix] = Complex64::new(0.0, 0.0);
            } else {
                let kappa = Complex64::new(kx, ky);
                bins[iy * n + ix] *= kappa.conj() / kappa;
            }
        }
    }
}

fn norm2c(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Solve ∂_z̄ψ = μ∂_zψ on the periodic cell by the contracting fixed point
/// g ← μS(g) + μ for g = ∂_z̄(ψ − z), then reconstruct the displacement
/// spectrally and normalize ψ(0) = 0.
pub fn solve_beltrami(mu: &BeltramiField, tol: f64, mode: BeltramiMode) -> Result<QCMap> {
    let g = mu.mu.grid;
    if !g.periodic {
        return Err(Error::Config(
            "Beltrami solves run on a periodic cell; embed the coefficient first".into(),
        ));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::Config(format!("bad Beltrami tolerance {tol}")));
    }
    if !(mu.sup_mu <= 0.9) {
        return Err(Error::MuNotContractive(mu.sup_mu));
    }
    let n = g.n;
    let nn = n * n;
    let side = n as f64 * g.spacing;
    if mode == BeltramiMode::CompactSupport {
        let quarter = side / 4.0;
        for iy in 0..n {
            for ix in 0..n {
                let (x, y) = g.point(ix, iy);
                if x.abs().max(y.abs()) >= quarter && mu.mu.values[iy * n + ix].norm() != 0.0 {
                    return Err(Error::SupportTouchesBoundary);
                }
            }
        }
    }

    let fft = Fft2::new(n);
    let apply_s = |input: &[Complex64], out: &mut Vec<Complex64>| {
        out.clear();
        out.extend_from_slice(input);
        fft.forward(out);
        apply_beurling_multiplier(n, out);
        fft.inverse(out);
    };

    let rate = mu.sup_mu.min(0.95).max(1e-3);
    let max_iter = ((tol.ln() / rate.ln()).ceil().max(0.0) as usize + 20).min(500);
    let denom_est = (nn as f64).sqrt();
    let muv = &mu.mu.values;
    let mut gcur: Vec<Complex64> = muv.clone();
    let mut sg: Vec<Complex64> = Vec::with_capacity(nn);
    let mut iters = 0usize;
    let mut residual;
    loop {
        apply_s(&gcur, &mut sg);
        // Residual of the current iterate before stepping: g − μ(1 + Sg).
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 0..nn {
            let next = muv[i] * sg[i] + muv[i];
            num += (gcur[i] - next).norm_sqr();
            den += (Complex64::new(1.0, 0.0) + sg[i]).norm_sqr();
        }
        let den = den.sqrt().max(1e-300);
        residual = num.sqrt() / den;
        if residual <= tol {
            break;
        }
        if iters >= max_iter {
            return Err(Error::NoConvergence {
                method: "beltrami fixed point",
                iters,
                residual,
                wanted: tol,
            });
        }
        for i in 0..nn {
            gcur[i] = muv[i] * sg[i] + muv[i];
        }
        iters += 1;
        // Cheap contraction bound: skip the residual transform while the
        // geometric tail is still far above tol.
        let _ = denom_est;
    }

    // gcur is converged; sg = S(gcur) is already in hand.
    let mut dz = CField::zeros(g);
    for i in 0..nn {
        dz.values[i] = Complex64::new(1.0, 0.0) + sg[i];
    }
    let mut dzbar = CField::zeros(g);
    dzbar.values.copy_from_slice(&gcur);

    // Displacement: ρ̂(ζ≠0) = ĝ/(πiζ); the mean of g rides on sec·z̄.
    let mut bins = gcur.clone();
    fft.forward(&mut bins);
    let secular = bins[0] / nn as f64;
    for iy in 0..n {
        for ix in 0..n {
            if ix == 0 && iy == 0 {
                bins[0] = Complex64::new(0.0, 0.0);
                continue;
            }
            let kx = Fft2::freq_of(n, ix) as f64;
            let ky = Fft2::freq_of(n, iy) as f64;
            let zeta = Complex64::new(kx / side, ky / side);
            bins[iy * n + ix] /= Complex64::new(0.0, PI) * zeta;
        }
    }
    fft.inverse(&mut bins);
    let mut disp = CField::zeros(g);
    for i in 0..nn {
        let (ix, iy) = (i % n, i / n);
        let (x, y) = g.point(ix, iy);
        disp.values[i] = bins[i] + secular * Complex64::new(x, -y);
    }
    // Normalize ψ(0) = 0 exactly by subtracting the displacement at the
    // node nearest the origin (our cells always carry a node at 0).
    let (ox, oy) = g
        .nearest_node(0.0, 0.0)
        .expect("periodic grid always resolves a nearest node");
    let shift = disp.values[g.idx(ox, oy)];
    for v in disp.values.iter_mut() {
        *v -= shift;
    }

    let sup = mu.sup_mu;
    Ok(QCMap {
        displacement: disp,
        dz_psi: dz,
        dzbar_psi: dzbar,
        secular,
        k_dilatation: (1.0 + sup) / (1.0 - sup),
        beltrami_residual: residual,
    })
}

/// C_p = (π²/4)/((p/(p−1))^{2/p} − 1), the operator-norm surrogate used in
/// the Ahlfors-type bound; grows like p²·π²/8 for large p.
pub fn cp_constant(p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::POutOfRange(p));
    }
    // (p/(p−1))^{2/p} − 1 = expm1((2/p)·ln(p/(p−1))), with ln(p/(p−1)) =
    // −ln1p(−1/p) kept accurate for large p.
    let log_ratio = -(-1.0 / p).ln_1p();
    let denom = ((2.0 / p) * log_ratio).exp_m1();
    Ok(PI * PI / 4.0 / denom)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Check ‖∂_zψ − 1‖_{L^{2p}} ≤ C_{2p}·‖μ‖_{L^{2p}}/(1 − C_{2p}·sup|μ|) by
/// direct quadrature on the cell.
pub fn ahlfors_norm_check(map: &QCMap, mu: &BeltramiField, p: f64) -> Result<NormReport> {
    map.grid().check_same(&mu.mu.grid)?;
    let c2p = cp_constant(2.0 * p)?;
    let cond = c2p * mu.sup_mu;
    if !(cond < 1.0) {
        return Err(Error::ConditionViolated(cond));
    }
    let g = map.grid();
    let s2 = g.spacing * g.spacing;
    let e = 2.0 * p;
    let lhs = (s2
        * map
            .dz_psi
            .values
            .iter()
            .map(|v| (v - Complex64::new(1.0, 0.0)).norm().powf(e))
            .sum::<f64>())
    .powf(1.0 / e);
    let mu_2p = (s2 * mu.mu.values.iter().map(|v| v.norm().powf(e)).sum::<f64>()).powf(1.0 / e);
    let rhs = c2p * mu_2p / (1.0 - cond);
    let margin = if lhs == 0.0 { f64::INFINITY } else { rhs / lhs };
    Ok(NormReport { lhs, rhs, margin, pass: lhs <= rhs })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MoriReport {
    pub samples: usize,
    pub violations: usize,
    /// Smallest ratio by which any checked bound held (≥ 1 means all hold).
    pub worst_margin: f64,
}

/// Sample pairs in B(0, r0) and test the distance-distortion bounds for a
/// K-quasiconformal map: (1/16)(d/r0)^K ≤ |Δψ|/r0 ≤ 16(d/r0)^{1/K}, plus,
/// for pairs separated by at least `len_scale` (when given), the absolute
/// two-sided factor-32 bounds (1/32)·d ≤ |Δψ| ≤ 32·d.
pub fn mori_check(
    map: &QCMap,
    r0: f64,
    samples: usize,
    seed: u64,
    len_scale: Option<f64>,
) -> MoriReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_ball = || loop {
        let x = rng.gen_range(-r0..r0);
        let y = rng.gen_range(-r0..r0);
        if x.hypot(y) < r0 {
            return Complex64::new(x, y);
        }
    };
    let k = map.k_dilatation;
    let mut violations = 0usize;
    let mut worst = f64::INFINITY;
    let mut done = 0usize;
    while done < samples {
        let z1 = in_ball();
        let z2 = in_ball();
        let d = (z1 - z2).norm();
        if d < 1e-12 * r0 {
            continue;
        }
        done += 1;
        let di = (map.eval(z1) - map.eval(z2)).norm();
        let lower = (d / r0).powf(k) / 16.0;
        let upper = 16.0 * (d / r0).powf(1.0 / k);
        let mut margins = vec![(di / r0) / lower, upper / (di / r0)];
        if let Some(ls) = len_scale {
            if d >= ls && d <= 2.0 * r0 {
                margins.push(di / (d / 32.0));
                margins.push(32.0 * d / di);
            }
        }
        for m in margins {
            if m < 1.0 {
                violations += 1;
            }
            worst = worst.min(m);
        }
    }
    MoriReport { samples: done, violations, worst_margin: worst }
}

/// Pointwise Jacobian |∂_zψ|² − |∂_z̄ψ|² on the cell.
pub fn jacobian(map: &QCMap) -> Field {
    let g = map.grid();
    let mut out = Field::zeros(g);
    for i in 0..g.len() {
        out.values[i] = map.dz_psi.values[i].norm_sqr() - map.dzbar_psi.values[i].norm_sqr();
    }
    out
}

/// Invert ψ at the point w by damped Newton on the interpolated map, with a
/// coarse grid scan as fallback. Returns z with |ψ(z) − w| ≤ tol.
pub fn invert_map(map: &QCMap, w: Complex64, tol: f64) -> Result<Complex64> {
    let newton = |start: Complex64| -> Option<Complex64> {
        let mut z = start;
        let mut fz = map.eval(z) - w;
        for _ in 0..60 {
            if fz.norm() <= tol {
                return Some(z);
            }
            let a = map.eval_dz(z);
            let b = map.eval_dzbar(z);
            let det = a.norm_sqr() - b.norm_sqr();
            if det.abs() < 1e-300 {
                return None;
            }
            let r = -fz;
            let delta = (a.conj() * r - b * r.conj()) / det;
            let mut lambda = 1.0f64;
            loop {
                let cand = z + lambda * delta;
                let fc = map.eval(cand) - w;
                if fc.norm() < fz.norm() {
                    z = cand;
                    fz = fc;
                    break;
                }
                lambda *= 0.5;
                if lambda < 1.0 / 1024.0 {
                    return None;
                }
            }
        }
        if fz.norm() <= tol {
            Some(z)
        } else {
            None
        }
    };
    if let Some(z) = newton(w) {
        return Ok(z);
    }
    // Grid fallback: coarse scan of the central half of the cell for the
    // best starting point, then Newton again.
    let g = map.grid();
    let n = g.n;
    let mut best = (f64::INFINITY, Complex64::new(0.0, 0.0));
    let stride = (n / 128).max(1);
    for iy in (n / 4..3 * n / 4).step_by(stride) {
        for ix in (n / 4..3 * n / 4).step_by(stride) {
            let (x, y) = g.point(ix, iy);
            let z = Complex64::new(x, y);
            let dist = (map.eval(z) - w).norm();
            if dist < best.0 {
                best = (dist, z);
            }
        }
    }
    newton(best.1).ok_or(Error::InversionFailed(w.re, w.im))
}

/// Resample F = f∘ψ⁻¹ on f's own grid, mask out the images of the holes
/// (each excluded within `collar` of the mapped center) and everything whose
/// preimage leaves f's mask, and return ‖Δ_h F‖₂ / ‖F‖_{H¹} on the surviving
/// region. The target window is the source window re-centered, so periodic
/// source grids stay periodic in the target.
pub fn harmonic_residual(
    f: &Field,
    map: &QCMap,
    holes: &[Ball],
    collar: f64,
) -> Result<f64> {
    let g = f.grid;
    let n = g.n;
    let side = n as f64 * g.spacing;
    let half = side / 2.0;
    // Source coordinates → centered coordinates (identity on disk charts,
    // shift of the upper half-period on the torus).
    let center_coord = |x: f64, o: f64| -> f64 {
        if g.periodic {
            let rel = x - o;
            if rel >= half {
                rel - side
            } else {
                rel
            }
        } else {
            x
        }
    };
    let hole_images: Vec<Complex64> = holes
        .iter()
        .map(|b| {
            let zc = Complex64::new(
                center_coord(b.center.0, g.origin.0),
                center_coord(b.center.1, g.origin.1),
            );
            map.eval(zc)
        })
        .collect();

    let itol = 1e-10 * side;
    let mut valid = Mask::empty(g);
    let mut fvals = vec![0.0f64; g.len()];
    for iy in 0..n {
        for ix in 0..n {
            let (x, y) = g.point(ix, iy);
            let w = Complex64::new(center_coord(x, g.origin.0), center_coord(y, g.origin.1));
            if hole_images.iter().any(|hi| (w - hi).norm() <= collar) {
                continue;
            }
            let Ok(z) = invert_map(map, w, itol) else { continue };
            // Undo the centering shift for the source-grid lookup; periodic
            // interpolation wraps raw coordinates on its own.
            let Some(val) = interp_real_masked(f, z.re, z.im) else { continue };
            let i = g.idx(ix, iy);
            valid.bits[i] = true;
            fvals[i] = val;
        }
    }
    let eval = valid.erode();
    if eval.is_vacant() {
        return Err(Error::EmptyMask(" (harmonic evaluation region after collar)"));
    }
    let s2 = g.spacing * g.spacing;
    let mut acc = 0.0f64;
    for iy in 0..n {
        for ix in 0..n {
            if !eval.bits[g.idx(ix, iy)] {
                continue;
            }
            let mut lap = -4.0 * fvals[g.idx(ix, iy)];
            for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
                let (jx, jy) = g.step(ix, iy, dx, dy).expect("eroded mask has neighbors");
                lap += fvals[g.idx(jx, jy)];
            }
            lap /= s2;
            acc += lap * lap;
        }
    }
    let resampled = Field { grid: g, values: fvals, mask: valid.clone() };
    let l2 = resampled.l2_mass(&valid)?;
    let h1 = l2 + resampled.gradient_energy_on(1.0, &valid)?;
    if h1 == 0.0 {
        return Err(Error::EmptyMask(" (resampled field vanishes)"));
    }
    Ok((s2 * acc).sqrt() / h1.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrector::{form_ratio, solve_corrector};
    use crate::discretize::assemble_operator;
    use crate::eigensolve::eigenpairs_near;
    use crate::field::Grid;
    use crate::geometry::{make_chart, ChartKind, ObservationRegion};
    use crate::perforate::{build_layout, EpsilonSchedule};
    use tempfile::tempdir;

    fn centered_cell(n: usize, side: f64) -> Grid {
        Grid::new(n, side / n as f64, (-side / 2.0, -side / 2.0), true).unwrap()
    }

    fn unit_solution(g: Grid) -> CorrectorSolution {
        CorrectorSolution {
            phi: Field::constant(g, 1.0),
            sup_dev: 0.0,
            poincare_bound_used: 0.0,
            smallness: 0.0,
            omega: Mask::full(g),
        }
    }

    /// C^∞ bump supported in |z| < r, amplitude `amp`.
    fn smooth_bump(g: Grid, r: f64, amp: Complex64) -> BeltramiField {
        let mu = CField::from_fn(g, |x, y| {
            let q = (x * x + y * y) / (r * r);
            if q >= 1.0 {
                Complex64::new(0.0, 0.0)
            } else {
                amp * (1.0 - 1.0 / (1.0 - q)).exp()
            }
        });
        BeltramiField::from_cfield(mu)
    }

    #[test]
    fn unit_multiplier_gives_zero_coefficient() {
        let g = Grid::new(32, 1.0 / 32.0, (-0.5, -0.5), false).unwrap();
        let f = Field::from_fn(g, |x, y| x + 2.0 * y);
        let sol = unit_solution(g);
        let mu = beltrami_coefficient(&f, &sol, &Mask::full(g)).unwrap();
        assert_eq!(mu.sup_mu, 0.0, "φ ≡ 1 must yield μ ≡ 0");
        assert!(mu.mu.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn constant_multiplier_gives_half_modulus() {
        let g = Grid::new(32, 1.0 / 32.0, (-0.5, -0.5), false).unwrap();
        let f = Field::from_fn(g, |x, y| x + 2.0 * y);
        let phi0 = (1.0f64 / 3.0).sqrt();
        let sol = CorrectorSolution {
            phi: Field::constant(g, phi0),
            sup_dev: 1.0 - phi0,
            poincare_bound_used: 0.0,
            smallness: 0.0,
            omega: Mask::full(g),
        };
        let mask = Mask::from_fn(g, |x, y| x.abs() < 0.4 && y.abs() < 0.4);
        let mu = beltrami_coefficient(&f, &sol, &mask).unwrap();
        assert!(
            (mu.sup_mu - 0.5).abs() < 1e-12,
            "φ² = 1/3 must give |μ| = 1/2, got {}",
            mu.sup_mu
        );
        for iy in 0..g.n {
            for ix in 0..g.n {
                let i = g.idx(ix, iy);
                let m = mu.mu.values[i].norm();
                if mask.bits[i] {
                    assert!((m - 0.5).abs() < 1e-12, "interior modulus {m}");
                } else {
                    assert_eq!(m, 0.0, "μ must vanish outside the mask");
                }
            }
        }
    }

    #[test]
    fn degenerate_gradient_is_zeroed() {
        let g = Grid::new(16, 1.0 / 16.0, (-0.5, -0.5), false).unwrap();
        let f = Field::constant(g, 3.0);
        let sol = CorrectorSolution {
            phi: Field::constant(g, 0.8),
            sup_dev: 0.2,
            poincare_bound_used: 0.0,
            smallness: 0.1,
            omega: Mask::full(g),
        };
        let mu = beltrami_coefficient(&f, &sol, &Mask::full(g)).unwrap();
        assert_eq!(mu.sup_mu, 0.0, "vanishing gradient must give μ ≡ 0");
    }

    #[test]
    fn zero_coefficient_solves_to_the_identity() {
        let g = centered_cell(64, 4.0);
        let mu = BeltramiField::constant(g, Complex64::new(0.0, 0.0));
        let map = solve_beltrami(&mu, 1e-12, BeltramiMode::PeriodicTest).unwrap();
        let worst = map
            .displacement
            .values
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-10, "identity displacement came out {worst:.3e}");
        assert_eq!(map.beltrami_residual, 0.0);
        assert_eq!(map.k_dilatation, 1.0);
        // ψ(0) = 0 exactly.
        let z0 = map.eval(Complex64::new(0.0, 0.0));
        assert_eq!(z0, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn constant_coefficient_matches_the_linear_map() {
        for k in [0.1, 0.3] {
            let g = centered_cell(64, 4.0);
            let mu = BeltramiField::constant(g, Complex64::new(k, 0.0));
            let map = solve_beltrami(&mu, 1e-12, BeltramiMode::PeriodicTest).unwrap();
            let mut worst = 0.0f64;
            for iy in 0..g.n {
                for ix in 0..g.n {
                    let (x, y) = g.point(ix, iy);
                    let want = k * Complex64::new(x, -y); // k·z̄
                    let got = map.displacement.values[g.idx(ix, iy)];
                    worst = worst.max((got - want).norm());
                }
            }
            assert!(
                worst <= 1e-8,
                "k = {k}: ψ − (z + k·z̄) as large as {worst:.3e}"
            );
            assert!((map.secular.re - k).abs() <= 1e-12);
            let kd = (1.0 + k) / (1.0 - k);
            assert!((map.k_dilatation - kd).abs() < 1e-12);
        }
    }

    #[test]
    fn compact_support_mode_enforces_the_margin() {
        let g = centered_cell(64, 4.0);
        // Support radius 1.2 exceeds the central-half margin (side/4 = 1).
        let mu = smooth_bump(g, 1.2, Complex64::new(0.3, 0.0));
        match solve_beltrami(&mu, 1e-8, BeltramiMode::CompactSupport) {
            Err(Error::SupportTouchesBoundary) => {}
            other => panic!("expected support guard, got {other:?}"),
        }
        let ok = smooth_bump(g, 0.9, Complex64::new(0.3, 0.0));
        assert!(solve_beltrami(&ok, 1e-8, BeltramiMode::CompactSupport).is_ok());
    }

    #[test]
    fn oversized_mu_is_rejected() {
        let g = centered_cell(16, 4.0);
        let mu = BeltramiField::constant(g, Complex64::new(0.95, 0.0));
        assert!(matches!(
            solve_beltrami(&mu, 1e-8, BeltramiMode::PeriodicTest),
            Err(Error::MuNotContractive(_))
        ));
    }

    #[test]
    fn smooth_bump_two_grid_agreement() {
        // The bump is C^∞, so the cell solves converge spectrally: the gap
        // between consecutive grid levels must shrink fast.
        let tol = 1e-10;
        let side = 4.0;
        let grids = [96usize, 192, 384];
        let maps: Vec<QCMap> = grids
            .iter()
            .map(|&n| {
                let g = centered_cell(n, side);
                let mu = smooth_bump(g, 0.9, Complex64::new(0.27, 0.09));
                let map = solve_beltrami(&mu, tol, BeltramiMode::CompactSupport).unwrap();
                assert!(map.beltrami_residual <= tol);
                map
            })
            .collect();
        let gap = |coarse: &QCMap, fine: &QCMap| -> f64 {
            let nc = coarse.grid().n;
            let nf = fine.grid().n;
            let mut worst = 0.0f64;
            for iy in 0..nc {
                for ix in 0..nc {
                    let a = coarse.displacement.values[iy * nc + ix];
                    let b = fine.displacement.values[(2 * iy) * nf + 2 * ix];
                    worst = worst.max((a - b).norm());
                }
            }
            worst
        };
        let d1 = gap(&maps[0], &maps[1]);
        let d2 = gap(&maps[1], &maps[2]);
        assert!(d1 <= 1e-4, "coarse-level truncation gap {d1:.3e} too large");
        assert!(
            d2 <= d1 / 2.0,
            "refinement gaps {d1:.3e} → {d2:.3e} are not converging"
        );
    }

    #[test]
    fn beurling_multiplier_and_isometry() {
        let n = 32;
        let g = centered_cell(n, 2.0);
        // 20 fixed nonzero modes.
        let modes: Vec<(i64, i64)> = vec![
            (1, 0), (0, 1), (1, 1), (2, 1), (1, 2), (3, 0), (0, 3), (2, 2),
            (4, 1), (1, 4), (3, 2), (2, 3), (5, 0), (0, 5), (4, 3), (3, 4),
            (6, 1), (1, 6), (5, 4), (4, 5),
        ];
        for (k1, k2) in modes {
            let data: Vec<Complex64> = (0..n * n)
                .map(|i| {
                    let (ix, iy) = (i % n, i / n);
                    let ph = 2.0 * PI * (k1 as f64 * ix as f64 + k2 as f64 * iy as f64)
                        / n as f64;
                    Complex64::new(ph.cos(), ph.sin())
                })
                .collect();
            let kappa = Complex64::new(k1 as f64, k2 as f64);
            let want_factor = kappa.conj() / kappa;
            let got = beurling(n, &data);
            let mut worst = 0.0f64;
            for i in 0..n * n {
                worst = worst.max((got[i] - want_factor * data[i]).norm());
            }
            assert!(
                worst <= 1e-12,
                "mode ({k1},{k2}): multiplier error {worst:.3e}"
            );
        }
        // Isometry on mean-zero data.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut data: Vec<Complex64> = (0..n * n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mean = data.iter().sum::<Complex64>() / (n * n) as f64;
        for v in data.iter_mut() {
            *v -= mean;
        }
        let out = beurling(n, &data);
        let (a, b) = (norm2c(&data), norm2c(&out));
        assert!(
            (a - b).abs() <= 1e-10 * a,
            "Beurling is not isometric: {a} vs {b}"
        );
        let _ = g;
    }

    #[test]
    fn cp_constant_closed_forms() {
        assert!((cp_constant(2.0).unwrap() - PI * PI / 4.0).abs() < 1e-12);
        // Large-p limit C_p/p² → π²/8.
        let p = 1e6;
        let ratio = cp_constant(p).unwrap() / (p * p);
        assert!(
            (ratio - PI * PI / 8.0).abs() < 1e-4,
            "C_p/p² at p = 10⁶ came out {ratio}"
        );
        // The growth ratio decreases toward its limit 4.
        let c4 = cp_constant(4.0).unwrap();
        let c8 = cp_constant(8.0).unwrap();
        let c16 = cp_constant(16.0).unwrap();
        assert!(c8 / c4 >= c16 / c8, "doubling ratios must decrease");
        assert!(c16 / c8 >= 4.0, "doubling ratio stays above the limit 4");
        assert!(matches!(cp_constant(1.0), Err(Error::POutOfRange(_))));
        assert!(matches!(cp_constant(0.3), Err(Error::POutOfRange(_))));
    }

    #[test]
    fn ahlfors_check_trivial_and_bump() {
        let g = centered_cell(64, 4.0);
        let zero = BeltramiField::constant(g, Complex64::new(0.0, 0.0));
        let map = solve_beltrami(&zero, 1e-12, BeltramiMode::PeriodicTest).unwrap();
        let rep = ahlfors_norm_check(&map, &zero, 2.0).unwrap();
        assert!(rep.pass && rep.lhs == 0.0 && rep.rhs == 0.0);

        let bump = smooth_bump(g, 0.9, Complex64::new(0.01, 0.0));
        let map = solve_beltrami(&bump, 1e-12, BeltramiMode::CompactSupport).unwrap();
        let rep = ahlfors_norm_check(&map, &bump, 2.0).unwrap();
        assert!(
            rep.pass && rep.margin >= 1.0,
            "bump check lhs {:.3e} rhs {:.3e}",
            rep.lhs,
            rep.rhs
        );

        // C₈·0.2 > 1: precondition violated at p = 4.
        let fat = smooth_bump(g, 0.9, Complex64::new(0.2, 0.0));
        let map = solve_beltrami(&fat, 1e-10, BeltramiMode::CompactSupport).unwrap();
        assert!(matches!(
            ahlfors_norm_check(&map, &fat, 4.0),
            Err(Error::ConditionViolated(_))
        ));
    }

    #[test]
    fn mori_margins_for_identity_and_linear_maps() {
        let g = centered_cell(64, 4.0);
        let zero = BeltramiField::constant(g, Complex64::new(0.0, 0.0));
        let map = solve_beltrami(&zero, 1e-12, BeltramiMode::PeriodicTest).unwrap();
        let rep = mori_check(&map, 0.5, 500, 11, None);
        assert_eq!(rep.violations, 0);
        assert!(
            (rep.worst_margin - 16.0).abs() <= 1e-9,
            "identity margin should be exactly 16, got {}",
            rep.worst_margin
        );

        let lin = BeltramiField::constant(g, Complex64::new(0.01, 0.0));
        let map = solve_beltrami(&lin, 1e-12, BeltramiMode::PeriodicTest).unwrap();
        let rep = mori_check(&map, 0.5, 10_000, 12, Some(0.02));
        assert_eq!(rep.violations, 0, "ψ = z + 0.01z̄ violated a bound");
        assert!(rep.worst_margin > 1.0);
    }

    #[test]
    fn jacobian_of_linear_maps() {
        let g = centered_cell(32, 4.0);
        let zero = BeltramiField::constant(g, Complex64::new(0.0, 0.0));
        let map = solve_beltrami(&zero, 1e-12, BeltramiMode::PeriodicTest).unwrap();
        let j = jacobian(&map);
        assert!(j.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let k = 0.3;
        let lin = BeltramiField::constant(g, Complex64::new(k, 0.0));
        let map = solve_beltrami(&lin, 1e-12, BeltramiMode::PeriodicTest).unwrap();
        let j = jacobian(&map);
        assert!(
            j.values.iter().all(|&v| (v - (1.0 - k * k)).abs() < 1e-10),
            "constant-μ jacobian should be 1 − k²"
        );
    }

    #[test]
    fn jacobian_identity_and_positivity_for_a_bump() {
        let g = centered_cell(128, 4.0);
        let bump = smooth_bump(g, 0.9, Complex64::new(0.3, 0.0));
        let tol = 1e-10;
        let map = solve_beltrami(&bump, tol, BeltramiMode::CompactSupport).unwrap();
        let j = jacobian(&map);
        let s2 = g.spacing * g.spacing;
        let mut l1 = 0.0f64;
        let mut dz2 = 0.0f64;
        for i in 0..g.len() {
            let want =
                (1.0 - bump.mu.values[i].norm_sqr()) * map.dz_psi.values[i].norm_sqr();
            l1 += (j.values[i] - want).abs() * s2;
            dz2 += map.dz_psi.values[i].norm_sqr() * s2;
        }
        assert!(
            l1 <= 10.0 * map.beltrami_residual.max(1e-14) * dz2,
            "jacobian identity off by {l1:.3e} in L¹ (allowance {:.3e})",
            10.0 * map.beltrami_residual.max(1e-14) * dz2
        );
        let positive = j.values.iter().filter(|&&v| v > 0.0).count();
        assert!(
            positive as f64 >= 0.999 * g.len() as f64,
            "jacobian positive at only {positive}/{} samples",
            g.len()
        );
    }

    #[test]
    fn inversion_identities() {
        let g = centered_cell(64, 4.0);
        let zero = BeltramiField::constant(g, Complex64::new(0.0, 0.0));
        let map = solve_beltrami(&zero, 1e-12, BeltramiMode::PeriodicTest).unwrap();
        let w = Complex64::new(0.3, -0.2);
        let z = invert_map(&map, w, 1e-12).unwrap();
        assert!((z - w).norm() <= 1e-12, "identity inverse moved the point");

        let k = 0.1;
        let lin = BeltramiField::constant(g, Complex64::new(k, 0.0));
        let map = solve_beltrami(&lin, 1e-12, BeltramiMode::PeriodicTest).unwrap();
        let tol = 1e-10;
        let w = Complex64::new(0.25, 0.4);
        let z = invert_map(&map, w, tol).unwrap();
        let closed = (w - k * w.conj()) / (1.0 - k * k);
        assert!(
            (z - closed).norm() <= 20.0 * tol,
            "linear inverse off by {:.3e}",
            (z - closed).norm()
        );

        // Round trip on random targets.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let w = Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            let z = invert_map(&map, w, tol).unwrap();
            assert!(
                (map.eval(z) - w).norm() <= tol,
                "round trip failed at {w}"
            );
        }
    }

    #[test]
    fn harmonic_residual_of_a_quadratic_under_the_identity() {
        let n = 48;
        let g = Grid::new(n, 1.0 / n as f64, (-0.5, -0.5), false).unwrap();
        let f = Field::from_fn(g, |x, y| x * x - y * y);
        let cell = centered_cell(128, 4.0);
        let zero = BeltramiField::constant(cell, Complex64::new(0.0, 0.0));
        let map = solve_beltrami(&zero, 1e-12, BeltramiMode::PeriodicTest).unwrap();
        let r = harmonic_residual(&f, &map, &[], 0.0).unwrap();
        assert!(
            r <= 1e-10,
            "identity resampling of x²−y² should be stencil-exact, got {r:.3e}"
        );

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noisy = Field::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
        let r = harmonic_residual(&noisy, &map, &[], 0.0).unwrap();
        assert!(r > 1.0, "random data should not look harmonic, got {r}");
    }

    #[test]
    fn qcmap_save_load_round_trip() {
        let g = centered_cell(64, 4.0);
        let bump = smooth_bump(g, 0.9, Complex64::new(0.2, 0.05));
        let map = solve_beltrami(&bump, 1e-11, BeltramiMode::CompactSupport).unwrap();
        let dir = tempdir().unwrap();
        map.save(dir.path(), "qc").unwrap();
        let back = QCMap::load(dir.path(), "qc").unwrap();
        assert_eq!(back.displacement.values, map.displacement.values);
        assert_eq!(back.dz_psi.values, map.dz_psi.values);
        assert_eq!(back.k_dilatation, map.k_dilatation);
        let worst = back
            .dzbar_psi
            .values
            .iter()
            .zip(&map.dzbar_psi.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(
            worst <= 1e-12,
            "spectral ∂_z̄ reconstruction drifted by {worst:.3e}"
        );
    }

    #[test]
    fn pipeline_mu_is_order_epsilon_squared() {
        // Matched resolution (hε/spacing ≥ 8 at both levels, as in the
        // pipeline policy) so the discrete hole spectrum tracks its
        // continuum scaling; the claim is an upper envelope with an
        // absolute constant, sup|μ| ≤ K·ε², not two-sided drift.
        let chart = make_chart(
            ChartKind::TorusCell,
            0.5,
            ObservationRegion::InteriorBall { r: 0.2 },
        )
        .unwrap();
        let sched = EpsilonSchedule::new(0.4, 0.5).unwrap();
        let mut ratios = Vec::new();
        for (h, n) in [(0.2f64, 104usize), (0.1, 328)] {
            let g = Grid::for_chart(&chart, n).unwrap();
            let u = Field::constant(g, 1.0);
            let layout = build_layout(&u, &sched, h, 3.0).unwrap();
            assert!(
                layout.h_epsilon / g.spacing >= 8.0,
                "test setup must resolve the holes (hε/s = {})",
                layout.h_epsilon / g.spacing
            );
            let v = Field::from_fn(g, |x, y| {
                0.015 * ((2.0 * PI * x).cos() * (2.0 * PI * y).cos()
                    + 0.5 * (4.0 * PI * y).sin())
            });
            let sol = solve_corrector(&layout, &v, 0.0, h).unwrap();
            let f = Field::from_fn(g, |x, y| {
                (2.0 * PI * x).sin() + 0.5 * (2.0 * PI * y).cos() + 2.0
            });
            let mu = beltrami_coefficient(&f, &sol, &layout.omega_tilde).unwrap();
            // |μ| ≤ |1−φ²|/(1+φ²) ≤ 1.2·sup_dev for φ ∈ [1/2, 3/2].
            assert!(
                mu.sup_mu <= 1.2 * sol.sup_dev + 1e-15,
                "h = {h}: sup|μ| = {} above the multiplier bound {}",
                mu.sup_mu,
                1.2 * sol.sup_dev
            );
            ratios.push(mu.sup_mu / (layout.epsilon * layout.epsilon));
        }
        assert!(
            ratios.iter().all(|&r| r <= 2.0),
            "sup|μ|/ε² exceeded its absolute envelope: {ratios:?}"
        );
        assert!(
            ratios[1] >= ratios[0] / 5.0,
            "sup|μ| collapsed faster than ε² ({ratios:?}): wrong power"
        );
    }

    #[test]
    fn pipeline_harmonic_residual_shrinks_under_refinement() {
        let chart = make_chart(
            ChartKind::TorusCell,
            0.5,
            ObservationRegion::InteriorBall { r: 0.2 },
        )
        .unwrap();
        let sched = EpsilonSchedule::new(0.1, 0.5).unwrap();
        let h = 0.3;
        let mut residuals = Vec::new();
        for n in [48usize, 96] {
            let g = Grid::for_chart(&chart, n).unwrap();
            let v = Field::from_fn(g, |x, y| {
                0.1 * ((2.0 * PI * x).cos() * (2.0 * PI * y).cos()
                    + 0.5 * (4.0 * PI * y).sin()
                    + 0.3 * (2.0 * PI * x + 1.0).sin())
            });
            let op = assemble_operator(&chart, &v, 0.0, h, g).unwrap();
            let pair = &eigenpairs_near(&op, 0.0, 1, 1e-10).unwrap()[0];
            let layout = build_layout(&pair.u, &sched, h, 3.0).unwrap();
            let sol = solve_corrector(&layout, &v, pair.lambda, h).unwrap();
            let mut f = form_ratio(&pair.u, &sol).unwrap();
            // Restrict validity to Ω̃ minus the corrector's Dirichlet kink
            // collar so the resampler never straddles it.
            let kink = layout.omega_tilde.minus(&layout.omega).unwrap();
            f.mask = layout.omega_tilde.minus(&kink.dilate()).unwrap();
            let mu = beltrami_coefficient(&f, &sol, &layout.omega_tilde).unwrap();
            let embedded = embed_in_cell(&mu, 4).unwrap();
            let map = solve_beltrami(&embedded, 1e-10, BeltramiMode::CompactSupport).unwrap();
            let r = harmonic_residual(&f, &map, &layout.f1, 2.0 * layout.h_epsilon).unwrap();
            residuals.push(r);
        }
        assert!(
            residuals[0] >= 1.5 * residuals[1],
            "harmonic residual should shrink ≥ ×1.5 under refinement, got {residuals:?}"
        );
    }
}
