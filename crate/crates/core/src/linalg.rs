//! Dense-free linear algebra kernels: banded LU with partial pivoting,
//! preconditioned conjugate gradients, and Lanczos with full
//! reorthogonalization. These are the only solvers the laboratory needs —
//! the shifted operator is solved exactly by the band factorization, and
//! every other system (Poincaré, corrector, harmonic) is positive definite
//! and goes through CG.

use crate::discretize::{Boundary, SparseOperator};
use crate::error::{Error, Result};

/// Memory allowed for one band factorization. A 5-point operator on an n×n
/// periodic grid folds to bandwidth 2n+2, so this bounds the largest grid the
/// direct path accepts (n ≈ 256 periodic, ≈ 384 Dirichlet within 1.6 GB).
pub const BAND_MEMORY_BUDGET_MB: usize = 1600;

// ---- orderings ---------------------------------------------------------

/// Fold a periodic axis: 0, n−1, 1, n−2, … Adjacent-with-wraparound indices
/// land within distance 2 of each other, so the folded 2D ordering keeps the
/// periodic stencil inside bandwidth 2n+2 instead of n².
fn folded_position(i: usize, n: usize) -> usize {
    let half = i.min(n - 1 - i);
    if i == half {
        2 * half
    } else {
        2 * half + 1
    }
}

/// Permutation sending original index to banded position, plus its inverse.
fn ordering(op: &SparseOperator) -> (Vec<u32>, Vec<u32>) {
    let n = op.grid.n;
    let dim = op.dim();
    let mut pos = vec![0u32; dim];
    let mut inv = vec![0u32; dim];
    match op.boundary {
        Boundary::Dirichlet => {
            for i in 0..dim {
                pos[i] = i as u32;
                inv[i] = i as u32;
            }
        }
        Boundary::Periodic => {
            for iy in 0..n {
                for ix in 0..n {
                    let i = op.grid.idx(ix, iy);
                    let p = folded_position(iy, n) * n + folded_position(ix, n);
                    pos[i] = p as u32;
                    inv[p] = i as u32;
                }
            }
        }
    }
    (pos, inv)
}

// ---- banded LU ----------------------------------------------------------

/// LU factorization of P·(A − σI)·Pᵀ with partial pivoting, band storage.
/// Row r keeps a dense window over columns [r−bw, r+2bw]; the extra bw on the
/// right absorbs pivoting fill. Solves replay the recorded swaps and
/// multipliers, then back-substitute through U.
pub struct BandedLu {
    dim: usize,
    bw: usize,
    width: usize,
    /// dim × width, row-major; slot t of row r is column r − bw + t.
    data: Vec<f64>,
    pivot: Vec<u32>,
    pos: Vec<u32>,
    inv: Vec<u32>,
}

impl BandedLu {
    /// Factor A − σ·I. Fails fast if the band storage would blow the memory
    /// budget, or if a pivot collapses (σ hit an eigenvalue).
    pub fn factor(op: &SparseOperator, sigma: f64) -> Result<BandedLu> {
        let dim = op.dim();
        let (pos, inv) = ordering(op);
        let mut bw = 1usize;
        for i in 0..dim {
            for (j, _) in op.row(i) {
                bw = bw.max((pos[i] as i64 - pos[j] as i64).unsigned_abs() as usize);
            }
        }
        let width = 3 * bw + 1;
        let bytes = dim * width * 8;
        if bytes > BAND_MEMORY_BUDGET_MB * 1_000_000 {
            return Err(Error::FactorizationTooLarge {
                dim,
                bw,
                mb: bytes / 1_000_000,
                budget: BAND_MEMORY_BUDGET_MB,
            });
        }
        let mut data = vec![0.0f64; dim * width];
        let mut scale = 0.0f64;
        for i in 0..dim {
            let r = pos[i] as usize;
            for (j, v) in op.row(i) {
                let c = pos[j] as usize;
                let val = if i == j { v - sigma } else { v };
                scale = scale.max(val.abs());
                let t = (c + bw) - r; // c − (r − bw)
                data[r * width + t] = val;
            }
        }
        let mut pivot = vec![0u32; dim];
        // A shift landing exactly on an eigenvalue leaves a dead pivot that
        // floating point renders as roundoff noise, around 1e-13·scale for
        // these stencils. Anything above this is a usable (if small) pivot —
        // shift-invert wants those.
        let tiny = scale * 1e-12;

        for k in 0..dim {
            let last_row = (k + bw).min(dim - 1);
            // Column k lives at slot (k + bw − r) of row r.
            let mut piv = k;
            let mut best = 0.0f64;
            for r in k..=last_row {
                let v = data[r * width + (k + bw - r)].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best <= tiny {
                return Err(Error::FactorizationSingular(k));
            }
            pivot[k] = piv as u32;
            let last_col = (k + 2 * bw).min(dim - 1);
            if piv != k {
                // Swap the active segments (columns k..=last_col) of rows k, piv.
                for c in k..=last_col {
                    let a = k * width + (c + bw - k);
                    let b = piv * width + (c + bw - piv);
                    data.swap(a, b);
                }
            }
            let pivval = data[k * width + bw];
            for r in (k + 1)..=last_row {
                let slot = r * width + (k + bw - r);
                let m = data[slot] / pivval;
                data[slot] = m; // keep the multiplier for solves
                if m != 0.0 {
                    // Row update over the pivot row's U segment.
                    let off_r = r * width + bw - r;
                    let off_k = k * width + bw - k;
                    for c in (k + 1)..=last_col {
                        data[off_r + c] -= m * data[off_k + c];
                    }
                }
            }
        }
        Ok(BandedLu { dim, bw, width, data, pivot, pos, inv })
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Solve (A − σI)x = b. Works in the permuted ordering internally.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim);
        let (dim, bw, width) = (self.dim, self.bw, self.width);
        let mut y = vec![0.0f64; dim];
        for i in 0..dim {
            y[self.pos[i] as usize] = b[i];
        }
        // Forward: replay swaps and eliminations.
        for k in 0..dim {
            let piv = self.pivot[k] as usize;
            if piv != k {
                y.swap(k, piv);
            }
            let yk = y[k];
            if yk != 0.0 {
                let last_row = (k + bw).min(dim - 1);
                for r in (k + 1)..=last_row {
                    let m = self.data[r * width + (k + bw - r)];
                    y[r] -= m * yk;
                }
            }
        }
        // Back-substitution through U (columns up to k + 2bw).
        for k in (0..dim).rev() {
            let last_col = (k + 2 * bw).min(dim - 1);
            let off_k = k * width + bw - k;
            let mut acc = y[k];
            for c in (k + 1)..=last_col {
                acc -= self.data[off_k + c] * y[c];
            }
            y[k] = acc / self.data[k * width + bw];
        }
        let mut x = vec![0.0f64; dim];
        for p in 0..dim {
            x[self.inv[p] as usize] = y[p];
        }
        x
    }
}

// ---- conjugate gradients --------------------------------------------------

/// Preconditioned CG for symmetric positive definite systems given as a
/// matvec closure. Converges to ‖b − Ax‖₂ ≤ tol_rel·‖b‖₂.
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    precond_inv_diag: Option<&[f64]>,
    tol_rel: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let dim = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; dim], 0));
    }
    let mut x = vec![0.0f64; dim];
    let mut r = b.to_vec();
    let mut z = vec![0.0f64; dim];
    let precondition = |r: &[f64], z: &mut [f64]| match precond_inv_diag {
        Some(d) => {
            for i in 0..r.len() {
                z[i] = d[i] * r[i];
            }
        }
        None => z.copy_from_slice(r),
    };
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0f64; dim];
    for it in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NoConvergence {
                method: "cg (matrix not positive definite)",
                iters: it,
                residual: norm2(&r) / bnorm,
                wanted: tol_rel,
            });
        }
        let alpha = rz / pap;
        for i in 0..dim {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = norm2(&r);
        if rn <= tol_rel * bnorm {
            return Ok((x, it + 1));
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..dim {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        method: "cg",
        iters: max_iter,
        residual: norm2(&r) / bnorm,
        wanted: tol_rel,
    })
}

// ---- Lanczos ---------------------------------------------------------------

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for i in 0..y.len() {
        y[i] += alpha * x[i];
    }
}

/// Orthogonalize v against a set of unit vectors (two passes of modified
/// Gram–Schmidt — enough to hold orthogonality at 1e-14 here).
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            axpy(v, -c, q);
        }
    }
}

/// Ritz pairs of a symmetric operator from `steps` Lanczos iterations with
/// full reorthogonalization, deflating against `locked`. Returns pairs
/// (value, vector) with unit vectors, in descending |value| order — callers
/// of the shift-inverted operator want the largest ones.
pub fn lanczos_ritz(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    start: &[f64],
    locked: &[Vec<f64>],
    steps: usize,
) -> Vec<(f64, Vec<f64>)> {
    let dim = start.len();
    let mut q = start.to_vec();
    orthogonalize(&mut q, locked);
    let n0 = norm2(&q);
    if n0 < 1e-13 {
        return Vec::new();
    }
    for v in q.iter_mut() {
        *v /= n0;
    }
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0f64; dim];
    for j in 0..steps {
        apply(&basis[j], &mut w);
        let alpha = dot(&w, &basis[j]);
        alphas.push(alpha);
        axpy(&mut w, -alpha, &basis[j]);
        if j > 0 {
            let beta_prev = betas[j - 1];
            axpy(&mut w, -beta_prev, &basis[j - 1]);
        }
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &basis);
        let beta = norm2(&w);
        if beta < 1e-13 {
            break; // invariant subspace found
        }
        if j + 1 == steps {
            break;
        }
        betas.push(beta);
        let mut next = w.clone();
        for v in next.iter_mut() {
            *v /= beta;
        }
        basis.push(next);
    }
    let m = alphas.len();
    let mut t = nalgebra::DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .partial_cmp(&eig.eigenvalues[a].abs())
            .unwrap()
    });
    let mut out = Vec::with_capacity(m);
    for &k in &order {
        let theta = eig.eigenvalues[k];
        let mut y = vec![0.0f64; dim];
        for (j, base) in basis.iter().enumerate() {
            axpy(&mut y, eig.eigenvectors[(j, k)], base);
        }
        let ny = norm2(&y);
        if ny > 1e-13 {
            for v in y.iter_mut() {
                *v /= ny;
            }
            out.push((theta, y));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble_masked, Boundary};
    use crate::field::{Field, Grid, Mask};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_operator(n: usize, periodic: bool, seed: u64) -> SparseOperator {
        let g = Grid::new(n, 1.0 / n as f64, (0.0, 0.0), periodic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = Field::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
        let boundary = if periodic { Boundary::Periodic } else { Boundary::Dirichlet };
        assemble_masked(g, boundary, &Mask::full(g), &v, 0.4, 0.0).unwrap()
    }

    #[test]
    fn banded_solve_matches_dense_lu() {
        for (periodic, seed) in [(false, 1u64), (true, 2), (true, 3), (false, 4)] {
            let op = random_operator(10, periodic, seed);
            let sigma = 0.37;
            let lu = BandedLu::factor(&op, sigma).unwrap();
            let dim = op.dim();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = lu.solve(&b);
            // Residual check against the sparse operator itself.
            let mut ax = vec![0.0; dim];
            op.apply(&x, &mut ax);
            let mut worst = 0.0f64;
            for i in 0..dim {
                worst = worst.max((ax[i] - sigma * x[i] - b[i]).abs());
            }
            let scale = norm2(&b);
            assert!(
                worst <= 1e-10 * scale.max(1.0),
                "banded LU residual {worst} (periodic={periodic})"
            );

            // Cross-check against nalgebra dense solve.
            let mut dense = op.to_dense();
            for i in 0..dim {
                dense[(i, i)] -= sigma;
            }
            let want = dense
                .lu()
                .solve(&nalgebra::DVector::from_column_slice(&b))
                .expect("dense solvable");
            let mut diff = 0.0f64;
            for i in 0..dim {
                diff = diff.max((x[i] - want[i]).abs());
            }
            assert!(diff <= 1e-8, "banded vs dense mismatch {diff}");
        }
    }

    #[test]
    fn folded_ordering_keeps_periodic_band_tight() {
        let op = random_operator(16, true, 9);
        let lu = BandedLu::factor(&op, 0.1).unwrap();
        assert!(
            lu.bandwidth() <= 2 * 16 + 2,
            "periodic fold should give bandwidth ≤ 2n+2, got {}",
            lu.bandwidth()
        );
    }

    #[test]
    fn singular_shift_is_detected() {
        // A with constant kernel: −Δ periodic, V = 0 ⇒ eigenvalue 0.
        let g = Grid::new(8, 1.0 / 8.0, (0.0, 0.0), true).unwrap();
        let op =
            assemble_masked(g, Boundary::Periodic, &Mask::full(g), &Field::zeros(g), 1.0, 0.0)
                .unwrap();
        match BandedLu::factor(&op, 0.0) {
            Err(Error::FactorizationSingular(_)) => {}
            Err(other) => panic!("expected singular factorization, got {other:?}"),
            Ok(_) => panic!("expected singular factorization, got a factorization"),
        }
    }

    #[test]
    fn cg_solves_dirichlet_laplacian() {
        let g = Grid::new(24, 1.0 / 24.0, (0.0, 0.0), false).unwrap();
        let op =
            assemble_masked(g, Boundary::Dirichlet, &Mask::full(g), &Field::zeros(g), 1.0, 0.0)
                .unwrap();
        let dim = op.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag = op.diagonal();
        let dinv: Vec<f64> = diag.iter().map(|&d| 1.0 / d).collect();
        let (x, iters) = pcg(
            |p, ap| op.apply(p, ap),
            &b,
            Some(&dinv),
            1e-12,
            10_000,
        )
        .unwrap();
        let mut ax = vec![0.0; dim];
        op.apply(&x, &mut ax);
        let mut rn = 0.0;
        for i in 0..dim {
            rn += (ax[i] - b[i]).powi(2);
        }
        assert!(
            rn.sqrt() <= 1e-11 * norm2(&b),
            "cg residual {} after {iters} iterations",
            rn.sqrt()
        );
    }

    #[test]
    fn lanczos_finds_extreme_eigenvalue_of_small_matrix() {
        // Symmetric 40×40 with known dominant eigenvalue: diag(1..40).
        let dim = 40;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..dim {
                y[i] = (i as f64 + 1.0) * x[i];
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let start: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ritz = lanczos_ritz(apply, &start, &[], 40);
        let (theta, y) = &ritz[0];
        assert!(
            (theta - 40.0).abs() < 1e-8,
            "dominant Ritz value {theta}, want 40"
        );
        assert!((y[dim - 1].abs() - 1.0).abs() < 1e-6);
    }
}
