//! In-place 2D FFT on row-major n×n complex data, built from 1D plans.
//!
//! Index a ∈ {0,…,n−1} along either axis carries the integer frequency
//! k = a for a ≤ n/2, k = a − n otherwise; `freq_of` centralizes that
//! convention so multiplier code cannot drift from it.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: std::cell::RefCell<Vec<Complex64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Fft2 {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Fft2 {
            n,
            fwd,
            inv,
            scratch: std::cell::RefCell::new(vec![Complex64::new(0.0, 0.0); len]),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Signed integer frequency for array index a.
    #[inline]
    pub fn freq_of(n: usize, a: usize) -> i64 {
        if a <= n / 2 {
            a as i64
        } else {
            a as i64 - n as i64
        }
    }

    fn rows(&self, data: &mut [Complex64], forward: bool) {
        let mut scratch = self.scratch.borrow_mut();
        let plan = if forward { &self.fwd } else { &self.inv };
        for row in data.chunks_exact_mut(self.n) {
            plan.process_with_scratch(row, &mut scratch);
        }
    }

    fn transpose(&self, data: &mut [Complex64]) {
        let n = self.n;
        for iy in 0..n {
            for ix in (iy + 1)..n {
                data.swap(iy * n + ix, ix * n + iy);
            }
        }
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n * self.n);
        self.rows(data, true);
        self.transpose(data);
        self.rows(data, true);
        self.transpose(data);
    }

    /// Inverse transform normalized so that inverse(forward(x)) = x.
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n * self.n);
        self.rows(data, false);
        self.transpose(data);
        self.rows(data, false);
        self.transpose(data);
        let scale = 1.0 / (self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn roundtrip_restores_random_data() {
        let n = 24;
        let fft = Fft2::new(n);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let orig: Vec<Complex64> = (0..n * n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut data = orig.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        let worst = data
            .iter()
            .zip(&orig)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "roundtrip error {worst}");
    }

    #[test]
    fn plane_wave_lands_on_single_bin() {
        let n = 16;
        let fft = Fft2::new(n);
        let (k1, k2) = (3i64, -5i64);
        let mut data: Vec<Complex64> = (0..n * n)
            .map(|i| {
                let (ix, iy) = (i % n, i / n);
                let phase = 2.0 * PI * (k1 as f64 * ix as f64 + k2 as f64 * iy as f64) / n as f64;
                Complex64::new(phase.cos(), phase.sin())
            })
            .collect();
        fft.forward(&mut data);
        for iy in 0..n {
            for ix in 0..n {
                let fx = Fft2::freq_of(n, ix);
                let fy = Fft2::freq_of(n, iy);
                let v = data[iy * n + ix];
                if (fx, fy) == (k1, k2) {
                    assert!(
                        (v - Complex64::new((n * n) as f64, 0.0)).norm() < 1e-9,
                        "peak bin value {v}"
                    );
                } else {
                    assert!(v.norm() < 1e-9, "leakage at ({fx},{fy}): {v}");
                }
            }
        }
    }
}
