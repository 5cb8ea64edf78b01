//! Two-dimensional complex FFT built from `rustfft` row transforms.
//!
//! Plans are cached per size and shared between threads.

use std::collections::HashMap;
use std::cell::RefCell;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static WORK: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

pub(crate) struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Unnormalized forward transform, in place, row-major `n x n`.
    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &*self.forward);
    }

    /// Unnormalized inverse transform, in place.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &*self.inverse);
    }

    fn run(&self, data: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * n);
        // per-thread buffers; fresh large allocations each call cost more than the transform
        WORK.with(|w| {
            let (scratch, t) = &mut *w.borrow_mut();
            scratch.resize(fft.get_inplace_scratch_len(), Complex64::default());
            t.resize(n * n, Complex64::default());
            fft.process_with_scratch(data, scratch);
            transpose(data, t, n);
            fft.process_with_scratch(t, scratch);
            transpose(t, data, n);
        });
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const B: usize = 16;
    for ib in (0..n).step_by(B) {
        for jb in (0..n).step_by(B) {
            for i in ib..(ib + B).min(n) {
                for j in jb..(jb + B).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

pub(crate) fn plan(n: usize) -> Arc<Fft2> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Fft2>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(Fft2::new(n)))
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverse_roundtrip() {
        let n = 16;
        let p = plan(n);
        let orig: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut d = orig.clone();
        p.forward(&mut d);
        p.inverse(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a / (n * n) as f64 - b).norm() < 1e-13);
        }
    }

    #[test]
    fn single_mode_lands_in_one_bin() {
        let n = 8;
        let p = plan(n);
        let mut d: Vec<Complex64> = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                let ph = 2.0 * std::f64::consts::PI * (2.0 * i as f64 + 3.0 * j as f64) / n as f64;
                Complex64::from_polar(1.0, ph)
            })
            .collect();
        p.forward(&mut d);
        for (idx, v) in d.iter().enumerate() {
            let expect = if idx == 2 * n + 3 { (n * n) as f64 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-10 && v.im.abs() < 1e-10, "bin {idx}: {v}");
        }
    }
}
