//! Two-dimensional complex FFTs with cached plans.
//!
//! Transforms are unnormalized in the forward direction; the inverse divides by
//! `n²`, so `inverse(forward(f)) = f` to machine precision.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

type Plan = Arc<dyn Fft<f64>>;

fn plan(n: usize, inverse: bool) -> Plan {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut cache = cache.lock().unwrap();
    cache
        .entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

fn fft2_with(data: &mut [Complex64], n: usize, p: &Plan) {
    debug_assert_eq!(data.len(), n * n);
    let mut scratch = vec![Complex64::default(); p.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(n) {
        p.process_with_scratch(row, &mut scratch);
    }
    transpose(data, n);
    for row in data.chunks_exact_mut(n) {
        p.process_with_scratch(row, &mut scratch);
    }
    transpose(data, n);
}

/// In-place 2D forward DFT of a row-major `n × n` array (unnormalized).
pub fn fft2(data: &mut [Complex64], n: usize) {
    fft2_with(data, n, &plan(n, false));
}

/// In-place 2D inverse DFT of a row-major `n × n` array (normalized by `n²`).
pub fn ifft2(data: &mut [Complex64], n: usize) {
    fft2_with(data, n, &plan(n, true));
    let scale = 1.0 / (n * n) as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_identity() {
        let n = 16;
        let orig: Vec<Complex64> = (0..n * n)
            .map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
            .collect();
        let mut data = orig.clone();
        fft2(&mut data, n);
        ifft2(&mut data, n);
        let max_err = data
            .iter()
            .zip(&orig)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-12, "roundtrip error {max_err}");
    }

    #[test]
    fn single_mode_lands_on_its_bin() {
        // f(x) = e^{i(3 x₁ + 2 x₂)} on an 8×8 grid → coefficient n² at bin (3, 2).
        let n = 8;
        let mut data = vec![Complex64::default(); n * n];
        for i in 0..n {
            for j in 0..n {
                let x1 = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let x2 = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                data[i * n + j] = Complex64::new(0.0, 3.0 * x1 + 2.0 * x2).exp();
            }
        }
        fft2(&mut data, n);
        for i in 0..n {
            for j in 0..n {
                let expect = if i == 3 && j == 2 { (n * n) as f64 } else { 0.0 };
                assert!(
                    (data[i * n + j] - expect).norm() < 1e-9,
                    "bin ({i},{j}) = {}",
                    data[i * n + j]
                );
            }
        }
    }
}
