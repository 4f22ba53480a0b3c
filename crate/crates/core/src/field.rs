//! Real and complex periodic fields, their spectra, and time slabs.
//!
//! Spatial data is row-major: entry `i * n + j` holds the value at
//! `x = (2πi/n, 2πj/n)`. A [`Spectrum`] stores normalized Fourier coefficients
//! `ĉ_k` with `f(x) = Σ_k ĉ_k e^{ik·x}`, which makes multiplier application and
//! zero-padding direct.

use num_complex::Complex64;

use crate::fft::{fft2, ifft2};
use crate::grid::GridSpec;

/// A real scalar field on one spatial frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

/// A complex scalar field (used for plane-wave packets mid-pipeline).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: GridSpec,
    pub data: Vec<Complex64>,
}

/// Normalized Fourier coefficients of a field on an `n × n` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: GridSpec,
    pub data: Vec<Complex64>,
}

/// A two-component vector field sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub components: [ScalarField; 2],
}

/// A time-indexed family of scalar fields at the grid's uniform frame times.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSlab {
    pub frames: Vec<ScalarField>,
}

/// A time-indexed family of vector fields.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSlab {
    pub frames: Vec<VectorField>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField { grid, data: vec![0.0; grid.n * grid.n] }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        ScalarField { grid, data: vec![c; grid.n * grid.n] }
    }

    /// Sample `f(x₁, x₂)` on the grid.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n;
        let dx = grid.dx();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(dx * i as f64, dx * j as f64));
            }
        }
        ScalarField { grid, data }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn to_spectrum(&self) -> Spectrum {
        let n = self.grid.n;
        let mut data: Vec<Complex64> =
            self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft2(&mut data, n);
        let scale = 1.0 / (n * n) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
        Spectrum { grid: self.grid, data }
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// In-place `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid.n, other.grid.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in self.data.iter_mut() {
            *a *= c;
        }
    }

    /// Pointwise product (no dealiasing; see `spectral::multiply` for products
    /// of band-limited fields feeding back into spectral analysis).
    pub fn pointwise_mul(&self, other: &ScalarField) -> ScalarField {
        debug_assert_eq!(self.grid.n, other.grid.n);
        ScalarField {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

impl ComplexField {
    pub fn zeros(grid: GridSpec) -> Self {
        ComplexField { grid, data: vec![Complex64::default(); grid.n * grid.n] }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let n = grid.n;
        let dx = grid.dx();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(dx * i as f64, dx * j as f64));
            }
        }
        ComplexField { grid, data }
    }

    pub fn to_spectrum(&self) -> Spectrum {
        let n = self.grid.n;
        let mut data = self.data.clone();
        fft2(&mut data, n);
        let scale = 1.0 / (n * n) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
        Spectrum { grid: self.grid, data }
    }

    /// Real part, as a scalar field.
    pub fn re(&self) -> ScalarField {
        ScalarField { grid: self.grid, data: self.data.iter().map(|v| v.re).collect() }
    }

    pub fn max_abs_im(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.im.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    pub fn conj(&self) -> ComplexField {
        ComplexField { grid: self.grid, data: self.data.iter().map(|v| v.conj()).collect() }
    }

    pub fn axpy(&mut self, c: Complex64, other: &ComplexField) {
        debug_assert_eq!(self.grid.n, other.grid.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }
}

impl Spectrum {
    pub fn zeros(grid: GridSpec) -> Self {
        Spectrum { grid, data: vec![Complex64::default(); grid.n * grid.n] }
    }

    pub fn to_complex_field(&self) -> ComplexField {
        let n = self.grid.n;
        let mut data: Vec<Complex64> =
            self.data.iter().map(|&v| v * (n * n) as f64).collect();
        ifft2(&mut data, n);
        ComplexField { grid: self.grid, data }
    }

    /// Inverse transform, discarding the (roundoff-level) imaginary part.
    pub fn to_scalar_field(&self) -> ScalarField {
        self.to_complex_field().re()
    }

    /// Coefficient at integer frequency `(k1, k2)` (each in `[−n/2, n/2−1]`).
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        let n = self.grid.n as i64;
        let i = k1.rem_euclid(n) as usize;
        let j = k2.rem_euclid(n) as usize;
        self.data[i * self.grid.n + j]
    }

    pub fn coeff_mut(&mut self, k1: i64, k2: i64) -> &mut Complex64 {
        let n = self.grid.n as i64;
        let i = k1.rem_euclid(n) as usize;
        let j = k2.rem_euclid(n) as usize;
        &mut self.data[i * self.grid.n + j]
    }

    /// Apply a complex multiplier `σ(k₁, k₂)` in place.
    pub fn apply_multiplier(&mut self, sigma: impl Fn(i64, i64) -> Complex64) {
        let n = self.grid.n;
        for i in 0..n {
            let k1 = self.grid.freq(i);
            for j in 0..n {
                let k2 = self.grid.freq(j);
                self.data[i * n + j] *= sigma(k1, k2);
            }
        }
    }

    /// A copy with multiplier `σ` applied.
    pub fn with_multiplier(&self, sigma: impl Fn(i64, i64) -> Complex64) -> Spectrum {
        let mut out = self.clone();
        out.apply_multiplier(sigma);
        out
    }

    /// Zero-pad onto a finer grid (`m ≥ n`). The Nyquist row/column is split
    /// evenly between `±n/2` so real fields stay real and
    /// `truncate(pad(f)) = f` exactly.
    pub fn pad_to(&self, fine: GridSpec) -> Spectrum {
        let n = self.grid.n as i64;
        let m = fine.n;
        assert!(fine.n >= self.grid.n);
        if fine.n == self.grid.n {
            return self.clone();
        }
        let mut out = Spectrum::zeros(fine);
        let half = n / 2;
        for i in 0..self.grid.n {
            let k1 = self.grid.freq(i);
            for j in 0..self.grid.n {
                let k2 = self.grid.freq(j);
                let c = self.data[i * self.grid.n + j];
                // Split factors for Nyquist frequencies.
                let split = |k: i64| if k == -half { 0.5 } else { 1.0 };
                let w = split(k1) * split(k2);
                let targets_1: &[i64] = if k1 == -half { &[-half, half][..] } else { std::slice::from_ref(&k1) };
                let targets_2: &[i64] = if k2 == -half { &[-half, half][..] } else { std::slice::from_ref(&k2) };
                for &t1 in targets_1 {
                    for &t2 in targets_2 {
                        let ii = t1.rem_euclid(m as i64) as usize;
                        let jj = t2.rem_euclid(m as i64) as usize;
                        out.data[ii * m + jj] += c * w;
                    }
                }
            }
        }
        out
    }

    /// Restrict onto a coarser grid (`m ≤ n`), folding `±m/2` content into the
    /// Nyquist bin; exact inverse of [`Spectrum::pad_to`].
    pub fn truncate_to(&self, coarse: GridSpec) -> Spectrum {
        let m = coarse.n as i64;
        assert!(coarse.n <= self.grid.n);
        if coarse.n == self.grid.n {
            return self.clone();
        }
        let mut out = Spectrum::zeros(coarse);
        let half = m / 2;
        for i in 0..coarse.n {
            let k1 = coarse.freq(i);
            for j in 0..coarse.n {
                let k2 = coarse.freq(j);
                let sources_1: &[i64] = if k1 == -half { &[-half, half][..] } else { std::slice::from_ref(&k1) };
                let sources_2: &[i64] = if k2 == -half { &[-half, half][..] } else { std::slice::from_ref(&k2) };
                let mut acc = Complex64::default();
                for &s1 in sources_1 {
                    for &s2 in sources_2 {
                        acc += self.coeff(s1, s2);
                    }
                }
                out.data[i * coarse.n + j] = acc;
            }
        }
        out
    }

    /// Largest `|ĉ_k|` together with its frequency.
    pub fn max_coeff(&self) -> (f64, (i64, i64)) {
        let n = self.grid.n;
        let mut best = (0.0f64, (0i64, 0i64));
        for i in 0..n {
            for j in 0..n {
                let a = self.data[i * n + j].norm();
                if a > best.0 {
                    best = (a, (self.grid.freq(i), self.grid.freq(j)));
                }
            }
        }
        best
    }
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        VectorField { components: [ScalarField::zeros(grid), ScalarField::zeros(grid)] }
    }

    pub fn grid(&self) -> GridSpec {
        self.components[0].grid
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.grid().n;
        let mut m = 0.0f64;
        for k in 0..n * n {
            let vx = self.components[0].data[k];
            let vy = self.components[1].data[k];
            m = m.max((vx * vx + vy * vy).sqrt());
        }
        m
    }

    pub fn axpy(&mut self, c: f64, other: &VectorField) {
        self.components[0].axpy(c, &other.components[0]);
        self.components[1].axpy(c, &other.components[1]);
    }

    pub fn scale(&mut self, c: f64) {
        self.components[0].scale(c);
        self.components[1].scale(c);
    }
}

impl ScalarSlab {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarSlab { frames: (0..grid.m_t).map(|_| ScalarField::zeros(grid)).collect() }
    }

    /// Sample `f(x₁, x₂, t)` on every frame.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        ScalarSlab {
            frames: (0..grid.m_t)
                .map(|j| {
                    let t = grid.time(j);
                    ScalarField::from_fn(grid, |x1, x2| f(x1, x2, t))
                })
                .collect(),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.frames[0].grid
    }

    pub fn max_abs(&self) -> f64 {
        self.frames.iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }

    pub fn axpy(&mut self, c: f64, other: &ScalarSlab) {
        debug_assert_eq!(self.frames.len(), other.frames.len());
        for (a, b) in self.frames.iter_mut().zip(&other.frames) {
            a.axpy(c, b);
        }
    }

    /// Apply a frame-wise map, producing a new slab.
    pub fn map_frames(&self, f: impl Fn(&ScalarField) -> ScalarField + Sync) -> ScalarSlab {
        ScalarSlab { frames: self.frames.iter().map(f).collect() }
    }
}

impl VectorSlab {
    pub fn zeros(grid: GridSpec) -> Self {
        VectorSlab { frames: (0..grid.m_t).map(|_| VectorField::zeros(grid)).collect() }
    }

    pub fn grid(&self) -> GridSpec {
        self.frames[0].grid()
    }

    pub fn max_abs(&self) -> f64 {
        self.frames.iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }

    pub fn axpy(&mut self, c: f64, other: &VectorSlab) {
        debug_assert_eq!(self.frames.len(), other.frames.len());
        for (a, b) in self.frames.iter_mut().zip(&other.frames) {
            a.axpy(c, b);
        }
    }
}
