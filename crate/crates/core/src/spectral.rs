//! Fourier-multiplier operations: derivatives, fractional dissipation,
//! Littlewood–Paley projections, divergence inversion, and dealiased products.

use num_complex::Complex64;

use crate::field::{ComplexField, ScalarField, VectorField};
use crate::grid::GridSpec;
use crate::{FieldError, Result};

/// C² smoothstep: `0` for `u ≤ 0`, `1` for `u ≥ 1`, `6u⁵ − 15u⁴ + 10u³` between.
/// Satisfies `smoothstep(1 − u) = 1 − smoothstep(u)` exactly.
pub fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// Spectral partial derivative `∂_axis f`. The unpaired Nyquist mode is zeroed
/// so the output stays real and mean-zero.
pub fn derivative(f: &ScalarField, axis: usize) -> ScalarField {
    assert!(axis < 2);
    let nyq = -(f.grid.n as i64) / 2;
    let mut s = f.to_spectrum();
    s.apply_multiplier(|k1, k2| {
        let k = [k1, k2][axis];
        if k == nyq {
            Complex64::default()
        } else {
            Complex64::new(0.0, k as f64)
        }
    });
    s.to_scalar_field()
}

/// Spectral gradient `(∂₁f, ∂₂f)`.
pub fn gradient(f: &ScalarField) -> VectorField {
    VectorField { components: [derivative(f, 0), derivative(f, 1)] }
}

/// Spectral divergence `∂₁v₁ + ∂₂v₂`.
pub fn divergence(v: &VectorField) -> ScalarField {
    let mut d = derivative(&v.components[0], 0);
    d.axpy(1.0, &derivative(&v.components[1], 1));
    d
}

/// Complex-field spectral derivative (for plane-wave packets mid-pipeline).
pub fn derivative_complex(f: &ComplexField, axis: usize) -> ComplexField {
    assert!(axis < 2);
    let nyq = -(f.grid.n as i64) / 2;
    let mut s = f.to_spectrum();
    s.apply_multiplier(|k1, k2| {
        let k = [k1, k2][axis];
        if k == nyq {
            Complex64::default()
        } else {
            Complex64::new(0.0, k as f64)
        }
    });
    s.to_complex_field()
}

/// Fractional Laplacian `Λ^γ f` via the multiplier `|ξ|^γ`. For `γ > 0` the
/// zero mode is zeroed (`Λ^γ` is defined on mean-zero functions); for `γ = 0`
/// the field is returned unchanged.
pub fn fractional_laplacian(f: &ScalarField, gamma: f64) -> Result<ScalarField> {
    if gamma < 0.0 {
        return Err(FieldError::NegativeOrder(gamma));
    }
    if gamma == 0.0 {
        return Ok(f.clone());
    }
    let mut s = f.to_spectrum();
    s.apply_multiplier(|k1, k2| {
        if k1 == 0 && k2 == 0 {
            Complex64::default()
        } else {
            let r2 = (k1 * k1 + k2 * k2) as f64;
            Complex64::new(r2.powf(0.5 * gamma), 0.0)
        }
    });
    Ok(s.to_scalar_field())
}

/// Squared smooth radial cutoff for `ℙ²_{≤μ}`: `1` on `|ξ| ≤ μ/2`, `0` on
/// `|ξ| ≥ 2μ`, squared smoothstep in between.
pub fn lp_leq_multiplier(r: f64, mu: f64) -> f64 {
    let chi = 1.0 - smoothstep((r - 0.5 * mu) / (1.5 * mu));
    chi * chi
}

/// Littlewood–Paley projection `ℙ²_{≤μ} f` (smooth radial cutoff, squared).
pub fn lp_project_leq(f: &ScalarField, mu: f64) -> ScalarField {
    assert!(mu > 0.0);
    let mut s = f.to_spectrum();
    s.apply_multiplier(|k1, k2| {
        let r = ((k1 * k1 + k2 * k2) as f64).sqrt();
        Complex64::new(lp_leq_multiplier(r, mu), 0.0)
    });
    s.to_scalar_field()
}

/// The annular bump `ℙ_{≈λ}` for one wave index: a radial smoothstep bump
/// centered at `sign · sep^parity · λ · ξ⁽ʲ⁾`, flat within a quarter of the
/// direction's modulus and supported within half of it (in the rescaled
/// variable of the multiplier).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearBand {
    /// Base frequency `λ_{q+1}`.
    pub lambda: f64,
    /// Parity `[k] ∈ {0, 1}` of the time-cutoff index.
    pub parity: u8,
    /// Sign of the wave index: `+1` or `−1`.
    pub sign: i8,
    /// Integer direction vector `ξ⁽ʲ⁾` of the current stage.
    pub direction: [i64; 2],
    /// Separation factor between the two parities (10 in the construction;
    /// smaller values keep desk-scale grids resolved).
    pub separation: f64,
}

impl NearBand {
    /// Center of the bump in absolute frequency coordinates.
    pub fn center(&self) -> [f64; 2] {
        let s = self.sign as f64 * self.separation.powi(self.parity as i32) * self.lambda;
        [s * self.direction[0] as f64, s * self.direction[1] as f64]
    }

    fn dir_norm(&self) -> f64 {
        let [d1, d2] = self.direction;
        ((d1 * d1 + d2 * d2) as f64).sqrt()
    }

    /// Outer support radius in absolute frequency coordinates.
    pub fn outer_radius(&self) -> f64 {
        0.5 * self.separation.powi(self.parity as i32) * self.lambda * self.dir_norm()
    }

    /// Flat-region radius in absolute frequency coordinates.
    pub fn inner_radius(&self) -> f64 {
        0.5 * self.outer_radius()
    }

    /// Multiplier value at integer frequency `(k1, k2)`.
    pub fn multiplier(&self, k1: i64, k2: i64) -> f64 {
        self.multiplier_at(k1 as f64, k2 as f64)
    }

    /// Multiplier profile at a continuous frequency (used for the principal
    /// term of the microlocal split, evaluated at the local frequency λ∇ξ).
    pub fn multiplier_at(&self, f1: f64, f2: f64) -> f64 {
        let c = self.center();
        let dx = f1 - c[0];
        let dy = f2 - c[1];
        let rho = (dx * dx + dy * dy).sqrt();
        let r_in = self.inner_radius();
        let r_out = self.outer_radius();
        1.0 - smoothstep((rho - r_in) / (r_out - r_in))
    }

    /// Reject bands whose center falls at or beyond the grid Nyquist
    /// frequency — the oscillation itself would be unresolved. The bump's
    /// outer tail may extend past Nyquist; those frequencies simply do not
    /// exist on the grid, and packet content stays near the center.
    pub fn validate(&self, grid: GridSpec) -> Result<()> {
        let c = self.center();
        let nyq = grid.nyquist();
        if c[0].abs() >= nyq || c[1].abs() >= nyq {
            return Err(FieldError::NyquistViolation(format!(
                "band center ({:.1}, {:.1}) vs Nyquist {nyq} (λ = {}, parity {}, separation {})",
                c[0], c[1], self.lambda, self.parity, self.separation
            )));
        }
        Ok(())
    }

    /// Conjugate band (opposite sign).
    pub fn conjugate(&self) -> NearBand {
        NearBand { sign: -self.sign, ..*self }
    }
}

/// `ℙ_{≈λ} f` for a real field: the band and its conjugate are both applied so
/// the output stays real.
pub fn lp_project_near(f: &ScalarField, band: &NearBand) -> Result<ScalarField> {
    band.validate(f.grid)?;
    let conj = band.conjugate();
    let mut s = f.to_spectrum();
    s.apply_multiplier(|k1, k2| {
        Complex64::new(band.multiplier(k1, k2) + conj.multiplier(k1, k2), 0.0)
    });
    Ok(s.to_scalar_field())
}

/// One-sided `ℙ_{≈λ}` on a complex packet.
pub fn lp_project_near_complex(f: &ComplexField, band: &NearBand) -> Result<ComplexField> {
    band.validate(f.grid)?;
    let mut s = f.to_spectrum();
    s.apply_multiplier(|k1, k2| Complex64::new(band.multiplier(k1, k2), 0.0));
    Ok(s.to_complex_field())
}

fn check_mean_zero(f: &ScalarField) -> Result<()> {
    let mean = f.mean().abs();
    let limit = 1e-10 * f.max_abs().max(f64::MIN_POSITIVE);
    if mean > limit {
        return Err(FieldError::NonZeroMean { mean, limit });
    }
    Ok(())
}

/// Gradient anti-divergence `R = ∇Δ⁻¹ f` on mean-zero `f`, so `∇·R = f`.
/// If `band` is given, `ℙ_{≈λ}` (both signs) is applied first.
pub fn solve_div(f: &ScalarField, band: Option<&NearBand>) -> Result<VectorField> {
    check_mean_zero(f)?;
    let mut s = f.to_spectrum();
    if let Some(b) = band {
        b.validate(f.grid)?;
        let conj = b.conjugate();
        s.apply_multiplier(|k1, k2| {
            Complex64::new(b.multiplier(k1, k2) + conj.multiplier(k1, k2), 0.0)
        });
    }
    let comp = |axis: usize| {
        let mut sa = s.clone();
        let nyq = -(f.grid.n as i64) / 2;
        sa.apply_multiplier(|k1, k2| {
            if (k1 == 0 && k2 == 0) || k1 == nyq || k2 == nyq {
                Complex64::default()
            } else {
                let k = [k1, k2][axis] as f64;
                let r2 = (k1 * k1 + k2 * k2) as f64;
                Complex64::new(0.0, -k / r2)
            }
        });
        sa.to_scalar_field()
    };
    Ok(VectorField { components: [comp(0), comp(1)] })
}

/// Upsample a real field onto the doubled grid (band-exact).
pub fn pad_physical(f: &ScalarField) -> ScalarField {
    f.to_spectrum().pad_to(f.grid.padded()).to_scalar_field()
}

/// Upsample a complex field onto the doubled grid (band-exact).
pub fn pad_physical_complex(f: &ComplexField) -> ComplexField {
    f.to_spectrum().pad_to(f.grid.padded()).to_complex_field()
}

/// Restrict a field on the doubled grid back to the base grid, discarding all
/// content at or above the base Nyquist frequency. The unpaired `−n/2` row is
/// zeroed rather than kept: differentiation annihilates that row, so keeping
/// product content there would break the exact commutation between pointwise
/// products and spectral derivatives that the closure bookkeeping relies on.
pub fn unpad_physical(fine: &ScalarField, coarse_grid: GridSpec) -> ScalarField {
    let mut s = fine.to_spectrum().truncate_to(coarse_grid);
    zero_nyquist(&mut s);
    s.to_scalar_field()
}

/// Restrict a complex field on the doubled grid back to the base grid (same
/// Nyquist-row projection as [`unpad_physical`]).
pub fn unpad_physical_complex(fine: &ComplexField, coarse_grid: GridSpec) -> ComplexField {
    let mut s = fine.to_spectrum().truncate_to(coarse_grid);
    zero_nyquist(&mut s);
    s.to_complex_field()
}

fn zero_nyquist(s: &mut crate::field::Spectrum) {
    let n = s.grid.n;
    let nyq = -(n as i64) / 2;
    for i in 0..n {
        let k1 = s.grid.freq(i);
        for j in 0..n {
            let k2 = s.grid.freq(j);
            if k1 == nyq || k2 == nyq {
                s.data[i * n + j] = num_complex::Complex64::default();
            }
        }
    }
}

/// Alias-free pointwise product: both factors are zero-padded onto the doubled
/// grid, multiplied there, and the result restricted back. Exact for
/// band-limited inputs — the product's frequencies fit on the doubled grid, so
/// nothing folds back below the base Nyquist.
pub fn multiply(f: &ScalarField, g: &ScalarField) -> ScalarField {
    let fine = pad_physical(f).pointwise_mul(&pad_physical(g));
    unpad_physical(&fine, f.grid)
}
