//! Principal-term extraction for operators acting on oscillatory plane-wave
//! packets: split `T[a e^{iλξ}]` and `ℙ_{≈λ}[a e^{iλξ}]` into the pointwise
//! multiplier term evaluated at the local frequency `λ∇ξ(x)` plus a residual,
//! and measure the residual's `λ⁻¹` decay.

use num_complex::Complex64;
use serde::Serialize;

use crate::field::{ComplexField, ScalarField, VectorField};
use crate::norms::{c0_norm, ck_norm};
use crate::spectral::{derivative, gradient, lp_project_near_complex, NearBand};
use crate::symbols::{apply_symbol_complex, SymbolSpec};
use crate::{FieldError, Result};

/// One oscillatory packet `a(x) e^{iλξ(x)}`, with `ξ = ξ̂·x + π(x)` split into
/// the linear profile and a periodic perturbation.
pub struct PlaneWavePacket {
    /// Complex amplitude `a`.
    pub amplitude: ComplexField,
    /// Periodic phase perturbation `π` (zero for a pure mode).
    pub pi: ScalarField,
    /// Constant gradient `∇ξ̂` of the linear profile.
    pub hat_grad: [f64; 2],
    /// Oscillation frequency `λ`.
    pub lambda: f64,
    /// The annular projection band of this wave index.
    pub band: NearBand,
}

/// Operator to apply to a packet.
pub enum PacketOp<'a> {
    /// The drift operator `T` of an even symbol.
    Symbol(&'a SymbolSpec),
    /// The annular projection `ℙ_{≈λ}` of the packet's own band.
    Project,
}

/// Scalar or vector image of a packet under an operator.
pub enum PacketImage {
    Scalar(ComplexField),
    Vector([ComplexField; 2]),
}

impl PacketImage {
    pub fn c0_norm(&self) -> f64 {
        match self {
            PacketImage::Scalar(f) => f.max_abs(),
            PacketImage::Vector([a, b]) => a.max_abs().max(b.max_abs()),
        }
    }

    /// `self − other`, componentwise.
    pub fn sub(&self, other: &PacketImage) -> PacketImage {
        match (self, other) {
            (PacketImage::Scalar(a), PacketImage::Scalar(b)) => {
                let mut out = a.clone();
                out.axpy(Complex64::new(-1.0, 0.0), b);
                PacketImage::Scalar(out)
            }
            (PacketImage::Vector(a), PacketImage::Vector(b)) => {
                let mut o0 = a[0].clone();
                o0.axpy(Complex64::new(-1.0, 0.0), &b[0]);
                let mut o1 = a[1].clone();
                o1.axpy(Complex64::new(-1.0, 0.0), &b[1]);
                PacketImage::Vector([o0, o1])
            }
            _ => panic!("mismatched packet image shapes"),
        }
    }

    pub fn conj(&self) -> PacketImage {
        match self {
            PacketImage::Scalar(f) => PacketImage::Scalar(f.conj()),
            PacketImage::Vector([a, b]) => PacketImage::Vector([a.conj(), b.conj()]),
        }
    }
}

impl PlaneWavePacket {
    /// Validate: the carrier `λ∇ξ̂` must be (numerically) integral and below
    /// Nyquist together with the perturbation's reach, and the deformation
    /// must stay within a quarter of the profile gradient.
    pub fn validate(&self) -> Result<()> {
        let g = self.amplitude.grid;
        let k = self.carrier();
        for (axis, kc) in k.iter().enumerate() {
            let exact = self.lambda * self.hat_grad[axis];
            if (exact - *kc as f64).abs() > 1e-9 {
                return Err(FieldError::InvalidGrid(format!(
                    "carrier frequency λ·∇ξ̂ = {exact} is not integral on the torus"
                )));
            }
        }
        let grad_pi = gradient(&self.pi);
        let def = grad_pi.max_abs();
        let hat_norm =
            (self.hat_grad[0] * self.hat_grad[0] + self.hat_grad[1] * self.hat_grad[1]).sqrt();
        if def > 0.25 * hat_norm {
            return Err(FieldError::DeformationExceeded {
                measured: def,
                limit: 0.25 * hat_norm,
            });
        }
        let reach = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt() + self.lambda * def;
        if reach >= g.nyquist() {
            return Err(FieldError::NyquistViolation(format!(
                "packet reaches frequency {reach:.1} ≥ Nyquist {}",
                g.nyquist()
            )));
        }
        Ok(())
    }

    fn carrier(&self) -> [i64; 2] {
        [
            (self.lambda * self.hat_grad[0]).round() as i64,
            (self.lambda * self.hat_grad[1]).round() as i64,
        ]
    }

    /// Synthesize the full oscillatory field `a e^{iλξ}` on the grid.
    pub fn synthesize(&self) -> ComplexField {
        let g = self.amplitude.grid;
        let k = self.carrier();
        let n = g.n;
        let mut out = ComplexField::zeros(g);
        let dx = g.dx();
        for i in 0..n {
            let x1 = dx * i as f64;
            for j in 0..n {
                let x2 = dx * j as f64;
                let idx = i * n + j;
                let phase = k[0] as f64 * x1 + k[1] as f64 * x2 + self.lambda * self.pi.data[idx];
                let osc = Complex64::new(0.0, phase).exp();
                out.data[idx] = self.amplitude.data[idx] * osc;
            }
        }
        out
    }

    /// Full phase gradient `∇ξ = ∇ξ̂ + ∇π` on the grid.
    pub fn grad_xi(&self) -> VectorField {
        let mut g = gradient(&self.pi);
        for axis in 0..2 {
            for v in g.components[axis].data.iter_mut() {
                *v += self.hat_grad[axis];
            }
        }
        g
    }

    /// Conjugate packet `Ī`: negated phase, conjugated amplitude, mirrored
    /// band.
    pub fn conjugate(&self) -> PlaneWavePacket {
        let mut pi = self.pi.clone();
        pi.scale(-1.0);
        PlaneWavePacket {
            amplitude: self.amplitude.conj(),
            pi,
            hat_grad: [-self.hat_grad[0], -self.hat_grad[1]],
            lambda: self.lambda,
            band: self.band.conjugate(),
        }
    }
}

/// Exact spectral application of the chosen operator to the synthesized
/// packet.
pub fn plane_wave_apply(pkt: &PlaneWavePacket, op: &PacketOp) -> Result<PacketImage> {
    pkt.validate()?;
    let field = pkt.synthesize();
    Ok(match op {
        PacketOp::Symbol(s) => PacketImage::Vector(apply_symbol_complex(s, &field)),
        PacketOp::Project => PacketImage::Scalar(lp_project_near_complex(&field, &pkt.band)?),
    })
}

/// The principal term of the microlocal split: the operator's multiplier
/// evaluated pointwise at the local frequency `λ∇ξ(x)`, times the packet.
pub fn principal_term(pkt: &PlaneWavePacket, op: &PacketOp) -> PacketImage {
    let field = pkt.synthesize();
    let grad = pkt.grad_xi();
    let n = pkt.amplitude.grid.n;
    match op {
        PacketOp::Symbol(s) => {
            let mut out = [ComplexField::zeros(pkt.amplitude.grid), ComplexField::zeros(pkt.amplitude.grid)];
            for idx in 0..n * n {
                let m = s.eval_real(grad.components[0].data[idx], grad.components[1].data[idx]);
                out[0].data[idx] = field.data[idx] * m[0];
                out[1].data[idx] = field.data[idx] * m[1];
            }
            PacketImage::Vector(out)
        }
        PacketOp::Project => {
            let mut out = ComplexField::zeros(pkt.amplitude.grid);
            for idx in 0..n * n {
                let eta = pkt.band.multiplier_at(
                    pkt.lambda * grad.components[0].data[idx],
                    pkt.lambda * grad.components[1].data[idx],
                );
                out.data[idx] = field.data[idx] * eta;
            }
            PacketImage::Scalar(out)
        }
    }
}

/// Norm report for a microlocal residual.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub lambda: f64,
    /// `‖δ‖_{C⁰}`.
    pub residual_norm: f64,
    /// `‖δ‖_{C⁰}·λ / (‖a‖_{C¹} + ‖a‖_{C⁰}·‖∇²ξ‖_{C⁰})`: the empirical
    /// constant of the `λ⁻¹` bound.
    pub ratio: f64,
}

/// Residual of the microlocal split: exact application minus principal term.
pub fn microlocal_residual(
    pkt: &PlaneWavePacket,
    op: &PacketOp,
) -> Result<(PacketImage, ResidualReport)> {
    let exact = plane_wave_apply(pkt, op)?;
    let principal = principal_term(pkt, op);
    let residual = exact.sub(&principal);
    let norm = residual.c0_norm();

    let amp_c0 = pkt.amplitude.max_abs();
    let amp_c1 = ck_norm(&pkt.amplitude.re(), 1).max({
        let im = imag_part(&pkt.amplitude);
        ck_norm(&im, 1)
    });
    let hess = hessian_c0(&pkt.pi);
    let denom = (amp_c1 + amp_c0 * hess).max(f64::MIN_POSITIVE);
    let ratio = norm * pkt.lambda / denom;
    Ok((residual, ResidualReport { lambda: pkt.lambda, residual_norm: norm, ratio }))
}

fn imag_part(f: &ComplexField) -> ScalarField {
    ScalarField {
        grid: f.grid,
        data: f.data.iter().map(|z| z.im).collect(),
    }
}

/// `max_{i,j} ‖∂_i∂_j π‖_{C⁰}`.
fn hessian_c0(pi: &ScalarField) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..2 {
        let di = derivative(pi, i);
        for j in 0..2 {
            worst = worst.max(c0_norm(&derivative(&di, j)));
        }
    }
    worst
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::symbols::builtin_ipm;

    fn packet(grid: GridSpec, lambda: f64, with_pi: bool, smooth_amp: bool) -> PlaneWavePacket {
        let band = NearBand {
            lambda,
            parity: 0,
            sign: 1,
            direction: [1, 1],
            separation: 10.0,
        };
        let amplitude = if smooth_amp {
            ComplexField::from_fn(grid, |x1, x2| {
                Complex64::new(1.0 + 0.4 * x1.cos(), 0.2 * (x2 + x1).sin())
            })
        } else {
            ComplexField::from_fn(grid, |_, _| Complex64::new(0.8, -0.1))
        };
        let pi = if with_pi {
            ScalarField::from_fn(grid, |x1, x2| 0.05 * (x1 + 2.0 * x2).cos())
        } else {
            ScalarField::zeros(grid)
        };
        PlaneWavePacket { amplitude, pi, hat_grad: [1.0, 1.0], lambda, band }
    }

    #[test]
    fn pure_mode_symbol_is_exact_multiplier() {
        let g = GridSpec::new(64, 2, 0.0, 1.0).unwrap();
        let pkt = packet(g, 8.0, false, false);
        let ipm = builtin_ipm();
        let img = plane_wave_apply(&pkt, &PacketOp::Symbol(&ipm)).unwrap();
        // m(8, 8) = m(1, 1) = (1/2, −1/2) by degree-0 homogeneity.
        let field = pkt.synthesize();
        if let PacketImage::Vector([u1, u2]) = img {
            let mut e1 = 0.0f64;
            let mut e2 = 0.0f64;
            for idx in 0..g.n * g.n {
                e1 = e1.max((u1.data[idx] - field.data[idx] * 0.5).norm());
                e2 = e2.max((u2.data[idx] + field.data[idx] * 0.5).norm());
            }
            assert!(e1 < 1e-12 && e2 < 1e-12, "errors {e1:.2e}, {e2:.2e}");
        } else {
            panic!("expected vector image");
        }
    }

    #[test]
    fn pure_mode_projection_is_identity() {
        let g = GridSpec::new(64, 2, 0.0, 1.0).unwrap();
        let pkt = packet(g, 8.0, false, false);
        let img = plane_wave_apply(&pkt, &PacketOp::Project).unwrap();
        let field = pkt.synthesize();
        if let PacketImage::Scalar(p) = img {
            let mut e = 0.0f64;
            for idx in 0..g.n * g.n {
                e = e.max((p.data[idx] - field.data[idx]).norm());
            }
            assert!(e < 1e-12, "projection altered a centered mode: {e:.2e}");
        } else {
            panic!("expected scalar image");
        }
    }

    #[test]
    fn linear_phase_constant_amplitude_residual_vanishes() {
        let g = GridSpec::new(64, 2, 0.0, 1.0).unwrap();
        let pkt = packet(g, 8.0, false, false);
        let ipm = builtin_ipm();
        for op in [PacketOp::Symbol(&ipm), PacketOp::Project] {
            let (_, report) = microlocal_residual(&pkt, &op).unwrap();
            assert!(
                report.residual_norm <= 1e-11,
                "residual {:.2e} for exact multiplier case",
                report.residual_norm
            );
        }
    }

    #[test]
    fn refinement_oracle_matches_within_1e9() {
        // Apply on the base grid vs: synthesize on a 2× finer grid, apply
        // there, truncate back.
        let g = GridSpec::new(128, 2, 0.0, 1.0).unwrap();
        let fine = GridSpec { n: 256, ..g };
        let lambda = 16.0;
        let mk = |grid: GridSpec| packet(grid, lambda, true, true);
        let ipm = builtin_ipm();
        let coarse_img = plane_wave_apply(&mk(g), &PacketOp::Symbol(&ipm)).unwrap();
        let fine_img = plane_wave_apply(&mk(fine), &PacketOp::Symbol(&ipm)).unwrap();
        if let (PacketImage::Vector(c), PacketImage::Vector(f)) = (coarse_img, fine_img) {
            for axis in 0..2 {
                let truncated = f[axis].to_spectrum().truncate_to(g).to_complex_field();
                let mut e = 0.0f64;
                for idx in 0..g.n * g.n {
                    e = e.max((truncated.data[idx] - c[axis].data[idx]).norm());
                }
                assert!(e < 1e-9, "axis {axis}: refinement mismatch {e:.2e}");
            }
        } else {
            panic!("expected vector images");
        }
    }

    #[test]
    fn residual_halves_when_lambda_doubles() {
        let g = GridSpec::new(256, 2, 0.0, 1.0).unwrap();
        let ipm = builtin_ipm();
        let r8 = microlocal_residual(&packet(g, 8.0, true, true), &PacketOp::Symbol(&ipm))
            .unwrap()
            .1
            .residual_norm;
        let r16 = microlocal_residual(&packet(g, 16.0, true, true), &PacketOp::Symbol(&ipm))
            .unwrap()
            .1
            .residual_norm;
        let factor = r16 / r8;
        assert!(
            (0.35..=0.65).contains(&factor),
            "doubling λ scaled the residual by {factor:.3}"
        );
    }

    #[test]
    fn residual_scaling_slope_near_minus_one() {
        let g = GridSpec::new(256, 2, 0.0, 1.0).unwrap();
        let ipm = builtin_ipm();
        let mut pts = Vec::new();
        for lambda in [8.0, 16.0, 32.0, 64.0] {
            let rep = microlocal_residual(&packet(g, lambda, true, true), &PacketOp::Symbol(&ipm))
                .unwrap()
                .1;
            assert!(rep.ratio < 10.0, "λ = {lambda}: ratio {:.2} out of range", rep.ratio);
            pts.push((lambda, rep.residual_norm));
        }
        let slope = log_log_slope(&pts);
        assert!(
            (-1.3..=-0.7).contains(&slope),
            "log-log residual slope {slope:.3} outside [−1.3, −0.7]"
        );
    }

    #[test]
    fn conjugate_packet_residual_is_conjugate() {
        let g = GridSpec::new(128, 2, 0.0, 1.0).unwrap();
        let pkt = packet(g, 16.0, true, true);
        let conj = pkt.conjugate();
        let ipm = builtin_ipm();
        let (r, _) = microlocal_residual(&pkt, &PacketOp::Symbol(&ipm)).unwrap();
        let (rc, _) = microlocal_residual(&conj, &PacketOp::Symbol(&ipm)).unwrap();
        let diff = rc.sub(&r.conj());
        assert!(diff.c0_norm() < 1e-12, "conjugate symmetry broken: {:.2e}", diff.c0_norm());
    }

    #[test]
    fn nyquist_and_deformation_guards() {
        let g = GridSpec::new(32, 2, 0.0, 1.0).unwrap();
        let too_fast = packet(g, 16.0, false, false);
        assert!(matches!(
            plane_wave_apply(&too_fast, &PacketOp::Project),
            Err(FieldError::NyquistViolation(_))
        ));
        let mut bent = packet(g, 4.0, false, false);
        bent.pi = ScalarField::from_fn(g, |x1, _| 0.6 * x1.cos());
        assert!(matches!(
            plane_wave_apply(&bent, &PacketOp::Project),
            Err(FieldError::DeformationExceeded { .. })
        ));
    }
}
