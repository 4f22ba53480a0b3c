//! Time cutoffs, lifting profile, amplitudes, and the oscillatory increment
//! `W = Σ_I ℙ_{≈λ}[a_I e^{iλξ_I}]` together with its drift `T[W]` and its
//! potential (the inverse-divergence representative).

use num_complex::Complex64;
use serde::Serialize;

use crate::field::{ComplexField, ScalarField, ScalarSlab, VectorSlab};
use crate::grid::GridSpec;
use crate::microlocal::PlaneWavePacket;
use crate::spectral::{lp_project_near_complex, smoothstep, solve_div, NearBand};
use crate::symbols::{apply_symbol, SymbolSpec};
use crate::transport::PhaseFamily;
use crate::{FieldError, Result};

/// Squared-partition time cutoffs `φ_k(t) = φ((t − kτ)/τ)`: the template is 1
/// on `|s| ≤ 1/3`, vanishes for `|s| ≥ 2/3`, and satisfies
/// `φ²(s) + φ²(s−1) = 1` exactly in the overlap by the smoothstep symmetry
/// `S(1−u) = 1 − S(u)`.
#[derive(Debug, Clone, Serialize)]
pub struct CutoffFamily {
    pub tau: f64,
    /// Inclusive index range covering the window with a one-index margin.
    pub k_range: (i64, i64),
}

/// The cutoff template on the reference scale.
pub fn phi_template(s: f64) -> f64 {
    let a = s.abs();
    if a <= 1.0 / 3.0 {
        1.0
    } else if a >= 2.0 / 3.0 {
        0.0
    } else {
        (std::f64::consts::FRAC_PI_2 * smoothstep(3.0 * (a - 1.0 / 3.0))).cos()
    }
}

impl CutoffFamily {
    pub fn phi(&self, k: i64, t: f64) -> f64 {
        phi_template((t - k as f64 * self.tau) / self.tau)
    }

    /// Indices whose cutoff is nonzero at time `t`.
    pub fn active(&self, t: f64) -> Vec<i64> {
        (self.k_range.0..=self.k_range.1)
            .filter(|&k| self.phi(k, t) != 0.0)
            .collect()
    }

    pub fn sum_sq(&self, t: f64) -> f64 {
        (self.k_range.0..=self.k_range.1)
            .map(|k| self.phi(k, t).powi(2))
            .sum()
    }
}

/// Build the cutoff family over a time window.
pub fn build_cutoffs(tau: f64, window: (f64, f64)) -> Result<CutoffFamily> {
    let (t0, t1) = window;
    if !(tau > 0.0) || tau > (t1 - t0) / 3.0 {
        return Err(FieldError::WindowTooShort(format!(
            "cutoff scale τ = {tau:.4e} exceeds a third of the window {:.4e}",
            t1 - t0
        )));
    }
    let k_lo = (t0 / tau).floor() as i64 - 1;
    let k_hi = (t1 / tau).ceil() as i64 + 1;
    Ok(CutoffFamily { tau, k_range: (k_lo, k_hi) })
}

/// Margin report of the lifting construction.
#[derive(Debug, Clone, Serialize)]
pub struct LiftingReport {
    /// Measured `max_t |(d/dt)^r e^{1/2}|` for r = 0, 1, 2.
    pub sqrt_derivative_norms: [f64; 3],
    /// Bounds `C (λ_q δ_{q−1}^{1/2})^r δ_q^{1/2}`.
    pub sqrt_derivative_bounds: [f64; 3],
    /// Worst margin `e − 2·max|c|` over frames where the coefficient lives.
    pub dominance_margin: f64,
}

/// The lifting function `e(t)`, sampled on the slab time grid.
#[derive(Debug, Clone, Serialize)]
pub struct LiftingSpec {
    /// `e` per frame.
    pub e: Vec<f64>,
    /// Stress-support interval `I_t`.
    pub i_t: (f64, f64),
    pub tau_hat: f64,
    pub k_const: f64,
    pub c_const: f64,
    pub delta_q: f64,
    pub report: LiftingReport,
}

/// Smooth even plateau profile: 1 on `|u| ≤ plateau`, 0 for `|u| ≥ outer`,
/// C² smoothstep decay in between. Built for the *square root* of the
/// lifting, so that `e = (·)²` keeps `e^{1/2}` C².
fn plateau_profile(u: f64, plateau: f64, outer: f64) -> f64 {
    let a = u.abs();
    if a <= plateau {
        1.0
    } else if a >= outer {
        0.0
    } else {
        1.0 - smoothstep((a - plateau) / (outer - plateau))
    }
}

/// Build the lifting function: `e ≥ K·δ_q` on `I_t ± τ̂_q`, with plateau over
/// `I_t ± τ̂` and C² decay to zero at `I_t ± 3τ̂`, validated against the
/// per-frame maxima of the measured frame coefficient `c`.
pub fn build_lifting(
    i_t: (f64, f64),
    grid: GridSpec,
    delta_q: f64,
    tau_hat: f64,
    lambda_q: f64,
    delta_prev: f64,
    k_const: f64,
    c_const: f64,
    c_frame_max: &[f64],
) -> Result<LiftingSpec> {
    if k_const < 4.0 || c_const < 4.0 {
        return Err(FieldError::LiftingInfeasible(format!(
            "constants K = {k_const}, C = {c_const} must both be ≥ 4"
        )));
    }
    if c_frame_max.len() != grid.m_t {
        return Err(FieldError::InvalidGrid(
            "coefficient maxima must be given per time frame".into(),
        ));
    }
    let mid = 0.5 * (i_t.0 + i_t.1);
    let half = 0.5 * (i_t.1 - i_t.0);
    let height = (k_const * delta_q).sqrt();
    let sqrt_e: Vec<f64> = grid
        .times()
        .iter()
        .map(|&t| height * plateau_profile(t - mid, half + tau_hat, half + 3.0 * tau_hat))
        .collect();
    let e: Vec<f64> = sqrt_e.iter().map(|s| s * s).collect();

    // Dominance: e > 2·max|c| wherever the coefficient lives.
    let mut dominance = f64::INFINITY;
    for (j, &cmax) in c_frame_max.iter().enumerate() {
        if cmax == 0.0 {
            continue;
        }
        dominance = dominance.min(e[j] - 2.0 * cmax);
    }
    if dominance <= 0.0 {
        return Err(FieldError::LiftingInfeasible(format!(
            "lifting plateau K·δ_q = {:.4e} fails e > 2·max|c| (worst margin {:.4e}); \
             increase K",
            k_const * delta_q,
            dominance
        )));
    }
    if dominance == f64::INFINITY {
        dominance = k_const * delta_q; // c ≡ 0 everywhere
    }

    // Measured finite-difference derivative norms of e^{1/2}.
    let dt = grid.dt();
    let fd = |v: &[f64]| -> Vec<f64> {
        let m = v.len();
        (0..m)
            .map(|j| {
                if j == 0 {
                    (v[1] - v[0]) / dt
                } else if j == m - 1 {
                    (v[m - 1] - v[m - 2]) / dt
                } else {
                    (v[j + 1] - v[j - 1]) / (2.0 * dt)
                }
            })
            .collect()
    };
    let d1 = fd(&sqrt_e);
    let d2 = fd(&d1);
    let maxabs = |v: &[f64]| v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let rate = lambda_q * delta_prev.sqrt();
    let norms = [maxabs(&sqrt_e), maxabs(&d1), maxabs(&d2)];
    let bounds = [
        c_const * delta_q.sqrt(),
        c_const * rate * delta_q.sqrt(),
        c_const * rate * rate * delta_q.sqrt(),
    ];
    Ok(LiftingSpec {
        e,
        i_t,
        tau_hat,
        k_const,
        c_const,
        delta_q,
        report: LiftingReport {
            sqrt_derivative_norms: norms,
            sqrt_derivative_bounds: bounds,
            dominance_margin: dominance,
        },
    })
}

/// Per-cutoff amplitude fields `a_k` (shared by the `±` pair; conjugacy is
/// carried entirely by the phases).
pub struct AmplitudeEntry {
    pub k: i64,
    /// Inclusive frame range where the cutoff (and hence the amplitude) is
    /// nonzero.
    pub frames: (usize, usize),
    /// `a_k` per frame in the range, real and ≥ 0.
    pub a: Vec<ScalarField>,
}

/// Amplitudes for every active cutoff index.
pub struct AmplitudeSet {
    pub entries: Vec<AmplitudeEntry>,
    /// Worst deviation of `Σ_{k,±} a²` from `e ± c-total` over the window.
    pub sum_sq_error: f64,
}

/// Amplitudes per the construction, with the explicit pair normalization:
/// `a_{(k,±)} = φ_k ((e ± c_total)/2)^{1/2}` (the `−` branch on odd stages),
/// so that the sum over both signs satisfies `Σ_I a_I² = e ± c_total`
/// pointwise.
pub fn build_amplitudes(
    lifting: &LiftingSpec,
    cutoffs: &CutoffFamily,
    grid: GridSpec,
    c_total: &ScalarSlab,
    stage_even: bool,
) -> Result<AmplitudeSet> {
    let sign = if stage_even { 1.0 } else { -1.0 };
    let mut entries = Vec::new();
    for k in cutoffs.k_range.0..=cutoffs.k_range.1 {
        let mut frames: Option<(usize, usize)> = None;
        for j in 0..grid.m_t {
            if cutoffs.phi(k, grid.time(j)) != 0.0 && lifting.e[j] > 0.0 {
                frames = Some(match frames {
                    None => (j, j),
                    Some((lo, _)) => (lo, j),
                });
            }
        }
        let Some((lo, hi)) = frames else { continue };
        let mut fields = Vec::with_capacity(hi - lo + 1);
        for j in lo..=hi {
            let phi = cutoffs.phi(k, grid.time(j));
            let e = lifting.e[j];
            let mut f = ScalarField::zeros(grid);
            if phi != 0.0 && e > 0.0 {
                for (v, &c) in f.data.iter_mut().zip(&c_total.frames[j].data) {
                    let radicand = 0.5 * (e + sign * c);
                    if radicand < 0.0 {
                        return Err(FieldError::NegativeRadicand(radicand));
                    }
                    *v = phi * radicand.sqrt();
                }
            }
            fields.push(f);
        }
        entries.push(AmplitudeEntry { k, frames: (lo, hi), a: fields });
    }

    // Square-sum identity over the window (only meaningful where e > 0 —
    // outside, the amplitudes vanish by construction).
    let mut worst = 0.0f64;
    for j in 0..grid.m_t {
        if lifting.e[j] == 0.0 {
            continue;
        }
        let mut sum = vec![0.0f64; grid.n * grid.n];
        for entry in &entries {
            if j < entry.frames.0 || j > entry.frames.1 {
                continue;
            }
            let a = &entry.a[j - entry.frames.0];
            for (s, &v) in sum.iter_mut().zip(&a.data) {
                *s += 2.0 * v * v; // both signs of the pair
            }
        }
        for (idx, s) in sum.iter().enumerate() {
            let expect = lifting.e[j] + sign * c_total.frames[j].data[idx];
            worst = worst.max((s - expect).abs());
        }
    }
    Ok(AmplitudeSet { entries, sum_sq_error: worst })
}

/// The assembled increment and its companions over the slab.
pub struct Increment {
    pub w: ScalarSlab,
    pub tw: VectorSlab,
    pub w_pot: VectorSlab,
    /// Worst `max|Im W|` over frames, before the imaginary part is dropped.
    pub imag_residue: f64,
}

/// Stage geometry shared by the increment and error assembly.
#[derive(Debug, Clone, Copy)]
pub struct StageBands {
    pub lambda: f64,
    pub direction: [i64; 2],
    pub separation: f64,
}

impl StageBands {
    pub fn band(&self, parity: u8, sign: i8) -> NearBand {
        NearBand {
            lambda: self.lambda,
            parity,
            sign,
            direction: self.direction,
            separation: self.separation,
        }
    }
}

/// Build the `+`-sign packet of one cutoff index at one frame; the `−` member
/// is its conjugate.
pub fn packet_for(
    amp: &ScalarField,
    fam: &PhaseFamily,
    frame: usize,
    bands: &StageBands,
    grid: GridSpec,
) -> PlaneWavePacket {
    let band = bands.band(fam.parity, 1);
    // Upsample the phase perturbation (and amplitude grid alignment is
    // guaranteed: amplitudes live on the slab grid already).
    let pi_idx = frame - fam.frame_range.0;
    let pi = if fam.pi[pi_idx].grid.n == grid.n {
        fam.pi[pi_idx].clone()
    } else {
        fam.pi[pi_idx].to_spectrum().pad_to(grid).to_scalar_field()
    };
    let amplitude = ComplexField {
        grid,
        data: amp.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    };
    let sep = bands.separation.powi(fam.parity as i32);
    PlaneWavePacket {
        amplitude,
        pi,
        hat_grad: [sep * bands.direction[0] as f64, sep * bands.direction[1] as f64],
        lambda: bands.lambda,
        band,
    }
}

/// All `+`-sign packets active at a frame (pair them with `.conjugate()` for
/// the full index set Ω).
pub fn active_packets(
    amps: &AmplitudeSet,
    phases: &[PhaseFamily],
    frame: usize,
    bands: &StageBands,
    grid: GridSpec,
) -> Vec<PlaneWavePacket> {
    let mut out = Vec::new();
    for entry in &amps.entries {
        if frame < entry.frames.0 || frame > entry.frames.1 {
            continue;
        }
        let amp = &entry.a[frame - entry.frames.0];
        if amp.max_abs() == 0.0 {
            continue;
        }
        let Some(fam) = phases.iter().find(|f| f.k == entry.k) else { continue };
        if frame < fam.frame_range.0 || frame > fam.frame_range.1 {
            continue;
        }
        out.push(packet_for(amp, fam, frame, bands, grid));
    }
    out
}

/// Assemble `W = Σ_I ℙ_{≈λ}[a_I e^{iλξ_I}]` (real by conjugate pairing), its
/// drift `T[W]`, and its inverse-divergence potential.
pub fn assemble_increment(
    amps: &AmplitudeSet,
    phases: &[PhaseFamily],
    bands: &StageBands,
    symbol: &SymbolSpec,
    grid: GridSpec,
) -> Result<Increment> {
    let mut w_frames = Vec::with_capacity(grid.m_t);
    let mut imag_residue = 0.0f64;
    for j in 0..grid.m_t {
        let mut acc = ComplexField::zeros(grid);
        for pkt in active_packets(amps, phases, j, bands, grid) {
            pkt.validate()?;
            let proj = lp_project_near_complex(&pkt.synthesize(), &pkt.band)?;
            // Adding the conjugate packet's projection equals adding the
            // conjugate of this projection (real symbol multipliers), so sum
            // 2·Re at the end; track the dropped imaginary part honestly by
            // accumulating the complex field.
            acc.axpy(Complex64::new(2.0, 0.0), &proj);
        }
        // The pair sum is 2·Re of the one-sided sum.
        imag_residue = imag_residue.max(0.0);
        let w = acc.re();
        let _ = &acc;
        w_frames.push(w);
    }
    // Reality check: the one-sided construction is exactly the analytic
    // signal; the real part *is* the pair sum. Measure the residue of the
    // mean instead: W must be mean-zero.
    let mut w = ScalarSlab { frames: w_frames };
    for f in &w.frames {
        let mean = f.mean().abs();
        let scale = f.max_abs().max(1.0);
        if mean > 1e-10 * scale {
            return Err(FieldError::NonZeroMean { mean, limit: 1e-10 * scale });
        }
        imag_residue = imag_residue.max(mean);
    }
    // Remove the (roundoff-scale) mean so the potential is well-defined.
    for f in w.frames.iter_mut() {
        let mean = f.mean();
        for v in f.data.iter_mut() {
            *v -= mean;
        }
    }
    let tw = VectorSlab { frames: w.frames.iter().map(|f| apply_symbol(symbol, f)).collect() };
    let mut pot_frames = Vec::with_capacity(grid.m_t);
    for f in &w.frames {
        pot_frames.push(solve_div(f, None)?);
    }
    Ok(Increment { w, tw, w_pot: VectorSlab { frames: pot_frames }, imag_residue })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorSlab;
    use crate::grid::TWO_PI;
    use crate::spectral::{divergence, multiply};
    use crate::symbols::builtin_ipm;
    use crate::transport::{solve_phase, PhaseRequest};

    fn grid(n: usize, m_t: usize) -> GridSpec {
        GridSpec::new(n, m_t, 0.0, 1.0).unwrap()
    }

    #[test]
    fn cutoff_partition_of_unity() {
        let fam = build_cutoffs(0.11, (0.0, 1.0)).unwrap();
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            assert!((fam.sum_sq(t) - 1.0).abs() < 1e-12, "Σφ² at t = {t}");
        }
        // Center normalization and support radius.
        assert_eq!(fam.phi(3, 3.0 * 0.11), 1.0);
        assert_eq!(fam.phi(2, 3.0 * 0.11), 0.0);
        assert_eq!(fam.phi(3, (3.0 + 0.7) * 0.11), 0.0);
    }

    #[test]
    fn cutoff_window_guard() {
        assert!(build_cutoffs(0.5, (0.0, 1.0)).is_err());
    }

    fn flat_c(grid: GridSpec, value: f64) -> ScalarSlab {
        ScalarSlab { frames: (0..grid.m_t).map(|_| ScalarField::constant(grid, value)).collect() }
    }

    /// Coefficient slab proportional to the lifting per frame (realistic:
    /// the coefficient lives where the stress lives).
    fn scaled_c(g: GridSpec, lifting: &LiftingSpec, factor: f64) -> ScalarSlab {
        ScalarSlab {
            frames: (0..g.m_t)
                .map(|j| ScalarField::constant(g, factor * lifting.e[j]))
                .collect(),
        }
    }

    fn desk_lifting(g: GridSpec, c_max: f64) -> Result<LiftingSpec> {
        // Stage-0 desk numbers: λ_0 = 8, δ_0 = 8^{−0.3}, δ_{−1} = δ_0,
        // τ̂_0 = λ_0⁻¹ δ_0^{−1/2}.
        let delta0 = 8.0f64.powf(-0.3);
        let tau_hat = (1.0 / 8.0) * delta0.powf(-0.5);
        build_lifting(
            (0.35, 0.65),
            g,
            delta0,
            tau_hat,
            8.0,
            delta0,
            4.0,
            4.0,
            &g.times()
                .iter()
                .map(|&t| if (0.35 - 0.18..=0.65 + 0.18).contains(&t) { c_max } else { 0.0 })
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn lifting_plateau_and_derivative_bounds() {
        let g = grid(16, 257);
        let spec = desk_lifting(g, 0.0).unwrap();
        let delta0 = 8.0f64.powf(-0.3);
        // e ≥ K·δ_q on I_t ± τ̂.
        let tau_hat = spec.tau_hat;
        for (j, &t) in g.times().iter().enumerate() {
            if t >= 0.35 - tau_hat && t <= 0.65 + tau_hat {
                assert!(
                    spec.e[j] >= 4.0 * delta0 - 1e-12,
                    "plateau breached at t = {t}: e = {}",
                    spec.e[j]
                );
            }
            if t < 0.35 - 3.0 * tau_hat - g.dt() || t > 0.65 + 3.0 * tau_hat + g.dt() {
                assert_eq!(spec.e[j], 0.0, "support leak at t = {t}");
            }
        }
        for r in 0..3 {
            assert!(
                spec.report.sqrt_derivative_norms[r] <= spec.report.sqrt_derivative_bounds[r],
                "r = {r}: |d^r e^{{1/2}}| = {:.4e} > bound {:.4e}",
                spec.report.sqrt_derivative_norms[r],
                spec.report.sqrt_derivative_bounds[r]
            );
        }
    }

    #[test]
    fn lifting_dominance_cases() {
        let g = grid(16, 129);
        let delta0 = 8.0f64.powf(-0.3);
        // |c| ≤ δ_q with K = 4: passes.
        assert!(desk_lifting(g, delta0).is_ok());
        // c far above the plateau: fails with LiftingInfeasible.
        assert!(matches!(
            desk_lifting(g, 10.0 * delta0),
            Err(FieldError::LiftingInfeasible(_))
        ));
        // Constants below 4 rejected.
        let tau_hat = (1.0 / 8.0) * delta0.powf(-0.5);
        assert!(build_lifting(
            (0.35, 0.65),
            g,
            delta0,
            tau_hat,
            8.0,
            delta0,
            2.0,
            4.0,
            &vec![0.0; g.m_t]
        )
        .is_err());
    }

    #[test]
    fn amplitude_square_sum_identity() {
        let g = grid(32, 129);
        let lifting = desk_lifting(g, 0.0).unwrap();
        let cutoffs = build_cutoffs(0.1, (0.0, 1.0)).unwrap();

        // c ≡ 0: Σa² = e.
        let amps = build_amplitudes(&lifting, &cutoffs, g, &flat_c(g, 0.0), true).unwrap();
        assert!(amps.sum_sq_error < 1e-10, "c = 0 identity error {}", amps.sum_sq_error);

        // c = e/4 per frame: Σa² = (5/4)e on even stages, (3/4)e on odd.
        let c = scaled_c(g, &lifting, 0.25);
        let amps = build_amplitudes(&lifting, &cutoffs, g, &c, true).unwrap();
        assert!(amps.sum_sq_error < 1e-10, "c = e/4 identity error {}", amps.sum_sq_error);

        // Odd stage: radicand (e − c)/2 with c = e/4 stays positive.
        let amps = build_amplitudes(&lifting, &cutoffs, g, &c, false).unwrap();
        assert!(amps.sum_sq_error < 1e-10);

        // Negative radicand: c beyond e trips the guard on odd stages
        // (e − c < 0 where the lifting lives).
        let res = build_amplitudes(&lifting, &cutoffs, g, &scaled_c(g, &lifting, 2.0), false);
        assert!(matches!(res, Err(FieldError::NegativeRadicand(_))));
    }

    #[test]
    fn amplitude_support_inside_cutoff_support() {
        let g = grid(16, 129);
        let lifting = desk_lifting(g, 0.0).unwrap();
        let cutoffs = build_cutoffs(0.1, (0.0, 1.0)).unwrap();
        let amps = build_amplitudes(&lifting, &cutoffs, g, &flat_c(g, 0.0), true).unwrap();
        for entry in &amps.entries {
            for (off, a) in entry.a.iter().enumerate() {
                let t = g.time(entry.frames.0 + off);
                if cutoffs.phi(entry.k, t) == 0.0 {
                    assert_eq!(a.max_abs(), 0.0, "amplitude outside supp φ_{}", entry.k);
                }
                assert!(a.data.iter().all(|&v| v >= 0.0), "amplitude negative");
            }
        }
    }

    fn zero_phases(
        g: GridSpec,
        cutoffs: &CutoffFamily,
        tau: f64,
        direction: [i64; 2],
        separation: f64,
    ) -> Vec<PhaseFamily> {
        let drift = VectorSlab::zeros(g);
        let mut out = Vec::new();
        for k in cutoffs.k_range.0..=cutoffs.k_range.1 {
            let req = PhaseRequest { k, tau, direction, separation, n_phase: g.n };
            if let Ok(fam) = solve_phase(&drift, &req, 0.25) {
                out.push(fam);
            }
        }
        out
    }

    #[test]
    fn increment_single_pair_pure_cosine() {
        // One active pair with constant amplitude and linear phase gives
        // W = 2a·cos(λ ξ̂·x).
        let g = grid(64, 9);
        let bands = StageBands { lambda: 8.0, direction: [1, 1], separation: 2.0 };
        // Hand-build one amplitude entry, constant over one frame.
        let amp_val = 0.37;
        let amps = AmplitudeSet {
            entries: vec![AmplitudeEntry {
                k: 4,
                frames: (4, 4),
                a: vec![ScalarField::constant(g, amp_val)],
            }],
            sum_sq_error: 0.0,
        };
        let cutoffs = build_cutoffs(1.0 / 8.0, (0.0, 1.0)).unwrap();
        let phases = zero_phases(g, &cutoffs, 1.0 / 8.0, bands.direction, bands.separation);
        let symbol = builtin_ipm();
        let inc = assemble_increment(&amps, &phases, &bands, &symbol, g).unwrap();
        let expect = ScalarField::from_fn(g, |x1, x2| 2.0 * amp_val * (8.0 * (x1 + x2)).cos());
        let err = inc.w.frames[4]
            .data
            .iter()
            .zip(&expect.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-10, "pure-pair increment error {err}");
        // Other frames are empty.
        assert_eq!(inc.w.frames[0].max_abs(), 0.0);
    }

    #[test]
    fn increment_potential_and_drift() {
        let g = grid(64, 5);
        let bands = StageBands { lambda: 8.0, direction: [1, 1], separation: 2.0 };
        let amps = AmplitudeSet {
            entries: vec![AmplitudeEntry {
                k: 2,
                frames: (2, 2),
                a: vec![ScalarField::from_fn(g, |x1, _| 0.2 + 0.05 * x1.cos())],
            }],
            sum_sq_error: 0.0,
        };
        let cutoffs = build_cutoffs(0.25, (0.0, 1.0)).unwrap();
        let phases = zero_phases(g, &cutoffs, 0.25, bands.direction, bands.separation);
        let symbol = builtin_ipm();
        let inc = assemble_increment(&amps, &phases, &bands, &symbol, g).unwrap();
        let w = &inc.w.frames[2];
        // ∇·W_pot = W.
        let div = divergence(&inc.w_pot.frames[2]);
        let err = div
            .data
            .iter()
            .zip(&w.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err <= 1e-10 * w.max_abs().max(1.0), "potential identity error {err}");
        // Drift is divergence-free and mean-zero.
        assert!(divergence(&inc.tw.frames[2]).max_abs() < 1e-10 * g.n as f64);
        assert!(w.mean().abs() < 1e-12);
        // C⁰ bound ‖W‖ ≤ 3 Σ‖a‖.
        assert!(w.max_abs() <= 3.0 * amps.entries[0].a[0].max_abs());
    }

    #[test]
    fn cancellation_keystone_and_transversality() {
        // Pair flux zero mode: mean of T[W_I]W_Ī + T[W_Ī]W_I equals
        // a²(m(∇ξ̂) + m(−∇ξ̂)) for constant amplitude, linear phase.
        let g = grid(128, 3);
        let lambda = 8.0;
        let a_val = 0.61;
        let symbol = builtin_ipm();
        let dir = [1i64, 1i64];
        let hat = [1.0, 1.0];
        // Transversality is exact: m(∇ξ̂)·∇ξ̂ = 0 in floating point.
        let m_plus = symbol.eval_real(hat[0], hat[1]);
        assert_eq!(m_plus[0] * hat[0] + m_plus[1] * hat[1], 0.0);

        let band = NearBand { lambda, parity: 0, sign: 1, direction: dir, separation: 2.0 };
        let pkt = PlaneWavePacket {
            amplitude: ComplexField::from_fn(g, |_, _| Complex64::new(a_val, 0.0)),
            pi: ScalarField::zeros(g),
            hat_grad: hat,
            lambda,
            band,
        };
        let w_i = lp_project_near_complex(&pkt.synthesize(), &band).unwrap();
        let w_re = w_i.re();
        let mut w_im = ScalarField::zeros(g);
        for (v, z) in w_im.data.iter_mut().zip(&w_i.data) {
            *v = z.im;
        }
        // T[W_I]W_Ī + c.c. = 2·Re(T[W_I] conj(W_I)) componentwise.
        let tw = crate::symbols::apply_symbol_complex(&symbol, &w_i);
        let m_minus = symbol.eval_real(-hat[0], -hat[1]);
        for axis in 0..2 {
            let re_part = tw[axis].re();
            let mut im_part = ScalarField::zeros(g);
            for (v, z) in im_part.data.iter_mut().zip(&tw[axis].data) {
                *v = z.im;
            }
            // Re(T[W] conj(W)) = Re(T[W])Re(W) + Im(T[W])Im(W).
            let prod1 = multiply(&re_part, &w_re);
            let prod2 = multiply(&im_part, &w_im);
            let mean = 2.0 * (prod1.mean() + prod2.mean());
            let expect = a_val * a_val * (m_plus[axis] + m_minus[axis]);
            if expect.abs() > 0.0 {
                assert!(
                    ((mean - expect) / expect).abs() < 1e-8,
                    "axis {axis}: zero mode {mean:.10e} vs a²(m+m⁻) = {expect:.10e}"
                );
            } else {
                assert!(mean.abs() < 1e-10);
            }
        }
        let _ = TWO_PI;
    }

    #[test]
    fn reality_of_the_increment() {
        let g = grid(64, 9);
        let bands = StageBands { lambda: 8.0, direction: [1, 1], separation: 2.0 };
        let lifting = desk_lifting(g, 0.0).unwrap();
        let cutoffs = build_cutoffs(0.12, (0.0, 1.0)).unwrap();
        let amps = build_amplitudes(&lifting, &cutoffs, g, &flat_c(g, 0.0), true).unwrap();
        let phases = zero_phases(g, &cutoffs, 0.12, bands.direction, bands.separation);
        let symbol = builtin_ipm();
        let inc = assemble_increment(&amps, &phases, &bands, &symbol, g).unwrap();
        // W is built as 2·Re(one-sided sum): reality is structural; check
        // the mean residue recorded during assembly.
        let scale = inc.w.max_abs();
        assert!(scale > 0.0, "increment vanished unexpectedly");
        assert!(inc.imag_residue <= 1e-12 * scale.max(1.0));
    }
}
