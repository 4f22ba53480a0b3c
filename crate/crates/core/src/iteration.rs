//! The outer iteration: frequency/amplitude schedule, state tuple, error
//! assembly, and the driver that alternates the two update parities.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::field::{ComplexField, ScalarField, ScalarSlab, VectorField, VectorSlab};
use crate::grid::GridSpec;
use crate::increment::{
    active_packets, assemble_increment, build_amplitudes, build_cutoffs, build_lifting,
    LiftingReport, StageBands,
};
use crate::io::{self, LedgerRow, Manifest};
use crate::norms::holder_norm;
use crate::spectral::{
    divergence, fractional_laplacian, gradient, lp_project_leq, lp_project_near_complex, multiply,
    pad_physical_complex, smoothstep, solve_div, unpad_physical_complex,
};
use crate::symbols::{
    apply_symbol, apply_symbol_complex, builtin_ipm, build_frame, decompose_stress, SymbolFrame,
    SymbolSpec,
};
use crate::transport::{flow_mollify_scalars, slab_c0, solve_phase, PhaseFamily, PhaseRequest};
use crate::{FieldError, Result};

/// Geometric frequency/amplitude schedule
/// `λ_q = ⌈λ_0^{b^q}⌉`, `δ_q = λ_q^{−β}`, with the derived life-span,
/// mollification, and kernel scales. Negative stage indices are clamped to 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterSchedule {
    pub lambda0: f64,
    pub b: f64,
    pub beta: f64,
    /// Mollification interpolation order `L ≥ 2`.
    pub l_order: u32,
    /// Dissipation order `γ ∈ [0, 1)` (0 disables the dissipative term).
    pub gamma: f64,
    /// Dissipation coefficient `ν ≥ 0`.
    pub nu: f64,
    /// Number of update stages the schedule must cover.
    pub q_max: usize,
}

impl ParameterSchedule {
    /// Build and validate: frequencies must be strictly increasing and the
    /// life-span conditions must hold for every stage up to `q_max`.
    pub fn new(
        lambda0: f64,
        b: f64,
        beta: f64,
        l_order: u32,
        gamma: f64,
        nu: f64,
        q_max: usize,
    ) -> Result<Self> {
        if !(lambda0 >= 2.0) {
            return Err(FieldError::ScheduleInfeasible(format!(
                "base frequency λ₀ = {lambda0} must be ≥ 2"
            )));
        }
        if !(b >= 1.0) {
            return Err(FieldError::ScheduleInfeasible(format!(
                "growth exponent b = {b} must be ≥ 1"
            )));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(FieldError::ScheduleInfeasible(format!(
                "regularity exponent β = {beta} must lie in (0, 1)"
            )));
        }
        if l_order < 2 {
            return Err(FieldError::ScheduleInfeasible(format!(
                "interpolation order L = {l_order} must be ≥ 2"
            )));
        }
        if !(0.0..1.0).contains(&gamma) || nu < 0.0 {
            return Err(FieldError::ScheduleInfeasible(format!(
                "dissipation (γ, ν) = ({gamma}, {nu}) outside γ ∈ [0,1), ν ≥ 0"
            )));
        }
        let s = ParameterSchedule { lambda0, b, beta, l_order, gamma, nu, q_max };
        for q in 0..=q_max + 2 {
            if s.lambda(q + 1) <= s.lambda(q) {
                return Err(FieldError::ScheduleInfeasible(format!(
                    "frequencies not strictly increasing: λ_{} = {} ≥ λ_{} = {}",
                    q,
                    s.lambda(q),
                    q + 1,
                    s.lambda(q + 1)
                )));
            }
        }
        for q in 0..=q_max {
            let tau = s.tau(q);
            let tau_hat = s.tau_hat(q);
            if tau > tau_hat {
                return Err(FieldError::ScheduleInfeasible(format!(
                    "life-span condition fails at stage {q}: τ_q = {tau:.4e} > \
                     λ_q⁻¹ δ_{{q−1}}^{{−1/2}} = {tau_hat:.4e}"
                )));
            }
            let rhs = s.lambda(q + 1) * s.delta(q).sqrt();
            if 1.0 / tau > rhs {
                return Err(FieldError::ScheduleInfeasible(format!(
                    "fast-oscillation condition fails at stage {q}: τ_q⁻¹ = {:.4e} > \
                     λ_{{q+1}} δ_q^{{1/2}} = {rhs:.4e}",
                    1.0 / tau
                )));
            }
        }
        Ok(s)
    }

    /// `λ_q = ⌈λ_0^{b^q}⌉`.
    pub fn lambda(&self, q: usize) -> f64 {
        self.lambda0.powf(self.b.powi(q as i32)).ceil()
    }

    /// `λ` with negative indices clamped to stage 0.
    pub fn lambda_clamped(&self, q: i64) -> f64 {
        self.lambda(q.max(0) as usize)
    }

    /// `δ_q = λ_q^{−β}`.
    pub fn delta(&self, q: usize) -> f64 {
        self.lambda(q).powf(-self.beta)
    }

    /// `δ` with negative indices clamped to stage 0.
    pub fn delta_clamped(&self, q: i64) -> f64 {
        self.delta(q.max(0) as usize)
    }

    /// Life span `τ_q = λ_{q+1}^{−1/2} λ_{q−1}^{−1/2} δ_q^{−1/4} δ_{q−2}^{−1/4}`.
    pub fn tau(&self, q: usize) -> f64 {
        let qi = q as i64;
        self.lambda_clamped(qi + 1).powf(-0.5)
            * self.lambda_clamped(qi - 1).powf(-0.5)
            * self.delta_clamped(qi).powf(-0.25)
            * self.delta_clamped(qi - 2).powf(-0.25)
    }

    /// Life-span ceiling `τ̂_q = λ_q⁻¹ δ_{q−1}^{−1/2}`.
    pub fn tau_hat(&self, q: usize) -> f64 {
        1.0 / self.lambda(q) * self.delta_clamped(q as i64 - 1).powf(-0.5)
    }

    /// Frequency-truncation scale `μ_q = λ_{q+1}^{1/L} λ_q^{1−1/L}`.
    pub fn mu(&self, q: usize) -> f64 {
        let inv_l = 1.0 / self.l_order as f64;
        self.lambda(q + 1).powf(inv_l) * self.lambda(q).powf(1.0 - inv_l)
    }

    /// Spatial mollification scale `ε_x = (λ_{q+1}⁻¹ λ_q)^{1/L} λ_q⁻¹`.
    pub fn eps_x(&self, q: usize) -> f64 {
        (self.lambda(q) / self.lambda(q + 1)).powf(1.0 / self.l_order as f64) / self.lambda(q)
    }

    /// Temporal mollification scale `ε_t = λ_{q+1}⁻¹ δ_q^{−1/2}`.
    pub fn eps_t(&self, q: usize) -> f64 {
        self.delta(q).powf(-0.5) / self.lambda(q + 1)
    }
}

// ---------------------------------------------------------------------------
// State tuple and helpers
// ---------------------------------------------------------------------------

/// Deformation budget for the transported phases, as a fraction of `|∇ξ̂|`.
const DEFORMATION_LIMIT: f64 = 0.25;
/// Dominance factor used when escalating the lifting plateau beyond `K·δ`.
const DOMINANCE_FACTOR: f64 = 2.5;

/// The sum-difference iteration state: half-sum `P_q`, half-difference `M_q`,
/// and the difference-equation stress `R̃_q` over the space-time slab. The
/// forcing-equation stress `R̄_q` is recomputed on demand (it is updated only
/// passively).
pub struct IterationState {
    /// Completed update stages.
    pub q: usize,
    pub cfg: RunConfig,
    pub schedule: ParameterSchedule,
    pub symbol: SymbolSpec,
    pub frame: SymbolFrame,
    pub grid: GridSpec,
    pub p: ScalarSlab,
    pub m: ScalarSlab,
    pub rtil: VectorSlab,
    pub ledger: Vec<LedgerRow>,
}

/// One measured inductive bound.
#[derive(Debug, Clone, Serialize)]
pub struct BoundMargin {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Diagnostics accompanying one completed stage.
#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub row: LedgerRow,
    pub margins: Vec<BoundMargin>,
    /// `C⁰` mismatch between the assembled stress divergence and the direct
    /// residual of the updated tuple.
    pub closure_error: f64,
    /// `10×` the estimated time-discretization error.
    pub closure_threshold: f64,
    /// Lifting plateau constant actually used (≥ the configured `K`).
    pub k_eff: f64,
    pub lifting: LiftingReport,
    /// `‖c − c_ε‖` of the flow mollification.
    pub coeff_error: f64,
    /// `‖θ̃ − θ̃_ε‖` of the frequency truncation (worst frame).
    pub truncation_error: f64,
    pub pause_residual: f64,
    /// Scaling forms `λ_{q+1}^{−1}τ_q^{−1}δ_q^{1/2}` and
    /// `λ_{q+1}^{−1+γ}δ_q^{1/2}` for audit against the measured norms.
    pub est_rt: f64,
    pub est_rd: f64,
    pub max_deformation: f64,
}

fn symbol_from_config(cfg: &RunConfig) -> Result<SymbolSpec> {
    if !cfg.symbol_table.is_empty() {
        let json = std::fs::read_to_string(&cfg.symbol_table)?;
        return SymbolSpec::from_json_table("table", &json);
    }
    match cfg.symbol_builtin.as_str() {
        "ipm" => Ok(builtin_ipm()),
        other => Err(FieldError::Other(format!("unknown builtin symbol '{other}'"))),
    }
}

/// Second-order time derivative of a slab: centered differences inside,
/// one-sided second-order stencils at the window edges. This is the *single*
/// time-derivative operator shared by stress initialization, error assembly,
/// and the closure check.
pub fn slab_time_derivative(s: &ScalarSlab) -> ScalarSlab {
    let grid = s.grid();
    let m = grid.m_t;
    let dt = grid.dt();
    assert!(m >= 3, "time derivative needs at least 3 frames");
    let mut frames = Vec::with_capacity(m);
    for j in 0..m {
        let mut f = ScalarField::zeros(grid);
        if j == 0 {
            for i in 0..f.data.len() {
                f.data[i] = (-3.0 * s.frames[0].data[i] + 4.0 * s.frames[1].data[i]
                    - s.frames[2].data[i])
                    / (2.0 * dt);
            }
        } else if j == m - 1 {
            for i in 0..f.data.len() {
                f.data[i] = (3.0 * s.frames[m - 1].data[i] - 4.0 * s.frames[m - 2].data[i]
                    + s.frames[m - 3].data[i])
                    / (2.0 * dt);
            }
        } else {
            for i in 0..f.data.len() {
                f.data[i] = (s.frames[j + 1].data[i] - s.frames[j - 1].data[i]) / (2.0 * dt);
            }
        }
        frames.push(f);
    }
    ScalarSlab { frames }
}

/// One frame of [`slab_time_derivative`], computed on demand so the full
/// derivative slab never has to be materialized.
pub fn frame_time_derivative(s: &ScalarSlab, j: usize) -> ScalarField {
    let grid = s.grid();
    let m = grid.m_t;
    let dt = grid.dt();
    assert!(m >= 3, "time derivative needs at least 3 frames");
    let mut f = ScalarField::zeros(grid);
    if j == 0 {
        for i in 0..f.data.len() {
            f.data[i] = (-3.0 * s.frames[0].data[i] + 4.0 * s.frames[1].data[i]
                - s.frames[2].data[i])
                / (2.0 * dt);
        }
    } else if j == m - 1 {
        for i in 0..f.data.len() {
            f.data[i] = (3.0 * s.frames[m - 1].data[i] - 4.0 * s.frames[m - 2].data[i]
                + s.frames[m - 3].data[i])
                / (2.0 * dt);
        }
    } else {
        for i in 0..f.data.len() {
            f.data[i] = (s.frames[j + 1].data[i] - s.frames[j - 1].data[i]) / (2.0 * dt);
        }
    }
    f
}

/// Worst `C⁰` gap between the second- and fourth-order centered time
/// derivatives over the interior frames — the discretization-error estimate
/// behind the closure threshold.
pub fn time_fd_mismatch(s: &ScalarSlab) -> f64 {
    let grid = s.grid();
    let m = grid.m_t;
    let dt = grid.dt();
    if m < 5 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for j in 2..m - 2 {
        for i in 0..s.frames[j].data.len() {
            let d2 = (s.frames[j + 1].data[i] - s.frames[j - 1].data[i]) / (2.0 * dt);
            let d4 = (-s.frames[j + 2].data[i] + 8.0 * s.frames[j + 1].data[i]
                - 8.0 * s.frames[j - 1].data[i]
                + s.frames[j - 2].data[i])
                / (12.0 * dt);
            worst = worst.max((d2 - d4).abs());
        }
    }
    worst
}

/// Alias-free product of two complex fields (padded, like [`multiply`]).
fn multiply_complex(f: &ComplexField, g: &ComplexField) -> ComplexField {
    let mut pf = pad_physical_complex(f);
    let pg = pad_physical_complex(g);
    for (a, &b) in pf.data.iter_mut().zip(&pg.data) {
        *a *= b;
    }
    unpad_physical_complex(&pf, f.grid)
}

/// `u · ∇f` with alias-free products.
fn advect(u: &VectorField, f: &ScalarField) -> ScalarField {
    let g = gradient(f);
    dot_product(u, &g)
}

/// Pointwise inner product of two vector fields (padded products).
fn dot_product(u: &VectorField, v: &VectorField) -> ScalarField {
    let mut s = multiply(&u.components[0], &v.components[0]);
    s.axpy(1.0, &multiply(&u.components[1], &v.components[1]));
    s
}

/// Scalar times vector field (padded products).
fn scalar_times_vector(f: &ScalarField, v: &VectorField) -> VectorField {
    VectorField {
        components: [multiply(f, &v.components[0]), multiply(f, &v.components[1])],
    }
}

/// Scalar field times a constant vector (exact, no padding needed).
fn scalar_along(f: &ScalarField, a: [f64; 2]) -> VectorField {
    let mut out = VectorField::zeros(f.grid);
    for ax in 0..2 {
        out.components[ax].axpy(a[ax], f);
    }
    out
}

fn demean(f: &mut ScalarField) {
    let m = f.mean();
    for v in f.data.iter_mut() {
        *v -= m;
    }
}

/// Direct residual of the difference (M) equation of the relaxed system:
/// `∂_tM + T[P]·∇M + T[M]·∇P + νΛ^γM`, framewise.
pub fn m_equation_residual(
    p: &ScalarSlab,
    m: &ScalarSlab,
    symbol: &SymbolSpec,
    nu: f64,
    gamma: f64,
) -> Result<ScalarSlab> {
    let dtm = slab_time_derivative(m);
    let mut frames = Vec::with_capacity(m.frames.len());
    for j in 0..m.frames.len() {
        let tp = apply_symbol(symbol, &p.frames[j]);
        let tm = apply_symbol(symbol, &m.frames[j]);
        let mut r = dtm.frames[j].clone();
        r.axpy(1.0, &advect(&tp, &m.frames[j]));
        r.axpy(1.0, &advect(&tm, &p.frames[j]));
        if nu > 0.0 {
            r.axpy(nu, &fractional_laplacian(&m.frames[j], gamma)?);
        }
        frames.push(r);
    }
    Ok(ScalarSlab { frames })
}

/// Direct residual of the sum (P) equation:
/// `∂_tP + T[P]·∇P + T[M]·∇M + νΛ^γP`, framewise.
pub fn p_equation_residual(
    p: &ScalarSlab,
    m: &ScalarSlab,
    symbol: &SymbolSpec,
    nu: f64,
    gamma: f64,
) -> Result<ScalarSlab> {
    let dtp = slab_time_derivative(p);
    let mut frames = Vec::with_capacity(p.frames.len());
    for j in 0..p.frames.len() {
        let tp = apply_symbol(symbol, &p.frames[j]);
        let tm = apply_symbol(symbol, &m.frames[j]);
        let mut r = dtp.frames[j].clone();
        r.axpy(1.0, &advect(&tp, &p.frames[j]));
        r.axpy(1.0, &advect(&tm, &m.frames[j]));
        if nu > 0.0 {
            r.axpy(nu, &fractional_laplacian(&p.frames[j], gamma)?);
        }
        frames.push(r);
    }
    Ok(ScalarSlab { frames })
}

fn invert_residual(res: &ScalarSlab) -> Result<VectorSlab> {
    let mut frames = Vec::with_capacity(res.frames.len());
    for f in &res.frames {
        let mut g = f.clone();
        demean(&mut g);
        frames.push(solve_div(&g, None)?);
    }
    Ok(VectorSlab { frames })
}

/// Recompute the forcing-equation stress `R̄_q` from the current tuple.
pub fn compute_rbar(state: &IterationState) -> Result<VectorSlab> {
    let res = p_equation_residual(&state.p, &state.m, &state.symbol, state.cfg.nu, state.cfg.gamma)?;
    invert_residual(&res)
}

// ---------------------------------------------------------------------------
// Initial tuple
// ---------------------------------------------------------------------------

/// Smooth time bump equal to 1 in the middle of `[lo, hi]` and 0 outside,
/// with C¹ smoothstep ramps over the outer thirds.
fn time_bump(t: f64, lo: f64, hi: f64) -> f64 {
    if t <= lo || t >= hi {
        return 0.0;
    }
    let w = (hi - lo) / 3.0;
    let up = smoothstep(((t - lo) / w).clamp(0.0, 1.0));
    let down = smoothstep(((hi - t) / w).clamp(0.0, 1.0));
    up * down
}

/// Build the level-0 tuple: low-frequency seeded `P_0`, `M_0` with compact
/// time support, stresses obtained by divergence-inverting the direct PDE
/// residuals, plus a constant-in-space coefficient boost along `A₁` (its
/// divergence vanishes, so the relaxed system still holds exactly).
pub fn init_tuple(cfg: &RunConfig) -> Result<IterationState> {
    let schedule = cfg.schedule()?;
    let grid = GridSpec::new(cfg.n, cfg.m_t, cfg.t0, cfg.t1)?;
    let symbol = symbol_from_config(cfg)?;
    let candidates = cfg.candidates().map_err(FieldError::Other)?;
    let frame = build_frame(&symbol, &candidates)?;

    let window = cfg.t1 - cfg.t0;
    let lo = cfg.t0 + cfg.init_support.0 * window;
    let hi = cfg.t0 + cfg.init_support.1 * window;
    let amp = cfg.seed_amplitude * schedule.delta_clamped(-1).sqrt();

    // Low-frequency genericity modes drawn from the run seed.
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut draw_modes = || {
        let mut modes = Vec::new();
        for _ in 0..3 {
            let k1 = rng.gen_range(-2i64..=2);
            let k2 = rng.gen_range(-2i64..=2);
            let a: f64 = rng.gen_range(-1.0..1.0);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            if (k1, k2) != (0, 0) {
                modes.push((k1 as f64, k2 as f64, 0.1 * a, phase));
            }
        }
        modes
    };
    let modes_p = draw_modes();
    let modes_m = draw_modes();
    let spatial = |x1: f64, x2: f64, base_axis: usize, modes: &[(f64, f64, f64, f64)]| {
        let mut v = if base_axis == 0 { x1.cos() } else { x2.cos() };
        for &(k1, k2, a, phase) in modes {
            v += a * (k1 * x1 + k2 * x2 + phase).cos();
        }
        v
    };

    let build = |axis: usize, modes: &[(f64, f64, f64, f64)]| -> ScalarSlab {
        let mut frames = Vec::with_capacity(grid.m_t);
        for j in 0..grid.m_t {
            let chi = time_bump(grid.time(j), lo, hi);
            let mut f =
                ScalarField::from_fn(grid, |x1, x2| amp * chi * spatial(x1, x2, axis, modes));
            demean(&mut f);
            frames.push(f);
        }
        ScalarSlab { frames }
    };
    let p = build(0, &modes_p);
    let m = build(1, &modes_m);
    if m.max_abs() == 0.0 {
        return Err(FieldError::Other(
            "initial difference seed M₀ must not vanish identically".into(),
        ));
    }

    let res = m_equation_residual(&p, &m, &symbol, cfg.nu, cfg.gamma)?;
    let mut rtil = invert_residual(&res)?;
    // Coefficient boost along A₁ (constant in space per frame).
    if cfg.init_boost != 0.0 {
        for j in 0..grid.m_t {
            let b = cfg.init_boost * time_bump(grid.time(j), lo, hi);
            for ax in 0..2 {
                for v in rtil.frames[j].components[ax].data.iter_mut() {
                    *v += b * frame.a1[ax];
                }
            }
        }
    }
    log::info!(
        "level 0: ‖P₀‖ = {:.3e}, ‖M₀‖ = {:.3e}, ‖R̃₀‖ = {:.3e}",
        slab_c0(&p),
        slab_c0(&m),
        rtil.max_abs()
    );
    Ok(IterationState {
        q: 0,
        cfg: cfg.clone(),
        schedule,
        symbol,
        frame,
        grid,
        p,
        m,
        rtil,
        ledger: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// One update stage
// ---------------------------------------------------------------------------

/// Execute one sum-difference update stage. On any error the state is left
/// unchanged (all candidate fields are committed only after the closure
/// check passes).
pub fn step(state: &mut IterationState) -> Result<StepReport> {
    let q = state.q;
    let cfg = state.cfg.clone();
    let grid = state.grid;
    let sch = state.schedule.clone();
    let even = q % 2 == 0;
    let parity = if even { 0usize } else { 1 };
    let sign_c = if even { 1.0 } else { -1.0 };
    let osc = if even { -2.0 } else { 2.0 };
    let a_vec = state.frame.a_vec(parity);
    let dir = state.frame.direction(parity);
    let lambda_next = sch.lambda(q + 1);
    let delta_next = sch.delta(q + 1);
    let tau = sch.tau(q);
    let tau_hat = sch.tau_hat(q);
    let mu = sch.mu(q);

    // Stage-direction decomposition of the stress: the coefficient along the
    // stage direction is cancelled; the other component is carried.
    let mut c_raw_frames = Vec::with_capacity(grid.m_t);
    let mut carry_frames = Vec::with_capacity(grid.m_t);
    for f in &state.rtil.frames {
        let (c1, c2) = decompose_stress(f, &state.frame);
        let (cancel, other) = if even { (c1, c2) } else { (c2, c1) };
        carry_frames.push(other);
        c_raw_frames.push(cancel);
    }
    let carry_a = if even { state.frame.a2 } else { state.frame.a1 };
    let c_raw = ScalarSlab { frames: c_raw_frames };
    let carry = ScalarSlab { frames: carry_frames };

    // Degenerate input: nothing to cancel and nothing carried.
    if state.rtil.max_abs() == 0.0 {
        let row = LedgerRow {
            q,
            r_t: 0.0,
            r_d: 0.0,
            r_n: 0.0,
            r_o: [0.0; 6],
            r_m: 0.0,
            c_coeff: 0.0,
            rtil_total: 0.0,
            delta_target: sch.delta(q + 2),
            holder_alpha: 0.0,
            pause_residual: 0.0,
        };
        state.q += 1;
        state.ledger.push(row.clone());
        return Ok(StepReport {
            row,
            margins: Vec::new(),
            closure_error: 0.0,
            closure_threshold: 0.0,
            k_eff: cfg.k_const,
            lifting: LiftingReport {
                sqrt_derivative_norms: [0.0; 3],
                sqrt_derivative_bounds: [0.0; 3],
                dominance_margin: 0.0,
            },
            coeff_error: 0.0,
            truncation_error: 0.0,
            pause_residual: 0.0,
            est_rt: 0.0,
            est_rd: 0.0,
            max_deformation: 0.0,
        });
    }

    // Mollified drift ũ_{q,ε} = T[ℙ_{≤μ}(P∓M)] (θ̃ on even stages, θ on odd).
    let comb = |j: usize| -> ScalarField {
        let mut f = state.p.frames[j].clone();
        f.axpy(if even { -1.0 } else { 1.0 }, &state.m.frames[j]);
        f
    };
    let mut truncation_error = 0.0f64;
    let mut u_eps_frames = Vec::with_capacity(grid.m_t);
    for j in 0..grid.m_t {
        let th = comb(j);
        let th_e = lp_project_leq(&th, mu);
        let mut d = th.clone();
        d.axpy(-1.0, &th_e);
        truncation_error = truncation_error.max(d.max_abs());
        u_eps_frames.push(apply_symbol(&state.symbol, &th_e));
    }
    let u_eps = VectorSlab { frames: u_eps_frames };

    // Flow-adapted mollification of the coefficient to cancel.
    let (mut moll, _eps_x_used, _clamped) = flow_mollify_scalars(
        &[&c_raw],
        &u_eps,
        sch.eps_x(q),
        sch.eps_t(q),
        cfg.flow_resolution,
    )?;
    let c_eps = moll.pop().unwrap();
    let mut coeff_error = 0.0f64;
    for (a, b) in c_eps.frames.iter().zip(&c_raw.frames) {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        coeff_error = coeff_error.max(d.max_abs());
    }

    // Stress time support (I_t) from the coefficient and carried component.
    let mut frame_scale = vec![0.0f64; grid.m_t];
    for j in 0..grid.m_t {
        frame_scale[j] = c_raw.frames[j]
            .max_abs()
            .max(c_eps.frames[j].max_abs())
            .max(carry.frames[j].max_abs());
    }
    let global = frame_scale.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-12 * global;
    let first = frame_scale.iter().position(|&v| v > tol);
    let last = frame_scale.iter().rposition(|&v| v > tol);
    let (Some(jf), Some(jl)) = (first, last) else {
        return Err(FieldError::Other("stress support vanished unexpectedly".into()));
    };
    let i_t = (grid.time(jf), grid.time(jl));
    let mid = 0.5 * (i_t.0 + i_t.1);
    let half = 0.5 * (i_t.1 - i_t.0);

    // Mask the mollified coefficient to the lifting plateau `I_t ± τ̂` (the
    // radicand sign control lives there); anything outside is deferred into
    // the mollification-difference term.
    let plateau = |t: f64| (t - mid).abs() <= half + tau_hat;
    let mut c_cancel_frames = Vec::with_capacity(grid.m_t);
    let mut c_frame_max = vec![0.0f64; grid.m_t];
    for j in 0..grid.m_t {
        if plateau(grid.time(j)) {
            c_frame_max[j] = c_eps.frames[j].max_abs();
            c_cancel_frames.push(c_eps.frames[j].clone());
        } else {
            c_cancel_frames.push(ScalarField::zeros(grid));
        }
    }
    let c_cancel = ScalarSlab { frames: c_cancel_frames };
    drop(c_eps);

    // Lifting, with the plateau constant escalated if needed for dominance.
    let c_max_global = c_frame_max.iter().cloned().fold(0.0f64, f64::max);
    let mut k_eff = cfg.k_const;
    let needed = DOMINANCE_FACTOR * c_max_global / delta_next;
    if k_eff < needed {
        log::info!("stage {q}: lifting constant escalated K = {:.3} → {:.3} for dominance", k_eff, needed);
        k_eff = needed;
    }
    let lifting = build_lifting(
        i_t,
        grid,
        delta_next,
        tau_hat,
        sch.lambda(q),
        sch.delta_clamped(q as i64 - 1),
        k_eff,
        cfg.c_const,
        &c_frame_max,
    )?;

    // Cutoffs, amplitudes, phases.
    let cutoffs = build_cutoffs(tau, (grid.t0, grid.t1))?;
    let amps = build_amplitudes(&lifting, &cutoffs, grid, &c_cancel, even)?;
    let n_phase = cfg.phase_resolution.min(grid.n);
    let mut phases: Vec<PhaseFamily> = Vec::new();
    let mut max_deformation = 0.0f64;
    for entry in &amps.entries {
        let fam = solve_phase(
            &u_eps,
            &PhaseRequest {
                k: entry.k,
                tau,
                direction: dir,
                separation: cfg.separation,
                n_phase,
            },
            DEFORMATION_LIMIT,
        )?;
        max_deformation = max_deformation.max(fam.max_deformation);
        phases.push(fam);
    }
    let bands = StageBands { lambda: lambda_next, direction: dir, separation: cfg.separation };

    // The oscillatory increment.
    let inc = assemble_increment(&amps, &phases, &bands, &state.symbol, grid)?;
    // The divergence potential of W is not needed here; free it immediately
    // (a full vector slab at production resolution).
    let crate::increment::Increment { w: inc_w, .. } = inc;

    // ---- error assembly (one pass over the frames) ----
    let mut n_rt = 0.0f64;
    let mut n_rd = 0.0f64;
    let mut n_rn = 0.0f64;
    let mut n_ro = [0.0f64; 6];
    let mut n_rm = 0.0f64;
    let mut gradw_max = 0.0f64;
    let mut rtil_next_frames: Vec<VectorField> = Vec::with_capacity(grid.m_t);
    for j in 0..grid.m_t {
        let w_j = &inc_w.frames[j];
        let tw_j = &apply_symbol(&state.symbol, w_j);
        let grad_w = gradient(w_j);
        gradw_max = gradw_max.max(grad_w.max_abs());
        let th_j = comb(j);
        let th_e_j = lp_project_leq(&th_j, mu);
        let u_j = apply_symbol(&state.symbol, &th_j);
        let u_e_j = &u_eps.frames[j];

        // Transport, dissipation, neighbour-gradient scalars.
        let mut s_t = frame_time_derivative(&inc_w, j);
        s_t.axpy(1.0, &dot_product(u_e_j, &grad_w));
        let s_d = if cfg.nu > 0.0 {
            let mut d = fractional_laplacian(w_j, cfg.gamma)?;
            d.scale(cfg.nu);
            Some(d)
        } else {
            None
        };
        let s_n = advect(tw_j, &th_e_j);

        // Mollification differences in potential (vector) form:
        // (u − u_ε)W + T[W](θ̃ − θ̃_ε); their divergence is the advective
        // difference exactly (the drifts are divergence-free).
        let mut du = u_j;
        du.axpy(-1.0, u_e_j);
        let mut dth = th_j;
        dth.axpy(-1.0, &th_e_j);
        let mut rm_drift = scalar_times_vector(w_j, &du);
        let other = scalar_times_vector(&dth, tw_j);
        rm_drift.axpy(1.0, &other);

        // Pair fluxes and pointwise principal data from the packets.
        let pkts = active_packets(&amps, &phases, j, &bands, grid);
        let mut f_pair = VectorField::zeros(grid);
        let mut sum_abs2 = ScalarField::zeros(grid);
        let mut u_def = VectorField::zeros(grid);
        let mut r_o1 = VectorField::zeros(grid);
        for pkt in &pkts {
            pkt.validate()?;
            let wp = lp_project_near_complex(&pkt.synthesize(), &pkt.band)?;
            let vp = apply_symbol_complex(&state.symbol, &wp);
            let wp_conj = wp.conj();
            for ax in 0..2 {
                let prod = multiply_complex(&vp[ax], &wp_conj);
                f_pair.components[ax].axpy(2.0, &prod.re());
            }
            sum_abs2.axpy(1.0, &multiply_complex(&wp, &wp_conj).re());
            // Pointwise deformed principal symbol (m is even: both pair
            // members contribute m(∇ξ)).
            let gxi = pkt.grad_xi();
            let wk = wp.re();
            let a_re = pkt.amplitude.re();
            for idx in 0..wk.data.len() {
                let mv = state
                    .symbol
                    .eval_real(gxi.components[0].data[idx], gxi.components[1].data[idx]);
                let a2 = a_re.data[idx] * a_re.data[idx];
                for ax in 0..2 {
                    u_def.components[ax].data[idx] += 2.0 * wk.data[idx] * mv[ax];
                    r_o1.components[ax].data[idx] += a2 * (2.0 * mv[ax] - a_vec[ax]);
                }
            }
        }

        // Principal flux from the bookkeeping identity Σ_Ω a² = e ± c.
        let e_j = lifting.e[j];
        let mut f_princ = VectorField::zeros(grid);
        for ax in 0..2 {
            for (v, &c) in f_princ.components[ax].data.iter_mut().zip(&c_cancel.frames[j].data) {
                *v = 0.5 * (e_j + sign_c * c) * a_vec[ax];
            }
        }
        let mut r_o2 = f_pair.clone();
        r_o2.axpy(-1.0, &f_princ);
        r_o2.axpy(-1.0, &r_o1);

        // Cross-interaction scalars.
        let s_cross = {
            let mut s = dot_product(tw_j, &grad_w);
            s.axpy(-1.0, &divergence(&f_pair));
            s
        };
        // Transversality: principal-hat drift against ∇W, pair part removed.
        let w_grad_w = [
            multiply(w_j, &grad_w.components[0]),
            multiply(w_j, &grad_w.components[1]),
        ];
        let grad_sum = gradient(&sum_abs2);
        let mut s3 = ScalarField::zeros(grid);
        for ax in 0..2 {
            s3.axpy(0.5 * a_vec[ax], &w_grad_w[ax]);
            s3.axpy(-a_vec[ax], &grad_sum.components[ax]);
        }
        // Symbol difference driven by the phase deformation.
        let mut udiff = u_def.clone();
        for ax in 0..2 {
            udiff.components[ax].axpy(-0.5 * a_vec[ax], w_j);
        }
        let s4 = dot_product(&udiff, &grad_w);
        // Amplitude-gradient residual drift.
        let mut tdiff = tw_j.clone();
        tdiff.axpy(-1.0, &u_def);
        let s6 = dot_product(&tdiff, &grad_w);
        // Exact remainder (pair-exclusion corrections).
        let mut s5 = s_cross;
        s5.axpy(-1.0, &s3);
        s5.axpy(-1.0, &s4);
        s5.axpy(-1.0, &s6);

        // Invert the scalars.
        let inv = |mut s: ScalarField| -> Result<VectorField> {
            demean(&mut s);
            solve_div(&s, None)
        };
        let rt = inv(s_t)?;
        let rn = inv(s_n)?;
        let rd = match s_d {
            Some(s) => Some(inv(s)?),
            None => None,
        };
        let r3 = inv(s3)?;
        let r4 = inv(s4)?;
        let r5 = inv(s5)?;
        let r6 = inv(s6)?;

        // Stress-difference bookkeeping: carried component plus
        // (c_raw − c_cancel)·A (mollification difference and deferred part).
        let mut dc = c_raw.frames[j].clone();
        dc.axpy(-1.0, &c_cancel.frames[j]);
        let rm_stress = scalar_along(&dc, a_vec);

        // Norms.
        n_rt = n_rt.max(rt.max_abs());
        n_rn = n_rn.max(rn.max_abs());
        if let Some(rd) = &rd {
            n_rd = n_rd.max(rd.max_abs());
        }
        n_ro[0] = n_ro[0].max(2.0 * r_o1.max_abs());
        n_ro[1] = n_ro[1].max(2.0 * r_o2.max_abs());
        n_ro[2] = n_ro[2].max(2.0 * r3.max_abs());
        n_ro[3] = n_ro[3].max(2.0 * r4.max_abs());
        n_ro[4] = n_ro[4].max(2.0 * r5.max_abs());
        n_ro[5] = n_ro[5].max(2.0 * r6.max_abs());
        {
            let mut rm = rm_drift.clone();
            rm.axpy(1.0, &rm_stress);
            n_rm = n_rm.max(rm.max_abs());
        }

        // Assemble the new stress frame. The constant-in-space `e(t)·A` part
        // of the cancellation is dropped (its divergence vanishes).
        let mut out = scalar_along(&carry.frames[j], carry_a);
        out.axpy(1.0, &rm_stress);
        out.axpy(1.0, &rt);
        out.axpy(1.0, &rn);
        if let Some(rd) = &rd {
            out.axpy(1.0, rd);
        }
        out.axpy(1.0, &rm_drift);
        out.axpy(osc, &r_o1);
        out.axpy(osc, &r_o2);
        out.axpy(osc, &r3);
        out.axpy(osc, &r4);
        out.axpy(osc, &r5);
        out.axpy(osc, &r6);
        rtil_next_frames.push(out);
    }
    let rtil_next = VectorSlab { frames: rtil_next_frames };
    // Release everything the commit and checks below no longer need; the
    // remaining slabs at production scale are what bounds peak memory.
    drop(carry);
    drop(c_raw);
    drop(c_cancel);
    drop(u_eps);

    // Candidate update with the stage-parity signs.
    let mut p_next_frames = Vec::with_capacity(grid.m_t);
    let mut m_next_frames = Vec::with_capacity(grid.m_t);
    for j in 0..grid.m_t {
        let mut pf = state.p.frames[j].clone();
        pf.axpy(if even { -1.0 } else { 1.0 }, &inc_w.frames[j]);
        p_next_frames.push(pf);
        let mut mf = state.m.frames[j].clone();
        mf.axpy(1.0, &inc_w.frames[j]);
        m_next_frames.push(mf);
    }
    let p_next = ScalarSlab { frames: p_next_frames };
    let m_next = ScalarSlab { frames: m_next_frames };

    // Closure check: the assembled stress divergence must reproduce the
    // direct residual of the updated tuple within 10× the estimated time
    // discretization error (both sides share the same operators, so the real
    // gap is roundoff; a larger gap signals an implementation bug).
    let direct = m_equation_residual(&p_next, &m_next, &state.symbol, cfg.nu, cfg.gamma)?;
    let mut closure_error = 0.0f64;
    for j in 0..grid.m_t {
        let mut d = divergence(&rtil_next.frames[j]);
        d.axpy(-1.0, &direct.frames[j]);
        // Compare up to a spatial constant (solve_div drops roundoff means).
        demean(&mut d);
        closure_error = closure_error.max(d.max_abs());
    }
    let closure_threshold = 10.0 * time_fd_mismatch(&m_next).max(1e-9 * (1.0 + rtil_next.max_abs()));
    if closure_error > closure_threshold {
        return Err(FieldError::ClosureFailure(format!(
            "stage {q}: assembled vs direct residual differ by {closure_error:.3e} \
             (threshold {closure_threshold:.3e})"
        )));
    }

    // Pause identity.
    let mut pause_residual = 0.0f64;
    for j in 0..grid.m_t {
        let mut before = state.p.frames[j].clone();
        let mut after = p_next.frames[j].clone();
        if even {
            // θ pauses: (P−W)+(M+W) = P+M.
            before.axpy(1.0, &state.m.frames[j]);
            after.axpy(1.0, &m_next.frames[j]);
        } else {
            // θ̃ pauses: (P+W)−(M+W) = P−M.
            before.axpy(-1.0, &state.m.frames[j]);
            after.axpy(-1.0, &m_next.frames[j]);
        }
        after.axpy(-1.0, &before);
        pause_residual = pause_residual.max(after.max_abs());
    }

    // Ledger row.
    let rtil_total = rtil_next.max_abs();
    let next_parity = (q + 1) % 2;
    let mut c_coeff = 0.0f64;
    for f in &rtil_next.frames {
        let (c1, c2) = decompose_stress(f, &state.frame);
        c_coeff = c_coeff.max(if next_parity == 0 { c1.max_abs() } else { c2.max_abs() });
    }
    let alpha = cfg.beta / (2.0 * cfg.b);
    let mut holder_alpha = 0.0f64;
    for j in [grid.m_t / 4, grid.m_t / 2, 3 * grid.m_t / 4] {
        let mut th = p_next.frames[j].clone();
        th.axpy(1.0, &m_next.frames[j]);
        holder_alpha = holder_alpha.max(holder_norm(&th, alpha));
    }
    let row = LedgerRow {
        q,
        r_t: n_rt,
        r_d: n_rd,
        r_n: n_rn,
        r_o: n_ro,
        r_m: n_rm,
        c_coeff,
        rtil_total,
        delta_target: sch.delta(q + 2),
        holder_alpha,
        pause_residual,
    };

    // Inductive-bound margins (report-only).
    let budget = cfg.budget;
    let delta_q = sch.delta(q);
    let mut margins = Vec::new();
    let mut push = |name: &str, measured: f64, bound: f64| {
        margins.push(BoundMargin { name: name.into(), measured, bound, pass: measured <= bound });
    };
    push("pause-identity", pause_residual, 1e-12);
    push("correction-c0", slab_c0(&inc_w), budget * delta_q.sqrt());
    push("correction-gradient", gradw_max, budget * lambda_next * delta_q.sqrt());
    {
        let mut wh = 0.0f64;
        for j in [grid.m_t / 4, grid.m_t / 2, 3 * grid.m_t / 4] {
            wh = wh.max(holder_norm(&inc_w.frames[j], alpha));
        }
        push("correction-holder", wh, budget * lambda_next.powf(alpha) * delta_q.sqrt());
    }
    push("c-coefficient", c_coeff, budget * delta_next);
    push("stress-total", rtil_total, budget * sch.delta(q + 2));
    {
        // Divergence-free drifts on a sample of frames.
        let mut worst = 0.0f64;
        let mut scale = 1.0f64;
        for j in [0, grid.m_t / 2, grid.m_t - 1] {
            let u = apply_symbol(&state.symbol, &p_next.frames[j]);
            worst = worst.max(divergence(&u).max_abs());
            scale = scale.max((grid.n as f64 / 2.0) * p_next.frames[j].max_abs());
        }
        push("drift-divergence", worst, 1e-10 * scale);
    }
    {
        // Support propagation: the new stress lives inside supp e ± one step.
        let dt = grid.dt();
        let mut outside = 0.0f64;
        for j in 0..grid.m_t {
            let t = grid.time(j);
            let live = lifting.e[j] > 0.0
                || (j > 0 && lifting.e[j - 1] > 0.0)
                || (j + 1 < grid.m_t && lifting.e[j + 1] > 0.0)
                || (t - mid).abs() <= half + 3.0 * tau_hat + dt;
            if !live {
                outside = outside.max(rtil_next.frames[j].max_abs());
            }
        }
        push("support-propagation", outside, 1e-10 * (1.0 + rtil_total));
    }
    for mgn in &margins {
        if !mgn.pass {
            log::warn!(
                "stage {q}: inductive bound '{}' exceeded: {:.3e} > {:.3e}",
                mgn.name,
                mgn.measured,
                mgn.bound
            );
        }
    }

    // Commit.
    state.p = p_next;
    state.m = m_next;
    state.rtil = rtil_next;
    state.q = q + 1;
    state.ledger.push(row.clone());

    Ok(StepReport {
        row,
        margins,
        closure_error,
        closure_threshold,
        k_eff,
        lifting: lifting.report.clone(),
        coeff_error,
        truncation_error,
        pause_residual,
        est_rt: tau.recip() / lambda_next * delta_q.sqrt(),
        est_rd: cfg.nu * lambda_next.powf(cfg.gamma - 1.0) * delta_q.sqrt(),
        max_deformation,
    })
}

/// State-level inductive invariants (report-only): stress budget, drift
/// divergence, decomposition reassembly.
pub fn verify_inductive(state: &IterationState) -> Vec<BoundMargin> {
    let mut out = Vec::new();
    let sch = &state.schedule;
    let total = state.rtil.max_abs();
    out.push(BoundMargin {
        name: "stress-total".into(),
        measured: total,
        bound: state.cfg.budget * sch.delta(state.q + 1),
        pass: total <= state.cfg.budget * sch.delta(state.q + 1),
    });
    let mut worst = 0.0f64;
    let mut scale = 1.0f64;
    let grid = state.grid;
    for j in [0, grid.m_t / 2, grid.m_t - 1] {
        let u = apply_symbol(&state.symbol, &state.m.frames[j]);
        worst = worst.max(divergence(&u).max_abs());
        scale = scale.max((grid.n as f64 / 2.0) * state.m.frames[j].max_abs());
    }
    out.push(BoundMargin {
        name: "drift-divergence".into(),
        measured: worst,
        bound: 1e-10 * scale,
        pass: worst <= 1e-10 * scale,
    });
    let mut reassembly = 0.0f64;
    for f in &state.rtil.frames {
        let (c1, c2) = decompose_stress(f, &state.frame);
        let mut r = crate::symbols::reassemble_stress(&c1, &c2, &state.frame);
        r.axpy(-1.0, f);
        reassembly = reassembly.max(r.max_abs());
    }
    out.push(BoundMargin {
        name: "decomposition-reassembly".into(),
        measured: reassembly,
        bound: 1e-12 * (1.0 + total),
        pass: reassembly <= 1e-12 * (1.0 + total),
    });
    out
}

// ---------------------------------------------------------------------------
// Run driver, checkpoints, resume
// ---------------------------------------------------------------------------

/// A failed run, pointing at the last good checkpoint.
#[derive(Debug)]
pub struct RunFailure {
    pub error: FieldError,
    pub last_checkpoint: Option<PathBuf>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.last_checkpoint {
            Some(p) => write!(f, "{} (last checkpoint: {})", self.error, p.display()),
            None => write!(f, "{}", self.error),
        }
    }
}

/// Result of a complete (or resumed) run.
pub struct RunOutcome {
    pub state: IterationState,
    pub reports: Vec<StepReport>,
    /// `‖θ_Q − θ̃_Q‖_{C⁰} = 2‖M_Q‖_{C⁰}`.
    pub discrepancy: f64,
    /// `‖2M₀‖_{C⁰}` reference for the non-uniqueness audit.
    pub m0_reference: f64,
    /// `C⁰` norm of the forcing `f = ∇·R̄_Q`.
    pub forcing_norm: f64,
    pub out_dir: PathBuf,
}

/// Write a checkpoint of the current state under `out_dir/stage_qqq/`.
pub fn write_checkpoint(state: &IterationState, out_dir: &Path) -> Result<PathBuf> {
    let dir = io::stage_dir(out_dir, state.q);
    std::fs::create_dir_all(&dir)?;
    io::write_scalar_slab(&dir.join("p.wsf"), "P", &state.p)?;
    io::write_scalar_slab(&dir.join("m.wsf"), "M", &state.m)?;
    io::write_vector_slab(&dir.join("rtil.wsf"), "Rtil", &state.rtil)?;
    io::write_manifest(
        &dir,
        &Manifest {
            q: state.q,
            schedule: state.schedule.clone(),
            seed: state.cfg.seed,
            norms: (slab_c0(&state.p), slab_c0(&state.m), state.rtil.max_abs()),
            files: vec!["p.wsf".into(), "m.wsf".into(), "rtil.wsf".into()],
        },
    )?;
    Ok(dir)
}

/// Load the newest checkpoint under `out_dir` (config is read from the
/// `config.txt` written at run start).
pub fn load_state(out_dir: &Path) -> Result<IterationState> {
    let cfg = crate::config::parse_config(&out_dir.join("config.txt"))
        .map_err(|v| FieldError::Other(format!("config: {}", v.join("; "))))?;
    let mut found: Option<usize> = None;
    for q in 0..=cfg.q_steps {
        if io::stage_dir(out_dir, q).join("state.json").exists() {
            found = Some(q);
        }
    }
    let Some(q) = found else {
        return Err(FieldError::Other(format!(
            "no checkpoint found under {}",
            out_dir.display()
        )));
    };
    let dir = io::stage_dir(out_dir, q);
    let manifest = io::read_manifest(&dir)?;
    let (_, p) = io::read_scalar_slab(&dir.join("p.wsf"))?;
    let (_, m) = io::read_scalar_slab(&dir.join("m.wsf"))?;
    let (_, rtil) = io::read_vector_slab(&dir.join("rtil.wsf"))?;
    let grid = p.grid();
    let symbol = symbol_from_config(&cfg)?;
    let candidates = cfg.candidates().map_err(FieldError::Other)?;
    let frame = build_frame(&symbol, &candidates)?;
    let ledger_path = out_dir.join("ledger.csv");
    let mut ledger = if ledger_path.exists() { io::read_ledger(&ledger_path)? } else { Vec::new() };
    ledger.truncate(q);
    Ok(IterationState {
        q: manifest.q,
        schedule: manifest.schedule,
        cfg,
        symbol,
        frame,
        grid,
        p,
        m,
        rtil,
        ledger,
    })
}

fn drive(
    mut state: IterationState,
    out_dir: PathBuf,
) -> std::result::Result<RunOutcome, RunFailure> {
    let fail = |error: FieldError, q: usize| RunFailure {
        error,
        last_checkpoint: Some(io::stage_dir(&out_dir, q)),
    };
    let m0_reference = if state.q == 0 {
        2.0 * slab_c0(&state.m)
    } else {
        // Resumed runs lose M₀; fall back on the manifest-free estimate.
        2.0 * slab_c0(&state.m)
    };
    let mut reports = Vec::new();
    while state.q < state.cfg.q_steps {
        let q_before = state.q;
        let report = step(&mut state).map_err(|e| fail(e, q_before))?;
        io::write_ledger(&out_dir.join("ledger.csv"), &state.ledger)
            .map_err(|e| fail(e, q_before))?;
        let dir = write_checkpoint(&state, &out_dir).map_err(|e| fail(e, q_before))?;
        crate::io::atomic_write(&dir.join("report.json"), |w| {
            serde_json::to_writer_pretty(w, &report)
                .map_err(|e| FieldError::Other(format!("report write: {e}")))
        })
        .map_err(|e| fail(e, state.q))?;
        log::info!(
            "stage {} complete: ‖R̃‖ = {:.3e} (target δ = {:.3e})",
            q_before,
            report.row.rtil_total,
            report.row.delta_target
        );
        reports.push(report);
    }
    // Final artifacts: forcing stress and non-uniqueness audit.
    let q_final = state.q;
    let rbar = compute_rbar(&state).map_err(|e| fail(e, q_final))?;
    let mut forcing_norm = 0.0f64;
    for f in &rbar.frames {
        forcing_norm = forcing_norm.max(divergence(f).max_abs());
    }
    let dir = io::stage_dir(&out_dir, state.q);
    std::fs::create_dir_all(&dir).map_err(|e| fail(e.into(), q_final))?;
    io::write_vector_slab(&dir.join("rbar.wsf"), "Rbar", &rbar).map_err(|e| fail(e, q_final))?;
    let discrepancy = 2.0 * slab_c0(&state.m);
    Ok(RunOutcome { state, reports, discrepancy, m0_reference, forcing_norm, out_dir })
}

/// Execute a full run: initialize, iterate `q_steps` stages with per-stage
/// checkpoints and ledger updates, and emit the final forcing stress.
pub fn run(cfg: &RunConfig) -> std::result::Result<RunOutcome, RunFailure> {
    let out_dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| RunFailure { error: e.into(), last_checkpoint: None })?;
    std::fs::write(out_dir.join("config.txt"), cfg.emit())
        .map_err(|e| RunFailure { error: e.into(), last_checkpoint: None })?;
    let state = init_tuple(cfg).map_err(|e| RunFailure { error: e, last_checkpoint: None })?;
    write_checkpoint(&state, &out_dir)
        .map_err(|e| RunFailure { error: e, last_checkpoint: None })?;
    if state.q == 0 && !state.ledger.is_empty() {
        unreachable!();
    }
    drive(state, out_dir)
}

/// Resume from the newest checkpoint under `out_dir` and complete the run.
pub fn resume(out_dir: &Path) -> std::result::Result<RunOutcome, RunFailure> {
    let state =
        load_state(out_dir).map_err(|e| RunFailure { error: e, last_checkpoint: None })?;
    drive(state, out_dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_traits::One;

    fn desk() -> ParameterSchedule {
        ParameterSchedule::new(8.0, 1.5, 0.3, 2, 0.0, 0.0, 2).unwrap()
    }

    #[test]
    fn frequency_ladder_matches_hand_values() {
        let s = desk();
        // 8, ⌈8^1.5⌉ = 23, ⌈8^2.25⌉ = 108, ⌈8^3.375⌉ = 1117.
        assert_eq!(s.lambda(0), 8.0);
        assert_eq!(s.lambda(1), 23.0);
        assert_eq!(s.lambda(2), 108.0);
        assert_eq!(s.lambda(3), 1117.0);
    }

    /// Integer k-th root of a BigInt (floor), by Newton iteration.
    fn iroot(x: &BigInt, k: u32) -> BigInt {
        if x <= &BigInt::one() {
            return x.clone();
        }
        let bits = x.bits();
        let mut guess = BigInt::one() << (bits / k as u64 + 1);
        loop {
            let pow = guess.pow(k - 1);
            let next = ((&guess * (k - 1)) + x / &pow) / k;
            if next >= guess {
                return guess;
            }
            guess = next;
        }
    }

    #[test]
    fn tau_matches_high_precision_integer_oracle() {
        // τ_1 = λ_2^{−1/2} λ_0^{−1/2} δ_1^{−1/4} δ_0^{−1/4} with β = 3/10:
        // δ_1^{−1/4} = 23^{3/40}, δ_0^{−1/4} = 8^{3/40}. Compute
        // τ_1 · 10^30 via integer 40th roots of exact big integers.
        let s = desk();
        let tau1 = s.tau(1);

        // τ_1^40 = (23·8)^3 / (108·8)^20, so τ_1 = iroot(scaled, 40) with
        // scaling 10^(30·40) in the numerator.
        let num = BigInt::from(23u32 * 8).pow(3) * BigInt::from(10u32).pow(30 * 40);
        let den = BigInt::from(108u32 * 8).pow(20);
        let scaled = num / den;
        let oracle_int = iroot(&scaled, 40);
        // Convert to f64 through a string to avoid intermediate overflow.
        let oracle = oracle_int.to_string().parse::<f64>().unwrap() * 1e-30;
        assert!(
            ((tau1 - oracle) / oracle).abs() < 1e-12,
            "τ_1 = {tau1:.15e} vs oracle {oracle:.15e}"
        );
    }

    #[test]
    fn derived_scales_are_consistent() {
        let s = desk();
        // μ_q between λ_q and λ_{q+1}.
        for q in 0..=2 {
            assert!(s.mu(q) > s.lambda(q) && s.mu(q) < s.lambda(q + 1));
            assert!(s.eps_x(q) < 1.0 / s.lambda(q));
            assert!(s.eps_t(q) < s.tau(q));
            assert!(s.tau(q) <= s.tau_hat(q));
            assert!(1.0 / s.tau(q) <= s.lambda(q + 1) * s.delta(q).sqrt());
        }
        // δ decreasing, λ increasing.
        assert!(s.delta(1) < s.delta(0));
    }

    #[test]
    fn infeasible_parameters_are_rejected() {
        assert!(ParameterSchedule::new(1.0, 1.5, 0.3, 2, 0.0, 0.0, 2).is_err());
        assert!(ParameterSchedule::new(8.0, 0.5, 0.3, 2, 0.0, 0.0, 2).is_err());
        assert!(ParameterSchedule::new(8.0, 1.5, 1.5, 2, 0.0, 0.0, 2).is_err());
        assert!(ParameterSchedule::new(8.0, 1.5, 0.3, 1, 0.0, 0.0, 2).is_err());
        assert!(ParameterSchedule::new(8.0, 1.5, 0.3, 2, 1.2, 1.0, 2).is_err());
    }

    #[test]
    fn clamped_indices_freeze_at_stage_zero() {
        let s = desk();
        assert_eq!(s.lambda_clamped(-3), s.lambda(0));
        assert_eq!(s.delta_clamped(-1), s.delta(0));
    }
}

#[cfg(test)]
mod engine_tests {
    use super::*;

    fn tiny_config() -> RunConfig {
        RunConfig {
            n: 32,
            m_t: 12,
            lambda0: 4.0,
            b: 1.5,
            beta: 0.3,
            q_steps: 0,
            flow_resolution: 32,
            phase_resolution: 32,
            ..RunConfig::default()
        }
    }

    /// The initial stress is an exact divergence potential of the direct
    /// difference-equation residual (up to the constant boost, whose
    /// divergence vanishes).
    #[test]
    fn initial_stress_closes_exactly() {
        let cfg = tiny_config();
        let state = init_tuple(&cfg).unwrap();
        let res = m_equation_residual(&state.p, &state.m, &state.symbol, cfg.nu, cfg.gamma).unwrap();
        let mut worst = 0.0f64;
        for j in 0..state.grid.m_t {
            let mut d = divergence(&state.rtil.frames[j]);
            d.axpy(-1.0, &res.frames[j]);
            demean(&mut d);
            worst = worst.max(d.max_abs());
        }
        assert!(worst < 1e-9, "initial closure gap {worst:.3e}");
        assert!(slab_c0(&state.m) > 0.0);
    }

    #[test]
    fn vanishing_difference_seed_rejected() {
        let cfg = RunConfig { seed_amplitude: 0.0, ..tiny_config() };
        let err = match init_tuple(&cfg) {
            Err(e) => e,
            Ok(_) => panic!("zero seed must be rejected"),
        };
        assert!(err.to_string().contains("M₀"), "unexpected error: {err}");
    }

    /// One full update stage at a small scale: closure holds, the paused
    /// combination is untouched to roundoff, and the stage commits.
    #[test]
    fn single_stage_closes_and_pauses() {
        let cfg = RunConfig {
            n: 64,
            m_t: 24,
            lambda0: 4.0,
            b: 1.5,
            beta: 0.3,
            q_steps: 1,
            flow_resolution: 32,
            phase_resolution: 32,
            ..RunConfig::default()
        };
        let mut state = init_tuple(&cfg).unwrap();
        let r0 = state.rtil.max_abs();
        assert!(r0 > 0.0);
        let report = step(&mut state).unwrap();
        assert_eq!(state.q, 1);
        assert!(report.closure_error <= report.closure_threshold);
        assert!(
            report.pause_residual <= 1e-12,
            "pause residual {:.3e}",
            report.pause_residual
        );
        assert_eq!(state.ledger.len(), 1);
        assert!(report.row.rtil_total.is_finite());
        // After an even stage the stored cancel-direction coefficient was
        // removed on the plateau; the report records finite error norms.
        assert!(report.row.r_t > 0.0);
    }

    /// A zero-stage run returns the initial tuple and writes the level-0
    /// checkpoint plus the forcing stress.
    #[test]
    fn zero_stage_run_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            output_dir: dir.path().join("out").to_string_lossy().into_owned(),
            ..tiny_config()
        };
        let outcome = run(&cfg).unwrap();
        assert_eq!(outcome.state.q, 0);
        assert!(outcome.discrepancy > 0.0);
        assert!(io::stage_dir(&outcome.out_dir, 0).join("state.json").exists());
        assert!(io::stage_dir(&outcome.out_dir, 0).join("rbar.wsf").exists());
        let loaded = load_state(&outcome.out_dir).unwrap();
        assert_eq!(loaded.q, 0);
        let mut d = loaded.p.frames[3].clone();
        d.axpy(-1.0, &outcome.state.p.frames[3]);
        assert_eq!(d.max_abs(), 0.0, "checkpoint roundtrip must be exact");
    }

    /// Running two stages in one go and running one stage, extending the
    /// config, and resuming must produce bit-identical ledgers.
    #[test]
    fn resume_matches_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let base = RunConfig {
            n: 128,
            m_t: 24,
            lambda0: 4.0,
            b: 1.5,
            beta: 0.3,
            flow_resolution: 32,
            phase_resolution: 32,
            ..RunConfig::default()
        };
        let cfg_full = RunConfig {
            q_steps: 2,
            output_dir: dir.path().join("full").to_string_lossy().into_owned(),
            ..base.clone()
        };
        let full = run(&cfg_full).unwrap();
        let cfg_part = RunConfig {
            q_steps: 1,
            output_dir: dir.path().join("part").to_string_lossy().into_owned(),
            ..base
        };
        let part = run(&cfg_part).unwrap();
        // Extend the run window and resume from the stage-1 checkpoint.
        let extended = RunConfig { q_steps: 2, ..cfg_part };
        std::fs::write(part.out_dir.join("config.txt"), extended.emit()).unwrap();
        let resumed = resume(&part.out_dir).unwrap();
        assert_eq!(resumed.state.q, 2);
        let a = std::fs::read(full.out_dir.join("ledger.csv")).unwrap();
        let b = std::fs::read(resumed.out_dir.join("ledger.csv")).unwrap();
        assert_eq!(a, b, "resumed ledger must be bit-identical");
    }
}
