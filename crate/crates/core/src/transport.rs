//! Coarse-scale flow maps, phase-function transport, and the two
//! regularization pipelines: frequency truncation of the state and
//! flow-adapted space-time mollification of the stress.

use serde::Serialize;

use crate::field::{ScalarField, ScalarSlab, VectorField, VectorSlab};
use crate::grid::{GridSpec, TWO_PI};
use crate::norms::{c0_norm, ck_norm};
use crate::spectral::{divergence, gradient, lp_project_leq};
use crate::symbols::{apply_symbol, SymbolSpec};
use crate::{FieldError, Result};

/// Spectral upsampling factor behind the bicubic point interpolants.
const INTERP_UPSAMPLE: usize = 4;

/// A point interpolant for one scalar frame: the field is spectrally
/// upsampled once, then evaluated by periodic bicubic (Catmull–Rom)
/// interpolation on the fine grid.
pub struct FieldInterp {
    n_fine: usize,
    data: Vec<f64>,
}

fn catmull_rom(t: f64) -> [f64; 4] {
    // Weights for samples at offsets −1, 0, 1, 2 with t ∈ [0, 1).
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

impl FieldInterp {
    pub fn new(f: &ScalarField) -> Self {
        let n = f.grid.n;
        let n_fine = n * INTERP_UPSAMPLE;
        let fine_grid = GridSpec { n: n_fine, ..f.grid };
        let data = f.to_spectrum().pad_to(fine_grid).to_scalar_field().data;
        FieldInterp { n_fine, data }
    }

    /// Evaluate at an arbitrary point of the torus.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let n = self.n_fine;
        let h = TWO_PI / n as f64;
        let g1 = (x[0] / h).rem_euclid(n as f64);
        let g2 = (x[1] / h).rem_euclid(n as f64);
        let i0 = g1.floor() as i64;
        let j0 = g2.floor() as i64;
        let w1 = catmull_rom(g1 - i0 as f64);
        let w2 = catmull_rom(g2 - j0 as f64);
        let mut acc = 0.0;
        for (di, wi) in w1.iter().enumerate() {
            let ii = (i0 + di as i64 - 1).rem_euclid(n as i64) as usize;
            let row = ii * n;
            let mut racc = 0.0;
            for (dj, wj) in w2.iter().enumerate() {
                let jj = (j0 + dj as i64 - 1).rem_euclid(n as i64) as usize;
                racc += wj * self.data[row + jj];
            }
            acc += wi * racc;
        }
        acc
    }
}

/// A lazily-built family of per-frame vector interpolants over a slab,
/// evaluated with cubic (Catmull–Rom) interpolation in time.
///
/// Frames may first be restricted to a coarser spectral grid (`n_sample`) to
/// bound memory; the restriction is exact for drift fields whose content fits.
pub struct SlabSampler {
    grid: GridSpec,
    n_sample: usize,
    frames: Vec<std::sync::OnceLock<[FieldInterp; 2]>>,
    source: VectorSlab,
}

impl SlabSampler {
    pub fn new(drift: &VectorSlab) -> Self {
        Self::with_resolution(drift, drift.grid().n)
    }

    /// `n_sample ≤ n`: frames are spectrally truncated to `n_sample` before
    /// interpolant construction.
    pub fn with_resolution(drift: &VectorSlab, n_sample: usize) -> Self {
        let grid = drift.grid();
        SlabSampler {
            grid,
            n_sample: n_sample.min(grid.n).max(8),
            frames: (0..grid.m_t).map(|_| std::sync::OnceLock::new()).collect(),
            source: drift.clone(),
        }
    }

    fn frame(&self, j: usize) -> &[FieldInterp; 2] {
        let j = j.min(self.grid.m_t - 1);
        self.frames[j].get_or_init(|| {
            let build = |f: &ScalarField| {
                if self.n_sample == self.grid.n {
                    FieldInterp::new(f)
                } else {
                    let coarse = GridSpec { n: self.n_sample, ..self.grid };
                    FieldInterp::new(&f.to_spectrum().truncate_to(coarse).to_scalar_field())
                }
            };
            let v = &self.source.frames[j];
            [build(&v.components[0]), build(&v.components[1])]
        })
    }

    /// Velocity at an arbitrary space-time point (cubic in time in the
    /// interior, clamped at the window edges).
    pub fn velocity(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let dt = self.grid.dt();
        let s = ((t - self.grid.t0) / dt).clamp(0.0, (self.grid.m_t - 1) as f64);
        let j0 = (s.floor() as usize).min(self.grid.m_t - 1);
        let frac = s - j0 as f64;
        if frac.abs() < 1e-13 {
            let fr = self.frame(j0);
            return [fr[0].eval(x), fr[1].eval(x)];
        }
        let w = catmull_rom(frac);
        let mut out = [0.0f64; 2];
        for (d, wd) in w.iter().enumerate() {
            if *wd == 0.0 {
                continue;
            }
            let j = (j0 as i64 + d as i64 - 1).clamp(0, self.grid.m_t as i64 - 1) as usize;
            let fr = self.frame(j);
            out[0] += wd * fr[0].eval(x);
            out[1] += wd * fr[1].eval(x);
        }
        out
    }
}

/// The coarse-scale flow of a divergence-free drift slab.
pub struct FlowMap {
    sampler: SlabSampler,
    grid: GridSpec,
}

impl FlowMap {
    /// Build a flow map, checking that the drift frames are divergence-free.
    pub fn new(drift: &VectorSlab) -> Result<Self> {
        let scale = drift.max_abs().max(f64::MIN_POSITIVE);
        for (j, frame) in drift.frames.iter().enumerate() {
            let div = divergence(frame).max_abs();
            if div > 1e-10 * scale * frame.grid().n as f64 {
                return Err(FieldError::Other(format!(
                    "drift frame {j} is not divergence-free: max|∇·u| = {div:.3e}"
                )));
            }
        }
        Ok(FlowMap { sampler: SlabSampler::new(drift), grid: drift.grid() })
    }

    /// Build without the divergence check, at reduced sampling resolution
    /// (used by the mollification pipeline on already-validated drifts).
    pub fn new_unchecked(drift: &VectorSlab, n_sample: usize) -> Self {
        FlowMap { sampler: SlabSampler::with_resolution(drift, n_sample), grid: drift.grid() }
    }

    pub fn sampler(&self) -> &SlabSampler {
        &self.sampler
    }

    /// `Φ(x, s; t)`: the position at time `s` of the trajectory that passes
    /// through `x` at time `t`. Fourth-order Runge–Kutta with step ≤ the slab
    /// time step.
    pub fn advance(&self, x: [f64; 2], s: f64, t: f64) -> Result<[f64; 2]> {
        if !self.grid.contains_time(s) {
            return Err(FieldError::OutOfWindow(s));
        }
        if !self.grid.contains_time(t) {
            return Err(FieldError::OutOfWindow(t));
        }
        let span = s - t;
        let steps = (span.abs() / self.grid.dt()).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let mut pos = x;
        let mut time = t;
        for _ in 0..steps {
            pos = self.rk4_step(pos, time, h);
            time += h;
        }
        pos[0] = pos[0].rem_euclid(TWO_PI);
        pos[1] = pos[1].rem_euclid(TWO_PI);
        Ok(pos)
    }

    fn rk4_step(&self, x: [f64; 2], t: f64, h: f64) -> [f64; 2] {
        let f = |p: [f64; 2], tt: f64| self.sampler.velocity(p, tt);
        let k1 = f(x, t);
        let k2 = f([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]], t + 0.5 * h);
        let k3 = f([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]], t + 0.5 * h);
        let k4 = f([x[0] + h * k3[0], x[1] + h * k3[1]], t + h);
        [
            x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }
}

/// Convenience wrapper for the one-shot flow advance of the module API.
pub fn advance_flow(drift: &VectorSlab, x: [f64; 2], s: f64, t: f64) -> Result<[f64; 2]> {
    FlowMap::new(drift)?.advance(x, s, t)
}

/// One phase family `ξ_I = ξ̂_I + π_I`: the linear profile `ξ̂_{(k,±)} =
/// ± sep^{[k]} ξ⁽ʲ⁾·x` plus a periodic perturbation transported by the
/// mollified drift. Only the `+` member is stored; the conjugate has
/// `π_{Ī} = −π_I` by construction.
pub struct PhaseFamily {
    /// Cutoff index `k`.
    pub k: i64,
    /// Parity `[k] ∈ {0, 1}`.
    pub parity: u8,
    /// Constant gradient of the linear profile for the `+` member.
    pub hat_grad: [f64; 2],
    /// Frame range (inclusive) on the slab grid where the family lives.
    pub frame_range: (usize, usize),
    /// Periodic perturbation per frame (zero outside `frame_range`), for the
    /// `+` member, on the phase grid (`n_phase ≤ n`).
    pub pi: Vec<ScalarField>,
    /// Gradient of the perturbation per frame on the phase grid.
    pub grad_pi: Vec<VectorField>,
    /// Measured max deformation `|∇ξ_I − ∇ξ̂_I| / |∇ξ̂_I|` over the life window.
    pub max_deformation: f64,
}

impl PhaseFamily {
    /// Deformation-checked full gradient `∇ξ_I` at a frame, on the phase grid.
    pub fn grad_xi(&self, frame: usize) -> VectorField {
        let idx = frame - self.frame_range.0;
        let mut g = self.grad_pi[idx].clone();
        for axis in 0..2 {
            for v in g.components[axis].data.iter_mut() {
                *v += self.hat_grad[axis];
            }
        }
        g
    }
}

/// Parameters for one phase solve.
pub struct PhaseRequest {
    /// Cutoff index `k`.
    pub k: i64,
    /// Life-span scale `τ_q`.
    pub tau: f64,
    /// Stage direction `ξ⁽ʲ⁾`.
    pub direction: [i64; 2],
    /// Parity separation factor (10 in the construction).
    pub separation: f64,
    /// Resolution for the perturbation (`≤ n`).
    pub n_phase: usize,
}

/// Solve the phase transport for index `(k, +)`: evolve the periodic
/// perturbation `π` with source `−ũ_ε·∇ξ̂` by backward semi-Lagrangian steps,
/// anchored at the frame nearest `kτ_q`.
pub fn solve_phase(
    drift_eps: &VectorSlab,
    req: &PhaseRequest,
    deformation_limit: f64,
) -> Result<PhaseFamily> {
    let grid = drift_eps.grid();
    let parity = (req.k.rem_euclid(2)) as u8;
    let sep = req.separation.powi(parity as i32);
    let hat_grad = [sep * req.direction[0] as f64, sep * req.direction[1] as f64];
    let t_anchor = req.k as f64 * req.tau;
    // The family must have support inside the slab; life windows that stick
    // out past the window edges are clamped (the cutoff vanishes there).
    if t_anchor < grid.t0 - 2.0 / 3.0 * req.tau || t_anchor > grid.t1 + 2.0 / 3.0 * req.tau {
        return Err(FieldError::OutOfWindow(t_anchor));
    }
    let t_lo = (t_anchor - 2.0 / 3.0 * req.tau).max(grid.t0);
    let t_hi = (t_anchor + 2.0 / 3.0 * req.tau).min(grid.t1);
    let dt = grid.dt();
    let f_lo = ((t_lo - grid.t0) / dt).floor().max(0.0) as usize;
    let f_hi = (((t_hi - grid.t0) / dt).ceil() as usize).min(grid.m_t - 1);
    let f_anchor = (((t_anchor - grid.t0) / dt).round() as usize).clamp(f_lo, f_hi);

    let phase_grid = GridSpec { n: req.n_phase.min(grid.n), ..grid };
    let sampler = SlabSampler::with_resolution(drift_eps, grid.n.min(2 * req.n_phase));

    let n_frames = f_hi - f_lo + 1;
    let mut pi: Vec<ScalarField> = vec![ScalarField::zeros(phase_grid); n_frames];

    // March from the anchor frame outward in both directions. One backward
    // semi-Lagrangian step per frame: find the foot point with an RK4
    // characteristic step, interpolate π there, and add the trapezoidal
    // source increment −ũ_ε·∇ξ̂ along the characteristic.
    let hat = hat_grad;
    let march = |from: usize, to: usize, pi: &mut Vec<ScalarField>| {
        let t_from = grid.time(from);
        let t_to = grid.time(to);
        let h = t_to - t_from;
        let prev = FieldInterp::new(&pi[from - f_lo]);
        let n = phase_grid.n;
        let dx = phase_grid.dx();
        let mut next = ScalarField::zeros(phase_grid);
        for i in 0..n {
            for j in 0..n {
                let x = [dx * i as f64, dx * j as f64];
                // Backward RK4 characteristic step from (x, t_to) to t_from.
                let f = |p: [f64; 2], tt: f64| sampler.velocity(p, tt);
                let k1 = f(x, t_to);
                let k2 = f([x[0] - 0.5 * h * k1[0], x[1] - 0.5 * h * k1[1]], t_to - 0.5 * h);
                let k3 = f([x[0] - 0.5 * h * k2[0], x[1] - 0.5 * h * k2[1]], t_to - 0.5 * h);
                let k4 = f([x[0] - h * k3[0], x[1] - h * k3[1]], t_from);
                let foot = [
                    x[0] - h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                    x[1] - h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
                ];
                let u_foot = f(foot, t_from);
                let u_here = k1;
                let source = -0.5
                    * ((u_foot[0] + u_here[0]) * hat[0] + (u_foot[1] + u_here[1]) * hat[1]);
                next.data[i * n + j] = prev.eval(foot) + h * source;
            }
        }
        pi[to - f_lo] = next;
    };

    for j in f_anchor..f_hi {
        march(j, j + 1, &mut pi);
    }
    for j in (f_lo + 1..=f_anchor).rev() {
        march(j, j - 1, &mut pi);
    }

    let grad_pi: Vec<VectorField> = pi.iter().map(gradient).collect();
    let hat_norm = (hat_grad[0] * hat_grad[0] + hat_grad[1] * hat_grad[1]).sqrt();
    let mut max_def = 0.0f64;
    for g in &grad_pi {
        let m = g.max_abs();
        max_def = max_def.max(m / hat_norm);
    }
    if max_def > deformation_limit {
        return Err(FieldError::DeformationExceeded {
            measured: max_def * hat_norm,
            limit: deformation_limit * hat_norm,
        });
    }
    Ok(PhaseFamily {
        k: req.k,
        parity,
        hat_grad,
        frame_range: (f_lo, f_hi),
        pi,
        grad_pi,
        max_deformation: max_def,
    })
}

/// Report accompanying a flow mollification.
#[derive(Debug, Clone, Serialize)]
pub struct MollifyReport {
    pub eps_x: f64,
    pub eps_t: f64,
    /// Applied spatial scale after clamping to grid resolution.
    pub eps_x_used: f64,
    /// `‖R*_ε − R*‖_{C⁰}` over the slab.
    pub stress_error: f64,
    /// `‖c_ε − c‖_{C⁰}` over the slab.
    pub coeff_error: f64,
    /// True when `eps_x` was clamped up to `2·dx`.
    pub eps_x_clamped: bool,
}

/// Smooth compactly supported bump profile `(1 − r²)³` on `r ≤ 1` (C² at the
/// boundary); normalization is discrete, so constants are preserved exactly.
fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        let w = 1.0 - r2;
        w * w * w
    }
}

/// Spatial mollification `η_{ε} * f` by the periodized discrete bump kernel,
/// applied spectrally with exact unit mass.
pub fn spatial_mollify(f: &ScalarField, eps: f64) -> ScalarField {
    let grid = f.grid;
    let n = grid.n;
    // Discrete kernel sampled on the grid, periodized (support radius eps).
    let mut kernel = ScalarField::zeros(grid);
    let dx = grid.dx();
    let reach = (eps / dx).ceil() as i64 + 1;
    let mut total = 0.0;
    for di in -reach..=reach {
        for dj in -reach..=reach {
            let rx = di as f64 * dx;
            let ry = dj as f64 * dx;
            let v = bump((rx * rx + ry * ry) / (eps * eps));
            if v > 0.0 {
                let i = di.rem_euclid(n as i64) as usize;
                let j = dj.rem_euclid(n as i64) as usize;
                kernel.data[i * n + j] += v;
                total += v;
            }
        }
    }
    kernel.scale(1.0 / total);
    // Convolution = product of spectra times n² (kernel spectrum is the DFT
    // of the mass-normalized kernel).
    let mut fs = f.to_spectrum();
    let ks = kernel.to_spectrum();
    let n2 = (n * n) as f64;
    for (a, b) in fs.data.iter_mut().zip(&ks.data) {
        *a *= b * n2;
    }
    fs.to_scalar_field()
}

/// Inputs to [`flow_mollify`].
pub struct FlowMollifyInput<'a> {
    /// Residual stress component `R*` over the slab.
    pub r_star: &'a VectorSlab,
    /// Frame coefficient `c` over the slab.
    pub c1: &'a ScalarSlab,
    /// Advecting drift `ũ_q` over the slab.
    pub drift: &'a VectorSlab,
    pub eps_x: f64,
    pub eps_t: f64,
    /// Spatial resolution for the trajectory quadrature (`≤ n`); the averaged
    /// fields are smooth by design and are spectrally upsampled back to `n`.
    pub n_flow: usize,
}

/// Flow-adapted mollification of a list of scalar slabs sharing one grid:
/// spatial smoothing at scale `ε_x`, then a time average along the
/// trajectories of `drift` with the kernel `ρ_{ε_t}`. Returns the mollified
/// slabs plus `(eps_x_used, clamped)`.
pub fn flow_mollify_scalars(
    fields: &[&ScalarSlab],
    drift: &VectorSlab,
    eps_x_req: f64,
    eps_t: f64,
    n_flow: usize,
) -> Result<(Vec<ScalarSlab>, f64, bool)> {
    let grid = drift.grid();
    let dx = grid.dx();
    let mut eps_x = eps_x_req;
    let mut clamped = false;
    if eps_x < 2.0 * dx {
        log::warn!("mollification scale eps_x = {eps_x:.3e} clamped to 2·dx = {:.3e}", 2.0 * dx);
        eps_x = 2.0 * dx;
        clamped = true;
    }
    if eps_t > (grid.t1 - grid.t0) / 4.0 {
        return Err(FieldError::UnderResolved(format!(
            "eps_t = {eps_t:.3e} exceeds a quarter of the window"
        )));
    }

    // Stage 1: spatial mollification, frame by frame.
    let smooth: Vec<ScalarSlab> = fields
        .iter()
        .map(|s| ScalarSlab { frames: s.frames.iter().map(|f| spatial_mollify(f, eps_x)).collect() })
        .collect();

    // Stage 2: trajectory time average on the reduced flow grid.
    let dt = grid.dt();
    let reach = (eps_t / dt).floor() as i64;
    if reach == 0 {
        // Kernel support shorter than a frame: time average degenerates to
        // the identity (single-node quadrature).
        return Ok((smooth, eps_x, clamped));
    }

    let n_flow = n_flow.min(grid.n).max(8);
    let flow_grid = GridSpec { n: n_flow, ..grid };
    let flow = FlowMap::new_unchecked(drift, n_flow);

    // Discrete time weights ρ_{ε_t}(jΔt), normalized.
    let mut weights = Vec::new();
    let mut total_w = 0.0;
    for j in -reach..=reach {
        let s = j as f64 * dt / eps_t;
        let w = bump(s * s);
        weights.push(w);
        total_w += w;
    }
    for w in weights.iter_mut() {
        *w /= total_w;
    }

    // Per-field, per-frame interpolants of the spatially mollified fields,
    // built on demand and cached.
    let n_fields = smooth.len();
    let interps: Vec<Vec<std::sync::OnceLock<FieldInterp>>> = (0..n_fields)
        .map(|_| (0..grid.m_t).map(|_| std::sync::OnceLock::new()).collect())
        .collect();
    let reduce = |f: &ScalarField| -> FieldInterp {
        FieldInterp::new(&f.to_spectrum().truncate_to(flow_grid).to_scalar_field())
    };
    let at = |fi: usize, j: usize| interps[fi][j].get_or_init(|| reduce(&smooth[fi].frames[j]));

    let nf = flow_grid.n;
    let fdx = flow_grid.dx();
    let mut out_frames: Vec<Vec<ScalarField>> = (0..n_fields).map(|_| Vec::new()).collect();
    for anchor in 0..grid.m_t {
        let t_anchor = grid.time(anchor);
        let mut acc: Vec<Vec<f64>> = (0..n_fields).map(|_| vec![0.0f64; nf * nf]).collect();
        // Frame indices touched by the kernel, clamped to the slab; clamped
        // nodes sample the edge frame along the (still advancing) trajectory.
        for idx in 0..nf * nf {
            let i = idx / nf;
            let j = idx % nf;
            let x0 = [fdx * i as f64, fdx * j as f64];
            // Center node.
            let w0 = weights[reach as usize];
            for fi in 0..n_fields {
                acc[fi][idx] += w0 * at(fi, anchor).eval(x0);
            }
            // Forward nodes.
            let mut pos = x0;
            for step in 1..=reach {
                let t_from = t_anchor + (step - 1) as f64 * dt;
                let t_to = t_anchor + step as f64 * dt;
                pos = rk4_point(&flow, pos, t_from, t_to - t_from);
                let frame = ((anchor as i64 + step).clamp(0, grid.m_t as i64 - 1)) as usize;
                let w = weights[(reach + step) as usize];
                for fi in 0..n_fields {
                    acc[fi][idx] += w * at(fi, frame).eval(pos);
                }
            }
            // Backward nodes.
            pos = x0;
            for step in 1..=reach {
                let t_from = t_anchor - (step - 1) as f64 * dt;
                let t_to = t_anchor - step as f64 * dt;
                pos = rk4_point(&flow, pos, t_from, t_to - t_from);
                let frame = ((anchor as i64 - step).clamp(0, grid.m_t as i64 - 1)) as usize;
                let w = weights[(reach - step) as usize];
                for fi in 0..n_fields {
                    acc[fi][idx] += w * at(fi, frame).eval(pos);
                }
            }
        }
        // Upsample the averaged coarse fields back to the slab grid.
        for (fi, a) in acc.into_iter().enumerate() {
            let coarse = ScalarField { grid: flow_grid, data: a };
            out_frames[fi].push(coarse.to_spectrum().pad_to(grid).to_scalar_field());
        }
    }
    let out: Vec<ScalarSlab> = out_frames.into_iter().map(|frames| ScalarSlab { frames }).collect();
    Ok((out, eps_x, clamped))
}

/// Flow-adapted mollification of a stress vector and its frame coefficient
/// (see [`flow_mollify_scalars`] for the underlying quadrature).
pub fn flow_mollify(input: &FlowMollifyInput) -> Result<(VectorSlab, ScalarSlab, MollifyReport)> {
    let comp = |axis: usize| ScalarSlab {
        frames: input.r_star.frames.iter().map(|v| v.components[axis].clone()).collect(),
    };
    let (r0, r1) = (comp(0), comp(1));
    let (mut outs, eps_x_used, clamped) =
        flow_mollify_scalars(&[&r0, &r1, input.c1], input.drift, input.eps_x, input.eps_t, input.n_flow)?;
    let out_c = outs.pop().unwrap();
    let out_r1 = outs.pop().unwrap();
    let out_r0 = outs.pop().unwrap();
    let out_vec = VectorSlab {
        frames: out_r0
            .frames
            .into_iter()
            .zip(out_r1.frames)
            .map(|(a, b)| VectorField { components: [a, b] })
            .collect(),
    };
    let report = error_report(input, &out_vec, &out_c, eps_x_used, clamped);
    Ok((out_vec, out_c, report))
}

fn rk4_point(flow: &FlowMap, x: [f64; 2], t: f64, h: f64) -> [f64; 2] {
    let f = |p: [f64; 2], tt: f64| flow.sampler().velocity(p, tt);
    let k1 = f(x, t);
    let k2 = f([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]], t + 0.5 * h);
    let k3 = f([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]], t + 0.5 * h);
    let k4 = f([x[0] + h * k3[0], x[1] + h * k3[1]], t + h);
    [
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

fn error_report(
    input: &FlowMollifyInput,
    out_vec: &VectorSlab,
    out_c: &ScalarSlab,
    eps_x_used: f64,
    clamped: bool,
) -> MollifyReport {
    let mut stress_error = 0.0f64;
    for (a, b) in out_vec.frames.iter().zip(&input.r_star.frames) {
        for axis in 0..2 {
            let e = a.components[axis]
                .data
                .iter()
                .zip(&b.components[axis].data)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            stress_error = stress_error.max(e);
        }
    }
    let mut coeff_error = 0.0f64;
    for (a, b) in out_c.frames.iter().zip(&input.c1.frames) {
        let e = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        coeff_error = coeff_error.max(e);
    }
    MollifyReport {
        eps_x: input.eps_x,
        eps_t: input.eps_t,
        eps_x_used,
        stress_error,
        coeff_error,
        eps_x_clamped: clamped,
    }
}

/// Frequency-truncated state `ℙ²_{≤μ}` applied framewise, with the measured
/// truncation errors.
pub struct MollifiedState {
    pub p_eps: ScalarSlab,
    pub m_eps: ScalarSlab,
    pub tp_eps: VectorSlab,
    pub tm_eps: VectorSlab,
    /// `(‖P−P_ε‖, ‖M−M_ε‖)` over the slab.
    pub truncation_error: (f64, f64),
    /// Reference scale `μ⁻¹·(‖∇P‖ + ‖∇M‖)` (worst frame).
    pub reference_bound: f64,
}

/// Apply `ℙ²_{≤μ_q}` framewise to `P_q`, `M_q` and form the drifts of the
/// truncated fields.
pub fn lp_mollify_state(
    p: &ScalarSlab,
    m: &ScalarSlab,
    symbol: &SymbolSpec,
    mu: f64,
) -> MollifiedState {
    let project = |slab: &ScalarSlab| slab.map_frames(|f| lp_project_leq(f, mu));
    let p_eps = project(p);
    let m_eps = project(m);
    let drift = |slab: &ScalarSlab| VectorSlab {
        frames: slab.frames.iter().map(|f| apply_symbol(symbol, f)).collect(),
    };
    let tp_eps = drift(&p_eps);
    let tm_eps = drift(&m_eps);
    let err = |a: &ScalarSlab, b: &ScalarSlab| {
        a.frames
            .iter()
            .zip(&b.frames)
            .map(|(x, y)| {
                x.data
                    .iter()
                    .zip(&y.data)
                    .map(|(u, v)| (u - v).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max)
    };
    let mut reference = 0.0f64;
    for (fp, fm) in p.frames.iter().zip(&m.frames) {
        reference = reference.max((ck_norm(fp, 1) + ck_norm(fm, 1)) / mu);
    }
    MollifiedState {
        truncation_error: (err(p, &p_eps), err(m, &m_eps)),
        reference_bound: reference,
        p_eps,
        m_eps,
        tp_eps,
        tm_eps,
    }
}

/// Framewise `C⁰` distance between two scalar slabs.
pub fn slab_c0_distance(a: &ScalarSlab, b: &ScalarSlab) -> f64 {
    a.frames
        .iter()
        .zip(&b.frames)
        .map(|(x, y)| {
            x.data
                .iter()
                .zip(&y.data)
                .map(|(u, v)| (u - v).abs())
                .fold(0.0f64, f64::max)
        })
        .fold(0.0f64, f64::max)
}

/// Largest `C⁰` frame norm of a scalar slab.
pub fn slab_c0(s: &ScalarSlab) -> f64 {
    s.frames.iter().map(c0_norm).fold(0.0, f64::max)
}
