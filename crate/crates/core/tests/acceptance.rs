//! Acceptance gate: the nine end-to-end criteria, one pass/fail line each.
//!
//! Criteria 6–8 share a single production-scale run (n = 512, m_t = 128,
//! λ₀ = 8, b = 3/2, β = 0.3, ν = 1, γ = 1/2, Q = 2); run the suite with
//! `cargo test --test acceptance -- --nocapture` to watch the lines appear.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use wildscalar::config::RunConfig;
use wildscalar::field::{ComplexField, ScalarField, ScalarSlab};
use wildscalar::grid::GridSpec;
use wildscalar::increment::{build_amplitudes, build_cutoffs, build_lifting};
use wildscalar::io;
use wildscalar::iteration::{run, StepReport};
use wildscalar::microlocal::{log_log_slope, microlocal_residual, PacketOp, PlaneWavePacket};
use wildscalar::regime::{evaluate, rat, RegimeQuery};
use wildscalar::spectral::{divergence, gradient, multiply, NearBand};
use wildscalar::symbols::{apply_symbol, apply_symbol_complex, builtin_ipm, validate_symbol};

type CriterionResult = Result<String, String>;

fn criterion_1_regime_exactness() -> CriterionResult {
    let start = Instant::now();
    let q = |d: u32, forced: bool, gamma: (i64, i64)| RegimeQuery {
        b: rat(1, 1),
        d,
        gamma: rat(gamma.0, gamma.1),
        forced,
    };
    // α_sup = 1/(2d+1) forced, 1/(4d+1) unforced, for d ≤ 6; β_sup = 2α_sup;
    // ζ_sup = 1/(2d). The named spot values are special cases.
    for d in 1..=6u32 {
        let f = evaluate(&q(d, true, (0, 1)));
        if f.alpha_sup != rat(1, 2 * d as i64 + 1) {
            return Err(format!("forced α_sup(d={d}) ≠ 1/(2d+1)"));
        }
        if f.zeta_sup != rat(1, 2 * d as i64) {
            return Err(format!("ζ_sup(d={d}) ≠ 1/(2d)"));
        }
        let u = evaluate(&q(d, false, (0, 1)));
        if u.alpha_sup != rat(1, 4 * d as i64 + 1) {
            return Err(format!("unforced α_sup(d={d}) ≠ 1/(4d+1)"));
        }
    }
    let spot = [
        (evaluate(&q(1, true, (0, 1))).alpha_sup, rat(1, 3), "forced α(d=1)"),
        (evaluate(&q(2, true, (0, 1))).alpha_sup, rat(1, 5), "forced α(d=2)"),
        (evaluate(&q(2, false, (0, 1))).alpha_sup, rat(1, 9), "unforced α(d=2)"),
        (evaluate(&q(2, true, (0, 1))).beta_sup, rat(2, 5), "forced β(d=2,γ=0)"),
        (evaluate(&q(2, false, (0, 1))).beta_sup, rat(2, 9), "unforced β(d=2)"),
    ];
    for (got, want, name) in spot {
        if got != want {
            return Err(format!("{name}: got {got:?}, want {want:?}"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 1.0 {
        return Err(format!("runtime {elapsed:.2?} ≥ 1 s"));
    }
    Ok(format!("exact rationals, {elapsed:.2?}"))
}

fn random_smooth_field(grid: GridSpec, rng: &mut ChaCha20Rng) -> ScalarField {
    let mut modes = Vec::new();
    for _ in 0..12 {
        let k1 = rng.gen_range(-6i64..=6);
        let k2 = rng.gen_range(-6i64..=6);
        if (k1, k2) == (0, 0) {
            continue;
        }
        let a: f64 = rng.gen_range(-1.0..1.0);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        modes.push((k1 as f64, k2 as f64, a, phase));
    }
    ScalarField::from_fn(grid, |x1, x2| {
        modes.iter().map(|&(k1, k2, a, p)| a * (k1 * x1 + k2 * x2 + p).cos()).sum()
    })
}

fn criterion_2_symbol_structure() -> CriterionResult {
    let ipm = builtin_ipm();
    let report = validate_symbol(&ipm, 128);
    if !report.pass() {
        return Err(format!(
            "structural checks failed: evenness {:.2e}, degree-0 {:.2e}, ξ·m {:.2e}",
            report.evenness.worst, report.degree_zero.worst, report.divergence_free.worst
        ));
    }
    let grid = GridSpec::new(256, 2, 0.0, 1.0).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut worst_rel = 0.0f64;
    for _ in 0..10 {
        let theta = random_smooth_field(grid, &mut rng);
        let u = apply_symbol(&ipm, &theta);
        let div = divergence(&u).max_abs();
        // Relative to the gradient scale of the drift itself.
        let scale = gradient(&u.components[0])
            .max_abs()
            .max(gradient(&u.components[1]).max_abs())
            .max(f64::MIN_POSITIVE);
        worst_rel = worst_rel.max(div / scale);
    }
    if worst_rel > 1e-10 {
        return Err(format!("∇·T[θ] relative residual {worst_rel:.3e} > 1e-10"));
    }
    Ok(format!(
        "ξ·m(ξ) worst {:.1e}; ∇·T[θ] relative ≤ {worst_rel:.1e} on 10 random n=256 fields",
        report.divergence_free.worst
    ))
}

fn criterion_3_microlocal_scaling() -> CriterionResult {
    let start = Instant::now();
    let grid = GridSpec::new(512, 2, 0.0, 1.0).unwrap();
    let ipm = builtin_ipm();
    let dir = [1i64, 1i64];
    let packet = |lambda: f64, smooth: bool| PlaneWavePacket {
        amplitude: if smooth {
            ComplexField::from_fn(grid, |x1, x2| {
                Complex64::new(1.0 + 0.4 * x1.cos(), 0.2 * (x1 + x2).sin())
            })
        } else {
            ComplexField::from_fn(grid, |_, _| Complex64::new(0.8, -0.1))
        },
        pi: if smooth {
            ScalarField::from_fn(grid, |x1, x2| 0.04 * (x1 + 2.0 * x2).cos())
        } else {
            ScalarField::zeros(grid)
        },
        hat_grad: [1.0, 1.0],
        lambda,
        band: NearBand { lambda, parity: 0, sign: 1, direction: dir, separation: 2.0 },
    };
    // λ·|ξ⁽¹⁾| with λ ∈ {8, 16, 32, 64}: the packet's λ already multiplies
    // the integer direction (1,1), so these are the requested frequencies.
    let mut points = Vec::new();
    for lambda in [8.0f64, 16.0, 32.0, 64.0] {
        let (_, rep) = microlocal_residual(&packet(lambda, true), &PacketOp::Symbol(&ipm))
            .map_err(|e| format!("residual at λ={lambda}: {e}"))?;
        points.push((lambda, rep.residual_norm));
    }
    let slope = log_log_slope(&points);
    if !(-1.3..=-0.7).contains(&slope) {
        return Err(format!("log-log slope {slope:.3} outside [−1.3, −0.7]"));
    }
    let (_, exact) = microlocal_residual(&packet(16.0, false), &PacketOp::Symbol(&ipm))
        .map_err(|e| format!("linear-phase residual: {e}"))?;
    if exact.residual_norm > 1e-11 {
        return Err(format!("linear-phase residual {:.3e} > 1e-11", exact.residual_norm));
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs() >= 60 {
        return Err(format!("runtime {elapsed:.1?} ≥ 1 min"));
    }
    Ok(format!("slope {slope:.3}, linear-phase residual {:.1e}, {elapsed:.1?}", exact.residual_norm))
}

fn criterion_4_cancellation_keystone() -> CriterionResult {
    let grid = GridSpec::new(256, 2, 0.0, 1.0).unwrap();
    let ipm = builtin_ipm();
    let hat = [1.0f64, 1.0];
    let m_plus = ipm.eval_real(hat[0], hat[1]);
    let m_minus = ipm.eval_real(-hat[0], -hat[1]);
    // Transversality m(∇ξ̂)·∇ξ̂ = 0 must hold exactly in floating point.
    if m_plus[0] * hat[0] + m_plus[1] * hat[1] != 0.0 {
        return Err("transversality m(∇ξ̂)·∇ξ̂ ≠ 0 exactly".into());
    }
    let lambda = 8.0;
    let a_val = 0.61;
    let band = NearBand { lambda, parity: 0, sign: 1, direction: [1, 1], separation: 2.0 };
    let pkt = PlaneWavePacket {
        amplitude: ComplexField::from_fn(grid, |_, _| Complex64::new(a_val, 0.0)),
        pi: ScalarField::zeros(grid),
        hat_grad: hat,
        lambda,
        band,
    };
    let w_i = pkt.synthesize();
    let w_re = w_i.re();
    let mut w_im = ScalarField::zeros(grid);
    for (v, z) in w_im.data.iter_mut().zip(&w_i.data) {
        *v = z.im;
    }
    let tw = apply_symbol_complex(&ipm, &w_i);
    let mut worst_rel = 0.0f64;
    for axis in 0..2 {
        let re_part = tw[axis].re();
        let mut im_part = ScalarField::zeros(grid);
        for (v, z) in im_part.data.iter_mut().zip(&tw[axis].data) {
            *v = z.im;
        }
        // T[W_I]W_Ī + T[W_Ī]W_I = 2·Re(T[W_I] conj(W_I)).
        let mean = 2.0 * (multiply(&re_part, &w_re).mean() + multiply(&im_part, &w_im).mean());
        let expect = a_val * a_val * (m_plus[axis] + m_minus[axis]);
        if expect.abs() > 0.0 {
            worst_rel = worst_rel.max(((mean - expect) / expect).abs());
        } else if mean.abs() > 1e-10 {
            return Err(format!("axis {axis}: zero mode {mean:.3e} where a²(m+m⁻) = 0"));
        }
    }
    if worst_rel > 1e-8 {
        return Err(format!("zero-mode relative error {worst_rel:.3e} > 1e-8"));
    }
    Ok(format!("zero mode matches a²(m(∇ξ̂)+m(−∇ξ̂)) to {worst_rel:.1e}; transversality exact"))
}

fn criterion_5_partition_lifting_amplitudes() -> CriterionResult {
    let grid = GridSpec::new(64, 64, 0.0, 1.0).unwrap();
    let tau = 0.1;
    let cutoffs = build_cutoffs(tau, (0.0, 1.0)).map_err(|e| e.to_string())?;
    let mut worst_partition = 0.0f64;
    for i in 0..=1000 {
        let t = i as f64 / 1000.0;
        worst_partition = worst_partition.max((cutoffs.sum_sq(t) - 1.0).abs());
    }
    if worst_partition > 1e-12 {
        return Err(format!("Σφ_k² deviates by {worst_partition:.3e} > 1e-12"));
    }
    let (k_const, c_const, delta_q) = (4.0, 4.0, 0.39);
    // The engine masks the cancellable coefficient to the lifting plateau
    // before dominance is checked; mirror that by supporting c on I_t.
    let c_total = ScalarSlab::from_fn(grid, |x1, x2, t| {
        if (t - 0.5).abs() <= 0.15 { 0.3 * delta_q * (x1.cos() + x2.sin()) } else { 0.0 }
    });
    let c_frame_max: Vec<f64> =
        c_total.frames.iter().map(wildscalar::field::ScalarField::max_abs).collect();
    let lifting = build_lifting(
        (0.35, 0.65),
        grid,
        delta_q,
        0.12,
        8.0,
        1.0,
        k_const,
        c_const,
        &c_frame_max,
    )
    .map_err(|e| e.to_string())?;
    for r in 0..3 {
        let (norm, bound) =
            (lifting.report.sqrt_derivative_norms[r], lifting.report.sqrt_derivative_bounds[r]);
        if norm > bound {
            return Err(format!("lifting derivative order {r}: {norm:.3e} > C-bound {bound:.3e}"));
        }
    }
    let amps =
        build_amplitudes(&lifting, &cutoffs, grid, &c_total, true).map_err(|e| e.to_string())?;
    if amps.sum_sq_error > 1e-10 {
        return Err(format!("Σ_I a_I² − (e + c) = {:.3e} > 1e-10", amps.sum_sq_error));
    }
    Ok(format!(
        "Σφ_k² within {worst_partition:.1e}; Σa_I² identity within {:.1e}; lifting bounds hold",
        amps.sum_sq_error
    ))
}

/// The shared production-scale run behind criteria 6–8.
struct DeskRun {
    rtil0: f64,
    reports: Vec<StepReport>,
    discrepancy: f64,
    m0_reference: f64,
    schedule: wildscalar::iteration::ParameterSchedule,
}

fn desk_run() -> Result<DeskRun, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = RunConfig {
        n: 512,
        m_t: 128,
        lambda0: 8.0,
        b: 1.5,
        beta: 0.3,
        nu: 1.0,
        gamma: 0.5,
        q_steps: 2,
        seed_amplitude: 0.05,
        init_boost: 1.0,
        output_dir: dir.path().join("desk").to_string_lossy().into_owned(),
        ..RunConfig::default()
    };
    let outcome = run(&cfg).map_err(|f| format!("desk run failed: {f}"))?;
    let manifest = io::read_manifest(&io::stage_dir(&outcome.out_dir, 0)).map_err(|e| e.to_string())?;
    Ok(DeskRun {
        rtil0: manifest.norms.2,
        reports: outcome.reports,
        discrepancy: outcome.discrepancy,
        m0_reference: outcome.m0_reference,
        schedule: outcome.state.schedule.clone(),
    })
}

fn criterion_6_closure(desk: &DeskRun) -> CriterionResult {
    let rep = &desk.reports[0];
    if rep.closure_error > rep.closure_threshold {
        return Err(format!(
            "closure {:.3e} > 10× discretization estimate {:.3e}",
            rep.closure_error, rep.closure_threshold
        ));
    }
    Ok(format!(
        "divergence-sum vs direct residual: {:.1e} (threshold {:.1e})",
        rep.closure_error, rep.closure_threshold
    ))
}

fn criterion_7_contraction_and_pause(desk: &DeskRun) -> CriterionResult {
    let mut prev = desk.rtil0;
    for rep in &desk.reports {
        let cur = rep.row.rtil_total;
        if cur >= prev {
            return Err(format!("‖R̃_{}‖ = {cur:.3e} ≥ ‖R̃_{}‖ = {prev:.3e}", rep.row.q + 1, rep.row.q));
        }
        if rep.pause_residual > 1e-12 {
            return Err(format!("pause residual {:.3e} > 1e-12 at stage {}", rep.pause_residual, rep.row.q));
        }
        prev = cur;
    }
    let floor = 0.5 * desk.m0_reference;
    if desk.discrepancy <= floor {
        return Err(format!(
            "‖θ_Q − θ̃_Q‖ = {:.3e} ≤ 0.5·‖2M₀‖ = {floor:.3e}",
            desk.discrepancy
        ));
    }
    Ok(format!(
        "‖R̃‖: {:.2e} → {:.2e} → {:.2e}; pause ≤ {:.1e}; discrepancy {:.2e} > {floor:.2e}",
        desk.rtil0,
        desk.reports[0].row.rtil_total,
        desk.reports[1].row.rtil_total,
        desk.reports.iter().map(|r| r.pause_residual).fold(0.0f64, f64::max),
        desk.discrepancy
    ))
}

fn criterion_8_scaling_forms(desk: &DeskRun) -> CriterionResult {
    let mut lines = Vec::new();
    for rep in &desk.reports {
        let q = rep.row.q;
        let rt_factor = rep.row.r_t / rep.est_rt;
        let rd_factor = rep.row.r_d / rep.est_rd;
        if !(1.0 / 20.0..=20.0).contains(&rt_factor) {
            return Err(format!("stage {q}: ‖R_T‖/est = {rt_factor:.2} outside [1/20, 20]"));
        }
        if !(1.0 / 20.0..=20.0).contains(&rd_factor) {
            return Err(format!("stage {q}: ‖R_D‖/est = {rd_factor:.2} outside [1/20, 20]"));
        }
        let cap = 50.0 * desk.schedule.delta(q + 1);
        if rep.row.c_coeff > cap {
            return Err(format!("stage {q}: ‖c_{{2,q+1}}‖ = {:.3e} > 50·δ = {cap:.3e}", rep.row.c_coeff));
        }
        lines.push(format!("q={q}: RT×{rt_factor:.1}, RD×{rd_factor:.1}, c {:.2e} ≤ {cap:.2e}", rep.row.c_coeff));
    }
    Ok(lines.join("; "))
}

fn criterion_9_determinism_persistence() -> CriterionResult {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = RunConfig {
        n: 128,
        m_t: 24,
        lambda0: 4.0,
        b: 1.5,
        beta: 0.3,
        nu: 1.0,
        gamma: 0.5,
        flow_resolution: 64,
        phase_resolution: 64,
        ..RunConfig::default()
    };
    let mk = |name: &str, q: usize| RunConfig {
        q_steps: q,
        output_dir: dir.path().join(name).to_string_lossy().into_owned(),
        ..base.clone()
    };
    // Bit-identical ledgers across two independent runs under one seed.
    let a = run(&mk("a", 2)).map_err(|f| f.to_string())?;
    let b = run(&mk("b", 2)).map_err(|f| f.to_string())?;
    let la = std::fs::read(a.out_dir.join("ledger.csv")).map_err(|e| e.to_string())?;
    let lb = std::fs::read(b.out_dir.join("ledger.csv")).map_err(|e| e.to_string())?;
    if la != lb {
        return Err("repeated runs produced differing ledgers".into());
    }
    // Checkpoint/resume equivalence: stop after stage 1, extend, resume.
    let part = run(&mk("c", 1)).map_err(|f| f.to_string())?;
    let extended = mk("c", 2);
    std::fs::write(part.out_dir.join("config.txt"), extended.emit()).map_err(|e| e.to_string())?;
    let resumed = wildscalar::iteration::resume(&part.out_dir).map_err(|f| f.to_string())?;
    let lc = std::fs::read(resumed.out_dir.join("ledger.csv")).map_err(|e| e.to_string())?;
    if la != lc {
        return Err("resumed ledger differs from the uninterrupted run".into());
    }
    Ok("bit-identical ledgers (repeat run and checkpoint/resume)".into())
}

#[test]
fn acceptance() {
    let mut failures = Vec::new();
    let mut report = |idx: usize, name: &str, outcome: CriterionResult| match outcome {
        Ok(detail) => println!("criterion {idx} ({name}): PASS — {detail}"),
        Err(detail) => {
            println!("criterion {idx} ({name}): FAIL — {detail}");
            failures.push(idx);
        }
    };
    report(1, "regime exactness", criterion_1_regime_exactness());
    report(2, "symbol structure", criterion_2_symbol_structure());
    report(3, "microlocal scaling", criterion_3_microlocal_scaling());
    report(4, "cancellation keystone", criterion_4_cancellation_keystone());
    report(5, "partition/lifting/amplitude identities", criterion_5_partition_lifting_amplitudes());
    match desk_run() {
        Ok(desk) => {
            report(6, "closure", criterion_6_closure(&desk));
            report(7, "contraction and pause", criterion_7_contraction_and_pause(&desk));
            report(8, "scaling-form audit", criterion_8_scaling_forms(&desk));
        }
        Err(e) => {
            for (idx, name) in
                [(6, "closure"), (7, "contraction and pause"), (8, "scaling-form audit")]
            {
                report(idx, name, Err(format!("shared production run failed: {e}")));
            }
        }
    }
    report(9, "determinism and persistence", criterion_9_determinism_persistence());
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
