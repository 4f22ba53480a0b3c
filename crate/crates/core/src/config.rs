//! Flat key-value run configuration. Keys are "section.key" names mirroring
//! the module structure; unknown keys and out-of-range values are all
//! reported together rather than one at a time.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::iteration::ParameterSchedule;
use crate::Result;

/// Complete configuration of a run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub m_t: usize,
    pub t0: f64,
    pub t1: f64,
    pub lambda0: f64,
    pub b: f64,
    pub beta: f64,
    pub l_order: u32,
    pub gamma: f64,
    pub nu: f64,
    pub k_const: f64,
    pub c_const: f64,
    pub q_steps: usize,
    /// Builtin symbol name, used when `symbol_table` is empty.
    pub symbol_builtin: String,
    /// Path to a JSON symbol table; empty means "use the builtin".
    pub symbol_table: String,
    /// Frame direction candidates, e.g. "1,1;1,0".
    pub frame_candidates: String,
    /// Parity separation factor of the annular bands.
    pub separation: f64,
    /// RNG seed for seed amplitudes and randomized suites.
    pub seed: u64,
    /// Scale factor applied to the default seed amplitudes.
    pub seed_amplitude: f64,
    /// Extra constant-in-space frame-coefficient offset added to the initial
    /// stress (scaled by δ_1), improving the first cancellation's dominance.
    pub init_boost: f64,
    /// Time support of the initial state, as fractions of the window.
    pub init_support: (f64, f64),
    pub output_dir: String,
    /// Constant budget for inductive-bound verification.
    pub budget: f64,
    /// Spatial resolution of the flow-average quadrature.
    pub flow_resolution: usize,
    /// Spatial resolution of the phase transport.
    pub phase_resolution: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 512,
            m_t: 128,
            t0: 0.0,
            t1: 1.0,
            lambda0: 8.0,
            b: 1.5,
            beta: 0.3,
            l_order: 2,
            gamma: 0.0,
            nu: 0.0,
            k_const: 4.0,
            c_const: 4.0,
            q_steps: 2,
            symbol_builtin: "ipm".into(),
            symbol_table: String::new(),
            frame_candidates: "1,1;1,0".into(),
            separation: 2.0,
            seed: 0,
            seed_amplitude: 1.0,
            init_boost: 0.5,
            init_support: (0.35, 0.65),
            output_dir: "out".into(),
            budget: 50.0,
            flow_resolution: 128,
            phase_resolution: 128,
        }
    }
}

impl RunConfig {
    pub fn schedule(&self) -> Result<ParameterSchedule> {
        ParameterSchedule::new(
            self.lambda0,
            self.b,
            self.beta,
            self.l_order,
            self.gamma,
            self.nu,
            self.q_steps,
        )
    }

    /// Parse the frame candidate list into integer direction vectors.
    pub fn candidates(&self) -> std::result::Result<Vec<[i64; 2]>, String> {
        let mut out = Vec::new();
        for part in self.frame_candidates.split(';') {
            let comps: Vec<&str> = part.split(',').map(str::trim).collect();
            if comps.len() != 2 {
                return Err(format!("frame candidate '{part}' is not of the form k1,k2"));
            }
            let k1 = comps[0].parse().map_err(|e| format!("frame candidate '{part}': {e}"))?;
            let k2 = comps[1].parse().map_err(|e| format!("frame candidate '{part}': {e}"))?;
            if (k1, k2) == (0, 0) {
                return Err("frame candidate (0,0) is not a direction".into());
            }
            out.push([k1, k2]);
        }
        if out.is_empty() {
            return Err("no frame candidates given".into());
        }
        Ok(out)
    }

    /// Serialize to the flat key-value format (deterministic key order).
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("grid.n", self.n.to_string());
        kv("grid.m_t", self.m_t.to_string());
        kv("grid.t0", self.t0.to_string());
        kv("grid.t1", self.t1.to_string());
        kv("schedule.lambda0", self.lambda0.to_string());
        kv("schedule.b", self.b.to_string());
        kv("schedule.beta", self.beta.to_string());
        kv("schedule.l_order", self.l_order.to_string());
        kv("schedule.gamma", self.gamma.to_string());
        kv("schedule.nu", self.nu.to_string());
        kv("schedule.k_const", self.k_const.to_string());
        kv("schedule.c_const", self.c_const.to_string());
        kv("schedule.q_steps", self.q_steps.to_string());
        kv("symbol.builtin", self.symbol_builtin.clone());
        kv("symbol.table", self.symbol_table.clone());
        kv("frame.candidates", self.frame_candidates.clone());
        kv("band.separation", self.separation.to_string());
        kv("seed.value", self.seed.to_string());
        kv("seed.amplitude", self.seed_amplitude.to_string());
        kv("init.boost", self.init_boost.to_string());
        kv("init.support", format!("{},{}", self.init_support.0, self.init_support.1));
        kv("output.dir", self.output_dir.clone());
        kv("budget.constant", self.budget.to_string());
        kv("flow.resolution", self.flow_resolution.to_string());
        kv("phase.resolution", self.phase_resolution.to_string());
        s
    }
}

/// Parse the flat key-value format, collecting every violation.
pub fn parse_config_str(text: &str) -> std::result::Result<RunConfig, Vec<String>> {
    let mut cfg = RunConfig::default();
    let mut violations: Vec<String> = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            violations.push(format!("line {}: missing '=' in '{line}'", lineno + 1));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        *seen.entry(key.to_string()).or_insert(0) += 1;

        macro_rules! set {
            ($field:expr, $ty:ty) => {
                match value.parse::<$ty>() {
                    Ok(v) => $field = v,
                    Err(e) => violations.push(format!("{key}: type mismatch ({e})")),
                }
            };
        }
        match key {
            "grid.n" => set!(cfg.n, usize),
            "grid.m_t" => set!(cfg.m_t, usize),
            "grid.t0" => set!(cfg.t0, f64),
            "grid.t1" => set!(cfg.t1, f64),
            "schedule.lambda0" => set!(cfg.lambda0, f64),
            "schedule.b" => set!(cfg.b, f64),
            "schedule.beta" => set!(cfg.beta, f64),
            "schedule.l_order" => set!(cfg.l_order, u32),
            "schedule.gamma" => set!(cfg.gamma, f64),
            "schedule.nu" => set!(cfg.nu, f64),
            "schedule.k_const" => set!(cfg.k_const, f64),
            "schedule.c_const" => set!(cfg.c_const, f64),
            "schedule.q_steps" => set!(cfg.q_steps, usize),
            "symbol.builtin" => cfg.symbol_builtin = value.to_string(),
            "symbol.table" => cfg.symbol_table = value.to_string(),
            "frame.candidates" => cfg.frame_candidates = value.to_string(),
            "band.separation" => set!(cfg.separation, f64),
            "seed.value" => set!(cfg.seed, u64),
            "seed.amplitude" => set!(cfg.seed_amplitude, f64),
            "init.boost" => set!(cfg.init_boost, f64),
            "init.support" => match value.split_once(',') {
                Some((a, b)) => match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
                    (Ok(lo), Ok(hi)) => cfg.init_support = (lo, hi),
                    _ => violations.push(format!("{key}: expected two floats")),
                },
                None => violations.push(format!("{key}: expected 'lo,hi'")),
            },
            "output.dir" => cfg.output_dir = value.to_string(),
            "budget.constant" => set!(cfg.budget, f64),
            "flow.resolution" => set!(cfg.flow_resolution, usize),
            "phase.resolution" => set!(cfg.phase_resolution, usize),
            _ => violations.push(format!("unknown key '{key}'")),
        }
    }
    for (key, count) in &seen {
        if *count > 1 {
            violations.push(format!("duplicate key '{key}' ({count} occurrences)"));
        }
    }

    // Range validation (collect everything).
    if !cfg.n.is_power_of_two() || cfg.n < 8 {
        violations.push(format!("grid.n: {} is not a power of two ≥ 8", cfg.n));
    }
    if cfg.m_t < 2 {
        violations.push(format!("grid.m_t: {} must be ≥ 2", cfg.m_t));
    }
    if !(cfg.t1 > cfg.t0) {
        violations.push(format!("grid window: t1 = {} must exceed t0 = {}", cfg.t1, cfg.t0));
    }
    if !(cfg.lambda0 >= 2.0) {
        violations.push(format!("schedule.lambda0: {} must be ≥ 2", cfg.lambda0));
    }
    if !(cfg.b >= 1.0) {
        violations.push(format!("schedule.b: {} must be ≥ 1", cfg.b));
    }
    if !(cfg.beta > 0.0 && cfg.beta < 1.0) {
        violations.push(format!("schedule.beta: {} must lie in (0,1)", cfg.beta));
    }
    if cfg.l_order < 2 {
        violations.push(format!("schedule.l_order: {} must be ≥ 2", cfg.l_order));
    }
    if !(0.0..1.0).contains(&cfg.gamma) {
        violations.push(format!("schedule.gamma: {} must lie in [0,1)", cfg.gamma));
    }
    if cfg.nu < 0.0 {
        violations.push(format!("schedule.nu: {} must be ≥ 0", cfg.nu));
    }
    if cfg.k_const < 4.0 || cfg.c_const < 4.0 {
        violations.push(format!(
            "schedule constants: K = {}, C = {} must both be ≥ 4",
            cfg.k_const, cfg.c_const
        ));
    }
    if cfg.separation <= 1.0 {
        violations.push(format!("band.separation: {} must exceed 1", cfg.separation));
    }
    if !(cfg.init_support.0 < cfg.init_support.1
        && cfg.init_support.0 > 0.0
        && cfg.init_support.1 < 1.0)
    {
        violations.push(format!(
            "init.support: ({}, {}) must satisfy 0 < lo < hi < 1",
            cfg.init_support.0, cfg.init_support.1
        ));
    }
    if cfg.budget <= 0.0 {
        violations.push(format!("budget.constant: {} must be positive", cfg.budget));
    }
    if let Err(e) = cfg.candidates() {
        violations.push(format!("frame.candidates: {e}"));
    }

    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(violations)
    }
}

/// Parse a config file; an absent or empty file yields the defaults.
pub fn parse_config(path: &Path) -> std::result::Result<RunConfig, Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
    parse_config_str(&text)
}
