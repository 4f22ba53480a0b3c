//! Command-line front end: run/resume the alternating iteration, print the
//! exact exponent-regime tables, validate symbols, and render run ledgers.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wildscalar::config::{parse_config_str, RunConfig};
use wildscalar::io;
use wildscalar::iteration::{resume, run, RunOutcome};
use wildscalar::regime::{self, evaluate, rat_str, RegimeQuery};
use wildscalar::symbols::{builtin_ipm, validate_symbol, SymbolSpec};
use wildscalar::FieldError;

const EXIT_CONFIG: u8 = 2;
const EXIT_STEP: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "wildscalar",
    about = "Spectral laboratory for forced active scalar equations",
    long_about = "Spectral laboratory for the alternating sum-difference iteration on forced \
                  active scalar equations with even drift symbols, plus exact-rational \
                  exponent-regime tables.\n\nThe WILDSCALAR_THREADS environment variable caps \
                  worker parallelism; the numerical engine is single-threaded, so any cap ≥ 1 \
                  is honored as-is."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a full iteration run from a config file plus flag overrides.
    Run(RunArgs),
    /// Continue a run from its newest checkpoint.
    Resume {
        /// Output directory of the interrupted run (contains config.txt).
        #[arg(long)]
        dir: PathBuf,
    },
    /// Print exact exponent thresholds (β_sup, α_sup, ζ_sup).
    Regime(RegimeArgs),
    /// Check a drift symbol: evenness, degree 0, ξ·m(ξ)=0, boundedness.
    ValidateSymbol(ValidateArgs),
    /// Render a run's ledger into a human summary plus plot-ready series.
    Report {
        /// Output directory of a completed or partial run.
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat key-value config file (missing keys take defaults).
    #[arg(long)]
    config: Option<PathBuf>,

    // Flag mirrors of the config keys. A flag wins over the file.
    #[arg(long = "grid.n")]
    grid_n: Option<String>,
    #[arg(long = "grid.m_t")]
    grid_m_t: Option<String>,
    #[arg(long = "grid.t0")]
    grid_t0: Option<String>,
    #[arg(long = "grid.t1")]
    grid_t1: Option<String>,
    #[arg(long = "schedule.lambda0")]
    schedule_lambda0: Option<String>,
    #[arg(long = "schedule.b")]
    schedule_b: Option<String>,
    #[arg(long = "schedule.beta")]
    schedule_beta: Option<String>,
    #[arg(long = "schedule.l_order")]
    schedule_l_order: Option<String>,
    #[arg(long = "schedule.gamma")]
    schedule_gamma: Option<String>,
    #[arg(long = "schedule.nu")]
    schedule_nu: Option<String>,
    #[arg(long = "schedule.k_const")]
    schedule_k_const: Option<String>,
    #[arg(long = "schedule.c_const")]
    schedule_c_const: Option<String>,
    #[arg(long = "schedule.q_steps")]
    schedule_q_steps: Option<String>,
    #[arg(long = "symbol.builtin")]
    symbol_builtin: Option<String>,
    #[arg(long = "symbol.table")]
    symbol_table: Option<String>,
    #[arg(long = "frame.candidates")]
    frame_candidates: Option<String>,
    #[arg(long = "band.separation")]
    band_separation: Option<String>,
    #[arg(long = "seed.value")]
    seed_value: Option<String>,
    #[arg(long = "seed.amplitude")]
    seed_amplitude: Option<String>,
    #[arg(long = "init.boost")]
    init_boost: Option<String>,
    #[arg(long = "init.support")]
    init_support: Option<String>,
    #[arg(long = "output.dir")]
    output_dir: Option<String>,
    #[arg(long = "budget.constant")]
    budget_constant: Option<String>,
    #[arg(long = "flow.resolution")]
    flow_resolution: Option<String>,
    #[arg(long = "phase.resolution")]
    phase_resolution: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |k: &'static str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((k, v.clone()));
            }
        };
        push("grid.n", &self.grid_n);
        push("grid.m_t", &self.grid_m_t);
        push("grid.t0", &self.grid_t0);
        push("grid.t1", &self.grid_t1);
        push("schedule.lambda0", &self.schedule_lambda0);
        push("schedule.b", &self.schedule_b);
        push("schedule.beta", &self.schedule_beta);
        push("schedule.l_order", &self.schedule_l_order);
        push("schedule.gamma", &self.schedule_gamma);
        push("schedule.nu", &self.schedule_nu);
        push("schedule.k_const", &self.schedule_k_const);
        push("schedule.c_const", &self.schedule_c_const);
        push("schedule.q_steps", &self.schedule_q_steps);
        push("symbol.builtin", &self.symbol_builtin);
        push("symbol.table", &self.symbol_table);
        push("frame.candidates", &self.frame_candidates);
        push("band.separation", &self.band_separation);
        push("seed.value", &self.seed_value);
        push("seed.amplitude", &self.seed_amplitude);
        push("init.boost", &self.init_boost);
        push("init.support", &self.init_support);
        push("output.dir", &self.output_dir);
        push("budget.constant", &self.budget_constant);
        push("flow.resolution", &self.flow_resolution);
        push("phase.resolution", &self.phase_resolution);
        out
    }
}

#[derive(Args)]
struct RegimeArgs {
    /// Spatial dimension d ≥ 1.
    #[arg(long)]
    d: Option<u32>,
    /// Forced two-equation regime (default: unforced heuristic).
    #[arg(long)]
    forced: bool,
    /// Frequency-growth ratio as a fraction, e.g. "3/2"; "1" is the b→1⁺ limit.
    #[arg(long, default_value = "1")]
    b: String,
    /// Dissipation order γ as a fraction (forced regime only).
    #[arg(long, default_value = "0")]
    gamma: String,
    /// Write the full table (d = 1..6, both regimes) as CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Built-in symbol name (currently "ipm").
    #[arg(long)]
    builtin: Option<String>,
    /// JSON frequency table defining a custom symbol.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Frequency range to sweep.
    #[arg(long, default_value_t = 64)]
    range: i64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(v) = std::env::var("WILDSCALAR_THREADS") {
        log::info!("WILDSCALAR_THREADS={v}: engine is single-threaded, cap honored");
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Resume { dir } => cmd_resume(&dir),
        Command::Regime(args) => cmd_regime(&args),
        Command::ValidateSymbol(args) => cmd_validate(&args),
        Command::Report { dir } => cmd_report(&dir),
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, ExitCode> {
    let text = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("cannot read {}: {e}", path.display());
                return Err(ExitCode::from(EXIT_IO));
            }
        },
        None => String::new(),
    };
    // Flags override file lines for the same key.
    let overrides = args.overrides();
    let mut lines: Vec<String> = text
        .lines()
        .filter(|l| {
            let key = l.split('=').next().unwrap_or("").trim();
            !overrides.iter().any(|(k, _)| *k == key)
        })
        .map(str::to_string)
        .collect();
    for (k, v) in &overrides {
        lines.push(format!("{k} = {v}"));
    }
    match parse_config_str(&lines.join("\n")) {
        Ok(cfg) => Ok(cfg),
        Err(violations) => {
            eprintln!("configuration invalid ({} problem(s)):", violations.len());
            for v in violations {
                eprintln!("  - {v}");
            }
            Err(ExitCode::from(EXIT_CONFIG))
        }
    }
}

fn report_outcome(outcome: &RunOutcome) {
    println!("run complete: {} stage(s)", outcome.state.q);
    println!("  output:           {}", outcome.out_dir.display());
    if let Some(row) = outcome.state.ledger.last() {
        println!("  final ‖R̃‖_C⁰:     {:.6e}", row.rtil_total);
        println!("  target δ:         {:.6e}", row.delta_target);
    }
    println!("  ‖θ_Q − θ̃_Q‖_C⁰:   {:.6e}", outcome.discrepancy);
    println!("  ‖2M₀‖_C⁰ ref:     {:.6e}", outcome.m0_reference);
    println!("  forcing ‖f‖_C⁰:   {:.6e}", outcome.forcing_norm);
}

fn cmd_run(args: &RunArgs) -> ExitCode {
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match run(&cfg) {
        Ok(outcome) => {
            report_outcome(&outcome);
            ExitCode::SUCCESS
        }
        Err(fail) => {
            eprintln!("run failed: {}", fail.error);
            match fail.last_checkpoint {
                Some(p) => {
                    eprintln!("last checkpoint: {}", p.display());
                    ExitCode::from(EXIT_STEP)
                }
                None => ExitCode::from(if matches!(fail.error, FieldError::Io(_)) {
                    EXIT_IO
                } else {
                    EXIT_CONFIG
                }),
            }
        }
    }
}

fn cmd_resume(dir: &Path) -> ExitCode {
    match resume(dir) {
        Ok(outcome) => {
            report_outcome(&outcome);
            ExitCode::SUCCESS
        }
        Err(fail) => {
            eprintln!("resume failed: {}", fail.error);
            match fail.last_checkpoint {
                Some(p) => {
                    eprintln!("last checkpoint: {}", p.display());
                    ExitCode::from(EXIT_STEP)
                }
                None => ExitCode::from(EXIT_IO),
            }
        }
    }
}

fn parse_rat(s: &str) -> Result<regime::Rat, String> {
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: i64 = n.trim().parse().map_err(|e| format!("'{s}': {e}"))?;
    let d: i64 = d.trim().parse().map_err(|e| format!("'{s}': {e}"))?;
    if d == 0 {
        return Err(format!("'{s}': zero denominator"));
    }
    Ok(regime::rat(n, d))
}

fn regime_line(q: &RegimeQuery) -> String {
    let r = evaluate(q);
    format!(
        "d = {}, {}, γ = {}: β_sup = {} ({:.6}), α_sup = {} ({:.6}), ζ_sup = {} ({:.6}) [{}{}]",
        q.d,
        if q.forced { "forced" } else { "unforced" },
        rat_str(&q.gamma),
        rat_str(&r.beta_sup),
        rat_to_f64(&r.beta_sup),
        rat_str(&r.alpha_sup),
        rat_to_f64(&r.alpha_sup),
        rat_str(&r.zeta_sup),
        rat_to_f64(&r.zeta_sup),
        r.binding_constraint,
        if r.gamma_feasible { "" } else { "; γ infeasible" },
    )
}

fn rat_to_f64(r: &regime::Rat) -> f64 {
    use num_traits::ToPrimitive;
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

fn cmd_regime(args: &RegimeArgs) -> ExitCode {
    let b = match parse_rat(&args.b) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("bad --b: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let gamma = match parse_rat(&args.gamma) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("bad --gamma: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let queries: Vec<RegimeQuery> = match args.d {
        Some(d) => vec![RegimeQuery { b: b.clone(), d, gamma: gamma.clone(), forced: args.forced }],
        None => (1..=6)
            .flat_map(|d| {
                [true, false].map(|forced| RegimeQuery {
                    b: b.clone(),
                    d,
                    gamma: gamma.clone(),
                    forced,
                })
            })
            .collect(),
    };
    for q in &queries {
        println!("{}", regime_line(q));
    }
    if let Some(csv) = &args.csv {
        let mut out = String::from("d,forced,gamma,beta_sup,alpha_sup,zeta_sup,binding\n");
        for q in &queries {
            let r = evaluate(q);
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                q.d,
                q.forced,
                rat_str(&q.gamma),
                rat_str(&r.beta_sup),
                rat_str(&r.alpha_sup),
                rat_str(&r.zeta_sup),
                r.binding_constraint
            ));
        }
        if let Err(e) = std::fs::write(csv, out) {
            eprintln!("cannot write {}: {e}", csv.display());
            return ExitCode::from(EXIT_IO);
        }
        println!("table written to {}", csv.display());
    }
    ExitCode::SUCCESS
}

fn cmd_validate(args: &ValidateArgs) -> ExitCode {
    let spec: SymbolSpec = if let Some(path) = &args.table {
        let json = match std::fs::read_to_string(path) {
            Ok(j) => j,
            Err(e) => {
                eprintln!("cannot read {}: {e}", path.display());
                return ExitCode::from(EXIT_IO);
            }
        };
        match SymbolSpec::from_json_table(path.display().to_string(), &json) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("bad symbol table: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    } else {
        match args.builtin.as_deref().unwrap_or("ipm") {
            "ipm" => builtin_ipm(),
            other => {
                eprintln!("unknown builtin symbol '{other}' (available: ipm)");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    };
    let report = validate_symbol(&spec, args.range);
    let line = |name: &str, c: &wildscalar::symbols::PropertyCheck| {
        println!(
            "  {name:<16} {}  worst {:.3e} at ({}, {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.worst,
            c.at.0,
            c.at.1
        );
    };
    println!("symbol '{}' over |k| ≤ {}:", report.name, args.range);
    line("evenness", &report.evenness);
    line("degree-0", &report.degree_zero);
    line("ξ·m(ξ) = 0", &report.divergence_free);
    line("bounded", &report.bounded);
    if report.pass() {
        println!("all checks pass");
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CONFIG)
    }
}

fn cmd_report(dir: &Path) -> ExitCode {
    let ledger_path = dir.join("ledger.csv");
    let rows = match io::read_ledger(&ledger_path) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("cannot read {}: {e}", ledger_path.display());
            return ExitCode::from(EXIT_IO);
        }
    };
    if rows.is_empty() {
        println!("ledger is empty (no completed stages)");
        return ExitCode::SUCCESS;
    }
    println!("stages completed: {}", rows.len());
    println!(
        "{:>3} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "q", "R_T", "R_D", "R_N", "R_O(max)", "R_M", "‖R̃‖", "target δ"
    );
    for r in &rows {
        let ro = r.r_o.iter().cloned().fold(0.0f64, f64::max);
        println!(
            "{:>3} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            r.q, r.r_t, r.r_d, r.r_n, ro, r.r_m, r.rtil_total, r.delta_target
        );
    }
    let contracting = rows.windows(2).all(|w| w[1].rtil_total < w[0].rtil_total);
    let worst_pause = rows.iter().map(|r| r.pause_residual).fold(0.0f64, f64::max);
    println!("stress contraction: {}", if contracting || rows.len() < 2 { "yes" } else { "NO" });
    println!("worst pause residual: {worst_pause:.3e}");
    // Plot-ready series (q, ‖R̃‖, δ target, Hölder norm).
    let plot = dir.join("plot_series.csv");
    let mut out = String::from("q,rtil_total,delta_target,holder_alpha,pause_residual\n");
    for r in &rows {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e}\n",
            r.q, r.rtil_total, r.delta_target, r.holder_alpha, r.pause_residual
        ));
    }
    if let Err(e) = std::fs::write(&plot, out) {
        eprintln!("cannot write {}: {e}", plot.display());
        return ExitCode::from(EXIT_IO);
    }
    println!("plot series written to {}", plot.display());
    // Per-stage reports, if present.
    for q in 1..=rows.len() {
        let rp = io::stage_dir(dir, q).join("report.json");
        if rp.exists() {
            println!("stage report: {}", rp.display());
        }
    }
    ExitCode::SUCCESS
}
