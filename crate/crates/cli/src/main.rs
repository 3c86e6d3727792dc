//! `minnaert` — runs the bubble-screen experiments from a TOML config and writes
//! CSV tables plus a run manifest.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 solver failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use minnaert_core::geometry::{counting_scaling_check, KFunction, SurfaceKind};
use minnaert_core::harness::config::ExperimentConfig;
use minnaert_core::harness::experiments::{self, compare_fields, setup, write_rows, RunSetup};
use minnaert_core::harness::output::{resolve_output_dir, OutputDir};
use minnaert_core::model::validate_conditions;
use minnaert_core::Result;

#[derive(Parser, Debug)]
#[command(name = "minnaert", version, about = "Time-domain scattering by bubble screens")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the configuration and report the solvability conditions.
    Validate(Common),
    /// Point-scatterer (bubble cluster) run.
    Foldy(Common),
    /// Effective screen, time-domain delay solver.
    Effective(Common),
    /// Effective screen, convolution quadrature.
    Cq(Common),
    /// Point scatterers vs effective screen at one ε.
    Compare(Common),
    /// ε-convergence sweep.
    Sweep(Common),
    /// Resonance-regime sweep over scaled ω_M and C̄.
    Regimes(Common),
    /// Inverse-distance sums against the counting bounds.
    Counting(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration; defaults are used when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (relative paths honour MINNAERT_OUTPUT_ROOT).
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bubble scale ε for single runs.
    #[arg(long)]
    eps: Option<f64>,
    /// Comma-separated ε list for `sweep`.
    #[arg(long, value_delimiter = ',')]
    sweep_eps: Option<Vec<f64>>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    safety: Option<f64>,
    #[arg(long)]
    max_step: Option<f64>,
    #[arg(long)]
    surface: Option<SurfaceKind>,
    /// Constant bubble count per patch minus one.
    #[arg(long)]
    k: Option<f64>,
    /// Downgrade failed solvability conditions to warnings.
    #[arg(long)]
    warn_only: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.eps {
            config.materials.eps = v;
        }
        if let Some(v) = &self.sweep_eps {
            config.sweep.eps = v.clone();
            config.sweep.d = None;
        }
        if let Some(v) = self.t_end {
            config.time.t_end = v;
        }
        if let Some(v) = self.safety {
            config.time.safety = v;
        }
        if let Some(v) = self.max_step {
            config.time.max_step = v;
        }
        if let Some(v) = self.surface {
            config.surface.kind = v;
        }
        if let Some(v) = self.k {
            config.k = KFunction::Constant { value: v };
        }
        if let Some(v) = &self.out {
            config.output.dir = v.clone();
        }
        config.warn_only |= self.warn_only;
        config.validate()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    let (name, common) = match &command {
        Command::Validate(c) => ("validate", c),
        Command::Foldy(c) => ("foldy", c),
        Command::Effective(c) => ("effective", c),
        Command::Cq(c) => ("cq", c),
        Command::Compare(c) => ("compare", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Regimes(c) => ("regimes", c),
        Command::Counting(c) => ("counting", c),
    };
    let config = common.load()?;
    let start = Instant::now();
    let mut out = OutputDir::create(&resolve_output_dir(&config.output.dir))?;
    out.write("config.toml", |w| Ok(w.write_all(config.to_toml().as_bytes())?))?;
    let mut notes = Vec::new();
    match command {
        Command::Validate(_) => validate(&config, &mut out, &mut notes)?,
        Command::Foldy(_) => {
            let s = single_setup(&config, &mut out)?;
            let (traces, field) = experiments::run_foldy(&s, &config)?;
            out.write("foldy_traces.csv", |w| {
                traces.write_csv(w, "bubble_id", ["Y", "Yp", "Ypp"])
            })?;
            out.write("foldy_field.csv", |w| field.write_csv(w))?;
        }
        Command::Effective(_) => {
            let s = single_setup(&config, &mut out)?;
            let (trace, field) = experiments::run_effective(&s, &config)?;
            out.write("effective_trace.csv", |w| {
                minnaert_core::effective::export_trace(&trace, w)
            })?;
            out.write("effective_field.csv", |w| field.write_csv(w))?;
        }
        Command::Cq(_) => {
            let s = single_setup(&config, &mut out)?;
            let (solution, field) = experiments::run_cq(&s, &config)?;
            out.write("cq_trace.csv", |w| solution.write_csv(w))?;
            out.write("cq_field.csv", |w| field.write_csv(w))?;
        }
        Command::Compare(_) => {
            let s = single_setup(&config, &mut out)?;
            let (_, u) = experiments::run_foldy(&s, &config).map_err(|e| e.in_stage("point scatterers"))?;
            let (_, w) = experiments::run_effective(&s, &config).map_err(|e| e.in_stage("effective"))?;
            let err = compare_fields(&u, &w)?;
            println!(
                "M = {}  sup = {:.4e}  L2 = {:.4e}  rel L2 = {:.4e}",
                s.cluster.len(),
                err.sup,
                err.l2,
                err.rel_l2
            );
            out.write("foldy_field.csv", |o| u.write_csv(o))?;
            out.write("effective_field.csv", |o| w.write_csv(o))?;
            out.write("errors.csv", |o| write_rows(&[err], o))?;
        }
        Command::Sweep(_) => {
            let result = experiments::convergence_sweep(&config)?;
            for row in &result.rows {
                println!(
                    "eps = {:<10.6}  M = {:<5}  sup = {:.4e}  L2 = {:.4e}",
                    row.eps, row.bubbles, row.sup_error, row.l2_error
                );
                notes.push(format!("eps {} ran in {:.2} s", row.eps, row.runtime_s));
            }
            println!(
                "slope (L2) = {:.3} ± {:.1e}   slope (sup) = {:.3} ± {:.1e}",
                result.slope_l2, result.residual_l2, result.slope_sup, result.residual_sup
            );
            if !result.strictly_decreasing() {
                warn!("errors are not strictly decreasing in eps");
            }
            out.write("sweep.csv", |w| result.write_csv(w))?;
            out.write("slope.csv", |w| {
                writeln!(w, "norm,slope,residual")?;
                writeln!(w, "l2,{},{}", result.slope_l2, result.residual_l2)?;
                writeln!(w, "sup,{},{}", result.slope_sup, result.residual_sup)?;
                Ok(())
            })?;
        }
        Command::Regimes(_) => {
            let rows = experiments::regime_sweep(&config, &config.regimes.factors)?;
            for r in &rows {
                println!(
                    "omega x{:<6} cbar x{:<6} sup|W| = {:.4e} ({:.3e})  transmitted = {:.4e} ({:.3e})",
                    r.omega_factor, r.cbar_factor, r.sup_scattered, r.sup_ratio, r.transmitted_energy, r.energy_ratio
                );
            }
            out.write("regimes.csv", |w| write_rows(&rows, w))?;
        }
        Command::Counting(_) => {
            let surface = config.surface()?;
            let mut rows = Vec::new();
            for k in 1..=3 {
                for row in counting_scaling_check(&surface, &config.counting.d, k)? {
                    println!(
                        "k = {k}  d = {:<8.5} sum = {:.4e}  ratio = {:.4}",
                        row.d, row.max_sum, row.ratio
                    );
                    rows.push((k, row));
                }
            }
            out.write("counting.csv", |w| {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(["k", "d", "bubbles", "max_sum", "bound", "ratio"])?;
                for (k, r) in &rows {
                    csv.write_record([
                        k.to_string(),
                        r.d.to_string(),
                        r.bubbles.to_string(),
                        r.max_sum.to_string(),
                        r.bound.to_string(),
                        r.ratio.to_string(),
                    ])?;
                }
                csv.flush()?;
                Ok(())
            })?;
        }
    }
    let root = out.root().to_path_buf();
    out.commit(name, &config, start.elapsed().as_secs_f64(), notes)?;
    info!("{name} finished in {:.2} s", start.elapsed().as_secs_f64());
    println!("wrote {}", root.display());
    Ok(())
}

fn single_setup(config: &ExperimentConfig, out: &mut OutputDir) -> Result<RunSetup> {
    let s = setup(config, config.materials.eps).map_err(|e| e.in_stage("setup"))?;
    info!("{} bubbles, {} steps of {}", s.cluster.len(), s.grid.steps, s.grid.h);
    out.write("cluster.csv", |w| s.cluster.write_csv(w))?;
    out.write("rule.csv", |w| s.rule.write_csv(w))?;
    Ok(s)
}

fn validate(config: &ExperimentConfig, out: &mut OutputDir, notes: &mut Vec<String>) -> Result<()> {
    let s = setup(config, config.materials.eps)?;
    let report = validate_conditions(&s.params, &s.cluster)?;
    print!("{}", report.to_key_value());
    if !(report.pass_inversion && report.pass_resonance) {
        let msg = "solvability conditions not satisfied".to_string();
        warn!("{msg}");
        notes.push(msg);
    }
    out.write("validation.txt", |w| Ok(w.write_all(report.to_key_value().as_bytes())?))?;
    out.write("validation.csv", |w| {
        writeln!(
            w,
            "cond_inversion_lhs,cond_resonance_lhs,omega_m_sq,k_max,pass_inversion,pass_resonance"
        )?;
        writeln!(w, "{}", report.to_csv_row())?;
        Ok(())
    })?;
    out.write("cluster.csv", |w| s.cluster.write_csv(w))?;
    Ok(())
}
