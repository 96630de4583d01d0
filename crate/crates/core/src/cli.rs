//! Command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 config error, 3 IO error,
//! 4 bound violation, 5 causality violation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{gw_lp_bound, lp_bound_asymptotic, lp_constant, mimo_det_bound, mimo_product_bound, spectral_lp_bound};
use crate::config::{ConfigError, ExperimentConfig, Mode};
use crate::processes::DisturbanceModel;
use crate::rng::derive_seed;
use crate::simulator::{causality_audit, closed_loop_audit, run_loop, AuditReport};
use crate::verify::{sweep, write_sweep_files};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;
pub const EXIT_CAUSALITY: i32 = 5;

/// Audit sizes used before `verify` and `sweep` and by `audit`.
const AUDIT_LENGTH: usize = 200;
const AUDIT_TRIALS: usize = 100;
const CLOSED_LOOP_TRIALS: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "entrolim", version, about = "Entropic L_p limits of strictly causal feedback loops")]
pub struct Cli {
    /// Defaults to the config's `mode`.
    #[command(subcommand)]
    pub command: Option<Command>,
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for simulation and estimation.
    #[arg(long, global = true, env = "ENTROLIM_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Bound table: direct, spectral and GW forms per model and p.
    Bound,
    /// Trace CSV and JSON header per (model, controller, seed).
    Simulate,
    /// Audit, then verify every cell; writes verify.csv, reports.json, summary.json.
    Verify,
    /// Audit, then verify every cell; writes sweep.csv, summary.json.
    Sweep,
    /// Open- and closed-loop causality audits.
    Audit,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Io(_) => EXIT_IO,
            Failure::Other(_) => EXIT_FAILURE,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Other(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

/// Parses the process arguments and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_SUCCESS
            }
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<i32, Failure> {
    let config = load_config(cli)?;
    let command = cli.command.unwrap_or(match config.mode {
        Mode::BoundOnly => Command::Bound,
        Mode::Simulate => Command::Simulate,
        Mode::Verify => Command::Verify,
        Mode::Sweep => Command::Sweep,
    });
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::Other(e.to_string()))?;
    pool.install(|| match command {
        Command::Bound => cmd_bound(&config),
        Command::Simulate => cmd_simulate(&config),
        Command::Verify => cmd_verify(&config, "verify", true),
        Command::Sweep => cmd_verify(&config, "sweep", false),
        Command::Audit => cmd_audit(&config),
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(io(dir))
}

#[derive(Serialize)]
struct BoundRow {
    model: String,
    p: crate::distributions::Exponent,
    h_bits: f64,
    #[serde(rename = "C_p")]
    c_p: f64,
    direct: f64,
    spectral: Option<f64>,
    gw: Option<f64>,
}

#[derive(Serialize)]
struct MimoRow {
    model: String,
    m: usize,
    h_bits: f64,
    det_bound: f64,
    product_bound: f64,
}

fn other(e: crate::Error) -> Failure {
    Failure::Other(e.to_string())
}

fn cmd_bound(config: &ExperimentConfig) -> Result<i32, Failure> {
    let models = config.build_models()?;
    let mut rows = Vec::new();
    let mut mimo = Vec::new();
    for model in &models {
        if model.dim() > 1 {
            let h = model.entropy_rate_bits();
            mimo.push(MimoRow {
                model: model.descriptor(),
                m: model.dim(),
                h_bits: h,
                det_bound: mimo_det_bound(h, model.dim()).map_err(other)?,
                product_bound: mimo_product_bound(h, model.dim()).map_err(other)?,
            });
            continue;
        }
        for &p in &config.p_values {
            let direct = lp_bound_asymptotic(model, p).map_err(other)?;
            let spectral = spectral_lp_bound(model, p).ok().map(|r| r.bound);
            let gw = gw_lp_bound(model, p).ok().map(|r| r.bound);
            rows.push(BoundRow {
                model: model.descriptor(),
                p,
                h_bits: direct.h_bits,
                c_p: lp_constant(p),
                direct: direct.bound,
                spectral,
                gw,
            });
        }
    }
    let mut table = String::new();
    let _ = writeln!(table, "{:<48} {:>6} {:>12} {:>12} {:>14} {:>14} {:>14}", "model", "p", "h_bits", "C_p", "direct", "spectral", "gw");
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.10}"));
    for r in &rows {
        let _ = writeln!(
            table,
            "{:<48} {:>6} {:>12.6} {:>12.6} {:>14.10} {:>14} {:>14}",
            r.model,
            r.p.to_string(),
            r.h_bits,
            r.c_p,
            r.direct,
            cell(r.spectral),
            cell(r.gw)
        );
    }
    for r in &mimo {
        let _ = writeln!(
            table,
            "{:<48} m={:<4} {:>12.6} det {:>14.10} product {:>14.10}",
            r.model, r.m, r.h_bits, r.det_bound, r.product_bound
        );
    }
    print!("{table}");
    let dir = &config.output_dir;
    create_dir(dir)?;
    write_csv(&dir.join("bounds.csv"), &rows)?;
    if !mimo.is_empty() {
        write_csv(&dir.join("mimo_bounds.csv"), &mimo)?;
    }
    Ok(EXIT_SUCCESS)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io(path))
}

/// `(model index, controller instance index, group seed)` for every pair,
/// using the sweep's seed derivation.
fn pairs(config: &ExperimentConfig, models: &[DisturbanceModel]) -> Vec<(usize, usize, u64)> {
    let n = config.controller_instances().len();
    (0..models.len())
        .flat_map(|mi| (0..n).map(move |ci| (mi, ci)))
        .map(|(mi, ci)| (mi, ci, derive_seed(config.master_seed, (mi * n + ci) as u64)))
        .collect()
}

fn cmd_simulate(config: &ExperimentConfig) -> Result<i32, Failure> {
    let models = config.build_models()?;
    let instances = config.controller_instances();
    let dir = &config.output_dir;
    create_dir(dir)?;
    let mut written = 0;
    for (mi, ci, group_seed) in pairs(config, &models) {
        let model = &models[mi];
        let (entry, index) = instances[ci];
        let controller = match config.controllers[entry].build(index, model, config.master_seed) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("skipping model {mi} / controller {ci}: {e}");
                continue;
            }
        };
        for t in 0..config.trials {
            let seed = derive_seed(group_seed, t as u64);
            let trace = match run_loop(model, controller.as_ref(), config.horizon, seed) {
                Ok(tr) => tr,
                Err(e) => {
                    eprintln!("skipping model {mi} / controller {ci}: {e}");
                    break;
                }
            };
            trace.write_files(dir, &format!("trace_m{mi}_c{ci}_s{t}")).map_err(io(dir))?;
            written += 1;
        }
    }
    println!("wrote {written} traces to {}", dir.display());
    Ok(EXIT_SUCCESS)
}

#[derive(Debug, Serialize)]
struct AuditRow {
    model: String,
    controller: String,
    open_loop: AuditReport,
    closed_loop: Option<AuditReport>,
}

impl AuditRow {
    fn passed(&self) -> bool {
        self.open_loop.passed && self.closed_loop.as_ref().is_none_or(|c| c.passed)
    }
}

fn run_audits(config: &ExperimentConfig, models: &[DisturbanceModel]) -> Result<Vec<AuditRow>, Failure> {
    let instances = config.controller_instances();
    let rows: Vec<Option<AuditRow>> = pairs(config, models)
        .par_iter()
        .map(|&(mi, ci, seed)| {
            let model = &models[mi];
            let (entry, index) = instances[ci];
            let controller = config.controllers[entry].build(index, model, config.master_seed).ok()?;
            let open_loop = causality_audit(controller.as_ref(), AUDIT_LENGTH, AUDIT_TRIALS, seed).ok()?;
            let closed_loop = if controller.dim() == model.dim() {
                closed_loop_audit(model, controller.as_ref(), AUDIT_LENGTH, CLOSED_LOOP_TRIALS, seed).ok()
            } else {
                None
            };
            Some(AuditRow { model: model.descriptor(), controller: controller.descriptor(), open_loop, closed_loop })
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn report_audits(rows: &[AuditRow]) -> bool {
    let mut ok = true;
    for r in rows.iter().filter(|r| !r.passed()) {
        ok = false;
        let idx = &r.open_loop.violating_indices;
        eprintln!(
            "causality violation: {} on {} (open-loop indices {:?}{})",
            r.controller,
            r.model,
            &idx[..idx.len().min(10)],
            if idx.len() > 10 { ", ..." } else { "" }
        );
    }
    ok
}

fn cmd_audit(config: &ExperimentConfig) -> Result<i32, Failure> {
    let models = config.build_models()?;
    let rows = run_audits(config, &models)?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    let path = dir.join("audit.json");
    let json = serde_json::to_string_pretty(&rows).map_err(|e| Failure::Other(e.to_string()))?;
    std::fs::write(&path, json + "\n").map_err(io(&path))?;
    let failed = rows.iter().filter(|r| !r.passed()).count();
    println!("audited {} controller/model pairs, {failed} failed", rows.len());
    Ok(if report_audits(&rows) { EXIT_SUCCESS } else { EXIT_CAUSALITY })
}

fn cmd_verify(config: &ExperimentConfig, stem: &str, full_reports: bool) -> Result<i32, Failure> {
    let models = config.build_models()?;
    let audits = run_audits(config, &models)?;
    if !report_audits(&audits) {
        return Ok(EXIT_CAUSALITY);
    }
    let outcome = sweep(config)?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    write_sweep_files(&outcome, dir, stem).map_err(io(dir))?;
    if full_reports {
        let path = dir.join("reports.json");
        let json = serde_json::to_string_pretty(&outcome.cells).map_err(|e| Failure::Other(e.to_string()))?;
        std::fs::write(&path, json + "\n").map_err(io(&path))?;
    }
    let s = &outcome.summary;
    println!(
        "{} cells, {} violations, worst gap ratio {}, {} failed cells",
        s.cells,
        s.violations,
        s.worst_gap_ratio.map_or("-".to_string(), |g| format!("{g:.6}")),
        s.failures.len()
    );
    for f in &s.failures {
        eprintln!("cell {} ({} / {}): {}", f.cell_id, f.model, f.controller, f.error);
    }
    for c in outcome.cells.iter().filter(|c| c.report.violation) {
        let r = &c.report;
        eprintln!(
            "violation in cell {}: {} / {} p={} empirical {} < bound {} - 3 x {}",
            c.cell_id, r.model, r.controller, r.bound.p, r.empirical, r.bound.bound, r.std_error
        );
    }
    Ok(if s.violations > 0 { EXIT_VIOLATION } else { EXIT_SUCCESS })
}
