//! Monte Carlo verification of the bounds and diagnostics of their equality
//! conditions.
//!
//! Two modes. Per step: `e_k` at a fixed `k` is sampled across independent
//! runs and compared with the bound at step `k`. Asymptotic: every error
//! past the burn-in of each run is pooled and compared with the entropy-rate
//! bound; the standard error then comes from contiguous batch means.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{lp_bound_asymptotic, lp_bound_at_step, mimo_bound_report, BoundForm, BoundReport, Horizon};
use crate::config::ExperimentConfig;
use crate::distributions::Exponent;
use crate::error::{Error, Result};
use crate::estimators::{
    covariance_det_estimate, density_fit_gg, lp_norm_estimate, lp_norm_estimate_blocked, mutual_information_estimate,
    power_product_estimate, whiteness_stats, DensityFit, WhitenessReport, DEFAULT_NEIGHBORS, JACKKNIFE_BLOCKS,
    WHITENESS_MI_PAIRS,
};
use crate::processes::DisturbanceModel;
use crate::rng::derive_seed;
use crate::simulator::{run_loop, ControllerPolicy, SimulationTrace};

/// A cell is a violation when `empirical < bound - VIOLATION_SIGMAS * std_error`.
pub const VIOLATION_SIGMAS: f64 = 3.0;
/// Gap ratios at or below this count as attaining the bound.
pub const EQUALITY_GAP_RATIO: f64 = 1.02;
/// Minimum post-burn-in length for the tightness diagnostics.
pub const TIGHTNESS_MIN_SAMPLES: usize = 10_000;
/// Lags in the Ljung–Box statistic of the tightness report.
pub const WHITENESS_LAGS: usize = 10;

/// Steps discarded before within-trace averaging: `max(10 * memory, 1000)`.
pub fn burn_in(model: &DisturbanceModel) -> usize {
    (10 * model.memory_length()).max(1000)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub target: Horizon,
    /// Post-burn-in steps per run (asymptotic mode only).
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub tightness: bool,
}

impl VerifyOptions {
    pub fn asymptotic(steps: usize, seed: u64) -> Self {
        VerifyOptions { target: Horizon::Asymptotic, steps, trials: 1, seed, tightness: true }
    }

    pub fn at_step(k: usize, trials: usize, seed: u64) -> Self {
        VerifyOptions { target: Horizon::AtStep(k), steps: 0, trials, seed, tightness: false }
    }
}

/// Equality diagnostics on one trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessReport {
    pub whiteness: WhitenessReport,
    pub whiteness_pass: bool,
    pub density_fit: DensityFit,
    /// `I(e_k; e_{k-1})`.
    pub mi_error_bits: f64,
    pub mi_error_std_error: f64,
    /// `I(e_k; d_{k-1})`.
    pub mi_disturbance_bits: f64,
    pub mi_disturbance_std_error: f64,
    /// The two estimates agree within three combined standard errors.
    pub innovation_identity: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductCheck {
    pub bound: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub gap_ratio: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub model: String,
    pub controller: String,
    pub bound: BoundReport,
    /// `L_p` norm estimate; the second-moment determinant for MIMO reports.
    pub empirical: f64,
    pub std_error: f64,
    pub gap_ratio: f64,
    pub violation: bool,
    pub tightness: Option<TightnessReport>,
    pub product: Option<ProductCheck>,
    pub runtime_ms: u64,
    pub seeds: Vec<u64>,
    pub samples: usize,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn attains_bound(&self) -> bool {
        self.gap_ratio <= EQUALITY_GAP_RATIO
    }
}

fn is_violation(empirical: f64, bound: f64, std_error: f64) -> bool {
    empirical < bound - VIOLATION_SIGMAS * std_error
}

/// p-independent part of the tightness diagnostics.
#[derive(Debug, Clone)]
struct TraceDiagnostics {
    whiteness: WhitenessReport,
    mi_disturbance_bits: f64,
    mi_disturbance_std_error: f64,
}

fn trace_diagnostics(trace: &SimulationTrace, burn_in: usize) -> Result<TraceDiagnostics> {
    if trace.dim != 1 {
        return Err(Error::Unsupported("tightness diagnostics of a vector trace".into()));
    }
    let n = trace.len().saturating_sub(burn_in);
    if n < TIGHTNESS_MIN_SAMPLES {
        return Err(Error::InsufficientData { needed: TIGHTNESS_MIN_SAMPLES, found: n });
    }
    let e = &trace.e[burn_in..];
    let whiteness = whiteness_stats(e, WHITENESS_LAGS)?;
    let pairs = (n - 1).min(WHITENESS_MI_PAIRS);
    let mi = mutual_information_estimate(
        &trace.e[burn_in + 1..burn_in + 1 + pairs],
        1,
        &trace.d[burn_in..burn_in + pairs],
        1,
        DEFAULT_NEIGHBORS,
    )?;
    Ok(TraceDiagnostics { whiteness, mi_disturbance_bits: mi.value_bits, mi_disturbance_std_error: mi.std_error_bits })
}

impl TraceDiagnostics {
    fn with_fit(&self, e: &[f64], p: Exponent) -> Result<TightnessReport> {
        let w = &self.whiteness;
        let tol = VIOLATION_SIGMAS * w.mi_lag1_std_error.hypot(self.mi_disturbance_std_error);
        Ok(TightnessReport {
            whiteness_pass: w.is_white(),
            density_fit: density_fit_gg(e, p)?,
            mi_error_bits: w.mi_lag1_bits,
            mi_error_std_error: w.mi_lag1_std_error,
            mi_disturbance_bits: self.mi_disturbance_bits,
            mi_disturbance_std_error: self.mi_disturbance_std_error,
            innovation_identity: (w.mi_lag1_bits - self.mi_disturbance_bits).abs() <= tol,
            whiteness: w.clone(),
        })
    }
}

/// Whiteness of `e`, GG(`p`) fit and the lag-1 mutual informations
/// `I(e_k; e_{k-1})`, `I(e_k; d_{k-1})`, all past `burn_in`.
pub fn tightness_report(trace: &SimulationTrace, p: Exponent, burn_in: usize) -> Result<TightnessReport> {
    trace_diagnostics(trace, burn_in)?.with_fit(&trace.e[burn_in..], p)
}

fn simulate_trials(
    model: &DisturbanceModel,
    controller: &dyn ControllerPolicy,
    length: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<SimulationTrace>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    (0..trials).into_par_iter().map(|t| run_loop(model, controller, length, derive_seed(seed, t as u64))).collect()
}

const NON_WHITE_NOTE: &str = "within-trace average of a non-white error sequence";

/// Asymptotic scalar report from already simulated runs.
fn asymptotic_report(
    model: &DisturbanceModel,
    traces: &[SimulationTrace],
    burn_in: usize,
    p: Exponent,
    diagnostics: Option<&TraceDiagnostics>,
) -> Result<VerificationReport> {
    let bound = lp_bound_asymptotic(model, p)?;
    let pooled: Vec<f64> = traces.iter().flat_map(|t| t.e[burn_in..].iter().copied()).collect();
    let est = lp_norm_estimate_blocked(&pooled, p, JACKKNIFE_BLOCKS * traces.len())?;
    let tightness = match diagnostics {
        Some(d) => Some(d.with_fit(&traces[0].e[burn_in..], p)?),
        None => None,
    };
    let mut notes = Vec::new();
    if tightness.as_ref().is_some_and(|t| !t.whiteness_pass) {
        notes.push(NON_WHITE_NOTE.to_string());
    }
    if est.downward_biased {
        notes.push("sample maximum underestimates the essential supremum".into());
    }
    Ok(VerificationReport {
        model: model.descriptor(),
        controller: traces[0].controller_descriptor.clone(),
        gap_ratio: est.value / bound.bound,
        violation: is_violation(est.value, bound.bound, est.std_error),
        bound,
        empirical: est.value,
        std_error: est.std_error,
        tightness,
        product: None,
        runtime_ms: 0,
        seeds: traces.iter().map(|t| t.seed).collect(),
        samples: pooled.len(),
        notes,
    })
}

/// Compares the `L_p` norm of the loop error with the analytic bound.
/// A violation is a field of the report, not an error.
pub fn verify_bound(
    model: &DisturbanceModel,
    controller: &dyn ControllerPolicy,
    p: Exponent,
    options: &VerifyOptions,
) -> Result<VerificationReport> {
    let start = Instant::now();
    if model.dim() != 1 {
        return Err(Error::Unsupported("scalar verification of a vector model; use verify_mimo_bound".into()));
    }
    let mut report = match options.target {
        Horizon::Asymptotic => {
            let burn = burn_in(model);
            let traces = simulate_trials(model, controller, burn + options.steps, options.trials, options.seed)?;
            let diag = if options.tightness { Some(trace_diagnostics(&traces[0], burn)?) } else { None };
            asymptotic_report(model, &traces, burn, p, diag.as_ref())?
        }
        Horizon::AtStep(k) => {
            let bound = lp_bound_at_step(model, p, k)?;
            let traces = simulate_trials(model, controller, k + 1, options.trials, options.seed)?;
            let samples: Vec<f64> = traces.iter().map(|t| t.e[k]).collect();
            let est = lp_norm_estimate(&samples, p)?;
            let mut notes = Vec::new();
            if options.tightness {
                notes.push("tightness diagnostics need a within-trace sample; skipped in per-step mode".into());
            }
            VerificationReport {
                model: model.descriptor(),
                controller: controller.descriptor(),
                gap_ratio: est.value / bound.bound,
                violation: is_violation(est.value, bound.bound, est.std_error),
                bound,
                empirical: est.value,
                std_error: est.std_error,
                tightness: None,
                product: None,
                runtime_ms: 0,
                seeds: traces.iter().map(|t| t.seed).collect(),
                samples: samples.len(),
                notes,
            }
        }
    };
    report.runtime_ms = start.elapsed().as_millis() as u64;
    Ok(report)
}

fn mimo_report(
    model: &DisturbanceModel,
    controller: String,
    samples: &[f64],
    horizon: Horizon,
    seeds: Vec<u64>,
) -> Result<VerificationReport> {
    let m = model.dim();
    let det_bound = mimo_bound_report(model, horizon, BoundForm::MimoDet)?;
    let prod_bound = mimo_bound_report(model, horizon, BoundForm::MimoProduct)?;
    let det = covariance_det_estimate(samples, m)?;
    let prod = power_product_estimate(samples, m)?;
    let product = ProductCheck {
        bound: prod_bound.bound,
        empirical: prod.product,
        std_error: prod.std_error,
        gap_ratio: prod.product / prod_bound.bound,
        violation: is_violation(prod.product, prod_bound.bound, prod.std_error),
    };
    let mut notes = Vec::new();
    if det.singular {
        notes.push("error second-moment matrix is numerically singular".into());
    }
    Ok(VerificationReport {
        model: model.descriptor(),
        controller,
        gap_ratio: det.det / det_bound.bound,
        violation: is_violation(det.det, det_bound.bound, det.std_error) || product.violation,
        bound: det_bound,
        empirical: det.det,
        std_error: det.std_error,
        tightness: None,
        product: Some(product),
        runtime_ms: 0,
        seeds,
        samples: samples.len() / m,
        notes,
    })
}

/// Determinant and per-channel product checks for a vector loop.
pub fn verify_mimo_bound(
    model: &DisturbanceModel,
    controller: &dyn ControllerPolicy,
    options: &VerifyOptions,
) -> Result<VerificationReport> {
    let start = Instant::now();
    let m = model.dim();
    if m < 2 {
        return Err(Error::Unsupported("MIMO verification needs a vector model".into()));
    }
    let mut report = match options.target {
        Horizon::Asymptotic => {
            let burn = burn_in(model);
            let traces = simulate_trials(model, controller, burn + options.steps, options.trials, options.seed)?;
            mimo_from_traces(model, &traces, burn)?
        }
        Horizon::AtStep(k) => {
            let traces = simulate_trials(model, controller, k + 1, options.trials, options.seed)?;
            let samples: Vec<f64> = traces.iter().flat_map(|t| t.e[k * m..(k + 1) * m].iter().copied()).collect();
            let seeds = traces.iter().map(|t| t.seed).collect();
            mimo_report(model, controller.descriptor(), &samples, Horizon::AtStep(k), seeds)?
        }
    };
    report.runtime_ms = start.elapsed().as_millis() as u64;
    Ok(report)
}

fn mimo_from_traces(model: &DisturbanceModel, traces: &[SimulationTrace], burn_in: usize) -> Result<VerificationReport> {
    let m = model.dim();
    let samples: Vec<f64> = traces.iter().flat_map(|t| t.e[burn_in * m..].iter().copied()).collect();
    let seeds = traces.iter().map(|t| t.seed).collect();
    mimo_report(model, traces[0].controller_descriptor.clone(), &samples, Horizon::Asymptotic, seeds)
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub cell_id: usize,
    /// Seed of the cell's run group; runs use `derive_seed(seed, trial)`.
    pub seed: u64,
    pub report: VerificationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub cell_id: usize,
    pub model: String,
    pub controller: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub cells: usize,
    pub violations: usize,
    /// Smallest gap ratio over all cells.
    pub worst_gap_ratio: Option<f64>,
    pub wall_time_ms: u64,
    pub failures: Vec<CellFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub cells: Vec<SweepCell>,
    pub failures: Vec<CellFailure>,
    pub summary: SweepSummary,
}

/// Verifies every `(model, controller instance, p)` cell of `config`.
///
/// Each `(model, controller)` pair is simulated once and its runs are reused
/// for every `p`; vector models get one MIMO cell instead. Cell ids are the
/// row-major index over models, controller instances and `p` values. Pairs
/// run in parallel on the current rayon pool; results are sorted by id.
pub fn sweep(config: &ExperimentConfig) -> std::result::Result<SweepOutcome, crate::config::ConfigError> {
    let start = Instant::now();
    let models = config.build_models()?;
    let instances = config.controller_instances();
    let np = config.p_values.len();
    let groups: Vec<(usize, usize)> =
        (0..models.len()).flat_map(|mi| (0..instances.len()).map(move |ci| (mi, ci))).collect();
    let results: Vec<(Vec<SweepCell>, Vec<CellFailure>)> = groups
        .par_iter()
        .map(|&(mi, ci)| {
            let group = (mi * instances.len() + ci) as u64;
            let seed = derive_seed(config.master_seed, group);
            let first_cell = group as usize * np;
            let model = &models[mi];
            let (entry, index) = instances[ci];
            let spec = &config.controllers[entry];
            let mut cells = Vec::new();
            let mut failures = Vec::new();
            let fail = |cell_id: usize, controller: String, e: Error| CellFailure {
                cell_id,
                model: model.descriptor(),
                controller,
                error: e.to_string(),
            };
            let t0 = Instant::now();
            let controller = match spec.build(index, model, config.master_seed) {
                Ok(c) => c,
                Err(e) => {
                    let label = format!("{spec:?}");
                    let n = if model.dim() > 1 { np.min(1) } else { np };
                    return (cells, (0..n).map(|j| fail(first_cell + j, label.clone(), e.clone())).collect());
                }
            };
            let timing = |r: &mut VerificationReport| {
                r.runtime_ms = if config.record_timing { t0.elapsed().as_millis() as u64 } else { 0 };
            };
            let ps: Vec<(usize, Exponent)> = config.p_values.iter().copied().enumerate().collect();
            let outcome = run_group(config, model, controller.as_ref(), seed, &ps);
            match outcome {
                Err(e) => {
                    let n = if model.dim() > 1 { np.min(1) } else { np };
                    failures.extend((0..n).map(|j| fail(first_cell + j, controller.descriptor(), e.clone())));
                }
                Ok(reports) => {
                    for (j, r) in reports {
                        match r {
                            Ok(mut report) => {
                                timing(&mut report);
                                cells.push(SweepCell { cell_id: first_cell + j, seed, report });
                            }
                            Err(e) => failures.push(fail(first_cell + j, controller.descriptor(), e)),
                        }
                    }
                }
            }
            (cells, failures)
        })
        .collect();
    let mut cells: Vec<SweepCell> = Vec::new();
    let mut failures = Vec::new();
    for (c, f) in results {
        cells.extend(c);
        failures.extend(f);
    }
    cells.sort_by_key(|c| c.cell_id);
    failures.sort_by_key(|f| f.cell_id);
    let summary = SweepSummary {
        cells: cells.len(),
        violations: cells.iter().filter(|c| c.report.violation).count(),
        worst_gap_ratio: cells.iter().map(|c| c.report.gap_ratio).min_by(f64::total_cmp),
        wall_time_ms: start.elapsed().as_millis() as u64,
        failures: failures.clone(),
    };
    Ok(SweepOutcome { cells, failures, summary })
}

type GroupResult = Vec<(usize, Result<VerificationReport>)>;

fn run_group(
    config: &ExperimentConfig,
    model: &DisturbanceModel,
    controller: &dyn ControllerPolicy,
    seed: u64,
    ps: &[(usize, Exponent)],
) -> Result<GroupResult> {
    if model.dim() != controller.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: controller.dim() });
    }
    let step = config.step.map(Horizon::AtStep);
    if model.dim() > 1 {
        // one determinant cell, filed under the first p
        let report = match step {
            Some(target) => verify_mimo_bound(
                model,
                controller,
                &VerifyOptions { target, steps: 0, trials: config.trials, seed, tightness: false },
            ),
            None => {
                let burn = burn_in(model);
                simulate_trials(model, controller, burn + config.horizon, config.trials, seed)
                    .and_then(|t| mimo_from_traces(model, &t, burn))
            }
        };
        return Ok(ps.first().map(|(j, _)| (*j, report)).into_iter().collect());
    }
    if let Some(target) = step {
        let options = VerifyOptions { target, steps: 0, trials: config.trials, seed, tightness: false };
        return Ok(ps.iter().map(|&(j, p)| (j, verify_bound(model, controller, p, &options))).collect());
    }
    let burn = burn_in(model);
    let traces = simulate_trials(model, controller, burn + config.horizon, config.trials, seed)?;
    let diag = if config.tightness { Some(trace_diagnostics(&traces[0], burn)) } else { None };
    Ok(ps
        .iter()
        .map(|&(j, p)| {
            let d = match &diag {
                Some(Ok(d)) => Some(d),
                Some(Err(e)) => return (j, Err(e.clone())),
                None => None,
            };
            (j, asymptotic_report(model, &traces, burn, p, d))
        })
        .collect())
}

#[derive(Serialize)]
struct CsvRow<'a> {
    cell_id: usize,
    model: &'a str,
    controller: &'a str,
    p: Exponent,
    k_or_asymptotic: Horizon,
    h_bits: f64,
    bound: f64,
    empirical: f64,
    std_error: f64,
    gap_ratio: f64,
    violation: bool,
    whiteness_pass: Option<bool>,
    ggfit_pass: Option<bool>,
    mi_lag1_bits: Option<f64>,
    seed: u64,
    runtime_ms: u64,
}

/// CSV of the cells in the given order. `mi_lag1_bits` is `I(e_k; d_{k-1})`.
pub fn write_cells_csv<W: Write>(cells: &[SweepCell], w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for c in cells {
        let r = &c.report;
        let t = r.tightness.as_ref();
        out.serialize(CsvRow {
            cell_id: c.cell_id,
            model: &r.model,
            controller: &r.controller,
            p: r.bound.p,
            k_or_asymptotic: r.bound.horizon,
            h_bits: r.bound.h_bits,
            bound: r.bound.bound,
            empirical: r.empirical,
            std_error: r.std_error,
            gap_ratio: r.gap_ratio,
            violation: r.violation,
            whiteness_pass: t.map(|t| t.whiteness_pass),
            ggfit_pass: t.map(|t| t.density_fit.pass),
            mi_lag1_bits: t.map(|t| t.mi_disturbance_bits),
            seed: c.seed,
            runtime_ms: r.runtime_ms,
        })
        .map_err(std::io::Error::other)?;
    }
    if cells.is_empty() {
        // header only
        out.write_record([
            "cell_id",
            "model",
            "controller",
            "p",
            "k_or_asymptotic",
            "h_bits",
            "bound",
            "empirical",
            "std_error",
            "gap_ratio",
            "violation",
            "whiteness_pass",
            "ggfit_pass",
            "mi_lag1_bits",
            "seed",
            "runtime_ms",
        ])?;
    }
    out.flush()
}

/// Writes `{stem}.csv` and `summary.json` into `dir`.
pub fn write_sweep_files(outcome: &SweepOutcome, dir: &Path, stem: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
    write_cells_csv(&outcome.cells, std::io::BufWriter::new(file))?;
    let summary = serde_json::to_string_pretty(&outcome.summary).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("summary.json"), summary + "\n")
}
