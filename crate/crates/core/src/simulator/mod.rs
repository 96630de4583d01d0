//! The generic loop `e_k = d_k + z_k`, `z_k = g_k(e_0..e_{k-1})`.
//!
//! Controllers never hold hidden state between steps. Everything a policy
//! needs is recomputable from the error and output histories; the optional
//! `memo` buffer is a per-run cache of such recomputable values, created
//! empty at `k = 0` and handed back at every step in order. Replaying a
//! prefix with a fresh memo therefore reproduces the same outputs, which is
//! what the causality audit relies on.

mod audit;
mod compose;
mod controllers;

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::DisturbanceModel;
use crate::rng::seeded_stream;

pub use audit::{causality_audit, causality_audit_all_indices, closed_loop_audit, AuditReport};
pub use compose::{compose_loop, CompositionOrder, LinearStage, Stage};
pub use controllers::{
    learned_controller, predictor_controller, random_causal_controller, zero_controller, AnticipatoryFixture,
    ConstantController, ErrorFirController, LearnedController, LearnedFeatures, PredictorController,
    RandomCausalController, ZeroController,
};

/// Read-only view of a signal history with `dim` values per step.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> History<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        debug_assert!(dim > 0 && data.len().is_multiple_of(dim));
        History { data, dim }
    }

    /// Number of recorded steps.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Values at step `j`; panics if `j` is not recorded.
    pub fn at(&self, j: usize) -> &'a [f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn get(&self, j: usize) -> Option<&'a [f64]> {
        (j < self.len()).then(|| self.at(j))
    }

    /// First channel at step `j`.
    pub fn scalar(&self, j: usize) -> f64 {
        self.data[j * self.dim]
    }

    pub fn as_slice(&self) -> &'a [f64] {
        self.data
    }
}

/// A causal feedback map `z_k = g_k(e_0..e_{k-1})` (the output at `k = 0` is `z_0`).
pub trait ControllerPolicy: Send + Sync {
    fn dim(&self) -> usize;

    fn descriptor(&self) -> String;

    /// Writes `z_k` into `out` (length `dim()`).
    ///
    /// `errors` and `outputs` hold at least `k` steps and may hold more; a
    /// strictly causal policy reads only indices `< k`.
    fn step(&self, k: usize, errors: History<'_>, outputs: History<'_>, memo: &mut Vec<f64>, out: &mut [f64]);
}

impl<T: ControllerPolicy + ?Sized> ControllerPolicy for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
    fn step(&self, k: usize, errors: History<'_>, outputs: History<'_>, memo: &mut Vec<f64>, out: &mut [f64]) {
        (**self).step(k, errors, outputs, memo, out)
    }
}

impl<T: ControllerPolicy + ?Sized> ControllerPolicy for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
    fn step(&self, k: usize, errors: History<'_>, outputs: History<'_>, memo: &mut Vec<f64>, out: &mut [f64]) {
        (**self).step(k, errors, outputs, memo, out)
    }
}

/// Aligned `d`, `z`, `e` sequences of one closed-loop run, flattened with
/// `dim` values per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub dim: usize,
    pub d: Vec<f64>,
    pub z: Vec<f64>,
    pub e: Vec<f64>,
    pub seed: u64,
    pub model_descriptor: String,
    pub controller_descriptor: String,
}

/// Header written next to a trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub seed: u64,
    pub model: String,
    pub controller: String,
    pub length: usize,
    pub dim: usize,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.d.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn errors(&self) -> History<'_> {
        History::new(&self.e, self.dim)
    }

    pub fn outputs(&self) -> History<'_> {
        History::new(&self.z, self.dim)
    }

    pub fn disturbances(&self) -> History<'_> {
        History::new(&self.d, self.dim)
    }

    /// Channel `c` of `e` from step `start` on.
    pub fn error_channel(&self, c: usize, start: usize) -> Vec<f64> {
        self.e.chunks(self.dim).skip(start).map(|row| row[c]).collect()
    }

    pub fn disturbance_channel(&self, c: usize, start: usize) -> Vec<f64> {
        self.d.chunks(self.dim).skip(start).map(|row| row[c]).collect()
    }

    /// `e_k == d_k + z_k` bit-for-bit at every step.
    pub fn satisfies_loop_identity(&self) -> bool {
        self.d.len() == self.z.len()
            && self.z.len() == self.e.len()
            && self.d.iter().zip(&self.z).zip(&self.e).all(|((d, z), e)| *e == d + z)
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            seed: self.seed,
            model: self.model_descriptor.clone(),
            controller: self.controller_descriptor.clone(),
            length: self.len(),
            dim: self.dim,
        }
    }

    /// CSV with columns `k,d,z,e`, or `k,d_0..,z_0..,e_0..` for vector signals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut line = String::from("k");
        for name in ["d", "z", "e"] {
            if self.dim == 1 {
                let _ = write!(line, ",{name}");
            } else {
                for c in 0..self.dim {
                    let _ = write!(line, ",{name}_{c}");
                }
            }
        }
        writeln!(w, "{line}")?;
        for k in 0..self.len() {
            line.clear();
            let _ = write!(line, "{k}");
            for signal in [&self.d, &self.z, &self.e] {
                for v in &signal[k * self.dim..(k + 1) * self.dim] {
                    let _ = write!(line, ",{v}");
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> std::io::Result<()> {
        let csv = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        self.write_csv(std::io::BufWriter::new(csv))?;
        let header = serde_json::to_string_pretty(&self.header()).map_err(std::io::Error::other)?;
        std::fs::write(dir.join(format!("{stem}.json")), header + "\n")
    }
}

/// Options beyond the default deterministic `z_0`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LoopOptions {
    /// Adds `N(0, s^2)` noise, independent of the disturbance, to `z_0`.
    pub initial_output_noise: Option<f64>,
}

/// Runs `length` steps of the loop on a stationary path of `model`.
pub fn run_loop(
    model: &DisturbanceModel,
    controller: &dyn ControllerPolicy,
    length: usize,
    seed: u64,
) -> Result<SimulationTrace> {
    run_loop_with(model, controller, length, seed, LoopOptions::default())
}

pub fn run_loop_with(
    model: &DisturbanceModel,
    controller: &dyn ControllerPolicy,
    length: usize,
    seed: u64,
    options: LoopOptions,
) -> Result<SimulationTrace> {
    if model.dim() != controller.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: controller.dim() });
    }
    let d = model.sample_path(length, seed);
    let mut trace = run_loop_on_disturbance(d, model.dim(), controller, seed, options)?;
    trace.model_descriptor = model.descriptor();
    Ok(trace)
}

/// Runs the loop on a given disturbance sequence (flattened, `dim` per step).
pub fn run_loop_on_disturbance(
    d: Vec<f64>,
    dim: usize,
    controller: &dyn ControllerPolicy,
    seed: u64,
    options: LoopOptions,
) -> Result<SimulationTrace> {
    if controller.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: controller.dim() });
    }
    if !d.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter("disturbance length is not a multiple of dim".into()));
    }
    let length = d.len() / dim;
    let mut z = Vec::with_capacity(d.len());
    let mut e = Vec::with_capacity(d.len());
    let mut memo = Vec::new();
    let mut out = vec![0.0; dim];
    for k in 0..length {
        controller.step(k, History::new(&e, dim), History::new(&z, dim), &mut memo, &mut out);
        if k == 0 {
            if let Some(std) = options.initial_output_noise {
                let mut rng = seeded_stream(seed, 1);
                for v in out.iter_mut() {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    *v += std * n;
                }
            }
        }
        for c in 0..dim {
            z.push(out[c]);
            e.push(d[k * dim + c] + out[c]);
        }
    }
    Ok(SimulationTrace {
        dim,
        d,
        z,
        e,
        seed,
        model_descriptor: "given".into(),
        controller_descriptor: controller.descriptor(),
    })
}
