use super::{ControllerPolicy, History};
use crate::error::{Error, Result};

/// A single-input single-output causal system `y_k = f_k(u_0..u_k, y_0..y_{k-1})`.
pub trait Stage: Send + Sync {
    /// Whether `y_k` depends only on `u_0..u_{k-1}`.
    fn is_strictly_causal(&self) -> bool;

    /// Output `y_k`. `inputs` holds `u_0..u_k` for a causal stage and
    /// `u_0..u_{k-1}` for a strictly causal one; `past_outputs` holds `y_0..y_{k-1}`.
    fn respond(&self, inputs: &[f64], past_outputs: &[f64]) -> f64;

    fn descriptor(&self) -> String;
}

/// `y_k = sum_i b_i u_{k-delay-i} + sum_j a_j y_{k-1-j}`.
#[derive(Debug, Clone)]
pub struct LinearStage {
    feedforward: Vec<f64>,
    feedback: Vec<f64>,
    delay: usize,
}

impl LinearStage {
    pub fn new(feedforward: Vec<f64>, feedback: Vec<f64>, delay: usize) -> Self {
        LinearStage { feedforward, feedback, delay }
    }

    pub fn unit_delay() -> Self {
        Self::new(vec![1.0], Vec::new(), 1)
    }

    pub fn gain(g: f64) -> Self {
        Self::new(vec![g], Vec::new(), 0)
    }
}

impl Stage for LinearStage {
    fn is_strictly_causal(&self) -> bool {
        self.delay >= 1
    }

    fn respond(&self, inputs: &[f64], past_outputs: &[f64]) -> f64 {
        let k = if self.is_strictly_causal() { inputs.len() } else { inputs.len() - 1 };
        let mut y = 0.0;
        for (i, b) in self.feedforward.iter().enumerate() {
            if let Some(idx) = k.checked_sub(self.delay + i) {
                y += b * inputs[idx];
            }
        }
        for (j, a) in self.feedback.iter().enumerate() {
            if let Some(idx) = k.checked_sub(1 + j) {
                y += a * past_outputs[idx];
            }
        }
        y
    }

    fn descriptor(&self) -> String {
        format!("linear(b={:?},a={:?},delay={})", self.feedforward, self.feedback, self.delay)
    }
}

/// Series order of a two-stage loop map from `e` to `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompositionOrder {
    /// `e -> P -> K -> z`: the plant sees the error first.
    KP,
    /// `e -> K -> P -> z`: the controller sees the error first.
    PK,
}

/// Series connection of a plant and a controller, acting as a loop policy.
/// The intermediate signal is kept in the run memo.
pub struct ComposedPolicy {
    first: Box<dyn Stage>,
    second: Box<dyn Stage>,
    order: CompositionOrder,
}

/// Builds the composite `e -> z` map; at least one stage must be strictly causal.
pub fn compose_loop(
    plant: Box<dyn Stage>,
    controller: Box<dyn Stage>,
    order: CompositionOrder,
) -> Result<ComposedPolicy> {
    if !plant.is_strictly_causal() && !controller.is_strictly_causal() {
        return Err(Error::InvalidParameter(
            "neither plant nor controller is strictly causal; the loop is not well posed".into(),
        ));
    }
    let (first, second) = match order {
        CompositionOrder::KP => (plant, controller),
        CompositionOrder::PK => (controller, plant),
    };
    Ok(ComposedPolicy { first, second, order })
}

impl ControllerPolicy for ComposedPolicy {
    fn dim(&self) -> usize {
        1
    }

    fn descriptor(&self) -> String {
        let tag = match self.order {
            CompositionOrder::KP => "KP",
            CompositionOrder::PK => "PK",
        };
        format!("compose[{tag}]({} -> {})", self.first.descriptor(), self.second.descriptor())
    }

    fn step(&self, k: usize, errors: History<'_>, outputs: History<'_>, memo: &mut Vec<f64>, out: &mut [f64]) {
        let e = errors.as_slice();
        let z = &outputs.as_slice()[..k];
        // memo holds the intermediate signal v
        if self.first.is_strictly_causal() {
            while memo.len() <= k {
                let j = memo.len();
                let v = self.first.respond(&e[..j], &memo[..j]);
                memo.push(v);
            }
            let inputs = if self.second.is_strictly_causal() { &memo[..k] } else { &memo[..=k] };
            out[0] = self.second.respond(inputs, z);
        } else {
            while memo.len() < k {
                let j = memo.len();
                let v = self.first.respond(&e[..=j], &memo[..j]);
                memo.push(v);
            }
            out[0] = self.second.respond(&memo[..k], z);
        }
    }
}
