use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{ControllerPolicy, History, SimulationTrace};
use crate::error::{Error, Result};
use crate::processes::{DisturbanceModel, ModelKind};
use crate::rng::seeded_stream;

/// Largest predictor order kept for ARMA models with an MA part.
const MAX_PREDICTOR_ORDER: usize = 2000;

/// Appends `d_j = e_j - z_j` to `memo` for every `j < k` not yet cached.
fn reconstruct_disturbance(k: usize, errors: History<'_>, outputs: History<'_>, memo: &mut Vec<f64>) {
    while memo.len() < k {
        let j = memo.len();
        memo.push(errors.scalar(j) - outputs.scalar(j));
    }
}

#[derive(Debug, Clone)]
pub struct ZeroController {
    dim: usize,
}

pub fn zero_controller(dim: usize) -> ZeroController {
    ZeroController { dim }
}

impl ControllerPolicy for ZeroController {
    fn dim(&self) -> usize {
        self.dim
    }
    fn descriptor(&self) -> String {
        "zero".into()
    }
    fn step(&self, _k: usize, _e: History<'_>, _z: History<'_>, _memo: &mut Vec<f64>, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Emits the same vector at every step.
#[derive(Debug, Clone)]
pub struct ConstantController {
    value: Vec<f64>,
}

impl ConstantController {
    pub fn new(value: Vec<f64>) -> Self {
        assert!(!value.is_empty());
        ConstantController { value }
    }
}

impl ControllerPolicy for ConstantController {
    fn dim(&self) -> usize {
        self.value.len()
    }
    fn descriptor(&self) -> String {
        format!("constant({:?})", self.value)
    }
    fn step(&self, _k: usize, _e: History<'_>, _z: History<'_>, _memo: &mut Vec<f64>, out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }
}

#[derive(Debug, Clone)]
enum PredictorKind {
    /// `table[n]` are the order-`n` taps; orders beyond the table reuse the last row.
    Scalar { table: Vec<Vec<f64>> },
    Vector { transition: DMatrix<f64> },
}

/// Cancels the model's optimal one-step prediction: `z_k = -E[d_k | d_0..d_{k-1}]`
/// (best linear prediction for non-Gaussian AR models).
///
/// The past disturbance is reconstructed as `d_j = e_j - z_j`.
#[derive(Debug, Clone)]
pub struct PredictorController {
    dim: usize,
    kind: PredictorKind,
    model: String,
}

pub fn predictor_controller(model: &DisturbanceModel) -> Result<PredictorController> {
    let kind = match model.kind() {
        ModelKind::Iid { .. } => PredictorKind::Scalar { table: vec![Vec::new()] },
        ModelKind::GenGaussAr { ar, .. } => {
            PredictorKind::Scalar { table: levinson_rows(model, ar.len())? }
        }
        ModelKind::GaussArma { ar, ma, innovation_variance } => {
            if ma.is_empty() {
                PredictorKind::Scalar { table: levinson_rows(model, ar.len())? }
            } else {
                let limit = MAX_PREDICTOR_ORDER.min(model.levinson_horizon());
                let full = model.predictor_table(limit)?;
                let target = innovation_variance * (1.0 + 1e-13);
                let order = (0..=limit).find(|&n| full.error_variance(n) <= target).unwrap_or(limit);
                PredictorKind::Scalar { table: (0..=order).map(|n| full.coefficients(n).to_vec()).collect() }
            }
        }
        ModelKind::VectorGaussAr { transition, .. } => PredictorKind::Vector { transition: transition.clone() },
    };
    Ok(PredictorController { dim: model.dim(), kind, model: model.descriptor() })
}

fn levinson_rows(model: &DisturbanceModel, order: usize) -> Result<Vec<Vec<f64>>> {
    let table = model.predictor_table(order)?;
    Ok((0..=order).map(|n| table.coefficients(n).to_vec()).collect())
}

impl PredictorController {
    /// Taps used at step `k`.
    pub fn taps_at(&self, k: usize) -> Option<&[f64]> {
        match &self.kind {
            PredictorKind::Scalar { table } => Some(&table[k.min(table.len() - 1)]),
            PredictorKind::Vector { .. } => None,
        }
    }
}

impl ControllerPolicy for PredictorController {
    fn dim(&self) -> usize {
        self.dim
    }

    fn descriptor(&self) -> String {
        format!("predictor[{}]", self.model)
    }

    fn step(&self, k: usize, errors: History<'_>, outputs: History<'_>, memo: &mut Vec<f64>, out: &mut [f64]) {
        if k == 0 {
            out.fill(0.0);
            return;
        }
        match &self.kind {
            PredictorKind::Scalar { table } => {
                reconstruct_disturbance(k, errors, outputs, memo);
                let taps = &table[k.min(table.len() - 1)];
                let mut pred = 0.0;
                for (i, a) in taps.iter().enumerate() {
                    pred += a * memo[k - 1 - i];
                }
                out[0] = -pred;
            }
            PredictorKind::Vector { transition } => {
                let (e, z) = (errors.at(k - 1), outputs.at(k - 1));
                for (r, o) in out.iter_mut().enumerate() {
                    let mut pred = 0.0;
                    for c in 0..self.dim {
                        pred += transition[(r, c)] * (e[c] - z[c]);
                    }
                    *o = -pred;
                }
            }
        }
    }
}

/// `z_k = clamp(b + sum_i w_i e_{k-1-i}, -cap, cap)` with weights drawn from the seed.
/// Missing past values count as zero; `memory = 0` gives a constant output.
#[derive(Debug, Clone)]
pub struct RandomCausalController {
    weights: Vec<f64>,
    bias: f64,
    gain_cap: f64,
    seed: u64,
}

pub fn random_causal_controller(seed: u64, memory: usize, gain_cap: f64) -> Result<RandomCausalController> {
    if !(gain_cap > 0.0) || !gain_cap.is_finite() {
        return Err(Error::InvalidParameter(format!("gain cap must be positive, got {gain_cap}")));
    }
    let mut rng = seeded_stream(seed, 7);
    let scale = 1.0 / (memory.max(1) as f64).sqrt();
    let weights = (0..memory).map(|_| rng.random_range(-1.5..1.5) * scale).collect();
    let bias = if memory == 0 { 0.0 } else { rng.random_range(-0.5..0.5) * gain_cap };
    Ok(RandomCausalController { weights, bias, gain_cap, seed })
}

impl RandomCausalController {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl ControllerPolicy for RandomCausalController {
    fn dim(&self) -> usize {
        1
    }

    fn descriptor(&self) -> String {
        format!("random(seed={},memory={},cap={})", self.seed, self.weights.len(), self.gain_cap)
    }

    fn step(&self, k: usize, errors: History<'_>, _z: History<'_>, _memo: &mut Vec<f64>, out: &mut [f64]) {
        let mut acc = self.bias;
        for (i, w) in self.weights.iter().enumerate().take(k) {
            acc += w * errors.scalar(k - 1 - i);
        }
        out[0] = acc.clamp(-self.gain_cap, self.gain_cap);
    }
}

/// Strictly causal FIR map of the error: `z_k = sum_i taps[i] e_{k-1-i}`.
#[derive(Debug, Clone)]
pub struct ErrorFirController {
    taps: Vec<f64>,
}

impl ErrorFirController {
    pub fn new(taps: Vec<f64>) -> Self {
        ErrorFirController { taps }
    }
}

impl ControllerPolicy for ErrorFirController {
    fn dim(&self) -> usize {
        1
    }
    fn descriptor(&self) -> String {
        format!("fir({:?})", self.taps)
    }
    fn step(&self, k: usize, errors: History<'_>, _z: History<'_>, _memo: &mut Vec<f64>, out: &mut [f64]) {
        let mut acc = 0.0;
        for (i, t) in self.taps.iter().enumerate().take(k) {
            acc += t * errors.scalar(k - 1 - i);
        }
        out[0] = acc;
    }
}

/// Reads `e_k` when it is visible and outputs it, violating strict causality.
/// Only for exercising the causality audit; inside `run_loop` it sees no
/// current error and behaves like the zero controller.
#[derive(Debug, Clone, Default)]
pub struct AnticipatoryFixture;

impl ControllerPolicy for AnticipatoryFixture {
    fn dim(&self) -> usize {
        1
    }
    fn descriptor(&self) -> String {
        "anticipatory".into()
    }
    fn step(&self, k: usize, errors: History<'_>, _z: History<'_>, _memo: &mut Vec<f64>, out: &mut [f64]) {
        out[0] = errors.get(k).map_or(0.0, |e| e[0]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnedFeatures {
    /// Intercept plus the last `memory` disturbances.
    Linear,
    /// `Linear` plus their squares.
    Quadratic,
}

/// Least-squares regression of `-d_k` on features of the last `memory`
/// reconstructed disturbances, used directly as `z_k`.
#[derive(Debug, Clone)]
pub struct LearnedController {
    memory: usize,
    features: LearnedFeatures,
    coefficients: Vec<f64>,
    std_errors: Vec<f64>,
    residual_variance: f64,
}

impl LearnedController {
    /// Intercept first, then lag coefficients (lag 1 first), then squares.
    /// Signs are those of the controller map, e.g. about `-0.9` on AR(1) `0.9`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Lag-1.. coefficients only.
    pub fn taps(&self) -> &[f64] {
        &self.coefficients[1..=self.memory]
    }

    pub fn tap_std_errors(&self) -> &[f64] {
        &self.std_errors[1..=self.memory]
    }

    pub fn residual_variance(&self) -> f64 {
        self.residual_variance
    }

    fn n_features(memory: usize, features: LearnedFeatures) -> usize {
        match features {
            LearnedFeatures::Linear => 1 + memory,
            LearnedFeatures::Quadratic => 1 + 2 * memory,
        }
    }

    /// Feature vector for predicting the value after `past` (most recent last);
    /// lags not available count as zero.
    fn fill_features(memory: usize, features: LearnedFeatures, past: &[f64], phi: &mut [f64]) {
        phi[0] = 1.0;
        for i in 0..memory {
            let v = if i < past.len() { past[past.len() - 1 - i] } else { 0.0 };
            phi[1 + i] = v;
            if features == LearnedFeatures::Quadratic {
                phi[1 + memory + i] = v * v;
            }
        }
    }
}

/// Fits a [`LearnedController`] on the disturbance sequences of scalar traces.
///
/// Falls back to ridge regularization (`1e-8`) when the normal equations are singular.
pub fn learned_controller(
    training: &[SimulationTrace],
    memory: usize,
    features: LearnedFeatures,
) -> Result<LearnedController> {
    if training.iter().any(|t| t.dim != 1) {
        return Err(Error::Unsupported("learned controller on vector traces".into()));
    }
    let p = LearnedController::n_features(memory, features);
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut phi = vec![0.0; p];
    let mut rows = 0usize;
    for t in training {
        for k in memory..t.d.len() {
            LearnedController::fill_features(memory, features, &t.d[k - memory..k], &mut phi);
            for i in 0..p {
                xty[i] -= phi[i] * t.d[k];
                for j in 0..=i {
                    xtx[(i, j)] += phi[i] * phi[j];
                }
            }
            rows += 1;
        }
    }
    if rows <= p {
        return Err(Error::InsufficientData { needed: p + 1, found: rows });
    }
    for i in 0..p {
        for j in 0..i {
            xtx[(j, i)] = xtx[(i, j)];
        }
    }
    let chol = match xtx.clone().cholesky() {
        Some(c) => c,
        None => {
            let ridge = xtx + DMatrix::identity(p, p) * 1e-8;
            ridge.cholesky().ok_or_else(|| Error::NotPositiveDefinite("regularized normal equations".into()))?
        }
    };
    let beta = chol.solve(&xty);
    let mut rss = 0.0;
    for t in training {
        for k in memory..t.d.len() {
            LearnedController::fill_features(memory, features, &t.d[k - memory..k], &mut phi);
            let pred: f64 = phi.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            rss += (t.d[k] + pred).powi(2);
        }
    }
    let residual_variance = rss / (rows - p) as f64;
    let inv = chol.inverse();
    let std_errors = (0..p).map(|i| (residual_variance * inv[(i, i)]).sqrt()).collect();
    Ok(LearnedController { memory, features, coefficients: beta.iter().copied().collect(), std_errors, residual_variance })
}

impl ControllerPolicy for LearnedController {
    fn dim(&self) -> usize {
        1
    }

    fn descriptor(&self) -> String {
        let f = match self.features {
            LearnedFeatures::Linear => "linear",
            LearnedFeatures::Quadratic => "quadratic",
        };
        format!("learned(memory={},{f})", self.memory)
    }

    fn step(&self, k: usize, errors: History<'_>, outputs: History<'_>, memo: &mut Vec<f64>, out: &mut [f64]) {
        reconstruct_disturbance(k, errors, outputs, memo);
        let start = k.saturating_sub(self.memory);
        let past = &memo[start..k];
        let mut z = self.coefficients[0];
        for i in 0..self.memory.min(past.len()) {
            let v = past[past.len() - 1 - i];
            z += self.coefficients[1 + i] * v;
            if self.features == LearnedFeatures::Quadratic {
                z += self.coefficients[1 + self.memory + i] * v * v;
            }
        }
        out[0] = z;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::GeneralizedGaussian;
    use crate::simulator::run_loop;

    fn sample_var(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn ar1_predictor_whitens() {
        let m = DisturbanceModel::gauss_arma(vec![0.9], vec![], 1.0).unwrap();
        let c = predictor_controller(&m).unwrap();
        assert_eq!(c.taps_at(7).unwrap(), &[0.9]);
        let t = run_loop(&m, &c, 100_000, 11).unwrap();
        assert!(t.satisfies_loop_identity());
        // e_k = w_k for k >= 1
        let v = sample_var(&t.e[1..]);
        assert!((v - 1.0).abs() < 0.02, "{v}");
        // e_0 = d_0 has the stationary variance
        assert_eq!(t.e[0], t.d[0]);
    }

    #[test]
    fn arma_predictor_uses_finite_past() {
        let m = DisturbanceModel::gauss_arma(vec![0.5], vec![0.4], 1.0).unwrap();
        let c = predictor_controller(&m).unwrap();
        let table = m.predictor_table(3).unwrap();
        assert_eq!(c.taps_at(3).unwrap(), table.coefficients(3));
        let t = run_loop(&m, &c, 50_000, 3).unwrap();
        let v = sample_var(&t.e[200..]);
        assert!((v - 1.0).abs() < 0.03, "{v}");
    }

    #[test]
    fn vector_predictor() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.0, 0.3]);
        let m = DisturbanceModel::vector_gauss_ar(a, DMatrix::identity(2, 2)).unwrap();
        let c = predictor_controller(&m).unwrap();
        let t = run_loop(&m, &c, 20_000, 4).unwrap();
        let e0 = t.error_channel(0, 1);
        let e1 = t.error_channel(1, 1);
        assert!((sample_var(&e0) - 1.0).abs() < 0.05);
        assert!((sample_var(&e1) - 1.0).abs() < 0.05);
    }

    #[test]
    fn gen_gauss_predictor_taps() {
        let m = DisturbanceModel::gen_gauss_ar(vec![0.6, 0.2], GeneralizedGaussian::laplace(1.0).unwrap()).unwrap();
        let c = predictor_controller(&m).unwrap();
        let taps = c.taps_at(10).unwrap();
        assert!((taps[0] - 0.6).abs() < 1e-12 && (taps[1] - 0.2).abs() < 1e-12);
        assert_eq!(c.taps_at(0).unwrap().len(), 0);
    }

    #[test]
    fn random_controller_is_bounded_and_seeded() {
        let m = DisturbanceModel::gauss_arma(vec![0.9], vec![], 1.0).unwrap();
        let a = random_causal_controller(5, 4, 2.0).unwrap();
        let b = random_causal_controller(5, 4, 2.0).unwrap();
        let c = random_causal_controller(6, 4, 2.0).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_ne!(a.weights(), c.weights());
        let t = run_loop(&m, &a, 5000, 1).unwrap();
        assert!(t.z.iter().all(|z| z.abs() <= 2.0));
        let zero_mem = random_causal_controller(5, 0, 2.0).unwrap();
        let t = run_loop(&m, &zero_mem, 100, 1).unwrap();
        assert!(t.z.iter().all(|z| *z == 0.0));
        assert!(random_causal_controller(5, 2, 0.0).is_err());
    }

    #[test]
    fn learned_controller_recovers_ar_tap() {
        let m = DisturbanceModel::gauss_arma(vec![0.9], vec![], 1.0).unwrap();
        let training: Vec<_> =
            (0..4).map(|s| run_loop(&m, &zero_controller(1), 25_000, 100 + s).unwrap()).collect();
        let c = learned_controller(&training, 1, LearnedFeatures::Linear).unwrap();
        let tap = c.taps()[0];
        let se = c.tap_std_errors()[0];
        assert!(se > 0.0 && se < 0.003);
        assert!((tap + 0.9).abs() < 0.01, "tap {tap} se {se}");
        let t = run_loop(&m, &c, 100_000, 77).unwrap();
        let v = sample_var(&t.e[1..]);
        assert!((v - 1.0).abs() < 0.02, "{v}");
        let q = learned_controller(&training, 2, LearnedFeatures::Quadratic).unwrap();
        assert_eq!(q.coefficients().len(), 5);
        let t = run_loop(&m, &q, 2000, 9).unwrap();
        assert!(sample_var(&t.e[10..]) < 1.2);
    }

    #[test]
    fn learned_controller_on_iid_has_null_taps() {
        let m = DisturbanceModel::iid(GeneralizedGaussian::gaussian(1.0).unwrap());
        let training = vec![run_loop(&m, &zero_controller(1), 50_000, 3).unwrap()];
        let c = learned_controller(&training, 3, LearnedFeatures::Linear).unwrap();
        for (t, se) in c.taps().iter().zip(c.tap_std_errors()) {
            assert!(t.abs() < 3.0 * se, "{t} {se}");
        }
    }

    #[test]
    fn learned_controller_needs_data() {
        let m = DisturbanceModel::gauss_arma(vec![0.9], vec![], 1.0).unwrap();
        let t = run_loop(&m, &zero_controller(1), 3, 1).unwrap();
        assert!(matches!(
            learned_controller(&[t], 2, LearnedFeatures::Linear),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn learned_controller_on_constant_data_uses_ridge() {
        let mut t = run_loop(
            &DisturbanceModel::gauss_arma(vec![0.5], vec![], 1.0).unwrap(),
            &zero_controller(1),
            50,
            1,
        )
        .unwrap();
        t.d.fill(1.0);
        let c = learned_controller(&[t], 2, LearnedFeatures::Linear).unwrap();
        assert!(c.coefficients().iter().all(|v| v.is_finite()));
    }
}
