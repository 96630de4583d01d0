use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{run_loop_on_disturbance, ControllerPolicy, History, LoopOptions};
use crate::error::{Error, Result};
use crate::processes::DisturbanceModel;
use crate::rng::seeded_stream;

/// Outcome of a perturbation audit. `violating_indices` are the steps `k`
/// whose output changed when only `e_k, e_{k+1}, ...` were altered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub passed: bool,
    pub trials: usize,
    pub violating_indices: Vec<usize>,
}

impl AuditReport {
    fn from_violations(trials: usize, mut v: Vec<usize>) -> Self {
        v.sort_unstable();
        v.dedup();
        AuditReport { passed: v.is_empty(), trials, violating_indices: v }
    }
}

/// Outputs `z_0..z_{upto-1}` with the full error sequence visible at every step.
fn replay(controller: &dyn ControllerPolicy, errors: &[f64], upto: usize) -> Vec<f64> {
    let dim = controller.dim();
    let mut z = Vec::with_capacity(upto * dim);
    let mut memo = Vec::new();
    let mut out = vec![0.0; dim];
    for k in 0..upto {
        controller.step(k, History::new(errors, dim), History::new(&z, dim), &mut memo, &mut out);
        z.extend_from_slice(&out);
    }
    z
}

fn gaussian_vec(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(&mut *rng)).collect()
}

fn bitwise_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn check_index(controller: &dyn ControllerPolicy, base_e: &[f64], base_z: &[f64], k: usize, rng: &mut impl Rng) -> bool {
    let dim = controller.dim();
    let mut e = base_e.to_vec();
    for v in &mut e[k * dim..] {
        *v = StandardNormal.sample(&mut *rng);
    }
    let z = replay(controller, &e, k + 1);
    bitwise_equal(&z, &base_z[..(k + 1) * dim])
}

/// Randomized open-loop audit: for `trials` random `k`, replaces `e_j` for
/// `j >= k` and checks that `z_0..z_k` are bit-identical.
pub fn causality_audit(
    controller: &dyn ControllerPolicy,
    length: usize,
    trials: usize,
    seed: u64,
) -> Result<AuditReport> {
    if length == 0 {
        return Err(Error::InvalidParameter("audit length must be positive".into()));
    }
    let mut rng = seeded_stream(seed, 11);
    let base_e = gaussian_vec(length * controller.dim(), &mut rng);
    let base_z = replay(controller, &base_e, length);
    let mut violations = Vec::new();
    for _ in 0..trials {
        let k = rng.random_range(0..length);
        if !check_index(controller, &base_e, &base_z, k, &mut rng) {
            violations.push(k);
        }
    }
    Ok(AuditReport::from_violations(trials, violations))
}

/// Exhaustive variant of [`causality_audit`] over every `k < length`.
pub fn causality_audit_all_indices(controller: &dyn ControllerPolicy, length: usize, seed: u64) -> Result<AuditReport> {
    if length == 0 {
        return Err(Error::InvalidParameter("audit length must be positive".into()));
    }
    let mut rng = seeded_stream(seed, 12);
    let base_e = gaussian_vec(length * controller.dim(), &mut rng);
    let base_z = replay(controller, &base_e, length);
    let violations = (0..length).filter(|&k| !check_index(controller, &base_e, &base_z, k, &mut rng)).collect();
    Ok(AuditReport::from_violations(length, violations))
}

/// Closed-loop audit: perturbs `d_j` for `j >= k` and checks `z_0..z_k` are
/// bit-identical across the two runs.
pub fn closed_loop_audit(
    model: &DisturbanceModel,
    controller: &dyn ControllerPolicy,
    length: usize,
    trials: usize,
    seed: u64,
) -> Result<AuditReport> {
    if length == 0 {
        return Err(Error::InvalidParameter("audit length must be positive".into()));
    }
    let dim = model.dim();
    let d = model.sample_path(length, seed);
    let base = run_loop_on_disturbance(d.clone(), dim, controller, seed, LoopOptions::default())?;
    let mut rng = seeded_stream(seed, 13);
    let mut violations = Vec::new();
    for _ in 0..trials {
        let k = rng.random_range(0..length);
        let mut d2 = d.clone();
        for v in &mut d2[k * dim..] {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v += n;
        }
        let run = run_loop_on_disturbance(d2, dim, controller, seed, LoopOptions::default())?;
        if !bitwise_equal(&run.z[..(k + 1) * dim], &base.z[..(k + 1) * dim]) {
            violations.push(k);
        }
    }
    Ok(AuditReport::from_violations(trials, violations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{
        compose_loop, predictor_controller, random_causal_controller, zero_controller, AnticipatoryFixture,
        CompositionOrder, LinearStage,
    };

    #[test]
    fn built_in_controllers_pass() {
        let m = DisturbanceModel::gauss_arma(vec![0.5], vec![0.3], 1.0).unwrap();
        let policies: Vec<Box<dyn ControllerPolicy>> = vec![
            Box::new(zero_controller(1)),
            Box::new(predictor_controller(&m).unwrap()),
            Box::new(random_causal_controller(1, 5, 3.0).unwrap()),
            Box::new(
                compose_loop(Box::new(LinearStage::gain(0.7)), Box::new(LinearStage::unit_delay()), CompositionOrder::PK)
                    .unwrap(),
            ),
        ];
        for p in &policies {
            let r = causality_audit(p.as_ref(), 200, 100, 4).unwrap();
            assert!(r.passed, "{}: {:?}", p.descriptor(), r.violating_indices);
            assert!(closed_loop_audit(&m, p.as_ref(), 200, 20, 4).unwrap().passed);
        }
    }

    #[test]
    fn anticipatory_fixture_fails_everywhere() {
        let r = causality_audit_all_indices(&AnticipatoryFixture, 200, 1).unwrap();
        assert!(!r.passed);
        assert_eq!(r.violating_indices, (0..200).collect::<Vec<_>>());
        let r = causality_audit(&AnticipatoryFixture, 200, 100, 1).unwrap();
        assert!(!r.passed);
    }
}
