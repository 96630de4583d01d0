//! Levinson–Durbin recursion on an autocovariance sequence, and the
//! reflection-coefficient maps used to test and construct stable AR polynomials.
//!
//! Predictor convention: `x_hat_k = sum_{i=1..n} a[i-1] * x_{k-i}`.

use crate::error::{Error, Result};

/// All finite-order one-step predictors up to a maximum order.
#[derive(Debug, Clone)]
pub struct PredictorTable {
    /// `coefficients[n]` holds the `n` taps of the order-`n` predictor.
    coefficients: Vec<Vec<f64>>,
    /// `errors[n]` is the order-`n` prediction-error variance `P_n`.
    errors: Vec<f64>,
    reflection: Vec<f64>,
}

impl PredictorTable {
    /// Runs the recursion on `autocov[0..=max_order]`.
    pub fn from_autocovariance(autocov: &[f64]) -> Result<Self> {
        if autocov.is_empty() || !(autocov[0] > 0.0) {
            return Err(Error::InvalidParameter("autocovariance lag 0 must be positive".into()));
        }
        let max_order = autocov.len() - 1;
        let mut coefficients = Vec::with_capacity(max_order + 1);
        let mut errors = Vec::with_capacity(max_order + 1);
        let mut reflection = Vec::with_capacity(max_order);
        coefficients.push(Vec::new());
        errors.push(autocov[0]);
        for n in 1..=max_order {
            let prev = &coefficients[n - 1];
            let p_prev = errors[n - 1];
            let mut acc = autocov[n];
            for (i, a) in prev.iter().enumerate() {
                acc -= a * autocov[n - 1 - i];
            }
            let kappa = acc / p_prev;
            if !(kappa.abs() < 1.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "Toeplitz matrix of order {n} is not positive definite (reflection {kappa})"
                )));
            }
            let mut next = Vec::with_capacity(n);
            for i in 0..n - 1 {
                next.push(prev[i] - kappa * prev[n - 2 - i]);
            }
            next.push(kappa);
            coefficients.push(next);
            errors.push(p_prev * (1.0 - kappa * kappa));
            reflection.push(kappa);
        }
        Ok(PredictorTable { coefficients, errors, reflection })
    }

    pub fn max_order(&self) -> usize {
        self.errors.len() - 1
    }

    pub fn coefficients(&self, order: usize) -> &[f64] {
        &self.coefficients[order]
    }

    pub fn error_variance(&self, order: usize) -> f64 {
        self.errors[order]
    }

    pub fn error_variances(&self) -> &[f64] {
        &self.errors
    }

    pub fn reflection(&self) -> &[f64] {
        &self.reflection
    }
}

/// Step-down: AR taps to reflection coefficients. The polynomial
/// `1 - sum phi_i z^-i` is strictly minimum phase iff every returned
/// coefficient has magnitude below one.
pub fn ar_to_reflection(ar: &[f64]) -> Vec<f64> {
    let mut current = ar.to_vec();
    let mut out = vec![0.0; ar.len()];
    for n in (1..=ar.len()).rev() {
        let kappa = current[n - 1];
        out[n - 1] = kappa;
        if kappa.abs() >= 1.0 {
            // the remaining coefficients are meaningless once stability is lost
            for slot in out.iter_mut().take(n - 1) {
                *slot = f64::NAN;
            }
            break;
        }
        let denom = 1.0 - kappa * kappa;
        let prev: Vec<f64> = (0..n - 1)
            .map(|i| (current[i] + kappa * current[n - 2 - i]) / denom)
            .collect();
        current = prev;
    }
    out
}

/// Step-up: reflection coefficients to AR taps.
pub fn reflection_to_ar(reflection: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::with_capacity(reflection.len());
    for (n, &kappa) in reflection.iter().enumerate() {
        let mut next = Vec::with_capacity(n + 1);
        for i in 0..n {
            next.push(a[i] - kappa * a[n - 1 - i]);
        }
        next.push(kappa);
        a = next;
    }
    a
}

/// True when all roots of `1 - sum phi_i z^i` lie strictly outside the unit circle.
pub fn is_strictly_stable(ar: &[f64]) -> bool {
    ar_to_reflection(ar).iter().all(|k| k.abs() < 1.0)
}
