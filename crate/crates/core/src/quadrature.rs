//! Adaptive Gauss–Legendre quadrature with interval bisection.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const RULE_POINTS: usize = 15;

/// Upper bound on integrand evaluations per call.
pub const MAX_NODES: usize = 1 << 20;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(RULE_POINTS))
}

fn fixed<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, evals: &mut usize) -> Result<f64> {
    let (nodes, weights) = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        let v = f(mid + half * x);
        if !v.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand at {}", mid + half * x)));
        }
        acc += w * v;
    }
    *evals += nodes.len();
    Ok(acc * half)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut evals = 0usize;
    let whole = fixed(&f, a, b, &mut evals)?;
    let mut stack = vec![(a, b, whole, tol)];
    let mut total = 0.0;
    while let Some((lo, hi, coarse, local_tol)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = fixed(&f, lo, mid, &mut evals)?;
        let right = fixed(&f, mid, hi, &mut evals)?;
        let fine = left + right;
        if (fine - coarse).abs() <= local_tol || hi - lo < 1e-12 {
            total += fine;
            continue;
        }
        if evals > MAX_NODES {
            return Err(Error::Quadrature(format!(
                "node budget {MAX_NODES} exhausted before reaching tolerance {tol}"
            )));
        }
        stack.push((lo, mid, left, 0.5 * local_tol));
        stack.push((mid, hi, right, 0.5 * local_tol));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(15);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        // degree 28 monomial
        let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(28)).sum();
        assert_abs_diff_eq!(approx, 2.0 / 29.0, epsilon = 1e-14);
    }

    #[test]
    fn adaptive_handles_peaked_integrands() {
        let v = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-9).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert_abs_diff_eq!(v, exact, epsilon = 1e-8);
    }

    #[test]
    fn log_singularity_is_reported() {
        let r = integrate(|x: f64| if x > 0.5 { f64::NEG_INFINITY } else { 0.0 }, 0.0, 1.0, 1e-9);
        assert!(matches!(r, Err(Error::Quadrature(_))));
    }
}
