use std::f64::consts::{LN_2, PI};

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::{digamma, ln_gamma};

use super::kdtree::{KdTree, Metric};
use super::{mean_and_sd, EntropyEstimate, EstimatorId, MiEstimate, MIN_SAMPLES};
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const DEFAULT_NEIGHBORS: usize = 4;

/// Eigenvalue ratio below which a point cloud counts as lying on a subspace.
const DEGENERACY_RATIO: f64 = 1e-10;

const JITTER: f64 = 1e-12;
const JITTER_SEED: u64 = 0x6a17;

fn check_input(len: usize, dim: usize) -> Result<usize> {
    if dim == 0 || !len.is_multiple_of(dim) {
        return Err(Error::InvalidParameter(format!("{len} values do not form {dim}-vectors")));
    }
    let n = len / dim;
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientData { needed: MIN_SAMPLES, found: n });
    }
    Ok(n)
}

fn jittered(points: &[f64], dim: usize, amplitude: f64) -> Vec<f64> {
    let mut rng = seeded(JITTER_SEED);
    let n = points.len() / dim;
    let mut scale = vec![0.0; dim];
    for (c, s) in scale.iter_mut().enumerate() {
        let col: Vec<f64> = (0..n).map(|i| points[i * dim + c]).collect();
        *s = mean_and_sd(&col).1.max(1.0);
    }
    points
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + amplitude * scale[i % dim] * z
        })
        .collect()
}

/// Recomputes distances on jittered copies, growing the amplitude from
/// `1e-12` until no zero distance remains (values far from the origin can
/// round tiny perturbations away).
fn jittered_distances(points: &[f64], dim: usize, k: usize, metric: Metric) -> (Vec<f64>, Vec<f64>, String) {
    let mut amplitude = JITTER;
    loop {
        let moved = jittered(points, dim, amplitude);
        let dist = kth_distances(&moved, dim, k, metric);
        if amplitude >= 1e-6 || dist.iter().all(|d| *d > 0.0) {
            return (moved, dist, format!("duplicate points perturbed by {amplitude:e} jitter"));
        }
        amplitude *= 10.0;
    }
}

/// Smallest-to-largest eigenvalue ratio of the sample covariance.
fn covariance_condition(points: &[f64], dim: usize) -> f64 {
    if dim == 1 {
        return 1.0;
    }
    let n = points.len() / dim;
    let mut mean = vec![0.0; dim];
    for row in points.chunks(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for row in points.chunks(dim) {
        for a in 0..dim {
            for b in 0..dim {
                cov[(a, b)] += (row[a] - mean[a]) * (row[b] - mean[b]) / n as f64;
            }
        }
    }
    let eig = cov.symmetric_eigen().eigenvalues;
    let max = eig.max();
    if max <= 0.0 {
        return 0.0;
    }
    eig.min().max(0.0) / max
}

fn kth_distances(points: &[f64], dim: usize, k: usize, metric: Metric) -> Vec<f64> {
    let tree = KdTree::new(points, dim, metric);
    (0..points.len() / dim).into_par_iter().map(|i| tree.kth_neighbor_distance(i, k)).collect()
}

/// Kozachenko–Leonenko entropy of `dim`-vectors (row-major), in bits.
///
/// Standard error is the spread of the per-point terms over `sqrt(n)`.
pub fn entropy_estimate_knn(points: &[f64], dim: usize, k: usize) -> Result<EntropyEstimate> {
    let n = check_input(points.len(), dim)?;
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("neighbour count {k} out of range")));
    }
    let mut warnings = Vec::new();
    if covariance_condition(points, dim) < DEGENERACY_RATIO {
        warnings.push("degenerate: samples lie on a lower-dimensional subspace".to_string());
    }
    let mut dist = kth_distances(points, dim, k, Metric::Euclidean);
    if dist.contains(&0.0) {
        let (_, moved, note) = jittered_distances(points, dim, k, Metric::Euclidean);
        warnings.push(note);
        dist = moved;
    }
    let m = dim as f64;
    let ln_unit_ball = 0.5 * m * PI.ln() - ln_gamma(0.5 * m + 1.0);
    let offset = digamma(n as f64) - digamma(k as f64) + ln_unit_ball;
    let terms: Vec<f64> = dist.iter().map(|d| m * d.ln()).collect();
    let (mean, sd) = mean_and_sd(&terms);
    Ok(EntropyEstimate {
        value_bits: (offset + mean) / LN_2,
        std_error_bits: (sd / (n as f64).sqrt()).max(f64::MIN_POSITIVE) / LN_2,
        estimator: EstimatorId::KnnKl,
        sample_count: n,
        warning: (!warnings.is_empty()).then(|| warnings.join("; ")),
    })
}

/// `h(x_k | x_{k-memory..k-1})` of a scalar path as the difference of
/// kNN entropies of delay embeddings of width `memory + 1` and `memory`.
pub fn conditional_entropy_estimate(path: &[f64], memory: usize) -> Result<EntropyEstimate> {
    let joint = delay_embed(path, memory + 1);
    let h_joint = entropy_estimate_knn(&joint, memory + 1, DEFAULT_NEIGHBORS)?;
    if memory == 0 {
        return Ok(h_joint);
    }
    // same time indices for the conditioning block
    let past: Vec<f64> = joint.chunks(memory + 1).flat_map(|row| row[..memory].iter().copied()).collect();
    let h_past = entropy_estimate_knn(&past, memory, DEFAULT_NEIGHBORS)?;
    let warning = match (h_joint.warning, h_past.warning) {
        (None, None) => None,
        (a, b) => Some([a, b].into_iter().flatten().collect::<Vec<_>>().join("; ")),
    };
    Ok(EntropyEstimate {
        value_bits: h_joint.value_bits - h_past.value_bits,
        std_error_bits: h_joint.std_error_bits.hypot(h_past.std_error_bits),
        estimator: EstimatorId::KnnKl,
        sample_count: h_joint.sample_count,
        warning,
    })
}

/// Rows `(x_{t}, ..., x_{t+width-1})` for every admissible `t`.
pub fn delay_embed(path: &[f64], width: usize) -> Vec<f64> {
    if path.len() < width {
        return Vec::new();
    }
    path.windows(width).flat_map(|w| w.iter().copied()).collect()
}

/// Mutual information of paired samples by the Kraskov–Stögbauer–Grassberger
/// estimator (first variant, max-norm), clipped below at zero.
///
/// `x` holds `dx`-vectors and `y` holds `dy`-vectors, row-major, same count.
pub fn mutual_information_estimate(x: &[f64], dx: usize, y: &[f64], dy: usize, k: usize) -> Result<MiEstimate> {
    let n = check_input(x.len(), dx)?;
    let ny = check_input(y.len(), dy)?;
    if n != ny {
        return Err(Error::DimensionMismatch { expected: n, found: ny });
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("neighbour count {k} out of range")));
    }
    let d = dx + dy;
    let mut joint = Vec::with_capacity(n * d);
    for i in 0..n {
        joint.extend_from_slice(&x[i * dx..(i + 1) * dx]);
        joint.extend_from_slice(&y[i * dy..(i + 1) * dy]);
    }
    let mut warning = None;
    let mut eps = kth_distances(&joint, d, k, Metric::Chebyshev);
    if eps.contains(&0.0) {
        let (moved, dist, note) = jittered_distances(&joint, d, k, Metric::Chebyshev);
        warning = Some(note);
        joint = moved;
        eps = dist;
    }
    let xs: Vec<f64> = joint.chunks(d).flat_map(|r| r[..dx].iter().copied()).collect();
    let ys: Vec<f64> = joint.chunks(d).flat_map(|r| r[dx..].iter().copied()).collect();
    let tx = KdTree::new(&xs, dx, Metric::Chebyshev);
    let ty = KdTree::new(&ys, dy, Metric::Chebyshev);
    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            // counts include the point itself
            let nx = tx.count_within(&xs[i * dx..(i + 1) * dx], eps[i]);
            let ny = ty.count_within(&ys[i * dy..(i + 1) * dy], eps[i]);
            digamma(nx as f64) + digamma(ny as f64)
        })
        .collect();
    let (mean, sd) = mean_and_sd(&terms);
    let raw = (digamma(k as f64) + digamma(n as f64) - mean) / LN_2;
    let ceiling = (digamma(n as f64) - digamma(k as f64)) / LN_2;
    Ok(MiEstimate {
        value_bits: raw.max(0.0),
        std_error_bits: (sd / (n as f64).sqrt()).max(f64::MIN_POSITIVE) / LN_2,
        saturated: raw >= ceiling - 1e-9,
        warning,
    })
}
