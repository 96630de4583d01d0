//! Estimators for the empirical side of the bounds: `L_p` norms, entropies,
//! mutual information, whiteness, density fit and covariance determinants.
//!
//! Jackknife standard errors use contiguous blocks, so they stay usable on
//! mildly dependent data such as closed-loop traces and need no randomness.

mod kdtree;
mod knn;

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::digamma;

use crate::distributions::{Exponent, GeneralizedGaussian};
use crate::error::{Error, Result};

pub use kdtree::{KdTree, Metric};
pub use knn::{conditional_entropy_estimate, delay_embed, entropy_estimate_knn, mutual_information_estimate, DEFAULT_NEIGHBORS};

pub const MIN_SAMPLES: usize = 50;
pub const JACKKNIFE_BLOCKS: usize = 20;
/// Fraction of tied sorted neighbours above which the 1-D estimator warns.
pub const TIE_WARNING_FRACTION: f64 = 0.1;
/// `c(0.01) / sqrt(n)` is the 1% Kolmogorov–Smirnov critical distance.
pub const KS_CRITICAL_1PCT: f64 = 1.63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    Vasicek,
    KnnKl,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyEstimate {
    pub value_bits: f64,
    pub std_error_bits: f64,
    pub estimator: EstimatorId,
    pub sample_count: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiEstimate {
    pub value_bits: f64,
    pub std_error_bits: f64,
    /// The estimate sits at the estimator's ceiling `psi(n) - psi(k)`; the
    /// true value may be larger.
    pub saturated: bool,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Set for `p = inf`: the sample maximum underestimates the essential supremum.
    pub downward_biased: bool,
}

pub(crate) fn mean_and_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

fn require(n: usize, needed: usize) -> Result<()> {
    if n < needed {
        return Err(Error::InsufficientData { needed, found: n });
    }
    Ok(())
}

fn abs_power(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p == 1.0 {
        x.abs()
    } else {
        x.abs().powf(p)
    }
}

/// `[mean |x|^p]^(1/p)` with a delta-method standard error; for `p = inf`
/// the sample maximum of `|x|`, with the spread of the ten largest values as
/// its standard error.
pub fn lp_norm_estimate(samples: &[f64], p: Exponent) -> Result<LpEstimate> {
    require(samples.len(), MIN_SAMPLES)?;
    match p {
        Exponent::Infinity => Ok(max_abs_estimate(samples)),
        Exponent::Finite(p) => {
            let powered: Vec<f64> = samples.iter().map(|x| abs_power(*x, p)).collect();
            let (m, sd) = mean_and_sd(&powered);
            let se_moment = sd / (samples.len() as f64).sqrt();
            Ok(LpEstimate { value: root(m, p), std_error: delta_se(m, se_moment, p), downward_biased: false })
        }
    }
}

/// As [`lp_norm_estimate`], with the standard error of `mean |x|^p` taken
/// from `blocks` contiguous batch means (for serially dependent samples).
pub fn lp_norm_estimate_blocked(samples: &[f64], p: Exponent, blocks: usize) -> Result<LpEstimate> {
    require(samples.len(), MIN_SAMPLES.max(2 * blocks))?;
    match p {
        Exponent::Infinity => Ok(max_abs_estimate(samples)),
        Exponent::Finite(p) => {
            let powered: Vec<f64> = samples.iter().map(|x| abs_power(*x, p)).collect();
            let m = powered.iter().sum::<f64>() / powered.len() as f64;
            let means: Vec<f64> = block_ranges(powered.len(), blocks)
                .map(|r| powered[r.clone()].iter().sum::<f64>() / r.len() as f64)
                .collect();
            let se_moment = mean_and_sd(&means).1 / (blocks as f64).sqrt();
            Ok(LpEstimate { value: root(m, p), std_error: delta_se(m, se_moment, p), downward_biased: false })
        }
    }
}

fn root(m: f64, p: f64) -> f64 {
    if p == 2.0 {
        m.sqrt()
    } else if p == 1.0 {
        m
    } else {
        m.powf(1.0 / p)
    }
}

fn delta_se(m: f64, se_moment: f64, p: f64) -> f64 {
    if m <= 0.0 {
        return f64::MIN_POSITIVE;
    }
    (root(m, p) / (p * m) * se_moment).max(f64::MIN_POSITIVE)
}

fn max_abs_estimate(samples: &[f64]) -> LpEstimate {
    let mut top: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    let t = top.len().min(10);
    top.select_nth_unstable_by(t - 1, |a, b| b.total_cmp(a));
    top[..t].sort_by(|a, b| b.total_cmp(a));
    let max = top[0];
    let gap = if t > 1 { top[0] - top[t - 1] } else { 0.0 };
    LpEstimate { value: max, std_error: gap.max(f64::MIN_POSITIVE), downward_biased: true }
}

fn block_ranges(n: usize, blocks: usize) -> impl Iterator<Item = std::ops::Range<usize>> + Clone {
    (0..blocks).map(move |b| (b * n / blocks)..((b + 1) * n / blocks))
}

fn jackknife_se(estimates: &[f64]) -> f64 {
    let g = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / g;
    ((g - 1.0) / g * estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Spacing window of the 1-D entropy estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VasicekWindow {
    /// `m = round(n^(1/3))`.
    #[default]
    CubeRoot,
    /// `m = round(sqrt(n))`; its smoothing bias shrinks more slowly than the
    /// standard error, so 3-sigma coverage degrades beyond a few thousand samples.
    SquareRoot,
}

impl VasicekWindow {
    pub fn width(self, n: usize) -> usize {
        let m = match self {
            VasicekWindow::CubeRoot => (n as f64).cbrt().round() as usize,
            VasicekWindow::SquareRoot => (n as f64).sqrt().round() as usize,
        };
        m.clamp(1, ((n - 1) / 2).max(1))
    }
}

/// Vasicek spacing estimate in nats with the Wieczorkowski–Grzegorzewski
/// bias correction, on sorted data.
fn vasicek_nats(sorted: &[f64], window: VasicekWindow) -> f64 {
    let n = sorted.len();
    let m = window.width(n);
    let nf = n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let hi = sorted[(i + m).min(n - 1)];
        let lo = sorted[i.saturating_sub(m)];
        sum += (hi - lo).max(f64::MIN_POSITIVE).ln();
    }
    let raw = sum / nf + (nf / (2.0 * m as f64)).ln();
    let boundary: f64 = (1..=m).map(|i| digamma((i + m - 1) as f64)).sum();
    raw - nf.ln() + (2.0 * m as f64).ln() - (1.0 - 2.0 * m as f64 / nf) * digamma(2.0 * m as f64)
        + digamma(nf + 1.0)
        - 2.0 / nf * boundary
}

/// One-dimensional differential entropy in bits (bias-corrected Vasicek,
/// default window) with a 20-block jackknife standard error.
pub fn entropy_estimate_1d(samples: &[f64]) -> Result<EntropyEstimate> {
    entropy_estimate_1d_with(samples, VasicekWindow::default())
}

pub fn entropy_estimate_1d_with(samples: &[f64], window: VasicekWindow) -> Result<EntropyEstimate> {
    require(samples.len(), 100)?;
    let n = samples.len();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ties = sorted.windows(2).filter(|w| w[0] == w[1]).count();
    let warning = (ties as f64 > TIE_WARNING_FRACTION * n as f64)
        .then(|| format!("{ties} tied samples: the data do not look continuous"));
    let value = vasicek_nats(&sorted, window);

    // leave-one-block-out in time order, then sort the remainder
    let mut leave_out = Vec::with_capacity(JACKKNIFE_BLOCKS);
    for r in block_ranges(n, JACKKNIFE_BLOCKS) {
        let mut rest: Vec<f64> = samples[..r.start].iter().chain(&samples[r.end..]).copied().collect();
        rest.sort_by(f64::total_cmp);
        leave_out.push(vasicek_nats(&rest, window));
    }
    Ok(EntropyEstimate {
        value_bits: value / LN_2,
        std_error_bits: jackknife_se(&leave_out).max(f64::MIN_POSITIVE) / LN_2,
        estimator: EstimatorId::Vasicek,
        sample_count: n,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhitenessReport {
    /// Lags `1..=max_lag`.
    pub autocorrelations: Vec<f64>,
    pub ljung_box: f64,
    pub ljung_box_p_value: f64,
    pub mi_lag1_bits: f64,
    pub mi_lag1_std_error: f64,
}

/// Smallest Ljung–Box p-value accepted as white.
pub const WHITENESS_P_VALUE: f64 = 1e-3;
/// Largest lag-1 mutual information accepted as independent, in bits.
pub const WHITENESS_MI_BITS: f64 = 0.02;
/// Pairs used for the lag-1 mutual information.
pub const WHITENESS_MI_PAIRS: usize = 100_000;

impl WhitenessReport {
    pub fn is_white(&self) -> bool {
        self.ljung_box_p_value >= WHITENESS_P_VALUE && self.mi_lag1_bits < WHITENESS_MI_BITS
    }
}

/// Sample autocorrelations, Ljung–Box statistic over `max_lag` lags and the
/// kNN mutual information between consecutive values (first
/// [`WHITENESS_MI_PAIRS`] pairs).
pub fn whiteness_stats(e: &[f64], max_lag: usize) -> Result<WhitenessReport> {
    if max_lag == 0 {
        return Err(Error::InvalidParameter("max_lag must be positive".into()));
    }
    require(e.len(), 100 * max_lag)?;
    let n = e.len();
    let mean = e.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = e.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    let autocorrelations: Vec<f64> = (1..=max_lag)
        .map(|h| {
            if c0 == 0.0 {
                return 0.0;
            }
            c[h..].iter().zip(&c[..n - h]).map(|(a, b)| a * b).sum::<f64>() / c0
        })
        .collect();
    let nf = n as f64;
    let ljung_box = nf
        * (nf + 2.0)
        * autocorrelations.iter().enumerate().map(|(i, r)| r * r / (nf - (i + 1) as f64)).sum::<f64>();
    let chi = ChiSquared::new(max_lag as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let ljung_box_p_value = chi.sf(ljung_box);
    let pairs = (n - 1).min(WHITENESS_MI_PAIRS);
    let mi = mutual_information_estimate(&e[..pairs], 1, &e[1..=pairs], 1, DEFAULT_NEIGHBORS)?;
    Ok(WhitenessReport {
        autocorrelations,
        ljung_box,
        ljung_box_p_value,
        mi_lag1_bits: mi.value_bits,
        mi_lag1_std_error: mi.std_error_bits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityFit {
    pub ks_distance: f64,
    pub threshold: f64,
    pub mu: f64,
    pub pass: bool,
}

/// Kolmogorov–Smirnov distance to the generalized Gaussian of exponent `p`
/// whose `L_p` norm (`max |x|` for `p = inf`) matches the sample.
pub fn density_fit_gg(samples: &[f64], p: Exponent) -> Result<DensityFit> {
    require(samples.len(), 1000)?;
    let mu = lp_norm_estimate(samples, p)?.value;
    let law = GeneralizedGaussian::new(p, mu)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = law.cdf(*x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    let threshold = KS_CRITICAL_1PCT / n.sqrt();
    Ok(DensityFit { ks_distance: d, threshold, mu, pass: d < threshold })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeterminantEstimate {
    pub det: f64,
    pub std_error: f64,
    pub singular: bool,
}

fn second_moment(rows: &[f64], dim: usize) -> DMatrix<f64> {
    let n = (rows.len() / dim) as f64;
    let mut s = DMatrix::<f64>::zeros(dim, dim);
    for row in rows.chunks(dim) {
        for a in 0..dim {
            for b in 0..=a {
                s[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..=a {
            s[(a, b)] /= n;
            s[(b, a)] = s[(a, b)];
        }
    }
    s
}

/// Determinant of the sample second-moment matrix `mean(e e^T)` of
/// `dim`-vectors, with a 20-block jackknife standard error.
pub fn covariance_det_estimate(samples: &[f64], dim: usize) -> Result<DeterminantEstimate> {
    if dim == 0 || !samples.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter(format!("{} values do not form {dim}-vectors", samples.len())));
    }
    let n = samples.len() / dim;
    require(n, (100 * dim).max(2 * JACKKNIFE_BLOCKS))?;
    let s = second_moment(samples, dim);
    let det = s.determinant();
    let diag: f64 = (0..dim).map(|i| s[(i, i)]).product();
    let singular = !(det > 1e-12 * diag);
    let leave_out: Vec<f64> = block_ranges(n, JACKKNIFE_BLOCKS)
        .map(|r| {
            let rest: Vec<f64> =
                samples[..r.start * dim].iter().chain(&samples[r.end * dim..]).copied().collect();
            second_moment(&rest, dim).determinant()
        })
        .collect();
    Ok(DeterminantEstimate {
        det: det.max(0.0),
        std_error: jackknife_se(&leave_out).max(f64::MIN_POSITIVE),
        singular,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductEstimate {
    pub product: f64,
    pub std_error: f64,
}

fn power_product(rows: &[f64], dim: usize) -> f64 {
    let n = (rows.len() / dim) as f64;
    let mut acc = vec![0.0; dim];
    for row in rows.chunks(dim) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v * v;
        }
    }
    acc.iter().map(|a| a / n).product()
}

/// Product of the per-channel second moments `prod_i mean(e_i^2)`, with a
/// 20-block jackknife standard error.
pub fn power_product_estimate(samples: &[f64], dim: usize) -> Result<ProductEstimate> {
    if dim == 0 || !samples.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter(format!("{} values do not form {dim}-vectors", samples.len())));
    }
    let n = samples.len() / dim;
    require(n, (100 * dim).max(2 * JACKKNIFE_BLOCKS))?;
    let leave_out: Vec<f64> = block_ranges(n, JACKKNIFE_BLOCKS)
        .map(|r| {
            let rest: Vec<f64> =
                samples[..r.start * dim].iter().chain(&samples[r.end * dim..]).copied().collect();
            power_product(&rest, dim)
        })
        .collect();
    Ok(ProductEstimate {
        product: power_product(samples, dim),
        std_error: jackknife_se(&leave_out).max(f64::MIN_POSITIVE),
    })
}
