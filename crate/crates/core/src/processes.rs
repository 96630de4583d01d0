//! Disturbance process models with sample paths and analytic second-order
//! and entropic quantities.
//!
//! Scalar ARMA sign convention:
//!
//! ```text
//! d_k = sum_i ar[i-1] d_{k-i} + w_k + sum_j ma[j-1] w_{k-j}
//! ```
//!
//! All models start stationary. Gaussian models draw the initial state from
//! the exact stationary law; non-Gaussian AR models run a burn-in of
//! `10 * memory_length()` steps from zero.

use std::f64::consts::{E, PI};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::distributions::{check_spd, gaussian_entropy_bits_of, GeneralizedGaussian};
use crate::error::{Error, Result};
use crate::linear_prediction::{is_strictly_stable, PredictorTable};
use crate::rng::{seeded, SimRng};
use crate::spectral::SpectralDensity;

/// Default largest `k` for which finite-past Gaussian conditional entropies are computed.
pub const DEFAULT_LEVINSON_HORIZON: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Iid { innovation: GeneralizedGaussian },
    GaussArma { ar: Vec<f64>, ma: Vec<f64>, innovation_variance: f64 },
    GenGaussAr { ar: Vec<f64>, innovation: GeneralizedGaussian },
    VectorGaussAr { transition: DMatrix<f64>, innovation_covariance: DMatrix<f64> },
}

/// A validated, stationary disturbance model.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceModel {
    kind: ModelKind,
    levinson_horizon: usize,
}

/// Per-step conditional entropies `h(d_k | d_0..d_{k-1})` and the entropy rate, in bits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropySchedule {
    pub per_step: Vec<f64>,
    pub entropy_rate: f64,
}

impl DisturbanceModel {
    pub fn iid(innovation: GeneralizedGaussian) -> Self {
        Self::from_kind(ModelKind::Iid { innovation })
    }

    pub fn gauss_arma(ar: Vec<f64>, ma: Vec<f64>, innovation_variance: f64) -> Result<Self> {
        if !(innovation_variance > 0.0) || !innovation_variance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "innovation variance must be positive, got {innovation_variance}"
            )));
        }
        check_ar(&ar)?;
        check_ma(&ma)?;
        Ok(Self::from_kind(ModelKind::GaussArma { ar, ma, innovation_variance }))
    }

    pub fn gen_gauss_ar(ar: Vec<f64>, innovation: GeneralizedGaussian) -> Result<Self> {
        check_ar(&ar)?;
        Ok(Self::from_kind(ModelKind::GenGaussAr { ar, innovation }))
    }

    pub fn vector_gauss_ar(transition: DMatrix<f64>, innovation_covariance: DMatrix<f64>) -> Result<Self> {
        if !transition.is_square() || transition.nrows() == 0 {
            return Err(Error::InvalidParameter("transition must be a non-empty square matrix".into()));
        }
        if innovation_covariance.nrows() != transition.nrows() {
            return Err(Error::DimensionMismatch {
                expected: transition.nrows(),
                found: innovation_covariance.nrows(),
            });
        }
        check_spd(&innovation_covariance, "innovation covariance")?;
        let rho = spectral_radius(&transition);
        if !(rho < 1.0) {
            return Err(Error::Unstable(format!("transition spectral radius {rho} >= 1")));
        }
        Ok(Self::from_kind(ModelKind::VectorGaussAr { transition, innovation_covariance }))
    }

    fn from_kind(kind: ModelKind) -> Self {
        DisturbanceModel { kind, levinson_horizon: DEFAULT_LEVINSON_HORIZON }
    }

    pub fn with_levinson_horizon(mut self, horizon: usize) -> Self {
        self.levinson_horizon = horizon;
        self
    }

    pub fn levinson_horizon(&self) -> usize {
        self.levinson_horizon
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Signal dimension: 1 for scalar models, `m` for vector AR.
    pub fn dim(&self) -> usize {
        match &self.kind {
            ModelKind::VectorGaussAr { transition, .. } => transition.nrows(),
            _ => 1,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        match &self.kind {
            ModelKind::Iid { innovation } | ModelKind::GenGaussAr { innovation, .. } => {
                innovation.exponent() == crate::distributions::Exponent::Finite(2.0)
            }
            ModelKind::GaussArma { .. } | ModelKind::VectorGaussAr { .. } => true,
        }
    }

    /// Order of the autoregressive part (1 for vector AR, 0 for iid).
    pub fn ar_order(&self) -> usize {
        match &self.kind {
            ModelKind::Iid { .. } => 0,
            ModelKind::GaussArma { ar, .. } | ModelKind::GenGaussAr { ar, .. } => ar.len(),
            ModelKind::VectorGaussAr { .. } => 1,
        }
    }

    /// Short human-readable identifier, stable across runs.
    pub fn descriptor(&self) -> String {
        let mut s = String::new();
        match &self.kind {
            ModelKind::Iid { innovation } => {
                let _ = write!(s, "iid({})", gg_descriptor(innovation));
            }
            ModelKind::GaussArma { ar, ma, innovation_variance } => {
                let _ = write!(s, "gauss_arma(ar={ar:?},ma={ma:?},var={innovation_variance})");
            }
            ModelKind::GenGaussAr { ar, innovation } => {
                let _ = write!(s, "gen_gauss_ar(ar={ar:?},{})", gg_descriptor(innovation));
            }
            ModelKind::VectorGaussAr { transition, innovation_covariance } => {
                let _ = write!(
                    s,
                    "vector_gauss_ar(m={},A={:?},Sw={:?})",
                    transition.nrows(),
                    transition.transpose().as_slice(),
                    innovation_covariance.transpose().as_slice()
                );
            }
        }
        s
    }

    /// Steps after which the influence of the initial state has decayed
    /// below 1e-3 (geometric rate = AR spectral radius), at least the model order.
    pub fn memory_length(&self) -> usize {
        let (rho, order) = match &self.kind {
            ModelKind::Iid { .. } => (0.0, 1),
            ModelKind::GaussArma { ar, ma, .. } => (spectral_radius(&companion(ar)), ar.len().max(ma.len())),
            ModelKind::GenGaussAr { ar, .. } => (spectral_radius(&companion(ar)), ar.len()),
            ModelKind::VectorGaussAr { transition, .. } => (spectral_radius(transition), 1),
        };
        let decay = if rho > 0.0 { ((1e-3f64).ln() / rho.ln()).ceil() as usize } else { 0 };
        decay.max(order).max(1)
    }

    /// Stationary sample path, flattened row-major for vector models
    /// (`dim()` values per step).
    pub fn sample_path(&self, length: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        match &self.kind {
            ModelKind::Iid { innovation } => {
                let mut sampler = innovation.sampler();
                (0..length).map(|_| sampler.draw(&mut rng)).collect()
            }
            ModelKind::GaussArma { ar, ma, innovation_variance } => {
                sample_gauss_arma(ar, ma, *innovation_variance, length, &mut rng)
            }
            ModelKind::GenGaussAr { ar, innovation } => {
                let burn_in = 10 * self.memory_length();
                let mut sampler = innovation.sampler();
                let p = ar.len();
                let mut hist = vec![0.0; p];
                let mut out = Vec::with_capacity(length);
                for step in 0..burn_in + length {
                    let mut v = sampler.draw(&mut rng);
                    for (i, a) in ar.iter().enumerate() {
                        v += a * hist[(step + p - 1 - i) % p.max(1)];
                    }
                    if p > 0 {
                        hist[step % p] = v;
                    }
                    if step >= burn_in {
                        out.push(v);
                    }
                }
                out
            }
            ModelKind::VectorGaussAr { transition, innovation_covariance } => {
                let m = transition.nrows();
                let stationary = discrete_lyapunov(transition, innovation_covariance);
                let p_root = psd_sqrt(&stationary);
                let w_root = psd_sqrt(innovation_covariance);
                let mut state = &p_root * standard_normal_vector(m, &mut rng);
                let mut out = Vec::with_capacity(length * m);
                for step in 0..length {
                    if step > 0 {
                        state = transition * &state + &w_root * standard_normal_vector(m, &mut rng);
                    }
                    out.extend(state.iter());
                }
                out
            }
        }
    }

    /// `h(d_k | d_0..d_{k-1})` in bits, under the stationary start.
    pub fn conditional_entropy_bits(&self, k: usize) -> Result<f64> {
        match &self.kind {
            ModelKind::Iid { innovation } => Ok(innovation.entropy_bits()),
            ModelKind::GenGaussAr { ar, innovation } => {
                if k >= ar.len() {
                    Ok(innovation.entropy_bits())
                } else {
                    Err(Error::NotAnalytic(format!(
                        "conditional entropy of a non-Gaussian AR({}) at k={k} < order",
                        ar.len()
                    )))
                }
            }
            ModelKind::GaussArma { .. } => {
                if k > self.levinson_horizon {
                    return Err(Error::Capacity { requested: k, limit: self.levinson_horizon });
                }
                let table = PredictorTable::from_autocovariance(&self.autocovariance(k)?)?;
                Ok(gaussian_bits(table.error_variance(k)))
            }
            ModelKind::VectorGaussAr { transition, innovation_covariance } => {
                if k == 0 {
                    gaussian_entropy_bits_of(&discrete_lyapunov(transition, innovation_covariance))
                } else {
                    gaussian_entropy_bits_of(innovation_covariance)
                }
            }
        }
    }

    /// Conditional entropies for `k = 0..=k_max` plus the entropy rate.
    pub fn entropy_schedule(&self, k_max: usize) -> Result<EntropySchedule> {
        let per_step = match &self.kind {
            ModelKind::GaussArma { .. } => {
                if k_max > self.levinson_horizon {
                    return Err(Error::Capacity { requested: k_max, limit: self.levinson_horizon });
                }
                let table = PredictorTable::from_autocovariance(&self.autocovariance(k_max)?)?;
                table.error_variances().iter().map(|&p| gaussian_bits(p)).collect()
            }
            _ => (0..=k_max).map(|k| self.conditional_entropy_bits(k)).collect::<Result<Vec<_>>>()?,
        };
        Ok(EntropySchedule { per_step, entropy_rate: self.entropy_rate_bits() })
    }

    /// Entropy rate `h_inf(d)` in bits.
    pub fn entropy_rate_bits(&self) -> f64 {
        match &self.kind {
            ModelKind::Iid { innovation } | ModelKind::GenGaussAr { innovation, .. } => innovation.entropy_bits(),
            ModelKind::GaussArma { innovation_variance, .. } => gaussian_bits(*innovation_variance),
            ModelKind::VectorGaussAr { innovation_covariance, .. } => {
                gaussian_entropy_bits_of(innovation_covariance).expect("validated at construction")
            }
        }
    }

    /// Variance of the one-step innovation (scalar models).
    pub fn innovation_variance(&self) -> Result<f64> {
        match &self.kind {
            ModelKind::Iid { innovation } | ModelKind::GenGaussAr { innovation, .. } => Ok(innovation.variance()),
            ModelKind::GaussArma { innovation_variance, .. } => Ok(*innovation_variance),
            ModelKind::VectorGaussAr { .. } => Err(Error::Unsupported("scalar quantity of a vector model".into())),
        }
    }

    /// Autocovariance `R(0..=max_lag)` from the ARMA Yule–Walker relations.
    /// Non-Gaussian AR models use the same recursion with the innovation variance.
    pub fn autocovariance(&self, max_lag: usize) -> Result<Vec<f64>> {
        match &self.kind {
            ModelKind::Iid { innovation } => {
                let mut r = vec![0.0; max_lag + 1];
                r[0] = innovation.variance();
                Ok(r)
            }
            ModelKind::GaussArma { ar, ma, innovation_variance } => {
                Ok(arma_autocovariance(ar, ma, *innovation_variance, max_lag))
            }
            ModelKind::GenGaussAr { ar, innovation } => {
                Ok(arma_autocovariance(ar, &[], innovation.variance(), max_lag))
            }
            ModelKind::VectorGaussAr { .. } => Err(Error::Unsupported(
                "scalar autocovariance of a vector model; use stationary_covariance".into(),
            )),
        }
    }

    /// `lim E[d_k^2]` for scalar models.
    pub fn stationary_variance(&self) -> Result<f64> {
        Ok(self.autocovariance(0)?[0])
    }

    /// Stationary covariance (1x1 for scalar models).
    pub fn stationary_covariance(&self) -> Result<DMatrix<f64>> {
        match &self.kind {
            ModelKind::VectorGaussAr { transition, innovation_covariance } => {
                Ok(discrete_lyapunov(transition, innovation_covariance))
            }
            _ => Ok(DMatrix::from_element(1, 1, self.stationary_variance()?)),
        }
    }

    /// Rational power spectrum `S(w)`.
    pub fn power_spectrum(&self) -> Result<SpectralDensity> {
        match &self.kind {
            ModelKind::Iid { innovation } => SpectralDensity::flat(innovation.variance()),
            ModelKind::GaussArma { ar, ma, innovation_variance } => {
                SpectralDensity::rational(ar.clone(), ma.clone(), *innovation_variance)
            }
            ModelKind::GenGaussAr { ar, innovation } => {
                SpectralDensity::rational(ar.clone(), Vec::new(), innovation.variance())
            }
            ModelKind::VectorGaussAr { .. } => {
                Err(Error::Unsupported("scalar power spectrum of a vector model".into()))
            }
        }
    }

    /// Finite-past linear predictors of orders `0..=max_order` (scalar models).
    pub fn predictor_table(&self, max_order: usize) -> Result<PredictorTable> {
        PredictorTable::from_autocovariance(&self.autocovariance(max_order)?)
    }
}

fn gaussian_bits(variance: f64) -> f64 {
    0.5 * (2.0 * PI * E * variance).log2()
}

fn gg_descriptor(g: &GeneralizedGaussian) -> String {
    format!("gg(p={},mu={})", g.exponent(), g.mu())
}

fn check_ar(ar: &[f64]) -> Result<()> {
    if ar.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidParameter("non-finite AR coefficient".into()));
    }
    if !is_strictly_stable(ar) {
        return Err(Error::Unstable(format!("AR polynomial {ar:?} has a root on or inside the unit circle")));
    }
    Ok(())
}

fn check_ma(ma: &[f64]) -> Result<()> {
    if ma.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidParameter("non-finite MA coefficient".into()));
    }
    // 1 + sum theta_j z^j  ==  1 - sum (-theta_j) z^j
    let negated: Vec<f64> = ma.iter().map(|t| -t).collect();
    if !is_strictly_stable(&negated) {
        return Err(Error::Unstable(format!("MA polynomial {ma:?} is not strictly invertible")));
    }
    Ok(())
}

/// Companion matrix of `1 - sum phi_i z^i`; its eigenvalues are the inverse roots.
fn companion(ar: &[f64]) -> DMatrix<f64> {
    let p = ar.len();
    let mut c = DMatrix::zeros(p.max(1), p.max(1));
    for (i, a) in ar.iter().enumerate() {
        c[(0, i)] = *a;
    }
    for i in 1..p {
        c[(i, i - 1)] = 1.0;
    }
    c
}

pub(crate) fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solves `P = A P A^T + Q` by the doubling iteration.
pub(crate) fn discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let increment = &ak * &p * ak.transpose();
        p += &increment;
        ak = &ak * &ak;
        if increment.amax() <= 1e-17 * p.amax() {
            break;
        }
    }
    // symmetrize rounding
    (&p + p.transpose()) * 0.5
}

/// Symmetric square root factor `L` with `L L^T = M` for PSD `M`.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

fn standard_normal_vector(m: usize, rng: &mut SimRng) -> DVector<f64> {
    DVector::from_fn(m, |_, _| StandardNormal.sample(rng))
}

/// Brockwell–Davis method: psi weights, then the first `p + 1` equations
/// solved jointly, then the homogeneous recursion.
pub(crate) fn arma_autocovariance(ar: &[f64], ma: &[f64], sigma2: f64, max_lag: usize) -> Vec<f64> {
    let p = ar.len();
    let q = ma.len();
    let theta = |j: usize| if j == 0 { 1.0 } else if j <= q { ma[j - 1] } else { 0.0 };
    let mut psi = vec![0.0; q + 1];
    for j in 0..=q {
        let mut v = theta(j);
        for i in 1..=j.min(p) {
            v += ar[i - 1] * psi[j - i];
        }
        psi[j] = v;
    }
    // sigma^2 sum_{j=k}^{q} theta_j psi_{j-k}
    let forcing = |k: usize| -> f64 {
        if k > q {
            0.0
        } else {
            sigma2 * (k..=q).map(|j| theta(j) * psi[j - k]).sum::<f64>()
        }
    };
    let mut gamma = vec![0.0; max_lag.max(p) + 1];
    if p == 0 {
        for (k, g) in gamma.iter_mut().enumerate() {
            *g = forcing(k);
        }
    } else {
        let mut m = DMatrix::zeros(p + 1, p + 1);
        let mut rhs = DVector::zeros(p + 1);
        for k in 0..=p {
            m[(k, k)] += 1.0;
            for i in 1..=p {
                let lag = (k as isize - i as isize).unsigned_abs();
                m[(k, lag)] -= ar[i - 1];
            }
            rhs[k] = forcing(k);
        }
        let sol = m.lu().solve(&rhs).expect("Yule-Walker system of a stable AR is nonsingular");
        for k in 0..=p {
            gamma[k] = sol[k];
        }
        for k in p + 1..gamma.len() {
            let mut v = forcing(k);
            for i in 1..=p {
                v += ar[i - 1] * gamma[k - i];
            }
            gamma[k] = v;
        }
    }
    gamma.truncate(max_lag + 1);
    gamma
}

/// Exact stationary-start Gaussian ARMA path through the state vector
/// `alpha_{k+1} = T alpha_k + R w_{k+1}`, `d_k = alpha_k[0]`.
fn sample_gauss_arma(ar: &[f64], ma: &[f64], sigma2: f64, length: usize, rng: &mut SimRng) -> Vec<f64> {
    let r = ar.len().max(ma.len() + 1);
    let mut t = DMatrix::zeros(r, r);
    for (i, a) in ar.iter().enumerate() {
        t[(i, 0)] = *a;
    }
    for i in 0..r - 1 {
        t[(i, i + 1)] = 1.0;
    }
    let mut gain = vec![1.0; r];
    for j in 1..r {
        gain[j] = if j <= ma.len() { ma[j - 1] } else { 0.0 };
    }
    let rv = DVector::from_vec(gain.clone());
    let q = &rv * rv.transpose() * sigma2;
    let stationary = discrete_lyapunov(&t, &q);
    let root = psd_sqrt(&stationary);
    let init = &root * standard_normal_vector(r, rng);
    let mut state: Vec<f64> = init.iter().copied().collect();
    let sigma = sigma2.sqrt();
    let mut next = vec![0.0; r];
    let mut out = Vec::with_capacity(length);
    for step in 0..length {
        if step > 0 {
            let w: f64 = StandardNormal.sample(rng);
            let w = w * sigma;
            let head = state[0];
            for i in 0..r {
                let a = if i < ar.len() { ar[i] } else { 0.0 };
                let shift = if i + 1 < r { state[i + 1] } else { 0.0 };
                next[i] = a * head + shift + gain[i] * w;
            }
            std::mem::swap(&mut state, &mut next);
        }
        out.push(state[0]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ar1(a: f64) -> DisturbanceModel {
        DisturbanceModel::gauss_arma(vec![a], vec![], 1.0).unwrap()
    }

    fn sample_autocov(x: &[f64], lag: usize) -> f64 {
        let n = x.len() - lag;
        x[..n].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
    }

    #[test]
    fn construction_rejects_unstable_models() {
        assert!(matches!(DisturbanceModel::gauss_arma(vec![1.0], vec![], 1.0), Err(Error::Unstable(_))));
        assert!(matches!(DisturbanceModel::gauss_arma(vec![], vec![1.5], 1.0), Err(Error::Unstable(_))));
        assert!(DisturbanceModel::gauss_arma(vec![0.5], vec![], 0.0).is_err());
        let g = GeneralizedGaussian::uniform(1.0).unwrap();
        assert!(DisturbanceModel::gen_gauss_ar(vec![-1.01], g).is_err());
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        assert!(DisturbanceModel::vector_gauss_ar(a, DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn autocovariance_closed_forms() {
        let r = ar1(0.5).autocovariance(2).unwrap();
        assert_abs_diff_eq!(r[0], 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[2], 1.0 / 3.0, epsilon = 1e-12);

        let iid = DisturbanceModel::iid(GeneralizedGaussian::gaussian(1.0).unwrap());
        assert_eq!(iid.autocovariance(3).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);

        let ma = DisturbanceModel::gauss_arma(vec![], vec![0.5], 1.0).unwrap();
        let r = ma.autocovariance(2).unwrap();
        assert_abs_diff_eq!(r[0], 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r[2], 0.0, epsilon = 1e-12);
    }

    /// Yule–Walker route against the state-space Lyapunov route.
    #[test]
    fn autocovariance_matches_state_space_route() {
        let (ar, ma, s2) = (vec![0.6, -0.3], vec![0.4, 0.2], 1.3);
        let yw = arma_autocovariance(&ar, &ma, s2, 6);
        let r = 3;
        let mut t = DMatrix::zeros(r, r);
        t[(0, 0)] = 0.6;
        t[(1, 0)] = -0.3;
        t[(0, 1)] = 1.0;
        t[(1, 2)] = 1.0;
        let g = DVector::from_vec(vec![1.0, 0.4, 0.2]);
        let p = discrete_lyapunov(&t, &(&g * g.transpose() * s2));
        let mut tj = DMatrix::identity(r, r);
        for expected in yw.iter() {
            let cov = &tj * &p;
            assert_abs_diff_eq!(cov[(0, 0)], *expected, epsilon = 1e-10);
            tj = &t * tj;
        }
    }

    #[test]
    fn conditional_entropy_anchors() {
        let m = ar1(0.5);
        assert_abs_diff_eq!(m.conditional_entropy_bits(0).unwrap(), gaussian_bits(4.0 / 3.0), epsilon = 1e-12);
        assert_abs_diff_eq!(m.conditional_entropy_bits(0).unwrap(), 2.254_614, epsilon = 1e-6);
        for k in 1..5 {
            assert_abs_diff_eq!(m.conditional_entropy_bits(k).unwrap(), 2.047_095_585, epsilon = 1e-8);
        }
        let lap = DisturbanceModel::iid(GeneralizedGaussian::laplace(1.0).unwrap());
        assert_abs_diff_eq!(lap.conditional_entropy_bits(17).unwrap(), (2.0 * E).log2(), epsilon = 1e-12);
    }

    #[test]
    fn conditional_entropy_errors() {
        let m = ar1(0.5).with_levinson_horizon(50);
        assert_eq!(m.conditional_entropy_bits(51), Err(Error::Capacity { requested: 51, limit: 50 }));
        let g = DisturbanceModel::gen_gauss_ar(vec![0.5, 0.2], GeneralizedGaussian::uniform(1.0).unwrap()).unwrap();
        assert!(matches!(g.conditional_entropy_bits(1), Err(Error::NotAnalytic(_))));
        assert_eq!(g.conditional_entropy_bits(2).unwrap(), 1.0);
    }

    #[test]
    fn entropy_rate_anchors() {
        assert_abs_diff_eq!(ar1(0.5).entropy_rate_bits(), 2.047_095_585, epsilon = 1e-8);
        let g = DisturbanceModel::gen_gauss_ar(vec![0.9], GeneralizedGaussian::uniform(1.0).unwrap()).unwrap();
        assert_eq!(g.entropy_rate_bits(), 1.0);
        let iid = DisturbanceModel::iid(GeneralizedGaussian::gaussian(2f64.sqrt()).unwrap());
        assert_abs_diff_eq!(iid.entropy_rate_bits(), 2.547_095_585, epsilon = 1e-8);
    }

    #[test]
    fn schedule_is_monotone_and_converges() {
        for m in [
            DisturbanceModel::gauss_arma(vec![0.95], vec![], 1.0).unwrap(),
            DisturbanceModel::gauss_arma(vec![], vec![0.95], 1.0).unwrap(),
            DisturbanceModel::gauss_arma(vec![0.5], vec![-0.9], 2.0).unwrap(),
        ] {
            let s = m.entropy_schedule(250).unwrap();
            for w in s.per_step.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            for h in &s.per_step[200..] {
                assert!((h - s.entropy_rate).abs() < 1e-6, "{h} vs {}", s.entropy_rate);
                assert!(*h >= s.entropy_rate - 1e-12);
            }
        }
    }

    #[test]
    fn spectrum_average_is_lag_zero() {
        for m in [ar1(0.5), DisturbanceModel::gauss_arma(vec![1.3, -0.4], vec![0.3], 0.7).unwrap()] {
            let s = m.power_spectrum().unwrap();
            assert_abs_diff_eq!(s.mean_power().unwrap(), m.stationary_variance().unwrap(), epsilon = 1e-8);
        }
        let iid = DisturbanceModel::iid(GeneralizedGaussian::gaussian(1.0).unwrap());
        assert_eq!(iid.power_spectrum().unwrap().eval(1.234), 1.0);
    }

    #[test]
    fn ar1_path_variance() {
        let x = ar1(0.5).sample_path(1_000_000, 1);
        let v = sample_autocov(&x, 0);
        assert!((v - 4.0 / 3.0).abs() < 0.01 * 4.0 / 3.0, "{v}");
    }

    #[test]
    fn sample_autocovariance_matches_model() {
        let m = DisturbanceModel::gauss_arma(vec![0.6], vec![0.4], 1.0).unwrap();
        let x = m.sample_path(1_000_000, 2);
        let r = m.autocovariance(5).unwrap();
        // Bartlett-type standard error, crude but conservative for this model
        let se = r[0] * (2.0 * 8.0 / x.len() as f64).sqrt();
        for (lag, expected) in r.iter().enumerate() {
            let got = sample_autocov(&x, lag);
            assert!((got - expected).abs() < 3.0 * se, "lag {lag}: {got} vs {expected}");
        }
    }

    #[test]
    fn stationary_start_is_exact_at_k0() {
        // variance of d_0 across many independent paths
        let m = ar1(0.9);
        let n = 20_000;
        let v = (0..n).map(|s| m.sample_path(1, s as u64)[0].powi(2)).sum::<f64>() / n as f64;
        let expected = 1.0 / (1.0 - 0.81);
        assert!((v - expected).abs() < 4.0 * expected * (2.0 / n as f64).sqrt(), "{v}");
    }

    #[test]
    fn uniform_iid_path_is_bounded() {
        let m = DisturbanceModel::iid(GeneralizedGaussian::uniform(1.0).unwrap());
        let x = m.sample_path(1_000_000, 3);
        let max = x.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(max <= 1.0 && max > 0.99);
    }

    #[test]
    fn vector_iid_covariance() {
        let m = DisturbanceModel::vector_gauss_ar(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let x = m.sample_path(200_000, 4);
        let n = x.len() / 2;
        let mut c = [0.0; 4];
        for row in x.chunks(2) {
            c[0] += row[0] * row[0];
            c[1] += row[0] * row[1];
            c[3] += row[1] * row[1];
        }
        assert!((c[0] / n as f64 - 1.0).abs() < 0.02);
        assert!((c[3] / n as f64 - 1.0).abs() < 0.02);
        assert!((c[1] / n as f64).abs() < 0.02);
    }

    #[test]
    fn vector_stationary_covariance() {
        let a = DMatrix::identity(2, 2) * 0.5;
        let m = DisturbanceModel::vector_gauss_ar(a, DMatrix::identity(2, 2)).unwrap();
        let p = m.stationary_covariance().unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(0, 1)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.conditional_entropy_bits(3).unwrap(), (2.0 * PI * E).log2(), epsilon = 1e-12);
    }

    #[test]
    fn paths_are_deterministic() {
        let m = DisturbanceModel::gauss_arma(vec![0.3], vec![0.2], 1.0).unwrap();
        assert_eq!(m.sample_path(500, 9), m.sample_path(500, 9));
        let g = DisturbanceModel::gen_gauss_ar(vec![0.9], GeneralizedGaussian::laplace(1.0).unwrap()).unwrap();
        assert_eq!(g.sample_path(500, 9), g.sample_path(500, 9));
    }

    #[test]
    fn memory_length_tracks_pole_radius() {
        assert_eq!(ar1(0.0).memory_length(), 1);
        let m = ar1(0.9).memory_length();
        assert_eq!(m, ((1e-3f64).ln() / 0.9f64.ln()).ceil() as usize);
    }
}
