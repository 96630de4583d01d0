//! Power spectra and the spectral forms of the entropy rate.
//!
//! The Szegő–Kolmogorov integral `(1/2pi) int log2 sqrt(2 pi e S(w)) dw` is the
//! entropy rate of the Gaussian process sharing the spectrum `S`. The
//! negentropy rate `J` and the Gaussianity-whiteness `GW` are defined here
//! only through the relations
//!
//! ```text
//! h_inf(d) = szego_integral(S_d) - J_inf(d)
//! GW_d     = 2^(2 h_inf(d)) / (2 pi e lim E[d_k^2])
//! ```
//!
//! which are the unique choices making the spectral and GW bound forms agree
//! with the entropy-rate bound. Any additional structure a fuller theory of
//! these indices may carry is not modelled.

use std::f64::consts::{E, LN_2, PI};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::{DisturbanceModel, ModelKind};
use crate::quadrature;

/// Absolute tolerance on the half-range integral.
pub const QUADRATURE_TOL: f64 = 1e-9;

/// Rational spectrum `variance |Theta(e^-jw)|^2 / |Phi(e^-jw)|^2`, with
/// `Phi(z) = 1 - sum ar_i z^i` and `Theta(z) = 1 + sum ma_j z^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalSpectrum {
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub variance: f64,
}

impl RationalSpectrum {
    pub fn eval(&self, omega: f64) -> f64 {
        let num = poly_mag2(&self.ma, omega, 1.0);
        let den = poly_mag2(&self.ar, omega, -1.0);
        self.variance * num / den
    }
}

/// `|1 + sign * sum c_i e^{-j i w}|^2`
fn poly_mag2(coeffs: &[f64], omega: f64, sign: f64) -> f64 {
    let mut re = 1.0;
    let mut im = 0.0;
    for (i, c) in coeffs.iter().enumerate() {
        let phase = (i + 1) as f64 * omega;
        re += sign * c * phase.cos();
        im -= sign * c * phase.sin();
    }
    re * re + im * im
}

type SpectrumFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Form {
    Rational(RationalSpectrum),
    Custom(SpectrumFn),
}

/// An even, non-negative power spectral density on `[-pi, pi]`.
#[derive(Clone)]
pub struct SpectralDensity {
    form: Form,
}

impl fmt::Debug for SpectralDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.form {
            Form::Rational(r) => f.debug_tuple("SpectralDensity").field(r).finish(),
            Form::Custom(_) => f.write_str("SpectralDensity(<custom>)"),
        }
    }
}

impl SpectralDensity {
    pub fn rational(ar: Vec<f64>, ma: Vec<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::InvalidParameter("spectral variance must be positive".into()));
        }
        Ok(SpectralDensity { form: Form::Rational(RationalSpectrum { ar, ma, variance }) })
    }

    pub fn flat(level: f64) -> Result<Self> {
        Self::rational(Vec::new(), Vec::new(), level)
    }

    /// Wraps an arbitrary evaluator; evenness and non-negativity are checked
    /// on a grid of 257 points.
    pub fn custom<F>(f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        for i in 0..=256 {
            let w = PI * i as f64 / 256.0;
            let (a, b) = (f(w), f(-w));
            if !(a >= 0.0) || !(b >= 0.0) {
                return Err(Error::InvalidParameter(format!("spectrum negative or NaN at {w}")));
            }
            if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                return Err(Error::InvalidParameter(format!("spectrum not even at {w}")));
            }
        }
        Ok(SpectralDensity { form: Form::Custom(Arc::new(f)) })
    }

    pub fn eval(&self, omega: f64) -> f64 {
        match &self.form {
            Form::Rational(r) => r.eval(omega),
            Form::Custom(f) => f(omega),
        }
    }

    pub fn rational_form(&self) -> Option<&RationalSpectrum> {
        match &self.form {
            Form::Rational(r) => Some(r),
            Form::Custom(_) => None,
        }
    }

    /// `(1/2pi) int S dw`, the lag-0 autocovariance.
    pub fn mean_power(&self) -> Result<f64> {
        let half = quadrature::integrate(|w| self.eval(w), 0.0, PI, QUADRATURE_TOL)?;
        Ok(half / PI)
    }
}

/// `(1/2pi) int_{-pi}^{pi} log2 sqrt(2 pi e S(w)) dw` in bits.
pub fn szego_entropy_integral_bits(s: &SpectralDensity) -> Result<f64> {
    let c = (2.0 * PI * E).ln();
    let integrand = |w: f64| {
        let v = s.eval(w);
        if v > 0.0 {
            0.5 * (c + v.ln()) / LN_2
        } else {
            f64::NEG_INFINITY
        }
    };
    // even integrand: (1/2pi) * 2 * int_0^pi
    let half = quadrature::integrate(integrand, 0.0, PI, QUADRATURE_TOL).map_err(|e| match e {
        Error::Quadrature(msg) => {
            Error::Quadrature(format!("{msg}; spectrum has a zero, regularize before integrating"))
        }
        other => other,
    })?;
    Ok(half / PI)
}

/// Negentropy rate `J_inf = szego_integral(S_d) - h_inf(d)`, in bits.
///
/// Differences down to `-1e-6` are quadrature noise and are clamped to zero;
/// anything more negative is an internal inconsistency and returned as an error.
pub fn negentropy_rate_bits(model: &DisturbanceModel) -> Result<f64> {
    let spectrum = model.power_spectrum()?;
    let j = szego_entropy_integral_bits(&spectrum)? - model.entropy_rate_bits();
    if j < -1e-6 {
        return Err(Error::InvalidParameter(format!(
            "negative negentropy rate {j}: spectrum and entropy rate are inconsistent"
        )));
    }
    Ok(j.max(0.0))
}

/// Closed-form negentropy rate for the linear models of this crate: the
/// innovation's gap to the Gaussian of equal variance,
/// `0.5 log2(2 pi e var(w)) - h(w)`. No quadrature involved.
pub fn innovation_negentropy_bits(model: &DisturbanceModel) -> Result<f64> {
    match model.kind() {
        ModelKind::Iid { innovation } | ModelKind::GenGaussAr { innovation, .. } => {
            Ok(0.5 * (2.0 * PI * E * innovation.variance()).log2() - innovation.entropy_bits())
        }
        ModelKind::GaussArma { .. } => Ok(0.0),
        ModelKind::VectorGaussAr { .. } => {
            Err(Error::Unsupported("negentropy rate is defined for scalar models".into()))
        }
    }
}

/// `GW = 2^(2 h_inf) / (2 pi e R(0))`; 1 for white Gaussian, below 1 otherwise.
pub fn gaussianity_whiteness(model: &DisturbanceModel) -> Result<f64> {
    let variance = model.stationary_variance()?;
    let h = model.entropy_rate_bits();
    Ok((2.0 * h - (2.0 * PI * E * variance).log2()).exp2())
}
