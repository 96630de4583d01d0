//! Entropic lower bounds on the error signal of a strictly causal loop.
//!
//! For any strictly causal `g` with `z_k = g_k(e_0..e_{k-1})` and a disturbance
//! independent of `z_0`,
//!
//! ```text
//! [E|e_k|^p]^(1/p) >= 2^h(d_k | d_0..d_{k-1}) / C_p,   C_p = 2 Gamma((p+1)/p) (p e)^(1/p)
//! ```
//!
//! with `C_inf = 2`. None of the functions below take a controller: the bound
//! is a property of the disturbance alone.
//!
//! MIMO: the determinant bound is implemented as
//! `det E[e e^T] >= 2^(2h) / (2 pi e)^m`, which reduces to the variance
//! bound at `m = 1`. The product bound uses the same value.

use std::f64::consts::{E, PI};

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use statrs::function::gamma::ln_gamma;

use crate::distributions::Exponent;
use crate::error::{Error, Result};
use crate::processes::DisturbanceModel;
use crate::spectral::{gaussianity_whiteness, innovation_negentropy_bits, szego_entropy_integral_bits};

/// Which time index the bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    AtStep(usize),
    Asymptotic,
}

impl Serialize for Horizon {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Horizon::AtStep(k) => serializer.serialize_u64(*k as u64),
            Horizon::Asymptotic => serializer.serialize_str("asymptotic"),
        }
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Step(u64),
            Label(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Step(k) => Ok(Horizon::AtStep(k as usize)),
            Raw::Label(s) if s == "asymptotic" => Ok(Horizon::Asymptotic),
            Raw::Label(s) => Err(de::Error::custom(format!("expected a step index or \"asymptotic\", got {s:?}"))),
        }
    }
}

impl std::fmt::Display for Horizon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Horizon::AtStep(k) => write!(f, "{k}"),
            Horizon::Asymptotic => f.write_str("asymptotic"),
        }
    }
}

/// `p` together with the time index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSpec {
    pub p: Exponent,
    pub horizon: Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    Direct,
    Asymptotic,
    Spectral,
    Gw,
    Variance,
    Maxdev,
    MimoDet,
    MimoProduct,
}

impl BoundForm {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundForm::Direct => "direct",
            BoundForm::Asymptotic => "asymptotic",
            BoundForm::Spectral => "spectral",
            BoundForm::Gw => "gw",
            BoundForm::Variance => "variance",
            BoundForm::Maxdev => "maxdev",
            BoundForm::MimoDet => "mimo_det",
            BoundForm::MimoProduct => "mimo_product",
        }
    }
}

/// A bound value together with the entropy and constant it was computed from.
///
/// For the determinant forms `h_bits` is the joint conditional entropy and
/// `c_p` holds the dimension `m`'s constant `(2 pi e)^m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub form: BoundForm,
    pub p: Exponent,
    #[serde(rename = "k_or_asymptotic")]
    pub horizon: Horizon,
    pub h_bits: f64,
    #[serde(rename = "C_p")]
    pub c_p: f64,
    pub bound: f64,
}

impl BoundReport {
    fn scalar(form: BoundForm, p: Exponent, horizon: Horizon, h_bits: f64) -> Self {
        let c_p = lp_constant(p);
        BoundReport { form, p, horizon, h_bits, c_p, bound: lp_bound(h_bits, p) }
    }

    /// Recomputes `bound` from `h_bits` and `c_p` and compares.
    pub fn is_consistent(&self) -> bool {
        let expected = match self.form {
            BoundForm::Variance => (self.h_bits.exp2() / self.c_p).powi(2),
            BoundForm::MimoDet | BoundForm::MimoProduct => (2.0 * self.h_bits).exp2() / self.c_p,
            _ => self.h_bits.exp2() / self.c_p,
        };
        (expected - self.bound).abs() <= 1e-12 * expected.abs().max(1e-300)
    }

    /// Parses a JSON report and rejects internally inconsistent ones.
    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let report: BoundReport = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if !report.is_consistent() {
            return Err(format!("bound {} does not follow from h_bits and C_p", report.bound));
        }
        Ok(report)
    }
}

/// `C_p = 2 Gamma((p+1)/p) (p e)^(1/p)`, with `C_inf = 2`.
pub fn lp_constant(p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => 2.0,
        Exponent::Finite(p) => (2f64.ln() + ln_gamma((p + 1.0) / p) + (p * E).ln() / p).exp(),
    }
}

/// Checked variant of [`lp_constant`] for raw `f64` input.
pub fn lp_constant_checked(p: f64) -> Result<f64> {
    Ok(lp_constant(Exponent::new(p)?))
}

/// `2^h / C_p`: lower bound on `[E|e_k|^p]^(1/p)`.
pub fn lp_bound(h_cond_bits: f64, p: Exponent) -> f64 {
    (h_cond_bits - lp_constant(p).log2()).exp2()
}

/// `2^(2h) / (2 pi e)`: lower bound on `E[e_k^2]`.
pub fn variance_bound(h_cond_bits: f64) -> f64 {
    lp_bound(h_cond_bits, Exponent::Finite(2.0)).powi(2)
}

/// `2^h / 2`: lower bound on `esssup |e_k|`.
pub fn maxdev_bound(h_cond_bits: f64) -> f64 {
    lp_bound(h_cond_bits, Exponent::Infinity)
}

/// `2^(2h) / (2 pi e)^m`: lower bound on `det E[e_k e_k^T]`.
pub fn mimo_det_bound(h_cond_bits: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("dimension m must be >= 1".into()));
    }
    if m == 1 {
        return Ok(variance_bound(h_cond_bits));
    }
    Ok((2.0 * h_cond_bits - m as f64 * (2.0 * PI * E).log2()).exp2())
}

/// Lower bound on `prod_i E[e_k(i)^2]`; equal to the determinant bound via
/// Hadamard's inequality `prod_i Sigma_ii >= det Sigma`.
pub fn mimo_product_bound(h_cond_bits: f64, m: usize) -> Result<f64> {
    mimo_det_bound(h_cond_bits, m)
}

fn scalar_only(model: &DisturbanceModel) -> Result<()> {
    if model.dim() != 1 {
        return Err(Error::Unsupported("scalar L_p bound of a vector model; use the MIMO bounds".into()));
    }
    Ok(())
}

/// Bound at step `k` from the analytic conditional entropy.
pub fn lp_bound_at_step(model: &DisturbanceModel, p: Exponent, k: usize) -> Result<BoundReport> {
    scalar_only(model)?;
    let h = model.conditional_entropy_bits(k)?;
    Ok(BoundReport::scalar(BoundForm::Direct, p, Horizon::AtStep(k), h))
}

/// `2^(h_inf) / C_p`.
pub fn lp_bound_asymptotic(model: &DisturbanceModel, p: Exponent) -> Result<BoundReport> {
    scalar_only(model)?;
    Ok(BoundReport::scalar(BoundForm::Asymptotic, p, Horizon::Asymptotic, model.entropy_rate_bits()))
}

/// `2^(-J_inf) 2^(szego integral) / C_p`. The Szegő integral is evaluated by
/// quadrature and `J_inf` in closed form, so agreement with
/// [`lp_bound_asymptotic`] exercises the spectral route independently.
pub fn spectral_lp_bound(model: &DisturbanceModel, p: Exponent) -> Result<BoundReport> {
    scalar_only(model)?;
    let szego = szego_entropy_integral_bits(&model.power_spectrum()?)?;
    let j = innovation_negentropy_bits(model)?;
    Ok(BoundReport::scalar(BoundForm::Spectral, p, Horizon::Asymptotic, szego - j))
}

/// `(sqrt(2 pi e) / C_p) sqrt(GW_d lim E[d_k^2])`.
pub fn gw_lp_bound(model: &DisturbanceModel, p: Exponent) -> Result<BoundReport> {
    scalar_only(model)?;
    let gw = gaussianity_whiteness(model)?;
    let var = model.stationary_variance()?;
    let c_p = lp_constant(p);
    let bound = (2.0 * PI * E).sqrt() / c_p * (gw * var).sqrt();
    // effective entropy that reproduces the bound through 2^h / C_p
    let h_bits = 0.5 * (2.0 * PI * E * gw * var).log2();
    Ok(BoundReport { form: BoundForm::Gw, p, horizon: Horizon::Asymptotic, h_bits, c_p, bound })
}

/// Determinant bound for a vector model at `horizon`.
pub fn mimo_bound_report(model: &DisturbanceModel, horizon: Horizon, form: BoundForm) -> Result<BoundReport> {
    let m = model.dim();
    let h = match horizon {
        Horizon::AtStep(k) => model.conditional_entropy_bits(k)?,
        Horizon::Asymptotic => model.entropy_rate_bits(),
    };
    let bound = match form {
        BoundForm::MimoDet => mimo_det_bound(h, m)?,
        BoundForm::MimoProduct => mimo_product_bound(h, m)?,
        other => {
            return Err(Error::InvalidParameter(format!("{} is not a MIMO bound form", other.as_str())))
        }
    };
    Ok(BoundReport {
        form,
        p: Exponent::Finite(2.0),
        horizon,
        h_bits: h,
        c_p: (2.0 * PI * E).powi(m as i32),
        bound,
    })
}
