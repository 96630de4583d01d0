//! Generalized Gaussian (exponential power) innovations and Gaussian vectors.
//!
//! The generalized Gaussian family with shape `p` and scale `mu` has density
//!
//! ```text
//! f(x) = exp(-|x|^p / (p mu^p)) / (2 Gamma((p+1)/p) p^(1/p) mu)
//! ```
//!
//! and is the maximum-entropy law among zero-mean densities with
//! `[E|x|^p]^(1/p) = mu`. It is Laplace at `p = 1`, Gaussian with standard
//! deviation `mu` at `p = 2`, and uniform on `[-mu, mu]` in the limit
//! `p -> inf`, which is represented exactly by [`Exponent::Infinity`].
//!
//! All entropies in this crate are in bits.

use std::f64::consts::{E, LN_2, PI};
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use statrs::function::gamma::{gamma, gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// The `p` of an `L_p` norm or of a generalized Gaussian shape, `1 <= p <= inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            return Ok(Exponent::Infinity);
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!("exponent p must be >= 1, got {p}")));
        }
        Ok(Exponent::Finite(p))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinity)
    }

    /// Finite value, or `None` for the sup-norm.
    pub fn finite(self) -> Option<f64> {
        match self {
            Exponent::Finite(p) => Some(p),
            Exponent::Infinity => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => f.write_str("inf"),
        }
    }
}

// JSON has no infinity literal; the sup-norm is written as the string "inf".
impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => serializer.serialize_f64(*p),
            Exponent::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ExponentVisitor;

        impl Visitor<'_> for ExponentVisitor {
            type Value = Exponent;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number >= 1 or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Exponent, E> {
                Exponent::new(v).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Exponent, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Exponent, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Exponent, E> {
                match v {
                    "inf" | "infinity" | "Infinity" => Ok(Exponent::Infinity),
                    other => other
                        .parse::<f64>()
                        .map_err(|_| E::custom(format!("invalid exponent {other:?}")))
                        .and_then(|p| self.visit_f64(p)),
                }
            }
        }

        deserializer.deserialize_any(ExponentVisitor)
    }
}

/// Zero-mean generalized Gaussian law with shape `p` and normalizing factor `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedGaussian {
    p: Exponent,
    mu: f64,
}

impl GeneralizedGaussian {
    pub fn new(p: Exponent, mu: f64) -> Result<Self> {
        if let Exponent::Finite(v) = p {
            Exponent::new(v)?;
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("scale mu must be positive, got {mu}")));
        }
        Ok(GeneralizedGaussian { p, mu })
    }

    /// Gaussian with the given standard deviation.
    pub fn gaussian(std_dev: f64) -> Result<Self> {
        Self::new(Exponent::Finite(2.0), std_dev)
    }

    pub fn laplace(mu: f64) -> Result<Self> {
        Self::new(Exponent::Finite(1.0), mu)
    }

    /// Uniform on `[-half_width, half_width]`.
    pub fn uniform(half_width: f64) -> Result<Self> {
        Self::new(Exponent::Infinity, half_width)
    }

    pub fn exponent(&self) -> Exponent {
        self.p
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let mu = self.mu;
        match self.p {
            Exponent::Infinity => {
                if x.abs() <= mu {
                    0.5 / mu
                } else {
                    0.0
                }
            }
            Exponent::Finite(p) => {
                let norm = 2.0 * gamma((p + 1.0) / p) * p.powf(1.0 / p) * mu;
                (-x.abs().powf(p) / (p * mu.powf(p))).exp() / norm
            }
        }
    }

    /// Distribution function, through the regularized lower incomplete gamma
    /// function: `P(|x| <= t) = P(1/p, t^p / (p mu^p))`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mu = self.mu;
        let tail_mass = match self.p {
            Exponent::Infinity => (x.abs() / mu).min(1.0),
            Exponent::Finite(p) => {
                let t = x.abs().powf(p) / (p * mu.powf(p));
                if t <= 0.0 {
                    0.0
                } else if t.is_infinite() {
                    1.0
                } else {
                    gamma_lr(1.0 / p, t)
                }
            }
        };
        if x >= 0.0 {
            0.5 + 0.5 * tail_mass
        } else {
            0.5 - 0.5 * tail_mass
        }
    }

    pub fn entropy_bits(&self) -> f64 {
        match self.p {
            Exponent::Infinity => (2.0 * self.mu).log2(),
            Exponent::Finite(p) => {
                // log2[2 Gamma((p+1)/p) (p e)^(1/p) mu], through ln Gamma for large p
                let ln = (2.0f64).ln() + ln_gamma((p + 1.0) / p) + (p * E).ln() / p + self.mu.ln();
                ln / LN_2
            }
        }
    }

    /// `[E|x|^p]^(1/p)`, which equals `mu` for this family.
    pub fn lp_norm(&self) -> Result<f64> {
        match self.p {
            Exponent::Infinity => Err(Error::InvalidParameter(
                "L_inf norm is the support half-width, not a moment".into(),
            )),
            Exponent::Finite(_) => Ok(self.mu),
        }
    }

    /// `E[x^2] = mu^2 p^(2/p) Gamma(3/p) / Gamma(1/p)`; `mu^2 / 3` for the uniform.
    pub fn variance(&self) -> f64 {
        let mu2 = self.mu * self.mu;
        match self.p {
            Exponent::Infinity => mu2 / 3.0,
            Exponent::Finite(p) if p == 2.0 => mu2,
            Exponent::Finite(p) if p == 1.0 => 2.0 * mu2,
            Exponent::Finite(p) => {
                mu2 * (2.0 * p.ln() / p + ln_gamma(3.0 / p) - ln_gamma(1.0 / p)).exp()
            }
        }
    }

    /// Draws `count` iid samples: `|x| = (p mu^p G)^(1/p)` with `G ~ Gamma(1/p, 1)`
    /// and an independent fair sign.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        let mut sampler = self.sampler();
        (0..count).map(|_| sampler.draw(&mut rng)).collect()
    }

    pub fn sampler(&self) -> GgSampler {
        let gamma = match self.p {
            Exponent::Finite(p) => Some(Gamma::new(1.0 / p, 1.0).expect("shape 1/p is positive")),
            Exponent::Infinity => None,
        };
        GgSampler { law: *self, gamma }
    }
}

/// Reusable draw state for a [`GeneralizedGaussian`].
#[derive(Debug, Clone)]
pub struct GgSampler {
    law: GeneralizedGaussian,
    gamma: Option<Gamma<f64>>,
}

impl GgSampler {
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let mu = self.law.mu;
        match (self.law.p, &self.gamma) {
            (Exponent::Finite(p), Some(gamma)) => {
                let g = gamma.sample(rng);
                let magnitude = (p * mu.powf(p) * g).powf(1.0 / p);
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
            _ => rng.random_range(-mu..=mu),
        }
    }
}

/// Zero-mean Gaussian vector with an SPD covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianVector {
    covariance: DMatrix<f64>,
}

impl GaussianVector {
    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        check_spd(&covariance, "covariance")?;
        Ok(GaussianVector { covariance })
    }

    pub fn dimension(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// `log2 sqrt((2 pi e)^m det Sigma)`.
    pub fn entropy_bits(&self) -> f64 {
        gaussian_entropy_bits_of(&self.covariance).expect("validated at construction")
    }
}

/// Entropy of `N(0, cov)` in bits; fails unless `cov` is SPD.
pub fn gaussian_entropy_bits_of(cov: &DMatrix<f64>) -> Result<f64> {
    let m = cov.nrows() as f64;
    let log_det = log_det_spd(cov)?;
    Ok(0.5 * (m * (2.0 * PI * E).ln() + log_det) / LN_2)
}

/// Natural log of the determinant of an SPD matrix via Cholesky.
pub fn log_det_spd(cov: &DMatrix<f64>) -> Result<f64> {
    check_spd(cov, "matrix")?;
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

pub(crate) fn check_spd(cov: &DMatrix<f64>, what: &str) -> Result<()> {
    if cov.nrows() == 0 || !cov.is_square() {
        return Err(Error::InvalidParameter(format!("{what} must be a non-empty square matrix")));
    }
    let m = cov.nrows();
    for i in 0..m {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 {
                return Err(Error::NotPositiveDefinite(format!("{what} is not symmetric")));
            }
        }
    }
    let eig = cov.clone().symmetric_eigenvalues();
    if eig.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} has a non-positive eigenvalue (min {})",
            eig.min()
        )));
    }
    Ok(())
}
