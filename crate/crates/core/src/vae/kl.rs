//! Analytic KL divergence from a gamma prior to a Weibull approximation.

use statrs::function::gamma::{digamma, gamma, ln_gamma};

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// KL value and its partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlTerms {
    pub value: f64,
    pub d_shape: f64,
    pub d_scale: f64,
    pub d_alpha: f64,
    pub d_beta: f64,
}

/// `KL(Weibull(k, lambda) || Gam(alpha, rate beta))`.
pub fn kl_weibull_gamma(k: f64, lambda: f64, alpha: f64, beta: f64) -> Result<f64> {
    for (name, x) in [("shape", k), ("scale", lambda), ("alpha", alpha), ("beta", beta)] {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::invalid(format!("KL {name} must be positive, got {x}")));
        }
    }
    Ok(kl_terms(k, lambda, alpha, beta).value)
}

pub(crate) fn kl_terms(k: f64, lambda: f64, alpha: f64, beta: f64) -> KlTerms {
    let inv = 1.0 / k;
    let g = gamma(1.0 + inv);
    let value = EULER_GAMMA * alpha * inv - alpha * lambda.ln() + k.ln() + beta * lambda * g
        - EULER_GAMMA
        - 1.0
        - alpha * beta.ln()
        + ln_gamma(alpha);
    KlTerms {
        value,
        d_shape: -EULER_GAMMA * alpha * inv * inv + inv - beta * lambda * g * digamma(1.0 + inv) * inv * inv,
        d_scale: -alpha / lambda + beta * g,
        d_alpha: EULER_GAMMA * inv - lambda.ln() - beta.ln() + digamma(alpha),
        d_beta: lambda * g - alpha / beta,
    }
}

/// Mean `lambda * Gamma(1 + 1/k)` of a Weibull distribution.
pub fn weibull_mean(k: f64, lambda: f64) -> f64 {
    lambda * gamma(1.0 + 1.0 / k)
}
