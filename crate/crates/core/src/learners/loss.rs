//! Binary objectives and their derivatives with respect to the raw score.
//!
//! For a raw score `z`, `p = sigmoid(z)` and `p_t` is the probability of the
//! true class. The focal objective is `-a_t (1 - p_t)^gamma ln(p_t)`. The
//! class weight `a_t` is `alpha` for the failure class (`y = 1`); the normal
//! class gets 1 under [`AlphaWeighting::Positive`], so `alpha = 1, gamma = 0`
//! is exactly cross-entropy, and `1 - alpha` under
//! [`AlphaWeighting::Balanced`].
//!
//! With `q = p_t`, `u = 1 - q` and `s = +1` for `y = 1`, `-1` otherwise,
//! `dq/dz = s q u` and
//!
//! ```text
//! dL/dz   = s a_t [ gamma q u^gamma ln q - u^(gamma+1) ]
//! d2L/dz2 = a_t [ gamma q u^(gamma+1) ln q - gamma^2 q^2 u^gamma ln q + (2 gamma + 1) q u^(gamma+1) ]
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest hessian handed to the tree learner.
pub const HESSIAN_FLOOR: f64 = 1e-16;

/// Weight of the normal class (`y = 0`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaWeighting {
    /// 1.
    #[default]
    Positive,
    /// `1 - alpha`.
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocalLossParams {
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default)]
    pub weighting: AlphaWeighting,
}

impl FocalLossParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        Self::with_weighting(alpha, gamma, AlphaWeighting::Positive)
    }

    pub fn with_weighting(alpha: f64, gamma: f64, weighting: AlphaWeighting) -> Result<Self> {
        let p = FocalLossParams {
            alpha,
            gamma,
            weighting,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!("focal alpha {} outside (0, 1]", self.alpha)));
        }
        if self.weighting == AlphaWeighting::Balanced && self.alpha == 1.0 {
            return Err(Error::invalid("balanced focal weighting needs alpha < 1"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("focal gamma {} is negative", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    CrossEntropy,
    Focal(FocalLossParams),
}

impl LossSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::CrossEntropy => "cross_entropy",
            LossSpec::Focal(_) => "focal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms<T> {
    pub value: T,
    pub grad: T,
    pub hess: T,
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Value, gradient and hessian in `z`; the hessian is floored at
/// [`HESSIAN_FLOOR`].
pub fn loss_value_grad_hess<T: Scalar>(loss: &LossSpec, y: u8, z: T) -> LossTerms<T> {
    let mut t = match loss {
        LossSpec::CrossEntropy => cross_entropy(y, z),
        LossSpec::Focal(p) => focal_unfloored(p, y, z),
    };
    t.hess = t.hess.max(T::of(HESSIAN_FLOOR));
    t
}

/// Loss value only.
pub fn loss_value<T: Scalar>(loss: &LossSpec, y: u8, z: T) -> T {
    match loss {
        LossSpec::CrossEntropy => softplus(z) - if y == 1 { z } else { T::zero() },
        LossSpec::Focal(p) => focal_unfloored(p, y, z).value,
    }
}

fn cross_entropy<T: Scalar>(y: u8, z: T) -> LossTerms<T> {
    let p = sigmoid(z);
    let yf = if y == 1 { T::one() } else { T::zero() };
    LossTerms {
        value: softplus(z) - yf * z,
        grad: p - yf,
        hess: p * (T::one() - p),
    }
}

/// Focal terms with the analytic (possibly negative) hessian.
pub fn focal_unfloored<T: Scalar>(params: &FocalLossParams, y: u8, z: T) -> LossTerms<T> {
    let gamma = T::of(params.gamma);
    let (a, s, q, u, ln_q) = if y == 1 {
        (T::of(params.alpha), T::one(), sigmoid(z), sigmoid(-z), -softplus(-z))
    } else {
        let a = match params.weighting {
            AlphaWeighting::Positive => T::one(),
            AlphaWeighting::Balanced => T::of(1.0 - params.alpha),
        };
        (a, -T::one(), sigmoid(-z), sigmoid(z), -softplus(z))
    };
    let u_g = if params.gamma == 0.0 { T::one() } else { u.powf(gamma) };
    let value = -a * u_g * ln_q;
    let grad = s * a * (gamma * q * u_g * ln_q - u_g * u);
    let hess = a
        * (gamma * q * u_g * u * ln_q - gamma * gamma * q * q * u_g * ln_q
            + (T::of(2.0) * gamma + T::one()) * q * u_g * u);
    LossTerms { value, grad, hess }
}
