//! Optimal-stopping machinery shared by both players.
//!
//! Under GBM dynamics the value function of either player solves
//! `r V = mu x V' + sigma^2 x^2 V'' / 2 + psi x`, whose general solution is
//! `c1 x^beta1 + c2 x^beta2 + psi x / (r - mu)` with `beta1 > 1 > 0 > beta2`
//! the roots of `sigma^2 beta (beta - 1) / 2 + mu beta - r = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::gbm::GbmParams;

/// Flow-payoff coefficients, discounting, and the termination-payoff scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PayoffConfig {
    /// Discount rate.
    pub r: f64,
    /// Pooling flow coefficient.
    #[serde(rename = "P")]
    pub p: f64,
    /// Attack gain coefficient.
    #[serde(rename = "M_m")]
    pub m_m: f64,
    /// Post-compromise benefit coefficient.
    pub d_prime: f64,
    /// Deviation lump cost.
    pub d: f64,
    /// Block reward coefficient.
    pub k: f64,
    /// Honest-service coefficient.
    pub r_e: f64,
    /// Detection lump cost.
    pub c_d: f64,
    /// Termination-payoff scale.
    pub b: f64,
}

impl Default for PayoffConfig {
    fn default() -> Self {
        Self {
            r: 0.1,
            p: 1.0,
            m_m: 0.8,
            d_prime: 0.5,
            d: 1.0,
            k: 2.0,
            r_e: 0.5,
            c_d: 1.0,
            b: 1.0,
        }
    }
}

impl PayoffConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("payoffs.M_m", self.m_m),
            ("payoffs.d_prime", self.d_prime),
            ("payoffs.k", self.k),
            ("payoffs.r_e", self.r_e),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(GameError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
        }
        let positive = [
            ("payoffs.r", self.r),
            ("payoffs.P", self.p),
            ("payoffs.d", self.d),
            ("payoffs.c_d", self.c_d),
            ("payoffs.b", self.b),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(GameError::InvalidParameter {
                    name,
                    value,
                    reason: "must be positive",
                });
            }
        }
        Ok(())
    }

    /// Payoff of a successful deviation, `M_m + d'`.
    pub fn deviation_gain(&self) -> f64 {
        self.m_m + self.d_prime
    }

    /// `r - mu`, failing unless the perpetuity is finite.
    pub fn discount_gap(&self, params: &GbmParams) -> Result<f64> {
        if !(self.r > params.mu) || !(self.r > 0.0) {
            return Err(GameError::DiscountTooSmall {
                r: self.r,
                mu: params.mu,
            });
        }
        Ok(self.r - params.mu)
    }

    /// Checks the ordering assumptions the thresholds depend on.
    pub fn check_order(&self) -> Result<()> {
        if !(self.k > self.r_e) {
            return Err(GameError::PayoffOrderViolation(format!(
                "block reward k = {} must exceed honest-service r_e = {}",
                self.k, self.r_e
            )));
        }
        if !(self.deviation_gain() > self.p) {
            return Err(GameError::PayoffOrderViolation(format!(
                "deviation gain M_m + d_prime = {} must exceed pooling P = {}",
                self.deviation_gain(),
                self.p
            )));
        }
        if self.d_prime == 0.0 && self.p < self.m_m {
            return Err(GameError::PayoffOrderViolation(format!(
                "with d_prime = 0, P = {} must be at least M_m = {}",
                self.p, self.m_m
            )));
        }
        Ok(())
    }
}

/// Stage-payoff regime selecting the flow coefficient `psi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StagePayoff {
    Pooling,
    HonestService,
    Block,
    Deviation,
}

impl StagePayoff {
    pub fn psi(self, payoffs: &PayoffConfig) -> f64 {
        match self {
            StagePayoff::Pooling => payoffs.p,
            StagePayoff::HonestService => payoffs.r_e,
            StagePayoff::Block => payoffs.k,
            StagePayoff::Deviation => payoffs.deviation_gain(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharRoots {
    pub beta1: f64,
    pub beta2: f64,
}

impl CharRoots {
    /// `sigma^2 beta (beta - 1) / 2 + mu beta - r` at `beta`.
    pub fn quadratic(beta: f64, params: &GbmParams, r: f64) -> f64 {
        0.5 * params.sigma * params.sigma * beta * (beta - 1.0) + params.mu * beta - r
    }
}

/// Coefficients of `x^beta1` and `x^beta2` in a value function.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ValueFunctionConstants {
    pub c1: f64,
    pub c2: f64,
}

/// Roots of the characteristic quadratic, larger-magnitude root first.
pub fn characteristic_roots(params: &GbmParams, payoffs: &PayoffConfig) -> Result<CharRoots> {
    params.validate()?;
    payoffs.discount_gap(params)?;
    let a = 0.5 * params.sigma * params.sigma;
    let b = params.log_drift();
    let c = -payoffs.r;
    // disc > b^2 because a > 0 and c < 0.
    let disc = (b * b - 4.0 * a * c).sqrt();
    let q = -0.5 * (b + b.signum() * disc);
    let (x1, x2) = (q / a, c / q);
    let (beta1, beta2) = if x1 > x2 { (x1, x2) } else { (x2, x1) };
    Ok(CharRoots { beta1, beta2 })
}

/// `c1 x^beta1 + c2 x^beta2 + psi x / (r - mu)`.
pub fn value_general(
    constants: &ValueFunctionConstants,
    roots: &CharRoots,
    psi: f64,
    x: f64,
    params: &GbmParams,
    payoffs: &PayoffConfig,
) -> f64 {
    constants.c1 * x.powf(roots.beta1) + constants.c2 * x.powf(roots.beta2) + psi * x / (payoffs.r - params.mu)
}

/// First derivative of [`value_general`] in `x`.
pub fn value_derivative(
    constants: &ValueFunctionConstants,
    roots: &CharRoots,
    psi: f64,
    x: f64,
    params: &GbmParams,
    payoffs: &PayoffConfig,
) -> f64 {
    constants.c1 * roots.beta1 * x.powf(roots.beta1 - 1.0)
        + constants.c2 * roots.beta2 * x.powf(roots.beta2 - 1.0)
        + psi / (payoffs.r - params.mu)
}

/// `r V - mu x V' - sigma^2 x^2 V'' / 2 - psi x`, evaluated term by term.
///
/// Each power term contributes `c x^beta` times the characteristic
/// quadratic at `beta`, and the particular term cancels identically, so the
/// result is zero up to rounding whenever the roots are exact.
pub fn hjb_residual(
    constants: &ValueFunctionConstants,
    roots: &CharRoots,
    psi: f64,
    x: f64,
    params: &GbmParams,
    payoffs: &PayoffConfig,
) -> f64 {
    let r = payoffs.r;
    let term = |c: f64, beta: f64| {
        if c == 0.0 {
            0.0
        } else {
            -c * x.powf(beta) * CharRoots::quadratic(beta, params, r)
        }
    };
    let gap = r - params.mu;
    let particular = psi * x * (r / gap - params.mu / gap - 1.0);
    term(constants.c1, roots.beta1) + term(constants.c2, roots.beta2) + particular
}
