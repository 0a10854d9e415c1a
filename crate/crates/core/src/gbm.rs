//! Geometric Brownian motion model of the explanation-variance process.
//!
//! `dX = mu X dt + sigma X dW`. Paths are sampled from the exact Itô solution
//! `X_t = x0 exp((mu - sigma^2/2) t + sigma W_t)`, so there is no
//! discretisation bias at any step size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{GameError, Result};

/// Volatility estimates at or below this are treated as zero.
const MIN_SIGMA: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub mu: f64,
    pub sigma: f64,
    pub x0: f64,
}

impl GbmParams {
    pub fn new(mu: f64, sigma: f64, x0: f64) -> Result<Self> {
        let params = Self { mu, sigma, x0 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(GameError::InvalidParameter {
                name: "mu",
                value: self.mu,
                reason: "must be finite",
            });
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(GameError::InvalidParameter {
                name: "sigma",
                value: self.sigma,
                reason: "must be positive",
            });
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(GameError::InvalidParameter {
                name: "x0",
                value: self.x0,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    /// Drift of `ln X` per unit time.
    pub fn log_drift(&self) -> f64 {
        self.mu - 0.5 * self.sigma * self.sigma
    }
}

/// A realised variance series: strictly increasing times, positive values.
#[derive(Debug, Clone, PartialEq)]
pub struct VariancePath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl VariancePath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(GameError::InvalidSeries {
                index: times.len().min(values.len()),
                reason: format!(
                    "times ({}) and values ({}) must be non-empty and of equal length",
                    times.len(),
                    values.len()
                ),
            });
        }
        for (i, &t) in times.iter().enumerate() {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(GameError::InvalidSeries {
                    index: i,
                    reason: format!("time {t} must be finite and non-negative"),
                });
            }
            if i > 0 && t <= times[i - 1] {
                return Err(GameError::InvalidSeries {
                    index: i,
                    reason: format!("time {t} does not increase"),
                });
            }
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GameError::InvalidSeries {
                    index: i,
                    reason: format!("variance {v} must be positive"),
                });
            }
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Moment estimator on log-returns with the Itô drift correction.
///
/// `sigma^2` is the unbiased sample variance of `r_i / sqrt(dt_i)` and
/// `mu = mean(r_i / dt_i) + sigma^2 / 2`; `x0` is the first observation.
pub fn fit_mle(series: &VariancePath) -> Result<GbmParams> {
    let n = series.len();
    if n < 3 {
        return Err(GameError::InsufficientData { needed: 3, got: n });
    }
    let (times, values) = (series.times(), series.values());

    let mut scaled = Vec::with_capacity(n - 1);
    let mut rates = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let dt = times[i + 1] - times[i];
        let r = (values[i + 1] / values[i]).ln();
        scaled.push(r / dt.sqrt());
        rates.push(r / dt);
    }

    let m = scaled.len() as f64;
    let mean_scaled = scaled.iter().sum::<f64>() / m;
    let var = scaled.iter().map(|z| (z - mean_scaled).powi(2)).sum::<f64>() / (m - 1.0);
    let sigma = var.sqrt();
    if !(sigma > MIN_SIGMA) {
        return Err(GameError::DegenerateVolatility { sigma });
    }
    let mu = rates.iter().sum::<f64>() / m + 0.5 * var;
    GbmParams::new(mu, sigma, values[0])
}

/// Samples `n_steps` exact GBM increments of size `dt` starting from `x0`.
///
/// The returned path has `n_steps + 1` points; the first is `(0, x0)`.
pub fn simulate_path(params: &GbmParams, n_steps: usize, dt: f64, seed: u64) -> Result<VariancePath> {
    params.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(GameError::InvalidHorizon { dt });
    }
    if n_steps == 0 {
        return Err(GameError::InvalidParameter {
            name: "n_steps",
            value: 0.0,
            reason: "must be positive",
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drift = params.log_drift();
    let sqrt_dt = dt.sqrt();

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut values = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    values.push(params.x0);

    let mut w = 0.0;
    for k in 1..=n_steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        w += sqrt_dt * z;
        let t = k as f64 * dt;
        times.push(t);
        // exp() of a finite exponent can still underflow to 0 for absurd
        // parameters; keep the path strictly positive.
        values.push((params.x0 * (drift * t + params.sigma * w).exp()).max(f64::MIN_POSITIVE));
    }
    VariancePath::new(times, values)
}

fn check_transition_args(x_from: f64, x_to: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(GameError::InvalidHorizon { dt });
    }
    if !(x_from > 0.0) {
        return Err(GameError::InvalidParameter {
            name: "x_from",
            value: x_from,
            reason: "must be positive",
        });
    }
    if !(x_to > 0.0) {
        return Err(GameError::InvalidParameter {
            name: "x_to",
            value: x_to,
            reason: "must be positive",
        });
    }
    Ok(())
}

/// Lognormal transition density of `X_{t+dt}` at `x_to` given `X_t = x_from`.
pub fn transition_density(params: &GbmParams, x_from: f64, x_to: f64, dt: f64) -> Result<f64> {
    check_transition_args(x_from, x_to, dt)?;
    let s = params.sigma * dt.sqrt();
    let z = ((x_to / x_from).ln() - params.log_drift() * dt) / s;
    Ok((-0.5 * z * z).exp() / (x_to * s * (2.0 * std::f64::consts::PI).sqrt()))
}

/// Path-wise progress probability: the transition CDF evaluated at the
/// observed value, i.e. `P(X_{t0+dt} <= x_t | X_{t0} = x_t0)`.
pub fn progress_cdf(params: &GbmParams, x_t0: f64, x_t: f64, dt: f64) -> Result<f64> {
    check_transition_args(x_t0, x_t, dt)?;
    let z = ((x_t / x_t0).ln() - params.log_drift() * dt) / (params.sigma * dt.sqrt());
    Ok(std_normal_cdf(z).clamp(0.0, 1.0))
}
