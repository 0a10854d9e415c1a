//! The system's belief that the end-user is honest, and the belief-scaled
//! noise applied to released explanation variances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

/// Noisy outputs never go below this floor.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub pi: f64,
    /// The end-user has deviated (or been blocked); absorbing.
    pub stopped: bool,
}

impl BeliefState {
    pub fn new(pi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) {
            return Err(GameError::InvalidProbability { value: pi });
        }
        Ok(Self { pi, stopped: false })
    }

    pub fn stopped() -> Self {
        Self { pi: 0.0, stopped: true }
    }
}

/// Which posterior formula drives belief updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BayesRule {
    /// `pi' = 1 / (1 + (1 - pi) R)`, as used throughout the game model.
    #[default]
    Verbatim,
    /// Classical `pi' = pi / (pi + (1 - pi) R)`, for sensitivity studies.
    Standard,
}

pub fn update_belief(prior: BeliefState, r: f64) -> Result<BeliefState> {
    update_belief_with(prior, r, BayesRule::Verbatim)
}

pub fn update_belief_with(prior: BeliefState, r: f64, rule: BayesRule) -> Result<BeliefState> {
    if !(0.0..=1.0).contains(&r) {
        return Err(GameError::InvalidProbability { value: r });
    }
    if prior.stopped || prior.pi == 0.0 {
        return Ok(BeliefState {
            pi: 0.0,
            stopped: prior.stopped,
        });
    }
    let pi = match rule {
        BayesRule::Verbatim => 1.0 / (1.0 + (1.0 - prior.pi) * r),
        BayesRule::Standard => prior.pi / (prior.pi + (1.0 - prior.pi) * r),
    };
    Ok(BeliefState {
        pi: pi.clamp(0.0, 1.0),
        stopped: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    Deterministic,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoisePolicy {
    pub eta: f64,
    pub mode: NoiseMode,
}

impl Default for NoisePolicy {
    fn default() -> Self {
        Self {
            eta: 0.3,
            mode: NoiseMode::Deterministic,
        }
    }
}

impl NoisePolicy {
    pub fn new(eta: f64, mode: NoiseMode) -> Result<Self> {
        let policy = Self { eta, mode };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(GameError::InvalidParameter {
                name: "noise.eta",
                value: self.eta,
                reason: "must be non-negative",
            });
        }
        Ok(())
    }
}

/// Perturbs `x` by an amount that shrinks as trust `pi` grows.
///
/// Deterministic mode shrinks `x` by the factor `1 - eta (1 - pi)`; gaussian
/// mode jitters it by `1 + eta (1 - pi) z` with `z` drawn from `seed`.
pub fn apply_noise(x: f64, pi: f64, policy: &NoisePolicy, seed: u64) -> f64 {
    let scale = policy.eta * (1.0 - pi);
    if scale == 0.0 {
        return x;
    }
    let factor = match policy.mode {
        NoiseMode::Deterministic => 1.0 - scale,
        NoiseMode::Gaussian => {
            let z: f64 = StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(seed));
            1.0 + scale * z
        }
    };
    (x * factor).max(NOISE_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(pi: f64) -> BeliefState {
        BeliefState::new(pi).unwrap()
    }

    #[test]
    fn zero_prior_stays_zero() {
        for r in [0.0, 0.3, 1.0] {
            assert_eq!(update_belief(state(0.0), r).unwrap().pi, 0.0);
        }
    }

    #[test]
    fn zero_progress_gives_full_trust() {
        assert_eq!(update_belief(state(0.5), 0.0).unwrap().pi, 1.0);
    }

    #[test]
    fn full_progress_value() {
        let pi = update_belief(state(0.5), 1.0).unwrap().pi;
        assert!((pi - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn stopped_is_absorbing() {
        let mut s = BeliefState::stopped();
        for r in [0.0, 0.5, 1.0] {
            s = update_belief(s, r).unwrap();
            assert_eq!(s.pi, 0.0);
            assert!(s.stopped);
        }
    }

    #[test]
    fn progress_out_of_range_rejected() {
        assert_eq!(
            update_belief(state(0.5), 1.5).unwrap_err(),
            GameError::InvalidProbability { value: 1.5 }
        );
        assert!(update_belief(state(0.5), -0.1).is_err());
    }

    #[test]
    fn standard_rule_keeps_prior_at_unit_likelihood() {
        let s = update_belief_with(state(0.3), 1.0, BayesRule::Standard).unwrap();
        assert!((s.pi - 0.3).abs() < 1e-15);
    }

    #[test]
    fn deterministic_noise_example() {
        let policy = NoisePolicy::new(0.4, NoiseMode::Deterministic).unwrap();
        assert!((apply_noise(2.0, 0.5, &policy, 0) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn trusted_user_sees_raw_value() {
        for mode in [NoiseMode::Deterministic, NoiseMode::Gaussian] {
            let policy = NoisePolicy::new(0.9, mode).unwrap();
            assert_eq!(apply_noise(1.7, 1.0, &policy, 3), 1.7);
        }
    }

    #[test]
    fn zero_eta_is_identity() {
        let policy = NoisePolicy::new(0.0, NoiseMode::Deterministic).unwrap();
        for pi in [0.0, 0.2, 0.9] {
            assert_eq!(apply_noise(0.25, pi, &policy, 1), 0.25);
        }
    }

    #[test]
    fn negative_eta_rejected() {
        assert!(NoisePolicy::new(-0.1, NoiseMode::Gaussian).is_err());
    }

    proptest! {
        #[test]
        fn verbatim_update_monotone(prior in 0.01f64..0.99, r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
            prop_assume!((r1 - r2).abs() > 1e-9);
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            let a = update_belief(state(prior), lo).unwrap().pi;
            let b = update_belief(state(prior), hi).unwrap().pi;
            prop_assert!(a > b);
        }

        #[test]
        fn verbatim_update_increasing_in_prior(p1 in 0.01f64..0.99, p2 in 0.01f64..0.99, r in 0.01f64..1.0) {
            prop_assume!((p1 - p2).abs() > 1e-6);
            let (lo, hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
            prop_assert!(update_belief(state(lo), r).unwrap().pi < update_belief(state(hi), r).unwrap().pi);
        }

        #[test]
        fn noise_positive_and_monotone(
            x in 1e-6f64..1e3, eta in 0.0f64..3.0, p1 in 0.0f64..1.0, p2 in 0.0f64..1.0, seed in any::<u64>()
        ) {
            let det = NoisePolicy::new(eta, NoiseMode::Deterministic).unwrap();
            let gauss = NoisePolicy::new(eta, NoiseMode::Gaussian).unwrap();
            prop_assert!(apply_noise(x, p1, &det, seed) > 0.0);
            prop_assert!(apply_noise(x, p1, &gauss, seed) > 0.0);
            let (lo, hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
            prop_assert!(apply_noise(x, lo, &det, seed) <= apply_noise(x, hi, &det, seed));
        }
    }
}
