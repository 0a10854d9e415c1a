//! Thresholds and optimal cutoff curves of both players.
//!
//! All curves are indexed by the system's belief `pi`. The end-user's
//! termination payoff is `lambda(x, pi) = (0.8 x ln(2 pi) + pi x) / b`, which
//! is linear in the variance value `x`; the cutoffs `L+` and `L` therefore
//! take `x` as an input (the running path value) instead of solving their
//! implicit equations, which would only admit the trivial root.

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::gbm::GbmParams;
use crate::hjb::{CharRoots, PayoffConfig, ValueFunctionConstants};

/// Weight on `x ln(2 pi)` in the termination payoff.
const LOG_WEIGHT: f64 = 0.8;

const U_DAMPING: f64 = 0.5;
const U_REL_TOL: f64 = 1e-10;
const U_MAX_ITER: usize = 200;
const U_BRACKET_FACTOR: f64 = 10.0;

/// L- may exceed L+ by this relative margin before it counts as a violation.
const ENVELOPE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub u_th: f64,
    pub l_th: f64,
}

impl Thresholds {
    pub fn compute(roots: &CharRoots, params: &GbmParams, payoffs: &PayoffConfig, l_slack: f64) -> Result<Self> {
        Ok(Self {
            u_th: system_threshold(roots, params, payoffs)?,
            l_th: enduser_threshold(roots, params, payoffs, l_slack)?,
        })
    }

    /// Whether the system's bound sits above the end-user's.
    pub fn ordered(&self) -> bool {
        self.u_th >= self.l_th
    }
}

fn check_beta1(roots: &CharRoots) -> Result<()> {
    if !(roots.beta1 > 1.0) {
        return Err(GameError::InvalidParameter {
            name: "beta1",
            value: roots.beta1,
            reason: "must exceed 1",
        });
    }
    Ok(())
}

/// System's blocking bound `beta1 c_d (r - mu) / ((beta1 - 1)(k - r_e))`.
pub fn system_threshold(roots: &CharRoots, params: &GbmParams, payoffs: &PayoffConfig) -> Result<f64> {
    check_beta1(roots)?;
    let gap = payoffs.discount_gap(params)?;
    if !(payoffs.k > payoffs.r_e) {
        return Err(GameError::PayoffOrderViolation(format!(
            "block reward k = {} must exceed honest-service r_e = {}",
            payoffs.k, payoffs.r_e
        )));
    }
    if !(payoffs.c_d > 0.0) {
        return Err(GameError::InvalidParameter {
            name: "payoffs.c_d",
            value: payoffs.c_d,
            reason: "must be positive",
        });
    }
    let b1 = roots.beta1;
    Ok(b1 * payoffs.c_d * gap / ((b1 - 1.0) * (payoffs.k - payoffs.r_e)))
}

/// End-user's target bound: the strict lower bound
/// `beta1 d (r - mu) / ((beta1 - 1)(M_m + d' - P))` scaled by `slack >= 1`.
pub fn enduser_threshold(roots: &CharRoots, params: &GbmParams, payoffs: &PayoffConfig, slack: f64) -> Result<f64> {
    check_beta1(roots)?;
    let gap = payoffs.discount_gap(params)?;
    let excess = payoffs.deviation_gain() - payoffs.p;
    if !(excess > 0.0) {
        return Err(GameError::PayoffOrderViolation(format!(
            "deviation gain M_m + d_prime = {} must exceed pooling P = {}",
            payoffs.deviation_gain(),
            payoffs.p
        )));
    }
    if !(payoffs.d > 0.0) {
        return Err(GameError::InvalidParameter {
            name: "payoffs.d",
            value: payoffs.d,
            reason: "must be positive",
        });
    }
    if !(slack >= 1.0 && slack.is_finite()) {
        return Err(GameError::InvalidParameter {
            name: "game.lth_slack",
            value: slack,
            reason: "must be at least 1",
        });
    }
    let b1 = roots.beta1;
    Ok(slack * b1 * payoffs.d * gap / ((b1 - 1.0) * excess))
}

/// `lambda / x`: the termination payoff per unit variance at belief `pi`.
pub fn payoff_slope(pi: f64, payoffs: &PayoffConfig) -> f64 {
    (LOG_WEIGHT * (2.0 * pi).ln() + pi) / payoffs.b
}

/// Termination payoff and its partial derivatives at `(x, pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationPayoff {
    pub lambda: f64,
    /// d lambda / dx
    pub lambda_x: f64,
    /// d lambda / dpi
    pub lambda_pi: f64,
    /// d^2 lambda / dx dpi
    pub lambda_x_pi: f64,
}

fn check_belief(pi: f64) -> Result<()> {
    if !(pi > 0.0 && pi <= 1.0) {
        return Err(GameError::InvalidBelief { pi });
    }
    Ok(())
}

pub fn termination_payoff_partials(x: f64, pi: f64, payoffs: &PayoffConfig) -> Result<TerminationPayoff> {
    check_belief(pi)?;
    let slope = payoff_slope(pi, payoffs);
    let slope_pi = (LOG_WEIGHT / pi + 1.0) / payoffs.b;
    Ok(TerminationPayoff {
        lambda: x * slope,
        lambda_x: slope,
        lambda_pi: x * slope_pi,
        lambda_x_pi: slope_pi,
    })
}

/// `(lambda, d lambda / dx)`; `lambda` is linear in `x` so the second
/// derivative is zero.
pub fn termination_payoff(x: f64, pi: f64, payoffs: &PayoffConfig) -> Result<(f64, f64)> {
    let t = termination_payoff_partials(x, pi, payoffs)?;
    Ok((t.lambda, t.lambda_x))
}

fn cutoff_from_path(x: f64, pi: f64, params: &GbmParams, payoffs: &PayoffConfig) -> Result<f64> {
    if !(x > 0.0) {
        return Err(GameError::InvalidParameter {
            name: "x",
            value: x,
            reason: "must be positive",
        });
    }
    let gap = payoffs.discount_gap(params)?;
    let (lambda, _) = termination_payoff(x, pi, payoffs)?;
    if !(lambda > 0.0) {
        return Err(GameError::NonpositiveCutoff { pi, lambda });
    }
    Ok(lambda * gap / payoffs.p)
}

/// Upper envelope `L+ = lambda(x, pi) (r - mu) / P` at path value `x`.
pub fn curve_lplus(x: f64, pi: f64, params: &GbmParams, payoffs: &PayoffConfig) -> Result<f64> {
    cutoff_from_path(x, pi, params, payoffs)
}

/// End-user cutoff `L = lambda(x, pi) (r - mu) / P` at the running belief.
pub fn curve_l(x: f64, pi: f64, params: &GbmParams, payoffs: &PayoffConfig) -> Result<f64> {
    cutoff_from_path(x, pi, params, payoffs)
}

/// `dL+/dpi` holding the path value `x` fixed.
pub fn lplus_slope(x: f64, pi: f64, params: &GbmParams, payoffs: &PayoffConfig) -> Result<f64> {
    let gap = payoffs.discount_gap(params)?;
    let t = termination_payoff_partials(x, pi, payoffs)?;
    Ok(t.lambda_pi * gap / payoffs.p)
}

/// `A+` constants scaled by `L+^beta`: `(A1 L+^beta1, A2 L+^beta2)`.
///
/// Working with the scaled pair keeps every quantity of order `L+` no matter
/// how extreme the roots are.
fn scaled_aplus(lplus: f64, t: &TerminationPayoff, gap: f64, p: f64, roots: &CharRoots) -> (f64, f64) {
    let (b1, b2) = (roots.beta1, roots.beta2);
    let a1 = (b2 * t.lambda - t.lambda_x * lplus) / (b2 - b1) + p * (1.0 - b2) * lplus / (gap * (b2 - b1));
    let a2 = (b1 * t.lambda - t.lambda_x * lplus) / (b1 - b2) + p * (1.0 - b1) * lplus / (gap * (b1 - b2));
    (a1, a2)
}

/// Value-matching / smooth-pasting constants of the end-user's value
/// function at `L+`, with `lambda` and `lambda'` evaluated at `(L+, pi)`.
pub fn constants_aplus(
    lplus: f64,
    pi: f64,
    params: &GbmParams,
    payoffs: &PayoffConfig,
    roots: &CharRoots,
) -> Result<ValueFunctionConstants> {
    if !(lplus > 0.0) {
        return Err(GameError::InvalidCurveValue {
            name: "Lplus",
            value: lplus,
        });
    }
    let gap = payoffs.discount_gap(params)?;
    let t = termination_payoff_partials(lplus, pi, payoffs)?;
    let (s1, s2) = scaled_aplus(lplus, &t, gap, payoffs.p, roots);
    Ok(ValueFunctionConstants {
        c1: s1 / lplus.powf(roots.beta1),
        c2: s2 / lplus.powf(roots.beta2),
    })
}

/// Total `pi`-derivatives of the scaled `A+` constants along `L+(pi)`.
///
/// The chain-rule part through `L+` follows the closed forms for
/// `dA1+/dpi` and `dA2+/dpi` (with `lambda'' = 0`); because `lambda` also
/// depends on `pi` directly, the explicit partials
/// `(beta_j lambda_pi - lambda'_pi L+) / (beta_j - beta_i)` are added.
/// Returned values are multiplied by `L+^beta_i` like [`scaled_aplus`].
fn scaled_aplus_derivatives(
    lplus: f64,
    dlplus: f64,
    t: &TerminationPayoff,
    scaled: (f64, f64),
    roots: &CharRoots,
) -> (f64, f64) {
    let (b1, b2) = (roots.beta1, roots.beta2);
    let lambda_xx = 0.0;
    let one = |bi: f64, bj: f64, a_scaled: f64| {
        let chain = dlplus * (bj * t.lambda_x - lambda_xx * lplus) / (bj - bi)
            + dlplus / lplus * (a_scaled * (1.0 - bi) - bj * t.lambda / (bj - bi));
        let explicit = (bj * t.lambda_pi - t.lambda_x_pi * lplus) / (bj - bi);
        chain + explicit
    };
    (one(b1, b2, scaled.0), one(b2, b1, scaled.1))
}

/// Unscaled `(dA1+/dpi, dA2+/dpi)` at `pi` along the envelope with fixed
/// path value `x`.
pub fn aplus_derivatives(
    x: f64,
    pi: f64,
    params: &GbmParams,
    payoffs: &PayoffConfig,
    roots: &CharRoots,
) -> Result<(f64, f64)> {
    let ctx = EnvelopeContext::new(x, params, payoffs, roots)?;
    let at = ctx.at(pi)?;
    Ok((
        at.d_scaled.0 / at.lplus.powf(roots.beta1),
        at.d_scaled.1 / at.lplus.powf(roots.beta2),
    ))
}

/// Everything the L- equation needs along the envelope `L+(pi)`.
struct EnvelopeContext<'a> {
    x: f64,
    gap: f64,
    payoffs: &'a PayoffConfig,
    params: &'a GbmParams,
    roots: &'a CharRoots,
}

#[derive(Debug, Clone, Copy)]
struct EnvelopePoint {
    lplus: f64,
    scaled: (f64, f64),
    d_scaled: (f64, f64),
}

impl<'a> EnvelopeContext<'a> {
    fn new(x: f64, params: &'a GbmParams, payoffs: &'a PayoffConfig, roots: &'a CharRoots) -> Result<Self> {
        let gap = payoffs.discount_gap(params)?;
        Ok(Self {
            x,
            gap,
            payoffs,
            params,
            roots,
        })
    }

    fn at(&self, pi: f64) -> Result<EnvelopePoint> {
        let lplus = curve_lplus(self.x, pi, self.params, self.payoffs)?;
        let dlplus = lplus_slope(self.x, pi, self.params, self.payoffs)?;
        let t = termination_payoff_partials(lplus, pi, self.payoffs)?;
        let scaled = scaled_aplus(lplus, &t, self.gap, self.payoffs.p, self.roots);
        let d_scaled = scaled_aplus_derivatives(lplus, dlplus, &t, scaled, self.roots);
        Ok(EnvelopePoint {
            lplus,
            scaled,
            d_scaled,
        })
    }
}

/// Numerator and denominator of `-d ln L- / dpi` with `y = L+/L-`, both
/// multiplied by `y^beta2` so that only `y^(beta2 - beta1) <= 1` appears.
fn log_slope_parts(pt: &EnvelopePoint, lminus: f64, roots: &CharRoots) -> (f64, f64) {
    let y = pt.lplus / lminus;
    let w = y.powf(roots.beta2 - roots.beta1);
    let num = pt.d_scaled.0 * w + pt.d_scaled.1;
    let den = pt.scaled.0 * roots.beta1 * w + pt.scaled.1 * roots.beta2;
    (num, den)
}

/// Relative size of the boundary expression `A1+ L^beta1 + A2+ L^beta2`
/// against its larger term, plus its log-magnitude and sign.
fn boundary_expression(pt: &EnvelopePoint, lminus: f64, roots: &CharRoots) -> (f64, f64, f64, f64) {
    let y = pt.lplus / lminus;
    let w = y.powf(roots.beta2 - roots.beta1);
    let inner = pt.scaled.0 * w + pt.scaled.1;
    let largest = (pt.scaled.0.abs() * w).max(pt.scaled.1.abs());
    let log_mag = inner.abs().ln() - roots.beta2 * y.ln();
    (inner / largest, log_mag, inner.signum(), largest)
}

/// Result of integrating the L- equation across a belief grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LminusCurve {
    /// One entry per grid point; NaN after a halt.
    pub values: Vec<f64>,
    /// `|A1+ L^beta1 + A2+ L^beta2| / max(|A1+ L^beta1|, |A2+ L^beta2|)`.
    pub boundary_residual: Vec<f64>,
    /// Change of the boundary expression since the left endpoint, relative
    /// to the larger of its two terms.
    pub boundary_drift: Vec<f64>,
    /// The envelope `L+` used along the integration.
    pub lplus: Vec<f64>,
    /// Grid index of the last accepted point when integration stopped early.
    pub halt_index: Option<usize>,
    pub halt: Option<GameError>,
}

impl LminusCurve {
    pub fn terminal(&self) -> Option<f64> {
        self.values.iter().rev().copied().find(|v| v.is_finite())
    }

    pub fn max_drift(&self) -> f64 {
        self.boundary_drift
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    }
}

fn check_grid(pi_grid: &[f64]) -> Result<()> {
    if pi_grid.len() < 2 {
        return Err(GameError::InvalidParameter {
            name: "game.pi_grid",
            value: pi_grid.len() as f64,
            reason: "needs at least two points",
        });
    }
    for (i, &pi) in pi_grid.iter().enumerate() {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(GameError::InvalidBelief { pi });
        }
        if i > 0 && pi <= pi_grid[i - 1] {
            return Err(GameError::InvalidParameter {
                name: "game.pi_grid",
                value: pi,
                reason: "must be strictly increasing",
            });
        }
    }
    Ok(())
}

/// Integrates the lower end-user envelope `L-(pi)` left to right.
///
/// `L-` keeps the boundary expression `A1+(pi) L-^beta1 + A2+(pi) L-^beta2`
/// constant, giving
/// `dL-/dpi = -(A1+' L-^beta1 + A2+' L-^beta2) / (A1+ beta1 L-^(beta1-1) + A2+ beta2 L-^(beta2-1))`.
/// The envelope `L+` is evaluated at the largest value in `x_path`. The
/// equation is stepped in `ln L-` with classical RK4, `substeps` equal steps
/// per grid interval. A denominator sign change inside a step halts
/// integration with `SingularDerivative`; `L-` rising above `L+` halts it
/// with `EnvelopeViolation`. Either way the partial curve is returned.
#[allow(clippy::too_many_arguments)]
pub fn curve_lminus(
    pi_grid: &[f64],
    x_path: &[f64],
    params: &GbmParams,
    payoffs: &PayoffConfig,
    roots: &CharRoots,
    init: f64,
    substeps: usize,
) -> Result<LminusCurve> {
    check_grid(pi_grid)?;
    if !(init > 0.0 && init.is_finite()) {
        return Err(GameError::InvalidCurveValue {
            name: "Lminus init",
            value: init,
        });
    }
    let x_env = x_path.iter().copied().fold(f64::NAN, f64::max);
    let ctx = EnvelopeContext::new(x_env, params, payoffs, roots)?;
    let substeps = substeps.max(1);

    let n = pi_grid.len();
    let mut curve = LminusCurve {
        values: vec![f64::NAN; n],
        boundary_residual: vec![f64::NAN; n],
        boundary_drift: vec![f64::NAN; n],
        lplus: Vec::with_capacity(n),
        halt_index: None,
        halt: None,
    };
    for &pi in pi_grid {
        curve.lplus.push(curve_lplus(x_env, pi, params, payoffs)?);
    }

    let first = ctx.at(pi_grid[0])?;
    if init > first.lplus * (1.0 + ENVELOPE_SLACK) {
        return Err(GameError::EnvelopeViolation {
            pi: pi_grid[0],
            index: 0,
            lminus: init,
            lplus: first.lplus,
        });
    }
    let (res0, log0, sign0, _) = boundary_expression(&first, init, roots);
    curve.values[0] = init;
    curve.boundary_residual[0] = res0.abs();
    curve.boundary_drift[0] = 0.0;

    let slope = |pi: f64, u: f64| -> Result<(f64, f64)> {
        let pt = ctx.at(pi)?;
        let (num, den) = log_slope_parts(&pt, u.exp(), roots);
        Ok((-num / den, den))
    };

    let mut u = init.ln();
    'grid: for i in 1..n {
        let (a, b) = (pi_grid[i - 1], pi_grid[i]);
        let h = (b - a) / substeps as f64;
        for s in 0..substeps {
            let p0 = a + s as f64 * h;
            let step = (|| -> Result<Option<f64>> {
                let (k1, d1) = slope(p0, u)?;
                let (k2, d2) = slope(p0 + 0.5 * h, u + 0.5 * h * k1)?;
                let (k3, d3) = slope(p0 + 0.5 * h, u + 0.5 * h * k2)?;
                let (k4, d4) = slope(p0 + h, u + h * k3)?;
                let same_sign = [d2, d3, d4].iter().all(|d| d.signum() == d1.signum() && *d != 0.0);
                if !same_sign || d1 == 0.0 || ![k1, k2, k3, k4].iter().all(|k| k.is_finite()) {
                    return Ok(None);
                }
                Ok(Some(u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)))
            })();
            match step {
                Ok(Some(next)) => u = next,
                Ok(None) => {
                    curve.halt_index = Some(i - 1);
                    curve.halt = Some(GameError::SingularDerivative { pi: p0, index: i - 1 });
                    break 'grid;
                }
                Err(e) => {
                    curve.halt_index = Some(i - 1);
                    curve.halt = Some(e);
                    break 'grid;
                }
            }
        }

        let lminus = u.exp();
        let lplus = curve.lplus[i];
        if !(lminus > 0.0) || lminus > lplus * (1.0 + ENVELOPE_SLACK) {
            curve.halt_index = Some(i - 1);
            curve.halt = Some(GameError::EnvelopeViolation {
                pi: b,
                index: i,
                lminus,
                lplus,
            });
            break;
        }
        let pt = ctx.at(b)?;
        let (res, _, _, largest) = boundary_expression(&pt, lminus, roots);
        // G_0 expressed in the scaling of the current point: G_0 y^beta2.
        let y = pt.lplus / lminus;
        let g0_here = sign0 * (log0 + roots.beta2 * y.ln()).exp();
        let inner = res * largest;
        curve.values[i] = lminus;
        curve.boundary_residual[i] = res.abs();
        curve.boundary_drift[i] = (inner - g0_here).abs() / largest;
    }
    Ok(curve)
}

/// `g(J) = c_d (r - mu) [beta2 J^beta1 - beta1 J^beta2] / ((k - r_e)[(beta2 - 1) J^beta1 - (beta1 - 1) J^beta2])`.
///
/// Evaluated after dividing through by `J^beta2`, which is finite for
/// `J in (0, 1]`.
pub fn best_response_map(j: f64, roots: &CharRoots, gap: f64, payoffs: &PayoffConfig) -> f64 {
    let (b1, b2) = (roots.beta1, roots.beta2);
    let w = j.powf(b1 - b2);
    let num = b2 * w - b1;
    let den = (b2 - 1.0) * w - (b1 - 1.0);
    payoffs.c_d * gap * num / (den * (payoffs.k - payoffs.r_e))
}

/// System value-function constants `(B1, B2)` when blocking at `u`.
pub fn constants_b(
    u: f64,
    roots: &CharRoots,
    params: &GbmParams,
    payoffs: &PayoffConfig,
) -> Result<ValueFunctionConstants> {
    let gap = payoffs.discount_gap(params)?;
    let (b1, b2) = (roots.beta1, roots.beta2);
    let dk = payoffs.k - payoffs.r_e;
    let c1 = (b2 - 1.0) * dk / (gap * (b2 - b1) * u.powf(b1 - 1.0)) - payoffs.c_d * b2 / ((b2 - b1) * u.powf(b1));
    let c2 = (b1 - 1.0) * dk / (gap * (b1 - b2) * u.powf(b2 - 1.0)) - payoffs.c_d * b1 / ((b1 - b2) * u.powf(b2));
    Ok(ValueFunctionConstants { c1, c2 })
}

/// System's best-response cutoff: the fixed point `U = g(L / U)` with `U >= L`.
///
/// Damped iteration from `u_th`; falls back to bisection over
/// `[L, 10 u_th]` when the iteration stalls or leaves the admissible range.
pub fn best_response_u(l: f64, roots: &CharRoots, params: &GbmParams, payoffs: &PayoffConfig) -> Result<f64> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(GameError::InvalidCurveValue { name: "L", value: l });
    }
    let u_th = system_threshold(roots, params, payoffs)?;
    let gap = payoffs.discount_gap(params)?;
    let h = |u: f64| u - best_response_map(l / u, roots, gap, payoffs);
    let accept = |u: f64| u >= l && u.is_finite() && h(u).abs() <= U_REL_TOL * (1.0 + u);

    let mut u = u_th.max(l);
    for _ in 0..U_MAX_ITER {
        let next = (1.0 - U_DAMPING) * u + U_DAMPING * best_response_map(l / u, roots, gap, payoffs);
        if !(next >= l) {
            break;
        }
        let done = (next - u).abs() <= U_REL_TOL * next;
        u = next;
        if done {
            break;
        }
    }
    if accept(u) {
        return Ok(u);
    }

    let (lo, hi) = (l, U_BRACKET_FACTOR * u_th);
    if !(hi > lo) {
        return Err(GameError::NoBestResponse { l, lo, hi });
    }
    // Locate the first sign change of h on a coarse partition, then bisect.
    const PARTS: usize = 256;
    let mut bracket = None;
    let mut a = lo;
    let mut ha = h(a);
    for i in 1..=PARTS {
        let b = lo + (hi - lo) * i as f64 / PARTS as f64;
        let hb = h(b);
        if ha == 0.0 {
            bracket = Some((a, a));
            break;
        }
        if ha.signum() != hb.signum() {
            bracket = Some((a, b));
            break;
        }
        a = b;
        ha = hb;
    }
    let (mut a, mut b) = bracket.ok_or(GameError::NoBestResponse { l, lo, hi })?;
    let mut fa = h(a);
    while b - a > 1e-15 * b {
        let m = 0.5 * (a + b);
        let fm = h(m);
        if fm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let u = if h(a).abs() <= h(b).abs() { a } else { b };
    if accept(u) {
        Ok(u)
    } else {
        Err(GameError::NoBestResponse { l, lo, hi })
    }
}

/// Best response restricted to `U >= L`: when every interior candidate lies
/// below `L` (the system would rather block under the end-user's cutoff),
/// the constrained optimum is the corner `U = L`.
pub fn constrained_best_response(l: f64, roots: &CharRoots, params: &GbmParams, payoffs: &PayoffConfig) -> Result<f64> {
    match best_response_u(l, roots, params, payoffs) {
        Err(GameError::NoBestResponse { .. })
            if l > best_response_map(1.0, roots, payoffs.discount_gap(params)?, payoffs) =>
        {
            Ok(l)
        }
        other => other,
    }
}

/// Per-point diagnostics for the system curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UFlags {
    /// At least one of the two sufficient inequalities holds.
    pub cond_ok: bool,
    /// `U` does not increase towards the next grid point.
    pub mono_ok: bool,
}

/// Sampled cutoff curves over a belief grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffCurves {
    pub pi_grid: Vec<f64>,
    pub u: Vec<f64>,
    pub lplus: Vec<f64>,
    pub lminus: Vec<f64>,
    pub l: Vec<f64>,
    pub x_path: Vec<f64>,
    pub u_cond_ok: Vec<bool>,
    pub mono_ok: Vec<bool>,
}

impl CutoffCurves {
    pub fn len(&self) -> usize {
        self.pi_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi_grid.is_empty()
    }

    /// `|L+ - L-| / L+` per grid point (NaN where `L-` is missing).
    pub fn relative_gap(&self) -> Vec<f64> {
        self.lplus
            .iter()
            .zip(&self.lminus)
            .map(|(p, m)| (p - m).abs() / p)
            .collect()
    }
}

/// Evaluates the two monotonicity inequalities for `U` with
/// `J' = dJ/dpi`, `J = L/U`, by finite differences, and flags empirical
/// increases of `U` along the grid.
///
/// The inequalities raise `J'` to non-integer powers, so they are evaluated
/// at `|J'|`.
pub fn check_u_monotonicity(curves: &CutoffCurves, roots: &CharRoots) -> Vec<UFlags> {
    let n = curves.len();
    let j: Vec<f64> = curves.l.iter().zip(&curves.u).map(|(l, u)| l / u).collect();
    let pi = &curves.pi_grid;
    let (b1, b2) = (roots.beta1, roots.beta2);
    (0..n)
        .map(|i| {
            let dj = if n < 2 {
                0.0
            } else if i == 0 {
                (j[1] - j[0]) / (pi[1] - pi[0])
            } else if i == n - 1 {
                (j[n - 1] - j[n - 2]) / (pi[n - 1] - pi[n - 2])
            } else {
                (j[i + 1] - j[i - 1]) / (pi[i + 1] - pi[i - 1])
            };
            let jp = dj.abs();
            let first = b2 * b1 * jp.powf(b2 - 1.0) <= b1 * b2 * jp.powf(b1 - 1.0);
            let second = b2 * (b1 - 1.0) * jp.powf(b2 - 1.0) <= b1 * (b2 - 1.0) * jp.powf(b1 - 1.0);
            let mono_ok = i + 1 >= n || curves.u[i + 1] <= curves.u[i] * (1.0 + 1e-9);
            UFlags {
                cond_ok: first || second,
                mono_ok,
            }
        })
        .collect()
}

/// Keeps the grid points where the termination payoff is positive; the
/// payoff slope increases in `pi`, so this drops a prefix.
pub fn positive_payoff_grid(pi_grid: &[f64], payoffs: &PayoffConfig) -> Vec<f64> {
    pi_grid
        .iter()
        .copied()
        .filter(|&pi| pi > 0.0 && pi <= 1.0 && payoff_slope(pi, payoffs) > 0.0)
        .collect()
}

/// Builds all curves on `pi_grid` from the path values `x_path` (one per
/// grid point). `L+` uses the largest path value, `L` the pointwise one.
#[allow(clippy::too_many_arguments)]
pub fn build_curves(
    pi_grid: &[f64],
    x_path: &[f64],
    params: &GbmParams,
    payoffs: &PayoffConfig,
    roots: &CharRoots,
    lminus_init_ratio: f64,
    substeps: usize,
) -> Result<(CutoffCurves, LminusCurve)> {
    check_grid(pi_grid)?;
    if x_path.len() != pi_grid.len() {
        return Err(GameError::InvalidParameter {
            name: "x_path",
            value: x_path.len() as f64,
            reason: "must match the grid length",
        });
    }
    let x_env = x_path.iter().copied().fold(f64::NAN, f64::max);
    let mut l = Vec::with_capacity(pi_grid.len());
    let mut u = Vec::with_capacity(pi_grid.len());
    for (&pi, &x) in pi_grid.iter().zip(x_path) {
        let li = curve_l(x, pi, params, payoffs)?;
        u.push(constrained_best_response(li, roots, params, payoffs)?);
        l.push(li);
    }
    let init = lminus_init_ratio * curve_lplus(x_env, pi_grid[0], params, payoffs)?;
    let lminus = curve_lminus(pi_grid, x_path, params, payoffs, roots, init, substeps)?;

    let mut curves = CutoffCurves {
        pi_grid: pi_grid.to_vec(),
        u,
        lplus: lminus.lplus.clone(),
        lminus: lminus.values.clone(),
        l,
        x_path: x_path.to_vec(),
        u_cond_ok: Vec::new(),
        mono_ok: Vec::new(),
    };
    let flags = check_u_monotonicity(&curves, roots);
    curves.u_cond_ok = flags.iter().map(|f| f.cond_ok).collect();
    curves.mono_ok = flags.iter().map(|f| f.mono_ok).collect();
    Ok((curves, lminus))
}
