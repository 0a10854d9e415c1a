//! The staged game between the system and the end-user, and detection of the
//! point where the end-user's envelopes meet.

use serde::{Deserialize, Serialize};

use crate::beliefs::{apply_noise, update_belief_with, BayesRule, BeliefState, NoisePolicy};
use crate::cutoffs::{
    build_curves, constrained_best_response, curve_l, curve_lplus, payoff_slope, positive_payoff_grid,
    termination_payoff_partials, CutoffCurves, LminusCurve, Thresholds,
};
use crate::error::{GameError, Result};
use crate::gbm::{progress_cdf, simulate_path, GbmParams};
use crate::hjb::{characteristic_roots, CharRoots, PayoffConfig};

/// Number of log-spaced points in the `varsigma` scan.
pub const VARSIGMA_SCAN_POINTS: usize = 200;
pub const VARSIGMA_SCAN_RANGE: (f64, f64) = (1e-3, 1e3);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for PiGrid {
    fn default() -> Self {
        Self {
            start: 0.01,
            stop: 0.99,
            step: 0.01,
        }
    }
}

impl PiGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0 && self.stop < 1.0 && self.start < self.stop) {
            return Err(GameError::InvalidParameter {
                name: "game.pi_grid",
                value: self.start,
                reason: "needs 0 < start < stop < 1",
            });
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(GameError::InvalidParameter {
                name: "game.pi_grid.step",
                value: self.step,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    /// Grid points `start + i * step` up to `stop` (inclusive within rounding).
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub gbm: GbmParams,
    pub payoffs: PayoffConfig,
    pub noise: NoisePolicy,
    pub bayes_rule: BayesRule,
    pub n_stages: usize,
    pub dt: f64,
    pub pi0: f64,
    pub seed: u64,
    pub convergence_tol: f64,
    pub pi_grid: PiGrid,
    /// `L-` at the left grid end as a fraction of `L+`.
    pub lminus_init_ratio: f64,
    pub lth_slack: f64,
    /// RK4 steps per grid interval for `L-`.
    pub ode_substeps: usize,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            gbm: GbmParams {
                mu: 0.02,
                sigma: 0.1,
                x0: 0.01,
            },
            payoffs: PayoffConfig::default(),
            noise: NoisePolicy::default(),
            bayes_rule: BayesRule::Verbatim,
            n_stages: 100,
            dt: 1.0,
            pi0: 0.5,
            seed: 7,
            convergence_tol: 1e-3,
            pi_grid: PiGrid::default(),
            lminus_init_ratio: 1e-3,
            lth_slack: 1.0,
            ode_substeps: 8,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        self.gbm.validate()?;
        self.payoffs.validate()?;
        self.noise.validate()?;
        self.pi_grid.validate()?;
        if self.n_stages < 2 {
            return Err(GameError::InvalidParameter {
                name: "game.n_stages",
                value: self.n_stages as f64,
                reason: "must be at least 2",
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(GameError::InvalidHorizon { dt: self.dt });
        }
        if !(self.pi0 > 0.0 && self.pi0 <= 1.0) {
            return Err(GameError::InvalidBelief { pi: self.pi0 });
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(GameError::InvalidParameter {
                name: "game.convergence_tol",
                value: self.convergence_tol,
                reason: "must be positive",
            });
        }
        if !(self.lminus_init_ratio > 0.0 && self.lminus_init_ratio <= 1.0) {
            return Err(GameError::InvalidParameter {
                name: "game.lminus_init_ratio",
                value: self.lminus_init_ratio,
                reason: "must lie in (0, 1]",
            });
        }
        if self.ode_substeps == 0 {
            return Err(GameError::InvalidParameter {
                name: "game.ode_substeps",
                value: 0.0,
                reason: "must be positive",
            });
        }
        self.payoffs.discount_gap(&self.gbm)?;
        self.payoffs.check_order()?;
        Ok(())
    }
}

/// Per-stage record of one game. Index `i` holds stage `t[i] = i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTrace {
    pub t: Vec<usize>,
    pub ex_sy: Vec<f64>,
    pub ex_eu: Vec<f64>,
    pub pi: Vec<f64>,
    pub u: Vec<f64>,
    pub l: Vec<f64>,
    pub lplus: Vec<f64>,
    pub lminus: Vec<f64>,
    /// First stage with `ex_sy >= U`.
    pub blocked_at: Option<usize>,
    /// First stage with `ex_eu >= L`.
    pub stopped_at: Option<usize>,
}

impl GameTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Whether the system has blocked by stage `t`.
    pub fn blocked_by(&self, t: usize) -> bool {
        self.blocked_at.is_some_and(|b| t >= b)
    }

    pub fn stopped_by(&self, t: usize) -> bool {
        self.stopped_at.is_some_and(|s| t >= s)
    }

    pub fn first_event(&self) -> Option<usize> {
        match (self.blocked_at, self.stopped_at) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn max_pi(&self) -> f64 {
        self.pi.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub converged: bool,
    pub pi_star: Option<f64>,
    pub varsigma_at_pi_star: Option<f64>,
    pub lambda_poly_sign_change: bool,
    pub uniqueness_condition_holds: bool,
    /// `lambda' - P/(r - mu) > 0` at the evaluation point.
    pub claim_i_premise: bool,
    pub u_th: f64,
    pub l_th: f64,
    pub thresholds_ordered: bool,
    pub blocked_before_convergence: bool,
    /// Smallest relative gap `|L+ - L-| / L+` on the reachable grid.
    pub min_gap: Option<f64>,
    pub pi_at_min_gap: Option<f64>,
    /// Belief where the diagnostics above were evaluated (`pi_star` or the
    /// point of smallest gap).
    pub eval_pi: Option<f64>,
    pub max_realized_pi: f64,
    pub halt_reason: Option<String>,
    pub halt_pi: Option<f64>,
    /// Fraction of grid points where a sufficient condition for `U` to be
    /// non-increasing holds.
    pub u_cond_fraction: f64,
}

/// `varsigma = lambda(x, pi) (r - mu) / (P L-)`, with `x` the path value
/// that defines `L+`.
pub fn varsigma(lminus: f64, pi: f64, x: f64, params: &GbmParams, payoffs: &PayoffConfig) -> Result<f64> {
    if !(lminus > 0.0) {
        return Err(GameError::InvalidCurveValue {
            name: "Lminus",
            value: lminus,
        });
    }
    let gap = payoffs.discount_gap(params)?;
    let t = termination_payoff_partials(x, pi, payoffs)?;
    Ok(t.lambda * gap / (payoffs.p * lminus))
}

/// Coefficients `(A, B)` of `Lambda(vs) = A vs^-beta1 + B vs^-beta2`, with
/// `lambda` and `lambda'` taken at `(L+, pi)`.
pub fn lambda_coefficients(
    lplus: f64,
    pi: f64,
    params: &GbmParams,
    payoffs: &PayoffConfig,
    roots: &CharRoots,
) -> Result<(f64, f64)> {
    let gap = payoffs.discount_gap(params)?;
    let t = termination_payoff_partials(lplus, pi, payoffs)?;
    let (b1, b2, p) = (roots.beta1, roots.beta2, payoffs.p);
    let a = (b2 * t.lambda - t.lambda_x * lplus) / (b2 - b1) + p * (1.0 - b2) * lplus / (gap * (b2 - b1));
    let b = (b1 * t.lambda - t.lambda_x * lplus) / (b1 - b2) + p * (1.0 - b1) * lplus / (gap * (b1 - b2));
    Ok((a, b))
}

pub fn lambda_polynomial(
    vs: f64,
    lplus: f64,
    pi: f64,
    params: &GbmParams,
    payoffs: &PayoffConfig,
    roots: &CharRoots,
) -> Result<f64> {
    let (a, b) = lambda_coefficients(lplus, pi, params, payoffs, roots)?;
    Ok(lambda_from_coefficients(vs, a, b, roots))
}

fn lambda_from_coefficients(vs: f64, a: f64, b: f64, roots: &CharRoots) -> f64 {
    let ta = if a == 0.0 { 0.0 } else { a * vs.powf(-roots.beta1) };
    let tb = if b == 0.0 { 0.0 } else { b * vs.powf(-roots.beta2) };
    ta + tb
}

/// Sign of `Lambda(vs)` computed without overflow.
fn lambda_sign(vs: f64, a: f64, b: f64, roots: &CharRoots) -> f64 {
    let s = a * vs.powf(roots.beta2 - roots.beta1) + b;
    if s == 0.0 {
        0.0
    } else {
        s.signum()
    }
}

/// Whether `Lambda` changes sign on the log-spaced `varsigma` scan.
pub fn lambda_sign_change(
    lplus: f64,
    pi: f64,
    params: &GbmParams,
    payoffs: &PayoffConfig,
    roots: &CharRoots,
) -> Result<bool> {
    let (a, b) = lambda_coefficients(lplus, pi, params, payoffs, roots)?;
    let (lo, hi) = VARSIGMA_SCAN_RANGE;
    let n = VARSIGMA_SCAN_POINTS;
    let mut seen = 0.0;
    for i in 0..n {
        let vs = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
        let s = lambda_sign(vs, a, b, roots);
        if s != 0.0 {
            if seen != 0.0 && s != seen {
                return Ok(true);
            }
            seen = s;
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniquenessCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// `lambda' - P/(r - mu) > 0`.
    pub claim_i_premise: bool,
}

/// Sufficient condition for a single root of `Lambda`:
/// `beta2 / vs^(beta2+1) [L+(lambda' - P/(r-mu)) - beta1(lambda - P L+/(r-mu))]
///  >= beta1 / vs^(beta1+1) [beta2(lambda - P L+/(r-mu)) - L+(lambda' - P/(r-mu))]`.
pub fn uniqueness_condition(
    vs: f64,
    lplus: f64,
    pi: f64,
    params: &GbmParams,
    payoffs: &PayoffConfig,
    roots: &CharRoots,
) -> Result<UniquenessCheck> {
    if !(vs > 0.0) {
        return Err(GameError::InvalidParameter {
            name: "varsigma",
            value: vs,
            reason: "must be positive",
        });
    }
    let gap = payoffs.discount_gap(params)?;
    let t = termination_payoff_partials(lplus, pi, payoffs)?;
    let (b1, b2) = (roots.beta1, roots.beta2);
    // Differences below rounding of their operands count as zero.
    let snap = |v: f64, scale: f64| if v.abs() <= 1e-13 * scale { 0.0 } else { v };
    let slope_excess = snap(t.lambda_x - payoffs.p / gap, payoffs.p / gap);
    let level_excess = snap(t.lambda - payoffs.p * lplus / gap, payoffs.p * lplus / gap);
    let lhs_bracket = lplus * slope_excess - b1 * level_excess;
    let rhs_bracket = b2 * level_excess - lplus * slope_excess;
    let lhs = if lhs_bracket == 0.0 {
        0.0
    } else {
        b2 / vs.powf(b2 + 1.0) * lhs_bracket
    };
    let rhs = if rhs_bracket == 0.0 {
        0.0
    } else {
        b1 / vs.powf(b1 + 1.0) * rhs_bracket
    };
    Ok(UniquenessCheck {
        lhs,
        rhs,
        holds: lhs >= rhs,
        claim_i_premise: slope_excess > 0.0,
    })
}

/// Scans the grid for the first point where `L+` and `L-` meet within `tol`
/// at a belief the game actually reached, and evaluates the root
/// diagnostics there.
#[allow(clippy::too_many_arguments)]
pub fn detect_equilibrium(
    curves: &CutoffCurves,
    lminus: &LminusCurve,
    trace: &GameTrace,
    tol: f64,
    thresholds: &Thresholds,
    params: &GbmParams,
    payoffs: &PayoffConfig,
    roots: &CharRoots,
) -> Result<EquilibriumReport> {
    let max_pi = trace.max_pi();
    let gaps = curves.relative_gap();
    let reachable = |i: usize| curves.pi_grid[i] <= max_pi && gaps[i].is_finite();

    let star = (0..curves.len()).find(|&i| reachable(i) && gaps[i] <= tol);
    let min = (0..curves.len())
        .filter(|&i| reachable(i))
        .min_by(|&a, &b| gaps[a].total_cmp(&gaps[b]));
    let pi_star = star.map(|i| curves.pi_grid[i]);

    let blocked_before_convergence = match (trace.blocked_at, pi_star) {
        (None, _) => false,
        (Some(_), None) => true,
        (Some(b), Some(ps)) => {
            let reached = trace.pi.iter().position(|&p| p >= ps).map(|i| trace.t[i]);
            reached.is_none_or(|t| b <= t)
        }
    };

    let x_env = curves.x_path.iter().copied().fold(f64::NAN, f64::max);
    let eval = star.or(min);
    let mut report = EquilibriumReport {
        converged: false,
        pi_star,
        varsigma_at_pi_star: None,
        lambda_poly_sign_change: false,
        uniqueness_condition_holds: false,
        claim_i_premise: false,
        u_th: thresholds.u_th,
        l_th: thresholds.l_th,
        thresholds_ordered: thresholds.ordered(),
        blocked_before_convergence,
        min_gap: min.map(|i| gaps[i]),
        pi_at_min_gap: min.map(|i| curves.pi_grid[i]),
        eval_pi: eval.map(|i| curves.pi_grid[i]),
        max_realized_pi: max_pi,
        halt_reason: lminus.halt.as_ref().map(|e| e.to_string()),
        halt_pi: lminus.halt_index.map(|i| curves.pi_grid[i]),
        u_cond_fraction: if curves.is_empty() {
            0.0
        } else {
            curves.u_cond_ok.iter().filter(|&&ok| ok).count() as f64 / curves.len() as f64
        },
    };

    if let Some(i) = eval {
        let (pi, lp, lm) = (curves.pi_grid[i], curves.lplus[i], curves.lminus[i]);
        let vs = varsigma(lm, pi, x_env, params, payoffs)?;
        if star.is_some() {
            report.varsigma_at_pi_star = Some(vs);
        }
        report.lambda_poly_sign_change = lambda_sign_change(lp, pi, params, payoffs, roots)?;
        let check = uniqueness_condition(vs, lp, pi, params, payoffs, roots)?;
        report.uniqueness_condition_holds = check.holds;
        report.claim_i_premise = check.claim_i_premise;
    }

    let singular = matches!(lminus.halt, Some(GameError::SingularDerivative { .. }));
    report.converged = star.is_some() && !blocked_before_convergence && !singular;
    Ok(report)
}

fn stage_seed(seed: u64, t: usize) -> u64 {
    // splitmix64 finalizer over (seed, t)
    let mut z = seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Piecewise-linear path value over the grid from realized `(pi, x)` pairs,
/// flat outside the realized range. Later stages win ties in `pi`.
pub fn path_on_grid(pairs: &[(f64, f64)], grid: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0).then(a.cmp(&b)));
    for i in idx {
        let (p, x) = pairs[i];
        match sorted.last_mut() {
            Some(last) if last.0 == p => last.1 = x,
            _ => sorted.push((p, x)),
        }
    }
    grid.iter()
        .map(|&g| {
            let k = sorted.partition_point(|&(p, _)| p < g);
            if k == 0 {
                sorted[0].1
            } else if k == sorted.len() {
                sorted[k - 1].1
            } else {
                let ((p0, x0), (p1, x1)) = (sorted[k - 1], sorted[k]);
                x0 + (x1 - x0) * (g - p0) / (p1 - p0)
            }
        })
        .collect()
}

fn interpolate_curve(grid: &[f64], values: &[f64], pi: f64) -> f64 {
    if grid.is_empty() || pi < grid[0] || pi > grid[grid.len() - 1] {
        return f64::NAN;
    }
    let k = grid.partition_point(|&g| g < pi);
    if k == 0 {
        return values[0];
    }
    let (p0, p1) = (grid[k - 1], grid[k]);
    values[k - 1] + (values[k] - values[k - 1]) * (pi - p0) / (p1 - p0)
}

/// Full outcome of one game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameOutcome {
    pub trace: GameTrace,
    pub curves: CutoffCurves,
    pub lminus: LminusCurve,
    pub thresholds: Thresholds,
    pub roots: CharRoots,
    pub report: EquilibriumReport,
}

/// Plays `n_stages` stages and assembles the equilibrium report.
///
/// Each stage advances the raw variance one GBM step, updates the belief
/// from the progress probability of that step, releases the noisy value to
/// the end-user and evaluates both players' cutoffs. The first stage with
/// `ex_sy >= U` blocks, the first with `ex_eu >= L` stops; after either the
/// belief is zero and the cutoffs stay at their last values. Blocking is
/// still checked after a stop. Stopping needs a positive termination payoff.
pub fn run_game(config: &GameConfig) -> Result<GameOutcome> {
    config.validate()?;
    let params = &config.gbm;
    let payoffs = &config.payoffs;
    let roots = characteristic_roots(params, payoffs)?;
    let thresholds = Thresholds::compute(&roots, params, payoffs, config.lth_slack)?;
    let path = simulate_path(params, config.n_stages, config.dt, config.seed)?;
    let xs = path.values();

    let n = config.n_stages;
    let mut trace = GameTrace {
        t: Vec::with_capacity(n),
        ex_sy: Vec::with_capacity(n),
        ex_eu: Vec::with_capacity(n),
        pi: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        l: Vec::with_capacity(n),
        lplus: Vec::with_capacity(n),
        lminus: Vec::with_capacity(n),
        blocked_at: None,
        stopped_at: None,
    };

    let mut belief = BeliefState::new(config.pi0)?;
    let mut frozen: Option<(f64, f64, f64)> = None;
    let mut running_max = 0.0f64;
    for t in 1..=n {
        let ex_sy = xs[t];
        let pi = if frozen.is_some() {
            0.0
        } else {
            let r = progress_cdf(params, xs[t - 1], ex_sy, config.dt)?;
            belief = update_belief_with(belief, r, config.bayes_rule)?;
            belief.pi
        };
        let ex_eu = apply_noise(ex_sy, pi, &config.noise, stage_seed(config.seed, t));

        let (u, l, lplus) = match frozen {
            Some(c) => c,
            None => {
                running_max = running_max.max(ex_eu);
                if pi > 0.0 && payoff_slope(pi, payoffs) > 0.0 {
                    let l = curve_l(ex_eu, pi, params, payoffs)?;
                    let lplus = curve_lplus(running_max, pi, params, payoffs)?;
                    (constrained_best_response(l, &roots, params, payoffs)?, l, lplus)
                } else {
                    let slope = payoff_slope(pi.max(f64::MIN_POSITIVE), payoffs);
                    let scale = payoffs.discount_gap(params)? / payoffs.p;
                    (thresholds.u_th, ex_eu * slope * scale, running_max * slope * scale)
                }
            }
        };

        if trace.blocked_at.is_none() && ex_sy >= u {
            trace.blocked_at = Some(t);
        }
        let can_stop = frozen.is_none() && trace.blocked_at.is_none() && l > 0.0;
        if can_stop && trace.stopped_at.is_none() && ex_eu >= l {
            trace.stopped_at = Some(t);
        }
        if frozen.is_none() && trace.first_event().is_some() {
            frozen = Some((u, l, lplus));
            belief = BeliefState::stopped();
        }

        trace.t.push(t);
        trace.ex_sy.push(ex_sy);
        trace.ex_eu.push(ex_eu);
        trace.pi.push(pi);
        trace.u.push(u);
        trace.l.push(l);
        trace.lplus.push(lplus);
    }

    let last = trace.first_event().unwrap_or(n);
    let pairs: Vec<(f64, f64)> = (0..last)
        .filter(|&i| trace.pi[i] > 0.0)
        .map(|i| (trace.pi[i], trace.ex_eu[i]))
        .collect();
    let pairs = if pairs.is_empty() {
        vec![(config.pi0, params.x0)]
    } else {
        pairs
    };

    let grid = positive_payoff_grid(&config.pi_grid.points(), payoffs);
    if grid.len() < 2 {
        return Err(GameError::InvalidParameter {
            name: "game.pi_grid",
            value: grid.len() as f64,
            reason: "fewer than two points with positive termination payoff",
        });
    }
    let x_path = path_on_grid(&pairs, &grid);
    let (curves, lminus) = build_curves(
        &grid,
        &x_path,
        params,
        payoffs,
        &roots,
        config.lminus_init_ratio,
        config.ode_substeps,
    )?;

    let mut frozen_lminus = None;
    for i in 0..n {
        let v = match frozen_lminus {
            Some(v) => v,
            None => interpolate_curve(&curves.pi_grid, &curves.lminus, trace.pi[i]),
        };
        if frozen_lminus.is_none() && trace.first_event() == Some(trace.t[i]) {
            frozen_lminus = Some(v);
        }
        trace.lminus.push(v);
    }

    let report = detect_equilibrium(
        &curves,
        &lminus,
        &trace,
        config.convergence_tol,
        &thresholds,
        params,
        payoffs,
        &roots,
    )?;
    Ok(GameOutcome {
        trace,
        curves,
        lminus,
        thresholds,
        roots,
        report,
    })
}
