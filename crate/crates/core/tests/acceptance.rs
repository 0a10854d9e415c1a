//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use explgame_core::attack::{evaluate_mia, LabeledVariances};
use explgame_core::cutoffs::{
    best_response_map, best_response_u, constants_aplus, curve_lminus, curve_lplus, system_threshold,
    termination_payoff,
};
use explgame_core::equilibrium::{lambda_coefficients, lambda_polynomial, path_on_grid, run_game, GameConfig, PiGrid};
use explgame_core::gbm::{fit_mle, simulate_path, transition_density, GbmParams};
use explgame_core::hjb::{characteristic_roots, CharRoots, PayoffConfig};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn random_market(rng: &mut ChaCha8Rng) -> (GbmParams, PayoffConfig) {
    let mu: f64 = rng.random_range(-0.3..0.3);
    let sigma = rng.random_range(0.05..1.5);
    let r = mu.max(0.0) + rng.random_range(0.01..0.5);
    let params = GbmParams::new(mu, sigma, 0.01).unwrap();
    let r_e = rng.random_range(0.1..2.0);
    let payoffs = PayoffConfig {
        r,
        p: rng.random_range(0.2..3.0),
        m_m: rng.random_range(0.5..3.0),
        d_prime: rng.random_range(0.5..3.0),
        d: rng.random_range(0.1..3.0),
        k: r_e + rng.random_range(0.1..3.0),
        r_e,
        c_d: rng.random_range(0.1..3.0),
        b: rng.random_range(0.05..2.0),
    };
    (params, payoffs)
}

fn roots_and_residuals() -> Outcome {
    let params = GbmParams::new(0.0, 1.0, 1.0).unwrap();
    let payoffs = PayoffConfig {
        r: 1.0,
        ..PayoffConfig::default()
    };
    let roots = characteristic_roots(&params, &payoffs).unwrap();
    let exact = (roots.beta1 - 2.0).abs() <= 1e-12 && (roots.beta2 + 1.0).abs() <= 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut bracketed = true;
    for _ in 0..1000 {
        let (params, payoffs) = random_market(&mut rng);
        let roots = characteristic_roots(&params, &payoffs).unwrap();
        bracketed &= roots.beta1 > 1.0 && roots.beta2 < 0.0;
        for beta in [roots.beta1, roots.beta2] {
            // residual relative to the size of the individual terms
            let s2 = params.sigma * params.sigma;
            let scale = 0.5 * s2 * beta.abs() * (beta - 1.0).abs() + (params.mu * beta).abs() + payoffs.r;
            worst = worst.max(CharRoots::quadratic(beta, &params, payoffs.r).abs() / scale.max(1.0));
        }
    }
    outcome(
        exact && bracketed && worst <= 1e-12,
        format!(
            "roots(0,1,1) = ({}, {}); 1000 random: bracketed={bracketed}, max residual {worst:.2e}",
            roots.beta1, roots.beta2
        ),
    )
}

/// Solves value matching and smooth pasting at the system's threshold by
/// bisection in `u` after eliminating `B1` through smooth pasting.
fn u_th_oracle(roots: &CharRoots, params: &GbmParams, payoffs: &PayoffConfig) -> f64 {
    let gap = payoffs.r - params.mu;
    let b1 = roots.beta1;
    let vm = |u: f64| {
        // logs keep B1 u^beta1 finite for steep roots
        let ln_b1 = ((payoffs.k - payoffs.r_e) / (gap * b1)).ln() - (b1 - 1.0) * u.ln();
        (ln_b1 + b1 * u.ln()).exp() + payoffs.r_e * u / gap - payoffs.k * u / gap + payoffs.c_d
    };
    let (mut lo, mut hi) = (1e-12, 1e6);
    let flo = vm(lo);
    for _ in 0..400 {
        let m = 0.5 * (lo + hi);
        if (vm(m) > 0.0) == (flo > 0.0) {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

fn system_threshold_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut linear = true;
    for _ in 0..100 {
        let (params, mut payoffs) = random_market(&mut rng);
        let roots = characteristic_roots(&params, &payoffs).unwrap();
        let u = system_threshold(&roots, &params, &payoffs).unwrap();
        worst = worst.max(rel(u, u_th_oracle(&roots, &params, &payoffs)));
        payoffs.c_d *= 2.0;
        linear &= system_threshold(&roots, &params, &payoffs).unwrap() == 2.0 * u;
    }
    outcome(
        worst <= 1e-9 && linear,
        format!("max relative error vs 2-equation solve {worst:.2e}; exact linearity in c_d: {linear}"),
    )
}

fn aplus_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (params, payoffs) = random_market(&mut rng);
        let roots = characteristic_roots(&params, &payoffs).unwrap();
        let pi = rng.random_range(0.4..1.0);
        let lplus = rng.random_range(1e-3..1.0);
        let gap = payoffs.r - params.mu;
        let (lam, dlam) = termination_payoff(lplus, pi, &payoffs).unwrap();
        // unknowns a_i = A_i L^beta_i
        let m = [[1.0, 1.0], [roots.beta1 / lplus, roots.beta2 / lplus]];
        let rhs = [lam - payoffs.p * lplus / gap, dlam - payoffs.p / gap];
        let (m, rhs) = if m[1][0].abs() > m[0][0].abs() {
            ([m[1], m[0]], [rhs[1], rhs[0]])
        } else {
            (m, rhs)
        };
        let f = m[1][0] / m[0][0];
        let a2 = (rhs[1] - f * rhs[0]) / (m[1][1] - f * m[0][1]);
        let a1 = (rhs[0] - m[0][1] * a2) / m[0][0];
        let (o1, o2) = (a1 / lplus.powf(roots.beta1), a2 / lplus.powf(roots.beta2));
        let c = constants_aplus(lplus, pi, &params, &payoffs, &roots).unwrap();
        worst = worst.max(rel(c.c1, o1)).max(rel(c.c2, o2));
    }
    outcome(worst <= 1e-9, format!("max relative error vs 2x2 solve {worst:.2e}"))
}

fn baseline() -> GameConfig {
    GameConfig::default()
}

fn best_response_oracle() -> Outcome {
    let cfg = baseline();
    let out = run_game(&cfg).unwrap();
    let (params, payoffs, roots) = (&cfg.gbm, &cfg.payoffs, &out.roots);
    let gap = payoffs.r - params.mu;
    let u_th = out.thresholds.u_th;

    // no interior fixed point exists once L exceeds g(1)
    let g1 = best_response_map(1.0, roots, gap, payoffs);
    let mut worst_res = 0.0f64;
    let mut above = true;
    let mut corners_ok = true;
    let (mut interior, mut corners) = (0usize, 0usize);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ls: Vec<f64> = out.curves.l.clone();
    ls.extend((0..200).map(|_| rng.random_range(1e-6..u_th)));
    for &l in &ls {
        match best_response_u(l, roots, params, payoffs) {
            Ok(u) => {
                interior += 1;
                worst_res = worst_res.max((u - best_response_map(l / u, roots, gap, payoffs)).abs() / (1.0 + u));
                above &= u >= l;
            }
            Err(_) => {
                corners += 1;
                let h = |v: f64| v - best_response_map(l / v, roots, gap, payoffs);
                let sign = h(l) > 0.0;
                corners_ok &= l > g1 && (1..=10_000).all(|i| (h(l + (10.0 * u_th - l) * i as f64 / 1e4) > 0.0) == sign);
            }
        }
    }

    let l = out.curves.l.iter().copied().find(|&l| l < g1).unwrap_or(0.5 * g1);
    let u = best_response_u(l, roots, params, payoffs).unwrap();
    let (lo, hi) = (l, 10.0 * u_th);
    let n = 1_000_000;
    let mut best = (lo, f64::INFINITY);
    for i in 0..=n {
        let v = lo + (hi - lo) * i as f64 / n as f64;
        let r = (v - best_response_map(l / v, roots, gap, payoffs)).abs();
        if r < best.1 {
            best = (v, r);
        }
    }
    let scan_err = (u - best.0).abs();
    outcome(
        worst_res <= 1e-10 && above && corners_ok && scan_err <= 1e-6,
        format!(
            "max residual {worst_res:.2e} over {interior} interior cutoffs; U >= L: {above}; \
             {corners} cutoffs above g(1) = {g1:.4e} without a root: {corners_ok}; |U - scan| = {scan_err:.2e} at L = {l:.4e}"
        ),
    )
}

fn gbm_statistics() -> Outcome {
    let params = GbmParams::new(0.05, 0.3, 1.0).unwrap();
    let n = 100_000;
    let terminal: Vec<f64> = (0..n)
        .map(|s| *simulate_path(&params, 1, 1.0, s).unwrap().values().last().unwrap())
        .collect();
    let mean = terminal.iter().sum::<f64>() / n as f64;
    let var = terminal.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let expected = 0.05f64.exp();
    let z = (mean - expected) / se;

    // integrate in log space with composite Simpson
    let (m, s) = (params.log_drift(), params.sigma);
    let (a, b, k) = (m - 12.0 * s, m + 12.0 * s, 20_000);
    let h = (b - a) / k as f64;
    let f = |u: f64| transition_density(&params, 1.0, u.exp(), 1.0).unwrap() * u.exp();
    let mut total = f(a) + f(b);
    for i in 1..k {
        total += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    let mass = total * h / 3.0;
    outcome(
        z.abs() <= 3.0 && (mass - 1.0).abs() <= 1e-6,
        format!("terminal mean {mean:.5} vs {expected:.5} ({z:+.2} SE); density mass {mass:.9}"),
    )
}

fn mle_recovery() -> Outcome {
    let truth = GbmParams::new(0.05, 0.2, 1.0).unwrap();
    let path = simulate_path(&truth, 10_000, 1.0, 6).unwrap();
    let fit = fit_mle(&path).unwrap();
    outcome(
        (fit.mu - 0.05).abs() <= 0.05 && (fit.sigma - 0.2).abs() <= 0.02,
        format!("mu = {:.5}, sigma = {:.5}", fit.mu, fit.sigma),
    )
}

fn lminus_convergence() -> Outcome {
    let cfg = baseline();
    let out = run_game(&cfg).unwrap();
    let tr = &out.trace;
    let last = tr.first_event().unwrap_or(tr.len());
    let pairs: Vec<(f64, f64)> = (0..last)
        .filter(|&i| tr.pi[i] > 0.0)
        .map(|i| (tr.pi[i], tr.ex_eu[i]))
        .collect();
    let (a, b) = (out.curves.pi_grid[0], *out.curves.pi_grid.last().unwrap());
    let base_n = out.curves.len();

    let mut terminals = Vec::new();
    for level in 0..4 {
        let n = (base_n - 1) * (1 << level) + 1;
        let grid: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
        let x = path_on_grid(&pairs, &grid);
        let x_env = x.iter().copied().fold(f64::NAN, f64::max);
        let init = cfg.lminus_init_ratio * curve_lplus(x_env, a, &cfg.gbm, &cfg.payoffs).unwrap();
        let curve = curve_lminus(&grid, &x, &cfg.gbm, &cfg.payoffs, &out.roots, init, cfg.ode_substeps).unwrap();
        terminals.push(curve.terminal().unwrap());
    }
    let orders: Vec<f64> = terminals
        .windows(3)
        .map(|w| ((w[0] - w[1]).abs() / (w[1] - w[2]).abs()).log2())
        .collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let drift = out.lminus.max_drift();
    let complete = out.lminus.halt.is_none();
    outcome(
        min_order >= 3.5 && drift <= 1e-4 && complete,
        format!(
            "orders {:?}; max boundary drift {drift:.2e} over {base_n} points; completed: {complete}",
            orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>()
        ),
    )
}

fn lambda_regimes() -> Outcome {
    let cfg = baseline();
    let roots = characteristic_roots(&cfg.gbm, &cfg.payoffs).unwrap();
    let (lplus, pi) = (0.01, 0.05);
    let (a, _) = lambda_coefficients(lplus, pi, &cfg.gbm, &cfg.payoffs, &roots).unwrap();
    let vals: Vec<f64> = [1e-2, 1e-4, 1e-6]
        .iter()
        .map(|&vs| lambda_polynomial(vs, lplus, pi, &cfg.gbm, &cfg.payoffs, &roots).unwrap())
        .collect();
    let case1 = a < 0.0 && vals.windows(2).all(|w| w[1] < w[0]) && vals[2] < -1e10;

    let mut strong = baseline();
    strong.gbm.sigma = 1.0;
    strong.payoffs.b = 0.05;
    strong.pi_grid = PiGrid {
        start: 0.7,
        stop: 0.99,
        step: 0.01,
    };
    strong.lminus_init_ratio = 0.9999;
    let out = run_game(&strong).unwrap();
    let (case2, lam1) = match out.report.pi_star {
        Some(ps) if out.report.converged => {
            let i = out.curves.pi_grid.iter().position(|&p| p == ps).unwrap();
            let v = lambda_polynomial(1.0, out.curves.lplus[i], ps, &strong.gbm, &strong.payoffs, &out.roots).unwrap();
            (v > 0.0, v)
        }
        _ => (false, f64::NAN),
    };
    outcome(
        case1 && case2,
        format!(
            "case 1 (pi = 0.05): A = {a:.3e}, Lambda(1e-6) = {:.3e}; case 2: converged at pi* = {:?}, Lambda(1) = {lam1:.3e}",
            vals[2], out.report.pi_star
        ),
    )
}

fn volatility_regime() -> Outcome {
    let sigmas = [0.05, 0.2, 0.5, 1.0];
    let mut fractions = Vec::new();
    let mut gaps = Vec::new();
    for &sigma in &sigmas {
        let mut cfg = baseline();
        cfg.gbm.sigma = sigma;
        let (mut conv, mut gap) = (0usize, 0.0);
        for seed in 0..50 {
            cfg.seed = seed;
            let out = run_game(&cfg).unwrap();
            conv += out.report.converged as usize;
            gap += out.report.min_gap.unwrap_or(1.0);
        }
        fractions.push(conv as f64 / 50.0);
        gaps.push(gap / 50.0);
    }
    let monotone = fractions.windows(2).all(|w| w[1] <= w[0]);
    let majority_fail = fractions[3] < 0.5;
    outcome(
        monotone && majority_fail,
        format!(
            "converged fractions {fractions:?}; mean min gap {:?}",
            gaps.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn attack_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mismatches = 0;
    let mut monotone = true;
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(1e-4..2.0)).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        labels[0] = true;
        let data = LabeledVariances::new(values.clone(), labels.clone()).unwrap();
        let t = rng.random_range(1e-3..2.0);
        let r = evaluate_mia(&data, t).unwrap();
        let mut tp = 0;
        let mut fn_ = 0;
        for i in 0..n {
            if labels[i] {
                if values[i] <= t {
                    tp += 1;
                } else {
                    fn_ += 1;
                }
            }
        }
        if (r.tp, r.fn_) != (tp, fn_) || r.tpr != tp as f64 / (tp + fn_) as f64 {
            mismatches += 1;
        }
        let t2 = t + rng.random_range(0.0..1.0);
        monotone &= evaluate_mia(&data, t2).unwrap().tpr >= r.tpr;
    }
    outcome(
        mismatches == 0 && monotone,
        format!("{mismatches} mismatches over 1000 datasets; monotone in threshold: {monotone}"),
    )
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn explgame(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_explgame"))
        .args(args)
        .output()
        .unwrap()
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("baseline.toml");
    let text = fs::read_to_string(repo_root().join("configs/baseline.toml")).unwrap();
    let data = repo_root().join("data/labeled_variances.csv");
    let text = text.replace("../data/labeled_variances.csv", data.to_str().unwrap());
    fs::write(&cfg, text).unwrap();
    let cfg_s = cfg.to_str().unwrap();

    let runs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("run{i}"))).collect();
    let mut ok = true;
    for r in &runs {
        ok &= explgame(&["run", cfg_s, "--seed", "7", "--quiet", "--out", r.to_str().unwrap()])
            .status
            .success();
    }
    let same = |a: &Path, b: &Path, f: &str| {
        fs::read(a.join(f))
            .ok()
            .is_some_and(|x| Some(x) == fs::read(b.join(f)).ok())
    };
    let runs_equal = same(&runs[0], &runs[1], "trace.csv") && same(&runs[0], &runs[1], "report.json");

    let sweeps: Vec<PathBuf> = [1, 4].iter().map(|w| dir.path().join(format!("sweep{w}"))).collect();
    for (w, s) in [1, 4].iter().zip(&sweeps) {
        let w = w.to_string();
        ok &= explgame(&[
            "sweep",
            cfg_s,
            "--param",
            "sigma",
            "--values",
            "0.05,0.2,0.5,1.0",
            "--workers",
            &w,
            "--quiet",
            "--out",
            s.to_str().unwrap(),
        ])
        .status
        .success();
    }
    let mut sweeps_equal = same(&sweeps[0], &sweeps[1], "sweep.csv");
    for i in 0..4 {
        let (a, b) = (
            sweeps[0].join(format!("run_{i:03}")),
            sweeps[1].join(format!("run_{i:03}")),
        );
        sweeps_equal &= same(&a, &b, "trace.csv") && same(&a, &b, "report.json");
    }
    outcome(
        ok && runs_equal && sweeps_equal,
        format!(
            "commands succeeded: {ok}; repeat run identical: {runs_equal}; 1 vs 4 workers identical: {sweeps_equal}"
        ),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Duration, Check); 11] = [
        ("characteristic roots", Duration::from_secs(1), roots_and_residuals),
        ("system threshold", Duration::from_secs(1), system_threshold_oracle),
        ("envelope constants", Duration::from_secs(1), aplus_oracle),
        ("best response", Duration::from_secs(10), best_response_oracle),
        ("gbm statistics", Duration::from_secs(30), gbm_statistics),
        ("mle recovery", Duration::from_secs(5), mle_recovery),
        ("lower envelope ode", Duration::from_secs(5), lminus_convergence),
        ("lambda regimes", Duration::from_secs(1), lambda_regimes),
        ("volatility regime", Duration::from_secs(120), volatility_regime),
        ("attack oracle", Duration::from_secs(5), attack_oracle),
        (
            "end-to-end determinism",
            Duration::from_secs(10),
            end_to_end_determinism,
        ),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let ok = result.ok && elapsed <= *limit;
        failed += !ok as usize;
        println!(
            "[{}] criterion {:>2} {name}: {} ({:.2}s / {}s limit)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
