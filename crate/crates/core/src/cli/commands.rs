//! The `fit`, `run`, `sweep` and `attack` pipelines.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{parse_document, resolve_key, set_key, RunConfig, ThresholdSource};
use super::io::{read_labeled, read_series, write_csv, write_curves, write_json, write_trace};
use super::CliError;
use crate::attack::{evaluate_mia, AttackResult};
use crate::cutoffs::Thresholds;
use crate::equilibrium::{run_game, EquilibriumReport, GameConfig, GameOutcome};
use crate::error::GameError;
use crate::gbm::fit_mle;
use crate::hjb::characteristic_roots;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Flags shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub mu: f64,
    pub sigma: f64,
    pub x0: f64,
    pub n_obs: usize,
}

pub fn cmd_fit(series: &Path, overrides: &Overrides) -> Result<FitOutput, CliError> {
    let path = read_series(series)?;
    let p = fit_mle(&path)?;
    let out = FitOutput {
        mu: p.mu,
        sigma: p.sigma,
        x0: p.x0,
        n_obs: path.len(),
    };
    if let Some(dir) = &overrides.out {
        create_dir(dir)?;
        write_json(&dir.join("fit.json"), &out)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct ErrorBody {
    kind: String,
    message: String,
}

#[derive(Debug, Clone, Serialize)]
struct RunDocument<'a> {
    version: &'static str,
    config: Option<&'a GameConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a EquilibriumReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    blocked_at: Option<Option<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stopped_at: Option<Option<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_boundary_drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorBody>,
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    wall_clock_seconds: f64,
}

/// What a finished `run` reports back.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub converged: bool,
    pub u_th: f64,
    pub l_th: f64,
    pub tpr: Option<f64>,
    pub blocked_at: Option<usize>,
    pub stopped_at: Option<usize>,
}

impl RunSummary {
    pub fn line(&self) -> String {
        let tpr = self.tpr.map_or("n/a".to_string(), |v| v.to_string());
        format!(
            "converged={} u_th={} l_th={} tpr={}",
            self.converged, self.u_th, self.l_th, tpr
        )
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn output_dir(cfg: &RunConfig, overrides: &Overrides) -> PathBuf {
    overrides
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn attack_threshold(source: &ThresholdSource, u_th: f64) -> f64 {
    match source {
        ThresholdSource::Value(v) => *v,
        ThresholdSource::Named(_) => u_th,
    }
}

fn run_attack(cfg: &RunConfig, u_th: f64, dir: &Path) -> Result<Option<AttackResult>, CliError> {
    let Some(section) = &cfg.attack else {
        return Ok(None);
    };
    let data = read_labeled(&section.data)?;
    let result = evaluate_mia(&data, attack_threshold(&section.threshold, u_th))?;
    write_json(&dir.join("attack.json"), &result)?;
    Ok(Some(result))
}

fn write_error_report(dir: &Path, config: Option<&GameConfig>, err: &GameError) -> Result<(), CliError> {
    let doc = RunDocument {
        version: VERSION,
        config,
        report: None,
        blocked_at: None,
        stopped_at: None,
        max_boundary_drift: None,
        error: Some(ErrorBody {
            kind: err.kind().to_string(),
            message: err.to_string(),
        }),
    };
    write_json(&dir.join("report.json"), &doc)
}

fn write_outcome(dir: &Path, config: &GameConfig, outcome: &GameOutcome) -> Result<(), CliError> {
    write_trace(&dir.join("trace.csv"), &outcome.trace)?;
    write_curves(&dir.join("curves.csv"), &outcome.curves)?;
    let doc = RunDocument {
        version: VERSION,
        config: Some(config),
        report: Some(&outcome.report),
        blocked_at: Some(outcome.trace.blocked_at),
        stopped_at: Some(outcome.trace.stopped_at),
        max_boundary_drift: Some(outcome.lminus.max_drift()),
        error: None,
    };
    write_json(&dir.join("report.json"), &doc)
}

/// Runs one configured game into `dir`. Model errors are written to
/// `report.json` before being returned.
fn run_into(cfg: &RunConfig, seed: Option<u64>, dir: &Path) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    create_dir(dir)?;
    let mut game = match cfg.game_config() {
        Ok(g) => g,
        Err(CliError::Model(e)) => {
            write_error_report(dir, None, &e)?;
            return Err(CliError::Model(e));
        }
        Err(e) => return Err(e),
    };
    if let Some(s) = seed {
        game.seed = s;
    }
    let outcome = match run_game(&game) {
        Ok(o) => o,
        Err(e) => {
            write_error_report(dir, Some(&game), &e)?;
            return Err(CliError::Model(e));
        }
    };
    write_outcome(dir, &game, &outcome)?;
    let attack = run_attack(cfg, outcome.thresholds.u_th, dir)?;
    write_json(
        &dir.join("timing.json"),
        &Timing {
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    Ok(RunSummary {
        out_dir: dir.to_path_buf(),
        converged: outcome.report.converged,
        u_th: outcome.thresholds.u_th,
        l_th: outcome.thresholds.l_th,
        tpr: attack.map(|a| a.tpr),
        blocked_at: outcome.trace.blocked_at,
        stopped_at: outcome.trace.stopped_at,
    })
}

pub fn cmd_run(config: &Path, overrides: &Overrides) -> Result<RunSummary, CliError> {
    let cfg = RunConfig::load(config)?;
    let dir = output_dir(&cfg, overrides);
    run_into(&cfg, overrides.seed, &dir)
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param_value: f64,
    pub outcome: Result<RunSummary, String>,
}

pub const SWEEP_HEADER: &[&str] = &[
    "param_value",
    "converged",
    "u_th",
    "l_th",
    "tpr",
    "blocked_at",
    "stopped_at",
];

/// Runs the configuration once per value of `param`; run `i` uses
/// `seed + i` and writes into `<out>/run_<i>`. Results do not depend on
/// `workers`.
pub fn cmd_sweep(
    config: &Path,
    param: &str,
    values: &[f64],
    workers: usize,
    overrides: &Overrides,
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Input("sweep needs at least one value".into()));
    }
    let key = resolve_key(param)?;
    let text = fs::read_to_string(config).map_err(|source| CliError::Io {
        path: config.to_path_buf(),
        source,
    })?;
    let doc = parse_document(&text, config)?;
    let base = RunConfig::from_table(doc.clone(), config)?;
    let base_seed = match overrides.seed {
        Some(s) => s,
        None => base.game_config()?.seed,
    };
    let dir = output_dir(&base, overrides);
    create_dir(&dir)?;

    let mut configs = Vec::with_capacity(values.len());
    for &v in values {
        let mut d = doc.clone();
        set_key(&mut d, key, v)?;
        configs.push(RunConfig::from_table(d, config)?);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Input(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<RunSummary, CliError>> = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let seed = base_seed.wrapping_add(i as u64);
                run_into(cfg, Some(seed), &dir.join(format!("run_{i:03}")))
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(values.len());
    for (&v, r) in values.iter().zip(results) {
        match r {
            Ok(s) => rows.push(SweepRow {
                param_value: v,
                outcome: Ok(s),
            }),
            Err(CliError::Model(e)) => rows.push(SweepRow {
                param_value: v,
                outcome: Err(e.kind().to_string()),
            }),
            Err(e) => return Err(e),
        }
    }

    let opt = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
    let csv_rows = rows
        .iter()
        .map(|r| match &r.outcome {
            Ok(s) => vec![
                r.param_value.to_string(),
                s.converged.to_string(),
                s.u_th.to_string(),
                s.l_th.to_string(),
                s.tpr.map_or(String::new(), |t| t.to_string()),
                opt(s.blocked_at),
                opt(s.stopped_at),
            ],
            Err(_) => vec![
                r.param_value.to_string(),
                "false".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ],
        })
        .collect();
    write_csv(&dir.join("sweep.csv"), SWEEP_HEADER, csv_rows)?;
    Ok(rows)
}

/// Attack-only evaluation. The threshold comes from the configuration, or
/// from `u_th` in a previous run's `report.json` in the output directory,
/// or (without one) from the configured payoffs directly.
pub fn cmd_attack(config: &Path, overrides: &Overrides) -> Result<AttackResult, CliError> {
    let cfg = RunConfig::load(config)?;
    let section = cfg
        .attack
        .as_ref()
        .ok_or_else(|| CliError::Input(format!("{}: no [attack] section", config.display())))?;
    let dir = output_dir(&cfg, overrides);
    let threshold = match &section.threshold {
        ThresholdSource::Value(v) => *v,
        ThresholdSource::Named(_) => match stored_u_th(&dir.join("report.json"))? {
            Some(u) => u,
            None => {
                let game = cfg.game_config()?;
                game.validate()?;
                let roots = characteristic_roots(&game.gbm, &game.payoffs)?;
                Thresholds::compute(&roots, &game.gbm, &game.payoffs, game.lth_slack)?.u_th
            }
        },
    };
    let data = read_labeled(&section.data)?;
    let result = evaluate_mia(&data, threshold)?;
    create_dir(&dir)?;
    write_json(&dir.join("attack.json"), &result)?;
    Ok(result)
}

fn stored_u_th(path: &Path) -> Result<Option<f64>, CliError> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(None);
    };
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(doc.pointer("/report/u_th").and_then(serde_json::Value::as_f64))
}
