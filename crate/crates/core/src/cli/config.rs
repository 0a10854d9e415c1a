//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::read_series;
use super::CliError;
use crate::beliefs::{BayesRule, NoisePolicy};
use crate::equilibrium::{GameConfig, PiGrid};
use crate::gbm::{fit_mle, GbmParams};
use crate::hjb::PayoffConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmSection {
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub x0: Option<f64>,
    /// Series CSV to estimate `mu` and `sigma` (and `x0` unless given).
    pub fit_from: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeliefsSection {
    pub standard_bayes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameSection {
    pub n_stages: usize,
    pub dt: f64,
    pub pi0: f64,
    pub seed: u64,
    pub convergence_tol: f64,
    pub pi_grid: PiGrid,
    pub lminus_init_ratio: f64,
    pub lth_slack: f64,
    pub ode_substeps: usize,
}

impl Default for GameSection {
    fn default() -> Self {
        let g = GameConfig::default();
        Self {
            n_stages: g.n_stages,
            dt: g.dt,
            pi0: g.pi0,
            seed: g.seed,
            convergence_tol: g.convergence_tol,
            pi_grid: g.pi_grid,
            lminus_init_ratio: g.lminus_init_ratio,
            lth_slack: g.lth_slack,
            ode_substeps: g.ode_substeps,
        }
    }
}

/// Where the attack threshold comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdSource {
    Value(f64),
    /// Only `"u_th"` is accepted.
    Named(String),
}

impl Default for ThresholdSource {
    fn default() -> Self {
        ThresholdSource::Named("u_th".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub data: PathBuf,
    #[serde(default)]
    pub threshold: ThresholdSource,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gbm: GbmSection,
    pub payoffs: PayoffConfig,
    pub noise: NoisePolicy,
    pub beliefs: BeliefsSection,
    pub game: GameSection,
    pub attack: Option<AttackSection>,
    pub output: OutputSection,
}

/// Numeric keys a sweep may vary, as dotted paths.
pub const SWEEPABLE_KEYS: &[&str] = &[
    "gbm.mu",
    "gbm.sigma",
    "gbm.x0",
    "payoffs.r",
    "payoffs.P",
    "payoffs.M_m",
    "payoffs.d_prime",
    "payoffs.d",
    "payoffs.k",
    "payoffs.r_e",
    "payoffs.c_d",
    "payoffs.b",
    "noise.eta",
    "game.n_stages",
    "game.dt",
    "game.pi0",
    "game.seed",
    "game.convergence_tol",
    "game.pi_grid.start",
    "game.pi_grid.stop",
    "game.pi_grid.step",
    "game.lminus_init_ratio",
    "game.lth_slack",
    "game.ode_substeps",
    "attack.threshold",
];

const INTEGER_KEYS: &[&str] = &["game.n_stages", "game.seed", "game.ode_substeps"];

/// Resolves a dotted path or an unambiguous bare key name.
pub fn resolve_key(key: &str) -> Result<&'static str, CliError> {
    if let Some(k) = SWEEPABLE_KEYS.iter().find(|k| **k == key) {
        return Ok(k);
    }
    let hits: Vec<&'static str> = SWEEPABLE_KEYS
        .iter()
        .copied()
        .filter(|k| k.rsplit('.').next() == Some(key))
        .collect();
    match hits.as_slice() {
        [one] => Ok(one),
        [] => Err(CliError::Input(format!("unknown config key '{key}'"))),
        _ => Err(CliError::Input(format!(
            "ambiguous config key '{key}': one of {}",
            hits.join(", ")
        ))),
    }
}

/// Sets `key` (a resolved dotted path) to `value` inside a parsed document.
pub fn set_key(doc: &mut toml::Table, key: &str, value: f64) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Input(format!("config key '{part}' is not a section")))?;
    }
    let leaf = parts[parts.len() - 1];
    let v = if INTEGER_KEYS.contains(&key) {
        if value.fract() != 0.0 || value < 0.0 {
            return Err(CliError::Input(format!(
                "'{key}' needs a non-negative integer, got {value}"
            )));
        }
        toml::Value::Integer(value as i64)
    } else {
        toml::Value::Float(value)
    };
    table.insert(leaf.to_string(), v);
    Ok(())
}

pub fn parse_document(text: &str, origin: &Path) -> Result<toml::Table, CliError> {
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Input(format!("{}: {e}", origin.display())))
}

impl RunConfig {
    pub fn from_table(doc: toml::Table, origin: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Input(format!("{}: {e}", origin.display())))?;
        let base = origin.parent().unwrap_or(Path::new("."));
        if let Some(p) = cfg.gbm.fit_from.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(a) = cfg.attack.as_mut() {
            if a.data.is_relative() {
                a.data = base.join(&a.data);
            }
        }
        if let Some(ThresholdSource::Named(name)) = cfg.attack.as_ref().map(|a| &a.threshold) {
            if name != "u_th" {
                return Err(CliError::Input(format!(
                    "attack.threshold must be a number or \"u_th\", got \"{name}\""
                )));
            }
        }
        if cfg.gbm.fit_from.is_some() && (cfg.gbm.mu.is_some() || cfg.gbm.sigma.is_some()) {
            return Err(CliError::Input(
                "gbm.fit_from cannot be combined with gbm.mu or gbm.sigma".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_table(parse_document(&text, path)?, path)
    }

    /// Builds the game configuration, fitting the GBM if requested.
    pub fn game_config(&self) -> Result<GameConfig, CliError> {
        let base = GameConfig::default();
        let gbm = match &self.gbm.fit_from {
            Some(path) => {
                let fitted = fit_mle(&read_series(path)?)?;
                GbmParams {
                    x0: self.gbm.x0.unwrap_or(fitted.x0),
                    ..fitted
                }
            }
            None => GbmParams {
                mu: self.gbm.mu.unwrap_or(base.gbm.mu),
                sigma: self.gbm.sigma.unwrap_or(base.gbm.sigma),
                x0: self.gbm.x0.unwrap_or(base.gbm.x0),
            },
        };
        let g = &self.game;
        let cfg = GameConfig {
            gbm,
            payoffs: self.payoffs,
            noise: self.noise,
            bayes_rule: if self.beliefs.standard_bayes {
                BayesRule::Standard
            } else {
                BayesRule::Verbatim
            },
            n_stages: g.n_stages,
            dt: g.dt,
            pi0: g.pi0,
            seed: g.seed,
            convergence_tol: g.convergence_tol,
            pi_grid: g.pi_grid,
            lminus_init_ratio: g.lminus_init_ratio,
            lth_slack: g.lth_slack,
            ode_substeps: g.ode_substeps,
        };
        Ok(cfg)
    }
}
