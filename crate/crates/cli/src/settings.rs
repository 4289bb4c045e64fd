//! Flag groups shared by several subcommands, and their merge with a JSON
//! config file. Precedence: command line, then `--config`, then
//! `$VWSKILL_CONFIG_DIR/config.json`, then built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use vwskill_core::backtest::StrategyConfig;
use vwskill_core::ensemble::{EmptyPolicy, QualityLevel};
use vwskill_core::model::{MlpConfig, TrainConfig};
use vwskill_core::thresholding::ThresholdSearch;
use vwskill_core::{Objective, WindowConfig};

pub const CONFIG_DIR_ENV: &str = "VWSKILL_CONFIG_DIR";
pub const DEFAULT_RATE: f64 = 0.9;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowArgs {
    /// Half-width K of the weighting window
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchArgs {
    /// Objective: tss, wtss, hss, whss, csi, wcsi, acc or wacc
    #[arg(long)]
    pub score: Option<String>,
    /// Lower end of the threshold search interval
    #[arg(long)]
    pub a: Option<f64>,
    /// Upper end of the threshold search interval
    #[arg(long)]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectArgs {
    /// Absolute quality level: keep epochs whose validation score exceeds it
    #[arg(long, conflicts_with = "alpha_rate")]
    pub alpha: Option<f64>,
    /// Relative quality level: keep epochs above this fraction of the best
    /// validation score (default 0.9)
    #[arg(long)]
    pub alpha_rate: Option<f64>,
    /// Fall back to the best validation epoch when no epoch qualifies
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fallback: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Seed for weight initialization and batch shuffling
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden layer widths, comma separated
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// L2 coefficient per weight layer, comma separated
    #[arg(long, value_delimiter = ',')]
    pub l2: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyArgs {
    #[arg(long)]
    pub initial_shares: Option<f64>,
    #[arg(long)]
    pub sell_quantity: Option<f64>,
    #[arg(long)]
    pub rebuy_window: Option<usize>,
}

/// Flat JSON object of flag values.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    pub path: Option<PathBuf>,
    values: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_DIR_ENV)
                .map(|dir| PathBuf::from(dir).join("config.json"))
                .filter(|p| p.is_file()),
        };
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let values = match serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?
        {
            Value::Object(m) => m,
            _ => bail!("config {} must be a JSON object", path.display()),
        };
        log::debug!("loaded config {}", path.display());
        Ok(Self {
            path: Some(path),
            values,
        })
    }

    /// Fills every flag left unset on the command line from the file.
    pub fn overlay<T: Serialize + DeserializeOwned>(&self, cli: &T) -> Result<T> {
        let Value::Object(mut merged) = serde_json::to_value(cli)? else {
            unreachable!("flag groups serialize to objects")
        };
        for (key, slot) in merged.iter_mut() {
            if slot.is_null() {
                if let Some(v) = self.values.get(key) {
                    *slot = v.clone();
                }
            }
        }
        serde_json::from_value(Value::Object(merged)).context("config value has the wrong type")
    }

    pub fn select(&self, cli: &SelectArgs) -> Result<SelectArgs> {
        // a level given on the command line replaces either kind from the file
        if cli.alpha.is_some() || cli.alpha_rate.is_some() {
            let mut file = self.clone();
            file.values.remove("alpha");
            file.values.remove("alpha_rate");
            return file.overlay(cli);
        }
        let merged = self.overlay(cli)?;
        if merged.alpha.is_some() && merged.alpha_rate.is_some() {
            bail!("config sets both alpha and alpha_rate");
        }
        Ok(merged)
    }
}

impl WindowArgs {
    pub fn resolve(&self) -> Result<WindowConfig> {
        Ok(WindowConfig::new(self.k.unwrap_or(WindowConfig::DEFAULT_K))?)
    }
}

impl SearchArgs {
    pub fn objective(&self, window: WindowConfig) -> Result<Objective> {
        let name = self.score.as_deref().unwrap_or("tss");
        let objective: Objective = name.parse()?;
        Ok(objective.with_window(window))
    }

    pub fn resolve(&self, window: WindowConfig) -> Result<ThresholdSearch> {
        Ok(ThresholdSearch::new(
            self.a.unwrap_or(0.0),
            self.b.unwrap_or(1.0),
            self.objective(window)?,
        )?)
    }
}

impl SelectArgs {
    pub fn level(&self) -> Result<QualityLevel> {
        Ok(match (self.alpha, self.alpha_rate) {
            (Some(a), _) => QualityLevel::absolute(a)?,
            (None, Some(r)) => QualityLevel::relative(r)?,
            (None, None) => QualityLevel::relative(DEFAULT_RATE)?,
        })
    }

    pub fn policy(&self) -> EmptyPolicy {
        if self.fallback.unwrap_or(false) {
            EmptyPolicy::BestEpoch
        } else {
            EmptyPolicy::Fail
        }
    }
}

impl TrainArgs {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            batch_size: self.batch.unwrap_or(d.batch_size),
            shuffle_seed: self.seed().wrapping_add(1),
            ..d
        }
    }

    pub fn mlp_config(&self, inputs: usize) -> Result<MlpConfig> {
        let cfg = match &self.hidden {
            None => {
                let mut cfg = MlpConfig::deep(inputs, self.seed());
                if let Some(l2) = &self.l2 {
                    cfg.l2_per_layer = l2.clone();
                }
                cfg
            }
            Some(hidden) => {
                let l2 = self.l2.clone().unwrap_or_else(|| vec![0.0; hidden.len() + 1]);
                MlpConfig::with_hidden(inputs, hidden, l2, self.seed())
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl StrategyArgs {
    pub fn resolve(&self) -> Result<StrategyConfig> {
        let d = StrategyConfig::default();
        let cfg = StrategyConfig {
            initial_shares: self.initial_shares.unwrap_or(d.initial_shares),
            sell_quantity: self.sell_quantity.unwrap_or(d.sell_quantity),
            rebuy_window: self.rebuy_window.unwrap_or(d.rebuy_window),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(json: &str) -> ConfigFile {
        ConfigFile {
            path: None,
            values: serde_json::from_str(json).unwrap(),
        }
    }

    #[test]
    fn command_line_wins() {
        let f = file(r#"{"score":"wtss","a":0.2,"k":5}"#);
        let cli = SearchArgs {
            score: Some("hss".into()),
            ..SearchArgs::default()
        };
        let m = f.overlay(&cli).unwrap();
        assert_eq!(m.score.as_deref(), Some("hss"));
        assert_eq!(m.a, Some(0.2));
        assert_eq!(f.overlay(&WindowArgs::default()).unwrap().k, Some(5));
    }

    #[test]
    fn alpha_kinds_do_not_mix() {
        let f = file(r#"{"alpha_rate":0.8}"#);
        let cli = SelectArgs {
            alpha: Some(0.5),
            ..SelectArgs::default()
        };
        let m = f.select(&cli).unwrap();
        assert_eq!((m.alpha, m.alpha_rate), (Some(0.5), None));
        assert_eq!(f.select(&SelectArgs::default()).unwrap().alpha_rate, Some(0.8));
        assert!(file(r#"{"alpha":0.5,"alpha_rate":0.8}"#)
            .select(&SelectArgs::default())
            .is_err());
    }

    #[test]
    fn wrong_type_is_an_error() {
        assert!(file(r#"{"k":"three"}"#).overlay(&WindowArgs::default()).is_err());
    }

    #[test]
    fn defaults() {
        assert_eq!(WindowArgs::default().resolve().unwrap().k(), 3);
        let s = SearchArgs::default().resolve(WindowConfig::default()).unwrap();
        assert_eq!((s.lo(), s.hi()), (0.0, 1.0));
        assert_eq!(SelectArgs::default().level().unwrap(), QualityLevel::RelativeToMax(0.9));
        assert_eq!(SelectArgs::default().policy(), EmptyPolicy::Fail);
        assert_eq!(StrategyArgs::default().resolve().unwrap(), StrategyConfig::default());
    }
}
