use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::agents::{AgentConfigs, Algorithm};
use crate::env::PricingEnv;
use crate::error::{Error, Result};
use crate::market::MarketModel;
use crate::metrics::WINDOW;

/// Which steps of a run are kept in memory and written out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retention {
    /// The analysis window plus every 1000th earlier step.
    #[default]
    Decimated,
    /// Every step.
    Full,
    /// Only the analysis window.
    Window,
}

/// Stride of the decimated preview before the analysis window.
pub const DECIMATION_STRIDE: u64 = 1_000;

impl Retention {
    /// Whether step `t` of a `total`-step run is kept.
    pub fn keeps(self, t: u64, total: u64) -> bool {
        let in_window = t + WINDOW as u64 >= total;
        match self {
            Retention::Full => true,
            Retention::Window => in_window,
            Retention::Decimated => in_window || t % DECIMATION_STRIDE == 0,
        }
    }

    /// Number of steps kept from a `total`-step run.
    pub fn retained_len(self, total: u64) -> u64 {
        let w = (WINDOW as u64).min(total);
        let before = total - w;
        match self {
            Retention::Full => total,
            Retention::Window => w,
            Retention::Decimated => w + before.div_ceil(DECIMATION_STRIDE),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    (0..50).collect()
}

fn default_grid() -> usize {
    15
}

fn default_zeta() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "MarketModel::logit")]
    pub market: MarketModel,
    pub algorithm: Algorithm,
    /// Run length; the algorithm's default when absent.
    #[serde(default)]
    pub steps: Option<u64>,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    /// Relative widening of the logit price interval beyond `[p_n, p_m]`.
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub retention: Retention,
    #[serde(flatten)]
    pub agents: AgentConfigs,
}

impl ExperimentConfig {
    pub fn new(market: MarketModel, algorithm: Algorithm) -> Self {
        Self {
            market,
            algorithm,
            steps: None,
            grid_size: default_grid(),
            zeta: default_zeta(),
            seeds: default_seeds(),
            retention: Retention::default(),
            agents: AgentConfigs::default(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps.unwrap_or_else(|| self.algorithm.default_steps())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Checks everything a run needs before any step is taken.
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        if self.grid_size < 1 {
            return Err(Error::Config("grid_size must be at least 1".into()));
        }
        if self.steps() < WINDOW as u64 {
            return Err(Error::Config(format!(
                "runs need at least {WINDOW} steps for the analysis window, got {}",
                self.steps()
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        self.environment()?;
        Ok(())
    }

    pub fn environment(&self) -> Result<PricingEnv> {
        PricingEnv::new(
            self.market,
            self.algorithm.action_kind(self.grid_size),
            self.zeta,
        )
    }

    /// SHA-256 of the serialized configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configs serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Applies a `dotted.key=value` override. The value is parsed as JSON when
    /// possible and taken as a string otherwise.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override `{assignment}` is not key=value")))?;
        let value: Value =
            serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self)?;
        let mut node = &mut doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::Usage(format!("`{key}` does not name a config field")))?;
            if i + 1 == parts.len() {
                if !obj.contains_key(*part) {
                    return Err(Error::Usage(format!("unknown config field `{key}`")));
                }
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj
                .get_mut(*part)
                .ok_or_else(|| Error::Usage(format!("unknown config field `{key}`")))?;
        }
        *self = serde_json::from_value(doc)
            .map_err(|e| Error::Usage(format!("override `{assignment}`: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::MarketVariant;

    #[test]
    fn minimal_json_gets_experiment_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"algorithm": "tql"}"#).unwrap();
        assert_eq!(c.market, MarketModel::logit());
        assert_eq!(c.steps(), 2_000_000);
        assert_eq!(c.grid_size, 15);
        assert_eq!(c.seeds.len(), 50);
        assert_eq!(c.agents.tql.alpha, 0.125);
        assert_eq!(c.agents.tql.gamma, 0.95);
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"algorithm": "sac", "market": {"variant": "edgeworth"}}"#)
                .unwrap();
        assert_eq!(c.steps(), 200_000);
        assert_eq!(c.market.variant(), MarketVariant::Edgeworth);
        assert_eq!(c.agents.sac.learning_rate, 3e-4);
        assert_eq!(c.agents.ppo.learning_rate, 5e-5);
        assert_eq!(c.agents.dqn.learning_rate, 1e-4);
        assert_eq!(c.agents.dqn.gamma, 0.99);
    }

    #[test]
    fn json_round_trip_and_stable_hash() {
        let mut c = ExperimentConfig::new(MarketModel::standard(), Algorithm::Dqn);
        c.steps = Some(12_345);
        let back: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        c.seeds = vec![1];
        assert_ne!(back.hash(), c.hash());
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::new(MarketModel::logit(), Algorithm::Tql);
        c.set("steps=20000").unwrap();
        c.set("tql.gamma=0").unwrap();
        c.set("market.variant=standard").unwrap();
        c.set("seeds=[3,4]").unwrap();
        c.set("retention=full").unwrap();
        assert_eq!(c.steps(), 20_000);
        assert_eq!(c.agents.tql.gamma, 0.0);
        assert_eq!(c.market.variant(), MarketVariant::Standard);
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.retention, Retention::Full);
        assert!(c.set("nonsense=1").is_err());
        assert!(c.set("tql.nonsense=1").is_err());
        assert!(c.set("steps=abc").is_err());
        assert!(c.set("steps").is_err());
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig::new(MarketModel::logit(), Algorithm::Tql);
        c.validate().unwrap();
        c.steps = Some(9_999);
        assert!(c.validate().is_err());
        c.steps = Some(10_000);
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new(
            MarketModel::Logit {
                cost: 1.0,
                quality: 2.0,
                substitutability: -1.0,
            },
            Algorithm::Sac,
        );
        assert!(c.validate().is_err());
        c.market = MarketModel::logit();
        c.grid_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn retention_counts() {
        assert_eq!(Retention::Decimated.retained_len(2_000_000), 10_000 + 1_990);
        let kept = (0..2_000_000u64)
            .filter(|&t| Retention::Decimated.keeps(t, 2_000_000))
            .count();
        assert_eq!(kept, 11_990);
        assert_eq!(Retention::Window.retained_len(200_000), 10_000);
        assert_eq!(Retention::Full.retained_len(3), 3);
        assert_eq!(Retention::Decimated.retained_len(3), 3);
        let kept = (0..25_500u64)
            .filter(|&t| Retention::Decimated.keeps(t, 25_500))
            .count() as u64;
        assert_eq!(kept, Retention::Decimated.retained_len(25_500));
    }
}
