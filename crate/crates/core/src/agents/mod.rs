//! Pricing agents behind a common act/observe interface.
//!
//! Every agent owns its learned state and draws randomness only from the
//! generator handed to `act`/`observe`, so two agents built from identical
//! configurations never share anything.

mod dqn;
mod fixed;
mod ppo;
mod replay;
mod rollout;
mod sac;
mod schedule;
mod tql;

pub use dqn::{Dqn, DqnConfig};
pub use fixed::FixedAction;
pub use ppo::{clipped_surrogate, PolicyKind, Ppo, PpoConfig, PpoStats};
pub use replay::{Experience, ReplayBuffer};
pub use rollout::{compute_gae, normalize, RolloutBuffer};
pub use sac::{Sac, SacConfig, SacLosses};
pub use schedule::EpsilonSchedule;
pub use tql::{tql_act, tql_update, QTable, Tql, TqlConfig};

use std::fmt;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{Action, ActionKind, ActionSpace, EnvState};
use crate::error::{Error, Result};
use crate::nn::ParameterSet;

/// Random stream owned by one agent.
pub type AgentRng = ChaCha8Rng;

/// Precision the deep agents train in.
pub type Scalar = f32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Tql,
    Dqn,
    Ppod,
    Ppoc,
    Sac,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Tql,
        Algorithm::Dqn,
        Algorithm::Ppoc,
        Algorithm::Ppod,
        Algorithm::Sac,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Tql => "TQL",
            Algorithm::Dqn => "DQN",
            Algorithm::Ppod => "PPO-D",
            Algorithm::Ppoc => "PPO-C",
            Algorithm::Sac => "SAC",
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, Algorithm::Tql | Algorithm::Dqn | Algorithm::Ppod)
    }

    /// The action space this algorithm plays on, `m` grid points when discrete.
    pub fn action_kind(self, m: usize) -> ActionKind {
        if self.is_discrete() {
            ActionKind::Discrete { m }
        } else {
            ActionKind::Continuous
        }
    }

    /// Run length used in the experiments when none is configured.
    pub fn default_steps(self) -> u64 {
        match self {
            Algorithm::Tql => 2_000_000,
            _ => 200_000,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "tql" | "qlearning" => Ok(Algorithm::Tql),
            "dqn" => Ok(Algorithm::Dqn),
            "ppod" => Ok(Algorithm::Ppod),
            "ppoc" => Ok(Algorithm::Ppoc),
            "sac" => Ok(Algorithm::Sac),
            other => Err(Error::Usage(format!(
                "unknown algorithm `{other}` (expected tql, dqn, ppod, ppoc or sac)"
            ))),
        }
    }
}

/// What one agent experienced in one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub t: u64,
    pub state: EnvState,
    pub action: Action,
    pub price: f64,
    pub reward: f64,
    pub next_state: EnvState,
}

/// Learned state exported for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Checkpoint {
    Stateless,
    QTable(QTable),
    Networks(Vec<(String, ParameterSet<Scalar>)>),
}

impl Checkpoint {
    /// SHA-256 over the JSON serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("checkpoints serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Writes `qtable.csv` or one `<name>.bin` parameter blob per network into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        match self {
            Checkpoint::Stateless => Ok(()),
            Checkpoint::QTable(q) => q.save_csv(&dir.join("qtable.csv")),
            Checkpoint::Networks(nets) => nets
                .iter()
                .try_for_each(|(name, params)| params.save(&dir.join(format!("{name}.bin")))),
        }
    }
}

pub trait Agent: Send {
    fn algorithm_label(&self) -> &str;

    /// Chooses this period's action given both previous prices.
    fn act(&mut self, state: &EnvState, t: u64, rng: &mut AgentRng) -> Result<Action>;

    /// Feeds back the outcome of the last `act`.
    fn observe(&mut self, transition: &Transition, rng: &mut AgentRng) -> Result<()>;

    fn checkpoint(&self) -> Checkpoint;
}

/// Hyperparameters of every algorithm; only the section for the algorithm
/// being run is used.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfigs {
    pub tql: TqlConfig,
    pub dqn: DqnConfig,
    pub ppo: PpoConfig,
    pub sac: SacConfig,
}

impl AgentConfigs {
    /// `(learning rate, discount)` for `algorithm`.
    pub fn alpha_gamma(&self, algorithm: Algorithm) -> (f64, f64) {
        match algorithm {
            Algorithm::Tql => (self.tql.alpha, self.tql.gamma),
            Algorithm::Dqn => (self.dqn.learning_rate, self.dqn.gamma),
            Algorithm::Ppod | Algorithm::Ppoc => (self.ppo.learning_rate, self.ppo.gamma),
            Algorithm::Sac => (self.sac.learning_rate, self.sac.gamma),
        }
    }

    pub fn set_alpha_gamma(&mut self, algorithm: Algorithm, alpha: f64, gamma: f64) {
        match algorithm {
            Algorithm::Tql => (self.tql.alpha, self.tql.gamma) = (alpha, gamma),
            Algorithm::Dqn => (self.dqn.learning_rate, self.dqn.gamma) = (alpha, gamma),
            Algorithm::Ppod | Algorithm::Ppoc => {
                (self.ppo.learning_rate, self.ppo.gamma) = (alpha, gamma)
            }
            Algorithm::Sac => (self.sac.learning_rate, self.sac.gamma) = (alpha, gamma),
        }
    }
}

/// Builds a fresh learner. `horizon` is the run length, used for schedules
/// that decay over the run.
pub fn build_agent(
    algorithm: Algorithm,
    configs: &AgentConfigs,
    space: &ActionSpace,
    horizon: u64,
    rng: &mut AgentRng,
) -> Result<Box<dyn Agent>> {
    if algorithm.is_discrete() != space.is_discrete() {
        return Err(Error::Config(format!(
            "{algorithm} needs a {} action space",
            if algorithm.is_discrete() {
                "discrete"
            } else {
                "continuous"
            }
        )));
    }
    Ok(match algorithm {
        Algorithm::Tql => Box::new(Tql::new(configs.tql.clone(), space.clone(), horizon)?),
        Algorithm::Dqn => Box::new(Dqn::new(configs.dqn.clone(), space.clone(), horizon, rng)?),
        Algorithm::Ppod | Algorithm::Ppoc => {
            Box::new(Ppo::new(configs.ppo.clone(), space.clone(), rng)?)
        }
        Algorithm::Sac => Box::new(Sac::new(configs.sac.clone(), space.clone(), rng)?),
    })
}

/// Network input: both previous prices mapped affinely onto `[0, 1]`.
pub fn encode_state(space: &ActionSpace, state: &EnvState) -> [Scalar; 2] {
    [
        space.normalize(state.prev_prices[0]) as Scalar,
        space.normalize(state.prev_prices[1]) as Scalar,
    ]
}

pub(crate) fn non_finite(what: &str, step: u64) -> Error {
    Error::NonFinite {
        what: what.to_string(),
        step,
    }
}
