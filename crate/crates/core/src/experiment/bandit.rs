use serde::{Deserialize, Serialize};

use super::run::{stream_rng, Stream};
use crate::agents::{build_agent, AgentConfigs, Algorithm, Transition};
use crate::env::{Action, ActionSpace, EnvState};
use crate::error::{Error, Result};

/// Default number of interaction steps.
pub const BANDIT_STEPS: u64 = 20_000;
/// Trailing steps over which the selection rate is measured.
pub const BANDIT_EVAL: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditOutcome {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Share of the last `BANDIT_EVAL` steps that picked the rewarded action.
    pub selection_rate: f64,
}

/// A single-state task with one rewarded action. Discrete learners choose
/// between two prices and are paid 1 for the first; continuous learners are
/// paid 1 for any price in the upper half of `[0, 1]`.
pub fn bandit_run(
    algorithm: Algorithm,
    configs: &AgentConfigs,
    seed: u64,
    steps: u64,
) -> Result<BanditOutcome> {
    if algorithm == Algorithm::Tql {
        return Err(Error::Config(
            "the bandit task is for the network-based learners".into(),
        ));
    }
    let space = if algorithm.is_discrete() {
        ActionSpace::discrete(0.0, 1.0, 2)?
    } else {
        ActionSpace::continuous(0.0, 1.0)?
    };
    let mut agent = build_agent(
        algorithm,
        configs,
        &space,
        steps,
        &mut stream_rng(seed, Stream::Agent0Init),
    )?;
    let mut rng = stream_rng(seed, Stream::Agent0);
    let state = EnvState {
        prev_prices: [0.5, 0.5],
    };
    let mut hits = 0u64;
    for t in 0..steps {
        let action = agent.act(&state, t, &mut rng)?;
        let (price, good) = match action {
            Action::Index(j) => (j as f64, j == 0),
            Action::Price(p) => (p, p > 0.5),
        };
        let tr = Transition {
            t,
            state,
            action,
            price,
            reward: if good { 1.0 } else { 0.0 },
            next_state: state,
        };
        agent.observe(&tr, &mut rng)?;
        if t + BANDIT_EVAL >= steps && good {
            hits += 1;
        }
    }
    Ok(BanditOutcome {
        algorithm,
        seed,
        selection_rate: hits as f64 / BANDIT_EVAL.min(steps) as f64,
    })
}
