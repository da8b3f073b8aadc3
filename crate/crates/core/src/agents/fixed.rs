use super::{Agent, AgentRng, Checkpoint, Transition};
use crate::env::{Action, EnvState};
use crate::error::Result;

/// Plays the same action every period and learns nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedAction {
    pub action: Action,
}

impl FixedAction {
    pub fn new(action: Action) -> Self {
        Self { action }
    }
}

impl Agent for FixedAction {
    fn algorithm_label(&self) -> &str {
        "fixed"
    }

    fn act(&mut self, _state: &EnvState, _t: u64, _rng: &mut AgentRng) -> Result<Action> {
        Ok(self.action)
    }

    fn observe(&mut self, _tr: &Transition, _rng: &mut AgentRng) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint::Stateless
    }
}
