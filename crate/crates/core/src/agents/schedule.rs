use serde::{Deserialize, Serialize};

/// `epsilon_t = exp(-decay * t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub decay: f64,
}

impl EpsilonSchedule {
    pub fn new(decay: f64) -> Self {
        Self { decay }
    }

    /// Decay chosen so that epsilon reaches 0.01 halfway through `horizon` steps.
    pub fn for_horizon(horizon: u64) -> Self {
        Self::new(100f64.ln() * 2.0 / horizon.max(1) as f64)
    }

    pub fn epsilon(&self, t: u64) -> f64 {
        (-self.decay * t as f64).exp().max(f64::MIN_POSITIVE)
    }
}
