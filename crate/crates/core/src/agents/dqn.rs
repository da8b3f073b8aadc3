use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    encode_state, non_finite, Agent, AgentRng, Checkpoint, EpsilonSchedule, Experience,
    ReplayBuffer, Scalar, Transition,
};
use crate::env::{Action, ActionSpace, EnvState};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Mlp, NetworkSpec, OutputHead, DEFAULT_HIDDEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Steps between hard copies of the online network into the target.
    pub target_sync: u64,
    /// Steps collected before the first gradient update.
    pub warmup: u64,
    pub epsilon_decay: Option<f64>,
    pub hidden: Vec<usize>,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            gamma: 0.99,
            buffer_capacity: 50_000,
            batch_size: 64,
            target_sync: 1_000,
            warmup: 1_000,
            epsilon_decay: None,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

/// Deep Q-network with uniform experience replay and a periodically synced target.
#[derive(Debug, Clone)]
pub struct Dqn {
    config: DqnConfig,
    space: ActionSpace,
    schedule: EpsilonSchedule,
    online: Mlp<Scalar>,
    target: Mlp<Scalar>,
    optimizer: Adam<Scalar>,
    buffer: ReplayBuffer<usize>,
    observed: u64,
    last_loss: Option<f64>,
}

impl Dqn {
    pub fn new(
        config: DqnConfig,
        space: ActionSpace,
        horizon: u64,
        rng: &mut AgentRng,
    ) -> Result<Self> {
        let m = space
            .num_actions()
            .ok_or_else(|| Error::Config("DQN needs a discrete grid".into()))?;
        if config.batch_size == 0
            || config.batch_size > config.buffer_capacity
            || config.target_sync == 0
        {
            return Err(Error::Config(
                "DQN needs 0 < batch_size <= buffer_capacity and target_sync > 0".into(),
            ));
        }
        let spec = NetworkSpec::with_hidden(2, &config.hidden, m, OutputHead::Linear);
        let online = Mlp::new(spec, rng)?;
        let schedule = config
            .epsilon_decay
            .map(EpsilonSchedule::new)
            .unwrap_or_else(|| EpsilonSchedule::for_horizon(horizon));
        Ok(Self {
            optimizer: Adam::for_params(AdamConfig::new(config.learning_rate), online.params()),
            target: online.clone(),
            online,
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            config,
            space,
            schedule,
            observed: 0,
            last_loss: None,
        })
    }

    pub fn online(&self) -> &Mlp<Scalar> {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut Mlp<Scalar> {
        &mut self.online
    }

    pub fn target(&self) -> &Mlp<Scalar> {
        &self.target
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn q_values(&self, obs: [Scalar; 2]) -> Result<Vec<Scalar>> {
        self.online.predict(&obs, 1)
    }

    /// Lowest-index argmax of the online action values.
    pub fn greedy(&self, obs: [Scalar; 2]) -> Result<usize> {
        let q = self.q_values(obs)?;
        let mut best = 0;
        for (a, v) in q.iter().enumerate() {
            if *v > q[best] {
                best = a;
            }
        }
        Ok(best)
    }

    /// One gradient step on the mean squared TD error of `batch`. Returns the
    /// loss before the step.
    pub fn learn(&mut self, batch: &[Experience<usize>]) -> Result<f64> {
        let b = batch.len();
        let m = self.online.spec().output_dim;
        if b == 0 {
            return Err(Error::Config("DQN learn needs a non-empty batch".into()));
        }
        let obs: Vec<Scalar> = batch.iter().flat_map(|e| e.obs).collect();
        let next: Vec<Scalar> = batch.iter().flat_map(|e| e.next_obs).collect();
        let gamma = self.config.gamma as Scalar;
        let next_q = self.target.predict(&next, b)?;
        let cache = self.online.forward_batch(&obs, b)?;
        let q = cache.output();
        let mut adjoint = vec![0.0; b * m];
        let mut loss = 0.0f64;
        for (i, e) in batch.iter().enumerate() {
            if e.action >= m {
                return Err(Error::Config(format!(
                    "replayed action {} outside {m} actions",
                    e.action
                )));
            }
            let max_next = next_q[i * m..(i + 1) * m]
                .iter()
                .copied()
                .fold(Scalar::NEG_INFINITY, Scalar::max);
            let y = e.reward + gamma * max_next;
            let err = q[i * m + e.action] - y;
            loss += (err as f64).powi(2);
            adjoint[i * m + e.action] = 2.0 * err / b as Scalar;
        }
        loss /= b as f64;
        let step = batch.iter().map(|e| e.t).max().unwrap_or(0);
        if !loss.is_finite() {
            return Err(non_finite("DQN loss", step));
        }
        let (grads, _) = self.online.backward(&cache, &adjoint, false)?;
        self.optimizer.step(self.online.params_mut(), &grads)?;
        if !self.online.params().is_finite() {
            return Err(non_finite("DQN parameters", step));
        }
        self.last_loss = Some(loss);
        Ok(loss)
    }

    fn sync_target(&mut self) {
        self.target = self.online.clone();
    }
}

impl Agent for Dqn {
    fn algorithm_label(&self) -> &str {
        "DQN"
    }

    fn act(&mut self, state: &EnvState, t: u64, rng: &mut AgentRng) -> Result<Action> {
        let m = self.online.spec().output_dim;
        if rng.random::<f64>() < self.schedule.epsilon(t) {
            Ok(Action::Index(rng.random_range(0..m)))
        } else {
            Ok(Action::Index(
                self.greedy(encode_state(&self.space, state))?,
            ))
        }
    }

    fn observe(&mut self, tr: &Transition, rng: &mut AgentRng) -> Result<()> {
        let Action::Index(a) = tr.action else {
            return Err(Error::Config("DQN only learns from grid actions".into()));
        };
        if !tr.reward.is_finite() {
            return Err(non_finite("reward", tr.t));
        }
        self.buffer.push(Experience {
            t: tr.t,
            obs: encode_state(&self.space, &tr.state),
            action: a,
            reward: tr.reward as Scalar,
            next_obs: encode_state(&self.space, &tr.next_state),
        })?;
        self.observed += 1;
        if self.observed >= self.config.warmup && self.buffer.len() >= self.config.batch_size {
            let batch = self.buffer.sample(rng, self.config.batch_size)?;
            self.learn(&batch)?;
        }
        if self.observed % self.config.target_sync == 0 {
            self.sync_target();
        }
        Ok(())
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint::Networks(vec![
            ("q_online".into(), self.online.params().clone()),
            ("q_target".into(), self.target.params().clone()),
        ])
    }
}
