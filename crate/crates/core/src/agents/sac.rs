use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    encode_state, non_finite, Agent, AgentRng, Checkpoint, Experience, ReplayBuffer, Scalar,
    Transition,
};
use crate::env::{Action, ActionSpace, EnvState};
use crate::error::{Error, Result};
use crate::nn::{
    soft_update, split_gaussian, squashed_log_prob, Adam, AdamConfig, Mlp, NetworkSpec, OutputHead,
    DEFAULT_HIDDEN,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub target_entropy: f64,
    pub initial_temperature: f64,
    pub hidden: Vec<usize>,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            buffer_capacity: 100_000,
            target_entropy: -1.0,
            initial_temperature: 1.0,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SacLosses {
    pub q_loss: f64,
    pub policy_loss: f64,
    pub temperature: f64,
}

/// Reparameterized draw from the squashed Gaussian policy for a batch.
struct PolicySample {
    actions: Vec<Scalar>,
    log_probs: Vec<f64>,
    noise: Vec<f64>,
}

/// Soft actor-critic with twin critics, soft target updates and a learned
/// entropy temperature. Actions live in `[-1, 1]` and are mapped affinely onto
/// the price interval.
#[derive(Debug, Clone)]
pub struct Sac {
    config: SacConfig,
    space: ActionSpace,
    actor: Mlp<Scalar>,
    critics: [Mlp<Scalar>; 2],
    targets: [Mlp<Scalar>; 2],
    actor_opt: Adam<Scalar>,
    critic_opts: [Adam<Scalar>; 2],
    log_alpha: Scalar,
    alpha_opt: Adam<Scalar>,
    buffer: ReplayBuffer<Scalar>,
    pending: Option<([Scalar; 2], Scalar)>,
    last: Option<SacLosses>,
}

impl Sac {
    pub fn new(config: SacConfig, space: ActionSpace, rng: &mut AgentRng) -> Result<Self> {
        if space.is_discrete() {
            return Err(Error::Config("SAC needs a continuous action space".into()));
        }
        if config.batch_size == 0 || config.batch_size > config.buffer_capacity {
            return Err(Error::Config(
                "SAC needs 0 < batch_size <= buffer_capacity".into(),
            ));
        }
        if !(config.initial_temperature > 0.0) {
            return Err(Error::Config("SAC temperature must be positive".into()));
        }
        let actor = Mlp::new(
            NetworkSpec::with_hidden(2, &config.hidden, 2, OutputHead::GaussianParams),
            rng,
        )?;
        let critic_spec = NetworkSpec::with_hidden(3, &config.hidden, 1, OutputHead::Linear);
        let critics = [
            Mlp::new(critic_spec.clone(), rng)?,
            Mlp::new(critic_spec, rng)?,
        ];
        let adam = AdamConfig::new(config.learning_rate);
        Ok(Self {
            actor_opt: Adam::for_params(adam, actor.params()),
            critic_opts: [
                Adam::for_params(adam, critics[0].params()),
                Adam::for_params(adam, critics[1].params()),
            ],
            targets: critics.clone(),
            critics,
            actor,
            log_alpha: config.initial_temperature.ln() as Scalar,
            alpha_opt: Adam::new(adam, 1),
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            pending: None,
            last: None,
            space,
            config,
        })
    }

    pub fn temperature(&self) -> f64 {
        (self.log_alpha as f64).exp()
    }

    pub fn last_losses(&self) -> Option<SacLosses> {
        self.last
    }

    pub fn actor(&self) -> &Mlp<Scalar> {
        &self.actor
    }

    pub fn action_to_price(&self, a: f64) -> f64 {
        let (lo, hi) = (self.space.lower(), self.space.upper());
        lo + 0.5 * (a + 1.0) * (hi - lo)
    }

    /// `min(Q1, Q2)` at one observation and action in `[-1, 1]`.
    pub fn min_q(&self, obs: [Scalar; 2], action: Scalar) -> Result<f64> {
        let x = [obs[0], obs[1], action];
        let q0 = self.critics[0].predict(&x, 1)?[0];
        let q1 = self.critics[1].predict(&x, 1)?[0];
        Ok(q0.min(q1) as f64)
    }

    pub fn critic_values(&self, obs: [Scalar; 2], action: Scalar) -> Result<[f64; 2]> {
        let x = [obs[0], obs[1], action];
        Ok([
            self.critics[0].predict(&x, 1)?[0] as f64,
            self.critics[1].predict(&x, 1)?[0] as f64,
        ])
    }

    fn sample_policy(&self, actor_out: &[Scalar], rng: &mut AgentRng) -> PolicySample {
        let b = actor_out.len() / 2;
        let mut s = PolicySample {
            actions: Vec::with_capacity(b),
            log_probs: Vec::with_capacity(b),
            noise: Vec::with_capacity(b),
        };
        for r in 0..b {
            let g = split_gaussian(actor_out[2 * r] as f64, actor_out[2 * r + 1] as f64);
            let xi: f64 = rng.sample(StandardNormal);
            let u = g.mean + g.std() * xi;
            s.actions.push(u.tanh() as Scalar);
            s.log_probs.push(squashed_log_prob(u, g.mean, g.log_std));
            s.noise.push(xi);
        }
        s
    }

    fn critic_input(obs: impl Iterator<Item = [Scalar; 2]>, actions: &[Scalar]) -> Vec<Scalar> {
        obs.zip(actions)
            .flat_map(|(o, &a)| [o[0], o[1], a])
            .collect()
    }

    /// Regresses both critics onto the soft Bellman target. Returns the mean
    /// of the two critic losses before the step.
    pub fn update_critics(
        &mut self,
        batch: &[Experience<Scalar>],
        rng: &mut AgentRng,
        t: u64,
    ) -> Result<f64> {
        let b = batch.len();
        let alpha = self.temperature();
        let gamma = self.config.gamma;
        let next: Vec<Scalar> = batch.iter().flat_map(|e| e.next_obs).collect();
        let next_out = self.actor.predict(&next, b)?;
        let next_pi = self.sample_policy(&next_out, rng);
        let target_in = Self::critic_input(batch.iter().map(|e| e.next_obs), &next_pi.actions);
        let qt0 = self.targets[0].predict(&target_in, b)?;
        let qt1 = self.targets[1].predict(&target_in, b)?;
        let y: Vec<f64> = (0..b)
            .map(|i| {
                let soft = (qt0[i].min(qt1[i]) as f64) - alpha * next_pi.log_probs[i];
                batch[i].reward as f64 + if gamma == 0.0 { 0.0 } else { gamma * soft }
            })
            .collect();
        let x = Self::critic_input(
            batch.iter().map(|e| e.obs),
            &batch.iter().map(|e| e.action).collect::<Vec<_>>(),
        );
        let mut total = 0.0;
        for k in 0..2 {
            let cache = self.critics[k].forward_batch(&x, b)?;
            let mut loss = 0.0;
            let adjoint: Vec<Scalar> = cache
                .output()
                .iter()
                .zip(&y)
                .map(|(&q, &target)| {
                    let err = q as f64 - target;
                    loss += err * err / b as f64;
                    (2.0 * err / b as f64) as Scalar
                })
                .collect();
            if !loss.is_finite() {
                return Err(non_finite("SAC critic loss", t));
            }
            let (grads, _) = self.critics[k].backward(&cache, &adjoint, false)?;
            self.critic_opts[k].step(self.critics[k].params_mut(), &grads)?;
            total += loss / 2.0;
        }
        Ok(total)
    }

    /// One reparameterized actor step on `alpha log pi - min(Q1, Q2)`. Returns
    /// the loss before the step and the batch log-probabilities.
    pub fn update_actor(
        &mut self,
        batch: &[Experience<Scalar>],
        rng: &mut AgentRng,
        t: u64,
    ) -> Result<(f64, Vec<f64>)> {
        let b = batch.len();
        let bf = b as f64;
        let alpha = self.temperature();
        let obs: Vec<Scalar> = batch.iter().flat_map(|e| e.obs).collect();
        let actor_cache = self.actor.forward_batch(&obs, b)?;
        let pi = self.sample_policy(actor_cache.output(), rng);
        let x = Self::critic_input(batch.iter().map(|e| e.obs), &pi.actions);
        let caches = [
            self.critics[0].forward_batch(&x, b)?,
            self.critics[1].forward_batch(&x, b)?,
        ];
        let (q0, q1) = (caches[0].output(), caches[1].output());

        // dL/dQ_k is -1/b on the rows where critic k attains the minimum.
        let mut adjoints = [vec![0.0 as Scalar; b], vec![0.0 as Scalar; b]];
        let mut loss = 0.0;
        for i in 0..b {
            let k = usize::from(q1[i] < q0[i]);
            adjoints[k][i] = -1.0 / b as Scalar;
            loss += (alpha * pi.log_probs[i] - q0[i].min(q1[i]) as f64) / bf;
        }
        if !loss.is_finite() {
            return Err(non_finite("SAC policy loss", t));
        }
        let mut d_action = vec![0.0f64; b];
        for k in 0..2 {
            let dx = self.critics[k].input_gradient(&caches[k], &adjoints[k])?;
            for i in 0..b {
                d_action[i] += dx[3 * i + 2] as f64;
            }
        }

        let out = actor_cache.output();
        let mut actor_adjoint = vec![0.0 as Scalar; 2 * b];
        for i in 0..b {
            let g = split_gaussian(out[2 * i] as f64, out[2 * i + 1] as f64);
            let a = pi.actions[i] as f64;
            let sd_xi = g.std() * pi.noise[i];
            // log pi = log N(u) - ln(1 - tanh(u)^2) with u = mean + sd * xi;
            // d/du of the second term is -2 tanh(u), and log N(u) changes only through -log_std.
            let dl_du = alpha / bf * 2.0 * a + d_action[i] * (1.0 - a * a);
            actor_adjoint[2 * i] = dl_du as Scalar;
            actor_adjoint[2 * i + 1] = if g.clamped {
                0.0
            } else {
                (-alpha / bf + dl_du * sd_xi) as Scalar
            };
        }
        let (grads, _) = self.actor.backward(&actor_cache, &actor_adjoint, false)?;
        self.actor_opt.step(self.actor.params_mut(), &grads)?;
        Ok((loss, pi.log_probs))
    }

    /// Dual step on `-log_alpha * (log pi + target_entropy)`.
    pub fn update_temperature(&mut self, log_probs: &[f64]) -> Result<f64> {
        let n = log_probs.len().max(1) as f64;
        let grad = -log_probs
            .iter()
            .map(|lp| lp + self.config.target_entropy)
            .sum::<f64>()
            / n;
        let mut param = [self.log_alpha];
        self.alpha_opt.step_slice(&mut param, &[grad as Scalar])?;
        self.log_alpha = param[0];
        Ok(self.temperature())
    }

    pub fn learn(&mut self, batch: &[Experience<Scalar>], rng: &mut AgentRng) -> Result<SacLosses> {
        if batch.is_empty() {
            return Err(Error::Config("SAC learn needs a non-empty batch".into()));
        }
        let t = batch.iter().map(|e| e.t).max().unwrap_or(0);
        let q_loss = self.update_critics(batch, rng, t)?;
        let (policy_loss, log_probs) = self.update_actor(batch, rng, t)?;
        let temperature = self.update_temperature(&log_probs)?;
        let tau = self.config.tau as Scalar;
        for k in 0..2 {
            soft_update(self.targets[k].params_mut(), self.critics[k].params(), tau)?;
        }
        if !self.actor.params().is_finite() || !self.critics.iter().all(|c| c.params().is_finite())
        {
            return Err(non_finite("SAC parameters", t));
        }
        let losses = SacLosses {
            q_loss,
            policy_loss,
            temperature,
        };
        self.last = Some(losses);
        Ok(losses)
    }
}

impl Agent for Sac {
    fn algorithm_label(&self) -> &str {
        "SAC"
    }

    fn act(&mut self, state: &EnvState, _t: u64, rng: &mut AgentRng) -> Result<Action> {
        let obs = encode_state(&self.space, state);
        let out = self.actor.predict(&obs, 1)?;
        let a = self.sample_policy(&out, rng).actions[0];
        self.pending = Some((obs, a));
        Ok(Action::Price(self.action_to_price(a as f64)))
    }

    fn observe(&mut self, tr: &Transition, rng: &mut AgentRng) -> Result<()> {
        let (obs, action) = self
            .pending
            .take()
            .ok_or_else(|| Error::Config("SAC observed a transition it did not act in".into()))?;
        if !tr.reward.is_finite() {
            return Err(non_finite("reward", tr.t));
        }
        self.buffer.push(Experience {
            t: tr.t,
            obs,
            action,
            reward: tr.reward as Scalar,
            next_obs: encode_state(&self.space, &tr.next_state),
        })?;
        if self.buffer.len() >= self.config.batch_size {
            let batch = self.buffer.sample(rng, self.config.batch_size)?;
            self.learn(&batch, rng)?;
        }
        Ok(())
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint::Networks(vec![
            ("actor".into(), self.actor.params().clone()),
            ("critic_1".into(), self.critics[0].params().clone()),
            ("critic_2".into(), self.critics[1].params().clone()),
            ("critic_1_target".into(), self.targets[0].params().clone()),
            ("critic_2_target".into(), self.targets[1].params().clone()),
        ])
    }
}
