use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    compute_gae, encode_state, non_finite, normalize, Agent, AgentRng, Checkpoint, RolloutBuffer,
    Scalar, Transition,
};
use crate::env::{Action, ActionSpace, EnvState};
use crate::error::{Error, Result};
use crate::nn::{
    clip_grad_norm, log_softmax, split_gaussian, squashed_log_prob, Adam, AdamConfig, Mlp,
    NetworkSpec, OutputHead, DEFAULT_HIDDEN,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub rollout: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub clip: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Cap on the global gradient norm of each network per minibatch.
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            gamma: 0.99,
            rollout: 2048,
            epochs: 10,
            minibatch: 64,
            clip: 0.2,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Softmax over `m` grid prices.
    Categorical { m: usize },
    /// Tanh-squashed Gaussian mapped onto the price interval.
    Gaussian,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub updates: u64,
    pub skipped_minibatches: u64,
    pub last_policy_loss: f64,
    pub last_value_loss: f64,
}

/// `min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    obs: [Scalar; 2],
    action: Scalar,
    log_prob: Scalar,
    value: f64,
}

struct PolicyTerms {
    adjoint: Vec<Scalar>,
    loss: f64,
    skipped: bool,
}

/// Proximal policy optimization with separate actor and critic networks.
#[derive(Debug, Clone)]
pub struct Ppo {
    config: PpoConfig,
    kind: PolicyKind,
    space: ActionSpace,
    actor: Mlp<Scalar>,
    critic: Mlp<Scalar>,
    actor_opt: Adam<Scalar>,
    critic_opt: Adam<Scalar>,
    rollout: RolloutBuffer,
    pending: Option<Pending>,
    stats: PpoStats,
}

impl Ppo {
    pub fn new(config: PpoConfig, space: ActionSpace, rng: &mut AgentRng) -> Result<Self> {
        if config.rollout == 0 || config.minibatch == 0 || config.epochs == 0 {
            return Err(Error::Config(
                "PPO rollout, minibatch and epochs must be positive".into(),
            ));
        }
        if !(config.clip > 0.0) || !(0.0..=1.0).contains(&config.gae_lambda) {
            return Err(Error::Config(
                "PPO needs clip > 0 and lambda in [0, 1]".into(),
            ));
        }
        let (kind, actor_spec) = match space.num_actions() {
            Some(m) => (
                PolicyKind::Categorical { m },
                NetworkSpec::with_hidden(2, &config.hidden, m, OutputHead::Categorical),
            ),
            None => (
                PolicyKind::Gaussian,
                NetworkSpec::with_hidden(2, &config.hidden, 2, OutputHead::GaussianParams),
            ),
        };
        let actor = Mlp::new(actor_spec, rng)?;
        let critic = Mlp::new(
            NetworkSpec::with_hidden(2, &config.hidden, 1, OutputHead::Linear),
            rng,
        )?;
        let adam = AdamConfig::new(config.learning_rate);
        Ok(Self {
            actor_opt: Adam::for_params(adam, actor.params()),
            critic_opt: Adam::for_params(adam, critic.params()),
            actor,
            critic,
            kind,
            space,
            rollout: RolloutBuffer::default(),
            pending: None,
            stats: PpoStats::default(),
            config,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn stats(&self) -> PpoStats {
        self.stats
    }

    pub fn actor(&self) -> &Mlp<Scalar> {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp<Scalar> {
        &self.critic
    }

    pub fn rollout(&self) -> &RolloutBuffer {
        &self.rollout
    }

    /// Action probabilities of the categorical policy.
    pub fn probabilities(&self, obs: [Scalar; 2]) -> Result<Vec<Scalar>> {
        self.actor.forward(&obs)
    }

    /// Maps a pre-squash Gaussian sample onto the price interval.
    pub fn squash_to_price(&self, u: f64) -> f64 {
        let (lo, hi) = (self.space.lower(), self.space.upper());
        lo + 0.5 * (u.tanh() + 1.0) * (hi - lo)
    }

    /// Log-probability of a stored action (grid index, or pre-squash sample)
    /// under the current policy.
    pub fn log_prob(&self, obs: [Scalar; 2], action: Scalar) -> Result<f64> {
        let out = self.actor.predict(&obs, 1)?;
        Ok(self.log_prob_from_output(&out, action))
    }

    fn log_prob_from_output(&self, out: &[Scalar], action: Scalar) -> f64 {
        match self.kind {
            PolicyKind::Categorical { .. } => {
                let logits: Vec<f64> = out.iter().map(|&v| v as f64).collect();
                log_softmax(&logits)[action as usize]
            }
            PolicyKind::Gaussian => {
                let g = split_gaussian(out[0] as f64, out[1] as f64);
                squashed_log_prob(action as f64, g.mean, g.log_std)
            }
        }
    }

    fn sample(&self, obs: [Scalar; 2], rng: &mut AgentRng) -> Result<(Scalar, Scalar)> {
        let out = self.actor.predict(&obs, 1)?;
        let action = match self.kind {
            PolicyKind::Categorical { m } => {
                let logits: Vec<f64> = out.iter().map(|&v| v as f64).collect();
                let logp = log_softmax(&logits);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = m - 1;
                for (a, lp) in logp.iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        chosen = a;
                        break;
                    }
                }
                chosen as Scalar
            }
            PolicyKind::Gaussian => {
                let g = split_gaussian(out[0] as f64, out[1] as f64);
                let xi: f64 = rng.sample(StandardNormal);
                (g.mean + g.std() * xi) as Scalar
            }
        };
        Ok((action, self.log_prob_from_output(&out, action) as Scalar))
    }

    /// Clipped-surrogate loss over the whole rollout with the given advantages,
    /// at the current parameters.
    pub fn policy_objective(&self, advantages: &[f64]) -> Result<f64> {
        let n = self.rollout.len();
        if advantages.len() != n {
            return Err(Error::Shape {
                context: "rollout advantages",
                expected: n,
                got: advantages.len(),
            });
        }
        let idx: Vec<usize> = (0..n).collect();
        let x: Vec<Scalar> = self.rollout.obs.iter().flatten().copied().collect();
        let cache = self.actor.forward_batch(&x, n)?;
        Ok(self
            .policy_terms(cache.output(), &idx, advantages, 0.0)
            .loss)
    }

    /// Gradient of the clipped-surrogate loss (with entropy bonus) with respect
    /// to the actor's raw outputs, for rollout rows `idx`.
    fn policy_terms(
        &self,
        out: &[Scalar],
        idx: &[usize],
        adv: &[f64],
        entropy_coef: f64,
    ) -> PolicyTerms {
        let b = idx.len() as f64;
        let width = self.actor.spec().output_dim;
        let clip = self.config.clip;
        let mut adjoint = vec![0.0 as Scalar; idx.len() * width];
        let mut loss = 0.0;
        for (r, &i) in idx.iter().enumerate() {
            let row = &out[r * width..(r + 1) * width];
            let action = self.rollout.actions[i];
            let old = self.rollout.log_probs[i] as f64;
            let a_hat = adv[i];
            let logp = self.log_prob_from_output(row, action);
            let ratio = (logp - old).exp();
            if !ratio.is_finite() {
                return PolicyTerms {
                    adjoint,
                    loss,
                    skipped: true,
                };
            }
            loss -= clipped_surrogate(ratio, a_hat, clip) / b;
            let unclipped_active = ratio * a_hat <= ratio.clamp(1.0 - clip, 1.0 + clip) * a_hat;
            // d(-surrogate/b)/d(log pi)
            let d_logp = if unclipped_active {
                -a_hat * ratio / b
            } else {
                0.0
            };
            let grad = &mut adjoint[r * width..(r + 1) * width];
            match self.kind {
                PolicyKind::Categorical { .. } => {
                    let logits: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                    let lsm = log_softmax(&logits);
                    let entropy: f64 = -lsm.iter().map(|l| l.exp() * l).sum::<f64>();
                    let a = action as usize;
                    for (j, (g, l)) in grad.iter_mut().zip(&lsm).enumerate() {
                        let p = l.exp();
                        let onehot = if j == a { 1.0 } else { 0.0 };
                        // entropy gradient: dH/dz_j = -p_j (log p_j + H)
                        *g = (d_logp * (onehot - p) + entropy_coef / b * p * (l + entropy))
                            as Scalar;
                    }
                }
                PolicyKind::Gaussian => {
                    let gauss = split_gaussian(row[0] as f64, row[1] as f64);
                    let sd = gauss.std();
                    let z = (action as f64 - gauss.mean) / sd;
                    grad[0] = (d_logp * z / sd) as Scalar;
                    grad[1] = if gauss.clamped {
                        0.0
                    } else {
                        (d_logp * (z * z - 1.0) - entropy_coef / b) as Scalar
                    };
                }
            }
        }
        PolicyTerms {
            adjoint,
            loss,
            skipped: false,
        }
    }

    /// Runs the clipped-surrogate epochs on the filled rollout and clears it.
    /// Returns the mean `(policy_loss, value_loss)` over applied minibatches.
    pub fn update(&mut self, last_value: f64, t: u64, rng: &mut AgentRng) -> Result<(f64, f64)> {
        let n = self.rollout.len();
        if n == 0 {
            return Err(Error::Config("PPO update needs a non-empty rollout".into()));
        }
        let (adv, returns) = compute_gae(
            &self.rollout.rewards,
            &self.rollout.values,
            last_value,
            self.config.gamma,
            self.config.gae_lambda,
        );
        let adv = normalize(&adv);
        let cap = self.config.max_grad_norm as Scalar;
        let mut order: Vec<usize> = (0..n).collect();
        let (mut policy_sum, mut value_sum, mut applied) = (0.0, 0.0, 0usize);
        for _ in 0..self.config.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.config.minibatch) {
                let b = chunk.len();
                let x: Vec<Scalar> = chunk.iter().flat_map(|&i| self.rollout.obs[i]).collect();
                let actor_cache = self.actor.forward_batch(&x, b)?;
                let terms =
                    self.policy_terms(actor_cache.output(), chunk, &adv, self.config.entropy_coef);
                if terms.skipped {
                    self.stats.skipped_minibatches += 1;
                    continue;
                }
                let critic_cache = self.critic.forward_batch(&x, b)?;
                let mut value_loss = 0.0;
                let mut value_adjoint = vec![0.0 as Scalar; b];
                for (r, &i) in chunk.iter().enumerate() {
                    let err = critic_cache.output()[r] as f64 - returns[i];
                    value_loss += err * err / b as f64;
                    value_adjoint[r] = (2.0 * self.config.value_coef * err / b as f64) as Scalar;
                }
                if !value_loss.is_finite() {
                    return Err(non_finite("PPO value loss", t));
                }
                let (mut g_actor, _) = self.actor.backward(&actor_cache, &terms.adjoint, false)?;
                let (mut g_critic, _) =
                    self.critic.backward(&critic_cache, &value_adjoint, false)?;
                clip_grad_norm(&mut g_actor, cap);
                clip_grad_norm(&mut g_critic, cap);
                self.actor_opt.step(self.actor.params_mut(), &g_actor)?;
                self.critic_opt.step(self.critic.params_mut(), &g_critic)?;
                policy_sum += terms.loss;
                value_sum += value_loss;
                applied += 1;
            }
        }
        if !self.actor.params().is_finite() || !self.critic.params().is_finite() {
            return Err(non_finite("PPO parameters", t));
        }
        self.rollout.clear();
        let k = applied.max(1) as f64;
        self.stats.updates += 1;
        self.stats.last_policy_loss = policy_sum / k;
        self.stats.last_value_loss = value_sum / k;
        Ok((policy_sum / k, value_sum / k))
    }
}

impl Agent for Ppo {
    fn algorithm_label(&self) -> &str {
        match self.kind {
            PolicyKind::Categorical { .. } => "PPO-D",
            PolicyKind::Gaussian => "PPO-C",
        }
    }

    fn act(&mut self, state: &EnvState, _t: u64, rng: &mut AgentRng) -> Result<Action> {
        let obs = encode_state(&self.space, state);
        let (action, log_prob) = self.sample(obs, rng)?;
        let value = self.critic.predict(&obs, 1)?[0] as f64;
        self.pending = Some(Pending {
            obs,
            action,
            log_prob,
            value,
        });
        Ok(match self.kind {
            PolicyKind::Categorical { .. } => Action::Index(action as usize),
            PolicyKind::Gaussian => Action::Price(self.squash_to_price(action as f64)),
        })
    }

    fn observe(&mut self, tr: &Transition, rng: &mut AgentRng) -> Result<()> {
        let pending = self
            .pending
            .take()
            .ok_or_else(|| Error::Config("PPO observed a transition it did not act in".into()))?;
        if !tr.reward.is_finite() {
            return Err(non_finite("reward", tr.t));
        }
        self.rollout.obs.push(pending.obs);
        self.rollout.actions.push(pending.action);
        self.rollout.log_probs.push(pending.log_prob);
        self.rollout.rewards.push(tr.reward);
        self.rollout.values.push(pending.value);
        if self.rollout.len() >= self.config.rollout {
            let next = encode_state(&self.space, &tr.next_state);
            let last_value = self.critic.predict(&next, 1)?[0] as f64;
            self.update(last_value, tr.t, rng)?;
        }
        Ok(())
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint::Networks(vec![
            ("actor".into(), self.actor.params().clone()),
            ("critic".into(), self.critic.params().clone()),
        ])
    }
}
