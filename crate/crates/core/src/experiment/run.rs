use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentConfig, Retention};
use crate::agents::{build_agent, Agent, Algorithm, Transition};
use crate::env::{PricingEnv, StepRecord};
use crate::error::{Error, Result};
use crate::market::{EquilibriumInfo, MarketVariant};
use crate::metrics::{window_metrics, AgentMetrics, RunClassification};

/// Named random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    EnvInit = 0,
    Agent0 = 1,
    Agent1 = 2,
    Agent0Init = 3,
    Agent1Init = 4,
}

/// Independent generator for `stream` of the run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Steps of one run kept under a retention policy, plus a digest of every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub retention: Retention,
    pub total_steps: u64,
    pub records: Vec<StepRecord>,
    /// SHA-256 over all steps, retained or not.
    pub digest: String,
}

/// Streams steps into a `RunTrace`.
pub struct TraceRecorder {
    retention: Retention,
    total: u64,
    records: Vec<StepRecord>,
    hasher: Sha256,
    seen: u64,
}

impl TraceRecorder {
    pub fn new(retention: Retention, total: u64) -> Self {
        Self {
            retention,
            total,
            records: Vec::with_capacity(retention.retained_len(total) as usize),
            hasher: Sha256::new(),
            seen: 0,
        }
    }

    pub fn push(&mut self, r: &StepRecord) {
        self.hasher.update(r.t.to_le_bytes());
        for v in r.prices.iter().chain(&r.demands).chain(&r.rewards) {
            self.hasher.update(v.to_le_bytes());
        }
        if self.retention.keeps(r.t, self.total) {
            self.records.push(*r);
        }
        self.seen += 1;
    }

    pub fn finish(self) -> RunTrace {
        RunTrace {
            retention: self.retention,
            total_steps: self.seen,
            records: self.records,
            digest: hex::encode(self.hasher.finalize()),
        }
    }
}

/// Where a simulation stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub step: u64,
    pub message: String,
}

/// Plays `steps` periods of simultaneous moves. An error from an agent or the
/// environment stops the run; the trace up to that point is still returned.
pub fn simulate(
    env: &mut PricingEnv,
    agents: &mut [Box<dyn Agent>; 2],
    seed: u64,
    steps: u64,
    retention: Retention,
) -> (RunTrace, Option<Failure>) {
    let mut env_rng = stream_rng(seed, Stream::EnvInit);
    let mut rngs = [
        stream_rng(seed, Stream::Agent0),
        stream_rng(seed, Stream::Agent1),
    ];
    let mut recorder = TraceRecorder::new(retention, steps);
    let mut state = env.reset(&mut env_rng);
    for t in 0..steps {
        let outcome = (|| -> Result<()> {
            let a0 = agents[0].act(&state, t, &mut rngs[0])?;
            let a1 = agents[1].act(&state, t, &mut rngs[1])?;
            let (next, record) = env.step(&state, a0, a1)?;
            recorder.push(&record);
            for (i, action) in [a0, a1].into_iter().enumerate() {
                let tr = Transition {
                    t,
                    state,
                    action,
                    price: record.prices[i],
                    reward: record.rewards[i],
                    next_state: next,
                };
                agents[i].observe(&tr, &mut rngs[i])?;
            }
            state = next;
            Ok(())
        })();
        if let Err(e) = outcome {
            return (
                recorder.finish(),
                Some(Failure {
                    step: t,
                    message: e.to_string(),
                }),
            );
        }
    }
    (recorder.finish(), None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed { step: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_hash: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub market: MarketVariant,
    pub equilibrium: EquilibriumInfo,
    pub steps: u64,
    #[serde(flatten)]
    pub status: RunStatus,
    pub classification: Option<RunClassification>,
    pub agents: Option<AgentMetrics>,
    pub clamped_actions: u64,
    pub trace_digest: String,
    #[serde(skip)]
    pub trace: Option<RunTrace>,
}

impl RunResult {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// One seeded self-play run of two fresh agents of the configured algorithm.
pub fn run_single(config: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    config.validate()?;
    let env = config.environment()?;
    let steps = config.steps();
    let mut agents = Vec::with_capacity(2);
    for stream in [Stream::Agent0Init, Stream::Agent1Init] {
        let mut init = stream_rng(seed, stream);
        agents.push(build_agent(
            config.algorithm,
            &config.agents,
            env.space(),
            steps,
            &mut init,
        )?);
    }
    let agents: [Box<dyn Agent>; 2] = agents
        .try_into()
        .map_err(|_| Error::Config("two agents".into()))?;
    run_with_agents(config, seed, agents)
}

/// Runs the configured market with the supplied agents.
pub fn run_with_agents(
    config: &ExperimentConfig,
    seed: u64,
    mut agents: [Box<dyn Agent>; 2],
) -> Result<RunResult> {
    let mut env = config.environment()?;
    let steps = config.steps();
    let (trace, failure) = simulate(&mut env, &mut agents, seed, steps, config.retention);
    let eq = *env.equilibrium();
    let (status, classification, metrics) = match failure {
        Some(f) => (
            RunStatus::Failed {
                step: f.step,
                message: f.message,
            },
            None,
            None,
        ),
        None => {
            let m = window_metrics(&trace.records, &eq)?;
            (RunStatus::Completed, Some(m.classification), Some(m.agents))
        }
    };
    Ok(RunResult {
        config_hash: config.hash(),
        seed,
        algorithm: config.algorithm,
        market: config.market.variant(),
        equilibrium: eq,
        steps,
        status,
        classification,
        agents: metrics,
        clamped_actions: env.clamp_count(),
        trace_digest: trace.digest.clone(),
        trace: Some(trace),
    })
}

/// Agent pair used for one seed of a batch.
pub type AgentFactory<'a> = dyn Fn(u64) -> Result<[Box<dyn Agent>; 2]> + Sync + 'a;

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs every configured seed on up to `workers` threads. Results come back in
/// seed-list order; failed runs are included and flagged.
pub fn run_batch(config: &ExperimentConfig, workers: usize) -> Result<Vec<RunResult>> {
    config.validate()?;
    pool(workers)?.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&s| run_single(config, s))
            .collect()
    })
}

/// Like `run_batch` with agents supplied by `factory`.
pub fn run_batch_with(
    config: &ExperimentConfig,
    workers: usize,
    factory: &AgentFactory<'_>,
) -> Result<Vec<RunResult>> {
    config.validate()?;
    pool(workers)?.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&s| run_with_agents(config, s, factory(s)?))
            .collect()
    })
}
