//! Seeded runs, seed batches, hyperparameter tuning and small sanity tasks.

mod bandit;
mod config;
mod run;
mod tune;

pub use bandit::{bandit_run, BanditOutcome, BANDIT_EVAL, BANDIT_STEPS};
pub use config::{ExperimentConfig, Retention, DECIMATION_STRIDE};
pub use run::{
    run_batch, run_batch_with, run_single, run_with_agents, simulate, stream_rng, AgentFactory,
    Failure, RunResult, RunStatus, RunTrace, Stream, TraceRecorder,
};
pub use tune::{
    best_response, convergence_run, fixed_opponent_action, tune, tune_with, ConvergenceOutcome,
    LearnerFactory, TuneEntry, TuneGrid, CONVERGENCE_WINDOW,
};
