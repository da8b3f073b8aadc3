use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{stream_rng, Stream};
use super::ExperimentConfig;
use crate::agents::{build_agent, Agent, AgentConfigs, FixedAction, Transition};
use crate::env::{Action, ActionSpace, PricingEnv};
use crate::error::{Error, Result};
use crate::market::{MarketModel, MarketVariant};

/// Length of the trailing window whose mean price must sit near the best response.
pub const CONVERGENCE_WINDOW: u64 = 1_000;

/// Price in `space` maximizing one-shot profit against a fixed opponent.
/// Grids are enumerated with ties going to the lowest price; intervals are
/// searched by successive grid refinement down to a 1e-6 spacing.
pub fn best_response(model: &MarketModel, opponent: f64, space: &ActionSpace) -> Result<f64> {
    let profit = |p: f64| -> Result<f64> { Ok(model.profit(p, model.demand(p, opponent)?)) };
    if let Ok(grid) = space.price_grid() {
        let mut best = (grid[0], profit(grid[0])?);
        for &p in &grid[1..] {
            let v = profit(p)?;
            if v > best.1 {
                best = (p, v);
            }
        }
        return Ok(best.0);
    }
    let (mut lo, mut hi) = (space.lower(), space.upper());
    let points = 1001;
    loop {
        let step = (hi - lo) / (points - 1) as f64;
        let mut best = (lo, profit(lo)?);
        for j in 1..points {
            let p = if j == points - 1 {
                hi
            } else {
                lo + j as f64 * step
            };
            let v = profit(p)?;
            if v > best.1 {
                best = (p, v);
            }
        }
        if step <= 1e-6 {
            return Ok(best.0);
        }
        lo = (best.0 - step).max(space.lower());
        hi = (best.0 + step).min(space.upper());
    }
}

/// How the opponent's fixed price is played in `space`: the nearest grid
/// point on a grid, the price itself on an interval.
pub fn fixed_opponent_action(space: &ActionSpace, price: f64) -> Action {
    match space.nearest_index(price) {
        Some(j) => Action::Index(j),
        None => Action::Price(price),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOutcome {
    pub opponent_price: f64,
    pub best_response: f64,
    /// First step whose trailing mean price is within tolerance of the best response.
    pub converged_at: Option<u64>,
    pub final_mean_price: f64,
    pub last_price: f64,
}

/// Agent 0 learns against an opponent that always plays `opponent` (snapped
/// to the grid when discrete). Convergence is reached once the mean of the
/// learner's last 1000 prices is within one grid step (or 1% of the price
/// range when continuous) of the best response.
pub fn convergence_run(
    env: &mut PricingEnv,
    learner: &mut dyn Agent,
    opponent: f64,
    seed: u64,
    steps: u64,
) -> Result<ConvergenceOutcome> {
    if steps < CONVERGENCE_WINDOW {
        return Err(Error::Config(format!(
            "convergence runs need at least {CONVERGENCE_WINDOW} steps"
        )));
    }
    let space = env.space().clone();
    let opp_action = fixed_opponent_action(&space, opponent);
    let opponent_price = env.resolve(opp_action)?;
    let target = best_response(env.model(), opponent_price, &space)?;
    let tol = if space.is_discrete() {
        space.step_size()
    } else {
        0.01 * (space.upper() - space.lower())
    } + 1e-12;

    let mut opp = FixedAction::new(opp_action);
    let mut env_rng = stream_rng(seed, Stream::EnvInit);
    let mut rngs = [
        stream_rng(seed, Stream::Agent0),
        stream_rng(seed, Stream::Agent1),
    ];
    let mut state = env.reset(&mut env_rng);
    let mut recent = std::collections::VecDeque::with_capacity(CONVERGENCE_WINDOW as usize);
    let mut sum = 0.0;
    let mut converged_at = None;
    let mut last_price = f64::NAN;
    for t in 0..steps {
        let a0 = learner.act(&state, t, &mut rngs[0])?;
        let a1 = opp.act(&state, t, &mut rngs[1])?;
        let (next, record) = env.step(&state, a0, a1)?;
        let tr = Transition {
            t,
            state,
            action: a0,
            price: record.prices[0],
            reward: record.rewards[0],
            next_state: next,
        };
        learner.observe(&tr, &mut rngs[0])?;
        state = next;
        last_price = record.prices[0];
        recent.push_back(last_price);
        sum += last_price;
        if recent.len() as u64 > CONVERGENCE_WINDOW {
            sum -= recent.pop_front().expect("non-empty");
        }
        if converged_at.is_none()
            && recent.len() as u64 == CONVERGENCE_WINDOW
            && (sum / CONVERGENCE_WINDOW as f64 - target).abs() <= tol
        {
            converged_at = Some(t);
        }
    }
    let final_mean_price = recent.iter().sum::<f64>() / recent.len() as f64;
    Ok(ConvergenceOutcome {
        opponent_price,
        best_response: target,
        converged_at,
        final_mean_price,
        last_price,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub repetitions: usize,
}

impl Default for TuneGrid {
    fn default() -> Self {
        Self {
            alphas: vec![1e-5, 1e-4, 1e-3],
            gammas: vec![0.95, 0.99, 0.999],
            repetitions: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneEntry {
    pub alpha: f64,
    pub gamma: f64,
    /// Convergence step per repetition; `None` when it never converged.
    pub steps: Vec<Option<u64>>,
    pub converged: usize,
    /// Mean convergence step, counting non-converged repetitions as the run length.
    pub mean_step: f64,
}

/// Learner for one tuning repetition.
pub type LearnerFactory<'a> =
    dyn Fn(&AgentConfigs, &ActionSpace, u64) -> Result<Box<dyn Agent>> + Sync + 'a;

/// Hyperparameter search against an opponent fixed at the Nash price. Entries
/// are ranked by mean convergence step, then by number of converged runs.
pub fn tune(config: &ExperimentConfig, grid: &TuneGrid, workers: usize) -> Result<Vec<TuneEntry>> {
    let algorithm = config.algorithm;
    let steps = config.steps();
    let factory = move |agents: &AgentConfigs, space: &ActionSpace, seed: u64| {
        build_agent(
            algorithm,
            agents,
            space,
            steps,
            &mut stream_rng(seed, Stream::Agent0Init),
        )
    };
    tune_with(config, grid, workers, &factory)
}

pub fn tune_with(
    config: &ExperimentConfig,
    grid: &TuneGrid,
    workers: usize,
    factory: &LearnerFactory<'_>,
) -> Result<Vec<TuneEntry>> {
    if config.market.variant() != MarketVariant::Logit {
        return Err(Error::Config("tuning runs on the logit market".into()));
    }
    if grid.alphas.is_empty() || grid.gammas.is_empty() || grid.repetitions == 0 {
        return Err(Error::Config(
            "tuning grid needs at least one alpha, gamma and repetition".into(),
        ));
    }
    config.market.validate()?;
    let steps = config.steps();
    let jobs: Vec<(f64, f64, usize)> = grid
        .alphas
        .iter()
        .flat_map(|&a| {
            grid.gammas
                .iter()
                .flat_map(move |&g| (0..grid.repetitions).map(move |r| (a, g, r)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Option<u64>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(alpha, gamma, rep)| {
                let mut agents = config.agents.clone();
                agents.set_alpha_gamma(config.algorithm, alpha, gamma);
                let mut env = config.environment()?;
                let seed = config.seeds.get(rep).copied().unwrap_or(rep as u64);
                let mut learner = factory(&agents, env.space(), seed)?;
                let p_n = env.equilibrium().nash_price;
                Ok(convergence_run(&mut env, learner.as_mut(), p_n, seed, steps)?.converged_at)
            })
            .collect::<Result<_>>()
    })?;

    let mut entries: Vec<TuneEntry> = outcomes
        .chunks(grid.repetitions)
        .zip(jobs.chunks(grid.repetitions))
        .map(|(steps_taken, job)| {
            let converged = steps_taken.iter().filter(|s| s.is_some()).count();
            let mean_step = steps_taken
                .iter()
                .map(|s| s.unwrap_or(steps) as f64)
                .sum::<f64>()
                / steps_taken.len() as f64;
            TuneEntry {
                alpha: job[0].0,
                gamma: job[0].1,
                steps: steps_taken.to_vec(),
                converged,
                mean_step,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        a.mean_step
            .total_cmp(&b.mean_step)
            .then(b.converged.cmp(&a.converged))
    });
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentRng, Algorithm, Checkpoint, Tql, TqlConfig};
    use crate::env::{ActionKind, EnvState};

    #[test]
    fn best_response_against_half_on_unit_grid() {
        let space = ActionSpace::discrete(0.0, 1.0, 15).unwrap();
        let br = best_response(&MarketModel::standard(), 0.5, &space).unwrap();
        assert_eq!(br, 6.0 / 14.0);
    }

    #[test]
    fn best_response_to_grid_minimum_is_the_minimum_by_tie_rule() {
        // Every price earns zero against an opponent at 0, so the lowest wins the tie.
        let space = ActionSpace::discrete(0.0, 1.0, 15).unwrap();
        assert_eq!(
            best_response(&MarketModel::standard(), 0.0, &space).unwrap(),
            0.0
        );
    }

    #[test]
    fn continuous_best_response_to_nash_is_nash() {
        let env = PricingEnv::new(MarketModel::logit(), ActionKind::Continuous, 0.1).unwrap();
        let p_n = env.equilibrium().nash_price;
        let br = best_response(env.model(), p_n, env.space()).unwrap();
        assert!((br - p_n).abs() < 1e-3, "{br} vs {p_n}");
    }

    struct Oracle(Action);

    impl Agent for Oracle {
        fn algorithm_label(&self) -> &str {
            "oracle"
        }
        fn act(&mut self, _: &EnvState, _: u64, _: &mut AgentRng) -> Result<Action> {
            Ok(self.0)
        }
        fn observe(&mut self, _: &Transition, _: &mut AgentRng) -> Result<()> {
            Ok(())
        }
        fn checkpoint(&self) -> Checkpoint {
            Checkpoint::Stateless
        }
    }

    #[test]
    fn learner_at_best_response_converges_immediately() {
        let mut config = ExperimentConfig::new(MarketModel::logit(), Algorithm::Tql);
        config.steps = Some(2_000);
        let factory = |_: &AgentConfigs, space: &ActionSpace, _: u64| -> Result<Box<dyn Agent>> {
            let env = PricingEnv::new(MarketModel::logit(), space.kind(), 0.1)?;
            let opp = env.space().price_grid()?
                [space.nearest_index(env.equilibrium().nash_price).unwrap()];
            let br = best_response(env.model(), opp, space)?;
            Ok(Box::new(Oracle(Action::Index(
                space.grid_index(br).unwrap(),
            ))))
        };
        let grid = TuneGrid {
            alphas: vec![0.1],
            gammas: vec![0.5],
            repetitions: 3,
        };
        let ranked = tune_with(&config, &grid, 1, &factory).unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].converged, 3);
        assert!(ranked[0].steps.iter().all(|s| s.unwrap() <= 1_000));
    }

    #[test]
    fn tuning_requires_logit_and_ranks_every_pair() {
        let mut config = ExperimentConfig::new(MarketModel::standard(), Algorithm::Tql);
        config.steps = Some(1_500);
        assert!(tune(&config, &TuneGrid::default(), 1).is_err());
        config.market = MarketModel::logit();
        let grid = TuneGrid {
            alphas: vec![0.1, 0.5],
            gammas: vec![0.0, 0.9],
            repetitions: 2,
        };
        let ranked = tune(&config, &grid, 2).unwrap();
        assert_eq!(ranked.len(), 4);
        for w in ranked.windows(2) {
            assert!(w[0].mean_step <= w[1].mean_step);
        }
    }

    #[test]
    fn myopic_q_learner_finds_grid_best_response() {
        let model = MarketModel::standard();
        let mut env = PricingEnv::new(model, ActionKind::Discrete { m: 15 }, 0.1).unwrap();
        let config = TqlConfig {
            gamma: 0.0,
            ..TqlConfig::default()
        };
        let mut tql = Tql::new(config, env.space().clone(), 50_000).unwrap();
        let out = convergence_run(&mut env, &mut tql, 0.5, 1, 50_000).unwrap();
        assert_eq!(out.best_response, 6.0 / 14.0);
        assert!(out.converged_at.is_some());
        let s = tql.table().num_actions();
        let greedy: Vec<usize> = (0..s * s).map(|st| tql.table().greedy(st)).collect();
        assert!(greedy.iter().filter(|&&a| a == 6).count() > 0);
    }
}
