use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{non_finite, Agent, AgentRng, Checkpoint, EpsilonSchedule, Transition};
use crate::env::{Action, ActionSpace, EnvState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TqlConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Exploration decay rate; derived from the run length when absent.
    pub epsilon_decay: Option<f64>,
}

impl Default for TqlConfig {
    fn default() -> Self {
        Self {
            alpha: 0.125,
            gamma: 0.95,
            epsilon_decay: None,
        }
    }
}

/// Action values over `m * m` states (both previous grid indices) and `m` actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    m: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            values: vec![0.0; m * m * m],
        }
    }

    pub fn num_actions(&self) -> usize {
        self.m
    }

    pub fn num_states(&self) -> usize {
        self.m * self.m
    }

    pub fn state_index(&self, i0: usize, i1: usize) -> usize {
        i0 * self.m + i1
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.m + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.m + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.m..(state + 1) * self.m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Highest-valued action, lowest index on ties.
    pub fn greedy(&self, state: usize) -> usize {
        let row = self.row(state);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    /// One row per state, one column per action.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.values.len() * 20);
        let header: Vec<String> = (0..self.m).map(|a| format!("a{a}")).collect();
        writeln!(out, "state,{}", header.join(",")).expect("write to memory");
        for s in 0..self.num_states() {
            let row: Vec<String> = self.row(s).iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{s},{}", row.join(",")).expect("write to memory");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader =
            csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        let m = reader
            .headers()
            .map_err(|e| Error::parse(path, e.to_string()))?
            .len()
            .saturating_sub(1);
        let mut table = Self::new(m);
        let mut rows = 0;
        for (s, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
            if s >= table.num_states() || record.len() != m + 1 {
                return Err(Error::parse(path, format!("unexpected row {s}")));
            }
            for a in 0..m {
                let v: f64 = record[a + 1]
                    .parse()
                    .map_err(|_| Error::parse(path, format!("bad value in row {s}")))?;
                table.set(s, a, v);
            }
            rows += 1;
        }
        if rows != table.num_states() {
            return Err(Error::parse(
                path,
                format!("expected {} rows, got {rows}", table.num_states()),
            ));
        }
        Ok(table)
    }
}

/// `Q(s, a) <- (1 - alpha) Q(s, a) + alpha (r + gamma max_a' Q(s', a'))`.
pub fn tql_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
    alpha: f64,
    gamma: f64,
) {
    let target = r + gamma * q.max_value(s_next);
    let old = q.get(s, a);
    q.set(s, a, (1.0 - alpha) * old + alpha * target);
}

/// Epsilon-greedy choice: uniform with probability `epsilon_t`, greedy otherwise.
pub fn tql_act(
    q: &QTable,
    s: usize,
    t: u64,
    schedule: &EpsilonSchedule,
    rng: &mut AgentRng,
) -> usize {
    if rng.random::<f64>() < schedule.epsilon(t) {
        rng.random_range(0..q.num_actions())
    } else {
        q.greedy(s)
    }
}

/// Tabular Q-learner on the price grid.
#[derive(Debug, Clone)]
pub struct Tql {
    config: TqlConfig,
    space: ActionSpace,
    schedule: EpsilonSchedule,
    table: QTable,
}

impl Tql {
    pub fn new(config: TqlConfig, space: ActionSpace, horizon: u64) -> Result<Self> {
        let m = space
            .num_actions()
            .ok_or_else(|| Error::Config("tabular Q-learning needs a discrete grid".into()))?;
        if !(config.alpha > 0.0 && config.alpha <= 1.0) || !(0.0..1.0).contains(&config.gamma) {
            return Err(Error::Config(format!(
                "Q-learning needs alpha in (0, 1] and gamma in [0, 1), got {} and {}",
                config.alpha, config.gamma
            )));
        }
        let schedule = config
            .epsilon_decay
            .map(EpsilonSchedule::new)
            .unwrap_or_else(|| EpsilonSchedule::for_horizon(horizon));
        Ok(Self {
            config,
            space,
            schedule,
            table: QTable::new(m),
        })
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        self.schedule
    }

    fn state_of(&self, state: &EnvState) -> Result<usize> {
        let idx = |p: f64| {
            self.space
                .grid_index(p)
                .ok_or_else(|| Error::Config(format!("price {p} is not on the grid")))
        };
        Ok(self
            .table
            .state_index(idx(state.prev_prices[0])?, idx(state.prev_prices[1])?))
    }
}

impl Agent for Tql {
    fn algorithm_label(&self) -> &str {
        "TQL"
    }

    fn act(&mut self, state: &EnvState, t: u64, rng: &mut AgentRng) -> Result<Action> {
        let s = self.state_of(state)?;
        Ok(Action::Index(tql_act(
            &self.table,
            s,
            t,
            &self.schedule,
            rng,
        )))
    }

    fn observe(&mut self, tr: &Transition, _rng: &mut AgentRng) -> Result<()> {
        let a = match tr.action {
            Action::Index(a) if a < self.table.num_actions() => a,
            other => {
                return Err(Error::Config(format!(
                    "Q-learner cannot learn from {other:?}"
                )))
            }
        };
        if !tr.reward.is_finite() {
            return Err(non_finite("reward", tr.t));
        }
        let s = self.state_of(&tr.state)?;
        let s_next = self.state_of(&tr.next_state)?;
        tql_update(
            &mut self.table,
            s,
            a,
            tr.reward,
            s_next,
            self.config.alpha,
            self.config.gamma,
        );
        Ok(())
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint::QTable(self.table.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn update_from_zero_table() {
        let mut q = QTable::new(15);
        tql_update(&mut q, 7, 3, 0.125, 9, 0.125, 0.95);
        assert_eq!(q.get(7, 3), 0.015625);
        let changed = q.values().iter().filter(|v| **v != 0.0).count();
        assert_eq!(changed, 1);

        let before = q.clone();
        tql_update(&mut q, 7, 3, 5.0, 7, 0.0, 0.95);
        assert_eq!(q, before);

        tql_update(&mut q, 7, 3, 0.3, 7, 1.0, 0.0);
        assert_eq!(q.get(7, 3), 0.3);
    }

    #[test]
    fn update_example() {
        let mut q = QTable::new(3);
        q.set(4, 0, 1.0);
        q.set(4, 2, 2.0);
        tql_update(&mut q, 0, 1, 0.5, 4, 0.5, 0.9);
        // 0.5 * 0 + 0.5 * (0.5 + 0.9 * 2)
        assert!((q.get(0, 1) - 1.15).abs() < 1e-15);
        tql_update(&mut q, 0, 1, 0.5, 4, 1.0, 0.0);
        assert_eq!(q.get(0, 1), 0.5);
    }

    #[test]
    fn greedy_breaks_ties_low() {
        let mut q = QTable::new(4);
        assert_eq!(q.greedy(3), 0);
        q.set(3, 2, 1.0);
        q.set(3, 3, 1.0);
        assert_eq!(q.greedy(3), 2);
    }

    #[test]
    fn act_is_greedy_once_epsilon_vanishes() {
        let mut q = QTable::new(5);
        q.set(0, 3, 1.0);
        let sched = EpsilonSchedule::new(1.0);
        let mut rng = AgentRng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(tql_act(&q, 0, 1000, &sched, &mut rng), 3);
            assert_eq!(tql_act(&q, 1, 1000, &sched, &mut rng), 0);
        }
    }

    #[test]
    fn act_is_uniform_at_full_exploration() {
        // Pearson chi-squared against uniform over 5 actions; 4 dof, 0.999 quantile 18.47.
        let q = QTable::new(5);
        let sched = EpsilonSchedule::new(0.0);
        let mut rng = AgentRng::seed_from_u64(7);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[tql_act(&q, 0, 0, &sched, &mut rng)] += 1;
        }
        let expected = n as f64 / 5.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 18.47, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn csv_round_trip() {
        let mut q = QTable::new(3);
        for (i, v) in [0.1, -2.5, 1e-17, 3.0].iter().enumerate() {
            q.set(i * 2, i % 3, *v);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        q.save_csv(&path).unwrap();
        assert_eq!(QTable::load_csv(&path).unwrap(), q);
    }

    #[test]
    fn rejects_continuous_space_and_bad_rates() {
        let cont = ActionSpace::continuous(0.0, 1.0).unwrap();
        assert!(Tql::new(TqlConfig::default(), cont, 10).is_err());
        let grid = ActionSpace::discrete(0.0, 1.0, 3).unwrap();
        let bad = TqlConfig {
            gamma: 1.0,
            ..TqlConfig::default()
        };
        assert!(Tql::new(bad, grid, 10).is_err());
    }

    proptest! {
        #[test]
        fn values_stay_within_discounted_reward_bounds(
            rewards in prop::collection::vec((0usize..9, 0usize..3, 0.0f64..1.0, 0usize..9), 1..400),
            alpha in 0.01f64..1.0,
            gamma in 0.0f64..0.99,
        ) {
            let mut q = QTable::new(3);
            let cap = 1.0 / (1.0 - gamma);
            for (s, a, r, s2) in rewards {
                tql_update(&mut q, s, a, r, s2, alpha, gamma);
                prop_assert!(q.values().iter().all(|&v| (0.0..=cap + 1e-12).contains(&v)));
            }
        }

        #[test]
        fn constant_reward_shift_preserves_greedy_policy(
            steps in prop::collection::vec((0usize..4, 0usize..2, -1.0f64..1.0, 0usize..4), 1..200),
            shift in -5.0f64..5.0,
            gamma in 0.0f64..0.9,
        ) {
            // Starting from Q = c / (1 - gamma), rewards shifted by c keep the
            // table shifted by exactly c / (1 - gamma).
            let alpha = 0.5;
            let offset = shift / (1.0 - gamma);
            let mut base = QTable::new(2);
            let mut shifted = QTable::new(2);
            for s in 0..4 {
                for a in 0..2 {
                    shifted.set(s, a, offset);
                }
            }
            for (s, a, r, s2) in steps {
                tql_update(&mut base, s, a, r, s2, alpha, gamma);
                tql_update(&mut shifted, s, a, r + shift, s2, alpha, gamma);
            }
            for (b, s) in base.values().iter().zip(shifted.values()) {
                prop_assert!((s - b - offset).abs() < 1e-9 * (1.0 + offset.abs()));
            }
        }
    }
}
