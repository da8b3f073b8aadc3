//! The repeated pricing game: action spaces, state, and the simultaneous-move step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{EquilibriumInfo, MarketModel};

/// Discrete price grid or continuous price interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Discrete { m: usize },
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    kind: ActionKind,
    lower: f64,
    upper: f64,
    grid: Vec<f64>,
}

impl ActionSpace {
    pub fn new(kind: ActionKind, lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::Config(format!(
                "price bounds must be finite with lower < upper, got [{lower}, {upper}]"
            )));
        }
        let grid = match kind {
            ActionKind::Discrete { m } if m < 2 => {
                return Err(Error::Config(format!("price grid needs m >= 2, got {m}")))
            }
            ActionKind::Discrete { m } => {
                let mut grid: Vec<f64> = (0..m)
                    .map(|j| lower + j as f64 * (upper - lower) / (m - 1) as f64)
                    .collect();
                grid[m - 1] = upper;
                grid
            }
            ActionKind::Continuous => Vec::new(),
        };
        Ok(Self {
            kind,
            lower,
            upper,
            grid,
        })
    }

    pub fn discrete(lower: f64, upper: f64, m: usize) -> Result<Self> {
        Self::new(ActionKind::Discrete { m }, lower, upper)
    }

    pub fn continuous(lower: f64, upper: f64) -> Result<Self> {
        Self::new(ActionKind::Continuous, lower, upper)
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, ActionKind::Discrete { .. })
    }

    /// Number of grid points; `None` for a continuous space.
    pub fn num_actions(&self) -> Option<usize> {
        match self.kind {
            ActionKind::Discrete { m } => Some(m),
            ActionKind::Continuous => None,
        }
    }

    /// The `m` equidistant grid prices, endpoints included.
    pub fn price_grid(&self) -> Result<&[f64]> {
        match self.kind {
            ActionKind::Discrete { .. } => Ok(&self.grid),
            ActionKind::Continuous => Err(Error::Usage(
                "a continuous action space has no price grid".into(),
            )),
        }
    }

    /// Grid distance, or the full width for a continuous space.
    pub fn step_size(&self) -> f64 {
        match self.kind {
            ActionKind::Discrete { m } => (self.upper - self.lower) / (m - 1) as f64,
            ActionKind::Continuous => self.upper - self.lower,
        }
    }

    /// Index of a grid price. Matches bit patterns produced by this grid and
    /// tolerates round-off of a few ulps for prices computed elsewhere.
    pub fn grid_index(&self, price: f64) -> Option<usize> {
        let m = self.num_actions()?;
        let j = ((price - self.lower) / self.step_size()).round();
        if !(0.0..m as f64).contains(&j) {
            return None;
        }
        let j = j as usize;
        let scale = self.upper.abs().max(self.lower.abs()).max(1.0);
        ((self.grid[j] - price).abs() <= 1e-12 * scale).then_some(j)
    }

    /// Grid point closest to `price`.
    pub fn nearest_index(&self, price: f64) -> Option<usize> {
        let m = self.num_actions()?;
        let j = ((price - self.lower) / self.step_size()).round();
        Some(j.clamp(0.0, (m - 1) as f64) as usize)
    }

    pub fn contains(&self, price: f64) -> bool {
        price >= self.lower && price <= self.upper
    }

    /// Affine map of `[lower, upper]` onto `[0, 1]`.
    pub fn normalize(&self, price: f64) -> f64 {
        (price - self.lower) / (self.upper - self.lower)
    }

    /// Uniform draw from the action set.
    pub fn sample_price<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            ActionKind::Discrete { m } => self.grid[rng.random_range(0..m)],
            ActionKind::Continuous => rng.random_range(self.lower..=self.upper),
        }
    }
}

/// Price interval for logit demand: the Nash-to-monopoly range widened by
/// `zeta` times its length on both sides.
pub fn logit_bounds(eq: &EquilibriumInfo, zeta: f64) -> (f64, f64) {
    let width = eq.monopoly_price - eq.nash_price;
    (
        eq.nash_price - zeta * width,
        eq.monopoly_price + zeta * width,
    )
}

/// `[0, 1]` for the linear-demand variants, [`logit_bounds`] for logit.
pub fn price_bounds(model: &MarketModel, eq: &EquilibriumInfo, zeta: f64) -> (f64, f64) {
    match model.price_range() {
        Some(range) => range,
        None => logit_bounds(eq, zeta),
    }
}

/// An agent's move: a grid index or a raw price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Index(usize),
    Price(f64),
}

/// Both firms' prices from the previous period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub prev_prices: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub prices: [f64; 2],
    pub demands: [f64; 2],
    pub rewards: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct PricingEnv {
    model: MarketModel,
    equilibrium: EquilibriumInfo,
    space: ActionSpace,
    t: u64,
    clamped: u64,
}

impl PricingEnv {
    /// Environment with the conventional bounds for `model`.
    pub fn new(model: MarketModel, kind: ActionKind, zeta: f64) -> Result<Self> {
        if !(zeta >= 0.0 && zeta.is_finite()) {
            return Err(Error::Config(format!("zeta must be >= 0, got {zeta}")));
        }
        let equilibrium = model.equilibrium_info()?;
        let (lower, upper) = price_bounds(&model, &equilibrium, zeta);
        let space = ActionSpace::new(kind, lower, upper)?;
        Ok(Self::with_space(model, equilibrium, space))
    }

    pub fn with_space(
        model: MarketModel,
        equilibrium: EquilibriumInfo,
        space: ActionSpace,
    ) -> Self {
        Self {
            model,
            equilibrium,
            space,
            t: 0,
            clamped: 0,
        }
    }

    pub fn model(&self) -> &MarketModel {
        &self.model
    }

    pub fn equilibrium(&self) -> &EquilibriumInfo {
        &self.equilibrium
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    /// Next period index.
    pub fn time(&self) -> u64 {
        self.t
    }

    /// Continuous actions that had to be clamped into the price interval.
    pub fn clamp_count(&self) -> u64 {
        self.clamped
    }

    /// Random initial state, both prices drawn independently from the action set.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> EnvState {
        self.t = 0;
        self.clamped = 0;
        EnvState {
            prev_prices: [self.space.sample_price(rng), self.space.sample_price(rng)],
        }
    }

    /// Price an action stands for in this space.
    pub fn resolve(&mut self, action: Action) -> Result<f64> {
        let space = &self.space;
        match (space.kind, action) {
            (ActionKind::Discrete { m }, Action::Index(j)) => {
                if j < m {
                    Ok(space.grid[j])
                } else {
                    Err(Error::Domain {
                        what: "action index",
                        value: j as f64,
                        lower: 0.0,
                        upper: (m - 1) as f64,
                    })
                }
            }
            (ActionKind::Discrete { .. }, Action::Price(p)) => match space.grid_index(p) {
                Some(j) => Ok(space.grid[j]),
                None => Err(Error::Usage(format!("price {p} is not on the price grid"))),
            },
            (ActionKind::Continuous, Action::Price(p)) => {
                if !p.is_finite() {
                    return Err(Error::Domain {
                        what: "continuous price",
                        value: p,
                        lower: space.lower,
                        upper: space.upper,
                    });
                }
                if space.contains(p) {
                    Ok(p)
                } else {
                    self.clamped += 1;
                    Ok(p.clamp(space.lower, space.upper))
                }
            }
            (ActionKind::Continuous, Action::Index(_)) => Err(Error::Usage(
                "index actions are not valid in a continuous space".into(),
            )),
        }
    }

    /// Plays one period. Rewards depend only on the submitted prices.
    pub fn step(
        &mut self,
        state: &EnvState,
        a0: Action,
        a1: Action,
    ) -> Result<(EnvState, StepRecord)> {
        for &p in &state.prev_prices {
            if !self.space.contains(p) {
                return Err(Error::Domain {
                    what: "state price",
                    value: p,
                    lower: self.space.lower,
                    upper: self.space.upper,
                });
            }
        }
        let prices = [self.resolve(a0)?, self.resolve(a1)?];
        let (d0, d1) = self.model.demands(prices[0], prices[1])?;
        let record = StepRecord {
            t: self.t,
            prices,
            demands: [d0, d1],
            rewards: [
                self.model.profit(prices[0], d0),
                self.model.profit(prices[1], d1),
            ],
        };
        self.t += 1;
        Ok((
            EnvState {
                prev_prices: prices,
            },
            record,
        ))
    }
}
