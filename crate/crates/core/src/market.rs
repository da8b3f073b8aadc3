//! Bertrand duopoly demand models and their symmetric equilibria.
//!
//! Three variants are supported: the standard homogeneous-goods model with
//! linear demand `1 - p`, the capacity-constrained Edgeworth variant, and the
//! logit model with an outside option. All functions are pure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NASH_TOLERANCE: f64 = 1e-9;
const NASH_MAX_ITER: usize = 10_000;
const NASH_DAMPING: f64 = 0.5;
const MONOPOLY_TOLERANCE: f64 = 1e-9;
const MONOPOLY_MAX_ITER: usize = 500;

fn default_capacity() -> f64 {
    0.6
}
fn default_logit_cost() -> f64 {
    1.0
}
fn default_quality() -> f64 {
    2.0
}
fn default_substitutability() -> f64 {
    0.25
}

/// A duopoly market. Both firms share the same parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum MarketModel {
    /// Winner-takes-all linear demand `1 - p`, equal split on ties.
    Standard {
        #[serde(default)]
        cost: f64,
    },
    /// Linear demand with per-firm capacity `capacity > 0.5`.
    Edgeworth {
        #[serde(default)]
        cost: f64,
        #[serde(default = "default_capacity")]
        capacity: f64,
    },
    /// Logit shares with an outside option of utility zero.
    Logit {
        #[serde(default = "default_logit_cost")]
        cost: f64,
        #[serde(default = "default_quality")]
        quality: f64,
        #[serde(default = "default_substitutability")]
        substitutability: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketVariant {
    Standard,
    Edgeworth,
    Logit,
}

impl MarketVariant {
    pub const ALL: [MarketVariant; 3] = [
        MarketVariant::Standard,
        MarketVariant::Edgeworth,
        MarketVariant::Logit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MarketVariant::Standard => "standard",
            MarketVariant::Edgeworth => "edgeworth",
            MarketVariant::Logit => "logit",
        }
    }

    /// The model with the default experimental parameters for this variant.
    pub fn default_model(self) -> MarketModel {
        match self {
            MarketVariant::Standard => MarketModel::standard(),
            MarketVariant::Edgeworth => MarketModel::edgeworth(),
            MarketVariant::Logit => MarketModel::logit(),
        }
    }
}

impl std::str::FromStr for MarketVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" | "bertrand" => Ok(MarketVariant::Standard),
            "edgeworth" => Ok(MarketVariant::Edgeworth),
            "logit" => Ok(MarketVariant::Logit),
            other => Err(Error::Usage(format!(
                "unknown market `{other}` (expected standard, edgeworth or logit)"
            ))),
        }
    }
}

/// Symmetric Nash and monopoly outcomes, all per firm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumInfo {
    pub nash_price: f64,
    pub monopoly_price: f64,
    pub nash_profit: f64,
    pub monopoly_profit: f64,
}

impl MarketModel {
    pub fn standard() -> Self {
        MarketModel::Standard { cost: 0.0 }
    }

    pub fn edgeworth() -> Self {
        MarketModel::Edgeworth {
            cost: 0.0,
            capacity: default_capacity(),
        }
    }

    pub fn logit() -> Self {
        MarketModel::Logit {
            cost: default_logit_cost(),
            quality: default_quality(),
            substitutability: default_substitutability(),
        }
    }

    pub fn variant(&self) -> MarketVariant {
        match self {
            MarketModel::Standard { .. } => MarketVariant::Standard,
            MarketModel::Edgeworth { .. } => MarketVariant::Edgeworth,
            MarketModel::Logit { .. } => MarketVariant::Logit,
        }
    }

    pub fn cost(&self) -> f64 {
        match *self {
            MarketModel::Standard { cost }
            | MarketModel::Edgeworth { cost, .. }
            | MarketModel::Logit { cost, .. } => cost,
        }
    }

    /// Checks the parameter invariants of the variant.
    ///
    /// For Edgeworth the capacity must exceed one half, so joint capacity
    /// covers total demand at every admissible price and the monopoly
    /// outcome is the unconstrained one.
    pub fn validate(&self) -> Result<()> {
        let cost = self.cost();
        if !cost.is_finite() || cost < 0.0 {
            return Err(Error::InvalidModel(format!(
                "marginal cost must be finite and >= 0, got {cost}"
            )));
        }
        match *self {
            MarketModel::Standard { cost } | MarketModel::Edgeworth { cost, .. } if cost >= 1.0 => {
                Err(Error::InvalidModel(format!(
                    "linear demand requires marginal cost < 1, got {cost}"
                )))
            }
            MarketModel::Edgeworth { capacity, .. }
                if !(capacity > 0.5 && capacity.is_finite()) =>
            {
                Err(Error::InvalidModel(format!(
                    "edgeworth capacity must be > 0.5, got {capacity}"
                )))
            }
            MarketModel::Logit {
                quality,
                substitutability,
                ..
            } => {
                if !(substitutability > 0.0 && substitutability.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "logit substitutability must be > 0, got {substitutability}"
                    )));
                }
                if !quality.is_finite() {
                    return Err(Error::InvalidModel("logit quality must be finite".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Admissible price interval, `None` when any finite price is allowed.
    pub fn price_range(&self) -> Option<(f64, f64)> {
        match self {
            MarketModel::Standard { .. } | MarketModel::Edgeworth { .. } => Some((0.0, 1.0)),
            MarketModel::Logit { .. } => None,
        }
    }

    fn check_price(&self, what: &'static str, p: f64) -> Result<()> {
        match self.price_range() {
            Some((lower, upper)) if !(lower..=upper).contains(&p) => Err(Error::Domain {
                what,
                value: p,
                lower,
                upper,
            }),
            None if !p.is_finite() => Err(Error::Domain {
                what,
                value: p,
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
            }),
            _ => Ok(()),
        }
    }

    /// Quantity demanded from a firm charging `own` while its rival charges `other`.
    pub fn demand(&self, own: f64, other: f64) -> Result<f64> {
        self.check_price("own price", own)?;
        self.check_price("rival price", other)?;
        Ok(self.demand_unchecked(own, other))
    }

    /// Demands of both firms for the price pair `(p0, p1)`.
    pub fn demands(&self, p0: f64, p1: f64) -> Result<(f64, f64)> {
        self.check_price("price of firm 0", p0)?;
        self.check_price("price of firm 1", p1)?;
        Ok((self.demand_unchecked(p0, p1), self.demand_unchecked(p1, p0)))
    }

    fn demand_unchecked(&self, own: f64, other: f64) -> f64 {
        match *self {
            MarketModel::Standard { .. } => {
                if own < other {
                    1.0 - own
                } else if own == other {
                    0.5 * (1.0 - own)
                } else {
                    0.0
                }
            }
            MarketModel::Edgeworth { capacity, .. } => {
                if own < other {
                    capacity.min(1.0 - own)
                } else if own == other {
                    0.5 * (1.0 - own)
                } else {
                    (1.0 - own - capacity).max(0.0)
                }
            }
            MarketModel::Logit {
                quality,
                substitutability,
                ..
            } => {
                let u_own = (quality - own) / substitutability;
                let u_other = (quality - other) / substitutability;
                // shift by the largest utility (outside option included) before exponentiating
                let shift = u_own.max(u_other).max(0.0);
                let e_own = (u_own - shift).exp();
                let e_other = (u_other - shift).exp();
                e_own / (e_own + e_other + (-shift).exp())
            }
        }
    }

    /// `(price - cost) * demand`; negative when pricing below cost.
    pub fn profit(&self, price: f64, demand: f64) -> f64 {
        (price - self.cost()) * demand
    }

    /// Per-firm demand when both firms charge `p`.
    pub fn symmetric_demand(&self, p: f64) -> f64 {
        self.demand_unchecked(p, p)
    }

    /// Per-firm profit when both firms charge `p`.
    pub fn symmetric_profit(&self, p: f64) -> f64 {
        self.profit(p, self.symmetric_demand(p))
    }

    /// Symmetric Nash equilibrium price.
    ///
    /// Linear-demand variants price at marginal cost. For logit demand the
    /// first-order condition `p = c + mu / (1 - d(p, p))` is iterated with
    /// damping 0.5 from `p = c + mu`.
    pub fn solve_nash(&self) -> Result<f64> {
        self.validate()?;
        match *self {
            MarketModel::Standard { cost } | MarketModel::Edgeworth { cost, .. } => Ok(cost),
            MarketModel::Logit {
                cost,
                substitutability,
                ..
            } => {
                let fixed_point =
                    |p: f64| cost + substitutability / (1.0 - self.symmetric_demand(p));
                let mut p = cost + substitutability;
                for _ in 0..NASH_MAX_ITER {
                    let next = (1.0 - NASH_DAMPING) * p + NASH_DAMPING * fixed_point(p);
                    if (next - p).abs() < NASH_TOLERANCE {
                        return Ok(next);
                    }
                    p = next;
                }
                Err(Error::NoConvergence {
                    solver: "logit nash fixed point",
                    iterations: NASH_MAX_ITER,
                    residual: (fixed_point(p) - p).abs(),
                })
            }
        }
    }

    /// Symmetric joint-profit-maximizing price.
    pub fn solve_monopoly(&self) -> Result<f64> {
        self.validate()?;
        match *self {
            MarketModel::Standard { cost } | MarketModel::Edgeworth { cost, .. } => {
                Ok(0.5 * (1.0 + cost))
            }
            MarketModel::Logit {
                cost,
                quality,
                substitutability,
                ..
            } => {
                // log-concave in p, so golden-section search on a wide bracket is safe
                let upper = quality.max(cost) + 40.0 * substitutability;
                golden_section_max(|p| self.symmetric_profit(p), cost, upper)
            }
        }
    }

    pub fn equilibrium_info(&self) -> Result<EquilibriumInfo> {
        let nash_price = self.solve_nash()?;
        let monopoly_price = self.solve_monopoly()?;
        Ok(EquilibriumInfo {
            nash_price,
            monopoly_price,
            nash_profit: self.symmetric_profit(nash_price),
            monopoly_profit: self.symmetric_profit(monopoly_price),
        })
    }
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> Result<f64> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..MONOPOLY_MAX_ITER {
        if (b - a).abs() < MONOPOLY_TOLERANCE {
            return Ok(0.5 * (a + b));
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    Err(Error::NoConvergence {
        solver: "golden-section monopoly search",
        iterations: MONOPOLY_MAX_ITER,
        residual: (b - a).abs(),
    })
}
