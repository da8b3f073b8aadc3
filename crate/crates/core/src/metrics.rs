//! Window statistics that classify a run as competitive, collusive or dispersed.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env::StepRecord;
use crate::error::{Error, Result};
use crate::market::EquilibriumInfo;

/// Number of final steps every metric is computed over.
pub const WINDOW: usize = 10_000;
/// `eta` at or above this marks a run as dispersed.
pub const DISPERSION_THRESHOLD: f64 = 0.2;
/// `kappa` below this marks a converged run as competitive.
pub const COLLUSION_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Competition,
    Collusion,
    Dispersion,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Competition, Label::Collusion, Label::Dispersion];
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Competition => "Competition",
            Label::Collusion => "Collusion",
            Label::Dispersion => "Dispersion",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunClassification {
    pub eta: f64,
    /// Absent for dispersed runs.
    pub kappa: Option<f64>,
    pub label: Label,
}

/// Per-agent window means of the normalized price and profit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub rpdi: [f64; 2],
    pub delta: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub classification: RunClassification,
    pub agents: AgentMetrics,
}

/// The last `WINDOW` entries of `rows`.
pub fn analysis_window<T>(rows: &[T]) -> Result<&[T]> {
    if rows.len() < WINDOW {
        return Err(Error::WindowTooShort {
            needed: WINDOW,
            got: rows.len(),
        });
    }
    Ok(&rows[rows.len() - WINDOW..])
}

fn check_gap(low: f64, high: f64, what: &'static str) -> Result<f64> {
    let gap = high - low;
    if !(gap > 0.0) || !gap.is_finite() {
        return Err(Error::Domain {
            what,
            value: gap,
            lower: 0.0,
            upper: f64::INFINITY,
        });
    }
    Ok(gap)
}

/// Mean absolute price gap over the analysis window, in units of `p_m - p_n`.
pub fn eta(prices: &[[f64; 2]], p_n: f64, p_m: f64) -> Result<f64> {
    let gap = check_gap(p_n, p_m, "monopoly minus Nash price")?;
    let w = analysis_window(prices)?;
    Ok(w.iter().map(|p| (p[0] - p[1]).abs() / gap).sum::<f64>() / WINDOW as f64)
}

/// Mean excess of the average price over `p_n`, in units of `p_m - p_n`.
pub fn kappa(prices: &[[f64; 2]], p_n: f64, p_m: f64) -> Result<f64> {
    let gap = check_gap(p_n, p_m, "monopoly minus Nash price")?;
    let w = analysis_window(prices)?;
    Ok(w.iter()
        .map(|p| (p[0] + p[1] - 2.0 * p_n) / (2.0 * gap))
        .sum::<f64>()
        / WINDOW as f64)
}

pub fn rpdi(price: f64, p_n: f64, p_m: f64) -> f64 {
    (price - p_n) / (p_m - p_n)
}

pub fn delta(profit: f64, pi_n: f64, pi_m: f64) -> f64 {
    (profit - pi_n) / (pi_m - pi_n)
}

/// Dispersion when `eta >= 0.2`; otherwise competition when `kappa < 0.05`, else collusion.
pub fn label_for(eta: f64, kappa: f64) -> Label {
    if eta >= DISPERSION_THRESHOLD {
        Label::Dispersion
    } else if kappa < COLLUSION_THRESHOLD {
        Label::Competition
    } else {
        Label::Collusion
    }
}

pub fn classify(prices: &[[f64; 2]], eq: &EquilibriumInfo) -> Result<RunClassification> {
    let e = eta(prices, eq.nash_price, eq.monopoly_price)?;
    let k = kappa(prices, eq.nash_price, eq.monopoly_price)?;
    let label = label_for(e, k);
    Ok(RunClassification {
        eta: e,
        kappa: (label != Label::Dispersion).then_some(k),
        label,
    })
}

pub fn agent_metrics(records: &[StepRecord], eq: &EquilibriumInfo) -> Result<AgentMetrics> {
    check_gap(
        eq.nash_price,
        eq.monopoly_price,
        "monopoly minus Nash price",
    )?;
    check_gap(
        eq.nash_profit,
        eq.monopoly_profit,
        "monopoly minus Nash profit",
    )?;
    let w = analysis_window(records)?;
    let n = WINDOW as f64;
    let mut out = AgentMetrics {
        rpdi: [0.0; 2],
        delta: [0.0; 2],
    };
    for i in 0..2 {
        let mean_price = w.iter().map(|r| r.prices[i]).sum::<f64>() / n;
        let mean_profit = w.iter().map(|r| r.rewards[i]).sum::<f64>() / n;
        out.rpdi[i] = rpdi(mean_price, eq.nash_price, eq.monopoly_price);
        out.delta[i] = delta(mean_profit, eq.nash_profit, eq.monopoly_profit);
    }
    Ok(out)
}

pub fn window_metrics(records: &[StepRecord], eq: &EquilibriumInfo) -> Result<WindowMetrics> {
    let prices: Vec<[f64; 2]> = analysis_window(records)?.iter().map(|r| r.prices).collect();
    Ok(WindowMetrics {
        classification: classify(&prices, eq)?,
        agents: agent_metrics(records, eq)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::MarketModel;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PN: f64 = 1.4729266600306228;
    const PM: f64 = 1.9249809190715765;

    fn constant(p0: f64, p1: f64) -> Vec<[f64; 2]> {
        vec![[p0, p1]; WINDOW]
    }

    fn logit_eq() -> EquilibriumInfo {
        MarketModel::logit().equilibrium_info().unwrap()
    }

    #[test]
    fn eta_examples() {
        assert_eq!(eta(&constant(1.6, 1.6), PN, PM).unwrap(), 0.0);
        assert!((eta(&constant(PN, PM), PN, PM).unwrap() - 1.0).abs() < 1e-12);
        let half = (PM - PN) / 2.0;
        let alternating: Vec<[f64; 2]> = (0..WINDOW)
            .map(|t| {
                if t % 2 == 0 {
                    [PN, PN + half]
                } else {
                    [PN, PN]
                }
            })
            .collect();
        assert!((eta(&alternating, PN, PM).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(&constant(PN, PN), PN, PM).unwrap(), 0.0);
        assert!((kappa(&constant(PM, PM), PN, PM).unwrap() - 1.0).abs() < 1e-12);
        let mid = 0.5 * (PN + PM);
        assert!((kappa(&constant(mid, mid), PN, PM).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn window_uses_only_the_tail_and_rejects_short_runs() {
        let mut prices = constant(PM, PN);
        prices.extend(constant(PN, PN));
        assert_eq!(eta(&prices, PN, PM).unwrap(), 0.0);
        assert!(matches!(
            eta(&prices[..WINDOW - 1], PN, PM),
            Err(Error::WindowTooShort { needed: WINDOW, got }) if got == WINDOW - 1
        ));
        assert!(kappa(&[], PN, PM).is_err());
    }

    #[test]
    fn degenerate_benchmarks_are_rejected() {
        assert!(eta(&constant(0.0, 0.0), 0.5, 0.5).is_err());
        assert!(kappa(&constant(0.0, 0.0), 0.6, 0.5).is_err());
    }

    #[test]
    fn rpdi_and_delta_examples() {
        assert_eq!(rpdi(PN, PN, PM), 0.0);
        assert_eq!(rpdi(PM, PN, PM), 1.0);
        assert!((rpdi(1.9702, 1.473, 1.925) - 1.1).abs() < 1e-12);
        let std = MarketModel::standard().equilibrium_info().unwrap();
        assert_eq!(
            delta(std.nash_profit, std.nash_profit, std.monopoly_profit),
            0.0
        );
        assert_eq!(
            delta(std.monopoly_profit, std.nash_profit, std.monopoly_profit),
            1.0
        );
        assert_eq!(delta(0.0625, std.nash_profit, std.monopoly_profit), 0.5);
    }

    #[test]
    fn classify_examples() {
        let eq = logit_eq();
        let c = classify(&constant(eq.nash_price, eq.nash_price), &eq).unwrap();
        assert_eq!(c.label, Label::Competition);
        let c = classify(&constant(eq.monopoly_price, eq.monopoly_price), &eq).unwrap();
        assert_eq!(c.label, Label::Collusion);
        assert_eq!(c.eta, 0.0);
        assert!((c.kappa.unwrap() - 1.0).abs() < 1e-12);
        let c = classify(&constant(eq.nash_price, eq.monopoly_price), &eq).unwrap();
        assert_eq!(c.label, Label::Dispersion);
        assert!((c.eta - 1.0).abs() < 1e-12);
        assert_eq!(c.kappa, None);
    }

    #[test]
    fn thresholds_are_closed_on_the_upper_side() {
        assert_eq!(label_for(0.2, 0.0), Label::Dispersion);
        assert_eq!(label_for(0.2 - 1e-15, 0.0), Label::Competition);
        assert_eq!(label_for(0.0, 0.05), Label::Collusion);
        assert_eq!(label_for(0.0, 0.05 - 1e-15), Label::Competition);
        // A window whose eta is exactly 0.2: the gap is one fifth of p_m - p_n on every step.
        let prices = constant(1.0, 1.2);
        let e = eta(&prices, 0.0, 1.0).unwrap();
        assert!((e - 0.2).abs() < 1e-12);
    }

    #[test]
    fn agent_metrics_on_constant_monopoly_window() {
        let eq = logit_eq();
        let m = MarketModel::logit();
        let (d, _) = m.demands(eq.monopoly_price, eq.monopoly_price).unwrap();
        let r = m.profit(eq.monopoly_price, d);
        let records: Vec<StepRecord> = (0..WINDOW as u64 + 5)
            .map(|t| StepRecord {
                t,
                prices: [eq.monopoly_price; 2],
                demands: [d; 2],
                rewards: [r; 2],
            })
            .collect();
        let a = agent_metrics(&records, &eq).unwrap();
        for i in 0..2 {
            assert!((a.rpdi[i] - 1.0).abs() < 1e-9);
            assert!((a.delta[i] - 1.0).abs() < 1e-9);
        }
    }

    fn random_window(seed: u64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..WINDOW)
            .map(|_| [rng.random_range(1.3..2.1), rng.random_range(1.3..2.1)])
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kappa_is_mean_of_agent_rpdis(seed in any::<u64>()) {
            let prices = random_window(seed);
            let k = kappa(&prices, PN, PM).unwrap();
            let mean = |i: usize| prices.iter().map(|p| p[i]).sum::<f64>() / WINDOW as f64;
            let avg_rpdi = 0.5 * (rpdi(mean(0), PN, PM) + rpdi(mean(1), PN, PM));
            prop_assert!((k - avg_rpdi).abs() < 1e-12);
        }

        #[test]
        fn eta_ignores_agent_order(seed in any::<u64>()) {
            let prices = random_window(seed);
            let swapped: Vec<[f64; 2]> = prices.iter().map(|p| [p[1], p[0]]).collect();
            prop_assert_eq!(eta(&prices, PN, PM).unwrap(), eta(&swapped, PN, PM).unwrap());
        }

        #[test]
        fn affine_rescaling_leaves_eta_and_kappa(seed in any::<u64>(), a in 0.01f64..100.0, b in -50.0f64..50.0) {
            let prices = random_window(seed);
            let mapped: Vec<[f64; 2]> = prices.iter().map(|p| [a * p[0] + b, a * p[1] + b]).collect();
            let (pn, pm) = (a * PN + b, a * PM + b);
            let e0 = eta(&prices, PN, PM).unwrap();
            let e1 = eta(&mapped, pn, pm).unwrap();
            let k0 = kappa(&prices, PN, PM).unwrap();
            let k1 = kappa(&mapped, pn, pm).unwrap();
            prop_assert!((e0 - e1).abs() < 1e-9, "{} vs {}", e0, e1);
            prop_assert!((k0 - k1).abs() < 1e-9, "{} vs {}", k0, k1);
        }
    }
}
