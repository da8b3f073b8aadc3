use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::Algorithm;
use crate::error::{Error, Result};
use crate::experiment::RunResult;
use crate::market::MarketVariant;
use crate::metrics::Label;

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

/// Five-number summary with linearly interpolated quartiles, plus mean and
/// population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl BoxStats {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        let ms = MeanStd::of(xs)?;
        Some(Self {
            min: s[0],
            q1: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            q3: quantile(&s, 0.75),
            max: s[s.len() - 1],
            mean: ms.mean,
            std: ms.std,
        })
    }
}

/// Quantile of sorted data, interpolating between the two nearest ranks.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-agent and pooled statistics of one window metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_agent: [Option<MeanStd>; 2],
    pub pooled: Option<MeanStd>,
    pub boxplot: Option<BoxStats>,
}

impl MetricSummary {
    fn of(values: [Vec<f64>; 2]) -> Self {
        let pooled: Vec<f64> = values.iter().flatten().copied().collect();
        Self {
            per_agent: [MeanStd::of(&values[0]), MeanStd::of(&values[1])],
            pooled: MeanStd::of(&pooled),
            boxplot: BoxStats::of(&pooled),
        }
    }
}

/// Outcome distribution and metric statistics over one batch of seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub config_hash: String,
    pub algorithm: Algorithm,
    pub market: MarketVariant,
    pub seeds: usize,
    pub completed: usize,
    pub failed: usize,
    /// Completed runs per label.
    pub counts: BTreeMap<Label, usize>,
    /// Share of completed runs per label, in percent.
    pub percentages: BTreeMap<Label, f64>,
    pub rpdi: MetricSummary,
    pub delta: MetricSummary,
}

impl Summary {
    pub fn from_results(results: &[RunResult]) -> Result<Self> {
        let first = results
            .first()
            .ok_or_else(|| Error::Config("no run results to summarize".into()))?;
        if results.iter().any(|r| r.config_hash != first.config_hash) {
            return Err(Error::Config(
                "run results come from different configurations".into(),
            ));
        }
        let mut counts: BTreeMap<Label, usize> = Label::ALL.iter().map(|&l| (l, 0)).collect();
        let mut rpdi = [Vec::new(), Vec::new()];
        let mut delta = [Vec::new(), Vec::new()];
        let mut completed = 0;
        for r in results.iter().filter(|r| r.is_completed()) {
            let (Some(c), Some(a)) = (r.classification, r.agents) else {
                continue;
            };
            completed += 1;
            *counts.entry(c.label).or_default() += 1;
            for i in 0..2 {
                rpdi[i].push(a.rpdi[i]);
                delta[i].push(a.delta[i]);
            }
        }
        let percentages = counts
            .iter()
            .map(|(&l, &n)| {
                let pct = if completed == 0 {
                    0.0
                } else {
                    100.0 * n as f64 / completed as f64
                };
                (l, pct)
            })
            .collect();
        Ok(Self {
            version: super::VERSION.to_string(),
            config_hash: first.config_hash.clone(),
            algorithm: first.algorithm,
            market: first.market,
            seeds: results.len(),
            completed,
            failed: results.len() - completed,
            counts,
            percentages,
            rpdi: MetricSummary::of(rpdi),
            delta: MetricSummary::of(delta),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}
