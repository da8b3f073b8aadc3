//! Trace, heatmap and summary files, and the on-disk layout of an experiment.

mod heatmap;
mod summary;
mod tables;
mod trace;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use heatmap::{Heatmap, Scale, LOG_FLOOR};
pub use summary::{quantile, BoxStats, MeanStd, MetricSummary, Summary};
pub use tables::{
    write_tables, DELTA_BOX_FILE, DELTA_TABLE_FILE, DISTRIBUTION_FILE, RPDI_BOX_FILE,
    RPDI_TABLE_FILE,
};
pub use trace::{read_trace, write_trace, TRACE_HEADER};

use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, RunResult};
use crate::metrics::{analysis_window, window_metrics, RunClassification};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance written as the first line of every CSV output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_hash: String,
    pub version: String,
}

impl Metadata {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            config_hash: config_hash.into(),
            version: VERSION.to_string(),
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# config_hash={},version={}",
            self.config_hash, self.version
        )
    }

    pub fn parse_comment(line: &str) -> Option<Self> {
        let body = line.strip_prefix('#')?.trim();
        let body = body.split_whitespace().next()?;
        let mut hash = None;
        let mut version = None;
        for part in body.split(',') {
            match part.split_once('=')? {
                ("config_hash", v) => hash = Some(v.to_string()),
                ("version", v) => version = Some(v.to_string()),
                _ => {}
            }
        }
        Some(Self {
            config_hash: hash?,
            version: version?,
        })
    }
}

pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const HEATMAP_LINEAR_FILE: &str = "heatmap_linear.csv";
pub const HEATMAP_LOG_FILE: &str = "heatmap_log.csv";
pub const RUNS_DIR: &str = "runs";

pub fn trace_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(RUNS_DIR).join(format!("seed_{seed}.trace.csv"))
}

pub fn result_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(RUNS_DIR).join(format!("seed_{seed}.result.json"))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes the configuration, then one trace and one result file per run.
pub fn write_runs(dir: &Path, config: &ExperimentConfig, results: &[RunResult]) -> Result<()> {
    create_dir(&dir.join(RUNS_DIR))?;
    config.save(&dir.join(CONFIG_FILE))?;
    let meta = Metadata::new(config.hash());
    for r in results {
        if let Some(trace) = &r.trace {
            write_trace(&trace_path(dir, r.seed), &trace.records, &meta)?;
        }
        let path = result_path(dir, r.seed);
        let text = serde_json::to_string_pretty(r)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Heatmap pooled over the analysis windows of every completed run.
pub fn batch_heatmap(config: &ExperimentConfig, results: &[RunResult]) -> Result<Heatmap> {
    let env = config.environment()?;
    let windows: Vec<Vec<[f64; 2]>> = results
        .iter()
        .filter(|r| r.is_completed())
        .filter_map(|r| r.trace.as_ref())
        .map(|t| {
            Ok(analysis_window(&t.records)?
                .iter()
                .map(|r| r.prices)
                .collect())
        })
        .collect::<Result<_>>()?;
    Heatmap::from_prices(
        env.space(),
        config.grid_size,
        windows.iter().map(Vec::as_slice),
    )
}

/// Writes runs, the summary and both heatmap scales. The heatmaps are skipped
/// when no run completed.
pub fn write_batch(
    dir: &Path,
    config: &ExperimentConfig,
    results: &[RunResult],
) -> Result<Summary> {
    write_runs(dir, config, results)?;
    let summary = Summary::from_results(results)?;
    summary.write(&dir.join(SUMMARY_FILE))?;
    if summary.completed > 0 {
        let heatmap = batch_heatmap(config, results)?;
        let meta = Metadata::new(config.hash());
        heatmap.write(&dir.join(HEATMAP_LINEAR_FILE), Scale::Linear, &meta)?;
        heatmap.write(&dir.join(HEATMAP_LOG_FILE), Scale::Log, &meta)?;
    }
    Ok(summary)
}

/// A stored run checked against its trace. `matches` requires bit-equal
/// window statistics, not only the same label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCheck {
    pub seed: u64,
    pub stored: Option<RunClassification>,
    pub recomputed: Option<RunClassification>,
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reanalysis {
    pub config_hash: String,
    pub runs: Vec<RunCheck>,
    pub summary: Summary,
}

impl Reanalysis {
    pub fn all_match(&self) -> bool {
        self.runs.iter().all(|r| r.matches)
    }
}

/// Recomputes every stored run's metrics from its trace file and compares
/// them with the stored result.
pub fn reanalyze(dir: &Path) -> Result<Reanalysis> {
    let config = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
    let hash = config.hash();
    let eq = config.market.equilibrium_info()?;
    let mut runs = Vec::new();
    let mut results = Vec::new();
    for &seed in &config.seeds {
        let path = result_path(dir, seed);
        if !path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut stored: RunResult =
            serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))?;
        if stored.config_hash != hash {
            return Err(Error::parse(
                &path,
                "result belongs to a different configuration".to_string(),
            ));
        }
        let stored_class = stored.classification;
        let stored_agents = stored.agents;
        let recomputed = if stored.is_completed() {
            let tpath = trace_path(dir, seed);
            let (meta, records) = read_trace(&tpath)?;
            if meta.is_some_and(|m| m.config_hash != hash) {
                return Err(Error::parse(
                    &tpath,
                    "trace belongs to a different configuration".to_string(),
                ));
            }
            let m = window_metrics(&records, &eq)?;
            stored.classification = Some(m.classification);
            stored.agents = Some(m.agents);
            Some(m.classification)
        } else {
            None
        };
        runs.push(RunCheck {
            seed,
            stored: stored_class,
            recomputed,
            matches: stored_class == recomputed && stored_agents == stored.agents,
        });
        results.push(stored);
    }
    let summary = Summary::from_results(&results)?;
    Ok(Reanalysis {
        config_hash: hash,
        runs,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metadata_line_round_trips() {
        let m = Metadata::new("deadbeef");
        assert_eq!(Metadata::parse_comment(&m.comment_line()), Some(m.clone()));
        assert_eq!(
            Metadata::parse_comment(&(m.comment_line() + " scale=log10")),
            Some(m)
        );
        assert_eq!(Metadata::parse_comment("t,p0"), None);
        assert_eq!(Metadata::parse_comment("# nothing"), None);
    }
}
