use std::io::Write;
use std::path::Path;

use super::{BoxStats, Metadata, MetricSummary, Summary};
use crate::error::{Error, Result};
use crate::metrics::Label;

pub const DISTRIBUTION_FILE: &str = "distribution.csv";
pub const RPDI_TABLE_FILE: &str = "rpdi.csv";
pub const DELTA_TABLE_FILE: &str = "delta.csv";
pub const RPDI_BOX_FILE: &str = "boxplot_rpdi.csv";
pub const DELTA_BOX_FILE: &str = "boxplot_delta.csv";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_lines(path: &Path, meta: &Metadata, header: &str, rows: Vec<String>) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{}", meta.comment_line()).expect("write to memory");
    writeln!(out, "{header}").expect("write to memory");
    for row in rows {
        writeln!(out, "{row}").expect("write to memory");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn per_agent_rows(summaries: &[Summary], pick: impl Fn(&Summary) -> &MetricSummary) -> Vec<String> {
    summaries
        .iter()
        .map(|s| {
            let m = pick(s);
            let [a, b] = m.per_agent;
            format!(
                "{},{},{},{},{},{}",
                s.algorithm.label(),
                s.market.name(),
                opt(a.map(|v| v.mean)),
                opt(a.map(|v| v.std)),
                opt(b.map(|v| v.mean)),
                opt(b.map(|v| v.std)),
            )
        })
        .collect()
}

fn box_rows(summaries: &[Summary], pick: impl Fn(&Summary) -> Option<BoxStats>) -> Vec<String> {
    summaries
        .iter()
        .map(|s| {
            let b = pick(s);
            let f = |g: fn(&BoxStats) -> f64| opt(b.as_ref().map(g));
            format!(
                "{},{},{},{},{},{},{},{},{}",
                s.algorithm.label(),
                s.market.name(),
                f(|b| b.min),
                f(|b| b.q1),
                f(|b| b.median),
                f(|b| b.q3),
                f(|b| b.max),
                f(|b| b.mean),
                f(|b| b.std),
            )
        })
        .collect()
}

/// Writes the cross-configuration tables: outcome distribution, per-agent
/// RPDI and profit gain, and pooled box statistics of both.
pub fn write_tables(dir: &Path, summaries: &[Summary]) -> Result<()> {
    if summaries.is_empty() {
        return Err(Error::Config("no summaries to tabulate".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Metadata::new(
        summaries
            .iter()
            .map(|s| &s.config_hash[..s.config_hash.len().min(12)])
            .collect::<Vec<_>>()
            .join("+"),
    );
    let dist: Vec<String> = summaries
        .iter()
        .map(|s| {
            let pct: Vec<String> = Label::ALL
                .iter()
                .map(|l| s.percentages[l].to_string())
                .collect();
            let cnt: Vec<String> = Label::ALL.iter().map(|l| s.counts[l].to_string()).collect();
            format!(
                "{},{},{},{},{},{}",
                s.algorithm.label(),
                s.market.name(),
                pct.join(","),
                cnt.join(","),
                s.completed,
                s.failed
            )
        })
        .collect();
    write_lines(
        &dir.join(DISTRIBUTION_FILE),
        &meta,
        "algorithm,market,competition_pct,collusion_pct,dispersion_pct,competition,collusion,dispersion,completed,failed",
        dist,
    )?;
    let agent_header = "algorithm,market,agent0_mean,agent0_std,agent1_mean,agent1_std";
    write_lines(
        &dir.join(RPDI_TABLE_FILE),
        &meta,
        agent_header,
        per_agent_rows(summaries, |s| &s.rpdi),
    )?;
    write_lines(
        &dir.join(DELTA_TABLE_FILE),
        &meta,
        agent_header,
        per_agent_rows(summaries, |s| &s.delta),
    )?;
    let box_header = "algorithm,market,min,q1,median,q3,max,mean,std";
    write_lines(
        &dir.join(RPDI_BOX_FILE),
        &meta,
        box_header,
        box_rows(summaries, |s| s.rpdi.boxplot),
    )?;
    write_lines(
        &dir.join(DELTA_BOX_FILE),
        &meta,
        box_header,
        box_rows(summaries, |s| s.delta.boxplot),
    )
}
