use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Metadata;
use crate::env::ActionSpace;
use crate::error::{Error, Result};

/// Floor added before taking logarithms of occurrence ratios.
pub const LOG_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

/// Visit counts of `(p0, p1)` cells; rows index agent 0's price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub m: usize,
    pub counts: Vec<u64>,
    /// Lower edge (or grid price) of each bin.
    pub labels: Vec<f64>,
}

impl Heatmap {
    /// Bins price pairs from every run, grid cells for a grid and `m` equal-width
    /// bins for an interval.
    pub fn from_prices<'a>(
        space: &ActionSpace,
        m: usize,
        runs: impl IntoIterator<Item = &'a [[f64; 2]]>,
    ) -> Result<Self> {
        let (m, labels) = match space.price_grid() {
            Ok(grid) => (grid.len(), grid.to_vec()),
            Err(_) => {
                if m == 0 {
                    return Err(Error::Config("heatmap needs at least one bin".into()));
                }
                let w = (space.upper() - space.lower()) / m as f64;
                (m, (0..m).map(|j| space.lower() + j as f64 * w).collect())
            }
        };
        let bin = |p: f64| -> usize {
            match space.nearest_index(p) {
                Some(j) => j,
                None => {
                    let x = (p - space.lower()) / (space.upper() - space.lower()) * m as f64;
                    (x.floor().max(0.0) as usize).min(m - 1)
                }
            }
        };
        let mut counts = vec![0u64; m * m];
        for run in runs {
            for p in run {
                counts[bin(p[0]) * m + bin(p[1])] += 1;
            }
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::Config("heatmap input holds no states".into()));
        }
        Ok(Self { m, counts, labels })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn ratios(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    pub fn values(&self, scale: Scale) -> Vec<f64> {
        let r = self.ratios();
        match scale {
            Scale::Linear => r,
            Scale::Log => r.into_iter().map(|v| (v + LOG_FLOOR).log10()).collect(),
        }
    }

    /// CSV matrix with the bin labels as first row and first column.
    pub fn write(&self, path: &Path, scale: Scale, meta: &Metadata) -> Result<()> {
        let mut out = Vec::new();
        let scale_name = match scale {
            Scale::Linear => "linear",
            Scale::Log => "log10",
        };
        writeln!(out, "{} scale={scale_name}", meta.comment_line()).expect("write to memory");
        let labels: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        writeln!(out, "p0\\p1,{}", labels.join(",")).expect("write to memory");
        let v = self.values(scale);
        for (i, label) in labels.iter().enumerate() {
            let row: Vec<String> = v[i * self.m..(i + 1) * self.m]
                .iter()
                .map(|x| x.to_string())
                .collect();
            writeln!(out, "{label},{}", row.join(",")).expect("write to memory");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads the values matrix back from a file written by `write`.
    pub fn read_values(path: &Path) -> Result<Vec<Vec<f64>>> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        reader
            .records()
            .map(|row| {
                let row = row.map_err(|e| Error::parse(path, e.to_string()))?;
                row.iter()
                    .skip(1)
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|_| Error::parse(path, format!("bad cell `{v}`")))
                    })
                    .collect()
            })
            .collect()
    }
}
