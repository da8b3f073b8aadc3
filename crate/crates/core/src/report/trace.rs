use std::io::Write;
use std::path::Path;

use super::Metadata;
use crate::env::StepRecord;
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "t,p0,p1,d0,d1,r0,r1";

/// Writes one CSV row per record after a `#` metadata line and the header.
/// Floats use the shortest representation that parses back to the same value.
pub fn write_trace(path: &Path, records: &[StepRecord], meta: &Metadata) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", meta.comment_line()).map_err(io)?;
    writeln!(out, "{TRACE_HEADER}").map_err(io)?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.t, r.prices[0], r.prices[1], r.demands[0], r.demands[1], r.rewards[0], r.rewards[1]
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Parses a trace written by `write_trace`; the metadata line is optional.
pub fn read_trace(path: &Path) -> Result<(Option<Metadata>, Vec<StepRecord>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta = text.lines().next().and_then(Metadata::parse_comment);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
        return Err(Error::parse(
            path,
            format!("expected header `{TRACE_HEADER}`"),
        ));
    }
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::parse(path, e.to_string()))?;
        let bad = || Error::parse(path, format!("malformed trace row {}", line + 1));
        if row.len() != 7 {
            return Err(bad());
        }
        let f = |i: usize| row[i].parse::<f64>().map_err(|_| bad());
        records.push(StepRecord {
            t: row[0].parse().map_err(|_| bad())?,
            prices: [f(1)?, f(2)?],
            demands: [f(3)?, f(4)?],
            rewards: [f(5)?, f(6)?],
        });
    }
    Ok((meta, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> Metadata {
        Metadata::new("abc123")
    }

    #[test]
    fn three_steps_give_header_plus_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let recs: Vec<StepRecord> = (0..3)
            .map(|t| StepRecord {
                t,
                prices: [0.5, 1.0 / 3.0],
                demands: [0.0, 2.0 / 3.0],
                rewards: [0.0, 0.1 + 0.2],
            })
            .collect();
        write_trace(&path, &recs, &meta()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let data_lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data_lines.len(), 4);
        assert_eq!(data_lines[0], TRACE_HEADER);
        let (m, back) = read_trace(&path).unwrap();
        assert_eq!(m.unwrap().config_hash, "abc123");
        assert_eq!(back, recs);
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_trace(&path).is_err());
        std::fs::write(&path, format!("{TRACE_HEADER}\n0,1,2,3\n")).unwrap();
        assert!(read_trace(&path).is_err());
        assert!(matches!(
            read_trace(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn floats_round_trip_exactly(vals in prop::collection::vec(prop::array::uniform6(any::<f64>().prop_filter("finite", |v| v.is_finite())), 1..20)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.csv");
            let recs: Vec<StepRecord> = vals.iter().enumerate().map(|(t, v)| StepRecord {
                t: t as u64 * 1000,
                prices: [v[0], v[1]],
                demands: [v[2], v[3]],
                rewards: [v[4], v[5]],
            }).collect();
            write_trace(&path, &recs, &meta()).unwrap();
            let (_, back) = read_trace(&path).unwrap();
            prop_assert_eq!(back, recs);
        }
    }
}
