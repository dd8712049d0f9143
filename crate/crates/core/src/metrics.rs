//! Metrics sink: one JSON line per evaluation point, plus the CSV rows the
//! intrinsic-reward curve dump uses. Readers tolerate a torn final line.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsRecord {
    pub env_step: u64,
    pub mean_return: f64,
    pub win_rate: f64,
    pub mean_ep_len: f64,
    pub loss_td: f64,
    pub loss_i_mean: f64,
    pub epsilon: f64,
    /// Fraction of rule-firing evaluation steps whose chosen action carries
    /// positive preference weight; absent when no rule fired.
    pub consistency: Option<f64>,
}

pub struct MetricsWriter {
    out: std::io::BufWriter<std::fs::File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let f = std::fs::File::create(path)?;
        Ok(MetricsWriter { out: std::io::BufWriter::new(f) })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::InvalidInput(format!("metrics serialization: {e}")))?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let f = std::fs::File::open(path)?;
    let reader = BufReader::new(f);
    let mut records = Vec::new();
    let mut lines = reader.lines().peekable();
    while let Some(line) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<MetricsRecord>(&line) {
            Ok(r) => records.push(r),
            Err(e) => {
                if lines.peek().is_none() {
                    break; // torn final write
                }
                return Err(Error::InvalidInput(format!("bad metrics line: {e}")));
            }
        }
    }
    Ok(records)
}

/// One row of the intrinsic-reward curve dump.
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub step: usize,
    pub agent: usize,
    pub intrinsic_reward: f64,
    pub rule: Option<String>,
}

pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut out = String::from("step,agent,intrinsic_reward,rule\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.step,
            r.agent,
            r.intrinsic_reward,
            r.rule.as_deref().unwrap_or("")
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_round_trip_with_torn_tail() {
        let dir = std::env::temp_dir().join("coopq_metrics_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.jsonl");
        {
            let mut w = MetricsWriter::create(&path).unwrap();
            for step in [0u64, 1000, 2000] {
                w.write(&MetricsRecord {
                    env_step: step,
                    mean_return: 1.5,
                    win_rate: 0.25,
                    mean_ep_len: 42.0,
                    loss_td: 0.1,
                    loss_i_mean: 0.01,
                    epsilon: 0.5,
                    consistency: if step == 0 { None } else { Some(0.8) },
                })
                .unwrap();
            }
        }
        {
            use std::io::Write as _;
            let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
            f.write_all(b"{\"env_step\":3000,\"mean_ret").unwrap();
        }
        let records = read_metrics(&path).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].consistency, None);
        assert_eq!(records[2].consistency, Some(0.8));
    }
}
