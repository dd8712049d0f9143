//! JSON-lines trajectory dumps: one record per (agent, step) with the
//! named observation features, the availability mask, and the chosen
//! action. Rule extraction reads these files back.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub episode: u64,
    pub step: usize,
    pub agent: usize,
    pub features: BTreeMap<String, f64>,
    pub avail: Vec<bool>,
    pub action: String,
}

pub struct TraceWriter<W: Write> {
    out: W,
}

impl TraceWriter<std::io::BufWriter<std::fs::File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let f = std::fs::File::create(path)?;
        Ok(TraceWriter { out: std::io::BufWriter::new(f) })
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter { out }
    }

    pub fn write(&mut self, record: &TraceRecord) -> Result<()> {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::InvalidInput(format!("trace serialization: {e}")))?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Read a dump, skipping a trailing partial line (crash tolerance).
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let f = std::fs::File::open(path)?;
    let reader = BufReader::new(f);
    let mut records = Vec::new();
    let mut lines = reader.lines().enumerate().peekable();
    while let Some((idx, line)) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TraceRecord>(&line) {
            Ok(r) => records.push(r),
            Err(e) => {
                let is_last = lines.peek().is_none();
                if is_last {
                    break; // torn final write
                }
                return Err(Error::Parse { line: idx + 1, message: format!("bad trace record: {e}") });
            }
        }
    }
    Ok(records)
}
