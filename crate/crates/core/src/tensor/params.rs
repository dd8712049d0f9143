//! Named parameter storage with per-parameter optimizer accumulators, plus
//! the text checkpoint format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::mat::Mat;

/// Parameter value paired with its optimizer accumulator of identical shape.
#[derive(Debug, Clone)]
struct Entry {
    value: Mat,
    acc: Mat,
}

/// All trainable parameters of a model, keyed by name. Shapes are fixed at
/// insertion; names iterate in sorted order so every pass over the store is
/// deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Mat) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Config(format!("parameter '{name}' already exists")));
        }
        let acc = Mat::zeros(value.rows(), value.cols());
        self.entries.insert(name.to_string(), Entry { value, acc });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Mat> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Mat> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.data().len()).sum()
    }

    pub fn acc(&self, name: &str) -> Result<&Mat> {
        self.entries
            .get(name)
            .map(|e| &e.acc)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))
    }

    /// Copy parameter values (not accumulators) from another store with the
    /// exact same names and shapes. Used for target-network syncs.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Config(
                "parameter stores have different entry counts".into(),
            ));
        }
        for (name, entry) in &mut self.entries {
            let src = other.get(name)?;
            if src.shape() != entry.value.shape() {
                return Err(Error::Config(format!("shape mismatch for '{name}'")));
            }
            entry.value.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// One RMSProp update: acc <- decay*acc + (1-decay)*g^2, then
    /// p <- p - lr*g/sqrt(acc+eps), elementwise over every gradient entry.
    pub fn rmsprop_step(
        &mut self,
        grads: &Gradients,
        lr: f64,
        decay: f64,
        eps: f64,
    ) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {lr}")));
        }
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::Config(format!("decay must be in (0,1), got {decay}")));
        }
        if !(eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
        for (name, g) in grads.iter() {
            let entry = self
                .entries
                .get_mut(name)
                .ok_or_else(|| Error::Config(format!("gradient for unknown parameter '{name}'")))?;
            if g.shape() != entry.value.shape() {
                return Err(Error::Config(format!(
                    "gradient shape {:?} does not match parameter '{name}' shape {:?}",
                    g.shape(),
                    entry.value.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::TrainingAbort(format!(
                    "non-finite gradient for parameter '{name}'"
                )));
            }
            let acc = entry.acc.data_mut();
            let p = entry.value.data_mut();
            for ((pv, av), &gv) in p.iter_mut().zip(acc.iter_mut()).zip(g.data()) {
                *av = decay * *av + (1.0 - decay) * gv * gv;
                *pv -= lr * gv / (*av + eps).sqrt();
            }
        }
        Ok(())
    }

    /// Write a versioned text checkpoint. Values use shortest round-trip
    /// decimal formatting, so reading the file back restores every f64
    /// bit-identically.
    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("coopq-checkpoint v1\n");
        for (name, entry) in &self.entries {
            writeln!(
                out,
                "param {} {} {}",
                name,
                entry.value.rows(),
                entry.value.cols()
            )
            .unwrap();
            write_row(&mut out, "v", entry.value.data());
            write_row(&mut out, "a", entry.acc.data());
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn load_text(path: &Path) -> Result<ParamStore> {
        let f = std::fs::File::open(path)?;
        let reader = BufReader::new(f);
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, message: "empty checkpoint file".into() })?;
        let header = header?;
        if header.trim() != "coopq-checkpoint v1" {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported checkpoint header '{header}'"),
            });
        }
        let mut store = ParamStore::new();
        let mut pending: Option<(String, usize, usize, Option<Vec<f64>>)> = None;
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("param ") {
                if pending.is_some() {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "new param before previous one finished".into(),
                    });
                }
                let mut parts = rest.split_whitespace();
                let name = parts
                    .next()
                    .ok_or_else(|| Error::Parse { line: lineno, message: "missing name".into() })?;
                let rows = parse_usize(parts.next(), lineno)?;
                let cols = parse_usize(parts.next(), lineno)?;
                pending = Some((name.to_string(), rows, cols, None));
            } else if let Some(rest) = line.strip_prefix("v ") {
                let p = pending.as_mut().ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: "values before a param header".into(),
                })?;
                p.3 = Some(parse_f64_row(rest, p.1 * p.2, lineno)?);
            } else if let Some(rest) = line.strip_prefix("a ") {
                let (name, rows, cols, values) = pending.take().ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: "accumulators before a param header".into(),
                })?;
                let values = values.ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: "accumulators before values".into(),
                })?;
                let acc = parse_f64_row(rest, rows * cols, lineno)?;
                let value = Mat::from_vec(rows, cols, values)?;
                let acc = Mat::from_vec(rows, cols, acc)?;
                store.insert(&name, value)?;
                store
                    .entries
                    .get_mut(&name)
                    .unwrap()
                    .acc
                    .data_mut()
                    .copy_from_slice(acc.data());
            } else {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unrecognized checkpoint line '{line}'"),
                });
            }
        }
        if pending.is_some() {
            return Err(Error::Parse { line: 0, message: "truncated checkpoint".into() });
        }
        Ok(store)
    }

    /// Verify this store has exactly the same names and shapes as `other`.
    pub fn check_layout_matches(&self, other: &ParamStore) -> Result<()> {
        for (name, e) in &self.entries {
            let o = other.get(name)?;
            if o.shape() != e.value.shape() {
                return Err(Error::Config(format!(
                    "checkpoint shape {:?} for '{name}' does not match expected {:?}",
                    o.shape(),
                    e.value.shape()
                )));
            }
        }
        if self.entries.len() != other.entries.len() {
            return Err(Error::Config(
                "checkpoint has extra parameters not present in the model".into(),
            ));
        }
        Ok(())
    }
}

fn write_row(out: &mut String, tag: &str, data: &[f64]) {
    out.push_str(tag);
    for v in data {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
}

fn parse_usize(tok: Option<&str>, line: usize) -> Result<usize> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse { line, message: "expected an integer dimension".into() })
}

fn parse_f64_row(text: &str, expected: usize, line: usize) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> =
        text.split_whitespace().map(|t| t.parse::<f64>()).collect();
    let vals = vals.map_err(|e| Error::Parse { line, message: format!("bad number: {e}") })?;
    if vals.len() != expected {
        return Err(Error::Parse {
            line,
            message: format!("expected {expected} numbers, found {}", vals.len()),
        });
    }
    Ok(vals)
}

/// Per-parameter gradients accumulated as sums over a batch. Keys must be a
/// subset of the owning store's keys with matching shapes.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: BTreeMap<String, Mat>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zeroed gradient buffers matching every parameter in `params`.
    pub fn zeros_like(params: &ParamStore) -> Self {
        let mut grads = BTreeMap::new();
        for name in params.names() {
            let m = params.get(name).unwrap();
            grads.insert(name.to_string(), Mat::zeros(m.rows(), m.cols()));
        }
        Gradients { grads }
    }

    pub fn get(&self, name: &str) -> Result<&Mat> {
        self.grads
            .get(name)
            .ok_or_else(|| Error::Config(format!("no gradient for '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Mat> {
        self.grads
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("no gradient for '{name}'")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_finite(&self) -> bool {
        self.grads.values().all(|m| m.is_finite())
    }

    /// Scale every entry, used to turn batch sums into means.
    pub fn scale(&mut self, s: f64) {
        for m in self.grads.values_mut() {
            for v in m.data_mut() {
                *v *= s;
            }
        }
    }
}
