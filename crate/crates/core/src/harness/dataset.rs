//! Count datasets: one record per line,
//! `<circuit>\t<n00> <n01> <n10> <n11>`, after `#`-prefixed `key: value`
//! header lines. Qubit 1 (Ca) is the first outcome bit.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::circuit::{parse_circuit, Circuit, ParseError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub circuit: Circuit,
    pub counts: [u64; 4],
}

impl Record {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn frequencies(&self) -> [f64; 4] {
        let n = self.total() as f64;
        self.counts.map(|c| c as f64 / n)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountDataset {
    /// Ordered header entries; `seed`, `backend` and `timestamp` are the
    /// conventional keys.
    pub metadata: Vec<(String, String)>,
    pub records: Vec<Record>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    Circuit { line: usize, source: ParseError },
    #[error("file is truncated: {0}")]
    Partial(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

const RECORDS_KEY: &str = "records";

impl CountDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.metadata.push((key.into(), value)),
        }
    }

    pub fn push(&mut self, circuit: Circuit, counts: [u64; 4]) {
        self.records.push(Record { circuit, counts });
    }

    /// Text form; a `records` header guards against truncation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.metadata.iter().filter(|(k, _)| k != RECORDS_KEY) {
            if v.is_empty() {
                let _ = writeln!(out, "# {k}");
            } else {
                let _ = writeln!(out, "# {k}: {v}");
            }
        }
        let _ = writeln!(out, "# {RECORDS_KEY}: {}", self.records.len());
        for r in &self.records {
            let [a, b, c, d] = r.counts;
            let _ = writeln!(out, "{}\t{a} {b} {c} {d}", r.circuit);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DatasetError> {
        if !text.is_empty() && !text.ends_with('\n') {
            return Err(DatasetError::Partial("last line is not terminated".into()));
        }
        let mut ds = CountDataset::new();
        let mut declared: Option<usize> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |message: String| DatasetError::Malformed { line, message };
            if let Some(h) = raw.strip_prefix('#') {
                let h = h.strip_prefix(' ').unwrap_or(h);
                let (k, v) = h.split_once(": ").unwrap_or((h, ""));
                if k == RECORDS_KEY {
                    declared = Some(v.parse().map_err(|_| bad(format!("bad record count {v:?}")))?);
                } else {
                    ds.metadata.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            if raw.trim().is_empty() {
                continue;
            }
            let (circ, counts) = raw.split_once('\t').ok_or_else(|| bad("expected <circuit>\\t<counts>".into()))?;
            let circuit = parse_circuit(circ).map_err(|source| DatasetError::Circuit { line, source })?;
            let fields: Vec<&str> = counts.split(' ').collect();
            if fields.len() != 4 {
                return Err(bad(format!("expected 4 counts, found {}", fields.len())));
            }
            let mut parsed = [0u64; 4];
            for (slot, f) in parsed.iter_mut().zip(&fields) {
                if f.starts_with('-') {
                    return Err(bad(format!("negative count {f}")));
                }
                *slot = f.parse().map_err(|_| bad(format!("invalid count {f:?}")))?;
            }
            if parsed.iter().sum::<u64>() == 0 {
                return Err(bad("record has zero total count".into()));
            }
            ds.records.push(Record { circuit, counts: parsed });
        }
        if let Some(n) = declared {
            if n != ds.records.len() {
                return Err(DatasetError::Partial(format!("header declares {n} records, found {}", ds.records.len())));
            }
        }
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
        Self::from_text(&text)
    }

    pub fn store(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_text())
            .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_is_header_only() {
        let text = CountDataset::new().to_text();
        assert!(text.lines().all(|l| l.starts_with('#')));
        assert_eq!(CountDataset::from_text(&text).unwrap(), CountDataset::new());
    }

    #[test]
    fn round_trip_is_exact() {
        let mut ds = CountDataset::new();
        ds.set_meta("seed", "7");
        ds.set_meta("backend", "sim");
        for i in 0..1000u64 {
            let c = parse_circuit(if i % 3 == 0 { "{}" } else { "Gxp:1 Gzz (Gym:2)^2" }).unwrap();
            ds.push(c, [i, 1, 2 * i, 3]);
        }
        let text = ds.to_text();
        let back = CountDataset::from_text(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_bad_lines() {
        let e = CountDataset::from_text("Gzz\t10 -1 0 0\n").unwrap_err();
        assert!(matches!(e, DatasetError::Malformed { line: 1, .. }), "{e}");
        assert!(e.to_string().contains("negative"));
        let e = CountDataset::from_text("# seed: 1\nGzz 10 1 0 0\n").unwrap_err();
        assert!(matches!(e, DatasetError::Malformed { line: 2, .. }));
        let e = CountDataset::from_text("Gq:3\t1 0 0 0\n").unwrap_err();
        assert!(matches!(e, DatasetError::Circuit { line: 1, .. }));
        let e = CountDataset::from_text("Gzz\t0 0 0 0\n").unwrap_err();
        assert!(matches!(e, DatasetError::Malformed { .. }));
    }

    #[test]
    fn rejects_partial_files() {
        let mut ds = CountDataset::new();
        ds.push(parse_circuit("Gzz").unwrap(), [1, 2, 3, 4]);
        ds.push(parse_circuit("Gzz Gzz").unwrap(), [1, 2, 3, 4]);
        let text = ds.to_text();
        let cut = &text[..text.len() - 1];
        assert!(matches!(CountDataset::from_text(cut), Err(DatasetError::Partial(_))));
        let first_line_end = text.find("Gzz Gzz").unwrap();
        assert!(matches!(CountDataset::from_text(&text[..first_line_end]), Err(DatasetError::Partial(_))));
    }
}
