use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Aggregator;
use crate::error::{Error, Result};

/// One raw interaction `src -> dst` with its weight at `timestamp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Delimiter {
    Auto,
    Comma,
    Tab,
    Whitespace,
}

impl FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Delimiter::Auto),
            "csv" | "comma" => Ok(Delimiter::Comma),
            "tsv" | "tab" => Ok(Delimiter::Tab),
            "whitespace" | "ws" | "space" => Ok(Delimiter::Whitespace),
            other => Err(Error::invalid(format!("unknown delimiter `{other}`"))),
        }
    }
}

/// Edges in file order plus the dense-id to original-label mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeList {
    pub edges: Vec<TemporalEdge>,
    pub labels: Vec<String>,
}

impl EdgeList {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// `Sum` for interaction logs (every weight is 1, so sums count
    /// messages), `Last` for everything else (ratings keep the latest).
    pub fn default_aggregator(&self) -> Aggregator {
        if self.edges.iter().all(|e| e.weight == 1.0) {
            Aggregator::Sum
        } else {
            Aggregator::Last
        }
    }

    /// Re-indexes nodes. `Numeric` maps integer label `k` to `k - min`, so
    /// ids absent from the file become isolated nodes and `n` is the label
    /// range. `Auto` picks `Numeric` when every label is a non-negative
    /// integer and the range is at most ten times the distinct count.
    pub fn renumber(self, mode: NodeIds) -> Result<EdgeList> {
        let numeric: Option<Vec<u64>> = self.labels.iter().map(|l| l.parse::<u64>().ok()).collect();
        let use_numeric = match (mode, &numeric) {
            (NodeIds::Dense, _) => false,
            (NodeIds::Numeric, None) => {
                return Err(Error::invalid("numeric node ids need integer labels"));
            }
            (NodeIds::Numeric, Some(_)) => true,
            (NodeIds::Auto, None) => false,
            (NodeIds::Auto, Some(v)) => {
                let (lo, hi) = (v.iter().min().copied().unwrap_or(0), v.iter().max().copied().unwrap_or(0));
                (hi - lo) as usize + 1 <= 10 * v.len().max(1)
            }
        };
        let Some(values) = numeric.filter(|_| use_numeric) else {
            return Ok(self);
        };
        let lo = values.iter().copied().min().unwrap_or(0);
        let hi = values.iter().copied().max().unwrap_or(0);
        let remap: Vec<usize> = values.iter().map(|&v| (v - lo) as usize).collect();
        let edges = self
            .edges
            .into_iter()
            .map(|e| TemporalEdge {
                src: remap[e.src],
                dst: remap[e.dst],
                ..e
            })
            .collect();
        Ok(EdgeList {
            edges,
            labels: (lo..=hi).map(|v| v.to_string()).collect(),
        })
    }
}

/// How node labels become indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeIds {
    Auto,
    /// Order of first appearance.
    Dense,
    /// Integer labels offset by the smallest one.
    Numeric,
}

impl FromStr for NodeIds {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(NodeIds::Auto),
            "dense" => Ok(NodeIds::Dense),
            "numeric" => Ok(NodeIds::Numeric),
            other => Err(Error::invalid(format!("unknown node-id mode `{other}`"))),
        }
    }
}

pub fn load_edge_list(path: impl AsRef<Path>, delimiter: Delimiter) -> Result<EdgeList> {
    let file = File::open(path)?;
    parse_edge_list(BufReader::new(file), delimiter)
}

fn detect(line: &str) -> Delimiter {
    if line.contains(',') {
        Delimiter::Comma
    } else if line.contains('\t') {
        Delimiter::Tab
    } else {
        Delimiter::Whitespace
    }
}

fn split_fields(line: &str, d: Delimiter) -> Vec<&str> {
    match d {
        Delimiter::Comma => line.split(',').map(str::trim).collect(),
        Delimiter::Tab => line.split('\t').map(str::trim).collect(),
        _ => line.split_whitespace().collect(),
    }
}

/// Parses `src, dst, weight, timestamp` rows.
///
/// Rows with only three fields are read as `src, dst, timestamp` with unit
/// weight (interaction logs without a weight column). Lines starting with
/// `#` or `%` and blank lines are skipped; a first data row whose numeric
/// fields do not parse is treated as a header.
pub fn parse_edge_list<R: BufRead>(reader: R, delimiter: Delimiter) -> Result<EdgeList> {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut edges = Vec::new();
    let mut delim = delimiter;
    let mut seen_data_row = false;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        if delim == Delimiter::Auto {
            delim = detect(trimmed);
        }
        let fields = split_fields(trimmed, delim);
        let first_row = !seen_data_row;
        seen_data_row = true;

        let err = |msg: String| Error::Parse {
            line: lineno + 1,
            msg,
        };
        let (weight, ts) = match fields.len() {
            4 => (fields[2].parse::<f64>(), fields[3].parse::<f64>()),
            3 => (Ok(1.0), fields[2].parse::<f64>()),
            k => return Err(err(format!("expected 3 or 4 fields, found {k}"))),
        };
        let (weight, ts) = match (weight, ts) {
            (Ok(w), Ok(t)) => (w, t),
            _ if first_row => continue,
            (Err(e), _) => return Err(err(format!("bad weight `{}`: {e}", fields[2]))),
            (_, Err(e)) => return Err(err(format!("bad timestamp: {e}"))),
        };
        if !weight.is_finite() || !ts.is_finite() {
            return Err(err("weight and timestamp must be finite".into()));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(err("empty node id".into()));
        }
        let mut intern = |label: &str| {
            *ids.entry(label.to_string()).or_insert_with(|| {
                labels.push(label.to_string());
                labels.len() - 1
            })
        };
        let src = intern(fields[0]);
        let dst = intern(fields[1]);
        edges.push(TemporalEdge {
            src,
            dst,
            weight,
            timestamp: ts,
        });
    }
    if edges.is_empty() {
        return Err(Error::EmptyInput("edge list has no data rows".into()));
    }
    Ok(EdgeList { edges, labels })
}
