use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Aggregator, DynamicGraph, Observation, SplitSet};
use crate::error::{Error, Result};
use crate::tensor::{CsrMatrix, SparseSnapshots};

pub const PREPARED_FORMAT: &str = "tlgcn-prepared/1";

/// Everything a training run needs, frozen after ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedDataset {
    pub format: String,
    pub source_name: String,
    pub source_sha256: String,
    pub raw_edge_count: usize,
    pub aggregator: Aggregator,
    pub split_policy: String,
    pub n: usize,
    pub t_slots: usize,
    pub node_labels: Vec<String>,
    pub observations: Vec<Observation>,
    /// Directed `(slot, src, dst)` presence entries of the full adjacency.
    pub adjacency: Vec<(usize, usize, usize)>,
    pub split: SplitSet,
}

impl PreparedDataset {
    #[allow(clippy::too_many_arguments)]
    pub fn from_graph(
        g: &DynamicGraph,
        split: SplitSet,
        node_labels: Vec<String>,
        aggregator: Aggregator,
        raw_edge_count: usize,
        source_name: impl Into<String>,
        source_sha256: impl Into<String>,
    ) -> Self {
        let adjacency = (0..g.t_slots)
            .flat_map(|t| {
                let s = g.adjacency.slice(t);
                (0..g.n).flat_map(move |i| s.row(i).map(move |(j, _)| (t, i, j)))
            })
            .collect();
        Self {
            format: PREPARED_FORMAT.to_string(),
            source_name: source_name.into(),
            source_sha256: source_sha256.into(),
            raw_edge_count,
            aggregator,
            split_policy: "random".to_string(),
            n: g.n,
            t_slots: g.t_slots,
            node_labels,
            observations: g.observations.clone(),
            adjacency,
            split,
        }
    }

    pub fn graph(&self) -> Result<DynamicGraph> {
        let mut per_slot: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); self.t_slots];
        for &(t, i, j) in &self.adjacency {
            let slot = per_slot
                .get_mut(t)
                .ok_or_else(|| Error::invalid(format!("adjacency slot {t} out of range")))?;
            slot.push((i, j, 1.0));
        }
        let slices = per_slot
            .iter()
            .map(|trip| CsrMatrix::from_triplets(self.n, trip))
            .collect::<Result<_>>()?;
        Ok(DynamicGraph {
            n: self.n,
            t_slots: self.t_slots,
            adjacency: SparseSnapshots::new(self.n, slices)?,
            observations: self.observations.clone(),
        })
    }

    /// Density as `|E| / N²` over the raw edge rows.
    pub fn density(&self) -> f64 {
        self.raw_edge_count as f64 / (self.n as f64 * self.n as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ds: PreparedDataset = serde_json::from_str(&text)?;
        if ds.format != PREPARED_FORMAT {
            return Err(Error::ConfigMismatch {
                field: "format",
                expected: PREPARED_FORMAT.into(),
                found: ds.format,
            });
        }
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let count = self.observations.len();
        let mut seen = vec![false; count];
        for &k in self.split.train.iter().chain(&self.split.validation).chain(&self.split.test) {
            if k >= count || std::mem::replace(&mut seen[k], true) {
                return Err(Error::invalid(format!("split index {k} invalid or repeated")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("split does not cover every observation"));
        }
        if self.node_labels.len() != self.n {
            return Err(Error::invalid("node label count differs from n"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{bin_snapshots, parse_edge_list, split_observations, Delimiter};
    use super::*;

    #[test]
    fn json_round_trip_rebuilds_graph() {
        let text: String = (0..12)
            .map(|k| format!("{},{},{},{}\n", k % 5, (k + 2) % 5, k as f64 * 0.3 - 1.1, k * 10))
            .collect();
        let el = parse_edge_list(text.as_bytes(), Delimiter::Auto).unwrap();
        let g = bin_snapshots(&el, 3, Aggregator::Mean).unwrap();
        let split = split_observations(&g, 9).unwrap();
        let ds = PreparedDataset::from_graph(&g, split, el.labels.clone(), Aggregator::Mean, 12, "x", "00");
        let back: PreparedDataset = serde_json::from_str(&ds.to_json().unwrap()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.graph().unwrap(), g);
    }
}
