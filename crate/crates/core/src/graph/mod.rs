//! Temporal edge lists turned into snapshot graphs and supervised splits.

mod load;
mod prepared;

pub use load::{load_edge_list, parse_edge_list, Delimiter, EdgeList, NodeIds, TemporalEdge};
pub use prepared::PreparedDataset;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{CsrMatrix, SparseSnapshots};

/// How repeated `(src, dst)` pairs inside one slot collapse to one target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregator {
    Last,
    Mean,
    Sum,
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::Last => "last",
            Aggregator::Mean => "mean",
            Aggregator::Sum => "sum",
        })
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "last" => Ok(Aggregator::Last),
            "mean" => Ok(Aggregator::Mean),
            "sum" => Ok(Aggregator::Sum),
            other => Err(Error::invalid(format!("unknown aggregator `{other}`"))),
        }
    }
}

/// A supervised weighted-edge record `(i, j, t, y_ijt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub src: usize,
    pub dst: usize,
    pub slot: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicGraph {
    pub n: usize,
    pub t_slots: usize,
    /// Binary directed presence, one slice per slot.
    pub adjacency: SparseSnapshots,
    pub observations: Vec<Observation>,
}

/// Equal-width, right-closed time bins over `[min, max]`.
///
/// Bin `s` covers `(min + s·w, min + (s+1)·w]` with `w = (max-min)/T`; the
/// first bin also takes `min` itself. A zero-width range maps to slot 0.
pub fn slot_of(ts: f64, min: f64, max: f64, t_slots: usize) -> usize {
    let range = max - min;
    if range <= 0.0 {
        return 0;
    }
    let pos = (ts - min) / range * t_slots as f64;
    let slot = pos.ceil() as isize - 1;
    slot.clamp(0, t_slots as isize - 1) as usize
}

pub fn bin_snapshots(edges: &EdgeList, t_slots: usize, aggregator: Aggregator) -> Result<DynamicGraph> {
    if t_slots == 0 {
        return Err(Error::invalid("need at least one time slot"));
    }
    if edges.edges.is_empty() {
        return Err(Error::EmptyInput("no edges to bin".into()));
    }
    let (min, max) = edges
        .edges
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            (lo.min(e.timestamp), hi.max(e.timestamp))
        });

    // (slot, src, dst) -> (running value, count)
    let mut cells: BTreeMap<(usize, usize, usize), (f64, usize)> = BTreeMap::new();
    for e in &edges.edges {
        let slot = slot_of(e.timestamp, min, max, t_slots);
        let cell = cells.entry((slot, e.src, e.dst)).or_insert((0.0, 0));
        cell.0 = match aggregator {
            Aggregator::Last => e.weight,
            Aggregator::Mean | Aggregator::Sum => cell.0 + e.weight,
        };
        cell.1 += 1;
    }
    let observations: Vec<Observation> = cells
        .into_iter()
        .map(|((slot, src, dst), (v, count))| Observation {
            src,
            dst,
            slot,
            weight: match aggregator {
                Aggregator::Mean => v / count as f64,
                _ => v,
            },
        })
        .collect();
    let n = edges.n();
    let adjacency = presence_adjacency(n, t_slots, observations.iter())?;
    Ok(DynamicGraph {
        n,
        t_slots,
        adjacency,
        observations,
    })
}

/// Binary adjacency with `a_ijt = 1` for every listed observation.
pub fn presence_adjacency<'a>(
    n: usize,
    t_slots: usize,
    obs: impl Iterator<Item = &'a Observation>,
) -> Result<SparseSnapshots> {
    let mut per_slot: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); t_slots];
    for o in obs {
        if o.slot >= t_slots || o.src >= n || o.dst >= n {
            return Err(Error::invalid(format!(
                "observation ({}, {}, {}) outside {n} nodes x {t_slots} slots",
                o.src, o.dst, o.slot
            )));
        }
        per_slot[o.slot].push((o.src, o.dst, 1.0));
    }
    let slices = per_slot
        .into_iter()
        .map(|mut trip| {
            trip.sort_by_key(|&(i, j, _)| (i, j));
            trip.dedup_by_key(|&mut (i, j, _)| (i, j));
            CsrMatrix::from_triplets(n, &trip)
        })
        .collect::<Result<_>>()?;
    SparseSnapshots::new(n, slices)
}

/// `D^{-1/2} (A + I) D^{-1/2}` per slot after symmetrizing `A` by `max(a_ij, a_ji)`.
pub fn symmetrize_and_normalize(g: &DynamicGraph) -> Result<SparseSnapshots> {
    normalize_snapshots(&g.adjacency)
}

pub fn normalize_snapshots(adjacency: &SparseSnapshots) -> Result<SparseSnapshots> {
    let n = adjacency.n();
    let slices = crate::par::map_range(adjacency.t_slots(), |t| normalize_slice(adjacency.slice(t)));
    SparseSnapshots::new(n, slices.into_iter().collect::<Result<_>>()?)
}

fn normalize_slice(a: &CsrMatrix) -> Result<CsrMatrix> {
    let n = a.n();
    let mut sym: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        for (j, v) in a.row(i) {
            for key in [(i, j), (j, i)] {
                let e = sym.entry(key).or_insert(v);
                *e = e.max(v);
            }
        }
    }
    for i in 0..n {
        *sym.entry((i, i)).or_insert(0.0) += 1.0;
    }
    let mut degree = vec![0.0; n];
    for (&(i, _), &v) in &sym {
        degree[i] += v;
    }
    // d_i * d_j commutes exactly, so the output is bitwise symmetric.
    let triplets: Vec<(usize, usize, f64)> = sym
        .into_iter()
        .map(|((i, j), v)| (i, j, v / (degree[i] * degree[j]).sqrt()))
        .collect();
    CsrMatrix::from_triplets(n, &triplets)
}

/// Train (Λ), validation (Ω) and test partitions as observation indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        })
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(SplitName::Train),
            "validation" | "val" | "valid" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

impl SplitSet {
    pub fn indices(&self, which: SplitName) -> &[usize] {
        match which {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }
}

/// Seeded shuffle, then contiguous 80/10/10 cut.
pub fn split_observations(g: &DynamicGraph, seed: u64) -> Result<SplitSet> {
    split_indices(g.observations.len(), seed)
}

pub fn split_indices(count: usize, seed: u64) -> Result<SplitSet> {
    if count == 0 {
        return Err(Error::EmptyInput("no observations to split".into()));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (count * 8 + 5) / 10;
    let n_val = (count + 5) / 10;
    let test = order.split_off(n_train + n_val);
    let validation = order.split_off(n_train);
    Ok(SplitSet {
        train: order,
        validation,
        test,
        seed,
    })
}

/// Copy of `g` whose adjacency keeps only training observations.
pub fn mask_adjacency_to_train(g: &DynamicGraph, split: &SplitSet) -> Result<DynamicGraph> {
    let train = split
        .train
        .iter()
        .map(|&k| {
            g.observations.get(k).ok_or_else(|| {
                Error::invalid(format!("split index {k} beyond {} observations", g.observations.len()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DynamicGraph {
        n: g.n,
        t_slots: g.t_slots,
        adjacency: presence_adjacency(g.n, g.t_slots, train.into_iter())?,
        observations: g.observations.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(rows: &[(usize, usize, f64, f64)]) -> EdgeList {
        let n = rows.iter().map(|r| r.0.max(r.1) + 1).max().unwrap_or(0);
        EdgeList {
            edges: rows
                .iter()
                .map(|&(src, dst, weight, timestamp)| TemporalEdge {
                    src,
                    dst,
                    weight,
                    timestamp,
                })
                .collect(),
            labels: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    #[test]
    fn equal_width_binning() {
        assert_eq!(
            [0.0, 50.0, 100.0].map(|ts| slot_of(ts, 0.0, 100.0, 2)),
            [0, 0, 1]
        );
        let g = bin_snapshots(&edges(&[(0, 1, 1.0, 0.0), (1, 2, 1.0, 50.0), (0, 2, 1.0, 100.0)]), 2, Aggregator::Last)
            .unwrap();
        let slots: Vec<_> = g.observations.iter().map(|o| (o.src, o.dst, o.slot)).collect();
        assert_eq!(slots, vec![(0, 1, 0), (1, 2, 0), (0, 2, 1)]);
    }

    #[test]
    fn single_edge_single_slot() {
        let g = bin_snapshots(&edges(&[(0, 1, 4.0, 7.0)]), 1, Aggregator::Sum).unwrap();
        assert_eq!(g.observations.len(), 1);
        assert_eq!(g.observations[0].slot, 0);
        assert_eq!(g.adjacency.slice(0).get(0, 1), 1.0);
    }

    #[test]
    fn aggregators() {
        let rows = [(0, 1, 2.0, 0.0), (0, 1, 4.0, 1.0), (1, 0, 9.0, 1.0)];
        let w = |agg| {
            let g = bin_snapshots(&edges(&rows), 1, agg).unwrap();
            g.observations.iter().map(|o| o.weight).collect::<Vec<_>>()
        };
        assert_eq!(w(Aggregator::Mean), vec![3.0, 9.0]);
        assert_eq!(w(Aggregator::Sum), vec![6.0, 9.0]);
        assert_eq!(w(Aggregator::Last), vec![4.0, 9.0]);
    }

    #[test]
    fn zero_slots_rejected() {
        assert!(matches!(
            bin_snapshots(&edges(&[(0, 1, 1.0, 0.0)]), 0, Aggregator::Last),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn normalization_small_cases() {
        let iso = SparseSnapshots::new(1, vec![CsrMatrix::empty(1)]).unwrap();
        assert_eq!(normalize_snapshots(&iso).unwrap().slice(0).to_dense(), vec![1.0]);

        let one = SparseSnapshots::new(2, vec![CsrMatrix::from_triplets(2, &[(0, 1, 1.0)]).unwrap()]).unwrap();
        let norm = normalize_snapshots(&one).unwrap();
        assert_eq!(norm.slice(0).to_dense(), vec![0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn split_sizes() {
        for (count, want) in [(10, (8, 1, 1)), (100, (80, 10, 10))] {
            let s = split_indices(count, 3).unwrap();
            assert_eq!((s.train.len(), s.validation.len(), s.test.len()), want);
        }
        assert_eq!(split_indices(57, 11).unwrap(), split_indices(57, 11).unwrap());
        assert_ne!(split_indices(57, 11).unwrap().train, split_indices(57, 12).unwrap().train);
        assert!(matches!(split_indices(0, 0), Err(Error::EmptyInput(_))));
        let tiny = split_indices(3, 0).unwrap();
        assert_eq!((tiny.train.len(), tiny.validation.len(), tiny.test.len()), (2, 0, 1));
    }

    #[test]
    fn split_is_a_partition() {
        for count in [10usize, 11, 19, 37, 101] {
            let s = split_indices(count, 5).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..count).collect::<Vec<_>>());
            let exact = count as f64 * 0.1;
            assert!((s.validation.len() as f64 - exact).abs() <= 1.0);
            assert!((s.test.len() as f64 - exact).abs() <= 1.0);
        }
    }

    #[test]
    fn masking() {
        let g = bin_snapshots(&edges(&[(0, 1, 1.0, 0.0)]), 1, Aggregator::Last).unwrap();
        let only_test = SplitSet {
            train: vec![],
            validation: vec![],
            test: vec![0],
            seed: 0,
        };
        let masked = mask_adjacency_to_train(&g, &only_test).unwrap();
        assert_eq!(masked.adjacency.nnz(), 0);
        assert_eq!(masked.observations, g.observations);
        let all_train = SplitSet {
            train: vec![0],
            validation: vec![],
            test: vec![],
            seed: 0,
        };
        assert_eq!(mask_adjacency_to_train(&g, &all_train).unwrap(), g);
    }

    #[test]
    fn masking_ten_edges() {
        let rows: Vec<_> = (0..10).map(|k| (k, (k + 1) % 11, 1.0, k as f64)).collect();
        let g = bin_snapshots(&edges(&rows), 1, Aggregator::Last).unwrap();
        let s = split_observations(&g, 42).unwrap();
        let masked = mask_adjacency_to_train(&g, &s).unwrap();
        let off_diag: usize = (0..g.n)
            .map(|i| masked.adjacency.slice(0).row(i).filter(|&(j, _)| j != i).count())
            .sum();
        assert_eq!(off_diag, 8);
    }
}
