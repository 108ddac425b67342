#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlgcn::graph::normalize_snapshots;
use tlgcn::tensor::{CsrMatrix, SparseSnapshots, Tensor3};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, dims: [usize; 3]) -> Tensor3 {
    Tensor3::from_fn(dims, |_, _, _| rng.gen_range(-1.0..1.0))
}

/// Binary directed adjacency, each off-diagonal entry present with prob `p`.
pub fn random_adjacency(rng: &mut impl Rng, n: usize, t_slots: usize, p: f64) -> SparseSnapshots {
    let slices = (0..t_slots)
        .map(|_| {
            let dense: Vec<f64> = (0..n * n)
                .map(|k| if k / n != k % n && rng.gen_bool(p) { 1.0 } else { 0.0 })
                .collect();
            CsrMatrix::from_dense(n, &dense).unwrap()
        })
        .collect();
    SparseSnapshots::new(n, slices).unwrap()
}

pub fn random_normalized(rng: &mut impl Rng, n: usize, t_slots: usize) -> SparseSnapshots {
    let p = rng.gen_range(0.1..0.9);
    normalize_snapshots(&random_adjacency(rng, n, t_slots, p)).unwrap()
}
