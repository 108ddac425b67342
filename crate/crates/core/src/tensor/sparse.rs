use serde::{Deserialize, Serialize};

use super::Tensor3;
use crate::error::{Error, Result};

/// Square compressed-row matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let m = Self {
            n,
            row_ptr,
            col_idx,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from `(row, col, value)` triplets; repeated coordinates are summed
    /// in input order. Columns within each row come out sorted.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= n || c >= n) {
            return Err(Error::invalid(format!(
                "entry ({r}, {c}) out of range for {n}x{n} matrix"
            )));
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = triplets[k];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::new(n, row_ptr, col_idx, values)
    }

    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::dims(format!("{n}x{n} dense block has {} values", dense.len())));
        }
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = dense[i * n + j];
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &triplets)
    }

    pub fn validate(&self) -> Result<()> {
        if self.row_ptr.len() != self.n + 1 || self.row_ptr[0] != 0 {
            return Err(Error::invalid("row offsets must have n+1 entries starting at 0"));
        }
        if self.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("row offsets must be nondecreasing"));
        }
        let nnz = *self.row_ptr.last().unwrap();
        if nnz != self.col_idx.len() || nnz != self.values.len() {
            return Err(Error::invalid("row offsets disagree with stored entry count"));
        }
        if self.col_idx.iter().any(|&c| c >= self.n) {
            return Err(Error::invalid("column index out of range"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite sparse value"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[s..e].iter().copied().zip(self.values[s..e].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, v)| v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[i * self.n + j] += v;
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol))
    }

    /// `out = self * h` for a row-major `n x cols` block `h`.
    pub(crate) fn mul_dense_into(&self, h: &[f64], cols: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let dst = &mut out[i * cols..(i + 1) * cols];
            for (j, a) in self.row(i) {
                let src = &h[j * cols..(j + 1) * cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
    }

    /// `out = self^T * h`, scattering each stored entry once.
    pub(crate) fn mul_dense_transposed_into(&self, h: &[f64], cols: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let src = &h[i * cols..(i + 1) * cols];
            for (j, a) in self.row(i) {
                let dst = &mut out[j * cols..(j + 1) * cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
    }

    /// Sparse linear combination `sum_k weights[k] * mats[k]`.
    ///
    /// The output pattern is the union of the input patterns. For each
    /// output entry the terms are accumulated in ascending `k`, matching
    /// the order of the dense M-transform.
    pub(crate) fn linear_combination(n: usize, terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut scratch: Vec<(usize, usize, f64)> = Vec::new();
        for i in 0..n {
            scratch.clear();
            for (k, &(w, m)) in terms.iter().enumerate() {
                scratch.extend(m.row(i).map(|(c, v)| (c, k, w * v)));
            }
            scratch.sort_by_key(|&(c, k, _)| (c, k));
            let mut prev: Option<usize> = None;
            for &(c, _, v) in &scratch {
                if prev == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(0.0 + v);
                    prev = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// One square sparse matrix per time slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSnapshots {
    n: usize,
    slices: Vec<CsrMatrix>,
}

impl SparseSnapshots {
    pub fn new(n: usize, slices: Vec<CsrMatrix>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::invalid("snapshot sequence needs at least one slot"));
        }
        for (t, s) in slices.iter().enumerate() {
            if s.n() != n {
                return Err(Error::dims(format!("slot {t} is {}x{}, expected {n}x{n}", s.n(), s.n())));
            }
            s.validate()?;
        }
        Ok(Self { n, slices })
    }

    pub fn identity(n: usize, t_slots: usize) -> Self {
        Self {
            n,
            slices: vec![CsrMatrix::identity(n); t_slots],
        }
    }

    pub fn from_dense(a: &Tensor3) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::dims("adjacency slices must be square"));
        }
        let slices = (0..a.slots())
            .map(|t| CsrMatrix::from_dense(a.rows(), a.slice(t)))
            .collect::<Result<_>>()?;
        Self::new(a.rows(), slices)
    }

    pub fn to_dense(&self) -> Tensor3 {
        let mut data = Vec::with_capacity(self.n * self.n * self.slices.len());
        for s in &self.slices {
            data.extend(s.to_dense());
        }
        Tensor3::from_raw([self.n, self.n, self.slices.len()], data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_slots(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, t: usize) -> &CsrMatrix {
        &self.slices[t]
    }

    pub fn slices(&self) -> &[CsrMatrix] {
        &self.slices
    }

    pub fn nnz(&self) -> usize {
        self.slices.iter().map(CsrMatrix::nnz).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.slices.iter().all(|s| s.is_symmetric(tol))
    }

    pub(crate) fn from_slices_unchecked(n: usize, slices: Vec<CsrMatrix>) -> Self {
        Self { n, slices }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 2, 4.0)])
            .unwrap();
        assert_eq!(m.row_ptr(), &[0, 1, 3, 3]);
        assert_eq!(m.col_idx(), &[1, 0, 2]);
        assert_eq!(m.values(), &[2.0, 3.0, 5.0]);
    }

    #[test]
    fn invariants_checked() {
        assert!(CsrMatrix::from_triplets(2, &[(0, 2, 1.0)]).is_err());
        assert!(CsrMatrix::new(2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(2, vec![0, 1, 2], vec![0, 5], vec![1.0, 1.0]).is_err());
        assert!(SparseSnapshots::new(3, vec![CsrMatrix::empty(2)]).is_err());
    }

    #[test]
    fn transposed_product_matches_dense() {
        let m = CsrMatrix::from_triplets(3, &[(0, 1, 2.0), (2, 0, -1.0), (1, 1, 0.5)]).unwrap();
        let h = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = [0.0; 6];
        m.mul_dense_transposed_into(&h, 2, &mut out);
        let d = m.to_dense();
        for j in 0..3 {
            for c in 0..2 {
                let want: f64 = (0..3).map(|i| d[i * 3 + j] * h[i * 2 + c]).sum();
                assert_eq!(out[j * 2 + c], want);
            }
        }
    }
}
