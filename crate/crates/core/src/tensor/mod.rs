//! Order-3 tensors and the M-product operator family.
//!
//! A [`Tensor3`] of dims `(d1, d2, d3)` is stored slot-major: the `d3`
//! frontal slices are laid out one after another, each a row-major
//! `d1 x d2` matrix. Every per-slot kernel therefore works on a contiguous
//! block, which is what the data-parallel paths split on.

mod ops;
mod sparse;
mod transform;

pub use ops::{
    facewise_product, facewise_product_nt, facewise_product_sparse,
    facewise_product_sparse_transposed, facewise_product_tn, m_product, m_transform,
    m_transform_adjoint, m_transform_sparse,
};
pub use sparse::{CsrMatrix, SparseSnapshots};
pub use transform::{make_m1, make_m2, MVariant, TransformMatrix};

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::dims(format!(
                "tensor of dims {dims:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at flat index {pos}")));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    /// Builds a tensor from `f(i, j, t)`.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for t in 0..dims[2] {
            for i in 0..dims[0] {
                for j in 0..dims[1] {
                    data.push(f(i, j, t));
                }
            }
        }
        Self { dims, data }
    }

    pub(crate) fn from_raw(dims: [usize; 3], data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims[0] * dims[1] * dims[2]);
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn rows(&self) -> usize {
        self.dims[0]
    }

    pub fn cols(&self) -> usize {
        self.dims[1]
    }

    pub fn slots(&self) -> usize {
        self.dims[2]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, t: usize) -> usize {
        (t * self.dims[0] + i) * self.dims[1] + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, t: usize) -> f64 {
        self.data[self.index(i, j, t)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, t: usize, v: f64) {
        let k = self.index(i, j, t);
        self.data[k] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    /// Frontal slice `t` as a row-major `d1 x d2` block.
    pub fn slice(&self, t: usize) -> &[f64] {
        let len = self.slice_len();
        &self.data[t * len..(t + 1) * len]
    }

    pub fn slice_mut(&mut self, t: usize) -> &mut [f64] {
        let len = self.slice_len();
        &mut self.data[t * len..(t + 1) * len]
    }

    /// Row `i` of slice `t` (the tube-free vector `h_it`).
    pub fn row(&self, i: usize, t: usize) -> &[f64] {
        let start = self.index(i, 0, t);
        &self.data[start..start + self.dims[1]]
    }

    pub fn row_mut(&mut self, i: usize, t: usize) -> &mut [f64] {
        let start = self.index(i, 0, t);
        let cols = self.dims[1];
        &mut self.data[start..start + cols]
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self::from_raw(self.dims, self.data.iter().map(|v| alpha * v).collect())
    }

    /// `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: f64, other: &Tensor3, beta: f64) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self::from_raw(
            self.dims,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        ))
    }

    pub fn add_assign(&mut self, other: &Tensor3) -> Result<()> {
        self.check_same_dims(other)?;
        crate::par::zip_apply(&mut self.data, &other.data, |d, s| *d += s);
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same_dims(&self, other: &Tensor3) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::dims(format!(
                "dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Writes one `i j t value` line per entry. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        let mut line = String::new();
        writeln!(out, "# dims {} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        for t in 0..self.dims[2] {
            for i in 0..self.dims[0] {
                for j in 0..self.dims[1] {
                    line.clear();
                    let _ = write!(line, "{i} {j} {t} {:?}", self.get(i, j, t));
                    writeln!(out, "{line}")?;
                }
            }
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(input: R) -> Result<Self> {
        let mut dims: Option<[usize; 3]> = None;
        let mut tensor: Option<Tensor3> = None;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let parse_err = |msg: &str| Error::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            if let Some(rest) = line.strip_prefix("# dims") {
                let d: Vec<usize> = rest
                    .split_whitespace()
                    .map(|s| s.parse().map_err(|_| parse_err("bad dims header")))
                    .collect::<Result<_>>()?;
                if d.len() != 3 {
                    return Err(parse_err("dims header needs three values"));
                }
                let d = [d[0], d[1], d[2]];
                dims = Some(d);
                tensor = Some(Tensor3::zeros(d));
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let t3 = tensor.as_mut().ok_or_else(|| parse_err("entry before dims header"))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(parse_err("expected `i j t value`"));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|_| parse_err("bad index"));
            let (i, j, t) = (idx(fields[0])?, idx(fields[1])?, idx(fields[2])?);
            let v: f64 = fields[3].parse().map_err(|_| parse_err("bad value"))?;
            let d = dims.unwrap();
            if i >= d[0] || j >= d[1] || t >= d[2] {
                return Err(parse_err("index out of range"));
            }
            t3.set(i, j, t, v);
        }
        tensor.ok_or_else(|| Error::EmptyInput("tensor dump has no dims header".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length_and_non_finite() {
        assert!(matches!(
            Tensor3::new([2, 2, 2], vec![0.0; 7]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(Tensor3::new([1, 1, 1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn layout_is_slot_major() {
        let t = Tensor3::from_fn([2, 3, 2], |i, j, t| (100 * t + 10 * i + j) as f64);
        assert_eq!(t.slice(1)[0], 100.0);
        assert_eq!(t.row(1, 1), &[110.0, 111.0, 112.0]);
        assert_eq!(t.get(1, 2, 0), 12.0);
    }

    #[test]
    fn dump_round_trips_bit_exact() {
        let t = Tensor3::from_fn([2, 2, 3], |i, j, t| {
            (i as f64 + 0.1) / (j as f64 + 3.0) * (t as f64 - 1.7)
        });
        let mut buf = Vec::new();
        t.write_dump(&mut buf).unwrap();
        let back = Tensor3::read_dump(buf.as_slice()).unwrap();
        assert_eq!(t, back);
    }
}
