//! Mode-3 transforms and face-wise products.
//!
//! All kernels parallelise over output slots. Each output element is
//! produced by exactly one task with a fixed accumulation order, so
//! results do not depend on the thread count.

use super::{CsrMatrix, SparseSnapshots, Tensor3, TransformMatrix};
use crate::error::{Error, Result};
use crate::par;

fn check_slots(what: &str, have: usize, m: &TransformMatrix) -> Result<()> {
    if have != m.t_slots() {
        return Err(Error::dims(format!(
            "{what} has {have} slots but transform is {0}x{0}",
            m.t_slots()
        )));
    }
    Ok(())
}

/// `(x ×₃ M)_{ijt} = Σ_k m_tk x_{ijk}`.
pub fn m_transform(x: &Tensor3, m: &TransformMatrix) -> Result<Tensor3> {
    check_slots("tensor", x.slots(), m)?;
    let mut out = Tensor3::zeros(x.dims());
    let len = x.slice_len();
    par::for_each_chunk(out.as_mut_slice(), len, |t, dst| {
        let (lo, hi) = m.row_support(t);
        for k in lo..hi {
            let w = m.entry(t, k);
            for (d, s) in dst.iter_mut().zip(x.slice(k)) {
                *d += w * s;
            }
        }
    });
    Ok(out)
}

/// `x ×₃ Mᵀ`, the adjoint of [`m_transform`] under the Frobenius inner product.
pub fn m_transform_adjoint(x: &Tensor3, m: &TransformMatrix) -> Result<Tensor3> {
    m_transform(x, &m.transpose())
}

/// `Â = A ×₃ M` on sparse snapshots; slot `t` is `Σ_k m_tk A_k`.
pub fn m_transform_sparse(a: &SparseSnapshots, m: &TransformMatrix) -> Result<SparseSnapshots> {
    check_slots("snapshot sequence", a.t_slots(), m)?;
    let slices = par::map_range(a.t_slots(), |t| {
        let (lo, hi) = m.row_support(t);
        let terms: Vec<(f64, &CsrMatrix)> = (lo..hi)
            .filter(|&k| m.entry(t, k) != 0.0)
            .map(|k| (m.entry(t, k), a.slice(k)))
            .collect();
        CsrMatrix::linear_combination(a.n(), &terms)
    });
    Ok(SparseSnapshots::from_slices_unchecked(a.n(), slices))
}

fn matmul_into(x: &[f64], y: &[f64], rows: usize, inner: usize, cols: usize, out: &mut [f64]) {
    for i in 0..rows {
        let dst = &mut out[i * cols..(i + 1) * cols];
        for k in 0..inner {
            let a = x[i * inner + k];
            let src = &y[k * cols..(k + 1) * cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }
}

/// Slot-wise matrix product `(X Δ Y)_t = X_t Y_t`.
pub fn facewise_product(x: &Tensor3, y: &Tensor3) -> Result<Tensor3> {
    if x.cols() != y.rows() || x.slots() != y.slots() {
        return Err(Error::dims(format!(
            "face-wise product of {:?} and {:?}",
            x.dims(),
            y.dims()
        )));
    }
    let (rows, inner, cols) = (x.rows(), x.cols(), y.cols());
    let mut out = Tensor3::zeros([rows, cols, x.slots()]);
    par::for_each_chunk(out.as_mut_slice(), rows * cols, |t, dst| {
        matmul_into(x.slice(t), y.slice(t), rows, inner, cols, dst);
    });
    Ok(out)
}

/// `(X_t)ᵀ Y_t` for every slot.
pub fn facewise_product_tn(x: &Tensor3, y: &Tensor3) -> Result<Tensor3> {
    if x.rows() != y.rows() || x.slots() != y.slots() {
        return Err(Error::dims(format!(
            "transposed face-wise product of {:?} and {:?}",
            x.dims(),
            y.dims()
        )));
    }
    let (inner, rows, cols) = (x.rows(), x.cols(), y.cols());
    let mut out = Tensor3::zeros([rows, cols, x.slots()]);
    par::for_each_chunk(out.as_mut_slice(), rows * cols, |t, dst| {
        let (xs, ys) = (x.slice(t), y.slice(t));
        for k in 0..inner {
            let src = &ys[k * cols..(k + 1) * cols];
            for i in 0..rows {
                let a = xs[k * rows + i];
                for (d, s) in dst[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
    });
    Ok(out)
}

/// `X_t (Y_t)ᵀ` for every slot.
pub fn facewise_product_nt(x: &Tensor3, y: &Tensor3) -> Result<Tensor3> {
    if x.cols() != y.cols() || x.slots() != y.slots() {
        return Err(Error::dims(format!(
            "face-wise product with transpose of {:?} and {:?}",
            x.dims(),
            y.dims()
        )));
    }
    let (rows, inner, cols) = (x.rows(), x.cols(), y.rows());
    let mut out = Tensor3::zeros([rows, cols, x.slots()]);
    par::for_each_chunk(out.as_mut_slice(), rows * cols, |t, dst| {
        let (xs, ys) = (x.slice(t), y.slice(t));
        for i in 0..rows {
            let xr = &xs[i * inner..(i + 1) * inner];
            for j in 0..cols {
                let yr = &ys[j * inner..(j + 1) * inner];
                let mut acc = 0.0;
                for (a, b) in xr.iter().zip(yr) {
                    acc += a * b;
                }
                dst[i * cols + j] = acc;
            }
        }
    });
    Ok(out)
}

fn check_sparse_dense(a: &SparseSnapshots, h: &Tensor3) -> Result<()> {
    if a.n() != h.rows() || a.t_slots() != h.slots() {
        return Err(Error::dims(format!(
            "{0}x{0}x{1} snapshots against tensor {2:?}",
            a.n(),
            a.t_slots(),
            h.dims()
        )));
    }
    Ok(())
}

/// `A_t H_t` per slot with sparse `A`.
pub fn facewise_product_sparse(a: &SparseSnapshots, h: &Tensor3) -> Result<Tensor3> {
    check_sparse_dense(a, h)?;
    let cols = h.cols();
    let mut out = Tensor3::zeros(h.dims());
    par::for_each_chunk(out.as_mut_slice(), h.slice_len(), |t, dst| {
        a.slice(t).mul_dense_into(h.slice(t), cols, dst);
    });
    Ok(out)
}

/// `(A_t)ᵀ H_t` per slot with sparse `A`.
pub fn facewise_product_sparse_transposed(a: &SparseSnapshots, h: &Tensor3) -> Result<Tensor3> {
    check_sparse_dense(a, h)?;
    let cols = h.cols();
    let mut out = Tensor3::zeros(h.dims());
    par::for_each_chunk(out.as_mut_slice(), h.slice_len(), |t, dst| {
        a.slice(t).mul_dense_transposed_into(h.slice(t), cols, dst);
    });
    Ok(out)
}

/// Full M-product `((X ×₃ M) Δ (Y ×₃ M)) ×₃ M⁻¹`.
///
/// Lower-triangular `M` (both banded variants) is undone by forward
/// substitution along the time mode; any other `M` goes through an
/// explicit inverse.
pub fn m_product(x: &Tensor3, y: &Tensor3, m: &TransformMatrix) -> Result<Tensor3> {
    check_slots("left operand", x.slots(), m)?;
    check_slots("right operand", y.slots(), m)?;
    let mixed = facewise_product(&m_transform(x, m)?, &m_transform(y, m)?)?;
    if m.is_lower_triangular() {
        solve_lower_in_time(m, mixed)
    } else {
        m_transform(&mixed, &m.inverse()?)
    }
}

/// Solves `Z ×₃ M = P` for lower-triangular `M`, slice by slice.
fn solve_lower_in_time(m: &TransformMatrix, mut p: Tensor3) -> Result<Tensor3> {
    let len = p.slice_len();
    for t in 0..m.t_slots() {
        let diag = m.entry(t, t);
        if diag == 0.0 {
            return Err(Error::SingularMatrix(format!("zero diagonal at slot {t}")));
        }
        let (lo, _) = m.row_support(t);
        let (done, rest) = p.as_mut_slice().split_at_mut(t * len);
        let cur = &mut rest[..len];
        for k in lo..t {
            let w = m.entry(t, k);
            if w == 0.0 {
                continue;
            }
            for (c, z) in cur.iter_mut().zip(&done[k * len..(k + 1) * len]) {
                *c -= w * z;
            }
        }
        for c in cur.iter_mut() {
            *c /= diag;
        }
    }
    Ok(p)
}
