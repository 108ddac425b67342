use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which banded lower-triangular weighting a [`TransformMatrix`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MVariant {
    /// Equal weights over the last `min(b, t)` slots.
    M1,
    /// Weight `1/(t-k+1)` for slot `k`, so the current slot weighs 1.
    M2,
    /// Arbitrary square matrix supplied by the caller.
    Custom,
}

impl fmt::Display for MVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MVariant::M1 => "M1",
            MVariant::M2 => "M2",
            MVariant::Custom => "custom",
        })
    }
}

impl FromStr for MVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" | "1" => Ok(MVariant::M1),
            "M2" | "2" => Ok(MVariant::M2),
            other => Err(Error::invalid(format!("unknown M variant `{other}`"))),
        }
    }
}

/// Dense `T x T` matrix acting on the time mode of a tensor.
///
/// Entries are row-major, `entry(t, k)` is the weight slot `k` contributes
/// to output slot `t`. For each row the nonzero column span is cached so
/// the banded variants cost `O(b)` per output element.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix {
    t_slots: usize,
    bandwidth: usize,
    variant: MVariant,
    entries: Vec<f64>,
    support: Vec<(usize, usize)>,
}

/// Equal-weight banded matrix. In 1-based terms,
/// `m_tk = 1/min(b,t)` for `max(1, t-b+1) <= k <= t`, else 0.
pub fn make_m1(t_slots: usize, b: usize) -> Result<TransformMatrix> {
    check_band_args(t_slots, b)?;
    Ok(TransformMatrix::banded(t_slots, b, MVariant::M1, |t, _k| {
        // 0-based row t is 1-based row t+1.
        1.0 / b.min(t + 1) as f64
    }))
}

/// Recency-weighted banded matrix. In 1-based terms,
/// `m_tk = 1/(t-k+1)` for `max(1, t-b+1) <= k <= t`, else 0.
pub fn make_m2(t_slots: usize, b: usize) -> Result<TransformMatrix> {
    check_band_args(t_slots, b)?;
    Ok(TransformMatrix::banded(t_slots, b, MVariant::M2, |t, k| {
        1.0 / (t - k + 1) as f64
    }))
}

fn check_band_args(t_slots: usize, b: usize) -> Result<()> {
    if t_slots == 0 {
        return Err(Error::invalid("transform matrix needs at least one time slot"));
    }
    if b == 0 {
        return Err(Error::invalid("bandwidth must be at least 1"));
    }
    Ok(())
}

impl TransformMatrix {
    fn banded(
        t_slots: usize,
        b: usize,
        variant: MVariant,
        weight: impl Fn(usize, usize) -> f64,
    ) -> Self {
        let mut entries = vec![0.0; t_slots * t_slots];
        for t in 0..t_slots {
            let lo = (t + 1).saturating_sub(b);
            for k in lo..=t {
                entries[t * t_slots + k] = weight(t, k);
            }
        }
        Self::with_entries(t_slots, b, variant, entries)
    }

    fn with_entries(t_slots: usize, bandwidth: usize, variant: MVariant, entries: Vec<f64>) -> Self {
        let support = (0..t_slots)
            .map(|t| {
                let row = &entries[t * t_slots..(t + 1) * t_slots];
                match row.iter().position(|&v| v != 0.0) {
                    Some(lo) => {
                        let hi = row.iter().rposition(|&v| v != 0.0).unwrap();
                        (lo, hi + 1)
                    }
                    None => (0, 0),
                }
            })
            .collect();
        Self {
            t_slots,
            bandwidth,
            variant,
            entries,
            support,
        }
    }

    pub fn build(variant: MVariant, t_slots: usize, b: usize) -> Result<Self> {
        match variant {
            MVariant::M1 => make_m1(t_slots, b),
            MVariant::M2 => make_m2(t_slots, b),
            MVariant::Custom => Err(Error::invalid("custom matrices need explicit entries")),
        }
    }

    pub fn identity(t_slots: usize) -> Result<Self> {
        make_m1(t_slots, 1)
    }

    /// Arbitrary square matrix, row-major.
    pub fn from_dense(t_slots: usize, entries: Vec<f64>) -> Result<Self> {
        if t_slots == 0 {
            return Err(Error::invalid("transform matrix needs at least one time slot"));
        }
        if entries.len() != t_slots * t_slots {
            return Err(Error::dims(format!(
                "{t_slots}x{t_slots} matrix needs {} entries, got {}",
                t_slots * t_slots,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("transform matrix entries must be finite"));
        }
        Ok(Self::with_entries(t_slots, t_slots, MVariant::Custom, entries))
    }

    pub fn t_slots(&self) -> usize {
        self.t_slots
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn variant(&self) -> MVariant {
        self.variant
    }

    #[inline]
    pub fn entry(&self, t: usize, k: usize) -> f64 {
        self.entries[t * self.t_slots + k]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.entries[t * self.t_slots..(t + 1) * self.t_slots]
    }

    /// Half-open column span `[lo, hi)` holding the nonzeros of row `t`.
    pub fn row_support(&self, t: usize) -> (usize, usize) {
        self.support[t]
    }

    /// Row sum with Neumaier compensation.
    pub fn row_sum(&self, t: usize) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &v in self.row(t) {
            let next = sum + v;
            comp += if sum.abs() >= v.abs() {
                (sum - next) + v
            } else {
                (v - next) + sum
            };
            sum = next;
        }
        sum + comp
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn transpose(&self) -> Self {
        let n = self.t_slots;
        let mut entries = vec![0.0; n * n];
        for t in 0..n {
            for k in 0..n {
                entries[k * n + t] = self.entries[t * n + k];
            }
        }
        Self::with_entries(n, n, MVariant::Custom, entries)
    }

    pub fn is_lower_triangular(&self) -> bool {
        self.support.iter().enumerate().all(|(t, &(lo, hi))| lo == hi || hi <= t + 1)
    }

    /// Explicit inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.t_slots;
        let mut a = self.entries.clone();
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            inv[i * n + i] = 1.0;
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))
                .unwrap();
            let p = a[pivot * n + col];
            if p == 0.0 || p.abs() <= scale * 1e-14 * n as f64 {
                return Err(Error::SingularMatrix(format!(
                    "no usable pivot in column {col}"
                )));
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot * n + k);
                    inv.swap(col * n + k, pivot * n + k);
                }
            }
            for k in 0..n {
                a[col * n + k] /= p;
                inv[col * n + k] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for k in 0..n {
                    a[r * n + k] -= f * a[col * n + k];
                    inv[r * n + k] -= f * inv[col * n + k];
                }
            }
        }
        Ok(Self::with_entries(n, n, MVariant::Custom, inv))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(m: &TransformMatrix) -> Vec<Vec<f64>> {
        (0..m.t_slots()).map(|t| m.row(t).to_vec()).collect()
    }

    #[test]
    fn m1_small_cases() {
        assert_eq!(
            rows(&make_m1(3, 2).unwrap()),
            vec![vec![1.0, 0.0, 0.0], vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]]
        );
        assert_eq!(rows(&make_m1(1, 1).unwrap()), vec![vec![1.0]]);
        assert_eq!(make_m1(4, 4).unwrap().row(3), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn m2_small_cases() {
        assert_eq!(
            rows(&make_m2(3, 2).unwrap()),
            vec![vec![1.0, 0.0, 0.0], vec![0.5, 1.0, 0.0], vec![0.0, 0.5, 1.0]]
        );
        assert_eq!(rows(&make_m2(1, 1).unwrap()), vec![vec![1.0]]);
        let id = make_m2(3, 1).unwrap();
        for t in 0..3 {
            for k in 0..3 {
                assert_eq!(id.entry(t, k), if t == k { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(matches!(make_m1(0, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_m2(3, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn band_wider_than_t_is_full_lower_triangle() {
        let m = make_m2(3, 10).unwrap();
        assert_eq!(m.row(2), &[1.0 / 3.0, 0.5, 1.0]);
        assert!(m.is_lower_triangular());
    }

    #[test]
    fn m1_rows_sum_to_one() {
        for t in 1..=40 {
            for b in 1..=t {
                let m = make_m1(t, b).unwrap();
                for r in 0..t {
                    let s = m.row_sum(r);
                    assert!((s - 1.0).abs() <= 1e-15, "T={t} b={b} row {r}: {s}");
                }
            }
        }
    }

    #[test]
    fn inverse_of_m2() {
        let m = make_m2(4, 4).unwrap();
        let inv = m.inverse().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let v: f64 = (0..4).map(|k| m.entry(i, k) * inv.entry(k, j)).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_inverse_errors() {
        let m = TransformMatrix::from_dense(2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(m.inverse(), Err(Error::SingularMatrix(_))));
    }
}
