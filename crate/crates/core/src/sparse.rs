use serde::{Deserialize, Serialize};

use crate::error::{KbcError, Result};

/// Sorted `(index, weight)` pairs over a fixed dimension.
///
/// Indices are strictly increasing, every index is below `dim`, and no
/// stored weight is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Validating constructor; zero weights are dropped.
    pub fn new(dim: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(KbcError::Domain(format!(
                    "sparse indices not strictly increasing at {}",
                    w[1].0
                )));
            }
        }
        if let Some(&(i, _)) = entries.last() {
            if i as usize >= dim {
                return Err(KbcError::Domain(format!("index {i} out of dimension {dim}")));
            }
        }
        if let Some(&(i, w)) = entries.iter().find(|(_, w)| !w.is_finite()) {
            return Err(KbcError::Domain(format!("non-finite weight {w} at index {i}")));
        }
        Ok(SparseVector {
            dim,
            entries: entries.into_iter().filter(|&(_, w)| w != 0.0).collect(),
        })
    }

    /// Sorts, sums duplicate indices and drops zeros.
    pub fn from_unsorted(dim: usize, entries: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut entries: Vec<_> = entries.into_iter().collect();
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => merged.push((i, w)),
            }
        }
        SparseVector::new(dim, merged)
    }

    pub fn one_hot(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(KbcError::Domain(format!("one-hot index {index} out of dimension {dim}")));
        }
        Ok(SparseVector {
            dim,
            entries: vec![(index as u32, 1.0)],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|&(i, w)| (i as usize, w))
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| w * dense[i as usize]).sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut acc = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    acc += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        acc
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum()
    }

    pub fn scaled(&self, factor: f64) -> SparseVector {
        if factor == 0.0 {
            return SparseVector::zeros(self.dim);
        }
        SparseVector {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, w)| (i, w * factor)).collect(),
        }
    }

    /// `self - other`; coordinates that cancel exactly are dropped.
    pub fn sub(&self, other: &SparseVector) -> SparseVector {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut a, mut b) = (0, 0);
        while a < self.entries.len() || b < other.entries.len() {
            let next_a = self.entries.get(a).map(|e| e.0);
            let next_b = other.entries.get(b).map(|e| e.0);
            let (i, w) = match (next_a, next_b) {
                (Some(i), Some(j)) if i == j => {
                    let r = (i, self.entries[a].1 - other.entries[b].1);
                    a += 1;
                    b += 1;
                    r
                }
                (Some(i), Some(j)) if i < j => {
                    a += 1;
                    (i, self.entries[a - 1].1)
                }
                (Some(i), None) => {
                    a += 1;
                    (i, self.entries[a - 1].1)
                }
                (_, Some(j)) => {
                    b += 1;
                    (j, -other.entries[b - 1].1)
                }
                (None, None) => unreachable!(),
            };
            if w != 0.0 {
                out.push((i, w));
            }
        }
        SparseVector {
            dim: self.dim,
            entries: out,
        }
    }

    /// Unit L2 norm, or the zero vector unchanged.
    pub fn l2_normalized(&self) -> SparseVector {
        let norm = self.squared_norm().sqrt();
        if norm == 0.0 {
            return self.clone();
        }
        self.scaled(1.0 / norm)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &(i, w) in &self.entries {
            v[i as usize] = w;
        }
        v
    }

    /// Shifts indices by `offset` into a space of dimension `dim`.
    pub(crate) fn shifted_into(&self, offset: usize, out: &mut Vec<(u32, f64)>) {
        out.extend(self.entries.iter().map(|&(i, w)| (i + offset as u32, w)));
    }

    pub(crate) fn from_sorted_unchecked(dim: usize, entries: Vec<(u32, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        SparseVector { dim, entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(SparseVector::new(3, vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(0, f64::NAN)]).is_err());
        let v = SparseVector::new(3, vec![(0, 0.0), (2, 1.5)]).unwrap();
        assert_eq!(v.entries(), &[(2, 1.5)]);
    }

    #[test]
    fn one_hot_bounds() {
        assert_eq!(SparseVector::one_hot(3, 2).unwrap().entries(), &[(2, 1.0)]);
        assert!(SparseVector::one_hot(3, 3).is_err());
    }

    fn arb_vec(dim: usize) -> impl Strategy<Value = SparseVector> {
        proptest::collection::vec((0..dim as u32, -5.0f64..5.0), 0..dim)
            .prop_map(move |e| SparseVector::from_unsorted(dim, e).unwrap())
    }

    proptest! {
        #[test]
        fn sub_matches_dense(a in arb_vec(12), b in arb_vec(12)) {
            let d = a.sub(&b).to_dense();
            let (da, db) = (a.to_dense(), b.to_dense());
            for i in 0..12 {
                prop_assert_eq!(d[i], da[i] - db[i]);
            }
        }

        #[test]
        fn dot_matches_dense(a in arb_vec(10), b in arb_vec(10)) {
            let expect: f64 = a.to_dense().iter().zip(b.to_dense()).map(|(x, y)| x * y).sum();
            prop_assert!((a.dot(&b) - expect).abs() < 1e-9);
            prop_assert!((a.dot_dense(&b.to_dense()) - expect).abs() < 1e-9);
        }
    }
}
