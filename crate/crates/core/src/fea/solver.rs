//! Symmetric positive definite solve in variable-band (skyline) storage.
//!
//! Row `i` of the lower triangle is stored contiguously from its first
//! structural nonzero column up to the diagonal. Cholesky fill-in stays inside
//! this profile, so factorization needs no extra storage.

use crate::error::{Error, Result};

/// Pivots smaller than this fraction of the original diagonal are treated as
/// zero.
const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMatrix {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl ProfileMatrix {
    /// Builds an all-zero matrix whose row `i` spans columns `first[i]..=i`.
    pub fn with_profile(first: Vec<usize>) -> Self {
        let mut start = Vec::with_capacity(first.len() + 1);
        let mut offset = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "profile must cover the diagonal");
            start.push(offset);
            offset += i - f + 1;
        }
        start.push(offset);
        Self {
            first,
            start,
            data: vec![0.0; offset],
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored_len(&self) -> usize {
        self.data.len()
    }

    /// Storage position of entry `(i, j)`, `j ≤ i`, if inside the profile.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        debug_assert!(j <= i);
        (j >= self.first[i]).then(|| self.start[i] + j - self.first[i])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        self.position(i, j).map_or(0.0, |p| self.data[p])
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let f = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            for (k, &a) in row.iter().enumerate() {
                let j = f + k;
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// In-place Cholesky factorization `A = L Lᵀ`.
    pub fn factor(mut self) -> Result<Cholesky> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            for j in fi..i {
                let fj = self.first[j];
                let sj = self.start[j];
                let k0 = fi.max(fj);
                let dot = dot(
                    &self.data[si + k0 - fi..si + j - fi],
                    &self.data[sj + k0 - fj..sj + j - fj],
                );
                let ljj = self.data[sj + j - fj];
                self.data[si + j - fi] = (self.data[si + j - fi] - dot) / ljj;
            }
            let diag_pos = si + i - fi;
            let original = self.data[diag_pos];
            let row = &self.data[si..diag_pos];
            let pivot = original - dot(row, row);
            if !pivot.is_finite() {
                return Err(Error::NonFinite("stiffness factorization"));
            }
            if pivot <= PIVOT_TOLERANCE * original.abs() || pivot <= 0.0 {
                return Err(Error::StructuralSingularity { dof: i });
            }
            self.data[diag_pos] = pivot.sqrt();
        }
        Ok(Cholesky { l: self })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower Cholesky factor in profile storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: ProfileMatrix,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.l.dim()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let l = &self.l;
        let n = l.dim();
        assert_eq!(b.len(), n);
        for i in 0..n {
            let f = l.first[i];
            let row = &l.data[l.start[i]..l.start[i + 1]];
            let (off, diag) = row.split_at(row.len() - 1);
            b[i] = (b[i] - dot(off, &b[f..i])) / diag[0];
        }
        for i in (0..n).rev() {
            let f = l.first[i];
            let row = &l.data[l.start[i]..l.start[i + 1]];
            let (off, diag) = row.split_at(row.len() - 1);
            b[i] /= diag[0];
            let xi = b[i];
            for (k, &lik) in off.iter().enumerate() {
                b[f + k] -= lik * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
