//! Stochastic response surfaces: probabilists' Hermite chaos in `n` standard
//! normal variables, fitted by least squares at collocation points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Probabilists' Hermite polynomial `He_k(x)` and its derivative.
pub fn hermite(k: usize, x: f64) -> (f64, f64) {
    // He_{j+1} = x He_j − j He_{j−1};  He_k' = k He_{k−1}.
    let (mut prev, mut cur) = (0.0, 1.0);
    for j in 0..k {
        let next = x * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    (cur, k as f64 * prev)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Ordered multi-indices of a total-degree Hermite basis.
///
/// Terms are grouped by degree. Within a degree the pure powers come first
/// (by variable), then the mixed terms in ascending lexicographic order of
/// their exponent tuples. For `n = 2, p = 3` this gives
/// `1, α₁, α₂, α₁²−1, α₂²−1, α₁α₂, α₁³−3α₁, α₂³−3α₂, α₁α₂²−α₁, α₁²α₂−α₂`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HermiteBasis {
    n: usize,
    degree: usize,
    terms: Vec<Vec<usize>>,
}

impl HermiteBasis {
    pub fn new(n: usize, degree: usize) -> Result<Self> {
        if n == 0 || degree == 0 {
            return Err(Error::InvalidParameter(format!(
                "Hermite basis needs n ≥ 1 and p ≥ 1, got n={n}, p={degree}"
            )));
        }
        let mut terms = vec![vec![0; n]];
        for d in 1..=degree {
            let mut level = Vec::new();
            compositions(n, d, &mut vec![0; n], 0, &mut level);
            let (mut pure, mut mixed): (Vec<_>, Vec<_>) =
                level.into_iter().partition(|t| t.iter().filter(|&&e| e > 0).count() == 1);
            pure.sort_by_key(|t| t.iter().position(|&e| e > 0));
            mixed.sort();
            terms.extend(pure);
            terms.extend(mixed);
        }
        Ok(Self { n, degree, terms })
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn multi_indices(&self) -> &[Vec<usize>] {
        &self.terms
    }

    /// `E[term_k²]` under independent standard normals: `Π αᵢ!`.
    pub fn norm_squared(&self, k: usize) -> f64 {
        self.terms[k].iter().map(|&e| factorial(e)).product()
    }

    /// Every basis term evaluated at `xi`.
    pub fn eval_terms(&self, xi: &[f64]) -> Vec<f64> {
        let table = self.tables(xi);
        self.terms
            .iter()
            .map(|t| t.iter().enumerate().map(|(v, &e)| table[v][e].0).product())
            .collect()
    }

    /// Gradient of every basis term at `xi`: `out[k][v] = ∂term_k/∂ξ_v`.
    pub fn grad_terms(&self, xi: &[f64]) -> Vec<Vec<f64>> {
        let table = self.tables(xi);
        self.terms
            .iter()
            .map(|t| {
                (0..self.n)
                    .map(|v| {
                        t.iter()
                            .enumerate()
                            .map(|(w, &e)| if w == v { table[w][e].1 } else { table[w][e].0 })
                            .product()
                    })
                    .collect()
            })
            .collect()
    }

    fn tables(&self, xi: &[f64]) -> Vec<Vec<(f64, f64)>> {
        xi.iter()
            .map(|&x| (0..=self.degree).map(|k| hermite(k, x)).collect())
            .collect()
    }
}

fn compositions(n: usize, remaining: usize, cur: &mut Vec<usize>, var: usize, out: &mut Vec<Vec<usize>>) {
    if var == n - 1 {
        cur[var] = remaining;
        out.push(cur.clone());
        return;
    }
    for e in 0..=remaining {
        cur[var] = e;
        compositions(n, remaining - e, cur, var + 1, out);
    }
}

/// Points in standard normal space at which the response is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationSet {
    pub points: Vec<Vec<f64>>,
}

impl CollocationSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Roots of `He_k`, ascending (Golub–Welsch on the Hermite Jacobi matrix).
pub fn hermite_roots(k: usize) -> Vec<f64> {
    if k == 0 {
        return Vec::new();
    }
    let jacobi = DMatrix::from_fn(k, k, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut roots: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    roots.sort_by(f64::total_cmp);
    roots
}

/// Selects `count` collocation points from the tensor grid of
/// `{0} ∪ roots(He_{p+1})`, highest joint standard-normal density first
/// (ties in lexicographic coordinate order).
pub fn collocation_points(basis: &HermiteBasis, count: usize) -> Result<CollocationSet> {
    if count < basis.len() {
        return Err(Error::InvalidParameter(format!(
            "need at least {} collocation points for {} basis terms, got {count}",
            basis.len(),
            basis.len()
        )));
    }
    let mut abscissae = hermite_roots(basis.degree() + 1);
    // Even p + 1 has no root at the origin.
    if !abscissae.iter().any(|r| r.abs() < 1e-12) {
        abscissae.push(0.0);
    }
    for r in abscissae.iter_mut() {
        if r.abs() < 1e-12 {
            *r = 0.0;
        }
    }
    abscissae.sort_by(f64::total_cmp);
    let n = basis.n_vars();
    let pool_size = abscissae.len().checked_pow(n as u32).unwrap_or(usize::MAX);
    if count > pool_size {
        return Err(Error::InvalidParameter(format!(
            "requested {count} collocation points but the candidate pool has {pool_size}"
        )));
    }
    let mut pool: Vec<(i64, Vec<f64>)> = (0..pool_size)
        .map(|mut idx| {
            let mut pt = vec![0.0; n];
            for v in (0..n).rev() {
                pt[v] = abscissae[idx % abscissae.len()];
                idx /= abscissae.len();
            }
            // Density ranks by squared radius, quantized to merge rounding ties.
            let key = (pt.iter().map(|x| x * x).sum::<f64>() * 1e9).round() as i64;
            (key, pt)
        })
        .collect();
    pool.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            a.1.iter()
                .zip(&b.1)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    Ok(CollocationSet {
        points: pool.into_iter().take(count).map(|(_, p)| p).collect(),
    })
}

/// Which response a surrogate was fitted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitTag {
    pub dof: usize,
    pub design_hash: u64,
}

/// A fitted Hermite-chaos response surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosSurrogate {
    basis: HermiteBasis,
    coefficients: Vec<f64>,
    residual_norm: f64,
    tag: Option<FitTag>,
}

impl ChaosSurrogate {
    /// A surrogate with given coefficients, no fit involved.
    pub fn from_coefficients(basis: HermiteBasis, coefficients: Vec<f64>) -> Result<Self> {
        check_len("chaos coefficients", basis.len(), coefficients.len())?;
        Ok(Self {
            basis,
            coefficients,
            residual_norm: 0.0,
            tag: None,
        })
    }

    pub fn with_tag(mut self, tag: FitTag) -> Self {
        self.tag = Some(tag);
        self
    }

    pub fn tag(&self) -> Option<FitTag> {
        self.tag
    }

    pub fn basis(&self) -> &HermiteBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        check_len("surrogate input", self.basis.n_vars(), xi.len())?;
        Ok(self
            .basis
            .eval_terms(xi)
            .iter()
            .zip(&self.coefficients)
            .map(|(t, a)| t * a)
            .sum())
    }

    pub fn grad(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_len("surrogate input", self.basis.n_vars(), xi.len())?;
        let mut g = vec![0.0; self.basis.n_vars()];
        for (tg, a) in self.basis.grad_terms(xi).iter().zip(&self.coefficients) {
            for (gv, t) in g.iter_mut().zip(tg) {
                *gv += a * t;
            }
        }
        Ok(g)
    }

    /// Mean of the response under standard normal inputs.
    pub fn mean(&self) -> f64 {
        self.coefficients[0]
    }

    /// Standard deviation from the orthogonality of the basis.
    pub fn std_dev(&self) -> f64 {
        (1..self.basis.len())
            .map(|k| self.coefficients[k].powi(2) * self.basis.norm_squared(k))
            .sum::<f64>()
            .sqrt()
    }
}

/// Least-squares fit of the basis coefficients to `responses` at `points`.
pub fn fit(points: &CollocationSet, responses: &[f64], basis: &HermiteBasis) -> Result<ChaosSurrogate> {
    check_len("responses", points.len(), responses.len())?;
    if responses.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("surrogate responses"));
    }
    let rows = points.len();
    let cols = basis.len();
    let mut v = DMatrix::<f64>::zeros(rows, cols);
    for (r, p) in points.points.iter().enumerate() {
        check_len("collocation point", basis.n_vars(), p.len())?;
        for (c, t) in basis.eval_terms(p).into_iter().enumerate() {
            v[(r, c)] = t;
        }
    }
    let dependent = dependent_columns(&v);
    if !dependent.is_empty() {
        return Err(Error::IllPosedFit { columns: dependent });
    }
    let z = DVector::from_column_slice(responses);
    let qr = v.clone().qr();
    let qtz = qr.q().transpose() * &z;
    let a = qr
        .r()
        .solve_upper_triangular(&qtz)
        .ok_or(Error::IllPosedFit { columns: Vec::new() })?;
    let residual_norm = (&v * &a - &z).norm();
    Ok(ChaosSurrogate {
        basis: basis.clone(),
        coefficients: a.iter().copied().collect(),
        residual_norm,
        tag: None,
    })
}

/// Columns that are (numerically) combinations of earlier ones, found by
/// modified Gram–Schmidt.
fn dependent_columns(v: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for c in 0..v.ncols() {
        let col = v.column(c).into_owned();
        let scale = col.norm();
        let mut w = col;
        for q in &basis {
            let proj = q.dot(&w);
            w -= q * proj;
        }
        let norm = w.norm();
        if scale == 0.0 || norm <= 1e-10 * scale {
            out.push(c);
        } else {
            basis.push(w / norm);
        }
    }
    out
}
