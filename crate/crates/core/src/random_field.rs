//! Discrete Karhunen–Loève expansion of a zero-mean, unit-variance Gaussian
//! field with separable exponential covariance
//! `K(s, t) = exp(−|s₁−t₁|/l₁) · exp(−|s₂−t₂|/l₂)`, and the map from field
//! values to a uniformly distributed Young's modulus.
//!
//! Each 1-D factor is discretized by the Nyström method at element midpoints
//! (uniform weight `h`). The 2-D eigenpairs are products of the 1-D ones.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_len, Error, Result};
use crate::fea::StructuredGrid;

/// One-dimensional exponential kernel `exp(−|s−t|/l)` on `[0, L]`, sampled at
/// `n` equally spaced midpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance1D {
    corr_length: f64,
    domain_length: f64,
    n: usize,
}

impl Covariance1D {
    pub fn new(corr_length: f64, domain_length: f64, n: usize) -> Result<Self> {
        if !(corr_length > 0.0 && corr_length.is_finite()) {
            return Err(Error::InvalidParameter(format!("correlation length must be > 0, got {corr_length}")));
        }
        if !(domain_length > 0.0 && domain_length.is_finite()) {
            return Err(Error::InvalidParameter(format!("domain length must be > 0, got {domain_length}")));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 abscissae, got {n}")));
        }
        Ok(Self { corr_length, domain_length, n })
    }

    pub fn corr_length(&self) -> f64 {
        self.corr_length
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Quadrature weight of every abscissa.
    pub fn weight(&self) -> f64 {
        self.domain_length / self.n as f64
    }

    pub fn abscissae(&self) -> Vec<f64> {
        let h = self.weight();
        (0..self.n).map(|k| (k as f64 + 0.5) * h).collect()
    }

    pub fn kernel(&self, s: f64, t: f64) -> f64 {
        (-(s - t).abs() / self.corr_length).exp()
    }

    /// The weighted kernel matrix `h · K(x_i, x_j)`.
    pub fn nystrom_matrix(&self) -> DMatrix<f64> {
        let x = self.abscissae();
        let h = self.weight();
        DMatrix::from_fn(self.n, self.n, |i, j| h * self.kernel(x[i], x[j]))
    }
}

/// How a configured correlation length is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrLengthMode {
    /// In element units.
    #[default]
    Absolute,
    /// As a fraction of the domain side along the same axis.
    Relative,
}

impl CorrLengthMode {
    pub fn resolve(self, length: f64, domain_side: f64) -> f64 {
        match self {
            CorrLengthMode::Absolute => length,
            CorrLengthMode::Relative => length * domain_side,
        }
    }
}

/// Eigenpair of the 1-D Nyström problem; `vector` holds `e(x_k)` at the
/// midpoints, normalized so that `Σ e(x_k)² h = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair1D {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// All `n` eigenpairs of the discretized 1-D covariance, largest first.
///
/// The sign of each eigenvector makes its largest-magnitude component
/// positive (first such component on near-ties).
pub fn kl_1d(cov: &Covariance1D) -> Result<Vec<Eigenpair1D>> {
    let m = cov.nystrom_matrix();
    let eig = m.try_symmetric_eigen(1e-15, 10_000).ok_or(Error::EigenNonConvergence)?;
    let h = cov.weight();
    let scale = 1.0 / h.sqrt();
    let mut pairs: Vec<Eigenpair1D> = (0..cov.len())
        .map(|k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().map(|x| x * scale).collect();
            let peak = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
            let lead = v.iter().position(|x| x.abs() >= peak * (1.0 - 1e-9)).unwrap_or(0);
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            Eigenpair1D { value: eig.eigenvalues[k], vector: v }
        })
        .collect();
    pairs.sort_by(|a, b| b.value.total_cmp(&a.value));
    Ok(pairs)
}

/// A retained 2-D mode `λ = λˣ_i λʸ_j`, `e(x, y) = eˣ_i(x) eʸ_j(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KlMode {
    pub eigenvalue: f64,
    /// Index of the 1-D factor along x (0 = largest).
    pub ix: usize,
    /// Index of the 1-D factor along y.
    pub iy: usize,
    /// Eigenfunction value at every element centroid, in grid element order.
    pub values: Vec<f64>,
}

/// Truncated KL basis evaluated at element centroids. The field mean is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct KlBasis {
    modes: Vec<KlMode>,
    quadrature_weight: f64,
    trace: f64,
    rescale_pointwise_variance: bool,
}

impl KlBasis {
    pub fn modes(&self) -> &[KlMode] {
        &self.modes
    }

    pub fn n_terms(&self) -> usize {
        self.modes.len()
    }

    pub fn n_points(&self) -> usize {
        self.modes.first().map_or(0, |m| m.values.len())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    /// Product quadrature weight `hₓ · h_y` of one element.
    pub fn quadrature_weight(&self) -> f64 {
        self.quadrature_weight
    }

    /// Sum of the full (untruncated) discrete spectrum.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Divide each sampled value by the truncated pointwise standard
    /// deviation so the field keeps unit variance everywhere.
    pub fn with_pointwise_rescaling(mut self, on: bool) -> Self {
        self.rescale_pointwise_variance = on;
        self
    }

    pub fn rescales_pointwise_variance(&self) -> bool {
        self.rescale_pointwise_variance
    }

    /// `Σ λ_i e_i(x_c)²` at every centroid.
    pub fn pointwise_variance(&self) -> Vec<f64> {
        let mut var = vec![0.0; self.n_points()];
        for m in &self.modes {
            for (v, e) in var.iter_mut().zip(&m.values) {
                *v += m.eigenvalue * e * e;
            }
        }
        var
    }

    /// Builds the basis for a grid with unit elements.
    pub fn for_grid(
        grid: &StructuredGrid,
        corr_lengths: (f64, f64),
        mode: CorrLengthMode,
        terms: usize,
    ) -> Result<Self> {
        let (lx, ly) = (grid.nx() as f64, grid.ny() as f64);
        let cx = Covariance1D::new(mode.resolve(corr_lengths.0, lx), lx, grid.nx())?;
        let cy = Covariance1D::new(mode.resolve(corr_lengths.1, ly), ly, grid.ny())?;
        kl_product(&cx, &kl_1d(&cx)?, &cy, &kl_1d(&cy)?, terms)
    }
}

/// Forms every product of the 1-D pairs, sorts descending (ties by `(i, j)`)
/// and keeps the top `terms`. Values are laid out in grid element order
/// (`e = ey · nx + ex`).
pub fn kl_product(
    cov_x: &Covariance1D,
    kx: &[Eigenpair1D],
    cov_y: &Covariance1D,
    ky: &[Eigenpair1D],
    terms: usize,
) -> Result<KlBasis> {
    let (nx, ny) = (cov_x.len(), cov_y.len());
    check_len("x eigenpairs", nx, kx.len())?;
    check_len("y eigenpairs", ny, ky.len())?;
    if terms == 0 || terms > nx * ny {
        return Err(Error::InvalidParameter(format!(
            "truncation order must be in 1..={}, got {terms}",
            nx * ny
        )));
    }
    let top = kx[0].value * ky[0].value;
    let mut pairs: Vec<(i64, usize, usize)> = (0..nx)
        .flat_map(|i| (0..ny).map(move |j| (i, j)))
        .map(|(i, j)| {
            // Quantized so near-equal products on square domains tie exactly.
            let key = (kx[i].value * ky[j].value / top * 1e11).round() as i64;
            (key, i, j)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let trace = kx.iter().map(|p| p.value).sum::<f64>() * ky.iter().map(|p| p.value).sum::<f64>();
    let modes = pairs[..terms]
        .iter()
        .map(|&(_, i, j)| {
            let mut values = vec![0.0; nx * ny];
            for ey in 0..ny {
                for ex in 0..nx {
                    values[ey * nx + ex] = kx[i].vector[ex] * ky[j].vector[ey];
                }
            }
            KlMode {
                eigenvalue: kx[i].value * ky[j].value,
                ix: i,
                iy: j,
                values,
            }
        })
        .collect();
    Ok(KlBasis {
        modes,
        quadrature_weight: cov_x.weight() * cov_y.weight(),
        trace,
        rescale_pointwise_variance: false,
    })
}

/// Field realization `y(x_c) = Σ_i √λ_i ξ_i e_i(x_c)` at every centroid.
pub fn sample_field(basis: &KlBasis, xi: &[f64]) -> Result<Vec<f64>> {
    check_len("KL coordinates", basis.n_terms(), xi.len())?;
    let mut y = vec![0.0; basis.n_points()];
    for (m, &x) in basis.modes.iter().zip(xi) {
        let amp = m.eigenvalue.sqrt() * x;
        for (yc, e) in y.iter_mut().zip(&m.values) {
            *yc += amp * e;
        }
    }
    if basis.rescale_pointwise_variance {
        for (yc, v) in y.iter_mut().zip(basis.pointwise_variance()) {
            *yc /= v.sqrt();
        }
    }
    Ok(y)
}

/// Uniform marginal `U(a, b)` for Young's modulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusMarginal {
    a: f64,
    b: f64,
}

impl ModulusMarginal {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(Error::InvalidParameter(format!("need 0 < a < b, got a={a}, b={b}")));
        }
        Ok(Self { a, b })
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.b
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.a + self.b)
    }
}

/// Standard normal CDF (absolute error below 1e-10).
pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Standard normal quantile.
pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `E = a + (b − a) Φ(y)` element-wise.
pub fn field_to_modulus(y: &[f64], marginal: &ModulusMarginal) -> Vec<f64> {
    let width = marginal.b - marginal.a;
    y.iter().map(|&v| marginal.a + width * std_normal_cdf(v)).collect()
}
