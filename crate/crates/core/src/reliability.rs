//! Inverse reliability analysis on a fitted surrogate: the most probable
//! point (MPP) minimizing the limit state on the sphere `‖ψ‖ = β`.

use serde::{Deserialize, Serialize};

use crate::chaos::ChaosSurrogate;
use crate::error::{Error, Result};

/// Iterate movement below which the search stops.
pub const HMV_TOLERANCE: f64 = 1e-6;
/// Iteration cap of a single search.
pub const HMV_MAX_ITERATIONS: usize = 200;
const ZERO_GRADIENT_SHIFT: f64 = 1e-6;
const SWEEP_SAMPLES: usize = 3600;

/// `g(ψ) = u⁰ − û(ψ)`: positive is safe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitState {
    pub surrogate: ChaosSurrogate,
    pub allowable: f64,
}

impl LimitState {
    pub fn new(surrogate: ChaosSurrogate, allowable: f64) -> Result<Self> {
        if !allowable.is_finite() {
            return Err(Error::NonFinite("allowable displacement"));
        }
        Ok(Self {
            surrogate,
            allowable,
        })
    }

    pub fn dim(&self) -> usize {
        self.surrogate.basis().n_vars()
    }

    pub fn value(&self, psi: &[f64]) -> Result<f64> {
        Ok(self.allowable - self.surrogate.eval(psi)?)
    }

    pub fn gradient(&self, psi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.surrogate.grad(psi)?.into_iter().map(|v| -v).collect())
    }
}

/// Update rule used to produce an iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HmvMode {
    /// Advanced mean value: step against the current normal.
    Amv,
    /// Conjugate mean value: step against the sum of the last three normals.
    Cmv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MppResult {
    /// MPP in standard normal space.
    pub psi: Vec<f64>,
    /// MPP in the space of the KL variables.
    pub xi: Vec<f64>,
    pub g: f64,
    pub iterations: usize,
    pub modes: Vec<HmvMode>,
    /// The iteration met the movement tolerance.
    pub converged: bool,
    /// A global search found a lower `g` than the iteration and replaced it.
    pub fallback_used: bool,
}

/// Hybrid mean value search from `start`, followed by a global check
/// (angle sweep for two variables, axis multi-start otherwise).
pub fn hmv_search(ls: &LimitState, beta: f64, start: &[f64]) -> Result<MppResult> {
    let n = ls.dim();
    crate::error::check_len("HMV start", n, start.len())?;
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("reliability index must be ≥ 0, got {beta}")));
    }
    if beta == 0.0 {
        let origin = vec![0.0; n];
        return Ok(MppResult {
            g: ls.value(&origin)?,
            xi: mpp_to_physical(&origin),
            psi: origin,
            iterations: 0,
            modes: Vec::new(),
            converged: true,
            fallback_used: false,
        });
    }
    let mut best = hmv_iterate(ls, beta, start)?;
    let candidate = if n == 2 {
        Some(angle_sweep(ls, beta)?)
    } else {
        let mut pick: Option<MppResult> = None;
        for axis in 0..n {
            for sign in [1.0, -1.0] {
                let mut s = vec![0.0; n];
                s[axis] = sign * beta;
                let r = hmv_iterate(ls, beta, &s)?;
                if pick.as_ref().is_none_or(|p| r.g < p.g) {
                    pick = Some(r);
                }
            }
        }
        pick
    };
    if let Some(c) = candidate {
        let scale = 1e-12 * best.g.abs().max(1.0);
        if c.g < best.g - scale {
            log::debug!("HMV local minimum g={} replaced by global search g={}", best.g, c.g);
            best.psi = c.psi;
            best.g = c.g;
            best.fallback_used = true;
        }
    }
    best.xi = mpp_to_physical(&best.psi);
    Ok(best)
}

fn unit_normal(ls: &LimitState, psi: &mut Vec<f64>) -> Result<Vec<f64>> {
    let mut grad = ls.gradient(psi)?;
    let mut norm = l2(&grad);
    if norm == 0.0 {
        log::warn!("zero limit-state gradient at {psi:?}; shifting along the first axis");
        psi[0] += ZERO_GRADIENT_SHIFT;
        grad = ls.gradient(psi)?;
        norm = l2(&grad);
    }
    if !norm.is_finite() {
        return Err(Error::NonFinite("limit-state gradient"));
    }
    if norm == 0.0 {
        // Flat limit state: any direction is a minimizer.
        let mut e = vec![0.0; psi.len()];
        e[0] = 1.0;
        return Ok(e);
    }
    Ok(grad.into_iter().map(|v| v / norm).collect())
}

fn hmv_iterate(ls: &LimitState, beta: f64, start: &[f64]) -> Result<MppResult> {
    let mut psi = start.to_vec();
    let mut normals: Vec<Vec<f64>> = Vec::new();
    let mut modes = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut mode = HmvMode::Amv;
    normals.push(unit_normal(ls, &mut psi)?);
    while iterations < HMV_MAX_ITERATIONS {
        let k = normals.len();
        if k >= 3 {
            let d1: Vec<f64> = sub(&normals[k - 1], &normals[k - 2]);
            let d0: Vec<f64> = sub(&normals[k - 2], &normals[k - 3]);
            let zeta: f64 = d1.iter().zip(&d0).map(|(a, b)| a * b).sum();
            mode = if zeta > 0.0 { HmvMode::Amv } else { HmvMode::Cmv };
        }
        let dir = match mode {
            HmvMode::Amv => normals[k - 1].clone(),
            HmvMode::Cmv => {
                let s: Vec<f64> = (0..psi.len())
                    .map(|i| normals[k - 1][i] + normals[k - 2][i] + normals[k - 3][i])
                    .collect();
                let sn = l2(&s);
                if sn == 0.0 {
                    normals[k - 1].clone()
                } else {
                    s.into_iter().map(|v| v / sn).collect()
                }
            }
        };
        let mut next: Vec<f64> = dir.iter().map(|d| -beta * d).collect();
        iterations += 1;
        modes.push(mode);
        let moved = l2(&sub(&next, &psi));
        let g = ls.value(&next)?;
        if best.as_ref().is_none_or(|(bg, _)| g < *bg) {
            best = Some((g, next.clone()));
        }
        psi = next.clone();
        if moved < HMV_TOLERANCE {
            converged = true;
            break;
        }
        normals.push(unit_normal(ls, &mut next)?);
        if next != psi {
            // The zero-gradient shift moved the point off the sphere.
            let r = l2(&next);
            psi = next.iter().map(|v| v * beta / r).collect();
        }
    }
    let (g, psi) = if converged {
        (ls.value(&psi)?, psi)
    } else {
        log::warn!("HMV did not converge in {HMV_MAX_ITERATIONS} iterations");
        best.expect("at least one iterate")
    };
    Ok(MppResult {
        xi: mpp_to_physical(&psi),
        psi,
        g,
        iterations,
        modes,
        converged,
        fallback_used: false,
    })
}

/// Global minimum of `g` on the circle of radius `beta`: coarse sweep, then
/// golden-section refinement around every coarse local minimum.
fn angle_sweep(ls: &LimitState, beta: f64) -> Result<MppResult> {
    let at = |t: f64| vec![beta * t.cos(), beta * t.sin()];
    let h = std::f64::consts::TAU / SWEEP_SAMPLES as f64;
    let vals: Vec<f64> = (0..SWEEP_SAMPLES)
        .map(|i| ls.value(&at(i as f64 * h)))
        .collect::<Result<_>>()?;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..SWEEP_SAMPLES {
        let prev = vals[(i + SWEEP_SAMPLES - 1) % SWEEP_SAMPLES];
        let next = vals[(i + 1) % SWEEP_SAMPLES];
        if vals[i] <= prev && vals[i] <= next {
            let (t, g) = golden(|t| ls.value(&at(t)).unwrap_or(f64::INFINITY), (i as f64 - 1.0) * h, (i as f64 + 1.0) * h);
            if g < best.0 {
                best = (g, t);
            }
        }
    }
    let psi = at(best.1);
    Ok(MppResult {
        g: ls.value(&psi)?,
        xi: psi.clone(),
        psi,
        iterations: 0,
        modes: Vec::new(),
        converged: true,
        fallback_used: true,
    })
}

fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-12 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    let t = 0.5 * (lo + hi);
    (t, f(t))
}

/// Standard normal space to KL-variable space. The KL variables are
/// independent standard normals, so this is the identity.
pub fn mpp_to_physical(psi: &[f64]) -> Vec<f64> {
    psi.to_vec()
}

/// Inverse of [`mpp_to_physical`].
pub fn physical_to_standard(xi: &[f64]) -> Vec<f64> {
    xi.to_vec()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::HermiteBasis;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn surrogate(coeffs: Vec<f64>) -> ChaosSurrogate {
        ChaosSurrogate::from_coefficients(HermiteBasis::new(2, 3).unwrap(), coeffs).unwrap()
    }

    fn linear_state() -> LimitState {
        // g = 5 − (ψ₁ + 2ψ₂)
        let mut a = vec![0.0; 10];
        a[1] = 1.0;
        a[2] = 2.0;
        LimitState::new(surrogate(a), 5.0).unwrap()
    }

    fn sweep_oracle(ls: &LimitState, beta: f64) -> f64 {
        let n = 1_000_000;
        (0..n)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / n as f64;
                ls.value(&[beta * t.cos(), beta * t.sin()]).unwrap()
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn random_state(rng: &mut ChaCha8Rng) -> LimitState {
        let a: Vec<f64> = (0..10).map(|k| if k == 0 { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
        LimitState::new(surrogate(a), 3.0).unwrap()
    }

    #[test]
    fn linear_limit_state() {
        let r = hmv_search(&linear_state(), 2.0, &[0.0, 0.0]).unwrap();
        let s5 = 5f64.sqrt();
        assert!((r.psi[0] - 2.0 / s5).abs() < 1e-8 && (r.psi[1] - 4.0 / s5).abs() < 1e-8);
        assert!((r.g - (5.0 - 2.0 * s5)).abs() < 1e-8);
        assert_eq!(r.modes[0], HmvMode::Amv);
        // One step reaches the MPP; the second only confirms it.
        assert!(r.iterations <= 2 && r.converged && !r.fallback_used);
    }

    #[test]
    fn zero_beta_returns_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = hmv_search(&random_state(&mut rng), 0.0, &[0.4, 0.1]).unwrap();
        assert_eq!(r.psi, vec![0.0, 0.0]);
        assert_eq!(r.xi, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_negative_beta() {
        assert!(hmv_search(&linear_state(), -1.0, &[0.0, 0.0]).is_err());
        assert!(hmv_search(&linear_state(), 1.0, &[0.0]).is_err());
    }

    #[test]
    fn zero_gradient_start_is_perturbed() {
        // g = 1 − ψ₁² has zero gradient at the origin.
        let mut a = vec![0.0; 10];
        a[3] = 1.0;
        a[0] = 1.0;
        let ls = LimitState::new(surrogate(a), 2.0).unwrap();
        let r = hmv_search(&ls, 1.5, &[0.0, 0.0]).unwrap();
        assert!((r.psi[0].abs() - 1.5).abs() < 1e-8, "{:?}", r.psi);
    }

    #[test]
    fn identity_transform() {
        assert_eq!(mpp_to_physical(&[1.2, -0.3]), vec![1.2, -0.3]);
        assert_eq!(mpp_to_physical(&[0.0, 0.0]), vec![0.0, 0.0]);
        let p = [0.1 + 0.2, -1e-300];
        assert_eq!(physical_to_standard(&mpp_to_physical(&p)), p.to_vec());
    }

    #[test]
    fn matches_dense_angle_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let ls = random_state(&mut rng);
            for beta in [2.0, 2.5, 3.0] {
                let r = hmv_search(&ls, beta, &[0.0, 0.0]).unwrap();
                assert!((l2(&r.psi) - beta).abs() < 1e-8);
                let oracle = sweep_oracle(&ls, beta);
                assert!(r.g <= oracle + 1e-6, "hmv {} oracle {}", r.g, oracle);
            }
        }
    }

    #[test]
    fn start_angle_robustness() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let ls = random_state(&mut rng);
            let gs: Vec<f64> = (0..8)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / 8.0;
                    hmv_search(&ls, 2.5, &[2.5 * t.cos(), 2.5 * t.sin()]).unwrap().g
                })
                .collect();
            let spread = gs.iter().cloned().fold(f64::MIN, f64::max) - gs.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 1e-6, "{gs:?}");
        }
    }

    #[test]
    fn iterates_stay_on_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let ls = random_state(&mut rng);
            let r = hmv_iterate(&ls, 2.0, &[0.0, 0.0]).unwrap();
            assert!((l2(&r.psi) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn three_variable_multistart() {
        // g = 4 − ψ₃ + 0.2 ψ₁² on β = 1.5: minimum at ψ = (0, 0, 1.5).
        let basis = HermiteBasis::new(3, 2).unwrap();
        let idx = basis.multi_indices().to_vec();
        let mut a = vec![0.0; basis.len()];
        a[idx.iter().position(|t| t == &vec![0, 0, 1]).unwrap()] = 1.0;
        a[idx.iter().position(|t| t == &vec![2, 0, 0]).unwrap()] = -0.2;
        a[0] = -0.2;
        let ls = LimitState::new(ChaosSurrogate::from_coefficients(basis, a).unwrap(), 4.0).unwrap();
        let r = hmv_search(&ls, 1.5, &[0.0, 0.0, 0.0]).unwrap();
        assert!((r.psi[2] - 1.5).abs() < 1e-6, "{:?}", r.psi);
        assert!((r.g - 2.5).abs() < 1e-9);
    }
}
