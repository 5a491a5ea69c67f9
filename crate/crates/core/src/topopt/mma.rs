//! The Method of Moving Asymptotes (Svanberg), in the standard formulation
//!
//! ```text
//! min  f₀(x) + a₀ z + Σ (c_i y_i + ½ d_i y_i²)
//! s.t. f_i(x) − a_i z − y_i ≤ 0,   xmin ≤ x ≤ xmax,   y, z ≥ 0
//! ```
//!
//! Each step builds the convex separable approximation about the current
//! asymptotes and solves it with a primal-dual interior-point method.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmaParams {
    pub move_limit: f64,
    pub asy_init: f64,
    pub asy_incr: f64,
    pub asy_decr: f64,
    pub albefa: f64,
    pub raa0: f64,
    /// Final barrier parameter of the subproblem solver.
    pub epsimin: f64,
    pub a0: f64,
    /// Per-constraint `a_i`, `c_i`, `d_i` (shared by all constraints).
    pub a: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for MmaParams {
    fn default() -> Self {
        Self {
            move_limit: 0.5,
            asy_init: 0.5,
            asy_incr: 1.2,
            asy_decr: 0.7,
            albefa: 0.1,
            raa0: 1e-5,
            epsimin: 1e-9,
            a0: 1.0,
            a: 0.0,
            c: 1000.0,
            d: 1.0,
        }
    }
}

/// Iteration history and asymptotes of one MMA run.
#[derive(Debug, Clone)]
pub struct MmaState {
    n: usize,
    m: usize,
    iter: usize,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
    params: MmaParams,
}

/// Result of one MMA step.
#[derive(Debug, Clone)]
pub struct MmaStep {
    pub x: Vec<f64>,
    /// Artificial constraint-relaxation variables; a positive entry means the
    /// subproblem could not satisfy that constraint.
    pub y: Vec<f64>,
    pub z: f64,
    pub lambda: Vec<f64>,
}

impl MmaStep {
    /// Index of the first constraint the subproblem had to relax.
    pub fn infeasible_constraint(&self, tol: f64) -> Option<usize> {
        self.y.iter().position(|&y| y > tol)
    }
}

impl MmaState {
    pub fn new(n: usize, m: usize, params: MmaParams) -> Self {
        Self {
            n,
            m,
            iter: 0,
            xold1: Vec::new(),
            xold2: Vec::new(),
            low: vec![0.0; n],
            upp: vec![0.0; n],
            params,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn asymptotes(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.upp)
    }

    fn update_asymptotes(&mut self, x: &[f64], xmin: &[f64], xmax: &[f64]) {
        let p = &self.params;
        if self.iter <= 2 {
            for j in 0..self.n {
                let range = xmax[j] - xmin[j];
                self.low[j] = x[j] - p.asy_init * range;
                self.upp[j] = x[j] + p.asy_init * range;
            }
            return;
        }
        for j in 0..self.n {
            let range = xmax[j] - xmin[j];
            let trend = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
            let factor = if trend > 0.0 {
                p.asy_incr
            } else if trend < 0.0 {
                p.asy_decr
            } else {
                1.0
            };
            let low = x[j] - factor * (self.xold1[j] - self.low[j]);
            let upp = x[j] + factor * (self.upp[j] - self.xold1[j]);
            self.low[j] = low.clamp(x[j] - 10.0 * range, x[j] - 0.01 * range);
            self.upp[j] = upp.clamp(x[j] + 0.01 * range, x[j] + 10.0 * range);
        }
    }

    /// Performs one MMA iteration from `x`.
    ///
    /// `df0` has length `n`; `g` holds the `m` constraint values (feasible
    /// when `≤ 0`) and `dg` their gradients, one row per constraint.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        x: &[f64],
        df0: &[f64],
        g: &[f64],
        dg: &[Vec<f64>],
        xmin: &[f64],
        xmax: &[f64],
    ) -> Result<MmaStep> {
        let (n, m) = (self.n, self.m);
        check_len("design vector", n, x.len())?;
        check_len("objective gradient", n, df0.len())?;
        check_len("constraint values", m, g.len())?;
        check_len("constraint gradients", m, dg.len())?;
        check_len("lower bounds", n, xmin.len())?;
        check_len("upper bounds", n, xmax.len())?;
        for row in dg {
            check_len("constraint gradient", n, row.len())?;
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(x) || !finite(df0) || !finite(g) || dg.iter().any(|r| !finite(r)) {
            return Err(Error::NonFinite("MMA input"));
        }
        for j in 0..n {
            if !(xmin[j] < xmax[j]) {
                return Err(Error::InvalidParameter(format!(
                    "empty bound interval [{}, {}] for variable {j}",
                    xmin[j], xmax[j]
                )));
            }
        }

        self.iter += 1;
        self.update_asymptotes(x, xmin, xmax);
        let p = self.params.clone();

        let mut alfa = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut pm = vec![vec![0.0; n]; m];
        let mut qm = vec![vec![0.0; n]; m];
        let mut b = vec![0.0; m];
        for j in 0..n {
            let range = xmax[j] - xmin[j];
            alfa[j] = (self.low[j] + p.albefa * (x[j] - self.low[j]))
                .max(x[j] - p.move_limit * range)
                .max(xmin[j]);
            beta[j] = (self.upp[j] - p.albefa * (self.upp[j] - x[j]))
                .min(x[j] + p.move_limit * range)
                .min(xmax[j]);
            let inv_range = 1.0 / range.max(1e-5);
            let ux2 = (self.upp[j] - x[j]).powi(2);
            let xl2 = (x[j] - self.low[j]).powi(2);
            let (pos, neg) = (df0[j].max(0.0), (-df0[j]).max(0.0));
            let pq = 0.001 * (pos + neg) + p.raa0 * inv_range;
            p0[j] = (pos + pq) * ux2;
            q0[j] = (neg + pq) * xl2;
            for i in 0..m {
                let (pos, neg) = (dg[i][j].max(0.0), (-dg[i][j]).max(0.0));
                let pq = 0.001 * (pos + neg) + p.raa0 * inv_range;
                pm[i][j] = (pos + pq) * ux2;
                qm[i][j] = (neg + pq) * xl2;
                b[i] += pm[i][j] / (self.upp[j] - x[j]) + qm[i][j] / (x[j] - self.low[j]);
            }
        }
        for i in 0..m {
            b[i] -= g[i];
        }

        let sub = Subproblem {
            n,
            m,
            low: &self.low,
            upp: &self.upp,
            alfa: &alfa,
            beta: &beta,
            p0: &p0,
            q0: &q0,
            pm: &pm,
            qm: &qm,
            b: &b,
            params: &p,
        };
        let out = sub.solve()?;

        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
        Ok(out)
    }
}

struct Subproblem<'a> {
    n: usize,
    m: usize,
    low: &'a [f64],
    upp: &'a [f64],
    alfa: &'a [f64],
    beta: &'a [f64],
    p0: &'a [f64],
    q0: &'a [f64],
    pm: &'a [Vec<f64>],
    qm: &'a [Vec<f64>],
    b: &'a [f64],
    params: &'a MmaParams,
}

/// Primal-dual iterate of the subproblem.
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

impl Point {
    fn axpy(&self, t: f64, d: &Point) -> Point {
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u + t * v).collect();
        Point {
            x: add(&self.x, &d.x),
            y: add(&self.y, &d.y),
            z: self.z + t * d.z,
            lam: add(&self.lam, &d.lam),
            xsi: add(&self.xsi, &d.xsi),
            eta: add(&self.eta, &d.eta),
            mu: add(&self.mu, &d.mu),
            zet: self.zet + t * d.zet,
            s: add(&self.s, &d.s),
        }
    }
}

impl Subproblem<'_> {
    fn plam_qlam(&self, pt: &Point) -> (Vec<f64>, Vec<f64>) {
        let mut plam = self.p0.to_vec();
        let mut qlam = self.q0.to_vec();
        for i in 0..self.m {
            for j in 0..self.n {
                plam[j] += self.pm[i][j] * pt.lam[i];
                qlam[j] += self.qm[i][j] * pt.lam[i];
            }
        }
        (plam, qlam)
    }

    fn gvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                (0..self.n)
                    .map(|j| self.pm[i][j] / (self.upp[j] - x[j]) + self.qm[i][j] / (x[j] - self.low[j]))
                    .sum()
            })
            .collect()
    }

    fn residual(&self, pt: &Point, epsi: f64) -> Vec<f64> {
        let p = self.params;
        let (plam, qlam) = self.plam_qlam(pt);
        let gvec = self.gvec(&pt.x);
        let mut r = Vec::with_capacity(3 * self.n + 4 * self.m + 2);
        for j in 0..self.n {
            let dpsidx = plam[j] / (self.upp[j] - pt.x[j]).powi(2) - qlam[j] / (pt.x[j] - self.low[j]).powi(2);
            r.push(dpsidx - pt.xsi[j] + pt.eta[j]);
        }
        for i in 0..self.m {
            r.push(p.c + p.d * pt.y[i] - pt.mu[i] - pt.lam[i]);
        }
        r.push(p.a0 - pt.zet - p.a * pt.lam.iter().sum::<f64>());
        for i in 0..self.m {
            r.push(gvec[i] - p.a * pt.z - pt.y[i] + pt.s[i] - self.b[i]);
        }
        for j in 0..self.n {
            r.push(pt.xsi[j] * (pt.x[j] - self.alfa[j]) - epsi);
        }
        for j in 0..self.n {
            r.push(pt.eta[j] * (self.beta[j] - pt.x[j]) - epsi);
        }
        for i in 0..self.m {
            r.push(pt.mu[i] * pt.y[i] - epsi);
        }
        r.push(pt.zet * pt.z - epsi);
        for i in 0..self.m {
            r.push(pt.lam[i] * pt.s[i] - epsi);
        }
        r
    }

    fn solve(&self) -> Result<MmaStep> {
        let (n, m) = (self.n, self.m);
        let p = self.params;
        let x: Vec<f64> = (0..n).map(|j| 0.5 * (self.alfa[j] + self.beta[j])).collect();
        let mut pt = Point {
            xsi: (0..n).map(|j| (1.0 / (x[j] - self.alfa[j])).max(1.0)).collect(),
            eta: (0..n).map(|j| (1.0 / (self.beta[j] - x[j])).max(1.0)).collect(),
            x,
            y: vec![1.0; m],
            z: 1.0,
            lam: vec![1.0; m],
            mu: vec![(0.5 * p.c).max(1.0); m],
            zet: 1.0,
            s: vec![1.0; m],
        };
        let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let maxabs = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));

        let mut epsi = 1.0;
        while epsi > p.epsimin {
            let mut res = self.residual(&pt, epsi);
            let mut resnorm = norm(&res);
            let mut resmax = maxabs(&res);
            let mut inner = 0;
            while resmax > 0.9 * epsi && inner < 200 {
                inner += 1;
                let dir = self.newton_direction(&pt, epsi)?;
                // Fraction-to-boundary step length.
                let mut stm: f64 = 1.0;
                let ratio = |v: &[f64], dv: &[f64]| {
                    v.iter().zip(dv).fold(f64::NEG_INFINITY, |a, (x, dx)| a.max(-1.01 * dx / x))
                };
                stm = stm
                    .max(ratio(&pt.y, &dir.y))
                    .max(-1.01 * dir.z / pt.z)
                    .max(ratio(&pt.lam, &dir.lam))
                    .max(ratio(&pt.xsi, &dir.xsi))
                    .max(ratio(&pt.eta, &dir.eta))
                    .max(ratio(&pt.mu, &dir.mu))
                    .max(-1.01 * dir.zet / pt.zet)
                    .max(ratio(&pt.s, &dir.s));
                for j in 0..n {
                    stm = stm
                        .max(-1.01 * dir.x[j] / (pt.x[j] - self.alfa[j]))
                        .max(1.01 * dir.x[j] / (self.beta[j] - pt.x[j]));
                }
                let mut step = 1.0 / stm;
                let old = pt.clone();
                let mut newnorm = 2.0 * resnorm;
                let mut tries = 0;
                while newnorm > resnorm && tries < 50 {
                    tries += 1;
                    pt = old.axpy(step, &dir);
                    res = self.residual(&pt, epsi);
                    newnorm = norm(&res);
                    step /= 2.0;
                }
                resnorm = newnorm;
                resmax = maxabs(&res);
            }
            epsi *= 0.1;
        }
        if pt.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MMA subproblem solution"));
        }
        let x = pt
            .x
            .iter()
            .zip(self.alfa.iter().zip(self.beta))
            .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
            .collect();
        Ok(MmaStep {
            x,
            y: pt.y,
            z: pt.z,
            lambda: pt.lam,
        })
    }

    fn newton_direction(&self, pt: &Point, epsi: f64) -> Result<Point> {
        let (n, m) = (self.n, self.m);
        let p = self.params;
        let (plam, qlam) = self.plam_qlam(pt);
        let gvec = self.gvec(&pt.x);
        let mut delx = vec![0.0; n];
        let mut diagx = vec![0.0; n];
        // GG[i][j] = ∂g_i/∂x_j of the approximation.
        let mut gg = vec![vec![0.0; n]; m];
        for j in 0..n {
            let ux1 = self.upp[j] - pt.x[j];
            let xl1 = pt.x[j] - self.low[j];
            let dpsidx = plam[j] / (ux1 * ux1) - qlam[j] / (xl1 * xl1);
            let xa = pt.x[j] - self.alfa[j];
            let bx = self.beta[j] - pt.x[j];
            delx[j] = dpsidx - epsi / xa + epsi / bx;
            diagx[j] = 2.0 * (plam[j] / ux1.powi(3) + qlam[j] / xl1.powi(3)) + pt.xsi[j] / xa + pt.eta[j] / bx;
            for i in 0..m {
                gg[i][j] = self.pm[i][j] / (ux1 * ux1) - self.qm[i][j] / (xl1 * xl1);
            }
        }
        let dely: Vec<f64> = (0..m).map(|i| p.c + p.d * pt.y[i] - pt.lam[i] - epsi / pt.y[i]).collect();
        let delz = p.a0 - p.a * pt.lam.iter().sum::<f64>() - epsi / pt.z;
        let dellam: Vec<f64> = (0..m)
            .map(|i| gvec[i] - p.a * pt.z - pt.y[i] - self.b[i] + epsi / pt.lam[i])
            .collect();
        let diagy: Vec<f64> = (0..m).map(|i| p.d + pt.mu[i] / pt.y[i]).collect();
        let diaglamyi: Vec<f64> = (0..m).map(|i| pt.s[i] / pt.lam[i] + 1.0 / diagy[i]).collect();

        // Reduced (m+1)×(m+1) system in (dλ, dz).
        let mut aa = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut bb = DVector::<f64>::zeros(m + 1);
        for i in 0..m {
            for k in 0..m {
                aa[(i, k)] = (0..n).map(|j| gg[i][j] * gg[k][j] / diagx[j]).sum();
            }
            aa[(i, i)] += diaglamyi[i];
            aa[(i, m)] = p.a;
            aa[(m, i)] = p.a;
            bb[i] = dellam[i] + dely[i] / diagy[i] - (0..n).map(|j| gg[i][j] * delx[j] / diagx[j]).sum::<f64>();
        }
        aa[(m, m)] = -pt.zet / pt.z;
        bb[m] = delz;
        let sol = aa
            .lu()
            .solve(&bb)
            .ok_or_else(|| Error::Inconsistent("singular MMA subproblem Newton system".into()))?;
        let dlam: Vec<f64> = sol.iter().take(m).copied().collect();
        let dz = sol[m];
        let dx: Vec<f64> = (0..n)
            .map(|j| -delx[j] / diagx[j] - (0..m).map(|i| gg[i][j] * dlam[i]).sum::<f64>() / diagx[j])
            .collect();
        let dy: Vec<f64> = (0..m).map(|i| -dely[i] / diagy[i] + dlam[i] / diagy[i]).collect();
        let dxsi = (0..n)
            .map(|j| {
                let xa = pt.x[j] - self.alfa[j];
                -pt.xsi[j] + epsi / xa - pt.xsi[j] * dx[j] / xa
            })
            .collect();
        let deta = (0..n)
            .map(|j| {
                let bx = self.beta[j] - pt.x[j];
                -pt.eta[j] + epsi / bx + pt.eta[j] * dx[j] / bx
            })
            .collect();
        let dmu = (0..m).map(|i| -pt.mu[i] + epsi / pt.y[i] - pt.mu[i] * dy[i] / pt.y[i]).collect();
        let dzet = -pt.zet + epsi / pt.z - pt.zet * dz / pt.z;
        let ds = (0..m).map(|i| -pt.s[i] + epsi / pt.lam[i] - pt.s[i] * dlam[i] / pt.lam[i]).collect();
        Ok(Point {
            x: dx,
            y: dy,
            z: dz,
            lam: dlam,
            xsi: dxsi,
            eta: deta,
            mu: dmu,
            zet: dzet,
            s: ds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_constraint_converges_to_one() {
        // min x  s.t. 1/x − 1 ≤ 0 on [0.1, 2]; optimum x* = 1.
        let mut mma = MmaState::new(1, 1, MmaParams::default());
        let mut x = vec![1.5];
        let mut steps = 0;
        for _ in 0..30 {
            steps += 1;
            let g = vec![1.0 / x[0] - 1.0];
            let dg = vec![vec![-1.0 / (x[0] * x[0])]];
            let out = mma.step(&x, &[1.0], &g, &dg, &[0.1], &[2.0]).unwrap();
            let change = (out.x[0] - x[0]).abs();
            x = out.x;
            if change < 1e-7 {
                break;
            }
        }
        assert!((x[0] - 1.0).abs() < 1e-4, "x = {}", x[0]);
        assert!(steps <= 30);
    }

    #[test]
    fn linear_objective_walks_to_bound_within_move_limit() {
        let mut mma = MmaState::new(2, 0, MmaParams::default());
        let (xmin, xmax) = (vec![0.0, -1.0], vec![1.0, 3.0]);
        let mut x = vec![0.9, 2.5];
        for _ in 0..20 {
            let out = mma.step(&x, &[1.0, 1.0], &[], &[], &xmin, &xmax).unwrap();
            for j in 0..2 {
                let range = xmax[j] - xmin[j];
                assert!(out.x[j] <= x[j] + 1e-12, "not monotone");
                assert!(x[j] - out.x[j] <= 0.5 * range + 1e-12, "move limit violated");
                assert!(out.x[j] >= xmin[j]);
            }
            x = out.x;
        }
        assert!((x[0] - xmin[0]).abs() < 1e-6 && (x[1] - xmin[1]).abs() < 1e-6, "{x:?}");
    }

    #[test]
    fn oscillation_contracts_asymptotes() {
        let mut mma = MmaState::new(1, 0, MmaParams::default());
        let (xmin, xmax) = ([0.0], [1.0]);
        // Three iterates drive the asymptote rule; afterwards alternate directions.
        let xs = [0.5, 0.6, 0.5, 0.6, 0.5, 0.6];
        let mut widths = Vec::new();
        for (k, &x) in xs.iter().enumerate() {
            let grad = if k % 2 == 0 { -1.0 } else { 1.0 };
            mma.step(&[x], &[grad], &[], &[], &xmin, &xmax).unwrap();
            let (lo, up) = mma.asymptotes();
            assert!(lo[0] < x && x < up[0]);
            widths.push(up[0] - lo[0]);
        }
        for k in 2..xs.len() {
            // (x − x₁)(x₁ − x₂) < 0 every step from the third on.
            assert!((widths[k] / widths[k - 1] - 0.7).abs() < 1e-12, "{widths:?}");
        }
    }

    #[test]
    fn two_constraint_problem() {
        // min x0 + x1 s.t. 1/x0 + 1/x1 ≤ 2 (→ x = (1, 1)) and x0 ≥ 0.5.
        let mut mma = MmaState::new(2, 2, MmaParams::default());
        let mut x = vec![1.8, 1.6];
        for _ in 0..100 {
            let g = vec![(1.0 / x[0] + 1.0 / x[1]) / 2.0 - 1.0, 0.5 - x[0]];
            let dg = vec![vec![-0.5 / (x[0] * x[0]), -0.5 / (x[1] * x[1])], vec![-1.0, 0.0]];
            let out = mma.step(&x, &[1.0, 1.0], &g, &dg, &[0.1, 0.1], &[3.0, 3.0]).unwrap();
            let change = out.x.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            x = out.x;
            if change < 1e-8 {
                break;
            }
        }
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] - 1.0).abs() < 1e-4, "{x:?}");
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut mma = MmaState::new(1, 0, MmaParams::default());
        assert!(mma.step(&[0.5], &[f64::NAN], &[], &[], &[0.0], &[1.0]).is_err());
    }
}
