//! Plane-stress Q4 finite-element analysis with per-element Young's modulus.
//!
//! Element `e` has stiffness `ρ_e^p · E_e · K₀`, where `K₀` is the unit-modulus
//! element matrix. Fixed DOFs are removed from the system before the solve.

mod element;
mod grid;
mod solver;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

pub use element::element_stiffness;
pub use grid::StructuredGrid;
pub use solver::{Cholesky, ProfileMatrix};

use crate::error::{check_len, Error, Result};

/// Material data shared by every element: the Poisson ratio. Young's modulus
/// varies per element and is passed to each solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticitySpec {
    poisson: f64,
}

impl ElasticitySpec {
    pub fn new(poisson: f64) -> Result<Self> {
        element_stiffness(poisson)?;
        Ok(Self { poisson })
    }

    pub fn poisson(&self) -> f64 {
        self.poisson
    }
}

impl Default for ElasticitySpec {
    fn default() -> Self {
        Self { poisson: 0.3 }
    }
}

/// A grid together with its element matrix and precomputed assembly plan.
/// Immutable once built; every solve allocates its own factorization.
#[derive(Debug, Clone)]
pub struct FeModel {
    grid: StructuredGrid,
    spec: ElasticitySpec,
    ke: [[f64; 8]; 8],
    /// Reduced equation number of every global DOF (`None` when fixed).
    reduced: Vec<Option<usize>>,
    profile_first: Vec<usize>,
    /// Per element: (local row * 8 + local col, storage position) for every
    /// lower-triangle pair of free DOFs.
    plan: Vec<Vec<(u8, u32)>>,
}

/// Nodal displacements plus the factorization that produced them.
#[derive(Debug, Clone)]
pub struct DisplacementSolution {
    u: Vec<f64>,
    factor: Arc<Cholesky>,
    fingerprint: u64,
}

impl DisplacementSolution {
    pub fn displacements(&self) -> &[f64] {
        &self.u
    }

    /// Signed displacement at `dof`.
    pub fn displacement_at(&self, dof: usize) -> Result<f64> {
        self.u.get(dof).copied().ok_or(Error::IndexOutOfRange {
            what: "dof",
            index: dof,
            len: self.u.len(),
        })
    }
}

impl FeModel {
    pub fn new(grid: StructuredGrid, spec: ElasticitySpec) -> Result<Self> {
        let ke = element_stiffness(spec.poisson())?;
        let mut reduced = vec![None; grid.n_dofs()];
        let mut next = 0;
        for (dof, slot) in reduced.iter_mut().enumerate() {
            if !grid.is_fixed(dof) {
                *slot = Some(next);
                next += 1;
            }
        }
        if next == 0 {
            return Err(Error::InvalidParameter("every DOF is fixed".into()));
        }
        let mut first: Vec<usize> = (0..next).collect();
        for e in 0..grid.n_elements() {
            let eq: Vec<usize> = grid.element_dofs(e).iter().filter_map(|&d| reduced[d]).collect();
            if let Some(&lo) = eq.iter().min() {
                for &r in &eq {
                    first[r] = first[r].min(lo);
                }
            }
        }
        let layout = ProfileMatrix::with_profile(first.clone());
        let plan = (0..grid.n_elements())
            .map(|e| {
                let dofs = grid.element_dofs(e);
                let mut entries = Vec::with_capacity(36);
                for a in 0..8 {
                    for b in 0..8 {
                        if let (Some(ra), Some(rb)) = (reduced[dofs[a]], reduced[dofs[b]]) {
                            if rb <= ra {
                                let pos = layout.position(ra, rb).expect("profile covers element");
                                entries.push(((a * 8 + b) as u8, pos as u32));
                            }
                        }
                    }
                }
                entries
            })
            .collect();
        Ok(Self {
            grid,
            spec,
            ke,
            reduced,
            profile_first: first,
            plan,
        })
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn spec(&self) -> ElasticitySpec {
        self.spec
    }

    pub fn element_matrix(&self) -> &[[f64; 8]; 8] {
        &self.ke
    }

    pub fn n_equations(&self) -> usize {
        self.profile_first.len()
    }

    fn validate(&self, densities: &[f64], moduli: &[f64], penal: f64) -> Result<()> {
        let n = self.grid.n_elements();
        check_len("element densities", n, densities.len())?;
        check_len("element moduli", n, moduli.len())?;
        if !penal.is_finite() || penal < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "penalization exponent must be >= 1, got {penal}"
            )));
        }
        for &r in densities {
            if !r.is_finite() {
                return Err(Error::NonFinite("element densities"));
            }
            if !(r > 0.0 && r <= 1.0 + 1e-12) {
                return Err(Error::InvalidParameter(format!("density {r} outside (0, 1]")));
            }
        }
        for &m in moduli {
            if !m.is_finite() {
                return Err(Error::NonFinite("element moduli"));
            }
            if m <= 0.0 {
                return Err(Error::InvalidParameter(format!("Young's modulus {m} is not positive")));
            }
        }
        Ok(())
    }

    fn fingerprint(densities: &[f64], moduli: &[f64], penal: f64) -> u64 {
        let mut h = DefaultHasher::new();
        for v in densities.iter().chain(moduli).chain(std::iter::once(&penal)) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// Assembles `K(ρ)` with element modulus `ρ_e^p · E_e`, factors it and
    /// solves for the grid's load vector.
    ///
    /// `densities` and `moduli` are per element (passive ones included).
    pub fn assemble_solve(
        &self,
        densities: &[f64],
        moduli: &[f64],
        penal: f64,
    ) -> Result<DisplacementSolution> {
        self.validate(densities, moduli, penal)?;
        let mut k = ProfileMatrix::with_profile(self.profile_first.clone());
        {
            let data = k.data_mut();
            let ke_flat: Vec<f64> = self.ke.iter().flatten().copied().collect();
            for (e, entries) in self.plan.iter().enumerate() {
                let scale = densities[e].powf(penal) * moduli[e];
                for &(idx, pos) in entries {
                    data[pos as usize] += scale * ke_flat[idx as usize];
                }
            }
        }
        let factor = k.factor()?;
        let f = self.grid.load_vector();
        let mut rhs = vec![0.0; self.n_equations()];
        for (dof, r) in self.reduced.iter().enumerate() {
            if let Some(r) = r {
                rhs[*r] = f[dof];
            }
        }
        factor.solve_in_place(&mut rhs);
        let mut u = vec![0.0; self.grid.n_dofs()];
        for (dof, r) in self.reduced.iter().enumerate() {
            if let Some(r) = r {
                u[dof] = rhs[*r];
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("displacements"));
        }
        Ok(DisplacementSolution {
            u,
            factor: Arc::new(factor),
            fingerprint: Self::fingerprint(densities, moduli, penal),
        })
    }

    /// Element-by-element product `K(ρ) u` over all DOFs (fixed ones
    /// included, where it yields the support reactions).
    pub fn apply_stiffness(&self, densities: &[f64], moduli: &[f64], penal: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_dofs()];
        for e in 0..self.grid.n_elements() {
            let scale = densities[e].powf(penal) * moduli[e];
            let dofs = self.grid.element_dofs(e);
            for a in 0..8 {
                let s: f64 = (0..8).map(|b| self.ke[a][b] * u[dofs[b]]).sum();
                out[dofs[a]] += scale * s;
            }
        }
        out
    }

    /// Norm of `K u − f` restricted to the free DOFs.
    pub fn residual_norm(&self, densities: &[f64], moduli: &[f64], penal: f64, sol: &DisplacementSolution) -> f64 {
        let ku = self.apply_stiffness(densities, moduli, penal, &sol.u);
        let f = self.grid.load_vector();
        (0..self.grid.n_dofs())
            .filter(|&d| self.reduced[d].is_some())
            .map(|d| (ku[d] - f[d]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Sensitivity `∂u_dof/∂ρ_e` of one displacement component with respect
    /// to every element density (passive elements included).
    ///
    /// Uses the adjoint vector `λ` solving `K λ = e_dof` with the cached
    /// factorization: `∂u_dof/∂ρ_e = −p ρ_e^{p−1} E_e λ_eᵀ K₀ u_e`.
    pub fn displacement_gradient_all(
        &self,
        densities: &[f64],
        moduli: &[f64],
        penal: f64,
        sol: &DisplacementSolution,
        dof: usize,
    ) -> Result<Vec<f64>> {
        self.validate(densities, moduli, penal)?;
        if Self::fingerprint(densities, moduli, penal) != sol.fingerprint {
            return Err(Error::Inconsistent(
                "solution was computed for different densities, moduli or penalization".into(),
            ));
        }
        let n_dofs = self.grid.n_dofs();
        if dof >= n_dofs {
            return Err(Error::IndexOutOfRange { what: "dof", index: dof, len: n_dofs });
        }
        let mut grad = vec![0.0; self.grid.n_elements()];
        let Some(r) = self.reduced[dof] else {
            return Ok(grad);
        };
        let mut rhs = vec![0.0; self.n_equations()];
        rhs[r] = 1.0;
        sol.factor.solve_in_place(&mut rhs);
        let mut lambda = vec![0.0; n_dofs];
        for (d, r) in self.reduced.iter().enumerate() {
            if let Some(r) = r {
                lambda[d] = rhs[*r];
            }
        }
        for (e, g) in grad.iter_mut().enumerate() {
            let dofs = self.grid.element_dofs(e);
            let mut energy = 0.0;
            for a in 0..8 {
                let ku: f64 = (0..8).map(|b| self.ke[a][b] * sol.u[dofs[b]]).sum();
                energy += lambda[dofs[a]] * ku;
            }
            *g = -penal * densities[e].powf(penal - 1.0) * moduli[e] * energy;
        }
        Ok(grad)
    }

    /// [`displacement_gradient_all`](Self::displacement_gradient_all)
    /// restricted to the active (design) elements, in ascending element order.
    pub fn adjoint_gradient(
        &self,
        densities: &[f64],
        moduli: &[f64],
        penal: f64,
        sol: &DisplacementSolution,
        dof: usize,
    ) -> Result<Vec<f64>> {
        let all = self.displacement_gradient_all(densities, moduli, penal, sol, dof)?;
        Ok(all
            .into_iter()
            .enumerate()
            .filter(|(e, _)| self.grid.is_active(*e))
            .map(|(_, g)| g)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain Gaussian elimination with partial pivoting, used as an oracle.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let m = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= m * a[c][k];
                }
                b[r] -= m * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    fn single_element() -> FeModel {
        let mut g = StructuredGrid::new(1, 1).unwrap();
        for i in 0..=1 {
            g.fix_dof(g.dof_x(i, 0)).unwrap();
            g.fix_dof(g.dof_y(i, 0)).unwrap();
        }
        g.add_load(g.dof_y(1, 1), -1.0).unwrap();
        FeModel::new(g, ElasticitySpec::default()).unwrap()
    }

    #[test]
    fn single_element_matches_dense_oracle() {
        let model = single_element();
        let sol = model.assemble_solve(&[1.0], &[1.0], 3.0).unwrap();
        let g = model.grid();
        let ke = element_stiffness(0.3).unwrap();
        let dofs = g.element_dofs(0);
        let free: Vec<usize> = (0..8).filter(|&a| !g.is_fixed(dofs[a])).collect();
        let a: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| ke[i][j]).collect()).collect();
        let f = g.load_vector();
        let b: Vec<f64> = free.iter().map(|&i| f[dofs[i]]).collect();
        let x = dense_solve(a, b);
        for (k, &i) in free.iter().enumerate() {
            assert!((sol.displacement_at(dofs[i]).unwrap() - x[k]).abs() < 1e-10);
        }
        for &d in g.fixed_dofs() {
            assert_eq!(sol.displacement_at(d).unwrap(), 0.0);
        }
    }

    #[test]
    fn doubling_modulus_halves_displacement() {
        let model = single_element();
        let u1 = model.assemble_solve(&[1.0], &[1.0], 3.0).unwrap();
        let u2 = model.assemble_solve(&[1.0], &[2.0], 3.0).unwrap();
        for (a, b) in u1.displacements().iter().zip(u2.displacements()) {
            assert!((a - 2.0 * b).abs() < 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn load_dof_equals_compliance_for_unit_load() {
        let model = single_element();
        let sol = model.assemble_solve(&[0.7], &[1.3], 3.0).unwrap();
        let f = model.grid().load_vector();
        let fu: f64 = f.iter().zip(sol.displacements()).map(|(a, b)| a * b).sum();
        let d = model.grid().dof_y(1, 1);
        assert!((fu + sol.displacement_at(d).unwrap()).abs() < 1e-12);
        assert!(sol.displacement_at(1000).is_err());
    }

    #[test]
    fn unsupported_structure_is_singular() {
        let mut g = StructuredGrid::new(2, 1).unwrap();
        g.fix_dof(g.dof_y(0, 0)).unwrap();
        g.add_load(g.dof_y(2, 1), -1.0).unwrap();
        let model = FeModel::new(g, ElasticitySpec::default()).unwrap();
        let err = model.assemble_solve(&[1.0, 1.0], &[1.0, 1.0], 3.0).unwrap_err();
        assert!(matches!(err, Error::StructuralSingularity { .. }), "{err:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = single_element();
        assert!(matches!(
            model.assemble_solve(&[1.0], &[f64::NAN], 3.0),
            Err(Error::NonFinite(_))
        ));
        assert!(model.assemble_solve(&[1.0], &[-1.0], 3.0).is_err());
        assert!(model.assemble_solve(&[1.0, 1.0], &[1.0], 3.0).is_err());
    }

    #[test]
    fn stale_solution_is_rejected_by_adjoint() {
        let model = single_element();
        let sol = model.assemble_solve(&[1.0], &[1.0], 3.0).unwrap();
        let err = model.adjoint_gradient(&[0.5], &[1.0], 3.0, &sol, 7).unwrap_err();
        assert!(matches!(err, Error::Inconsistent(_)));
    }

    #[test]
    fn fixed_dof_has_zero_gradient() {
        let model = single_element();
        let sol = model.assemble_solve(&[1.0], &[1.0], 3.0).unwrap();
        let g = model.adjoint_gradient(&[1.0], &[1.0], 3.0, &sol, 0).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    fn cantilever(nx: usize, ny: usize, loads: &[(usize, f64)]) -> FeModel {
        let mut g = StructuredGrid::new(nx, ny).unwrap();
        for j in 0..=ny {
            g.fix_dof(g.dof_x(0, j)).unwrap();
            g.fix_dof(g.dof_y(0, j)).unwrap();
        }
        for &(j, fy) in loads {
            g.add_load(g.dof_y(nx, j), fy).unwrap();
            g.add_load(g.dof_x(nx, j), 0.3 * fy).unwrap();
        }
        FeModel::new(g, ElasticitySpec::default()).unwrap()
    }

    fn rng(seed: u64) -> impl FnMut() -> f64 {
        // Small LCG; only spread matters here.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    #[test]
    fn uniaxial_patch_test() {
        for (nx, ny) in [(1, 1), (4, 3), (7, 5)] {
            let mut g = StructuredGrid::new(nx, ny).unwrap();
            for j in 0..=ny {
                g.fix_dof(g.dof_x(0, j)).unwrap();
                let w = if j == 0 || j == ny { 0.5 } else { 1.0 };
                g.add_load(g.dof_x(nx, j), w).unwrap();
            }
            g.fix_dof(g.dof_y(0, 0)).unwrap();
            let model = FeModel::new(g, ElasticitySpec::default()).unwrap();
            let n = nx * ny;
            let sol = model.assemble_solve(&vec![1.0; n], &vec![1.0; n], 3.0).unwrap();
            let g = model.grid();
            for i in 0..=nx {
                for j in 0..=ny {
                    let ux = sol.displacement_at(g.dof_x(i, j)).unwrap();
                    let uy = sol.displacement_at(g.dof_y(i, j)).unwrap();
                    assert!((ux - i as f64).abs() < 1e-10, "{nx}x{ny} ux({i},{j}) = {ux}");
                    assert!((uy + 0.3 * j as f64).abs() < 1e-10, "{nx}x{ny} uy({i},{j}) = {uy}");
                }
            }
        }
    }

    #[test]
    fn residual_and_linearity() {
        let base = cantilever(6, 3, &[(0, -1.0), (3, 0.5)]);
        let scaled = cantilever(6, 3, &[(0, -2.5), (3, 1.25)]);
        let mut r = rng(4);
        let rho: Vec<f64> = (0..18).map(|_| 0.05 + 0.95 * r()).collect();
        let e: Vec<f64> = (0..18).map(|_| 0.5 + r()).collect();
        let s1 = base.assemble_solve(&rho, &e, 3.0).unwrap();
        let s2 = scaled.assemble_solve(&rho, &e, 3.0).unwrap();
        let fnorm = base.grid().load_vector().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(base.residual_norm(&rho, &e, 3.0, &s1) <= 1e-8 * fnorm);
        for (a, b) in s1.displacements().iter().zip(s2.displacements()) {
            assert!((2.5 * a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn adjoint_matches_central_differences() {
        let (nx, ny) = (8, 4);
        for instance in 0..20u64 {
            let mut r = rng(instance);
            let loads = [(0, -1.0 - r()), (ny, 2.0 * r() - 1.0)];
            let model = cantilever(nx, ny, &loads);
            let n = nx * ny;
            let rho: Vec<f64> = (0..n).map(|_| 0.2 + 0.8 * r()).collect();
            let e: Vec<f64> = (0..n).map(|_| 0.8 + 0.6 * r()).collect();
            let dof = model.grid().dof_y(nx, (instance as usize) % (ny + 1));
            let sol = model.assemble_solve(&rho, &e, 3.0).unwrap();
            let grad = model.adjoint_gradient(&rho, &e, 3.0, &sol, dof).unwrap();
            let scale = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let h = 1e-6;
            for k in 0..n {
                let mut up = rho.clone();
                let mut dn = rho.clone();
                up[k] += h;
                dn[k] -= h;
                let fu = model.assemble_solve(&up, &e, 3.0).unwrap().displacement_at(dof).unwrap();
                let fd = model.assemble_solve(&dn, &e, 3.0).unwrap().displacement_at(dof).unwrap();
                let fdg = (fu - fd) / (2.0 * h);
                // Relative to the gradient's largest component: with h = 1e-6 the
                // differences carry solver round-off of order ε·κ·|u|/h.
                let err = (grad[k] - fdg).abs() / scale;
                assert!(err < 1e-5, "instance {instance} element {k}: {} vs {fdg}", grad[k]);
            }
        }
    }

    #[test]
    fn linear_interpolation_single_element() {
        // With p = 1, K scales with ρ, so u ∝ 1/ρ and du/dρ = −u/ρ.
        let model = single_element();
        let dof = model.grid().dof_y(1, 1);
        for (rho, e) in [(0.4, 1.0), (0.9, 2.5)] {
            let sol = model.assemble_solve(&[rho], &[e], 1.0).unwrap();
            let u = sol.displacement_at(dof).unwrap();
            let g = model.adjoint_gradient(&[rho], &[e], 1.0, &sol, dof).unwrap()[0];
            assert!((g + u / rho).abs() < 1e-12 * u.abs());
            let h = 1e-6;
            let up = model.assemble_solve(&[rho + h], &[e], 1.0).unwrap().displacement_at(dof).unwrap();
            let dn = model.assemble_solve(&[rho - h], &[e], 1.0).unwrap().displacement_at(dof).unwrap();
            assert!((g - (up - dn) / (2.0 * h)).abs() < 1e-5 * g.abs());
            // Downward load, downward displacement, adding material lifts it.
            assert!(u < 0.0 && g > 0.0);
        }
    }

    #[test]
    fn mirrored_problem_mirrors_gradient() {
        let (nx, ny) = (6, 3);
        let build = |mirror: bool| {
            let mut g = StructuredGrid::new(nx, ny).unwrap();
            let col = |i: usize| if mirror { nx - i } else { i };
            for j in 0..=ny {
                g.fix_dof(g.dof_x(col(0), j)).unwrap();
                g.fix_dof(g.dof_y(col(0), j)).unwrap();
            }
            g.add_load(g.dof_y(col(nx), 1), -1.0).unwrap();
            FeModel::new(g, ElasticitySpec::default()).unwrap()
        };
        let (a, b) = (build(false), build(true));
        let mut r = rng(9);
        let n = nx * ny;
        let rho: Vec<f64> = (0..n).map(|_| 0.3 + 0.7 * r()).collect();
        let e: Vec<f64> = (0..n).map(|_| 1.0 + r()).collect();
        let mirror_elem = |k: usize| {
            let (ex, ey) = a.grid().element_position(k);
            a.grid().element_index(nx - 1 - ex, ey)
        };
        let perm = |v: &[f64]| (0..n).map(|k| v[mirror_elem(k)]).collect::<Vec<_>>();
        let (rho_b, e_b) = (perm(&rho), perm(&e));
        let sa = a.assemble_solve(&rho, &e, 3.0).unwrap();
        let sb = b.assemble_solve(&rho_b, &e_b, 3.0).unwrap();
        let ga = a.adjoint_gradient(&rho, &e, 3.0, &sa, a.grid().dof_y(nx, 1)).unwrap();
        let gb = b.adjoint_gradient(&rho_b, &e_b, 3.0, &sb, b.grid().dof_y(0, 1)).unwrap();
        for k in 0..n {
            assert!((gb[k] - ga[mirror_elem(k)]).abs() < 1e-10 * ga[mirror_elem(k)].abs().max(1e-6));
        }
    }
}
