use serde::{Deserialize, Serialize};

use super::{check_bounds, DensityField, DensityFilter, MmaParams, MmaState};
use crate::error::{check_len, Error, Result};
use crate::fea::FeModel;
use crate::RHO_MIN;

/// `|u_dof| ≤ allowable`, evaluated with its own per-element modulus field.
#[derive(Debug, Clone, PartialEq)]
pub struct DtoConstraint {
    pub dof: usize,
    pub allowable: f64,
    pub modulus: Vec<f64>,
}

/// Minimize the volume fraction subject to displacement limits.
#[derive(Debug, Clone)]
pub struct DtoProblem<'a> {
    pub model: &'a FeModel,
    pub filter: &'a DensityFilter,
    pub penal: f64,
    pub constraints: Vec<DtoConstraint>,
    /// Stop once the largest raw-density change of one step falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub mma: MmaParams,
}

impl<'a> DtoProblem<'a> {
    pub fn new(model: &'a FeModel, filter: &'a DensityFilter, constraints: Vec<DtoConstraint>) -> Self {
        Self {
            model,
            filter,
            penal: 3.0,
            constraints,
            tolerance: 1e-3,
            max_iterations: 400,
            mma: MmaParams::default(),
        }
    }
}

/// State of one accepted iterate: the values handed to MMA at that step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtoIteration {
    pub iteration: usize,
    pub volume_fraction: f64,
    /// `|u_dof|` per constraint.
    pub displacements: Vec<f64>,
    /// Largest raw-density change produced by this step.
    pub change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtoResult {
    pub design: DensityField,
    pub history: Vec<DtoIteration>,
    /// `|u_dof|` per constraint at the returned design.
    pub displacements: Vec<f64>,
    pub converged: bool,
}

impl DtoResult {
    pub fn volume_fraction(&self) -> f64 {
        self.design.volume_fraction()
    }

    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

struct Evaluation {
    volume_fraction: f64,
    displacements: Vec<f64>,
    /// Scaled constraint values `|u|/u⁰ − 1`.
    g: Vec<f64>,
    dg: Vec<Vec<f64>>,
}

fn evaluate(problem: &DtoProblem, physical: &[f64], with_gradients: bool) -> Result<Evaluation> {
    let grid = problem.model.grid();
    let full = grid.expand_active(physical, RHO_MIN)?;
    let mut displacements = Vec::with_capacity(problem.constraints.len());
    let mut g = Vec::with_capacity(problem.constraints.len());
    let mut dg = Vec::with_capacity(problem.constraints.len());
    for c in &problem.constraints {
        let sol = problem.model.assemble_solve(&full, &c.modulus, problem.penal)?;
        let u = sol.displacement_at(c.dof)?;
        displacements.push(u.abs());
        g.push(u.abs() / c.allowable - 1.0);
        if with_gradients {
            let sign = if u > 0.0 { 1.0 } else if u < 0.0 { -1.0 } else { 0.0 };
            let grad: Vec<f64> = problem
                .model
                .adjoint_gradient(&full, &c.modulus, problem.penal, &sol, c.dof)?
                .into_iter()
                .map(|d| sign * d / c.allowable)
                .collect();
            dg.push(problem.filter.chain_gradient(&grad)?);
        }
    }
    Ok(Evaluation {
        volume_fraction: physical.iter().sum::<f64>() / physical.len() as f64,
        displacements,
        g,
        dg,
    })
}

/// Runs SIMP/MMA from the raw design `start` until the largest design change
/// drops below the tolerance or the iteration cap is hit. A capped run is
/// returned with `converged = false`.
pub fn run_dto(problem: &DtoProblem, start: &[f64]) -> Result<DtoResult> {
    let grid = problem.model.grid();
    let n = grid.n_active();
    check_len("start design", n, start.len())?;
    check_len("filter size", n, problem.filter.len())?;
    check_bounds(start)?;
    if problem.constraints.is_empty() {
        return Err(Error::InvalidParameter("at least one displacement constraint is required".into()));
    }
    for c in &problem.constraints {
        if !(c.allowable > 0.0) {
            return Err(Error::InvalidParameter(format!("allowable displacement must be > 0, got {}", c.allowable)));
        }
        check_len("constraint modulus field", grid.n_elements(), c.modulus.len())?;
    }

    let m = problem.constraints.len();
    let xmin = vec![RHO_MIN; n];
    let xmax = vec![1.0; n];
    let df0 = problem.filter.chain_gradient(&vec![1.0 / n as f64; n])?;
    let mut mma = MmaState::new(n, m, problem.mma.clone());
    let mut x = start.to_vec();
    let mut history = Vec::new();
    let mut converged = false;

    for iteration in 1..=problem.max_iterations {
        let physical = problem.filter.apply(&x)?;
        let eval = evaluate(problem, &physical, true)?;
        let step = mma.step(&x, &df0, &eval.g, &eval.dg, &xmin, &xmax)?;
        if let Some(i) = step.infeasible_constraint(1e-6) {
            log::debug!("iteration {iteration}: MMA subproblem relaxed constraint {i}");
        }
        let change = step.x.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        log::trace!(
            "dto it {iteration}: vf {:.5} u {:?} change {change:.2e}",
            eval.volume_fraction,
            eval.displacements
        );
        history.push(DtoIteration {
            iteration,
            volume_fraction: eval.volume_fraction,
            displacements: eval.displacements,
            change,
        });
        x = step.x;
        if change < problem.tolerance {
            converged = true;
            break;
        }
    }

    let design = DensityField::new(problem.filter, x)?;
    let final_eval = evaluate(problem, design.physical(), false)?;
    Ok(DtoResult {
        design,
        history,
        displacements: final_eval.displacements,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{mbb_half, MbbOptions};

    fn small_mbb() -> (FeModel, DensityFilter, usize) {
        let b = mbb_half(&MbbOptions { nx: 16, ny: 6, load: 1.0, allowable: 60.0 }).unwrap();
        let filter = DensityFilter::new(&b.grid, 1.5).unwrap();
        let dof = b.constraint_dof;
        (FeModel::new(b.grid, Default::default()).unwrap(), filter, dof)
    }

    #[test]
    fn filtered_gradient_matches_finite_differences() {
        let b = mbb_half(&MbbOptions { nx: 8, ny: 4, load: 1.0, allowable: 10.0 }).unwrap();
        let filter = DensityFilter::new(&b.grid, 1.5).unwrap();
        let dof = b.constraint_dof;
        let model = FeModel::new(b.grid, Default::default()).unwrap();
        let n = model.grid().n_elements();
        let moduli = vec![1.2; n];
        let problem = DtoProblem::new(
            &model,
            &filter,
            vec![DtoConstraint { dof, allowable: 1.0, modulus: moduli }],
        );
        for seed in 0..20u64 {
            let raw: Vec<f64> = (0..n)
                .map(|k| 0.3 + 0.6 * (((k as u64 + 1) * (seed + 7) * 2654435761 % 1000) as f64 / 1000.0))
                .collect();
            let eval = evaluate(&problem, &filter.apply(&raw).unwrap(), true).unwrap();
            let grad = &eval.dg[0];
            let scale = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let h = 1e-6;
            for k in 0..n {
                let mut up = raw.clone();
                let mut dn = raw.clone();
                up[k] += h;
                dn[k] -= h;
                let gu = evaluate(&problem, &filter.apply(&up).unwrap(), false).unwrap().g[0];
                let gd = evaluate(&problem, &filter.apply(&dn).unwrap(), false).unwrap().g[0];
                let fd = (gu - gd) / (2.0 * h);
                assert!((grad[k] - fd).abs() / scale < 1e-5, "seed {seed} element {k}: {} vs {fd}", grad[k]);
            }
        }
    }

    #[test]
    fn optimum_has_an_active_constraint_and_is_deterministic() {
        let (model, filter, dof) = small_mbb();
        let n = model.grid().n_elements();
        let solid = model.assemble_solve(&vec![1.0; n], &vec![1.0; n], 3.0).unwrap();
        let allowable = 3.0 * solid.displacement_at(dof).unwrap().abs();
        let problem = DtoProblem::new(
            &model,
            &filter,
            vec![DtoConstraint { dof, allowable, modulus: vec![1.0; n] }],
        );
        let r = run_dto(&problem, &vec![0.5; n]).unwrap();
        assert!(r.converged);
        let slack = allowable - r.displacements[0];
        assert!(slack.abs() < 0.005 * allowable, "slack {slack}");
        assert!(r.volume_fraction() < 0.9 && r.volume_fraction() > 0.1);
        let again = run_dto(&problem, &vec![0.5; n]).unwrap();
        assert_eq!(r, again);
        // Stiffer material needs less of it.
        let stiff = DtoProblem::new(
            &model,
            &filter,
            vec![DtoConstraint { dof, allowable, modulus: vec![1.3; n] }],
        );
        assert!(run_dto(&stiff, &vec![0.5; n]).unwrap().volume_fraction() < r.volume_fraction());
    }

    #[test]
    fn history_matches_fea() {
        let (model, filter, dof) = small_mbb();
        let n = model.grid().n_elements();
        let mut problem = DtoProblem::new(
            &model,
            &filter,
            vec![DtoConstraint { dof, allowable: 60.0, modulus: vec![1.0; n] }],
        );
        problem.max_iterations = 3;
        let r = run_dto(&problem, &vec![0.5; n]).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations(), 3);
        let first = evaluate(&problem, &filter.apply(&vec![0.5; n]).unwrap(), false).unwrap();
        assert_eq!(r.history[0].displacements, first.displacements);
        assert!((r.history[0].volume_fraction - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_problems() {
        let (model, filter, dof) = small_mbb();
        let n = model.grid().n_elements();
        let none = DtoProblem::new(&model, &filter, vec![]);
        assert!(run_dto(&none, &vec![0.5; n]).is_err());
        let p = DtoProblem::new(&model, &filter, vec![DtoConstraint { dof, allowable: 0.0, modulus: vec![1.0; n] }]);
        assert!(run_dto(&p, &vec![0.5; n]).is_err());
        let p = DtoProblem::new(&model, &filter, vec![DtoConstraint { dof, allowable: 1.0, modulus: vec![1.0; n] }]);
        assert!(run_dto(&p, &vec![1.5; n]).is_err());
        assert!(run_dto(&p, &vec![0.5; n - 1]).is_err());
    }
}
