//! Sequential optimization and reliability assessment: deterministic
//! topology optimization with the modulus field frozen at the current MPPs,
//! alternated with inverse reliability analysis on refitted surrogates.

use std::hash::{DefaultHasher, Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{collocation_points, fit, ChaosSurrogate, CollocationSet, FitTag, HermiteBasis};
use crate::error::{check_len, Error, Result};
use crate::fea::{ElasticitySpec, FeModel};
use crate::random_field::{field_to_modulus, sample_field, CorrLengthMode, KlBasis, ModulusMarginal};
use crate::reliability::{hmv_search, LimitState};
use crate::topopt::{run_dto, DensityField, DensityFilter, DtoConstraint, DtoProblem, MmaParams};
use crate::RHO_MIN;

/// A displacement limit with its target reliability index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityConstraint {
    pub dof: usize,
    pub allowable: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlSettings {
    pub corr_lengths: (f64, f64),
    pub terms: usize,
    pub mode: CorrLengthMode,
    pub rescale_pointwise_variance: bool,
}

impl Default for KlSettings {
    fn default() -> Self {
        Self {
            corr_lengths: (0.6, 0.6),
            terms: 2,
            mode: CorrLengthMode::Absolute,
            rescale_pointwise_variance: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoraSettings {
    pub penal: f64,
    pub filter_radius: f64,
    pub dto_tolerance: f64,
    pub dto_max_iterations: usize,
    pub mma: MmaParams,
    pub chaos_degree: usize,
    pub collocation_count: usize,
    /// Bound on the ∞-norm MPP movement between loops.
    pub tolerance: f64,
    pub max_loops: usize,
    /// Start each DTO from the previous loop's design instead of ρ̃ ≡ 0.5.
    pub warm_start: bool,
}

impl Default for SoraSettings {
    fn default() -> Self {
        Self {
            penal: 3.0,
            filter_radius: 1.5,
            dto_tolerance: 1e-3,
            dto_max_iterations: 400,
            mma: MmaParams::default(),
            chaos_degree: 3,
            collocation_count: 17,
            tolerance: 1e-3,
            max_loops: 20,
            warm_start: true,
        }
    }
}

/// Initial raw density of a standalone DTO run.
pub const START_DENSITY: f64 = 0.5;

/// Everything a SORA run needs, with the mesh-dependent pieces prebuilt.
#[derive(Debug, Clone)]
pub struct RbtoProblem {
    model: FeModel,
    filter: DensityFilter,
    basis: KlBasis,
    marginal: ModulusMarginal,
    constraints: Vec<ReliabilityConstraint>,
    chaos: HermiteBasis,
    collocation: CollocationSet,
    settings: SoraSettings,
}

impl RbtoProblem {
    pub fn new(
        grid: crate::fea::StructuredGrid,
        constraints: Vec<ReliabilityConstraint>,
        marginal: ModulusMarginal,
        kl: KlSettings,
        settings: SoraSettings,
    ) -> Result<Self> {
        if constraints.is_empty() {
            return Err(Error::InvalidParameter("at least one constraint is required".into()));
        }
        for (i, c) in constraints.iter().enumerate() {
            if !(c.beta >= 0.0) || !c.beta.is_finite() {
                return Err(Error::InvalidParameter(format!("beta must be ≥ 0, got {}", c.beta)));
            }
            if !(c.allowable > 0.0) || !c.allowable.is_finite() {
                return Err(Error::InvalidParameter(format!("allowable must be > 0, got {}", c.allowable)));
            }
            if c.dof >= grid.n_dofs() {
                return Err(Error::IndexOutOfRange { what: "constraint dof", index: c.dof, len: grid.n_dofs() });
            }
            if constraints[..i].iter().any(|o| o.dof == c.dof) {
                return Err(Error::InvalidParameter(format!("duplicate constraint dof {}", c.dof)));
            }
        }
        if settings.max_loops == 0 || !(settings.tolerance > 0.0) {
            return Err(Error::InvalidParameter("SORA needs a positive tolerance and loop cap".into()));
        }
        let filter = DensityFilter::new(&grid, settings.filter_radius)?;
        let basis = KlBasis::for_grid(&grid, kl.corr_lengths, kl.mode, kl.terms)?
            .with_pointwise_rescaling(kl.rescale_pointwise_variance);
        let chaos = HermiteBasis::new(kl.terms, settings.chaos_degree)?;
        let collocation = collocation_points(&chaos, settings.collocation_count)?;
        let model = FeModel::new(grid, ElasticitySpec::default())?;
        Ok(Self {
            model,
            filter,
            basis,
            marginal,
            constraints,
            chaos,
            collocation,
            settings,
        })
    }

    pub fn model(&self) -> &FeModel {
        &self.model
    }

    pub fn filter(&self) -> &DensityFilter {
        &self.filter
    }

    pub fn kl_basis(&self) -> &KlBasis {
        &self.basis
    }

    pub fn marginal(&self) -> ModulusMarginal {
        self.marginal
    }

    pub fn constraints(&self) -> &[ReliabilityConstraint] {
        &self.constraints
    }

    pub fn settings(&self) -> &SoraSettings {
        &self.settings
    }

    pub fn chaos_basis(&self) -> &HermiteBasis {
        &self.chaos
    }

    pub fn collocation(&self) -> &CollocationSet {
        &self.collocation
    }

    /// Per-element modulus at KL coordinates `xi`.
    pub fn realize_modulus(&self, xi: &[f64]) -> Result<Vec<f64>> {
        realize_modulus(&self.basis, &self.marginal, xi)
    }

    /// Deterministic optimization with one modulus field per constraint.
    pub fn run_dto_with(&self, moduli: Vec<Vec<f64>>, start: &[f64]) -> Result<crate::topopt::DtoResult> {
        check_len("modulus fields", self.constraints.len(), moduli.len())?;
        let constraints = self
            .constraints
            .iter()
            .zip(moduli)
            .map(|(c, modulus)| DtoConstraint { dof: c.dof, allowable: c.allowable, modulus })
            .collect();
        let mut dto = DtoProblem::new(&self.model, &self.filter, constraints);
        dto.penal = self.settings.penal;
        dto.tolerance = self.settings.dto_tolerance;
        dto.max_iterations = self.settings.dto_max_iterations;
        dto.mma = self.settings.mma.clone();
        run_dto(&dto, start)
    }

    /// `|u_dof|` of constraint `which` for `design` under the field at `xi`.
    pub fn response(&self, design: &DensityField, which: usize, xi: &[f64]) -> Result<f64> {
        let c = self.constraint(which)?;
        let full = self.model.grid().expand_active(design.physical(), RHO_MIN)?;
        let moduli = self.realize_modulus(xi)?;
        let sol = self.model.assemble_solve(&full, &moduli, self.settings.penal)?;
        Ok(sol.displacement_at(c.dof)?.abs())
    }

    /// Fits the chaos surrogate of `|u_dof|` for `design` at the collocation
    /// points (one FEA solve per point).
    pub fn response_surface(&self, design: &DensityField, which: usize) -> Result<ChaosSurrogate> {
        let c = self.constraint(which)?;
        let responses: Vec<f64> = self
            .collocation
            .points
            .par_iter()
            .map(|xi| self.response(design, which, xi))
            .collect::<Result<_>>()?;
        Ok(fit(&self.collocation, &responses, &self.chaos)?.with_tag(FitTag {
            dof: c.dof,
            design_hash: design_hash(design),
        }))
    }

    fn constraint(&self, which: usize) -> Result<&ReliabilityConstraint> {
        self.constraints.get(which).ok_or(Error::IndexOutOfRange {
            what: "constraint",
            index: which,
            len: self.constraints.len(),
        })
    }
}

/// Field realization at `xi` mapped through the modulus marginal.
pub fn realize_modulus(basis: &KlBasis, marginal: &ModulusMarginal, xi: &[f64]) -> Result<Vec<f64>> {
    Ok(field_to_modulus(&sample_field(basis, xi)?, marginal))
}

/// Hash of the physical density bits, used to tag surrogates.
pub fn design_hash(design: &DensityField) -> u64 {
    let mut h = DefaultHasher::new();
    for v in design.physical() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Outcome of one SORA loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoraLoop {
    pub index: usize,
    pub volume_fraction: f64,
    pub dto_iterations: usize,
    pub dto_converged: bool,
    /// New MPP per constraint.
    pub mpp: Vec<Vec<f64>>,
    /// Limit state at each MPP.
    pub g_at_mpp: Vec<f64>,
    pub hmv_iterations: Vec<usize>,
    /// Surrogate mean and standard deviation of `|u_dof|` per constraint.
    pub surrogate_mean: Vec<f64>,
    pub surrogate_std: Vec<f64>,
    pub fit_residual: Vec<f64>,
    /// Largest ∞-norm MPP change over the constraints.
    pub mpp_movement: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoraState {
    pub loop_index: usize,
    pub design: DensityField,
    /// Current MPP per constraint (the one that produced `design` is the
    /// previous entry of the history).
    pub mpp: Vec<Vec<f64>>,
    pub history: Vec<SoraLoop>,
    pub converged: bool,
    /// Surrogates fitted at the final design.
    pub surrogates: Vec<ChaosSurrogate>,
}

impl SoraState {
    pub fn volume_fraction(&self) -> f64 {
        self.design.volume_fraction()
    }
}

pub fn run_sora(problem: &RbtoProblem) -> Result<SoraState> {
    run_sora_with(problem, |_| {})
}

/// Runs SORA, handing each finished loop to `progress`.
pub fn run_sora_with(problem: &RbtoProblem, mut progress: impl FnMut(&SoraLoop)) -> Result<SoraState> {
    let m = problem.basis.n_terms();
    let nc = problem.constraints.len();
    let n_active = problem.model.grid().n_active();
    let mut mpp = vec![vec![0.0; m]; nc];
    let mut raw = vec![START_DENSITY; n_active];
    let mut history = Vec::new();
    let mut last: Option<(DensityField, Vec<ChaosSurrogate>)> = None;
    let mut converged = false;

    for index in 1..=problem.settings.max_loops {
        let clock = std::time::Instant::now();
        let moduli = mpp.iter().map(|xi| problem.realize_modulus(xi)).collect::<Result<Vec<_>>>()?;
        let start = if problem.settings.warm_start { raw.clone() } else { vec![START_DENSITY; n_active] };
        let dto = problem.run_dto_with(moduli, &start)?;
        if !dto.converged {
            log::warn!("SORA loop {index}: DTO hit its iteration cap");
        }
        let design = dto.design.clone();

        let mut record = SoraLoop {
            index,
            volume_fraction: dto.volume_fraction(),
            dto_iterations: dto.iterations(),
            dto_converged: dto.converged,
            mpp: Vec::with_capacity(nc),
            g_at_mpp: Vec::with_capacity(nc),
            hmv_iterations: Vec::with_capacity(nc),
            surrogate_mean: Vec::with_capacity(nc),
            surrogate_std: Vec::with_capacity(nc),
            fit_residual: Vec::with_capacity(nc),
            mpp_movement: 0.0,
            seconds: 0.0,
        };
        let mut surrogates = Vec::with_capacity(nc);
        for (i, c) in problem.constraints.iter().enumerate() {
            let surrogate = problem.response_surface(&design, i)?;
            let ls = LimitState::new(surrogate.clone(), c.allowable)?;
            let found = hmv_search(&ls, c.beta, &mpp[i])?;
            let movement = found.xi.iter().zip(&mpp[i]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            record.mpp_movement = record.mpp_movement.max(movement);
            record.surrogate_mean.push(surrogate.mean());
            record.surrogate_std.push(surrogate.std_dev());
            record.fit_residual.push(surrogate.residual_norm());
            record.g_at_mpp.push(found.g);
            record.hmv_iterations.push(found.iterations);
            record.mpp.push(found.xi);
            surrogates.push(surrogate);
        }
        record.seconds = clock.elapsed().as_secs_f64();
        log::debug!(
            "SORA loop {index}: vf {:.5}, MPP movement {:.3e}, g {:?}",
            record.volume_fraction,
            record.mpp_movement,
            record.g_at_mpp
        );
        progress(&record);
        let done = record.mpp_movement < problem.settings.tolerance;
        mpp = record.mpp.clone();
        history.push(record);
        raw = design.raw().to_vec();
        last = Some((design, surrogates));
        if done {
            converged = true;
            break;
        }
    }

    let (design, surrogates) = last.expect("at least one SORA loop runs");
    Ok(SoraState {
        loop_index: history.len(),
        design,
        mpp,
        history,
        converged,
        surrogates,
    })
}
