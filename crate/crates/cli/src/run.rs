//! Mode execution and output directories.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rbto_core::presets::{l_beam, mbb_half, Benchmark, LBeamOptions, MbbOptions};
use rbto_core::random_field::{std_normal_cdf, ModulusMarginal};
use rbto_core::sora::{
    run_sora_with, KlSettings, RbtoProblem, ReliabilityConstraint, SoraLoop, SoraSettings, START_DENSITY,
};
use rbto_core::topopt::{DensityField, DtoIteration, MmaParams};
use rbto_core::verification::{run_mcs, McsConfig};
use serde::Serialize;

use crate::artifacts;
use crate::config::{ProblemKind, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dto,
    Rbto,
    Verify,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Dto => "dto",
            Mode::Rbto => "rbto",
            Mode::Verify => "verify",
        }
    }
}

pub fn benchmark(cfg: &RunConfig) -> Result<Benchmark> {
    Ok(match cfg.problem {
        ProblemKind::Mbb => mbb_half(&MbbOptions { load: cfg.load, allowable: cfg.u_max, ..Default::default() })?,
        ProblemKind::Custom => mbb_half(&MbbOptions { nx: cfg.nx, ny: cfg.ny, load: cfg.load, allowable: cfg.u_max })?,
        ProblemKind::Lbeam => l_beam(&LBeamOptions { load: cfg.load, allowable: cfg.u_max, ..Default::default() })?,
    })
}

/// The SORA problem for one reliability index.
pub fn problem(cfg: &RunConfig, beta: f64) -> Result<RbtoProblem> {
    let bench = benchmark(cfg)?;
    let constraint = ReliabilityConstraint { dof: bench.constraint_dof, allowable: cfg.u_max, beta };
    let kl = KlSettings {
        corr_lengths: (cfg.l1, cfg.l2),
        terms: cfg.kl_terms,
        mode: cfg.corr_length_mode,
        rescale_pointwise_variance: cfg.kl_rescale_pointwise_variance,
    };
    let settings = SoraSettings {
        penal: cfg.simp_p,
        filter_radius: cfg.rmin,
        dto_tolerance: cfg.dto_tol,
        dto_max_iterations: cfg.dto_max_iter,
        mma: MmaParams::default(),
        chaos_degree: cfg.pce_p,
        collocation_count: cfg.colloc_count,
        tolerance: cfg.sora_tol,
        max_loops: cfg.sora_max,
        warm_start: cfg.warm_start,
    };
    Ok(RbtoProblem::new(bench.grid, vec![constraint], ModulusMarginal::new(cfg.a, cfg.b)?, kl, settings)?)
}

/// `<root>/<mode>-<problem>-<hash prefix>`.
pub fn output_dir(cfg: &RunConfig, mode: &str, root: &Path) -> PathBuf {
    let problem = serde_json::to_value(cfg.problem).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
    root.join(format!("{mode}-{problem}-{}", &cfg.content_hash()[..16]))
}

#[derive(Debug, Clone, Serialize)]
pub struct DtoLog {
    pub modulus: f64,
    pub volume_fraction: f64,
    pub converged: bool,
    pub displacement: f64,
    pub history: Vec<DtoIteration>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct McsLog {
    pub source: rbto_core::verification::SampleSource,
    pub count: usize,
    pub seed: u64,
    pub invalid: usize,
    pub failure_probability: f64,
    pub expected_failure_probability: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub srsm_mean: f64,
    pub srsm_std_dev: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaLog {
    pub beta: f64,
    pub artifacts: String,
    pub volume_fraction: f64,
    pub converged: bool,
    pub loops: Vec<SoraLoop>,
    pub mcs: Option<McsLog>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunLog {
    pub mode: Mode,
    pub config_hash: String,
    pub dto: Option<DtoLog>,
    pub runs: Vec<BetaLog>,
}

impl RunLog {
    /// Volume fraction of the last design produced.
    pub fn final_volume_fraction(&self) -> Option<f64> {
        self.runs.last().map(|r| r.volume_fraction).or(self.dto.as_ref().map(|d| d.volume_fraction))
    }
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub log: RunLog,
}

fn write_design(dir: &Path, cfg: &RunConfig, design: &DensityField) -> Result<()> {
    let grid = benchmark(cfg)?.grid;
    let all = artifacts::element_densities(&grid, design)?;
    artifacts::write(&dir.join("density.csv"), &artifacts::density_csv(&grid, &all))?;
    artifacts::write(&dir.join("density.pgm"), &artifacts::density_pgm(&grid, &all))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Executes one mode and writes its artifacts below `root`.
pub fn run(cfg: &RunConfig, mode: Mode, root: &Path) -> Result<RunOutcome> {
    let dir = output_dir(cfg, mode.name(), root);
    create_dir(&dir)?;
    artifacts::write(&dir.join("config.json"), &json(cfg))?;
    let result = execute(cfg, mode, &dir);
    match result {
        Ok(log) => {
            artifacts::write(&dir.join("run_log.json"), &json(&log))?;
            Ok(RunOutcome { dir, log })
        }
        Err(e) => {
            let _ = artifacts::write(&dir.join("error.json"), &json(&e.record()));
            Err(e)
        }
    }
}

fn execute(cfg: &RunConfig, mode: Mode, dir: &Path) -> Result<RunLog> {
    let mut log = RunLog { mode, config_hash: cfg.content_hash(), dto: None, runs: Vec::new() };
    if mode == Mode::Dto {
        let clock = Instant::now();
        let p = problem(cfg, 0.0)?;
        let modulus = ModulusMarginal::new(cfg.a, cfg.b)?.mean();
        let n = p.model().grid().n_elements();
        let start = vec![START_DENSITY; p.model().grid().n_active()];
        let r = p.run_dto_with(vec![vec![modulus; n]], &start)?;
        write_design(dir, cfg, &r.design)?;
        log.dto = Some(DtoLog {
            modulus,
            volume_fraction: r.volume_fraction(),
            converged: r.converged,
            displacement: r.displacements[0],
            history: r.history,
            seconds: clock.elapsed().as_secs_f64(),
        });
        return Ok(log);
    }
    for &beta in &cfg.beta {
        let clock = Instant::now();
        let p = problem(cfg, beta)?;
        let sub = dir.join(format!("beta_{beta}"));
        create_dir(&sub)?;
        let (design, loops, converged) = match (&cfg.design_csv, mode) {
            (Some(path), Mode::Verify) => (artifacts::load_design(path, p.model().grid())?, Vec::new(), true),
            _ => {
                let state = run_sora_with(&p, |r| {
                    log::info!("beta {beta} loop {}: vf {:.5}, MPP movement {:.2e}", r.index, r.volume_fraction, r.mpp_movement)
                })?;
                (state.design, state.history, state.converged)
            }
        };
        write_design(&sub, cfg, &design)?;
        let mcs = if mode == Mode::Verify {
            let t = Instant::now();
            let surrogate = p.response_surface(&design, 0)?;
            let report = run_mcs(
                &p,
                &design,
                0,
                Some(&surrogate),
                McsConfig { count: cfg.mcs_n, seed: cfg.seed, source: cfg.mcs_source },
            )?;
            let (cdf, tail) = artifacts::cdf_files(&report);
            artifacts::write(&sub.join("cdf.csv"), &cdf)?;
            artifacts::write(&sub.join("cdf_tail.csv"), &tail)?;
            Some(McsLog {
                source: cfg.mcs_source,
                count: report.config.count,
                seed: report.config.seed,
                invalid: report.invalid,
                failure_probability: report.failure_probability,
                expected_failure_probability: std_normal_cdf(-beta),
                mean: report.mean,
                std_dev: report.std_dev,
                srsm_mean: surrogate.mean(),
                srsm_std_dev: surrogate.std_dev(),
                seconds: t.elapsed().as_secs_f64(),
            })
        } else {
            None
        };
        log.runs.push(BetaLog {
            beta,
            artifacts: sub.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            volume_fraction: design.volume_fraction(),
            converged,
            loops,
            mcs,
            seconds: clock.elapsed().as_secs_f64(),
        });
    }
    Ok(log)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub beta: f64,
    pub b: f64,
    pub dir: PathBuf,
    pub volume_fraction: Option<f64>,
    pub error: Option<String>,
}

/// RBTO over every `beta × sweep_b` cell, each in its own directory.
pub fn sweep(cfg: &RunConfig, root: &Path) -> Result<(PathBuf, Vec<SweepCell>)> {
    let cells: Vec<RunConfig> = cfg
        .beta
        .iter()
        .flat_map(|&beta| {
            cfg.sweep_b.iter().map(move |&b| {
                let mut c = cfg.clone();
                c.beta = vec![beta];
                c.b = b;
                c.sweep_b = vec![b];
                c
            })
        })
        .collect();
    let results: Vec<SweepCell> = cells
        .par_iter()
        .map(|c| {
            let outcome = run(c, Mode::Rbto, root);
            SweepCell {
                beta: c.beta[0],
                b: c.b,
                dir: output_dir(c, "rbto", root),
                volume_fraction: outcome.as_ref().ok().and_then(|o| o.log.final_volume_fraction()),
                error: outcome.err().map(|e| e.to_string()),
            }
        })
        .collect();
    let dir = output_dir(cfg, "sweep", root);
    create_dir(&dir)?;
    artifacts::write(&dir.join("config.json"), &json(cfg))?;
    artifacts::write(&dir.join("summary.json"), &json(&results))?;
    if let Some(bad) = results.iter().find(|c| c.error.is_some()) {
        return Err(CliError::Config(format!(
            "sweep cell beta={} b={} failed: {}",
            bad.beta,
            bad.b,
            bad.error.as_deref().unwrap_or_default()
        )));
    }
    Ok((dir, results))
}
