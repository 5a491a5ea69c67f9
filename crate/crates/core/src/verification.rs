//! Latin-hypercube Monte Carlo verification of a design, on the full finite
//! element model or on its chaos surrogate.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::ChaosSurrogate;
use crate::error::{Error, Result};
use crate::random_field::std_normal_quantile;
use crate::sora::{design_hash, RbtoProblem};
use crate::topopt::DensityField;

/// Largest tolerated share of failed sample evaluations.
pub const MAX_INVALID_FRACTION: f64 = 1e-3;

/// `count × dim` standard normal points, one uniform stratum per sample and
/// dimension, strata shuffled independently per dimension.
pub fn lhs_sample(count: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![vec![0.0; dim]; count];
    let mut strata: Vec<usize> = (0..count).collect();
    for d in 0..dim {
        strata.shuffle(&mut rng);
        for (row, &s) in out.iter_mut().zip(&strata) {
            // Open interval keeps the quantile finite.
            let u: f64 = rng.random::<f64>();
            let p = ((s as f64 + u) / count as f64).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            row[d] = std_normal_quantile(p);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    FullFea,
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McsConfig {
    pub count: usize,
    pub seed: u64,
    pub source: SampleSource,
}

impl Default for McsConfig {
    fn default() -> Self {
        Self {
            count: 50_000,
            seed: 0,
            source: SampleSource::FullFea,
        }
    }
}

/// What a report describes, used to refuse mismatched comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McsTarget {
    pub dof: usize,
    pub design_hash: u64,
    pub allowable_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsReport {
    pub config: McsConfig,
    pub target: McsTarget,
    pub allowable: f64,
    /// Valid `|u|` samples in draw order.
    pub samples: Vec<f64>,
    pub invalid: usize,
    pub failure_probability: f64,
    pub mean: f64,
    /// Unbiased (n − 1) standard deviation.
    pub std_dev: f64,
    /// `(displacement, empirical CDF)`, strictly increasing in both.
    pub cdf: Vec<(f64, f64)>,
}

impl McsReport {
    /// Builds the statistics from per-sample outcomes (`None` = failed).
    pub fn from_outcomes(
        config: McsConfig,
        target: McsTarget,
        allowable: f64,
        outcomes: Vec<Option<f64>>,
    ) -> Result<Self> {
        let total = outcomes.len();
        let samples: Vec<f64> = outcomes.into_iter().flatten().collect();
        let invalid = total - samples.len();
        let limit = (MAX_INVALID_FRACTION * total as f64).floor() as usize;
        if invalid > limit {
            return Err(Error::TooManyInvalidSamples { invalid, total, limit });
        }
        if samples.is_empty() {
            return Err(Error::InvalidParameter("no valid samples".into()));
        }
        if invalid > 0 {
            log::warn!("{invalid} of {total} samples failed and were excluded");
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std_dev = if samples.len() > 1 {
            (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let failures = samples.iter().filter(|&&v| v > allowable).count();
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let mut cdf: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        for (i, &v) in sorted.iter().enumerate() {
            let p = (i + 1) as f64 / n;
            match cdf.last_mut() {
                Some(last) if last.0 == v => last.1 = p,
                _ => cdf.push((v, p)),
            }
        }
        Ok(Self {
            config,
            target,
            allowable,
            samples,
            invalid,
            failure_probability: failures as f64 / n,
            mean,
            std_dev,
            cdf,
        })
    }

    /// The last `k` CDF points (the upper tail).
    pub fn tail(&self, k: usize) -> &[(f64, f64)] {
        &self.cdf[self.cdf.len().saturating_sub(k)..]
    }

    /// Empirical CDF at `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        match self.cdf.partition_point(|p| p.0 <= x) {
            0 => 0.0,
            k => self.cdf[k - 1].1,
        }
    }
}

/// Monte Carlo of `|u_dof|` of constraint `which` for `design`.
///
/// `surrogate` is required for [`SampleSource::Surrogate`]; when absent the
/// surrogate is fitted from the problem's collocation points.
pub fn run_mcs(
    problem: &RbtoProblem,
    design: &DensityField,
    which: usize,
    surrogate: Option<&ChaosSurrogate>,
    config: McsConfig,
) -> Result<McsReport> {
    let c = *problem.constraints().get(which).ok_or(Error::IndexOutOfRange {
        what: "constraint",
        index: which,
        len: problem.constraints().len(),
    })?;
    let target = McsTarget {
        dof: c.dof,
        design_hash: design_hash(design),
        allowable_bits: c.allowable.to_bits(),
    };
    let points = lhs_sample(config.count, problem.kl_basis().n_terms(), config.seed)?;
    let outcomes: Vec<Option<f64>> = match config.source {
        SampleSource::FullFea => points
            .par_iter()
            .map(|xi| match problem.response(design, which, xi) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::debug!("sample at {xi:?} failed: {e}");
                    None
                }
            })
            .collect(),
        SampleSource::Surrogate => {
            let owned;
            let s = match surrogate {
                Some(s) => s,
                None => {
                    owned = problem.response_surface(design, which)?;
                    &owned
                }
            };
            points
                .par_iter()
                .map(|xi| s.eval(xi).ok().filter(|v| v.is_finite()))
                .collect()
        }
    };
    McsReport::from_outcomes(config, target, c.allowable, outcomes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportDivergence {
    pub mean_abs: f64,
    pub mean_rel: f64,
    pub std_abs: f64,
    pub std_rel: f64,
    pub failure_probability_abs: f64,
    /// Largest distance between the two empirical CDFs.
    pub max_cdf_gap: f64,
}

/// Gaps between two reports of the same design and constraint.
pub fn compare_reports(a: &McsReport, b: &McsReport) -> Result<ReportDivergence> {
    if a.target != b.target {
        return Err(Error::Incomparable(format!(
            "reports describe different targets: {:?} vs {:?}",
            a.target, b.target
        )));
    }
    let rel = |x: f64, y: f64| if x == y { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()) };
    // Both CDFs are right-continuous steps; the gap peaks at a jump.
    let max_cdf_gap = a
        .cdf
        .iter()
        .chain(&b.cdf)
        .map(|&(x, _)| (a.cdf_at(x) - b.cdf_at(x)).abs())
        .fold(0.0, f64::max);
    Ok(ReportDivergence {
        mean_abs: (a.mean - b.mean).abs(),
        mean_rel: rel(a.mean, b.mean),
        std_abs: (a.std_dev - b.std_dev).abs(),
        std_rel: rel(a.std_dev, b.std_dev),
        failure_probability_abs: (a.failure_probability - b.failure_probability).abs(),
        max_cdf_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{mbb_half, MbbOptions};
    use crate::random_field::{std_normal_cdf, CorrLengthMode, ModulusMarginal};
    use crate::sora::{KlSettings, ReliabilityConstraint, SoraSettings};

    fn target() -> McsTarget {
        McsTarget { dof: 0, design_hash: 0, allowable_bits: 0 }
    }

    fn synthetic(mu: f64, sigma: f64, allowable: f64, count: usize, seed: u64) -> McsReport {
        let pts = lhs_sample(count, 2, seed).unwrap();
        let outcomes = pts.iter().map(|x| Some(mu + sigma * (0.6 * x[0] + 0.8 * x[1]))).collect();
        let config = McsConfig { count, seed, source: SampleSource::Surrogate };
        McsReport::from_outcomes(config, target(), allowable, outcomes).unwrap()
    }

    #[test]
    fn one_sample_per_quartile() {
        for seed in 0..20 {
            let pts = lhs_sample(4, 1, seed).unwrap();
            let mut q: Vec<usize> = pts.iter().map(|p| (std_normal_cdf(p[0]) * 4.0).floor() as usize).collect();
            q.sort();
            assert_eq!(q, vec![0, 1, 2, 3]);
        }
        assert!(lhs_sample(0, 2, 0).is_err());
    }

    #[test]
    fn stratified_mean_is_tight() {
        let pts = lhs_sample(50_000, 3, 0).unwrap();
        for d in 0..3 {
            let m = pts.iter().map(|p| p[d]).sum::<f64>() / 50_000.0;
            assert!(m.abs() < 0.01, "dim {d}: {m}");
        }
    }

    #[test]
    fn seeding_is_deterministic() {
        assert_eq!(lhs_sample(100, 2, 7).unwrap(), lhs_sample(100, 2, 7).unwrap());
        assert_ne!(lhs_sample(100, 2, 7).unwrap(), lhs_sample(100, 2, 8).unwrap());
    }

    #[test]
    fn failure_probability_matches_closed_form() {
        // μ + σ Z exceeds μ + 2σ with probability Φ(−2).
        let (mu, sigma, n) = (170.0, 0.5, 50_000);
        let p = std_normal_cdf(-2.0);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        for seed in 0..10 {
            let r = synthetic(mu, sigma, mu + 2.0 * sigma, n, seed);
            assert!((r.failure_probability - p).abs() < 3.0 * se, "seed {seed}: {}", r.failure_probability);
        }
    }

    #[test]
    fn threshold_extremes() {
        assert_eq!(synthetic(5.0, 1.0, f64::INFINITY, 1000, 0).failure_probability, 0.0);
        assert_eq!(synthetic(5.0, 1.0, 0.0, 1000, 0).failure_probability, 1.0);
    }

    #[test]
    fn cdf_is_strictly_increasing() {
        let r = synthetic(1.0, 1.0, 2.0, 100, 3);
        assert_eq!(r.cdf.len(), 100);
        assert!(r.cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
        assert_eq!(r.cdf.last().unwrap().1, 1.0);
        assert_eq!(r.tail(10).len(), 10);
        assert_eq!(r.tail(10)[9], *r.cdf.last().unwrap());
        let ties = McsReport::from_outcomes(McsConfig::default(), target(), 1.0, vec![Some(1.0), Some(1.0), Some(2.0)]).unwrap();
        assert_eq!(ties.cdf, vec![(1.0, 2.0 / 3.0), (2.0, 1.0)]);
    }

    #[test]
    fn moments_are_unbiased() {
        let r = McsReport::from_outcomes(
            McsConfig::default(),
            target(),
            10.0,
            vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)],
        )
        .unwrap();
        assert_eq!(r.mean, 2.5);
        assert!((r.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn invalid_samples() {
        let mut outcomes: Vec<Option<f64>> = (0..2000).map(|k| Some(k as f64)).collect();
        outcomes[5] = None;
        outcomes[6] = None;
        let r = McsReport::from_outcomes(McsConfig::default(), target(), 1e9, outcomes.clone()).unwrap();
        assert_eq!((r.invalid, r.samples.len()), (2, 1998));
        outcomes[7] = None;
        assert_eq!(
            McsReport::from_outcomes(McsConfig::default(), target(), 1e9, outcomes),
            Err(Error::TooManyInvalidSamples { invalid: 3, total: 2000, limit: 2 })
        );
    }

    #[test]
    fn comparisons() {
        let a = synthetic(170.0, 0.5, 171.0, 50_000, 0);
        let same = compare_reports(&a, &a).unwrap();
        assert_eq!(same, ReportDivergence {
            mean_abs: 0.0, mean_rel: 0.0, std_abs: 0.0, std_rel: 0.0,
            failure_probability_abs: 0.0, max_cdf_gap: 0.0,
        });
        let b = synthetic(170.0, 0.5, 171.0, 50_000, 1);
        let d = compare_reports(&a, &b).unwrap();
        let p = a.failure_probability;
        assert!(d.failure_probability_abs < 3.0 * (p * (1.0 - p) / 50_000.0).sqrt());
        assert!(d.max_cdf_gap > 0.0 && d.max_cdf_gap < 0.02);
        let mut other = b.clone();
        other.target.dof = 3;
        assert!(matches!(compare_reports(&a, &other), Err(Error::Incomparable(_))));
    }

    #[test]
    fn fea_and_surrogate_sources_agree_on_small_mesh() {
        let bench = mbb_half(&MbbOptions { nx: 12, ny: 4, load: 1.0, allowable: 200.0 }).unwrap();
        let c = ReliabilityConstraint { dof: bench.constraint_dof, allowable: 200.0, beta: 2.0 };
        let kl = KlSettings { corr_lengths: (0.5, 0.5), mode: CorrLengthMode::Relative, ..Default::default() };
        let p = crate::sora::RbtoProblem::new(bench.grid, vec![c], ModulusMarginal::new(1.0, 1.5).unwrap(), kl, SoraSettings::default()).unwrap();
        let design = DensityField::new(p.filter(), vec![0.7; p.model().grid().n_active()]).unwrap();
        let cfg = McsConfig { count: 2000, seed: 0, source: SampleSource::FullFea };
        let fea = run_mcs(&p, &design, 0, None, cfg).unwrap();
        let sur = run_mcs(&p, &design, 0, None, McsConfig { source: SampleSource::Surrogate, ..cfg }).unwrap();
        assert_eq!(fea.samples.len(), 2000);
        let d = compare_reports(&fea, &sur).unwrap();
        assert!(d.mean_rel < 0.01 && d.max_cdf_gap < 0.05, "{d:?}");
        assert_eq!(run_mcs(&p, &design, 0, None, cfg).unwrap(), fea);
        assert!(run_mcs(&p, &design, 2, None, cfg).is_err());
    }
}
