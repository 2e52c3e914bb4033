//! Campaigns of independently seeded experiments and their summary statistics.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{exceeds, index_deficit, index_norm, DeficitResult, Estimator, ZERO_TOLERANCE};
use crate::error::{domain, Error, Result};
use crate::simulate::{generate, CaseKind, SeedSpec, SelectionDomain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub case: CaseKind,
    /// Outcomes per experiment.
    pub n: usize,
    /// Number of experiments.
    pub experiments: u64,
    pub master_seed: u64,
    pub domain: SelectionDomain,
    pub delta: f64,
    pub estimator: Estimator,
}

impl CampaignConfig {
    pub fn new(case: CaseKind, n: usize, experiments: u64, master_seed: u64) -> Self {
        CampaignConfig {
            case,
            n,
            experiments,
            master_seed,
            domain: SelectionDomain::default(),
            delta: 0.0,
            estimator: Estimator::CANONICAL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::EmptyExperiment);
        }
        if self.experiments == 0 {
            return Err(Error::EmptyCampaign);
        }
        if !(self.delta >= 0.0) {
            return Err(domain(format!("delta must be nonnegative, got {}", self.delta)));
        }
        Ok(())
    }

    fn evaluate(&self, index: u64) -> DeficitResult {
        let m = generate(self.case, self.n, SeedSpec::new(self.master_seed, index), self.domain)
            .expect("validated configuration");
        self.estimator.deficit(&m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    /// `(#zero + #positive) / N`.
    pub p_rank: f64,
    /// Count of strictly positive deficits.
    pub n0: u64,
    pub n_zero: u64,
    /// Count of deficits above `delta`.
    pub n_exceed: u64,
    pub delta: f64,
    pub avg_positive: Option<f64>,
    pub max_deficit: f64,
    pub min_deficit: f64,
    pub index_deficit: Option<f64>,
    pub index_norm: Option<f64>,
    pub n_valid: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub estimator_variant: String,
    pub stats: CampaignStats,
    #[serde(skip)]
    pub results: Vec<DeficitResult>,
}

/// `(#{d = 0} + #{d > 0}) / #total`, zero judged at [`ZERO_TOLERANCE`].
pub fn percentrank_fraction(deficits: &[f64]) -> Result<f64> {
    if deficits.is_empty() {
        return Err(Error::EmptyCampaign);
    }
    let nonneg = deficits.iter().filter(|&&d| d >= -ZERO_TOLERANCE).count();
    Ok(nonneg as f64 / deficits.len() as f64)
}

/// Summary of per-experiment results in index order.
pub fn campaign_stats(results: &[DeficitResult], estimator: &Estimator, delta: f64) -> Result<CampaignStats> {
    if results.is_empty() {
        return Err(Error::EmptyCampaign);
    }
    let deficits: Vec<f64> = results.iter().map(|r| r.deficit).collect();
    let n0 = results.iter().filter(|r| r.is_positive()).count() as u64;
    let n_zero = results.iter().filter(|r| r.is_zero()).count() as u64;
    let n_exceed = deficits.iter().filter(|&&d| exceeds(d, delta)).count() as u64;
    let positive_sum: f64 = results.iter().filter(|r| r.is_positive()).map(|r| r.deficit).sum();
    Ok(CampaignStats {
        p_rank: percentrank_fraction(&deficits)?,
        n0,
        n_zero,
        n_exceed,
        delta,
        avg_positive: (n0 > 0).then(|| positive_sum / n0 as f64),
        max_deficit: deficits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_deficit: deficits.iter().copied().fold(f64::INFINITY, f64::min),
        index_deficit: index_deficit(results, estimator.denominator).ok(),
        index_norm: index_norm(results).ok(),
        n_valid: results.len() as u64,
    })
}

fn report(config: &CampaignConfig, results: Vec<DeficitResult>) -> Result<CampaignReport> {
    let stats = campaign_stats(&results, &config.estimator, config.delta)?;
    Ok(CampaignReport { config: *config, estimator_variant: config.estimator.variant_name(), stats, results })
}

/// Runs on the global rayon pool. Experiment `i` draws from
/// `SeedSpec::new(master_seed, i)` and results are kept in index order.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignReport> {
    config.validate()?;
    let results = (0..config.experiments).into_par_iter().map(|i| config.evaluate(i)).collect();
    report(config, results)
}

/// Same as [`run_campaign`] on a dedicated pool of `threads` workers.
pub fn run_campaign_with_threads(config: &CampaignConfig, threads: usize) -> Result<CampaignReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    pool.install(|| run_campaign(config))
}

/// Stops early with [`Error::Cancelled`] once `cancel` is set.
pub fn run_campaign_cancellable(config: &CampaignConfig, cancel: &AtomicBool) -> Result<CampaignReport> {
    config.validate()?;
    let results: Option<Vec<DeficitResult>> = (0..config.experiments)
        .into_par_iter()
        .map(|i| (!cancel.load(Ordering::Relaxed)).then(|| config.evaluate(i)))
        .collect();
    match results {
        Some(results) => report(config, results),
        None => Err(Error::Cancelled),
    }
}

/// Left-closed bins of equal width with an edge at 0. Deficits within
/// [`ZERO_TOLERANCE`] of 0 are binned as exactly 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `(lower edge, count)`, contiguous and ascending.
    pub bins: Vec<(f64, u64)>,
    /// Exact zeros, all of which sit in the bin starting at 0.
    pub zeros: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.1).sum()
    }

    /// Mass strictly right of 0.
    pub fn positive_mass(&self) -> u64 {
        let nonneg: u64 = self.bins.iter().filter(|b| b.0 >= 0.0).map(|b| b.1).sum();
        nonneg - self.zeros
    }
}

pub fn histogram(deficits: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0) {
        return Err(domain(format!("bin width must be positive, got {bin_width}")));
    }
    if deficits.is_empty() {
        return Err(Error::EmptyCampaign);
    }
    let snap = |d: f64| if d.abs() <= ZERO_TOLERANCE { 0.0 } else { d };
    let bin_of = |d: f64| (snap(d) / bin_width).floor() as i64;
    let lo = deficits.iter().map(|&d| bin_of(d)).min().expect("nonempty");
    let hi = deficits.iter().map(|&d| bin_of(d)).max().expect("nonempty");
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    let mut zeros = 0;
    for &d in deficits {
        counts[(bin_of(d) - lo) as usize] += 1;
        if snap(d) == 0.0 {
            zeros += 1;
        }
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| ((lo + i as i64) as f64 * bin_width, c))
        .collect();
    Ok(Histogram { bin_width, bins, zeros })
}

pub const DEFAULT_BIN_WIDTH: f64 = 0.05;
