//! Exact binomial planning and verdicts for counts of experiments whose deficit
//! exceeds the threshold δ.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Fraction of simulated experiments with a deficit above δ.
pub fn estimate_p0(positive_count: u64, total: u64) -> Result<f64> {
    if total == 0 {
        return Err(Error::EmptyCampaign);
    }
    if positive_count > total {
        return Err(domain(format!("{positive_count} positives out of {total} experiments")));
    }
    Ok(positive_count as f64 / total as f64)
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// The whole Bin(n, p) distribution. Log ratios of neighbouring terms are
/// accumulated outwards from the mode and the weights normalised, which keeps
/// the total at 1 to rounding for large `n`.
pub fn binomial_pmfs(n: u64, p: f64) -> Vec<f64> {
    let len = n as usize + 1;
    if p <= 0.0 || p >= 1.0 {
        let mut v = vec![0.0; len];
        v[if p <= 0.0 { 0 } else { n as usize }] = 1.0;
        return v;
    }
    let log_odds = p.ln() - (-p).ln_1p();
    let mode = (((n + 1) as f64 * p).floor() as usize).min(n as usize);
    let mut logs = vec![0.0; len];
    for k in mode + 1..len {
        logs[k] = logs[k - 1] + ((n as usize - k + 1) as f64).ln() - (k as f64).ln() + log_odds;
    }
    for k in (0..mode).rev() {
        logs[k] = logs[k + 1] + ((k + 1) as f64).ln() - ((n as usize - k) as f64).ln() - log_odds;
    }
    let weights: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// `C(n,k) p^k (1-p)^(n-k)`; evaluates the whole distribution.
pub fn binomial_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    binomial_pmfs(n, p)[k as usize]
}

/// `(P(k <= k0), P(k > k0))` from a pmf vector. The side on the short end of the
/// distribution is summed directly and the other one is its complement, so the
/// pair adds up to 1.
fn tails_of(pmf: &[f64], k0: u64, p: f64) -> (f64, f64) {
    let n = pmf.len() as u64 - 1;
    if k0 >= n {
        return (1.0, 0.0);
    }
    let k0 = k0 as usize;
    if (k0 as f64) < n as f64 * p {
        let lower = pmf[..=k0].iter().sum::<f64>().min(1.0);
        (lower, 1.0 - lower)
    } else {
        let upper = pmf[k0 + 1..].iter().rev().sum::<f64>().min(1.0);
        (1.0 - upper, upper)
    }
}

fn split_tails(k0: u64, n: u64, p: f64) -> (f64, f64) {
    if k0 >= n {
        return (1.0, 0.0);
    }
    tails_of(&binomial_pmfs(n, p), k0, p)
}

/// `P(k <= k0)` for `k ~ Bin(n, p)`.
pub fn binomial_cdf(k0: u64, n: u64, p: f64) -> Result<f64> {
    check_p(p)?;
    if k0 > n {
        return Err(domain(format!("k0 = {k0} exceeds N = {n}")));
    }
    Ok(split_tails(k0, n, p).0)
}

/// `P(k >= k_e)`; 1 when `k_e = 0`.
pub fn tail_at_least(k_e: u64, n: u64, p: f64) -> Result<f64> {
    check_p(p)?;
    if k_e > n {
        return Err(domain(format!("k_e = {k_e} exceeds N = {n}")));
    }
    if k_e == 0 {
        return Ok(1.0);
    }
    Ok(split_tails(k_e - 1, n, p).1)
}

/// How an observed count is turned into a significance probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailReading {
    /// `P(k >= k_e)`.
    #[default]
    AtLeast,
    /// `P(k > k_e)`.
    MoreThan,
}

impl FromStr for TailReading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "at-least" => Ok(TailReading::AtLeast),
            "more-than" => Ok(TailReading::MoreThan),
            _ => Err(domain(format!("unknown tail reading '{s}'"))),
        }
    }
}

/// Probability under `p0` of a result at least as extreme as `k_e` of `n`.
pub fn significance(k_e: u64, n: u64, p0: f64, reading: TailReading) -> Result<f64> {
    match reading {
        TailReading::AtLeast => tail_at_least(k_e, n, p0),
        TailReading::MoreThan if k_e >= n => {
            check_p(p0)?;
            if k_e > n {
                return Err(domain(format!("k_e = {k_e} exceeds N = {n}")));
            }
            Ok(0.0)
        }
        TailReading::MoreThan => tail_at_least(k_e + 1, n, p0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisProbs {
    pub p0_h0: f64,
    pub p0_h1: f64,
}

impl HypothesisProbs {
    pub fn new(p0_h0: f64, p0_h1: f64) -> Result<Self> {
        if !(0.0 < p0_h0 && p0_h0 < p0_h1 && p0_h1 < 1.0) {
            return Err(domain(format!("need 0 < p0_h0 < p0_h1 < 1, got {p0_h0} and {p0_h1}")));
        }
        Ok(HypothesisProbs { p0_h0, p0_h1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPlan {
    pub probs: HypothesisProbs,
    pub alpha: f64,
    pub gamma: f64,
    pub n_req: u64,
    pub k0: u64,
    /// `P(k > k0)` under H0 at `n_req`.
    pub size: f64,
    /// `P(k > k0)` under H1 at `n_req`.
    pub power: f64,
}

pub const DEFAULT_N_MAX: u64 = 10_000;

fn check_levels(alpha: f64, gamma: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// Least `N <= n_max` at which some `k0` satisfies `P_H0(k > k0) < alpha` and
/// `P_H1(k > k0) >= gamma`; the smallest such `k0` is returned.
pub fn find_plan(probs: HypothesisProbs, alpha: f64, gamma: f64, n_max: u64) -> Result<DecisionPlan> {
    check_levels(alpha, gamma)?;
    let probs = HypothesisProbs::new(probs.p0_h0, probs.p0_h1)?;
    for n in 1..=n_max {
        let h0 = binomial_pmfs(n, probs.p0_h0);
        // the H0 tail falls as k0 grows: find the smallest admissible k0
        let (mut lo, mut hi) = (0u64, n);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if tails_of(&h0, mid, probs.p0_h0).1 < alpha {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let k0 = lo;
        // power only falls as k0 grows, so this k0 decides
        let power = split_tails(k0, n, probs.p0_h1).1;
        if power >= gamma {
            let size = tails_of(&h0, k0, probs.p0_h0).1;
            return Ok(DecisionPlan { probs, alpha, gamma, n_req: n, k0, size, power });
        }
    }
    Err(Error::NoPlanWithinBudget { n_max })
}

/// Whether any `k0` satisfies both planning conditions at exactly `n`.
pub fn admits_plan(probs: HypothesisProbs, alpha: f64, gamma: f64, n: u64) -> bool {
    (0..=n).any(|k0| {
        split_tails(k0, n, probs.p0_h0).1 < alpha && split_tails(k0, n, probs.p0_h1).1 >= gamma
    })
}

/// Rows of the published sample-size table for `p0_h0 = 0.012`, `p0_h1 = 0.85`:
/// `(alpha %, gamma %, N_req, k0)`.
pub const PUBLISHED_TABLE: [(f64, f64, u64, u64); 16] = [
    (5.0, 80.0, 3, 0),
    (1.0, 80.0, 3, 1),
    (0.5, 80.0, 3, 1),
    (0.1, 80.0, 3, 1),
    (5.0, 90.0, 3, 0),
    (1.0, 90.0, 4, 1),
    (0.5, 90.0, 4, 1),
    (0.1, 90.0, 4, 1),
    (5.0, 95.0, 4, 0),
    (1.0, 95.0, 4, 1),
    (0.5, 95.0, 4, 1),
    (0.1, 95.0, 4, 1),
    (5.0, 99.0, 4, 0),
    (1.0, 99.0, 5, 1),
    (0.5, 99.0, 5, 1),
    (0.1, 99.0, 6, 2),
];

pub const PUBLISHED_P0_H0: f64 = 0.012;
pub const PUBLISHED_P0_H1: f64 = 0.85;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCell {
    pub alpha_percent: f64,
    pub gamma_percent: f64,
    pub plan: DecisionPlan,
    /// `(N_req, k0)` printed for this cell, when the published table has it.
    pub published: Option<(u64, u64)>,
}

impl PlanCell {
    pub fn matches_published(&self) -> Option<bool> {
        self.published.map(|(n, k)| n == self.plan.n_req && k == self.plan.k0)
    }
}

fn published_cell(probs: HypothesisProbs, alpha_percent: f64, gamma_percent: f64) -> Option<(u64, u64)> {
    if probs.p0_h0 != PUBLISHED_P0_H0 || probs.p0_h1 != PUBLISHED_P0_H1 {
        return None;
    }
    PUBLISHED_TABLE
        .iter()
        .find(|r| (r.0 - alpha_percent).abs() < 1e-9 && (r.1 - gamma_percent).abs() < 1e-9)
        .map(|r| (r.2, r.3))
}

/// Plans for every `(alpha, gamma)` pair, both given in percent; rows ordered
/// gamma-major as in the published table.
pub fn plan_grid(
    probs: HypothesisProbs,
    alphas_percent: &[f64],
    gammas_percent: &[f64],
    n_max: u64,
) -> Result<Vec<PlanCell>> {
    let cells: Vec<(f64, f64)> = gammas_percent
        .iter()
        .flat_map(|&g| alphas_percent.iter().map(move |&a| (a, g)))
        .collect();
    cells
        .into_par_iter()
        .map(|(a, g)| {
            let plan = find_plan(probs, a / 100.0, g / 100.0, n_max)?;
            Ok(PlanCell { alpha_percent: a, gamma_percent: g, plan, published: published_cell(probs, a, g) })
        })
        .collect()
}

/// The published grid recomputed.
pub fn published_grid() -> Vec<PlanCell> {
    let probs = HypothesisProbs::new(PUBLISHED_P0_H0, PUBLISHED_P0_H1).expect("valid constants");
    plan_grid(probs, &[5.0, 1.0, 0.5, 0.1], &[80.0, 90.0, 95.0, 99.0], DEFAULT_N_MAX)
        .expect("published grid is plannable")
}

/// Writes `alpha_percent,gamma_percent,n_req,k0,matches_paper`; the last
/// column is empty for cells without a published counterpart.
pub fn write_plan_csv<W: Write>(cells: &[PlanCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["alpha_percent", "gamma_percent", "n_req", "k0", "matches_paper"]).map_err(io)?;
    for c in cells {
        let m = c.matches_published().map(|b| b.to_string()).unwrap_or_default();
        w.write_record([
            c.alpha_percent.to_string(),
            c.gamma_percent.to_string(),
            c.plan.n_req.to_string(),
            c.plan.k0.to_string(),
            m,
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    AcceptH1,
    RetainH0,
    InProgress,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::AcceptH1 => "AcceptH1",
            Decision::RetainH0 => "RetainH0",
            Decision::InProgress => "InProgress",
        })
    }
}

/// Whether H1 may be accepted before `N_req` experiments are done.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictMode {
    /// Accept as soon as `k_e > k0`; later experiments cannot lower `k_e`.
    #[default]
    Early,
    /// Wait for `N_req` experiments.
    Conservative,
}

impl FromStr for VerdictMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "early" => Ok(VerdictMode::Early),
            "conservative" => Ok(VerdictMode::Conservative),
            _ => Err(domain(format!("unknown verdict mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub k_e: u64,
    pub n_done: u64,
    pub decision: Decision,
    /// Set when H1 was accepted with fewer than `N_req` experiments.
    pub early: bool,
    pub delta: f64,
}

pub fn verdict(k_e: u64, n_done: u64, plan: &DecisionPlan, delta: f64, mode: VerdictMode) -> Result<Verdict> {
    if k_e > n_done {
        return Err(domain(format!("k_e = {k_e} exceeds the {n_done} experiments done")));
    }
    let complete = n_done >= plan.n_req;
    let decision = match (k_e > plan.k0, complete, mode) {
        (true, true, _) | (true, false, VerdictMode::Early) => Decision::AcceptH1,
        (false, true, _) => Decision::RetainH0,
        _ => Decision::InProgress,
    };
    Ok(Verdict { k_e, n_done, decision, early: decision == Decision::AcceptH1 && !complete, delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn probs() -> HypothesisProbs {
        HypothesisProbs::new(0.012, 0.85).unwrap()
    }

    #[test]
    fn p0_estimates() {
        assert_eq!(estimate_p0(108, 10_000).unwrap(), 0.0108);
        assert_eq!(estimate_p0(0, 100).unwrap(), 0.0);
        assert_abs_diff_eq!(estimate_p0(500, 10_000).unwrap(), 0.05, epsilon = 1e-12);
        assert_eq!(estimate_p0(1, 0), Err(Error::EmptyCampaign));
        assert!(estimate_p0(5, 4).is_err());
    }

    #[test]
    fn cdf_values() {
        assert_eq!(binomial_cdf(7, 7, 0.3).unwrap(), 1.0);
        assert_abs_diff_eq!(binomial_cdf(0, 3, 0.012).unwrap(), 0.988f64.powi(3), epsilon = 1e-12);
        // 0.15^6 + 6*0.85*0.15^5 + 15*0.85^2*0.15^4
        let by_hand = 0.15f64.powi(6) + 6.0 * 0.85 * 0.15f64.powi(5) + 15.0 * 0.85f64.powi(2) * 0.15f64.powi(4);
        assert_abs_diff_eq!(binomial_cdf(2, 6, 0.85).unwrap(), by_hand, epsilon = 1e-14);
        assert_abs_diff_eq!(by_hand, 0.00588, epsilon = 1e-4);
        assert!(binomial_cdf(4, 3, 0.5).is_err());
        assert!(binomial_cdf(1, 3, 1.5).is_err());
    }

    #[test]
    fn tail_values() {
        assert_eq!(tail_at_least(1, 1, 0.5).unwrap(), 0.5);
        assert_abs_diff_eq!(tail_at_least(3, 6, 0.012).unwrap(), 3.3e-5, epsilon = 1e-6);
        assert_abs_diff_eq!(tail_at_least(1, 3, 0.012).unwrap(), 1.0 - 0.988f64.powi(3), epsilon = 1e-12);
        assert_eq!(tail_at_least(0, 5, 0.2).unwrap(), 1.0);
        assert!(tail_at_least(6, 5, 0.2).is_err());
    }

    #[test]
    fn readings() {
        let at_least = significance(2, 6, 0.012, TailReading::AtLeast).unwrap();
        let more_than = significance(1, 6, 0.012, TailReading::MoreThan).unwrap();
        assert_eq!(at_least, more_than);
        assert_eq!(significance(6, 6, 0.3, TailReading::MoreThan).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_probabilities() {
        assert_eq!(binomial_pmf(0, 4, 0.0), 1.0);
        assert_eq!(binomial_pmf(4, 4, 1.0), 1.0);
        assert_eq!(binomial_pmf(3, 4, 1.0), 0.0);
        assert_eq!(binomial_cdf(0, 4, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn published_anchor_rows() {
        let p = probs();
        let got = |a, g| {
            let plan = find_plan(p, a, g, 100).unwrap();
            (plan.n_req, plan.k0)
        };
        assert_eq!(got(0.01, 0.80), (3, 1));
        assert_eq!(got(0.01, 0.95), (4, 1));
        assert_eq!(got(0.01, 0.99), (5, 1));
        assert_eq!(got(0.001, 0.99), (6, 2));
    }

    #[test]
    fn plan_probabilities() {
        let plan = find_plan(probs(), 0.01, 0.80, 100).unwrap();
        assert_abs_diff_eq!(plan.size, 4.3e-4, epsilon = 1e-5);
        assert_abs_diff_eq!(plan.power, 0.939, epsilon = 1e-3);
        let plan = find_plan(probs(), 0.001, 0.99, 100).unwrap();
        assert_abs_diff_eq!(plan.size, 3.3e-5, epsilon = 1e-6);
        assert_abs_diff_eq!(plan.power, 0.994, epsilon = 1e-3);
    }

    #[test]
    fn minimality() {
        let p = probs();
        let plan = find_plan(p, 0.001, 0.99, 100).unwrap();
        assert!(admits_plan(p, 0.001, 0.99, plan.n_req));
        assert!((1..plan.n_req).all(|n| !admits_plan(p, 0.001, 0.99, n)));
    }

    #[test]
    fn budget_exhausted() {
        let p = HypothesisProbs::new(0.012, 0.052).unwrap();
        assert_eq!(find_plan(p, 0.01, 0.95, 10), Err(Error::NoPlanWithinBudget { n_max: 10 }));
    }

    #[test]
    fn bad_inputs() {
        assert!(HypothesisProbs::new(0.5, 0.4).is_err());
        assert!(HypothesisProbs::new(0.0, 0.4).is_err());
        assert!(find_plan(probs(), 0.0, 0.9, 10).is_err());
        assert!(find_plan(probs(), 0.05, 1.0, 10).is_err());
    }

    #[test]
    fn grid() {
        let cells = published_grid();
        assert_eq!(cells.len(), 16);
        let matches = cells.iter().filter(|c| c.matches_published() == Some(true)).count();
        assert!(matches >= 9, "{matches}");
        let single = plan_grid(probs(), &[1.0], &[95.0], 100).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!((single[0].plan.n_req, single[0].plan.k0), (4, 1));
        assert_eq!(single[0].plan, find_plan(probs(), 0.01, 0.95, 100).unwrap());
    }

    #[test]
    fn plan_csv() {
        let mut buf = Vec::new();
        write_plan_csv(&plan_grid(probs(), &[1.0], &[80.0], 100).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "alpha_percent,gamma_percent,n_req,k0,matches_paper\n1,80,3,1,true\n");
    }

    #[test]
    fn verdicts() {
        let plan = find_plan(probs(), 0.001, 0.99, 100).unwrap();
        let v = |k, n, m| verdict(k, n, &plan, 0.0, m).unwrap();
        assert_eq!(v(3, 6, VerdictMode::Early).decision, Decision::AcceptH1);
        assert!(!v(3, 6, VerdictMode::Early).early);
        assert_eq!(v(1, 6, VerdictMode::Early).decision, Decision::RetainH0);
        assert_eq!(v(0, 2, VerdictMode::Early).decision, Decision::InProgress);
        let early = v(3, 4, VerdictMode::Early);
        assert_eq!(early.decision, Decision::AcceptH1);
        assert!(early.early);
        assert_eq!(v(3, 4, VerdictMode::Conservative).decision, Decision::InProgress);
        assert!(verdict(3, 2, &plan, 0.0, VerdictMode::Early).is_err());
    }
}
