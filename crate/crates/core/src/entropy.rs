//! Plug-in Shannon entropies (in bits), the information Bell inequality and
//! the pseudocomplementary information deficit.
//!
//! The deficit of one experiment is
//!
//! ```text
//! H(A|B | hd) - { H(A|B' | pd) + H(B'|A' | pd) + H(A'|B | pd) }
//! ```
//!
//! where each conditional entropy is estimated from a subset of the
//! experiment's outcomes. Which outcomes feed a term is governed by a
//! [`TermSource`]; an [`Estimator`] fixes the source of the hidden-data term
//! and of the three pseudocomplementary terms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{Column, Experiment, Outcome};

/// Absolute tolerance used whenever a deficit is compared with zero or with δ.
pub const ZERO_TOLERANCE: f64 = 1e-12;

/// `-p log2 p - (1-p) log2 (1-p)`, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(h2(p))
}

#[inline]
fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Shannon entropy of an empirical distribution given by its counts.
pub fn entropy_of_counts(counts: &[u32]) -> f64 {
    let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = f64::from(c) / t;
            -p * p.log2()
        })
        .sum()
}

/// Counts of `(x, y)` bit pairs, indexed `[x][y]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairCounts(pub [[u32; 2]; 2]);

impl PairCounts {
    pub fn from_pairs(pairs: &[(u8, u8)]) -> Self {
        let mut c = PairCounts::default();
        for &(x, y) in pairs {
            c.push(x, y);
        }
        c
    }

    #[inline]
    pub fn push(&mut self, x: u8, y: u8) {
        self.0[x as usize][y as usize] += 1;
    }

    pub fn total(&self) -> u32 {
        self.0.iter().flatten().sum()
    }

    /// Plug-in `H(X | Y)`; zero for an empty table.
    pub fn conditional_entropy(&self) -> f64 {
        let c = &self.0;
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let t = f64::from(total);
        let mut h = 0.0;
        for y in 0..2 {
            let ny = c[0][y] + c[1][y];
            if ny > 0 {
                let ny = f64::from(ny);
                h += ny / t * h2(f64::from(c[1][y]) / ny);
            }
        }
        h
    }

    /// Plug-in `H(X, Y)`.
    pub fn joint_entropy(&self) -> f64 {
        entropy_of_counts(&[self.0[0][0], self.0[0][1], self.0[1][0], self.0[1][1]])
    }

    /// Plug-in `H(X)`.
    pub fn entropy_x(&self) -> f64 {
        let c = &self.0;
        entropy_of_counts(&[c[0][0] + c[0][1], c[1][0] + c[1][1]])
    }

    /// Plug-in `H(Y)`.
    pub fn entropy_y(&self) -> f64 {
        let c = &self.0;
        entropy_of_counts(&[c[0][0] + c[1][0], c[0][1] + c[1][1]])
    }
}

/// Plug-in conditional entropy `H(X | Y)` of a list of `(x, y)` bit pairs.
///
/// An empty list has entropy 0. Values other than 0 and 1 panic.
pub fn conditional_entropy(pairs: &[(u8, u8)]) -> f64 {
    PairCounts::from_pairs(pairs).conditional_entropy()
}

/// Which outcomes contribute their `(target, given)` pair to a conditional entropy term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermSource {
    /// Every outcome.
    AllPairs,
    /// Outcomes whose selected pair is exactly `(target, given)`.
    BothSelected,
    /// Outcomes whose hidden pair is exactly `(target, given)`.
    BothHidden,
    /// Outcomes in which the conditioning column was selected.
    GivenSelected,
}

impl TermSource {
    #[inline]
    fn accepts(self, o: &Outcome, target: Column, given: Column) -> bool {
        match self {
            TermSource::AllPairs => true,
            TermSource::BothSelected => o.is_selected(target) && o.is_selected(given),
            TermSource::BothHidden => !o.is_selected(target) && !o.is_selected(given),
            TermSource::GivenSelected => o.is_selected(given),
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            TermSource::AllPairs => "all-pairs",
            TermSource::BothSelected => "both-selected",
            TermSource::BothHidden => "both-hidden",
            TermSource::GivenSelected => "given-selected",
        }
    }
}

/// Denominator of the deficit index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexDenominator {
    /// `H(A|B | hd)` of the matrix with the largest deficit.
    Conditional,
    /// Marginal `H(A)` of that matrix.
    Marginal,
}

/// Term sources and index convention used to evaluate experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Estimator {
    pub hd: TermSource,
    pub pd: TermSource,
    pub denominator: IndexDenominator,
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::CANONICAL
    }
}

impl Estimator {
    /// Hidden-data term over all `(a, b)` pairs; each pseudocomplementary term
    /// over the outcomes in which its conditioning column was selected.
    pub const CANONICAL: Estimator = Estimator {
        hd: TermSource::AllPairs,
        pd: TermSource::GivenSelected,
        denominator: IndexDenominator::Conditional,
    };

    /// Every term over full columns. The information Bell inequality is a
    /// theorem for any joint distribution, so under this estimator the deficit
    /// never exceeds zero.
    pub const FULL_COLUMNS: Estimator = Estimator {
        hd: TermSource::AllPairs,
        pd: TermSource::AllPairs,
        denominator: IndexDenominator::Conditional,
    };

    /// Hidden-data term from hidden pairs only, pseudocomplementary terms from
    /// selected pairs only.
    pub const SPLIT: Estimator = Estimator {
        hd: TermSource::BothHidden,
        pd: TermSource::BothSelected,
        denominator: IndexDenominator::Conditional,
    };

    pub fn with_denominator(self, denominator: IndexDenominator) -> Self {
        Estimator { denominator, ..self }
    }

    /// Evaluates one experiment.
    pub fn deficit(&self, matrix: &Experiment) -> DeficitResult {
        self.evaluate_outcomes(matrix.outcomes())
            .expect("experiments are never empty")
    }

    /// Evaluates a raw outcome slice.
    pub fn evaluate_outcomes(&self, outcomes: &[Outcome]) -> Result<DeficitResult> {
        if outcomes.is_empty() {
            return Err(Error::EmptyExperiment);
        }
        use Column::*;
        let specs = [(A, B, self.hd), (A, BPrime, self.pd), (BPrime, APrime, self.pd), (APrime, B, self.pd)];
        let mut counts = [PairCounts::default(); 4];
        let mut ones_a = 0u32;
        for o in outcomes {
            for (c, &(target, given, source)) in counts.iter_mut().zip(&specs) {
                if source.accepts(o, target, given) {
                    c.push(o.value(target), o.value(given));
                }
            }
            ones_a += u32::from(o.value(A));
        }
        let terms = EntropyTerms {
            h_ab_hd: counts[0].conditional_entropy(),
            h_ab_prime: counts[1].conditional_entropy(),
            h_bprime_aprime: counts[2].conditional_entropy(),
            h_aprime_b: counts[3].conditional_entropy(),
        };
        Ok(DeficitResult {
            terms,
            deficit: terms.deficit(),
            h_marginal_a: h2(f64::from(ones_a) / outcomes.len() as f64),
        })
    }

    /// Stable label reported alongside every analysis.
    pub fn variant_name(&self) -> String {
        let den = match self.denominator {
            IndexDenominator::Conditional => "conditional",
            IndexDenominator::Marginal => "marginal",
        };
        format!("hd={};pd={};index={}", self.hd.name(), self.pd.name(), den)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.variant_name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    /// Accepts `canonical`, `full-columns`, `split`, optionally followed by
    /// `+marginal` to switch the index denominator.
    fn from_str(s: &str) -> Result<Self> {
        let (base, den) = match s.split_once('+') {
            Some((b, "marginal")) => (b, IndexDenominator::Marginal),
            Some((b, "conditional")) => (b, IndexDenominator::Conditional),
            Some((_, other)) => return Err(domain(format!("unknown index denominator '{other}'"))),
            None => (s, IndexDenominator::Conditional),
        };
        let est = match base {
            "canonical" => Estimator::CANONICAL,
            "full-columns" => Estimator::FULL_COLUMNS,
            "split" => Estimator::SPLIT,
            other => return Err(domain(format!("unknown estimator '{other}'"))),
        };
        Ok(est.with_denominator(den))
    }
}

/// The four conditional entropies of one experiment, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyTerms {
    pub h_ab_hd: f64,
    pub h_ab_prime: f64,
    pub h_bprime_aprime: f64,
    pub h_aprime_b: f64,
}

impl EntropyTerms {
    pub fn deficit(&self) -> f64 {
        deficit_generic(self.h_ab_hd, self.h_ab_prime, self.h_bprime_aprime, self.h_aprime_b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeficitResult {
    pub terms: EntropyTerms,
    pub deficit: f64,
    pub h_marginal_a: f64,
}

impl DeficitResult {
    pub fn is_positive(&self) -> bool {
        self.deficit > ZERO_TOLERANCE
    }

    pub fn is_zero(&self) -> bool {
        self.deficit.abs() <= ZERO_TOLERANCE
    }
}

/// Evaluates `matrix` with the canonical estimator.
pub fn deficit_pseudo(matrix: &Experiment) -> DeficitResult {
    Estimator::CANONICAL.deficit(matrix)
}

/// `H(A|B) - (H(A|B') + H(B'|A') + H(A'|B))`.
pub fn deficit_generic(h_ab: f64, h_ab_prime: f64, h_bprime_aprime: f64, h_aprime_b: f64) -> f64 {
    h_ab - (h_ab_prime + h_bprime_aprime + h_aprime_b)
}

/// `true` when the inequality holds at threshold `delta`, i.e. the deficit does
/// not exceed `delta`.
pub fn information_bell_holds(result: &DeficitResult, delta: f64) -> Result<bool> {
    if !(delta >= 0.0) {
        return Err(domain(format!("delta must be nonnegative, got {delta}")));
    }
    Ok(!exceeds(result.deficit, delta))
}

/// `deficit > delta`, with equality judged at [`ZERO_TOLERANCE`].
#[inline]
pub fn exceeds(deficit: f64, delta: f64) -> bool {
    deficit > delta + ZERO_TOLERANCE
}

fn argmax(results: &[DeficitResult]) -> Result<&DeficitResult> {
    results
        .iter()
        .reduce(|best, r| if r.deficit > best.deficit { r } else { best })
        .ok_or(Error::EmptyCampaign)
}

/// Largest deficit divided by the denominator taken from the same matrix.
pub fn index_deficit(results: &[DeficitResult], denominator: IndexDenominator) -> Result<f64> {
    let best = argmax(results)?;
    let den = match denominator {
        IndexDenominator::Conditional => best.terms.h_ab_hd,
        IndexDenominator::Marginal => best.h_marginal_a,
    };
    if den <= ZERO_TOLERANCE {
        return Err(Error::DegenerateIndex("denominator of the maximal matrix is zero"));
    }
    Ok(best.deficit / den)
}

/// `max / (max - min)` of the deficits.
pub fn index_norm(results: &[DeficitResult]) -> Result<f64> {
    let max = argmax(results)?.deficit;
    let min = results.iter().map(|r| r.deficit).fold(f64::INFINITY, f64::min);
    if (max - min).abs() <= ZERO_TOLERANCE {
        return Err(Error::DegenerateIndex("all deficits are equal"));
    }
    Ok(max / (max - min))
}
