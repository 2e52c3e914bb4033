//! Stochastic and anticorrelated experiment generators, per-experiment seed
//! streams, and exhaustive enumeration of the generators' sample spaces.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{Estimator, ZERO_TOLERANCE};
use crate::error::{domain, Error, Result};
use crate::model::{Column, Experiment, Outcome, SelectionMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    /// All four cells are independent fair bits.
    Stochastic,
    /// Selected cells perfectly anticorrelated, hidden cells fair bits.
    Anticorrelated,
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseKind::Stochastic => "stochastic",
            CaseKind::Anticorrelated => "anticorrelated",
        })
    }
}

impl FromStr for CaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stochastic" | "random" => Ok(CaseKind::Stochastic),
            "anticorrelated" | "anti" => Ok(CaseKind::Anticorrelated),
            _ => Err(domain(format!("unknown case '{s}'"))),
        }
    }
}

/// The masks a random selection draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionDomain {
    /// `(a, b')`, `(a', b')`, `(a', b)`: the three pseudocomplementary terms.
    #[default]
    #[serde(rename = "three")]
    ThreeEntangledPairs,
    /// The three pairs above plus `(a, b)`.
    #[serde(rename = "four")]
    FourPairs,
}

const THREE: [(Column, Column); 3] =
    [(Column::A, Column::BPrime), (Column::APrime, Column::BPrime), (Column::APrime, Column::B)];
const FOUR: [(Column, Column); 4] = [
    (Column::A, Column::BPrime),
    (Column::APrime, Column::BPrime),
    (Column::APrime, Column::B),
    (Column::A, Column::B),
];

impl SelectionDomain {
    pub fn masks(self) -> Vec<SelectionMask> {
        let pairs: &[(Column, Column)] = match self {
            SelectionDomain::ThreeEntangledPairs => &THREE,
            SelectionDomain::FourPairs => &FOUR,
        };
        pairs
            .iter()
            .map(|&(a, b)| SelectionMask::new(a, b).expect("domain pairs are valid"))
            .collect()
    }

    pub fn len(self) -> usize {
        match self {
            SelectionDomain::ThreeEntangledPairs => 3,
            SelectionDomain::FourPairs => 4,
        }
    }

    pub fn contains(self, mask: SelectionMask) -> bool {
        self.masks().contains(&mask)
    }
}

impl fmt::Display for SelectionDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionDomain::ThreeEntangledPairs => "three",
            SelectionDomain::FourPairs => "four",
        })
    }
}

impl FromStr for SelectionDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "three" => Ok(SelectionDomain::ThreeEntangledPairs),
            "four" => Ok(SelectionDomain::FourPairs),
            _ => Err(domain(format!("unknown selection domain '{s}' (expected three or four)"))),
        }
    }
}

/// Identifies the random stream of one experiment of a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub experiment_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, experiment_index: u64) -> Self {
        SeedSpec { master_seed, experiment_index }
    }

    /// Seed of this experiment's ChaCha8 stream: [`mix_seed`] of the pair.
    pub fn stream_seed(&self) -> u64 {
        mix_seed(self.master_seed, self.experiment_index)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.stream_seed())
    }
}

/// SplitMix64 finalizer applied to `master + (index + 1) * φ·2^64`.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw_mask<R: Rng>(rng: &mut R, masks: &[SelectionMask]) -> SelectionMask {
    masks[rng.random_range(0..masks.len())]
}

fn checked_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyExperiment);
    }
    Ok(())
}

/// Four independent fair bits per outcome; the mask is drawn independently.
pub fn gen_stochastic(n: usize, seed: SeedSpec, domain: SelectionDomain) -> Result<Experiment> {
    checked_n(n)?;
    let masks = domain.masks();
    let mut rng = seed.rng();
    let outcomes = (0..n)
        .map(|_| {
            let bits: u8 = rng.random();
            let values = [bits & 1, (bits >> 1) & 1, (bits >> 2) & 1, (bits >> 3) & 1];
            let mask = draw_mask(&mut rng, &masks);
            Outcome::new(values, mask).expect("bits are 0 or 1")
        })
        .collect();
    Experiment::new(outcomes)
}

/// Fair bit in the selected A-side cell, its complement in the selected B-side
/// cell, fair bits in both hidden cells.
pub fn gen_anticorrelated(n: usize, seed: SeedSpec, domain: SelectionDomain) -> Result<Experiment> {
    checked_n(n)?;
    let masks = domain.masks();
    let mut rng = seed.rng();
    let outcomes = (0..n)
        .map(|_| {
            let mask = draw_mask(&mut rng, &masks);
            let bits: u8 = rng.random();
            anticorrelated_outcome(mask, bits & 1, (bits >> 1) & 1, (bits >> 2) & 1)
        })
        .collect();
    Experiment::new(outcomes)
}

fn anticorrelated_outcome(mask: SelectionMask, x: u8, hidden_a: u8, hidden_b: u8) -> Outcome {
    let mut values = [0u8; 4];
    values[mask.a().index()] = x;
    values[mask.b().index()] = 1 - x;
    values[mask.a().partner().index()] = hidden_a;
    values[mask.b().partner().index()] = hidden_b;
    Outcome::new(values, mask).expect("bits are 0 or 1")
}

pub fn generate(case: CaseKind, n: usize, seed: SeedSpec, domain: SelectionDomain) -> Result<Experiment> {
    match case {
        CaseKind::Stochastic => gen_stochastic(n, seed, domain),
        CaseKind::Anticorrelated => gen_anticorrelated(n, seed, domain),
    }
}

/// Upper bound on the number of equiprobable sample points enumerated.
pub const ENUMERATION_LIMIT: u64 = 1 << 24;

/// A reduced fraction of two counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExactRatio {
    pub numerator: u64,
    pub denominator: u64,
}

impl ExactRatio {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        let g = gcd(numerator, denominator).max(1);
        ExactRatio { numerator: numerator / g, denominator: denominator / g }
    }

    pub fn to_f64(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact distribution of the deficit over a generator's whole sample space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactStats {
    pub total: u64,
    pub positive: u64,
    pub zero: u64,
    pub negative: u64,
    pub max_deficit: f64,
    pub min_deficit: f64,
    /// Sum of the strictly positive deficits.
    pub positive_sum: f64,
    /// Distinct deficit values (grouped at 1e-9 bits) and their multiplicities.
    pub distribution: Vec<(f64, u64)>,
}

impl ExactStats {
    pub fn p_strict_positive(&self) -> ExactRatio {
        ExactRatio::new(self.positive, self.total)
    }

    pub fn p_zero(&self) -> ExactRatio {
        ExactRatio::new(self.zero, self.total)
    }

    pub fn p_negative(&self) -> ExactRatio {
        ExactRatio::new(self.negative, self.total)
    }

    /// Probability of a nonnegative deficit.
    pub fn p_rank(&self) -> ExactRatio {
        ExactRatio::new(self.positive + self.zero, self.total)
    }

    pub fn mean_positive(&self) -> Option<f64> {
        (self.positive > 0).then(|| self.positive_sum / self.positive as f64)
    }

    pub fn support_size(&self) -> usize {
        self.distribution.len()
    }
}

#[derive(Debug, Clone)]
struct Accum {
    total: u64,
    positive: u64,
    zero: u64,
    negative: u64,
    max: f64,
    min: f64,
    positive_sum: f64,
    dist: BTreeMap<i64, u64>,
}

impl Accum {
    fn new() -> Self {
        Accum {
            total: 0,
            positive: 0,
            zero: 0,
            negative: 0,
            max: f64::NEG_INFINITY,
            min: f64::INFINITY,
            positive_sum: 0.0,
            dist: BTreeMap::new(),
        }
    }

    fn push(&mut self, d: f64) {
        self.total += 1;
        if d > ZERO_TOLERANCE {
            self.positive += 1;
            self.positive_sum += d;
        } else if d.abs() <= ZERO_TOLERANCE {
            self.zero += 1;
        } else {
            self.negative += 1;
        }
        self.max = self.max.max(d);
        self.min = self.min.min(d);
        *self.dist.entry((d * 1e9).round() as i64).or_default() += 1;
    }

    fn merge(mut self, other: Accum) -> Accum {
        self.total += other.total;
        self.positive += other.positive;
        self.zero += other.zero;
        self.negative += other.negative;
        self.max = self.max.max(other.max);
        self.min = self.min.min(other.min);
        self.positive_sum += other.positive_sum;
        for (k, v) in other.dist {
            *self.dist.entry(k).or_default() += v;
        }
        self
    }
}

/// Every equiprobable single-outcome state of a generator.
fn outcome_states(case: CaseKind, domain: SelectionDomain) -> Vec<Outcome> {
    let mut states = Vec::new();
    for mask in domain.masks() {
        match case {
            CaseKind::Stochastic => {
                for v in 0u8..16 {
                    let values = [v & 1, (v >> 1) & 1, (v >> 2) & 1, (v >> 3) & 1];
                    states.push(Outcome::new(values, mask).expect("bits"));
                }
            }
            CaseKind::Anticorrelated => {
                for v in 0u8..8 {
                    states.push(anticorrelated_outcome(mask, v & 1, (v >> 1) & 1, (v >> 2) & 1));
                }
            }
        }
    }
    states
}

/// Number of equiprobable sample points for `n` outcomes.
pub fn sample_space_size(case: CaseKind, n: usize, domain: SelectionDomain) -> u128 {
    let per = outcome_states(case, domain).len() as u128;
    (0..n).fold(1u128, |acc, _| acc.saturating_mul(per))
}

/// Exact deficit distribution over all `n`-outcome experiments a generator can
/// produce, each counted with its (equal) probability.
pub fn enumerate_exact(
    case: CaseKind,
    n: usize,
    domain: SelectionDomain,
    estimator: &Estimator,
) -> Result<ExactStats> {
    checked_n(n)?;
    let size = sample_space_size(case, n, domain);
    if size > u128::from(ENUMERATION_LIMIT) {
        return Err(Error::TooLarge { size, limit: ENUMERATION_LIMIT });
    }
    let size = size as u64;
    let states = outcome_states(case, domain);
    let base = states.len() as u64;
    const CHUNK: u64 = 4096;
    let chunks = size.div_ceil(CHUNK);

    let acc = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * CHUNK;
            let end = (start + CHUNK).min(size);
            let mut digits = vec![0usize; n];
            let mut rest = start;
            for d in digits.iter_mut() {
                *d = (rest % base) as usize;
                rest /= base;
            }
            let mut outcomes: Vec<Outcome> = digits.iter().map(|&d| states[d]).collect();
            let mut acc = Accum::new();
            for _ in start..end {
                let r = estimator.evaluate_outcomes(&outcomes).expect("n >= 1");
                acc.push(r.deficit);
                // odometer increment
                for (d, o) in digits.iter_mut().zip(outcomes.iter_mut()) {
                    *d += 1;
                    if *d < states.len() {
                        *o = states[*d];
                        break;
                    }
                    *d = 0;
                    *o = states[0];
                }
            }
            acc
        })
        .reduce(Accum::new, Accum::merge);

    Ok(ExactStats {
        total: acc.total,
        positive: acc.positive,
        zero: acc.zero,
        negative: acc.negative,
        max_deficit: acc.max,
        min_deficit: acc.min,
        positive_sum: acc.positive_sum,
        distribution: acc.dist.into_iter().map(|(k, v)| (k as f64 / 1e9, v)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_matrix() {
        let s = SeedSpec::new(42, 7);
        for case in [CaseKind::Stochastic, CaseKind::Anticorrelated] {
            let a = generate(case, 12, s, SelectionDomain::ThreeEntangledPairs).unwrap();
            let b = generate(case, 12, s, SelectionDomain::ThreeEntangledPairs).unwrap();
            assert_eq!(a, b);
            let c = generate(case, 12, SeedSpec::new(42, 8), SelectionDomain::ThreeEntangledPairs).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn zero_outcomes_rejected() {
        assert!(gen_stochastic(0, SeedSpec::new(1, 0), SelectionDomain::FourPairs).is_err());
    }

    #[test]
    fn stochastic_columns_are_fair() {
        let m = gen_stochastic(10_000, SeedSpec::new(3, 0), SelectionDomain::ThreeEntangledPairs).unwrap();
        for col in Column::ALL {
            let ones: u32 = m.column(col).map(u32::from).sum();
            let frac = f64::from(ones) / 10_000.0;
            assert!((frac - 0.5).abs() < 4.0 * 0.005, "{col}: {frac}");
        }
    }

    #[test]
    fn anticorrelated_construction() {
        let m = gen_anticorrelated(5_000, SeedSpec::new(11, 2), SelectionDomain::ThreeEntangledPairs).unwrap();
        let ab = SelectionMask::new(Column::A, Column::B).unwrap();
        let mut hidden_ones = 0u32;
        for o in m.outcomes() {
            let mask = o.mask();
            assert_eq!(o.value(mask.a()) ^ o.value(mask.b()), 1);
            assert_ne!(mask, ab);
            hidden_ones += u32::from(o.value(mask.hidden().a())) + u32::from(o.value(mask.hidden().b()));
        }
        let frac = f64::from(hidden_ones) / 10_000.0;
        assert!((frac - 0.5).abs() < 4.0 * 0.005, "{frac}");
    }

    #[test]
    fn four_pair_domain_draws_ab() {
        let m = gen_stochastic(400, SeedSpec::new(5, 0), SelectionDomain::FourPairs).unwrap();
        let ab = SelectionMask::new(Column::A, Column::B).unwrap();
        assert!(m.outcomes().iter().any(|o| o.mask() == ab));
    }

    #[test]
    fn mix_is_sensitive_to_both_inputs() {
        assert_ne!(mix_seed(0, 0), mix_seed(0, 1));
        assert_ne!(mix_seed(0, 0), mix_seed(1, 0));
        assert_eq!(mix_seed(9, 9), mix_seed(9, 9));
    }

    #[test]
    fn sample_space_sizes() {
        let three = SelectionDomain::ThreeEntangledPairs;
        assert_eq!(sample_space_size(CaseKind::Stochastic, 2, three), 48 * 48);
        assert_eq!(sample_space_size(CaseKind::Anticorrelated, 4, three), 24u128.pow(4));
        assert_eq!(sample_space_size(CaseKind::Stochastic, 4, SelectionDomain::FourPairs), 1 << 24);
    }

    #[test]
    fn single_outcome_enumeration() {
        for est in [Estimator::CANONICAL, Estimator::FULL_COLUMNS] {
            let s = enumerate_exact(CaseKind::Stochastic, 1, SelectionDomain::ThreeEntangledPairs, &est).unwrap();
            assert_eq!(s.p_strict_positive(), ExactRatio::new(0, 1));
            assert_eq!(s.p_zero(), ExactRatio::new(1, 1));
            assert_eq!(s.max_deficit, 0.0);
            assert_eq!(s.support_size(), 1);
        }
    }

    #[test]
    fn enumeration_guard() {
        let err = enumerate_exact(CaseKind::Stochastic, 5, SelectionDomain::ThreeEntangledPairs, &Estimator::CANONICAL);
        assert!(matches!(err, Err(Error::TooLarge { .. })));
    }

    #[test]
    fn ratio_reduces() {
        assert_eq!(ExactRatio::new(6, 8), ExactRatio { numerator: 3, denominator: 4 });
        assert_eq!(ExactRatio::new(0, 8), ExactRatio { numerator: 0, denominator: 1 });
    }
}
