//! Outcome records, experiment matrices and the frequency / conditional /
//! joint cross tables built from them.
//!
//! Every outcome carries all four dichotomous values `a, a', b, b'` (a fully
//! populated classical row) together with a [`SelectionMask`] naming the
//! pseudocomplementary pair. The cells not named by the mask are the hidden
//! cells of that outcome.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// One of the four observables of the two-system setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Column {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "a_prime")]
    APrime,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "b_prime")]
    BPrime,
}

impl Column {
    pub const ALL: [Column; 4] = [Column::A, Column::APrime, Column::B, Column::BPrime];

    pub const fn index(self) -> usize {
        match self {
            Column::A => 0,
            Column::APrime => 1,
            Column::B => 2,
            Column::BPrime => 3,
        }
    }

    pub const fn is_system_a(self) -> bool {
        matches!(self, Column::A | Column::APrime)
    }

    /// The other column of the same system.
    pub const fn partner(self) -> Column {
        match self {
            Column::A => Column::APrime,
            Column::APrime => Column::A,
            Column::B => Column::BPrime,
            Column::BPrime => Column::B,
        }
    }

    /// Name used in CSV headers and selection fields.
    pub const fn name(self) -> &'static str {
        match self {
            Column::A => "a",
            Column::APrime => "a_prime",
            Column::B => "b",
            Column::BPrime => "b_prime",
        }
    }

    pub fn from_name(s: &str) -> Option<Column> {
        Column::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The pseudocomplementary pair of one outcome: one column from each system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMask")]
pub struct SelectionMask {
    a: Column,
    b: Column,
}

#[derive(Deserialize)]
struct RawMask {
    a: Column,
    b: Column,
}

impl TryFrom<RawMask> for SelectionMask {
    type Error = Error;

    fn try_from(raw: RawMask) -> Result<Self> {
        SelectionMask::new(raw.a, raw.b)
    }
}

impl SelectionMask {
    pub fn new(a: Column, b: Column) -> Result<Self> {
        if !a.is_system_a() {
            return Err(domain(format!("selection for system A must be a or a_prime, got {a}")));
        }
        if b.is_system_a() {
            return Err(domain(format!("selection for system B must be b or b_prime, got {b}")));
        }
        Ok(SelectionMask { a, b })
    }

    pub const fn a(self) -> Column {
        self.a
    }

    pub const fn b(self) -> Column {
        self.b
    }

    /// The mask of the hidden pair (both partners of the selected cells).
    pub const fn hidden(self) -> SelectionMask {
        SelectionMask { a: self.a.partner(), b: self.b.partner() }
    }

    pub const fn selects(self, col: Column) -> bool {
        self.a.index() == col.index() || self.b.index() == col.index()
    }
}

/// A fully populated outcome row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Outcome {
    values: [u8; 4],
    mask: SelectionMask,
}

impl Outcome {
    /// `values` are given in the order `a, a', b, b'`.
    pub fn new(values: [u8; 4], mask: SelectionMask) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(domain(format!("measurement values must be 0 or 1, got {v}")));
        }
        Ok(Outcome { values, mask })
    }

    pub const fn value(&self, col: Column) -> u8 {
        self.values[col.index()]
    }

    pub const fn values(&self) -> [u8; 4] {
        self.values
    }

    pub const fn mask(&self) -> SelectionMask {
        self.mask
    }

    pub const fn is_selected(&self, col: Column) -> bool {
        self.mask.selects(col)
    }
}

/// `n >= 1` outcomes evaluated together.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Experiment {
    outcomes: Vec<Outcome>,
}

impl Experiment {
    pub fn new(outcomes: Vec<Outcome>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptyExperiment);
        }
        Ok(Experiment { outcomes })
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn into_outcomes(self) -> Vec<Outcome> {
        self.outcomes
    }

    /// The values of one column, in outcome order.
    pub fn column(&self, col: Column) -> impl Iterator<Item = u8> + '_ {
        self.outcomes.iter().map(move |o| o.value(col))
    }
}

/// The four A-side x B-side blocks of the cross table, in display order.
pub const BLOCKS: [(Column, Column); 4] = [
    (Column::A, Column::B),
    (Column::A, Column::BPrime),
    (Column::APrime, Column::B),
    (Column::APrime, Column::BPrime),
];

fn block_index(a: Column, b: Column) -> usize {
    BLOCKS
        .iter()
        .position(|&(x, y)| x == a && y == b)
        .expect("block must pair an A-side column with a B-side column")
}

/// Which column pairs of an outcome are tallied into the cross table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairFilter {
    /// Every block receives one pair per outcome.
    AllPairs,
    /// Only the selected (pseudocomplementary) pair of each outcome.
    SelectedOnly,
    /// Only the hidden pair of each outcome.
    HiddenOnly,
    /// The selected pair and the hidden pair of each outcome, each in its own block.
    SelectedAndHidden,
}

impl PairFilter {
    /// Tallied pairs per outcome.
    pub const fn events_per_outcome(self) -> u32 {
        match self {
            PairFilter::AllPairs => 4,
            PairFilter::SelectedOnly | PairFilter::HiddenOnly => 1,
            PairFilter::SelectedAndHidden => 2,
        }
    }

    fn accepts(self, outcome: &Outcome, a: Column, b: Column) -> bool {
        let mask = outcome.mask();
        let selected = mask.a() == a && mask.b() == b;
        let hidden = mask.hidden().a() == a && mask.hidden().b() == b;
        match self {
            PairFilter::AllPairs => true,
            PairFilter::SelectedOnly => selected,
            PairFilter::HiddenOnly => hidden,
            PairFilter::SelectedAndHidden => selected || hidden,
        }
    }
}

/// Identifies the frequency table a derived table came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Provenance(u64);

/// Counts `N(x, y)` for each of the four blocks, indexed `[block][x][y]` with
/// `x` the A-side value and `y` the B-side value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyCrossTable {
    filter: PairFilter,
    n: usize,
    counts: [[[u32; 2]; 2]; 4],
}

impl FrequencyCrossTable {
    /// Builds a table from raw counts, e.g. for hand-entered data.
    pub fn from_counts(filter: PairFilter, n: usize, counts: [[[u32; 2]; 2]; 4]) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyExperiment);
        }
        for block in &counts {
            let total: u64 = block.iter().flatten().map(|&c| u64::from(c)).sum();
            if total > n as u64 {
                return Err(domain(format!("block total {total} exceeds {n} outcomes")));
            }
        }
        Ok(FrequencyCrossTable { filter, n, counts })
    }

    pub fn filter(&self) -> PairFilter {
        self.filter
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block(&self, a: Column, b: Column) -> [[u32; 2]; 2] {
        self.counts[block_index(a, b)]
    }

    pub fn blocks(&self) -> &[[[u32; 2]; 2]; 4] {
        &self.counts
    }

    pub fn block_total(&self, a: Column, b: Column) -> u32 {
        self.block(a, b).iter().flatten().sum()
    }

    /// Value counts of the A-side column of a block (`[N(x=0), N(x=1)]`).
    pub fn row_margin(&self, a: Column, b: Column) -> [u32; 2] {
        let c = self.block(a, b);
        [c[0][0] + c[0][1], c[1][0] + c[1][1]]
    }

    /// Value counts of the B-side column of a block (`[N(y=0), N(y=1)]`).
    pub fn col_margin(&self, a: Column, b: Column) -> [u32; 2] {
        let c = self.block(a, b);
        [c[0][0] + c[1][0], c[0][1] + c[1][1]]
    }

    /// Per-column value counts. Only meaningful for [`PairFilter::AllPairs`],
    /// where both blocks containing a column agree on its margin.
    pub fn column_margin(&self, col: Column) -> [u32; 2] {
        if col.is_system_a() {
            self.row_margin(col, Column::B)
        } else {
            self.col_margin(Column::A, col)
        }
    }

    pub fn provenance(&self) -> Provenance {
        // FNV-1a over the filter tag, n and the counts
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            for byte in v.to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.filter as u64);
        eat(self.n as u64);
        for c in self.counts.iter().flatten().flatten() {
            eat(u64::from(*c));
        }
        Provenance(h)
    }
}

/// Tallies the column pairs of `matrix` according to `filter`.
pub fn build_cross_table(matrix: &Experiment, filter: PairFilter) -> FrequencyCrossTable {
    let mut counts = [[[0u32; 2]; 2]; 4];
    for outcome in matrix.outcomes() {
        for (i, &(a, b)) in BLOCKS.iter().enumerate() {
            if filter.accepts(outcome, a, b) {
                counts[i][outcome.value(a) as usize][outcome.value(b) as usize] += 1;
            }
        }
    }
    FrequencyCrossTable { filter, n: matrix.n(), counts }
}

/// `p(x | y)` per block, `None` where the conditioning margin `N(y)` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalProbabilityTable {
    provenance: Provenance,
    probs: [[[Option<f64>; 2]; 2]; 4],
}

impl ConditionalProbabilityTable {
    pub fn get(&self, a: Column, b: Column, x: u8, y: u8) -> Option<f64> {
        self.probs[block_index(a, b)][x as usize][y as usize]
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// `p(x | y) = N(x, y) / N(y)`, conditioning on the B-side column of each block.
pub fn conditional_from_frequency(freq: &FrequencyCrossTable) -> ConditionalProbabilityTable {
    let mut probs = [[[None; 2]; 2]; 4];
    for (i, block) in freq.counts.iter().enumerate() {
        for y in 0..2 {
            let ny = block[0][y] + block[1][y];
            if ny == 0 {
                continue;
            }
            for x in 0..2 {
                probs[i][x][y] = Some(f64::from(block[x][y]) / f64::from(ny));
            }
        }
    }
    ConditionalProbabilityTable { provenance: freq.provenance(), probs }
}

/// `p(x, y) = N(x, y) / n` per block.
#[derive(Debug, Clone, PartialEq)]
pub struct JointProbabilityTable {
    provenance: Provenance,
    events_per_outcome: u32,
    probs: [[[f64; 2]; 2]; 4],
}

impl JointProbabilityTable {
    pub fn get(&self, a: Column, b: Column, x: u8, y: u8) -> f64 {
        self.probs[block_index(a, b)][x as usize][y as usize]
    }

    pub fn set(&mut self, a: Column, b: Column, x: u8, y: u8, p: f64) {
        self.probs[block_index(a, b)][x as usize][y as usize] = p;
    }

    pub fn events_per_outcome(&self) -> u32 {
        self.events_per_outcome
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

pub fn joint_from_frequency(
    freq: &FrequencyCrossTable,
    events_per_outcome: u32,
) -> Result<JointProbabilityTable> {
    if !matches!(events_per_outcome, 2 | 4) {
        return Err(domain(format!("events per outcome must be 2 or 4, got {events_per_outcome}")));
    }
    if freq.n == 0 {
        return Err(Error::EmptyExperiment);
    }
    let total: u64 = freq.counts.iter().flatten().flatten().map(|&c| u64::from(c)).sum();
    if total > u64::from(events_per_outcome) * freq.n as u64 {
        return Err(domain(format!(
            "{total} tallied events exceed {events_per_outcome} per outcome over {} outcomes",
            freq.n
        )));
    }
    let n = freq.n as f64;
    let mut probs = [[[0.0; 2]; 2]; 4];
    for (dst, src) in probs.iter_mut().zip(&freq.counts) {
        for x in 0..2 {
            for y in 0..2 {
                dst[x][y] = f64::from(src[x][y]) / n;
            }
        }
    }
    Ok(JointProbabilityTable { provenance: freq.provenance(), events_per_outcome, probs })
}

/// `p(y)` of the conditioning (B-side) column of each block.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    provenance: Provenance,
    probs: [[f64; 2]; 4],
}

impl Marginals {
    pub fn get(&self, a: Column, b: Column, y: u8) -> f64 {
        self.probs[block_index(a, b)][y as usize]
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

pub fn marginals_from_frequency(freq: &FrequencyCrossTable) -> Marginals {
    let n = freq.n as f64;
    let mut probs = [[0.0; 2]; 4];
    for (i, &(a, b)) in BLOCKS.iter().enumerate() {
        let m = freq.col_margin(a, b);
        probs[i] = [f64::from(m[0]) / n, f64::from(m[1]) / n];
    }
    Marginals { provenance: freq.provenance(), probs }
}

/// Largest `|p(x, y) - p(x | y) p(y)|` over all cells with a defined conditional.
pub fn bayes_residual(
    joint: &JointProbabilityTable,
    marginals: &Marginals,
    conditional: &ConditionalProbabilityTable,
) -> Result<f64> {
    if joint.provenance != marginals.provenance || joint.provenance != conditional.provenance {
        return Err(Error::ProvenanceMismatch);
    }
    let mut worst = 0.0_f64;
    for i in 0..4 {
        for x in 0..2 {
            for y in 0..2 {
                if let Some(cond) = conditional.probs[i][x][y] {
                    let r = (joint.probs[i][x][y] - cond * marginals.probs[i][y]).abs();
                    worst = worst.max(r);
                }
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(a: Column, b: Column) -> SelectionMask {
        SelectionMask::new(a, b).unwrap()
    }

    fn outcome(a: u8, ap: u8, b: u8, bp: u8) -> Outcome {
        Outcome::new([a, ap, b, bp], mask(Column::A, Column::BPrime)).unwrap()
    }

    #[test]
    fn mask_rejects_wrong_system() {
        assert!(SelectionMask::new(Column::B, Column::B).is_err());
        assert!(SelectionMask::new(Column::A, Column::APrime).is_err());
        let m = mask(Column::A, Column::BPrime);
        assert_eq!(m.hidden(), mask(Column::APrime, Column::B));
    }

    #[test]
    fn outcome_rejects_non_bits() {
        assert!(Outcome::new([0, 2, 0, 0], mask(Column::A, Column::B)).is_err());
    }

    #[test]
    fn empty_experiment_is_an_error() {
        assert_eq!(Experiment::new(vec![]), Err(Error::EmptyExperiment));
    }

    #[test]
    fn single_outcome_tally() {
        let m = Experiment::new(vec![outcome(1, 0, 1, 0)]).unwrap();
        let t = build_cross_table(&m, PairFilter::AllPairs);
        for &(a, b) in &BLOCKS {
            assert_eq!(t.block_total(a, b), 1);
        }
        assert_eq!(t.block(Column::A, Column::B)[1][1], 1);
        assert_eq!(t.block(Column::APrime, Column::BPrime)[0][0], 1);
    }

    #[test]
    fn constant_columns_fill_the_zero_cell() {
        let m = Experiment::new(vec![outcome(0, 0, 0, 0); 4]).unwrap();
        let t = build_cross_table(&m, PairFilter::AllPairs);
        for &(a, b) in &BLOCKS {
            assert_eq!(t.block(a, b), [[4, 0], [0, 0]]);
        }
    }

    #[test]
    fn filters_route_selected_and_hidden_pairs() {
        // selected (a, b'), hidden (a', b)
        let m = Experiment::new(vec![outcome(1, 0, 1, 0), outcome(0, 1, 1, 1)]).unwrap();
        let sel = build_cross_table(&m, PairFilter::SelectedOnly);
        assert_eq!(sel.block_total(Column::A, Column::BPrime), 2);
        assert_eq!(sel.block_total(Column::A, Column::B), 0);
        let hid = build_cross_table(&m, PairFilter::HiddenOnly);
        assert_eq!(hid.block_total(Column::APrime, Column::B), 2);
        assert_eq!(hid.block(Column::APrime, Column::B), [[0, 1], [0, 1]]);
        let both = build_cross_table(&m, PairFilter::SelectedAndHidden);
        let total: u32 = BLOCKS.iter().map(|&(a, b)| both.block_total(a, b)).sum();
        assert_eq!(total, 2 * 2);
    }

    fn single_block(block: [[u32; 2]; 2], n: usize) -> FrequencyCrossTable {
        let mut counts = [[[0; 2]; 2]; 4];
        counts[0] = block;
        FrequencyCrossTable::from_counts(PairFilter::AllPairs, n, counts).unwrap()
    }

    #[test]
    fn conditional_examples() {
        let (a, b) = (Column::A, Column::B);
        let c = conditional_from_frequency(&single_block([[2, 0], [0, 2]], 4));
        assert_eq!(c.get(a, b, 0, 0), Some(1.0));
        assert_eq!(c.get(a, b, 1, 1), Some(1.0));

        let c = conditional_from_frequency(&single_block([[1, 1], [1, 1]], 4));
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(c.get(a, b, x, y), Some(0.5));
            }
        }

        // counts are [x][y]: y=0 has N(x=0)=3, N(x=1)=1; y=1 is empty
        let c = conditional_from_frequency(&single_block([[3, 0], [1, 0]], 4));
        assert_eq!(c.get(a, b, 0, 0), Some(0.75));
        assert_eq!(c.get(a, b, 1, 0), Some(0.25));
        assert_eq!(c.get(a, b, 0, 1), None);
        assert_eq!(c.get(a, b, 1, 1), None);
    }

    #[test]
    fn joint_examples() {
        let (a, b) = (Column::A, Column::B);
        let j = joint_from_frequency(&single_block([[2, 0], [0, 2]], 4), 4).unwrap();
        assert_eq!(j.get(a, b, 0, 0), 0.5);
        assert_eq!(j.get(a, b, 1, 1), 0.5);
        assert_eq!(j.get(Column::APrime, Column::B, 0, 0), 0.0);

        let j = joint_from_frequency(&single_block([[1, 2], [3, 2]], 8), 4).unwrap();
        assert_eq!(j.get(a, b, 0, 0), 0.125);
        assert_eq!(j.get(a, b, 0, 1), 0.25);
        assert_eq!(j.get(a, b, 1, 0), 0.375);
        assert_eq!(j.get(a, b, 1, 1), 0.25);

        assert!(joint_from_frequency(&single_block([[1, 0], [0, 0]], 4), 3).is_err());
    }

    #[test]
    fn bayes_residual_examples() {
        let t = single_block([[2, 0], [0, 2]], 4);
        let mut j = joint_from_frequency(&t, 4).unwrap();
        let m = marginals_from_frequency(&t);
        let c = conditional_from_frequency(&t);
        assert_eq!(m.get(Column::A, Column::B, 0), 0.5);
        assert_eq!(bayes_residual(&j, &m, &c).unwrap(), 0.0);

        j.set(Column::A, Column::B, 0, 0, 0.6);
        let r = bayes_residual(&j, &m, &c).unwrap();
        assert!((r - 0.1).abs() < 1e-12, "{r}");
    }

    #[test]
    fn bayes_residual_rejects_mixed_provenance() {
        let t1 = single_block([[2, 0], [0, 2]], 4);
        let t2 = single_block([[1, 1], [1, 1]], 4);
        let j = joint_from_frequency(&t1, 4).unwrap();
        let m = marginals_from_frequency(&t1);
        let c = conditional_from_frequency(&t2);
        assert_eq!(bayes_residual(&j, &m, &c), Err(Error::ProvenanceMismatch));
    }
}
