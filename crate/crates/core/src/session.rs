//! Session CSV format, per-experiment CSV export, and session analysis.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::entropy::{exceeds, DeficitResult, EntropyTerms, Estimator};
use crate::error::{domain, Error, Result};
use crate::inference::{significance, verdict, Decision, DecisionPlan, TailReading, VerdictMode};
use crate::model::{Column, Experiment, Outcome, SelectionMask};
use crate::simulate::SelectionDomain;

pub const SESSION_HEADER: [&str; 8] = ["experiment", "outcome", "a", "a_prime", "b", "b_prime", "sel_a", "sel_b"];
pub const DEFICIT_HEADER: [&str; 6] =
    ["experiment_index", "h_ab_hd", "h_ab_prime", "h_bprime_aprime", "h_aprime_b", "deficit"];

/// One outcome in the flat form used by the CSV file and the JSON API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub a: u8,
    pub a_prime: u8,
    pub b: u8,
    pub b_prime: u8,
    pub sel_a: Column,
    pub sel_b: Column,
}

impl OutcomeRow {
    pub fn to_outcome(self) -> Result<Outcome> {
        Outcome::new([self.a, self.a_prime, self.b, self.b_prime], SelectionMask::new(self.sel_a, self.sel_b)?)
    }
}

impl From<Outcome> for OutcomeRow {
    fn from(o: Outcome) -> Self {
        let [a, a_prime, b, b_prime] = o.values();
        OutcomeRow { a, a_prime, b, b_prime, sel_a: o.mask().a(), sel_b: o.mask().b() }
    }
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn bit(field: &str, name: &str, line: u64) -> Result<u8> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(parse_err(line, format!("{name} must be 0 or 1, got '{field}'"))),
    }
}

fn selection(field: &str, name: &str, system_a: bool, line: u64) -> Result<Column> {
    match Column::from_name(field) {
        Some(c) if c.is_system_a() == system_a => Ok(c),
        _ => {
            let allowed = if system_a { "a or a_prime" } else { "b or b_prime" };
            Err(parse_err(line, format!("{name} must be {allowed}, got '{field}'")))
        }
    }
}

/// Reads a session file into experiments ordered by first appearance of their
/// id. Outcomes must be numbered `1..=n` within each experiment, and every
/// experiment must have the same `n`.
pub fn parse_session_csv<R: Read>(input: R) -> Result<Vec<Experiment>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::None).from_reader(input);
    let mut groups: Vec<(String, Vec<Outcome>)> = Vec::new();
    let mut saw_header = false;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if !saw_header {
            if rec.iter().ne(SESSION_HEADER.iter().copied()) {
                return Err(parse_err(line, format!("header must be {}", SESSION_HEADER.join(","))));
            }
            saw_header = true;
            continue;
        }
        if rec.len() != SESSION_HEADER.len() {
            return Err(parse_err(line, format!("expected 8 fields, got {}", rec.len())));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty experiment id"));
        }
        let outcome: u64 = rec[1].parse().map_err(|_| parse_err(line, format!("bad outcome number '{}'", &rec[1])))?;
        let row = OutcomeRow {
            a: bit(&rec[2], "a", line)?,
            a_prime: bit(&rec[3], "a_prime", line)?,
            b: bit(&rec[4], "b", line)?,
            b_prime: bit(&rec[5], "b_prime", line)?,
            sel_a: selection(&rec[6], "sel_a", true, line)?,
            sel_b: selection(&rec[7], "sel_b", false, line)?,
        };
        let o = row.to_outcome().map_err(|e| parse_err(line, e.to_string()))?;
        let idx = match groups.iter().position(|g| g.0 == id) {
            Some(i) => i,
            None => {
                groups.push((id, Vec::new()));
                groups.len() - 1
            }
        };
        let expected = groups[idx].1.len() as u64 + 1;
        if outcome != expected {
            return Err(parse_err(line, format!("expected outcome {expected} of experiment {}, got {outcome}", groups[idx].0)));
        }
        groups[idx].1.push(o);
    }
    if !saw_header {
        return Err(parse_err(1, "missing header"));
    }
    if let Some(first) = groups.first() {
        let n = first.1.len();
        if let Some(bad) = groups.iter().find(|g| g.1.len() != n) {
            return Err(Error::Shape(format!(
                "experiment {} has {} outcomes, experiment {} has {n}",
                bad.0,
                bad.1.len(),
                first.0
            )));
        }
    }
    groups.into_iter().map(|g| Experiment::new(g.1)).collect()
}

/// Writes experiments with ids and outcome numbers starting at 1.
pub fn write_session_csv<W: Write>(experiments: &[Experiment], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(SESSION_HEADER).map_err(io)?;
    for (i, m) in experiments.iter().enumerate() {
        for (j, o) in m.outcomes().iter().enumerate() {
            let [a, ap, b, bp] = o.values();
            w.write_record([
                (i + 1).to_string(),
                (j + 1).to_string(),
                a.to_string(),
                ap.to_string(),
                b.to_string(),
                bp.to_string(),
                o.mask().a().name().to_string(),
                o.mask().b().name().to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-experiment entropy terms and deficits, one row per result.
pub fn write_deficits_csv<W: Write>(results: &[DeficitResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(DEFICIT_HEADER).map_err(io)?;
    for (i, r) in results.iter().enumerate() {
        let t = r.terms;
        w.write_record([
            i.to_string(),
            t.h_ab_hd.to_string(),
            t.h_ab_prime.to_string(),
            t.h_bprime_aprime.to_string(),
            t.h_aprime_b.to_string(),
            r.deficit.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub delta: f64,
    pub selection_domain: SelectionDomain,
    pub estimator: Estimator,
    pub mode: VerdictMode,
    pub tail: TailReading,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            delta: 0.0,
            selection_domain: SelectionDomain::default(),
            estimator: Estimator::CANONICAL,
            mode: VerdictMode::default(),
            tail: TailReading::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(domain(format!("delta must be nonnegative, got {}", self.delta)));
        }
        Ok(())
    }

    /// Rejects selections outside the configured domain.
    pub fn check_outcome(&self, o: &Outcome) -> Result<()> {
        if !self.selection_domain.contains(o.mask()) {
            return Err(domain(format!(
                "selection ({}, {}) is outside the '{}' selection domain",
                o.mask().a(),
                o.mask().b(),
                self.selection_domain
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    /// 1-based.
    pub experiment: u64,
    pub terms: EntropyTerms,
    pub deficit_bits: f64,
    pub exceeds_delta: bool,
}

/// Everything reported about a session; identical whether produced from a
/// stored session or from its exported CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub estimator_variant: String,
    pub selection_domain: SelectionDomain,
    pub delta: f64,
    pub p0_h0: f64,
    pub p0_h1: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub n_req: u64,
    pub k0: u64,
    pub experiments: Vec<ExperimentSummary>,
    pub completed: u64,
    pub k_e: u64,
    /// Probability of at least this many exceedances under H0.
    pub p_value: f64,
    pub verdict: Decision,
    pub early: bool,
}

/// Evaluates complete experiments against `plan`.
pub fn analyze_session(experiments: &[Experiment], plan: &DecisionPlan, config: &AnalysisConfig) -> Result<SessionSummary> {
    config.validate()?;
    if let Some(first) = experiments.first() {
        if let Some(bad) = experiments.iter().position(|m| m.n() != first.n()) {
            return Err(Error::Shape(format!(
                "experiment {} has {} outcomes, experiment 1 has {}",
                bad + 1,
                experiments[bad].n(),
                first.n()
            )));
        }
    }
    for o in experiments.iter().flat_map(|m| m.outcomes()) {
        config.check_outcome(o)?;
    }
    let rows: Vec<ExperimentSummary> = experiments
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let r = config.estimator.deficit(m);
            ExperimentSummary {
                experiment: i as u64 + 1,
                terms: r.terms,
                deficit_bits: r.deficit,
                exceeds_delta: exceeds(r.deficit, config.delta),
            }
        })
        .collect();
    let completed = rows.len() as u64;
    let k_e = rows.iter().filter(|r| r.exceeds_delta).count() as u64;
    let v = verdict(k_e, completed, plan, config.delta, config.mode)?;
    let p_value = if completed == 0 { 1.0 } else { significance(k_e, completed, plan.probs.p0_h0, config.tail)? };
    Ok(SessionSummary {
        estimator_variant: config.estimator.variant_name(),
        selection_domain: config.selection_domain,
        delta: config.delta,
        p0_h0: plan.probs.p0_h0,
        p0_h1: plan.probs.p0_h1,
        alpha: plan.alpha,
        gamma: plan.gamma,
        n_req: plan.n_req,
        k0: plan.k0,
        experiments: rows,
        completed,
        k_e,
        p_value,
        verdict: v.decision,
        early: v.early,
    })
}
