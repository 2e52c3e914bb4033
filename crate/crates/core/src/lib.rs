//! Pseudocomplementary measurement data and the information Bell inequality.
//!
//! Classical four-column outcome tables are generated (or read from session
//! files), each experiment is reduced to an information deficit
//! `H(A|B) - H(A|B') - H(B'|A') - H(A'|B)`, campaigns of experiments give the
//! probability of a positive deficit under local realism, and an exact
//! binomial planner turns that probability and the spin-1/2 reference curve
//! into a sample size and an acceptance threshold.

pub mod campaign;
pub mod entropy;
pub mod error;
pub mod inference;
pub mod model;
pub mod quantum;
pub mod session;
pub mod simulate;
pub mod store;

pub use campaign::{run_campaign, CampaignConfig, CampaignReport, CampaignStats, Histogram};
pub use entropy::{deficit_pseudo, DeficitResult, EntropyTerms, Estimator, IndexDenominator, TermSource};
pub use error::{Error, Result};
pub use inference::{find_plan, Decision, DecisionPlan, HypothesisProbs, TailReading, Verdict, VerdictMode};
pub use model::{Column, Experiment, Outcome, PairFilter, SelectionMask};
pub use session::{analyze_session, AnalysisConfig, OutcomeRow, SessionSummary};
pub use simulate::{enumerate_exact, generate, CaseKind, ExactStats, SeedSpec, SelectionDomain};
pub use store::{SessionRecord, SessionStore};
