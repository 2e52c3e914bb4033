use std::fs;

use approx::assert_abs_diff_eq;
use infobell::inference::{find_plan, Decision, DecisionPlan, HypothesisProbs};
use infobell::model::{build_cross_table, Column, Experiment, Outcome, PairFilter, SelectionMask};
use infobell::session::{analyze_session, parse_session_csv, write_deficits_csv, AnalysisConfig};
use infobell::simulate::{gen_stochastic, SeedSpec, SelectionDomain};
use infobell::{deficit_pseudo, run_campaign, CampaignConfig, CaseKind};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/stochastic_n8_seed42.csv");

fn fixture() -> Experiment {
    let mut ms = parse_session_csv(fs::File::open(FIXTURE).unwrap()).unwrap();
    assert_eq!(ms.len(), 1);
    ms.remove(0)
}

#[test]
fn generator_is_pinned() {
    let m = gen_stochastic(8, SeedSpec::new(42, 0), SelectionDomain::ThreeEntangledPairs).unwrap();
    assert_eq!(m, fixture());
}

#[test]
fn fixture_cross_table_matches_hand_tally() {
    use Column::*;
    let t = build_cross_table(&fixture(), PairFilter::AllPairs);
    // [x][y], x from the A side, y from the B side
    assert_eq!(t.block(A, B), [[2, 0], [5, 1]]);
    assert_eq!(t.block(A, BPrime), [[2, 0], [4, 2]]);
    assert_eq!(t.block(APrime, B), [[5, 1], [2, 0]]);
    assert_eq!(t.block(APrime, BPrime), [[4, 2], [2, 0]]);
    assert_eq!(t.column_margin(A), [2, 6]);
    assert_eq!(t.column_margin(APrime), [6, 2]);
    assert_eq!(t.column_margin(B), [7, 1]);
    assert_eq!(t.column_margin(BPrime), [6, 2]);
    for (a, b) in infobell::model::BLOCKS {
        assert_eq!(t.block_total(a, b), 8);
    }
}

#[test]
fn fixture_deficit_matches_hand_evaluation() {
    let r = deficit_pseudo(&fixture());
    assert_abs_diff_eq!(r.terms.h_ab_hd, 0.7552304974958022, epsilon = 1e-12);
    assert_abs_diff_eq!(r.terms.h_ab_prime, 0.6887218755408672, epsilon = 1e-12);
    assert_abs_diff_eq!(r.terms.h_bprime_aprime, 0.5156629249195446, epsilon = 1e-12);
    assert_abs_diff_eq!(r.terms.h_aprime_b, 0.6887218755408672, epsilon = 1e-12);
    assert_abs_diff_eq!(r.deficit, -1.1378761785054767, epsilon = 1e-12);
}

fn mask(a: Column, b: Column) -> SelectionMask {
    SelectionMask::new(a, b).unwrap()
}

/// Canonical deficit 0.5.
fn positive_experiment() -> Experiment {
    use Column::*;
    let a = [0, 1, 1, 1];
    let ap = [1, 1, 1, 1];
    let b = [0, 0, 1, 1];
    let bp = [0, 1, 1, 1];
    let masks = [mask(A, BPrime), mask(APrime, BPrime), mask(APrime, B), mask(A, BPrime)];
    Experiment::new((0..4).map(|i| Outcome::new([a[i], ap[i], b[i], bp[i]], masks[i]).unwrap()).collect()).unwrap()
}

/// Canonical deficit 0.
fn null_experiment() -> Experiment {
    let m = mask(Column::A, Column::BPrime);
    Experiment::new(vec![Outcome::new([0; 4], m).unwrap(); 4]).unwrap()
}

fn plan() -> DecisionPlan {
    find_plan(HypothesisProbs::new(0.012, 0.85).unwrap(), 0.001, 0.99, 100).unwrap()
}

#[test]
fn session_verdicts() {
    assert_eq!(deficit_pseudo(&positive_experiment()).deficit, 0.5);
    let cfg = AnalysisConfig::default();
    let mut ms = vec![positive_experiment(); 3];
    ms.extend(vec![null_experiment(); 3]);
    let s = analyze_session(&ms, &plan(), &cfg).unwrap();
    assert_eq!((s.n_req, s.k0, s.k_e, s.completed), (6, 2, 3, 6));
    assert_eq!(s.verdict, Decision::AcceptH1);
    assert!(!s.early);

    let s = analyze_session(&vec![null_experiment(); 6], &plan(), &cfg).unwrap();
    assert_eq!(s.k_e, 0);
    assert_eq!(s.verdict, Decision::RetainH0);

    let s = analyze_session(&[positive_experiment(), null_experiment()], &plan(), &cfg).unwrap();
    assert_eq!((s.k_e, s.completed), (1, 2));
    assert_eq!(s.verdict, Decision::InProgress);
}

#[test]
fn delta_raises_the_bar() {
    let cfg = AnalysisConfig { delta: 0.5, ..Default::default() };
    let s = analyze_session(&vec![positive_experiment(); 6], &plan(), &cfg).unwrap();
    assert_eq!(s.k_e, 0);
    assert_eq!(s.verdict, Decision::RetainH0);
}

#[test]
fn mixed_sizes_are_a_shape_error() {
    let short = Experiment::new(positive_experiment().outcomes()[..3].to_vec()).unwrap();
    let err = analyze_session(&[positive_experiment(), short], &plan(), &AnalysisConfig::default()).unwrap_err();
    assert!(matches!(err, infobell::Error::Shape(_)));
}

#[test]
fn deficits_csv_mirrors_campaign() {
    let r = run_campaign(&CampaignConfig::new(CaseKind::Anticorrelated, 4, 20, 3)).unwrap();
    let mut buf = Vec::new();
    write_deficits_csv(&r.results, &mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 20);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0].parse::<usize>().unwrap(), i);
        assert_eq!(row[5].parse::<f64>().unwrap(), r.results[i].deficit);
    }
}

#[test]
fn stats_json_field_names() {
    let r = run_campaign(&CampaignConfig::new(CaseKind::Stochastic, 4, 50, 1)).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert!(v["stats"]["p_rank"].is_number());
    assert!(v["estimator_variant"].is_string());
    let s = analyze_session(&[positive_experiment()], &plan(), &AnalysisConfig::default()).unwrap();
    let v = serde_json::to_value(&s).unwrap();
    for key in ["n_req", "k0", "k_e", "verdict", "estimator_variant"] {
        assert!(!v[key].is_null(), "{key}");
    }
    assert_eq!(v["experiments"][0]["deficit_bits"], 0.5);
    assert_eq!(v["verdict"], "InProgress");
}
