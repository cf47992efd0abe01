//! Judge parsing against captured model-output shapes.

use shockcast::judge::{parse_judge_json, JudgeError};

#[test]
fn clean_json_fixture_parses() {
    let annotation = parse_judge_json(include_str!("fixtures/judge/clean_json.txt")).unwrap();
    assert_eq!(annotation.total(), 5);
    assert_eq!(annotation.evidence_linkage, 0);
}

#[test]
fn prose_wrapped_boolean_fixture_parses() {
    let annotation = parse_judge_json(include_str!("fixtures/judge/prose_wrapped.txt")).unwrap();
    assert_eq!(annotation.total(), 5);
    assert_eq!(annotation.explicit_forecasting_model, 0);
    assert_eq!(annotation.uncertainty_refinement, 1);
}

#[test]
fn markdown_fenced_fixture_parses() {
    let annotation = parse_judge_json(include_str!("fixtures/judge/markdown_fenced.txt")).unwrap();
    assert_eq!(annotation.total(), 1);
    assert_eq!(annotation.evidence_linkage, 1);
}

#[test]
fn truncated_fixture_reports_missing_keys() {
    match parse_judge_json(include_str!("fixtures/judge/truncated.txt")) {
        Err(JudgeError::MissingKeys { missing }) => {
            assert!(!missing.is_empty());
        }
        other => panic!("expected MissingKeys, got {other:?}"),
    }
}
