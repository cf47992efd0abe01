use chrono::NaiveDate;

use super::*;
use crate::index::{label_event, EntityKind};

fn month(y: i32, m: u32) -> MonthStamp {
    MonthStamp::new(y, m).unwrap()
}

fn product(name: &str) -> EntityId {
    EntityId::new(EntityKind::Product, name).unwrap()
}

fn article(id: &str, date: (i32, u32, u32), entity: &EntityId) -> NewsArticle {
    NewsArticle {
        id: id.to_string(),
        published: NaiveDate::from_ymd_opt(date.0, date.1, date.2).unwrap(),
        title: format!("headline {id}"),
        text: format!("body {id}"),
        entities: vec![entity.clone()],
    }
}

fn fixture_series(name: &str, values: &[Scalar]) -> IndexSeries {
    let mut obs = Vec::new();
    let mut m = month(2025, 1);
    for &v in values {
        obs.push((m, v));
        m = m.successor();
    }
    IndexSeries::new(product(name), obs).unwrap()
}

fn fixture_indexes() -> Vec<IndexSeries> {
    vec![
        fixture_series("alloy", &[0.5, 0.7, 0.4, 0.9, 0.5, 0.6]),
        fixture_series("timber", &[0.2, 0.5, 0.3, 0.6, 0.9, 0.4]),
    ]
}

fn build_config() -> BuildConfig {
    BuildConfig {
        start: month(2025, 1),
        ..BuildConfig::default()
    }
}

#[test]
fn news_context_enforces_month_boundary() {
    let entity = product("furniture");
    let t = month(2025, 10);
    let late = article("late", (2025, 11, 2), &entity);
    let boundary = article("boundary", (2025, 10, 31), &entity);
    let corpus = vec![late, boundary];

    let ctx = attach_news_context(&entity, t, &corpus, 8, &[]);
    let ids: Vec<&str> = ctx.iter().map(|a| a.id.as_str()).collect();
    assert_eq!(ids, vec!["boundary"]);
}

#[test]
fn news_context_keeps_most_recent_up_to_cap() {
    let entity = product("furniture");
    let t = month(2025, 10);
    let corpus: Vec<NewsArticle> = (1..=12)
        .map(|day| article(&format!("a{day:02}"), (2025, 10, day), &entity))
        .collect();

    let ctx = attach_news_context(&entity, t, &corpus, 8, &[]);

    // independent oracle: sort a copy by recency and truncate
    let mut expected: Vec<&NewsArticle> = corpus.iter().collect();
    expected.sort_by_key(|a| std::cmp::Reverse(a.published));
    expected.truncate(8);
    let expected_ids: Vec<&str> = expected.iter().map(|a| a.id.as_str()).collect();

    let got_ids: Vec<&str> = ctx.iter().map(|a| a.id.as_str()).collect();
    assert_eq!(got_ids, expected_ids);
    assert_eq!(got_ids.len(), 8);
    assert_eq!(got_ids[0], "a12");
}

#[test]
fn news_context_includes_related_entities() {
    let entity = product("furniture");
    let related = product("timber");
    let t = month(2025, 10);
    let corpus = vec![article("rel", (2025, 10, 5), &related)];

    assert!(attach_news_context(&entity, t, &corpus, 8, &[]).is_empty());
    let ctx = attach_news_context(&entity, t, &corpus, 8, std::slice::from_ref(&related));
    assert_eq!(ctx.len(), 1);
}

#[test]
fn question_count_matches_enumeration_oracle() {
    let indexes = fixture_indexes();
    let boundary = month(2025, 4);
    let questions = build_questions(&indexes, &[], boundary, &build_config()).unwrap();

    // brute-force oracle: walk the month grid directly
    let mut expected = 0usize;
    for series in &indexes {
        for probe in 2..=6u32 {
            let t = month(2025, probe);
            let has_state = series.value(t).is_some() && series.value(t.predecessor()).is_some();
            if has_state {
                expected += 1;
            }
        }
    }
    assert_eq!(questions.len(), expected);
    assert_eq!(questions.len(), 10);
}

#[test]
fn final_month_question_is_unresolved() {
    let questions =
        build_questions(&fixture_indexes(), &[], month(2025, 4), &build_config()).unwrap();
    let last = questions
        .iter()
        .find(|q| q.entity.name() == "alloy" && q.t == month(2025, 6))
        .unwrap();
    assert_eq!(last.split, Split::Unresolved);
    assert!(last.label.is_none());
}

#[test]
fn labels_match_independent_recompute() {
    let indexes = fixture_indexes();
    let questions = build_questions(&indexes, &[], month(2025, 4), &build_config()).unwrap();
    for q in questions.iter().filter(|q| q.label.is_some()) {
        let series = indexes.iter().find(|s| s.entity() == &q.entity).unwrap();
        let next = series.value(q.outcome_month()).unwrap();
        let expected = label_event(q.current_index, next, q.sigma).unwrap();
        assert_eq!(q.label, Some(expected), "question {}", q.id);
    }
}

#[test]
fn interior_gap_skips_question_but_final_month_does_not() {
    let entity = product("gappy");
    // months 1..4 observed, 5 missing, 6..8 observed
    let obs = vec![
        (month(2025, 1), 0.1),
        (month(2025, 2), 0.5),
        (month(2025, 3), 0.2),
        (month(2025, 4), 0.6),
        (month(2025, 6), 0.3),
        (month(2025, 7), 0.4),
        (month(2025, 8), 0.9),
    ];
    let series = IndexSeries::new(entity, obs).unwrap();
    let questions = build_questions(&[series], &[], month(2025, 8), &build_config()).unwrap();
    let months: Vec<MonthStamp> = questions.iter().map(|q| q.t).collect();
    // t=4 skipped (outcome month 5 is an interior gap), t=5/6 skipped (no
    // prior month / no consecutive prior), t=8 unresolved
    assert_eq!(
        months,
        vec![
            month(2025, 2),
            month(2025, 3),
            month(2025, 7),
            month(2025, 8)
        ]
    );
    assert_eq!(questions.last().unwrap().split, Split::Unresolved);
}

#[test]
fn build_is_deterministic() {
    let indexes = fixture_indexes();
    let entity = product("alloy");
    let corpus = vec![
        article("n1", (2025, 2, 10), &entity),
        article("n2", (2025, 2, 11), &entity),
    ];
    let a = build_questions(&indexes, &corpus, month(2025, 4), &build_config()).unwrap();
    let b = build_questions(&indexes, &corpus, month(2025, 4), &build_config()).unwrap();

    let mut buf_a = Vec::new();
    write_questions_jsonl(&mut buf_a, &a).unwrap();
    let mut buf_b = Vec::new();
    write_questions_jsonl(&mut buf_b, &b).unwrap();
    assert_eq!(buf_a, buf_b);
}

#[test]
fn empty_inputs_error() {
    assert!(matches!(
        build_questions(&[], &[], month(2025, 4), &build_config()),
        Err(DatasetError::EmptyDataset)
    ));
}

#[test]
fn split_check_passes_and_reports() {
    let questions =
        build_questions(&fixture_indexes(), &[], month(2025, 4), &build_config()).unwrap();
    let report = chronological_split_check(&questions).unwrap();
    assert_eq!(report.max_train_month, Some(month(2025, 4)));
    assert_eq!(report.min_test_month, Some(month(2025, 5)));
    assert!(!report.vacuous);
    assert_eq!(report.train.n_questions, 6);
    assert_eq!(report.test.n_questions, 2);
    assert_eq!(report.unresolved.n_questions, 2);
}

#[test]
fn split_check_detects_constructed_violation() {
    let mut questions =
        build_questions(&fixture_indexes(), &[], month(2025, 4), &build_config()).unwrap();
    // move one test question back into the train period
    let victim = questions
        .iter_mut()
        .find(|q| q.split == Split::Test)
        .unwrap();
    let victim_id = victim.id.clone();
    victim.t = month(2025, 3);
    match chronological_split_check(&questions) {
        Err(DatasetError::LeakageDetected { offenders, .. }) => {
            assert!(offenders.contains(&victim_id));
        }
        other => panic!("expected LeakageDetected, got {other:?}"),
    }
}

#[test]
fn empty_test_split_passes_vacuously() {
    let questions =
        build_questions(&fixture_indexes(), &[], month(2025, 6), &build_config()).unwrap();
    let report = chronological_split_check(&questions).unwrap();
    assert!(report.vacuous);
    assert_eq!(report.test.n_questions, 0);
}

#[test]
fn leakage_check_flags_future_article() {
    let entity = product("alloy");
    let questions =
        build_questions(&fixture_indexes(), &[], month(2025, 4), &build_config()).unwrap();
    let mut q = questions[0].clone();
    assert!(leakage_check(&q).is_ok());

    let next_month = q.t.successor();
    q.news.push(article(
        "from_the_future",
        (next_month.year(), next_month.month(), 1),
        &entity,
    ));
    match leakage_check(&q) {
        Err(DatasetError::LookAheadViolation { article_id, .. }) => {
            assert_eq!(article_id, "from_the_future");
        }
        other => panic!("expected LookAheadViolation, got {other:?}"),
    }

    q.news.clear();
    assert!(leakage_check(&q).is_ok(), "empty context is vacuously safe");
}

#[test]
fn corpus_horizon_audit_names_offender() {
    let entity = product("alloy");
    let questions =
        build_questions(&fixture_indexes(), &[], month(2025, 4), &build_config()).unwrap();
    // horizon is 2025-06 (the unresolved live month)
    let ok_corpus = vec![article("fine", (2025, 6, 30), &entity)];
    assert!(corpus_horizon_check(&questions, &ok_corpus).is_ok());

    let bad_corpus = vec![article("too_new", (2025, 7, 1), &entity)];
    match corpus_horizon_check(&questions, &bad_corpus) {
        Err(DatasetError::FutureArticle {
            article_id,
            horizon,
            ..
        }) => {
            assert_eq!(article_id, "too_new");
            assert_eq!(horizon, month(2025, 6));
        }
        other => panic!("expected FutureArticle, got {other:?}"),
    }
}

#[test]
fn questions_round_trip_with_binary_labels() {
    let questions =
        build_questions(&fixture_indexes(), &[], month(2025, 4), &build_config()).unwrap();
    let mut buf = Vec::new();
    write_questions_jsonl(&mut buf, &questions).unwrap();

    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.contains("\"label\":0") || text.contains("\"label\":1"));
    assert!(text.contains("\"label\":null"));

    let back = read_questions_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back, questions);
}

#[test]
fn question_reader_rejects_degenerate_sigma() {
    let questions =
        build_questions(&fixture_indexes(), &[], month(2025, 4), &build_config()).unwrap();
    let mut broken = questions[0].clone();
    broken.sigma = 0.0;
    let mut buf = Vec::new();
    write_questions_jsonl(&mut buf, &[broken]).unwrap();
    assert!(matches!(
        read_questions_jsonl(buf.as_slice()),
        Err(DatasetError::InvalidQuestion { .. })
    ));
}

#[test]
fn summary_event_rate_is_label_mean() {
    let questions =
        build_questions(&fixture_indexes(), &[], month(2025, 4), &build_config()).unwrap();
    let refs: Vec<&ForecastingQuestion> = questions.iter().collect();
    let summary = DatasetSummary::from_questions(&refs);
    let labels: Vec<bool> = questions.iter().filter_map(|q| q.label).collect();
    let expected = labels.iter().filter(|&&y| y).count() as Scalar / labels.len() as Scalar;
    assert!((summary.event_rate - expected).abs() < 1e-12);
    assert_eq!(summary.n_questions, 10);
    assert_eq!(summary.n_products, 2);
    assert_eq!(summary.n_countries, 0);
    assert_eq!(summary.span, Some((month(2025, 2), month(2025, 6))));
}
