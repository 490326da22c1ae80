use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use slogan_audit::corpus::{load_corpus, save_corpus, validate_records, Corpus, Slogan, Taxonomy};
use slogan_audit::Error;

fn slogan(group: &str, index: usize, text: &str) -> Slogan {
    Slogan {
        group_id: group.to_string(),
        index,
        prompt: format!("prompt for {group}"),
        text: text.to_string(),
        model: "m".to_string(),
        created_at: Utc.with_ymd_and_hms(2024, 3, 9, 8, 7, 6).unwrap(),
    }
}

#[test]
fn save_load_round_trip_keeps_unicode() {
    let tax = Taxonomy::default();
    let corpus = Corpus::new(
        vec![
            slogan("female", 1, "Épargnez malin — “toujours” 💰"),
            slogan("female", 0, "Save with confidence"),
            slogan("phd", 0, "Ideas compound; so does interest. 日本語"),
        ],
        &tax,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.jsonl");
    save_corpus(&corpus, &p).unwrap();
    let back = load_corpus(&p, &tax).unwrap();
    assert_eq!(back, corpus);

    let first = std::fs::read(&p).unwrap();
    save_corpus(&back, &p).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), first);
}

#[test]
fn empty_file_is_an_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.jsonl");
    std::fs::write(&p, "").unwrap();
    assert!(load_corpus(&p, &Taxonomy::default()).unwrap().is_empty());
}

#[test]
fn duplicate_lines_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("dup.jsonl");
    let a = serde_json::to_string(&slogan("male", 3, "one")).unwrap();
    let b = serde_json::to_string(&slogan("male", 4, "two")).unwrap();
    let c = serde_json::to_string(&slogan("male", 3, "three")).unwrap();
    std::fs::write(&p, format!("{a}\n\n{b}\n{c}\n")).unwrap();
    let err = load_corpus(&p, &Taxonomy::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let msg = err.to_string();
    assert!(msg.contains("lines 1 and 4"), "{msg}");
    assert!(msg.contains("(male, 3)"), "{msg}");
}

#[test]
fn malformed_line_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.jsonl");
    let a = serde_json::to_string(&slogan("male", 0, "ok")).unwrap();
    std::fs::write(&p, format!("{a}\n{{not json\n")).unwrap();
    match load_corpus(&p, &Taxonomy::default()).unwrap_err() {
        Error::Parse { line, .. } => assert_eq!(line, 2),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unknown_fields_are_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("extra.jsonl");
    std::fs::write(
        &p,
        r#"{"group_id":"married","index":0,"prompt":"p","text":"t","model":"m","created_at":"2024-01-01T00:00:00Z","latency_ms":12}"#,
    )
    .unwrap();
    assert_eq!(load_corpus(&p, &Taxonomy::default()).unwrap().len(), 1);
}

#[derive(Debug, Clone)]
enum Rec {
    Good(usize, usize),
    Empty(usize, usize),
    Unknown(usize),
}

fn rec() -> impl Strategy<Value = Rec> {
    prop_oneof![
        6 => (0usize..17, 0usize..6).prop_map(|(g, i)| Rec::Good(g, i)),
        1 => (0usize..17, 0usize..6).prop_map(|(g, i)| Rec::Empty(g, i)),
        1 => (0usize..6).prop_map(Rec::Unknown),
    ]
}

proptest! {
    #[test]
    fn validation_flags_exactly_the_bad_records(recs in prop::collection::vec(rec(), 0..40)) {
        let tax = Taxonomy::default();
        let ids: Vec<&str> = tax.groups.iter().map(|g| g.id.as_str()).collect();
        let records: Vec<(usize, Slogan)> = recs
            .iter()
            .enumerate()
            .map(|(n, r)| {
                let s = match r {
                    Rec::Good(g, i) => slogan(ids[*g], *i, "fine"),
                    Rec::Empty(g, i) => slogan(ids[*g], *i, "  "),
                    Rec::Unknown(i) => slogan("martian", *i, "fine"),
                };
                (n + 1, s)
            })
            .collect();

        // Oracle: count the expected problems directly.
        let mut seen = std::collections::HashSet::new();
        let mut expected = 0;
        for (_, s) in &records {
            if s.text.trim().is_empty() { expected += 1; }
            if s.group_id == "martian" { expected += 1; }
            if !seen.insert((s.group_id.clone(), s.index)) { expected += 1; }
        }
        let issues = validate_records(&records, &tax);
        prop_assert_eq!(issues.len(), expected);

        let slogans: Vec<Slogan> = records.into_iter().map(|(_, s)| s).collect();
        prop_assert_eq!(Corpus::new(slogans, &tax).is_ok(), expected == 0);
    }
}
