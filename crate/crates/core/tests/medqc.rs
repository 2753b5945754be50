use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use segctl_core::medqc::*;

fn fixture(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    fs::read_to_string(p).unwrap()
}

fn expected(name: &str) -> Vec<(String, String, String)> {
    fixture(name)
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',');
            let a = it.next().unwrap().to_string();
            let b = it.next().unwrap().to_string();
            let c = it.next().unwrap_or("").to_string();
            (a, b, c)
        })
        .collect()
}

fn base_record() -> DatasetRecord {
    let raw = GenerationClient::stub()
        .generate(
            "",
            &RecordRequest {
                language: Language::En,
                text_category: "vivid_descriptive".into(),
                emotion_sequence: vec![],
            },
        )
        .unwrap();
    DatasetRecord::from_json(&raw, 1).unwrap()
}

#[test]
fn qc_fixture_verdicts() {
    let records = parse_jsonl(&fixture("qc_40.jsonl")).unwrap();
    let exp = expected("qc_40_expected.csv");
    assert_eq!(records.len(), 40);
    let reports = validate_all(&records, &QcConfig::default());
    for (rep, (id, verdict, rule)) in reports.iter().zip(&exp) {
        assert_eq!(&rep.id, id);
        if verdict == "pass" {
            assert!(rep.passed(), "{id}: {:?}", rep.violations);
        } else {
            let rules: Vec<&str> = rep.rules().iter().map(|r| r.as_str()).collect();
            assert_eq!(rules, vec![rule.as_str()], "{id}");
        }
    }
    assert_eq!(reports.iter().filter(|r| r.passed()).count(), 20);
}

#[test]
fn short_english_text_fails_length() {
    let mut rec = base_record();
    let segs = rec.segments.as_mut().unwrap();
    segs[1].lines_seg = Some("a sudden gust jolts the calm, ".into());
    segs[2].lines_seg = Some("and heaviness settles.".into());
    rec.original_text = Some(segs.iter().map(|s| s.text()).collect());
    assert_eq!(Language::En.length(rec.text()), 14);
    let rep = validate(&rec, 0, &QcConfig::default());
    assert_eq!(rep.rules(), vec![Rule::TextLength]);
}

#[test]
fn segment_time_below_window_fails() {
    let mut rec = base_record();
    rec.segments.as_mut().unwrap()[0].time = Some(TimeValue::Number(0.2));
    rec.segments.as_mut().unwrap()[2].time = Some(TimeValue::Text("3.8".into()));
    let rep = validate(&rec, 0, &QcConfig::default());
    assert_eq!(rep.rules(), vec![Rule::SegDuration]);
}

#[test]
fn zh_window_upper_bound_is_configurable() {
    let records = parse_jsonl(&fixture("qc_40.jsonl")).unwrap();
    let long_zh = records
        .iter()
        .find(|r| r.id.as_deref() == Some("bad-06"))
        .unwrap();
    assert_eq!(Language::Zh.length(long_zh.text()), 29);
    let cfg = QcConfig {
        zh_text_chars: (15, 30),
        ..QcConfig::default()
    };
    assert!(validate(long_zh, 0, &cfg).passed());
}

#[test]
fn per_word_rate_only_warns() {
    let mut rec = base_record();
    rec.segments.as_mut().unwrap()[0].time = Some(TimeValue::Number(2.5));
    let rep = validate(&rec, 0, &QcConfig::default());
    assert!(rep.passed());
    assert_eq!(rep.warnings.len(), 1);
    assert_eq!(rep.warnings[0].rule, Rule::PerWordDuration);
}

#[test]
fn malformed_jsonl_is_parse_error() {
    assert!(matches!(
        parse_jsonl("{\"original_text\": \"x\"}\n{oops"),
        Err(ParseError::Json { line: 2, .. })
    ));
    assert!(matches!(
        parse_jsonl("[1,2]"),
        Err(ParseError::NotObject { line: 1 })
    ));
}

#[test]
fn stub_round_trip_validates() {
    let client = GenerationClient::stub();
    for language in [Language::En, Language::Zh] {
        let req = RecordRequest {
            language,
            text_category: "vivid_descriptive".into(),
            emotion_sequence: vec!["happy".into(), "sad".into()],
        };
        let a = client.generate("template", &req).unwrap();
        assert_eq!(a, client.generate("other", &req).unwrap());
        let rec = DatasetRecord::from_json(&a, 1).unwrap();
        assert!(validate(&rec, 0, &QcConfig::default()).passed());
    }
    let unset = GenerationClient::default();
    let req = RecordRequest {
        language: Language::En,
        text_category: String::new(),
        emotion_sequence: vec![],
    };
    assert_eq!(
        unset.generate("", &req),
        Err(ClientError::BackendUnavailable)
    );
}

#[test]
fn dedup_fixture_drops_three() {
    let records = parse_jsonl(&fixture("dedup_10.jsonl")).unwrap();
    for r in validate_all(&records, &QcConfig::default()) {
        assert!(r.passed(), "{}: {:?}", r.id, r.violations);
    }
    let res = dedup(&records, &DedupConfig::default());
    let exp = expected("dedup_10_expected.csv");
    let dropped: BTreeMap<&str, &str> = res
        .dropped
        .iter()
        .map(|d| (d.id.as_str(), d.reason.as_str()))
        .collect();
    for (id, status, reason) in &exp {
        match status.as_str() {
            "kept" => assert!(!dropped.contains_key(id.as_str()), "{id}"),
            _ => assert_eq!(dropped.get(id.as_str()), Some(&reason.as_str()), "{id}"),
        }
    }
    assert_eq!(res.dropped.len(), 3);
    assert_eq!(res.kept.len(), 7);

    let kept = res.kept_records(&records);
    let again = dedup(&kept, &DedupConfig::default());
    assert!(again.dropped.is_empty());
}

#[test]
fn dedup_examples() {
    let rec = |id: &str, text: &str, seq: [&str; 2]| DatasetRecord {
        id: Some(id.into()),
        original_text: Some(text.into()),
        language: Some("EN".into()),
        emotion_sequence: Some(seq.iter().map(|s| s.to_string()).collect()),
        ..Default::default()
    };
    // 10 tokens, one substitution at the end: 2*9/20 = 0.9
    let a = "one two three four five six seven eight nine ten";
    let b = "one two three four five six seven eight nine eleven";
    assert_eq!(
        similarity(&Language::En.tokens(a), &Language::En.tokens(b)).unwrap(),
        0.9
    );
    let res = dedup(
        &[rec("a", a, ["happy", "sad"]), rec("b", a, ["angry", "sad"])],
        &DedupConfig::default(),
    );
    assert_eq!(res.dropped[0].reason, DropReason::Exact);

    let res = dedup(
        &[rec("a", a, ["happy", "sad"]), rec("b", b, ["happy", "sad"])],
        &DedupConfig::default(),
    );
    assert_eq!(res.kept, vec![0]);
    assert_eq!(res.dropped[0].reason, DropReason::Overall);

    let res = dedup(
        &[rec("a", a, ["happy", "sad"]), rec("b", b, ["sad", "happy"])],
        &DedupConfig::default(),
    );
    assert_eq!(res.kept, vec![0, 1]);
}

#[test]
fn stats_hand_tally() {
    let records = parse_jsonl(&fixture("qc_40.jsonl")).unwrap();
    let ids = [
        "ok-01", "ok-02", "ok-03", "ok-04", "ok-05", "ok-11", "ok-12", "ok-13", "ok-14", "ok-15",
    ];
    let subset: Vec<DatasetRecord> = records
        .into_iter()
        .filter(|r| ids.contains(&r.id.as_deref().unwrap()))
        .collect();
    let s = stats(&subset);
    assert_eq!(s.records, 10);
    assert_eq!(s.by_language["EN"], 5);
    assert_eq!(s.by_language["ZH"], 5);
    assert_eq!(s.by_category["vivid_descriptive"], 4);
    assert_eq!(s.by_category["emotional_dialogue"], 4);
    assert_eq!(s.by_category["observational_phrase"], 2);
    assert_eq!(s.by_segment_count[&2], 6);
    assert_eq!(s.by_segment_count[&3], 4);
    let counts: Vec<(&str, usize)> = s
        .emotions
        .iter()
        .map(|(k, v)| (k.as_str(), v.segments))
        .collect();
    assert_eq!(
        counts,
        vec![
            ("angry", 3),
            ("disgusted", 2),
            ("fearful", 3),
            ("happy", 6),
            ("neutral", 4),
            ("sad", 3),
            ("surprised", 3)
        ]
    );
    approx::assert_abs_diff_eq!(s.emotions["happy"].mean_words_en.unwrap(), 17.0 / 3.0);
    approx::assert_abs_diff_eq!(s.total_seconds, 56.3, epsilon = 1e-9);
    assert!(s.to_table().contains("records        10"));
}

#[test]
fn stats_single_record_and_hours() {
    let mut rec = base_record();
    for (seg, t) in rec
        .segments
        .as_mut()
        .unwrap()
        .iter_mut()
        .zip([2.0, 3.0, 4.0])
    {
        seg.time = Some(TimeValue::Number(t));
    }
    let s = stats(&[rec]);
    assert_eq!(s.by_category["vivid_descriptive"], 1);
    assert_eq!(s.by_segment_count[&3], 1);
    assert_eq!(s.total_seconds, 9.0);
    approx::assert_abs_diff_eq!(s.total_hours, 0.0025, epsilon = 1e-15);
}

fn strata_records(per: usize) -> Vec<DatasetRecord> {
    let mut out = Vec::new();
    for lang in ["EN", "ZH"] {
        for cat in [
            "vivid_descriptive",
            "emotional_dialogue",
            "observational_phrase",
        ] {
            for k in 0..per {
                out.push(DatasetRecord {
                    id: Some(format!("{lang}-{cat}-{k}")),
                    original_text: Some(format!("{lang} {cat} {k}")),
                    language: Some(lang.into()),
                    text_category: Some(cat.into()),
                    segments: Some(vec![RecordSegment::default(); 2]),
                    ..Default::default()
                });
            }
        }
    }
    out
}

#[test]
fn sample_one_per_stratum() {
    let recs = strata_records(4);
    let rep = sample_for_review(&recs, 6, 7).unwrap();
    assert_eq!(rep.indices.len(), 6);
    assert!(rep.strata.iter().all(|s| s.allocated == 1));
    let mut strata: Vec<usize> = rep.indices.iter().map(|i| i / 4).collect();
    strata.dedup();
    assert_eq!(strata, vec![0, 1, 2, 3, 4, 5]);
    assert_eq!(rep, sample_for_review(&recs, 6, 7).unwrap());
}

#[test]
fn sample_whole_set_and_too_few() {
    let recs = strata_records(2);
    let rep = sample_for_review(&recs, 12, 1).unwrap();
    assert_eq!(rep.indices, (0..12).collect::<Vec<_>>());
    assert_eq!(
        sample_for_review(&recs, 13, 1),
        Err(SampleError::TooFew {
            requested: 13,
            available: 12
        })
    );
}

#[test]
fn sample_reallocates_empty_stratum() {
    // ZH observational_phrase is empty; its share goes to the others by size
    let recs: Vec<DatasetRecord> = strata_records(4)
        .into_iter()
        .filter(|r| {
            !(r.language.as_deref() == Some("ZH") && r.category() == "observational_phrase")
        })
        .collect();
    let rep = sample_for_review(&recs, 12, 3).unwrap();
    assert_eq!(rep.indices.len(), 12);
    assert_eq!(rep.reallocated_from_empty, 2);
    let empty = rep
        .strata
        .iter()
        .find(|s| s.language == "ZH" && s.category == "observational_phrase")
        .unwrap();
    assert_eq!((empty.available, empty.nominal, empty.allocated), (0, 2, 0));
    let alloc: Vec<usize> = rep.strata.iter().map(|s| s.allocated).collect();
    assert_eq!(alloc.iter().sum::<usize>(), 12);
    // two units over five equal strata go to the first two in key order
    assert_eq!(alloc.iter().filter(|&&a| a == 3).count(), 2);
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..12)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn similarity_symmetric_and_bounded(a in words(), b in words()) {
        let ab = similarity(&a, &b).unwrap();
        let ba = similarity(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(similarity(&a, &a).unwrap(), 1.0);
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn similarity_disjoint_is_zero(a in words()) {
        let b: Vec<String> = a.iter().map(|w| format!("{w}x")).collect();
        prop_assert_eq!(similarity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn validate_is_pure(t in 0.0f64..10.0) {
        let mut rec = base_record();
        rec.segments.as_mut().unwrap()[1].time = Some(TimeValue::Number(t));
        prop_assert_eq!(validate(&rec, 0, &QcConfig::default()), validate(&rec, 0, &QcConfig::default()));
    }

    #[test]
    fn dedup_idempotent(texts in prop::collection::vec(words(), 1..12), seqs in prop::collection::vec(0usize..2, 12)) {
        let recs: Vec<DatasetRecord> = texts.iter().zip(&seqs).map(|(t, &s)| DatasetRecord {
            original_text: Some(t.join(" ")),
            language: Some("EN".into()),
            emotion_sequence: Some(vec![["happy", "sad"][s].into(), "neutral".into()]),
            ..Default::default()
        }).collect();
        let res = dedup(&recs, &DedupConfig::default());
        prop_assert_eq!(res.kept.len() + res.dropped.len(), recs.len());
        let kept = res.kept_records(&recs);
        prop_assert!(dedup(&kept, &DedupConfig::default()).dropped.is_empty());
    }

    #[test]
    fn stats_totals_conserved(per in 1usize..4, drop in 0usize..6) {
        let recs: Vec<DatasetRecord> = strata_records(per).into_iter().skip(drop).collect();
        let s = stats(&recs);
        prop_assert_eq!(s.by_language.values().sum::<usize>(), recs.len());
        prop_assert_eq!(s.by_category.values().sum::<usize>(), recs.len());
        prop_assert_eq!(s.by_segment_count.values().sum::<usize>(), recs.len());
    }

    #[test]
    fn sample_size_and_bounds(per in 1usize..5, n in 0usize..20, seed in any::<u64>()) {
        let recs = strata_records(per);
        prop_assume!(n <= recs.len());
        let rep = sample_for_review(&recs, n, seed).unwrap();
        prop_assert_eq!(rep.indices.len(), n);
        prop_assert!(rep.strata.iter().all(|s| s.allocated <= s.available));
        let mut sorted = rep.indices.clone();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), n);
    }
}

#[test]
fn similarity_suffix_regressions() {
    let t = |s: &str| Language::En.tokens(s);
    assert_eq!(similarity(&t("a b"), &t("a c")).unwrap(), 0.5);
    // shared suffix adds to the matched size on both sides
    assert_eq!(similarity(&t("a b x y"), &t("a c x y")).unwrap(), 0.75);
    // mismatched suffixes only grow the denominator
    assert_eq!(similarity(&t("a b x y"), &t("a c z w")).unwrap(), 0.25);
    assert_eq!(similarity(&t("a b c d"), &t("a b x d")).unwrap(), 0.75);
}
