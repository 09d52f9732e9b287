//! Plan → run → score with the mock backends.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use guideline_probe::assets;
use guideline_probe::backends::{Backend, BackendConfig, MockPolicy, REFUSAL_TEXT};
use guideline_probe::concepts::MODEL_GENERATED;
use guideline_probe::corpus::{parse_annotations, AnnotationItem};
use guideline_probe::extraction::{extract_label, RefusalPhrases};
use guideline_probe::guidelines::factual;
use guideline_probe::metrics::{weighted_kappa, EvalRecord, LabelSet};
use guideline_probe::orchestrator::{
    agree, plan, read_guidelines, read_records, run, score, ExperimentConfig, OrchestratorError,
    RunOptions, VariantSpec, GUIDELINES_FILE, RECORDS_FILE,
};
use guideline_probe::{Outcome, ScoreReport, Variant};

fn write_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let scheme = dir.join("scientific.json");
    let dataset = dir.join("scientific.jsonl");
    std::fs::write(&scheme, assets::SCIENTIFIC_SCHEME_JSON).unwrap();
    std::fs::write(&dataset, assets::SCIENTIFIC_SENTENCES).unwrap();
    (scheme, dataset)
}

fn sweep_config(dir: &Path) -> ExperimentConfig {
    let (scheme, dataset) = write_inputs(dir);
    ExperimentConfig {
        scheme,
        def_set: MODEL_GENERATED.into(),
        dataset,
        per_class: Some(100),
        seed: 42,
        variants: vec![
            VariantSpec::Factual,
            VariantSpec::Ood,
            VariantSpec::DegreeSweep {
                levels: vec![2, 3, 4, 5],
                per_level: 10,
            },
        ],
        sampling: Default::default(),
        ood_words: None,
    }
}

fn mock(policy: MockPolicy, parallelism: usize) -> Backend {
    let mut c = BackendConfig::mock(policy);
    c.parallelism = parallelism;
    Backend::new(c, None).unwrap()
}

fn run_and_score(policy: MockPolicy) -> (ScoreReport, Vec<EvalRecord>) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    plan(&sweep_config(tmp.path())).unwrap().write(&dir).unwrap();
    let summary = run(&dir, &mock(policy, 4), &RunOptions::default()).unwrap();
    assert!(summary.complete());
    assert_eq!(summary.done, 42 * 500);
    let records = read_records(&dir.join(RECORDS_FILE)).unwrap();
    let guidelines = read_guidelines(&dir.join(GUIDELINES_FILE)).unwrap();
    (score(&records, &guidelines).unwrap(), records)
}

#[test]
fn sweep_plan_size() {
    let tmp = tempfile::tempdir().unwrap();
    let p = plan(&sweep_config(tmp.path())).unwrap();
    let sweep = p
        .guidelines
        .iter()
        .filter(|g| g.variant() == Variant::Counterfactual)
        .count();
    assert_eq!(sweep, 40);
    assert_eq!(p.sentences.len(), 500);
    assert_eq!(p.manifest.tasks.len(), 42 * 500);
}

#[test]
fn guideline_follower_tracks_the_guideline() {
    let (report, _) = run_and_score(MockPolicy::GuidelineFollower);
    let curve: Vec<(usize, f64, f64)> = report
        .degree_curve
        .iter()
        .map(|p| (p.degree, p.mean, p.std))
        .collect();
    assert_eq!(
        curve,
        [(0, 1.0, 0.0), (2, 0.6, 0.0), (3, 0.4, 0.0), (4, 0.2, 0.0), (5, 0.0, 0.0)]
    );
    assert!((report.pearson_r.unwrap() + 1.0).abs() < 1e-9);
    assert_eq!(report.per_variant[&Variant::Factual].accuracy.point, 1.0);
    assert_eq!(report.per_variant[&Variant::Ood].accuracy.point, 1.0);
    let m = &report.adherence;
    for (i, row) in m.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if m.support[i][j] > 0 {
                assert_eq!(*v, Some(1.0));
            }
        }
    }
    assert_eq!(report.refusal_rate, 0.0);
    assert_eq!(report.random_baseline, 0.2);
}

#[test]
fn prior_biased_ignores_the_guideline() {
    let (report, _) = run_and_score(MockPolicy::PriorBiased);
    assert!(report.degree_curve.iter().all(|p| p.mean == 1.0 && p.std == 0.0));
    assert_eq!(report.pearson_r, None);
    let m = &report.adherence;
    for i in 0..m.labels.len() {
        for j in 0..m.labels.len() {
            let expected = if i == j { 1.0 } else { 0.0 };
            if m.support[i][j] > 0 {
                assert_eq!(m.values[i][j], Some(expected), "cell {i},{j}");
            }
        }
    }
    // every off-diagonal cell was exercised by some counterfactual guideline
    assert!(m.support.iter().flatten().all(|&s| s > 0));
    assert_eq!(report.per_variant[&Variant::Ood].unparsed_rate, 1.0);
    assert_eq!(report.per_variant[&Variant::Ood].accuracy.point, 0.0);
}

#[test]
fn refuser_never_answers() {
    let (report, records) = run_and_score(MockPolicy::Refuser);
    assert_eq!(report.refusal_rate, 1.0);
    assert_eq!(report.accuracy.point, 0.0);
    assert!(report
        .adherence
        .values
        .iter()
        .flatten()
        .all(|v| v.is_none_or(|v| v == 0.0)));
    assert!(records.iter().all(|r| r.predicted.outcome == Outcome::Refusal));

    let g = factual(&assets::scientific_scheme(), MODEL_GENERATED).unwrap();
    let e = extract_label(REFUSAL_TEXT, &g, &RefusalPhrases::default());
    assert_eq!(e.outcome, Outcome::Refusal);
}

/// Records minus timing fields, keyed by task.
fn comparable(records: Vec<EvalRecord>) -> BTreeMap<String, EvalRecord> {
    records
        .into_iter()
        .map(|mut r| {
            r.latency_ms = 0;
            (r.task_id(), r)
        })
        .collect()
}

#[test]
fn parallelism_does_not_change_records() {
    let tmp = tempfile::tempdir().unwrap();
    let config = sweep_config(tmp.path());
    let mut outputs = Vec::new();
    for parallelism in [1, 8] {
        let dir = tmp.path().join(format!("p{parallelism}"));
        plan(&config).unwrap().write(&dir).unwrap();
        run(
            &dir,
            &mock(MockPolicy::UniformRandom { seed: 3 }, parallelism),
            &RunOptions::default(),
        )
        .unwrap();
        let records = read_records(&dir.join(RECORDS_FILE)).unwrap();
        assert_eq!(records.len(), 21_000);
        outputs.push(comparable(records));
    }
    assert_eq!(outputs[0], outputs[1]);
    // the random mock really varies its answers
    let answers: HashSet<&str> = outputs[0].values().map(|r| r.raw_text.as_str()).collect();
    assert!(answers.len() > 5);
}

#[test]
fn interrupted_run_resumes_without_duplicates() {
    let tmp = tempfile::tempdir().unwrap();
    let config = sweep_config(tmp.path());
    let policy = MockPolicy::UniformRandom { seed: 9 };

    let whole = tmp.path().join("whole");
    plan(&config).unwrap().write(&whole).unwrap();
    run(&whole, &mock(policy, 8), &RunOptions::default()).unwrap();
    let expected = comparable(read_records(&whole.join(RECORDS_FILE)).unwrap());

    let broken = tmp.path().join("broken");
    plan(&config).unwrap().write(&broken).unwrap();
    let partial = run(
        &broken,
        &mock(policy, 8),
        &RunOptions {
            limit: Some(7_777),
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert_eq!(partial.done, 7_777);
    // simulate a crash in the middle of writing the next line
    let path = broken.join(RECORDS_FILE);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.extend_from_slice(b"{\"sentence_id\": \"sci-");
    std::fs::write(&path, bytes).unwrap();

    let resumed = run(
        &broken,
        &mock(policy, 3),
        &RunOptions {
            resume: true,
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert!(resumed.complete());
    assert_eq!(resumed.attempted, 21_000 - 7_777);
    let records = read_records(&path).unwrap();
    assert_eq!(records.len(), 21_000);
    let ids: HashSet<String> = records.iter().map(EvalRecord::task_id).collect();
    assert_eq!(ids.len(), 21_000);
    assert_eq!(comparable(records), expected);
}

fn annotations() -> Vec<AnnotationItem> {
    parse_annotations(assets::FINANCIAL_ANNOTATIONS).unwrap()
}

fn record_for(item: &AnnotationItem, label: Option<&str>) -> EvalRecord {
    let g = factual(&assets::financial_scheme(), MODEL_GENERATED).unwrap();
    let raw = label.unwrap_or(REFUSAL_TEXT);
    EvalRecord {
        sentence_id: item.item_id.clone(),
        guideline_id: g.id().to_string(),
        variant: Variant::Factual,
        degree: 0,
        factual_gold: "Financial".into(),
        predicted: extract_label(raw, &g, &RefusalPhrases::default()),
        predicted_factual: label.map(str::to_string),
        raw_text: raw.into(),
        request_hash: String::new(),
        latency_ms: 0,
        from_cache: false,
    }
}

#[test]
fn model_copying_an_annotator_agrees_perfectly() {
    let items = annotations();
    let records: Vec<EvalRecord> = items
        .iter()
        .map(|i| record_for(i, i.primary_label("A1")))
        .collect();
    let report = agree(&records, &items, false).unwrap();
    let a1 = report.per_annotator.iter().find(|a| a.annotator == "A1").unwrap();
    assert_eq!(a1.kappa, Some(1.0));
    assert!(report.per_annotator.iter().all(|a| a.n == report.items));
    let kept = items
        .iter()
        .filter(|i| i.annotators.values().all(|ls| !ls.is_empty()))
        .count();
    assert_eq!(report.items, kept);
    assert!(kept < items.len(), "fixture should contain items some annotator left empty");
}

#[test]
fn disjoint_ids_are_an_error() {
    let items = annotations();
    let mut r = record_for(&items[0], Some("Financial"));
    r.sentence_id = "not-annotated".into();
    assert!(matches!(agree(&[r], &items, false), Err(OrchestratorError::NoOverlap)));
}

#[test]
fn human_pairs_match_direct_summation() {
    let items = annotations();
    let records: Vec<EvalRecord> = items.iter().map(|i| record_for(i, None)).collect();
    let report = agree(&records, &items, true).unwrap();
    assert_eq!(report.human_pairs.len(), 3);
    for pair in &report.human_pairs {
        let sets: Vec<(LabelSet, LabelSet)> = items
            .iter()
            .map(|i| (i.label_set(&pair.a).unwrap(), i.label_set(&pair.b).unwrap()))
            .collect();
        let n = sets.len() as f64;
        let d = |a: &LabelSet, b: &LabelSet| a.symmetric_difference(b).count() as f64;
        let d_o = sets.iter().map(|(a, b)| d(a, b)).sum::<f64>() / n;
        let d_e = sets
            .iter()
            .flat_map(|(a, _)| sets.iter().map(move |(_, b)| d(a, b)))
            .sum::<f64>()
            / (n * n);
        let want = 1.0 - d_o / d_e;
        assert!((pair.weighted_kappa.unwrap() - want).abs() < 1e-12);
        assert_eq!(pair.weighted_kappa, weighted_kappa(&sets).unwrap());
    }
    // a model that always refuses has one constant label: κ is zero
    assert!(report
        .per_annotator
        .iter()
        .all(|a| a.kappa.is_none_or(|k| k.abs() < 1e-12)));
    let labels: BTreeSet<String> = items
        .iter()
        .flat_map(|i| i.annotators.values().flatten().cloned())
        .collect();
    assert!(labels.len() >= 4);
}
