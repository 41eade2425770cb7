use std::path::Path;

use clg::config::RunConfig;
use clg::corpus::Case;
use clg::evaluation::{ConditionKind, EvalError};
use clg::jsonl;
use clg::pipeline::{self, AgentKind, PipelineError, RunCondition, Workdir};
use clg::{Decision, Domain};

fn setup(dir: &Path, domain: Domain) -> RunConfig {
    let cfg = RunConfig {
        workdir: dir.join("work"),
        domain,
        seed: 5,
        ..RunConfig::default()
    };
    pipeline::write_synthetic(domain, 60, 5, &dir.join("c.jsonl"), &dir.join("r.json")).unwrap();
    pipeline::ingest(&cfg, &dir.join("c.jsonl"), Some(&dir.join("r.json")), None).unwrap();
    pipeline::embed(&cfg).unwrap();
    cfg
}

#[test]
fn regolded_corpus_gets_fresh_retrieval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), Domain::Mod);
    let first = pipeline::retrieve(&cfg).unwrap();
    assert!(first.created);

    // same ids and texts, every gold flipped
    let mut cases: Vec<Case> = jsonl::read(&dir.path().join("c.jsonl")).unwrap();
    for c in &mut cases {
        c.gold = if c.gold == Decision::KEEP { Decision::REMOVE } else { Decision::KEEP };
    }
    jsonl::write_all(&dir.path().join("c2.jsonl"), &cases).unwrap();
    let manifest = pipeline::ingest(&cfg, &dir.path().join("c2.jsonl"), Some(&dir.path().join("r.json")), None).unwrap();

    let second = pipeline::retrieve(&cfg).unwrap();
    assert!(second.created, "stale retrieval reused");
    assert_ne!(first.path, second.path);
    let results = pipeline::load_retrieval(&cfg, &Workdir::new(&cfg.workdir), &manifest).unwrap();
    let by_id: std::collections::HashMap<_, _> = cases.iter().map(|c| (c.id.as_str(), c.gold)).collect();
    for r in results.values() {
        for item in &r.items {
            assert_eq!(item.gold, by_id[item.case_id.as_str()]);
        }
    }
}

#[test]
fn reruns_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), Domain::Toxicity);
    pipeline::retrieve(&cfg).unwrap();
    let a = pipeline::run(&cfg, RunCondition::Case, AgentKind::Mock).unwrap();
    let bytes = std::fs::read(&a.path).unwrap();
    let b = pipeline::run(&cfg, RunCondition::Case, AgentKind::Mock).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(std::fs::read(&b.path).unwrap(), bytes);
}

#[test]
fn steps_fail_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        workdir: dir.path().join("empty"),
        ..RunConfig::default()
    };
    assert!(matches!(pipeline::embed(&cfg), Err(PipelineError::NotIngested(_))));

    let cfg = setup(dir.path(), Domain::Mod);
    assert!(matches!(
        pipeline::run(&cfg, RunCondition::Case, AgentKind::AllPrecedent),
        Err(PipelineError::NotRetrieved { .. })
    ));
    pipeline::retrieve(&cfg).unwrap();
    let err = pipeline::evaluate(&cfg, Some(&[ConditionKind::Rule]), &dir.path().join("rep")).unwrap_err();
    assert!(matches!(err, PipelineError::Eval(EvalError::MissingRuns(ref c)) if c == "RULE"), "{err}");
    assert!(matches!(
        pipeline::run(&cfg, RunCondition::Rule, AgentKind::GoldMatch),
        Err(PipelineError::UnsupportedAgent { .. })
    ));
}

#[test]
fn too_large_window_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), Domain::Mod);
    let big = RunConfig {
        k_max: 40,
        k_set: vec![1, 40],
        ..cfg
    };
    // 60 cases per group leaves 30 precedents
    assert!(matches!(pipeline::retrieve(&big), Err(PipelineError::TooFewPrecedents { .. })));
}
