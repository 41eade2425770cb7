use clg_demo::{controversy_json, kappa_json, sweep_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn sweep_reports_every_window() {
    // candidates given out of order; ranking is by similarity
    let input = r#"{
        "gold": "remove",
        "candidates": [
            {"case_id": "c", "similarity": 0.5, "gold": "remove", "precedent": true},
            {"case_id": "a", "similarity": 0.9, "gold": "keep", "precedent": false},
            {"case_id": "b", "similarity": 0.7, "gold": "keep", "precedent": false}
        ]
    }"#;
    let rows = parse(&sweep_json(input).unwrap());
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);

    // k=1: nothing selected in window, falls back to all retrieved (a)
    assert_eq!(rows[0]["case"], "keep");
    assert_eq!(rows[0]["case_fallback"], true);
    assert_eq!(rows[0]["knn"], "keep");
    assert_eq!(rows[0]["oracle"], "keep");

    // k=3: c is selected, so CASE follows it; KNN is outvoted two to one
    assert_eq!(rows[2]["case"], "remove");
    assert_eq!(rows[2]["case_fallback"], false);
    assert_eq!(rows[2]["supporting"], serde_json::json!(["c"]));
    assert_eq!(rows[2]["knn"], "keep");
    assert_eq!(rows[2]["oracle"], "remove");
}

#[test]
fn sweep_breaks_ties_by_nearest_case() {
    let input = r#"{
        "gold": 3,
        "candidates": [
            {"case_id": "x", "similarity": 0.8, "gold": 2, "precedent": true},
            {"case_id": "y", "similarity": 0.9, "gold": 4, "precedent": true}
        ]
    }"#;
    let rows = parse(&sweep_json(input).unwrap());
    assert_eq!(rows[1]["case"], 4);
    assert_eq!(rows[1]["case_tie_broken"], true);
}

#[test]
fn sweep_rejects_bad_input() {
    assert!(sweep_json(r#"{"gold": "keep", "candidates": []}"#).is_err());
    assert!(sweep_json("not json").is_err());
    let mixed = r#"{"gold": "keep", "candidates": [
        {"case_id": "a", "similarity": 0.1, "gold": 3, "precedent": true}]}"#;
    assert!(sweep_json(mixed).unwrap_err().contains("a"));
}

#[test]
fn kappa_matches_hand_computed_values() {
    let perfect = r#"{"domain": "mod", "labels": [["keep","keep"],["remove","remove"]]}"#;
    assert_eq!(parse(&kappa_json(perfect).unwrap())["kappa"], 1.0);
    // two raters who always disagree: observed 0, expected 1/2, so kappa is -1
    let opposed = r#"{"domain": "mod", "labels": [["keep","remove"],["remove","keep"],["keep","remove"],["remove","keep"]]}"#;
    let k = parse(&kappa_json(opposed).unwrap())["kappa"].as_f64().unwrap();
    assert!((k + 1.0).abs() < 1e-12, "{k}");
    let degenerate = r#"{"domain": "mod", "labels": [["keep","keep"]]}"#;
    assert!(kappa_json(degenerate).is_err());
}

#[test]
fn controversy_is_between_minus_within() {
    // group means 1 and 5, each group unanimous: std of means 2, within 0
    let input = r#"{"groups": ["a","b"], "ratings": [["a",1],["a",1],["b",5],["b",5]]}"#;
    let s = parse(&controversy_json(input).unwrap())["score"].as_f64().unwrap();
    assert!((s - 2.0).abs() < 1e-12);
    // identical spread inside each group, same means: 0 - 1
    let input = r#"{"groups": ["a","b"], "ratings": [["a",2],["a",4],["b",2],["b",4]]}"#;
    let s = parse(&controversy_json(input).unwrap())["score"].as_f64().unwrap();
    assert!((s + 1.0).abs() < 1e-12);
    assert!(controversy_json(r#"{"groups": ["a"], "ratings": [["a",9]]}"#).is_err());
    assert!(controversy_json(r#"{"groups": ["a","b"], "ratings": [["a",3]]}"#).is_err());
}
