use std::path::Path;

use retractor::pipeline::run_solve;
use retractor::spec::{OutputSpec, ProblemSpec, SolverSpec};

fn spec_text(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)).unwrap()
}

const EXPLICIT: &str = r#"{
  "version": 1,
  "space": { "dim": 2, "norm": { "kind": "l2" } },
  "body": { "shape": "norm_ball", "center": [0.0, 0.0], "radius": 1.0 },
  "maps": [
    { "name": "rot73", "kind": "rotation2d", "center": [0.0, 0.0], "degrees": 73.0 },
    { "name": "rot191", "kind": "rotation2d", "center": [0.0, 0.0], "degrees": 191.0 }
  ],
  "family": null,
  "solver": {
    "eps": 1e-6, "gamma": 0.5, "step_tol": null, "max_iter": 1000000, "inner_tol": null, "seed": 0,
    "refinements": 4, "certify_samples": 1000, "commuting_samples": 100, "allow_uncertified": false
  },
  "outputs": { "report": null, "trace": null, "points": [], "sample_count": 8 }
}"#;

const MINIMAL: &str = r#"{
  "space": { "dim": 2, "norm": { "kind": "l2" } },
  "body": { "shape": "norm_ball", "center": [0.0, 0.0], "radius": 1.0 },
  "maps": [
    { "name": "rot73", "kind": "rotation2d", "center": [0.0, 0.0], "degrees": 73.0 },
    { "name": "rot191", "kind": "rotation2d", "center": [0.0, 0.0], "degrees": 191.0 }
  ]
}"#;

#[test]
fn spec_round_trip() {
    let mut texts: Vec<String> = ["rotations", "coordwise", "identity", "squaremap", "noncommuting", "clamps"]
        .iter()
        .map(|n| spec_text(&format!("{n}.json")))
        .collect();
    texts.push(EXPLICIT.to_string());
    let mut awkward = ProblemSpec::from_json(&spec_text("coordwise.json")).unwrap();
    awkward.solver.eps = 0.1 + 0.2;
    awkward.solver.inner_tol = Some(1.0 / 3.0);
    awkward.solver.step_tol = Some(f64::MIN_POSITIVE);
    awkward.outputs.points.push(retractor_core::geometry::Point(vec![-0.1, 1e-300, 2.0 / 3.0, -0.0]));
    awkward.outputs.report = Some("out/report.json".into());
    texts.push(awkward.to_json());

    for text in texts {
        let first = ProblemSpec::from_json(&text).unwrap();
        let json = first.to_json();
        let second = ProblemSpec::from_json(&json).unwrap();
        assert_eq!(first, second);
        assert_eq!(json, second.to_json());
    }
}

#[test]
fn schema_defaults() {
    let explicit = ProblemSpec::from_json(EXPLICIT).unwrap();
    let minimal = ProblemSpec::from_json(MINIMAL).unwrap();
    assert_eq!(explicit, minimal);
    assert_eq!(minimal.solver, SolverSpec::default());
    assert_eq!(minimal.outputs, OutputSpec::default());

    let strip = |r: retractor::report::RunReport| {
        let mut v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        v.as_object_mut().unwrap().remove("timings");
        v.to_string()
    };
    assert_eq!(strip(run_solve(&explicit).unwrap()), strip(run_solve(&minimal).unwrap()));
}

#[test]
fn rejects_invalid_specs() {
    let cases = [
        MINIMAL.replace("\"maps\"", "\"family\": [2], \"maps\""),
        MINIMAL.replace("\"maps\"", "\"solver\": { \"eps\": 0.0 }, \"maps\""),
        MINIMAL.replace("\"maps\"", "\"solver\": { \"gamma\": 1.0 }, \"maps\""),
        MINIMAL.replace("\"maps\"", "\"solver\": { \"epsilon\": 1e-3 }, \"maps\""),
        MINIMAL.replace("\"maps\"", "\"version\": 9, \"maps\""),
        MINIMAL.replace("\"maps\"", "\"outputs\": { \"points\": [[0.0]] }, \"maps\""),
    ];
    for text in cases {
        assert!(ProblemSpec::from_json(&text).is_err(), "accepted {text}");
    }
}
