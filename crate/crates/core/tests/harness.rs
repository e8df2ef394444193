use std::path::PathBuf;

use authsim::error::ScenarioError;
use authsim::harness::{
    load_scenario, report, resolve_seed, run_batch, run_scenario, MetricsBundle, Scenario,
    COSTS_FILE, METRICS_FILE, OUTCOMES_FILE, TRAJECTORIES_FILE,
};
use serde_json::Value;

fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn small(name: &str) -> Scenario {
    let mut s = Scenario::named(name);
    s.n_sessions = 6;
    s.n_adversarial_sessions = 8;
    s.n_devices = 3;
    s.n_slots = 12;
    s.fleet_sizes = vec![2, 4];
    s
}

fn schema_path(err: ScenarioError) -> String {
    match err {
        ScenarioError::Schema { path, .. } => path,
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn minimal_file_takes_defaults() {
    let s = Scenario::from_json(r#"{"schema_version": 1, "name": "m"}"#).unwrap();
    assert_eq!(s, Scenario::named("m"));
}

#[test]
fn unknown_key_is_named() {
    let err = Scenario::from_json(r#"{"schema_version": 1, "name": "m", "foo": 1}"#).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("foo"), "{msg}");
    schema_path(err);
}

#[test]
fn nested_type_error_has_a_path() {
    let err =
        Scenario::from_json(r#"{"schema_version": 1, "name": "m", "protocol": {"n_rounds": -4}}"#)
            .unwrap_err();
    assert_eq!(schema_path(err), "protocol.n_rounds");
}

#[test]
fn semantic_errors_have_paths() {
    let cases = [
        (r#""channel": {"rho": 1.5}"#, "channel.rho"),
        (r#""trust": {"delta_down": 0}"#, "trust.delta_down"),
        (
            r#""adversaries": [{"kind": "replayer"}, {"kind": "eavesdropper", "attack_probability": 2}]"#,
            "adversaries[1].attack_probability",
        ),
        (r#""fleet_sizes": [10, 0]"#, "fleet_sizes[1]"),
        (r#""n_slots": 0"#, "n_slots"),
    ];
    for (body, path) in cases {
        let text = format!(r#"{{"schema_version": 1, "name": "m", {body}}}"#);
        assert_eq!(
            schema_path(Scenario::from_json(&text).unwrap_err()),
            path,
            "{body}"
        );
    }
    let v2 = Scenario::from_json(r#"{"schema_version": 2, "name": "m"}"#).unwrap_err();
    assert_eq!(schema_path(v2), "schema_version");
}

#[test]
fn malformed_json_and_missing_files() {
    assert!(matches!(
        Scenario::from_json(r#"{"schema_version": 1,"#),
        Err(ScenarioError::Parse(_))
    ));
    assert!(matches!(
        Scenario::from_json(r#"{"schema_version": 1, "name": "m"} x"#),
        Err(ScenarioError::Parse(_))
    ));
    assert!(matches!(
        load_scenario(&workspace().join("scenarios/does-not-exist.json")),
        Err(ScenarioError::Io { .. })
    ));
}

#[test]
fn seed_precedence() {
    assert_eq!(resolve_seed(Some(1), Some(2), Some("3")).unwrap(), 1);
    assert_eq!(resolve_seed(None, Some(2), Some("3")).unwrap(), 2);
    assert_eq!(resolve_seed(None, None, Some(" 3 ")).unwrap(), 3);
    assert_eq!(resolve_seed(None, None, None).unwrap(), 42);
    assert!(resolve_seed(None, None, Some("x")).is_err());
}

#[test]
fn shipped_scenarios_load() {
    let dir = workspace().join("scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 4);
}

/// Numbers compare by value so `0` in the schema matches `0.0` in serde output.
fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| same(p, q))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| same(v, w)))
        }
        _ => a == b,
    }
}

#[test]
fn schema_file_matches_the_types() {
    let text = std::fs::read_to_string(workspace().join("schema/scenario.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let defaults = serde_json::to_value(Scenario::named("x")).unwrap();

    let top = schema["properties"].as_object().unwrap();
    for key in defaults.as_object().unwrap().keys() {
        assert!(top.contains_key(key), "schema lacks `{key}`");
    }
    for (key, prop) in top {
        if let Some(d) = prop.get("default") {
            assert!(same(d, &defaults[key]), "default of `{key}`");
        }
    }

    for section in ["channel", "protocol", "trust", "cost_model", "puf"] {
        let props = schema["$defs"][section]["properties"].as_object().unwrap();
        let actual = defaults[section].as_object().unwrap();
        let mut a: Vec<_> = props.keys().collect();
        let mut b: Vec<_> = actual.keys().collect();
        a.sort();
        b.sort();
        assert_eq!(a, b, "keys of `{section}`");
        for (key, prop) in props {
            if let Some(d) = prop.get("default") {
                assert!(same(d, &actual[key]), "default of `{section}.{key}`");
            }
        }
    }
}

fn files(dir: &std::path::Path) -> Vec<Vec<u8>> {
    [METRICS_FILE, TRAJECTORIES_FILE, OUTCOMES_FILE, COSTS_FILE]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap())
        .collect()
}

#[test]
fn report_is_reproducible() {
    let s = small("repro");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    report(&run_scenario(&s, 9).unwrap(), a.path()).unwrap();
    report(&run_scenario(&s, 9).unwrap(), b.path()).unwrap();
    assert_eq!(files(a.path()), files(b.path()));

    report(&run_scenario(&s, 10).unwrap(), b.path()).unwrap();
    assert_ne!(files(a.path())[0], files(b.path())[0]);
}

#[test]
fn report_to_unwritable_location_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let bundle = run_scenario(&small("w"), 1).unwrap();
    let err = report(&bundle, &blocker.join("out")).unwrap_err();
    assert!(err.path.starts_with(&blocker));
}

#[test]
fn metrics_json_round_trips_the_summary() {
    let bundle = run_scenario(&small("rt"), 3).unwrap();
    let text = authsim::canonical::to_string(&bundle);
    let back: MetricsBundle = serde_json::from_str(&text).unwrap();
    assert_eq!(back.far, bundle.far);
    assert_eq!(back.costs, bundle.costs);
    assert_eq!(back.adversaries, bundle.adversaries);
}

#[test]
fn batch_order_does_not_matter() {
    let a = (small("a"), 1);
    let mut b = small("b");
    b.channel.rho = 0.95;
    let b = (b, 2);
    let ab = run_batch(&[a.clone(), b.clone()]);
    let ba = run_batch(&[b, a]);
    let key = |r: &Result<MetricsBundle, _>| authsim::canonical::to_string(r.as_ref().unwrap());
    assert_eq!(key(&ab[0]), key(&ba[1]));
    assert_eq!(key(&ab[1]), key(&ba[0]));
}

#[test]
fn bundle_shape() {
    let s = small("shape");
    let bundle = run_scenario(&s, 5).unwrap();
    assert_eq!(bundle.n_legitimate, s.n_sessions);
    assert_eq!(bundle.n_adversarial, s.n_adversarial_sessions);
    assert_eq!(
        bundle.outcomes.len(),
        s.n_sessions + s.n_adversarial_sessions
    );
    assert_eq!(bundle.costs.len(), 2 * s.fleet_sizes.len());
    for rate in [bundle.far, bundle.frr].into_iter().flatten() {
        assert!((0.0..=1.0).contains(&rate));
    }
    assert!((0.0..=1.0).contains(&bundle.seed_match_rate));
    for t in &bundle.trajectories {
        assert_eq!(
            t.points.len(),
            s.n_slots,
            "{} / {}",
            t.attribute_set,
            t.session
        );
    }
    let total: usize = bundle.adversaries.iter().map(|a| a.sessions).sum();
    assert_eq!(total, s.n_adversarial_sessions);
}

/// The full attribute set sees every outlier the RSSI-only set sees.
#[test]
fn larger_attribute_set_is_never_more_trusting() {
    let bundle = run_scenario(&small("dominance"), 11).unwrap();
    let by_session = |set: &str| -> Vec<_> {
        bundle
            .trajectories
            .iter()
            .filter(|t| t.attribute_set == set)
            .map(|t| (t.session, t.population, t.points.clone()))
            .collect()
    };
    let rssi = by_session("rssi");
    let full = by_session("rssi+cfo+attack");
    assert_eq!(rssi.len(), full.len());
    assert!(!rssi.is_empty());
    for (r, f) in rssi.iter().zip(&full) {
        assert_eq!((r.0, r.1), (f.0, f.1));
        for (p, q) in r.2.iter().zip(&f.2) {
            assert!(q.value <= p.value + 1e-12, "session {}", r.0);
        }
    }
}
