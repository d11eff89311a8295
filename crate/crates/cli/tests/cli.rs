use std::process::{Command, Output};

fn ndcz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ndcz")).args(args).output().expect("run ndcz")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json output")
}

#[test]
fn op_apply_writes_versioned_csv() {
    let out = ndcz(&["op", "apply", "--measure", "interval:8", "--op", "Nphi"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema=1"));
    assert_eq!(lines.next(), Some("atom,x0,f,value"));
    assert_eq!(lines.count(), 8);
}

#[test]
fn op_apply_json_has_one_value_per_atom() {
    let out = ndcz(&["op", "apply", "--measure", "square:4", "--op", "Teps", "--kernel", "cauchy_re", "--json"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["values"].as_array().unwrap().len(), 16);
}

#[test]
fn measure_round_trips_through_a_file() {
    let dir = std::env::temp_dir().join(format!("ndcz-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.json");
    let gen = ndcz(&["measure", "gen", "--kind", "saksman", "--k", "5", "--res", "8", "--out", path.to_str().unwrap()]);
    assert!(gen.status.success());
    let verify = ndcz(&["measure", "verify", "--measure", path.to_str().unwrap()]);
    assert!(verify.status.success());
    assert_eq!(json(&verify)["atoms"], 40);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bad_input_exits_with_an_error() {
    let out = ndcz(&["lattice", "build", "--measure", "interval:16", "--A", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("below the configured minimum"));
    let out = ndcz(&["measure", "verify", "--measure", "interval:0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failing_properties_give_exit_code_one() {
    // one heavy atom breaks mu(B(x, r)) <= r at every radius
    let path = std::env::temp_dir().join(format!("ndcz-heavy-{}.json", std::process::id()));
    std::fs::write(&path, r#"{"d":1,"n":1.0,"c0":1.0,"atoms":[[0.5,10.0],[0.6,0.01]]}"#).unwrap();
    let out = ndcz(&["measure", "verify", "--measure", path.to_str().unwrap()]);
    std::fs::remove_file(&path).unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["passed"], false);
}

#[test]
fn lattice_build_with_low_a_reports_transit_cubes() {
    let out = ndcz(&["lattice", "build", "--measure", "interval:1024", "--A", "10", "--a-min", "5"]);
    assert!(out.status.success());
    let v = json(&out);
    assert!(v["class_counts"]["transit"].as_u64().unwrap() > 0);
    assert_eq!(v["lattice"]["schema"], 1);
}

#[test]
fn suite_embeds_config_hash_and_tolerances() {
    let out = ndcz(&["experiment", "suite", "--seed", "3"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(v["config"]["tolerances"]["mass_hi"], 1.131);
    assert_eq!(v["config"]["seed"], 3);
}

#[test]
fn kernel_check_passes_for_builtins() {
    for k in ["hilbert", "frac_I1", "cauchy_re", "cauchy_im"] {
        let out = ndcz(&["kernel", "check", "--kernel", k, "--trials", "2000"]);
        assert!(out.status.success(), "{k}");
    }
}
