use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn run(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_mono-forge"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const CUSP: &str = r#"{"vars":["x","y"],"trunc":"exact","terms":[{"exp":[0,2],"coef":"1"},{"exp":[3,0],"coef":"-1"}]}"#;
const CONE_SET: &str = r#"{"polyradius":["1/8","1/8"],"eq":null,"ineqs":[{"vars":["x","y"],"trunc":"exact","terms":[{"exp":[0,2],"coef":"1"},{"exp":[2,0],"coef":"-1"}]}]}"#;

#[test]
fn normalize_reports_certificate() {
    let o = run(
        &["normalize"],
        r#"{"vars":["x","y"],"trunc":"exact","terms":[{"exp":[2,1],"coef":"3"},{"exp":[3,1],"coef":"1"}]}"#,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("mono-forge "));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "normal");
    assert_eq!(v["alpha"], serde_json::json!([2, 1]));
    assert_eq!(v["unit_constant"], "3");
}

#[test]
fn normalize_rejects_non_normal() {
    let o = run(&["normalize"], CUSP);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "not_normal");
}

#[test]
fn appendix_demo_text() {
    let o = run(&["appendix-demo"], "");
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("3y² − 2xy − 1"));
    assert!(out.contains("y = x/3 ± √(x²+3)/3"));
    assert!(out.contains("A ∩ Δ_{(√2/4, √2/3)} = ∅: true"));
}

#[test]
fn appendix_demo_json() {
    let o = run(&["appendix-demo", "--format", "json"], "");
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["certified"], true);
    assert_eq!(v["epsilon"], "√2/4");
}

#[test]
fn monomialize_dot_marks_leaves_normal() {
    let o = run(&["monomialize"], CUSP);
    assert!(o.status.success());
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph"));
    let boxes: Vec<&str> = dot.lines().filter(|l| l.contains("shape=box")).collect();
    assert!(!boxes.is_empty());
    assert!(boxes.iter().all(|l| l.contains("normal")));
}

#[test]
fn tree_export_json_and_csv() {
    let payload = format!(r#"{{"targets":[{CUSP}]}}"#);
    let o = run(&["tree-export"], &payload);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["star_violations"], 0);
    assert!(v["leaves"].as_u64().unwrap() >= 4);
    let csv = stdout(&run(&["tree-export", "--format", "csv"], &payload));
    let branches: std::collections::BTreeSet<&str> =
        csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(branches.len() as u64, v["leaves"].as_u64().unwrap());
}

#[test]
fn seed_lambdas_widen_the_tree() {
    let narrow = run(&["tree-export", "--seed-lambdas", "0,inf"], CUSP);
    let wide = run(&["tree-export", "--seed-lambdas", "0,1,-1,2,-2,inf"], CUSP);
    let n: Value = serde_json::from_str(&stdout(&narrow)).unwrap();
    let w: Value = serde_json::from_str(&stdout(&wide)).unwrap();
    assert!(w["nodes"].as_u64() > n["nodes"].as_u64());
}

#[test]
fn sign_on_quadrant() {
    let o = run(
        &["sign"],
        r#"{"certificate":{"alpha":[1,2],"unit_constant":"-2"},"quadrant":{"signs":"-+"}}"#,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["sign"], "+");
}

#[test]
fn parametrize_cone_covers_grid() {
    let o = run(&["parametrize", "--grid", "128"], CONE_SET);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["coverage"]["fraction"].as_f64().unwrap() >= 0.99);
    assert!(!v["charts"].as_array().unwrap().is_empty());
}

#[test]
fn lift_and_chart_at() {
    let lift = run(
        &["lift"],
        r#"{"set":{"polyradius":["1","1"],"eq":null,"ineqs":[{"vars":["x","y"],"trunc":"exact","terms":[{"exp":[1,0],"coef":"1"}]}]},"bounds":["4"]}"#,
    );
    assert!(lift.status.success(), "{}", stderr(&lift));
    let chart = run(&["chart-at"], &format!(r#"{{"targets":[{CUSP}],"point":["1/4","1/8"]}}"#));
    assert!(chart.status.success(), "{}", stderr(&chart));
    let v: Value = serde_json::from_str(&stdout(&chart)).unwrap();
    assert!(v.is_object());
}

#[test]
fn fibercut_appendix_instance() {
    let m = r#"{"polyradius":["1","1"],"split_n":1,"eqs":[],"ineqs":[{"vars":["x","y"],"trunc":"exact","terms":[{"exp":[0,1],"coef":"1"},{"exp":[1,0],"coef":"-1"}]}]}"#;
    let o = run(&["fibercut", "--grid", "256"], m);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["equations_display"][0], "3y² − 2xy − 1");
    assert_eq!(v["critical_dim"], 1);
}

#[test]
fn malformed_input_exits_2() {
    let o = run(&["normalize"], "{not json");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error[malformed]"));
    let o = run(&["sign"], r#"{"certificate":{"alpha":[1],"unit_constant":"1"}}"#);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["normalize", "--format", "dot"], CUSP);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["no-such-command"], "");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn domain_error_exits_1() {
    let o = run(&["monomialize"], r#"{"targets":[{"vars":["x","y"],"trunc":"exact","terms":[]}]}"#);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error[monomialize::"));
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let a = run(&["parametrize", "--grid", "64"], CONE_SET);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mono-forge"));
    cmd.args(["parametrize", "--grid", "64"]).env("MONO_FORGE_THREADS", "1");
    let b = {
        let mut child = cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
        child.stdin.take().unwrap().write_all(CONE_SET.as_bytes()).unwrap();
        child.wait_with_output().unwrap()
    };
    let c = run(&["parametrize", "--grid", "64"], CONE_SET);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn writes_to_out_file() {
    let dir = std::env::temp_dir().join(format!("mono-forge-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("tree.dot");
    let o = run(&["monomialize", "--out", path.to_str().unwrap()], CUSP);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("digraph"));
    std::fs::remove_dir_all(&dir).unwrap();
}
