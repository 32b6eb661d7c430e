use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ringvar"));
    c.env_remove("RINGVAR_MAX_LEAVES");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json_of(o: &Output) -> Value {
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(o)).unwrap()
}

struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let d = std::env::temp_dir().join(format!("ringvar-cli-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        fs::create_dir_all(&d).unwrap();
        Scratch(d)
    }

    fn path(&self, rel: &str) -> String {
        self.0.join(rel).display().to_string()
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["experiment", "--manifest"]).status.code(), Some(0));

    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));

    assert_eq!(run(&["experiment", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["experiment", "jackson", "--sigma", "3", "--p", "2"]).status.code(), Some(2));
    assert_eq!(run(&["var", "--tree", "/nonexistent.json", "--f", "x.csv", "--sigma", "1", "--p", "2"]).status.code(), Some(2));

    let s = Scratch::new("cap");
    let o = bin()
        .env("RINGVAR_MAX_LEAVES", "16")
        .args(["gen", "dyadic", "--depth", "5", "--out", &s.path("d")])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    let o = bin()
        .env("RINGVAR_MAX_LEAVES", "32")
        .args(["gen", "dyadic", "--depth", "5", "--out", &s.path("d")])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let o = bin().env("RINGVAR_MAX_LEAVES", "lots").args(["gen", "dyadic", "--out", &s.path("d")]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn var_on_generated_chain() {
    let s = Scratch::new("var");
    json_of(&run(&["gen", "section2", "--N", "2", "--out", &s.path("g")]));
    let v = json_of(&run(&[
        "var", "--tree", &s.path("g/tree.json"), "--f", &s.path("g/f.csv"), "--sigma", "1", "--p", "2",
    ]));
    // f = 1 on half the space: the whole space carries E_2 = 1/2
    assert!((v["lp_norm"].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    assert!((v["seminorm"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(v["witness"].as_array().is_some_and(|w| !w.is_empty()));
}

#[test]
fn w2star_on_equal_pieces() {
    let s = Scratch::new("w2");
    for n in [2usize, 4, 8] {
        let dir = s.path(&format!("c{n}"));
        json_of(&run(&["gen", "chain", "--n", &n.to_string(), "--out", &dir]));
        let tree = format!("{dir}/tree.json");
        // the full chain keeps half the mass, below the default threshold
        let r = json_of(&run(&["check", "w2star", "--tree", &tree, "--p", "2", "--tau", "1", "--rho", "0.4"]));
        let want = (n as f64).sqrt();
        assert!((r["bestM"].as_f64().unwrap() - want).abs() < 1e-12 * want, "n={n}: {r}");
        assert_eq!(r["sampled"], Value::Bool(false));
        let w3 = json_of(&run(&["check", "w3", "--tree", &tree, "--p", "2", "--sigma", "1", "--rho", "0.4"]));
        assert!(w3["bestM"].as_f64().unwrap() <= want + 1e-12);
    }
}

#[test]
fn analysis_commands_emit_json() {
    let s = Scratch::new("an");
    json_of(&run(&["gen", "rademacher", "--depth", "6", "--lambda", "1,3", "--out", &s.path("r")]));
    let tree = s.path("r/tree.json");
    let f = s.path("r/f.csv");
    let base = ["--tree", tree.as_str(), "--f", f.as_str()];
    let with = |cmd: &str, extra: &[&str]| {
        let mut a = vec![cmd];
        a.extend_from_slice(&base);
        a.extend_from_slice(extra);
        json_of(&run(&a))
    };

    let m = with("modulus", &["--sigma", "1", "--p", "2", "--t", "0.5", "0.125"]);
    assert_eq!(m.as_array().unwrap().len(), 2);
    let k = with("kfun", &["--sigma", "1", "--p", "2", "--t", "0.25"]);
    assert!(k[0]["upper"].as_f64().unwrap() >= 0.0);

    let out = s.path("g.csv");
    let g = with("greedy", &["--p", "2", "--m", "64", "--out-f", &out]);
    assert!(g["error"].as_f64().unwrap() < 1e-9);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 65);
    let errs = g["errors"].as_array().unwrap();
    assert!(errs.windows(2).all(|w| w[1].as_f64().unwrap() <= w[0].as_f64().unwrap() + 1e-12));

    let sp = with("split", &["--p", "2", "--m", "4", "--sigma", "1"]);
    assert!(sp["error"].as_f64().unwrap() <= sp["bound"].as_f64().unwrap());
    let sp = with("split", &["--p", "2", "--eps", "0.05"]);
    assert_eq!(sp["checks"]["partition_ok"], Value::Bool(true));
    assert_eq!(sp["checks"]["witnesses_ok"], Value::Bool(true));

    let b = json_of(&run(&["basis", "--tree", &tree]));
    assert!(b["gram_deviation"].as_f64().unwrap() < 1e-10);
    assert_eq!(b["elements"].as_array().unwrap().len(), 64);
}

fn experiment_csv(args: &[&str]) -> String {
    let o = run(args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

#[test]
fn tensor_experiment_table() {
    let csv = experiment_csv(&["experiment", "tensor", "--n1", "2", "--n2", "2", "--K", "4", "--sigma", "1", "--p", "2"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("K,var_fine,var_coarse,merged_lower,target,meets_target"));
    let ks: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ks, ["2", "3", "4"]);
}

#[test]
fn experiment_output_is_deterministic_and_echo_reruns() {
    let s = Scratch::new("exp");
    let args = ["experiment", "jackson", "--depth", "5", "--trials", "3", "--K", "4", "--seed", "11"];
    let a = experiment_csv(&args);
    assert_eq!(a, experiment_csv(&args));

    let out = s.path("t.csv");
    let mut with_out = args.to_vec();
    with_out.extend(["--output", &out]);
    experiment_csv(&with_out);
    assert_eq!(fs::read_to_string(&out).unwrap(), a);
    let echo = s.path("t.config.json");
    assert!(Path::new(&echo).exists());
    let again = s.path("again.csv");
    experiment_csv(&["experiment", "--config", &echo, "--output", &again]);
    assert_eq!(fs::read_to_string(&again).unwrap(), a);

    let js = s.path("t.json");
    experiment_csv(&["experiment", "--config", &echo, "--format", "json", "--output", &js]);
    let v: Value = serde_json::from_str(&fs::read_to_string(&js).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"], 11);
    assert_eq!(v["columns"]["m"].as_array().unwrap().len(), a.lines().count() - 1);
}

#[test]
fn generators_write_their_artifacts() {
    let s = Scratch::new("gen");
    for (kind, extra) in [
        ("tensor", &["--K", "2"][..]),
        ("fractal", &["--K", "2"][..]),
        ("notw3", &["--n", "4"][..]),
        ("random", &["--n", "7", "--nu", "3", "--seed", "5"][..]),
        ("chain", &["--pieces", "0.25,0.125"][..]),
    ] {
        let dir = s.path(kind);
        let mut a = vec!["gen", kind, "--out", &dir];
        a.extend_from_slice(extra);
        json_of(&run(&a));
        assert!(Path::new(&format!("{dir}/tree.json")).exists(), "{kind}");
        assert!(Path::new(&format!("{dir}/report.json")).exists(), "{kind}");
    }
    let o = run(&["gen", "chain", "--pieces", "0.7,0.5", "--out", &s.path("bad")]);
    assert_eq!(o.status.code(), Some(2));
}
