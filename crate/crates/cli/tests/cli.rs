use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const T2: &str = r#"{"signals":["a"],"states":["1","2"],
  "models":[{"label":"t1"},{"label":"t2"}],
  "p_xy":{"t1":[[0.8,0.2]],"t2":[[0.2,0.8]]}}"#;

const T1: &str = r#"{"signals":["a"],"states":["1","2"],"models":[{"label":"only"}],
  "p_xy":{"only":[[0.3,0.7]]}}"#;

const D1: &str = r#"{"signals":["a","b"],"states":["1","2"],"models":[{"label":"only"}],
  "p_xy":{"only":[[0.5,0],[0,0.5]]}}"#;

fn mindev(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mindev"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn put(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_t2_presets() {
    let tmp = TempDir::new().unwrap();
    let spec = put(tmp.path(), "t2.json", T2);
    for (preset, phi) in [("mindev", 0.3), ("minimax", 0.5)] {
        let out = tmp.path().join(preset);
        let o = mindev(&[
            "solve",
            "--spec",
            &spec,
            "--preset",
            preset,
            "--out",
            s(&out),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        let r = report(&out);
        assert!((r["phi"].as_f64().unwrap() - phi).abs() < 1e-3);
        assert!(out.join("strategy.json").exists());
        let csv = fs::read_to_string(out.join("risk.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }
}

#[test]
fn solve_custom_profile_matches_preset() {
    let tmp = TempDir::new().unwrap();
    let spec = put(tmp.path(), "t2.json", T2);
    let alpha = put(tmp.path(), "alpha.json", r#"{"t1": 0.2, "t2": 0.2}"#);
    let beta = put(tmp.path(), "beta.json", "[1, 1]");
    let out = tmp.path().join("out");
    let o = mindev(&[
        "solve",
        "--spec",
        &spec,
        "--alpha",
        &alpha,
        "--beta",
        &beta,
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!((report(&out)["phi"].as_f64().unwrap() - 0.3).abs() < 1e-3);
}

#[test]
fn single_model_converges_in_one_iteration() {
    let tmp = TempDir::new().unwrap();
    let spec = put(tmp.path(), "t1.json", T1);
    for preset in ["minimax", "mindev", "mindev-relative"] {
        let out = tmp.path().join(preset);
        let o = mindev(&[
            "solve",
            "--spec",
            &spec,
            "--preset",
            preset,
            "--out",
            s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0));
        let r = report(&out);
        assert_eq!(r["iters"].as_u64(), Some(1));
        assert_eq!(r["gap"].as_f64(), Some(0.0));
    }
}

#[test]
fn unreached_gap_exits_2() {
    let tmp = TempDir::new().unwrap();
    // asymmetric two-model instance whose optimum is interior
    let spec = put(
        tmp.path(),
        "s.json",
        r#"{"signals":["a"],"states":["1","2"],"models":[{"label":"u"},{"label":"v"}],
            "p_xy":{"u":[[0.9,0.1]],"v":[[0.3,0.7]]}}"#,
    );
    let out = tmp.path().join("o");
    let o = mindev(&[
        "solve",
        "--spec",
        &spec,
        "--preset",
        "minimax",
        "--iters",
        "1",
        "--tol",
        "1e-12",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(&out)["converged"].as_bool(), Some(false));
}

#[test]
fn errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let missing = tmp.path().join("missing.json");
    assert_eq!(
        mindev(&["solve", "--spec", s(&missing), "--out", s(&out)])
            .status
            .code(),
        Some(1)
    );
    let bad = put(
        tmp.path(),
        "bad.json",
        "{\"signals\": [\"a\"],\n \"states\": }",
    );
    let o = mindev(&["solve", "--spec", &bad, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let spec = put(tmp.path(), "t2.json", T2);
    let o = mindev(&[
        "solve",
        "--spec",
        &spec,
        "--preset",
        "nope",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(mindev(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mindev(&["--help"]).status.code(), Some(0));
}

#[test]
fn check_d1_is_improper_with_margin_one() {
    let tmp = TempDir::new().unwrap();
    let spec = put(tmp.path(), "d1.json", D1);
    let q0 = put(
        tmp.path(),
        "q0.json",
        r#"{"a":{"none":[0,1]},"b":{"none":[1,0]}}"#,
    );
    let o = mindev(&["check", "--spec", &spec, "--strategy", &q0]);
    assert_eq!(o.status.code(), Some(3));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("margin 1.000000"), "{stdout}");
    let dom: Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("dominating_strategy.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(dom["a"]["none"][0].as_f64(), Some(1.0));
    assert_eq!(dom["b"]["none"][1].as_f64(), Some(1.0));
}

#[test]
fn check_t2_half_is_bayesian() {
    let tmp = TempDir::new().unwrap();
    let spec = put(tmp.path(), "t2.json", T2);
    let q0 = put(tmp.path(), "q0.json", r#"{"a":{"none":[0.5,0.5]}}"#);
    let o = mindev(&["check", "--spec", &spec, "--strategy", &q0]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("bayesian"));
}

#[test]
fn check_bayes_strategy_at_random_weights_is_bayesian() {
    use mindev::{FiniteObject, LearningData, LossMatrix, ModelLabel, RiskEngine};
    use rand::{Rng, SeedableRng};

    let tmp = TempDir::new().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let (nx, ny, m, nz) = (3, 3, 4, 2);
    let mut p_xy = Vec::new();
    let mut p_z = Vec::new();
    for _ in 0..m {
        let row: Vec<f64> = (0..nx * ny).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = row.iter().sum();
        p_xy.extend(row.iter().map(|v| v / total));
        let a: f64 = rng.gen_range(0.1..0.9);
        p_z.extend([a, 1.0 - a]);
    }
    let labels = |p: &str, k: usize| (0..k).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let obj = FiniteObject::new(
        labels("x", nx),
        labels("y", ny),
        labels("m", m).into_iter().map(ModelLabel::new).collect(),
        p_xy,
    )
    .unwrap();
    let ld = LearningData::new(labels("z", nz), m, &p_z).unwrap();
    let loss = LossMatrix::zero_one(ny);
    let spec = put(
        tmp.path(),
        "spec.json",
        &mindev::document::emit_model_spec(&obj, &ld, &loss),
    );
    for trial in 0..3 {
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| v / total).collect();
        let q = RiskEngine::new(&obj, &ld, &loss)
            .unwrap()
            .bayes(&w)
            .unwrap();
        let doc = mindev::document::emit_strategy(&q, &obj, &ld).unwrap();
        let q0 = put(tmp.path(), &format!("q{trial}.json"), &doc);
        let o = mindev(&["check", "--spec", &spec, "--strategy", &q0]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stdout)
        );
    }
}

#[test]
fn check_mismatched_strategy_exits_1() {
    let tmp = TempDir::new().unwrap();
    let spec = put(tmp.path(), "t2.json", T2);
    let q0 = put(tmp.path(), "q0.json", r#"{"b":{"none":[0.5,0.5]}}"#);
    assert_eq!(
        mindev(&["check", "--spec", &spec, "--strategy", &q0])
            .status
            .code(),
        Some(1)
    );
}

fn run_example(dir: &Path, extra: &[&str]) -> (String, String) {
    let mut args = vec![
        "example",
        "2",
        "--n",
        "1",
        "--theta-cells",
        "11",
        "--signal-cells",
        "17",
    ];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", s(dir)]);
    let o = mindev(&args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    (
        fs::read_to_string(dir.join("example2_n1.csv")).unwrap(),
        fs::read_to_string(dir.join("example2_n1.svg")).unwrap(),
    )
}

#[test]
fn example_csv_is_deterministic_and_bounded() {
    let tmp = TempDir::new().unwrap();
    let extra = ["--learn-cells", "9", "--seed", "5"];
    let (a, _) = run_example(&tmp.path().join("a"), &extra);
    let (b, _) = run_example(&tmp.path().join("b"), &extra);
    assert_eq!(a, b);
    let mc = [
        "--learn-cells",
        "9",
        "--mode",
        "mc",
        "--samples",
        "500",
        "--seed",
        "5",
    ];
    let (c, _) = run_example(&tmp.path().join("c"), &mc);
    let (d, _) = run_example(&tmp.path().join("d"), &mc);
    assert_eq!(c, d);

    let mut lines = a.lines();
    assert_eq!(
        lines.next(),
        Some("theta,risk_ml,risk_minimax,risk_mindev,bayes_risk")
    );
    for line in lines {
        for v in line.split(',').skip(1) {
            let v: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&v), "{line}");
        }
    }
    assert!(!a.contains('\r'));
}

#[test]
fn example_svg_matches_csv() {
    let tmp = TempDir::new().unwrap();
    let (csv, svg) = run_example(tmp.path(), &["--learn-cells", "9"]);
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let rows = csv.lines().count() - 1;
    let polylines: Vec<&str> = svg.split("<polyline").skip(1).collect();
    assert_eq!(polylines.len(), header.len() - 1);
    for (name, poly) in header[1..].iter().zip(&polylines) {
        assert!(poly.contains(&format!("data-series=\"{name}\"")));
        let points = poly
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        assert_eq!(points.split_whitespace().count(), rows);
    }
    let meta: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("example2_n1.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["n"].as_u64(), Some(1));
}

#[test]
fn example_reports_mc_fallback() {
    let tmp = TempDir::new().unwrap();
    let o = mindev(&[
        "example",
        "2",
        "--n",
        "3",
        "--theta-cells",
        "6",
        "--signal-cells",
        "9",
        "--learn-cells",
        "33",
        "--samples",
        "200",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Monte Carlo"), "{err}");
}

#[test]
fn example_export_spec_round_trips() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("inst.json");
    let o = mindev(&[
        "example",
        "1",
        "--n",
        "0",
        "--theta-cells",
        "5",
        "--signal-cells",
        "7",
        "--learn-cells",
        "5",
        "--out",
        s(tmp.path()),
        "--export-spec",
        s(&spec),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = fs::read_to_string(&spec).unwrap();
    let (obj, _, _) = mindev::document::load_model_spec(&text).unwrap();
    assert_eq!(obj.n_models(), 5);
    assert_eq!(obj.n_signals(), 49);
}

#[test]
fn example_rejects_bad_arguments() {
    let tmp = TempDir::new().unwrap();
    let cases: [&[&str]; 3] = [
        &["example", "3", "--n", "1"],
        &["example", "2", "--n", "1", "--theta-range", "0:1"],
        &["example", "1", "--n", "1", "--signal-range", "2:1"],
    ];
    for args in cases {
        let mut a = args.to_vec();
        a.extend_from_slice(&["--out", s(tmp.path())]);
        assert_eq!(mindev(&a).status.code(), Some(1), "{args:?}");
    }
}
