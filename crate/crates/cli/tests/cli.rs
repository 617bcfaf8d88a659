use std::path::Path;
use std::process::{Command, Output};

use affine_lpv::load_model;
use nalgebra::DVector;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_affine-lpv"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

/// Value of a `key = value` line.
fn field(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.trim_start().strip_prefix('=')))
        .unwrap_or_else(|| panic!("no `{key}` in\n{out}"))
        .trim()
        .to_string()
}

fn num(out: &str, key: &str) -> f64 {
    field(out, key).parse().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const FIRST_ORDER: &str = "dims: 1 1 1\nvars: a\nL[1,1] = -2 - a\nL[1,2] = 1\nL[2,1] = 3\n";

#[test]
fn example1_box_region() {
    let out = ok(&["embed", "--fixture", "example1", "--order", "2", "--region", "box"]);
    assert_eq!(field(&out, "region_method"), "box2d");
    let area = num(&out, "region_volume");
    assert!((area - 23.2).abs() < 0.1, "area {area}");
    assert!((num(&out, "eta_frobenius") - 54.47).abs() / 54.47 < 1e-2);
}

#[test]
fn example2_is_rank_two() {
    let out = ok(&["embed", "--fixture", "example2"]);
    let s1 = num(&out, "sigma1");
    assert!((s1 - 39.5533).abs() < 1e-3);
    assert!((num(&out, "sigma2") - 2.3526).abs() < 1e-3);
    for k in 3..=5 {
        assert!(num(&out, &format!("sigma{k}")) < 1e-8 * s1);
    }
    assert!(num(&out, "eta_frobenius") < 1e-8);
}

#[test]
fn bad_configuration_exits_2() {
    assert_eq!(code(&["embed", "--fixture", "example2", "--order", "0"]), 2);
    assert_eq!(code(&["embed", "--fixture", "nonesuch"]), 2);
    assert_eq!(code(&["embed", "--fixture", "example2", "--region", "sphere"]), 2);
    assert_eq!(code(&["accuracy", "--fixture", "example1", "--orders", "3..2"]), 2);
    assert_eq!(code(&["embed", "--system", "/nonexistent/system.txt", "--generate", "a = grid(0, 1)"]), 2);
}

#[test]
fn constant_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("sys.txt");
    std::fs::write(&sys, FIRST_ORDER).unwrap();
    let o = run(&["embed", "--system", p(&sys), "--generate", "a = sinusoid(0, 1, 0, 0.5)", "--period", "0.1", "--samples", "20"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn accuracy_sweep_is_monotone() {
    let out = ok(&["accuracy", "--fixture", "example1", "--orders", "1..4"]);
    let eta: Vec<f64> = out
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(eta.len(), 4);
    for w in eta.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{eta:?}");
    }
    assert!(eta[2] < 1e-6);
}

#[test]
fn proposed_beats_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["compare", "--fixture", "example1", "--out", p(dir.path())]);
    let line = |name: &str| -> f64 {
        let l = out.lines().find(|l| l.starts_with(name)).unwrap();
        l.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    assert!(line("proposed") < line("baseline"));
    assert!(dir.path().join("proposed.json").exists());
    assert!(dir.path().join("baseline.json").exists());
}

#[test]
fn exact_model_reproduces_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    ok(&["embed", "--fixture", "example2", "--out", p(&model)]);
    let sim = dir.path().join("sim");
    let out = ok(&[
        "simulate", "--fixture", "example2", "--model", p(&model), "--x0", "0.3,0.1", "--input",
        "u1 = sinusoid(1, 2)", "--step", "0.005", "--steps", "200", "--out", p(&sim),
    ]);
    let max: f64 = out
        .lines()
        .find(|l| l.starts_with("max"))
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!(max <= 1e-6, "{out}");
    let csv = std::fs::read_to_string(sim.join("lpv.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 201);
    assert!(csv.starts_with("t,x1,x2,y1,u1,theta1,theta2"));
}

#[test]
fn missing_model_exits_2() {
    assert_eq!(
        code(&["simulate", "--fixture", "example2", "--model", "/nonexistent/m.json", "--x0", "0,0"]),
        2
    );
    assert_eq!(code(&["freqresp", "--model", "/nonexistent/m.json", "--theta", "0"]), 2);
}

fn first_order_model(dir: &Path) -> std::path::PathBuf {
    let sys = dir.join("sys.txt");
    std::fs::write(&sys, FIRST_ORDER).unwrap();
    let model = dir.join("m.json");
    ok(&[
        "embed", "--system", p(&sys), "--generate", "a = sinusoid(0.5, 1)", "--period", "0.05", "--samples", "200",
        "--order", "1", "--out", p(&model),
    ]);
    model
}

#[test]
fn frequency_response_of_first_order_system() {
    let dir = tempfile::tempdir().unwrap();
    let path = first_order_model(dir.path());
    let model = load_model(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let r = model.region();
    let inside = (r.lower[0] + r.upper[0]) / 2.0;
    let outside = r.upper[0] + 10.0 * (r.upper[0] - r.lower[0]);
    let csv = ok(&[
        "freqresp", "--model", p(&path), "--theta", &inside.to_string(), "--theta", &outside.to_string(), "--grid",
        "0.01:100:9",
    ]);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "theta_index,omega,mag_y1_u1,outside_region,singular");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 18);
    for row in &rows {
        let theta = if row[0] == 0.0 { inside } else { outside };
        let l = model.matrix_at(&DVector::from_element(1, theta)).unwrap();
        let (a, b, c) = (l[(0, 0)], l[(0, 1)], l[(1, 0)]);
        let w = row[1];
        let expect = (c * b).abs() / (w * w + a * a).sqrt();
        assert!((row[2] - expect).abs() <= 1e-9 * expect.max(1.0), "{row:?} vs {expect}");
        assert_eq!(row[3], row[0], "outside flag");
        assert_eq!(row[4], 0.0);
    }
    assert_eq!(code(&["freqresp", "--model", p(&path), "--theta", "0,0"]), 2);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let args = |out: &Path| {
        vec![
            "embed".to_string(),
            "--fixture".into(),
            "example1".into(),
            "--order".into(),
            "3".into(),
            "--out".into(),
            p(out).into(),
        ]
    };
    let sa: Vec<String> = args(&a);
    let sb: Vec<String> = args(&b);
    let oa = ok(&sa.iter().map(String::as_str).collect::<Vec<_>>());
    let ob = ok(&sb.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(oa.lines().filter(|l| !l.starts_with("model")).collect::<Vec<_>>(), ob.lines().filter(|l| !l.starts_with("model")).collect::<Vec<_>>());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "fixture = example1\norder = 1\nregion = box\n").unwrap();
    let out = ok(&["embed", "--config", p(&cfg), "--order", "2"]);
    assert_eq!(field(&out, "order"), "2");
    assert_eq!(field(&out, "region_method"), "box2d");
    std::fs::write(&cfg, "fixture = example1\nflavour = mint\n").unwrap();
    assert_eq!(code(&["embed", "--config", p(&cfg)]), 2);
}

#[test]
fn region_debug_writes_points() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("pts.csv");
    let out = ok(&["region-debug", "--fixture", "example1", "--order", "2", "--out", p(&pts)]);
    assert!(num(&out, "closed_form_gap") < 1e-9);
    assert!((num(&out, "box_volume") - 23.2).abs() < 0.1);
    let csv = std::fs::read_to_string(&pts).unwrap();
    assert_eq!(csv.lines().count(), 3001);
}
