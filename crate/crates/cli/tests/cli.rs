use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn heatkernel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatkernel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = heatkernel(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid json")
}

fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().expect("object").keys().cloned().collect();
    k.sort();
    k
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    dir.join(format!("{name}-{}", std::process::id()))
}

fn assert_manifest(v: &Value, subcommand: &str) {
    let m = &v["manifest"];
    assert_eq!(m["subcommand"], subcommand);
    assert!(m["flags"].is_object());
    assert!(m["version"].is_string());
    assert!(m["wall_time_s"].is_number());
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn moments_schema_and_values() {
    let v = json(&["moments", "--t", "0", "--max-n", "5"]);
    assert_eq!(keys(&v), ["manifest", "moments", "t"]);
    assert_manifest(&v, "moments");
    let table = v["moments"].as_array().unwrap();
    assert_eq!(table.len(), 6);
    for (n, row) in table.iter().enumerate() {
        assert_eq!(row[0].as_u64().unwrap(), n as u64);
        assert_eq!(row[1].as_f64().unwrap(), 1.0);
    }

    let v = json(&["moments", "--t", "1", "--max-n", "2"]);
    let vals: Vec<f64> = v["moments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r[1].as_f64().unwrap())
        .collect();
    assert!(close(vals[0], 1.0, 1e-14));
    assert!(close(vals[1], (-0.5f64).exp(), 1e-14));
    assert!(vals[2].abs() < 1e-14);
}

#[test]
fn moments_order_guard() {
    let out = heatkernel(&["moments", "--t", "1", "--max-n", "31"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("precision"));
    let v = json(&["moments", "--t", "1", "--max-n", "31", "--unsafe-precision"]);
    assert_eq!(v["moments"].as_array().unwrap().len(), 32);
}

#[test]
fn flow_schema_and_examples() {
    let v = json(&["flow", "--poly", "v1", "--u", "1", "--N", "limit"]);
    assert_eq!(keys(&v), ["N", "manifest", "poly", "u", "value"]);
    assert_manifest(&v, "flow");
    assert_eq!(v["N"], "limit");
    assert!(close(v["value"][0].as_f64().unwrap(), (-0.5f64).exp(), 1e-12));
    assert!(v["value"][1].as_f64().unwrap().abs() < 1e-14);

    let v = json(&["flow", "--poly", "v3", "--u", "0.8", "--N", "1"]);
    assert_eq!(v["N"], 1);
    assert!(close(v["value"][0].as_f64().unwrap(), (-0.8f64 * 9.0 / 2.0).exp(), 1e-10));
}

#[test]
fn flow_negative_index_and_complex_coefficients() {
    // (0,-1)·v-1 at N = 1 is −i e^{−u/2}
    let v = json(&["flow", "--poly", "(0,-1)*v-1", "--u", "2", "--N", "1"]);
    assert!(v["value"][0].as_f64().unwrap().abs() < 1e-14);
    assert!(close(v["value"][1].as_f64().unwrap(), -(-1.0f64).exp(), 1e-12));
}

#[test]
fn flow_rejections() {
    let out = heatkernel(&["flow", "--poly", "v13", "--u", "1", "--degree-cap", "12"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds"));

    let out = heatkernel(&["flow", "--poly", "3*w2", "--u", "1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = heatkernel(&["flow", "--poly", "v1", "--u", "1", "--N", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_regime_violation() {
    let out = heatkernel(&["simulate", "--group", "gl", "--N", "4", "--s", "0.4", "--t", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("s > t/2"));
}

#[test]
fn simulate_zero_time_is_identity() {
    let csv = scratch("zero.csv");
    let v = json(&[
        "simulate", "--group", "unitary", "--N", "5", "--t", "0", "--paths", "3",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(keys(&v), ["config", "manifest", "observables"]);
    assert_manifest(&v, "simulate");
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "path,index,re,im");
    assert_eq!(rows.len(), 1 + 3 * 5);
    for row in &rows[1..] {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[2].parse::<f64>().unwrap(), 1.0);
        assert_eq!(f[3].parse::<f64>().unwrap(), 0.0);
    }
    std::fs::remove_file(csv).ok();
}

#[test]
fn simulate_csv_header() {
    let csv = scratch("header.csv");
    json(&[
        "simulate", "--group", "gl", "--N", "3", "--s", "1", "--t", "0.5", "--paths", "2",
        "--steps", "10", "--seed", "9", "--out", csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# group=gl, N=3, t=0.5, s=1, seed=9");
    assert!(lines[1].starts_with("# manifest: {"));
    let manifest: Value = serde_json::from_str(lines[1].trim_start_matches("# manifest: ")).unwrap();
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["seed"], 9);
    assert!(manifest.get("wall_time_s").is_none());
    assert_eq!(lines[2], "path,index,re,im");
    assert!(text.ends_with('\n') && !text.contains('\r'));
    std::fs::remove_file(csv).ok();
}

#[test]
fn simulate_same_seed_same_bytes() {
    let path = scratch("det.csv");
    let run = |seed: &str| {
        json(&[
            "simulate", "--group", "unitary", "--N", "6", "--t", "1", "--paths", "20",
            "--seed", seed, "--out", path.to_str().unwrap(),
        ]);
        std::fs::read(&path).unwrap()
    };
    let first = run("17");
    let second = run("17");
    let other = run("18");
    assert!(first == second, "same seed produced different bytes");
    assert!(first != other);
    std::fs::remove_file(path).ok();
}

#[test]
fn simulate_observables() {
    let v = json(&[
        "simulate", "--group", "unitary", "--N", "4", "--t", "0.5", "--paths", "50",
        "--observables", "v1;v2;gram:v1",
    ]);
    let obs = v["observables"].as_array().unwrap();
    let names: Vec<&str> = obs.iter().map(|o| o["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["v1", "v2", "gram:v1"]);
    for o in obs {
        assert_eq!(keys(o), ["mean", "name", "stderr", "variance"]);
    }
    // ZZ* = I on U(N)
    assert!(close(obs[2]["mean"][0].as_f64().unwrap(), 1.0, 1e-10));
    assert_eq!(v["config"]["paths"], 50);
    assert_eq!(v["config"]["steps"], 50);
}

fn read_density(args: &[&str]) -> (Vec<String>, Vec<(f64, f64)>) {
    let out = heatkernel(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let header: Vec<String> = text.lines().take_while(|l| l.starts_with('#')).map(String::from).collect();
    let mut body = text.lines().skip_while(|l| l.starts_with('#'));
    assert_eq!(body.next(), Some("theta_or_x,density"));
    let rows = body
        .map(|l| {
            let (x, d) = l.split_once(',').unwrap();
            (x.parse().unwrap(), d.parse().unwrap())
        })
        .collect();
    (header, rows)
}

/// Trapezoid rule on the (possibly non-uniform) grid, with the end cells
/// closed off by a constant extension.
fn trapezoid(rows: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let mut total = rows[0].1 * (rows[0].0 - a) + rows[rows.len() - 1].1 * (b - rows[rows.len() - 1].0);
    for w in rows.windows(2) {
        total += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
    }
    total
}

/// Trapezoid rule around the circle, normalized by 2π.
fn periodic_trapezoid(rows: &[(f64, f64)]) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let n = rows.len();
    (0..n)
        .map(|i| {
            let (x0, d0) = rows[i];
            let (x1, d1) = rows[(i + 1) % n];
            let dx = if i + 1 == n { x1 + two_pi - x0 } else { x1 - x0 };
            0.5 * (d0 + d1) * dx
        })
        .sum::<f64>()
        / two_pi
}

#[test]
fn density_unitary_full_circle() {
    let (header, rows) = read_density(&["density", "--law", "unitary", "--t", "4"]);
    assert_eq!(header[0], "# law=unitary, t=4");
    assert!(header[1].starts_with("# manifest: {"));
    assert_eq!(rows.len(), 512);
    assert!(rows.iter().all(|&(_, d)| d > 0.0));
    let mass = periodic_trapezoid(&rows);
    assert!((mass - 1.0).abs() < 1e-4, "mass {mass}");
}

#[test]
fn density_unitary_mass() {
    let (_, rows) = read_density(&["density", "--law", "unitary", "--t", "1"]);
    let mass = periodic_trapezoid(&rows);
    assert!((mass - 1.0).abs() < 1e-4, "mass {mass}");
}

#[test]
fn density_positive_support() {
    let tau: f64 = -0.5;
    let s = (tau * (tau - 4.0)).sqrt();
    let r_minus = (2.0 - tau - s) / 2.0 * (-s / 2.0).exp();
    let r_plus = (2.0 - tau + s) / 2.0 * (s / 2.0).exp();
    let (header, rows) = read_density(&["density", "--law", "positive", "--t", "0.5"]);
    assert_eq!(header[0], "# law=positive, t=0.5");
    for &(x, d) in &rows {
        assert!(d >= 0.0);
        if d > 0.0 {
            assert!(x >= r_minus && x <= r_plus, "mass at {x}");
        }
    }
    assert!(rows.iter().filter(|r| r.1 > 0.0).count() > rows.len() / 2);
    let mass = trapezoid(&rows, r_minus, r_plus);
    assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
}

#[test]
fn variance_scan_exact_column() {
    let v = json(&["variance-scan", "--Ns", "2,4,8", "--t", "1", "--paths", "200"]);
    assert_manifest(&v, "variance-scan");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert_eq!(keys(row), ["N", "exact_variance", "variance"]);
        let n = row["N"].as_f64().unwrap();
        let exact = row["exact_variance"].as_f64().unwrap();
        assert!(close(exact, (1.0 - (-1.0f64).exp()) / (n * n), 1e-10));
    }
    assert!((v["exact_slope"].as_f64().unwrap() + 2.0).abs() < 1e-6);
    assert!((v["slope"].as_f64().unwrap() + 2.0).abs() < 0.5);
}

#[test]
fn variance_scan_empty_sizes() {
    let out = heatkernel(&["variance-scan", "--Ns", "--t", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid configuration"));
}

#[test]
fn check_intertwine_reports() {
    let v = json(&["check-intertwine", "--N", "1", "--seed", "3"]);
    assert_manifest(&v, "check-intertwine");
    assert_eq!(v["pass"], true);
    for check in v["checks"].as_array().unwrap() {
        assert!(check["closed_form"].is_array());
    }

    let v = json(&["check-intertwine", "--N", "4", "--seed", "1"]);
    let checks = v["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 3);
    for check in checks {
        assert!(check["relative_error"].as_f64().unwrap() < 1e-4);
    }
}

#[test]
fn check_intertwine_failures() {
    let out = heatkernel(&["check-intertwine", "--N", "3", "--hstep", "0"]);
    assert_eq!(out.status.code(), Some(2));
    // a tolerance nothing can meet
    let out = heatkernel(&["check-intertwine", "--N", "2", "--tol", "1e-30"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_lists_flags() {
    let expect: &[(&str, &[&str])] = &[
        ("moments", &["--t", "--max-n", "--unsafe-precision"]),
        ("flow", &["--poly", "--u", "--N", "--degree-cap"]),
        ("simulate", &["--group", "--N", "--t", "--s", "--steps", "--paths", "--seed", "--out", "--observables"]),
        ("density", &["--law", "--t", "--grid", "--out"]),
        ("variance-scan", &["--Ns", "--t", "--observable", "--paths"]),
        ("check-intertwine", &["--N", "--seed", "--hstep"]),
    ];
    for (cmd, flags) in expect {
        let out = heatkernel(&[cmd, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        for flag in *flags {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
}
