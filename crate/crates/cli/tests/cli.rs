use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn polyharm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyharm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn polyharm")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value_of(o: &Output, key: &str) -> String {
    let prefix = format!("{key}=");
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&prefix).map(str::to_owned))
        .unwrap_or_else(|| panic!("no {key} in\n{}", stdout(o)))
}

fn with_config(body: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.toml"), body).unwrap();
    dir
}

fn read_csv(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_owned();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sobolev_reports() {
    let dir = TempDir::new().unwrap();
    let o = polyharm(dir.path(), &["sobolev", "--n", "3", "--k", "1"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().any(|l| l == "two_sharp=6"));
    let o = polyharm(dir.path(), &["sobolev", "--n", "5", "--k", "2"]);
    assert!(stdout(&o).lines().any(|l| l == "alpha=105"));
    let inv: f64 = value_of(&o, "inv_k0").parse().unwrap();
    assert!((inv - 102.383_273_440_582_93).abs() < 1e-10 * inv);
}

#[test]
fn sobolev_rejects_n_le_2k() {
    let dir = TempDir::new().unwrap();
    let o = polyharm(dir.path(), &["sobolev", "--n", "4", "--k", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("requires n>2k"));
}

#[test]
fn extend_linear_boundary_data() {
    let dir = with_config("[constraint]\nboundary = [[-1.0], [1.0]]\n");
    let o = polyharm(dir.path(), &["extend", "--config", "run.toml"]);
    assert!(o.status.success(), "{o:?}");
    let residual: f64 = value_of(&o, "residual").parse().unwrap();
    assert!(residual < 1e-10);
    let (header, rows) = read_csv(&dir.path().join("out/extension.csv"));
    assert_eq!(header, "coord,value");
    assert_eq!(rows.len(), 201);
    for r in rows {
        assert!((r[1] - (2.0 * r[0] - 1.0)).abs() < 1e-8, "{r:?}");
    }
}

#[test]
fn extend_zero_boundary_data() {
    let dir = TempDir::new().unwrap();
    let o = polyharm(dir.path(), &["extend", "--k", "2", "--n", "5"]);
    assert!(o.status.success(), "{o:?}");
    let (_, rows) = read_csv(&dir.path().join("out/extension.csv"));
    assert!(rows.iter().all(|r| r[1] == 0.0));
}

#[test]
fn extend_coercivity_follows_lowest_eigenvalue() {
    // -u'' + a u on (0, 1) with clamped ends is coercive iff π² + a > 0.
    for (a0, coercive) in [(-20.0, false), (-5.0, true)] {
        assert_eq!(std::f64::consts::PI.powi(2) + a0 > 0.0, coercive);
        let dir = with_config(&format!(
            "[constraint]\nboundary = [[-1.0], [1.0]]\n[operator]\nlower_order = [{{ type = \"constant\", value = {a0:?} }}]\n"
        ));
        let o = polyharm(dir.path(), &["extend", "--config", "run.toml"]);
        let lambda: f64 = value_of(&o, "coercivity_lambda").parse().unwrap();
        if coercive {
            assert!(o.status.success(), "{o:?}");
            assert!(lambda > 0.0);
        } else {
            assert_eq!(o.status.code(), Some(3));
            assert!(lambda < 0.0);
            assert_eq!(value_of(&o, "coercive"), "false");
        }
    }
}

#[test]
fn eigen_refined_matches_pi_squared() {
    let dir = TempDir::new().unwrap();
    let o = polyharm(dir.path(), &["eigen"]);
    assert!(o.status.success());
    let l: f64 = value_of(&o, "lambda1_refined").parse().unwrap();
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((l - pi2).abs() < 1e-6 * pi2, "{l}");
    let (_, rows) = read_csv(&dir.path().join("out/eigenfunction.csv"));
    assert_eq!(rows.len(), 201);
}

#[test]
fn rayleigh_small_truncation() {
    let dir = with_config("[rayleigh]\ntruncation_radius = 10.0\nnode_count = 2001\n");
    let o = polyharm(dir.path(), &["rayleigh", "--config", "run.toml"]);
    assert!(o.status.success());
    let rq: f64 = value_of(&o, "rayleigh_quotient").parse().unwrap();
    let p = polyharm::SobolevParams::new(3, 1).unwrap();
    assert_eq!(
        rq,
        polyharm::sobolev::rayleigh_quotient_u0(p, 10.0, 2001).unwrap()
    );
    let gap: f64 = value_of(&o, "relative_gap").parse().unwrap();
    assert!(gap.abs() < 0.2, "{gap}");
}

#[test]
fn minimize_forced_failure() {
    let dir = with_config("[tolerances]\nmax_iterations = 1\n");
    let o = polyharm(dir.path(), &["minimize", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(4));
    let j = read_json(&dir.path().join("out/minimize.json"));
    assert_eq!(j["converged"], Value::Bool(false));
    assert_eq!(j["iterations"], 1);
}

#[test]
fn minimize_converges_with_overrides() {
    let dir = TempDir::new().unwrap();
    let o = polyharm(dir.path(), &["minimize", "--q", "3.5", "--gamma", "2"]);
    assert!(o.status.success(), "{o:?}");
    let j = read_json(&dir.path().join("out/minimize.json"));
    assert_eq!(j["converged"], Value::Bool(true));
    assert_eq!(j["q"].as_f64(), Some(3.5));
    assert_eq!(j["gamma"].as_f64(), Some(2.0));
    assert!(j["el_residual"].as_f64().unwrap() <= 1e-6);
    assert!(j["constraint_error"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn continue_writes_one_row_per_exponent() {
    let dir = with_config(
        "[constraint]\nq_schedule = [3.0, 4.0, 5.0, 5.5, 5.9, 5.99]\nboundary = [[-1.0], [1.0]]\n",
    );
    let o = polyharm(dir.path(), &["continue", "--config", "run.toml"]);
    assert!(o.status.success(), "{o:?}");
    let (header, rows) = read_csv(&dir.path().join("out/continuation.csv"));
    assert_eq!(header, "q,mu,lambda,el_residual,sign_changes");
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[4] >= 1.0));
    let text = fs::read_to_string(dir.path().join("out/continuation.csv")).unwrap();
    assert!(!text.contains('\r') && text.ends_with('\n'));
}

#[test]
fn check_prints_both_sides_and_verdict() {
    let dir = TempDir::new().unwrap();
    let o = polyharm(dir.path(), &["check"]);
    assert!(o.status.success(), "{o:?}");
    let lhs: f64 = value_of(&o, "lhs").parse().unwrap();
    let rhs: f64 = value_of(&o, "rhs").parse().unwrap();
    let verdict = value_of(&o, "verdict");
    assert_eq!(verdict == "holds", lhs < rhs);
    let j = read_json(&dir.path().join("out/check.json"));
    assert_eq!(j["verdict"], Value::from(verdict));
}

#[test]
fn testfn_on_ball() {
    let dir = with_config("[geometry]\nkind = \"ball\"\nnode_count = 2001\n");
    let o = polyharm(
        dir.path(),
        &["testfn", "--config", "run.toml", "--eps", "0.2,0.1,0.05"],
    );
    assert!(o.status.success(), "{o:?}");
    let (header, rows) = read_csv(&dir.path().join("out/testfn.csv"));
    assert_eq!(header, "epsilon,mu,lower_order,gamma,Q,target,gap");
    assert_eq!(rows.len(), 3);
    let j = read_json(&dir.path().join("out/testfn.json"));
    assert_eq!(j["extrapolation"], "series");
}

#[test]
fn testfn_exit_codes() {
    let dir = with_config("[geometry]\nkind = \"ball\"\n");
    let o = polyharm(
        dir.path(),
        &["testfn", "--config", "run.toml", "--eps", "0.025"],
    );
    assert_eq!(o.status.code(), Some(5), "{o:?}");
    let o = polyharm(dir.path(), &["testfn"]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}

#[test]
fn config_errors_exit_2() {
    for body in [
        "[geometry]\nshape = \"ball\"\n",
        "[constraint]\nq = 7.0\n",
        "[constraint]\nboundary = [[1.0, 0.0], [0.0, 0.0]]\n",
        "not toml at all [",
    ] {
        let dir = with_config(body);
        let o = polyharm(dir.path(), &["minimize", "--config", "run.toml"]);
        assert_eq!(o.status.code(), Some(2), "{body}");
    }
    let dir = TempDir::new().unwrap();
    let o = polyharm(dir.path(), &["minimize", "--config", "missing.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn manifest_echoes_resolved_defaults() {
    let dir = with_config("[output]\ndirectory = \"results\"\nformats = [\"json\"]\n");
    let o = polyharm(
        dir.path(),
        &["minimize", "--config", "run.toml", "--k", "2", "--n", "5"],
    );
    assert!(o.status.success(), "{o:?}");
    let m = read_json(&dir.path().join("results/manifest.json"));
    assert_eq!(m["command"], "minimize");
    let c = &m["config"];
    assert_eq!(c["geometry"]["kind"], "slab");
    assert_eq!(c["geometry"]["node_count"], 201);
    assert_eq!(c["operator"]["k"], 2);
    assert_eq!(c["operator"]["lower_order"].as_array().unwrap().len(), 2);
    assert_eq!(c["operator"]["f"]["type"], "constant");
    assert_eq!(c["constraint"]["q"].as_f64(), Some(6.0));
    assert_eq!(c["constraint"]["q_schedule"].as_array().unwrap().len(), 6);
    assert_eq!(c["testfn"]["cutoff_order"], 5);
    assert_eq!(c["tolerances"]["el_tol"].as_f64(), Some(1e-6));
    assert_eq!(c["tolerances"]["max_iterations"], 20000);
    assert_eq!(c["output"]["formats"], serde_json::json!(["json"]));
    assert!(dir.path().join("results/minimize.json").exists());
    assert!(!dir.path().join("results/u.csv").exists());
}

#[test]
fn outputs_are_deterministic_with_sorted_keys() {
    let body = "[constraint]\nboundary = [[-1.0], [1.0]]\nq = 4.5\n";
    let a = with_config(body);
    let b = with_config(body);
    for d in [&a, &b] {
        assert!(polyharm(d.path(), &["minimize", "--config", "run.toml"])
            .status
            .success());
    }
    for name in ["manifest.json", "minimize.json", "u.csv", "w.csv"] {
        let x = fs::read(a.path().join("out").join(name)).unwrap();
        let y = fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let text = fs::read_to_string(a.path().join("out/minimize.json")).unwrap();
    let keys: Vec<&str> = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix('"'))
        .filter_map(|l| l.split('"').next())
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    // 17 significant digits in every float.
    let (_, rows) = read_csv(&a.path().join("out/u.csv"));
    assert_eq!(rows.len(), 201);
    let raw = fs::read_to_string(a.path().join("out/u.csv")).unwrap();
    let cell = raw.lines().nth(1).unwrap().split(',').next().unwrap();
    let mantissa = cell.split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17, "{cell}");
}
