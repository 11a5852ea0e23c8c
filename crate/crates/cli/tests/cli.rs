use std::path::PathBuf;
use std::process::{Command, Output};

use dirac_bvp::bvp::{solve_model, ModelProblem};
use dirac_bvp::io::load_problem;
use serde_json::Value;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirac-bvp"))
        .args(args)
        .env_remove("DIRAC_BVP_THREADS")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}); stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_temp(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn solve_matches_library_and_passes_estimate() {
    let path = config("aps_demo.json");
    let out = run(&["solve", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    assert_eq!(r["command"], "solve");
    assert_eq!(r["schema_version"], 1);
    assert!(r["result"]["estimate_margin"].as_f64().unwrap() > 0.0);

    let spec = load_problem(&path).unwrap();
    let direct = solve_model(&ModelProblem::new(spec.f, spec.bc).unwrap()).unwrap();
    let close = |v: &Value, x: f64| (v.as_f64().unwrap() - x).abs() <= 1e-15 * x.abs();
    assert!(close(&r["result"]["h1_norm_sq"], direct.h1_norm_sq));
    assert!(close(&r["result"]["c4"], direct.c4));
    for c in r["checks"].as_array().unwrap() {
        assert!(c["margin"].as_f64().unwrap() >= 0.0, "{c}");
    }
}

#[test]
fn reports_are_byte_identical() {
    let path = config("graph_demo.json");
    let a = run(&["solve", "--input", path.to_str().unwrap()]);
    let b = run(&["solve", "--input", path.to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_all_ignores_thread_count() {
    let one = run(&["verify-all", "--seed", "7", "--criterion", "6,9", "--threads", "1"]);
    let four = run(&["verify-all", "--seed", "7", "--criterion", "6,9", "--threads", "4"]);
    assert_eq!(one.status.code(), Some(0), "{}", stderr(&one));
    assert_eq!(one.stdout, four.stdout);
    let r = report(&one);
    assert_eq!(r["seed"], 7);
    assert_eq!(r["criteria"].as_array().unwrap().len(), 2);

    let a = run(&["verify-all", "--seed", "7", "--criterion", "2"]);
    let b = run(&["verify-all", "--seed", "8", "--criterion", "2"]);
    assert_ne!(report(&a)["criteria"][0]["checks"], report(&b)["criteria"][0]["checks"]);
}

#[test]
fn threads_env_var_is_read() {
    let out = Command::new(env!("CARGO_BIN_EXE_dirac-bvp"))
        .args(["verify-all", "--criterion", "9"])
        .env("DIRAC_BVP_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("threads"), "{}", stderr(&out));
}

#[test]
fn malformed_json_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_temp(&dir, "bad.json", "{\"schema_version\": 1, \"kappa\": ");
    let out = run(&["solve", "--input", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("malformed JSON"), "{}", stderr(&out));
}

#[test]
fn config_errors_name_the_key() {
    let text = std::fs::read_to_string(config("graph_demo.json")).unwrap();
    let mut doc: Value = serde_json::from_str(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let mut missing = doc.clone();
    missing.as_object_mut().unwrap().remove("kappa");
    let p = write_temp(&dir, "missing.json", &missing.to_string());
    let out = run(&["spectrum", "--input", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`kappa`"), "{}", stderr(&out));

    doc["bc"]["K"] = serde_json::json!([[1.0, 2.0]]);
    let p = write_temp(&dir, "shape.json", &doc.to_string());
    let out = run(&["spectrum", "--input", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`bc.K`"), "{}", stderr(&out));
}

#[test]
fn perturbed_requires_a_perturbation() {
    let out = run(&["perturbed", "--input", config("aps_demo.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`perturbation`"), "{}", stderr(&out));
}

#[test]
fn perturbed_demo_contracts() {
    let out = run(&["perturbed", "--input", config("perturbed_demo.json").to_str().unwrap(), "--tol", "1e-11"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    assert!(r["result"]["contraction_factor"].as_f64().unwrap() < 1.0);
    assert_eq!(r["result"]["tol"].as_f64().unwrap(), 1e-11);
}

#[test]
fn solution_exports() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("u.csv");
    let field = dir.path().join("u.json");
    let out = run(&[
        "solve",
        "--input",
        config("aps_demo.json").to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--field",
        field.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 65);
    assert_eq!(lines[0].split(',').count(), 1 + 6);

    let spec = load_problem(&config("aps_demo.json")).unwrap();
    let u = dirac_bvp::io::parse_cylinder_field(&std::fs::read_to_string(&field).unwrap(), spec.partition()).unwrap();
    assert_eq!(u.grid, spec.grid);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = run(&[
        "spectrum",
        "--input",
        config("chiral_demo.json").to_str().unwrap(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(r["checks"].as_array().unwrap().len(), 3);
}

#[test]
fn fredholm_index_is_grid_independent() {
    let out = run(&[
        "fredholm",
        "--config",
        config("perturbed_demo.json").to_str().unwrap(),
        "--refine",
        "16,32",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    let levels = r["result"]["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 2);
    for l in levels {
        assert_eq!(l["index"], 0);
        assert_eq!(l["solvability"]["solvable"], true);
    }

    let out = run(&[
        "fredholm",
        "--config",
        config("aps_demo.json").to_str().unwrap(),
        "--rows",
        "drop-p",
    ]);
    let r = report(&out);
    let l = &r["result"]["levels"][0];
    assert_eq!(l["kernel"]["dim"], 3);
    assert_eq!(l["cokernel"]["dim"], 3);
}

#[test]
fn torus_demo_and_slack_guard() {
    let path = config("torus_demo.json");
    let out = run(&["torus", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    assert!(r["result"]["iterations"].as_u64().unwrap() > 1);

    let out = run(&["torus", "--input", path.to_str().unwrap(), "--eta-slack", "0.9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("eta/3"), "{}", stderr(&out));
}

#[test]
fn poincare_hardy_matches_oracle() {
    let out = run(&["poincare", "--kind", "hardy", "--n", "3", "--ratio", "2pi", "--grid", "4096"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    let m = r["result"]["minimum"].as_f64().unwrap();
    assert!((m - 0.5).abs() / 0.5 < 0.01, "{m}");
    assert!(m > 0.25);
}

#[test]
fn poincare_rejects_coarse_grid_and_bad_ratio() {
    let out = run(&["poincare", "--kind", "mckean", "--n", "3", "--ratio", "pi", "--grid", "8"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("too coarse"), "{}", stderr(&out));

    let out = run(&["poincare", "--kind", "hardy", "--n", "3", "--ratio", "-pi"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_check_exits_one() {
    // 16 cells over a log length of 12 miss the oracle by about 10%
    let out = run(&["poincare", "--kind", "hardy", "--n", "3", "--ratio", "12", "--grid", "16"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert_eq!(report(&out)["passed"], false);
}
