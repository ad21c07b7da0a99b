use std::process::{Command, Output};

use layerfem::analysis::parse_runs_csv;
use layerfem::linalg::{relative_residual, CsrMatrix};

fn layerfem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layerfem"))
        .args(args)
        .env_remove("LAYERFEM_JOBS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn mesh_dump_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let o = layerfem(&["mesh", "--N", "12", "--eps", "1e-6", "--layout", "triangular", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(json["nodes"].as_array().unwrap().len(), 169);
    assert_eq!(json["cells"].as_array().unwrap().len(), 288);
    assert_eq!(json["boundary"].as_array().unwrap().len(), 48);
    assert_eq!(json["meta"]["N"], 12);
    assert_eq!(json["meta"]["layout"], "triangular");
    let cell = &json["cells"][0];
    assert!(["tri1", "tri2", "quad"].contains(&cell["kind"].as_str().unwrap()));
    assert!(["s", "x", "y", "xy"].contains(&cell["region"].as_str().unwrap()));
}

#[test]
fn mesh_rejects_bad_n() {
    let o = layerfem(&["mesh", "--N", "7", "--eps", "1e-6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("N must be divisible by 6"));
}

#[test]
fn mesh_warns_for_large_eps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let o = layerfem(&["mesh", "--N", "12", "--eps", "0.1", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("epsilon assumption violated"));
}

#[test]
fn unknown_flag_rejected() {
    let o = layerfem(&["solve", "--N", "12", "--eps", "1e-6", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_emits_round_tripping_csv() {
    let o = layerfem(&["solve", "--N", "12", "--eps", "1e-8", "--layout", "rectangular"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("layout,N,eps,e_eps,e_sd,iters,converged\n"));
    let rows = parse_runs_csv(&text).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].converged);
    assert!(rows[0].e_sd > 0.0 && rows[0].e_sd >= rows[0].e_eps);
    assert_eq!(rows[0].eps, 1e-8);
}

#[test]
fn solve_json_matches_library() {
    let o = layerfem(&["solve", "--N", "12", "--eps", "1e-6", "--format", "json", "--deterministic"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rec = layerfem::supercloseness_error(12, 1e-6, layerfem::Layout::Triangular, &Default::default()).unwrap();
    assert_eq!(v["e_sd"].as_f64().unwrap(), rec.e_sd);
    assert_eq!(v["stats"]["converged"], true);
}

#[test]
fn solve_residual_recheck_from_matrix_dump() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = dir.path().join("a.mtx");
    let o = layerfem(&["solve", "--N", "12", "--eps", "1e-6", "--tol", "1e-12", "--dump-matrix", mtx.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&mtx).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("%%MatrixMarket"));
    let dims: Vec<usize> = lines.next().unwrap().split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(dims[0], 121);
    let triplets: Vec<(usize, usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[0].parse::<usize>().unwrap() - 1, f[1].parse::<usize>().unwrap() - 1, f[2].parse().unwrap())
        })
        .collect();
    let dumped = CsrMatrix::from_triplets(dims[0], &triplets).unwrap();
    let run = layerfem::analysis::solve_benchmark(12, 1e-6, layerfem::Layout::Triangular, &Default::default()).unwrap();
    assert_eq!(dumped, run.system.matrix);
    let x = run.system.restrict(&run.solution);
    assert!(relative_residual(&dumped, &x, &run.system.rhs).unwrap() <= 1e-12);
}

#[test]
fn solve_rejects_inadmissible_delta() {
    let o = layerfem(&["solve", "--N", "12", "--eps", "1e-6", "--delta-s", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("coercivity bound"));
}

#[test]
fn solver_failure_exit_code() {
    let o = layerfem(&["solve", "--N", "24", "--eps", "1e-16", "--restart", "3", "--max-outer", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains(",false"));
}

#[test]
fn study_markdown_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = layerfem(&["study", "--N", "12,24,48,96", "--layout", "triangular", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "layout,N,e_eps,rate_eps,e_sd,rate_sd");
    assert_eq!(lines.len(), 5);
    let rate: f64 = lines[3].split(',').nth(5).unwrap().parse().unwrap();
    assert!((1.33..=1.37).contains(&rate), "rate {rate}");
    let md = std::fs::read_to_string(dir.path().join("table.md")).unwrap();
    assert!(md.contains("| 96 |"));
    let plot = std::fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    assert!(plot.starts_with("N,e_sd,comparator"));
    let runs = parse_runs_csv(&std::fs::read_to_string(dir.path().join("runs.csv")).unwrap()).unwrap();
    assert_eq!(runs.len(), 24);
}

#[test]
fn study_single_eps_and_jobs_env() {
    let a = Command::new(env!("CARGO_BIN_EXE_layerfem"))
        .args(["study", "--N", "12,24", "--eps-list", "1e-6"])
        .env("LAYERFEM_JOBS", "2")
        .output()
        .unwrap();
    let b = layerfem(&["study", "--N", "12,24", "--eps-list", "1e-6", "--deterministic"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).lines().count(), 3);
}

#[test]
fn study_rejects_non_doubling_chain() {
    let o = layerfem(&["study", "--N", "12,36", "--eps-list", "1e-6"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn study_incomplete_exit_code() {
    let o = layerfem(&["study", "--N", "12,24", "--eps-list", "1e-6", "--restart", "2", "--max-outer", "1"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("incomplete"));
}

#[test]
fn check_is_deterministic() {
    let a = layerfem(&["check", "--seed", "42"]);
    let b = layerfem(&["check", "--seed", "42"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    let v: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["suites"].as_array().unwrap().len() >= 7);
}

#[test]
fn check_reports_injected_delta_violation() {
    let o = layerfem(&["check", "--inject-delta-violation"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("FAILED coercivity"));
}
