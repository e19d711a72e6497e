use blockcg::harness::trace::{ConvergenceTrace, Termination, CSV_HEADER};
use blockcg::sparse::write_matrix_market;
use blockcg::testmat;
use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcg-bench"))
        .args(args)
        .env_clear()
        .output()
        .expect("binary runs")
}

fn write_laplacian(dir: &Path, k: usize) -> String {
    let path = dir.join("lap.mtx");
    write_matrix_market(&testmat::laplacian_2d(k), fs::File::create(&path).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_trace(path: &Path) -> ConvergenceTrace {
    ConvergenceTrace::read_csv(BufReader::new(fs::File::open(path).unwrap())).unwrap()
}

#[test]
fn writes_one_trace_per_variant_and_block_size() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = write_laplacian(dir.path(), 6);
    let out = dir.path().join("out");
    let o = bench(&[
        "--matrix", &mtx, "--m", "1,2", "--variants", "dr,dp", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["lap_dr_m1", "lap_dp_m1", "lap_dr_m2", "lap_dp_m2"] {
        let path = out.join(format!("{name}.csv"));
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(1), Some(CSV_HEADER));
        let t = read_trace(&path);
        assert!(matches!(t.termination, Termination::Converged { .. }));
        assert!(t.final_omega().unwrap() < 1e-8, "{name}");
    }
    let summary = String::from_utf8(o.stdout).unwrap();
    assert!(summary.contains("converged"));
}

#[test]
fn identical_invocations_give_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = write_laplacian(dir.path(), 7);
    let rows = |sub: &str| {
        let out = dir.path().join(sub);
        let o = bench(&[
            "--matrix", &mtx, "--m", "3", "--variants", "dr,bf", "--seed", "9", "--random-b", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        let mut t = read_trace(&out.join("lap_dr_m3.csv"));
        t.rows.iter_mut().for_each(|r| r.wall_secs = 0.0);
        t.rows
    };
    assert_eq!(rows("a"), rows("b"));
}

#[test]
fn environment_variables_mirror_flags() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = write_laplacian(dir.path(), 5);
    let out = dir.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_bcg-bench"))
        .env_clear()
        .env("BCG_MATRIX", &mtx)
        .env("BCG_VARIANTS", "hs")
        .env("BCG_MAXIT", "3")
        .env("BCG_TOL", "0")
        .env("BCG_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(read_trace(&out.join("lap_hs_m1.csv")).iterations(), 3);
}

#[test]
fn jacobi_dump_holds_t_and_its_ldl_factors() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = write_laplacian(dir.path(), 6);
    let dump = dir.path().join("jacobi");
    let o = bench(&[
        "--matrix", &mtx, "--m", "2", "--variants", "dp", "--tol", "0", "--maxit", "4", "--dump-jacobi",
        dump.to_str().unwrap(), "--out", dir.path().join("t").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dump.join("lap_dp_m2_jacobi.json")).unwrap()).unwrap();
    assert_eq!(json["steps"], 4);
    assert_eq!(json["t"].as_array().unwrap().len(), 8);
    assert!(json["failure"].is_null());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    assert_eq!(bench(&["--matrix", "/nonexistent.mtx", "--out", out]).status.code(), Some(2));
    assert_eq!(bench(&["--variants", "hs"]).status.code(), Some(2));

    let bad = dir.path().join("bad.mtx");
    fs::write(&bad, "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 -1\n2 2 1\n").unwrap();
    assert_eq!(bench(&["--matrix", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));
    // Positive diagonal but strongly indefinite: no admissible shift exists.
    fs::write(&bad, "%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 1\n2 1 1000\n2 2 1\n").unwrap();
    let o = bench(&["--matrix", bad.to_str().unwrap(), "--precond", "ic", "--out", out]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    // HS loses rank once the Krylov space of this small Laplacian is exhausted.
    let mtx = write_laplacian(dir.path(), 8);
    let o = bench(&["--matrix", &mtx, "--m", "3", "--variants", "hs,dr", "--seed", "4", "--out", out]);
    assert_eq!(o.status.code(), Some(4));
    let hs = read_trace(&Path::new(out).join("lap_hs_m3.csv"));
    assert!(matches!(hs.termination, Termination::Failed { .. }));
    assert!(Path::new(out).join("lap_dr_m3.csv").exists());
}
