use std::path::{Path, PathBuf};
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_wgf-fv");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

/// Writes `body` as a config in `dir` with its output directed to `dir/out`.
fn config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    let out = dir.join("out");
    let text = body.replace("@OUT@", &out.display().to_string()).replace("@CONFIGS@", &configs().display().to_string());
    std::fs::write(&path, text).unwrap();
    path
}

fn wgf(args: &[&str], config: &Path) -> std::process::Output {
    Command::new(BIN).args(args).arg("--config").arg(config).output().unwrap()
}

fn columns(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect()).collect();
    (header, rows)
}

const FP_RUN: &str = r#"
[run]
t_end = 0.2
tau = 0.02
output_dir = "@OUT@"

[mesh]
source = "refined"
path = "@CONFIGS@/unit_square_acute.mesh"
level = 1

[energy]
model = "fokker_planck"
g = 1.0

[initial]
kind = "fp_exact"
"#;

#[test]
fn run_writes_summary_and_final_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = config(dir.path(), FP_RUN);
    let out = wgf(&["run"], &path);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = columns(&dir.path().join("out/summary.csv"));
    assert_eq!(header, "t,tau,energy,mass,newton_iters");
    assert_eq!(rows.len(), 11);
    let m0 = rows[0][3];
    assert!(rows.iter().all(|r| (r[3] - m0).abs() <= 1e-12 * m0));
    assert!(rows.windows(2).all(|w| w[1][2] <= w[0][2]));
    assert!((rows[10][0] - 0.2).abs() < 1e-15);
    let (header, state) = columns(&dir.path().join("out/final_state.csv"));
    assert_eq!(header, "cell_id,x,y,rho");
    assert_eq!(state.len(), 192);
}

#[test]
fn equilibrium_run_keeps_energy_constant() {
    let dir = tempfile::tempdir().unwrap();
    let body = FP_RUN.replace("kind = \"fp_exact\"", "kind = \"equilibrium\"\nmass = 1.5");
    let out = wgf(&["run", "--scheme", "euler"], &config(dir.path(), &body));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = columns(&dir.path().join("out/summary.csv"));
    assert!(rows.iter().all(|r| (r[2] - rows[0][2]).abs() <= 1e-12 * rows[0][2].abs().max(1.0)));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = config(dir.path(), FP_RUN);
    assert!(wgf(&["run"], &path).status.success());
    let first = std::fs::read(dir.path().join("out/summary.csv")).unwrap();
    assert!(wgf(&["run"], &path).status.success());
    assert_eq!(first, std::fs::read(dir.path().join("out/summary.csv")).unwrap());
}

#[test]
fn salinity_demo_reaches_final_time() {
    let dir = tempfile::tempdir().unwrap();
    let demo = std::fs::read_to_string(configs().join("salinity.toml")).unwrap();
    let body = demo.replace("output_dir = \"out/salinity\"", "output_dir = \"@OUT@\"");
    let out = wgf(&["run"], &config(dir.path(), &body));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = columns(&dir.path().join("out/summary.csv"));
    assert_eq!(rows.last().unwrap()[0], 10.0);
    let (header, _) = columns(&dir.path().join("out/final_state.csv"));
    assert_eq!(header, "cell_id,x,y,rho,rho2");
}

#[test]
fn convergence_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[run]\noutput_dir = \"@OUT@\"\n\n[convergence]\nlevels = 2\n";
    let start = std::time::Instant::now();
    let out = Command::new(BIN)
        .args(["convergence", "--jobs", "2", "--config"])
        .arg(config(dir.path(), body))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(start.elapsed().as_secs() < 10);
    for scheme in ["ljko", "euler"] {
        let text = std::fs::read_to_string(dir.path().join(format!("out/convergence_{scheme}.csv"))).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "h,dt,err_linf,rate_linf,err_l1,rate_l1");
        assert_eq!(lines.len(), 3);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!((first[3], first[5]), ("", ""));
        assert!(!lines[2].split(',').nth(3).unwrap().is_empty());
    }
    let (header, rows) = columns(&dir.path().join("out/convergence.csv"));
    assert!(header.starts_with("h,dt,err_linf_ljko,"));
    assert_eq!(rows.len(), 2);
}

#[test]
fn dissipation_series_are_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[run]\noutput_dir = \"@OUT@\"\n\n[dissipation]\nlevel = 0\ntau = 0.01\nt_end = 1.0\n";
    let out = wgf(&["dissipation"], &config(dir.path(), body));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let read = |name: &str| {
        let (header, rows) = columns(&dir.path().join(format!("out/dissipation_{name}.csv")));
        assert_eq!(header, "t,dissipation");
        rows.iter().map(|r| r[1]).collect::<Vec<f64>>()
    };
    let (ljko, euler, exact) = (read("ljko"), read("euler"), read("continuous"));
    assert_eq!(ljko.len(), 101);
    assert_eq!(exact.len(), 101);
    for series in [&ljko, &euler, &exact] {
        assert!(series.windows(2).all(|w| w[1] <= w[0]));
    }
    assert!(ljko.iter().zip(&euler).all(|(a, b)| a <= b));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = FP_RUN.replace("g = 1.0", "g = 1.0\ngravity = 2.0");
    assert_eq!(wgf(&["run"], &config(dir.path(), &bad_key)).status.code(), Some(2));
    let missing = FP_RUN.replace("unit_square_acute.mesh", "no_such.mesh");
    let out = wgf(&["run"], &config(dir.path(), &missing));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such.mesh"));
    assert_eq!(wgf(&["run"], &dir.path().join("absent.toml")).status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{FP_RUN}\n[newton]\nmax_iter = 1\ntol_linf = 1e-15\ntau_min = 0.02\n");
    let out = wgf(&["run"], &config(dir.path(), &body));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver failure"));
}

#[test]
fn shipped_mesh_is_the_builtin_acute_mesh() {
    let text = std::fs::read_to_string(configs().join("unit_square_acute.mesh")).unwrap();
    assert_eq!(wgf_core::Triangulation::parse(&text).unwrap(), wgf_core::Triangulation::unit_square_acute());
}
