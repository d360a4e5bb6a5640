use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flockchaos::{w2_bruteforce, EmpiricalMeasure};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_flockchaos");

const SYSTEM: &str = r#"
n_particles = 12

[kernel]
kind = "power"
lambda = 1.0
beta = 0.5

[init]
position_box = { lo = [0.0, 0.0], hi = [1.0, 1.0] }
velocity = { kind = "box", lo = [-1.0, -1.0], hi = [1.0, 1.0] }

[integrator]
dt = 0.05
t_end = 1.0
"#;

fn write_config(dir: &Path, name: &str, head: &str, tail: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, format!("{head}\noutput_dir = {:?}\n{SYSTEM}\n{tail}", dir.join("out").to_str().unwrap())).unwrap();
    p
}

fn run(args: &[&str], cfg: &Path) -> Output {
    Command::new(BIN).args(args).arg(cfg).env_remove("FLOCKCHAOS_OUTPUT_DIR").output().unwrap()
}

fn chaos_config(dir: &Path) -> std::path::PathBuf {
    write_config(dir, "chaos.toml", "command = \"chaos\"\nmaster_seed = 5", "[coupling]\nn_reference = 96\ntrials = 6\nreference_pool = 2\nobs_points = 4\n")
}

#[test]
fn simulate_writes_trajectory_with_provenance() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "sim.toml", "command = \"simulate\"", "");
    let out = run(&["simulate"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(d.path().join("out/trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_sha256="));
    assert_eq!(lines.next().unwrap(), "t,population,id,x0,x1,v0,v1");
    assert_eq!(text.lines().count(), 2 + 12 * 21);
    let resolved = fs::read_to_string(d.path().join("out/config_resolved.json")).unwrap();
    assert!(resolved.contains("\"master_seed\": 0"));
    assert!(d.path().join("out/summary.json").exists());
}

#[test]
fn chaos_outputs_are_byte_identical_across_runs_and_threads() {
    let d = TempDir::new().unwrap();
    let cfg = chaos_config(d.path());
    let mut seen = Vec::new();
    for threads in ["1", "3", "1"] {
        let out = run(&["--threads", threads, "chaos"], &cfg);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let files: Vec<Vec<u8>> = ["chaos_aggregate.csv", "chaos_aggregate.json", "chaos_bound.csv"]
            .iter()
            .map(|f| fs::read(d.path().join("out").join(f)).unwrap())
            .collect();
        seen.push(files);
    }
    assert_eq!(seen[0], seen[1]);
    assert_eq!(seen[0], seen[2]);
    let csv = String::from_utf8(seen[0][0].clone()).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "t,P_mean,K_mean,C_mean,total_mean,total_stderr,trials");
    let summary = fs::read_to_string(d.path().join("out/summary.json")).unwrap();
    assert!(summary.contains("lin_min"));
}

#[test]
fn seed_override_and_env_output_dir() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "sim.toml", "command = \"simulate\"", "");
    let elsewhere = d.path().join("elsewhere");
    let out = Command::new(BIN)
        .args(["--seed", "99", "simulate"])
        .arg(&cfg)
        .env("FLOCKCHAOS_OUTPUT_DIR", &elsewhere)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(elsewhere.join("trajectory.csv")).unwrap();
    assert!(text.lines().next().unwrap().ends_with("master_seed=99"));
    assert!(!d.path().join("out").exists());
}

#[test]
fn config_errors_exit_with_code_two() {
    let d = TempDir::new().unwrap();
    let bad = d.path().join("bad.toml");
    fs::write(&bad, format!("command = \"simulate\"\nbogus = 1\n{}", SYSTEM.replace("beta = 0.5", "beta = -1.0"))).unwrap();
    let out = run(&["simulate"], &bad);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus") && err.contains("beta"), "{err}");

    let forced = d.path().join("forced.toml");
    fs::write(&forced, format!("command = \"simulate\"\nmodel = \"forced\"\n{SYSTEM}\n[force]\nsigma = 1.0\np = 2.0\nkappa = 1.0\n")).unwrap();
    let out = run(&["simulate"], &forced);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta_range"));

    let cfg = write_config(d.path(), "sim.toml", "command = \"simulate\"", "");
    assert_eq!(run(&["chaos"], &cfg).status.code(), Some(2));
    assert_eq!(run(&["simulate"], &d.path().join("missing.toml")).status.code(), Some(2));
}

#[test]
fn numerical_blowup_exits_with_code_three() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("blow.toml");
    let system = SYSTEM
        .replace("kind = \"power\"\nlambda = 1.0\nbeta = 0.5", "kind = \"constant\"\nlambda = 1000.0")
        .replace("dt = 0.05\nt_end = 1.0", "dt = 1.0\nt_end = 300.0");
    fs::write(&cfg, format!("command = \"chaos\"\noutput_dir = {:?}\n{system}\n[coupling]\nn_reference = 16\ntrials = 2\n", d.path().join("out").to_str().unwrap())).unwrap();
    let out = run(&["chaos"], &cfg);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn failing_check_exits_with_code_one() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("odi.toml");
    fs::write(
        &cfg,
        format!(
            "command = \"odi\"\noutput_dir = {:?}\n[odi]\nc = [4.0]\ndelta = [0.25]\nt_end = 50.0\ndt = 1e-3\n",
            d.path().join("out").to_str().unwrap()
        ),
    )
    .unwrap();
    let out = run(&["odi"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    assert!(d.path().join("out/odi_constants.json").exists());
}

#[test]
fn oracle_matches_bruteforce_on_six_points() {
    let d = TempDir::new().unwrap();
    let mu = [[0.1, 0.2], [1.5, -0.3], [0.7, 0.9], [-1.2, 0.4], [0.0, -1.0], [2.0, 2.0]];
    let nu = [[0.3, 0.1], [-0.5, 0.5], [1.1, 1.2], [0.9, -0.8], [-1.0, -1.0], [1.7, 0.2]];
    let write = |name: &str, pts: &[[f64; 2]]| {
        let p = d.path().join(name);
        fs::write(&p, pts.iter().map(|r| format!("{},{}\n", r[0], r[1])).collect::<String>()).unwrap();
        p
    };
    let (pm, pn) = (write("mu.csv", &mu), write("nu.csv", &nu));
    let cfg = d.path().join("oracle.toml");
    fs::write(
        &cfg,
        format!(
            "command = \"oracle\"\noutput_dir = {:?}\n[oracle]\nmu = {:?}\nnu = {:?}\n",
            d.path().join("out").to_str().unwrap(),
            pm.to_str().unwrap(),
            pn.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = run(&["oracle"], &cfg);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let printed: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("W2 = "))
        .expect("W2 line")
        .trim()
        .parse()
        .unwrap();
    let rows = |p: &[[f64; 2]]| EmpiricalMeasure::from_rows(&p.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
    let want = w2_bruteforce(&rows(&mu), &rows(&nu)).unwrap();
    assert!((printed - want).abs() < 1e-12, "{printed} vs {want}");
}

#[test]
fn flocking_writes_diagnostics() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "flock.toml", "command = \"flocking\"", "");
    let out = run(&["flocking"], &cfg);
    assert!(matches!(out.status.code(), Some(0) | Some(1)));
    let text = fs::read_to_string(d.path().join("out/diagnostics.csv")).unwrap();
    let header = text.lines().nth(1).unwrap();
    for col in ["t", "D", "A", "Q", "gamma2d", "Rratio"] {
        assert!(header.split(',').any(|c| c == col), "{header}");
    }
}
