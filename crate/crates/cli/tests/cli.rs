//! End-to-end CLI behavior: exit codes, artifact layout, config echo.

use std::path::PathBuf;
use std::process::Command;

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("beables-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn beables() -> Command {
    Command::new(env!("CARGO_BIN_EXE_beables"))
}

#[test]
fn verify_engine_passes_on_the_small_preset() {
    let tmp = TempDir::new("verify");
    let conf = tmp.0.join("verify.conf");
    std::fs::write(
        &conf,
        format!(
            "engine = verify\nseed = 7\nout_dir = {}\nsites = 2\nspinor_dim = 2\n\
             omega = 1\ncoupling = 0.5\n",
            tmp.0.join("out").display()
        ),
    )
    .unwrap();
    let out = beables().arg("run").arg(&conf).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = std::fs::read_to_string(tmp.0.join("out/report.json")).unwrap();
    assert!(report.contains("\"passed\": true"));
    assert!(report.contains("car-anticommutators"));
    assert!(report.contains("master-equation"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new("badcfg");
    let conf = tmp.0.join("bad.conf");

    // Unknown key.
    std::fs::write(&conf, "volume = 11\n").unwrap();
    let out = beables().arg("run").arg(&conf).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Zero ensemble.
    std::fs::write(
        &conf,
        "engine = lattice-stochastic\nensemble_size = 0\n",
    )
    .unwrap();
    let out = beables().arg("run").arg(&conf).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Unknown preset.
    std::fs::write(
        &conf,
        format!(
            "engine = lattice-stochastic\nout_dir = {}\ninitial_state = warp\n",
            tmp.0.join("out").display()
        ),
    )
    .unwrap();
    let out = beables().arg("run").arg(&conf).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Missing file.
    let out = beables().arg("run").arg(tmp.0.join("nope.conf")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new("flags");
    let conf = tmp.0.join("run.conf");
    std::fs::write(
        &conf,
        format!(
            "engine = lattice-stochastic\nseed = 1\nout_dir = {}\nsites = 2\n\
             spinor_dim = 2\nomega = 1\ninitial_state = uniform\nensemble_size = 50\n\
             t_max = 0.5\ncheckpoints = 0.5\ndt = 0.01\ntrajectory_logs = 2\n",
            tmp.0.join("out").display()
        ),
    )
    .unwrap();
    let over = tmp.0.join("over");
    let out = beables()
        .arg("run")
        .arg(&conf)
        .args(["--seed", "5", "--ensemble-size", "80"])
        .arg("--out-dir")
        .arg(&over)
        .args(["--checkpoints", "0.25, 0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let echo = std::fs::read_to_string(over.join("config.txt")).unwrap();
    assert!(echo.contains("seed = 5"));
    assert!(echo.contains("ensemble_size = 80"));
    assert!(echo.contains("checkpoints = 0.25, 0.5"));
    // The echoed config re-parses to the run that was executed.
    let reparsed = beables_cli::config::RunConfig::parse(&echo).unwrap();
    assert_eq!(reparsed.seed, 5);
    assert_eq!(reparsed.ensemble_size, 80);
}

#[test]
fn lattice_run_emits_expected_artifacts() {
    let tmp = TempDir::new("artifacts");
    let out_dir = tmp.0.join("out");
    let conf = tmp.0.join("run.conf");
    std::fs::write(
        &conf,
        format!(
            "engine = lattice-stochastic\nseed = 11\nout_dir = {}\nsites = 3\n\
             spinor_dim = 2\nomega = 1\ninitial_state = random\nensemble_size = 200\n\
             t_max = 1.0\ncheckpoints = 0.5, 1.0\ndt = 0.005\ntrajectory_logs = 2\n",
            out_dir.display()
        ),
    )
    .unwrap();
    let out = beables().arg("run").arg(&conf).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    for name in [
        "config.txt",
        "report.json",
        "checkpoints.csv",
        "trajectory_0.csv",
        "trajectory_1.csv",
        "checkpoint_0.svg",
        "checkpoint_1.svg",
    ] {
        assert!(out_dir.join(name).exists(), "missing artifact {name}");
    }

    // Trajectory CSV shape: t, n_1..n_3, event.
    let traj = std::fs::read_to_string(out_dir.join("trajectory_0.csv")).unwrap();
    assert!(traj.starts_with("t,n_1,n_2,n_3,event\n"));
    // Fermion number conserved on every row.
    for line in traj.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let total: u32 = cols[1..4].iter().map(|c| c.parse::<u32>().unwrap()).sum();
        assert_eq!(total, 1, "row '{line}'");
    }

    // The SVG plots only numbers that live in the CSV/JSON artifacts:
    // report.json carries the same target/empirical arrays.
    let report = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&report).unwrap();
    let checkpoints = parsed["comparisons"][0]["checkpoints"].as_array().unwrap();
    assert_eq!(checkpoints.len(), 2);
    let csv = std::fs::read_to_string(out_dir.join("checkpoints.csv")).unwrap();
    let labels = parsed["comparisons"][0]["labels"].as_array().unwrap();
    // Every (time, label, target, count, empirical) row appears in the CSV.
    assert_eq!(csv.lines().count(), 1 + checkpoints.len() * labels.len());
}

#[test]
fn dump_writes_basis_and_spectrum_json() {
    let tmp = TempDir::new("dump");
    let conf = tmp.0.join("dump.conf");
    std::fs::write(
        &conf,
        format!(
            "engine = verify\nout_dir = {}\nsites = 2\nspinor_dim = 2\nomega = 1\n\
             coupling = 0.5\n",
            tmp.0.join("out").display()
        ),
    )
    .unwrap();
    let out = beables().arg("dump").arg(&conf).output().unwrap();
    assert_eq!(out.status.code(), Some(0));

    let basis: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.0.join("out/basis.json")).unwrap())
            .unwrap();
    assert_eq!(basis["dimension"], 4);
    assert_eq!(basis["states"].as_array().unwrap().len(), 4);
    assert_eq!(basis["classes"].as_array().unwrap().len(), 2);

    let spectrum: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.0.join("out/spectrum.json")).unwrap())
            .unwrap();
    // Two-site hopping cancels under the periodic central difference, so
    // H = m beta + g lambda: eigenvalues -m + g and m + g, twice each.
    let energies: Vec<f64> = spectrum["energies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((energies[0] + 0.5).abs() < 1e-12 && (energies[3] - 1.5).abs() < 1e-12);
    assert_eq!(spectrum["matrix"].as_array().unwrap().len(), 4);
}

#[test]
fn continuum_run_emits_field_dumps_and_fan_plot() {
    let tmp = TempDir::new("cont");
    let out_dir = tmp.0.join("out");
    let conf = tmp.0.join("run.conf");
    std::fs::write(
        &conf,
        format!(
            "engine = continuum-deterministic\nseed = 3\nout_dir = {}\n\
             box_length = 12.566370614359172\ncutoff = 8\nboxes = 8\ngrid = 256\n\
             rk_dt = 0.005\ninitial_state = mode(2)\nensemble_size = 100\n\
             t_max = 0.5\ncheckpoints = 0.5\ntrajectory_logs = 2\n",
            out_dir.display()
        ),
    )
    .unwrap();
    let out = beables().arg("run").arg(&conf).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for name in [
        "report.json",
        "checkpoints.csv",
        "coarse.csv",
        "fields_0.csv",
        "trajectories.svg",
        "histogram_0.svg",
        "trajectory_0.csv",
    ] {
        assert!(out_dir.join(name).exists(), "missing artifact {name}");
    }
    let fields = std::fs::read_to_string(out_dir.join("fields_0.csv")).unwrap();
    assert!(fields.starts_with("x,rho,j\n"));
    // Plane-wave density is uniform 1/ell.
    let row: Vec<&str> = fields.lines().nth(1).unwrap().split(',').collect();
    let rho: f64 = row[1].parse().unwrap();
    assert!((rho - 1.0 / 12.566370614359172).abs() < 1e-9);
}
