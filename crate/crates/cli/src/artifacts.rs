//! Artifact writing: every run output funnels through one sink that records
//! the file names for the report. Floats are written with the shortest
//! round-trip formatting, so identical runs produce identical bytes.

use std::fs;
use std::path::PathBuf;

use beables_core::bell::BeableTrajectory;
use beables_core::continuum::ContinuumTrajectory;
use beables_core::stats::DistributionComparison;

pub struct ArtifactSink {
    dir: PathBuf,
    pub names: Vec<String>,
}

impl ArtifactSink {
    pub fn create(dir: PathBuf) -> Result<Self, String> {
        fs::create_dir_all(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        Ok(Self {
            dir,
            names: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<(), String> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.names.push(name.to_string());
        Ok(())
    }
}

/// Per-checkpoint distribution table: one row per (time, label).
pub fn checkpoints_csv(labels: &[String], comparisons: &[DistributionComparison]) -> String {
    let mut out = String::from("time,label,target,count,empirical\n");
    for cp in comparisons {
        for (i, label) in labels.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                cp.time, label, cp.target[i], cp.counts[i], cp.empirical[i]
            ));
        }
    }
    out
}

/// Lattice beable trajectory: `t, n_1..n_L, event`.
pub fn lattice_trajectory_csv(traj: &BeableTrajectory, sites: usize) -> String {
    let mut header = String::from("t");
    for l in 1..=sites {
        header.push_str(&format!(",n_{l}"));
    }
    header.push_str(",event\n");
    let mut rows: Vec<(f64, Vec<u8>, &'static str)> = Vec::new();
    for (i, t) in traj.times.iter().enumerate() {
        rows.push((*t, traj.configs[i].0.clone(), if i == 0 { "start" } else { "sample" }));
    }
    for jump in &traj.jumps {
        rows.push((jump.time, jump.to.0.clone(), "jump"));
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out = header;
    for (t, counts, event) in rows {
        out.push_str(&format!("{t}"));
        for n in counts {
            out.push_str(&format!(",{n}"));
        }
        out.push_str(&format!(",{event}\n"));
    }
    out
}

/// Continuum trajectory: `t, x_1[, x_2]`.
pub fn continuum_trajectory_csv(traj: &ContinuumTrajectory) -> String {
    let omega = traj.positions.first().map(|p| p.len()).unwrap_or(0);
    let mut out = String::from("t");
    for i in 1..=omega {
        out.push_str(&format!(",x_{i}"));
    }
    out.push('\n');
    for (t, pos) in traj.times.iter().zip(&traj.positions) {
        out.push_str(&format!("{t}"));
        for x in pos {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
    }
    out
}

/// One-quantum field dump: `x, rho, j` rows.
pub fn fields_csv_one(rows: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("x,rho,j\n");
    for (x, rho, j) in rows {
        out.push_str(&format!("{x},{rho},{j}\n"));
    }
    out
}

/// Two-quantum field dump: `x1, x2, rho, j1, j2` rows.
pub fn fields_csv_two(rows: &[(f64, f64, f64, f64, f64)]) -> String {
    let mut out = String::from("x1,x2,rho,j1,j2\n");
    for (x1, x2, rho, j1, j2) in rows {
        out.push_str(&format!("{x1},{x2},{rho},{j1},{j2}\n"));
    }
    out
}
