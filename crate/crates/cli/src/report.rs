//! Run reports and their JSON serialization.
//!
//! Serialized artifacts are byte-identical across reruns of the same config
//! and seed, so wall-clock timing stays in memory and on stdout only.

use std::time::Duration;

use beables_core::continuum::NonfactorizabilityReport;
use beables_core::stats::DistributionComparison;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct RngMetadata {
    pub algorithm: &'static str,
    pub master_seed: u64,
    /// How per-trajectory streams derive from the master seed.
    pub stream_rule: &'static str,
}

impl RngMetadata {
    pub fn new(master_seed: u64) -> Self {
        Self {
            algorithm: beables_core::rng::RNG_ALGORITHM,
            master_seed,
            stream_rule: "stream 0 = ensemble statistics, stream 1+k = trajectory k, \
                          stream 2^63 = preset states",
        }
    }
}

/// One numeric verification (verify engine and engine-level invariants).
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    /// `value` must not exceed `tolerance`.
    pub fn bounded(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

/// A labelled set of checkpoint comparisons.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSection {
    pub name: String,
    pub labels: Vec<String>,
    pub checkpoints: Vec<DistributionComparison>,
    /// Absolute TV bound in force, if any (otherwise the multinomial band
    /// decides).
    pub tv_tolerance: Option<f64>,
    pub pass: bool,
}

impl ComparisonSection {
    pub fn new(
        name: impl Into<String>,
        labels: Vec<String>,
        checkpoints: Vec<DistributionComparison>,
        tv_tolerance: Option<f64>,
    ) -> Self {
        let pass = checkpoints.iter().all(|c| match tv_tolerance {
            Some(tol) => c.tv <= tol,
            None => c.pass,
        });
        Self {
            name: name.into(),
            labels,
            checkpoints,
            tv_tolerance,
            pass,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub engine: String,
    pub config_text: String,
    pub rng: RngMetadata,
    pub ensemble_size: usize,
    pub comparisons: Vec<ComparisonSection>,
    pub checks: Vec<CheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonfactorizability: Option<NonfactorizabilityReport>,
    /// Physics-abort diagnostic, when the run did not complete.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort: Option<String>,
    pub artifacts: Vec<String>,
    pub passed: bool,
    #[serde(skip)]
    pub timing: Duration,
}

impl RunReport {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            engine: config.engine.to_string(),
            config_text: config.to_canonical_string(),
            rng: RngMetadata::new(config.seed),
            ensemble_size: 0,
            comparisons: Vec::new(),
            checks: Vec::new(),
            nonfactorizability: None,
            abort: None,
            artifacts: Vec::new(),
            passed: true,
            timing: Duration::ZERO,
        }
    }

    pub fn finalize(&mut self) {
        self.passed =
            self.comparisons.iter().all(|c| c.pass) && self.checks.iter().all(|c| c.pass);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// One line per check and per checkpoint, for the console.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        for section in &self.comparisons {
            for cp in &section.checkpoints {
                let verdict = match section.tv_tolerance {
                    Some(tol) => cp.tv <= tol,
                    None => cp.pass,
                };
                lines.push(format!(
                    "{} t={:.4}: tv={:.5} band95={:.5}{} .. {}",
                    section.name,
                    cp.time,
                    cp.tv,
                    cp.band,
                    section
                        .tv_tolerance
                        .map(|t| format!(" tol={t}"))
                        .unwrap_or_default(),
                    if verdict { "pass" } else { "FAIL" }
                ));
            }
        }
        for check in &self.checks {
            lines.push(format!(
                "{}: value={:.3e} tol={:.3e} .. {}",
                check.name,
                check.value,
                check.tolerance,
                if check.pass { "pass" } else { "FAIL" }
            ));
        }
        lines
    }
}
