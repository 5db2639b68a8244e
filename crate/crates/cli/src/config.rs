//! Plain-text run configuration: one `key = value` per line, `#` comments.
//!
//! The canonical serialization writes every key in a fixed order, so a
//! config echoed into a run directory re-parses to exactly the same run.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    LatticeStochastic,
    ContinuumDeterministic,
    Verify,
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lattice-stochastic" => Ok(Engine::LatticeStochastic),
            "continuum-deterministic" => Ok(Engine::ContinuumDeterministic),
            "verify" => Ok(Engine::Verify),
            other => Err(format!(
                "unknown engine '{other}' (expected lattice-stochastic, \
                 continuum-deterministic or verify)"
            )),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Engine::LatticeStochastic => "lattice-stochastic",
            Engine::ContinuumDeterministic => "continuum-deterministic",
            Engine::Verify => "verify",
        };
        write!(f, "{s}")
    }
}

/// Full run configuration. Lattice and continuum sections are both always
/// present; each engine reads the part it needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub engine: Engine,
    pub seed: u64,
    #[serde(skip)]
    pub out_dir: PathBuf,

    // Lattice model.
    pub sites: usize,
    pub spinor_dim: usize,
    pub mass: f64,
    pub coupling: f64,
    pub spacing: f64,
    pub omega: u32,

    // Continuum model.
    pub box_length: f64,
    pub cutoff: i32,
    pub boxes: usize,
    pub grid: usize,
    pub rk_dt: f64,

    // Shared run controls.
    pub initial_state: String,
    pub ensemble_size: usize,
    pub t0: f64,
    pub t_max: f64,
    pub checkpoints: Vec<f64>,
    pub dt: f64,
    pub trajectory_logs: usize,
    pub bootstrap: usize,
    /// Absolute total-variation bound for the lattice engine; when negative,
    /// the multinomial band alone decides.
    pub tv_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            engine: Engine::Verify,
            seed: 42,
            out_dir: PathBuf::from("out"),
            sites: 2,
            spinor_dim: 2,
            mass: 1.0,
            coupling: 0.0,
            spacing: 1.0,
            omega: 1,
            box_length: 4.0 * std::f64::consts::PI,
            cutoff: 32,
            boxes: 32,
            grid: 1024,
            rk_dt: 1e-3,
            initial_state: "random".into(),
            ensemble_size: 1000,
            t0: 0.0,
            t_max: 1.0,
            checkpoints: vec![1.0],
            dt: 5e-3,
            trajectory_logs: 8,
            bootstrap: 500,
            tv_tolerance: -1.0,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| format!("key '{key}': cannot parse '{value}': {e}"))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, String> {
    value
        .split([',', ' '])
        .filter(|s| !s.is_empty())
        .map(|s| parse_num::<f64>(key, s))
        .collect()
}

impl RunConfig {
    /// Parse the key-value text format. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected 'key = value'", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "engine" => cfg.engine = value.parse()?,
                "seed" => cfg.seed = parse_num(key, value)?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "sites" => cfg.sites = parse_num(key, value)?,
                "spinor_dim" => cfg.spinor_dim = parse_num(key, value)?,
                "mass" => cfg.mass = parse_num(key, value)?,
                "coupling" => cfg.coupling = parse_num(key, value)?,
                "spacing" => cfg.spacing = parse_num(key, value)?,
                "omega" => cfg.omega = parse_num(key, value)?,
                "box_length" => cfg.box_length = parse_num(key, value)?,
                "cutoff" => cfg.cutoff = parse_num(key, value)?,
                "boxes" => cfg.boxes = parse_num(key, value)?,
                "grid" => cfg.grid = parse_num(key, value)?,
                "rk_dt" => cfg.rk_dt = parse_num(key, value)?,
                "initial_state" => cfg.initial_state = value.to_string(),
                "ensemble_size" => cfg.ensemble_size = parse_num(key, value)?,
                "t0" => cfg.t0 = parse_num(key, value)?,
                "t_max" => cfg.t_max = parse_num(key, value)?,
                "checkpoints" => cfg.checkpoints = parse_list(key, value)?,
                "dt" => cfg.dt = parse_num(key, value)?,
                "trajectory_logs" => cfg.trajectory_logs = parse_num(key, value)?,
                "bootstrap" => cfg.bootstrap = parse_num(key, value)?,
                "tv_tolerance" => cfg.tv_tolerance = parse_num(key, value)?,
                other => return Err(format!("line {}: unknown key '{other}'", lineno + 1)),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.t_max < self.t0 {
            return Err("t_max must be >= t0".into());
        }
        for &c in &self.checkpoints {
            if c < self.t0 || c > self.t_max {
                return Err(format!("checkpoint {c} outside [t0, t_max]"));
            }
        }
        if self.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err("checkpoints must be strictly increasing".into());
        }
        if self.engine != Engine::Verify && self.checkpoints.is_empty() {
            return Err("at least one checkpoint is required".into());
        }
        if self.engine != Engine::Verify && self.ensemble_size == 0 {
            return Err("ensemble_size must be >= 1".into());
        }
        if !(self.dt > 0.0) || !(self.rk_dt > 0.0) {
            return Err("dt and rk_dt must be > 0".into());
        }
        if self.bootstrap == 0 {
            return Err("bootstrap must be >= 1".into());
        }
        Ok(())
    }

    /// Canonical text form: fixed key order, round-trips through [`parse`].
    pub fn to_canonical_string(&self) -> String {
        let checkpoints = self
            .checkpoints
            .iter()
            .map(|c| format!("{c}"))
            .collect::<Vec<_>>()
            .join(", ");
        format!(
            "engine = {}\n\
             seed = {}\n\
             out_dir = {}\n\
             sites = {}\n\
             spinor_dim = {}\n\
             mass = {}\n\
             coupling = {}\n\
             spacing = {}\n\
             omega = {}\n\
             box_length = {}\n\
             cutoff = {}\n\
             boxes = {}\n\
             grid = {}\n\
             rk_dt = {}\n\
             initial_state = {}\n\
             ensemble_size = {}\n\
             t0 = {}\n\
             t_max = {}\n\
             checkpoints = {}\n\
             dt = {}\n\
             trajectory_logs = {}\n\
             bootstrap = {}\n\
             tv_tolerance = {}\n",
            self.engine,
            self.seed,
            self.out_dir.display(),
            self.sites,
            self.spinor_dim,
            self.mass,
            self.coupling,
            self.spacing,
            self.omega,
            self.box_length,
            self.cutoff,
            self.boxes,
            self.grid,
            self.rk_dt,
            self.initial_state,
            self.ensemble_size,
            self.t0,
            self.t_max,
            checkpoints,
            self.dt,
            self.trajectory_logs,
            self.bootstrap,
            self.tv_tolerance,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.engine = Engine::LatticeStochastic;
        cfg.sites = 4;
        cfg.omega = 2;
        cfg.checkpoints = vec![0.5, 1.25, 2.0];
        cfg.t_max = 2.0;
        cfg.tv_tolerance = 0.03;
        let text = cfg.to_canonical_string();
        let parsed = RunConfig::parse(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.to_canonical_string(), text);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::parse("nonsense = 3\n").is_err());
        assert!(RunConfig::parse("sites = many\n").is_err());
        assert!(RunConfig::parse("engine = warp\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = RunConfig::parse("# header\n\nsites = 3 # trailing\n").unwrap();
        assert_eq!(cfg.sites, 3);
    }

    #[test]
    fn checkpoints_validated() {
        assert!(RunConfig::parse("engine = lattice-stochastic\ncheckpoints = 0.5, 0.2\n").is_err());
        assert!(RunConfig::parse("engine = lattice-stochastic\ncheckpoints = 0.5, 2.0\n").is_err());
        assert!(
            RunConfig::parse("engine = lattice-stochastic\nensemble_size = 0\n").is_err()
        );
    }
}
