//! Stochastic beable dynamics: jump rates between density configurations and
//! the continuous-time jump process they drive.
//!
//! With `P_n(t) = sum_q |<nq|Psi(t)>|^2`, the rate from configuration `m` to
//! `n` is
//!
//!   T_nm = J_nm / D_m                 if J_nm > 0, else 0,
//!   J_nm = 2 sum_{qp} Re[<Psi|nq><nq|-iH|mp><mp|Psi>],
//!   D_m  = sum_q |<mq|Psi>|^2,
//!
//! and `J` is antisymmetric, so `sum_m [T_nm P_m - T_mn P_n] = sum_m J_nm`
//! equals `dP_n/dt`: an ensemble distributed as `P_n(t0)` stays distributed
//! as `P_n(t)`. That master-equation identity is the quantitative core and
//! is what the oracle tests check.
//!
//! Sampling uses per-step thinning with an adaptive control step
//! (exit rate times step <= [`RATE_DT_CAP`]), the pilot state advanced in
//! lockstep through a spectral propagator. Rates diverge where `D_m -> 0`
//! (nodes); we abort and report rather than regularize, since silent
//! regularization would bias the equivariance checks.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{marginal_distribution, HamiltonianMatrix, PilotState, SpectralPropagator};
use crate::error::{Error, Result};
use crate::lattice::DensityConfiguration;
use crate::rng::{ensemble_rng, trajectory_rng};
use crate::stats::{sample_categorical, BandOptions, DistributionComparison};

/// Default floor on the source-configuration weight `D_m`.
pub const MARGINAL_EPSILON: f64 = 1e-12;

/// Cap on (total exit rate) x (control step) for the thinning sampler.
pub const RATE_DT_CAP: f64 = 0.1;

/// Smallest admissible control step before the sampler gives up.
pub const DT_FLOOR: f64 = 1e-9;

/// One positive transition rate out of the source configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpRate {
    /// Configuration index of the target in the sector ordering.
    pub to_index: usize,
    pub to: DensityConfiguration,
    /// `T_nm >= 0`.
    pub rate: f64,
}

/// All positive jump rates out of one configuration at one time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpRateTable {
    pub time: f64,
    pub source: DensityConfiguration,
    /// Source weight `D_m`.
    pub source_weight: f64,
    pub rates: Vec<JumpRate>,
}

impl JumpRateTable {
    pub fn total_exit_rate(&self) -> f64 {
        self.rates.iter().map(|r| r.rate).sum()
    }
}

/// Antisymmetric current `J_nm` from configuration `m_idx`, indexed by
/// target configuration; only classes reached by one `H` element appear.
fn jump_currents(
    state_amps: &DVector<Complex64>,
    h: &HamiltonianMatrix,
    m_idx: usize,
) -> Vec<(usize, f64)> {
    let sector = h.sector();
    // y = H (P_m Psi): only the columns of the source class contribute.
    let mut y: Vec<(usize, Complex64)> = Vec::new();
    for &col in sector.class(m_idx) {
        let a = state_amps[col];
        if a == Complex64::ZERO {
            continue;
        }
        for &(row, hval) in h.column(col) {
            y.push((row, hval * a));
        }
    }
    // J_nm = 2 sum_{r in class(n)} Im[conj(psi_r) y_r].
    let mut currents: Vec<(usize, f64)> = Vec::new();
    for (row, yv) in y {
        let n_idx = sector.config_of_state(row);
        if n_idx == m_idx {
            continue;
        }
        let j = 2.0 * (state_amps[row].conj() * yv).im;
        match currents.iter_mut().find(|(ci, _)| *ci == n_idx) {
            Some((_, acc)) => *acc += j,
            None => currents.push((n_idx, j)),
        }
    }
    currents.sort_by_key(|&(ci, _)| ci);
    currents
}

fn rates_from_amplitudes(
    amps: &DVector<Complex64>,
    h: &HamiltonianMatrix,
    m_idx: usize,
    time: f64,
    epsilon: f64,
) -> Result<JumpRateTable> {
    let sector = h.sector();
    let weight: f64 = sector.class(m_idx).iter().map(|&i| amps[i].norm_sqr()).sum();
    if weight < epsilon {
        return Err(Error::NodeVisit {
            time,
            weight,
            epsilon,
        });
    }
    let rates = jump_currents(amps, h, m_idx)
        .into_iter()
        .filter(|&(_, j)| j > 0.0)
        .map(|(ci, j)| JumpRate {
            to_index: ci,
            to: sector.configurations[ci].clone(),
            rate: j / weight,
        })
        .collect();
    Ok(JumpRateTable {
        time,
        source: sector.configurations[m_idx].clone(),
        source_weight: weight,
        rates,
    })
}

/// Jump rates out of configuration `source` for the given pilot state.
pub fn jump_rates(
    state: &PilotState,
    h: &HamiltonianMatrix,
    source: &DensityConfiguration,
) -> Result<JumpRateTable> {
    if !std::sync::Arc::ptr_eq(state.sector(), h.sector()) {
        return Err(Error::SectorMismatch);
    }
    let m_idx = h
        .sector()
        .config_index(source)
        .ok_or_else(|| Error::UnknownLabel(source.to_string()))?;
    rates_from_amplitudes(state.amplitudes(), h, m_idx, state.time, MARGINAL_EPSILON)
}

/// Net probability flow into every configuration,
/// `sum_m [T_nm P_m - T_mn P_n]`, from the rate tables of all sources.
/// Equals `dP_n/dt` when the rates come from the pilot state.
pub fn master_equation_flow(state: &PilotState, h: &HamiltonianMatrix) -> Result<Vec<f64>> {
    let sector = state.sector();
    let probs = marginal_distribution(state);
    let mut flow = vec![0.0; sector.config_count()];
    for m_idx in 0..sector.config_count() {
        if probs[m_idx] == 0.0 {
            continue;
        }
        let table = rates_from_amplitudes(state.amplitudes(), h, m_idx, state.time, 0.0)?;
        for r in &table.rates {
            flow[r.to_index] += r.rate * probs[m_idx];
            flow[m_idx] -= r.rate * probs[m_idx];
        }
    }
    Ok(flow)
}

/// One configuration change along a trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub from: DensityConfiguration,
    pub to: DensityConfiguration,
}

/// A sampled beable trajectory: piecewise-constant configuration between
/// jumps, recorded at the requested sample times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeableTrajectory {
    /// Sample times, increasing.
    pub times: Vec<f64>,
    /// Configuration at each sample time.
    pub configs: Vec<DensityConfiguration>,
    /// Configuration index (sector ordering) at each sample time.
    pub config_indices: Vec<usize>,
    pub jumps: Vec<JumpEvent>,
    /// Master seed the trajectory stream was derived from.
    pub seed: u64,
    /// Stream index within the master seed.
    pub stream: u64,
}

struct SamplerSetup<'a> {
    prop: &'a SpectralPropagator,
    h: &'a HamiltonianMatrix,
    dt_ctrl: f64,
    epsilon: f64,
}

/// Reusable buffers for the sampler's inner loop.
struct SamplerWorkspace {
    phased: DVector<Complex64>,
    amps: DVector<Complex64>,
    /// Net current into each configuration from the source.
    currents: Vec<f64>,
}

impl SamplerWorkspace {
    fn new(dim: usize, configs: usize) -> Self {
        Self {
            phased: DVector::zeros(dim),
            amps: DVector::zeros(dim),
            currents: vec![0.0; configs],
        }
    }
}

fn sample_with_rng<R: Rng>(
    setup: &SamplerSetup,
    start_idx: usize,
    t0: f64,
    sample_times: &[f64],
    rng: &mut R,
    seed: u64,
    stream: u64,
) -> Result<BeableTrajectory> {
    let sector = setup.h.sector();
    let mut ws = SamplerWorkspace::new(sector.dim(), sector.config_count());
    let mut traj = BeableTrajectory {
        times: Vec::with_capacity(sample_times.len() + 1),
        configs: Vec::with_capacity(sample_times.len() + 1),
        config_indices: Vec::with_capacity(sample_times.len() + 1),
        jumps: Vec::new(),
        seed,
        stream,
    };
    let record = |t: f64, idx: usize, traj: &mut BeableTrajectory| {
        traj.times.push(t);
        traj.configs.push(sector.configurations[idx].clone());
        traj.config_indices.push(idx);
    };

    let mut t = t0;
    let mut cfg = start_idx;
    record(t, cfg, &mut traj);
    for &boundary in sample_times {
        while boundary - t > 1e-12 {
            setup.prop.amplitudes_into(t, &mut ws.phased, &mut ws.amps);
            // Source weight and per-target currents, positive part only.
            let weight: f64 = sector
                .class(cfg)
                .iter()
                .map(|&i| ws.amps[i].norm_sqr())
                .sum();
            if weight < setup.epsilon {
                return Err(Error::NodeVisit {
                    time: t,
                    weight,
                    epsilon: setup.epsilon,
                });
            }
            ws.currents.fill(0.0);
            for &col in sector.class(cfg) {
                let a = ws.amps[col];
                if a == Complex64::ZERO {
                    continue;
                }
                for &(row, hval) in setup.h.column(col) {
                    ws.currents[sector.config_of_state(row)] +=
                        2.0 * (ws.amps[row].conj() * hval * a).im;
                }
            }
            ws.currents[cfg] = 0.0;
            let exit: f64 = ws.currents.iter().filter(|&&j| j > 0.0).sum::<f64>() / weight;
            let mut dt = setup.dt_ctrl.min(boundary - t);
            if exit > 0.0 {
                dt = dt.min(RATE_DT_CAP / exit);
            }
            if dt < DT_FLOOR {
                return Err(Error::StepFloor { time: t, rate: exit });
            }
            let u: f64 = rng.random();
            if u < exit * dt {
                // Conditioned on a jump, the target is proportional to its
                // rate; reuse the same uniform draw.
                let mut acc = 0.0;
                for (ci, &j) in ws.currents.iter().enumerate() {
                    if j <= 0.0 {
                        continue;
                    }
                    acc += j / weight * dt;
                    if u < acc {
                        traj.jumps.push(JumpEvent {
                            time: t + dt,
                            from: sector.configurations[cfg].clone(),
                            to: sector.configurations[ci].clone(),
                        });
                        cfg = ci;
                        break;
                    }
                }
            }
            t += dt;
        }
        t = boundary;
        record(t, cfg, &mut traj);
    }
    Ok(traj)
}

/// Sample one trajectory of the jump process from `n0` up to `t_max`,
/// recording the start and end configurations. Deterministic given `seed`.
pub fn sample_trajectory(
    psi0: &PilotState,
    n0: &DensityConfiguration,
    h: &HamiltonianMatrix,
    t_max: f64,
    dt_ctrl: f64,
    seed: u64,
) -> Result<BeableTrajectory> {
    sample_trajectory_at(psi0, n0, h, &[t_max], dt_ctrl, seed)
}

/// Same as [`sample_trajectory`] but recording at each of the given sample
/// times (increasing, all past `psi0.time`).
pub fn sample_trajectory_at(
    psi0: &PilotState,
    n0: &DensityConfiguration,
    h: &HamiltonianMatrix,
    sample_times: &[f64],
    dt_ctrl: f64,
    seed: u64,
) -> Result<BeableTrajectory> {
    let sector = h.sector();
    let start_idx = sector
        .config_index(n0)
        .ok_or_else(|| Error::UnknownLabel(n0.to_string()))?;
    let probs = marginal_distribution(psi0);
    if probs[start_idx] < MARGINAL_EPSILON {
        return Err(Error::NodeVisit {
            time: psi0.time,
            weight: probs[start_idx],
            epsilon: MARGINAL_EPSILON,
        });
    }
    let prop = SpectralPropagator::new(psi0, h)?;
    let setup = SamplerSetup {
        prop: &prop,
        h,
        dt_ctrl,
        epsilon: MARGINAL_EPSILON,
    };
    let mut rng = trajectory_rng(seed, 0);
    sample_with_rng(&setup, start_idx, psi0.time, sample_times, &mut rng, seed, 1)
}

/// Ensemble controls for [`run_ensemble`].
#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    pub size: usize,
    pub master_seed: u64,
    pub dt_ctrl: f64,
    /// Checkpoint times, increasing, all past the initial time.
    pub checkpoints: Vec<f64>,
}

/// Run `size` independent trajectories with initial configurations drawn
/// from the marginal of `psi0`. Trajectory `k` uses RNG stream `1 + k` of
/// the master seed, so the result is bit-identical however the ensemble is
/// scheduled across threads.
pub fn run_ensemble(
    psi0: &PilotState,
    h: &HamiltonianMatrix,
    opts: &EnsembleOptions,
) -> Result<Vec<BeableTrajectory>> {
    if opts.size == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let probs = marginal_distribution(psi0);
    let prop = SpectralPropagator::new(psi0, h)?;
    let setup = SamplerSetup {
        prop: &prop,
        h,
        dt_ctrl: opts.dt_ctrl,
        epsilon: MARGINAL_EPSILON,
    };
    let results: Vec<Result<BeableTrajectory>> = (0..opts.size)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(opts.master_seed, k as u64);
            let start_idx = sample_categorical(&probs, &mut rng);
            sample_with_rng(
                &setup,
                start_idx,
                psi0.time,
                &opts.checkpoints,
                &mut rng,
                opts.master_seed,
                1 + k as u64,
            )
        })
        .collect();
    // Scan in index order so a failure is reported deterministically.
    results.into_iter().collect()
}

/// Equivariance comparison report over checkpoint times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub ensemble_size: usize,
    /// Configuration labels in sector order.
    pub labels: Vec<String>,
    pub checkpoints: Vec<DistributionComparison>,
}

impl EquivarianceReport {
    pub fn all_pass(&self) -> bool {
        self.checkpoints.iter().all(|c| c.pass)
    }

    pub fn max_tv(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.tv).fold(0.0, f64::max)
    }
}

/// Compare the empirical configuration distribution of the ensemble against
/// the pilot-state marginal at each checkpoint time.
pub fn equivariance_report(
    ensemble: &[BeableTrajectory],
    psi0: &PilotState,
    h: &HamiltonianMatrix,
    checkpoints: &[f64],
    band: &BandOptions,
) -> Result<EquivarianceReport> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let sector = h.sector();
    let mut rng = ensemble_rng(band.seed);
    let mut out = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let mut counts = vec![0u64; sector.config_count()];
        for traj in ensemble {
            let pos = traj
                .times
                .iter()
                .position(|&ti| (ti - t).abs() < 1e-9)
                .ok_or(Error::MissingCheckpoint(t))?;
            counts[traj.config_indices[pos]] += 1;
        }
        let target = marginal_distribution(&crate::dynamics::evolve(psi0, h, t - psi0.time)?);
        out.push(DistributionComparison::from_counts(
            t,
            counts,
            target,
            band.bootstrap_samples,
            band.quantile,
            &mut rng,
        )?);
    }
    Ok(EquivarianceReport {
        ensemble_size: ensemble.len(),
        labels: sector.configurations.iter().map(|c| c.to_string()).collect(),
        checkpoints: out,
    })
}
