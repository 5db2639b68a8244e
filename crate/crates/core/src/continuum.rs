//! Deterministic pilot-wave dynamics for the 1+1D Dirac field in a periodic
//! box.
//!
//! Plane-wave modes `p_k = 2 pi k / ell`, `|k| <= cutoff`, carry two
//! branches: `+E_p` with spinor `u(p)` and `-E_p` with spinor `v(-p)`, both
//! eigenvectors of `alpha p + beta m` (`alpha = sigma_1`, `beta = sigma_3`)
//! normalized covariantly, `u^dag u = v^dag v = E/m`. A one- or two-quantum
//! state is a set of mode coefficients; time evolution is exact phases
//! `e^{-i eps t}` per mode, so norm and antisymmetry are conserved to
//! rounding error.
//!
//! The guidance law moves the particle configuration `X(t)` with velocity
//! `V_i = j_i / rho` where `rho` is the spinor-summed density and `j_i` the
//! alpha-contraction on slot `i`. Trajectories integrate this with classical
//! RK4 and a node guard: the law is singular where `rho` vanishes, and we
//! abort rather than regularize.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::DensityConfiguration;
use crate::rng::{ensemble_rng, trajectory_rng};
use crate::stats::DistributionComparison;

/// Density floor for the velocity law.
pub const NODE_EPSILON: f64 = 1e-10;

/// Time step of the finite-difference `d rho / dt` in the continuity check.
pub const TIME_FD_STEP: f64 = 1e-5;

/// Singular-value ratio above which a gridded current is called
/// non-factorizable (a factorizable current is rank one).
pub const RANK_RATIO_THRESHOLD: f64 = 1e-6;

/// Maximum step halvings before a node aborts a trajectory.
const MAX_HALVINGS: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnergyBranch {
    /// Energy `+E_p`, spinor `u(p)`.
    Positive,
    /// Energy `-E_p`, spinor `v(-p)`.
    Negative,
}

/// One plane-wave mode: integer wavenumber and energy branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub k: i32,
    pub branch: EnergyBranch,
}

impl Mode {
    pub fn positive(k: i32) -> Self {
        Mode {
            k,
            branch: EnergyBranch::Positive,
        }
    }

    pub fn negative(k: i32) -> Self {
        Mode {
            k,
            branch: EnergyBranch::Negative,
        }
    }
}

/// Plane-wave mode basis of the periodic box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeBasis {
    /// Box length `ell`.
    pub box_length: f64,
    /// Momentum cutoff: wavenumbers `k` with `|k| <= cutoff`.
    pub cutoff: i32,
    /// Mass `m > 0` (the covariant normalization divides by `m`).
    pub mass: f64,
}

impl ModeBasis {
    pub fn new(box_length: f64, cutoff: i32, mass: f64) -> Result<Self> {
        if !(box_length > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "box length must be > 0, got {box_length}"
            )));
        }
        if cutoff < 0 {
            return Err(Error::InvalidSpec("cutoff must be >= 0".into()));
        }
        if !(mass > 0.0) {
            return Err(Error::InvalidSpec(format!("mass must be > 0, got {mass}")));
        }
        Ok(Self {
            box_length,
            cutoff,
            mass,
        })
    }

    pub fn momentum(&self, k: i32) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.box_length
    }

    pub fn energy(&self, k: i32) -> f64 {
        let p = self.momentum(k);
        (p * p + self.mass * self.mass).sqrt()
    }

    /// Signed mode energy `eps = +-E_p`.
    pub fn signed_energy(&self, mode: Mode) -> f64 {
        match mode.branch {
            EnergyBranch::Positive => self.energy(mode.k),
            EnergyBranch::Negative => -self.energy(mode.k),
        }
    }

    pub fn contains(&self, mode: Mode) -> bool {
        mode.k.abs() <= self.cutoff
    }

    /// Spinor of the mode: `u(p)` or `v(-p)`, eigenvectors of
    /// `alpha p + beta m` with eigenvalue `+-E`, normalized to `E/m`.
    pub fn spinor(&self, mode: Mode) -> [f64; 2] {
        let p = self.momentum(mode.k);
        let e = self.energy(mode.k);
        let m = self.mass;
        let norm = 1.0 / (2.0 * m * (e + m)).sqrt();
        match mode.branch {
            EnergyBranch::Positive => [(e + m) * norm, p * norm],
            EnergyBranch::Negative => [-p * norm, (e + m) * norm],
        }
    }

    /// Prefactor `sqrt(m / (E_p ell))` of the mode function.
    pub fn field_amplitude(&self, k: i32) -> f64 {
        (self.mass / (self.energy(k) * self.box_length)).sqrt()
    }
}

/// Flattened mode data for fast evaluation.
#[derive(Debug, Clone)]
struct EvalMode {
    mode: Mode,
    p: f64,
    eps: f64,
    /// Spinor times the field amplitude.
    w: [f64; 2],
}

fn eval_mode(basis: &ModeBasis, mode: Mode) -> EvalMode {
    let amp = basis.field_amplitude(mode.k);
    let s = basis.spinor(mode);
    EvalMode {
        mode,
        p: basis.momentum(mode.k),
        eps: basis.signed_energy(mode),
        w: [s[0] * amp, s[1] * amp],
    }
}

#[derive(Debug, Clone)]
enum StateContent {
    One {
        terms: Vec<(EvalMode, Complex64)>,
    },
    Two {
        modes: Vec<EvalMode>,
        /// `(mode index of slot 1, mode index of slot 2, coefficient)`.
        entries: Vec<(u32, u32, Complex64)>,
    },
}

/// A one- or two-quantum Dirac wave function in mode representation, plus
/// the time it refers to. Coefficients are unit-norm in the mode inner
/// product, which by the covariant normalization makes the position-space
/// density integrate to one over ordered configurations.
#[derive(Debug, Clone)]
pub struct ContinuumState {
    basis: Arc<ModeBasis>,
    content: StateContent,
    pub time: f64,
}

fn check_mode(basis: &ModeBasis, mode: Mode) -> Result<()> {
    if basis.contains(mode) {
        Ok(())
    } else {
        Err(Error::UnknownLabel(format!(
            "mode k={} outside cutoff {}",
            mode.k, basis.cutoff
        )))
    }
}

impl ContinuumState {
    /// One-quantum state from mode coefficients; duplicates are merged and
    /// the result normalized.
    pub fn one_quantum(
        basis: Arc<ModeBasis>,
        coeffs: &[(Mode, Complex64)],
        time: f64,
    ) -> Result<Self> {
        let mut merged: Vec<(Mode, Complex64)> = Vec::new();
        for &(mode, c) in coeffs {
            check_mode(&basis, mode)?;
            match merged.iter_mut().find(|(m, _)| *m == mode) {
                Some((_, acc)) => *acc += c,
                None => merged.push((mode, c)),
            }
        }
        merged.retain(|&(_, c)| c != Complex64::ZERO);
        let norm: f64 = merged.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroState);
        }
        let terms = merged
            .into_iter()
            .map(|(m, c)| (eval_mode(&basis, m), c / norm))
            .collect();
        Ok(Self {
            basis,
            content: StateContent::One { terms },
            time,
        })
    }

    /// Antisymmetrized two-mode (Slater) state. Identical modes give the
    /// zero function and are rejected.
    pub fn two_quantum_slater(
        basis: Arc<ModeBasis>,
        m1: Mode,
        m2: Mode,
        time: f64,
    ) -> Result<Self> {
        Self::two_quantum_antisym(basis, &[((m1, m2), Complex64::ONE)], time)
    }

    /// Superposition of antisymmetrized pairs: amplitude `A` on the
    /// unordered pair `{K, M}` contributes `A/sqrt(2) (KM - MK)`. Normalized.
    pub fn two_quantum_antisym(
        basis: Arc<ModeBasis>,
        pairs: &[((Mode, Mode), Complex64)],
        time: f64,
    ) -> Result<Self> {
        let inv = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut raw = Vec::with_capacity(2 * pairs.len());
        for &((a, b), c) in pairs {
            raw.push((a, b, c * inv));
            raw.push((b, a, -c * inv));
        }
        let state = Self::two_quantum_unnormalized(basis, &raw, time)?;
        let norm = state.coefficient_norm();
        if norm < 1e-15 {
            return Err(Error::ZeroState);
        }
        Ok(state.scaled(Complex64::new(1.0 / norm, 0.0)))
    }

    /// Product of two one-body profiles, `C_KM = f_K g_M`, normalized but
    /// not antisymmetrized. A distinguishable-particle reference state for
    /// factorization tests, not a physical two-fermion state.
    pub fn two_quantum_product(
        basis: Arc<ModeBasis>,
        f: &[(Mode, Complex64)],
        g: &[(Mode, Complex64)],
        time: f64,
    ) -> Result<Self> {
        let nf: f64 = f.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt();
        let ng: f64 = g.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt();
        if nf == 0.0 || ng == 0.0 {
            return Err(Error::ZeroState);
        }
        let mut raw = Vec::with_capacity(f.len() * g.len());
        for &(mf, cf) in f {
            for &(mg, cg) in g {
                raw.push((mf, mg, cf * cg / (nf * ng)));
            }
        }
        Self::two_quantum_unnormalized(basis, &raw, time)
    }

    /// Raw two-quantum coefficients, duplicates merged, no normalization.
    /// Exists so degenerate constructions (e.g. antisymmetrizing identical
    /// modes into the zero function) can be represented in tests.
    pub fn two_quantum_unnormalized(
        basis: Arc<ModeBasis>,
        entries: &[(Mode, Mode, Complex64)],
        time: f64,
    ) -> Result<Self> {
        let mut modes: Vec<Mode> = Vec::new();
        let index = |m: Mode, modes: &mut Vec<Mode>| -> u32 {
            match modes.iter().position(|&x| x == m) {
                Some(i) => i as u32,
                None => {
                    modes.push(m);
                    (modes.len() - 1) as u32
                }
            }
        };
        let mut merged: Vec<(u32, u32, Complex64)> = Vec::new();
        for &(a, b, c) in entries {
            check_mode(&basis, a)?;
            check_mode(&basis, b)?;
            let ia = index(a, &mut modes);
            let ib = index(b, &mut modes);
            match merged.iter_mut().find(|(x, y, _)| *x == ia && *y == ib) {
                Some((_, _, acc)) => *acc += c,
                None => merged.push((ia, ib, c)),
            }
        }
        let modes = modes.into_iter().map(|m| eval_mode(&basis, m)).collect();
        Ok(Self {
            basis,
            content: StateContent::Two {
                modes,
                entries: merged,
            },
            time,
        })
    }

    pub fn basis(&self) -> &Arc<ModeBasis> {
        &self.basis
    }

    /// Number of quanta (1 or 2).
    pub fn omega(&self) -> usize {
        match &self.content {
            StateContent::One { .. } => 1,
            StateContent::Two { .. } => 2,
        }
    }

    /// l2 norm of the mode coefficients (= sqrt of the density integral).
    pub fn coefficient_norm(&self) -> f64 {
        match &self.content {
            StateContent::One { terms } => {
                terms.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt()
            }
            StateContent::Two { entries, .. } => entries
                .iter()
                .map(|(_, _, c)| c.norm_sqr())
                .sum::<f64>()
                .sqrt(),
        }
    }

    fn scaled(&self, f: Complex64) -> Self {
        let content = match &self.content {
            StateContent::One { terms } => StateContent::One {
                terms: terms.iter().map(|(m, c)| (m.clone(), c * f)).collect(),
            },
            StateContent::Two { modes, entries } => StateContent::Two {
                modes: modes.clone(),
                entries: entries.iter().map(|&(a, b, c)| (a, b, c * f)).collect(),
            },
        };
        Self {
            basis: self.basis.clone(),
            content,
            time: self.time,
        }
    }

    /// The same state labelled at another time: mode coefficients pick up
    /// phases `e^{-i eps (t - time)}`. Exact evolution.
    pub fn at_time(&self, t: f64) -> Self {
        let dt = t - self.time;
        let content = match &self.content {
            StateContent::One { terms } => StateContent::One {
                terms: terms
                    .iter()
                    .map(|(m, c)| (m.clone(), c * Complex64::cis(-m.eps * dt)))
                    .collect(),
            },
            StateContent::Two { modes, entries } => StateContent::Two {
                modes: modes.clone(),
                entries: entries
                    .iter()
                    .map(|&(a, b, c)| {
                        let eps = modes[a as usize].eps + modes[b as usize].eps;
                        (a, b, c * Complex64::cis(-eps * dt))
                    })
                    .collect(),
            },
        };
        Self {
            basis: self.basis.clone(),
            content,
            time: t,
        }
    }

    /// One-quantum coefficients `(mode, amplitude)`.
    pub fn coefficients_one(&self) -> Option<Vec<(Mode, Complex64)>> {
        match &self.content {
            StateContent::One { terms } => {
                Some(terms.iter().map(|(m, c)| (m.mode, *c)).collect())
            }
            _ => None,
        }
    }

    /// Two-quantum coefficients `(mode1, mode2, amplitude)`.
    pub fn coefficients_two(&self) -> Option<Vec<(Mode, Mode, Complex64)>> {
        match &self.content {
            StateContent::Two { modes, entries } => Some(
                entries
                    .iter()
                    .map(|&(a, b, c)| (modes[a as usize].mode, modes[b as usize].mode, c))
                    .collect(),
            ),
            _ => None,
        }
    }
}

/// Spinor value(s) of the wave function at a configuration.
#[derive(Debug, Clone)]
pub enum SpinorTensor {
    /// `Psi_a`, index `a`.
    One([Complex64; 2]),
    /// `Psi_{a1 a2}`, indices `[a1][a2]`.
    Two([[Complex64; 2]; 2]),
}

#[inline]
fn psi_one_at(state: &ContinuumState, t: f64, x: f64) -> [Complex64; 2] {
    let dt = t - state.time;
    let mut out = [Complex64::ZERO; 2];
    if let StateContent::One { terms } = &state.content {
        for (m, c) in terms {
            let ph = c * Complex64::cis(m.p * x - m.eps * dt);
            out[0] += ph * m.w[0];
            out[1] += ph * m.w[1];
        }
    }
    out
}

#[inline]
fn psi_two_at(state: &ContinuumState, t: f64, x1: f64, x2: f64) -> [[Complex64; 2]; 2] {
    let dt = t - state.time;
    let mut out = [[Complex64::ZERO; 2]; 2];
    if let StateContent::Two { modes, entries } = &state.content {
        // Scalar plane-wave factors per mode and slot.
        let base: Vec<(Complex64, Complex64)> = modes
            .iter()
            .map(|m| {
                (
                    Complex64::cis(m.p * x1 - m.eps * dt),
                    Complex64::cis(m.p * x2 - m.eps * dt),
                )
            })
            .collect();
        for &(a, b, c) in entries {
            let ma = &modes[a as usize];
            let mb = &modes[b as usize];
            let f = c * base[a as usize].0 * base[b as usize].1;
            for a1 in 0..2 {
                for a2 in 0..2 {
                    out[a1][a2] += f * ma.w[a1] * mb.w[a2];
                }
            }
        }
    }
    out
}

/// Evaluate the spinor wave function at configuration `x` (length = omega),
/// at the state's own time.
pub fn evaluate_wavefunction(state: &ContinuumState, x: &[f64]) -> Result<SpinorTensor> {
    match (state.omega(), x.len()) {
        (1, 1) => Ok(SpinorTensor::One(psi_one_at(state, state.time, x[0]))),
        (2, 2) => Ok(SpinorTensor::Two(psi_two_at(
            state, state.time, x[0], x[1],
        ))),
        (w, n) => Err(Error::WrongQuantumCount {
            expected: w,
            found: n,
        }),
    }
}

/// Density and configuration-space current at absolute time `t`.
#[inline]
fn kinematics_at(state: &ContinuumState, t: f64, x: &[f64]) -> (f64, [f64; 2]) {
    match state.omega() {
        1 => {
            let psi = psi_one_at(state, t, x[0]);
            let rho = psi[0].norm_sqr() + psi[1].norm_sqr();
            let j = 2.0 * (psi[0].conj() * psi[1]).re;
            (rho, [j, 0.0])
        }
        _ => {
            let psi = psi_two_at(state, t, x[0], x[1]);
            let mut rho = 0.0;
            for row in &psi {
                for z in row {
                    rho += z.norm_sqr();
                }
            }
            let mut j1 = 0.0;
            let mut j2 = 0.0;
            for a in 0..2 {
                j1 += 2.0 * (psi[0][a].conj() * psi[1][a]).re;
                j2 += 2.0 * (psi[a][0].conj() * psi[a][1]).re;
            }
            (rho, [j1, j2])
        }
    }
}

/// Probability density `rho = sum_spinors |Psi|^2` at configuration `x`.
pub fn density(state: &ContinuumState, x: &[f64]) -> Result<f64> {
    check_config(state, x)?;
    Ok(kinematics_at(state, state.time, x).0)
}

/// Configuration-space current `(j_1, ..., j_omega)`: the alpha contraction
/// on each slot.
pub fn current(state: &ContinuumState, x: &[f64]) -> Result<Vec<f64>> {
    check_config(state, x)?;
    let (_, j) = kinematics_at(state, state.time, x);
    Ok(j[..state.omega()].to_vec())
}

/// Guidance velocity `V_i = j_i / rho`, guarded by `epsilon` against nodes.
pub fn velocity(state: &ContinuumState, x: &[f64]) -> Result<Vec<f64>> {
    velocity_with_epsilon(state, x, NODE_EPSILON)
}

pub fn velocity_with_epsilon(
    state: &ContinuumState,
    x: &[f64],
    epsilon: f64,
) -> Result<Vec<f64>> {
    check_config(state, x)?;
    let (rho, j) = kinematics_at(state, state.time, x);
    if rho < epsilon {
        return Err(Error::NodeVisit {
            time: state.time,
            weight: rho,
            epsilon,
        });
    }
    Ok(j[..state.omega()].iter().map(|ji| ji / rho).collect())
}

fn check_config(state: &ContinuumState, x: &[f64]) -> Result<()> {
    if x.len() == state.omega() {
        Ok(())
    } else {
        Err(Error::WrongQuantumCount {
            expected: state.omega(),
            found: x.len(),
        })
    }
}

#[inline]
fn velocity_fixed(
    state: &ContinuumState,
    t: f64,
    x: &[f64; 2],
    omega: usize,
    epsilon: f64,
) -> Result<[f64; 2]> {
    let (rho, j) = kinematics_at(state, t, &x[..omega]);
    if rho < epsilon {
        return Err(Error::NodeVisit {
            time: t,
            weight: rho,
            epsilon,
        });
    }
    Ok([j[0] / rho, j[1] / rho])
}

/// One RK4 step of the guidance law; fails on a node at any stage.
fn try_rk4(
    state: &ContinuumState,
    t: f64,
    x: &[f64; 2],
    omega: usize,
    dt: f64,
    epsilon: f64,
) -> Result<[f64; 2]> {
    let half = 0.5 * dt;
    let k1 = velocity_fixed(state, t, x, omega, epsilon)?;
    let x2 = [x[0] + half * k1[0], x[1] + half * k1[1]];
    let k2 = velocity_fixed(state, t + half, &x2, omega, epsilon)?;
    let x3 = [x[0] + half * k2[0], x[1] + half * k2[1]];
    let k3 = velocity_fixed(state, t + half, &x3, omega, epsilon)?;
    let x4 = [x[0] + dt * k3[0], x[1] + dt * k3[1]];
    let k4 = velocity_fixed(state, t + dt, &x4, omega, epsilon)?;
    Ok([
        x[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

/// Advance `x` from `t0` to `t1`, halving the step near nodes.
fn advance(
    state: &ContinuumState,
    t0: f64,
    t1: f64,
    dt_nominal: f64,
    epsilon: f64,
    x: &mut [f64; 2],
    omega: usize,
) -> Result<f64> {
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    while (t1 - t) * dir > 1e-12 {
        let span = (t1 - t).abs();
        let mut h = dir * dt_nominal.min(span);
        let mut halvings = 0;
        loop {
            match try_rk4(state, t, x, omega, h, epsilon) {
                Ok(xn) => {
                    *x = xn;
                    t += h;
                    break;
                }
                Err(e) if halvings < MAX_HALVINGS => {
                    let _ = e;
                    h *= 0.5;
                    halvings += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(t1)
}

fn wrap(x: f64, ell: f64) -> f64 {
    let w = x.rem_euclid(ell);
    if w == ell {
        0.0
    } else {
        w
    }
}

/// A guided-particle trajectory: positions (wrapped into the box) at each
/// recorded time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuumTrajectory {
    pub times: Vec<f64>,
    /// Row per time, `omega` coordinates per row.
    pub positions: Vec<Vec<f64>>,
}

/// Integrate the guidance law from the state's time to `t_max` with fixed
/// step `dt`, recording every step. `node_epsilon` is the density floor.
pub fn integrate_trajectory(
    state: &ContinuumState,
    x0: &[f64],
    t_max: f64,
    dt: f64,
    node_epsilon: f64,
) -> Result<ContinuumTrajectory> {
    check_config(state, x0)?;
    let omega = state.omega();
    let ell = state.basis.box_length;
    let mut x = [0.0; 2];
    x[..omega].copy_from_slice(x0);
    let mut traj = ContinuumTrajectory {
        times: vec![state.time],
        positions: vec![x0.iter().map(|&xi| wrap(xi, ell)).collect()],
    };
    let steps = ((t_max - state.time).abs() / dt).ceil() as usize;
    let mut t = state.time;
    for i in 1..=steps {
        let target = if i == steps {
            t_max
        } else {
            state.time + (t_max - state.time) * i as f64 / steps as f64
        };
        t = advance(state, t, target, dt, node_epsilon, &mut x, omega)?;
        traj.times.push(t);
        traj.positions
            .push(x[..omega].iter().map(|&xi| wrap(xi, ell)).collect());
    }
    Ok(traj)
}

/// Integrate and record positions only at the given times (monotone in
/// either direction from the state's time).
pub fn integrate_to(
    state: &ContinuumState,
    x0: &[f64],
    times: &[f64],
    dt: f64,
    node_epsilon: f64,
) -> Result<Vec<Vec<f64>>> {
    check_config(state, x0)?;
    let omega = state.omega();
    let ell = state.basis.box_length;
    let mut x = [0.0; 2];
    x[..omega].copy_from_slice(x0);
    let mut t = state.time;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        t = advance(state, t, target, dt, node_epsilon, &mut x, omega)?;
        out.push(x[..omega].iter().map(|&xi| wrap(xi, ell)).collect());
    }
    Ok(out)
}

/// Max-norm residual of the continuity equation
/// `d rho/dt + div J = 0` on a periodic grid: the time derivative by central
/// finite difference over [`TIME_FD_STEP`] (mode phases are exact), the
/// divergence by second-order central differences in each coordinate.
pub fn continuity_residual(state: &ContinuumState, grid: usize) -> Result<f64> {
    if grid < 4 {
        return Err(Error::InvalidSpec("grid must have >= 4 points".into()));
    }
    let ell = state.basis.box_length;
    let h = ell / grid as f64;
    let t = state.time;
    let delta = TIME_FD_STEP;
    let xs: Vec<f64> = (0..grid).map(|i| i as f64 * h).collect();
    let mut residual: f64 = 0.0;
    match state.omega() {
        1 => {
            let rho_p: Vec<f64> = xs
                .iter()
                .map(|&x| kinematics_at(state, t + delta, &[x]).0)
                .collect();
            let rho_m: Vec<f64> = xs
                .iter()
                .map(|&x| kinematics_at(state, t - delta, &[x]).0)
                .collect();
            let j: Vec<f64> = xs
                .iter()
                .map(|&x| kinematics_at(state, t, &[x]).1[0])
                .collect();
            for i in 0..grid {
                let drho = (rho_p[i] - rho_m[i]) / (2.0 * delta);
                let divj = (j[(i + 1) % grid] - j[(i + grid - 1) % grid]) / (2.0 * h);
                residual = residual.max((drho + divj).abs());
            }
        }
        _ => {
            let g = grid;
            let mut rho_p = vec![0.0; g * g];
            let mut rho_m = vec![0.0; g * g];
            let mut j1 = vec![0.0; g * g];
            let mut j2 = vec![0.0; g * g];
            for i1 in 0..g {
                for i2 in 0..g {
                    let xc = [xs[i1], xs[i2]];
                    rho_p[i1 * g + i2] = kinematics_at(state, t + delta, &xc).0;
                    rho_m[i1 * g + i2] = kinematics_at(state, t - delta, &xc).0;
                    let (_, j) = kinematics_at(state, t, &xc);
                    j1[i1 * g + i2] = j[0];
                    j2[i1 * g + i2] = j[1];
                }
            }
            for i1 in 0..g {
                for i2 in 0..g {
                    let drho = (rho_p[i1 * g + i2] - rho_m[i1 * g + i2]) / (2.0 * delta);
                    let d1 = (j1[(i1 + 1) % g * g + i2] - j1[(i1 + g - 1) % g * g + i2])
                        / (2.0 * h);
                    let d2 = (j2[i1 * g + (i2 + 1) % g] - j2[i1 * g + (i2 + g - 1) % g])
                        / (2.0 * h);
                    residual = residual.max((drho + d1 + d2).abs());
                }
            }
        }
    }
    Ok(residual)
}

/// Uniform boxes coarse-graining the box `[0, ell)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrid {
    pub box_length: f64,
    pub boxes: usize,
}

impl CoarseGrid {
    pub fn new(box_length: f64, boxes: usize) -> Result<Self> {
        if !(box_length > 0.0) || boxes == 0 {
            return Err(Error::InvalidSpec(
                "coarse grid needs positive length and box count".into(),
            ));
        }
        Ok(Self { box_length, boxes })
    }

    pub fn box_width(&self) -> f64 {
        self.box_length / self.boxes as f64
    }

    /// Left-closed boxes `[l w, (l+1) w)`: a position exactly at a boundary
    /// belongs to the box on its right.
    pub fn box_of(&self, x: f64) -> usize {
        let xw = wrap(x, self.box_length);
        ((xw / self.box_width()) as usize).min(self.boxes - 1)
    }
}

/// Count the particles of a configuration per coarse box.
pub fn coarse_grain(x: &[f64], grid: &CoarseGrid) -> DensityConfiguration {
    let mut counts = vec![0u8; grid.boxes];
    for &xi in x {
        counts[grid.box_of(xi)] += 1;
    }
    DensityConfiguration(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorizationVerdict {
    Factorizable,
    NonFactorizable,
    /// The gridded current vanishes identically.
    Indeterminate,
}

/// Singular-value analysis of the gridded slot-1 current of a two-quantum
/// state. A current of the form `j_A(x1) j_B(x2)` is a rank-one grid matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonfactorizabilityReport {
    pub grid: usize,
    pub singular_values: Vec<f64>,
    /// `sigma_2 / sigma_1`, zero for degenerate spectra.
    pub ratio: f64,
    pub verdict: FactorizationVerdict,
}

/// Grid the current `j_1(x1, x2)` on `grid x grid` points and classify its
/// rank: ratio above [`RANK_RATIO_THRESHOLD`] means non-factorizable.
pub fn nonfactorizability_check(
    state: &ContinuumState,
    grid: usize,
) -> Result<NonfactorizabilityReport> {
    if state.omega() != 2 {
        return Err(Error::WrongQuantumCount {
            expected: 2,
            found: state.omega(),
        });
    }
    let ell = state.basis.box_length;
    let h = ell / grid as f64;
    let t = state.time;
    let mut m = DMatrix::<f64>::zeros(grid, grid);
    let mut max_abs: f64 = 0.0;
    for i1 in 0..grid {
        for i2 in 0..grid {
            let (_, j) = kinematics_at(state, t, &[i1 as f64 * h, i2 as f64 * h]);
            m[(i1, i2)] = j[0];
            max_abs = max_abs.max(j[0].abs());
        }
    }
    if max_abs < 1e-14 {
        return Ok(NonfactorizabilityReport {
            grid,
            singular_values: vec![0.0; 2],
            ratio: 0.0,
            verdict: FactorizationVerdict::Indeterminate,
        });
    }
    let svd = m.svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let ratio = if sv[0] > 0.0 { sv[1] / sv[0] } else { 0.0 };
    let verdict = if ratio > RANK_RATIO_THRESHOLD {
        FactorizationVerdict::NonFactorizable
    } else {
        FactorizationVerdict::Factorizable
    };
    sv.truncate(8);
    Ok(NonfactorizabilityReport {
        grid,
        singular_values: sv,
        ratio,
        verdict,
    })
}

/// Box-integrated probabilities of the one-quantum density at time `t`,
/// midpoint quadrature with `oversample` cells per box, normalized.
pub fn box_probabilities_one(
    state: &ContinuumState,
    t: f64,
    boxes: usize,
    oversample: usize,
) -> Result<Vec<f64>> {
    if state.omega() != 1 {
        return Err(Error::WrongQuantumCount {
            expected: 1,
            found: state.omega(),
        });
    }
    let ell = state.basis.box_length;
    let cells = boxes * oversample;
    let h = ell / cells as f64;
    let mut probs = vec![0.0; boxes];
    for c in 0..cells {
        let x = (c as f64 + 0.5) * h;
        probs[c / oversample] += kinematics_at(state, t, &[x]).0 * h;
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// Box-pair probabilities of the two-quantum density at time `t`, row-major
/// `(box of x1) * boxes + (box of x2)`, normalized.
pub fn box_probabilities_two(
    state: &ContinuumState,
    t: f64,
    boxes: usize,
    oversample: usize,
) -> Result<Vec<f64>> {
    if state.omega() != 2 {
        return Err(Error::WrongQuantumCount {
            expected: 2,
            found: state.omega(),
        });
    }
    let ell = state.basis.box_length;
    let cells = boxes * oversample;
    let h = ell / cells as f64;
    let mut probs = vec![0.0; boxes * boxes];
    for c1 in 0..cells {
        let x1 = (c1 as f64 + 0.5) * h;
        for c2 in 0..cells {
            let x2 = (c2 as f64 + 0.5) * h;
            let rho = kinematics_at(state, t, &[x1, x2]).0;
            probs[(c1 / oversample) * boxes + c2 / oversample] += rho * h * h;
        }
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// Inverse-CDF sampler for positions distributed as the state's density at a
/// fixed time, built on a fine cell grid (piecewise-constant density).
#[derive(Debug, Clone)]
pub struct DensitySampler {
    omega: usize,
    ell: f64,
    cells: usize,
    /// Cumulative cell probabilities (flat row-major for omega = 2).
    cdf: Vec<f64>,
}

impl DensitySampler {
    pub fn new(state: &ContinuumState, t: f64, cells: usize) -> Result<Self> {
        let ell = state.basis.box_length;
        let omega = state.omega();
        let h = ell / cells as f64;
        let weights: Vec<f64> = match omega {
            1 => (0..cells)
                .map(|c| kinematics_at(state, t, &[(c as f64 + 0.5) * h]).0)
                .collect(),
            _ => {
                let mut w = Vec::with_capacity(cells * cells);
                for c1 in 0..cells {
                    let x1 = (c1 as f64 + 0.5) * h;
                    for c2 in 0..cells {
                        let x2 = (c2 as f64 + 0.5) * h;
                        w.push(kinematics_at(state, t, &[x1, x2]).0);
                    }
                }
                w
            }
        };
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroState);
        }
        let mut cdf = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w / total;
            cdf.push(acc);
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(Self {
            omega,
            ell,
            cells,
            cdf,
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        let h = self.ell / self.cells as f64;
        match self.omega {
            1 => {
                let frac: f64 = rng.random();
                vec![(idx as f64 + frac) * h]
            }
            _ => {
                let c1 = idx / self.cells;
                let c2 = idx % self.cells;
                let f1: f64 = rng.random();
                let f2: f64 = rng.random();
                vec![(c1 as f64 + f1) * h, (c2 as f64 + f2) * h]
            }
        }
    }
}

/// Controls for [`run_position_ensemble`].
#[derive(Debug, Clone)]
pub struct ContinuumEnsembleOptions {
    pub size: usize,
    pub master_seed: u64,
    pub rk_dt: f64,
    pub node_epsilon: f64,
    /// Checkpoint times, increasing, past the state's time.
    pub checkpoints: Vec<f64>,
    /// Fine cells (per dimension) of the initial-position sampler.
    pub sampler_cells: usize,
}

/// Draw `size` initial configurations from the density at the state's time
/// and integrate each along the guidance law, recording positions at each
/// checkpoint. Trajectory `k` uses RNG stream `1 + k` of the master seed.
pub fn run_position_ensemble(
    state: &ContinuumState,
    opts: &ContinuumEnsembleOptions,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if opts.size == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let sampler = DensitySampler::new(state, state.time, opts.sampler_cells)?;
    let results: Vec<Result<Vec<Vec<f64>>>> = (0..opts.size)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(opts.master_seed, k as u64);
            let x0 = sampler.sample(&mut rng);
            integrate_to(state, &x0, &opts.checkpoints, opts.rk_dt, opts.node_epsilon)
        })
        .collect();
    results.into_iter().collect()
}

/// Compare ensemble position histograms against the box-integrated density
/// at each checkpoint. For omega = 2 the histogram is over ordered box
/// pairs. Returns one comparison per checkpoint plus the box labels.
pub fn position_histogram_comparisons(
    state: &ContinuumState,
    positions: &[Vec<Vec<f64>>],
    checkpoints: &[f64],
    boxes: usize,
    oversample: usize,
    band: &crate::stats::BandOptions,
) -> Result<(Vec<String>, Vec<DistributionComparison>)> {
    if positions.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let grid = CoarseGrid::new(state.basis.box_length, boxes)?;
    let mut rng = ensemble_rng(band.seed);
    let omega = state.omega();
    let labels: Vec<String> = match omega {
        1 => (0..boxes).map(|b| format!("box{b}")).collect(),
        _ => {
            let mut l = Vec::with_capacity(boxes * boxes);
            for b1 in 0..boxes {
                for b2 in 0..boxes {
                    l.push(format!("box{b1}x{b2}"));
                }
            }
            l
        }
    };
    let mut comparisons = Vec::with_capacity(checkpoints.len());
    for (ci, &t) in checkpoints.iter().enumerate() {
        let target = match omega {
            1 => box_probabilities_one(state, t, boxes, oversample)?,
            _ => box_probabilities_two(state, t, boxes, oversample)?,
        };
        let mut counts = vec![0u64; target.len()];
        for traj in positions {
            let x = &traj[ci];
            let idx = match omega {
                1 => grid.box_of(x[0]),
                _ => grid.box_of(x[0]) * boxes + grid.box_of(x[1]),
            };
            counts[idx] += 1;
        }
        comparisons.push(DistributionComparison::from_counts(
            t,
            counts,
            target,
            band.bootstrap_samples,
            band.quantile,
            &mut rng,
        )?);
    }
    Ok((labels, comparisons))
}

/// All box-count configurations of `omega` particles over `boxes` boxes.
pub fn enumerate_box_configurations(boxes: usize, omega: usize) -> Vec<DensityConfiguration> {
    fn rec(counts: &mut Vec<u8>, box_i: usize, left: usize, out: &mut Vec<DensityConfiguration>) {
        if box_i + 1 == counts.len() {
            counts[box_i] = left as u8;
            out.push(DensityConfiguration(counts.clone()));
            counts[box_i] = 0;
            return;
        }
        for take in 0..=left {
            counts[box_i] = take as u8;
            rec(counts, box_i + 1, left - take, out);
            counts[box_i] = 0;
        }
    }
    let mut out = Vec::new();
    let mut counts = vec![0u8; boxes];
    rec(&mut counts, 0, omega, &mut out);
    out.sort();
    out
}

/// Coarse-grain bridge: push the ensemble through [`coarse_grain`] and
/// compare the box-count configuration distribution against the one induced
/// by the box-integrated density. Ties the position ontology to the lattice
/// marginal comparison.
pub fn coarse_grain_comparison(
    state: &ContinuumState,
    positions: &[Vec<Vec<f64>>],
    checkpoints: &[f64],
    grid: &CoarseGrid,
    oversample: usize,
    band: &crate::stats::BandOptions,
) -> Result<(Vec<String>, Vec<DistributionComparison>)> {
    if positions.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let omega = state.omega();
    let configs = enumerate_box_configurations(grid.boxes, omega);
    let labels: Vec<String> = configs.iter().map(|c| c.to_string()).collect();
    let index_of = |c: &DensityConfiguration| configs.binary_search(c).unwrap();
    let mut rng = ensemble_rng(band.seed);
    let mut comparisons = Vec::with_capacity(checkpoints.len());
    for (ci, &t) in checkpoints.iter().enumerate() {
        let mut target = vec![0.0; configs.len()];
        match omega {
            1 => {
                let p = box_probabilities_one(state, t, grid.boxes, oversample)?;
                for (b, &pb) in p.iter().enumerate() {
                    let mut counts = vec![0u8; grid.boxes];
                    counts[b] = 1;
                    target[index_of(&DensityConfiguration(counts))] += pb;
                }
            }
            _ => {
                let p = box_probabilities_two(state, t, grid.boxes, oversample)?;
                for b1 in 0..grid.boxes {
                    for b2 in 0..grid.boxes {
                        let mut counts = vec![0u8; grid.boxes];
                        counts[b1] += 1;
                        counts[b2] += 1;
                        target[index_of(&DensityConfiguration(counts))] +=
                            p[b1 * grid.boxes + b2];
                    }
                }
            }
        }
        let mut counts = vec![0u64; configs.len()];
        for traj in positions {
            counts[index_of(&coarse_grain(&traj[ci], grid))] += 1;
        }
        comparisons.push(DistributionComparison::from_counts(
            t,
            counts,
            target,
            band.bootstrap_samples,
            band.quantile,
            &mut rng,
        )?);
    }
    Ok((labels, comparisons))
}
