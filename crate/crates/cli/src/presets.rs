//! Named initial states.
//!
//! Presets are `name` or `name(arg1, arg2, ...)`:
//!
//! Lattice engine:
//! - `vacuum`                       empty state (omega = 0 sectors only)
//! - `uniform`                      equal amplitudes over the sector
//! - `random`                       seeded complex-Gaussian state
//! - `basis(i)`                     the i-th sector basis state
//! - `localized(m1, m2, ...)`       creators on the given modes
//!
//! Continuum engine:
//! - `mode(k)` / `mode(k, -1)`      single plane wave (+E, or -E branch)
//! - `standing(k)`                  equal +k/-k superposition, zero current
//! - `gaussian-packet(pbar, sigma)` +E Gaussian momentum profile at ell/2
//! - `slater(k1, k2)`               antisymmetrized +E pair
//! - `two-pair(k0, k1, k2)`         pairs (k0,k1) + i*(k0,k2)/sqrt(2)-style
//!   superposition with moving density

use std::sync::Arc;

use beables_core::continuum::{ContinuumState, Mode, ModeBasis};
use beables_core::dynamics::PilotState;
use beables_core::lattice::{apply_creator, FockState, SectorBasis};
use beables_core::rng::preset_rng;
use num_complex::Complex64;

fn parse_call(text: &str) -> Result<(String, Vec<f64>), String> {
    let text = text.trim();
    match text.split_once('(') {
        None => Ok((text.to_string(), Vec::new())),
        Some((name, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| format!("preset '{text}': missing ')'"))?;
            let args = inner
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| format!("preset '{text}': bad argument '{s}': {e}"))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            Ok((name.trim().to_string(), args))
        }
    }
}

fn expect_args(name: &str, args: &[f64], n: usize) -> Result<(), String> {
    if args.len() == n {
        Ok(())
    } else {
        Err(format!("preset '{name}' expects {n} argument(s), got {}", args.len()))
    }
}

/// Build a lattice pilot state from a preset name.
pub fn lattice_preset(
    text: &str,
    sector: &Arc<SectorBasis>,
    master_seed: u64,
    t0: f64,
) -> Result<PilotState, String> {
    let (name, args) = parse_call(text)?;
    let state = match name.as_str() {
        "vacuum" => {
            expect_args(&name, &args, 0)?;
            if sector.omega != 0 {
                return Err("preset 'vacuum' needs omega = 0".into());
            }
            PilotState::basis_state(sector.clone(), 0, t0)
        }
        "uniform" => {
            expect_args(&name, &args, 0)?;
            PilotState::uniform(sector.clone(), t0)
        }
        "random" => {
            expect_args(&name, &args, 0)?;
            let mut rng = preset_rng(master_seed);
            PilotState::random(sector.clone(), &mut rng, t0)
        }
        "basis" => {
            expect_args(&name, &args, 1)?;
            let i = args[0] as usize;
            if i >= sector.dim() {
                return Err(format!("preset 'basis({i})': index out of range"));
            }
            PilotState::basis_state(sector.clone(), i, t0)
        }
        "localized" => {
            let mut state = FockState::EMPTY;
            for &a in &args {
                let mode = a as usize;
                if mode >= sector.spec.mode_count() {
                    return Err(format!("preset 'localized': mode {mode} out of range"));
                }
                state = apply_creator(state, mode)
                    .ok_or_else(|| format!("preset 'localized': mode {mode} repeated"))?
                    .0;
            }
            let idx = sector
                .index_of(state)
                .ok_or_else(|| "preset 'localized': wrong particle count for sector".to_string())?;
            PilotState::basis_state(sector.clone(), idx, t0)
        }
        other => return Err(format!("unknown lattice preset '{other}'")),
    };
    state.map_err(|e| format!("preset '{text}': {e}"))
}

/// Number of quanta a continuum preset will produce.
pub fn continuum_preset_omega(text: &str) -> Result<usize, String> {
    let (name, _) = parse_call(text)?;
    match name.as_str() {
        "mode" | "standing" | "gaussian-packet" => Ok(1),
        "slater" | "two-pair" => Ok(2),
        other => Err(format!("unknown continuum preset '{other}'")),
    }
}

/// Build a continuum state from a preset name.
pub fn continuum_preset(
    text: &str,
    basis: &Arc<ModeBasis>,
    t0: f64,
) -> Result<ContinuumState, String> {
    let (name, args) = parse_call(text)?;
    let state = match name.as_str() {
        "mode" => {
            if args.is_empty() || args.len() > 2 {
                return Err("preset 'mode' expects (k) or (k, branch)".into());
            }
            let k = args[0] as i32;
            let mode = if args.len() == 2 && args[1] < 0.0 {
                Mode::negative(k)
            } else {
                Mode::positive(k)
            };
            ContinuumState::one_quantum(basis.clone(), &[(mode, Complex64::ONE)], t0)
        }
        "standing" => {
            expect_args(&name, &args, 1)?;
            let k = args[0] as i32;
            ContinuumState::one_quantum(
                basis.clone(),
                &[
                    (Mode::positive(k), Complex64::ONE),
                    (Mode::positive(-k), Complex64::ONE),
                ],
                t0,
            )
        }
        "gaussian-packet" => {
            expect_args(&name, &args, 2)?;
            let (p_mean, sigma) = (args[0], args[1]);
            if !(sigma > 0.0) {
                return Err("preset 'gaussian-packet': sigma must be > 0".into());
            }
            let x0 = basis.box_length / 2.0;
            let coeffs: Vec<(Mode, Complex64)> = (-basis.cutoff..=basis.cutoff)
                .map(|k| {
                    let p = basis.momentum(k);
                    let w = (-((p - p_mean) * (p - p_mean)) / (4.0 * sigma * sigma)).exp();
                    (Mode::positive(k), Complex64::cis(-p * x0) * w)
                })
                .collect();
            ContinuumState::one_quantum(basis.clone(), &coeffs, t0)
        }
        "slater" => {
            expect_args(&name, &args, 2)?;
            ContinuumState::two_quantum_slater(
                basis.clone(),
                Mode::positive(args[0] as i32),
                Mode::positive(args[1] as i32),
                t0,
            )
        }
        "two-pair" => {
            expect_args(&name, &args, 3)?;
            let (k0, k1, k2) = (args[0] as i32, args[1] as i32, args[2] as i32);
            ContinuumState::two_quantum_antisym(
                basis.clone(),
                &[
                    ((Mode::positive(k0), Mode::positive(k1)), Complex64::ONE),
                    (
                        (Mode::positive(k0), Mode::positive(k2)),
                        Complex64::new(0.0, 0.8),
                    ),
                ],
                t0,
            )
        }
        other => return Err(format!("unknown continuum preset '{other}'")),
    };
    state.map_err(|e| format!("preset '{text}': {e}"))
}
