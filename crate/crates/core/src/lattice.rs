//! Occupation-number basis for a lattice Dirac field.
//!
//! Modes are ordered site-major: mode `mu = l*d + a` for site `l` and spinor
//! component `a`. A basis state is a bitmask over the `M = L*d` modes, bit
//! `mu` set meaning mode `mu` occupied. Creation and annihilation carry the
//! Jordan-Wigner sign `(-1)^(number of occupied modes below mu)`; this single
//! global convention fixes all operator phases, and the anticommutators are
//! what the tests pin down.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cap on the total mode count `L*d` so the full `2^M` Fock space stays
/// enumerable in memory.
pub const MAX_MODES: usize = 24;

/// Geometry and couplings of the lattice model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Number of lattice sites `L`.
    pub sites: usize,
    /// Spinor components per site; 2 (1+1D reduction) or 4.
    pub spinor_dim: usize,
    /// Fermion mass `m > 0` (the mode normalization divides by `m`).
    pub mass: f64,
    /// Coupling `g` of the quartic interaction.
    pub coupling: f64,
    /// Lattice spacing (box edge) `lambda > 0`.
    pub spacing: f64,
}

impl LatticeSpec {
    pub fn new(
        sites: usize,
        spinor_dim: usize,
        mass: f64,
        coupling: f64,
        spacing: f64,
    ) -> Result<Self> {
        if sites == 0 {
            return Err(Error::InvalidSpec("sites must be >= 1".into()));
        }
        if spinor_dim != 2 && spinor_dim != 4 {
            return Err(Error::InvalidSpec(format!(
                "spinor_dim must be 2 or 4, got {spinor_dim}"
            )));
        }
        if !(mass > 0.0) {
            return Err(Error::InvalidSpec(format!("mass must be > 0, got {mass}")));
        }
        if !(spacing > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "spacing must be > 0, got {spacing}"
            )));
        }
        if !coupling.is_finite() {
            return Err(Error::InvalidSpec("coupling must be finite".into()));
        }
        let modes = sites * spinor_dim;
        if modes > MAX_MODES {
            return Err(Error::InvalidSpec(format!(
                "mode count {modes} exceeds cap {MAX_MODES}"
            )));
        }
        Ok(Self {
            sites,
            spinor_dim,
            mass,
            coupling,
            spacing,
        })
    }

    /// Total mode count `M = L*d`.
    pub fn mode_count(&self) -> usize {
        self.sites * self.spinor_dim
    }

    /// Site-major mode index of `(site, component)`.
    pub fn mode_index(&self, site: usize, component: usize) -> usize {
        debug_assert!(site < self.sites && component < self.spinor_dim);
        site * self.spinor_dim + component
    }

    pub fn site_of(&self, mode: usize) -> usize {
        mode / self.spinor_dim
    }

    pub fn component_of(&self, mode: usize) -> usize {
        mode % self.spinor_dim
    }
}

/// One Fock basis state: a bitmask over the modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FockState(pub u32);

impl FockState {
    pub const EMPTY: FockState = FockState(0);

    pub fn occupied(&self, mode: usize) -> bool {
        self.0 >> mode & 1 == 1
    }

    /// Total fermion number `F = popcount`.
    pub fn fermion_number(&self) -> u32 {
        self.0.count_ones()
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:b}", self.0)
    }
}

/// Jordan-Wigner sign for acting at `mode`: parity of the occupied modes
/// strictly below it.
fn jw_sign(state: FockState, mode: usize) -> i8 {
    let below = state.0 & ((1u32 << mode) - 1);
    if below.count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Apply the creator for `mode`. Returns `None` if the mode is already
/// occupied (Pauli exclusion), otherwise the new state and the sign.
pub fn apply_creator(state: FockState, mode: usize) -> Option<(FockState, i8)> {
    if state.occupied(mode) {
        return None;
    }
    Some((FockState(state.0 | 1 << mode), jw_sign(state, mode)))
}

/// Apply the annihilator for `mode`. Returns `None` if the mode is empty.
pub fn apply_annihilator(state: FockState, mode: usize) -> Option<(FockState, i8)> {
    if !state.occupied(mode) {
        return None;
    }
    Some((FockState(state.0 & !(1 << mode)), jw_sign(state, mode)))
}

/// Per-site fermion counts `n = (n_1, ..., n_L)`, the lattice beable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DensityConfiguration(pub Vec<u8>);

impl DensityConfiguration {
    pub fn total(&self) -> u32 {
        self.0.iter().map(|&n| n as u32).sum()
    }
}

impl fmt::Display for DensityConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ")")
    }
}

/// Fermion-number density eigenvalue of a basis state: per-site popcounts.
pub fn configuration_of(state: FockState, spec: &LatticeSpec) -> DensityConfiguration {
    let d = spec.spinor_dim;
    let block = (1u32 << d) - 1;
    let counts = (0..spec.sites)
        .map(|l| ((state.0 >> (l * d)) & block).count_ones() as u8)
        .collect();
    DensityConfiguration(counts)
}

/// All Fock states with a fixed total fermion number `omega`, together with
/// the grouping into density-configuration classes. Within a class, the
/// states enumerate the spinor-component assignments (the degeneracy label
/// completing the density observables to a commuting set).
///
/// Immutable after construction; shared freely across threads.
#[derive(Debug)]
pub struct SectorBasis {
    pub spec: LatticeSpec,
    pub omega: u32,
    /// Basis states in ascending bitmask order (the fixed basis order).
    pub states: Vec<FockState>,
    index: HashMap<u32, usize>,
    /// Distinct density configurations, sorted.
    pub configurations: Vec<DensityConfiguration>,
    /// For each configuration, the indices of its basis states.
    classes: Vec<Vec<usize>>,
    /// For each basis state, the index of its configuration.
    state_config: Vec<usize>,
}

/// Enumerate the `binomial(L*d, omega)` basis states of the fermion-number
/// sector `omega`.
pub fn enumerate_sector(spec: &LatticeSpec, omega: u32) -> Result<SectorBasis> {
    let m = spec.mode_count() as u32;
    if omega > m {
        return Err(Error::OmegaOutOfRange { omega, max: m });
    }
    let states: Vec<FockState> = (0u64..1 << m)
        .map(|s| s as u32)
        .filter(|s| s.count_ones() == omega)
        .map(FockState)
        .collect();
    let index: HashMap<u32, usize> = states.iter().enumerate().map(|(i, s)| (s.0, i)).collect();

    let mut config_map: HashMap<DensityConfiguration, Vec<usize>> = HashMap::new();
    for (i, &s) in states.iter().enumerate() {
        config_map.entry(configuration_of(s, spec)).or_default().push(i);
    }
    let mut configurations: Vec<DensityConfiguration> = config_map.keys().cloned().collect();
    configurations.sort();
    let classes: Vec<Vec<usize>> = configurations
        .iter()
        .map(|c| config_map.remove(c).unwrap())
        .collect();
    let mut state_config = vec![usize::MAX; states.len()];
    for (ci, class) in classes.iter().enumerate() {
        for &si in class {
            state_config[si] = ci;
        }
    }
    Ok(SectorBasis {
        spec: spec.clone(),
        omega,
        states,
        index,
        configurations,
        classes,
        state_config,
    })
}

impl SectorBasis {
    /// Sector dimension `binomial(L*d, omega)`.
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: FockState) -> Option<usize> {
        self.index.get(&state.0).copied()
    }

    /// Number of distinct density configurations in the sector.
    pub fn config_count(&self) -> usize {
        self.configurations.len()
    }

    pub fn config_index(&self, config: &DensityConfiguration) -> Option<usize> {
        self.configurations.binary_search(config).ok()
    }

    /// State indices of the degeneracy class of configuration `ci`.
    pub fn class(&self, ci: usize) -> &[usize] {
        &self.classes[ci]
    }

    /// Configuration index of basis state `si`.
    pub fn config_of_state(&self, si: usize) -> usize {
        self.state_config[si]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(sites: usize, d: usize) -> LatticeSpec {
        LatticeSpec::new(sites, d, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn vacuum_sector_is_single_empty_state() {
        let s = enumerate_sector(&spec(1, 2), 0).unwrap();
        assert_eq!(s.states, vec![FockState::EMPTY]);
        assert_eq!(s.config_count(), 1);
    }

    #[test]
    fn one_quantum_two_sites() {
        let s = enumerate_sector(&spec(2, 2), 1).unwrap();
        assert_eq!(s.dim(), 4);
        assert_eq!(s.config_count(), 2);
        let c10 = DensityConfiguration(vec![1, 0]);
        let c01 = DensityConfiguration(vec![0, 1]);
        assert_eq!(s.class(s.config_index(&c10).unwrap()).len(), 2);
        assert_eq!(s.class(s.config_index(&c01).unwrap()).len(), 2);
    }

    #[test]
    fn two_quanta_two_sites_four_components() {
        // Sector dimension binomial(8,2) = 28; the (1,1) configuration has
        // 4 x 4 = 16 spinor assignments.
        let s = enumerate_sector(&spec(2, 4), 2).unwrap();
        assert_eq!(s.dim(), 28);
        let c11 = DensityConfiguration(vec![1, 1]);
        assert_eq!(s.class(s.config_index(&c11).unwrap()).len(), 16);
    }

    #[test]
    fn omega_out_of_range_rejected() {
        assert!(matches!(
            enumerate_sector(&spec(2, 2), 5),
            Err(Error::OmegaOutOfRange { omega: 5, max: 4 })
        ));
    }

    #[test]
    fn creator_basics() {
        let (s, sgn) = apply_creator(FockState::EMPTY, 0).unwrap();
        assert_eq!((s, sgn), (FockState(1), 1));
        assert!(apply_creator(FockState(1), 0).is_none());
        // Two modes occupied below: sign (-1)^2 = +1.
        let (s, sgn) = apply_creator(FockState(0b011), 2).unwrap();
        assert_eq!((s, sgn), (FockState(0b111), 1));
        // One mode occupied below: sign -1.
        let (s, sgn) = apply_creator(FockState(0b001), 1).unwrap();
        assert_eq!((s, sgn), (FockState(0b011), -1));
    }

    #[test]
    fn annihilator_basics() {
        assert!(apply_annihilator(FockState::EMPTY, 0).is_none());
        let (s, sgn) = apply_annihilator(FockState(0b101), 2).unwrap();
        assert_eq!((s, sgn), (FockState(0b001), -1));
    }

    #[test]
    fn annihilator_then_creator_is_identity_on_unset_bit() {
        let state = FockState(0b1010);
        for mode in [0usize, 2] {
            let (up, s1) = apply_creator(state, mode).unwrap();
            let (down, s2) = apply_annihilator(up, mode).unwrap();
            assert_eq!(down, state);
            assert_eq!(s1 * s2, 1);
        }
    }

    #[test]
    fn configuration_examples() {
        let sp = spec(2, 2);
        assert_eq!(
            configuration_of(FockState::EMPTY, &sp),
            DensityConfiguration(vec![0, 0])
        );
        assert_eq!(
            configuration_of(FockState(0b1111), &sp),
            DensityConfiguration(vec![2, 2])
        );
        assert_eq!(
            configuration_of(FockState(0b1001), &sp),
            DensityConfiguration(vec![1, 1])
        );
    }

    #[test]
    fn basis_completeness() {
        let sp = spec(2, 2);
        let m = sp.mode_count() as u32;
        let total: usize = (0..=m)
            .map(|w| enumerate_sector(&sp, w).unwrap().dim())
            .sum();
        assert_eq!(total, 1 << m);
    }

    #[test]
    fn configuration_constant_on_class() {
        let sp = spec(3, 2);
        let s = enumerate_sector(&sp, 2).unwrap();
        for ci in 0..s.config_count() {
            for &si in s.class(ci) {
                assert_eq!(configuration_of(s.states[si], &sp), s.configurations[ci]);
            }
        }
    }

    proptest! {
        #[test]
        fn creator_raises_fermion_number_by_one(mask in 0u32..(1 << 8), mode in 0usize..8) {
            let state = FockState(mask);
            match apply_creator(state, mode) {
                Some((s, sgn)) => {
                    prop_assert_eq!(s.fermion_number(), state.fermion_number() + 1);
                    prop_assert!(sgn == 1 || sgn == -1);
                }
                None => prop_assert!(state.occupied(mode)),
            }
        }

        #[test]
        fn class_sums_match_sector(omega in 0u32..=6) {
            let sp = LatticeSpec::new(3, 2, 1.0, 0.0, 1.0).unwrap();
            let s = enumerate_sector(&sp, omega).unwrap();
            for ci in 0..s.config_count() {
                prop_assert_eq!(s.configurations[ci].total(), omega);
            }
            let class_total: usize = (0..s.config_count()).map(|ci| s.class(ci).len()).sum();
            prop_assert_eq!(class_total, s.dim());
        }
    }
}
