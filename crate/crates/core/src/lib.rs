//! Beable dynamics for fermionic quantum field theory at desk scale.
//!
//! Two engines share one ontology. On a periodic lattice, the beable is the
//! per-site fermion-number configuration, driven by a continuous-time jump
//! process whose rates come from the pilot state; the marginal law
//! `P_n(t) = sum_q |<nq|Psi(t)>|^2` is preserved (equivariance), which the
//! statistics modules check. In the 1+1D continuum box, the beables are
//! particle positions guided deterministically by `V = J / rho`, and a
//! coarse-graining map ties the two pictures together.
//!
//! Units are natural (`hbar = c = 1`) throughout.

pub mod bell;
pub mod continuum;
pub mod dynamics;
pub mod error;
pub mod lattice;
pub mod rng;
pub mod stats;

pub use bell::{
    equivariance_report, jump_rates, master_equation_flow, run_ensemble, sample_trajectory,
    sample_trajectory_at, BeableTrajectory, EnsembleOptions, EquivarianceReport, JumpEvent,
    JumpRate, JumpRateTable,
};
pub use continuum::{
    box_probabilities_one, box_probabilities_two, coarse_grain, coarse_grain_comparison,
    continuity_residual, current, density, enumerate_box_configurations, evaluate_wavefunction,
    integrate_to, integrate_trajectory, nonfactorizability_check,
    position_histogram_comparisons, run_position_ensemble, velocity, CoarseGrid,
    ContinuumEnsembleOptions, ContinuumState, ContinuumTrajectory, DensitySampler, EnergyBranch,
    FactorizationVerdict, Mode, ModeBasis, NonfactorizabilityReport, SpinorTensor,
};
pub use dynamics::{
    build_free_hamiltonian, build_hamiltonian, build_interaction, evolve, marginal_distribution,
    HamiltonianMatrix, PilotState, SpectralDecomposition, SpectralPropagator,
};
pub use error::{Error, Result};
pub use lattice::{
    apply_annihilator, apply_creator, configuration_of, enumerate_sector, DensityConfiguration,
    FockState, LatticeSpec, SectorBasis,
};
pub use stats::{tv_distance, BandOptions, DistributionComparison};
