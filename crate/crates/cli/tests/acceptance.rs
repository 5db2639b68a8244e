//! Acceptance suite: one test per criterion, each printing a pass line and
//! enforcing its stated tolerance and runtime budget.

use std::sync::Arc;
use std::time::{Duration, Instant};

use beables_core::bell::{equivariance_report, run_ensemble, EnsembleOptions};
use beables_core::continuum::{
    continuity_residual, nonfactorizability_check, position_histogram_comparisons,
    run_position_ensemble, ContinuumEnsembleOptions, ContinuumState, FactorizationVerdict, Mode,
    ModeBasis, NODE_EPSILON,
};
use beables_core::dynamics::{self, build_hamiltonian, evolve, marginal_distribution, PilotState};
use beables_core::lattice::{enumerate_sector, LatticeSpec, SectorBasis};
use beables_core::rng::preset_rng;
use beables_core::stats::BandOptions;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

fn sector(l: usize, d: usize, g: f64, omega: u32) -> Arc<SectorBasis> {
    let spec = LatticeSpec::new(l, d, 1.0, g, 1.0).unwrap();
    Arc::new(enumerate_sector(&spec, omega).unwrap())
}

fn budget(started: Instant, limit: Duration, label: &str) {
    let elapsed = started.elapsed();
    assert!(
        elapsed <= limit,
        "{label}: runtime {elapsed:.2?} exceeds budget {limit:.2?}"
    );
}

#[test]
fn criterion_1_operator_algebra() {
    let started = Instant::now();
    for (l, d) in [(2usize, 2usize), (1, 4)] {
        let spec = LatticeSpec::new(l, d, 1.0, 0.0, 1.0).unwrap();
        let m = spec.mode_count();
        let dim = 1usize << m;
        let cre: Vec<DMatrix<f64>> = (0..m)
            .map(|mu| dynamics::full_space::creator_dense(&spec, mu))
            .collect();
        let ann: Vec<DMatrix<f64>> = (0..m)
            .map(|mu| dynamics::full_space::annihilator_dense(&spec, mu))
            .collect();
        let ident = DMatrix::<f64>::identity(dim, dim);
        for a in 0..m {
            for b in 0..m {
                let mixed = &ann[a] * &cre[b] + &cre[b] * &ann[a];
                let expect = if a == b {
                    ident.clone()
                } else {
                    DMatrix::zeros(dim, dim)
                };
                assert_eq!(mixed, expect, "L={l} d={d}: {{psi_{a}, psi^dag_{b}}}");
                let pp = &ann[a] * &ann[b] + &ann[b] * &ann[a];
                assert_eq!(pp, DMatrix::zeros(dim, dim), "L={l} d={d}: {{psi_{a}, psi_{b}}}");
            }
        }
    }
    budget(started, Duration::from_secs(1), "criterion 1");
    println!("criterion 1 (operator algebra): PASS");
}

#[test]
fn criterion_2_superselection() {
    let started = Instant::now();
    for l in [2usize, 3] {
        for g in [0.0, 0.5] {
            let spec = LatticeSpec::new(l, 2, 1.0, g, 1.0).unwrap();
            let h = dynamics::full_space::free_hamiltonian_dense(&spec)
                + dynamics::full_space::interaction_dense(&spec);
            let f = dynamics::full_space::fermion_number_dense(&spec)
                .map(|x| Complex64::new(x, 0.0));
            let comm = &h * &f - &f * &h;
            let dev = comm.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(dev <= 1e-12, "L={l} g={g}: |[H,F]| = {dev:.3e}");
        }
    }
    budget(started, Duration::from_secs(5), "criterion 2");
    println!("criterion 2 (superselection): PASS");
}

/// First-quantized lattice Dirac matrix, built directly from the stencil
/// with no Fock-space machinery; the acceptance oracle for criterion 3.
fn first_quantized_hamiltonian(sites: usize, mass: f64, spacing: f64) -> DMatrix<Complex64> {
    let alpha = [[0.0, 1.0], [1.0, 0.0]];
    let beta = [[1.0, 0.0], [0.0, -1.0]];
    let n = sites * 2;
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    for l in 0..sites {
        let fwd = (l + 1) % sites;
        let bwd = (l + sites - 1) % sites;
        for a in 0..2 {
            for b in 0..2 {
                h[(l * 2 + a, l * 2 + b)] += Complex64::new(mass * beta[a][b], 0.0);
                let w = Complex64::new(0.0, -alpha[a][b] / (2.0 * spacing));
                h[(l * 2 + a, fwd * 2 + b)] += w;
                h[(l * 2 + a, bwd * 2 + b)] -= w;
            }
        }
    }
    h
}

#[test]
fn criterion_3_dirac_recovery() {
    let started = Instant::now();
    let sector = sector(8, 2, 0.0, 1);
    let h2 = dynamics::build_free_hamiltonian(&sector);
    let h1 = first_quantized_hamiltonian(8, 1.0, 1.0);
    let eig = h1.clone().symmetric_eigen();

    let mut rng = preset_rng(303);
    let raw: Vec<Complex64> = (0..sector.dim())
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let psi0 = PilotState::new(sector.clone(), DVector::from_vec(raw), 0.0).unwrap();

    let mut max_dev: f64 = 0.0;
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        let second = evolve(&psi0, &h2, t).unwrap();
        let mut c = eig.eigenvectors.adjoint() * psi0.amplitudes();
        for (ck, &e) in c.iter_mut().zip(eig.eigenvalues.iter()) {
            *ck *= Complex64::cis(-e * t);
        }
        let first = &eig.eigenvectors * c;
        let dev = (second.amplitudes() - &first)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        max_dev = max_dev.max(dev);
    }
    assert!(max_dev <= 1e-8, "max deviation {max_dev:.3e}");
    budget(started, Duration::from_secs(10), "criterion 3");
    println!("criterion 3 (Dirac-equation recovery): PASS, max deviation {max_dev:.3e}");
}

#[test]
fn criterion_4_master_equation_consistency() {
    let started = Instant::now();
    let delta = 1e-5;
    for omega in [1u32, 2] {
        let sector = sector(3, 2, 0.0, omega);
        let h = build_hamiltonian(&sector);
        let mut rng = preset_rng(404 + omega as u64);
        let psi0 = PilotState::random(sector.clone(), &mut rng, 0.0).unwrap();
        for _ in 0..10 {
            let t: f64 = rng.random::<f64>() * 3.0;
            let psi = evolve(&psi0, &h, t).unwrap();
            let flow = beables_core::bell::master_equation_flow(&psi, &h).unwrap();
            let p_plus = marginal_distribution(&evolve(&psi, &h, delta).unwrap());
            let p_minus = marginal_distribution(&evolve(&psi, &h, -delta).unwrap());
            for (ci, f) in flow.iter().enumerate() {
                let dpdt = (p_plus[ci] - p_minus[ci]) / (2.0 * delta);
                assert!(
                    (f - dpdt).abs() <= 1e-6,
                    "omega={omega} t={t} config {ci}: flow {f} vs dP/dt {dpdt}"
                );
            }
        }
    }
    budget(started, Duration::from_secs(30), "criterion 4");
    println!("criterion 4 (master-equation consistency): PASS");
}

#[test]
fn criterion_5_stochastic_equivariance() {
    let started = Instant::now();
    let sector = sector(4, 2, 0.0, 2);
    let h = build_hamiltonian(&sector);
    let mut rng = preset_rng(505);
    let psi0 = PilotState::random(sector.clone(), &mut rng, 0.0).unwrap();
    let checkpoints = vec![0.5, 1.25, 2.0];
    let opts = EnsembleOptions {
        size: 10_000,
        master_seed: 505,
        dt_ctrl: 0.005,
        checkpoints: checkpoints.clone(),
    };
    let ensemble = run_ensemble(&psi0, &h, &opts).unwrap();
    let band = BandOptions {
        bootstrap_samples: 500,
        quantile: 0.95,
        seed: 505,
    };
    let report = equivariance_report(&ensemble, &psi0, &h, &checkpoints, &band).unwrap();
    for cp in &report.checkpoints {
        println!(
            "  t={}: tv={:.5} band95={:.5}",
            cp.time, cp.tv, cp.band
        );
        assert!(
            cp.tv <= 0.03,
            "t={}: TV {:.5} exceeds 0.03 (band {:.5})",
            cp.time,
            cp.tv,
            cp.band
        );
    }
    budget(started, Duration::from_secs(300), "criterion 5");
    println!("criterion 5 (stochastic equivariance): PASS");
}

fn continuum_packet(basis: &Arc<ModeBasis>, p_mean: f64, sigma: f64) -> ContinuumState {
    let x0 = basis.box_length / 2.0;
    let coeffs: Vec<(Mode, Complex64)> = (-basis.cutoff..=basis.cutoff)
        .map(|k| {
            let p = basis.momentum(k);
            let w = (-((p - p_mean) * (p - p_mean)) / (4.0 * sigma * sigma)).exp();
            (Mode::positive(k), Complex64::cis(-p * x0) * w)
        })
        .collect();
    ContinuumState::one_quantum(basis.clone(), &coeffs, 0.0).unwrap()
}

#[test]
fn criterion_6_deterministic_equivariance() {
    let started = Instant::now();
    let ell = 4.0 * std::f64::consts::PI;

    // One-quantum Gaussian packet, 32 boxes at t = 1.
    let basis = Arc::new(ModeBasis::new(ell, 32, 1.0).unwrap());
    let packet = continuum_packet(&basis, 1.0, 0.5);
    let opts = ContinuumEnsembleOptions {
        size: 10_000,
        master_seed: 606,
        rk_dt: 1e-3,
        node_epsilon: NODE_EPSILON,
        checkpoints: vec![1.0],
        sampler_cells: 4096,
    };
    let positions = run_position_ensemble(&packet, &opts).unwrap();
    let band = BandOptions {
        bootstrap_samples: 500,
        quantile: 0.95,
        seed: 606,
    };
    let (_, cps) =
        position_histogram_comparisons(&packet, &positions, &[1.0], 32, 16, &band).unwrap();
    println!("  packet t=1: tv={:.5} band95={:.5}", cps[0].tv, cps[0].band);
    assert!(
        cps[0].pass,
        "packet histogram TV {:.5} outside band {:.5}",
        cps[0].tv, cps[0].band
    );

    // Two-quantum Slater state on a 16 x 16 box grid. The 256-category
    // histogram needs the finer sampler and band estimate: with 512 cells
    // per dimension and 2000 bootstrap draws the discretization bias is well
    // under the multinomial noise.
    let slater = ContinuumState::two_quantum_slater(
        basis.clone(),
        Mode::positive(1),
        Mode::positive(2),
        0.0,
    )
    .unwrap();
    let opts = ContinuumEnsembleOptions {
        size: 10_000,
        master_seed: 616,
        rk_dt: 5e-4,
        node_epsilon: NODE_EPSILON,
        checkpoints: vec![1.0],
        sampler_cells: 512,
    };
    let positions = run_position_ensemble(&slater, &opts).unwrap();
    let band = BandOptions {
        bootstrap_samples: 2000,
        quantile: 0.95,
        seed: 616,
    };
    let (_, cps) =
        position_histogram_comparisons(&slater, &positions, &[1.0], 16, 16, &band).unwrap();
    println!("  slater t=1: tv={:.5} band95={:.5}", cps[0].tv, cps[0].band);
    assert!(
        cps[0].pass,
        "slater histogram TV {:.5} outside band {:.5}",
        cps[0].tv, cps[0].band
    );

    budget(started, Duration::from_secs(300), "criterion 6");
    println!("criterion 6 (deterministic equivariance): PASS");
}

#[test]
fn criterion_7_continuity() {
    let started = Instant::now();
    // A superposition of two antisymmetrized pairs: the single Slater of
    // energy eigenmodes has a static density, so it cannot exercise the
    // refinement factor.
    let basis = Arc::new(ModeBasis::new(8.0 * std::f64::consts::PI, 16, 1.0).unwrap());
    let state = ContinuumState::two_quantum_antisym(
        basis,
        &[
            ((Mode::positive(0), Mode::positive(1)), Complex64::ONE),
            (
                (Mode::positive(0), Mode::positive(2)),
                Complex64::new(0.0, 0.8),
            ),
        ],
        0.2,
    )
    .unwrap();
    let coarse = continuity_residual(&state, 64).unwrap();
    let fine = continuity_residual(&state, 128).unwrap();
    assert!(coarse <= 1e-5, "64x64 residual {coarse:.3e}");
    assert!(
        coarse / fine >= 3.5,
        "refinement factor {:.2} below 3.5",
        coarse / fine
    );
    budget(started, Duration::from_secs(60), "criterion 7");
    println!(
        "criterion 7 (continuity): PASS, residual {coarse:.3e}, refinement {:.2}x",
        coarse / fine
    );
}

#[test]
fn criterion_8_non_locality() {
    let started = Instant::now();
    let basis = Arc::new(ModeBasis::new(4.0 * std::f64::consts::PI, 8, 1.0).unwrap());

    let slater = ContinuumState::two_quantum_slater(
        basis.clone(),
        Mode::positive(1),
        Mode::positive(2),
        0.0,
    )
    .unwrap();
    let rep = nonfactorizability_check(&slater, 64).unwrap();
    assert_eq!(rep.verdict, FactorizationVerdict::NonFactorizable);
    assert!(rep.ratio > 1e-3, "slater ratio {:.3e}", rep.ratio);
    let slater_ratio = rep.ratio;

    let product = ContinuumState::two_quantum_product(
        basis,
        &[
            (Mode::positive(1), Complex64::ONE),
            (Mode::positive(2), Complex64::ONE),
        ],
        &[(Mode::positive(3), Complex64::ONE)],
        0.0,
    )
    .unwrap();
    let rep = nonfactorizability_check(&product, 64).unwrap();
    assert_eq!(rep.verdict, FactorizationVerdict::Factorizable);
    assert!(rep.ratio < 1e-10, "product ratio {:.3e}", rep.ratio);

    budget(started, Duration::from_secs(60), "criterion 8");
    println!(
        "criterion 8 (non-locality): PASS, slater ratio {slater_ratio:.3e}, product ratio {:.3e}",
        rep.ratio
    );
}

#[test]
fn criterion_9_reproducibility() {
    let base = std::env::temp_dir().join(format!("beables-accept-{}", std::process::id()));
    let run_dir = base.join("run");
    let save_dir = base.join("save");
    std::fs::create_dir_all(&base).unwrap();
    let config_path = base.join("run.conf");
    std::fs::write(
        &config_path,
        format!(
            "engine = lattice-stochastic\n\
             seed = 99\n\
             out_dir = {}\n\
             sites = 3\n\
             spinor_dim = 2\n\
             omega = 1\n\
             initial_state = random\n\
             ensemble_size = 300\n\
             t_max = 1.0\n\
             checkpoints = 0.5, 1.0\n\
             dt = 0.005\n\
             trajectory_logs = 4\n",
            run_dir.display()
        ),
    )
    .unwrap();

    let bin = env!("CARGO_BIN_EXE_beables");
    let run = |threads: &str| {
        let status = std::process::Command::new(bin)
            .arg("run")
            .arg(&config_path)
            .env("BEABLES_THREADS", threads)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success(), "run failed");
    };

    run("2");
    if save_dir.exists() {
        std::fs::remove_dir_all(&save_dir).unwrap();
    }
    std::fs::rename(&run_dir, &save_dir).unwrap();
    run("4");

    let mut compared = 0;
    for entry in std::fs::read_dir(&save_dir).unwrap() {
        let name = entry.unwrap().file_name();
        let name = name.to_string_lossy().to_string();
        if name.ends_with(".csv") || name.ends_with(".json") {
            let a = std::fs::read(save_dir.join(&name)).unwrap();
            let b = std::fs::read(run_dir.join(&name)).unwrap();
            assert_eq!(a, b, "artifact {name} differs between identical runs");
            compared += 1;
        }
    }
    assert!(compared >= 3, "expected several artifacts, compared {compared}");
    std::fs::remove_dir_all(&base).unwrap();
    println!("criterion 9 (reproducibility): PASS, {compared} artifacts byte-identical");
}
