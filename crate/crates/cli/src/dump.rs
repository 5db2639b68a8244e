//! Debug dumps: the sector basis and the Hamiltonian spectrum as JSON.

use std::sync::Arc;

use beables_core::dynamics::build_hamiltonian;
use beables_core::lattice::{enumerate_sector, LatticeSpec};
use serde_json::json;

use crate::artifacts::ArtifactSink;
use crate::config::RunConfig;

/// Matrices larger than this are dumped as spectra only.
const DENSE_DUMP_LIMIT: usize = 64;

/// Write `basis.json` and `spectrum.json` for the configured lattice sector.
pub fn dump(config: &RunConfig) -> Result<Vec<String>, String> {
    let spec = LatticeSpec::new(
        config.sites,
        config.spinor_dim,
        config.mass,
        config.coupling,
        config.spacing,
    )
    .map_err(|e| e.to_string())?;
    let sector = Arc::new(enumerate_sector(&spec, config.omega).map_err(|e| e.to_string())?);
    let h = build_hamiltonian(&sector);

    let mut sink = ArtifactSink::create(config.out_dir.clone())?;

    let classes: Vec<serde_json::Value> = (0..sector.config_count())
        .map(|ci| {
            json!({
                "configuration": sector.configurations[ci].0,
                "states": sector.class(ci),
            })
        })
        .collect();
    let basis = json!({
        "sites": spec.sites,
        "spinor_dim": spec.spinor_dim,
        "omega": sector.omega,
        "dimension": sector.dim(),
        "states": sector.states.iter().map(|s| s.0).collect::<Vec<u32>>(),
        "classes": classes,
    });
    sink.write("basis.json", &serde_json::to_string_pretty(&basis).unwrap())?;

    let eig = h.spectral();
    let mut energies: Vec<f64> = eig.energies.iter().copied().collect();
    energies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let matrix: Option<Vec<Vec<[f64; 2]>>> = (sector.dim() <= DENSE_DUMP_LIMIT).then(|| {
        let dense = h.to_dense();
        (0..dense.nrows())
            .map(|i| {
                (0..dense.ncols())
                    .map(|j| [dense[(i, j)].re, dense[(i, j)].im])
                    .collect()
            })
            .collect()
    });
    let spectrum = json!({
        "dimension": sector.dim(),
        "hermiticity_error": h.hermiticity_error(),
        "energies": energies,
        "matrix": matrix,
    });
    sink.write(
        "spectrum.json",
        &serde_json::to_string_pretty(&spectrum).unwrap(),
    )?;
    Ok(sink.names)
}
