//! Deterministic synthetic flow generator.
//!
//! Stands in for a high-fidelity solver at desk scale: each planted component
//! contributes a fixed spatial pattern oscillating at a single frequency,
//! `p_j(x) * cos(2*pi*f_j*t + theta_j)`, on top of seeded broadband noise.
//! Patterns with distinct indices are exactly orthonormal in the grid
//! quadrature inner product (discrete sine products on cell centers), so the
//! spectral decomposition downstream has an analytically known answer.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::{DatasetMeta, GridGeometry, SnapshotDataset};

/// One planted traveling-wave component.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PlantedComponent {
    /// Index into the orthonormal spatial pattern family.
    pub pattern: usize,
    /// Oscillation frequency in Hz; must not exceed Nyquist.
    pub frequency: f64,
    pub amplitude: f64,
    /// Temporal phase offset in radians. Part of the configuration, not the
    /// seed, so different seeds share the identical planted signal.
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
    pub n_t: usize,
    pub dt: f64,
    pub components: Vec<PlantedComponent>,
    /// Standard deviation of the per-cell white noise.
    pub noise_sigma: f64,
    /// Optional fluid mask (row-major z-outer); all-fluid when absent.
    #[serde(default)]
    pub mask: Option<Vec<bool>>,
    #[serde(default)]
    pub with_concentration: bool,
    /// Pointwise scalar ground truth `max(c0 + c1*|u| + c2*w, 0)`, smoothed by
    /// a 3x3 box stencil so the mapping stage has a nonlocal target.
    #[serde(default = "default_conc_coeffs")]
    pub concentration_coeffs: [f64; 3],
    #[serde(default = "default_one")]
    pub u_ref: f64,
    #[serde(default = "default_one")]
    pub h_ref: f64,
}

fn default_conc_coeffs() -> [f64; 3] {
    [0.1, 1.0, 0.5]
}

fn default_one() -> f64 {
    1.0
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            nx: 16,
            nz: 24,
            dx: 1.0 / 16.0,
            dz: 1.0 / 16.0,
            n_t: 1024,
            dt: 0.1,
            components: Vec::new(),
            noise_sigma: 0.0,
            mask: None,
            with_concentration: false,
            concentration_coeffs: default_conc_coeffs(),
            u_ref: 1.0,
            h_ref: 1.0,
        }
    }
}

/// Discrete sine on cell centers; distinct wavenumbers are exactly orthogonal.
fn sine_profile(k: usize, n: usize, i: usize) -> f64 {
    (k as f64 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).sin()
}

fn wavenumber_pair(m: usize, nx: usize, nz: usize) -> Result<(usize, usize)> {
    let kx_max = nx.saturating_sub(1);
    let kz_max = nz.saturating_sub(1);
    if m >= kx_max * kz_max {
        return Err(Error::InvalidArgument(format!(
            "pattern family exhausted: index {m} on a {nx}x{nz} grid"
        )));
    }
    Ok((m % kx_max + 1, m / kx_max + 1))
}

/// Spatial pattern `index` as a stacked `[u cells; w cells]` vector with unit
/// norm under the grid quadrature weights. Patterns with distinct indices are
/// mutually orthogonal on an all-fluid grid.
pub fn planted_pattern(geometry: &GridGeometry, index: usize) -> Result<Array1<f64>> {
    let n_cells = geometry.n_cells();
    let mut p = Array1::zeros(2 * n_cells);
    for (comp, slot) in [(2 * index, 0), (2 * index + 1, n_cells)] {
        let (kx, kz) = wavenumber_pair(comp, geometry.nx, geometry.nz)?;
        for iz in 0..geometry.nz {
            for ix in 0..geometry.nx {
                let cell = geometry.cell_index(ix, iz);
                if geometry.mask[cell] {
                    p[slot + cell] =
                        sine_profile(kx, geometry.nx, ix) * sine_profile(kz, geometry.nz, iz);
                }
            }
        }
    }
    let w = geometry.quadrature_weights(2);
    let norm2: f64 = p.iter().zip(w.iter()).map(|(v, wi)| v * v * wi).sum();
    if norm2 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "pattern {index} vanishes on the fluid cells of this grid"
        )));
    }
    Ok(p / norm2.sqrt())
}

/// Generate a snapshot dataset. Pure function of `(config, seed)`.
pub fn synthesize_flow(config: &SynthConfig, seed: u64) -> Result<SnapshotDataset> {
    if config.n_t == 0 {
        return Err(Error::InvalidArgument("n_t must be positive".into()));
    }
    if !(config.dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let nyquist = 1.0 / (2.0 * config.dt);
    for c in &config.components {
        if c.frequency > nyquist {
            return Err(Error::InvalidArgument(format!(
                "planted frequency {} exceeds Nyquist {nyquist}",
                c.frequency
            )));
        }
        if c.frequency < 0.0 {
            return Err(Error::InvalidArgument("planted frequency must be non-negative".into()));
        }
    }
    let mask = config
        .mask
        .clone()
        .unwrap_or_else(|| vec![true; config.nx * config.nz]);
    let geometry = GridGeometry::new(config.nx, config.nz, config.dx, config.dz, mask, None)?;
    let n_cells = geometry.n_cells();

    let patterns: Vec<Array1<f64>> = config
        .components
        .iter()
        .map(|c| planted_pattern(&geometry, c.pattern))
        .collect::<Result<_>>()?;

    let mut velocity = Array3::zeros((config.n_t, 2, n_cells));
    for (t, mut frame) in velocity.outer_iter_mut().enumerate() {
        let time = t as f64 * config.dt;
        for (comp, pat) in config.components.iter().zip(&patterns) {
            let osc = comp.amplitude
                * (2.0 * std::f64::consts::PI * comp.frequency * time + comp.phase).cos();
            for cell in 0..n_cells {
                frame[[0, cell]] += osc * pat[cell];
                frame[[1, cell]] += osc * pat[n_cells + cell];
            }
        }
    }

    if config.noise_sigma > 0.0 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for v in velocity.iter_mut() {
            *v += config.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    // Noise is drawn for every cell to keep the stream layout independent of
    // the mask; solid cells are zeroed afterwards.
    for (cell, &fluid) in geometry.mask.iter().enumerate() {
        if !fluid {
            for t in 0..config.n_t {
                velocity[[t, 0, cell]] = 0.0;
                velocity[[t, 1, cell]] = 0.0;
            }
        }
    }

    let concentration = if config.with_concentration {
        let [c0, c1, c2] = config.concentration_coeffs;
        let mut conc = Array2::zeros((config.n_t, n_cells));
        let mut raw = vec![0.0; n_cells];
        for t in 0..config.n_t {
            for cell in 0..n_cells {
                let u = velocity[[t, 0, cell]];
                let w = velocity[[t, 1, cell]];
                raw[cell] = (c0 + c1 * u.abs() + c2 * w).max(0.0);
            }
            for iz in 0..geometry.nz {
                for ix in 0..geometry.nx {
                    let cell = geometry.cell_index(ix, iz);
                    if !geometry.mask[cell] {
                        continue;
                    }
                    // 3x3 zero-padded box average.
                    let mut acc = 0.0;
                    for dz in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let jx = ix as i64 + dx;
                            let jz = iz as i64 + dz;
                            if jx >= 0
                                && jz >= 0
                                && (jx as usize) < geometry.nx
                                && (jz as usize) < geometry.nz
                            {
                                acc += raw[geometry.cell_index(jx as usize, jz as usize)];
                            }
                        }
                    }
                    conc[[t, cell]] = acc / 9.0;
                }
            }
        }
        Some(conc)
    } else {
        None
    };

    let times = Array1::from_iter((0..config.n_t).map(|t| t as f64 * config.dt));
    let data = SnapshotDataset {
        geometry,
        meta: DatasetMeta {
            dt: config.dt,
            u_ref: config.u_ref,
            c_ref: 1.0,
            q_c: None,
            span_length: 1.0,
            h_ref: config.h_ref,
            n_v: 2,
        },
        velocity,
        concentration,
        times,
    };
    data.validate()?;
    Ok(data)
}
