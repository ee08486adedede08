//! Welch-blocked spectral proper orthogonal decomposition.
//!
//! The snapshot matrix is segmented into overlapping blocks, each block is
//! windowed and DFT'd per spatial entry, the realizations are regrouped per
//! frequency, and a small Hermitian eigenproblem (the method of snapshots)
//! yields the modes and energies at every resolved frequency.

mod confidence;
mod dft;
mod eigen;
mod io;

pub use confidence::eigenvalue_confidence;
pub use dft::{window_samples, windowed_block_dft, FourierEnsemble};
pub use eigen::{csd_direct_oracle, hermitian_eigen, spod_at_frequency, FrequencyModes};
pub use io::{load_basis, write_basis};

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::dataset::SnapshotDataset;
use crate::error::{Error, Result};

/// Eigenvalues at or below `RANK_TOL * lambda_max` are treated as numerically
/// zero: the corresponding mode columns are zeroed and excluded from ranks.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hamming,
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hamming" => Ok(Self::Hamming),
            "hann" => Ok(Self::Hann),
            "rectangular" | "rect" | "boxcar" => Ok(Self::Rectangular),
            other => Err(Error::InvalidArgument(format!("unknown window '{other}'"))),
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Self::Hamming => 0,
            Self::Hann => 1,
            Self::Rectangular => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Self::Hamming),
            1 => Ok(Self::Hann),
            2 => Ok(Self::Rectangular),
            other => Err(Error::Format(format!("unknown window tag {other}"))),
        }
    }
}

impl std::fmt::Display for WindowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Hamming => "hamming",
            Self::Hann => "hann",
            Self::Rectangular => "rectangular",
        };
        f.write_str(s)
    }
}

/// Spectral estimation parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpodParams {
    pub n_fft: usize,
    pub n_ovlp: usize,
    pub window: WindowKind,
    /// Uniform-grid quadrature weight per fluid cell (`dx * dz`).
    pub cell_weight: f64,
}

impl SpodParams {
    pub fn new(n_fft: usize, n_ovlp: usize, window: WindowKind, cell_weight: f64) -> Result<Self> {
        if n_fft < 2 {
            return Err(Error::InvalidArgument(format!("n_fft must be >= 2, got {n_fft}")));
        }
        if n_ovlp >= n_fft {
            return Err(Error::InvalidArgument(format!(
                "overlap {n_ovlp} must be smaller than block length {n_fft}"
            )));
        }
        if !(cell_weight > 0.0) {
            return Err(Error::InvalidArgument("cell weight must be positive".into()));
        }
        Ok(Self { n_fft, n_ovlp, window, cell_weight })
    }
}

/// Segmentation of `n_t` snapshots into overlapping blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPlan {
    pub n_fft: usize,
    pub n_blk: usize,
    /// Zero-based block start indices, `starts[i] = i * (n_fft - n_ovlp)`.
    pub starts: Vec<usize>,
}

/// `n_blk = floor((n_t - n_ovlp) / (n_fft - n_ovlp))`.
pub fn plan_blocks(n_t: usize, n_fft: usize, n_ovlp: usize) -> Result<BlockPlan> {
    if n_fft < 2 {
        return Err(Error::InvalidArgument(format!("n_fft must be >= 2, got {n_fft}")));
    }
    if n_ovlp >= n_fft {
        return Err(Error::InvalidArgument(format!(
            "overlap {n_ovlp} must be smaller than block length {n_fft}"
        )));
    }
    if n_t < n_fft {
        return Err(Error::InsufficientData(format!(
            "need at least n_fft = {n_fft} snapshots, got {n_t}"
        )));
    }
    let stride = n_fft - n_ovlp;
    let n_blk = (n_t - n_ovlp) / stride;
    let starts: Vec<usize> = (0..n_blk).map(|i| i * stride).collect();
    debug_assert!(starts.iter().all(|&s| s + n_fft <= n_t));
    Ok(BlockPlan { n_fft, n_blk, starts })
}

/// Non-negative resolved frequencies of an `n_fft`-point DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub n_fc: usize,
    pub freqs: Array1<f64>,
    /// Frequency resolution `1 / (n_fft * dt)`.
    pub df: f64,
}

impl FrequencyGrid {
    /// Reduced frequency `f * h_ref / u_ref`.
    pub fn reduced(&self, f: f64, h_ref: f64, u_ref: f64) -> f64 {
        f * h_ref / u_ref
    }
}

/// `n_fc = ceil(n_fft / 2) + 1` retained bins at `k / (n_fft * dt)`; the
/// redundant negative-frequency branch is folded onto its positive conjugate
/// partner and the Nyquist bin is reported positive.
pub fn resolved_frequencies(n_fft: usize, dt: f64) -> Result<FrequencyGrid> {
    if n_fft < 2 {
        return Err(Error::InvalidArgument(format!("n_fft must be >= 2, got {n_fft}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let df = 1.0 / (n_fft as f64 * dt);
    let n_fc = n_fft.div_ceil(2) + 1;
    let freqs = Array1::from_iter((0..n_fc).map(|k| k as f64 * df));
    Ok(FrequencyGrid { n_fc, freqs, df })
}

/// Per-frequency complex mode matrices with eigenvalue spectra.
#[derive(Debug, Clone)]
pub struct SpodBasis {
    pub params: SpodParams,
    pub grid: FrequencyGrid,
    pub n_blk: usize,
    pub n_xv: usize,
    /// Snapshot interval of the source data.
    pub dt: f64,
    /// Per-entry quadrature weights over the stacked state (zero on solid
    /// cells).
    pub weights: Array1<f64>,
    /// One `[n_xv, n_blk]` matrix per retained frequency; columns whose
    /// eigenvalue is numerically zero are zeroed.
    pub modes: Vec<Array2<Complex64>>,
    /// Descending eigenvalues per frequency, length `n_blk` each.
    pub eigenvalues: Vec<Array1<f64>>,
    /// Number of numerically nonzero modes per frequency.
    pub ranks: Vec<usize>,
}

impl SpodBasis {
    pub fn n_fc(&self) -> usize {
        self.grid.n_fc
    }

    /// Total modal energy summed over every frequency and rank.
    pub fn total_energy(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.sum()).sum()
    }

    /// Stable identifier tying coefficient files to the basis they came from.
    /// Hashes the estimation parameters and the full eigenvalue spectra.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.params.n_fft.to_le_bytes());
        h.update(self.params.n_ovlp.to_le_bytes());
        h.update([self.params.window.tag()]);
        h.update(self.n_blk.to_le_bytes());
        h.update(self.n_xv.to_le_bytes());
        h.update(self.grid.n_fc.to_le_bytes());
        h.update(self.dt.to_le_bytes());
        for ev in &self.eigenvalues {
            for &l in ev.iter() {
                h.update(l.to_le_bytes());
            }
        }
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Check weighted orthonormality of the nonzero modes at every frequency.
    /// Returns the largest deviation `max |Phi* W Phi - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (k, modes) in self.modes.iter().enumerate() {
            let r = self.ranks[k];
            for a in 0..r {
                for b in 0..r {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..self.n_xv {
                        acc += modes[[i, a]].conj() * self.weights[i] * modes[[i, b]];
                    }
                    let expect = if a == b { 1.0 } else { 0.0 };
                    worst = worst.max((acc - expect).norm());
                }
            }
        }
        worst
    }
}

/// Full SPOD of a fluctuation dataset: block segmentation, windowed DFT, and
/// one Hermitian eigenproblem per retained frequency.
pub fn compute_spod(fluct: &SnapshotDataset, params: &SpodParams) -> Result<SpodBasis> {
    let plan = plan_blocks(fluct.n_t(), params.n_fft, params.n_ovlp)?;
    let ensemble = windowed_block_dft(fluct, &plan, params)?;
    compute_spod_from_ensemble(fluct, params, &plan, &ensemble)
}

pub(crate) fn compute_spod_from_ensemble(
    fluct: &SnapshotDataset,
    params: &SpodParams,
    plan: &BlockPlan,
    ensemble: &FourierEnsemble,
) -> Result<SpodBasis> {
    let weights = fluct.geometry.quadrature_weights(fluct.n_v());
    let grid = resolved_frequencies(params.n_fft, fluct.meta.dt)?;

    let solve = |qhat: &Array2<Complex64>| spod_at_frequency(qhat, &weights);
    let per_freq: Vec<FrequencyModes> = if rayon::current_num_threads() > 1 {
        use rayon::prelude::*;
        // Frequencies are independent; ordered collect keeps the output
        // deterministic regardless of scheduling.
        ensemble
            .per_frequency
            .par_iter()
            .map(solve)
            .collect::<Result<_>>()?
    } else {
        ensemble.per_frequency.iter().map(solve).collect::<Result<_>>()?
    };

    let mut modes = Vec::with_capacity(per_freq.len());
    let mut eigenvalues = Vec::with_capacity(per_freq.len());
    let mut ranks = Vec::with_capacity(per_freq.len());
    for fm in per_freq {
        modes.push(fm.modes);
        eigenvalues.push(fm.eigenvalues);
        ranks.push(fm.rank);
    }

    Ok(SpodBasis {
        params: params.clone(),
        grid,
        n_blk: plan.n_blk,
        n_xv: fluct.n_xv(),
        dt: fluct.meta.dt,
        weights,
        modes,
        eigenvalues,
        ranks,
    })
}
