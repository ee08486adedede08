//! Windowed per-block DFT and regrouping of realizations by frequency.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dataset::SnapshotDataset;
use crate::error::{Error, Result};

use super::{resolved_frequencies, BlockPlan, SpodParams, WindowKind};

/// Per-frequency matrices of Fourier realizations, `[n_xv, n_blk]` each.
#[derive(Debug, Clone)]
pub struct FourierEnsemble {
    pub per_frequency: Vec<Array2<Complex64>>,
    pub n_blk: usize,
    pub n_xv: usize,
}

/// Window samples, numpy's symmetric convention.
pub fn window_samples(kind: WindowKind, n: usize) -> Array1<f64> {
    let denom = (n.max(2) - 1) as f64;
    Array1::from_iter((0..n).map(|j| {
        let c = (2.0 * std::f64::consts::PI * j as f64 / denom).cos();
        match kind {
            WindowKind::Hamming => 0.54 - 0.46 * c,
            WindowKind::Hann => 0.5 - 0.5 * c,
            WindowKind::Rectangular => 1.0,
        }
    }))
}

/// Window every block in time, DFT per spatial entry, and regroup the
/// realizations per retained frequency.
///
/// Realizations are scaled by `sqrt(dt / sum w^2)` so that squared magnitudes
/// estimate a power spectral density, and by `sqrt(2)` at strictly positive
/// non-Nyquist bins so the retained one-sided spectrum carries the full
/// two-sided energy.
pub fn windowed_block_dft(
    fluct: &SnapshotDataset,
    plan: &BlockPlan,
    params: &SpodParams,
) -> Result<FourierEnsemble> {
    let n_fft = params.n_fft;
    if plan.n_fft != n_fft {
        return Err(Error::Internal("block plan built for a different n_fft".into()));
    }
    let n_t = fluct.n_t();
    for &start in &plan.starts {
        if start + n_fft > n_t {
            return Err(Error::Internal(format!(
                "block at {start} overruns {n_t} snapshots"
            )));
        }
    }
    let dt = fluct.meta.dt;
    let n_xv = fluct.n_xv();
    let n_cells = fluct.geometry.n_cells();
    let n_v = fluct.n_v();

    let window = window_samples(params.window, n_fft);
    let wsum2: f64 = window.iter().map(|w| w * w).sum();
    // dt * (sum_j w_j^2 * dt)^(-1/2) = sqrt(dt / sum_j w_j^2)
    let scale = (dt / wsum2).sqrt();

    let grid = resolved_frequencies(n_fft, dt)?;
    let n_fc = grid.n_fc;
    let nyquist_bin = if n_fft % 2 == 0 { Some(n_fft / 2) } else { None };

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);

    let mut per_frequency = vec![Array2::zeros((n_xv, plan.n_blk)); n_fc];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (b, &start) in plan.starts.iter().enumerate() {
        for row in 0..n_xv {
            let comp = row / n_cells;
            let cell = row % n_cells;
            debug_assert!(comp < n_v);
            for j in 0..n_fft {
                buf[j] = Complex64::new(
                    fluct.velocity[[start + j, comp, cell]] * window[j] * scale,
                    0.0,
                );
            }
            fft.process(&mut buf);
            for k in 0..n_fc {
                let fold = if k > 0 && Some(k) != nyquist_bin {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                per_frequency[k][[row, b]] = buf[k] * fold;
            }
        }
    }

    for m in &per_frequency {
        if !m.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::InvalidData("non-finite Fourier realization".into()));
        }
    }

    Ok(FourierEnsemble { per_frequency, n_blk: plan.n_blk, n_xv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetMeta, GridGeometry};
    use ndarray::Array3;

    fn one_cell_dataset(samples: &[f64], dt: f64) -> SnapshotDataset {
        let geometry = GridGeometry::unmasked(1, 1, 1.0, 1.0).unwrap();
        SnapshotDataset {
            geometry,
            meta: DatasetMeta::nondimensional(dt, 1),
            velocity: Array3::from_shape_vec((samples.len(), 1, 1), samples.to_vec()).unwrap(),
            concentration: None,
            times: Array1::from_iter((0..samples.len()).map(|t| t as f64 * dt)),
        }
    }

    /// Direct-summation DFT of one windowed block, the independent oracle.
    fn direct_bin(samples: &[f64], window: &Array1<f64>, scale: f64, bin: usize) -> Complex64 {
        let n = samples.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let ang = -2.0 * std::f64::consts::PI * (bin * j) as f64 / n as f64;
            acc += samples[j] * window[j] * scale * Complex64::new(ang.cos(), ang.sin());
        }
        acc
    }

    #[test]
    fn pure_real_tone_occupies_single_bin() {
        // cos at exactly bin 3 of a 32-point rectangular block.
        let n = 32;
        let dt = 0.5;
        let samples: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * 3.0 * t as f64 / n as f64).cos())
            .collect();
        let data = one_cell_dataset(&samples, dt);
        let plan = super::super::plan_blocks(n, n, 0).unwrap();
        let params = SpodParams::new(n, 0, WindowKind::Rectangular, 1.0).unwrap();
        let ens = windowed_block_dft(&data, &plan, &params).unwrap();
        for (k, m) in ens.per_frequency.iter().enumerate() {
            let mag = m[[0, 0]].norm();
            if k == 3 {
                assert!(mag > 1.0, "planted bin should be hot, got {mag}");
            } else {
                assert!(mag < 1e-10, "bin {k} leaked {mag}");
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_ensemble() {
        let data = one_cell_dataset(&vec![0.0; 16], 1.0);
        let plan = super::super::plan_blocks(16, 8, 4).unwrap();
        let params = SpodParams::new(8, 4, WindowKind::Hamming, 1.0).unwrap();
        let ens = windowed_block_dft(&data, &plan, &params).unwrap();
        for m in &ens.per_frequency {
            assert!(m.iter().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn hamming_bin_zero_matches_direct_summation() {
        let n = 16;
        let dt = 0.25;
        let samples = vec![1.0; n];
        let data = one_cell_dataset(&samples, dt);
        let plan = super::super::plan_blocks(n, n, 0).unwrap();
        let params = SpodParams::new(n, 0, WindowKind::Hamming, 1.0).unwrap();
        let ens = windowed_block_dft(&data, &plan, &params).unwrap();

        let window = window_samples(WindowKind::Hamming, n);
        let wsum2: f64 = window.iter().map(|w| w * w).sum();
        let scale = (dt / wsum2).sqrt();
        let expect = direct_bin(&samples, &window, scale, 0);
        let got = ens.per_frequency[0][[0, 0]];
        assert!((got - expect).norm() < 1e-12, "got {got}, expected {expect}");
        // Bin zero is not doubled, so this equals window sum times scaling.
        let wsum: f64 = window.sum();
        assert!((got.re - wsum * scale).abs() < 1e-12);
    }

    #[test]
    fn every_retained_bin_matches_direct_summation() {
        let n = 12;
        let dt = 1.0;
        let samples: Vec<f64> = (0..n).map(|t| ((t * t) as f64 * 0.37).sin()).collect();
        let data = one_cell_dataset(&samples, dt);
        let plan = super::super::plan_blocks(n, n, 0).unwrap();
        let params = SpodParams::new(n, 0, WindowKind::Hann, 1.0).unwrap();
        let ens = windowed_block_dft(&data, &plan, &params).unwrap();

        let window = window_samples(WindowKind::Hann, n);
        let wsum2: f64 = window.iter().map(|w| w * w).sum();
        let scale = (dt / wsum2).sqrt();
        for k in 0..ens.per_frequency.len() {
            let fold = if k > 0 && k != n / 2 { std::f64::consts::SQRT_2 } else { 1.0 };
            let expect = direct_bin(&samples, &window, scale, k) * fold;
            let got = ens.per_frequency[k][[0, 0]];
            assert!((got - expect).norm() < 1e-12, "bin {k}: got {got}, expected {expect}");
        }
    }
}
