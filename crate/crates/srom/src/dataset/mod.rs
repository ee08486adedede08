//! Snapshot ingestion, synthetic data generation, mean/fluctuation
//! decomposition and train/test splitting.
//!
//! A [`SnapshotDataset`] holds a time series of 2-D gridded field snapshots:
//! two velocity components (streamwise `u`, vertical `w`) and optionally a
//! scalar concentration. Solid (building-interior) cells are kept in the
//! rectangular arrays as zeros and flagged by the geometry mask so downstream
//! convolutional models see a regular grid.

mod io;
mod synth;

pub use io::{load_snapshots, write_snapshots};
pub use synth::{planted_pattern, synthesize_flow, PlantedComponent, SynthConfig};

use ndarray::{Array1, Array2, Array3, Axis};

use crate::error::{Error, Result};

/// Relative tolerance for checking uniform snapshot spacing.
const TIME_UNIFORMITY_RTOL: f64 = 1e-9;

/// Rectangular sampling grid with a fluid/solid mask.
///
/// Cells are indexed row-major with `z` as the outer loop: cell `(ix, iz)`
/// lives at flat index `iz * nx + ix`. Cell centers are at
/// `origin + ((ix + 0.5) dx, (iz + 0.5) dz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
    /// Per-cell fluid flag, `true` = fluid. Length `nx * nz`.
    pub mask: Vec<bool>,
    /// Coordinates of the lower-left corner of the grid, `(x0, z0)`.
    pub origin: (f64, f64),
}

impl GridGeometry {
    /// All-fluid grid with the origin centered in `x` and zero-based in `z`,
    /// matching the usual street-canyon sampling plane convention.
    pub fn unmasked(nx: usize, nz: usize, dx: f64, dz: f64) -> Result<Self> {
        Self::new(nx, nz, dx, dz, vec![true; nx * nz], None)
    }

    pub fn new(
        nx: usize,
        nz: usize,
        dx: f64,
        dz: f64,
        mask: Vec<bool>,
        origin: Option<(f64, f64)>,
    ) -> Result<Self> {
        if nx == 0 || nz == 0 {
            return Err(Error::InvalidArgument("grid must be non-empty".into()));
        }
        if !(dx > 0.0) || !(dz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cell spacings must be positive, got dx={dx}, dz={dz}"
            )));
        }
        if mask.len() != nx * nz {
            return Err(Error::InvalidArgument(format!(
                "mask length {} does not match nx*nz = {}",
                mask.len(),
                nx * nz
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidArgument(
                "grid must contain at least one fluid cell".into(),
            ));
        }
        let origin = origin.unwrap_or((-(nx as f64) * dx / 2.0, 0.0));
        Ok(Self { nx, nz, dx, dz, mask, origin })
    }

    /// Number of grid cells (fluid and solid).
    pub fn n_cells(&self) -> usize {
        self.nx * self.nz
    }

    pub fn cell_index(&self, ix: usize, iz: usize) -> usize {
        debug_assert!(ix < self.nx && iz < self.nz);
        iz * self.nx + ix
    }

    /// Nearest cell to a physical location. Returns `None` outside the grid.
    pub fn nearest_cell(&self, x: f64, z: f64) -> Option<(usize, usize)> {
        let fx = (x - self.origin.0) / self.dx - 0.5;
        let fz = (z - self.origin.1) / self.dz - 0.5;
        let ix = fx.round();
        let iz = fz.round();
        if ix < -0.5 || iz < -0.5 || ix > self.nx as f64 - 0.5 || iz > self.nz as f64 - 0.5 {
            return None;
        }
        let ix = (ix.max(0.0) as usize).min(self.nx - 1);
        let iz = (iz.max(0.0) as usize).min(self.nz - 1);
        Some((ix, iz))
    }

    /// Quadrature weight vector over the stacked state `[u cells; w cells; ...]`:
    /// `dx*dz` on fluid cells, zero on solid cells, replicated per component.
    pub fn quadrature_weights(&self, n_components: usize) -> Array1<f64> {
        let cell = self.dx * self.dz;
        let mut w = Array1::zeros(self.n_cells() * n_components);
        for c in 0..n_components {
            for (i, &fluid) in self.mask.iter().enumerate() {
                if fluid {
                    w[c * self.n_cells() + i] = cell;
                }
            }
        }
        w
    }
}

/// Physical metadata attached to a dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetMeta {
    /// Sample interval between snapshots (s).
    pub dt: f64,
    /// Reference velocity used for nondimensionalization.
    pub u_ref: f64,
    /// Reference concentration; `q_c / (u_ref * h_ref * span_length)` when an
    /// emission rate is known.
    pub c_ref: f64,
    /// Emission rate of the scalar source, if known.
    pub q_c: Option<f64>,
    /// Length of the line source.
    pub span_length: f64,
    /// Reference (building) height used to form reduced frequencies.
    pub h_ref: f64,
    /// Number of velocity components per cell.
    pub n_v: usize,
}

impl DatasetMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidData(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.u_ref > 0.0) {
            return Err(Error::InvalidData(format!(
                "u_ref must be positive, got {}",
                self.u_ref
            )));
        }
        if let Some(q_c) = self.q_c {
            let expect = q_c / (self.u_ref * self.h_ref * self.span_length);
            if (self.c_ref - expect).abs() > 1e-9 * expect.abs().max(1.0) {
                return Err(Error::InvalidData(format!(
                    "c_ref = {} inconsistent with q_c/(u_ref*h_ref*L) = {}",
                    self.c_ref, expect
                )));
            }
        }
        Ok(())
    }

    /// Plain metadata for unit-free test grids.
    pub fn nondimensional(dt: f64, n_v: usize) -> Self {
        Self { dt, u_ref: 1.0, c_ref: 1.0, q_c: None, span_length: 1.0, h_ref: 1.0, n_v }
    }
}

/// Where a [`MeanField`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MeanSource {
    ComputedFromTraining,
    Loaded,
}

/// Temporal mean of the velocity (and optionally concentration) fields.
#[derive(Debug, Clone)]
pub struct MeanField {
    /// `[n_v, n_cells]`.
    pub mean_velocity: Array2<f64>,
    pub mean_concentration: Option<Array1<f64>>,
    pub source: MeanSource,
}

impl MeanField {
    pub fn validate(&self, geometry: &GridGeometry) -> Result<()> {
        if self.mean_velocity.ncols() != geometry.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "mean field has {} cells, grid has {}",
                self.mean_velocity.ncols(),
                geometry.n_cells()
            )));
        }
        if !self.mean_velocity.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidData("mean velocity contains non-finite entries".into()));
        }
        for (i, &fluid) in geometry.mask.iter().enumerate() {
            if !fluid {
                for c in 0..self.mean_velocity.nrows() {
                    if self.mean_velocity[[c, i]] != 0.0 {
                        return Err(Error::InvalidData(format!(
                            "mean velocity nonzero on solid cell {i}"
                        )));
                    }
                }
                if let Some(mc) = &self.mean_concentration {
                    if mc[i] != 0.0 {
                        return Err(Error::InvalidData(format!(
                            "mean concentration nonzero on solid cell {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Time-major archive of gridded field snapshots.
///
/// Velocity is stored component-outer: `velocity[[t, c, cell]]`. A snapshot's
/// stacked state vector is the flattening `[u cells..., w cells...]`, which is
/// exactly the layout used by the spectral decomposition downstream.
#[derive(Debug, Clone)]
pub struct SnapshotDataset {
    pub geometry: GridGeometry,
    pub meta: DatasetMeta,
    /// `[n_t, n_v, n_cells]`.
    pub velocity: Array3<f64>,
    /// `[n_t, n_cells]`, present when the source recorded the scalar.
    pub concentration: Option<Array2<f64>>,
    /// Sample times, strictly increasing with uniform spacing `dt`.
    pub times: Array1<f64>,
}

impl SnapshotDataset {
    pub fn n_t(&self) -> usize {
        self.velocity.len_of(Axis(0))
    }

    pub fn n_v(&self) -> usize {
        self.velocity.len_of(Axis(1))
    }

    /// Length of the stacked per-snapshot state vector, `n_cells * n_v`.
    pub fn n_xv(&self) -> usize {
        self.geometry.n_cells() * self.n_v()
    }

    /// Snapshot matrix `[n_xv, n_t]` with components stacked per the
    /// `[u'; w']` convention.
    pub fn snapshot_matrix(&self) -> Array2<f64> {
        let n_t = self.n_t();
        let n_xv = self.n_xv();
        let mut q = Array2::zeros((n_xv, n_t));
        for t in 0..n_t {
            let frame = self.velocity.index_axis(Axis(0), t);
            let flat = frame.to_shape(n_xv).expect("contiguous frame");
            q.column_mut(t).assign(&flat);
        }
        q
    }

    /// Verify the structural invariants: uniform strictly-increasing times and
    /// exact zeros on solid cells in every stored field.
    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        let n_t = self.n_t();
        if self.times.len() != n_t {
            return Err(Error::InvalidData(format!(
                "times length {} does not match n_t = {n_t}",
                self.times.len()
            )));
        }
        if self.velocity.len_of(Axis(2)) != self.geometry.n_cells() {
            return Err(Error::InvalidData("velocity cell count does not match grid".into()));
        }
        if self.n_v() != self.meta.n_v {
            return Err(Error::InvalidData("component count disagrees with metadata".into()));
        }
        if let Some(c) = &self.concentration {
            if c.nrows() != n_t || c.ncols() != self.geometry.n_cells() {
                return Err(Error::InvalidData("concentration shape does not match grid".into()));
            }
        }
        let dt = self.meta.dt;
        for t in 1..n_t {
            let step = self.times[t] - self.times[t - 1];
            if step <= 0.0 || (step - dt).abs() > TIME_UNIFORMITY_RTOL * dt {
                return Err(Error::InvalidData(format!(
                    "non-uniform sample times: step {step} at index {t}, expected {dt}"
                )));
            }
        }
        for (i, &fluid) in self.geometry.mask.iter().enumerate() {
            if fluid {
                continue;
            }
            for t in 0..n_t {
                for c in 0..self.n_v() {
                    if self.velocity[[t, c, i]] != 0.0 {
                        return Err(Error::InvalidData(format!(
                            "solid cell {i} holds nonzero velocity at snapshot {t}"
                        )));
                    }
                }
                if let Some(conc) = &self.concentration {
                    if conc[[t, i]] != 0.0 {
                        return Err(Error::InvalidData(format!(
                            "solid cell {i} holds nonzero concentration at snapshot {t}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Subtract the temporal mean from every field.
///
/// When `mean` is `None` the mean is computed from `data` itself; passing a
/// stored training mean is how test windows are processed without leakage.
pub fn compute_fluctuations(
    data: &SnapshotDataset,
    mean: Option<&MeanField>,
) -> Result<(SnapshotDataset, MeanField)> {
    let n_t = data.n_t();
    let n_v = data.n_v();
    let n_cells = data.geometry.n_cells();

    let mean = match mean {
        Some(m) => {
            m.validate(&data.geometry)?;
            if m.mean_velocity.nrows() != n_v {
                return Err(Error::InvalidArgument(format!(
                    "mean has {} components, data has {n_v}",
                    m.mean_velocity.nrows()
                )));
            }
            if data.concentration.is_some() != m.mean_concentration.is_some() {
                return Err(Error::InvalidArgument(
                    "mean concentration presence does not match data".into(),
                ));
            }
            m.clone()
        }
        None => {
            let mut mv = Array2::zeros((n_v, n_cells));
            for t in 0..n_t {
                mv += &data.velocity.index_axis(Axis(0), t);
            }
            mv /= n_t as f64;
            let mc = data.concentration.as_ref().map(|c| {
                let mut m = Array1::zeros(n_cells);
                for t in 0..n_t {
                    m += &c.index_axis(Axis(0), t);
                }
                m / n_t as f64
            });
            // Means over exact zeros stay exactly zero, so solid cells are
            // preserved without re-masking.
            MeanField {
                mean_velocity: mv,
                mean_concentration: mc,
                source: MeanSource::ComputedFromTraining,
            }
        }
    };

    let mut fluct = data.clone();
    for t in 0..n_t {
        let mut frame = fluct.velocity.index_axis_mut(Axis(0), t);
        frame -= &mean.mean_velocity;
    }
    if let (Some(c), Some(mc)) = (fluct.concentration.as_mut(), mean.mean_concentration.as_ref()) {
        for t in 0..n_t {
            let mut row = c.index_axis_mut(Axis(0), t);
            row -= mc;
        }
    }
    Ok((fluct, mean))
}

/// Add a mean field back onto fluctuations, the inverse of
/// [`compute_fluctuations`].
pub fn add_mean(fluct: &SnapshotDataset, mean: &MeanField) -> Result<SnapshotDataset> {
    mean.validate(&fluct.geometry)?;
    let mut out = fluct.clone();
    for t in 0..out.n_t() {
        let mut frame = out.velocity.index_axis_mut(Axis(0), t);
        frame += &mean.mean_velocity;
    }
    if let (Some(c), Some(mc)) = (out.concentration.as_mut(), mean.mean_concentration.as_ref()) {
        for t in 0..c.nrows() {
            let mut row = c.index_axis_mut(Axis(0), t);
            row += mc;
        }
    }
    Ok(out)
}

/// Contiguous chronological split: the first `floor(ratio * n_t)` snapshots
/// become the training set.
pub fn split_train_test(
    data: &SnapshotDataset,
    ratio: f64,
) -> Result<(SnapshotDataset, SnapshotDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let n_t = data.n_t();
    let n_train = (ratio * n_t as f64).floor() as usize;
    if n_train < 2 {
        return Err(Error::InvalidArgument(format!(
            "training split of {n_train} snapshots is too short"
        )));
    }
    if n_train >= n_t {
        return Err(Error::InvalidArgument("empty test split".into()));
    }
    let slice_range = |d: &SnapshotDataset, lo: usize, hi: usize| SnapshotDataset {
        geometry: d.geometry.clone(),
        meta: d.meta.clone(),
        velocity: d.velocity.slice(ndarray::s![lo..hi, .., ..]).to_owned(),
        concentration: d
            .concentration
            .as_ref()
            .map(|c| c.slice(ndarray::s![lo..hi, ..]).to_owned()),
        times: d.times.slice(ndarray::s![lo..hi]).to_owned(),
    };
    Ok((slice_range(data, 0, n_train), slice_range(data, n_train, n_t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset(values: &[f64]) -> SnapshotDataset {
        // one cell, one component
        let geometry = GridGeometry::unmasked(1, 1, 1.0, 1.0).unwrap();
        let n_t = values.len();
        let velocity =
            Array3::from_shape_vec((n_t, 1, 1), values.to_vec()).unwrap();
        SnapshotDataset {
            geometry,
            meta: DatasetMeta::nondimensional(0.5, 1),
            velocity,
            concentration: None,
            times: Array1::from_iter((0..n_t).map(|t| 0.5 * t as f64)),
        }
    }

    #[test]
    fn constant_field_has_zero_fluctuations() {
        let data = tiny_dataset(&[5.0, 5.0, 5.0, 5.0]);
        let (fluct, mean) = compute_fluctuations(&data, None).unwrap();
        assert_eq!(mean.mean_velocity[[0, 0]], 5.0);
        assert!(fluct.velocity.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_snapshot_mean_and_fluctuations() {
        let data = tiny_dataset(&[1.0, 3.0]);
        let (fluct, mean) = compute_fluctuations(&data, None).unwrap();
        assert_eq!(mean.mean_velocity[[0, 0]], 2.0);
        assert_eq!(fluct.velocity[[0, 0, 0]], -1.0);
        assert_eq!(fluct.velocity[[1, 0, 0]], 1.0);
    }

    #[test]
    fn integer_period_sine_has_negligible_mean() {
        let n = 64;
        let vals: Vec<f64> =
            (0..n).map(|t| (2.0 * std::f64::consts::PI * t as f64 / n as f64).sin()).collect();
        let data = tiny_dataset(&vals);
        let (fluct, mean) = compute_fluctuations(&data, None).unwrap();
        assert!(mean.mean_velocity[[0, 0]].abs() < 1e-12);
        for t in 0..n {
            assert!((fluct.velocity[[t, 0, 0]] - vals[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn provided_mean_is_subtracted_as_is() {
        let data = tiny_dataset(&[1.0, 3.0]);
        let mean = MeanField {
            mean_velocity: Array2::from_elem((1, 1), 10.0),
            mean_concentration: None,
            source: MeanSource::Loaded,
        };
        let (fluct, used) = compute_fluctuations(&data, Some(&mean)).unwrap();
        assert_eq!(used.source, MeanSource::Loaded);
        assert_eq!(fluct.velocity[[0, 0, 0]], -9.0);
    }

    #[test]
    fn mean_shape_mismatch_rejected() {
        let data = tiny_dataset(&[1.0, 3.0]);
        let mean = MeanField {
            mean_velocity: Array2::zeros((1, 3)),
            mean_concentration: None,
            source: MeanSource::Loaded,
        };
        assert!(matches!(
            compute_fluctuations(&data, Some(&mean)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn fluctuation_plus_mean_restores_field() {
        let vals: Vec<f64> = (0..16).map(|t| (1.3 * t as f64).sin() + 0.7).collect();
        let data = tiny_dataset(&vals);
        let (fluct, mean) = compute_fluctuations(&data, None).unwrap();
        let back = add_mean(&fluct, &mean).unwrap();
        for t in 0..16 {
            assert!((back.velocity[[t, 0, 0]] - data.velocity[[t, 0, 0]]).abs() <= 1e-14);
        }
    }

    #[test]
    fn split_matches_floor_arithmetic() {
        let data = tiny_dataset(&vec![0.0; 10]);
        let (train, test) = split_train_test(&data, 0.5).unwrap();
        assert_eq!(train.n_t(), 5);
        assert_eq!(test.n_t(), 5);
        assert_eq!(test.times[0], 2.5);
    }

    #[test]
    fn split_ratio_bounds_enforced() {
        let data = tiny_dataset(&vec![0.0; 10]);
        assert!(matches!(split_train_test(&data, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(split_train_test(&data, 0.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn split_paper_shaped_counts() {
        // 9:1 split of 80000 snapshots -> 72000 / 8000 (checked on a scaled-down
        // dataset with identical arithmetic).
        let data = tiny_dataset(&vec![0.0; 800]);
        let (train, test) = split_train_test(&data, 0.9).unwrap();
        assert_eq!(train.n_t(), 720);
        assert_eq!(test.n_t(), 80);
    }

    #[test]
    fn nearest_cell_rounding() {
        let g = GridGeometry::unmasked(4, 3, 0.5, 0.5).unwrap();
        // origin = (-1, 0); centers at x = -0.75, -0.25, 0.25, 0.75
        assert_eq!(g.nearest_cell(-0.75, 0.25), Some((0, 0)));
        assert_eq!(g.nearest_cell(0.30, 1.2), Some((2, 2)));
        assert_eq!(g.nearest_cell(5.0, 0.0), None);
    }
}
