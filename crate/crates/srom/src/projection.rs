//! Time-domain expansion coefficients by weighted oblique projection onto a
//! (possibly pruned) set of SPOD modes, and field reconstruction from those
//! coefficients.
//!
//! The coefficient matrix solves `A = (Phi* W Phi)^(-1) Phi* W Q`. The Gram
//! matrix is factorized, never inverted explicitly; ill-conditioned or
//! rank-deficient selections fall back to a truncated pseudo-solve. When the
//! selection holds more modes than state dimensions the same minimal-norm
//! solution is obtained through the dual operator `W^(1/2) Phi Phi* W^(1/2)`,
//! which is the small side of the problem.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3, ArrayViewD, Axis};
use num_complex::Complex64;

use crate::dataset::{MeanField, SnapshotDataset};
use crate::error::{Error, Result};
use crate::pruning::ModeSelection;
use crate::spod::{hermitian_eigen, SpodBasis};

/// Condition-number threshold beyond which the factorized solve is abandoned
/// for the truncated pseudo-solve.
pub const GRAM_CONDITION_LIMIT: f64 = 1e10;

/// Relative singular-value cutoff of the truncated pseudo-solve.
pub const PSEUDO_CUTOFF: f64 = 1e-10;

/// Complex time-domain expansion coefficients for a selected mode set.
#[derive(Debug, Clone)]
pub struct CoefficientSeries {
    /// `[n_m, n_t]`; row order matches `mode_index`.
    pub values: Array2<Complex64>,
    /// (frequency index, rank) per row.
    pub mode_index: Vec<(usize, usize)>,
    /// Fingerprint of the basis the coefficients were projected on.
    pub source_basis: String,
}

/// How the Gram system was solved, with its conditioning estimate.
#[derive(Debug, Clone)]
pub struct GramOperator {
    /// Estimated 2-norm condition number of the Gram matrix.
    pub condition_estimate: f64,
    /// `None` for the plain factorized solve; otherwise names the fallback.
    pub fallback: Option<String>,
}

fn selection_columns(basis: &SpodBasis, selection: Option<&ModeSelection>) -> Result<Vec<(usize, usize)>> {
    match selection {
        Some(sel) => {
            sel.validate(basis)?;
            Ok(sel.kept.clone())
        }
        None => Ok(ModeSelection::all(basis).kept),
    }
}

/// Stack the selected mode columns into `[n_xv, n_m]`, in the given order.
fn mode_matrix(basis: &SpodBasis, index: &[(usize, usize)]) -> Array2<Complex64> {
    let n_xv = basis.n_xv;
    let mut phi = Array2::zeros((n_xv, index.len()));
    for (c, &(k, n)) in index.iter().enumerate() {
        phi.column_mut(c).assign(&basis.modes[k].column(n));
    }
    phi
}

/// Power-iteration estimate of the extreme eigenvalues of a Hermitian PD
/// matrix given a solver for `G x = b`. Cheap and deterministic.
fn condition_estimate(
    gram: &nalgebra::DMatrix<nalgebra::Complex<f64>>,
    chol: &nalgebra::Cholesky<nalgebra::Complex<f64>, nalgebra::Dyn>,
) -> f64 {
    let n = gram.nrows();
    let mut v = nalgebra::DVector::from_fn(n, |i, _| {
        nalgebra::Complex::new(1.0 + 0.01 * (i as f64).sin(), 0.0)
    });
    v /= nalgebra::Complex::new(v.norm(), 0.0);
    let mut lambda_max = 0.0f64;
    for _ in 0..8 {
        let w = gram * &v;
        lambda_max = w.norm();
        if lambda_max == 0.0 {
            return f64::INFINITY;
        }
        v = w / nalgebra::Complex::new(lambda_max, 0.0);
    }
    let mut u = nalgebra::DVector::from_fn(n, |i, _| {
        nalgebra::Complex::new(1.0 + 0.01 * (i as f64).cos(), 0.0)
    });
    u /= nalgebra::Complex::new(u.norm(), 0.0);
    let mut inv_norm = 0.0f64;
    for _ in 0..8 {
        let w = chol.solve(&u);
        inv_norm = w.norm();
        if inv_norm == 0.0 {
            return f64::INFINITY;
        }
        u = w / nalgebra::Complex::new(inv_norm, 0.0);
    }
    lambda_max * inv_norm
}

fn to_nalgebra(m: &Array2<Complex64>) -> nalgebra::DMatrix<nalgebra::Complex<f64>> {
    nalgebra::DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        nalgebra::Complex::new(m[[i, j]].re, m[[i, j]].im)
    })
}

/// Solve `G X = B` for Hermitian PSD `G`, choosing between Cholesky and the
/// eigenvalue-truncated pseudo-solve.
fn gram_solve(
    gram: &Array2<Complex64>,
    rhs: &Array2<Complex64>,
) -> Result<(Array2<Complex64>, GramOperator)> {
    let n = gram.nrows();
    let g = to_nalgebra(gram);
    if let Some(chol) = g.clone().cholesky() {
        let cond = condition_estimate(&g, &chol);
        if cond <= GRAM_CONDITION_LIMIT {
            let b = to_nalgebra(rhs);
            let x = chol.solve(&b);
            let mut out = Array2::zeros((n, rhs.ncols()));
            for i in 0..n {
                for j in 0..rhs.ncols() {
                    out[[i, j]] = Complex64::new(x[(i, j)].re, x[(i, j)].im);
                }
            }
            return Ok((out, GramOperator { condition_estimate: cond, fallback: None }));
        }
        log::warn!("Gram condition estimate {cond:.3e} exceeds limit; using pseudo-solve");
    }
    // Truncated pseudo-solve via Hermitian eigendecomposition.
    let (vals, vecs) = hermitian_eigen(gram)?;
    let lmax = vals.iter().cloned().fold(0.0f64, f64::max);
    if lmax <= 0.0 {
        return Err(Error::Numeric("Gram matrix is numerically zero".into()));
    }
    let cutoff = PSEUDO_CUTOFF * lmax;
    let kept: Vec<usize> = (0..n).filter(|&i| vals[i] > cutoff).collect();
    if kept.is_empty() {
        return Err(Error::Numeric("no Gram eigenvalue survives the pseudo-solve cutoff".into()));
    }
    // X = V diag(1/l) V* B over the kept spectrum.
    let vt_b = {
        let mut m = Array2::zeros((kept.len(), rhs.ncols()));
        for (r, &i) in kept.iter().enumerate() {
            for j in 0..rhs.ncols() {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += vecs[[k, i]].conj() * rhs[[k, j]];
                }
                m[[r, j]] = acc / vals[i];
            }
        }
        m
    };
    let mut out = Array2::zeros((n, rhs.ncols()));
    for k in 0..n {
        for j in 0..rhs.ncols() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (r, &i) in kept.iter().enumerate() {
                acc += vecs[[k, i]] * vt_b[[r, j]];
            }
            out[[k, j]] = acc;
        }
    }
    let lmin = kept.iter().map(|&i| vals[i]).fold(f64::INFINITY, f64::min);
    Ok((
        out,
        GramOperator {
            condition_estimate: lmax / lmin,
            fallback: Some("pseudo-solve".into()),
        },
    ))
}

/// Weighted oblique projection of a fluctuation dataset onto the selected
/// modes: `A = (Phi* W Phi)^(-1) Phi* W Q`.
pub fn project_coefficients(
    basis: &SpodBasis,
    selection: Option<&ModeSelection>,
    fluct: &SnapshotDataset,
) -> Result<CoefficientSeries> {
    let (coeffs, _) = project_coefficients_with_gram(basis, selection, fluct)?;
    Ok(coeffs)
}

/// As [`project_coefficients`], also returning the Gram solve diagnostics.
pub fn project_coefficients_with_gram(
    basis: &SpodBasis,
    selection: Option<&ModeSelection>,
    fluct: &SnapshotDataset,
) -> Result<(CoefficientSeries, GramOperator)> {
    if fluct.n_xv() != basis.n_xv {
        return Err(Error::InvalidArgument(format!(
            "data state size {} does not match basis {}",
            fluct.n_xv(),
            basis.n_xv
        )));
    }
    let data_weights = fluct.geometry.quadrature_weights(fluct.n_v());
    let wdiff = data_weights
        .iter()
        .zip(basis.weights.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if wdiff > 1e-12 {
        return Err(Error::InvalidArgument(
            "data quadrature weights disagree with the basis weighting".into(),
        ));
    }

    let requested = selection_columns(basis, selection)?;
    // Solve in canonical (frequency, rank) order so numerics are invariant to
    // the selection's greedy ordering, then permute rows back.
    let mut canonical: Vec<(usize, usize)> = requested.clone();
    canonical.sort_unstable();

    let n_m = canonical.len();
    if n_m == 0 {
        return Err(Error::InvalidArgument("empty mode selection".into()));
    }
    let n_xv = basis.n_xv;
    let n_t = fluct.n_t();
    let phi = mode_matrix(basis, &canonical);
    let q = fluct.snapshot_matrix().mapv(|v| Complex64::new(v, 0.0));

    // Phi* W Q, the weighted correlation of every mode with every snapshot.
    let wq = {
        let mut wq = q.clone();
        for i in 0..n_xv {
            let w = basis.weights[i];
            for t in 0..n_t {
                wq[[i, t]] *= w;
            }
        }
        wq
    };
    let phi_h = phi.t().mapv(|v| v.conj());
    let rhs = phi_h.dot(&wq);

    let (a_canonical, gram_op) = if n_m <= n_xv {
        let wphi = {
            let mut wphi = phi.clone();
            for i in 0..n_xv {
                let w = basis.weights[i];
                for c in 0..n_m {
                    wphi[[i, c]] *= w;
                }
            }
            wphi
        };
        let gram = phi_h.dot(&wphi);
        gram_solve(&gram, &rhs)?
    } else {
        dual_minimal_norm(basis, &phi, &q)?
    };

    // Permute rows back to the requested order.
    let pos_of: std::collections::BTreeMap<(usize, usize), usize> =
        canonical.iter().enumerate().map(|(i, &kn)| (kn, i)).collect();
    let mut values = Array2::zeros((n_m, n_t));
    for (row, kn) in requested.iter().enumerate() {
        values.row_mut(row).assign(&a_canonical.row(pos_of[kn]));
    }

    Ok((
        CoefficientSeries { values, mode_index: requested, source_basis: basis.fingerprint() },
        gram_op,
    ))
}

/// Minimal-norm least-squares coefficients through the dual operator
/// `M = W^(1/2) Phi Phi* W^(1/2)` (size `n_xv`), used when the selection has
/// more modes than state dimensions and the Gram matrix is necessarily
/// singular. Algebraically identical to the truncated pseudo-solve of the
/// Gram system.
fn dual_minimal_norm(
    basis: &SpodBasis,
    phi: &Array2<Complex64>,
    q: &Array2<Complex64>,
) -> Result<(Array2<Complex64>, GramOperator)> {
    let n_xv = basis.n_xv;
    let sqrt_w: Vec<f64> = basis.weights.iter().map(|w| w.max(0.0).sqrt()).collect();
    let mut b = phi.clone();
    for i in 0..n_xv {
        for c in 0..phi.ncols() {
            b[[i, c]] *= sqrt_w[i];
        }
    }
    let b_h = b.t().mapv(|v| v.conj());
    let m = b.dot(&b_h);
    let (vals, vecs) = hermitian_eigen(&m)?;
    let lmax = vals.iter().cloned().fold(0.0f64, f64::max);
    if lmax <= 0.0 {
        return Err(Error::Numeric("dual operator is numerically zero".into()));
    }
    let cutoff = PSEUDO_CUTOFF * lmax;
    let kept: Vec<usize> = (0..n_xv).filter(|&i| vals[i] > cutoff).collect();

    let mut qw = q.clone();
    for i in 0..n_xv {
        for t in 0..q.ncols() {
            qw[[i, t]] *= sqrt_w[i];
        }
    }
    // A = B* V diag(1/l) V* Q_w over the kept spectrum.
    let mut v_kept = Array2::zeros((n_xv, kept.len()));
    for (c, &i) in kept.iter().enumerate() {
        v_kept.column_mut(c).assign(&vecs.column(i));
    }
    let vh_q = v_kept.t().mapv(|v| v.conj()).dot(&qw);
    let mut scaled = vh_q;
    for (c, &i) in kept.iter().enumerate() {
        for t in 0..scaled.ncols() {
            scaled[[c, t]] /= Complex64::new(vals[i], 0.0);
        }
    }
    let a = b_h.dot(&v_kept).dot(&scaled);
    let lmin = kept.iter().map(|&i| vals[i]).fold(f64::INFINITY, f64::min);
    Ok((
        a,
        GramOperator {
            condition_estimate: lmax / lmin,
            fallback: Some("dual-pseudo-solve".into()),
        },
    ))
}

/// Field reconstruction from coefficients.
#[derive(Debug, Clone)]
pub struct ReconstructedField {
    /// `[n_t, n_v, n_cells]`, the real part of `Phi A` (plus the mean when
    /// one was supplied).
    pub fluct: Array3<f64>,
    /// `||Im(Phi A)||_F / ||Phi A||_F`; near zero when the coefficients came
    /// from real data projected on a conjugate-complete selection.
    pub imag_residual: f64,
}

/// Assemble field snapshots as the real part of `Phi A`, optionally adding a
/// stored mean field.
pub fn reconstruct(
    basis: &SpodBasis,
    selection: Option<&ModeSelection>,
    coeffs: &CoefficientSeries,
    mean: Option<&MeanField>,
) -> Result<ReconstructedField> {
    if coeffs.source_basis != basis.fingerprint() {
        return Err(Error::InvalidArgument(
            "coefficient series was projected on a different basis".into(),
        ));
    }
    let expected = selection_columns(basis, selection)?;
    if expected != coeffs.mode_index {
        return Err(Error::InvalidArgument(
            "coefficient rows do not match the given selection".into(),
        ));
    }
    if coeffs.values.nrows() != coeffs.mode_index.len() {
        return Err(Error::InvalidArgument("coefficient rows disagree with mode index".into()));
    }
    let phi = mode_matrix(basis, &coeffs.mode_index);
    let q_tilde = phi.dot(&coeffs.values);

    let mut re2 = 0.0f64;
    let mut im2 = 0.0f64;
    for v in q_tilde.iter() {
        re2 += v.re * v.re;
        im2 += v.im * v.im;
    }
    let total = (re2 + im2).sqrt();
    let imag_residual = if total > 0.0 { im2.sqrt() / total } else { 0.0 };

    let n_t = coeffs.values.ncols();
    let n_cells = basis.n_xv / n_v_of(basis, mean)?;
    let n_v = basis.n_xv / n_cells;
    let mut fluct = Array3::zeros((n_t, n_v, n_cells));
    for t in 0..n_t {
        for c in 0..n_v {
            for i in 0..n_cells {
                fluct[[t, c, i]] = q_tilde[[c * n_cells + i, t]].re;
            }
        }
    }
    if let Some(m) = mean {
        for t in 0..n_t {
            let mut frame = fluct.index_axis_mut(Axis(0), t);
            frame += &m.mean_velocity;
        }
    }
    Ok(ReconstructedField { fluct, imag_residual })
}

fn n_v_of(basis: &SpodBasis, mean: Option<&MeanField>) -> Result<usize> {
    if let Some(m) = mean {
        let n_v = m.mean_velocity.nrows();
        if basis.n_xv % n_v != 0 {
            return Err(Error::InvalidArgument(
                "mean component count does not divide the basis state size".into(),
            ));
        }
        return Ok(n_v);
    }
    // Velocity-only bases in this crate always stack two components.
    Ok(2)
}

/// Normalized mean-squared error report.
#[derive(Debug, Clone)]
pub struct NmseReport {
    /// `sum (ref - approx)^2 / sum ref^2` over everything.
    pub total: f64,
    /// Per-snapshot NMSE along the leading axis; NaN where a snapshot has no
    /// reference energy.
    pub per_snapshot: Vec<f64>,
    /// Mean of the finite per-snapshot values.
    pub time_averaged: f64,
}

impl NmseReport {
    pub fn nrmse(&self) -> f64 {
        self.total.sqrt()
    }
}

/// NMSE between two equally shaped field arrays whose leading axis is time.
pub fn nmse(reference: &ArrayViewD<'_, f64>, approx: &ArrayViewD<'_, f64>) -> Result<NmseReport> {
    if reference.shape() != approx.shape() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: {:?} vs {:?}",
            reference.shape(),
            approx.shape()
        )));
    }
    if reference.ndim() == 0 || reference.len() == 0 {
        return Err(Error::InvalidArgument("empty input".into()));
    }
    let n_t = reference.shape()[0];
    let mut per_snapshot = Vec::with_capacity(n_t);
    let mut num_total = 0.0;
    let mut den_total = 0.0;
    for t in 0..n_t {
        let r = reference.index_axis(Axis(0), t);
        let a = approx.index_axis(Axis(0), t);
        let mut num = 0.0;
        let mut den = 0.0;
        for (rv, av) in r.iter().zip(a.iter()) {
            let d = rv - av;
            num += d * d;
            den += rv * rv;
        }
        num_total += num;
        den_total += den;
        per_snapshot.push(if den > 0.0 { num / den } else { f64::NAN });
    }
    if den_total <= 0.0 {
        return Err(Error::UndefinedMetric("reference field has zero energy".into()));
    }
    let finite: Vec<f64> = per_snapshot.iter().copied().filter(|v| v.is_finite()).collect();
    let time_averaged = if finite.is_empty() {
        num_total / den_total
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    Ok(NmseReport { total: num_total / den_total, per_snapshot, time_averaged })
}

// --- SCOF coefficient file -------------------------------------------------

const SCOF_MAGIC: &[u8; 4] = b"SCOF";
const SCOF_VERSION: u32 = 1;

/// Write a coefficient series: magic "SCOF", version, n_m, n_t, basis
/// fingerprint, (k, n) table, interleaved re/im matrix.
pub fn write_coefficients<P: AsRef<Path>>(path: P, coeffs: &CoefficientSeries) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SCOF_MAGIC)?;
    w.write_u32::<LittleEndian>(SCOF_VERSION)?;
    w.write_u32::<LittleEndian>(coeffs.values.nrows() as u32)?;
    w.write_u32::<LittleEndian>(coeffs.values.ncols() as u32)?;
    let fp = coeffs.source_basis.as_bytes();
    w.write_u32::<LittleEndian>(fp.len() as u32)?;
    w.write_all(fp)?;
    for &(k, n) in &coeffs.mode_index {
        w.write_u32::<LittleEndian>(k as u32)?;
        w.write_u32::<LittleEndian>(n as u32)?;
    }
    for v in coeffs.values.iter() {
        w.write_f64::<LittleEndian>(v.re)?;
        w.write_f64::<LittleEndian>(v.im)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_coefficients<P: AsRef<Path>>(path: P) -> Result<CoefficientSeries> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for SCOF header".into()))?;
    if &magic != SCOF_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"SCOF\"")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != SCOF_VERSION {
        return Err(Error::Format(format!("unsupported SCOF version {version}")));
    }
    let n_m = r.read_u32::<LittleEndian>()? as usize;
    let n_t = r.read_u32::<LittleEndian>()? as usize;
    let fp_len = r.read_u32::<LittleEndian>()? as usize;
    if fp_len > 1024 {
        return Err(Error::CorruptFile("unreasonable fingerprint length".into()));
    }
    let mut fp = vec![0u8; fp_len];
    r.read_exact(&mut fp).map_err(|_| Error::CorruptFile("fingerprint truncated".into()))?;
    let source_basis = String::from_utf8(fp)
        .map_err(|_| Error::CorruptFile("fingerprint is not UTF-8".into()))?;
    let mut mode_index = Vec::with_capacity(n_m);
    for _ in 0..n_m {
        let k = r
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::CorruptFile("mode index truncated".into()))? as usize;
        let n = r.read_u32::<LittleEndian>()? as usize;
        mode_index.push((k, n));
    }
    let mut values = Array2::zeros((n_m, n_t));
    for v in values.iter_mut() {
        let re = r
            .read_f64::<LittleEndian>()
            .map_err(|_| Error::CorruptFile("coefficient matrix truncated".into()))?;
        let im = r.read_f64::<LittleEndian>()?;
        *v = Complex64::new(re, im);
    }
    Ok(CoefficientSeries { values, mode_index, source_basis })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{compute_fluctuations, synthesize_flow, PlantedComponent, SynthConfig};
    use crate::spod::{compute_spod, SpodParams, WindowKind};
    use ndarray::ArrayD;

    fn planted_setup(noise: f64) -> (SpodBasis, SnapshotDataset) {
        let cfg = SynthConfig {
            nx: 5,
            nz: 4,
            n_t: 128,
            dt: 0.5,
            components: vec![
                PlantedComponent { pattern: 0, frequency: 0.125, amplitude: 1.5, phase: 0.2 },
                PlantedComponent { pattern: 1, frequency: 0.25, amplitude: 1.0, phase: 0.9 },
            ],
            noise_sigma: noise,
            ..SynthConfig::default()
        };
        let data = synthesize_flow(&cfg, 9).unwrap();
        let (fluct, _) = compute_fluctuations(&data, None).unwrap();
        let params = SpodParams::new(32, 16, WindowKind::Hamming, cfg.dx * cfg.dz).unwrap();
        let basis = compute_spod(&fluct, &params).unwrap();
        (basis, fluct)
    }

    #[test]
    fn zero_data_projects_to_zero() {
        let (basis, fluct) = planted_setup(0.1);
        let mut zero = fluct.clone();
        zero.velocity.fill(0.0);
        let coeffs = project_coefficients(&basis, None, &zero).unwrap();
        assert!(coeffs.values.iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn exact_inverse_problem_recovers_coefficients() {
        // Build Q = Phi A0 from a well-conditioned single-frequency mode set,
        // then check the projection returns A0.
        let (basis, _fluct) = planted_setup(0.3);
        // Single-frequency selections are orthonormal, hence perfectly
        // conditioned.
        let k_hot = crate::pruning::frequency_rank_by_separation(&basis).unwrap().ranked[0].0;
        let rank = basis.ranks[k_hot].min(3);
        let sel = ModeSelection {
            kept: (0..rank).map(|n| (k_hot, n)).collect(),
            n_f: 1,
            n_m: rank,
            eps_ric: 1.0,
            eps_gamma: 1.0,
            provenance: vec![
                crate::pruning::ModeProvenance {
                    delta_lambda_rank: 0,
                    ric_at_inclusion: 1.0,
                    max_gamma: 0.0
                };
                rank
            ],
        };
        let n_t = 16;
        let mut rng_state = 123u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng_state >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        let a0 = Array2::from_shape_fn((rank, n_t), |_| Complex64::new(next(), next()));
        let phi = mode_matrix(&basis, &sel.kept);
        let q = phi.dot(&a0);
        // Real data requirement does not apply here; drive the solver matrix
        // path directly through a synthetic dataset holding Re(Q) only would
        // lose information, so instead check the algebra on the Gram solve.
        let mut wphi = phi.clone();
        for i in 0..basis.n_xv {
            for c in 0..rank {
                wphi[[i, c]] *= basis.weights[i];
            }
        }
        let phi_h = phi.t().mapv(|v| v.conj());
        let gram = phi_h.dot(&wphi);
        let mut wq = q.clone();
        for i in 0..basis.n_xv {
            for t in 0..n_t {
                wq[[i, t]] *= basis.weights[i];
            }
        }
        let rhs = phi_h.dot(&wq);
        let (a, op) = gram_solve(&gram, &rhs).unwrap();
        assert!(op.fallback.is_none());
        assert!(op.condition_estimate < 10.0);
        let mut worst = 0.0f64;
        for (got, want) in a.iter().zip(a0.iter()) {
            worst = worst.max((got - want).norm() / want.norm().max(1e-12));
        }
        assert!(worst < 1e-8, "recovered coefficients off by {worst}");
    }

    #[test]
    fn single_frequency_projection_reduces_to_inner_products() {
        let (basis, fluct) = planted_setup(0.2);
        let k_hot = crate::pruning::frequency_rank_by_separation(&basis).unwrap().ranked[0].0;
        let rank = basis.ranks[k_hot].min(2);
        let sel = ModeSelection {
            kept: (0..rank).map(|n| (k_hot, n)).collect(),
            n_f: 1,
            n_m: rank,
            eps_ric: 1.0,
            eps_gamma: 1.0,
            provenance: vec![
                crate::pruning::ModeProvenance {
                    delta_lambda_rank: 0,
                    ric_at_inclusion: 1.0,
                    max_gamma: 0.0
                };
                rank
            ],
        };
        let coeffs = project_coefficients(&basis, Some(&sel), &fluct).unwrap();
        // Orthonormal-within-frequency basis: A = Phi* W Q directly.
        let q = fluct.snapshot_matrix();
        for (row, &(k, n)) in sel.kept.iter().enumerate() {
            for t in 0..fluct.n_t() {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..basis.n_xv {
                    acc += basis.modes[k][[i, n]].conj() * basis.weights[i] * q[[i, t]];
                }
                let got = coeffs.values[[row, t]];
                assert!(
                    (acc - got).norm() <= 1e-8 * acc.norm().max(1e-6),
                    "direct inner product disagrees at ({row}, {t})"
                );
            }
        }
    }

    #[test]
    fn full_basis_round_trip_on_planted_tones() {
        let (basis, fluct) = planted_setup(0.05);
        let coeffs = project_coefficients(&basis, None, &fluct).unwrap();
        let recon = reconstruct(&basis, None, &coeffs, None).unwrap();
        let report = nmse(&fluct.velocity.view().into_dyn(), &recon.fluct.view().into_dyn()).unwrap();
        assert!(report.total <= 1e-2, "round-trip NMSE {}", report.total);
        assert!(recon.imag_residual <= 1e-8, "imaginary residual {}", recon.imag_residual);
    }

    #[test]
    fn projection_is_idempotent_on_reconstructions() {
        let (basis, fluct) = planted_setup(0.05);
        let coeffs = project_coefficients(&basis, None, &fluct).unwrap();
        let recon = reconstruct(&basis, None, &coeffs, None).unwrap();
        let mut again = fluct.clone();
        again.velocity = recon.fluct.clone();
        let coeffs2 = project_coefficients(&basis, None, &again).unwrap();
        let denom: f64 = coeffs.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let diff: f64 = coeffs
            .values
            .iter()
            .zip(coeffs2.values.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff / denom < 1e-8, "re-projection drifted by {}", diff / denom);
    }

    #[test]
    fn zero_coefficients_reconstruct_zero_field() {
        let (basis, fluct) = planted_setup(0.1);
        let mut coeffs = project_coefficients(&basis, None, &fluct).unwrap();
        coeffs.values.fill(Complex64::new(0.0, 0.0));
        let recon = reconstruct(&basis, None, &coeffs, None).unwrap();
        assert!(recon.fluct.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_mode_reconstruction_is_rank_one_in_space() {
        let (basis, fluct) = planted_setup(0.1);
        let k_hot = crate::pruning::frequency_rank_by_separation(&basis).unwrap().ranked[0].0;
        let sel = ModeSelection {
            kept: vec![(k_hot, 0)],
            n_f: 1,
            n_m: 1,
            eps_ric: 1.0,
            eps_gamma: 1.0,
            provenance: vec![crate::pruning::ModeProvenance {
                delta_lambda_rank: 0,
                ric_at_inclusion: 1.0,
                max_gamma: 0.0,
            }],
        };
        let coeffs = project_coefficients(&basis, Some(&sel), &fluct).unwrap();
        let recon = reconstruct(&basis, Some(&sel), &coeffs, None).unwrap();
        // Numerical rank of the space-time matrix: complex rank 1 appears as
        // real rank <= 2 after taking real parts.
        let n_t = fluct.n_t();
        let n_xv = basis.n_xv;
        let mut m = Array2::zeros((n_xv, n_t));
        for t in 0..n_t {
            for c in 0..2 {
                for i in 0..n_xv / 2 {
                    m[[c * (n_xv / 2) + i, t]] = recon.fluct[[t, c, i]];
                }
            }
        }
        // Rank via Gram eigenvalues of the small side.
        let g = m.t().dot(&m).mapv(|v| Complex64::new(v, 0.0));
        let (vals, _) = hermitian_eigen(&g).unwrap();
        let lmax = vals[0].max(1e-300);
        let rank = vals.iter().filter(|&&l| l > 1e-10 * lmax).count();
        assert!(rank <= 2, "space-time rank {rank} exceeds complex rank-1 bound");
    }

    #[test]
    fn basis_fingerprint_mismatch_rejected() {
        let (basis, fluct) = planted_setup(0.1);
        let mut coeffs = project_coefficients(&basis, None, &fluct).unwrap();
        coeffs.source_basis = "deadbeef".into();
        assert!(matches!(
            reconstruct(&basis, None, &coeffs, None),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn nmse_golden_cases() {
        let r = ArrayD::from_shape_vec(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let a = ArrayD::from_shape_vec(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let rep = nmse(&r.view(), &a.view()).unwrap();
        assert!((rep.total - 0.8).abs() < 1e-15);

        let same = nmse(&r.view(), &r.view()).unwrap();
        assert_eq!(same.total, 0.0);

        let zero = ArrayD::from_shape_vec(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let all = nmse(&r.view(), &zero.view()).unwrap();
        assert_eq!(all.total, 1.0);

        assert!(matches!(
            nmse(&zero.view(), &r.view()),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn scof_round_trip() {
        let (basis, fluct) = planted_setup(0.1);
        let coeffs = project_coefficients(&basis, None, &fluct).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.scof");
        write_coefficients(&path, &coeffs).unwrap();
        let back = load_coefficients(&path).unwrap();
        assert_eq!(back.mode_index, coeffs.mode_index);
        assert_eq!(back.source_basis, coeffs.source_basis);
        assert_eq!(back.values, coeffs.values);
    }
}
