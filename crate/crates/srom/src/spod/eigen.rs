//! Per-frequency Hermitian eigenproblems.
//!
//! The production path solves the small `n_blk x n_blk` method-of-snapshots
//! problem with a dense Hermitian solver. The test oracle
//! [`csd_direct_oracle`] instead eigendecomposes the full weighted
//! cross-spectral density with an independent cyclic-Jacobi routine, so the
//! two routes share no linear-algebra code.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

use super::RANK_TOL;

/// Largest state dimension the dense-CSD oracle will accept.
pub const ORACLE_MAX_NXV: usize = 64;

/// Modes and energies at a single frequency.
#[derive(Debug, Clone)]
pub struct FrequencyModes {
    /// `[n_xv, n_modes]`; columns with numerically zero eigenvalue are zeroed.
    pub modes: Array2<Complex64>,
    /// Descending, clamped at zero.
    pub eigenvalues: Array1<f64>,
    /// Count of numerically nonzero eigenvalues.
    pub rank: usize,
}

/// Dense Hermitian eigendecomposition, eigenvalues descending.
///
/// Ties keep the solver's first-occurrence column order so results are
/// reproducible bit for bit.
pub fn hermitian_eigen(mat: &Array2<Complex64>) -> Result<(Array1<f64>, Array2<Complex64>)> {
    let n = mat.nrows();
    if mat.ncols() != n {
        return Err(Error::InvalidArgument("matrix must be square".into()));
    }
    if !mat.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::InvalidData("non-finite matrix entry".into()));
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        let v = mat[[i, j]];
        nalgebra::Complex::new(v.re, v.im)
    });
    let eig = m.symmetric_eigen();
    if !eig.eigenvalues.iter().all(|l| l.is_finite()) {
        return Err(Error::Numeric("Hermitian eigensolver produced non-finite values".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            let v = eig.eigenvectors[(row, src)];
            vectors[[row, col]] = Complex64::new(v.re, v.im);
        }
    }
    Ok((eigenvalues, vectors))
}

/// Method of snapshots at one frequency.
///
/// Solves `(1/(n_blk - 1)) Qhat* W Qhat Psi = Psi Lambda` (normalization 1 in
/// the degenerate single-block case) and recovers the spatial modes as
/// `Phi = Qhat Psi Lambda^(-1/2)` with the block normalization folded in so
/// the modes come out orthonormal under the weighted inner product.
pub fn spod_at_frequency(
    qhat: &Array2<Complex64>,
    weights: &Array1<f64>,
) -> Result<FrequencyModes> {
    let (n_xv, n_blk) = qhat.dim();
    if n_blk == 0 {
        return Err(Error::InvalidArgument("ensemble must hold at least one block".into()));
    }
    if weights.len() != n_xv {
        return Err(Error::InvalidArgument(format!(
            "weight vector length {} does not match state size {n_xv}",
            weights.len()
        )));
    }
    if !qhat.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::InvalidData("non-finite Fourier realization".into()));
    }
    let norm = if n_blk > 1 {
        (n_blk - 1) as f64
    } else {
        log::warn!("single-block SPOD: spectral estimate has no ensemble averaging");
        1.0
    };

    // Weighted Gram matrix, Hermitian by construction.
    let mut gram = Array2::zeros((n_blk, n_blk));
    for a in 0..n_blk {
        for b in a..n_blk {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n_xv {
                acc += qhat[[i, a]].conj() * weights[i] * qhat[[i, b]];
            }
            acc /= norm;
            gram[[a, b]] = acc;
            gram[[b, a]] = acc.conj();
        }
    }

    let (raw_vals, psi) = hermitian_eigen(&gram)?;
    let lambda_max = raw_vals.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = RANK_TOL * lambda_max;

    let mut eigenvalues = Array1::zeros(n_blk);
    let mut modes = Array2::zeros((n_xv, n_blk));
    let mut rank = 0;
    let inv_sqrt_norm = 1.0 / norm.sqrt();
    for n in 0..n_blk {
        let l = raw_vals[n];
        if l <= cutoff {
            // Rank-deficient direction: zero the column, clamp the eigenvalue.
            eigenvalues[n] = l.max(0.0);
            continue;
        }
        eigenvalues[n] = l;
        rank = n + 1;
        let scale = inv_sqrt_norm / l.sqrt();
        for i in 0..n_xv {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..n_blk {
                acc += qhat[[i, b]] * psi[[b, n]];
            }
            modes[[i, n]] = acc * scale;
        }
    }
    for w in eigenvalues.windows(2) {
        debug_assert!(w[0] >= w[1]);
    }
    Ok(FrequencyModes { modes, eigenvalues, rank })
}

/// Equivalence oracle: eigenpairs of the full weighted CSD
/// `(1/(n_blk - 1)) W^(1/2) Qhat Qhat* W^(1/2)`, solved with an independent
/// cyclic-Jacobi routine. Test-scale only.
pub fn csd_direct_oracle(
    qhat: &Array2<Complex64>,
    weights: &Array1<f64>,
) -> Result<FrequencyModes> {
    let (n_xv, n_blk) = qhat.dim();
    if n_xv > ORACLE_MAX_NXV {
        return Err(Error::InvalidArgument(format!(
            "dense CSD oracle refuses n_xv = {n_xv} > {ORACLE_MAX_NXV}; it is test-scale only"
        )));
    }
    if weights.len() != n_xv {
        return Err(Error::InvalidArgument("weight length mismatch".into()));
    }
    let norm = if n_blk > 1 { (n_blk - 1) as f64 } else { 1.0 };
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.max(0.0).sqrt()).collect();

    let mut csd = Array2::zeros((n_xv, n_xv));
    for i in 0..n_xv {
        for j in 0..n_xv {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..n_blk {
                acc += qhat[[i, b]] * qhat[[j, b]].conj();
            }
            csd[[i, j]] = acc * (sqrt_w[i] * sqrt_w[j] / norm);
        }
    }

    let (vals, vecs) = jacobi_hermitian_eigen(&csd)?;
    let lambda_max = vals.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = RANK_TOL * lambda_max;
    let mut eigenvalues = Array1::zeros(n_xv);
    let mut modes = Array2::zeros((n_xv, n_xv));
    let mut rank = 0;
    for n in 0..n_xv {
        let l = vals[n];
        if l <= cutoff {
            eigenvalues[n] = l.max(0.0);
            continue;
        }
        eigenvalues[n] = l;
        rank = n + 1;
        for i in 0..n_xv {
            modes[[i, n]] = if sqrt_w[i] > 0.0 {
                vecs[[i, n]] / sqrt_w[i]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }
    Ok(FrequencyModes { modes, eigenvalues, rank })
}

/// Cyclic Jacobi eigendecomposition for Hermitian matrices.
///
/// Each (p, q) sweep applies a complex rotation that annihilates the
/// off-diagonal pair; convergence is quadratic once the off-diagonal mass is
/// small. Kept dependency-free on purpose: this is the independent side of
/// the snapshot-method/direct-CSD cross-check.
pub(crate) fn jacobi_hermitian_eigen(
    mat: &Array2<Complex64>,
) -> Result<(Array1<f64>, Array2<Complex64>)> {
    let n = mat.nrows();
    if mat.ncols() != n {
        return Err(Error::InvalidArgument("matrix must be square".into()));
    }
    let mut a = mat.clone();
    let mut v: Array2<Complex64> = Array2::eye(n);
    let fro: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if fro == 0.0 {
        return Ok((Array1::zeros(n), v));
    }
    let tol = 1e-14 * fro;

    let max_sweeps = 60;
    for _sweep in 0..max_sweeps {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    s += a[[p, q]].norm_sqr();
                }
            }
            s.sqrt()
        };
        if off <= tol {
            let mut vals = Array1::zeros(n);
            for i in 0..n {
                vals[i] = a[[i, i]].re;
            }
            // Descending, stable on ties.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&x, &y| vals[y].partial_cmp(&vals[x]).unwrap());
            let sorted_vals = Array1::from_iter(order.iter().map(|&i| vals[i]));
            let mut sorted_vecs = Array2::zeros((n, n));
            for (col, &src) in order.iter().enumerate() {
                for row in 0..n {
                    sorted_vecs[[row, col]] = v[[row, src]];
                }
            }
            return Ok((sorted_vals, sorted_vecs));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let b = apq.norm();
                if b <= tol / (n as f64) {
                    continue;
                }
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                // Phase removal turns the 2x2 block real symmetric; then the
                // classic Jacobi rotation applies.
                let phase = apq / b; // e^{i phi}
                let tau = (aqq - app) / (2.0 * b);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // U = diag(1, e^{-i phi}) * [[c, s], [-s, c]]
                let u_pp = Complex64::new(c, 0.0);
                let u_pq = Complex64::new(s, 0.0);
                let u_qp = -s * phase.conj();
                let u_qq = c * phase.conj();
                // Rows p, q of A <- U* A
                for j in 0..n {
                    let apj = a[[p, j]];
                    let aqj = a[[q, j]];
                    a[[p, j]] = u_pp.conj() * apj + u_qp.conj() * aqj;
                    a[[q, j]] = u_pq.conj() * apj + u_qq.conj() * aqj;
                }
                // Columns p, q of A <- A U
                for i in 0..n {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = aip * u_pp + aiq * u_qp;
                    a[[i, q]] = aip * u_pq + aiq * u_qq;
                }
                // Accumulate eigenvectors V <- V U
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = vip * u_pp + viq * u_qp;
                    v[[i, q]] = vip * u_pq + viq * u_qq;
                }
                // Enforce exact Hermitian structure on the touched entries.
                a[[p, q]] = Complex64::new(0.0, 0.0);
                a[[q, p]] = Complex64::new(0.0, 0.0);
                a[[p, p]] = Complex64::new(a[[p, p]].re, 0.0);
                a[[q, q]] = Complex64::new(a[[q, q]].re, 0.0);
            }
        }
    }
    Err(Error::Numeric(format!(
        "Jacobi eigensolver failed to converge in {max_sweeps} sweeps"
    )))
}
