//! Two-stage dimensionality reduction of the SPOD space.
//!
//! Stage one truncates the frequency set by relative information content
//! (RIC) after ranking frequencies by the separation between their two
//! leading eigenvalues. Stage two sweeps the surviving modes greedily in
//! descending-energy order and discards any mode whose spatial similarity
//! `gamma` to an already-kept mode exceeds the threshold, so the preserved
//! modes represent unique structures.

use ndarray::Array1;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spod::SpodBasis;

/// Per-kept-mode audit trail.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModeProvenance {
    /// Position of this mode's frequency in the descending delta-lambda
    /// ranking (0 = widest separation).
    pub delta_lambda_rank: usize,
    /// RIC of the frequency set up to and including this mode's frequency.
    pub ric_at_inclusion: f64,
    /// Largest similarity against the modes already kept when this one was
    /// accepted.
    pub max_gamma: f64,
}

/// The pruning result: retained (frequency index, rank) pairs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModeSelection {
    /// Ordered kept modes; the order is the row order of any coefficient
    /// series projected on this selection.
    pub kept: Vec<(usize, usize)>,
    /// Number of distinct retained frequencies.
    pub n_f: usize,
    /// Number of retained modes, `kept.len()`.
    pub n_m: usize,
    pub eps_ric: f64,
    pub eps_gamma: f64,
    pub provenance: Vec<ModeProvenance>,
}

impl ModeSelection {
    /// Every numerically nonzero mode of the basis in canonical
    /// (frequency, rank) order.
    pub fn all(basis: &SpodBasis) -> Self {
        let mut kept = Vec::new();
        for (k, &rank) in basis.ranks.iter().enumerate() {
            for n in 0..rank {
                kept.push((k, n));
            }
        }
        let n_f = basis.ranks.iter().filter(|&&r| r > 0).count();
        let n_m = kept.len();
        let provenance = kept
            .iter()
            .map(|_| ModeProvenance {
                delta_lambda_rank: 0,
                ric_at_inclusion: 1.0,
                max_gamma: 0.0,
            })
            .collect();
        Self { kept, n_f, n_m, eps_ric: 1.0, eps_gamma: 1.0, provenance }
    }

    pub fn validate(&self, basis: &SpodBasis) -> Result<()> {
        if self.kept.len() != self.n_m {
            return Err(Error::InvalidData("n_m disagrees with kept list".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(k, n) in &self.kept {
            if k >= basis.grid.n_fc || n >= basis.n_blk {
                return Err(Error::InvalidArgument(format!(
                    "selection entry ({k}, {n}) out of range"
                )));
            }
            if n >= basis.ranks[k] {
                return Err(Error::InvalidArgument(format!(
                    "selection entry ({k}, {n}) refers to a zero mode (rank {})",
                    basis.ranks[k]
                )));
            }
            if !seen.insert((k, n)) {
                return Err(Error::InvalidData(format!("duplicate selection entry ({k}, {n})")));
            }
        }
        Ok(())
    }

    pub fn write_json<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read_json<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Frequencies ranked by the separation of their two leading eigenvalues.
#[derive(Debug, Clone)]
pub struct FrequencyRanking {
    /// (frequency index, delta lambda), descending by separation with ties
    /// broken by ascending frequency index.
    pub ranked: Vec<(usize, f64)>,
}

/// `delta_lambda(f) = |lambda_1(f) - lambda_2(f)|`, sorted descending.
pub fn frequency_rank_by_separation(basis: &SpodBasis) -> Result<FrequencyRanking> {
    if basis.n_blk < 2 {
        return Err(Error::InvalidArgument(
            "eigenvalue separation needs at least two modes per frequency".into(),
        ));
    }
    let mut ranked: Vec<(usize, f64)> = basis
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, ev)| (k, (ev[0] - ev[1]).abs()))
        .collect();
    ranked.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        std::cmp::Ordering::Equal => a.0.cmp(&b.0),
        other => other,
    });
    Ok(FrequencyRanking { ranked })
}

/// Fraction of total modal energy carried by the top-`n` ranked frequencies.
pub fn ric(basis: &SpodBasis, n: usize) -> Result<f64> {
    let n_fc = basis.grid.n_fc;
    if n == 0 || n > n_fc {
        return Err(Error::InvalidArgument(format!("n must be in 1..={n_fc}, got {n}")));
    }
    let ranking = frequency_rank_by_separation(basis)?;
    let total = basis.total_energy();
    if total <= 0.0 {
        // Zero-energy basis: any subset carries "all" of nothing.
        return Ok(1.0);
    }
    let kept: f64 = ranking.ranked[..n].iter().map(|&(k, _)| basis.eigenvalues[k].sum()).sum();
    Ok(kept / total)
}

/// Retained frequency set after RIC truncation.
#[derive(Debug, Clone)]
pub struct FrequencySelection {
    /// Selected frequency indices in ranking order.
    pub selected: Vec<usize>,
    pub ranking: FrequencyRanking,
    /// Cumulative RIC value at each ranking position (length n_fc).
    pub ric_curve: Vec<f64>,
    pub eps_ric: f64,
}

/// Smallest ranked prefix whose RIC reaches `eps_ric`.
pub fn select_frequencies(basis: &SpodBasis, eps_ric: f64) -> Result<FrequencySelection> {
    if !(eps_ric > 0.0 && eps_ric <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eps_ric must be in (0, 1], got {eps_ric}"
        )));
    }
    let ranking = frequency_rank_by_separation(basis)?;
    let total = basis.total_energy();
    let mut ric_curve = Vec::with_capacity(ranking.ranked.len());
    let mut acc = 0.0;
    for &(k, _) in &ranking.ranked {
        acc += basis.eigenvalues[k].sum();
        ric_curve.push(if total > 0.0 { acc / total } else { 1.0 });
    }
    let n = ric_curve
        .iter()
        .position(|&r| r >= eps_ric)
        .map(|p| p + 1)
        .unwrap_or(ric_curve.len());
    let selected = ranking.ranked[..n].iter().map(|&(k, _)| k).collect();
    Ok(FrequencySelection { selected, ranking, ric_curve, eps_ric })
}

/// Similarity `gamma = |<a, b>_W|` between two unit-norm modes.
///
/// Inputs drifted from unit norm by more than 1e-8 are renormalized; exact
/// zero vectors are rejected.
pub fn similarity(
    mode_a: &Array1<Complex64>,
    mode_b: &Array1<Complex64>,
    weights: &Array1<f64>,
) -> Result<f64> {
    if mode_a.len() != weights.len() || mode_b.len() != weights.len() {
        return Err(Error::InvalidArgument("mode/weight length mismatch".into()));
    }
    let norm = |m: &Array1<Complex64>| -> f64 {
        m.iter().zip(weights.iter()).map(|(v, w)| v.norm_sqr() * w).sum::<f64>().sqrt()
    };
    let na = norm(mode_a);
    let nb = norm(mode_b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument("similarity of a zero mode is undefined".into()));
    }
    let scale_a = if (na - 1.0).abs() > 1e-8 { 1.0 / na } else { 1.0 };
    let scale_b = if (nb - 1.0).abs() > 1e-8 { 1.0 / nb } else { 1.0 };
    let mut dot = Complex64::new(0.0, 0.0);
    for i in 0..mode_a.len() {
        dot += mode_a[i].conj() * weights[i] * mode_b[i];
    }
    Ok((dot.norm() * scale_a * scale_b).clamp(0.0, 1.0))
}

/// Greedy similarity pruning over all ranks of the selected frequencies.
///
/// Candidates are swept in descending eigenvalue order (ties by ascending
/// frequency index then rank) and kept iff their similarity to every
/// already-kept mode stays at or below `eps_gamma`, so the most energetic
/// representative of each structure survives.
pub fn prune_by_similarity(
    basis: &SpodBasis,
    freq_sel: &FrequencySelection,
    eps_gamma: f64,
) -> Result<ModeSelection> {
    if !(0.0..=1.0).contains(&eps_gamma) {
        return Err(Error::InvalidArgument(format!(
            "eps_gamma must be in [0, 1], got {eps_gamma}"
        )));
    }
    let rank_of_freq: std::collections::BTreeMap<usize, usize> = freq_sel
        .ranking
        .ranked
        .iter()
        .enumerate()
        .map(|(pos, &(k, _))| (k, pos))
        .collect();

    struct Candidate {
        freq: usize,
        rank: usize,
        lambda: f64,
    }
    let mut candidates = Vec::new();
    for &k in &freq_sel.selected {
        for n in 0..basis.ranks[k] {
            candidates.push(Candidate { freq: k, rank: n, lambda: basis.eigenvalues[k][n] });
        }
    }
    candidates.sort_by(|a, b| match b.lambda.partial_cmp(&a.lambda).unwrap() {
        std::cmp::Ordering::Equal => (a.freq, a.rank).cmp(&(b.freq, b.rank)),
        other => other,
    });

    let mut kept: Vec<(usize, usize)> = Vec::new();
    let mut provenance = Vec::new();
    for cand in &candidates {
        let mode = basis.modes[cand.freq].column(cand.rank).to_owned();
        let mut max_gamma = 0.0f64;
        let mut accept = true;
        for &(k, n) in &kept {
            let other = basis.modes[k].column(n).to_owned();
            let g = similarity(&mode, &other, &basis.weights)?;
            max_gamma = max_gamma.max(g);
            if g > eps_gamma {
                accept = false;
                break;
            }
        }
        if accept {
            let dl_rank = rank_of_freq[&cand.freq];
            kept.push((cand.freq, cand.rank));
            provenance.push(ModeProvenance {
                delta_lambda_rank: dl_rank,
                ric_at_inclusion: freq_sel.ric_curve[dl_rank],
                max_gamma,
            });
        }
    }

    let n_f: usize = {
        let mut freqs: Vec<usize> = kept.iter().map(|&(k, _)| k).collect();
        freqs.sort_unstable();
        freqs.dedup();
        freqs.len()
    };
    let n_m = kept.len();
    Ok(ModeSelection {
        kept,
        n_f,
        n_m,
        eps_ric: freq_sel.eps_ric,
        eps_gamma,
        provenance,
    })
}

/// One row of the similarity-threshold sensitivity table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SensitivityRow {
    pub eps_gamma: f64,
    pub n_m: usize,
    /// Fraction of total modal energy carried by the kept modes.
    pub tke_fraction: f64,
    /// Time-averaged reconstruction NMSE against the provided data.
    pub nmse: f64,
}

/// Sweep a grid of similarity thresholds and tabulate mode count, preserved
/// energy fraction and reconstruction error.
pub fn pruning_sensitivity(
    basis: &SpodBasis,
    fluct: &crate::dataset::SnapshotDataset,
    freq_sel: &FrequencySelection,
    eps_grid: &[f64],
) -> Result<Vec<SensitivityRow>> {
    if eps_grid.is_empty() {
        return Err(Error::InvalidArgument("threshold grid must be nonempty".into()));
    }
    let total_energy = basis.total_energy();
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let sel = prune_by_similarity(basis, freq_sel, eps)?;
        let kept_energy: f64 =
            sel.kept.iter().map(|&(k, n)| basis.eigenvalues[k][n]).sum();
        let coeffs = crate::projection::project_coefficients(basis, Some(&sel), fluct)?;
        let recon = crate::projection::reconstruct(basis, Some(&sel), &coeffs, None)?;
        let report =
            crate::projection::nmse(&fluct.velocity.view().into_dyn(), &recon.fluct.view().into_dyn())?;
        rows.push(SensitivityRow {
            eps_gamma: eps,
            n_m: sel.n_m,
            tke_fraction: if total_energy > 0.0 { kept_energy / total_energy } else { 1.0 },
            nmse: report.time_averaged,
        });
    }
    Ok(rows)
}
