//! SPOB basis file format.
//!
//! Little-endian: magic "SPOB", version u32 = 1, n_fc u32, n_blk u32,
//! n_xv u32, n_fft u32, n_ovlp u32, window u8, cell_weight f64, dt f64,
//! then the per-entry weight vector (n_xv f64), then per frequency: rank u32,
//! eigenvalues (n_blk f64), mode matrix (n_xv * n_blk interleaved re/im f64,
//! row-major).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

use super::{resolved_frequencies, SpodBasis, SpodParams, WindowKind};

const MAGIC: &[u8; 4] = b"SPOB";
const VERSION: u32 = 1;

pub fn write_basis<P: AsRef<Path>>(path: P, basis: &SpodBasis) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(basis.grid.n_fc as u32)?;
    w.write_u32::<LittleEndian>(basis.n_blk as u32)?;
    w.write_u32::<LittleEndian>(basis.n_xv as u32)?;
    w.write_u32::<LittleEndian>(basis.params.n_fft as u32)?;
    w.write_u32::<LittleEndian>(basis.params.n_ovlp as u32)?;
    w.write_u8(basis.params.window.tag())?;
    w.write_f64::<LittleEndian>(basis.params.cell_weight)?;
    w.write_f64::<LittleEndian>(basis.dt)?;
    for &wt in basis.weights.iter() {
        w.write_f64::<LittleEndian>(wt)?;
    }
    for k in 0..basis.grid.n_fc {
        w.write_u32::<LittleEndian>(basis.ranks[k] as u32)?;
        for &l in basis.eigenvalues[k].iter() {
            w.write_f64::<LittleEndian>(l)?;
        }
        for i in 0..basis.n_xv {
            for n in 0..basis.n_blk {
                let v = basis.modes[k][[i, n]];
                w.write_f64::<LittleEndian>(v.re)?;
                w.write_f64::<LittleEndian>(v.im)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_basis<P: AsRef<Path>>(path: P) -> Result<SpodBasis> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for SPOB header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"SPOB\"")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported SPOB version {version}")));
    }
    let n_fc = r.read_u32::<LittleEndian>()? as usize;
    let n_blk = r.read_u32::<LittleEndian>()? as usize;
    let n_xv = r.read_u32::<LittleEndian>()? as usize;
    let n_fft = r.read_u32::<LittleEndian>()? as usize;
    let n_ovlp = r.read_u32::<LittleEndian>()? as usize;
    let window = WindowKind::from_tag(r.read_u8()?)?;
    let cell_weight = r.read_f64::<LittleEndian>()?;
    let dt = r.read_f64::<LittleEndian>()?;
    let params = SpodParams::new(n_fft, n_ovlp, window, cell_weight)
        .map_err(|e| Error::CorruptFile(format!("bad parameters: {e}")))?;
    let grid = resolved_frequencies(n_fft, dt)
        .map_err(|e| Error::CorruptFile(format!("bad frequency grid: {e}")))?;
    if grid.n_fc != n_fc {
        return Err(Error::CorruptFile(format!(
            "header n_fc = {n_fc} disagrees with n_fft = {n_fft}"
        )));
    }

    let mut weights = Array1::zeros(n_xv);
    for i in 0..n_xv {
        weights[i] = r
            .read_f64::<LittleEndian>()
            .map_err(|_| Error::CorruptFile("weight vector truncated".into()))?;
    }

    let mut modes = Vec::with_capacity(n_fc);
    let mut eigenvalues = Vec::with_capacity(n_fc);
    let mut ranks = Vec::with_capacity(n_fc);
    for _ in 0..n_fc {
        let rank = r
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::CorruptFile("frequency record truncated".into()))?
            as usize;
        if rank > n_blk {
            return Err(Error::CorruptFile(format!("rank {rank} exceeds n_blk {n_blk}")));
        }
        let mut ev = Array1::zeros(n_blk);
        for n in 0..n_blk {
            ev[n] = r
                .read_f64::<LittleEndian>()
                .map_err(|_| Error::CorruptFile("eigenvalues truncated".into()))?;
        }
        let mut m = Array2::zeros((n_xv, n_blk));
        for i in 0..n_xv {
            for n in 0..n_blk {
                let re = r
                    .read_f64::<LittleEndian>()
                    .map_err(|_| Error::CorruptFile("mode matrix truncated".into()))?;
                let im = r.read_f64::<LittleEndian>()?;
                m[[i, n]] = Complex64::new(re, im);
            }
        }
        ranks.push(rank);
        eigenvalues.push(ev);
        modes.push(m);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::CorruptFile("trailing bytes after payload".into()));
    }

    Ok(SpodBasis {
        params,
        grid,
        n_blk,
        n_xv,
        dt,
        weights,
        modes,
        eigenvalues,
        ranks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{compute_fluctuations, synthesize_flow, PlantedComponent, SynthConfig};
    use crate::spod::compute_spod;

    #[test]
    fn basis_round_trip_preserves_everything() {
        let cfg = SynthConfig {
            nx: 4,
            nz: 3,
            n_t: 64,
            dt: 0.25,
            components: vec![PlantedComponent {
                pattern: 0,
                frequency: 0.5,
                amplitude: 1.0,
                phase: 0.1,
            }],
            noise_sigma: 0.05,
            ..SynthConfig::default()
        };
        let data = synthesize_flow(&cfg, 5).unwrap();
        let (fluct, _) = compute_fluctuations(&data, None).unwrap();
        let params = SpodParams::new(16, 8, WindowKind::Hamming, cfg.dx * cfg.dz).unwrap();
        let basis = compute_spod(&fluct, &params).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.spod");
        write_basis(&path, &basis).unwrap();
        let back = load_basis(&path).unwrap();
        assert_eq!(back.n_blk, basis.n_blk);
        assert_eq!(back.ranks, basis.ranks);
        assert_eq!(back.weights, basis.weights);
        for k in 0..basis.grid.n_fc {
            assert_eq!(back.eigenvalues[k], basis.eigenvalues[k]);
            assert_eq!(back.modes[k], basis.modes[k]);
        }
        assert_eq!(back.fingerprint(), basis.fingerprint());
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.spod");
        std::fs::write(&path, b"JUNKxxxxxxxx").unwrap();
        assert!(matches!(load_basis(&path), Err(Error::Format(_))));
    }
}
