//! SROM snapshot archive format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "SROM" (4 bytes)
//! version u32 = 1
//! nx u32, nz u32, n_v u32, n_t u32
//! has_concentration u8
//! dt f64, u_ref f64, c_ref f64, dx f64, dz f64
//! mask: nx*nz bytes, row-major z-outer (0 = solid, 1 = fluid)
//! velocity: n_t frames of nx*nz*n_v f64, component-outer within each frame
//! concentration: n_t frames of nx*nz f64, only when flagged
//! ```
//!
//! The header intentionally carries no grid origin or reference height; on
//! load the origin defaults to a centered `x` axis with `z0 = 0` and `h_ref`
//! defaults to 1, which callers may override from their own configuration.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, Array3, Axis};

use crate::error::{Error, Result};

use super::{DatasetMeta, GridGeometry, SnapshotDataset};

const MAGIC: &[u8; 4] = b"SROM";
const VERSION: u32 = 1;

pub fn write_snapshots<P: AsRef<Path>>(path: P, data: &SnapshotDataset) -> Result<()> {
    data.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(data.geometry.nx as u32)?;
    w.write_u32::<LittleEndian>(data.geometry.nz as u32)?;
    w.write_u32::<LittleEndian>(data.n_v() as u32)?;
    w.write_u32::<LittleEndian>(data.n_t() as u32)?;
    w.write_u8(u8::from(data.concentration.is_some()))?;
    w.write_f64::<LittleEndian>(data.meta.dt)?;
    w.write_f64::<LittleEndian>(data.meta.u_ref)?;
    w.write_f64::<LittleEndian>(data.meta.c_ref)?;
    w.write_f64::<LittleEndian>(data.geometry.dx)?;
    w.write_f64::<LittleEndian>(data.geometry.dz)?;
    for &fluid in &data.geometry.mask {
        w.write_u8(u8::from(fluid))?;
    }
    for t in 0..data.n_t() {
        let frame = data.velocity.index_axis(Axis(0), t);
        for v in frame.iter() {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    if let Some(c) = &data.concentration {
        for t in 0..data.n_t() {
            for v in c.index_axis(Axis(0), t).iter() {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_snapshots<P: AsRef<Path>>(path: P) -> Result<SnapshotDataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for SROM header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"SROM\"")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported SROM version {version}")));
    }
    let nx = r.read_u32::<LittleEndian>()? as usize;
    let nz = r.read_u32::<LittleEndian>()? as usize;
    let n_v = r.read_u32::<LittleEndian>()? as usize;
    let n_t = r.read_u32::<LittleEndian>()? as usize;
    let has_conc = r.read_u8()? != 0;
    let dt = r.read_f64::<LittleEndian>()?;
    let u_ref = r.read_f64::<LittleEndian>()?;
    let c_ref = r.read_f64::<LittleEndian>()?;
    let dx = r.read_f64::<LittleEndian>()?;
    let dz = r.read_f64::<LittleEndian>()?;
    if nx == 0 || nz == 0 || n_v == 0 || n_t == 0 {
        return Err(Error::CorruptFile(format!(
            "degenerate dimensions nx={nx} nz={nz} n_v={n_v} n_t={n_t}"
        )));
    }
    let n_cells = nx * nz;
    let mut mask = vec![false; n_cells];
    for m in mask.iter_mut() {
        *m = r
            .read_u8()
            .map_err(|_| Error::CorruptFile("mask truncated".into()))?
            != 0;
    }
    let geometry = GridGeometry::new(nx, nz, dx, dz, mask, None)
        .map_err(|e| Error::CorruptFile(format!("invalid geometry: {e}")))?;

    let mut velocity = Array3::zeros((n_t, n_v, n_cells));
    {
        let flat = velocity.as_slice_mut().expect("contiguous");
        read_f64_into(&mut r, flat, "velocity frames")?;
    }
    let concentration = if has_conc {
        let mut c = Array2::zeros((n_t, n_cells));
        let flat = c.as_slice_mut().expect("contiguous");
        read_f64_into(&mut r, flat, "concentration frames")?;
        Some(c)
    } else {
        None
    };
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::CorruptFile("trailing bytes after payload".into()));
    }

    let meta = DatasetMeta {
        dt,
        u_ref,
        c_ref,
        q_c: None,
        span_length: 1.0,
        h_ref: 1.0,
        n_v,
    };
    let times = Array1::from_iter((0..n_t).map(|t| t as f64 * dt));
    let data = SnapshotDataset { geometry, meta, velocity, concentration, times };
    data.validate()?;
    Ok(data)
}

fn read_f64_into<R: Read>(r: &mut R, out: &mut [f64], what: &str) -> Result<()> {
    r.read_f64_into::<LittleEndian>(out)
        .map_err(|_| Error::CorruptFile(format!("{what} truncated")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize_flow, PlantedComponent, SynthConfig};

    fn minimal_dataset() -> SnapshotDataset {
        let geometry = GridGeometry::unmasked(2, 1, 1.0, 1.0).unwrap();
        SnapshotDataset {
            geometry,
            meta: DatasetMeta::nondimensional(0.1, 2),
            velocity: Array3::from_shape_fn((3, 2, 2), |(t, c, i)| {
                (t * 4 + c * 2 + i) as f64 * 0.25
            }),
            concentration: None,
            times: Array1::from_vec(vec![0.0, 0.1, 0.2]),
        }
    }

    #[test]
    fn minimal_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mini.srom");
        let data = minimal_dataset();
        write_snapshots(&path, &data).unwrap();
        let back = load_snapshots(&path).unwrap();
        assert_eq!(back.n_t(), 3);
        assert_eq!(back.n_xv(), 4);
        assert_eq!(back.velocity, data.velocity);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.srom");
        std::fs::write(&path, b"NOPExxxxxxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(load_snapshots(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_corrupt_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.srom");
        write_snapshots(&path, &minimal_dataset()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(load_snapshots(&path), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn solid_cell_with_velocity_is_invalid_data() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("solid.srom");
        let data = minimal_dataset();
        write_snapshots(&path, &data).unwrap();
        // Flip one mask byte to solid; the cell holds a nonzero velocity.
        let mut bytes = std::fs::read(&path).unwrap();
        let mask_offset = 4 + 4 + 4 * 4 + 1 + 5 * 8;
        bytes[mask_offset + 1] = 0;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_snapshots(&path), Err(Error::InvalidData(_))));
    }

    #[test]
    fn synthetic_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            nx: 5,
            nz: 4,
            dx: 0.25,
            dz: 0.25,
            n_t: 32,
            dt: 0.05,
            components: vec![PlantedComponent { pattern: 1, frequency: 1.0, amplitude: 0.9, phase: 0.3 }],
            noise_sigma: 0.2,
            with_concentration: true,
            ..SynthConfig::default()
        };
        let data = synthesize_flow(&cfg, 7).unwrap();
        let p1 = dir.path().join("a.srom");
        let p2 = dir.path().join("b.srom");
        write_snapshots(&p1, &data).unwrap();
        let back = load_snapshots(&p1).unwrap();
        write_snapshots(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
