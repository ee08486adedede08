//! SNNP parameter bundle format.
//!
//! Little-endian: magic "SNNP", version u32 = 1, seed u64, init-scheme string
//! (len u32 + utf8), tensor count u32, then per tensor: name (len u32 +
//! utf8), ndim u32, dims (u32 each), f64 data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

use super::ParamStore;

const MAGIC: &[u8; 4] = b"SNNP";
const VERSION: u32 = 1;

pub fn write_param_store<P: AsRef<Path>>(path: P, store: &ParamStore) -> Result<()> {
    store.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(store.seed)?;
    write_string(&mut w, &store.init_scheme)?;
    w.write_u32::<LittleEndian>(store.entries.len() as u32)?;
    for (name, shape, data) in &store.entries {
        write_string(&mut w, name)?;
        w.write_u32::<LittleEndian>(shape.len() as u32)?;
        for &d in shape {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in data {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_param_store<P: AsRef<Path>>(path: P) -> Result<ParamStore> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for SNNP header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"SNNP\"")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported SNNP version {version}")));
    }
    let seed = r.read_u64::<LittleEndian>()?;
    let init_scheme = read_string(&mut r)?;
    let n_tensors = r.read_u32::<LittleEndian>()? as usize;
    let mut entries = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name = read_string(&mut r)?;
        let ndim = r.read_u32::<LittleEndian>()? as usize;
        if ndim > 8 {
            return Err(Error::CorruptFile(format!("tensor {name} has {ndim} dims")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u32::<LittleEndian>()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = vec![0.0; len];
        r.read_f64_into::<LittleEndian>(&mut data)
            .map_err(|_| Error::CorruptFile(format!("tensor {name} truncated")))?;
        entries.push((name, shape, data));
    }
    let store = ParamStore { entries, seed, init_scheme };
    store.validate()?;
    Ok(store)
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 4096 {
        return Err(Error::CorruptFile(format!("unreasonable string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|_| Error::CorruptFile("string truncated".into()))?;
    String::from_utf8(buf).map_err(|_| Error::CorruptFile("string is not UTF-8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp, ParamModel};

    #[test]
    fn param_store_round_trip() {
        let mlp = Mlp::new_seeded(&[4, 6, 2], Activation::Tanh, Activation::Linear, "net", 42)
            .unwrap();
        let store = mlp.to_store(42, "glorot-uniform");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.snnp");
        write_param_store(&path, &store).unwrap();
        let back = load_param_store(&path).unwrap();
        assert_eq!(back, store);

        let mut fresh =
            Mlp::new_seeded(&[4, 6, 2], Activation::Tanh, Activation::Linear, "net", 99).unwrap();
        fresh.load_store(&back).unwrap();
        assert_eq!(fresh.snapshot(), mlp.snapshot());
    }

    #[test]
    fn shape_mismatch_on_load_rejected() {
        let mlp = Mlp::new_seeded(&[4, 6, 2], Activation::Tanh, Activation::Linear, "net", 42)
            .unwrap();
        let store = mlp.to_store(42, "glorot-uniform");
        let mut other =
            Mlp::new_seeded(&[4, 5, 2], Activation::Tanh, Activation::Linear, "net", 42).unwrap();
        assert!(other.load_store(&store).is_err());
    }
}
