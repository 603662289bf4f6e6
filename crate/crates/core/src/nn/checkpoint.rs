//! Binary checkpoint format.
//!
//! ```text
//! "DFCK" | version: u32 | entry count: u32
//! per entry (lexicographic by name):
//!   name length: u32 | name: UTF-8 | rank: u32 | extents: u32 x rank | payload: f32 x prod(extents)
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NnError, ParamStore, Result, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&to_u32(store.len())?.to_le_bytes())?;
    for (name, t) in store.iter() {
        w.write_all(&to_u32(name.len())?.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&to_u32(t.rank())?.to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&to_u32(d)?.to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamStore> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| NnError::Checkpoint(format!("entry name: {e}")))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 4];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            data.push(f32::from_le_bytes(buf));
        }
        let tensor = Tensor::new(shape, data).map_err(|e| NnError::Checkpoint(format!("`{name}`: {e}")))?;
        store.insert(name, tensor)?;
    }
    Ok(store)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    write_checkpoint(store, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| NnError::Checkpoint(format!("value {n} exceeds u32")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::SeededRng;

    #[test]
    fn header_layout() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(vec![1.5]).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&s, &mut buf).unwrap();
        let mut expected = b"DFCK".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.push(b'w');
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(1.5f32.to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = SeededRng::new(3);
        let mut s = ParamStore::new();
        s.add_xavier("enc.w", 4, 7, &mut rng).unwrap();
        s.add_uniform("emb", vec![5, 3], 0.1, &mut rng).unwrap();
        s.insert("odd", Tensor::vector(vec![f32::MIN_POSITIVE, -0.0, 1e-40]).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&s, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        let mut buf2 = Vec::new();
        write_checkpoint(&back, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
        for (name, t) in s.iter() {
            let b = back.get(name).unwrap();
            assert_eq!(t.shape(), b.shape());
            let bits_a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let buf = b"XXXX\x01\x00\x00\x00\x00\x00\x00\x00".to_vec();
        assert!(matches!(read_checkpoint(buf.as_slice()), Err(NnError::Checkpoint(_))));
    }
}
