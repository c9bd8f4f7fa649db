//! Portable tensor files and checkpoint archives.
//!
//! Tensor file layout: magic `S5VT`, version u8, dtype code u8 (0 = f32,
//! 1 = f64), rank u8, dims as little-endian u64, then the row-major payload
//! in little-endian element order. A checkpoint archive is a directory of
//! tensor files plus `index.json` mapping names to files and shapes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};

pub const MAGIC: &[u8; 4] = b"S5VT";
pub const VERSION: u8 = 1;

fn fmt_path(path: &Path) -> String {
    path.display().to_string()
}

/// Write a raw buffer as a tensor file.
pub fn write_tensor<S: Scalar>(path: &Path, data: &[S], shape: &[usize]) -> Result<()> {
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::shape(
            "write_tensor",
            format!("shape {:?} does not hold {} elements", shape, data.len()),
        ));
    }
    let mut bytes = Vec::with_capacity(7 + shape.len() * 8 + data.len() * S::DTYPE.size_bytes());
    bytes.extend_from_slice(MAGIC);
    bytes.push(VERSION);
    bytes.push(S::DTYPE as u8);
    bytes.push(shape.len() as u8);
    for &d in shape {
        bytes.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in data {
        bytes.extend_from_slice(&v.to_le_bytes_vec());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(fmt_path(path), e))?;
    file.write_all(&bytes)
        .map_err(|e| Error::io(fmt_path(path), e))?;
    Ok(())
}

/// Read a tensor file whose dtype must match `S`.
pub fn read_tensor<S: Scalar>(path: &Path) -> Result<(Vec<S>, Vec<usize>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(fmt_path(path), e))?;
    let fail = |detail: &str| Error::Format {
        path: fmt_path(path),
        detail: detail.to_string(),
    };
    if bytes.len() < 7 || &bytes[0..4] != MAGIC {
        return Err(fail("missing S5VT magic"));
    }
    if bytes[4] != VERSION {
        return Err(fail(&format!("unsupported version {}", bytes[4])));
    }
    let dtype = DType::from_code(bytes[5]).ok_or_else(|| fail("unknown dtype code"))?;
    if dtype != S::DTYPE {
        return Err(fail(&format!(
            "dtype {:?} does not match requested {:?}",
            dtype,
            S::DTYPE
        )));
    }
    let rank = bytes[6] as usize;
    let header = 7 + rank * 8;
    if bytes.len() < header {
        return Err(fail("truncated dims"));
    }
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        let mut dim = [0u8; 8];
        dim.copy_from_slice(&bytes[7 + i * 8..7 + (i + 1) * 8]);
        shape.push(u64::from_le_bytes(dim) as usize);
    }
    let numel: usize = shape.iter().product();
    let elem = S::DTYPE.size_bytes();
    if bytes.len() != header + numel * elem {
        return Err(fail(&format!(
            "payload of {} bytes does not match shape {:?}",
            bytes.len() - header,
            shape
        )));
    }
    let mut data = Vec::with_capacity(numel);
    for chunk in bytes[header..].chunks_exact(elem) {
        data.push(S::from_le_slice(chunk));
    }
    Ok((data, shape))
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    file: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveIndex {
    meta: serde_json::Value,
    tensors: BTreeMap<String, IndexEntry>,
}

/// Save named tensors plus a caller-supplied metadata document into `dir`.
pub fn save_archive<S: Scalar>(
    dir: &Path,
    meta: &serde_json::Value,
    tensors: &[(String, Vec<usize>, Vec<S>)],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(fmt_path(dir), e))?;
    let mut sorted: Vec<&(String, Vec<usize>, Vec<S>)> = tensors.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut index = ArchiveIndex {
        meta: meta.clone(),
        tensors: BTreeMap::new(),
    };
    for (i, (name, shape, data)) in sorted.iter().enumerate() {
        let file = format!("t{i:04}.s5vt");
        write_tensor(&dir.join(&file), data, shape)?;
        index.tensors.insert(
            name.clone(),
            IndexEntry {
                file,
                shape: shape.clone(),
            },
        );
    }
    let index_path = dir.join("index.json");
    let json = serde_json::to_string_pretty(&index)
        .map_err(|e| Error::json(fmt_path(&index_path), e))?;
    fs::write(&index_path, json).map_err(|e| Error::io(fmt_path(&index_path), e))?;
    Ok(())
}

/// Load an archive: metadata plus name-sorted tensors.
pub fn load_archive<S: Scalar>(
    dir: &Path,
) -> Result<(serde_json::Value, Vec<(String, Vec<usize>, Vec<S>)>)> {
    let index_path = dir.join("index.json");
    let text = fs::read_to_string(&index_path).map_err(|e| Error::io(fmt_path(&index_path), e))?;
    let index: ArchiveIndex =
        serde_json::from_str(&text).map_err(|e| Error::json(fmt_path(&index_path), e))?;
    let mut tensors = Vec::with_capacity(index.tensors.len());
    for (name, entry) in index.tensors {
        let (data, shape) = read_tensor::<S>(&dir.join(&entry.file))?;
        if shape != entry.shape {
            return Err(Error::Format {
                path: fmt_path(&dir.join(&entry.file)),
                detail: format!(
                    "tensor `{name}` shape {shape:?} disagrees with index {:?}",
                    entry.shape
                ),
            });
        }
        tensors.push((name, shape, data));
    }
    Ok((index.meta, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_f32_and_f64() {
        let dir = std::env::temp_dir().join("s5vh-io-test");
        fs::create_dir_all(&dir).unwrap();
        let p32 = dir.join("a.s5vt");
        let data32: Vec<f32> = vec![1.5, -2.25, 0.0, f32::MIN_POSITIVE, 3.0e8, -7.125];
        write_tensor(&p32, &data32, &[2, 3]).unwrap();
        let (back, shape) = read_tensor::<f32>(&p32).unwrap();
        assert_eq!(shape, vec![2, 3]);
        assert_eq!(
            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            data32.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );

        let p64 = dir.join("b.s5vt");
        let data64: Vec<f64> = vec![std::f64::consts::PI, -1.0e-300, 42.0];
        write_tensor(&p64, &data64, &[3]).unwrap();
        let (back, shape) = read_tensor::<f64>(&p64).unwrap();
        assert_eq!(shape, vec![3]);
        assert_eq!(back, data64);
    }

    #[test]
    fn dtype_mismatch_is_an_error() {
        let dir = std::env::temp_dir().join("s5vh-io-test2");
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("c.s5vt");
        write_tensor::<f32>(&p, &[1.0, 2.0], &[2]).unwrap();
        assert!(read_tensor::<f64>(&p).is_err());
    }

    #[test]
    fn archive_round_trip() {
        let dir = std::env::temp_dir().join("s5vh-io-archive");
        let _ = fs::remove_dir_all(&dir);
        let meta = serde_json::json!({"k": 16});
        let tensors = vec![
            ("w".to_string(), vec![2, 2], vec![1.0f32, 2.0, 3.0, 4.0]),
            ("b".to_string(), vec![2], vec![0.5f32, -0.5]),
        ];
        save_archive(&dir, &meta, &tensors).unwrap();
        let (meta_back, loaded) = load_archive::<f32>(&dir).unwrap();
        assert_eq!(meta_back["k"], 16);
        assert_eq!(loaded.len(), 2);
        // Name-sorted on load.
        assert_eq!(loaded[0].0, "b");
        assert_eq!(loaded[1].0, "w");
        assert_eq!(loaded[1].2, vec![1.0, 2.0, 3.0, 4.0]);
    }
}
