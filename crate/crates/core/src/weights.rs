//! The binary tensor container used for network weights, projected icosphere
//! images, and depth-index maps.
//!
//! Layout: magic `CRWN`, version u32, tensor count u32, then per tensor a
//! u32 name length + UTF-8 name, a dtype tag (0 = f32, 1 = f64), a u8 rank,
//! rank × u32 dims, and the little-endian payload.

use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CRWN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

pub fn write_tensors(path: &Path, entries: &[(&str, &Tensor, Dtype)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    let werr = |e| Error::io(path, e);
    out.write_all(MAGIC).map_err(werr)?;
    out.write_all(&VERSION.to_le_bytes()).map_err(werr)?;
    out.write_all(&(entries.len() as u32).to_le_bytes()).map_err(werr)?;
    for (name, tensor, dtype) in entries {
        let bytes = name.as_bytes();
        out.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(werr)?;
        out.write_all(bytes).map_err(werr)?;
        out.write_all(&[match dtype {
            Dtype::F32 => 0u8,
            Dtype::F64 => 1u8,
        }])
        .map_err(werr)?;
        out.write_all(&[tensor.shape().len() as u8]).map_err(werr)?;
        for d in tensor.shape() {
            out.write_all(&(*d as u32).to_le_bytes()).map_err(werr)?;
        }
        match dtype {
            Dtype::F32 => {
                for x in tensor.data() {
                    out.write_all(&(*x as f32).to_le_bytes()).map_err(werr)?;
                }
            }
            Dtype::F64 => {
                for x in tensor.data() {
                    out.write_all(&x.to_le_bytes()).map_err(werr)?;
                }
            }
        }
    }
    Ok(())
}

/// Reads every tensor in the container (f32 payloads upcast to f64).
pub fn read_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    let rerr = |e| Error::io(path, e);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic).map_err(rerr)?;
    if &magic != MAGIC {
        return Err(Error::format(path, "not a CRWN tensor container"));
    }
    let mut b4 = [0u8; 4];
    file.read_exact(&mut b4).map_err(rerr)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    file.read_exact(&mut b4).map_err(rerr)?;
    let count = u32::from_le_bytes(b4) as usize;

    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        file.read_exact(&mut b4).map_err(rerr)?;
        let name_len = u32::from_le_bytes(b4) as usize;
        let mut name_bytes = vec![0u8; name_len];
        file.read_exact(&mut name_bytes).map_err(rerr)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::format(path, "tensor name is not UTF-8"))?;
        let mut b1 = [0u8; 1];
        file.read_exact(&mut b1).map_err(rerr)?;
        let dtype = match b1[0] {
            0 => Dtype::F32,
            1 => Dtype::F64,
            t => return Err(Error::format(path, format!("unknown dtype tag {t}"))),
        };
        file.read_exact(&mut b1).map_err(rerr)?;
        let rank = b1[0] as usize;
        if rank > 5 {
            return Err(Error::format(path, format!("rank {rank} exceeds 5")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            file.read_exact(&mut b4).map_err(rerr)?;
            shape.push(u32::from_le_bytes(b4) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        match dtype {
            Dtype::F32 => {
                let mut raw = vec![0u8; numel * 4];
                file.read_exact(&mut raw).map_err(rerr)?;
                for c in raw.chunks_exact(4) {
                    data.push(f32::from_le_bytes(c.try_into().unwrap()) as f64);
                }
            }
            Dtype::F64 => {
                let mut raw = vec![0u8; numel * 8];
                file.read_exact(&mut raw).map_err(rerr)?;
                for c in raw.chunks_exact(8) {
                    data.push(f64::from_le_bytes(c.try_into().unwrap()));
                }
            }
        }
        entries.push((name, Tensor::from_vec(&shape, data)));
    }
    Ok(entries)
}

/// Writes every parameter of a store at full precision.
pub fn save_params(store: &ParamStore, path: &Path) -> Result<()> {
    let entries: Vec<(&str, &Tensor, Dtype)> = store
        .entries()
        .iter()
        .map(|e| (e.name.as_str(), &e.value, Dtype::F64))
        .collect();
    write_tensors(path, &entries)
}

/// Fills an existing store (matching names and shapes) from a container.
pub fn load_params(store: &mut ParamStore, path: &Path) -> Result<()> {
    let loaded = read_tensors(path)?;
    for (name, tensor) in loaded {
        let Some(id) = store.lookup(&name) else {
            return Err(Error::format(path, format!("unknown parameter '{name}'")));
        };
        if store.get(id).shape() != tensor.shape() {
            return Err(Error::format(
                path,
                format!(
                    "parameter '{name}' shape {:?} != expected {:?}",
                    tensor.shape(),
                    store.get(id).shape()
                ),
            ));
        }
        *store.get_mut(id) = tensor;
    }
    Ok(())
}

/// A per-vertex inverse-depth index map with the sweep parameters that give
/// the indices metric meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthIndexFile {
    pub level: usize,
    pub indices: Vec<f64>,
    pub d_min: f64,
    pub num_spheres: usize,
    pub mask: Option<Vec<bool>>,
}

pub fn save_depth_map(map: &DepthIndexFile, path: &Path) -> Result<()> {
    let indices = Tensor::from_vec(&[map.indices.len()], map.indices.clone());
    let level = Tensor::scalar(map.level as f64);
    let d_min = Tensor::scalar(map.d_min);
    let n = Tensor::scalar(map.num_spheres as f64);
    let mut entries = vec![
        ("indices", &indices, Dtype::F64),
        ("level", &level, Dtype::F64),
        ("d_min", &d_min, Dtype::F64),
        ("n_spheres", &n, Dtype::F64),
    ];
    let mask_tensor = map.mask.as_ref().map(|m| {
        Tensor::from_vec(&[m.len()], m.iter().map(|&b| f64::from(u8::from(b))).collect())
    });
    if let Some(ref mt) = mask_tensor {
        entries.push(("mask", mt, Dtype::F32));
    }
    write_tensors(path, &entries)
}

pub fn load_depth_map(path: &Path) -> Result<DepthIndexFile> {
    let tensors = read_tensors(path)?;
    let find = |name: &str| -> Result<&Tensor> {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::format(path, format!("missing tensor '{name}'")))
    };
    let indices = find("indices")?.data().to_vec();
    let level = find("level")?.item() as usize;
    let d_min = find("d_min")?.item();
    let num_spheres = find("n_spheres")?.item() as usize;
    if indices.len() != crate::icosphere::vertex_count(level) {
        return Err(Error::format(path, "index count does not match level"));
    }
    let mask = tensors
        .iter()
        .find(|(n, _)| n == "mask")
        .map(|(_, t)| t.data().iter().map(|&x| x != 0.0).collect());
    Ok(DepthIndexFile {
        level,
        indices,
        d_min,
        num_spheres,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_map_roundtrip() {
        let path = std::env::temp_dir().join(format!("crwn_depth_{}.bin", std::process::id()));
        let map = DepthIndexFile {
            level: 1,
            indices: (0..42).map(|i| 1.0 + i as f64 * 0.1).collect(),
            d_min: 0.55,
            num_spheres: 8,
            mask: Some((0..42).map(|i| i % 2 == 0).collect()),
        };
        save_depth_map(&map, &path).unwrap();
        let back = load_depth_map(&path).unwrap();
        assert_eq!(back, map);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn container_roundtrip_both_dtypes() {
        let path = std::env::temp_dir().join(format!("crwn_{}.bin", std::process::id()));
        let a = Tensor::from_vec(&[2, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-7, 9.0]);
        let b = Tensor::from_vec(&[4], vec![0.5, 0.25, -0.125, 2.0]);
        write_tensors(&path, &[("a", &a, Dtype::F64), ("b", &b, Dtype::F32)]).unwrap();
        let loaded = read_tensors(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "a");
        assert_eq!(loaded[0].1, a);
        assert_eq!(loaded[1].1.shape(), &[4]);
        // f32 payload is exact for these dyadic values.
        assert_eq!(loaded[1].1.data(), b.data());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn rejects_bad_magic() {
        let path = std::env::temp_dir().join(format!("crwn_bad_{}.bin", std::process::id()));
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(read_tensors(&path).is_err());
        std::fs::remove_file(&path).ok();
    }
}
