//! On-disk tensor container and named tensor sets.
//!
//! Single-tensor file layout (all integers little endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CAAT"
//! 4       4     format version (currently 1)
//! 8       1     dtype tag (0 = f32, 1 = f64)
//! 9       4     rank
//! 13      4*r   dimension sizes
//! ...     n     payload, row-major little-endian elements
//! ```
//!
//! A *named set* is a directory of `<name>.caat` files plus a `manifest.txt`
//! listing the names one per line; the manifest fixes the set's order so
//! round trips are reproducible byte for byte.

use std::fs;
use std::path::Path;

use crate::error::{CaaError, Result};
use crate::tensor::{bitwise_eq, Dtype, Scalar, Tensor};

pub const MAGIC: [u8; 4] = *b"CAAT";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.txt";

/// Tensor whose dtype is known only at run time (e.g. read from disk).
#[derive(Debug, Clone)]
pub enum DynTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl DynTensor {
    pub fn dtype(&self) -> Dtype {
        match self {
            DynTensor::F32(_) => Dtype::F32,
            DynTensor::F64(_) => Dtype::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            DynTensor::F32(t) => t.shape(),
            DynTensor::F64(t) => t.shape(),
        }
    }

    /// Widens to f64 (exact for both dtypes).
    pub fn to_f64(&self) -> Tensor<f64> {
        match self {
            DynTensor::F32(t) => t.cast::<f64>(),
            DynTensor::F64(t) => t.clone(),
        }
    }

    /// Bit-for-bit equality, including dtype and shape.
    pub fn bitwise_eq(&self, other: &DynTensor) -> bool {
        match (self, other) {
            (DynTensor::F32(a), DynTensor::F32(b)) => bitwise_eq(a, b),
            (DynTensor::F64(a), DynTensor::F64(b)) => bitwise_eq(a, b),
            _ => false,
        }
    }
}

impl From<Tensor<f32>> for DynTensor {
    fn from(t: Tensor<f32>) -> Self {
        DynTensor::F32(t)
    }
}

impl From<Tensor<f64>> for DynTensor {
    fn from(t: Tensor<f64>) -> Self {
        DynTensor::F64(t)
    }
}

// ───────────────────────── single-tensor encoding ─────────────────────────

/// Serializes a tensor into the container byte layout.
pub fn encode<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 4 * t.rank() + t.len() * T::DTYPE.size_bytes());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(T::DTYPE.tag());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

fn bad(msg: impl Into<String>) -> CaaError {
    CaaError::Container(msg.into())
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(bad(format!(
            "truncated while reading {what}: need {n} bytes, have {}",
            bytes.len()
        )));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn read_u32(bytes: &mut &[u8], what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4, what)?.try_into().unwrap()))
}

/// Decodes a tensor from the container byte layout.
pub fn decode(mut bytes: &[u8]) -> Result<DynTensor> {
    let magic = take(&mut bytes, 4, "magic")?;
    if magic != MAGIC {
        return Err(bad(format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let version = read_u32(&mut bytes, "version")?;
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let tag = take(&mut bytes, 1, "dtype tag")?[0];
    let dtype = Dtype::from_tag(tag).ok_or_else(|| bad(format!("unknown dtype tag {tag}")))?;
    let rank = read_u32(&mut bytes, "rank")? as usize;
    let mut shape = Vec::with_capacity(rank);
    for axis in 0..rank {
        shape.push(read_u32(&mut bytes, &format!("dimension {axis}"))? as usize);
    }
    let len: usize = shape.iter().product();
    let payload = take(&mut bytes, len * dtype.size_bytes(), "payload")?;
    if !bytes.is_empty() {
        return Err(bad(format!("{} trailing bytes after payload", bytes.len())));
    }

    fn elems<T: Scalar>(payload: &[u8], shape: Vec<usize>) -> Result<Tensor<T>> {
        let size = T::DTYPE.size_bytes();
        let data = payload.chunks_exact(size).map(T::read_le).collect();
        Tensor::from_vec(shape, data)
    }
    Ok(match dtype {
        Dtype::F32 => DynTensor::F32(elems(payload, shape)?),
        Dtype::F64 => DynTensor::F64(elems(payload, shape)?),
    })
}

pub fn write_tensor<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    fs::write(path, encode(t))?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<DynTensor> {
    let bytes = fs::read(path)?;
    decode(&bytes).map_err(|e| bad(format!("{}: {e}", path.display())))
}

// ───────────────────────── named sets ─────────────────────────

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(bad(format!(
            "invalid tensor name {name:?}: use non-empty ASCII [A-Za-z0-9_.-] not starting with '.'"
        )))
    }
}

/// Writes every `(name, tensor)` pair into `dir` as `<name>.caat` plus a
/// `manifest.txt` fixing the order. Creates `dir` if needed.
pub fn save_set(dir: &Path, set: &[(String, DynTensor)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for (name, tensor) in set {
        check_name(name)?;
        let bytes = match tensor {
            DynTensor::F32(t) => encode(t),
            DynTensor::F64(t) => encode(t),
        };
        fs::write(dir.join(format!("{name}.caat")), bytes)?;
        manifest.push_str(name);
        manifest.push('\n');
    }
    fs::write(dir.join(MANIFEST_NAME), manifest)?;
    Ok(())
}

/// Reads a named set back in manifest order.
pub fn load_set(dir: &Path) -> Result<Vec<(String, DynTensor)>> {
    let manifest = fs::read_to_string(dir.join(MANIFEST_NAME))
        .map_err(|e| bad(format!("{}: {e}", dir.join(MANIFEST_NAME).display())))?;
    let mut out = Vec::new();
    for name in manifest.lines().filter(|l| !l.trim().is_empty()) {
        check_name(name)?;
        out.push((name.to_string(), read_tensor(&dir.join(format!("{name}.caat")))?));
    }
    Ok(out)
}

/// Looks a tensor up by name in a loaded set.
pub fn find<'a>(set: &'a [(String, DynTensor)], name: &str) -> Result<&'a DynTensor> {
    set.iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .ok_or_else(|| bad(format!("tensor {name:?} missing from set")))
}
