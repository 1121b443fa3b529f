//! The `STTO` tensor interchange format.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `b"STTO"` |
//! | 4     | format version (`u32`, currently 1) |
//! | 1     | dtype code (`u8`, 1 = IEEE-754 binary32 LE) |
//! | 4     | rank (`u32`, always 3) |
//! | 4·rank| dims (`u32` each) |
//! | ...   | row-major payload |
//!
//! Tilt stacks carry a JSON sidecar at `<path>.json` holding `angles_deg`,
//! `kind` and `tilt_axis`. A file without a sidecar reads back as a volume.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{check_finite, StackKind, TiltAxis, TiltGeometry, TiltStack, Volume};

pub const MAGIC: &[u8; 4] = b"STTO";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32_LE: u8 = 1;
const RANK: u32 = 3;

/// Byte length of the fixed header for a tensor of the given rank.
pub const fn header_len(rank: usize) -> usize {
    4 + 4 + 1 + 4 + 4 * rank
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Volume(Volume),
    Stack(TiltStack),
}

impl Tensor {
    pub fn dims(&self) -> [usize; 3] {
        match self {
            Tensor::Volume(v) => v.dims(),
            Tensor::Stack(s) => s.dims(),
        }
    }

    pub fn data(&self) -> &[f32] {
        match self {
            Tensor::Volume(v) => v.data(),
            Tensor::Stack(s) => s.data(),
        }
    }

    pub fn into_volume(self) -> Volume {
        match self {
            Tensor::Volume(v) => v,
            Tensor::Stack(s) => s.to_channels(),
        }
    }
}

impl From<Volume> for Tensor {
    fn from(v: Volume) -> Self {
        Tensor::Volume(v)
    }
}

impl From<TiltStack> for Tensor {
    fn from(s: TiltStack) -> Self {
        Tensor::Stack(s)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    angles_deg: Vec<f64>,
    kind: StackKind,
    tilt_axis: TiltAxis,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Serializes the header and payload of a rank-3 tensor.
pub fn encode(dims: [usize; 3], data: &[f32]) -> Result<Vec<u8>> {
    check_finite(data)?;
    let mut buf = Vec::with_capacity(header_len(3) + 4 * data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(DTYPE_F32_LE);
    buf.extend_from_slice(&RANK.to_le_bytes());
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Format { field: "dims", detail: format!("{d} exceeds u32") })?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

/// Parses a byte buffer produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<([usize; 3], Vec<f32>)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format { field: "magic", detail: format!("expected \"STTO\", found {magic:02X?}") });
    }
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format { field: "version", detail: format!("unsupported version {version}") });
    }
    let dtype = cur.take(1, "dtype")?[0];
    if dtype != DTYPE_F32_LE {
        return Err(Error::Format { field: "dtype", detail: format!("unsupported dtype code {dtype}") });
    }
    let rank = cur.u32("rank")?;
    if rank != RANK {
        return Err(Error::Format { field: "rank", detail: format!("expected rank 3, found {rank}") });
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = cur.u32("dims")? as usize;
        if *d == 0 {
            return Err(Error::Format { field: "dims", detail: "zero-length axis".into() });
        }
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format { field: "dims", detail: "element count overflows".into() })?;
    let payload = &bytes[cur.pos..];
    let expected = count * 4;
    if payload.len() != expected {
        return Err(Error::Length { expected, actual: payload.len() });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    check_finite(&data)?;
    Ok((dims, data))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format { field, detail: "file truncated inside header".into() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn write_tensor(tensor: &Tensor, path: &Path) -> Result<()> {
    let bytes = encode(tensor.dims(), tensor.data())?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    match tensor {
        Tensor::Stack(s) => {
            let meta = Sidecar {
                angles_deg: s.geometry().angles_deg().to_vec(),
                kind: s.kind(),
                tilt_axis: s.geometry().tilt_axis(),
            };
            let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Json { path: side.clone(), source: e })?;
            fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
        }
        Tensor::Volume(_) => {
            // a stale sidecar would make the volume read back as a stack
            if side.exists() {
                fs::remove_file(&side).map_err(|e| Error::io(&side, e))?;
            }
        }
    }
    Ok(())
}

pub fn write_volume(v: &Volume, path: &Path) -> Result<()> {
    write_tensor(&Tensor::Volume(v.clone()), path)
}

pub fn write_stack(s: &TiltStack, path: &Path) -> Result<()> {
    write_tensor(&Tensor::Stack(s.clone()), path)
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (dims, data) = decode(&bytes)?;
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(Tensor::Volume(Volume::new(dims, data)?));
    }
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Json { path: side.clone(), source: e })?;
    if meta.angles_deg.len() != dims[0] {
        return Err(Error::Format {
            field: "angles_deg",
            detail: format!("{} angles for {} views", meta.angles_deg.len(), dims[0]),
        });
    }
    let geometry = TiltGeometry::new(meta.angles_deg, [dims[1], dims[2]])?;
    Ok(Tensor::Stack(TiltStack::new(geometry, meta.kind, data)?))
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    match read_tensor(path)? {
        Tensor::Volume(v) => Ok(v),
        Tensor::Stack(_) => Err(Error::Format { field: "sidecar", detail: format!("{} holds a tilt stack, expected a volume", path.display()) }),
    }
}

pub fn read_stack(path: &Path) -> Result<TiltStack> {
    match read_tensor(path)? {
        Tensor::Stack(s) => Ok(s),
        Tensor::Volume(_) => Err(Error::Format { field: "sidecar", detail: format!("{} has no tilt-stack sidecar", path.display()) }),
    }
}
