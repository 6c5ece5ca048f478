//! Conductance snapshots.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! b"MEMX1" | rows: u32 | cols: u32 | units_len: u8 | units: [u8] | rows*cols f32
//! ```
//!
//! Values are row-major conductances in the declared units. Unformed cells are
//! written as `-1.0`, which no physical conductance can take. A sidecar TOML
//! file records the noise model and seed used to program the array.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::crossbar::CrossbarArray;
use super::noise::{CellState, NoiseModel};
use crate::error::{Error, Result};
use crate::io::atomic_write;

pub const MAGIC: &[u8; 5] = b"MEMX1";
pub const UNITS: &str = "uS";
const UNFORMED_SENTINEL: f32 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub format: String,
    pub rows: usize,
    pub cols: usize,
    pub units: String,
    pub seed: u64,
    pub noise: NoiseModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
}

pub fn encode(array: &CrossbarArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * array.rows() * array.cols());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(array.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(array.cols() as u32).to_le_bytes());
    out.push(UNITS.len() as u8);
    out.extend_from_slice(UNITS.as_bytes());
    for (&g, &s) in array.conductances().iter().zip(array.states()) {
        let v = if s == CellState::Unformed { UNFORMED_SENTINEL } else { g as f32 };
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Rebuilds an array; formed cells are classified LRS/HRS by the signed bias.
pub fn decode(mut bytes: &[u8], noise: &NoiseModel) -> Result<CrossbarArray> {
    let mut magic = [0u8; 5];
    read_exact(&mut bytes, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::data("not a MEMX1 snapshot"));
    }
    let rows = read_u32(&mut bytes)? as usize;
    let cols = read_u32(&mut bytes)? as usize;
    let mut len = [0u8; 1];
    read_exact(&mut bytes, &mut len)?;
    let mut units = vec![0u8; len[0] as usize];
    read_exact(&mut bytes, &mut units)?;
    if units != UNITS.as_bytes() {
        return Err(Error::data(format!("unsupported units tag {:?}", String::from_utf8_lossy(&units))));
    }
    if bytes.len() != 4 * rows * cols {
        return Err(Error::data(format!(
            "payload has {} bytes, expected {} for {rows}x{cols}",
            bytes.len(),
            4 * rows * cols
        )));
    }
    let mut array = CrossbarArray::new(rows, cols).map_err(|e| Error::data(e.to_string()))?;
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        let (r, c) = (i / cols, i % cols);
        if v == UNFORMED_SENTINEL {
            continue;
        }
        let g = v as f64;
        let state = if g >= noise.signed_bias() { CellState::Lrs } else { CellState::Hrs };
        array.restore(r, c, state, g)?;
    }
    Ok(array)
}

fn read_exact(src: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    src.read_exact(buf).map_err(|_| Error::data("truncated MEMX1 header"))
}

fn read_u32(src: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(src, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("toml")
}

/// Writes `<path>` (binary) and `<path minus extension>.toml` (metadata).
pub fn save(
    path: &Path,
    array: &CrossbarArray,
    noise: &NoiseModel,
    manifest_hash: Option<&str>,
) -> Result<()> {
    atomic_write(path, &encode(array))?;
    let meta = SnapshotMeta {
        format: "MEMX1".into(),
        rows: array.rows(),
        cols: array.cols(),
        units: UNITS.into(),
        seed: noise.seed,
        noise: *noise,
        manifest_hash: manifest_hash.map(str::to_owned),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::data(e.to_string()))?;
    atomic_write(&sidecar_path(path), text.as_bytes())
}

pub fn load(path: &Path) -> Result<(CrossbarArray, SnapshotMeta)> {
    let text = std::fs::read_to_string(sidecar_path(path)).map_err(|e| Error::io(sidecar_path(path), e))?;
    let meta: SnapshotMeta = toml::from_str(&text).map_err(|e| Error::data(e.to_string()))?;
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let array = decode(&bytes, &meta.noise)?;
    if array.rows() != meta.rows || array.cols() != meta.cols {
        return Err(Error::data("snapshot sidecar shape disagrees with payload"));
    }
    Ok((array, meta))
}

/// Writes the binary payload only, e.g. into an in-memory buffer.
pub fn write_to<W: Write>(mut w: W, array: &CrossbarArray) -> std::io::Result<()> {
    w.write_all(&encode(array))
}
