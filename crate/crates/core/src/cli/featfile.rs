//! Binary feature files.
//!
//! Layout, little-endian: `b"LDRF"`, version `u16`, `C: u16`, `H: u32`,
//! `W: u32`, then `C·H·W` `f32` values in channel-major row-major order.

use std::path::{Component, Path, PathBuf};

use crate::classifier::FeatureStack;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"LDRF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const EXTENSION: &str = "ldrf";

pub fn encode_features(x: &FeatureStack) -> Result<Vec<u8>> {
    let (c, h, w) = x.tensor().shape();
    let c16 = u16::try_from(c)
        .map_err(|_| Error::Unsupported(format!("{c} channels do not fit the feature header")))?;
    let (h32, w32) = match (u32::try_from(h), u32::try_from(w)) {
        (Ok(h), Ok(w)) => (h, w),
        _ => return Err(Error::Unsupported(format!("{h}x{w} does not fit the feature header"))),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * c * h * w);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&c16.to_le_bytes());
    out.extend_from_slice(&h32.to_le_bytes());
    out.extend_from_slice(&w32.to_le_bytes());
    for v in x.tensor().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8], origin: &Path) -> Result<FeatureStack> {
    let bad = |msg: String| Error::Decode {
        path: origin.to_path_buf(),
        msg,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("not a feature file".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(bad(format!("unsupported feature file version {version}")));
    }
    let c = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let w = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = c
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_mul(4));
    if expected != Some(payload.len()) {
        return Err(bad(format!(
            "payload of {} bytes does not match {c}x{h}x{w}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Ok(FeatureStack::new(Tensor::new(c, h, w, data).map_err(|e| bad(e.to_string()))?))
}

pub fn write_features(path: &Path, x: &FeatureStack) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, encode_features(x)?).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureStack> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}

/// Where the features of a manifest image live: the manifest path mirrored
/// under `dir` with `.ldrf` appended. Root and `..` components cannot escape `dir`.
pub fn feature_path(dir: &Path, image: &Path) -> PathBuf {
    let mut out = dir.to_path_buf();
    for comp in image.components() {
        match comp {
            Component::Normal(s) => out.push(s),
            Component::ParentDir => out.push("_up"),
            Component::RootDir | Component::Prefix(_) | Component::CurDir => {}
        }
    }
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(EXTENSION);
    out.set_file_name(name);
    out
}
