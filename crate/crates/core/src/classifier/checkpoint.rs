//! Little-endian binary checkpoint layout:
//!
//! ```text
//! magic        8 bytes  "LDRNETCK"
//! version      u32      1
//! in_channels  u32
//! kernel       u32      3
//! stride       u32      2
//! n_blocks     u32
//! widths       u32 × n_blocks
//! n_groups     u32
//! per group:   name_len u32, name (UTF-8), count u32, f32 × count
//! has_adam     u8       0 or 1
//! if has_adam: step u64, then m and v as n_groups × (count u32, f32 × count)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{AdamState, Architecture, ModelParams, ParamGroup, KERNEL, STRIDE};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LDRNETCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: Option<AdamState>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_floats(out: &mut Vec<u8>, values: &[f32]) {
    put_u32(out, values.len());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION as usize);
        let arch = &self.params.arch;
        put_u32(&mut out, arch.in_channels);
        put_u32(&mut out, KERNEL);
        put_u32(&mut out, STRIDE);
        put_u32(&mut out, arch.widths.len());
        for &w in &arch.widths {
            put_u32(&mut out, w);
        }
        put_u32(&mut out, self.params.groups.len());
        for g in &self.params.groups {
            put_u32(&mut out, g.name.len());
            out.extend_from_slice(g.name.as_bytes());
            put_floats(&mut out, &g.values);
        }
        match &self.adam {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&s.step.to_le_bytes());
                for m in &s.m {
                    put_floats(&mut out, m);
                }
                for v in &s.v {
                    put_floats(&mut out, v);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Contract("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Contract(format!("unsupported checkpoint version {version}")));
        }
        let in_channels = r.u32()? as usize;
        let (kernel, stride) = (r.u32()? as usize, r.u32()? as usize);
        if kernel != KERNEL || stride != STRIDE {
            return Err(Error::Contract(format!(
                "checkpoint uses kernel {kernel} stride {stride}; only {KERNEL}/{STRIDE} is supported"
            )));
        }
        let n_blocks = r.u32()? as usize;
        let widths = (0..n_blocks).map(|_| r.u32().map(|w| w as usize)).collect::<Result<_>>()?;
        let arch = Architecture {
            in_channels,
            widths,
        };
        let n_groups = r.u32()? as usize;
        let mut groups = Vec::with_capacity(n_groups);
        for _ in 0..n_groups {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Contract("group name is not UTF-8".into()))?;
            groups.push(ParamGroup {
                name,
                values: r.floats()?,
            });
        }
        let params = ModelParams::from_groups(arch, groups)?;
        let adam = match r.take(1)?[0] {
            0 => None,
            1 => {
                let step = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                let m = (0..n_groups).map(|_| r.floats()).collect::<Result<Vec<_>>>()?;
                let v = (0..n_groups).map(|_| r.floats()).collect::<Result<Vec<_>>>()?;
                let fits = |acc: &[Vec<f32>]| {
                    acc.iter().zip(&params.groups).all(|(a, g)| a.len() == g.values.len())
                };
                if !fits(&m) || !fits(&v) {
                    return Err(Error::Contract("optimizer state does not match parameters".into()));
                }
                Some(AdamState { m, v, step })
            }
            other => return Err(Error::Contract(format!("bad optimizer flag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Contract("trailing bytes after checkpoint".into()));
        }
        Ok(Self { params, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Contract("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn floats(&mut self) -> Result<Vec<f32>> {
        let n = self.u32()? as usize;
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Contract("bad length".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::init_params;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), cin in 1usize..7, with_adam in any::<bool>()) {
            let params = init_params(Architecture::new(cin), seed);
            let adam = with_adam.then(|| {
                let mut s = AdamState::new(&params);
                s.step = seed % 1000;
                s.m[0][0] = f32::from_bits(seed as u32 & 0x3fff_ffff);
                s
            });
            let ck = Checkpoint { params, adam };
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back, ck);
        }
    }

    #[test]
    fn header_layout() {
        let ck = Checkpoint {
            params: init_params(Architecture::new(2), 0),
            adam: None,
        };
        let b = ck.to_bytes();
        assert_eq!(&b[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(*b.last().unwrap(), 0);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let ck = Checkpoint {
            params: init_params(Architecture::new(2), 0),
            adam: None,
        };
        let b = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 5]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
