//! Binary weights file.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"CISRLW1"
//! u32 actor layer count L_a, then L_a x u32 actor layer sizes
//! u32 critic layer count L_c, then L_c x u32 critic layer sizes
//! f64 x |actor|   actor weights/biases, layer by layer (W row-major, then b)
//! f64 x |critic|  critic weights/biases, same order
//! f64             log_std
//! u32             CRC32 of every preceding byte
//! ```

use std::path::Path;

use super::{param_count, Mlp, PolicyParams};
use crate::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 7] = b"CISRLW1";

impl PolicyParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        for net in [&self.actor, &self.critic] {
            out.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
            for &s in net.sizes() {
                out.extend_from_slice(&(s as u32).to_le_bytes());
            }
        }
        for net in [&self.actor, &self.critic] {
            for p in net.params() {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.log_std().to_le_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < WEIGHTS_MAGIC.len() + 4 {
            return Err(Error::Malformed("weights file is truncated".into()));
        }
        if &bytes[..WEIGHTS_MAGIC.len()] != WEIGHTS_MAGIC {
            if bytes.starts_with(b"CISRLW") {
                return Err(Error::VersionMismatch {
                    expected: "CISRLW1".into(),
                    found: String::from_utf8_lossy(&bytes[..WEIGHTS_MAGIC.len()]).into(),
                });
            }
            return Err(Error::Malformed("missing CISRLW1 magic".into()));
        }
        let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        let computed = crc32fast::hash(body);

        let mut r = Reader {
            buf: body,
            pos: WEIGHTS_MAGIC.len(),
        };
        let actor_sizes = r.sizes()?;
        let critic_sizes = r.sizes()?;
        let expected_len = r.pos + 8 * (param_count(&actor_sizes) + param_count(&critic_sizes) + 1);
        if body.len() != expected_len {
            // a corrupted size descriptor shows up as a length mismatch, so
            // check the checksum first to report the root cause
            if stored != computed {
                return Err(Error::Checksum { stored, computed });
            }
            return Err(Error::Malformed(format!(
                "payload is {} bytes, architecture requires {expected_len}",
                body.len()
            )));
        }
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let actor = r.floats(param_count(&actor_sizes))?;
        let critic = r.floats(param_count(&critic_sizes))?;
        let log_std = r.floats(1)?[0];
        let actor = Mlp::from_params(&actor_sizes, actor)
            .ok_or_else(|| Error::Malformed("bad actor layout".into()))?;
        let critic = Mlp::from_params(&critic_sizes, critic)
            .ok_or_else(|| Error::Malformed("bad critic layout".into()))?;
        if !log_std.is_finite() {
            return Err(Error::Malformed("non-finite log_std".into()));
        }
        Ok(PolicyParams::from_parts(actor, critic, log_std))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks the layer sizes of both networks against `sizes`.
    pub fn load_expecting(path: impl AsRef<Path>, sizes: &[usize]) -> Result<Self> {
        let p = Self::load(path)?;
        for net in [&p.actor, &p.critic] {
            if net.sizes() != sizes {
                return Err(Error::ArchitectureMismatch {
                    expected: sizes.to_vec(),
                    found: net.sizes().to_vec(),
                });
            }
        }
        Ok(p)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Malformed("weights file is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn sizes(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()? as usize;
        if !(2..=16).contains(&n) {
            return Err(Error::Malformed(format!("implausible layer count {n}")));
        }
        let sizes = (0..n)
            .map(|_| self.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        if sizes.iter().any(|&s| s == 0 || s > 1 << 16) {
            return Err(Error::Malformed(format!("implausible layer sizes {sizes:?}")));
        }
        if sizes[0] != 2 || sizes[n - 1] != 1 {
            return Err(Error::ArchitectureMismatch {
                expected: vec![2, 64, 64, 1],
                found: sizes,
            });
        }
        Ok(sizes)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
