//! Binary snapshot of trained parameters.
//!
//! Layout, little-endian throughout:
//!
//! | bytes | field |
//! |---|---|
//! | 8 | magic `GLACKPT1` |
//! | 4 | variant tag (`u32`) |
//! | 4 × 4 | `d`, `p`, `layers`, contextual vector count (`u32`) |
//! | 8 × count·p | contextual vectors, one after another (`f64`) |
//! | 8 × len | parameter vector in model layout (`f64`) |

use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use gla_core::data::ContextVectors;
use gla_core::linalg::Vector;
use gla_core::train::{Params, Shape, Variant};

pub const MAGIC: &[u8; 8] = b"GLACKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Params,
    pub contexts: Option<ContextVectors>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    out.extend_from_slice(&u32::try_from(v).context("dimension does not fit in u32")?.to_le_bytes());
    Ok(())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let s = self.params.shape;
        let mut out = Vec::with_capacity(32 + 8 * self.params.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&s.variant.tag().to_le_bytes());
        put_u32(&mut out, s.d)?;
        put_u32(&mut out, s.p)?;
        put_u32(&mut out, s.layers)?;
        let contexts: Vec<&Vector> = match &self.contexts {
            Some(c) => (0..c.count()).map(|k| c.get(k)).collect(),
            None => Vec::new(),
        };
        put_u32(&mut out, contexts.len())?;
        for c in &contexts {
            if c.len() != s.p {
                bail!("contextual vectors have dimension {}, model expects {}", c.len(), s.p);
            }
            for v in c.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in &self.params.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).context("truncated header")?;
        if &magic != MAGIC {
            bail!("not a checkpoint file");
        }
        let mut word = || -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).context("truncated header")?;
            Ok(u32::from_le_bytes(b))
        };
        let tag = word()?;
        let variant = Variant::from_tag(tag).with_context(|| format!("unknown variant tag {tag}"))?;
        let (d, p, layers, count) = (word()? as usize, word()? as usize, word()? as usize, word()? as usize);
        let shape = Shape::new(variant, d, p, layers)?;
        let body = &bytes[8 + 5 * 4..];
        let expected = 8 * (count * p + shape.len());
        if body.len() != expected {
            bail!("checkpoint body has {} bytes, expected {expected}", body.len());
        }
        let mut floats = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let contexts = if count > 0 {
            let vectors = (0..count).map(|_| Vector::from_iterator(p, floats.by_ref().take(p))).collect();
            Some(ContextVectors::new(vectors)?)
        } else {
            None
        };
        let values: Vec<f64> = floats.collect();
        Ok(Self { params: Params { shape, values }, contexts })
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
