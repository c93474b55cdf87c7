//! Versioned little-endian binary formats: merge sequences (`ARGS`), token
//! streams (`ARGT`) and attention masks (`ARGM`).

use nalgebra::{Quaternion, Vector3};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::masks::{AttentionMask, MaskVariant};
use crate::simplify::{MergeRecord, MergeSequence};
use crate::tokenize::{QuantSpec, TokenRecord, ATTRIBUTES};

pub const SEQUENCE_MAGIC: [u8; 4] = *b"ARGS";
pub const TOKENS_MAGIC: [u8; 4] = *b"ARGT";
pub const MASK_MAGIC: [u8; 4] = *b"ARGM";

pub const SEQUENCE_VERSION: u16 = 1;
pub const TOKENS_VERSION: u16 = 1;
pub const MASK_VERSION: u16 = 1;

/// Parent id written for the root token.
pub const NO_PARENT: u32 = u32::MAX;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{} ends at byte {} but {} more are needed",
                self.what,
                self.buf.len(),
                n - (self.buf.len() - self.pos)
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn preamble(&mut self, magic: [u8; 4], supported: u16) -> Result<()> {
        let found = self.array::<4>()?;
        if found != magic {
            return Err(Error::BadMagic {
                expected: magic,
                found,
            });
        }
        let version = self.u16()?;
        if version != supported {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported,
            });
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} has {} trailing bytes",
                self.what,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_gaussian(out: &mut Vec<u8>, g: &Gaussian3D) -> Result<()> {
    for v in g.center.iter() {
        put_f64(out, *v);
    }
    put_f64(out, g.opacity);
    for v in g.scale.iter() {
        put_f64(out, *v);
    }
    for v in [g.rotation.w, g.rotation.i, g.rotation.j, g.rotation.k] {
        put_f64(out, v);
    }
    for v in g.sh_dc {
        put_f64(out, v);
    }
    let extra = u16::try_from(g.sh_rest.len())
        .map_err(|_| Error::InvalidParameter(format!("{} SH coefficients", g.sh_rest.len())))?;
    put_u16(out, extra);
    for v in &g.sh_rest {
        put_f64(out, *v);
    }
    Ok(())
}

fn get_gaussian(r: &mut Reader<'_>) -> Result<Gaussian3D> {
    let mut f = [0.0; 14];
    for v in &mut f {
        *v = r.f64()?;
    }
    let extra = r.u16()? as usize;
    let sh_rest = (0..extra).map(|_| r.f64()).collect::<Result<_>>()?;
    Ok(Gaussian3D {
        center: Vector3::new(f[0], f[1], f[2]),
        opacity: f[3],
        scale: Vector3::new(f[4], f[5], f[6]),
        rotation: Quaternion::new(f[7], f[8], f[9], f[10]),
        sh_dc: [f[11], f[12], f[13]],
        sh_rest,
    })
}

pub fn encode_sequence(seq: &MergeSequence) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(14 + seq.len() * (16 + 3 * 114));
    out.extend_from_slice(&SEQUENCE_MAGIC);
    put_u16(&mut out, SEQUENCE_VERSION);
    put_u32(&mut out, seq.source_count);
    put_u32(&mut out, seq.len() as u32);
    for r in &seq.records {
        put_u32(&mut out, r.step);
        put_u32(&mut out, r.parent_id);
        put_u32(&mut out, r.child1_id);
        put_u32(&mut out, r.child2_id);
        put_gaussian(&mut out, &r.child1)?;
        put_gaussian(&mut out, &r.child2)?;
        put_gaussian(&mut out, &r.parent)?;
    }
    Ok(out)
}

pub fn decode_sequence(buf: &[u8]) -> Result<MergeSequence> {
    let mut r = Reader::new(buf, "merge sequence");
    r.preamble(SEQUENCE_MAGIC, SEQUENCE_VERSION)?;
    let source_count = r.u32()?;
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(buf.len() / 100));
    for _ in 0..count {
        let step = r.u32()?;
        let parent_id = r.u32()?;
        let child1_id = r.u32()?;
        let child2_id = r.u32()?;
        let child1 = get_gaussian(&mut r)?;
        let child2 = get_gaussian(&mut r)?;
        let parent = get_gaussian(&mut r)?;
        records.push(MergeRecord {
            step,
            parent_id,
            child1_id,
            child2_id,
            child1,
            child2,
            parent,
        });
    }
    r.finish()?;
    Ok(MergeSequence {
        records,
        source_count,
    })
}

/// Contents of a token stream file.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFile {
    pub spec: QuantSpec,
    /// Deepest level index `L`.
    pub depth: u16,
    pub tokens: Vec<TokenRecord>,
}

pub fn encode_tokens(file: &TokenFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 14 * 16 + 4 + file.tokens.len() * 25);
    out.extend_from_slice(&TOKENS_MAGIC);
    put_u16(&mut out, TOKENS_VERSION);
    put_u32(&mut out, file.tokens.len() as u32);
    put_u16(&mut out, file.depth);
    for v in file.spec.min {
        put_f64(&mut out, v);
    }
    for v in file.spec.max {
        put_f64(&mut out, v);
    }
    put_u32(&mut out, file.spec.flag_bits());
    for t in &file.tokens {
        put_u32(&mut out, t.node_id);
        put_u32(&mut out, t.parent_id.unwrap_or(NO_PARENT));
        put_u16(&mut out, t.level);
        out.push(t.splittable as u8);
        out.extend_from_slice(&t.bins);
    }
    out
}

pub fn decode_tokens(buf: &[u8]) -> Result<TokenFile> {
    let mut r = Reader::new(buf, "token stream");
    r.preamble(TOKENS_MAGIC, TOKENS_VERSION)?;
    let count = r.u32()? as usize;
    let depth = r.u16()?;
    let mut min = [0.0; ATTRIBUTES];
    let mut max = [0.0; ATTRIBUTES];
    for v in &mut min {
        *v = r.f64()?;
    }
    for v in &mut max {
        *v = r.f64()?;
    }
    let spec = QuantSpec::from_parts(min, max, r.u32()?)?;
    let mut tokens = Vec::with_capacity(count.min(buf.len() / 25));
    for _ in 0..count {
        let node_id = r.u32()?;
        let parent = r.u32()?;
        let level = r.u16()?;
        let splittable = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::Format(format!("splittable flag {other}"))),
        };
        let bins = r.array::<ATTRIBUTES>()?;
        tokens.push(TokenRecord {
            node_id,
            parent_id: (parent != NO_PARENT).then_some(parent),
            level,
            splittable,
            bins,
        });
    }
    r.finish()?;
    Ok(TokenFile {
        spec,
        depth,
        tokens,
    })
}

/// Row-major bit-packed mask, least significant bit first, no row padding.
pub fn encode_mask(mask: &AttentionMask) -> Vec<u8> {
    let n = mask.n;
    let mut out = Vec::with_capacity(11 + (n * n).div_ceil(8));
    out.extend_from_slice(&MASK_MAGIC);
    put_u16(&mut out, MASK_VERSION);
    put_u32(&mut out, n as u32);
    out.push(mask.variant.code());
    let mut bits = vec![0u8; (n * n).div_ceil(8)];
    for (i, cell) in mask.cells().iter().enumerate() {
        if *cell {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&bits);
    out
}

pub fn decode_mask(buf: &[u8]) -> Result<AttentionMask> {
    let mut r = Reader::new(buf, "mask");
    r.preamble(MASK_MAGIC, MASK_VERSION)?;
    let n = r.u32()? as usize;
    let code = r.u8()?;
    let variant = MaskVariant::from_code(code)
        .ok_or_else(|| Error::Format(format!("unknown mask variant code {code}")))?;
    let cells = n
        .checked_mul(n)
        .ok_or_else(|| Error::Format("mask size overflows".into()))?;
    let bits = r.take(cells.div_ceil(8))?;
    r.finish()?;
    let allowed = (0..cells).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
    AttentionMask::from_rows(n, variant, allowed)
}
