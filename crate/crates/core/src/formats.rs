//! Binary formats for mask sets (`MSK1`) and demixing stacks (`WDM1`).
//!
//! Both are little-endian: a 4-byte magic, `u32` version (1), `u32`
//! dimensions, then complex64 values (two `f32`, real then imaginary).
//! Masks are stored as `K, F, T` in `(k, f, t)` order; demixing dumps as
//! `K, F` followed by each `W(f)` row-major.

use std::io::{Read, Write};
use std::path::Path;

use crate::algorithms::MaskSet;
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::separation::DemixingStack;

pub const MASK_MAGIC: &[u8; 4] = b"MSK1";
pub const DEMIXING_MAGIC: &[u8; 4] = b"WDM1";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_c64(out: &mut Vec<u8>, z: C64) {
    out.extend_from_slice(&(z.re as f32).to_le_bytes());
    out.extend_from_slice(&(z.im as f32).to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn c64(&mut self) -> Option<C64> {
        let b = self.take(8)?;
        let re = f32::from_le_bytes(b[..4].try_into().unwrap());
        let im = f32::from_le_bytes(b[4..].try_into().unwrap());
        Some(C64::new(re as f64, im as f64))
    }
}

pub fn encode_masks(m: &MaskSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * m.data().len());
    out.extend_from_slice(MASK_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, m.n_sources() as u32);
    put_u32(&mut out, m.n_freq() as u32);
    put_u32(&mut out, m.n_frames() as u32);
    for &z in m.data() {
        put_c64(&mut out, z);
    }
    out
}

pub fn decode_masks(bytes: &[u8]) -> Result<MaskSet> {
    let bad = |msg: &str| Error::BadMaskHeader(msg.to_string());
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4) != Some(MASK_MAGIC.as_slice()) {
        return Err(bad("missing MSK1 magic"));
    }
    let version = c.u32().ok_or_else(|| bad("truncated header"))?;
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = c.u32().ok_or_else(|| bad("truncated header"))? as usize;
    }
    let [k, f, t] = dims;
    let n = k.checked_mul(f).and_then(|v| v.checked_mul(t)).ok_or_else(|| bad("dimensions overflow"))?;
    if bytes.len() - c.pos != n * 8 {
        return Err(bad(&format!(
            "payload is {} bytes, header {}x{}x{} needs {}",
            bytes.len() - c.pos,
            k,
            f,
            t,
            n * 8
        )));
    }
    let data = (0..n).map(|_| c.c64().expect("length checked")).collect();
    MaskSet::new(k, f, t, data).map_err(|e| bad(&e.to_string()))
}

pub fn write_masks(path: impl AsRef<Path>, m: &MaskSet) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode_masks(m))?;
    Ok(())
}

pub fn read_masks(path: impl AsRef<Path>) -> Result<MaskSet> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_masks(&buf)
}

pub fn encode_demixing(w: &DemixingStack) -> Vec<u8> {
    let k = w.dim();
    let mut out = Vec::with_capacity(16 + 8 * k * k * w.n_freq());
    out.extend_from_slice(DEMIXING_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, k as u32);
    put_u32(&mut out, w.n_freq() as u32);
    for m in w.mats() {
        for &z in m.as_slice() {
            put_c64(&mut out, z);
        }
    }
    out
}

pub fn decode_demixing(bytes: &[u8]) -> Result<DemixingStack> {
    let bad = |msg: &str| Error::BadDemixingDump(msg.to_string());
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4) != Some(DEMIXING_MAGIC.as_slice()) {
        return Err(bad("missing WDM1 magic"));
    }
    if c.u32() != Some(FORMAT_VERSION) {
        return Err(bad("unsupported version"));
    }
    let k = c.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let nf = c.u32().ok_or_else(|| bad("truncated header"))? as usize;
    if !(2..=4).contains(&k) || nf == 0 || bytes.len() - c.pos != nf * k * k * 8 {
        return Err(bad("header and payload disagree"));
    }
    let mats = (0..nf)
        .map(|_| {
            let vals: Vec<C64> = (0..k * k).map(|_| c.c64().expect("length checked")).collect();
            CMat::from_row_major(&vals)
        })
        .collect::<Result<Vec<_>>>()?;
    DemixingStack::from_mats(mats)
}

pub fn write_demixing(path: impl AsRef<Path>, w: &DemixingStack) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode_demixing(w))?;
    Ok(())
}

pub fn read_demixing(path: impl AsRef<Path>) -> Result<DemixingStack> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_demixing(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trip() {
        let data: Vec<C64> = (0..2 * 3 * 4).map(|i| C64::new(i as f64 * 0.125, -0.5)).collect();
        let m = MaskSet::new(2, 3, 4, data).unwrap();
        let bytes = encode_masks(&m);
        assert_eq!(&bytes[..4], b"MSK1");
        assert_eq!(bytes.len(), 20 + 24 * 8);
        assert_eq!(decode_masks(&bytes).unwrap(), m);
    }

    #[test]
    fn truncated_masks_are_rejected() {
        let m = MaskSet::constant(2, 3, 4, C64::new(1.0, 0.0)).unwrap();
        let bytes = encode_masks(&m);
        for cut in [0, 3, 10, 19, bytes.len() - 1] {
            assert!(matches!(decode_masks(&bytes[..cut]), Err(Error::BadMaskHeader(_))), "cut {cut}");
        }
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(decode_masks(&wrong), Err(Error::BadMaskHeader(_))));
    }

    #[test]
    fn demixing_round_trip() {
        let m = CMat::from_row_major(&[C64::new(1.0, 0.5), C64::new(-2.0, 0.0), C64::new(0.25, 1.0), C64::new(3.0, -1.0)])
            .unwrap();
        let w = DemixingStack::from_mats(vec![m, m.adjoint()]).unwrap();
        let back = decode_demixing(&encode_demixing(&w)).unwrap();
        assert_eq!(back, w);
        assert!(decode_demixing(&encode_demixing(&w)[..30]).is_err());
    }
}
