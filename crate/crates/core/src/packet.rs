//! Binary storage-packet format.
//!
//! All integers big-endian:
//!
//! ```text
//! "DEC1" | version u8 = 1 | degree u8 | k u32 | n u32 | storage_id u32
//!        | m u32 | m x (source_id u32, coeff in ceil(u/8) bytes)
//!        | L u32 | L x symbol in ceil(u/8) bytes
//! ```
//!
//! The header carries only the extension degree, so decoding always uses the
//! default reduction polynomial for that degree.

use thiserror::Error;

use crate::code::StoragePacket;
use crate::field::{FieldElement, FieldError, FieldSpec};

pub const MAGIC: &[u8; 4] = b"DEC1";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("bad magic (not a storage packet)")]
    BadMagic,
    #[error("unsupported packet version {0}")]
    UnsupportedVersion(u8),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("packet truncated")]
    Truncated,
    #[error("{0} trailing bytes after packet")]
    TrailingBytes(usize),
    #[error("packet uses non-default reduction polynomial {0}; the format cannot record it")]
    NonStandardField(FieldSpec),
    #[error("storage id {storage_id} out of range for n = {n}")]
    StorageIdOutOfRange { storage_id: u32, n: u32 },
    #[error("source id {source_id} out of range for k = {k}")]
    SourceOutOfRange { source_id: u32, k: u32 },
    #[error("length {0} is not a whole number of symbols")]
    OddLength(usize),
}

fn put_symbol(out: &mut Vec<u8>, width: usize, v: FieldElement) {
    if width == 2 {
        out.extend_from_slice(&v.0.to_be_bytes());
    } else {
        out.push(v.0 as u8);
    }
}

pub fn to_bytes(p: &StoragePacket) -> Result<Vec<u8>, PacketError> {
    if !p.field.is_standard() {
        return Err(PacketError::NonStandardField(p.field));
    }
    let w = p.field.symbol_bytes();
    let mut out = Vec::with_capacity(26 + p.coeffs.len() * (4 + w) + p.payload.len() * w);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(p.field.degree() as u8);
    out.extend_from_slice(&p.k.to_be_bytes());
    out.extend_from_slice(&p.n.to_be_bytes());
    out.extend_from_slice(&p.storage_id.to_be_bytes());
    out.extend_from_slice(&(p.coeffs.len() as u32).to_be_bytes());
    for &(i, f) in &p.coeffs {
        out.extend_from_slice(&i.to_be_bytes());
        put_symbol(&mut out, w, f);
    }
    out.extend_from_slice(&(p.payload.len() as u32).to_be_bytes());
    for &s in &p.payload {
        put_symbol(&mut out, w, s);
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], PacketError> {
        let end = self.pos.checked_add(len).ok_or(PacketError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(PacketError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, PacketError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, PacketError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn symbol(&mut self, spec: &FieldSpec) -> Result<FieldElement, PacketError> {
        let raw = self.take(spec.symbol_bytes())?;
        let v = raw.iter().fold(0u32, |acc, &b| (acc << 8) | b as u32);
        if v >= spec.order() {
            return Err(FieldError::OutOfRange {
                value: v,
                degree: spec.degree(),
            }
            .into());
        }
        Ok(FieldElement(v as u16))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<StoragePacket, PacketError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4).map_err(|_| PacketError::BadMagic)? != MAGIC {
        return Err(PacketError::BadMagic);
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(PacketError::UnsupportedVersion(version));
    }
    let field = FieldSpec::standard(r.u8()? as u32)?;
    let k = r.u32()?;
    let n = r.u32()?;
    let storage_id = r.u32()?;
    if storage_id >= n {
        return Err(PacketError::StorageIdOutOfRange { storage_id, n });
    }
    let m = r.u32()? as usize;
    // cap the preallocation by what the buffer could possibly hold
    let mut coeffs = Vec::with_capacity(m.min(buf.len() / 5));
    for _ in 0..m {
        let source_id = r.u32()?;
        if source_id >= k {
            return Err(PacketError::SourceOutOfRange { source_id, k });
        }
        coeffs.push((source_id, r.symbol(&field)?));
    }
    let len = r.u32()? as usize;
    let mut payload = Vec::with_capacity(len.min(buf.len()));
    for _ in 0..len {
        payload.push(r.symbol(&field)?);
    }
    if r.pos != buf.len() {
        return Err(PacketError::TrailingBytes(buf.len() - r.pos));
    }
    Ok(StoragePacket {
        storage_id,
        k,
        n,
        field,
        coeffs,
        payload,
    })
}

/// File bytes to field symbols. GF(2^8): one symbol per byte. GF(2^16):
/// big-endian byte pairs (length must be even). GF(2^4): two symbols per
/// byte, high nibble first.
pub fn bytes_to_symbols(field: &FieldSpec, bytes: &[u8]) -> Result<Vec<FieldElement>, PacketError> {
    match field.degree() {
        4 => Ok(bytes
            .iter()
            .flat_map(|&b| [FieldElement((b >> 4) as u16), FieldElement((b & 0xf) as u16)])
            .collect()),
        8 => Ok(bytes.iter().map(|&b| FieldElement(b as u16)).collect()),
        _ => {
            if !bytes.len().is_multiple_of(2) {
                return Err(PacketError::OddLength(bytes.len()));
            }
            Ok(bytes
                .chunks_exact(2)
                .map(|c| FieldElement(u16::from_be_bytes([c[0], c[1]])))
                .collect())
        }
    }
}

/// Inverse of [`bytes_to_symbols`].
pub fn symbols_to_bytes(field: &FieldSpec, symbols: &[FieldElement]) -> Result<Vec<u8>, PacketError> {
    if let Some(bad) = symbols.iter().find(|s| s.0 as u32 >= field.order()) {
        return Err(FieldError::OutOfRange {
            value: bad.0 as u32,
            degree: field.degree(),
        }
        .into());
    }
    match field.degree() {
        4 => {
            if !symbols.len().is_multiple_of(2) {
                return Err(PacketError::OddLength(symbols.len()));
            }
            Ok(symbols
                .chunks_exact(2)
                .map(|c| ((c[0].0 << 4) | c[1].0) as u8)
                .collect())
        }
        8 => Ok(symbols.iter().map(|s| s.0 as u8).collect()),
        _ => Ok(symbols.iter().flat_map(|s| s.0.to_be_bytes()).collect()),
    }
}
