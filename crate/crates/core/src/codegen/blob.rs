//! Binary data blob holding position indices and varying constants.
//!
//! Layout (little endian): magic `SGEN`, version `u32`, then sections of
//! `tag: u32, len: u64, payload`. Tag 1 holds `u32` positions, tag 2 `f64`
//! constants and the final tag 0xC5 an FNV-1a checksum of everything before
//! it.

use thiserror::Error;

pub const BLOB_MAGIC: &[u8; 4] = b"SGEN";
pub const BLOB_VERSION: u32 = 1;

const TAG_POSITIONS: u32 = 1;
const TAG_CONSTANTS: u32 = 2;
const TAG_CHECKSUM: u32 = 0xC5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlobError {
    #[error("blob is truncated")]
    Truncated,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported blob version {0}")]
    Version(u32),
    #[error("unknown section tag {0}")]
    UnknownSection(u32),
    #[error("section {0} appears twice")]
    DuplicateSection(u32),
    #[error("section {tag} has length {len}, not a multiple of {unit}")]
    Misaligned { tag: u32, len: u64, unit: u64 },
    #[error("checksum mismatch")]
    Checksum,
    #[error("missing section {0}")]
    Missing(u32),
    #[error("data after checksum")]
    Trailing,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlobData {
    pub positions: Vec<u32>,
    pub constants: Vec<f64>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn section(out: &mut Vec<u8>, tag: u32, payload: &[u8]) {
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

pub fn encode_blob(positions: &[u32], constants: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + positions.len() * 4 + constants.len() * 8);
    out.extend_from_slice(BLOB_MAGIC);
    out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
    let p: Vec<u8> = positions.iter().flat_map(|v| v.to_le_bytes()).collect();
    section(&mut out, TAG_POSITIONS, &p);
    let c: Vec<u8> = constants.iter().flat_map(|v| v.to_le_bytes()).collect();
    section(&mut out, TAG_CONSTANTS, &c);
    let sum = fnv1a(&out);
    section(&mut out, TAG_CHECKSUM, &sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: u64) -> Result<&'a [u8], BlobError> {
        let n = usize::try_from(n).map_err(|_| BlobError::Truncated)?;
        let end = self.pos.checked_add(n).ok_or(BlobError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(BlobError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, BlobError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, BlobError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_blob(bytes: &[u8]) -> Result<BlobData, BlobError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != BLOB_MAGIC {
        return Err(BlobError::BadMagic);
    }
    let version = r.u32()?;
    if version != BLOB_VERSION {
        return Err(BlobError::Version(version));
    }
    let mut positions = None;
    let mut constants = None;
    loop {
        let start = r.pos;
        let tag = r.u32()?;
        let len = r.u64()?;
        match tag {
            TAG_POSITIONS | TAG_CONSTANTS => {
                let unit = if tag == TAG_POSITIONS { 4 } else { 8 };
                if len % unit != 0 {
                    return Err(BlobError::Misaligned { tag, len, unit });
                }
                let payload = r.take(len)?;
                if tag == TAG_POSITIONS {
                    if positions.is_some() {
                        return Err(BlobError::DuplicateSection(tag));
                    }
                    positions = Some(
                        payload
                            .chunks_exact(4)
                            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                            .collect::<Vec<_>>(),
                    );
                } else {
                    if constants.is_some() {
                        return Err(BlobError::DuplicateSection(tag));
                    }
                    constants = Some(
                        payload
                            .chunks_exact(8)
                            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                            .collect::<Vec<_>>(),
                    );
                }
            }
            TAG_CHECKSUM => {
                if len != 8 {
                    return Err(BlobError::Misaligned { tag, len, unit: 8 });
                }
                let stored = r.u64()?;
                if stored != fnv1a(&bytes[..start]) {
                    return Err(BlobError::Checksum);
                }
                if r.pos != bytes.len() {
                    return Err(BlobError::Trailing);
                }
                break;
            }
            other => return Err(BlobError::UnknownSection(other)),
        }
    }
    Ok(BlobData {
        positions: positions.ok_or(BlobError::Missing(TAG_POSITIONS))?,
        constants: constants.ok_or(BlobError::Missing(TAG_CONSTANTS))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let b = encode_blob(&[1, 2, 3], &[0.5, -1.25]);
        let d = decode_blob(&b).unwrap();
        assert_eq!(d.positions, vec![1, 2, 3]);
        assert_eq!(d.constants, vec![0.5, -1.25]);
    }

    #[test]
    fn corruption_is_detected() {
        let b = encode_blob(&[7, 8], &[1.0]);
        for i in 0..b.len() {
            let mut c = b.clone();
            c[i] ^= 0x10;
            assert!(decode_blob(&c).is_err(), "flip at byte {i} accepted");
        }
        for n in 0..b.len() {
            assert!(decode_blob(&b[..n]).is_err());
        }
    }
}
