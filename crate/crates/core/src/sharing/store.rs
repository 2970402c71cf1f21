//! On-disk format for one server's share vector.
//!
//! ```text
//! "OFW1" | scheme u8 | m u16 | t u16 | N u64 | party u16 | β u64 | β × u64 | crc32
//! ```
//! All integers little-endian; the CRC covers every preceding byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{SchemeConfig, SchemeKind, ShareVector};
use crate::error::{Error, Result};
use crate::modmath::Field;

pub const MAGIC: &[u8; 4] = b"OFW1";
const HEADER: usize = 4 + 1 + 2 + 2 + 8 + 2 + 8;

pub fn encode(v: &ShareVector) -> Vec<u8> {
    let cfg = v.config();
    let mut out = Vec::with_capacity(HEADER + 8 * v.len() + 4);
    out.extend_from_slice(MAGIC);
    out.push(cfg.scheme.tag());
    out.extend_from_slice(&(cfg.parties as u16).to_le_bytes());
    out.extend_from_slice(&(cfg.threshold as u16).to_le_bytes());
    out.extend_from_slice(&cfg.field.modulus().to_le_bytes());
    out.extend_from_slice(&v.party().to_le_bytes());
    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for &x in v.values() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn le<const K: usize>(b: &[u8], at: usize) -> [u8; K] {
    b[at..at + K].try_into().unwrap()
}

pub fn decode(bytes: &[u8]) -> Result<ShareVector> {
    if bytes.len() < HEADER + 4 {
        return Err(Error::Decode("share file truncated".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Decode("bad share file magic".into()));
    }
    let body = bytes.len() - 4;
    let crc = u32::from_le_bytes(le(bytes, body));
    if crc32fast::hash(&bytes[..body]) != crc {
        return Err(Error::Decode("share file checksum mismatch".into()));
    }
    let scheme = SchemeKind::from_tag(bytes[4]).map_err(|e| Error::Decode(e.to_string()))?;
    let m = u16::from_le_bytes(le(bytes, 5)) as usize;
    let t = u16::from_le_bytes(le(bytes, 7)) as usize;
    let n = u64::from_le_bytes(le(bytes, 9));
    let party = u16::from_le_bytes(le(bytes, 17));
    let beta = u64::from_le_bytes(le(bytes, 19));
    if (body - HEADER) as u64 != beta.saturating_mul(8) {
        return Err(Error::Decode(format!("share file declares {beta} slots but holds {}", (body - HEADER) / 8)));
    }
    let field = Field::new(n).map_err(|e| Error::Decode(e.to_string()))?;
    let cfg = SchemeConfig {
        scheme,
        parties: m,
        threshold: t,
        field,
    };
    cfg.validate().map_err(|e| Error::Decode(e.to_string()))?;
    let values = bytes[HEADER..body]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ShareVector::new(party, values, cfg).map_err(|e| Error::Decode(e.to_string()))
}

/// Writes through a temporary file and renames, so a crash never leaves a
/// half-written vector behind.
pub fn save(path: &Path, v: &ShareVector) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(v))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ShareVector> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ShareVector {
        let cfg = SchemeConfig::shamir(5, 3, Field::default()).unwrap();
        ShareVector::new(4, vec![0, 1, 2_147_483_646, 77], cfg).unwrap()
    }

    #[test]
    fn layout() {
        let b = encode(&sample());
        assert_eq!(&b[..4], b"OFW1");
        assert_eq!(b[4], 1);
        assert_eq!(&b[5..7], &[5, 0]);
        assert_eq!(&b[7..9], &[3, 0]);
        assert_eq!(&b[9..17], &2_147_483_647u64.to_le_bytes());
        assert_eq!(&b[17..19], &[4, 0]);
        assert_eq!(&b[19..27], &4u64.to_le_bytes());
        assert_eq!(b.len(), 27 + 32 + 4);
    }

    #[test]
    fn roundtrip_and_corruption() {
        let v = sample();
        let b = encode(&v);
        assert_eq!(decode(&b).unwrap(), v);
        let mut bad = b.clone();
        bad[30] ^= 1;
        assert!(matches!(decode(&bad), Err(Error::Decode(_))));
        assert!(decode(&b[..b.len() - 1]).is_err());
        let mut magic = b.clone();
        magic[0] = b'X';
        assert!(decode(&magic).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s4.shares");
        save(&p, &sample()).unwrap();
        assert_eq!(load(&p).unwrap(), sample());
    }
}
