//! The PFPR wire container for protected representations.
//!
//! Layout, frozen at version 1:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PFPR"
//! 4       2     version, little-endian u16
//! 6       2     s (channel count), little-endian u16
//! 8       4     H, little-endian u32
//! 12      4     W, little-endian u32
//! 16      4sHW  coefficients, little-endian f32, channel-major
//! ```
//!
//! The container holds channel data and dimensions and nothing else: there
//! is no field for a rank id, selection, or permutation, so a decoded
//! payload cannot reveal which rank produced it.

use crate::error::{Error, Result};
use crate::ranks::ProtectedRep;

pub const MAGIC: [u8; 4] = *b"PFPR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

/// Serialize a protected representation. Deterministic: the same rep always
/// produces the same bytes.
pub fn encode(rep: &ProtectedRep) -> Result<Vec<u8>> {
    let s = u16::try_from(rep.channels())
        .map_err(|_| Error::invalid("channel count exceeds u16"))?;
    let h = u32::try_from(rep.height()).map_err(|_| Error::invalid("height exceeds u32"))?;
    let w = u32::try_from(rep.width()).map_err(|_| Error::invalid("width exceeds u32"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * rep.coefficients().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&s.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    for c in rep.coefficients() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    Ok(out)
}

/// Exact inverse of [`encode`].
pub fn decode(bytes: &[u8]) -> Result<ProtectedRep> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::LengthMismatch {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let s = u16::from_le_bytes(bytes[6..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + 4 * s * h * w;
    if bytes.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ProtectedRep::new(s, h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rep(seed: u64, s: usize, h: usize, w: usize) -> ProtectedRep {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..s * h * w).map(|_| rng.gen_range(-500.0..500.0)).collect();
        ProtectedRep::new(s, h, w, data).unwrap()
    }

    #[test]
    fn encoded_size_from_layout_arithmetic() {
        let rep = random_rep(1, 9, 16, 16);
        let bytes = encode(&rep).unwrap();
        assert_eq!(bytes.len(), 4 + 2 + 2 + 4 + 4 + 4 * 9 * 16 * 16);
        assert_eq!(bytes.len(), 9232);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let rep = random_rep(2, 9, 4, 6);
        let back = decode(&encode(&rep).unwrap()).unwrap();
        assert_eq!(back, rep);
        for (a, b) in rep.coefficients().iter().zip(back.coefficients()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn single_coefficient_change_changes_bytes() {
        let rep = random_rep(3, 2, 2, 2);
        let mut data = rep.coefficients().to_vec();
        data[5] += 1.0;
        let other = ProtectedRep::new(2, 2, 2, data).unwrap();
        assert_ne!(encode(&rep).unwrap(), encode(&other).unwrap());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode(&random_rep(4, 1, 2, 2)).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::BadMagic(m)) if &m == b"XFPR"));
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let mut bytes = encode(&random_rep(5, 1, 2, 2)).unwrap();
        bytes[4..6].copy_from_slice(&7u16.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::UnsupportedVersion(7))));
    }

    #[test]
    fn truncated_and_oversized_payloads_are_rejected() {
        let bytes = encode(&random_rep(6, 2, 3, 3)).unwrap();
        assert!(matches!(
            decode(&bytes[..bytes.len() - 3]),
            Err(Error::LengthMismatch { .. })
        ));
        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(
            decode(&longer),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            decode(&bytes[..10]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn prop_round_trip(seed in proptest::prelude::any::<u64>(), s in 1usize..12, h in 1usize..6, w in 1usize..6) {
            let rep = random_rep(seed, s, h, w);
            let back = decode(&encode(&rep).unwrap()).unwrap();
            proptest::prop_assert_eq!(back, rep);
        }
    }
}
