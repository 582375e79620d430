//! Stable seed derivation.
//!
//! A derived seed is the first eight bytes (little endian) of the SHA-256
//! digest of the base seed followed by each path component. Integers are
//! encoded as a `0x01` tag plus eight little-endian bytes, labels as a `0x02`
//! tag, an eight-byte length and the UTF-8 bytes. The encoding never changes
//! between releases, so derived streams are reproducible across platforms
//! and unaffected by adding unrelated components elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy)]
pub enum SeedPart<'a> {
    Index(u64),
    Label(&'a str),
}

impl From<u64> for SeedPart<'_> {
    fn from(v: u64) -> Self {
        SeedPart::Index(v)
    }
}

impl From<usize> for SeedPart<'_> {
    fn from(v: usize) -> Self {
        SeedPart::Index(v as u64)
    }
}

impl<'a> From<&'a str> for SeedPart<'a> {
    fn from(v: &'a str) -> Self {
        SeedPart::Label(v)
    }
}

pub fn derive_seed(base: u64, parts: &[SeedPart<'_>]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for part in parts {
        match part {
            SeedPart::Index(i) => {
                h.update([1u8]);
                h.update(i.to_le_bytes());
            }
            SeedPart::Label(s) => {
                h.update([2u8]);
                h.update((s.len() as u64).to_le_bytes());
                h.update(s.as_bytes());
            }
        }
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Portable generator used for every random stream in the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(base: u64, parts: &[SeedPart<'_>]) -> ChaCha8Rng {
    rng(derive_seed(base, parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_distinguishes_parts() {
        let a = derive_seed(7, &["cell".into(), 3u64.into()]);
        assert_eq!(a, derive_seed(7, &["cell".into(), 3u64.into()]));
        assert_ne!(a, derive_seed(7, &["cell".into(), 4u64.into()]));
        assert_ne!(a, derive_seed(8, &["cell".into(), 3u64.into()]));
        // label "3" and index 3 must not collide
        assert_ne!(
            derive_seed(7, &["cell".into(), "3".into()]),
            derive_seed(7, &["cell".into(), 3u64.into()])
        );
    }
}
