//! Seed derivation. Every random stream in the toolkit is seeded from the
//! master seed as `first 8 bytes (LE) of SHA-256(master_le || tag || index_le)`,
//! so results do not depend on generation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}

pub fn rng(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, tag, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_streams() {
        assert_eq!(derive(1, "scene", 0), derive(1, "scene", 0));
        assert_ne!(derive(1, "scene", 0), derive(1, "scene", 1));
        assert_ne!(derive(1, "scene", 0), derive(1, "detect", 0));
        assert_ne!(derive(1, "scene", 0), derive(2, "scene", 0));
    }
}
