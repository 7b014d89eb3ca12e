//! Deterministic RNG stream derivation.
//!
//! A stream is a ChaCha8 generator. The 32-byte key is the SHA-256 digest of
//! the seed (8 bytes, little endian) followed by each label as a 4-byte
//! little-endian length and its UTF-8 bytes. Replicate streams reuse the key
//! and select the ChaCha stream id, so replicate `i` of a parent is
//! reproducible without touching its siblings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

fn key_for<S: AsRef<str>>(seed: u64, labels: &[S]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        let bytes = label.as_ref().as_bytes();
        hasher.update((bytes.len() as u32).to_le_bytes());
        hasher.update(bytes);
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    key
}

/// Stream for the label path `labels` under `seed`.
pub fn derive_stream<S: AsRef<str>>(seed: u64, labels: &[S]) -> Stream {
    Stream::from_seed(key_for(seed, labels))
}

/// Independent per-replicate streams forked from a parent generator.
///
/// Drawing the base seed consumes one `u64` from the parent; every replicate
/// stream is then a pure function of `(base, index)`, independent of the
/// order or thread on which replicates run.
#[derive(Debug, Clone, Copy)]
pub struct StreamFamily {
    key: [u8; 32],
}

impl StreamFamily {
    pub fn fork<R: Rng + ?Sized>(parent: &mut R) -> Self {
        let base: u64 = parent.random();
        Self {
            key: key_for(base, &["replicates"]),
        }
    }

    pub fn stream(&self, index: u64) -> Stream {
        let mut rng = Stream::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}
