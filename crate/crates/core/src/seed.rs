//! Named random streams split off a single root seed.
//!
//! Every consumer of randomness asks for a stream by name ("train", "batch",
//! "deepfool", "synth", ...). Streams are independent ChaCha8 streams keyed by
//! the root seed and a stable hash of the name, so rerunning one stage never
//! perturbs the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    root: u64,
}

impl SeedStreams {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn rng(&self, name: &str) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(stream_id(name));
        rng
    }

    /// A derived stream for the `index`-th replicate of `name`.
    pub fn rng_indexed(&self, name: &str, index: u64) -> ChaCha8Rng {
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.root ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(stream_id(name));
        rng
    }
}

fn stream_id(name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = SeedStreams::new(7);
        let a: Vec<u64> = (0..4).map(|_| s.rng("train").gen()).collect();
        let mut r1 = s.rng("train");
        let mut r2 = s.rng("batch");
        let x1: u64 = r1.gen();
        let x2: u64 = r2.gen();
        assert_eq!(a[0], x1);
        assert_ne!(x1, x2);
        assert_ne!(
            s.rng_indexed("batch", 1).gen::<u64>(),
            s.rng_indexed("batch", 2).gen::<u64>()
        );
    }
}
