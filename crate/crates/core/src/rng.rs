//! Stage-scoped random number streams.
//!
//! Every stochastic stage of an experiment derives its generator from the
//! master seed and a stage label. Changing one stage's inputs therefore never
//! perturbs another stage's draws, and per-sample substreams make data
//! generation safe to parallelize without losing reproducibility.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a deterministic generator from `(master_seed, label)`.
pub fn stream(master_seed: u64, label: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// An independent substream of `base`, e.g. one per generated sample.
pub fn substream(base: &ChaCha8Rng, index: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(index);
    rng.set_word_pos(0);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_inputs_same_stream() {
        let mut a = stream(42, "scenario");
        let mut b = stream(42, "scenario");
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn labels_give_independent_streams() {
        let mut a = stream(42, "scenario");
        let mut b = stream(42, "target-train");
        let draws_a: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let draws_b: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(draws_a, draws_b);
    }

    #[test]
    fn substreams_differ_and_reproduce() {
        let base = stream(7, "obs");
        let mut s0 = substream(&base, 0);
        let mut s1 = substream(&base, 1);
        assert_ne!(s0.next_u64(), s1.next_u64());

        let mut again = substream(&base, 0);
        let mut s0b = substream(&base, 0);
        assert_eq!(again.next_u64(), s0b.next_u64());
    }
}
