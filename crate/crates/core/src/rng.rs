//! Seeded random streams.
//!
//! Every Monte Carlo job is split into fixed-size chunks; chunk `i` of a job
//! with seed `s` draws from its own ChaCha stream keyed by a SplitMix64 hash
//! of `(s, i)`. Results therefore do not depend on how chunks are scheduled
//! across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Replicates per chunk.
pub const CHUNK_SIZE: usize = 4096;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for a single-threaded job.
pub fn stream(seed: u64) -> SimRng {
    SimRng::seed_from_u64(splitmix64(seed))
}

/// Stream for chunk `chunk` of the job seeded with `seed`.
pub fn chunk_stream(seed: u64, chunk: u64) -> SimRng {
    SimRng::seed_from_u64(splitmix64(
        splitmix64(seed) ^ splitmix64(chunk.wrapping_add(0x5851_f42d_4c95_7f2d)),
    ))
}

/// Splits `n` replicates into `(chunk index, count)` pairs.
pub fn chunks(n: usize) -> Vec<(u64, usize)> {
    (0..n.div_ceil(CHUNK_SIZE))
        .map(|i| (i as u64, CHUNK_SIZE.min(n - i * CHUNK_SIZE)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn chunks_cover_all_replicates() {
        let c = chunks(10_000);
        assert_eq!(c.len(), 3);
        assert_eq!(c.iter().map(|x| x.1).sum::<usize>(), 10_000);
        assert!(chunks(0).is_empty());
    }

    #[test]
    fn streams_are_distinct_and_repeatable() {
        let a: u64 = chunk_stream(7, 0).random();
        let b: u64 = chunk_stream(7, 1).random();
        let c: u64 = chunk_stream(8, 0).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, chunk_stream(7, 0).random::<u64>());
    }
}
