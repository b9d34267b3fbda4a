//! Deterministic path execution.
//!
//! Path `p` always draws from ChaCha8 stream `p` under the run seed, so a
//! path's result is a pure function of `(seed, p)`. Results are collected in
//! path order, which makes every downstream aggregate independent of the
//! worker count. With the `parallel` feature (default) paths are spread over
//! a rayon pool; without it they run sequentially.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Recorded in reports so runs can be reproduced.
pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64(seed)/set_stream(path)";

pub type PathRng = ChaCha8Rng;

pub fn path_rng(seed: u64, path: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Derives an independent run seed for a named sub-experiment.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, folded into the seed through splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `f` for every path index on the calling thread.
pub fn map_paths_sequential<T, F>(paths: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..paths).map(f).collect()
}

/// Runs `f` for every path index on `workers` threads (0 = all cores).
#[cfg(feature = "parallel")]
pub fn map_paths<T, F>(paths: u64, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if workers == 1 {
        return map_paths_sequential(paths, f);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(|| (0..paths).into_par_iter().map(f).collect())
}

#[cfg(not(feature = "parallel"))]
pub fn map_paths<T, F>(paths: u64, _workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    map_paths_sequential(paths, f)
}
