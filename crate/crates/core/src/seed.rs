use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for one independent unit of work (a trial, a table, ...).
///
/// Each `(seed, index)` pair selects its own ChaCha stream, so work items can be
/// evaluated in any order or on any thread and still see the same numbers.
pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
