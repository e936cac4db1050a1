//! Seeded, counter-addressed random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream selected by
//! `(seed, stream)`. Work items (sample rows, Monte Carlo chunks, bootstrap
//! replicates) own a stream index, so results do not depend on how the work
//! is scheduled across threads.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Independent stream `stream` derived from `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mix a domain tag into a seed so unrelated procedures fed the same user
/// seed do not share streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform on the open interval (0, 1).
pub fn open01<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
