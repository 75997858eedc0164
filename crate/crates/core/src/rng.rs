//! Counter-based random streams.
//!
//! Every Monte Carlo consumer derives its own `(seed, stream)` pair from the
//! work item it handles (pass, frame, pixel, sample), so results never depend
//! on scheduling. ChaCha8 provides the block function; its 64-bit stream id and
//! word position are exactly the stream/counter pair we need.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Well-separated stream purposes. Mixed into every derived stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Render = 1,
    Dataset = 2,
    CacheTrain = 3,
    /// Render used for `dL/dy` in the material gradient.
    LossValue = 4,
    /// Render used for `dy/dphi` in the material gradient.
    RenderGrad = 5,
    MaterialBatch = 6,
    Init = 7,
    Sweep = 8,
    Trajectory = 9,
    Test = 10,
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> RngStream {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream { seed, stream, inner }
    }

    /// Stream keyed by a purpose tag and an arbitrary list of indices.
    pub fn derive(seed: u64, purpose: Purpose, keys: &[u64]) -> RngStream {
        RngStream::new(seed, stream_id(purpose, keys))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Repositions the stream at an absolute word offset.
    pub fn seek(&mut self, counter: u128) {
        self.inner.set_word_pos(counter);
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `[0, n)`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    #[inline]
    pub fn next_2d(&mut self) -> (f64, f64) {
        (self.next_f64(), self.next_f64())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a purpose and key list into a 64-bit stream id.
pub fn stream_id(purpose: Purpose, keys: &[u64]) -> u64 {
    let mut h = splitmix(purpose as u64);
    for &k in keys {
        h = splitmix(h ^ splitmix(k));
    }
    h
}

/// Debug-build guard for product estimators whose factors must be independent.
#[inline]
pub fn debug_assert_independent(a: &RngStream, b: &RngStream) {
    debug_assert!(
        a.seed != b.seed || a.stream != b.stream,
        "product estimator factors share RNG stream {} (seed {})",
        a.stream,
        a.seed
    );
}
