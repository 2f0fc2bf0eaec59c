//! Deterministic random streams.
//!
//! Every random decision in a run is drawn from a [`RngStream`] identified by
//! `(seed, stream_id)`. Streams are ChaCha8 keystreams, so two streams with the
//! same seed but different ids never overlap, and a stream can be replayed
//! exactly by reconstructing it. The coupled-trajectory diagnostics rely on the
//! replay property to feed identical minibatches to two trajectories.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::vector::ParamVector;

/// Well-known stream ids used by the optimizers.
pub mod streams {
    pub const PERTURBATION: u64 = 1;
    pub const MINIBATCH: u64 = 2;
    pub const RANDOM_STOP: u64 = 3;
    pub const LARGE_BATCH: u64 = 4;
    pub const INIT: u64 = 5;
    pub const CERTIFY: u64 = 6;
}

/// Multiset of component indices (0-based), in draw order.
pub type IndexMultiset = Vec<usize>;

#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
    seed: u64,
    stream_id: u64,
}

/// Opens the stream `(seed, stream_id)` at its first draw.
pub fn seeded_rng(seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(seed, stream_id)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            inner,
            seed,
            stream_id,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A child stream keyed by `(seed, salt)`, independent of this one.
    pub fn derive(&self, salt: u64) -> RngStream {
        let mixed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(17)
            ^ self.stream_id.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
        RngStream::new(mixed ^ salt, self.stream_id.wrapping_add(salt))
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Draws `ξ` uniformly from the Euclidean ball of radius `r` in `d` dimensions.
///
/// Isotropic Gaussian direction scaled by `r · U^{1/d}`.
pub fn sample_uniform_ball(rng: &mut RngStream, d: usize, r: f64) -> ParamVector {
    assert!(d >= 1, "ball dimension must be positive");
    assert!(r >= 0.0, "ball radius must be nonnegative");
    if r == 0.0 {
        return ParamVector::zeros(d);
    }
    let mut xi: Vec<f64> = loop {
        let v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        if v.iter().any(|c| *c != 0.0) {
            break v;
        }
    };
    let norm = xi.iter().map(|c| c * c).sum::<f64>().sqrt();
    let radius = r * rng.uniform().powf(1.0 / d as f64);
    for c in &mut xi {
        *c *= radius / norm;
    }
    ParamVector::from(xi)
}

/// Draws `b` indices i.i.d. uniformly from `0..n` (with replacement).
pub fn sample_minibatch(rng: &mut RngStream, n: usize, b: usize) -> IndexMultiset {
    assert!(n >= 1 && b >= 1, "minibatch needs n >= 1 and b >= 1");
    (0..b).map(|_| rng.index(n)).collect()
}

/// Draws `min(b, n)` distinct indices from `0..n` (partial Fisher-Yates).
pub fn sample_minibatch_without_replacement(
    rng: &mut RngStream,
    n: usize,
    b: usize,
) -> IndexMultiset {
    assert!(n >= 1 && b >= 1, "minibatch needs n >= 1 and b >= 1");
    let b = b.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for k in 0..b {
        let j = k + rng.index(n - k);
        pool.swap(k, j);
    }
    pool.truncate(b);
    pool
}

/// Draws `b` fresh sample identities for online problems.
pub fn sample_online(rng: &mut RngStream, b: usize) -> IndexMultiset {
    (0..b).map(|_| rng.next_u64() as usize).collect()
}
