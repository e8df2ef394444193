//! Named, reproducible random streams.
//!
//! Every simulated entity draws from its own stream, identified by a
//! `(master_seed, stream_id)` pair. The pair is folded into a 64-bit key with
//! FNV-1a over the label followed by a SplitMix64 finalizer, and that key seeds
//! a xoshiro256** generator. Child streams extend the label with `/`, so
//! `root.child("device/3")` is the same stream as `RngStream::new(seed,
//! "root/device/3")`.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

/// SplitMix64 finalizer.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A deterministic random stream scoped to one entity.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: String,
    inner: Xoshiro256StarStar,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: impl Into<String>) -> Self {
        let stream_id = stream_id.into();
        let key = splitmix64(master_seed ^ splitmix64(fnv1a(stream_id.as_bytes())));
        Self {
            master_seed,
            inner: Xoshiro256StarStar::seed_from_u64(key),
            stream_id,
        }
    }

    /// Independent sub-stream. Does not consume from `self`.
    pub fn child(&self, label: impl AsRef<str>) -> Self {
        Self::new(
            self.master_seed,
            format!("{}/{}", self.stream_id, label.as_ref()),
        )
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Gaussian draw with the given mean and standard deviation.
    pub fn gaussian(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.normal()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        self.inner.random_range(0..n)
    }

    pub fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest);
    }

    pub fn bytes<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        self.inner.fill_bytes(&mut out);
        out
    }
}
