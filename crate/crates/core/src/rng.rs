//! Seeded, splittable random streams.
//!
//! Each stream is a ChaCha8 keystream addressed by `(seed, stream id)`; the
//! stream id of a child is a hash of its parent's id and a label, so every
//! logical consumer draws from its own sequence regardless of the order in
//! which other consumers run.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

/// Stream labels for the independent draws that make up one batch.
pub mod label {
    pub const INIT_PLUS: u64 = 0x11;
    pub const INIT_MINUS: u64 = 0x12;
    pub const NOISE_PLUS: u64 = 0x21;
    pub const NOISE_MINUS: u64 = 0x22;
    pub const TIMES: u64 = 0x31;
    pub const TEST_INIT: u64 = 0x41;
    pub const NETWORK_INIT: u64 = 0x51;
    pub const HELD_OUT: u64 = 0x61;
    pub const ADVERSARY: u64 = 0x71;
    pub const GENERATOR: u64 = 0x72;
    pub const EVALUATION: u64 = 0x81;
    pub const TERMINAL: u64 = 0x91;
    pub const INITIAL: u64 = 0x92;
    pub const BULK: u64 = 0x93;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        Self::at(seed, 0)
    }

    fn at(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Independent child stream; depends only on this stream's identity and
    /// `label`, never on how many values have been drawn from it.
    pub fn split(&self, label: u64) -> Self {
        let id = splitmix64(self.stream ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d)));
        Self::at(self.seed, id)
    }

    /// Child stream addressed by a path of labels.
    pub fn derive(&self, path: &[u64]) -> Self {
        path.iter().fold(self.clone(), |rng, &l| rng.split(l))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform<T: Real>(&mut self) -> T {
        T::lit(self.inner.random::<f64>())
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn uniform_in<T: Real>(&mut self, lo: T, hi: T) -> T {
        lo + (hi - lo) * self.uniform::<T>()
    }

    pub fn normal<T: Real>(&mut self) -> T {
        T::lit(self.inner.sample::<f64, _>(StandardNormal))
    }

    pub fn normals<T: Real>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| self.normal()).collect()
    }
}

impl RngCore for StreamRng {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = StreamRng::new(42).derive(&[1, 2, 3]);
        let mut b = StreamRng::new(42).derive(&[1, 2, 3]);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn split_is_independent_of_parent_consumption() {
        let root = StreamRng::new(7);
        let mut used = root.clone();
        for _ in 0..17 {
            used.next_u64();
        }
        let mut a = root.split(label::INIT_PLUS);
        let mut b = used.split(label::INIT_PLUS);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn sibling_streams_differ() {
        let root = StreamRng::new(7);
        let ids: Vec<u64> = [
            label::INIT_PLUS,
            label::INIT_MINUS,
            label::NOISE_PLUS,
            label::NOISE_MINUS,
            label::TIMES,
        ]
        .iter()
        .map(|&l| root.split(l).stream_id())
        .collect();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                assert_ne!(ids[i], ids[j]);
            }
        }
        let mut a = root.split(label::INIT_PLUS);
        let mut b = root.split(label::INIT_MINUS);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn uniform_range() {
        let mut r = StreamRng::new(1);
        for _ in 0..1000 {
            let u: f64 = r.uniform_in(-2.0, 3.0);
            assert!((-2.0..3.0).contains(&u));
        }
    }
}
