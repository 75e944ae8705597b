//! Seeded, named random streams with a pinned bit-exact algorithm.
//!
//! Every random tensor in the library is drawn from a [`SeedRng`]. The
//! algorithm is fixed and documented so that identical `(seed, name, shape)`
//! triples produce bit-identical tensors across runs, processes, and
//! platforms:
//!
//! 1. A per-tensor stream seed is derived by hashing the master seed's
//!    little-endian bytes followed by the stream name's UTF-8 bytes with
//!    FNV-1a (64 bit).
//! 2. The stream seed keys a ChaCha8 generator via `seed_from_u64`.
//! 3. Each element takes one `u64` draw, mapped to `[0, 1)` by keeping the
//!    top 53 bits: `(x >> 11) as f64 * 2^-53`.
//! 4. The unit draw is scaled to `[lo, hi)` in f64; `f32` tensors cast the
//!    final f64 value (so an f32 tensor is always the rounded image of the
//!    f64 tensor drawn from the same stream).
//!
//! Elements fill the tensor in row-major order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash = FNV_OFFSET;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Master seed from which named, independent random streams are derived.
#[derive(Debug, Clone, Copy)]
pub struct SeedRng {
    seed: u64,
}

impl SeedRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn stream(&self, name: &str) -> ChaCha8Rng {
        let stream_seed = fnv1a64(
            self.seed
                .to_le_bytes()
                .into_iter()
                .chain(name.bytes()),
        );
        ChaCha8Rng::seed_from_u64(stream_seed)
    }

    /// One uniform draw in `[0, 1)` from the top 53 bits of a `u64`.
    fn unit(rng: &mut ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Tensor of uniform draws in `[lo, hi)` from the stream `name`.
    pub fn uniform<T: Scalar>(&self, name: &str, shape: &[usize], lo: f64, hi: f64) -> Result<Tensor<T>> {
        let mut rng = self.stream(name);
        let mut make = |_: &[usize]| T::from_f64(lo + Self::unit(&mut rng) * (hi - lo));
        Tensor::from_fn(shape, &mut make)
    }

    /// Zero-mean uniform weight matrix `[fan_in, fan_out]` with range
    /// `± 1 / sqrt(fan_in)`, the initialization used for every projection
    /// and gate matrix in the library.
    pub fn scaled_uniform<T: Scalar>(&self, name: &str, fan_in: usize, fan_out: usize) -> Result<Tensor<T>> {
        let s = 1.0 / (fan_in as f64).sqrt();
        self.uniform(name, &[fan_in, fan_out], -s, s)
    }
}
