//! Reproducible random streams and the chunked Monte-Carlo driver.
//!
//! A stream is identified by `(seed, stream_id)`. Child streams are derived
//! by hashing, never by drawing from the parent, so the assignment of streams
//! to sample chunks is a pure function of the chunk index. Chunks are reduced
//! in a fixed pairwise order, which makes every estimate bit-identical
//! regardless of the number of worker threads.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;

/// Number of samples evaluated per chunk (and per derived stream).
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent child stream; depends only on `(seed, stream_id, child)`.
    pub fn derive(&self, child: u64) -> RngStream {
        let id = splitmix(self.stream_id ^ splitmix(child.wrapping_add(0x51ed_270b)));
        RngStream::new(self.seed, id)
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Index drawn from a cumulative weight table whose last entry is the total.
    pub fn categorical(&mut self, cumulative: &[f64]) -> usize {
        let total = *cumulative.last().expect("nonempty weight table");
        let u = self.uniform() * total;
        cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Running count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(a: Moments, b: Moments) -> Moments {
        if a.n == 0 {
            return b;
        }
        if b.n == 0 {
            return a;
        }
        let n = a.n + b.n;
        let delta = b.mean - a.mean;
        let (na, nb, nf) = (a.n as f64, b.n as f64, n as f64);
        Moments {
            n,
            mean: a.mean + delta * nb / nf,
            m2: a.m2 + b.m2 + delta * delta * na * nb / nf,
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Reduces a sequence in a fixed balanced-tree order.
pub fn pairwise_reduce<T: Clone>(items: Vec<T>, identity: T, f: impl Fn(T, T) -> T + Copy) -> T {
    fn go<T: Clone>(items: &[T], identity: &T, f: impl Fn(T, T) -> T + Copy) -> T {
        match items.len() {
            0 => identity.clone(),
            1 => items[0].clone(),
            n => {
                let (l, r) = items.split_at(n / 2);
                f(go(l, identity, f), go(r, identity, f))
            }
        }
    }
    go(&items, &identity, f)
}

/// Runs `f(chunk_stream, chunk_len)` on consecutive chunks of `n` samples.
///
/// Chunk `c` always receives `rng.derive(c)`; results come back in chunk order.
pub fn run_chunks<T, F>(n: usize, rng: &RngStream, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut RngStream, usize) -> Result<T> + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(n - c * CHUNK);
            let mut stream = rng.derive(c as u64);
            f(&mut stream, len)
        })
        .collect()
}

/// Moments of `n` scalar draws of `sample`.
pub fn mc_moments<F>(n: usize, rng: &RngStream, sample: F) -> Result<Moments>
where
    F: Fn(&mut RngStream) -> Result<f64> + Sync,
{
    let chunks = run_chunks(n, rng, |stream, len| {
        let mut m = Moments::default();
        for _ in 0..len {
            m.push(sample(stream)?);
        }
        Ok(m)
    })?;
    Ok(pairwise_reduce(chunks, Moments::default(), Moments::merge))
}
