//! Deterministic seeded randomness with named streams.
//!
//! Every random decision in the pipeline flows from a single 64-bit run seed.
//! Each purpose (mask sampling, weight init, k-means, center generation, ...)
//! derives its own independent stream by hashing the stream name into the
//! seed, so changing the consumption pattern of one stage does not perturb
//! the others. The generator is a SplitMix64 chain: portable, allocation-free
//! and bit-stable across platforms.

/// SplitMix64 step.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over a byte string, used to fold stream names into the seed.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// A deterministic random stream derived from (run seed, stream name).
#[derive(Debug, Clone)]
pub struct StreamRng {
    state: u64,
    spare_normal: Option<f64>,
}

impl StreamRng {
    /// Stream for a named purpose under a run seed.
    pub fn new(seed: u64, stream: &str) -> StreamRng {
        let mut state = seed ^ fnv1a(stream.as_bytes());
        // Warm up so that nearby seeds decorrelate.
        for _ in 0..4 {
            splitmix64(&mut state);
        }
        StreamRng {
            state,
            spare_normal: None,
        }
    }

    /// Sub-stream keyed by integers (epoch, video index, view, ...), so
    /// consumers can draw independently of ordering.
    pub fn substream(&self, keys: &[u64]) -> StreamRng {
        let mut state = self.state;
        for &k in keys {
            state ^= k.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
            splitmix64(&mut state);
        }
        StreamRng {
            state,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). n must be > 0.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Modulo bias is negligible for the small n used here, but reject
        // anyway to keep draws exactly uniform.
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal via Box-Muller, caching the spare deviate.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u1 = self.next_f64();
            if u1 <= f64::MIN_POSITIVE {
                continue;
            }
            let u2 = self.next_f64();
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            self.spare_normal = Some(r * theta.sin());
            return r * theta.cos();
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices sampled uniformly from [0, n), in random order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        self.shuffle(&mut pool);
        pool.truncate(k);
        pool
    }
}
