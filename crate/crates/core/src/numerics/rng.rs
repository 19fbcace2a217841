//! SplitMix64 generator: the determinism carrier for every sampling site.
//!
//! A single u64 of state, the well-known mixing constants, and floats built
//! from the top 53 bits make the stream trivially portable across platforms.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Finalizer from SplitMix64; also used standalone to derive substreams.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded SplitMix64 stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
}

/// Construct a stream from a seed. Identical seeds give identical sequences.
pub fn seeded_rng(seed: u64) -> RngStream {
    RngStream { state: seed }
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        seeded_rng(seed)
    }

    /// Substream keyed by `tags`, independent of draws taken from `self`.
    ///
    /// Used to give each (step, batch slot) its own stream so per-item work
    /// can be reordered or parallelized without changing any draw.
    pub fn derived(seed: u64, tags: &[u64]) -> Self {
        let mut state = mix64(seed ^ GOLDEN_GAMMA);
        for &t in tags {
            state = mix64(state ^ t.wrapping_mul(GOLDEN_GAMMA));
        }
        RngStream { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform float in [0, 1) from the top 53 bits.
    pub fn next_unit_float(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform float in [lo, hi).
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_unit_float() * (hi - lo)
    }

    /// Uniform integer in [0, n). `n` must be nonzero.
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard Gaussian via Box-Muller; two uniforms consumed per call.
    pub fn next_gaussian(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_unit_float();
        let u2 = self.next_unit_float();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// `k` distinct indices drawn uniformly without replacement from 0..n,
    /// in partial Fisher-Yates order.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.next_below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
