//! Seeded Brownian increments with random access.
//!
//! Every base increment `ΔW_i ~ N(0, base_dt)` is a pure function of
//! `(seed, stream, i)`: it is produced by a ChaCha8 keystream positioned at a
//! word offset derived from `i`. Coarse increments are the in-order sum of the
//! base increments they cover, so runs at `base_dt · 2^k` and at `base_dt`
//! see the same Brownian path.
//!
//! Steps finer than `base_dt` (adaptive steps near blow-up) are served by a
//! dyadic Brownian bridge inside each base interval. Bridge midpoints are
//! keyed by `(i, level, node)`, so the refined path is also reproducible.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Maximum bridge depth below one base interval.
pub const MAX_LEVEL: u32 = 40;

/// Words of keystream reserved per standard normal draw (two `u64`).
const WORDS_PER_DRAW: u128 = 4;

/// Offset between stream ids; the low byte selects the bridge level.
const LEVEL_BITS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSource {
    seed: u64,
    base_dt: f64,
    stream: u64,
}

impl NoiseSource {
    pub fn new(seed: u64, base_dt: f64) -> Self {
        assert!(
            base_dt.is_finite() && base_dt > 0.0,
            "base_dt must be positive and finite"
        );
        Self {
            seed,
            base_dt,
            stream: 0,
        }
    }

    /// Same seed, statistically independent path (used for random initial
    /// segments that must not share noise with the driving Brownian motion).
    pub fn independent(&self, stream: u64) -> Self {
        assert!(stream < (1 << (64 - LEVEL_BITS)), "stream id out of range");
        Self { stream, ..*self }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn base_dt(&self) -> f64 {
        self.base_dt
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Base increment `ΔW_index` over `[index·base_dt, (index+1)·base_dt)`.
    pub fn increment(&self, index: u64) -> f64 {
        self.cursor().increment(index)
    }

    /// Sum of `factor` consecutive base increments starting at `start`.
    pub fn coarse_increment(&self, start: u64, factor: u64) -> f64 {
        self.cursor().coarse_increment(start, factor)
    }

    /// A stateful reader that avoids repositioning the keystream when
    /// increments are consumed in order.
    pub fn cursor(&self) -> NoiseCursor {
        NoiseCursor::new(*self)
    }

    fn stream_id(&self, level: u32) -> u64 {
        (self.stream << LEVEL_BITS) | level as u64
    }
}

/// Sequential reader over a [`NoiseSource`].
pub struct NoiseCursor {
    source: NoiseSource,
    sqrt_base_dt: f64,
    base: ChaCha8Rng,
    next_index: u64,
    bridge: ChaCha8Rng,
}

impl NoiseCursor {
    fn new(source: NoiseSource) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(source.seed);
        base.set_stream(source.stream_id(0));
        base.set_word_pos(0);
        let bridge = ChaCha8Rng::seed_from_u64(source.seed);
        Self {
            source,
            sqrt_base_dt: source.base_dt.sqrt(),
            base,
            next_index: 0,
            bridge,
        }
    }

    pub fn source(&self) -> &NoiseSource {
        &self.source
    }

    pub fn increment(&mut self, index: u64) -> f64 {
        if index != self.next_index {
            self.base.set_word_pos(index as u128 * WORDS_PER_DRAW);
        }
        self.next_index = index + 1;
        self.sqrt_base_dt * standard_normal(&mut self.base)
    }

    pub fn coarse_increment(&mut self, start: u64, factor: u64) -> f64 {
        let mut sum = 0.0;
        for i in start..start + factor {
            sum += self.increment(i);
        }
        sum
    }

    /// Increment over the `node`-th of `2^level` equal sub-intervals of base
    /// interval `index`, drawn from the Brownian bridge pinned at
    /// `0` and `ΔW_index`.
    pub fn bridge_increment(&mut self, index: u64, level: u32, node: u64) -> f64 {
        assert!(level <= MAX_LEVEL, "bridge level {level} exceeds {MAX_LEVEL}");
        if level == 0 {
            return self.increment(index);
        }
        let total = self.increment(index);
        let right = self.bridge_value(index, level, node + 1, total);
        let left = self.bridge_value(index, level, node, total);
        right - left
    }

    /// W at `k / 2^level` of base interval `index`, relative to its start.
    fn bridge_value(&mut self, index: u64, level: u32, k: u64, total: f64) -> f64 {
        let full = 1u64 << level;
        debug_assert!(k <= full);
        if k == 0 {
            return 0.0;
        }
        if k == full {
            return total;
        }
        let (mut lo, mut hi) = (0u64, full);
        let (mut w_lo, mut w_hi) = (0.0, total);
        for l in 1..=level {
            let mid = (lo + hi) / 2;
            let width = (hi - lo) as f64 / full as f64 * self.source.base_dt;
            // index of `mid` among the odd nodes of level `l`
            let node = (mid >> (level - l)) >> 1;
            let z = self.bridge_normal(index, l, node);
            let w_mid = 0.5 * (w_lo + w_hi) + 0.5 * width.sqrt() * z;
            if k == mid {
                return w_mid;
            }
            if k < mid {
                hi = mid;
                w_hi = w_mid;
            } else {
                lo = mid;
                w_lo = w_mid;
            }
        }
        unreachable!("dyadic descent always lands on k")
    }

    fn bridge_normal(&mut self, index: u64, level: u32, node: u64) -> f64 {
        self.bridge.set_stream(self.source.stream_id(level));
        let slot = ((index as u128) << (level - 1)) | node as u128;
        self.bridge.set_word_pos(slot * WORDS_PER_DRAW);
        standard_normal(&mut self.bridge)
    }
}

/// Box–Muller draw consuming exactly two `u64` words.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = open_unit(rng.next_u64());
    let u2 = open_unit(rng.next_u64());
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Maps 53 random bits into the open interval (0, 1).
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_is_bitwise_identical() {
        let a = NoiseSource::new(17, 1e-3);
        let b = NoiseSource::new(17, 1e-3);
        let mut ca = a.cursor();
        for i in 0..1000 {
            assert_eq!(ca.increment(i).to_bits(), b.increment(i).to_bits());
        }
    }

    #[test]
    fn random_access_matches_sequential() {
        let src = NoiseSource::new(3, 0.5);
        let mut cur = src.cursor();
        let seq: Vec<f64> = (0..64).map(|i| cur.increment(i)).collect();
        for i in (0..64).rev() {
            assert_eq!(seq[i as usize].to_bits(), src.increment(i).to_bits());
        }
    }

    #[test]
    fn different_seeds_and_streams_differ() {
        let a = NoiseSource::new(1, 1.0);
        let b = NoiseSource::new(2, 1.0);
        let c = a.independent(1);
        assert_ne!(a.increment(0), b.increment(0));
        assert_ne!(a.increment(0), c.increment(0));
    }

    #[test]
    fn coarse_is_in_order_sum() {
        let src = NoiseSource::new(9, 1e-4);
        let mut sum = 0.0;
        for i in 8..16 {
            sum += src.increment(i);
        }
        assert_eq!(sum.to_bits(), src.coarse_increment(8, 8).to_bits());
    }

    #[test]
    fn bridge_pieces_sum_to_base_increment() {
        let src = NoiseSource::new(5, 1e-2);
        let mut cur = src.cursor();
        for level in 1..6 {
            let total: f64 = (0..(1u64 << level))
                .map(|node| cur.bridge_increment(4, level, node))
                .sum();
            assert!((total - src.increment(4)).abs() < 1e-14);
        }
    }

    #[test]
    fn bridge_is_consistent_across_levels() {
        // two level-3 halves must add to the level-2 piece they split
        let src = NoiseSource::new(11, 1.0);
        let mut cur = src.cursor();
        for node in 0..4 {
            let coarse = cur.bridge_increment(0, 2, node);
            let fine = cur.bridge_increment(0, 3, 2 * node) + cur.bridge_increment(0, 3, 2 * node + 1);
            assert!((coarse - fine).abs() < 1e-14);
        }
    }

    #[test]
    fn increments_have_base_variance() {
        let dt = 0.25;
        let src = NoiseSource::new(123, dt);
        let n = 200_000u64;
        let mut cur = src.cursor();
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let w = cur.increment(i);
            s1 += w;
            s2 += w * w;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 5.0 * (dt / n as f64).sqrt());
        assert!((var / dt - 1.0).abs() < 0.02);
    }

    #[test]
    fn bridge_sub_increments_have_scaled_variance() {
        let dt = 1.0;
        let src = NoiseSource::new(77, dt);
        let mut cur = src.cursor();
        let level = 4;
        let n = 20_000u64;
        let mut s2 = 0.0;
        for i in 0..n {
            let w = cur.bridge_increment(i, level, i % 16);
            s2 += w * w;
        }
        let var = s2 / n as f64;
        assert!((var / (dt / 16.0) - 1.0).abs() < 0.05, "var {var}");
    }
}
