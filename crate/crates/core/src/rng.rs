//! Counter-based pseudo-randomness for reproducible traces.
//!
//! Every random draw in the simulator is a pure function of
//! `(master_seed, trial, slot, channel)`, so traces can be regenerated,
//! extended to a longer horizon, or consumed by two engines without any
//! shared mutable RNG state. The mixer is the splitmix64 finalizer, which
//! is stable across platforms and Rust versions (unlike `DefaultHasher`).

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash of an identifier string, used as a stable per-channel key.
pub fn stable_key(id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A uniform variate in `[0, 1)` keyed on `(master_seed, trial, slot, channel)`.
#[inline]
pub fn unit_uniform(master_seed: u64, trial: u64, slot: u64, channel: u64) -> f64 {
    let mut h = mix(master_seed ^ GOLDEN_GAMMA);
    h = mix(h ^ trial.wrapping_mul(GOLDEN_GAMMA));
    h = mix(h ^ slot.wrapping_mul(0xc2b2_ae3d_27d4_eb4f));
    h = mix(h ^ channel);
    // Top 53 bits -> [0, 1) with full double precision.
    (h >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// A small deterministic sequential generator for test fixtures
/// (random topologies, perturbation positions). Not used for traces.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform integer in `[0, bound)`.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        // Desk-scale bounds; modulo bias is irrelevant here.
        self.next_u64() % bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_deterministic() {
        let a = unit_uniform(42, 7, 1000, stable_key("L1"));
        let b = unit_uniform(42, 7, 1000, stable_key("L1"));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn uniform_in_unit_interval() {
        for slot in 0..10_000 {
            let u = unit_uniform(1, 2, slot, 3);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn channels_decorrelate() {
        // Same (seed, trial, slot) but different channels must differ.
        let k1 = stable_key("L1");
        let k2 = stable_key("L2");
        assert_ne!(k1, k2);
        let mut equal = 0;
        for slot in 0..1000 {
            if unit_uniform(9, 0, slot, k1) == unit_uniform(9, 0, slot, k2) {
                equal += 1;
            }
        }
        assert_eq!(equal, 0);
    }

    #[test]
    fn mean_is_roughly_half() {
        let mut acc = 0.0;
        let trials = 100_000;
        for i in 0..trials {
            acc += unit_uniform(5, 11, i, 17);
        }
        let mean = acc / trials as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }
}
