//! Deterministic, splittable RNG streams.
//!
//! Every source of randomness in a run is drawn from its own named stream,
//! derived from the run seed by mixing a domain tag and up to two counters
//! through a SplitMix64-style avalanche. Consumers never share a stream, so
//! changing how one consumer draws can never shift another's sequence.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream domains. Each domain owns an independent family of streams,
/// indexed by up to two counters (client id, round, class, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Synthetic training-set generation (counter a = class).
    TrainData = 1,
    /// Synthetic test-set generation (counter a = class).
    TestData = 2,
    /// Dirichlet partition proportions (counter a = class).
    Partition = 3,
    /// Model weight initialization (counter a = layer).
    Init = 4,
    /// Mini-batch shuffling (a = client or epoch, b = round or 0).
    Shuffle = 5,
    /// Per-update delivery delays (a = client).
    Delay = 6,
    /// Per-client compute speed factors.
    Speed = 7,
}

/// One SplitMix64 scramble step.
fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a root seed with a domain tag and two counters into a child seed.
pub fn mix(root: u64, domain: Domain, a: u64, b: u64) -> u64 {
    let mut state = root;
    let mut out = splitmix(&mut state);
    for v in [domain as u64, a, b] {
        state ^= v.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        out ^= splitmix(&mut state);
    }
    out
}

/// The stream for `(root, domain, a, b)`.
pub fn stream(root: u64, domain: Domain, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(root, domain, a, b))
}

/// Uniform draw in `[0, 1)` with 53-bit resolution.
pub fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `(0, 1]`; safe as a logarithm argument.
pub fn uniform01_open(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform_in(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform01(rng)
}

/// Standard normal draw via Box-Muller. Consumes exactly two uniforms and
/// keeps only the cosine branch, so the stream position is call-invariant.
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = uniform01_open(rng);
    let u2 = uniform01(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform index in `[0, n)` via the widening-multiply map.
pub fn uniform_index(rng: &mut impl RngCore, n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic() {
        let mut a = stream(42, Domain::Delay, 3, 0);
        let mut b = stream(42, Domain::Delay, 3, 0);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ_by_domain_and_counter() {
        let a = stream(42, Domain::Delay, 3, 0).next_u64();
        let b = stream(42, Domain::Shuffle, 3, 0).next_u64();
        let c = stream(42, Domain::Delay, 4, 0).next_u64();
        let d = stream(42, Domain::Delay, 3, 1).next_u64();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn uniform01_stays_in_range() {
        let mut rng = stream(7, Domain::Speed, 0, 0);
        for _ in 0..10_000 {
            let u = uniform01(&mut rng);
            assert!((0.0..1.0).contains(&u));
            let v = uniform01_open(&mut rng);
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = stream(11, Domain::Delay, 0, 0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let z = standard_normal(&mut rng);
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = stream(3, Domain::Shuffle, 1, 2);
        let mut items: Vec<usize> = (0..50).collect();
        shuffle(&mut rng, &mut items);
        let mut sorted = items.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(items, (0..50).collect::<Vec<_>>());
    }
}
