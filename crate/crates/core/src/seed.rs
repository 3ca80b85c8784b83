//! Seed derivation and seeded sampling helpers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Mixes a master seed with a stream index (splitmix64 finalizer), so each
/// unit of parallel work gets an independent, order-free stream.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Zero-mean Gaussian truncated to `[-bound, bound]` by rejection.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, sigma: f64, bound: f64) -> f64 {
    if sigma <= 0.0 || bound <= 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked positive");
    loop {
        let v = normal.sample(rng);
        if v.abs() <= bound {
            return v;
        }
    }
}

/// Stable 64-bit FNV-1a hash of a string.
pub fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn truncated_normal_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<f64> = (0..10_000).map(|_| truncated_normal(&mut rng, 1.5, 3.0)).collect();
        assert!(draws.iter().all(|d| d.abs() <= 3.0));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.05);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(""), 0xcbf29ce484222325);
        assert_eq!(fnv1a("a"), 0xaf63dc4c8601ec8c);
    }
}
