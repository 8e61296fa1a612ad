use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One step of the splitmix64 generator, used to derive independent seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed derived from a root seed and a path of indices.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &k| splitmix64(acc ^ splitmix64(k.wrapping_add(1))))
}

pub fn rng_for(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}

/// Effective sample size of normalized weights.
pub fn ess(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().map(|w| w * w).sum();
    if s == 0.0 {
        0.0
    } else {
        1.0 / s
    }
}

/// Scales weights to sum to one.
pub fn normalize(weights: &mut [f64]) -> Result<()> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::AllParticlesDead);
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResampleScheme {
    #[default]
    Multinomial,
    Systematic,
}

/// Index of the first cumulative weight exceeding `u`, skipping zero weights.
fn pick(cumulative: &[f64], u: f64) -> usize {
    let i = cumulative.partition_point(|&c| c <= u);
    i.min(cumulative.len() - 1)
}

/// Draws `weights.len()` ancestor indices in proportion to `weights`.
pub fn resample<R: Rng>(weights: &[f64], scheme: ResampleScheme, rng: &mut R) -> Result<Vec<usize>> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    if n == 0 || !(total > 0.0) {
        return Err(Error::AllParticlesDead);
    }
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in weights {
        acc += w / total;
        cumulative.push(acc);
    }
    // Guard the last positive entry against rounding below 1.
    if let Some(last) = (0..n).rev().find(|&i| weights[i] > 0.0) {
        for c in &mut cumulative[last..] {
            *c = f64::INFINITY;
        }
    }
    Ok(match scheme {
        ResampleScheme::Multinomial => (0..n).map(|_| pick(&cumulative, rng.gen::<f64>())).collect(),
        ResampleScheme::Systematic => {
            let u0: f64 = rng.gen::<f64>() / n as f64;
            (0..n)
                .map(|k| pick(&cumulative, u0 + k as f64 / n as f64))
                .collect()
        }
    })
}

/// Draws an index from unnormalized non-negative weights.
pub fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(i);
        if u < acc {
            return Some(i);
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ess_examples() {
        assert!((ess(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert!((ess(&[0.0, 1.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((ess(&[0.5, 0.25, 0.25]) - 1.0 / 0.375).abs() < 1e-12);
    }

    #[test]
    fn one_hot_resample_copies_survivor() {
        let mut rng = rng_for(3, &[]);
        for scheme in [ResampleScheme::Multinomial, ResampleScheme::Systematic] {
            let idx = resample(&[0.0, 0.0, 1.0, 0.0], scheme, &mut rng).unwrap();
            assert_eq!(idx, vec![2; 4]);
        }
    }

    #[test]
    fn all_zero_weights_is_an_error() {
        let mut rng = rng_for(0, &[]);
        assert!(matches!(
            resample(&[0.0, 0.0], ResampleScheme::Multinomial, &mut rng),
            Err(Error::AllParticlesDead)
        ));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(9, &[4, 2]), derive_seed(9, &[4, 2]));
    }

    #[test]
    fn sample_index_skips_zero_weights() {
        let mut rng = rng_for(5, &[]);
        for _ in 0..1000 {
            assert_eq!(sample_index(&[0.0, 2.0, 0.0], &mut rng), Some(1));
        }
        assert_eq!(sample_index(&[0.0, 0.0], &mut rng), None);
    }
}
