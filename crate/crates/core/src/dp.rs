//! Norm clipping and the Gaussian mechanism, with the noise split across the
//! `t` participants assumed honest.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DELTA: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    epsilon: f64,
    delta: f64,
    clip_norm: f64,
    min_honest: u32,
    sigma: f64,
}

impl DpParams {
    pub fn new(epsilon: f64, delta: f64, clip_norm: f64, min_honest: u32) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(clip_norm > 0.0 && clip_norm.is_finite()) {
            return Err(Error::Config(format!("clip norm must be positive, got {clip_norm}")));
        }
        if min_honest == 0 {
            return Err(Error::Config("min_honest must be at least 1".into()));
        }
        let sigma = clip_norm * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon;
        Ok(Self { epsilon, delta, clip_norm, min_honest, sigma })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn clip_norm(&self) -> f64 {
        self.clip_norm
    }

    pub fn min_honest(&self) -> u32 {
        self.min_honest
    }

    /// Standard deviation required for local DP, clip norm included.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Per-participant standard deviation, `sigma / sqrt(t)`.
    pub fn participant_std(&self) -> f64 {
        self.sigma / (self.min_honest as f64).sqrt()
    }

    /// The same parameters with `t = 1`, i.e. full local-DP noise.
    pub fn local(&self) -> Self {
        Self { min_honest: 1, ..*self }
    }

    /// Privacy spent after `epochs` rounds under naive linear composition.
    pub fn composed(&self, epochs: u32) -> (f64, f64) {
        (self.epsilon * epochs as f64, self.delta * epochs as f64)
    }
}

pub fn clip_update(update: &[f64], clip_norm: f64) -> Vec<f64> {
    let norm = update.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= clip_norm || norm == 0.0 {
        return update.to_vec();
    }
    let scale = clip_norm / norm;
    update.iter().map(|v| v * scale).collect()
}

pub fn reduced_noise_sample<R: Rng + ?Sized>(dim: usize, params: &DpParams, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, params.participant_std()).expect("std is finite and non-negative");
    (0..dim).map(|_| normal.sample(rng)).collect()
}

/// Clips `update` and adds this participant's share of the noise.
pub fn privatize<R: Rng + ?Sized>(update: &[f64], params: &DpParams, rng: &mut R) -> Vec<f64> {
    let mut out = clip_update(update, params.clip_norm);
    for (v, n) in out.iter_mut().zip(reduced_noise_sample(update.len(), params, rng)) {
        *v += n;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn variance(xs: &[f64]) -> f64 {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    }

    #[test]
    fn clip_examples() {
        let c = clip_update(&[3.0, 4.0], 4.0);
        assert!((c[0] - 2.4).abs() < 1e-12 && (c[1] - 3.2).abs() < 1e-12);
        assert_eq!(clip_update(&[1.0, 0.0], 4.0), vec![1.0, 0.0]);
        assert_eq!(clip_update(&[0.0, 0.0], 0.5), vec![0.0, 0.0]);
    }

    #[test]
    fn sigma_closed_form() {
        let p = DpParams::new(0.5, 1e-5, 4.0, 5).unwrap();
        let expect = 4.0 * (2.0 * (1.25e5f64).ln()).sqrt() / 0.5;
        assert!((p.sigma() - expect).abs() < 1e-12);
        assert!((p.participant_std() - expect / 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(p.local().participant_std(), p.sigma());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(DpParams::new(0.0, 1e-5, 1.0, 1).is_err());
        assert!(DpParams::new(1.0, 1.0, 1.0, 1).is_err());
        assert!(DpParams::new(1.0, 1e-5, 0.0, 1).is_err());
        assert!(DpParams::new(1.0, 1e-5, 1.0, 0).is_err());
    }

    #[test]
    fn reduced_variance_matches_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = DpParams::new(1.0, 1e-5, 1.0, 4).unwrap();
        let xs = reduced_noise_sample(100_000, &p, &mut rng);
        let v = variance(&xs);
        let target = p.sigma().powi(2) / 4.0;
        assert!((v / target - 1.0).abs() < 0.05, "{v} vs {target}");

        let full = reduced_noise_sample(100_000, &p.local(), &mut rng);
        assert!((variance(&full) / p.sigma().powi(2) - 1.0).abs() < 0.05);
    }

    #[test]
    fn summed_shares_carry_one_local_dose() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = DpParams::new(0.5, 1e-5, 4.0, 5).unwrap();
        let mut sum = vec![0.0; 100_000];
        for _ in 0..5 {
            for (s, n) in sum.iter_mut().zip(reduced_noise_sample(100_000, &p, &mut rng)) {
                *s += n;
            }
        }
        assert!((variance(&sum) / p.sigma().powi(2) - 1.0).abs() < 0.05);
    }

    #[test]
    fn privatize_is_seeded_and_clips() {
        let p = DpParams::new(1e12, 1e-5, 4.0, 1).unwrap();
        let out = privatize(&[0.0; 4], &p, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(out.iter().all(|v| v.abs() < 1e-9));

        let big = [6.0, 8.0];
        let out = privatize(&big, &p, &mut ChaCha8Rng::seed_from_u64(1));
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 4.0).abs() < 1e-6);

        let q = DpParams::new(0.5, 1e-5, 4.0, 5).unwrap();
        let a = privatize(&big, &q, &mut ChaCha8Rng::seed_from_u64(8));
        let b = privatize(&big, &q, &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn clipped_norm_is_bounded(xs in prop::collection::vec(-1e6f64..1e6, 0..64), clip in 1e-3f64..100.0) {
            let c = clip_update(&xs, clip);
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm <= clip + 1e-9);
        }
    }
}
