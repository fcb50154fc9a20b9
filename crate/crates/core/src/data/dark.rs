//! Synthetic low-light degradation and its analytic inverse.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};
use crate::tensor::Tensor;

/// Gamma/gain darkening with additive gaussian sensor noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DarkModel {
    pub gamma: f64,
    pub gain: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DarkModel {
    fn default() -> Self {
        Self {
            gamma: 3.0,
            gain: 0.35,
            noise_sigma: 0.02,
            seed: 0,
        }
    }
}

impl DarkModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return Err(Error::config("dark_model.gamma", format!("must be > 1, got {}", self.gamma)));
        }
        if !(self.gain > 0.0 && self.gain <= 1.0) {
            return Err(Error::config("dark_model.gain", format!("must be in (0, 1], got {}", self.gain)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::config(
                "dark_model.noise_sigma",
                format!("must be >= 0, got {}", self.noise_sigma),
            ));
        }
        Ok(())
    }

    pub fn noiseless(self) -> Self {
        Self {
            noise_sigma: 0.0,
            ..self
        }
    }

    /// `clamp(gain * x^gamma + N(0, sigma), 0, 1)` with noise drawn from the
    /// stream `(seed, stream)`.
    pub fn darken(&self, image: &Tensor, stream: u64) -> Tensor {
        let mut rng = stream_rng(self.seed, Domain::DarkNoise, stream);
        self.darken_with(image, &mut rng)
    }

    pub fn darken_with<R: Rng>(&self, image: &Tensor, rng: &mut R) -> Tensor {
        let noise = (self.noise_sigma > 0.0).then(|| Normal::new(0.0, self.noise_sigma).expect("sigma >= 0"));
        image.map(|x| {
            let mut y = self.gain * x.max(0.0).powf(self.gamma);
            if let Some(n) = &noise {
                y += n.sample(rng);
            }
            y.clamp(0.0, 1.0)
        })
    }

    /// Oracle enhancer: `clamp((x / gain)^(1 / gamma), 0, 1)`.
    pub fn enhance(&self, image: &Tensor) -> Tensor {
        let inv = 1.0 / self.gamma;
        image.map(|x| (x.max(0.0) / self.gain).powf(inv).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[3, 16, 16], |_| rng.random::<f64>())
    }

    #[test]
    fn black_is_a_fixed_point() {
        let m = DarkModel::default().noiseless();
        let black = Tensor::zeros(&[3, 4, 4]);
        assert_eq!(m.darken(&black, 0), black);
    }

    #[test]
    fn white_maps_to_gain() {
        let m = DarkModel::default().noiseless();
        let out = m.darken(&Tensor::full(&[3, 4, 4], 1.0), 0);
        assert!(out.data().iter().all(|&v| (v - 0.35).abs() < 1e-15));
        let back = m.enhance(&Tensor::full(&[3, 4, 4], 0.35));
        assert!(back.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn darkening_reduces_mean_brightness() {
        let m = DarkModel::default().noiseless();
        for seed in 0..10 {
            let img = random_image(seed);
            assert!(m.darken(&img, 0).mean() < img.mean());
        }
    }

    #[test]
    fn noiseless_round_trip_is_exact() {
        let m = DarkModel::default().noiseless();
        for seed in 0..10 {
            let img = random_image(seed);
            let back = m.enhance(&m.darken(&img, 0));
            assert!(back.max_abs_diff(&img).unwrap() < 1e-6);
        }
    }

    fn round_trip_mae(lo: f64) -> f64 {
        let m = DarkModel::default();
        let mut total = 0.0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = Tensor::from_fn(&[3, 16, 16], |_| rng.random_range(lo..1.0));
            let back = m.enhance(&m.darken(&img, seed));
            total += back.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / img.numel() as f64;
        }
        total / 100.0
    }

    #[test]
    fn noisy_round_trip_mean_error() {
        // numpy Monte Carlo over 1e6 pixels: 0.0897 for uniform [0, 1], 0.0312 for uniform [0.5, 1]
        let full = round_trip_mae(0.0);
        assert!((full - 0.0897).abs() < 0.005, "{full}");
        let bright = round_trip_mae(0.5);
        assert!(bright < 0.05 && (bright - 0.0312).abs() < 0.003, "{bright}");
    }

    #[test]
    fn monotone_without_noise() {
        let m = DarkModel::default().noiseless();
        let ramp = Tensor::from_fn(&[101], |i| i as f64 / 100.0);
        let d = m.darken(&ramp, 0);
        let e = m.enhance(&ramp);
        assert!(d.data().windows(2).all(|w| w[0] <= w[1]));
        assert!(e.data().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn same_stream_same_noise() {
        let m = DarkModel::default();
        let img = random_image(3);
        assert_eq!(m.darken(&img, 7), m.darken(&img, 7));
        assert_ne!(m.darken(&img, 7), m.darken(&img, 8));
    }

    #[test]
    fn validation() {
        assert!(DarkModel::default().validate().is_ok());
        assert!(DarkModel { gamma: 1.0, ..Default::default() }.validate().is_err());
        assert!(DarkModel { gain: 0.0, ..Default::default() }.validate().is_err());
        assert!(DarkModel { noise_sigma: -0.1, ..Default::default() }.validate().is_err());
    }
}
