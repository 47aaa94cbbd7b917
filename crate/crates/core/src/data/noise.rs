use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelInput;
use crate::error::{AvidError, Result};
use crate::tensor::Tensor;

/// Additive Gaussian corruption applied to the inpainter's training input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Noise scale; values of 0.4 and above count as hard noise.
    pub gamma: f64,
    /// Standard deviation of the unscaled Gaussian.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            gamma: 0.4,
            sigma: 1.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(AvidError::config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(AvidError::config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisyInput {
    pub tensor: Tensor<f32>,
    pub gamma: f64,
    pub seed: u64,
}

/// Raw noise field `gamma * eta`, `eta ~ N(0, sigma^2)`, drawn from `cfg.seed`.
pub fn noise_field(len: usize, cfg: &NoiseConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let normal = Normal::new(0.0, cfg.sigma).map_err(|e| AvidError::config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..len).map(|_| cfg.gamma * normal.sample(&mut rng)).collect())
}

/// `x + gamma * eta`, clamped to `[0, 1]`.
pub fn inject_noise(x: &ModelInput, cfg: &NoiseConfig) -> Result<NoisyInput> {
    cfg.validate()?;
    let tensor = if cfg.gamma == 0.0 {
        x.tensor.clone()
    } else {
        let field = noise_field(x.tensor.data().len(), cfg)?;
        let (c, h, w) = x.tensor.shape();
        let data = x
            .tensor
            .data()
            .iter()
            .zip(field)
            .map(|(&v, n)| ((v as f64 + n) as f32).clamp(0.0, 1.0))
            .collect();
        Tensor::from_vec(c, h, w, data)
    };
    Ok(NoisyInput {
        tensor,
        gamma: cfg.gamma,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input() -> ModelInput {
        ModelInput {
            tensor: Tensor::from_vec(3, 4, 4, (0..48).map(|i| (i as f32) / 47.0).collect()),
            source_frame_index: 0,
        }
    }

    #[test]
    fn zero_gamma_is_identity() {
        let x = input();
        let y = inject_noise(&x, &NoiseConfig { gamma: 0.0, ..Default::default() }).unwrap();
        assert_eq!(y.tensor, x.tensor);
    }

    #[test]
    fn same_seed_same_noise() {
        let cfg = NoiseConfig { seed: 42, ..Default::default() };
        let a = inject_noise(&input(), &cfg).unwrap();
        let b = inject_noise(&input(), &cfg).unwrap();
        assert_eq!(a, b);
        let c = inject_noise(&input(), &NoiseConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.tensor, c.tensor);
    }

    #[test]
    fn output_is_clamped() {
        let cfg = NoiseConfig { gamma: 5.0, ..Default::default() };
        let y = inject_noise(&input(), &cfg).unwrap();
        assert!(y.tensor.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(y.tensor.shape(), (3, 4, 4));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(NoiseConfig { gamma: -0.1, ..Default::default() }.validate().is_err());
        assert!(NoiseConfig { sigma: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn noise_std_matches_gamma() {
        // Sample-statistics oracle over 2^20 draws.
        let cfg = NoiseConfig { gamma: 0.4, sigma: 1.0, seed: 7 };
        let field = noise_field(1 << 20, &cfg).unwrap();
        let n = field.len() as f64;
        let mean = field.iter().sum::<f64>() / n;
        let var = field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - 0.4).abs() / 0.4 < 0.02, "std {}", var.sqrt());
    }
}
