//! Seeded natural/smoothed texture pairs.
//!
//! The "natural" image mixes white noise with a low-frequency sinusoid grid;
//! its "smoothed" twin is the same image after a Gaussian blur, standing in
//! for the over-smooth local texture of generated content.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{correlate2d, gaussian_kernel, PaddingMode, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Images per class.
    pub count: usize,
    pub size: usize,
    pub channels: usize,
    pub seed: u64,
    pub smooth_sigma: f64,
    /// Weight of the white-noise component; the sinusoid gets `1 − texture_mix`.
    pub texture_mix: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 200,
            size: 64,
            channels: 3,
            seed: 0,
            smooth_sigma: 1.5,
            texture_mix: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("synth count must be at least 1".into()));
        }
        if self.size < 8 {
            return Err(Error::Config(format!("synth size must be at least 8, got {}", self.size)));
        }
        if !matches!(self.channels, 1 | 3) {
            return Err(Error::Config(format!(
                "synth channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        if !(self.smooth_sigma > 0.0) {
            return Err(Error::Config("smooth_sigma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.texture_mix) {
            return Err(Error::Config("texture_mix must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Rounds onto the 8-bit grid so images survive a PNG round trip unchanged.
fn quantize(x: &Tensor) -> Tensor {
    x.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

/// Returns `(natural, smoothed)` for `index`, deterministic in `(cfg.seed, index)`.
pub fn synth_pair(cfg: &SynthConfig, index: usize) -> Result<(Tensor, Tensor)> {
    cfg.validate()?;
    if index >= cfg.count {
        return Err(Error::Domain(format!(
            "index {index} out of range for {} pairs",
            cfg.count
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);

    let n = cfg.size as f64;
    let max_freq = (n / 8.0).max(1.0);
    let waves: Vec<[f64; 4]> = (0..cfg.channels)
        .map(|_| {
            [
                rng.gen_range(1.0..=max_freq),
                rng.gen_range(1.0..=max_freq),
                rng.gen_range(0.0..TAU),
                rng.gen_range(0.0..TAU),
            ]
        })
        .collect();
    let mix = cfg.texture_mix;
    let natural = Tensor::from_fn(cfg.channels, cfg.size, cfg.size, |c, y, x| {
        let [fx, fy, px, py] = waves[c];
        let wave = 0.5
            + 0.25 * (TAU * fx * x as f64 / n + px).sin()
            + 0.25 * (TAU * fy * y as f64 / n + py).sin();
        let noise: f64 = rng.gen();
        (mix * noise + (1.0 - mix) * wave) as f32
    })?;
    let natural = quantize(&natural);
    let smoothed = quantize(&correlate2d(
        &natural,
        &gaussian_kernel(cfg.smooth_sigma)?,
        PaddingMode::Reflect,
    )?);
    Ok((natural, smoothed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_sinusoid_in_range() {
        let cfg = SynthConfig {
            texture_mix: 0.0,
            count: 3,
            ..SynthConfig::default()
        };
        let (nat, sm) = synth_pair(&cfg, 2).unwrap();
        assert!(nat.data().iter().chain(sm.data()).all(|v| (0.0..=1.0).contains(v)));
        // No noise: neighboring pixels along a row differ by at most the wave slope.
        let n = cfg.size as f32;
        let slope = 0.25 * std::f32::consts::TAU * (n / 8.0) / n + 2.0 / 255.0;
        for y in 0..cfg.size {
            for x in 1..cfg.size {
                assert!((nat.get(0, y, x) - nat.get(0, y, x - 1)).abs() <= slope);
            }
        }
    }

    #[test]
    fn pairs_are_deterministic_and_distinct() {
        let cfg = SynthConfig {
            count: 4,
            size: 16,
            ..SynthConfig::default()
        };
        assert_eq!(synth_pair(&cfg, 1).unwrap(), synth_pair(&cfg, 1).unwrap());
        assert_ne!(synth_pair(&cfg, 1).unwrap().0, synth_pair(&cfg, 2).unwrap().0);
        let other = SynthConfig { seed: 1, ..cfg.clone() };
        assert_ne!(synth_pair(&cfg, 1).unwrap().0, synth_pair(&other, 1).unwrap().0);
        assert!(synth_pair(&cfg, 4).is_err());
    }

    #[test]
    fn values_are_on_the_byte_grid() {
        let cfg = SynthConfig {
            count: 1,
            size: 12,
            ..SynthConfig::default()
        };
        let (a, b) = synth_pair(&cfg, 0).unwrap();
        for v in a.data().iter().chain(b.data()) {
            let k = v * 255.0;
            assert!((k - k.round()).abs() < 1e-4);
        }
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            SynthConfig { count: 0, ..SynthConfig::default() },
            SynthConfig { size: 7, ..SynthConfig::default() },
            SynthConfig { channels: 2, ..SynthConfig::default() },
            SynthConfig { texture_mix: 1.5, ..SynthConfig::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }
}
