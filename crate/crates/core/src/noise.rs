//! Per-shot technical noise: quasi-static field offsets and the detunings
//! they produce in each protocol stage.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::TWO_PI;

/// How the detuning during squeezing generation is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenDetuningMode {
    /// Independent Gaussian with `gen_detuning_sigma`.
    Direct,
    /// `gen_field_to_detuning * field_offset`.
    FieldDerived,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Shot-to-shot field noise, T.
    pub field_sigma_shot: f64,
    /// Long-term drift, T, drawn once per block of `longterm_block` shots.
    pub field_sigma_longterm: f64,
    /// Shots per drift block; 0 disables the drift term.
    pub longterm_block: usize,
    /// Generation-transition sensitivity, Hz/T.
    pub gen_field_to_detuning: f64,
    pub swap_sensitivity_ratio: f64,
    /// Hz
    pub pulse_detuning_sigma: f64,
    /// Hz
    pub gen_detuning_sigma: f64,
    pub gen_mode: GenDetuningMode,
    /// Atoms per cloud.
    pub detection_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            field_sigma_shot: 3e-9,
            field_sigma_longterm: 4.5e-9,
            longterm_block: 0,
            gen_field_to_detuning: 1e5,
            swap_sensitivity_ratio: 140.0,
            pulse_detuning_sigma: 1.5,
            gen_detuning_sigma: 0.45,
            gen_mode: GenDetuningMode::Direct,
            detection_sigma: 4.0,
        }
    }
}

impl NoiseConfig {
    /// Everything off.
    pub fn quiet() -> Self {
        Self {
            field_sigma_shot: 0.0,
            field_sigma_longterm: 0.0,
            longterm_block: 0,
            pulse_detuning_sigma: 0.0,
            gen_detuning_sigma: 0.0,
            detection_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("field_sigma_shot", self.field_sigma_shot),
            ("field_sigma_longterm", self.field_sigma_longterm),
            ("gen_field_to_detuning", self.gen_field_to_detuning),
            ("swap_sensitivity_ratio", self.swap_sensitivity_ratio),
            ("pulse_detuning_sigma", self.pulse_detuning_sigma),
            ("gen_detuning_sigma", self.gen_detuning_sigma),
            ("detection_sigma", self.detection_sigma),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {x}")));
            }
        }
        Ok(())
    }
}

/// Quasi-static noise for one shot, shared by every site and stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShotNoise {
    /// Total field offset (shot plus drift block), T.
    pub field_offset: f64,
    /// The drift-block part of `field_offset`, T.
    pub block_offset: f64,
    /// rad/s
    pub gen_detuning: f64,
    /// rad/s
    pub pulse_detuning: f64,
}

fn gauss<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

/// Draws the per-shot offsets. The drift-block part is added separately
/// with [`ShotNoise::with_block_offset`].
pub fn draw_shot_noise<R: Rng + ?Sized>(config: &NoiseConfig, rng: &mut R) -> ShotNoise {
    let field_offset = gauss(rng, config.field_sigma_shot);
    let direct = gauss(rng, config.gen_detuning_sigma);
    let pulse = gauss(rng, config.pulse_detuning_sigma);
    let gen_hz = match config.gen_mode {
        GenDetuningMode::Direct => direct,
        GenDetuningMode::FieldDerived => config.gen_field_to_detuning * field_offset,
    };
    ShotNoise {
        field_offset,
        block_offset: 0.0,
        gen_detuning: TWO_PI * gen_hz,
        pulse_detuning: TWO_PI * pulse,
    }
}

/// Draws the drift offset shared by one block of shots.
pub fn draw_block_offset<R: Rng + ?Sized>(config: &NoiseConfig, rng: &mut R) -> f64 {
    gauss(rng, config.field_sigma_longterm)
}

impl ShotNoise {
    pub fn with_block_offset(mut self, config: &NoiseConfig, offset: f64) -> Self {
        self.field_offset += offset;
        self.block_offset = offset;
        if config.gen_mode == GenDetuningMode::FieldDerived {
            self.gen_detuning += TWO_PI * config.gen_field_to_detuning * offset;
        }
        self
    }
}

static RATIO_WARNED: AtomicBool = AtomicBool::new(false);

/// `S / gen_field_to_detuning` relative to the configured ratio; warns once
/// per process when they disagree by more than 1%.
pub fn check_sensitivity_ratio(config: &NoiseConfig, s_hz_per_t: f64) -> Option<f64> {
    if config.gen_field_to_detuning <= 0.0 || config.swap_sensitivity_ratio <= 0.0 {
        return None;
    }
    let ratio = s_hz_per_t / config.gen_field_to_detuning;
    let rel = (ratio - config.swap_sensitivity_ratio).abs() / config.swap_sensitivity_ratio;
    if rel > 0.01 && !RATIO_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!(
            "swap sensitivity S = {s_hz_per_t:.4e} Hz/T is {ratio:.4e} x the generation sensitivity, \
             configured ratio is {}",
            config.swap_sensitivity_ratio
        );
    }
    Some(ratio)
}

/// Detuning of the swapped transition, `2 pi S field_offset`, rad/s.
pub fn detuning_during_hold(config: &NoiseConfig, field_offset: f64, s_hz_per_t: f64) -> f64 {
    check_sensitivity_ratio(config, s_hz_per_t);
    TWO_PI * s_hz_per_t * field_offset
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};

    #[test]
    fn zero_sigmas_give_exact_zeros() {
        let cfg = NoiseConfig::quiet();
        let mut rng = substream(1, 0, 0, Purpose::ShotNoise);
        let n = draw_shot_noise(&cfg, &mut rng);
        assert_eq!(n, ShotNoise::default());
    }

    #[test]
    fn field_std_matches() {
        let cfg = NoiseConfig::default();
        let mut rng = substream(5, 0, 0, Purpose::ShotNoise);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| draw_shot_noise(&cfg, &mut rng).field_offset).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((sd / 3e-9 - 1.0).abs() < 0.01, "sd {sd}");
    }

    #[test]
    fn field_derived_generation_detuning() {
        let cfg = NoiseConfig { gen_mode: GenDetuningMode::FieldDerived, ..NoiseConfig::quiet() };
        let n = ShotNoise::default().with_block_offset(&cfg, 3e-9);
        assert!((n.gen_detuning / TWO_PI - 0.3e-3).abs() < 1e-15);
        // 30 uG at 10 Hz/mG
        let hz = cfg.gen_field_to_detuning * 3e-9 * 1e3;
        assert!((hz - 0.3).abs() < 1e-12);
    }

    #[test]
    fn hold_detuning() {
        let cfg = NoiseConfig::default();
        assert_eq!(detuning_during_hold(&cfg, 0.0, 1.4e7), 0.0);
        assert!((check_sensitivity_ratio(&cfg, 140.0 * 1e5).unwrap() - 140.0).abs() < 1e-9);
        let w = detuning_during_hold(&cfg, 3e-9, 1.4e7);
        assert!((w / TWO_PI - 0.042).abs() < 1e-12);
    }
}
