//! Field and gradient estimates from Ramsey imbalances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::TWO_PI;

mod scan;
pub use scan::*;

/// Swapped-state sensitivity, Hz/T, fixed so that 12300 atoms at unit
/// visibility and 342 µs interrogation give a 382 pT standard quantum limit.
pub const DEFAULT_S: f64 = 1.0 / (TWO_PI * 342e-6 * 110.905_365_064_094_17 * 382e-12);

/// Bias field, T.
pub const DEFAULT_B0: f64 = 9.12e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldProtocolParams {
    /// Hz/T
    pub s_hz_per_t: f64,
    /// T
    pub b0: f64,
    /// s
    pub t_hold: f64,
    /// s
    pub t_pi: f64,
    pub visibility: f64,
}

impl Default for FieldProtocolParams {
    fn default() -> Self {
        let t_pi = crate::sequence::swap_t_pi(crate::sequence::DEFAULT_SWAP_RABI_HZ);
        Self { s_hz_per_t: DEFAULT_S, b0: DEFAULT_B0, t_hold: 342e-6 - 2.0 * t_pi, t_pi, visibility: 1.0 }
    }
}

impl FieldProtocolParams {
    pub fn t_int(&self) -> f64 {
        self.t_hold + 2.0 * self.t_pi
    }

    pub fn with_t_int(mut self, t_int: f64) -> Self {
        self.t_hold = t_int - 2.0 * self.t_pi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_int() > 0.0) || self.t_hold < 0.0 {
            return Err(Error::InvalidArgument(format!("t_hold {} and t_pi {} give no valid t_int", self.t_hold, self.t_pi)));
        }
        if !(self.visibility > 0.0 && self.visibility <= 1.0) {
            return Err(Error::InvalidArgument(format!("visibility must be in (0, 1], got {}", self.visibility)));
        }
        if !(self.s_hz_per_t > 0.0 && self.s_hz_per_t.is_finite()) {
            return Err(Error::InvalidArgument(format!("S must be > 0, got {}", self.s_hz_per_t)));
        }
        Ok(())
    }

    /// rad per T of field difference
    fn scale(&self) -> f64 {
        TWO_PI * self.s_hz_per_t * self.t_int()
    }
}

/// Field difference from the maximal fringe imbalance difference.
pub fn delta_b(dz_max: f64, params: &FieldProtocolParams) -> Result<f64> {
    params.validate()?;
    let x = dz_max / (2.0 * params.visibility);
    if !(x.abs() <= 1.0) {
        return Err(Error::OutOfRange(format!("|dz_max| = {} exceeds 2V = {}", dz_max.abs(), 2.0 * params.visibility)));
    }
    Ok(2.0 * x.asin() / params.scale())
}

/// Single-shot field sensitivity referred to the full ensemble:
/// `std_dz / (2 * 2 pi V S t_int)`.
pub fn sensitivity(std_dz: f64, params: &FieldProtocolParams) -> f64 {
    std_dz.abs() / (2.0 * params.visibility * params.scale())
}

/// Noise of the left-right field difference, `std_dz / (2 pi V S t_int)`.
pub fn difference_noise(std_dz: f64, params: &FieldProtocolParams) -> f64 {
    std_dz.abs() / (params.visibility * params.scale())
}

pub fn sql(n_tot: f64, params: &FieldProtocolParams) -> f64 {
    1.0 / (params.visibility * params.scale() * n_tot.sqrt())
}

/// Standard quantum limit including `n_clouds` clouds of detection noise.
pub fn sql_with_detection(n_tot: f64, n_clouds: usize, detection_sigma: f64, params: &FieldProtocolParams) -> f64 {
    sql(n_tot, params) * (1.0 + n_clouds as f64 * detection_sigma * detection_sigma / n_tot).sqrt()
}

pub fn working_point_dz(phi_left: f64, dphi: f64, visibility: f64) -> f64 {
    -2.0 * visibility * (0.5 * dphi).sin() * (0.5 * dphi + phi_left).cos()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradiometerGeometry {
    /// µm
    pub baseline: f64,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// T/µm
pub fn gradient_estimate(delta_b: f64, geometry: &GradiometerGeometry) -> Result<f64> {
    if !(geometry.baseline.abs() > 0.0) {
        return Err(Error::DegenerateInput("zero baseline".into()));
    }
    Ok(delta_b / geometry.baseline)
}

/// Gradient noise for a given `dz` noise over baseline `d`, T/µm.
pub fn gradient_sensitivity(std_dz: f64, baseline: f64, params: &FieldProtocolParams) -> f64 {
    difference_noise(std_dz, params) / baseline
}

/// Duty-cycle sensitivity, T/√Hz.
pub fn per_root_hz(sigma_b: f64, cycle_time: f64) -> f64 {
    sigma_b * cycle_time.sqrt()
}

/// Ramsey phase difference produced by a field difference, rad.
pub fn phase_of_field(delta_b: f64, params: &FieldProtocolParams) -> f64 {
    delta_b * params.scale()
}
