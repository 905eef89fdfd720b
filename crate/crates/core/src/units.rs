//! Conversions between interface units (Hz, degrees, microns, microgauss)
//! and the angular units used internally.

use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

pub fn hz_to_rad_s(f: f64) -> f64 {
    TWO_PI * f
}

pub fn rad_s_to_hz(w: f64) -> f64 {
    w / TWO_PI
}

pub fn deg_to_rad(d: f64) -> f64 {
    d.to_radians()
}

pub fn rad_to_deg(r: f64) -> f64 {
    r.to_degrees()
}

/// 1 G = 1e-4 T
pub fn gauss_to_tesla(g: f64) -> f64 {
    g * 1e-4
}

pub fn tesla_to_gauss(t: f64) -> f64 {
    t * 1e4
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for &x in &[0.3, 1.0, 17.5] {
            assert!((from_db(to_db(x)) - x).abs() < 1e-12 * x);
            assert!((rad_s_to_hz(hz_to_rad_s(x)) - x).abs() < 1e-12);
            assert!((rad_to_deg(deg_to_rad(x)) - x).abs() < 1e-12);
        }
        // 30 uG
        assert!((gauss_to_tesla(30e-6) - 3e-9).abs() < 1e-21);
        assert!((tesla_to_gauss(3e-9) - 30e-6).abs() < 1e-18);
    }
}
