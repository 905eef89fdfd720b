//! Projective readout with additive detection noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{sum_region, RegionSpec};
use crate::noise::ShotNoise;
use crate::spin::{sample_n_b, CollectiveState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site_index: usize,
    pub n_a_true: usize,
    pub n_b_true: usize,
    pub n_a_det: f64,
    pub n_b_det: f64,
}

impl SiteRecord {
    pub fn n_true(&self) -> usize {
        self.n_a_true + self.n_b_true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_index: usize,
    pub sites: Vec<SiteRecord>,
    pub noise: ShotNoise,
}

/// Samples every site and adds independent Gaussian noise of
/// `detection_sigma` atoms to each cloud.
pub fn measure_shot<R: Rng + ?Sized>(
    shot_index: usize,
    final_states: &[CollectiveState],
    detection_sigma: f64,
    noise: ShotNoise,
    rng: &mut R,
) -> ShotRecord {
    let sites = final_states
        .iter()
        .enumerate()
        .map(|(i, st)| measure_site(i, st, detection_sigma, rng))
        .collect();
    ShotRecord { shot_index, sites, noise }
}

pub fn measure_site<R: Rng + ?Sized>(
    site_index: usize,
    state: &CollectiveState,
    detection_sigma: f64,
    rng: &mut R,
) -> SiteRecord {
    let n_b = sample_n_b(state, rng);
    let n_a = state.n_atoms() - n_b;
    let za: f64 = rng.sample(StandardNormal);
    let zb: f64 = rng.sample(StandardNormal);
    SiteRecord {
        site_index,
        n_a_true: n_a,
        n_b_true: n_b,
        n_a_det: n_a as f64 + detection_sigma * za,
        n_b_det: n_b as f64 + detection_sigma * zb,
    }
}

/// Per-region detected imbalances of one shot.
#[derive(Clone, Debug, PartialEq)]
pub struct ImbalanceView {
    pub z: Vec<f64>,
    /// `z[0] - z[1]` for two-region specs.
    pub dz: Option<f64>,
}

pub fn imbalance(n_a: f64, n_b: f64) -> Result<f64> {
    let tot = n_a + n_b;
    if tot == 0.0 || !tot.is_finite() {
        return Err(Error::DegenerateInput(format!("region total is {tot}")));
    }
    Ok((n_b - n_a) / tot)
}

pub fn imbalances(shot: &ShotRecord, regions: &RegionSpec) -> Result<ImbalanceView> {
    let z = sum_region(shot, regions)?
        .into_iter()
        .map(|(a, b)| imbalance(a, b))
        .collect::<Result<Vec<_>>>()?;
    let dz = (z.len() == 2).then(|| z[0] - z[1]);
    Ok(ImbalanceView { z, dz })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};
    use crate::spin::make_css;

    #[test]
    fn noiseless_detection_is_exact() {
        let st = make_css(100, 1.0, 0.3).unwrap();
        let mut rng = substream(1, 0, 0, Purpose::Measurement);
        let r = measure_site(0, &st, 0.0, &mut rng);
        assert_eq!(r.n_a_det, r.n_a_true as f64);
        assert_eq!(r.n_b_det, r.n_b_true as f64);
        assert_eq!(r.n_true(), 100);
    }

    #[test]
    fn all_b_detection() {
        let st = CollectiveState::fock(400, 400).unwrap();
        let mut rng = substream(2, 0, 0, Purpose::Measurement);
        let n = 20_000;
        let mut sb = 0.0;
        let mut sa2 = 0.0;
        for _ in 0..n {
            let r = measure_site(0, &st, 4.0, &mut rng);
            assert_eq!(r.n_b_true, 400);
            sb += r.n_b_det;
            sa2 += r.n_a_det * r.n_a_det;
        }
        assert!((sb / n as f64 - 400.0).abs() < 5.0 * 4.0 / (n as f64).sqrt());
        assert!(((sa2 / n as f64).sqrt() / 4.0 - 1.0).abs() < 0.03);
    }

    #[test]
    fn imbalance_values() {
        assert_eq!(imbalance(100.0, 300.0).unwrap(), 0.5);
        assert_eq!(imbalance(5.0, 5.0).unwrap(), 0.0);
        assert!(imbalance(0.0, 0.0).is_err());
    }
}
