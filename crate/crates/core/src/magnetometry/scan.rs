//! Monte Carlo scans over interrogation time and gradiometer baseline.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::{delta_b, difference_noise, sensitivity, sql, sql_with_detection, FieldProtocolParams};
use crate::error::{Error, Result};
use crate::estimators::{bootstrap, fit_fringe_harmonics, mean, pair_samples, std_dev, BootstrapConfig, PairSample};
use crate::lattice::{centroid, RegionSpec, SiteParams};
use crate::loss::LossConfig;
use crate::measurement::ShotRecord;
use crate::noise::NoiseConfig;
use crate::pipeline::{run, ReadoutPlan, RunSpec, ShotOutcome};
use crate::sequence::{ramsey_prefix, ramsey_tail, ProtocolParams, RamseyOptions, Readout, Sequence};

/// A swap-Ramsey experiment on a lattice. Every shot is read out at each
/// interrogation time and at `fringe_phases` readout phases, starting at the
/// zero crossing (phase π/2) and spaced evenly around the circle.
#[derive(Clone, Debug)]
pub struct RamseyRun {
    pub run_id: String,
    pub sites: Vec<SiteParams>,
    pub noise: NoiseConfig,
    pub loss: LossConfig,
    pub protocol: ProtocolParams,
    pub field: FieldProtocolParams,
    pub ramsey: RamseyOptions,
    pub t_ints: Vec<f64>,
    pub fringe_phases: usize,
    pub n_shots: usize,
    pub master_seed: u64,
}

impl RamseyRun {
    pub fn phases(&self) -> Vec<f64> {
        (0..self.fringe_phases).map(|k| FRAC_PI_2 + 2.0 * PI * k as f64 / self.fringe_phases as f64).collect()
    }

    /// Readout variant index of interrogation time `j`, phase `k`.
    pub fn variant(&self, j: usize, k: usize) -> usize {
        j * self.fringe_phases + k
    }

    pub fn spec(&self) -> Result<RunSpec> {
        if self.t_ints.is_empty() {
            return Err(Error::InvalidArgument("no interrogation times".into()));
        }
        if self.fringe_phases == 0 {
            return Err(Error::InvalidArgument("fringe_phases must be >= 1".into()));
        }
        let t_pi = self.field.t_pi;
        let mut branches = Vec::new();
        for &t in &self.t_ints {
            let t_hold = t - 2.0 * t_pi;
            if !(t_hold >= 0.0) {
                return Err(Error::InvalidArgument(format!("t_int {t} is shorter than the two swap pulses")));
            }
            for phase in self.phases() {
                branches.push(ramsey_tail(t_hold, t_pi, Readout::Ramsey { phase })?);
            }
        }
        let ramsey = RamseyOptions { t_pi, ..self.ramsey };
        let protocol = ProtocolParams { s_hz_per_t: self.field.s_hz_per_t, ..self.protocol.clone() };
        Ok(RunSpec {
            run_id: self.run_id.clone(),
            sites: self.sites.clone(),
            sequence: Sequence::new("ramsey-prefix", ramsey_prefix(&ramsey))?,
            readouts: ReadoutPlan::Branches(branches),
            noise: self.noise.clone(),
            loss: self.loss.clone(),
            protocol,
            n_shots: self.n_shots,
            master_seed: self.master_seed,
            atom_jitter: 0.0,
        })
    }

    pub fn execute(&self, workers: usize) -> Result<RamseyData> {
        let outcomes = run(&self.spec()?, workers)?;
        Ok(RamseyData { run: self.clone(), outcomes })
    }
}

/// Fitted fringe at one interrogation time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamseyFringe {
    /// First-harmonic amplitude.
    pub visibility: f64,
    pub visibility_se: f64,
    pub second_harmonic: f64,
    /// `|dz/dphi|` at the working point. This is the visibility that sets
    /// the field sensitivity.
    pub slope: f64,
}

pub struct RamseyData {
    pub run: RamseyRun,
    pub outcomes: Vec<ShotOutcome>,
}

impl RamseyData {
    pub fn records(&self, j: usize, k: usize) -> Vec<ShotRecord> {
        let v = self.run.variant(j, k);
        self.outcomes.iter().map(|o| o.records[v].clone()).collect()
    }

    /// Working-point records at interrogation time `j`.
    pub fn working_point(&self, j: usize) -> Vec<ShotRecord> {
        self.records(j, 0)
    }

    /// Fringe of the summed imbalance over `sites`, pooled over shots. With
    /// five or more readout phases the second harmonic is fitted too, so it
    /// does not alias onto the first.
    pub fn fringe(&self, j: usize, sites: &[usize]) -> Result<RamseyFringe> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (k, phase) in self.run.phases().into_iter().enumerate() {
            for rec in self.records(j, k) {
                let (mut a, mut b) = (0.0, 0.0);
                for &i in sites {
                    let s = rec.sites.get(i).ok_or(Error::IndexOutOfRange { index: i, len: rec.sites.len() })?;
                    a += s.n_a_det;
                    b += s.n_b_det;
                }
                x.push(phase);
                y.push((b - a) / (a + b));
            }
        }
        let harmonics = if self.run.fringe_phases >= 5 { 2 } else { 1 };
        let f = fit_fringe_harmonics(&x, &y, harmonics)?;
        Ok(RamseyFringe {
            visibility: f.visibility(),
            visibility_se: f.visibility_se,
            second_harmonic: f.amplitude(2),
            slope: f.slope(FRAC_PI_2).abs(),
        })
    }

    /// Mean spin length over `sites` after the working-point readout at
    /// interrogation time `j`, relative to `N/2`.
    pub fn single_shot_visibility(&self, j: usize, sites: &[usize]) -> f64 {
        let v = self.run.variant(j, 0);
        let vals: Vec<f64> = self
            .outcomes
            .iter()
            .map(|o| {
                let len: f64 = sites.iter().map(|&i| o.final_length[v][i]).sum();
                let n: f64 = sites.iter().map(|&i| o.pre_readout[i].n_atoms as f64).sum();
                2.0 * len / n
            })
            .collect();
        mean(&vals)
    }

    /// Shot-averaged quantum expectation of `z_left - z_right` at the working
    /// point, free of projection and detection noise.
    pub fn expected_dz(&self, j: usize, left: &[usize], right: &[usize]) -> f64 {
        let v = self.run.variant(j, 0);
        let z = |o: &ShotOutcome, region: &[usize]| {
            let jz: f64 = region.iter().map(|&i| o.final_jz[v][i].0).sum();
            let n: f64 = region.iter().map(|&i| o.pre_readout[i].n_atoms as f64).sum();
            2.0 * jz / n
        };
        let dz: Vec<f64> = self.outcomes.iter().map(|o| z(o, left) - z(o, right)).collect();
        mean(&dz)
    }

    /// Mean true atom number in `sites` at detection.
    pub fn atoms(&self, j: usize, sites: &[usize]) -> f64 {
        let v: Vec<f64> = self
            .working_point(j)
            .iter()
            .map(|r| sites.iter().map(|&i| r.sites[i].n_true() as f64).sum())
            .collect();
        mean(&v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldScanRow {
    pub t_int: f64,
    /// T
    pub sigma_b: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Perfect classical device: same atom number, unit visibility.
    pub sql: f64,
    pub sql_det: f64,
    /// `1 - sigma_b / sql`
    pub enhancement: f64,
    pub visibility: f64,
    pub visibility_se: f64,
    pub slope: f64,
    pub single_shot_visibility: f64,
    pub mean_dz: f64,
    pub mean_dz_se: f64,
    pub n_atoms: f64,
}

fn dz_values(samples: &[&PairSample]) -> Vec<f64> {
    samples.iter().map(|p| p.dz()).collect()
}

/// Field sensitivity of the `left`/`right` differential readout at every
/// interrogation time. `sigma_b` uses the fitted working-point slope.
pub fn field_scan(
    data: &RamseyData,
    left: &[usize],
    right: &[usize],
    detection_sigma: f64,
    boot: &BootstrapConfig,
) -> Result<Vec<FieldScanRow>> {
    let all: Vec<usize> = left.iter().chain(right).copied().collect();
    let mut rows = Vec::with_capacity(data.run.t_ints.len());
    for (j, &t_int) in data.run.t_ints.iter().enumerate() {
        let fringe = data.fringe(j, &all)?;
        let unit = FieldProtocolParams { visibility: 1.0, ..data.run.field }.with_t_int(t_int);
        // imbalance noise referred to phase through the measured slope
        let k = 1.0 / fringe.slope;
        let ps = pair_samples(&data.working_point(j), left, right)?;
        let sd = bootstrap("std_dz", &ps, |s| Ok(std_dev(&dz_values(s))), boot)?;
        let dz: Vec<f64> = ps.iter().map(|p| p.dz()).collect();
        let n = data.atoms(j, &all);
        let sigma_b = sensitivity(k * sd.value, &unit);
        let sql_b = sql(n, &unit);
        rows.push(FieldScanRow {
            t_int,
            sigma_b,
            ci_low: sensitivity(k * sd.ci_low, &unit),
            ci_high: sensitivity(k * sd.ci_high, &unit),
            sql: sql_b,
            sql_det: sql_with_detection(n, 2 * all.len(), detection_sigma, &unit),
            enhancement: 1.0 - sigma_b / sql_b,
            visibility: fringe.visibility,
            visibility_se: fringe.visibility_se,
            slope: fringe.slope,
            single_shot_visibility: data.single_shot_visibility(j, &all),
            mean_dz: mean(&dz),
            mean_dz_se: std_dev(&dz) / (dz.len() as f64).sqrt(),
            n_atoms: n,
        });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientRow {
    /// Centroid separation, µm.
    pub baseline: f64,
    pub n_left: usize,
    /// T/µm
    pub sensitivity: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Classical limit of the same regions at unit visibility.
    pub sql: f64,
    /// `1 - std(dz) / sqrt(sum (1 - z^2) / N)`, no detection-noise subtraction.
    pub enhancement: f64,
    pub enhancement_ci_low: f64,
    pub enhancement_ci_high: f64,
    /// T/µm
    pub gradient: f64,
    pub gradient_ci_low: f64,
    pub gradient_ci_high: f64,
}

fn classical_dz(samples: &[&PairSample]) -> f64 {
    let mut c = 0.0;
    for side in [|p: &PairSample| p.left, |p: &PairSample| p.right] {
        let z: Vec<f64> = samples.iter().map(|p| side(p).diff / side(p).total).collect();
        let n: Vec<f64> = samples.iter().map(|p| side(p).total).collect();
        let zbar = mean(&z);
        c += (1.0 - zbar * zbar) / mean(&n);
    }
    c
}

/// Gradient along increasing position from the mean working-point `dz`.
///
/// The left region sits at smaller positions; a positive gradient advances
/// the right region's phase, which lowers `z_left - z_right`.
pub fn gradient_from_dz(mean_dz: f64, baseline: f64, field: &FieldProtocolParams) -> Result<f64> {
    super::gradient_estimate(delta_b(-mean_dz, field)?, &super::GradiometerGeometry { baseline, left: vec![], right: vec![] })
}

/// Gradient sensitivity and estimate for each `(left, right)` region pair at
/// interrogation time `j`.
pub fn gradient_scan(
    data: &RamseyData,
    j: usize,
    pairs: &[(Vec<usize>, Vec<usize>)],
    boot: &BootstrapConfig,
) -> Result<Vec<GradientRow>> {
    let t_int = *data.run.t_ints.get(j).ok_or(Error::IndexOutOfRange { index: j, len: data.run.t_ints.len() })?;
    let recs = data.working_point(j);
    let mut rows = Vec::with_capacity(pairs.len());
    for (left, right) in pairs {
        let all: Vec<usize> = left.iter().chain(right).copied().collect();
        let slope = data.fringe(j, &all)?.slope;
        let unit = FieldProtocolParams { visibility: 1.0, ..data.run.field }.with_t_int(t_int);
        let k = 1.0 / slope;
        let d = (centroid(&data.run.sites, right)? - centroid(&data.run.sites, left)?).abs();
        let ps = pair_samples(&recs, left, right)?;
        let sd = bootstrap("std_dz", &ps, |s| Ok(std_dev(&dz_values(s))), boot)?;
        let enh = bootstrap("enhancement", &ps, |s| Ok(1.0 - std_dev(&dz_values(s)) / classical_dz(s).sqrt()), boot)?;
        let grad = bootstrap("gradient", &ps, |s| gradient_from_dz(k * mean(&dz_values(s)), d, &unit), boot)?;
        let refs: Vec<&PairSample> = ps.iter().collect();
        rows.push(GradientRow {
            baseline: d,
            n_left: left.len(),
            sensitivity: difference_noise(k * sd.value, &unit) / d,
            ci_low: difference_noise(k * sd.ci_low, &unit) / d,
            ci_high: difference_noise(k * sd.ci_high, &unit) / d,
            sql: difference_noise(classical_dz(&refs).sqrt(), &unit) / d,
            enhancement: enh.value,
            enhancement_ci_low: enh.ci_low,
            enhancement_ci_high: enh.ci_high,
            gradient: grad.value,
            gradient_ci_low: grad.ci_low,
            gradient_ci_high: grad.ci_high,
        });
    }
    Ok(rows)
}

/// Single wells `(i, n-1-i)`, outermost first.
pub fn single_well_pairs(n_sites: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..n_sites / 2).map(|i| (vec![i], vec![n_sites - 1 - i])).collect()
}

/// Outer windows of growing width, from the single outermost wells up to
/// the two halves.
pub fn summed_window_pairs(n_sites: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    (1..=n_sites / 2)
        .map(|w| {
            let r = RegionSpec::outer_windows(n_sites, w)?;
            Ok((r.regions[0].clone(), r.regions[1].clone()))
        })
        .collect()
}

/// Gradient sensitivity and quantum enhancement of summed outer windows.
pub fn gradiometric_summing_gain(data: &RamseyData, j: usize, boot: &BootstrapConfig) -> Result<Vec<GradientRow>> {
    gradient_scan(data, j, &summed_window_pairs(data.run.sites.len())?, boot)
}

/// Least-squares slope through the origin and its `R^2` about zero.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientData("need >= 2 matched points".into()));
    }
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateInput("all x are zero".into()));
    }
    let slope = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| b * b).sum();
    Ok((slope, if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 }))
}

/// Slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientData("need >= 2 matched points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateInput("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
