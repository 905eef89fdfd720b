//! Squeezing parameters, fringe and noise fits, and bootstrap intervals.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{enumerate_combinations, SiteParams};
use crate::measurement::{imbalance, ShotRecord};
use crate::rng::{substream, Purpose};

pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimator: String,
    pub value: f64,
    /// `value - std_error`
    pub ci_low: f64,
    /// `value + std_error`
    pub ci_high: f64,
    /// Standard deviation of the bootstrap replicates.
    pub std_error: f64,
    pub n_shots: usize,
    pub n_resamples: usize,
    /// Set when a noise subtraction drove the point estimate negative.
    pub negative: bool,
    pub method: String,
}

impl EstimateResult {
    pub fn db(&self) -> f64 {
        crate::units::to_db(self.value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { n_resamples: DEFAULT_RESAMPLES, seed: 0 }
    }
}

/// Nonparametric bootstrap over records. Resample `r` draws from its own
/// substream, so the result does not depend on thread count.
pub fn bootstrap<T, F>(name: &str, data: &[T], estimator: F, config: &BootstrapConfig) -> Result<EstimateResult>
where
    T: Sync,
    F: Fn(&[&T]) -> Result<f64> + Sync,
{
    if config.n_resamples < 100 {
        return Err(Error::InvalidArgument(format!("n_resamples must be >= 100, got {}", config.n_resamples)));
    }
    if data.len() < 2 {
        return Err(Error::InsufficientData(format!("{name} needs >= 2 shots, got {}", data.len())));
    }
    let all: Vec<&T> = data.iter().collect();
    let value = estimator(&all)?;
    let n = data.len();
    let reps: Vec<Option<f64>> = (0..config.n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(config.seed, r as u64, 0, Purpose::Bootstrap);
            let pick: Vec<&T> = (0..n).map(|_| &data[rng.random_range(0..n)]).collect();
            estimator(&pick).ok().filter(|v| v.is_finite())
        })
        .collect();
    let ok: Vec<f64> = reps.into_iter().flatten().collect();
    if ok.len() * 10 < config.n_resamples * 9 {
        return Err(Error::DegenerateInput(format!(
            "{name}: only {} of {} bootstrap replicates were valid",
            ok.len(),
            config.n_resamples
        )));
    }
    let sd = std_dev(&ok);
    Ok(EstimateResult {
        estimator: name.to_string(),
        value,
        ci_low: value - sd,
        ci_high: value + sd,
        std_error: sd,
        n_shots: n,
        n_resamples: config.n_resamples,
        negative: value < 0.0,
        method: "bootstrap".into(),
    })
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the `n - 1` denominator.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    variance(x).max(0.0).sqrt()
}

/// Detected difference `N_b - N_a` and total of one region in one shot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionSample {
    pub diff: f64,
    pub total: f64,
}

pub fn region_samples(shots: &[ShotRecord], region: &[usize]) -> Result<Vec<RegionSample>> {
    shots
        .iter()
        .map(|sh| {
            let (mut a, mut b) = (0.0, 0.0);
            for &i in region {
                let s = sh.sites.get(i).ok_or(Error::IndexOutOfRange { index: i, len: sh.sites.len() })?;
                a += s.n_a_det;
                b += s.n_b_det;
            }
            Ok(RegionSample { diff: b - a, total: a + b })
        })
        .collect()
}

/// `(Var(N_-) - n_clouds sigma^2) / (4 p (1-p) N_tot)`
pub fn xi2_direct_value(samples: &[&RegionSample], n_clouds: usize, detection_sigma: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData("need >= 2 shots".into()));
    }
    let d: Vec<f64> = samples.iter().map(|s| s.diff).collect();
    let n_tot = samples.iter().map(|s| s.total).sum::<f64>() / samples.len() as f64;
    if !(n_tot > 0.0) {
        return Err(Error::DegenerateInput(format!("mean detected total is {n_tot}")));
    }
    let p = 0.5 + mean(&d) / (2.0 * n_tot);
    let binom = 4.0 * p * (1.0 - p) * n_tot;
    if !(binom > 0.0) {
        return Err(Error::DegenerateInput(format!("binomial factor vanishes (p = {p})")));
    }
    let det = n_clouds as f64 * detection_sigma * detection_sigma;
    Ok((variance(&d) - det) / binom)
}

pub fn xi2_direct(
    shots: &[ShotRecord],
    region: &[usize],
    detection_sigma: f64,
    config: &BootstrapConfig,
) -> Result<EstimateResult> {
    if shots.len() < 2 {
        return Err(Error::InsufficientData(format!("xi2_direct needs >= 2 shots, got {}", shots.len())));
    }
    let samples = region_samples(shots, region)?;
    let clouds = 2 * region.len();
    bootstrap("xi2_direct", &samples, |s| xi2_direct_value(s, clouds, detection_sigma), config)
}

/// Both regions of one shot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairSample {
    pub left: RegionSample,
    pub right: RegionSample,
}

impl PairSample {
    pub fn dz(&self) -> f64 {
        self.left.diff / self.left.total - self.right.diff / self.right.total
    }
}

pub fn pair_samples(shots: &[ShotRecord], left: &[usize], right: &[usize]) -> Result<Vec<PairSample>> {
    let l = region_samples(shots, left)?;
    let r = region_samples(shots, right)?;
    l.into_iter()
        .zip(r)
        .map(|(left, right)| {
            imbalance(0.5 * (left.total - left.diff), 0.5 * (left.total + left.diff))?;
            imbalance(0.5 * (right.total - right.diff), 0.5 * (right.total + right.diff))?;
            Ok(PairSample { left, right })
        })
        .collect()
}

struct RelParts {
    var_dz: f64,
    detection: f64,
    classical: f64,
    n_tot: f64,
}

fn rel_parts(samples: &[&PairSample], clouds: (usize, usize), sigma: f64) -> Result<RelParts> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData("need >= 2 shots".into()));
    }
    let dz: Vec<f64> = samples.iter().map(|s| s.dz()).collect();
    let side = |f: &dyn Fn(&PairSample) -> RegionSample, n_clouds: usize| -> Result<(f64, f64)> {
        let n = samples.iter().map(|s| f(s).total).sum::<f64>() / samples.len() as f64;
        let z = samples.iter().map(|s| f(s).diff / f(s).total).sum::<f64>() / samples.len() as f64;
        if !(n > 0.0) {
            return Err(Error::DegenerateInput(format!("mean region total is {n}")));
        }
        let c = 1.0 - z * z;
        let det = n_clouds as f64 * sigma * sigma * (1.0 + z * z) / (n * n);
        Ok((c / n, det))
    };
    let (cl, dl) = side(&|s| s.left, clouds.0)?;
    let (cr, dr) = side(&|s| s.right, clouds.1)?;
    let classical = cl + cr;
    if !(classical > 0.0) {
        return Err(Error::DegenerateInput("classical reference vanishes".into()));
    }
    let n_tot = samples.iter().map(|s| s.left.total + s.right.total).sum::<f64>() / samples.len() as f64;
    Ok(RelParts { var_dz: variance(&dz), detection: dl + dr, classical, n_tot })
}

/// `(Var(dz) - detection) / (c_l/N_l + c_r/N_r)` with `c = 1 - <z>^2`.
pub fn xi2_rel_value(samples: &[&PairSample], clouds: (usize, usize), detection_sigma: f64) -> Result<f64> {
    let p = rel_parts(samples, clouds, detection_sigma)?;
    Ok((p.var_dz - p.detection) / p.classical)
}

/// `N_tot/4 (Var(dz) - detection)`, valid for balanced halves near `z = 0`.
pub fn xi2_rel_simple_value(samples: &[&PairSample], clouds: (usize, usize), detection_sigma: f64) -> Result<f64> {
    let p = rel_parts(samples, clouds, detection_sigma)?;
    Ok(0.25 * p.n_tot * (p.var_dz - p.detection))
}

pub fn xi2_rel(
    shots: &[ShotRecord],
    left: &[usize],
    right: &[usize],
    detection_sigma: f64,
    config: &BootstrapConfig,
) -> Result<EstimateResult> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::InvalidArgument("both regions must be non-empty".into()));
    }
    if shots.len() < 2 {
        return Err(Error::InsufficientData(format!("xi2_rel needs >= 2 shots, got {}", shots.len())));
    }
    let samples = pair_samples(shots, left, right)?;
    let clouds = (2 * left.len(), 2 * right.len());
    bootstrap("xi2_rel", &samples, |s| xi2_rel_value(s, clouds, detection_sigma), config)
}

pub fn xi2_metrological(xi2_n: f64, visibility: f64) -> Result<f64> {
    if !(visibility > 0.0 && visibility <= 1.0) {
        return Err(Error::InvalidArgument(format!("visibility must be in (0, 1], got {visibility}")));
    }
    Ok(xi2_n / (visibility * visibility))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub visibility: f64,
    pub visibility_se: f64,
    /// `atan2(B, A)` for `z = A sin + B cos + C`
    pub phase_offset: f64,
    pub phase_offset_se: f64,
    pub offset: f64,
    pub offset_se: f64,
    pub residual_std: f64,
    pub r2: f64,
}

fn solve_normal(xtx: Matrix3<f64>, xty: Vector3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let eig = xtx.symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 1e-10 * max) {
        return Err(Error::DegenerateInput("rank-deficient design".into()));
    }
    let inv = xtx.try_inverse().ok_or_else(|| Error::DegenerateInput("singular design".into()))?;
    Ok((inv * xty, inv))
}

/// Linear least squares `z = A sin(phi) + B cos(phi) + C`.
pub fn fit_fringe(phases: &[f64], z: &[f64]) -> Result<FringeFit> {
    if phases.len() != z.len() {
        return Err(Error::InvalidArgument("phases and imbalances differ in length".into()));
    }
    if phases.len() < 4 {
        return Err(Error::InsufficientData(format!("fringe fit needs >= 4 points, got {}", phases.len())));
    }
    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for (&p, &y) in phases.iter().zip(z) {
        let row = Vector3::new(p.sin(), p.cos(), 1.0);
        xtx += row * row.transpose();
        xty += row * y;
    }
    let (beta, inv) = solve_normal(xtx, xty)?;
    let (a, b, c) = (beta[0], beta[1], beta[2]);
    let n = z.len() as f64;
    let zm = mean(z);
    let mut rss = 0.0;
    let mut tss = 0.0;
    for (&p, &y) in phases.iter().zip(z) {
        let r = y - (a * p.sin() + b * p.cos() + c);
        rss += r * r;
        tss += (y - zm) * (y - zm);
    }
    let s2 = if n > 3.0 { rss / (n - 3.0) } else { 0.0 };
    let cov = inv * s2;
    let v = a.hypot(b);
    let (v_var, ph_var) = if v > 0.0 {
        (
            (a * a * cov[(0, 0)] + b * b * cov[(1, 1)] + 2.0 * a * b * cov[(0, 1)]) / (v * v),
            (b * b * cov[(0, 0)] + a * a * cov[(1, 1)] - 2.0 * a * b * cov[(0, 1)]) / (v * v * v * v),
        )
    } else {
        (cov[(0, 0)].max(cov[(1, 1)]), f64::INFINITY)
    };
    Ok(FringeFit {
        visibility: v,
        visibility_se: v_var.max(0.0).sqrt(),
        phase_offset: b.atan2(a),
        phase_offset_se: ph_var.max(0.0).sqrt(),
        offset: c,
        offset_se: cov[(2, 2)].max(0.0).sqrt(),
        residual_std: (rss / n).sqrt(),
        r2: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
    })
}

/// Fringe with harmonics: `z = c + sum_h (a_h sin(h phi) + b_h cos(h phi))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeHarmonics {
    pub offset: f64,
    /// `(a_h, b_h)` for `h = 1..`
    pub coeffs: Vec<(f64, f64)>,
    /// Standard error of the first-harmonic amplitude.
    pub visibility_se: f64,
    pub r2: f64,
}

impl FringeHarmonics {
    /// First-harmonic amplitude.
    pub fn visibility(&self) -> f64 {
        self.amplitude(1)
    }

    pub fn amplitude(&self, h: usize) -> f64 {
        self.coeffs.get(h.wrapping_sub(1)).map_or(0.0, |(a, b)| a.hypot(*b))
    }

    pub fn eval(&self, phi: f64) -> f64 {
        self.offset
            + self.coeffs.iter().enumerate().map(|(i, (a, b))| {
                let h = (i + 1) as f64;
                a * (h * phi).sin() + b * (h * phi).cos()
            }).sum::<f64>()
    }

    /// `dz/dphi` at `phi`.
    pub fn slope(&self, phi: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let h = (i + 1) as f64;
                h * (a * (h * phi).cos() - b * (h * phi).sin())
            })
            .sum()
    }
}

/// Least-squares fringe fit with `harmonics` harmonics. Needs at least
/// `2 harmonics + 1` distinct phases.
pub fn fit_fringe_harmonics(phases: &[f64], z: &[f64], harmonics: usize) -> Result<FringeHarmonics> {
    if phases.len() != z.len() {
        return Err(Error::InvalidArgument("phases and imbalances differ in length".into()));
    }
    if harmonics == 0 {
        return Err(Error::InvalidArgument("need at least one harmonic".into()));
    }
    let p = 2 * harmonics + 1;
    if phases.len() <= p {
        return Err(Error::InsufficientData(format!("{p}-parameter fringe fit needs > {p} points, got {}", phases.len())));
    }
    let row = |phi: f64| {
        let mut r = vec![1.0];
        for h in 1..=harmonics {
            let x = h as f64 * phi;
            r.push(x.sin());
            r.push(x.cos());
        }
        r
    };
    let x = DMatrix::from_fn(phases.len(), p, |i, j| row(phases[i])[j]);
    let y = DVector::from_column_slice(z);
    let xtx = x.transpose() * &x;
    let eig = xtx.clone().symmetric_eigen();
    if !(eig.eigenvalues.min() > 1e-10 * eig.eigenvalues.max()) {
        return Err(Error::DegenerateInput("too few distinct phases for the requested harmonics".into()));
    }
    let inv = xtx.try_inverse().ok_or_else(|| Error::DegenerateInput("singular design".into()))?;
    let beta = &inv * (x.transpose() * &y);
    let resid = &y - &x * &beta;
    let rss = resid.norm_squared();
    let zm = mean(z);
    let tss: f64 = z.iter().map(|v| (v - zm).powi(2)).sum();
    let s2 = rss / (z.len() - p) as f64;
    let (a, b) = (beta[1], beta[2]);
    let v = a.hypot(b);
    let v_var = if v > 0.0 {
        s2 * (a * a * inv[(1, 1)] + b * b * inv[(2, 2)] + 2.0 * a * b * inv[(1, 2)]) / (v * v)
    } else {
        s2 * inv[(1, 1)].max(inv[(2, 2)])
    };
    Ok(FringeHarmonics {
        offset: beta[0],
        coeffs: (0..harmonics).map(|h| (beta[1 + 2 * h], beta[2 + 2 * h])).collect(),
        visibility_se: v_var.max(0.0).sqrt(),
        r2: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub linear: f64,
    pub linear_se: f64,
    pub beta2: f64,
    pub beta2_se: f64,
}

impl QuadraticFit {
    /// Technical part `beta2 N^2` over the coherent-state variance `N`.
    pub fn technical_in_css_units(&self, n: f64) -> f64 {
        self.beta2 * n
    }
}

/// Least squares `Var = a N + beta2 N^2`.
pub fn fit_quadratic_noise(sizes: &[f64], variances: &[f64]) -> Result<QuadraticFit> {
    if sizes.len() != variances.len() {
        return Err(Error::InvalidArgument("sizes and variances differ in length".into()));
    }
    let mut distinct: Vec<f64> = sizes.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InsufficientData(format!("need >= 3 distinct sizes, got {}", distinct.len())));
    }
    let (mut s2, mut s3, mut s4, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&n, &v) in sizes.iter().zip(variances) {
        s2 += n * n;
        s3 += n * n * n;
        s4 += n * n * n * n;
        y1 += n * v;
        y2 += n * n * v;
    }
    let det = s2 * s4 - s3 * s3;
    if !(det > 1e-12 * s2 * s4) {
        return Err(Error::DegenerateInput("ill-conditioned size set".into()));
    }
    let a = (s4 * y1 - s3 * y2) / det;
    let b = (s2 * y2 - s3 * y1) / det;
    let m = sizes.len() as f64;
    let rss: f64 = sizes.iter().zip(variances).map(|(&n, &v)| (v - a * n - b * n * n).powi(2)).sum();
    let sigma2 = rss / (m - 2.0);
    Ok(QuadraticFit {
        linear: a,
        linear_se: (sigma2 * s4 / det).sqrt(),
        beta2: b,
        beta2_se: (sigma2 * s2 / det).sqrt(),
    })
}

/// Mean over site combinations of the detected `N_-` variance, per target
/// ensemble size. Rows are `(mean N_tot, mean variance, subsets used)`;
/// targets with no admissible subset are skipped.
pub fn variance_vs_size(
    shots: &[ShotRecord],
    sites: &[SiteParams],
    targets: &[usize],
    band: f64,
    max_subsets: usize,
    detection_sigma: f64,
    seed: u64,
) -> Result<Vec<(f64, f64, usize)>> {
    if shots.len() < 2 {
        return Err(Error::InsufficientData("need >= 2 shots".into()));
    }
    let mut rows = Vec::new();
    for (ti, &target) in targets.iter().enumerate() {
        let mut rng = substream(seed, ti as u64, target as u64, Purpose::Combinations);
        let combos = enumerate_combinations(sites, target, band, max_subsets, &mut rng)?;
        if combos.is_empty() {
            continue;
        }
        let mut sum_n = 0.0;
        let mut sum_v = 0.0;
        for c in &combos {
            let region: Vec<usize> = c.regions[0]
                .iter()
                .map(|idx| sites.iter().position(|s| s.site_index == *idx).unwrap())
                .collect();
            let samp = region_samples(shots, &region)?;
            let d: Vec<f64> = samp.iter().map(|s| s.diff).collect();
            sum_n += samp.iter().map(|s| s.total).sum::<f64>() / samp.len() as f64;
            sum_v += variance(&d) - 2.0 * region.len() as f64 * detection_sigma * detection_sigma;
        }
        let k = combos.len() as f64;
        rows.push((sum_n / k, sum_v / k, combos.len()));
    }
    Ok(rows)
}

/// Quadratic coefficient `beta2` of the size-resolved variance, bootstrapped
/// over shots.
pub fn beta2(
    shots: &[ShotRecord],
    sites: &[SiteParams],
    targets: &[usize],
    band: f64,
    max_subsets: usize,
    detection_sigma: f64,
    boot: &BootstrapConfig,
) -> Result<EstimateResult> {
    let idx: Vec<usize> = (0..shots.len()).collect();
    bootstrap(
        "beta2",
        &idx,
        |pick| {
            let picked: Vec<ShotRecord> = pick.iter().map(|&&i| shots[i].clone()).collect();
            let rows = variance_vs_size(&picked, sites, targets, band, max_subsets, detection_sigma, 0)?;
            let n: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let var: Vec<f64> = rows.iter().map(|r| r.1).collect();
            Ok(fit_quadratic_noise(&n, &var)?.beta2)
        },
        boot,
    )
}
