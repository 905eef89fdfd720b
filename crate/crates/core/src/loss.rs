//! Quantum-jump trajectories for atom loss during twisting.
//!
//! Channels: one-body loss at rate `1/feshbach_timescale` on both modes and
//! two-body relaxation removing `|b>` pairs. In the Dicke ladder the jump
//! operators map `|N, k>` to `|N-1, k>` (lose an `a`), `|N-1, k-1>` (lose a
//! `b`) or `|N-2, k-2>` (lose a `b` pair), and the no-jump drift is diagonal,
//! so waiting times are sampled exactly instead of by time stepping.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SiteParams;
use crate::rng::{substream, Purpose};
use crate::spin::CollectiveState;
use crate::units::to_db;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// s, decay scale of the initial `|b>` population through pair loss
    pub two_body_relax_timescale: f64,
    /// s, one-body decay of each mode
    pub feshbach_timescale: f64,
    pub enabled: bool,
    pub n_trajectories: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { two_body_relax_timescale: 0.200, feshbach_timescale: 0.110, enabled: false, n_trajectories: 500 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("two_body_relax_timescale", self.two_body_relax_timescale),
            ("feshbach_timescale", self.feshbach_timescale),
        ] {
            if x.is_nan() || x <= 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {x}")));
            }
        }
        Ok(())
    }

    /// Per-atom one-body rate, 1/s. An infinite timescale disables it.
    pub fn one_body_rate(&self) -> f64 {
        1.0 / self.feshbach_timescale
    }

    /// Pair rate `kappa` in `L = sqrt(kappa) b b`, set so that the initial
    /// `N_b` decay rate of an equal superposition of `n0` atoms is
    /// `1/two_body_relax_timescale`: `2 kappa nb (nb - 1) = nb / tau`.
    pub fn pair_rate(&self, n0: usize) -> f64 {
        let nb = 0.5 * n0 as f64;
        if nb <= 1.0 {
            return 0.0;
        }
        1.0 / (2.0 * self.two_body_relax_timescale * (nb - 1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    OneBodyA,
    OneBodyB,
    PairB,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    /// s, from the start of the segment
    pub time: f64,
    pub channel: Channel,
    pub n_after: usize,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub state: CollectiveState,
    pub jumps: Vec<Jump>,
}

struct Rates {
    gamma1: f64,
    kappa: f64,
}

impl Rates {
    fn decay(&self, n: usize, k: usize) -> f64 {
        let kf = k as f64;
        self.gamma1 * n as f64 + self.kappa * kf * (kf - 1.0)
    }
}

/// `ln sum p_k exp(-g_k tau)` and its derivative.
fn log_survival(p: &[f64], g: &[f64], gmin: f64, tau: f64) -> (f64, f64) {
    let mut s = 0.0;
    let mut d = 0.0;
    for (&pk, &gk) in p.iter().zip(g) {
        let w = pk * (-(gk - gmin) * tau).exp();
        s += w;
        d += w * gk;
    }
    (s.ln() - gmin * tau, -d / s)
}

fn drift(amps: &mut [Complex64], n: usize, chi: f64, delta: f64, g: &[f64], t: f64) {
    let half = 0.5 * n as f64;
    for (k, a) in amps.iter_mut().enumerate() {
        let m = k as f64 - half;
        *a *= Complex64::from_polar((-0.5 * g[k] * t).exp(), -(chi * m * m + delta * m) * t);
    }
}

/// Twisting under `chi(N) Jz^2 + (delta(N) + extra_detuning) Jz` for time `t`
/// with stochastic loss. `n0` fixes the pair-rate calibration.
pub fn oat_with_loss<R: Rng + ?Sized>(
    state: &CollectiveState,
    site: &SiteParams,
    config: &LossConfig,
    n0: usize,
    extra_detuning: f64,
    t: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    config.validate()?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    let rates = Rates { gamma1: config.one_body_rate(), kappa: config.pair_rate(n0) };
    let mut n = state.n_atoms();
    let mut amps = state.amplitudes().to_vec();
    let mut jumps = Vec::new();
    let mut elapsed = 0.0;
    let mut g = Vec::with_capacity(n + 1);
    let mut p = Vec::with_capacity(n + 1);
    loop {
        let left = t - elapsed;
        let chi = site.chi_at(n);
        let delta = site.delta_at(n) + extra_detuning;
        g.clear();
        g.extend((0..=n).map(|k| rates.decay(n, k)));
        p.clear();
        p.extend(amps.iter().map(|a| a.norm_sqr()));
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        let gmax = g.iter().copied().fold(0.0, f64::max);
        let r: f64 = rng.random::<f64>();
        let target = r.max(f64::MIN_POSITIVE).ln();
        if left <= 0.0 || gmax == 0.0 || log_survival(&p, &g, gmin, left).0 >= target {
            drift(&mut amps, n, chi, delta, &g, left);
            break;
        }
        // Newton from the left converges monotonically on this convex curve
        let mut tau = 0.0;
        for _ in 0..200 {
            let (f, df) = log_survival(&p, &g, gmin, tau);
            let step = (f - target) / df;
            tau -= step;
            if step.abs() <= 1e-14 * tau.max(1e-12) {
                break;
            }
        }
        let tau = tau.clamp(0.0, left);
        drift(&mut amps, n, chi, delta, &g, tau);
        elapsed += tau;

        let w_a = rates.gamma1 * amps.iter().enumerate().map(|(k, a)| a.norm_sqr() * (n - k) as f64).sum::<f64>();
        let w_b = rates.gamma1 * amps.iter().enumerate().map(|(k, a)| a.norm_sqr() * k as f64).sum::<f64>();
        let w_p = rates.kappa
            * amps.iter().enumerate().map(|(k, a)| a.norm_sqr() * (k * k.saturating_sub(1)) as f64).sum::<f64>();
        let tot = w_a + w_b + w_p;
        if !(tot > 0.0) {
            return Err(Error::NumericalFailure(format!("no open loss channel at N = {n}")));
        }
        let u = rng.random::<f64>() * tot;
        let channel = if u < w_a {
            Channel::OneBodyA
        } else if u < w_a + w_b || w_p == 0.0 {
            Channel::OneBodyB
        } else {
            Channel::PairB
        };
        let next: Vec<Complex64> = match channel {
            Channel::OneBodyA => (0..n).map(|k| amps[k] * ((n - k) as f64).sqrt()).collect(),
            Channel::OneBodyB => (1..=n).map(|k| amps[k] * (k as f64).sqrt()).collect(),
            Channel::PairB => (2..=n).map(|k| amps[k] * ((k * (k - 1)) as f64).sqrt()).collect(),
        };
        n -= match channel {
            Channel::PairB => 2,
            _ => 1,
        };
        amps = next;
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::NumericalFailure("jump produced a null state".into()));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        jumps.push(Jump { time: elapsed, channel, n_after: n });
    }
    let mut out = CollectiveState::from_raw(n, amps);
    out.renormalize();
    Ok(Trajectory { state: out, jumps })
}

/// One row of a loss scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    /// s
    pub t: f64,
    /// linear `N Var_min / |<J>|^2` of the trajectory ensemble
    pub xi2_r: f64,
    pub squeezing_db: f64,
    /// `|<J>|`
    pub mean_spin: f64,
    pub n_mean: f64,
    /// batch-mean standard error of `squeezing_db`
    pub stderr: f64,
}

#[derive(Clone, Default)]
struct Accum {
    n: f64,
    mean: [f64; 3],
    second: [[f64; 3]; 3],
    count: usize,
}

impl Accum {
    fn add(&mut self, st: &CollectiveState) {
        let m = crate::spin::moments(st);
        self.n += st.n_atoms() as f64;
        for i in 0..3 {
            self.mean[i] += m.mean[i];
            for j in 0..3 {
                self.second[i][j] += m.cov[i][j] + m.mean[i] * m.mean[j];
            }
        }
        self.count += 1;
    }

    fn merge(&mut self, o: &Accum) {
        self.n += o.n;
        for i in 0..3 {
            self.mean[i] += o.mean[i];
            for j in 0..3 {
                self.second[i][j] += o.second[i][j];
            }
        }
        self.count += o.count;
    }

    /// `(xi2, |<J>|, N mean)`
    fn squeezing(&self) -> (f64, f64, f64) {
        let c = self.count as f64;
        let mean = self.mean.map(|x| x / c);
        let mut cov = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] = self.second[i][j] / c - mean[i] * mean[j];
            }
        }
        let n = self.n / c;
        let sm = crate::spin::SpinMoments { n_atoms: n.round() as usize, mean, cov };
        let len = sm.mean_length();
        (n * sm.min_variance() / (len * len), len, n)
    }
}

/// Trajectory-averaged twisting with loss from `initial`, sampled at the
/// increasing times `times`.
pub fn evolve_with_loss(
    initial: &CollectiveState,
    site: &SiteParams,
    config: &LossConfig,
    times: &[f64],
    n_trajectories: usize,
    seed: u64,
) -> Result<Vec<LossPoint>> {
    if n_trajectories == 0 {
        return Err(Error::InvalidArgument("n_trajectories must be >= 1".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidArgument("times must be finite, >= 0 and non-decreasing".into()));
    }
    let n0 = initial.n_atoms();
    let per_traj: Vec<Vec<Accum>> = (0..n_trajectories)
        .into_par_iter()
        .map(|j| -> Result<Vec<Accum>> {
            let mut rng = substream(seed, j as u64, site.site_index as u64, Purpose::Loss);
            let mut st = initial.clone();
            let mut now = 0.0;
            let mut out = Vec::with_capacity(times.len());
            for &t in times {
                if config.enabled {
                    st = oat_with_loss(&st, site, config, n0, 0.0, t - now, &mut rng)?.state;
                } else {
                    st.apply_oat(site.chi_at(st.n_atoms()), site.delta_at(st.n_atoms()), t - now);
                }
                now = t;
                let mut a = Accum::default();
                a.add(&st);
                out.push(a);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let n_batches = n_trajectories.clamp(1, 10);
    let mut rows = Vec::with_capacity(times.len());
    for (ti, &t) in times.iter().enumerate() {
        let mut total = Accum::default();
        let mut batches = vec![Accum::default(); n_batches];
        for (j, tr) in per_traj.iter().enumerate() {
            total.merge(&tr[ti]);
            batches[j * n_batches / n_trajectories].merge(&tr[ti]);
        }
        let (xi2, len, n_mean) = total.squeezing();
        let stderr = if n_batches > 1 {
            let dbs: Vec<f64> = batches.iter().map(|b| to_db(b.squeezing().0)).collect();
            let mu = dbs.iter().sum::<f64>() / n_batches as f64;
            let var = dbs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
            (var / n_batches as f64).sqrt()
        } else {
            0.0
        };
        rows.push(LossPoint { t, xi2_r: xi2, squeezing_db: to_db(xi2), mean_spin: len, n_mean, stderr });
    }
    Ok(rows)
}
