use num_complex::Complex64;
use rand::Rng;

use crate::error::{ensure_finite, Error, Result};

/// Normalized amplitude vector over the `N + 1` Dicke states of one site.
#[derive(Clone, Debug, PartialEq)]
pub struct CollectiveState {
    n_atoms: usize,
    amps: Vec<Complex64>,
}

/// `sqrt((k+1)(N-k))` for `k = 0..N-1`.
pub fn ladder(n: usize) -> Vec<f64> {
    (0..n).map(|k| (((k + 1) * (n - k)) as f64).sqrt()).collect()
}

impl CollectiveState {
    /// Wraps an amplitude vector, checking length and normalization to 1e-8.
    pub fn from_amplitudes(n_atoms: usize, amps: Vec<Complex64>) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::InvalidArgument("n_atoms must be >= 1".into()));
        }
        if amps.len() != n_atoms + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} amplitudes, got {}",
                n_atoms + 1,
                amps.len()
            )));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!("state norm {norm} is not 1")));
        }
        Ok(Self { n_atoms, amps })
    }

    pub(crate) fn from_raw(n_atoms: usize, amps: Vec<Complex64>) -> Self {
        debug_assert_eq!(amps.len(), n_atoms + 1);
        Self { n_atoms, amps }
    }

    /// Fock state with `n_b` atoms in `|b>`.
    pub fn fock(n_atoms: usize, n_b: usize) -> Result<Self> {
        if n_atoms == 0 || n_b > n_atoms {
            return Err(Error::InvalidArgument(format!(
                "no Fock state with n_b = {n_b} for N = {n_atoms}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); n_atoms + 1];
        amps[n_b] = Complex64::new(1.0, 0.0);
        Ok(Self { n_atoms, amps })
    }

    pub fn all_a(n_atoms: usize) -> Result<Self> {
        Self::fock(n_atoms, 0)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    /// `m = k - N/2`
    pub fn m(&self, k: usize) -> f64 {
        k as f64 - 0.5 * self.n_atoms as f64
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub(crate) fn renormalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            let inv = 1.0 / n;
            for a in &mut self.amps {
                *a *= inv;
            }
        }
    }

    /// `|<self|other>|`, insensitive to global phase.
    pub fn overlap_abs(&self, other: &CollectiveState) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm()
    }

    /// Largest amplitude difference after removing the global phase that
    /// best aligns `other` onto `self`.
    pub fn distance_up_to_phase(&self, other: &CollectiveState) -> f64 {
        assert_eq!(self.dim(), other.dim());
        let ip: Complex64 = other.amps.iter().zip(&self.amps).map(|(b, a)| b.conj() * a).sum();
        let phase = if ip.norm() > 0.0 { ip / ip.norm() } else { Complex64::new(1.0, 0.0) };
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b * phase).norm())
            .fold(0.0, f64::max)
    }

    /// In-place `exp(-i (chi m^2 + delta m) t)`.
    pub fn apply_oat(&mut self, chi: f64, delta: f64, t: f64) {
        if t == 0.0 || (chi == 0.0 && delta == 0.0) {
            return;
        }
        let half = 0.5 * self.n_atoms as f64;
        for (k, a) in self.amps.iter_mut().enumerate() {
            let m = k as f64 - half;
            let arg = -(chi * m * m + delta * m) * t;
            *a *= Complex64::from_polar(1.0, arg);
        }
    }

    /// In-place `exp(i angle Jz)`, i.e. a z rotation by `-angle`.
    pub(crate) fn apply_z_phase(&mut self, angle: f64) {
        if angle == 0.0 {
            return;
        }
        let half = 0.5 * self.n_atoms as f64;
        for (k, a) in self.amps.iter_mut().enumerate() {
            *a *= Complex64::from_polar(1.0, angle * (k as f64 - half));
        }
    }
}

/// Coherent spin state of `n` atoms pointing along polar angle `polar`
/// (measured from the all-`|a>` pole) and azimuth `azimuth`.
///
/// The Bloch vector is `(sin p cos az, sin p sin az, -cos p)`.
pub fn make_css(n: usize, polar: f64, azimuth: f64) -> Result<CollectiveState> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    ensure_finite("polar", polar)?;
    ensure_finite("azimuth", azimuth)?;
    let c = (0.5 * polar).cos();
    let s = (0.5 * polar).sin();
    let (lc, ls) = (c.abs().ln(), s.abs().ln());
    let (sc, ss) = (c.signum(), s.signum());
    let nf = n as f64;
    // log binomial via running sum
    let mut log_binom = 0.0;
    let mut amps = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            log_binom += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let kf = k as f64;
        let mag = if (c == 0.0 && k < n) || (s == 0.0 && k > 0) {
            0.0
        } else {
            let lc_term = if n - k > 0 { (nf - kf) * lc } else { 0.0 };
            let ls_term = if k > 0 { kf * ls } else { 0.0 };
            (0.5 * log_binom + lc_term + ls_term).exp()
        };
        let sign = (if (n - k) % 2 == 1 { sc } else { 1.0 }) * (if k % 2 == 1 { ss } else { 1.0 });
        amps.push(Complex64::from_polar(sign * mag, -kf * azimuth));
    }
    let mut st = CollectiveState::from_raw(n, amps);
    st.renormalize();
    Ok(st)
}

/// `amp_k <- amp_k exp(-i (chi m^2 + delta m) t)`.
pub fn evolve_oat(state: &CollectiveState, chi: f64, delta: f64, t: f64) -> Result<CollectiveState> {
    ensure_finite("chi", chi)?;
    ensure_finite("delta", delta)?;
    ensure_finite("t", t)?;
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("negative evolution time {t}")));
    }
    let mut out = state.clone();
    out.apply_oat(chi, delta, t);
    Ok(out)
}

/// Number of atoms found in `|b>` for one projective measurement.
pub fn sample_n_b<R: Rng + ?Sized>(state: &CollectiveState, rng: &mut R) -> usize {
    let mut cdf = Vec::with_capacity(state.dim());
    let mut acc = 0.0;
    for a in state.amplitudes() {
        acc += a.norm_sqr();
        cdf.push(acc);
    }
    let u = rng.random::<f64>() * acc;
    let k = cdf.partition_point(|&c| c <= u);
    let mut k = k.min(state.n_atoms());
    // skip zero-probability states that a rounding tie could land on
    while k > 0 && state.amplitudes()[k].norm_sqr() == 0.0 && cdf[k - 1] > u {
        k -= 1;
    }
    k
}

/// Projective measurement of `Jz`; returns `m = n_b - N/2`.
pub fn sample_jz<R: Rng + ?Sized>(state: &CollectiveState, rng: &mut R) -> f64 {
    state.m(sample_n_b(state, rng))
}
