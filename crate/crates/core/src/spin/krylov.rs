//! Short-time Lanczos propagator for pulses with the nonlinearity switched on.
//!
//! The pulse Hamiltonian is gauged to the real symmetric tridiagonal
//! `H_r = rabi Jx + delta Jz + chi Jz^2` via
//! `exp(-iHt) = e^{-i phase Jz} exp(-i H_r t) e^{i phase Jz}`.

use num_complex::Complex64;

use super::oracle::HamiltonianParams;
use super::state::{ladder, CollectiveState};
use crate::error::{ensure_finite, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovOptions {
    /// Largest Krylov subspace dimension.
    pub max_dim: usize,
    /// Local error target per step, in state-norm units.
    pub tol: f64,
    /// Convergence is tested after every `check_every` Lanczos iterations.
    pub check_every: usize,
    /// Edge probability below which amplitudes are dropped from the working window.
    pub support_cutoff: f64,
    pub max_steps: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { max_dim: 30, tol: 1e-10, check_every: 5, support_cutoff: 1e-28, max_steps: 1_000_000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PulseStats {
    pub steps: usize,
    pub matvecs: usize,
    pub max_error_estimate: f64,
}

/// Evolves under `rabi (Jx cos phase + Jy sin phase) + delta Jz + chi Jz^2` for time `t`.
pub fn evolve_pulse(
    state: &CollectiveState,
    rabi: f64,
    phase: f64,
    delta: f64,
    chi: f64,
    t: f64,
) -> Result<CollectiveState> {
    let params = HamiltonianParams { rabi, phase, delta, chi };
    evolve_pulse_with(state, &params, t, &KrylovOptions::default()).map(|(s, _)| s)
}

pub fn evolve_pulse_with(
    state: &CollectiveState,
    params: &HamiltonianParams,
    t: f64,
    opts: &KrylovOptions,
) -> Result<(CollectiveState, PulseStats)> {
    for (name, x) in [
        ("rabi", params.rabi),
        ("phase", params.phase),
        ("delta", params.delta),
        ("chi", params.chi),
        ("t", t),
    ] {
        ensure_finite(name, x)?;
    }
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("negative pulse duration {t}")));
    }
    if params.rabi < 0.0 {
        return Err(Error::InvalidArgument(format!("negative Rabi frequency {}", params.rabi)));
    }
    if opts.max_dim < 2 || opts.check_every == 0 {
        return Err(Error::InvalidArgument("Krylov dimension must be >= 2".into()));
    }
    let mut out = state.clone();
    let mut stats = PulseStats::default();
    if t == 0.0 {
        return Ok((out, stats));
    }
    if params.rabi == 0.0 {
        out.apply_oat(params.chi, params.delta, t);
        return Ok((out, stats));
    }
    let n = state.n_atoms();
    let half = 0.5 * n as f64;
    let diag: Vec<f64> = (0..=n)
        .map(|k| {
            let m = k as f64 - half;
            params.delta * m + params.chi * m * m
        })
        .collect();
    let off: Vec<f64> = ladder(n).into_iter().map(|c| 0.5 * params.rabi * c).collect();
    let op = Tridiag { diag: &diag, off: &off };

    out.apply_z_phase(params.phase);
    propagate(&op, out.amplitudes_mut(), t, opts, &mut stats)?;
    out.apply_z_phase(-params.phase);
    out.renormalize();
    Ok((out, stats))
}

struct Tridiag<'a> {
    diag: &'a [f64],
    off: &'a [f64],
}

fn support(psi: &[Complex64], cutoff: f64) -> (usize, usize) {
    let mut acc = 0.0;
    let mut lo = 0;
    for (k, a) in psi.iter().enumerate() {
        acc += a.norm_sqr();
        if acc > cutoff {
            lo = k;
            break;
        }
    }
    acc = 0.0;
    let mut hi = psi.len() - 1;
    for (k, a) in psi.iter().enumerate().rev() {
        acc += a.norm_sqr();
        if acc > cutoff {
            hi = k;
            break;
        }
    }
    (lo, hi.max(lo))
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `exp(-i T dt) e_1` for the projected tridiagonal `T`, by Taylor series on
/// substeps with `|T h| <= 0.5`. Components far from `e_1` are built up from
/// zero, so small entries keep their relative accuracy.
fn exp_e1(alpha: &[f64], beta: &[f64], dt: f64) -> Vec<Complex64> {
    let m = alpha.len();
    let tnorm = (0..m)
        .map(|i| {
            alpha[i].abs()
                + if i > 0 { beta[i - 1] } else { 0.0 }
                + if i + 1 < m { beta[i] } else { 0.0 }
        })
        .fold(0.0, f64::max);
    let sub = ((tnorm * dt.abs() / 0.5).ceil() as usize).max(1);
    let h = dt / sub as f64;
    let zero = Complex64::new(0.0, 0.0);
    let mut y = vec![zero; m];
    y[0] = Complex64::new(1.0, 0.0);
    let mut term = vec![zero; m];
    let mut next = vec![zero; m];
    for _ in 0..sub {
        term.copy_from_slice(&y);
        for k in 1..60 {
            let c = Complex64::new(0.0, -h / k as f64);
            for i in 0..m {
                let mut acc = term[i] * alpha[i];
                if i > 0 {
                    acc += term[i - 1] * beta[i - 1];
                }
                if i + 1 < m {
                    acc += term[i + 1] * beta[i];
                }
                next[i] = acc * c;
            }
            std::mem::swap(&mut term, &mut next);
            let mut big = 0.0f64;
            for (yi, ti) in y.iter_mut().zip(&term) {
                *yi += ti;
                big = big.max(ti.norm());
            }
            if big < 1e-20 {
                break;
            }
        }
    }
    y
}

fn projected_norm(alpha: &[f64], beta: &[f64]) -> f64 {
    alpha.iter().map(|a| a.abs()).fold(0.0, f64::max) + 2.0 * beta.iter().fold(0.0, |s: f64, b| s.max(*b))
}

/// Spectral data of the projected tridiagonal, reused for every trial step.
struct SmallExp<'a> {
    alpha: &'a [f64],
    beta: &'a [f64],
    vals: Vec<f64>,
    /// column-major eigenvectors, `vecs[i * m + r]` is row `r` of vector `i`
    vecs: Vec<f64>,
}

impl<'a> SmallExp<'a> {
    fn new(alpha: &'a [f64], beta: &'a [f64]) -> Self {
        let (vals, vecs) = tridiagonal_eigen(alpha, beta);
        Self { alpha, beta, vals, vecs }
    }

    fn vecs_at(&self, r: usize, i: usize) -> f64 {
        self.vecs[i * self.vals.len() + r]
    }

    fn vector(&self, dt: f64) -> Vec<Complex64> {
        let m = self.vals.len();
        let w: Vec<Complex64> =
            (0..m).map(|i| Complex64::from_polar(self.vecs_at(0, i), -self.vals[i] * dt)).collect();
        (0..m).map(|r| (0..m).map(|i| w[i] * self.vecs_at(r, i)).sum()).collect()
    }

    /// `beta_m |(exp(-i T dt) e_1)_m|`. The spectral formula cannot resolve
    /// values below roughly `eps * beta_m`; near that floor the series
    /// evaluation is used instead.
    fn error(&self, beta_last: f64, dt: f64, tol: f64) -> f64 {
        let m = self.vals.len();
        let w: Complex64 = (0..m)
            .map(|i| Complex64::from_polar(self.vecs_at(0, i) * self.vecs_at(m - 1, i), -self.vals[i] * dt))
            .sum();
        let e = beta_last * w.norm();
        let floor = 4.0 * f64::EPSILON * beta_last;
        if e > tol && e < 100.0 * floor {
            beta_last * exp_e1(self.alpha, self.beta, dt)[m - 1].norm()
        } else {
            e
        }
    }
}

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL
/// iterations with Wilkinson-type shifts. Eigenvectors come back column-major.
fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                // rotate columns i and i+1 of the eigenvector matrix
                let (ci, ci1) = (i * n, (i + 1) * n);
                for k in 0..n {
                    let zk1 = z[ci1 + k];
                    let zk = z[ci + k];
                    z[ci1 + k] = s * zk + c * zk1;
                    z[ci + k] = c * zk - s * zk1;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    (d, z)
}

fn propagate(
    op: &Tridiag,
    psi: &mut [Complex64],
    t_total: f64,
    opts: &KrylovOptions,
    stats: &mut PulseStats,
) -> Result<()> {
    let dim = psi.len();
    let mmax = opts.max_dim.min(dim);
    let mut t_done = 0.0;
    let hnorm = (0..dim)
        .map(|k| {
            op.diag[k].abs()
                + if k > 0 { op.off[k - 1] } else { 0.0 }
                + if k + 1 < dim { op.off[k] } else { 0.0 }
        })
        .fold(0.0, f64::max);
    let mut dt_guess = if hnorm > 0.0 { t_total.min(0.4 * mmax as f64 / hnorm) } else { t_total };
    let zero = Complex64::new(0.0, 0.0);
    let mut basis: Vec<Complex64> = Vec::new();
    let mut alpha = Vec::with_capacity(mmax);
    let mut beta = Vec::with_capacity(mmax);

    while t_total - t_done > 1e-15 * t_total {
        if stats.steps >= opts.max_steps {
            return Err(Error::NumericalFailure(format!(
                "Krylov propagation exceeded {} steps at t = {t_done:.3e} of {t_total:.3e}",
                opts.max_steps
            )));
        }
        let t_left = t_total - t_done;
        let (lo_s, hi_s) = support(psi, opts.support_cutoff);
        let lo = lo_s.saturating_sub(mmax);
        let hi = (hi_s + mmax).min(dim - 1);
        let w = hi - lo + 1;
        let d = &op.diag[lo..=hi];
        let e = &op.off[lo..hi];

        let v0 = &psi[lo..=hi];
        let nrm = norm(v0);
        if basis.len() < (mmax + 1) * w {
            basis.resize((mmax + 1) * w, zero);
        }
        alpha.clear();
        beta.clear();
        for (b, x) in basis[..w].iter_mut().zip(v0) {
            *b = x / nrm;
        }

        let mut accepted: Option<(Vec<Complex64>, f64)> = None;
        for j in 0..mmax {
            let (done, rest) = basis.split_at_mut((j + 1) * w);
            let q = &done[j * w..];
            let r = &mut rest[..w];
            let b_prev = if j > 0 { beta[j - 1] } else { 0.0 };
            let mut a = 0.0;
            for i in 0..w {
                let mut acc = q[i] * d[i];
                if i > 0 {
                    acc += q[i - 1] * e[i - 1];
                }
                if i + 1 < w {
                    acc += q[i + 1] * e[i];
                }
                if j > 0 {
                    acc -= done[(j - 1) * w + i] * b_prev;
                }
                a += q[i].re * acc.re + q[i].im * acc.im;
                r[i] = acc;
            }
            stats.matvecs += 1;
            let mut b2 = 0.0;
            for (ri, qi) in r.iter_mut().zip(q) {
                *ri -= qi * a;
                b2 += ri.norm_sqr();
            }
            alpha.push(a);
            let b = b2.sqrt();
            let scale = alpha.iter().fold(1.0f64, |s, x| s.max(x.abs()));
            if b <= 1e-13 * scale {
                // invariant subspace: the projection is exact
                accepted = Some((exp_e1(&alpha, &beta, t_left), t_left));
                break;
            }
            let inv = 1.0 / b;
            for ri in r.iter_mut() {
                *ri *= inv;
            }
            let m = j + 1;
            let last = m == mmax;
            if m % opts.check_every == 0 && !last {
                // only worth testing when the subspace can plausibly resolve the rest
                if projected_norm(&alpha, &beta) * t_left <= 0.5 * m as f64 {
                    let small = SmallExp::new(&alpha, &beta);
                    let err = small.error(b, t_left, opts.tol);
                    if err <= opts.tol {
                        stats.max_error_estimate = stats.max_error_estimate.max(err);
                        accepted = Some((small.vector(t_left), t_left));
                        break;
                    }
                }
            }
            if last {
                let order = (m - 1) as f64;
                let small = SmallExp::new(&alpha, &beta);
                let mut dt = dt_guess.min(t_left);
                let mut err = small.error(b, dt, opts.tol);
                let mut tries = 0;
                while err > opts.tol {
                    let shrink = (0.9 * (opts.tol / err).powf(1.0 / order)).clamp(0.05, 0.9);
                    dt *= shrink;
                    tries += 1;
                    if dt < 1e-14 * t_total || tries > 50 {
                        return Err(Error::NumericalFailure(format!(
                            "Krylov step collapsed: window {w}, subspace {m}, \
                             t = {t_done:.3e} of {t_total:.3e}, error estimate {err:.3e}"
                        )));
                    }
                    err = small.error(b, dt, opts.tol);
                }
                if tries == 0 && dt < t_left {
                    let grow = if err > 0.0 {
                        (0.9 * (opts.tol / err).powf(1.0 / order)).clamp(1.0, 2.0)
                    } else {
                        2.0
                    };
                    let trial = (dt * grow).min(t_left);
                    if trial > dt {
                        let et = small.error(b, trial, opts.tol);
                        if et <= opts.tol {
                            dt = trial;
                            err = et;
                        }
                    }
                }
                stats.max_error_estimate = stats.max_error_estimate.max(err);
                accepted = Some((small.vector(dt), dt));
                break;
            }
            beta.push(b);
        }

        let (y, dt) = accepted.expect("Lanczos loop always accepts or errors");
        for x in psi.iter_mut() {
            *x = zero;
        }
        let target = &mut psi[lo..=hi];
        for (yj, qj) in y.iter().zip(basis[..y.len() * w].chunks_exact(w)) {
            let c = yj * nrm;
            for (p, q) in target.iter_mut().zip(qj) {
                *p += c * q;
            }
        }
        t_done += dt;
        dt_guess = dt;
        stats.steps += 1;
    }
    Ok(())
}
