use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use super::state::{ladder, CollectiveState};
use crate::error::{ensure_finite, Result};

/// Rotation by `angle` about the equatorial axis `(cos axis_phase, sin axis_phase, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationSpec {
    pub angle: f64,
    pub axis_phase: f64,
}

impl RotationSpec {
    pub fn new(angle: f64, axis_phase: f64) -> Self {
        Self { angle, axis_phase }
    }
}

/// Eigenvectors of `Jx` in the Dicke basis (Wigner small-d at pi/2), row-major:
/// `v[k * dim + j]` is component `k` of the eigenvector with eigenvalue `j - N/2`.
pub(crate) struct JxBasis {
    dim: usize,
    v: Vec<f64>,
}

const CACHE_BYTES: usize = 1 << 30;

fn cache() -> &'static Mutex<HashMap<usize, Arc<JxBasis>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<JxBasis>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub(crate) fn jx_basis(n: usize) -> Arc<JxBasis> {
    if let Some(b) = cache().lock().unwrap().get(&n) {
        return Arc::clone(b);
    }
    let basis = Arc::new(JxBasis::build(n));
    let mut guard = cache().lock().unwrap();
    let used: usize = guard.values().map(|b| b.v.len() * 8).sum();
    if used + basis.v.len() * 8 > CACHE_BYTES {
        guard.clear();
    }
    Arc::clone(guard.entry(n).or_insert(basis))
}

impl JxBasis {
    fn build(n: usize) -> Self {
        let dim = n + 1;
        let c = ladder(n);
        let mut v = vec![0.0; dim * dim];
        let mut col = vec![0.0; dim];
        for j in 0..dim {
            let mu = j as f64 - 0.5 * n as f64;
            eigenvector(&c, mu, &mut col);
            for k in 0..dim {
                v[k * dim + j] = col[k];
            }
        }
        Self { dim, v }
    }

    /// `e^{-i theta Jx} psi = V diag(e^{-i theta mu}) V^T psi`
    fn apply(&self, theta: f64, psi: &mut [Complex64]) {
        let dim = self.dim;
        let half = 0.5 * (dim - 1) as f64;
        let mut w = vec![Complex64::new(0.0, 0.0); dim];
        for (k, p) in psi.iter().enumerate() {
            if p.re == 0.0 && p.im == 0.0 {
                continue;
            }
            let row = &self.v[k * dim..(k + 1) * dim];
            for (wj, &vkj) in w.iter_mut().zip(row) {
                wj.re += vkj * p.re;
                wj.im += vkj * p.im;
            }
        }
        for (j, wj) in w.iter_mut().enumerate() {
            *wj *= Complex64::from_polar(1.0, -theta * (j as f64 - half));
        }
        for (k, p) in psi.iter_mut().enumerate() {
            let row = &self.v[k * dim..(k + 1) * dim];
            let (mut re, mut im) = (0.0, 0.0);
            for (wj, &vkj) in w.iter().zip(row) {
                re += vkj * wj.re;
                im += vkj * wj.im;
            }
            *p = Complex64::new(re, im);
        }
    }
}

/// Normalized solution of `(c_{k-1} v_{k-1} + c_k v_{k+1}) / 2 = mu v_k`.
///
/// Runs the three-term recursion inward from both edges, where it is stable,
/// and joins the two halves by least squares on three points around the middle.
fn eigenvector(c: &[f64], mu: f64, out: &mut [f64]) {
    let dim = out.len();
    let n = dim - 1;
    const BIG: f64 = 1e150;
    if n == 0 {
        out[0] = 1.0;
        return;
    }
    let forward_to = |stop: usize, out: &mut [f64]| {
        out[0] = 1.0;
        if stop >= 1 {
            out[1] = 2.0 * mu / c[0];
        }
        for k in 1..stop {
            let next = (2.0 * mu * out[k] - c[k - 1] * out[k - 1]) / c[k];
            out[k + 1] = next;
            if next.abs() > BIG {
                for x in out[..=k + 1].iter_mut() {
                    *x /= BIG;
                }
            }
        }
    };
    if n < 8 {
        forward_to(n, out);
    } else {
        let mid = n / 2;
        let mut fwd = vec![0.0; mid + 2];
        forward_to(mid + 1, &mut fwd);
        // backward: b_N = 1, b_{k-1} = (2 mu b_k - c_k b_{k+1}) / c_{k-1}
        let mut bwd = vec![0.0; dim];
        bwd[n] = 1.0;
        bwd[n - 1] = 2.0 * mu / c[n - 1];
        let mut k = n - 1;
        while k >= mid {
            let prev = (2.0 * mu * bwd[k] - c[k] * bwd[k + 1]) / c[k - 1];
            bwd[k - 1] = prev;
            if prev.abs() > BIG {
                for x in bwd[k - 1..].iter_mut() {
                    *x /= BIG;
                }
            }
            k -= 1;
        }
        let (mut fb, mut bb) = (0.0, 0.0);
        for k in mid - 1..=mid + 1 {
            fb += fwd[k] * bwd[k];
            bb += bwd[k] * bwd[k];
        }
        let s = fb / bb;
        out[..=mid].copy_from_slice(&fwd[..=mid]);
        for k in mid + 1..dim {
            out[k] = s * bwd[k];
        }
    }
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in out.iter_mut() {
        *x /= norm;
    }
}

impl CollectiveState {
    /// In-place `exp(-i angle (Jx cos phase + Jy sin phase))`.
    pub fn apply_rotation(&mut self, angle: f64, axis_phase: f64) {
        if angle == 0.0 {
            return;
        }
        let basis = jx_basis(self.n_atoms());
        self.apply_z_phase(axis_phase);
        basis.apply(angle, self.amplitudes_mut());
        self.apply_z_phase(-axis_phase);
    }
}

/// `exp(-i theta (Jx cos phi + Jy sin phi))` applied to `state`.
pub fn rotate(state: &CollectiveState, spec: RotationSpec) -> Result<CollectiveState> {
    ensure_finite("rotation angle", spec.angle)?;
    ensure_finite("rotation axis phase", spec.axis_phase)?;
    let mut out = state.clone();
    out.apply_rotation(spec.angle, spec.axis_phase);
    Ok(out)
}
