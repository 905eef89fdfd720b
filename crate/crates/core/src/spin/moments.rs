use num_complex::Complex64;

use super::state::{ladder, CollectiveState};

/// First and second moments of the collective spin.
///
/// `cov[i][j]` is the symmetrized covariance `<{J_i, J_j}>/2 - <J_i><J_j>`
/// with indices 0, 1, 2 for x, y, z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinMoments {
    pub n_atoms: usize,
    pub mean: [f64; 3],
    pub cov: [[f64; 3]; 3],
}

/// O(N) moments from the ladder matrix elements.
pub fn moments(state: &CollectiveState) -> SpinMoments {
    let n = state.n_atoms();
    let a = state.amplitudes();
    let c = ladder(n);
    let half = 0.5 * n as f64;
    let mut jz = 0.0;
    let mut jz2 = 0.0;
    let mut jp = Complex64::new(0.0, 0.0);
    let mut jp2 = Complex64::new(0.0, 0.0);
    let mut jp_jz = Complex64::new(0.0, 0.0);
    let mut sym = 0.0;
    for k in 0..=n {
        let p = a[k].norm_sqr();
        let m = k as f64 - half;
        jz += m * p;
        jz2 += m * m * p;
        let up = if k < n { c[k] * c[k] } else { 0.0 };
        let down = if k > 0 { c[k - 1] * c[k - 1] } else { 0.0 };
        sym += (up + down) * p;
        if k < n {
            let t = a[k + 1].conj() * a[k] * c[k];
            jp += t;
            jp_jz += t * (2.0 * m + 1.0);
        }
        if k + 1 < n {
            jp2 += a[k + 2].conj() * a[k] * (c[k] * c[k + 1]);
        }
    }
    let mean = [jp.re, jp.im, jz];
    let jx2 = 0.25 * (2.0 * jp2.re + sym);
    let jy2 = 0.25 * (-2.0 * jp2.re + sym);
    let jxy = 0.5 * jp2.im;
    let jxz = 0.5 * jp_jz.re;
    let jyz = 0.5 * jp_jz.im;
    let second = [[jx2, jxy, jxz], [jxy, jy2, jyz], [jxz, jyz, jz2]];
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            cov[i][j] = second[i][j] - mean[i] * mean[j];
        }
    }
    SpinMoments { n_atoms: n, mean, cov }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalized(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot3(a, a).sqrt();
    (n > 1e-12).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

impl SpinMoments {
    pub fn mean_jx(&self) -> f64 {
        self.mean[0]
    }

    pub fn mean_jy(&self) -> f64 {
        self.mean[1]
    }

    pub fn mean_jz(&self) -> f64 {
        self.mean[2]
    }

    pub fn mean_length(&self) -> f64 {
        dot3(self.mean, self.mean).sqrt()
    }

    /// `Var(J . u)` for a unit vector `u`.
    pub fn variance(&self, u: [f64; 3]) -> f64 {
        let mut v = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                v += u[i] * self.cov[i][j] * u[j];
            }
        }
        v
    }

    pub fn var_jz(&self) -> f64 {
        self.cov[2][2]
    }

    /// Mean-spin direction `n` and the orthonormal pair `(e1, e2)` spanning
    /// the plane orthogonal to it. `e1` is the projection of `z` (or of `x`
    /// when the mean spin is along `z`) and `e2 = e1 x n`.
    ///
    /// A vanishing mean spin is treated as pointing along `y`.
    pub fn frame(&self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let n = normalized(self.mean).unwrap_or([0.0, 1.0, 0.0]);
        let project = |v: [f64; 3]| {
            let d = dot3(v, n);
            normalized([v[0] - d * n[0], v[1] - d * n[1], v[2] - d * n[2]])
        };
        let e1 = project([0.0, 0.0, 1.0]).or_else(|| project([1.0, 0.0, 0.0])).unwrap();
        (n, e1, cross(e1, n))
    }

    /// Variance of `Jz` after rotating the state by `alpha` about its mean spin.
    pub fn var_along(&self, alpha: f64) -> f64 {
        let (_, e1, e2) = self.frame();
        let (s, c) = alpha.sin_cos();
        self.variance([c * e1[0] + s * e2[0], c * e1[1] + s * e2[1], c * e1[2] + s * e2[2]])
    }

    /// Angle in `[0, pi)` minimizing [`var_along`](Self::var_along), from a
    /// 1e-3 rad grid refined by golden-section search. Returns 0 when the
    /// variance is isotropic in the plane.
    pub fn optimal_angle(&self) -> f64 {
        let f = |a: f64| self.var_along(a);
        let step = 1e-3;
        let count = (std::f64::consts::PI / step).ceil() as usize;
        let (mut best, mut best_v) = (0.0, f(0.0));
        let mut worst_v = best_v;
        for i in 1..count {
            let a = i as f64 * step;
            let v = f(a);
            if v < best_v {
                best = a;
                best_v = v;
            }
            worst_v = worst_v.max(v);
        }
        let scale = worst_v.abs().max(1e-300);
        if worst_v - best_v <= 1e-12 * scale {
            return 0.0;
        }
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (best - step, best + step);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..60 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        let a = 0.5 * (lo + hi);
        a.rem_euclid(std::f64::consts::PI)
    }

    pub fn min_variance(&self) -> f64 {
        self.var_along(self.optimal_angle())
    }

    pub fn max_variance(&self) -> f64 {
        self.var_along(self.optimal_angle() + std::f64::consts::FRAC_PI_2)
    }

    /// `4 Var / N` along `alpha`; 1 for a coherent state.
    pub fn number_squeezing(&self, alpha: f64) -> f64 {
        4.0 * self.var_along(alpha) / self.n_atoms as f64
    }

    /// `N Var_min / |<J>|^2`
    pub fn metrological_squeezing(&self) -> f64 {
        let l = self.mean_length();
        self.n_atoms as f64 * self.min_variance() / (l * l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{evolve_oat, make_css, rotate, RotationSpec};
    use std::f64::consts::PI;

    #[test]
    fn coherent_state_moments() {
        let s = make_css(500, PI / 2.0, 0.0).unwrap();
        let m = moments(&s);
        assert!((m.mean_jx() - 250.0).abs() < 1e-9);
        assert!(m.mean_jy().abs() < 1e-9 && m.mean_jz().abs() < 1e-9);
        assert!((m.var_jz() - 125.0).abs() < 1e-9);
        assert!((m.number_squeezing(0.0) - 1.0).abs() < 1e-12);
        assert_eq!(m.optimal_angle(), 0.0);

        let a = CollectiveState::all_a(500).unwrap();
        let m = moments(&a);
        assert!((m.mean_jz() + 250.0).abs() < 1e-12);
        assert!(m.var_jz().abs() < 1e-12);
    }

    #[test]
    fn var_along_matches_rotated_jz() {
        // mean spin along +y, rotations about y
        let s = make_css(40, PI / 2.0, PI / 2.0).unwrap();
        let s = evolve_oat(&s, 0.05, 0.0, 1.0).unwrap();
        let m = moments(&s);
        assert!(m.mean_jy() > 0.0);
        for &alpha in &[0.0, 0.3, 1.1, PI / 2.0, 2.5] {
            let r = rotate(&s, RotationSpec::new(alpha, PI / 2.0)).unwrap();
            let direct = moments(&r).var_jz();
            assert!((m.var_along(alpha) - direct).abs() < 1e-9, "alpha {alpha}");
        }
    }
}
