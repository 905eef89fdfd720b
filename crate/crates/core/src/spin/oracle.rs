use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::state::CollectiveState;
use crate::error::{ensure_finite, Error, Result};

/// Largest atom number the dense reference propagator accepts.
pub const ORACLE_MAX_ATOMS: usize = 10;

/// `H = rabi (Jx cos phase + Jy sin phase) + delta Jz + chi Jz^2`
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HamiltonianParams {
    pub rabi: f64,
    pub phase: f64,
    pub delta: f64,
    pub chi: f64,
}

/// Dense reference propagator: builds the full Hermitian matrix from the
/// ladder-operator matrix elements and exponentiates it by diagonalization.
///
/// Deliberately shares no code with the production propagators.
pub fn brute_force_oracle(
    initial: &CollectiveState,
    params: &HamiltonianParams,
    t: f64,
) -> Result<CollectiveState> {
    let n = initial.n_atoms();
    if n > ORACLE_MAX_ATOMS {
        return Err(Error::InvalidArgument(format!(
            "oracle limited to {ORACLE_MAX_ATOMS} atoms, got {n}"
        )));
    }
    for (name, x) in [
        ("rabi", params.rabi),
        ("phase", params.phase),
        ("delta", params.delta),
        ("chi", params.chi),
        ("t", t),
    ] {
        ensure_finite(name, x)?;
    }
    let d = n + 1;
    let j = n as f64 / 2.0;
    let zero = Complex64::new(0.0, 0.0);
    // J+ |j, m> = sqrt(j(j+1) - m(m+1)) |j, m+1>
    let mut jp = DMatrix::from_element(d, d, zero);
    for k in 0..n {
        let m = k as f64 - j;
        jp[(k + 1, k)] = Complex64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * Complex64::new(0.5, 0.0);
    let jy = (&jp - &jm) * Complex64::new(0.0, -0.5);
    let mut jz = DMatrix::from_element(d, d, zero);
    for k in 0..d {
        jz[(k, k)] = Complex64::new(k as f64 - j, 0.0);
    }
    let h = &jx * Complex64::new(params.rabi * params.phase.cos(), 0.0)
        + &jy * Complex64::new(params.rabi * params.phase.sin(), 0.0)
        + &jz * Complex64::new(params.delta, 0.0)
        + (&jz * &jz) * Complex64::new(params.chi, 0.0);
    let eig = SymmetricEigen::new(h);
    let u = &eig.eigenvectors;
    let psi0 = DVector::from_column_slice(initial.amplitudes());
    let mut coeff = u.adjoint() * psi0;
    for (c, &lam) in coeff.iter_mut().zip(eig.eigenvalues.iter()) {
        *c *= Complex64::from_polar(1.0, -lam * t);
    }
    let psi = u * coeff;
    CollectiveState::from_amplitudes(n, psi.iter().copied().collect())
}
