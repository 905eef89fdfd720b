//! Collective pseudospin of one site in the symmetric (Dicke) subspace.
//!
//! Basis index `k` counts atoms in `|b>`, so `k = 0` is all atoms in `|a>`
//! and `m = k - N/2`. The raising operator is `J+ = b^dag a` with
//! `<k+1|J+|k> = sqrt((k+1)(N-k))`.

mod krylov;
mod moments;
mod oracle;
mod rotation;
mod state;

pub use krylov::{evolve_pulse, evolve_pulse_with, KrylovOptions, PulseStats};
pub use moments::{moments, SpinMoments};
pub use oracle::{brute_force_oracle, HamiltonianParams, ORACLE_MAX_ATOMS};
pub use rotation::{rotate, RotationSpec};
pub use state::{evolve_oat, ladder, make_css, sample_jz, sample_n_b, CollectiveState};
