//! Parameter sets matching the experiment: 25 sites carrying about 12300
//! atoms, the full noise model, loss, and the 342 µs swap-Ramsey protocol.

use crate::error::Result;
use crate::lattice::{build_lattice, AtomNumberLaw, LatticeConfig, SiteParams, N_REF};
use crate::loss::LossConfig;
use crate::magnetometry::{FieldProtocolParams, RamseyRun};
use crate::noise::{NoiseConfig, ShotNoise};
use crate::pipeline::{ReadoutPlan, RunSpec};
use crate::rng::{substream, Purpose};
use crate::sequence::{
    calibrate_squeeze_rotation, make_oat_sequence_with, Executor, OatOptions, ProtocolParams, RamseyOptions, Readout,
    Sequence, SequenceStep,
};
use crate::spin::{moments, CollectiveState};

/// Injected gradient for the gradiometry runs, T/µm.
pub const PAPER_GRADIENT: f64 = 19.6e-12;
/// Total OAT time, s.
pub const PAPER_OAT_TIME: f64 = 0.020;
/// Interrogation time of the headline sensitivity, s.
pub const PAPER_T_INT: f64 = 342e-6;

/// 25 sites, 600 atoms in the middle falling to 300 at the edges
/// (12294 atoms in total).
pub fn paper_lattice() -> LatticeConfig {
    LatticeConfig { atom_number_law: AtomNumberLaw::Parabolic { peak: 600, edge: 300 }, ..Default::default() }
}

pub fn sites(config: &LatticeConfig, seed: u64) -> Result<Vec<SiteParams>> {
    build_lattice(config, &mut substream(seed, 0, 0, Purpose::Lattice))
}

pub fn paper_loss() -> LossConfig {
    LossConfig { enabled: true, ..Default::default() }
}

/// Lattice position where the gradient field vanishes: the array center,
/// which puts both halves at the working point.
pub fn center(sites: &[SiteParams]) -> f64 {
    let (lo, hi) = sites.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s.position), hi.max(s.position))
    });
    0.5 * (lo + hi)
}

/// Signed tomography angle minimizing `Var Jz` for a noiseless reference
/// site after `evolution_total` of OAT.
pub fn reference_tomography_angle(config: &LatticeConfig, evolution_total: f64, opts: &OatOptions) -> Result<f64> {
    let site = config.site(0, N_REF);
    let seq = make_oat_sequence_with(evolution_total, 0.0, opts)?;
    let (steps, _) = seq.split_readout();
    let noise = ShotNoise::default();
    let protocol = ProtocolParams { ideal_pulses: opts.ideal_pulses, ..Default::default() };
    let ex = Executor { site: &site, noise: &noise, protocol: &protocol };
    let mut st = CollectiveState::all_a(N_REF)?;
    ex.run::<crate::rng::Stream>(&mut st, steps, None)?;
    let a = moments(&st).optimal_angle();
    Ok(if a > std::f64::consts::FRAC_PI_2 { a - std::f64::consts::PI } else { a })
}

/// Squeezing run read out by tomography at each of `alphas` (radians).
pub fn oat_spec(sites: Vec<SiteParams>, alphas: &[f64], loss: bool, n_shots: usize, seed: u64) -> Result<RunSpec> {
    Ok(RunSpec {
        run_id: "oat".into(),
        sites,
        sequence: make_oat_sequence_with(PAPER_OAT_TIME, 0.0, &OatOptions::default())?,
        readouts: ReadoutPlan::All(alphas.iter().map(|&a| Readout::tomography(a)).collect()),
        noise: NoiseConfig::default(),
        loss: if loss { paper_loss() } else { LossConfig::default() },
        protocol: ProtocolParams::default(),
        n_shots,
        master_seed: seed,
        atom_jitter: 0.0,
    })
}

/// Coherent-state reference: the first π/2 pulse only, with the full
/// readout noise.
pub fn css_spec(sites: Vec<SiteParams>, n_shots: usize, seed: u64) -> Result<RunSpec> {
    let opts = OatOptions::default();
    let pulse = SequenceStep::Pulse {
        rabi: opts.rabi,
        phase: 0.0,
        duration: std::f64::consts::FRAC_PI_2 / opts.rabi,
        ideal: true,
    };
    Ok(RunSpec {
        run_id: "css".into(),
        sites,
        sequence: Sequence::new("css", vec![pulse])?,
        readouts: ReadoutPlan::Sequence,
        noise: NoiseConfig::default(),
        loss: LossConfig::default(),
        protocol: ProtocolParams::default(),
        n_shots,
        master_seed: seed,
        atom_jitter: 0.0,
    })
}

/// Swap-Ramsey run with the injected gradient and the phase-squeezing
/// rotation calibrated on a reference site at `PAPER_T_INT`.
pub fn paper_ramsey_run(sites: Vec<SiteParams>, t_ints: Vec<f64>, fringe_phases: usize, n_shots: usize, seed: u64) -> Result<RamseyRun> {
    let field = FieldProtocolParams::default();
    let protocol = ProtocolParams { gradient: PAPER_GRADIENT, gradient_origin: center(&sites), ..Default::default() };
    let base = RamseyOptions { t_pi: field.t_pi, ..Default::default() };
    let reference = paper_lattice().site(0, N_REF);
    let angle = calibrate_squeeze_rotation(&reference, &ProtocolParams::default(), &base, field.t_hold)?;
    Ok(RamseyRun {
        run_id: "ramsey".into(),
        sites,
        noise: NoiseConfig::default(),
        loss: paper_loss(),
        protocol,
        field,
        ramsey: RamseyOptions { squeeze_rotation: Readout::tomography(angle), ..base },
        t_ints,
        fringe_phases,
        n_shots,
        master_seed: seed,
    })
}
