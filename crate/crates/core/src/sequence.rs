//! Experiment programs and their executor for a single site.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::lattice::SiteParams;
use crate::loss::{oat_with_loss, Jump, LossConfig};
use crate::noise::ShotNoise;
use crate::spin::{evolve_pulse, CollectiveState};
use crate::units::TWO_PI;

/// Two-photon Rabi frequency, rad/s.
pub const DEFAULT_RABI: f64 = TWO_PI * 310.0;
/// One-photon swap Rabi frequency, Hz.
pub const DEFAULT_SWAP_RABI_HZ: f64 = 7000.0;
/// Rotation onto the phase-squeezed axis with ideal pulses at N = 500, degrees.
pub const PHASE_SQUEEZED_ANGLE_DEG: f64 = 75.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Readout {
    /// Rotation by `angle` about the equatorial axis at `phase`.
    Tomography { angle: f64, phase: f64 },
    /// π/2 pulse at `phase`.
    Ramsey { phase: f64 },
}

impl Readout {
    /// Tomography readout for a signed angle: `|alpha|` at phase π/2 for
    /// `alpha >= 0`, 3π/2 otherwise.
    pub fn tomography(alpha: f64) -> Self {
        let phase = if alpha >= 0.0 { FRAC_PI_2 } else { 3.0 * FRAC_PI_2 };
        Readout::Tomography { angle: alpha.abs(), phase }
    }

    pub fn pulse(&self) -> (f64, f64) {
        match *self {
            Readout::Tomography { angle, phase } => (angle, phase),
            Readout::Ramsey { phase } => (FRAC_PI_2, phase),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "kebab-case")]
pub enum SequenceStep {
    Pulse { rabi: f64, phase: f64, duration: f64, ideal: bool },
    FreeOat { duration: f64 },
    SwapOut { t_pi: f64 },
    Hold { duration: f64 },
    SwapIn { t_pi: f64 },
    Readout { kind: Readout },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub name: String,
    pub steps: Vec<SequenceStep>,
}

impl Sequence {
    pub fn new(name: impl Into<String>, steps: Vec<SequenceStep>) -> Result<Self> {
        let s = Self { name: name.into(), steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut swapped = false;
        let bad = |i: usize, msg: &str| Err(Error::InvalidArgument(format!("step {i} of '{}': {msg}", self.name)));
        for (i, step) in self.steps.iter().enumerate() {
            let durations: &[f64] = match step {
                SequenceStep::Pulse { rabi, phase, duration, .. } => {
                    if !rabi.is_finite() || !phase.is_finite() {
                        return bad(i, "non-finite pulse parameter");
                    }
                    &[*duration]
                }
                SequenceStep::FreeOat { duration } | SequenceStep::Hold { duration } => &[*duration],
                SequenceStep::SwapOut { t_pi } | SequenceStep::SwapIn { t_pi } => &[*t_pi],
                SequenceStep::Readout { kind } => {
                    let (a, p) = kind.pulse();
                    if !a.is_finite() || !p.is_finite() {
                        return bad(i, "non-finite readout parameter");
                    }
                    &[]
                }
            };
            if durations.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                return bad(i, "durations must be finite and >= 0");
            }
            match step {
                SequenceStep::SwapOut { .. } if swapped => return bad(i, "already swapped out"),
                SequenceStep::SwapOut { .. } => swapped = true,
                SequenceStep::SwapIn { .. } if !swapped => return bad(i, "swap-in without swap-out"),
                SequenceStep::SwapIn { .. } => swapped = false,
                SequenceStep::Hold { .. } if !swapped => return bad(i, "hold outside a swap bracket"),
                SequenceStep::Hold { .. } => {}
                _ if swapped => return bad(i, "only holds are allowed while swapped out"),
                _ => {}
            }
        }
        if swapped {
            return bad(self.steps.len(), "sequence ends while swapped out");
        }
        Ok(())
    }

    /// Splits off a trailing readout.
    pub fn split_readout(&self) -> (&[SequenceStep], Option<Readout>) {
        match self.steps.last() {
            Some(SequenceStep::Readout { kind }) => (&self.steps[..self.steps.len() - 1], Some(*kind)),
            _ => (&self.steps[..], None),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OatOptions {
    pub rabi: f64,
    pub echo: bool,
    pub ideal_pulses: bool,
}

impl Default for OatOptions {
    fn default() -> Self {
        Self { rabi: DEFAULT_RABI, echo: true, ideal_pulses: false }
    }
}

fn pulse(rabi: f64, phase: f64, angle: f64, ideal: bool) -> SequenceStep {
    SequenceStep::Pulse { rabi, phase, duration: angle / rabi, ideal }
}

/// Generation steps only: π/2, twist, echo π, twist.
pub fn oat_generation(evolution_total: f64, opts: &OatOptions) -> Vec<SequenceStep> {
    let mut steps = vec![pulse(opts.rabi, 0.0, FRAC_PI_2, opts.ideal_pulses)];
    if opts.echo {
        steps.push(SequenceStep::FreeOat { duration: 0.5 * evolution_total });
        steps.push(pulse(opts.rabi, 3.0 * FRAC_PI_2, PI, opts.ideal_pulses));
        steps.push(SequenceStep::FreeOat { duration: 0.5 * evolution_total });
    } else {
        steps.push(SequenceStep::FreeOat { duration: evolution_total });
    }
    steps
}

pub fn make_oat_sequence(evolution_total: f64, tomography_angle: f64) -> Result<Sequence> {
    make_oat_sequence_with(evolution_total, tomography_angle, &OatOptions::default())
}

pub fn make_oat_sequence_with(evolution_total: f64, tomography_angle: f64, opts: &OatOptions) -> Result<Sequence> {
    if !(evolution_total.is_finite() && evolution_total > 0.0) {
        return Err(Error::InvalidArgument(format!("evolution_total must be > 0, got {evolution_total}")));
    }
    ensure_finite("tomography_angle", tomography_angle)?;
    let mut steps = oat_generation(evolution_total, opts);
    steps.push(SequenceStep::Readout { kind: Readout::tomography(tomography_angle) });
    Sequence::new("oat", steps)
}

/// Swap π time for a one-photon Rabi frequency in Hz.
pub fn swap_t_pi(rabi_hz: f64) -> f64 {
    1.0 / (2.0 * rabi_hz)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RamseyOptions {
    pub oat: OatOptions,
    pub evolution_total: f64,
    /// The rotation onto the phase-squeezed axis.
    pub squeeze_rotation: Readout,
    pub t_pi: f64,
}

impl Default for RamseyOptions {
    fn default() -> Self {
        Self {
            oat: OatOptions::default(),
            evolution_total: 0.020,
            squeeze_rotation: Readout::tomography(PHASE_SQUEEZED_ANGLE_DEG.to_radians()),
            t_pi: swap_t_pi(DEFAULT_SWAP_RABI_HZ),
        }
    }
}

pub fn make_ramsey_sequence(t_hold: f64, readout: Readout) -> Result<Sequence> {
    make_ramsey_sequence_with(t_hold, readout, &RamseyOptions::default())
}

pub fn make_ramsey_sequence_with(t_hold: f64, readout: Readout, opts: &RamseyOptions) -> Result<Sequence> {
    let mut steps = ramsey_prefix(opts);
    steps.extend(ramsey_tail(t_hold, opts.t_pi, readout)?);
    Sequence::new("ramsey", steps)
}

/// Generation plus the rotation onto the phase-squeezed axis.
pub fn ramsey_prefix(opts: &RamseyOptions) -> Vec<SequenceStep> {
    let mut steps = oat_generation(opts.evolution_total, &opts.oat);
    let (angle, phase) = opts.squeeze_rotation.pulse();
    if angle != 0.0 {
        steps.push(pulse(opts.oat.rabi, phase, angle, opts.oat.ideal_pulses));
    }
    steps
}

/// Swap out, hold, swap in, read out.
pub fn ramsey_tail(t_hold: f64, t_pi: f64, readout: Readout) -> Result<Vec<SequenceStep>> {
    if !(t_hold.is_finite() && t_hold >= 0.0) {
        return Err(Error::InvalidArgument(format!("t_hold must be >= 0, got {t_hold}")));
    }
    Ok(vec![
        SequenceStep::SwapOut { t_pi },
        SequenceStep::Hold { duration: t_hold },
        SequenceStep::SwapIn { t_pi },
        SequenceStep::Readout { kind: readout },
    ])
}

/// Signed rotation angle (see [`Readout::tomography`]) that minimizes `Var Jz`
/// after a Ramsey readout at the zero crossing, for a noiseless run of
/// `site`. Searches `[-π/2, π]` on a 1° grid, then refines.
///
/// With finite-length pulses the twisting during the rotation and readout
/// pulses moves this well away from the ideal-pulse value.
pub fn calibrate_squeeze_rotation(site: &SiteParams, protocol: &ProtocolParams, opts: &RamseyOptions, t_hold: f64) -> Result<f64> {
    let noise = ShotNoise::default();
    let ex = Executor { site, noise: &noise, protocol };
    let mut generated = CollectiveState::all_a(site.n_atoms)?;
    ex.run::<rand_chacha::ChaCha8Rng>(&mut generated, &oat_generation(opts.evolution_total, &opts.oat), None)?;
    let tail = |alpha: f64| -> Result<f64> {
        let o = RamseyOptions { squeeze_rotation: Readout::tomography(alpha), ..*opts };
        let seq = make_ramsey_sequence_with(t_hold, Readout::Ramsey { phase: FRAC_PI_2 }, &o)?;
        let skip = oat_generation(opts.evolution_total, &opts.oat).len();
        let mut st = generated.clone();
        ex.run::<rand_chacha::ChaCha8Rng>(&mut st, &seq.steps[skip..], None)?;
        Ok(crate::spin::moments(&st).var_jz())
    };
    let deg = PI / 180.0;
    let mut best = (0.0, f64::INFINITY);
    for i in -90..=180 {
        let a = i as f64 * deg;
        let v = tail(a)?;
        if v < best.1 {
            best = (a, v);
        }
    }
    let (mut lo, mut hi) = (best.0 - deg, best.0 + deg);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..30 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if tail(x1)? < tail(x2)? {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Protocol-level constants shared by every site and shot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolParams {
    /// Rabi frequency used for readout pulses, rad/s.
    pub rabi: f64,
    /// Swapped-state field sensitivity, Hz/T.
    pub s_hz_per_t: f64,
    /// Static field offset `B - B0` common to all sites, T.
    pub field_offset: f64,
    /// T/µm
    pub gradient: f64,
    /// Position where the gradient field vanishes, µm.
    pub gradient_origin: f64,
    /// Detuning of the swapped transition, Hz.
    pub delta_swap_hz: f64,
    /// Nonlinearity while swapped out, rad/s.
    pub chi_hold: f64,
    /// Treat every pulse as an ideal rotation.
    pub ideal_pulses: bool,
    /// Replace every π pulse by an ideal rotation short by this angle.
    pub echo_deficit: Option<f64>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            rabi: DEFAULT_RABI,
            s_hz_per_t: crate::magnetometry::DEFAULT_S,
            field_offset: 0.0,
            gradient: 0.0,
            gradient_origin: 0.0,
            delta_swap_hz: 0.0,
            chi_hold: 0.0,
            ideal_pulses: false,
            echo_deficit: None,
        }
    }
}

impl ProtocolParams {
    /// Field deviation seen by `site` in this shot, T.
    pub fn field_at(&self, site: &SiteParams, noise: &ShotNoise) -> f64 {
        noise.field_offset + self.field_offset + self.gradient * (site.position - self.gradient_origin)
    }

    /// Precession rate while swapped out, rad/s.
    pub fn swapped_detuning(&self, site: &SiteParams, noise: &ShotNoise) -> f64 {
        TWO_PI * (self.s_hz_per_t * self.field_at(site, noise) + self.delta_swap_hz)
    }
}

/// Loss settings plus the randomness they consume.
pub struct LossContext<'a, R: Rng + ?Sized> {
    pub config: &'a LossConfig,
    pub rng: &'a mut R,
}

pub struct Executor<'a> {
    pub site: &'a SiteParams,
    pub noise: &'a ShotNoise,
    pub protocol: &'a ProtocolParams,
}

impl Executor<'_> {
    fn generation_detuning(&self, n: usize) -> f64 {
        self.site.delta_at(n) + self.noise.gen_detuning
    }

    pub fn pulse(&self, state: &mut CollectiveState, rabi: f64, phase: f64, duration: f64, ideal: bool) -> Result<()> {
        if duration == 0.0 {
            return Ok(());
        }
        let angle = rabi * duration;
        if let Some(d) = self.protocol.echo_deficit {
            if (angle - PI).abs() < 1e-9 {
                state.apply_rotation(PI - d, phase);
                return Ok(());
            }
        }
        if ideal || self.protocol.ideal_pulses {
            state.apply_rotation(angle, phase);
            return Ok(());
        }
        let n = state.n_atoms();
        let delta = self.generation_detuning(n) + self.noise.pulse_detuning;
        *state = evolve_pulse(state, rabi, phase, delta, self.site.chi_at(n), duration)?;
        Ok(())
    }

    pub fn readout(&self, state: &mut CollectiveState, kind: Readout) -> Result<()> {
        let (angle, phase) = kind.pulse();
        self.pulse(state, self.protocol.rabi, phase, angle / self.protocol.rabi, false)
    }

    /// Runs `steps` on `state`; returns loss jumps if loss is active.
    pub fn run<R: Rng + ?Sized>(
        &self,
        state: &mut CollectiveState,
        steps: &[SequenceStep],
        mut loss: Option<LossContext<'_, R>>,
    ) -> Result<Vec<Jump>> {
        let mut jumps = Vec::new();
        for step in steps {
            match *step {
                SequenceStep::Pulse { rabi, phase, duration, ideal } => self.pulse(state, rabi, phase, duration, ideal)?,
                SequenceStep::FreeOat { duration } => match loss.as_mut() {
                    Some(ctx) if ctx.config.enabled && duration > 0.0 => {
                        let tr = oat_with_loss(
                            state,
                            self.site,
                            ctx.config,
                            self.site.n_atoms,
                            self.noise.gen_detuning,
                            duration,
                            &mut *ctx.rng,
                        )?;
                        *state = tr.state;
                        jumps.extend(tr.jumps);
                    }
                    _ => {
                        let n = state.n_atoms();
                        state.apply_oat(self.site.chi_at(n), self.generation_detuning(n), duration);
                    }
                },
                SequenceStep::SwapOut { t_pi: d } | SequenceStep::Hold { duration: d } | SequenceStep::SwapIn { t_pi: d } => {
                    state.apply_oat(self.protocol.chi_hold, self.protocol.swapped_detuning(self.site, self.noise), d);
                }
                SequenceStep::Readout { kind } => self.readout(state, kind)?,
            }
        }
        Ok(jumps)
    }
}

/// Runs a whole sequence from `|all a>` without loss.
pub fn execute(seq: &Sequence, site: &SiteParams, noise: &ShotNoise, protocol: &ProtocolParams) -> Result<CollectiveState> {
    seq.validate()?;
    let mut state = CollectiveState::all_a(site.n_atoms)?;
    let ex = Executor { site, noise, protocol };
    ex.run::<rand_chacha::ChaCha8Rng>(&mut state, &seq.steps, None)?;
    Ok(state)
}
