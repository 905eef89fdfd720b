//! Monte Carlo driver: runs a sequence on every site for every shot and
//! measures the results.
//!
//! All randomness comes from substreams keyed by `(shot, site, purpose)`, so
//! shots can run on any number of threads and still produce identical
//! records.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SiteParams;
use crate::loss::LossConfig;
use crate::measurement::{measure_site, ShotRecord};
use crate::noise::{check_sensitivity_ratio, draw_block_offset, draw_shot_noise, NoiseConfig, ShotNoise};
use crate::rng::{substream, Purpose, Stream};
use crate::sequence::{Executor, LossContext, ProtocolParams, Readout, Sequence, SequenceStep};
use crate::spin::{moments, CollectiveState, SpinMoments};

/// Which readouts each shot gets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "readouts", rename_all = "kebab-case")]
pub enum ReadoutPlan {
    /// The sequence's own trailing readout (or none).
    Sequence,
    /// Every listed readout is applied to copies of the same pre-readout state.
    All(Vec<Readout>),
    /// Shot `s` uses entry `s % len`.
    Cycle(Vec<Readout>),
    /// Each branch's steps run on a copy of the state left by the
    /// sequence (minus its readout), without loss.
    Branches(Vec<Vec<SequenceStep>>),
}

#[derive(Clone, Debug)]
pub struct RunSpec {
    pub run_id: String,
    pub sites: Vec<SiteParams>,
    pub sequence: Sequence,
    pub readouts: ReadoutPlan,
    pub noise: NoiseConfig,
    pub loss: LossConfig,
    pub protocol: ProtocolParams,
    pub n_shots: usize,
    pub master_seed: u64,
    /// Relative shot-to-shot jitter of each site's prepared atom number.
    pub atom_jitter: f64,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_shots == 0 {
            return Err(Error::InvalidArgument("n_shots must be >= 1".into()));
        }
        if !(self.atom_jitter.is_finite() && self.atom_jitter >= 0.0) {
            return Err(Error::InvalidArgument(format!("atom_jitter must be >= 0, got {}", self.atom_jitter)));
        }
        if self.sites.is_empty() {
            return Err(Error::InvalidArgument("no sites".into()));
        }
        self.sequence.validate()?;
        self.noise.validate()?;
        self.loss.validate()?;
        match &self.readouts {
            ReadoutPlan::All(v) | ReadoutPlan::Cycle(v) if v.is_empty() => {
                Err(Error::InvalidArgument("readout list is empty".into()))
            }
            ReadoutPlan::Branches(b) if b.is_empty() => Err(Error::InvalidArgument("branch list is empty".into())),
            ReadoutPlan::Branches(b) => {
                let (prefix, _) = self.sequence.split_readout();
                for branch in b {
                    Sequence::new("branch", prefix.iter().chain(branch).cloned().collect())?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// One shot: a record per applied readout plus the exact moments of every
/// site's state before and after readout.
#[derive(Clone, Debug)]
pub struct ShotOutcome {
    pub shot_index: usize,
    pub noise: ShotNoise,
    pub readouts: Vec<Option<Readout>>,
    pub records: Vec<ShotRecord>,
    pub pre_readout: Vec<SpinMoments>,
    /// `[readout][site]` of `(<Jz>, Var Jz)`
    pub final_jz: Vec<Vec<(f64, f64)>>,
    /// `[readout][site]` mean spin length after readout
    pub final_length: Vec<Vec<f64>>,
}

pub fn shot_noise(spec: &RunSpec, shot: usize) -> ShotNoise {
    let mut rng = substream(spec.master_seed, shot as u64, 0, Purpose::ShotNoise);
    let noise = draw_shot_noise(&spec.noise, &mut rng);
    if spec.noise.longterm_block == 0 {
        return noise;
    }
    let block = (shot / spec.noise.longterm_block) as u64;
    let mut brng = substream(spec.master_seed, block, 0, Purpose::LongTerm);
    noise.with_block_offset(&spec.noise, draw_block_offset(&spec.noise, &mut brng))
}

fn readouts_for(spec: &RunSpec, shot: usize) -> Vec<Option<Readout>> {
    match &spec.readouts {
        ReadoutPlan::Sequence => vec![spec.sequence.split_readout().1],
        ReadoutPlan::All(v) => v.iter().copied().map(Some).collect(),
        ReadoutPlan::Cycle(v) => vec![Some(v[shot % v.len()])],
        ReadoutPlan::Branches(b) => b
            .iter()
            .map(|steps| match steps.last() {
                Some(SequenceStep::Readout { kind }) => Some(*kind),
                _ => None,
            })
            .collect(),
    }
}

/// Applies several readouts to one pre-readout state. Tomography pulses at
/// the same phase are applied incrementally in order of angle, since a
/// longer pulse is a continuation of a shorter one.
fn apply_readouts(ex: &Executor<'_>, pre: &CollectiveState, readouts: &[Option<Readout>]) -> Result<Vec<CollectiveState>> {
    let mut out: Vec<Option<CollectiveState>> = vec![None; readouts.len()];
    let incremental = ex.protocol.echo_deficit.is_none();
    let mut groups: Vec<(f64, Vec<(f64, usize)>)> = Vec::new();
    for (i, r) in readouts.iter().enumerate() {
        match r {
            None => out[i] = Some(pre.clone()),
            Some(r) if incremental => {
                let (angle, phase) = r.pulse();
                match groups.iter_mut().find(|g| g.0 == phase) {
                    Some(g) => g.1.push((angle, i)),
                    None => groups.push((phase, vec![(angle, i)])),
                }
            }
            Some(r) => {
                let mut st = pre.clone();
                ex.readout(&mut st, *r)?;
                out[i] = Some(st);
            }
        }
    }
    let rabi = ex.protocol.rabi;
    for (phase, mut items) in groups {
        items.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut st = pre.clone();
        let mut done = 0.0;
        for (angle, i) in items {
            if angle > done {
                ex.pulse(&mut st, rabi, phase, (angle - done) / rabi, false)?;
                done = angle;
            }
            out[i] = Some(st.clone());
        }
    }
    Ok(out.into_iter().map(|s| s.unwrap()).collect())
}

pub fn run_shot(spec: &RunSpec, shot: usize) -> Result<ShotOutcome> {
    let noise = shot_noise(spec, shot);
    let readouts = readouts_for(spec, shot);
    let (steps, _) = spec.sequence.split_readout();
    let mut records: Vec<ShotRecord> = readouts
        .iter()
        .map(|_| ShotRecord { shot_index: shot, sites: Vec::with_capacity(spec.sites.len()), noise })
        .collect();
    let mut final_jz = vec![Vec::with_capacity(spec.sites.len()); readouts.len()];
    let mut final_length = vec![Vec::with_capacity(spec.sites.len()); readouts.len()];
    let mut pre_readout = Vec::with_capacity(spec.sites.len());
    for (i, base) in spec.sites.iter().enumerate() {
        let jittered = jitter_site(spec, base, shot, i);
        let site = jittered.as_ref().unwrap_or(base);
        let ex = Executor { site, noise: &noise, protocol: &spec.protocol };
        let mut state = CollectiveState::all_a(site.n_atoms)?;
        let mut loss_rng = substream(spec.master_seed, shot as u64, i as u64, Purpose::Loss);
        let ctx = spec.loss.enabled.then(|| LossContext::<Stream> { config: &spec.loss, rng: &mut loss_rng });
        ex.run(&mut state, steps, ctx)?;
        pre_readout.push(moments(&state));
        let finals = match &spec.readouts {
            ReadoutPlan::Branches(b) => b
                .iter()
                .map(|steps| {
                    let mut st = state.clone();
                    ex.run::<Stream>(&mut st, steps, None)?;
                    Ok(st)
                })
                .collect::<Result<Vec<_>>>()?,
            _ => apply_readouts(&ex, &state, &readouts)?,
        };
        for (v, st) in finals.iter().enumerate() {
            let mut rng = substream(spec.master_seed, shot as u64, ((v as u64) << 32) | i as u64, Purpose::Measurement);
            let mut rec = measure_site(i, st, spec.noise.detection_sigma, &mut rng);
            rec.site_index = site.site_index;
            records[v].sites.push(rec);
            let m = moments(st);
            final_jz[v].push((m.mean_jz(), m.var_jz()));
            final_length[v].push(m.mean_length());
        }
    }
    Ok(ShotOutcome { shot_index: shot, noise, readouts, records, pre_readout, final_jz, final_length })
}

/// This shot's version of `site` when atom numbers jitter.
fn jitter_site(spec: &RunSpec, site: &SiteParams, shot: usize, i: usize) -> Option<SiteParams> {
    if spec.atom_jitter == 0.0 {
        return None;
    }
    let mut rng = substream(spec.master_seed, shot as u64, i as u64, Purpose::Lattice);
    let z: f64 = rng.sample(StandardNormal);
    let n = (site.n_atoms as f64 * (1.0 + spec.atom_jitter * z)).round().clamp(1.0, 2.0 * site.n_atoms as f64) as usize;
    Some(SiteParams { n_atoms: n, chi: site.chi_at(n), delta_offset: site.delta_at(n), ..site.clone() })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))
}

/// Runs every shot and hands outcomes to `sink` in shot order. Shots are
/// computed in parallel chunks on `workers` threads.
pub fn run_streaming<F>(spec: &RunSpec, workers: usize, mut sink: F) -> Result<()>
where
    F: FnMut(ShotOutcome) -> Result<()>,
{
    spec.validate()?;
    check_sensitivity_ratio(&spec.noise, spec.protocol.s_hz_per_t);
    let pool = pool(workers)?;
    let chunk = 16 * workers.max(1);
    let mut start = 0;
    while start < spec.n_shots {
        let end = (start + chunk).min(spec.n_shots);
        let outs: Vec<Result<ShotOutcome>> =
            pool.install(|| (start..end).into_par_iter().map(|s| run_shot(spec, s)).collect());
        for o in outs {
            sink(o?)?;
        }
        start = end;
    }
    Ok(())
}

pub fn run(spec: &RunSpec, workers: usize) -> Result<Vec<ShotOutcome>> {
    let mut out = Vec::with_capacity(spec.n_shots);
    run_streaming(spec, workers, |o| {
        out.push(o);
        Ok(())
    })?;
    Ok(out)
}

/// Records of readout variant `v` across shots.
pub fn records(outcomes: &[ShotOutcome], v: usize) -> Vec<ShotRecord> {
    outcomes.iter().filter_map(|o| o.records.get(v).cloned()).collect()
}
