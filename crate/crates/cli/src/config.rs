//! Run configuration files.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use squeezelab::estimators::BootstrapConfig;
use squeezelab::lattice::LatticeConfig;
use squeezelab::loss::LossConfig;
use squeezelab::magnetometry::{FieldProtocolParams, RamseyRun};
use squeezelab::noise::NoiseConfig;
use squeezelab::pipeline::{ReadoutPlan, RunSpec};
use squeezelab::presets::{css_spec, paper_ramsey_run, sites};
use squeezelab::sequence::{make_oat_sequence_with, OatOptions, ProtocolParams, Readout, Sequence, SequenceStep};

/// Raised for anything wrong with the user's input. Maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SequenceSpec {
    /// Twisting with optional echo, read out at each tomography angle.
    Oat {
        /// s
        #[serde(default = "default_oat_time")]
        evolution_total: f64,
        #[serde(default = "default_angles")]
        tomography_deg: Vec<f64>,
        #[serde(default)]
        options: OatOptions,
    },
    /// First π/2 pulse only.
    Css,
    /// Swap-Ramsey at each interrogation time, read at `fringe_phases` phases.
    Ramsey {
        /// s
        t_ints: Vec<f64>,
        #[serde(default = "default_phases")]
        fringe_phases: usize,
    },
    Custom {
        steps: Vec<SequenceStep>,
    },
}

fn default_oat_time() -> f64 {
    squeezelab::presets::PAPER_OAT_TIME
}

fn default_angles() -> Vec<f64> {
    vec![0.0]
}

fn default_phases() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub lattice: LatticeConfig,
    /// Seed of the lattice draw; the master seed when absent.
    pub lattice_seed: Option<u64>,
    pub sequence: SequenceSpec,
    pub noise: NoiseConfig,
    pub loss: LossConfig,
    pub protocol: FieldProtocolParams,
    pub execution: ProtocolParams,
    pub n_shots: usize,
    pub master_seed: u64,
    pub atom_jitter: f64,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            lattice: LatticeConfig::default(),
            lattice_seed: None,
            sequence: SequenceSpec::Oat { evolution_total: default_oat_time(), tomography_deg: default_angles(), options: OatOptions::default() },
            noise: NoiseConfig::default(),
            loss: LossConfig::default(),
            protocol: FieldProtocolParams::default(),
            execution: ProtocolParams::default(),
            n_shots: 100,
            master_seed: 0,
            atom_jitter: 0.0,
            output_dir: None,
        }
    }
}

/// Overrides from the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub shots: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    /// serde_json errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.master_seed = s;
        }
        if let Some(n) = o.shots {
            self.n_shots = n;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let field = |name: &str, r: squeezelab::Result<()>| r.map_err(|e| config_err(format!("{name}: {e}")));
        if self.n_shots == 0 {
            return Err(config_err("n_shots: must be >= 1"));
        }
        if self.run_id.is_empty() || self.run_id.contains([',', '"', '\n']) {
            return Err(config_err(format!("run_id: '{}' must be non-empty and free of commas, quotes and newlines", self.run_id)));
        }
        field("lattice", self.lattice.validate())?;
        field("noise", self.noise.validate())?;
        field("loss", self.loss.validate())?;
        field("protocol", self.protocol.validate())?;
        if let SequenceSpec::Ramsey { t_ints, fringe_phases } = &self.sequence {
            if t_ints.is_empty() || *fringe_phases == 0 {
                return Err(config_err("sequence: ramsey needs t_ints and fringe_phases >= 1"));
            }
        }
        Ok(())
    }

    /// Canonical JSON used for hashing.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn lattice_sites(&self) -> anyhow::Result<Vec<squeezelab::lattice::SiteParams>> {
        sites(&self.lattice, self.lattice_seed.unwrap_or(self.master_seed)).map_err(|e| config_err(format!("lattice: {e}")))
    }

    /// The swap-Ramsey run for `t_ints`, with the squeezing rotation
    /// calibrated on the reference site.
    pub fn ramsey_run(&self, t_ints: Vec<f64>, fringe_phases: usize) -> anyhow::Result<RamseyRun> {
        let mut r = paper_ramsey_run(self.lattice_sites()?, t_ints, fringe_phases, self.n_shots, self.master_seed)?;
        r.run_id = self.run_id.clone();
        r.noise = self.noise.clone();
        r.loss = self.loss.clone();
        r.field = self.protocol;
        r.protocol = ProtocolParams { gradient_origin: r.protocol.gradient_origin, ..self.execution.clone() };
        r.ramsey.t_pi = self.protocol.t_pi;
        Ok(r)
    }

    /// Builds the run. Returns the spec and a label per readout variant.
    pub fn run_spec(&self) -> anyhow::Result<(RunSpec, Vec<String>)> {
        self.validate()?;
        let sites = self.lattice_sites()?;
        let base = |sequence: Sequence, readouts: ReadoutPlan| RunSpec {
            run_id: self.run_id.clone(),
            sites: sites.clone(),
            sequence,
            readouts,
            noise: self.noise.clone(),
            loss: self.loss.clone(),
            protocol: ProtocolParams { s_hz_per_t: self.protocol.s_hz_per_t, ..self.execution.clone() },
            n_shots: self.n_shots,
            master_seed: self.master_seed,
            atom_jitter: self.atom_jitter,
        };
        let bad = |e: squeezelab::Error| config_err(format!("sequence: {e}"));
        let (spec, labels) = match &self.sequence {
            SequenceSpec::Oat { evolution_total, tomography_deg, options } => {
                if tomography_deg.is_empty() {
                    return Err(config_err("sequence: tomography_deg is empty"));
                }
                let seq = make_oat_sequence_with(*evolution_total, 0.0, options).map_err(bad)?;
                let readouts = tomography_deg.iter().map(|a| Readout::tomography(a.to_radians())).collect();
                let labels = tomography_deg.iter().map(|a| format!("alpha{a}")).collect();
                (base(seq, ReadoutPlan::All(readouts)), labels)
            }
            SequenceSpec::Css => {
                let css = css_spec(sites.clone(), self.n_shots, self.master_seed)?;
                (base(css.sequence, ReadoutPlan::Sequence), vec!["css".into()])
            }
            SequenceSpec::Ramsey { t_ints, fringe_phases } => {
                let r = self.ramsey_run(t_ints.clone(), *fringe_phases).map_err(|e| config_err(format!("sequence: {e}")))?;
                let spec = r.spec().map_err(bad)?;
                let mut labels = Vec::new();
                for t in t_ints {
                    for p in r.phases() {
                        labels.push(format!("tint{:.0}us-phase{:.0}", t * 1e6, p.to_degrees()));
                    }
                }
                (RunSpec { atom_jitter: self.atom_jitter, ..spec }, labels)
            }
            SequenceSpec::Custom { steps } => {
                let seq = Sequence::new(self.run_id.clone(), steps.clone()).map_err(bad)?;
                (base(seq, ReadoutPlan::Sequence), vec!["custom".into()])
            }
        };
        spec.validate().map_err(|e| config_err(e.to_string()))?;
        Ok((spec, labels))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Xi2Direct { sites: Vec<usize> },
    Xi2Rel { left: Vec<usize>, right: Vec<usize> },
}

/// What `analyze` computes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSpec {
    pub estimators: Vec<EstimatorSpec>,
    /// Atoms per cloud, subtracted in quadrature.
    pub detection_sigma: f64,
    pub bootstrap: BootstrapConfig,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self { estimators: Vec::new(), detection_sigma: 0.0, bootstrap: BootstrapConfig::default() }
    }
}

impl AnalysisSpec {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
            .map_err(|e| config_err(format!("{e:#}")))?;
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }
}
