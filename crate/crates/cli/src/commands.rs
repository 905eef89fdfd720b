//! `simulate`, `analyze`, `scan` and `loss-floor`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use squeezelab::estimators::{xi2_direct, xi2_rel, BootstrapConfig, EstimateResult};
use squeezelab::io::{read_shots, ShotWriter};
use squeezelab::lattice::{LatticeConfig, RegionSpec};
use squeezelab::loss::{evolve_with_loss, LossConfig};
use squeezelab::magnetometry::field_scan;
use squeezelab::pipeline::run_streaming;
use squeezelab::spin::make_css;

use crate::config::{config_err, AnalysisSpec, EstimatorSpec, RunConfig};
use crate::manifest::{sha256_hex, ManifestWriter};
use crate::plot::{svg, Series, Table};

/// Runs `body` inside a manifest; marks the manifest failed on error.
pub fn with_manifest<F>(dir: &Path, command: &str, config_json: &str, seed: u64, body: F) -> anyhow::Result<()>
where
    F: FnOnce(&mut ManifestWriter) -> anyhow::Result<()>,
{
    let mut m = ManifestWriter::start(dir, command, config_json, seed)?;
    m.write_file("config.json", (config_json.to_string() + "\n").as_bytes())?;
    match body(&mut m) {
        Ok(()) => {
            m.finish()?;
            Ok(())
        }
        Err(e) => {
            m.fail();
            Err(e)
        }
    }
}

pub fn write_json<T: Serialize>(m: &mut ManifestWriter, name: &str, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    m.write_file(name, text.as_bytes())?;
    Ok(())
}

pub fn write_table(m: &mut ManifestWriter, name: &str, table: &Table) -> anyhow::Result<()> {
    m.write_file(name, &table.to_csv()?)?;
    Ok(())
}

pub fn write_plot(m: &mut ManifestWriter, name: &str, title: &str, x: &str, y: &str, series: &[Series]) -> anyhow::Result<()> {
    m.write_file(name, svg(title, x, y, series)?.as_bytes())?;
    Ok(())
}

pub fn simulate(cfg: &RunConfig, workers: usize, dir: &Path) -> anyhow::Result<()> {
    let (spec, labels) = cfg.run_spec()?;
    with_manifest(dir, "simulate", &cfg.canonical(), cfg.master_seed, |m| {
        let names: Vec<String> = if labels.len() == 1 {
            vec!["shots.csv".into()]
        } else {
            labels.iter().map(|l| format!("shots_{l}.csv")).collect()
        };
        let mut writers = Vec::with_capacity(names.len());
        for (name, label) in names.iter().zip(&labels) {
            let path = m.dir().join(name);
            let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
            let run_id = if labels.len() == 1 { cfg.run_id.clone() } else { format!("{}-{label}", cfg.run_id) };
            writers.push(ShotWriter::new(BufWriter::new(f), run_id)?);
        }
        run_streaming(&spec, workers, |o| {
            for (w, rec) in writers.iter_mut().zip(&o.records) {
                w.write(rec)?;
            }
            if (o.shot_index + 1) % 100 == 0 {
                log::info!("{} / {} shots", o.shot_index + 1, spec.n_shots);
            }
            Ok(())
        })?;
        for w in writers {
            w.finish()?;
        }
        for name in &names {
            m.record(name)?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct AnalysisOutput<'a> {
    input: String,
    input_sha256: String,
    run_id: String,
    n_shots: usize,
    spec: &'a AnalysisSpec,
    results: Vec<AnalysisResult>,
}

#[derive(Serialize)]
struct AnalysisResult {
    estimator: EstimatorSpec,
    result: EstimateResult,
}

/// Bad arguments and unusable data are the user's input problem.
fn input_error(e: squeezelab::Error) -> anyhow::Error {
    match e {
        squeezelab::Error::InvalidArgument(_) | squeezelab::Error::InsufficientData(_) | squeezelab::Error::IndexOutOfRange { .. } => {
            config_err(e.to_string())
        }
        e => e.into(),
    }
}

pub fn analyze(csv_path: &Path, spec: &AnalysisSpec, dir: &Path) -> anyhow::Result<()> {
    let bytes = std::fs::read(csv_path).map_err(|e| config_err(format!("cannot read {}: {e}", csv_path.display())))?;
    let table = read_shots(&bytes[..]).map_err(|e| config_err(format!("{}: {e}", csv_path.display())))?;
    if spec.estimators.is_empty() {
        return Err(config_err("analysis: no estimators requested"));
    }
    let n_sites = table.shots.first().map_or(0, |s| s.sites.len());
    let check = |ix: &[usize]| match ix.iter().find(|&&i| i >= n_sites) {
        Some(i) => Err(config_err(format!("analysis: site {i} out of range for {n_sites} sites"))),
        None => Ok(()),
    };
    let mut results = Vec::new();
    for e in &spec.estimators {
        let r = match e {
            EstimatorSpec::Xi2Direct { sites } => {
                check(sites)?;
                xi2_direct(&table.shots, sites, spec.detection_sigma, &spec.bootstrap)
            }
            EstimatorSpec::Xi2Rel { left, right } => {
                check(left)?;
                check(right)?;
                xi2_rel(&table.shots, left, right, spec.detection_sigma, &spec.bootstrap)
            }
        };
        results.push(AnalysisResult { estimator: e.clone(), result: r.map_err(input_error)? });
    }
    let spec_json = serde_json::to_string(spec)?;
    let out = AnalysisOutput {
        input: csv_path.display().to_string(),
        input_sha256: sha256_hex(&bytes),
        run_id: table.run_id.clone(),
        n_shots: table.shots.len(),
        spec,
        results,
    };
    with_manifest(dir, "analyze", &spec_json, spec.bootstrap.seed, |m| write_json(m, "results.json", &out))
}

/// Field sensitivity against interrogation time for the config's lattice.
pub fn scan(cfg: &RunConfig, t_ints: &[f64], phases: usize, workers: usize, dir: &Path) -> anyhow::Result<()> {
    cfg.validate()?;
    if t_ints.is_empty() {
        return Err(config_err("scan: no interrogation times"));
    }
    let run = cfg.ramsey_run(t_ints.to_vec(), phases).map_err(|e| config_err(format!("{e:#}")))?;
    run.spec().map_err(|e| config_err(e.to_string()))?;
    with_manifest(dir, "scan", &cfg.canonical(), cfg.master_seed, |m| {
        let data = run.execute(workers)?;
        let h = RegionSpec::halves(run.sites.len());
        let boot = BootstrapConfig { seed: cfg.master_seed, ..Default::default() };
        let rows = field_scan(&data, &h.regions[0], &h.regions[1], cfg.noise.detection_sigma, &boot)?;
        let mut t = Table::new(&[
            "t_int_us", "sigma_b_pT", "ci_low_pT", "ci_high_pT", "sql_pT", "enhancement", "visibility", "slope", "single_shot_visibility",
        ]);
        for r in &rows {
            t.push(vec![
                r.t_int * 1e6,
                r.sigma_b * 1e12,
                r.ci_low * 1e12,
                r.ci_high * 1e12,
                r.sql * 1e12,
                r.enhancement,
                r.visibility,
                r.slope,
                r.single_shot_visibility,
            ]);
        }
        write_table(m, "scan.csv", &t)?;
        write_json(m, "scan.json", &rows)?;
        let x = t.column("t_int_us");
        write_plot(
            m,
            "scan.svg",
            "Field sensitivity",
            "t_int (us)",
            "sigma_B (pT)",
            &[Series::points("sigma_B", x.clone(), t.column("sigma_b_pT")), Series::line("SQL", x, t.column("sql_pT"))],
        )
    })
}

/// Trajectory scan of metrological squeezing with loss on one site.
pub fn loss_floor(
    n_atoms: usize,
    times: &[f64],
    loss: &LossConfig,
    lattice: &LatticeConfig,
    seed: u64,
    dir: &Path,
) -> anyhow::Result<Table> {
    if n_atoms == 0 {
        return Err(config_err("loss-floor: atom number must be >= 1"));
    }
    loss.validate().map_err(|e| config_err(format!("loss: {e}")))?;
    let site = lattice.site(0, n_atoms);
    let config = serde_json::json!({ "n_atoms": n_atoms, "times": times, "loss": loss, "lattice": lattice });
    let mut table = Table::new(&["t_ms", "squeezing_db", "stderr_db", "n_mean", "mean_spin"]);
    with_manifest(dir, "loss-floor", &config.to_string(), seed, |m| {
        let st = make_css(n_atoms, std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)?;
        let loss = LossConfig { enabled: true, ..loss.clone() };
        let rows = evolve_with_loss(&st, &site, &loss, times, loss.n_trajectories, seed).map_err(|e| match e {
            squeezelab::Error::InvalidArgument(msg) => config_err(msg),
            e => e.into(),
        })?;
        for r in &rows {
            table.push(vec![r.t * 1e3, r.squeezing_db, r.stderr, r.n_mean, r.mean_spin]);
        }
        write_table(m, "loss_floor.csv", &table)?;
        let lossless = LossConfig { enabled: false, ..loss.clone() };
        let ideal = evolve_with_loss(&st, &site, &lossless, times, 1, seed)?;
        write_plot(
            m,
            "loss_floor.svg",
            "Squeezing with particle loss",
            "t (ms)",
            "xi2_R (dB)",
            &[
                Series::points("with loss", table.column("t_ms"), table.column("squeezing_db")),
                Series::line("no loss", ideal.iter().map(|r| r.t * 1e3).collect(), ideal.iter().map(|r| r.squeezing_db).collect()),
            ],
        )
    })?;
    Ok(table)
}
