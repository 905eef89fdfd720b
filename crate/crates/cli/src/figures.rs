//! `reproduce` targets: preset runs whose tables and plots mirror the
//! published figures.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use anyhow::Result;
use serde_json::json;
use squeezelab::estimators::{beta2, fit_fringe_harmonics, xi2_direct, xi2_rel, BootstrapConfig, EstimateResult};
use squeezelab::lattice::{AtomNumberLaw, LatticeConfig, RegionSpec, SiteParams};
use squeezelab::loss::LossConfig;
use squeezelab::magnetometry::{field_scan, gradient_scan, single_well_pairs, summed_window_pairs, FieldScanRow, RamseyRun};
use squeezelab::measurement::ShotRecord;
use squeezelab::noise::{NoiseConfig, ShotNoise};
use squeezelab::pipeline::{records, run, ReadoutPlan, RunSpec};
use squeezelab::presets::{css_spec, oat_spec, paper_lattice, paper_ramsey_run, reference_tomography_angle, sites, PAPER_OAT_TIME, PAPER_T_INT};
use squeezelab::rng::Stream;
use squeezelab::sequence::{make_oat_sequence_with, oat_generation, ramsey_tail, Executor, OatOptions, ProtocolParams, Readout};
use squeezelab::spin::{moments, CollectiveState};
use squeezelab::units::to_db;

use crate::commands::{loss_floor, with_manifest, write_json, write_plot, write_table};
use crate::manifest::ManifestWriter;
use crate::plot::{Series, Table};

pub const TARGETS: [&str; 11] = ["fig1b", "fig1c", "fig2b", "fig2c", "fig3b", "fig4a", "fig4b", "supp2", "supp4", "supp5", "loss-floor"];

/// Photon shot noise of the imaging, atoms per cloud.
const DETECTION_SIGMA: f64 = 4.0;

#[derive(Clone, Copy, Debug)]
pub struct Options {
    pub shots: Option<usize>,
    pub seed: Option<u64>,
    pub workers: usize,
}

impl Options {
    fn shots(&self, default: usize) -> usize {
        self.shots.unwrap_or(default)
    }

    fn seed(&self, default: u64) -> u64 {
        self.seed.unwrap_or(default)
    }

    fn boot(&self, seed: u64) -> BootstrapConfig {
        BootstrapConfig { n_resamples: 200, seed }
    }
}

pub fn reproduce(target: &str, opts: &Options, dir: &Path) -> Result<()> {
    let f: fn(&Options, &mut ManifestWriter) -> Result<()> = match target {
        "fig1b" => fig1b,
        "fig1c" => fig1c,
        "fig2b" => fig2b,
        "fig2c" => fig2c,
        "fig3b" => fig3b,
        "fig4a" => fig4a,
        "fig4b" => fig4b,
        "supp2" => supp2,
        "supp4" => supp4,
        "supp5" => supp5,
        "loss-floor" => {
            let seed = opts.seed(10);
            let times: Vec<f64> = (0..=30).map(|k| k as f64 * 0.002).collect();
            let loss = LossConfig { n_trajectories: opts.shots(500), ..LossConfig::default() };
            loss_floor(500, &times, &loss, &LatticeConfig::default(), seed, dir)?;
            return Ok(());
        }
        _ => return Err(crate::config::config_err(format!("unknown target '{target}'; available: {}", TARGETS.join(", ")))),
    };
    let config = json!({ "target": target, "shots": opts.shots, "seed": opts.seed });
    with_manifest(dir, &format!("reproduce {target}"), &config.to_string(), opts.seed.unwrap_or(0), |m| f(opts, m))
}

fn db_se(e: &EstimateResult) -> f64 {
    10.0 / std::f64::consts::LN_10 * e.std_error / e.value.abs()
}

fn paper_sites(seed: u64) -> Result<Vec<SiteParams>> {
    Ok(sites(&paper_lattice(), seed)?)
}

/// Relative and direct squeezing of growing central windows, for the
/// squeezed state and the coherent reference.
fn fig1b(o: &Options, m: &mut ManifestWriter) -> Result<()> {
    let seed = o.seed(104);
    let n = o.shots(200);
    let sites = paper_sites(1)?;
    let alpha = reference_tomography_angle(&paper_lattice(), PAPER_OAT_TIME, &OatOptions::default())?;
    let sq = records(&run(&oat_spec(sites.clone(), &[alpha], true, n, seed)?, o.workers)?, 0);
    let css = records(&run(&css_spec(sites.clone(), n, seed + 1)?, o.workers)?, 0);
    let c = sites.len() / 2;
    let mut t = Table::new(&["n_tot", "xi2_rel_db", "xi2_rel_se_db", "xi2_direct_db", "xi2_direct_se_db", "css_rel_db", "css_rel_se_db"]);
    for w in 1..=c {
        let left: Vec<usize> = (c - w..c).collect();
        let right: Vec<usize> = (c + 1..=c + w).collect();
        let all: Vec<usize> = left.iter().chain(&right).copied().collect();
        let n_tot: usize = all.iter().map(|&i| sites[i].n_atoms).sum();
        let rel = xi2_rel(&sq, &left, &right, DETECTION_SIGMA, &o.boot(seed))?;
        let dir = xi2_direct(&sq, &all, DETECTION_SIGMA, &o.boot(seed))?;
        let cr = xi2_rel(&css, &left, &right, DETECTION_SIGMA, &o.boot(seed))?;
        t.push(vec![n_tot as f64, rel.db(), db_se(&rel), dir.db(), db_se(&dir), cr.db(), db_se(&cr)]);
    }
    write_table(m, "fig1b.csv", &t)?;
    let x = t.column("n_tot");
    write_plot(
        m,
        "fig1b.svg",
        "Squeezing against ensemble size",
        "N_tot",
        "xi2 (dB)",
        &[
            Series::points("relative", x.clone(), t.column("xi2_rel_db")),
            Series::points("direct", x.clone(), t.column("xi2_direct_db")),
            Series::points("coherent state, relative", x, t.column("css_rel_db")),
        ],
    )
}

fn tomography_angles() -> Vec<f64> {
    (-6..=6).map(|k| 15.0 * k as f64).collect()
}

/// Direct and relative squeezing of the halves at each tomography angle.
fn tomography_table(recs: &[Vec<ShotRecord>], n_sites: usize, o: &Options, seed: u64) -> Result<Table> {
    let h = RegionSpec::halves(n_sites);
    let all: Vec<usize> = h.regions.concat();
    let mut t = Table::new(&["alpha_deg", "xi2_direct_db", "xi2_direct_se_db", "xi2_rel_db", "xi2_rel_se_db"]);
    for (a, r) in tomography_angles().into_iter().zip(recs) {
        let d = xi2_direct(r, &all, DETECTION_SIGMA, &o.boot(seed))?;
        let rel = xi2_rel(r, &h.regions[0], &h.regions[1], DETECTION_SIGMA, &o.boot(seed))?;
        t.push(vec![a, d.db(), db_se(&d), rel.db(), db_se(&rel)]);
    }
    Ok(t)
}

fn tomography_plot(m: &mut ManifestWriter, name: &str, title: &str, t: &Table) -> Result<()> {
    let x = t.column("alpha_deg");
    write_plot(
        m,
        name,
        title,
        "alpha (deg)",
        "xi2 (dB)",
        &[Series::points("direct", x.clone(), t.column("xi2_direct_db")), Series::points("relative", x, t.column("xi2_rel_db"))],
    )
}

fn fig1c(o: &Options, m: &mut ManifestWriter) -> Result<()> {
    let seed = o.seed(51);
    let sites = paper_sites(1)?;
    let alphas: Vec<f64> = tomography_angles().iter().map(|a| a.to_radians()).collect();
    let out = run(&oat_spec(sites.clone(), &alphas, true, o.shots(200), seed)?, o.workers)?;
    let recs: Vec<Vec<ShotRecord>> = (0..alphas.len()).map(|v| records(&out, v)).collect();
    let t = tomography_table(&recs, sites.len(), o, seed)?;
    write_table(m, "fig1c.csv", &t)?;
    tomography_plot(m, "fig1c.svg", "Tomography of the squeezed state", &t)
}

/// Tomography after the swap out and back with a 1 µs hold.
fn fig2b(o: &Options, m: &mut ManifestWriter) -> Result<()> {
    let seed = o.seed(21);
    let sites = paper_sites(1)?;
    let r = paper_ramsey_run(sites.clone(), vec![PAPER_T_INT], 1, o.shots(200), seed)?;
    let branches = tomography_angles()
        .iter()
        .map(|a| ramsey_tail(1e-6, r.field.t_pi, Readout::tomography(a.to_radians())))
        .collect::<squeezelab::Result<Vec<_>>>()?;
    let spec = RunSpec { readouts: ReadoutPlan::Branches(branches), ..r.spec()? };
    let out = run(&spec, o.workers)?;
    let recs: Vec<Vec<ShotRecord>> = (0..tomography_angles().len()).map(|v| records(&out, v)).collect();
    let t = tomography_table(&recs, sites.len(), o, seed)?;
    write_table(m, "fig2b.csv", &t)?;
    tomography_plot(m, "fig2b.svg", "Tomography after state swapping", &t)
}

/// Ramsey fringe at a 1 µs hold.
fn fig2c(o: &Options, m: &mut ManifestWriter) -> Result<()> {
    let seed = o.seed(22);
    let sites = paper_sites(1)?;
    let t_int = 2.0 * squeezelab::magnetometry::FieldProtocolParams::default().t_pi + 1e-6;
    let data = paper_ramsey_run(sites.clone(), vec![t_int], 16, o.shots(50), seed)?.execute(o.workers)?;
    let all: Vec<usize> = (0..sites.len()).collect();
    let z = |r: &ShotRecord| {
        let (a, b) = r.sites.iter().fold((0.0, 0.0), |(a, b), s| (a + s.n_a_det, b + s.n_b_det));
        (b - a) / (a + b)
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut t = Table::new(&["phase_deg", "z_mean", "z_se"]);
    for (k, phase) in data.run.phases().into_iter().enumerate() {
        let zs: Vec<f64> = data.records(0, k).iter().map(z).collect();
        let mean = squeezelab::estimators::mean(&zs);
        t.push(vec![phase.to_degrees(), mean, squeezelab::estimators::std_dev(&zs) / (zs.len() as f64).sqrt()]);
        xs.extend(std::iter::repeat(phase).take(zs.len()));
        ys.extend(zs);
    }
    let fit = fit_fringe_harmonics(&xs, &ys, 2)?;
    let fringe = data.fringe(0, &all)?;
    write_table(m, "fig2c.csv", &t)?;
    write_json(m, "fig2c_fit.json", &fringe)?;
    let curve: Vec<f64> = (0..=180).map(|k| FRAC_PI_2 + k as f64 * std::f64::consts::TAU / 180.0).collect();
    write_plot(
        m,
        "fig2c.svg",
        &format!("Ramsey fringe, V = {:.3}", fringe.visibility),
        "phase (deg)",
        "z",
        &[
            Series::points("data", t.column("phase_deg"), t.column("z_mean")),
            Series::line("fit", curve.iter().map(|p| p.to_degrees()).collect(), curve.iter().map(|&p| fit.eval(p)).collect()),
        ],
    )
}

fn scan_table(rows: &[FieldScanRow]) -> Table {
    let mut t = Table::new(&[
        "t_int_us", "sigma_b_pT", "ci_low_pT", "ci_high_pT", "sql_pT", "enhancement", "visibility", "slope", "single_shot_visibility", "mean_dz",
    ]);
    for r in rows {
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
            r.mean_dz,
        ]);
    }
    t
}

fn sensitivity_plot(m: &mut ManifestWriter, name: &str, title: &str, t: &Table) -> Result<()> {
    let x = t.column("t_int_us");
    write_plot(
        m,
        name,
        title,
        "t_int (us)",
        "sigma_B (pT)",
        &[Series::points("sigma_B", x.clone(), t.column("sigma_b_pT")), Series::line("SQL", x, t.column("sql_pT"))],
    )
}

fn fig3b(o: &Options, m: &mut ManifestWriter) -> Result<()> {
    let seed = o.seed(7);
    let sites = paper_sites(1)?;
    let t_ints = vec![150e-6, 250e-6, PAPER_T_INT, 500e-6, 700e-6, 1e-3];
    let data = paper_ramsey_run(sites.clone(), t_ints, 5, o.shots(100), seed)?.execute(o.workers)?;
    let h = RegionSpec::halves(sites.len());
    let rows = field_scan(&data, &h.regions[0], &h.regions[1], DETECTION_SIGMA, &o.boot(seed))?;
    let t = scan_table(&rows);
    write_table(m, "fig3b.csv", &t)?;
    sensitivity_plot(m, "fig3b.svg", "Single-shot field sensitivity", &t)
}

/// Working-point `dz` of the halves against interrogation time.
fn fig4a(o: &Options, m: &mut ManifestWriter) -> Result<()> {
    let seed = o.seed(8);
    let sites = paper_sites(1)?;
    let t_ints = vec![150e-6, 200e-6, 250e-6, 300e-6, PAPER_T_INT];
    let data = paper_ramsey_run(sites.clone(), t_ints.clone(), 5, o.shots(100), seed)?.execute(o.workers)?;
    let h = RegionSpec::halves(sites.len());
    let rows = field_scan(&data, &h.regions[0], &h.regions[1], DETECTION_SIGMA, &o.boot(seed))?;
    let mut t = Table::new(&["t_int_us", "dz_mean", "dz_se", "dz_expected"]);
    for (j, r) in rows.iter().enumerate() {
        t.push(vec![r.t_int * 1e6, r.mean_dz, r.mean_dz_se, data.expected_dz(j, &h.regions[0], &h.regions[1])]);
    }
    write_table(m, "fig4a.csv", &t)?;
    let x = t.column("t_int_us");
    write_plot(
        m,
        "fig4a.svg",
        "Gradient signal against interrogation time",
        "t_int (us)",
        "dz",
        &[Series::points("measured", x.clone(), t.column("dz_mean")), Series::line("expected", x, t.column("dz_expected"))],
    )
}

/// Gradient sensitivity against baseline for single wells and summed windows.
fn fig4b(o: &Options, m: &mut ManifestWriter) -> Result<()> {
    let seed = o.seed(9);
    let sites = paper_sites(1)?;
    let data = paper_ramsey_run(sites.clone(), vec![PAPER_T_INT], 5, o.shots(200), seed)?.execute(o.workers)?;
    let mut t = Table::new(&[
        "summed", "baseline_um", "sensitivity_pT_um", "ci_low_pT_um", "ci_high_pT_um", "sql_pT_um", "enhancement", "gradient_pT_um",
    ]);
    for (summed, pairs) in [(0.0, single_well_pairs(sites.len())), (1.0, summed_window_pairs(sites.len())?)] {
        for r in gradient_scan(&data, 0, &pairs, &o.boot(seed))? {
            t.push(vec![
                summed,
                r.baseline,
                r.sensitivity * 1e12,
                r.ci_low * 1e12,
                r.ci_high * 1e12,
                r.sql * 1e12,
                r.enhancement,
                r.gradient * 1e12,
            ]);
        }
    }
    write_table(m, "fig4b.csv", &t)?;
    let (xs, ys) = t.select("summed", 0.0, "baseline_um", "sensitivity_pT_um");
    let (xw, yw) = t.select("summed", 1.0, "baseline_um", "sensitivity_pT_um");
    let (xq, yq) = t.select("summed", 0.0, "baseline_um", "sql_pT_um");
    write_plot(
        m,
        "fig4b.svg",
        "Gradient sensitivity against baseline",
        "baseline (um)",
        "sensitivity (pT/um)",
        &[Series::points("single wells", xs, ys), Series::points("summed windows", xw, yw), Series::line("classical limit, single wells", xq, yq)],
    )
}

/// Noiseless single-site squeezing after 20 ms against atom number.
fn supp2(_o: &Options, m: &mut ManifestWriter) -> Result<()> {
    let cfg = paper_lattice();
    let opts = OatOptions::default();
    let protocol = ProtocolParams::default();
    let noise = ShotNoise::default();
    let mut t = Table::new(&["n_atoms", "xi2_n_db", "alpha_min_deg", "max_var_db"]);
    for n in (300..=600).step_by(25) {
        let site = cfg.site(0, n);
        let ex = Executor { site: &site, noise: &noise, protocol: &protocol };
        let mut st = CollectiveState::all_a(n)?;
        ex.run::<Stream>(&mut st, &oat_generation(PAPER_OAT_TIME, &opts), None)?;
        let mo = moments(&st);
        let css = n as f64 / 4.0;
        let a = mo.optimal_angle();
        let a = if a > FRAC_PI_2 { a - std::f64::consts::PI } else { a };
        t.push(vec![n as f64, to_db(mo.min_variance() / css), a.to_degrees(), to_db(mo.max_variance() / css)]);
    }
    write_table(m, "supp2.csv", &t)?;
    let x = t.column("n_atoms");
    write_plot(
        m,
        "supp2.svg",
        "Single-site squeezing against atom number",
        "N",
        "dB / deg",
        &[
            Series::points("xi2_N (dB)", x.clone(), t.column("xi2_n_db")),
            Series::points("alpha_min (deg)", x.clone(), t.column("alpha_min_deg")),
            Series::points("max variance (dB)", x, t.column("max_var_db")),
        ],
    )
}

/// `beta2` against tomography angle without echo, with echo, and with echo
/// plus pulse detuning noise.
fn supp4(o: &Options, m: &mut ManifestWriter) -> Result<()> {
    let seed = o.seed(91);
    let cfg = LatticeConfig { n_sites: 10, ..Default::default() };
    let sites = sites(&cfg, seed)?;
    let angles: Vec<f64> = (0..=6).map(|k| 15.0 * k as f64).collect();
    let total: usize = sites.iter().map(|s| s.n_atoms).sum();
    let targets: Vec<usize> = (1..=8).map(|k| k * total / 9).collect();
    let variants = [("no echo", false, 0.0), ("echo", true, 0.0), ("echo + pulse noise", true, 1.5)];
    let mut t = Table::new(&["variant", "alpha_deg", "beta2", "beta2_se"]);
    for (v, &(_, echo, pulse_sigma)) in variants.iter().enumerate() {
        let spec = RunSpec {
            run_id: "technical".into(),
            sites: sites.clone(),
            sequence: make_oat_sequence_with(0.015, 0.0, &OatOptions { echo, ..Default::default() })?,
            readouts: ReadoutPlan::All(angles.iter().map(|a| Readout::tomography(a.to_radians())).collect()),
            noise: NoiseConfig { pulse_detuning_sigma: pulse_sigma, gen_detuning_sigma: 0.45, ..Default::default() },
            loss: LossConfig::default(),
            protocol: ProtocolParams::default(),
            n_shots: o.shots(300),
            master_seed: seed,
            atom_jitter: 0.0,
        };
        let out = run(&spec, o.workers)?;
        for (k, a) in angles.iter().enumerate() {
            let b = beta2(&records(&out, k), &sites, &targets, 0.05, 30, DETECTION_SIGMA, &BootstrapConfig { n_resamples: 100, seed })?;
            t.push(vec![v as f64, *a, b.value, b.std_error]);
        }
    }
    write_table(m, "supp4.csv", &t)?;
    let series: Vec<Series> = variants
        .iter()
        .enumerate()
        .map(|(v, (name, ..))| {
            let (x, y) = t.select("variant", v as f64, "alpha_deg", "beta2");
            Series::points(name, x, y)
        })
        .collect();
    write_plot(m, "supp4.svg", "Technical noise against tomography angle", "alpha (deg)", "beta2", &series)
}

/// Sensitivity scan out to long interrogation times with drifting fields.
fn supp5(o: &Options, m: &mut ManifestWriter) -> Result<()> {
    let seed = o.seed(71);
    let cfg = LatticeConfig { n_sites: 4, atom_number_law: AtomNumberLaw::Constant { n: 500 }, ..Default::default() };
    let t_ints = vec![PAPER_T_INT, 1e-3, 2e-3, 4e-3, 8e-3];
    let mut r: RamseyRun = paper_ramsey_run(sites(&cfg, 3)?, t_ints, 5, o.shots(150), seed)?;
    r.noise.longterm_block = 10;
    let data = r.execute(o.workers)?;
    let rows = field_scan(&data, &[0, 1], &[2, 3], DETECTION_SIGMA, &o.boot(seed))?;
    let t = scan_table(&rows);
    write_table(m, "supp5.csv", &t)?;
    let x = t.column("t_int_us");
    write_plot(
        m,
        "supp5.svg",
        "Contrast and enhancement with field drift",
        "t_int (us)",
        "",
        &[
            Series::points("mean-fringe visibility", x.clone(), t.column("visibility")),
            Series::points("single-shot visibility", x.clone(), t.column("single_shot_visibility")),
            Series::points("enhancement", x, t.column("enhancement")),
        ],
    )
}
