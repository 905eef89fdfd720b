use proptest::prelude::*;
use squeezelab::lattice::{LatticeConfig, SiteParams};
use squeezelab::loss::*;
use squeezelab::rng::{substream, Purpose};
use squeezelab::spin::{make_css, sample_jz, CollectiveState};
use std::f64::consts::FRAC_PI_2;

fn site(n: usize) -> SiteParams {
    LatticeConfig::default().site(0, n)
}

fn equator(n: usize) -> CollectiveState {
    make_css(n, FRAC_PI_2, FRAC_PI_2).unwrap()
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn slow_loss_converges_to_unitary_twisting() {
    let n = 200;
    let s = site(n);
    let t = 0.020;
    let mut unitary = equator(n);
    unitary.apply_oat(s.chi, s.delta_offset, t);
    // rotate so Jz carries the squeezed quadrature before sampling
    unitary.apply_rotation(1.2, 0.0);
    let samples = 4000;
    let mut urng = substream(1, 0, 0, Purpose::Measurement);
    let u: Vec<f64> = (0..samples).map(|_| sample_jz(&unitary, &mut urng)).collect();
    let mut last = f64::INFINITY;
    for scale in [1.0, 1e3, 1e9] {
        let cfg = LossConfig { enabled: true, feshbach_timescale: 0.110 * scale, two_body_relax_timescale: 0.2 * scale, ..Default::default() };
        let mut rng = substream(2, 0, 0, Purpose::Loss);
        let mut mrng = substream(3, 0, 0, Purpose::Measurement);
        let l: Vec<f64> = (0..samples)
            .map(|_| {
                let mut st = oat_with_loss(&equator(n), &s, &cfg, n, 0.0, t, &mut rng).unwrap().state;
                st.apply_rotation(1.2, 0.0);
                // compare m per atom so lost atoms do not shift the scale
                sample_jz(&st, &mut mrng) * n as f64 / st.n_atoms() as f64
            })
            .collect();
        let d = ks(u.clone(), l);
        if scale == 1e9 {
            // 1% critical value for two samples of 4000
            assert!(d < 1.63 * (2.0 / samples as f64).sqrt(), "KS {d}");
            let tr = oat_with_loss(&equator(n), &s, &cfg, n, 0.0, t, &mut rng).unwrap();
            assert!(tr.jumps.is_empty());
            let mut plain = equator(n);
            plain.apply_oat(s.chi, s.delta_offset, t);
            assert!(tr.state.distance_up_to_phase(&plain) < 1e-6);
        }
        assert!(d <= last + 0.02);
        last = d;
    }
}

#[test]
fn pair_rate_calibration() {
    let cfg = LossConfig::default();
    let n0 = 500;
    let nb = 250.0;
    assert!((2.0 * cfg.pair_rate(n0) * nb * (nb - 1.0) - nb / cfg.two_body_relax_timescale).abs() < 1e-9);
    assert_eq!(cfg.pair_rate(2), 0.0);
    assert!(LossConfig { feshbach_timescale: 0.0, ..cfg.clone() }.validate().is_err());
    assert!(LossConfig { two_body_relax_timescale: f64::NAN, ..cfg }.validate().is_err());
}

#[test]
fn mean_atom_number_never_increases() {
    let cfg = LossConfig { enabled: true, ..Default::default() };
    let times: Vec<f64> = (0..=12).map(|k| k as f64 * 0.005).collect();
    let rows = evolve_with_loss(&equator(300), &site(300), &cfg, &times, 200, 5).unwrap();
    assert_eq!(rows[0].n_mean, 300.0);
    for w in rows.windows(2) {
        assert!(w[1].n_mean <= w[0].n_mean);
    }
    // expected one-body decay alone gives 300 exp(-t / 110 ms)
    assert!(rows[12].n_mean < 300.0 * (-0.060f64 / 0.110).exp());
}

#[test]
fn squeezing_curve_is_convex_at_its_minimum() {
    let n = 100;
    let cfg = LossConfig { enabled: true, ..Default::default() };
    let times: Vec<f64> = (1..=30).map(|k| k as f64 * 0.004).collect();
    let rows = evolve_with_loss(&equator(n), &site(n), &cfg, &times, 400, 8).unwrap();
    let db: Vec<f64> = rows.iter().map(|r| r.squeezing_db).collect();
    let k = (0..db.len()).min_by(|&a, &b| db[a].total_cmp(&db[b])).unwrap();
    assert!(k > 0 && k + 1 < db.len(), "minimum at the edge of the scan ({k})");
    assert!(db[k - 1] - 2.0 * db[k] + db[k + 1] > 0.0);
    assert!(db[k] < -3.0);
}

#[test]
fn bad_inputs() {
    let cfg = LossConfig::default();
    assert!(evolve_with_loss(&equator(10), &site(10), &cfg, &[0.1, 0.05], 10, 0).is_err());
    assert!(evolve_with_loss(&equator(10), &site(10), &cfg, &[0.1], 0, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn jumps_only_remove_atoms(n in 2usize..120, seed in any::<u64>(), t in 0.0f64..0.08) {
        let cfg = LossConfig { enabled: true, ..Default::default() };
        let tr = oat_with_loss(&equator(n), &site(n), &cfg, n, 0.0, t, &mut substream(seed, 0, 0, Purpose::Loss)).unwrap();
        let mut prev = n;
        let mut time = 0.0;
        for j in &tr.jumps {
            prop_assert!(j.n_after < prev);
            prop_assert!(j.time >= time && j.time <= t);
            prev = j.n_after;
            time = j.time;
        }
        prop_assert_eq!(tr.state.n_atoms(), prev);
        prop_assert!((tr.state.norm_sqr() - 1.0).abs() < 1e-10);
    }
}
