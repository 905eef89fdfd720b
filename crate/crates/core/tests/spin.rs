use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use squeezelab::rng::{substream, Purpose};
use squeezelab::spin::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::f64::consts::{FRAC_PI_2, PI};

fn random_state<R: Rng>(n: usize, rng: &mut R) -> CollectiveState {
    let mut v: Vec<Complex64> =
        (0..=n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    CollectiveState::from_amplitudes(n, v).unwrap()
}

fn state_from(n: usize, re: &[f64], im: &[f64]) -> CollectiveState {
    let mut v: Vec<Complex64> = (0..=n).map(|k| Complex64::new(re[k], im[k])).collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt().max(1e-9);
    v.iter_mut().for_each(|a| *a /= norm);
    if v.iter().all(|a| a.norm() < 1e-6) {
        v[0] = Complex64::new(1.0, 0.0);
    }
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    CollectiveState::from_amplitudes(n, v).unwrap()
}

/// Minimal variance after OAT `chi t` from a coherent state on the equator.
fn ku_min_variance(n: usize, chi_t: f64) -> f64 {
    let nf = n as f64;
    let a = 1.0 - (2.0 * chi_t).cos().powi(n as i32 - 2);
    let b = 4.0 * chi_t.sin() * chi_t.cos().powi(n as i32 - 2);
    0.25 * nf * (1.0 + 0.25 * (nf - 1.0) * (a - (a * a + b * b).sqrt()))
}

#[test]
fn oracle_equivalence_over_random_draws() {
    let mut rng = substream(2024, 0, 0, Purpose::Custom(1));
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let s = random_state(n, &mut rng);
        let p = HamiltonianParams {
            rabi: rng.random_range(0.0..2.0 * PI * 500.0),
            phase: rng.random_range(0.0..2.0 * PI),
            delta: rng.random_range(-2.0 * PI * 5.0..2.0 * PI * 5.0),
            chi: rng.random_range(0.0..2.0 * PI * 2.0),
        };
        let t = rng.random_range(0.0..3e-3);
        let reference = brute_force_oracle(&s, &p, t).unwrap();
        let pulse = evolve_pulse(&s, p.rabi, p.phase, p.delta, p.chi, t).unwrap();
        worst = worst.max(pulse.distance_up_to_phase(&reference));

        let free = HamiltonianParams { rabi: 0.0, ..p };
        let oat = evolve_oat(&s, p.chi, p.delta, t).unwrap();
        worst = worst.max(oat.distance_up_to_phase(&brute_force_oracle(&s, &free, t).unwrap()));

        let rot = HamiltonianParams { delta: 0.0, chi: 0.0, ..p };
        let r = rotate(&s, RotationSpec::new(p.rabi * t, p.phase)).unwrap();
        worst = worst.max(r.distance_up_to_phase(&brute_force_oracle(&s, &rot, t).unwrap()));
    }
    assert!(worst < 1e-8, "worst amplitude error {worst:e}");
}

#[test]
fn css_examples() {
    let s = make_css(4, 0.0, 1.3).unwrap();
    assert!((s.amplitudes()[0].norm() - 1.0).abs() < 1e-14);
    let s = make_css(4, FRAC_PI_2, 0.0).unwrap();
    let binom = [1.0, 4.0, 6.0, 4.0, 1.0];
    for k in 0..5 {
        assert!((s.amplitudes()[k].norm_sqr() - binom[k] / 16.0).abs() < 1e-14);
    }
    // same state from the oracle: π/2 about -y... any axis giving +x
    let a = CollectiveState::all_a(4).unwrap();
    let o = brute_force_oracle(&a, &HamiltonianParams { rabi: 1.0, phase: 1.5 * PI, ..Default::default() }, FRAC_PI_2).unwrap();
    assert!(o.distance_up_to_phase(&s) < 1e-10);
    assert!(make_css(0, 0.1, 0.1).is_err());
    assert!(make_css(3, f64::NAN, 0.1).is_err());
}

#[test]
fn full_turn_and_flip() {
    for n in 1..=8 {
        let s = make_css(n, 0.7, 0.2).unwrap();
        let r = rotate(&s, RotationSpec::new(2.0 * PI, 0.9)).unwrap();
        assert!(r.distance_up_to_phase(&s) < 1e-10);
        let flipped = rotate(&CollectiveState::all_a(n).unwrap(), RotationSpec::new(PI, 2.1)).unwrap();
        assert!(flipped.distance_up_to_phase(&CollectiveState::fock(n, n).unwrap()) < 1e-10);
    }
}

#[test]
fn pulse_reductions() {
    let s = make_css(60, 1.1, 0.4).unwrap();
    let rabi = 2.0 * PI * 310.0;
    let p = evolve_pulse(&s, rabi, 0.8, 0.0, 0.0, FRAC_PI_2 / rabi).unwrap();
    let r = rotate(&s, RotationSpec::new(FRAC_PI_2, 0.8)).unwrap();
    assert!(p.distance_up_to_phase(&r) < 1e-8);
    let p = evolve_pulse(&s, 0.0, 0.8, 3.0, 0.4, 0.01).unwrap();
    let o = evolve_oat(&s, 0.4, 3.0, 0.01).unwrap();
    assert!(p.distance_up_to_phase(&o) < 1e-10);
    // n = 6 π pulse with detuning against the oracle
    let s = make_css(6, 0.3, 0.0).unwrap();
    let params = HamiltonianParams { rabi, phase: 0.0, delta: 2.0 * PI * 1.5, chi: 2.0 * PI * 0.064 };
    let t = PI / rabi;
    let a = moments(&evolve_pulse(&s, rabi, 0.0, params.delta, params.chi, t).unwrap());
    let b = moments(&brute_force_oracle(&s, &params, t).unwrap());
    for i in 0..3 {
        assert!((a.mean[i] - b.mean[i]).abs() < 1e-8);
        for j in 0..3 {
            assert!((a.cov[i][j] - b.cov[i][j]).abs() < 1e-8);
        }
    }
}

#[test]
fn kitagawa_ueda_formula_matches_oracle_at_small_n() {
    for n in 3..=10 {
        for &chi_t in &[0.05, 0.2, 0.6] {
            let css = make_css(n, FRAC_PI_2, 0.0).unwrap();
            let out = brute_force_oracle(&css, &HamiltonianParams { chi: 1.0, ..Default::default() }, chi_t).unwrap();
            let m = moments(&out);
            let ku = ku_min_variance(n, chi_t);
            assert!((m.min_variance() - ku).abs() < 1e-9 * (n as f64), "n {n} chi_t {chi_t}: {} vs {ku}", m.min_variance());
            let jx = 0.5 * n as f64 * chi_t.cos().powi(n as i32 - 1);
            assert!((m.mean_jx() - jx).abs() < 1e-10);
        }
    }
}

#[test]
fn kitagawa_ueda_at_500_atoms() {
    let (n, chi, t) = (500, 2.0 * PI * 0.064, 0.02);
    let css = make_css(n, FRAC_PI_2, 0.0).unwrap();
    let m = moments(&evolve_oat(&css, chi, 0.0, t).unwrap());
    let ku = ku_min_variance(n, chi * t);
    assert!((m.min_variance() / ku - 1.0).abs() < 1e-6, "{} vs {ku}", m.min_variance());
    let jx = 0.5 * n as f64 * (chi * t).cos().powi(n as i32 - 1);
    assert!((m.mean_jx() / jx - 1.0).abs() < 1e-8);
}

#[test]
fn sample_jz_statistics() {
    let mut rng = substream(7, 0, 0, Purpose::Custom(2));
    let fock = CollectiveState::fock(10, 8).unwrap();
    for _ in 0..100 {
        assert_eq!(sample_jz(&fock, &mut rng), 3.0);
    }

    let css = make_css(400, FRAC_PI_2, 0.0).unwrap();
    let draws: Vec<f64> = (0..100_000).map(|_| sample_jz(&css, &mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    // Var of a sample variance for a near-Gaussian: 2 sigma^4 / (n - 1)
    let se = (2.0 * 100.0f64.powi(2) / draws.len() as f64).sqrt();
    assert!((var - 100.0).abs() < 5.0 * se, "var {var}");

    let s = random_state(20, &mut rng);
    let probs = s.probabilities();
    let n_draws = 100_000;
    let mut counts = vec![0usize; 21];
    for _ in 0..n_draws {
        counts[sample_n_b(&s, &mut rng)] += 1;
    }
    let (mut stat, mut bins) = (0.0, 0);
    for k in 0..=20 {
        let e = probs[k] * n_draws as f64;
        if e >= 5.0 {
            stat += (counts[k] as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi2 {stat} over {bins} bins, p = {p}");
}

#[test]
fn moments_of_css() {
    let s = make_css(500, FRAC_PI_2, 0.0).unwrap();
    let m = moments(&s);
    assert!((m.mean_jx() - 250.0).abs() < 1e-9);
    assert!((m.var_jz() - 125.0).abs() < 1e-9);
    assert!((m.number_squeezing(0.0) - 1.0).abs() < 1e-12);
    let a = moments(&CollectiveState::all_a(500).unwrap());
    assert!((a.mean_jz() + 250.0).abs() < 1e-12 && a.var_jz().abs() < 1e-12);
}

fn arb_state(max_n: usize) -> impl Strategy<Value = CollectiveState> {
    (1..=max_n).prop_flat_map(|n| {
        (Just(n), prop::collection::vec(-1.0f64..1.0, n + 1), prop::collection::vec(-1.0f64..1.0, n + 1))
            .prop_map(|(n, re, im)| state_from(n, &re, &im))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operations_preserve_norm(
        s in arb_state(60),
        theta in -7.0f64..7.0,
        phi in 0.0f64..7.0,
        chi in 0.0f64..3.0,
        delta in -20.0f64..20.0,
        t in 0.0f64..2e-3,
    ) {
        let r = rotate(&s, RotationSpec::new(theta, phi)).unwrap();
        prop_assert!((r.norm_sqr() - 1.0).abs() < 1e-10);
        let o = evolve_oat(&s, chi, delta, t * 100.0).unwrap();
        prop_assert!((o.norm_sqr() - 1.0).abs() < 1e-10);
        let p = evolve_pulse(&s, 2.0 * PI * 310.0, phi, delta, chi, t).unwrap();
        prop_assert!((p.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rotations_compose(s in arb_state(40), a in -4.0f64..4.0, b in -4.0f64..4.0, phi in 0.0f64..7.0) {
        let two = rotate(&rotate(&s, RotationSpec::new(b, phi)).unwrap(), RotationSpec::new(a, phi)).unwrap();
        let one = rotate(&s, RotationSpec::new(a + b, phi)).unwrap();
        prop_assert!(two.distance_up_to_phase(&one) < 1e-9);
    }

    #[test]
    fn echo_cancels_static_detuning(n in 2usize..80, chi in 0.1f64..1.0, delta in -30.0f64..30.0, t in 0.001f64..0.02) {
        let css = make_css(n, FRAC_PI_2, FRAC_PI_2).unwrap();
        let mut echo = evolve_oat(&css, chi, delta, t).unwrap();
        echo.apply_rotation(PI, 1.5 * PI);
        let echo = evolve_oat(&echo, chi, delta, t).unwrap();
        let mut plain = evolve_oat(&css, chi, 0.0, 2.0 * t).unwrap();
        plain.apply_rotation(PI, 1.5 * PI);
        let (a, b) = (moments(&echo), moments(&plain));
        for i in 0..3 {
            prop_assert!((a.mean[i] - b.mean[i]).abs() < 1e-8);
            for j in 0..3 {
                prop_assert!((a.cov[i][j] - b.cov[i][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn uncertainty_relation(s in arb_state(50), theta in 0.0f64..3.2, phi in 0.0f64..6.3) {
        let m = moments(&s);
        let half = 0.5 * s.n_atoms() as f64;
        prop_assert!(m.mean_length() <= half + 1e-9);
        // orthonormal frame rotated by (theta, phi)
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let e3 = [st * cp, st * sp, ct];
        let e1 = [ct * cp, ct * sp, -st];
        let e2 = [-sp, cp, 0.0];
        let dot = |u: [f64; 3]| u[0] * m.mean[0] + u[1] * m.mean[1] + u[2] * m.mean[2];
        for (a, b, c) in [(e1, e2, e3), (e2, e3, e1), (e3, e1, e2)] {
            let (va, vb) = (m.variance(a), m.variance(b));
            prop_assert!(va >= -1e-9 && vb >= -1e-9);
            let bound = 0.25 * dot(c).powi(2);
            prop_assert!(va * vb >= bound * (1.0 - 1e-9) - 1e-9, "{va} * {vb} < {bound}");
        }
    }
}
