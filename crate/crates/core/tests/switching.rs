use dormant_pam::numerics::integrate;
use dormant_pam::rng::substream;
use dormant_pam::stats::run_replicates;
use dormant_pam::switching::*;
use dormant_pam::McEstimate;
use nalgebra::Matrix2;
use proptest::prelude::*;

fn rates(s0: f64, s1: f64) -> SwitchRates {
    SwitchRates::new(s0, s1).unwrap()
}

/// `E_1[exp(−λ L_t(1))]` from the Feynman-Kac matrix exponential.
fn laplace_oracle(r: SwitchRates, t: f64, lambda: f64) -> f64 {
    // state order (0, 1)
    let m = Matrix2::new(-r.s0, r.s0, r.s1, -r.s1 - lambda);
    let e = (m * t).exp();
    e[(1, 0)] + e[(1, 1)]
}

#[test]
fn density_plus_atom_has_unit_mass_on_grid() {
    for s0 in [0.5, 1.0, 2.0] {
        for s1 in [0.5, 1.0, 2.0] {
            for t in [0.5, 1.0, 2.0] {
                let p = local_time_window_probability(0.0, 1.0, t, rates(s0, s1)).unwrap();
                assert!((p - 1.0).abs() < 1e-8, "({s0},{s1},{t}): {p}");
            }
        }
    }
}

#[test]
fn density_matches_matrix_exponential_laplace_transform() {
    for (s0, s1, t) in [(1.0, 1.0, 2.0), (1.0, 2.0, 3.0), (0.5, 2.0, 4.0), (3.0, 0.7, 5.0)] {
        let r = rates(s0, s1);
        for lambda in [0.3, 1.7] {
            let cont = integrate(|y| (-lambda * y).exp() * local_time_density(y, t, r).unwrap(), 1e-12, t - 1e-12, 1e-300, 1e-13);
            let value = cont + (-lambda * t).exp() * local_time_atom(t, r).unwrap();
            let oracle = laplace_oracle(r, t, lambda);
            assert!((value - oracle).abs() < 1e-10, "({s0},{s1},{t},{lambda}): {value} vs {oracle}");
        }
    }
}

#[test]
fn density_series_value_at_unit_point() {
    // rates (1,1), t=2, y=1: x = 1, terms 1/(k!)^2 (1/(k+1) + 1)
    let mut sum = 0.0;
    let mut fact = 1.0;
    for k in 0..30 {
        if k > 0 {
            fact *= k as f64;
        }
        sum += (1.0 / (k as f64 + 1.0) + 1.0) / (fact * fact);
    }
    let expected = (-2.0f64).exp() * sum;
    let got = local_time_density(1.0, 2.0, rates(1.0, 1.0)).unwrap();
    assert!((got - expected).abs() < 1e-15 * expected.max(1.0));
    assert!(got > 2.0 * (-2.0f64).exp());
}

#[test]
fn density_large_argument_is_finite_and_normalised() {
    // crosses the series/integral switchover
    let r = rates(1.0, 2.0);
    let t = 400.0;
    let p = local_time_window_probability(0.0, 1.0, t, r).unwrap();
    assert!((p - 1.0).abs() < 1e-8, "{p}");
    let peak = local_time_density(t / 3.0, t, r).unwrap();
    assert!(peak.is_finite() && peak > 0.0);
}

#[test]
fn density_rejects_out_of_range_and_degenerate_rates() {
    let r = rates(1.0, 1.0);
    assert!(local_time_density(0.0, 2.0, r).is_err());
    assert!(local_time_density(2.0, 2.0, r).is_err());
    assert!(local_time_density(1.0, 2.0, rates(0.0, 1.0)).is_err());
}

#[test]
fn atom_values() {
    assert!((local_time_atom(2.0, rates(1.0, 1.0)).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
    assert_eq!(local_time_atom(7.0, rates(1.0, 0.0)).unwrap(), 1.0);
}

#[test]
fn atom_matches_zero_jump_frequency() {
    let r = rates(1.0, 2.0);
    let n = 100_000;
    let v = run_replicates(n, 11, 0, |_, rng| Ok(f64::from(sample_switch_path(r, 1, 1.0, rng)?.jump_count() == 0))).unwrap();
    let e = McEstimate::from_values(&v, 11);
    assert!((e.mean - (-2.0f64).exp()).abs() <= 3.0 * e.stderr);
}

#[test]
fn absorbing_active_state_never_jumps() {
    let mut rng = substream(1, 0);
    let p = sample_switch_path(rates(1.0, 0.0), 1, 10.0, &mut rng).unwrap();
    assert_eq!(p.jump_count(), 0);
    assert_eq!(local_times(&p).time_in_1, 10.0);
}

#[test]
fn first_jump_time_has_exponential_mean() {
    let r = rates(1.0, 2.0);
    let v = run_replicates(100_000, 5, 0, |_, rng| {
        let p = sample_switch_path(r, 1, 50.0, rng)?;
        Ok(p.jump_times()[0])
    })
    .unwrap();
    let e = McEstimate::from_values(&v, 5);
    assert!((e.mean - 0.5).abs() <= 3.0 * e.stderr, "{} +- {}", e.mean, e.stderr);
}

#[test]
fn law_of_large_numbers_for_local_time() {
    let mut rng = substream(3, 0);
    let p = sample_switch_path(rates(1.0, 2.0), 1, 200.0, &mut rng).unwrap();
    let frac = local_times(&p).time_in_1 / 200.0;
    assert!((frac - 1.0 / 3.0).abs() < 0.02, "{frac}");
}

#[test]
fn local_times_examples() {
    let p = SwitchPath::constant(1, 5.0).unwrap();
    let lt = local_times(&p);
    assert_eq!((lt.time_in_0, lt.time_in_1), (0.0, 5.0));
    let p = SwitchPath::new(1, vec![1.0, 3.0], 4.0).unwrap();
    assert_eq!(local_times(&p).time_in_1, 2.0);
    let mut rng = substream(9, 0);
    for _ in 0..100 {
        let p = sample_switch_path(rates(0.7, 1.3), 0, 6.0, &mut rng).unwrap();
        let lt = local_times(&p);
        assert!((lt.time_in_0 + lt.time_in_1 - 6.0).abs() < 1e-12);
        assert_eq!(p.final_state(), (p.jump_count() % 2) as u8);
    }
}

#[test]
fn rate_function_examples() {
    for (s0, s1) in [(1.0, 2.0), (0.3, 5.0), (2.0, 2.0)] {
        let r = rates(s0, s1);
        let a = rate_minimizer(r).unwrap();
        assert!(rate_function(a, r).unwrap().abs() < 1e-14);
    }
    let r = rates(1.0, 2.0);
    assert!((rate_function(1.0, r).unwrap() - 2.0).abs() < 1e-15);
    assert!((rate_function(0.0, r).unwrap() - 1.0).abs() < 1e-15);
    assert!(rate_function(1.1, r).is_err());
    assert!(rate_function(-0.1, r).is_err());
    let s = 1.7;
    for k in 0..=10 {
        let a = k as f64 / 10.0;
        let expected = s * (a.sqrt() - (1.0 - a).sqrt()).powi(2);
        assert!((rate_function(a, rates(s, s)).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn rate_minimizer_examples() {
    assert!((rate_minimizer(rates(1.0, 2.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(rate_minimizer(rates(3.0, 3.0)).unwrap(), 0.5);
    assert!(rate_minimizer(rates(0.0, 0.0)).is_err());
    let r = rates(1.0, 2.0);
    let (mut best, mut arg) = (f64::INFINITY, 0.0);
    for k in 0..=1_000_000 {
        let a = k as f64 * 1e-6;
        let v = rate_function(a, r).unwrap();
        if v < best {
            best = v;
            arg = a;
        }
    }
    assert!((arg - rate_minimizer(r).unwrap()).abs() < 1e-5);
}

#[test]
fn girsanov_examples() {
    let p = SwitchPath::constant(1, 1.0).unwrap();
    assert!((girsanov_weight(&p, rates(4.0, 1.0)).unwrap() - std::f64::consts::E).abs() < 1e-14);
    let mut rng = substream(2, 0);
    for _ in 0..50 {
        let p = sample_switch_path(rates(1.3, 1.3), 1, 3.0, &mut rng).unwrap();
        assert!((girsanov_weight(&p, rates(1.3, 1.3)).unwrap() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn girsanov_weight_has_unit_mean() {
    let r = rates(1.0, 2.0);
    let v = run_replicates(1_000_000, 8, 0, |_, rng| girsanov_weight(&sample_symmetric_path(r, 1, 3.0, rng)?, r)).unwrap();
    let e = McEstimate::from_values(&v, 8);
    assert!((e.mean - 1.0).abs() <= 3.0 * e.stderr, "{} +- {}", e.mean, e.stderr);
}

#[test]
fn sublinear_scale_limit_by_quadrature() {
    // (1/√t) log E[exp(√t F(L_t(1)/t))] → F(s0/(s0+s1)) with F(a) = −√a
    let r = rates(1.0, 2.0);
    let target = -(1.0f64 / 3.0).sqrt();
    let mut errs = Vec::new();
    for t in [25.0f64, 100.0, 400.0] {
        let st = t.sqrt();
        let f = |y: f64| (st * -(y / t).sqrt()).exp() * local_time_density(y, t, r).unwrap();
        let mass = integrate(f, 1e-12, t - 1e-12, 1e-300, 1e-12) + (st * -1.0f64).exp() * local_time_atom(t, r).unwrap();
        errs.push((mass.ln() / st - target).abs());
    }
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
}

proptest! {
    #[test]
    fn rate_function_is_nonnegative_and_convex(s0 in 0.01f64..5.0, s1 in 0.01f64..5.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let r = rates(s0, s1);
        let (fa, fb) = (rate_function(a, r).unwrap(), rate_function(b, r).unwrap());
        let mid = rate_function(0.5 * (a + b), r).unwrap();
        prop_assert!(fa >= -1e-14);
        prop_assert!(mid <= 0.5 * (fa + fb) + 1e-12);
    }

    #[test]
    fn local_times_partition_the_horizon(seed in 0u64..1000, t in 0.1f64..20.0, start in 0u8..2) {
        let mut rng = substream(seed, 0);
        let p = sample_switch_path(rates(1.0, 2.0), start, t, &mut rng).unwrap();
        let lt = local_times(&p);
        prop_assert!((lt.time_in_0 + lt.time_in_1 - t).abs() < 1e-9);
        prop_assert!(p.jump_times().windows(2).all(|w| w[0] < w[1]));
    }
}
