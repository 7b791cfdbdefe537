use std::f64::consts::PI;

use dormant_pam::asymptotics::*;
use dormant_pam::spectral::laplace_green;
use dormant_pam::switching::{rate_function, SwitchRates};

fn rates(s0: f64, s1: f64) -> SwitchRates {
    SwitchRates::new(s0, s1).unwrap()
}

fn brute_min(f: impl Fn(f64) -> f64) -> f64 {
    (0..=1_000_000).map(|k| f(k as f64 * 1e-6)).fold(f64::INFINITY, f64::min)
}

#[test]
fn dirichlet_constants() {
    let (l1, c1) = dirichlet_constant(1).unwrap();
    assert!((l1 - 2.4674011).abs() < 1e-7);
    assert!((c1 - 3.0 * (PI * PI / 4.0).cbrt()).abs() < 1e-12);
    assert!((c1 - 4.0538515).abs() < 1e-6);
    let (l2, c2) = dirichlet_constant(2).unwrap();
    assert!((l2 - PI * PI / 2.0).abs() < 1e-14);
    // c₂ = 4 · 2^{−1/2} · (π²/2)^{1/2} = 2π
    assert!((c2 - 2.0 * PI).abs() < 1e-12);
    assert!(dirichlet_constant(0).is_err());
}

#[test]
fn bernoulli_decay_exponent() {
    for d in 1..=3 {
        let (_, c) = dirichlet_constant(d).unwrap();
        let e = d as f64 / (d as f64 + 2.0);
        let (p, kappa, t) = (0.3, 1.7f64, 50.0);
        let plain = c * (-(0.7f64).ln()).powf(2.0 / (d as f64 + 2.0)) * (kappa * t).powf(e);
        let got = thm11a_rate(p, kappa, rates(1.0, 0.0), d, t).unwrap();
        assert!((got - plain).abs() < 1e-12 * plain);
        assert_eq!(thm11a_rate(p, 0.0, rates(1.0, 1.0), d, t).unwrap(), 0.0);
        let by_s1: Vec<f64> = [0.0, 0.5, 1.0, 4.0].iter().map(|&s1| thm11a_rate(p, kappa, rates(1.0, s1), d, t).unwrap()).collect();
        assert!(by_s1.windows(2).all(|w| w[1] < w[0]));
    }
    assert!(thm11a_rate(1.0, 1.0, rates(1.0, 1.0), 1, 1.0).is_err());
}

#[test]
fn growth_rate_variational_example() {
    let r = thm11b_rate_variational(1.0, rates(1.0, 1.0)).unwrap();
    assert!((r.value - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-9, "{}", r.value);
    assert!((r.minimizer.unwrap() - (5.0 + 5f64.sqrt()) / 10.0).abs() < 1e-7);
    assert_eq!(r.method, Some(RateMethod::GridGolden));
}

#[test]
fn growth_rate_variational_limits() {
    for (g, s0) in [(0.5, 1.0), (2.0, 3.0)] {
        let r = thm11b_rate_variational(g, rates(s0, 0.0)).unwrap();
        assert!((r.value - g).abs() < 1e-12);
        assert!((r.minimizer.unwrap() - 1.0).abs() < 1e-9);
    }
    let tiny = thm11b_rate_variational(1e-9, rates(1.0, 1.0)).unwrap();
    assert!(tiny.value.abs() < 1e-8);
    assert!(thm11b_rate_variational(0.0, rates(1.0, 1.0)).is_err());
}

#[test]
fn variational_minimum_matches_brute_force() {
    for (g, s0, s1) in [(1.0, 1.0, 1.0), (3.0, 0.5, 2.0), (0.2, 4.0, 1.0)] {
        let r = rates(s0, s1);
        let brute = g - brute_min(|a| rate_function(a, r).unwrap() + g * (1.0 - a));
        let rep = thm11b_rate_variational(g, r).unwrap();
        assert!((rep.value - brute).abs() < 1e-8, "({g},{s0},{s1}): {} vs {brute}", rep.value);
    }
}

#[test]
fn closed_form_evaluated_verbatim() {
    let c = thm11b_rate_closed(1.0, rates(1.0, 1.0)).unwrap();
    assert!(c.value.abs() < 1e-15);
    let c = thm11b_rate_closed(2.0, rates(3.0, 0.0)).unwrap();
    assert!((c.value + 3.0).abs() < 1e-12);
    for (g, s0, s1) in [(0.1, 5.0, 0.01), (10.0, 0.01, 5.0)] {
        assert!(thm11b_rate_closed(g, rates(s0, s1)).unwrap().value.is_finite());
    }
    let dual = thm11b_dual_report(1.0, rates(1.0, 1.0)).unwrap();
    assert!((dual.discrepancy + 0.618034).abs() < 1e-6);
}

#[test]
fn one_trap_prefactor() {
    let (rho, kappa, g) = (0.8, 1.3, -2.0f64);
    let p1 = thm12a_prefactor(1, rho, kappa, rates(1.0, 0.0), g).unwrap();
    assert!((p1 - 2.0 * (rho + kappa).sqrt() / (PI.sqrt() * g.abs())).abs() < 1e-12);
    let p2 = thm12a_prefactor(2, rho, kappa, rates(1.0, 0.0), g).unwrap();
    assert!((p2 - 4.0 * PI * (rho + kappa) / g.abs()).abs() < 1e-12);
    for (s0, s1) in [(1.0, 1.0), (0.3, 2.0), (2.5, 0.4)] {
        let a = s0 / (s0 + s1);
        let rewritten = 2.0 * (kappa * a + rho).sqrt() / (PI.sqrt() * a * g.abs());
        let direct = thm12a_prefactor(1, rho, kappa, rates(s0, s1), g).unwrap();
        assert!((direct - rewritten).abs() < 1e-12 * direct);
    }
    for d in [1, 2] {
        let by_s1: Vec<f64> = [0.0, 0.5, 1.0, 4.0].iter().map(|&s1| thm12a_prefactor(d, rho, kappa, rates(1.0, s1), g).unwrap()).collect();
        assert!(by_s1.windows(2).all(|w| w[1] > w[0]));
    }
    assert!(thm12a_prefactor(3, rho, kappa, rates(1.0, 1.0), g).is_err());
    assert!(thm12a_prefactor(1, rho, kappa, rates(1.0, 1.0), 1.0).is_err());
}

#[test]
fn poisson_decay_exponent() {
    let (nu, rho, t) = (1.5, 0.7, 64.0);
    let d1 = thm13a_rate(1, nu, rho, rates(1.0, 0.0), t).unwrap();
    assert!((d1 - 4.0 * nu * (rho / PI).sqrt() * t.sqrt()).abs() < 1e-12 * d1);
    let d2 = thm13a_rate(2, nu, rho, rates(1.0, 0.0), t).unwrap();
    assert!((d2 - 4.0 * nu * rho * PI * t / t.ln()).abs() < 1e-12 * d2);
    let double = thm13a_rate(1, 2.0 * nu, rho, rates(1.0, 1.0), t).unwrap();
    assert!((double - 2.0 * thm13a_rate(1, nu, rho, rates(1.0, 1.0), t).unwrap()).abs() < 1e-12 * double);
    for d in [1, 2] {
        let by_s1: Vec<f64> = [0.0, 0.5, 1.0, 4.0].iter().map(|&s1| thm13a_rate(d, nu, rho, rates(1.0, s1), t).unwrap()).collect();
        assert!(by_s1.windows(2).all(|w| w[1] < w[0]));
    }
    assert!(thm13a_rate(2, nu, rho, rates(1.0, 1.0), 1.0).is_err());
}

#[test]
fn lambda_tilde_properties() {
    let g3 = laplace_green(3, 0.0).unwrap();
    let r = rates(1.0, 2.0);
    let zero = lambda_tilde(3, -1.0, 0.0, 1.0, r, g3).unwrap();
    assert!(zero.value.abs() < 1e-10);
    assert!((zero.minimizer.unwrap() - 1.0 / 3.0).abs() < 1e-6);

    let nus = [0.0, 0.5, 1.0, 2.0];
    let by_nu: Vec<f64> = nus.iter().map(|&nu| lambda_tilde(3, -1.0, nu, 1.0, r, g3).unwrap().value).collect();
    assert!(by_nu.windows(2).all(|w| w[1] >= w[0]));

    let hard = lambda_tilde(3, f64::NEG_INFINITY, 1.0, 1.0, r, g3).unwrap().value;
    let soft = lambda_tilde(3, -1e8, 1.0, 1.0, r, g3).unwrap().value;
    assert!((hard - soft).abs() < 1e-7);
    assert!((lambda_tilde_coefficient(f64::NEG_INFINITY, 1.0, 1.0, g3) - 1.0 / g3).abs() < 1e-12);
    // the discrete-time form 2dνρ/(2dρ/|γ| + G_dt) with G_dt = 2d·G
    let dt_form = 6.0 * 0.5 * 1.2 / (6.0 * 1.2 / 3.0 + 6.0 * g3);
    assert!((lambda_tilde_coefficient(-3.0, 0.5, 1.2, g3) - dt_form).abs() < 1e-12);

    let c = lambda_tilde_coefficient(-1.0, 1.0, 1.0, g3);
    let brute = brute_min(|a| rate_function(a, r).unwrap() + c * a);
    assert!((lambda_tilde(3, -1.0, 1.0, 1.0, r, g3).unwrap().value - brute).abs() < 1e-8);
    assert!(lambda_tilde(2, -1.0, 1.0, 1.0, r, g3).is_err());
}

#[test]
fn figure_two_values() {
    let rows = figure_data(Figure::Fig2, 1, FigureParams::default(), &[0.0, 0.5, 1.0, 2.0], &[100.0]).unwrap();
    assert!((rows[0].value - 2.0 * 2f64.sqrt() / PI.sqrt() / 10.0).abs() < 1e-14);
    assert!(rows.windows(2).all(|w| w[1].value > w[0].value));
    let rows = figure_data(Figure::Fig2, 2, FigureParams::default(), &[0.0], &[100.0]).unwrap();
    assert!((rows[0].value - 8.0 * PI / 100f64.ln()).abs() < 1e-12);
}

#[test]
fn figure_three_values() {
    let t = 200.0;
    let rows = figure_data(Figure::Fig3, 2, FigureParams::default(), &[0.0, 1.0], &[t]).unwrap();
    assert!((rows[0].value - (-4.0 * PI * t / t.ln()).exp()).abs() < 1e-300_f64.max(1e-12 * rows[0].value));
    assert!((rows[1].value.ln() + 2.0 * PI * t / t.ln()).abs() < 1e-9);
    let rows = figure_data(Figure::Fig3, 1, FigureParams::default(), &[0.0, 0.5, 1.0, 2.0], &[10.0]).unwrap();
    assert!(rows.windows(2).all(|w| w[1].value > w[0].value));
    assert!(figure_data(Figure::Fig3, 3, FigureParams::default(), &[0.0], &[10.0]).is_err());
    assert!(figure_data(Figure::Fig2, 1, FigureParams::default(), &[0.0], &[1.0]).is_err());
}

#[test]
fn csv_layouts() {
    let r = thm11b_rate_variational(1.0, rates(1.0, 1.0)).unwrap();
    let mut buf = Vec::new();
    write_rate_csv(&[r], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], RATE_CSV_HEADER);
    let cells: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cells.len(), 13);
    assert_eq!(cells[0], "thm11b_variational");
    assert_eq!(cells[12], "grid_golden");
    assert_eq!(cells[1], "");

    let l = lambda_tilde(3, f64::NEG_INFINITY, 1.0, 1.0, rates(1.0, 1.0), 0.25).unwrap();
    assert_eq!(l.csv_row().split(',').nth(6), Some("neg_inf"));

    let rows = figure_data(Figure::Fig2, 1, FigureParams::default(), &[0.5], &[10.0]).unwrap();
    let mut buf = Vec::new();
    write_figure_csv(&rows, FigureParams::default(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some(FIGURE_CSV_HEADER));
    assert!(text.lines().nth(1).unwrap().starts_with("fig2,1,1,0.5,1,1,-1,1,10,"));
}
