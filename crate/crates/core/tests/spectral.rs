use dormant_pam::lattice::BoxGeometry;
use dormant_pam::rng::substream;
use dormant_pam::spectral::*;
use dormant_pam::switching::SwitchRates;
use dormant_pam::walker::McConfig;
use dormant_pam::Error;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use statrs::function::gamma::gamma;

fn rates(s0: f64, s1: f64) -> SwitchRates {
    SwitchRates::new(s0, s1).unwrap()
}

fn random_vector(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 0);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dense(spec: &OperatorSpec) -> DMatrix<f64> {
    let mut op = Operator::new(*spec).unwrap();
    let dim = op.dim();
    let mut m = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    let mut col = vec![0.0; dim];
    for j in 0..dim {
        e[j] = 1.0;
        op.apply_into(&e, &mut col).unwrap();
        for i in 0..dim {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

fn dense_top(spec: &OperatorSpec) -> f64 {
    SymmetricEigen::new(dense(spec)).eigenvalues.max()
}

fn specs() -> Vec<OperatorSpec> {
    vec![
        OperatorSpec::two_type(1, 6, 1.0, 0.5, rates(1.0, 2.0), 3.0),
        OperatorSpec::two_type(2, 3, 0.7, 1.0, rates(0.4, 1.5), -2.0),
        OperatorSpec::single_site(1, 8, 1.0, 2.0),
        OperatorSpec::single_site(3, 2, 0.5, 4.0),
    ]
}

#[test]
fn constant_vector_interior_value() {
    let spec = OperatorSpec::two_type(2, 4, 1.0, 1.0, rates(1.5, 1.5), 0.0);
    let geom = BoxGeometry::new(2, 4).unwrap();
    let f = vec![1.0; 2 * geom.len()];
    let af = apply_operator(&spec, &f).unwrap();
    for i in 0..geom.len() {
        let x = geom.site(i);
        if x[..2].iter().all(|c| c.abs() < 4) {
            assert!((af[i] + 1.5).abs() < 1e-14);
            assert!((af[geom.len() + i] + 1.5).abs() < 1e-14);
        }
    }
}

#[test]
fn operators_are_self_adjoint() {
    for spec in specs() {
        let dim = Operator::new(spec).unwrap().dim();
        for k in 0..20 {
            let f = random_vector(dim, 2 * k);
            let g = random_vector(dim, 2 * k + 1);
            let afg = dot(&apply_operator(&spec, &f).unwrap(), &g);
            let fag = dot(&f, &apply_operator(&spec, &g).unwrap());
            assert!((afg - fag).abs() <= 1e-12 * afg.abs().max(fag.abs()), "{spec:?}: {afg} vs {fag}");
        }
    }
}

#[test]
fn delta_vector_rayleigh_quotient() {
    let (kappa, rho, s0, s1, g) = (1.3, 0.6, 0.8, 2.0, 1.7);
    let spec = OperatorSpec::two_type(1, 5, kappa, rho, rates(s0, s1), g);
    let geom = BoxGeometry::new(1, 5).unwrap();
    let mut f = vec![0.0; 2 * geom.len()];
    f[geom.len() + geom.origin()] = 1.0;
    let rq = dot(&apply_operator(&spec, &f).unwrap(), &f);
    let expected = g - 2.0 * (kappa + rho) - (s0 * s1).sqrt() - s1;
    assert!((rq - expected).abs() < 1e-14, "{rq} vs {expected}");
}

#[test]
fn quadratic_form_splits_into_functionals() {
    for spec in [specs()[0], specs()[1]] {
        let dim = Operator::new(spec).unwrap().dim();
        for k in 0..5 {
            let f = random_vector(dim, 100 + k);
            let q = dot(&apply_operator(&spec, &f).unwrap(), &f);
            let parts = functional_a1(&spec, &f).unwrap() - functional_a2(&spec, &f).unwrap() - functional_a3(&spec, &f).unwrap();
            assert!((q - parts).abs() < 1e-10 * q.abs().max(1.0), "{q} vs {parts}");
        }
        let eig = top_eigenvalue(&spec, 1e-11).unwrap();
        let v = &eig.vector;
        let parts = functional_a1(&spec, v).unwrap() - functional_a2(&spec, v).unwrap() - functional_a3(&spec, v).unwrap();
        assert!((parts / dot(v, v) - eig.eigenvalue).abs() < 1e-10);
    }
}

#[test]
fn wrong_length_is_rejected() {
    let spec = specs()[0];
    assert!(apply_operator(&spec, &[1.0, 2.0]).is_err());
    assert!(OperatorSpec::two_type(1, 3, 1.0, 1.0, rates(0.0, 1.0), 0.0).validate().is_err());
    assert!(top_eigenvalue(&spec, 0.0).is_err());
}

#[test]
fn power_iteration_matches_dense_eigensolver() {
    for spec in specs() {
        let eig = top_eigenvalue(&spec, 1e-12).unwrap();
        let exact = dense_top(&spec);
        assert!((eig.eigenvalue - exact).abs() < 1e-8, "{spec:?}: {} vs {exact}", eig.eigenvalue);
        assert!(eig.residual < 1e-12);
        assert!(eig.vector.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn dirichlet_laplacian_top_eigenvalue() {
    // γ = 0: ρ(2cos(π/(2n+2)) − 2) on 2n+1 sites
    let rho = 0.7;
    let mut prev = f64::NEG_INFINITY;
    for n in [3, 6, 12, 24] {
        let mu = growth_rate_poisson_catalyst(1, rho, 0.0, n, 1e-12).unwrap();
        let exact = rho * (2.0 * (std::f64::consts::PI / (2 * n + 2) as f64).cos() - 2.0);
        assert!((mu - exact).abs() < 1e-8, "n={n}: {mu} vs {exact}");
        assert!(mu < 0.0 && mu > prev);
        prev = mu;
    }
}

#[test]
fn single_site_bound_state() {
    // μ = 2ρ(√(1+(γ/2ρ)²) − 1)
    let mu = growth_rate_poisson_catalyst(1, 1.0, 2.0, 40, 1e-10).unwrap();
    assert!((mu - 2.0 * (2f64.sqrt() - 1.0)).abs() < 1e-4, "{mu}");
    let small = OperatorSpec::single_site(1, 12, 1.0, 2.0);
    assert!((top_eigenvalue(&small, 1e-12).unwrap().eigenvalue - dense_top(&small)).abs() < 1e-9);
    for g in [0.1, 0.5, 3.0] {
        assert!(growth_rate_poisson_catalyst(1, 1.0, g, 30, 1e-10).unwrap() > 0.0);
    }
}

#[test]
fn three_dimensional_threshold_approaches_zero() {
    let g3 = laplace_green(3, 0.0).unwrap();
    let gamma = 0.99 / g3;
    let mu: Vec<f64> = [3, 6, 9].iter().map(|&n| growth_rate_poisson_catalyst(3, 1.0, gamma, n, 1e-10).unwrap()).collect();
    assert!(mu.iter().all(|&m| m < 0.0 && m <= 1e-3), "{mu:?}");
    assert!(mu.windows(2).all(|w| w[1].abs() < w[0].abs()), "{mu:?}");
}

#[test]
fn two_type_eigenvalues_grow_with_the_box() {
    let r = rates(1.0, 1.0);
    for gamma in [-1.0, 0.5, 3.0] {
        let l: Vec<f64> = [2, 4, 8].iter().map(|&n| top_eigenvalue(&OperatorSpec::two_type(1, n, 1.0, 1.0, r, gamma), 1e-11).unwrap().eigenvalue).collect();
        assert!(l.windows(2).all(|w| w[1] >= w[0] - 1e-10), "γ={gamma}: {l:?}");
        assert!(l.iter().all(|&x| x <= gamma.max(0.0)));
    }
}

#[test]
fn growth_rate_without_branching_tends_to_zero() {
    let p = CatalystParams { d: 1, kappa: 1.0, rho: 1.0, rates: rates(2.0, 2.0), gamma: 0.0 };
    let g: Vec<f64> = [4, 8, 16].iter().map(|&n| growth_rate_one_catalyst(&p, n, 1e-11).unwrap()).collect();
    assert!(g.iter().all(|&x| x <= 1e-12), "{g:?}");
    assert!(g.windows(2).all(|w| w[1] > w[0]), "{g:?}");
    // Dirichlet scale (π/(2n+2))² with the fastest diffusivity
    assert!(g[2] > -2.0 * (std::f64::consts::PI / 34.0).powi(2) * 2.0);
}

#[test]
fn growth_rate_above_delta_vector_bound() {
    let p = CatalystParams { d: 1, kappa: 1.0, rho: 1.0, rates: rates(1.0, 1.0), gamma: 5.0 };
    let g = growth_rate_one_catalyst(&p, 40, 1e-10).unwrap();
    // Rayleigh bound on λ: 5 − 4 − 1 − 1, plus √(s0s1) = 1
    assert!(g >= 0.0, "{g}");
    assert!(g <= 5.0);
}

fn watson_g3() -> f64 {
    let s: f64 = 6f64.sqrt() / (32.0 * std::f64::consts::PI.powi(3));
    s * gamma(1.0 / 24.0) * gamma(5.0 / 24.0) * gamma(7.0 / 24.0) * gamma(11.0 / 24.0) / 6.0
}

#[test]
fn green_function_matches_watson_integral() {
    let w = watson_g3();
    let lap = green_function(3, GreenTarget::SimpleWalkOrigin, GreenMethod::Laplace).unwrap();
    assert!((lap.value - w).abs() < 1e-6 * w, "{} vs {w}", lap.value);
    assert!((lap.value - 0.2527).abs() < 1e-4);
    let grid = green_function(3, GreenTarget::SimpleWalkOrigin, GreenMethod::FourierGrid { points: 200 }).unwrap();
    assert!((grid.value - w).abs() < 1e-5 * w, "{} vs {w}", grid.value);
}

#[test]
fn massive_green_function_in_one_dimension() {
    // ∫ e^{−mt} e^{−2t} I₀(2t) dt = 1/√(m² + 4m)
    for m in [0.1, 0.5, 3.0] {
        let g = laplace_green(1, m).unwrap();
        let exact = 1.0 / (m * m + 4.0 * m).sqrt();
        assert!((g - exact).abs() < 1e-9 * exact, "m={m}: {g} vs {exact}");
    }
}

#[test]
fn recurrent_dimensions_diverge() {
    for d in [1, 2] {
        assert!(matches!(green_function(d, GreenTarget::SimpleWalkOrigin, GreenMethod::Laplace), Err(Error::Divergent(_))));
        assert!(matches!(laplace_green(d, 0.0), Err(Error::Divergent(_))));
    }
}

#[test]
fn two_type_green_function_methods_agree() {
    let target = GreenTarget::TwoType { kappa: 1.0, rho: 1.0, rates: rates(1.0, 1.0) };
    let lap = green_function(3, target, GreenMethod::Laplace).unwrap().value;
    let grid = green_function(3, target, GreenMethod::FourierGrid { points: 200 }).unwrap().value;
    assert!((lap - grid).abs() < 1e-5 * lap, "{lap} vs {grid}");
    let mc = green_function(3, target, GreenMethod::MonteCarlo { horizon: Some(50.0), mc: McConfig::new(4_000, 3) }).unwrap();
    assert!(mc.tail_bound > 0.0);
    assert!(mc.value <= lap + 3.0 * mc.error, "{} ± {} vs {lap}", mc.value, mc.error);
    assert!(mc.value >= lap - mc.tail_bound - 3.0 * mc.error, "{} ± {} vs {lap}", mc.value, mc.error);
}

#[test]
fn survival_limit_extremes() {
    let g = 0.11;
    assert!((survival_limit_d3(-1e-9, g).unwrap() - 1.0).abs() < 1e-9);
    assert!(survival_limit_d3(-1e9, g).unwrap() < 1e-7);
    assert_eq!(survival_limit_d3(f64::NEG_INFINITY, g).unwrap(), 0.0);
    assert!((survival_limit_d3(-1.0, g).unwrap() - 1.0 / 1.11).abs() < 1e-15);
    assert!(survival_limit_d3(0.5, g).is_err());
}

#[test]
fn eigenvector_csv_and_determinism() {
    let spec = OperatorSpec::two_type(1, 2, 1.0, 1.0, rates(1.0, 1.0), 1.0);
    let a = top_eigenvalue(&spec, 1e-10).unwrap();
    let b = top_eigenvalue(&spec, 1e-10).unwrap();
    assert_eq!(a, b);
    let mut buf = Vec::new();
    a.write_csv(&spec, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x1,type,value");
    assert_eq!(lines.len(), 11);
    assert!(lines[1].starts_with("-2,0,"));
    assert!(lines[10].starts_with("2,1,"));
}
