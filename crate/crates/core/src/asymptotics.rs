//! Closed-form asymptotic evaluators, the one-dimensional variational rates
//! and figure data.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::numerics::grid_golden_minimize;
use crate::switching::{rate_function, SwitchRates};

/// Grid step and golden-section tolerance for the variational rates.
pub const GRID_STEP: f64 = 1e-3;
pub const GOLDEN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    ClosedForm,
    GridGolden,
}

impl RateMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            RateMethod::ClosedForm => "closed_form",
            RateMethod::GridGolden => "grid_golden",
        }
    }
}

/// One evaluated formula with its parameter record. Unused parameters are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub formula_id: String,
    pub d: Option<usize>,
    pub s0: Option<f64>,
    pub s1: Option<f64>,
    pub kappa: Option<f64>,
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
    pub nu: Option<f64>,
    pub p: Option<f64>,
    pub t: Option<f64>,
    pub value: f64,
    pub minimizer: Option<f64>,
    pub method: Option<RateMethod>,
}

pub const RATE_CSV_HEADER: &str = "formula_id,d,s0,s1,kappa,rho,gamma,nu,p,t,value,minimizer,method";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Formats γ with `neg_inf` for hard traps.
pub fn format_gamma(g: f64) -> String {
    if g == f64::NEG_INFINITY {
        "neg_inf".into()
    } else {
        g.to_string()
    }
}

impl RateReport {
    fn new(id: &str, value: f64, method: RateMethod) -> Self {
        RateReport { formula_id: id.into(), value, method: Some(method), ..Default::default() }
    }

    fn rates(mut self, rates: SwitchRates) -> Self {
        self.s0 = Some(rates.s0);
        self.s1 = Some(rates.s1);
        self
    }

    pub fn csv_row(&self) -> String {
        [
            self.formula_id.clone(),
            opt(self.d),
            opt(self.s0),
            opt(self.s1),
            opt(self.kappa),
            opt(self.rho),
            self.gamma.map(format_gamma).unwrap_or_default(),
            opt(self.nu),
            opt(self.p),
            opt(self.t),
            self.value.to_string(),
            opt(self.minimizer),
            self.method.map(|m| m.as_str().to_string()).unwrap_or_default(),
        ]
        .join(",")
    }
}

pub fn write_rate_csv<W: Write>(rows: &[RateReport], mut w: W) -> Result<()> {
    writeln!(w, "{RATE_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// `(λ_d, c_d)`: principal Dirichlet eigenvalue of −Δ on `[−1,1]^d` and the
/// Bernoulli-trap constant.
pub fn dirichlet_constant(d: usize) -> Result<(f64, f64)> {
    ensure(d >= 1, || "dimension must be at least 1".into())?;
    let df = d as f64;
    let lambda = df * PI * PI / 4.0;
    let c = (df + 2.0) * df.powf(2.0 / (df + 2.0) - 1.0) * lambda.powf(df / (df + 2.0));
    Ok((lambda, c))
}

/// Positive decay exponent `c_d |log(1−p)|^{2/(d+2)} (κ s0/(s0+s1))^{d/(d+2)} t^{d/(d+2)}`.
pub fn thm11a_rate(p: f64, kappa: f64, rates: SwitchRates, d: usize, t: f64) -> Result<f64> {
    ensure(p > 0.0 && p < 1.0, || format!("p must lie in (0, 1), got {p}"))?;
    ensure(t > 0.0, || format!("t must be positive, got {t}"))?;
    ensure(kappa >= 0.0, || format!("kappa must be >= 0, got {kappa}"))?;
    ensure(rates.s0 + rates.s1 > 0.0, || "s0 + s1 must be positive".into())?;
    let (_, c) = dirichlet_constant(d)?;
    let df = d as f64;
    let e = df / (df + 2.0);
    let active = kappa * rates.s0 / (rates.s0 + rates.s1);
    Ok(c * (-(1.0 - p).ln()).powf(2.0 / (df + 2.0)) * active.powf(e) * t.powf(e))
}

fn minimize_on_unit<F: Fn(f64) -> f64>(f: F) -> (f64, f64) {
    grid_golden_minimize(f, 0.0, 1.0, GRID_STEP, GOLDEN_TOL)
}

/// `γ − min_a {I(a) + γ(1−a)}`.
pub fn thm11b_rate_variational(gamma: f64, rates: SwitchRates) -> Result<RateReport> {
    ensure(gamma > 0.0 && gamma.is_finite(), || format!("gamma must be positive and finite, got {gamma}"))?;
    ensure(rates.s0 > 0.0, || "s0 must be positive".into())?;
    let objective = |a: f64| rate_function(a, rates).unwrap_or(f64::INFINITY) + gamma * (1.0 - a);
    let (a_star, min) = minimize_on_unit(objective);
    let mut r = RateReport::new("thm11b_variational", gamma - min, RateMethod::GridGolden).rates(rates);
    r.gamma = Some(gamma);
    r.minimizer = Some(a_star);
    Ok(r)
}

/// Verbatim evaluation of the printed closed form
/// `γ − s1 − ((γ+s0−s1)² − s0s1)/√(γ² + 2γ(s0−s1) + (s0+s1)²)`.
pub fn thm11b_rate_closed(gamma: f64, rates: SwitchRates) -> Result<RateReport> {
    ensure(gamma > 0.0 && gamma.is_finite(), || format!("gamma must be positive and finite, got {gamma}"))?;
    let (s0, s1) = (rates.s0, rates.s1);
    let denom = (gamma * gamma + 2.0 * gamma * (s0 - s1) + (s0 + s1).powi(2)).sqrt();
    ensure(denom > 0.0, || "closed form denominator vanishes".into())?;
    let value = gamma - s1 - ((gamma + s0 - s1).powi(2) - s0 * s1) / denom;
    let mut r = RateReport::new("thm11b_closed", value, RateMethod::ClosedForm).rates(rates);
    r.gamma = Some(gamma);
    Ok(r)
}

/// Both growth-rate evaluations (variational and closed form) side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualReport {
    pub variational: RateReport,
    pub closed: RateReport,
    /// `closed − variational`.
    pub discrepancy: f64,
}

pub fn thm11b_dual_report(gamma: f64, rates: SwitchRates) -> Result<DualReport> {
    let variational = thm11b_rate_variational(gamma, rates)?;
    let closed = thm11b_rate_closed(gamma, rates)?;
    let discrepancy = closed.value - variational.value;
    Ok(DualReport { variational, closed, discrepancy })
}

/// Prefactor of the one-trap survival probability, in front of `1/√t` (d=1)
/// or `1/log t` (d=2).
pub fn thm12a_prefactor(d: usize, rho: f64, kappa: f64, rates: SwitchRates, gamma: f64) -> Result<f64> {
    ensure(gamma < 0.0 && gamma.is_finite(), || format!("gamma must be negative and finite, got {gamma}"))?;
    ensure(rates.s0 > 0.0, || "s0 must be positive".into())?;
    ensure(rho >= 0.0 && kappa >= 0.0, || "rho and kappa must be >= 0".into())?;
    let (s0, s1) = (rates.s0, rates.s1);
    let g = gamma.abs();
    match d {
        1 => Ok(2.0 * ((s0 + s1) * (s0 * (rho + kappa) + s1 * rho)).sqrt() / (PI.sqrt() * s0 * g)),
        2 => Ok(4.0 * PI * (s1 * rho + s0 * (rho + kappa)) / (s0 * g)),
        _ => Err(crate::Error::Input(format!("prefactor defined for d in {{1, 2}}, got {d}"))),
    }
}

/// Positive decay exponent of the Poisson-trap survival probability.
pub fn thm13a_rate(d: usize, nu: f64, rho: f64, rates: SwitchRates, t: f64) -> Result<f64> {
    ensure(nu >= 0.0 && rho >= 0.0, || "nu and rho must be >= 0".into())?;
    ensure(rates.s0 + rates.s1 > 0.0, || "s0 + s1 must be positive".into())?;
    let frac = rates.s0 / (rates.s0 + rates.s1);
    match d {
        1 => {
            ensure(t >= 0.0, || format!("t must be >= 0, got {t}"))?;
            Ok(4.0 * nu * (rho * frac / PI).sqrt() * t.sqrt())
        }
        2 => {
            ensure(t > 1.0, || format!("d = 2 rate needs t > 1, got {t}"))?;
            Ok(4.0 * nu * rho * PI * frac * t / t.ln())
        }
        _ => Err(crate::Error::Input(format!("closed rate defined for d in {{1, 2}}, got {d}"))),
    }
}

/// Coefficient `c(γ)` of the Poisson lower bound, given the generator-Δ
/// Green's value `green`.
pub fn lambda_tilde_coefficient(gamma: f64, nu: f64, rho: f64, green: f64) -> f64 {
    if gamma == f64::NEG_INFINITY {
        nu * rho / green
    } else {
        let g = gamma.abs();
        nu * rho * g / (rho + g * green)
    }
}

/// `inf_a {I(a) + c(γ) a}`, a lower bound on the d ≥ 3 Poisson decay rate at κ=0.
pub fn lambda_tilde(d: usize, gamma: f64, nu: f64, rho: f64, rates: SwitchRates, green: f64) -> Result<RateReport> {
    ensure(d >= 3, || format!("lambda_tilde needs d >= 3, got {d}"))?;
    ensure(gamma < 0.0 && !gamma.is_nan(), || format!("gamma must lie in [-inf, 0), got {gamma}"))?;
    ensure(nu >= 0.0 && rho > 0.0, || "need nu >= 0 and rho > 0".into())?;
    ensure(green > 0.0 && green.is_finite(), || format!("Green's value must be positive, got {green}"))?;
    let c = lambda_tilde_coefficient(gamma, nu, rho, green);
    let (a_star, min) = minimize_on_unit(|a| rate_function(a, rates).unwrap_or(f64::INFINITY) + c * a);
    let mut r = RateReport::new("lambda_tilde", min, RateMethod::GridGolden).rates(rates);
    r.d = Some(d);
    r.gamma = Some(gamma);
    r.nu = Some(nu);
    r.rho = Some(rho);
    r.kappa = Some(0.0);
    r.minimizer = Some(a_star);
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    /// One moving trap: survival probability `prefactor/√t` (d=1), `prefactor/log t` (d=2).
    Fig2,
    /// Poisson traps: survival probability `exp(−rate(t))`.
    Fig3,
}

impl Figure {
    pub fn as_str(&self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
        }
    }
}

/// Shared parameters of the figure curves (all 1 by default).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureParams {
    pub rho: f64,
    pub kappa: f64,
    pub s0: f64,
    pub gamma: f64,
    pub nu: f64,
}

impl Default for FigureParams {
    fn default() -> Self {
        FigureParams { rho: 1.0, kappa: 1.0, s0: 1.0, gamma: -1.0, nu: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub figure: Figure,
    pub d: usize,
    pub s1: f64,
    pub t: f64,
    pub value: f64,
}

pub const FIGURE_CSV_HEADER: &str = "figure,d,s0,s1,kappa,rho,gamma,nu,t,value";

pub fn figure_data(figure: Figure, d: usize, params: FigureParams, s1_values: &[f64], t_grid: &[f64]) -> Result<Vec<FigureRow>> {
    ensure(d == 1 || d == 2, || format!("figures are defined for d in {{1, 2}}, got {d}"))?;
    let mut rows = Vec::with_capacity(s1_values.len() * t_grid.len());
    for &s1 in s1_values {
        let rates = SwitchRates::new(params.s0, s1)?;
        for &t in t_grid {
            ensure(t > 1.0, || format!("figure times must exceed 1, got {t}"))?;
            let value = match figure {
                Figure::Fig2 => {
                    let pre = thm12a_prefactor(d, params.rho, params.kappa, rates, params.gamma)?;
                    if d == 1 { pre / t.sqrt() } else { pre / t.ln() }
                }
                Figure::Fig3 => (-thm13a_rate(d, params.nu, params.rho, rates, t)?).exp(),
            };
            rows.push(FigureRow { figure, d, s1, t, value });
        }
    }
    Ok(rows)
}

pub fn write_figure_csv<W: Write>(rows: &[FigureRow], params: FigureParams, mut w: W) -> Result<()> {
    writeln!(w, "{FIGURE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.figure.as_str(),
            r.d,
            params.s0,
            r.s1,
            params.kappa,
            params.rho,
            format_gamma(params.gamma),
            params.nu,
            r.t,
            r.value
        )?;
    }
    Ok(())
}
