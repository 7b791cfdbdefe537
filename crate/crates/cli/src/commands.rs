use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use dormant_pam::asymptotics::{
    dirichlet_constant, figure_data, lambda_tilde, thm11a_rate, thm11b_dual_report, thm12a_prefactor, thm13a_rate,
    write_figure_csv, write_rate_csv, Figure, FigureParams, RateMethod, RateReport,
};
use dormant_pam::environment::{inflation_radius, sample_environment, Window};
use dormant_pam::estimators::{
    branching_simulate, fk_annealed, fk_annealed_exact_env, fk_difference_walk, fk_poisson_time_change,
    pde_environment_average, Conditioning, EstimatorConfig,
};
use dormant_pam::lattice::{
    default_radius, solve_difference_walk_given_switch, solve_pam_switching, solve_single_site, solve_trap_response,
    LatticeField, SolverConfig,
};
use dormant_pam::rng::substream;
use dormant_pam::spectral::{
    green_function, laplace_green, top_eigenvalue, GreenMethod, GreenTarget, OperatorKind, OperatorSpec,
};
use dormant_pam::switching::sample_switch_path;
use dormant_pam::verify::{criterion_name, outcomes_csv, run_criterion, VerifyConfig, CRITERIA};
use dormant_pam::walker::{sample_walk, McConfig, ORIGIN};
use dormant_pam::McEstimate;

use crate::config::{EnvChoice, Resolved};
use crate::CliError;

/// Where a subcommand writes its table.
pub struct Output {
    file: Option<PathBuf>,
    dir: PathBuf,
}

impl Output {
    pub fn new(file: Option<PathBuf>, dir: PathBuf) -> Self {
        Output { file, dir }
    }

    fn write(&self, default_name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.file.clone().unwrap_or_else(|| self.dir.join(default_name));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        eprintln!("wrote {}", path.display());
        Ok(path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorChoice {
    /// Environment sampling.
    Fk,
    /// Environment averaged exactly.
    ExactEnv,
    /// Single moving trap via the difference walk.
    DifferenceWalk,
    /// Direct particle simulation.
    Branching,
    /// Poisson traps, immobile walker, time-change route.
    PoissonTimeChange,
    /// PDE total mass averaged over environments.
    PdeAverage,
}

fn estimator_cfg(s: &Resolved) -> EstimatorConfig {
    EstimatorConfig {
        inner_dt: s.dt,
        inner_radius: s.radius,
        ..EstimatorConfig::new(s.n, s.master_seed).with_workers(s.workers)
    }
}

fn estimate_row(name: &str, s: &Resolved, e: &McEstimate, survival: Option<&McEstimate>) -> String {
    format!(
        "{name},{},{},{},{},{},{},{},{}",
        s.record(),
        s.n,
        e.mean,
        e.stderr,
        e.log_mean,
        e.overflow,
        survival.map(|x| x.mean.to_string()).unwrap_or_default(),
        survival.map(|x| x.stderr.to_string()).unwrap_or_default()
    )
}

pub fn estimate(which: EstimatorChoice, integrate_walk: bool, s: &Resolved, out: &Output) -> Result<(), CliError> {
    let model = s.model()?;
    let mut cfg = estimator_cfg(s);
    if integrate_walk {
        if which != EstimatorChoice::DifferenceWalk {
            return Err(CliError::Config("--integrate-walk applies only to the difference-walk estimator".into()));
        }
        cfg = cfg.with_conditioning(Conditioning::IntegrateWalk);
    }
    let name = which.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let (est, survival) = match which {
        EstimatorChoice::Fk => (fk_annealed(&model, s.t, &cfg)?, None),
        EstimatorChoice::ExactEnv => (fk_annealed_exact_env(&model, s.t, &cfg)?, None),
        EstimatorChoice::DifferenceWalk => (fk_difference_walk(&model, s.t, &cfg)?, None),
        EstimatorChoice::Branching => {
            let b = branching_simulate(&model, s.t, &cfg)?;
            (b.population, Some(b.survival))
        }
        EstimatorChoice::PoissonTimeChange => (fk_poisson_time_change(&model, s.t, &cfg)?, None),
        EstimatorChoice::PdeAverage => (pde_environment_average(&model, s.t, &cfg)?, None),
    };
    let csv = format!(
        "estimator,{},n,mean,stderr,log_mean,overflow,survival_mean,survival_stderr\n{}\n",
        Resolved::RECORD_HEADER,
        estimate_row(&name, s, &est, survival.as_ref())
    );
    print!("{csv}");
    out.write("estimate.csv", &csv)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EquationChoice {
    /// PAM with switching in one sampled environment.
    Pam,
    /// Trap field around an immobile, always-active walker.
    SingleSite,
    /// Trap field along one sampled (X, α) path.
    TrapResponse,
    /// Conditional difference-walk expectation given one sampled α.
    DifferenceWalk,
}

fn field_rows(tag: &str, s: &Resolved, field: &LatticeField, layer_names: &[&str], rows: &mut String) -> Result<(), CliError> {
    let w = Window::centered(field.d, field.radius as i32)?;
    for (layer, values) in field.layers.iter().enumerate() {
        for (i, v) in values.iter().enumerate() {
            let x = w.site_at(i);
            let coords: Vec<String> = x[..field.d].iter().map(|c| c.to_string()).collect();
            rows.push_str(&format!("{tag},{},{},{},{},{v}\n", s.record(), field.time, coords.join(","), layer_names[layer]));
        }
    }
    Ok(())
}

fn field_header(d: usize) -> String {
    let xs: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    format!("equation,{},time,{},type,value\n", Resolved::RECORD_HEADER, xs.join(","))
}

pub fn pde(equation: EquationChoice, snapshots: &[f64], s: &Resolved, out: &Output) -> Result<(), CliError> {
    let mut rng = substream(s.master_seed, 0);
    let mut cfg = SolverConfig::new(s.t);
    cfg.dt = s.dt;
    cfg.radius = s.radius;
    cfg.snapshot_times = snapshots.to_vec();
    let mut csv;
    match equation {
        EquationChoice::Pam => {
            let model = s.model()?;
            let radius = s.radius.unwrap_or_else(|| default_radius(s.d, s.kappa.max(s.rho), s.t));
            cfg.radius = Some(radius);
            let extra = if s.env == EnvChoice::Poisson { inflation_radius(s.d, s.rho, s.t) } else { 0 };
            let env = sample_environment(model.env, Window::centered(s.d, radius as i32 + extra)?, s.t, &mut rng)?;
            let sol = solve_pam_switching(&env, &model, &cfg)?;
            csv = field_header(s.d);
            for f in &sol.snapshots {
                field_rows("pam", s, f, &["0", "1"], &mut csv)?;
            }
            eprintln!("total mass at t={}: {}", s.t, sol.final_mass());
        }
        EquationChoice::SingleSite => {
            let series = solve_single_site(s.d, s.rho, s.gamma, &cfg)?;
            csv = format!("equation,{},time,value\n", Resolved::RECORD_HEADER);
            for (t, v) in series.times.iter().zip(&series.values) {
                csv.push_str(&format!("single_site,{},{t},{v}\n", s.record()));
            }
        }
        EquationChoice::TrapResponse => {
            let path = sample_walk(s.walk()?, s.rates()?, (ORIGIN, 1), s.t, &mut rng)?;
            let sol = solve_trap_response(&path, s.rho, s.gamma, &cfg)?;
            csv = field_header(s.d);
            for f in sol.snapshots.iter().filter(|f| f.time < s.t) {
                field_rows("trap_response", s, f, &["v"], &mut csv)?;
            }
            field_rows("trap_response", s, &sol.final_field, &["v"], &mut csv)?;
            eprintln!("exposure: {} log_weight(nu=1): {}", sol.exposure, sol.log_weight(1.0));
        }
        EquationChoice::DifferenceWalk => {
            let walk = s.walk()?;
            let switch = sample_switch_path(s.rates()?, 1, s.t, &mut rng)?;
            let bound = 1.0 / (2.0 * s.d as f64 * (s.kappa + s.rho)).max(1e-300);
            let dt = s.dt.unwrap_or(0.01f64.min(0.5 * bound));
            let radius = s.radius.unwrap_or_else(|| default_radius(s.d, s.kappa + s.rho, s.t));
            let v = solve_difference_walk_given_switch(&switch, walk, s.gamma, dt, radius)?;
            csv = format!("equation,{},log_conditional_expectation\ndifference_walk,{},{v}\n", Resolved::RECORD_HEADER, s.record());
        }
    }
    out.write("pde.csv", &csv)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpectralTask {
    /// Top eigenvalue of the selected operator.
    Eigen,
    /// λ + √(s0 s1) for one moving catalyst.
    GrowthOne,
    /// μ for the Poisson field.
    GrowthPoisson,
    /// Green's function at the origin.
    Green,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GreenChoice {
    Laplace,
    Fourier,
    MonteCarlo,
}

pub fn spectral(
    task: SpectralTask,
    radii: &[usize],
    method: GreenChoice,
    two_type: bool,
    eigenvector: Option<&Path>,
    s: &Resolved,
    out: &Output,
) -> Result<(), CliError> {
    let mut csv = format!("task,operator,{},radius,value,iterations,residual,error,tail_bound\n", Resolved::RECORD_HEADER);
    let task_name = task.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    if task == SpectralTask::Green {
        let target = if two_type {
            GreenTarget::TwoType { kappa: s.kappa, rho: s.rho, rates: s.rates()? }
        } else {
            GreenTarget::SimpleWalkOrigin
        };
        let m = match method {
            GreenChoice::Laplace => GreenMethod::Laplace,
            GreenChoice::Fourier => GreenMethod::FourierGrid { points: 200 },
            GreenChoice::MonteCarlo => GreenMethod::MonteCarlo {
                horizon: None,
                mc: McConfig { n: s.n, master_seed: s.master_seed, workers: s.workers },
            },
        };
        let g = green_function(s.d, target, m)?;
        let op = if two_type { "two_type" } else { "simple_walk" };
        csv.push_str(&format!("green,{op},{},,{},,,{},{}\n", s.record(), g.value, g.error, g.tail_bound));
    } else {
        let kind = match task {
            SpectralTask::GrowthOne => OperatorKind::TwoType,
            SpectralTask::GrowthPoisson => OperatorKind::SingleSite,
            _ if two_type => OperatorKind::TwoType,
            _ => OperatorKind::SingleSite,
        };
        let radii = if radii.is_empty() { vec![s.radius.unwrap_or(16)] } else { radii.to_vec() };
        let rates = s.rates()?;
        let mut last = None;
        for &n in &radii {
            let spec = match kind {
                OperatorKind::TwoType => OperatorSpec::two_type(s.d, n, s.kappa, s.rho, rates, s.gamma),
                OperatorKind::SingleSite => OperatorSpec::single_site(s.d, n, s.rho, s.gamma),
            };
            let r = top_eigenvalue(&spec, s.tol)?;
            let value = if task == SpectralTask::GrowthOne { r.eigenvalue + rates.symmetric_rate() } else { r.eigenvalue };
            let op = if kind == OperatorKind::TwoType { "two_type" } else { "single_site" };
            csv.push_str(&format!("{task_name},{op},{},{n},{value},{},{},,\n", s.record(), r.iterations, r.residual));
            if last.as_ref().is_none_or(|(m, _, _): &(usize, _, _)| n >= *m) {
                last = Some((n, spec, r));
            }
        }
        if let (Some(path), Some((_, spec, r))) = (eigenvector, last) {
            let mut buf = Vec::new();
            r.write_csv(&spec, &mut buf)?;
            Output::new(Some(path.to_path_buf()), PathBuf::new()).write("", &String::from_utf8_lossy(&buf))?;
        }
    }
    print!("{csv}");
    out.write("spectral.csv", &csv)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormulaChoice {
    /// Every formula whose preconditions hold for the given parameters.
    All,
    Dirichlet,
    Thm11a,
    Thm11b,
    Thm12a,
    Thm13a,
    LambdaTilde,
}

fn closed(id: &str, s: &Resolved, value: f64) -> RateReport {
    RateReport {
        formula_id: id.into(),
        d: Some(s.d),
        s0: Some(s.s0),
        s1: Some(s.s1),
        kappa: Some(s.kappa),
        rho: Some(s.rho),
        gamma: Some(s.gamma),
        nu: s.nu,
        p: s.p,
        t: Some(s.t),
        value,
        minimizer: None,
        method: Some(RateMethod::ClosedForm),
    }
}

fn rate_rows(f: FormulaChoice, green: Option<f64>, s: &Resolved) -> Result<Vec<RateReport>, CliError> {
    let rates = s.rates()?;
    let mut rows = Vec::new();
    match f {
        FormulaChoice::All => {
            let finite_neg = s.gamma < 0.0 && s.gamma.is_finite();
            rows.extend(rate_rows(FormulaChoice::Dirichlet, green, s)?);
            if s.p.is_some() && s.kappa > 0.0 {
                rows.extend(rate_rows(FormulaChoice::Thm11a, green, s)?);
            }
            if s.gamma > 0.0 && s.gamma.is_finite() {
                rows.extend(rate_rows(FormulaChoice::Thm11b, green, s)?);
            }
            if finite_neg && s.d <= 2 {
                rows.extend(rate_rows(FormulaChoice::Thm12a, green, s)?);
            }
            if s.nu.is_some() && s.d <= 2 && (s.d == 1 || s.t > 1.0) {
                rows.extend(rate_rows(FormulaChoice::Thm13a, green, s)?);
            }
            if s.nu.is_some() && s.d >= 3 && s.gamma < 0.0 {
                rows.extend(rate_rows(FormulaChoice::LambdaTilde, green, s)?);
            }
        }
        FormulaChoice::Dirichlet => {
            let (lambda, c) = dirichlet_constant(s.d)?;
            for (id, v) in [("dirichlet_lambda", lambda), ("dirichlet_c", c)] {
                rows.push(RateReport { formula_id: id.into(), d: Some(s.d), value: v, method: Some(RateMethod::ClosedForm), ..Default::default() });
            }
        }
        FormulaChoice::Thm11a => {
            let p = s.p.ok_or_else(|| CliError::Config("thm11a needs the bernoulli environment (p)".into()))?;
            rows.push(closed("thm11a_decay_exponent", s, thm11a_rate(p, s.kappa, rates, s.d, s.t)?));
        }
        FormulaChoice::Thm11b => {
            let dual = thm11b_dual_report(s.gamma, rates)?;
            let mut gap = dual.closed.clone();
            gap.formula_id = "thm11b_closed_minus_variational".into();
            gap.value = dual.discrepancy;
            rows.extend([dual.variational, dual.closed, gap]);
        }
        FormulaChoice::Thm12a => {
            let pre = thm12a_prefactor(s.d, s.rho, s.kappa, rates, s.gamma)?;
            rows.push(closed("thm12a_prefactor", s, pre));
            let scale = if s.d == 1 { s.t.sqrt() } else { s.t.ln() };
            rows.push(closed("thm12a_survival", s, pre / scale));
        }
        FormulaChoice::Thm13a => {
            let nu = s.nu.ok_or_else(|| CliError::Config("thm13a needs the poisson environment (nu)".into()))?;
            rows.push(closed("thm13a_decay_exponent", s, thm13a_rate(s.d, nu, s.rho, rates, s.t)?));
        }
        FormulaChoice::LambdaTilde => {
            let nu = s.nu.ok_or_else(|| CliError::Config("lambda-tilde needs the poisson environment (nu)".into()))?;
            let g = match green {
                Some(g) => g,
                None => laplace_green(s.d, 0.0)?,
            };
            rows.push(lambda_tilde(s.d, s.gamma, nu, s.rho, rates, g)?);
        }
    }
    Ok(rows)
}

/// Appends a `master_seed` column to every line of a CSV table.
fn with_seed(csv: &str, seed: u64) -> String {
    let mut lines = csv.lines();
    let mut s = String::new();
    if let Some(h) = lines.next() {
        s.push_str(h);
        s.push_str(",master_seed\n");
    }
    for l in lines {
        s.push_str(&format!("{l},{seed}\n"));
    }
    s
}

pub fn rates(f: FormulaChoice, green: Option<f64>, s: &Resolved, out: &Output) -> Result<(), CliError> {
    let rows = rate_rows(f, green, s)?;
    let mut buf = Vec::new();
    write_rate_csv(&rows, &mut buf)?;
    let csv = with_seed(&String::from_utf8_lossy(&buf), s.master_seed);
    print!("{csv}");
    out.write("rates.csv", &csv)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FigureChoice {
    Fig2,
    Fig3,
}

pub fn figures(fig: FigureChoice, s1_values: &[f64], t_grid: &[f64], s: &Resolved, out: &Output) -> Result<(), CliError> {
    let figure = match fig {
        FigureChoice::Fig2 => Figure::Fig2,
        FigureChoice::Fig3 => Figure::Fig3,
    };
    let params = FigureParams { rho: s.rho, kappa: s.kappa, s0: s.s0, gamma: s.gamma, nu: s.nu.unwrap_or(1.0) };
    let rows = figure_data(figure, s.d, params, s1_values, t_grid)?;
    let mut buf = Vec::new();
    write_figure_csv(&rows, params, &mut buf)?;
    let csv = with_seed(&String::from_utf8_lossy(&buf), s.master_seed);
    print!("{csv}");
    out.write(&format!("{}.csv", figure.as_str()), &csv)?;
    Ok(())
}

pub fn verify(only: &[u32], s: &Resolved, out: &Output) -> Result<(), CliError> {
    let ids: Vec<u32> = if only.is_empty() { CRITERIA.iter().map(|(i, _)| *i).collect() } else { only.to_vec() };
    if let Some(bad) = ids.iter().find(|&&i| criterion_name(i).is_none()) {
        return Err(CliError::Config(format!("unknown criterion {bad}; valid ids are 1..=13")));
    }
    let cfg = VerifyConfig { master_seed: s.master_seed, workers: s.workers };
    let mut outcomes = Vec::new();
    for id in ids {
        let o = run_criterion(id, &cfg)?;
        println!(
            "{:>2} {:<24} {} ({:.1}s) {}",
            o.id,
            o.name,
            if o.passed { "PASS" } else { "FAIL" },
            o.elapsed_secs,
            o.detail
        );
        outcomes.push(o);
    }
    out.write("verify.csv", &outcomes_csv(&outcomes, s.master_seed))?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}
