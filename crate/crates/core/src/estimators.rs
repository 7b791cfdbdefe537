//! Monte Carlo estimators of the annealed population size ⟨U(t)⟩ and a direct
//! branching-particle simulator.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{
    check_gamma, gamma_times, bernoulli_annealed_log_weight, inflation_radius, poisson_annealed_log_weight,
    sample_environment, EnvironmentKind, LazyBernoulli, TrapWalk, Window,
};
use crate::error::{ensure, Error, Result};
use crate::lattice::{
    default_radius, solve_difference_walk_given_switch, solve_pam_switching, solve_single_site, SolverConfig,
};
use crate::rng::{exp_time, Stream};
use crate::stats::{run_replicates, McEstimate};
use crate::switching::{local_times, sample_switch_path, SwitchRates};
use crate::walker::{
    sample_difference_walk, sample_walk, site_local_times, Move, Site, WalkParams, WalkPath, ORIGIN,
};

/// All model rates in one record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub walk: WalkParams,
    pub rates: SwitchRates,
    /// Branching (> 0) or killing (< 0) strength; `-inf` for hard traps.
    pub gamma: f64,
    pub env: EnvironmentKind,
}

impl ModelParams {
    pub fn new(walk: WalkParams, rates: SwitchRates, gamma: f64, env: EnvironmentKind) -> Result<Self> {
        let m = ModelParams { walk, rates, gamma, env };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        WalkParams::new(self.walk.d, self.walk.kappa, self.walk.rho)?;
        SwitchRates::new(self.rates.s0, self.rates.s1)?;
        check_gamma(self.gamma)?;
        self.env.validate()?;
        match self.env {
            EnvironmentKind::BernoulliField { .. } => Ok(()),
            EnvironmentKind::SingleWalker { rho } | EnvironmentKind::PoissonField { rho, .. } => ensure(
                rho == self.walk.rho,
                || format!("environment rho {rho} differs from walk rho {}", self.walk.rho),
            ),
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

/// How the difference-walk estimator treats the spatial component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Simulate (Z,α) and average `exp(γℓ^Z_t(0,1))`.
    #[default]
    Plain,
    /// Simulate α only and integrate Z out with a lattice solve.
    IntegrateWalk,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub n: usize,
    pub master_seed: u64,
    /// Worker threads; 0 selects the rayon default.
    pub workers: usize,
    /// Time step of inner lattice solves (auto when absent).
    pub inner_dt: Option<f64>,
    /// Box radius of inner lattice solves (auto when absent).
    pub inner_radius: Option<usize>,
    /// Largest population the branching simulator tolerates.
    pub population_cap: usize,
    pub conditioning: Conditioning,
}

impl EstimatorConfig {
    pub fn new(n: usize, master_seed: u64) -> Self {
        EstimatorConfig {
            n,
            master_seed,
            workers: 0,
            inner_dt: None,
            inner_radius: None,
            population_cap: 1_000_000,
            conditioning: Conditioning::Plain,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_inner_dt(mut self, dt: f64) -> Self {
        self.inner_dt = Some(dt);
        self
    }

    pub fn with_conditioning(mut self, c: Conditioning) -> Self {
        self.conditioning = c;
        self
    }

    fn check(&self, t: f64) -> Result<()> {
        ensure(t > 0.0 && t.is_finite(), || format!("t must be positive and finite, got {t}"))?;
        ensure(self.n >= 2, || format!("n must be at least 2, got {}", self.n))
    }

    fn solver(&self, t: f64) -> SolverConfig {
        SolverConfig { radius: self.inner_radius, dt: self.inner_dt, horizon: t, snapshot_times: Vec::new() }
    }
}

fn estimate_logs<F>(cfg: &EstimatorConfig, f: F) -> Result<McEstimate>
where
    F: Fn(&mut Stream) -> Result<f64> + Sync + Send,
{
    let logs = run_replicates(cfg.n, cfg.master_seed, cfg.workers, |_, rng| f(rng))?;
    Ok(McEstimate::from_log_values(&logs, cfg.master_seed))
}

fn sample_x<R: Rng + ?Sized>(model: &ModelParams, t: f64, rng: &mut R) -> Result<WalkPath> {
    sample_walk(model.walk, model.rates, (ORIGIN, 1), t, rng)
}

/// Environment window for a replicate whose walker has already been sampled.
fn replicate_window(model: &ModelParams, path: &WalkPath, t: f64) -> Result<Window> {
    let d = model.walk.d;
    match model.env {
        EnvironmentKind::BernoulliField { .. } => Window::inflated(d, path.bounding_box(), 0),
        EnvironmentKind::SingleWalker { .. } => Window::centered(d, 0),
        EnvironmentKind::PoissonField { rho, .. } => Window::inflated(d, path.bounding_box(), inflation_radius(d, rho, t)),
    }
}

/// Feynman-Kac estimator with environment sampling: each replicate draws
/// (X,α) from (0,1), then an environment, and returns
/// `exp(γ ∫₀ᵗ α(s) ξ(X(s), s) ds)` computed exactly by event sweeping.
pub fn fk_annealed(model: &ModelParams, t: f64, cfg: &EstimatorConfig) -> Result<McEstimate> {
    model.validate()?;
    cfg.check(t)?;
    estimate_logs(cfg, |rng| {
        let path = sample_x(model, t, rng)?;
        let window = replicate_window(model, &path, t)?;
        let env = sample_environment(model.env, window, t, rng)?;
        Ok(gamma_times(model.gamma, env.active_exposure(&path)?))
    })
}

/// Path-only estimator with the environment averaged out exactly.
pub fn fk_annealed_exact_env(model: &ModelParams, t: f64, cfg: &EstimatorConfig) -> Result<McEstimate> {
    model.validate()?;
    cfg.check(t)?;
    let solver = cfg.solver(t);
    match model.env {
        EnvironmentKind::BernoulliField { p } => estimate_logs(cfg, |rng| {
            let path = sample_x(model, t, rng)?;
            Ok(bernoulli_annealed_log_weight(&site_local_times(&path), model.gamma, p))
        }),
        EnvironmentKind::PoissonField { nu, rho } => estimate_logs(cfg, |rng| {
            let path = sample_x(model, t, rng)?;
            poisson_annealed_log_weight(&path, model.gamma, nu, rho, &solver)
        }),
        EnvironmentKind::SingleWalker { .. } => Err(Error::Unsupported(
            "exact environment average for a single moving trap; use fk_difference_walk".into(),
        )),
    }
}

/// `ℓ_t^Z(0,1)`: time the path spends at the origin while active.
pub fn origin_active_time(path: &WalkPath) -> f64 {
    path.segments().iter().filter(|s| s.site == ORIGIN && s.state == 1).map(|s| s.end - s.start).sum()
}

/// Single moving trap via the difference walk Z = X − Y:
/// `⟨U(t)⟩ = E_{(0,1)}[exp(γ ℓ_t^Z(0,1))]`.
pub fn fk_difference_walk(model: &ModelParams, t: f64, cfg: &EstimatorConfig) -> Result<McEstimate> {
    model.validate()?;
    cfg.check(t)?;
    ensure(matches!(model.env, EnvironmentKind::SingleWalker { .. }), || {
        "fk_difference_walk needs a single-walker environment".into()
    })?;
    match cfg.conditioning {
        Conditioning::Plain => estimate_logs(cfg, |rng| {
            let path = sample_difference_walk(model.walk, model.rates, (ORIGIN, 1), t, rng)?;
            Ok(gamma_times(model.gamma, origin_active_time(&path)))
        }),
        Conditioning::IntegrateWalk => {
            let w = model.walk;
            let bound = 1.0 / (2.0 * w.d as f64 * (w.kappa + w.rho)).max(1e-300);
            let dt = cfg.inner_dt.unwrap_or(0.01f64.min(0.5 * bound));
            let radius = cfg.inner_radius.unwrap_or_else(|| default_radius(w.d, w.kappa + w.rho, t));
            estimate_logs(cfg, |rng| {
                let switch = sample_switch_path(model.rates, 1, t, rng)?;
                solve_difference_walk_given_switch(&switch, w, model.gamma, dt, radius)
            })
        }
    }
}

/// Poisson field with an immobile walker (κ = 0) along the time-change route:
/// `E_α[exp(νγ ∫₀^{L_t(1)} v(0,s) ds)]` with `v` from one single-site solve.
pub fn fk_poisson_time_change(model: &ModelParams, t: f64, cfg: &EstimatorConfig) -> Result<McEstimate> {
    model.validate()?;
    cfg.check(t)?;
    let EnvironmentKind::PoissonField { nu, rho } = model.env else {
        return Err(Error::Unsupported("time-change route needs a Poisson field".into()));
    };
    ensure(model.walk.kappa == 0.0, || "time-change route needs kappa = 0".into())?;
    ensure(model.gamma.is_finite(), || "time-change route needs finite gamma".into())?;
    let series = solve_single_site(model.walk.d, rho, model.gamma, &cfg.solver(t))?;
    let cumulative = series.cumulative_integral();
    let integral_to = |l: f64| {
        let k = series.times.partition_point(|&s| s <= l).max(1) - 1;
        let extra = if k + 1 < series.times.len() { 0.5 * (series.values[k] + series.value_at(l)) * (l - series.times[k]) } else { 0.0 };
        cumulative[k] + extra
    };
    estimate_logs(cfg, |rng| {
        let switch = sample_switch_path(model.rates, 1, t, rng)?;
        let l = local_times(&switch).time_in_1;
        Ok(nu * model.gamma * integral_to(l))
    })
}

/// Average of the PDE total mass `Σ u(x,i,t)` over `cfg.n` independent
/// environment draws on the solver box.
pub fn pde_environment_average(model: &ModelParams, t: f64, cfg: &EstimatorConfig) -> Result<McEstimate> {
    model.validate()?;
    cfg.check(t)?;
    let d = model.walk.d;
    let radius = cfg.inner_radius.unwrap_or_else(|| default_radius(d, model.walk.kappa.max(model.walk.rho), t));
    let solver = SolverConfig { radius: Some(radius), ..cfg.solver(t) };
    let window = match model.env {
        EnvironmentKind::PoissonField { rho, .. } => Window::centered(d, (radius as i32) + inflation_radius(d, rho, t))?,
        _ => Window::centered(d, radius as i32)?,
    };
    let values = run_replicates(cfg.n, cfg.master_seed, cfg.workers, |_, rng| {
        let env = sample_environment(model.env, window, t, rng)?;
        Ok(solve_pam_switching(&env, model, &solver)?.final_mass())
    })?;
    Ok(McEstimate::from_values(&values, cfg.master_seed))
}

/// Totals of the branching simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingEstimate {
    /// Mean total particle count at t, an estimate of ⟨U(t)⟩.
    pub population: McEstimate,
    /// Fraction of replicates with at least one particle at t.
    pub survival: McEstimate,
}

enum LiveEnv {
    Static(LazyBernoulli),
    Moving { counts: HashMap<Site, u32>, walkers: Vec<TrapWalk>, events: Vec<(f64, usize, usize)> },
}

impl LiveEnv {
    fn value(&mut self, x: Site, rng: &mut Stream) -> u32 {
        match self {
            LiveEnv::Static(b) => b.value(x, rng),
            LiveEnv::Moving { counts, .. } => counts.get(&x).copied().unwrap_or(0),
        }
    }
}

fn build_live_env(model: &ModelParams, t: f64, rng: &mut Stream) -> Result<LiveEnv> {
    let d = model.walk.d;
    let walkers = match model.env {
        EnvironmentKind::BernoulliField { p } => return Ok(LiveEnv::Static(LazyBernoulli::new(p))),
        EnvironmentKind::SingleWalker { rho } => vec![TrapWalk::sample(d, ORIGIN, 2.0 * d as f64 * rho, t, rng)],
        EnvironmentKind::PoissonField { rho, .. } => {
            let r = inflation_radius(d, model.walk.kappa, t) + inflation_radius(d, rho, t);
            let env = sample_environment(model.env, Window::centered(d, r)?, t, rng)?;
            env.walkers().to_vec()
        }
    };
    let mut counts = HashMap::new();
    let mut events = Vec::new();
    for (j, w) in walkers.iter().enumerate() {
        *counts.entry(w.start).or_insert(0) += 1;
        events.extend(w.times.iter().enumerate().map(|(k, &s)| (s, j, k)));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(LiveEnv::Moving { counts, walkers, events })
}

/// One branching replicate; returns the particle count at `t`.
fn branching_replicate(model: &ModelParams, t: f64, cap: usize, rng: &mut Stream) -> Result<usize> {
    let d = model.walk.d;
    let hard = model.gamma == f64::NEG_INFINITY;
    let branch = model.gamma.max(0.0);
    let death = if hard { 0.0 } else { (-model.gamma).max(0.0) };
    let migrate = 2.0 * d as f64 * model.walk.kappa;
    let (s0, s1) = (model.rates.s0, model.rates.s1);
    let mut env = build_live_env(model, t, rng)?;
    let mut particles: Vec<(Site, u8)> = vec![(ORIGIN, 1)];
    if hard && env.value(ORIGIN, rng) > 0 {
        return Ok(0);
    }
    let mut now = 0.0;
    let mut next_env = 0;
    let mut rates = Vec::new();
    while !particles.is_empty() {
        rates.clear();
        let mut total = 0.0;
        for &(x, s) in &particles {
            let r = if s == 1 {
                let xi = if branch > 0.0 || death > 0.0 { env.value(x, rng) as f64 } else { 0.0 };
                migrate + s1 + (branch + death) * xi
            } else {
                s0
            };
            total += r;
            rates.push(r);
        }
        let env_time = match &env {
            LiveEnv::Moving { events, .. } => events.get(next_env).map(|e| e.0).unwrap_or(f64::INFINITY),
            LiveEnv::Static(_) => f64::INFINITY,
        };
        let candidate = now + exp_time(rng, total);
        if candidate > t.min(env_time) {
            if env_time > t {
                break;
            }
            now = env_time;
            if let LiveEnv::Moving { counts, walkers, events } = &mut env {
                let (_, j, k) = events[next_env];
                let (from, to) = (walkers[j].positions[k], walkers[j].positions[k + 1]);
                *counts.get_mut(&from).expect("walker present") -= 1;
                *counts.entry(to).or_insert(0) += 1;
                if hard {
                    particles.retain(|&(x, s)| !(s == 1 && x == to));
                }
            }
            next_env += 1;
            continue;
        }
        now = candidate;
        let mut u = rng.random::<f64>() * total;
        let mut idx = particles.len() - 1;
        for (i, &r) in rates.iter().enumerate() {
            if u < r {
                idx = i;
                break;
            }
            u -= r;
        }
        let (x, s) = particles[idx];
        if s == 0 {
            particles[idx].1 = 1;
            if hard && env.value(x, rng) > 0 {
                particles.swap_remove(idx);
            }
            continue;
        }
        let xi = if branch > 0.0 || death > 0.0 { env.value(x, rng) as f64 } else { 0.0 };
        if u < migrate {
            let y = Move::random(d, rng).apply(x);
            particles[idx].0 = y;
            if hard && env.value(y, rng) > 0 {
                particles.swap_remove(idx);
            }
        } else if u < migrate + s1 || (branch + death) * xi == 0.0 {
            particles[idx].1 = 0;
        } else if u < migrate + s1 + branch * xi {
            particles.push((x, 1));
            if particles.len() > cap {
                return Err(Error::PopulationCap { cap, time: now });
            }
        } else {
            particles.swap_remove(idx);
        }
    }
    Ok(particles.len())
}

/// Event-driven simulation of the particle system from one active particle at
/// the origin, with the environment sampled once per replicate.
pub fn branching_simulate(model: &ModelParams, t: f64, cfg: &EstimatorConfig) -> Result<BranchingEstimate> {
    model.validate()?;
    cfg.check(t)?;
    let counts = run_replicates(cfg.n, cfg.master_seed, cfg.workers, |_, rng| {
        branching_replicate(model, t, cfg.population_cap, rng)
    })?;
    let pop: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let alive: Vec<f64> = counts.iter().map(|&c| if c > 0 { 1.0 } else { 0.0 }).collect();
    Ok(BranchingEstimate {
        population: McEstimate::from_values(&pop, cfg.master_seed),
        survival: McEstimate::from_values(&alive, cfg.master_seed),
    })
}
