//! Explicit time-stepping on truncated boxes `[−n, n]^d`: the PAM with
//! switching, the trap-response equation along a fixed path, the single-site
//! equation, and the difference-walk occupation weight conditioned on α.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::environment::{check_gamma, EnvContents, EnvironmentRealization, Window};
use crate::error::{ensure, Error, Result};
use crate::estimators::ModelParams;
use crate::switching::SwitchPath;
use crate::walker::{Site, WalkParams, WalkPath, ORIGIN};

/// Neighbour tables for the box `[−n, n]^d`.
#[derive(Clone, Debug)]
pub struct BoxGeometry {
    pub d: usize,
    pub radius: usize,
    pub window: Window,
    nbrs: Vec<usize>,
}

const OUTSIDE: usize = usize::MAX;

impl BoxGeometry {
    pub fn new(d: usize, radius: usize) -> Result<Self> {
        ensure(radius >= 1, || "box radius must be at least 1".into())?;
        let window = Window::centered(d, radius as i32)?;
        let len = window.len();
        let mut nbrs = vec![OUTSIDE; len * 2 * d];
        for (i, x) in window.sites().enumerate() {
            for k in 0..d {
                for (j, delta) in [1i32, -1].into_iter().enumerate() {
                    let mut y = x;
                    y[k] += delta;
                    if let Some(idx) = window.index_of(y) {
                        nbrs[i * 2 * d + 2 * k + j] = idx;
                    }
                }
            }
        }
        Ok(BoxGeometry { d, radius, window, nbrs })
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, x: Site) -> Option<usize> {
        self.window.index_of(x)
    }

    pub fn origin(&self) -> usize {
        self.index(ORIGIN).expect("origin lies in every box")
    }

    pub fn site(&self, i: usize) -> Site {
        self.window.site_at(i)
    }

    /// `dst = Δ src`, with `outside` as the value beyond the box.
    pub fn laplacian(&self, src: &[f64], dst: &mut [f64], outside: f64) {
        let dd = 2 * self.d;
        for (i, out) in dst.iter_mut().enumerate() {
            let c = src[i];
            let mut acc = 0.0;
            for &nb in &self.nbrs[i * dd..(i + 1) * dd] {
                acc += if nb == OUTSIDE { outside } else { src[nb] } - c;
            }
            *out = acc;
        }
    }

    /// Number of neighbours of `i` outside the box.
    pub fn boundary_links(&self, i: usize) -> usize {
        let dd = 2 * self.d;
        self.nbrs[i * dd..(i + 1) * dd].iter().filter(|&&nb| nb == OUTSIDE).count()
    }
}

/// Default radius `ceil(4√(2d·D·t)) + 2d + 2` for diffusion scale `D`.
pub fn default_radius(d: usize, scale: f64, horizon: f64) -> usize {
    (4.0 * (2.0 * d as f64 * scale * horizon).sqrt()).ceil() as usize + 2 * d + 2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Box radius; chosen from the horizon and rates when absent.
    pub radius: Option<usize>,
    /// Time step; half the positivity bound when absent.
    pub dt: Option<f64>,
    pub horizon: f64,
    /// Times at which full fields are recorded (the horizon is always recorded).
    pub snapshot_times: Vec<f64>,
}

impl SolverConfig {
    pub fn new(horizon: f64) -> Self {
        SolverConfig { radius: None, dt: None, horizon, snapshot_times: Vec::new() }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_radius(mut self, radius: usize) -> Self {
        self.radius = Some(radius);
        self
    }

    fn step(&self, bound: f64) -> Result<f64> {
        ensure(self.horizon.is_finite() && self.horizon >= 0.0, || format!("horizon must be finite and >= 0, got {}", self.horizon))?;
        match self.dt {
            None => Ok(0.5 * bound),
            Some(dt) if dt > 0.0 && dt <= bound => Ok(dt),
            Some(dt) => Err(Error::Config(format!("dt = {dt} violates the stability bound {bound}"))),
        }
    }
}

/// Values on a box, one layer per type (or one layer for type-free equations).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeField {
    pub d: usize,
    pub radius: usize,
    pub time: f64,
    pub layers: Vec<Vec<f64>>,
}

impl LatticeField {
    pub fn value(&self, x: Site, layer: usize) -> Option<f64> {
        let w = Window::centered(self.d, self.radius as i32).ok()?;
        w.index_of(x).map(|i| self.layers[layer][i])
    }

    pub fn total(&self) -> f64 {
        self.layers.iter().flatten().sum()
    }

    /// CSV rows `x1,…,xd,type,value`; single-layer fields report type `-`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let window = Window::centered(self.d, self.radius as i32)?;
        let header: Vec<String> = (1..=self.d).map(|k| format!("x{k}")).collect();
        writeln!(w, "{},type,value", header.join(","))?;
        for (layer, vals) in self.layers.iter().enumerate() {
            let ty = if self.layers.len() == 1 { "-".to_string() } else { layer.to_string() };
            for (i, x) in window.sites().enumerate() {
                let coords: Vec<String> = x[..self.d].iter().map(|c| c.to_string()).collect();
                writeln!(w, "{},{},{}", coords.join(","), ty, vals[i])?;
            }
        }
        Ok(())
    }
}

fn sorted_breaks(mut ts: Vec<f64>, horizon: f64) -> Vec<f64> {
    ts.retain(|&t| t > 0.0 && t < horizon);
    ts.push(horizon);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

fn steps_for(len: f64, dt: f64) -> (usize, f64) {
    if len <= 0.0 {
        return (0, 0.0);
    }
    let n = (len / dt).ceil().max(1.0) as usize;
    (n, len / n as f64)
}

/// Output of [`solve_pam_switching`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PamSolution {
    pub snapshots: Vec<LatticeField>,
    pub dt: f64,
}

impl PamSolution {
    /// `Σ_{x,i} u(x,i,t)` at the horizon.
    pub fn final_mass(&self) -> f64 {
        self.snapshots.last().map(|f| f.total()).unwrap_or(0.0)
    }
}

/// Solve the PAM with switching from `δ_{(0,1)}` in the mass-conserving
/// (forward) form
/// `∂u(x,1) = κΔu(x,1) − s1 u(x,1) + s0 u(x,0) + γξ u(x,1)`,
/// `∂u(x,0) = −s0 u(x,0) + s1 u(x,1)`, zero outside the box.
pub fn solve_pam_switching(env: &EnvironmentRealization, model: &ModelParams, cfg: &SolverConfig) -> Result<PamSolution> {
    check_gamma(model.gamma)?;
    let d = model.walk.d;
    ensure(env.d() == d, || "environment and model dimensions differ".into())?;
    let horizon = cfg.horizon;
    ensure(env.horizon >= horizon, || "environment horizon shorter than solver horizon".into())?;
    let radius = cfg.radius.unwrap_or_else(|| default_radius(d, model.walk.kappa.max(model.walk.rho), horizon));
    let geom = BoxGeometry::new(d, radius)?;
    if let EnvContents::Bernoulli(_) = env.contents {
        let (lo, hi) = (geom.window.lo, geom.window.hi);
        ensure(env.window.contains(lo) && env.window.contains(hi), || "environment window smaller than box".into())?;
    }
    let mut xi = env.initial_counts(&geom.window)?;
    let events: Vec<_> = env.events().into_iter().filter(|e| e.time <= horizon).collect();

    let hard = model.gamma == f64::NEG_INFINITY;
    let xi_max = if hard { 0.0 } else { max_occupation(&geom, &xi, &events) };
    let (s0, s1) = (model.rates.s0, model.rates.s1);
    let kappa = model.walk.kappa;
    let gamma = model.gamma;
    let rate_sum = 2.0 * d as f64 * (kappa + model.walk.rho) + s0 + s1 + if hard { 0.0 } else { gamma.abs() * xi_max };
    let dt = cfg.step(if rate_sum > 0.0 { 0.5 / rate_sum } else { f64::INFINITY })?;
    let dt = if dt.is_finite() { dt } else { horizon.max(1e-300) };

    let n = geom.len();
    let mut u1 = vec![0.0; n];
    let mut u0 = vec![0.0; n];
    u1[geom.origin()] = 1.0;
    let mut lap = vec![0.0; n];
    let clamp = |u1: &mut [f64], xi: &[f64]| {
        if hard {
            for (u, &x) in u1.iter_mut().zip(xi) {
                if x > 0.0 {
                    *u = 0.0;
                }
            }
        }
    };
    clamp(&mut u1, &xi);

    let mut breaks: Vec<f64> = events.iter().map(|e| e.time).collect();
    breaks.extend(cfg.snapshot_times.iter().copied());
    let breaks = sorted_breaks(breaks, horizon);
    let snap = |t: f64, u0: &[f64], u1: &[f64]| LatticeField { d, radius, time: t, layers: vec![u0.to_vec(), u1.to_vec()] };
    let mut snapshots = Vec::new();
    if cfg.snapshot_times.contains(&0.0) {
        snapshots.push(snap(0.0, &u0, &u1));
    }
    let mut t = 0.0;
    let mut ev = 0;
    for &b in &breaks {
        let (steps, h) = steps_for(b - t, dt);
        for _ in 0..steps {
            geom.laplacian(&u1, &mut lap, 0.0);
            for i in 0..n {
                let a = u1[i];
                let z = u0[i];
                let pot = if hard || xi[i] == 0.0 { 0.0 } else { gamma * xi[i] };
                u1[i] = a + h * (kappa * lap[i] - s1 * a + s0 * z + pot * a);
                u0[i] = z + h * (s1 * a - s0 * z);
            }
            clamp(&mut u1, &xi);
        }
        t = b;
        while ev < events.len() && events[ev].time <= t {
            let e = events[ev];
            if let Some(i) = geom.index(e.from) {
                xi[i] -= 1.0;
            }
            if let Some(i) = geom.index(e.to) {
                xi[i] += 1.0;
            }
            ev += 1;
        }
        clamp(&mut u1, &xi);
        if cfg.snapshot_times.contains(&t) || t == horizon {
            snapshots.push(snap(t, &u0, &u1));
        }
    }
    if horizon == 0.0 && snapshots.is_empty() {
        snapshots.push(snap(0.0, &u0, &u1));
    }
    Ok(PamSolution { snapshots, dt })
}

fn max_occupation(geom: &BoxGeometry, xi: &[f64], events: &[crate::environment::EnvEvent]) -> f64 {
    let mut cur: HashMap<usize, f64> = xi.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, &v)| (i, v)).collect();
    let mut best = xi.iter().copied().fold(0.0, f64::max);
    for e in events {
        if let Some(i) = geom.index(e.from) {
            *cur.entry(i).or_insert(0.0) -= 1.0;
        }
        if let Some(i) = geom.index(e.to) {
            let v = cur.entry(i).or_insert(0.0);
            *v += 1.0;
            best = best.max(*v);
        }
    }
    best
}

/// Piece of a trap schedule: the trap sits at box index `site`, switched on
/// when `active`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct TrapPiece {
    start: f64,
    end: f64,
    site: usize,
    active: bool,
}

/// Output of the trap-response and single-site solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapSolution {
    pub snapshots: Vec<LatticeField>,
    /// Grid times, starting at 0.
    pub times: Vec<f64>,
    /// `v(X(t), t)` on the grid.
    pub at_walker: Vec<f64>,
    /// Trapezoid value of `∫₀ᵗ α(s)·v(X(s), s) ds`.
    pub exposure: f64,
    pub final_field: LatticeField,
    pub gamma: f64,
    pub dt: f64,
}

impl TrapSolution {
    /// `Σ_y w(y, t)` with `w = 1 − v`, at the horizon.
    pub fn absorbed_mass(&self) -> f64 {
        self.final_field.layers[0].iter().map(|v| 1.0 - v).sum()
    }

    /// `log` of the Poisson-field weight `exp(νγ∫αv)`; for hard traps the
    /// mass-balance form `−ν Σ_y w(y,t)`.
    pub fn log_weight(&self, nu: f64) -> f64 {
        if self.gamma == f64::NEG_INFINITY {
            -nu * self.absorbed_mass()
        } else {
            nu * self.gamma * self.exposure
        }
    }
}

fn trap_dt(d: usize, rho: f64, gamma: f64, cfg: &SolverConfig) -> Result<f64> {
    let g = if gamma == f64::NEG_INFINITY { 0.0 } else { gamma.abs() };
    let rate = 2.0 * d as f64 * rho + g;
    let dt = cfg.step(if rate > 0.0 { 0.5 / rate } else { f64::INFINITY })?;
    Ok(if dt.is_finite() { dt } else { cfg.horizon.max(1e-300) })
}

fn run_trap_schedule(
    geom: &BoxGeometry,
    rho: f64,
    gamma: f64,
    pieces: &[TrapPiece],
    dt: f64,
    snapshot_times: &[f64],
    mut observe: impl FnMut(f64, &[f64]),
) -> TrapSolution {
    let n = geom.len();
    let hard = gamma == f64::NEG_INFINITY;
    let mut v = vec![1.0; n];
    let mut lap = vec![0.0; n];
    let d = geom.d;
    let radius = geom.radius;
    let snap = |t: f64, v: &[f64]| LatticeField { d, radius, time: t, layers: vec![v.to_vec()] };
    let mut snapshots = Vec::new();
    let mut times = Vec::new();
    let mut at_walker = Vec::new();
    let mut exposure = 0.0;
    if let Some(first) = pieces.first() {
        if hard && first.active {
            v[first.site] = 0.0;
        }
        times.push(0.0);
        at_walker.push(v[first.site]);
        observe(0.0, &v);
        if snapshot_times.contains(&0.0) {
            snapshots.push(snap(0.0, &v));
        }
    }
    let mut t = 0.0;
    for p in pieces {
        if hard && p.active {
            v[p.site] = 0.0;
        }
        let (steps, h) = steps_for(p.end - p.start, dt);
        for k in 0..steps {
            let before = v[p.site];
            geom.laplacian(&v, &mut lap, 1.0);
            for i in 0..n {
                v[i] += h * rho * lap[i];
            }
            if p.active {
                if hard {
                    v[p.site] = 0.0;
                } else {
                    // potential term uses the pre-step value, as in the Euler update
                    v[p.site] += h * gamma * before;
                    exposure += 0.5 * h * (before + v[p.site]);
                }
            }
            t = if k + 1 == steps { p.end } else { p.start + (k + 1) as f64 * h };
            times.push(t);
            at_walker.push(v[p.site]);
            observe(t, &v);
        }
        t = p.end;
        if snapshot_times.contains(&t) {
            snapshots.push(snap(t, &v));
        }
    }
    let final_field = snap(t, &v);
    TrapSolution { snapshots, times, at_walker, exposure, final_field, gamma, dt }
}

fn trap_pieces(geom: &BoxGeometry, path: &WalkPath, horizon: f64, extra_breaks: &[f64]) -> Result<Vec<TrapPiece>> {
    let mut pieces = Vec::new();
    let mut breaks: Vec<f64> = extra_breaks.iter().copied().filter(|&b| b > 0.0 && b < horizon).collect();
    breaks.sort_by(f64::total_cmp);
    for seg in path.segments() {
        if seg.start >= horizon {
            break;
        }
        let end = seg.end.min(horizon);
        let site = geom
            .index(seg.site)
            .ok_or_else(|| Error::Input("path leaves the solver box".into()))?;
        let mut a = seg.start;
        for &b in breaks.iter().filter(|&&b| b > seg.start && b < end) {
            pieces.push(TrapPiece { start: a, end: b, site, active: seg.state == 1 });
            a = b;
        }
        pieces.push(TrapPiece { start: a, end, site, active: seg.state == 1 });
    }
    Ok(pieces)
}

fn path_extent(path: &WalkPath) -> i32 {
    let (lo, hi) = path.bounding_box();
    (0..path.d).map(|k| lo[k].abs().max(hi[k].abs())).max().unwrap_or(0)
}

fn trap_radius(path_extent: i32, d: usize, rho: f64, cfg: &SolverConfig) -> Result<usize> {
    match cfg.radius {
        Some(r) => {
            ensure(r as i32 >= path_extent, || format!("box radius {r} does not contain the path (extent {path_extent})"))?;
            Ok(r)
        }
        None => Ok(path_extent as usize + default_radius(d, rho, cfg.horizon)),
    }
}

/// Solve `∂v = ρΔv + γ·1{y = X(t), α(t) = 1}·v`, `v(·,0) ≡ 1`, with far-field
/// value 1 outside the box. Hard traps (γ = −∞) clamp `v(X(t)) = 0` while active.
pub fn solve_trap_response(path: &WalkPath, rho: f64, gamma: f64, cfg: &SolverConfig) -> Result<TrapSolution> {
    check_gamma(gamma)?;
    ensure(path.horizon() >= cfg.horizon, || "path horizon shorter than solver horizon".into())?;
    let radius = trap_radius(path_extent(path), path.d, rho, cfg)?;
    let geom = BoxGeometry::new(path.d, radius)?;
    let dt = trap_dt(path.d, rho, gamma, cfg)?;
    let pieces = trap_pieces(&geom, path, cfg.horizon, &cfg.snapshot_times)?;
    Ok(run_trap_schedule(&geom, rho, gamma, &pieces, dt, &cfg.snapshot_times, |_, _| {}))
}

/// `v(0,t)` on the solver grid for the single-site equation `∂v = ρΔv + γδ₀v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleSiteSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SingleSiteSeries {
    /// Linear interpolation of `v(0, ·)` at `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values[0];
        }
        if k == self.times.len() {
            return *self.values.last().expect("nonempty");
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.values[k - 1] * (1.0 - w) + self.values[k] * w
    }

    /// Running trapezoid integral `∫₀^{times[k]} v(0,s) ds`.
    pub fn cumulative_integral(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.times.len()];
        for k in 1..self.times.len() {
            acc[k] = acc[k - 1] + 0.5 * (self.times[k] - self.times[k - 1]) * (self.values[k] + self.values[k - 1]);
        }
        acc
    }
}

pub fn solve_single_site(d: usize, rho: f64, gamma: f64, cfg: &SolverConfig) -> Result<SingleSiteSeries> {
    let switch = SwitchPath::constant(1, cfg.horizon)?;
    let path = WalkPath::stationary(d, ORIGIN, switch);
    let sol = solve_trap_response(&path, rho, gamma, cfg)?;
    Ok(SingleSiteSeries { times: sol.times, values: sol.at_walker })
}

/// Result of [`pascal_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PascalReport {
    pub paths: usize,
    /// Largest `v_{(X,α)}(y,t) − v_{(0,α)}(0,t)` over paths, box sites and grid times.
    pub max_violation: f64,
    /// Number of (path, time) pairs where the excess is above `1e-9`.
    pub violations: usize,
    /// Largest `v_{(0,α)}(0,t) − v_{(X,α)}(y,t)` (the reversed inequality).
    pub max_reverse_violation: f64,
    /// Largest `Σ_y w_{(0,α)}(y,t) − Σ_y w_{(X,α)}(y,t)` over grid times.
    pub max_mass_violation: f64,
}

/// Compare `v_{(X,α)}(y,t)` with `v_{(0,α)}(0,t)` (same α, X ≡ 0) on a common grid.
pub fn pascal_check(paths: &[WalkPath], rho: f64, gamma: f64, cfg: &SolverConfig) -> Result<PascalReport> {
    check_gamma(gamma)?;
    ensure(!paths.is_empty(), || "pascal_check needs at least one path".into())?;
    let extent = paths.iter().map(path_extent).max().unwrap_or(0);
    let d = paths[0].d;
    let radius = trap_radius(extent, d, rho, cfg)?;
    let geom = BoxGeometry::new(d, radius)?;
    let dt = trap_dt(d, rho, gamma, cfg)?;
    let origin = geom.origin();
    let mut report = PascalReport {
        paths: paths.len(),
        max_violation: f64::NEG_INFINITY,
        violations: 0,
        max_reverse_violation: f64::NEG_INFINITY,
        max_mass_violation: f64::NEG_INFINITY,
    };
    for path in paths {
        let pieces = trap_pieces(&geom, path, cfg.horizon, &[])?;
        let still: Vec<TrapPiece> = pieces.iter().map(|p| TrapPiece { site: origin, ..*p }).collect();
        let mut at_origin = Vec::new();
        let mut mass_still = Vec::new();
        run_trap_schedule(&geom, rho, gamma, &still, dt, &[], |_, v| {
            at_origin.push(v[origin]);
            mass_still.push(v.iter().map(|x| 1.0 - x).sum::<f64>());
        });
        let mut k = 0;
        run_trap_schedule(&geom, rho, gamma, &pieces, dt, &[], |_, v| {
            let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            let excess = hi - at_origin[k];
            report.max_violation = report.max_violation.max(excess);
            if excess > 1e-9 {
                report.violations += 1;
            }
            report.max_reverse_violation = report.max_reverse_violation.max(at_origin[k] - lo);
            let mass: f64 = v.iter().map(|x| 1.0 - x).sum();
            report.max_mass_violation = report.max_mass_violation.max(mass_still[k] - mass);
            k += 1;
        });
    }
    Ok(report)
}

/// `log E[exp(γ ℓ_t^Z(0,1)) | α]` for the difference walk started at `(0, α(0))`.
///
/// Evolves the sub-probability law of Z given α on a box (zero outside): Euler
/// for the diffusion with rate `κα(s)+ρ` per neighbour, then the exact factor
/// `e^{γh}` at the origin while active.
pub fn solve_difference_walk_given_switch(
    switch: &SwitchPath,
    params: WalkParams,
    gamma: f64,
    dt: f64,
    radius: usize,
) -> Result<f64> {
    check_gamma(gamma)?;
    let geom = BoxGeometry::new(params.d, radius)?;
    let dd = 2.0 * params.d as f64;
    let max_rate = dd * (params.kappa + params.rho);
    ensure(dt > 0.0 && dt * max_rate <= 1.0, || format!("dt = {dt} violates the positivity bound {}", 1.0 / max_rate))?;
    let n = geom.len();
    let origin = geom.origin();
    let mut m = vec![0.0; n];
    m[origin] = 1.0;
    let mut lap = vec![0.0; n];
    let mut log_scale = 0.0;
    for (a, b, s) in switch.intervals() {
        let diff = params.rho + params.kappa * s as f64;
        let (steps, h) = steps_for(b - a, dt);
        let factor = (gamma * h).exp();
        for _ in 0..steps {
            geom.laplacian(&m, &mut lap, 0.0);
            for i in 0..n {
                m[i] += h * diff * lap[i];
            }
            if s == 1 {
                m[origin] *= factor;
            }
        }
        let total: f64 = m.iter().sum();
        if total == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        if !(1e-100..=1e100).contains(&total) {
            log_scale += total.ln();
            m.iter_mut().for_each(|x| *x /= total);
        }
    }
    Ok(log_scale + m.iter().sum::<f64>().ln())
}
