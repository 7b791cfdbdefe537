//! Random environments ξ: Bernoulli traps, a single moving trap and a Poisson
//! field of moving traps, with the exact environment-averaged weights.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::lattice::{solve_trap_response, SolverConfig};
use crate::rng::exp_time;
use crate::walker::{Move, Segment, Site, SiteLocalTimes, WalkPath, MAX_DIM, ORIGIN};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentKind {
    BernoulliField { p: f64 },
    SingleWalker { rho: f64 },
    PoissonField { nu: f64, rho: f64 },
}

impl EnvironmentKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvironmentKind::BernoulliField { p } => ensure(p > 0.0 && p < 1.0, || format!("p must lie in (0,1), got {p}")),
            EnvironmentKind::SingleWalker { rho } => ensure(rho.is_finite() && rho >= 0.0, || format!("rho must be >= 0, got {rho}")),
            EnvironmentKind::PoissonField { nu, rho } => {
                ensure(nu.is_finite() && nu >= 0.0, || format!("nu must be >= 0, got {nu}"))?;
                ensure(rho.is_finite() && rho >= 0.0, || format!("rho must be >= 0, got {rho}"))
            }
        }
    }

    /// Jump-rate scale of the environment particles (0 for static traps).
    pub fn rho(&self) -> f64 {
        match *self {
            EnvironmentKind::BernoulliField { .. } => 0.0,
            EnvironmentKind::SingleWalker { rho } | EnvironmentKind::PoissonField { rho, .. } => rho,
        }
    }
}

/// Check that γ ∈ [−∞, ∞).
pub fn check_gamma(gamma: f64) -> Result<()> {
    ensure(!gamma.is_nan() && gamma != f64::INFINITY, || format!("gamma must lie in [-inf, inf), got {gamma}"))
}

/// `γ·x` with the convention `−∞·0 = 0`.
pub fn gamma_times(gamma: f64, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        gamma * x
    }
}

/// Inclusive box `[lo, hi]` of sites in dimension `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub d: usize,
    pub lo: Site,
    pub hi: Site,
}

impl Window {
    pub fn new(d: usize, lo: Site, hi: Site) -> Result<Self> {
        ensure((1..=MAX_DIM).contains(&d), || format!("dimension {d} unsupported"))?;
        ensure((0..d).all(|k| lo[k] <= hi[k]), || "window must be nonempty".into())?;
        Ok(Window { d, lo, hi })
    }

    pub fn centered(d: usize, radius: i32) -> Result<Self> {
        let mut lo = ORIGIN;
        let mut hi = ORIGIN;
        for k in 0..d {
            lo[k] = -radius;
            hi[k] = radius;
        }
        Self::new(d, lo, hi)
    }

    /// `(lo, hi)` grown by `r` in every direction.
    pub fn inflated(d: usize, (lo, hi): (Site, Site), r: i32) -> Result<Self> {
        let mut lo = lo;
        let mut hi = hi;
        for k in 0..d {
            lo[k] -= r;
            hi[k] += r;
        }
        Self::new(d, lo, hi)
    }

    pub fn contains(&self, x: Site) -> bool {
        (0..self.d).all(|k| x[k] >= self.lo[k] && x[k] <= self.hi[k])
    }

    fn side(&self, k: usize) -> usize {
        (self.hi[k] - self.lo[k] + 1) as usize
    }

    pub fn len(&self) -> usize {
        (0..self.d).map(|k| self.side(k)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of `x` in the lexicographic site order (first axis fastest).
    pub fn index_of(&self, x: Site) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let mut idx = 0;
        for k in (0..self.d).rev() {
            idx = idx * self.side(k) + (x[k] - self.lo[k]) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let mut x = ORIGIN;
        for k in 0..self.d {
            let s = self.side(k);
            x[k] = self.lo[k] + (idx % s) as i32;
            idx /= s;
        }
        x
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(|i| self.site_at(i))
    }
}

/// One environment particle: a simple walk with its jump record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapWalk {
    pub start: Site,
    pub times: Vec<f64>,
    /// `positions[k]` is the site after the first `k` jumps.
    pub positions: Vec<Site>,
    pub lo: Site,
    pub hi: Site,
}

impl TrapWalk {
    pub fn sample<R: Rng + ?Sized>(d: usize, start: Site, rate: f64, horizon: f64, rng: &mut R) -> Self {
        let mut times = Vec::new();
        let mut positions = vec![start];
        let (mut lo, mut hi) = (start, start);
        let mut t = 0.0;
        let mut x = start;
        loop {
            t += exp_time(rng, rate);
            if t > horizon {
                break;
            }
            x = Move::random(d, rng).apply(x);
            for k in 0..d {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
            times.push(t);
            positions.push(x);
        }
        TrapWalk { start, times, positions, lo, hi }
    }

    pub fn position_at(&self, t: f64) -> Site {
        self.positions[self.times.partition_point(|&s| s <= t)]
    }

    fn meets_box(&self, d: usize, lo: Site, hi: Site) -> bool {
        (0..d).all(|k| self.lo[k] <= hi[k] && self.hi[k] >= lo[k])
    }

    /// `∫ 1{active, X(s) = Y(s)} ds` against path segments, by merging event times.
    pub fn active_overlap(&self, segs: &[Segment]) -> f64 {
        let mut total = 0.0;
        let mut j = 0;
        let piece_end = |j: usize| self.times.get(j).copied().unwrap_or(f64::INFINITY);
        for seg in segs {
            while piece_end(j) <= seg.start {
                j += 1;
            }
            let mut a = seg.start;
            let mut k = j;
            while a < seg.end {
                let b = piece_end(k).min(seg.end);
                if seg.state == 1 && self.positions[k] == seg.site {
                    total += b - a;
                }
                a = b;
                k += 1;
            }
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EnvContents {
    Bernoulli(Vec<bool>),
    SingleWalker(TrapWalk),
    Poisson(Vec<TrapWalk>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentRealization {
    pub kind: EnvironmentKind,
    pub window: Window,
    pub horizon: f64,
    pub contents: EnvContents,
}

/// A single moving particle change: at `time` one particle moves `from → to`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvEvent {
    pub time: f64,
    pub from: Site,
    pub to: Site,
}

pub fn sample_environment<R: Rng + ?Sized>(
    kind: EnvironmentKind,
    window: Window,
    horizon: f64,
    rng: &mut R,
) -> Result<EnvironmentRealization> {
    kind.validate()?;
    ensure(horizon.is_finite() && horizon >= 0.0, || format!("horizon must be finite and >= 0, got {horizon}"))?;
    let d = window.d;
    let contents = match kind {
        EnvironmentKind::BernoulliField { p } => EnvContents::Bernoulli((0..window.len()).map(|_| rng.random_bool(p)).collect()),
        EnvironmentKind::SingleWalker { rho } => {
            EnvContents::SingleWalker(TrapWalk::sample(d, ORIGIN, 2.0 * d as f64 * rho, horizon, rng))
        }
        EnvironmentKind::PoissonField { nu, rho } => {
            let mut walkers = Vec::new();
            let law = if nu > 0.0 { Some(Poisson::new(nu).map_err(|e| Error::Input(e.to_string()))?) } else { None };
            for y in window.sites() {
                let count = law.as_ref().map(|l| l.sample(rng) as u64).unwrap_or(0);
                for _ in 0..count {
                    walkers.push(TrapWalk::sample(d, y, 2.0 * d as f64 * rho, horizon, rng));
                }
            }
            EnvContents::Poisson(walkers)
        }
    };
    Ok(EnvironmentRealization { kind, window, horizon, contents })
}

impl EnvironmentRealization {
    pub fn d(&self) -> usize {
        self.window.d
    }

    pub fn walkers(&self) -> &[TrapWalk] {
        match &self.contents {
            EnvContents::Bernoulli(_) => &[],
            EnvContents::SingleWalker(w) => std::slice::from_ref(w),
            EnvContents::Poisson(ws) => ws,
        }
    }

    /// Number of environment particles at `(x, t)`.
    pub fn env_value(&self, x: Site, t: f64) -> Result<u32> {
        ensure(t <= self.horizon, || format!("t = {t} beyond horizon {}", self.horizon))?;
        match &self.contents {
            EnvContents::Bernoulli(occ) => {
                let idx = self
                    .window
                    .index_of(x)
                    .ok_or_else(|| Error::Input(format!("site {:?} outside the materialized window", &x[..self.d()])))?;
                Ok(occ[idx] as u32)
            }
            _ => Ok(self.walkers().iter().filter(|w| w.position_at(t) == x).count() as u32),
        }
    }

    /// Initial occupation counts at the sites of `window`.
    pub fn initial_counts(&self, window: &Window) -> Result<Vec<f64>> {
        let mut xi = vec![0.0; window.len()];
        match &self.contents {
            EnvContents::Bernoulli(occ) => {
                for (i, x) in window.sites().enumerate() {
                    let idx = self.window.index_of(x).ok_or_else(|| Error::Input("environment window smaller than box".into()))?;
                    xi[i] = occ[idx] as u32 as f64;
                }
            }
            _ => {
                for w in self.walkers() {
                    if let Some(i) = window.index_of(w.start) {
                        xi[i] += 1.0;
                    }
                }
            }
        }
        Ok(xi)
    }

    /// All particle moves in time order (empty for static traps).
    pub fn events(&self) -> Vec<EnvEvent> {
        let mut ev: Vec<EnvEvent> = self
            .walkers()
            .iter()
            .flat_map(|w| {
                w.times
                    .iter()
                    .enumerate()
                    .map(move |(k, &t)| EnvEvent { time: t, from: w.positions[k], to: w.positions[k + 1] })
            })
            .collect();
        ev.sort_by(|a, b| a.time.total_cmp(&b.time));
        ev
    }

    /// Exact `∫₀ᵗ α(s)·ξ(X(s), s) ds` by merging event times.
    pub fn active_exposure(&self, path: &WalkPath) -> Result<f64> {
        let segs = path.segments();
        match &self.contents {
            EnvContents::Bernoulli(occ) => {
                let mut total = 0.0;
                for seg in segs.iter().filter(|s| s.state == 1) {
                    let idx = self
                        .window
                        .index_of(seg.site)
                        .ok_or_else(|| Error::Input("walker left the materialized window".into()))?;
                    if occ[idx] {
                        total += seg.end - seg.start;
                    }
                }
                Ok(total)
            }
            _ => {
                let (lo, hi) = path.bounding_box();
                Ok(self
                    .walkers()
                    .iter()
                    .filter(|w| w.meets_box(path.d, lo, hi))
                    .map(|w| w.active_overlap(&segs))
                    .sum())
            }
        }
    }
}

/// Diffusive inflation radius `2dρt + 6√(2dρt)` for environment windows.
pub fn inflation_radius(d: usize, rho: f64, t: f64) -> i32 {
    let m = 2.0 * d as f64 * rho * t;
    (m + 6.0 * m.sqrt()).round() as i32
}

/// Bernoulli traps sampled on first query; same law as a materialized window.
pub struct LazyBernoulli {
    p: f64,
    occupied: HashMap<Site, bool>,
}

impl LazyBernoulli {
    pub fn new(p: f64) -> Self {
        LazyBernoulli { p, occupied: HashMap::new() }
    }

    pub fn value<R: Rng + ?Sized>(&mut self, x: Site, rng: &mut R) -> u32 {
        let p = self.p;
        *self.occupied.entry(x).or_insert_with(|| rng.random_bool(p)) as u32
    }
}

/// `log Π_x (p·e^{γℓ_t(x,1)} + 1 − p)` over visited sites.
pub fn bernoulli_annealed_log_weight(lt: &SiteLocalTimes, gamma: f64, p: f64) -> f64 {
    lt.active()
        .map(|(_, l)| {
            let g = gamma_times(gamma, l);
            if g == 0.0 {
                0.0
            } else if g > 0.0 {
                // log(p e^g + 1 − p) = g + log(p + (1−p) e^{−g})
                g + (p + (1.0 - p) * (-g).exp()).ln()
            } else {
                (p * g.exp() + 1.0 - p).ln()
            }
        })
        .sum()
}

/// `Π_x (p·e^{γℓ_t(x,1)} + 1 − p)`; `(1−p)^{R(t)}` for γ = −∞.
pub fn bernoulli_annealed_weight(lt: &SiteLocalTimes, gamma: f64, p: f64) -> f64 {
    bernoulli_annealed_log_weight(lt, gamma, p).exp()
}

/// Poisson-field annealed weight `exp(νγ ∫₀ᵗ α(s) v(X(s), s) ds)` from the
/// trap-response equation along `path`.
pub fn poisson_annealed_weight(path: &WalkPath, gamma: f64, nu: f64, rho: f64, cfg: &SolverConfig) -> Result<f64> {
    Ok(poisson_annealed_log_weight(path, gamma, nu, rho, cfg)?.exp())
}

pub fn poisson_annealed_log_weight(path: &WalkPath, gamma: f64, nu: f64, rho: f64, cfg: &SolverConfig) -> Result<f64> {
    check_gamma(gamma)?;
    if gamma == 0.0 || nu == 0.0 {
        return Ok(0.0);
    }
    let sol = solve_trap_response(path, rho, gamma, cfg)?;
    Ok(sol.log_weight(nu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walker::site;

    #[test]
    fn window_indexing_roundtrip() {
        let w = Window::new(2, site(&[-1, 2]), site(&[3, 4])).unwrap();
        assert_eq!(w.len(), 15);
        for (i, x) in w.sites().enumerate() {
            assert_eq!(w.index_of(x), Some(i));
        }
        assert_eq!(w.index_of(site(&[4, 2])), None);
    }

    #[test]
    fn overlap_by_hand() {
        use crate::switching::SwitchPath;
        use crate::walker::WalkKind;
        // X at 0 active on [0,1), dormant [1,2), active [2,3]; trap moves 0 → 1 at 0.5, back at 2.5
        let path = WalkPath {
            d: 1,
            start: ORIGIN,
            switch: SwitchPath::new(1, vec![1.0, 2.0], 3.0).unwrap(),
            moves: vec![],
            kind: WalkKind::Switching,
        };
        let w = TrapWalk {
            start: ORIGIN,
            times: vec![0.5, 2.5],
            positions: vec![ORIGIN, site(&[1]), ORIGIN],
            lo: ORIGIN,
            hi: site(&[1]),
        };
        assert!((w.active_overlap(&path.segments()) - 1.0).abs() < 1e-15);
    }
}
