//! The regime-switching walk (X,α), the difference walk (Z,α) and their
//! occupation measures.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::exp_time;
use crate::stats::{run_replicates, McEstimate};
use crate::switching::{sample_switch_path, SwitchPath, SwitchRates};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 4;

/// Lattice site; coordinates beyond the working dimension are zero.
pub type Site = [i32; MAX_DIM];

pub const ORIGIN: Site = [0; MAX_DIM];

/// Site with the given leading coordinates.
pub fn site(coords: &[i32]) -> Site {
    let mut s = ORIGIN;
    s[..coords.len()].copy_from_slice(coords);
    s
}

/// A unit step `sign · e_axis`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub axis: u8,
    pub sign: i8,
}

impl Move {
    pub fn apply(self, mut x: Site) -> Site {
        x[self.axis as usize] += self.sign as i32;
        x
    }

    /// Uniform choice among the `2d` neighbours.
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Move {
        let k = rng.random_range(0..2 * d);
        Move { axis: (k / 2) as u8, sign: if k % 2 == 0 { 1 } else { -1 } }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub d: usize,
    pub kappa: f64,
    pub rho: f64,
}

impl WalkParams {
    pub fn new(d: usize, kappa: f64, rho: f64) -> Result<Self> {
        ensure((1..=MAX_DIM).contains(&d), || format!("dimension must be in 1..={MAX_DIM}, got {d}"))?;
        ensure(kappa.is_finite() && kappa >= 0.0, || format!("kappa must be finite and >= 0, got {kappa}"))?;
        ensure(rho.is_finite() && rho >= 0.0, || format!("rho must be finite and >= 0, got {rho}"))?;
        Ok(WalkParams { d, kappa, rho })
    }
}

/// Whether the spatial component may move while dormant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WalkKind {
    /// X: moves only while active.
    Switching,
    /// Z = X − Y: moves in both states.
    Difference,
}

/// Event-time representation of a space–type path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkPath {
    pub d: usize,
    pub start: Site,
    pub switch: SwitchPath,
    pub moves: Vec<(f64, Move)>,
    pub kind: WalkKind,
}

/// Maximal piece of a path with constant site and type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub site: Site,
    pub state: u8,
}

impl WalkPath {
    pub fn horizon(&self) -> f64 {
        self.switch.horizon()
    }

    /// Path that sits at `site` for its whole lifetime.
    pub fn stationary(d: usize, site: Site, switch: SwitchPath) -> Self {
        WalkPath { d, start: site, switch, moves: Vec::new(), kind: WalkKind::Switching }
    }

    pub fn position_at(&self, t: f64) -> Site {
        self.moves.iter().take_while(|(s, _)| *s <= t).fold(self.start, |x, (_, m)| m.apply(x))
    }

    /// Constant pieces in time order, split at every move and type switch.
    pub fn segments(&self) -> Vec<Segment> {
        let jumps = self.switch.jump_times();
        let horizon = self.horizon();
        let mut out = Vec::with_capacity(jumps.len() + self.moves.len() + 1);
        let (mut i, mut j) = (0, 0);
        let mut t = 0.0;
        let mut x = self.start;
        let mut state = self.switch.initial_state();
        loop {
            let next_jump = jumps.get(i).copied().unwrap_or(f64::INFINITY);
            let next_move = self.moves.get(j).map(|m| m.0).unwrap_or(f64::INFINITY);
            let next = next_jump.min(next_move).min(horizon);
            out.push(Segment { start: t, end: next, site: x, state });
            if next >= horizon {
                break;
            }
            if next_jump <= next_move {
                state ^= 1;
                i += 1;
            } else {
                x = self.moves[j].1.apply(x);
                j += 1;
            }
            t = next;
        }
        out
    }

    /// `true` if no move of X falls in a dormant interval.
    pub fn moves_only_while_active(&self) -> bool {
        self.moves.iter().all(|(t, _)| self.switch.state_at(*t) == 1)
    }

    /// Axis-aligned bounding box of the visited sites, `(lo, hi)`.
    pub fn bounding_box(&self) -> (Site, Site) {
        let mut lo = self.start;
        let mut hi = self.start;
        let mut x = self.start;
        for (_, m) in &self.moves {
            x = m.apply(x);
            for k in 0..self.d {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        (lo, hi)
    }
}

fn add_moves<R: Rng + ?Sized>(
    d: usize,
    switch: &SwitchPath,
    rate_of_state: impl Fn(u8) -> f64,
    rng: &mut R,
) -> Vec<(f64, Move)> {
    let mut moves = Vec::new();
    for (a, b, s) in switch.intervals() {
        let rate = rate_of_state(s);
        let mut t = a;
        loop {
            t += exp_time(rng, rate);
            if t >= b {
                break;
            }
            moves.push((t, Move::random(d, rng)));
        }
    }
    moves
}

/// Sample (X,α): α first, then jumps at rate `2dκ` during active intervals.
pub fn sample_walk<R: Rng + ?Sized>(
    params: WalkParams,
    rates: SwitchRates,
    start: (Site, u8),
    horizon: f64,
    rng: &mut R,
) -> Result<WalkPath> {
    let switch = sample_switch_path(rates, start.1, horizon, rng)?;
    let total = 2.0 * params.d as f64 * params.kappa;
    let moves = add_moves(params.d, &switch, |s| if s == 1 { total } else { 0.0 }, rng);
    Ok(WalkPath { d: params.d, start: start.0, switch, moves, kind: WalkKind::Switching })
}

/// Sample (Z,α) with per-neighbour rate `κ+ρ` while active and `ρ` while dormant.
pub fn sample_difference_walk<R: Rng + ?Sized>(
    params: WalkParams,
    rates: SwitchRates,
    start: (Site, u8),
    horizon: f64,
    rng: &mut R,
) -> Result<WalkPath> {
    let switch = sample_switch_path(rates, start.1, horizon, rng)?;
    let dd = 2.0 * params.d as f64;
    let moves = add_moves(params.d, &switch, |s| dd * (params.rho + params.kappa * s as f64), rng);
    Ok(WalkPath { d: params.d, start: start.0, switch, moves, kind: WalkKind::Difference })
}

/// Plain simple random walk with total jump rate `rate`, run for `duration`;
/// returns the endpoint.
pub fn simple_walk_endpoint<R: Rng + ?Sized>(d: usize, start: Site, rate: f64, duration: f64, rng: &mut R) -> Site {
    let mut x = start;
    let mut t = 0.0;
    loop {
        t += exp_time(rng, rate);
        if t > duration {
            return x;
        }
        x = Move::random(d, rng).apply(x);
    }
}

/// Occupation durations `ℓ_t(x,i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteLocalTimes {
    pub times: BTreeMap<(Site, u8), f64>,
    pub horizon: f64,
}

impl SiteLocalTimes {
    pub fn get(&self, x: Site, state: u8) -> f64 {
        self.times.get(&(x, state)).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.times.values().sum()
    }

    /// Active occupation times `ℓ_t(x,1)` of sites with positive value.
    pub fn active(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.times.iter().filter(|((_, s), v)| *s == 1 && **v > 0.0).map(|((x, _), v)| (*x, *v))
    }
}

pub fn site_local_times(path: &WalkPath) -> SiteLocalTimes {
    let mut times = BTreeMap::new();
    for seg in path.segments() {
        *times.entry((seg.site, seg.state)).or_insert(0.0) += seg.end - seg.start;
    }
    SiteLocalTimes { times, horizon: path.horizon() }
}

/// Number of distinct sites visited, start included.
pub fn range(path: &WalkPath) -> usize {
    let mut seen = BTreeSet::new();
    let mut x = path.start;
    seen.insert(x);
    for (_, m) in &path.moves {
        x = m.apply(x);
        seen.insert(x);
    }
    seen.len()
}

/// Replicate count, master seed and worker count of a Monte Carlo run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n: usize,
    pub master_seed: u64,
    /// Worker threads; 0 selects the rayon default.
    pub workers: usize,
}

impl McConfig {
    pub fn new(n: usize, master_seed: u64) -> Self {
        McConfig { n, master_seed, workers: 0 }
    }
}

/// Which side of the time-changed hitting identity to estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HittingMode {
    /// `P(∃ s ≤ t : (Z(s), α(s)) = (0,1))` by simulating (Z,α).
    Direct,
    /// `P(∃ s ≤ L_t(1) : Z̃(ρs + κL_s(1)) = 0)`: a plain walk run along the
    /// re-parametrised clock, with total rate `2d(ρ + κ·1{active})`.
    TimeChanged,
}

fn hits_direct(path: &WalkPath) -> bool {
    path.segments().iter().any(|s| s.site == ORIGIN && s.state == 1)
}

fn hits_time_changed<R: Rng + ?Sized>(
    params: WalkParams,
    start: Site,
    switch: &SwitchPath,
    rng: &mut R,
) -> bool {
    if start == ORIGIN {
        return true;
    }
    let clock_end = switch.active_time_until(switch.horizon());
    let dd = 2.0 * params.d as f64;
    let mut x = start;
    for (a, b, s) in switch.intervals() {
        if a >= clock_end {
            break;
        }
        let b = b.min(clock_end);
        let rate = dd * (params.rho + params.kappa * s as f64);
        let mut t = a;
        loop {
            t += exp_time(rng, rate);
            if t >= b {
                break;
            }
            x = Move::random(params.d, rng).apply(x);
            if x == ORIGIN {
                return true;
            }
        }
    }
    false
}

/// Monte Carlo estimate of the hitting probability of `(0,1)` started from
/// `(y, start_type)`. Replicate `i` draws α first from its substream, so both
/// modes see the same α realizations.
pub fn hitting_probability_mc(
    y: Site,
    start_type: u8,
    params: WalkParams,
    rates: SwitchRates,
    horizon: f64,
    mode: HittingMode,
    cfg: McConfig,
) -> Result<McEstimate> {
    ensure(cfg.n >= 1, || "n must be at least 1".into())?;
    let values = run_replicates(cfg.n, cfg.master_seed, cfg.workers, |_, rng| {
        let hit = match mode {
            HittingMode::Direct => {
                let path = sample_difference_walk(params, rates, (y, start_type), horizon, rng)?;
                hits_direct(&path)
            }
            HittingMode::TimeChanged => {
                let switch = sample_switch_path(rates, start_type, horizon, rng)?;
                hits_time_changed(params, y, &switch, rng)
            }
        };
        Ok(if hit { 1.0 } else { 0.0 })
    })?;
    Ok(McEstimate::from_values(&values, cfg.master_seed))
}
