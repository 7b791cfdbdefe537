//! The two-state dormancy chain α: sampling, local times, the law of the
//! active local time, its large-deviation rate function and the change of
//! measure to the symmetric chain.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numerics::integrate;
use crate::rng::exp_time;

/// Dormant → active rate `s0` and active → dormant rate `s1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchRates {
    pub s0: f64,
    pub s1: f64,
}

impl SwitchRates {
    pub fn new(s0: f64, s1: f64) -> Result<Self> {
        ensure(s0.is_finite() && s0 >= 0.0, || format!("s0 must be finite and >= 0, got {s0}"))?;
        ensure(s1.is_finite() && s1 >= 0.0, || format!("s1 must be finite and >= 0, got {s1}"))?;
        Ok(SwitchRates { s0, s1 })
    }

    /// Exit rate of `state`.
    pub fn exit_rate(&self, state: u8) -> f64 {
        if state == 1 {
            self.s1
        } else {
            self.s0
        }
    }

    /// Rate `√(s0·s1)` of the symmetric comparison chain.
    pub fn symmetric_rate(&self) -> f64 {
        (self.s0 * self.s1).sqrt()
    }

    fn require_positive(&self, what: &str) -> Result<()> {
        if self.s0 > 0.0 && self.s1 > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("{what} requires s0 > 0 and s1 > 0, got ({}, {})", self.s0, self.s1)))
        }
    }
}

fn check_state(state: u8) -> Result<()> {
    ensure(state <= 1, || format!("state must be 0 or 1, got {state}"))
}

fn check_horizon(horizon: f64) -> Result<()> {
    ensure(horizon.is_finite() && horizon >= 0.0, || format!("horizon must be finite and >= 0, got {horizon}"))
}

/// Event-time representation of α on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchPath {
    initial_state: u8,
    jump_times: Vec<f64>,
    horizon: f64,
}

impl SwitchPath {
    pub fn new(initial_state: u8, jump_times: Vec<f64>, horizon: f64) -> Result<Self> {
        check_state(initial_state)?;
        check_horizon(horizon)?;
        let mut prev = 0.0;
        for &t in &jump_times {
            ensure(t > prev && t <= horizon, || format!("jump times must be strictly increasing in (0, {horizon}]"))?;
            prev = t;
        }
        Ok(SwitchPath { initial_state, jump_times, horizon })
    }

    /// Path that never leaves `state`.
    pub fn constant(state: u8, horizon: f64) -> Result<Self> {
        Self::new(state, Vec::new(), horizon)
    }

    pub fn initial_state(&self) -> u8 {
        self.initial_state
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    pub fn final_state(&self) -> u8 {
        self.initial_state ^ (self.jump_times.len() % 2) as u8
    }

    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> u8 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.initial_state ^ (k % 2) as u8
    }

    /// Maximal constant-state intervals `(start, end, state)` covering `[0, horizon]`.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, u8)> + '_ {
        let n = self.jump_times.len();
        (0..=n).map(move |k| {
            let start = if k == 0 { 0.0 } else { self.jump_times[k - 1] };
            let end = if k == n { self.horizon } else { self.jump_times[k] };
            (start, end, self.initial_state ^ (k % 2) as u8)
        })
    }

    /// Active local time accumulated up to `t ≤ horizon`.
    pub fn active_time_until(&self, t: f64) -> f64 {
        self.intervals()
            .filter(|iv| iv.2 == 1 && iv.0 < t)
            .map(|(a, b, _)| b.min(t) - a)
            .sum()
    }
}

/// Occupation times `(L_t(0), L_t(1))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTimePair {
    pub time_in_0: f64,
    pub time_in_1: f64,
}

pub fn sample_switch_path<R: Rng + ?Sized>(
    rates: SwitchRates,
    initial: u8,
    horizon: f64,
    rng: &mut R,
) -> Result<SwitchPath> {
    check_state(initial)?;
    check_horizon(horizon)?;
    let mut jumps = Vec::new();
    let mut state = initial;
    let mut t = 0.0;
    loop {
        t += exp_time(rng, rates.exit_rate(state));
        if t > horizon {
            break;
        }
        jumps.push(t);
        state ^= 1;
    }
    Ok(SwitchPath { initial_state: initial, jump_times: jumps, horizon })
}

/// Path of the symmetric chain with rate `√(s0·s1)` in both directions.
pub fn sample_symmetric_path<R: Rng + ?Sized>(
    rates: SwitchRates,
    initial: u8,
    horizon: f64,
    rng: &mut R,
) -> Result<SwitchPath> {
    let q = rates.symmetric_rate();
    sample_switch_path(SwitchRates { s0: q, s1: q }, initial, horizon, rng)
}

pub fn local_times(path: &SwitchPath) -> LocalTimePair {
    let mut lt = [0.0f64; 2];
    for (a, b, s) in path.intervals() {
        lt[s as usize] += b - a;
    }
    LocalTimePair { time_in_0: lt[0], time_in_1: lt[1] }
}

/// Above this value of `x = s0·s1·y·(t−y)` the density uses the integral form.
pub const SERIES_SWITCHOVER: f64 = 1e4;

/// Continuous part of the law of `L_t(1)` for the chain started active.
pub fn local_time_density(y: f64, horizon: f64, rates: SwitchRates) -> Result<f64> {
    rates.require_positive("local_time_density")?;
    if !(y > 0.0 && y < horizon) {
        return Err(Error::Domain(format!("y = {y} outside (0, {horizon})")));
    }
    let x = rates.s0 * rates.s1 * y * (horizon - y);
    Ok(if x <= SERIES_SWITCHOVER {
        density_series(y, horizon, rates)
    } else {
        density_integral(y, horizon, rates)
    })
}

fn density_prefactor_log(y: f64, t: f64, r: SwitchRates) -> f64 {
    -r.s0 * t - (r.s1 - r.s0) * y
}

pub(crate) fn density_series(y: f64, t: f64, r: SwitchRates) -> f64 {
    let x = r.s0 * r.s1 * y * (t - y);
    let c = r.s0 * y;
    let peak = x.sqrt();
    let mut term = 1.0; // x^k / (k!)^2
    let mut sum = c + 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= x / (k * k);
        let next = term * (c / (k + 1.0) + 1.0);
        sum += next;
        if k > peak && next < 1e-16 * sum {
            break;
        }
    }
    r.s1 * (density_prefactor_log(y, t, r) + sum.ln()).exp()
}

/// `s1·e^P [I0(z) + s0·y·I1(z)/√x]` with `z = 2√x`, written as one integral
/// over θ with the prefactor inside so nothing overflows.
pub(crate) fn density_integral(y: f64, t: f64, r: SwitchRates) -> f64 {
    let x = r.s0 * r.s1 * y * (t - y);
    let z = 2.0 * x.sqrt();
    let p = density_prefactor_log(y, t, r);
    let c = r.s0 * y / x.sqrt();
    let g = |cos: f64| (p + z * cos).exp() * (1.0 + c * cos);
    // periodic integrand: the trapezoid rule converges geometrically
    let n = (8.0 * z.sqrt()).ceil() as usize + 32;
    let h = PI / n as f64;
    let mut sum = 0.5 * (g(1.0) + g(-1.0));
    for j in 1..n {
        sum += g((j as f64 * h).cos());
    }
    r.s1 * sum * h / PI
}

/// Probability that the chain started active never leaves, `P(L_t(1) = t)`.
pub fn local_time_atom(horizon: f64, rates: SwitchRates) -> Result<f64> {
    ensure(horizon > 0.0 && horizon.is_finite(), || format!("horizon must be positive, got {horizon}"))?;
    Ok((-rates.s1 * horizon).exp())
}

/// `P(L_t(1)/t ∈ [lo, hi])` from the density and the atom.
pub fn local_time_window_probability(lo: f64, hi: f64, horizon: f64, rates: SwitchRates) -> Result<f64> {
    rates.require_positive("local_time_window_probability")?;
    let a = lo.max(0.0) * horizon;
    let b = hi.min(1.0) * horizon;
    let mut p = 0.0;
    if b > a {
        p += integrate(
            |y| if y > 0.0 && y < horizon { local_time_density(y, horizon, rates).unwrap_or(0.0) } else { 0.0 },
            a,
            b,
            1e-300,
            1e-12,
        );
    }
    if hi >= 1.0 {
        p += local_time_atom(horizon, rates)?;
    }
    Ok(p)
}

/// `I(a) = −2√(s0·s1·a(1−a)) + (s1−s0)a + s0`.
pub fn rate_function(a: f64, rates: SwitchRates) -> Result<f64> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Domain(format!("a = {a} outside [0, 1]")));
    }
    let v = -2.0 * (rates.s0 * rates.s1 * a * (1.0 - a)).sqrt() + (rates.s1 - rates.s0) * a + rates.s0;
    Ok(v.max(0.0))
}

pub fn rate_minimizer(rates: SwitchRates) -> Result<f64> {
    let total = rates.s0 + rates.s1;
    if total <= 0.0 {
        return Err(Error::Domain("rate_minimizer needs s0 + s1 > 0".into()));
    }
    Ok(rates.s0 / total)
}

/// Radon-Nikodym derivative of the law of α (rates `s0`, `s1`) with respect to
/// the symmetric chain of rate `√(s0·s1)`, evaluated on `path`.
///
/// Includes the terminal factor `s_{α(0)}/√(s0·s1)` for paths with an odd
/// number of jumps; without it the weight does not have mean one.
pub fn girsanov_weight(path: &SwitchPath, rates: SwitchRates) -> Result<f64> {
    rates.require_positive("girsanov_weight")?;
    let q = rates.symmetric_rate();
    let lt = local_times(path);
    let mut log_w = q * path.horizon() - rates.s0 * lt.time_in_0 - rates.s1 * lt.time_in_1;
    if path.jump_count() % 2 == 1 {
        log_w += (rates.exit_rate(path.initial_state()) / q).ln();
    }
    Ok(log_w.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branches_agree_at_switchover() {
        let r = SwitchRates::new(1.0, 1.0).unwrap();
        // y chosen so that s0·s1·y·(t−y) sits exactly on the switchover
        let t = 250.0;
        let y = 0.5 * (t - (t * t - 4.0 * SERIES_SWITCHOVER).sqrt());
        let a = density_series(y, t, r);
        let b = density_integral(y, t, r);
        assert!((a - b).abs() <= 1e-10 * a, "{a} vs {b}");
        let r = SwitchRates::new(0.5, 2.0).unwrap();
        let y = 0.5 * (t - (t * t - 4.0 * SERIES_SWITCHOVER).sqrt());
        let a = density_series(y, t, r);
        let b = density_integral(y, t, r);
        assert!((a - b).abs() <= 1e-10 * a, "{a} vs {b}");
    }

    #[test]
    fn state_bookkeeping() {
        let p = SwitchPath::new(1, vec![1.0, 3.0], 4.0).unwrap();
        assert_eq!(p.state_at(0.5), 1);
        assert_eq!(p.state_at(1.0), 0);
        assert_eq!(p.state_at(3.5), 1);
        assert_eq!(p.final_state(), 1);
        assert!((p.active_time_until(3.5) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_paths() {
        assert!(SwitchPath::new(1, vec![2.0, 1.0], 4.0).is_err());
        assert!(SwitchPath::new(1, vec![5.0], 4.0).is_err());
        assert!(SwitchPath::new(2, vec![], 4.0).is_err());
    }
}
