//! Matrix-free self-adjoint operators on boxes, power iteration for the top
//! eigenvalue, lattice Green's functions and growth rates.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::estimators::origin_active_time;
use crate::lattice::BoxGeometry;
use crate::numerics::bessel_i0_scaled;
use crate::stats::{run_replicates, McEstimate};
use crate::switching::SwitchRates;
use crate::walker::{sample_difference_walk, McConfig, WalkParams, ORIGIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// `(iκ+ρ)Δ + Q̃ − √(s0 s1) + γδ_{(0,1)}` on two layers.
    TwoType,
    /// `ρΔ + γδ₀` on one layer.
    SingleSite,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub d: usize,
    /// Box radius n of `[−n, n]^d`.
    pub n: usize,
    pub kappa: f64,
    pub rho: f64,
    pub s0: f64,
    pub s1: f64,
    pub gamma: f64,
}

impl OperatorSpec {
    pub fn two_type(d: usize, n: usize, kappa: f64, rho: f64, rates: SwitchRates, gamma: f64) -> Self {
        OperatorSpec { kind: OperatorKind::TwoType, d, n, kappa, rho, s0: rates.s0, s1: rates.s1, gamma }
    }

    pub fn single_site(d: usize, n: usize, rho: f64, gamma: f64) -> Self {
        OperatorSpec { kind: OperatorKind::SingleSite, d, n, kappa: 0.0, rho, s0: 0.0, s1: 0.0, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.n >= 1, || "box radius must be at least 1".into())?;
        for (name, v) in [("kappa", self.kappa), ("rho", self.rho), ("s0", self.s0), ("s1", self.s1)] {
            ensure(v.is_finite() && v >= 0.0, || format!("{name} must be finite and >= 0, got {v}"))?;
        }
        ensure(self.gamma.is_finite(), || format!("gamma must be finite, got {}", self.gamma))?;
        if self.kind == OperatorKind::TwoType {
            ensure(self.s0 > 0.0 && self.s1 > 0.0, || "two-type operator needs s0 > 0 and s1 > 0".into())?;
        }
        Ok(())
    }

    fn layers(&self) -> usize {
        match self.kind {
            OperatorKind::TwoType => 2,
            OperatorKind::SingleSite => 1,
        }
    }

    /// Shift making `A + cI` entrywise nonnegative with nonnegative spectrum
    /// (Gershgorin).
    pub fn shift(&self) -> f64 {
        let dd = 2.0 * self.d as f64;
        match self.kind {
            OperatorKind::TwoType => {
                2.0 * dd * (self.kappa + self.rho) + 2.0 * (self.s0 * self.s1).sqrt() + self.s0.max(self.s1) + self.gamma.abs()
            }
            OperatorKind::SingleSite => 2.0 * dd * self.rho + self.gamma.abs(),
        }
    }
}

/// An operator with its box precomputed.
pub struct Operator {
    pub spec: OperatorSpec,
    pub geom: BoxGeometry,
    lap: Vec<f64>,
}

impl Operator {
    pub fn new(spec: OperatorSpec) -> Result<Self> {
        spec.validate()?;
        let geom = BoxGeometry::new(spec.d, spec.n)?;
        let lap = vec![0.0; geom.len()];
        Ok(Operator { spec, geom, lap })
    }

    pub fn dim(&self) -> usize {
        self.geom.len() * self.spec.layers()
    }

    /// `out = A f`.
    pub fn apply_into(&mut self, f: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.geom.len();
        ensure(f.len() == self.dim() && out.len() == self.dim(), || {
            format!("vector length {} does not match operator dimension {}", f.len(), self.dim())
        })?;
        let s = self.spec;
        let origin = self.geom.origin();
        match s.kind {
            OperatorKind::SingleSite => {
                self.geom.laplacian(f, &mut self.lap, 0.0);
                for i in 0..n {
                    out[i] = s.rho * self.lap[i];
                }
                out[origin] += s.gamma * f[origin];
            }
            OperatorKind::TwoType => {
                let q = (s.s0 * s.s1).sqrt();
                for layer in 0..2 {
                    let (me, other) = (layer * n, (1 - layer) * n);
                    let diff = s.rho + s.kappa * layer as f64;
                    let rate = if layer == 1 { s.s1 } else { s.s0 };
                    self.geom.laplacian(&f[me..me + n], &mut self.lap, 0.0);
                    for i in 0..n {
                        let x = f[me + i];
                        out[me + i] = diff * self.lap[i] + q * (f[other + i] - x) - rate * x;
                    }
                }
                out[n + origin] += s.gamma * f[n + origin];
            }
        }
        Ok(())
    }
}

pub fn apply_operator(spec: &OperatorSpec, f: &[f64]) -> Result<Vec<f64>> {
    let mut op = Operator::new(*spec)?;
    let mut out = vec![0.0; f.len()];
    op.apply_into(f, &mut out)?;
    Ok(out)
}

/// `A₁(f) = γ f(0,1)²`.
pub fn functional_a1(spec: &OperatorSpec, f: &[f64]) -> Result<f64> {
    let geom = BoxGeometry::new(spec.d, spec.n)?;
    Ok(spec.gamma * f[geom.len() + geom.origin()].powi(2))
}

/// `A₂(f) = ½ Σ_i Σ_{x∼y} (iκ+ρ)(f(x,i) − f(y,i))²` with `f = 0` off the box.
pub fn functional_a2(spec: &OperatorSpec, f: &[f64]) -> Result<f64> {
    let geom = BoxGeometry::new(spec.d, spec.n)?;
    let n = geom.len();
    let mut total = 0.0;
    for layer in 0..2 {
        let diff = spec.rho + spec.kappa * layer as f64;
        let g = &f[layer * n..(layer + 1) * n];
        for i in 0..n {
            let x = geom.site(i);
            for k in 0..spec.d {
                let mut y = x;
                y[k] += 1;
                let fy = geom.index(y).map(|j| g[j]).unwrap_or(0.0);
                total += diff * (g[i] - fy).powi(2);
            }
            // links leaving the box through the lower faces
            for k in 0..spec.d {
                let mut y = x;
                y[k] -= 1;
                if geom.index(y).is_none() {
                    total += diff * g[i].powi(2);
                }
            }
        }
    }
    Ok(total)
}

/// `A₃(f) = √(s0s1) Σ_x (f(x,1) − f(x,0))² + Σ_{x,i} s_i f(x,i)²`.
pub fn functional_a3(spec: &OperatorSpec, f: &[f64]) -> Result<f64> {
    let geom = BoxGeometry::new(spec.d, spec.n)?;
    let n = geom.len();
    let q = (spec.s0 * spec.s1).sqrt();
    let mut total = 0.0;
    for i in 0..n {
        let (a, b) = (f[i], f[n + i]);
        total += q * (b - a).powi(2) + spec.s0 * a * a + spec.s1 * b * b;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub eigenvalue: f64,
    pub iterations: usize,
    pub residual: f64,
    pub radius: usize,
    /// Unit-norm eigenvector, layers concatenated (type 0 first).
    pub vector: Vec<f64>,
}

impl EigenResult {
    /// CSV rows `x1,…,xd,type,value`.
    pub fn write_csv<W: Write>(&self, spec: &OperatorSpec, mut w: W) -> Result<()> {
        let geom = BoxGeometry::new(spec.d, spec.n)?;
        let n = geom.len();
        let header: Vec<String> = (1..=spec.d).map(|k| format!("x{k}")).collect();
        writeln!(w, "{},type,value", header.join(","))?;
        for layer in 0..self.vector.len() / n {
            let ty = if spec.kind == OperatorKind::TwoType { layer.to_string() } else { "-".into() };
            for i in 0..n {
                let coords: Vec<String> = geom.site(i)[..spec.d].iter().map(|c| c.to_string()).collect();
                writeln!(w, "{},{},{}", coords.join(","), ty, self.vector[layer * n + i])?;
            }
        }
        Ok(())
    }
}

pub const MAX_POWER_ITERATIONS: usize = 1_000_000;

/// Shifted power iteration from the uniform positive vector. Stops when the
/// Rayleigh quotient moves by less than `tol` and `‖Af − λf‖ < tol`.
pub fn top_eigenvalue(spec: &OperatorSpec, tol: f64) -> Result<EigenResult> {
    ensure(tol > 0.0, || format!("tol must be positive, got {tol}"))?;
    let mut op = Operator::new(*spec)?;
    let dim = op.dim();
    let c = spec.shift();
    let mut f = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut g = vec![0.0; dim];
    let mut prev = f64::INFINITY;
    let mut lambda = f64::NAN;
    for it in 1..=MAX_POWER_ITERATIONS {
        op.apply_into(&f, &mut g)?;
        lambda = dot(&f, &g);
        let residual = f.iter().zip(&g).map(|(a, b)| (b - lambda * a).powi(2)).sum::<f64>().sqrt();
        if (lambda - prev).abs() < tol && residual < tol {
            return Ok(EigenResult { eigenvalue: lambda, iterations: it, residual, radius: spec.n, vector: f });
        }
        prev = lambda;
        for (gi, fi) in g.iter_mut().zip(&f) {
            *gi += c * fi;
        }
        let norm = dot(&g, &g).sqrt();
        for (fi, gi) in f.iter_mut().zip(&g) {
            *fi = gi / norm;
        }
    }
    Err(Error::Convergence { iterations: MAX_POWER_ITERATIONS, best: lambda })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameters of the one-catalyst growth problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalystParams {
    pub d: usize,
    pub kappa: f64,
    pub rho: f64,
    pub rates: SwitchRates,
    pub gamma: f64,
}

/// `λ_n + √(s0 s1)` for the two-type operator on the box of radius `n`.
pub fn growth_rate_one_catalyst(params: &CatalystParams, n: usize, tol: f64) -> Result<f64> {
    let spec = OperatorSpec::two_type(params.d, n, params.kappa, params.rho, params.rates, params.gamma);
    Ok(top_eigenvalue(&spec, tol)?.eigenvalue + params.rates.symmetric_rate())
}

/// Top eigenvalue μ of `ρΔ + γδ₀` on the box of radius `n`.
pub fn growth_rate_poisson_catalyst(d: usize, rho: f64, gamma: f64, n: usize, tol: f64) -> Result<f64> {
    Ok(top_eigenvalue(&OperatorSpec::single_site(d, n, rho, gamma), tol)?.eigenvalue)
}

/// Which Green's function to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum GreenTarget {
    /// Simple walk with generator Δ, at the origin.
    SimpleWalkOrigin,
    /// Difference walk (Z,α), occupation of (0,1) from (0,1).
    TwoType { kappa: f64, rho: f64, rates: SwitchRates },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum GreenMethod {
    /// One-dimensional heat-kernel integral `∫ e^{−mt}(e^{−2t}I₀(2t))^d dt`.
    Laplace,
    /// Midpoint rule on `points^d` Fourier nodes with a Richardson step.
    FourierGrid { points: usize },
    /// Occupation-time Monte Carlo up to `horizon` (default `500/ρ`).
    MonteCarlo { horizon: Option<f64>, mc: McConfig },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenValue {
    pub value: f64,
    /// Monte Carlo standard error, or the Richardson error estimate.
    pub error: f64,
    /// Bound on the occupation beyond the MC horizon (0 otherwise).
    pub tail_bound: f64,
    pub method: GreenMethod,
}

/// `∫₀^∞ e^{−mt} (e^{−2t} I₀(2t))^d dt`: the Green's function of `Δ − m` at the origin.
pub fn laplace_green(d: usize, m: f64) -> Result<f64> {
    if d <= 2 && m == 0.0 {
        return Err(Error::Divergent(format!("Green's function of the recurrent walk in d = {d}")));
    }
    ensure(m >= 0.0, || format!("mass must be >= 0, got {m}"))?;
    // t = e^s; trapezoid on the real line converges geometrically
    let (a, b, h) = (-30.0f64, 60.0f64, 0.005);
    let steps = ((b - a) / h).round() as usize;
    let mut sum = 0.0;
    for k in 0..=steps {
        let s = a + k as f64 * h;
        let t = s.exp();
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        let val = t * (-m * t).exp() * bessel_i0_scaled(2.0 * t).powi(d as i32);
        sum += w * val;
    }
    let mut total = sum * h;
    if m == 0.0 {
        // heat-kernel tail (4πt)^{-d/2} beyond e^b
        let tb = b.exp();
        total += (4.0 * PI).powf(-(d as f64) / 2.0) * tb.powf(1.0 - d as f64 / 2.0) / (d as f64 / 2.0 - 1.0);
    }
    Ok(total)
}

fn fourier_grid_sum(d: usize, points: usize, integrand: &dyn Fn(f64) -> f64) -> f64 {
    // φ(θ) = Σ 2(1 − cos θ_j) on the midpoint grid of [−π, π]^d
    let h = 2.0 * PI / points as f64;
    let phis: Vec<f64> = (0..points).map(|k| 2.0 * (1.0 - (-PI + (k as f64 + 0.5) * h).cos())).collect();
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    loop {
        let phi: f64 = idx.iter().map(|&k| phis[k]).sum();
        total += integrand(phi);
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < points {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    total / (points as f64).powi(d as i32)
}

/// Fourier symbol of the (0,1)-Green's function: `(ρφ + s0) / (φ (cφ + B))`.
fn two_type_symbol(kappa: f64, rho: f64, rates: SwitchRates) -> impl Fn(f64) -> f64 {
    let c = rho * (kappa + rho);
    let b = rho * rates.s1 + (kappa + rho) * rates.s0;
    move |phi: f64| (rho * phi + rates.s0) / (phi * (c * phi + b))
}

pub fn green_function(d: usize, target: GreenTarget, method: GreenMethod) -> Result<GreenValue> {
    if d <= 2 {
        return Err(Error::Divergent(format!("Green's function is infinite in d = {d}")));
    }
    ensure(d <= crate::walker::MAX_DIM, || format!("dimension {d} unsupported"))?;
    if let GreenTarget::TwoType { kappa, rho, rates } = target {
        ensure(kappa + rho > 0.0, || "two-type Green's function needs kappa + rho > 0".into())?;
        ensure(rates.s0 > 0.0, || "two-type Green's function needs s0 > 0".into())?;
    }
    match method {
        GreenMethod::Laplace => {
            let value = match target {
                GreenTarget::SimpleWalkOrigin => laplace_green(d, 0.0)?,
                GreenTarget::TwoType { kappa, rho, rates } => {
                    let b = rho * rates.s1 + (kappa + rho) * rates.s0;
                    let g0 = laplace_green(d, 0.0)?;
                    let mut v = rates.s0 / b * g0;
                    if rho > 0.0 && rates.s1 > 0.0 {
                        let m = b / (rho * (kappa + rho));
                        v += rho * rates.s1 / (b * (kappa + rho)) * laplace_green(d, m)?;
                    }
                    v
                }
            };
            Ok(GreenValue { value, error: 0.0, tail_bound: 0.0, method })
        }
        GreenMethod::FourierGrid { points } => {
            ensure(points >= 4 && points % 4 == 0, || "Fourier grid needs a multiple of 4 points".into())?;
            let symbol: Box<dyn Fn(f64) -> f64> = match target {
                GreenTarget::SimpleWalkOrigin => Box::new(|phi: f64| 1.0 / phi),
                GreenTarget::TwoType { kappa, rho, rates } => Box::new(two_type_symbol(kappa, rho, rates)),
            };
            let fine = fourier_grid_sum(d, points, &*symbol);
            let coarse = fourier_grid_sum(d, points / 2, &*symbol);
            // leading midpoint error near the 1/φ singularity is O(h^{d-2})
            let p = (d - 2) as f64;
            let value = fine + (fine - coarse) / (2f64.powf(p) - 1.0);
            Ok(GreenValue { value, error: (value - fine).abs(), tail_bound: 0.0, method })
        }
        GreenMethod::MonteCarlo { horizon, mc } => {
            let (walk, rates) = match target {
                GreenTarget::SimpleWalkOrigin => (WalkParams::new(d, 0.0, 1.0)?, SwitchRates::new(0.0, 0.0)?),
                GreenTarget::TwoType { kappa, rho, rates } => (WalkParams::new(d, kappa, rho)?, rates),
            };
            let rho_min = walk.rho;
            ensure(rho_min > 0.0, || "Monte Carlo Green's function needs rho > 0".into())?;
            let horizon = horizon.unwrap_or(500.0 / rho_min);
            let values = run_replicates(mc.n, mc.master_seed, mc.workers, |_, rng| {
                let path = sample_difference_walk(walk, rates, (ORIGIN, 1), horizon, rng)?;
                Ok(origin_active_time(&path))
            })?;
            let est = McEstimate::from_values(&values, mc.master_seed);
            let dh = d as f64 / 2.0;
            let tail_bound = (4.0 * PI * rho_min).powf(-dh) * horizon.powf(1.0 - dh) / (dh - 1.0);
            Ok(GreenValue { value: est.mean, error: est.stderr, tail_bound, method })
        }
    }
}

/// `1/(1 + |γ| G)` for γ < 0 given the two-type Green's value `G`.
pub fn survival_limit_d3(gamma: f64, green: f64) -> Result<f64> {
    ensure(gamma < 0.0, || format!("survival limit needs gamma < 0, got {gamma}"))?;
    if gamma == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    Ok(1.0 / (1.0 + gamma.abs() * green))
}
