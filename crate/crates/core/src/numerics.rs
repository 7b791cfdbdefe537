//! Scalar numerics: scaled modified Bessel functions, adaptive Gauss-Kronrod
//! quadrature and one-dimensional minimization.

use std::f64::consts::PI;

/// `e^{-x} I_0(x)` for `x >= 0`.
pub fn bessel_i0_scaled(x: f64) -> f64 {
    bessel_scaled(0, x)
}

/// `e^{-x} I_1(x)` for `x >= 0`.
pub fn bessel_i1_scaled(x: f64) -> f64 {
    bessel_scaled(1, x)
}

fn bessel_scaled(order: u32, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 30.0 {
        // power series: sum_k (x/2)^{2k+ν} / (k! (k+ν)!)
        let h = 0.5 * x;
        let mut term = if order == 0 { 1.0 } else { h };
        let mut sum = term;
        let q = h * h;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= q / (k * (k + order as f64));
            sum += term;
            if term <= 1e-17 * sum {
                break;
            }
        }
        sum * (-x).exp()
    } else {
        // Hankel expansion; remainder below the smallest term, far below 1e-16 here
        let mu = 4.0 * (order * order) as f64;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            let j = (2 * k - 1) as f64;
            term *= -(mu - j * j) / (k as f64 * 8.0 * x);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum / (2.0 * PI * x).sqrt()
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// Subdivides until the summed error estimate is below
/// `max(abs_tol, rel_tol * |integral|)` or 2000 panels are in use.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (v, e) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || panels.len() >= 2000 {
            return total;
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
/// Returns `(argmin, min)`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // endpoints are candidates too for monotone objectives
    [(x, fx), (a, f(a)), (b, f(b))]
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .expect("non-empty")
}

/// Grid scan with step `h` over `[a, b]` followed by golden-section refinement
/// in the bracketing cells. Returns `(argmin, min)`.
pub fn grid_golden_minimize<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, h: f64, tol: f64) -> (f64, f64) {
    let steps = ((b - a) / h).ceil().max(1.0) as usize;
    let grid = |k: usize| if k == steps { b } else { a + k as f64 * (b - a) / steps as f64 };
    let mut best_k = 0;
    let mut best = f(a);
    for k in 1..=steps {
        let v = f(grid(k));
        if v < best {
            best = v;
            best_k = k;
        }
    }
    let lo = grid(best_k.saturating_sub(1));
    let hi = grid((best_k + 1).min(steps));
    let (x, v) = golden_section(&f, lo, hi, tol);
    if v <= best {
        (x, v)
    } else {
        (grid(best_k), best)
    }
}
