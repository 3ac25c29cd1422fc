//! Shared numerical machinery: an embedded Runge-Kutta integrator for
//! complex-valued systems along polygonal paths in the complex plane,
//! Gauss-Legendre quadrature, and the extrapolation helpers used by the
//! contour-integral post-processing.

use crate::linalg::{cr, C64, ZERO};
use crate::{Error, Result};

/// Tolerances and limits for the ODE integrator.
#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_init: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-13,
            max_steps: 2_000_000,
            h_init: None,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

/// Integrate `y' = f(z, y)` along the straight segments joining `nodes`,
/// returning the solution at every node (the first entry is `y0` itself).
///
/// Each segment is parameterised as `z(s) = a + s (b - a)`, `s` in `[0, 1]`,
/// so the integrator works in a real variable with the complex direction
/// folded into the right-hand side. Steps are clamped to land exactly on
/// segment ends; no dense output is needed.
pub fn integrate_path<F>(
    f: &F,
    nodes: &[C64],
    y0: &[C64],
    opts: &OdeOptions,
) -> Result<Vec<Vec<C64>>>
where
    F: Fn(C64, &[C64], &mut [C64]),
{
    assert!(nodes.len() >= 2, "need at least two path nodes");
    let mut out = Vec::with_capacity(nodes.len());
    out.push(y0.to_vec());
    let mut y = y0.to_vec();
    let mut budget = opts.max_steps;
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        y = integrate_segment(f, a, b, &y, opts, &mut budget)?;
        out.push(y.clone());
    }
    Ok(out)
}

fn integrate_segment<F>(
    f: &F,
    a: C64,
    b: C64,
    y0: &[C64],
    opts: &OdeOptions,
    budget: &mut usize,
) -> Result<Vec<C64>>
where
    F: Fn(C64, &[C64], &mut [C64]),
{
    let dir = b - a;
    if dir == ZERO {
        return Ok(y0.to_vec());
    }
    let dim = y0.len();
    let g = |s: f64, y: &[C64], dy: &mut [C64]| {
        f(a + dir * cr(s), y, dy);
        for v in dy.iter_mut() {
            *v *= dir;
        }
    };

    let mut s = 0.0f64;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<C64>> = vec![vec![ZERO; dim]; 7];
    g(0.0, &y, &mut k[0]);

    let mut h = opts.h_init.unwrap_or_else(|| initial_step(&y, &k[0], opts));
    h = h.min(1.0).max(1e-12);

    let mut ytmp = vec![ZERO; dim];
    let mut y5 = vec![ZERO; dim];
    let mut y4 = vec![ZERO; dim];

    while s < 1.0 {
        if *budget == 0 {
            return Err(Error::NonConvergence(format!(
                "step budget exhausted integrating segment {a} -> {b} (reached s = {s:.6})"
            )));
        }
        *budget -= 1;
        let mut clamped = false;
        if s + h >= 1.0 {
            h = 1.0 - s;
            clamped = true;
        }

        for stage in 0..6 {
            for i in 0..dim {
                let mut acc = ZERO;
                for (j, kj) in k.iter().enumerate().take(stage + 1) {
                    let aij = A[stage][j];
                    if aij != 0.0 {
                        acc += kj[i] * cr(aij);
                    }
                }
                ytmp[i] = y[i] + acc * cr(h);
            }
            let snext = s + C[stage] * h;
            let (lo, hi) = k.split_at_mut(stage + 1);
            g(snext, &ytmp, &mut hi[0]);
            let _ = lo;
        }

        for i in 0..dim {
            let mut acc5 = ZERO;
            let mut acc4 = ZERO;
            for (j, kj) in k.iter().enumerate() {
                if B5[j] != 0.0 {
                    acc5 += kj[i] * cr(B5[j]);
                }
                if B4[j] != 0.0 {
                    acc4 += kj[i] * cr(B4[j]);
                }
            }
            y5[i] = y[i] + acc5 * cr(h);
            y4[i] = y[i] + acc4 * cr(h);
        }

        // weighted RMS error against the mixed tolerance
        let mut err2 = 0.0f64;
        for i in 0..dim {
            let sc = opts.atol + opts.rtol * y[i].norm().max(y5[i].norm());
            let e = (y5[i] - y4[i]).norm() / sc;
            err2 += e * e;
        }
        let err = (err2 / dim as f64).sqrt();

        if err <= 1.0 {
            s += h;
            std::mem::swap(&mut y, &mut y5);
            // FSAL: k7 of the accepted step is k1 of the next
            let (last, rest) = (k.pop().unwrap(), &mut k);
            rest[0] = last;
            k.push(vec![ZERO; dim]);
            if clamped && s >= 1.0 {
                break;
            }
        }

        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * factor).max(1e-14);
        if h < 1e-13 && s < 1.0 {
            return Err(Error::NonConvergence(format!(
                "step size underflow integrating segment {a} -> {b} at s = {s:.6}"
            )));
        }
    }
    Ok(y)
}

fn initial_step(y: &[C64], dy: &[C64], opts: &OdeOptions) -> f64 {
    let ny = y.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let nd = dy.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    if nd < 1e-300 {
        return 1e-3;
    }
    (0.01 * (ny.max(opts.atol / opts.rtol)) / nd).clamp(1e-10, 0.1)
}

/// Integrate and return an a-posteriori accuracy estimate: the run is
/// repeated at tolerances tightened a hundredfold and the max-norm gap at
/// the final node is reported alongside the tighter solution.
pub fn integrate_path_verified<F>(
    f: &F,
    nodes: &[C64],
    y0: &[C64],
    opts: &OdeOptions,
) -> Result<(Vec<Vec<C64>>, f64)>
where
    F: Fn(C64, &[C64], &mut [C64]),
{
    let coarse = integrate_path(f, nodes, y0, opts)?;
    let tight = OdeOptions {
        rtol: opts.rtol * 1e-2,
        atol: opts.atol * 1e-2,
        ..*opts
    };
    let fine = integrate_path(f, nodes, y0, &tight)?;
    let gap = coarse
        .last()
        .unwrap()
        .iter()
        .zip(fine.last().unwrap().iter())
        .map(|(u, v)| (u - v).norm())
        .fold(0.0f64, f64::max);
    Ok((fine, gap))
}

/// Nodes and weights of the m-point Gauss-Legendre rule on [-1, 1],
/// found by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0f64; m];
    let mut weights = vec![0.0f64; m];
    for i in 0..(m + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..64 {
            let (p, dp) = legendre_with_derivative(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(m, x);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
        let (_, dp) = legendre_with_derivative(m, 0.0);
        weights[m / 2] = 2.0 / (dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0f64;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Fixed-order Gauss-Legendre integral of a complex-valued function on [a, b].
pub fn quad_gl<F>(f: &F, a: f64, b: f64, order: usize) -> C64
where
    F: Fn(f64) -> C64,
{
    let (xs, ws) = gauss_legendre(order);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = ZERO;
    for (&x, &w) in xs.iter().zip(ws.iter()) {
        acc += f(mid + half * x) * cr(w * half);
    }
    acc
}

/// Adaptive quadrature by interval halving: an interval is accepted when the
/// whole-interval rule and the sum of the two half rules agree to `tol`
/// (absolute, plus relative against the running magnitude).
pub fn quad_adaptive<F>(f: &F, a: f64, b: f64, tol: f64) -> Result<C64>
where
    F: Fn(f64) -> C64,
{
    const ORDER: usize = 15;
    let whole = quad_gl(f, a, b, ORDER);
    let mut stack = vec![(a, b, whole, 0u32)];
    let mut total = ZERO;
    let mut scale = whole.norm();
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = quad_gl(f, lo, mid, ORDER);
        let right = quad_gl(f, mid, hi, ORDER);
        let refined = left + right;
        scale = scale.max(refined.norm());
        if (refined - est).norm() <= tol * (1.0 + scale) || (hi - lo) < 1e-14 * (b - a).abs() {
            total += refined;
        } else {
            if depth >= 48 {
                return Err(Error::NonConvergence(format!(
                    "adaptive quadrature failed to settle on [{lo}, {hi}]"
                )));
            }
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    Ok(total)
}

/// One Richardson elimination pass: assuming `vals[i] = L + c * r^{-p * i}`
/// with `r = ratio` between consecutive sample radii, returns the sequence
/// with the `p`-th power term cancelled (one element shorter).
pub fn richardson_eliminate(vals: &[C64], ratio: f64, power: f64) -> Vec<C64> {
    assert!(vals.len() >= 2);
    let rp = ratio.powf(power);
    vals.windows(2)
        .map(|w| (w[1] * cr(rp) - w[0]) / cr(rp - 1.0))
        .collect()
}

/// Eliminate the listed inverse powers in order and return the final value
/// together with the magnitude of the last correction, which serves as the
/// convergence indicator.
pub fn richardson_extrapolate(vals: &[C64], ratio: f64, powers: &[f64]) -> (C64, f64) {
    let mut seq = vals.to_vec();
    for &p in powers {
        if seq.len() < 2 {
            break;
        }
        seq = richardson_eliminate(&seq, ratio, p);
    }
    let last = *seq.last().unwrap();
    let jump = if seq.len() >= 2 {
        (last - seq[seq.len() - 2]).norm()
    } else {
        f64::INFINITY
    };
    (last, jump)
}

/// Linear interpolation on a sorted breakpoint table.
pub fn interp_linear(r: &[f64], v: &[C64], x: f64) -> C64 {
    assert_eq!(r.len(), v.len());
    assert!(!r.is_empty());
    if x <= r[0] {
        return v[0];
    }
    if x >= r[r.len() - 1] {
        return v[v.len() - 1];
    }
    let j = r.partition_point(|&t| t < x);
    let (r0, r1) = (r[j - 1], r[j]);
    let t = (x - r0) / (r1 - r0);
    v[j - 1] * cr(1.0 - t) + v[j] * cr(t)
}

/// Mean of a piecewise-linear function over the window [lo, hi]:
/// the oscillation-killing average applied to partial contour integrals.
pub fn window_average(r: &[f64], v: &[C64], lo: f64, hi: f64) -> C64 {
    assert!(hi > lo);
    assert_eq!(r.len(), v.len());
    // integrate the polyline exactly: breakpoints inside plus the two ends
    let mut xs = vec![lo];
    for &t in r.iter() {
        if t > lo && t < hi {
            xs.push(t);
        }
    }
    xs.push(hi);
    let mut acc = ZERO;
    for w in xs.windows(2) {
        let (a, b) = (w[0], w[1]);
        let fa = interp_linear(r, v, a);
        let fb = interp_linear(r, v, b);
        acc += (fa + fb) * cr(0.5 * (b - a));
    }
    acc / cr(hi - lo)
}
