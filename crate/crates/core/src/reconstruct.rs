//! Recovery of the potential from the jump data:
//! `q(x) = (1/2 pi i) int [B, P_hat(x, rho)] d rho` over all separation
//! rays, taken as the limit of symmetric truncations.
//!
//! All rays share one radial panel schedule, so every partial integral is a
//! truncation of the contour at a single radius, never a mix. The integrand
//! oscillates with known frequencies `x |b_j - b_k|` (the pairs that define
//! the rays), so the truncation polyline is averaged over a sliding window
//! of one slowest period before Richardson steps remove the remaining
//! inverse powers of the radius.

use rayon::prelude::*;

use crate::linalg::{c, cr, CMat, C64, ZERO};
use crate::model::ValidatedSystem;
use crate::numerics::{gauss_legendre, richardson_extrapolate, window_average};
use crate::spectral::{RayEvaluator, RayHealth};
use crate::weyl::EngineOptions;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct ReconstructOptions {
    /// Inner cutoff: the contour starts here, and the missing `[0, delta]`
    /// piece is estimated by a one-rectangle endpoint rule.
    pub delta: f64,
    /// Geometric growth of panel widths away from the cutoff.
    pub ratio: f64,
    /// Gauss-Legendre order per panel.
    pub panel_order: usize,
    /// Truncation radii entering the extrapolation; geometric, ascending.
    pub r_schedule: Vec<f64>,
    pub engine: EngineOptions,
}

impl Default for ReconstructOptions {
    fn default() -> ReconstructOptions {
        ReconstructOptions {
            delta: 1e-2,
            ratio: 1.5,
            panel_order: 8,
            r_schedule: vec![10.0, 20.0, 40.0, 80.0],
            engine: EngineOptions::default(),
        }
    }
}

/// Radial quadrature grid shared by every ray.
pub struct PanelSchedule {
    /// Panel boundaries, `edges[0] = delta`, strictly ascending.
    pub edges: Vec<f64>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Panel index of each node.
    pub node_panel: Vec<usize>,
}

/// Builds the schedule: widths grow geometrically from the cutoff but are
/// capped at a fraction of the shortest oscillation period
/// `2 pi / (x_max * freq_max)`, so every panel sees a smooth integrand.
pub fn panel_schedule(
    delta: f64,
    r_max: f64,
    x_max: f64,
    freq_max: f64,
    ratio: f64,
    order: usize,
) -> PanelSchedule {
    assert!(delta > 0.0 && r_max > delta && ratio > 1.0 && order >= 2);
    let period = 2.0 * std::f64::consts::PI / (x_max * freq_max);
    let cap = period / 6.0;
    let (gl_x, gl_w) = gauss_legendre(order);
    let mut edges = vec![delta];
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut node_panel = Vec::new();
    let mut width = (0.5 * delta).min(cap);
    let mut lo = delta;
    let mut panel = 0usize;
    while lo < r_max {
        let hi = (lo + width).min(r_max * 1.0000001);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for i in 0..order {
            nodes.push(mid + half * gl_x[i]);
            weights.push(half * gl_w[i]);
            node_panel.push(panel);
        }
        edges.push(hi);
        lo = hi;
        width = (width * ratio).min(cap);
        panel += 1;
    }
    PanelSchedule {
        edges,
        nodes,
        weights,
        node_panel,
    }
}

/// Estimate of `int_0^delta C s^p ds` from two integrand values just above
/// the cutoff: the jump vanishes at the origin like a fractional power set
/// by the exponent gaps, so a per-entry power fit beats any fixed-order
/// rule there.
fn power_law_inner(fa: C64, fb: C64, ra: f64, rb: f64, delta: f64) -> C64 {
    let (ma, mb) = (fa.norm(), fb.norm());
    if ma < 1e-14 || mb < 1e-14 {
        return ZERO;
    }
    let mut p = (mb / ma).ln() / (rb / ra).ln();
    if !p.is_finite() {
        p = 0.0;
    }
    p = p.clamp(-0.9, 4.0);
    fa * cr((delta / ra).powf(p) * delta / (p + 1.0))
}

/// `[B, M]` entrywise: `(b_i - b_j) m_ij`, diagonal exactly zero.
pub fn commutator_b(b: &[C64], m: &CMat) -> CMat {
    let n = b.len();
    let mut out = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[(i, j)] = (b[i] - b[j]) * m[(i, j)];
            }
        }
    }
    out
}

/// Cumulative symmetric-truncation integrals on the shared panel edges.
pub struct ContourData {
    pub xs: Vec<f64>,
    pub edges: Vec<f64>,
    /// `partial[e][j]`: the contour integral truncated at `edges[e]`,
    /// evaluated at `xs[j]` (inner-cutoff estimate included).
    pub partial: Vec<Vec<CMat>>,
    pub health: RayHealth,
}

/// Samples `[B, P_hat]` over every ray on the shared schedule and
/// accumulates the truncation polyline. Node evaluations run in parallel;
/// the reduction is a fixed-order sequential sum.
pub fn sample_contour(
    sys: &ValidatedSystem,
    xs: &[f64],
    opts: &ReconstructOptions,
) -> Result<ContourData> {
    assert!(!xs.is_empty());
    let n = sys.n;
    let r_max = opts.r_schedule.iter().cloned().fold(0.0, f64::max);
    let freq_max = pair_extreme(&sys.b, f64::max);
    let x_max = xs.iter().cloned().fold(0.0, f64::max);
    let sched = panel_schedule(
        opts.delta,
        r_max,
        x_max,
        freq_max,
        opts.ratio,
        opts.panel_order,
    );
    let ray_count = sys.geometry.ray_count();
    let evaluators: Vec<RayEvaluator> = (0..ray_count)
        .map(|r| RayEvaluator::new(sys, r, opts.engine.clone()))
        .collect::<Result<_>>()?;

    struct NodeOut {
        weighted: Vec<CMat>,
        raw: Option<Vec<CMat>>,
        health: RayHealth,
    }
    let tasks: Vec<(usize, usize)> = (0..ray_count)
        .flat_map(|r| (0..sched.nodes.len()).map(move |k| (r, k)))
        .collect();
    let evaluated: Vec<NodeOut> = tasks
        .par_iter()
        .map(|&(ray, k)| -> Result<NodeOut> {
            let ev = &evaluators[ray];
            let omega = ev.unit();
            let mut health = RayHealth::default();
            let samples = ev.samples_at(sched.nodes[k], xs, &mut health)?;
            let weighted = samples
                .iter()
                .map(|s| commutator_b(&sys.b, &s.p_hat).scale(omega * cr(sched.weights[k])))
                .collect();
            let raw = if k < 2 {
                Some(
                    samples
                        .iter()
                        .map(|s| commutator_b(&sys.b, &s.p_hat).scale(omega))
                        .collect(),
                )
            } else {
                None
            };
            Ok(NodeOut {
                weighted,
                raw,
                health,
            })
        })
        .collect::<Result<_>>()?;

    let mut health = RayHealth::default();
    let mut panel_sums: Vec<Vec<CMat>> =
        vec![vec![CMat::zeros(n, n); xs.len()]; sched.edges.len() - 1];
    // raw integrand at the two innermost nodes of each ray, for the
    // cutoff extrapolation
    let mut raw_pair: Vec<[Option<Vec<CMat>>; 2]> = (0..ray_count).map(|_| [None, None]).collect();
    for (t, out) in tasks.iter().zip(&evaluated) {
        let (ray, k) = *t;
        health.merge(&out.health);
        let panel = sched.node_panel[k];
        for (j, m) in out.weighted.iter().enumerate() {
            panel_sums[panel][j] = panel_sums[panel][j].add(m);
        }
        if k < 2 {
            raw_pair[ray][k] = out.raw.clone();
        }
    }
    let mut inner: Vec<CMat> = vec![CMat::zeros(n, n); xs.len()];
    for pair in &raw_pair {
        let (fa, fb) = (pair[0].as_ref().unwrap(), pair[1].as_ref().unwrap());
        for j in 0..xs.len() {
            for i in 0..n {
                for l in 0..n {
                    inner[j][(i, l)] += power_law_inner(
                        fa[j][(i, l)],
                        fb[j][(i, l)],
                        sched.nodes[0],
                        sched.nodes[1],
                        opts.delta,
                    );
                }
            }
        }
    }

    let norm = (c(0.0, 2.0 * std::f64::consts::PI)).inv();
    let mut partial = Vec::with_capacity(sched.edges.len());
    let mut running: Vec<CMat> = inner;
    partial.push(running.iter().map(|m| m.scale(norm)).collect::<Vec<_>>());
    for sums in &panel_sums {
        for (j, m) in sums.iter().enumerate() {
            running[j] = running[j].add(m);
        }
        partial.push(running.iter().map(|m| m.scale(norm)).collect::<Vec<_>>());
    }
    Ok(ContourData {
        xs: xs.to_vec(),
        edges: sched.edges,
        partial,
        health,
    })
}

fn pair_extreme(b: &[C64], pick: fn(f64, f64) -> f64) -> f64 {
    let mut out: Option<f64> = None;
    for i in 0..b.len() {
        for j in i + 1..b.len() {
            let d = (b[i] - b[j]).norm();
            out = Some(match out {
                Some(v) => pick(v, d),
                None => d,
            });
        }
    }
    out.expect("at least two spectral weights")
}

/// Windowed truncation values and the extrapolated limit.
pub struct Reconstruction {
    pub xs: Vec<f64>,
    pub estimate: Vec<CMat>,
    /// Per schedule radius: window-averaged truncations per abscissa.
    pub windowed: Vec<(f64, Vec<CMat>)>,
    /// Largest Richardson update in the last elimination, over entries; a
    /// small value means the inverse-power model fit the tail.
    pub max_jump: f64,
    /// Truncation differences damped from first to last schedule step for
    /// every entry.
    pub converged: bool,
    pub health: RayHealth,
}

/// Common ratio of the truncation schedule. Two Richardson eliminations
/// need at least three radii in geometric progression.
pub fn schedule_ratio(sched: &[f64]) -> Result<f64> {
    if sched.len() < 3 {
        return Err(Error::Format("need at least three truncation radii".into()));
    }
    let ratio = sched[1] / sched[0];
    let geometric = sched
        .windows(2)
        .all(|w| (w[1] / w[0] - ratio).abs() < 1e-6 * ratio);
    if !geometric {
        return Err(Error::Format(
            "truncation schedule must be geometric for the extrapolation".into(),
        ));
    }
    Ok(ratio)
}

/// Mean of the window means: the inner pass leaves an oscillatory residue
/// with a `1/r^2` envelope (the envelope shrinks across the window), the
/// outer pass knocks it down another order so the Richardson model sees a
/// smooth tail.
fn doubly_windowed(edges: &[f64], vals: &[C64], r: f64, t: f64) -> C64 {
    let m = 16usize;
    let mut acc = ZERO;
    for k in 0..=m {
        let s = r - t + t * (k as f64) / (m as f64);
        let w = window_average(edges, vals, s - t, s);
        let trapezoid = if k == 0 || k == m { 0.5 } else { 1.0 };
        acc += w * cr(trapezoid);
    }
    acc / cr(m as f64)
}

/// Extracts limits from a sampled contour. The window length is one period
/// of the slowest oscillation at that abscissa, clipped to the available
/// range; the schedule must be geometric for the Richardson steps (checked).
pub fn extract_limit(
    sys: &ValidatedSystem,
    data: &ContourData,
    opts: &ReconstructOptions,
) -> Result<Reconstruction> {
    let n = sys.n;
    let sched = &opts.r_schedule;
    let ratio = schedule_ratio(sched)?;
    let r_top = *sched.last().unwrap();
    if r_top > *data.edges.last().unwrap() + 1e-9 {
        return Err(Error::Format("schedule exceeds the sampled contour".into()));
    }
    let freq_min = pair_extreme(&sys.b, f64::min);

    let mut windowed: Vec<(f64, Vec<CMat>)> = sched
        .iter()
        .map(|&r| (r, vec![CMat::zeros(n, n); data.xs.len()]))
        .collect();
    let mut estimate = vec![CMat::zeros(n, n); data.xs.len()];
    let mut max_jump = 0.0f64;
    let mut converged = true;

    for (j, &x) in data.xs.iter().enumerate() {
        let period = 2.0 * std::f64::consts::PI / (x * freq_min);
        for i in 0..n {
            for l in 0..n {
                if i == l {
                    continue;
                }
                let polyline: Vec<C64> =
                    data.partial.iter().map(|per_x| per_x[j][(i, l)]).collect();
                let mut vals = Vec::with_capacity(sched.len());
                for (s, &r) in sched.iter().enumerate() {
                    let t = period.min(0.45 * (r - opts.delta));
                    let w = doubly_windowed(&data.edges, &polyline, r, t);
                    vals.push(w);
                    windowed[s].1[j][(i, l)] = w;
                }
                let (limit, jump) = richardson_extrapolate(&vals, ratio, &[1.0, 2.0]);
                estimate[j][(i, l)] = limit;
                max_jump = max_jump.max(jump);
                let d_first = (vals[1] - vals[0]).norm();
                let d_last = (vals[vals.len() - 1] - vals[vals.len() - 2]).norm();
                if d_last > d_first.max(1e-14) {
                    converged = false;
                }
            }
        }
    }
    Ok(Reconstruction {
        xs: data.xs.clone(),
        estimate,
        windowed,
        max_jump,
        converged,
        health: data.health,
    })
}

pub fn reconstruct(
    sys: &ValidatedSystem,
    xs: &[f64],
    opts: &ReconstructOptions,
) -> Result<Reconstruction> {
    let data = sample_contour(sys, xs, opts)?;
    extract_limit(sys, &data, opts)
}
