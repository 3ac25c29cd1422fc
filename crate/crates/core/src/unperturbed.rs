//! Fundamental solutions of the unperturbed system `y' = (x^{-1} A + B) y`
//! and the machinery shared with the perturbed flows.
//!
//! Two bases are built here. The Frobenius basis `c_k(z) = z^{mu_k} chat_k(z)`
//! is an entire-series object anchored at the origin; it is what every
//! small-`x` computation starts from. The asymptotic frames carry the
//! large-`x` data of a sector: the ray ordering `R_1..R_n`, the permuted unit
//! vectors `f_k`, and the formal series `e^{z R_k}(f_k + z^{-1} eta_1 + ...)`
//! whose truncations serve as anchors at the far end of the integration
//! interval.
//!
//! The module also provides [`wedge_flow`], the one ODE driver used for every
//! scaled compound tensor in the crate: given a grade, an exponential shift
//! and a potential toggle it transports a coefficient vector of the extended
//! system along a real-`x` path. All Weyl-tensor continuation reduces to it.

use crate::exterior::{CompoundBasis, GradedTensor, MultiIndex};
use crate::linalg::{cr, vec_norm_max, CMat, C64, ONE, ZERO};
use crate::model::{Sector, ValidatedSystem};
use crate::numerics::{integrate_path, OdeOptions};
use crate::{Error, Result};

/// Large-argument threshold for the asymptotic series: anchors are placed
/// where `|rho| x` exceeds this, so truncation error is a fixed small number
/// regardless of the spectral parameter.
pub const SERIES_ARGUMENT: f64 = 200.0;

/// Decay budget for potential tails: with `sigma_min x = 40` the neglected
/// tail is below `e^{-40} ~ 4e-18` relative.
pub const DECAY_ARGUMENT: f64 = 40.0;

/// Anchor abscissa for far-field data: far enough out that both the potential
/// tail and the series truncation are below working precision.
pub fn far_anchor(rho_abs: f64, sigma_min: Option<f64>) -> f64 {
    let decay_floor = sigma_min.map_or(0.0, |s| DECAY_ARGUMENT / s);
    let series_floor = SERIES_ARGUMENT / rho_abs.max(1e-12);
    decay_floor.max(series_floor).max(DECAY_ARGUMENT)
}

/// Ray ordering data of one sector: the reordered diagonal `R_1..R_n`, the
/// permutation `pi` with `R_k = b_{pi(k)}`, and the permutation matrix `f`
/// whose column `k` is the unit vector `e_{pi(k)}`.
#[derive(Clone, Debug)]
pub struct SectorFrame {
    pub sector_index: usize,
    pub r: Vec<C64>,
    pub perm: Vec<usize>,
    pub f: CMat,
    pub f_det: f64,
}

impl SectorFrame {
    pub fn new(sys: &ValidatedSystem, sector_index: usize) -> SectorFrame {
        let sector = &sys.geometry.sectors[sector_index];
        SectorFrame {
            sector_index,
            r: sector.r_values(&sys.b),
            perm: sector.order.clone(),
            f: sector.f_matrix(sys.n),
            f_det: sector.f_det(),
        }
    }

    pub fn n(&self) -> usize {
        self.r.len()
    }

    /// Standard index (0-based) carried by the frame column `k` (0-based).
    pub fn standard_index(&self, k: usize) -> usize {
        self.perm[k]
    }

    /// `f_{k+1}` as a grade-1 tensor (argument 0-based).
    pub fn f_vector(&self, k: usize) -> GradedTensor {
        GradedTensor::basis(&MultiIndex::new(
            &[(self.perm[k] + 1) as u8],
            self.n() as u8,
        ))
    }

    /// Signed wedge `f_{lo+1} ^ ... ^ f_{hi+1}` (arguments 0-based, inclusive).
    pub fn f_wedge(&self, lo: usize, hi: usize) -> GradedTensor {
        let raw: Vec<u8> = (lo..=hi).map(|k| (self.perm[k] + 1) as u8).collect();
        let (mi, sign) = MultiIndex::from_unsorted(&raw, self.n() as u8)
            .expect("permutation entries are distinct");
        let mut t = GradedTensor::zero(self.n() as u8, raw.len() as u8);
        t.set_coeff(mi, cr(sign as f64));
        t
    }

    /// `R_1 + ... + R_k` (k may be 0, giving 0).
    pub fn forward_sum(&self, k: usize) -> C64 {
        self.r[..k].iter().sum()
    }

    /// `R_k + ... + R_n` (1-based start; `backward_sum(1)` is the full trace 0).
    pub fn backward_sum(&self, k: usize) -> C64 {
        self.r[k - 1..].iter().sum()
    }

    pub fn sector<'a>(&self, sys: &'a ValidatedSystem) -> &'a Sector {
        &sys.geometry.sectors[self.sector_index]
    }
}

/// Frobenius basis at the origin: column `k` is `c_k(z) = z^{mu_k} chat_k(z)`
/// with `chat_k(0) = h_k` an eigenvector of `A` and the remaining
/// coefficients fixed by `(A - (mu_k + m) I) c_{k,m} = -B c_{k,m-1}`.
/// The series are entire; `r_f` is the radius the truncation is sized for.
pub struct FrobeniusBasis {
    pub n: usize,
    pub mu: Vec<C64>,
    pub r_f: f64,
    coeffs: Vec<Vec<Vec<C64>>>,
}

/// Relative tail bound used to truncate the Frobenius series at radius `r_f`.
const FROBENIUS_TAIL: f64 = 1e-16;

const FROBENIUS_MAX_ORDER: usize = 400;

impl FrobeniusBasis {
    pub fn build(sys: &ValidatedSystem, r_f: f64) -> Result<FrobeniusBasis> {
        let n = sys.n;
        let bm = CMat::from_diag(&sys.b);
        let mut coeffs = Vec::with_capacity(n);
        for k in 0..n {
            let h = sys.h.col(k);
            let h_scale = vec_norm_max(&h);
            let mut cols = vec![h];
            loop {
                let m = cols.len();
                if m > FROBENIUS_MAX_ORDER {
                    return Err(Error::NonConvergence(format!(
                        "Frobenius series for column {} did not reach the tail \
                         bound within {} terms at radius {}",
                        k + 1,
                        FROBENIUS_MAX_ORDER,
                        r_f
                    )));
                }
                // (A - (mu_k + m) I) c_m = -B c_{m-1}
                let mut lhs = sys.a.clone();
                let shift = sys.mu[k] + cr(m as f64);
                for i in 0..n {
                    lhs[(i, i)] -= shift;
                }
                let rhs: Vec<C64> = bm.matvec(&cols[m - 1]).iter().map(|v| -v).collect();
                let cm = lhs.solve(&rhs).ok_or_else(|| {
                    Error::NonConvergence(format!(
                        "singular Frobenius recursion at column {}, order {}",
                        k + 1,
                        m
                    ))
                })?;
                let tail = vec_norm_max(&cm) * r_f.powi(m as i32);
                cols.push(cm);
                if tail < FROBENIUS_TAIL * h_scale {
                    break;
                }
            }
            coeffs.push(cols);
        }
        Ok(FrobeniusBasis {
            n,
            mu: sys.mu.clone(),
            r_f,
            coeffs,
        })
    }

    /// Number of series terms kept for column `k` (0-based).
    pub fn order(&self, k: usize) -> usize {
        self.coeffs[k].len()
    }

    /// Analytic part `chat_k(z)` by Horner evaluation.
    pub fn eval_hat(&self, k: usize, z: C64) -> Vec<C64> {
        let cols = &self.coeffs[k];
        let mut acc = cols[cols.len() - 1].clone();
        for m in (0..cols.len() - 1).rev() {
            for i in 0..self.n {
                acc[i] = acc[i] * z + cols[m][i];
            }
        }
        acc
    }

    /// Full column `c_k(z) = z^{mu_k} chat_k(z)`, principal branch.
    pub fn eval_col(&self, k: usize, z: C64) -> Vec<C64> {
        let p = z.powc(self.mu[k]);
        self.eval_hat(k, z).iter().map(|v| v * p).collect()
    }

    /// Matrix with columns `c_1(z) .. c_n(z)`.
    pub fn eval_matrix(&self, z: C64) -> CMat {
        let mut m = CMat::zeros(self.n, self.n);
        for k in 0..self.n {
            m.set_col(k, &self.eval_col(k, z));
        }
        m
    }

    /// Signed wedge `c_{lo+1}(z) ^ ... ^ c_{hi+1}(z)` (0-based inclusive).
    pub fn wedge_cols(&self, lo: usize, hi: usize, z: C64) -> GradedTensor {
        let mut t = GradedTensor::from_vector(&self.eval_col(lo, z), self.n as u8);
        for k in lo + 1..=hi {
            t = t.wedge(&GradedTensor::from_vector(
                &self.eval_col(k, z),
                self.n as u8,
            ));
        }
        t
    }

    /// Largest residual of the defining recursion, relative to the
    /// coefficient scale: an independent audit of the linear solves.
    pub fn recursion_residual(&self, sys: &ValidatedSystem) -> f64 {
        let bm = CMat::from_diag(&sys.b);
        let mut worst: f64 = 0.0;
        for k in 0..self.n {
            let cols = &self.coeffs[k];
            for m in 1..cols.len() {
                let mut lhs = sys.a.matvec(&cols[m]);
                let shift = self.mu[k] + cr(m as f64);
                for i in 0..self.n {
                    lhs[i] -= shift * cols[m][i];
                }
                let rhs = bm.matvec(&cols[m - 1]);
                let scale = vec_norm_max(&cols[m])
                    .max(vec_norm_max(&cols[m - 1]))
                    .max(1e-300);
                for i in 0..self.n {
                    worst = worst.max((lhs[i] + rhs[i]).norm() / scale);
                }
            }
        }
        worst
    }
}

/// Formal large-argument series of one sector: column `k` of the scaled
/// e-basis is `u_k(z) = f_k + z^{-1} eta_k^(1) + z^{-2} eta_k^(2) + ...`.
/// The series is asymptotic, not convergent; evaluation truncates adaptively
/// at the smallest term.
pub struct AsymptoticSeries {
    pub n: usize,
    /// eta[k][m] is the m-th coefficient vector of column k (eta[k][0] = f_k).
    eta: Vec<Vec<Vec<C64>>>,
}

/// Default number of correction terms carried by the far-field series.
pub const SERIES_TERMS: usize = 8;

impl AsymptoticSeries {
    /// Coefficient recurrence, from matching powers in
    /// `u' = (z^{-1} A + B - R_k) u`:
    /// `(B - R_k) eta^{m+1} = -(A + m I) eta^m` fixes every component except
    /// the one along `f_k` (where `B - R_k` vanishes); that component is
    /// fixed one order later by the solvability of the next equation,
    /// `delta_{m+1} = -(A etahat^{m+1})_{pi(k)} / (m + 1)`.
    pub fn build(sys: &ValidatedSystem, frame: &SectorFrame, m_max: usize) -> AsymptoticSeries {
        let n = sys.n;
        let mut eta = Vec::with_capacity(n);
        for k in 0..n {
            let pk = frame.perm[k];
            let rk = frame.r[k];
            let mut terms: Vec<Vec<C64>> = Vec::with_capacity(m_max + 1);
            let mut f0 = vec![ZERO; n];
            f0[pk] = ONE;
            terms.push(f0);
            for m in 0..m_max {
                let prev = &terms[m];
                // etahat: pi(k) component 0, others from the diagonal solve
                let mut work = sys.a.matvec(prev);
                for i in 0..n {
                    work[i] += cr(m as f64) * prev[i];
                }
                let mut next = vec![ZERO; n];
                for i in 0..n {
                    if i != pk {
                        next[i] = -work[i] / (sys.b[i] - rk);
                    }
                }
                let delta = -sys.a.matvec(&next)[pk] / cr((m + 1) as f64);
                next[pk] = delta;
                terms.push(next);
            }
            eta.push(terms);
        }
        AsymptoticSeries { n, eta }
    }

    /// Scaled column `u_k(z)` with adaptive truncation: terms are added while
    /// they shrink, and the magnitude of the first dropped term is returned
    /// as the error estimate.
    pub fn eval_scaled(&self, k: usize, z: C64) -> (Vec<C64>, f64) {
        let terms = &self.eta[k];
        let mut acc = terms[0].clone();
        let zinv = ONE / z;
        let mut pw = ONE;
        let mut last = f64::INFINITY;
        for term in terms.iter().skip(1) {
            pw *= zinv;
            let mag = vec_norm_max(term) * pw.norm();
            if mag >= last {
                return (acc, mag);
            }
            for i in 0..self.n {
                acc[i] += pw * term[i];
            }
            last = mag;
        }
        let est = last * zinv.norm() * (terms.len() as f64);
        (acc, if est.is_finite() { est } else { 0.0 })
    }

    /// Wedge `u_{lo+1}(z) ^ ... ^ u_{hi+1}(z)` of scaled series columns, with
    /// the summed truncation estimate.
    pub fn wedge_scaled(&self, lo: usize, hi: usize, z: C64) -> (GradedTensor, f64) {
        let (v0, e0) = self.eval_scaled(lo, z);
        let mut t = GradedTensor::from_vector(&v0, self.n as u8);
        let mut err = e0;
        for k in lo + 1..=hi {
            let (v, e) = self.eval_scaled(k, z);
            t = t.wedge(&GradedTensor::from_vector(&v, self.n as u8));
            err += e;
        }
        (t, err)
    }

    /// Determinant of the scaled series frame at `z`; the Wronskian of the
    /// asymptotic basis, which should be the constant `det f` up to series
    /// truncation.
    pub fn wronskian(&self, z: C64) -> C64 {
        let mut m = CMat::zeros(self.n, self.n);
        for k in 0..self.n {
            let (col, _) = self.eval_scaled(k, z);
            m.set_col(k, &col);
        }
        m.det()
    }

    /// Residual of `u' = (z^{-1} A + B - R_k) u` for the truncated series,
    /// measured by central differences at `|z|` along the sector direction.
    /// Validates the recurrence against the system itself.
    pub fn ode_residual(
        &self,
        sys: &ValidatedSystem,
        frame: &SectorFrame,
        k: usize,
        z: C64,
    ) -> f64 {
        let h = 1e-4;
        let dz = z / cr(z.norm()) * cr(h);
        let (up, _) = self.eval_scaled(k, z + dz);
        let (um, _) = self.eval_scaled(k, z - dz);
        let (u0, _) = self.eval_scaled(k, z);
        let mut rhs = sys.a.matvec(&u0);
        for i in 0..self.n {
            rhs[i] = rhs[i] / z + (sys.b[i] - frame.r[k]) * u0[i];
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let deriv = (up[i] - um[i]) / (cr(2.0) * dz);
            worst = worst.max((deriv - rhs[i]).norm());
        }
        worst
    }
}

/// Transports a scaled compound tensor along a real-`x` path.
///
/// The coefficient vector `u` of a grade-`g` tensor obeys
/// `du/dx = (x^{-1} A^(g) + q(x)^(g) + rho (B^(g) - shift I)) u`,
/// the extension of the first-order system with the exponential `rho x shift`
/// factored out. Values are returned at every node of `xs`; the first node is
/// the anchor where `init` is imposed. `xs` must be strictly monotone and
/// positive (either direction).
pub struct FlowProblem<'a> {
    pub sys: &'a ValidatedSystem,
    pub rho: C64,
    pub grade: u8,
    pub shift: C64,
    pub with_q: bool,
}

pub fn wedge_flow(
    problem: &FlowProblem,
    xs: &[f64],
    init: &GradedTensor,
    opts: &OdeOptions,
) -> Result<Vec<GradedTensor>> {
    let sys = problem.sys;
    let basis = CompoundBasis::new(sys.n as u8, problem.grade);
    let dim = basis.dim();
    assert!(
        xs.len() >= 2,
        "flow needs an anchor and at least one target"
    );
    assert!(
        xs.windows(2).all(|w| w[0] < w[1]) || xs.windows(2).all(|w| w[0] > w[1]),
        "flow path must be strictly monotone"
    );
    assert!(
        xs.iter().all(|&x| x > 0.0),
        "flow path must avoid the origin"
    );

    let ma = basis.derivation_matrix(&sys.a);
    let diag: Vec<C64> = basis
        .diag_sums(&sys.b)
        .iter()
        .map(|&s| problem.rho * (s - problem.shift))
        .collect();
    let structure = if problem.with_q && !sys.q.is_zero() {
        Some(basis.derivation_structure())
    } else {
        None
    };

    let nodes: Vec<C64> = xs.iter().map(|&x| cr(x)).collect();
    let u0 = basis.to_vec(init);
    let rhs = move |x: C64, u: &[C64], du: &mut [C64]| {
        ma.matvec_into(u, du);
        let xinv = ONE / x;
        for i in 0..dim {
            du[i] = du[i] * xinv + diag[i] * u[i];
        }
        if let Some(table) = &structure {
            let qx = sys.q.eval(x.re);
            for e in table {
                let v = qx[(e.row, e.col)];
                if v != ZERO {
                    du[e.dst] += v * e.sign * u[e.src];
                }
            }
        }
    };
    let values = integrate_path(&rhs, &nodes, &u0, opts)?;
    Ok(values.iter().map(|v| basis.from_vec(v)).collect())
}

/// Determinants `det(e_1, .., e_{k-1}, c_k, .., c_n)` for `k = 2..n`,
/// evaluated in one sector. The e-block enters as the backward-continued
/// wedge `e_1 ^ .. ^ e_{k-1}` (the only stable way to carry it inward), the
/// c-block directly from the Frobenius series, and the constancy of the
/// result in `x` is the caller's cross-check. All must be nonzero for the
/// Weyl construction to go through.
pub fn condition1_determinants(
    sys: &ValidatedSystem,
    frob: &FrobeniusBasis,
    frame: &SectorFrame,
    x_eval: f64,
    opts: &OdeOptions,
) -> Result<Vec<C64>> {
    let n = sys.n;
    let omega = frame.sector(sys).bisector();
    let anchor = far_anchor(1.0, None);
    let series = AsymptoticSeries::build(sys, frame, SERIES_TERMS);
    let mut out = Vec::with_capacity(n - 1);
    for k in 2..=n {
        let shift = frame.forward_sum(k - 1);
        let (init, _) = series.wedge_scaled(0, k - 2, omega * cr(anchor));
        let problem = FlowProblem {
            sys,
            rho: omega,
            grade: (k - 1) as u8,
            shift,
            with_q: false,
        };
        let flowed = wedge_flow(&problem, &[anchor, x_eval], &init, opts)?;
        let e_wedge = &flowed[1];
        let c_wedge = frob.wedge_cols(k - 1, n - 1, omega * cr(x_eval));
        let scale = (omega * cr(x_eval) * shift).exp();
        let raw = e_wedge.wedge(&c_wedge).top_coeff();
        out.push(raw * scale);
    }
    Ok(out)
}
