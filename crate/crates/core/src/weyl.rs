//! Weyl-type columns `Psi_k` through compound tensors.
//!
//! Individual middle columns cannot be continued numerically: in either
//! direction some other mode outgrows them and contamination is exponential.
//! The wedges are different. `F_k = Psi_1 ^ .. ^ Psi_k` is the slowest
//! grade-k tensor at infinity and the most singular one at the origin, so
//! transporting it inward from a far anchor keeps every error mode decaying.
//! `T_k = Psi_k ^ .. ^ Psi_n` is dominant in the forward direction and
//! flattest at the origin, so it is transported outward from a small-`x`
//! anchor and its normalization is read off at the far end. Each column is
//! then recovered pointwise from the pair `(F_{k-1}, T_k)` by a small linear
//! system in the sector frame.
//!
//! Everything here works with scaled tensors (`e^{-rho x sum R}` removed);
//! the two scalings cancel in every grade-n pairing, so determinant-type
//! quantities computed from them equal the unscaled ones exactly.

use crate::exterior::{GradedTensor, MultiIndex};
use crate::linalg::{cr, CMat, C64, ONE, ZERO};
use crate::model::ValidatedSystem;
use crate::numerics::OdeOptions;
use crate::unperturbed::{
    far_anchor, wedge_flow, AsymptoticSeries, FlowProblem, FrobeniusBasis, SectorFrame,
    SERIES_TERMS,
};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct EngineOptions {
    /// Inner anchor for the T-side flows; the Frobenius wedge evaluated here
    /// seeds the outward transport.
    pub x0: f64,
    /// Radius the Frobenius truncation is sized for.
    pub r_f: f64,
    pub ode: OdeOptions,
    /// Column solves with a worse condition number than this are rejected.
    pub cond_threshold: f64,
}

impl Default for EngineOptions {
    fn default() -> EngineOptions {
        EngineOptions {
            x0: 1e-3,
            r_f: 1.0,
            ode: OdeOptions::default(),
            cond_threshold: 1e10,
        }
    }
}

/// Scaled Weyl tensors of one sector at a fixed spectral point, sampled on a
/// grid of abscissas.
pub struct WeylTensors {
    pub rho: C64,
    pub with_q: bool,
    pub xs: Vec<f64>,
    /// Far anchor used by the flows.
    pub x_far: f64,
    /// `f[g-1][j]`: scaled `F_g` at `xs[j]`, grades `1..=n` (grade n constant).
    pub f: Vec<Vec<GradedTensor>>,
    /// `t[k-1][j]`: scaled `T_k` at `xs[j]`, `k = 1..=n` (k = 1 constant).
    pub t: Vec<Vec<GradedTensor>>,
    /// Per-k misfit between the renormalized T-flow and the far series wedge,
    /// transverse components included; near zero when the dominant mode was
    /// carried cleanly.
    pub t_residuals: Vec<f64>,
}

/// Solved scaled columns at one grid point.
pub struct ColumnsAt {
    pub psi: CMat,
    pub cond_max: f64,
}

/// Scaled Weyl matrices of the perturbed and unperturbed systems on a shared
/// grid, with the determinant pairings used by every health check.
pub struct WeylPair {
    pub xs: Vec<f64>,
    pub psi: Vec<CMat>,
    pub psi0: Vec<CMat>,
    /// `delta[j][k-1] = |F_{k-1} ^ T_k|` at `xs[j]` (perturbed).
    pub delta: Vec<Vec<C64>>,
    pub delta0: Vec<Vec<C64>>,
    pub cond_max: f64,
    pub t_residual: f64,
}

pub struct WeylEngine<'a> {
    pub sys: &'a ValidatedSystem,
    pub frame: SectorFrame,
    pub frob: FrobeniusBasis,
    pub series: AsymptoticSeries,
    pub opts: EngineOptions,
    f_vectors: Vec<GradedTensor>,
}

impl<'a> WeylEngine<'a> {
    pub fn new(
        sys: &'a ValidatedSystem,
        sector_index: usize,
        opts: EngineOptions,
    ) -> Result<WeylEngine<'a>> {
        let frame = SectorFrame::new(sys, sector_index);
        let frob = FrobeniusBasis::build(sys, opts.r_f)?;
        let series = AsymptoticSeries::build(sys, &frame, SERIES_TERMS);
        let f_vectors = (0..sys.n).map(|k| frame.f_vector(k)).collect();
        Ok(WeylEngine {
            sys,
            frame,
            frob,
            series,
            opts,
            f_vectors,
        })
    }

    fn n(&self) -> usize {
        self.sys.n
    }

    /// Constant top-grade tensor `f_det * e_{(1..n)}`; the exact value of the
    /// scaled `F_n` and `T_1`.
    fn top_tensor(&self) -> GradedTensor {
        let n = self.n() as u8;
        let mut t = GradedTensor::zero(n, n);
        t.set_coeff(MultiIndex::bottom(n, n), cr(self.frame.f_det));
        t
    }

    /// Signed wedge of frame vectors for an ascending list of 1-based frame
    /// labels; the empty list gives the scalar 1.
    fn f_wedge_subset(&self, labels: &[usize]) -> GradedTensor {
        let n = self.n() as u8;
        if labels.is_empty() {
            return GradedTensor::scalar(n, ONE);
        }
        let raw: Vec<u8> = labels
            .iter()
            .map(|&l| (self.frame.perm[l - 1] + 1) as u8)
            .collect();
        let (mi, sign) = MultiIndex::from_unsorted(&raw, n).expect("frame labels are distinct");
        let mut t = GradedTensor::zero(n, raw.len() as u8);
        t.set_coeff(mi, cr(sign as f64));
        t
    }

    /// Transports both tensor families to every grid point. `xs` must be
    /// strictly ascending, above the inner anchor and below the far anchor.
    pub fn tensors(&self, rho: C64, xs: &[f64], with_q: bool) -> Result<WeylTensors> {
        let n = self.n();
        assert!(!xs.is_empty() && xs.windows(2).all(|w| w[0] < w[1]));
        assert!(xs[0] > self.opts.x0, "grid reaches below the inner anchor");
        let use_q = with_q && !self.sys.q.is_zero();
        let sigma = if use_q { self.sys.q.min_decay() } else { None };
        let x_far = far_anchor(rho.norm(), sigma).max(2.0 * xs[xs.len() - 1]);

        let mut f: Vec<Vec<GradedTensor>> = Vec::with_capacity(n);
        for g in 1..n {
            let shift = self.frame.forward_sum(g);
            let (init, _) = self.series.wedge_scaled(0, g - 1, rho * cr(x_far));
            let mut nodes = vec![x_far];
            nodes.extend(xs.iter().rev().copied());
            let problem = FlowProblem {
                sys: self.sys,
                rho,
                grade: g as u8,
                shift,
                with_q: use_q,
            };
            let flowed = wedge_flow(&problem, &nodes, &init, &self.opts.ode)?;
            f.push(flowed.into_iter().skip(1).rev().collect());
        }
        f.push(vec![self.top_tensor(); xs.len()]);

        let mut t: Vec<Vec<GradedTensor>> = Vec::with_capacity(n);
        let mut t_residuals = vec![0.0; n];
        t.push(vec![self.top_tensor(); xs.len()]);
        for k in 2..=n {
            let shift = self.frame.backward_sum(k);
            let z0 = rho * cr(self.opts.x0);
            let prefactor = (-z0 * shift).exp();
            let init = self.frob.wedge_cols(k - 1, n - 1, z0).scale(prefactor);
            let mut nodes: Vec<f64> = vec![self.opts.x0];
            nodes.extend_from_slice(xs);
            nodes.push(x_far);
            let problem = FlowProblem {
                sys: self.sys,
                rho,
                grade: (n - k + 1) as u8,
                shift,
                with_q: use_q,
            };
            let flowed = wedge_flow(&problem, &nodes, &init, &self.opts.ode)?;
            let raw_far = &flowed[flowed.len() - 1];
            let (target, _) = self.series.wedge_scaled(k - 1, n - 1, rho * cr(x_far));
            let gain = project(raw_far, &target).ok_or_else(|| {
                Error::NonConvergence(format!(
                    "T-tensor k={k} lost the dominant mode at rho = {rho}"
                ))
            })?;
            t_residuals[k - 1] =
                raw_far.scale(ONE / gain).sub(&target).norm_one() / target.norm_one();
            let vals: Vec<GradedTensor> = flowed[1..=xs.len()]
                .iter()
                .map(|v| v.scale(ONE / gain))
                .collect();
            t.push(vals);
        }

        Ok(WeylTensors {
            rho,
            with_q: use_q,
            xs: xs.to_vec(),
            x_far,
            f,
            t,
            t_residuals,
        })
    }

    /// Assembles the column-k linear system at grid point `j`. Row `i >= k`
    /// pairs against `F_{k-1}` and the complementary frame wedge of
    /// `{k..n} \ i`; row `i < k` pairs against `T_k` and the frame wedge of
    /// `{1..k-1} \ i`. `base` is the scaled unperturbed column the unknowns
    /// correct; without it the unknowns make up the column itself.
    pub(crate) fn assemble_column_system(
        &self,
        tensors: &WeylTensors,
        j: usize,
        k: usize,
        base: Option<&[C64]>,
    ) -> (CMat, Vec<C64>) {
        let n = self.n();
        let f_prev = if k == 1 {
            GradedTensor::scalar(n as u8, ONE)
        } else {
            tensors.f[k - 2][j].clone()
        };
        let f_cur = &tensors.f[k - 1][j];
        let t_cur = &tensors.t[k - 1][j];
        let base_tensor = base.map(|v| GradedTensor::from_vector(v, n as u8));

        let mut mat = CMat::zeros(n, n);
        let mut rhs = vec![ZERO; n];
        for i in 1..=n {
            if i >= k {
                let labels: Vec<usize> = (k..=n).filter(|&l| l != i).collect();
                let a = self.f_wedge_subset(&labels);
                for (jc, fv) in self.f_vectors.iter().enumerate() {
                    mat[(i - 1, jc)] = f_prev.wedge(fv).wedge(&a).top_coeff();
                }
                let mut diff = f_cur.clone();
                if let Some(b) = &base_tensor {
                    diff = diff.sub(&f_prev.wedge(b));
                }
                rhs[i - 1] = diff.wedge(&a).top_coeff();
            } else {
                let labels: Vec<usize> = (1..k).filter(|&l| l != i).collect();
                let a = self.f_wedge_subset(&labels);
                for (jc, fv) in self.f_vectors.iter().enumerate() {
                    mat[(i - 1, jc)] = a.wedge(fv).wedge(t_cur).top_coeff();
                }
                rhs[i - 1] = match &base_tensor {
                    Some(b) => -a.wedge(b).wedge(t_cur).top_coeff(),
                    None => ZERO,
                };
            }
        }
        (mat, rhs)
    }

    /// Solves all n columns at grid point `j`. For the perturbed system pass
    /// the unperturbed matrix at the same point as `base`.
    pub fn columns_at(
        &self,
        tensors: &WeylTensors,
        j: usize,
        base: Option<&CMat>,
    ) -> Result<ColumnsAt> {
        let n = self.n();
        let mut psi = CMat::zeros(n, n);
        let mut cond_max: f64 = 0.0;
        for k in 1..=n {
            let base_col = base.map(|m| m.col(k - 1));
            let (mat, rhs) = self.assemble_column_system(tensors, j, k, base_col.as_deref());
            let cond = mat.cond_one();
            cond_max = cond_max.max(cond);
            if !cond.is_finite() || cond > self.opts.cond_threshold {
                return Err(Error::NonConvergence(format!(
                    "column system k={k} at x={} is ill-conditioned (cond ~ {cond:.3e})",
                    tensors.xs[j]
                )));
            }
            let gamma = mat
                .solve(&rhs)
                .ok_or_else(|| Error::NonConvergence(format!("singular column system k={k}")))?;
            let mut col = base_col.unwrap_or_else(|| vec![ZERO; n]);
            for (jf, g) in gamma.iter().enumerate() {
                col[self.frame.perm[jf]] += g;
            }
            psi.set_col(k - 1, &col);
        }
        Ok(ColumnsAt { psi, cond_max })
    }

    /// `|F_{k-1} ^ T_k|` for `k = 1..n` at grid point `j`; the scalings of
    /// the two factors cancel exactly, so these match the unscaled pairings.
    pub fn delta_at(&self, tensors: &WeylTensors, j: usize) -> Vec<C64> {
        let n = self.n();
        (1..=n)
            .map(|k| {
                if k == 1 {
                    tensors.t[0][j].top_coeff()
                } else {
                    tensors.f[k - 2][j].wedge(&tensors.t[k - 1][j]).top_coeff()
                }
            })
            .collect()
    }

    /// Full perturbed + unperturbed solve on a grid.
    pub fn weyl_pair(&self, rho: C64, xs: &[f64]) -> Result<WeylPair> {
        let t0 = self.tensors(rho, xs, false)?;
        let tq = if self.sys.q.is_zero() {
            None
        } else {
            Some(self.tensors(rho, xs, true)?)
        };
        let mut psi0 = Vec::with_capacity(xs.len());
        let mut psi = Vec::with_capacity(xs.len());
        let mut delta0 = Vec::with_capacity(xs.len());
        let mut delta = Vec::with_capacity(xs.len());
        let mut cond_max: f64 = 0.0;
        for j in 0..xs.len() {
            let c0 = self.columns_at(&t0, j, None)?;
            cond_max = cond_max.max(c0.cond_max);
            delta0.push(self.delta_at(&t0, j));
            match &tq {
                Some(tq) => {
                    let cq = self.columns_at(tq, j, Some(&c0.psi))?;
                    cond_max = cond_max.max(cq.cond_max);
                    delta.push(self.delta_at(tq, j));
                    psi.push(cq.psi);
                }
                None => {
                    delta.push(delta0[j].clone());
                    psi.push(c0.psi.clone());
                }
            }
            psi0.push(c0.psi);
        }
        let t_residual = tq
            .as_ref()
            .unwrap_or(&t0)
            .t_residuals
            .iter()
            .chain(&t0.t_residuals)
            .fold(0.0f64, |a, &b| a.max(b));
        Ok(WeylPair {
            xs: xs.to_vec(),
            psi,
            psi0,
            delta,
            delta0,
            cond_max,
            t_residual,
        })
    }
}

/// Least-squares gain of `target` inside `value`: `<target, value> / <target,
/// target>` over compound coefficients. `None` when the overlap vanishes.
fn project(value: &GradedTensor, target: &GradedTensor) -> Option<C64> {
    let mut num = ZERO;
    let mut den = 0.0f64;
    for (alpha, &tv) in target.iter() {
        num += tv.conj() * value.coeff(alpha);
        den += tv.norm_sqr();
    }
    if den == 0.0 || num.norm() < 1e-300 {
        None
    } else {
        Some(num / den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{vec_norm_max, vec_sub};
    use crate::model::{presets, validate, PotentialModel};

    fn reference() -> ValidatedSystem {
        validate(&presets::reference_n2()).unwrap().1.unwrap()
    }

    fn zero_n2() -> ValidatedSystem {
        validate(&presets::zero_potential_n2()).unwrap().1.unwrap()
    }

    fn smoke3() -> ValidatedSystem {
        validate(&presets::smoke_n3()).unwrap().1.unwrap()
    }

    fn grade1_to_vec(t: &GradedTensor, n: usize) -> Vec<C64> {
        (0..n)
            .map(|i| t.coeff(&MultiIndex::new(&[(i + 1) as u8], n as u8)))
            .collect()
    }

    fn interior_rho(sys: &ValidatedSystem, sector: usize, radius: f64) -> C64 {
        sys.geometry.sectors[sector].bisector() * cr(radius)
    }

    #[test]
    fn unperturbed_delta_equals_frame_determinant() {
        // every |F0_{k-1} ^ T0_k| is constant in x and its far-field value is
        // det f; the flows must reproduce that from both ends of the interval
        let sys = zero_n2();
        let engine = WeylEngine::new(&sys, 0, EngineOptions::default()).unwrap();
        let rho = interior_rho(&sys, 0, 12.0);
        let tn = engine.tensors(rho, &[0.4, 1.0, 2.5], false).unwrap();
        for j in 0..3 {
            for (k, d) in engine.delta_at(&tn, j).iter().enumerate() {
                assert!(
                    (d - cr(engine.frame.f_det)).norm() < 1e-7,
                    "k={} j={j}: {d}",
                    k + 1
                );
            }
        }
    }

    #[test]
    fn t_flow_renormalization_is_clean() {
        let sys = reference();
        for s in 0..2 {
            let engine = WeylEngine::new(&sys, s, EngineOptions::default()).unwrap();
            for radius in [10.0, 80.0] {
                let rho = interior_rho(&sys, s, radius);
                let tn = engine.tensors(rho, &[1.0], true).unwrap();
                for (k, r) in tn.t_residuals.iter().enumerate() {
                    assert!(*r < 1e-6, "sector {s} |rho|={radius} k={}: {r}", k + 1);
                }
            }
        }
    }

    #[test]
    fn zero_potential_columns_match_unperturbed() {
        let sys = zero_n2();
        let engine = WeylEngine::new(&sys, 1, EngineOptions::default()).unwrap();
        let rho = interior_rho(&sys, 1, 25.0);
        let pair = engine.weyl_pair(rho, &[0.5, 1.0, 2.0]).unwrap();
        for j in 0..3 {
            let d = pair.psi[j].sub(&pair.psi0[j]).norm_max();
            assert!(d == 0.0, "q = 0 must reuse the unperturbed solve");
        }
    }

    #[test]
    fn perturbed_base_solve_returns_tiny_corrections_for_zero_q() {
        // force the with-q path on a zero potential: corrections must vanish
        // to solver precision rather than by construction
        let mut sys = zero_n2();
        sys.q = PotentialModel::zero(2);
        let engine = WeylEngine::new(&sys, 0, EngineOptions::default()).unwrap();
        let rho = interior_rho(&sys, 0, 15.0);
        let tn = engine.tensors(rho, &[0.7, 1.8], false).unwrap();
        for j in 0..2 {
            let base = engine.columns_at(&tn, j, None).unwrap();
            let again = engine.columns_at(&tn, j, Some(&base.psi)).unwrap();
            let d = again.psi.sub(&base.psi).norm_max();
            assert!(d < 1e-9, "j={j}: {d}");
        }
    }

    #[test]
    fn defining_pairings_hold_beyond_solved_rows() {
        // the solve pins n coordinates; the full tensor identities
        // F_{k-1} ^ psi_k = F_k and psi_k ^ T_k = 0 are overdetermined
        // consistency checks on the whole construction
        let sys = reference();
        for s in 0..2 {
            let engine = WeylEngine::new(&sys, s, EngineOptions::default()).unwrap();
            let rho = interior_rho(&sys, s, 20.0);
            let xs = [0.5, 1.0];
            let pair = engine.weyl_pair(rho, &xs).unwrap();
            let tq = engine.tensors(rho, &xs, true).unwrap();
            let n = sys.n;
            for j in 0..xs.len() {
                for k in 1..=n {
                    let col = GradedTensor::from_vector(&pair.psi[j].col(k - 1), n as u8);
                    let f_prev = if k == 1 {
                        GradedTensor::scalar(n as u8, ONE)
                    } else {
                        tq.f[k - 2][j].clone()
                    };
                    let lhs = f_prev.wedge(&col);
                    let scale = tq.f[k - 1][j].norm_one();
                    let grow = lhs.sub(&tq.f[k - 1][j]).norm_one();
                    assert!(grow < 1e-7 * scale, "sector {s} j={j} k={k}: {grow}");
                    if k >= 2 {
                        // k = 1 overflows the top grade and is trivially zero
                        let orth = col.wedge(&tq.t[k - 1][j]).norm_one();
                        assert!(orth < 1e-7, "sector {s} j={j} k={k}: {orth}");
                    }
                }
            }
        }
    }

    #[test]
    fn columns_solve_the_differential_equation() {
        // continue each extreme column by the grade-1 flow in its stable
        // direction (recessive inward, dominant outward) and compare with the
        // independent solve at the endpoint; middle columns are covered by
        // the pairing identities instead
        let sys = reference();
        let engine = WeylEngine::new(&sys, 1, EngineOptions::default()).unwrap();
        let rho = interior_rho(&sys, 1, 20.0);
        let xs = [0.8, 1.7];
        let pair = engine.weyl_pair(rho, &xs).unwrap();
        for (k, from, to) in [(0, 1usize, 0usize), (sys.n - 1, 0, 1)] {
            let init = GradedTensor::from_vector(&pair.psi[from].col(k), sys.n as u8);
            let problem = FlowProblem {
                sys: &sys,
                rho,
                grade: 1,
                shift: engine.frame.r[k],
                with_q: true,
            };
            let moved = wedge_flow(&problem, &[xs[from], xs[to]], &init, &engine.opts.ode).unwrap();
            let got = grade1_to_vec(&moved[1], sys.n);
            let want = pair.psi[to].col(k);
            let err = vec_norm_max(&vec_sub(&got, &want));
            assert!(err < 1e-7, "column {k}: {err}");
        }
    }

    #[test]
    fn extreme_columns_match_their_tensors() {
        // psi_1 must reproduce F_1 and psi_n the renormalized T_n: two
        // independent routes to the same columns
        let sys = reference();
        let engine = WeylEngine::new(&sys, 0, EngineOptions::default()).unwrap();
        let rho = interior_rho(&sys, 0, 30.0);
        let xs = [0.6, 1.4];
        let tq = engine.tensors(rho, &xs, true).unwrap();
        let t0 = engine.tensors(rho, &xs, false).unwrap();
        for j in 0..xs.len() {
            let base = engine.columns_at(&t0, j, None).unwrap();
            let cq = engine.columns_at(&tq, j, Some(&base.psi)).unwrap();
            let first = grade1_to_vec(&tq.f[0][j], sys.n);
            let err1 = vec_norm_max(&vec_sub(&cq.psi.col(0), &first));
            assert!(err1 < 1e-8, "j={j}: {err1}");
            let last = grade1_to_vec(&tq.t[sys.n - 1][j], sys.n);
            let errn = vec_norm_max(&vec_sub(&cq.psi.col(sys.n - 1), &last));
            assert!(errn < 1e-8, "j={j}: {errn}");
        }
    }

    #[test]
    fn delta_constant_in_x_and_determinants_unimodular() {
        let sys = reference();
        let engine = WeylEngine::new(&sys, 0, EngineOptions::default()).unwrap();
        let rho = interior_rho(&sys, 0, 40.0);
        let xs = [0.3, 0.9, 2.0];
        let pair = engine.weyl_pair(rho, &xs).unwrap();
        for k in 0..sys.n {
            for j in 1..xs.len() {
                let d = (pair.delta[j][k] - pair.delta[0][k]).norm();
                assert!(d < 1e-7 * pair.delta[0][k].norm(), "k={k}: drift {d}");
            }
        }
        for j in 0..xs.len() {
            let d0 = pair.psi0[j].det().norm();
            let dq = pair.psi[j].det().norm();
            assert!((d0 - 1.0).abs() < 1e-7, "j={j}: |det psi0| = {d0}");
            assert!((dq - 1.0).abs() < 1e-7, "j={j}: |det psi| = {dq}");
        }
    }

    #[test]
    fn column_system_diagonal_approaches_frame_sign_pattern() {
        // at large |rho| the unperturbed tensors collapse onto frame wedges
        // and the matrix becomes triangular with diagonal (-1)^{k-i} det f
        // in the rows i >= k
        let sys = reference();
        let engine = WeylEngine::new(&sys, 1, EngineOptions::default()).unwrap();
        let rho = interior_rho(&sys, 1, 80.0);
        let tn = engine.tensors(rho, &[1.0], false).unwrap();
        for k in 1..=sys.n {
            let (mat, _) = engine.assemble_column_system(&tn, 0, k, None);
            for i in k..=sys.n {
                let want = cr(engine.frame.f_det * if (i - k) % 2 == 0 { 1.0 } else { -1.0 });
                let got = mat[(i - 1, i - 1)];
                assert!((got - want).norm() < 0.05, "k={k} i={i}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn scaled_columns_approach_frame_at_infinity() {
        let sys = reference();
        let engine = WeylEngine::new(&sys, 0, EngineOptions::default()).unwrap();
        let rho = interior_rho(&sys, 0, 10.0);
        let xs = [8.0, 16.0];
        let pair = engine.weyl_pair(rho, &xs).unwrap();
        let mut gaps = Vec::new();
        for j in 0..2 {
            gaps.push(pair.psi[j].sub(&engine.frame.f).norm_max());
        }
        assert!(gaps[1] < gaps[0], "no approach to the frame: {gaps:?}");
        assert!(gaps[1] < 0.05);
    }

    #[test]
    fn perturbation_response_is_linear_in_small_q() {
        // halving the potential should halve psi - psi0 to first order
        let sys = reference();
        let engine = WeylEngine::new(&sys, 0, EngineOptions::default()).unwrap();
        let rho = interior_rho(&sys, 0, 25.0);
        let xs = [1.0];
        let mut half = reference();
        half.q = sys.q.scaled(0.5);
        let engine_half = WeylEngine::new(&half, 0, EngineOptions::default()).unwrap();
        let full = engine.weyl_pair(rho, &xs).unwrap();
        let halfp = engine_half.weyl_pair(rho, &xs).unwrap();
        let d_full = full.psi[0].sub(&full.psi0[0]).norm_max();
        let d_half = halfp.psi[0].sub(&halfp.psi0[0]).norm_max();
        let ratio = d_full / d_half;
        assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn smoke_n3_pair_is_healthy() {
        let sys = smoke3();
        let engine = WeylEngine::new(&sys, 2, EngineOptions::default()).unwrap();
        let rho = interior_rho(&sys, 2, 15.0);
        let xs = [0.5, 1.2];
        let pair = engine.weyl_pair(rho, &xs).unwrap();
        assert!(pair.cond_max < 1e6, "cond {}", pair.cond_max);
        assert!(pair.t_residual < 1e-6);
        for j in 0..2 {
            for k in 0..3 {
                assert!(pair.delta[j][k].norm() > 1e-6);
            }
            let d = pair.psi0[j].det().norm();
            assert!((d - 1.0).abs() < 1e-6, "j={j}: {d}");
        }
    }
}
