//! System description and its admissibility checks.
//!
//! A system is given by an off-diagonal matrix `A` (regular singularity at
//! the origin), a traceless diagonal `B` (spectral direction weights), and an
//! off-diagonal potential `q` drawn from the family `c * x^a * exp(-sigma x)`.
//! Validation enforces the eigenvalue conditions on `A`, the geometric
//! conditions on `B`, and the family constraints on `q`; on success it caches
//! the eigen-decomposition (normalized so `det H = 1`) and the sector
//! geometry of the spectral plane.

use crate::linalg::{c, cr, CMat, C64, ONE, ZERO};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

/// Complex scalar serialized as a `[re, im]` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CNum(pub C64);

impl Serialize for CNum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (self.0.re, self.0.im).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CNum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(CNum(c(re, im)))
    }
}

fn default_p() -> f64 {
    3.0
}

/// One potential term `c * x^a * exp(-sigma x)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PotentialTermConfig {
    pub c: CNum,
    pub a: f64,
    pub sigma: f64,
}

/// All terms of one off-diagonal entry `q_{ij}`; indices are 1-based.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PotentialEntryConfig {
    pub i: usize,
    pub j: usize,
    pub terms: Vec<PotentialTermConfig>,
}

/// On-disk system description. Matrices are row-major, complex numbers are
/// `[re, im]` pairs, and the potential is a list of per-entry term sums.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SystemConfig {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<CNum>>,
    #[serde(rename = "B")]
    pub b: Vec<CNum>,
    #[serde(default)]
    pub q: Vec<PotentialEntryConfig>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl SystemConfig {
    pub fn from_json(text: &str) -> Result<SystemConfig> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("system file: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<SystemConfig> {
        let text = std::fs::read_to_string(path)?;
        SystemConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization")
    }
}

/// One term `coeff * x^exponent * exp(-decay x)` of a potential entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotTerm {
    pub coeff: C64,
    pub exponent: f64,
    pub decay: f64,
}

impl PotTerm {
    pub fn eval(&self, x: f64) -> C64 {
        self.coeff * cr(x.powf(self.exponent) * (-self.decay * x).exp())
    }
}

pub fn eval_terms(terms: &[PotTerm], x: f64) -> C64 {
    terms.iter().map(|t| t.eval(x)).fold(ZERO, |s, v| s + v)
}

/// Differentiate a term sum within the family. Exponent-zero terms lose
/// their polynomial factor cleanly; negative exponents never arise from
/// validated input (a >= 1).
pub fn derivative_terms(terms: &[PotTerm]) -> Vec<PotTerm> {
    let mut out = Vec::new();
    for t in terms {
        if t.exponent != 0.0 {
            out.push(PotTerm {
                coeff: t.coeff * cr(t.exponent),
                exponent: t.exponent - 1.0,
                decay: t.decay,
            });
        }
        out.push(PotTerm {
            coeff: -t.coeff * cr(t.decay),
            exponent: t.exponent,
            decay: t.decay,
        });
    }
    out
}

pub fn scale_terms(terms: &[PotTerm], s: C64) -> Vec<PotTerm> {
    terms
        .iter()
        .map(|t| PotTerm {
            coeff: t.coeff * s,
            ..*t
        })
        .collect()
}

/// Off-diagonal matrix potential with entries in the term family.
#[derive(Clone, Debug)]
pub struct PotentialModel {
    n: usize,
    entries: Vec<Vec<PotTerm>>, // n*n row-major, diagonal entries empty
}

impl PotentialModel {
    pub fn zero(n: usize) -> PotentialModel {
        PotentialModel {
            n,
            entries: vec![Vec::new(); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> &[PotTerm] {
        &self.entries[i * self.n + j]
    }

    pub fn push_term(&mut self, i: usize, j: usize, term: PotTerm) {
        assert!(i != j, "potential is off-diagonal");
        self.entries[i * self.n + j].push(term);
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_empty())
    }

    pub fn eval(&self, x: f64) -> CMat {
        let mut m = CMat::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    m[(i, j)] = eval_terms(self.entry(i, j), x);
                }
            }
        }
        m
    }

    pub fn eval_deriv(&self, x: f64) -> CMat {
        let mut m = CMat::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    m[(i, j)] = eval_terms(&derivative_terms(self.entry(i, j)), x);
                }
            }
        }
        m
    }

    pub fn scaled(&self, s: f64) -> PotentialModel {
        PotentialModel {
            n: self.n,
            entries: self.entries.iter().map(|e| scale_terms(e, cr(s))).collect(),
        }
    }

    /// Slowest decay rate over all terms; `None` for the zero potential.
    pub fn min_decay(&self) -> Option<f64> {
        self.entries
            .iter()
            .flatten()
            .map(|t| t.decay)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }

    /// Largest coefficient magnitude, a crude amplitude scale.
    pub fn amplitude(&self) -> f64 {
        self.entries
            .iter()
            .flatten()
            .map(|t| t.coeff.norm())
            .fold(0.0, f64::max)
    }
}

/// A separation ray `{r e^{i theta} : r > 0}` together with the index pairs
/// `(j, k)` of `B`-entries whose growth orders swap across it.
#[derive(Clone, Debug)]
pub struct Ray {
    pub theta: f64,
    pub unit: C64,
    pub pairs: Vec<(usize, usize)>,
}

/// Open sector between two adjacent rays, carrying the growth ordering
/// valid in its interior.
#[derive(Clone, Debug)]
pub struct Sector {
    pub theta_lo: f64,
    pub theta_hi: f64, // theta_lo < theta_hi, may exceed 2 pi on the wrap sector
    /// `order[k]` is the 0-based index `pi(k)` with `R_k = b[pi(k)]`.
    pub order: Vec<usize>,
    /// Smallest gap between consecutive `Re(b z)` values at the bisector.
    pub margin: f64,
}

impl Sector {
    pub fn bisector(&self) -> C64 {
        C64::from_polar(1.0, 0.5 * (self.theta_lo + self.theta_hi))
    }

    pub fn contains(&self, theta: f64) -> bool {
        let mut t = theta;
        while t < self.theta_lo {
            t += 2.0 * PI;
        }
        t > self.theta_lo && t < self.theta_hi
    }

    /// Growth-ordered values `(R_1, ..., R_n)`.
    pub fn r_values(&self, b: &[C64]) -> Vec<C64> {
        self.order.iter().map(|&i| b[i]).collect()
    }

    /// Permutation matrix with `(R_1,...,R_n) = (b_1,...,b_n) f`,
    /// i.e. column k is the standard basis vector at `order[k]`.
    pub fn f_matrix(&self, n: usize) -> CMat {
        let mut f = CMat::zeros(n, n);
        for (k, &p) in self.order.iter().enumerate() {
            f[(p, k)] = ONE;
        }
        f
    }

    /// Sign of the ordering permutation, which equals `det f`.
    pub fn f_det(&self) -> f64 {
        let mut perm = self.order.clone();
        let mut sign = 1.0;
        for i in 0..perm.len() {
            while perm[i] != i {
                let j = perm[i];
                perm.swap(i, j);
                sign = -sign;
            }
        }
        sign
    }
}

/// Where a spectral point sits relative to the separation set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Interior(usize),
    OnRay(usize),
}

/// Separation rays and sectors of the spectral plane for given `B` entries.
///
/// `sectors[v]` spans counterclockwise from `rays[v]` to `rays[(v+1) % N]`;
/// consequently `rays[v]` divides `sectors[v-1]` (clockwise side, the "minus"
/// bank) from `sectors[v]` (counterclockwise side, the "plus" bank).
#[derive(Clone, Debug)]
pub struct SectorGeometry {
    pub b: Vec<C64>,
    pub rays: Vec<Ray>,
    pub sectors: Vec<Sector>,
}

impl SectorGeometry {
    pub fn ray_count(&self) -> usize {
        self.rays.len()
    }

    /// Sector indices (minus bank, plus bank) adjacent to `rays[r]`.
    pub fn ray_sectors(&self, r: usize) -> (usize, usize) {
        let n = self.sectors.len();
        ((r + n - 1) % n, r)
    }

    pub fn locate(&self, z: C64) -> Location {
        let theta = normalize_angle(z.arg());
        for (r, ray) in self.rays.iter().enumerate() {
            let mut d = (theta - ray.theta).abs();
            d = d.min(2.0 * PI - d);
            if d < 1e-12 {
                return Location::OnRay(r);
            }
        }
        for (v, s) in self.sectors.iter().enumerate() {
            if s.contains(theta) {
                return Location::Interior(v);
            }
        }
        unreachable!("angle {theta} neither on a ray nor inside a sector");
    }
}

fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t < 0.0 {
        t += 2.0 * PI;
    }
    // collapse values within rounding of the wrap point
    if (t - 2.0 * PI).abs() < 1e-15 {
        t = 0.0;
    }
    t
}

/// Build the separation-set geometry. Fails when some sector's ordering is
/// not strict and stable across its interior (borderline geometry).
pub fn sector_geometry(b: &[C64]) -> Result<SectorGeometry> {
    let n = b.len();
    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut candidates: Vec<(f64, (usize, usize))> = Vec::new();
    for j in 0..n {
        for k in (j + 1)..n {
            let d = b[j] - b[k];
            let theta = normalize_angle(PI / 2.0 - d.arg());
            candidates.push((theta, (j, k)));
            candidates.push((normalize_angle(theta + PI), (j, k)));
        }
    }
    candidates.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    let mut rays: Vec<Ray> = Vec::new();
    let angle_tol = 1e-9;
    for (theta, pair) in candidates {
        match rays.last_mut() {
            Some(last) if (theta - last.theta).abs() < angle_tol => last.pairs.push(pair),
            _ => rays.push(Ray {
                theta,
                unit: C64::from_polar(1.0, theta),
                pairs: vec![pair],
            }),
        }
    }
    // wraparound merge: last ray within tolerance of first + 2 pi
    if rays.len() > 1 {
        let (first_theta, last_theta) = (rays[0].theta, rays.last().unwrap().theta);
        if (first_theta + 2.0 * PI - last_theta).abs() < angle_tol {
            let moved = rays.pop().unwrap();
            rays[0].pairs.extend(moved.pairs);
        }
    }

    let count = rays.len();
    let mut sectors = Vec::with_capacity(count);
    for v in 0..count {
        let lo = rays[v].theta;
        let mut hi = rays[(v + 1) % count].theta;
        if hi <= lo {
            hi += 2.0 * PI;
        }
        let width = hi - lo;
        // ordering at the bisector, re-verified near both edges
        let probes = [lo + 0.5 * width, lo + 0.01 * width, hi - 0.01 * width];
        let mut order: Option<Vec<usize>> = None;
        let mut margin = f64::INFINITY;
        for (pi, &t) in probes.iter().enumerate() {
            let w = C64::from_polar(1.0, t);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&i, &j| (b[i] * w).re.partial_cmp(&(b[j] * w).re).unwrap());
            let gaps: Vec<f64> = idx
                .windows(2)
                .map(|p| (b[p[1]] * w).re - (b[p[0]] * w).re)
                .collect();
            let gap = gaps.iter().fold(f64::INFINITY, |m, &g| m.min(g));
            if pi == 0 {
                margin = gap;
                if gap <= 1e-9 * scale {
                    return Err(Error::Assumption(format!(
                        "sector {v}: growth ordering not strict at bisector (gap {gap:.3e})"
                    )));
                }
                order = Some(idx);
            } else if order.as_deref() != Some(&idx[..]) {
                return Err(Error::Assumption(format!(
                    "sector {v}: growth ordering changes inside the sector (degenerate ray layout)"
                )));
            }
        }
        sectors.push(Sector {
            theta_lo: lo,
            theta_hi: hi,
            order: order.unwrap(),
            margin,
        });
    }

    Ok(SectorGeometry {
        b: b.to_vec(),
        rays,
        sectors,
    })
}

/// Characteristic polynomial coefficients `[1, c_1, ..., c_n]` of
/// `det(lambda I - A)` by the Faddeev-LeVerrier recursion.
fn char_poly(a: &CMat) -> Vec<C64> {
    let n = a.rows();
    let mut coeffs = vec![ONE];
    let mut m = CMat::identity(n);
    for k in 1..=n {
        if k > 1 {
            m = a.matmul(&m);
            for i in 0..n {
                m[(i, i)] += coeffs[k - 1];
            }
        }
        let am = a.matmul(&m);
        let tr = (0..n).fold(ZERO, |s, i| s + am[(i, i)]);
        coeffs.push(-tr / cr(k as f64));
    }
    coeffs
}

fn poly_eval(coeffs: &[C64], z: C64) -> (C64, C64) {
    let mut p = ZERO;
    let mut dp = ZERO;
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All roots of a monic polynomial by the Aberth-Ehrlich simultaneous
/// iteration; adequate for the small, well-separated spectra allowed here.
fn poly_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let n = coeffs.len() - 1;
    let radius = 1.0 + coeffs.iter().skip(1).map(|c| c.norm()).fold(0.0, f64::max);
    let mut z: Vec<C64> = (0..n)
        .map(|i| C64::from_polar(radius, 2.0 * PI * (i as f64 + 0.37) / n as f64 + 0.4))
        .collect();
    for _ in 0..300 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let (p, dp) = poly_eval(coeffs, z[i]);
            if p == ZERO {
                continue;
            }
            let w = if dp == ZERO { c(1e-6, 1e-6) } else { p / dp };
            let mut s = ZERO;
            for (j, &zj) in z.iter().enumerate() {
                if j != i {
                    s += ONE / (z[i] - zj);
                }
            }
            let denom = ONE - w * s;
            let step = if denom.norm() < 1e-300 { w } else { w / denom };
            z[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-15 * (1.0 + radius) {
            break;
        }
    }
    for &zi in &z {
        let (p, dp) = poly_eval(coeffs, zi);
        let back = if dp == ZERO {
            p.norm()
        } else {
            (p / dp).norm()
        };
        if back > 1e-9 * (1.0 + radius) {
            return Err(Error::NonConvergence(format!(
                "root finder did not converge (residual step {back:.3e} at {zi})"
            )));
        }
    }
    Ok(z)
}

/// Nullspace vector of a (numerically) rank-deficient matrix by full-pivot
/// elimination, refined with one inverse-iteration pass in the caller.
fn nullspace_vector(m: &CMat) -> Vec<C64> {
    let n = m.rows();
    let mut a = m.clone();
    let mut col_perm: Vec<usize> = (0..n).collect();
    let steps = n - 1;
    for k in 0..steps {
        let mut best = 0.0;
        let (mut pi, mut pj) = (k, k);
        for i in k..n {
            for j in k..n {
                let v = a[(i, j)].norm();
                if v > best {
                    best = v;
                    pi = i;
                    pj = j;
                }
            }
        }
        if best == 0.0 {
            break;
        }
        if pi != k {
            for j in 0..n {
                let t = a[(k, j)];
                a[(k, j)] = a[(pi, j)];
                a[(pi, j)] = t;
            }
        }
        if pj != k {
            for i in 0..n {
                let t = a[(i, k)];
                a[(i, k)] = a[(i, pj)];
                a[(i, pj)] = t;
            }
            col_perm.swap(k, pj);
        }
        for i in (k + 1)..n {
            let factor = a[(i, k)] / a[(k, k)];
            for j in k..n {
                let akj = a[(k, j)];
                a[(i, j)] -= factor * akj;
            }
        }
    }
    // free variable in the last permuted column
    let mut x = vec![ZERO; n];
    x[n - 1] = ONE;
    for k in (0..steps).rev() {
        let mut s = ZERO;
        for j in (k + 1)..n {
            s += a[(k, j)] * x[j];
        }
        x[k] = -s / a[(k, k)];
    }
    let mut out = vec![ZERO; n];
    for (pos, &orig) in col_perm.iter().enumerate() {
        out[orig] = x[pos];
    }
    out
}

/// Eigenvalues (sorted by real part) and eigenvectors of `A`, with the
/// eigenvector matrix rescaled to determinant one. The scaling makes the
/// regular fundamental matrix unimodular, which downstream identities use.
pub fn eigen_decompose(a: &CMat) -> Result<(Vec<C64>, CMat)> {
    let n = a.rows();
    let coeffs = char_poly(a);
    let mut mu = poly_roots(&coeffs)?;
    mu.sort_by(|x, y| {
        x.re.partial_cmp(&y.re)
            .unwrap()
            .then(x.im.partial_cmp(&y.im).unwrap())
    });

    let scale = a.norm_max().max(1.0);
    let mut h = CMat::zeros(n, n);
    for (k, &m) in mu.iter().enumerate() {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] -= m;
        }
        let mut v = nullspace_vector(&shifted);
        // one inverse-iteration pass against a slightly regularized shift
        let mut reg = shifted.clone();
        for i in 0..n {
            reg[(i, i)] += cr(1e-12 * scale);
        }
        if let Some(w) = reg.solve(&v) {
            let nw = w.iter().map(|t| t.norm()).fold(0.0, f64::max);
            if nw > 0.0 {
                v = w.iter().map(|t| t / cr(nw)).collect();
            }
        }
        // deterministic phase: unit entry at the first index of max modulus
        let mut pivot = 0;
        let mut best = 0.0;
        for (i, t) in v.iter().enumerate() {
            if t.norm() > best * (1.0 + 1e-12) {
                best = t.norm();
                pivot = i;
            }
        }
        let piv = v[pivot];
        for t in v.iter_mut() {
            *t /= piv;
        }
        let residual = {
            let av = a.matvec(&v);
            av.iter()
                .zip(v.iter())
                .map(|(avi, vi)| (avi - m * vi).norm())
                .fold(0.0, f64::max)
        };
        if residual > 1e-9 * scale {
            return Err(Error::NonConvergence(format!(
                "eigenvector residual {residual:.3e} for eigenvalue {m}"
            )));
        }
        h.set_col(k, &v);
    }

    let det = h.det();
    if det.norm() < 1e-12 {
        return Err(Error::NonConvergence(
            "eigenvector matrix numerically singular".into(),
        ));
    }
    let s = (-det.ln() / cr(n as f64)).exp();
    for k in 0..n {
        for i in 0..n {
            h[(i, k)] *= s;
        }
    }
    Ok((mu, h))
}

/// One named admissibility check with a human-readable witness.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for check in &self.checks {
            writeln!(
                f,
                "[{}] {:<24} {}",
                if check.passed { "pass" } else { "FAIL" },
                check.name,
                check.detail
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "[warn] {w}")?;
        }
        Ok(())
    }
}

/// Fully validated system: parsed data plus the cached eigen-decomposition
/// and sector geometry. Immutable once built.
#[derive(Clone, Debug)]
pub struct ValidatedSystem {
    pub n: usize,
    pub a: CMat,
    pub b: Vec<C64>,
    pub q: PotentialModel,
    pub p: f64,
    pub label: Option<String>,
    pub mu: Vec<C64>,
    pub h: CMat,
    pub geometry: SectorGeometry,
}

impl ValidatedSystem {
    /// Same system with the potential replaced (revalidation not needed:
    /// A and B are untouched and the family constraints are the caller's
    /// responsibility in tests).
    pub fn with_potential(&self, q: PotentialModel) -> ValidatedSystem {
        let mut out = self.clone();
        out.q = q;
        out
    }
}

/// Run every admissibility check. Assumption failures land in the report;
/// the `Err` path is reserved for solver breakdowns (root finder) so the
/// caller can distinguish "inadmissible input" from "numerical failure".
pub fn validate(cfg: &SystemConfig) -> Result<(ValidationReport, Option<ValidatedSystem>)> {
    let mut report = ValidationReport::default();
    let n = cfg.n;

    let shape_ok = n >= 2
        && n <= crate::exterior::MAX_DIM as usize
        && cfg.a.len() == n
        && cfg.a.iter().all(|row| row.len() == n)
        && cfg.b.len() == n;
    report.push(
        "shape",
        shape_ok,
        format!(
            "n = {n}, A is {}x{:?}, B has {} entries",
            cfg.a.len(),
            cfg.a.first().map(|r| r.len()).unwrap_or(0),
            cfg.b.len()
        ),
    );
    if !shape_ok {
        return Ok((report, None));
    }

    let mut a = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = cfg.a[i][j].0;
        }
    }
    let b: Vec<C64> = cfg.b.iter().map(|v| v.0).collect();

    let diag_norm = (0..n).map(|i| a[(i, i)].norm()).fold(0.0, f64::max);
    report.push(
        "a-offdiagonal",
        diag_norm == 0.0,
        format!("max |diagonal entry| = {diag_norm:.3e}"),
    );

    // eigen structure of A
    let mut eig: Option<(Vec<C64>, CMat)> = None;
    if diag_norm == 0.0 {
        let (mu, h) = eigen_decompose(&a)?;
        let mu_scale = mu.iter().map(|m| m.norm()).fold(1e-30, f64::max);

        let mut min_gap = f64::INFINITY;
        let mut min_int_dist = f64::INFINITY;
        let mut worst_pair = String::new();
        for j in 0..n {
            for k in (j + 1)..n {
                let d = mu[j] - mu[k];
                min_gap = min_gap.min(d.norm());
                let int_dist = if d.im.abs() > 1e-9 {
                    f64::INFINITY // complex gaps are never integers
                } else {
                    (d.re - d.re.round()).abs()
                };
                if int_dist < min_int_dist {
                    min_int_dist = int_dist;
                    worst_pair = format!("mu_{} - mu_{} = {}", j + 1, k + 1, d);
                }
            }
        }
        report.push(
            "mu-distinct",
            min_gap > 1e-9 * mu_scale,
            format!("min |mu_j - mu_k| = {min_gap:.6e}"),
        );
        report.push(
            "mu-gap-nonintegral",
            min_int_dist > 1e-9,
            format!("closest gap to an integer: {min_int_dist:.3e} ({worst_pair})"),
        );

        let mut re_gap = f64::INFINITY;
        for w in mu.windows(2) {
            re_gap = re_gap.min(w[1].re - w[0].re);
        }
        report.push(
            "mu-re-ordered",
            re_gap > 1e-10 * mu_scale,
            format!("sorted Re mu gaps >= {re_gap:.6e}"),
        );
        let min_re = mu.iter().map(|m| m.re.abs()).fold(f64::INFINITY, f64::min);
        report.push(
            "mu-re-nonzero",
            min_re > 1e-10 * mu_scale,
            format!("min |Re mu| = {min_re:.6e}"),
        );
        if min_re <= 0.05 && min_re > 1e-10 * mu_scale {
            report.warnings.push(format!(
                "smallest |Re mu| = {min_re:.3e}: matching at the origin is ill-conditioned"
            ));
        }
        eig = Some((mu, h));
    }

    // B geometry
    let b_scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let min_b = b.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    report.push(
        "b-nonzero",
        min_b > 1e-12 * b_scale.max(1.0),
        format!("min |b_j| = {min_b:.6e}"),
    );

    let mut b_gap = f64::INFINITY;
    for j in 0..n {
        for k in (j + 1)..n {
            b_gap = b_gap.min((b[j] - b[k]).norm());
        }
    }
    report.push(
        "b-distinct",
        b_gap > 1e-12 * b_scale,
        format!("min |b_j - b_k| = {b_gap:.6e}"),
    );

    let b_sum = b.iter().fold(ZERO, |s, &v| s + v).norm();
    report.push(
        "b-sum-zero",
        b_sum <= 1e-12 * b_scale.max(1.0),
        format!("|sum b_j| = {b_sum:.3e}"),
    );

    let mut min_area = f64::INFINITY;
    let mut collinear_witness = String::from("n < 3: vacuous");
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let area = ((b[j] - b[i]) * (b[k] - b[i]).conj()).im.abs();
                if area < min_area {
                    min_area = area;
                    collinear_witness = format!(
                        "triple ({}, {}, {}): |area| = {area:.3e}",
                        i + 1,
                        j + 1,
                        k + 1
                    );
                }
            }
        }
    }
    let collinear_ok = n < 3 || min_area > 1e-12 * b_scale.powi(3);
    report.push("b-noncollinear", collinear_ok, collinear_witness);

    report.push("p-exponent", cfg.p > 2.0, format!("p = {}", cfg.p));

    // potential family constraints
    let mut q_ok = true;
    let mut q_detail = String::from("empty potential");
    let mut q_model = PotentialModel::zero(n);
    for entry in &cfg.q {
        if entry.i < 1 || entry.i > n || entry.j < 1 || entry.j > n || entry.i == entry.j {
            q_ok = false;
            q_detail = format!(
                "entry indices ({}, {}) out of range or diagonal",
                entry.i, entry.j
            );
            break;
        }
        for t in &entry.terms {
            if !(t.a >= 1.0) || !(t.sigma > 0.0) {
                q_ok = false;
                q_detail = format!(
                    "term at ({}, {}): requires a >= 1 and sigma > 0, got a = {}, sigma = {}",
                    entry.i, entry.j, t.a, t.sigma
                );
                break;
            }
            q_model.push_term(
                entry.i - 1,
                entry.j - 1,
                PotTerm {
                    coeff: t.c.0,
                    exponent: t.a,
                    decay: t.sigma,
                },
            );
        }
        if !q_ok {
            break;
        }
        q_detail = format!("{} entries in the family", cfg.q.len());
    }
    report.push("potential-family", q_ok, q_detail);

    // sector geometry (needs the B checks to have passed)
    let b_checks_ok = report
        .checks
        .iter()
        .filter(|c| c.name.starts_with("b-"))
        .all(|c| c.passed);
    let mut geometry = None;
    if b_checks_ok {
        match sector_geometry(&b) {
            Ok(g) => {
                let even = g.rays.len() % 2 == 0 && g.rays.len() <= n * (n - 1);
                report.push(
                    "sector-geometry",
                    even,
                    format!("{} rays, {} sectors", g.rays.len(), g.sectors.len()),
                );
                for ray in &g.rays {
                    if ray.pairs.len() > 1 {
                        report.warnings.push(format!(
                            "ray at theta = {:.6} carries {} coinciding pair crossings",
                            ray.theta,
                            ray.pairs.len()
                        ));
                    }
                }
                geometry = Some(g);
            }
            Err(e) => report.push("sector-geometry", false, e.to_string()),
        }
    }

    if !report.passed() {
        return Ok((report, None));
    }
    let (mu, h) = eig.expect("eigen data present when all checks pass");
    let system = ValidatedSystem {
        n,
        a,
        b,
        q: q_model,
        p: cfg.p,
        label: cfg.label.clone(),
        mu,
        h,
        geometry: geometry.expect("geometry present when all checks pass"),
    };
    Ok((report, Some(system)))
}

/// Built-in example systems, kept in sync with the JSON files under
/// `systems/` by a test.
pub mod presets {
    use super::*;

    fn re(v: f64) -> CNum {
        CNum(cr(v))
    }

    /// n = 2 system with mu = -0.3, +0.3 and a two-term decaying potential.
    pub fn reference_n2() -> SystemConfig {
        SystemConfig {
            n: 2,
            a: vec![vec![re(0.0), re(0.09)], vec![re(1.0), re(0.0)]],
            b: vec![re(1.0), re(-1.0)],
            q: vec![
                PotentialEntryConfig {
                    i: 1,
                    j: 2,
                    terms: vec![PotentialTermConfig {
                        c: re(0.05),
                        a: 1.0,
                        sigma: 1.0,
                    }],
                },
                PotentialEntryConfig {
                    i: 2,
                    j: 1,
                    terms: vec![PotentialTermConfig {
                        c: re(0.05),
                        a: 2.0,
                        sigma: 1.0,
                    }],
                },
            ],
            p: 3.0,
            label: Some("reference-n2".into()),
        }
    }

    /// Same A and B with the zero potential.
    pub fn zero_potential_n2() -> SystemConfig {
        let mut cfg = reference_n2();
        cfg.q.clear();
        cfg.label = Some("zero-n2".into());
        cfg
    }

    /// n = 2 system whose potential satisfies the moment balance that makes
    /// the companion potential q-tilde integrable near the origin.
    pub fn balanced_n2() -> SystemConfig {
        let mut cfg = reference_n2();
        // see asymcheck: d(0) = 0 requires int_0^inf t^{-1} ([qhat_o, A])_kk dt = 0
        cfg.q = vec![
            PotentialEntryConfig {
                i: 1,
                j: 2,
                terms: vec![PotentialTermConfig {
                    c: re(-0.0045),
                    a: 1.0,
                    sigma: 1.0,
                }],
            },
            PotentialEntryConfig {
                i: 2,
                j: 1,
                terms: vec![PotentialTermConfig {
                    c: re(0.05),
                    a: 2.0,
                    sigma: 1.0,
                }],
            },
        ];
        cfg.label = Some("balanced-n2".into());
        cfg
    }

    /// n = 3 system: companion-form A with spread eigenvalues, B the cube
    /// roots of unity, one decaying potential entry.
    pub fn smoke_n3() -> SystemConfig {
        // A = companion matrix of (z + 0.45)(z - 0.15)(z - 0.30):
        // z^3 - p1 z^2 - p2 z - p3 with p1 = 0, p2 = 0.1575, p3 = -0.02025
        let half = 3f64.sqrt() / 2.0;
        SystemConfig {
            n: 3,
            a: vec![
                vec![re(0.0), re(0.0), re(-0.02025)],
                vec![re(1.0), re(0.0), re(0.1575)],
                vec![re(0.0), re(1.0), re(0.0)],
            ],
            b: vec![re(1.0), CNum(c(-0.5, half)), CNum(c(-0.5, -half))],
            q: vec![PotentialEntryConfig {
                i: 1,
                j: 2,
                terms: vec![PotentialTermConfig {
                    c: re(0.03),
                    a: 1.0,
                    sigma: 1.0,
                }],
            }],
            p: 3.0,
            label: Some("smoke-n3".into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn validated(cfg: &SystemConfig) -> ValidatedSystem {
        let (report, sys) = validate(cfg).unwrap();
        assert!(report.passed(), "unexpected failures:\n{report}");
        sys.unwrap()
    }

    #[test]
    fn reference_system_eigen_structure() {
        let sys = validated(&presets::reference_n2());
        assert!((sys.mu[0] - cr(-0.3)).norm() < 1e-12);
        assert!((sys.mu[1] - cr(0.3)).norm() < 1e-12);
        assert!((sys.h.det() - ONE).norm() < 1e-12);
        for k in 0..2 {
            let h = sys.h.col(k);
            let ah = sys.a.matvec(&h);
            for i in 0..2 {
                assert!((ah[i] - sys.mu[k] * h[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn companion_matrix_recovers_prescribed_spectrum() {
        // trace-zero spectra keep the companion matrix off-diagonal
        let spectra: [&[C64]; 2] = [
            &[cr(-0.45), cr(0.15), cr(0.30)],
            &[c(-0.4, -0.1), c(0.1, 0.3), c(0.3, -0.2)],
        ];
        for mu_true in spectra {
            let n = mu_true.len();
            // elementary symmetric sums for the companion's last column
            let e1: C64 = mu_true.iter().copied().fold(ZERO, |s, v| s + v);
            assert!(e1.norm() < 1e-15);
            let e2 = mu_true[0] * mu_true[1] + mu_true[0] * mu_true[2] + mu_true[1] * mu_true[2];
            let e3 = mu_true[0] * mu_true[1] * mu_true[2];
            let mut a = CMat::zeros(n, n);
            a[(1, 0)] = ONE;
            a[(2, 1)] = ONE;
            a[(0, 2)] = e3;
            a[(1, 2)] = -e2;
            // char poly: z^3 - e1 z^2 + e2 z - e3 with e1 = 0
            let (mu, h) = eigen_decompose(&a).unwrap();
            let mut want = mu_true.to_vec();
            want.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
            for (got, want) in mu.iter().zip(want.iter()) {
                assert!((got - want).norm() < 1e-9, "{got} vs {want}");
            }
            assert!((h.det() - ONE).norm() < 1e-10);
        }
    }

    #[test]
    fn integer_gap_rejected_by_name() {
        let mut cfg = presets::reference_n2();
        cfg.a = vec![vec![CNum(ZERO), CNum(ONE)], vec![CNum(ONE), CNum(ZERO)]];
        let (report, sys) = validate(&cfg).unwrap();
        assert!(sys.is_none());
        let failed = report.first_failure().unwrap();
        assert_eq!(failed.name, "mu-gap-nonintegral");
    }

    #[test]
    fn b_violations_detected() {
        let mut cfg = presets::reference_n2();
        cfg.b = vec![CNum(cr(1.0)), CNum(cr(-0.5))];
        let (report, sys) = validate(&cfg).unwrap();
        assert!(sys.is_none());
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "b-sum-zero" && !c.passed));

        // collinear triple on the real axis
        let mut cfg3 = presets::smoke_n3();
        cfg3.b = vec![CNum(cr(1.0)), CNum(cr(2.0)), CNum(cr(-3.0))];
        let (report, sys) = validate(&cfg3).unwrap();
        assert!(sys.is_none());
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "b-noncollinear" && !c.passed));
    }

    #[test]
    fn two_sector_geometry_of_real_pair() {
        let sys = validated(&presets::reference_n2());
        let g = &sys.geometry;
        assert_eq!(g.rays.len(), 2);
        assert!((g.rays[0].theta - PI / 2.0).abs() < 1e-12);
        assert!((g.rays[1].theta - 1.5 * PI).abs() < 1e-12);
        // sector 1 is the right half plane: ordering (-1, +1)
        let right = &g.sectors[1];
        assert_eq!(right.order, vec![1, 0]);
        let f = right.f_matrix(2);
        assert_eq!(f[(1, 0)], ONE);
        assert_eq!(f[(0, 1)], ONE);
        assert_eq!(right.f_det(), -1.0);
        // sector 0 is the left half plane: identity ordering
        assert_eq!(g.sectors[0].order, vec![0, 1]);
        assert_eq!(g.sectors[0].f_det(), 1.0);
        // locations
        assert_eq!(g.locate(cr(5.0)), Location::Interior(1));
        assert_eq!(g.locate(cr(-5.0)), Location::Interior(0));
        assert_eq!(g.locate(c(0.0, 2.0)), Location::OnRay(0));
        let (minus, plus) = g.ray_sectors(0);
        assert_eq!((minus, plus), (1, 0));
    }

    #[test]
    fn cube_roots_give_six_sectors() {
        let sys = validated(&presets::smoke_n3());
        assert_eq!(sys.geometry.rays.len(), 6);
        assert_eq!(sys.geometry.sectors.len(), 6);
        // scale invariance of the geometry
        let b2: Vec<C64> = sys.b.iter().map(|v| v * cr(2.0)).collect();
        let g2 = sector_geometry(&b2).unwrap();
        for (r1, r2) in sys.geometry.rays.iter().zip(g2.rays.iter()) {
            assert!((r1.theta - r2.theta).abs() < 1e-12);
        }
        for (s1, s2) in sys.geometry.sectors.iter().zip(g2.sectors.iter()) {
            assert_eq!(s1.order, s2.order);
        }
    }

    #[test]
    fn random_geometries_have_valid_orderings() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut accepted = 0;
        while accepted < 100 {
            let b1 = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let b2 = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let b3 = -b1 - b2;
            let b = [b1, b2, b3];
            let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let area = ((b2 - b1) * (b3 - b1).conj()).im.abs();
            let distinct = b
                .iter()
                .enumerate()
                .all(|(i, x)| b.iter().skip(i + 1).all(|y| (x - y).norm() > 1e-3));
            if area < 1e-3 * scale.powi(3) || !distinct || b.iter().any(|v| v.norm() < 1e-3) {
                continue;
            }
            accepted += 1;
            let g = sector_geometry(&b).unwrap();
            assert!(
                g.rays.len() % 2 == 0 && g.rays.len() <= 6,
                "ray count {}",
                g.rays.len()
            );
            for s in &g.sectors {
                for _ in 0..5 {
                    let t = rng.gen_range(0.0..1.0);
                    let theta = s.theta_lo + (0.01 + 0.98 * t) * (s.theta_hi - s.theta_lo);
                    let w = C64::from_polar(1.0, theta);
                    let r = s.r_values(&b);
                    for pair in r.windows(2) {
                        assert!(
                            (pair[0] * w).re < (pair[1] * w).re,
                            "ordering violated inside sector"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn potential_evaluation_and_derivative() {
        let sys = validated(&presets::reference_n2());
        let q1 = sys.q.eval(1.0);
        assert!((q1[(0, 1)] - cr(0.05 * (-1.0f64).exp())).norm() < 1e-15);
        assert!((q1[(1, 0)] - cr(0.05 * (-1.0f64).exp())).norm() < 1e-15);
        assert_eq!(q1[(0, 0)], ZERO);
        // q(0) = 0 and q'(0) picks out the a = 1 terms
        let q0 = sys.q.eval(0.0);
        assert_eq!(q0.norm_max(), 0.0);
        let dq0 = sys.q.eval_deriv(0.0);
        assert!((dq0[(0, 1)] - cr(0.05)).norm() < 1e-15);
        assert!((dq0[(1, 0)]).norm() < 1e-15);
        // empty potential evaluates to zero
        let zero = PotentialModel::zero(2);
        assert_eq!(zero.eval(1.3).norm_max(), 0.0);
        assert!(zero.is_zero());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let sys = validated(&presets::reference_n2());
        let x = 0.8;
        let h = 1e-6;
        let num = sys
            .q
            .eval(x + h)
            .sub(&sys.q.eval(x - h))
            .scale(cr(1.0 / (2.0 * h)));
        let ana = sys.q.eval_deriv(x);
        assert!(num.sub(&ana).norm_max() < 1e-9);
    }

    #[test]
    fn config_json_round_trip() {
        for cfg in [
            presets::reference_n2(),
            presets::smoke_n3(),
            presets::balanced_n2(),
        ] {
            let text = cfg.to_json();
            let back = SystemConfig::from_json(&text).unwrap();
            assert_eq!(cfg, back);
        }
        assert!(matches!(
            SystemConfig::from_json("{not json"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn validation_deterministic_and_idempotent() {
        let cfg = presets::reference_n2();
        let (r1, s1) = validate(&cfg).unwrap();
        let (r2, s2) = validate(&cfg).unwrap();
        assert_eq!(r1.checks.len(), r2.checks.len());
        for (c1, c2) in r1.checks.iter().zip(r2.checks.iter()) {
            assert_eq!(
                (&c1.name, c1.passed, &c1.detail),
                (&c2.name, c2.passed, &c2.detail)
            );
        }
        let (s1, s2) = (s1.unwrap(), s2.unwrap());
        for k in 0..2 {
            assert_eq!(s1.mu[k], s2.mu[k]);
            for i in 0..2 {
                assert_eq!(s1.h[(i, k)], s2.h[(i, k)]);
            }
        }
    }

    #[test]
    fn smoke_n3_passes_validation() {
        let sys = validated(&presets::smoke_n3());
        let want = [cr(-0.45), cr(0.15), cr(0.30)];
        for (got, want) in sys.mu.iter().zip(want.iter()) {
            assert!((got - want).norm() < 1e-10, "{got} vs {want}");
        }
    }
}
