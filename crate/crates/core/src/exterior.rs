//! Minimal exterior-algebra kernel over C^n, n <= 8.
//!
//! Grade-m tensors are stored sparsely as maps from ordered multi-indices
//! to complex coefficients. Two extensions of a matrix V to the grade-m
//! space appear throughout the solver:
//!
//! * the derivation extension `V^(m)`, acting as a sum over factors
//!   (this is the coefficient matrix of the induced compound ODE), and
//! * the multiplicative extension, `V(h_1 ^ ... ^ h_m) = (V h_1) ^ ... ^ (V h_m)`,
//!   whose matrix entries are the m x m minors of V.
//!
//! Multi-index entries are 1-based to match the usual component notation;
//! the translation to 0-based matrix indices happens only inside this file.

use crate::linalg::{CMat, C64, ONE, ZERO};
use std::collections::BTreeMap;

pub const MAX_DIM: u8 = 8;

/// Ordered multi-index `alpha = (alpha_1 < ... < alpha_m)` with entries in `1..=n`.
///
/// `Ord` is derived, giving lexicographic order on the entry list; within a
/// fixed grade this is the canonical enumeration order used everywhere.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    entries: Vec<u8>,
    n: u8,
}

impl MultiIndex {
    /// Strictly increasing entries required.
    pub fn new(entries: &[u8], n: u8) -> MultiIndex {
        assert!(
            n >= 1 && n <= MAX_DIM,
            "ambient dimension {n} out of range 1..=8"
        );
        for w in entries.windows(2) {
            assert!(w[0] < w[1], "multi-index entries must strictly increase");
        }
        if let (Some(&first), Some(&last)) = (entries.first(), entries.last()) {
            assert!(first >= 1 && last <= n, "multi-index entry out of 1..={n}");
        }
        MultiIndex {
            entries: entries.to_vec(),
            n,
        }
    }

    /// Sort an unordered tuple, returning the sign of the sorting permutation,
    /// or `None` when an entry repeats (the wedge vanishes).
    pub fn from_unsorted(entries: &[u8], n: u8) -> Option<(MultiIndex, i32)> {
        let mut v = entries.to_vec();
        // insertion sort, counting transpositions
        let mut sign = 1i32;
        for i in 1..v.len() {
            let mut j = i;
            while j > 0 && v[j - 1] > v[j] {
                v.swap(j - 1, j);
                sign = -sign;
                j -= 1;
            }
        }
        if v.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        Some((MultiIndex::new(&v, n), sign))
    }

    /// Empty index (grade 0).
    pub fn empty(n: u8) -> MultiIndex {
        MultiIndex::new(&[], n)
    }

    /// `(1, 2, ..., m)` - the "bottom" index of grade m.
    pub fn bottom(m: u8, n: u8) -> MultiIndex {
        MultiIndex::new(&(1..=m).collect::<Vec<_>>(), n)
    }

    /// `(k, k+1, ..., n)` - the "top" index starting at k.
    pub fn from_k_to_n(k: u8, n: u8) -> MultiIndex {
        MultiIndex::new(&(k..=n).collect::<Vec<_>>(), n)
    }

    pub fn grade(&self) -> usize {
        self.entries.len()
    }

    pub fn n(&self) -> u8 {
        self.n
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    pub fn contains(&self, i: u8) -> bool {
        self.entries.binary_search(&i).is_ok()
    }

    /// Remove one entry (must be present).
    pub fn without(&self, i: u8) -> MultiIndex {
        let entries: Vec<u8> = self.entries.iter().copied().filter(|&e| e != i).collect();
        assert_eq!(
            entries.len(),
            self.entries.len() - 1,
            "entry {i} not present"
        );
        MultiIndex { entries, n: self.n }
    }

    /// Insert one entry (must be absent); sign ignored here.
    pub fn with(&self, i: u8) -> MultiIndex {
        assert!(!self.contains(i));
        let mut entries = self.entries.clone();
        entries.push(i);
        entries.sort_unstable();
        MultiIndex { entries, n: self.n }
    }

    /// Complementary ordered multi-index `alpha'`.
    pub fn complement(&self) -> MultiIndex {
        let entries: Vec<u8> = (1..=self.n).filter(|i| !self.contains(*i)).collect();
        MultiIndex { entries, n: self.n }
    }

    /// `chi_alpha = |e_alpha ^ e_alpha'|`: the sign of the permutation
    /// `(alpha, alpha')` of `(1..n)`, computed by counting inversions
    /// across the two blocks.
    pub fn complement_sign(&self) -> i32 {
        let comp = self.complement();
        let mut inv = 0usize;
        for &a in &self.entries {
            for &b in &comp.entries {
                if a > b {
                    inv += 1;
                }
            }
        }
        if inv % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Sum of `vals` over the index entries: `a_alpha = sum_{j in alpha} a_j`.
    pub fn sum_over(&self, vals: &[C64]) -> C64 {
        self.entries
            .iter()
            .map(|&j| vals[(j - 1) as usize])
            .fold(ZERO, |s, v| s + v)
    }

    /// Product of `vals` over the index entries: `a^alpha`.
    pub fn prod_over(&self, vals: &[C64]) -> C64 {
        self.entries
            .iter()
            .map(|&j| vals[(j - 1) as usize])
            .fold(ONE, |s, v| s * v)
    }
}

/// Sum of the first k values (k = 0 gives 0).
pub fn prefix_sum(vals: &[C64], k: usize) -> C64 {
    vals[..k].iter().fold(ZERO, |s, &v| s + v)
}

/// Sum of values from position k (1-based) to the end.
pub fn suffix_sum(vals: &[C64], k: usize) -> C64 {
    vals[k - 1..].iter().fold(ZERO, |s, &v| s + v)
}

/// Sparse grade-m tensor over C^n.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedTensor {
    n: u8,
    grade: u8,
    coeffs: BTreeMap<MultiIndex, C64>,
}

impl GradedTensor {
    pub fn zero(n: u8, grade: u8) -> GradedTensor {
        assert!(grade <= n);
        GradedTensor {
            n,
            grade,
            coeffs: BTreeMap::new(),
        }
    }

    /// Grade-0 tensor with the given value.
    pub fn scalar(n: u8, value: C64) -> GradedTensor {
        let mut t = GradedTensor::zero(n, 0);
        if value != ZERO {
            t.coeffs.insert(MultiIndex::empty(n), value);
        }
        t
    }

    /// Basis tensor `e_alpha` with coefficient 1.
    pub fn basis(alpha: &MultiIndex) -> GradedTensor {
        let mut t = GradedTensor::zero(alpha.n(), alpha.grade() as u8);
        t.coeffs.insert(alpha.clone(), ONE);
        t
    }

    /// Grade-1 tensor from a coordinate vector.
    pub fn from_vector(v: &[C64], n: u8) -> GradedTensor {
        assert_eq!(v.len(), n as usize);
        let mut t = GradedTensor::zero(n, 1);
        for (i, &x) in v.iter().enumerate() {
            if x != ZERO {
                t.coeffs.insert(MultiIndex::new(&[(i + 1) as u8], n), x);
            }
        }
        t
    }

    pub fn n(&self) -> u8 {
        self.n
    }

    pub fn grade(&self) -> u8 {
        self.grade
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> C64 {
        self.coeffs.get(alpha).copied().unwrap_or(ZERO)
    }

    pub fn set_coeff(&mut self, alpha: MultiIndex, v: C64) {
        assert_eq!(alpha.grade() as u8, self.grade);
        assert_eq!(alpha.n(), self.n);
        if v == ZERO {
            self.coeffs.remove(&alpha);
        } else {
            self.coeffs.insert(alpha, v);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &C64)> {
        self.coeffs.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `|h|`: coefficient of the top form (grade must be n).
    pub fn top_coeff(&self) -> C64 {
        assert_eq!(self.grade, self.n, "top coefficient of a non-top tensor");
        self.coeff(&MultiIndex::bottom(self.n, self.n))
    }

    /// `||h|| = sum |h_alpha|`.
    pub fn norm_one(&self) -> f64 {
        self.coeffs.values().map(|v| v.norm()).sum()
    }

    pub fn scale(&self, s: C64) -> GradedTensor {
        let mut out = GradedTensor::zero(self.n, self.grade);
        if s == ZERO {
            return out;
        }
        for (k, v) in &self.coeffs {
            out.coeffs.insert(k.clone(), v * s);
        }
        out
    }

    pub fn add_scaled(&self, other: &GradedTensor, s: C64) -> GradedTensor {
        assert_eq!(self.n, other.n);
        assert_eq!(self.grade, other.grade);
        let mut out = self.clone();
        for (k, v) in &other.coeffs {
            let nv = out.coeff(k) + s * v;
            out.set_coeff(k.clone(), nv);
        }
        out
    }

    pub fn sub(&self, other: &GradedTensor) -> GradedTensor {
        self.add_scaled(other, -ONE)
    }

    /// Wedge product. Panics if the grades overflow the ambient dimension.
    pub fn wedge(&self, rhs: &GradedTensor) -> GradedTensor {
        assert_eq!(self.n, rhs.n, "mixed ambient dimensions");
        let g = self.grade + rhs.grade;
        assert!(
            g <= self.n,
            "wedge grade {} exceeds dimension {}",
            g,
            self.n
        );
        let mut out = GradedTensor::zero(self.n, g);
        for (a, &ca) in &self.coeffs {
            for (b, &cb) in &rhs.coeffs {
                if let Some((merged, sign)) = merge_disjoint(a, b) {
                    let add = ca * cb * (sign as f64);
                    let nv = out.coeff(&merged) + add;
                    out.set_coeff(merged, nv);
                }
            }
        }
        out
    }
}

/// Merge two ordered multi-indices; the sign is `(-1)^{#inversions across}`,
/// i.e. the parity of moving the concatenation `(a, b)` into sorted order.
/// Returns `None` when the indices share an entry.
fn merge_disjoint(a: &MultiIndex, b: &MultiIndex) -> Option<(MultiIndex, i32)> {
    let mut inv = 0usize;
    for &x in a.entries() {
        for &y in b.entries() {
            if x == y {
                return None;
            }
            if x > y {
                inv += 1;
            }
        }
    }
    let mut entries = Vec::with_capacity(a.grade() + b.grade());
    entries.extend_from_slice(a.entries());
    entries.extend_from_slice(b.entries());
    entries.sort_unstable();
    let sign = if inv % 2 == 0 { 1 } else { -1 };
    Some((MultiIndex { entries, n: a.n() }, sign))
}

/// Derivation extension `V^(m)` applied to a tensor:
/// `V^(m)(u_1 ^ ... ^ u_m) = sum_j u_1 ^ ... ^ V u_j ^ ... ^ u_m`.
pub fn derivation_apply(v: &CMat, t: &GradedTensor) -> GradedTensor {
    let n = t.n();
    assert_eq!(v.rows(), n as usize);
    assert_eq!(v.cols(), n as usize);
    let mut out = GradedTensor::zero(n, t.grade());
    for (alpha, &coef) in t.iter() {
        for (pos, &aj) in alpha.entries().iter().enumerate() {
            for i in 1..=n {
                let vij = v[((i - 1) as usize, (aj - 1) as usize)];
                if vij == ZERO {
                    continue;
                }
                if i != aj && alpha.contains(i) {
                    continue; // repeated factor, wedge vanishes
                }
                let mut raw: Vec<u8> = alpha.entries().to_vec();
                raw[pos] = i;
                if let Some((beta, sign)) = MultiIndex::from_unsorted(&raw, n) {
                    let nv = out.coeff(&beta) + coef * vij * (sign as f64);
                    out.set_coeff(beta, nv);
                }
            }
        }
    }
    out
}

/// Multiplicative extension applied to a tensor: on a basis index the
/// coefficient at `beta` is the minor `det V[beta, alpha]`.
pub fn multiplicative_apply(v: &CMat, t: &GradedTensor) -> GradedTensor {
    let n = t.n();
    let m = t.grade() as usize;
    assert_eq!(v.rows(), n as usize);
    let basis = CompoundBasis::new(n, t.grade());
    let mut out = GradedTensor::zero(n, t.grade());
    for (alpha, &coef) in t.iter() {
        for beta in &basis.list {
            let mut minor = CMat::zeros(m, m);
            for (r, &bi) in beta.entries().iter().enumerate() {
                for (c, &aj) in alpha.entries().iter().enumerate() {
                    minor[(r, c)] = v[((bi - 1) as usize, (aj - 1) as usize)];
                }
            }
            let d = if m == 0 { ONE } else { minor.det() };
            if d != ZERO {
                let nv = out.coeff(beta) + coef * d;
                out.set_coeff(beta.clone(), nv);
            }
        }
    }
    out
}

/// Enumerated basis of the grade-m component, in lexicographic order.
/// Provides the tensor <-> coefficient-vector translation used by the
/// compound ODE integrator.
pub struct CompoundBasis {
    pub n: u8,
    pub grade: u8,
    pub list: Vec<MultiIndex>,
    pos: BTreeMap<MultiIndex, usize>,
}

impl CompoundBasis {
    pub fn new(n: u8, grade: u8) -> CompoundBasis {
        assert!(grade <= n);
        let mut list = Vec::new();
        let mut current: Vec<u8> = Vec::new();
        enumerate_indices(n, grade, 1, &mut current, &mut list);
        let pos = list
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, mi)| (mi, i))
            .collect();
        CompoundBasis {
            n,
            grade,
            list,
            pos,
        }
    }

    pub fn dim(&self) -> usize {
        self.list.len()
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> usize {
        self.pos[alpha]
    }

    pub fn to_vec(&self, t: &GradedTensor) -> Vec<C64> {
        assert_eq!(t.grade(), self.grade);
        let mut out = vec![ZERO; self.dim()];
        for (alpha, &v) in t.iter() {
            out[self.pos[alpha]] = v;
        }
        out
    }

    pub fn from_vec(&self, v: &[C64]) -> GradedTensor {
        assert_eq!(v.len(), self.dim());
        let mut t = GradedTensor::zero(self.n, self.grade);
        for (i, &x) in v.iter().enumerate() {
            if x != ZERO {
                t.set_coeff(self.list[i].clone(), x);
            }
        }
        t
    }

    /// Matrix of the derivation extension `V^(m)` in this basis.
    pub fn derivation_matrix(&self, v: &CMat) -> CMat {
        let d = self.dim();
        let mut m = CMat::zeros(d, d);
        for (j, alpha) in self.list.iter().enumerate() {
            let col = derivation_apply(v, &GradedTensor::basis(alpha));
            for (beta, &val) in col.iter() {
                m[(self.pos[beta], j)] = val;
            }
        }
        m
    }

    /// Diagonal of the derivation extension of a diagonal matrix:
    /// entry at `alpha` is `sum_{j in alpha} d_j`.
    pub fn diag_sums(&self, d: &[C64]) -> Vec<C64> {
        self.list.iter().map(|alpha| alpha.sum_over(d)).collect()
    }

    /// Sparse action table for the derivation extension, independent of the
    /// matrix being extended: `out[dst] += sign * v[(row, col)] * u[src]`
    /// summed over all entries reproduces `V^(m) u`. Lets an integrator apply
    /// a time-dependent matrix without rebuilding the extension each step.
    pub fn derivation_structure(&self) -> Vec<DerivationEntry> {
        let mut table = Vec::new();
        for (src, alpha) in self.list.iter().enumerate() {
            let letters = alpha.entries();
            for (p, &a_p) in letters.iter().enumerate() {
                for i in 1..=self.n {
                    if i != a_p && alpha.contains(i) {
                        continue;
                    }
                    let mut raw: Vec<u8> = letters.to_vec();
                    raw[p] = i;
                    let (beta, sign) =
                        MultiIndex::from_unsorted(&raw, self.n).expect("distinct by construction");
                    table.push(DerivationEntry {
                        src,
                        dst: self.pos[&beta],
                        row: (i - 1) as usize,
                        col: (a_p - 1) as usize,
                        sign: sign as f64,
                    });
                }
            }
        }
        table
    }
}

/// One term of a derivation-extension action; see
/// [`CompoundBasis::derivation_structure`].
pub struct DerivationEntry {
    pub src: usize,
    pub dst: usize,
    pub row: usize,
    pub col: usize,
    pub sign: f64,
}

fn enumerate_indices(
    n: u8,
    grade: u8,
    start: u8,
    current: &mut Vec<u8>,
    out: &mut Vec<MultiIndex>,
) {
    if current.len() == grade as usize {
        out.push(MultiIndex::new(current, n));
        return;
    }
    let remaining = grade as usize - current.len();
    for i in start..=(n + 1 - remaining as u8) {
        current.push(i);
        enumerate_indices(n, grade, i + 1, current, out);
        current.pop();
    }
}

/// Recover the off-diagonal matrix entry `V_{ik}` from wedge data alone.
///
/// For `i > k` the identity wedges the derivation extension of the bottom
/// index with the complement of `alpha = (1..k-1, i)`; for `i < k` it wedges
/// the grade-(n-k+1) extension of the top index `(k..n)` with the complement
/// of `beta = (i, k+1..n)`. On the diagonal both identities degenerate to a
/// partial trace, so `i = k` is rejected. `i`, `k` are 1-based.
pub fn entry_extract(v: &CMat, i: u8, k: u8) -> C64 {
    let n = v.rows() as u8;
    assert!(i >= 1 && i <= n && k >= 1 && k <= n);
    assert!(i != k, "only off-diagonal entries are wedge-extractable");
    if i > k {
        // alpha = (1, ..., k-1, i)
        let mut raw: Vec<u8> = (1..k).collect();
        raw.push(i);
        let (alpha, _) = MultiIndex::from_unsorted(&raw, n).expect("distinct by construction");
        let chi = alpha.complement_sign();
        let ext = derivation_apply(v, &GradedTensor::basis(&MultiIndex::bottom(k, n)));
        let w = ext.wedge(&GradedTensor::basis(&alpha.complement()));
        w.top_coeff() * (chi as f64)
    } else {
        // beta = (i, k+1, ..., n)
        let mut raw: Vec<u8> = vec![i];
        raw.extend(k + 1..=n);
        let (beta, _) = MultiIndex::from_unsorted(&raw, n).expect("distinct by construction");
        let chi = beta.complement_sign();
        let ext = derivation_apply(v, &GradedTensor::basis(&MultiIndex::from_k_to_n(k, n)));
        let w = ext.wedge(&GradedTensor::basis(&beta.complement()));
        w.top_coeff() * (chi as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, cr};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cmat(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        m
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    /// Independent sign oracle: parity of a bubble sort of the concatenation.
    fn bubble_sign(seq: &[u8]) -> Option<i32> {
        let mut v = seq.to_vec();
        let mut sign = 1i32;
        let len = v.len();
        for _ in 0..len {
            for j in 1..len {
                if v[j - 1] > v[j] {
                    v.swap(j - 1, j);
                    sign = -sign;
                }
            }
        }
        if v.windows(2).any(|w| w[0] == w[1]) {
            None
        } else {
            Some(sign)
        }
    }

    /// Oracle wedge of grade-1 vectors: determinant expansion by brute force
    /// over all choices (computed via permanent-style recursion with signs).
    fn oracle_wedge_vectors(vs: &[Vec<C64>], n: u8) -> GradedTensor {
        let m = vs.len() as u8;
        let basis = CompoundBasis::new(n, m);
        let mut t = GradedTensor::zero(n, m);
        for alpha in &basis.list {
            // coefficient = det of the submatrix rows alpha, columns = vectors
            let k = m as usize;
            let mut minor = CMat::zeros(k, k);
            for (r, &ai) in alpha.entries().iter().enumerate() {
                for (cix, v) in vs.iter().enumerate() {
                    minor[(r, cix)] = v[(ai - 1) as usize];
                }
            }
            t.set_coeff(alpha.clone(), minor.det());
        }
        t
    }

    fn tensors_close(a: &GradedTensor, b: &GradedTensor, tol: f64) -> bool {
        a.sub(b).norm_one() <= tol * (1.0 + a.norm_one().max(b.norm_one()))
    }

    #[test]
    fn wedge_associative_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..=5u8 {
            let u = GradedTensor::from_vector(&random_vec(&mut rng, n as usize), n);
            let v = GradedTensor::from_vector(&random_vec(&mut rng, n as usize), n);
            let uv = u.wedge(&v);
            let vu = v.wedge(&u);
            assert!(
                tensors_close(&uv, &vu.scale(cr(-1.0)), 1e-14),
                "antisymmetry n={n}"
            );
            assert!(u.wedge(&u).norm_one() < 1e-14, "u^u=0");
            if n >= 3 {
                let w = GradedTensor::from_vector(&random_vec(&mut rng, n as usize), n);
                let left = u.wedge(&v).wedge(&w);
                let right = u.wedge(&v.wedge(&w));
                assert!(tensors_close(&left, &right, 1e-13), "associativity n={n}");
            }
        }
    }

    #[test]
    fn wedge_matches_minor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 2..=6u8 {
            for m in 1..=n.min(4) {
                let vs: Vec<Vec<C64>> = (0..m).map(|_| random_vec(&mut rng, n as usize)).collect();
                let mut w = GradedTensor::scalar(n, cr(1.0));
                for v in &vs {
                    w = w.wedge(&GradedTensor::from_vector(v, n));
                }
                let oracle = oracle_wedge_vectors(&vs, n);
                assert!(tensors_close(&w, &oracle, 1e-12), "n={n} m={m}");
            }
        }
    }

    #[test]
    fn basis_wedge_reorder_sign() {
        // e_(1,3) ^ e_2 = -e_(1,2,3)
        let a = GradedTensor::basis(&MultiIndex::new(&[1, 3], 3));
        let b = GradedTensor::basis(&MultiIndex::new(&[2], 3));
        let w = a.wedge(&b);
        assert_eq!(w.coeff(&MultiIndex::new(&[1, 2, 3], 3)), cr(-1.0));
    }

    #[test]
    fn merge_sign_matches_bubble_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let n = rng.gen_range(2..=8u8);
            let ga = rng.gen_range(1..=n.min(4));
            let gb = rng.gen_range(1..=(n - ga).max(1)).min(n - ga);
            if gb == 0 {
                continue;
            }
            // random subsets
            let mut pool: Vec<u8> = (1..=n).collect();
            for i in (1..pool.len()).rev() {
                let j = rng.gen_range(0..=i);
                pool.swap(i, j);
            }
            let mut a: Vec<u8> = pool[..ga as usize].to_vec();
            let mut b: Vec<u8> = pool[ga as usize..(ga + gb) as usize].to_vec();
            a.sort_unstable();
            b.sort_unstable();
            let concat: Vec<u8> = a.iter().chain(b.iter()).copied().collect();
            let oracle = bubble_sign(&concat).unwrap();
            let (_, sign) =
                merge_disjoint(&MultiIndex::new(&a, n), &MultiIndex::new(&b, n)).unwrap();
            assert_eq!(sign, oracle);
        }
    }

    #[test]
    fn complement_sign_frozen_case() {
        // n=4, alpha=(1,3): (1,3,2,4) has one inversion
        let alpha = MultiIndex::new(&[1, 3], 4);
        assert_eq!(alpha.complement().entries(), &[2, 4]);
        assert_eq!(alpha.complement_sign(), -1);
        // chi of the bottom index is always +1
        for n in 1..=8u8 {
            for m in 0..=n {
                assert_eq!(MultiIndex::bottom(m, n).complement_sign(), 1);
            }
        }
    }

    #[test]
    fn complement_sign_matches_bubble_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..300 {
            let n = rng.gen_range(1..=8u8);
            let m = rng.gen_range(0..=n);
            let mut pool: Vec<u8> = (1..=n).collect();
            for i in (1..pool.len()).rev() {
                let j = rng.gen_range(0..=i);
                pool.swap(i, j);
            }
            let mut a = pool[..m as usize].to_vec();
            a.sort_unstable();
            let alpha = MultiIndex::new(&a, n);
            let full: Vec<u8> = alpha
                .entries()
                .iter()
                .chain(alpha.complement().entries().iter())
                .copied()
                .collect();
            assert_eq!(alpha.complement_sign(), bubble_sign(&full).unwrap());
        }
    }

    #[test]
    fn derivation_matches_leibniz_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=5u8 {
            let v = random_cmat(&mut rng, n as usize);
            let x = random_vec(&mut rng, n as usize);
            let y = random_vec(&mut rng, n as usize);
            let tx = GradedTensor::from_vector(&x, n);
            let ty = GradedTensor::from_vector(&y, n);
            let txy = tx.wedge(&ty);
            let lhs = derivation_apply(&v, &txy);
            let vx = GradedTensor::from_vector(&v.matvec(&x), n);
            let vy = GradedTensor::from_vector(&v.matvec(&y), n);
            let rhs = vx.wedge(&ty).add_scaled(&tx.wedge(&vy), cr(1.0));
            assert!(tensors_close(&lhs, &rhs, 1e-12), "Leibniz n={n}");
        }
    }

    #[test]
    fn derivation_on_basis_pair_explicit() {
        // V^(2) e_(1,3) = (V e_1) ^ e_3 + e_1 ^ (V e_3) for a random 4x4 V
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v = random_cmat(&mut rng, 4);
        let alpha = MultiIndex::new(&[1, 3], 4);
        let got = derivation_apply(&v, &GradedTensor::basis(&alpha));
        let e1 = GradedTensor::basis(&MultiIndex::new(&[1], 4));
        let e3 = GradedTensor::basis(&MultiIndex::new(&[3], 4));
        let v1 = GradedTensor::from_vector(&v.col(0), 4);
        let v3 = GradedTensor::from_vector(&v.col(2), 4);
        let want = v1.wedge(&e3).add_scaled(&e1.wedge(&v3), cr(1.0));
        assert!(tensors_close(&got, &want, 1e-13));
    }

    #[test]
    fn multiplicative_top_grade_is_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in 2..=5u8 {
            let v = random_cmat(&mut rng, n as usize);
            let top = GradedTensor::basis(&MultiIndex::bottom(n, n));
            let out = multiplicative_apply(&v, &top);
            assert!((out.top_coeff() - v.det()).norm() < 1e-11, "n={n}");
        }
    }

    #[test]
    fn multiplicative_is_wedge_of_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 5u8;
        let v = random_cmat(&mut rng, n as usize);
        let alpha = MultiIndex::new(&[2, 4], n);
        let got = multiplicative_apply(&v, &GradedTensor::basis(&alpha));
        let c2 = GradedTensor::from_vector(&v.col(1), n);
        let c4 = GradedTensor::from_vector(&v.col(3), n);
        let want = c2.wedge(&c4);
        assert!(tensors_close(&got, &want, 1e-12));
    }

    #[test]
    fn derivation_structure_matches_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for n in 2u8..=5 {
            let v = random_cmat(&mut rng, n as usize);
            for grade in 1..=n {
                let basis = CompoundBasis::new(n, grade);
                let table = basis.derivation_structure();
                let u = random_vec(&mut rng, basis.dim());
                let mut got = vec![ZERO; basis.dim()];
                for e in &table {
                    got[e.dst] += v[(e.row, e.col)] * e.sign * u[e.src];
                }
                let want = basis.derivation_matrix(&v).matvec(&u);
                let err: f64 = got
                    .iter()
                    .zip(&want)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                assert!(err < 1e-12, "n={n} grade={grade} err={err}");
            }
        }
    }

    #[test]
    fn conjugation_by_permutation_commutes() {
        // (f^{-1} V f)^(k) = f^{-1}_x V^(k) f_x with f a permutation matrix and
        // f_x its multiplicative extension; checked as matrices on the
        // grade-k coefficient space.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = 4u8;
        let v = random_cmat(&mut rng, n as usize);
        // permutation 2,4,1,3 (columns of f are unit vectors)
        let perm = [2usize, 4, 1, 3];
        let mut f = CMat::zeros(n as usize, n as usize);
        for (k, &p) in perm.iter().enumerate() {
            f[(p - 1, k)] = cr(1.0);
        }
        let finv = f.inverse().unwrap();
        let conj = finv.matmul(&v).matmul(&f);
        for k in 1..=n {
            let basis = CompoundBasis::new(n, k);
            let lhs = basis.derivation_matrix(&conj);
            // multiplicative extension matrix of f on grade k
            let mut fx = CMat::zeros(basis.dim(), basis.dim());
            for (j, alpha) in basis.list.iter().enumerate() {
                let col = multiplicative_apply(&f, &GradedTensor::basis(alpha));
                for (beta, &val) in col.iter() {
                    fx[(basis.index_of(beta), j)] = val;
                }
            }
            let rhs = fx
                .inverse()
                .unwrap()
                .matmul(&basis.derivation_matrix(&v))
                .matmul(&fx);
            assert!(lhs.sub(&rhs).norm_max() < 1e-11, "k={k}");
        }
    }

    #[test]
    fn entry_extraction_recovers_all_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for n in 2..=6u8 {
            let v = random_cmat(&mut rng, n as usize);
            for i in 1..=n {
                for k in 1..=n {
                    if i == k {
                        continue;
                    }
                    let got = entry_extract(&v, i, k);
                    let want = v[((i - 1) as usize, (k - 1) as usize)];
                    assert!(
                        (got - want).norm() <= 1e-12,
                        "n={n} i={i} k={k}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn compound_basis_lexicographic() {
        let basis = CompoundBasis::new(4, 2);
        let order: Vec<Vec<u8>> = basis.list.iter().map(|m| m.entries().to_vec()).collect();
        assert_eq!(
            order,
            vec![
                vec![1, 2],
                vec![1, 3],
                vec![1, 4],
                vec![2, 3],
                vec![2, 4],
                vec![3, 4]
            ]
        );
        assert_eq!(basis.dim(), 6);
    }

    #[test]
    fn diag_sums_and_index_arithmetic() {
        let basis = CompoundBasis::new(4, 2);
        let d = vec![cr(1.0), cr(2.0), cr(3.0), cr(4.0)];
        let sums = basis.diag_sums(&d);
        assert_eq!(sums[0], cr(3.0)); // (1,2)
        assert_eq!(sums[5], cr(7.0)); // (3,4)
        let alpha = MultiIndex::new(&[1, 3], 4);
        assert_eq!(alpha.prod_over(&d), cr(3.0));
        assert_eq!(prefix_sum(&d, 2), cr(3.0));
        assert_eq!(suffix_sum(&d, 3), cr(7.0));
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn dimension_cap_enforced() {
        let _ = MultiIndex::new(&[1], 9);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_cvec(n: u8) -> impl Strategy<Value = Vec<C64>> {
            proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n as usize)
                .prop_map(|v| v.into_iter().map(|(re, im)| c(re, im)).collect())
        }

        fn arb_cmat(n: u8) -> impl Strategy<Value = CMat> {
            proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), (n as usize) * (n as usize))
                .prop_map(move |v| {
                    let mut m = CMat::zeros(n as usize, n as usize);
                    for i in 0..n as usize {
                        for j in 0..n as usize {
                            let (re, im) = v[i * n as usize + j];
                            m[(i, j)] = c(re, im);
                        }
                    }
                    m
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn prop_wedge_antisymmetric(
                (n, u, v) in (2u8..=6).prop_flat_map(|n| (Just(n), arb_cvec(n), arb_cvec(n)))
            ) {
                let tu = GradedTensor::from_vector(&u, n);
                let tv = GradedTensor::from_vector(&v, n);
                let uv = tu.wedge(&tv);
                let vu = tv.wedge(&tu);
                prop_assert!(tensors_close(&uv, &vu.scale(cr(-1.0)), 1e-13));
                prop_assert!(tu.wedge(&tu).norm_one() < 1e-13);
            }

            #[test]
            fn prop_derivation_leibniz(
                (n, m, u, v) in (2u8..=5).prop_flat_map(|n| {
                    (Just(n), arb_cmat(n), arb_cvec(n), arb_cvec(n))
                })
            ) {
                let tu = GradedTensor::from_vector(&u, n);
                let tv = GradedTensor::from_vector(&v, n);
                let lhs = derivation_apply(&m, &tu.wedge(&tv));
                let rhs = GradedTensor::from_vector(&m.matvec(&u), n)
                    .wedge(&tv)
                    .add_scaled(&tu.wedge(&GradedTensor::from_vector(&m.matvec(&v), n)), cr(1.0));
                prop_assert!(tensors_close(&lhs, &rhs, 1e-12));
            }

            #[test]
            fn prop_multiplicative_functorial(
                (n, a, b) in (2u8..=4).prop_flat_map(|n| (Just(n), arb_cmat(n), arb_cmat(n)))
            ) {
                // extension of a product = product of extensions, per grade
                let ab = a.matmul(&b);
                for grade in 1..=n {
                    let basis = CompoundBasis::new(n, grade);
                    for alpha in basis.list.iter().take(3) {
                        let t = GradedTensor::basis(alpha);
                        let lhs = multiplicative_apply(&ab, &t);
                        let rhs = multiplicative_apply(&a, &multiplicative_apply(&b, &t));
                        prop_assert!(tensors_close(&lhs, &rhs, 1e-10));
                    }
                }
            }
        }
    }
}
