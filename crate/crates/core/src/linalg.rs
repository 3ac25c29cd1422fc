//! Dense complex linear algebra for the small matrices used throughout
//! (system dimension n <= 8, compound dimensions up to C(8,4) = 70).
//!
//! Hand-rolled on purpose: the sizes never justify a BLAS round trip, and
//! keeping the pivoting strategies explicit lets the solver tests swap them.

use num_complex::Complex64;

pub type C64 = Complex64;

pub const ZERO: C64 = Complex64::new(0.0, 0.0);
pub const ONE: C64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    Complex64::new(re, 0.0)
}

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        CMat {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_diag(d: &[C64]) -> Self {
        let mut m = CMat::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[C64]) {
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.rows];
        self.matvec_into(v, &mut out);
        out
    }

    /// Writes `self * v` into `out` without allocating.
    pub fn matvec_into(&self, v: &[C64], out: &mut [C64]) {
        assert_eq!(v.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for i in 0..self.rows {
            let mut acc = ZERO;
            let base = i * self.cols;
            for j in 0..self.cols {
                acc += self.data[base + j] * v[j];
            }
            out[i] = acc;
        }
    }

    pub fn matmul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.cols, rhs.rows);
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> CMat {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add(&self, rhs: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, rhs: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
        out
    }

    pub fn transpose(&self) -> CMat {
        let mut out = CMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Largest entry modulus.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Off-diagonal part (square matrices).
    pub fn offdiag(&self) -> CMat {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            out[(i, i)] = ZERO;
        }
        out
    }

    pub fn det(&self) -> C64 {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut det = ONE;
        for k in 0..n {
            // partial pivoting
            let mut p = k;
            let mut best = a[(k, k)].norm();
            for i in k + 1..n {
                let v = a[(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return ZERO;
            }
            if p != k {
                a.swap_rows(p, k);
                det = -det;
            }
            let piv = a[(k, k)];
            det *= piv;
            for i in k + 1..n {
                let f = a[(i, k)] / piv;
                if f == ZERO {
                    continue;
                }
                for j in k..n {
                    let v = a[(k, j)];
                    a[(i, j)] -= f * v;
                }
            }
        }
        det
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for k in 0..self.cols {
            self.data.swap(i * self.cols + k, j * self.cols + k);
        }
    }

    /// Solve `self * x = b` with partial (row) pivoting.
    pub fn solve(&self, b: &[C64]) -> Option<Vec<C64>> {
        self.solve_many(&CMat::from_rows(
            &b.iter().map(|&v| vec![v]).collect::<Vec<_>>(),
        ))
        .map(|m| m.col(0))
    }

    /// Solve with multiple right-hand sides (columns of `b`).
    pub fn solve_many(&self, b: &CMat) -> Option<CMat> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(b.rows, self.rows);
        let n = self.rows;
        let mut a = self.clone();
        let mut x = b.clone();
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].norm();
            for i in k + 1..n {
                let v = a[(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return None;
            }
            a.swap_rows(p, k);
            x.swap_rows(p, k);
            let piv = a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / piv;
                if f == ZERO {
                    continue;
                }
                for j in k..n {
                    let v = a[(k, j)];
                    a[(i, j)] -= f * v;
                }
                for j in 0..x.cols {
                    let v = x[(k, j)];
                    x[(i, j)] -= f * v;
                }
            }
        }
        for k in (0..n).rev() {
            for j in 0..x.cols {
                let mut acc = x[(k, j)];
                for m in k + 1..n {
                    acc -= a[(k, m)] * x[(m, j)];
                }
                x[(k, j)] = acc / a[(k, k)];
            }
        }
        Some(x)
    }

    /// Solve with full pivoting (rows and columns). Used as an independent
    /// path when cross-checking sensitivity to pivot order.
    pub fn solve_full_pivot(&self, b: &[C64]) -> Option<Vec<C64>> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(b.len(), self.rows);
        let n = self.rows;
        let mut a = self.clone();
        let mut rhs = b.to_vec();
        let mut colperm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut pi, mut pj) = (k, k);
            let mut best = 0.0;
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
                return None;
            }
            a.swap_rows(pi, k);
            rhs.swap(pi, k);
            if pj != k {
                for i in 0..n {
                    let t = a[(i, pj)];
                    a[(i, pj)] = a[(i, k)];
                    a[(i, k)] = t;
                }
                colperm.swap(pj, k);
            }
            let piv = a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / piv;
                if f == ZERO {
                    continue;
                }
                for j in k..n {
                    let v = a[(k, j)];
                    a[(i, j)] -= f * v;
                }
                let v = rhs[k];
                rhs[i] -= f * v;
            }
        }
        let mut y = vec![ZERO; n];
        for k in (0..n).rev() {
            let mut acc = rhs[k];
            for m in k + 1..n {
                acc -= a[(k, m)] * y[m];
            }
            y[k] = acc / a[(k, k)];
        }
        let mut x = vec![ZERO; n];
        for k in 0..n {
            x[colperm[k]] = y[k];
        }
        Some(x)
    }

    pub fn inverse(&self) -> Option<CMat> {
        self.solve_many(&CMat::identity(self.rows))
    }

    /// One-norm condition number estimate via the explicit inverse.
    /// Fine at these sizes; returns infinity for singular input.
    pub fn cond_one(&self) -> f64 {
        match self.inverse() {
            Some(inv) => self.norm_one() * inv.norm_one(),
            None => f64::INFINITY,
        }
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `out += s * v`
pub fn axpy(out: &mut [C64], s: C64, v: &[C64]) {
    for (o, x) in out.iter_mut().zip(v) {
        *o += s * x;
    }
}

pub fn vec_norm_max(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn vec_norm_one(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm()).sum()
}

pub fn vec_sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
