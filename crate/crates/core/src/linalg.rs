//! Small dense linear algebra: row-major matrices, Householder QR with
//! aliasing detection, and Cholesky factorisation.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `Xᵀ diag(w) X` accumulated row by row.
pub fn weighted_gram<T: Scalar>(x: &Matrix<T>, w: &[T]) -> Matrix<T> {
    let p = x.cols();
    let mut g = Matrix::zeros(p, p);
    for (i, &wi) in w.iter().enumerate() {
        if wi == T::zero() {
            continue;
        }
        let r = x.row(i);
        for a in 0..p {
            let ra = r[a] * wi;
            for b in 0..=a {
                g[(a, b)] += ra * r[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[(b, a)] = g[(a, b)];
        }
    }
    g
}

/// `Xᵀ diag(w) z`.
pub fn weighted_xty<T: Scalar>(x: &Matrix<T>, w: &[T], z: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); x.cols()];
    for i in 0..x.rows() {
        let s = w[i] * z[i];
        for (o, &xij) in out.iter_mut().zip(x.row(i)) {
            *o += xij * s;
        }
    }
    out
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let t = l[(i, k)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let t = l[(k, i)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    y
}

pub fn spd_solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Option<Vec<T>> {
    cholesky(a).map(|l| cholesky_solve(&l, b))
}

pub fn spd_inverse<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let l = cholesky(a)?;
    let n = a.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![T::zero(); n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = T::zero());
        e[j] = T::one();
        let col = cholesky_solve(&l, &e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Some(inv)
}

/// Householder QR processed in column order. A column whose residual norm,
/// after projecting out the kept columns before it, falls below
/// `tol * ‖column‖` is reported as aliased and skipped.
#[derive(Debug, Clone)]
pub struct Qr<T> {
    /// Transformed kept columns (column-major), Householder vectors below the diagonal.
    cols: Vec<Vec<T>>,
    tau: Vec<T>,
    pub kept: Vec<usize>,
    pub aliased: Vec<usize>,
}

impl<T: Scalar> Qr<T> {
    pub fn new(x: &Matrix<T>, tol: T) -> Self {
        let n = x.rows();
        let mut cols: Vec<Vec<T>> = Vec::new();
        let mut tau = Vec::new();
        let mut kept = Vec::new();
        let mut aliased = Vec::new();
        for j in 0..x.cols() {
            let mut c = x.column(j);
            let orig = norm(&c);
            for (r, (v, &t)) in cols.iter().zip(&tau).enumerate() {
                apply_reflector(v, t, r, &mut c);
            }
            let r = cols.len();
            if r >= n {
                aliased.push(j);
                continue;
            }
            let rest = norm(&c[r..]);
            if orig == T::zero() || rest <= tol * orig {
                aliased.push(j);
                continue;
            }
            let t = make_reflector(&mut c, r);
            cols.push(c);
            tau.push(t);
            kept.push(j);
        }
        Self {
            cols,
            tau,
            kept,
            aliased,
        }
    }

    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    /// Least squares solution over the kept columns.
    pub fn solve(&self, y: &[T]) -> Vec<T> {
        let mut qty = y.to_vec();
        for (r, (v, &t)) in self.cols.iter().zip(&self.tau).enumerate() {
            apply_reflector(v, t, r, &mut qty);
        }
        let k = self.cols.len();
        let mut beta = vec![T::zero(); k];
        for i in (0..k).rev() {
            let mut s = qty[i];
            for j in (i + 1)..k {
                s -= self.cols[j][i] * beta[j];
            }
            beta[i] = s / self.cols[i][i];
        }
        beta
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let s: T = v.iter().map(|&x| (x / scale) * (x / scale)).sum();
    scale * s.sqrt()
}

/// Turns `c[r..]` into `(alpha, v[1..])`, returning tau; v[0] is implicit 1.
fn make_reflector<T: Scalar>(c: &mut [T], r: usize) -> T {
    let x0 = c[r];
    let nrm = norm(&c[r..]);
    let alpha = if x0 > T::zero() { -nrm } else { nrm };
    let v0 = x0 - alpha;
    for ci in c[r + 1..].iter_mut() {
        *ci /= v0;
    }
    c[r] = alpha;
    (alpha - x0) / alpha
}

fn apply_reflector<T: Scalar>(v: &[T], tau: T, r: usize, c: &mut [T]) {
    let mut s = c[r];
    for i in (r + 1)..c.len() {
        s += v[i] * c[i];
    }
    s *= tau;
    c[r] -= s;
    for i in (r + 1)..c.len() {
        c[i] -= s * v[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_solves_overdetermined_system() {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 3.0],
        ]);
        let y = [1.0f64, 3.0, 5.0, 7.0];
        let qr = Qr::new(&x, 1e-7);
        let b: Vec<f64> = qr.solve(&y);
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn qr_flags_later_duplicate_column() {
        let x = Matrix::from_rows(&[
            vec![1.0, 2.0, 4.0],
            vec![1.0, 3.0, 6.0],
            vec![1.0, 5.0, 10.0],
        ]);
        let qr = Qr::new(&x, 1e-7);
        assert_eq!(qr.kept, vec![0, 1]);
        assert_eq!(qr.aliased, vec![2]);
    }

    #[test]
    fn cholesky_inverse_roundtrip() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let inv: Matrix<f64> = spd_inverse(&a).unwrap();
        let expect = [3.0 / 11.0, -1.0 / 11.0, -1.0 / 11.0, 4.0 / 11.0];
        for (g, e) in inv.as_slice().iter().zip(expect) {
            assert!((g - e).abs() < 1e-14);
        }
        assert!(cholesky(&Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]])).is_none());
    }

    #[test]
    fn works_in_single_precision() {
        let x = Matrix::<f32>::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        let b = Qr::new(&x, 1e-5).solve(&[1.0, 3.0, 5.0]);
        assert!((b[1] - 2.0).abs() < 1e-5);
    }
}
