//! Dense kernel for the small matrices that appear in the filters and the
//! observer (n <= 8): determinant, adjugate, trace of a product and a
//! Lyapunov solver.
//!
//! Arithmetic helpers (`mul`, `add`, ...) panic on shape mismatch, like most
//! dense linear-algebra libraries. The named kernel operations return
//! [`Error::Dimension`] instead, since their shapes come from user input.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Cofactor expansion is used up to this size, LU with partial pivoting above.
const COFACTOR_MAX: usize = 4;

/// Entries stored inline up to 4x4; the filters allocate nothing per step.
type Storage = SmallVec<[f64; 16]>;

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Storage,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: SmallVec::from_elem(0.0, rows * cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Mat::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Mat::from_vec",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Mat {
            rows,
            cols,
            data: SmallVec::from_slice(&data),
        })
    }

    pub fn from_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Mat::from_slice",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Mat {
            rows,
            cols,
            data: SmallVec::from_slice(data),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::dim(
                "Mat::from_rows",
                format!("row {bad} has {} entries, expected {cols}", rows[bad].len()),
            ));
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    /// `u v^T`.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        let mut m = Mat::zeros(u.len(), v.len());
        for (i, ui) in u.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                m[(i, j)] = ui * vj;
            }
        }
        m
    }

    pub fn column(values: &[f64]) -> Self {
        Mat {
            rows: values.len(),
            cols: 1,
            data: SmallVec::from_slice(values),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data.into_vec()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, rhs: &Mat) -> Mat {
        assert_eq!(
            self.cols, rhs.rows,
            "matrix product {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matrix-vector product shape");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add(&self, rhs: &Mat) -> Mat {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Mat) -> Mat {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    fn zip_with(&self, rhs: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        assert!(
            self.rows == rhs.rows && self.cols == rhs.cols,
            "elementwise op on {}x{} and {}x{}",
            self.rows,
            self.cols,
            rhs.rows,
            rhs.cols
        );
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        let gram = self.transpose().mul(self);
        sym_eigenvalues(&gram)
            .map(|ev| ev.last().copied().unwrap_or(0.0).max(0.0).sqrt())
            .unwrap_or(f64::NAN)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy with row `r` and column `c` removed.
    fn minor(&self, r: usize, c: usize) -> Mat {
        let mut data = Storage::with_capacity((self.rows - 1) * (self.cols - 1));
        for i in (0..self.rows).filter(|&i| i != r) {
            for j in (0..self.cols).filter(|&j| j != c) {
                data.push(self[(i, j)]);
            }
        }
        Mat {
            rows: self.rows - 1,
            cols: self.cols - 1,
            data,
        }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries((0..self.rows).map(|i| self.row(i)))
            .finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Mat {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Mat::from_rows(&rows)
    }
}

impl From<Mat> for Vec<Vec<f64>> {
    fn from(m: Mat) -> Self {
        m.to_rows()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn require_square(op: &'static str, m: &Mat) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::dim(op, format!("expected square matrix, got {}x{}", m.rows, m.cols)))
    }
}

/// Determinant. Cofactor expansion for n <= 4, LU with partial pivoting above.
pub fn det(m: &Mat) -> Result<f64> {
    require_square("det", m)?;
    Ok(det_unchecked(m))
}

fn det_unchecked(m: &Mat) -> f64 {
    match m.rows {
        0 => 1.0,
        1 => m.data[0],
        2 => m.data[0] * m.data[3] - m.data[1] * m.data[2],
        3 => {
            let a = &m.data;
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        n if n <= COFACTOR_MAX => (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                let a = m[(0, j)];
                if a == 0.0 {
                    0.0
                } else {
                    sign * a * det_unchecked(&m.minor(0, j))
                }
            })
            .sum(),
        _ => lu_det(m),
    }
}

fn lu_det(m: &Mat) -> f64 {
    let n = m.rows;
    let mut a = m.data.clone();
    let mut sign = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .unwrap();
        if a[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(pivot * n + j, col * n + j);
            }
            sign = -sign;
        }
        let p = a[col * n + col];
        for i in col + 1..n {
            let f = a[i * n + col] / p;
            if f != 0.0 {
                for j in col..n {
                    a[i * n + j] -= f * a[col * n + j];
                }
            }
        }
    }
    sign * (0..n).map(|i| a[i * n + i]).product::<f64>()
}

/// Classical adjoint: `adjugate(m) * m = det(m) * I`, singular `m` included.
pub fn adjugate(m: &Mat) -> Result<Mat> {
    require_square("adjugate", m)?;
    let n = m.rows;
    Ok(match n {
        0 => Mat::zeros(0, 0),
        1 => Mat::identity(1),
        2 => Mat {
            rows: 2,
            cols: 2,
            data: SmallVec::from_slice(&[m.data[3], -m.data[1], -m.data[2], m.data[0]]),
        },
        _ => {
            let mut adj = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    // transpose of the cofactor matrix
                    adj[(j, i)] = sign * det_unchecked(&m.minor(i, j));
                }
            }
            adj
        }
    })
}

/// `tr(a b)` without forming the product.
pub fn trace_prod(a: &Mat, b: &Mat) -> Result<f64> {
    require_square("trace_prod", a)?;
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::dim(
            "trace_prod",
            format!("{}x{} and {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let n = a.rows;
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += a.data[i * n + k] * b.data[k * n + i];
        }
    }
    Ok(acc)
}

/// Solves `A x = b` for square `A` by LU with partial pivoting.
pub fn solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    require_square("solve", a)?;
    let n = a.rows;
    if b.len() != n {
        return Err(Error::dim("solve", format!("rhs length {} for {n}x{n}", b.len())));
    }
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| m[p * n + col].abs().total_cmp(&m[q * n + col].abs()))
            .unwrap();
        if m[pivot * n + col].abs() <= scale * 1e-13 {
            return Err(Error::Solver(format!(
                "matrix is numerically singular (pivot {:e} in column {col})",
                m[pivot * n + col]
            )));
        }
        if pivot != col {
            for j in 0..n {
                m.swap(pivot * n + j, col * n + j);
            }
            x.swap(pivot, col);
        }
        let p = m[col * n + col];
        for i in col + 1..n {
            let f = m[i * n + col] / p;
            if f != 0.0 {
                for j in col..n {
                    m[i * n + j] -= f * m[col * n + j];
                }
                x[i] -= f * x[col];
            }
        }
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i * n + j] * x[j]).sum();
        x[i] = (x[i] - s) / m[i * n + i];
    }
    Ok(x)
}

/// Cholesky factor `L` with `L L^T = m`, or `None` when `m` is not positive definite.
pub fn cholesky(m: &Mat) -> Option<Mat> {
    if !m.is_square() {
        return None;
    }
    let n = m.rows;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let d = m[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let s = m[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
pub fn sym_eigenvalues(m: &Mat) -> Result<Vec<f64>> {
    require_square("sym_eigenvalues", m)?;
    let n = m.rows;
    let mut a = m.add(&m.transpose()).scale(0.5);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off <= 1e-30 * a.frobenius_norm().powi(2).max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Solves `a_k^T P + P a_k = -q` for symmetric positive-definite `P`.
///
/// The equation is vectorised into an `n^2 x n^2` dense system. A solution
/// that is not positive definite means `a_k` is not Hurwitz.
pub fn solve_lyapunov(a_k: &Mat, q: &Mat) -> Result<Mat> {
    require_square("solve_lyapunov", a_k)?;
    require_square("solve_lyapunov", q)?;
    let n = a_k.rows;
    if q.rows != n {
        return Err(Error::dim(
            "solve_lyapunov",
            format!("a_k is {n}x{n} but q is {}x{}", q.rows, q.cols),
        ));
    }
    if q.sub(&q.transpose()).max_abs() > 1e-12 * q.max_abs().max(1.0) || cholesky(q).is_none() {
        return Err(Error::Parameter("q must be symmetric positive definite".into()));
    }
    // Column-major vec: P[i, j] sits at j * n + i.
    let nn = n * n;
    let mut big = Mat::zeros(nn, nn);
    let mut rhs = vec![0.0; nn];
    for j in 0..n {
        for i in 0..n {
            let r = j * n + i;
            for k in 0..n {
                big[(r, j * n + k)] += a_k[(k, i)];
                big[(r, k * n + i)] += a_k[(k, j)];
            }
            rhs[r] = -q[(i, j)];
        }
    }
    let x = solve(&big, &rhs)
        .map_err(|e| Error::Solver(format!("Lyapunov system has no unique solution: {e}")))?;
    let mut p = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            p[(i, j)] = x[j * n + i];
        }
    }
    let p = p.add(&p.transpose()).scale(0.5);
    if cholesky(&p).is_none() {
        return Err(Error::Solver(
            "Lyapunov solution is not positive definite: a_k is not Hurwitz".into(),
        ));
    }
    Ok(p)
}

/// `a_k^T P + P a_k + q`, the residual of [`solve_lyapunov`].
pub fn lyapunov_residual(a_k: &Mat, p: &Mat, q: &Mat) -> Mat {
    a_k.transpose().mul(p).add(&p.mul(a_k)).add(q)
}
