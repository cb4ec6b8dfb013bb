//! Small dense linear algebra: rank with a relative pivot tolerance, exact
//! rational rank, Krylov products and minimum-norm least squares.

use std::fmt;
use std::ops::{Deref, DerefMut};

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};

/// Relative rank tolerance used when the caller has no better choice.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, PartialEq, Default)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Vector {
            data: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        Vector::new(self.iter().zip(other.iter()).map(|(a, b)| a - b).collect())
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector::new(data)
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.data.fmt(f)
    }
}

fn norm2(xs: &[f64]) -> f64 {
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * xs.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

/// Dense real matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dims("ragged rows"));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    /// Matrix whose columns are the given vectors, all of dimension `rows`.
    pub fn from_columns(rows: usize, columns: &[Vector]) -> Result<Self> {
        let cols = columns.len();
        let mut data = vec![0.0; rows * cols];
        for (j, c) in columns.iter().enumerate() {
            if c.dim() != rows {
                return Err(Error::dims(format!("column {j} has dimension {}", c.dim())));
            }
            for i in 0..rows {
                data[i * cols + j] = c[i];
            }
        }
        Matrix::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Matrix::zeros(n, n);
        for (i, v) in d.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
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

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> Vector {
        Vector::new(self.data[i * self.cols..(i + 1) * self.cols].to_vec())
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector::new((0..self.rows).map(|i| self.get(i, j)).collect())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.cols.max(1))
            .map(<[f64]>::to_vec)
            .take(self.rows)
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dims(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vector> {
        if self.cols != v.len() {
            return Err(Error::dims(format!(
                "{}x{} matrix times vector of dimension {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(Vector::new(
            (0..self.rows)
                .map(|i| {
                    let row = &self.data[i * self.cols..(i + 1) * self.cols];
                    row.iter().zip(v).fold(0.0, |acc, (a, x)| acc + a * x)
                })
                .collect(),
        ))
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dims("matrix sum of different shapes"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn permute_rows(&self, perm: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for (dst, &src) in perm.iter().enumerate() {
            out.data[dst * self.cols..(dst + 1) * self.cols]
                .copy_from_slice(&self.data[src * self.cols..(src + 1) * self.cols]);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{}x{} ", self.rows, self.cols)?;
        f.debug_list().entries(self.to_rows()).finish()
    }
}

/// Pivot threshold shared by [`rank`] and [`solve_min_norm`].
fn pivot_threshold(m: &Matrix, tol: f64) -> f64 {
    tol * m.max_abs().max(1.0)
}

/// Numerical rank by Gaussian elimination with partial pivoting. A pivot is
/// kept when its magnitude exceeds `tol * max(1, max |m_ij|)`.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    let thr = pivot_threshold(m, tol);
    let (rows, cols) = (m.rows, m.cols);
    let mut a = m.data.clone();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (p, best) = (r..rows)
            .map(|i| (i, a[i * cols + c].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= thr {
            continue;
        }
        if p != r {
            for j in 0..cols {
                a.swap(p * cols + j, r * cols + j);
            }
        }
        let pivot = a[r * cols + c];
        for i in (r + 1)..rows {
            let f = a[i * cols + c] / pivot;
            if f != 0.0 {
                for j in c..cols {
                    a[i * cols + j] -= f * a[r * cols + j];
                }
            }
        }
        r += 1;
    }
    r
}

/// `A^j v` by `j` successive products.
pub fn krylov_column(a: &Matrix, v: &[f64], j: usize) -> Result<Vector> {
    if !a.is_square() {
        return Err(Error::dims("Krylov product needs a square matrix"));
    }
    if a.cols != v.len() {
        return Err(Error::dims(format!(
            "{}x{} matrix and vector of dimension {}",
            a.rows,
            a.cols,
            v.len()
        )));
    }
    let mut out = Vector::new(v.to_vec());
    for _ in 0..j {
        out = a.mul_vec(&out)?;
    }
    Ok(out)
}

/// Builds a Householder reflector `I - beta v v^T` mapping `x` onto a
/// multiple of `e_1`. Returns `(v, beta)`; `beta == 0` means identity.
fn householder(x: &[f64]) -> (Vec<f64>, f64) {
    let alpha = norm2(x);
    if alpha == 0.0 {
        return (vec![0.0; x.len()], 0.0);
    }
    let mut v = x.to_vec();
    v[0] += if x[0] >= 0.0 { alpha } else { -alpha };
    let vtv: f64 = v.iter().map(|t| t * t).sum();
    (v, 2.0 / vtv)
}

/// Minimum-norm least-squares solution of `m z = y` through a complete
/// orthogonal decomposition: column-pivoted Householder QR truncated at the
/// numerical rank, then an LQ factorization of the leading rows.
pub fn solve_min_norm(m: &Matrix, y: &[f64], tol: f64) -> Result<Vector> {
    if m.rows != y.len() {
        return Err(Error::dims(format!(
            "{}x{} system with right-hand side of dimension {}",
            m.rows,
            m.cols,
            y.len()
        )));
    }
    let (rows, cols) = (m.rows, m.cols);
    let thr = pivot_threshold(m, tol);
    let mut a = m.data.clone();
    let mut c = y.to_vec();
    let mut perm: Vec<usize> = (0..cols).collect();

    let mut rank = 0;
    for i in 0..rows.min(cols) {
        let col_norm = |a: &[f64], j: usize| {
            let tail: Vec<f64> = (i..rows).map(|r| a[r * cols + j]).collect();
            norm2(&tail)
        };
        let (jmax, nmax) = (i..cols)
            .map(|j| (j, col_norm(&a, j)))
            .fold((i, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if nmax <= thr {
            break;
        }
        if jmax != i {
            for r in 0..rows {
                a.swap(r * cols + i, r * cols + jmax);
            }
            perm.swap(i, jmax);
        }
        let x: Vec<f64> = (i..rows).map(|r| a[r * cols + i]).collect();
        let (v, beta) = householder(&x);
        if beta != 0.0 {
            for j in i..cols {
                let dot: f64 = (i..rows).map(|r| v[r - i] * a[r * cols + j]).sum();
                let f = beta * dot;
                for r in i..rows {
                    a[r * cols + j] -= f * v[r - i];
                }
            }
            let dot: f64 = (i..rows).map(|r| v[r - i] * c[r]).sum();
            let f = beta * dot;
            for r in i..rows {
                c[r] -= f * v[r - i];
            }
        }
        rank += 1;
    }

    // Leading rank x cols block of R, reduced to lower triangular by
    // reflections acting on columns: R1 H_1 ... H_r = L.
    let mut r1: Vec<f64> = a[..rank * cols].to_vec();
    for i in 0..rank {
        // below-diagonal residue of the QR sweep
        for j in 0..i.min(cols) {
            r1[i * cols + j] = 0.0;
        }
    }
    let mut reflectors = Vec::with_capacity(rank);
    for i in 0..rank {
        let x: Vec<f64> = (i..cols).map(|j| r1[i * cols + j]).collect();
        let (v, beta) = householder(&x);
        if beta != 0.0 {
            for l in i..rank {
                let dot: f64 = (i..cols).map(|j| v[j - i] * r1[l * cols + j]).sum();
                let f = beta * dot;
                for j in i..cols {
                    r1[l * cols + j] -= f * v[j - i];
                }
            }
        }
        reflectors.push((v, beta));
    }

    let mut w = vec![0.0; cols];
    for i in 0..rank {
        let s: f64 = (0..i).map(|j| r1[i * cols + j] * w[j]).sum();
        w[i] = (c[i] - s) / r1[i * cols + i];
    }
    for (i, (v, beta)) in reflectors.iter().enumerate().rev() {
        if *beta == 0.0 {
            continue;
        }
        let dot: f64 = (i..cols).map(|j| v[j - i] * w[j]).sum();
        let f = beta * dot;
        for j in i..cols {
            w[j] -= f * v[j - i];
        }
    }

    let mut z = vec![0.0; cols];
    for (j, &p) in perm.iter().enumerate() {
        z[p] = w[j];
    }
    Ok(Vector::new(z))
}

/// Dense matrix over exact rationals.
#[derive(Clone, PartialEq, Debug)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigRational>,
}

impl RationalMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<BigRational>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(RationalMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<BigRational>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dims("ragged rows"));
        }
        RationalMatrix::new(rows.len(), cols, rows.concat())
    }

    /// Exact image of a float matrix; every finite double is a dyadic
    /// rational.
    pub fn from_float(m: &Matrix) -> Self {
        let data = m
            .data
            .iter()
            .map(|x| BigRational::from_float(*x).expect("finite entry"))
            .collect();
        RationalMatrix {
            rows: m.rows,
            cols: m.cols,
            data,
        }
    }

    pub fn to_float(&self) -> Matrix {
        use num_traits::ToPrimitive;
        let data = self
            .data
            .iter()
            .map(|x| x.to_f64().unwrap_or(f64::NAN))
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &BigRational {
        &self.data[i * self.cols + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<BigRational>> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].to_vec())
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<BigRational> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn transpose(&self) -> RationalMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j).clone());
            }
        }
        RationalMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn mul_vec(&self, v: &[BigRational]) -> Result<Vec<BigRational>> {
        if self.cols != v.len() {
            return Err(Error::dims("rational matrix-vector product"));
        }
        Ok((0..self.rows)
            .map(|i| {
                (0..self.cols).fold(BigRational::zero(), |acc, j| acc + self.get(i, j) * &v[j])
            })
            .collect())
    }

    pub fn from_columns(rows: usize, columns: &[Vec<BigRational>]) -> Result<Self> {
        let cols = columns.len();
        let mut data = vec![BigRational::zero(); rows * cols];
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::dims(format!("column {j} has dimension {}", c.len())));
            }
            for (i, v) in c.iter().enumerate() {
                data[i * cols + j] = v.clone();
            }
        }
        RationalMatrix::new(rows, cols, data)
    }

    /// Exact rank by Gaussian elimination over the rationals.
    pub fn rank(&self) -> usize {
        let (rows, cols) = (self.rows, self.cols);
        let mut a = self.data.clone();
        let mut r = 0;
        for c in 0..cols {
            if r == rows {
                break;
            }
            let Some(p) = (r..rows).find(|&i| !a[i * cols + c].is_zero()) else {
                continue;
            };
            if p != r {
                for j in 0..cols {
                    a.swap(p * cols + j, r * cols + j);
                }
            }
            let pivot = a[r * cols + c].clone();
            for i in (r + 1)..rows {
                if a[i * cols + c].is_zero() {
                    continue;
                }
                let f = &a[i * cols + c] / &pivot;
                for j in c..cols {
                    let t = &f * &a[r * cols + j];
                    a[i * cols + j] -= t;
                }
            }
            r += 1;
        }
        r
    }

    pub fn max_abs(&self) -> BigRational {
        self.data
            .iter()
            .map(Signed::abs)
            .fold(BigRational::zero(), |m, x| if x > m { x } else { m })
    }
}
