//! Small dense real-matrix kernels.
//!
//! Everything in the crate works on systems with a handful of states, so the
//! matrices here are plain row-major `Vec<f64>` buffers with no blocking or
//! sparsity. Vectors are `&[f64]` / `Vec<f64>`.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense row-major real matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}[", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self[(i, j)])?;
            }
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from a row-major buffer, rejecting bad shapes and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Mat::from_vec",
                expected: format!("{rows}x{cols} (nonzero)"),
                got: format!("{} entries", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Mat::from_vec"));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from nested rows.
    ///
    /// Panics on ragged input; intended for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.as_ref().len(), c, "ragged rows");
            data.extend_from_slice(row.as_ref());
        }
        Mat {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Mat::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Column vector (n × 1).
    pub fn column(values: &[f64]) -> Self {
        Mat {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    /// Row vector (1 × n).
    pub fn row(values: &[f64]) -> Self {
        Mat {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
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

    pub fn row_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row_slice(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
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

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row_slice(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension");
        (0..self.rows).map(|i| dot(self.row_slice(i), v)).collect()
    }

    /// `selfᵀ v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_mul_vec dimension");
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row_slice(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn add(&self, other: &Mat) -> Mat {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    fn zip_with(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "elementwise op shape"
        );
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    /// Adds the outer product `s · u vᵀ` in place.
    pub fn add_outer(&mut self, s: f64, u: &[f64], v: &[f64]) {
        assert_eq!((self.rows, self.cols), (u.len(), v.len()));
        for (i, ui) in u.iter().enumerate() {
            let f = s * ui;
            if f == 0.0 {
                continue;
            }
            for (d, vj) in self.data[i * self.cols..(i + 1) * self.cols]
                .iter_mut()
                .zip(v)
            {
                *d += f * vj;
            }
        }
    }

    /// Replaces `self` by `(self + selfᵀ)/2`.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hcat(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        let mut out = Mat::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
            for j in 0..other.cols {
                out[(i, self.cols + j)] = other[(i, j)];
            }
        }
        out
    }

    /// Vertical concatenation `[self; other]`.
    pub fn vcat(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Mat {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Eigenvalues of a real square matrix together with its spectral radius.
#[derive(Debug, Clone)]
pub struct EigenSet {
    pub values: Vec<Complex64>,
    pub max_abs: f64,
}

impl EigenSet {
    fn new(values: Vec<Complex64>) -> Self {
        let max_abs = values.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
        EigenSet { values, max_abs }
    }
}

const JACOBI_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(m: &Mat) -> Vec<f64> {
    assert!(m.is_square(), "symmetric_eigenvalues needs a square matrix");
    let n = m.rows();
    let mut a = m.clone();
    a.symmetrize();
    let scale = a.frobenius();
    if scale == 0.0 {
        return vec![0.0; n];
    }
    for _ in 0..JACOBI_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
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
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Largest singular value.
///
/// Computed as the square root of the top eigenvalue of the smaller Gram
/// matrix (`mᵀm` or `m mᵀ`), diagonalized with Jacobi rotations.
pub fn operator_norm(m: &Mat) -> f64 {
    if m.max_abs_entry() == 0.0 {
        return 0.0;
    }
    let gram = if m.rows() >= m.cols() {
        m.transpose().matmul(m)
    } else {
        m.matmul(&m.transpose())
    };
    let top = symmetric_eigenvalues(&gram)
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0);
    top.sqrt()
}

const QR_SWEEP_CAP: usize = 10_000;

/// All eigenvalues of a small real square matrix.
///
/// Dimension ≤ 2 uses the characteristic polynomial directly; larger inputs go
/// through Householder reduction to Hessenberg form and Francis double-shift
/// QR. Subdiagonals that are already exactly zero are left untouched, so
/// block-triangular inputs keep their exact block eigenvalues.
pub fn eigenvalues_small(m: &Mat) -> Result<EigenSet> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            op: "eigenvalues_small",
            expected: "square matrix".into(),
            got: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("eigenvalues_small"));
    }
    let n = m.rows();
    let values = match n {
        1 => vec![Complex64::new(m[(0, 0)], 0.0)],
        2 => eig2(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]).to_vec(),
        _ => {
            let mut a = m.to_rows();
            hessenberg(&mut a);
            hqr(&mut a)?
        }
    };
    Ok(EigenSet::new(values))
}

fn eig2(a: f64, b: f64, c: f64, d: f64) -> [Complex64; 2] {
    let half_tr = 0.5 * (a + d);
    let det = a * d - b * c;
    let mut disc = half_tr * half_tr - det;
    // Snap rounding-level discriminants so double roots stay double.
    let snap = 64.0 * f64::EPSILON * (half_tr * half_tr).max(det.abs());
    if disc.abs() <= snap {
        disc = 0.0;
    }
    if disc >= 0.0 {
        let s = disc.sqrt();
        let big = if half_tr >= 0.0 { half_tr + s } else { half_tr - s };
        let small = if big != 0.0 { det / big } else { half_tr - s };
        [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [Complex64::new(half_tr, s), Complex64::new(half_tr, -s)]
    }
}

fn hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let tail: f64 = ((k + 2)..n).map(|i| a[i][k] * a[i][k]).sum();
        if tail == 0.0 {
            continue;
        }
        let x0 = a[k + 1][k];
        let alpha = -x0.signum() * (x0 * x0 + tail).sqrt();
        let mut v: Vec<f64> = ((k + 1)..n).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vn = norm(&v);
        if vn == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vn);
        for j in 0..n {
            let s: f64 = v.iter().enumerate().map(|(i, vi)| vi * a[k + 1 + i][j]).sum();
            for (i, vi) in v.iter().enumerate() {
                a[k + 1 + i][j] -= 2.0 * vi * s;
            }
        }
        for row in a.iter_mut() {
            let s: f64 = v.iter().enumerate().map(|(j, vj)| row[k + 1 + j] * vj).sum();
            for (j, vj) in v.iter().enumerate() {
                row[k + 1 + j] -= 2.0 * s * vj;
            }
        }
        a[k + 1][k] = alpha;
        for row in a.iter_mut().skip(k + 2) {
            row[k] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (destroys `a`).
fn hqr(a: &mut [Vec<f64>]) -> Result<Vec<Complex64>> {
    let n = a.len();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut shift = 0.0;
    let mut sweeps = 0usize;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 1 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                wr[nu] = x + shift;
                wi[nu] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[nu - 1][nu - 1];
            let mut w = a[nu][nu - 1] * a[nu - 1][nu];
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += shift;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = if z != 0.0 { x - w / z } else { x + z };
                    wi[nu - 1] = 0.0;
                    wi[nu] = 0.0;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            sweeps += 1;
            if sweeps > QR_SWEEP_CAP {
                return Err(Error::NonConvergence {
                    what: "Hessenberg QR",
                    iterations: QR_SWEEP_CAP,
                });
            }
            if its == 10 || its == 20 {
                shift += x;
                for (i, row) in a.iter_mut().enumerate().take(nu + 1) {
                    row[i] -= x;
                }
                let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nu - 2;
            let (mut p, mut q, mut r, mut z);
            loop {
                z = a[m][m];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - rr - ss;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = if k != nu - 1 { a[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[k][j] + q * a[k + 1][j];
                        if k != nu - 1 {
                            pp += r * a[k + 2][j];
                            a[k + 2][j] -= pp * z;
                        }
                        a[k + 1][j] -= pp * y;
                        a[k][j] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for row in a.iter_mut().take(mmin + 1).skip(l) {
                        let mut pp = x * row[k] + y * row[k + 1];
                        if k != nu - 1 {
                            pp += z * row[k + 2];
                            row[k + 2] -= pp * r;
                        }
                        row[k + 1] -= pp * q;
                        row[k] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(wr
        .into_iter()
        .zip(wi)
        .map(|(re, im)| Complex64::new(re, im))
        .collect())
}

/// Spectral radius; shorthand for `eigenvalues_small(m)?.max_abs`.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    Ok(eigenvalues_small(m)?.max_abs)
}

/// Rank-one update of an inverse Gram matrix.
///
/// Returns `K = Pz / (1 + zᵀPz)` and `P − K zᵀ P`, symmetrized.
pub fn sherman_morrison(p: &Mat, z: &[f64]) -> (Vec<f64>, Mat) {
    assert!(p.is_square() && p.rows() == z.len(), "sherman_morrison dims");
    let pz = p.mul_vec(z);
    let denom = 1.0 + dot(z, &pz);
    let k: Vec<f64> = pz.iter().map(|v| v / denom).collect();
    let mut p_new = p.clone();
    // P symmetric, so zᵀP = (Pz)ᵀ.
    p_new.add_outer(-1.0, &k, &pz);
    p_new.symmetrize();
    (k, p_new)
}

/// LU factorization with partial pivoting; `None` when a pivot vanishes.
struct Lu {
    lu: Mat,
    perm: Vec<usize>,
    sign: f64,
}

fn lu(m: &Mat) -> Option<Lu> {
    let n = m.rows();
    let mut a = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    let scale = m.max_abs_entry().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs()))?;
        if a[(piv, k)].abs() <= 1e-300 * scale || a[(piv, k)] == 0.0 {
            return None;
        }
        if piv != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(piv, j)];
                a[(piv, j)] = tmp;
            }
            perm.swap(k, piv);
            sign = -sign;
        }
        for i in (k + 1)..n {
            let f = a[(i, k)] / a[(k, k)];
            a[(i, k)] = f;
            if f != 0.0 {
                for j in (k + 1)..n {
                    let akj = a[(k, j)];
                    a[(i, j)] -= f * akj;
                }
            }
        }
    }
    Some(Lu { lu: a, perm, sign })
}

impl Lu {
    fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Mat, b: &Mat) -> Result<Mat> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            op: "solve",
            expected: format!("square A with {} rows", b.rows()),
            got: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    let f = lu(a).ok_or(Error::Singular("solve"))?;
    let mut x = Mat::zeros(b.rows(), b.cols());
    for j in 0..b.cols() {
        let col: Vec<f64> = (0..b.rows()).map(|i| b[(i, j)]).collect();
        for (i, v) in f.solve_vec(&col).into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    Ok(x)
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// A matrix stored as the unevaluated sum `hi + lo` of two `f64` matrices.
///
/// Sums of outer products accumulate with error-free transformations, so a
/// Gram matrix built from thousands of large features keeps roughly twice
/// the working precision. [`Compensated::solve_right`] pairs it with LU plus
/// iterative refinement on compensated residuals, which is accurate whenever
/// `cond(G)·eps < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Compensated {
    hi: Mat,
    lo: Mat,
}

impl Compensated {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Compensated {
            hi: Mat::zeros(rows, cols),
            lo: Mat::zeros(rows, cols),
        }
    }

    pub fn from_mat(m: &Mat) -> Self {
        Compensated {
            hi: m.clone(),
            lo: Mat::zeros(m.rows(), m.cols()),
        }
    }

    /// `self += s · u vᵀ`.
    pub fn add_outer(&mut self, s: f64, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.hi.rows());
        assert_eq!(v.len(), self.hi.cols());
        let cols = self.hi.cols();
        for (i, ui) in u.iter().enumerate() {
            let (su, su_err) = two_prod(s, *ui);
            for (j, vj) in v.iter().enumerate() {
                let (p, p_err) = two_prod(su, *vj);
                let k = i * cols + j;
                let (h, e) = two_sum(self.hi.data[k], p);
                self.hi.data[k] = h;
                self.lo.data[k] += e + p_err + su_err * vj;
            }
        }
    }

    /// Nearest `f64` matrix.
    pub fn to_mat(&self) -> Mat {
        Mat {
            rows: self.hi.rows,
            cols: self.hi.cols,
            data: self.hi.data.iter().zip(&self.lo.data).map(|(h, l)| h + l).collect(),
        }
    }

    /// Solves `X G = B` for symmetric `G = self` (so `G Xᵀ = Bᵀ`).
    pub fn solve_right(&self, b: &Compensated) -> Result<Mat> {
        let g = self.to_mat();
        let n = g.rows();
        if !g.is_square() || b.hi.cols() != n {
            return Err(Error::DimensionMismatch {
                op: "Compensated::solve_right",
                expected: format!("square G and B with {} columns", g.rows()),
                got: format!("G {}x{}, B {}x{}", g.rows(), g.cols(), b.hi.rows(), b.hi.cols()),
            });
        }
        let f = lu(&g).ok_or(Error::Singular("Compensated::solve_right"))?;
        let mut out = Mat::zeros(b.hi.rows(), n);
        for r in 0..b.hi.rows() {
            let rhs_hi = b.hi.row_slice(r);
            let rhs_lo = b.lo.row_slice(r);
            let rhs: Vec<f64> = rhs_hi.iter().zip(rhs_lo).map(|(h, l)| h + l).collect();
            let mut x = f.solve_vec(&rhs);
            for _ in 0..REFINE_STEPS {
                let resid: Vec<f64> = (0..n)
                    .map(|i| {
                        let (mut h, mut l) = (rhs_hi[i], rhs_lo[i]);
                        for (j, xj) in x.iter().enumerate() {
                            let (p, p_err) = two_prod(self.hi[(i, j)], *xj);
                            let (s, e) = two_sum(h, -p);
                            h = s;
                            l += e - p_err - self.lo[(i, j)] * xj;
                        }
                        h + l
                    })
                    .collect();
                let dx = f.solve_vec(&resid);
                let step = norm(&dx);
                for (xi, d) in x.iter_mut().zip(&dx) {
                    *xi += d;
                }
                if step <= f64::EPSILON * norm(&x) {
                    break;
                }
            }
            for (j, v) in x.into_iter().enumerate() {
                out[(r, j)] = v;
            }
        }
        Ok(out)
    }
}

const REFINE_STEPS: usize = 10;

pub fn inverse(a: &Mat) -> Result<Mat> {
    solve(a, &Mat::identity(a.rows()))
}

/// Determinant via LU (zero for numerically singular input).
pub fn determinant(a: &Mat) -> f64 {
    assert!(a.is_square());
    match lu(a) {
        None => 0.0,
        Some(f) => (0..a.rows()).fold(f.sign, |d, i| d * f.lu[(i, i)]),
    }
}

/// `log det` of a symmetric positive definite matrix, by Cholesky.
pub fn log_det_spd(a: &Mat) -> Result<f64> {
    assert!(a.is_square());
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    let mut acc = 0.0;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 {
            return Err(Error::Singular("log_det_spd"));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        acc += d.ln();
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(2.0 * acc)
}

/// Numerical rank by Gaussian elimination with full pivoting; pivots below
/// `tol · max|entry|` count as zero.
pub fn rank(a: &Mat, tol: f64) -> usize {
    let mut m = a.clone();
    let scale = m.max_abs_entry();
    if scale == 0.0 {
        return 0;
    }
    let (rows, cols) = (m.rows(), m.cols());
    let mut rank = 0;
    let mut used_cols = vec![false; cols];
    for _ in 0..rows.min(cols) {
        let mut best = (0.0, 0, 0);
        for i in rank..rows {
            for (j, used) in used_cols.iter().enumerate() {
                if !used && m[(i, j)].abs() > best.0 {
                    best = (m[(i, j)].abs(), i, j);
                }
            }
        }
        if best.0 <= tol * scale {
            break;
        }
        let (_, pi, pj) = best;
        for j in 0..cols {
            let tmp = m[(rank, j)];
            m[(rank, j)] = m[(pi, j)];
            m[(pi, j)] = tmp;
        }
        used_cols[pj] = true;
        for i in (rank + 1)..rows {
            let f = m[(i, pj)] / m[(rank, pj)];
            for j in 0..cols {
                let v = m[(rank, j)];
                m[(i, j)] -= f * v;
            }
        }
        rank += 1;
    }
    rank
}

const DARE_TOL: f64 = 1e-12;
const DARE_MAX_ITERS: usize = 100_000;

/// Steady-state predictor Riccati equation by fixed-point iteration.
///
/// Iterates `P ← APAᵀ − APCᵀ(CPCᵀ+R)⁻¹CPAᵀ + Q` from `P₀ = Q` and returns
/// `(P, L)` with `L = APCᵀ(CPCᵀ+R)⁻¹`.
pub fn solve_dare(a: &Mat, c: &Mat, q: &Mat, r: &Mat) -> Result<(Mat, Mat)> {
    let n = a.rows();
    let p_out = c.rows();
    if !a.is_square() || c.cols() != n || q.rows() != n || !q.is_square() || r.rows() != p_out || !r.is_square() {
        return Err(Error::DimensionMismatch {
            op: "solve_dare",
            expected: format!("A {n}x{n}, C {p_out}x{n}, Q {n}x{n}, R {p_out}x{p_out}"),
            got: format!(
                "A {}x{}, C {}x{}, Q {}x{}, R {}x{}",
                a.rows(),
                a.cols(),
                c.rows(),
                c.cols(),
                q.rows(),
                q.cols(),
                r.rows(),
                r.cols()
            ),
        });
    }
    let at = a.transpose();
    let ct = c.transpose();
    let mut p = q.clone();
    for _ in 0..DARE_MAX_ITERS {
        let next = dare_map(a, &at, c, &ct, q, r, &p)?;
        let delta = next.sub(&p).frobenius();
        p = next;
        if !p.is_finite() {
            return Err(Error::NonFinite("solve_dare"));
        }
        if delta < DARE_TOL {
            let gain = predictor_gain(a, c, &ct, r, &p)?;
            return Ok((p, gain));
        }
    }
    Err(Error::NonConvergence {
        what: "DARE fixed-point iteration",
        iterations: DARE_MAX_ITERS,
    })
}

fn predictor_gain(a: &Mat, c: &Mat, ct: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let s = c.matmul(p).matmul(ct).add(r);
    // L = A P Cᵀ S⁻¹  ⇔  Lᵀ = S⁻¹ C P Aᵀ (S symmetric)
    let apct = a.matmul(p).matmul(ct);
    Ok(solve(&s, &apct.transpose())?.transpose())
}

fn dare_map(a: &Mat, at: &Mat, c: &Mat, ct: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let gain = predictor_gain(a, c, ct, r, p)?;
    let apat = a.matmul(p).matmul(at);
    let cpat = c.matmul(p).matmul(at);
    let mut next = apat.sub(&gain.matmul(&cpat)).add(q);
    next.symmetrize();
    Ok(next)
}

/// DARE residual `‖P − (APAᵀ − APCᵀ(CPCᵀ+R)⁻¹CPAᵀ + Q)‖_F`.
pub fn dare_residual(a: &Mat, c: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<f64> {
    let next = dare_map(a, &a.transpose(), c, &c.transpose(), q, r, p)?;
    Ok(next.sub(p).frobenius())
}

/// `[A⁰, A¹, …, A^k_max]` by repeated multiplication.
pub fn mat_power_seq(a: &Mat, k_max: usize) -> Vec<Mat> {
    assert!(a.is_square(), "mat_power_seq needs a square matrix");
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(Mat::identity(a.rows()));
    for k in 1..=k_max {
        let next = out[k - 1].matmul(a);
        out.push(next);
    }
    out
}

/// Evaluates `Σ c_i A^{m−i}` for coefficients `c_0..c_m` (highest power first).
pub fn poly_eval_mat(coeffs: &[f64], a: &Mat) -> Mat {
    let n = a.rows();
    let mut acc = Mat::zeros(n, n);
    for c in coeffs {
        acc = acc.matmul(a);
        for i in 0..n {
            acc[(i, i)] += c;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn operator_norm_basic_cases() {
        assert_abs_diff_eq!(operator_norm(&Mat::identity(2)), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(operator_norm(&Mat::diag(&[3.0, -4.0])), 4.0, epsilon = 1e-14);
        let swap = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_abs_diff_eq!(operator_norm(&swap), 1.0, epsilon = 1e-14);
        assert_eq!(operator_norm(&Mat::zeros(3, 2)), 0.0);
    }

    #[test]
    fn operator_norm_of_jordan_power_matches_closed_form() {
        // ‖[[1,k],[0,1]]‖ = (k + √(k²+4)) / 2
        for k in [1.0, 5.0, 100.0] {
            let j = Mat::from_rows(&[[1.0, k], [0.0, 1.0]]);
            let expect = 0.5 * (k + (k * k + 4.0_f64).sqrt());
            assert_abs_diff_eq!(operator_norm(&j), expect, epsilon = 1e-10 * expect);
        }
    }

    #[test]
    fn eigenvalues_of_small_examples() {
        let j = Mat::from_rows(&[[1.0, 1.0], [0.0, 1.0]]);
        let e = eigenvalues_small(&j).unwrap();
        assert!(e.values.iter().all(|v| (v - 1.0).norm() < 1e-12));
        assert_abs_diff_eq!(e.max_abs, 1.0, epsilon = 1e-12);

        let swap = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let mut re: Vec<f64> = eigenvalues_small(&swap).unwrap().values.iter().map(|v| v.re).collect();
        re.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(re[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(re[1], 1.0, epsilon = 1e-12);

        let (c, s) = (0.7_f64.cos(), 0.7_f64.sin());
        let rot = Mat::from_rows(&[[c, -s], [s, c]]);
        let e = eigenvalues_small(&rot).unwrap();
        for v in &e.values {
            assert_abs_diff_eq!(v.re, 0.764842187, epsilon = 1e-8);
            assert_abs_diff_eq!(v.im.abs(), 0.644217687, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(e.max_abs, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_of_block_triangular_rotation_are_exact() {
        let (c, s) = (0.7_f64.cos(), 0.7_f64.sin());
        let a = Mat::from_rows(&[
            [c, -s, 1.0, 0.0],
            [s, c, 0.0, 1.0],
            [0.0, 0.0, c, -s],
            [0.0, 0.0, s, c],
        ]);
        let e = eigenvalues_small(&a).unwrap();
        assert_eq!(e.values.len(), 4);
        for v in &e.values {
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(v.re, c, epsilon = 1e-12);
        }
    }

    #[test]
    fn eigenvalues_of_companion_matrix_recover_roots() {
        // roots 0.5, -0.25, 2 → z³ − 2.25 z² + 0.375 z + 0.25
        let a = Mat::from_rows(&[[2.25, -0.375, -0.25], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let mut re: Vec<f64> = eigenvalues_small(&a).unwrap().values.iter().map(|v| v.re).collect();
        re.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(re[0], -0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(re[1], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(re[2], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn eigenvalues_reject_rectangular() {
        assert!(eigenvalues_small(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn sherman_morrison_examples() {
        let (k, p) = sherman_morrison(&Mat::identity(1), &[1.0]);
        assert_abs_diff_eq!(k[0], 0.5);
        assert_abs_diff_eq!(p[(0, 0)], 0.5);

        let p0 = Mat::from_rows(&[[2.0, 0.3], [0.3, 1.0]]);
        let (k, p) = sherman_morrison(&p0, &[0.0, 0.0]);
        assert_eq!(k, vec![0.0, 0.0]);
        assert_eq!(p, p0);

        let (k, p) = sherman_morrison(&Mat::identity(2), &[1.0, 0.0]);
        assert_eq!(k, vec![0.5, 0.0]);
        assert_eq!(p, Mat::diag(&[0.5, 1.0]));
    }

    #[test]
    fn scalar_dare_matches_quadratic_root() {
        // P = a²P − a²P²/(P+1) + 1 with a = 0.5 ⇔ P² − 0.25P − 1 = 0
        let p_star = (0.25 + (0.0625_f64 + 4.0).sqrt()) / 2.0;
        let l_star = 0.5 * p_star / (p_star + 1.0);
        let one = Mat::identity(1);
        let (p, l) = solve_dare(&Mat::diag(&[0.5]), &one, &one, &one).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], p_star, epsilon = 1e-10);
        assert_abs_diff_eq!(l[(0, 0)], l_star, epsilon = 1e-10);
        assert_abs_diff_eq!(p[(0, 0)], 1.132782, epsilon = 1e-6);
        assert_abs_diff_eq!(l[(0, 0)], 0.265565, epsilon = 1e-6);
    }

    #[test]
    fn dare_degenerate_cases() {
        let a = Mat::from_rows(&[[0.5, 0.1], [0.0, 0.3]]);
        let c = Mat::from_rows(&[[1.0, 0.0]]);
        let (p, l) = solve_dare(&a, &c, &Mat::zeros(2, 2), &Mat::identity(1)).unwrap();
        assert_eq!(p.max_abs_entry(), 0.0);
        assert_eq!(l.max_abs_entry(), 0.0);

        let q = Mat::diag(&[2.0]);
        let (p, l) = solve_dare(&Mat::diag(&[0.0]), &Mat::identity(1), &q, &Mat::identity(1)).unwrap();
        assert_eq!(p, q);
        assert_eq!(l[(0, 0)], 0.0);
    }

    #[test]
    fn dare_on_marginal_swap_system_has_small_residual() {
        let a = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let c = Mat::from_rows(&[[1.0, 0.5]]);
        let q = Mat::diag(&[0.015, 0.015]);
        let r = Mat::diag(&[0.015]);
        let (p, l) = solve_dare(&a, &c, &q, &r).unwrap();
        assert!(dare_residual(&a, &c, &q, &r, &p).unwrap() <= 1e-9);
        let al = a.sub(&l.matmul(&c));
        assert!(spectral_radius(&al).unwrap() < 1.0);
    }

    #[test]
    fn power_sequence_examples() {
        let seq = mat_power_seq(&Mat::identity(2), 3);
        assert_eq!(seq.len(), 4);
        assert!(seq.iter().all(|m| *m == Mat::identity(2)));
        let j = Mat::from_rows(&[[1.0, 1.0], [0.0, 1.0]]);
        assert_eq!(mat_power_seq(&j, 5)[5], Mat::from_rows(&[[1.0, 5.0], [0.0, 1.0]]));
        let swap = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(mat_power_seq(&swap, 2)[2], Mat::identity(2));
    }

    #[test]
    fn rank_and_log_det() {
        let m = Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert_eq!(rank(&m, 1e-9), 1);
        assert_eq!(rank(&Mat::identity(3), 1e-9), 3);
        assert_eq!(rank(&Mat::zeros(2, 2), 1e-9), 0);
        let spd = Mat::from_rows(&[[4.0, 1.0], [1.0, 3.0]]);
        assert_abs_diff_eq!(log_det_spd(&spd).unwrap(), 11.0_f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(determinant(&spd), 11.0, epsilon = 1e-12);
    }

    #[test]
    fn from_vec_validates() {
        assert!(Mat::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Mat::from_vec(1, 1, vec![f64::NAN]).is_err());
        assert!(Mat::from_vec(1, 2, vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn compensated_solve_recovers_exact_solution_on_ill_conditioned_gram() {
        // Integer monomial features keep G and B exactly representable.
        let d = 6;
        let x_true = [1.0, -2.0, 3.0, -4.0, 5.0, -6.0];
        let mut g = Compensated::zeros(d, d);
        let mut b = Compensated::zeros(1, d);
        for k in 1..=12 {
            let z: Vec<f64> = (0..d as i32).map(|i| f64::from(k).powi(i)).collect();
            let y = dot(&x_true, &z);
            g.add_outer(1.0, &z, &z);
            b.add_outer(1.0, &[y], &z);
        }
        let x = g.solve_right(&b).unwrap();
        for (j, want) in x_true.iter().enumerate() {
            assert_abs_diff_eq!(x[(0, j)], *want, epsilon = 1e-9);
        }
    }
}
