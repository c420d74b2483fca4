//! Dense vector/matrix primitives, sphere operators and the Jacobi oracle.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
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

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Mat::zeros(diag.len(), diag.len());
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_cols<C: AsRef<[f64]>>(cols: &[C]) -> Result<Self> {
        let rows = cols.first().map_or(0, |c| c.as_ref().len());
        let mut m = Mat::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            m.set_col(j, c.as_ref())?;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major backing storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_col(&mut self, c: usize, v: &[f64]) -> Result<()> {
        if v.len() != self.rows {
            return Err(Error::shape(format!(
                "column of length {} does not fit {} rows",
                v.len(),
                self.rows
            )));
        }
        for (r, &x) in v.iter().enumerate() {
            self[(r, c)] = x;
        }
        Ok(())
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|c| self.col(c)).collect()
    }

    /// Copy of rows `start..end`.
    pub fn row_block(&self, start: usize, end: usize) -> Mat {
        Mat {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Copy of the leading `k` columns.
    pub fn leading_cols(&self, k: usize) -> Mat {
        let mut m = Mat::zeros(self.rows, k);
        for r in 0..self.rows {
            m.row_mut(r).copy_from_slice(&self.row(r)[..k]);
        }
        m
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        Ok(out)
    }

    /// `self * v`.
    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::shape(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    /// `selfᵀ * w`.
    pub fn t_mat_vec(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.rows {
            return Err(Error::shape(format!(
                "vector of length {} against {} rows",
                w.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &x) in w.iter().enumerate() {
            axpy(x, self.row(r), &mut out);
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        if self.shape() != other.shape() {
            return Err(Error::shape("matrix difference of mismatched shapes"));
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// Largest |Sᵢⱼ − Sⱼᵢ|; infinite for non-square input.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for c in r + 1..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)]).abs());
            }
        }
        worst
    }

    /// Symmetric to `rel_tol` relative to the Frobenius norm.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.is_square() && self.asymmetry() <= rel_tol * self.frobenius_norm()
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Result<Mat> {
        if !self.is_square() {
            return Err(Error::shape("only square matrices can be symmetrized"));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in r + 1..self.cols {
                let m = 0.5 * (self[(r, c)] + self[(c, r)]);
                out[(r, c)] = m;
                out[(c, r)] = m;
            }
        }
        Ok(out)
    }

    /// `(1/n) XᵀX` for an `n x d` sample matrix.
    pub fn gram(&self) -> Mat {
        let mut g = Mat::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            let x = self.row(r);
            for a in 0..self.cols {
                if x[a] == 0.0 {
                    continue;
                }
                axpy(x[a], x, g.row_mut(a));
            }
        }
        if self.rows > 0 {
            g.scale(1.0 / self.rows as f64);
        }
        g
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scaled(alpha: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| alpha * v).collect()
}

/// Returns `x / ‖x‖`, or a domain error for the zero vector.
pub fn normalized(x: &[f64]) -> Result<Vec<f64>> {
    let n = norm(x);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Domain(format!("cannot normalize vector of norm {n}")));
    }
    Ok(scaled(1.0 / n, x))
}

const UNIT_TOL: f64 = 1e-8;

fn check_unit(v: &[f64]) -> Result<()> {
    let n = norm(v);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::Domain(format!(
            "expected a unit vector, got norm {n}"
        )));
    }
    Ok(())
}

/// Projects `y` onto the tangent space of the sphere at `v`: `y − ⟨y,v⟩v`.
pub fn tangent_project(v: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if v.len() != y.len() {
        return Err(Error::shape(format!(
            "tangent projection of length {} onto point of length {}",
            y.len(),
            v.len()
        )));
    }
    check_unit(v)?;
    let mut out = y.to_vec();
    axpy(-dot(y, v), v, &mut out);
    Ok(out)
}

/// Sphere retraction `(v + z) / ‖v + z‖`.
pub fn retract(v: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    if v.len() != z.len() {
        return Err(Error::shape(format!(
            "step of length {} at point of length {}",
            z.len(),
            v.len()
        )));
    }
    check_unit(v)?;
    if z.iter().all(|&x| x == 0.0) {
        return Ok(v.to_vec());
    }
    let moved: Vec<f64> = v.iter().zip(z).map(|(a, b)| a + b).collect();
    let n = norm(&moved);
    if n < 1e-300 {
        return Err(Error::DegenerateStep { norm: n });
    }
    Ok(scaled(1.0 / n, &moved))
}

const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis for the column span of `v` (modified Gram–Schmidt,
/// applied twice per column).
pub fn orthonormalize(v: &Mat) -> Result<Mat> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(v.cols());
    let mut rank = 0;
    for c in 0..v.cols() {
        let original = v.col(c);
        let scale = norm(&original);
        let mut w = original;
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(q, &w);
                axpy(-proj, q, &mut w);
            }
        }
        let n = norm(&w);
        if scale > 0.0 && n > RANK_TOL * scale {
            rank += 1;
            basis.push(scaled(1.0 / n, &w));
        }
    }
    if rank < v.cols() {
        return Err(Error::Rank {
            rank,
            cols: v.cols(),
        });
    }
    Mat::from_cols(&basis)
}

/// Seeded Haar-distributed orthogonal matrix: Q from the QR factorization of a
/// standard-normal matrix, with R's diagonal positive.
pub fn random_orthogonal(d: usize, seed: u64) -> Result<Mat> {
    if d == 0 {
        return Err(Error::config("random_orthogonal needs d >= 1"));
    }
    let mut rng = rng::stream(seed, rng::streams::ORTHOGONAL);
    let data: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let g = Mat::from_vec(d, d, data)?;
    // Gram–Schmidt leaves R with a positive diagonal, which pins down Q.
    orthonormalize(&g)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors on the columns, aligned with `eigenvalues`.
    pub eigenvectors: Mat,
}

impl SymEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.col(i)
    }

    /// Leading `k` eigenvectors as a `d x k` matrix.
    pub fn top(&self, k: usize) -> Mat {
        self.eigenvectors.leading_cols(k)
    }

    /// Trailing `k` eigenvectors ordered by ascending eigenvalue.
    pub fn bottom(&self, k: usize) -> Mat {
        let d = self.dim();
        let cols: Vec<Vec<f64>> = (0..k).map(|i| self.vector(d - 1 - i)).collect();
        Mat::from_cols(&cols).expect("columns share the matrix height")
    }

    /// `QΛQᵀ`.
    pub fn reconstruct(&self) -> Mat {
        let d = self.dim();
        let mut out = Mat::zeros(d, d);
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let q = self.vector(k);
            for r in 0..d {
                axpy(lambda * q[r], &q, out.row_mut(r));
            }
        }
        out
    }
}

pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const JACOBI_MAX_DIM: usize = 4096;
const JACOBI_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-8;

/// Cyclic Jacobi eigendecomposition with the default sweep budget.
pub fn jacobi_eigh(s: &Mat) -> Result<SymEig> {
    jacobi_eigh_with(s, JACOBI_MAX_SWEEPS)
}

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps every off-diagonal pair with a plane rotation until the
/// off-diagonal Frobenius norm drops below `1e-12 * ‖S‖_F`. Eigenvalues come
/// back sorted descending (stable for ties) and each eigenvector's
/// largest-magnitude entry is made positive.
pub fn jacobi_eigh_with(s: &Mat, max_sweeps: usize) -> Result<SymEig> {
    if !s.is_square() {
        return Err(Error::shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    let n = s.rows();
    if n == 0 {
        return Err(Error::shape("eigendecomposition of an empty matrix"));
    }
    if n > JACOBI_MAX_DIM {
        return Err(Error::shape(format!(
            "dense oracle limited to d <= {JACOBI_MAX_DIM}, got {n}"
        )));
    }
    if !s.all_finite() {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let scale = s.frobenius_norm();
    if s.asymmetry() > SYMMETRY_TOL * scale {
        return Err(Error::shape(format!(
            "matrix is not symmetric (max asymmetry {:e})",
            s.asymmetry()
        )));
    }

    let mut a = s.symmetrized()?;
    let mut q = Mat::identity(n);
    let threshold = JACOBI_TOL * scale;
    let off_norm = |a: &Mat| {
        let mut sum = 0.0;
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    sum += a[(r, c)] * a[(r, c)];
                }
            }
        }
        sum.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&a);
        if off <= threshold {
            break;
        }
        if sweeps == max_sweeps {
            return Err(Error::Convergence {
                sweeps,
                off_norm: off,
            });
        }
        for p in 0..n - 1 {
            for r in p + 1..n {
                rotate(&mut a, &mut q, p, r);
            }
        }
        sweeps += 1;
    }

    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // sort_by is stable, so equal eigenvalues keep their sweep order.
    order.sort_by(|&x, &y| diag[y].total_cmp(&diag[x]));

    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = q.col(src);
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        vectors.set_col(dst, &v)?;
    }
    Ok(SymEig {
        eigenvalues: order.iter().map(|&i| diag[i]).collect(),
        eigenvectors: vectors,
    })
}

/// One Jacobi rotation zeroing `a[p][r]`, accumulated into `q`.
fn rotate(a: &mut Mat, q: &mut Mat, p: usize, r: usize) {
    let apr = a[(p, r)];
    if apr == 0.0 {
        return;
    }
    let theta = (a[(r, r)] - a[(p, p)]) / (2.0 * apr);
    let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let n = a.rows();
    for k in 0..n {
        let (akp, akr) = (a[(k, p)], a[(k, r)]);
        a[(k, p)] = c * akp - s * akr;
        a[(k, r)] = s * akp + c * akr;
    }
    for k in 0..n {
        let (apk, ark) = (a[(p, k)], a[(r, k)]);
        a[(p, k)] = c * apk - s * ark;
        a[(r, k)] = s * apk + c * ark;
    }
    a[(p, r)] = 0.0;
    a[(r, p)] = 0.0;
    for k in 0..n {
        let (qkp, qkr) = (q[(k, p)], q[(k, r)]);
        q[(k, p)] = c * qkp - s * qkr;
        q[(k, r)] = s * qkp + c * qkr;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn jacobi_identity() {
        let e = jacobi_eigh(&Mat::identity(3)).unwrap();
        assert!(close(&e.eigenvalues, &[1.0, 1.0, 1.0], 1e-15));
    }

    #[test]
    fn jacobi_diagonal() {
        let e = jacobi_eigh(&Mat::from_diag(&[5.0, 2.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![5.0, 2.0]);
        assert_eq!(e.eigenvectors, Mat::identity(2));
    }

    #[test]
    fn jacobi_two_by_two() {
        let s = Mat::from_rows(&[[2.0, 1.0], [1.0, 1.0]]).unwrap();
        let e = jacobi_eigh(&s).unwrap();
        let sqrt5 = 5f64.sqrt();
        assert!((e.eigenvalues[0] - (3.0 + sqrt5) / 2.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - (3.0 - sqrt5) / 2.0).abs() < 1e-12);
        assert!((e.eigenvalues[0] - 2.6180340).abs() < 1e-7);
        assert!((e.eigenvalues[1] - 0.3819660).abs() < 1e-7);
    }

    #[test]
    fn jacobi_rejects_bad_input() {
        let rect = Mat::zeros(2, 3);
        assert!(matches!(jacobi_eigh(&rect), Err(Error::Shape(_))));
        let asym = Mat::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(jacobi_eigh(&asym), Err(Error::Shape(_))));
    }

    #[test]
    fn jacobi_reports_non_convergence() {
        let s = Mat::from_rows(&[[2.0, 1.0, 0.5], [1.0, 1.0, 0.3], [0.5, 0.3, 3.0]]).unwrap();
        assert!(matches!(
            jacobi_eigh_with(&s, 0),
            Err(Error::Convergence { sweeps: 0, .. })
        ));
    }

    #[test]
    fn jacobi_sign_convention() {
        let s = Mat::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]).unwrap();
        let e = jacobi_eigh(&s).unwrap();
        for v in e.eigenvectors.columns() {
            let lead = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn tangent_project_examples() {
        assert_eq!(tangent_project(&[1.0, 0.0], &[1.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(tangent_project(&[0.0, 1.0], &[0.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let h = 0.5f64.sqrt();
        let p = tangent_project(&[h, h], &[1.0, 0.0]).unwrap();
        assert!(close(&p, &[0.5, -0.5], 1e-15));
        assert!(matches!(
            tangent_project(&[2.0, 0.0], &[1.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn retract_examples() {
        assert_eq!(retract(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(retract(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        let h = 0.5f64.sqrt();
        assert!(close(&retract(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), &[h, h], 1e-15));
        assert!(matches!(
            retract(&[1.0, 0.0], &[-1.0, 0.0]),
            Err(Error::DegenerateStep { .. })
        ));
    }

    #[test]
    fn orthonormalize_examples() {
        assert_eq!(orthonormalize(&Mat::identity(3)).unwrap(), Mat::identity(3));
        let single = Mat::from_cols(&[[3.0, 4.0]]).unwrap();
        assert!(close(orthonormalize(&single).unwrap().as_slice(), &[0.6, 0.8], 1e-15));
        let two = Mat::from_cols(&[[1.0, 0.0], [1.0, 1.0]]).unwrap();
        assert!(close(orthonormalize(&two).unwrap().as_slice(), &[1.0, 0.0, 0.0, 1.0], 1e-15));
    }

    #[test]
    fn orthonormalize_reports_rank() {
        let dup = Mat::from_cols(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 0.0]]).unwrap();
        match orthonormalize(&dup) {
            Err(Error::Rank { rank, cols }) => assert_eq!((rank, cols), (2, 3)),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn random_orthogonal_examples() {
        let one = random_orthogonal(1, 3).unwrap();
        assert_eq!(one[(0, 0)].abs(), 1.0);
        assert_eq!(random_orthogonal(5, 11).unwrap(), random_orthogonal(5, 11).unwrap());
        assert_ne!(random_orthogonal(5, 11).unwrap(), random_orthogonal(5, 12).unwrap());
        for seed in 0..10 {
            let q = random_orthogonal(8, seed).unwrap();
            let err = q.transpose().matmul(&q).unwrap().sub(&Mat::identity(8)).unwrap();
            assert!(err.frobenius_norm() <= 1e-10);
        }
        assert!(random_orthogonal(0, 1).is_err());
    }

    #[test]
    fn jacobi_recovers_rotated_spectrum() {
        for seed in 0..20 {
            let d = 6;
            let q = random_orthogonal(d, seed).unwrap();
            let lambdas = [9.0, 5.0, 3.5, 2.0, 1.0, 0.25];
            let s = q
                .matmul(&Mat::from_diag(&lambdas))
                .unwrap()
                .matmul(&q.transpose())
                .unwrap()
                .symmetrized()
                .unwrap();
            let e = jacobi_eigh(&s).unwrap();
            assert!(close(&e.eigenvalues, &lambdas, 1e-8));
            for i in 0..d {
                let c = dot(&e.vector(i), &q.col(i)).abs().min(1.0);
                assert!(c.acos() < 1e-6, "column {i} off by {}", c.acos());
            }
            let rec = e.reconstruct().sub(&s).unwrap().frobenius_norm();
            assert!(rec <= 1e-8 * s.frobenius_norm());
        }
    }

    proptest! {
        #[test]
        fn retract_after_projection_is_unit(
            raw in proptest::collection::vec(-5.0f64..5.0, 4),
            y in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            prop_assume!(norm(&raw) > 1e-3);
            let v = normalized(&raw).unwrap();
            let z = tangent_project(&v, &y).unwrap();
            let r = retract(&v, &z).unwrap();
            prop_assert!((norm(&r) - 1.0).abs() <= 1e-12);
            prop_assert!(dot(&z, &v).abs() <= 1e-10 * norm(&y).max(1e-300));
        }

        #[test]
        fn tangent_projection_is_idempotent(
            raw in proptest::collection::vec(-5.0f64..5.0, 5),
            y in proptest::collection::vec(-5.0f64..5.0, 5),
        ) {
            prop_assume!(norm(&raw) > 1e-3);
            let v = normalized(&raw).unwrap();
            let once = tangent_project(&v, &y).unwrap();
            let twice = tangent_project(&v, &once).unwrap();
            prop_assert!(close(&once, &twice, 1e-12));
        }
    }
}
