//! Small dense matrices: storage, CSV export, and the two factorizations the
//! toolkit needs (symmetric eigendecomposition for PCA, Cholesky for
//! Gaussian similarity models). Sizes here are data-dimension or point-count
//! scale, so everything is plain row-major `Vec<f64>`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// Sets both (i, j) and (j, i).
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.set(i, j, v);
        self.set(j, i, v);
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Dense CSV, one matrix row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
    ///
    /// Returns `(eigenvalues, eigenvectors)` with eigenvector k stored as
    /// column k. Pairs are unsorted; callers order them as needed.
    pub fn sym_eigen(&self) -> Result<(Vec<f64>, SquareMatrix)> {
        if !self.is_symmetric(1e-9) {
            return Err(Error::InvalidArgument(
                "sym_eigen requires a symmetric matrix".into(),
            ));
        }
        let n = self.n;
        let mut a = self.clone();
        let mut v = SquareMatrix::identity(n);
        if n <= 1 {
            return Ok(((0..n).map(|i| a.get(i, i)).collect(), v));
        }

        let off = |m: &SquareMatrix| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    s += m.get(i, j) * m.get(i, j);
                }
            }
            s
        };
        let scale: f64 = self.data.iter().map(|x| x * x).sum::<f64>().max(1e-300);

        for _sweep in 0..100 {
            if off(&a) <= 1e-28 * scale {
                break;
            }
            for p in 0..n - 1 {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let app = a.get(p, p);
                    let aqq = a.get(q, q);
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;

                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }

        let eigenvalues: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        Ok((eigenvalues, v))
    }

    /// Cholesky factorization A = L·Lᵀ of a symmetric positive-definite
    /// matrix. Fails on any non-positive pivot.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let n = self.n;
        if !self.is_symmetric(1e-9) {
            return Err(Error::NotPositiveDefinite("matrix is not symmetric".into()));
        }
        let mut l = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::NotPositiveDefinite(format!(
                            "pivot {i} is {sum}"
                        )));
                    }
                    l.set(i, i, sum.sqrt());
                } else {
                    l.set(i, j, sum / l.get(j, j));
                }
            }
        }
        Ok(Cholesky { l })
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: SquareMatrix,
}

impl Cholesky {
    pub fn determinant(&self) -> f64 {
        let mut d = 1.0;
        for i in 0..self.l.n() {
            let lii = self.l.get(i, i);
            d *= lii * lii;
        }
        d
    }

    /// Solves A x = b via the factor (forward then backward substitution).
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.n();
        debug_assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    /// Quadratic form bᵀ A⁻¹ b.
    pub fn inv_quadratic_form(&self, b: &[f64]) -> f64 {
        let x = self.solve(b);
        b.iter().zip(&x).map(|(bi, xi)| bi * xi).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_diagonal_matrix_is_identity_rotation() {
        let m = SquareMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (vals, vecs) = m.sym_eigen().unwrap();
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((sorted[0] - 1.0).abs() < 1e-12);
        assert!((sorted[1] - 3.0).abs() < 1e-12);
        // Columns stay axis-aligned.
        for k in 0..2 {
            let col: Vec<f64> = (0..2).map(|i| vecs.get(i, k)).collect();
            let norm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_satisfies_definition() {
        // A v = λ v for every returned pair, checked against a fixed 4x4.
        let m = SquareMatrix::from_rows(&[
            vec![4.0, 1.0, 0.5, 0.0],
            vec![1.0, 3.0, 0.2, 0.3],
            vec![0.5, 0.2, 2.0, 0.1],
            vec![0.0, 0.3, 0.1, 1.0],
        ])
        .unwrap();
        let (vals, vecs) = m.sym_eigen().unwrap();
        for k in 0..4 {
            for i in 0..4 {
                let av: f64 = (0..4).map(|j| m.get(i, j) * vecs.get(j, k)).sum();
                assert!(
                    (av - vals[k] * vecs.get(i, k)).abs() < 1e-9,
                    "eigenpair {k} fails at row {i}"
                );
            }
        }
        // Trace is preserved.
        let sum: f64 = vals.iter().sum();
        assert!((sum - m.trace()).abs() < 1e-9);
    }

    #[test]
    fn cholesky_round_trip_and_solve() {
        let a = SquareMatrix::from_rows(&[
            vec![4.0, 2.0, 0.6],
            vec![2.0, 5.0, 1.5],
            vec![0.6, 1.5, 3.0],
        ])
        .unwrap();
        let ch = a.cholesky().unwrap();
        // det by cofactor expansion, computed by hand for this fixed matrix:
        // 4*(5*3-1.5*1.5) - 2*(2*3-1.5*0.6) + 0.6*(2*1.5-5*0.6) = 40.8
        assert!((ch.determinant() - 40.8).abs() < 1e-9);

        let b = vec![1.0, 2.0, 3.0];
        let x = ch.solve(&b);
        for i in 0..3 {
            let ax: f64 = (0..3).map(|j| a.get(i, j) * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-9);
        }
        let q = ch.inv_quadratic_form(&b);
        let direct: f64 = b.iter().zip(&x).map(|(bi, xi)| bi * xi).sum();
        assert!((q - direct).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(a.cholesky(), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn csv_export_shape() {
        let mut m = SquareMatrix::zeros(2);
        m.set_sym(0, 1, 2.5);
        let csv = m.to_csv();
        assert_eq!(csv, "0,2.5\n2.5,0\n");
    }
}
