//! Dense row-major matrices and a cyclic-Jacobi symmetric eigensolver.
//!
//! Everything here is plain `f64` with no external numerical dependencies.
//! The eigensolver is only intended for the symmetric positive semidefinite
//! matrices that arise from covariance and Gram computations; problem sizes
//! stay in the hundreds-to-low-thousands range where Jacobi is plenty fast
//! and easy to validate.

use crate::error::{Error, Result};

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Zero-filled matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from a row-major slice. Fails if the length does not
    /// match `rows * cols` or any entry is non-finite.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "expected {rows}x{cols} = {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::parameter("matrix entries must be finite"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Row `r` as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Column `c` copied into a new vector.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Underlying row-major storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::shape(format!(
                "matvec: matrix has {} cols, vector has {}",
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }
}

/// Standard product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(format!(
            "matmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    // i-k-j loop order keeps the inner accesses contiguous.
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            let b_row = b.row(k);
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
    Ok(out)
}

/// Eigenvalues sorted descending with matching unit-norm eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

const MAX_JACOBI_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.
///
/// Sweeps run until the largest off-diagonal magnitude drops below
/// `off_diag_tol * ||a||_F`. The returned eigenvalues are sorted descending,
/// eigenvector columns are permuted to match, and each eigenvector's sign is
/// fixed so its largest-magnitude entry is positive.
pub fn symmetric_eigen(a: &Matrix, off_diag_tol: f64) -> Result<EigenResult> {
    if a.rows != a.cols {
        return Err(Error::shape(format!(
            "symmetric_eigen: matrix is {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    for r in 0..n {
        for c in (r + 1)..n {
            if (a.get(r, c) - a.get(c, r)).abs() > 1e-10 {
                return Err(Error::shape(format!(
                    "symmetric_eigen: entries ({r},{c}) and ({c},{r}) differ by more than 1e-10"
                )));
            }
        }
    }

    let mut work = a.clone();
    let mut vectors = Matrix::identity(n);
    let threshold = off_diag_tol * a.frobenius_norm();

    let mut converged = n <= 1 || max_off_diagonal(&work) <= threshold;
    for _ in 0..MAX_JACOBI_SWEEPS {
        if converged {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                rotate(&mut work, &mut vectors, p, q);
            }
        }
        converged = max_off_diagonal(&work) <= threshold;
    }
    if !converged {
        return Err(Error::Convergence(format!(
            "Jacobi did not reach off-diagonal tolerance in {MAX_JACOBI_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| work.get(j, j).total_cmp(&work.get(i, i)));

    let values: Vec<f64> = order.iter().map(|&i| work.get(i, i)).collect();
    let mut sorted = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = vectors.column(src);
        fix_sign(&mut col);
        for r in 0..n {
            sorted.set(r, dst, col[r]);
        }
    }

    Ok(EigenResult {
        values,
        vectors: sorted,
    })
}

/// Flips `v` so its largest-magnitude entry is positive; ties resolve to the
/// earliest index, which keeps repeated runs bit-identical.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut idx = 0;
    let mut best = 0.0_f64;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn max_off_diagonal(a: &Matrix) -> f64 {
    let n = a.rows;
    let mut m = 0.0_f64;
    for p in 0..n {
        for q in (p + 1)..n {
            m = m.max(a.get(p, q).abs());
        }
    }
    m
}

/// One Jacobi rotation annihilating entry (p, q); Numerical Recipes style
/// with the stable half-angle formulation.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = 0.5 * (aqq - app) / apq;
    let t = if theta.abs() > 1e150 {
        // Avoid overflow in theta^2; the rotation is tiny anyway.
        0.5 / theta
    } else {
        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
        sign / (theta.abs() + (1.0 + theta * theta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    let n = a.rows;
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);

    for j in 0..n {
        if j != p && j != q {
            let ajp = a.get(j, p);
            let ajq = a.get(j, q);
            a.set(j, p, ajp - s * (ajq + tau * ajp));
            a.set(j, q, ajq + s * (ajp - tau * ajq));
            a.set(p, j, a.get(j, p));
            a.set(q, j, a.get(j, q));
        }
    }
    for j in 0..n {
        let vjp = v.get(j, p);
        let vjq = v.get(j, q);
        v.set(j, p, vjp - s * (vjq + tau * vjp));
        v.set(j, q, vjq + s * (vjp - tau * vjq));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_rows(rows, cols, data).unwrap()
    }

    fn seeded_symmetric(n: usize, seed: u64) -> Matrix {
        let raw = seeded_matrix(n, n, seed);
        let mut sym = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let v = 0.5 * (raw.get(i, j) + raw.get(j, i));
                sym.set(i, j, v);
            }
        }
        sym
    }

    /// Independent triple-loop product used as the matmul oracle.
    fn matmul_oracle(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn matmul_identity_is_noop() {
        let a = seeded_matrix(3, 3, 7);
        let prod = matmul(&Matrix::identity(3), &a).unwrap();
        assert_eq!(prod, a);
    }

    #[test]
    fn matmul_hand_example() {
        let a = Matrix::from_rows(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_rows(2, 1, vec![1.0, 1.0]).unwrap();
        let prod = matmul(&a, &b).unwrap();
        assert_eq!(prod.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let a = seeded_matrix(5, 4, 11);
        let b = seeded_matrix(4, 3, 13);
        let fast = matmul(&a, &b).unwrap();
        let slow = matmul_oracle(&a, &b);
        assert!(max_abs_diff(&fast, &slow) < 1e-12);
    }

    #[test]
    fn matmul_shape_mismatch_errors() {
        let a = seeded_matrix(2, 3, 1);
        let b = seeded_matrix(2, 2, 2);
        assert!(matches!(matmul(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_associativity_on_seeded_triples() {
        for seed in 0..5u64 {
            let a = seeded_matrix(4, 6, seed * 3 + 1);
            let b = seeded_matrix(6, 5, seed * 3 + 2);
            let c = seeded_matrix(5, 3, seed * 3 + 3);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = left.frobenius_norm().max(1.0);
            assert!(max_abs_diff(&left, &right) / scale < 1e-9);
        }
    }

    #[test]
    fn eigen_diagonal_matrix() {
        let a = Matrix::from_rows(3, 3, vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]).unwrap();
        let eig = symmetric_eigen(&a, 1e-12).unwrap();
        assert_eq!(eig.values, vec![3.0, 2.0, 1.0]);
        // Axis-aligned eigenvectors in descending-eigenvalue order.
        let expected = [(0usize, 0usize), (2, 1), (1, 2)];
        for &(axis, col) in &expected {
            for r in 0..3 {
                let want = if r == axis { 1.0 } else { 0.0 };
                assert!((eig.vectors.get(r, col) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eigen_textbook_two_by_two() {
        let a = Matrix::from_rows(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let eig = symmetric_eigen(&a, 1e-14).unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-12);
        assert!((eig.values[1] - 1.0).abs() < 1e-12);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((eig.vectors.get(0, 0) - inv_sqrt2).abs() < 1e-12);
        assert!((eig.vectors.get(1, 0) - inv_sqrt2).abs() < 1e-12);
        // Sign convention puts the positive entry first.
        assert!((eig.vectors.get(0, 1) - inv_sqrt2).abs() < 1e-12);
        assert!((eig.vectors.get(1, 1) + inv_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn eigen_reconstructs_seeded_symmetric() {
        let a = seeded_symmetric(10, 42);
        let eig = symmetric_eigen(&a, 1e-14).unwrap();
        // V diag(l) V^T must reproduce A.
        let mut scaled = eig.vectors.clone();
        for c in 0..10 {
            for r in 0..10 {
                scaled.set(r, c, scaled.get(r, c) * eig.values[c]);
            }
        }
        let recon = matmul(&scaled, &eig.vectors.transpose()).unwrap();
        assert!(max_abs_diff(&recon, &a) < 1e-8);
    }

    #[test]
    fn eigen_pairs_satisfy_definition() {
        let a = seeded_symmetric(8, 3);
        let eig = symmetric_eigen(&a, 1e-14).unwrap();
        let norm = a.frobenius_norm();
        for c in 0..8 {
            let v = eig.vectors.column(c);
            let av = a.matvec(&v).unwrap();
            for r in 0..8 {
                assert!((av[r] - eig.values[c] * v[r]).abs() < 1e-7 * norm);
            }
        }
    }

    #[test]
    fn eigen_trace_and_orthonormality_invariants() {
        for seed in [5u64, 17, 99] {
            let n = 12;
            let a = seeded_symmetric(n, seed);
            let eig = symmetric_eigen(&a, 1e-14).unwrap();
            let trace: f64 = (0..n).map(|i| a.get(i, i)).sum();
            let sum: f64 = eig.values.iter().sum();
            assert!((trace - sum).abs() < 1e-9);

            let vtv = matmul(&eig.vectors.transpose(), &eig.vectors).unwrap();
            assert!(max_abs_diff(&vtv, &Matrix::identity(n)) < 1e-8);
        }
    }

    #[test]
    fn eigen_rejects_bad_inputs() {
        let rect = seeded_matrix(2, 3, 1);
        assert!(matches!(
            symmetric_eigen(&rect, 1e-10),
            Err(Error::Shape(_))
        ));
        let asym = Matrix::from_rows(2, 2, vec![1.0, 2.0, 0.5, 1.0]).unwrap();
        assert!(matches!(
            symmetric_eigen(&asym, 1e-10),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn eigen_unmeetable_tolerance_exhausts_sweep_budget() {
        // A negative threshold can never be reached (the off-diagonal
        // maximum is nonnegative), so the sweep budget must trip.
        let a = seeded_symmetric(6, 12);
        assert!(matches!(
            symmetric_eigen(&a, -1.0),
            Err(Error::Convergence(_))
        ));
    }

    #[test]
    fn eigen_deterministic_across_calls() {
        let a = seeded_symmetric(9, 8);
        let e1 = symmetric_eigen(&a, 1e-13).unwrap();
        let e2 = symmetric_eigen(&a, 1e-13).unwrap();
        assert_eq!(e1.values, e2.values);
        assert_eq!(e1.vectors, e2.vectors);
    }
}
