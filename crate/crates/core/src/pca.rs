//! Principal components: fit an orthonormal basis on training rows, project
//! samples to scores, and back-project scores or weights to input space.
//!
//! Two algebraically equivalent fitting routes are provided. The covariance
//! route solves the D x D eigenproblem; the Gram route solves the N x N
//! inner-product eigenproblem and maps eigenvectors back, which is the cheap
//! path whenever there are fewer samples than features. `fit` picks the route
//! from the data shape; both stay public so they can be checked against each
//! other.

use crate::error::{Error, Result};
use crate::linalg::{self, matmul, Matrix};

/// Tolerance handed to the Jacobi solver, relative to the Frobenius norm.
const EIGEN_TOL: f64 = 1e-12;

/// Relative eigenvalue cutoff below which a Gram-route direction is treated
/// as numerically null and replaced by a deterministic orthonormal fill-in.
const RANK_TOL: f64 = 1e-12;

/// Fitted principal-component basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// Column means of the training rows, length D.
    pub mean: Vec<f64>,
    /// D x k_max matrix whose orthonormal columns are the components in
    /// descending-variance order.
    pub components: Matrix,
    /// Sample variance (divisor N-1) captured by each component.
    pub variances: Vec<f64>,
}

impl PcaModel {
    /// Number of components held by the model.
    pub fn k_max(&self) -> usize {
        self.components.cols()
    }

    /// Input dimensionality D.
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Projects `x` onto the first `k` components: `components[:, :k]^T (x - mean)`.
    pub fn transform(&self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        if k > self.k_max() {
            return Err(Error::parameter(format!(
                "transform: k = {k} exceeds k_max = {}",
                self.k_max()
            )));
        }
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "transform: sample has length {}, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let d = self.input_dim();
        let mut scores = vec![0.0; k];
        for (c, score) in scores.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..d {
                acc += self.components.get(i, c) * (x[i] - self.mean[i]);
            }
            *score = acc;
        }
        Ok(scores)
    }

    /// Maps `scores` back to input space: `mean + components[:, :k] * scores`.
    pub fn inverse_transform(&self, scores: &[f64]) -> Result<Vec<f64>> {
        let k = scores.len();
        if k > self.k_max() {
            return Err(Error::parameter(format!(
                "inverse_transform: {k} scores exceed k_max = {}",
                self.k_max()
            )));
        }
        let mut out = self.mean.clone();
        for (c, &s) in scores.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.components.get(i, c) * s;
            }
        }
        Ok(out)
    }

    /// Copy of the model keeping only the first `k` components.
    pub fn truncated(&self, k: usize) -> Result<PcaModel> {
        if k < 1 || k > self.k_max() {
            return Err(Error::parameter(format!(
                "truncated: k = {k} outside 1..={}",
                self.k_max()
            )));
        }
        let d = self.input_dim();
        let mut components = Matrix::zeros(d, k);
        for c in 0..k {
            for r in 0..d {
                components.set(r, c, self.components.get(r, c));
            }
        }
        Ok(PcaModel {
            mean: self.mean.clone(),
            components,
            variances: self.variances[..k].to_vec(),
        })
    }

    /// Linear combination of the first `weights.len()` components without the
    /// mean: the centered-space direction `sum_c weights[c] * component_c`.
    pub fn combine_components(&self, weights: &[f64]) -> Result<Vec<f64>> {
        if weights.len() > self.k_max() {
            return Err(Error::parameter(format!(
                "combine_components: {} weights exceed k_max = {}",
                weights.len(),
                self.k_max()
            )));
        }
        let mut out = vec![0.0; self.input_dim()];
        for (c, &w) in weights.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.components.get(i, c) * w;
            }
        }
        Ok(out)
    }
}

/// Fits a PCA model on the rows of `train`, keeping `k_max` components.
/// Uses the Gram route when N <= D, the covariance route otherwise.
pub fn fit(train: &Matrix, k_max: usize) -> Result<PcaModel> {
    check_fit_args(train, k_max)?;
    if train.rows() <= train.cols() {
        fit_gram_route(train, k_max)
    } else {
        fit_covariance_route(train, k_max)
    }
}

/// Fits via the D x D sample covariance eigenproblem.
pub fn fit_covariance_route(train: &Matrix, k_max: usize) -> Result<PcaModel> {
    check_fit_args(train, k_max)?;
    let (n, d) = (train.rows(), train.cols());
    let mean = column_means(train);
    let centered = center_rows(train, &mean);

    let mut cov = matmul(&centered.transpose(), &centered)?;
    let scale = 1.0 / (n as f64 - 1.0);
    for r in 0..d {
        for c in 0..d {
            cov.set(r, c, cov.get(r, c) * scale);
        }
    }
    symmetrize(&mut cov);

    let eig = linalg::symmetric_eigen(&cov, EIGEN_TOL)?;
    let mut components = Matrix::zeros(d, k_max);
    for c in 0..k_max {
        for r in 0..d {
            components.set(r, c, eig.vectors.get(r, c));
        }
    }
    let variances = eig.values[..k_max].iter().map(|&v| v.max(0.0)).collect();
    Ok(PcaModel {
        mean,
        components,
        variances,
    })
}

/// Fits via the N x N Gram eigenproblem, mapping eigenvectors back to input
/// space and renormalizing. Numerically null directions are replaced with a
/// deterministic orthonormal completion so the component matrix always has
/// orthonormal columns.
pub fn fit_gram_route(train: &Matrix, k_max: usize) -> Result<PcaModel> {
    check_fit_args(train, k_max)?;
    let (n, d) = (train.rows(), train.cols());
    let mean = column_means(train);
    let centered = center_rows(train, &mean);

    let mut gram = matmul(&centered, &centered.transpose())?;
    let scale = 1.0 / (n as f64 - 1.0);
    for r in 0..n {
        for c in 0..n {
            gram.set(r, c, gram.get(r, c) * scale);
        }
    }
    symmetrize(&mut gram);

    let eig = linalg::symmetric_eigen(&gram, EIGEN_TOL)?;
    let rank_cutoff = eig.values[0].max(0.0) * RANK_TOL;

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k_max);
    let mut variances = Vec::with_capacity(k_max);
    for c in 0..k_max {
        let lambda = eig.values[c].max(0.0);
        let mapped = if lambda > rank_cutoff && lambda > 0.0 {
            let u = eig.vectors.column(c);
            let mut v = vec![0.0; d];
            for r in 0..n {
                let ur = u[r];
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi += centered.get(r, i) * ur;
                }
            }
            orthonormalize_against(&mut v, &columns).then_some(v)
        } else {
            None
        };
        match mapped {
            Some(mut v) => {
                linalg::fix_sign(&mut v);
                columns.push(v);
                variances.push(lambda);
            }
            None => {
                let mut v = completion_direction(d, &columns);
                linalg::fix_sign(&mut v);
                columns.push(v);
                variances.push(0.0);
            }
        }
    }

    let mut components = Matrix::zeros(d, k_max);
    for (c, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            components.set(r, c, v);
        }
    }
    Ok(PcaModel {
        mean,
        components,
        variances,
    })
}

/// Total sample variance of the rows of `train` (divisor N-1), i.e. the trace
/// of the sample covariance. Upper bound for any partial sum of component
/// variances.
pub fn total_variance(train: &Matrix) -> f64 {
    let n = train.rows();
    if n < 2 {
        return 0.0;
    }
    let mean = column_means(train);
    let mut acc = 0.0;
    for r in 0..n {
        for (c, &m) in mean.iter().enumerate() {
            let dev = train.get(r, c) - m;
            acc += dev * dev;
        }
    }
    acc / (n as f64 - 1.0)
}

fn check_fit_args(train: &Matrix, k_max: usize) -> Result<()> {
    let (n, d) = (train.rows(), train.cols());
    if n < 2 {
        return Err(Error::parameter(format!(
            "fit requires at least 2 rows, got {n}"
        )));
    }
    let limit = (n - 1).min(d);
    if k_max < 1 || k_max > limit {
        return Err(Error::parameter(format!(
            "k_max = {k_max} outside 1..={limit} for {n} rows of dimension {d}"
        )));
    }
    Ok(())
}

fn column_means(m: &Matrix) -> Vec<f64> {
    let (n, d) = (m.rows(), m.cols());
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (c, acc) in mean.iter_mut().enumerate() {
            *acc += m.get(r, c);
        }
    }
    for acc in mean.iter_mut() {
        *acc /= n as f64;
    }
    mean
}

fn center_rows(m: &Matrix, mean: &[f64]) -> Matrix {
    let (n, d) = (m.rows(), m.cols());
    let mut out = Matrix::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            out.set(r, c, m.get(r, c) - mean[c]);
        }
    }
    out
}

/// Forces exact symmetry after products that are symmetric only up to
/// floating-point noise.
fn symmetrize(m: &mut Matrix) {
    let n = m.rows();
    for r in 0..n {
        for c in (r + 1)..n {
            let v = 0.5 * (m.get(r, c) + m.get(c, r));
            m.set(r, c, v);
            m.set(c, r, v);
        }
    }
}

/// One Gram-Schmidt pass of `v` against `basis` followed by normalization.
/// Returns false when `v` collapses to (near) zero.
fn orthonormalize_against(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    for b in basis {
        let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi -= dot * bi;
        }
    }
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-300 {
        return false;
    }
    for vi in v.iter_mut() {
        *vi /= norm;
    }
    true
}

/// Deterministic unit vector orthogonal to every column in `basis`: the
/// standard basis vector with the largest residual after projection, ties to
/// the smallest index.
fn completion_direction(d: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for j in 0..d {
        let mut v = vec![0.0; d];
        v[j] = 1.0;
        for b in basis {
            let dot = b[j];
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= dot * bi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if best.as_ref().is_none_or(|(n, _)| norm > *n) {
            best = Some((norm, v));
        }
    }
    let (norm, mut v) = best.expect("dimension is at least 1");
    assert!(norm > 0.0, "no completion direction left; k_max exceeds D");
    for vi in v.iter_mut() {
        *vi /= norm;
    }
    v
}
