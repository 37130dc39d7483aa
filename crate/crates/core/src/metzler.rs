//! Metzler matrices: detection, Perron–Frobenius dominant eigenpair via a
//! shifted power method, Hurwitz test and the positive-solution criterion
//! `A x + b = 0, x >= 0`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::LinalgError;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Build from rows; every row must have the same length as the row count.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(LinalgError::Dimension { expected: n, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Induced ∞-norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        SquareMatrix { n: self.n, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Dominant eigenvalue and its nonnegative eigenvector (unit ∞-norm).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenpair {
    pub lambda: f64,
    pub v: Vec<f64>,
    pub iterations: usize,
}

pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 100_000;
pub const METZLER_TOL: f64 = 1e-12;
pub const LUENBERGER_NEG_TOL: f64 = 1e-10;

/// First off-diagonal entry below `-tol`, if any.
pub fn metzler_violation(a: &SquareMatrix, tol: f64) -> Option<(usize, usize, f64)> {
    let n = a.dim();
    for i in 0..n {
        for j in 0..n {
            if i != j && !(a[(i, j)] >= -tol) {
                return Some((i, j, a[(i, j)]));
            }
        }
    }
    None
}

/// True iff every off-diagonal entry is `>= -tol`.
pub fn is_metzler(a: &SquareMatrix, tol: f64) -> bool {
    metzler_violation(a, tol).is_none()
}

fn require_metzler(a: &SquareMatrix) -> Result<(), LinalgError> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    match metzler_violation(a, METZLER_TOL) {
        Some((row, col, value)) => Err(LinalgError::NotMetzler { row, col, value }),
        None => Ok(()),
    }
}

fn normalize_inf(v: &mut [f64]) -> f64 {
    let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Power iteration on `B = A + σI`. Returns `(λ_B, v, iterations)` or `None` on cap hit.
fn power_iterate(b: &SquareMatrix, start: Vec<f64>) -> Option<(f64, Vec<f64>, usize)> {
    let mut v = start;
    normalize_inf(&mut v);
    for it in 1..=POWER_MAX_ITER {
        let mut w = b.mul_vec(&v);
        let norm = normalize_inf(&mut w);
        if norm == 0.0 {
            // B v = 0: v is an eigenvector for eigenvalue 0 of B.
            return Some((0.0, v, it));
        }
        let delta = w.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = w;
        if delta <= POWER_TOL {
            let bv = b.mul_vec(&v);
            let num: f64 = v.iter().zip(&bv).map(|(a, b)| a * b).sum();
            let den: f64 = v.iter().map(|a| a * a).sum();
            return Some((num / den, v, it));
        }
    }
    None
}

/// Dominant (Perron–Frobenius) eigenpair of a Metzler matrix.
///
/// Iterates on `A + σI` with `σ = 1 + max |a_ii|`, which is nonnegative with a
/// positive diagonal. On hitting the iteration cap the iteration restarts once
/// from a perturbed all-ones vector before giving up.
pub fn dominant_eigenpair(a: &SquareMatrix) -> Result<Eigenpair, LinalgError> {
    require_metzler(a)?;
    let n = a.dim();
    if n == 0 {
        return Err(LinalgError::Dimension { expected: 1, got: 0 });
    }
    let sigma = 1.0 + (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let mut b = a.clone();
    for i in 0..n {
        b[(i, i)] += sigma;
        for j in 0..n {
            // Clamp tolerated round-off negatives so B stays nonnegative.
            if i != j && b[(i, j)] < 0.0 {
                b[(i, j)] = 0.0;
            }
        }
    }
    let starts = [
        vec![1.0; n],
        (0..n).map(|i| 1.0 + 0.1 * ((i as f64 + 1.0) * 0.7548776662).fract()).collect(),
    ];
    let mut total = 0;
    for start in starts {
        if let Some((lambda_b, mut v, it)) = power_iterate(&b, start) {
            total += it;
            v.iter_mut().for_each(|x| *x = x.max(0.0));
            return Ok(Eigenpair { lambda: lambda_b - sigma, v, iterations: total });
        }
        total += POWER_MAX_ITER;
    }
    Err(LinalgError::NoConvergence { iterations: total })
}

/// For Metzler `A`: Hurwitz iff the dominant eigenvalue is negative.
pub fn is_hurwitz(a: &SquareMatrix) -> Result<bool, LinalgError> {
    Ok(dominant_eigenpair(a)?.lambda < 0.0)
}

/// Solve `A x = -b` and return `x` if it is (numerically) nonnegative.
///
/// For Metzler `A` and `b >> 0` a nonnegative solution exists iff `A` is
/// Hurwitz. Singular `A` yields `None`.
pub fn luenberger_test(a: &SquareMatrix, b: &[f64]) -> Result<Option<Vec<f64>>, LinalgError> {
    require_metzler(a)?;
    if b.len() != a.dim() {
        return Err(LinalgError::Dimension { expected: a.dim(), got: b.len() });
    }
    if !b.iter().all(|&v| v > 0.0) {
        return Err(LinalgError::NotStronglyPositive);
    }
    let rhs = nalgebra::DVector::from_iterator(b.len(), b.iter().map(|v| -v));
    let Some(x) = a.to_nalgebra().lu().solve(&rhs) else {
        return Ok(None);
    };
    if x.iter().any(|v| !v.is_finite() || *v < -LUENBERGER_NEG_TOL) {
        return Ok(None);
    }
    Ok(Some(x.iter().map(|v| v.max(0.0)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn metzler_detection() {
        assert!(is_metzler(&m(&[&[-1.0, 0.0], &[0.0, -1.0]]), 0.0));
        assert!(!is_metzler(&m(&[&[0.0, -0.5], &[0.0, 0.0]]), 0.0));
        assert!(is_metzler(&m(&[&[0.0, -1e-13], &[0.0, 0.0]]), 1e-12));
        let (k1, k2) = (0.015, 0.301);
        let s3 = m(&[&[-1.0, 0.0, k2], &[1.0 / k1, -1.0 / k1, 0.0], &[0.0, 1.0, -1.0]]);
        assert!(is_metzler(&s3, 0.0));
    }

    #[test]
    fn eigenpairs_small() {
        let e = dominant_eigenpair(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((e.lambda - 1.0).abs() < 1e-12);
        assert!((e.v[0] - 1.0).abs() < 1e-12 && (e.v[1] - 1.0).abs() < 1e-12);

        let e = dominant_eigenpair(&m(&[&[-2.0, 1.0], &[1.0, -2.0]])).unwrap();
        assert!((e.lambda + 1.0).abs() < 1e-12);
        assert!((e.v[0] - 1.0).abs() < 1e-12 && (e.v[1] - 1.0).abs() < 1e-12);

        let e = dominant_eigenpair(&m(&[&[-1.0, 0.0], &[0.0, -3.0]])).unwrap();
        assert!((e.lambda + 1.0).abs() < 1e-10);
        assert!((e.v[0] - 1.0).abs() < 1e-10 && e.v[1].abs() < 1e-10);
    }

    #[test]
    fn non_metzler_rejected() {
        let a = m(&[&[0.0, -1.0], &[1.0, 0.0]]);
        assert!(matches!(dominant_eigenpair(&a), Err(LinalgError::NotMetzler { row: 0, col: 1, .. })));
        assert!(luenberger_test(&a, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn hurwitz_examples() {
        assert!(is_hurwitz(&m(&[&[-2.0, 1.0], &[1.0, -2.0]])).unwrap());
        assert!(!is_hurwitz(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap());
        assert!(is_hurwitz(&m(&[&[-1.0, 0.0], &[0.0, -1.0]])).unwrap());
    }

    #[test]
    fn luenberger_examples() {
        let x = luenberger_test(&m(&[&[-1.0, 0.0], &[0.0, -1.0]]), &[1.0, 1.0]).unwrap().unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
        let x = luenberger_test(&m(&[&[-2.0, 1.0], &[1.0, -2.0]]), &[1.0, 1.0]).unwrap().unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert_eq!(luenberger_test(&m(&[&[0.0, 1.0], &[1.0, 0.0]]), &[1.0, 1.0]).unwrap(), None);
        // singular Metzler matrix
        assert_eq!(luenberger_test(&m(&[&[-1.0, 1.0], &[1.0, -1.0]]), &[1.0, 1.0]).unwrap(), None);
        assert_eq!(
            luenberger_test(&m(&[&[-1.0, 0.0], &[0.0, -1.0]]), &[1.0, 0.0]),
            Err(LinalgError::NotStronglyPositive)
        );
    }
}
