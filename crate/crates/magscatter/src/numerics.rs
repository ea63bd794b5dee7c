//! Dense complex linear algebra sized for coupled-mode problems.
//!
//! The matrices here are small (a handful of modes), so a straightforward
//! row-major dense layout with LU factorization and partial pivoting is both
//! simple and fast. Closed-form 2x2 / 3x3 inverses are kept public as
//! independent cross-checks for the factorization path.

use num_complex::Complex64;

use crate::error::NumericsError;
use crate::model::{build_a, build_b, build_c, build_d, FieldPoint, SystemModel};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::ONE;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn conjugate_transpose(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let lik = self[(i, k)];
                if lik == Complex64::ZERO {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += lik * rhs[(k, j)];
                }
            }
        }
        out
    }

    /// Largest absolute row sum (operator infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization (partial pivoting) of a square matrix, reusable across
/// right-hand sides at the same matrix.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
    /// Largest pivot magnitude seen during elimination.
    pub max_pivot: f64,
    /// Smallest pivot magnitude seen during elimination.
    pub min_pivot: f64,
}

impl LuFactors {
    /// Factor `m`. Fails with the offending pivot magnitude when a pivot
    /// column is numerically zero.
    pub fn new(m: &CMatrix) -> Result<Self, NumericsError> {
        if m.rows != m.cols {
            return Err(NumericsError::NotSquare {
                rows: m.rows,
                cols: m.cols,
            });
        }
        let n = m.rows;
        let mut lu = m.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = m.max_abs().max(1.0);
        let mut max_pivot: f64 = 0.0;
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            // Partial pivoting: bring the largest remaining entry of the
            // column to the diagonal.
            let mut best = k;
            let mut best_mag = lu[k * n + k].norm();
            for i in k + 1..n {
                let mag = lu[i * n + k].norm();
                if mag > best_mag {
                    best = i;
                    best_mag = mag;
                }
            }
            if best != k {
                for j in 0..n {
                    lu.swap(k * n + j, best * n + j);
                }
                perm.swap(k, best);
            }
            let pivot = lu[k * n + k];
            let pivot_mag = pivot.norm();
            if pivot_mag <= f64::EPSILON * scale {
                return Err(NumericsError::Singular { pivot: pivot_mag });
            }
            max_pivot = max_pivot.max(pivot_mag);
            min_pivot = min_pivot.min(pivot_mag);
            for i in k + 1..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor != Complex64::ZERO {
                    for j in k + 1..n {
                        let sub = factor * lu[k * n + j];
                        lu[i * n + j] -= sub;
                    }
                }
            }
        }
        Ok(Self {
            n,
            lu,
            perm,
            max_pivot,
            min_pivot,
        })
    }

    /// Cheap condition proxy: ratio of extreme pivot magnitudes. Order of
    /// magnitude only, but enough to flag a nearly singular solve.
    pub fn condition_estimate(&self) -> f64 {
        if self.min_pivot == 0.0 {
            f64::INFINITY
        } else {
            self.max_pivot / self.min_pivot
        }
    }

    /// Solve `M x = rhs` for one right-hand side.
    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>, NumericsError> {
        let n = self.n;
        if rhs.len() != n {
            return Err(NumericsError::DimensionMismatch {
                got: rhs.len(),
                expected: n,
            });
        }
        let mut x: Vec<Complex64> = (0..n).map(|i| rhs[self.perm[i]]).collect();
        // Forward substitution (unit lower factor).
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        Ok(x)
    }
}

/// Solve `M X = RHS` for a matrix of right-hand sides, with iterative
/// refinement, guaranteeing `max|M X - RHS| <= 1e-10 * max|RHS|` or failing
/// loudly.
pub fn solve_linear(m: &CMatrix, rhs: &CMatrix) -> Result<CMatrix, NumericsError> {
    if rhs.rows != m.rows {
        return Err(NumericsError::DimensionMismatch {
            got: rhs.rows,
            expected: m.rows,
        });
    }
    let factors = LuFactors::new(m)?;
    let tol = 1e-10 * rhs.max_abs().max(f64::MIN_POSITIVE);
    let n = m.rows;
    let mut x = CMatrix::zeros(n, rhs.cols);
    let mut col = vec![Complex64::ZERO; n];
    for p in 0..rhs.cols {
        for i in 0..n {
            col[i] = rhs[(i, p)];
        }
        let sol = solve_refined(&factors, m, &col, tol)?;
        for i in 0..n {
            x[(i, p)] = sol[i];
        }
    }
    Ok(x)
}

/// Solve `M x = rhs` for one right-hand side with the same residual
/// guarantee, scaled to this column.
pub fn solve_linear_vec(
    m: &CMatrix,
    rhs: &[Complex64],
) -> Result<Vec<Complex64>, NumericsError> {
    let factors = LuFactors::new(m)?;
    let rhs_scale = rhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = 1e-10 * rhs_scale.max(f64::MIN_POSITIVE);
    solve_refined(&factors, m, rhs, tol)
}

fn solve_refined(
    factors: &LuFactors,
    m: &CMatrix,
    rhs: &[Complex64],
    tol: f64,
) -> Result<Vec<Complex64>, NumericsError> {
    let mut x = factors.solve(rhs)?;
    for _ in 0..2 {
        let res = residual(m, &x, rhs);
        let res_norm = res.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if res_norm <= tol {
            return Ok(x);
        }
        let correction = factors.solve(&res)?;
        for (xi, ci) in x.iter_mut().zip(&correction) {
            *xi += ci;
        }
    }
    let res = residual(m, &x, rhs);
    let res_norm = res.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if res_norm <= tol {
        Ok(x)
    } else {
        Err(NumericsError::ResidualTooLarge {
            residual: res_norm,
            tolerance: tol,
        })
    }
}

fn residual(m: &CMatrix, x: &[Complex64], rhs: &[Complex64]) -> Vec<Complex64> {
    let n = m.rows;
    let mut r = rhs.to_vec();
    for i in 0..n {
        let mut acc = Complex64::ZERO;
        for j in 0..n {
            acc += m[(i, j)] * x[j];
        }
        r[i] -= acc;
    }
    r
}

/// Closed-form inverse of a 2x2 matrix (adjugate over determinant).
pub fn inverse_2x2(m: &CMatrix) -> Result<CMatrix, NumericsError> {
    assert!(m.rows == 2 && m.cols == 2, "inverse_2x2 needs a 2x2 matrix");
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if det.norm() <= f64::EPSILON * m.max_abs().max(1.0).powi(2) {
        return Err(NumericsError::Singular { pivot: det.norm() });
    }
    let mut out = CMatrix::zeros(2, 2);
    out[(0, 0)] = m[(1, 1)] / det;
    out[(0, 1)] = -m[(0, 1)] / det;
    out[(1, 0)] = -m[(1, 0)] / det;
    out[(1, 1)] = m[(0, 0)] / det;
    Ok(out)
}

/// Closed-form inverse of a 3x3 matrix (adjugate over determinant).
pub fn inverse_3x3(m: &CMatrix) -> Result<CMatrix, NumericsError> {
    assert!(m.rows == 3 && m.cols == 3, "inverse_3x3 needs a 3x3 matrix");
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
        m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)]
    };
    let det = m[(0, 0)] * cof(1, 2, 1, 2) - m[(0, 1)] * cof(1, 2, 0, 2) + m[(0, 2)] * cof(1, 2, 0, 1);
    if det.norm() <= f64::EPSILON * m.max_abs().max(1.0).powi(3) {
        return Err(NumericsError::Singular { pivot: det.norm() });
    }
    let mut out = CMatrix::zeros(3, 3);
    // Adjugate: transposed cofactor matrix with checkerboard signs.
    out[(0, 0)] = cof(1, 2, 1, 2) / det;
    out[(0, 1)] = -(m[(0, 1)] * m[(2, 2)] - m[(0, 2)] * m[(2, 1)]) / det;
    out[(0, 2)] = (m[(0, 1)] * m[(1, 2)] - m[(0, 2)] * m[(1, 1)]) / det;
    out[(1, 0)] = -cof(1, 2, 0, 2) / det;
    out[(1, 1)] = (m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]) / det;
    out[(1, 2)] = -(m[(0, 0)] * m[(1, 2)] - m[(0, 2)] * m[(1, 0)]) / det;
    out[(2, 0)] = cof(1, 2, 0, 1) / det;
    out[(2, 1)] = -(m[(0, 0)] * m[(2, 1)] - m[(0, 1)] * m[(2, 0)]) / det;
    out[(2, 2)] = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]) / det;
    Ok(out)
}

/// The four scattering parameters at one frequency, row-major:
/// `[S11, S12, S21, S22]` where `S_ab` is the response at port `a` to a
/// drive at port `b`.
pub type SParams = [Complex64; 4];

/// Precomputed pieces of the scattering relation that do not depend on
/// frequency, reused across a frequency sweep at a fixed field.
pub struct ScatteringKernel {
    a: CMatrix,
    b: CMatrix,
    c: CMatrix,
    d: CMatrix,
    dim: usize,
    /// Largest condition proxy seen across solves.
    pub worst_condition: std::cell::Cell<f64>,
}

impl ScatteringKernel {
    pub fn new(model: &SystemModel, field: FieldPoint) -> Result<Self, NumericsError> {
        let a = build_a(model, field).map_err(|e| NumericsError::Model(e.to_string()))?;
        let b = build_b(model).map_err(|e| NumericsError::Model(e.to_string()))?;
        let c = build_c(model.xi).map_err(|e| NumericsError::Model(e.to_string()))?;
        let d = build_d(&c, &b);
        let dim = a.rows();
        Ok(Self {
            a,
            b,
            c,
            d,
            dim,
            worst_condition: std::cell::Cell::new(1.0),
        })
    }

    /// Evaluate `S(w) = C + D [-i w I - A]^{-1} B` at a drive frequency in
    /// GHz.
    pub fn evaluate(&self, f_ghz: f64) -> Result<SParams, NumericsError> {
        let n = self.dim;
        let mut m = self.a.clone();
        // M = -i w I - A.
        let miw = Complex64::new(0.0, -crate::model::angular_ghz(f_ghz));
        for entry in m.data_mut() {
            *entry = -*entry;
        }
        for i in 0..n {
            m[(i, i)] += miw;
        }
        let factors = LuFactors::new(&m)?;
        let cond = factors.condition_estimate();
        if cond > self.worst_condition.get() {
            self.worst_condition.set(cond);
        }
        // Solve for both port columns of B at once.
        let mut x = CMatrix::zeros(n, 2);
        for p in 0..2 {
            let rhs: Vec<Complex64> = (0..n).map(|i| self.b[(i, p)]).collect();
            let col = factors.solve(&rhs)?;
            for i in 0..n {
                x[(i, p)] = col[i];
            }
        }
        let dx = self.d.matmul(&x);
        Ok([
            self.c[(0, 0)] + dx[(0, 0)],
            self.c[(0, 1)] + dx[(0, 1)],
            self.c[(1, 0)] + dx[(1, 0)],
            self.c[(1, 1)] + dx[(1, 1)],
        ])
    }
}

/// One-shot scattering evaluation at a single (frequency, field) point.
pub fn scattering(
    model: &SystemModel,
    f_ghz: f64,
    field: FieldPoint,
) -> Result<SParams, NumericsError> {
    ScatteringKernel::new(model, field)?.evaluate(f_ghz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solves_exactly() {
        let m = CMatrix::identity(3);
        let rhs = vec![
            Complex64::new(1.0, 2.0),
            Complex64::new(-0.5, 0.25),
            Complex64::new(0.0, -3.0),
        ];
        let x = solve_linear_vec(&m, &rhs).unwrap();
        for (a, b) in x.iter().zip(&rhs) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        let m = CMatrix::from_rows(&[
            vec![Complex64::ONE, Complex64::ONE],
            vec![Complex64::ONE, Complex64::ONE],
        ]);
        let err = LuFactors::new(&m).unwrap_err();
        match err {
            NumericsError::Singular { pivot } => assert!(pivot < 1e-12),
            other => panic!("expected singular error, got {other:?}"),
        }
    }
}
