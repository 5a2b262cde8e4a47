//! Small dense solvers with diagonal equilibration.

use nalgebra::{DMatrix, DVector};

fn equilibration(a: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let d = a[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        scale[i] = 1.0 / d.sqrt();
    }
    Some(scale)
}

/// Cholesky factorization of `S A S` with `S = diag(a_ii)^{-1/2}`.
pub struct SpdFactor {
    scale: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>) -> Option<Self> {
        let scale = equilibration(a)?;
        let mut scaled = a.clone();
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                scaled[(i, j)] *= scale[i] * scale[j];
            }
        }
        let chol = nalgebra::Cholesky::new(scaled)?;
        Some(Self { scale, chol })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let rhs = b.component_mul(&self.scale);
        self.chol.solve(&rhs).component_mul(&self.scale)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut rhs = b.clone();
        for j in 0..rhs.ncols() {
            for i in 0..rhs.nrows() {
                rhs[(i, j)] *= self.scale[i];
            }
        }
        let mut x = self.chol.solve(&rhs);
        for j in 0..x.ncols() {
            for i in 0..x.nrows() {
                x[(i, j)] *= self.scale[i];
            }
        }
        x
    }
}

pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    SpdFactor::new(a).map(|f| f.solve(b))
}

/// Solves `A X = B` for a general square `A`, trying Cholesky first.
pub fn solve_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(f) = SpdFactor::new(a) {
        return Some(f.solve_matrix(b));
    }
    let lu = a.clone().lu();
    let x = lu.solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Adds `ridge * max(1, max |a_ii|)` to the diagonal.
pub fn with_ridge(a: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let scale = a.diagonal().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut out = a.clone();
    for i in 0..a.nrows() {
        out[(i, i)] += ridge * scale;
    }
    out
}
