//! Dense factorizations and iterative solvers.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;
pub type Vector = Array1<f64>;

/// Builds a row-major matrix, rejecting non-finite entries.
pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
    if data.len() != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "{} values for a {rows}x{cols} matrix",
            data.len()
        )));
    }
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("matrix entry {pos}")));
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Matrix,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "cholesky needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                let (x, y) = (a[[i, j]], a[[j, i]]);
                if (x - y).abs() > 1e-8 * x.abs().max(y.abs()).max(1.0) {
                    return Err(Error::DegenerateInput(format!(
                        "matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diag().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Solves `A x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lower.nrows();
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }

    pub fn solve(&self, b: ArrayView2<f64>) -> Result<Matrix> {
        if b.nrows() != self.lower.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "rhs has {} rows, system has {}",
                b.nrows(),
                self.lower.nrows()
            )));
        }
        let mut out = Array2::<f64>::zeros(b.raw_dim());
        for (c, col) in b.axis_iter(Axis(1)).enumerate() {
            let x = self.solve_vec(&col.to_vec());
            out.column_mut(c).assign(&Array1::from(x));
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.lower.nrows();
        self.solve(Array2::<f64>::eye(n).view()).expect("square identity")
    }
}

/// Solves `A X = B` for symmetric positive definite `A`, returning `X` and `ln|A|`.
pub fn cholesky_logdet_solve(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<(Matrix, f64)> {
    let chol = Cholesky::factor(a)?;
    let x = chol.solve(b)?;
    Ok((x, chol.log_det()))
}

/// Outcome of a conjugate-gradient solve. `converged == false` carries the
/// best iterate seen together with its residual.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vector,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    /// The operator showed `pᵀAp ≤ 0` along a search direction.
    pub indefinite: bool,
}

/// Conjugate gradient for a symmetric positive definite operator.
///
/// Stops once `‖A x − b‖₂ ≤ tol·‖b‖₂`.
pub fn conjugate_gradient<F>(apply_a: F, b: &Vector, tol: f64, max_iter: usize) -> CgSolution
where
    F: Fn(&Vector) -> Vector,
{
    let n = b.len();
    let b_norm = b.dot(b).sqrt();
    let mut x = Array1::<f64>::zeros(n);
    if b_norm == 0.0 {
        return CgSolution {
            x,
            iterations: 0,
            residual_norm: 0.0,
            converged: true,
            indefinite: false,
        };
    }
    let target = tol * b_norm;
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = r.dot(&r);
    let mut best = (x.clone(), rs.sqrt());
    let mut indefinite = false;
    let mut iterations = max_iter;
    for it in 1..=max_iter {
        let ap = apply_a(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            indefinite = true;
            iterations = it;
            break;
        }
        let alpha = rs / pap;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        let rs_new = r.dot(&r);
        let res = rs_new.sqrt();
        if res < best.1 {
            best = (x.clone(), res);
        }
        if res <= target {
            return CgSolution {
                x,
                iterations: it,
                residual_norm: res,
                converged: true,
                indefinite: false,
            };
        }
        let beta = rs_new / rs;
        p = &r + &(beta * &p);
        rs = rs_new;
    }
    CgSolution {
        x: best.0,
        iterations,
        residual_norm: best.1,
        converged: false,
        indefinite,
    }
}
