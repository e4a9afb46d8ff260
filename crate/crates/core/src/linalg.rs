//! Jacobi-preconditioned conjugate gradients for the symmetric positive
//! definite systems produced by assembly, Newton steps and active-set solves.

use crate::error::{Error, Result};
use crate::fem::CsrMatrix;

/// Default relative residual tolerance for inner solves.
pub const DEFAULT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMethod {
    JacobiPcg,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSolveReport {
    pub iterations: usize,
    /// True residual `‖Ax − b‖₂` of the returned vector.
    pub residual_norm: f64,
    pub rhs_norm: f64,
    pub method: SolverMethod,
}

#[derive(Clone, Copy, Debug)]
pub struct PcgOptions {
    pub tol: f64,
    /// Defaults to `10 n + 100` when `None`.
    pub max_iter: Option<usize>,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = b` to `‖Ax − b‖₂ ≤ tol ‖b‖₂`, starting from zero.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, LinearSolveReport)> {
    pcg(a, b, None, PcgOptions { tol, max_iter: None }, |_, _| {})
}

/// Preconditioned CG with an optional initial guess. `observer` sees every
/// iterate (iteration count, current x), which the tests use to inspect the
/// convergence history.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: PcgOptions,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, LinearSolveReport)> {
    let n = a.dim();
    assert_eq!(b.len(), n, "right-hand side length");
    let max_iter = opts.max_iter.unwrap_or(10 * n + 100);
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let bnorm = norm(b);
    let target = opts.tol * bnorm;
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    let true_residual = |x: &[f64], r: &mut [f64], ap: &mut [f64]| {
        a.matvec_into(x, ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        norm(r)
    };

    let mut rnorm = true_residual(&x, &mut r, &mut ap);
    let mut stalled_restarts = 0;
    while rnorm > target {
        // one CG cycle from the current true residual
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let cycle_start = rnorm;
        loop {
            if iterations >= max_iter {
                let residual_norm = true_residual(&x, &mut r, &mut ap);
                return Err(Error::LinearSolve {
                    report: LinearSolveReport {
                        iterations,
                        residual_norm,
                        rhs_norm: bnorm,
                        method: SolverMethod::JacobiPcg,
                    },
                });
            }
            a.matvec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            observer(iterations, &x);
            if norm(&r) <= target {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        rnorm = true_residual(&x, &mut r, &mut ap);
        if rnorm > target {
            // recursive residual drifted below the true one; restart, but give up
            // once restarts stop making progress
            if rnorm > 0.5 * cycle_start {
                stalled_restarts += 1;
            }
            if stalled_restarts > 3 {
                return Err(Error::LinearSolve {
                    report: LinearSolveReport {
                        iterations,
                        residual_norm: rnorm,
                        rhs_norm: bnorm,
                        method: SolverMethod::JacobiPcg,
                    },
                });
            }
        }
    }
    Ok((
        x,
        LinearSolveReport {
            iterations,
            residual_norm: rnorm,
            rhs_norm: bnorm,
            method: SolverMethod::JacobiPcg,
        },
    ))
}
