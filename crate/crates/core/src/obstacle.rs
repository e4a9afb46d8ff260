//! Discrete obstacle problem `u ≤ ψ` for a fixed coefficient, solved by a
//! primal–dual active set iteration on the max-reformulation
//! `λ − max(0, λ + c(u − ψ)) = 0` with a lumped nodal multiplier.

use nalgebra::{DMatrix, DVector};

use crate::control::MatrixControlField;
use crate::error::{check_len, Error, Result};
use crate::fem::{CsrMatrix, FeSpace};
use crate::linalg::{self, PcgOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdasConfig {
    /// Constant of the max-reformulation; any `c > 0` has the same fixed point.
    pub c: f64,
    pub max_iters: usize,
    pub tol_feas: f64,
    pub tol_comp: f64,
    /// Nodes with `λ > active_tol · ‖f‖` count as strongly active.
    pub active_tol: f64,
    pub linear_tol: f64,
}

impl Default for PdasConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iters: 200,
            tol_feas: 1e-10,
            tol_comp: 1e-10,
            active_tol: 1e-8,
            linear_tol: linalg::DEFAULT_TOL,
        }
    }
}

/// Per-node constraint handled by [`pdas`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeConstraint {
    Free,
    /// Homogeneous Dirichlet node; no multiplier is reported.
    Dirichlet,
    /// Equality `x_i = v`; the multiplier is reported but unconstrained in sign.
    Fixed(f64),
    /// Inequality `x_i ≤ v` with multiplier `λ_i ≥ 0`.
    Upper(f64),
}

#[derive(Clone, Debug)]
pub struct PdasOutcome {
    pub x: Vec<f64>,
    /// Lumped multiplier density `(b − K x)_i / m_i` on constrained nodes.
    pub lambda: Vec<f64>,
    /// Upper-bound nodes held at their bound.
    pub active: Vec<bool>,
    pub iterations: usize,
}

fn active_indices(active: &[bool]) -> Vec<usize> {
    active.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i).collect()
}

/// Primal–dual active set method for `min ½xᵀKx − bᵀx` subject to
/// per-node constraints, with `K` the full (non-eliminated) operator.
///
/// Each sweep fixes active nodes at their bound, solves the reduced SPD
/// system for the rest, recovers the lumped multiplier from the residual
/// and reclassifies `A = {i : λ_i + c(x_i − ψ_i) > 0}`. Terminates once the
/// active set repeats.
#[allow(clippy::too_many_arguments)]
pub fn pdas(
    k: &CsrMatrix,
    b: &[f64],
    lumped: &[f64],
    constraints: &[NodeConstraint],
    c: f64,
    max_iters: usize,
    linear_tol: f64,
    initial_active: Option<&[bool]>,
) -> Result<PdasOutcome> {
    let n = k.dim();
    check_len("load vector", n, b.len())?;
    check_len("constraint list", n, constraints.len())?;
    assert!(c > 0.0, "complementarity constant must be positive");
    let is_upper = |i: usize| matches!(constraints[i], NodeConstraint::Upper(_));
    let mut active: Vec<bool> = match initial_active {
        Some(a) => (0..n).map(|i| a[i] && is_upper(i)).collect(),
        None => vec![false; n],
    };
    let mut previous = active.clone();
    let mut x = vec![0.0; n];
    let mut lambda = vec![0.0; n];
    for iteration in 1..=max_iters {
        let mut free = vec![false; n];
        for i in 0..n {
            match constraints[i] {
                NodeConstraint::Free => free[i] = true,
                NodeConstraint::Dirichlet => x[i] = 0.0,
                NodeConstraint::Fixed(v) => x[i] = v,
                NodeConstraint::Upper(v) => {
                    if active[i] {
                        x[i] = v;
                    } else {
                        free[i] = true;
                    }
                }
            }
        }
        let (kr, map) = k.restrict(&free);
        let br = k.reduce_rhs(b, &x, &free, &map);
        let guess: Vec<f64> = map.iter().map(|&i| x[i]).collect();
        let (xr, _) = linalg::pcg(
            &kr,
            &br,
            Some(&guess),
            PcgOptions {
                tol: linear_tol,
                max_iter: None,
            },
            |_, _| {},
        )?;
        for (&i, v) in map.iter().zip(xr) {
            x[i] = v;
        }

        let kx = k.matvec(&x);
        for i in 0..n {
            lambda[i] = match constraints[i] {
                NodeConstraint::Free | NodeConstraint::Dirichlet => 0.0,
                NodeConstraint::Fixed(_) => (b[i] - kx[i]) / lumped[i],
                NodeConstraint::Upper(_) if active[i] => (b[i] - kx[i]) / lumped[i],
                NodeConstraint::Upper(_) => 0.0,
            };
        }

        let next: Vec<bool> = (0..n)
            .map(|i| match constraints[i] {
                NodeConstraint::Upper(v) => lambda[i] + c * (x[i] - v) > 0.0,
                _ => false,
            })
            .collect();
        if next == active {
            return Ok(PdasOutcome {
                x,
                lambda,
                active,
                iterations: iteration,
            });
        }
        previous = std::mem::replace(&mut active, next);
    }
    Err(Error::ActiveSetCycling {
        iterations: max_iters,
        last: active_indices(&active),
        previous: active_indices(&previous),
    })
}

/// Solution of the discrete obstacle problem.
#[derive(Clone, Debug)]
pub struct ViSolution {
    pub u: Vec<f64>,
    /// Lumped nodal multiplier density.
    pub lambda: Vec<f64>,
    /// Nodes held at the obstacle.
    pub active_set: Vec<bool>,
    /// Active nodes whose multiplier exceeds the classification threshold.
    pub strongly_active: Vec<bool>,
    pub iterations: usize,
}

impl ViSolution {
    pub fn num_active(&self) -> usize {
        self.active_set.iter().filter(|&&a| a).count()
    }
}

/// L² norm of the load's lumped density, `√(Σ f_i² / m_i)`.
pub fn load_density_norm(fe: &FeSpace, f_load: &[f64]) -> f64 {
    f_load
        .iter()
        .zip(fe.lumped_mass())
        .zip(fe.boundary_mask())
        .filter(|(_, &b)| !b)
        .map(|((f, m), _)| f * f / m)
        .sum::<f64>()
        .sqrt()
}

/// Solve `(q∇u, ∇(v − u)) ≥ (f, v − u)` for all `v ≤ ψ`.
pub fn solve_vi(
    fe: &FeSpace,
    q: &MatrixControlField,
    f_load: &[f64],
    psi: f64,
    cfg: &PdasConfig,
    warm: Option<&[bool]>,
) -> Result<ViSolution> {
    let k = fe.assemble_stiffness(q)?;
    solve_vi_with_operator(fe, &k, f_load, psi, cfg, warm)
}

/// [`solve_vi`] with an already assembled stiffness matrix.
pub fn solve_vi_with_operator(
    fe: &FeSpace,
    k: &CsrMatrix,
    f_load: &[f64],
    psi: f64,
    cfg: &PdasConfig,
    warm: Option<&[bool]>,
) -> Result<ViSolution> {
    check_len("load vector", fe.num_nodes(), f_load.len())?;
    let constraints: Vec<NodeConstraint> = fe
        .boundary_mask()
        .iter()
        .map(|&b| if b { NodeConstraint::Dirichlet } else { NodeConstraint::Upper(psi) })
        .collect();
    let out = pdas(
        k,
        f_load,
        fe.lumped_mass(),
        &constraints,
        cfg.c,
        cfg.max_iters,
        cfg.linear_tol,
        warm,
    )?;
    let threshold = cfg.active_tol * load_density_norm(fe, f_load);
    let strongly_active = out
        .active
        .iter()
        .zip(&out.lambda)
        .map(|(&a, &l)| a && l > threshold)
        .collect();
    Ok(ViSolution {
        u: out.x,
        lambda: out.lambda,
        active_set: out.active,
        strongly_active,
        iterations: out.iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplementarityResiduals {
    /// `max (u_i − ψ)⁺` over interior nodes.
    pub feas_u: f64,
    /// `max (−λ_i)⁺`.
    pub feas_lambda: f64,
    /// `|Σ λ_i m_i (u_i − ψ)|`.
    pub comp: f64,
}

pub fn complementarity_residuals(fe: &FeSpace, sol: &ViSolution, psi: f64) -> ComplementarityResiduals {
    residuals_of(fe, &sol.u, &sol.lambda, psi)
}

pub fn residuals_of(fe: &FeSpace, u: &[f64], lambda: &[f64], psi: f64) -> ComplementarityResiduals {
    let mut feas_u: f64 = 0.0;
    let mut feas_lambda: f64 = 0.0;
    let mut comp = 0.0;
    for i in fe.mesh().interior_nodes() {
        feas_u = feas_u.max(u[i] - psi);
        feas_lambda = feas_lambda.max(-lambda[i]);
        comp += lambda[i] * fe.lumped_mass()[i] * (u[i] - psi);
    }
    ComplementarityResiduals {
        feas_u,
        feas_lambda,
        comp: comp.abs(),
    }
}

/// Dense interior block of the obstacle system: `(K_II, f_I, m_I, node ids)`.
pub fn interior_dense_system(
    fe: &FeSpace,
    q: &MatrixControlField,
    f_load: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>, Vec<f64>, Vec<usize>)> {
    let k = fe.assemble_stiffness(q)?;
    let ids: Vec<usize> = fe.mesh().interior_nodes().collect();
    let n = ids.len();
    let kd = DMatrix::from_fn(n, n, |r, c| k.get(ids[r], ids[c]));
    let fd = DVector::from_iterator(n, ids.iter().map(|&i| f_load[i]));
    let m = ids.iter().map(|&i| fe.lumped_mass()[i]).collect();
    Ok((kd, fd, m, ids))
}

/// Brute-force reference: try every active subset of the (at most 20)
/// unknowns and return the configuration with `u ≤ ψ` and `λ ≥ 0`.
pub fn oracle_active_set_enumeration(
    k: &DMatrix<f64>,
    f: &DVector<f64>,
    lumped: &[f64],
    psi: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = f.len();
    if n > 20 {
        return Err(Error::Dimension {
            what: "enumeration oracle unknowns",
            expected: 20,
            found: n,
        });
    }
    let scale = psi.abs().max(1.0);
    let fscale = f.amax().max(f64::MIN_POSITIVE);
    for mask in 0u32..(1u32 << n) {
        let active = |i: usize| mask & (1 << i) != 0;
        let inactive: Vec<usize> = (0..n).filter(|&i| !active(i)).collect();
        let mut u = DVector::from_element(n, psi);
        if !inactive.is_empty() {
            let m = inactive.len();
            let kii = DMatrix::from_fn(m, m, |r, c| k[(inactive[r], inactive[c])]);
            let rhs = DVector::from_fn(m, |r, _| {
                let i = inactive[r];
                f[i] - (0..n).filter(|&j| active(j)).map(|j| k[(i, j)] * psi).sum::<f64>()
            });
            let Some(sol) = kii.lu().solve(&rhs) else {
                continue;
            };
            for (r, &i) in inactive.iter().enumerate() {
                u[i] = sol[r];
            }
        }
        let residual = f - k * &u;
        let lambda = DVector::from_fn(n, |i, _| if active(i) { residual[i] / lumped[i] } else { 0.0 });
        let primal_ok = (0..n).all(|i| u[i] <= psi + 1e-12 * scale);
        let dual_ok = (0..n).all(|i| lambda[i] * lumped[i] >= -1e-12 * fscale);
        if primal_ok && dual_ok {
            return Ok((u, lambda));
        }
    }
    Err(Error::OracleFailure)
}
