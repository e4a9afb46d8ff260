//! State equation regularized by the cubic penalty `γ max(u − ψ, 0)³`,
//! solved by a globalized Newton method, and its linear adjoint.

use crate::control::MatrixControlField;
use crate::error::{check_len, Error, Result};
use crate::fem::{CsrMatrix, FeSpace};
use crate::linalg::{self, PcgOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyConfig {
    pub gamma: f64,
    pub psi: f64,
    /// Relative residual target `‖R(u)‖ ≤ newton_tol ‖f‖`.
    pub newton_tol: f64,
    pub newton_max: usize,
    pub backtrack: f64,
    pub min_step: f64,
    pub linear_tol: f64,
}

impl PenaltyConfig {
    pub fn new(gamma: f64, psi: f64) -> Self {
        assert!(gamma >= 0.0, "penalty parameter must be non-negative");
        Self {
            gamma,
            psi,
            newton_tol: 1e-11,
            newton_max: 200,
            backtrack: 0.5,
            min_step: 2f64.powi(-20),
            linear_tol: linalg::DEFAULT_TOL,
        }
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..*self }
    }
}

fn violation_at_qp(fe: &FeSpace, u: &[f64], psi: f64, cell: usize) -> [f64; 4] {
    fe.element()
        .interpolate(&fe.local(u, cell))
        .map(|v| (v - psi).max(0.0))
}

/// `∫ γ max(u_h − ψ, 0)³ φ_i`, evaluated at the quadrature points.
pub fn penalty_load(fe: &FeSpace, u: &[f64], gamma: f64, psi: f64) -> Vec<f64> {
    if gamma == 0.0 {
        return vec![0.0; fe.num_nodes()];
    }
    let viol: Vec<[f64; 4]> = (0..fe.mesh().num_cells())
        .map(|c| violation_at_qp(fe, u, psi, c))
        .collect();
    fe.assemble_qp_load(|c, k| gamma * viol[c][k].powi(3))
}

/// Derivative of [`penalty_load`]: the mass matrix weighted by `3γ max(u_h − ψ, 0)²`.
pub fn penalty_jacobian(fe: &FeSpace, u: &[f64], gamma: f64, psi: f64) -> CsrMatrix {
    let viol: Vec<[f64; 4]> = (0..fe.mesh().num_cells())
        .map(|c| violation_at_qp(fe, u, psi, c))
        .collect();
    fe.assemble_weighted_mass(|c, k| 3.0 * gamma * viol[c][k].powi(2))
}

/// Lumped nodal density of the penalty term; tends to the obstacle
/// multiplier as `γ → ∞`.
pub fn penalty_residual_as_multiplier(fe: &FeSpace, u: &[f64], cfg: &PenaltyConfig) -> Vec<f64> {
    let mut r: Vec<f64> = penalty_load(fe, u, cfg.gamma, cfg.psi)
        .into_iter()
        .zip(fe.lumped_mass())
        .map(|(v, m)| v / m)
        .collect();
    fe.mesh().zero_boundary(&mut r);
    r
}

#[derive(Clone, Debug)]
pub struct PenalizedState {
    pub u: Vec<f64>,
    pub newton_iterations: usize,
    /// `‖R(u)‖₂` after every accepted Newton step, starting with the initial guess.
    pub residual_history: Vec<f64>,
}

fn interior_norm(fe: &FeSpace, v: &[f64]) -> f64 {
    v.iter()
        .zip(fe.boundary_mask())
        .filter(|(_, &b)| !b)
        .map(|(x, _)| x * x)
        .sum::<f64>()
        .sqrt()
}

fn residual(fe: &FeSpace, k: &CsrMatrix, f_load: &[f64], u: &[f64], cfg: &PenaltyConfig) -> Vec<f64> {
    let mut r = k.matvec(u);
    let pen = penalty_load(fe, u, cfg.gamma, cfg.psi);
    for i in 0..r.len() {
        r[i] += pen[i] - f_load[i];
    }
    fe.mesh().zero_boundary(&mut r);
    r
}

/// Solve `K_q u + N_γ(u) = f` with homogeneous Dirichlet conditions.
pub fn solve_penalized(
    fe: &FeSpace,
    q: &MatrixControlField,
    f_load: &[f64],
    cfg: &PenaltyConfig,
    warm: Option<&[f64]>,
) -> Result<PenalizedState> {
    let k = fe.assemble_stiffness(q)?;
    solve_penalized_with_operator(fe, &k, f_load, cfg, warm)
}

/// [`solve_penalized`] for an assembled stiffness matrix. Without a warm
/// start the penalty parameter is raised by factors of 1000 from 1.
pub fn solve_penalized_with_operator(
    fe: &FeSpace,
    k: &CsrMatrix,
    f_load: &[f64],
    cfg: &PenaltyConfig,
    warm: Option<&[f64]>,
) -> Result<PenalizedState> {
    check_len("load vector", fe.num_nodes(), f_load.len())?;
    match warm {
        Some(u0) => {
            check_len("initial state", fe.num_nodes(), u0.len())?;
            newton(fe, k, f_load, cfg, u0.to_vec())
        }
        None => {
            let mut gammas = Vec::new();
            let mut g = 1.0;
            while g < cfg.gamma {
                gammas.push(g);
                g *= 1e3;
            }
            gammas.push(cfg.gamma);
            let mut u = vec![0.0; fe.num_nodes()];
            let mut iters = 0;
            let mut last = None;
            for g in gammas {
                let st = newton(fe, k, f_load, &cfg.with_gamma(g), u)?;
                iters += st.newton_iterations;
                u = st.u.clone();
                last = Some(st);
            }
            let mut st = last.expect("at least one continuation stage");
            st.newton_iterations = iters;
            Ok(st)
        }
    }
}

fn newton(
    fe: &FeSpace,
    k: &CsrMatrix,
    f_load: &[f64],
    cfg: &PenaltyConfig,
    mut u: Vec<f64>,
) -> Result<PenalizedState> {
    let interior: Vec<bool> = fe.boundary_mask().iter().map(|&b| !b).collect();
    fe.mesh().zero_boundary(&mut u);
    let target = cfg.newton_tol * interior_norm(fe, f_load);
    let mut r = residual(fe, k, f_load, &u, cfg);
    let mut rnorm = interior_norm(fe, &r);
    let mut history = vec![rnorm];
    let mut iterations = 0;
    while rnorm > target {
        if iterations >= cfg.newton_max {
            return Err(Error::NewtonDivergence { history });
        }
        let mut jac = k.clone();
        if cfg.gamma > 0.0 {
            jac.add_scaled(1.0, &penalty_jacobian(fe, &u, cfg.gamma, cfg.psi));
        }
        let (jr, map) = jac.restrict(&interior);
        let rhs: Vec<f64> = map.iter().map(|&i| -r[i]).collect();
        let (dr, _) = linalg::pcg(
            &jr,
            &rhs,
            None,
            PcgOptions {
                tol: cfg.linear_tol,
                max_iter: None,
            },
            |_, _| {},
        )?;
        let mut step = 1.0;
        loop {
            let mut trial = u.clone();
            for (&i, d) in map.iter().zip(&dr) {
                trial[i] += step * d;
            }
            let rt = residual(fe, k, f_load, &trial, cfg);
            let nt = interior_norm(fe, &rt);
            if nt < (1.0 - 1e-4 * step) * rnorm || nt <= target {
                u = trial;
                r = rt;
                rnorm = nt;
                break;
            }
            step *= cfg.backtrack;
            if step < cfg.min_step {
                return Err(Error::NewtonDivergence { history });
            }
        }
        iterations += 1;
        history.push(rnorm);
    }
    Ok(PenalizedState {
        u,
        newton_iterations: iterations,
        residual_history: history,
    })
}

/// Adjoint `(K_q + D_γ(u)) p = M(u − u_d)` with `p = 0` on the boundary.
pub fn solve_adjoint(
    fe: &FeSpace,
    q: &MatrixControlField,
    u: &[f64],
    u_d: &[f64],
    cfg: &PenaltyConfig,
) -> Result<Vec<f64>> {
    let k = fe.assemble_stiffness(q)?;
    solve_adjoint_with_operator(fe, &k, u, u_d, cfg)
}

pub fn solve_adjoint_with_operator(
    fe: &FeSpace,
    k: &CsrMatrix,
    u: &[f64],
    u_d: &[f64],
    cfg: &PenaltyConfig,
) -> Result<Vec<f64>> {
    check_len("state", fe.num_nodes(), u.len())?;
    check_len("desired state", fe.num_nodes(), u_d.len())?;
    let mut op = k.clone();
    if cfg.gamma > 0.0 {
        op.add_scaled(1.0, &penalty_jacobian(fe, u, cfg.gamma, cfg.psi));
    }
    let diff: Vec<f64> = u.iter().zip(u_d).map(|(a, b)| a - b).collect();
    let rhs = fe.mass().matvec(&diff);
    solve_homogeneous(fe, &op, &rhs, &vec![false; fe.num_nodes()], cfg.linear_tol)
}

/// Solve `A x = b` on the interior nodes not listed in `pinned`, with
/// `x = 0` on the boundary and on pinned nodes.
pub(crate) fn solve_homogeneous(
    fe: &FeSpace,
    a: &CsrMatrix,
    b: &[f64],
    pinned: &[bool],
    tol: f64,
) -> Result<Vec<f64>> {
    let free: Vec<bool> = fe
        .boundary_mask()
        .iter()
        .zip(pinned)
        .map(|(&bd, &p)| !bd && !p)
        .collect();
    let (ar, map) = a.restrict(&free);
    let br: Vec<f64> = map.iter().map(|&i| b[i]).collect();
    let (xr, _) = linalg::solve_spd(&ar, &br, tol)?;
    let mut x = vec![0.0; fe.num_nodes()];
    for (&i, v) in map.iter().zip(xr) {
        x[i] = v;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Sym2;
    use crate::problem;

    #[test]
    fn zero_penalty_is_the_linear_solve() {
        let fe = FeSpace::new(3).unwrap();
        let q = MatrixControlField::constant(fe.num_nodes(), problem::INITIAL_CONTROL);
        let f = fe.assemble_load(problem::source);
        let st = solve_penalized(&fe, &q, &f, &PenaltyConfig::new(0.0, 0.5), None).unwrap();
        let k = fe.assemble_stiffness(&q).unwrap();
        let lin = solve_homogeneous(&fe, &k, &f, &vec![false; fe.num_nodes()], 1e-13).unwrap();
        let diff = st.u.iter().zip(&lin).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn multiplier_density_arithmetic() {
        let fe = FeSpace::new(2).unwrap();
        let cfg = PenaltyConfig::new(1000.0, 0.5);
        let u = vec![0.6; fe.num_nodes()];
        let r = penalty_residual_as_multiplier(&fe, &u, &cfg);
        for k in fe.mesh().interior_nodes() {
            assert!((r[k] - 1.0).abs() < 1e-12, "{}", r[k]);
        }
        let below = vec![0.2; fe.num_nodes()];
        assert!(penalty_residual_as_multiplier(&fe, &below, &cfg).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_vanishes_on_target() {
        let fe = FeSpace::new(3).unwrap();
        let q = MatrixControlField::constant(fe.num_nodes(), Sym2::scalar(1.0));
        let ud = fe.interpolate(problem::desired_state);
        let p = solve_adjoint(&fe, &q, &ud, &ud, &PenaltyConfig::new(1e3, 0.5)).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jacobian_is_consistent_with_the_load() {
        let fe = FeSpace::new(3).unwrap();
        let u = fe.interpolate(|x, y| 1.2 * (1.0 - x * x) * (1.0 - y * y) + 0.1 * x);
        let dir = fe.interpolate(|x, y| (3.0 * x).sin() * y);
        let (g, psi) = (50.0, 0.5);
        let jd = penalty_jacobian(&fe, &u, g, psi).matvec(&dir);
        let eps = 1e-6;
        let shift = |s: f64| -> Vec<f64> { u.iter().zip(&dir).map(|(a, b)| a + s * b).collect() };
        let plus = penalty_load(&fe, &shift(eps), g, psi);
        let minus = penalty_load(&fe, &shift(-eps), g, psi);
        for i in 0..u.len() {
            let fd = (plus[i] - minus[i]) / (2.0 * eps);
            assert!((fd - jd[i]).abs() < 1e-7 * (1.0 + jd[i].abs()), "{i}: {fd} vs {}", jd[i]);
        }
    }
}
