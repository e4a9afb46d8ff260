//! Directional derivatives of the control-to-state map of the obstacle
//! problem.
//!
//! For a direction `d` the derivative `ũ = S′(q; d)` solves a variational
//! inequality over the critical cone: `ũ = 0` where the multiplier is
//! positive, `ũ ≤ 0` on the remaining contact nodes, free elsewhere, with
//! right-hand side `−(d∇u, ∇φ)`. Quasi-everywhere conditions become nodal
//! conditions.

use crate::control::{barrier, check_admissible, control_inner, MatrixControlField};
use crate::error::{check_len, Error, Result};
use crate::fem::FeSpace;
use crate::obstacle::{self, NodeConstraint, PdasConfig, ViSolution};
use crate::optimizer::ObjectiveConfig;

/// Nodal partition of the interior describing the critical cone.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalCone {
    /// `φ = 0` (strongly active nodes).
    pub zero_nodes: Vec<bool>,
    /// `φ ≤ 0` (biactive nodes: in contact with vanishing multiplier).
    pub nonpositive_nodes: Vec<bool>,
    pub free_nodes: Vec<bool>,
}

impl CriticalCone {
    pub fn is_linear_subspace(&self) -> bool {
        !self.nonpositive_nodes.iter().any(|&b| b)
    }

    fn constraints(&self, fe: &FeSpace) -> Vec<NodeConstraint> {
        (0..fe.num_nodes())
            .map(|i| {
                if fe.mesh().is_boundary(i) {
                    NodeConstraint::Dirichlet
                } else if self.zero_nodes[i] {
                    NodeConstraint::Fixed(0.0)
                } else if self.nonpositive_nodes[i] {
                    NodeConstraint::Upper(0.0)
                } else {
                    NodeConstraint::Free
                }
            })
            .collect()
    }
}

/// Classify contact nodes: multiplier above `threshold` pins the derivative
/// to zero, the rest of the contact set only bounds it from above. A
/// multiplier exactly at the threshold counts as biactive.
pub fn build_critical_cone(fe: &FeSpace, sol: &ViSolution, threshold: f64) -> CriticalCone {
    let n = fe.num_nodes();
    let mut cone = CriticalCone {
        zero_nodes: vec![false; n],
        nonpositive_nodes: vec![false; n],
        free_nodes: vec![false; n],
    };
    for i in fe.mesh().interior_nodes() {
        if sol.active_set[i] && sol.lambda[i] > threshold {
            cone.zero_nodes[i] = true;
        } else if sol.active_set[i] {
            cone.nonpositive_nodes[i] = true;
        } else {
            cone.free_nodes[i] = true;
        }
    }
    cone
}

/// Cone built with the classification threshold of `cfg`.
pub fn critical_cone_for(fe: &FeSpace, sol: &ViSolution, f_load: &[f64], cfg: &PdasConfig) -> CriticalCone {
    build_critical_cone(fe, sol, cfg.active_tol * obstacle::load_density_norm(fe, f_load))
}

/// Load `−K_d u` of the derivative problem.
fn derivative_rhs(fe: &FeSpace, d: &MatrixControlField, u: &[f64]) -> Vec<f64> {
    let mut b = fe.assemble_coefficient_form(d).matvec(u);
    b.iter_mut().for_each(|v| *v = -*v);
    b
}

/// `S′(q; d)` by a primal–dual active set solve over the critical cone.
pub fn directional_derivative(
    fe: &FeSpace,
    q: &MatrixControlField,
    d: &MatrixControlField,
    sol: &ViSolution,
    cone: &CriticalCone,
    cfg: &PdasConfig,
    bounds: Option<crate::control::SpectralBounds>,
) -> Result<Vec<f64>> {
    check_len("direction", fe.num_nodes(), d.len())?;
    if let Some(b) = bounds {
        let rep = check_admissible(&q.axpy(1.0, d), b);
        if !rep.admissible {
            return Err(Error::InfeasibleControl {
                node: rep.worst_node,
                margin: rep.min_margin,
            });
        }
    }
    let k = fe.assemble_stiffness(q)?;
    let b = derivative_rhs(fe, d, &sol.u);
    let out = obstacle::pdas(
        &k,
        &b,
        fe.lumped_mass(),
        &cone.constraints(fe),
        cfg.c,
        cfg.max_iters,
        cfg.linear_tol,
        None,
    )?;
    Ok(out.x)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeResiduals {
    /// Violation of `ũ ∈ K`: `|ũ|` on zero nodes, `ũ⁺` on nonpositive nodes.
    pub cone: f64,
    /// Violation of `λ̃ ∈ K°`: `λ̃⁻` on nonpositive nodes, `|λ̃|` on free nodes.
    pub polarity: f64,
    /// `|⟨λ̃, ũ⟩|` with the lumped mass.
    pub comp: f64,
}

/// Multiplier `λ̃ = M_L⁻¹(−K_d u − K_q ũ)` of the derivative problem.
pub fn derivative_multiplier(
    fe: &FeSpace,
    q: &MatrixControlField,
    d: &MatrixControlField,
    u: &[f64],
    du: &[f64],
) -> Result<Vec<f64>> {
    let k = fe.assemble_stiffness(q)?;
    let b = derivative_rhs(fe, d, u);
    let kx = k.matvec(du);
    let mut lam: Vec<f64> = (0..fe.num_nodes())
        .map(|i| (b[i] - kx[i]) / fe.lumped_mass()[i])
        .collect();
    fe.mesh().zero_boundary(&mut lam);
    Ok(lam)
}

/// Check the complementarity system of the derivative.
pub fn derivative_complementarity_check(
    fe: &FeSpace,
    du: &[f64],
    cone: &CriticalCone,
    q: &MatrixControlField,
    d: &MatrixControlField,
    u: &[f64],
) -> Result<DerivativeResiduals> {
    let lam = derivative_multiplier(fe, q, d, u, du)?;
    Ok(residuals_with_multiplier(fe, du, &lam, cone))
}

pub fn residuals_with_multiplier(fe: &FeSpace, du: &[f64], lam: &[f64], cone: &CriticalCone) -> DerivativeResiduals {
    let mut res = DerivativeResiduals {
        cone: 0.0,
        polarity: 0.0,
        comp: 0.0,
    };
    let mut comp = 0.0;
    for i in fe.mesh().interior_nodes() {
        if cone.zero_nodes[i] {
            res.cone = res.cone.max(du[i].abs());
        } else if cone.nonpositive_nodes[i] {
            res.cone = res.cone.max(du[i]);
            res.polarity = res.polarity.max(-lam[i]);
        } else {
            res.polarity = res.polarity.max(lam[i].abs());
        }
        comp += fe.lumped_mass()[i] * lam[i] * du[i];
    }
    res.comp = comp.abs();
    res
}

/// `‖(S(q + t d) − S(q)) / t − ũ‖` for each step `t`.
pub fn difference_quotient_errors(
    fe: &FeSpace,
    q: &MatrixControlField,
    d: &MatrixControlField,
    sol: &ViSolution,
    derivative: &[f64],
    f_load: &[f64],
    psi: f64,
    cfg: &PdasConfig,
    steps: &[f64],
) -> Result<Vec<f64>> {
    steps
        .iter()
        .map(|&t| {
            let shifted = obstacle::solve_vi(fe, &q.axpy(t, d), f_load, psi, cfg, Some(&sol.active_set))?;
            let err: Vec<f64> = (0..fe.num_nodes())
                .map(|i| (shifted.u[i] - sol.u[i]) / t - derivative[i])
                .collect();
            Ok(fe.l2_norm(&err))
        })
        .collect()
}

/// Smallest value of the first-order expression
/// `(u − u_d, S′(q*; q − q*)) + α(q* − q_d, q − q*) + β(B′(q*), q − q*)`
/// over the candidate controls. Non-negative at a stationary point.
pub fn primal_first_order_check(
    fe: &FeSpace,
    q_star: &MatrixControlField,
    sol: &ViSolution,
    candidates: &[MatrixControlField],
    obj: &ObjectiveConfig,
    cfg: &PdasConfig,
) -> Result<f64> {
    let cone = critical_cone_for(fe, sol, &obj.f_load, cfg);
    let diff: Vec<f64> = sol.u.iter().zip(&obj.u_d).map(|(a, b)| a - b).collect();
    let tik = q_star.sub(&obj.q_d);
    let barrier_grad = if obj.beta > 0.0 {
        barrier(fe, q_star, obj.bounds)?.gradient
    } else {
        None
    };
    let mut best = f64::INFINITY;
    for cand in candidates {
        let d = cand.sub(q_star);
        let du = directional_derivative(fe, q_star, &d, sol, &cone, cfg, Some(obj.bounds))?;
        let mut value = fe.l2_inner(&diff, &du) + obj.alpha * control_inner(fe, &tik, &d)?;
        if let Some(g) = &barrier_grad {
            value += obj.beta * control_inner(fe, g, &d)?;
        }
        best = best.min(value);
    }
    Ok(best)
}
