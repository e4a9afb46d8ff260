//! Reduced-space minimization of
//! `½‖u − u_d‖² + α/2 ‖q − q_d‖² + β B(q)` over admissible matrix controls,
//! with the state given either by the penalized equation or by the
//! obstacle problem itself.
//!
//! Gradients come from the adjoint state; the step is a gradient step with
//! Armijo backtracking in the L² Frobenius metric, and trial controls that
//! leave the spectral bounds are rejected before the state is solved.

use log::{debug, info};

use crate::control::{
    self, barrier, barrier_value, check_admissible, control_inner, control_norm, project_spectral,
    riesz_density, MatrixControlField, SpectralBounds,
};
use crate::error::{check_len, Error, Result};
use crate::fem::{CsrMatrix, FeSpace};
use crate::obstacle::{self, PdasConfig, ViSolution};
use crate::penalty::{self, PenaltyConfig};

/// Problem data of the reduced objective.
#[derive(Clone, Debug)]
pub struct ObjectiveConfig {
    /// Tikhonov weight, `α > 0`.
    pub alpha: f64,
    /// Barrier weight, `β ≥ 0`.
    pub beta: f64,
    /// Nodal interpolant of the desired state.
    pub u_d: Vec<f64>,
    pub q_d: MatrixControlField,
    pub bounds: SpectralBounds,
    /// Load vector of the right-hand side.
    pub f_load: Vec<f64>,
}

impl ObjectiveConfig {
    pub fn validate(&self, fe: &FeSpace) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Config(format!(
                "need alpha > 0 and beta >= 0 (got {}, {})",
                self.alpha, self.beta
            )));
        }
        check_len("desired state", fe.num_nodes(), self.u_d.len())?;
        check_len("desired control", fe.num_nodes(), self.q_d.len())?;
        check_len("load vector", fe.num_nodes(), self.f_load.len())
    }
}

/// How the state is obtained from the control.
#[derive(Clone, Debug)]
pub enum StateModel {
    /// Cubic-penalty state equation; smooth reduced objective.
    Penalized(PenaltyConfig),
    /// Obstacle problem solved exactly; the adjoint vanishes on the active
    /// set (the limit of the penalized adjoint as `γ → ∞`).
    Obstacle { psi: f64, pdas: PdasConfig },
}

impl StateModel {
    pub fn psi(&self) -> f64 {
        match self {
            StateModel::Penalized(c) => c.psi,
            StateModel::Obstacle { psi, .. } => *psi,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveParts {
    pub tracking: f64,
    pub tikhonov: f64,
    /// Already multiplied by `β`.
    pub barrier: f64,
}

impl ObjectiveParts {
    pub fn total(&self) -> f64 {
        self.tracking + self.tikhonov + self.barrier
    }
}

/// A control together with its state and objective value.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub q: MatrixControlField,
    pub stiffness: CsrMatrix,
    pub u: Vec<f64>,
    /// Present for the obstacle model.
    pub vi: Option<ViSolution>,
    pub parts: ObjectiveParts,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct WarmStart<'a> {
    pub u: Option<&'a [f64]>,
    pub active: Option<&'a [bool]>,
}

fn objective_parts(fe: &FeSpace, q: &MatrixControlField, u: &[f64], obj: &ObjectiveConfig) -> Result<ObjectiveParts> {
    let diff: Vec<f64> = u.iter().zip(&obj.u_d).map(|(a, b)| a - b).collect();
    let tracking = 0.5 * fe.mass().quad_form(&diff);
    let dq = q.sub(&obj.q_d);
    let tikhonov = 0.5 * obj.alpha * control_inner(fe, &dq, &dq)?;
    let barrier = if obj.beta > 0.0 {
        obj.beta * barrier_value(fe, q, obj.bounds)?
    } else {
        0.0
    };
    Ok(ObjectiveParts {
        tracking,
        tikhonov,
        barrier,
    })
}

/// Solve the state for `q` and evaluate the objective. Returns `None` when
/// `q` violates the spectral bounds.
pub fn evaluate(
    fe: &FeSpace,
    q: &MatrixControlField,
    obj: &ObjectiveConfig,
    model: &StateModel,
    warm: WarmStart<'_>,
) -> Result<Option<Evaluation>> {
    if !check_admissible(q, obj.bounds).admissible {
        return Ok(None);
    }
    let stiffness = fe.assemble_stiffness(q)?;
    let (u, vi) = match model {
        StateModel::Penalized(cfg) => {
            let st = penalty::solve_penalized_with_operator(fe, &stiffness, &obj.f_load, cfg, warm.u)?;
            (st.u, None)
        }
        StateModel::Obstacle { psi, pdas } => {
            let sol = obstacle::solve_vi_with_operator(fe, &stiffness, &obj.f_load, *psi, pdas, warm.active)?;
            (sol.u.clone(), Some(sol))
        }
    };
    let parts = objective_parts(fe, q, &u, obj)?;
    if !parts.total().is_finite() {
        return Ok(None);
    }
    Ok(Some(Evaluation {
        q: q.clone(),
        stiffness,
        u,
        vi,
        parts,
    }))
}

/// Adjoint state of an evaluation.
pub fn adjoint(fe: &FeSpace, eval: &Evaluation, obj: &ObjectiveConfig, model: &StateModel) -> Result<Vec<f64>> {
    match model {
        StateModel::Penalized(cfg) => penalty::solve_adjoint_with_operator(fe, &eval.stiffness, &eval.u, &obj.u_d, cfg),
        StateModel::Obstacle { pdas, .. } => {
            let vi = eval.vi.as_ref().expect("obstacle evaluation carries its VI solution");
            let diff: Vec<f64> = eval.u.iter().zip(&obj.u_d).map(|(a, b)| a - b).collect();
            let rhs = fe.mass().matvec(&diff);
            penalty::solve_homogeneous(fe, &eval.stiffness, &rhs, &vi.active_set, pdas.linear_tol)
        }
    }
}

/// Dual vectors of `q ↦ −(q∇u, ∇p)`, one per control component.
fn outer_product_dual(fe: &FeSpace, u: &[f64], p: &[f64]) -> [Vec<f64>; 3] {
    let mesh = fe.mesh();
    let e = fe.element();
    let n = fe.num_nodes();
    let mut dual = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for cell in 0..mesh.num_cells() {
        let nodes = mesh.cell_nodes(cell);
        let gu = e.gradient(&fe.local(u, cell));
        let gp = e.gradient(&fe.local(p, cell));
        for k in 0..4 {
            let comp = [
                -gu[k][0] * gp[k][0],
                -gu[k][1] * gp[k][1],
                -(gu[k][0] * gp[k][1] + gu[k][1] * gp[k][0]),
            ];
            for a in 0..4 {
                let w = e.weights[k] * e.values[k][a];
                for c in 0..3 {
                    dual[c][nodes[a]] += w * comp[c];
                }
            }
        }
    }
    dual
}

/// L² gradient density `α(q − q_d) + β B′(q) − sym(∇u ⊗ ∇p)` of the reduced
/// objective, given a consistent state/adjoint pair.
pub fn reduced_gradient(
    fe: &FeSpace,
    q: &MatrixControlField,
    u: &[f64],
    p: &[f64],
    obj: &ObjectiveConfig,
) -> Result<MatrixControlField> {
    let mut grad = riesz_density(fe, outer_product_dual(fe, u, p))?;
    grad = grad.axpy(obj.alpha, &q.sub(&obj.q_d));
    if obj.beta > 0.0 {
        let b = barrier(fe, q, obj.bounds)?;
        let gb = b.gradient.ok_or_else(|| {
            let rep = check_admissible(q, obj.bounds);
            Error::InfeasibleControl {
                node: rep.worst_node,
                margin: rep.min_margin,
            }
        })?;
        grad = grad.axpy(obj.beta, &gb);
    }
    Ok(grad)
}

/// Reduced objective at `q` from a cold start.
pub fn reduced_objective(fe: &FeSpace, q: &MatrixControlField, obj: &ObjectiveConfig, model: &StateModel) -> Result<f64> {
    match evaluate(fe, q, obj, model, WarmStart::default())? {
        Some(e) => Ok(e.parts.total()),
        None => Ok(f64::INFINITY),
    }
}

/// Projected-gradient stationarity measure `‖q − P(q − s g)‖ / s`.
pub fn projected_gradient_residual(
    fe: &FeSpace,
    q: &MatrixControlField,
    grad: &MatrixControlField,
    bounds: SpectralBounds,
    s: f64,
) -> Result<f64> {
    let projected = project_spectral(&q.axpy(-s, grad), bounds, 0.0);
    Ok(control_norm(fe, &q.sub(&projected))? / s)
}

/// Stationarity residual of a state/adjoint triple.
pub fn stationarity_residual_vi(
    fe: &FeSpace,
    q: &MatrixControlField,
    u: &[f64],
    p: &[f64],
    obj: &ObjectiveConfig,
    s: f64,
) -> Result<f64> {
    let g = reduced_gradient(fe, q, u, p, obj)?;
    projected_gradient_residual(fe, q, &g, obj.bounds, s)
}

/// First trial step of each line search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepRule {
    /// Always start from `step_init`.
    Fixed,
    /// `⟨Δq, Δq⟩ / ⟨Δq, Δg⟩` from the last accepted step, `step_init` on the
    /// first iteration or when the curvature estimate is not positive.
    BarzilaiBorwein,
}

/// Range the Barzilai–Borwein trial step is clamped to.
const BB_STEP_RANGE: (f64, f64) = (1e-8, 1e8);

/// Consecutive noise-level steps after which a run is declared noise limited.
const NOISE_STREAK: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptOptions {
    pub max_iters: usize,
    /// Stop once the stationarity residual is below `tol · (1 + r₀)`.
    pub tol: f64,
    /// Armijo constant.
    pub sigma: f64,
    pub step_init: f64,
    pub step_rule: StepRule,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Trial step used by the stationarity measure.
    pub stationarity_step: f64,
    /// Relative objective change regarded as solver noise. A run of accepted
    /// steps whose predicted decrease `s ‖g‖²` stays below `noise_level |J|`
    /// ends the optimization, and a failed search with such a first trial
    /// step does not raise a stagnation error.
    pub noise_level: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 1e-8,
            sigma: 1e-4,
            step_init: 1.0,
            step_rule: StepRule::BarzilaiBorwein,
            backtrack: 0.5,
            max_backtracks: 40,
            stationarity_step: 1e-3,
            noise_level: 1e-9,
        }
    }
}

/// One line of the iteration log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptRecord {
    pub iteration: usize,
    pub parts: ObjectiveParts,
    pub objective: f64,
    pub grad_norm: f64,
    pub stationarity: f64,
    /// Step accepted at this iteration (0 for the final record).
    pub step: f64,
    pub backtracks: usize,
    /// Smallest determinant/trace of the slack matrices over all nodes.
    pub min_margin: f64,
    /// `max(u − ψ)` over the nodes.
    pub max_violation: f64,
}

impl OptRecord {
    pub const CSV_HEADER: &'static str =
        "iteration,objective,tracking,tikhonov,barrier,grad_norm,stationarity,step,backtracks,min_margin,max_violation";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e}",
            self.iteration,
            self.objective,
            self.parts.tracking,
            self.parts.tikhonov,
            self.parts.barrier,
            self.grad_norm,
            self.stationarity,
            self.step,
            self.backtracks,
            self.min_margin,
            self.max_violation
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Stationarity residual below tolerance.
    Stationary,
    /// No further decrease distinguishable from solver noise.
    NoiseLimited,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct OptResult {
    pub q: MatrixControlField,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub vi: Option<ViSolution>,
    pub parts: ObjectiveParts,
    pub grad: MatrixControlField,
    pub history: Vec<OptRecord>,
    pub termination: Termination,
}

impl OptResult {
    pub fn objective(&self) -> f64 {
        self.parts.total()
    }

    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }
}

fn max_violation(u: &[f64], psi: f64) -> f64 {
    u.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v - psi))
}

/// Armijo gradient descent from a strictly admissible `q0`.
pub fn minimize(
    fe: &FeSpace,
    q0: &MatrixControlField,
    obj: &ObjectiveConfig,
    model: &StateModel,
    opts: &OptOptions,
) -> Result<OptResult> {
    minimize_warm(fe, q0, obj, model, opts, WarmStart::default())
}

pub fn minimize_warm(
    fe: &FeSpace,
    q0: &MatrixControlField,
    obj: &ObjectiveConfig,
    model: &StateModel,
    opts: &OptOptions,
    warm: WarmStart<'_>,
) -> Result<OptResult> {
    obj.validate(fe)?;
    check_len("initial control", fe.num_nodes(), q0.len())?;
    let psi = model.psi();
    let Some(mut cur) = evaluate(fe, q0, obj, model, warm)? else {
        let rep = check_admissible(q0, obj.bounds);
        return Err(Error::InfeasibleControl {
            node: rep.worst_node,
            margin: rep.min_margin,
        });
    };
    let mut p = adjoint(fe, &cur, obj, model)?;
    let mut grad = reduced_gradient(fe, &cur.q, &cur.u, &p, obj)?;
    let mut grad_norm = control_norm(fe, &grad)?;
    let mut stat = projected_gradient_residual(fe, &cur.q, &grad, obj.bounds, opts.stationarity_step)?;
    let target = opts.tol * (1.0 + stat);
    let mut history = Vec::new();
    let mut iteration = 0;
    let mut first_step = opts.step_init;
    let mut stalled = 0;

    let termination = loop {
        let record = |step: f64, backtracks: usize, cur: &Evaluation, grad_norm: f64, stat: f64| OptRecord {
            iteration,
            parts: cur.parts,
            objective: cur.parts.total(),
            grad_norm,
            stationarity: stat,
            step,
            backtracks,
            min_margin: check_admissible(&cur.q, obj.bounds).min_margin,
            max_violation: max_violation(&cur.u, psi),
        };
        if stat <= target {
            history.push(record(0.0, 0, &cur, grad_norm, stat));
            break Termination::Stationary;
        }
        if stalled >= NOISE_STREAK {
            history.push(record(0.0, 0, &cur, grad_norm, stat));
            break Termination::NoiseLimited;
        }
        if iteration >= opts.max_iters {
            history.push(record(0.0, 0, &cur, grad_norm, stat));
            break Termination::MaxIterations;
        }

        let j0 = cur.parts.total();
        let g2 = grad_norm * grad_norm;
        let mut step = first_step;
        let mut accepted = None;
        for bt in 0..=opts.max_backtracks {
            let trial_q = cur.q.axpy(-step, &grad);
            let warm = WarmStart {
                u: Some(&cur.u),
                active: cur.vi.as_ref().map(|v| v.active_set.as_slice()),
            };
            if let Some(trial) = evaluate(fe, &trial_q, obj, model, warm)? {
                if trial.parts.total() <= j0 - opts.sigma * step * g2 {
                    accepted = Some((trial, bt));
                    break;
                }
            }
            step *= opts.backtrack;
        }
        let Some((next, backtracks)) = accepted else {
            history.push(record(0.0, opts.max_backtracks, &cur, grad_norm, stat));
            if first_step * g2 <= opts.noise_level * j0.abs() {
                break Termination::NoiseLimited;
            }
            return Err(Error::Stagnation { iteration, grad_norm });
        };
        history.push(record(step, backtracks, &cur, grad_norm, stat));
        if step * g2 <= opts.noise_level * j0.abs() {
            stalled += 1;
        } else {
            stalled = 0;
        }
        debug!(
            "iter {iteration}: J = {:.10e}, |g| = {grad_norm:.3e}, step = {step:.3e}",
            next.parts.total()
        );
        let prev_q = std::mem::replace(&mut cur, next).q;
        p = adjoint(fe, &cur, obj, model)?;
        let prev_grad = std::mem::replace(&mut grad, reduced_gradient(fe, &cur.q, &cur.u, &p, obj)?);
        first_step = match opts.step_rule {
            StepRule::Fixed => opts.step_init,
            StepRule::BarzilaiBorwein => {
                let dq = cur.q.sub(&prev_q);
                let dg = grad.sub(&prev_grad);
                let curvature = control_inner(fe, &dq, &dg)?;
                if curvature > 0.0 {
                    (control_inner(fe, &dq, &dq)? / curvature).clamp(BB_STEP_RANGE.0, BB_STEP_RANGE.1)
                } else {
                    opts.step_init
                }
            }
        };
        grad_norm = control_norm(fe, &grad)?;
        stat = projected_gradient_residual(fe, &cur.q, &grad, obj.bounds, opts.stationarity_step)?;
        iteration += 1;
    };
    info!(
        "optimizer finished after {iteration} iterations ({termination:?}): J = {:.10e}, stationarity = {:.3e}",
        cur.parts.total(),
        stat
    );
    Ok(OptResult {
        q: cur.q,
        u: cur.u,
        p,
        vi: cur.vi,
        parts: cur.parts,
        grad,
        history,
        termination,
    })
}

/// Minimize with the obstacle problem as the state constraint.
pub fn solve_vi_constrained(
    fe: &FeSpace,
    q0: &MatrixControlField,
    obj: &ObjectiveConfig,
    psi: f64,
    pdas: &PdasConfig,
    opts: &OptOptions,
) -> Result<OptResult> {
    minimize(
        fe,
        q0,
        obj,
        &StateModel::Obstacle { psi, pdas: *pdas },
        opts,
    )
}

/// Reference solution used to measure the penalized solutions.
#[derive(Clone, Copy, Debug)]
pub struct Reference<'a> {
    pub q: &'a MatrixControlField,
    pub u: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct GammaLeg {
    pub gamma: f64,
    pub result: OptResult,
    /// `‖u_γ − u_ref‖` when a reference was supplied.
    pub err_u: Option<f64>,
    /// `‖q_γ − q_ref‖` when a reference was supplied.
    pub err_q: Option<f64>,
}

/// Solve the penalized problem for increasing `γ`, each leg warm-started
/// from the previous solution.
pub fn gamma_continuation(
    fe: &FeSpace,
    q0: &MatrixControlField,
    obj: &ObjectiveConfig,
    penalty: &PenaltyConfig,
    gammas: &[f64],
    opts: &OptOptions,
    reference: Option<Reference<'_>>,
) -> Result<Vec<GammaLeg>> {
    if gammas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("penalty parameters must be strictly increasing".into()));
    }
    let mut legs: Vec<GammaLeg> = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let model = StateModel::Penalized(penalty.with_gamma(gamma));
        let (start, warm_u) = match legs.last() {
            Some(prev) => (&prev.result.q, Some(prev.result.u.as_slice())),
            None => (q0, None),
        };
        let result = minimize_warm(
            fe,
            start,
            obj,
            &model,
            opts,
            WarmStart {
                u: warm_u,
                active: None,
            },
        )?;
        let (err_u, err_q) = match reference {
            Some(r) => {
                let du: Vec<f64> = result.u.iter().zip(r.u).map(|(a, b)| a - b).collect();
                (Some(fe.l2_norm(&du)), Some(control::control_norm(fe, &result.q.sub(r.q))?))
            }
            None => (None, None),
        };
        info!("gamma = {gamma:e}: err_u = {err_u:?}, err_q = {err_q:?}");
        legs.push(GammaLeg {
            gamma,
            result,
            err_u,
            err_q,
        });
    }
    Ok(legs)
}
