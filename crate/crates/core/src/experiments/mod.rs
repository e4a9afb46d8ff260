//! Experiment drivers behind the command-line tool.
//!
//! Every driver takes an [`ExperimentConfig`], writes its artifacts into
//! `output_dir` (atomically, file by file) and returns the computed data so
//! tests can inspect it without parsing files.

mod config;
mod output;

use std::f64::consts::PI;
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{DesiredControl, ExperimentConfig};
pub use output::{csv, read_vtk, write_atomic, Artifacts, GridFields};

use crate::control::{check_admissible, control_inner, MatrixControlField, Sym2};
use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::obstacle::{self, ComplementarityResiduals, ViSolution};
use crate::optimizer::{
    self, gamma_continuation, solve_vi_constrained, GammaLeg, OptRecord, OptResult, Reference, StateModel,
    WarmStart,
};
use crate::penalty;
use crate::problem;
use crate::sensitivity::{self, DerivativeResiduals};

/// Bound above which the multiplier ratio `‖λ‖/‖f‖` triggers a warning.
pub const MULTIPLIER_RATIO_WARNING: f64 = 4.5;

fn fields_of(fe: &FeSpace, u: &[f64], lambda: &[f64], q: &MatrixControlField) -> GridFields {
    let [q11, q22, q12] = q.components();
    GridFields::new(fe.mesh())
        .with("u", u)
        .with("lambda", lambda)
        .with("q11", q11)
        .with("q22", q22)
        .with("q12", q12)
}

fn history_csv(history: &[OptRecord]) -> String {
    csv(OptRecord::CSV_HEADER, history.iter().map(OptRecord::csv_line))
}

fn admissibility_violations(history: &[OptRecord]) -> usize {
    history.iter().filter(|r| !(r.min_margin > 0.0)).count()
}

/// `‖λ‖ / ‖f‖` in L².
pub fn multiplier_ratio(fe: &FeSpace, lambda: &[f64]) -> f64 {
    fe.l2_norm(lambda) / fe.l2_norm(&fe.interpolate(problem::source))
}

#[derive(Clone, Debug)]
pub struct Example1Output {
    pub result: OptResult,
    pub vi: ViSolution,
    pub residuals: ComplementarityResiduals,
    pub multiplier_ratio: f64,
    /// Accepted iterates outside the spectral bounds.
    pub admissibility_violations: usize,
    pub artifacts: Artifacts,
}

/// Optimal control with the obstacle problem as the state constraint.
pub fn run_example1(cfg: &ExperimentConfig) -> Result<Example1Output> {
    let fe = FeSpace::new(cfg.level)?;
    let obj = cfg.objective(&fe);
    let result = solve_vi_constrained(&fe, &cfg.initial_control(&fe), &obj, cfg.psi, &cfg.pdas(), &cfg.optimizer())?;
    let vi = result.vi.clone().expect("obstacle model returns its VI solution");
    let residuals = obstacle::complementarity_residuals(&fe, &vi, cfg.psi);
    let ratio = multiplier_ratio(&fe, &vi.lambda);
    if ratio > MULTIPLIER_RATIO_WARNING {
        warn!("multiplier ratio {ratio:.3} exceeds {MULTIPLIER_RATIO_WARNING}");
    }
    let violations = admissibility_violations(&result.history);
    info!(
        "example 1: J = {:.6e}, {} active nodes, |lambda|/|f| = {ratio:.3}",
        result.objective(),
        vi.num_active()
    );

    let mut artifacts = Artifacts::default();
    let dir = &cfg.output_dir;
    let fields = fields_of(&fe, &result.u, &vi.lambda, &result.q);
    artifacts.write(dir, "example1_fields.vtk", &fields.to_vtk("obstacle-constrained optimum"))?;
    artifacts.write(dir, "example1_history.csv", &history_csv(&result.history))?;
    let last = result.history.last().copied();
    let summary = [
        ("level", cfg.level.to_string()),
        ("objective", format!("{:e}", result.objective())),
        ("tracking", format!("{:e}", result.parts.tracking)),
        ("tikhonov", format!("{:e}", result.parts.tikhonov)),
        ("barrier", format!("{:e}", result.parts.barrier)),
        ("iterations", result.iterations().to_string()),
        ("termination", format!("{:?}", result.termination)),
        ("stationarity", format!("{:e}", last.map_or(f64::NAN, |r| r.stationarity))),
        ("active_nodes", vi.num_active().to_string()),
        ("multiplier_ratio", format!("{ratio:e}")),
        ("feasibility_u", format!("{:e}", residuals.feas_u)),
        ("feasibility_lambda", format!("{:e}", residuals.feas_lambda)),
        ("complementarity", format!("{:e}", residuals.comp)),
        ("min_margin", format!("{:e}", last.map_or(f64::NAN, |r| r.min_margin))),
        ("admissibility_violations", violations.to_string()),
    ];
    artifacts.write(
        dir,
        "example1_summary.csv",
        &csv("quantity,value", summary.iter().map(|(k, v)| format!("{k},{v}"))),
    )?;
    Ok(Example1Output {
        result,
        vi,
        residuals,
        multiplier_ratio: ratio,
        admissibility_violations: violations,
        artifacts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableRow {
    pub gamma: f64,
    pub err_u: f64,
    pub err_q: f64,
}

/// Errors of the penalized solutions against the obstacle-constrained one.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub level: u32,
    /// Sorted by `gamma`.
    pub rows: Vec<TableRow>,
    pub metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub const CSV_HEADER: &'static str = "gamma,err_u_L2,err_q_L2";

    pub fn to_csv(&self) -> String {
        csv(
            Self::CSV_HEADER,
            self.rows.iter().map(|r| format!("{:e},{:e},{:e}", r.gamma, r.err_u, r.err_q)),
        )
    }

    pub fn err_u(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_u).collect()
    }

    pub fn err_q(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_q).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Example2Output {
    pub reference: Example1Output,
    pub legs: Vec<GammaLeg>,
    pub table: ResultTable,
    pub admissibility_violations: usize,
    pub artifacts: Artifacts,
}

/// Penalty path-following, measured against the obstacle-constrained
/// optimum on the same mesh.
pub fn run_example2(cfg: &ExperimentConfig) -> Result<Example2Output> {
    let start = Instant::now();
    let reference = run_example1(cfg)?;
    let fe = FeSpace::new(cfg.level)?;
    let obj = cfg.objective(&fe);
    let legs = gamma_continuation(
        &fe,
        &cfg.initial_control(&fe),
        &obj,
        &cfg.penalty(cfg.gamma[0]),
        &cfg.gamma,
        &cfg.optimizer(),
        Some(Reference {
            q: &reference.result.q,
            u: &reference.result.u,
        }),
    )?;
    let rows: Vec<TableRow> = legs
        .iter()
        .map(|l| TableRow {
            gamma: l.gamma,
            err_u: l.err_u.expect("reference supplied"),
            err_q: l.err_q.expect("reference supplied"),
        })
        .collect();
    let violations =
        reference.admissibility_violations + legs.iter().map(|l| admissibility_violations(&l.result.history)).sum::<usize>();

    let mut metadata = vec![
        ("level".to_string(), cfg.level.to_string()),
        ("alpha".into(), format!("{:e}", cfg.alpha)),
        ("beta".into(), format!("{:e}", cfg.beta)),
        ("psi".into(), format!("{:e}", cfg.psi)),
        ("q_min".into(), format!("{:e}", cfg.q_min)),
        ("q_max".into(), format!("{:e}", cfg.q_max)),
        ("seed".into(), cfg.seed.to_string()),
        (
            "reference".into(),
            format!(
                "{} iterations, {:?}",
                reference.result.iterations(),
                reference.result.termination
            ),
        ),
    ];
    for l in &legs {
        metadata.push((
            format!("gamma {:e}", l.gamma),
            format!("{} iterations, {:?}", l.result.iterations(), l.result.termination),
        ));
    }
    metadata.push(("admissibility_violations".into(), violations.to_string()));
    metadata.push(("elapsed_seconds".into(), format!("{:.3}", start.elapsed().as_secs_f64())));
    let table = ResultTable {
        level: cfg.level,
        rows,
        metadata,
    };

    let mut artifacts = reference.artifacts.clone();
    let dir = &cfg.output_dir;
    artifacts.write(dir, "gamma_table.csv", &table.to_csv())?;
    let meta: String = table.metadata.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    artifacts.write(dir, "gamma_table_meta.txt", &meta)?;
    for l in &legs {
        let pen = cfg.penalty(l.gamma);
        let lambda = penalty::penalty_residual_as_multiplier(&fe, &l.result.u, &pen);
        let fields = fields_of(&fe, &l.result.u, &lambda, &l.result.q);
        let tag = format!("{:e}", l.gamma);
        artifacts.write(
            dir,
            &format!("example2_gamma_{tag}_fields.vtk"),
            &fields.to_vtk(&format!("penalized optimum, gamma = {tag}")),
        )?;
        artifacts.write(dir, &format!("example2_gamma_{tag}_history.csv"), &history_csv(&l.result.history))?;
    }
    Ok(Example2Output {
        reference,
        legs,
        table,
        admissibility_violations: violations,
        artifacts,
    })
}

/// `‖u_h − u‖` with a 3×3 Gauss rule per cell.
pub fn l2_error_against(fe: &FeSpace, uh: &[f64], exact: impl Fn(f64, f64) -> f64) -> f64 {
    let g = (0.6f64).sqrt();
    let pts = [(0.5 * (1.0 - g), 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 * (1.0 + g), 5.0 / 18.0)];
    let mesh = fe.mesh();
    let h = mesh.h();
    let mut sum = 0.0;
    for cell in 0..mesh.num_cells() {
        let [x0, y0] = mesh.cell_origin(cell);
        let [a, b, c, d] = fe.local(uh, cell);
        for &(s, ws) in &pts {
            for &(t, wt) in &pts {
                let v = a * (1.0 - s) * (1.0 - t) + b * s * (1.0 - t) + c * s * t + d * (1.0 - s) * t;
                let e = v - exact(x0 + s * h, y0 + t * h);
                sum += ws * wt * h * h * e * e;
            }
        }
    }
    sum.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub level: u32,
    pub h: f64,
    pub err: f64,
    /// `log₂` of the error ratio to the previous level.
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub obstacle: bool,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub const CSV_HEADER: &'static str = "level,h,err_L2,rate";

    pub fn to_csv(&self) -> String {
        csv(
            Self::CSV_HEADER,
            self.rows.iter().map(|r| {
                let rate = r.rate.map_or(String::new(), |x| format!("{x:e}"));
                format!("{},{:e},{:e},{rate}", r.level, r.h, r.err)
            }),
        )
    }

    pub fn min_rate(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.rate).reduce(f64::min)
    }
}

/// State solves with the coefficient fixed to the desired control.
///
/// Without the obstacle the exact solution is the desired state; with it,
/// errors are measured against the solution one level above the finest.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    let solve = |level: u32| -> Result<(FeSpace, Vec<f64>)> {
        let fe = FeSpace::new(level)?;
        let q = problem::desired_control_field(fe.mesh());
        let f = fe.assemble_load(problem::source);
        let psi = if cfg.convergence_obstacle { cfg.psi } else { f64::INFINITY };
        let sol = obstacle::solve_vi(&fe, &q, &f, psi, &cfg.pdas(), None)?;
        Ok((fe, sol.u))
    };
    let fine = if cfg.convergence_obstacle {
        Some(solve(cfg.levels.last().copied().unwrap_or(1) + 1)?)
    } else {
        None
    };
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &level in &cfg.levels {
        let (fe, u) = solve(level)?;
        let err = match &fine {
            None => l2_error_against(&fe, &u, problem::desired_state),
            Some((ffe, fu)) => {
                let stride = 1usize << (ffe.mesh().level() - level);
                let m = ffe.mesh();
                let injected: Vec<f64> = (0..fe.num_nodes())
                    .map(|k| {
                        let n = fe.mesh().nodes_per_side();
                        fu[m.node_index((k % n) * stride, (k / n) * stride)]
                    })
                    .collect();
                let diff: Vec<f64> = u.iter().zip(&injected).map(|(a, b)| a - b).collect();
                fe.l2_norm(&diff)
            }
        };
        let rate = rows.last().map(|prev| (prev.err / err).log2() / (level - prev.level) as f64);
        rows.push(ConvergenceRow {
            level,
            h: fe.mesh().h(),
            err,
            rate,
        });
    }
    let table = ConvergenceTable {
        obstacle: cfg.convergence_obstacle,
        rows,
    };
    let mut artifacts = Artifacts::default();
    artifacts.write(&cfg.output_dir, "convergence.csv", &table.to_csv())?;
    Ok(table)
}

/// Control with random eigenvalues in `[lo, hi]` and random axes per node.
pub fn random_control(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> MatrixControlField {
    let mut q = MatrixControlField::zeros(n);
    for k in 0..n {
        let a = rng.gen_range(lo..hi);
        let b = rng.gen_range(lo..hi);
        let theta = rng.gen_range(0.0..PI);
        q.set(k, Sym2::from_eigen(a.min(b), a.max(b), theta));
    }
    q
}

/// Direction with independent nodal entries uniform in `[−scale, scale]`.
pub fn random_direction(n: usize, scale: f64, rng: &mut impl Rng) -> MatrixControlField {
    let mut d = MatrixControlField::zeros(n);
    for k in 0..n {
        let e = [0; 3].map(|_| rng.gen_range(-scale..=scale));
        d.set(k, Sym2::new(e[0], e[1], e[2]));
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjointRow {
    pub control: usize,
    pub direction: usize,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub rel_err: f64,
    /// Ratio of central-difference errors at steps `100·fd_step` and
    /// `50·fd_step`; close to 4 for a second-order quotient.
    pub halving_ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuotientRow {
    pub direction: usize,
    pub t: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityReport {
    pub rows: Vec<QuotientRow>,
    /// Observed orders between consecutive steps, per direction.
    pub orders: Vec<Vec<f64>>,
    /// Errors strictly decrease with `t` for every direction.
    pub monotone: bool,
    pub residuals: Vec<DerivativeResiduals>,
    pub contact_nodes: usize,
    pub biactive_nodes: usize,
    /// Largest entry of `S′(q; 0)`.
    pub zero_direction: f64,
}

impl SensitivityReport {
    pub const CSV_HEADER: &'static str = "direction,t,error,order";

    pub fn min_order(&self) -> f64 {
        self.orders.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let per = self.rows.len() / self.orders.len().max(1);
        csv(
            Self::CSV_HEADER,
            self.rows.iter().enumerate().map(|(i, r)| {
                let order = match i % per.max(1) {
                    0 => String::new(),
                    j => format!("{:e}", self.orders[r.direction][j - 1]),
                };
                format!("{},{:e},{:e},{order}", r.direction, r.t, r.error)
            }),
        )
    }
}

/// Difference quotients of the obstacle solution map at the configured
/// initial control along random directions.
fn sensitivity_study(cfg: &ExperimentConfig, level: u32, rng: &mut ChaCha8Rng) -> Result<SensitivityReport> {
    let fe = FeSpace::new(level)?;
    let q = cfg.initial_control(&fe);
    let f = fe.assemble_load(problem::source);
    let pdas = cfg.pdas();
    let sol = obstacle::solve_vi(&fe, &q, &f, cfg.psi, &pdas, None)?;
    let cone = sensitivity::critical_cone_for(&fe, &sol, &f, &pdas);
    let zero = MatrixControlField::zeros(fe.num_nodes());
    let zero_direction = sensitivity::directional_derivative(&fe, &q, &zero, &sol, &cone, &pdas, Some(cfg.bounds()))?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));

    let mut steps = cfg.sensitivity_steps.clone();
    steps.sort_by(|a, b| b.total_cmp(a));
    let mut rows = Vec::new();
    let mut orders = Vec::new();
    let mut residuals = Vec::new();
    let mut monotone = true;
    for dir in 0..cfg.sensitivity_directions {
        let d = random_direction(fe.num_nodes(), cfg.direction_scale, rng);
        let du = sensitivity::directional_derivative(&fe, &q, &d, &sol, &cone, &pdas, Some(cfg.bounds()))?;
        residuals.push(sensitivity::derivative_complementarity_check(&fe, &du, &cone, &q, &d, &sol.u)?);
        let errs = sensitivity::difference_quotient_errors(&fe, &q, &d, &sol, &du, &f, cfg.psi, &pdas, &steps)?;
        monotone &= errs.windows(2).all(|w| w[1] < w[0]);
        orders.push(
            errs.windows(2)
                .zip(steps.windows(2))
                .map(|(e, t)| (e[0] / e[1]).ln() / (t[0] / t[1]).ln())
                .collect(),
        );
        rows.extend(steps.iter().zip(&errs).map(|(&t, &error)| QuotientRow {
            direction: dir,
            t,
            error,
        }));
    }
    Ok(SensitivityReport {
        rows,
        orders,
        monotone,
        residuals,
        contact_nodes: sol.num_active(),
        biactive_nodes: cone.nonpositive_nodes.iter().filter(|&&b| b).count(),
        zero_direction,
    })
}

/// Difference-quotient validation of the directional derivative.
pub fn run_sensitivity(cfg: &ExperimentConfig) -> Result<SensitivityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let report = sensitivity_study(cfg, cfg.level, &mut rng)?;
    let mut artifacts = Artifacts::default();
    artifacts.write(&cfg.output_dir, "sensitivity.csv", &report.to_csv())?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub adjoint: Vec<AdjointRow>,
    pub derivative: SensitivityReport,
    pub max_rel_err: f64,
    pub passed: bool,
}

impl GradcheckReport {
    pub const ADJOINT_HEADER: &'static str = "control,direction,adjoint,finite_difference,rel_err,halving_ratio";
}

/// Adjoint gradient against central differences of the penalized reduced
/// objective, plus the derivative difference-quotient study.
pub fn run_gradcheck(cfg: &ExperimentConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fe = FeSpace::new(cfg.gradcheck_level)?;
    let obj = cfg.objective(&fe);
    let model = StateModel::Penalized(cfg.penalty(cfg.gradcheck_gamma));
    let n = fe.num_nodes();
    let objective = |q: &MatrixControlField| optimizer::reduced_objective(&fe, q, &obj, &model);
    let central = |q: &MatrixControlField, d: &MatrixControlField, h: f64| -> Result<f64> {
        Ok((objective(&q.axpy(h, d))? - objective(&q.axpy(-h, d))?) / (2.0 * h))
    };

    let mut rows = Vec::new();
    for control in 0..cfg.gradcheck_controls {
        let q = random_control(n, 1.0, 4.0, &mut rng);
        let eval = optimizer::evaluate(&fe, &q, &obj, &model, WarmStart::default())?.ok_or_else(|| {
            let rep = check_admissible(&q, obj.bounds);
            Error::InfeasibleControl {
                node: rep.worst_node,
                margin: rep.min_margin,
            }
        })?;
        let p = optimizer::adjoint(&fe, &eval, &obj, &model)?;
        let grad = optimizer::reduced_gradient(&fe, &q, &eval.u, &p, &obj)?;
        for direction in 0..cfg.gradcheck_directions {
            let d = random_direction(n, 1.0, &mut rng);
            let adjoint = control_inner(&fe, &grad, &d)?;
            let fd = central(&q, &d, cfg.fd_step)?;
            let e1 = (central(&q, &d, 100.0 * cfg.fd_step)? - adjoint).abs();
            let e2 = (central(&q, &d, 50.0 * cfg.fd_step)? - adjoint).abs();
            rows.push(AdjointRow {
                control,
                direction,
                adjoint,
                finite_difference: fd,
                rel_err: (adjoint - fd).abs() / adjoint.abs(),
                halving_ratio: e1 / e2,
            });
        }
    }
    let max_rel_err = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    let derivative = sensitivity_study(cfg, cfg.gradcheck_level, &mut rng)?;
    let passed = max_rel_err <= cfg.gradcheck_tol && derivative.monotone && derivative.zero_direction == 0.0;

    let mut artifacts = Artifacts::default();
    artifacts.write(
        &cfg.output_dir,
        "gradcheck_adjoint.csv",
        &csv(
            GradcheckReport::ADJOINT_HEADER,
            rows.iter().map(|r| {
                format!(
                    "{},{},{:e},{:e},{:e},{:e}",
                    r.control, r.direction, r.adjoint, r.finite_difference, r.rel_err, r.halving_ratio
                )
            }),
        ),
    )?;
    artifacts.write(&cfg.output_dir, "gradcheck_derivative.csv", &derivative.to_csv())?;
    Ok(GradcheckReport {
        adjoint: rows,
        derivative,
        max_rel_err,
        passed,
    })
}
