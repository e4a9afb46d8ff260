//! End-to-end behaviour of the solvers and optimizer on the model problem.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vicontrol::control::{check_admissible, control_norm, MatrixControlField};
use vicontrol::experiments::{self, random_control, random_direction, ExperimentConfig};
use vicontrol::fem::FeSpace;
use vicontrol::obstacle::{self, PdasConfig};
use vicontrol::optimizer::{
    self, minimize, solve_vi_constrained, ObjectiveConfig, OptOptions, StateModel, Termination, WarmStart,
};
use vicontrol::penalty::{self, PenaltyConfig};
use vicontrol::problem;
use vicontrol::sensitivity;

fn objective(fe: &FeSpace) -> ObjectiveConfig {
    ObjectiveConfig {
        alpha: problem::ALPHA,
        beta: problem::BETA,
        u_d: fe.interpolate(problem::desired_state),
        q_d: problem::desired_control_field(fe.mesh()),
        bounds: problem::default_bounds(),
        f_load: fe.assemble_load(problem::source),
    }
}

fn initial(fe: &FeSpace) -> MatrixControlField {
    MatrixControlField::constant(fe.num_nodes(), problem::INITIAL_CONTROL)
}

fn max_violation(u: &[f64], psi: f64) -> f64 {
    u.iter().fold(0.0f64, |m, &v| m.max(v - psi))
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Lumped dual norm `√(Σ m_i r_i²)` of a nodal density.
fn lumped_dual(fe: &FeSpace, r: &[f64]) -> f64 {
    r.iter().zip(fe.lumped_mass()).map(|(v, m)| m * v * v).sum::<f64>().sqrt()
}

#[test]
fn penalty_path_at_fixed_control_approaches_the_obstacle_solution() {
    let fe = FeSpace::new(5).unwrap();
    let q = initial(&fe);
    let f = fe.assemble_load(problem::source);
    let psi = problem::OBSTACLE;
    let vi = obstacle::solve_vi(&fe, &q, &f, psi, &PdasConfig::default(), None).unwrap();
    let mut prev: Option<(f64, f64, f64)> = None;
    let mut warm: Option<Vec<f64>> = None;
    for gamma in [1e0, 1e3, 1e6, 1e9, 1e12] {
        let cfg = PenaltyConfig::new(gamma, psi);
        let u = penalty::solve_penalized(&fe, &q, &f, &cfg, warm.as_deref()).unwrap().u;
        let dist = fe.l2_norm(&diff(&u, &vi.u));
        let viol = max_violation(&u, psi);
        let r = penalty::penalty_residual_as_multiplier(&fe, &u, &cfg);
        let dual = lumped_dual(&fe, &diff(&r, &vi.lambda));
        if let Some((d0, v0, r0)) = prev {
            assert!(dist < d0, "distance not decreasing at gamma {gamma:e}");
            assert!(viol <= v0, "violation increased at gamma {gamma:e}");
            assert!(dual < r0, "multiplier distance not decreasing at gamma {gamma:e}");
        }
        if gamma == 1e12 {
            assert!(viol <= 1e-3, "violation {viol:e}");
        }
        prev = Some((dist, viol, dual));
        warm = Some(u);
    }
}

#[test]
fn adjoint_gives_the_derivative_of_the_tracking_term() {
    let fe = FeSpace::new(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut obj = objective(&fe);
    obj.alpha = 1e-300;
    obj.beta = 0.0;
    let model = StateModel::Penalized(PenaltyConfig::new(1e3, problem::OBSTACLE));
    let q = random_control(fe.num_nodes(), 1.0, 4.0, &mut rng);
    let eval = optimizer::evaluate(&fe, &q, &obj, &model, WarmStart::default()).unwrap().unwrap();
    let p = optimizer::adjoint(&fe, &eval, &obj, &model).unwrap();
    let g = optimizer::reduced_gradient(&fe, &q, &eval.u, &p, &obj).unwrap();
    for _ in 0..3 {
        let d = random_direction(fe.num_nodes(), 1.0, &mut rng);
        let exact = vicontrol::control::control_inner(&fe, &g, &d).unwrap();
        let h = 1e-4;
        let j = |s: f64| optimizer::reduced_objective(&fe, &q.axpy(s, &d), &obj, &model).unwrap();
        let fd = (j(h) - j(-h)) / (2.0 * h);
        assert!(((fd - exact) / exact).abs() < 1e-5, "{fd} vs {exact}");
    }
}

#[test]
fn gradient_without_state_is_the_tikhonov_term() {
    let fe = FeSpace::new(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut obj = objective(&fe);
    obj.f_load = vec![0.0; fe.num_nodes()];
    obj.u_d = vec![0.0; fe.num_nodes()];
    obj.beta = 0.0;
    let model = StateModel::Penalized(PenaltyConfig::new(1e3, problem::OBSTACLE));
    let q = random_control(fe.num_nodes(), 1.0, 4.0, &mut rng);
    let eval = optimizer::evaluate(&fe, &q, &obj, &model, WarmStart::default()).unwrap().unwrap();
    assert!(eval.u.iter().all(|&v| v == 0.0));
    let p = optimizer::adjoint(&fe, &eval, &obj, &model).unwrap();
    let g = optimizer::reduced_gradient(&fe, &q, &eval.u, &p, &obj).unwrap();
    let expected = q.sub(&obj.q_d).scaled(obj.alpha);
    assert!(g.max_abs_diff(&expected) < 1e-12);
}

#[test]
fn starting_at_the_manufactured_optimum_stops_immediately() {
    let fe = FeSpace::new(4).unwrap();
    let mut obj = objective(&fe);
    obj.beta = 0.0;
    let q_d = obj.q_d.clone();
    let model = StateModel::Penalized(PenaltyConfig::new(0.0, f64::INFINITY));
    obj.u_d = optimizer::evaluate(&fe, &q_d, &obj, &model, WarmStart::default()).unwrap().unwrap().u;
    let r = minimize(&fe, &q_d, &obj, &model, &OptOptions::default()).unwrap();
    assert!(r.iterations() <= 2);
    assert!(control_norm(&fe, &r.grad).unwrap() < 1e-10);
    assert_eq!(r.termination, Termination::Stationary);
}

#[test]
fn penalized_optimization_respects_armijo_and_admissibility() {
    let fe = FeSpace::new(5).unwrap();
    let obj = objective(&fe);
    let opts = OptOptions::default();
    let model = StateModel::Penalized(PenaltyConfig::new(1e6, problem::OBSTACLE));
    let r = minimize(&fe, &initial(&fe), &obj, &model, &opts).unwrap();
    for w in r.history.windows(2) {
        let (a, b) = (w[0], w[1]);
        assert!(b.objective < a.objective, "objective not decreasing at {}", a.iteration);
        assert!(b.objective <= a.objective - opts.sigma * a.step * a.grad_norm * a.grad_norm);
    }
    assert!(r.history.iter().all(|rec| rec.min_margin > 0.0));
    // The cubic penalty leaves a violation of order (λ/γ)^(1/3) ≈ 1.6e-2.
    let viol = max_violation(&r.u, problem::OBSTACLE);
    println!("final violation at gamma 1e6: {viol:e}");
    assert!(viol <= 2e-2);
}

#[test]
fn stationarity_measure_separates_start_and_optimum() {
    let fe = FeSpace::new(4).unwrap();
    let obj = objective(&fe);
    let pdas = PdasConfig::default();
    let q0 = initial(&fe);
    let model = StateModel::Obstacle {
        psi: problem::OBSTACLE,
        pdas,
    };
    let e0 = optimizer::evaluate(&fe, &q0, &obj, &model, WarmStart::default()).unwrap().unwrap();
    let p0 = optimizer::adjoint(&fe, &e0, &obj, &model).unwrap();
    let s = OptOptions::default().stationarity_step;
    assert!(optimizer::stationarity_residual_vi(&fe, &q0, &e0.u, &p0, &obj, s).unwrap() > 1e-2);
    let r = solve_vi_constrained(&fe, &q0, &obj, problem::OBSTACLE, &pdas, &OptOptions::default()).unwrap();
    assert!(optimizer::stationarity_residual_vi(&fe, &r.q, &r.u, &r.p, &obj, s).unwrap() <= 1e-6);
}

#[test]
fn inactive_obstacle_reduces_to_the_smooth_problem() {
    let fe = FeSpace::new(3).unwrap();
    let obj = objective(&fe);
    let opts = OptOptions::default();
    let psi = 1e6;
    let vi = solve_vi_constrained(&fe, &initial(&fe), &obj, psi, &PdasConfig::default(), &opts).unwrap();
    let smooth = minimize(&fe, &initial(&fe), &obj, &StateModel::Penalized(PenaltyConfig::new(1e3, psi)), &opts).unwrap();
    assert_eq!(vi.vi.as_ref().unwrap().num_active(), 0);
    assert!(vi.q.max_abs_diff(&smooth.q) < 1e-8);
    assert!(vi.u.iter().zip(&smooth.u).all(|(a, b)| (a - b).abs() < 1e-8));
}

#[test]
fn smaller_barrier_weight_shrinks_the_barrier_term() {
    let fe = FeSpace::new(3).unwrap();
    let model = StateModel::Penalized(PenaltyConfig::new(1e3, problem::OBSTACLE));
    let mut last = f64::INFINITY;
    for beta in [1e-2, 1e-3, 1e-4] {
        let mut obj = objective(&fe);
        obj.beta = beta;
        let r = minimize(&fe, &initial(&fe), &obj, &model, &OptOptions::default()).unwrap();
        let b = r.parts.barrier.abs();
        assert!(b < last, "barrier term {b:e} at beta {beta:e}");
        last = b;
    }
}

#[test]
fn sensitivity_at_the_obstacle_optimum() {
    let fe = FeSpace::new(4).unwrap();
    let obj = objective(&fe);
    let pdas = PdasConfig::default();
    let psi = problem::OBSTACLE;
    let r = solve_vi_constrained(&fe, &initial(&fe), &obj, psi, &pdas, &OptOptions::default()).unwrap();
    let sol = r.vi.clone().unwrap();
    let cone = sensitivity::critical_cone_for(&fe, &sol, &obj.f_load, &pdas);
    assert!(cone.zero_nodes.iter().any(|&b| b));

    let at_self = sensitivity::primal_first_order_check(&fe, &r.q, &sol, &[r.q.clone()], &obj, &pdas).unwrap();
    assert_eq!(at_self, 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let candidates: Vec<MatrixControlField> = (0..20)
        .map(|_| r.q.axpy(1.0, &random_direction(fe.num_nodes(), 0.05, &mut rng)))
        .collect();
    assert!(candidates.iter().all(|c| check_admissible(c, obj.bounds).admissible));
    let scale = r.objective().abs();
    let at_opt = sensitivity::primal_first_order_check(&fe, &r.q, &sol, &candidates, &obj, &pdas).unwrap();
    println!("first-order value at the optimum: {at_opt:e} (scale {scale:e})");
    assert!(at_opt >= -1e-6 * scale);

    let q0 = initial(&fe);
    let sol0 = obstacle::solve_vi(&fe, &q0, &obj.f_load, psi, &pdas, None).unwrap();
    let toward: Vec<MatrixControlField> = vec![r.q.clone()];
    let at_start = sensitivity::primal_first_order_check(&fe, &q0, &sol0, &toward, &obj, &pdas).unwrap();
    assert!(at_start < 0.0, "{at_start:e}");
}

#[test]
fn example_one_contact_sits_where_the_target_exceeds_the_obstacle() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.level = 4;
    cfg.output_dir = dir.path().to_path_buf();
    let out = experiments::run_example1(&cfg).unwrap();
    assert!(out.vi.num_active() > 0);
    assert!(out.vi.lambda.iter().any(|&l| l > 0.0));
    let fe = FeSpace::new(4).unwrap();
    for i in 0..fe.num_nodes() {
        if out.vi.active_set[i] {
            let [x, y] = fe.mesh().node_coords(i);
            assert!(problem::desired_state(x, y) > 0.3, "contact at ({x}, {y})");
        }
    }
    assert_eq!(out.admissibility_violations, 0);

    let fields = experiments::read_vtk(&dir.path().join("example1_fields.vtk")).unwrap();
    assert_eq!(fields.get("u").unwrap(), out.result.u.as_slice());
    assert_eq!(fields.get("lambda").unwrap(), out.vi.lambda.as_slice());
    let [q11, q22, q12] = out.result.q.components();
    assert_eq!(fields.get("q11").unwrap(), q11);
    assert_eq!(fields.get("q22").unwrap(), q22);
    assert_eq!(fields.get("q12").unwrap(), q12);
}

#[test]
fn example_one_without_contact_recovers_the_targets() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.level = 4;
    cfg.psi = 1e6;
    cfg.output_dir = dir.path().to_path_buf();
    let out = experiments::run_example1(&cfg).unwrap();
    assert_eq!(out.vi.num_active(), 0);
    let fe = FeSpace::new(4).unwrap();
    let obj = cfg.objective(&fe);
    let err_u = fe.l2_norm(&diff(&out.result.u, &obj.u_d));
    let err_q = control_norm(&fe, &out.result.q.sub(&obj.q_d)).unwrap();
    println!("no-contact optimum: |u - u_d| = {err_u:e}, |q - q_d| = {err_q:e}");
    assert!(err_u < 1e-2 && err_q < 1e-1);
}
