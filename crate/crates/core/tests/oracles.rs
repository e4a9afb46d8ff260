//! Independent reference computations: high-order quadrature, dense direct
//! solves, active-set enumeration and closed-form integrals.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vicontrol::control::{barrier, MatrixControlField, SpectralBounds, Sym2};
use vicontrol::fem::{CsrMatrix, FeSpace};
use vicontrol::linalg::solve_spd;
use vicontrol::obstacle::{self, PdasConfig};
use vicontrol::problem;

/// Gauss–Legendre nodes and weights on [0, 1].
fn gauss01(n: usize) -> Vec<(f64, f64)> {
    let (x, w): (Vec<f64>, Vec<f64>) = match n {
        4 => (
            vec![-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6],
            vec![0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9],
        ),
        6 => (
            vec![
                -0.932_469_514_203_152,
                -0.661_209_386_466_264_5,
                -0.238_619_186_083_196_9,
                0.238_619_186_083_196_9,
                0.661_209_386_466_264_5,
                0.932_469_514_203_152,
            ],
            vec![
                0.171_324_492_379_170_3,
                0.360_761_573_048_138_6,
                0.467_913_934_572_691_1,
                0.467_913_934_572_691_1,
                0.360_761_573_048_138_6,
                0.171_324_492_379_170_3,
            ],
        ),
        _ => unreachable!(),
    };
    x.into_iter().zip(w).map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// Bilinear interpolation of corner values (counter-clockwise from the
/// lower-left) at local coordinates `(s, t)`, with its gradient in `(s, t)`.
fn bilinear(c: [f64; 4], s: f64, t: f64) -> (f64, [f64; 2]) {
    let v = c[0] * (1.0 - s) * (1.0 - t) + c[1] * s * (1.0 - t) + c[2] * s * t + c[3] * (1.0 - s) * t;
    let ds = (c[1] - c[0]) * (1.0 - t) + (c[2] - c[3]) * t;
    let dt = (c[3] - c[0]) * (1.0 - s) + (c[2] - c[1]) * s;
    (v, [ds, dt])
}

fn random_interior(fe: &FeSpace, rng: &mut impl Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..fe.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    fe.mesh().zero_boundary(&mut v);
    v
}

#[test]
fn stiffness_energy_matches_four_point_quadrature() {
    let fe = FeSpace::new(3).unwrap();
    let mesh = fe.mesh();
    let q = problem::desired_control_field(mesh);
    let k = fe.assemble_stiffness(&q).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rule = gauss01(4);
    let h = mesh.h();
    for _ in 0..3 {
        let v = random_interior(&fe, &mut rng);
        let mut oracle = 0.0;
        for cell in 0..mesh.num_cells() {
            let nodes = mesh.cell_nodes(cell);
            let vc = nodes.map(|i| v[i]);
            let [q11, q22, q12] = q.components();
            let (c11, c22, c12) = (nodes.map(|i| q11[i]), nodes.map(|i| q22[i]), nodes.map(|i| q12[i]));
            for &(s, ws) in &rule {
                for &(t, wt) in &rule {
                    let (_, g) = bilinear(vc, s, t);
                    let (gx, gy) = (g[0] / h, g[1] / h);
                    let a11 = bilinear(c11, s, t).0;
                    let a22 = bilinear(c22, s, t).0;
                    let a12 = bilinear(c12, s, t).0;
                    oracle += ws * wt * h * h * (a11 * gx * gx + 2.0 * a12 * gx * gy + a22 * gy * gy);
                }
            }
        }
        let got = k.quad_form(&v);
        assert!(((got - oracle) / oracle).abs() < 1e-10, "{got} vs {oracle}");
    }
}

#[test]
fn stiffness_satisfies_the_spectral_sandwich() {
    let fe = FeSpace::new(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bounds = SpectralBounds::new(0.7, 3.0);
    let q = vicontrol::experiments::random_control(fe.num_nodes(), 0.7, 3.0, &mut rng);
    let k = fe.assemble_stiffness(&q).unwrap();
    let laplace = fe.laplace();
    for _ in 0..50 {
        let v = random_interior(&fe, &mut rng);
        let base = laplace.quad_form(&v);
        let e = k.quad_form(&v);
        assert!(bounds.q_min * base <= e * (1.0 + 1e-12) && e <= bounds.q_max * base * (1.0 + 1e-12));
    }
}

#[test]
fn load_sum_matches_six_point_quadrature() {
    let fe = FeSpace::new(5).unwrap();
    let mesh = fe.mesh();
    let rule = gauss01(6);
    let h = mesh.h();
    let mut oracle = 0.0;
    for cell in 0..mesh.num_cells() {
        let [x0, y0] = mesh.cell_origin(cell);
        for &(s, ws) in &rule {
            for &(t, wt) in &rule {
                oracle += ws * wt * h * h * problem::source(x0 + s * h, y0 + t * h);
            }
        }
    }
    let sum: f64 = fe.assemble_load(problem::source).iter().sum();
    assert!((sum - oracle).abs() < 1e-8, "{sum} vs {oracle}");
    assert!((oracle - 16.0).abs() < 1e-10);
}

#[test]
fn desired_state_norm_matches_closed_form() {
    // ∫(1 − x²)² dx = 16/15 on (−1, 1), so ‖u_d‖ = 16/15.
    let fe = FeSpace::new(6).unwrap();
    let u = fe.interpolate(problem::desired_state);
    let exact = 16.0 / 15.0;
    assert!((fe.l2_norm(&u) - exact).abs() < 1e-3, "{}", fe.l2_norm(&u));
    let coarse = FeSpace::new(4).unwrap();
    let e4 = (coarse.l2_norm(&coarse.interpolate(problem::desired_state)) - exact).abs();
    let e6 = (fe.l2_norm(&u) - exact).abs();
    assert!(e4 / e6 > 10.0, "interpolation error does not decay: {e4} {e6}");
}

#[test]
fn sparse_solve_matches_dense_factorization() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
    let a = &b * b.transpose() + DMatrix::identity(5, 5) * 0.5;
    let rhs = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
    let dense = a.clone().cholesky().unwrap().solve(&rhs);
    let row_major: Vec<f64> = (0..25).map(|k| a[(k / 5, k % 5)]).collect();
    let sparse = CsrMatrix::from_dense(5, &row_major);
    let (x, report) = solve_spd(&sparse, rhs.as_slice(), 1e-14).unwrap();
    for i in 0..5 {
        assert!((x[i] - dense[i]).abs() < 1e-10, "{i}: {} vs {}", x[i], dense[i]);
    }
    assert!(report.iterations <= 10);
}

#[test]
fn active_set_solver_matches_enumeration_on_the_reference_instance() {
    let fe = FeSpace::new(2).unwrap();
    let q = MatrixControlField::identity(fe.num_nodes());
    let f = fe.assemble_load(|_, _| 10.0);
    let psi = 0.1;
    let sol = obstacle::solve_vi(&fe, &q, &f, psi, &PdasConfig::default(), None).unwrap();
    let (k, b, lumped, ids) = obstacle::interior_dense_system(&fe, &q, &f).unwrap();
    let (u, lambda) = obstacle::oracle_active_set_enumeration(&k, &b, &lumped, psi).unwrap();
    for (r, &i) in ids.iter().enumerate() {
        assert!((sol.u[i] - u[r]).abs() < 1e-10);
        assert!((sol.lambda[i] - lambda[r]).abs() < 1e-8);
    }
    assert!(sol.num_active() > 0);
}

#[test]
fn huge_load_makes_every_interior_node_active() {
    let fe = FeSpace::new(2).unwrap();
    let q = MatrixControlField::identity(fe.num_nodes());
    let f = fe.assemble_load(|_, _| 1e4);
    let psi = 0.5;
    let sol = obstacle::solve_vi(&fe, &q, &f, psi, &PdasConfig::default(), None).unwrap();
    let mut psi_vec = vec![psi; fe.num_nodes()];
    fe.mesh().zero_boundary(&mut psi_vec);
    let k = fe.assemble_stiffness(&q).unwrap();
    let kpsi = k.matvec(&psi_vec);
    for i in fe.mesh().interior_nodes() {
        assert!(sol.active_set[i]);
        assert!((sol.u[i] - psi).abs() < 1e-12);
        let expected = (f[i] - kpsi[i]) / fe.lumped_mass()[i];
        assert!((sol.lambda[i] - expected).abs() < 1e-9 * expected.abs());
        assert!(sol.lambda[i] > 0.0);
    }
}

#[test]
fn barrier_gradient_converges_at_second_order() {
    let fe = FeSpace::new(3).unwrap();
    let bounds = problem::default_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..3 {
        let q = vicontrol::experiments::random_control(fe.num_nodes(), 1.0, 5.0, &mut rng);
        let d = vicontrol::experiments::random_direction(fe.num_nodes(), 1.0, &mut rng);
        let g = barrier(&fe, &q, bounds).unwrap().gradient.unwrap();
        let exact = vicontrol::control::control_inner(&fe, &g, &d).unwrap();
        let value = |s: f64| barrier(&fe, &q.axpy(s, &d), bounds).unwrap().value;
        let fd = |h: f64| (value(h) - value(-h)) / (2.0 * h);
        let (h1, h2) = (1e-2, 5e-3);
        let (e1, e2) = ((fd(h1) - exact).abs(), (fd(h2) - exact).abs());
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "observed order {order} ({e1:e}, {e2:e})");
        assert!(((fd(1e-5) - exact) / exact).abs() < 1e-6);
    }
}

#[test]
fn barrier_grows_towards_the_boundary() {
    let fe = FeSpace::new(2).unwrap();
    let bounds = problem::default_bounds();
    let n = fe.num_nodes();
    let inside = MatrixControlField::constant(n, Sym2::new(2.0, 3.0, 0.5));
    let edge = MatrixControlField::constant(n, Sym2::new(0.5, 3.0, 0.0));
    let mut prev = f64::NEG_INFINITY;
    for t in [0.0, 0.5, 0.9, 0.99, 0.999, 0.999_999] {
        let q = inside.axpy(t, &edge.sub(&inside));
        let v = barrier(&fe, &q, bounds).unwrap().value;
        assert!(v > prev, "barrier not increasing at t = {t}");
        prev = v;
    }
    assert_eq!(barrier(&fe, &edge, bounds).unwrap().value, f64::INFINITY);
}

#[test]
fn constant_field_barrier_closed_form() {
    let fe = FeSpace::new(2).unwrap();
    let v = barrier(&fe, &MatrixControlField::identity(fe.num_nodes()), problem::default_bounds())
        .unwrap()
        .value;
    let exact = -4.0 * (2.0 * 0.5f64.ln() + 2.0 * 9.0f64.ln());
    assert!((v - exact).abs() < 1e-12);
}
