use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vicontrol::control::{check_admissible, project_spectral, MatrixControlField, SpectralBounds, Sym2};
use vicontrol::experiments::{random_control, random_direction};
use vicontrol::fem::FeSpace;
use vicontrol::obstacle::{self, PdasConfig};
use vicontrol::penalty::{self, PenaltyConfig};
use vicontrol::sensitivity;

fn interior_load(fe: &FeSpace, lo: f64, hi: f64, rng: &mut impl Rng) -> Vec<f64> {
    let density: Vec<f64> = (0..fe.num_nodes()).map(|_| rng.gen_range(lo..hi)).collect();
    let mut f: Vec<f64> = density.iter().zip(fe.lumped_mass()).map(|(d, m)| d * m).collect();
    fe.mesh().zero_boundary(&mut f);
    f
}

fn scalar_control(fe: &FeSpace, rng: &mut impl Rng) -> MatrixControlField {
    let mut q = MatrixControlField::zeros(fe.num_nodes());
    for k in 0..fe.num_nodes() {
        q.set(k, Sym2::scalar(rng.gen_range(1.0..1.5)));
    }
    q
}

fn energy(k: &vicontrol::fem::CsrMatrix, f: &[f64], v: &[f64]) -> f64 {
    0.5 * k.quad_form(v) - f.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solution_does_not_depend_on_the_complementarity_constant(seed in any::<u64>(), psi in 0.02f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fe = FeSpace::new(3).unwrap();
        let q = random_control(fe.num_nodes(), 1.0, 4.0, &mut rng);
        let f = interior_load(&fe, 0.0, 30.0, &mut rng);
        let solve = |c: f64| {
            let cfg = PdasConfig { c, ..PdasConfig::default() };
            obstacle::solve_vi(&fe, &q, &f, psi, &cfg, None).unwrap().u
        };
        let base = solve(1.0);
        for c in [0.1, 100.0] {
            let other = solve(c);
            for (a, b) in base.iter().zip(&other) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn larger_loads_give_larger_states(seed in any::<u64>(), psi in 0.02f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fe = FeSpace::new(3).unwrap();
        let q = scalar_control(&fe, &mut rng);
        let f1 = interior_load(&fe, -10.0, 30.0, &mut rng);
        let extra = interior_load(&fe, 0.0, 10.0, &mut rng);
        let f2: Vec<f64> = f1.iter().zip(&extra).map(|(a, b)| a + b).collect();
        let cfg = PdasConfig::default();
        let u1 = obstacle::solve_vi(&fe, &q, &f1, psi, &cfg, None).unwrap().u;
        let u2 = obstacle::solve_vi(&fe, &q, &f2, psi, &cfg, None).unwrap().u;
        for (a, b) in u1.iter().zip(&u2) {
            prop_assert!(*a <= b + 1e-10);
        }
    }

    #[test]
    fn solution_minimizes_energy_over_the_feasible_set(seed in any::<u64>(), psi in 0.02f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fe = FeSpace::new(3).unwrap();
        let q = random_control(fe.num_nodes(), 1.0, 4.0, &mut rng);
        let f = interior_load(&fe, 0.0, 30.0, &mut rng);
        let sol = obstacle::solve_vi(&fe, &q, &f, psi, &PdasConfig::default(), None).unwrap();
        let k = fe.assemble_stiffness(&q).unwrap().with_dirichlet(fe.boundary_mask());
        let e0 = energy(&k, &f, &sol.u);
        for _ in 0..100 {
            let scale = 10f64.powf(rng.gen_range(-4.0..0.0));
            let mut v: Vec<f64> = sol.u.iter().map(|&u| (u + scale * rng.gen_range(-1.0..1.0)).min(psi)).collect();
            fe.mesh().zero_boundary(&mut v);
            prop_assert!(energy(&k, &f, &v) >= e0 - 1e-12 * e0.abs().max(1.0));
        }
    }

    #[test]
    fn converged_solves_are_complementary(seed in any::<u64>(), psi in 0.02f64..0.3, level in 2u32..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fe = FeSpace::new(level).unwrap();
        let q = random_control(fe.num_nodes(), 0.6, 9.0, &mut rng);
        let f = interior_load(&fe, -5.0, 40.0, &mut rng);
        let sol = obstacle::solve_vi(&fe, &q, &f, psi, &PdasConfig::default(), None).unwrap();
        let r = obstacle::complementarity_residuals(&fe, &sol, psi);
        let scale = fe.lumped_l2_norm(&f) * psi;
        prop_assert!(r.feas_u <= 1e-10);
        prop_assert!(r.feas_lambda <= 1e-10);
        prop_assert!(r.comp <= 1e-10 * scale.max(1.0));
    }

    #[test]
    fn active_set_solver_agrees_with_enumeration(seed in any::<u64>(), psi in 0.01f64..0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fe = FeSpace::new(2).unwrap();
        let q = random_control(fe.num_nodes(), 0.6, 9.0, &mut rng);
        let f = interior_load(&fe, -5.0, 40.0, &mut rng);
        let sol = obstacle::solve_vi(&fe, &q, &f, psi, &PdasConfig::default(), None).unwrap();
        let (k, b, lumped, ids) = obstacle::interior_dense_system(&fe, &q, &f).unwrap();
        let (u, _) = obstacle::oracle_active_set_enumeration(&k, &b, &lumped, psi).unwrap();
        for (r, &i) in ids.iter().enumerate() {
            prop_assert!((sol.u[i] - u[r]).abs() < 1e-10);
        }
    }

    #[test]
    fn penalized_solution_is_independent_of_the_start(seed in any::<u64>(), log_gamma in 0.0f64..9.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fe = FeSpace::new(3).unwrap();
        let q = random_control(fe.num_nodes(), 1.0, 4.0, &mut rng);
        let f = interior_load(&fe, 0.0, 30.0, &mut rng);
        let cfg = PenaltyConfig::new(10f64.powf(log_gamma), 0.2);
        let cold = penalty::solve_penalized(&fe, &q, &f, &cfg, None).unwrap().u;
        let mut start: Vec<f64> = (0..fe.num_nodes()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        fe.mesh().zero_boundary(&mut start);
        let warm = penalty::solve_penalized(&fe, &q, &f, &cfg, Some(&start)).unwrap().u;
        for (a, b) in cold.iter().zip(&warm) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_lands_strictly_inside(seed in any::<u64>(), margin in 1e-6f64..1e-2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bounds = SpectralBounds::new(0.5, 10.0);
        let n = 30;
        let mut q = MatrixControlField::zeros(n);
        for k in 0..n {
            let e = [0; 3].map(|_| rng.gen_range(-20.0..20.0));
            q.set(k, Sym2::new(e[0], e[1], e[2]));
        }
        let p = project_spectral(&q, bounds, margin);
        let rep = check_admissible(&p, bounds);
        prop_assert!(rep.admissible && rep.min_margin > 0.0);
        for k in 0..n {
            let (lo, hi, _) = p.at(k).eigen();
            prop_assert!(lo >= 0.5 + margin - 1e-12 && hi <= 10.0 - margin + 1e-12);
        }
        let again = project_spectral(&p, bounds, margin);
        prop_assert!(again.max_abs_diff(&p) <= 1e-13, "diff {:e}", again.max_abs_diff(&p));
    }

    #[test]
    fn directional_derivative_is_positively_homogeneous(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fe = FeSpace::new(3).unwrap();
        let q = random_control(fe.num_nodes(), 1.0, 4.0, &mut rng);
        let f = interior_load(&fe, 0.0, 30.0, &mut rng);
        let cfg = PdasConfig::default();
        let sol = obstacle::solve_vi(&fe, &q, &f, 0.1, &cfg, None).unwrap();
        let cone = sensitivity::critical_cone_for(&fe, &sol, &f, &cfg);
        let d = random_direction(fe.num_nodes(), 0.1, &mut rng);
        let base = sensitivity::directional_derivative(&fe, &q, &d, &sol, &cone, &cfg, None).unwrap();
        for s in [0.5, 2.0] {
            let scaled = sensitivity::directional_derivative(&fe, &q, &d.scaled(s), &sol, &cone, &cfg, None).unwrap();
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((s * a - b).abs() < 1e-10 * (1.0 + a.abs()));
            }
        }
        for i in 0..fe.num_nodes() {
            if cone.zero_nodes[i] {
                prop_assert_eq!(base[i], 0.0);
            }
            if cone.nonpositive_nodes[i] {
                prop_assert!(base[i] <= 1e-12);
            }
        }
        let r = sensitivity::derivative_complementarity_check(&fe, &base, &cone, &q, &d, &sol.u).unwrap();
        prop_assert!(r.cone <= 1e-8 && r.polarity <= 1e-8 && r.comp <= 1e-8);
    }
}
