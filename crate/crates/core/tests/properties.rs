use proptest::prelude::*;

use schauder_core::campanato::constrained_quadratic_fit;
use schauder_core::fields::{
    ball_average_lp, dini_lp_constant, hessian_central, sample_function, GridField, GridParams,
    TestFunction,
};
use schauder_core::moduli::{dini_integral, psi_transform, Modulus};
use schauder_core::operators::{
    pucci_minus, pucci_plus, verify_ellipticity, EllipticityPair, OperatorSpec, SymMatrix,
};
use schauder_core::sampling::SamplePlan;
use schauder_core::solver::{solve_newton, NewtonConfig, ProblemInstance};

fn sym(n: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-5.0f64..5.0, n * (n + 1) / 2).prop_map(move |v| {
        let mut m = SymMatrix::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m.set(i, j, v[k]);
                k += 1;
            }
        }
        m
    })
}

fn sym_pair() -> impl Strategy<Value = (SymMatrix, SymMatrix)> {
    (2usize..=4).prop_flat_map(|n| (sym(n), sym(n)))
}

fn pair() -> impl Strategy<Value = EllipticityPair> {
    (0.1f64..3.0, 1.0f64..4.0).prop_map(|(l, f)| EllipticityPair::new(l, l * f).unwrap())
}

fn quadratic() -> impl Strategy<Value = TestFunction> {
    (-3.0f64..3.0, -3.0f64..3.0, sym(2), -2.0f64..2.0)
        .prop_map(|(b0, b1, m, c)| TestFunction::Quadratic { c, b: [b0, b1], m })
}

fn grid(n: usize) -> GridParams {
    GridParams::new(n, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pucci_minus_is_reflected_pucci_plus((m, _) in sym_pair(), p in pair()) {
        prop_assert!((pucci_minus(&m, p) + pucci_plus(&(-m), p)).abs() <= 1e-12 * (1.0 + m.frobenius()));
    }

    #[test]
    fn pucci_is_positively_homogeneous((m, _) in sym_pair(), p in pair(), t in 0.0f64..50.0) {
        let lhs = pucci_plus(&(t * m), p);
        prop_assert!((lhs - t * pucci_plus(&m, p)).abs() <= 1e-11 * (1.0 + t * m.frobenius()));
    }

    #[test]
    fn pucci_plus_is_subadditive_and_brackets_increments((m, n) in sym_pair(), p in pair()) {
        let slack = 1e-10 * (1.0 + m.frobenius() + n.frobenius());
        let inc = pucci_plus(&(m + n), p) - pucci_plus(&m, p);
        prop_assert!(inc <= pucci_plus(&n, p) + slack);
        prop_assert!(inc >= pucci_minus(&n, p) - slack);
        prop_assert!(pucci_minus(&n, p) <= pucci_plus(&n, p) + slack);
    }

    #[test]
    fn central_stencil_is_exact_on_quadratics(f in quadratic(), i in 1usize..16, j in 1usize..16) {
        let u = sample_function(&f, grid(17)).unwrap();
        let h = hessian_central(&u, (i, j)).unwrap();
        let want = f.hessian([0.0, 0.0]).unwrap();
        prop_assert!((h - want).frobenius() <= 1e-9 * (1.0 + want.frobenius()));
    }

    #[test]
    fn ball_average_grows_with_the_exponent(f in quadratic(), p in 2.1f64..8.0, dp in 0.0f64..10.0) {
        let g = grid(33);
        let u = sample_function(&f, g).unwrap();
        let lo = ball_average_lp(&u, g.center(), 0.5, p).unwrap();
        let hi = ball_average_lp(&u, g.center(), 0.5, p + dp).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn ball_average_respects_pointwise_domination(f in quadratic(), p in 2.1f64..8.0) {
        // sin is 1-Lipschitz, so |sin u − sin u(x0)| <= |u − u(x0)| everywhere.
        let g = grid(33);
        let u = sample_function(&f, g).unwrap();
        let v = GridField::from_fn(g, |x| f.value(x).sin()).unwrap();
        let a = ball_average_lp(&v, g.center(), 0.5, p).unwrap();
        let b = ball_average_lp(&u, g.center(), 0.5, p).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn dini_lp_constant_scales_linearly(f in quadratic(), c in 0.01f64..100.0) {
        let g = grid(33);
        let u = sample_function(&f, g).unwrap();
        let m = Modulus::power(0.5).unwrap();
        let centers = [g.center(), (12, 20)];
        let radii = [0.125, 0.25, 0.5];
        let base = dini_lp_constant(&u, &m, &centers, &radii, 5.0).unwrap().c_fit;
        let scaled = dini_lp_constant(&u.scaled(c), &m, &centers, &radii, 5.0).unwrap().c_fit;
        prop_assert!((scaled - c * base).abs() <= 1e-12 * (1.0 + c * base));
    }

    #[test]
    fn psi_dominates_tau_and_is_monotone(alpha in 0.05f64..1.0, beta in 0.0f64..3.0, t1 in 0.001f64..0.5, s in 0.0f64..1.0) {
        let m = Modulus::power_log(alpha, beta).unwrap();
        let t2 = t1 + s * (0.5 - t1);
        let p1 = psi_transform(&m, t1, 1e-10).unwrap();
        let p2 = psi_transform(&m, t2, 1e-10).unwrap();
        prop_assert!(p1 >= m.eval(t1).unwrap());
        prop_assert!(p2 >= p1 * (1.0 - 1e-12));
    }

    #[test]
    fn power_dini_integral_is_reciprocal(alpha in 0.05f64..=1.0) {
        let d = dini_integral(&Modulus::power(alpha).unwrap(), 1e-12).unwrap();
        prop_assert!(d.converged);
        prop_assert!((d.value * alpha - 1.0).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quadratic_fit_is_translation_invariant(
        coeffs in prop::collection::vec(-1.0f64..1.0, 5),
        di in -8i32..=8,
        dj in -8i32..=8,
    ) {
        // Cubic with no quadratic part at the origin, refit after a shift.
        let f = TestFunction::polynomial(&[
            (coeffs[0], 3, 0), (coeffs[1], 2, 1), (coeffs[2], 1, 2), (coeffs[3], 0, 3), (coeffs[4], 1, 0),
        ]);
        let g = grid(65);
        let h = g.spacing();
        let c = g.center();
        let moved = ((c.0 as i32 + di) as usize, (c.1 as i32 + dj) as usize);
        let shift = [di as f64 * h, dj as f64 * h];
        let u = sample_function(&f, g).unwrap();
        let v = GridField::from_fn(g, |x| f.value([x[0] - shift[0], x[1] - shift[1]])).unwrap();
        let op = OperatorSpec::perturbed_trace(2, 0.3).unwrap();
        let a = constrained_quadratic_fit(&u, &op, 0.25, c).unwrap();
        let b = constrained_quadratic_fit(&v, &op, 0.25, moved).unwrap();
        prop_assert!((a.jet.m - b.jet.m).frobenius() <= 1e-8);
        prop_assert!((a.jet.c - b.jet.c).abs() <= 1e-10);
    }

    #[test]
    fn discrete_laplace_obeys_the_maximum_principle(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = grid(17);
        let mut boundary = GridField::zeros(g, 1);
        for j in 0..g.nodes() {
            for i in 0..g.nodes() {
                if g.is_boundary(i, j) {
                    boundary.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
        }
        let inst = ProblemInstance::new(
            OperatorSpec::laplacian(2),
            GridField::zeros(g, 2),
            GridField::zeros(g, 1),
            boundary.clone(),
        ).unwrap();
        let sol = solve_newton(&inst, &inst.boundary_guess(), &NewtonConfig::default()).unwrap();
        prop_assert!(sol.converged);
        let (bmin, bmax) = boundary.values().iter().enumerate()
            .filter(|(k, _)| g.is_boundary(k % g.nodes(), k / g.nodes()))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| (lo.min(*v), hi.max(*v)));
        for v in sol.solution.values() {
            prop_assert!(*v <= bmax + 1e-9 && *v >= bmin - 1e-9);
        }
    }

    #[test]
    fn seeded_sampling_is_deterministic(seed in any::<u64>(), n in 2usize..=4) {
        let plan = SamplePlan { seed, gaussian: 20, rays: 10, identities: 4, ..SamplePlan::default() };
        prop_assert_eq!(plan.matrices(n), plan.matrices(n));
        prop_assert_eq!(plan.points(n), plan.points(n));
        let op = OperatorSpec::perturbed_trace(n, 0.2).unwrap();
        prop_assert_eq!(verify_ellipticity(&op, &plan), verify_ellipticity(&op, &plan));
    }
}
