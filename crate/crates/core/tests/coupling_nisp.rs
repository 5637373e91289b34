use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reduced_nisp::basis::{RuleKind, TotalDegreeBasis};
use reduced_nisp::coupling::{bgs_solve, AffineModule, BgsConfig, ModuleOperator};
use reduced_nisp::gpc::{uniform_points, CoeffMatrix, Gramian};
use reduced_nisp::nisp::{
    deterministic_init, error_decomposition, input_gpc, reduced_nisp, relative_error, seed_init, standard_nisp,
    Method, NispSetup, PropagationReport, ReducedConfig,
};
use reduced_nisp::problems::Problem;
use reduced_nisp::Error;

fn scalar(a: f64, c: f64) -> AffineModule {
    AffineModule::new(DMatrix::from_element(1, 1, a), DMatrix::zeros(1, 0), DVector::from_element(1, c))
}

/// `u <- A v + B xi + C (xi .* xi) + c`, exact solution quadratic in xi when
/// the coupling is one-way.
struct Quadratic {
    inner: AffineModule,
    c2: DMatrix<f64>,
}

impl ModuleOperator for Quadratic {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }
    fn gramian(&self) -> &Gramian {
        self.inner.gramian()
    }
    fn solve(&self, own: &DVector<f64>, partner: &DVector<f64>, xi: &[f64]) -> reduced_nisp::Result<DVector<f64>> {
        let x = DVector::from_column_slice(xi);
        Ok(self.inner.solve(own, partner, xi)? + &self.c2 * x.component_mul(&x))
    }
}

struct Blowup;

impl ModuleOperator for Blowup {
    fn state_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        0
    }
    fn gramian(&self) -> &Gramian {
        static G: std::sync::OnceLock<Gramian> = std::sync::OnceLock::new();
        G.get_or_init(|| Gramian::identity(1))
    }
    fn solve(&self, _: &DVector<f64>, p: &DVector<f64>, _: &[f64]) -> reduced_nisp::Result<DVector<f64>> {
        Ok(p * 1e200 + DVector::from_element(1, 1e200))
    }
}

#[test]
fn bgs_linear_fixed_point() {
    let (m1, m2) = (scalar(0.5, 1.0), scalar(0.5, 1.0));
    let cfg = BgsConfig {
        relaxation: 1.0,
        tol: 1e-12,
        max_iters: 200,
    };
    let sol = bgs_solve(&m1, &m2, &[], &[], None, &cfg).unwrap();
    assert_abs_diff_eq!(sol.u1[0], 2.0, epsilon = 1e-10);
    assert_abs_diff_eq!(sol.u2[0], 2.0, epsilon = 1e-10);
    assert_eq!(sol.history.len(), sol.iterations);

    let again = bgs_solve(&m1, &m2, &[], &[], None, &cfg).unwrap();
    assert_eq!(again.history, sol.history);
}

#[test]
fn bgs_decoupled_converges_in_one_sweep_plus_check() {
    let (m1, m2) = (scalar(0.0, 3.0), scalar(0.0, -1.0));
    let cfg = BgsConfig {
        relaxation: 1.0,
        ..BgsConfig::default()
    };
    let sol = bgs_solve(&m1, &m2, &[], &[], None, &cfg).unwrap();
    assert_eq!((sol.u1[0], sol.u2[0]), (3.0, -1.0));
    // the first sweep lands on the solution; the second confirms it
    assert!(sol.iterations <= 2);
    assert_eq!(sol.history.last().unwrap(), &(0.0, 0.0));
}

#[test]
fn bgs_fixed_point_consistency() {
    let (m1, m2) = (scalar(0.7, 1.0), scalar(-0.6, 2.0));
    let cfg = BgsConfig::default();
    let sol = bgs_solve(&m1, &m2, &[], &[], None, &cfg).unwrap();
    let n1 = m1.solve(&sol.u1, &sol.u2, &[]).unwrap();
    let n1 = &n1 * cfg.relaxation + &sol.u1 * (1.0 - cfg.relaxation);
    assert!((n1 - &sol.u1).norm() <= cfg.tol * (1.0 + sol.u1.norm()));
}

#[test]
fn bgs_errors() {
    let cfg = BgsConfig::default();
    let err = bgs_solve(&Blowup, &Blowup, &[], &[], None, &cfg).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err}");

    let (m1, m2) = (scalar(1.0, 1.0), scalar(1.0, 1.0));
    let err = bgs_solve(&m1, &m2, &[], &[], None, &BgsConfig { max_iters: 5, ..cfg }).unwrap_err();
    match err {
        Error::NoConvergence {
            iterations, last_state, ..
        } => {
            assert_eq!(iterations, 5);
            assert!(last_state.is_some());
        }
        other => panic!("unexpected {other}"),
    }
    assert!(bgs_solve(&m1, &m2, &[0.1], &[], None, &cfg).is_err());
    assert!(BgsConfig { relaxation: 0.0, ..cfg }.validate().is_err());
}

#[test]
fn input_matrices() {
    let setup = NispSetup::with_level(2, 1, 2, 2, RuleKind::Smolyak).unwrap();
    let x1 = input_gpc(&setup, 0).unwrap();
    let x2 = input_gpc(&setup, 1).unwrap();
    assert_eq!((x1.nrows(), x2.nrows()), (2, 1));
    for x in [&x1, &x2] {
        assert!(x.column(0).amax() < 1e-12);
        for row in x.row_iter() {
            let nonzero: Vec<f64> = row.iter().copied().filter(|v| v.abs() > 1e-12).collect();
            assert_eq!(nonzero.len(), 1);
            assert_abs_diff_eq!(nonzero[0], 1.0 / 3f64.sqrt(), epsilon = 1e-12);
        }
    }
    assert!((x1.row(0) * x1.row(1).transpose())[0].abs() < 1e-12);
}

fn one_way_pair(rng: &mut ChaCha8Rng) -> (Quadratic, Quadratic) {
    // module 1 ignores its partner, so the coupled solution is quadratic
    let m1 = Quadratic {
        inner: AffineModule::new(
            DMatrix::zeros(2, 3),
            DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0)),
            DVector::from_vec(vec![1.0, 2.0]),
        ),
        c2: DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-0.5..0.5)),
    };
    let m2 = Quadratic {
        inner: AffineModule::new(
            DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-0.5..0.5)),
            DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0)),
            DVector::from_vec(vec![0.5, 0.0, -1.0]),
        ),
        c2: DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-0.5..0.5)),
    };
    (m1, m2)
}

#[test]
fn standard_nisp_reproduces_polynomial_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (m1, m2) = one_way_pair(&mut rng);
    let setup = NispSetup::with_level(2, 2, 2, 2, RuleKind::Smolyak).unwrap();
    let init = deterministic_init(&m1, &m2, &setup, &BgsConfig::default()).unwrap();
    let cfg = BgsConfig {
        tol: 1e-13,
        ..BgsConfig::stochastic()
    };
    let rep = standard_nisp(&m1, &m2, &setup, init, &cfg).unwrap();
    assert!(rep.converged);
    assert_eq!(rep.module_calls, [rep.iterations * setup.nodes(); 2]);
    let (c1, c2) = rep.coefficients().unwrap();
    let basis = TotalDegreeBasis::new(4, 2).unwrap();
    let pts = uniform_points(4, 100, 2);
    for k in 0..100 {
        let xi: Vec<f64> = pts.column(k).iter().copied().collect();
        let exact1 = m1.solve(&DVector::zeros(2), &DVector::zeros(3), &xi[..2]).unwrap();
        let exact2 = m2.solve(&DVector::zeros(3), &exact1, &xi[2..]).unwrap();
        assert!((c1.evaluate(&basis, &xi).unwrap() - exact1).amax() < 1e-8);
        assert!((c2.evaluate(&basis, &xi).unwrap() - exact2).amax() < 1e-8);
    }
}

#[test]
fn linear_response_recovered_in_two_iterations() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (mut m1, mut m2) = one_way_pair(&mut rng);
    m1.c2.fill(0.0);
    m2.c2.fill(0.0);
    let setup = NispSetup::with_level(2, 2, 1, 1, RuleKind::Tensor).unwrap();
    let cfg = BgsConfig {
        relaxation: 1.0,
        tol: 1e-10,
        max_iters: 50,
    };
    let rep = standard_nisp(&m1, &m2, &setup, seed_init(&m1, &m2, &setup), &cfg).unwrap();
    // one iteration reaches the answer, the next confirms it
    assert!(rep.iterations <= 3, "{} iterations", rep.iterations);
}

#[test]
fn deterministic_problem_has_no_fluctuation() {
    let (m1, m2) = (scalar(0.5, 1.0), scalar(0.5, 1.0));
    let m1 = AffineModule::new(m1.a, DMatrix::zeros(1, 1), m1.c);
    let m2 = AffineModule::new(m2.a, DMatrix::zeros(1, 1), m2.c);
    let setup = NispSetup::with_level(1, 1, 2, 2, RuleKind::Tensor).unwrap();
    let init = deterministic_init(&m1, &m2, &setup, &BgsConfig::default()).unwrap();
    let std = standard_nisp(&m1, &m2, &setup, init.clone(), &BgsConfig::stochastic()).unwrap();
    let (c1, _) = std.coefficients().unwrap();
    assert!(c1.data.columns(1, c1.terms() - 1).amax() <= 1e-10);
    let det = bgs_solve(&m1, &m2, &[0.0], &[0.0], None, &BgsConfig::stochastic()).unwrap();
    assert!((c1.data[(0, 0)] - det.u1[0]).abs() < 1e-7);

    let red = reduced_nisp(&m1, &m2, &setup, init, &BgsConfig::stochastic(), &ReducedConfig::default()).unwrap();
    assert!(red.converged);
    // only the module's own parameter varies, and the output ignores it
    assert!(red.diagnostics.iter().all(|d| d.d == 1 && d.p_tilde == 0));
    let (r1, _) = red.coefficients().unwrap();
    // the start is already within the reduced loop's floor
    assert!((r1.data[(0, 0)] - det.u1[0]).abs() < 1e-6);
}

fn synthetic_reports() -> (Problem, PropagationReport, PropagationReport) {
    let problem = Problem::synthetic(2, 4).unwrap();
    let (m1, m2) = problem.modules();
    let setup = NispSetup::with_level(2, 2, 2, 2, RuleKind::Smolyak).unwrap();
    let init = deterministic_init(m1, m2, &setup, &BgsConfig::default()).unwrap();
    let std = standard_nisp(m1, m2, &setup, init.clone(), &BgsConfig::stochastic()).unwrap();
    let red = reduced_nisp(m1, m2, &setup, init, &BgsConfig::stochastic(), &ReducedConfig::default()).unwrap();
    (problem, std, red)
}

#[test]
fn reduced_matches_standard_on_synthetic_problem() {
    let (problem, std, red) = synthetic_reports();
    let (m1, m2) = problem.modules();
    let g = [m1.gramian(), m2.gramian()];
    let (a1, a2) = std.coefficients().unwrap();
    let (b1, b2) = red.coefficients().unwrap();
    assert_eq!(relative_error([&a1, &a2], [&a1, &a2], g).unwrap(), 0.0);
    let e = relative_error([&b1, &b2], [&a1, &a2], g).unwrap();
    assert!(e < 1e-3, "relative error {e}");
    assert!(red.total_calls() <= std.total_calls());
    assert_eq!(red.method, Method::Reduced);
    let calls: usize = red.diagnostics.iter().map(|d| d.q_tilde).sum();
    assert_eq!(calls, red.total_calls());

    let dec = error_decomposition(&red, [&a1, &a2], g).unwrap();
    assert_abs_diff_eq!(dec.total, e, epsilon = 1e-15);
    assert!(!dec.components.is_empty());
}

#[test]
fn report_round_trips_through_json() {
    let (_, std, red) = synthetic_reports();
    for rep in [std, red] {
        let text = serde_json::to_string(&rep).unwrap();
        let back: PropagationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rep);
        let mut csv = Vec::new();
        rep.write_diagnostics_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), rep.diagnostics.len() + 1);
    }
}

#[test]
fn relative_error_pads_lower_order() {
    let b2 = TotalDegreeBasis::new(2, 2).unwrap();
    let b1 = TotalDegreeBasis::new(2, 1).unwrap();
    let r = CoeffMatrix::new(DMatrix::from_row_slice(1, 6, &[1.0, 0.5, 0.0, 0.0, 0.0, 0.1]), &b2).unwrap();
    let u = CoeffMatrix::new(DMatrix::from_row_slice(1, 3, &[1.0, 0.5, 0.0]), &b1).unwrap();
    let g = Gramian::identity(1);
    let e = relative_error([&u, &u], [&r, &r], [&g, &g]).unwrap();
    assert_abs_diff_eq!(e, 0.1 / (1.0f64 + 0.25 + 0.01).sqrt(), epsilon = 1e-14);
}

#[test]
fn setup_validation() {
    assert!(NispSetup::with_level(2, 2, 3, 2, RuleKind::Smolyak).is_err());
    let problem = Problem::synthetic(2, 1).unwrap();
    let (m1, m2) = problem.modules();
    let setup = NispSetup::with_level(3, 3, 1, 1, RuleKind::Smolyak).unwrap();
    let init = seed_init(m1, m2, &setup);
    assert!(standard_nisp(m1, m2, &setup, init, &BgsConfig::stochastic()).is_err());
    assert!(ReducedConfig {
        eps_dim: [0.0, 0.1],
        ..ReducedConfig::default()
    }
    .validate()
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn relaxation_one_is_plain_gauss_seidel(a in -0.8f64..0.8, b in -0.8f64..0.8, c in -2.0f64..2.0) {
        let (m1, m2) = (scalar(a, c), scalar(b, 1.0));
        let cfg = BgsConfig { relaxation: 1.0, tol: 1e-12, max_iters: 500 };
        let sol = bgs_solve(&m1, &m2, &[], &[], None, &cfg).unwrap();
        // closed form of u1 = a u2 + c, u2 = b u1 + 1
        let u1 = (a + c) / (1.0 - a * b);
        prop_assert!((sol.u1[0] - u1).abs() <= 1e-9 * (1.0 + u1.abs()));
        let (mut x1, mut x2) = (0.0f64, 0.0f64);
        for _ in 0..sol.iterations {
            x1 = a * x2 + c;
            x2 = b * x1 + 1.0;
        }
        prop_assert_eq!(sol.u1[0], x1);
        prop_assert_eq!(sol.u2[0], x2);
    }
}
