use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reduced_nisp::basis::{binomial, gauss_legendre, smolyak_quadrature, tensor_quadrature, TotalDegreeBasis};
use reduced_nisp::gpc::{project_with, Gramian};
use reduced_nisp::reduction::{
    build_hankel, dimension_reduce, lift_to_global, monomial_indices, monomial_matrix, optimal_quadrature,
    reduced_basis, reduced_project, select_dimension, select_order, stack_inputs, theta_at_nodes,
    ReductionTolerances, StackedInput,
};

fn random_stack(rng: &mut ChaCha8Rng, sizes: [usize; 3], terms: usize, decay: f64) -> StackedInput {
    let r: usize = sizes.iter().sum();
    let coeff = DMatrix::from_fn(r, terms, |_, k| rng.gen_range(-1.0..1.0) * decay.powi(k as i32));
    let gram = |rng: &mut ChaCha8Rng, n: usize| {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..0.5));
        Gramian::dense(&a * a.transpose() + DMatrix::identity(n, n)).unwrap()
    };
    StackedInput {
        coeff,
        gramians: [gram(rng, sizes[0]), gram(rng, sizes[1]), Gramian::identity(sizes[2])],
    }
}

fn weighted_gram(v: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut vw = v.clone();
    for (j, mut c) in vw.column_iter_mut().enumerate() {
        c *= w[j];
    }
    vw * v.transpose()
}

#[test]
fn stacking_layout() {
    let a = DMatrix::from_element(2, 3, 1.0);
    let b = DMatrix::from_element(1, 3, 2.0);
    let c = DMatrix::from_element(1, 3, 3.0);
    let y = stack_inputs(&a, &b, &c, &Gramian::identity(2), &Gramian::identity(1)).unwrap();
    assert_eq!(y.block_bounds(), (2, 3, 4));
    assert_eq!(y.block_sizes(), [2, 1, 1]);
    assert_eq!(y.coeff.row(2)[0], 2.0);
    assert_abs_diff_eq!(y.norm(&DMatrix::identity(4, 4)), 2.0);
    assert!(stack_inputs(&a, &b, &DMatrix::zeros(1, 2), &Gramian::identity(2), &Gramian::identity(1)).is_err());
}

#[test]
fn dimension_rule_examples() {
    assert_eq!(select_dimension(&[2.0, 1.0, 0.0, 0.0], 0.6), 1);
    assert_eq!(select_dimension(&[2.0, 1.0, 0.0, 0.0], 0.4), 2);
}

#[test]
fn rank_one_fluctuation_weighted() {
    let basis = TotalDegreeBasis::new(2, 2).unwrap();
    let mut coeff = DMatrix::zeros(3, basis.len());
    let dir = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    coeff.set_column(0, &DVector::from_element(3, 1.0));
    coeff.set_column(2, &(&dir * 0.7));
    coeff.set_column(4, &(&dir * -0.2));
    let g = Gramian::diagonal(DVector::from_vec(vec![2.0])).unwrap();
    let y = StackedInput {
        coeff: coeff.clone(),
        gramians: [g.clone(), Gramian::identity(1), Gramian::identity(1)],
    };
    for eps in [0.9, 1e-3] {
        let kl = dimension_reduce(&y, eps, &ReductionTolerances::default()).unwrap();
        assert_eq!(kl.d, 1);
        let full = Gramian::block_diag(&[&g, &Gramian::identity(1), &Gramian::identity(1)]).unwrap();
        let sigma = reduced_nisp::gpc::weighted_frobenius(&coeff.columns(1, basis.len() - 1).into_owned(), &full);
        assert_abs_diff_eq!(kl.singular_values[0], sigma, epsilon = 1e-12);
        assert!((kl.reconstruct() - &coeff).amax() < 1e-12);
    }
}

#[test]
fn theta_and_input_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let basis = TotalDegreeBasis::new(2, 2).unwrap();
    let rule = tensor_quadrature(2, 2).unwrap();
    let psi = basis.eval_matrix(&rule);
    let y = random_stack(&mut rng, [2, 2, 2], basis.len(), 1.0);
    let kl = dimension_reduce(&y, 1e-3, &ReductionTolerances::default()).unwrap();
    assert_eq!(kl.input_at(&vec![0.0; kl.d]), kl.mean);
    let mut e1 = vec![0.0; kl.d];
    e1[0] = 1.0;
    assert!((kl.input_at(&e1) - &kl.mean - kl.map.column(0)).amax() < 1e-14);

    let theta = theta_at_nodes(&kl, &psi);
    let stats = weighted_gram(&theta, &rule.weights);
    assert!((stats - DMatrix::identity(kl.d, kl.d)).amax() < 1e-8);
    let means = &theta * DVector::from_column_slice(&rule.weights);
    assert!(means.amax() < 1e-10);
    // reconstruction at the nodes equals the truncated surrogate
    let at_nodes = DMatrix::from_columns(
        &(0..rule.len()).map(|j| kl.input_at(theta.column(j).as_slice())).collect::<Vec<_>>(),
    );
    assert!((at_nodes - kl.reconstruct() * &psi).amax() < 1e-10);
    let (a, b, c) = kl.split(&kl.mean);
    assert_eq!((a.len(), b.len(), c.len()), (2, 2, 2));

    let single = DMatrix::from_row_slice(1, basis.len(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    let th = &single * &psi;
    assert!((th.row(0) - psi.row(1)).amax() == 0.0);
}

#[test]
fn hankel_and_basis_examples() {
    let g = gauss_legendre(5).unwrap();
    let theta = DMatrix::from_row_slice(1, 5, &g.nodes);
    let h = build_hankel(&theta, &g.weights, 1).unwrap();
    assert!((&h - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0 / 3.0])).amax() < 1e-10);
    let rb = reduced_basis(&h, &theta, 1, 1e-12).unwrap();
    let at = rb.eval(&DMatrix::from_row_slice(1, 2, &[0.5, -1.0]));
    assert_abs_diff_eq!(at[(1, 0)].abs(), 0.5 * 3f64.sqrt(), epsilon = 1e-12);
    assert_abs_diff_eq!(at[(1, 1)].abs(), 3f64.sqrt(), epsilon = 1e-12);
}

#[test]
fn sparse_rule_nine_nodes() {
    let rule = tensor_quadrature(1, 8).unwrap();
    let sq = optimal_quadrature(&rule.nodes, &rule.weights, 4, 1e-10).unwrap();
    assert!(sq.active.len() <= 5);
    let m = monomial_matrix(&rule.nodes, &monomial_indices(1, 4).unwrap());
    let full = &m * DVector::from_column_slice(&rule.weights);
    let sparse = DMatrix::from_columns(&sq.active.iter().map(|&j| m.column(j).into_owned()).collect::<Vec<_>>())
        * DVector::from_column_slice(&sq.weights);
    assert!((full - sparse).amax() < 1e-10);
}

#[test]
fn reduced_projection_lift_matches_global_projection() {
    // u depends on xi only through theta, polynomially of degree <= p~
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let basis = TotalDegreeBasis::new(3, 2).unwrap();
    let rule = smolyak_quadrature(3, 4).unwrap();
    let psi = basis.eval_matrix(&rule);
    let mut tc = DMatrix::from_fn(2, basis.len(), |_, _| rng.gen_range(-1.0..1.0));
    tc.column_mut(0).fill(0.0);
    // degree-1 theta in xi keeps u of xi-degree <= 2
    for k in 4..basis.len() {
        tc.column_mut(k).fill(0.0);
    }
    let theta = &tc * &psi;
    let pt = 1;
    let u = |t: &[f64]| DVector::from_vec(vec![1.0 + 2.0 * t[0] - t[1], 0.5 * t[1]]);
    let all = DMatrix::from_columns(&(0..rule.len()).map(|j| u(theta.column(j).as_slice())).collect::<Vec<_>>());
    let direct = project_with(&all, &rule.weights, &psi).unwrap();

    let h = build_hankel(&theta, &rule.weights, pt).unwrap();
    let rb = reduced_basis(&h, &theta, pt, 1e-12).unwrap();
    let sq = optimal_quadrature(&theta, &rule.weights, 2 * (pt + 1), 1e-10).unwrap();
    let active = DMatrix::from_columns(&sq.active.iter().map(|&j| all.column(j).into_owned()).collect::<Vec<_>>());
    let red = reduced_project(&active, &sq, &rb).unwrap();
    let lifted = lift_to_global(&red, &rb.node_evals, &rule.weights, &psi).unwrap();
    assert!((lifted - direct).amax() < 1e-8);

    let zero = lift_to_global(&DMatrix::zeros(2, rb.len()), &rb.node_evals, &rule.weights, &psi).unwrap();
    assert_eq!(zero.amax(), 0.0);
    assert!(reduced_project(&DMatrix::zeros(2, sq.active.len() + 1), &sq, &rb).is_err());
}

#[test]
fn order_selection_examples() {
    let g = Gramian::identity(1);
    let one = DMatrix::from_element(1, 1, 1.0);
    let zero = DMatrix::from_element(1, 1, 0.0);
    assert_eq!(select_order(1, &one, &one, &g, 1e-3, 4), 1);
    assert_eq!(select_order(1, &zero, &one, &g, 0.5, 4), 2);
    assert_eq!(select_order(1, &zero, &one, &g, 2.0, 4), 1);
}

#[test]
fn degenerate_and_invalid_inputs() {
    let y = StackedInput {
        coeff: DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]),
        gramians: [Gramian::identity(1), Gramian::identity(1), Gramian::identity(0)],
    };
    let kl = dimension_reduce(&y, 0.1, &ReductionTolerances::default()).unwrap();
    assert!(kl.degenerate);
    assert_eq!(kl.d, 1);
    assert!(dimension_reduce(&y, 0.0, &ReductionTolerances::default()).is_err());
    assert!(dimension_reduce(&y, 1.0, &ReductionTolerances::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn truncation_identity_and_ratio(seed in any::<u64>(), eps in prop::sample::select(vec![1e-1, 1e-2, 1e-4])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = TotalDegreeBasis::new(2, 3).unwrap();
        let rule = tensor_quadrature(2, 3).unwrap();
        let psi = basis.eval_matrix(&rule);
        let y = random_stack(&mut rng, [3, 2, 2], basis.len(), 0.6);
        let kl = dimension_reduce(&y, eps, &ReductionTolerances::default()).unwrap();
        let g = Gramian::block_diag(&[&y.gramians[0], &y.gramians[1], &y.gramians[2]]).unwrap();
        let diff = (&y.coeff - kl.reconstruct()) * &psi;
        let err2: f64 = (0..rule.len()).map(|j| rule.weights[j] * g.norm(&diff.column(j).into_owned()).powi(2)).sum();
        let tail2: f64 = kl.singular_values.iter().skip(kl.d).map(|s| s * s).sum();
        prop_assert!((err2 - tail2).abs() <= 1e-8);
        prop_assert!(kl.tail_ratio() <= eps + 1e-8);
        prop_assert!(kl.d == 1 || select_dimension(&kl.singular_values, eps) == kl.d);
    }

    #[test]
    fn dimension_rule_is_minimal(sigma in proptest::collection::vec(0.0f64..10.0, 1..12), eps in 1e-6f64..0.99) {
        let mut s = sigma.clone();
        s.sort_by(|a, b| b.total_cmp(a));
        let d = select_dimension(&s, eps);
        let total: f64 = s.iter().map(|x| x * x).sum();
        let tail = |k: usize| (s.iter().skip(k).map(|x| x * x).sum::<f64>() / total).sqrt();
        if total > 0.0 {
            prop_assert!(tail(d) <= eps + 1e-12);
            if d > 1 {
                prop_assert!(tail(d - 1) > eps);
            }
        }
    }

    #[test]
    fn reduced_basis_discrete_orthogonality(seed in any::<u64>(), d in 1usize..4, order in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = TotalDegreeBasis::new(3, 2).unwrap();
        let rule = smolyak_quadrature(3, 2).unwrap();
        let mut tc = DMatrix::from_fn(d, basis.len(), |_, _| rng.gen_range(-1.0..1.0));
        tc.column_mut(0).fill(0.0);
        let theta = tc * basis.eval_matrix(&rule);
        let rb = reduced_basis(&build_hankel(&theta, &rule.weights, order).unwrap(), &theta, order, 1e-12).unwrap();
        let gram = weighted_gram(&rb.node_evals, &rule.weights);
        let target = DMatrix::from_diagonal(&DVector::from_vec(rb.sign.clone()));
        prop_assert!((gram - target).amax() <= 1e-8);
    }

    #[test]
    fn sparse_quadrature_matches_moments(seed in any::<u64>(), d in 1usize..4, pt in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = TotalDegreeBasis::new(3, 2).unwrap();
        let rule = smolyak_quadrature(3, 4).unwrap();
        let mut tc = DMatrix::from_fn(d, basis.len(), |_, _| rng.gen_range(-1.0..1.0));
        tc.column_mut(0).fill(0.0);
        let theta = tc * basis.eval_matrix(&rule);
        let degree = 2 * (pt + 1);
        let sq = optimal_quadrature(&theta, &rule.weights, degree, 1e-10).unwrap();
        prop_assert!(sq.active.len() <= sq.rank);
        prop_assert!(sq.active.len() <= binomial(degree + d, d).unwrap());
        prop_assert!(sq.active.windows(2).all(|w| w[0] < w[1]));
        let m = monomial_matrix(&theta, &monomial_indices(d, degree).unwrap());
        let full = &m * DVector::from_column_slice(&rule.weights);
        let scale = full.amax().max(1.0);
        let mut sparse = DVector::zeros(m.nrows());
        for (k, &j) in sq.active.iter().enumerate() {
            sparse += m.column(j) * sq.weights[k];
        }
        prop_assert!((full - sparse).amax() <= 1e-8 * scale);
    }
}
