use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use reduced_nisp::basis::{
    binomial, gauss_legendre, golub_welsch, max_monomial_error, quadrature, smolyak_quadrature, tensor_quadrature,
    total_degree_indices, uniform_moment, Recurrence, RuleKind, TotalDegreeBasis,
};

/// Gauss-Legendre rule by brute-force symmetric eigen-decomposition of the
/// Jacobi matrix, normalized to unit mass.
fn jacobi_oracle(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

#[test]
fn gauss_legendre_small_rules() {
    let r1 = gauss_legendre(1).unwrap();
    assert_abs_diff_eq!(r1.nodes[0], 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(r1.weights[0], 1.0, epsilon = 1e-15);

    let r2 = gauss_legendre(2).unwrap();
    let x = 1.0 / 3f64.sqrt();
    assert_abs_diff_eq!(r2.nodes[0], -x, epsilon = 1e-14);
    assert_abs_diff_eq!(r2.nodes[1], x, epsilon = 1e-14);
    assert_abs_diff_eq!(r2.weights[0], 0.5, epsilon = 1e-14);

    let r3 = gauss_legendre(3).unwrap();
    let x = (3.0f64 / 5.0).sqrt();
    for (got, want) in r3.nodes.iter().zip([-x, 0.0, x]) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
    }
    for (got, want) in r3.weights.iter().zip([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0]) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
    }
}

#[test]
fn golub_welsch_matches_jacobi_oracle() {
    for n in [2, 5, 9, 14] {
        let rule = golub_welsch(&Recurrence::legendre(n), n).unwrap();
        let (nodes, weights) = jacobi_oracle(n);
        for k in 0..n {
            assert_abs_diff_eq!(rule.nodes[k], nodes[k], epsilon = 1e-12);
            assert_abs_diff_eq!(rule.weights[k], weights[k], epsilon = 1e-12);
        }
    }
}

#[test]
fn basis_counts_and_ordering() {
    assert_eq!(total_degree_indices(6, 4).unwrap().len(), 210);
    let zero = total_degree_indices(5, 0).unwrap();
    assert_eq!(zero.len(), 1);
    assert_eq!(zero[0].0, vec![0; 5]);
    let idx = total_degree_indices(2, 1).unwrap();
    assert_eq!(idx.len(), 3);
    assert_eq!(idx[0].0, vec![0, 0]);
    for s in 1..=10 {
        for p in 0..=8 {
            let idx = total_degree_indices(s, p).unwrap();
            assert_eq!(Some(idx.len()), binomial(p + s, s), "s {s} p {p}");
            assert!(idx.windows(2).all(|w| w[0].degree() <= w[1].degree()));
        }
    }
}

#[test]
fn basis_values() {
    let b1 = TotalDegreeBasis::new(1, 1).unwrap();
    let v = b1.eval(&[1.0]).unwrap();
    assert_abs_diff_eq!(v[0], 1.0);
    assert_abs_diff_eq!(v[1], 3f64.sqrt(), epsilon = 1e-14);

    let b2 = TotalDegreeBasis::new(2, 2).unwrap();
    let k = b2.indices.iter().position(|m| m.0 == vec![1, 1]).unwrap();
    assert_abs_diff_eq!(b2.eval(&[1.0, 1.0]).unwrap()[k], 3.0, epsilon = 1e-13);
    assert!(b2.eval(&[1.0]).is_err());
}

#[test]
fn tensor_and_smolyak_sizes() {
    let t = tensor_quadrature(2, 1).unwrap();
    assert_eq!(t.len(), 4);
    assert!(t.weights.iter().all(|w| (w - 0.25).abs() < 1e-15));
    assert_eq!(tensor_quadrature(1, 0).unwrap().len(), 1);
    assert_eq!(tensor_quadrature(3, 2).unwrap().len(), 27);

    let g = gauss_legendre(5).unwrap();
    let s1 = smolyak_quadrature(1, 4).unwrap();
    assert_eq!(s1.len(), 5);
    for k in 0..5 {
        assert_abs_diff_eq!(s1.nodes[(0, k)], g.nodes[k], epsilon = 1e-14);
        assert_abs_diff_eq!(s1.weights[k], g.weights[k], epsilon = 1e-14);
    }

    let counts: Vec<usize> = (1..=4).map(|q| smolyak_quadrature(6, q).unwrap().len()).collect();
    assert_eq!(counts, vec![13, 85, 389, 1433]);
    assert!(smolyak_quadrature(6, 2).unwrap().len() < 729);
    assert!(smolyak_quadrature(6, 2).unwrap().weights.iter().any(|&w| w < 0.0));
}

#[test]
fn quadrature_csv_round_trip() {
    let rule = smolyak_quadrature(3, 2).unwrap();
    let mut buf = Vec::new();
    rule.write_csv(&mut buf).unwrap();
    let back = reduced_nisp::basis::QuadratureRule::read_csv(buf.as_slice(), 2, RuleKind::Smolyak).unwrap();
    assert_eq!(back.len(), rule.len());
    assert!((&back.nodes - &rule.nodes).amax() < 1e-15);
}

#[test]
fn uniform_moments() {
    assert_eq!(uniform_moment(&[0, 0]), 1.0);
    assert_eq!(uniform_moment(&[1, 2]), 0.0);
    assert_abs_diff_eq!(uniform_moment(&[2, 4]), 1.0 / 15.0, epsilon = 1e-15);
}

proptest! {
    #[test]
    fn rules_are_normalized_and_exact(s in 1usize..5, q in 0usize..4, smolyak in any::<bool>()) {
        let kind = if smolyak { RuleKind::Smolyak } else { RuleKind::Tensor };
        let rule = quadrature(kind, s, q).unwrap();
        let total: f64 = rule.weights.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(rule.nodes.iter().all(|x| x.abs() <= 1.0));
        prop_assert!(max_monomial_error(&rule, 2 * q + 1).unwrap() <= 1e-12);
    }

    #[test]
    fn univariate_rules_sorted_symmetric(n in 1usize..30) {
        let r = gauss_legendre(n).unwrap();
        prop_assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
        for k in 0..n {
            prop_assert!((r.nodes[k] + r.nodes[n - 1 - k]).abs() <= 1e-13);
        }
    }

    #[test]
    fn discrete_orthonormality(s in 1usize..4, p in 0usize..4) {
        let basis = TotalDegreeBasis::new(s, p).unwrap();
        let rule = tensor_quadrature(s, p).unwrap();
        let psi = basis.eval_matrix(&rule);
        let mut pw = psi.clone();
        for (j, mut c) in pw.column_iter_mut().enumerate() {
            c *= rule.weights[j];
        }
        let gram = pw * psi.transpose();
        prop_assert!((gram - DMatrix::identity(basis.len(), basis.len())).amax() <= 1e-10);
    }

    #[test]
    fn first_basis_function_is_one(xi in proptest::collection::vec(-1.0f64..1.0, 3)) {
        let basis = TotalDegreeBasis::new(3, 3).unwrap();
        prop_assert_eq!(basis.eval(&xi).unwrap()[0], 1.0);
    }
}
