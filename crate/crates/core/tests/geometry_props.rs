mod common;

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use plateau_core::hypgeo::{check_identities, curvature_frame, GraphJet};
use plateau_core::linalg::Mat;
use plateau_core::symfunc::{f_eval, f_matrix_derivative, in_garding_cone};
use plateau_core::voper::{g_value, VJet};

use common::{random_convex_graph_jet, random_rotation, random_symmetric};

fn to_na(m: &Mat) -> DMatrix<f64> {
    let n = m.dim();
    DMatrix::from_fn(n, n, |i, j| m[(i, j)])
}

/// Euclidean principal curvatures of the graph for the upward normal, as the
/// eigenvalues of `g⁻¹ h` with `g = I + Du Duᵀ`, `h = D²u / w`.
fn euclidean_curvatures(jet: &GraphJet) -> Vec<f64> {
    let n = jet.dim();
    let du = nalgebra::DVector::from_column_slice(&jet.du);
    let g = DMatrix::identity(n, n) + &du * du.transpose();
    let h = to_na(&jet.d2u) / jet.w();
    let l = g.cholesky().expect("metric is positive definite").l();
    let li = l.try_inverse().unwrap();
    let s = &li * h * li.transpose();
    let mut v: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn random_cone_point<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<f64> {
    loop {
        let l: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..2.0)).collect();
        if in_garding_cone(&l, k).unwrap() {
            return l;
        }
    }
}

#[test]
fn curvature_relation_on_random_convex_jets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = 2 + i % 2;
        let jet = random_convex_graph_jet(&mut rng, n);
        let frame = curvature_frame(&jet).unwrap();
        let euc = euclidean_curvatures(&jet);
        let mut kappa = frame.kappa.to_vec();
        kappa.sort_by(f64::total_cmp);
        for (k, e) in kappa.iter().zip(&euc) {
            worst = worst.max((k - (jet.u * e + 1.0 / jet.w())).abs());
        }
        // pairing inside the frame agrees eigenvector-wise
        for (k, e) in frame.kappa.iter().zip(frame.kappa_euc.iter()) {
            worst = worst.max((k - (jet.u * e + frame.nu_vert)).abs());
        }
    }
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn identities_hold_on_random_convex_jets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..200 {
        let jet = random_convex_graph_jet(&mut rng, 2 + i % 3);
        let frame = curvature_frame(&jet).unwrap();
        let r = check_identities(&jet, &frame);
        assert!(r.max() < 1e-10, "{r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), n in 2usize..6, k_off in 0usize..5) {
        let k = 1 + k_off % n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = random_cone_point(&mut rng, n, k);
        let e = f_eval(&l, k).unwrap();
        let tau = 1e-6;
        for i in 0..n {
            let mut p = l.clone();
            p[i] += tau;
            let mut m = l.clone();
            m[i] -= tau;
            let fd = (f_eval(&p, k).unwrap().f - f_eval(&m, k).unwrap().f) / (2.0 * tau);
            prop_assert!((fd - e.grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn f_is_concave_and_symmetric_on_the_cone(seed in any::<u64>(), n in 2usize..6, k_off in 0usize..5) {
        let k = 1 + k_off % n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_cone_point(&mut rng, n, k);
        let b = random_cone_point(&mut rng, n, k);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let f = |l: &[f64]| f_eval(l, k).unwrap().f;
        prop_assert!(f(&mid) >= 0.5 * (f(&a) + f(&b)) - 1e-12);
        let mut p = a.clone();
        p.reverse();
        p.rotate_left(seed as usize % n);
        prop_assert!((f(&p) - f(&a)).abs() <= 1e-12 * (1.0 + f(&a)));
    }

    #[test]
    fn matrix_derivative_is_orthogonally_equivariant(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1 + (seed as usize) % n;
        let a = loop {
            let m = random_symmetric(&mut rng, n, 1.0).add(&Mat::identity(n).scale(1.2));
            let ev = plateau_core::linalg::symmetric_eigen(&m).values;
            if in_garding_cone(&ev, k).unwrap() {
                break m;
            }
        };
        let q = random_rotation(&mut rng, n);
        let lhs = f_matrix_derivative(&a.congruence(&q).symmetrized(), k).unwrap();
        let rhs = f_matrix_derivative(&a, k).unwrap().congruence(&q);
        prop_assert!(lhs.sub(&rhs).max_abs() < 1e-10);
    }

    #[test]
    fn curvatures_are_rotation_invariant(seed in any::<u64>(), n in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jet = random_convex_graph_jet(&mut rng, n);
        let q = random_rotation(&mut rng, n);
        // u∘Qᵀ at Qx: gradient Q Du, Hessian Q D²u Qᵀ
        let rotated = GraphJet::new(jet.u, q.matvec(&jet.du), jet.d2u.congruence(&q).symmetrized()).unwrap();
        let f0 = curvature_frame(&jet).unwrap();
        let f1 = curvature_frame(&rotated).unwrap();
        prop_assert!(f1.a.sub(&f0.a.congruence(&q)).max_abs() < 1e-10);
        for (a, b) in f0.kappa.iter().zip(f1.kappa.iter()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn curvatures_are_dilation_invariant(seed in any::<u64>(), s in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jet = random_convex_graph_jet(&mut rng, 2 + (seed as usize) % 2);
        let scaled = GraphJet::new(s * jet.u, jet.du.clone(), jet.d2u.scale(1.0 / s)).unwrap();
        let f0 = curvature_frame(&jet).unwrap();
        let f1 = curvature_frame(&scaled).unwrap();
        for (a, b) in f0.kappa.iter().zip(f1.kappa.iter()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn v_form_agrees_with_u_form(seed in any::<u64>(), n in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jet = random_convex_graph_jet(&mut rng, n);
        let k = 1 + (seed as usize) % n;
        let frame = curvature_frame(&jet).unwrap();
        let f_u = f_eval(&frame.kappa, k).unwrap().f;
        let (g, _) = g_value(&VJet::from_graph(&jet), k).unwrap();
        prop_assert!((f_u - g).abs() <= 1e-12 * (1.0 + g.abs()));
    }
}

#[test]
fn flat_gradient_curvature_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d2u = random_symmetric(&mut rng, 3, 1.0);
    let jet = GraphJet::new(0.7, vec![0.0; 3], d2u.clone()).unwrap();
    let a = curvature_frame(&jet).unwrap().a;
    let expect = Mat::identity(3).add(&d2u.scale(0.7));
    for i in 0..3 {
        for j in 0..3 {
            assert_abs_diff_eq!(a[(i, j)], expect[(i, j)], epsilon = 1e-15);
        }
    }
}
