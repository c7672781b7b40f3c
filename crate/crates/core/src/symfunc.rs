//! Elementary symmetric functions, Gårding cones and the curvature function
//! `f = σ_k^{1/k}` together with its first derivatives.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, Result};
use crate::linalg::{symmetric_eigen, Mat, SymEigen};

/// Relative asymmetry above which a matrix argument is rejected.
const SYMMETRY_TOL: f64 = 1e-10;

/// An ordered tuple of principal curvatures (or any spectrum fed to `σ_k`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenTuple(Vec<f64>);

impl EigenTuple {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            bail_arg!("eigen tuple needs at least two entries, got {}", values.len());
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            bail_arg!("eigen tuple entry {i} is not finite");
        }
        Ok(EigenTuple(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for EigenTuple {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// All elementary symmetric functions `e_0 = 1, e_1, …, e_n` via the
/// recurrence `e_j(λ_1..λ_m) = e_j(λ_1..λ_{m-1}) + λ_m e_{j-1}(λ_1..λ_{m-1})`.
pub fn elementary_symmetric(lambda: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (m, &l) in lambda.iter().enumerate() {
        for j in (1..=m + 1).rev() {
            e[j] += l * e[j - 1];
        }
    }
    e
}

/// `σ_j(λ)` for `1 ≤ j ≤ n`.
pub fn sigma(lambda: &[f64], j: usize) -> Result<f64> {
    if j == 0 || j > lambda.len() {
        bail_arg!("order {j} outside 1..={}", lambda.len());
    }
    Ok(elementary_symmetric(lambda)[j])
}

/// `σ_j(λ | i)`: the symmetric function of λ with entry `i` removed.
/// `j = 0` gives 1.
pub fn sigma_excluding(lambda: &[f64], i: usize, j: usize) -> f64 {
    let n = lambda.len();
    let mut e = vec![0.0; n];
    e[0] = 1.0;
    let mut m = 0;
    for (idx, &l) in lambda.iter().enumerate() {
        if idx == i {
            continue;
        }
        m += 1;
        for jj in (1..=m).rev() {
            e[jj] += l * e[jj - 1];
        }
    }
    if j < e.len() {
        e[j]
    } else {
        0.0
    }
}

fn check_order(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        bail_arg!("curvature order k = {k} must satisfy 1 <= k <= n = {n}");
    }
    Ok(())
}

/// Membership in the Gårding cone `Γ_k = {σ_j > 0, j = 1..k}`.
pub fn in_garding_cone(lambda: &[f64], k: usize) -> Result<bool> {
    check_order(lambda.len(), k)?;
    let e = elementary_symmetric(lambda);
    Ok(e[1..=k].iter().all(|&s| s > 0.0))
}

/// `min_{j ≤ k} σ_j(λ)`; positive iff λ ∈ Γ_k.
pub fn cone_margin(lambda: &[f64], k: usize) -> f64 {
    let e = elementary_symmetric(lambda);
    e[1..=k.min(lambda.len())].iter().fold(f64::INFINITY, |m, &s| m.min(s))
}

/// Value and gradient of `f(λ) = σ_k(λ)^{1/k}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureFunctionEval {
    pub f: f64,
    pub grad: Vec<f64>,
    pub cone_ok: bool,
}

/// Evaluate `f = σ_k^{1/k}` and `f_i = ∂f/∂λ_i`.
///
/// Outside `Γ_k` the result is flagged with `cone_ok = false` rather than
/// failing; `f` is then `max(σ_k, 0)^{1/k}` and the gradient is still finite.
pub fn f_eval(lambda: &[f64], k: usize) -> Result<CurvatureFunctionEval> {
    let n = lambda.len();
    check_order(n, k)?;
    let e = elementary_symmetric(lambda);
    let cone_ok = e[1..=k].iter().all(|&s| s > 0.0);
    let sk = e[k];
    let kf = k as f64;
    let f = if sk > 0.0 { sk.powf(1.0 / kf) } else { 0.0 };
    let grad = if k == 1 {
        vec![1.0; n]
    } else if sk > 0.0 {
        // f_i = (1/k) σ_k^{1/k - 1} σ_{k-1}(λ|i) = f σ_{k-1}(λ|i) / (k σ_k)
        let c = f / (kf * sk);
        (0..n).map(|i| c * sigma_excluding(lambda, i, k - 1)).collect()
    } else {
        vec![0.0; n]
    };
    Ok(CurvatureFunctionEval { f, grad, cone_ok })
}

/// `F(A) = f(λ(A))` with its matrix derivative `F^{ij} = ∂F/∂a_ij`.
#[derive(Clone, Debug)]
pub struct MatrixFunctionEval {
    pub f: f64,
    pub fij: Mat,
    pub eigen: SymEigen,
    pub grad: Vec<f64>,
    pub cone_ok: bool,
}

/// Evaluate `F` and `F^{ij}` for a symmetric matrix through its spectral
/// decomposition `A = Q Λ Qᵀ`, giving `F^{ij} = Q diag(f_1..f_n) Qᵀ`.
///
/// First derivatives of a spectral function need no divided differences:
/// `f_i = f_j` whenever `λ_i = λ_j`, so the formula is continuous across
/// eigenvalue crossings.
pub fn matrix_function(a: &Mat, k: usize) -> Result<MatrixFunctionEval> {
    let n = a.dim();
    check_order(n, k)?;
    if !a.is_finite() {
        bail_arg!("matrix has non-finite entries");
    }
    if a.asymmetry() > SYMMETRY_TOL * (1.0 + a.max_abs()) {
        bail_arg!("matrix is not symmetric (asymmetry {:e})", a.asymmetry());
    }
    let eigen = symmetric_eigen(a);
    let eval = f_eval(&eigen.values, k)?;
    let fij = eigen.reconstruct_with(&eval.grad);
    Ok(MatrixFunctionEval { f: eval.f, fij, eigen, grad: eval.grad, cone_ok: eval.cone_ok })
}

/// `F^{ij}` alone.
pub fn f_matrix_derivative(a: &Mat, k: usize) -> Result<Mat> {
    Ok(matrix_function(a, k)?.fij)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Brute-force σ_j over all index subsets, independent of the recurrence.
    fn sigma_brute(lambda: &[f64], j: usize) -> f64 {
        let n = lambda.len();
        (0u32..(1 << n))
            .filter(|m| m.count_ones() as usize == j)
            .map(|m| (0..n).filter(|i| m & (1 << i) != 0).map(|i| lambda[i]).product::<f64>())
            .sum()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(&[1.0, 1.0, 1.0], 2).unwrap(), 3.0);
        assert_eq!(sigma(&[0.5, 0.5], 2).unwrap(), 0.25);
        assert_eq!(sigma_brute(&[2.0, 3.0, 5.0], 2), 31.0);
        assert_eq!(sigma(&[2.0, 3.0, 5.0], 2).unwrap(), 31.0);
    }

    #[test]
    fn sigma_rejects_bad_order() {
        assert!(sigma(&[1.0, 2.0], 0).is_err());
        assert!(sigma(&[1.0, 2.0], 3).is_err());
        assert!(in_garding_cone(&[1.0, 2.0], 3).is_err());
        assert!(f_eval(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn sigma_matches_brute_force() {
        let lam = [0.3, -1.7, 2.2, 0.9, -0.4];
        for j in 1..=5 {
            assert!((sigma(&lam, j).unwrap() - sigma_brute(&lam, j)).abs() < 1e-12);
        }
        for i in 0..5 {
            let mut rest: Vec<f64> = lam.to_vec();
            rest.remove(i);
            for j in 1..=4 {
                assert!((sigma_excluding(&lam, i, j) - sigma_brute(&rest, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cone_examples() {
        assert!(in_garding_cone(&[1.0, 1.0, 1.0], 2).unwrap());
        assert!(!in_garding_cone(&[-1.0, 0.1, 0.1], 1).unwrap());
        // σ_1 = 5, σ_2 = -3 - 3 + 9 = 3
        assert!(in_garding_cone(&[-1.0, 3.0, 3.0], 2).unwrap());
        assert!(!in_garding_cone(&[-1.0, 3.0, 3.0], 3).unwrap());
    }

    #[test]
    fn f_eval_examples() {
        let e = f_eval(&[1.0, 1.0], 2).unwrap();
        assert_eq!(e.f, 1.0);
        assert!(e.cone_ok);
        let e = f_eval(&[1.0, 1.0, 1.0], 2).unwrap();
        assert!((e.f - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_on_cone_boundary() {
        let e = f_eval(&[0.0, 1.0, 1.0], 3).unwrap();
        assert_eq!(e.f, 0.0);
        assert!(!e.cone_ok);
        assert!(e.grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn matrix_function_rejects_asymmetric_input() {
        let a = Mat::from_rows(&[&[1.0, 0.5], &[0.0, 1.0]]);
        assert!(f_matrix_derivative(&a, 2).is_err());
    }

    #[test]
    fn matrix_derivative_at_identity() {
        let fij = f_matrix_derivative(&Mat::identity(2), 2).unwrap();
        assert!((fij[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((fij[(1, 1)] - 0.5).abs() < 1e-15);
        assert!(fij[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn matrix_derivative_of_diagonal_is_diagonal() {
        let a = Mat::diag(&[0.5, 1.5, 2.0]);
        let fij = f_matrix_derivative(&a, 2).unwrap();
        let grad = f_eval(&[0.5, 1.5, 2.0], 2).unwrap().grad;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { grad[i] } else { 0.0 };
                assert!((fij[(i, j)] - expect).abs() < 1e-14);
            }
        }
    }
}
