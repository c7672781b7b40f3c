//! Pointwise geometry of a vertical graph `x_{n+1} = u(x)` in the half-space
//! model: normals, the γ factorization of the induced metric, the curvature
//! matrix `a_ij` and both hyperbolic and Euclidean principal curvatures.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, bail_domain, Result};
use crate::linalg::{dot, min_eigenvalue, norm_sq, symmetric_eigen, Mat};
use crate::symfunc::EigenTuple;

const SYMMETRY_TOL: f64 = 1e-14;

/// Second-order jet `(u, Du, D²u)` of the height function at a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphJet {
    pub u: f64,
    pub du: Vec<f64>,
    pub d2u: Mat,
}

impl GraphJet {
    pub fn new(u: f64, du: Vec<f64>, d2u: Mat) -> Result<Self> {
        let n = du.len();
        if n < 2 {
            bail_arg!("graph jet needs dimension n >= 2, got {n}");
        }
        if d2u.dim() != n {
            bail_arg!("hessian is {0}x{0} but gradient has {n} entries", d2u.dim());
        }
        if !u.is_finite() || du.iter().any(|x| !x.is_finite()) || !d2u.is_finite() {
            bail_arg!("graph jet has non-finite entries");
        }
        if d2u.asymmetry() > SYMMETRY_TOL * (1.0 + d2u.max_abs()) {
            bail_arg!("hessian not symmetric (asymmetry {:e})", d2u.asymmetry());
        }
        Ok(GraphJet { u, du, d2u })
    }

    pub fn dim(&self) -> usize {
        self.du.len()
    }

    /// Horosphere `u ≡ c`.
    pub fn horosphere(c: f64, n: usize) -> Self {
        GraphJet { u: c, du: alloc::vec![0.0; n], d2u: Mat::zeros(n) }
    }

    /// `w = √(1 + |Du|²)`.
    pub fn w(&self) -> f64 {
        (1.0 + norm_sq(&self.du)).sqrt()
    }
}

/// Geometric state at one point of the graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureFrame {
    pub w: f64,
    /// Upward Euclidean unit normal `(−Du/w, 1/w)`.
    pub nu: Vec<f64>,
    /// `ν^{n+1} = 1/w`.
    pub nu_vert: f64,
    pub gamma_up: Mat,
    pub gamma_down: Mat,
    /// Curvature matrix `a_ij`; its eigenvalues are the hyperbolic curvatures.
    pub a: Mat,
    /// Hyperbolic principal curvatures, ascending.
    pub kappa: EigenTuple,
    /// Euclidean principal curvatures, entry `i` paired with `kappa[i]`
    /// through the shared principal direction.
    pub kappa_euc: EigenTuple,
    /// Column `i` is the principal direction of `kappa[i]` in γ-coordinates.
    pub directions: Mat,
}

/// `γ^{ik} = δ_ik − u_i u_k / (w(1 + w))`, the inverse square root of
/// `g̃_ij = δ_ij + u_i u_j`.
pub fn gamma_up(du: &[f64]) -> Mat {
    let w = (1.0 + norm_sq(du)).sqrt();
    let c = 1.0 / (w * (1.0 + w));
    Mat::from_fn(du.len(), |i, k| if i == k { 1.0 } else { 0.0 } - c * du[i] * du[k])
}

/// `γ_ik = δ_ik + u_i u_k / (1 + w)`, the square root of `g̃_ij`.
pub fn gamma_down(du: &[f64]) -> Mat {
    let w = (1.0 + norm_sq(du)).sqrt();
    let c = 1.0 / (1.0 + w);
    Mat::from_fn(du.len(), |i, k| if i == k { 1.0 } else { 0.0 } + c * du[i] * du[k])
}

/// Evaluate the full curvature frame of a jet.
pub fn curvature_frame(jet: &GraphJet) -> Result<CurvatureFrame> {
    if !(jet.u > 0.0) {
        bail_domain!("height u = {} is not in the open half-space", jet.u);
    }
    let n = jet.dim();
    let u = jet.u;
    let w = jet.w();
    let nu_vert = 1.0 / w;
    let mut nu: Vec<f64> = jet.du.iter().map(|&p| -p / w).collect();
    nu.push(nu_vert);

    let gu = gamma_up(&jet.du);
    let gd = gamma_down(&jet.du);

    // a_ij = (1/w)(δ_ij + u γ^{ik} u_kl γ^{lj})
    let g_hess_g = jet.d2u.congruence(&gu).symmetrized();
    let a = Mat::identity(n).add(&g_hess_g.scale(u)).scale(1.0 / w).symmetrized();
    let eig = symmetric_eigen(&a);

    // Euclidean shape operator in the same frame, solved independently and
    // paired with κ through eigenvector overlap rather than by value.
    let a_euc = g_hess_g.scale(1.0 / w);
    let eig_euc = symmetric_eigen(&a_euc);
    let pairing = match_vectors(&eig.vectors, &eig_euc.vectors);
    let kappa_euc: Vec<f64> = pairing.iter().map(|&j| eig_euc.values[j]).collect();

    Ok(CurvatureFrame {
        w,
        nu,
        nu_vert,
        gamma_up: gu,
        gamma_down: gd,
        a,
        kappa: EigenTuple::new(eig.values)?,
        kappa_euc: EigenTuple::new(kappa_euc)?,
        directions: eig.vectors,
    })
}

// For each column of `p`, the column of `q` with the largest overlap, without
// reuse. Exhaustive over permutations, which is cheap for n ≤ 4.
fn match_vectors(p: &Mat, q: &Mat) -> Vec<usize> {
    let n = p.dim();
    let overlap = Mat::from_fn(n, |i, j| dot(&p.column(i), &q.column(j)).abs());
    let mut best: Vec<usize> = (0..n).collect();
    let mut best_score = f64::NEG_INFINITY;
    let mut perm: Vec<usize> = (0..n).collect();
    permute(&mut perm, 0, &mut |perm| {
        let score: f64 = perm.iter().enumerate().map(|(i, &j)| overlap[(i, j)]).sum();
        if score > best_score {
            best_score = score;
            best.copy_from_slice(perm);
        }
    });
    best
}

fn permute(perm: &mut [usize], start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == perm.len() {
        visit(perm);
        return;
    }
    for i in start..perm.len() {
        perm.swap(start, i);
        permute(perm, start + 1, visit);
        perm.swap(start, i);
    }
}

/// Smallest eigenvalue of `δ_ij + u_i u_j + u u_ij`; the graph is strictly
/// locally convex at the point iff it is positive.
pub fn convexity_margin(jet: &GraphJet) -> f64 {
    let m = Mat::from_fn(jet.dim(), |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        d + jet.du[i] * jet.du[j] + jet.u * jet.d2u[(i, j)]
    });
    min_eigenvalue(&m.symmetrized())
}

/// `(margin > 0, margin)` with `margin` from [`convexity_margin`].
pub fn is_strictly_convex(jet: &GraphJet) -> (bool, f64) {
    let m = convexity_margin(jet);
    (m > 0.0, m)
}

/// Residuals of the first and second order graph identities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// `|g̃^{kl} u_k u_l − (1 − (ν^{n+1})²)|`
    pub metric_gradient: f64,
    /// `max |h_ij − (h̃_ij/u + ν^{n+1} g̃_ij/u²)|`
    pub second_form: f64,
    /// `max |γ^{ik} γ_kj − δ_ij|`
    pub gamma_inverse: f64,
    /// `max |γ_ik γ_kj − g̃_ij|`
    pub gamma_square: f64,
    /// `max |∇̃_ij u − h̃_ij ν^{n+1}|`
    pub hessian_height: f64,
    /// `max |∇̃_ij x_α − h̃_ij ν^α|`
    pub hessian_coordinates: f64,
    /// `max |(ν^{n+1})_i + h̃_ij g̃^{jk} u_k|`
    pub normal_gradient: f64,
    /// `max |κ_i − (u κ̃_i + ν^{n+1})|`
    pub curvature_relation: f64,
}

impl IdentityReport {
    pub fn max(&self) -> f64 {
        [
            self.metric_gradient,
            self.second_form,
            self.gamma_inverse,
            self.gamma_square,
            self.hessian_height,
            self.hessian_coordinates,
            self.normal_gradient,
            self.curvature_relation,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Evaluate both sides of each identity from the raw jet. The left sides use
/// the Euclidean metric `g̃`, its explicit inverse and Christoffel symbols;
/// the right sides use the normal and the frame.
pub fn check_identities(jet: &GraphJet, frame: &CurvatureFrame) -> IdentityReport {
    let n = jet.dim();
    let u = jet.u;
    let du = &jet.du;
    let w = frame.w;
    let nv = frame.nu_vert;
    let kd = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };

    let g = Mat::from_fn(n, |i, j| kd(i, j) + du[i] * du[j]);
    let g_inv = Mat::from_fn(n, |i, j| kd(i, j) - du[i] * du[j] / (w * w));
    let h_euc = jet.d2u.scale(1.0 / w);
    let h_hyp = Mat::from_fn(n, |i, j| (kd(i, j) + du[i] * du[j] + u * jet.d2u[(i, j)]) / (u * u * w));

    let metric_gradient = (g_inv.bilinear(du, du) - (1.0 - nv * nv)).abs();

    let second_form = h_hyp.sub(&h_euc.scale(1.0 / u).add(&g.scale(nv / (u * u)))).max_abs();

    let gamma_inverse = frame.gamma_up.matmul(&frame.gamma_down).sub(&Mat::identity(n)).max_abs();
    let gamma_square = frame.gamma_down.matmul(&frame.gamma_down).sub(&g).max_abs();

    // Christoffel symbols of the graph metric: Γ̃^k_ij = g̃^{kl} u_l u_ij.
    let ginv_du = g_inv.matvec(du);
    let mut hessian_height: f64 = 0.0;
    let mut hessian_coordinates: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let uij = jet.d2u[(i, j)];
            let cov_u = uij - dot(&ginv_du, du) * uij;
            hessian_height = hessian_height.max((cov_u - h_euc[(i, j)] * nv).abs());
            for alpha in 0..n {
                let cov_x = -ginv_du[alpha] * uij;
                hessian_coordinates =
                    hessian_coordinates.max((cov_x - h_euc[(i, j)] * frame.nu[alpha]).abs());
            }
        }
    }

    // (1/w)_i = −u_k u_ki / w³
    let mut normal_gradient: f64 = 0.0;
    for i in 0..n {
        let lhs: f64 = -(0..n).map(|k| du[k] * jet.d2u[(k, i)]).sum::<f64>() / (w * w * w);
        let rhs: f64 = -(0..n).map(|j| h_euc[(i, j)] * ginv_du[j]).sum::<f64>();
        normal_gradient = normal_gradient.max((lhs - rhs).abs());
    }

    let curvature_relation = frame
        .kappa
        .iter()
        .zip(frame.kappa_euc.iter())
        .map(|(k, ke)| (k - (u * ke + nv)).abs())
        .fold(0.0, f64::max);

    IdentityReport {
        metric_gradient,
        second_form,
        gamma_inverse,
        gamma_square,
        hessian_height,
        hessian_coordinates,
        normal_gradient,
        curvature_relation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn horosphere_has_unit_curvature() {
        let jet = GraphJet::horosphere(0.7, 2);
        let fr = curvature_frame(&jet).unwrap();
        assert_eq!(&*fr.kappa, &[1.0, 1.0]);
        assert_eq!(fr.a, Mat::identity(2));
        assert_eq!(is_strictly_convex(&jet), (true, 1.0));
        assert_eq!(check_identities(&jet, &fr).max(), 0.0);
    }

    #[test]
    fn nonpositive_height_is_rejected() {
        let jet = GraphJet::horosphere(0.0, 2);
        assert!(curvature_frame(&jet).is_err());
    }

    #[test]
    fn concave_jet_is_not_convex() {
        let u = 0.5;
        let jet = GraphJet::new(u, vec![0.0, 0.0], Mat::identity(2).scale(-2.0 / u)).unwrap();
        let (ok, m) = is_strictly_convex(&jet);
        assert!(!ok);
        assert!((m + 1.0).abs() < 1e-15);
    }

    #[test]
    fn flat_gradient_gives_affine_curvature_matrix() {
        let d2u = Mat::from_rows(&[&[0.3, -0.1], &[-0.1, 0.8]]);
        let jet = GraphJet::new(1.3, vec![0.0, 0.0], d2u.clone()).unwrap();
        let fr = curvature_frame(&jet).unwrap();
        assert_eq!(fr.a, Mat::identity(2).add(&d2u.scale(1.3)));
    }

    #[test]
    fn asymmetric_hessian_is_rejected() {
        let d2u = Mat::from_rows(&[&[0.3, -0.1], &[0.1, 0.8]]);
        assert!(GraphJet::new(1.0, vec![0.0, 0.0], d2u).is_err());
    }
}
