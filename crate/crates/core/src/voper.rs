//! The operator in the variable `v = u²`:
//! `G(D²v, Dv, v) = F(a_ij)` with
//! `a = (2√v/W) γ (δ + ½D²v) γ`, `W = √(4v + |Dv|²)`,
//! together with its analytic derivatives `G^{st}`, `G^s` and `G_v`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, bail_domain, Result};
use crate::hypgeo::{curvature_frame, GraphJet};
use crate::linalg::{min_eigenvalue, norm_sq, Mat};
use crate::symfunc::{f_eval, matrix_function};

const SYMMETRY_TOL: f64 = 1e-12;

/// Second-order jet of `v = u²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VJet {
    pub v: f64,
    pub dv: Vec<f64>,
    pub d2v: Mat,
}

impl VJet {
    pub fn new(v: f64, dv: Vec<f64>, d2v: Mat) -> Result<Self> {
        let n = dv.len();
        if d2v.dim() != n {
            bail_arg!("hessian is {0}x{0} but gradient has {n} entries", d2v.dim());
        }
        if !v.is_finite() || dv.iter().any(|x| !x.is_finite()) || !d2v.is_finite() {
            bail_arg!("v-jet has non-finite entries");
        }
        if d2v.asymmetry() > SYMMETRY_TOL * (1.0 + d2v.max_abs()) {
            bail_arg!("hessian not symmetric (asymmetry {:e})", d2v.asymmetry());
        }
        Ok(VJet { v, dv, d2v })
    }

    pub fn dim(&self) -> usize {
        self.dv.len()
    }

    /// `v = u²`, `Dv = 2u Du`, `D²v = 2(Du ⊗ Du + u D²u)`.
    pub fn from_graph(jet: &GraphJet) -> Self {
        let u = jet.u;
        let dv = jet.du.iter().map(|&p| 2.0 * u * p).collect();
        let d2v = Mat::outer(&jet.du, &jet.du).add(&jet.d2u.scale(u)).scale(2.0);
        VJet { v: u * u, dv, d2v }
    }

    /// Inverse of [`VJet::from_graph`]; requires `v > 0`.
    pub fn to_graph(&self) -> Result<GraphJet> {
        if !(self.v > 0.0) {
            bail_domain!("v = {} is not positive", self.v);
        }
        let u = self.v.sqrt();
        let du: Vec<f64> = self.dv.iter().map(|&p| p / (2.0 * u)).collect();
        let d2u = self.d2v.scale(0.5).sub(&Mat::outer(&du, &du)).scale(1.0 / u).symmetrized();
        GraphJet::new(u, du, d2u)
    }

    /// `W = √(4v + |Dv|²)`.
    pub fn big_w(&self) -> f64 {
        (4.0 * self.v + norm_sq(&self.dv)).sqrt()
    }
}

/// Value and derivatives of `G` at one jet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GOperatorState {
    pub g: f64,
    /// `∂G/∂v_st`, symmetric.
    pub gst: Mat,
    /// `∂G/∂v_s`.
    pub gs: Vec<f64>,
    /// `∂G/∂v`.
    pub gv: f64,
    pub a: Mat,
    /// Eigenvalues of `a` (hyperbolic principal curvatures), ascending.
    pub kappa: Vec<f64>,
    pub cone_ok: bool,
}

#[cfg(feature = "fault-injection")]
static CORRUPT_GV: core::sync::atomic::AtomicBool = core::sync::atomic::AtomicBool::new(false);

/// Switch the deliberate `G_v` corruption on or off.
#[cfg(feature = "fault-injection")]
pub fn set_fault_injection(on: bool) {
    CORRUPT_GV.store(on, core::sync::atomic::Ordering::SeqCst);
}

/// With the feature on, setting `PLATEAU_CORRUPT_GV` in the environment has
/// the same effect as [`set_fault_injection`]`(true)`.
#[cfg(feature = "fault-injection")]
fn fault_active() -> bool {
    static FROM_ENV: std::sync::OnceLock<bool> = std::sync::OnceLock::new();
    CORRUPT_GV.load(core::sync::atomic::Ordering::SeqCst)
        || *FROM_ENV.get_or_init(|| std::env::var_os("PLATEAU_CORRUPT_GV").is_some())
}

#[cfg(not(feature = "fault-injection"))]
#[inline(always)]
fn fault_active() -> bool {
    false
}

/// `γ^{ik} = δ_ik − v_i v_k / (W(2√v + W))`.
pub fn gamma_up_v(v: f64, dv: &[f64]) -> Mat {
    let sv = v.sqrt();
    let w = (4.0 * v + norm_sq(dv)).sqrt();
    let c = 1.0 / (w * (2.0 * sv + w));
    Mat::from_fn(dv.len(), |i, k| if i == k { 1.0 } else { 0.0 } - c * dv[i] * dv[k])
}

fn curvature_matrix(jet: &VJet, gamma: &Mat, sv: f64, w: f64) -> Mat {
    let n = jet.dim();
    let b = Mat::identity(n).add(&jet.d2v.scale(0.5)).symmetrized();
    b.congruence(gamma).scale(2.0 * sv / w).symmetrized()
}

/// `G` alone, with cone membership.
pub fn g_value(jet: &VJet, k: usize) -> Result<(f64, bool)> {
    if !(jet.v > 0.0) {
        bail_domain!("v = {} is not positive", jet.v);
    }
    let sv = jet.v.sqrt();
    let w = jet.big_w();
    let gamma = gamma_up_v(jet.v, &jet.dv);
    let a = curvature_matrix(jet, &gamma, sv, w);
    let mf = matrix_function(&a, k)?;
    Ok((mf.f, mf.cone_ok))
}

/// Evaluate `G` and its derivatives in closed form:
///
/// * `G^{st} = (√v/W) F^{ij} γ^{is} γ^{tj}`
/// * `G_v = (1/(2v) − 2/W²) F^{ij} a_ij + (v_i v_q/(W² v)) F^{ij} a_qj`
/// * `G^s = −(v_s/W²) F^{ij} a_ij
///   − (W γ^{is} v_q + 2√v γ^{qs} v_i) F^{ij} a_qj / (√v W (2√v + W))`
pub fn assemble_g(jet: &VJet, k: usize) -> Result<GOperatorState> {
    if !(jet.v > 0.0) {
        bail_domain!("v = {} is not positive", jet.v);
    }
    let n = jet.dim();
    let v = jet.v;
    let dv = &jet.dv;
    let sv = v.sqrt();
    let w = jet.big_w();
    let gamma = gamma_up_v(v, dv);
    let a = curvature_matrix(jet, &gamma, sv, w);
    let mf = matrix_function(&a, k)?;
    let fij = &mf.fij;

    let gst = fij.congruence(&gamma).scale(sv / w).symmetrized();

    // p[(q, i)] = Σ_j a_qj F^{ij}
    let p = a.matmul(fij);
    let tr_fa = p.trace();
    let mut vpv = 0.0;
    for i in 0..n {
        for q in 0..n {
            vpv += dv[i] * dv[q] * p[(q, i)];
        }
    }
    let mut gv = (0.5 / v - 2.0 / (w * w)) * tr_fa + vpv / (w * w * v);
    if fault_active() {
        gv *= 1.5;
        gv += 0.1;
    }

    let denom = sv * w * (2.0 * sv + w);
    let gs = (0..n)
        .map(|s| {
            let mut acc = 0.0;
            for i in 0..n {
                for q in 0..n {
                    acc += (w * gamma[(i, s)] * dv[q] + 2.0 * sv * gamma[(q, s)] * dv[i]) * p[(q, i)];
                }
            }
            -dv[s] / (w * w) * tr_fa - acc / denom
        })
        .collect();

    Ok(GOperatorState { g: mf.f, gst, gs, gv, a, kappa: mf.eigen.values, cone_ok: mf.cone_ok })
}

/// Smallest eigenvalue of `δ_ij + ½ v_ij`; positive iff strictly locally
/// convex.
pub fn convexity_margin_v(jet: &VJet) -> f64 {
    min_eigenvalue(&Mat::identity(jet.dim()).add(&jet.d2v.scale(0.5)).symmetrized())
}

/// Result of the linearization sign check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    /// `G_u − ψ` in u-variables.
    pub value: f64,
    /// The jet is strictly convex and `G = ψ u` within tolerance.
    pub precondition_ok: bool,
}

/// `G_u − ψ` where `G_u = (Σ f_i κ_i − (1/w) Σ f_i)/u` is the derivative of
/// the u-form operator in the zeroth-order slot and `ψ` is the coefficient
/// with `G = ψ u`.
pub fn monotonicity_check(jet: &VJet, psi_at_point: f64, k: usize) -> Result<MonotonicityCheck> {
    let gj = jet.to_graph()?;
    let frame = curvature_frame(&gj)?;
    let ev = f_eval(&frame.kappa, k)?;
    let sum_f: f64 = ev.grad.iter().sum();
    let sum_fk: f64 = ev.grad.iter().zip(frame.kappa.iter()).map(|(f, k)| f * k).sum();
    let gu = (sum_fk - sum_f / frame.w) / gj.u;
    let g = ev.f;
    let target = psi_at_point * gj.u;
    let precondition_ok =
        convexity_margin_v(jet) > 0.0 && ev.cone_ok && (g - target).abs() <= 1e-8 * (1.0 + g.abs());
    Ok(MonotonicityCheck { value: gu - psi_at_point, precondition_ok })
}

/// Worst relative disagreement between the analytic derivatives of `G`
/// and central differences with step `tau`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JacobianCheck {
    /// Slot of the worst entry: `"v"`, `"v_s"` or `"v_st"`.
    pub slot: &'static str,
    pub index: (usize, usize),
    pub rel_error: f64,
}

pub fn jacobian_check(jet: &VJet, k: usize, tau: f64) -> Result<JacobianCheck> {
    let n = jet.dim();
    let st = assemble_g(jet, k)?;
    let g = |j: &VJet| g_value(j, k).map(|r| r.0);
    let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + a.abs().max(b.abs()));
    let mut worst = JacobianCheck { slot: "v", index: (0, 0), rel_error: 0.0 };
    let mut keep = |slot: &'static str, index: (usize, usize), e: f64| {
        if !(e <= worst.rel_error) {
            worst = JacobianCheck { slot, index, rel_error: e };
        }
    };

    let (mut p, mut m) = (jet.clone(), jet.clone());
    p.v += tau;
    m.v -= tau;
    keep("v", (0, 0), rel(st.gv, (g(&p)? - g(&m)?) / (2.0 * tau)));
    for s in 0..n {
        let (mut p, mut m) = (jet.clone(), jet.clone());
        p.dv[s] += tau;
        m.dv[s] -= tau;
        keep("v_s", (s, s), rel(st.gs[s], (g(&p)? - g(&m)?) / (2.0 * tau)));
    }
    for s in 0..n {
        for t in s..n {
            let mut e = Mat::zeros(n);
            e[(s, t)] += 0.5 * tau;
            e[(t, s)] += 0.5 * tau;
            let (mut p, mut m) = (jet.clone(), jet.clone());
            p.d2v = jet.d2v.add(&e);
            m.d2v = jet.d2v.sub(&e);
            keep("v_st", (s, t), rel(st.gst[(s, t)], (g(&p)? - g(&m)?) / (2.0 * tau)));
        }
    }
    Ok(worst)
}
