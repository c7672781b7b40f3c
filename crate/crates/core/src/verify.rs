//! Independent oracles and hypothesis checkers.
//!
//! * [`BarrierSphere`] and [`cap_field`]: Euclidean spheres meeting the ideal
//!   boundary, whose hyperbolic principal curvatures are all `σ`.
//! * [`lemma_b_test`]: non-intersection of a solution graph with a barrier ball.
//! * [`check_conditions`]: the structural hypotheses on `u̲` and `ψ` needed for
//!   existence when `k < n`, plus the almost-round search.
//! * [`radial_oracle`]: shooting solution of the rotationally symmetric problem.
//! * [`rotation_residual`]: the differentiated equation along rotations,
//!   evaluated on a discrete solution.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, bail_domain, Error, Result};
use crate::grid::{GridDomain, NodeTag, ScalarField};
use crate::hypgeo::{curvature_frame, GraphJet};
use crate::linalg::{min_eigenvalue, norm_sq, Mat};
use crate::par::map_indices;
use crate::solver::{binomial, domain_diameter, ProblemSpec};
use crate::symfunc::f_eval;
use crate::voper::{assemble_g, g_value};

/// Eigenvalues above `-PSD_TOL` count as nonnegative.
pub const PSD_TOL: f64 = 1e-8;

/// Which side of the sphere the unit normal points to when `κ_i = σ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Ball centred at `(b′, σR)`; curvature `σ` for the normal pointing into
    /// the ball. As a graph this is the lower cap over an annulus.
    Inward,
    /// Ball centred at `(b′, −σR)`; curvature `σ` for the outward normal. As a
    /// graph this is the upper cap over the disk of radius `R √(1 − σ²)`.
    Outward,
}

/// A Euclidean sphere of radius `R` meeting `{x_{n+1} = 0}` at angle `arccos σ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierSphere {
    pub center_horizontal: Vec<f64>,
    pub sigma: f64,
    pub radius: f64,
    pub orientation: Orientation,
}

impl BarrierSphere {
    pub fn new(center_horizontal: Vec<f64>, sigma: f64, radius: f64, orientation: Orientation) -> Result<Self> {
        if center_horizontal.len() < 2 {
            bail_arg!("barrier sphere needs dimension n >= 2");
        }
        if !(sigma > 0.0 && sigma < 1.0) {
            bail_arg!("barrier sigma must lie in (0, 1), got {sigma}");
        }
        if !(radius > 0.0 && radius.is_finite()) {
            bail_arg!("barrier radius must be positive, got {radius}");
        }
        Ok(BarrierSphere { center_horizontal, sigma, radius, orientation })
    }

    pub fn dim(&self) -> usize {
        self.center_horizontal.len()
    }

    /// Height of the Euclidean centre.
    pub fn center_height(&self) -> f64 {
        match self.orientation {
            Orientation::Inward => self.sigma * self.radius,
            Orientation::Outward => -self.sigma * self.radius,
        }
    }

    /// The Euclidean centre in `ℝ^{n+1}`.
    pub fn euclidean_center(&self) -> Vec<f64> {
        let mut c = self.center_horizontal.clone();
        c.push(self.center_height());
        c
    }

    /// Radius of the circle where the sphere meets `{x_{n+1} = 0}`.
    pub fn footprint_radius(&self) -> f64 {
        self.radius * (1.0 - self.sigma * self.sigma).sqrt()
    }

    /// Signed `|p − c|² − R²`; negative inside the ball.
    pub fn ball_excess(&self, x: &[f64], height: f64) -> f64 {
        let d = norm_sq(&sub(x, &self.center_horizontal));
        let z = height - self.center_height();
        d + z * z - self.radius * self.radius
    }
}

fn sub(x: &[f64], c: &[f64]) -> Vec<f64> {
    x.iter().zip(c).map(|(a, b)| a - b).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    norm_sq(&sub(a, b)).sqrt()
}

/// The barrier sphere as a graph over `x`, with analytic derivatives.
///
/// `Outward` spheres give the upper cap `u = −σR + √(R² − ρ²)` for
/// `ρ < R √(1 − σ²)`. `Inward` spheres give the lower cap
/// `u = σR − √(R² − ρ²)` for `R √(1 − σ²) < ρ < R`.
pub fn cap_field(sphere: &BarrierSphere, x: &[f64]) -> Result<GraphJet> {
    if x.len() != sphere.dim() {
        bail_arg!("point has dimension {}, sphere has {}", x.len(), sphere.dim());
    }
    let d = sub(x, &sphere.center_horizontal);
    let rho2 = norm_sq(&d);
    let big_r = sphere.radius;
    let foot = sphere.footprint_radius();
    let s2 = big_r * big_r - rho2;
    // sign of the square-root branch
    let sgn = match sphere.orientation {
        Orientation::Outward => {
            if rho2 >= foot * foot {
                bail_domain!("point at distance {} is outside the cap footprint {foot}", rho2.sqrt());
            }
            1.0
        }
        Orientation::Inward => {
            if rho2 <= foot * foot || s2 <= 0.0 {
                bail_domain!(
                    "point at distance {} is outside the annulus ({foot}, {big_r})",
                    rho2.sqrt()
                );
            }
            -1.0
        }
    };
    let s = s2.sqrt();
    let u = sphere.center_height() + sgn * s;
    let du: Vec<f64> = d.iter().map(|di| -sgn * di / s).collect();
    let n = d.len();
    let d2u = Mat::from_fn(n, |i, j| {
        let dij = if i == j { 1.0 } else { 0.0 };
        -sgn * (dij / s + d[i] * d[j] / (s * s * s))
    });
    GraphJet::new(u, du, d2u)
}

/// Outcome of a barrier-ball check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum LemmaBOutcome {
    /// A precondition fails; nothing is asserted.
    NotApplicable { reason: String },
    /// No graph node lies inside the ball.
    Disjoint { min_excess: f64 },
    /// A graph node lies inside the ball.
    Intersects { witness: Vec<f64>, excess: f64 },
}

impl LemmaBOutcome {
    pub fn is_applicable(&self) -> bool {
        !matches!(self, LemmaBOutcome::NotApplicable { .. })
    }
}

/// Largest `R` for which the ball centred at `(b′, σR)` misses the lift of
/// `Ω_ε` to height `ε`, given `d = dist(b′, Γ_ε)`.
pub fn lemma_b_max_radius(sigma: f64, eps: f64, d: f64) -> f64 {
    // slice radius² R² − (σR − ε)² < d² ⇔ (1 − σ²)R² + 2σεR − ε² − d² < 0
    let a = 1.0 - sigma * sigma;
    let b = 2.0 * sigma * eps;
    let c = -(eps * eps + d * d);
    (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
}

/// Distance from `x` to the sampled boundary `Γ_ε` of a grid domain.
pub fn boundary_distance(domain: &GridDomain, x: &[f64]) -> f64 {
    domain.crossings.iter().map(|c| dist(&c.point, x)).fold(f64::INFINITY, f64::min)
}

/// Checks whether the graph of `u = √v` avoids the ball of an inward barrier
/// sphere, after verifying the hypotheses of the comparison lemma on the
/// discrete data: `f(κ) > f(σ, …, σ)` at every node, `b′ ∉ Ω̄_ε`,
/// `dist(b′, Γ_ε) > ε/σ`, and the ball misses the boundary lift.
pub fn lemma_b_test(
    spec: &ProblemSpec,
    domain: &GridDomain,
    solution: &ScalarField,
    sphere: &BarrierSphere,
) -> Result<LemmaBOutcome> {
    if solution.values.len() != domain.num_dofs() {
        bail_arg!("field has {} values, domain has {} dofs", solution.values.len(), domain.num_dofs());
    }
    if sphere.dim() != domain.n {
        bail_arg!("sphere dimension {} does not match domain dimension {}", sphere.dim(), domain.n);
    }
    let na = |reason: String| Ok(LemmaBOutcome::NotApplicable { reason });
    if sphere.orientation != Orientation::Inward {
        return na("the comparison uses inward barrier spheres".into());
    }
    let eps = domain.eps;
    let sigma = sphere.sigma;
    let b = &sphere.center_horizontal;

    let target = binomial(spec.n, spec.k).powf(1.0 / spec.k as f64) * sigma;
    let curv: Vec<Result<(f64, bool)>> =
        map_indices(domain.num_dofs(), |d| g_value(&domain.jet_at(&solution.values, d), spec.k));
    for (d, r) in curv.into_iter().enumerate() {
        let (g, cone_ok) = r?;
        if !cone_ok || !(g > target) {
            return na(format!(
                "curvature f = {g} at {:?} does not exceed f(σ, …, σ) = {target}",
                domain.point(d)
            ));
        }
    }
    if spec.sub.ubar.value(b) >= eps {
        return na("centre lies over the closed domain".into());
    }
    let d = boundary_distance(domain, b);
    if !(d > eps / sigma) {
        return na(format!("dist(b′, Γ_ε) = {d} is not above ε/σ = {}", eps / sigma));
    }
    let z = sigma * sphere.radius - eps;
    let slice2 = sphere.radius * sphere.radius - z * z;
    if slice2 > 0.0 && slice2.sqrt() >= d {
        return na(format!("ball meets the boundary lift (slice radius {} ≥ {d})", slice2.sqrt()));
    }

    let mut min_excess = f64::INFINITY;
    let mut worst = 0;
    for (i, &v) in solution.values.iter().enumerate() {
        let e = sphere.ball_excess(&domain.point(i), v.max(0.0).sqrt());
        if e < min_excess {
            min_excess = e;
            worst = i;
        }
    }
    if min_excess < 0.0 {
        let mut witness = domain.point(worst);
        witness.push(solution.values[worst].sqrt());
        return Ok(LemmaBOutcome::Intersects { witness, excess: min_excess });
    }
    Ok(LemmaBOutcome::Disjoint { min_excess })
}

/// Three-valued result of a hypothesis check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The hypothesis is not needed for existence (`k = n`).
    NotApplicable,
}

/// One PSD condition evaluated over a set of samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub verdict: Verdict,
    /// Whether the condition holds numerically, regardless of applicability.
    pub holds: bool,
    /// The worst eigenvalue lies in `[−PSD_TOL, PSD_TOL]`.
    pub marginal: bool,
    pub min_eigenvalue: f64,
    /// Sample point (with `u` appended where relevant) of the worst eigenvalue.
    pub witness: Option<Vec<f64>>,
    pub samples: usize,
}

/// The `ψ` matrix condition restricted to one height `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub u: f64,
    pub min_eigenvalue: f64,
    pub witness: Vec<f64>,
}

/// Result of the almost-round search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmostRoundReport {
    pub verdict: Verdict,
    pub holds: bool,
    pub center: Vec<f64>,
    /// Smallest and largest distance from `center` to the sampled `∂Ω`.
    pub rho_in: f64,
    pub rho_out: f64,
    /// Lower bound of `ψ` over the samples.
    pub psi_min: f64,
    pub sigma_s: Option<f64>,
    pub sigma_b: Option<f64>,
    pub radius_s: Option<f64>,
    pub radius_b: Option<f64>,
    /// Boundary point of smallest distance when the search fails.
    pub witness: Option<Vec<f64>>,
}

/// Report of [`check_conditions`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub n: usize,
    pub k: usize,
    pub cond_subsolution: ConditionReport,
    pub cond_psi: ConditionReport,
    pub psi_slices: Vec<SliceReport>,
    pub almost_round: AlmostRoundReport,
}

/// Sampling controls for [`check_conditions`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckOptions {
    /// Number of `u` slices between `min u̲` and the height bound.
    pub u_slices: usize,
    /// Grid of `σ` values for the almost-round search.
    pub sigma_grid: usize,
    /// Directions per axis-face used to sample `∂Ω`.
    pub boundary_rays: usize,
    /// Relative step of the finite-difference Hessian of `u̲/f(κ[u̲])`.
    pub fd_step: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { u_slices: 8, sigma_grid: 50, boundary_rays: 16, fd_step: 1e-3 }
    }
}

fn condition(min_eig: f64, witness: Option<Vec<f64>>, samples: usize, required: bool) -> ConditionReport {
    let holds = min_eig >= -PSD_TOL;
    let verdict = match (required, holds) {
        (false, _) => Verdict::NotApplicable,
        (true, true) => Verdict::Pass,
        (true, false) => Verdict::Fail,
    };
    ConditionReport {
        verdict,
        holds,
        marginal: min_eig.abs() <= PSD_TOL,
        min_eigenvalue: min_eig,
        witness,
        samples,
    }
}

/// `u̲/f(κ[u̲])` at a point; `NaN` outside the cone.
fn ubar_over_f(spec: &ProblemSpec, x: &[f64]) -> f64 {
    let jet = match spec.sub.ubar.jet(x) {
        Ok(j) => j,
        Err(_) => return f64::NAN,
    };
    let frame = match curvature_frame(&jet) {
        Ok(f) => f,
        Err(_) => return f64::NAN,
    };
    match f_eval(&frame.kappa, spec.k) {
        Ok(e) if e.cone_ok => jet.u / e.f,
        _ => f64::NAN,
    }
}

/// Hessian of `q` at `x` by fourth-order central differences.
fn fd_hessian(q: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Mat {
    let n = x.len();
    let at = |offs: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(a, s) in offs {
            y[a] += s;
        }
        q(&y)
    };
    let q0 = q(x);
    let mut m = Mat::zeros(n);
    for a in 0..n {
        let v = (-at(&[(a, 2.0 * h)]) + 16.0 * at(&[(a, h)]) - 30.0 * q0 + 16.0 * at(&[(a, -h)])
            - at(&[(a, -2.0 * h)]))
            / (12.0 * h * h);
        m[(a, a)] = v;
        for b in a + 1..n {
            let mixed = |s: f64| {
                (at(&[(a, s), (b, s)]) - at(&[(a, s), (b, -s)]) - at(&[(a, -s), (b, s)]) + at(&[(a, -s), (b, -s)]))
                    / (4.0 * s * s)
            };
            let v = (4.0 * mixed(h) - mixed(2.0 * h)) / 3.0;
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// The `(n+1) × (n+1)` matrix in `ψ` and its derivatives at `(x, u)`.
pub fn psi_condition_matrix(spec: &ProblemSpec, x: &[f64], u: f64) -> Mat {
    let n = x.len();
    let k = spec.k as f64;
    let c = (k + 1.0) / k;
    let p = spec.psi.value(x, u);
    let pu = spec.psi.d_u(x, u);
    let px = spec.psi.d_x(x, u);
    let pxx = spec.psi.d_xx(x, u);
    let pxu = spec.psi.d_xu(x, u);
    let puu = spec.psi.d_uu(x, u);
    Mat::from_fn(n + 1, |i, j| match (i < n, j < n) {
        (true, true) => {
            let dij = if i == j { 1.0 } else { 0.0 };
            c * px[i] * px[j] / p - pxx[(i, j)] - k * p / (u * u) * dij + pu / u * dij
        }
        (true, false) => c * px[i] * pu / p - pxu[i] - px[i] / u,
        (false, true) => c * px[j] * pu / p - pxu[j] - px[j] / u,
        (false, false) => c * pu * pu / p - puu - k * p / (u * u) - pu / u,
    })
}

/// Directions sampling the unit sphere: normalized lattice points on the
/// surface of the cube `[−m, m]^n`.
fn ray_directions(n: usize, m: usize) -> Vec<Vec<f64>> {
    let m = m.max(1) as i64;
    let side = (2 * m + 1) as usize;
    let total = side.pow(n as u32);
    let mut out = Vec::new();
    for idx in 0..total {
        let mut r = idx;
        let mut p = vec![0.0; n];
        let mut on_face = false;
        for a in 0..n {
            let c = (r % side) as i64 - m;
            r /= side;
            on_face |= c.abs() == m;
            p[a] = c as f64;
        }
        if on_face {
            let l = norm_sq(&p).sqrt();
            out.push(p.iter().map(|x| x / l).collect());
        }
    }
    out
}

/// Boundary point of `{u̲ > level}` along the ray from `c` in direction `e`.
fn ray_boundary(spec: &ProblemSpec, c: &[f64], e: &[f64], level: f64) -> Option<f64> {
    let (lo, hi) = spec.sub.ubar.bounding_box();
    let reach = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
    let at = |r: f64| -> f64 {
        let x: Vec<f64> = c.iter().zip(e).map(|(a, b)| a + r * b).collect();
        spec.sub.ubar.value(&x) - level
    };
    if !(at(0.0) > 0.0) || at(reach) > 0.0 {
        return None;
    }
    let (mut a, mut b) = (0.0, reach);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if at(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-13 * reach {
            break;
        }
    }
    Some(0.5 * (a + b))
}

/// Evaluates the two PSD hypotheses and the almost-round hypothesis at the
/// given horizontal sample points, which should lie in `Ω_ε`.
///
/// The `ψ` matrix is sampled on `u_slices` heights spanning
/// `[min u̲, √(ε² + diam²)]`. All three verdicts are `NotApplicable` when
/// `k = n`; the numbers are reported regardless.
pub fn check_conditions(spec: &ProblemSpec, samples: &[Vec<f64>], opts: &CheckOptions) -> Result<HypothesisReport> {
    if samples.is_empty() {
        bail_arg!("no sample points");
    }
    if samples.iter().any(|x| x.len() != spec.n) {
        bail_arg!("sample dimension does not match n = {}", spec.n);
    }
    let required = spec.k != spec.n;
    let (lo, hi) = spec.sub.ubar.bounding_box();
    let scale = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);

    // subsolution condition
    let h = opts.fd_step * scale;
    let q = |x: &[f64]| ubar_over_f(spec, x);
    let eigs: Vec<f64> = map_indices(samples.len(), |i| {
        let m = fd_hessian(&q, &samples[i], h);
        if m.is_finite() {
            min_eigenvalue(&m.symmetrized())
        } else {
            f64::NEG_INFINITY
        }
    });
    let (i12, e12) = argmin(&eigs);
    let cond_subsolution = condition(e12, Some(samples[i12].clone()), samples.len(), required);

    // ψ condition on u slices
    let u_lo = samples.iter().map(|x| spec.sub.ubar.value(x)).fold(f64::INFINITY, f64::min);
    if !(u_lo > 0.0) {
        bail_arg!("sample points must lie where u̲ > 0");
    }
    let diam = domain_diameter(&spec.sub, scale / 64.0)?;
    let u_hi = (spec.eps * spec.eps + diam * diam).sqrt();
    let m = opts.u_slices.max(1);
    let heights: Vec<f64> = (0..m)
        .map(|j| if m == 1 { u_lo } else { u_lo + (u_hi - u_lo) * j as f64 / (m - 1) as f64 })
        .collect();
    let mut psi_slices = Vec::with_capacity(m);
    let mut psi_min = f64::INFINITY;
    for &u in &heights {
        let vals: Vec<(f64, f64)> = map_indices(samples.len(), |i| {
            let x = &samples[i];
            (min_eigenvalue(&psi_condition_matrix(spec, x, u)), spec.psi.value(x, u))
        });
        psi_min = vals.iter().fold(psi_min, |a, v| a.min(v.1));
        let e: Vec<f64> = vals.iter().map(|v| if v.0.is_nan() { f64::NEG_INFINITY } else { v.0 }).collect();
        let (i, e) = argmin(&e);
        let mut witness = samples[i].clone();
        witness.push(u);
        psi_slices.push(SliceReport { u, min_eigenvalue: e, witness });
    }
    let worst = psi_slices
        .iter()
        .min_by(|a, b| a.min_eigenvalue.total_cmp(&b.min_eigenvalue))
        .expect("at least one slice");
    let cond_psi = condition(worst.min_eigenvalue, Some(worst.witness.clone()), samples.len() * m, required);

    let almost_round = almost_round(spec, samples, psi_min, opts, required);
    Ok(HypothesisReport { n: spec.n, k: spec.k, cond_subsolution, cond_psi, psi_slices, almost_round })
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter().enumerate().fold((0, f64::INFINITY), |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) })
}

// Concentric search: both footprints centred at `c`, big sphere through the
// farthest boundary point, small sphere touching it at the common apex.
fn almost_round(
    spec: &ProblemSpec,
    samples: &[Vec<f64>],
    psi_min: f64,
    opts: &CheckOptions,
    required: bool,
) -> AlmostRoundReport {
    let center = spec.sub.ubar.radial_center().unwrap_or_else(|| {
        samples
            .iter()
            .max_by(|a, b| spec.sub.ubar.value(a).total_cmp(&spec.sub.ubar.value(b)))
            .expect("non-empty samples")
            .clone()
    });
    let mut rho_in = f64::INFINITY;
    let mut rho_out: f64 = 0.0;
    let mut witness = None;
    let mut rays_ok = true;
    for e in ray_directions(spec.n, opts.boundary_rays) {
        match ray_boundary(spec, &center, &e, 0.0) {
            Some(r) => {
                if r < rho_in {
                    rho_in = r;
                    witness = Some(center.iter().zip(&e).map(|(a, b)| a + r * b).collect());
                }
                rho_out = rho_out.max(r);
            }
            None => rays_ok = false,
        }
    }
    let mut found = None;
    let ck = binomial(spec.n, spec.k);
    let kf = spec.k as f64;
    let g = opts.sigma_grid.max(2);
    let grid: Vec<f64> = (1..=g).map(|j| j as f64 / (g + 1) as f64).collect();
    if rays_ok && rho_in.is_finite() {
        'outer: for &sb in grid.iter().rev() {
            if !(psi_min > ck * sb.powf(kf)) {
                continue;
            }
            for &ss in grid.iter().take_while(|&&s| s < sb) {
                let rho_s = rho_out * ((1.0 - sb) * (1.0 + ss) / ((1.0 + sb) * (1.0 - ss))).sqrt();
                let big_rs = rho_s / (1.0 - ss * ss).sqrt();
                let big_rb = rho_out / (1.0 - sb * sb).sqrt();
                if rho_s <= rho_in && big_rb > big_rs {
                    found = Some((ss, sb, big_rs, big_rb));
                    break 'outer;
                }
            }
        }
    }
    let holds = found.is_some();
    let verdict = match (required, holds) {
        (false, _) => Verdict::NotApplicable,
        (true, true) => Verdict::Pass,
        (true, false) => Verdict::Fail,
    };
    AlmostRoundReport {
        verdict,
        holds,
        center,
        rho_in,
        rho_out,
        psi_min,
        sigma_s: found.map(|f| f.0),
        sigma_b: found.map(|f| f.1),
        radius_s: found.map(|f| f.2),
        radius_b: found.map(|f| f.3),
        witness: if holds { None } else { witness },
    }
}

/// Lattice sample points of spacing `h` inside `{u̲ > level}`.
pub fn interior_samples(spec: &ProblemSpec, level: f64, h: f64) -> Vec<Vec<f64>> {
    let (lo, hi) = spec.sub.ubar.bounding_box();
    let n = spec.n;
    let counts: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| ((b - a) / h).floor() as usize + 1).collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::new();
    for idx in 0..total {
        let mut r = idx;
        let mut x = vec![0.0; n];
        for a in 0..n {
            x[a] = lo[a] + (r % counts[a]) as f64 * h;
            r /= counts[a];
        }
        if spec.sub.ubar.value(&x) > level {
            out.push(x);
        }
    }
    out
}

/// A rotationally symmetric solution `u(r)` on `[0, r_boundary]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub center: Vec<f64>,
    pub r_boundary: f64,
    pub u0: f64,
    /// `u''(0)`, used on `[0, r[0]]`.
    pub u2: f64,
    /// `|u(r_boundary) − ε|` at the accepted shot.
    pub mismatch: f64,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub d2u: Vec<f64>,
    pub n: usize,
    pub k: usize,
}

impl RadialProfile {
    /// `u(r)` by cubic Hermite interpolation between integration nodes.
    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    /// `(u, u′)` at `r`.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let r = r.abs();
        if r <= self.r[0] {
            return (self.u0 + 0.5 * self.u2 * r * r, self.u2 * r);
        }
        let last = self.r.len() - 1;
        let i = match self.r.binary_search_by(|p| p.total_cmp(&r)) {
            Ok(i) => return (self.u[i], self.du[i]),
            Err(i) if i > last => return (self.u[last], self.du[last]),
            Err(i) => i - 1,
        };
        let (r0, r1) = (self.r[i], self.r[i + 1]);
        let hh = r1 - r0;
        let t = (r - r0) / hh;
        let (y0, y1, m0, m1) = (self.u[i], self.u[i + 1], self.du[i] * hh, self.du[i + 1] * hh);
        let t2 = t * t;
        let t3 = t2 * t;
        let val = (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
        let der = ((6.0 * t2 - 6.0 * t) * y0 + (3.0 * t2 - 4.0 * t + 1.0) * m0 + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / hh;
        (val, der)
    }

    /// `u` at a horizontal point.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.value(dist(x, &self.center))
    }

    /// Radial and tangential hyperbolic curvatures at an integration node.
    pub fn curvatures(&self, i: usize) -> (f64, f64) {
        let (r, u, p, q) = (self.r[i], self.u[i], self.du[i], self.d2u[i]);
        let w = (1.0 + p * p).sqrt();
        (u * q / (w * w * w) + 1.0 / w, (1.0 + u * p / r) / w)
    }
}

// u'' from σ_k(κ_r, κ_t, …, κ_t) = ψ, with κ_t repeated n − 1 times.
fn radial_second(n: usize, k: usize, psi: f64, u: f64, p: f64, r: f64) -> Option<f64> {
    let w = (1.0 + p * p).sqrt();
    let kt = (1.0 + u * p / r) / w;
    if !(kt > 0.0) || !(u > 0.0) {
        return None;
    }
    let kf = k as i32;
    let kr = (psi - binomial(n - 1, k) * kt.powi(kf)) / (binomial(n - 1, k - 1) * kt.powi(kf - 1));
    let upp = (kr * w - 1.0) * w * w / u;
    upp.is_finite().then_some(upp)
}

/// Options for [`radial_oracle`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadialOptions {
    /// Start radius of the integration (Taylor expansion below it).
    pub r_start: f64,
    /// Local error tolerance of the adaptive RK4 integrator.
    pub tol: f64,
    /// Required boundary mismatch.
    pub mismatch: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        RadialOptions { r_start: 1e-4, tol: 1e-13, mismatch: 1e-10 }
    }
}

enum Shot {
    Reached([Vec<f64>; 4]),
    Collapsed,
}

struct Shooter<'a> {
    spec: &'a ProblemSpec,
    center: Vec<f64>,
    r_b: f64,
    opts: &'a RadialOptions,
}

impl Shooter<'_> {
    fn psi(&self, r: f64, u: f64) -> f64 {
        let mut x = self.center.clone();
        x[0] += r;
        self.spec.psi.value(&x, u)
    }

    fn u2(&self, u0: f64) -> f64 {
        let c = binomial(self.spec.n, self.spec.k);
        let k0 = (self.psi(0.0, u0) / c).powf(1.0 / self.spec.k as f64);
        (k0 - 1.0) / u0
    }

    fn rhs(&self, r: f64, y: [f64; 2]) -> Option<[f64; 2]> {
        let upp = radial_second(self.spec.n, self.spec.k, self.psi(r, y[0]), y[0], y[1], r)?;
        Some([y[1], upp])
    }

    fn rk4(&self, r: f64, y: [f64; 2], h: f64) -> Option<[f64; 2]> {
        let add = |y: [f64; 2], k: [f64; 2], s: f64| [y[0] + s * k[0], y[1] + s * k[1]];
        let k1 = self.rhs(r, y)?;
        let k2 = self.rhs(r + 0.5 * h, add(y, k1, 0.5 * h))?;
        let k3 = self.rhs(r + 0.5 * h, add(y, k2, 0.5 * h))?;
        let k4 = self.rhs(r + h, add(y, k3, h))?;
        Some([
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ])
    }

    fn shoot(&self, u0: f64) -> Shot {
        let u2 = self.u2(u0);
        let mut r = self.opts.r_start;
        let mut y = [u0 + 0.5 * u2 * r * r, u2 * r];
        let (mut rs, mut us, mut ps, mut qs) = (vec![r], vec![y[0]], vec![y[1]], vec![u2]);
        let mut h = 1e-3 * self.r_b;
        let mut steps = 0usize;
        while r < self.r_b {
            steps += 1;
            if steps > 1_000_000 {
                return Shot::Collapsed;
            }
            h = h.min(self.r_b - r);
            let full = self.rk4(r, y, h);
            let half = self.rk4(r, y, 0.5 * h).and_then(|m| self.rk4(r + 0.5 * h, m, 0.5 * h));
            let (full, half) = match (full, half) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    if h < 1e-14 * self.r_b {
                        return Shot::Collapsed;
                    }
                    h *= 0.25;
                    continue;
                }
            };
            let err = ((half[0] - full[0]).abs() / (1.0 + half[0].abs()))
                .max((half[1] - full[1]).abs() / (1.0 + half[1].abs()))
                / 15.0;
            if err <= self.opts.tol || h < 1e-14 * self.r_b {
                r += h;
                // Richardson-corrected step
                y = [half[0] + (half[0] - full[0]) / 15.0, half[1] + (half[1] - full[1]) / 15.0];
                let q = match self.rhs(r, y) {
                    Some(d) if y[0] > 0.0 => d[1],
                    _ => return Shot::Collapsed,
                };
                rs.push(r);
                us.push(y[0]);
                ps.push(y[1]);
                qs.push(q);
                let grow = if err > 0.0 { 0.9 * (self.opts.tol / err).powf(0.2) } else { 4.0 };
                h *= grow.clamp(0.2, 4.0);
            } else {
                h *= (0.9 * (self.opts.tol / err).powf(0.2)).clamp(0.1, 0.9);
            }
        }
        Shot::Reached([rs, us, ps, qs])
    }
}

/// Solves the rotationally symmetric Dirichlet problem on the disk `Ω_ε` by
/// shooting on `u(0)` with an adaptive RK4 integrator.
///
/// Needs a radial subsolution and a `ψ` that is radial about the same centre.
/// The radial and tangential curvatures
/// `κ_r = u u″/w³ + 1/w`, `κ_t = (1 + u u′/r)/w` are computed from the profile
/// directly.
pub fn radial_oracle(spec: &ProblemSpec, opts: &RadialOptions) -> Result<RadialProfile> {
    let center = spec
        .sub
        .ubar
        .radial_center()
        .ok_or_else(|| Error::InvalidArgument("subsolution is not radial".into()))?;
    match spec.psi.radial_center() {
        None => bail_arg!("ψ is not radial"),
        Some(c) if !c.is_empty() && dist(&c, &center) > 1e-12 => {
            bail_arg!("ψ and the subsolution have different centres")
        }
        _ => {}
    }
    let mut e = vec![0.0; spec.n];
    e[0] = 1.0;
    let r_b = ray_boundary(spec, &center, &e, spec.eps)
        .ok_or_else(|| Error::Domain("Ω_ε is empty along the shooting ray".into()))?;
    let shooter = Shooter { spec, center: center.clone(), r_b, opts };
    let eps = spec.eps;
    // mismatch(u0) = u(r_b) − ε, with collapse counted as negative
    let eval = |u0: f64| match shooter.shoot(u0) {
        Shot::Reached(prof) => (prof[1][prof[1].len() - 1] - eps, Some(prof)),
        Shot::Collapsed => (-1.0, None),
    };
    let mut lo = eps;
    let mut hi = spec.sub.ubar.max_value().max(eps) * 2.0;
    let mut tries = 0;
    while eval(hi).0 <= 0.0 {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            bail_domain!("shooting bracket not found");
        }
    }
    if eval(lo).0 > 0.0 {
        bail_domain!("shooting bracket not found: u(0) = ε already overshoots");
    }
    let mut best = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (m, prof) = eval(mid);
        if let Some(p) = prof {
            if m.abs() <= opts.mismatch {
                best = Some((mid, m, p));
                break;
            }
        }
        if m > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            let (m, prof) = eval(hi);
            if let Some(p) = prof {
                best = Some((hi, m, p));
            }
            break;
        }
    }
    let (u0, m, [r, u, du, d2u]) = best.ok_or_else(|| Error::Domain("shooting did not converge".into()))?;
    Ok(RadialProfile {
        center,
        r_boundary: r_b,
        u0,
        u2: shooter.u2(u0),
        mismatch: m.abs(),
        r,
        u,
        du,
        d2u,
        n: spec.n,
        k: spec.k,
    })
}

/// Residual of the rotation identity on a discrete solution `v`.
///
/// With `φ = x_i v_j − x_j v_i` formed from the discrete gradient, evaluates
/// `(L + G_v − Ψ_v) φ − (x_i Ψ_{x_j} − x_j Ψ_{x_i})` at each dof of `region`,
/// where `Ψ(x, v) = ψ^{1/k}(x, √v)` and `L = G^{st} ∂_st + G^s ∂_s` uses the
/// grid stencils. Dofs of `region` must be tagged `Interior` so that their
/// stencils reach no boundary crossing. Returns the largest absolute residual.
pub fn rotation_residual(
    spec: &ProblemSpec,
    domain: &GridDomain,
    v: &[f64],
    axes: (usize, usize),
    region: &[usize],
) -> Result<f64> {
    let (i, j) = axes;
    if i >= domain.n || j >= domain.n || i == j {
        bail_arg!("invalid axis pair ({i}, {j})");
    }
    if v.len() != domain.num_dofs() {
        bail_arg!("field has {} values, domain has {} dofs", v.len(), domain.num_dofs());
    }
    if let Some(&d) = region.iter().find(|&&d| domain.tag(d) != NodeTag::Interior) {
        bail_arg!("dof {d} is not an interior dof");
    }
    let phi: Vec<f64> = map_indices(domain.num_dofs(), |d| {
        let x = domain.point(d);
        let jet = domain.jet_at(v, d);
        x[i] * jet.dv[j] - x[j] * jet.dv[i]
    });
    let kf = spec.k as f64;
    let res: Vec<Result<f64>> = map_indices(region.len(), |m| {
        let d = region[m];
        let x = domain.point(d);
        let state = assemble_g(&domain.jet_at(v, d), spec.k)?;
        let st = domain.stencil(d);
        let n = domain.n;
        let lin = |f: &crate::grid::LinearForm| f.terms.iter().map(|&(q, c)| c * phi[q]).sum::<f64>();
        let mut l = 0.0;
        let mut idx = 0;
        for s in 0..n {
            for t in s..n {
                let mult = if s == t { 1.0 } else { 2.0 };
                l += mult * state.gst[(s, t)] * lin(&st.d2v[idx]);
                idx += 1;
            }
            l += state.gs[s] * lin(&st.dv[s]);
        }
        let u = v[d].sqrt();
        let (root, root_u) = spec.psi_root(&x, u);
        let big_psi_v = root_u / (2.0 * u);
        let p = spec.psi.value(&x, u);
        let px = spec.psi.d_x(&x, u);
        let big_psi_x = |a: usize| root / (kf * p) * px[a];
        Ok(l + (state.gv - big_psi_v) * phi[d] - (x[i] * big_psi_x(j) - x[j] * big_psi_x(i)))
    });
    let mut worst: f64 = 0.0;
    for r in res {
        worst = worst.max(r?.abs());
    }
    Ok(worst)
}
