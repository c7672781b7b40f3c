//! Dirichlet solver for fixed `ε`: damped Newton with the exact Jacobian of
//! the discrete operator, driven along the two-stage continuity path.
//!
//! Stage 1 solves `G[v] = θ(x, t) u` with
//! `θ = ((1 − t) u̲/G[u̲] + t/δ)⁻¹`, starting from `v = u̲²` at `t = 0`.
//! Stage 2 solves `G[v] = ((1 − t)/(δ u) + t ψ^{−1/k}(x, u))⁻¹`, ending at
//! the target `G[v] = ψ^{1/k}(x, u)`. Throughout, `u = √v`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, Error, Result};
use crate::families::Psi;
use crate::grid::{build_domain, GridDomain, NodeTag, ScalarField, SubsolutionSpec};
use crate::hypgeo::{curvature_frame, is_strictly_convex};
use crate::linalg::norm_sq;
use crate::par::map_indices;
use crate::sparse::{BandLu, CsrMatrix};
use crate::symfunc::{cone_margin, f_eval};
use crate::voper::{assemble_g, convexity_margin_v, g_value, monotonicity_check};

/// `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The problem data for one `ε`.
#[derive(Clone)]
pub struct ProblemSpec {
    pub n: usize,
    pub k: usize,
    pub psi: Arc<dyn Psi>,
    pub sub: SubsolutionSpec,
    pub eps: f64,
    /// Barrier curvature `σ ∈ (0, 1)` with `ψ > σ_k(σ, …, σ)`.
    pub sigma: f64,
}

impl core::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("n", &self.n)
            .field("k", &self.k)
            .field("eps", &self.eps)
            .field("sigma", &self.sigma)
            .field("sub", &self.sub)
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(n: usize, k: usize, psi: Arc<dyn Psi>, sub: SubsolutionSpec, eps: f64, sigma: f64) -> Result<Self> {
        if n < 2 {
            bail_arg!("dimension n = {n} must be at least 2");
        }
        if k == 0 || k > n {
            bail_arg!("order k = {k} must satisfy 1 <= k <= n = {n}");
        }
        if sub.dim() != n {
            bail_arg!("subsolution has dimension {}, problem has {n}", sub.dim());
        }
        if !(eps > 0.0) {
            bail_arg!("eps must be positive, got {eps}");
        }
        if !(sigma > 0.0 && sigma < 1.0) {
            bail_arg!("barrier sigma must lie in (0, 1), got {sigma}");
        }
        Ok(ProblemSpec { n, k, psi, sub, eps, sigma })
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        let mut s = self.clone();
        s.eps = eps;
        s
    }

    /// `ψ^{1/k}` and its `u`-derivative.
    pub fn psi_root(&self, x: &[f64], u: f64) -> (f64, f64) {
        let p = self.psi.value(x, u);
        let kf = self.k as f64;
        let r = p.powf(1.0 / kf);
        (r, r / (kf * p) * self.psi.d_u(x, u))
    }
}

/// Step and tolerance controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol_newton: f64,
    pub tau_guard: f64,
    pub max_newton: usize,
    pub max_halvings: usize,
    pub armijo: f64,
    pub t_start: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub predictor: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_newton: 1e-10,
            tau_guard: 1e-8,
            max_newton: 40,
            max_halvings: 30,
            armijo: 1e-4,
            t_start: 0.1,
            t_min: 1e-4,
            t_max: 0.25,
            predictor: true,
        }
    }
}

/// Continuity stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

/// Right-hand side of the path equation at one point, and its `u`-derivative.
///
/// `ubar_over_gbar` is `u̲/G[u̲]` at the point and is only used by stage 1.
pub fn rhs(
    stage: Stage,
    t: f64,
    x: &[f64],
    u: f64,
    spec: &ProblemSpec,
    delta: f64,
    ubar_over_gbar: f64,
) -> (f64, f64) {
    match stage {
        Stage::One => {
            let theta = 1.0 / ((1.0 - t) * ubar_over_gbar + t / delta);
            (theta * u, theta)
        }
        Stage::Two => {
            let (p, p_u) = spec.psi_root(x, u);
            let d = (1.0 - t) / (delta * u) + t / p;
            let d_u = -(1.0 - t) / (delta * u * u) - t * p_u / (p * p);
            (1.0 / d, -d_u / (d * d))
        }
    }
}

/// Outcome of a Newton solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonLog {
    pub iterations: usize,
    /// Max-norm residual before each iteration and after the last.
    pub residuals: Vec<f64>,
    pub damping: Vec<f64>,
    pub converged: bool,
    pub message: Option<String>,
}

/// One attempted path state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: u8,
    pub t: f64,
    pub eps: f64,
    pub accepted: bool,
    pub newton: NewtonLog,
    pub min_convexity_margin: f64,
    pub min_cone_margin: f64,
    /// `min (u − u̲)` over dofs.
    pub comparison_min: f64,
    /// Stage 1 only: `max (G_u − θ)` over interior dofs.
    pub linearization_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub slack: f64,
    pub ok: bool,
}

impl BoundCheck {
    fn new(name: &str, value: f64, bound: f64, slack: f64) -> Self {
        BoundCheck { name: String::from(name), value, bound, slack, ok: value <= bound + slack }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PathStatus {
    Completed,
    Failed { stage: u8, last_good_t: f64, attempted_t: f64, reason: String },
}

/// Telemetry of a full two-stage solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub eps: f64,
    pub h: f64,
    pub n_dofs: usize,
    pub delta: f64,
    pub status: PathStatus,
    pub steps: Vec<StepRecord>,
    /// Newton iterations of stage 1 at `t = 0` from `u̲²`.
    pub t0_iterations: usize,
    pub bounds: Vec<BoundCheck>,
    pub subsolution: SubsolutionCheck,
    pub events: Vec<String>,
    pub final_residual: f64,
}

impl SolverReport {
    pub fn completed(&self) -> bool {
        self.status == PathStatus::Completed
    }

    pub fn bounds_ok(&self) -> bool {
        self.bounds.iter().all(|b| b.ok)
    }

    pub fn accepted(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(|s| s.accepted)
    }
}

/// Sampled validation of the subsolution on the domain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionCheck {
    pub min_convexity_margin: f64,
    /// `min (f(κ[u̲]) − ψ^{1/k}(x, u̲))`.
    pub min_subsolution_gap: f64,
    pub witness: Vec<f64>,
    /// `min ψ(x, u̲) − σ_k(σ, …, σ)`.
    pub min_barrier_gap: f64,
}

/// `max u ≤ √(ε² + diam(Ω)²)` uses this diameter estimate of `{u̲ > 0}`.
pub fn domain_diameter(sub: &SubsolutionSpec, h: f64) -> Result<f64> {
    let floor = 1e-12 * sub.ubar.max_value();
    let dom = build_domain(sub, floor, h)?;
    let pts: Vec<&Vec<f64>> = dom.crossings.iter().map(|c| &c.point).collect();
    let mut d2: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let s: f64 = pts[i].iter().zip(pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d2 = d2.max(s);
        }
    }
    Ok(d2.sqrt())
}

/// Largest radius `r₀` such that every boundary point of `Ω_ε` touches an
/// exterior ball of that radius, estimated from the sampled crossings.
/// Infinite for convex domains.
pub fn exterior_ball_radius(domain: &GridDomain, sub: &SubsolutionSpec) -> f64 {
    let pts: Vec<&Vec<f64>> = domain.crossings.iter().map(|c| &c.point).collect();
    let tol = 1e-9 * domain.h;
    let mut r0 = f64::INFINITY;
    for p in &pts {
        let g = sub.ubar.gradient(p);
        let gn = norm_sq(&g).sqrt();
        let nrm: Vec<f64> = g.iter().map(|x| -x / gn).collect();
        for q in &pts {
            let d: Vec<f64> = q.iter().zip(p.iter()).map(|(a, b)| a - b).collect();
            let dn: f64 = d.iter().zip(&nrm).map(|(a, b)| a * b).sum();
            if dn > tol {
                r0 = r0.min(norm_sq(&d) / (2.0 * dn));
            }
        }
    }
    r0
}

/// Precomputed state shared by all solves on one domain.
pub struct PathSolver<'a> {
    pub spec: &'a ProblemSpec,
    pub domain: &'a GridDomain,
    pub opts: SolverOptions,
    pub delta: f64,
    /// `u̲` at the dofs.
    pub ubar: Vec<f64>,
    /// Discrete `G[u̲²]` at the dofs.
    pub gbar: Vec<f64>,
    points: Vec<Vec<f64>>,
}

struct Eval {
    residual: Vec<f64>,
    min_margin: f64,
    min_cone: f64,
    cone_ok: bool,
}

/// `δ = ½ min G[u̲]/u̲` over the dofs.
pub fn calibrate_delta(spec: &ProblemSpec, domain: &GridDomain) -> Result<f64> {
    let (ubar, gbar) = discrete_subsolution(spec, domain)?;
    Ok(delta_from(&ubar, &gbar))
}

fn delta_from(ubar: &[f64], gbar: &[f64]) -> f64 {
    0.5 * ubar.iter().zip(gbar).map(|(u, g)| g / u).fold(f64::INFINITY, f64::min)
}

// u̲ and the discrete operator applied to u̲² at every dof.
fn discrete_subsolution(spec: &ProblemSpec, domain: &GridDomain) -> Result<(Vec<f64>, Vec<f64>)> {
    let nd = domain.num_dofs();
    let ubar: Vec<f64> = (0..nd).map(|d| spec.sub.ubar.value(&domain.point(d))).collect();
    let v: Vec<f64> = ubar.iter().map(|u| u * u).collect();
    let mut gbar = Vec::with_capacity(nd);
    for d in 0..nd {
        let jet = domain.jet_at(&v, d);
        let m = convexity_margin_v(&jet);
        let (g, cone_ok) = g_value(&jet, spec.k)?;
        if !(m > 0.0) || !cone_ok || !(g > 0.0) {
            return Err(Error::InvalidSubsolution(format!(
                "subsolution is not strictly convex at {:?} (margin {m:e}, G = {g})",
                domain.point(d)
            )));
        }
        gbar.push(g);
    }
    Ok((ubar, gbar))
}

/// Check convexity, the subsolution inequality and the barrier condition
/// with the analytic jets of `u̲` at the dofs.
pub fn check_subsolution(spec: &ProblemSpec, domain: &GridDomain) -> Result<SubsolutionCheck> {
    let mut out = SubsolutionCheck {
        min_convexity_margin: f64::INFINITY,
        min_subsolution_gap: f64::INFINITY,
        witness: Vec::new(),
        min_barrier_gap: f64::INFINITY,
    };
    let sk_sigma = binomial(spec.n, spec.k) * spec.sigma.powi(spec.k as i32);
    for d in 0..domain.num_dofs() {
        let x = domain.point(d);
        let jet = spec.sub.ubar.jet(&x)?;
        let (_, margin) = is_strictly_convex(&jet);
        out.min_convexity_margin = out.min_convexity_margin.min(margin);
        let frame = curvature_frame(&jet)?;
        let f = f_eval(&frame.kappa, spec.k)?.f;
        let gap = f - spec.psi_root(&x, jet.u).0;
        if gap < out.min_subsolution_gap {
            out.min_subsolution_gap = gap;
            out.witness = x.clone();
        }
        out.min_barrier_gap = out.min_barrier_gap.min(spec.psi.value(&x, jet.u) - sk_sigma);
    }
    Ok(out)
}

impl<'a> PathSolver<'a> {
    pub fn new(spec: &'a ProblemSpec, domain: &'a GridDomain, opts: SolverOptions) -> Result<Self> {
        if domain.n != spec.n {
            bail_arg!("domain dimension {} differs from problem dimension {}", domain.n, spec.n);
        }
        let (ubar, gbar) = discrete_subsolution(spec, domain)?;
        let delta = delta_from(&ubar, &gbar);
        if !(delta > 0.0) {
            return Err(Error::InvalidSubsolution(format!("calibrated delta = {delta} is not positive")));
        }
        let points = (0..domain.num_dofs()).map(|d| domain.point(d)).collect();
        Ok(PathSolver { spec, domain, opts, delta, ubar, gbar, points })
    }

    pub fn ubar_squared(&self) -> Vec<f64> {
        self.ubar.iter().map(|u| u * u).collect()
    }

    fn rhs_at(&self, stage: Stage, t: f64, d: usize, u: f64) -> (f64, f64) {
        rhs(stage, t, &self.points[d], u, self.spec, self.delta, self.ubar[d] / self.gbar[d])
    }

    /// Residual `G[v] − rhs` with guards; `None` if some `v ≤ 0`.
    fn evaluate(&self, stage: Stage, t: f64, v: &[f64]) -> Option<Eval> {
        if v.iter().any(|x| !(*x > 0.0)) {
            return None;
        }
        let k = self.spec.k;
        let per: Vec<Option<(f64, f64, f64, bool)>> = map_indices(v.len(), |d| {
            let jet = self.domain.jet_at(v, d);
            let margin = convexity_margin_v(&jet);
            let st = assemble_g(&jet, k).ok()?;
            let r = st.g - self.rhs_at(stage, t, d, v[d].sqrt()).0;
            Some((r, margin, cone_margin(&st.kappa, k), st.cone_ok))
        });
        let mut e = Eval { residual: Vec::with_capacity(v.len()), min_margin: f64::INFINITY, min_cone: f64::INFINITY, cone_ok: true };
        for p in per {
            let (r, m, c, ok) = p?;
            e.residual.push(r);
            e.min_margin = e.min_margin.min(m);
            e.min_cone = e.min_cone.min(c);
            e.cone_ok &= ok;
        }
        Some(e)
    }

    fn jacobian(&self, stage: Stage, t: f64, v: &[f64]) -> Result<CsrMatrix> {
        let n = self.domain.n;
        let k = self.spec.k;
        let rows: Vec<Result<Vec<(usize, f64)>>> = map_indices(v.len(), |d| {
            let jet = self.domain.jet_at(v, d);
            let st = assemble_g(&jet, k)?;
            let sten = self.domain.stencil(d);
            let mut row = Vec::with_capacity(16);
            for s in 0..n {
                for &(j, w) in &sten.dv[s].terms {
                    row.push((j, st.gs[s] * w));
                }
            }
            let mut m = 0;
            for s in 0..n {
                for q in s..n {
                    let c = if s == q { st.gst[(s, q)] } else { 2.0 * st.gst[(s, q)] };
                    for &(j, w) in &sten.d2v[m].terms {
                        row.push((j, c * w));
                    }
                    m += 1;
                }
            }
            let u = v[d].sqrt();
            let rhs_v = self.rhs_at(stage, t, d, u).1 / (2.0 * u);
            row.push((d, st.gv - rhs_v));
            Ok(row)
        });
        let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(CsrMatrix::from_rows(rows))
    }

    /// Damped Newton on the path equation at `(stage, t)` from `init`.
    pub fn newton_solve(&self, stage: Stage, t: f64, init: &[f64]) -> (Vec<f64>, NewtonLog) {
        let o = &self.opts;
        let mut log = NewtonLog { iterations: 0, residuals: Vec::new(), damping: Vec::new(), converged: false, message: None };
        let mut v = init.to_vec();
        let mut ev = match self.evaluate(stage, t, &v) {
            Some(e) if e.min_margin > o.tau_guard && e.cone_ok => e,
            _ => {
                log.message = Some(String::from("initial guess violates the convexity guard"));
                return (v, log);
            }
        };
        loop {
            let rmax = max_abs(&ev.residual);
            log.residuals.push(rmax);
            if rmax <= o.tol_newton {
                log.converged = true;
                return (v, log);
            }
            if log.iterations >= o.max_newton {
                log.message = Some(format!("no convergence in {} iterations", o.max_newton));
                return (v, log);
            }
            let jac = match self.jacobian(stage, t, &v) {
                Ok(j) => j,
                Err(e) => {
                    log.message = Some(format!("{e}"));
                    return (v, log);
                }
            };
            let lu = match BandLu::factor(&jac) {
                Ok(lu) => lu,
                Err(e) => {
                    log.message = Some(format!("{e}"));
                    return (v, log);
                }
            };
            let neg: Vec<f64> = ev.residual.iter().map(|r| -r).collect();
            let step = lu.solve(&neg);
            let r2 = l2(&ev.residual);
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=o.max_halvings {
                let trial: Vec<f64> = v.iter().zip(&step).map(|(a, b)| a + lambda * b).collect();
                if let Some(e) = self.evaluate(stage, t, &trial) {
                    if e.min_margin > o.tau_guard && e.cone_ok && l2(&e.residual) <= (1.0 - o.armijo * lambda) * r2 {
                        accepted = Some((trial, e));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            log.iterations += 1;
            match accepted {
                Some((trial, e)) => {
                    log.damping.push(lambda);
                    v = trial;
                    ev = e;
                }
                None => {
                    log.message = Some(String::from("line search failed"));
                    return (v, log);
                }
            }
        }
    }

    fn record(&self, stage: Stage, t: f64, v: &[f64], log: NewtonLog, accepted: bool) -> StepRecord {
        let (min_margin, min_cone) = match self.evaluate(stage, t, v) {
            Some(e) => (e.min_margin, e.min_cone),
            None => (f64::NAN, f64::NAN),
        };
        let comparison_min = v.iter().zip(&self.ubar).map(|(v, ub)| v.sqrt() - ub).fold(f64::INFINITY, f64::min);
        let linearization_max = if accepted && stage == Stage::One { Some(self.linearization_max(t, v)) } else { None };
        StepRecord {
            stage: stage.number(),
            t,
            eps: self.domain.eps,
            accepted,
            newton: log,
            min_convexity_margin: min_margin,
            min_cone_margin: min_cone,
            comparison_min,
            linearization_max,
        }
    }

    /// `max (G_u − θ)` over interior dofs for a stage-1 state.
    pub fn linearization_max(&self, t: f64, v: &[f64]) -> f64 {
        let k = self.spec.k;
        let vals: Vec<f64> = map_indices(v.len(), |d| {
            if self.domain.tag(d) != NodeTag::Interior {
                return f64::NEG_INFINITY;
            }
            let theta = self.rhs_at(Stage::One, t, d, 1.0).1;
            let jet = self.domain.jet_at(v, d);
            monotonicity_check(&jet, theta, k).map(|m| m.value).unwrap_or(f64::INFINITY)
        });
        vals.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Advance one stage from `t = 0` (where `v0` must already solve the
    /// equation) to `t = 1`. Returns the last accepted field.
    pub fn run_stage(&self, stage: Stage, v0: Vec<f64>, steps: &mut Vec<StepRecord>) -> (Vec<f64>, Option<PathStatus>) {
        let o = &self.opts;
        let mut t = 0.0;
        let mut dt = o.t_start;
        let mut hist: Vec<(f64, Vec<f64>)> = vec![(0.0, v0)];
        while t < 1.0 {
            let t_try = (t + dt).min(1.0);
            let cur = &hist.last().unwrap().1;
            let mut init = cur.clone();
            if o.predictor && hist.len() >= 2 {
                let (t1, v1) = &hist[hist.len() - 1];
                let (t0, v0) = &hist[hist.len() - 2];
                let s = (t_try - t1) / (t1 - t0);
                let pred: Vec<f64> = v1.iter().zip(v0).map(|(a, b)| a + s * (a - b)).collect();
                if let Some(e) = self.evaluate(stage, t_try, &pred) {
                    if e.min_margin > o.tau_guard && e.cone_ok {
                        init = pred;
                    }
                }
            }
            let (v, log) = self.newton_solve(stage, t_try, &init);
            if log.converged {
                steps.push(self.record(stage, t_try, &v, log, true));
                t = t_try;
                hist.push((t, v));
                if hist.len() > 2 {
                    hist.remove(0);
                }
                dt = (2.0 * dt).min(o.t_max);
            } else {
                let reason = log.message.clone().unwrap_or_default();
                steps.push(self.record(stage, t_try, &v, log, false));
                dt *= 0.5;
                if dt < o.t_min {
                    let last = hist.pop().unwrap().1;
                    return (
                        last,
                        Some(PathStatus::Failed { stage: stage.number(), last_good_t: t, attempted_t: t_try, reason }),
                    );
                }
            }
        }
        (hist.pop().unwrap().1, None)
    }

    /// Stage 1 at `t = 0` from `init`, then both stages.
    pub fn solve_from(&self, init: &[f64]) -> (Vec<f64>, Vec<StepRecord>, usize, PathStatus) {
        let mut steps = Vec::new();
        let (v0, log) = self.newton_solve(Stage::One, 0.0, init);
        let t0_iters = log.iterations;
        let ok = log.converged;
        let reason = log.message.clone().unwrap_or_default();
        steps.push(self.record(Stage::One, 0.0, &v0, log, ok));
        if !ok {
            let st = PathStatus::Failed { stage: 1, last_good_t: 0.0, attempted_t: 0.0, reason };
            return (init.to_vec(), steps, t0_iters, st);
        }
        let (v1, fail) = self.run_stage(Stage::One, v0, &mut steps);
        if let Some(st) = fail {
            return (v1, steps, t0_iters, st);
        }
        let (v2, fail) = self.run_stage(Stage::Two, v1, &mut steps);
        (v2, steps, t0_iters, fail.unwrap_or(PathStatus::Completed))
    }

    /// Newton directly on the target equation (stage 2, `t = 1`).
    pub fn solve_target_from(&self, init: &[f64]) -> (Vec<f64>, NewtonLog) {
        self.newton_solve(Stage::Two, 1.0, init)
    }

    /// Full solve with report.
    pub fn solve(&self) -> Result<(ScalarField, SolverReport)> {
        let init = self.ubar_squared();
        let (v, steps, t0_iterations, status) = self.solve_from(&init);
        self.finish(v, steps, t0_iterations, status)
    }

    /// Build the report for a final field: bound checks, events and residual.
    pub fn finish(
        &self,
        v: Vec<f64>,
        steps: Vec<StepRecord>,
        t0_iterations: usize,
        status: PathStatus,
    ) -> Result<(ScalarField, SolverReport)> {
        let subsolution = check_subsolution(self.spec, self.domain)?;
        let mut events = self.domain.warnings.clone();
        if subsolution.min_subsolution_gap < -1e-8 {
            events.push(format!(
                "subsolution inequality fails by {:e} at {:?}",
                -subsolution.min_subsolution_gap, subsolution.witness
            ));
        }
        if subsolution.min_barrier_gap <= 0.0 {
            events.push(format!("psi does not exceed sigma_k(sigma, ..., sigma); gap {:e}", subsolution.min_barrier_gap));
        }
        for s in steps.iter().filter(|s| s.accepted) {
            if !(s.min_convexity_margin > self.opts.tau_guard) {
                events.push(format!("convexity margin {:e} at stage {} t = {}", s.min_convexity_margin, s.stage, s.t));
            }
            if s.comparison_min < -10.0 * self.opts.tol_newton {
                events.push(format!("comparison u >= ubar fails by {:e} at stage {} t = {}", -s.comparison_min, s.stage, s.t));
            }
            if let Some(l) = s.linearization_max {
                if !(l < 0.0) {
                    events.push(format!("linearization sign {l:e} at stage 1 t = {}", s.t));
                }
            }
        }
        let final_residual = match status {
            PathStatus::Completed => self
                .evaluate(Stage::Two, 1.0, &v)
                .map(|e| max_abs(&e.residual))
                .unwrap_or(f64::INFINITY),
            _ => f64::NAN,
        };
        let bounds = if status == PathStatus::Completed { self.bound_checks(&v)? } else { Vec::new() };
        let report = SolverReport {
            eps: self.domain.eps,
            h: self.domain.h,
            n_dofs: self.domain.num_dofs(),
            delta: self.delta,
            status,
            steps,
            t0_iterations,
            bounds,
            subsolution,
            events,
            final_residual,
        };
        Ok((ScalarField::new("v", v), report))
    }

    /// C⁰, C¹ and boundary gradient checks on a converged field.
    pub fn bound_checks(&self, v: &[f64]) -> Result<Vec<BoundCheck>> {
        let dom = self.domain;
        let h = dom.h;
        let eps = dom.eps;
        let tol = self.opts.tol_newton;
        let n = dom.n;

        let u: Vec<f64> = v.iter().map(|x| x.sqrt()).collect();
        let w: Vec<f64> = (0..v.len())
            .map(|d| {
                let jet = dom.jet_at(v, d);
                (1.0 + norm_sq(&jet.dv) / (4.0 * v[d])).sqrt()
            })
            .collect();
        let max_u = u.iter().cloned().fold(0.0, f64::max);
        let max_w = w.iter().cloned().fold(0.0, f64::max);

        let diam = domain_diameter(&self.spec.sub, h)?;
        let c0 = BoundCheck::new("c0_upper", max_u, (eps * eps + diam * diam).sqrt(), 10.0 * tol);
        let lower = u.iter().zip(&self.ubar).map(|(a, b)| b - a).fold(f64::NEG_INFINITY, f64::max);
        let c0_lower = BoundCheck::new("c0_lower", lower, 0.0, 10.0 * tol);

        let bdry: Vec<usize> = (0..v.len()).filter(|&d| dom.tag(d) == NodeTag::BoundaryAdjacent).collect();
        let max_w_bdry = bdry.iter().map(|&d| w[d]).fold(0.0, f64::max);
        let uw_int = (0..v.len())
            .filter(|&d| dom.tag(d) == NodeTag::Interior)
            .map(|d| u[d] * w[d])
            .fold(0.0, f64::max);
        let c1 = BoundCheck::new("c1_interior", uw_int, (eps * max_w_bdry).max(max_u), h * max_w * max_w);

        let sigma = self.spec.sigma;
        let r0 = exterior_ball_radius(dom, &self.spec.sub);
        let denom = if r0.is_finite() {
            sigma - (1.0 - sigma * sigma).sqrt() * eps / r0 - (1.0 + sigma) * eps * eps / (r0 * r0)
        } else {
            sigma
        };
        let grad_bound = if denom > 0.0 { 1.0 / denom } else { f64::INFINITY };
        let grad = BoundCheck::new("boundary_gradient", max_w_bdry, grad_bound, 10.0 * h * grad_bound.min(1e6));
        let _ = n;
        Ok(vec![c0, c0_lower, c1, grad])
    }
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solve the Dirichlet problem on a prepared domain along both stages.
pub fn solve_dirichlet(spec: &ProblemSpec, domain: &GridDomain, opts: &SolverOptions) -> Result<(ScalarField, SolverReport)> {
    PathSolver::new(spec, domain, opts.clone())?.solve()
}

/// Newton on the path equation at `(stage, t)` from `init`.
pub fn newton_solve(
    spec: &ProblemSpec,
    domain: &GridDomain,
    opts: &SolverOptions,
    stage: Stage,
    t: f64,
    init: &ScalarField,
) -> Result<(ScalarField, NewtonLog)> {
    let ps = PathSolver::new(spec, domain, opts.clone())?;
    let (v, log) = ps.newton_solve(stage, t, &init.values);
    Ok((ScalarField::new("v", v), log))
}

/// Result of re-running stage 1 from a perturbed start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessProbe {
    pub max_difference: f64,
    pub converged: bool,
    pub ok: bool,
}

/// Re-run stage 1 starting from `u̲² + η(u̲² − ε²)` and compare the `t = 1`
/// endpoint with the one reached from `u̲²`.
pub fn uniqueness_probe(spec: &ProblemSpec, domain: &GridDomain, opts: &SolverOptions, eta: f64) -> Result<UniquenessProbe> {
    let ps = PathSolver::new(spec, domain, opts.clone())?;
    let base = ps.ubar_squared();
    let mut steps = Vec::new();
    let (r0, _) = ps.newton_solve(Stage::One, 0.0, &base);
    let (reference, fail_ref) = ps.run_stage(Stage::One, r0, &mut steps);

    let e2 = domain.eps * domain.eps;
    let bumped: Vec<f64> = base.iter().map(|v| v + eta * (v - e2)).collect();
    let (p0, log0) = ps.newton_solve(Stage::One, 0.0, &bumped);
    let (probe, fail_probe) = ps.run_stage(Stage::One, p0, &mut steps);
    let converged = log0.converged && fail_ref.is_none() && fail_probe.is_none();
    let max_difference = reference.iter().zip(&probe).map(|(a, b)| (a.sqrt() - b.sqrt()).abs()).fold(0.0, f64::max);
    Ok(UniquenessProbe { max_difference, converged, ok: converged && max_difference <= 10.0 * opts.tol_newton })
}
