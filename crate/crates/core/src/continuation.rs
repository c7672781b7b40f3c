//! The `ε → 0` sweep: solve on a decreasing schedule of levels, warm-starting
//! each solve from the previous one, and monitor interior stability on a fixed
//! probe region `Ω_{ε₀}`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, bail_domain, Result};
use crate::grid::{build_domain, GridDomain, ScalarField};
use crate::hypgeo::{curvature_frame, CurvatureFrame, GraphJet};
use crate::linalg::{dot, norm_sq, symmetric_eigen};
use crate::solver::{PathSolver, PathStatus, ProblemSpec, SolverOptions, SolverReport};

/// Decreasing levels `ε₁ > ε₂ > …` and the probe level `ε₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub eps_values: Vec<f64>,
    pub eps_floor: f64,
    /// Stability is measured on `{u̲ > probe_eps}`.
    pub probe_eps: f64,
}

impl EpsilonSchedule {
    /// Geometric schedule `first · ratioʲ` down to `floor`.
    pub fn geometric(first: f64, ratio: f64, floor: f64, probe_eps: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) || !(first > 0.0) || !(floor > 0.0) {
            bail_arg!("geometric schedule needs first > 0, floor > 0 and ratio in (0, 1)");
        }
        let mut eps_values = Vec::new();
        let mut e = first;
        while e >= floor * (1.0 - 1e-12) {
            eps_values.push(e);
            e *= ratio;
        }
        Ok(EpsilonSchedule { eps_values, eps_floor: floor, probe_eps })
    }

    pub fn validate(&self, max_ubar: f64) -> Result<()> {
        if self.eps_values.is_empty() {
            bail_arg!("empty epsilon schedule");
        }
        if self.eps_values.iter().any(|e| !(*e > 0.0)) {
            bail_arg!("epsilon values must be positive");
        }
        if self.eps_values.windows(2).any(|w| !(w[1] < w[0])) {
            bail_arg!("epsilon schedule must be strictly decreasing");
        }
        if !(self.eps_floor > 0.0) || self.eps_floor >= max_ubar {
            bail_domain!("eps floor {} is not below max of the subsolution ({max_ubar})", self.eps_floor);
        }
        if self.eps_values[0] >= max_ubar {
            bail_domain!("first eps {} is not below max of the subsolution ({max_ubar})", self.eps_values[0]);
        }
        if !(self.probe_eps < max_ubar) || self.probe_eps < self.eps_values[0] {
            bail_arg!("probe level must satisfy eps_1 <= probe_eps < max of the subsolution");
        }
        Ok(())
    }

    /// Levels at or above the floor.
    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        self.eps_values.iter().copied().filter(move |e| *e >= self.eps_floor)
    }
}

/// Grid spacing as a function of `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum HPolicy {
    Fixed { h: f64 },
    /// `h = min(h_max, ratio · ε)`.
    Proportional { ratio: f64, h_max: f64 },
}

impl HPolicy {
    pub fn h(&self, eps: f64) -> f64 {
        match *self {
            HPolicy::Fixed { h } => h,
            HPolicy::Proportional { ratio, h_max } => (ratio * eps).min(h_max),
        }
    }
}

/// Weights and geometry of the interior test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticOptions {
    pub alpha: f64,
    /// `None` selects `2α (max u)(max 1/ν^{n+1})³` at the first level.
    pub beta: Option<f64>,
    /// Centre of the ball `ρ = r² − |x − c|²`; `None` uses the
    /// subsolution's symmetry centre or the probe centroid.
    pub ball_center: Option<Vec<f64>>,
    /// `None` uses 0.9 of the probe's inscribed radius about the centre.
    pub ball_radius: Option<f64>,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        DiagnosticOptions { alpha: 1.0, beta: None, ball_center: None, ball_radius: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub solver: SolverOptions,
    pub h_policy: HPolicy,
    pub diagnostics: DiagnosticOptions,
    /// Try Newton on the target equation from the previous solution first.
    pub warm_start: bool,
}

/// Interior stability measures on the probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityDiagnostics {
    /// `max κ_max/(ν^{n+1} − a)`.
    pub m0: f64,
    pub a: f64,
    /// Max of `Θ` over the ball.
    pub theta_probe: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Max spectral norm of `D²u`.
    pub c2_interior: f64,
    /// `max |u^{ε_prev} − u^{ε}|`; `None` at the first level.
    pub cauchy_gap: Option<f64>,
    pub probe_points: usize,
}

/// `(X·ν/ν^{n+1}, φ)` for the conformal Killing field
/// `X = x_{n+1} Σ x_i ∂_i + ½(x_{n+1}² − |x|²) ∂_{n+1}` at the point
/// `p = (x, x_{n+1})`, where `φ = (x_{n+1}² + |x|²)/(2 x_{n+1})`.
pub fn killing_probe(frame: &CurvatureFrame, p: &[f64]) -> Result<(f64, f64)> {
    let n = frame.nu.len() - 1;
    if p.len() != n + 1 {
        bail_arg!("point has {} coordinates, expected {}", p.len(), n + 1);
    }
    if !(frame.nu_vert > 0.0) {
        bail_domain!("vertical normal component {} is not positive", frame.nu_vert);
    }
    let u = p[n];
    if !(u > 0.0) {
        bail_domain!("height {u} is not in the open half-space");
    }
    let x = &p[..n];
    let r2 = norm_sq(x);
    let x_dot_nu = u * dot(x, &frame.nu[..n]) + 0.5 * (u * u - r2) * frame.nu_vert;
    Ok((x_dot_nu / frame.nu_vert, (u * u + r2) / (2.0 * u)))
}

/// Pointwise data for the diagnostics.
#[derive(Clone, Debug)]
pub struct ProbeSample {
    pub x: Vec<f64>,
    pub jet: GraphJet,
}

/// Fixed parameters of the diagnostics, chosen at the first level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticCalibration {
    pub a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl DiagnosticCalibration {
    /// `a = ½ min ν^{n+1}`, `β = 2α (max u)(max 1/ν^{n+1})³` over the samples.
    pub fn from_samples(samples: &[ProbeSample], opts: &DiagnosticOptions, center: Vec<f64>, radius: f64) -> Result<Self> {
        let mut min_nu = f64::INFINITY;
        let mut max_u: f64 = 0.0;
        for s in samples {
            min_nu = min_nu.min(1.0 / s.jet.w());
            max_u = max_u.max(s.jet.u);
        }
        if samples.is_empty() {
            bail_domain!("probe region is empty");
        }
        let alpha = opts.alpha;
        let beta = opts.beta.unwrap_or(2.0 * alpha * max_u / (min_nu * min_nu * min_nu));
        Ok(DiagnosticCalibration { a: 0.5 * min_nu, alpha, beta, center, radius })
    }
}

/// `M₀`, `Θ` and `|D²u|` over the samples. `Θ` uses
/// `2 ln ρ + α (u/ν)² − β X·ν/ν + ln ln max(κ_max, e)` at points with `ρ > 0`.
pub fn diagnostics_from_samples(samples: &[ProbeSample], cal: &DiagnosticCalibration) -> Result<StabilityDiagnostics> {
    let mut m0 = f64::NEG_INFINITY;
    let mut theta = f64::NEG_INFINITY;
    let mut c2: f64 = 0.0;
    for s in samples {
        let frame = curvature_frame(&s.jet)?;
        let kmax = *frame.kappa.last().unwrap();
        let nu = frame.nu_vert;
        m0 = m0.max(kmax / (nu - cal.a));
        let eig = symmetric_eigen(&s.jet.d2u);
        c2 = c2.max(eig.values.iter().fold(0.0, |m: f64, v| m.max(v.abs())));

        let rel: Vec<f64> = s.x.iter().zip(&cal.center).map(|(a, b)| a - b).collect();
        let rho = cal.radius * cal.radius - norm_sq(&rel);
        if rho > 0.0 {
            let mut p = rel.clone();
            p.push(s.jet.u);
            let (x_nu, _) = killing_probe(&frame, &p)?;
            let u_nu = s.jet.u / nu;
            let val = 2.0 * rho.ln() + cal.alpha * u_nu * u_nu - cal.beta * x_nu
                + kmax.max(core::f64::consts::E).ln().ln();
            theta = theta.max(val);
        }
    }
    Ok(StabilityDiagnostics {
        m0,
        a: cal.a,
        theta_probe: theta,
        alpha: cal.alpha,
        beta: cal.beta,
        c2_interior: c2,
        cauchy_gap: None,
        probe_points: samples.len(),
    })
}

/// Solution record at one level.
#[derive(Clone, Debug)]
pub struct EpsilonSolution {
    pub eps: f64,
    pub domain: GridDomain,
    pub field: ScalarField,
    pub report: SolverReport,
    pub diagnostics: StabilityDiagnostics,
    pub warm_started: bool,
}

/// The whole sweep.
#[derive(Clone, Debug)]
pub struct ContinuationRun {
    pub levels: Vec<EpsilonSolution>,
    pub calibration: Option<DiagnosticCalibration>,
    /// Probe points (in the order used for `extrapolated`).
    pub probe_points: Vec<Vec<f64>>,
    /// Richardson extrapolant in `ε` from the last two levels; an estimate
    /// of the limit, not ground truth.
    pub extrapolated: Option<Vec<f64>>,
    pub failure: Option<String>,
}

/// Bilinear (multilinear) interpolation of a dof field at an arbitrary
/// point; `None` when a cell corner is not a dof.
pub fn interpolate(domain: &GridDomain, values: &[f64], x: &[f64]) -> Option<f64> {
    let n = domain.n;
    let h = domain.h;
    let base: Vec<i64> = x.iter().map(|&c| (c / h).floor() as i64).collect();
    let frac: Vec<f64> = x.iter().zip(&base).map(|(&c, &b)| c / h - b as f64).collect();
    let mut acc = 0.0;
    for corner in 0..(1usize << n) {
        let mut c = base.clone();
        let mut w = 1.0;
        for a in 0..n {
            if corner & (1 << a) != 0 {
                c[a] += 1;
                w *= frac[a];
            } else {
                w *= 1.0 - frac[a];
            }
        }
        if w == 0.0 {
            continue;
        }
        let node = domain.node_at(&c)?;
        acc += w * values[domain.dof(node)?];
    }
    Some(acc)
}

fn probe_samples(domain: &GridDomain, v: &[f64], probe: &[Vec<f64>]) -> Result<Vec<ProbeSample>> {
    let mut out = Vec::with_capacity(probe.len());
    for x in probe {
        let coords: Vec<i64> = x.iter().map(|c| (c / domain.h).round() as i64).collect();
        let d = domain
            .node_at(&coords)
            .and_then(|node| domain.dof(node))
            .ok_or_else(|| crate::error::Error::Domain(format!("probe point {x:?} is not a node of the level domain")))?;
        let jet = domain.jet_at(v, d).to_graph()?;
        out.push(ProbeSample { x: x.clone(), jet });
    }
    Ok(out)
}

/// Run the sweep. Failures truncate the sequence; completed levels are kept.
pub fn run_epsilon_path(base: &ProblemSpec, schedule: &EpsilonSchedule, opts: &ContinuationOptions) -> Result<ContinuationRun> {
    schedule.validate(base.sub.ubar.max_value())?;
    let mut run = ContinuationRun { levels: Vec::new(), calibration: None, probe_points: Vec::new(), extrapolated: None, failure: None };
    let mut prev: Option<(GridDomain, Vec<f64>)> = None;
    let mut prev_probe_u: Option<Vec<f64>> = None;

    for eps in schedule.levels() {
        let spec = base.with_eps(eps);
        let h = opts.h_policy.h(eps);
        let domain = match build_domain(&spec.sub, eps, h) {
            Ok(d) => d,
            Err(e) => {
                run.failure = Some(format!("domain build failed at eps = {eps}: {e}"));
                break;
            }
        };
        let solver = match PathSolver::new(&spec, &domain, opts.solver.clone()) {
            Ok(s) => s,
            Err(e) => {
                run.failure = Some(format!("setup failed at eps = {eps}: {e}"));
                break;
            }
        };

        // probe points are fixed by the first level's lattice
        if run.probe_points.is_empty() {
            run.probe_points = (0..domain.num_dofs())
                .map(|d| domain.point(d))
                .filter(|x| spec.sub.ubar.value(x) > schedule.probe_eps)
                .collect();
            if run.probe_points.is_empty() {
                run.failure = Some(String::from("probe region contains no grid nodes"));
                break;
            }
        }

        let mut warm = false;
        let mut outcome = None;
        if let (true, Some((pd, pv))) = (opts.warm_start, prev.as_ref()) {
            let ubar2 = solver.ubar_squared();
            let init: Vec<f64> = (0..domain.num_dofs())
                .map(|d| interpolate(pd, pv, &domain.point(d)).unwrap_or(ubar2[d]))
                .collect();
            let (v, log) = solver.solve_target_from(&init);
            if log.converged {
                warm = true;
                let rec = solver_record(&solver, v.clone(), log);
                outcome = Some(solver.finish(v, rec, 0, PathStatus::Completed));
            }
        }
        let (field, report) = match outcome.unwrap_or_else(|| solver.solve()) {
            Ok(x) => x,
            Err(e) => {
                run.failure = Some(format!("solve failed at eps = {eps}: {e}"));
                break;
            }
        };
        if !report.completed() {
            run.failure = Some(format!("path failure at eps = {eps}: {:?}", report.status));
            break;
        }

        let samples = match probe_samples(&domain, &field.values, &run.probe_points) {
            Ok(s) => s,
            Err(e) => {
                run.failure = Some(format!("probe evaluation failed at eps = {eps}: {e}"));
                break;
            }
        };
        if run.calibration.is_none() {
            let dopts = &opts.diagnostics;
            let center = dopts
                .ball_center
                .clone()
                .or_else(|| spec.sub.ubar.radial_center().filter(|c| c.len() == spec.n))
                .unwrap_or_else(|| centroid(&run.probe_points));
            let radius = dopts.ball_radius.unwrap_or_else(|| 0.9 * inscribed_radius(&domain, &run.probe_points, &center));
            run.calibration = Some(DiagnosticCalibration::from_samples(&samples, dopts, center, radius)?);
        }
        let mut diag = diagnostics_from_samples(&samples, run.calibration.as_ref().unwrap())?;
        let probe_u: Vec<f64> = samples.iter().map(|s| s.jet.u).collect();
        if let Some(pu) = &prev_probe_u {
            diag.cauchy_gap = Some(pu.iter().zip(&probe_u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
        if let (Some(pu), Some(last)) = (&prev_probe_u, run.levels.last()) {
            let (e1, e2) = (last.eps, eps);
            run.extrapolated = Some(pu.iter().zip(&probe_u).map(|(a, b)| (e1 * b - e2 * a) / (e1 - e2)).collect());
        }
        prev_probe_u = Some(probe_u);
        prev = Some((domain.clone(), field.values.clone()));
        run.levels.push(EpsilonSolution { eps, domain, field, report, diagnostics: diag, warm_started: warm });
    }
    Ok(run)
}

fn solver_record(solver: &PathSolver<'_>, v: Vec<f64>, log: crate::solver::NewtonLog) -> Vec<crate::solver::StepRecord> {
    let comparison_min = v.iter().zip(&solver.ubar).map(|(a, b)| a.sqrt() - b).fold(f64::INFINITY, f64::min);
    let min_margin = (0..v.len())
        .map(|d| crate::voper::convexity_margin_v(&solver.domain.jet_at(&v, d)))
        .fold(f64::INFINITY, f64::min);
    vec![crate::solver::StepRecord {
        stage: 2,
        t: 1.0,
        eps: solver.domain.eps,
        accepted: true,
        newton: log,
        min_convexity_margin: min_margin,
        min_cone_margin: f64::NAN,
        comparison_min,
        linearization_max: None,
    }]
}

fn centroid(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points[0].len();
    let mut c = vec![0.0; n];
    for p in points {
        for a in 0..n {
            c[a] += p[a];
        }
    }
    c.iter().map(|x| x / points.len() as f64).collect()
}

// Distance from `center` to the nearest lattice node outside the probe.
fn inscribed_radius(domain: &GridDomain, probe: &[Vec<f64>], center: &[f64]) -> f64 {
    let h = domain.h;
    let inside = |x: &[f64]| probe.iter().any(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() < 0.25 * h));
    let mut r = f64::INFINITY;
    for node in 0..domain.num_nodes() {
        let x = domain.node_point(node);
        if !inside(&x) {
            let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            r = r.min(d2.sqrt());
        }
    }
    r
}
