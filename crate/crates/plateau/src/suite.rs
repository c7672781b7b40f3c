//! Randomized property suite behind `plateau verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use plateau_core::grid::{build_domain, GridDomain, ScalarField};
use plateau_core::hypgeo::{check_identities, curvature_frame, is_strictly_convex, GraphJet};
use plateau_core::linalg::Mat;
use plateau_core::solver::{solve_dirichlet, ProblemSpec, SolverReport};
use plateau_core::verify::{
    boundary_distance, cap_field, check_conditions, interior_samples, lemma_b_max_radius, lemma_b_test,
    radial_oracle, BarrierSphere, HypothesisReport, LemmaBOutcome, Orientation,
};
use plateau_core::voper::{convexity_margin_v, jacobian_check, VJet};

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// Failure makes the suite fail.
    Asserted,
    /// Reported only.
    Informational,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    pub passed: bool,
    /// Worst measured value.
    pub value: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub detail: String,
    /// First failing input, when there is one.
    pub witness: Option<String>,
}

impl CheckResult {
    fn asserted(name: &str, value: f64, tolerance: f64, samples: usize, detail: String, witness: Option<String>) -> Self {
        CheckResult {
            name: name.into(),
            kind: CheckKind::Asserted,
            passed: value <= tolerance && witness.is_none(),
            value,
            tolerance,
            samples,
            detail,
            witness,
        }
    }

    fn info(name: &str, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            kind: CheckKind::Informational,
            passed: true,
            value: f64::NAN,
            tolerance: f64::NAN,
            samples: 0,
            detail,
            witness: None,
        }
    }

    fn skipped(name: &str, detail: String) -> Self {
        CheckResult { kind: CheckKind::Skipped, ..Self::info(name, detail) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub hypotheses: Option<HypothesisReport>,
    pub solver: Option<SolverReport>,
}

impl SuiteReport {
    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.kind == CheckKind::Asserted && !c.passed)
    }
}

fn random_symmetric<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Mat {
    Mat::from_fn(n, |_, _| rng.random_range(-scale..scale)).symmetrized()
}

fn random_convex_graph_jet<R: Rng>(rng: &mut R, n: usize) -> GraphJet {
    loop {
        let u = rng.random_range(0.2..2.0);
        let du: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let d2u = random_symmetric(rng, n, 2.0);
        if let Ok(jet) = GraphJet::new(u, du, d2u) {
            if is_strictly_convex(&jet).1 > 0.05 {
                return jet;
            }
        }
    }
}

fn random_convex_vjet<R: Rng>(rng: &mut R, n: usize) -> VJet {
    loop {
        let v = rng.random_range(0.05..3.0);
        let dv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d2v = random_symmetric(rng, n, 3.0);
        if let Ok(jet) = VJet::new(v, dv, d2v) {
            if convexity_margin_v(&jet) > 0.05 {
                return jet;
            }
        }
    }
}

fn random_direction<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if l > 0.1 && l <= 1.0 {
            return d.into_iter().map(|x| x / l).collect();
        }
    }
}

/// Analytic barrier caps have all principal curvatures equal to `σ`.
fn cap_curvature(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> CheckResult {
    let n = cfg.problem.n;
    let per = cfg.verify.curvature_samples;
    let mut worst: f64 = 0.0;
    let mut witness = None;
    let mut count = 0;
    for sigma in [0.25, 0.5, 0.9] {
        for orientation in [Orientation::Outward, Orientation::Inward] {
            let s = match BarrierSphere::new(vec![0.1; n], sigma, 1.3, orientation) {
                Ok(s) => s,
                Err(e) => return CheckResult::asserted("cap_curvature", f64::INFINITY, 0.0, 0, e.to_string(), None),
            };
            let foot = s.footprint_radius();
            let (lo, hi) = match orientation {
                Orientation::Outward => (0.0, 0.98 * foot),
                Orientation::Inward => (foot + 0.02 * (s.radius - foot), s.radius - 0.02 * (s.radius - foot)),
            };
            for _ in 0..per {
                let r = rng.random_range(lo..hi);
                let x: Vec<f64> = random_direction(rng, n).iter().map(|d| 0.1 + r * d).collect();
                let err = cap_field(&s, &x)
                    .and_then(|j| curvature_frame(&j))
                    .map(|f| f.kappa.iter().map(|k| (k - sigma).abs()).fold(0.0, f64::max))
                    .unwrap_or(f64::INFINITY);
                count += 1;
                if err > worst {
                    worst = err;
                    if !(err <= cfg.verify.curvature_tol) && witness.is_none() {
                        witness = Some(format!("sigma = {sigma}, {orientation:?} cap at x = {x:?}: error {err:e}"));
                    }
                }
            }
        }
    }
    CheckResult::asserted(
        "cap_curvature",
        worst,
        cfg.verify.curvature_tol,
        count,
        format!("max |kappa_i - sigma| over caps in dimension {n}"),
        witness,
    )
}

/// Graph identities and the hyperbolic / Euclidean curvature relation.
fn curvature_identities(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let n = cfg.problem.n;
    let samples = cfg.verify.curvature_samples;
    let (mut worst_id, mut worst_rel): (f64, f64) = (0.0, 0.0);
    let (mut wit_id, mut wit_rel) = (None, None);
    for _ in 0..samples {
        let jet = random_convex_graph_jet(rng, n);
        let frame = match curvature_frame(&jet) {
            Ok(f) => f,
            Err(e) => {
                wit_id.get_or_insert(format!("curvature frame failed at {jet:?}: {e}"));
                continue;
            }
        };
        let id = check_identities(&jet, &frame).max();
        if id > worst_id {
            worst_id = id;
            if id > cfg.verify.identity_tol {
                wit_id.get_or_insert(format!("identity residual {id:e} at {jet:?}"));
            }
        }
        let rel = frame
            .kappa
            .iter()
            .zip(frame.kappa_euc.iter())
            .map(|(k, e)| (k - (jet.u * e + frame.nu_vert)).abs())
            .fold(0.0, f64::max);
        if rel > worst_rel {
            worst_rel = rel;
            if rel > cfg.verify.curvature_tol {
                wit_rel.get_or_insert(format!("kappa = u kappa_euc + nu fails by {rel:e} at {jet:?}"));
            }
        }
    }
    vec![
        CheckResult::asserted(
            "graph_identities",
            worst_id,
            cfg.verify.identity_tol,
            samples,
            "first and second order graph identities".into(),
            wit_id,
        ),
        CheckResult::asserted(
            "curvature_relation",
            worst_rel,
            cfg.verify.curvature_tol,
            samples,
            "hyperbolic against Euclidean principal curvatures".into(),
            wit_rel,
        ),
    ]
}

/// Analytic derivatives of the v-form operator against central differences.
fn jacobian(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> CheckResult {
    let n = cfg.problem.n;
    let mut orders = vec![1, 2.min(n), n, cfg.problem.k];
    orders.sort_unstable();
    orders.dedup();
    let mut worst: f64 = 0.0;
    let mut witness = None;
    let mut count = 0;
    for &k in &orders {
        for _ in 0..cfg.verify.jacobian_samples {
            let jet = random_convex_vjet(rng, n);
            count += 1;
            match jacobian_check(&jet, k, cfg.verify.fd_step) {
                Ok(c) => {
                    worst = worst.max(c.rel_error);
                    if c.rel_error > cfg.verify.jacobian_tol && witness.is_none() {
                        let slot = match c.slot {
                            "v" => String::from("dG/dv"),
                            "v_s" => format!("dG/dv_{}", c.index.0),
                            _ => format!("dG/dv_{}{}", c.index.0, c.index.1),
                        };
                        witness = Some(format!(
                            "Jacobian mismatch in {slot} (k = {k}): relative error {:e} at v = {}, Dv = {:?}",
                            c.rel_error, jet.v, jet.dv
                        ));
                    }
                }
                Err(e) => {
                    worst = f64::INFINITY;
                    witness.get_or_insert(format!("operator evaluation failed (k = {k}): {e}"));
                }
            }
        }
    }
    CheckResult::asserted(
        "jacobian",
        worst,
        cfg.verify.jacobian_tol,
        count,
        format!("orders k in {orders:?}"),
        witness,
    )
}

fn solve_checks(spec: &ProblemSpec, dom: &GridDomain, report: &SolverReport, cfg: &RunConfig) -> Vec<CheckResult> {
    let tol = cfg.solver.tol_newton;
    let mut out = Vec::new();
    let failure = match &report.status {
        plateau_core::solver::PathStatus::Completed => None,
        plateau_core::solver::PathStatus::Failed { stage, last_good_t, reason, .. } => {
            Some(format!("stage {stage} stopped after t = {last_good_t}: {reason}"))
        }
    };
    out.push(CheckResult::asserted(
        "path_completed",
        report.final_residual,
        tol,
        report.steps.len(),
        format!("eps = {}, h = {}, dofs = {}", spec.eps, dom.h, dom.num_dofs()),
        failure,
    ));
    out.push(CheckResult::asserted(
        "start_iterations",
        report.t0_iterations as f64,
        2.0,
        1,
        "Newton iterations of stage 1 at t = 0".into(),
        None,
    ));
    let accepted: Vec<_> = report.accepted().collect();
    let margin = accepted.iter().map(|s| s.min_convexity_margin).fold(f64::INFINITY, f64::min);
    out.push(CheckResult::asserted(
        "convexity_guard",
        -margin,
        -cfg.solver.tau_guard,
        accepted.len(),
        "minimum convexity margin over accepted states (negated)".into(),
        None,
    ));
    let comparison = accepted.iter().map(|s| s.comparison_min).fold(f64::INFINITY, f64::min);
    out.push(CheckResult::asserted(
        "comparison",
        -comparison,
        10.0 * tol,
        accepted.len(),
        "max of ubar - u over accepted states".into(),
        None,
    ));
    let failing = report.bounds.iter().find(|b| !b.ok);
    out.push(CheckResult::asserted(
        "bounds",
        report.bounds.iter().map(|b| b.value - b.bound - b.slack).fold(f64::NEG_INFINITY, f64::max),
        0.0,
        report.bounds.len(),
        report.bounds.iter().map(|b| format!("{} {:.6} <= {:.6}", b.name, b.value, b.bound)).collect::<Vec<_>>().join(", "),
        failing.map(|b| format!("{}: {} exceeds {} + {}", b.name, b.value, b.bound, b.slack)),
    ));
    out
}

/// Inward barrier balls placed outside the domain must miss the solution.
fn lemma_b(spec: &ProblemSpec, dom: &GridDomain, field: &ScalarField, cfg: &RunConfig, rng: &mut ChaCha8Rng) -> CheckResult {
    let n = spec.n;
    let (lo, hi) = spec.sub.ubar.bounding_box();
    let center = spec
        .sub
        .ubar
        .radial_center()
        .filter(|c| c.len() == n)
        .unwrap_or_else(|| lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect());
    let want = cfg.verify.barrier_trials;
    let (mut applicable, mut attempts) = (0, 0);
    let mut min_excess = f64::INFINITY;
    let mut witness = None;
    while applicable < want && attempts < 20 * want.max(1) {
        attempts += 1;
        let sigma = rng.random_range(0.05..0.95);
        let dir = random_direction(rng, n);
        let to_edge = boundary_distance(dom, &center);
        let far = to_edge + spec.eps / sigma + rng.random_range(0.05..0.6);
        let b: Vec<f64> = center.iter().zip(&dir).map(|(c, d)| c + far * d).collect();
        let d = boundary_distance(dom, &b);
        let radius = rng.random_range(0.1..0.999) * lemma_b_max_radius(sigma, spec.eps, d);
        let Ok(sphere) = BarrierSphere::new(b, sigma, radius, Orientation::Inward) else { continue };
        match lemma_b_test(spec, dom, field, &sphere) {
            Ok(LemmaBOutcome::Disjoint { min_excess: e }) => {
                applicable += 1;
                min_excess = min_excess.min(e);
            }
            Ok(LemmaBOutcome::Intersects { witness: w, excess }) => {
                applicable += 1;
                witness.get_or_insert(format!("{sphere:?} meets the solution at {w:?} (excess {excess:e})"));
            }
            Ok(LemmaBOutcome::NotApplicable { .. }) => {}
            Err(e) => {
                witness.get_or_insert(format!("{sphere:?}: {e}"));
            }
        }
    }
    if applicable == 0 && witness.is_none() {
        return CheckResult::skipped("barrier_balls", format!("no admissible placement in {attempts} attempts"));
    }
    CheckResult::asserted(
        "barrier_balls",
        if witness.is_some() { 1.0 } else { 0.0 },
        0.0,
        applicable,
        format!("{applicable} admissible of {attempts} placements; min excess {min_excess:e}"),
        witness,
    )
}

fn radial(spec: &ProblemSpec, dom: &GridDomain, field: &ScalarField, cfg: &RunConfig) -> CheckResult {
    let oracle = match radial_oracle(spec, &cfg.verify.radial) {
        Ok(p) => p,
        Err(e) => return CheckResult::skipped("radial_oracle", e.to_string()),
    };
    let probe: Vec<usize> = dom
        .deep_interior()
        .into_iter()
        .filter(|&d| {
            let x = dom.point(d);
            x.iter().zip(&oracle.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt() <= 0.5 * oracle.r_boundary
        })
        .collect();
    if probe.is_empty() {
        return CheckResult::skipped("radial_oracle", "no deep interior nodes near the centre".into());
    }
    let rel = probe
        .iter()
        .map(|&d| {
            let u = oracle.value_at(&dom.point(d));
            (field.values[d].sqrt() - u).abs() / u
        })
        .fold(0.0, f64::max);
    CheckResult::asserted(
        "radial_oracle",
        rel,
        cfg.verify.radial_tol,
        probe.len(),
        format!("relative error against the shooting profile, mismatch {:e}", oracle.mismatch),
        None,
    )
}

/// Run every check. The caller installs the thread pool.
pub fn run_suite(cfg: &RunConfig, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = vec![cap_curvature(cfg, &mut rng)];
    checks.extend(curvature_identities(cfg, &mut rng));
    checks.push(jacobian(cfg, &mut rng));
    let mut report = SuiteReport { seed, checks, hypotheses: None, solver: None };

    let spec = match cfg.problem_spec() {
        Ok(s) => s,
        Err(e) => {
            report.checks.push(CheckResult::asserted("problem", f64::INFINITY, 0.0, 0, e.to_string(), Some(e.to_string())));
            return report;
        }
    };
    let samples = interior_samples(&spec, spec.eps, 2.0 * cfg.grid.h);
    match check_conditions(&spec, &samples, &cfg.verify.conditions) {
        Ok(h) => {
            report.checks.push(CheckResult::info(
                "hypotheses",
                format!(
                    "subsolution matrix {:?}, psi matrix {:?}, almost round {:?}",
                    h.cond_subsolution.verdict, h.cond_psi.verdict, h.almost_round.verdict
                ),
            ));
            report.hypotheses = Some(h);
        }
        Err(e) => report.checks.push(CheckResult::info("hypotheses", e.to_string())),
    }

    let dom = match build_domain(&spec.sub, spec.eps, cfg.h_policy().h(spec.eps)) {
        Ok(d) => d,
        Err(e) => {
            report.checks.push(CheckResult::asserted("domain", f64::INFINITY, 0.0, 0, e.to_string(), Some(e.to_string())));
            return report;
        }
    };
    match solve_dirichlet(&spec, &dom, &cfg.solver) {
        Ok((field, sr)) => {
            report.checks.extend(solve_checks(&spec, &dom, &sr, cfg));
            if sr.completed() {
                report.checks.push(lemma_b(&spec, &dom, &field, cfg, &mut rng));
                report.checks.push(radial(&spec, &dom, &field, cfg));
            }
            report.solver = Some(sr);
        }
        Err(e) => {
            report.checks.push(CheckResult::asserted("solve", f64::INFINITY, 0.0, 0, e.to_string(), Some(e.to_string())));
        }
    }
    report
}
