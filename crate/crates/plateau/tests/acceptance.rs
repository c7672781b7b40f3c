//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances and runtime budgets are pinned below.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use plateau_core::continuation::{run_epsilon_path, ContinuationOptions, DiagnosticOptions, EpsilonSchedule, HPolicy};
use plateau_core::families::{Cap, PsiFamily, Subsolution};
use plateau_core::grid::{build_domain, GridDomain, NodeTag, ScalarField, SubsolutionSpec};
use plateau_core::hypgeo::{curvature_frame, is_strictly_convex, GraphJet};
use plateau_core::linalg::Mat;
use plateau_core::solver::{solve_dirichlet, ProblemSpec, SolverOptions, SolverReport};
use plateau_core::verify::{
    boundary_distance, cap_field, lemma_b_max_radius, lemma_b_test, radial_oracle, rotation_residual,
    BarrierSphere, LemmaBOutcome, Orientation, RadialOptions,
};
use plateau_core::voper::{convexity_margin_v, jacobian_check, VJet};

const CAP_CURVATURE_TOL: f64 = 1e-8;
const RELATION_TOL: f64 = 1e-8;
const JACOBIAN_TOL: f64 = 1e-6;
const JACOBIAN_STEP: f64 = 1e-6;
const EXACT_ORDER_MIN: f64 = 1.0;
const EXACT_ERROR_MAX: f64 = 1e-3;
const T0_ITERATIONS_MAX: usize = 2;
const RADIAL_REL_MAX: f64 = 1e-3;
const C2_SPREAD_MAX: f64 = 2.0;
const GAP_GROWTH_MAX: f64 = 1.5;
const BARRIER_TRIALS: usize = 50;
const ROTATION_RATIO_MIN: f64 = 3.0;

struct Outcome {
    passed: bool,
    summary: String,
    elapsed: Duration,
    budget: Duration,
}

fn outcome(passed: bool, summary: String, start: Instant, budget_s: u64) -> Outcome {
    Outcome { passed, summary, elapsed: start.elapsed(), budget: Duration::from_secs(budget_s) }
}

/// Solver reports collected for the path and bound criteria.
#[derive(Default)]
struct Ledger {
    reports: Vec<(String, SolverReport)>,
    tau: f64,
    tol: f64,
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

fn random_symmetric<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Mat {
    Mat::from_fn(n, |_, _| rng.random_range(-scale..scale)).symmetrized()
}

fn random_convex_graph_jet<R: Rng>(rng: &mut R, n: usize) -> GraphJet {
    loop {
        let u = rng.random_range(0.2..2.0);
        let du: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let jet = GraphJet::new(u, du, random_symmetric(rng, n, 2.0)).unwrap();
        if is_strictly_convex(&jet).1 > 0.05 {
            return jet;
        }
    }
}

fn random_convex_vjet<R: Rng>(rng: &mut R, n: usize) -> VJet {
    loop {
        let v = rng.random_range(0.05..3.0);
        let dv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let jet = VJet::new(v, dv, random_symmetric(rng, n, 3.0)).unwrap();
        if convexity_margin_v(&jet) > 0.05 {
            return jet;
        }
    }
}

fn c1_sphere_barriers() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for n in [2, 3] {
        for sigma in [0.25, 0.5, 0.9] {
            for orientation in [Orientation::Outward, Orientation::Inward] {
                let s = BarrierSphere::new(vec![0.2; n], sigma, 1.3, orientation).unwrap();
                let foot = s.footprint_radius();
                let gap = s.radius - foot;
                let (lo, hi) = match orientation {
                    Orientation::Outward => (0.0, 0.98 * foot),
                    Orientation::Inward => (foot + 0.02 * gap, s.radius - 0.02 * gap),
                };
                for _ in 0..1000 {
                    let r = rng.random_range(lo..hi);
                    let x: Vec<f64> = random_direction(&mut rng, n).iter().map(|d| 0.2 + r * d).collect();
                    let frame = curvature_frame(&cap_field(&s, &x).unwrap()).unwrap();
                    worst = frame.kappa.iter().fold(worst, |m, k| m.max((k - sigma).abs()));
                }
            }
        }
    }
    outcome(
        worst <= CAP_CURVATURE_TOL,
        format!("max |kappa_i - sigma| = {worst:.2e} (tol {CAP_CURVATURE_TOL:.0e}) over 12000 cap points"),
        start,
        5,
    )
}

fn c2_curvature_relation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = 2 + i % 2;
        let jet = random_convex_graph_jet(&mut rng, n);
        // Euclidean curvatures: eigenvalues of g^{-1/2} (D²u / w) g^{-1/2}, g = I + Du Duᵀ
        let du = DVector::from_column_slice(&jet.du);
        let g = DMatrix::identity(n, n) + &du * du.transpose();
        let h = DMatrix::from_fn(n, n, |a, b| jet.d2u[(a, b)]) / jet.w();
        let l = g.cholesky().unwrap().l().try_inverse().unwrap();
        let mut euc: Vec<f64> = SymmetricEigen::new(&l * h * l.transpose()).eigenvalues.iter().copied().collect();
        euc.sort_by(f64::total_cmp);
        let mut kappa = curvature_frame(&jet).unwrap().kappa.to_vec();
        kappa.sort_by(f64::total_cmp);
        for (k, e) in kappa.iter().zip(&euc) {
            worst = worst.max((k - (jet.u * e + 1.0 / jet.w())).abs());
        }
    }
    outcome(
        worst <= RELATION_TOL,
        format!("max |kappa - (u kappa_euc + nu)| = {worst:.2e} (tol {RELATION_TOL:.0e}) over 1000 jets"),
        start,
        5,
    )
}

fn c3_jacobian() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut states = 0;
    for n in [2usize, 3] {
        let mut orders = vec![1, 2, n];
        orders.dedup();
        for k in orders {
            for _ in 0..100 {
                let jet = random_convex_vjet(&mut rng, n);
                worst = worst.max(jacobian_check(&jet, k, JACOBIAN_STEP).unwrap().rel_error);
                states += 1;
            }
        }
    }
    outcome(
        worst <= JACOBIAN_TOL,
        format!("max relative FD error = {worst:.2e} (tol {JACOBIAN_TOL:.0e}) over {states} states"),
        start,
        10,
    )
}

fn small_cap(psi: PsiFamily) -> ProblemSpec {
    let sub = SubsolutionSpec::new(Arc::new(Cap::new(0.7, 0.5, vec![0.0, 0.0]).unwrap()));
    ProblemSpec::new(2, 2, Arc::new(psi), sub, 0.1, 0.55).unwrap()
}

fn solve(spec: &ProblemSpec, h: f64, label: String, ledger: &mut Ledger) -> Option<(GridDomain, ScalarField)> {
    let dom = build_domain(&spec.sub, spec.eps, h).ok()?;
    let (field, report) = solve_dirichlet(spec, &dom, &SolverOptions::default()).ok()?;
    let done = report.completed();
    ledger.reports.push((label, report));
    done.then_some((dom, field))
}

fn c4_exact_cap(ledger: &mut Ledger) -> Outcome {
    let start = Instant::now();
    let spec = small_cap(PsiFamily::Constant { c: 0.36 });
    let sub = Cap::new(0.7, 0.5, vec![0.0, 0.0]).unwrap();
    // Γ_ε is the circle where the subsolution cap has height ε
    let big_r = sub.sphere_radius();
    let r_eps = (big_r * big_r - (spec.eps + 0.7 * big_r).powi(2)).sqrt();
    let exact = Cap::through_circle(0.6, r_eps, spec.eps, vec![0.0, 0.0]).unwrap();
    let mut errs = Vec::new();
    for m in [32.0, 64.0, 128.0] {
        let Some((dom, field)) = solve(&spec, 1.0 / m, format!("exact cap h=1/{m}"), ledger) else {
            return outcome(false, format!("solve failed at h = 1/{m}"), start, 120);
        };
        let err = (0..dom.num_dofs())
            .filter(|&d| dom.tag(d) == NodeTag::Interior)
            .map(|d| (field.values[d].sqrt() - exact.value(&dom.point(d))).abs())
            .fold(0.0, f64::max);
        errs.push(err);
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    outcome(
        orders.iter().all(|&p| p >= EXACT_ORDER_MIN) && errs[2] <= EXACT_ERROR_MAX,
        format!(
            "errors {:.2e} {:.2e} {:.2e}, orders {:.2} {:.2} (min {EXACT_ORDER_MIN}), final tol {EXACT_ERROR_MAX:.0e}",
            errs[0], errs[1], errs[2], orders[0], orders[1]
        ),
        start,
        120,
    )
}

fn c5_path(ledger: &Ledger) -> Outcome {
    let start = Instant::now();
    let mut worst_iters = 0;
    let mut min_margin = f64::INFINITY;
    let mut min_comparison = f64::INFINITY;
    let mut accepted = 0;
    let mut incomplete = Vec::new();
    for (label, r) in &ledger.reports {
        if !r.completed() {
            incomplete.push(label.clone());
        }
        worst_iters = worst_iters.max(r.t0_iterations);
        for s in r.accepted() {
            accepted += 1;
            min_margin = min_margin.min(s.min_convexity_margin);
            min_comparison = min_comparison.min(s.comparison_min);
        }
    }
    let passed = incomplete.is_empty()
        && worst_iters <= T0_ITERATIONS_MAX
        && min_margin > ledger.tau
        && min_comparison >= -10.0 * ledger.tol;
    outcome(
        passed,
        format!(
            "{} solves, {accepted} accepted states: t=0 iterations <= {worst_iters} (max {T0_ITERATIONS_MAX}), \
             min margin {min_margin:.2e} (> {:.0e}), min u - ubar {min_comparison:.2e} (>= {:.0e}){}",
            ledger.reports.len(),
            ledger.tau,
            -10.0 * ledger.tol,
            if incomplete.is_empty() { String::new() } else { format!(", incomplete: {incomplete:?}") }
        ),
        start,
        120,
    )
}

fn c6_bounds(ledger: &Ledger) -> Outcome {
    let start = Instant::now();
    let mut failing = Vec::new();
    let mut worst: Vec<(String, f64)> = Vec::new();
    for (label, r) in ledger.reports.iter().filter(|(_, r)| r.completed()) {
        for b in &r.bounds {
            let headroom = b.bound + b.slack - b.value;
            match worst.iter_mut().find(|(n, _)| *n == b.name) {
                Some(w) => w.1 = w.1.min(headroom),
                None => worst.push((b.name.clone(), headroom)),
            }
            if !b.ok {
                failing.push(format!("{label}: {} {} > {} + {}", b.name, b.value, b.bound, b.slack));
            }
        }
    }
    let usage: Vec<String> = worst.iter().map(|(n, w)| format!("{n} {w:.2e}")).collect();
    outcome(
        failing.is_empty() && !worst.is_empty(),
        format!("min headroom (bound + slack - value): {}{}", usage.join(", "), if failing.is_empty() { String::new() } else { format!("; {failing:?}") }),
        start,
        60,
    )
}

fn gaussian() -> ProblemSpec {
    small_cap(PsiFamily::RadialGaussian { center: vec![0.0, 0.0], base: 0.36, amp: 0.2, width: 1.0 })
}

fn probe(dom: &GridDomain, r_b: f64) -> Vec<usize> {
    dom.deep_interior()
        .into_iter()
        .filter(|&d| dom.point(d).iter().map(|x| x * x).sum::<f64>().sqrt() <= 0.5 * r_b)
        .collect()
}

fn c7_radial(ledger: &mut Ledger) -> Outcome {
    let start = Instant::now();
    let spec = gaussian();
    let oracle = match radial_oracle(&spec, &RadialOptions::default()) {
        Ok(p) => p,
        Err(e) => return outcome(false, format!("oracle failed: {e}"), start, 120),
    };
    let Some((dom, field)) = solve(&spec, 1.0 / 128.0, "radial h=1/128".into(), ledger) else {
        return outcome(false, "solve failed at h = 1/128".into(), start, 120);
    };
    let pts = probe(&dom, oracle.r_boundary);
    let rel = pts
        .iter()
        .map(|&d| {
            let u = oracle.value_at(&dom.point(d));
            (field.values[d].sqrt() - u).abs() / u
        })
        .fold(0.0, f64::max);
    outcome(
        rel <= RADIAL_REL_MAX && !pts.is_empty(),
        format!("max relative error {rel:.2e} (tol {RADIAL_REL_MAX:.0e}) on {} probe nodes at h = 1/128", pts.len()),
        start,
        120,
    )
}

fn c8_sweep(ledger: &mut Ledger) -> Outcome {
    let start = Instant::now();
    let sub = SubsolutionSpec::new(Arc::new(Cap::new(0.65, 1.1, vec![0.0, 0.0]).unwrap()));
    let spec = ProblemSpec::new(2, 2, Arc::new(PsiFamily::Constant { c: 0.36 }), sub, 0.4, 0.55).unwrap();
    let schedule = EpsilonSchedule { eps_values: vec![0.4, 0.2, 0.1, 0.05], eps_floor: 0.05, probe_eps: 0.42 };
    let opts = ContinuationOptions {
        solver: SolverOptions::default(),
        h_policy: HPolicy::Fixed { h: 1.0 / 32.0 },
        diagnostics: DiagnosticOptions::default(),
        warm_start: true,
    };
    let run = match run_epsilon_path(&spec, &schedule, &opts) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("sweep error: {e}"), start, 300),
    };
    for l in &run.levels {
        ledger.reports.push((format!("sweep eps={}", l.eps), l.report.clone()));
    }
    if let Some(f) = &run.failure {
        return outcome(false, format!("sweep stopped after {} levels: {f}", run.levels.len()), start, 300);
    }
    let c2: Vec<f64> = run.levels.iter().map(|l| l.diagnostics.c2_interior).collect();
    let gaps: Vec<f64> = run.levels.iter().filter_map(|l| l.diagnostics.cauchy_gap).collect();
    let (lo, hi) = c2.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    let growth = gaps.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    outcome(
        hi / lo <= C2_SPREAD_MAX && growth <= GAP_GROWTH_MAX && gaps.len() == 3,
        format!(
            "c2_interior spread {:.3} (max {C2_SPREAD_MAX}), cauchy gaps {:.2e} {:.2e} {:.2e}, max ratio {growth:.3} (max {GAP_GROWTH_MAX})",
            hi / lo,
            gaps[0],
            gaps[1],
            gaps[2]
        ),
        start,
        300,
    )
}

fn c9_lemma_b(ledger: &mut Ledger) -> Outcome {
    let start = Instant::now();
    let spec = small_cap(PsiFamily::Constant { c: 0.36 });
    let Some((dom, field)) = solve(&spec, 1.0 / 32.0, "barrier cap h=1/32".into(), ledger) else {
        return outcome(false, "solve failed".into(), start, 30);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let r_eps = boundary_distance(&dom, &[0.0, 0.0]);
    let (mut disjoint, mut other) = (0, Vec::new());
    let mut min_excess = f64::INFINITY;
    while disjoint + other.len() < BARRIER_TRIALS {
        let sigma = rng.random_range(0.1..0.55);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let dist = r_eps + spec.eps / sigma + rng.random_range(0.05..0.6);
        let b = vec![dist * angle.cos(), dist * angle.sin()];
        let radius = rng.random_range(0.1..0.999) * lemma_b_max_radius(sigma, spec.eps, boundary_distance(&dom, &b));
        let sphere = BarrierSphere::new(b, sigma, radius, Orientation::Inward).unwrap();
        match lemma_b_test(&spec, &dom, &field, &sphere) {
            Ok(LemmaBOutcome::Disjoint { min_excess: e }) => {
                disjoint += 1;
                min_excess = min_excess.min(e);
            }
            o => other.push(format!("{o:?}")),
        }
    }
    outcome(
        disjoint == BARRIER_TRIALS,
        format!(
            "{disjoint}/{BARRIER_TRIALS} placements disjoint, min ball excess {min_excess:.3e}{}",
            other.first().map(|o| format!("; first other outcome {o}")).unwrap_or_default()
        ),
        start,
        30,
    )
}

fn c10_rotation(ledger: &mut Ledger) -> Outcome {
    let start = Instant::now();
    let spec = gaussian();
    let oracle = match radial_oracle(&spec, &RadialOptions::default()) {
        Ok(p) => p,
        Err(e) => return outcome(false, format!("oracle failed: {e}"), start, 60),
    };
    let mut res = Vec::new();
    for m in [32.0, 64.0] {
        let Some((dom, field)) = solve(&spec, 1.0 / m, format!("radial h=1/{m}"), ledger) else {
            return outcome(false, format!("solve failed at h = 1/{m}"), start, 60);
        };
        res.push(rotation_residual(&spec, &dom, &field.values, (0, 1), &probe(&dom, oracle.r_boundary)).unwrap());
    }
    let ratio = res[0] / res[1];
    outcome(
        ratio >= ROTATION_RATIO_MIN,
        format!("residuals {:.2e} -> {:.2e}, ratio {ratio:.2} (min {ROTATION_RATIO_MIN})", res[0], res[1]),
        start,
        60,
    )
}

fn main() -> ExitCode {
    let defaults = SolverOptions::default();
    let mut ledger = Ledger { reports: Vec::new(), tau: defaults.tau_guard, tol: defaults.tol_newton };
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "sphere barrier exactness", c1_sphere_barriers()),
        (2, "hyperbolic/Euclidean curvature relation", c2_curvature_relation()),
        (3, "operator Jacobian exactness", c3_jacobian()),
        (4, "exact-solution convergence", c4_exact_cap(&mut ledger)),
    ];
    let c7 = c7_radial(&mut ledger);
    let c8 = c8_sweep(&mut ledger);
    let c9 = c9_lemma_b(&mut ledger);
    let c10 = c10_rotation(&mut ledger);
    results.push((5, "continuity-path soundness", c5_path(&ledger)));
    results.push((6, "a priori bound suite", c6_bounds(&ledger)));
    results.push((7, "radial oracle agreement", c7));
    results.push((8, "epsilon-path stability", c8));
    results.push((9, "barrier balls miss the solution", c9));
    results.push((10, "rotation identity", c10));

    let mut failures = 0;
    for (id, name, o) in &results {
        let in_time = o.elapsed <= o.budget;
        let ok = o.passed && in_time;
        failures += usize::from(!ok);
        println!(
            "{} criterion {id:>2} {name}: {} [{:.2}s of {}s]",
            if ok { "PASS" } else { "FAIL" },
            o.summary,
            o.elapsed.as_secs_f64(),
            o.budget.as_secs()
        );
    }
    println!("{} of {} criteria passed", results.len() - failures, results.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
