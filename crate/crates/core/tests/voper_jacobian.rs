mod common;

use plateau_core::linalg::Mat;
use plateau_core::voper::{assemble_g, g_value, VJet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn g_of(jet: &VJet, k: usize) -> f64 {
    g_value(jet, k).unwrap().0
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Central differences of G in every jet slot, returning the worst relative
/// disagreement with the analytic derivatives.
fn jacobian_error(jet: &VJet, k: usize) -> f64 {
    let n = jet.dim();
    let st = assemble_g(jet, k).unwrap();
    let tau = 1e-6;
    let mut worst: f64 = 0.0;

    let mut p = jet.clone();
    p.v += tau;
    let mut m = jet.clone();
    m.v -= tau;
    worst = worst.max(rel_err(st.gv, (g_of(&p, k) - g_of(&m, k)) / (2.0 * tau)));

    for s in 0..n {
        let mut p = jet.clone();
        p.dv[s] += tau;
        let mut m = jet.clone();
        m.dv[s] -= tau;
        worst = worst.max(rel_err(st.gs[s], (g_of(&p, k) - g_of(&m, k)) / (2.0 * tau)));
    }

    for s in 0..n {
        for t in s..n {
            // symmetric perturbation τ(E_st + E_ts)/2
            let mut e = Mat::zeros(n);
            e[(s, t)] += 0.5 * tau;
            e[(t, s)] += 0.5 * tau;
            let mut p = jet.clone();
            p.d2v = jet.d2v.add(&e);
            let mut m = jet.clone();
            m.d2v = jet.d2v.sub(&e);
            let fd = (g_of(&p, k) - g_of(&m, k)) / (2.0 * tau);
            worst = worst.max(rel_err(st.gst[(s, t)], fd));
        }
    }
    worst
}

#[test]
fn analytic_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2usize, 3] {
        for k in [1usize, 2, n] {
            for _ in 0..100 {
                let jet = common::random_convex_vjet(&mut rng, n);
                let e = jacobian_error(&jet, k);
                assert!(e < 1e-6, "n={n} k={k} err={e:e} jet={jet:?}");
            }
        }
    }
}
