#![allow(dead_code)]

use plateau_core::hypgeo::GraphJet;
use plateau_core::linalg::Mat;
use plateau_core::voper::{convexity_margin_v, VJet};
use rand::Rng;

/// Random rotation from a Gram–Schmidt pass over a Gaussian-ish matrix.
pub fn random_rotation<R: Rng>(rng: &mut R, n: usize) -> Mat {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < n {
        let mut c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for p in &cols {
            let d: f64 = c.iter().zip(p).map(|(a, b)| a * b).sum();
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci -= d * pi;
            }
        }
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            cols.push(c.into_iter().map(|x| x / norm).collect());
        }
    }
    Mat::from_fn(n, |i, j| cols[j][i])
}

pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Mat {
    let m = Mat::from_fn(n, |_, _| rng.random_range(-scale..scale));
    m.symmetrized()
}

/// Random strictly convex graph jet: `δ + Du⊗Du + u D²u ≻ 0` with margin.
pub fn random_convex_graph_jet<R: Rng>(rng: &mut R, n: usize) -> GraphJet {
    loop {
        let u = rng.random_range(0.2..2.0);
        let du: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let d2u = random_symmetric(rng, n, 2.0);
        let jet = GraphJet::new(u, du, d2u).unwrap();
        let (ok, m) = plateau_core::hypgeo::is_strictly_convex(&jet);
        if ok && m > 0.05 {
            return jet;
        }
    }
}

/// Random strictly convex v-jet.
pub fn random_convex_vjet<R: Rng>(rng: &mut R, n: usize) -> VJet {
    loop {
        let v = rng.random_range(0.05..3.0);
        let dv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d2v = random_symmetric(rng, n, 3.0);
        let jet = VJet::new(v, dv, d2v).unwrap();
        if convexity_margin_v(&jet) > 0.05 {
            return jet;
        }
    }
}
