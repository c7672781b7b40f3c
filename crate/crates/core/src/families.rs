//! Built-in right-hand sides `ψ(x, u)` and subsolutions `u̲(x)`.
//!
//! Both are exposed through object-safe traits so callers can plug in their
//! own fields; the enums below are the serializable built-in families.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, Result};
use crate::hypgeo::GraphJet;
use crate::linalg::{norm_sq, Mat};

/// Prescribed curvature data `ψ(x, u) > 0` with derivatives.
pub trait Psi: Send + Sync {
    fn value(&self, x: &[f64], u: f64) -> f64;
    fn d_u(&self, x: &[f64], u: f64) -> f64;
    fn d_x(&self, x: &[f64], u: f64) -> Vec<f64>;
    fn d_xx(&self, x: &[f64], u: f64) -> Mat;
    fn d_xu(&self, x: &[f64], u: f64) -> Vec<f64>;
    fn d_uu(&self, x: &[f64], u: f64) -> f64;
    /// Centre of rotational symmetry in `x`, if any.
    fn radial_center(&self) -> Option<Vec<f64>> {
        None
    }
}

/// A strictly locally convex function whose level sets cut out the domains.
pub trait Subsolution: Send + Sync {
    fn dim(&self) -> usize;
    /// Finite everywhere in the bounding box; negative outside the footprint.
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> Mat;
    /// Axis-aligned box containing `{u̲ > 0}`.
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>);
    fn max_value(&self) -> f64;
    /// Centre of rotational symmetry, if any.
    fn radial_center(&self) -> Option<Vec<f64>> {
        None
    }

    fn jet(&self, x: &[f64]) -> Result<GraphJet> {
        GraphJet::new(self.value(x), self.gradient(x), self.hessian(x).symmetrized())
    }
}

fn sub(x: &[f64], c: &[f64]) -> Vec<f64> {
    x.iter().zip(c).map(|(a, b)| a - b).collect()
}

/// Built-in `ψ` families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PsiFamily {
    /// `ψ = c`.
    Constant { c: f64 },
    /// `ψ = Σ_j c_j |x − x₀|^{2j}`.
    RadialPolynomial { center: Vec<f64>, coeffs: Vec<f64> },
    /// `ψ = base (1 + amp exp(−|x − x₀|²/width²))`.
    RadialGaussian { center: Vec<f64>, base: f64, amp: f64, width: f64 },
    /// `ψ = scale (1 + Σ a_i x_i²) u^power`.
    SeparableProduct { scale: f64, a: Vec<f64>, power: f64 },
}

impl PsiFamily {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            PsiFamily::Constant { c } => {
                if !(*c > 0.0) {
                    bail_arg!("constant psi must be positive, got {c}");
                }
            }
            PsiFamily::RadialPolynomial { center, coeffs } => {
                if center.len() != n {
                    bail_arg!("radial-polynomial center has {} entries, expected {n}", center.len());
                }
                if coeffs.is_empty() || !(coeffs[0] > 0.0) || coeffs.iter().any(|c| *c < 0.0) {
                    bail_arg!("radial-polynomial needs coeffs[0] > 0 and all coeffs >= 0");
                }
            }
            PsiFamily::RadialGaussian { center, base, amp, width } => {
                if center.len() != n {
                    bail_arg!("radial-gaussian center has {} entries, expected {n}", center.len());
                }
                if !(*base > 0.0) || !(*width > 0.0) || !(*amp > -1.0) {
                    bail_arg!("radial-gaussian needs base > 0, width > 0, amp > -1");
                }
            }
            PsiFamily::SeparableProduct { scale, a, power } => {
                if a.len() != n {
                    bail_arg!("separable-product has {} coefficients, expected {n}", a.len());
                }
                if !(*scale > 0.0) || a.iter().any(|c| *c < 0.0) || !power.is_finite() {
                    bail_arg!("separable-product needs scale > 0 and a_i >= 0");
                }
            }
        }
        Ok(())
    }

    // Radial profile g(s) with s = |x − x₀|², returning (g, g', g'').
    fn radial_profile(&self, s: f64) -> (f64, f64, f64) {
        match self {
            PsiFamily::RadialPolynomial { coeffs, .. } => {
                let mut g = 0.0;
                let mut g1 = 0.0;
                let mut g2 = 0.0;
                for (j, &c) in coeffs.iter().enumerate() {
                    let jf = j as f64;
                    g += c * s.powi(j as i32);
                    if j >= 1 {
                        g1 += c * jf * s.powi(j as i32 - 1);
                    }
                    if j >= 2 {
                        g2 += c * jf * (jf - 1.0) * s.powi(j as i32 - 2);
                    }
                }
                (g, g1, g2)
            }
            PsiFamily::RadialGaussian { base, amp, width, .. } => {
                let w2 = width * width;
                let e = (-s / w2).exp();
                (base * (1.0 + amp * e), -base * amp * e / w2, base * amp * e / (w2 * w2))
            }
            _ => unreachable!("not a radial family"),
        }
    }

    fn center(&self) -> Option<&[f64]> {
        match self {
            PsiFamily::RadialPolynomial { center, .. } | PsiFamily::RadialGaussian { center, .. } => {
                Some(center)
            }
            _ => None,
        }
    }
}

impl Psi for PsiFamily {
    fn value(&self, x: &[f64], u: f64) -> f64 {
        match self {
            PsiFamily::Constant { c } => *c,
            PsiFamily::SeparableProduct { scale, a, power } => {
                let q: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi * xi).sum();
                scale * (1.0 + q) * u.powf(*power)
            }
            _ => {
                let d = sub(x, self.center().unwrap());
                self.radial_profile(norm_sq(&d)).0
            }
        }
    }

    fn d_u(&self, x: &[f64], u: f64) -> f64 {
        match self {
            PsiFamily::SeparableProduct { scale, a, power } => {
                let q: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi * xi).sum();
                scale * (1.0 + q) * power * u.powf(power - 1.0)
            }
            _ => 0.0,
        }
    }

    fn d_uu(&self, x: &[f64], u: f64) -> f64 {
        match self {
            PsiFamily::SeparableProduct { scale, a, power } => {
                let q: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi * xi).sum();
                scale * (1.0 + q) * power * (power - 1.0) * u.powf(power - 2.0)
            }
            _ => 0.0,
        }
    }

    fn d_x(&self, x: &[f64], u: f64) -> Vec<f64> {
        match self {
            PsiFamily::Constant { .. } => vec![0.0; x.len()],
            PsiFamily::SeparableProduct { scale, a, power } => {
                let up = u.powf(*power);
                a.iter().zip(x).map(|(ai, xi)| scale * 2.0 * ai * xi * up).collect()
            }
            _ => {
                let d = sub(x, self.center().unwrap());
                let (_, g1, _) = self.radial_profile(norm_sq(&d));
                d.iter().map(|di| 2.0 * g1 * di).collect()
            }
        }
    }

    fn d_xx(&self, x: &[f64], u: f64) -> Mat {
        let n = x.len();
        match self {
            PsiFamily::Constant { .. } => Mat::zeros(n),
            PsiFamily::SeparableProduct { scale, a, power } => {
                let up = u.powf(*power);
                let d: Vec<f64> = a.iter().map(|ai| 2.0 * scale * ai * up).collect();
                Mat::diag(&d)
            }
            _ => {
                let d = sub(x, self.center().unwrap());
                let (_, g1, g2) = self.radial_profile(norm_sq(&d));
                Mat::from_fn(n, |i, j| {
                    let dij = if i == j { 1.0 } else { 0.0 };
                    2.0 * g1 * dij + 4.0 * g2 * d[i] * d[j]
                })
            }
        }
    }

    fn d_xu(&self, x: &[f64], u: f64) -> Vec<f64> {
        match self {
            PsiFamily::SeparableProduct { scale, a, power } => {
                let up1 = power * u.powf(power - 1.0);
                a.iter().zip(x).map(|(ai, xi)| scale * 2.0 * ai * xi * up1).collect()
            }
            _ => vec![0.0; x.len()],
        }
    }

    fn radial_center(&self) -> Option<Vec<f64>> {
        match self {
            PsiFamily::Constant { .. } => Some(Vec::new()),
            PsiFamily::SeparableProduct { a, .. } if a.iter().all(|&c| c == 0.0) => Some(Vec::new()),
            _ => self.center().map(|c| c.to_vec()),
        }
    }
}

/// Spherical cap in the half-space with constant hyperbolic principal
/// curvature `σ` with respect to the upward normal.
///
/// The sphere has Euclidean centre `(x₀, −σR)` and radius `R`; it meets the
/// ideal boundary on the circle of radius `ρ₀ = R √(1 − σ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cap {
    pub sigma: f64,
    /// Footprint radius `ρ₀` on `{x_{n+1} = 0}`.
    pub radius: f64,
    pub center: Vec<f64>,
}

impl Cap {
    pub fn new(sigma: f64, radius: f64, center: Vec<f64>) -> Result<Self> {
        if !(sigma > 0.0 && sigma < 1.0) {
            bail_arg!("cap sigma must lie in (0, 1), got {sigma}");
        }
        if !(radius > 0.0) {
            bail_arg!("cap radius must be positive, got {radius}");
        }
        if center.len() < 2 {
            bail_arg!("cap needs dimension n >= 2");
        }
        Ok(Cap { sigma, radius, center })
    }

    /// Euclidean sphere radius `R = ρ₀ / √(1 − σ²)`.
    pub fn sphere_radius(&self) -> f64 {
        self.radius / (1.0 - self.sigma * self.sigma).sqrt()
    }

    /// `(R, c)` of the cap with curvature `sigma` that passes through the
    /// circle `|x − x₀| = r` at height `height`.
    pub fn through_circle(sigma: f64, r: f64, height: f64, center: Vec<f64>) -> Result<Self> {
        // R²(1 − σ²) − 2 height σ R − (height² + r²) = 0
        let a = 1.0 - sigma * sigma;
        let b = -2.0 * height * sigma;
        let c = -(height * height + r * r);
        let big_r = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        Cap::new(sigma, big_r * a.sqrt(), center)
    }

    fn offset(&self, x: &[f64]) -> (Vec<f64>, f64, f64) {
        let d = sub(x, &self.center);
        let big_r = self.sphere_radius();
        let s2 = big_r * big_r - norm_sq(&d);
        (d, big_r, s2)
    }
}

impl Subsolution for Cap {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (_, big_r, s2) = self.offset(x);
        -self.sigma * big_r + s2.max(0.0).sqrt()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (d, _, s2) = self.offset(x);
        let s = s2.sqrt();
        d.iter().map(|di| -di / s).collect()
    }

    fn hessian(&self, x: &[f64]) -> Mat {
        let (d, _, s2) = self.offset(x);
        let s = s2.sqrt();
        let n = d.len();
        Mat::from_fn(n, |i, j| {
            let dij = if i == j { 1.0 } else { 0.0 };
            -dij / s - d[i] * d[j] / (s * s * s)
        })
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let m = 1.05 * self.radius;
        (
            self.center.iter().map(|c| c - m).collect(),
            self.center.iter().map(|c| c + m).collect(),
        )
    }

    fn max_value(&self) -> f64 {
        (1.0 - self.sigma) * self.sphere_radius()
    }

    fn radial_center(&self) -> Option<Vec<f64>> {
        Some(self.center.clone())
    }
}

/// A cap lowered by the convex bump `η(ρ₀² − |x − x₀|²)`; same footprint,
/// strictly below the cap inside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedCap {
    pub cap: Cap,
    pub eta: f64,
}

impl PerturbedCap {
    pub fn new(cap: Cap, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) {
            bail_arg!("perturbation eta must be nonnegative, got {eta}");
        }
        Ok(PerturbedCap { cap, eta })
    }
}

impl Subsolution for PerturbedCap {
    fn dim(&self) -> usize {
        self.cap.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d2 = norm_sq(&sub(x, &self.cap.center));
        let r2 = self.cap.radius * self.cap.radius;
        let v = self.cap.value(x);
        if d2 < r2 {
            v - self.eta * (r2 - d2)
        } else {
            v
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = sub(x, &self.cap.center);
        let inside = norm_sq(&d) < self.cap.radius * self.cap.radius;
        let g = self.cap.gradient(x);
        g.iter().zip(&d).map(|(gi, di)| if inside { gi + 2.0 * self.eta * di } else { *gi }).collect()
    }

    fn hessian(&self, x: &[f64]) -> Mat {
        let d = sub(x, &self.cap.center);
        let h = self.cap.hessian(x);
        if norm_sq(&d) < self.cap.radius * self.cap.radius {
            h.add(&Mat::identity(d.len()).scale(2.0 * self.eta))
        } else {
            h
        }
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        self.cap.bounding_box()
    }

    fn max_value(&self) -> f64 {
        // radial profile; maximum at the centre since both terms peak there
        self.cap.max_value() - self.eta * self.cap.radius * self.cap.radius
    }

    fn radial_center(&self) -> Option<Vec<f64>> {
        Some(self.cap.center.clone())
    }
}

/// Built-in subsolution families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SubsolutionFamily {
    Cap { sigma: f64, radius: f64, center: Vec<f64> },
    PerturbedCap { sigma: f64, radius: f64, center: Vec<f64>, eta: f64 },
}

impl SubsolutionFamily {
    pub fn build(&self) -> Result<alloc::sync::Arc<dyn Subsolution>> {
        Ok(match self {
            SubsolutionFamily::Cap { sigma, radius, center } => {
                alloc::sync::Arc::new(Cap::new(*sigma, *radius, center.clone())?)
            }
            SubsolutionFamily::PerturbedCap { sigma, radius, center, eta } => alloc::sync::Arc::new(
                PerturbedCap::new(Cap::new(*sigma, *radius, center.clone())?, *eta)?,
            ),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            SubsolutionFamily::Cap { center, .. } | SubsolutionFamily::PerturbedCap { center, .. } => {
                center.len()
            }
        }
    }
}
