//! Cartesian discretization of `Ω_ε = {u̲ > ε}` with cut-cell Dirichlet
//! boundaries and finite-difference jets.
//!
//! Lattice nodes sit at integer multiples of `h`. A node is a degree of
//! freedom when `u̲ > ε` there. Along each axis, a dof whose neighbor lies
//! outside gets the fractional distance `θ ∈ (0, 1]` to the crossing of
//! `Γ_ε`, where the Dirichlet value `ε²` is imposed. First and second
//! derivatives use Shortley–Weller weights; mixed derivatives use the
//! 4-point cross with one-sided fallbacks near the boundary.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, bail_domain, Error, Result};
use crate::families::Subsolution;
use crate::linalg::Mat;
use crate::voper::VJet;

/// Subsolution together with the box in which it is sampled.
#[derive(Clone)]
pub struct SubsolutionSpec {
    pub ubar: Arc<dyn Subsolution>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl core::fmt::Debug for SubsolutionSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SubsolutionSpec").field("lo", &self.lo).field("hi", &self.hi).finish()
    }
}

impl SubsolutionSpec {
    /// Use the subsolution's own bounding box.
    pub fn new(ubar: Arc<dyn Subsolution>) -> Self {
        let (lo, hi) = ubar.bounding_box();
        SubsolutionSpec { ubar, lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeTag {
    /// All `2n` axis neighbors are dofs.
    Interior,
    /// A dof with at least one axis neighbor outside `Ω_ε`.
    BoundaryAdjacent,
    Exterior,
}

/// `Σ w_j v_j + constant`, the constant carrying Dirichlet contributions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearForm {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinearForm {
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, w)| w * values[j]).sum::<f64>() + self.constant
    }

    fn scaled_add(&mut self, other: &LinearForm, s: f64) {
        for &(j, w) in &other.terms {
            self.terms.push((j, s * w));
        }
        self.constant += s * other.constant;
    }

    fn push_value(&mut self, v: Value, w: f64) {
        match v {
            Value::Dof(j) => self.terms.push((j, w)),
            Value::Fixed(c) => self.constant += w * c,
        }
    }
}

/// Precomputed stencils of one dof.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JetStencil {
    pub dv: Vec<LinearForm>,
    /// Upper triangle of `D²v`, row by row: (0,0), (0,1), …, (1,1), ….
    pub d2v: Vec<LinearForm>,
}

/// One crossing of `Γ_ε` on a grid edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub dof: usize,
    pub axis: usize,
    /// +1 or −1.
    pub dir: i8,
    pub theta: f64,
    pub point: Vec<f64>,
}

/// A field sampled at the dofs of a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub name: String,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(name: &str, values: Vec<f64>) -> Self {
        ScalarField { name: String::from(name), values }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug)]
enum Value {
    Dof(usize),
    Fixed(f64),
}

/// Frozen discretization of `Ω_ε`.
#[derive(Clone, Debug)]
pub struct GridDomain {
    pub n: usize,
    pub h: f64,
    /// Level actually used; differs from the request after a degeneracy retry.
    pub eps: f64,
    pub eps_requested: f64,
    /// Integer lattice coordinate of lattice index 0 along each axis.
    pub lattice_lo: Vec<i64>,
    pub counts: Vec<usize>,
    strides: Vec<usize>,
    pub tags: Vec<NodeTag>,
    dof_of: Vec<Option<usize>>,
    /// Lattice index of each dof.
    pub nodes: Vec<usize>,
    /// Per dof, `2n` fractions indexed `2·axis + (0 for −, 1 for +)`.
    pub cut: Vec<Vec<f64>>,
    pub boundary_value: f64,
    pub crossings: Vec<Crossing>,
    stencils: Vec<JetStencil>,
    pub components: usize,
    pub warnings: Vec<String>,
}

const BISECTION_TOL: f64 = 1e-10;

impl GridDomain {
    pub fn num_dofs(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.tags.len()
    }

    pub fn lattice_coords(&self, node: usize) -> Vec<i64> {
        (0..self.n).map(|a| (node / self.strides[a] % self.counts[a]) as i64 + self.lattice_lo[a]).collect()
    }

    pub fn node_point(&self, node: usize) -> Vec<f64> {
        self.lattice_coords(node).iter().map(|&i| i as f64 * self.h).collect()
    }

    pub fn point(&self, dof: usize) -> Vec<f64> {
        self.node_point(self.nodes[dof])
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.dof_of.get(node).copied().flatten()
    }

    pub fn tag(&self, dof: usize) -> NodeTag {
        self.tags[self.nodes[dof]]
    }

    /// Lattice index at integer coordinates, if inside the lattice.
    pub fn node_at(&self, coords: &[i64]) -> Option<usize> {
        let mut idx = 0;
        for a in 0..self.n {
            let c = coords[a] - self.lattice_lo[a];
            if c < 0 || c as usize >= self.counts[a] {
                return None;
            }
            idx += c as usize * self.strides[a];
        }
        Some(idx)
    }

    /// Dof of the lattice neighbor of `dof` offset by `offset`.
    pub fn neighbor(&self, dof: usize, offset: &[i64]) -> Option<usize> {
        let mut c = self.lattice_coords(self.nodes[dof]);
        for a in 0..self.n {
            c[a] += offset[a];
        }
        self.node_at(&c).and_then(|node| self.dof(node))
    }

    pub fn stencil(&self, dof: usize) -> &JetStencil {
        &self.stencils[dof]
    }

    /// Finite-difference jet of `values` at a dof.
    pub fn jet_at(&self, values: &[f64], dof: usize) -> VJet {
        let st = &self.stencils[dof];
        let n = self.n;
        let dv = st.dv.iter().map(|f| f.eval(values)).collect();
        let mut d2v = Mat::zeros(n);
        let mut m = 0;
        for s in 0..n {
            for t in s..n {
                let x = st.d2v[m].eval(values);
                d2v[(s, t)] = x;
                d2v[(t, s)] = x;
                m += 1;
            }
        }
        VJet { v: values[dof], dv, d2v }
    }

    /// All dofs whose 3^n lattice block consists of `Interior` dofs.
    pub fn deep_interior(&self) -> Vec<usize> {
        (0..self.num_dofs())
            .filter(|&d| {
                block_offsets(self.n).iter().all(|off| {
                    self.neighbor(d, off).map(|q| self.tag(q) == NodeTag::Interior).unwrap_or(false)
                })
            })
            .collect()
    }
}

/// Finite-difference jet of a field at a lattice node.
pub fn fd_jet(domain: &GridDomain, field: &ScalarField, node: usize) -> Result<VJet> {
    if field.values.len() != domain.num_dofs() {
        bail_arg!("field has {} values, domain has {} dofs", field.values.len(), domain.num_dofs());
    }
    match domain.dof(node) {
        Some(d) => Ok(domain.jet_at(&field.values, d)),
        None => bail_arg!("node {node} is exterior to the domain"),
    }
}

fn block_offsets(n: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for o in &out {
            for d in [-1i64, 0, 1] {
                let mut c = o.clone();
                c.push(d);
                next.push(c);
            }
        }
        out = next;
    }
    out
}

enum BuildFailure {
    DoubleRoot(Vec<f64>),
    Fatal(Error),
}

impl From<Error> for BuildFailure {
    fn from(e: Error) -> Self {
        BuildFailure::Fatal(e)
    }
}

/// Discretize `Ω_ε` on the lattice `hℤⁿ`.
///
/// A grid edge on which `u̲ − ε` has a numerically double root makes the
/// level set degenerate; the build then retries once with `ε` raised by
/// `1e−8 (1 + ε)`.
pub fn build_domain(sub: &SubsolutionSpec, eps: f64, h: f64) -> Result<GridDomain> {
    if !(eps > 0.0) || !(h > 0.0) {
        bail_arg!("need eps > 0 and h > 0, got eps = {eps}, h = {h}");
    }
    if sub.ubar.dim() != sub.dim() {
        bail_arg!("subsolution dimension {} does not match box dimension {}", sub.ubar.dim(), sub.dim());
    }
    if eps >= sub.ubar.max_value() {
        bail_domain!("eps = {eps} is not below max of the subsolution ({})", sub.ubar.max_value());
    }
    match build_inner(sub, eps, h) {
        Ok(d) => Ok(d),
        Err(BuildFailure::Fatal(e)) => Err(e),
        Err(BuildFailure::DoubleRoot(at)) => {
            let eps2 = eps + 1e-8 * (1.0 + eps);
            match build_inner(sub, eps2, h) {
                Ok(mut d) => {
                    d.eps_requested = eps;
                    d.warnings.push(format!(
                        "degenerate level set near {at:?}; eps raised from {eps} to {eps2}"
                    ));
                    Ok(d)
                }
                Err(BuildFailure::Fatal(e)) => Err(e),
                Err(BuildFailure::DoubleRoot(at)) => {
                    bail_domain!("level set u = {eps2} is degenerate near {at:?} after retry")
                }
            }
        }
    }
}

fn build_inner(sub: &SubsolutionSpec, eps: f64, h: f64) -> core::result::Result<GridDomain, BuildFailure> {
    let n = sub.dim();
    let ubar = &*sub.ubar;
    let lattice_lo: Vec<i64> = sub.lo.iter().map(|&l| (l / h).floor() as i64 - 2).collect();
    let lattice_hi: Vec<i64> = sub.hi.iter().map(|&x| (x / h).ceil() as i64 + 2).collect();
    let counts: Vec<usize> = (0..n).map(|a| (lattice_hi[a] - lattice_lo[a] + 1) as usize).collect();
    // shortest axis varies fastest so that the Jacobian bandwidth is minimal
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&a| counts[a]);
    let mut strides = vec![0; n];
    let mut s = 1;
    for &a in &order {
        strides[a] = s;
        s *= counts[a];
    }
    let total = s;

    let coords = |node: usize| -> Vec<i64> {
        (0..n).map(|a| (node / strides[a] % counts[a]) as i64 + lattice_lo[a]).collect()
    };
    let index = |c: &[i64]| -> Option<usize> {
        let mut idx = 0;
        for a in 0..n {
            let r = c[a] - lattice_lo[a];
            if r < 0 || r as usize >= counts[a] {
                return None;
            }
            idx += r as usize * strides[a];
        }
        Some(idx)
    };
    let point = |c: &[i64]| -> Vec<f64> { c.iter().map(|&i| i as f64 * h).collect() };

    let inside: Vec<bool> = (0..total).map(|node| ubar.value(&point(&coords(node))) > eps).collect();

    // dofs in lattice order
    let mut dof_of = vec![None; total];
    let mut nodes = Vec::new();
    for node in 0..total {
        if inside[node] {
            dof_of[node] = Some(nodes.len());
            nodes.push(node);
        }
    }
    if nodes.is_empty() {
        return Err(Error::Domain(format!("no grid node has u > {eps} at h = {h}")).into());
    }

    let mut tags = vec![NodeTag::Exterior; total];
    let mut cut = Vec::with_capacity(nodes.len());
    let mut crossings = Vec::new();
    for (d, &node) in nodes.iter().enumerate() {
        let c = coords(node);
        let x = point(&c);
        let mut fr = vec![1.0; 2 * n];
        let mut all_in = true;
        for a in 0..n {
            for (side, dir) in [(0usize, -1i64), (1, 1)] {
                let mut cn = c.clone();
                cn[a] += dir;
                let nb = index(&cn).ok_or_else(|| {
                    Error::Domain(format!("domain touches the lattice edge at {x:?}; enlarge the box"))
                })?;
                if !inside[nb] {
                    all_in = false;
                    let theta = bisect_crossing(ubar, &x, a, dir as f64, h, eps)?;
                    let mut p = x.clone();
                    p[a] += dir as f64 * theta * h;
                    crossings.push(Crossing { dof: d, axis: a, dir: dir as i8, theta, point: p });
                    fr[2 * a + side] = theta;
                }
            }
        }
        tags[node] = if all_in { NodeTag::Interior } else { NodeTag::BoundaryAdjacent };
        cut.push(fr);
    }

    let mut dom = GridDomain {
        n,
        h,
        eps,
        eps_requested: eps,
        lattice_lo,
        counts,
        strides,
        tags,
        dof_of,
        nodes,
        cut,
        boundary_value: eps * eps,
        crossings,
        stencils: Vec::new(),
        components: 0,
        warnings: Vec::new(),
    };
    dom.components = count_components(&dom);
    if dom.components > 1 {
        dom.warnings.push(format!("domain has {} connected components", dom.components));
    }
    let stencils = (0..dom.num_dofs()).map(|d| build_stencil(&dom, d)).collect::<Vec<_>>();
    let mut out = Vec::with_capacity(stencils.len());
    for (d, s) in stencils.into_iter().enumerate() {
        match s {
            Some(s) => out.push(s),
            None => {
                dom.warnings.push(format!("isolated node at {:?}; mixed derivatives dropped", dom.point(d)));
                out.push(build_stencil_dropping_mixed(&dom, d));
            }
        }
    }
    dom.stencils = out;
    Ok(dom)
}

fn bisect_crossing(
    ubar: &dyn Subsolution,
    x: &[f64],
    axis: usize,
    dir: f64,
    h: f64,
    eps: f64,
) -> core::result::Result<f64, BuildFailure> {
    let f = |t: f64| {
        let mut p = x.to_vec();
        p[axis] += dir * t * h;
        ubar.value(&p) - eps
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = (0.5 * (lo + hi)).max(BISECTION_TOL);
    let mut p = x.to_vec();
    p[axis] += dir * theta * h;
    let slope = ubar.gradient(&p)[axis];
    if !slope.is_finite() || slope.abs() * h < 1e-8 * (1.0 + eps) {
        return Err(BuildFailure::DoubleRoot(p));
    }
    Ok(theta)
}

fn count_components(dom: &GridDomain) -> usize {
    let nd = dom.num_dofs();
    let mut label = vec![usize::MAX; nd];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..nd {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = count;
        stack.push(start);
        while let Some(d) = stack.pop() {
            for a in 0..dom.n {
                for dir in [-1i64, 1] {
                    let mut off = vec![0; dom.n];
                    off[a] = dir;
                    if let Some(q) = dom.neighbor(d, &off) {
                        if label[q] == usize::MAX {
                            label[q] = count;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        count += 1;
    }
    count
}

// Neighbor along an axis: the value source and its distance in units of h.
fn axis_neighbor(dom: &GridDomain, d: usize, axis: usize, dir: i64) -> (Value, f64) {
    let side = if dir < 0 { 0 } else { 1 };
    let theta = dom.cut[d][2 * axis + side];
    let mut off = vec![0; dom.n];
    off[axis] = dir;
    match dom.neighbor(d, &off) {
        Some(q) if theta == 1.0 => (Value::Dof(q), 1.0),
        _ => (Value::Fixed(dom.boundary_value), theta),
    }
}

/// Shortley–Weller first derivative along `axis` at dof `d`.
fn first_derivative(dom: &GridDomain, d: usize, axis: usize) -> LinearForm {
    let h = dom.h;
    let (vm, a) = axis_neighbor(dom, d, axis, -1);
    let (vp, b) = axis_neighbor(dom, d, axis, 1);
    let mut f = LinearForm::default();
    f.push_value(vm, -b / (a * (a + b) * h));
    f.push_value(Value::Dof(d), (b - a) / (a * b * h));
    f.push_value(vp, a / (b * (a + b) * h));
    f
}

/// Shortley–Weller second derivative along `axis` at dof `d`.
fn second_derivative(dom: &GridDomain, d: usize, axis: usize) -> LinearForm {
    let h2 = dom.h * dom.h;
    let (vm, a) = axis_neighbor(dom, d, axis, -1);
    let (vp, b) = axis_neighbor(dom, d, axis, 1);
    let mut f = LinearForm::default();
    f.push_value(vm, 2.0 / (a * (a + b) * h2));
    f.push_value(Value::Dof(d), -2.0 / (a * b * h2));
    f.push_value(vp, 2.0 / (b * (a + b) * h2));
    f
}

fn offset2(n: usize, a: usize, sa: i64, b: usize, sb: i64) -> Vec<i64> {
    let mut o = vec![0; n];
    o[a] += sa;
    o[b] += sb;
    o
}

// One-sided mixed derivative from quadrant (sa, sb): needs the corner and
// both axis neighbors at full distance.
fn quadrant(dom: &GridDomain, d: usize, a: usize, sa: i64, b: usize, sb: i64) -> Option<LinearForm> {
    let n = dom.n;
    let pa = dom.neighbor(d, &offset2(n, a, sa, b, 0))?;
    let pb = dom.neighbor(d, &offset2(n, a, 0, b, sb))?;
    let pab = dom.neighbor(d, &offset2(n, a, sa, b, sb))?;
    let s = (sa * sb) as f64 / (dom.h * dom.h);
    Some(LinearForm { terms: vec![(pab, s), (pa, -s), (pb, -s), (d, s)], constant: 0.0 })
}

fn mixed_derivative(dom: &GridDomain, d: usize, a: usize, b: usize) -> Option<LinearForm> {
    let n = dom.n;
    let h2 = dom.h * dom.h;
    let corners = [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)];
    let c: Vec<Option<usize>> =
        corners.iter().map(|&(sa, sb, _)| dom.neighbor(d, &offset2(n, a, sa, b, sb))).collect();
    if c.iter().all(|x| x.is_some()) {
        let terms = corners.iter().zip(&c).map(|(&(_, _, w), q)| (q.unwrap(), w / (4.0 * h2))).collect();
        return Some(LinearForm { terms, constant: 0.0 });
    }
    for pair in [[(1, 1), (-1, -1)], [(1, -1), (-1, 1)]] {
        let q0 = quadrant(dom, d, a, pair[0].0, b, pair[0].1);
        let q1 = quadrant(dom, d, a, pair[1].0, b, pair[1].1);
        if let (Some(q0), Some(q1)) = (q0, q1) {
            let mut f = LinearForm::default();
            f.scaled_add(&q0, 0.5);
            f.scaled_add(&q1, 0.5);
            return Some(f);
        }
    }
    for (sa, sb) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
        if let Some(q) = quadrant(dom, d, a, sa, b, sb) {
            return Some(q);
        }
    }
    // difference of first derivatives across an axis neighbor
    for (along, across) in [(a, b), (b, a)] {
        for s in [1i64, -1] {
            let mut off = vec![0; n];
            off[across] = s;
            if let Some(q) = dom.neighbor(d, &off) {
                let mut f = LinearForm::default();
                f.scaled_add(&first_derivative(dom, q, along), s as f64 / dom.h);
                f.scaled_add(&first_derivative(dom, d, along), -(s as f64) / dom.h);
                return Some(f);
            }
        }
    }
    None
}

fn build_stencil(dom: &GridDomain, d: usize) -> Option<JetStencil> {
    let n = dom.n;
    let dv = (0..n).map(|a| first_derivative(dom, d, a)).collect();
    let mut d2v = Vec::with_capacity(n * (n + 1) / 2);
    for s in 0..n {
        for t in s..n {
            if s == t {
                d2v.push(second_derivative(dom, d, s));
            } else {
                d2v.push(mixed_derivative(dom, d, s, t)?);
            }
        }
    }
    Some(JetStencil { dv, d2v })
}

fn build_stencil_dropping_mixed(dom: &GridDomain, d: usize) -> JetStencil {
    let n = dom.n;
    let dv = (0..n).map(|a| first_derivative(dom, d, a)).collect();
    let mut d2v = Vec::new();
    for s in 0..n {
        for t in s..n {
            d2v.push(if s == t { second_derivative(dom, d, s) } else { LinearForm::default() });
        }
    }
    JetStencil { dv, d2v }
}
