//! Parallel transport along polygonal paths, loop monodromy, the non-abelian
//! Stokes comparison and curvature recovery from shrinking loops.
//!
//! Convention: dU/dt = U * A(dγ/dt) with U(0) = 1, so later segments multiply
//! on the right.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{curvature, interpolate_cubic, ConnectionField, CurvatureField, FieldSampler, MAX_DIM};
use crate::lie::exp;
use crate::mat::Mat;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const MAX_STEPS: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// exp(dt * B(midpoint)) per step; second order.
    Midpoint,
    /// Two-term Magnus expansion at the Gauss points; fourth order.
    #[default]
    Magnus,
}

#[derive(Clone, Copy, Debug)]
pub struct TransportOptions {
    pub tol: f64,
    pub scheme: Scheme,
    /// Minimum distance to the singular set; grid spacing when `None`.
    pub clearance: Option<f64>,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions { tol: DEFAULT_TOL, scheme: Scheme::Magnus, clearance: None }
    }
}

impl TransportOptions {
    pub fn with_tol(tol: f64) -> Self {
        TransportOptions { tol, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyPath {
    pub vertices: Vec<Vec<f64>>,
}

impl PolyPath {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidInput("path needs at least two vertices".into()));
        }
        let n = vertices[0].len();
        for w in vertices.windows(2) {
            if w[1].len() != n {
                return Err(Error::InvalidInput("path vertices of mixed dimension".into()));
            }
            if w[0] == w[1] {
                return Err(Error::InvalidInput("consecutive path vertices coincide".into()));
            }
        }
        Ok(PolyPath { vertices })
    }

    pub fn segment(a: &[f64], b: &[f64]) -> Result<Self> {
        Self::new(vec![a.to_vec(), b.to_vec()])
    }

    pub fn reversed(&self) -> Self {
        PolyPath { vertices: self.vertices.iter().rev().cloned().collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub vertices: [Vec<f64>; 3],
}

impl Triangle {
    pub fn new(a: &[f64], b: &[f64], c: &[f64]) -> Self {
        Triangle { vertices: [a.to_vec(), b.to_vec(), c.to_vec()] }
    }

    pub fn loop_path(&self) -> PolyPath {
        let [a, b, c] = &self.vertices;
        PolyPath { vertices: vec![a.clone(), b.clone(), c.clone(), a.clone()] }
    }

    pub fn diameter(&self) -> f64 {
        let d = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let [a, b, c] = &self.vertices;
        d(a, b).max(d(b, c)).max(d(c, a))
    }

    pub fn area(&self) -> f64 {
        let (u, w, _, _) = self.frame();
        let [a, b, c] = &self.vertices;
        let e1: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let e2: Vec<f64> = c.iter().zip(a).map(|(x, y)| x - y).collect();
        let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).sum::<f64>();
        0.5 * (dot(&e1, &u) * dot(&e2, &w) - dot(&e1, &w) * dot(&e2, &u)).abs()
    }

    /// Orthonormal frame (u, w) of the triangle's plane oriented by the
    /// vertex order, plus the two edge lengths used to build it.
    fn frame(&self) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let [a, b, c] = &self.vertices;
        let e1: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let e2: Vec<f64> = c.iter().zip(a).map(|(x, y)| x - y).collect();
        let l1 = e1.iter().map(|x| x * x).sum::<f64>().sqrt();
        let u: Vec<f64> = e1.iter().map(|x| x / l1).collect();
        let p = e2.iter().zip(&u).map(|(x, y)| x * y).sum::<f64>();
        let perp: Vec<f64> = e2.iter().zip(&u).map(|(x, y)| x - p * y).collect();
        let l2 = perp.iter().map(|x| x * x).sum::<f64>().sqrt();
        let w: Vec<f64> = perp.iter().map(|x| x / l2).collect();
        (u, w, l1, l2)
    }

    /// Midpoint split of the longest edge into two halves.
    pub fn bisect(&self) -> (Triangle, Triangle) {
        let [a, b, c] = &self.vertices;
        let mid = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| 0.5 * (x + y)).collect() };
        let d = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let (lab, lbc, lca) = (d(a, b), d(b, c), d(c, a));
        if lab >= lbc && lab >= lca {
            let m = mid(a, b);
            (Triangle::new(a, &m, c), Triangle::new(&m, b, c))
        } else if lbc >= lca {
            let m = mid(b, c);
            (Triangle::new(a, b, &m), Triangle::new(a, &m, c))
        } else {
            let m = mid(c, a);
            (Triangle::new(a, b, &m), Triangle::new(&m, b, c))
        }
    }
}

fn check_segment(a: &ConnectionField, x0: &[f64], x1: &[f64], opts: &TransportOptions) -> Result<()> {
    if let Some(s) = &a.singular {
        let clearance = opts.clearance.unwrap_or(a.grid.h());
        let rho = s.segment_rho(x0, x1);
        if rho <= clearance {
            return Err(Error::PathHitsSingularSet { rho, clearance });
        }
    }
    Ok(())
}

/// Parameter values in (0,1) where the segment crosses a grid plane; the
/// interpolated integrand is only piecewise polynomial across them.
fn grid_breaks(a: &ConnectionField, x0: &[f64], x1: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0, 1.0];
    if a.sampler.is_none() {
        let scale = (a.grid.m - 1) as f64;
        for k in 0..a.grid.n {
            let (p, q) = (x0[k] * scale, x1[k] * scale);
            if (q - p).abs() < 1e-15 {
                continue;
            }
            let (lo, hi) = (p.min(q), p.max(q));
            let mut j = lo.floor() + 1.0;
            while j < hi {
                t.push((j - p) / (q - p));
                j += 1.0;
            }
        }
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        t.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    }
    t
}

struct Integrand<'a> {
    a: &'a ConnectionField,
    x0: [f64; MAX_DIM],
    v: [f64; MAX_DIM],
    buf: [Mat; MAX_DIM],
}

impl Integrand<'_> {
    /// v . A(x0 + t v)
    fn at(&mut self, t: f64) -> Mat {
        let n = self.a.grid.n;
        let mut x = [0.0; MAX_DIM];
        for k in 0..n {
            x[k] = self.x0[k] + t * self.v[k];
        }
        self.a.eval(&x[..n], &mut self.buf[..n]);
        let mut b = self.buf[0] * self.v[0];
        for k in 1..n {
            b += self.buf[k] * self.v[k];
        }
        b
    }

    fn step(&mut self, t: f64, dt: f64, scheme: Scheme) -> Mat {
        const C: f64 = 0.288_675_134_594_812_9; // sqrt(3)/6
        let omega = match scheme {
            Scheme::Midpoint => self.at(t + 0.5 * dt) * dt,
            Scheme::Magnus => {
                let b1 = self.at(t + (0.5 - C) * dt);
                let b2 = self.at(t + (0.5 + C) * dt);
                (b1 + b2) * (0.5 * dt) + b1.commutator(&b2) * (0.5 * C * dt * dt)
            }
        };
        exp(&omega)
    }

    /// One step against two half steps, bisecting until the Richardson error
    /// estimate of the two-half-step product is below `tol_rate * dt`.
    fn refine(&mut self, t: f64, dt: f64, whole: Mat, tol_rate: f64, scheme: Scheme, budget: &mut usize) -> Result<Mat> {
        let half = 0.5 * dt;
        let l = self.step(t, half, scheme);
        let r = self.step(t + half, half, scheme);
        let fine = l * r;
        if *budget < 2 {
            return Err(Error::NoConvergence { steps: MAX_STEPS });
        }
        *budget -= 2;
        // local orders 3 and 5: the finer product carries diff / (2^p - 1)
        let factor = match scheme {
            Scheme::Midpoint => 3.0,
            Scheme::Magnus => 15.0,
        };
        if (fine - whole).op_norm() <= factor * tol_rate * dt || dt < 1e-12 {
            return Ok(fine);
        }
        let a = self.refine(t, half, l, tol_rate, scheme, budget)?;
        let b = self.refine(t + half, half, r, tol_rate, scheme, budget)?;
        Ok(a * b)
    }
}

/// Transport along the straight segment x0 -> x1.
pub fn transport_segment(a: &ConnectionField, x0: &[f64], x1: &[f64], opts: &TransportOptions) -> Result<Mat> {
    check_segment(a, x0, x1, opts)?;
    let n = a.grid.n;
    let mut ig = Integrand { a, x0: [0.0; MAX_DIM], v: [0.0; MAX_DIM], buf: [Mat::zeros(a.group.dim()); MAX_DIM] };
    for k in 0..n {
        ig.x0[k] = x0[k];
        ig.v[k] = x1[k] - x0[k];
    }
    let len = ig.v[..n].iter().map(|x| x * x).sum::<f64>().sqrt();
    let breaks = grid_breaks(a, x0, x1);
    let mut total = Mat::identity(a.group.dim());
    let mut budget = MAX_STEPS;
    let tol_rate = opts.tol;
    for w in breaks.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        // start at roughly one step per grid cell
        let steps = ((len * (t1 - t0) / a.grid.h()).ceil() as usize).max(1);
        let dt = (t1 - t0) / steps as f64;
        for s in 0..steps {
            let t = t0 + s as f64 * dt;
            let whole = ig.step(t, dt, opts.scheme);
            total = total * ig.refine(t, dt, whole, tol_rate, opts.scheme, &mut budget)?;
        }
    }
    Ok(total)
}

/// Ordered transport along a polygonal path.
pub fn transport(a: &ConnectionField, path: &PolyPath, tol: f64) -> Result<Mat> {
    transport_with(a, path, &TransportOptions::with_tol(tol))
}

pub fn transport_with(a: &ConnectionField, path: &PolyPath, opts: &TransportOptions) -> Result<Mat> {
    let mut u = Mat::identity(a.group.dim());
    for w in path.vertices.windows(2) {
        u = u * transport_segment(a, &w[0], &w[1], opts)?;
    }
    Ok(u)
}

/// Transport around x0 -> x1 -> x2 -> x0.
pub fn monodromy(a: &ConnectionField, tri: &Triangle, tol: f64) -> Result<Mat> {
    transport(a, &tri.loop_path(), tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

// Gauss-Legendre nodes and weights on [0,1], five points.
const GL5: [(f64, f64); 5] = [
    (0.046_910_077_030_668_0, 0.118_463_442_528_094_5),
    (0.230_765_344_947_158_5, 0.239_314_335_249_683_2),
    (0.5, 0.284_444_444_444_444_4),
    (0.769_234_655_052_841_5, 0.239_314_335_249_683_2),
    (0.953_089_922_969_332_0, 0.118_463_442_528_094_5),
];

/// Collapsed tensor Gauss rule on one triangle (exact for degree 8).
fn triangle_rule(a: &[f64], b: &[f64], c: &[f64], area: f64, f: &mut impl FnMut(&[f64]) -> f64) -> f64 {
    let n = a.len();
    let mut x = [0.0; MAX_DIM];
    let mut acc = 0.0;
    for &(s, ws) in &GL5 {
        for &(t, wt) in &GL5 {
            // (s, t) -> a + s (b - a) + s t (c - b), Jacobian 2 * area * s
            for k in 0..n {
                x[k] = a[k] + s * (b[k] - a[k]) + s * t * (c[k] - b[k]);
            }
            acc += ws * wt * s * f(&x[..n]);
        }
    }
    2.0 * area * acc
}

/// Integral of `f` over a triangle by uniform 4-way refinement until the
/// relative change drops below `rel_tol`.
pub fn integrate_triangle(tri: &Triangle, rel_tol: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let area = tri.area();
    let mut tris = vec![tri.vertices.clone()];
    let mut prev = triangle_rule(&tris[0][0], &tris[0][1], &tris[0][2], area, &mut f);
    for level in 1..=6 {
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in &tris {
            let mid = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| 0.5 * (x + y)).collect() };
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            next.push([a.clone(), ab.clone(), ca.clone()]);
            next.push([ab.clone(), b.clone(), bc.clone()]);
            next.push([ca.clone(), bc.clone(), c.clone()]);
            next.push([bc, ca, ab]);
        }
        tris = next;
        let sub_area = area / 4f64.powi(level);
        let cur: f64 = tris.iter().map(|[a, b, c]| triangle_rule(a, b, c, sub_area, &mut f)).sum();
        let done = (cur - prev).abs() <= rel_tol * cur.abs() || cur.abs() < 1e-300;
        prev = cur;
        if done {
            break;
        }
    }
    prev
}

/// Curvature evaluation off the grid: exact when the field carries a sampler
/// that provides it, interpolated stencil curvature otherwise.
pub struct CurvatureProbe {
    sampler: Option<Arc<dyn FieldSampler>>,
    nodal: Option<CurvatureField>,
    npairs: usize,
    n: usize,
    dim: usize,
}

impl CurvatureProbe {
    pub fn new(a: &ConnectionField) -> Self {
        let n = a.grid.n;
        let npairs = a.grid.npairs();
        let mut probe = CurvatureProbe { sampler: None, nodal: None, npairs, n, dim: a.group.dim() };
        if let Some(s) = &a.sampler {
            let mut tmp = vec![Mat::zeros(a.group.dim()); npairs];
            let x = vec![0.5; n];
            if s.curvature(&x, &mut tmp) {
                probe.sampler = Some(s.clone());
                return probe;
            }
        }
        probe.nodal = Some(curvature(a));
        probe
    }

    pub fn eval(&self, x: &[f64], out: &mut [Mat]) {
        match (&self.sampler, &self.nodal) {
            (Some(s), _) => {
                s.curvature(x, out);
            }
            (None, Some(f)) => interpolate_cubic(&f.grid, &f.data, self.npairs, x, out),
            _ => unreachable!(),
        }
    }

    /// F(u, w) = sum_{a<b} (u_a w_b - u_b w_a) F_ab at x.
    pub fn pulled_back(&self, x: &[f64], u: &[f64], w: &[f64]) -> Mat {
        let mut buf = [Mat::zeros(self.dim); 6];
        self.eval(x, &mut buf[..self.npairs]);
        let mut out = Mat::zeros(self.dim);
        let mut k = 0;
        for al in 0..self.n {
            for be in (al + 1)..self.n {
                out += buf[k] * (u[al] * w[be] - u[be] * w[al]);
                k += 1;
            }
        }
        out
    }
}

/// |monodromy - 1| against the integral of |F| over the solid triangle, F
/// restricted to the triangle's plane.
pub fn stokes_check(a: &ConnectionField, tri: &Triangle, tol: f64) -> Result<StokesReport> {
    stokes_check_with(a, &CurvatureProbe::new(a), tri, tol)
}

pub fn stokes_check_with(a: &ConnectionField, probe: &CurvatureProbe, tri: &Triangle, tol: f64) -> Result<StokesReport> {
    if let Some(s) = &a.singular {
        let clearance = a.grid.h();
        let [p, q, r] = &tri.vertices;
        let rho = s.triangle_rho(p, q, r);
        if rho <= clearance {
            return Err(Error::TriangleHitsSingularSet { rho, clearance });
        }
    }
    let hol = monodromy(a, tri, tol)?;
    let lhs = (hol - Mat::identity(a.group.dim())).op_norm();
    let rhs = stokes_rhs(probe, tri);
    let ratio = if rhs == 0.0 {
        if lhs <= tol {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        lhs / rhs
    };
    Ok(StokesReport { lhs, rhs, ratio })
}

pub fn stokes_rhs(probe: &CurvatureProbe, tri: &Triangle) -> f64 {
    let (u, w, _, _) = tri.frame();
    integrate_triangle(tri, 1e-6, |x| probe.pulled_back(x, &u, &w).op_norm())
}

#[derive(Clone, Debug)]
pub struct LoopCurvature {
    /// 2 (monodromy - 1) / eps^2 for each eps.
    pub estimates: Vec<Mat>,
    /// Polynomial extrapolation of the estimates to eps = 0.
    pub limit: Mat,
    /// Observed convergence order from the last three estimates.
    pub order: f64,
}

/// Recovers F(v1, v2) at x0 from triangles with edges eps v1, eps v2 centred on x0.
pub fn curvature_from_loops(
    a: &ConnectionField,
    x0: &[f64],
    v1: &[f64],
    v2: &[f64],
    eps: &[f64],
    tol: f64,
) -> Result<LoopCurvature> {
    if eps.len() < 2 {
        return Err(Error::InvalidInput("need at least two loop sizes".into()));
    }
    let id = Mat::identity(a.group.dim());
    let mut estimates = Vec::with_capacity(eps.len());
    for &e in eps {
        // centroid at x0 so the estimate has no O(eps) term
        let p0: Vec<f64> = (0..x0.len()).map(|k| x0[k] - e * (v1[k] + v2[k]) / 3.0).collect();
        let p1: Vec<f64> = p0.iter().zip(v1).map(|(x, v)| x + e * v).collect();
        let p2: Vec<f64> = p0.iter().zip(v2).map(|(x, v)| x + e * v).collect();
        let hol = monodromy(a, &Triangle::new(&p0, &p1, &p2), tol)?;
        estimates.push((hol - id) * (2.0 / (e * e)));
    }
    // Neville tableau for the value at eps = 0 of a polynomial in eps
    let mut t = estimates.clone();
    for j in 1..eps.len() {
        for k in (j..eps.len()).rev() {
            let r = eps[k - j] / eps[k];
            t[k] = t[k] + (t[k] - t[k - 1]) * (1.0 / (r - 1.0));
        }
    }
    let limit = t[eps.len() - 1];
    let order = if eps.len() >= 3 {
        let k = eps.len();
        let d1 = (estimates[k - 2] - estimates[k - 3]).fro_norm();
        let d2 = (estimates[k - 1] - estimates[k - 2]).fro_norm();
        if d2 > 0.0 && d1 > 0.0 {
            (d1 / d2).ln() / (eps[k - 2] / eps[k - 1]).ln()
        } else {
            f64::INFINITY
        }
    } else {
        f64::NAN
    };
    Ok(LoopCurvature { estimates, limit, order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use crate::lie::{pauli, Group};
    use num_complex::Complex64 as C64;

    fn gen(k: usize) -> Mat {
        pauli()[k] * C64::new(0.0, 1.0)
    }

    #[test]
    fn zero_connection_transports_to_identity() {
        let g = Grid::new(3, 9).unwrap();
        let a = ConnectionField::zeros(g, Group::SU2);
        let p = PolyPath::new(vec![vec![0.1, 0.2, 0.3], vec![0.9, 0.4, 0.1], vec![0.5, 0.5, 0.5]]).unwrap();
        assert!((transport(&a, &p, 1e-10).unwrap() - Mat::identity(2)).fro_norm() < 1e-15);
    }

    #[test]
    fn constant_connection_gives_exponential() {
        let g = Grid::new(3, 9).unwrap();
        let c = [gen(0) * 0.7, gen(1) * -1.1, gen(2) * 0.4];
        let a = ConnectionField::from_fn(g, Group::SU2, |_, al| c[al]);
        let (x0, x1) = ([0.1, 0.8, 0.3], [0.75, 0.2, 0.9]);
        let u = transport(&a, &PolyPath::segment(&x0, &x1).unwrap(), 1e-11).unwrap();
        let mut v = Mat::zeros(2);
        for k in 0..3 {
            v += c[k] * (x1[k] - x0[k]);
        }
        assert!((u - exp(&v)).op_norm() < 1e-11);
    }

    #[test]
    fn schemes_agree() {
        let g = Grid::new(2, 9).unwrap();
        let a = ConnectionField::from_fn(g, Group::SU2, |p, al| {
            gen(al) * (2.0 * p[0] + p[1]).sin() + gen(2) * (p[0] * p[1] * 3.0)
        });
        let seg = ([0.05, 0.1], [0.9, 0.95]);
        let m = transport_segment(&a, &seg.0, &seg.1, &TransportOptions::with_tol(1e-12)).unwrap();
        let opts = TransportOptions { tol: 1e-10, scheme: Scheme::Midpoint, clearance: None };
        let r = transport_segment(&a, &seg.0, &seg.1, &opts).unwrap();
        assert!((m - r).op_norm() < 1e-9);
    }

    #[test]
    fn loop_inversion() {
        let g = Grid::new(3, 9).unwrap();
        let a = ConnectionField::from_fn(g, Group::SU2, |p, al| gen(al) * (p[0] + 2.0 * p[2]).cos() + gen((al + 1) % 3) * p[1]);
        let tri = Triangle::new(&[0.1, 0.2, 0.3], &[0.8, 0.3, 0.5], &[0.4, 0.9, 0.1]);
        let fwd = monodromy(&a, &tri, 1e-10).unwrap();
        let back = transport(&a, &tri.loop_path().reversed(), 1e-10).unwrap();
        assert!((fwd * back - Mat::identity(2)).op_norm() < 2e-10);
    }

    #[test]
    fn abelian_small_loop_recovers_field_strength() {
        let g = Grid::new(2, 9).unwrap();
        let a = ConnectionField::from_fn(g, Group::SU2, |p, al| if al == 0 { gen(2) * p[1] } else { Mat::zeros(2) });
        let lc = curvature_from_loops(&a, &[0.4, 0.4], &[1.0, 0.0], &[0.0, 1.0], &[0.08, 0.04, 0.02, 0.01], 1e-13).unwrap();
        assert!((lc.limit + gen(2)).op_norm() < 1e-7, "{:?}", lc.limit);
    }

    #[test]
    fn path_near_singular_set_is_rejected() {
        let g = Grid::new(3, 9).unwrap();
        let mut a = ConnectionField::zeros(g, Group::SU2);
        a.singular = Some(Arc::new(crate::geometry::SingularSetModel::point(&[0.5, 0.5, 0.5])));
        let r = transport(&a, &PolyPath::segment(&[0.0, 0.5, 0.5], &[1.0, 0.5, 0.5]).unwrap(), 1e-9);
        assert!(matches!(r, Err(Error::PathHitsSingularSet { .. })));
        assert!(transport(&a, &PolyPath::segment(&[0.0, 0.0, 0.5], &[1.0, 0.0, 0.5]).unwrap(), 1e-9).is_ok());
    }

    #[test]
    fn flat_triangle_has_zero_ratio() {
        let g = Grid::new(2, 9).unwrap();
        let a = ConnectionField::zeros(g, Group::U1);
        let r = stokes_check(&a, &Triangle::new(&[0.1, 0.1], &[0.9, 0.2], &[0.3, 0.8]), 1e-9).unwrap();
        assert_eq!(r.ratio, 0.0);
        assert!(r.lhs <= 1e-9);
    }

    #[test]
    fn triangle_quadrature_integrates_polynomials() {
        let tri = Triangle::new(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
        // int over unit simplex of x^2 y = 2! 1! / 5! = 1/60
        let v = integrate_triangle(&tri, 1e-12, |x| x[0] * x[0] * x[1]);
        assert!((v - 1.0 / 60.0).abs() < 1e-14);
        assert!((tri.area() - 0.5).abs() < 1e-15);
    }
}
