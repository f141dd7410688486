//! Nodal lattice representation of connections, curvature and gauge
//! transformations on uniform grids over [0,1]^n.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SingularSetModel;
use crate::lie::Group;
use crate::mat::Mat;

pub const MAX_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub m: usize,
}

impl Grid {
    pub fn new(n: usize, m: usize) -> Result<Grid> {
        if !(2..=MAX_DIM).contains(&n) || m < 5 {
            return Err(Error::InvalidInput(format!("grid needs 2 <= n <= 4 and m >= 5, got n={n} m={m}")));
        }
        Ok(Grid { n, m })
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / (self.m - 1) as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major stride of `axis` (axis 0 varies slowest).
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.m.pow((self.n - 1 - axis) as u32)
    }

    #[inline]
    pub fn multi(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for a in (0..self.n).rev() {
            out[a] = idx % self.m;
            idx /= self.m;
        }
        out
    }

    #[inline]
    pub fn index(&self, mi: &[usize]) -> usize {
        mi[..self.n].iter().fold(0, |acc, &i| acc * self.m + i)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [f64; MAX_DIM] {
        let mi = self.multi(idx);
        let h = self.h();
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.n {
            x[a] = mi[a] as f64 * h;
        }
        x
    }

    /// Distance in nodes to the nearest face.
    pub fn boundary_depth(&self, idx: usize) -> usize {
        let mi = self.multi(idx);
        (0..self.n).map(|a| mi[a].min(self.m - 1 - mi[a])).min().unwrap()
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.boundary_depth(idx) == 0
    }

    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut mi = [0usize; MAX_DIM];
        for a in 0..self.n {
            let t = (x[a] * (self.m - 1) as f64).round();
            mi[a] = t.clamp(0.0, (self.m - 1) as f64) as usize;
        }
        self.index(&mi)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x[..self.n].iter().all(|&v| (0.0..=1.0).contains(&v))
    }

    pub fn diameter(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// Ordered index pairs (alpha < beta) in storage order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut p = Vec::new();
        for a in 0..self.n {
            for b in (a + 1)..self.n {
                p.push((a, b));
            }
        }
        p
    }

    pub fn npairs(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn pair_index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < b);
        // pairs enumerated row by row
        a * self.n - a * (a + 1) / 2 + (b - a - 1)
    }
}

/// Five-point fourth-order first-derivative stencil at position `i` of `m`:
/// first node of the window and weights (to be divided by 12h). Central in the
/// interior, one-sided within two nodes of either end.
#[inline]
pub fn d1_stencil(i: usize, m: usize) -> (usize, [f64; 5]) {
    if i == 0 {
        (0, [-25.0, 48.0, -36.0, 16.0, -3.0])
    } else if i == 1 {
        (0, [-3.0, -10.0, 18.0, -6.0, 1.0])
    } else if i == m - 2 {
        (m - 5, [-1.0, 6.0, -18.0, 10.0, 3.0])
    } else if i == m - 1 {
        (m - 5, [3.0, -16.0, 36.0, -48.0, 25.0])
    } else {
        (i - 2, [1.0, -8.0, 0.0, 8.0, -1.0])
    }
}

/// Fourth-order partial derivative along `axis` at `node` of a nodal quantity.
#[inline]
pub fn partial_mat(grid: &Grid, node: usize, axis: usize, get: impl Fn(usize) -> Mat) -> Mat {
    let mi = grid.multi(node);
    let (start, w) = d1_stencil(mi[axis], grid.m);
    let stride = grid.stride(axis);
    let base = node - mi[axis] * stride;
    let mut acc = get(base + start * stride) * w[0];
    for k in 1..5 {
        if w[k] != 0.0 {
            acc += get(base + (start + k) * stride) * w[k];
        }
    }
    acc * (1.0 / (12.0 * grid.h()))
}

#[inline]
pub fn partial_scalar(grid: &Grid, node: usize, axis: usize, get: impl Fn(usize) -> f64) -> f64 {
    let mi = grid.multi(node);
    let (start, w) = d1_stencil(mi[axis], grid.m);
    let stride = grid.stride(axis);
    let base = node - mi[axis] * stride;
    let mut acc = 0.0;
    for k in 0..5 {
        acc += get(base + (start + k) * stride) * w[k];
    }
    acc / (12.0 * grid.h())
}

/// Gradient of a scalar nodal field (n components per node, node-major).
pub fn gradient(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let mut out = vec![0.0; grid.len() * n];
    out.par_chunks_mut(n).enumerate().for_each(|(node, g)| {
        for a in 0..n {
            g[a] = partial_scalar(grid, node, a, |j| f[j]);
        }
    });
    out
}

/// Exact evaluation of a connection (and optionally its curvature) at
/// arbitrary points, attached to analytically generated fields.
pub trait FieldSampler: Send + Sync {
    /// Writes A_alpha(x) for alpha = 0..n into `out`.
    fn connection(&self, x: &[f64], out: &mut [Mat]);

    /// Writes F_{alpha beta}(x) for alpha < beta in pair order; returns false
    /// when not available.
    fn curvature(&self, _x: &[f64], _out: &mut [Mat]) -> bool {
        false
    }

    /// True only when the connection vanishes identically.
    fn is_zero(&self) -> bool {
        false
    }
}

/// Algebra-valued 1-form sampled at the nodes.
#[derive(Clone)]
pub struct ConnectionField {
    pub grid: Grid,
    pub group: Group,
    /// `n` components per node, node-major.
    pub data: Vec<Mat>,
    pub sampler: Option<Arc<dyn FieldSampler>>,
    /// Singular set paths must avoid, when the field was generated with one.
    pub singular: Option<Arc<SingularSetModel>>,
}

impl fmt::Debug for ConnectionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConnectionField")
            .field("grid", &self.grid)
            .field("group", &self.group)
            .field("analytic", &self.sampler.is_some())
            .finish()
    }
}

impl ConnectionField {
    pub fn zeros(grid: Grid, group: Group) -> Self {
        ConnectionField { grid, group, data: vec![Mat::zeros(group.dim()); grid.len() * grid.n], sampler: None, singular: None }
    }

    pub fn from_fn(grid: Grid, group: Group, f: impl Fn(&[f64], usize) -> Mat + Sync) -> Self {
        let n = grid.n;
        let mut data = vec![Mat::zeros(group.dim()); grid.len() * n];
        data.par_chunks_mut(n).enumerate().for_each(|(node, c)| {
            let x = grid.coords(node);
            for a in 0..n {
                c[a] = f(&x[..n], a);
            }
        });
        ConnectionField { grid, group, data, sampler: None, singular: None }
    }

    /// Samples an analytic field at the nodes and keeps the sampler for
    /// off-grid evaluation.
    pub fn from_sampler(grid: Grid, group: Group, sampler: Arc<dyn FieldSampler>) -> Self {
        let n = grid.n;
        let mut data = vec![Mat::zeros(group.dim()); grid.len() * n];
        data.par_chunks_mut(n).enumerate().for_each(|(node, c)| {
            let x = grid.coords(node);
            sampler.connection(&x[..n], c);
        });
        ConnectionField { grid, group, data, sampler: Some(sampler), singular: None }
    }

    #[inline]
    pub fn at(&self, node: usize, axis: usize) -> Mat {
        self.data[node * self.grid.n + axis]
    }

    /// Zero at every node and, when analytic, everywhere.
    pub fn is_zero(&self) -> bool {
        self.sampler.as_ref().is_none_or(|s| s.is_zero()) && self.data.iter().all(|m| m.op_norm() == 0.0)
    }

    pub fn without_sampler(mut self) -> Self {
        self.sampler = None;
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        ConnectionField {
            grid: self.grid,
            group: self.group,
            data: self.data.iter().map(|a| *a * s).collect(),
            sampler: None,
            singular: self.singular.clone(),
        }
    }

    /// |A(x)| = (sum_alpha |A_alpha|^2)^{1/2} per node.
    pub fn magnitude(&self) -> Vec<f64> {
        let n = self.grid.n;
        self.data.chunks(n).map(|c| c.iter().map(|a| a.op_norm().powi(2)).sum::<f64>().sqrt()).collect()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitude().into_iter().fold(0.0, f64::max)
    }

    /// A(x) at an arbitrary point: analytic when a sampler is attached,
    /// tensor-cubic interpolation of the nodal values otherwise.
    pub fn eval(&self, x: &[f64], out: &mut [Mat]) {
        match &self.sampler {
            Some(s) => s.connection(x, out),
            None => interpolate_cubic(&self.grid, &self.data, self.grid.n, x, out),
        }
    }
}

/// n-linear interpolation of `k` matrices per node.
pub fn interpolate(grid: &Grid, data: &[Mat], k: usize, x: &[f64], out: &mut [Mat]) {
    let n = grid.n;
    let mut base = [0usize; MAX_DIM];
    let mut frac = [0.0; MAX_DIM];
    for a in 0..n {
        let t = (x[a].clamp(0.0, 1.0)) * (grid.m - 1) as f64;
        let i0 = (t.floor() as usize).min(grid.m - 2);
        base[a] = i0;
        frac[a] = t - i0 as f64;
    }
    for o in out.iter_mut().take(k) {
        *o = Mat::zeros(o.dim());
    }
    for corner in 0..(1usize << n) {
        let mut w = 1.0;
        let mut mi = base;
        for a in 0..n {
            if corner >> a & 1 == 1 {
                w *= frac[a];
                mi[a] += 1;
            } else {
                w *= 1.0 - frac[a];
            }
        }
        if w == 0.0 {
            continue;
        }
        let idx = grid.index(&mi);
        for c in 0..k {
            out[c] += data[idx * k + c] * w;
        }
    }
}

/// Per-axis window start and Lagrange weights for cubic interpolation
/// through four consecutive nodes around the cell containing `x`.
fn cubic_weights(x: f64, m: usize) -> (usize, [f64; 4]) {
    let t = x.clamp(0.0, 1.0) * (m - 1) as f64;
    let cell = (t.floor() as usize).min(m - 2);
    let j0 = cell.saturating_sub(1).min(m - 4);
    let s = t - j0 as f64;
    let mut w = [0.0; 4];
    for (k, wk) in w.iter_mut().enumerate() {
        let mut p = 1.0;
        for l in 0..4 {
            if l != k {
                p *= (s - l as f64) / (k as f64 - l as f64);
            }
        }
        *wk = p;
    }
    (j0, w)
}

/// Tensor-product cubic Lagrange interpolation of `k` matrices per node;
/// fourth-order accurate and polynomial inside each grid cell.
pub fn interpolate_cubic(grid: &Grid, data: &[Mat], k: usize, x: &[f64], out: &mut [Mat]) {
    let n = grid.n;
    let mut start = [0usize; MAX_DIM];
    let mut w = [[0.0; 4]; MAX_DIM];
    for a in 0..n {
        let (j0, wa) = cubic_weights(x[a], grid.m);
        start[a] = j0;
        w[a] = wa;
    }
    for o in out.iter_mut().take(k) {
        *o = Mat::zeros(o.dim());
    }
    for corner in 0..(1usize << (2 * n)) {
        let mut wt = 1.0;
        let mut mi = start;
        for a in 0..n {
            let off = (corner >> (2 * a)) & 3;
            wt *= w[a][off];
            mi[a] += off;
        }
        if wt == 0.0 {
            continue;
        }
        let idx = grid.index(&mi);
        for c in 0..k {
            out[c] += data[idx * k + c] * wt;
        }
    }
}

/// Curvature 2-form, components alpha < beta per node.
#[derive(Clone, Debug)]
pub struct CurvatureField {
    pub grid: Grid,
    pub group: Group,
    pub data: Vec<Mat>,
}

impl CurvatureField {
    /// F_{alpha beta} with the antisymmetric extension.
    #[inline]
    pub fn get(&self, node: usize, a: usize, b: usize) -> Mat {
        let np = self.grid.npairs();
        if a == b {
            Mat::zeros(self.group.dim())
        } else if a < b {
            self.data[node * np + self.grid.pair_index(a, b)]
        } else {
            -self.data[node * np + self.grid.pair_index(b, a)]
        }
    }
}

/// Group-valued function on the grid.
#[derive(Clone, Debug)]
pub struct GaugeField {
    pub grid: Grid,
    pub group: Group,
    pub data: Vec<Mat>,
}

impl GaugeField {
    pub fn identity(grid: Grid, group: Group) -> Self {
        GaugeField { grid, group, data: vec![group.identity(); grid.len()] }
    }

    pub fn constant(grid: Grid, group: Group, g: Mat) -> Self {
        GaugeField { grid, group, data: vec![g; grid.len()] }
    }

    pub fn from_fn(grid: Grid, group: Group, f: impl Fn(&[f64]) -> Mat + Sync) -> Self {
        let data = (0..grid.len())
            .into_par_iter()
            .map(|node| {
                let x = grid.coords(node);
                f(&x[..grid.n])
            })
            .collect();
        GaugeField { grid, group, data }
    }

    pub fn compose(&self, other: &GaugeField) -> Result<GaugeField> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("gauge composition".into()));
        }
        Ok(GaugeField {
            grid: self.grid,
            group: self.group,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a * *b).collect(),
        })
    }
}

/// F_{ab} = d_a A_b - d_b A_a + [A_a, A_b] with fourth-order stencils.
pub fn curvature(a: &ConnectionField) -> CurvatureField {
    let grid = a.grid;
    let n = grid.n;
    let np = grid.npairs();
    let pairs = grid.pairs();
    let mut data = vec![Mat::zeros(a.group.dim()); grid.len() * np];
    data.par_chunks_mut(np).enumerate().for_each(|(node, out)| {
        for (k, &(al, be)) in pairs.iter().enumerate() {
            let dab = partial_mat(&grid, node, al, |j| a.data[j * n + be]);
            let dba = partial_mat(&grid, node, be, |j| a.data[j * n + al]);
            let aa = a.data[node * n + al];
            let ab = a.data[node * n + be];
            out[k] = dab - dba + aa.commutator(&ab);
        }
    });
    CurvatureField { grid, group: a.group, data }
}

/// sigma(A) = sigma A sigma^-1 - (d sigma) sigma^-1, projected onto the algebra.
pub fn apply_gauge(sigma: &GaugeField, a: &ConnectionField) -> Result<ConnectionField> {
    if sigma.grid != a.grid {
        return Err(Error::GridMismatch(format!("gauge on {:?}, connection on {:?}", sigma.grid, a.grid)));
    }
    let grid = a.grid;
    let n = grid.n;
    let group = a.group;
    let mut data = vec![Mat::zeros(group.dim()); grid.len() * n];
    data.par_chunks_mut(n).enumerate().for_each(|(node, out)| {
        let s = sigma.data[node];
        let si = s.adjoint();
        for al in 0..n {
            let ds = partial_mat(&grid, node, al, |j| sigma.data[j]);
            let v = s * a.data[node * n + al] * si - ds * si;
            out[al] = group.project_algebra(&v);
        }
    });
    Ok(ConnectionField { grid, group, data, sampler: None, singular: a.singular.clone() })
}

/// |F|(x) = (sum over ordered alpha, beta of |F_ab|^2)^{1/2}, operator norms.
pub fn curvature_magnitude(f: &CurvatureField) -> Vec<f64> {
    let np = f.grid.npairs();
    f.data.par_chunks(np).map(|c| (2.0 * c.iter().map(|m| m.op_norm().powi(2)).sum::<f64>()).sqrt()).collect()
}

/// Per-node norm of the Yang-Mills operator sum_a (d_a F_ab + [A_a, F_ab]).
pub fn ym_residual(a: &ConnectionField) -> Vec<f64> {
    let f = curvature(a);
    let grid = a.grid;
    let n = grid.n;
    (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let mut total = 0.0;
            for be in 0..n {
                let mut r = Mat::zeros(a.group.dim());
                for al in 0..n {
                    if al == be {
                        continue;
                    }
                    r += partial_mat(&grid, node, al, |j| f.get(j, al, be));
                    r += a.at(node, al).commutator(&f.get(node, al, be));
                }
                total += r.op_norm().powi(2);
            }
            total.sqrt()
        })
        .collect()
}
