//! Morrey norms, maximal function, fractional integrals and the
//! stratification quantities Q, Omega_m, R_m, T_m on nodal grids.
//!
//! Balls are discrete: node y belongs to B(x, r) when |y - x| <= r measured
//! between nodes. Radii follow the ladder r_j = h 2^{j/2}, so (r_j/h)^2 = 2^j
//! is an integer and membership is decided exactly in integer arithmetic.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{partial_mat, partial_scalar, ConnectionField, Grid};
use crate::quad::{adaptive, sphere_area, tensor_cube};
use crate::spectral::Convolver;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorreyParams {
    pub p: f64,
    pub q: f64,
    pub k: usize,
}

impl MorreyParams {
    pub fn new(p: f64, q: f64, k: usize) -> Result<Self> {
        if !(q >= 1.0 && q <= p) || k > 2 {
            return Err(Error::InvalidInput(format!("Morrey exponents need 1 <= q <= p and k <= 2, got p={p} q={q} k={k}")));
        }
        Ok(MorreyParams { p, q, k })
    }

    /// Exponents with p < q allowed; the scaling weight becomes a positive
    /// power of r.
    pub fn relaxed(p: f64, q: f64, k: usize) -> Result<Self> {
        if q < 1.0 || p <= 0.0 || k > 2 {
            return Err(Error::InvalidInput(format!("invalid Morrey exponents p={p} q={q} k={k}")));
        }
        Ok(MorreyParams { p, q, k })
    }

    /// M^{n/2}_q, the scale-invariant space for curvature in dimension n.
    pub fn scale_invariant(n: usize, q: f64, k: usize) -> Self {
        MorreyParams { p: n as f64 / 2.0, q, k }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratConfig {
    pub epsilon: f64,
    pub kappa: f64,
    pub d: f64,
    pub c_r: f64,
}

impl Default for StratConfig {
    fn default() -> Self {
        StratConfig { epsilon: 0.05, kappa: 0.5, d: 8.0, c_r: 4.0 }
    }
}

impl StratConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.kappa > 0.0 && self.kappa < 1.0 && self.d > 1.0 && self.c_r > 0.0) {
            return Err(Error::InvalidInput(format!("invalid stratification parameters {self:?}")));
        }
        Ok(())
    }

    /// epsilon D^{(1-kappa) m}
    pub fn threshold(&self, m: u32) -> f64 {
        self.epsilon * self.d.powf((1.0 - self.kappa) * m as f64)
    }

    /// C_R D^{-m}
    pub fn r_m(&self, m: u32) -> f64 {
        self.c_r * self.d.powi(-(m as i32))
    }
}

/// Ladder r_j = h 2^{j/2} up to the cube diameter.
#[derive(Clone, Debug, PartialEq)]
pub struct RadiusSet {
    pub h: f64,
    /// (r_j / h)^2 = 2^j
    pub d2: Vec<i64>,
}

impl RadiusSet {
    pub fn new(grid: &Grid) -> Self {
        let max = (grid.n * (grid.m - 1) * (grid.m - 1)) as i64;
        let mut d2 = Vec::new();
        let mut v = 1i64;
        while v <= max {
            d2.push(v);
            v *= 2;
        }
        RadiusSet { h: grid.h(), d2 }
    }

    pub fn len(&self) -> usize {
        self.d2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d2.is_empty()
    }

    pub fn radius(&self, j: usize) -> f64 {
        self.h * (self.d2[j] as f64).sqrt()
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.radius(j)).collect()
    }

    /// Smallest ladder index with radius >= r (last index when none).
    pub fn index_at_least(&self, r: f64) -> usize {
        (0..self.len()).find(|&j| self.radius(j) >= r * (1.0 - 1e-12)).unwrap_or(self.len() - 1)
    }
}

/// Ball sums of nodal data over every ladder radius, all centers at once,
/// through padded FFT convolution with cached indicator spectra.
pub struct BallSums {
    pub grid: Grid,
    pub radii: RadiusSet,
    conv: Convolver,
    spectra: Vec<Vec<f64>>,
    counts: OnceLock<Vec<Vec<f64>>>,
}

static CACHE: OnceLock<Mutex<HashMap<Grid, Arc<BallSums>>>> = OnceLock::new();

impl BallSums {
    pub fn new(grid: Grid) -> Self {
        let radii = RadiusSet::new(&grid);
        let conv = Convolver::new(grid);
        let spectra = radii.d2.iter().map(|&r2| conv.kernel_spectrum(|d2| if d2 <= r2 { 1.0 } else { 0.0 })).collect();
        BallSums { grid, radii, conv, spectra, counts: OnceLock::new() }
    }

    /// Shared instance per grid.
    pub fn for_grid(grid: Grid) -> Arc<BallSums> {
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap();
        map.entry(grid).or_insert_with(|| Arc::new(BallSums::new(grid))).clone()
    }

    /// sums[j][x] = sum of g over nodes in B(x, r_j). Nonnegative input gives
    /// nonnegative output (FFT roundoff is clipped).
    pub fn sums(&self, g: &[f64]) -> Vec<Vec<f64>> {
        let nonneg = g.iter().all(|&v| v >= 0.0);
        let g_hat = self.conv.transform(g);
        self.spectra
            .par_iter()
            .map(|s| {
                let mut out = self.conv.apply(&g_hat, s);
                if nonneg {
                    for v in &mut out {
                        *v = v.max(0.0);
                    }
                }
                out
            })
            .collect()
    }

    /// Number of nodes in each ball.
    pub fn counts(&self) -> &Vec<Vec<f64>> {
        self.counts.get_or_init(|| {
            self.sums(&vec![1.0; self.grid.len()]).into_iter().map(|v| v.into_iter().map(|c| c.round()).collect()).collect()
        })
    }
}

/// Ball sums by direct enumeration for the given centers (quadratic cost).
pub fn ball_sums_direct(grid: &Grid, radii: &RadiusSet, g: &[f64], centers: &[usize]) -> Vec<Vec<f64>> {
    let sums: Vec<Vec<f64>> = centers
        .par_iter()
        .map(|&c| {
            let mc = grid.multi(c);
            let mut per = vec![0.0; radii.len()];
            for y in 0..grid.len() {
                let my = grid.multi(y);
                let d2: i64 = (0..grid.n).map(|a| (mc[a] as i64 - my[a] as i64).pow(2)).sum();
                if let Some(j) = radii.d2.iter().position(|&r2| d2 <= r2) {
                    per[j] += g[y];
                }
            }
            for j in 1..per.len() {
                per[j] += per[j - 1];
            }
            per
        })
        .collect();
    (0..radii.len()).map(|j| sums.iter().map(|s| s[j]).collect()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Centers {
    All,
    Nodes(Vec<usize>),
}

impl Centers {
    /// All nodes for n <= 3, a stratified sample of 4096 nodes for n = 4.
    pub fn default_for(grid: &Grid, seed: u64) -> Centers {
        if grid.n <= 3 || grid.len() <= 4096 {
            return Centers::All;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_7272_6579);
        let strata = 4096;
        let total = grid.len();
        let nodes = (0..strata)
            .map(|s| {
                let lo = s * total / strata;
                let hi = ((s + 1) * total / strata).max(lo + 1);
                rng.random_range(lo..hi)
            })
            .collect();
        Centers::Nodes(nodes)
    }

    pub fn list(&self, grid: &Grid) -> Vec<usize> {
        match self {
            Centers::All => (0..grid.len()).collect(),
            Centers::Nodes(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorreyValue {
    pub value: f64,
    pub center: usize,
    pub radius: f64,
}

/// sup over centers and ladder radii of r^{n(1/p - 1/q)} (h^n sum_B |f|^q)^{1/q}.
pub fn morrey_norm_detail(grid: &Grid, f: &[f64], params: &MorreyParams, centers: &Centers) -> MorreyValue {
    let bs = BallSums::for_grid(*grid);
    let q = params.q;
    let g: Vec<f64> = f.iter().map(|v| v.abs().powf(q)).collect();
    let sums = bs.sums(&g);
    let vol = grid.h().powi(grid.n as i32);
    let expo = grid.n as f64 * (1.0 / params.p - 1.0 / q);
    let list = centers.list(grid);
    let mut best = MorreyValue { value: 0.0, center: list.first().copied().unwrap_or(0), radius: bs.radii.radius(0) };
    for (j, s) in sums.iter().enumerate() {
        let r = bs.radii.radius(j);
        let w = r.powf(expo);
        for &c in &list {
            let v = w * (s[c] * vol).powf(1.0 / q);
            if v > best.value {
                best = MorreyValue { value: v, center: c, radius: r };
            }
        }
    }
    best
}

pub fn morrey_norm(grid: &Grid, f: &[f64], params: &MorreyParams, centers: &Centers) -> f64 {
    morrey_norm_detail(grid, f, params, centers).value
}

/// |grad f| per node with fourth-order stencils.
pub fn gradient_magnitude(grid: &Grid, f: &[f64]) -> Vec<f64> {
    (0..grid.len())
        .into_par_iter()
        .map(|x| (0..grid.n).map(|a| partial_scalar(grid, x, a, |j| f[j]).powi(2)).sum::<f64>().sqrt())
        .collect()
}

/// |Hessian f| (Frobenius) per node.
pub fn hessian_magnitude(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let grads: Vec<Vec<f64>> = (0..n).map(|a| (0..grid.len()).map(|x| partial_scalar(grid, x, a, |j| f[j])).collect()).collect();
    (0..grid.len())
        .into_par_iter()
        .map(|x| {
            let mut s = 0.0;
            for g in &grads {
                for b in 0..n {
                    s += partial_scalar(grid, x, b, |j| g[j]).powi(2);
                }
            }
            s.sqrt()
        })
        .collect()
}

/// sum over j <= k of the Morrey norm of |grad^j f|.
pub fn morrey_sobolev_norm(grid: &Grid, f: &[f64], params: &MorreyParams, centers: &Centers) -> f64 {
    let mut total = morrey_norm(grid, f, params, centers);
    if params.k >= 1 {
        total += morrey_norm(grid, &gradient_magnitude(grid, f), params, centers);
    }
    if params.k >= 2 {
        total += morrey_norm(grid, &hessian_magnitude(grid, f), params, centers);
    }
    total
}

/// |grad A| = (sum over a, alpha of |d_a A_alpha|^2)^{1/2} per node.
pub fn connection_gradient_magnitude(a: &ConnectionField) -> Vec<f64> {
    let grid = a.grid;
    let n = grid.n;
    (0..grid.len())
        .into_par_iter()
        .map(|x| {
            let mut s = 0.0;
            for al in 0..n {
                for b in 0..n {
                    s += partial_mat(&grid, x, b, |j| a.data[j * n + al]).op_norm().powi(2);
                }
            }
            s.sqrt()
        })
        .collect()
}

/// Morrey-Sobolev norm of a connection, k <= 1.
pub fn morrey_sobolev_connection(a: &ConnectionField, params: &MorreyParams, centers: &Centers) -> Result<f64> {
    if params.k > 1 {
        return Err(Error::InvalidInput("connection Morrey-Sobolev norms support k <= 1".into()));
    }
    let mut total = morrey_norm(&a.grid, &a.magnitude(), params, centers);
    if params.k == 1 {
        total += morrey_norm(&a.grid, &connection_gradient_magnitude(a), params, centers);
    }
    Ok(total)
}

/// Per node, max over ladder radii of the average of |u| over the ball.
pub fn maximal_function(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let bs = BallSums::for_grid(*grid);
    let abs: Vec<f64> = u.iter().map(|v| v.abs()).collect();
    let sums = bs.sums(&abs);
    let counts = bs.counts();
    (0..grid.len())
        .map(|x| {
            let mut best = abs[x];
            for (s, c) in sums.iter().zip(counts) {
                best = best.max(s[x] / c[x]);
            }
            best
        })
        .collect()
}

/// Integral of |v|^{e-n} over the unit cell [-1/2, 1/2]^n, by splitting the
/// cell into 2n pyramids over its faces.
pub fn kappa_cell(n: usize, e: usize) -> f64 {
    let face = tensor_cube(n - 1, -0.5, 0.5, 24, |w| {
        let r2: f64 = 0.25 + w.iter().map(|x| x * x).sum::<f64>();
        r2.powf(-((n - e) as f64) / 2.0)
    });
    2.0 * n as f64 / (2.0 * e as f64) * face
}

fn riesz_kernel(grid: &Grid, e: usize, weight: Option<(f64, f64)>) -> impl Fn(i64) -> f64 {
    let (n, h) = (grid.n, grid.h());
    let self_term = kappa_cell(n, e) * h.powi(e as i32 - n as i32);
    move |d2: i64| {
        if d2 == 0 {
            return self_term;
        }
        let d = h * (d2 as f64).sqrt();
        let w = weight.map_or(1.0, |(r, kappa)| (1.0 + d / r).powf(kappa / 2.0));
        w / d.powi((n - e) as i32)
    }
}

/// h^n sum over y of w(y) F(y) / |x - y|^{n-e} at one node x, self cell
/// handled by the cell constant. `weight` = (R, kappa) gives
/// w(y) = (1 + |y - x|/R)^{kappa/2}.
pub fn riesz_kernel_integral(grid: &Grid, f: &[f64], x: usize, e: usize, weight: Option<(f64, f64)>) -> f64 {
    let k = riesz_kernel(grid, e, weight);
    let mx = grid.multi(x);
    let vol = grid.h().powi(grid.n as i32);
    let mut s = 0.0;
    for (y, &fy) in f.iter().enumerate() {
        if fy == 0.0 {
            continue;
        }
        let my = grid.multi(y);
        let d2: i64 = (0..grid.n).map(|a| (mx[a] as i64 - my[a] as i64).pow(2)).sum();
        s += k(d2) * fy;
    }
    s * vol
}

/// The same integral at every node via FFT convolution.
pub fn riesz_field(grid: &Grid, f: &[f64], e: usize, weight: Option<(f64, f64)>) -> Vec<f64> {
    let conv = Convolver::new(*grid);
    let vol = grid.h().powi(grid.n as i32);
    conv.convolve(f, riesz_kernel(grid, e, weight)).into_iter().map(|v| (v * vol).max(0.0)).collect()
}

/// T_m(x): weighted first-order fractional integral of |F| at every node.
pub fn t_m(grid: &Grid, fmag: &[f64], cfg: &StratConfig, m: u32) -> Vec<f64> {
    riesz_field(grid, fmag, 1, Some((cfg.r_m(m), cfg.kappa)))
}

/// Q(x) = sup_j r_j^{-n/2+1+kappa} (h^n sum_{B(x,r_j)} |F|^2)^{1/2} at every node.
pub fn q_function(grid: &Grid, fmag: &[f64], kappa: f64) -> Vec<f64> {
    let bs = BallSums::for_grid(*grid);
    let sq: Vec<f64> = fmag.iter().map(|v| v * v).collect();
    let sums = bs.sums(&sq);
    let vol = grid.h().powi(grid.n as i32);
    let expo = -(grid.n as f64) / 2.0 + 1.0 + kappa;
    let weights: Vec<f64> = bs.radii.radii().iter().map(|r| r.powf(expo)).collect();
    (0..grid.len())
        .into_par_iter()
        .map(|x| sums.iter().zip(&weights).map(|(s, w)| w * (s[x] * vol).sqrt()).fold(0.0, f64::max))
        .collect()
}

/// Omega_m: nodes with Q below the level-m threshold and off the singular set.
pub fn omega_m(q: &[f64], rho: &[f64], cfg: &StratConfig, m: u32) -> Vec<bool> {
    let t = cfg.threshold(m);
    q.iter().zip(rho).map(|(&qv, &r)| qv < t && r > 0.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    /// Radii, descending.
    pub radii: Vec<f64>,
    /// r^{4-n} h^n sum_{B(x,r)} |F|^2 for each radius.
    pub values: Vec<f64>,
    /// Values non-increasing as r decreases (within relative slack).
    pub monotone: bool,
    /// Largest relative increase when stepping to a smaller radius.
    pub worst_violation: f64,
    /// Extrapolation to r = 0 from the three smallest radii.
    pub theta: f64,
}

pub fn density_profile(grid: &Grid, fmag: &[f64], x: usize, slack: f64) -> DensityProfile {
    let radii = RadiusSet::new(grid);
    let sq: Vec<f64> = fmag.iter().map(|v| v * v).collect();
    let sums = ball_sums_direct(grid, &radii, &sq, &[x]);
    let vol = grid.h().powi(grid.n as i32);
    let mut rs = Vec::new();
    let mut vals = Vec::new();
    for j in (0..radii.len()).rev() {
        let r = radii.radius(j);
        rs.push(r);
        vals.push(r.powf(4.0 - grid.n as f64) * sums[j][0] * vol);
    }
    let mut worst: f64 = 0.0;
    for w in vals.windows(2) {
        if w[0] > 0.0 {
            worst = worst.max((w[1] - w[0]) / w[0]);
        } else if w[1] > 0.0 {
            worst = f64::INFINITY;
        }
    }
    // quadratic through the last three points, evaluated at r = 0
    let k = rs.len();
    let theta = if k >= 3 {
        let (x0, x1, x2) = (rs[k - 3], rs[k - 2], rs[k - 1]);
        let (y0, y1, y2) = (vals[k - 3], vals[k - 2], vals[k - 1]);
        let l0 = x1 * x2 / ((x0 - x1) * (x0 - x2));
        let l1 = x0 * x2 / ((x1 - x0) * (x1 - x2));
        let l2 = x0 * x1 / ((x2 - x0) * (x2 - x1));
        (y0 * l0 + y1 * l1 + y2 * l2).max(0.0)
    } else {
        vals.last().copied().unwrap_or(0.0)
    };
    DensityProfile { radii: rs, values: vals, monotone: worst <= slack, worst_violation: worst, theta }
}

/// c_{n,k}: integral over the unit ball of R^{n-k} of (1 - |v|^2)^{(k-4)/2},
/// by adaptive radial quadrature; 1 when n = k.
pub fn cnk_constant(n: usize, k: usize) -> Result<f64> {
    if !(4 <= k && k <= n && n <= 8) {
        return Err(Error::InvalidInput(format!("c_(n,k) needs 4 <= k <= n <= 8, got n={n} k={k}")));
    }
    let d = n - k;
    if d == 0 {
        return Ok(1.0);
    }
    let ex = (k as f64 - 4.0) / 2.0;
    let radial = adaptive(|r| (1.0 - r * r).max(0.0).powf(ex) * r.powi(d as i32 - 1), 0.0, 1.0, 1e-14);
    Ok(sphere_area(d as u32) * radial)
}
