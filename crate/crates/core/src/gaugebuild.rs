//! Averaged radial gauges on the nested domains Omega_m, the ball cover of
//! their complement and the truncated connection built from them.

use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{curvature, curvature_magnitude, ConnectionField, Grid, MAX_DIM};
use crate::geometry::MAX_DRAWS;
use crate::lie::{average, Group, WeightedSamples, DEFAULT_DELTA};
use crate::mat::Mat;
use crate::morrey::{morrey_norm, omega_m, q_function, riesz_field, t_m, BallSums, Centers, MorreyParams, StratConfig};
use crate::transport::{transport_segment, TransportOptions};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub base_samples: usize,
    pub inductive_samples: usize,
    pub origin_samples: usize,
    /// Transport tolerance inside the construction.
    pub tol: f64,
    pub delta: f64,
    pub max_drop_fraction: f64,
    /// Path clearance from the singular set in units of h.
    pub clearance: f64,
    /// Required cutoff mass as a fraction of R^n.
    pub min_mass: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            base_samples: 256,
            inductive_samples: 128,
            origin_samples: 64,
            tol: 1e-9,
            delta: DEFAULT_DELTA,
            max_drop_fraction: 0.05,
            clearance: 0.5,
            min_mass: 0.01,
            seed: 0,
        }
    }
}

/// Per-node curvature magnitude, distance to the singular set, Q and the
/// Omega_m masks for m = 1..=m_max.
#[derive(Clone, Debug)]
pub struct Stratification {
    pub grid: Grid,
    pub cfg: StratConfig,
    pub fmag: Vec<f64>,
    pub rho: Vec<f64>,
    pub q: Vec<f64>,
    pub masks: Vec<Vec<bool>>,
}

/// |F| at the nodes: exact when the field carries an analytic curvature,
/// stencil curvature otherwise.
pub fn nodal_curvature_magnitude(a: &ConnectionField) -> Vec<f64> {
    let grid = a.grid;
    if let Some(s) = &a.sampler {
        let np = grid.npairs();
        let mut buf = vec![Mat::zeros(a.group.dim()); np];
        let x = grid.coords(0);
        if s.curvature(&x[..grid.n], &mut buf) {
            return (0..grid.len())
                .into_par_iter()
                .map(|node| {
                    let mut b = [Mat::zeros(a.group.dim()); 6];
                    let x = grid.coords(node);
                    s.curvature(&x[..grid.n], &mut b[..np]);
                    (2.0 * b[..np].iter().map(|m| m.op_norm().powi(2)).sum::<f64>()).sqrt()
                })
                .collect();
        }
    }
    curvature_magnitude(&curvature(a))
}

pub fn nodal_rho(a: &ConnectionField) -> Vec<f64> {
    let grid = a.grid;
    match &a.singular {
        Some(s) => (0..grid.len()).map(|i| s.rho(&grid.coords(i)[..grid.n])).collect(),
        None => vec![f64::INFINITY; grid.len()],
    }
}

impl Stratification {
    pub fn compute(a: &ConnectionField, cfg: &StratConfig, m_max: u32) -> Result<Self> {
        cfg.validate()?;
        let fmag = nodal_curvature_magnitude(a);
        let rho = nodal_rho(a);
        let q = q_function(&a.grid, &fmag, cfg.kappa);
        let masks = (1..=m_max).map(|m| omega_m(&q, &rho, cfg, m)).collect();
        Ok(Stratification { grid: a.grid, cfg: *cfg, fmag, rho, q, masks })
    }

    pub fn mask(&self, m: u32) -> &[bool] {
        &self.masks[(m - 1) as usize]
    }

    /// Nesting against level m - 1, containment of {rho >= R_m}, and the
    /// smallest |B(x,r) ∩ Omega_m| / r^n over `balls` random balls with
    /// R_m <= r <= 1 (Monte Carlo volume, nearest-node membership).
    pub fn audit(&self, m: u32, balls: usize, points: usize, seed: u64) -> StratificationAudit {
        let grid = self.grid;
        let n = grid.n;
        let mask = self.mask(m);
        let nested = m == 1 || self.mask(m - 1).iter().zip(mask).all(|(&p, &q)| !p || q);
        let rm = self.cfg.r_m(m);
        let far: Vec<usize> = (0..grid.len()).filter(|&i| self.rho[i] >= rm).collect();
        let containment_violations = far.iter().filter(|&&i| !mask[i]).count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x6465_6e00 + m as u64));
        let vol = unit_ball_volume(n);
        let mut density_min = f64::INFINITY;
        let mut x = [0.0; MAX_DIM];
        let mut y = [0.0; MAX_DIM];
        for _ in 0..balls {
            for v in x.iter_mut().take(n) {
                *v = rng.random::<f64>();
            }
            let r = rm.min(1.0) * (1.0 / rm.min(1.0)).powf(rng.random::<f64>());
            let mut hits = 0usize;
            for _ in 0..points {
                let mut dir = [0.0; MAX_DIM];
                let mut norm: f64 = 0.0;
                for d in dir.iter_mut().take(n) {
                    *d = rng.sample(rand_distr::StandardNormal);
                    norm += *d * *d;
                }
                let s = r * rng.random::<f64>().powf(1.0 / n as f64) / norm.sqrt();
                for k in 0..n {
                    y[k] = x[k] + s * dir[k];
                }
                if grid.contains(&y[..n]) && mask[grid.nearest_node(&y[..n])] {
                    hits += 1;
                }
            }
            let measure = vol * hits as f64 / points as f64;
            density_min = density_min.min(measure);
        }
        StratificationAudit {
            level: m,
            masked: mask.iter().filter(|&&b| b).count(),
            nested,
            far_nodes: far.len(),
            containment_violations,
            balls,
            density_min: if balls == 0 { 0.0 } else { density_min },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StratificationAudit {
    pub level: u32,
    pub masked: usize,
    /// Omega_{m-1} contained in Omega_m.
    pub nested: bool,
    /// Nodes with rho >= R_m.
    pub far_nodes: usize,
    pub containment_violations: usize,
    pub balls: usize,
    /// min over sampled balls of |B ∩ Omega_m| / r^n.
    pub density_min: f64,
}

/// Group-valued gauge defined on a node mask.
#[derive(Clone, Debug)]
pub struct PartialGauge {
    pub grid: Grid,
    pub group: Group,
    pub level: u32,
    pub mask: Vec<bool>,
    /// Identity outside the mask.
    pub values: Vec<Mat>,
    /// Clustering statistic of the averaged samples per node (0 off mask).
    pub clustering: Vec<f64>,
    /// Nodes of Omega_m removed for clustering violations or lack of samples.
    pub dropped: Vec<usize>,
}

impl PartialGauge {
    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

fn choose_from<R: Rng>(nodes: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    if nodes.len() <= k {
        return nodes.to_vec();
    }
    let mut picked: Vec<usize> = sample(rng, nodes.len(), k).into_iter().map(|i| nodes[i]).collect();
    picked.sort_unstable();
    picked
}

/// Node of `mask` minimizing the second-order Riesz integral of |F| over a
/// random sample of candidates; first candidate on ties.
pub fn choose_origin(grid: &Grid, fmag: &[f64], mask: &[bool], samples: usize, seed: u64) -> Result<usize> {
    let nodes: Vec<usize> = (0..grid.len()).filter(|&i| mask[i]).collect();
    if nodes.is_empty() {
        return Err(Error::EmptyDomain("Omega_1 has no nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6f72_6967);
    let cands = choose_from(&nodes, samples, &mut rng);
    let riesz = riesz_field(grid, fmag, 2, None);
    let mut best = cands[0];
    for &c in &cands {
        if riesz[c] < riesz[best] {
            best = c;
        }
    }
    Ok(best)
}

fn clear(a: &ConnectionField, x0: &[f64], x1: &[f64], clearance: f64) -> bool {
    match &a.singular {
        Some(s) => s.segment_rho(x0, x1) > clearance,
        None => true,
    }
}

fn finish_node(samples: &WeightedSamples, group: Group, delta: f64) -> Option<(Mat, f64)> {
    if samples.is_empty() {
        return None;
    }
    average(samples, group, delta).ok().map(|avg| (avg.element, avg.clustering))
}

fn assemble(
    a: &ConnectionField,
    level: u32,
    domain: &[bool],
    results: Vec<Option<(Mat, f64)>>,
    cfg: &SamplingConfig,
) -> Result<PartialGauge> {
    let grid = a.grid;
    let mut mask = vec![false; grid.len()];
    let mut values = vec![a.group.identity(); grid.len()];
    let mut clustering = vec![0.0; grid.len()];
    let mut dropped = Vec::new();
    let mut total = 0;
    for (node, r) in results.into_iter().enumerate() {
        if !domain[node] {
            continue;
        }
        total += 1;
        match r {
            Some((g, c)) => {
                mask[node] = true;
                values[node] = g;
                clustering[node] = c;
            }
            None => dropped.push(node),
        }
    }
    let limit = cfg.max_drop_fraction * total as f64;
    if dropped.len() as f64 > limit {
        return Err(Error::TooManyDrops { dropped: dropped.len(), total, limit: 100.0 * cfg.max_drop_fraction });
    }
    Ok(PartialGauge { grid, group: a.group, level, mask, values, clustering, dropped })
}

/// Level-1 gauge: sigma_1(x) is the projected average over x1 uniform in the
/// cube of A[[x* -> x1 -> x]]. The x1 pool is shared by all nodes.
pub fn base_gauge(a: &ConnectionField, strat: &Stratification, origin: usize, cfg: &SamplingConfig) -> Result<PartialGauge> {
    let grid = a.grid;
    let n = grid.n;
    let clearance = cfg.clearance * grid.h();
    let opts = TransportOptions { tol: cfg.tol, clearance: Some(clearance), ..Default::default() };
    let xs = grid.coords(origin);
    let xs = &xs[..n];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6261_7365);
    let mut pool: Vec<[f64; MAX_DIM]> = Vec::with_capacity(cfg.base_samples);
    let mut draws = 0;
    while pool.len() < cfg.base_samples {
        draws += 1;
        if draws > MAX_DRAWS.max(4 * cfg.base_samples) {
            return Err(Error::SamplingExhausted { draws });
        }
        let mut x1 = [0.0; MAX_DIM];
        for v in x1.iter_mut().take(n) {
            *v = rng.random();
        }
        if clear(a, xs, &x1[..n], clearance) {
            pool.push(x1);
        }
    }
    let prefix: Vec<Mat> = pool.par_iter().map(|x1| transport_segment(a, xs, &x1[..n], &opts)).collect::<Result<_>>()?;
    let domain = strat.mask(1);
    let results: Vec<Option<(Mat, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|node| -> Result<Option<(Mat, f64)>> {
            if !domain[node] {
                return Ok(None);
            }
            let x = grid.coords(node);
            let x = &x[..n];
            let mut s = WeightedSamples::new();
            for (x1, p) in pool.iter().zip(&prefix) {
                let x1 = &x1[..n];
                if x1 == x || !clear(a, x1, x, clearance) {
                    continue;
                }
                s.push(*p * transport_segment(a, x1, x, &opts)?, 1.0);
            }
            Ok(finish_node(&s, a.group, cfg.delta))
        })
        .collect::<Result<_>>()?;
    assemble(a, 1, domain, results, cfg)
}

/// Quintic smoothstep: 0 for s <= 0, 1 for s >= 1, C^2 in between.
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Cutoff on B(0,2): 1 on the unit ball, 0 outside radius 2.
pub fn cutoff(r: f64) -> f64 {
    smoothstep(2.0 - r)
}

fn unit_ball_volume(n: usize) -> f64 {
    crate::quad::sphere_area(n as u32) / n as f64
}

/// sigma_{m+1}(x): projected average of sigma_m(z) A[[z -> x1 -> x]] with x1
/// drawn around x at scale R_m (floored at h) under the cutoff weight, z the
/// node nearest to x1, kept only when z lies in the level-m mask.
pub fn inductive_step(a: &ConnectionField, prev: &PartialGauge, strat: &Stratification, cfg: &SamplingConfig) -> Result<PartialGauge> {
    let grid = a.grid;
    let n = grid.n;
    let h = grid.h();
    let level = prev.level + 1;
    let radius = strat.cfg.r_m(prev.level).max(h);
    let clearance = cfg.clearance * h;
    let opts = TransportOptions { tol: cfg.tol, clearance: Some(clearance), ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x696e_6400 + level as u64));
    let mut offsets: Vec<([f64; MAX_DIM], f64)> = Vec::with_capacity(cfg.inductive_samples);
    while offsets.len() < cfg.inductive_samples {
        let mut u = [0.0; MAX_DIM];
        for v in u.iter_mut().take(n) {
            *v = rng.random_range(-2.0..2.0);
        }
        let r = u[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
        if r <= 2.0 {
            offsets.push((u, cutoff(r)));
        }
    }
    let cell_mass = unit_ball_volume(n) * 2f64.powi(n as i32) * radius.powi(n as i32) / cfg.inductive_samples as f64;
    let required = cfg.min_mass * radius.powi(n as i32);
    let domain = strat.mask(level);
    let results: Vec<Option<(Mat, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|node| -> Result<Option<(Mat, f64)>> {
            if !domain[node] {
                return Ok(None);
            }
            let x = grid.coords(node);
            let x = &x[..n];
            let mut s = WeightedSamples::new();
            let mut mass = 0.0;
            for (u, w) in &offsets {
                if *w == 0.0 {
                    continue;
                }
                let mut x1 = [0.0; MAX_DIM];
                for k in 0..n {
                    x1[k] = x[k] + radius * u[k];
                }
                let x1 = &x1[..n];
                if !grid.contains(x1) {
                    continue;
                }
                let z = grid.nearest_node(x1);
                if !prev.mask[z] {
                    continue;
                }
                mass += w;
                let zc = grid.coords(z);
                let zc = &zc[..n];
                if !clear(a, x1, x, clearance) || (zc != x1 && !clear(a, zc, x1, clearance)) {
                    continue;
                }
                let mut f = prev.values[z];
                if zc != x1 {
                    f = f * transport_segment(a, zc, x1, &opts)?;
                }
                if x1 != x {
                    f = f * transport_segment(a, x1, x, &opts)?;
                }
                s.push(f, *w);
            }
            if mass * cell_mass < required {
                return Err(Error::WeightMassTooSmall { mass: mass * cell_mass, required, node });
            }
            Ok(finish_node(&s, a.group, cfg.delta))
        })
        .collect::<Result<_>>()?;
    assemble(a, level, domain, results, cfg)
}

/// Builds sigma_1 .. sigma_{m_max}.
pub fn build_gauges(a: &ConnectionField, strat: &Stratification, m_max: u32, cfg: &SamplingConfig) -> Result<(usize, Vec<PartialGauge>)> {
    let origin = choose_origin(&a.grid, &strat.fmag, strat.mask(1), cfg.origin_samples, cfg.seed)?;
    if a.is_zero() {
        // every transport is the identity
        let out = (1..=m_max)
            .map(|level| {
                let mask = strat.mask(level).to_vec();
                PartialGauge {
                    grid: a.grid,
                    group: a.group,
                    level,
                    values: vec![a.group.identity(); a.grid.len()],
                    clustering: vec![0.0; a.grid.len()],
                    mask,
                    dropped: vec![],
                }
            })
            .collect();
        return Ok((origin, out));
    }
    let mut out = vec![base_gauge(a, strat, origin, cfg)?];
    for _ in 1..m_max {
        let next = inductive_step(a, out.last().unwrap(), strat, cfg)?;
        out.push(next);
    }
    Ok((origin, out))
}

/// sigma(A) = sigma A sigma^-1 - (d sigma) sigma^-1 using only masked nodes:
/// fourth-order five-point windows inside the mask, shifted as needed, with
/// three-point fallbacks. Nodes where no window fits are marked invalid.
pub fn apply_partial_gauge(sigma: &PartialGauge, a: &ConnectionField) -> (ConnectionField, Vec<bool>) {
    const W5: [[f64; 5]; 5] = [
        [-25.0, 48.0, -36.0, 16.0, -3.0],
        [-3.0, -10.0, 18.0, -6.0, 1.0],
        [1.0, -8.0, 0.0, 8.0, -1.0],
        [-1.0, 6.0, -18.0, 10.0, 3.0],
        [3.0, -16.0, 36.0, -48.0, 25.0],
    ];
    const W3: [[f64; 3]; 3] = [[-3.0, 4.0, -1.0], [-1.0, 0.0, 1.0], [1.0, -4.0, 3.0]];
    let grid = a.grid;
    let n = grid.n;
    let m = grid.m as i64;
    let h = grid.h();
    let results: Vec<Option<Vec<Mat>>> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            if !sigma.mask[node] {
                return None;
            }
            let mi = grid.multi(node);
            let s = sigma.values[node];
            let si = s.adjoint();
            let mut out = Vec::with_capacity(n);
            for al in 0..n {
                let stride = grid.stride(al) as i64;
                let i = mi[al] as i64;
                let ok = |lo: i64, len: i64| {
                    lo >= 0 && lo + len <= m && (0..len).all(|k| sigma.mask[(node as i64 + (lo + k - i) * stride) as usize])
                };
                let at = |k: i64| sigma.values[(node as i64 + (k - i) * stride) as usize];
                let mut ds = None;
                for pos in [2i64, 1, 3, 0, 4] {
                    let lo = i - pos;
                    if ok(lo, 5) {
                        let w = W5[pos as usize];
                        let mut acc = Mat::zeros(s.dim());
                        for k in 0..5 {
                            acc += at(lo + k) * w[k as usize];
                        }
                        ds = Some(acc * (1.0 / (12.0 * h)));
                        break;
                    }
                }
                if ds.is_none() {
                    for pos in [1i64, 0, 2] {
                        let lo = i - pos;
                        if ok(lo, 3) {
                            let w = W3[pos as usize];
                            let mut acc = Mat::zeros(s.dim());
                            for k in 0..3 {
                                acc += at(lo + k) * w[k as usize];
                            }
                            ds = Some(acc * (1.0 / (2.0 * h)));
                            break;
                        }
                    }
                }
                let ds = ds?;
                out.push(a.group.project_algebra(&(s * a.at(node, al) * si - ds * si)));
            }
            Some(out)
        })
        .collect();
    let mut data = vec![Mat::zeros(a.group.dim()); grid.len() * n];
    let mut valid = vec![false; grid.len()];
    for (node, r) in results.into_iter().enumerate() {
        if let Some(v) = r {
            valid[node] = true;
            data[node * n..(node + 1) * n].copy_from_slice(&v);
        }
    }
    (ConnectionField { grid, group: a.group, data, sampler: None, singular: a.singular.clone() }, valid)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BallCover {
    pub centers: Vec<usize>,
    pub radii: Vec<f64>,
}

impl BallCover {
    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Pairwise disjointness of the selected balls.
    pub fn disjoint(&self, grid: &Grid) -> bool {
        for i in 0..self.centers.len() {
            for j in (i + 1)..self.centers.len() {
                if node_distance(grid, self.centers[i], self.centers[j]) <= self.radii[i] + self.radii[j] {
                    return false;
                }
            }
        }
        true
    }

    /// Nodes of `targets` not inside any 5x-dilated ball.
    pub fn uncovered(&self, grid: &Grid, targets: &[usize]) -> Vec<usize> {
        targets
            .iter()
            .copied()
            .filter(|&y| !self.centers.iter().zip(&self.radii).any(|(&c, &r)| node_distance(grid, y, c) <= 5.0 * r * (1.0 + 1e-12)))
            .collect()
    }
}

fn node_distance(grid: &Grid, a: usize, b: usize) -> f64 {
    let (ma, mb) = (grid.multi(a), grid.multi(b));
    grid.h() * (0..grid.n).map(|k| (ma[k] as f64 - mb[k] as f64).powi(2)).sum::<f64>().sqrt()
}

/// Greedy Vitali selection over the nodes outside `mask`. Each such node x
/// gets the smallest ladder radius whose scaled L^2 ball value reaches half
/// of its sup over the ladder; that sup is at least the level threshold
/// off the singular set.
pub fn vitali_cover(grid: &Grid, fmag: &[f64], mask: &[bool], cfg: &StratConfig, m: u32) -> Result<BallCover> {
    let complement: Vec<usize> = (0..grid.len()).filter(|&i| !mask[i]).collect();
    if complement.is_empty() {
        return Ok(BallCover::default());
    }
    let bs = BallSums::for_grid(*grid);
    let sq: Vec<f64> = fmag.iter().map(|v| v * v).collect();
    let sums = bs.sums(&sq);
    let vol = grid.h().powi(grid.n as i32);
    let expo = -(grid.n as f64) / 2.0 + 1.0 + cfg.kappa;
    let radii = bs.radii.radii();
    let half_thr = 0.5 * cfg.threshold(m);
    let mut cand: Vec<(usize, f64)> = complement
        .iter()
        .map(|&x| {
            let vals: Vec<f64> = radii.iter().enumerate().map(|(j, r)| r.powf(expo) * (sums[j][x] * vol).sqrt()).collect();
            let sup = vals.iter().cloned().fold(0.0, f64::max);
            // Nodes on S sit outside Omega_m by definition; their continuum
            // sup is infinite, which the lattice resolves at the first rung.
            if sup < 2.0 * half_thr {
                return (x, radii[0]);
            }
            let j = vals.iter().position(|&v| v >= 0.5 * sup).unwrap();
            (x, radii[j])
        })
        .collect();
    cand.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut cover = BallCover::default();
    for (x, r) in cand {
        if cover.centers.iter().zip(&cover.radii).all(|(&c, &rc)| node_distance(grid, x, c) > r + rc) {
            cover.centers.push(x);
            cover.radii.push(r);
        }
    }
    if !cover.disjoint(grid) {
        return Err(Error::ConstraintViolated { what: "cover disjointness".into(), value: 1.0 });
    }
    let missed = cover.uncovered(grid, &complement);
    if !missed.is_empty() {
        return Err(Error::ConstraintViolated { what: "uncovered complement nodes".into(), value: missed.len() as f64 });
    }
    Ok(cover)
}

/// psi = max_j psi_j with psi_j = 1 on B(x_j, 5 r_j), 0 outside B(x_j, 10 r_j).
pub fn cover_cutoff(grid: &Grid, cover: &BallCover) -> Vec<f64> {
    (0..grid.len())
        .into_par_iter()
        .map(|y| {
            let mut psi: f64 = 0.0;
            for (&c, &r) in cover.centers.iter().zip(&cover.radii) {
                let d = node_distance(grid, y, c);
                if d < 10.0 * r {
                    psi = psi.max(smoothstep((10.0 - d / r) / 5.0));
                }
            }
            psi
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Truncation {
    /// (1 - psi) sigma_m(A), zero where psi = 1.
    pub field: ConnectionField,
    pub psi: Vec<f64>,
    /// sigma_m(A) where computable.
    pub gauged: ConnectionField,
    pub valid: Vec<bool>,
    /// Scale-invariant Morrey norm of F of the truncated field.
    pub curvature_morrey: f64,
}

pub fn truncate(a: &ConnectionField, sigma: &PartialGauge, cover: &BallCover, centers: &Centers) -> Result<Truncation> {
    let grid = a.grid;
    let n = grid.n;
    let psi = cover_cutoff(&grid, cover);
    let (gauged, valid) = apply_partial_gauge(sigma, a);
    let bad = (0..grid.len()).filter(|&i| psi[i] < 1.0 && !valid[i]).count();
    if bad > 0 {
        return Err(Error::MaskMismatch { count: bad });
    }
    let mut data = vec![Mat::zeros(a.group.dim()); grid.len() * n];
    for node in 0..grid.len() {
        if psi[node] < 1.0 {
            for al in 0..n {
                data[node * n + al] = gauged.data[node * n + al] * (1.0 - psi[node]);
            }
        }
    }
    let field = ConnectionField { grid, group: a.group, data, sampler: None, singular: None };
    let fm = curvature_magnitude(&curvature(&field));
    let params = MorreyParams::scale_invariant(n, 2.0, 0);
    let curvature_morrey = morrey_norm(&grid, &fm, &params, centers);
    Ok(Truncation { field, psi, gauged, valid, curvature_morrey })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub level: u32,
    pub pairs: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub p90_ratio: f64,
    /// max over masked nodes of |sigma_m(A)(x)| / T_m(x).
    pub pointwise_ratio: f64,
}

/// Measures |sigma(x0) A[[x0 -> x2 -> x1]] sigma(x1)^-1 - 1| / (r (T_m(x0) + T_m(x1)))
/// over random masked pairs at distance <= r <= 10 R_m and x2 in B(x0, r).
pub fn lipschitz_audit(
    a: &ConnectionField,
    sigma: &PartialGauge,
    strat: &Stratification,
    pairs: usize,
    cfg: &SamplingConfig,
) -> Result<LipschitzReport> {
    let grid = a.grid;
    let n = grid.n;
    let h = grid.h();
    let m = sigma.level;
    let tm = t_m(&grid, &strat.fmag, &strat.cfg, m);
    let nodes: Vec<usize> = (0..grid.len()).filter(|&i| sigma.mask[i]).collect();
    let mut report = LipschitzReport { level: m, ..Default::default() };
    if nodes.is_empty() {
        return Ok(report);
    }
    let (gauged, valid) = apply_partial_gauge(sigma, a);
    let interior = |i: usize| grid.boundary_depth(i) >= 2;
    report.pointwise_ratio = nodes
        .iter()
        .filter(|&&i| valid[i] && interior(i) && tm[i] > 0.0)
        .map(|&i| {
            let g: f64 = (0..n).map(|al| gauged.at(i, al).op_norm().powi(2)).sum::<f64>().sqrt();
            g / tm[i]
        })
        .fold(0.0, f64::max);
    let clearance = cfg.clearance * h;
    let opts = TransportOptions { tol: cfg.tol, clearance: Some(clearance), ..Default::default() };
    let rmax = (10.0 * strat.cfg.r_m(m)).max(2.0 * h);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x6c69_7000 + m as u64));
    let mut ratios = Vec::new();
    let id = a.group.identity();
    let mut attempts = 0;
    while ratios.len() < pairs && attempts < 50 * pairs {
        attempts += 1;
        let x0 = nodes[rng.random_range(0..nodes.len())];
        let r = rng.random_range(h..=rmax);
        let c0 = grid.coords(x0);
        let mut p = [0.0; MAX_DIM];
        for k in 0..n {
            p[k] = c0[k] + rng.random_range(-r..r) / (n as f64).sqrt();
        }
        let x1 = grid.nearest_node(&p[..n]);
        if x1 == x0 || !sigma.mask[x1] || node_distance(&grid, x0, x1) > r {
            continue;
        }
        let c1 = grid.coords(x1);
        let mut x2 = [0.0; MAX_DIM];
        loop {
            for k in 0..n {
                x2[k] = c0[k] + rng.random_range(-r..r);
            }
            let d: f64 = (0..n).map(|k| (x2[k] - c0[k]).powi(2)).sum::<f64>().sqrt();
            if d <= r {
                break;
            }
        }
        if !grid.contains(&x2[..n]) || !clear(a, &c0[..n], &x2[..n], clearance) || !clear(a, &x2[..n], &c1[..n], clearance) {
            continue;
        }
        let u = transport_segment(a, &c0[..n], &x2[..n], &opts)? * transport_segment(a, &x2[..n], &c1[..n], &opts)?;
        let g = sigma.values[x0] * u * sigma.values[x1].adjoint();
        let denom = r * (tm[x0] + tm[x1]);
        let num = (g - id).op_norm();
        if denom > 0.0 {
            ratios.push(num / denom);
        } else if num > 100.0 * cfg.tol {
            ratios.push(f64::INFINITY);
        }
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    report.pairs = ratios.len();
    if !ratios.is_empty() {
        report.max_ratio = *ratios.last().unwrap();
        report.median_ratio = ratios[ratios.len() / 2];
        report.p90_ratio = ratios[(ratios.len() * 9) / 10];
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorKind, GeneratorSpec};

    fn small_cfg() -> SamplingConfig {
        SamplingConfig { base_samples: 24, inductive_samples: 24, origin_samples: 16, ..Default::default() }
    }

    #[test]
    fn zero_connection_gives_identity_gauges() {
        let g = Grid::new(2, 9).unwrap();
        let a = ConnectionField::zeros(g, Group::SU2);
        let strat = Stratification::compute(&a, &StratConfig::default(), 2).unwrap();
        assert!(strat.mask(1).iter().all(|&b| b));
        let (origin, gauges) = build_gauges(&a, &strat, 2, &small_cfg()).unwrap();
        assert_eq!(origin, choose_origin(&g, &strat.fmag, strat.mask(1), 16, 0).unwrap());
        for pg in &gauges {
            assert!(pg.values.iter().all(|v| (*v - Mat::identity(2)).op_norm() < 1e-12));
        }
        let cover = vitali_cover(&g, &strat.fmag, &gauges[1].mask, &strat.cfg, 2).unwrap();
        assert!(cover.is_empty());
        let t = truncate(&a, &gauges[1], &cover, &Centers::All).unwrap();
        assert!(t.field.data.iter().all(|m| m.fro_norm() < 1e-12));
    }

    #[test]
    fn flat_connection_is_gauged_away() {
        let g = Grid::new(2, 17).unwrap();
        let spec = GeneratorSpec { kind: GeneratorKind::PureGauge, epsilon: 0.05, ..Default::default() };
        let a = generate(&spec, g, Group::SU2, 4).unwrap().field;
        let strat = Stratification::compute(&a, &StratConfig::default(), 2).unwrap();
        let (_, gauges) = build_gauges(&a, &strat, 2, &small_cfg()).unwrap();
        for pg in &gauges {
            let (ga, valid) = apply_partial_gauge(pg, &a);
            let worst = (0..g.len()).filter(|&i| valid[i]).map(|i| ga.at(i, 0).op_norm().max(ga.at(i, 1).op_norm())).fold(0.0, f64::max);
            assert!(worst < 1e-4, "level {} worst {worst}", pg.level);
        }
    }

    #[test]
    fn partial_gauge_matches_full_stencils_on_full_mask() {
        let g = Grid::new(2, 9).unwrap();
        let spec = GeneratorSpec { kind: GeneratorKind::RandomSmooth, epsilon: 0.3, ..Default::default() };
        let a = generate(&spec, g, Group::SU2, 2).unwrap().field;
        let pgf = generate(&GeneratorSpec { kind: GeneratorKind::PureGauge, epsilon: 0.3, ..Default::default() }, g, Group::SU2, 5).unwrap();
        let sigma = pgf.gauge.unwrap();
        let pg = PartialGauge {
            grid: g,
            group: Group::SU2,
            level: 1,
            mask: vec![true; g.len()],
            values: sigma.data.clone(),
            clustering: vec![0.0; g.len()],
            dropped: vec![],
        };
        let (p, valid) = apply_partial_gauge(&pg, &a);
        let full = crate::field::apply_gauge(&sigma, &a).unwrap();
        assert!(valid.iter().all(|&v| v));
        for (x, y) in p.data.iter().zip(&full.data) {
            assert!((*x - *y).fro_norm() < 1e-13);
        }
    }

    #[test]
    fn cover_is_disjoint_and_covers() {
        let g = Grid::new(2, 17).unwrap();
        let mut fmag = vec![0.0; g.len()];
        for (i, f) in fmag.iter_mut().enumerate() {
            let x = g.coords(i);
            let d2 = (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2);
            *f = 5.0 / (0.01 + d2);
        }
        let cfg = StratConfig { epsilon: 0.5, ..Default::default() };
        let q = q_function(&g, &fmag, cfg.kappa);
        let mask = omega_m(&q, &vec![1.0; g.len()], &cfg, 1);
        let out: Vec<usize> = (0..g.len()).filter(|&i| !mask[i]).collect();
        assert!(!out.is_empty());
        let cover = vitali_cover(&g, &fmag, &mask, &cfg, 1).unwrap();
        assert!(cover.disjoint(&g));
        assert!(cover.uncovered(&g, &out).is_empty());
        let psi = cover_cutoff(&g, &cover);
        for &i in &out {
            assert_eq!(psi[i], 1.0);
        }
    }

    #[test]
    fn smoothstep_plateaus() {
        assert_eq!(smoothstep(-0.3), 0.0);
        assert_eq!(smoothstep(1.7), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(cutoff(0.9), 1.0);
        assert_eq!(cutoff(2.1), 0.0);
    }
}
