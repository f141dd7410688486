//! Neumann Laplacian solves and Coulomb gauge fixing.
//!
//! The Coulomb iteration works on link variables: L(i, a) lives on the edge
//! from node i to i + e_a. The divergence uses ghost links mirrored with odd
//! sign across each face, so Div(grad u) is exactly the ghost-node Neumann
//! Laplacian that the cosine transform diagonalizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{apply_gauge, curvature, curvature_magnitude, partial_mat, partial_scalar, ConnectionField, GaugeField, Grid};
use crate::lie::{exp, log, polar_factor, Group};
use crate::mat::Mat;
use crate::morrey::{
    gradient_magnitude, hessian_magnitude, morrey_norm, morrey_sobolev_connection, BallSums, Centers, MorreyParams,
};
use crate::spectral::Dct1Nd;

pub const MAX_CG_ITERATIONS: usize = 100_000;

/// Product over axes of the trapezoid weights (1/2 on each face).
fn trapezoid_weight(grid: &Grid, node: usize) -> f64 {
    let mi = grid.multi(node);
    (0..grid.n).map(|a| if mi[a] == 0 || mi[a] == grid.m - 1 { 0.5 } else { 1.0 }).product()
}

fn weighted_mean(grid: &Grid, f: &[f64]) -> f64 {
    let (mut s, mut w) = (0.0, 0.0);
    for (i, v) in f.iter().enumerate() {
        let t = trapezoid_weight(grid, i);
        s += t * v;
        w += t;
    }
    s / w
}

/// Ghost-node Laplacian with homogeneous Neumann closure.
pub fn neumann_laplacian(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let h2 = grid.h() * grid.h();
    let m = grid.m;
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mi = grid.multi(i);
            let mut s = 0.0;
            for a in 0..grid.n {
                let st = grid.stride(a);
                let lo = if mi[a] == 0 { u[i + st] } else { u[i - st] };
                let hi = if mi[a] == m - 1 { u[i - st] } else { u[i + st] };
                s += lo - 2.0 * u[i] + hi;
            }
            s / h2
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct NeumannProblem {
    pub grid: Grid,
    /// Source: Laplacian u = f.
    pub f: Vec<f64>,
    /// Boundary data as a vector field (node * n + a): the outward normal
    /// derivative of u on each face equals g . n. `None` means zero flux.
    pub g: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeumannMethod {
    Cosine,
    ConjugateGradient,
}

#[derive(Clone, Debug)]
pub struct NeumannSolution {
    pub u: Vec<f64>,
    /// Weighted mean removed from the (flux-augmented) source.
    pub compatibility_defect: f64,
    pub iterations: usize,
    pub relative_residual: f64,
}

impl NeumannProblem {
    /// Source with the boundary flux folded in through the ghost nodes,
    /// projected to be compatible.
    fn rhs(&self) -> (Vec<f64>, f64) {
        let grid = self.grid;
        let n = grid.n;
        let h = grid.h();
        let mut r = self.f.clone();
        if let Some(g) = &self.g {
            for (i, v) in r.iter_mut().enumerate() {
                let mi = grid.multi(i);
                for a in 0..n {
                    if mi[a] == 0 {
                        *v += 2.0 * g[i * n + a] / h;
                    }
                    if mi[a] == grid.m - 1 {
                        *v -= 2.0 * g[i * n + a] / h;
                    }
                }
            }
        }
        let mean = weighted_mean(&grid, &r);
        r.iter_mut().for_each(|v| *v -= mean);
        (r, mean)
    }
}

/// Cosine diagonalization when there is no boundary flux, conjugate
/// gradients otherwise.
pub fn neumann_solve(prob: &NeumannProblem, tol: f64) -> Result<NeumannSolution> {
    let method = if prob.g.is_some() { NeumannMethod::ConjugateGradient } else { NeumannMethod::Cosine };
    neumann_solve_with(prob, method, tol)
}

pub fn neumann_solve_with(prob: &NeumannProblem, method: NeumannMethod, tol: f64) -> Result<NeumannSolution> {
    let grid = prob.grid;
    if prob.f.len() != grid.len() || prob.g.as_ref().is_some_and(|g| g.len() != grid.len() * grid.n) {
        return Err(Error::GridMismatch("Neumann data does not match the grid".into()));
    }
    let (rhs, defect) = prob.rhs();
    let (mut u, iterations, res) = match method {
        NeumannMethod::Cosine => (cosine_solve(&grid, &rhs), 0, 0.0),
        NeumannMethod::ConjugateGradient => cg_solve(&grid, &rhs, tol)?,
    };
    let mean = weighted_mean(&grid, &u);
    u.iter_mut().for_each(|v| *v -= mean);
    let relative_residual = if method == NeumannMethod::Cosine {
        let lap = neumann_laplacian(&grid, &u);
        let num = lap.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den = rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
        if den > 0.0 { num / den } else { num }
    } else {
        res
    };
    Ok(NeumannSolution { u, compatibility_defect: defect, iterations, relative_residual })
}

fn cosine_solve(grid: &Grid, rhs: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let m = grid.m;
    let dct = Dct1Nd::new(&vec![m; n]);
    let mut d = rhs.to_vec();
    dct.transform(&mut d);
    let h2 = grid.h() * grid.h();
    let eig: Vec<f64> = (0..m).map(|k| (2.0 * (std::f64::consts::PI * k as f64 / (m - 1) as f64).cos() - 2.0) / h2).collect();
    for (i, v) in d.iter_mut().enumerate() {
        let mi = grid.multi(i);
        let lam: f64 = (0..n).map(|a| eig[mi[a]]).sum();
        *v = if i == 0 { 0.0 } else { *v / lam };
    }
    dct.transform(&mut d);
    let s = dct.scale();
    d.iter_mut().for_each(|v| *v /= s);
    d
}

/// CG on -W Lap u = -W rhs, W the trapezoid weights (symmetric, constants in
/// the kernel).
fn cg_solve(grid: &Grid, rhs: &[f64], tol: f64) -> Result<(Vec<f64>, usize, f64)> {
    let w: Vec<f64> = (0..grid.len()).map(|i| trapezoid_weight(grid, i)).collect();
    let apply = |u: &[f64]| -> Vec<f64> { neumann_laplacian(grid, u).iter().zip(&w).map(|(l, w)| -l * w).collect() };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b: Vec<f64> = rhs.iter().zip(&w).map(|(r, w)| -r * w).collect();
    let bn = dot(&b, &b).sqrt();
    let mut u = vec![0.0; grid.len()];
    if bn == 0.0 {
        return Ok((u, 0, 0.0));
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 1..=MAX_CG_ITERATIONS {
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for k in 0..u.len() {
            u[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * bn {
            return Ok((u, it, rr_new.sqrt() / bn));
        }
        let beta = rr_new / rr;
        for k in 0..p.len() {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
    }
    Err(Error::NoConvergence { steps: MAX_CG_ITERATIONS })
}

/// Algebra-valued fields are solved coordinate-wise.
fn basis_coords(basis: &[Mat], x: &Mat) -> Vec<f64> {
    basis.iter().map(|b| (b.adjoint() * *x).trace().re / b.fro_norm_sqr()).collect()
}

fn from_basis(basis: &[Mat], c: &[f64], dim: usize) -> Mat {
    let mut out = Mat::zeros(dim);
    for (b, v) in basis.iter().zip(c) {
        out += *b * *v;
    }
    out
}

/// Link variables; entry node * n + a belongs to the edge node -> node + e_a
/// (unused on the top face of axis a).
#[derive(Clone, Debug)]
pub struct LinkField {
    pub grid: Grid,
    pub group: Group,
    pub data: Vec<Mat>,
}

impl LinkField {
    pub fn has_link(grid: &Grid, node: usize, a: usize) -> bool {
        grid.multi(node)[a] + 1 < grid.m
    }

    /// Edge averages of a nodal connection.
    pub fn from_nodal(a: &ConnectionField) -> Self {
        let grid = a.grid;
        let n = grid.n;
        let mut data = vec![Mat::zeros(a.group.dim()); grid.len() * n];
        for node in 0..grid.len() {
            for al in 0..n {
                if Self::has_link(&grid, node, al) {
                    data[node * n + al] = (a.at(node, al) + a.at(node + grid.stride(al), al)) * 0.5;
                }
            }
        }
        LinkField { grid, group: a.group, data }
    }

    pub fn max_magnitude(&self) -> f64 {
        let n = self.grid.n;
        (0..self.grid.len())
            .map(|i| {
                (0..n)
                    .filter(|&a| Self::has_link(&self.grid, i, a))
                    .map(|a| self.data[i * n + a].op_norm().powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Ghost-closed divergence at every node.
    pub fn divergence(&self) -> Vec<Mat> {
        let grid = self.grid;
        let n = grid.n;
        let h = grid.h();
        let d = self.group.dim();
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let mi = grid.multi(i);
                let mut s = Mat::zeros(d);
                for a in 0..n {
                    let st = grid.stride(a);
                    let fwd = if mi[a] + 1 < grid.m { self.data[i * n + a] } else { -self.data[(i - st) * n + a] };
                    let bwd = if mi[a] > 0 { self.data[(i - st) * n + a] } else { -self.data[i * n + a] };
                    s += fwd - bwd;
                }
                s * (1.0 / h)
            })
            .collect()
    }

    /// Gauge action on links: L' = (Ad_{s_i} + Ad_{s_j}) L / 2 - log(s_j s_i^-1) / h.
    pub fn gauge(&self, sigma: &[Mat]) -> Result<LinkField> {
        let grid = self.grid;
        let n = grid.n;
        let h = grid.h();
        let group = self.group;
        let data: Vec<Mat> = (0..grid.len() * n)
            .into_par_iter()
            .map(|k| {
                let (i, a) = (k / n, k % n);
                if !Self::has_link(&grid, i, a) {
                    return Ok(Mat::zeros(group.dim()));
                }
                let j = i + grid.stride(a);
                let (si, sj) = (sigma[i], sigma[j]);
                let l = self.data[k];
                let ad = (si * l * si.adjoint() + sj * l * sj.adjoint()) * 0.5;
                let lg = log(&(sj * si.adjoint()))?;
                Ok(group.project_algebra(&(ad - lg * (1.0 / h))))
            })
            .collect::<Result<_>>()?;
        Ok(LinkField { grid, group, data })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoulombConfig {
    /// Update damping: U <- U + step (U_solved - U).
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Perturbative regime: curvature Morrey norm at most this.
    pub threshold: f64,
    pub relaxation_sweeps: usize,
    pub relaxation_stall: f64,
}

impl Default for CoulombConfig {
    fn default() -> Self {
        CoulombConfig { step: 1.0, tol: 1e-9, max_iter: 200, threshold: 0.2, relaxation_sweeps: 2000, relaxation_stall: 1e-12 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoulombReport {
    pub iterations: usize,
    pub converged: bool,
    /// max |Div| of the gauged links after each iteration.
    pub residual_history: Vec<f64>,
    /// Morrey-Sobolev size of each update.
    pub update_history: Vec<f64>,
    pub divergence: f64,
    /// divergence / max |A|.
    pub divergence_relative: f64,
    /// max over face nodes of the normal component (h/2)|Div| left by the ghost closure.
    pub boundary_defect: f64,
    /// Fourth-order nodal divergence of the gauged connection on interior nodes.
    pub nodal_divergence: f64,
    pub connection_norm: f64,
    pub curvature_norm: f64,
    pub norm_ratio: f64,
    pub within_threshold: bool,
}

#[derive(Clone, Debug)]
pub struct CoulombResult {
    pub gauge: GaugeField,
    pub links: LinkField,
    /// Nodal gauged connection (fourth-order stencils).
    pub field: ConnectionField,
    pub report: CoulombReport,
}

/// M^{n/2}_{2,k} size of an algebra-valued nodal field given by coordinates.
fn coords_morrey(grid: &Grid, comps: &[Vec<f64>], k: usize, centers: &Centers) -> f64 {
    let params = MorreyParams::scale_invariant(grid.n, 2.0, 0);
    let mag = |fs: Vec<Vec<f64>>| -> Vec<f64> { (0..grid.len()).map(|i| fs.iter().map(|f| f[i] * f[i]).sum::<f64>().sqrt()).collect() };
    let mut total = morrey_norm(grid, &mag(comps.to_vec()), &params, centers);
    if k >= 1 {
        total += morrey_norm(grid, &mag(comps.iter().map(|c| gradient_magnitude(grid, c)).collect()), &params, centers);
    }
    if k >= 2 {
        total += morrey_norm(grid, &mag(comps.iter().map(|c| hessian_magnitude(grid, c)).collect()), &params, centers);
    }
    total
}

fn boundary_defect(grid: &Grid, div: &[Mat]) -> f64 {
    let h = grid.h();
    (0..grid.len()).filter(|&i| grid.is_boundary(i)).map(|i| 0.5 * h * div[i].op_norm()).fold(0.0, f64::max)
}

fn max_op(v: &[Mat]) -> f64 {
    v.iter().map(|m| m.op_norm()).fold(0.0, f64::max)
}

/// Fixed-point iteration Lap U_{j+1} = Div(L(exp U_j) + grad U_j) on links.
pub fn coulomb_fix_links(links: &LinkField, cfg: &CoulombConfig, centers: &Centers) -> Result<(Vec<Mat>, LinkField, CoulombReport)> {
    let grid = links.grid;
    let group = links.group;
    let n = grid.n;
    let h = grid.h();
    let basis = group.algebra_basis();
    let d = group.dim();
    let amax = links.max_magnitude();
    let mut u = vec![Mat::zeros(d); grid.len()];
    let mut report = CoulombReport::default();
    let mut rising = 0;
    let mut gauged = links.clone();
    for it in 1..=cfg.max_iter {
        let sigma: Vec<Mat> = u.par_iter().map(exp).collect();
        let l = links.gauge(&sigma)?;
        // N = L + grad U on links
        let mut nl = l.clone();
        for i in 0..grid.len() {
            for a in 0..n {
                if LinkField::has_link(&grid, i, a) {
                    nl.data[i * n + a] += (u[i + grid.stride(a)] - u[i]) * (1.0 / h);
                }
            }
        }
        let div = nl.divergence();
        let comps: Vec<Vec<f64>> = {
            let c: Vec<Vec<f64>> = div.iter().map(|m| basis_coords(&basis, m)).collect();
            (0..basis.len()).map(|b| c.iter().map(|v| v[b]).collect()).collect()
        };
        let solved: Vec<Vec<f64>> = comps
            .iter()
            .map(|f| neumann_solve(&NeumannProblem { grid, f: f.clone(), g: None }, cfg.tol).map(|s| s.u))
            .collect::<Result<_>>()?;
        let old: Vec<Vec<f64>> = {
            let c: Vec<Vec<f64>> = u.iter().map(|m| basis_coords(&basis, m)).collect();
            (0..basis.len()).map(|b| c.iter().map(|v| v[b]).collect()).collect()
        };
        let delta: Vec<Vec<f64>> = solved.iter().zip(&old).map(|(s, o)| s.iter().zip(o).map(|(a, b)| cfg.step * (a - b)).collect()).collect();
        for (i, ui) in u.iter_mut().enumerate() {
            let c: Vec<f64> = (0..basis.len()).map(|b| old[b][i] + delta[b][i]).collect();
            *ui = from_basis(&basis, &c, d);
        }
        let upd = coords_morrey(&grid, &delta, 2, centers);
        let sigma: Vec<Mat> = u.par_iter().map(exp).collect();
        gauged = links.gauge(&sigma)?;
        let res = max_op(&gauged.divergence());
        if let Some(&prev) = report.residual_history.last() {
            rising = if res > prev { rising + 1 } else { 0 };
        }
        report.residual_history.push(res);
        report.update_history.push(upd);
        report.iterations = it;
        if rising >= 3 {
            return Err(Error::IterationDiverged { iteration: it, residual: res });
        }
        if upd < cfg.tol && res <= 10.0 * cfg.tol * amax.max(f64::MIN_POSITIVE) {
            report.converged = true;
            break;
        }
        if upd < cfg.tol && res == 0.0 {
            report.converged = true;
            break;
        }
    }
    let div = gauged.divergence();
    report.divergence = max_op(&div);
    report.divergence_relative = if amax > 0.0 { report.divergence / amax } else { report.divergence };
    report.boundary_defect = boundary_defect(&grid, &div);
    let sigma: Vec<Mat> = u.par_iter().map(exp).collect();
    Ok((sigma, gauged, report))
}

fn fill_nodal_report(a: &ConnectionField, field: &ConnectionField, report: &mut CoulombReport, cfg: &CoulombConfig, centers: &Centers) -> Result<()> {
    let grid = a.grid;
    let n = grid.n;
    report.nodal_divergence = (0..grid.len())
        .filter(|&i| grid.boundary_depth(i) >= 2)
        .map(|i| {
            let mut s = Mat::zeros(a.group.dim());
            for al in 0..n {
                s += partial_mat(&grid, i, al, |j| field.data[j * n + al]);
            }
            s.op_norm()
        })
        .fold(0.0, f64::max);
    report.curvature_norm = morrey_norm(&grid, &curvature_magnitude(&curvature(a)), &MorreyParams::scale_invariant(n, 2.0, 0), centers);
    report.connection_norm = morrey_sobolev_connection(field, &MorreyParams::scale_invariant(n, 2.0, 1), centers)?;
    report.norm_ratio = if report.curvature_norm > 0.0 { report.connection_norm / report.curvature_norm } else { 0.0 };
    report.within_threshold = report.curvature_norm <= cfg.threshold;
    Ok(())
}

/// Coulomb gauge of a nodal connection.
pub fn coulomb_fix(a: &ConnectionField, cfg: &CoulombConfig, centers: &Centers) -> Result<CoulombResult> {
    let links = LinkField::from_nodal(a);
    let (sigma, gauged, mut report) = coulomb_fix_links(&links, cfg, centers)?;
    let gauge = GaugeField { grid: a.grid, group: a.group, data: sigma };
    let field = apply_gauge(&gauge, &a.clone().without_sampler())?;
    fill_nodal_report(a, &field, &mut report, cfg, centers)?;
    Ok(CoulombResult { gauge, links: gauged, field, report })
}

/// Node-by-node maximization of sum Re tr(s_i V s_j^-1) over links with
/// V = exp(h L); stops when the relative gain of a sweep stalls.
pub fn relaxation_fix(a: &ConnectionField, cfg: &CoulombConfig, centers: &Centers) -> Result<CoulombResult> {
    let grid = a.grid;
    let group = a.group;
    let n = grid.n;
    let h = grid.h();
    let links = LinkField::from_nodal(a);
    let v: Vec<Mat> = links.data.iter().map(|l| exp(&(*l * h))).collect();
    let mut s = vec![group.identity(); grid.len()];
    // transverse trapezoid weights: stationarity is then the ghost-closed divergence
    let lw: Vec<f64> = (0..grid.len() * n)
        .map(|k| {
            let (i, al) = (k / n, k % n);
            let mi = grid.multi(i);
            (0..n).filter(|&b| b != al).map(|b| if mi[b] == 0 || mi[b] + 1 == grid.m { 0.5 } else { 1.0 }).product()
        })
        .collect();
    let functional = |s: &[Mat]| -> f64 {
        let mut f = 0.0;
        for i in 0..grid.len() {
            for al in 0..n {
                if LinkField::has_link(&grid, i, al) {
                    let j = i + grid.stride(al);
                    f += lw[i * n + al] * (s[i] * v[i * n + al] * s[j].adjoint()).trace().re;
                }
            }
        }
        f
    };
    let mut report = CoulombReport::default();
    let mut prev = functional(&s);
    for sweep in 1..=cfg.relaxation_sweeps {
        for i in 0..grid.len() {
            let mi = grid.multi(i);
            let mut k = Mat::zeros(group.dim());
            for al in 0..n {
                let st = grid.stride(al);
                if mi[al] + 1 < grid.m {
                    k += v[i * n + al] * s[i + st].adjoint() * lw[i * n + al];
                }
                if mi[al] > 0 {
                    k += (s[i - st] * v[(i - st) * n + al]).adjoint() * lw[(i - st) * n + al];
                }
            }
            if k.fro_norm() > 0.0 {
                s[i] = polar_factor(&k, group.is_special()).adjoint();
            }
        }
        let f = functional(&s);
        let res = max_op(&links.gauge(&s)?.divergence());
        report.residual_history.push(res);
        report.iterations = sweep;
        let gain = (f - prev) / prev.abs().max(1.0);
        prev = f;
        if gain < cfg.relaxation_stall {
            report.converged = true;
            break;
        }
    }
    let gauged = links.gauge(&s)?;
    let div = gauged.divergence();
    let amax = links.max_magnitude();
    report.divergence = max_op(&div);
    report.divergence_relative = if amax > 0.0 { report.divergence / amax } else { report.divergence };
    report.boundary_defect = boundary_defect(&grid, &div);
    let gauge = GaugeField { grid, group, data: s };
    let field = apply_gauge(&gauge, &a.clone().without_sampler())?;
    fill_nodal_report(a, &field, &mut report, cfg, centers)?;
    Ok(CoulombResult { gauge, links: gauged, field, report })
}

/// Coulomb iteration with relaxation pre-conditioning when it diverges.
pub fn coulomb_fix_robust(a: &ConnectionField, cfg: &CoulombConfig, centers: &Centers) -> Result<(CoulombResult, bool)> {
    match coulomb_fix(a, cfg, centers) {
        Err(Error::IterationDiverged { .. }) => {
            let pre = relaxation_fix(a, cfg, centers)?;
            let mut out = coulomb_fix(&pre.field, cfg, centers)?;
            out.gauge = out.gauge.compose(&pre.gauge)?;
            Ok((out, true))
        }
        other => other.map(|r| (r, false)),
    }
}

/// Scalar Poisson oracle for abelian fields: Lap u = Div L with the ghost
/// closure, solved by conjugate gradients.
pub fn abelian_poisson_gauge(a: &ConnectionField, tol: f64) -> Result<Vec<f64>> {
    if !a.group.is_abelian() {
        return Err(Error::InvalidInput("Poisson oracle needs an abelian group".into()));
    }
    let links = LinkField::from_nodal(a);
    let f: Vec<f64> = links.divergence().iter().map(|m| m.get(0, 0).im).collect();
    Ok(neumann_solve_with(&NeumannProblem { grid: a.grid, f, g: None }, NeumannMethod::ConjugateGradient, tol)?.u)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub connection_norm: f64,
    pub curvature_norm: f64,
    /// ||A|| / (||F|| + ||A||^2).
    pub linear_constant: f64,
    /// ||A||^2 / ||F||: relative size of the quadratic term.
    pub quadratic_fraction: f64,
    /// max over interior nodes of |Lap A| / (|A||grad A| + |A|^3).
    pub pointwise_ratio: f64,
    /// Localized Morrey-Sobolev ratios between B(x, r/4) and B(x, r).
    pub decay_ratios: Vec<f64>,
    pub decay_max: f64,
}

/// Localized M^{n/2}_{2,1} size of a nodal field on B(x, r): sup over ladder
/// balls contained in it.
fn local_morrey(grid: &Grid, bs: &BallSums, sums_a: &[Vec<f64>], sums_g: &[Vec<f64>], x: usize, r: f64) -> f64 {
    let vol = grid.h().powi(grid.n as i32);
    let expo = grid.n as f64 * (2.0 / grid.n as f64 - 0.5);
    let cx = grid.coords(x);
    let mut best_a: f64 = 0.0;
    let mut best_g: f64 = 0.0;
    for c in 0..grid.len() {
        let cc = grid.coords(c);
        let d = (0..grid.n).map(|k| (cc[k] - cx[k]).powi(2)).sum::<f64>().sqrt();
        if d > r {
            continue;
        }
        for j in 0..bs.radii.len() {
            let s = bs.radii.radius(j);
            if d + s > r + 1e-12 {
                break;
            }
            let w = s.powf(expo);
            best_a = best_a.max(w * (sums_a[j][c] * vol).sqrt());
            best_g = best_g.max(w * (sums_g[j][c] * vol).sqrt());
        }
    }
    best_a + best_g
}

pub fn bootstrap_audit(a: &ConnectionField, balls: usize, seed: u64, centers: &Centers) -> Result<BootstrapReport> {
    let grid = a.grid;
    let n = grid.n;
    let mut rep = BootstrapReport {
        connection_norm: morrey_sobolev_connection(a, &MorreyParams::scale_invariant(n, 2.0, 1), centers)?,
        curvature_norm: morrey_norm(&grid, &curvature_magnitude(&curvature(a)), &MorreyParams::scale_invariant(n, 2.0, 0), centers),
        ..Default::default()
    };
    let (an, fnm) = (rep.connection_norm, rep.curvature_norm);
    if an == 0.0 {
        return Ok(rep);
    }
    rep.linear_constant = an / (fnm + an * an);
    rep.quadratic_fraction = if fnm > 0.0 { an * an / fnm } else { f64::INFINITY };
    let mag = a.magnitude();
    let grad = crate::morrey::connection_gradient_magnitude(a);
    let scale = mag.iter().cloned().fold(0.0, f64::max) * grad.iter().cloned().fold(0.0, f64::max);
    rep.pointwise_ratio = (0..grid.len())
        .filter(|&i| grid.boundary_depth(i) >= 4)
        .filter_map(|i| {
            let mut lap = 0.0;
            for al in 0..n {
                let mut l = Mat::zeros(a.group.dim());
                for b in 0..n {
                    let comp = |j: usize| partial_mat(&grid, j, b, |k| a.data[k * n + al]);
                    l += partial_mat(&grid, i, b, comp);
                }
                lap += l.op_norm().powi(2);
            }
            let den = mag[i] * grad[i] + mag[i].powi(3);
            (den > 1e-3 * scale).then(|| lap.sqrt() / den)
        })
        .fold(0.0, f64::max);
    let bs = BallSums::for_grid(grid);
    let sums_a = bs.sums(&mag.iter().map(|v| v * v).collect::<Vec<_>>());
    let sums_g = bs.sums(&grad.iter().map(|v| v * v).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x626f_6f74);
    let interior: Vec<usize> = (0..grid.len()).filter(|&i| grid.boundary_depth(i) >= grid.m / 4).collect();
    for _ in 0..balls {
        if interior.is_empty() {
            break;
        }
        let x = interior[rng.random_range(0..interior.len())];
        let r = rng.random_range(8.0 * grid.h()..=(0.25f64).max(8.0 * grid.h()));
        let big = local_morrey(&grid, &bs, &sums_a, &sums_g, x, r);
        if big > 0.0 {
            rep.decay_ratios.push(local_morrey(&grid, &bs, &sums_a, &sums_g, x, 0.25 * r) / big);
        }
    }
    rep.decay_max = rep.decay_ratios.iter().cloned().fold(0.0, f64::max);
    Ok(rep)
}

/// Real 1-form on links with vanishing ghost divergence.
#[derive(Clone, Debug)]
pub struct LinkForm {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl LinkForm {
    pub fn divergence(&self) -> Vec<f64> {
        let grid = self.grid;
        let n = grid.n;
        let h = grid.h();
        (0..grid.len())
            .map(|i| {
                let mi = grid.multi(i);
                let mut s = 0.0;
                for a in 0..n {
                    let st = grid.stride(a);
                    let fwd = if mi[a] + 1 < grid.m { self.data[i * n + a] } else { -self.data[(i - st) * n + a] };
                    let bwd = if mi[a] > 0 { self.data[(i - st) * n + a] } else { -self.data[i * n + a] };
                    s += fwd - bwd;
                }
                s / h
            })
            .collect()
    }

    /// Node values: edge averages inside, the odd ghost makes the normal
    /// component vanish on faces.
    pub fn nodal(&self) -> Vec<Vec<f64>> {
        let grid = self.grid;
        let n = grid.n;
        (0..n)
            .map(|a| {
                let st = grid.stride(a);
                (0..grid.len())
                    .map(|i| {
                        let mi = grid.multi(i);
                        if mi[a] == 0 || mi[a] + 1 == grid.m {
                            0.0
                        } else {
                            0.5 * (self.data[(i - st) * n + a] + self.data[i * n + a])
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Divergence-free, tangential 1-form: a band-limited random form minus the
/// gradient of its Neumann potential. The random form is a continuum object
/// fixed by the seed, so refinements sample the same u.
pub fn divergence_free_sample(grid: Grid, seed: u64, band: usize, tol: f64) -> Result<LinkForm> {
    let n = grid.n;
    let h = grid.h();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(usize, Vec<f64>, f64, f64)> = (0..3 * n)
        .map(|t| {
            let k: Vec<f64> = (0..n).map(|_| rng.random_range(0..=band) as f64).collect();
            (t % n, k, rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(-1.0..1.0))
        })
        .collect();
    let w = |x: &[f64], comp: usize| -> f64 {
        terms
            .iter()
            .filter(|t| t.0 == comp)
            .map(|(_, k, ph, amp)| amp * (std::f64::consts::PI * k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + ph).cos())
            .sum()
    };
    let mut data = vec![0.0; grid.len() * n];
    for i in 0..grid.len() {
        for a in 0..n {
            if grid.multi(i)[a] + 1 < grid.m {
                let mut x = grid.coords(i);
                x[a] += 0.5 * h;
                data[i * n + a] = w(&x[..n], a);
            }
        }
    }
    let mut form = LinkForm { grid, data };
    let div = form.divergence();
    let phi = neumann_solve(&NeumannProblem { grid, f: div, g: None }, tol)?.u;
    for i in 0..grid.len() {
        for a in 0..n {
            if grid.multi(i)[a] + 1 < grid.m {
                form.data[i * n + a] -= (phi[i + grid.stride(a)] - phi[i]) / h;
            }
        }
    }
    Ok(form)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HodgeReport {
    pub q: f64,
    pub form_norm: f64,
    pub exterior_norm: f64,
    /// None when both norms vanish.
    pub ratio: Option<f64>,
}

/// ||u||_{M^q_{2,1}} / ||du||_{M^q_2} for a divergence-free tangential form.
pub fn hodge_estimate_audit(u: &LinkForm, q: f64, centers: &Centers) -> Result<HodgeReport> {
    let grid = u.grid;
    let n = grid.n;
    let div = u.divergence();
    let scale = u.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let worst = div.iter().fold(0.0f64, |m, v| m.max(v.abs())) * grid.h();
    if worst > 1e-6 * scale {
        return Err(Error::ConstraintViolated { what: "divergence of the 1-form".into(), value: worst });
    }
    let comps = u.nodal();
    let params = MorreyParams::relaxed(q, 2.0, 0)?;
    let mag: Vec<f64> = (0..grid.len()).map(|i| comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt()).collect();
    let gmag: Vec<f64> = {
        let gs: Vec<Vec<f64>> = comps.iter().map(|c| gradient_magnitude(&grid, c)).collect();
        (0..grid.len()).map(|i| gs.iter().map(|g| g[i] * g[i]).sum::<f64>().sqrt()).collect()
    };
    let dmag: Vec<f64> = (0..grid.len())
        .map(|i| {
            let mut s = 0.0;
            for a in 0..n {
                for b in (a + 1)..n {
                    let v = partial_scalar(&grid, i, a, |j| comps[b][j]) - partial_scalar(&grid, i, b, |j| comps[a][j]);
                    s += 2.0 * v * v;
                }
            }
            s.sqrt()
        })
        .collect();
    let form_norm = morrey_norm(&grid, &mag, &params, centers) + morrey_norm(&grid, &gmag, &params, centers);
    let exterior_norm = morrey_norm(&grid, &dmag, &params, centers);
    let ratio = if form_norm == 0.0 && exterior_norm == 0.0 { None } else { Some(form_norm / exterior_norm) };
    Ok(HodgeReport { q, form_norm, exterior_norm, ratio })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NeumannEstimate {
    pub solution_norm: f64,
    pub data_norm: f64,
    pub ratio: f64,
}

/// ||u||_{M^q_{2,2}} against ||f||_{M^q_2} + ||g||_{M^q_{2,1}}.
pub fn neumann_estimate(prob: &NeumannProblem, q: f64, tol: f64, centers: &Centers) -> Result<NeumannEstimate> {
    let grid = prob.grid;
    let n = grid.n;
    let u = neumann_solve(prob, tol)?.u;
    let params = MorreyParams::relaxed(q, 2.0, 0)?;
    let su = morrey_norm(&grid, &u, &params, centers)
        + morrey_norm(&grid, &gradient_magnitude(&grid, &u), &params, centers)
        + morrey_norm(&grid, &hessian_magnitude(&grid, &u), &params, centers);
    let mut data = morrey_norm(&grid, &prob.f, &params, centers);
    if let Some(g) = &prob.g {
        let comps: Vec<Vec<f64>> = (0..n).map(|a| (0..grid.len()).map(|i| g[i * n + a]).collect()).collect();
        let mag: Vec<f64> = (0..grid.len()).map(|i| comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt()).collect();
        let gs: Vec<Vec<f64>> = comps.iter().map(|c| gradient_magnitude(&grid, c)).collect();
        let gm: Vec<f64> = (0..grid.len()).map(|i| gs.iter().map(|g| g[i] * g[i]).sum::<f64>().sqrt()).collect();
        data += morrey_norm(&grid, &mag, &params, centers) + morrey_norm(&grid, &gm, &params, centers);
    }
    Ok(NeumannEstimate { solution_norm: su, data_norm: data, ratio: if data > 0.0 { su / data } else { 0.0 } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorKind, GeneratorSpec};
    use std::f64::consts::PI;

    #[test]
    fn zero_data_gives_zero_solution() {
        let g = Grid::new(3, 9).unwrap();
        let s = neumann_solve(&NeumannProblem { grid: g, f: vec![0.0; g.len()], g: None }, 1e-12).unwrap();
        assert!(s.u.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cosine_mode_second_order() {
        let mut errs = vec![];
        for m in [9, 17, 33] {
            let g = Grid::new(2, m).unwrap();
            let f: Vec<f64> = (0..g.len()).map(|i| (PI * g.coords(i)[0]).cos()).collect();
            let s = neumann_solve(&NeumannProblem { grid: g, f, g: None }, 1e-12).unwrap();
            let e = (0..g.len()).map(|i| (s.u[i] + (PI * g.coords(i)[0]).cos() / (PI * PI)).abs()).fold(0.0, f64::max);
            errs.push(e);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&order), "{errs:?}");
        }
    }

    #[test]
    fn cg_agrees_with_cosine_and_handles_flux() {
        let g = Grid::new(2, 13).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let p = NeumannProblem { grid: g, f, g: None };
        let a = neumann_solve_with(&p, NeumannMethod::Cosine, 1e-13).unwrap();
        let b = neumann_solve_with(&p, NeumannMethod::ConjugateGradient, 1e-13).unwrap();
        assert!(a.compatibility_defect.abs() > 0.0);
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((x - y).abs() < 1e-9);
        }
        // u = x^2 / 2 has Laplacian 1 and normal derivative x . n
        let mut gv = vec![0.0; g.len() * 2];
        for i in 0..g.len() {
            gv[i * 2] = g.coords(i)[0];
        }
        let p = NeumannProblem { grid: g, f: vec![1.0; g.len()], g: Some(gv) };
        let s = neumann_solve(&p, 1e-13).unwrap();
        assert!(s.compatibility_defect.abs() < 1e-12);
        let exact: Vec<f64> = (0..g.len()).map(|i| 0.5 * g.coords(i)[0].powi(2)).collect();
        let mean = weighted_mean(&g, &exact);
        for i in 0..g.len() {
            assert!((s.u[i] - (exact[i] - mean)).abs() < 1e-9);
        }
    }

    #[test]
    fn coulomb_field_is_fixed_point() {
        let g = Grid::new(2, 9).unwrap();
        let a = ConnectionField::zeros(g, Group::SU2);
        let r = coulomb_fix(&a, &CoulombConfig::default(), &Centers::All).unwrap();
        assert!(r.gauge.data.iter().all(|s| (*s - Mat::identity(2)).op_norm() < 1e-14));
    }

    #[test]
    fn abelian_fix_matches_poisson_oracle() {
        let g = Grid::new(2, 17).unwrap();
        let spec = GeneratorSpec { kind: GeneratorKind::RandomSmooth, epsilon: 0.2, ..Default::default() };
        let a = generate(&spec, g, Group::U1, 3).unwrap().field;
        let cfg = CoulombConfig { tol: 1e-11, ..Default::default() };
        let r = coulomb_fix(&a, &cfg, &Centers::All).unwrap();
        assert!(r.report.converged);
        let u = abelian_poisson_gauge(&a, 1e-13).unwrap();
        for i in 0..g.len() {
            let got = r.gauge.data[i].get(0, 0).arg();
            assert!((got - u[i]).abs() < 1e-9, "{got} vs {}", u[i]);
        }
    }

    #[test]
    fn nonabelian_fix_converges_and_is_idempotent() {
        let g = Grid::new(3, 9).unwrap();
        let spec = GeneratorSpec { kind: GeneratorKind::RandomSmooth, epsilon: 0.1, ..Default::default() };
        let a = generate(&spec, g, Group::SU2, 5).unwrap().field;
        let cfg = CoulombConfig::default();
        let r = coulomb_fix(&a, &cfg, &Centers::All).unwrap();
        assert!(r.report.converged, "{:?}", r.report.residual_history);
        assert!(r.report.divergence_relative < 10.0 * cfg.tol);
        assert!(r.report.boundary_defect < 1e-8);
        let (s2, _, rep2) = coulomb_fix_links(&r.links, &cfg, &Centers::All).unwrap();
        assert!(rep2.converged);
        assert!(s2.iter().all(|s| (*s - Mat::identity(2)).op_norm() < 2.0 * cfg.tol));
    }

    #[test]
    fn relaxation_agrees_gauge_invariantly() {
        let g = Grid::new(2, 13).unwrap();
        let spec = GeneratorSpec { kind: GeneratorKind::RandomSmooth, epsilon: 0.1, ..Default::default() };
        let a = generate(&spec, g, Group::SU2, 8).unwrap().field;
        let cfg = CoulombConfig::default();
        let c = coulomb_fix(&a, &cfg, &Centers::All).unwrap();
        let r = relaxation_fix(&a, &cfg, &Centers::All).unwrap();
        let f0 = curvature_magnitude(&curvature(&a));
        let f1 = curvature_magnitude(&curvature(&c.field));
        let f2 = curvature_magnitude(&curvature(&r.field));
        let d = (0..g.len()).filter(|&i| g.boundary_depth(i) >= 2).map(|i| (f1[i] - f2[i]).abs().max((f0[i] - f1[i]).abs())).fold(0.0, f64::max);
        assert!(d < 1e-3, "{d}");
        assert!(r.report.divergence < 0.05 * LinkField::from_nodal(&a).max_magnitude(), "{} {} {:?}", r.report.iterations, r.report.divergence, &r.report.residual_history[..5]);
    }

    #[test]
    fn divergence_free_forms_pass_the_constraint() {
        let g = Grid::new(3, 9).unwrap();
        let u = divergence_free_sample(g, 4, 1, 1e-12).unwrap();
        assert!(u.divergence().iter().all(|v| v.abs() < 1e-8));
        let rep = hodge_estimate_audit(&u, 2.0, &Centers::All).unwrap();
        assert!(rep.ratio.unwrap() > 0.0);
        let z = LinkForm { grid: g, data: vec![0.0; g.len() * 3] };
        assert_eq!(hodge_estimate_audit(&z, 2.0, &Centers::All).unwrap().ratio, None);
    }
}
