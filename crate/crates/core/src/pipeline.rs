//! End-to-end run: generate, stratify, build the partial gauges, cover and
//! truncate each level, Coulomb-fix the last truncated field, and audit the
//! estimates along the way. Every artifact is written under the output
//! directory; reports carry no timings so identical configs give identical
//! bytes.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{default_origins, DefaultOrigin, ExperimentConfig};
use crate::coulomb::{
    bootstrap_audit, coulomb_fix_robust, hodge_estimate_audit, neumann_estimate, BootstrapReport, CoulombReport, HodgeReport,
    LinkField, LinkForm, NeumannEstimate, NeumannProblem,
};
use crate::error::{Error, Result};
use crate::field::{apply_gauge, curvature, curvature_magnitude, ConnectionField, Grid};
use crate::gaugebuild::{
    build_gauges, lipschitz_audit, nodal_curvature_magnitude, truncate, vitali_cover, BallCover, LipschitzReport, PartialGauge,
    Stratification, StratificationAudit,
};
use crate::generate::{generate, GeneratorKind, PureGauge};
use crate::geometry::{generic_sample, Shape, SingularSetModel};
use crate::io;
use crate::mat::Mat;
use crate::morrey::{density_profile, morrey_norm, Centers, DensityProfile, MorreyParams};
use crate::transport::{stokes_check, transport_segment, Triangle, TransportOptions};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GaugeSummary {
    pub level: u32,
    pub masked: usize,
    pub dropped: usize,
    pub max_clustering: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncationSummary {
    pub level: u32,
    pub cover_balls: usize,
    pub curvature_morrey: f64,
    /// curvature_morrey / generator epsilon.
    pub constant: f64,
    /// Nodes with rho >= 20 R_m checked for equality with sigma_m(A); 0 when
    /// the lattice cannot resolve the region (10h > 20 R_m).
    pub far_nodes: usize,
    pub far_defect: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlatSummary {
    pub level: u32,
    /// max |sigma_m(A)| over masked nodes (fourth-order stencils).
    pub nodal: f64,
    /// max |sigma(x) A[[x -> y]] sigma(y)^-1 - 1| / h over masked lattice links.
    pub link: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GaugeInvarianceSummary {
    pub nodes: usize,
    pub max_defect: f64,
    /// max_defect / max(|F|, |A|^2) over the checked nodes, both before and after the gauge.
    /// None for a zero input, where sigma(A) is a pure gauge and the defect is stencil error only.
    pub relative: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StokesSummary {
    pub triangles: usize,
    /// Triangles with both sides zero (flat input).
    pub skipped: usize,
    pub max_ratio: Option<f64>,
    pub median_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

/// One row per measured constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantRow {
    pub audit: String,
    pub quantity: String,
    pub grid: String,
    /// None when the quantity is 0/0 (skipped).
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub defaults: Vec<DefaultOrigin>,
    pub strat_epsilon: f64,
    pub origin: Option<usize>,
    pub stratification: Vec<StratificationAudit>,
    pub gauges: Vec<GaugeSummary>,
    pub lipschitz: Vec<LipschitzReport>,
    pub truncation: Vec<TruncationSummary>,
    pub flat: Vec<FlatSummary>,
    pub coulomb: Option<CoulombReport>,
    pub coulomb_preconditioned: bool,
    pub bootstrap: Option<BootstrapReport>,
    pub gauge_invariance: Option<GaugeInvarianceSummary>,
    pub stokes: Option<StokesSummary>,
    pub neumann: Vec<NeumannEstimate>,
    pub hodge: Vec<HodgeReport>,
    pub monotonicity: Option<DensityProfile>,
    pub checks: Vec<Check>,
    pub constants: Vec<ConstantRow>,
    pub failures: Vec<Failure>,
}

impl RunReport {
    /// 0 pass, 1 assertion failure, 2 other error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        if let Some(f) = self.failures.first() {
            return if f.kind == "numerical" { 3 } else { 2 };
        }
        if self.checks.iter().any(|c| !c.pass) {
            1
        } else {
            0
        }
    }

    fn check(&mut self, name: &str, value: f64, bound: f64) {
        self.checks.push(Check { name: name.into(), value, bound, pass: value <= bound });
    }

    fn fail(&mut self, stage: &str, e: &Error) {
        let kind = if e.is_numerical() { "numerical" } else { "error" };
        self.failures.push(Failure { stage: stage.into(), kind: kind.into(), message: e.to_string() });
    }
}

fn opt_ratio(num: f64, den: f64) -> Option<f64> {
    if num == 0.0 && den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

fn hodge_exponents(n: usize) -> Vec<f64> {
    if n == 4 {
        vec![2.0]
    } else {
        vec![2.0, n as f64 / 2.0]
    }
}

fn mask_scalar(mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&b| b as u8 as f64).collect()
}

fn grid_label(g: &Grid) -> String {
    format!("n={} m={}", g.n, g.m)
}

/// Uses a local pool when `threads` (or GFRG_THREADS) is set.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let k = threads.or_else(|| std::env::var("GFRG_THREADS").ok().and_then(|s| s.parse().ok()));
    match k {
        Some(k) if k > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

/// Last stage a run executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Generate,
    Stratify,
    GaugeBuild,
    Truncate,
    Coulomb,
    All,
}

pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_until(cfg, Stage::All)
}

pub fn run_until(cfg: &ExperimentConfig, stop: Stage) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    let cfg = cfg.clone();
    with_threads(cfg.threads, move || run_inner(&cfg, stop))?
}

fn run_inner(cfg: &ExperimentConfig, stop: Stage) -> Result<RunReport> {
    let out = cfg.out.clone();
    let mut rep = RunReport { config: cfg.clone(), defaults: default_origins(cfg), ..Default::default() };
    let result = stages(cfg, &out, &mut rep, stop);
    if let Err((stage, e)) = result {
        rep.fail(&stage, &e);
    }
    rep.constants = constant_rows(&rep);
    write_reports(&out, &rep)?;
    Ok(rep)
}

type StageResult<T> = std::result::Result<T, (String, Error)>;

fn at<T>(stage: &str, r: Result<T>) -> StageResult<T> {
    r.map_err(|e| (stage.to_string(), e))
}

fn stages(cfg: &ExperimentConfig, out: &Path, rep: &mut RunReport, stop: Stage) -> StageResult<()> {
    let grid = at("config", cfg.grid())?;
    let n = grid.n;
    let centers = Centers::default_for(&grid, cfg.seed);

    let gen = at("generate", generate(&cfg.generator, grid, cfg.group, cfg.seed))?;
    let a = gen.field;
    let mut a_saved = a.clone();
    a_saved.singular = gen.singular.clone().map(std::sync::Arc::new).or(a.singular.clone());
    at("generate", io::write_connection(&out.join("connection.gfrg"), &a_saved))?;
    if stop == Stage::Generate {
        return Ok(());
    }

    // stratification
    let fmag = nodal_curvature_magnitude(&a);
    let measured = morrey_norm(&grid, &fmag, &MorreyParams::scale_invariant(n, 2.0, 0), &centers);
    let scfg = cfg.strat.resolve(measured, cfg.generator.epsilon);
    rep.strat_epsilon = scfg.epsilon;
    let strat = at("stratify", Stratification::compute(&a, &scfg, cfg.m_max))?;
    at("stratify", io::write_scalar(&out.join("curvature_magnitude.gfrg"), grid, cfg.group, &strat.fmag))?;
    at("stratify", io::write_scalar(&out.join("q.gfrg"), grid, cfg.group, &strat.q))?;
    for m in 1..=cfg.m_max {
        at("stratify", io::write_scalar(&out.join(format!("omega_{m}.gfrg")), grid, cfg.group, &mask_scalar(strat.mask(m))))?;
        let au = strat.audit(m, cfg.audits.density_balls, cfg.audits.density_points, cfg.seed);
        rep.check(&format!("omega_{m}_nested"), (!au.nested) as u8 as f64, 0.0);
        rep.check(&format!("omega_{m}_containment"), au.containment_violations as f64, 0.0);
        if au.balls > 0 {
            rep.check(&format!("omega_{m}_density"), -au.density_min, -cfg.bounds.density);
        }
        rep.stratification.push(au);
    }

    if stop == Stage::Stratify {
        return Ok(());
    }

    // gauges
    let sampling = crate::gaugebuild::SamplingConfig { seed: cfg.sampling.seed ^ cfg.seed, ..cfg.sampling };
    let (origin, gauges) = at("gauge-build", build_gauges(&a, &strat, cfg.m_max, &sampling))?;
    rep.origin = Some(origin);
    for pg in &gauges {
        at("gauge-build", io::write_partial_gauge(&out.join(format!("gauge_{}.gfrg", pg.level)), pg))?;
        rep.gauges.push(GaugeSummary {
            level: pg.level,
            masked: pg.masked_count(),
            dropped: pg.dropped.len(),
            max_clustering: pg.clustering.iter().cloned().fold(0.0, f64::max),
        });
        rep.lipschitz.push(at("audit", lipschitz_audit(&a, pg, &strat, cfg.audits.lipschitz_pairs, &sampling))?);
    }
    if cfg.generator.kind == GeneratorKind::PureGauge {
        for pg in &gauges {
            let f = at("audit", flat_residual(&a, pg, &sampling))?;
            rep.check(&format!("flat_residual_{}", pg.level), f.link, cfg.bounds.flat_residual);
            rep.flat.push(f);
        }
    }

    if stop == Stage::GaugeBuild {
        return Ok(());
    }

    // cover and truncation
    let eps = cfg.generator.epsilon;
    let mut last = None;
    for pg in &gauges {
        let m = pg.level;
        let cover = at("truncate", vitali_cover(&grid, &strat.fmag, &pg.mask, &scfg, m))?;
        at("truncate", write_json(&out.join(format!("cover_{m}.json")), &cover))?;
        let tr = at("truncate", truncate(&a, pg, &cover, &centers))?;
        at("truncate", io::write_connection(&out.join(format!("truncated_{m}.gfrg")), &tr.field))?;
        at("truncate", io::write_scalar(&out.join(format!("cutoff_{m}.gfrg")), grid, cfg.group, &tr.psi))?;
        let (far_nodes, far_defect) = far_region(&grid, &strat, &tr.field, &tr.gauged, &cover, scfg.r_m(m));
        let constant = if eps > 0.0 { tr.curvature_morrey / eps } else { 0.0 };
        rep.check(&format!("truncation_{m}"), tr.curvature_morrey, cfg.bounds.truncation_factor * eps);
        if far_nodes > 0 {
            rep.check(&format!("truncation_{m}_far_region"), far_defect, 0.0);
        }
        rep.truncation.push(TruncationSummary {
            level: m,
            cover_balls: cover.centers.len(),
            curvature_morrey: tr.curvature_morrey,
            constant,
            far_nodes,
            far_defect,
        });
        last = Some(tr.field);
    }
    let consts: Vec<f64> = rep.truncation.iter().map(|t| t.constant).filter(|&c| c > 0.0).collect();
    if consts.len() >= 2 {
        let spread = consts.iter().cloned().fold(0.0, f64::max) / consts.iter().cloned().fold(f64::INFINITY, f64::min);
        rep.check("truncation_stability", spread, cfg.bounds.truncation_spread);
    }

    if stop == Stage::Truncate {
        return Ok(());
    }

    // Coulomb gauge of the last truncated field
    let at_top = last.expect("m_max >= 1");
    let (res, pre) = at("coulomb", coulomb_fix_robust(&at_top, &cfg.coulomb, &centers))?;
    at("coulomb", io::write_gauge(&out.join("coulomb_gauge.gfrg"), &res.gauge))?;
    at("coulomb", io::write_connection(&out.join("coulomb_connection.gfrg"), &res.field))?;
    at("coulomb", write_history(&out.join("coulomb_history.csv"), &res.report))?;
    rep.check("coulomb_converged", (!res.report.converged) as u8 as f64, 0.0);
    rep.check("coulomb_divergence", res.report.divergence_relative, cfg.bounds.coulomb_divergence);
    rep.check("coulomb_boundary", res.report.boundary_defect, cfg.bounds.boundary_defect);
    rep.coulomb_preconditioned = pre;
    rep.bootstrap = Some(at("audit", bootstrap_audit(&res.field, cfg.audits.bootstrap_balls, cfg.seed, &centers))?);
    rep.coulomb = Some(res.report);
    let coulomb_links = res.links;
    if stop == Stage::Coulomb {
        return Ok(());
    }

    // estimates audited on the input field and on generic data
    let gi = at("audit", gauge_invariance_audit(&a, cfg.audits.gauge_amplitude, cfg.seed))?;
    if let Some(r) = gi.relative {
        rep.check("gauge_invariance", r, cfg.bounds.gauge_defect);
    }
    rep.gauge_invariance = Some(gi);
    let st = at("audit", stokes_audit(&a, cfg.audits.stokes_triangles, cfg.seed))?;
    if let Some(r) = st.max_ratio {
        rep.check("stokes", r, cfg.bounds.stokes_ratio);
    }
    rep.stokes = Some(st);
    // Neumann data: the divergence the first Coulomb solve inverts
    let links_a = LinkField::from_nodal(&at_top);
    let div = links_a.divergence();
    for c in 0..cfg.group.algebra_basis().len() {
        let f: Vec<f64> = div.iter().map(|d| cfg.group.coords(d)[c]).collect();
        let prob = NeumannProblem { grid, f, g: None };
        rep.neumann.push(at("audit", neumann_estimate(&prob, n as f64 / 2.0, 1e-10, &centers))?);
    }
    // Hodge data: coordinates of the Coulomb links, divergence-free and tangential
    for c in 0..cfg.group.algebra_basis().len() {
        let u = LinkForm { grid, data: coulomb_links.data.iter().map(|l| cfg.group.coords(l)[c]).collect() };
        for q in hodge_exponents(n) {
            rep.hodge.push(at("audit", hodge_estimate_audit(&u, q, &centers))?);
        }
    }
    if let Some(s) = &gen.singular {
        if !s.is_empty() {
            let x = (0..grid.len())
                .min_by(|&i, &j| s.rho(&grid.coords(i)[..n]).total_cmp(&s.rho(&grid.coords(j)[..n])))
                .unwrap_or(0);
            let p = density_profile(&grid, &strat.fmag, x, 0.01);
            rep.check("monotonicity", p.worst_violation, 0.01);
            rep.monotonicity = Some(p);
        }
    }
    Ok(())
}

/// Nodes with rho >= 20 R_m where the truncated field must equal sigma_m(A),
/// restricted to the part of the lattice the cover cutoff can resolve.
fn far_region(
    grid: &Grid,
    strat: &Stratification,
    truncated: &ConnectionField,
    gauged: &ConnectionField,
    cover: &BallCover,
    rm: f64,
) -> (usize, f64) {
    let rmin = cover.radii.iter().cloned().fold(f64::INFINITY, f64::min);
    if !cover.is_empty() && 10.0 * rmin > 20.0 * rm {
        return (0, 0.0);
    }
    let n = grid.n;
    let mut count = 0;
    let mut worst: f64 = 0.0;
    for i in 0..grid.len() {
        if strat.rho[i] >= 20.0 * rm {
            count += 1;
            for al in 0..n {
                worst = worst.max((truncated.at(i, al) - gauged.at(i, al)).op_norm());
            }
        }
    }
    (count, worst)
}

/// Flat input: size of sigma_m(A) at the nodes and along lattice links.
pub fn flat_residual(a: &ConnectionField, pg: &PartialGauge, cfg: &crate::gaugebuild::SamplingConfig) -> Result<FlatSummary> {
    let grid = a.grid;
    let n = grid.n;
    let h = grid.h();
    let (gauged, valid) = crate::gaugebuild::apply_partial_gauge(pg, a);
    let nodal = (0..grid.len())
        .filter(|&i| pg.mask[i] && valid[i])
        .map(|i| (0..n).map(|al| gauged.at(i, al).op_norm().powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let opts = TransportOptions { tol: cfg.tol.min(1e-10), ..Default::default() };
    let id = Mat::identity(a.group.dim());
    let mut link: f64 = 0.0;
    for i in 0..grid.len() {
        if !pg.mask[i] {
            continue;
        }
        let mi = grid.multi(i);
        for al in 0..n {
            if mi[al] + 1 >= grid.m {
                continue;
            }
            let j = i + grid.stride(al);
            if !pg.mask[j] {
                continue;
            }
            let (x, y) = (grid.coords(i), grid.coords(j));
            let t = transport_segment(a, &x[..n], &y[..n], &opts)?;
            let hol = pg.values[i] * t * pg.values[j].adjoint();
            link = link.max((hol - id).op_norm() / h);
        }
    }
    Ok(FlatSummary { level: pg.level, nodal, link })
}

/// ||F(sigma(A))| - |F(A)|| for a random smooth gauge of the given amplitude, on nodes at least
/// 4h from the singular set.
pub fn gauge_invariance_audit(a: &ConnectionField, amplitude: f64, seed: u64) -> Result<GaugeInvarianceSummary> {
    let grid = a.grid;
    let n = grid.n;
    if a.is_zero() {
        return Ok(GaugeInvarianceSummary { nodes: 0, max_defect: 0.0, relative: None });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6761_7567_65);
    let sigma = PureGauge::random(n, a.group, amplitude, 1, 2, &mut rng).gauge_field(grid, a.group);
    let plain = a.clone().without_sampler();
    let f0 = curvature_magnitude(&curvature(&plain));
    let gauged = apply_gauge(&sigma, &plain)?;
    let f1 = curvature_magnitude(&curvature(&gauged));
    let rho = crate::gaugebuild::nodal_rho(a);
    let nodes: Vec<usize> = (0..grid.len()).filter(|&i| rho[i] >= 4.0 * grid.h()).collect();
    let max_defect = nodes.iter().map(|&i| (f1[i] - f0[i]).abs()).fold(0.0, f64::max);
    // |A|^2 sets the scale when the input is (nearly) flat
    let (m0, m1) = (plain.magnitude(), gauged.magnitude());
    let scale = nodes.iter().map(|&i| f0[i].max(f1[i]).max(m0[i] * m0[i]).max(m1[i] * m1[i])).fold(0.0, f64::max);
    Ok(GaugeInvarianceSummary { nodes: nodes.len(), max_defect, relative: Some(if scale > 0.0 { max_defect / scale } else { 0.0 }) })
}

/// Holonomy against integrated curvature on random triangles of diameter at
/// least 4h clear of the singular set.
pub fn stokes_audit(a: &ConnectionField, triangles: usize, seed: u64) -> Result<StokesSummary> {
    let grid = a.grid;
    let n = grid.n;
    let h = grid.h();
    let s = a.singular.as_deref().cloned().unwrap_or_else(|| SingularSetModel::empty(n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7374_6f6b_6573);
    let (lo, hi) = (vec![0.0; n], vec![1.0; n]);
    let mut ratios = Vec::with_capacity(triangles);
    let mut skipped = 0;
    if n < 2 {
        return Ok(StokesSummary::default());
    }
    while ratios.len() + skipped < triangles {
        let (v, _) = generic_sample(&s, Shape::Triangle, &lo, &hi, 2.0 * h, &mut rng)?;
        let tri = Triangle::new(&v[0], &v[1], &v[2]);
        if tri.diameter() < 4.0 * h || tri.area() < 1e-3 * tri.diameter().powi(2) {
            continue;
        }
        let r = stokes_check(a, &tri, 1e-10)?;
        // flat input: both sides at transport tolerance
        if r.lhs < 1e-8 && r.rhs < 1e-8 {
            skipped += 1;
        } else {
            ratios.push(r.lhs / r.rhs);
        }
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(StokesSummary {
        triangles,
        skipped,
        max_ratio: sorted.last().copied(),
        median_ratio: sorted.get(sorted.len() / 2).copied(),
    })
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn write_history(path: &Path, r: &CoulombReport) -> Result<()> {
    let mut s = String::from("iteration,residual,update\n");
    for (k, (res, upd)) in r.residual_history.iter().zip(&r.update_history).enumerate() {
        s.push_str(&format!("{},{:e},{:e}\n", k + 1, res, upd));
    }
    fs::write(path, s)?;
    Ok(())
}

fn constant_rows(rep: &RunReport) -> Vec<ConstantRow> {
    let grid = match rep.config.grid() {
        Ok(g) => grid_label(&g),
        Err(_) => String::new(),
    };
    let b = &rep.config.bounds;
    let mut rows = Vec::new();
    let mut row = |audit: &str, quantity: &str, value: Option<f64>, tol: Option<f64>| {
        let pass = match (value, tol) {
            (Some(v), Some(t)) => Some(v <= t),
            _ => None,
        };
        rows.push(ConstantRow { audit: audit.into(), quantity: quantity.into(), grid: grid.clone(), value, tolerance: tol, pass });
    };
    if let Some(g) = &rep.gauge_invariance {
        row("gauge_invariance", "relative |F| defect", g.relative, Some(b.gauge_defect));
    }
    if let Some(s) = &rep.stokes {
        row("stokes", "max |hol - 1| / int |F|", s.max_ratio, Some(b.stokes_ratio));
        row("stokes", "median ratio", s.median_ratio, None);
    }
    for l in &rep.lipschitz {
        let some = |v: f64| if l.pairs == 0 || v.is_nan() { None } else { Some(v) };
        row("lipschitz", &format!("C1 max, m={}", l.level), some(l.max_ratio), None);
        row("lipschitz", &format!("C1 p90, m={}", l.level), some(l.p90_ratio), None);
        row("lipschitz", &format!("pointwise |sigma(A)| / T_m, m={}", l.level), some(l.pointwise_ratio), None);
    }
    for t in &rep.truncation {
        row("truncation", &format!("||F||/eps, m={}", t.level), Some(t.constant), Some(b.truncation_factor));
    }
    if let Some(c) = &rep.coulomb {
        row("coulomb_bound", "||A||_{2,1} / ||F||_2", opt_ratio(c.connection_norm, c.curvature_norm), None);
        row("coulomb_bound", "relative divergence", Some(c.divergence_relative), Some(b.coulomb_divergence));
        row("coulomb_bound", "boundary defect", Some(c.boundary_defect), Some(b.boundary_defect));
    }
    if let Some(bs) = &rep.bootstrap {
        row("bootstrap", "||A|| / (||F|| + ||A||^2)", opt_ratio(bs.connection_norm, bs.curvature_norm + bs.connection_norm.powi(2)), None);
        row("bootstrap", "pointwise |Lap A| / (|A||grad A| + |A|^3)", (bs.connection_norm > 0.0).then_some(bs.pointwise_ratio), None);
        row("bootstrap", "interior decay max", (bs.connection_norm > 0.0).then_some(bs.decay_max), None);
    }
    let nmax = rep.neumann.iter().filter(|e| e.data_norm > 0.0).map(|e| e.ratio).fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    row("neumann_estimate", "||u||_{2,2} / ||f||", nmax, None);
    for q in hodge_exponents(rep.config.n) {
        let hmax = rep.hodge.iter().filter(|r| r.q == q).filter_map(|r| r.ratio).fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
        row("hodge_estimate", &format!("||u||_{{2,1}} / ||du||, q={q}"), hmax, None);
    }
    let nodes = rep.config.grid().map_or(0, |g| g.len());
    for s in &rep.stratification {
        // a full mask makes the density a property of the cube, not of Omega_m
        let measured = s.balls > 0 && s.masked < nodes;
        row("stratification", &format!("min |B ∩ Omega| / r^n, m={}", s.level), measured.then_some(s.density_min), None);
    }
    if let Some(p) = &rep.monotonicity {
        row("monotonicity", "worst relative decrease", Some(p.worst_violation), Some(0.01));
        row("monotonicity", "density extrapolated", Some(p.theta), None);
    }
    for f in &rep.flat {
        row("flat_recovery", &format!("link residual, m={}", f.level), Some(f.link), Some(b.flat_residual));
        row("flat_recovery", &format!("nodal residual, m={}", f.level), Some(f.nodal), None);
    }
    rows
}

fn csv_field(v: Option<f64>) -> String {
    v.map_or_else(|| "skipped".into(), |x| format!("{x:e}"))
}

pub fn constants_csv(rows: &[ConstantRow]) -> String {
    let mut s = String::from("audit,quantity,grid,value,tolerance,pass\n");
    for r in rows {
        let pass = r.pass.map_or("-".to_string(), |p| if p { "pass".into() } else { "fail".into() });
        s.push_str(&format!(
            "{},\"{}\",{},{},{},{}\n",
            r.audit,
            r.quantity,
            r.grid,
            csv_field(r.value),
            r.tolerance.map_or("-".into(), |t| format!("{t:e}")),
            pass
        ));
    }
    s
}

fn write_reports(out: &Path, rep: &RunReport) -> Result<()> {
    write_json(&out.join("config.json"), &rep.config)?;
    write_json(&out.join("report.json"), rep)?;
    fs::write(out.join("constants.csv"), constants_csv(&rep.constants))?;
    let mut checks = String::from("name,value,bound,pass\n");
    for c in &rep.checks {
        checks.push_str(&format!("{},{:e},{:e},{}\n", c.name, c.value, c.bound, c.pass));
    }
    fs::write(out.join("checks.csv"), checks)?;
    let manifest = out.join("failures.json");
    let failed: Vec<&Check> = rep.checks.iter().filter(|c| !c.pass).collect();
    if rep.failures.is_empty() && failed.is_empty() {
        if manifest.exists() {
            fs::remove_file(&manifest)?;
        }
    } else {
        #[derive(Serialize)]
        struct Manifest<'a> {
            exit_code: i32,
            failures: &'a [Failure],
            failed_checks: Vec<&'a Check>,
        }
        write_json(&manifest, &Manifest { exit_code: rep.exit_code(), failures: &rep.failures, failed_checks: failed })?;
    }
    Ok(())
}

/// Artifacts every completed run leaves behind.
pub const REQUIRED_ARTIFACTS: [&str; 3] = ["report.json", "constants.csv", "connection.gfrg"];

/// Re-reads a run directory, decodes its field files and returns the
/// consolidated constants table.
pub fn report(dir: &Path) -> Result<(RunReport, String)> {
    let missing: Vec<&str> = REQUIRED_ARTIFACTS.iter().copied().filter(|f| !dir.join(f).exists()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(format!("{}: {}", dir.display(), missing.join(", "))));
    }
    let rep: RunReport = serde_json::from_str(&fs::read_to_string(dir.join("report.json"))?)
        .map_err(|e| Error::Decode(format!("{}: {e}", dir.join("report.json").display())))?;
    for f in field_files(dir)? {
        io::read_file(&f)?;
    }
    let table = constants_csv(&rep.constants);
    fs::write(dir.join("summary.csv"), &table)?;
    Ok((rep, table))
}

pub fn field_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> =
        fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "gfrg")).collect();
    v.sort();
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Smoke,
    Full,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub runs: Vec<(String, i32)>,
    pub failures: Vec<String>,
}

/// Smoke: zero and flat pipelines at n = 2, 3 plus artifact round trips.
/// Full: adds the n = 4 reference pipeline.
pub fn verify(suite: Suite, seed: u64, out: &Path) -> Result<VerifyOutcome> {
    let mut cases: Vec<(String, ExperimentConfig)> = Vec::new();
    for (n, m) in [(2usize, 17usize), (3, 13)] {
        for (name, kind) in [("zero", GeneratorKind::Zero), ("flat", GeneratorKind::PureGauge)] {
            let mut c = ExperimentConfig { n, m, seed, ..Default::default() };
            c.generator.kind = kind;
            c.generator.epsilon = 0.05;
            c.audits.lipschitz_pairs = 40;
            c.audits.stokes_triangles = 10;
            c.audits.density_balls = 20;
            c.sampling.base_samples = 64;
            c.sampling.inductive_samples = 64;
            cases.push((format!("{name}_n{n}"), c));
        }
    }
    if suite == Suite::Full {
        cases.push(("reference".into(), ExperimentConfig { seed, ..Default::default() }));
    }
    let mut outcome = VerifyOutcome::default();
    for (name, mut c) in cases {
        c.out = out.join(&name);
        let rep = run_pipeline(&c)?;
        let code = rep.exit_code();
        if code != 0 {
            let why: Vec<String> = rep
                .failures
                .iter()
                .map(|f| format!("{}: {}", f.stage, f.message))
                .chain(rep.checks.iter().filter(|c| !c.pass).map(|c| format!("{} = {:e} > {:e}", c.name, c.value, c.bound)))
                .collect();
            outcome.failures.push(format!("{name}: {}", why.join("; ")));
        }
        for f in field_files(&c.out)? {
            if let Err(e) = io::read_file(&f) {
                outcome.failures.push(format!("{name}: {e}"));
            }
        }
        outcome.runs.push((name, code));
    }
    Ok(outcome)
}
