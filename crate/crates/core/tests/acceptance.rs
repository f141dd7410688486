//! Acceptance report: one [PASS]/[FAIL] line per criterion at the stated
//! tolerances. `ACCEPTANCE_ONLY=3,7` runs a subset.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::Instant;

use gfrg::config::ExperimentConfig;
use gfrg::coulomb::{abelian_poisson_gauge, coulomb_fix, neumann_estimate, neumann_solve_with, CoulombConfig, NeumannMethod, NeumannProblem};
use gfrg::field::{apply_gauge, curvature, curvature_magnitude, ConnectionField, Grid};
use gfrg::gaugebuild::{build_gauges, nodal_curvature_magnitude, SamplingConfig, Stratification};
use gfrg::generate::{generate, GeneratorKind, GeneratorSpec};
use gfrg::geometry::{generic_sample, Shape, SingularSetModel};
use gfrg::lie::exp;
use gfrg::morrey::{cnk_constant, density_profile, morrey_norm, Centers, MorreyParams, StratConfig};
use gfrg::pipeline::{flat_residual, run_pipeline, RunReport};
use gfrg::quad::gauss_legendre;
use gfrg::transport::{curvature_from_loops, stokes_check, transport_segment, Triangle, TransportOptions};
use gfrg::{Group, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn smooth(n: usize, m: usize, group: Group, eps: f64, seed: u64) -> ConnectionField {
    let spec = GeneratorSpec { kind: GeneratorKind::RandomSmooth, epsilon: eps, ..Default::default() };
    generate(&spec, Grid::new(n, m).unwrap(), group, seed).unwrap().field
}

fn singular_reference() -> ConnectionField {
    let spec = GeneratorSpec { kind: GeneratorKind::SingularModel, epsilon: 0.05, ..Default::default() };
    generate(&spec, Grid::new(4, 13).unwrap(), Group::SU2, 0).unwrap().field
}

/// Field and gauge both at the generator defaults.
fn gauge_defect(n: usize, m: usize, seed: u64) -> f64 {
    let grid = Grid::new(n, m).unwrap();
    let a = smooth(n, m, Group::SU2, GeneratorSpec::default().epsilon, seed).without_sampler();
    let spec = GeneratorSpec { kind: GeneratorKind::PureGauge, ..Default::default() };
    let sigma = generate(&spec, grid, Group::SU2, seed ^ 0x5eed).unwrap().gauge.unwrap();
    let f0 = curvature_magnitude(&curvature(&a));
    let f1 = curvature_magnitude(&curvature(&apply_gauge(&sigma, &a).unwrap()));
    f0.iter().zip(&f1).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gauge_invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_rate = f64::INFINITY;
    for s in 0..20 {
        let fine = gauge_defect(3, 33, s);
        let coarse = gauge_defect(3, 17, s);
        worst = worst.max(fine);
        worst_rate = worst_rate.min(coarse / fine);
    }
    outcome(worst <= 1e-4 && worst_rate >= 8.0, format!("max defect {worst:.2e} (<= 1e-4), min reduction on halving h {worst_rate:.1} (>= 8)"))
}

/// exp(int_gamma A) by composite Gauss-Legendre on the analytic field.
fn abelian_oracle(a: &ConnectionField, x0: &[f64], x1: &[f64]) -> Mat {
    let n = x0.len();
    let rule = gauss_legendre(20);
    let panels = 16;
    let mut acc = Mat::zeros(1);
    let mut buf = vec![Mat::zeros(1); n];
    for p in 0..panels {
        for &(t, w) in &rule {
            let s = (p as f64 + 0.5 * (t + 1.0)) / panels as f64;
            let x: Vec<f64> = (0..n).map(|k| x0[k] + s * (x1[k] - x0[k])).collect();
            a.eval(&x, &mut buf);
            for k in 0..n {
                acc += buf[k] * (0.5 * w / panels as f64 * (x1[k] - x0[k]));
            }
        }
    }
    exp(&acc)
}

fn abelian_transport() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut count = 0;
    for n in 2..=3 {
        let a = smooth(n, 17, Group::U1, 1.0, 11 + n as u64);
        let opts = TransportOptions::with_tol(1e-10);
        for _ in 0..50 {
            let x0: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let x1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let t = transport_segment(&a, &x0, &x1, &opts).unwrap();
            worst = worst.max((t - abelian_oracle(&a, &x0, &x1)).op_norm());
            count += 1;
        }
    }
    outcome(worst <= 1e-8, format!("{count} segments, max |T - exp(int A)| = {worst:.2e} (<= 1e-8)"))
}

fn stokes() -> Outcome {
    let n = 3;
    let g = Grid::new(n, 17).unwrap();
    let h = g.h();
    let s = SingularSetModel::empty(n);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut tris = 0;
    for f in 0..4 {
        let a = smooth(n, 17, Group::SU2, 1.0, 100 + f);
        while tris < 50 * (f as usize + 1) {
            let (v, _) = generic_sample(&s, Shape::Triangle, &[0.0; 3], &[1.0; 3], 0.0, &mut rng).unwrap();
            let tri = Triangle::new(&v[0], &v[1], &v[2]);
            if tri.diameter() < 4.0 * h {
                continue;
            }
            worst = worst.max(stokes_check(&a, &tri, 1e-10).unwrap().ratio);
            tris += 1;
        }
    }
    // abelian: shrinking a fixed triangle drives the ratio to 1
    let a = smooth(n, 17, Group::U1, 1.0, 7);
    let base = [[0.3, 0.4, 0.5], [0.7, 0.45, 0.55], [0.45, 0.8, 0.35]];
    let c = [0.45, 0.55, 0.45];
    let mut ratios = Vec::new();
    for k in 0..6 {
        let sc = 0.5f64.powi(k);
        let v: Vec<Vec<f64>> = base.iter().map(|p| (0..3).map(|i| c[i] + sc * (p[i] - c[i])).collect()).collect();
        ratios.push(stokes_check(&a, &Triangle::new(&v[0], &v[1], &v[2]), 1e-12).unwrap().ratio);
    }
    let last = *ratios.last().unwrap();
    outcome(
        worst <= 2.0 && (last - 1.0).abs() <= 0.1,
        format!("{tris} triangles, max ratio {worst:.3} (<= 2); abelian shrinking ratios {:?}", ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>()),
    )
}

fn loop_curvature() -> Outcome {
    let n = 3;
    // generator default amplitude; the stencil constant grows with it
    let a = smooth(n, 17, Group::SU2, GeneratorSpec::default().epsilon, 4);
    let g = a.grid;
    let h = g.h();
    let f = curvature(&a.clone().without_sampler());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_err: f64 = 0.0;
    let mut min_order = f64::INFINITY;
    let bound = 5.0 * h.powi(4) + 1e-7;
    for _ in 0..20 {
        let mi: Vec<usize> = (0..n).map(|_| rng.random_range(3..g.m - 3)).collect();
        let node = g.index(&mi);
        let (al, be) = loop {
            let (p, q) = (rng.random_range(0..n), rng.random_range(0..n));
            if p < q {
                break (p, q);
            }
        };
        let mut v1 = vec![0.0; n];
        let mut v2 = vec![0.0; n];
        v1[al] = 1.0;
        v2[be] = 1.0;
        let x = g.coords(node);
        let lc = curvature_from_loops(&a, &x[..n], &v1, &v2, &[0.04, 0.02, 0.01, 0.005], 1e-13).unwrap();
        let err = (lc.limit - f.get(node, al, be)).op_norm();
        worst_err = worst_err.max(err);
        worst_excess = worst_excess.max(err - bound);
        min_order = min_order.min(lc.order);
    }
    outcome(
        worst_excess <= 0.0 && min_order >= 1.0,
        format!("max |F_loop - F_stencil| = {worst_err:.2e} (<= {bound:.2e}), min Richardson order {min_order:.2}"),
    )
}

fn flat_connection() -> Outcome {
    let spec = GeneratorSpec { kind: GeneratorKind::PureGauge, epsilon: 0.05, ..Default::default() };
    let a = generate(&spec, Grid::new(3, 13).unwrap(), Group::SU2, 5).unwrap().field;
    let fmag = nodal_curvature_magnitude(&a);
    let strat = Stratification::compute(&a, &StratConfig { epsilon: 0.05, ..Default::default() }, 3).unwrap();
    let _ = fmag;
    let cfg = SamplingConfig::default();
    let (_, gauges) = build_gauges(&a, &strat, 3, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    let mut nodal: f64 = 0.0;
    let mut masked = Vec::new();
    for pg in &gauges {
        let f = flat_residual(&a, pg, &cfg).unwrap();
        worst = worst.max(f.link);
        nodal = nodal.max(f.nodal);
        masked.push(pg.masked_count());
    }
    outcome(
        worst <= 1e-6,
        format!("max link residual of sigma_m(A) on Omega_m {worst:.2e} (<= 1e-6), masked nodes {masked:?}; nodal stencil residual {nodal:.2e}"),
    )
}

fn stratification() -> Outcome {
    let a = singular_reference();
    let g = a.grid;
    let fmag = nodal_curvature_magnitude(&a);
    let eps = morrey_norm(&g, &fmag, &MorreyParams::scale_invariant(4, 2.0, 0), &Centers::default_for(&g, 0));
    let cfg = StratConfig { epsilon: eps.max(0.05), c_r: 4.0, ..Default::default() };
    let strat = Stratification::compute(&a, &cfg, 3).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for m in 1..=3 {
        let au = strat.audit(m, 100, 256, 6);
        pass &= au.nested && au.containment_violations == 0 && au.density_min >= 0.01;
        parts.push(format!(
            "m={m}: nested {} containment violations {}/{} min density {:.3}",
            au.nested, au.containment_violations, au.far_nodes, au.density_min
        ));
    }
    outcome(pass, format!("strat eps {eps:.3}; {}", parts.join("; ")))
}

fn truncation(rep: &RunReport) -> Outcome {
    let eps = rep.config.generator.epsilon;
    let c: Vec<f64> = rep.truncation.iter().map(|t| t.curvature_morrey / eps).collect();
    let within = rep.truncation.len() == 3 && c.iter().all(|&x| x <= 20.0);
    let spread = c.iter().cloned().fold(0.0, f64::max) / c.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        within && spread <= 2.0,
        format!("||F(A~_m)||/eps for m=1,2,3: {:?} (<= 20), spread {spread:.2} (<= 2)", c.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>()),
    )
}

fn coulomb() -> Outcome {
    let mut ratios = Vec::new();
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [0.1, 0.05, 0.025] {
        let a = smooth(3, 33, Group::SU2, eps, 7);
        let r = coulomb_fix(&a, &CoulombConfig::default(), &Centers::All).unwrap().report;
        pass &= r.converged && r.divergence_relative <= 1e-6 && r.boundary_defect <= 1e-6;
        ratios.push(r.norm_ratio);
        parts.push(format!(
            "eps {eps}: {} it, div {:.1e}, boundary {:.1e}, ratio {:.3}",
            r.iterations, r.divergence_relative, r.boundary_defect, r.norm_ratio
        ));
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let variation = (hi - lo) / lo;
    let a = smooth(3, 33, Group::U1, 0.05, 7);
    let fix = coulomb_fix(&a, &CoulombConfig::default(), &Centers::All).unwrap();
    let u = abelian_poisson_gauge(&a, 1e-13).unwrap();
    // phases agree up to the constant gauge
    let phase = |i: usize| fix.gauge.data[i].get(0, 0).arg();
    let shift = phase(0) - u[0];
    let abel = (0..a.grid.len())
        .map(|i| {
            let d = phase(i) - u[i] - shift;
            (d - (2.0 * PI) * (d / (2.0 * PI)).round()).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        pass && variation < 0.25 && abel <= 1e-7,
        format!("{}; ratio variation {:.1}% (< 25%); abelian vs Poisson {abel:.1e} (<= 1e-7)", parts.join("; "), 100.0 * variation),
    )
}

fn neumann() -> Outcome {
    // u = cos(pi x) cos(2 pi y): Lap u = -5 pi^2 u, zero flux
    let exact = |x: &[f64]| (PI * x[0]).cos() * (2.0 * PI * x[1]).cos();
    let mut errs = Vec::new();
    for m in [17, 33, 65] {
        let g = Grid::new(2, m).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|i| -5.0 * PI * PI * exact(&g.coords(i)[..2])).collect();
        let s = neumann_solve_with(&NeumannProblem { grid: g, f, g: None }, NeumannMethod::Cosine, 1e-12).unwrap();
        errs.push((0..g.len()).map(|i| (s.u[i] - exact(&g.coords(i)[..2])).abs()).fold(0.0, f64::max));
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order_ok = orders.iter().all(|&o| (1.8..=2.2).contains(&o));
    // estimate constant for fixed continuum data across grids
    let data = |x: &[f64]| (PI * x[0]).cos() + 0.5 * (2.0 * PI * x[1]).cos() * (PI * x[0]).cos() + 0.3 * (3.0 * PI * x[1]).cos();
    let mut consts = Vec::new();
    for m in [17, 33, 65] {
        let g = Grid::new(2, m).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|i| data(&g.coords(i)[..2])).collect();
        consts.push(neumann_estimate(&NeumannProblem { grid: g, f, g: None }, 1.0, 1e-12, &Centers::All).unwrap().ratio);
    }
    let lo = consts.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = consts.iter().cloned().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    outcome(
        order_ok && spread < 0.2,
        format!("errors {:?}, orders {orders:.3?} (in [1.8, 2.2]); estimate constants {consts:.4?}, spread {:.1}% (< 20%)", errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(), 100.0 * spread),
    )
}

fn monotonicity() -> Outcome {
    let a = singular_reference();
    let g = a.grid;
    let fmag = nodal_curvature_magnitude(&a);
    let s = a.singular.clone().unwrap();
    let x = (0..g.len()).min_by(|&i, &j| s.rho(&g.coords(i)[..4]).total_cmp(&s.rho(&g.coords(j)[..4]))).unwrap();
    let p = density_profile(&g, &fmag, x, 0.01);
    outcome(p.monotone, format!("{} radii, worst relative decrease toward small r {:.2e} (<= 1e-2)", p.radii.len(), p.worst_violation))
}

fn cnk() -> Outcome {
    let cases = [(5, 4, 2.0), (6, 4, PI), (6, 5, PI / 2.0)];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (n, k, want) in cases {
        let got = cnk_constant(n, k).unwrap();
        worst = worst.max((got - want).abs());
        parts.push(format!("c_{n},{k} = {got:.9}"));
    }
    outcome(worst <= 1e-6, format!("{}; max error {worst:.1e} (<= 1e-6)", parts.join(", ")))
}

fn reference_run(dir: &Path) -> RunReport {
    let cfg = ExperimentConfig { out: dir.to_path_buf(), ..Default::default() };
    run_pipeline(&cfg).unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn determinism(dir: &Path) -> Outcome {
    // same output path: config.json and report.json record it
    let first = dir_bytes(dir);
    reference_run(dir);
    let second = dir_bytes(dir);
    let names: Vec<&str> = first.iter().map(|x| x.0.as_str()).collect();
    let differing: Vec<&str> = first.iter().zip(&second).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    let same_set = first.len() == second.len() && first.iter().zip(&second).all(|(x, y)| x.0 == y.0);
    outcome(
        same_set && differing.is_empty(),
        format!("{} files compared (reports, fields, covers); differing: {:?}", names.len(), differing),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let want = |k: usize| only.as_ref().is_none_or(|v| v.contains(&k));
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("reference");
    let mut failed = 0;
    let mut report = |k: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !want(k) {
            return;
        }
        let t = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("[{tag}] {k:>2} {name}: {} ({:.1}s)", o.detail, t.elapsed().as_secs_f64());
    };
    report(1, "gauge_invariance", &mut gauge_invariance);
    report(2, "abelian_transport_oracle", &mut abelian_transport);
    report(3, "nonabelian_stokes", &mut stokes);
    report(4, "curvature_from_loops", &mut loop_curvature);
    report(5, "flat_connection_end_to_end", &mut flat_connection);
    report(6, "stratification", &mut stratification);
    report(7, "truncation_curvature", &mut || truncation(&reference_run(&run)));
    report(8, "coulomb_gauge", &mut coulomb);
    report(9, "neumann_solver", &mut neumann);
    report(10, "monotonicity_profile", &mut monotonicity);
    report(11, "cnk_constants", &mut cnk);
    report(12, "determinism", &mut || {
        if !run.join("report.json").exists() {
            reference_run(&run);
        }
        determinism(&run)
    });
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
