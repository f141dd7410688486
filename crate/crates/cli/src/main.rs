use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gfrg::config::ExperimentConfig;
use gfrg::coulomb::{coulomb_fix_robust, CoulombReport};
use gfrg::field::{curvature, curvature_magnitude, ConnectionField};
use gfrg::generate::{generate, GeneratorKind};
use gfrg::morrey::{morrey_norm, morrey_sobolev_connection, Centers, MorreyParams};
use gfrg::pipeline::{self, run_until, with_threads, RunReport, Stage, Suite};
use gfrg::transport::{stokes_check, transport, PolyPath, Triangle};
use gfrg::{io, Error, Group, Mat};
use serde_json::json;

#[derive(Parser)]
#[command(name = "gfrg", version, about = "Lattice gauge fields: transport, Morrey norms, averaged gauges, truncation, Coulomb gauge")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to GFRG_THREADS).
    #[arg(long, env = "GFRG_THREADS")]
    threads: Option<usize>,
    /// Dimension and nodes per axis, e.g. 4,13.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long, value_enum)]
    group: Option<GroupArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    U1,
    Su2,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Zero,
    RandomSmooth,
    PureGauge,
    AbelianModel,
    SingularModel,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Smoke,
    Full,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a model connection and write it to <out>/connection.gfrg.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Parallel transport along a polygonal path given as a JSON array of points.
    Transport {
        #[command(flatten)]
        common: Common,
        /// Field file; the configured generator is used when absent.
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        path: String,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Holonomy against integrated curvature on triangles (JSON array of vertex triples),
    /// or on random triangles when none are given.
    Stokes {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        triangles: Option<String>,
        #[arg(long, default_value_t = 40)]
        count: usize,
    },
    /// Scale-invariant Morrey norms of |F| and of A.
    Morrey {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Curvature magnitude, Q and the Omega_m masks.
    Stratify {
        #[command(flatten)]
        common: Common,
    },
    /// Partial gauges sigma_1..sigma_{m_max}.
    GaugeBuild {
        #[command(flatten)]
        common: Common,
    },
    /// Ball covers and truncated connections for every level.
    Truncate {
        #[command(flatten)]
        common: Common,
    },
    /// Coulomb gauge of a field file, or of the last truncated field of a configured run.
    Coulomb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Gauge-invariance and Stokes audits of the configured field.
    Audit {
        #[command(flatten)]
        common: Common,
    },
    /// Full run with all audits.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
    /// Property suite (smoke: n = 2, 3; full: adds the n = 4 reference run).
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "smoke")]
        suite: SuiteArg,
    },
    /// Consolidated constants table of a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected n,m")?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

fn config(c: &Common) -> gfrg::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if c.threads.is_some() {
        cfg.threads = c.threads;
    }
    if let Some((n, m)) = c.grid {
        cfg.n = n;
        cfg.m = m;
    }
    if let Some(g) = c.group {
        cfg.group = match g {
            GroupArg::U1 => Group::U1,
            GroupArg::Su2 => Group::SU2,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn field(cfg: &ExperimentConfig, file: &Option<PathBuf>) -> gfrg::Result<ConnectionField> {
    match file {
        Some(p) => io::read_connection(p),
        None => Ok(generate(&cfg.generator, cfg.grid()?, cfg.group, cfg.seed)?.field),
    }
}

fn mat_json(m: &Mat) -> serde_json::Value {
    let d = m.dim();
    json!((0..d).map(|i| (0..d).map(|j| [m.get(i, j).re, m.get(i, j).im]).collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn points(s: &str) -> gfrg::Result<Vec<Vec<f64>>> {
    serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("expected a JSON array of points: {e}")))
}

fn print(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn finish(rep: &RunReport, out: &Path) -> i32 {
    for f in &rep.failures {
        eprintln!("{} failed ({}): {}", f.stage, f.kind, f.message);
    }
    for c in rep.checks.iter().filter(|c| !c.pass) {
        eprintln!("check {} = {:e} exceeds {:e}", c.name, c.value, c.bound);
    }
    print!("{}", pipeline::constants_csv(&rep.constants));
    eprintln!("artifacts in {}", out.display());
    rep.exit_code()
}

fn staged(common: &Common, stop: Stage) -> gfrg::Result<i32> {
    let cfg = config(common)?;
    let rep = run_until(&cfg, stop)?;
    Ok(finish(&rep, &cfg.out))
}

fn run(cli: Cli) -> gfrg::Result<i32> {
    match cli.cmd {
        Cmd::Generate { common, kind, epsilon } => {
            let mut cfg = config(&common)?;
            if let Some(k) = kind {
                cfg.generator.kind = match k {
                    KindArg::Zero => GeneratorKind::Zero,
                    KindArg::RandomSmooth => GeneratorKind::RandomSmooth,
                    KindArg::PureGauge => GeneratorKind::PureGauge,
                    KindArg::AbelianModel => GeneratorKind::AbelianModel,
                    KindArg::SingularModel => GeneratorKind::SingularModel,
                };
            }
            if let Some(e) = epsilon {
                cfg.generator.epsilon = e;
            }
            let rep = run_until(&cfg, Stage::Generate)?;
            eprintln!("wrote {}", cfg.out.join("connection.gfrg").display());
            Ok(rep.exit_code())
        }
        Cmd::Transport { common, field: file, path, tol } => {
            let cfg = config(&common)?;
            let a = field(&cfg, &file)?;
            let p = PolyPath::new(points(&path)?)?;
            let u = with_threads(cfg.threads, || transport(&a, &p, tol))??;
            print(&json!({ "transport": mat_json(&u) }));
            Ok(0)
        }
        Cmd::Stokes { common, field: file, triangles, count } => {
            let cfg = config(&common)?;
            let a = field(&cfg, &file)?;
            match triangles {
                Some(t) => {
                    let tris: Vec<Vec<Vec<f64>>> = serde_json::from_str(&t)
                        .map_err(|e| Error::InvalidInput(format!("expected a JSON array of vertex triples: {e}")))?;
                    let mut rows = Vec::new();
                    for v in tris {
                        if v.len() != 3 {
                            return Err(Error::InvalidInput("each triangle needs three vertices".into()));
                        }
                        let r = stokes_check(&a, &Triangle::new(&v[0], &v[1], &v[2]), 1e-10)?;
                        rows.push(json!({ "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio }));
                    }
                    print(&json!(rows));
                }
                None => {
                    let s = with_threads(cfg.threads, || pipeline::stokes_audit(&a, count, cfg.seed))??;
                    print(&serde_json::to_value(s)?);
                }
            }
            Ok(0)
        }
        Cmd::Morrey { common, field: file } => {
            let cfg = config(&common)?;
            let a = field(&cfg, &file)?;
            let g = a.grid;
            let centers = Centers::default_for(&g, cfg.seed);
            let (f, c) = with_threads(cfg.threads, || {
                let fm = curvature_magnitude(&curvature(&a));
                let f = morrey_norm(&g, &fm, &MorreyParams::scale_invariant(g.n, 2.0, 0), &centers);
                (f, morrey_sobolev_connection(&a, &MorreyParams::scale_invariant(g.n, 2.0, 1), &centers))
            })?;
            print(&json!({ "curvature_m_n2_2": f, "connection_m_n2_21": c? }));
            Ok(0)
        }
        Cmd::Stratify { common } => staged(&common, Stage::Stratify),
        Cmd::GaugeBuild { common } => staged(&common, Stage::GaugeBuild),
        Cmd::Truncate { common } => staged(&common, Stage::Truncate),
        Cmd::Coulomb { common, field: Some(file) } => {
            let cfg = config(&common)?;
            let a = io::read_connection(&file)?;
            let centers = Centers::default_for(&a.grid, cfg.seed);
            let (res, pre) = with_threads(cfg.threads, || coulomb_fix_robust(&a, &cfg.coulomb, &centers))??;
            std::fs::create_dir_all(&cfg.out)?;
            io::write_gauge(&cfg.out.join("coulomb_gauge.gfrg"), &res.gauge)?;
            io::write_connection(&cfg.out.join("coulomb_connection.gfrg"), &res.field)?;
            let r: &CoulombReport = &res.report;
            std::fs::write(cfg.out.join("coulomb_report.json"), serde_json::to_string_pretty(r)?)?;
            print(&json!({ "report": r, "preconditioned": pre }));
            let ok = r.converged
                && r.divergence_relative <= cfg.bounds.coulomb_divergence
                && r.boundary_defect <= cfg.bounds.boundary_defect;
            Ok(if ok { 0 } else { 1 })
        }
        Cmd::Coulomb { common, field: None } => staged(&common, Stage::Coulomb),
        Cmd::Audit { common } => {
            let cfg = config(&common)?;
            let a = field(&cfg, &None)?;
            let (gi, st) = with_threads(cfg.threads, || -> gfrg::Result<_> {
                Ok((
                    pipeline::gauge_invariance_audit(&a, cfg.audits.gauge_amplitude, cfg.seed)?,
                    pipeline::stokes_audit(&a, cfg.audits.stokes_triangles, cfg.seed)?,
                ))
            })??;
            print(&json!({ "gauge_invariance": gi, "stokes": st }));
            let ok = gi.relative.is_none_or(|r| r <= cfg.bounds.gauge_defect) && st.max_ratio.is_none_or(|r| r <= cfg.bounds.stokes_ratio);
            Ok(if ok { 0 } else { 1 })
        }
        Cmd::Pipeline { common } => staged(&common, Stage::All),
        Cmd::Verify { common, suite } => {
            let cfg = config(&common)?;
            let suite = match suite {
                SuiteArg::Smoke => Suite::Smoke,
                SuiteArg::Full => Suite::Full,
            };
            let out = with_threads(cfg.threads, || pipeline::verify(suite, cfg.seed, &cfg.out))??;
            for (name, code) in &out.runs {
                println!("{name}: exit {code}");
            }
            for f in &out.failures {
                eprintln!("FAIL {f}");
            }
            Ok(if out.failures.is_empty() { 0 } else { 1 })
        }
        Cmd::Report { dir } => {
            let (rep, table) = pipeline::report(&dir)?;
            print!("{table}");
            Ok(rep.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
