//! `bubbleflow` command-line front end.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use bubbleflow::geometry::StandardBubble;
use bubbleflow::io;
use bubbleflow::lab::stability_run;
use bubbleflow::linops::{self, Verdict};
use bubbleflow::perturbation::ArcGrid;

use config::{KeyError, RunConfig};

const EXIT_CODES: &str = "\
Exit codes:
  0  every requested check passed
  1  a check failed (a table of assertions is printed) or a run could not complete
  2  unknown subcommand or malformed command line
  3  invalid configuration value (the offending key is named)";

#[derive(Parser, Debug)]
#[command(name = "bubbleflow", version, about = "Double-bubble surface diffusion lab", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print curvatures, lengths, junctions and areas of the standard bubble.
    Geometry(Common),
    /// Write the null basis v1..v5 and its discrete residuals.
    Nullspace(Common),
    /// Eigenvalues nearest zero of the linearized operator.
    Spectrum(Common),
    /// Sign suite over a γ sweep, junction determinant grid, null-space
    /// convergence and semi-simplicity.
    Verify(Common),
    /// Run the nonlinear stability experiment.
    Flow(Common),
    /// Render curves_<step>.svg from the snapshots of a flow run.
    Report(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// key=value file; defaults to ./config.txt when present.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override any key, e.g. --set flow.dt=5e-4 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long = "bubble.a1", visible_alias = "a1", value_name = "X", allow_hyphen_values = true)]
    a1: Option<String>,
    #[arg(long = "bubble.a2", visible_alias = "a2", value_name = "X", allow_hyphen_values = true)]
    a2: Option<String>,
    #[arg(long = "bubble.r", visible_alias = "r", value_name = "X", allow_hyphen_values = true)]
    r: Option<String>,
    #[arg(long = "bubble.gamma", visible_alias = "gamma", value_name = "X", allow_hyphen_values = true)]
    gamma: Option<String>,
    #[arg(long = "bubble.theta", visible_alias = "theta", value_name = "X", allow_hyphen_values = true)]
    theta: Option<String>,
    #[arg(long = "grid.n", visible_alias = "n", value_name = "N")]
    n: Option<String>,
    #[arg(long = "flow.dt", visible_alias = "dt", value_name = "X", allow_hyphen_values = true)]
    dt: Option<String>,
    #[arg(long = "flow.T", visible_alias = "T", value_name = "X", allow_hyphen_values = true)]
    t_end: Option<String>,
    #[arg(long = "perturb.kind", visible_alias = "kind", value_name = "generic|null1..null5")]
    kind: Option<String>,
    #[arg(long = "perturb.amplitude", visible_alias = "amplitude", value_name = "X", allow_hyphen_values = true)]
    amplitude: Option<String>,
    #[arg(long, value_name = "N")]
    seed: Option<String>,
    #[arg(long = "out.dir", visible_alias = "out", value_name = "DIR")]
    out_dir: Option<String>,
    #[arg(long = "snapshots.every", visible_alias = "snapshots", value_name = "STEPS")]
    snapshots: Option<String>,
    #[arg(long = "verify.gamma_points", visible_alias = "gamma-points", value_name = "N")]
    gamma_points: Option<String>,
}

enum Failure {
    Config(KeyError),
    Check,
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

impl Common {
    fn overrides(&self) -> Result<BTreeMap<String, String>, KeyError> {
        let mut out = BTreeMap::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| KeyError { key: s.clone(), message: "--set expects KEY=VALUE".into() })?;
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
        let named = [
            ("bubble.a1", &self.a1),
            ("bubble.a2", &self.a2),
            ("bubble.r", &self.r),
            ("bubble.gamma", &self.gamma),
            ("bubble.theta", &self.theta),
            ("grid.n", &self.n),
            ("flow.dt", &self.dt),
            ("flow.T", &self.t_end),
            ("perturb.kind", &self.kind),
            ("perturb.amplitude", &self.amplitude),
            ("seed", &self.seed),
            ("out.dir", &self.out_dir),
            ("snapshots.every", &self.snapshots),
            ("verify.gamma_points", &self.gamma_points),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                out.insert(k.to_string(), v.clone());
            }
        }
        Ok(out)
    }

    fn resolve(&self) -> Result<RunConfig, Failure> {
        let path = match &self.config {
            Some(p) => Some(p.clone()),
            None => Some(PathBuf::from("config.txt")).filter(|p| p.is_file()),
        };
        let mut layers = Vec::new();
        if let Some(p) = &path {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Config(KeyError { key: "config".into(), message: format!("{}: {e}", p.display()) }))?;
            let kv = io::parse_key_values(&text)
                .map_err(|e| Failure::Config(KeyError { key: "config".into(), message: format!("{}: {e}", p.display()) }))?;
            layers.push(kv);
        }
        if let Some(dir) = std::env::var_os("BUBBLEFLOW_OUT") {
            layers.push(BTreeMap::from([("out.dir".to_string(), dir.to_string_lossy().into_owned())]));
        }
        layers.push(self.overrides().map_err(Failure::Config)?);
        config::resolve(&layers).map_err(Failure::Config)
    }
}

/// Assertion table row.
struct Check {
    name: String,
    value: f64,
    pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, pass: bool) -> Self {
        Check { name: name.into(), value, pass }
    }
}

fn print_table(checks: &[Check]) -> bool {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in checks {
        println!("{:<width$}  {:>24}  {}", c.name, io::fmt_f64(c.value), if c.pass { "PASS" } else { "FAIL" });
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!("{} checks, {} failed", checks.len(), failed);
    failed == 0
}

fn checks_csv(checks: &[Check]) -> String {
    let mut s = String::from("check,value,pass\n");
    for c in checks {
        s.push_str(&format!("{},{},{}\n", c.name, io::fmt_f64(c.value), c.pass));
    }
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn prepare_out(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let pairs: Vec<(&String, &String)> = cfg.pairs.iter().collect();
    write(&cfg.out_dir, "config.txt", &io::key_values_text(&pairs))?;
    Ok(&cfg.out_dir)
}

fn bubble_of(cfg: &RunConfig) -> Result<StandardBubble> {
    Ok(StandardBubble::new(cfg.stability.bubble)?)
}

fn triple(v: [f64; 3]) -> String {
    // round first so that -1e-17 prints as 0.000000, not -0.000000
    let v = v.map(|x| (x * 1e6).round() / 1e6 + 0.0);
    format!("({:.6}, {:.6}, {:.6})", v[0], v[1], v[2])
}

fn geometry(cfg: &RunConfig) -> Result<(), Failure> {
    let b = bubble_of(cfg)?;
    let p = b.params;
    println!("params = (a1 {}, a2 {}, r {}, gamma {}, theta {})", p.a1, p.a2, p.r, p.gamma, p.theta);
    println!("kappa = {}", triple(b.kappa));
    println!("l = {}", triple(b.half_len));
    println!("q = {}", triple(b.q));
    for (name, v) in ["p_plus", "p_minus"].iter().zip(b.junctions) {
        println!("{name} = ({:.6}, {:.6})", v.x, v.y);
    }
    for i in 0..3 {
        match (b.centers[i], b.radii[i]) {
            (Some(c), Some(r)) => println!("arc{} = circle centre ({:.6}, {:.6}) radius {:.6}", i + 1, c.x, c.y, r),
            _ => println!("arc{} = segment", i + 1),
        }
    }
    let a = b.enclosed_areas();
    println!("areas = ({:.6}, {:.6})", a[0], a[1]);
    println!("length = {:.6}", b.total_length());
    Ok(())
}

fn nullspace(cfg: &RunConfig) -> Result<(), Failure> {
    let b = bubble_of(cfg)?;
    let grid = ArcGrid::new(&b, cfg.stability.n).map_err(anyhow::Error::from)?;
    let out = prepare_out(cfg)?;
    write(out, "nullspace.csv", &io::null_basis_csv(&grid, &linops::null_basis(&b, &grid)))?;
    let res = linops::null_residuals(&b, &grid);
    let mut s = String::from("k,residual\n");
    for (k, r) in res.iter().enumerate() {
        println!("v{} residual = {}", k + 1, io::fmt_f64(*r));
        s.push_str(&format!("{},{}\n", k + 1, io::fmt_f64(*r)));
    }
    write(out, "null_residuals.csv", &s)?;
    Ok(())
}

/// Modes listed by `spectrum`.
const SPECTRUM_MODES: usize = 12;

fn spectrum_checks(report: &linops::ModeReport) -> Vec<Check> {
    let l6 = report.lambda6;
    vec![
        Check::new("null_cluster_size", report.near_null_count as f64, report.near_null_count == 5),
        Check::new("lambda6.re>0", l6.re, l6.re > 0.0),
        Check::new("lambda6.im=0", l6.im, l6.im.abs() <= 1e-8 * l6.norm()),
        Check::new("max|im|/max|lambda|<=1e-8", report.imag_ratio, report.imag_ratio <= 1e-8),
        Check::new("rest.re>0", if report.stable_rest { 1.0 } else { 0.0 }, report.stable_rest),
    ]
}

fn spectrum(cfg: &RunConfig) -> Result<(), Failure> {
    let b = bubble_of(cfg)?;
    let grid = ArcGrid::new(&b, cfg.stability.n).map_err(anyhow::Error::from)?;
    let pencil = linops::assemble_pencil(&b, &grid);
    let report = linops::spectrum(&pencil, SPECTRUM_MODES).map_err(anyhow::Error::from)?;
    let out = prepare_out(cfg)?;
    write(out, "modes.csv", &io::modes_csv(&report))?;
    for (k, m) in report.modes.iter().enumerate() {
        println!("{:>3}  {:>24} {:>+24}i  {}", k + 1, io::fmt_f64(m.lambda.re), io::fmt_f64(m.lambda.im), if m.is_null { "null" } else { "" });
    }
    println!("null_tol = {}", io::fmt_f64(report.null_tol));
    if print_table(&spectrum_checks(&report)) { Ok(()) } else { Err(Failure::Check) }
}

/// Grid size of the junction determinant check (radii × angles).
const LS_GRID: (usize, usize) = (5, 10);
/// Coarsest grid of the null-space refinement study.
const NULL_REFINE_N0: usize = 64;

fn verify(cfg: &RunConfig) -> Result<(), Failure> {
    let b = bubble_of(cfg)?;
    let mut checks = Vec::new();

    let signs = linops::sign_suite(&linops::gamma_sweep(cfg.gamma_points)).map_err(anyhow::Error::from)?;
    for r in &signs.rows {
        checks.push(Check::new(format!("sign[gamma={:.6}].{}", r.gamma, r.id), r.value, r.pass));
    }

    let ls = linops::ls_grid(linops::ls_ratios(&b), LS_GRID.0, LS_GRID.1).map_err(anyhow::Error::from)?;
    let min_det = ls.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    checks.push(Check::new(format!("ls.min|det|>1e-8 ({} points)", ls.len()), min_det, min_det > 1e-8));

    let conv = linops::null_convergence(b.params, NULL_REFINE_N0).map_err(anyhow::Error::from)?;
    for (j, row) in conv.ratios.iter().enumerate() {
        for (k, r) in row.iter().enumerate() {
            let name = format!("null.v{}.ratio[n={}->{}]", k + 1, conv.n[j], conv.n[j + 1]);
            checks.push(Check::new(name, *r, (3.0..=5.0).contains(r)));
        }
    }

    let grid = ArcGrid::new(&b, cfg.stability.n).map_err(anyhow::Error::from)?;
    let pencil = linops::assemble_pencil(&b, &grid);
    let report = linops::spectrum(&pencil, 6).map_err(anyhow::Error::from)?;
    checks.extend(spectrum_checks(&report));
    let ss = linops::semisimplicity_check(&pencil, &report).map_err(anyhow::Error::from)?;
    checks.push(Check::new("semisimple.max_angle", ss.max_angle, ss.max_angle <= ss.angle_tol));
    checks.push(Check::new("semisimple.residual_floor", ss.residual_floor, ss.verdict == Verdict::Pass));

    let out = prepare_out(cfg)?;
    write(out, "signs.csv", &io::signs_csv(&signs))?;
    write(out, "verify.csv", &checks_csv(&checks))?;
    if print_table(&checks) { Ok(()) } else { Err(Failure::Check) }
}

/// Relative area drift tolerated by `flow`.
const AREA_TOLERANCE: f64 = 1e-4;

fn flow(cfg: &RunConfig) -> Result<(), Failure> {
    let report = stability_run(&cfg.stability).map_err(anyhow::Error::from)?;
    let out = prepare_out(cfg)?;
    write(out, "trace.csv", &io::trace_csv(&report.trace))?;
    write(out, "report.txt", &io::key_values_text(&report.key_values()))?;
    if cfg.stability.snapshot_every > 0 {
        write(out, "snapshots.csv", &io::snapshots_csv(&report.trace.snapshots))?;
    }
    for (k, v) in report.key_values() {
        println!("{k} = {v}");
    }
    let checks = [
        Check::new("length_violation<=1e-10", report.length_violation, report.length_monotone()),
        Check::new("area_error<=1e-4", report.area_error, report.area_error <= AREA_TOLERANCE),
    ];
    if print_table(&checks) { Ok(()) } else { Err(Failure::Check) }
}

fn render(cfg: &RunConfig) -> Result<(), Failure> {
    let path = cfg.out_dir.join("snapshots.csv");
    let text = fs::read_to_string(&path).map_err(|e| {
        Failure::Config(KeyError { key: "out.dir".into(), message: format!("cannot read {}: {e}", path.display()) })
    })?;
    let snaps = io::read_snapshots_csv(&text).map_err(anyhow::Error::from)?;
    for (step, curves) in &snaps {
        let name = format!("curves_{step}.svg");
        write(&cfg.out_dir, &name, &io::curves_svg(curves))?;
        println!("{}", cfg.out_dir.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&RunConfig) -> Result<(), Failure>) = match &cli.command {
        Command::Geometry(c) => (c, geometry),
        Command::Nullspace(c) => (c, nullspace),
        Command::Spectrum(c) => (c, spectrum),
        Command::Verify(c) => (c, verify),
        Command::Flow(c) => (c, flow),
        Command::Report(c) => (c, render),
    };
    match common.resolve().and_then(|cfg| run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
