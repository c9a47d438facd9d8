//! Command-line driver: solve a single problem, run a convergence study, or
//! probe the stability constants. Configuration comes from flags plus an
//! optional `key=value` file; flags take precedence.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::assembly::{EtaPolicy, RhsMode, Variant};
use crate::fields::{fmt9, DiscreteSpace};
use crate::mesh::{build_layer_grid, build_structured_mesh};
use crate::solvers::{SolveStats, SolverOptions};
use crate::verify::{
    manufactured, manufactured_surface, measure_errors, probe_stability, probe_surface_form,
    run_convergence_study, solve_system, ManufacturedProblem, Method,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "multilayer",
    about = "Layered Petrov-Galerkin solver for elliptic problems on shallow domains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Assemble and solve one problem, writing the solution as CSV.
    Solve(CommonArgs),
    /// Run a convergence study over a list of resolutions.
    Study(CommonArgs),
    /// Probe norm equivalence, coercivity, continuity and inf-sup constants.
    Check(CommonArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct CommonArgs {
    /// Optional key=value configuration file; flags override file entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Problem variant: dirichlet-flat | nonflat | neumann.
    #[arg(long)]
    pub variant: Option<String>,
    /// Built-in problem id: 1, 2 or 3.
    #[arg(long)]
    pub test: Option<u8>,
    /// Layer count.
    #[arg(short = 'N', long = "N", alias = "n")]
    pub n: Option<usize>,
    /// Horizontal subdivisions per side.
    #[arg(long = "NH", alias = "nh")]
    pub nh: Option<usize>,
    /// Horizontal dimension (1 or 2).
    #[arg(long, alias = "d")]
    pub dim: Option<usize>,
    /// Domain height.
    #[arg(long, alias = "L")]
    pub length: Option<f64>,
    /// Solver: jacobi | gmres-jacobi | monolithic.
    #[arg(long)]
    pub solver: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub restart: Option<usize>,
    /// Worker threads for the layer solves.
    #[arg(long, env = "MULTILAYER_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Surface amplitude of the non-flat variant.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Right-hand side mode: tensorized | layer-averaged.
    #[arg(long)]
    pub rhs_mode: Option<String>,
    /// Comma-separated resolution list for studies, e.g. 10,20,40.
    #[arg(long)]
    pub resolutions: Option<String>,
    /// Random sample count for the stability probe.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Output path (defaults to stdout for reports, solution.csv for solves).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub variant: Option<Variant>,
    pub test: u8,
    pub n: usize,
    pub nh: usize,
    pub dim: usize,
    pub length: f64,
    pub solver: Method,
    pub tol: f64,
    pub max_outer: usize,
    pub restart: usize,
    pub workers: usize,
    pub seed: u64,
    pub eps: Option<f64>,
    pub rhs_mode: RhsMode,
    pub resolutions: Vec<usize>,
    pub samples: usize,
    pub out: Option<PathBuf>,
}

fn parse_config_file(path: &PathBuf) -> Result<HashMap<String, String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("config {path:?}: {e}"))?;
    let mut map = HashMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(format!("config {path:?} line {}: expected key=value", ln + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s {
        "dirichlet-flat" | "flat" => Ok(Variant::DirichletFlat),
        "nonflat" => Ok(Variant::NonFlat),
        "neumann" => Ok(Variant::Neumann),
        other => Err(format!("unknown variant '{other}'")),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "jacobi" => Ok(Method::Jacobi),
        "gmres-jacobi" | "gmres" => Ok(Method::GmresJacobi),
        "monolithic" => Ok(Method::Monolithic),
        other => Err(format!("unknown solver '{other}'")),
    }
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, String> {
        let file = match &args.config {
            Some(p) => parse_config_file(p)?,
            None => HashMap::new(),
        };
        let get = |key: &str| file.get(key).cloned();
        let parse_num = |key: &str, s: String| {
            s.parse::<f64>().map_err(|_| format!("config key {key}: bad number '{s}'"))
        };

        let variant = match args.variant.clone().or_else(|| get("variant")) {
            Some(s) => Some(parse_variant(&s)?),
            None => None,
        };
        let test = match args.test {
            Some(t) => t,
            None => match get("test") {
                Some(s) => s.parse().map_err(|_| format!("config key test: bad id '{s}'"))?,
                None => 1,
            },
        };
        let parse_usize = |key: &str, flag: Option<usize>, default: usize| -> Result<usize, String> {
            match flag {
                Some(v) => Ok(v),
                None => match get(key) {
                    Some(s) => {
                        s.parse().map_err(|_| format!("config key {key}: bad value '{s}'"))
                    }
                    None => Ok(default),
                },
            }
        };
        let n = parse_usize("n", args.n, 10)?;
        let nh = parse_usize("nh", args.nh, n)?;
        let dim = parse_usize("dim", args.dim, 2)?;
        let length = match args.length {
            Some(v) => v,
            None => get("length").map(|s| parse_num("length", s)).transpose()?.unwrap_or(1.0),
        };
        let solver = match args.solver.clone().or_else(|| get("solver")) {
            Some(s) => parse_method(&s)?,
            None => Method::GmresJacobi,
        };
        let tol = match args.tol {
            Some(v) => v,
            None => get("tol").map(|s| parse_num("tol", s)).transpose()?.unwrap_or(1e-10),
        };
        if tol <= 0.0 {
            return Err("tol must be positive".into());
        }
        let max_outer = parse_usize("max_outer", args.max_outer, 100_000)?;
        let restart = parse_usize("restart", args.restart, 50)?;
        let workers = parse_usize("workers", args.workers, 1)?;
        let seed = match args.seed {
            Some(v) => v,
            None => match get("seed") {
                Some(s) => s.parse().map_err(|_| format!("config key seed: bad value '{s}'"))?,
                None => 7_353_315_191,
            },
        };
        let eps = match args.eps {
            Some(v) => Some(v),
            None => get("eps").map(|s| parse_num("eps", s)).transpose()?,
        };
        let rhs_mode = match args.rhs_mode.clone().or_else(|| get("rhs_mode")) {
            Some(s) => match s.as_str() {
                "tensorized" => RhsMode::Tensorized,
                "layer-averaged" => RhsMode::LayerAveraged,
                other => return Err(format!("unknown rhs mode '{other}'")),
            },
            None => RhsMode::Tensorized,
        };
        let res_text = args
            .resolutions
            .clone()
            .or_else(|| get("resolutions"))
            .unwrap_or_else(|| "10,20,40".to_string());
        let mut resolutions = Vec::new();
        for part in res_text.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            resolutions
                .push(part.parse::<usize>().map_err(|_| format!("bad resolution '{part}'"))?);
        }
        let samples = parse_usize("samples", args.samples, 1000)?;
        let out = args.out.clone().or_else(|| get("out").map(PathBuf::from));

        Ok(RunConfig {
            variant,
            test,
            n,
            nh,
            dim,
            length,
            solver,
            tol,
            max_outer,
            restart,
            workers,
            seed,
            eps,
            rhs_mode,
            resolutions,
            samples,
            out,
        })
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_outer: self.max_outer,
            restart: self.restart,
            workers: self.workers,
        }
    }

    /// Builds the manufactured problem, honoring a surface-amplitude
    /// override for the non-flat family.
    pub fn problem(&self) -> Result<ManufacturedProblem, String> {
        let p = match (self.test, self.eps) {
            (2, Some(e)) => manufactured_surface(e),
            (id, _) => manufactured(id).ok_or(format!("unknown test id {id}"))?,
        };
        Ok(p)
    }

    /// The variant to run: explicit flag, else the problem's own.
    pub fn effective_variant(&self, problem: &ManufacturedProblem) -> Variant {
        self.variant.unwrap_or(problem.variant)
    }
}

fn write_out(path: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match path {
        Some(p) => fs::write(p, content).map_err(|e| format!("write {p:?}: {e}")),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn eta_warning(check: Option<crate::assembly::EtaCheck>) {
    if let Some(c) = check {
        if !c.satisfied() {
            eprintln!(
                "warning: sampled surface condition violated (min eta = {}, max |grad eta| = {}); \
                 proceeding anyway",
                fmt9(c.min_eta),
                fmt9(c.max_slope)
            );
        }
    }
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<i32, String> {
    let problem = cfg.problem()?;
    let variant = cfg.effective_variant(&problem);
    if variant == Variant::NonFlat && problem.eta.is_none() {
        return Err("missing surface parameters: the nonflat variant needs test 2 or --eps".into());
    }
    if variant == Variant::Neumann && cfg.n < 3 {
        return Err(format!("the neumann variant needs at least 3 layers, got {}", cfg.n));
    }
    let (mesh, dofs) = build_structured_mesh(cfg.dim, cfg.nh).map_err(|e| e.to_string())?;
    let grid = build_layer_grid(cfg.length, cfg.n).map_err(|e| e.to_string())?;
    let space = DiscreteSpace::new(mesh, dofs, grid);
    let (sys, check) = problem
        .assemble(&space, variant, cfg.rhs_mode, EtaPolicy::Warn)
        .map_err(|e| e.to_string())?;
    eta_warning(check);

    let (vh, stats) =
        solve_system(&sys, cfg.solver, &cfg.solver_options()).map_err(|e| e.to_string())?;

    let out = cfg.out.clone().or_else(|| Some(PathBuf::from("solution.csv")));
    let mut buf = Vec::new();
    vh.write_csv(&mut buf, &space.mesh, &space.dofs, &space.grid)
        .map_err(|e| e.to_string())?;
    write_out(&out, &String::from_utf8(buf).unwrap())?;

    println!("{}", SolveStats::csv_header());
    println!("{}", stats.csv_row());
    if variant == problem.variant && cfg.length == problem.height && stats.converged {
        let err = measure_errors(&space, &problem, variant, &vh);
        println!(
            "err_L2h,{}\nerr_H1h,{}\nerr_L2_direct,{}\nerr_H1_interp,{}",
            fmt9(err.l2h),
            fmt9(err.h1h),
            fmt9(err.l2_direct),
            fmt9(err.h1_interp)
        );
    }
    Ok(if stats.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

pub fn cmd_study(cfg: &RunConfig) -> Result<i32, String> {
    let problem = cfg.problem()?;
    let variant = cfg.effective_variant(&problem);
    if variant != problem.variant {
        return Err("studies run each test under its own variant".into());
    }
    if cfg.resolutions.is_empty() {
        return Err("empty resolution list".into());
    }
    for w in cfg.resolutions.windows(2) {
        if w[1] != 2 * w[0] {
            return Err(format!(
                "resolutions must halve the grid sizes step by step, got {} -> {}",
                w[0], w[1]
            ));
        }
    }
    let report = run_convergence_study(
        &problem,
        &cfg.resolutions,
        cfg.solver,
        &cfg.solver_options(),
        cfg.rhs_mode,
        EtaPolicy::Warn,
    )?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(|e| e.to_string())?;
    write_out(&cfg.out, &String::from_utf8(buf).unwrap())?;
    if cfg.out.is_some() {
        for r in &report.rows {
            eprintln!(
                "N={:4} err_L2h={} err_H1h={} iters={}",
                r.n_layers,
                fmt9(r.err_l2h),
                fmt9(r.err_h1h),
                r.outer_iters
            );
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_check(cfg: &RunConfig) -> Result<i32, String> {
    let (mesh, dofs) = build_structured_mesh(cfg.dim, cfg.nh).map_err(|e| e.to_string())?;
    let grid = build_layer_grid(cfg.length, cfg.n).map_err(|e| e.to_string())?;
    let space = DiscreteSpace::new(mesh, dofs, grid);
    let report = probe_stability(&space, cfg.samples, cfg.seed);
    let mut buf = Vec::new();
    report.write(&mut buf).map_err(|e| e.to_string())?;
    if let Some(eps) = cfg.eps {
        use std::f64::consts::PI;
        let eta = move |p: [f64; 2]| 1.0 + eps * (2.0 * PI * (p[0] + p[1])).sin();
        let geta = move |p: [f64; 2]| {
            let d = 2.0 * PI * eps * (2.0 * PI * (p[0] + p[1])).cos();
            [d, d]
        };
        let sr = probe_surface_form(&space, &eta, &geta, cfg.samples, cfg.seed);
        use std::io::Write as _;
        writeln!(buf, "surface_coercivity_min,{}", fmt9(sr.coercivity_min)).unwrap();
        writeln!(buf, "surface_continuity_max,{}", fmt9(sr.continuity_max)).unwrap();
        if let Some(v) = sr.infsup {
            writeln!(buf, "surface_infsup,{}", fmt9(v)).unwrap();
        }
    }
    write_out(&cfg.out, &String::from_utf8(buf).unwrap())?;
    Ok(EXIT_OK)
}

/// Runs a parsed command line, returning the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (args, runner): (&CommonArgs, fn(&RunConfig) -> Result<i32, String>) = match &cli.cmd {
        Cmd::Solve(a) => (a, cmd_solve),
        Cmd::Study(a) => (a, cmd_study),
        Cmd::Check(a) => (a, cmd_check),
    };
    let cfg = match RunConfig::resolve(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match runner(&cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
