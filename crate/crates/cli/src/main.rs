use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hdgbddc::experiment::{format_table, write_csv};
use hdgbddc::{
    assemble_trace_system, build_problem, build_structured_mesh, convergence_study, BenchmarkConfig,
    ConvergenceStudy, Diagonal, Discretization, Grid, ManufacturedBeta, OutputFormat, ProblemKind, Stopping,
    TraceSolver, Variant,
};

#[derive(Parser)]
#[command(name = "hdgbddc", version, about = "HDG discretization with BDDC-preconditioned GMRES")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iteration counts over a parameter sweep
    Sweep(SweepArgs),
    /// Manufactured-solution L² errors under mesh refinement
    Converge(ConvergeArgs),
    /// Write the triangulation as plain text
    DumpMesh(MeshArgs),
    /// Write the condensed trace matrix in coordinate format
    ExportMatrix(MatrixArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// start from the preset of published table N (1-5)
    #[arg(long, conflicts_with = "config")]
    table: Option<usize>,
    #[arg(long)]
    problem: Option<ProblemKind>,
    /// comma-separated list
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    degree: Vec<usize>,
    /// subdomain grids, `NxM` or `N`
    #[arg(long, value_delimiter = ',')]
    subdomains: Vec<Grid>,
    /// H/h values
    #[arg(long, value_delimiter = ',')]
    ratio: Vec<usize>,
    /// bddc1, bddc2, bddc3, all-primal, none
    #[arg(long, value_delimiter = ',')]
    variant: Vec<Variant>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    maxit: Option<usize>,
    /// preconditioned or true-residual
    #[arg(long)]
    stopping: Option<Stopping>,
    /// ne, nw or alternating
    #[arg(long)]
    diagonal: Option<Diagonal>,
    /// velocity of the manufactured problem: zero, thermal, rotating
    #[arg(long)]
    beta: Option<ManufacturedBeta>,
    /// csv or table
    #[arg(long)]
    format: Option<OutputFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// single-threaded, bit-reproducible runs
    #[arg(long)]
    deterministic: bool,
    /// add γ and sampled field-of-values columns
    #[arg(long)]
    diagnostics: bool,
    /// print the effective configuration as JSON and exit
    #[arg(long)]
    show_config: bool,
    /// no per-point progress on stderr
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value = "zero")]
    beta: ManufacturedBeta,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    degree: Vec<usize>,
    #[arg(long, default_value = "2x2")]
    subdomains: Grid,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    ratio: Vec<usize>,
    #[arg(long, default_value = "alternating")]
    diagonal: Diagonal,
    /// `direct` or a preconditioner variant for GMRES
    #[arg(long, default_value = "direct")]
    solver: String,
    #[arg(long, default_value = "table")]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long, default_value = "2x2")]
    subdomains: Grid,
    #[arg(long, default_value_t = 2)]
    ratio: usize,
    #[arg(long, default_value = "alternating")]
    diagonal: Diagonal,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    #[arg(long, default_value = "thermal")]
    problem: ProblemKind,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value = "zero")]
    beta: ManufacturedBeta,
    #[arg(long, default_value_t = 0)]
    degree: usize,
    #[arg(long, default_value = "2x2")]
    subdomains: Grid,
    #[arg(long, default_value_t = 2)]
    ratio: usize,
    #[arg(long, default_value = "alternating")]
    diagonal: Diagonal,
    #[arg(long)]
    out: Option<PathBuf>,
    /// also write the right-hand side, one value per line
    #[arg(long)]
    rhs: Option<PathBuf>,
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn output(path: Option<&Path>) -> AnyResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn sweep_config(a: &SweepArgs) -> AnyResult<BenchmarkConfig> {
    let mut cfg = match (&a.config, a.table) {
        (Some(path), _) => BenchmarkConfig::load(path)?,
        (None, Some(n)) => BenchmarkConfig::table(n)?,
        (None, None) => BenchmarkConfig::default(),
    };
    if let Some(p) = a.problem {
        cfg.problem = p;
    }
    if !a.epsilon.is_empty() {
        cfg.epsilons = a.epsilon.clone();
    }
    if !a.degree.is_empty() {
        cfg.degrees = a.degree.clone();
    }
    if !a.subdomains.is_empty() {
        cfg.subdomains = a.subdomains.clone();
    }
    if !a.ratio.is_empty() {
        cfg.ratios = a.ratio.clone();
    }
    if !a.variant.is_empty() {
        cfg.variants = a.variant.clone();
    }
    cfg.tol = a.tol.unwrap_or(cfg.tol);
    cfg.maxit = a.maxit.unwrap_or(cfg.maxit);
    cfg.stopping = a.stopping.unwrap_or(cfg.stopping);
    cfg.diagonal = a.diagonal.unwrap_or(cfg.diagonal);
    cfg.manufactured_beta = a.beta.unwrap_or(cfg.manufactured_beta);
    cfg.format = a.format.unwrap_or(cfg.format);
    cfg.threads = a.threads.or(cfg.threads);
    cfg.deterministic |= a.deterministic;
    cfg.diagnostics |= a.diagnostics;
    cfg.validate()?;
    Ok(cfg)
}

fn sweep(a: SweepArgs) -> AnyResult<ExitCode> {
    let cfg = sweep_config(&a)?;
    if a.show_config {
        let mut w = output(None)?;
        writeln!(w, "{}", cfg.to_json())?;
        w.flush()?;
        return Ok(ExitCode::SUCCESS);
    }
    let quiet = a.quiet;
    let results = hdgbddc::experiment::run_sweep_with(&cfg, |rows| {
        if quiet {
            return;
        }
        let p = rows[0].point;
        let cells: Vec<String> = rows.iter().map(|r| format!("{}={}", r.point.variant, r.cell())).collect();
        eprintln!("{} eps={:e} deg={} {} H/h={}: {}", p.problem, p.epsilon, p.degree, p.grid, p.ratio, cells.join(" "));
    })?;
    let mut w = output(a.out.as_deref())?;
    match cfg.format {
        OutputFormat::Csv => write_csv(&results, &mut w)?,
        OutputFormat::Table => w.write_all(format_table(&results).as_bytes())?,
    }
    w.flush()?;
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} case(s) failed; see the error cells");
    }
    Ok(ExitCode::SUCCESS)
}

fn write_study(w: &mut dyn Write, s: &ConvergenceStudy, format: OutputFormat, header: bool) -> io::Result<()> {
    match format {
        OutputFormat::Csv => {
            if header {
                writeln!(w, "degree,epsilon,h,n_dofs,error,rate")?;
            }
            for r in &s.rows {
                let rate = r.rate.map(|v| v.to_string()).unwrap_or_default();
                writeln!(w, "{},{},{},{},{},{}", s.degree, s.epsilon, r.h, r.n_dofs, r.error, rate)?;
            }
        }
        OutputFormat::Table => {
            writeln!(w, "degree {}  eps {:e}  slope {:.3}", s.degree, s.epsilon, s.slope)?;
            writeln!(w, "{:>10} {:>9} {:>12} {:>6}", "h", "dofs", "L2 error", "rate")?;
            for r in &s.rows {
                let rate = r.rate.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
                writeln!(w, "{:>10.5} {:>9} {:>12.4e} {:>6}", r.h, r.n_dofs, r.error, rate)?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

fn converge(a: ConvergeArgs) -> AnyResult<ExitCode> {
    let solver = match a.solver.to_ascii_lowercase().as_str() {
        "direct" => TraceSolver::Direct,
        other => TraceSolver::Gmres(other.parse()?),
    };
    let mut w = output(a.out.as_deref())?;
    for (i, &k) in a.degree.iter().enumerate() {
        let s = convergence_study(a.epsilon, a.beta, k, a.subdomains, &a.ratio, a.diagonal, solver)?;
        write_study(&mut w, &s, a.format, i == 0)?;
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn dump_mesh(a: MeshArgs) -> AnyResult<ExitCode> {
    let mesh = build_structured_mesh(a.subdomains.nx, a.subdomains.ny, a.ratio, a.diagonal)?;
    let mut w = output(a.out.as_deref())?;
    mesh.write_text(&mut w)?;
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn export_matrix(a: MatrixArgs) -> AnyResult<ExitCode> {
    let mesh = build_structured_mesh(a.subdomains.nx, a.subdomains.ny, a.ratio, a.diagonal)?;
    let disc = Discretization::new(mesh, build_problem(a.problem, a.epsilon, a.beta), a.degree)?;
    let sys = assemble_trace_system(&disc);
    let mut w = output(a.out.as_deref())?;
    sys.write_coordinate(&mut w)?;
    w.flush()?;
    if let Some(path) = &a.rhs {
        let mut r = BufWriter::new(File::create(path)?);
        for v in &sys.b {
            writeln!(r, "{v:e}")?;
        }
        r.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Converge(a) => converge(a),
        Command::DumpMesh(a) => dump_mesh(a),
        Command::ExportMatrix(a) => export_matrix(a),
    };
    match res {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
