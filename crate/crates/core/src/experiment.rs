//! Test problems, benchmark configuration, parameter sweeps and the
//! manufactured-solution convergence study.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::Discretization;
use crate::bddc::{BddcPreconditioner, Variant};
use crate::dd::InterfaceOperator;
use crate::diagnostics::{envelope_ratio, field_of_values, gamma_stat, random_unit_vectors, InterfaceForms};
use crate::error::{Error, Result};
use crate::hdg::{ProblemSpec, TauStrategy};
use crate::krylov::{gmres, preconditioned_operator, GmresOptions, SolveReport, Stopping};
use crate::mesh::{build_structured_mesh, Diagonal, Point};

const EDGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Thermal,
    Rotating,
    Manufactured,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Thermal => "thermal",
            Self::Rotating => "rotating",
            Self::Manufactured => "manufactured",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "thermal" => Ok(Self::Thermal),
            "rotating" => Ok(Self::Rotating),
            "manufactured" => Ok(Self::Manufactured),
            _ => Err(Error::Parse(format!("unknown problem '{s}'"))),
        }
    }
}

/// Velocity used with the manufactured solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManufacturedBeta {
    /// `β = 0`, constant stabilization `τ = ε`
    #[default]
    Zero,
    Thermal,
    Rotating,
}

impl FromStr for ManufacturedBeta {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zero" | "none" => Ok(Self::Zero),
            "thermal" => Ok(Self::Thermal),
            "rotating" => Ok(Self::Rotating),
            _ => Err(Error::Parse(format!("unknown manufactured velocity '{s}'"))),
        }
    }
}

fn thermal_beta(p: Point) -> [f64; 2] {
    [0.5 * (1.0 + p[1]), 0.0]
}

fn rotating_beta(p: Point) -> [f64; 2] {
    [p[1], -p[0]]
}

/// `β = ((1+y)/2, 0)`; `u = 1` on `x = −1` and `y = 1`, `u = 0` on `y = −1`,
/// `u = (1+y)/2` on `x = 1`.
pub fn problem_thermal(epsilon: f64) -> ProblemSpec {
    ProblemSpec {
        name: "thermal".into(),
        epsilon,
        beta: Arc::new(thermal_beta),
        div_beta: Arc::new(|_| 0.0),
        f: Arc::new(|_| 0.0),
        g: Arc::new(|p| {
            if (p[1] + 1.0).abs() < EDGE_TOL {
                0.0
            } else if (p[0] - 1.0).abs() < EDGE_TOL {
                0.5 * (1.0 + p[1])
            } else {
                1.0
            }
        }),
        tau: TauStrategy::Upwind,
    }
}

/// `β = (y, −x)`; `u = 1` on `x = 1` and on `y = ±1` for `0 < x ≤ 1`, zero
/// elsewhere.
pub fn problem_rotating(epsilon: f64) -> ProblemSpec {
    ProblemSpec {
        name: "rotating".into(),
        epsilon,
        beta: Arc::new(rotating_beta),
        div_beta: Arc::new(|_| 0.0),
        f: Arc::new(|_| 0.0),
        g: Arc::new(|p| {
            let on_x1 = (p[0] - 1.0).abs() < EDGE_TOL;
            let on_y = (p[1].abs() - 1.0).abs() < EDGE_TOL && p[0] > 0.0;
            if on_x1 || on_y {
                1.0
            } else {
                0.0
            }
        }),
        tau: TauStrategy::Upwind,
    }
}

/// `u = sin(πx) sin(πy)`
pub fn manufactured_exact(p: Point) -> f64 {
    (PI * p[0]).sin() * (PI * p[1]).sin()
}

/// Source `f = −εΔu + β·∇u` for the manufactured solution.
pub fn problem_manufactured(epsilon: f64, beta: ManufacturedBeta) -> ProblemSpec {
    let bfun: fn(Point) -> [f64; 2] = match beta {
        ManufacturedBeta::Zero => |_| [0.0, 0.0],
        ManufacturedBeta::Thermal => thermal_beta,
        ManufacturedBeta::Rotating => rotating_beta,
    };
    let tau = match beta {
        ManufacturedBeta::Zero => TauStrategy::UpwindPlusConstant { tau0: epsilon },
        _ => TauStrategy::Upwind,
    };
    ProblemSpec {
        name: "manufactured".into(),
        epsilon,
        beta: Arc::new(bfun),
        div_beta: Arc::new(|_| 0.0),
        f: Arc::new(move |p| {
            let (sx, cx) = (PI * p[0]).sin_cos();
            let (sy, cy) = (PI * p[1]).sin_cos();
            let b = bfun(p);
            2.0 * epsilon * PI * PI * sx * sy + PI * (b[0] * cx * sy + b[1] * sx * cy)
        }),
        g: Arc::new(manufactured_exact),
        tau,
    }
}

pub fn build_problem(kind: ProblemKind, epsilon: f64, beta: ManufacturedBeta) -> ProblemSpec {
    match kind {
        ProblemKind::Thermal => problem_thermal(epsilon),
        ProblemKind::Rotating => problem_rotating(epsilon),
        ProblemKind::Manufactured => problem_manufactured(epsilon, beta),
    }
}

/// Subdomain grid `nx × ny`, written `"4x4"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn square(n: usize) -> Self {
        Self { nx: n, ny: n }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.nx, self.ny)
    }
}

impl FromStr for Grid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad subdomain grid '{s}', expected NxM"));
        let lower = s.trim().to_ascii_lowercase();
        let (a, b) = lower.split_once('x').unwrap_or((&lower, &lower));
        let nx = a.trim().parse().map_err(|_| bad())?;
        let ny = b.trim().parse().map_err(|_| bad())?;
        if nx == 0 || ny == 0 {
            return Err(bad());
        }
        Ok(Self { nx, ny })
    }
}

impl TryFrom<String> for Grid {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Grid> for String {
    fn from(g: Grid) -> String {
        g.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Table,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "table" => Ok(Self::Table),
            _ => Err(Error::Parse(format!("unknown format '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub problem: ProblemKind,
    pub epsilons: Vec<f64>,
    pub degrees: Vec<usize>,
    pub subdomains: Vec<Grid>,
    pub ratios: Vec<usize>,
    pub variants: Vec<Variant>,
    pub tol: f64,
    pub maxit: usize,
    pub stopping: Stopping,
    pub format: OutputFormat,
    pub threads: Option<usize>,
    pub deterministic: bool,
    pub diagonal: Diagonal,
    pub manufactured_beta: ManufacturedBeta,
    /// append γ and sampled field-of-values columns
    pub diagnostics: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Thermal,
            epsilons: vec![1.0],
            degrees: vec![0],
            subdomains: vec![Grid::square(4)],
            ratios: vec![6],
            variants: vec![Variant::Bddc1, Variant::Bddc2, Variant::Bddc3],
            tol: 1e-10,
            maxit: 1000,
            stopping: Stopping::Preconditioned,
            format: OutputFormat::Csv,
            threads: None,
            deterministic: false,
            diagonal: Diagonal::default(),
            manufactured_beta: ManufacturedBeta::Zero,
            diagnostics: false,
        }
    }
}

const TABLE_EPS: [f64; 7] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

impl BenchmarkConfig {
    /// Configuration of one of the five published iteration-count tables.
    pub fn table(n: usize) -> Result<Self> {
        let grids = |v: &[usize]| v.iter().map(|&n| Grid::square(n)).collect::<Vec<_>>();
        let base = Self {
            epsilons: TABLE_EPS.to_vec(),
            degrees: vec![0, 1, 2],
            ..Self::default()
        };
        Ok(match n {
            1 => Self {
                subdomains: grids(&[4, 8, 16, 32]),
                ..base
            },
            2 => Self {
                epsilons: vec![1e-3, 1e-4, 1e-5, 1e-6],
                degrees: vec![0],
                subdomains: grids(&[16, 32, 64, 128]),
                ..base
            },
            3 => Self {
                subdomains: grids(&[6]),
                ratios: vec![4, 8, 16, 32],
                ..base
            },
            4 => Self {
                problem: ProblemKind::Rotating,
                subdomains: grids(&[4, 8, 16, 32]),
                ..base
            },
            5 => Self {
                problem: ProblemKind::Rotating,
                subdomains: grids(&[6]),
                ratios: vec![4, 8, 16, 32],
                ..base
            },
            _ => return Err(Error::InvalidConfig(format!("no table {n}; tables are 1-5"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::InvalidConfig(format!("{what} list is empty")));
        if self.epsilons.is_empty() {
            return empty("epsilon");
        }
        if self.degrees.is_empty() {
            return empty("degree");
        }
        if self.subdomains.is_empty() {
            return empty("subdomain grid");
        }
        if self.ratios.is_empty() {
            return empty("ratio");
        }
        if self.variants.is_empty() {
            return empty("variant");
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidConfig(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.maxit == 0 {
            return Err(Error::InvalidConfig("maxit must be positive".into()));
        }
        if let Some(&e) = self.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {e}")));
        }
        if let Some(&k) = self.degrees.iter().find(|k| **k > 2) {
            return Err(Error::InvalidConfig(format!("degree must be 0, 1 or 2, got {k}")));
        }
        if self.ratios.contains(&0) {
            return Err(Error::InvalidConfig("ratio must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn gmres_options(&self) -> GmresOptions {
        GmresOptions {
            tol: self.tol,
            maxit: self.maxit,
            stopping: self.stopping,
            keep_basis: self.diagnostics,
        }
    }

    /// Cartesian product of the lists, variants innermost.
    pub fn cases(&self) -> Vec<CasePoint> {
        let mut out = Vec::new();
        for &degree in &self.degrees {
            for &epsilon in &self.epsilons {
                for &grid in &self.subdomains {
                    for &ratio in &self.ratios {
                        for &variant in &self.variants {
                            out.push(CasePoint {
                                problem: self.problem,
                                epsilon,
                                degree,
                                grid,
                                ratio,
                                variant,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CasePoint {
    pub problem: ProblemKind,
    pub epsilon: f64,
    pub degree: usize,
    pub grid: Grid,
    pub ratio: usize,
    pub variant: Variant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseDiagnostics {
    pub gamma: f64,
    pub c_est: f64,
    pub big_c_est: f64,
    /// largest `history[m] / envelope(m)`; above 1 means the sampled
    /// constants do not certify the decay
    pub envelope_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub point: CasePoint,
    pub iterations: usize,
    pub converged: bool,
    pub true_residual: f64,
    pub seconds: f64,
    pub error: Option<String>,
    pub diagnostics: Option<CaseDiagnostics>,
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl CaseResult {
    fn failed(point: CasePoint, err: &Error, seconds: f64) -> Self {
        Self {
            point,
            iterations: 0,
            converged: false,
            true_residual: f64::NAN,
            seconds,
            error: Some(err.to_string()),
            diagnostics: None,
            history: Vec::new(),
        }
    }

    /// Count as printed: `n`, `>maxit` or `error`.
    pub fn cell(&self) -> String {
        if self.error.is_some() {
            "error".into()
        } else if self.converged {
            self.iterations.to_string()
        } else {
            format!(">{}", self.iterations)
        }
    }

    /// Count used for comparisons; non-converged runs rank above `maxit`.
    pub fn rank(&self) -> Option<usize> {
        match (&self.error, self.converged) {
            (Some(_), _) => None,
            (None, true) => Some(self.iterations),
            (None, false) => Some(self.iterations + 1),
        }
    }
}

/// Discretization and interface operator shared by all variants of one
/// configuration point.
pub struct CaseSetup {
    pub disc: Discretization,
    pub iface: InterfaceOperator,
    pub seconds: f64,
}

pub fn setup_case(cfg: &BenchmarkConfig, problem: ProblemKind, epsilon: f64, degree: usize, grid: Grid, ratio: usize) -> Result<CaseSetup> {
    let start = Instant::now();
    let mesh = build_structured_mesh(grid.nx, grid.ny, ratio, cfg.diagonal)?;
    let spec = build_problem(problem, epsilon, cfg.manufactured_beta);
    let disc = Discretization::new(mesh, spec, degree)?;
    let iface = InterfaceOperator::new(&disc)?;
    Ok(CaseSetup {
        disc,
        iface,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Preconditioner build plus GMRES for one variant on a prepared setup.
pub fn solve_variant(cfg: &BenchmarkConfig, setup: &CaseSetup, variant: Variant) -> Result<(Vec<f64>, SolveReport, Option<CaseDiagnostics>)> {
    let pre = BddcPreconditioner::new(&setup.disc, &setup.iface, variant)?;
    let iface = &setup.iface;
    let (x, mut report) = gmres(&|v| iface.apply(v), &|v| pre.apply(v), &iface.rhs, &cfg.gmres_options());
    let diag = if cfg.diagnostics {
        let forms = InterfaceForms::new(&setup.disc, iface);
        let t = preconditioned_operator(iface, &pre);
        let mut samples = random_unit_vectors(iface.dim(), 20, 7);
        samples.extend(report.basis.iter().take(20).cloned());
        let fov = field_of_values(&t, &|a, b| forms.b_inner(a, b), &samples);
        Some(CaseDiagnostics {
            gamma: gamma_stat(&setup.disc),
            c_est: fov.c_est,
            big_c_est: fov.big_c_est,
            envelope_ratio: envelope_ratio(&report.history, &fov),
        })
    } else {
        None
    };
    report.basis.clear();
    Ok((x, report, diag))
}

fn run_group(cfg: &BenchmarkConfig, points: &[CasePoint]) -> Vec<CaseResult> {
    let p0 = points[0];
    let setup = match setup_case(cfg, p0.problem, p0.epsilon, p0.degree, p0.grid, p0.ratio) {
        Ok(s) => s,
        Err(e) => return points.iter().map(|&p| CaseResult::failed(p, &e, 0.0)).collect(),
    };
    points
        .iter()
        .map(|&point| {
            let start = Instant::now();
            match solve_variant(cfg, &setup, point.variant) {
                Ok((_, rep, diagnostics)) => CaseResult {
                    point,
                    iterations: rep.iterations,
                    converged: rep.converged,
                    true_residual: rep.true_residual,
                    seconds: setup.seconds + start.elapsed().as_secs_f64(),
                    error: None,
                    diagnostics,
                    history: rep.history,
                },
                Err(e) => CaseResult::failed(point, &e, start.elapsed().as_secs_f64()),
            }
        })
        .collect()
}

fn with_pool<T: Send>(cfg: &BenchmarkConfig, f: impl FnOnce() -> T + Send) -> T {
    let threads = if cfg.deterministic { Some(1) } else { cfg.threads };
    match threads.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Run a single configuration point.
pub fn run_case(cfg: &BenchmarkConfig, point: CasePoint) -> CaseResult {
    with_pool(cfg, || run_group(cfg, &[point]).remove(0))
}

/// Run every case of the configuration. Variants of one point share the
/// discretization; build failures are recorded per row.
pub fn run_sweep(cfg: &BenchmarkConfig) -> Result<Vec<CaseResult>> {
    run_sweep_with(cfg, |_| {})
}

/// As [`run_sweep`], calling `progress` after each configuration point.
pub fn run_sweep_with(cfg: &BenchmarkConfig, mut progress: impl FnMut(&[CaseResult]) + Send) -> Result<Vec<CaseResult>> {
    cfg.validate()?;
    let cases = cfg.cases();
    Ok(with_pool(cfg, || {
        let mut out = Vec::with_capacity(cases.len());
        for group in cases.chunks(cfg.variants.len()) {
            let rows = run_group(cfg, group);
            progress(&rows);
            out.extend(rows);
        }
        out
    }))
}

/// Monotonicity `BDDC₃ ≤ BDDC₂ + 1 ≤ BDDC₁ + 2` per configuration point.
/// Returns a description of every violating point.
pub fn monotonicity_violations(results: &[CaseResult]) -> Vec<String> {
    let mut groups: BTreeMap<String, [Option<usize>; 3]> = BTreeMap::new();
    for r in results {
        let slot = match r.point.variant {
            Variant::Bddc1 => 0,
            Variant::Bddc2 => 1,
            Variant::Bddc3 => 2,
            _ => continue,
        };
        let p = r.point;
        let key = format!("{} eps={:e} deg={} {} H/h={}", p.problem, p.epsilon, p.degree, p.grid, p.ratio);
        groups.entry(key).or_default()[slot] = r.rank();
    }
    groups
        .into_iter()
        .filter_map(|(key, [b1, b2, b3])| {
            let (b1, b2, b3) = (b1?, b2?, b3?);
            (b3 > b2 + 1 || b2 + 1 > b1 + 2).then(|| format!("{key}: bddc1={b1} bddc2={b2} bddc3={b3}"))
        })
        .collect()
}

pub const CSV_COLUMNS: [&str; 11] = [
    "problem",
    "epsilon",
    "degree",
    "nsub_x",
    "nsub_y",
    "ratio",
    "variant",
    "iterations",
    "converged",
    "true_residual",
    "seconds",
];

const DIAG_COLUMNS: [&str; 4] = ["gamma", "c_est", "big_c_est", "envelope_ratio"];

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

/// One row per case in the fixed column order; diagnostics and error
/// messages go in optional trailing columns.
pub fn write_csv(results: &[CaseResult], w: impl Write) -> Result<()> {
    let with_diag = results.iter().any(|r| r.diagnostics.is_some());
    let with_err = results.iter().any(|r| r.error.is_some());
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    if with_diag {
        header.extend(DIAG_COLUMNS);
    }
    if with_err {
        header.push("error");
    }
    wr.write_record(&header).map_err(csv_err)?;
    for r in results {
        let p = r.point;
        let mut rec = vec![
            p.problem.to_string(),
            p.epsilon.to_string(),
            p.degree.to_string(),
            p.grid.nx.to_string(),
            p.grid.ny.to_string(),
            p.ratio.to_string(),
            p.variant.to_string(),
            r.cell(),
            r.converged.to_string(),
            r.true_residual.to_string(),
            r.seconds.to_string(),
        ];
        if with_diag {
            match &r.diagnostics {
                Some(d) => {
                    rec.extend([d.gamma.to_string(), d.c_est.to_string(), d.big_c_est.to_string()]);
                    rec.push(d.envelope_ratio.map(|v| v.to_string()).unwrap_or_default());
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        if with_err {
            rec.push(r.error.clone().unwrap_or_default());
        }
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Inverse of [`write_csv`] (residual histories are not stored).
pub fn read_csv(r: impl Read) -> Result<Vec<CaseResult>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(csv_err)?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut idx = Vec::new();
    for c in CSV_COLUMNS {
        idx.push(col(c).ok_or_else(|| Error::Parse(format!("csv: missing column '{c}'")))?);
    }
    let diag_idx: Option<Vec<usize>> = DIAG_COLUMNS.iter().map(|c| col(c)).collect();
    let err_idx = col("error");
    let num = |s: &str, what: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("csv: bad {what} '{s}'"))) };
    let int = |s: &str, what: &str| -> Result<usize> { s.parse().map_err(|_| Error::Parse(format!("csv: bad {what} '{s}'"))) };
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| rec.get(idx[i]).unwrap_or("");
        let point = CasePoint {
            problem: f(0).parse()?,
            epsilon: num(f(1), "epsilon")?,
            degree: int(f(2), "degree")?,
            grid: Grid {
                nx: int(f(3), "nsub_x")?,
                ny: int(f(4), "nsub_y")?,
            },
            ratio: int(f(5), "ratio")?,
            variant: f(6).parse()?,
        };
        let cell = f(7);
        let iterations = match cell {
            "error" => 0,
            c => int(c.trim_start_matches('>'), "iterations")?,
        };
        let error = err_idx.and_then(|i| rec.get(i)).filter(|s| !s.is_empty()).map(str::to_string);
        let diagnostics = match &diag_idx {
            Some(d) if !rec.get(d[0]).unwrap_or("").is_empty() => {
                let g = |i: usize| rec.get(d[i]).unwrap_or("");
                Some(CaseDiagnostics {
                    gamma: num(g(0), "gamma")?,
                    c_est: num(g(1), "c_est")?,
                    big_c_est: num(g(2), "big_c_est")?,
                    envelope_ratio: if g(3).is_empty() { None } else { Some(num(g(3), "envelope_ratio")?) },
                })
            }
            _ => None,
        };
        out.push(CaseResult {
            point,
            iterations,
            converged: f(8) == "true",
            true_residual: num(f(9), "true_residual")?,
            seconds: num(f(10), "seconds")?,
            error,
            diagnostics,
            history: Vec::new(),
        });
    }
    Ok(out)
}

fn eps_label(e: f64) -> String {
    let exp = e.log10();
    if (exp - exp.round()).abs() < 1e-9 {
        format!("1e{}", exp.round() as i32)
    } else {
        format!("{e:e}")
    }
}

/// Aligned text table per degree: rows are ε, column groups are variants,
/// columns inside a group are the (grid, H/h) points.
pub fn format_table(results: &[CaseResult]) -> String {
    let mut degrees: Vec<usize> = results.iter().map(|r| r.point.degree).collect();
    degrees.dedup();
    degrees.sort_unstable();
    degrees.dedup();
    let mut out = String::new();
    for k in degrees {
        let rows: Vec<&CaseResult> = results.iter().filter(|r| r.point.degree == k).collect();
        let mut variants = Vec::new();
        let mut cols = Vec::new();
        let mut eps = Vec::new();
        for r in &rows {
            if !variants.contains(&r.point.variant) {
                variants.push(r.point.variant);
            }
            let c = (r.point.grid, r.point.ratio);
            if !cols.contains(&c) {
                cols.push(c);
            }
            if !eps.iter().any(|e: &f64| e.to_bits() == r.point.epsilon.to_bits()) {
                eps.push(r.point.epsilon);
            }
        }
        let vary_grid = cols.iter().any(|c| c.0 != cols[0].0);
        let vary_ratio = cols.iter().any(|c| c.1 != cols[0].1);
        let col_label = |c: &(Grid, usize)| match (vary_grid, vary_ratio) {
            (true, false) => c.0.to_string(),
            (false, true) => format!("H/h={}", c.1),
            _ => format!("{} H/h={}", c.0, c.1),
        };
        let w = cols.iter().map(|c| col_label(c).len()).max().unwrap_or(3).max(5);
        let first = format!("eps (deg={k})");
        let fw = first.len().max(8);
        let mut line = format!("{first:<fw$}");
        for v in &variants {
            let gw = cols.len() * (w + 1) - 1;
            line += &format!(" | {:^gw$}", v.to_string());
        }
        out += &line;
        out.push('\n');
        let mut line = format!("{:<fw$}", "");
        for _ in &variants {
            line += " |";
            for c in &cols {
                line += &format!(" {:>w$}", col_label(c));
            }
        }
        out += line.trim_end();
        out.push('\n');
        out += &"-".repeat(line.len());
        out.push('\n');
        for &e in &eps {
            let mut line = format!("{:<fw$}", eps_label(e));
            for v in &variants {
                line += " |";
                for c in &cols {
                    let cell = rows
                        .iter()
                        .find(|r| r.point.epsilon.to_bits() == e.to_bits() && r.point.variant == *v && (r.point.grid, r.point.ratio) == *c)
                        .map(|r| r.cell())
                        .unwrap_or_default();
                    line += &format!(" {:>w$}", cell);
                }
            }
            out += &line;
            out.push('\n');
        }
        out.push('\n');
    }
    let bad = monotonicity_violations(results);
    if !bad.is_empty() {
        out += "monotonicity violations (bddc3 <= bddc2 + 1 <= bddc1 + 2):\n";
        for b in bad {
            out += &format!("  {b}\n");
        }
    }
    out
}

/// How the convergence study solves the trace system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSolver {
    Direct,
    Gmres(Variant),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub n_dofs: usize,
    pub error: f64,
    /// observed order against the previous row
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub degree: usize,
    pub epsilon: f64,
    pub rows: Vec<ConvergenceRow>,
    /// least-squares slope of `log error` against `log h`
    pub slope: f64,
}

/// Manufactured-solution L² errors on `grid` subdomains with each of the
/// given `ratios` (so `h = 2 / (grid.nx · ratio)`).
pub fn convergence_study(
    epsilon: f64,
    beta: ManufacturedBeta,
    degree: usize,
    grid: Grid,
    ratios: &[usize],
    diagonal: Diagonal,
    solver: TraceSolver,
) -> Result<ConvergenceStudy> {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &ratio in ratios {
        let mesh = build_structured_mesh(grid.nx, grid.ny, ratio, diagonal)?;
        let h = mesh.h;
        let disc = Discretization::new(mesh, problem_manufactured(epsilon, beta), degree)?;
        let lambda = match solver {
            TraceSolver::Direct => crate::assembly::assemble_trace_system(&disc).direct_solve()?,
            TraceSolver::Gmres(v) => {
                let iface = InterfaceOperator::new(&disc)?;
                let pre = BddcPreconditioner::new(&disc, &iface, v)?;
                let opts = GmresOptions {
                    tol: 1e-12,
                    ..Default::default()
                };
                let (x, rep) = gmres(&|u| iface.apply(u), &|u| pre.apply(u), &iface.rhs, &opts);
                if !rep.converged {
                    return Err(Error::InvalidConfig(format!("GMRES did not converge at ratio {ratio}")));
                }
                iface.complete(&x)
            }
        };
        let error = disc.l2_error(&lambda, &manufactured_exact)?;
        let rate = rows.last().map(|p| (p.error / error).ln() / (p.h / h).ln());
        rows.push(ConvergenceRow {
            h,
            n_dofs: disc.n_dofs(),
            error,
            rate,
        });
    }
    let slope = fit_slope(&rows.iter().map(|r| (r.h.ln(), r.error.ln())).collect::<Vec<_>>());
    Ok(ConvergenceStudy {
        degree,
        epsilon,
        rows,
        slope,
    })
}

/// Least-squares slope of `(x, y)` pairs.
pub fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
