//! Hybridizable discontinuous Galerkin (HDG) discretization of
//!
//! ```text
//! −ε Δu + β·∇u = f  in Ω = (−1, 1)²,   u = g  on ∂Ω
//! ```
//!
//! condensed onto the numerical trace, split into rectangular subdomains and
//! solved with BDDC-preconditioned GMRES on the interface.
//!
//! Pipeline: [`mesh`] builds the triangulation and subdomain interface,
//! [`hdg`] the element blocks, [`assembly`] the condensed trace system,
//! [`dd`] the subdomain Robin systems and `Ŝ_Γ`, [`bddc`] the preconditioners
//! and [`krylov`] the GMRES driver. [`experiment`] wires these into the
//! benchmark sweeps used by the CLI.
//!
//! ```no_run
//! use hdgbddc::{build_structured_mesh, problem_thermal, Diagonal, Discretization};
//! use hdgbddc::{solve_interface, BddcPreconditioner, GmresOptions, InterfaceOperator, Variant};
//!
//! let mesh = build_structured_mesh(4, 4, 6, Diagonal::default()).unwrap();
//! let disc = Discretization::new(mesh, problem_thermal(1.0), 0).unwrap();
//! let iface = InterfaceOperator::new(&disc).unwrap();
//! let pre = BddcPreconditioner::new(&disc, &iface, Variant::Bddc3).unwrap();
//! let (lambda_g, report) = solve_interface(&iface, &pre, &GmresOptions::default());
//! println!("{} iterations", report.iterations);
//! let lambda = iface.complete(&lambda_g);
//! # let _ = lambda;
//! ```

pub mod assembly;
pub mod bddc;
pub mod dd;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod fespace;
pub mod hdg;
pub mod krylov;
pub mod linalg;
pub mod mesh;

pub use assembly::{assemble_trace_system, Discretization, FormValues, TraceSystem};
pub use bddc::{BddcPreconditioner, PartialVector, PrimalConstraintSet, Variant};
pub use dd::{build_subdomains, InterfaceOperator, SubdomainSystem};
pub use diagnostics::{envelope, field_of_values, gamma_stat, jump_seminorm, norm_h, FieldOfValues, InterfaceForms};
pub use error::{Error, Result};
pub use experiment::{
    build_problem, convergence_study, problem_manufactured, problem_rotating, problem_thermal, run_case, run_sweep,
    BenchmarkConfig, CasePoint, CaseResult, ConvergenceStudy, Grid, ManufacturedBeta, OutputFormat, ProblemKind,
    TraceSolver,
};
pub use hdg::{ProblemSpec, TauStrategy};
pub use krylov::{gmres, solve_interface, GmresOptions, SolveReport, Stopping};
pub use mesh::{build_structured_mesh, Diagonal, Mesh2d, Point, SubdomainEdge};
