//! Unrestarted left-preconditioned GMRES.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bddc::BddcPreconditioner;
use crate::dd::InterfaceOperator;
use crate::linalg::{dot, norm2};

/// Which residual the stopping test looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stopping {
    /// `‖M⁻¹(b − A x)‖ ≤ tol ‖M⁻¹ b‖`
    #[default]
    Preconditioned,
    /// `‖b − A x‖ ≤ tol ‖b‖`, one extra operator apply per iteration
    TrueResidual,
}

impl std::str::FromStr for Stopping {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "preconditioned" => Ok(Self::Preconditioned),
            "true-residual" | "true" => Ok(Self::TrueResidual),
            _ => Err(crate::error::Error::Parse(format!("unknown stopping rule '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmresOptions {
    pub tol: f64,
    pub maxit: usize,
    pub stopping: Stopping,
    /// keep the Arnoldi vectors in the report
    pub keep_basis: bool,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            maxit: 1000,
            stopping: Stopping::Preconditioned,
            keep_basis: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// relative preconditioned residual, one entry per iteration plus the
    /// initial one
    pub history: Vec<f64>,
    pub converged: bool,
    pub seconds: f64,
    /// `‖b − A x‖ / ‖b‖`
    pub true_residual: f64,
    #[serde(skip)]
    pub basis: Vec<Vec<f64>>,
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else if a.abs() < b.abs() {
        let t = a / b;
        let s = 1.0 / (1.0 + t * t).sqrt();
        (s * t, s)
    } else {
        let t = b / a;
        let c = 1.0 / (1.0 + t * t).sqrt();
        (c, c * t)
    }
}

/// Back substitution on the rotated Hessenberg columns.
fn least_squares(h: &[Vec<f64>], g: &[f64], m: usize) -> Vec<f64> {
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = g[i];
        for j in i + 1..m {
            s -= h[j][i] * y[j];
        }
        y[i] = s / h[i][i];
    }
    y
}

fn combine(basis: &[Vec<f64>], y: &[f64], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (v, &c) in basis.iter().zip(y) {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi += c * vi;
        }
    }
    x
}

fn true_residual(op: &dyn Fn(&[f64]) -> Vec<f64>, b: &[f64], x: &[f64]) -> f64 {
    let nb = norm2(b);
    if nb == 0.0 {
        return norm2(x);
    }
    let ax = op(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    norm2(&r) / nb
}

/// Solve `M⁻¹ A x = M⁻¹ b` from a zero initial guess.
pub fn gmres(
    op: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: &GmresOptions,
) -> (Vec<f64>, SolveReport) {
    let start = Instant::now();
    let n = b.len();
    let r0 = precond(b);
    let beta = norm2(&r0);
    let mut report = SolveReport {
        history: vec![1.0],
        ..Default::default()
    };
    if beta == 0.0 {
        report.converged = true;
        report.history = vec![0.0];
        report.true_residual = true_residual(op, b, &vec![0.0; n]);
        report.seconds = start.elapsed().as_secs_f64();
        return (vec![0.0; n], report);
    }
    let nb = norm2(b);
    let mut basis: Vec<Vec<f64>> = vec![r0.iter().map(|v| v / beta).collect()];
    // columns of the (rotated) Hessenberg matrix
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut rot: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta];
    let mut x = vec![0.0; n];
    let mut have_x = false;

    for j in 0..opts.maxit {
        let mut w = precond(&op(&basis[j]));
        let wnorm0 = norm2(&w);
        let mut col = vec![0.0; j + 2];
        for _ in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                col[i] += c;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        let hn = norm2(&w);
        col[j + 1] = hn;
        for (i, &(c, s)) in rot.iter().enumerate() {
            let (a, bb) = (col[i], col[i + 1]);
            col[i] = c * a + s * bb;
            col[i + 1] = -s * a + c * bb;
        }
        let (c, s) = givens(col[j], col[j + 1]);
        col[j] = c * col[j] + s * col[j + 1];
        col[j + 1] = 0.0;
        rot.push((c, s));
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);
        h.push(col);
        let rel = g[j + 1].abs() / beta;
        report.history.push(rel);
        report.iterations = j + 1;
        let breakdown = hn <= 1e-14 * wnorm0.max(f64::MIN_POSITIVE);

        let done = match opts.stopping {
            Stopping::Preconditioned => rel <= opts.tol,
            Stopping::TrueResidual => {
                let y = least_squares(&h, &g, j + 1);
                x = combine(&basis, &y, n);
                have_x = true;
                true_residual(op, b, &x) <= opts.tol || nb == 0.0
            }
        };
        if done || breakdown {
            report.converged = true;
            if !have_x || breakdown {
                let y = least_squares(&h, &g, j + 1);
                x = combine(&basis, &y, n);
            }
            have_x = true;
            break;
        }
        basis.push(w.iter().map(|v| v / hn).collect());
        have_x = false;
    }
    if !have_x {
        let m = h.len();
        let y = least_squares(&h, &g, m);
        x = combine(&basis[..m], &y, n);
    }
    report.true_residual = true_residual(op, b, &x);
    report.seconds = start.elapsed().as_secs_f64();
    if opts.keep_basis {
        report.basis = basis;
    }
    (x, report)
}

/// `T = M⁻¹ Ŝ_Γ`
pub fn preconditioned_operator<'a>(
    iface: &'a InterfaceOperator,
    pre: &'a BddcPreconditioner,
) -> impl Fn(&[f64]) -> Vec<f64> + 'a {
    move |v| pre.apply(&iface.apply(v))
}

/// GMRES on the interface problem `Ŝ_Γ λ_Γ = b_Γ`.
pub fn solve_interface(
    iface: &InterfaceOperator,
    pre: &BddcPreconditioner,
    opts: &GmresOptions,
) -> (Vec<f64>, SolveReport) {
    gmres(&|v| iface.apply(v), &|v| pre.apply(v), &iface.rhs, opts)
}
