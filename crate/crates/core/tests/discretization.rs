mod support;

use faer::linalg::solvers::Solve;

use hdgbddc::experiment::{manufactured_exact, problem_manufactured};
use hdgbddc::hdg::l2_error_sq;
use hdgbddc::mesh::Diagonal;
use hdgbddc::{assemble_trace_system, problem_rotating, problem_thermal, InterfaceOperator, ManufacturedBeta};
use support::{disc, rel, saddle_solve};

#[test]
fn condensed_solve_matches_saddle_system() {
    for k in 0..=2 {
        for eps in [1.0, 1e-6] {
            for (name, spec) in [("thermal", problem_thermal(eps)), ("rotating", problem_rotating(eps))] {
                let d = disc(2, 2, k, spec, Diagonal::Alternating);
                let oracle = saddle_solve(&d);
                let lambda = assemble_trace_system(&d).direct_solve().unwrap();
                let e = rel(&lambda, &oracle.lambda);
                assert!(e < 1e-10, "{name} k={k} eps={eps}: {e:e}");
                let rec = d.recover(&lambda).unwrap();
                for (r, u) in rec.iter().zip(&oracle.u) {
                    assert!(rel(&r.u, u) < 1e-9 || rel(&r.u, u) * u.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10);
                }
            }
        }
    }
}

#[test]
fn interface_solve_matches_saddle_system() {
    let d = disc(2, 3, 1, problem_rotating(1e-3), Diagonal::Ne);
    let iface = InterfaceOperator::new(&d).unwrap();
    let s = iface.dense();
    let b = faer::Mat::from_fn(iface.dim(), 1, |i, _| iface.rhs[i]);
    let x = s.partial_piv_lu().solve(&b);
    let lg: Vec<f64> = (0..iface.dim()).map(|i| x[(i, 0)]).collect();
    let full = iface.complete(&lg);
    let oracle = saddle_solve(&d);
    assert!(rel(&full, &oracle.lambda) < 1e-10);
}

#[test]
fn saddle_error_agrees_with_condensed_error() {
    let d = disc(2, 2, 1, problem_manufactured(1.0, ManufacturedBeta::Zero), Diagonal::Alternating);
    let oracle = saddle_solve(&d);
    let mut sq = 0.0;
    for (t, u) in oracle.u.iter().enumerate() {
        let el = d.element(t).unwrap();
        sq += l2_error_sq(&el, &d.spaces, u, &manufactured_exact);
    }
    let lambda = assemble_trace_system(&d).direct_solve().unwrap();
    let e = d.l2_error(&lambda, &manufactured_exact).unwrap();
    assert!((sq.sqrt() - e).abs() < 1e-10 * e);
}

#[test]
fn constant_data_reproduced_exactly() {
    // u ≡ 1 solves every problem with divergence-free β and zero forcing
    for k in 0..=2 {
        let mut spec = problem_rotating(1e-2);
        spec.g = std::sync::Arc::new(|_: [f64; 2]| 1.0);
        let d = disc(2, 2, k, spec, Diagonal::Nw);
        let lambda = assemble_trace_system(&d).direct_solve().unwrap();
        let nk = k + 1;
        for (i, v) in lambda.iter().enumerate() {
            let want = if i % nk == 0 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-10, "k={k} dof {i}: {v}");
        }
    }
}
