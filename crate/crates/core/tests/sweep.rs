use hdgbddc::experiment::{format_table, read_csv, write_csv, CaseResult};
use hdgbddc::{run_case, run_sweep, BenchmarkConfig, CasePoint, Grid, ProblemKind, Variant};

fn point(problem: ProblemKind, epsilon: f64, n: usize, variant: Variant) -> CasePoint {
    CasePoint {
        problem,
        epsilon,
        degree: 0,
        grid: Grid::square(n),
        ratio: 6,
        variant,
    }
}

#[test]
fn thermal_case_near_published_count() {
    let r = run_case(&BenchmarkConfig::default(), point(ProblemKind::Thermal, 1.0, 8, Variant::Bddc3));
    assert!(r.converged && r.error.is_none());
    assert!(r.iterations.abs_diff(10) <= 3, "{}", r.iterations);
    assert!(r.true_residual.is_finite() && r.true_residual < 1e-8);
}

#[test]
fn all_primal_takes_one_iteration() {
    for eps in [1.0, 1e-3, 1e-6] {
        for problem in [ProblemKind::Thermal, ProblemKind::Rotating] {
            let mut p = point(problem, eps, 2, Variant::AllPrimal);
            p.ratio = 3;
            let r = run_case(&BenchmarkConfig::default(), p);
            assert_eq!(r.cell(), "1", "{problem} eps={eps}");
        }
    }
}

#[test]
fn table_one_layout() {
    let cfg = BenchmarkConfig::table(1).unwrap();
    let results: Vec<CaseResult> = cfg
        .cases()
        .into_iter()
        .map(|point| CaseResult {
            point,
            iterations: 7,
            converged: true,
            true_residual: 1e-11,
            seconds: 0.0,
            error: None,
            diagnostics: None,
            history: Vec::new(),
        })
        .collect();
    let text = format_table(&results);
    let blocks: Vec<&str> = text.split("\n\n").filter(|b| !b.trim().is_empty()).collect();
    assert_eq!(blocks.len(), 3);
    for b in blocks {
        let body: Vec<&str> = b.lines().skip(3).collect();
        assert_eq!(body.len(), 7);
        for line in body {
            assert_eq!(line.split_whitespace().filter(|c| *c == "7").count(), 12);
        }
    }
}

#[test]
fn sweep_round_trips_through_csv() {
    let cfg = BenchmarkConfig {
        problem: ProblemKind::Rotating,
        epsilons: vec![1.0, 1e-4],
        subdomains: vec![Grid::square(2), Grid { nx: 3, ny: 2 }],
        ratios: vec![3],
        diagnostics: true,
        ..Default::default()
    };
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 3);
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!(a.point, b.point);
        assert_eq!(a.cell(), b.cell());
        assert_eq!(a.diagnostics, b.diagnostics);
    }
}

#[test]
fn empty_lists_are_rejected() {
    let cfg = BenchmarkConfig {
        epsilons: vec![],
        ..Default::default()
    };
    assert!(run_sweep(&cfg).is_err());
    assert!(BenchmarkConfig::from_json(r#"{"tol": 2.0}"#).is_err());
}
