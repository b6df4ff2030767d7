//! Fixtures shared by the solver benchmarks.

use hdgbddc::{build_problem, build_structured_mesh, Diagonal, Discretization, InterfaceOperator, ManufacturedBeta, ProblemKind};

/// A benchmark case: problem, ε, degree, `n × n` subdomains and `H/h`.
#[derive(Debug, Clone, Copy)]
pub struct Case {
    pub problem: ProblemKind,
    pub epsilon: f64,
    pub degree: usize,
    pub nsub: usize,
    pub ratio: usize,
}

impl Case {
    pub fn label(&self) -> String {
        format!("{}-eps{:e}-k{}-{}x{}-r{}", self.problem, self.epsilon, self.degree, self.nsub, self.nsub, self.ratio)
    }

    pub fn discretize(&self) -> Discretization {
        let mesh = build_structured_mesh(self.nsub, self.nsub, self.ratio, Diagonal::default()).expect("valid mesh");
        Discretization::new(mesh, build_problem(self.problem, self.epsilon, ManufacturedBeta::Zero), self.degree)
            .expect("valid discretization")
    }

    pub fn setup(&self) -> (Discretization, InterfaceOperator) {
        let disc = self.discretize();
        let iface = InterfaceOperator::new(&disc).expect("subdomain factorization");
        (disc, iface)
    }
}

pub const CASES: [Case; 3] = [
    Case {
        problem: ProblemKind::Thermal,
        epsilon: 1.0,
        degree: 0,
        nsub: 8,
        ratio: 6,
    },
    Case {
        problem: ProblemKind::Rotating,
        epsilon: 1e-6,
        degree: 0,
        nsub: 8,
        ratio: 6,
    },
    Case {
        problem: ProblemKind::Rotating,
        epsilon: 1e-3,
        degree: 2,
        nsub: 4,
        ratio: 6,
    },
];
