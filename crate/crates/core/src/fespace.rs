//! Polynomial bases, quadrature rules and the trace-space DOF map.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::mesh::{EdgeClass, Mesh2d, Point, SubdomainEdge};

/// Highest polynomial degree the quadrature tables are built for.
pub const MAX_EXACTNESS: usize = 40;

/// Legendre polynomials `P_0..=P_k` at `t ∈ [-1, 1]`.
pub fn legendre(k: usize, t: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(k + 1);
    p.push(1.0);
    if k >= 1 {
        p.push(t);
    }
    for n in 1..k {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * t * p[n] - nf * p[n - 1]) / (nf + 1.0);
        p.push(next);
    }
    p
}

/// Gauss–Legendre rule with `n` points on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let p = legendre(n, t);
            let dp = n as f64 * (t * p[n] - p[n - 1]) / (t * t - 1.0);
            let dt = p[n] / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let p = legendre(n, t);
        let dp = n as f64 * (t * p[n] - p[n - 1]) / (t * t - 1.0);
        x[n - 1 - i] = t;
        w[n - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

/// Gauss–Legendre rule on the reference interval `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

/// Rule on the reference triangle with vertices `(0,0), (1,0), (0,1)`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadKind {
    Triangle,
    Edge,
}

#[derive(Debug, Clone)]
pub enum QuadRule {
    Triangle(TriangleRule),
    Edge(EdgeRule),
}

pub fn quadrature_rule(kind: QuadKind, exactness: usize) -> Result<QuadRule> {
    Ok(match kind {
        QuadKind::Triangle => QuadRule::Triangle(TriangleRule::new(exactness)?),
        QuadKind::Edge => QuadRule::Edge(EdgeRule::new(exactness)?),
    })
}

fn check_exactness(exactness: usize) -> Result<()> {
    if exactness > MAX_EXACTNESS {
        return Err(Error::Unsupported(format!(
            "quadrature exactness {exactness} exceeds {MAX_EXACTNESS}"
        )));
    }
    Ok(())
}

impl EdgeRule {
    pub fn new(exactness: usize) -> Result<Self> {
        check_exactness(exactness)?;
        let n = exactness / 2 + 1;
        let (points, weights) = gauss_legendre(n);
        Ok(Self {
            points,
            weights,
            exactness,
        })
    }
}

impl TriangleRule {
    pub fn new(exactness: usize) -> Result<Self> {
        check_exactness(exactness)?;
        match exactness {
            0 | 1 => Ok(Self {
                points: vec![[1.0 / 3.0, 1.0 / 3.0]],
                weights: vec![0.5],
                exactness,
            }),
            2 => Ok(Self {
                points: vec![[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]],
                weights: vec![1.0 / 6.0; 3],
                exactness,
            }),
            _ => {
                // collapsed tensor product: x = u (1 - v), y = v, Jacobian (1 - v)
                let n = (exactness + 2) / 2 + 1;
                let (g, w) = gauss_legendre(n);
                let mut points = Vec::with_capacity(n * n);
                let mut weights = Vec::with_capacity(n * n);
                for (&gv, &wv) in g.iter().zip(&w) {
                    let v = 0.5 * (gv + 1.0);
                    for (&gu, &wu) in g.iter().zip(&w) {
                        let u = 0.5 * (gu + 1.0);
                        points.push([u * (1.0 - v), v]);
                        weights.push(0.25 * wu * wv * (1.0 - v));
                    }
                }
                Ok(Self {
                    points,
                    weights,
                    exactness,
                })
            }
        }
    }
}

/// Legendre basis on a mesh edge parametrized by `t ∈ [-1, 1]` along the
/// global edge orientation.
#[derive(Debug, Clone)]
pub struct EdgeBasis {
    pub degree: usize,
}

impl EdgeBasis {
    pub fn new(degree: usize) -> Self {
        Self { degree }
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        legendre(self.degree, t)
    }

    /// `∫_{-1}^{1} P_n² dt`
    pub fn mass_diagonal(&self, n: usize) -> f64 {
        2.0 / (2.0 * n as f64 + 1.0)
    }
}

/// Orthonormal basis of `P_k` on the reference triangle, obtained by
/// orthonormalizing centroid-centered monomials.
#[derive(Debug, Clone)]
pub struct TriBasis {
    pub degree: usize,
    exponents: Vec<(i32, i32)>,
    /// row `i` holds the monomial coefficients of basis function `i`
    coeffs: Vec<Vec<f64>>,
}

pub fn scalar_dim(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

impl TriBasis {
    pub fn new(degree: usize) -> Result<Self> {
        let mut exponents = Vec::new();
        for total in 0..=degree as i32 {
            for b in 0..=total {
                exponents.push((total - b, b));
            }
        }
        let d = exponents.len();
        let gram = monomial_gram(&exponents, degree)?;
        // Cholesky G = L Lᵀ, then basis = L⁻¹ · monomials
        let mut l = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..=i {
                let mut s = gram[i][j];
                for p in 0..j {
                    s -= l[i][p] * l[j][p];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::Factorization("monomial Gram matrix not positive".into()));
                    }
                    l[i][i] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        let mut inv = vec![vec![0.0; d]; d];
        for col in 0..d {
            for i in 0..d {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for p in 0..i {
                    s -= l[i][p] * inv[p][col];
                }
                inv[i][col] = s / l[i][i];
            }
        }
        Ok(Self {
            degree,
            exponents,
            coeffs: inv,
        })
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    fn monomials(&self, xi: Point) -> (Vec<f64>, Vec<Point>) {
        let (x, y) = (xi[0] - 1.0 / 3.0, xi[1] - 1.0 / 3.0);
        let pw = |v: f64, e: i32| if e <= 0 { 1.0 } else { v.powi(e) };
        let mut val = Vec::with_capacity(self.dim());
        let mut grad = Vec::with_capacity(self.dim());
        for &(a, b) in &self.exponents {
            val.push(pw(x, a) * pw(y, b));
            let dx = if a > 0 { a as f64 * pw(x, a - 1) * pw(y, b) } else { 0.0 };
            let dy = if b > 0 { b as f64 * pw(x, a) * pw(y, b - 1) } else { 0.0 };
            grad.push([dx, dy]);
        }
        (val, grad)
    }

    /// Values at a reference point.
    pub fn eval(&self, xi: Point) -> Vec<f64> {
        let (m, _) = self.monomials(xi);
        self.coeffs.iter().map(|row| row.iter().zip(&m).map(|(c, v)| c * v).sum()).collect()
    }

    /// Values and reference gradients at a reference point.
    pub fn eval_with_grad(&self, xi: Point) -> (Vec<f64>, Vec<Point>) {
        let (m, g) = self.monomials(xi);
        let mut val = Vec::with_capacity(self.dim());
        let mut grad = Vec::with_capacity(self.dim());
        for row in &self.coeffs {
            let mut v = 0.0;
            let mut gx = 0.0;
            let mut gy = 0.0;
            for ((c, mv), mg) in row.iter().zip(&m).zip(&g) {
                v += c * mv;
                gx += c * mg[0];
                gy += c * mg[1];
            }
            val.push(v);
            grad.push([gx, gy]);
        }
        (val, grad)
    }
}

fn monomial_gram(exponents: &[(i32, i32)], degree: usize) -> Result<Vec<Vec<f64>>> {
    let rule = TriangleRule::new(2 * degree)?;
    let d = exponents.len();
    let mut g = vec![vec![0.0; d]; d];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let (x, y) = (p[0] - 1.0 / 3.0, p[1] - 1.0 / 3.0);
        let m: Vec<f64> = exponents.iter().map(|&(a, b)| x.powi(a) * y.powi(b)).collect();
        for i in 0..d {
            for j in 0..d {
                g[i][j] += w * m[i] * m[j];
            }
        }
    }
    Ok(g)
}

/// Classification of a global trace DOF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofClass {
    /// interior to subdomain `0`
    Interior(usize),
    /// on subdomain edge `0`
    Interface(usize),
}

/// Global numbering of the trace space `Λ_k`.
///
/// Interior DOFs come first, grouped by subdomain; interface DOFs follow,
/// grouped by subdomain edge. Interface index `g` corresponds to global DOF
/// `n_interior + g`.
#[derive(Debug, Clone)]
pub struct TraceDofMap {
    pub degree: usize,
    edge_first: Vec<Option<usize>>,
    n_dofs: usize,
    n_interior: usize,
    interior_ranges: Vec<Range<usize>>,
    interface_blocks: Vec<Range<usize>>,
    interface_owner: Vec<usize>,
}

pub fn build_trace_dof_map(mesh: &Mesh2d, interface: &[SubdomainEdge], k: usize) -> TraceDofMap {
    let nb = k + 1;
    let nsub = mesh.n_subdomains();
    let mut per_sub: Vec<Vec<usize>> = vec![Vec::new(); nsub];
    for (e, class) in mesh.edge_class.iter().enumerate() {
        if *class == EdgeClass::SubdomainInterior {
            per_sub[mesh.triangle_subdomain[mesh.edge_triangles[e].0]].push(e);
        }
    }
    let mut edge_first = vec![None; mesh.edges.len()];
    let mut next = 0;
    let mut interior_ranges = Vec::with_capacity(nsub);
    for list in &per_sub {
        let start = next;
        for &e in list {
            edge_first[e] = Some(next);
            next += nb;
        }
        interior_ranges.push(start..next);
    }
    let n_interior = next;
    let mut interface_blocks = Vec::with_capacity(interface.len());
    let mut interface_owner = Vec::new();
    for (s, se) in interface.iter().enumerate() {
        let start = next - n_interior;
        for &e in &se.mesh_edges {
            edge_first[e] = Some(next);
            next += nb;
        }
        interface_blocks.push(start..next - n_interior);
        interface_owner.extend(std::iter::repeat_n(s, se.mesh_edges.len() * nb));
    }
    debug_assert!(mesh
        .edge_class
        .iter()
        .zip(&edge_first)
        .all(|(c, f)| (*c == EdgeClass::Boundary) == f.is_none()));
    TraceDofMap {
        degree: k,
        edge_first,
        n_dofs: next,
        n_interior,
        interior_ranges,
        interface_blocks,
        interface_owner,
    }
}

impl TraceDofMap {
    pub fn dofs_per_edge(&self) -> usize {
        self.degree + 1
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_interface(&self) -> usize {
        self.n_dofs - self.n_interior
    }

    /// Global DOF range of a mesh edge, `None` on `∂Ω`.
    pub fn edge_dofs(&self, edge: usize) -> Option<Range<usize>> {
        self.edge_first[edge].map(|f| f..f + self.degree + 1)
    }

    pub fn interior_range(&self, subdomain: usize) -> Range<usize> {
        self.interior_ranges[subdomain].clone()
    }

    /// Interface-index range of a subdomain edge.
    pub fn interface_block(&self, subdomain_edge: usize) -> Range<usize> {
        self.interface_blocks[subdomain_edge].clone()
    }

    pub fn n_subdomain_edges(&self) -> usize {
        self.interface_blocks.len()
    }

    pub fn classify(&self, dof: usize) -> DofClass {
        if dof >= self.n_interior {
            DofClass::Interface(self.interface_owner[dof - self.n_interior])
        } else {
            let s = self
                .interior_ranges
                .partition_point(|r| r.end <= dof);
            DofClass::Interior(s)
        }
    }
}

/// L² projection of `g` onto `P_k` of a boundary edge, in the edge Legendre
/// basis (global orientation `a → b`).
pub fn project_boundary_data(g: &dyn Fn(Point) -> f64, edge: [Point; 2], k: usize) -> Vec<f64> {
    let rule = EdgeRule::new(2 * k + 8).expect("edge rule within table");
    let [a, b] = edge;
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let half = [0.5 * (b[0] - a[0]), 0.5 * (b[1] - a[1])];
    let mut c = vec![0.0; k + 1];
    for (&t, &w) in rule.points.iter().zip(&rule.weights) {
        let x = [mid[0] + t * half[0], mid[1] + t * half[1]];
        let gv = g(x);
        for (m, p) in legendre(k, t).into_iter().enumerate() {
            c[m] += w * gv * p;
        }
    }
    for (m, cm) in c.iter_mut().enumerate() {
        *cm *= (2.0 * m as f64 + 1.0) / 2.0;
    }
    c
}
