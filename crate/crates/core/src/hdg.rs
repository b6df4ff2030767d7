//! Element-level HDG operators, static condensation, local lifts and
//! interior recovery.
//!
//! Local unknowns are ordered `(q_x, q_y, u)`, each block in the
//! orthonormal [`TriBasis`]. Local trace unknowns are ordered by local edge,
//! `k + 1` Legendre coefficients per edge in the *global* edge orientation, so
//! element blocks scatter into the global trace space without sign changes.

use std::fmt;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fespace::{legendre, EdgeRule, TriBasis, TriangleRule};
use crate::linalg::{dense_inverse, mat_vec, norm1};
use crate::mesh::{Mesh2d, Point};

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Choice of the stabilization parameter `τ_K` on each element edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TauStrategy {
    /// `τ = max(sup_e β·n, 0)`
    #[default]
    Upwind,
    /// upwind value plus `σ ε / h_K`
    UpwindPlusDiffusive { sigma: f64 },
    /// upwind value plus a mesh-independent `τ₀`
    UpwindPlusConstant { tau0: f64 },
}

impl TauStrategy {
    /// Whether the added term keeps `τ − ½β·n` positive on its own.
    fn is_fallback(self) -> bool {
        match self {
            Self::Upwind => false,
            Self::UpwindPlusDiffusive { sigma } => sigma > 0.0,
            Self::UpwindPlusConstant { tau0 } => tau0 > 0.0,
        }
    }
}

/// Coefficients and data of `−ε Δu + β·∇u = f` on `[-1,1]²` with `u = g` on
/// the boundary.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub epsilon: f64,
    pub beta: VectorField,
    pub div_beta: ScalarField,
    pub f: ScalarField,
    pub g: ScalarField,
    pub tau: TauStrategy,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("epsilon", &self.epsilon)
            .field("tau", &self.tau)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        match self.tau {
            TauStrategy::UpwindPlusDiffusive { sigma } if !(sigma >= 0.0) => {
                return Err(Error::InvalidConfig(format!("sigma must be nonnegative, got {sigma}")));
            }
            TauStrategy::UpwindPlusConstant { tau0 } if !(tau0 >= 0.0 && tau0.is_finite()) => {
                return Err(Error::InvalidConfig(format!("tau0 must be nonnegative, got {tau0}")));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn with_tau(mut self, tau: TauStrategy) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

const REF_VERTICES: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Basis values tabulated at one edge quadrature point.
#[derive(Debug, Clone)]
struct EdgePoint {
    /// local parameter in `[-1, 1]` from local vertex `e` to `e + 1`
    s: f64,
    weight: f64,
    xi: Point,
    phi: Vec<f64>,
    /// Legendre values at `s` (local orientation)
    leg: Vec<f64>,
}

/// Reference bases, quadrature rules and tabulated values shared by all
/// elements of one discretization.
#[derive(Debug, Clone)]
pub struct LocalSpaces {
    pub k: usize,
    pub basis: TriBasis,
    pub tri_rule: TriangleRule,
    pub edge_rule: EdgeRule,
    tri_phi: Vec<Vec<f64>>,
    tri_grad: Vec<Vec<Point>>,
    edge_pts: [Vec<EdgePoint>; 3],
}

impl LocalSpaces {
    /// Quadrature exact to degree `2k + 4` on triangles and edges.
    pub fn new(k: usize) -> Result<Self> {
        Self::with_exactness(k, 2 * k + 4)
    }

    pub fn with_exactness(k: usize, exactness: usize) -> Result<Self> {
        let basis = TriBasis::new(k)?;
        let tri_rule = TriangleRule::new(exactness)?;
        let edge_rule = EdgeRule::new(exactness)?;
        let mut tri_phi = Vec::new();
        let mut tri_grad = Vec::new();
        for p in &tri_rule.points {
            let (v, g) = basis.eval_with_grad(*p);
            tri_phi.push(v);
            tri_grad.push(g);
        }
        let edge_pts = std::array::from_fn(|e| {
            let a = REF_VERTICES[e];
            let b = REF_VERTICES[(e + 1) % 3];
            edge_rule
                .points
                .iter()
                .zip(&edge_rule.weights)
                .map(|(&s, &w)| {
                    let xi = [
                        0.5 * (1.0 - s) * a[0] + 0.5 * (1.0 + s) * b[0],
                        0.5 * (1.0 - s) * a[1] + 0.5 * (1.0 + s) * b[1],
                    ];
                    EdgePoint {
                        s,
                        weight: w,
                        xi,
                        phi: basis.eval(xi),
                        leg: legendre(k, s),
                    }
                })
                .collect()
        });
        Ok(Self {
            k,
            basis,
            tri_rule,
            edge_rule,
            tri_phi,
            tri_grad,
            edge_pts,
        })
    }

    /// Dimension of `P_k(K)`.
    pub fn scalar_dim(&self) -> usize {
        self.basis.dim()
    }

    /// Trace unknowns per element.
    pub fn trace_dim(&self) -> usize {
        3 * (self.k + 1)
    }
}

/// Affine geometry of one triangle.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub element: usize,
    pub vertices: [Point; 3],
    pub mesh_edges: [usize; 3],
    /// local edge direction opposite to the global edge orientation
    pub flipped: [bool; 3],
    pub normals: [Point; 3],
    pub edge_lengths: [f64; 3],
    pub area: f64,
    /// element diameter
    pub h: f64,
    jac: [[f64; 2]; 2],
    /// `J⁻ᵀ`
    jit: [[f64; 2]; 2],
}

impl ElementGeometry {
    pub fn new(mesh: &Mesh2d, t: usize) -> Self {
        let vertices = mesh.triangle_points(t);
        let tri = mesh.triangles[t];
        let mesh_edges = mesh.triangle_edges[t];
        let flipped = std::array::from_fn(|e| mesh.edges[mesh_edges[e]][0] != tri[e]);
        let normals = std::array::from_fn(|e| mesh.outward_normal(t, e));
        let edge_lengths = std::array::from_fn(|e| mesh.edge_length(mesh_edges[e]));
        let [a, b, c] = vertices;
        let jac = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let jit = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        Self {
            element: t,
            vertices,
            mesh_edges,
            flipped,
            normals,
            edge_lengths,
            area: 0.5 * det.abs(),
            h: edge_lengths.iter().cloned().fold(0.0, f64::max),
            jac,
            jit,
        }
    }

    pub fn perimeter(&self) -> f64 {
        self.edge_lengths.iter().sum()
    }

    pub fn map(&self, xi: Point) -> Point {
        let a = self.vertices[0];
        [
            a[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            a[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    pub fn physical_grad(&self, g: Point) -> Point {
        [
            self.jit[0][0] * g[0] + self.jit[0][1] * g[1],
            self.jit[1][0] * g[0] + self.jit[1][1] * g[1],
        ]
    }

    /// Endpoints of local edge `e` in local orientation.
    pub fn edge_endpoints(&self, e: usize) -> [Point; 2] {
        [self.vertices[e], self.vertices[(e + 1) % 3]]
    }
}

/// Sign relating a Legendre coefficient in local orientation to the global one.
fn orient(flipped: bool, n: usize) -> f64 {
    if flipped && n % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// `τ` on local edge `e` of an element, and whether `τ − ½β·n` is strictly
/// positive along the whole edge.
pub fn eval_tau(geo: &ElementGeometry, e: usize, spec: &ProblemSpec, spaces: &LocalSpaces) -> Result<(f64, bool)> {
    let n = geo.normals[e];
    let [p0, p1] = geo.edge_endpoints(e);
    let at = |s: f64| [0.5 * (1.0 - s) * p0[0] + 0.5 * (1.0 + s) * p1[0], 0.5 * (1.0 - s) * p0[1] + 0.5 * (1.0 + s) * p1[1]];
    let samples: Vec<f64> = [-1.0, 1.0]
        .into_iter()
        .chain(spaces.edge_rule.points.iter().copied())
        .map(|s| {
            let b = (spec.beta)(at(s));
            b[0] * n[0] + b[1] * n[1]
        })
        .collect();
    let sup = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut tau = sup.max(0.0);
    match spec.tau {
        TauStrategy::Upwind => {}
        TauStrategy::UpwindPlusDiffusive { sigma } => tau += sigma * spec.epsilon / geo.h,
        TauStrategy::UpwindPlusConstant { tau0 } => tau += tau0,
    }
    let scale = 1.0 + samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let inf = samples.iter().map(|bn| tau - 0.5 * bn).fold(f64::INFINITY, f64::min);
    if inf < -1e-12 * scale {
        return Err(Error::Stabilization {
            element: geo.element,
            reason: format!("tau - beta.n/2 = {inf:.3e} < 0 on local edge {e}"),
        });
    }
    Ok((tau, inf > 1e-12 * scale))
}

/// Dense element blocks and the factorized local solver.
#[derive(Debug, Clone)]
pub struct ElementLocal {
    pub geo: ElementGeometry,
    pub tau: [f64; 3],
    pub a: Mat<f64>,
    pub b: Mat<f64>,
    pub c: Mat<f64>,
    pub r: Mat<f64>,
    pub s1: Mat<f64>,
    pub s2: Mat<f64>,
    pub t: Mat<f64>,
    /// `F_h(w) = −(f, w)`
    pub load: Vec<f64>,
    /// `K_loc⁻¹ [Cᵗ; S₁]`
    lift: Mat<f64>,
    /// `K_loc⁻¹ [0; I]`
    load_lift: Mat<f64>,
    /// reciprocal 1-norm condition number of `K_loc`
    pub rcond: f64,
}

/// `(Qμ, Uμ)` coefficient vectors on one element.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLift {
    /// `q_x` coefficients followed by `q_y` coefficients
    pub q: Vec<f64>,
    pub u: Vec<f64>,
}

/// Assemble all element blocks of triangle `t` and factor `K_loc`.
pub fn element_operators(mesh: &Mesh2d, t: usize, spec: &ProblemSpec, spaces: &LocalSpaces) -> Result<ElementLocal> {
    let geo = ElementGeometry::new(mesh, t);
    let d = spaces.scalar_dim();
    let nk = spaces.k + 1;
    let m = 3 * nk;
    let det = 2.0 * geo.area;
    let eps_inv = 1.0 / spec.epsilon;

    let mut tau = [0.0; 3];
    let mut strict = false;
    for e in 0..3 {
        let (te, s) = eval_tau(&geo, e, spec, spaces)?;
        tau[e] = te;
        strict |= s;
    }
    if !strict && !spec.tau.is_fallback() {
        return Err(Error::Stabilization {
            element: t,
            reason: "tau - beta.n/2 vanishes somewhere on every edge".into(),
        });
    }

    let mut a = Mat::<f64>::zeros(2 * d, 2 * d);
    let mut b = Mat::<f64>::zeros(d, 2 * d);
    let mut r = Mat::<f64>::zeros(d, d);
    let mut load = vec![0.0; d];
    for (qi, (xi, w)) in spaces.tri_rule.points.iter().zip(&spaces.tri_rule.weights).enumerate() {
        let x = geo.map(*xi);
        let wq = w * det;
        let phi = &spaces.tri_phi[qi];
        let grad: Vec<Point> = spaces.tri_grad[qi].iter().map(|g| geo.physical_grad(*g)).collect();
        let beta = (spec.beta)(x);
        let div = (spec.div_beta)(x);
        if -div < -1e-12 * (1.0 + div.abs()) {
            return Err(Error::InvalidConfig(format!(
                "-div(beta) = {:.3e} < 0 at ({:.3}, {:.3})",
                -div, x[0], x[1]
            )));
        }
        let fx = (spec.f)(x);
        let bgrad: Vec<f64> = grad.iter().map(|g| beta[0] * g[0] + beta[1] * g[1]).collect();
        for i in 0..d {
            load[i] -= wq * fx * phi[i];
            for j in 0..d {
                let mass = wq * phi[i] * phi[j];
                a[(i, j)] += eps_inv * mass;
                a[(d + i, d + j)] += eps_inv * mass;
                for c in 0..2 {
                    b[(i, c * d + j)] -= wq * phi[i] * grad[j][c];
                }
                // rows test w = φ_i, columns trial u = φ_j
                r[(i, j)] += 0.5 * div * mass - 0.5 * wq * bgrad[j] * phi[i] + 0.5 * wq * phi[j] * bgrad[i];
            }
        }
    }

    let mut c = Mat::<f64>::zeros(m, 2 * d);
    let mut s1 = Mat::<f64>::zeros(d, m);
    let mut s2 = Mat::<f64>::zeros(m, d);
    let mut tt = Mat::<f64>::zeros(m, m);
    for e in 0..3 {
        let n = geo.normals[e];
        let [p0, p1] = geo.edge_endpoints(e);
        let half = 0.5 * geo.edge_lengths[e];
        let te = tau[e];
        for ep in &spaces.edge_pts[e] {
            let s = ep.s;
            let x = [0.5 * (1.0 - s) * p0[0] + 0.5 * (1.0 + s) * p1[0], 0.5 * (1.0 - s) * p0[1] + 0.5 * (1.0 + s) * p1[1]];
            debug_assert!({
                let y = geo.map(ep.xi);
                (y[0] - x[0]).abs() + (y[1] - x[1]).abs() < 1e-12
            });
            let ws = ep.weight * half;
            let bv = (spec.beta)(x);
            let bn = bv[0] * n[0] + bv[1] * n[1];
            let psi: Vec<f64> = (0..nk).map(|l| orient(geo.flipped[e], l) * ep.leg[l]).collect();
            let phi = &ep.phi;
            for i in 0..d {
                for j in 0..d {
                    r[(i, j)] -= ws * (te - 0.5 * bn) * phi[i] * phi[j];
                }
            }
            for (l, &pl) in psi.iter().enumerate() {
                let row = e * nk + l;
                for a_ in 0..d {
                    c[(row, a_)] += ws * pl * phi[a_] * n[0];
                    c[(row, d + a_)] += ws * pl * phi[a_] * n[1];
                    s1[(a_, row)] += ws * (te - bn) * pl * phi[a_];
                    s2[(row, a_)] += ws * te * pl * phi[a_];
                }
                for (l2, &pl2) in psi.iter().enumerate() {
                    tt[(row, e * nk + l2)] -= ws * (te - bn) * pl * pl2;
                }
            }
        }
    }

    let nloc = 3 * d;
    let kloc = Mat::<f64>::from_fn(nloc, nloc, |i, j| match (i < 2 * d, j < 2 * d) {
        (true, true) => a[(i, j)],
        (true, false) => b[(j - 2 * d, i)],
        (false, true) => b[(i - 2 * d, j)],
        (false, false) => r[(i - 2 * d, j - 2 * d)],
    });
    let kinv = dense_inverse(&kloc).map_err(|_| Error::Stabilization {
        element: t,
        reason: "local solver is singular".into(),
    })?;
    let rcond = 1.0 / (norm1(&kloc) * norm1(&kinv));
    if !(rcond > 1e-14) {
        return Err(Error::Stabilization {
            element: t,
            reason: format!("local solver is numerically singular (rcond {rcond:.2e})"),
        });
    }
    let rhs = Mat::<f64>::from_fn(nloc, m, |i, j| if i < 2 * d { c[(j, i)] } else { s1[(i - 2 * d, j)] });
    let lift = &kinv * &rhs;
    let load_lift = kinv.subcols(2 * d, d).to_owned();

    Ok(ElementLocal {
        geo,
        tau,
        a,
        b,
        c,
        r,
        s1,
        s2,
        t: tt,
        load,
        lift,
        load_lift,
        rcond,
    })
}

impl ElementLocal {
    pub fn scalar_dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn trace_dim(&self) -> usize {
        self.t.nrows()
    }

    /// `K_loc = [[A, Bᵗ], [B, R]]`
    pub fn k_local(&self) -> Mat<f64> {
        let d = self.scalar_dim();
        Mat::from_fn(3 * d, 3 * d, |i, j| match (i < 2 * d, j < 2 * d) {
            (true, true) => self.a[(i, j)],
            (true, false) => self.b[(j - 2 * d, i)],
            (false, true) => self.b[(i - 2 * d, j)],
            (false, false) => self.r[(i - 2 * d, j - 2 * d)],
        })
    }

    /// `(Qμ, Uμ)`: solves `K_loc (Qμ, Uμ) = (−Cᵗμ, −S₁μ)`.
    pub fn local_lift(&self, mu: &[f64]) -> LocalLift {
        let y = mat_vec(&self.lift, mu);
        self.split(y.into_iter().map(|v| -v).collect())
    }

    fn split(&self, mut y: Vec<f64>) -> LocalLift {
        let u = y.split_off(2 * self.scalar_dim());
        LocalLift { q: y, u }
    }

    /// `[C S₂]` as one `m × 3d` matrix.
    fn trace_rows(&self) -> Mat<f64> {
        let d = self.scalar_dim();
        Mat::from_fn(self.trace_dim(), 3 * d, |i, j| if j < 2 * d { self.c[(i, j)] } else { self.s2[(i, j - 2 * d)] })
    }

    /// Condensed trace block `Ŝ_K` (rows test, columns trial) and the map
    /// from interior loads to trace loads.
    pub fn condense(&self) -> (Mat<f64>, Mat<f64>) {
        let rows = self.trace_rows();
        let mut schur = &rows * &self.lift;
        for i in 0..schur.nrows() {
            for j in 0..schur.ncols() {
                schur[(i, j)] -= self.t[(i, j)];
            }
        }
        let rhs_map = &rows * &self.load_lift;
        (schur, rhs_map)
    }

    /// Trace load `b_K` for the element's own forcing.
    pub fn condensed_load(&self) -> Vec<f64> {
        let (_, map) = self.condense();
        mat_vec(&map, &self.load)
    }

    /// `(q_h, u_h) = (Qλ + Q_w F, Uλ + U_w F)`
    pub fn recover(&self, lambda: &[f64], load: &[f64]) -> LocalLift {
        let mut y = mat_vec(&self.lift, lambda);
        let z = mat_vec(&self.load_lift, load);
        for (yi, zi) in y.iter_mut().zip(z) {
            *yi = zi - *yi;
        }
        self.split(y)
    }
}

/// Element contribution to `a_h(λ, μ)` evaluated by quadrature from the local
/// lifts:
/// `(ε⁻¹Qλ, Qμ) + ⟨τ(Uλ−λ), Uμ−μ⟩ − (∇·β Uλ, Uμ) − (βUλ, ∇Uμ) + ⟨β·n λ, Uμ − μ⟩`.
///
/// The last term's `−⟨β·n λ, μ⟩_{∂K}` part cancels between neighbours for
/// single-valued traces, so the sum over elements is the global `a_h`.
pub fn element_form(elem: &ElementLocal, spec: &ProblemSpec, spaces: &LocalSpaces, lambda: &[f64], mu: &[f64]) -> f64 {
    let geo = &elem.geo;
    let d = spaces.scalar_dim();
    let nk = spaces.k + 1;
    let ll = elem.local_lift(lambda);
    let lm = elem.local_lift(mu);
    let dot = |c: &[f64], v: &[f64]| c.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let mut total = 0.0;
    for (qi, (xi, w)) in spaces.tri_rule.points.iter().zip(&spaces.tri_rule.weights).enumerate() {
        let x = geo.map(*xi);
        let wq = w * 2.0 * geo.area;
        let phi = &spaces.tri_phi[qi];
        let grad: Vec<Point> = spaces.tri_grad[qi].iter().map(|g| geo.physical_grad(*g)).collect();
        let ql = [dot(&ll.q[..d], phi), dot(&ll.q[d..], phi)];
        let qm = [dot(&lm.q[..d], phi), dot(&lm.q[d..], phi)];
        let ul = dot(&ll.u, phi);
        let um = dot(&lm.u, phi);
        let gum = [
            grad.iter().zip(&lm.u).map(|(g, c)| g[0] * c).sum::<f64>(),
            grad.iter().zip(&lm.u).map(|(g, c)| g[1] * c).sum::<f64>(),
        ];
        let beta = (spec.beta)(x);
        let div = (spec.div_beta)(x);
        total += wq
            * ((ql[0] * qm[0] + ql[1] * qm[1]) / spec.epsilon - div * ul * um
                - ul * (beta[0] * gum[0] + beta[1] * gum[1]));
    }
    for e in 0..3 {
        let n = geo.normals[e];
        let half = 0.5 * geo.edge_lengths[e];
        for ep in &spaces.edge_pts[e] {
            let x = geo.map(ep.xi);
            let bv = (spec.beta)(x);
            let bn = bv[0] * n[0] + bv[1] * n[1];
            let trace = |v: &[f64]| (0..nk).map(|l| orient(geo.flipped[e], l) * ep.leg[l] * v[e * nk + l]).sum::<f64>();
            let lam = trace(lambda);
            let mu_v = trace(mu);
            let ul = dot(&ll.u, &ep.phi);
            let um = dot(&lm.u, &ep.phi);
            total += ep.weight * half * (elem.tau[e] * (ul - lam) * (um - mu_v) + bn * lam * um - bn * lam * mu_v);
        }
    }
    total
}

/// Evaluate a local lift's scalar part at a physical point inside the element.
pub fn eval_scalar(elem: &ElementLocal, spaces: &LocalSpaces, coeffs: &[f64], x: Point) -> f64 {
    let geo = &elem.geo;
    let a = geo.vertices[0];
    let dx = [x[0] - a[0], x[1] - a[1]];
    // ξ = J⁻¹ (x − a), and J⁻¹ = (J⁻ᵀ)ᵀ
    let xi = [
        geo.jit[0][0] * dx[0] + geo.jit[1][0] * dx[1],
        geo.jit[0][1] * dx[0] + geo.jit[1][1] * dx[1],
    ];
    spaces.basis.eval(xi).iter().zip(coeffs).map(|(p, c)| p * c).sum()
}

/// `‖u_h − u‖²_{L²(K)}` for a recovered scalar field.
pub fn l2_error_sq(elem: &ElementLocal, spaces: &LocalSpaces, coeffs: &[f64], exact: &dyn Fn(Point) -> f64) -> f64 {
    let geo = &elem.geo;
    spaces
        .tri_rule
        .points
        .iter()
        .zip(&spaces.tri_rule.weights)
        .enumerate()
        .map(|(qi, (xi, w))| {
            let uh: f64 = spaces.tri_phi[qi].iter().zip(coeffs).map(|(p, c)| p * c).sum();
            let diff = uh - exact(geo.map(*xi));
            w * 2.0 * geo.area * diff * diff
        })
        .sum()
}

/// Trace-basis integrals on one mesh edge of `weight(x) · ψ_m ψ_n`, in the
/// global edge orientation.
pub fn edge_weighted_mass(mesh: &Mesh2d, edge: usize, spaces: &LocalSpaces, weight: &dyn Fn(Point) -> f64) -> Mat<f64> {
    let nk = spaces.k + 1;
    let [p0, p1] = mesh.edge_points(edge);
    let half = 0.5 * mesh.edge_length(edge);
    let mut out = Mat::<f64>::zeros(nk, nk);
    for (&t, &w) in spaces.edge_rule.points.iter().zip(&spaces.edge_rule.weights) {
        let x = [0.5 * (1.0 - t) * p0[0] + 0.5 * (1.0 + t) * p1[0], 0.5 * (1.0 - t) * p0[1] + 0.5 * (1.0 + t) * p1[1]];
        let p = legendre(spaces.k, t);
        let wx = w * half * weight(x);
        for i in 0..nk {
            for j in 0..nk {
                out[(i, j)] += wx * p[i] * p[j];
            }
        }
    }
    out
}
