//! Global condensed trace system `A λ = b`.

use std::io::Write;
use std::ops::Range;

use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fespace::{build_trace_dof_map, project_boundary_data, TraceDofMap};
use crate::hdg::{element_operators, l2_error_sq, ElementLocal, LocalLift, LocalSpaces, ProblemSpec};
use crate::linalg::{dot, mat_vec, norm2, CsrMatrix, SparseLu};
use crate::mesh::{extract_interface, EdgeClass, Mesh2d, Point, SubdomainEdge};

/// Condensed data of one element.
#[derive(Debug, Clone)]
pub struct CondensedElement {
    /// `Ŝ_K`, rows test and columns trial, local trace ordering
    pub schur: Mat<f64>,
    /// trace load of the forcing, already corrected by the Dirichlet lifting
    pub rhs: Vec<f64>,
    pub tau: [f64; 3],
    pub h: f64,
}

/// Mesh, trace space and condensed element blocks of one problem.
#[derive(Debug)]
pub struct Discretization {
    pub mesh: Mesh2d,
    pub interface: Vec<SubdomainEdge>,
    pub dofs: TraceDofMap,
    pub spec: ProblemSpec,
    pub spaces: LocalSpaces,
    pub elements: Vec<CondensedElement>,
    /// projected Dirichlet coefficients of each boundary mesh edge
    pub boundary: Vec<Option<Vec<f64>>>,
}

impl Discretization {
    pub fn new(mesh: Mesh2d, spec: ProblemSpec, k: usize) -> Result<Self> {
        spec.validate()?;
        if k > 2 {
            return Err(Error::Unsupported(format!("polynomial degree {k} (supported: 0, 1, 2)")));
        }
        let spaces = LocalSpaces::new(k)?;
        let interface = extract_interface(&mesh);
        let dofs = build_trace_dof_map(&mesh, &interface, k);
        let boundary: Vec<Option<Vec<f64>>> = (0..mesh.edges.len())
            .into_par_iter()
            .map(|e| {
                (mesh.edge_class[e] == EdgeClass::Boundary)
                    .then(|| project_boundary_data(&*spec.g, mesh.edge_points(e), k))
            })
            .collect();
        let nk = k + 1;
        let elements = (0..mesh.triangles.len())
            .into_par_iter()
            .map(|t| {
                let el = element_operators(&mesh, t, &spec, &spaces)?;
                let (schur, rhs_map) = el.condense();
                let mut rhs = mat_vec(&rhs_map, &el.load);
                for (e, &edge) in el.geo.mesh_edges.iter().enumerate() {
                    if let Some(g) = &boundary[edge] {
                        for (l, gl) in g.iter().enumerate() {
                            let col = e * nk + l;
                            for (row, r) in rhs.iter_mut().enumerate() {
                                *r -= schur[(row, col)] * gl;
                            }
                        }
                    }
                }
                Ok(CondensedElement {
                    schur,
                    rhs,
                    tau: el.tau,
                    h: el.geo.h,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mesh,
            interface,
            dofs,
            spec,
            spaces,
            elements,
            boundary,
        })
    }

    pub fn degree(&self) -> usize {
        self.spaces.k
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs()
    }

    /// Global DOF ranges of the three local edges (`None` on `∂Ω`).
    pub fn element_dofs(&self, t: usize) -> [Option<Range<usize>>; 3] {
        let edges = self.mesh.triangle_edges[t];
        std::array::from_fn(|e| self.dofs.edge_dofs(edges[e]))
    }

    /// Rebuild the full element operators (not cached).
    pub fn element(&self, t: usize) -> Result<ElementLocal> {
        element_operators(&self.mesh, t, &self.spec, &self.spaces)
    }

    /// Local trace vector of element `t`; boundary edges take the projected
    /// Dirichlet data when `with_boundary` is set and zero otherwise.
    pub fn gather(&self, t: usize, lambda: &[f64], with_boundary: bool) -> Vec<f64> {
        let nk = self.degree() + 1;
        let mut out = vec![0.0; 3 * nk];
        for (e, &edge) in self.mesh.triangle_edges[t].iter().enumerate() {
            let dst = &mut out[e * nk..(e + 1) * nk];
            match (self.dofs.edge_dofs(edge), &self.boundary[edge]) {
                (Some(r), _) => dst.copy_from_slice(&lambda[r]),
                (None, Some(g)) if with_boundary => dst.copy_from_slice(g),
                _ => {}
            }
        }
        out
    }

    /// Interior fields `(q_h, u_h)` of every element for a solved trace.
    pub fn recover(&self, lambda: &[f64]) -> Result<Vec<LocalLift>> {
        (0..self.mesh.triangles.len())
            .into_par_iter()
            .map(|t| {
                let el = self.element(t)?;
                Ok(el.recover(&self.gather(t, lambda, true), &el.load))
            })
            .collect()
    }

    /// `‖u_h − u‖_{L²(Ω)}` of the recovered scalar field.
    pub fn l2_error(&self, lambda: &[f64], exact: &(dyn Fn(Point) -> f64 + Sync)) -> Result<f64> {
        let parts = (0..self.mesh.triangles.len())
            .into_par_iter()
            .map(|t| {
                let el = self.element(t)?;
                let rec = el.recover(&self.gather(t, lambda, true), &el.load);
                Ok(l2_error_sq(&el, &self.spaces, &rec.u, exact))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(parts.iter().sum::<f64>().sqrt())
    }

    /// Triplets of `Ŝ_K` restricted to free DOFs, in element order.
    pub(crate) fn element_triplets(&self, t: usize, map: &dyn Fn(usize) -> Option<usize>) -> Vec<(usize, usize, f64)> {
        let nk = self.degree() + 1;
        let local: Vec<Option<usize>> = self
            .element_dofs(t)
            .into_iter()
            .flat_map(|r| match r {
                Some(r) => r.map(map).collect::<Vec<_>>(),
                None => vec![None; nk],
            })
            .collect();
        let s = &self.elements[t].schur;
        let mut out = Vec::with_capacity(local.len() * local.len());
        for (i, gi) in local.iter().enumerate() {
            let Some(gi) = gi else { continue };
            for (j, gj) in local.iter().enumerate() {
                if let Some(gj) = gj {
                    out.push((*gi, *gj, s[(i, j)]));
                }
            }
        }
        out
    }
}

/// Values of the bilinear forms at one pair of trace vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormValues {
    pub a: f64,
    /// symmetric part
    pub b: f64,
    /// skew-symmetric part
    pub z: f64,
}

/// Assembled condensed system over all free trace DOFs.
#[derive(Debug, Clone)]
pub struct TraceSystem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
}

pub fn assemble_trace_system(disc: &Discretization) -> TraceSystem {
    let n = disc.n_dofs();
    let per_elem: Vec<Vec<(usize, usize, f64)>> = (0..disc.mesh.triangles.len())
        .into_par_iter()
        .map(|t| disc.element_triplets(t, &Some))
        .collect();
    let trips: Vec<_> = per_elem.into_iter().flatten().collect();
    let a = CsrMatrix::from_triplets(n, n, &trips);
    let mut b = vec![0.0; n];
    let nk = disc.degree() + 1;
    for t in 0..disc.mesh.triangles.len() {
        for (e, r) in disc.element_dofs(t).into_iter().enumerate() {
            if let Some(r) = r {
                for (l, g) in r.enumerate() {
                    b[g] += disc.elements[t].rhs[e * nk + l];
                }
            }
        }
    }
    TraceSystem { a, b }
}

impl TraceSystem {
    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn apply(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        if lambda.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: lambda.len(),
            });
        }
        Ok(self.a.matvec(lambda))
    }

    pub fn symmetric_part(&self) -> CsrMatrix {
        self.a.symmetric_part()
    }

    pub fn skew_part(&self) -> CsrMatrix {
        self.a.skew_part()
    }

    /// `a_h(λ, μ) = μᵀAλ` and its symmetric / skew parts.
    pub fn eval_forms(&self, lambda: &[f64], mu: &[f64]) -> FormValues {
        let al = self.a.matvec(lambda);
        let am = self.a.matvec(mu);
        let a = dot(mu, &al);
        let at = dot(lambda, &am);
        FormValues {
            a,
            b: 0.5 * (a + at),
            z: 0.5 * (a - at),
        }
    }

    /// Sparse LU solve with up to three steps of iterative refinement.
    pub fn direct_solve(&self) -> Result<Vec<f64>> {
        let lu = SparseLu::factor(&self.a)?;
        let mut x = lu.solve(&self.b);
        let bn = norm2(&self.b);
        if bn == 0.0 {
            return Ok(x);
        }
        for _ in 0..3 {
            let ax = self.a.matvec(&x);
            let r: Vec<f64> = self.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            if norm2(&r) <= 1e-14 * bn {
                break;
            }
            let dx = lu.solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        Ok(x)
    }

    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let ax = self.a.matvec(x);
        let r: Vec<f64> = self.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let bn = norm2(&self.b);
        if bn == 0.0 {
            norm2(&r)
        } else {
            norm2(&r) / bn
        }
    }

    pub fn write_coordinate(&self, w: impl Write) -> std::io::Result<()> {
        self.a.write_coordinate(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdg::TauStrategy;
    use crate::mesh::{build_structured_mesh, Diagonal};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn thermal_like(eps: f64, g: fn(Point) -> f64, f: fn(Point) -> f64) -> ProblemSpec {
        ProblemSpec {
            name: "t".into(),
            epsilon: eps,
            beta: Arc::new(|p| [0.5 * (1.0 + p[1]), 0.0]),
            div_beta: Arc::new(|_| 0.0),
            f: Arc::new(f),
            g: Arc::new(g),
            tau: TauStrategy::Upwind,
        }
    }

    #[test]
    fn sizes_and_zero_data() {
        let mesh = build_structured_mesh(2, 2, 2, Diagonal::Ne).unwrap();
        let disc = Discretization::new(mesh, thermal_like(1.0, |_| 0.0, |_| 0.0), 0).unwrap();
        let sys = assemble_trace_system(&disc);
        assert_eq!(sys.a.nrows(), 40);
        assert!(sys.b.iter().all(|v| *v == 0.0));
        assert!(sys.direct_solve().unwrap().iter().all(|v| *v == 0.0));
        assert!(sys.apply(&vec![0.0; 40]).unwrap().iter().all(|v| *v == 0.0));
        assert!(sys.apply(&[0.0; 3]).is_err());
    }

    #[test]
    fn constant_reproduction_without_advection() {
        let mesh = build_structured_mesh(2, 2, 3, Diagonal::Alternating).unwrap();
        for k in 0..=2 {
            let spec = ProblemSpec {
                name: "c".into(),
                epsilon: 1.0,
                beta: Arc::new(|_| [0.0, 0.0]),
                div_beta: Arc::new(|_| 0.0),
                f: Arc::new(|_| 0.0),
                g: Arc::new(|_| 1.0),
                tau: TauStrategy::UpwindPlusDiffusive { sigma: 1.0 },
            };
            let disc = Discretization::new(mesh.clone(), spec, k).unwrap();
            let sys = assemble_trace_system(&disc);
            let x = sys.direct_solve().unwrap();
            for e in 0..disc.mesh.edges.len() {
                if let Some(r) = disc.dofs.edge_dofs(e) {
                    let c = &x[r];
                    assert!((c[0] - 1.0).abs() < 1e-10);
                    assert!(c[1..].iter().all(|v| v.abs() < 1e-10));
                }
            }
            assert!(sys.relative_residual(&x) < 1e-12);
        }
    }

    #[test]
    fn skew_part_annihilates_and_symmetric_part_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mesh = build_structured_mesh(2, 2, 2, Diagonal::Ne).unwrap();
        let spec = ProblemSpec {
            name: "r".into(),
            epsilon: 1e-4,
            beta: Arc::new(|p| [p[1], -p[0]]),
            div_beta: Arc::new(|_| 0.0),
            f: Arc::new(|_| 0.0),
            g: Arc::new(|_| 0.0),
            tau: TauStrategy::Upwind,
        };
        let disc = Discretization::new(mesh, spec, 1).unwrap();
        let sys = assemble_trace_system(&disc);
        let z = sys.skew_part();
        for _ in 0..100 {
            let l: Vec<f64> = (0..sys.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let zl = dot(&l, &z.matvec(&l));
            assert!(zl.abs() < 1e-13 * z.frobenius_norm() * dot(&l, &l));
            let f = sys.eval_forms(&l, &l);
            assert!(f.b > 0.0);
            assert!(f.z.abs() <= 1e-13 * f.a.abs().max(1.0));
            assert!((f.a - (f.b + f.z)).abs() < 1e-14 * f.a.abs());
        }
    }

    #[test]
    fn thermal_lowest_order_stays_in_data_range() {
        let mesh = build_structured_mesh(2, 2, 4, Diagonal::Ne).unwrap();
        let g = |p: Point| {
            if (p[0] - 1.0).abs() < 1e-12 {
                0.5 * (1.0 + p[1])
            } else if (p[1] + 1.0).abs() < 1e-12 {
                0.0
            } else {
                1.0
            }
        };
        let disc = Discretization::new(mesh, thermal_like(1.0, g, |_| 0.0), 0).unwrap();
        let sys = assemble_trace_system(&disc);
        let x = sys.direct_solve().unwrap();
        assert!(x.iter().all(|v| *v >= -1e-8 && *v <= 1.0 + 1e-8));
    }

    #[test]
    fn coordinate_export_lists_entries() {
        let mesh = build_structured_mesh(1, 1, 1, Diagonal::Ne).unwrap();
        let disc = Discretization::new(mesh, thermal_like(1.0, |_| 1.0, |_| 0.0), 0).unwrap();
        let sys = assemble_trace_system(&disc);
        assert_eq!(sys.n(), 1);
        let mut buf = Vec::new();
        sys.write_coordinate(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + sys.a.nnz());
    }
}
