//! Subdomain Robin systems, subdomain Schur complements and the assembled
//! interface operator `Ŝ_Γ`.

use std::ops::Range;

use faer::Mat;
use rayon::prelude::*;

use crate::assembly::Discretization;
use crate::error::{Error, Result};
use crate::fespace::DofClass;
use crate::hdg::edge_weighted_mass;
use crate::linalg::{CsrMatrix, SparseLu};

/// Trace system of one subdomain, local DOFs ordered interior first, then
/// interface DOFs grouped by subdomain edge (ascending edge index).
#[derive(Debug)]
pub struct SubdomainSystem {
    pub index: usize,
    /// global DOFs of `Λ_I^(i)`
    pub interior: Range<usize>,
    /// interface index (into `Λ̂_Γ`) of every local interface DOF
    pub gamma: Vec<usize>,
    /// subdomain edges touching this subdomain, ascending
    pub edges: Vec<usize>,
    /// local interface positions of each entry of `edges`
    pub edge_blocks: Vec<Range<usize>>,
    /// `+1` if the subdomain is the lower-indexed neighbour of the edge
    pub edge_signs: Vec<f64>,
    /// `A^(i)`, Robin term included
    pub a: CsrMatrix,
    pub a_ii: CsrMatrix,
    pub a_ig: CsrMatrix,
    pub a_gi: CsrMatrix,
    pub a_gg: CsrMatrix,
    /// local load, interior then interface
    pub rhs: Vec<f64>,
    lu_ii: SparseLu,
}

pub fn build_subdomains(disc: &Discretization) -> Result<Vec<SubdomainSystem>> {
    let tris = disc.mesh.subdomain_triangles();
    (0..disc.mesh.n_subdomains())
        .into_par_iter()
        .map(|i| build_subdomain(disc, i, &tris[i]))
        .collect()
}

fn build_subdomain(disc: &Discretization, i: usize, triangles: &[usize]) -> Result<SubdomainSystem> {
    let dofs = &disc.dofs;
    let interior = dofs.interior_range(i);
    let n_i = interior.len();
    let n_int_global = dofs.n_interior();
    let mut edges = Vec::new();
    let mut edge_blocks = Vec::new();
    let mut edge_signs = Vec::new();
    let mut gamma = Vec::new();
    for (s, se) in disc.interface.iter().enumerate() {
        if se.subdomains.0 != i && se.subdomains.1 != i {
            continue;
        }
        let block = dofs.interface_block(s);
        edges.push(s);
        edge_blocks.push(gamma.len()..gamma.len() + block.len());
        edge_signs.push(if se.subdomains.0 == i { 1.0 } else { -1.0 });
        gamma.extend(block);
    }
    let n_g = gamma.len();
    let n = n_i + n_g;
    let local_of = |g: usize| -> Option<usize> {
        if interior.contains(&g) {
            return Some(g - interior.start);
        }
        match dofs.classify(g) {
            DofClass::Interface(s) => {
                let p = edges.binary_search(&s).ok()?;
                let off = g - n_int_global - dofs.interface_block(s).start;
                Some(n_i + edge_blocks[p].start + off)
            }
            DofClass::Interior(_) => None,
        }
    };

    let mut trips = Vec::new();
    let mut rhs = vec![0.0; n];
    let nk = disc.degree() + 1;
    for &t in triangles {
        trips.extend(disc.element_triplets(t, &local_of));
        for (e, r) in disc.element_dofs(t).into_iter().enumerate() {
            if let Some(r) = r {
                for (l, g) in r.enumerate() {
                    if let Some(p) = local_of(g) {
                        rhs[p] += disc.elements[t].rhs[e * nk + l];
                    }
                }
            }
        }
    }
    // Robin term ½⟨β·n λ, μ⟩ on ∂Ω_i ∩ Γ, n outward of Ω_i
    for (p, &s) in edges.iter().enumerate() {
        let se = &disc.interface[s];
        let sign = edge_signs[p];
        let n_lower = se.normal;
        let beta = &disc.spec.beta;
        let mut off = n_i + edge_blocks[p].start;
        for &e in &se.mesh_edges {
            let m = edge_weighted_mass(&disc.mesh, e, &disc.spaces, &|x| {
                let b = beta(x);
                b[0] * n_lower[0] + b[1] * n_lower[1]
            });
            for a in 0..nk {
                for b in 0..nk {
                    trips.push((off + a, off + b, 0.5 * sign * m[(a, b)]));
                }
            }
            off += nk;
        }
    }
    let a = CsrMatrix::from_triplets(n, n, &trips);
    let ii = |c: usize| (c < n_i).then_some(c);
    let gg = |c: usize| (c >= n_i).then(|| c - n_i);
    let rows_i: Vec<usize> = (0..n_i).collect();
    let rows_g: Vec<usize> = (n_i..n).collect();
    let a_ii = a.extract(&rows_i, &ii, n_i);
    let a_ig = a.extract(&rows_i, &gg, n_g);
    let a_gi = a.extract(&rows_g, &ii, n_i);
    let a_gg = a.extract(&rows_g, &gg, n_g);
    let lu_ii = SparseLu::factor(&a_ii).map_err(|e| Error::Subdomain {
        subdomain: i,
        reason: format!("interior block: {e}"),
    })?;
    Ok(SubdomainSystem {
        index: i,
        interior,
        gamma,
        edges,
        edge_blocks,
        edge_signs,
        a,
        a_ii,
        a_ig,
        a_gi,
        a_gg,
        rhs,
        lu_ii,
    })
}

impl SubdomainSystem {
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_gamma(&self) -> usize {
        self.gamma.len()
    }

    /// Factor the full Robin matrix `A^(i)` (on demand; floating
    /// pure-diffusion subdomains are singular).
    pub fn factor_full(&self) -> Result<SparseLu> {
        SparseLu::factor(&self.a).map_err(|e| Error::Subdomain {
            subdomain: self.index,
            reason: format!("Robin matrix: {e}"),
        })
    }

    pub fn solve_interior(&self, rhs: &[f64]) -> Vec<f64> {
        self.lu_ii.solve(rhs)
    }

    /// `λ_I = −A_II⁻¹ A_IΓ λ_Γ`
    pub fn extend_interior(&self, lambda_g: &[f64]) -> Vec<f64> {
        let mut y = self.a_ig.matvec(lambda_g);
        self.lu_ii.solve_in_place(&mut y);
        y.iter_mut().for_each(|v| *v = -*v);
        y
    }

    /// Full local vector `(λ_I, λ_Γ)` of the discrete extension.
    pub fn extension(&self, lambda_g: &[f64]) -> Vec<f64> {
        let mut out = self.extend_interior(lambda_g);
        out.extend_from_slice(lambda_g);
        out
    }

    /// `S_Γ^(i) λ_Γ`
    pub fn schur_apply(&self, lambda_g: &[f64]) -> Vec<f64> {
        let li = self.extend_interior(lambda_g);
        let mut y = self.a_gg.matvec(lambda_g);
        self.a_gi.matvec_add(&li, &mut y);
        y
    }

    /// Dense `S_Γ^(i) = A_ΓΓ − A_ΓI A_II⁻¹ A_IΓ`.
    pub fn dense_schur(&self) -> Mat<f64> {
        let x = self.lu_ii.solve_mat(&self.a_ig.to_dense());
        let mut s = self.a_gg.to_dense();
        let agi = self.a_gi.to_dense();
        if self.n_interior() > 0 {
            s -= &agi * &x;
        }
        s
    }

    /// `b_Γ^(i) = f_Γ − A_ΓI A_II⁻¹ f_I`
    pub fn rhs_gamma(&self) -> Vec<f64> {
        let n_i = self.n_interior();
        let y = self.lu_ii.solve(&self.rhs[..n_i]);
        let mut out = self.rhs[n_i..].to_vec();
        let ay = self.a_gi.matvec(&y);
        for (o, v) in out.iter_mut().zip(ay) {
            *o -= v;
        }
        out
    }

    /// Interior trace from interface values: `A_II⁻¹ (f_I − A_IΓ λ_Γ)`.
    pub fn back_substitute(&self, lambda_g: &[f64]) -> Vec<f64> {
        let n_i = self.n_interior();
        let mut r = self.rhs[..n_i].to_vec();
        let ag = self.a_ig.matvec(lambda_g);
        for (ri, v) in r.iter_mut().zip(ag) {
            *ri -= v;
        }
        self.lu_ii.solve_in_place(&mut r);
        r
    }

    pub fn restrict(&self, global_gamma: &[f64]) -> Vec<f64> {
        self.gamma.iter().map(|&g| global_gamma[g]).collect()
    }
}

/// Matrix-free `Ŝ_Γ = Σ_i R_Γ^(i)ᵀ S_Γ^(i) R_Γ^(i)` with its right-hand side.
#[derive(Debug)]
pub struct InterfaceOperator {
    pub subs: Vec<SubdomainSystem>,
    pub n_gamma: usize,
    pub n_interior: usize,
    pub rhs: Vec<f64>,
}

impl InterfaceOperator {
    pub fn new(disc: &Discretization) -> Result<Self> {
        let subs = build_subdomains(disc)?;
        Ok(Self::from_subdomains(subs, disc.dofs.n_interface(), disc.dofs.n_interior()))
    }

    pub fn from_subdomains(subs: Vec<SubdomainSystem>, n_gamma: usize, n_interior: usize) -> Self {
        let locals: Vec<Vec<f64>> = subs.par_iter().map(|s| s.rhs_gamma()).collect();
        let mut rhs = vec![0.0; n_gamma];
        for (s, loc) in subs.iter().zip(&locals) {
            for (&g, v) in s.gamma.iter().zip(loc) {
                rhs[g] += v;
            }
        }
        Self {
            subs,
            n_gamma,
            n_interior,
            rhs,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_gamma
    }

    /// Sum per-subdomain interface vectors in subdomain order.
    pub fn assemble(&self, locals: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_gamma];
        for (s, loc) in self.subs.iter().zip(locals) {
            for (&g, v) in s.gamma.iter().zip(loc) {
                out[g] += v;
            }
        }
        out
    }

    pub fn apply(&self, lambda_g: &[f64]) -> Vec<f64> {
        let locals: Vec<Vec<f64>> = self
            .subs
            .par_iter()
            .map(|s| s.schur_apply(&s.restrict(lambda_g)))
            .collect();
        self.assemble(&locals)
    }

    /// Global trace vector from interface values via interior back-substitution.
    pub fn complete(&self, lambda_g: &[f64]) -> Vec<f64> {
        let parts: Vec<Vec<f64>> = self
            .subs
            .par_iter()
            .map(|s| s.back_substitute(&s.restrict(lambda_g)))
            .collect();
        let mut out = vec![0.0; self.n_interior + self.n_gamma];
        for (s, p) in self.subs.iter().zip(parts) {
            out[s.interior.clone()].copy_from_slice(&p);
        }
        out[self.n_interior..].copy_from_slice(lambda_g);
        out
    }

    /// Dense `Ŝ_Γ` (small problems only).
    pub fn dense(&self) -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(self.n_gamma, self.n_gamma);
        for s in &self.subs {
            let d = s.dense_schur();
            for (a, &ga) in s.gamma.iter().enumerate() {
                for (b, &gb) in s.gamma.iter().enumerate() {
                    out[(ga, gb)] += d[(a, b)];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_trace_system;
    use crate::hdg::{ProblemSpec, TauStrategy};
    use crate::linalg::{dense_solve, dot, rel_diff};
    use crate::mesh::{build_structured_mesh, Diagonal};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn rotating(eps: f64) -> ProblemSpec {
        ProblemSpec {
            name: "rot".into(),
            epsilon: eps,
            beta: Arc::new(|p| [p[1], -p[0]]),
            div_beta: Arc::new(|_| 0.0),
            f: Arc::new(|p| p[0] * p[1]),
            g: Arc::new(|p| if p[0] > 0.0 { 1.0 } else { 0.0 }),
            tau: TauStrategy::Upwind,
        }
    }

    fn diffusion() -> ProblemSpec {
        ProblemSpec {
            name: "lap".into(),
            epsilon: 1.0,
            beta: Arc::new(|_| [0.0, 0.0]),
            div_beta: Arc::new(|_| 0.0),
            f: Arc::new(|_| 0.0),
            g: Arc::new(|_| 0.0),
            tau: TauStrategy::UpwindPlusDiffusive { sigma: 1.0 },
        }
    }

    fn rvec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Scatter a local vector back to global numbering.
    fn scatter(disc: &Discretization, s: &SubdomainSystem, loc: &[f64], out: &mut [f64]) {
        let n_i = s.n_interior();
        for (p, g) in s.interior.clone().enumerate() {
            out[g] += loc[p];
        }
        for (p, &g) in s.gamma.iter().enumerate() {
            out[disc.dofs.n_interior() + g] += loc[n_i + p];
        }
    }

    fn gather(disc: &Discretization, s: &SubdomainSystem, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = x[s.interior.clone()].to_vec();
        out.extend(s.gamma.iter().map(|&g| x[disc.dofs.n_interior() + g]));
        out
    }

    #[test]
    fn robin_terms_cancel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mesh = build_structured_mesh(3, 3, 2, Diagonal::Ne).unwrap();
        let disc = Discretization::new(mesh, rotating(1e-3), 1).unwrap();
        let sys = assemble_trace_system(&disc);
        let subs = build_subdomains(&disc).unwrap();
        for _ in 0..5 {
            let x = rvec(&mut rng, disc.n_dofs());
            let mut y = vec![0.0; x.len()];
            for s in &subs {
                let loc = s.a.matvec(&gather(&disc, s, &x));
                scatter(&disc, s, &loc, &mut y);
            }
            assert!(rel_diff(&y, &sys.a.matvec(&x)) < 1e-12);
        }
        // local loads sum to the global RHS
        let mut b = vec![0.0; disc.n_dofs()];
        for s in &subs {
            scatter(&disc, s, &s.rhs, &mut b);
        }
        assert!(rel_diff(&b, &sys.b) < 1e-13);
    }

    #[test]
    fn robin_matrices_positive_semidefinite_and_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mesh = build_structured_mesh(4, 4, 4, Diagonal::Ne).unwrap();
        let disc = Discretization::new(mesh, rotating(1e-6), 0).unwrap();
        for s in build_subdomains(&disc).unwrap() {
            let sym = s.a.symmetric_part().to_dense();
            let ev = sym.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
            let top = *ev.last().unwrap();
            let (sx, sy) = (s.index % 4, s.index / 4);
            let floating = (1..3).contains(&sx) && (1..3).contains(&sy);
            if floating {
                // constants: Q = 0, U = const, boundary terms cancel the Robin term
                assert!(ev[0].abs() < 1e-12 * top, "subdomain {}: {}", s.index, ev[0]);
                assert!(ev[1] > 1e-10 * top);
                let ones = vec![1.0; s.a.nrows()];
                assert!(dot(&ones, &s.a.symmetric_part().matvec(&ones)).abs() < 1e-12 * top);
            } else {
                assert!(ev[0] > 1e-10 * top, "subdomain {}: {}", s.index, ev[0]);
            }
            let lu = s.factor_full().unwrap();
            let x = rvec(&mut rng, s.a.nrows());
            assert!(rel_diff(&lu.solve(&s.a.matvec(&x)), &x) < 1e-8);
        }
    }

    #[test]
    fn zero_velocity_gives_symmetric_subdomain_matrices() {
        let mesh = build_structured_mesh(2, 2, 2, Diagonal::Ne).unwrap();
        let disc = Discretization::new(mesh, diffusion(), 1).unwrap();
        for s in build_subdomains(&disc).unwrap() {
            let d = s.a.to_dense();
            for i in 0..d.nrows() {
                for j in 0..d.ncols() {
                    assert!((d[(i, j)] - d[(j, i)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constants_extend_on_floating_subdomain() {
        // centre subdomain of a 3×3 grid touches no boundary
        let mesh = build_structured_mesh(3, 3, 3, Diagonal::Ne).unwrap();
        let disc = Discretization::new(mesh, diffusion(), 2).unwrap();
        let subs = build_subdomains(&disc).unwrap();
        let s = &subs[4];
        let nk = 3;
        let mut lg = vec![0.0; s.n_gamma()];
        for p in (0..lg.len()).step_by(nk) {
            lg[p] = 1.5;
        }
        let li = s.extend_interior(&lg);
        for p in (0..li.len()).step_by(nk) {
            assert!((li[p] - 1.5).abs() < 1e-10);
            assert!(li[p + 1].abs() < 1e-10 && li[p + 2].abs() < 1e-10);
        }
        assert!(s.schur_apply(&lg).iter().all(|v| v.abs() < 1e-10));
        assert!(s.extend_interior(&vec![0.0; s.n_gamma()]).iter().all(|v| *v == 0.0));
        assert!(s.factor_full().is_err());
    }

    #[test]
    fn schur_matches_dense_and_quadratic_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mesh = build_structured_mesh(2, 2, 2, Diagonal::Nw).unwrap();
        let disc = Discretization::new(mesh, rotating(1e-2), 1).unwrap();
        for s in build_subdomains(&disc).unwrap() {
            let d = s.dense_schur();
            let x = rvec(&mut rng, s.n_gamma());
            let y = s.schur_apply(&x);
            let yd = crate::linalg::mat_vec(&d, &x);
            assert!(rel_diff(&y, &yd) < 1e-11);
            let ext = s.extension(&x);
            let q = dot(&ext, &s.a.matvec(&ext));
            assert!((dot(&x, &y) - q).abs() < 1e-11 * q.abs().max(1.0));
            // first block row residual
            let r = s.a_ii.matvec(&ext[..s.n_interior()]);
            let r2 = s.a_ig.matvec(&x);
            let res: Vec<f64> = r.iter().zip(&r2).map(|(a, b)| a + b).collect();
            assert!(crate::linalg::norm2(&res) < 1e-11 * crate::linalg::norm2(&r2).max(1.0));
        }
    }

    #[test]
    fn interface_operator_is_global_schur_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mesh = build_structured_mesh(2, 2, 2, Diagonal::Ne).unwrap();
        let disc = Discretization::new(mesh, rotating(1e-1), 0).unwrap();
        let sys = assemble_trace_system(&disc);
        let iface = InterfaceOperator::new(&disc).unwrap();
        let ni = disc.dofs.n_interior();
        let n = disc.n_dofs();
        let a = sys.a.to_dense();
        let aii = a.submatrix(0, 0, ni, ni).to_owned();
        let aig = a.submatrix(0, ni, ni, n - ni).to_owned();
        let agi = a.submatrix(ni, 0, n - ni, ni).to_owned();
        let agg = a.submatrix(ni, ni, n - ni, n - ni).to_owned();
        let schur = &agg - &agi * dense_solve(&aii, &aig).unwrap();
        let x = rvec(&mut rng, iface.dim());
        assert!(rel_diff(&iface.apply(&x), &crate::linalg::mat_vec(&schur, &x)) < 1e-11);
        let d = iface.dense();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                assert!((d[(i, j)] - schur[(i, j)]).abs() < 1e-11 * (1.0 + schur[(i, j)].abs()));
            }
        }
        // interface solve + back-substitution reproduces the direct solve
        let lg = dense_solve(&d, &crate::linalg::col_vec(&iface.rhs)).unwrap();
        let lg: Vec<f64> = (0..lg.nrows()).map(|i| lg[(i, 0)]).collect();
        let full = iface.complete(&lg);
        assert!(rel_diff(&full, &sys.direct_solve().unwrap()) < 1e-9);
    }

    #[test]
    fn two_subdomains_one_cell_each() {
        let mesh = build_structured_mesh(2, 1, 1, Diagonal::Ne).unwrap();
        let disc = Discretization::new(mesh, rotating(1.0), 0).unwrap();
        let iface = InterfaceOperator::new(&disc).unwrap();
        assert_eq!(iface.dim(), 1);
        // hand elimination on the global matrix: A_ΓΓ − A_ΓI A_II⁻¹ A_IΓ
        let sys = assemble_trace_system(&disc);
        let a = sys.a.to_dense();
        assert_eq!(a.nrows(), 3);
        let s = a[(2, 2)] - a[(2, 0)] * a[(0, 2)] / a[(0, 0)] - a[(2, 1)] * a[(1, 2)] / a[(1, 1)];
        assert!((iface.dense()[(0, 0)] - s).abs() < 1e-12 * s.abs());
        let zero = Discretization::new(
            build_structured_mesh(2, 1, 1, Diagonal::Ne).unwrap(),
            ProblemSpec {
                f: Arc::new(|_| 0.0),
                g: Arc::new(|_| 0.0),
                ..rotating(1.0)
            },
            0,
        )
        .unwrap();
        assert!(InterfaceOperator::new(&zero).unwrap().rhs.iter().all(|v| *v == 0.0));
    }
}
