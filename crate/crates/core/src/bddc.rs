//! BDDC preconditioner for the interface problem `Ŝ_Γ λ_Γ = b_Γ`.
//!
//! Primal constraints live on subdomain edges and are enforced through an
//! orthonormal change of basis per edge: the first `n_Π` transformed
//! coordinates are the (orthonormalized) constraint values, the remaining ones
//! are dual. Every interface DOF is shared by exactly two subdomains, so the
//! scaling weight is `1/2` throughout.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::Discretization;
use crate::dd::{InterfaceOperator, SubdomainSystem};
use crate::error::{Error, Result};
use crate::fespace::legendre;
use crate::linalg::{dense_inverse, mat_vec, CsrMatrix, SparseLu};

/// Relative tolerance for dropping near-dependent constraint rows.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// edge averages
    Bddc1,
    /// edge averages and flux-weighted averages
    Bddc2,
    /// additionally flux-weighted first moments
    Bddc3,
    /// every interface DOF primal (exact interface solve)
    AllPrimal,
    /// identity preconditioner
    None,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Self::Bddc1, Self::Bddc2, Self::Bddc3, Self::AllPrimal, Self::None];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bddc1 => "bddc1",
            Self::Bddc2 => "bddc2",
            Self::Bddc3 => "bddc3",
            Self::AllPrimal => "all-primal",
            Self::None => "none",
        }
    }

    /// Number of candidate functionals per edge (`None` for all-primal and
    /// no preconditioning).
    fn candidates(self) -> Option<usize> {
        match self {
            Self::Bddc1 => Some(1),
            Self::Bddc2 => Some(2),
            Self::Bddc3 => Some(3),
            Self::AllPrimal | Self::None => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| Error::Parse(format!("unknown preconditioner variant '{s}'")))
    }
}

/// Constraint data and change of basis on one subdomain edge.
#[derive(Debug, Clone)]
pub struct EdgeConstraints {
    /// raw functionals `c₁, c₂, c₃` over the edge DOF block
    pub raw: Vec<Vec<f64>>,
    /// indices (0-based into `raw`) of the functionals kept after filtering
    pub retained: Vec<usize>,
    pub n_primal: usize,
    /// orthogonal `m × m` transform; rows `0..n_primal` span the retained
    /// functionals
    pub transform: Mat<f64>,
    /// `±1` relating the functional seen by the upper subdomain to the lower
    /// one; the normal is fixed per edge so this is always `+1`
    pub sign: f64,
}

impl EdgeConstraints {
    pub fn size(&self) -> usize {
        self.transform.nrows()
    }
}

/// Raw constraint functionals `∫ w`, `∫ β·n w`, `∫ β·n w s` of subdomain edge
/// `s` in the Legendre trace basis.
pub fn constraint_rows(disc: &Discretization, s: usize) -> [Vec<f64>; 3] {
    let se = &disc.interface[s];
    let k = disc.degree();
    let nk = k + 1;
    let m = se.mesh_edges.len() * nk;
    let rule = &disc.spaces.edge_rule;
    let mut rows = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    for (p, &e) in se.mesh_edges.iter().enumerate() {
        let [a, b] = disc.mesh.edge_points(e);
        let half = 0.5 * disc.mesh.edge_length(e);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let x = [0.5 * (1.0 - t) * a[0] + 0.5 * (1.0 + t) * b[0], 0.5 * (1.0 - t) * a[1] + 0.5 * (1.0 + t) * b[1]];
            let beta = (disc.spec.beta)(x);
            let bn = beta[0] * se.normal[0] + beta[1] * se.normal[1];
            let sx = se.centered_arclength(x);
            for (l, pl) in legendre(k, t).into_iter().enumerate() {
                let ws = w * half * pl;
                rows[0][p * nk + l] += ws;
                rows[1][p * nk + l] += ws * bn;
                rows[2][p * nk + l] += ws * bn * sx;
            }
        }
    }
    rows
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthogonalize `v` against `basis` (two passes of modified Gram–Schmidt).
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
    }
}

/// Orthonormal change of basis whose leading rows span `rows`, after
/// dropping zero and near-dependent rows. Returns the transform, the number of
/// primal rows and the retained row indices.
pub fn change_of_basis(rows: &[Vec<f64>], m: usize, scale: f64) -> (Mat<f64>, usize, Vec<usize>) {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut retained = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        let n0 = dot(row, row).sqrt();
        if n0 <= 1e-12 * scale {
            continue;
        }
        let mut v = row.clone();
        orthogonalize(&mut v, &basis);
        let n1 = dot(&v, &v).sqrt();
        if n1 <= RANK_TOL * n0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n1);
        basis.push(v);
        retained.push(idx);
    }
    let n_primal = basis.len();
    for i in 0..m {
        if basis.len() == m {
            break;
        }
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        orthogonalize(&mut v, &basis);
        let n1 = dot(&v, &v).sqrt();
        if n1 > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n1);
            basis.push(v);
        }
    }
    debug_assert_eq!(basis.len(), m);
    (Mat::from_fn(m, m, |i, j| basis[i][j]), n_primal, retained)
}

/// Primal constraints and transforms of all subdomain edges.
#[derive(Debug, Clone)]
pub struct PrimalConstraintSet {
    pub variant: Variant,
    pub edges: Vec<EdgeConstraints>,
    /// coarse index of the first primal DOF of each edge
    pub primal_offset: Vec<usize>,
    pub n_primal: usize,
}

pub fn build_constraints(disc: &Discretization, variant: Variant) -> PrimalConstraintSet {
    let edges: Vec<EdgeConstraints> = (0..disc.interface.len())
        .into_par_iter()
        .map(|s| {
            let raw = constraint_rows(disc, s);
            let m = raw[0].len();
            let scale = dot(&raw[0], &raw[0]).sqrt();
            match variant.candidates() {
                Some(nc) => {
                    let (transform, n_primal, retained) = change_of_basis(&raw[..nc], m, scale);
                    EdgeConstraints {
                        raw: raw.to_vec(),
                        retained,
                        n_primal,
                        transform,
                        sign: 1.0,
                    }
                }
                None => {
                    let n_primal = if variant == Variant::AllPrimal { m } else { 0 };
                    EdgeConstraints {
                        raw: raw.to_vec(),
                        retained: Vec::new(),
                        n_primal,
                        transform: Mat::identity(m, m),
                        sign: 1.0,
                    }
                }
            }
        })
        .collect();
    let mut primal_offset = Vec::with_capacity(edges.len());
    let mut n_primal = 0;
    for e in &edges {
        primal_offset.push(n_primal);
        n_primal += e.n_primal;
    }
    PrimalConstraintSet {
        variant,
        edges,
        primal_offset,
        n_primal,
    }
}

/// Vector of the partially assembled space `Λ̃_Γ`: dual values per subdomain
/// and global primal values, all in transformed coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialVector {
    pub dual: Vec<Vec<f64>>,
    pub primal: Vec<f64>,
}

#[derive(Debug)]
struct SubdomainBddc {
    n_interior: usize,
    /// transformed interface index of each local dual DOF
    dual_global: Vec<usize>,
    /// coarse index of each local primal DOF
    primal_global: Vec<usize>,
    lu_rr: Option<SparseLu>,
    /// `Â_Πr`
    a_pr: Mat<f64>,
    /// `Â_rr⁻¹ Â_rΠ`
    x: Mat<f64>,
    /// `Â_ΠΠ − Â_Πr Â_rr⁻¹ Â_rΠ`
    coarse: Mat<f64>,
}

/// `M⁻¹ = R̃_{D,Γ}ᵀ S̃_Γ⁻¹ R̃_{D,Γ}`
#[derive(Debug)]
pub struct BddcPreconditioner {
    pub variant: Variant,
    pub constraints: PrimalConstraintSet,
    /// interface range of each subdomain edge
    blocks: Vec<std::ops::Range<usize>>,
    subs: Vec<SubdomainBddc>,
    coarse: CsrMatrix,
    coarse_lu: Option<SparseLu>,
    n_gamma: usize,
}

impl BddcPreconditioner {
    pub fn new(disc: &Discretization, iface: &InterfaceOperator, variant: Variant) -> Result<Self> {
        let constraints = build_constraints(disc, variant);
        let blocks: Vec<_> = (0..disc.interface.len()).map(|s| disc.dofs.interface_block(s)).collect();
        let fail = |reason: String| Error::Preconditioner {
            variant: variant.to_string(),
            epsilon: disc.spec.epsilon,
            reason,
        };
        if variant == Variant::None {
            return Ok(Self {
                variant,
                constraints,
                blocks,
                subs: Vec::new(),
                coarse: CsrMatrix::zeros(0, 0),
                coarse_lu: None,
                n_gamma: iface.dim(),
            });
        }
        let subs: Vec<SubdomainBddc> = iface
            .subs
            .par_iter()
            .map(|s| build_local(s, &constraints, &blocks).map_err(|e| fail(format!("subdomain {}: {e}", s.index))))
            .collect::<Result<_>>()?;
        let mut trips = Vec::new();
        for s in &subs {
            for (a, &ga) in s.primal_global.iter().enumerate() {
                for (b, &gb) in s.primal_global.iter().enumerate() {
                    trips.push((ga, gb, s.coarse[(a, b)]));
                }
            }
        }
        let n_c = constraints.n_primal;
        let coarse = CsrMatrix::from_triplets(n_c, n_c, &trips);
        let coarse_lu = SparseLu::factor(&coarse).map_err(|e| fail(format!("coarse problem: {e}")))?;
        Ok(Self {
            variant,
            constraints,
            blocks,
            subs,
            coarse,
            coarse_lu: Some(coarse_lu),
            n_gamma: iface.dim(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n_gamma
    }

    pub fn coarse_dim(&self) -> usize {
        self.constraints.n_primal
    }

    pub fn coarse_matrix(&self) -> &CsrMatrix {
        &self.coarse
    }

    /// `ŵ = T w`, edge by edge.
    pub fn to_transformed(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        for (b, e) in self.blocks.iter().zip(&self.constraints.edges) {
            let y = mat_vec(&e.transform, &w[b.clone()]);
            out[b.clone()].copy_from_slice(&y);
        }
        out
    }

    /// `w = Tᵀ ŵ`
    pub fn from_transformed(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        for (b, e) in self.blocks.iter().zip(&self.constraints.edges) {
            let t = &e.transform;
            for (i, wi) in w[b.clone()].iter().enumerate() {
                for j in 0..t.ncols() {
                    out[b.start + j] += t[(i, j)] * wi;
                }
            }
        }
        out
    }

    fn primal_of(&self, w_hat: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.constraints.n_primal];
        for (s, b) in self.blocks.iter().enumerate() {
            let off = self.constraints.primal_offset[s];
            let n = self.constraints.edges[s].n_primal;
            out[off..off + n].copy_from_slice(&w_hat[b.start..b.start + n]);
        }
        out
    }

    fn write_primal(&self, primal: &[f64], w_hat: &mut [f64]) {
        for (s, b) in self.blocks.iter().enumerate() {
            let off = self.constraints.primal_offset[s];
            let n = self.constraints.edges[s].n_primal;
            w_hat[b.start..b.start + n].copy_from_slice(&primal[off..off + n]);
        }
    }

    /// `R̃_Γ w`
    pub fn restrict(&self, w: &[f64]) -> PartialVector {
        let wh = self.to_transformed(w);
        PartialVector {
            dual: self.subs.iter().map(|s| s.dual_global.iter().map(|&g| wh[g]).collect()).collect(),
            primal: self.primal_of(&wh),
        }
    }

    /// `R̃_{D,Γ} w`
    pub fn restrict_scaled(&self, w: &[f64]) -> PartialVector {
        let mut p = self.restrict(w);
        p.dual.iter_mut().flatten().for_each(|v| *v *= 0.5);
        p
    }

    fn extend_with(&self, x: &PartialVector, weight: f64) -> Vec<f64> {
        let mut wh = vec![0.0; self.n_gamma];
        self.write_primal(&x.primal, &mut wh);
        for (s, d) in self.subs.iter().zip(&x.dual) {
            for (&g, v) in s.dual_global.iter().zip(d) {
                wh[g] += weight * v;
            }
        }
        self.from_transformed(&wh)
    }

    /// `R̃_{D,Γ}ᵀ x`
    pub fn extend_scaled(&self, x: &PartialVector) -> Vec<f64> {
        self.extend_with(x, 0.5)
    }

    /// `R̃_Γᵀ x`
    pub fn extend(&self, x: &PartialVector) -> Vec<f64> {
        self.extend_with(x, 1.0)
    }

    /// `E_D w̃ = R̃_Γ R̃_{D,Γ}ᵀ w̃`
    pub fn apply_average(&self, w: &PartialVector) -> PartialVector {
        self.restrict(&self.extend_scaled(w))
    }

    /// Solve `S̃_Γ x = R̃_{D,Γ} r` by subdomain solves plus one coarse solve.
    pub fn solve_partial(&self, r: &[f64]) -> PartialVector {
        let rh = self.to_transformed(r);
        let locals: Vec<(Vec<f64>, Vec<f64>)> = self
            .subs
            .par_iter()
            .map(|s| {
                let mut g = vec![0.0; s.n_interior];
                g.extend(s.dual_global.iter().map(|&q| 0.5 * rh[q]));
                if let Some(lu) = &s.lu_rr {
                    lu.solve_in_place(&mut g);
                }
                let c = mat_vec(&s.a_pr, &g);
                (g, c)
            })
            .collect();
        let mut coarse_rhs = self.primal_of(&rh);
        for (s, (_, c)) in self.subs.iter().zip(&locals) {
            for (&gidx, v) in s.primal_global.iter().zip(c) {
                coarse_rhs[gidx] -= v;
            }
        }
        let u_pi = match &self.coarse_lu {
            Some(lu) => lu.solve(&coarse_rhs),
            None => coarse_rhs,
        };
        let dual = self
            .subs
            .par_iter()
            .zip(locals)
            .map(|(s, (y, _))| {
                let up: Vec<f64> = s.primal_global.iter().map(|&g| u_pi[g]).collect();
                let xu = mat_vec(&s.x, &up);
                y[s.n_interior..].iter().zip(&xu[s.n_interior..]).map(|(a, b)| a - b).collect()
            })
            .collect();
        PartialVector { dual, primal: u_pi }
    }

    /// `M⁻¹ r`
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        if self.variant == Variant::None {
            return r.to_vec();
        }
        self.extend_scaled(&self.solve_partial(r))
    }

    /// Dense partially assembled operator and restriction matrices (small
    /// problems only).
    pub fn dense_partial(&self, iface: &InterfaceOperator) -> DensePartial {
        let n_dual: Vec<usize> = self.subs.iter().map(|s| s.dual_global.len()).collect();
        let mut offs = Vec::with_capacity(n_dual.len());
        let mut total = 0;
        for n in &n_dual {
            offs.push(total);
            total += n;
        }
        let dim = total + self.constraints.n_primal;
        let mut s_tilde = Mat::<f64>::zeros(dim, dim);
        // transformed-interface index of each coarse DOF
        let mut primal_pos = vec![0; self.constraints.n_primal];
        for (s, b) in self.blocks.iter().enumerate() {
            for j in 0..self.constraints.edges[s].n_primal {
                primal_pos[self.constraints.primal_offset[s] + j] = b.start + j;
            }
        }
        for (i, sub) in iface.subs.iter().enumerate() {
            let t = local_transform(sub, &self.constraints);
            let sd = sub.dense_schur();
            let sh = &t * &sd * t.transpose();
            // position in Λ̃ of every local transformed interface DOF
            let mut place = Vec::with_capacity(sub.n_gamma());
            let mut d = 0;
            for (p, &s) in sub.edges.iter().enumerate() {
                let np = self.constraints.edges[s].n_primal;
                for j in 0..sub.edge_blocks[p].len() {
                    if j < np {
                        place.push(total + self.constraints.primal_offset[s] + j);
                    } else {
                        place.push(offs[i] + d);
                        d += 1;
                    }
                }
            }
            for a in 0..place.len() {
                for b in 0..place.len() {
                    s_tilde[(place[a], place[b])] += sh[(a, b)];
                }
            }
        }
        let ng = self.n_gamma;
        let mut t_full = Mat::<f64>::zeros(ng, ng);
        for (b, e) in self.blocks.iter().zip(&self.constraints.edges) {
            for i in 0..b.len() {
                for j in 0..b.len() {
                    t_full[(b.start + i, b.start + j)] = e.transform[(i, j)];
                }
            }
        }
        let mut r_tilde = Mat::<f64>::zeros(dim, ng);
        let mut r_scaled = Mat::<f64>::zeros(dim, ng);
        for (i, s) in self.subs.iter().enumerate() {
            for (p, &q) in s.dual_global.iter().enumerate() {
                for j in 0..ng {
                    r_tilde[(offs[i] + p, j)] = t_full[(q, j)];
                    r_scaled[(offs[i] + p, j)] = 0.5 * t_full[(q, j)];
                }
            }
        }
        for (c, &q) in primal_pos.iter().enumerate() {
            for j in 0..ng {
                r_tilde[(total + c, j)] = t_full[(q, j)];
                r_scaled[(total + c, j)] = t_full[(q, j)];
            }
        }
        DensePartial {
            s_tilde,
            r_tilde,
            r_scaled,
            dual_offsets: offs,
            n_dual_total: total,
        }
    }
}

/// Dense `S̃_Γ`, `R̃_Γ` and `R̃_{D,Γ}` over `Λ̃_Γ` (dual blocks per subdomain,
/// then primal).
#[derive(Debug, Clone)]
pub struct DensePartial {
    pub s_tilde: Mat<f64>,
    pub r_tilde: Mat<f64>,
    pub r_scaled: Mat<f64>,
    pub dual_offsets: Vec<usize>,
    pub n_dual_total: usize,
}

impl DensePartial {
    /// `R̃_{D,Γ}ᵀ S̃_Γ⁻¹ R̃_{D,Γ}`
    pub fn preconditioner(&self) -> Result<Mat<f64>> {
        let inv = dense_inverse(&self.s_tilde)?;
        Ok(self.r_scaled.transpose() * &inv * &self.r_scaled)
    }

    pub fn flatten(&self, x: &PartialVector) -> Vec<f64> {
        let mut out: Vec<f64> = x.dual.iter().flatten().copied().collect();
        out.extend_from_slice(&x.primal);
        out
    }
}

/// Block-diagonal transform of a subdomain's local interface vector.
fn local_transform(sub: &SubdomainSystem, cs: &PrimalConstraintSet) -> Mat<f64> {
    let n = sub.n_gamma();
    let mut t = Mat::<f64>::zeros(n, n);
    for (p, &s) in sub.edges.iter().enumerate() {
        let b = &sub.edge_blocks[p];
        let tr = &cs.edges[s].transform;
        for i in 0..b.len() {
            for j in 0..b.len() {
                t[(b.start + i, b.start + j)] = tr[(i, j)];
            }
        }
    }
    t
}

fn build_local(sub: &SubdomainSystem, cs: &PrimalConstraintSet, blocks: &[std::ops::Range<usize>]) -> Result<SubdomainBddc> {
    let n_i = sub.n_interior();
    let n_g = sub.n_gamma();
    // classify local transformed interface DOFs
    let mut is_primal = vec![false; n_g];
    let mut dual_global = Vec::new();
    let mut primal_global = Vec::new();
    let mut local_index = vec![0usize; n_g];
    let mut n_d = 0;
    let mut n_p = 0;
    for (p, &s) in sub.edges.iter().enumerate() {
        let np = cs.edges[s].n_primal;
        for j in 0..sub.edge_blocks[p].len() {
            let l = sub.edge_blocks[p].start + j;
            if j < np {
                is_primal[l] = true;
                primal_global.push(cs.primal_offset[s] + j);
                local_index[l] = n_p;
                n_p += 1;
            } else {
                dual_global.push(blocks[s].start + j);
                local_index[l] = n_d;
                n_d += 1;
            }
        }
    }
    let n_r = n_i + n_d;
    let t = local_transform(sub, cs);
    let a_gg = &t * sub.a_gg.to_dense() * t.transpose();

    // Â_IΓ = A_IΓ Tᵀ and Â_ΓI = T A_ΓI, sparse with dense edge blocks
    let block_of: Vec<std::ops::Range<usize>> = {
        let mut v = vec![0..0; n_g];
        for b in &sub.edge_blocks {
            for l in b.clone() {
                v[l] = b.clone();
            }
        }
        v
    };
    let mut trips_rr = Vec::new();
    let mut a_rp = Mat::<f64>::zeros(n_r, n_p);
    let mut a_pr = Mat::<f64>::zeros(n_p, n_r);
    for (r, c, v) in sub.a_ii.iter() {
        trips_rr.push((r, c, v));
    }
    for (r, c, v) in sub.a_ig.iter() {
        for j in block_of[c].clone() {
            let w = v * t[(j, c)];
            if is_primal[j] {
                a_rp[(r, local_index[j])] += w;
            } else {
                trips_rr.push((r, n_i + local_index[j], w));
            }
        }
    }
    for (r, c, v) in sub.a_gi.iter() {
        for j in block_of[r].clone() {
            let w = t[(j, r)] * v;
            if is_primal[j] {
                a_pr[(local_index[j], c)] += w;
            } else {
                trips_rr.push((n_i + local_index[j], c, w));
            }
        }
    }
    let mut a_pp = Mat::<f64>::zeros(n_p, n_p);
    for a in 0..n_g {
        for b in 0..n_g {
            let v = a_gg[(a, b)];
            if v == 0.0 {
                continue;
            }
            let (la, lb) = (local_index[a], local_index[b]);
            match (is_primal[a], is_primal[b]) {
                (false, false) => trips_rr.push((n_i + la, n_i + lb, v)),
                (false, true) => a_rp[(n_i + la, lb)] += v,
                (true, false) => a_pr[(la, n_i + lb)] += v,
                (true, true) => a_pp[(la, lb)] += v,
            }
        }
    }
    let a_rr = CsrMatrix::from_triplets(n_r, n_r, &trips_rr);
    let lu_rr = if n_r > 0 { Some(SparseLu::factor(&a_rr)?) } else { None };
    let x = match &lu_rr {
        Some(lu) => lu.solve_mat(&a_rp),
        None => Mat::zeros(0, n_p),
    };
    let coarse = if n_r > 0 { &a_pp - &a_pr * &x } else { a_pp };
    Ok(SubdomainBddc {
        n_interior: n_i,
        dual_global,
        primal_global,
        lu_rr,
        a_pr,
        x,
        coarse,
    })
}
