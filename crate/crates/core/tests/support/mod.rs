//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use faer::linalg::solvers::Solve;
use faer::Mat;
use hdgbddc::mesh::{build_structured_mesh, Diagonal};
use hdgbddc::{Discretization, ProblemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn disc(nsub: usize, ratio: usize, k: usize, spec: ProblemSpec, diag: Diagonal) -> Discretization {
    let mesh = build_structured_mesh(nsub, nsub, ratio, diag).unwrap();
    Discretization::new(mesh, spec, k).unwrap()
}

pub fn rvec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

pub fn dense_apply(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
}

/// Solution of the uncondensed HDG system, all element unknowns and free
/// traces together, by one dense LU.
pub struct SaddleSolution {
    pub lambda: Vec<f64>,
    /// scalar coefficients `u_h` of every element
    pub u: Vec<Vec<f64>>,
}

/// Rows per element: `A q + Bᵗ u + Cᵗ λ = 0`, `B q + R u + S₁ λ = F`.
/// Rows per free trace DOF: `Σ_K (C q + S₂ u + T λ) = 0`.
/// Boundary traces are fixed to the projected Dirichlet data.
pub fn saddle_solve(disc: &Discretization) -> SaddleSolution {
    let nt = disc.mesh.triangles.len();
    let nk = disc.degree() + 1;
    let els: Vec<_> = (0..nt).map(|t| disc.element(t).unwrap()).collect();
    let d = els[0].scalar_dim();
    let blk = 3 * d;
    let off = nt * blk;
    let n = off + disc.n_dofs();
    let mut m = Mat::<f64>::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for (t, el) in els.iter().enumerate() {
        let base = t * blk;
        let k = el.k_local();
        for i in 0..blk {
            for j in 0..blk {
                m[(base + i, base + j)] = k[(i, j)];
            }
        }
        for i in 0..d {
            rhs[base + 2 * d + i] = el.load[i];
        }
        // local trace index -> global column, or boundary data
        let mut traces: Vec<Result<usize, f64>> = Vec::with_capacity(3 * nk);
        for &edge in &disc.mesh.triangle_edges[t] {
            match disc.dofs.edge_dofs(edge) {
                Some(r) => traces.extend(r.map(|g| Ok(off + g))),
                None => traces.extend(disc.boundary[edge].as_ref().unwrap().iter().map(|&v| Err(v))),
            }
        }
        for (l, tr) in traces.iter().enumerate() {
            // coupling of the trace into the local equations
            for i in 0..2 * d {
                let v = el.c[(l, i)];
                match tr {
                    Ok(col) => m[(base + i, *col)] += v,
                    Err(g) => rhs[base + i] -= v * g,
                }
            }
            for i in 0..d {
                let v = el.s1[(i, l)];
                match tr {
                    Ok(col) => m[(base + 2 * d + i, *col)] += v,
                    Err(g) => rhs[base + 2 * d + i] -= v * g,
                }
            }
            // trace equation
            let Ok(row) = tr else { continue };
            for j in 0..2 * d {
                m[(*row, base + j)] += el.c[(l, j)];
            }
            for j in 0..d {
                m[(*row, base + 2 * d + j)] += el.s2[(l, j)];
            }
            for (j, tj) in traces.iter().enumerate() {
                match tj {
                    Ok(col) => m[(*row, *col)] += el.t[(l, j)],
                    Err(g) => rhs[*row] -= el.t[(l, j)] * g,
                }
            }
        }
    }
    let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
    let x = m.partial_piv_lu().solve(&b);
    SaddleSolution {
        lambda: (off..n).map(|i| x[(i, 0)]).collect(),
        u: (0..nt).map(|t| (0..d).map(|i| x[(t * blk + 2 * d + i, 0)]).collect()).collect(),
    }
}

fn legendre3(k: usize, t: f64) -> Vec<f64> {
    [1.0, t, 1.5 * t * t - 0.5][..=k].to_vec()
}

/// Orthonormal basis of the span of the candidate primal functionals of one
/// subdomain edge: `∫ w`, `∫ β·n w` and `∫ β·n s w` in that order, the first
/// `count` of them.
pub fn edge_functionals(disc: &Discretization, s: usize, count: usize) -> Vec<Vec<f64>> {
    let se = &disc.interface[s];
    let k = disc.degree();
    let nk = k + 1;
    let g = (0.6f64).sqrt();
    let rule = [(-g, 5.0 / 9.0), (0.0, 8.0 / 9.0), (g, 5.0 / 9.0)];
    let mid = se.midpoint();
    let mut rows = vec![vec![0.0; se.mesh_edges.len() * nk]; 3];
    for (p, &e) in se.mesh_edges.iter().enumerate() {
        let [a, b] = disc.mesh.edge_points(e);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        for &(t, w) in &rule {
            let x = [a[0] + 0.5 * (1.0 + t) * (b[0] - a[0]), a[1] + 0.5 * (1.0 + t) * (b[1] - a[1])];
            let beta = (disc.spec.beta)(x);
            let bn = beta[0] * se.normal[0] + beta[1] * se.normal[1];
            let arc = (x[0] - mid[0]) * se.tangent[0] + (x[1] - mid[1]) * se.tangent[1];
            for (l, pl) in legendre3(k, t).into_iter().enumerate() {
                let v = 0.5 * len * w * pl;
                rows[0][p * nk + l] += v;
                rows[1][p * nk + l] += v * bn;
                rows[2][p * nk + l] += v * bn * arc;
            }
        }
    }
    let scale = rows[0].iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut r in rows.into_iter().take(count) {
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
                r.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-8 * scale {
            basis.push(r.into_iter().map(|v| v / n).collect());
        }
    }
    basis
}

/// Dense BDDC preconditioner from its variational definition: find the
/// subdomain interface vectors `w_i`, continuous in the primal functionals,
/// with `Σ_i S_i w_i = ½ R_i r` against all such vectors, and return
/// `Σ_i ½ R_iᵀ w_i`. `count = None` makes every interface DOF primal.
pub fn bddc_oracle(disc: &Discretization, iface: &hdgbddc::InterfaceOperator, count: Option<usize>) -> Mat<f64> {
    let subs = &iface.subs;
    let offs: Vec<usize> = subs
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.n_gamma();
            Some(o)
        })
        .collect();
    let nw: usize = subs.iter().map(|s| s.n_gamma()).sum();
    // local position of interface index g in subdomain i
    let pos = |i: usize, g: usize| offs[i] + subs[i].gamma.iter().position(|&x| x == g).unwrap();
    let mut cons: Vec<Vec<(usize, f64)>> = Vec::new();
    for (s, se) in disc.interface.iter().enumerate() {
        let block = disc.dofs.interface_block(s);
        let funcs = match count {
            Some(c) => edge_functionals(disc, s, c),
            None => (0..block.len()).map(|a| (0..block.len()).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect(),
        };
        let (i, j) = se.subdomains;
        for q in funcs {
            let mut row = Vec::new();
            for (l, g) in block.clone().enumerate() {
                row.push((pos(i, g), q[l]));
                row.push((pos(j, g), -q[l]));
            }
            cons.push(row);
        }
    }
    let n = nw + cons.len();
    let mut kkt = Mat::<f64>::zeros(n, n);
    for (i, s) in subs.iter().enumerate() {
        let d = s.dense_schur();
        for a in 0..s.n_gamma() {
            for b in 0..s.n_gamma() {
                kkt[(offs[i] + a, offs[i] + b)] = d[(a, b)];
            }
        }
    }
    for (c, row) in cons.iter().enumerate() {
        for &(col, v) in row {
            kkt[(nw + c, col)] += v;
            kkt[(col, nw + c)] += v;
        }
    }
    let ng = iface.dim();
    let mut rhs = Mat::<f64>::zeros(n, ng);
    for (i, s) in subs.iter().enumerate() {
        for (a, &g) in s.gamma.iter().enumerate() {
            rhs[(offs[i] + a, g)] = 0.5;
        }
    }
    let w = kkt.partial_piv_lu().solve(&rhs);
    let mut out = Mat::<f64>::zeros(ng, ng);
    for (i, s) in subs.iter().enumerate() {
        for (a, &g) in s.gamma.iter().enumerate() {
            for c in 0..ng {
                out[(g, c)] += 0.5 * w[(offs[i] + a, c)];
            }
        }
    }
    out
}
