//! Trace norms, the `B_Γ`/`Z_Γ` interface forms, `γ_{h,τ}` and sampled
//! field-of-values constants of the preconditioned operator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_trace_system, Discretization};
use crate::dd::InterfaceOperator;
use crate::linalg::{dot, CsrMatrix};

/// Per-edge `∫ λ²` and `∫ λ` from Legendre coefficients on an edge of length `len`.
fn edge_moments(c: &[f64], len: f64) -> (f64, f64) {
    let sq: f64 = c.iter().enumerate().map(|(l, v)| v * v / (2 * l + 1) as f64).sum();
    (len * sq, len * c[0])
}

fn per_element<F>(disc: &Discretization, lambda: &[f64], with_boundary: bool, f: F) -> f64
where
    F: Fn(&[f64], &[f64; 3], f64) -> f64 + Sync,
{
    let parts: Vec<f64> = (0..disc.mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let c = disc.gather(t, lambda, with_boundary);
            let lens: [f64; 3] = std::array::from_fn(|e| disc.mesh.edge_length(disc.mesh.triangle_edges[t][e]));
            let area = disc.mesh.signed_area(t).abs();
            f(&c, &lens, area)
        })
        .collect();
    parts.iter().sum()
}

/// `‖λ‖_h² = Σ_K |K|/|∂K| ‖λ‖²_{∂K}`. With `with_boundary` the Dirichlet
/// values fill the boundary edges, otherwise they count as zero.
pub fn norm_h(disc: &Discretization, lambda: &[f64], with_boundary: bool) -> f64 {
    let nk = disc.degree() + 1;
    per_element(disc, lambda, with_boundary, |c, lens, area| {
        let perim: f64 = lens.iter().sum();
        let sq: f64 = (0..3).map(|e| edge_moments(&c[e * nk..(e + 1) * nk], lens[e]).0).sum();
        area / perim * sq
    })
    .sqrt()
}

/// `|||λ|||² = Σ_K ‖λ − m_K(λ)‖²_{∂K} / |∂K|` with `m_K` the boundary mean.
pub fn jump_seminorm(disc: &Discretization, lambda: &[f64], with_boundary: bool) -> f64 {
    let nk = disc.degree() + 1;
    per_element(disc, lambda, with_boundary, |c, lens, _| {
        let perim: f64 = lens.iter().sum();
        let mean = (0..3).map(|e| lens[e] * c[e * nk]).sum::<f64>() / perim;
        let mut s = 0.0;
        for e in 0..3 {
            let ce = &c[e * nk..(e + 1) * nk];
            s += lens[e] * (ce[0] - mean).powi(2);
            s += lens[e] * ce.iter().enumerate().skip(1).map(|(l, v)| v * v / (2 * l + 1) as f64).sum::<f64>();
        }
        s / perim
    })
    .max(0.0)
    .sqrt()
}

/// `γ_{h,τ} = max_K max_{e ⊂ ∂K} (1 + τ_e h_K)`
pub fn gamma_stat(disc: &Discretization) -> f64 {
    disc.elements
        .iter()
        .flat_map(|el| el.tau.iter().map(move |t| 1.0 + t * el.h))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Symmetric and skew parts of the global trace matrix, used through the
/// discrete harmonic extension of interface vectors.
#[derive(Debug)]
pub struct InterfaceForms<'a> {
    pub iface: &'a InterfaceOperator,
    pub b: CsrMatrix,
    pub z: CsrMatrix,
}

impl<'a> InterfaceForms<'a> {
    pub fn new(disc: &Discretization, iface: &'a InterfaceOperator) -> Self {
        let sys = assemble_trace_system(disc);
        Self {
            iface,
            b: sys.symmetric_part(),
            z: sys.skew_part(),
        }
    }

    /// `λ_A`: interior values `−A_II⁻¹ A_IΓ λ_Γ` per subdomain, `λ_Γ` on Γ.
    pub fn extend(&self, lambda_g: &[f64]) -> Vec<f64> {
        let parts: Vec<Vec<f64>> = self
            .iface
            .subs
            .par_iter()
            .map(|s| s.extend_interior(&s.restrict(lambda_g)))
            .collect();
        let mut out = vec![0.0; self.iface.n_interior + self.iface.n_gamma];
        for (s, p) in self.iface.subs.iter().zip(parts) {
            out[s.interior.clone()].copy_from_slice(&p);
        }
        out[self.iface.n_interior..].copy_from_slice(lambda_g);
        out
    }

    /// `(⟨λ_Γ, μ_Γ⟩_{B_Γ}, ⟨λ_Γ, μ_Γ⟩_{Z_Γ})`
    pub fn inner(&self, lambda_g: &[f64], mu_g: &[f64]) -> (f64, f64) {
        let la = self.extend(lambda_g);
        let ma = self.extend(mu_g);
        (dot(&ma, &self.b.matvec(&la)), dot(&ma, &self.z.matvec(&la)))
    }

    pub fn b_inner(&self, lambda_g: &[f64], mu_g: &[f64]) -> f64 {
        let la = self.extend(lambda_g);
        let ma = self.extend(mu_g);
        dot(&ma, &self.b.matvec(&la))
    }

    /// `‖λ‖_B` of a full trace vector (no extension).
    pub fn norm_b(&self, lambda: &[f64]) -> f64 {
        dot(lambda, &self.b.matvec(lambda)).max(0.0).sqrt()
    }
}

/// Sampled constants `c_est = min ⟨v,Tv⟩_B/⟨v,v⟩_B` and
/// `C_est = max ⟨Tv,Tv⟩_B/⟨v,v⟩_B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldOfValues {
    pub c_est: f64,
    pub big_c_est: f64,
    pub samples: usize,
}

pub fn field_of_values(
    apply_t: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    b_inner: &(dyn Fn(&[f64], &[f64]) -> f64 + Sync),
    samples: &[Vec<f64>],
) -> FieldOfValues {
    let quotients: Vec<Option<(f64, f64)>> = samples
        .par_iter()
        .map(|v| {
            let vv = b_inner(v, v);
            if vv <= 0.0 || !vv.is_finite() {
                return None;
            }
            let tv = apply_t(v);
            Some((b_inner(&tv, v) / vv, b_inner(&tv, &tv) / vv))
        })
        .collect();
    let mut c = f64::INFINITY;
    let mut big_c = 0.0f64;
    let mut n = 0;
    for (lo, hi) in quotients.into_iter().flatten() {
        c = c.min(lo);
        big_c = big_c.max(hi);
        n += 1;
    }
    FieldOfValues {
        c_est: if n == 0 { f64::NAN } else { c },
        big_c_est: if n == 0 { f64::NAN } else { big_c },
        samples: n,
    }
}

/// Random unit vectors (seeded).
pub fn random_unit_vectors(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nv = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= nv);
            v
        })
        .collect()
}

/// GMRES residual bound `(1 − c²/C)^{m/2}`, with `C` the bound on
/// `⟨Tu,Tu⟩_B / ⟨u,u⟩_B`.
pub fn envelope(fov: &FieldOfValues, m: usize) -> f64 {
    let rho = (1.0 - fov.c_est * fov.c_est / fov.big_c_est).max(0.0);
    rho.powf(m as f64 / 2.0)
}

/// Compare a residual history with the envelope. Returns the largest ratio
/// `history[m] / envelope(m)`; values above 1 mean the sampled constants are
/// too loose to certify the observed decay.
pub fn envelope_ratio(history: &[f64], fov: &FieldOfValues) -> Option<f64> {
    if !(fov.c_est > 0.0) || history.is_empty() {
        return None;
    }
    let h0 = history[0];
    Some(
        history
            .iter()
            .enumerate()
            .map(|(m, r)| r / h0 / envelope(fov, m))
            .fold(0.0, f64::max),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub norm_h: f64,
    pub jump: f64,
    pub norm_b: f64,
    pub gamma: f64,
    pub c_est: f64,
    pub big_c_est: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bddc::{BddcPreconditioner, Variant};
    use crate::fespace::legendre;
    use crate::hdg::{ProblemSpec, TauStrategy};
    use crate::krylov::preconditioned_operator;
    use crate::mesh::{build_structured_mesh, Diagonal};
    use std::sync::Arc;

    fn spec(rot: bool, eps: f64) -> ProblemSpec {
        ProblemSpec {
            name: "t".into(),
            epsilon: eps,
            beta: if rot { Arc::new(|p| [p[1], -p[0]]) } else { Arc::new(|p| [0.5 * (1.0 + p[1]), 0.0]) },
            div_beta: Arc::new(|_| 0.0),
            f: Arc::new(|_| 0.0),
            g: Arc::new(|_| 1.0),
            tau: TauStrategy::Upwind,
        }
    }

    fn disc(n: usize, r: usize, k: usize, rot: bool, eps: f64) -> Discretization {
        Discretization::new(build_structured_mesh(n, n, r, Diagonal::Alternating).unwrap(), spec(rot, eps), k).unwrap()
    }

    fn constant(d: &Discretization) -> Vec<f64> {
        let nk = d.degree() + 1;
        (0..d.n_dofs()).map(|i| if i % nk == 0 { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn norm_examples() {
        let d = disc(2, 2, 1, false, 1.0);
        let one = constant(&d);
        assert!((norm_h(&d, &one, true) - 2.0).abs() < 1e-13);
        assert!(jump_seminorm(&d, &one, true) < 1e-7);
        let zero = vec![0.0; d.n_dofs()];
        assert_eq!(norm_h(&d, &zero, false), 0.0);
    }

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn norm_h_matches_quadrature() {
        let d = disc(2, 2, 2, true, 1.0);
        let lam = rand_vec(d.n_dofs(), 3);
        let nk = 3;
        let rule = crate::fespace::EdgeRule::new(12).unwrap();
        let mut want = 0.0;
        for t in 0..d.mesh.triangles.len() {
            let mut sq = 0.0;
            let mut perim = 0.0;
            for &e in &d.mesh.triangle_edges[t] {
                let len = d.mesh.edge_length(e);
                perim += len;
                let c = d.dofs.edge_dofs(e).map(|r| lam[r].to_vec()).unwrap_or(vec![0.0; nk]);
                for (&s, &w) in rule.points.iter().zip(&rule.weights) {
                    let v: f64 = legendre(2, s).iter().zip(&c).map(|(p, c)| p * c).sum();
                    sq += 0.5 * len * w * v * v;
                }
            }
            want += d.mesh.signed_area(t).abs() / perim * sq;
        }
        assert!((norm_h(&d, &lam, false) - want.sqrt()).abs() < 1e-13 * want.sqrt());
    }

    #[test]
    fn jump_zero_for_constants_and_homogeneous() {
        let d = disc(1, 1, 0, false, 1.0);
        let lam = vec![2.5; d.n_dofs()];
        assert!(jump_seminorm(&d, &lam, false) > 0.0);
        assert!(jump_seminorm(&d, &vec![1.0; d.n_dofs()], true) < 1e-7);
        let j1 = jump_seminorm(&d, &lam, false);
        let scaled: Vec<f64> = lam.iter().map(|v| -3.0 * v).collect();
        assert!((jump_seminorm(&d, &scaled, false) - 3.0 * j1).abs() < 1e-12 * j1);
    }

    #[test]
    fn gamma_examples() {
        let d = disc(2, 2, 0, false, 1.0);
        let mut want = f64::NEG_INFINITY;
        for t in 0..d.mesh.triangles.len() {
            let geo = crate::hdg::ElementGeometry::new(&d.mesh, t);
            for e in 0..3 {
                let (tau, _) = crate::hdg::eval_tau(&geo, e, &d.spec, &d.spaces).unwrap();
                want = want.max(1.0 + tau * geo.h);
            }
        }
        assert!((gamma_stat(&d) - want).abs() < 1e-14);
        assert!(gamma_stat(&d) > 1.0);
    }

    #[test]
    fn interface_forms() {
        for (rot, eps) in [(false, 1.0), (true, 1e-6)] {
            let d = disc(3, 2, 1, rot, eps);
            let iface = InterfaceOperator::new(&d).unwrap();
            let forms = InterfaceForms::new(&d, &iface);
            for seed in 0..5 {
                let l = rand_vec(iface.dim(), seed);
                let m = rand_vec(iface.dim(), seed + 100);
                let (b, z) = forms.inner(&l, &l);
                assert!(z.abs() < 1e-13 * b);
                assert!(b > 0.0);
                let sl = dot(&l, &iface.apply(&l));
                assert!((sl - b).abs() < 1e-11 * b.abs());
                // bilinear pairing reproduces the interface operator
                let (bm, zm) = forms.inner(&l, &m);
                let want = dot(&m, &iface.apply(&l));
                assert!((bm + zm - want).abs() < 1e-10 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn all_primal_field_of_values_is_one() {
        let d = disc(2, 2, 0, false, 1.0);
        let iface = InterfaceOperator::new(&d).unwrap();
        let forms = InterfaceForms::new(&d, &iface);
        let pre = BddcPreconditioner::new(&d, &iface, Variant::AllPrimal).unwrap();
        let t = preconditioned_operator(&iface, &pre);
        let fov = field_of_values(&t, &|a, b| forms.b_inner(a, b), &random_unit_vectors(iface.dim(), 10, 1));
        assert_eq!(fov.samples, 10);
        assert!((fov.c_est - 1.0).abs() < 1e-9 && (fov.big_c_est - 1.0).abs() < 1e-9);
        assert!(envelope(&fov, 3) < 1e-6);
    }

    #[test]
    fn bddc3_field_of_values_positive() {
        let d = disc(4, 6, 0, false, 1.0);
        let iface = InterfaceOperator::new(&d).unwrap();
        let forms = InterfaceForms::new(&d, &iface);
        let pre = BddcPreconditioner::new(&d, &iface, Variant::Bddc3).unwrap();
        let t = preconditioned_operator(&iface, &pre);
        let fov = field_of_values(&t, &|a, b| forms.b_inner(a, b), &random_unit_vectors(iface.dim(), 100, 2));
        assert!(fov.c_est > 0.0);
        assert!(fov.c_est * fov.c_est <= fov.big_c_est * (1.0 + 1e-12));
    }
}
