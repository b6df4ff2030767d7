//! Structured triangulations of `[-1, 1]²` split into a tensor grid of
//! rectangular subdomains, plus extraction of the subdomain interface.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// How each square cell is split into two triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diagonal {
    /// lower-left to upper-right
    Ne,
    /// lower-right to upper-left
    Nw,
    /// alternate NE/NW in a checkerboard ("union jack" at cell pairs)
    #[default]
    Alternating,
}

impl std::str::FromStr for Diagonal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ne" => Ok(Self::Ne),
            "nw" => Ok(Self::Nw),
            "alternating" | "alt" => Ok(Self::Alternating),
            other => Err(Error::Parse(format!("unknown diagonal '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeClass {
    Boundary,
    SubdomainInterior,
    Interface,
}

impl EdgeClass {
    fn code(self) -> char {
        match self {
            Self::Boundary => 'b',
            Self::SubdomainInterior => 'i',
            Self::Interface => 'g',
        }
    }
}

/// Conforming triangulation with subdomain partition.
///
/// Local edge `e` of a triangle joins its local vertices `e` and `(e+1) % 3`.
/// Mesh edges store their endpoints lexicographically ordered, which fixes the
/// global tangent and parametrization seen by both neighbours.
#[derive(Debug, Clone)]
pub struct Mesh2d {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
    /// incident triangles; the second slot is `None` on the domain boundary
    pub edge_triangles: Vec<(usize, Option<usize>)>,
    pub triangle_edges: Vec<[usize; 3]>,
    pub triangle_subdomain: Vec<usize>,
    pub edge_class: Vec<EdgeClass>,
    pub nsub_x: usize,
    pub nsub_y: usize,
    pub ratio: usize,
    pub h: f64,
    pub big_h: f64,
}

/// A maximal straight run of interface mesh edges shared by one pair of
/// subdomains.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainEdge {
    /// `(i, j)` with `i < j`
    pub subdomains: (usize, usize),
    /// mesh edges ordered along `tangent`
    pub mesh_edges: Vec<usize>,
    pub start: Point,
    pub end: Point,
    pub tangent: Point,
    /// outward unit normal of subdomain `subdomains.0`
    pub normal: Point,
}

impl SubdomainEdge {
    pub fn length(&self) -> f64 {
        dist(self.start, self.end)
    }

    pub fn midpoint(&self) -> Point {
        [
            0.5 * (self.start[0] + self.end[0]),
            0.5 * (self.start[1] + self.end[1]),
        ]
    }

    /// Arclength coordinate of `p` along the tangent, centered at the midpoint.
    pub fn centered_arclength(&self, p: Point) -> f64 {
        let m = self.midpoint();
        (p[0] - m[0]) * self.tangent[0] + (p[1] - m[1]) * self.tangent[1]
    }
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn lex_less(a: Point, b: Point) -> bool {
    a[0] < b[0] || (a[0] == b[0] && a[1] < b[1])
}

pub fn build_structured_mesh(
    nsub_x: usize,
    nsub_y: usize,
    ratio: usize,
    diagonal: Diagonal,
) -> Result<Mesh2d> {
    if nsub_x == 0 || nsub_y == 0 || ratio == 0 {
        return Err(Error::InvalidConfig(format!(
            "mesh needs positive subdomain counts and ratio, got {nsub_x}x{nsub_y}, ratio {ratio}"
        )));
    }
    let cx = nsub_x * ratio;
    let cy = nsub_y * ratio;
    let hx = 2.0 / cx as f64;
    let coord = |i: usize, n: usize| -> f64 {
        // exact at both ends so boundary tests can compare against ±1
        if i == n {
            1.0
        } else {
            -1.0 + 2.0 * i as f64 / n as f64
        }
    };
    let mut vertices = Vec::with_capacity((cx + 1) * (cy + 1));
    for j in 0..=cy {
        for i in 0..=cx {
            vertices.push([coord(i, cx), coord(j, cy)]);
        }
    }
    let vid = |i: usize, j: usize| j * (cx + 1) + i;

    let mut triangles = Vec::with_capacity(2 * cx * cy);
    let mut triangle_subdomain = Vec::with_capacity(2 * cx * cy);
    for j in 0..cy {
        for i in 0..cx {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            let ne = match diagonal {
                Diagonal::Ne => true,
                Diagonal::Nw => false,
                Diagonal::Alternating => (i + j) % 2 == 0,
            };
            if ne {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
            let s = (j / ratio) * nsub_x + i / ratio;
            triangle_subdomain.push(s);
            triangle_subdomain.push(s);
        }
    }

    let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut incident: Vec<Vec<usize>> = Vec::new();
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        let mut te = [0usize; 3];
        for (e, slot) in te.iter_mut().enumerate() {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            let key = if lex_less(vertices[a], vertices[b]) { [a, b] } else { [b, a] };
            let idx = *edge_index.entry(key).or_insert_with(|| {
                edges.push(key);
                incident.push(Vec::new());
                edges.len() - 1
            });
            incident[idx].push(t);
            *slot = idx;
        }
        triangle_edges.push(te);
    }
    let mut edge_triangles = Vec::with_capacity(edges.len());
    let mut edge_class = Vec::with_capacity(edges.len());
    for inc in &incident {
        match inc.as_slice() {
            [t] => {
                edge_triangles.push((*t, None));
                edge_class.push(EdgeClass::Boundary);
            }
            [t0, t1] => {
                edge_triangles.push((*t0, Some(*t1)));
                edge_class.push(if triangle_subdomain[*t0] == triangle_subdomain[*t1] {
                    EdgeClass::SubdomainInterior
                } else {
                    EdgeClass::Interface
                });
            }
            _ => unreachable!("structured mesh edge with {} triangles", inc.len()),
        }
    }

    Ok(Mesh2d {
        vertices,
        triangles,
        edges,
        edge_triangles,
        triangle_edges,
        triangle_subdomain,
        edge_class,
        nsub_x,
        nsub_y,
        ratio,
        h: hx,
        big_h: 2.0 / nsub_x.max(nsub_y) as f64,
    })
}

impl Mesh2d {
    pub fn n_subdomains(&self) -> usize {
        self.nsub_x * self.nsub_y
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn edge_points(&self, e: usize) -> [Point; 2] {
        let [a, b] = self.edges[e];
        [self.vertices[a], self.vertices[b]]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edge_points(e);
        dist(a, b)
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let [a, b] = self.edge_points(e);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Outward unit normal of triangle `t` on its local edge `local`.
    pub fn outward_normal(&self, t: usize, local: usize) -> Point {
        let pts = self.triangle_points(t);
        let p = pts[local];
        let q = pts[(local + 1) % 3];
        let len = dist(p, q);
        [(q[1] - p[1]) / len, -(q[0] - p[0]) / len]
    }

    /// Local index of mesh edge `e` within triangle `t`.
    pub fn local_edge(&self, t: usize, e: usize) -> Option<usize> {
        self.triangle_edges[t].iter().position(|&x| x == e)
    }

    pub fn subdomain_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_subdomains()];
        for (t, &s) in self.triangle_subdomain.iter().enumerate() {
            out[s].push(t);
        }
        out
    }

    /// Check the structural invariants; returns a description of the first
    /// violation found.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for t in 0..self.triangles.len() {
            if self.signed_area(t) <= 0.0 {
                return Err(format!("triangle {t} has non-positive area"));
            }
        }
        for (e, (&(t0, t1), class)) in self.edge_triangles.iter().zip(&self.edge_class).enumerate() {
            match (t1, class) {
                (None, EdgeClass::Boundary) => {}
                (Some(t1), EdgeClass::Interface) => {
                    if self.triangle_subdomain[t0] == self.triangle_subdomain[t1] {
                        return Err(format!("interface edge {e} inside one subdomain"));
                    }
                }
                (Some(t1), EdgeClass::SubdomainInterior) => {
                    if self.triangle_subdomain[t0] != self.triangle_subdomain[t1] {
                        return Err(format!("interior edge {e} spans two subdomains"));
                    }
                }
                _ => return Err(format!("edge {e} has inconsistent class {class:?}")),
            }
        }
        Ok(())
    }

    /// Plain-text dump: `v x y`, `t i j k s`, `e i j c` lines.
    pub fn write_text(&self, mut w: impl Write) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {}", v[0], v[1])?;
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            writeln!(w, "t {} {} {} {}", tri[0], tri[1], tri[2], self.triangle_subdomain[t])?;
        }
        for (e, ed) in self.edges.iter().enumerate() {
            writeln!(w, "e {} {} {}", ed[0], ed[1], self.edge_class[e].code())?;
        }
        Ok(())
    }
}

/// Group interface mesh edges into subdomain edges.
///
/// Runs are split wherever consecutive mesh edges stop being collinear or
/// contiguous, so cross points always terminate a run.
pub fn extract_interface(mesh: &Mesh2d) -> Vec<SubdomainEdge> {
    let mut by_pair: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (e, class) in mesh.edge_class.iter().enumerate() {
        if *class != EdgeClass::Interface {
            continue;
        }
        let (t0, t1) = mesh.edge_triangles[e];
        let (s0, s1) = (mesh.triangle_subdomain[t0], mesh.triangle_subdomain[t1.unwrap()]);
        by_pair.entry((s0.min(s1), s0.max(s1))).or_default().push(e);
    }

    let mut out = Vec::new();
    for ((si, sj), mut list) in by_pair {
        // sort along the lexicographic edge direction
        list.sort_by(|&a, &b| {
            let pa = mesh.edge_points(a)[0];
            let pb = mesh.edge_points(b)[0];
            pa[0].total_cmp(&pb[0]).then(pa[1].total_cmp(&pb[1]))
        });
        let mut run: Vec<usize> = Vec::new();
        let flush = |run: &mut Vec<usize>, out: &mut Vec<SubdomainEdge>| {
            if run.is_empty() {
                return;
            }
            let start = mesh.edge_points(run[0])[0];
            let end = mesh.edge_points(*run.last().unwrap())[1];
            let len = dist(start, end);
            let tangent = [(end[0] - start[0]) / len, (end[1] - start[1]) / len];
            // normal pointing out of the lower-indexed subdomain
            let e0 = run[0];
            let (t0, t1) = mesh.edge_triangles[e0];
            let t = if mesh.triangle_subdomain[t0] == si { t0 } else { t1.unwrap() };
            let normal = mesh.outward_normal(t, mesh.local_edge(t, e0).unwrap());
            out.push(SubdomainEdge {
                subdomains: (si, sj),
                mesh_edges: std::mem::take(run),
                start,
                end,
                tangent,
                normal,
            });
        };
        for e in list {
            if let Some(&prev) = run.last() {
                let [pa, pb] = mesh.edge_points(prev);
                let [qa, qb] = mesh.edge_points(e);
                let d1 = [pb[0] - pa[0], pb[1] - pa[1]];
                let d2 = [qb[0] - qa[0], qb[1] - qa[1]];
                let cross = d1[0] * d2[1] - d1[1] * d2[0];
                let contiguous = mesh.edges[prev][1] == mesh.edges[e][0];
                if !contiguous || cross.abs() > 1e-12 * dist(pa, pb) * dist(qa, qb) {
                    flush(&mut run, &mut out);
                }
            }
            run.push(e);
        }
        flush(&mut run, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell() {
        let m = build_structured_mesh(1, 1, 1, Diagonal::Ne).unwrap();
        assert_eq!(m.triangles.len(), 2);
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.edges.len(), 5);
        assert!(m.edge_class.iter().all(|c| *c != EdgeClass::Interface));
        assert!(extract_interface(&m).is_empty());
    }

    #[test]
    fn two_by_two_counts() {
        let m = build_structured_mesh(2, 2, 2, Diagonal::Ne).unwrap();
        assert_eq!(m.triangles.len(), 32);
        assert_eq!(m.vertices.len(), 25);
        assert_eq!(m.edges.len(), 56);
        let nb = m.edge_class.iter().filter(|c| **c == EdgeClass::Boundary).count();
        assert_eq!(nb, 16);
        let iface = extract_interface(&m);
        assert_eq!(iface.len(), 4);
        assert!(iface.iter().all(|se| se.mesh_edges.len() == 2));
        m.validate().unwrap();
    }

    #[test]
    fn large_count() {
        let m = build_structured_mesh(4, 4, 6, Diagonal::Ne).unwrap();
        assert_eq!(m.triangles.len(), 4 * 4 * 36 * 2);
    }

    #[test]
    fn two_by_one_single_interface_edge() {
        let m = build_structured_mesh(2, 1, 1, Diagonal::Ne).unwrap();
        let iface = extract_interface(&m);
        assert_eq!(iface.len(), 1);
        assert_eq!(iface[0].mesh_edges.len(), 1);
        assert_eq!(iface[0].subdomains, (0, 1));
        assert_eq!(iface[0].normal, [1.0, 0.0]);
    }

    #[test]
    fn zero_arguments_rejected() {
        assert!(build_structured_mesh(0, 1, 1, Diagonal::Ne).is_err());
        assert!(build_structured_mesh(1, 1, 0, Diagonal::Nw).is_err());
    }

    #[test]
    fn interface_normals_point_out_of_lower_subdomain() {
        let m = build_structured_mesh(3, 2, 2, Diagonal::Alternating).unwrap();
        for se in extract_interface(&m) {
            let (si, sj) = se.subdomains;
            let (xi, yi) = (si % 3, si / 3);
            let (xj, yj) = (sj % 3, sj / 3);
            let expect = [(xj as f64 - xi as f64), (yj as f64 - yi as f64)];
            assert_eq!(se.normal, expect);
            let expect_len = if se.normal[0] != 0.0 { 1.0 } else { 2.0 / 3.0 };
            assert!((se.length() - expect_len).abs() < 1e-14);
        }
    }

    #[test]
    fn text_dump_has_one_line_per_entity() {
        let m = build_structured_mesh(2, 1, 1, Diagonal::Nw).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), m.vertices.len() + m.triangles.len() + m.edges.len());
        assert!(text.lines().any(|l| l.starts_with("e ") && l.ends_with(" g")));
    }
}
