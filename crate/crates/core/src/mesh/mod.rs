//! Conforming triangulations of polygonal domains.

mod generate;
mod io;

use std::collections::HashMap;

pub use generate::{generate_mesh, shifted_center_crisscross, DEFAULT_PERTURB_MAGNITUDE, DEFAULT_PERTURB_SEED, split_triangle_mesh, MeshFamily};
pub use io::{load_mesh, write_mesh};

use crate::error::{Result, SvError};
use crate::polyspace::TriGeom;

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub on_boundary: bool,
}

impl Vertex {
    pub fn coords(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    pub id: usize,
    /// Counter-clockwise vertex ids.
    pub verts: [usize; 3],
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: usize,
    /// Endpoints, smaller id first.
    pub verts: [usize; 2],
    /// One or two adjacent triangles.
    pub tris: Vec<usize>,
    pub length: f64,
    pub interior: bool,
}

/// Geometric data of one triangle seen from one of its vertices `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomAtVertex {
    /// Distance from `y` to the line through the opposite edge.
    pub h: f64,
    /// Unit normal of the opposite edge pointing out of the triangle.
    pub normal: [f64; 2],
    /// Gradient of the hat function of `y` restricted to the triangle.
    pub grad_psi: [f64; 2],
}

/// Immutable, validated triangulation with derived edge table and adjacency.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vertex>,
    triangles: Vec<Triangle>,
    edges: Vec<Edge>,
    /// `tri_edges[t][i]` is the edge opposite local vertex `i`.
    tri_edges: Vec<[usize; 3]>,
    vertex_tris: Vec<Vec<usize>>,
    vertex_interior_edges: Vec<Vec<usize>>,
    edge_lookup: HashMap<(usize, usize), usize>,
    area: f64,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn signed_area(p: [[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

impl Mesh {
    /// Build and validate a mesh. Clockwise triangles are reoriented.
    pub fn new(coords: Vec<[f64; 2]>, tris: Vec<[usize; 3]>) -> Result<Self> {
        if tris.is_empty() {
            return Err(SvError::NonConforming("mesh has no triangles".into()));
        }
        let nv = coords.len();
        if let Some((i, c)) = coords.iter().enumerate().find(|(_, c)| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(SvError::NonConforming(format!("vertex {i} has non-finite coordinates {c:?}")));
        }
        let mut triangles = Vec::with_capacity(tris.len());
        for (id, t) in tris.iter().enumerate() {
            let mut v = *t;
            if let Some(bad) = v.iter().find(|&&i| i >= nv) {
                return Err(SvError::NonConforming(format!(
                    "triangle {id} references vertex {bad}, but only {nv} vertices exist"
                )));
            }
            if v[0] == v[1] || v[1] == v[2] || v[0] == v[2] {
                return Err(SvError::NonConforming(format!("triangle {id} repeats a vertex: {v:?}")));
            }
            let mut a = signed_area([coords[v[0]], coords[v[1]], coords[v[2]]]);
            if a < 0.0 {
                v.swap(1, 2);
                a = -a;
            }
            if !(a > 0.0) {
                return Err(SvError::NonConforming(format!("triangle {id} is degenerate (zero area)")));
            }
            triangles.push(Triangle { id, verts: v, area: a });
        }

        let mut vertex_tris = vec![Vec::new(); nv];
        for t in &triangles {
            for &v in &t.verts {
                vertex_tris[v].push(t.id);
            }
        }
        if let Some(v) = vertex_tris.iter().position(|ts| ts.is_empty()) {
            return Err(SvError::NonConforming(format!("vertex {v} is dangling (in no triangle)")));
        }

        let mut edge_lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        // Directed half-edge seen by the first triangle, to check orientation consistency.
        let mut first_dir: Vec<(usize, usize)> = Vec::new();
        let mut tri_edges = vec![[0usize; 3]; triangles.len()];
        for t in &triangles {
            for i in 0..3 {
                let a = t.verts[(i + 1) % 3];
                let b = t.verts[(i + 2) % 3];
                let k = key(a, b);
                let eid = match edge_lookup.get(&k) {
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.tris.len() >= 2 {
                            return Err(SvError::NonConforming(format!(
                                "edge {:?} is shared by more than two triangles ({:?} and {})",
                                edge.verts, edge.tris, t.id
                            )));
                        }
                        if first_dir[e] == (a, b) {
                            return Err(SvError::NonConforming(format!(
                                "triangles {} and {} overlap across edge {:?}",
                                edge.tris[0], t.id, edge.verts
                            )));
                        }
                        edge.tris.push(t.id);
                        edge.interior = true;
                        e
                    }
                    None => {
                        let e = edges.len();
                        let (pa, pb) = (coords[a], coords[b]);
                        edges.push(Edge {
                            id: e,
                            verts: [k.0, k.1],
                            tris: vec![t.id],
                            length: (pb[0] - pa[0]).hypot(pb[1] - pa[1]),
                            interior: false,
                        });
                        first_dir.push((a, b));
                        edge_lookup.insert(k, e);
                        e
                    }
                };
                tri_edges[t.id][i] = eid;
            }
        }

        let mut on_boundary = vec![false; nv];
        let mut boundary_count = vec![0usize; nv];
        let mut vertex_interior_edges = vec![Vec::new(); nv];
        for e in &edges {
            for &v in &e.verts {
                if e.interior {
                    vertex_interior_edges[v].push(e.id);
                } else {
                    on_boundary[v] = true;
                    boundary_count[v] += 1;
                }
            }
        }

        let vertices: Vec<Vertex> = coords
            .iter()
            .enumerate()
            .map(|(id, c)| Vertex {
                id,
                x: c[0],
                y: c[1],
                on_boundary: on_boundary[id],
            })
            .collect();

        let area = triangles.iter().map(|t| t.area).sum();
        let mesh = Self {
            vertices,
            triangles,
            edges,
            tri_edges,
            vertex_tris,
            vertex_interior_edges,
            edge_lookup,
            area,
        };
        mesh.check_hanging_nodes()?;
        mesh.check_patches(&boundary_count)?;
        Ok(mesh)
    }

    // Every vertex patch must be a single edge-connected fan.
    fn check_patches(&self, boundary_count: &[usize]) -> Result<()> {
        for v in 0..self.vertices.len() {
            if boundary_count[v] != 0 && boundary_count[v] != 2 {
                return Err(SvError::NonConforming(format!(
                    "vertex {v} touches {} boundary edges (patch is not a single fan)",
                    boundary_count[v]
                )));
            }
            let tris = &self.vertex_tris[v];
            let mut seen = vec![tris[0]];
            let mut stack = vec![tris[0]];
            while let Some(t) = stack.pop() {
                for &e in &self.tri_edges[t] {
                    let edge = &self.edges[e];
                    if !edge.verts.contains(&v) {
                        continue;
                    }
                    for &n in &edge.tris {
                        if !seen.contains(&n) {
                            seen.push(n);
                            stack.push(n);
                        }
                    }
                }
            }
            if seen.len() != tris.len() {
                return Err(SvError::NonConforming(format!("patch of vertex {v} is not edge-connected")));
            }
        }
        Ok(())
    }

    // A boundary vertex strictly inside another boundary edge is a hanging node.
    fn check_hanging_nodes(&self) -> Result<()> {
        let boundary_vertices: Vec<usize> = self.vertices.iter().filter(|v| v.on_boundary).map(|v| v.id).collect();
        for e in self.edges.iter().filter(|e| !e.interior) {
            let a = self.vertices[e.verts[0]].coords();
            let b = self.vertices[e.verts[1]].coords();
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            for &v in &boundary_vertices {
                if e.verts.contains(&v) {
                    continue;
                }
                let p = self.vertices[v].coords();
                let w = [p[0] - a[0], p[1] - a[1]];
                let cross = d[0] * w[1] - d[1] * w[0];
                let t = (d[0] * w[0] + d[1] * w[1]) / len2;
                if cross.abs() <= 1e-12 * len2 && t > 0.0 && t < 1.0 {
                    return Err(SvError::NonConforming(format!(
                        "hanging node: vertex {v} lies inside edge {:?}",
                        e.verts
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn coords(&self, v: usize) -> [f64; 2] {
        self.vertices[v].coords()
    }

    /// Triangles having `v` as a vertex, ascending ids.
    pub fn vertex_tris(&self, v: usize) -> &[usize] {
        &self.vertex_tris[v]
    }

    /// Interior edges having `v` as an endpoint.
    pub fn vertex_interior_edges(&self, v: usize) -> &[usize] {
        &self.vertex_interior_edges[v]
    }

    /// Edges of triangle `t`; entry `i` is opposite local vertex `i`.
    pub fn tri_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&key(a, b)).copied()
    }

    pub fn local_index(&self, t: usize, v: usize) -> Option<usize> {
        self.triangles[t].verts.iter().position(|&w| w == v)
    }

    pub fn tri_geom(&self, t: usize) -> TriGeom {
        let v = self.triangles[t].verts;
        TriGeom::new([self.coords(v[0]), self.coords(v[1]), self.coords(v[2])])
            .expect("validated triangles are counter-clockwise")
    }

    /// Unit tangent of the segment from `z` to `y`.
    pub fn tangent(&self, z: usize, y: usize) -> [f64; 2] {
        let a = self.coords(z);
        let b = self.coords(y);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        [(b[0] - a[0]) / len, (b[1] - a[1]) / len]
    }

    pub fn geometry_at(&self, t: usize, y: usize) -> Result<GeomAtVertex> {
        let iy = self
            .local_index(t, y)
            .ok_or_else(|| SvError::Domain(format!("vertex {y} is not a vertex of triangle {t}")))?;
        let g = self.tri_geom(t);
        let grad = g.grad_lambda[iy];
        let norm = grad[0].hypot(grad[1]);
        Ok(GeomAtVertex {
            h: 1.0 / norm,
            normal: [-grad[0] / norm, -grad[1] / norm],
            grad_psi: grad,
        })
    }

    /// Interior angle of triangle `t` at its vertex `v`.
    pub fn angle_at(&self, t: usize, v: usize) -> Result<f64> {
        let i = self
            .local_index(t, v)
            .ok_or_else(|| SvError::Domain(format!("vertex {v} is not a vertex of triangle {t}")))?;
        let verts = self.triangles[t].verts;
        let p = self.coords(v);
        let a = self.coords(verts[(i + 1) % 3]);
        let b = self.coords(verts[(i + 2) % 3]);
        let u = [a[0] - p[0], a[1] - p[1]];
        let w = [b[0] - p[0], b[1] - p[1]];
        Ok((u[0] * w[1] - u[1] * w[0]).atan2(u[0] * w[0] + u[1] * w[1]))
    }

    /// Minimum over triangles of `2 · inradius / diameter`.
    pub fn shape_regularity(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let g = self.tri_geom(t.id);
                let perimeter = g.edge_length(0, 1) + g.edge_length(1, 2) + g.edge_length(2, 0);
                let inradius = t.area / (0.5 * perimeter);
                2.0 * inradius / g.diameter()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest triangle diameter.
    pub fn h_max(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| self.tri_geom(t).diameter())
            .fold(0.0, f64::max)
    }

    /// Diameter of the patch of `z`.
    pub fn patch_diameter(&self, z: usize) -> f64 {
        let mut pts: Vec<usize> = self.vertex_tris[z]
            .iter()
            .flat_map(|&t| self.triangles[t].verts)
            .collect();
        pts.sort_unstable();
        pts.dedup();
        let mut d: f64 = 0.0;
        for (i, &a) in pts.iter().enumerate() {
            for &b in &pts[i + 1..] {
                let (p, q) = (self.coords(a), self.coords(b));
                d = d.max((q[0] - p[0]).hypot(q[1] - p[1]));
            }
        }
        d
    }

    /// The same connectivity with every coordinate mapped through `f`.
    pub fn map_coords(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        let coords = self.vertices.iter().map(|v| f(v.coords())).collect();
        let tris = self.triangles.iter().map(|t| t.verts).collect();
        Self::new(coords, tris)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Mesh {
        Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn square_counts() {
        let m = unit_square();
        assert_eq!(m.n_edges(), 5);
        assert_eq!(m.edges().iter().filter(|e| e.interior).count(), 1);
        assert!(m.vertices().iter().all(|v| v.on_boundary));
        let interior = m.edges().iter().filter(|e| e.interior).count();
        let boundary = m.n_edges() - interior;
        assert_eq!(3 * m.n_triangles(), 2 * interior + boundary);
    }

    #[test]
    fn clockwise_is_reoriented() {
        let m = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 2, 1], [0, 2, 3]],
        )
        .unwrap();
        for t in m.triangles() {
            assert!((t.area - 0.5).abs() < 1e-15);
            let p: Vec<[f64; 2]> = t.verts.iter().map(|&v| m.coords(v)).collect();
            assert!(signed_area([p[0], p[1], p[2]]) > 0.0);
        }
    }

    #[test]
    fn edge_shared_by_three_is_rejected() {
        let r = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.6, 2.0]],
            vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]],
        );
        assert!(matches!(r, Err(SvError::NonConforming(_))));
    }

    #[test]
    fn dangling_and_degenerate_are_rejected() {
        let r = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]], vec![[0, 1, 2]]);
        assert!(matches!(r, Err(SvError::NonConforming(m)) if m.contains("dangling")));
        let r = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]]);
        assert!(matches!(r, Err(SvError::NonConforming(m)) if m.contains("degenerate")));
    }

    #[test]
    fn hanging_node_is_rejected() {
        // Vertex 4 sits on the diagonal 0-2 of the lower triangle.
        let r = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]],
            vec![[0, 1, 2], [0, 4, 3], [4, 2, 3]],
        );
        assert!(matches!(r, Err(SvError::NonConforming(m)) if m.contains("hanging")));
    }

    #[test]
    fn overlapping_triangles_are_rejected() {
        let r = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.2, 0.2]],
            vec![[0, 1, 2], [0, 1, 3]],
        );
        assert!(matches!(r, Err(SvError::NonConforming(m)) if m.contains("overlap")));
    }

    #[test]
    fn right_triangle_geometry() {
        let m = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let g = m.geometry_at(0, 1).unwrap();
        assert!((g.h - 1.0).abs() < 1e-15);
        assert!((g.normal[0] + 1.0).abs() < 1e-15 && g.normal[1].abs() < 1e-15);
        assert!((g.grad_psi[0] - 1.0).abs() < 1e-15 && g.grad_psi[1].abs() < 1e-15);
        // h = sin(θ)|e| with z = vertex 0, e = {0, 1}.
        let theta = m.angle_at(0, 0).unwrap();
        assert!((theta.sin() * 1.0 - g.h).abs() < 1e-15);
        assert!(m.geometry_at(0, 7).is_err());
    }

    #[test]
    fn height_times_opposite_edge_is_twice_area() {
        let m = generate_mesh(MeshFamily::PerturbedDiagonal, 3, Some(11), 0.2).unwrap();
        for t in m.triangles() {
            for (i, &y) in t.verts.iter().enumerate() {
                let g = m.geometry_at(t.id, y).unwrap();
                let opp = m.edges()[m.tri_edges(t.id)[i]].length;
                assert!((g.h * opp - 2.0 * t.area).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn shape_regularity_values() {
        let s3 = 3f64.sqrt();
        let eq = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.5, s3 / 2.0]], vec![[0, 1, 2]]).unwrap();
        // r = area / semiperimeter = (√3/4) / (3/2).
        let r = (s3 / 4.0) / 1.5;
        assert!((eq.shape_regularity() - 2.0 * r).abs() < 1e-15);
        assert!((eq.shape_regularity() - 1.0 / s3).abs() < 1e-15);
        let a = generate_mesh(MeshFamily::Diagonal, 2, None, 0.0).unwrap().shape_regularity();
        let b = generate_mesh(MeshFamily::Diagonal, 7, None, 0.0).unwrap().shape_regularity();
        assert!((a - b).abs() < 1e-14);
        let sliver = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.5, 0.01]], vec![[0, 1, 2]]).unwrap();
        assert!(sliver.shape_regularity() < 0.02);
    }
}
