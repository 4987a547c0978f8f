//! Ordered triangle fans around vertices and the singular / non-singular
//! classification of vertices.
//!
//! For a fan `T_1 … T_N` with angles `θ_j` at the center,
//! `Γ(z) = max |θ_j + θ_{j+1} − π|` and `Θ(z) = max |sin(θ_j + θ_{j+1})|`, where the
//! wrap-around pair `(θ_N, θ_1)` only counts for interior vertices. A vertex is
//! singular when `Γ(z) = 0`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Result, SvError};
use crate::mesh::Mesh;

/// Pair sums closer than this to π are snapped to exactly π.
pub const ANGLE_SNAP: f64 = 1e-12;

/// Counter-clockwise fan of triangles around a vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexPatch {
    pub center: usize,
    /// `T_1 … T_N`.
    pub tris: Vec<usize>,
    /// Spoke vertices: triangle `tris[j]` has the spokes `rim[j]` and `rim[j + 1]`.
    /// `rim` has `N + 1` entries; for interior centers `rim[N] == rim[0]`.
    pub rim: Vec<usize>,
    /// `e_1 … e_{N−1}` (plus `e_N` between `T_N` and `T_1` for interior centers).
    pub fan_edges: Vec<usize>,
    /// `θ_1 … θ_N` in radians.
    pub angles: Vec<f64>,
    pub is_interior: bool,
}

impl VertexPatch {
    pub fn len(&self) -> usize {
        self.tris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// Position of triangle `t` in the fan.
    pub fn position(&self, t: usize) -> Option<usize> {
        self.tris.iter().position(|&x| x == t)
    }

    /// Interior fan re-enumerated to start at position `s`.
    pub fn rotated(&self, s: usize) -> Result<Self> {
        if !self.is_interior {
            return Err(SvError::InvalidArgument("only interior fans can be rotated".into()));
        }
        let n = self.len();
        let rot = |v: &Vec<usize>| -> Vec<usize> { (0..n).map(|j| v[(j + s) % n]).collect() };
        let mut rim = rot(&self.rim[..n].to_vec());
        rim.push(rim[0]);
        Ok(Self {
            center: self.center,
            tris: rot(&self.tris),
            rim,
            fan_edges: rot(&self.fan_edges),
            angles: (0..n).map(|j| self.angles[(j + s) % n]).collect(),
            is_interior: true,
        })
    }

    /// The same fan enumerated clockwise.
    pub fn reversed(&self) -> Self {
        let n = self.len();
        let mut tris = self.tris.clone();
        tris.reverse();
        let mut rim = self.rim.clone();
        rim.reverse();
        let mut angles = self.angles.clone();
        angles.reverse();
        let mut fan_edges: Vec<usize> = self.fan_edges[..n.saturating_sub(1)].to_vec();
        fan_edges.reverse();
        if self.is_interior {
            fan_edges.push(self.fan_edges[n - 1]);
        }
        Self {
            center: self.center,
            tris,
            rim,
            fan_edges,
            angles,
            is_interior: self.is_interior,
        }
    }

    /// Consecutive pair sums `θ_j + θ_{j+1}`, including the wrap-around pair for interior fans.
    pub fn pair_sums(&self) -> Vec<f64> {
        let n = self.len();
        let mut sums: Vec<f64> = (0..n.saturating_sub(1)).map(|j| self.angles[j] + self.angles[j + 1]).collect();
        if self.is_interior && n >= 2 {
            sums.push(self.angles[n - 1] + self.angles[0]);
        }
        sums
    }
}

/// Build the ordered fan around `z`.
///
/// Interior fans start at the incident triangle with the smallest id; boundary fans
/// start at the triangle whose first spoke is a boundary edge. Traversal is CCW.
pub fn build_patch(mesh: &Mesh, z: usize) -> Result<VertexPatch> {
    if z >= mesh.n_vertices() {
        return Err(SvError::Domain(format!("vertex {z} does not exist")));
    }
    let non_manifold = |message: String| SvError::NonManifold { vertex: z, message };
    let incident = mesh.vertex_tris(z);
    // (triangle, first spoke a, second spoke b), going CCW from a to b around z.
    let wedges: Vec<(usize, usize, usize)> = incident
        .iter()
        .map(|&t| {
            let v = mesh.triangles()[t].verts;
            let i = mesh.local_index(t, z).expect("incident triangle contains z");
            (t, v[(i + 1) % 3], v[(i + 2) % 3])
        })
        .collect();
    for (i, w) in wedges.iter().enumerate() {
        if wedges[i + 1..].iter().any(|o| o.1 == w.1) {
            return Err(non_manifold(format!("spoke {} starts two triangles", w.1)));
        }
    }
    let is_interior = !mesh.vertices()[z].on_boundary;
    let start = if is_interior {
        0
    } else {
        let starts: Vec<usize> = (0..wedges.len())
            .filter(|&i| !wedges.iter().any(|o| o.2 == wedges[i].1))
            .collect();
        if starts.len() != 1 {
            return Err(non_manifold(format!("{} boundary fan starts", starts.len())));
        }
        starts[0]
    };
    let n = wedges.len();
    let mut order = vec![start];
    let mut rim = vec![wedges[start].1, wedges[start].2];
    while order.len() < n {
        let b = *rim.last().expect("rim is non-empty");
        let next = wedges
            .iter()
            .position(|w| w.1 == b)
            .ok_or_else(|| non_manifold(format!("fan breaks at spoke {b}")))?;
        if order.contains(&next) {
            return Err(non_manifold("fan closes before visiting every triangle".into()));
        }
        order.push(next);
        rim.push(wedges[next].2);
    }
    if is_interior && rim[n] != rim[0] {
        return Err(non_manifold("interior fan does not close".into()));
    }
    if !is_interior && rim[n] == rim[0] {
        return Err(non_manifold("boundary fan closes into a cycle".into()));
    }
    let tris: Vec<usize> = order.iter().map(|&i| wedges[i].0).collect();
    let n_fan_edges = if is_interior { n } else { n - 1 };
    let fan_edges = (0..n_fan_edges)
        .map(|j| {
            mesh.edge_between(z, rim[j + 1])
                .ok_or_else(|| non_manifold(format!("missing edge to spoke {}", rim[j + 1])))
        })
        .collect::<Result<Vec<_>>>()?;
    let angles = tris.iter().map(|&t| mesh.angle_at(t, z)).collect::<Result<Vec<_>>>()?;
    if let Some(bad) = angles.iter().find(|a| !(**a > 0.0 && **a < PI)) {
        return Err(non_manifold(format!("fan angle {bad} outside (0, π)")));
    }
    Ok(VertexPatch {
        center: z,
        tris,
        rim,
        fan_edges,
        angles,
        is_interior,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexClass {
    pub gamma: f64,
    pub theta: f64,
    pub singular: bool,
}

/// `Γ` and `Θ` of a fan; pair sums within [`ANGLE_SNAP`] of π contribute exactly 0.
/// A single-triangle boundary fan has no pairs, so `Γ = Θ = 0` and it is singular.
pub fn classify_vertex(patch: &VertexPatch) -> VertexClass {
    let mut gamma: f64 = 0.0;
    let mut theta: f64 = 0.0;
    for s in patch.pair_sums() {
        let dev = (s - PI).abs();
        if dev < ANGLE_SNAP {
            continue;
        }
        gamma = gamma.max(dev);
        theta = theta.max(s.sin().abs());
    }
    VertexClass {
        gamma,
        theta,
        singular: gamma == 0.0,
    }
}

/// Classification of every vertex of a mesh.
#[derive(Debug, Clone)]
pub struct ClassificationTable {
    pub patches: Vec<VertexPatch>,
    pub classes: Vec<VertexClass>,
    /// Non-singular vertices, ascending.
    pub nonsingular: Vec<usize>,
    /// Singular vertices, ascending.
    pub singular: Vec<usize>,
    /// `min Θ(z)` over non-singular vertices; `None` when there are none.
    pub theta_min: Option<f64>,
}

impl ClassificationTable {
    pub fn is_singular(&self, z: usize) -> bool {
        self.classes[z].singular
    }
}

pub fn classify(mesh: &Mesh) -> Result<ClassificationTable> {
    let mut patches = Vec::with_capacity(mesh.n_vertices());
    let mut classes = Vec::with_capacity(mesh.n_vertices());
    for z in 0..mesh.n_vertices() {
        let patch = build_patch(mesh, z)?;
        let class = classify_vertex(&patch);
        if !class.singular && !(class.theta > 0.0) {
            return Err(SvError::Numerical(format!(
                "vertex {z} is non-singular (Γ = {}) but Θ = {}",
                class.gamma, class.theta
            )));
        }
        patches.push(patch);
        classes.push(class);
    }
    let nonsingular: Vec<usize> = (0..classes.len()).filter(|&z| !classes[z].singular).collect();
    let singular: Vec<usize> = (0..classes.len()).filter(|&z| classes[z].singular).collect();
    let theta_min = nonsingular.iter().map(|&z| classes[z].theta).reduce(f64::min);
    Ok(ClassificationTable {
        patches,
        classes,
        nonsingular,
        singular,
        theta_min,
    })
}

/// CSV with columns `vertex_id,x,y,interior,N,gamma,theta,singular`.
pub fn classification_csv(mesh: &Mesh, table: &ClassificationTable) -> String {
    let mut s = String::from("vertex_id,x,y,interior,N,gamma,theta,singular\n");
    for (z, (p, c)) in table.patches.iter().zip(&table.classes).enumerate() {
        let v = &mesh.vertices()[z];
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            z,
            v.x,
            v.y,
            p.is_interior,
            p.len(),
            c.gamma,
            c.theta,
            c.singular
        );
    }
    s
}
