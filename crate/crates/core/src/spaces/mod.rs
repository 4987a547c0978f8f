//! Global spaces: continuous `[P^k]²` velocities with zero boundary values and
//! discontinuous `P^{k-1}` pressures with the singular-vertex and zero-mean
//! constraints, plus assembly of the operators between them.
//!
//! Velocity coefficient vectors come in two layouts. A *full* vector has
//! `2 · n_nodes` entries, index `2·node + component`. A *free* vector only keeps
//! the entries of interior nodes, in the same relative order.

mod assemble;
mod element;
mod pressure;

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use assemble::{assemble, assemble_velocity, AssembledOps};
pub use element::{transfer_matrix, ElementTables};
pub use pressure::{build_pressure_space, constraint_row, PressureSpace};

use crate::error::{Result, SvError};
use crate::mesh::Mesh;
use crate::polyspace::{exponents, lattice_nodes, VectorBaryPoly};
use crate::topology::ClassificationTable;

/// Lagrange velocity space `V_h^k`.
#[derive(Debug, Clone)]
pub struct VelocitySpace {
    k: usize,
    tables: Arc<ElementTables>,
    node_coords: Vec<[f64; 2]>,
    node_boundary: Vec<bool>,
    /// Global node of each local lattice node, in [`exponents`]`(k)` order.
    tri_nodes: Vec<Vec<usize>>,
    free_of_dof: Vec<Option<usize>>,
    free_dofs: Vec<usize>,
}

/// Nodes are numbered vertices first, then `k - 1` per edge (walking away from the
/// lower vertex id), then the interior lattice nodes of every triangle.
pub fn build_velocity_space(mesh: &Mesh, k: usize) -> Result<VelocitySpace> {
    if k == 0 {
        return Err(SvError::InvalidArgument("velocity order must be at least 1".into()));
    }
    let tables = ElementTables::get(k)?;
    let nv = mesh.n_vertices();
    let per_edge = k - 1;
    let per_tri = if k >= 3 { (k - 1) * (k - 2) / 2 } else { 0 };
    let n_nodes = nv + per_edge * mesh.n_edges() + per_tri * mesh.n_triangles();
    let mut node_coords = vec![[0.0; 2]; n_nodes];
    let mut node_boundary = vec![false; n_nodes];
    for v in mesh.vertices() {
        node_coords[v.id] = v.coords();
        node_boundary[v.id] = v.on_boundary;
    }
    let lattice = exponents(k);
    let mut tri_nodes = Vec::with_capacity(mesh.n_triangles());
    for t in mesh.triangles() {
        let geom = mesh.tri_geom(t.id);
        let mut interior = 0;
        let mut nodes = Vec::with_capacity(lattice.len());
        for e in &lattice {
            let nz: Vec<usize> = (0..3).filter(|&i| e[i] > 0).collect();
            let node = match nz.len() {
                1 => t.verts[nz[0]],
                2 => {
                    let (i, j) = (nz[0], nz[1]);
                    let (vi, vj) = (t.verts[i], t.verts[j]);
                    let edge = mesh.edge_between(vi, vj).expect("triangle sides are edges");
                    // Steps away from the lower-id endpoint.
                    let step = if vi < vj { e[j] } else { e[i] };
                    let node = nv + per_edge * edge + step - 1;
                    node_boundary[node] = !mesh.edges()[edge].interior;
                    node
                }
                _ => {
                    let node = nv + per_edge * mesh.n_edges() + per_tri * t.id + interior;
                    interior += 1;
                    node
                }
            };
            let bary = [e[0] as f64 / k as f64, e[1] as f64 / k as f64, e[2] as f64 / k as f64];
            node_coords[node] = geom.point(bary);
            nodes.push(node);
        }
        tri_nodes.push(nodes);
    }
    let mut free_of_dof = vec![None; 2 * n_nodes];
    let mut free_dofs = Vec::new();
    for node in 0..n_nodes {
        if !node_boundary[node] {
            for c in 0..2 {
                free_of_dof[2 * node + c] = Some(free_dofs.len());
                free_dofs.push(2 * node + c);
            }
        }
    }
    Ok(VelocitySpace {
        k,
        tables,
        node_coords,
        node_boundary,
        tri_nodes,
        free_of_dof,
        free_dofs,
    })
}

impl VelocitySpace {
    pub fn order(&self) -> usize {
        self.k
    }

    pub fn tables(&self) -> &ElementTables {
        &self.tables
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_full(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn node_coords(&self) -> &[[f64; 2]] {
        &self.node_coords
    }

    pub fn node_on_boundary(&self, node: usize) -> bool {
        self.node_boundary[node]
    }

    pub fn tri_nodes(&self, t: usize) -> &[usize] {
        &self.tri_nodes[t]
    }

    /// Free index of scalar DOF `2·node + c`, if not on the boundary.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_of_dof[dof]
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    pub fn expand(&self, free: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.n_full());
        for (i, &d) in self.free_dofs.iter().enumerate() {
            full[d] = free[i];
        }
        full
    }

    /// Drop boundary entries; errors if any exceeds `tol` in magnitude.
    pub fn restrict(&self, full: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
        for node in 0..self.n_nodes() {
            if self.node_boundary[node] {
                for c in 0..2 {
                    let v = full[2 * node + c];
                    if v.abs() > tol {
                        return Err(SvError::Numerical(format!(
                            "boundary node {node} carries value {v:e} in component {c}"
                        )));
                    }
                }
            }
        }
        Ok(DVector::from_iterator(self.n_free(), self.free_dofs.iter().map(|&d| full[d])))
    }

    /// Local `(u_x, u_y)` coefficients of a full vector on triangle `t`.
    pub fn local(&self, full: &DVector<f64>, t: usize) -> (DVector<f64>, DVector<f64>) {
        let nodes = &self.tri_nodes[t];
        (
            DVector::from_iterator(nodes.len(), nodes.iter().map(|&n| full[2 * n])),
            DVector::from_iterator(nodes.len(), nodes.iter().map(|&n| full[2 * n + 1])),
        )
    }

    /// Interpolate per-triangle polynomial fields; triangles not listed get nothing.
    /// Fails when two triangles disagree at a shared node by more than `tol`.
    pub fn interpolate_pieces(
        &self,
        pieces: &[(usize, VectorBaryPoly)],
        full: &mut DVector<f64>,
        tol: f64,
    ) -> Result<()> {
        let nodes = lattice_nodes(self.k);
        let mut seen = vec![false; self.n_nodes()];
        let mut scale: f64 = 0.0;
        let mut values = Vec::with_capacity(pieces.len());
        for (t, field) in pieces {
            if field.degree() > self.k {
                return Err(SvError::InvalidArgument(format!(
                    "degree {} field does not fit into order {}",
                    field.degree(),
                    self.k
                )));
            }
            let vals: Vec<[f64; 2]> = nodes.iter().map(|b| field.eval(*b)).collect();
            for v in &vals {
                scale = scale.max(v[0].abs()).max(v[1].abs());
            }
            values.push((*t, vals));
        }
        let mut local = DVector::<f64>::zeros(self.n_full());
        for (t, vals) in values {
            for (node, v) in self.tri_nodes[t].iter().zip(vals) {
                if seen[*node] {
                    let d = (local[2 * node] - v[0]).abs().max((local[2 * node + 1] - v[1]).abs());
                    if d > tol * scale.max(1.0) {
                        return Err(SvError::Numerical(format!(
                            "pieces disagree by {d:e} at node {node} (triangle {t})"
                        )));
                    }
                } else {
                    seen[*node] = true;
                    local[2 * node] = v[0];
                    local[2 * node + 1] = v[1];
                }
            }
        }
        *full += local;
        Ok(())
    }

    /// Interpolate a full vector of a coarser space on the same mesh into this one.
    pub fn prolongate_from(&self, from: &VelocitySpace, full: &DVector<f64>) -> Result<DVector<f64>> {
        if from.k > self.k || from.tri_nodes.len() != self.tri_nodes.len() {
            return Err(SvError::InvalidArgument("incompatible spaces for prolongation".into()));
        }
        let t_mat = transfer_matrix(from.k, self.k);
        let mut out = DVector::zeros(self.n_full());
        for t in 0..self.tri_nodes.len() {
            let (ux, uy) = from.local(full, t);
            let (vx, vy) = (&t_mat * ux, &t_mat * uy);
            for (a, &node) in self.tri_nodes[t].iter().enumerate() {
                out[2 * node] = vx[a];
                out[2 * node + 1] = vy[a];
            }
        }
        Ok(out)
    }

    /// DG coefficients of `div v` (exact, since `div v ∈ P^{k-1}` on each triangle).
    pub fn div_to_pressure(&self, mesh: &Mesh, full: &DVector<f64>) -> DVector<f64> {
        let nq = self.tables.n_q();
        let mut out = DVector::zeros(nq * mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let (ux, uy) = self.local(full, t);
            let d = self.tables.div_nodal(&mesh.tri_geom(t), &ux, &uy);
            out.rows_mut(t * nq, nq).copy_from(&d);
        }
        out
    }

    /// `‖∇v‖_{L²}` of a full vector, element by element.
    pub fn h1_seminorm(&self, mesh: &Mesh, full: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for t in 0..mesh.n_triangles() {
            let k = self.tables.stiffness(&mesh.tri_geom(t));
            let (ux, uy) = self.local(full, t);
            s += ux.dot(&(&k * &ux)) + uy.dot(&(&k * &uy));
        }
        s.max(0.0).sqrt()
    }

    pub fn l2_norm(&self, mesh: &Mesh, full: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for t in 0..mesh.n_triangles() {
            let m = &self.tables.mref * (2.0 * mesh.triangles()[t].area);
            let (ux, uy) = self.local(full, t);
            s += ux.dot(&(&m * &ux)) + uy.dot(&(&m * &uy));
        }
        s.max(0.0).sqrt()
    }

    /// Uniform `[-1, 1]` entries on every free DOF.
    pub fn random_free(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_iterator(self.n_free(), (0..self.n_free()).map(|_| rng.random_range(-1.0..=1.0)))
    }
}

/// Largest `|A_h^z(div v)| / ‖∇v‖` over singular vertices and of `|∫ div v| / ‖∇v‖`,
/// over `trials` random `v ∈ V_h^k`.
pub fn verify_div_inclusion(
    mesh: &Mesh,
    space: &VelocitySpace,
    classification: &ClassificationTable,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(SvError::InvalidArgument("at least one trial is needed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<(usize, f64)>> = classification
        .singular
        .iter()
        .map(|&z| constraint_row(mesh, space.order(), &classification.patches[z]))
        .collect();
    let nq = space.tables().n_q();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let v = space.expand(&space.random_free(&mut rng));
        let norm = space.h1_seminorm(mesh, &v);
        let div = space.div_to_pressure(mesh, &v);
        for row in &rows {
            let a: f64 = row.iter().map(|(i, c)| c * div[*i]).sum();
            worst = worst.max(a.abs() / norm);
        }
        let mut mean = 0.0;
        for t in 0..mesh.n_triangles() {
            let w = 2.0 * mesh.triangles()[t].area;
            mean += w * space.tables().qmean.dot(&div.rows(t * nq, nq));
        }
        worst = worst.max(mean.abs() / norm);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, split_triangle_mesh, MeshFamily};
    use crate::polyspace::BaryPoly;
    use crate::topology::classify;

    #[test]
    fn dof_counts() {
        let m = generate_mesh(MeshFamily::Diagonal, 1, None, 0.0).unwrap();
        let v2 = build_velocity_space(&m, 2).unwrap();
        assert_eq!(v2.n_nodes(), 9);
        assert_eq!(v2.n_free(), 2);
        let v4 = build_velocity_space(&m, 4).unwrap();
        assert_eq!(v4.n_nodes(), 25);
        assert_eq!(v4.n_free(), 18);
        let m3 = generate_mesh(MeshFamily::Diagonal, 3, None, 0.0).unwrap();
        let v1 = build_velocity_space(&m3, 1).unwrap();
        assert_eq!(v1.n_free(), 2 * 4);
    }

    #[test]
    fn shared_nodes_have_one_position() {
        let m = generate_mesh(MeshFamily::PerturbedDiagonal, 3, Some(2), 0.2).unwrap();
        let v = build_velocity_space(&m, 5).unwrap();
        let lattice = lattice_nodes(5);
        for t in 0..m.n_triangles() {
            let g = m.tri_geom(t);
            for (b, &node) in lattice.iter().zip(v.tri_nodes(t)) {
                let p = g.point(*b);
                let q = v.node_coords()[node];
                assert!((p[0] - q[0]).abs() < 1e-14 && (p[1] - q[1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn traces_agree_across_interior_edges() {
        let m = generate_mesh(MeshFamily::PerturbedDiagonal, 2, Some(3), 0.2).unwrap();
        let k = 4;
        let v = build_velocity_space(&m, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let full = v.expand(&v.random_free(&mut rng));
        let t = v.tables();
        for e in m.edges().iter().filter(|e| e.interior) {
            let [a, b] = e.verts;
            for s in 0..=k {
                let f = s as f64 / k as f64;
                let mut vals = Vec::new();
                for &tri in &e.tris {
                    let ia = m.local_index(tri, a).unwrap();
                    let ib = m.local_index(tri, b).unwrap();
                    let mut bary = [0.0; 3];
                    bary[ia] = 1.0 - f;
                    bary[ib] = f;
                    let (ux, uy) = v.local(&full, tri);
                    vals.push(t.value_at(&ux, &uy, bary));
                }
                assert!((vals[0][0] - vals[1][0]).abs() < 1e-12 && (vals[0][1] - vals[1][1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn boundary_values_vanish() {
        let m = generate_mesh(MeshFamily::Crisscross, 2, None, 0.0).unwrap();
        let v = build_velocity_space(&m, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full = v.expand(&v.random_free(&mut rng));
        for (node, p) in v.node_coords().iter().enumerate() {
            let on = p[0].abs() < 1e-14 || p[1].abs() < 1e-14 || (p[0] - 1.0).abs() < 1e-14 || (p[1] - 1.0).abs() < 1e-14;
            assert_eq!(on, v.node_on_boundary(node));
            if on {
                assert_eq!(full[2 * node], 0.0);
                assert_eq!(full[2 * node + 1], 0.0);
            }
        }
    }

    #[test]
    fn linear_field_patch_test() {
        let m = generate_mesh(MeshFamily::PerturbedDiagonal, 2, Some(9), 0.25).unwrap();
        let v = build_velocity_space(&m, 4).unwrap();
        let mut full = DVector::zeros(v.n_full());
        for (node, p) in v.node_coords().iter().enumerate() {
            full[2 * node] = 0.5 * p[0] + 2.0 * p[1];
            full[2 * node + 1] = -p[0] + 1.5 * p[1];
        }
        let div = v.div_to_pressure(&m, &full);
        assert!(div.iter().all(|d| (d - 2.0).abs() < 1e-12));
    }

    #[test]
    fn prolongation_preserves_function() {
        let m = generate_mesh(MeshFamily::Diagonal, 2, None, 0.0).unwrap();
        let v2 = build_velocity_space(&m, 2).unwrap();
        let v5 = build_velocity_space(&m, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = v2.expand(&v2.random_free(&mut rng));
        let b = v5.prolongate_from(&v2, &a).unwrap();
        assert!((v2.h1_seminorm(&m, &a) - v5.h1_seminorm(&m, &b)).abs() < 1e-12);
        let da = v2.div_to_pressure(&m, &a);
        let db = v5.div_to_pressure(&m, &b);
        let bary = [0.2, 0.5, 0.3];
        let (q1, q4) = (&v2.tables().q, &v5.tables().q);
        for t in 0..m.n_triangles() {
            let x: f64 = q1.iter().enumerate().map(|(i, p)| da[t * q1.len() + i] * p.eval(bary)).sum();
            let y: f64 = q4.iter().enumerate().map(|(i, p)| db[t * q4.len() + i] * p.eval(bary)).sum();
            assert!((x - y).abs() < 1e-11);
        }
        assert!(v5.restrict(&b, 0.0).is_ok());
    }

    #[test]
    fn interpolation_rejects_discontinuous_pieces() {
        let m = generate_mesh(MeshFamily::Diagonal, 1, None, 0.0).unwrap();
        let v = build_velocity_space(&m, 2).unwrap();
        let one = VectorBaryPoly::from_scalar(&BaryPoly::constant(1.0), [1.0, 0.0]);
        let two = one.scale(2.0);
        let mut full = DVector::zeros(v.n_full());
        assert!(v.interpolate_pieces(&[(0, one.clone()), (1, two)], &mut full, 1e-12).is_err());
        assert!(v.interpolate_pieces(&[(0, one.clone()), (1, one)], &mut full, 1e-12).is_ok());
    }

    #[test]
    fn singular_functional_kills_divergence() {
        for mesh in [generate_mesh(MeshFamily::Crisscross, 2, None, 0.0).unwrap(), split_triangle_mesh()] {
            let c = classify(&mesh).unwrap();
            let v = build_velocity_space(&mesh, 4).unwrap();
            let r = verify_div_inclusion(&mesh, &v, &c, 10, 5).unwrap();
            assert!(r < 1e-11, "residual {r}");
        }
    }
}
