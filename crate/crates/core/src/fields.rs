//! Local vector fields whose divergence takes prescribed values at one vertex
//! while keeping zero element means and vanishing at every other vertex.
//!
//! For an interior edge `e = {z, y}` shared by `T_1, T_2`:
//! `η_e^z = ψ_z² ψ_y`, `γ_e^z = η_e^z − 5/2 ψ_z² ψ_y²` and `w_e^z = −|e| t η_e^z`,
//! where `t` is the unit tangent with `t · ∇ψ_y = −1/|e|` (pointing from `y` to `z`).
//! Then `div w_e^z|_{T_s}(z) = 1` on both triangles.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Result, SvError};
use crate::mesh::Mesh;
use crate::polyspace::{divergence, gradient, integrate_triangle, lattice_nodes, BaryPoly, VectorBaryPoly};
use crate::spaces::{PressureSpace, VelocitySpace};
use crate::topology::{ClassificationTable, VertexClass, VertexPatch};

/// Relative tolerance of the alternating-sum compatibility at singular vertices.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    W,
    VT,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Edge(usize),
    Triangle(usize),
    None,
}

/// Piecewise polynomial vector field with explicit per-triangle restrictions.
#[derive(Debug, Clone)]
pub struct FundamentalField {
    pub kind: FieldKind,
    pub vertex: usize,
    pub anchor: Anchor,
    /// Restrictions by triangle id; triangles not listed carry zero.
    pub pieces: BTreeMap<usize, VectorBaryPoly>,
}

impl FundamentalField {
    pub fn support(&self) -> Vec<usize> {
        self.pieces.keys().copied().collect()
    }

    pub fn degree(&self) -> usize {
        self.pieces.values().map(|p| p.degree()).max().unwrap_or(0)
    }

    fn combine(&mut self, other: &FundamentalField, scale: f64) {
        for (t, p) in &other.pieces {
            let scaled = p.scale(scale);
            self.pieces
                .entry(*t)
                .and_modify(|q| *q += &scaled)
                .or_insert(scaled);
        }
    }

    /// `div` restricted to `t`, evaluated at mesh vertex `v` of `t`.
    pub fn div_at_vertex(&self, mesh: &Mesh, t: usize, v: usize) -> Result<f64> {
        let Some(p) = self.pieces.get(&t) else { return Ok(0.0) };
        let i = mesh
            .local_index(t, v)
            .ok_or_else(|| SvError::Domain(format!("vertex {v} is not a vertex of triangle {t}")))?;
        let mut bary = [0.0; 3];
        bary[i] = 1.0;
        Ok(divergence(p, &mesh.tri_geom(t)).eval(bary))
    }

    pub fn div_integral(&self, mesh: &Mesh, t: usize) -> Result<f64> {
        match self.pieces.get(&t) {
            Some(p) => {
                let g = mesh.tri_geom(t);
                integrate_triangle(&divergence(p, &g), &g)
            }
            None => Ok(0.0),
        }
    }

    /// Exact `‖∇v‖_{L²}`.
    pub fn grad_norm(&self, mesh: &Mesh) -> Result<f64> {
        let mut s = 0.0;
        for (t, p) in &self.pieces {
            let g = mesh.tri_geom(*t);
            for comp in [&p.x, &p.y] {
                let gr = gradient(comp, &g);
                s += integrate_triangle(&(&(&gr.x * &gr.x) + &(&gr.y * &gr.y)), &g)?;
            }
        }
        Ok(s.max(0.0).sqrt())
    }

    /// Lagrange interpolation into `space`, added onto `full`.
    pub fn add_to(&self, space: &VelocitySpace, full: &mut DVector<f64>) -> Result<()> {
        let pieces: Vec<(usize, VectorBaryPoly)> = self.pieces.iter().map(|(t, p)| (*t, p.clone())).collect();
        space.interpolate_pieces(&pieces, full, 1e-10)
    }

    pub fn to_full(&self, space: &VelocitySpace) -> Result<DVector<f64>> {
        let mut full = DVector::zeros(space.n_full());
        self.add_to(space, &mut full)?;
        Ok(full)
    }
}

fn check_edge(mesh: &Mesh, e: usize, z: usize) -> Result<usize> {
    let edge = mesh
        .edges()
        .get(e)
        .ok_or_else(|| SvError::Domain(format!("edge {e} does not exist")))?;
    if !edge.interior {
        return Err(SvError::Domain(format!("edge {e} lies on the boundary")));
    }
    match edge.verts {
        [a, b] if a == z => Ok(b),
        [a, b] if b == z => Ok(a),
        _ => Err(SvError::Domain(format!("vertex {z} is not an endpoint of edge {e}"))),
    }
}

fn lam_product(i: usize, pz: usize, j: usize, py: usize) -> BaryPoly {
    let mut exps = [0; 3];
    exps[i] += pz;
    exps[j] += py;
    BaryPoly::monomial(exps, 1.0)
}

/// `η_e^z` on the two triangles sharing `e`.
pub fn eta_field(mesh: &Mesh, e: usize, z: usize) -> Result<BTreeMap<usize, BaryPoly>> {
    let y = check_edge(mesh, e, z)?;
    Ok(mesh.edges()[e]
        .tris
        .iter()
        .map(|&t| {
            let iz = mesh.local_index(t, z).expect("edge endpoint");
            let iy = mesh.local_index(t, y).expect("edge endpoint");
            (t, lam_product(iz, 2, iy, 1))
        })
        .collect())
}

/// `γ_e^z = η_e^z − 5/2 ψ_z² ψ_y²`.
pub fn gamma_scalar(mesh: &Mesh, e: usize, z: usize) -> Result<BTreeMap<usize, BaryPoly>> {
    let y = check_edge(mesh, e, z)?;
    Ok(mesh.edges()[e]
        .tris
        .iter()
        .map(|&t| {
            let iz = mesh.local_index(t, z).expect("edge endpoint");
            let iy = mesh.local_index(t, y).expect("edge endpoint");
            (t, &lam_product(iz, 2, iy, 1) - &(&lam_product(iz, 2, iy, 2) * 2.5))
        })
        .collect())
}

/// The vector field `c |e| γ_e^z`.
pub fn gamma_field(mesh: &Mesh, e: usize, z: usize, c: [f64; 2]) -> Result<FundamentalField> {
    let scalar = gamma_scalar(mesh, e, z)?;
    let len = mesh.edges()[e].length;
    let pieces = scalar
        .into_iter()
        .map(|(t, g)| (t, VectorBaryPoly::from_scalar(&g, [c[0] * len, c[1] * len])))
        .collect();
    Ok(FundamentalField {
        kind: FieldKind::Gamma,
        vertex: z,
        anchor: Anchor::Edge(e),
        pieces,
    })
}

/// `w_e^z = −|e| t η_e^z`.
pub fn w_field(mesh: &Mesh, e: usize, z: usize) -> Result<FundamentalField> {
    let y = check_edge(mesh, e, z)?;
    // −|e| t = −|e| (z − y)/|e| = y − z.
    let pz = mesh.coords(z);
    let py = mesh.coords(y);
    let c = [py[0] - pz[0], py[1] - pz[1]];
    let pieces = eta_field(mesh, e, z)?
        .into_iter()
        .map(|(t, eta)| (t, VectorBaryPoly::from_scalar(&eta, c)))
        .collect();
    Ok(FundamentalField {
        kind: FieldKind::W,
        vertex: z,
        anchor: Anchor::Edge(e),
        pieces,
    })
}

/// Index `s` (0-based) of the first consecutive pair attaining `Θ(z)`.
pub fn maximizing_pair(patch: &VertexPatch, class: &VertexClass) -> Option<usize> {
    patch
        .pair_sums()
        .iter()
        .position(|s| (s - std::f64::consts::PI).abs() >= crate::topology::ANGLE_SNAP && s.sin().abs() == class.theta)
}

/// The fields `v_{T_j}^z` for every triangle of the fan, in fan order.
///
/// Interior fans are first rotated so the maximizing pair is `(T_1, T_2)`.
/// `v_{T_s} = α t_{s+1} γ_{e_s}` with `α = 1/(t_{s+1} · ∇ψ_y|_{T_s})`, then
/// `v_{T_{j+1}} = w_{e_j} − v_{T_j}` forward and `v_{T_{j−1}} = w_{e_{j−1}} − v_{T_j}` backward.
pub fn v_t_fields(mesh: &Mesh, patch: &VertexPatch, class: &VertexClass) -> Result<Vec<FundamentalField>> {
    let z = patch.center;
    if class.singular {
        return Err(SvError::InvalidArgument(format!("vertex {z} is singular")));
    }
    let s0 = maximizing_pair(patch, class)
        .ok_or_else(|| SvError::Numerical(format!("no pair attains Θ at vertex {z}")))?;
    let rotated;
    let (fan, s) = if patch.is_interior && s0 != 0 {
        rotated = patch.rotated(s0)?;
        (&rotated, 0)
    } else {
        (patch, s0)
    };
    let n = fan.len();
    let e_s = fan.fan_edges[s];
    let y = fan.rim[s + 1];
    let far = fan.rim[s + 2];
    let t_next = mesh.tangent(z, far);
    let grad_psi_y = mesh.geometry_at(fan.tris[s], y)?.grad_psi;
    let alpha = 1.0 / (t_next[0] * grad_psi_y[0] + t_next[1] * grad_psi_y[1]);
    let c = [alpha * t_next[0], alpha * t_next[1]];
    let pieces = gamma_scalar(mesh, e_s, z)?
        .into_iter()
        .map(|(t, g)| (t, VectorBaryPoly::from_scalar(&g, c)))
        .collect();
    let mut out: Vec<Option<FundamentalField>> = vec![None; n];
    out[s] = Some(FundamentalField {
        kind: FieldKind::VT,
        vertex: z,
        anchor: Anchor::Triangle(fan.tris[s]),
        pieces,
    });
    let next = |prev: &FundamentalField, edge: usize, tri: usize| -> Result<FundamentalField> {
        let mut f = w_field(mesh, edge, z)?;
        f.combine(prev, -1.0);
        f.kind = FieldKind::VT;
        f.anchor = Anchor::Triangle(tri);
        Ok(f)
    };
    for j in s..n - 1 {
        let f = next(out[j].as_ref().expect("built in order"), fan.fan_edges[j], fan.tris[j + 1])?;
        out[j + 1] = Some(f);
    }
    for j in (1..=s).rev() {
        let f = next(out[j].as_ref().expect("built in order"), fan.fan_edges[j - 1], fan.tris[j - 1])?;
        out[j - 1] = Some(f);
    }
    let mut fields: Vec<FundamentalField> = out.into_iter().map(|f| f.expect("all positions filled")).collect();
    // Back to the caller's enumeration.
    if fan.tris != patch.tris {
        fields.sort_by_key(|f| match f.anchor {
            Anchor::Triangle(t) => patch.position(t).unwrap_or(usize::MAX),
            _ => usize::MAX,
        });
    }
    Ok(fields)
}

pub fn v_t_field(mesh: &Mesh, patch: &VertexPatch, class: &VertexClass, t: usize) -> Result<FundamentalField> {
    let j = patch
        .position(t)
        .ok_or_else(|| SvError::Domain(format!("triangle {t} is not in the patch of vertex {}", patch.center)))?;
    Ok(v_t_fields(mesh, patch, class)?.swap_remove(j))
}

/// A field supported in the patch of one vertex whose divergence at the vertex
/// takes the prescribed per-triangle values.
#[derive(Debug, Clone)]
pub struct VertexCorrection {
    pub vertex: usize,
    pub field: FundamentalField,
    /// `div v|_{T_j}(z)` in fan order.
    pub achieved: Vec<f64>,
    pub grad_norm: f64,
}

/// Correction at `z` for fan values `a` (`a_j = p|_{T_j}(z)`).
///
/// At singular vertices `a` must satisfy `Σ (−1)^{N−j} a_j = 0` within
/// [`COMPATIBILITY_TOL`] times `max(max|a_j|, scale)`.
pub fn vertex_correction(
    mesh: &Mesh,
    patch: &VertexPatch,
    class: &VertexClass,
    a: &[f64],
    scale: f64,
) -> Result<VertexCorrection> {
    let z = patch.center;
    let n = patch.len();
    if a.len() != n {
        return Err(SvError::InvalidArgument(format!("expected {n} values at vertex {z}, got {}", a.len())));
    }
    let mut field = FundamentalField {
        kind: FieldKind::W,
        vertex: z,
        anchor: Anchor::None,
        pieces: BTreeMap::new(),
    };
    if class.singular {
        let alt: f64 = a
            .iter()
            .enumerate()
            .map(|(j, v)| if (n - 1 - j) % 2 == 0 { *v } else { -*v })
            .sum();
        let amax = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if alt.abs() > COMPATIBILITY_TOL * amax.max(scale) {
            return Err(SvError::NotAdmissible(format!(
                "alternating sum {alt:e} at singular vertex {z}"
            )));
        }
        let mut b = 0.0;
        for j in 0..n.saturating_sub(1) {
            b = a[j] - b;
            if b != 0.0 {
                field.combine(&w_field(mesh, patch.fan_edges[j], z)?, b);
            }
        }
    } else if a.iter().any(|v| *v != 0.0) {
        for (f, aj) in v_t_fields(mesh, patch, class)?.iter().zip(a) {
            if *aj != 0.0 {
                field.combine(f, *aj);
            }
        }
    }
    let achieved = patch
        .tris
        .iter()
        .map(|&t| field.div_at_vertex(mesh, t, z))
        .collect::<Result<Vec<_>>>()?;
    let grad_norm = field.grad_norm(mesh)?;
    Ok(VertexCorrection {
        vertex: z,
        field,
        achieved,
        grad_norm,
    })
}

#[derive(Debug, Clone)]
pub struct GlobalCorrection {
    /// Full coefficient vector in the velocity space.
    pub velocity: DVector<f64>,
    pub grad_norm: f64,
    /// `‖∇v‖ / ‖p‖_{L²}`.
    pub ratio: f64,
    /// `1/Θ_min + 1`, or 1 without non-singular vertices.
    pub predictor: f64,
}

/// Sum of the vertex corrections for the vertex values of `p`.
pub fn global_vertex_correction(
    mesh: &Mesh,
    velocity: &VelocitySpace,
    pressure: &PressureSpace,
    classification: &ClassificationTable,
    p: &DVector<f64>,
) -> Result<GlobalCorrection> {
    if velocity.order() < 3 {
        return Err(SvError::InvalidArgument("vertex corrections need velocity order at least 3".into()));
    }
    let scale = p.amax();
    let mut full = DVector::zeros(velocity.n_full());
    for z in 0..mesh.n_vertices() {
        let patch = &classification.patches[z];
        let a: Vec<f64> = patch
            .tris
            .iter()
            .map(|&t| pressure.vertex_value(p, t, mesh.local_index(t, z).expect("fan triangle")))
            .collect();
        if a.iter().all(|v| *v == 0.0) {
            continue;
        }
        let corr = vertex_correction(mesh, patch, &classification.classes[z], &a, scale)?;
        corr.field.add_to(velocity, &mut full)?;
    }
    let grad_norm = velocity.h1_seminorm(mesh, &full);
    let pn = pressure.l2_norm(p);
    Ok(GlobalCorrection {
        velocity: full,
        grad_norm,
        ratio: if pn > 0.0 { grad_norm / pn } else { 0.0 },
        predictor: classification.theta_min.map_or(1.0, |t| 1.0 / t + 1.0),
    })
}

/// CSV samples `triangle,x,y,ux,uy,div` of a field on a barycentric lattice of
/// the given order in each support triangle.
pub fn field_csv(mesh: &Mesh, field: &FundamentalField, order: usize) -> String {
    let mut s = String::from("triangle,x,y,ux,uy,div\n");
    let nodes = lattice_nodes(order.max(1));
    for (t, p) in &field.pieces {
        let g = mesh.tri_geom(*t);
        let d = divergence(p, &g);
        for b in &nodes {
            let x = g.point(*b);
            let v = p.eval(*b);
            let _ = writeln!(s, "{},{},{},{},{},{}", t, x[0], x[1], v[0], v[1], d.eval(*b));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, MeshFamily};
    use crate::polyspace::integrate_edge;
    use crate::spaces::{build_pressure_space, build_velocity_space};
    use crate::topology::{build_patch, classify, classify_vertex};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn interior_edge(mesh: &Mesh) -> (usize, usize) {
        let e = mesh.edges().iter().find(|e| e.interior).unwrap();
        (e.id, e.verts[0])
    }

    #[test]
    fn eta_and_gamma_edge_identities() {
        let m = generate_mesh(MeshFamily::PerturbedDiagonal, 2, Some(3), 0.2).unwrap();
        let (e, z) = interior_edge(&m);
        let y = m.edges()[e].verts[1];
        for (t, g) in gamma_scalar(&m, e, z).unwrap() {
            let geom = m.tri_geom(t);
            let (iz, iy) = (m.local_index(t, z).unwrap(), m.local_index(t, y).unwrap());
            let v = integrate_edge(&g, &geom, iz, iy).unwrap();
            assert!(v.abs() < 1e-15 * m.edges()[e].length.max(1.0));
        }
        for (t, eta) in eta_field(&m, e, z).unwrap() {
            let iz = m.local_index(t, z).unwrap();
            let mut bz = [0.0; 3];
            bz[iz] = 1.0;
            assert_eq!(eta.eval(bz), 0.0);
            // ∇η vanishes at the other two vertices.
            let gr = gradient(&eta, &m.tri_geom(t));
            for i in (0..3).filter(|&i| i != iz) {
                let mut b = [0.0; 3];
                b[i] = 1.0;
                assert!(gr.x.eval(b).abs() < 1e-13 && gr.y.eval(b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn boundary_edge_rejected() {
        let m = generate_mesh(MeshFamily::Diagonal, 1, None, 0.0).unwrap();
        let b = m.edges().iter().find(|e| !e.interior).unwrap();
        assert!(matches!(w_field(&m, b.id, b.verts[0]), Err(SvError::Domain(_))));
    }

    #[test]
    fn w_field_properties() {
        let m = generate_mesh(MeshFamily::PerturbedDiagonal, 3, Some(8), 0.25).unwrap();
        for e in m.edges().iter().filter(|e| e.interior) {
            for z in e.verts {
                let w = w_field(&m, e.id, z).unwrap();
                assert_eq!(w.degree(), 3);
                for &t in &e.tris {
                    assert!((w.div_at_vertex(&m, t, z).unwrap() - 1.0).abs() < 1e-13);
                    assert!(w.div_integral(&m, t).unwrap().abs() < 1e-15);
                    for &v in &m.triangles()[t].verts {
                        if v != z {
                            assert!(w.div_at_vertex(&m, t, v).unwrap().abs() < 1e-13);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn v_t_identity_matrix() {
        let m = generate_mesh(MeshFamily::PerturbedDiagonal, 3, Some(2), 0.25).unwrap();
        let c = classify(&m).unwrap();
        for &z in &c.nonsingular {
            let p = &c.patches[z];
            let fields = v_t_fields(&m, p, &c.classes[z]).unwrap();
            for (j, f) in fields.iter().enumerate() {
                assert_eq!(f.anchor, Anchor::Triangle(p.tris[j]));
                for (i, &t) in p.tris.iter().enumerate() {
                    let d = f.div_at_vertex(&m, t, z).unwrap();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-12, "vertex {z}: [{i},{j}] = {d}");
                    assert!(f.div_integral(&m, t).unwrap().abs() < 1e-14);
                }
                for t in f.support() {
                    assert!(p.tris.contains(&t));
                }
            }
        }
    }

    #[test]
    fn maximizing_pair_gives_zero_on_neighbor() {
        let m = generate_mesh(MeshFamily::PerturbedDiagonal, 2, Some(1), 0.2).unwrap();
        let c = classify(&m).unwrap();
        let z = m.vertices().iter().find(|v| !v.on_boundary).unwrap().id;
        let p = &c.patches[z];
        let s = maximizing_pair(p, &c.classes[z]).unwrap();
        let f = v_t_field(&m, p, &c.classes[z], p.tris[s]).unwrap();
        let nxt = p.tris[(s + 1) % p.len()];
        assert!(f.div_at_vertex(&m, nxt, z).unwrap().abs() < 1e-14);
    }

    #[test]
    fn singular_correction_example() {
        let m = generate_mesh(MeshFamily::Crisscross, 1, None, 0.0).unwrap();
        let z = m.vertices().iter().find(|v| !v.on_boundary).unwrap().id;
        let p = build_patch(&m, z).unwrap();
        let class = classify_vertex(&p);
        let corr = vertex_correction(&m, &p, &class, &[1.0, 1.0, 1.0, 1.0], 0.0).unwrap();
        for a in &corr.achieved {
            assert!((a - 1.0).abs() < 1e-12);
        }
        assert!(vertex_correction(&m, &p, &class, &[1.0, 0.0, 0.0, 0.0], 0.0).is_err());
        let zero = vertex_correction(&m, &p, &class, &[0.0; 4], 0.0).unwrap();
        assert!(zero.field.pieces.is_empty());
    }

    #[test]
    fn nonsingular_unit_values_select_one_field() {
        let m = generate_mesh(MeshFamily::PerturbedDiagonal, 2, Some(4), 0.2).unwrap();
        let c = classify(&m).unwrap();
        let z = c.nonsingular[0];
        let p = &c.patches[z];
        let mut a = vec![0.0; p.len()];
        a[1] = 1.0;
        let corr = vertex_correction(&m, p, &c.classes[z], &a, 0.0).unwrap();
        let f = v_t_field(&m, p, &c.classes[z], p.tris[1]).unwrap();
        assert!((corr.grad_norm - f.grad_norm(&m).unwrap()).abs() < 1e-13);
        for (x, y) in corr.achieved.iter().zip(&a) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn global_correction_matches_vertex_values() {
        let m = generate_mesh(MeshFamily::PerturbedDiagonal, 2, Some(7), 0.1).unwrap();
        let c = classify(&m).unwrap();
        let v = build_velocity_space(&m, 4).unwrap();
        let q = build_pressure_space(&m, 4, &c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = q.random_member(&mut rng);
        let g = global_vertex_correction(&m, &v, &q, &c, &p).unwrap();
        let div = v.div_to_pressure(&m, &g.velocity);
        for t in 0..m.n_triangles() {
            for i in 0..3 {
                let d = q.vertex_value(&div, t, i) - q.vertex_value(&p, t, i);
                assert!(d.abs() < 1e-10 * p.amax(), "triangle {t} vertex {i}: {d}");
            }
        }
        for x in q.element_integrals(&div) {
            assert!(x.abs() < 1e-13);
        }
        assert!(g.ratio > 0.0 && g.predictor > 1.0);
    }

    #[test]
    fn dilation_keeps_values_and_scales_gradient_norm() {
        let m = generate_mesh(MeshFamily::PerturbedDiagonal, 2, Some(4), 0.2).unwrap();
        let c = classify(&m).unwrap();
        let z = c.nonsingular[0];
        let a: Vec<f64> = (0..c.patches[z].len()).map(|j| j as f64 - 1.5).collect();
        let base = vertex_correction(&m, &c.patches[z], &c.classes[z], &a, 0.0).unwrap();
        for lam in [0.5, 2.0] {
            let ms = m.map_coords(|p| [lam * p[0], lam * p[1]]).unwrap();
            let cs = classify(&ms).unwrap();
            let s = vertex_correction(&ms, &cs.patches[z], &cs.classes[z], &a, 0.0).unwrap();
            // Values are dimensionless, so the field and its gradient norm scale like h.
            assert!((s.grad_norm - lam * base.grad_norm).abs() < 1e-12 * base.grad_norm);
            for (x, y) in s.achieved.iter().zip(&base.achieved) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
