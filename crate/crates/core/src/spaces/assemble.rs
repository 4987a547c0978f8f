use nalgebra::DMatrix;

use super::{PressureSpace, VelocitySpace};
use crate::error::{Result, SvError};
use crate::mesh::Mesh;

/// Dense operators on the free velocity DOFs and the unconstrained DG pressures.
#[derive(Debug, Clone)]
pub struct AssembledOps {
    /// `∫ ∇u : ∇v`.
    pub a: DMatrix<f64>,
    /// `∫ u · v`.
    pub m_u: DMatrix<f64>,
    /// `∫ p q`, block diagonal per triangle.
    pub m_p: DMatrix<f64>,
    /// `∫ q div v`; rows are DG pressure DOFs, columns free velocity DOFs.
    pub b: DMatrix<f64>,
}

/// Stiffness and mass matrices of `velocity` on its free DOFs.
pub fn assemble_velocity(mesh: &Mesh, velocity: &VelocitySpace) -> (DMatrix<f64>, DMatrix<f64>) {
    let tables = velocity.tables();
    let nf = velocity.n_free();
    let mut a = DMatrix::zeros(nf, nf);
    let mut m_u = DMatrix::zeros(nf, nf);
    // Elements are merged in id order, so the sums are reproducible.
    for t in 0..mesh.n_triangles() {
        let geom = mesh.tri_geom(t);
        let k_loc = tables.stiffness(&geom);
        let m_loc = &tables.mref * (2.0 * geom.area);
        let nodes = velocity.tri_nodes(t);
        for c in 0..2 {
            let free: Vec<Option<usize>> = nodes.iter().map(|&n| velocity.free_index(2 * n + c)).collect();
            for (la, fa) in free.iter().enumerate() {
                let Some(fa) = *fa else { continue };
                for (lb, fb) in free.iter().enumerate() {
                    let Some(fb) = *fb else { continue };
                    a[(fa, fb)] += k_loc[(la, lb)];
                    m_u[(fa, fb)] += m_loc[(la, lb)];
                }
            }
        }
    }
    (a, m_u)
}

pub fn assemble(mesh: &Mesh, velocity: &VelocitySpace, pressure: &PressureSpace) -> Result<AssembledOps> {
    if velocity.order() != pressure.velocity_order() {
        return Err(SvError::InvalidArgument(format!(
            "velocity order {} does not match pressure space built for order {}",
            velocity.order(),
            pressure.velocity_order()
        )));
    }
    let (a, m_u) = assemble_velocity(mesh, velocity);
    let tables = velocity.tables();
    let nq = tables.n_q();
    let mut b = DMatrix::zeros(pressure.n_dg(), velocity.n_free());
    for t in 0..mesh.n_triangles() {
        let geom = mesh.tri_geom(t);
        let d_loc = [tables.divergence(&geom, 0), tables.divergence(&geom, 1)];
        for (la, &node) in velocity.tri_nodes(t).iter().enumerate() {
            for (c, d) in d_loc.iter().enumerate() {
                let Some(fa) = velocity.free_index(2 * node + c) else { continue };
                for q in 0..nq {
                    b[(t * nq + q, fa)] += d[(q, la)];
                }
            }
        }
    }
    Ok(AssembledOps {
        a,
        m_u,
        m_p: pressure.mass_matrix(),
        b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, MeshFamily};
    use crate::polyspace::{curl, BaryPoly};
    use crate::spaces::{build_pressure_space, build_velocity_space};
    use crate::topology::classify;
    use nalgebra::DVector;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(family: MeshFamily, n: usize, k: usize) -> (Mesh, VelocitySpace, PressureSpace, AssembledOps) {
        let m = generate_mesh(family, n, Some(5), 0.2).unwrap();
        let c = classify(&m).unwrap();
        let v = build_velocity_space(&m, k).unwrap();
        let p = build_pressure_space(&m, k, &c).unwrap();
        let ops = assemble(&m, &v, &p).unwrap();
        (m, v, p, ops)
    }

    #[test]
    fn stiffness_is_spd() {
        let (_, v, _, ops) = setup(MeshFamily::PerturbedDiagonal, 2, 4);
        let sym = (&ops.a - ops.a.transpose()).amax() / ops.a.amax();
        assert!(sym < 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let x = v.random_free(&mut rng);
            assert!(x.dot(&(&ops.a * &x)) > 0.0);
        }
        assert!(ops.a.clone().cholesky().is_some());
    }

    #[test]
    fn p1_single_interior_vertex() {
        // Diagonal n = 2, P1: one free vertex at (0.5, 0.5) with six incident triangles.
        let m = generate_mesh(MeshFamily::Diagonal, 2, None, 0.0).unwrap();
        let c = classify(&m).unwrap();
        let v = build_velocity_space(&m, 1).unwrap();
        let p = build_pressure_space(&m, 1, &c).unwrap();
        let ops = assemble(&m, &v, &p).unwrap();
        assert_eq!(ops.a.nrows(), 2);
        // Hat function on the standard 6-triangle star: ∫|∇φ|² = 4.
        assert!((ops.a[(0, 0)] - 4.0).abs() < 1e-13);
        assert!((ops.a[(1, 1)] - 4.0).abs() < 1e-13);
        assert!(ops.a[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn b_matches_element_integrals() {
        let (m, v, p, ops) = setup(MeshFamily::PerturbedDiagonal, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = v.random_free(&mut rng);
        let full = v.expand(&x);
        let q = DVector::from_iterator(p.n_dg(), (0..p.n_dg()).map(|i| ((i * 7 % 11) as f64) - 5.0));
        let bx = q.dot(&(&ops.b * &x));
        // Independent route: nodal divergence times the pressure mass matrix.
        let div = v.div_to_pressure(&m, &full);
        let direct = q.dot(&(&ops.m_p * &div));
        assert!((bx - direct).abs() < 1e-12 * bx.abs().max(1.0));
    }

    #[test]
    fn curl_field_has_zero_moments() {
        // ψ = (x(1−x)y(1−y))² has ∇ψ = 0 on ∂Ω, so curl ψ lies in V_h^7 exactly.
        let (m, v, _, ops) = setup(MeshFamily::Diagonal, 2, 7);
        let mut full = DVector::zeros(v.n_full());
        let pieces: Vec<_> = (0..m.n_triangles())
            .map(|t| {
                let g = m.tri_geom(t);
                let coord = |c: usize| {
                    (0..3).fold(BaryPoly::zero(1), |acc, i| &acc + &(&BaryPoly::lambda(i) * g.verts[i][c]))
                };
                let (x, y) = (coord(0), coord(1));
                let one = BaryPoly::constant(1.0);
                let s = &(&(&x * &(&one - &x)) * &y) * &(&one - &y);
                (t, curl(&(&s * &s), &g))
            })
            .collect();
        v.interpolate_pieces(&pieces, &mut full, 1e-12).unwrap();
        let x = v.restrict(&full, 1e-14).unwrap();
        assert!(x.amax() > 1e-3);
        assert!((&ops.b * &x).amax() < 1e-14);
    }
}
