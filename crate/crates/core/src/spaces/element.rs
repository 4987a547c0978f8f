//! Geometry-independent element tables for the Lagrange pair `P^k / P^{k-1}`.
//!
//! Every integral is stored divided by `2|T|` and split along the barycentric
//! gradients, so the physical element matrices are small contractions with
//! `∇λ_i · ∇λ_j`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::polyspace::{lagrange_basis, lattice_nodes, BaryPoly, TriGeom};

#[derive(Debug)]
pub struct ElementTables {
    pub k: usize,
    /// Velocity basis `φ_a` (order `k`).
    pub phi: Vec<BaryPoly>,
    /// `∂φ_a/∂λ_i`, indexed `[i][a]`.
    pub dphi: [Vec<BaryPoly>; 3],
    /// Pressure basis `q_b` (order `k - 1`).
    pub q: Vec<BaryPoly>,
    /// `(1/2|T|) ∫ ∂_iφ_a ∂_jφ_b`, indexed `[i][j]`.
    pub kref: [[DMatrix<f64>; 3]; 3],
    /// `(1/2|T|) ∫ φ_a φ_b`.
    pub mref: DMatrix<f64>,
    /// `(1/2|T|) ∫ q_a q_b`.
    pub mpref: DMatrix<f64>,
    /// `(1/2|T|) ∫ q_b ∂_iφ_a`, indexed `[i]`, shape `n_q × n_phi`.
    pub dref: [DMatrix<f64>; 3],
    /// `∂_iφ_a` at the pressure lattice nodes, indexed `[i]`, shape `n_q × n_phi`.
    pub dnode: [DMatrix<f64>; 3],
    /// `(1/2|T|) ∫ q_b`.
    pub qmean: DVector<f64>,
}

impl ElementTables {
    fn build(k: usize) -> Result<Self> {
        let phi = lagrange_basis(k);
        let q = lagrange_basis(k - 1);
        let dphi: [Vec<BaryPoly>; 3] = std::array::from_fn(|i| phi.iter().map(|p| p.d_lambda(i)).collect());
        let (nv, nq) = (phi.len(), q.len());
        let gram = |a: &[BaryPoly], b: &[BaryPoly]| -> Result<DMatrix<f64>> {
            let mut m = DMatrix::zeros(a.len(), b.len());
            for (r, pa) in a.iter().enumerate() {
                for (c, pb) in b.iter().enumerate() {
                    m[(r, c)] = (pa * pb).integrate_normalized()?;
                }
            }
            Ok(m)
        };
        let mut kref: [[DMatrix<f64>; 3]; 3] = Default::default();
        for i in 0..3 {
            for j in 0..3 {
                kref[i][j] = gram(&dphi[i], &dphi[j])?;
            }
        }
        let mut dref: [DMatrix<f64>; 3] = Default::default();
        let mut dnode: [DMatrix<f64>; 3] = Default::default();
        let qnodes = lattice_nodes(k - 1);
        for i in 0..3 {
            dref[i] = gram(&q, &dphi[i])?;
            dnode[i] = DMatrix::from_fn(nq, nv, |b, a| dphi[i][a].eval(qnodes[b]));
        }
        let qmean = DVector::from_iterator(nq, q.iter().map(|p| p.integrate_normalized().unwrap_or(f64::NAN)));
        Ok(Self {
            k,
            mref: gram(&phi, &phi)?,
            mpref: gram(&q, &q)?,
            phi,
            dphi,
            q,
            kref,
            dref,
            dnode,
            qmean,
        })
    }

    /// Shared tables for order `k`, built once per process.
    pub fn get(k: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<ElementTables>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().expect("table cache poisoned").get(&k) {
            return Ok(t.clone());
        }
        let t = Arc::new(Self::build(k)?);
        cache.lock().expect("table cache poisoned").entry(k).or_insert_with(|| t.clone());
        Ok(t)
    }

    pub fn n_phi(&self) -> usize {
        self.phi.len()
    }

    pub fn n_q(&self) -> usize {
        self.q.len()
    }

    /// Scalar stiffness `∫_T ∇φ_a · ∇φ_b`.
    pub fn stiffness(&self, geom: &TriGeom) -> DMatrix<f64> {
        let g = &geom.grad_lambda;
        let mut out = DMatrix::zeros(self.n_phi(), self.n_phi());
        for i in 0..3 {
            for j in 0..3 {
                let gij = g[i][0] * g[j][0] + g[i][1] * g[j][1];
                out += &self.kref[i][j] * gij;
            }
        }
        out * (2.0 * geom.area)
    }

    /// `∫_T q_b ∂_c φ_a` for component `c`, shape `n_q × n_phi`.
    pub fn divergence(&self, geom: &TriGeom, c: usize) -> DMatrix<f64> {
        let g = &geom.grad_lambda;
        let mut out = DMatrix::zeros(self.n_q(), self.n_phi());
        for i in 0..3 {
            out += &self.dref[i] * g[i][c];
        }
        out * (2.0 * geom.area)
    }

    /// Nodal values of `div v` at the pressure lattice for local coefficients `(ux, uy)`.
    pub fn div_nodal(&self, geom: &TriGeom, ux: &DVector<f64>, uy: &DVector<f64>) -> DVector<f64> {
        let g = &geom.grad_lambda;
        let mut out = DVector::zeros(self.n_q());
        for i in 0..3 {
            let t = ux * g[i][0] + uy * g[i][1];
            out.gemv(1.0, &self.dnode[i], &t, 1.0);
        }
        out
    }

    /// `div v` at an arbitrary barycentric point, straight from the basis derivatives.
    pub fn div_at(&self, geom: &TriGeom, ux: &DVector<f64>, uy: &DVector<f64>, bary: [f64; 3]) -> f64 {
        let g = &geom.grad_lambda;
        let mut s = 0.0;
        for i in 0..3 {
            for a in 0..self.n_phi() {
                let w = g[i][0] * ux[a] + g[i][1] * uy[a];
                if w != 0.0 {
                    s += w * self.dphi[i][a].eval(bary);
                }
            }
        }
        s
    }

    /// Value of `v` at a barycentric point.
    pub fn value_at(&self, ux: &DVector<f64>, uy: &DVector<f64>, bary: [f64; 3]) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (a, p) in self.phi.iter().enumerate() {
            let f = p.eval(bary);
            v[0] += ux[a] * f;
            v[1] += uy[a] * f;
        }
        v
    }
}

/// `T[a_to][a_from] = φ^{from}_{a_from}(node^{to}_{a_to})`: exact interpolation of
/// order-`from` Lagrange data into order `to >= from`.
pub fn transfer_matrix(from: usize, to: usize) -> DMatrix<f64> {
    let basis = lagrange_basis(from);
    let nodes = lattice_nodes(to);
    DMatrix::from_fn(nodes.len(), basis.len(), |r, c| basis[c].eval(nodes[r]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p1_reference_stiffness() {
        // Hats on (0,0),(1,0),(0,1) in lattice order: λ3 first, then λ2, then λ1.
        let t = ElementTables::get(1).unwrap();
        let k = t.stiffness(&TriGeom::reference());
        let vertex_of = |a: usize| {
            let e = crate::polyspace::exponents(1)[a];
            e.iter().position(|&x| x == 1).unwrap()
        };
        let hand = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((k[(a, b)] - hand[vertex_of(a)][vertex_of(b)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stiffness_kills_constants() {
        let g = TriGeom::new([[0.1, 0.2], [1.3, -0.4], [0.5, 0.9]]).unwrap();
        for k in 1..6 {
            let s = ElementTables::get(k).unwrap().stiffness(&g);
            let ones = DVector::from_element(s.ncols(), 1.0);
            assert!((&s * ones).amax() < 1e-11);
            assert!((&s - s.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn divergence_of_linear_field() {
        let g = TriGeom::new([[0.0, 0.0], [2.0, 0.3], [0.4, 1.1]]).unwrap();
        let t = ElementTables::get(3).unwrap();
        let nodes = lattice_nodes(3);
        // v = (2x - y, 3y + x) has div 5.
        let pts: Vec<[f64; 2]> = nodes.iter().map(|b| g.point(*b)).collect();
        let ux = DVector::from_iterator(pts.len(), pts.iter().map(|p| 2.0 * p[0] - p[1]));
        let uy = DVector::from_iterator(pts.len(), pts.iter().map(|p| 3.0 * p[1] + p[0]));
        for v in t.div_nodal(&g, &ux, &uy).iter() {
            assert!((v - 5.0).abs() < 1e-12);
        }
        assert!((t.div_at(&g, &ux, &uy, [0.2, 0.3, 0.5]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn transfer_is_exact_for_lower_order() {
        let t = transfer_matrix(2, 4);
        let p2 = lagrange_basis(2);
        let p4 = lagrange_basis(4);
        let b = [0.15, 0.35, 0.5];
        for (c, p) in p2.iter().enumerate() {
            let interp: f64 = p4.iter().enumerate().map(|(r, q)| t[(r, c)] * q.eval(b)).sum();
            assert!((interp - p.eval(b)).abs() < 1e-13);
        }
    }
}
