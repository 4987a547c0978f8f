use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::element::ElementTables;
use crate::error::{Result, SvError};
use crate::linalg;
use crate::mesh::Mesh;
use crate::polyspace::exponent_index;
use crate::topology::{ClassificationTable, VertexPatch};

/// Constraint rows whose normalized singular value falls below this fraction of
/// the largest are treated as dependent.
pub const CONSTRAINT_RANK_TOL: f64 = 1e-10;

/// Local index of the `P^{order}` lattice node sitting at local vertex `i`.
fn vertex_node(order: usize, i: usize) -> usize {
    if order == 0 {
        return 0;
    }
    let mut e = [0; 3];
    e[i] = order;
    exponent_index(order, e[0], e[1])
}

/// Sparse row of `A_h^z(q) = Σ_j (−1)^{N−j} q|_{T_j}(z)` in DG coordinates.
pub fn constraint_row(mesh: &Mesh, k: usize, patch: &VertexPatch) -> Vec<(usize, f64)> {
    let nq = k * (k + 1) / 2;
    let n = patch.len();
    patch
        .tris
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let sign = if (n - (j + 1)) % 2 == 0 { 1.0 } else { -1.0 };
            let i = mesh.local_index(t, patch.center).expect("fan triangle contains its center");
            (t * nq + vertex_node(k - 1, i), sign)
        })
        .collect()
}

/// Discontinuous `P^{k-1}` pressures with Lagrange coefficients per triangle,
/// constrained by the singular-vertex functionals and zero mean.
#[derive(Debug, Clone)]
pub struct PressureSpace {
    k: usize,
    tables: Arc<ElementTables>,
    areas: Vec<f64>,
    /// Vertex behind each singular-vertex row, then `None` for the mean row.
    row_vertices: Vec<Option<usize>>,
    rows: Vec<Vec<(usize, f64)>>,
    row_basis: DMatrix<f64>,
    null_basis: DMatrix<f64>,
}

pub fn build_pressure_space(mesh: &Mesh, k: usize, classification: &ClassificationTable) -> Result<PressureSpace> {
    let patches: Vec<&VertexPatch> = classification.singular.iter().map(|&z| &classification.patches[z]).collect();
    PressureSpace::with_constraints(mesh, k, &patches)
}

impl PressureSpace {
    /// Zero mean plus one `A_h^z` row per listed fan. An empty list gives the
    /// unconstrained (mean-zero only) DG space.
    pub fn with_constraints(mesh: &Mesh, k: usize, patches: &[&VertexPatch]) -> Result<Self> {
        if k == 0 {
            return Err(SvError::InvalidArgument("velocity order must be at least 1".into()));
        }
        let tables = ElementTables::get(k)?;
        let nq = tables.n_q();
        let n_dg = nq * mesh.n_triangles();
        let areas: Vec<f64> = mesh.triangles().iter().map(|t| t.area).collect();
        let mut rows: Vec<Vec<(usize, f64)>> = patches.iter().map(|p| constraint_row(mesh, k, p)).collect();
        let mut row_vertices: Vec<Option<usize>> = patches.iter().map(|p| Some(p.center)).collect();
        let mut mean = Vec::with_capacity(n_dg);
        for (t, area) in areas.iter().enumerate() {
            for b in 0..nq {
                mean.push((t * nq + b, 2.0 * area * tables.qmean[b]));
            }
        }
        rows.push(mean);
        row_vertices.push(None);
        let mut dense = DMatrix::zeros(rows.len(), n_dg);
        for (r, row) in rows.iter().enumerate() {
            let norm = row.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
            for (i, c) in row {
                dense[(r, *i)] += c / norm;
            }
        }
        let row_basis = linalg::row_space(&dense, CONSTRAINT_RANK_TOL);
        let null_basis = linalg::orthonormal_complement(&row_basis);
        if null_basis.ncols() == 0 {
            return Err(SvError::Degenerate("the constrained pressure space is zero-dimensional".into()));
        }
        Ok(Self {
            k,
            tables,
            areas,
            row_vertices,
            rows,
            row_basis,
            null_basis,
        })
    }

    /// Velocity order `k`; pressures have order `k - 1`.
    pub fn velocity_order(&self) -> usize {
        self.k
    }

    pub fn tables(&self) -> &ElementTables {
        &self.tables
    }

    pub fn n_local(&self) -> usize {
        self.tables.n_q()
    }

    pub fn n_dg(&self) -> usize {
        self.n_local() * self.areas.len()
    }

    pub fn dim(&self) -> usize {
        self.null_basis.ncols()
    }

    pub fn n_constraint_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn constraint_rank(&self) -> usize {
        self.row_basis.ncols()
    }

    /// Orthonormal columns spanning the constrained space.
    pub fn null_basis(&self) -> &DMatrix<f64> {
        &self.null_basis
    }

    pub fn row_basis(&self) -> &DMatrix<f64> {
        &self.row_basis
    }

    /// Euclidean projection of DG coefficients onto the constrained space.
    pub fn project(&self, q: &DVector<f64>) -> DVector<f64> {
        q - &self.row_basis * (self.row_basis.transpose() * q)
    }

    pub fn random_member(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let c = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.random_range(-1.0..=1.0)));
        &self.null_basis * c
    }

    /// `q|_T` at local vertex `i` of `T`.
    pub fn vertex_value(&self, q: &DVector<f64>, t: usize, i: usize) -> f64 {
        q[t * self.n_local() + vertex_node(self.k - 1, i)]
    }

    /// `∫_T q` for every triangle.
    pub fn element_integrals(&self, q: &DVector<f64>) -> Vec<f64> {
        let nq = self.n_local();
        self.areas
            .iter()
            .enumerate()
            .map(|(t, a)| 2.0 * a * self.tables.qmean.dot(&q.rows(t * nq, nq)))
            .collect()
    }

    pub fn local_mass(&self, t: usize) -> DMatrix<f64> {
        &self.tables.mpref * (2.0 * self.areas[t])
    }

    pub fn l2_norm(&self, q: &DVector<f64>) -> f64 {
        let nq = self.n_local();
        let mut s = 0.0;
        for t in 0..self.areas.len() {
            let local = q.rows(t * nq, nq);
            s += local.dot(&(self.local_mass(t) * local));
        }
        s.max(0.0).sqrt()
    }

    /// Block-diagonal mass matrix of the unconstrained DG space.
    pub fn mass_matrix(&self) -> DMatrix<f64> {
        let nq = self.n_local();
        let mut m = DMatrix::zeros(self.n_dg(), self.n_dg());
        for t in 0..self.areas.len() {
            m.view_mut((t * nq, t * nq), (nq, nq)).copy_from(&self.local_mass(t));
        }
        m
    }

    /// Values `A_h^z(q)` for every singular vertex, in row order.
    pub fn singular_functionals(&self, q: &DVector<f64>) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .zip(&self.row_vertices)
            .filter_map(|(row, z)| z.map(|z| (z, row.iter().map(|(i, c)| c * q[*i]).sum())))
            .collect()
    }

    /// Check `A_h^z(q) = 0` relative to `‖q‖_∞` and `∫ q = 0` relative to
    /// `‖q‖_{L²} |Ω|^{1/2}`.
    pub fn validate(&self, q: &DVector<f64>, rel_tol: f64) -> Result<()> {
        if q.len() != self.n_dg() {
            return Err(SvError::InvalidArgument(format!(
                "pressure has {} coefficients, expected {}",
                q.len(),
                self.n_dg()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(SvError::NotAdmissible("pressure has non-finite coefficients".into()));
        }
        let sup = q.amax();
        for (z, a) in self.singular_functionals(q) {
            if a.abs() > rel_tol * sup {
                return Err(SvError::NotAdmissible(format!(
                    "alternating sum at singular vertex {z} is {a:e}"
                )));
            }
        }
        let total: f64 = self.element_integrals(q).iter().sum();
        let omega: f64 = self.areas.iter().sum();
        if total.abs() > rel_tol * self.l2_norm(q) * omega.sqrt() {
            return Err(SvError::NotAdmissible(format!("mean value is {:e}", total / omega)));
        }
        Ok(())
    }
}
