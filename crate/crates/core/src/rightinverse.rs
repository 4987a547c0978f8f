//! Constructive right inverse of the divergence: `v = v₁ + v₂ + v₃` with `div v = p`.
//!
//! 1. `v₁` matches the element integrals of `p`: minimal gradient energy in a
//!    Bernardi–Raugel subspace of `V_h²` (or all of `V_h²`) under the mean constraints.
//! 2. `v₂` is the sum of vertex corrections for the vertex values of `p − div v₁`.
//! 3. `v₃` solves `div v₃ = p − div v₁ − div v₂` triangle by triangle with interior bubbles.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Result, SvError};
use crate::fields::global_vertex_correction;
use crate::linalg;
use crate::mesh::Mesh;
use crate::polyspace::{bubble_space_basis, divergence, lattice_nodes, m_space_basis, space_dims, VectorBaryPoly};
use crate::spaces::{assemble_velocity, build_velocity_space, ElementTables, PressureSpace, VelocitySpace};
use crate::topology::ClassificationTable;

/// Relative tolerance of the input membership check.
pub const INPUT_TOL: f64 = 1e-9;
/// Relative singular-value cut of the per-triangle bubble solves.
pub const BUBBLE_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Step1Space {
    /// Vertex hats plus normal edge bubbles.
    #[default]
    BernardiRaugel,
    /// The full continuous `[P²]²` space.
    P2,
}

impl Step1Space {
    pub fn name(self) -> &'static str {
        match self {
            Step1Space::BernardiRaugel => "br",
            Step1Space::P2 => "p2",
        }
    }
}

impl std::str::FromStr for Step1Space {
    type Err = SvError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "br" => Ok(Step1Space::BernardiRaugel),
            "p2" => Ok(Step1Space::P2),
            other => Err(SvError::InvalidArgument(format!("unknown step-1 space `{other}` (br or p2)"))),
        }
    }
}

/// Element-integral matching subspace of `V_h²`, given as columns over the free DOFs.
#[derive(Debug, Clone)]
pub struct BRSubspace {
    pub space: VelocitySpace,
    /// `n_free(V_h²) × n_sub` embedding.
    pub embedding: DMatrix<f64>,
}

impl BRSubspace {
    pub fn new(mesh: &Mesh, kind: Step1Space) -> Result<Self> {
        let space = build_velocity_space(mesh, 2)?;
        let nf = space.n_free();
        let embedding = match kind {
            Step1Space::P2 => DMatrix::identity(nf, nf),
            Step1Space::BernardiRaugel => {
                let nv = mesh.n_vertices();
                let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
                for v in mesh.vertices().iter().filter(|v| !v.on_boundary) {
                    for c in 0..2 {
                        let mut col = vec![(2 * v.id + c, 1.0)];
                        for e in mesh.edges().iter().filter(|e| e.verts.contains(&v.id)) {
                            col.push((2 * (nv + e.id) + c, 0.5));
                        }
                        cols.push(col);
                    }
                }
                for e in mesh.edges().iter().filter(|e| e.interior) {
                    let t = mesh.tangent(e.verts[0], e.verts[1]);
                    let n = [t[1], -t[0]];
                    let node = nv + e.id;
                    cols.push(vec![(2 * node, 0.25 * n[0]), (2 * node + 1, 0.25 * n[1])]);
                }
                let mut m = DMatrix::zeros(nf, cols.len());
                for (j, col) in cols.iter().enumerate() {
                    for (dof, v) in col {
                        let f = space
                            .free_index(*dof)
                            .ok_or_else(|| SvError::Numerical(format!("subspace dof {dof} is not free")))?;
                        m[(f, j)] += v;
                    }
                }
                m
            }
        };
        Ok(Self { space, embedding })
    }

    pub fn dim(&self) -> usize {
        self.embedding.ncols()
    }
}

/// Outcome of one right-inverse application.
#[derive(Debug, Clone)]
pub struct RightInverseResult {
    /// Full coefficient vectors in `V_h^k`.
    pub v1: DVector<f64>,
    pub v2: DVector<f64>,
    pub v3: DVector<f64>,
    pub v: DVector<f64>,
    /// `‖Π₀(p − div v₁)‖_{L²} / ‖p‖_{L²}` (element means after step 1).
    pub step1_mean_residual: f64,
    /// `max |(p − div v₁ − div v₂)|_T(z)| / ‖p‖_∞` over all vertices of all triangles.
    pub step2_vertex_residual: f64,
    /// `‖Π₀(p − div v₁ − div v₂)‖_{L²} / ‖p‖_{L²}`.
    pub step2_mean_residual: f64,
    /// Largest per-triangle bubble-solve residual relative to `‖p‖_{L²}`.
    pub step3_residual: f64,
    /// `‖div v − p‖_{L²} / ‖p‖_{L²}`.
    pub final_residual: f64,
    pub grad_norms: [f64; 4],
    pub p_norm: f64,
    /// `‖∇v‖ / ‖p‖_{L²}`.
    pub stability_ratio: f64,
    /// `‖v‖_{H¹} / ‖p‖_{L²}` with the full norm.
    pub stability_ratio_full: f64,
    pub theta_min: Option<f64>,
    /// `1/Θ_min + 1`.
    pub predictor: f64,
}

struct BubbleSolve {
    /// Maps `M^{k-1}` coordinates to bubble coefficients (minimum norm).
    pinv: DMatrix<f64>,
    /// Bubble basis values at the velocity lattice, `n_phi × dim_B`, per component.
    values: [DMatrix<f64>; 2],
}

/// Immutable right-inverse pipeline for one mesh and order.
pub struct RightInverse<'a> {
    mesh: &'a Mesh,
    velocity: &'a VelocitySpace,
    pressure: &'a PressureSpace,
    classification: &'a ClassificationTable,
    br: BRSubspace,
    br_stiffness: Cholesky<f64, Dyn>,
    /// Element-integral constraints without the last row.
    constraints: DMatrix<f64>,
    schur: Cholesky<f64, Dyn>,
    m_basis: DMatrix<f64>,
    bubbles: Vec<BubbleSolve>,
}

impl<'a> RightInverse<'a> {
    pub fn new(
        mesh: &'a Mesh,
        velocity: &'a VelocitySpace,
        pressure: &'a PressureSpace,
        classification: &'a ClassificationTable,
        step1: Step1Space,
    ) -> Result<Self> {
        let k = velocity.order();
        if k < 4 {
            return Err(SvError::InvalidArgument(format!("the right inverse needs k >= 4, got {k}")));
        }
        if pressure.velocity_order() != k {
            return Err(SvError::InvalidArgument("velocity and pressure orders differ".into()));
        }
        let br = BRSubspace::new(mesh, step1)?;
        let (a2, _) = assemble_velocity(mesh, &br.space);
        let a_sub = br.embedding.transpose() * &a2 * &br.embedding;
        let br_stiffness = linalg::cholesky(a_sub, "step-1 stiffness")?;
        // C[T, j] = ∫_T div(E_j).
        let t2 = ElementTables::get(2)?;
        let n_tri = mesh.n_triangles();
        let mut c = DMatrix::zeros(n_tri, br.dim());
        for j in 0..br.dim() {
            let full = br.space.expand(&br.embedding.column(j).into_owned());
            for t in 0..n_tri {
                let (ux, uy) = br.space.local(&full, t);
                let g = mesh.tri_geom(t);
                c[(t, j)] = 2.0 * g.area * t2.qmean.dot(&t2.div_nodal(&g, &ux, &uy));
            }
        }
        // Rows sum to ∫_Ω div v = 0; drop one.
        let constraints = c.rows(0, n_tri - 1).into_owned();
        let schur = if n_tri > 1 {
            let ainv_ct = br_stiffness.solve(&constraints.transpose());
            let s = &constraints * ainv_ct;
            let s = (&s + s.transpose()) * 0.5;
            Cholesky::new(s).ok_or_else(|| {
                SvError::RankDeficient("step-1 saddle system is singular beyond the constant mode".into())
            })?
        } else {
            Cholesky::new(DMatrix::zeros(0, 0)).expect("empty factorization")
        };
        let m_basis = m_space_basis(k)?;
        let dims = space_dims(k);
        let basis = bubble_space_basis(k);
        let vnodes = lattice_nodes(k);
        let tk = velocity.tables();
        let mut bubbles = Vec::with_capacity(n_tri);
        for t in 0..n_tri {
            let g = mesh.tri_geom(t);
            let d = div_matrix(&basis, &g, tk);
            let dm = m_basis.transpose() * d;
            let svd = dm.clone().svd(true, true);
            let smax = svd.singular_values.iter().fold(0.0_f64, |m, s| m.max(*s));
            let rank = svd.singular_values.iter().filter(|s| **s > BUBBLE_RANK_TOL * smax).count();
            if rank < dims.dim_m {
                return Err(SvError::RankDeficient(format!(
                    "bubble divergence on triangle {t} has rank {rank} < {}",
                    dims.dim_m
                )));
            }
            let pinv = svd
                .pseudo_inverse(BUBBLE_RANK_TOL * smax)
                .map_err(|e| SvError::Numerical(e.to_string()))?;
            let values = [
                DMatrix::from_fn(vnodes.len(), basis.len(), |r, c| basis[c].x.eval(vnodes[r])),
                DMatrix::from_fn(vnodes.len(), basis.len(), |r, c| basis[c].y.eval(vnodes[r])),
            ];
            bubbles.push(BubbleSolve { pinv, values });
        }
        Ok(Self {
            mesh,
            velocity,
            pressure,
            classification,
            br,
            br_stiffness,
            constraints,
            schur,
            m_basis,
            bubbles,
        })
    }

    pub fn subspace(&self) -> &BRSubspace {
        &self.br
    }

    /// Step 1: `v₁ ∈ V_h^k` (prolongated from `V_h²`) with `∫_T div v₁ = ∫_T p`.
    pub fn step1(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let g_full = self.pressure.element_integrals(p);
        let n = g_full.len();
        if n <= 1 {
            return Ok(DVector::zeros(self.velocity.n_full()));
        }
        let g = DVector::from_column_slice(&g_full[..n - 1]);
        let mu = self.schur.solve(&g);
        let x = self.br_stiffness.solve(&(self.constraints.transpose() * mu));
        let free = &self.br.embedding * x;
        let full2 = self.br.space.expand(&free);
        self.velocity.prolongate_from(&self.br.space, &full2)
    }

    /// Step 3: interior bubbles with `div v₃ = p₂` on every triangle.
    ///
    /// `p₂` must vanish at the vertices (relative to `scale` at 1e−9) and have zero
    /// element integrals (1e−12); it is then projected onto `M^{k−1}(T)` exactly.
    /// Returns `v₃` and the largest per-triangle residual `‖div v₃ − p₂‖_{L²(T)}`.
    pub fn step3(&self, p2: &DVector<f64>, scale: f64) -> Result<(DVector<f64>, f64)> {
        let nq = self.pressure.n_local();
        let integrals = self.pressure.element_integrals(p2);
        let mut full = DVector::zeros(self.velocity.n_full());
        let mut worst: f64 = 0.0;
        let tk = self.velocity.tables();
        for (t, solve) in self.bubbles.iter().enumerate() {
            let local = p2.rows(t * nq, nq).into_owned();
            for i in 0..3 {
                let v = self.pressure.vertex_value(p2, t, i);
                if v.abs() > INPUT_TOL * scale {
                    return Err(SvError::NotAdmissible(format!(
                        "step-3 input has vertex value {v:e} on triangle {t}"
                    )));
                }
            }
            let area = self.mesh.triangles()[t].area;
            if integrals[t].abs() > 1e-12 * scale * area.max(f64::MIN_POSITIVE) {
                return Err(SvError::NotAdmissible(format!(
                    "step-3 input has integral {:e} on triangle {t}",
                    integrals[t]
                )));
            }
            let coords = self.m_basis.transpose() * &local;
            let x = &solve.pinv * &coords;
            let ux = &solve.values[0] * &x;
            let uy = &solve.values[1] * &x;
            let g = self.mesh.tri_geom(t);
            let achieved = tk.div_nodal(&g, &ux, &uy);
            let diff = achieved - &self.m_basis * &coords;
            let mass = self.pressure.local_mass(t);
            worst = worst.max(diff.dot(&(&mass * &diff)).max(0.0).sqrt());
            for (a, &node) in self.velocity.tri_nodes(t).iter().enumerate() {
                // Edge and vertex lattice nodes carry exact zeros.
                full[2 * node] += ux[a];
                full[2 * node + 1] += uy[a];
            }
        }
        Ok((full, worst))
    }

    pub fn apply(&self, p: &DVector<f64>) -> Result<RightInverseResult> {
        self.pressure.validate(p, INPUT_TOL)?;
        let mesh = self.mesh;
        let p_norm = self.pressure.l2_norm(p);
        let p_sup = p.amax();
        if p_norm == 0.0 {
            return Err(SvError::InvalidArgument("the zero pressure has no stability ratio".into()));
        }
        let pi0 = |q: &DVector<f64>| -> f64 {
            self.pressure
                .element_integrals(q)
                .iter()
                .zip(mesh.triangles())
                .map(|(i, t)| i * i / t.area)
                .sum::<f64>()
                .sqrt()
        };

        let v1 = self.step1(p)?;
        let p1 = p - self.velocity.div_to_pressure(mesh, &v1);
        let step1_mean_residual = pi0(&p1) / p_norm;
        // div v₁ ∈ Q_h^{k−1}, so p₁ must stay admissible.
        self.pressure.validate(&p1, INPUT_TOL)?;

        let corr = global_vertex_correction(mesh, self.velocity, self.pressure, self.classification, &p1)?;
        let v2 = corr.velocity;
        let p2 = &p1 - self.velocity.div_to_pressure(mesh, &v2);
        let mut vmax: f64 = 0.0;
        for t in 0..mesh.n_triangles() {
            for i in 0..3 {
                vmax = vmax.max(self.pressure.vertex_value(&p2, t, i).abs());
            }
        }
        let step2_vertex_residual = vmax / p_sup;
        let step2_mean_residual = pi0(&p2) / p_norm;

        let (v3, worst) = self.step3(&p2, p_sup)?;
        let v = &v1 + &v2 + &v3;
        let r = p - self.velocity.div_to_pressure(mesh, &v);
        let grad = |x: &DVector<f64>| self.velocity.h1_seminorm(mesh, x);
        let gv = grad(&v);
        let l2v = self.velocity.l2_norm(mesh, &v);
        Ok(RightInverseResult {
            grad_norms: [grad(&v1), grad(&v2), grad(&v3), gv],
            step1_mean_residual,
            step2_vertex_residual,
            step2_mean_residual,
            step3_residual: worst / p_norm,
            final_residual: self.pressure.l2_norm(&r) / p_norm,
            p_norm,
            stability_ratio: gv / p_norm,
            stability_ratio_full: (gv * gv + l2v * l2v).sqrt() / p_norm,
            theta_min: self.classification.theta_min,
            predictor: corr.predictor,
            v1,
            v2,
            v3,
            v,
        })
    }
}

/// Lagrange coefficients (order `k−1`) of `div b_i` for each bubble, `n_q × dim_B`.
fn div_matrix(basis: &[VectorBaryPoly], geom: &crate::polyspace::TriGeom, tk: &ElementTables) -> DMatrix<f64> {
    let nodes = lattice_nodes(tk.k - 1);
    let mut d = DMatrix::zeros(nodes.len(), basis.len());
    for (c, b) in basis.iter().enumerate() {
        let div = divergence(b, geom);
        for (r, n) in nodes.iter().enumerate() {
            d[(r, c)] = div.eval(*n);
        }
    }
    d
}

/// One-shot convenience wrapper around [`RightInverse`].
pub fn right_inverse(
    mesh: &Mesh,
    velocity: &VelocitySpace,
    pressure: &PressureSpace,
    classification: &ClassificationTable,
    p: &DVector<f64>,
) -> Result<RightInverseResult> {
    RightInverse::new(mesh, velocity, pressure, classification, Step1Space::default())?.apply(p)
}
