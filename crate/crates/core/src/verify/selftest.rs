use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fields::{gamma_scalar, v_t_fields, w_field};
use crate::linalg;
use crate::mesh::{generate_mesh, split_triangle_mesh, Mesh, MeshFamily};
use crate::polyspace::{
    bubble_space_basis, divergence, integrate_edge, lattice_nodes, m_space_basis, space_dims, BaryPoly, TriGeom,
};
use crate::spaces::{build_velocity_space, verify_div_inclusion};
use crate::topology::{build_patch, classify, classify_vertex};

/// Three-point Gauss–Legendre rule on `[0, 1]`.
const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Largest relative deviations of the edge identities.
#[derive(Debug, Clone, Copy, Default)]
pub struct EdgeIdentityReport {
    pub edges: usize,
    /// `|∫_e ψ_z²ψ_y − |e|/12| / (|e|/12)`.
    pub psi1: f64,
    /// `|∫_e ψ_z²ψ_y² − |e|/30| / (|e|/30)`.
    pub psi2: f64,
    /// `|∫_e γ_e^z| / |e|`.
    pub gamma: f64,
}

/// Two triangles sharing the edge `z = 0`, `y = 1`; vertex 2 lies left of `z → y`.
fn random_edge_pair(rng: &mut ChaCha8Rng) -> Result<Mesh> {
    let z = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let len: f64 = rng.random_range(0.2..2.0);
    let t = [phi.cos(), phi.sin()];
    let n = [-t[1], t[0]];
    let y = [z[0] + len * t[0], z[1] + len * t[1]];
    let side = |sign: f64, rng: &mut ChaCha8Rng| {
        let s = len * rng.random_range(0.2..0.8);
        let h = sign * len * rng.random_range(0.3..1.2);
        [z[0] + s * t[0] + h * n[0], z[1] + s * t[1] + h * n[1]]
    };
    let w1 = side(1.0, rng);
    let w2 = side(-1.0, rng);
    Mesh::new(vec![z, y, w1, w2], vec![[0, 1, 2], [1, 0, 3]])
}

fn gauss_edge(p: &BaryPoly, i: usize, j: usize, len: f64) -> f64 {
    GAUSS3
        .iter()
        .map(|&(s, w)| {
            let mut b = [0.0; 3];
            b[i] = 1.0 - s;
            b[j] = s;
            w * p.eval(b)
        })
        .sum::<f64>()
        * len
}

/// Edge integrals of the vertex bubbles and of `γ_e^z` on random edges, each by
/// the closed form and by Gauss–Legendre quadrature; the worse of the two counts.
pub fn edge_identity_suite(edges: usize, seed: u64) -> Result<EdgeIdentityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = EdgeIdentityReport {
        edges,
        ..Default::default()
    };
    for _ in 0..edges {
        let mesh = random_edge_pair(&mut rng)?;
        let e = mesh.edge_between(0, 1).expect("shared edge");
        let len = mesh.edges()[e].length;
        for t in 0..2 {
            let geom = mesh.tri_geom(t);
            let (iz, iy) = (mesh.local_index(t, 0).unwrap(), mesh.local_index(t, 1).unwrap());
            let (lz, ly) = (BaryPoly::lambda(iz), BaryPoly::lambda(iy));
            let p1 = &(&lz * &lz) * &ly;
            let p2 = &p1 * &ly;
            for v in [integrate_edge(&p1, &geom, iz, iy)?, gauss_edge(&p1, iz, iy, len)] {
                rep.psi1 = rep.psi1.max((v - len / 12.0).abs() / (len / 12.0));
            }
            for v in [integrate_edge(&p2, &geom, iz, iy)?, gauss_edge(&p2, iz, iy, len)] {
                rep.psi2 = rep.psi2.max((v - len / 30.0).abs() / (len / 30.0));
            }
            for z in [0, 1] {
                let g = &gamma_scalar(&mesh, e, z)?[&t];
                for v in [integrate_edge(g, &geom, iz, iy)?, gauss_edge(g, iz, iy, len)] {
                    rep.gamma = rep.gamma.max(v.abs() / len);
                }
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy)]
pub struct DimensionRow {
    pub k: usize,
    pub dim_b: usize,
    /// Computed rank of `div` on `B^k(T)`.
    pub rank_div: usize,
    /// Dimension of the computed `M^{k−1}(T)` basis.
    pub dim_m: usize,
    /// `dim_B − rank_div`.
    pub dim_z: usize,
    pub dim_m_formula: usize,
    pub dim_z_formula: usize,
    /// `‖(I − P_M) div B‖_max`: how far the divergences stray from `M^{k−1}`.
    pub leak: f64,
}

impl DimensionRow {
    pub fn passed(&self) -> bool {
        self.rank_div == self.dim_m
            && self.dim_m == self.dim_m_formula
            && self.dim_z == self.dim_z_formula
            && self.dim_b == self.dim_m + self.dim_z
            && self.leak < 1e-10
    }
}

/// Ranks of the bubble divergence on a fixed skew triangle for each `k`.
pub fn dimension_suite(ks: &[usize]) -> Result<Vec<DimensionRow>> {
    let geom = TriGeom::new([[0.1, -0.2], [1.3, 0.25], [0.35, 0.95]])?;
    ks.iter()
        .map(|&k| {
            let basis = bubble_space_basis(k);
            let nodes = lattice_nodes(k - 1);
            let d = DMatrix::from_fn(nodes.len(), basis.len(), |r, c| divergence(&basis[c], &geom).eval(nodes[r]));
            let mb = m_space_basis(k)?;
            let leak = (&d - &mb * (mb.transpose() * &d)).amax();
            let rank_div = linalg::rank(&d, 1e-10);
            let dims = space_dims(k);
            Ok(DimensionRow {
                k,
                dim_b: basis.len(),
                rank_div,
                dim_m: mb.ncols(),
                dim_z: basis.len() - rank_div,
                dim_m_formula: (k * (k + 1) / 2).saturating_sub(4),
                dim_z_formula: if k >= 5 { (k - 4) * (k - 3) / 2 } else { dims.dim_z },
                leak,
            })
        })
        .collect()
}

/// Largest violations of the fundamental-field properties.
#[derive(Debug, Clone, Copy, Default)]
pub struct FieldReport {
    pub cases: usize,
    pub w_fields: usize,
    pub v_fields: usize,
    /// `|∫_K div w| / |K|`.
    pub w3: f64,
    /// `|div w(σ)|`, `σ ≠ z`.
    pub w4: f64,
    /// `|div w|_{T_s}(z) − 1|`.
    pub w6: f64,
    /// Largest `‖∇w‖ / h_z`.
    pub w7_constant: f64,
    /// `|div v_T(σ)|`, `σ ≠ z`.
    pub v1: f64,
    /// `|div v_{T_j}|_{T_i}(z) − δ_ij|`.
    pub v2: f64,
    /// Support triangles outside the patch.
    pub v3_violations: usize,
    /// `|∫_K div v_T| / |K|`.
    pub v4: f64,
    /// Largest `‖∇v_T‖ / (h_z (1/Θ + 1))`.
    pub v5_constant: f64,
}

impl FieldReport {
    pub fn max_violation(&self) -> f64 {
        [self.w3, self.w4, self.w6, self.v1, self.v2, self.v4]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Random star patch around vertex 0 with `3..=8` triangles.
fn random_star(rng: &mut ChaCha8Rng) -> Result<Mesh> {
    let n: usize = rng.random_range(3..=8);
    let base = 2.0 * PI / n as f64;
    let mut angles: Vec<f64> = (0..n).map(|_| base * (1.0 + rng.random_range(-0.35..0.35))).collect();
    let total: f64 = angles.iter().sum();
    angles.iter_mut().for_each(|a| *a *= 2.0 * PI / total);
    let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let mut phi: f64 = rng.random_range(0.0..2.0 * PI);
    let mut coords = vec![c];
    for a in &angles {
        let r: f64 = rng.random_range(0.5..1.5);
        coords.push([c[0] + r * phi.cos(), c[1] + r * phi.sin()]);
        phi += a;
    }
    let tris = (0..n).map(|i| [0, i + 1, (i + 1) % n + 1]).collect();
    Mesh::new(coords, tris)
}

/// Checks `w_e^z` on every interior edge at `z` and all `v_T^z` on its patch.
fn check_vertex(mesh: &Mesh, z: usize, rep: &mut FieldReport) -> Result<()> {
    let hz = mesh.patch_diameter(z);
    let others = |t: usize| mesh.triangles()[t].verts.into_iter().filter(move |&v| v != z);
    for &e in mesh.vertex_interior_edges(z) {
        let w = w_field(mesh, e, z)?;
        rep.w_fields += 1;
        for t in w.support() {
            rep.w3 = rep.w3.max(w.div_integral(mesh, t)?.abs() / mesh.triangles()[t].area);
            for s in others(t) {
                rep.w4 = rep.w4.max(w.div_at_vertex(mesh, t, s)?.abs());
            }
        }
        for &t in &mesh.edges()[e].tris {
            rep.w6 = rep.w6.max((w.div_at_vertex(mesh, t, z)? - 1.0).abs());
        }
        rep.w7_constant = rep.w7_constant.max(w.grad_norm(mesh)? / hz);
    }
    let patch = build_patch(mesh, z)?;
    let class = classify_vertex(&patch);
    if class.singular {
        return Ok(());
    }
    let fields = v_t_fields(mesh, &patch, &class)?;
    for (j, f) in fields.iter().enumerate() {
        rep.v_fields += 1;
        for (i, &t) in patch.tris.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            rep.v2 = rep.v2.max((f.div_at_vertex(mesh, t, z)? - want).abs());
        }
        for t in f.support() {
            if !patch.tris.contains(&t) {
                rep.v3_violations += 1;
            }
            rep.v4 = rep.v4.max(f.div_integral(mesh, t)?.abs() / mesh.triangles()[t].area);
            for s in others(t) {
                rep.v1 = rep.v1.max(f.div_at_vertex(mesh, t, s)?.abs());
            }
        }
        rep.v5_constant = rep.v5_constant.max(f.grad_norm(mesh)? / (hz * (1.0 / class.theta + 1.0)));
    }
    Ok(())
}

/// Fundamental-field properties on `cases` random configurations: star patches
/// alternate with interior vertices of randomly perturbed meshes.
pub fn field_suite(cases: usize, seed: u64) -> Result<FieldReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = FieldReport {
        cases,
        ..Default::default()
    };
    for i in 0..cases {
        if i % 2 == 0 {
            let mesh = random_star(&mut rng)?;
            check_vertex(&mesh, 0, &mut rep)?;
        } else {
            let mesh = generate_mesh(MeshFamily::PerturbedDiagonal, 3, Some(rng.random()), 0.25)?;
            let interior: Vec<usize> = mesh.vertices().iter().filter(|v| !v.on_boundary).map(|v| v.id).collect();
            let z = interior[rng.random_range(0..interior.len())];
            check_vertex(&mesh, z, &mut rep)?;
        }
    }
    Ok(rep)
}

/// Largest `|A_h^z(div v)| / ‖∇v‖` per mesh over `trials` random `v ∈ V_h^4`.
pub fn singular_lemma_suite(trials: usize, seed: u64) -> Result<Vec<(String, f64)>> {
    let mut cases: Vec<(String, Mesh)> = (1..=3)
        .map(|n| Ok((format!("crisscross:{n}"), generate_mesh(MeshFamily::Crisscross, n, None, 0.0)?)))
        .collect::<Result<_>>()?;
    cases.push(("diagonal:2".into(), generate_mesh(MeshFamily::Diagonal, 2, None, 0.0)?));
    cases.push(("split-triangle".into(), split_triangle_mesh()));
    cases
        .into_iter()
        .map(|(name, mesh)| {
            let class = classify(&mesh)?;
            let space = build_velocity_space(&mesh, 4)?;
            Ok((name, verify_div_inclusion(&mesh, &space, &class, trials, seed)?))
        })
        .collect()
}

/// Edge identities, dimension counts, field properties and the singular-vertex lemma.
pub fn run_selftest(seed: u64) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::new();
    let e = edge_identity_suite(50, seed)?;
    out.push(SuiteResult {
        name: "edge-identities",
        passed: e.psi1 < 1e-14 && e.psi2 < 1e-14 && e.gamma < 1e-14,
        detail: format!("edges={} psi1={:.2e} psi2={:.2e} gamma={:.2e}", e.edges, e.psi1, e.psi2, e.gamma),
    });
    let dims = dimension_suite(&[3, 4, 5, 6, 7, 8])?;
    out.push(SuiteResult {
        name: "dimension-counts",
        passed: dims.iter().all(DimensionRow::passed),
        detail: dims
            .iter()
            .map(|d| format!("k={}:B={},M={},Z={}", d.k, d.dim_b, d.rank_div, d.dim_z))
            .collect::<Vec<_>>()
            .join(" "),
    });
    let f = field_suite(100, seed)?;
    out.push(SuiteResult {
        name: "fundamental-fields",
        passed: f.max_violation() < 1e-12 && f.v3_violations == 0,
        detail: format!(
            "w={} v={} max_violation={:.2e} w7_const={:.3} v5_const={:.3}",
            f.w_fields,
            f.v_fields,
            f.max_violation(),
            f.w7_constant,
            f.v5_constant
        ),
    });
    let s = singular_lemma_suite(50, seed)?;
    let worst = s.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    out.push(SuiteResult {
        name: "singular-vertex-lemma",
        passed: worst < 1e-11,
        detail: format!("meshes={} max_ratio={worst:.2e}", s.len()),
    });
    Ok(out)
}
