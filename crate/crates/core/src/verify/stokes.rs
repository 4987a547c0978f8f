use nalgebra::{Cholesky, DVector};

use crate::error::{Result, SvError};
use crate::linalg;
use crate::mesh::Mesh;
use crate::polyspace::{curl, divergence, gradient, integrate_triangle, lattice_nodes, BaryPoly, TriGeom, VectorBaryPoly};
use crate::spaces::{assemble, build_pressure_space, build_velocity_space};
use crate::topology::classify;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StokesForcing {
    Zero,
    /// `u = curl((x(1−x)y(1−y))²)`, `p = xy − 1/4` on the unit square,
    /// `f = −Δu + ∇p`.
    Manufactured,
}

#[derive(Debug, Clone, Copy)]
pub struct StokesErrors {
    pub velocity_l2: f64,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
}

#[derive(Debug, Clone)]
pub struct StokesSolution {
    /// Full velocity coefficients.
    pub velocity: DVector<f64>,
    /// DG pressure coefficients.
    pub pressure: DVector<f64>,
    /// Largest `|div u_h|` over the sample lattices.
    pub max_div: f64,
    pub grad_norm: f64,
    pub l2_norm: f64,
    /// `max |NᵀB u_h|`.
    pub moment_residual: f64,
    pub errors: Option<StokesErrors>,
}

struct Exact {
    u: VectorBaryPoly,
    p: BaryPoly,
    f: VectorBaryPoly,
}

fn exact_on(geom: &TriGeom) -> Exact {
    let coord = |c: usize| (0..3).fold(BaryPoly::zero(1), |acc, i| &acc + &(&BaryPoly::lambda(i) * geom.verts[i][c]));
    let (x, y) = (coord(0), coord(1));
    let one = BaryPoly::constant(1.0);
    let s = &(&(&x * &(&one - &x)) * &y) * &(&one - &y);
    let u = curl(&(&s * &s), geom);
    let p = &(&x * &y) - &BaryPoly::constant(0.25);
    let lap = |c: &BaryPoly| divergence(&gradient(c, geom), geom);
    let gp = gradient(&p, geom);
    let f = VectorBaryPoly::new(&gp.x - &lap(&u.x), &gp.y - &lap(&u.y));
    Exact { u, p, f }
}

/// Discrete Stokes solve in the Scott–Vogelius pair of order `k`.
///
/// `sample_order` sets the barycentric lattice used for the pointwise divergence check.
pub fn solve_stokes(mesh: &Mesh, k: usize, forcing: StokesForcing, sample_order: usize) -> Result<StokesSolution> {
    if k < 4 {
        return Err(SvError::InvalidArgument(format!("the Stokes solve needs k >= 4, got {k}")));
    }
    let classification = classify(mesh)?;
    let velocity = build_velocity_space(mesh, k)?;
    let pressure = build_pressure_space(mesh, k, &classification)?;
    let ops = assemble(mesh, &velocity, &pressure)?;
    let tables = velocity.tables();
    let mut load = DVector::zeros(velocity.n_free());
    if forcing == StokesForcing::Manufactured {
        for t in 0..mesh.n_triangles() {
            let geom = mesh.tri_geom(t);
            let ex = exact_on(&geom);
            for (a, &node) in velocity.tri_nodes(t).iter().enumerate() {
                for (c, fc) in [&ex.f.x, &ex.f.y].into_iter().enumerate() {
                    if let Some(i) = velocity.free_index(2 * node + c) {
                        load[i] += integrate_triangle(&(fc * &tables.phi[a]), &geom)?;
                    }
                }
            }
        }
    }
    let n = pressure.null_basis();
    let chol = linalg::cholesky(ops.a.clone(), "velocity stiffness")?;
    let bt_n = ops.b.transpose() * n;
    let ainv_btn = chol.solve(&bt_n);
    let s = bt_n.transpose() * &ainv_btn;
    let s = (&s + s.transpose()) * 0.5;
    let schur = Cholesky::new(s).ok_or_else(|| SvError::RankDeficient("Stokes saddle system is singular".into()))?;
    let ainv_f = chol.solve(&load);
    let y = schur.solve(&(-(bt_n.transpose() * &ainv_f)));
    let u_free = &ainv_f + &ainv_btn * &y;
    let u = velocity.expand(&u_free);
    let p = n * &y;

    let nodes = lattice_nodes(sample_order.max(1));
    let mut max_div: f64 = 0.0;
    for t in 0..mesh.n_triangles() {
        let geom = mesh.tri_geom(t);
        let (ux, uy) = velocity.local(&u, t);
        for b in &nodes {
            max_div = max_div.max(tables.div_at(&geom, &ux, &uy, *b).abs());
        }
    }
    let moment_residual = (bt_n.transpose() * &u_free).amax();
    let errors = if forcing == StokesForcing::Manufactured {
        let (mut el2, mut eh1, mut ep) = (0.0, 0.0, 0.0);
        for t in 0..mesh.n_triangles() {
            let geom = mesh.tri_geom(t);
            let ex = exact_on(&geom);
            let (ux, uy) = velocity.local(&u, t);
            let comb = |coef: &DVector<f64>, basis: &[BaryPoly]| {
                basis
                    .iter()
                    .zip(coef.iter())
                    .fold(BaryPoly::zero(0), |acc, (b, c)| &acc + &(b * *c))
            };
            for (uh, ue) in [(comb(&ux, &tables.phi), &ex.u.x), (comb(&uy, &tables.phi), &ex.u.y)] {
                let e = &uh - ue;
                el2 += integrate_triangle(&(&e * &e), &geom)?;
                let g = gradient(&e, &geom);
                eh1 += integrate_triangle(&(&(&g.x * &g.x) + &(&g.y * &g.y)), &geom)?;
            }
            let nq = tables.n_q();
            let ph = comb(&p.rows(t * nq, nq).into_owned(), &tables.q);
            let e = &ph - &ex.p;
            ep += integrate_triangle(&(&e * &e), &geom)?;
        }
        Some(StokesErrors {
            velocity_l2: el2.max(0.0).sqrt(),
            velocity_h1: eh1.max(0.0).sqrt(),
            pressure_l2: ep.max(0.0).sqrt(),
        })
    } else {
        None
    };
    Ok(StokesSolution {
        grad_norm: velocity.h1_seminorm(mesh, &u),
        l2_norm: velocity.l2_norm(mesh, &u),
        velocity: u,
        pressure: p,
        max_div,
        moment_residual,
        errors,
    })
}
