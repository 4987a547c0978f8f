//! Numerical verification: discrete inf-sup constants, refinement and
//! degeneracy studies, a Stokes solve and the self-test suites.

mod selftest;
mod stokes;

pub use selftest::{
    dimension_suite, edge_identity_suite, field_suite, run_selftest, singular_lemma_suite, DimensionRow,
    EdgeIdentityReport, FieldReport, SuiteResult,
};
pub use stokes::{solve_stokes, StokesErrors, StokesForcing, StokesSolution};

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SvError};
use crate::linalg;
use crate::mesh::{generate_mesh, shifted_center_crisscross, Mesh, MeshFamily, DEFAULT_PERTURB_MAGNITUDE};
use crate::rightinverse::{RightInverse, RightInverseResult, Step1Space};
use crate::spaces::{assemble, build_pressure_space, build_velocity_space, AssembledOps, PressureSpace, VelocitySpace};
use crate::topology::{classify, ClassificationTable};

/// Eigenvalues below this are reported as an inf-sup failure.
pub const FAILURE_THRESHOLD: f64 = 1e-14;
/// Eigenvalues below this are treated as numerical indefiniteness.
pub const INDEFINITE_THRESHOLD: f64 = -1e-12;

#[derive(Debug, Clone)]
pub struct InfSupOptions {
    /// Random pressures fed to the right inverse besides the eigenvector pressure.
    pub samples: usize,
    pub seed: u64,
    /// Run the right inverse (needs `k >= 4`).
    pub constructive: bool,
    /// Recompute `λ_min` by inverse iteration.
    pub cross_check: bool,
}

impl Default for InfSupOptions {
    fn default() -> Self {
        Self {
            samples: 2,
            seed: 1,
            constructive: true,
            cross_check: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfSupOutcome {
    Stable,
    Failure,
}

#[derive(Debug, Clone)]
pub struct InfSupReport {
    pub descriptor: String,
    pub k: usize,
    pub h_max: f64,
    pub theta_min: Option<f64>,
    pub n_u: usize,
    pub n_p: usize,
    /// Smallest pencil eigenvalue with the full `H¹` norm.
    pub lambda_min: f64,
    pub lambda_min_semi: f64,
    pub beta_h: f64,
    pub beta_h_semi: f64,
    pub outcome: InfSupOutcome,
    /// `sqrt(λ_min)` from inverse iteration, when requested.
    pub beta_h_iterative: Option<f64>,
    /// Smallest `∫ p div v / (‖v‖_{H¹} ‖p‖)` over the sampled right-inverse runs.
    pub constructive_lb: Option<f64>,
    /// Largest `‖∇v‖ / ‖p‖` over the same runs.
    pub stability_ratio: Option<f64>,
    /// Minimizing pressure (DG coordinates, unit `L²` norm).
    pub eigen_pressure: DVector<f64>,
}

impl InfSupReport {
    pub fn csv_header() -> &'static str {
        "family,n,h_max,k,theta_min,n_u,n_p,beta_h,beta_h_semi,constructive_lb"
    }

    /// One CSV row; `descriptor` is expected to read `family,n`.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.12e}"));
        format!(
            "{},{:.12e},{},{},{},{},{:.12e},{:.12e},{}",
            self.descriptor,
            self.h_max,
            self.k,
            opt(self.theta_min),
            self.n_u,
            self.n_p,
            self.beta_h,
            self.beta_h_semi,
            opt(self.constructive_lb)
        )
    }
}

/// `(NᵀB A⁻¹ BᵀN, NᵀM_pN)` for the given velocity operator.
pub fn schur_pencil(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    null_basis: &DMatrix<f64>,
    m_p: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = null_basis.transpose() * m_p * null_basis;
    let m = (&m + m.transpose()) * 0.5;
    let mut y = b.transpose() * null_basis;
    if a.nrows() > 0 {
        let chol = linalg::cholesky(a.clone(), "velocity operator")?;
        if !chol.l().solve_lower_triangular_mut(&mut y) {
            return Err(SvError::Numerical("triangular solve failed".into()));
        }
    }
    let s = y.transpose() * &y;
    Ok(((&s + s.transpose()) * 0.5, m))
}

struct Pencil {
    s: DMatrix<f64>,
    m: DMatrix<f64>,
    lambda: f64,
    vector: DVector<f64>,
}

fn smallest(a: &DMatrix<f64>, ops: &AssembledOps, pressure: &PressureSpace) -> Result<Pencil> {
    let (s, m) = schur_pencil(a, &ops.b, pressure.null_basis(), &ops.m_p)?;
    let (vals, vecs) = linalg::generalized_symmetric_eigen(&s, &m)?;
    let lambda = vals[0];
    if lambda < INDEFINITE_THRESHOLD {
        return Err(SvError::Numerical(format!("pencil is indefinite: λ_min = {lambda:e}")));
    }
    Ok(Pencil {
        s,
        m,
        lambda,
        vector: vecs.column(0).into_owned(),
    })
}

/// Inf-sup constants of an explicit velocity/pressure pairing.
pub fn infsup_with_spaces(
    mesh: &Mesh,
    velocity: &VelocitySpace,
    pressure: &PressureSpace,
    classification: &ClassificationTable,
    descriptor: &str,
    opts: &InfSupOptions,
) -> Result<InfSupReport> {
    if pressure.dim() == 0 {
        return Err(SvError::Degenerate("pressure space is empty".into()));
    }
    let ops = assemble(mesh, velocity, pressure)?;
    let full = &ops.a + &ops.m_u;
    let pf = smallest(&full, &ops, pressure)?;
    let ps = smallest(&ops.a, &ops, pressure)?;
    let outcome = if pf.lambda < FAILURE_THRESHOLD {
        InfSupOutcome::Failure
    } else {
        InfSupOutcome::Stable
    };
    let beta_h_iterative = if opts.cross_check && outcome == InfSupOutcome::Stable {
        let (l, _) = linalg::smallest_eigen_inverse_iteration(&pf.s, &pf.m, 6, 1e-14, 5000)?;
        Some(l.max(0.0).sqrt())
    } else {
        None
    };
    let mut eigen_pressure = pressure.null_basis() * &pf.vector;
    let en = pressure.l2_norm(&eigen_pressure);
    if en > 0.0 {
        eigen_pressure /= en;
    }
    let k = velocity.order();
    let (constructive_lb, stability_ratio) =
        if opts.constructive && k >= 4 && outcome == InfSupOutcome::Stable && pressure.velocity_order() == k {
            let ri = RightInverse::new(mesh, velocity, pressure, classification, Step1Space::BernardiRaugel)?;
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut inputs = vec![eigen_pressure.clone()];
            inputs.extend((0..opts.samples).map(|_| pressure.random_member(&mut rng)));
            let mut lb = f64::INFINITY;
            let mut ratio: f64 = 0.0;
            for p in &inputs {
                let r = ri.apply(p)?;
                let (l, q) = certify(mesh, velocity, pressure, &ops, p, &r);
                lb = lb.min(l);
                ratio = ratio.max(q);
            }
            (Some(lb), Some(ratio))
        } else {
            (None, None)
        };
    Ok(InfSupReport {
        descriptor: descriptor.to_string(),
        k,
        h_max: mesh.h_max(),
        theta_min: classification.theta_min,
        n_u: velocity.n_free(),
        n_p: pressure.dim(),
        lambda_min: pf.lambda,
        lambda_min_semi: ps.lambda,
        beta_h: pf.lambda.max(0.0).sqrt(),
        beta_h_semi: ps.lambda.max(0.0).sqrt(),
        outcome,
        beta_h_iterative,
        constructive_lb,
        stability_ratio,
        eigen_pressure,
    })
}

/// `(∫ p div v / (‖v‖_{H¹}‖p‖), ‖∇v‖/‖p‖)` for one right-inverse run.
fn certify(
    mesh: &Mesh,
    velocity: &VelocitySpace,
    pressure: &PressureSpace,
    ops: &AssembledOps,
    p: &DVector<f64>,
    r: &RightInverseResult,
) -> (f64, f64) {
    let div = velocity.div_to_pressure(mesh, &r.v);
    let pairing = p.dot(&(&ops.m_p * div));
    let g = velocity.h1_seminorm(mesh, &r.v);
    let l2 = velocity.l2_norm(mesh, &r.v);
    let pn = pressure.l2_norm(p);
    (pairing / ((g * g + l2 * l2).sqrt() * pn), g / pn)
}

/// Inf-sup report for the Scott–Vogelius pair of order `k` on `mesh`.
pub fn compute_infsup(mesh: &Mesh, k: usize, descriptor: &str, opts: &InfSupOptions) -> Result<InfSupReport> {
    let classification = classify(mesh)?;
    let velocity = build_velocity_space(mesh, k)?;
    let pressure = build_pressure_space(mesh, k, &classification)?;
    infsup_with_spaces(mesh, &velocity, &pressure, &classification, descriptor, opts)
}

/// One report per `n` in `ns` on the given family.
pub fn refinement_study(family: MeshFamily, k: usize, ns: &[usize], opts: &InfSupOptions) -> Result<Vec<InfSupReport>> {
    if ns.len() < 2 {
        return Err(SvError::InvalidArgument("a refinement study needs at least two levels".into()));
    }
    ns.iter()
        .map(|&n| {
            let mesh = generate_mesh(family, n, None, DEFAULT_PERTURB_MAGNITUDE)?;
            compute_infsup(&mesh, k, &format!("{},{n}", family.name()), opts)
        })
        .collect()
}

/// Summary of a refinement study: `min β_h / β_h(coarsest)` and
/// `max ratio / min ratio` of the constructive stability ratio.
#[derive(Debug, Clone, Copy)]
pub struct RefinementSummary {
    pub beta_floor: f64,
    pub ratio_spread: Option<f64>,
}

pub fn summarize_refinement(rows: &[InfSupReport]) -> RefinementSummary {
    let coarse = rows.first().map_or(f64::NAN, |r| r.beta_h);
    let beta_floor = rows.iter().map(|r| r.beta_h / coarse).fold(f64::INFINITY, f64::min);
    let ratios: Option<Vec<f64>> = rows.iter().map(|r| r.stability_ratio).collect();
    let ratio_spread = ratios.map(|v| {
        let hi = v.iter().copied().fold(0.0_f64, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    });
    RefinementSummary { beta_floor, ratio_spread }
}

#[derive(Debug, Clone)]
pub struct DegeneracyRow {
    pub target_theta: f64,
    pub shift: f64,
    pub theta_min: f64,
    pub beta_h: f64,
    /// `‖∇v‖/‖p‖`, worst over the sampled pressures.
    pub ratio: f64,
    /// `1/Θ_min + 1`.
    pub predictor: f64,
    /// `5·c·(1/Θ_min + 1)`.
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct DegeneracyStudy {
    pub rows: Vec<DegeneracyRow>,
    /// `ratio / predictor` at the first row.
    pub c: f64,
    /// Outcome at zero shift.
    pub collapsed_singular: bool,
    pub collapsed_constraint_rows: usize,
    pub collapsed: RightInverseResult,
}

impl DegeneracyStudy {
    pub fn within_bound(&self) -> bool {
        self.rows.iter().all(|r| r.ratio <= r.bound)
    }
}

/// Crisscross `n = 2` with the first cell center shifted by `(δ, 0)`.
pub fn collapse_mesh(shift: f64) -> Result<Mesh> {
    shifted_center_crisscross(2, 0, [shift, 0.0])
}

/// Shift giving `Θ_min = target` on [`collapse_mesh`], by bisection.
pub fn shift_for_theta(target: f64) -> Result<f64> {
    let theta = |d: f64| -> Result<f64> {
        Ok(classify(&collapse_mesh(d)?)?.theta_min.unwrap_or(0.0))
    };
    let (mut lo, mut hi) = (0.0, 0.2);
    if theta(hi)? < target {
        return Err(SvError::InvalidArgument(format!("Θ_min = {target} is out of reach of the collapse family")));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if theta(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(hi)
}

/// Collapse one crisscross center towards the singular configuration.
pub fn degeneracy_study(k: usize, thetas: &[f64], opts: &InfSupOptions) -> Result<DegeneracyStudy> {
    if thetas.is_empty() {
        return Err(SvError::InvalidArgument("no Θ targets given".into()));
    }
    let mut rows = Vec::with_capacity(thetas.len());
    let mut c = f64::NAN;
    for (i, &target) in thetas.iter().enumerate() {
        let shift = shift_for_theta(target)?;
        let mesh = collapse_mesh(shift)?;
        let rep = compute_infsup(&mesh, k, &format!("collapse,{shift:.6e}"), opts)?;
        let theta_min = rep
            .theta_min
            .ok_or_else(|| SvError::Numerical("collapse mesh lost its non-singular vertices".into()))?;
        let ratio = rep
            .stability_ratio
            .ok_or_else(|| SvError::InvalidArgument("the degeneracy study needs the constructive runs".into()))?;
        let predictor = 1.0 / theta_min + 1.0;
        if i == 0 {
            c = ratio / predictor;
        }
        rows.push(DegeneracyRow {
            target_theta: target,
            shift,
            theta_min,
            beta_h: rep.beta_h,
            ratio,
            predictor,
            bound: 5.0 * c * predictor,
        });
    }
    let mesh = collapse_mesh(0.0)?;
    let classification = classify(&mesh)?;
    let center = mesh
        .vertices()
        .iter()
        .position(|v| (v.x - 0.25).abs() < 1e-14 && (v.y - 0.25).abs() < 1e-14)
        .ok_or_else(|| SvError::Numerical("collapse center not found".into()))?;
    let velocity = build_velocity_space(&mesh, k)?;
    let pressure = build_pressure_space(&mesh, k, &classification)?;
    let ri = RightInverse::new(&mesh, &velocity, &pressure, &classification, Step1Space::BernardiRaugel)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let collapsed = ri.apply(&pressure.random_member(&mut rng))?;
    Ok(DegeneracyStudy {
        rows,
        c,
        collapsed_singular: classification.is_singular(center),
        collapsed_constraint_rows: pressure.n_constraint_rows(),
        collapsed,
    })
}
