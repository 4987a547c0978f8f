//! Acceptance criteria, one line per criterion. Exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svfem::mesh::{generate_mesh, MeshFamily, DEFAULT_PERTURB_MAGNITUDE};
use svfem::rightinverse::{RightInverse, Step1Space};
use svfem::spaces::{build_pressure_space, build_velocity_space};
use svfem::topology::classify;
use svfem::verify::{
    compute_infsup, degeneracy_study, dimension_suite, edge_identity_suite, field_suite, refinement_study,
    singular_lemma_suite, solve_stokes, summarize_refinement, DimensionRow, InfSupOptions, StokesForcing,
};
use svfem::Result;

struct Outcome {
    passed: bool,
    detail: String,
}

fn edge_identities() -> Result<Outcome> {
    let r = edge_identity_suite(50, 11)?;
    Ok(Outcome {
        passed: r.psi1 < 1e-14 && r.psi2 < 1e-14 && r.gamma < 1e-14,
        detail: format!("psi1 {:.1e}, psi2 {:.1e}, gamma {:.1e} over {} edges", r.psi1, r.psi2, r.gamma, r.edges),
    })
}

fn dimension_theory() -> Result<Outcome> {
    let rows = dimension_suite(&[3, 4, 5, 6, 7, 8])?;
    let detail = rows
        .iter()
        .map(|d| format!("k={} B={} divB={} M={} Z={}", d.k, d.dim_b, d.rank_div, d.dim_m, d.dim_z))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome {
        passed: rows.iter().all(DimensionRow::passed),
        detail,
    })
}

fn fundamental_fields() -> Result<Outcome> {
    let r = field_suite(100, 12)?;
    Ok(Outcome {
        passed: r.max_violation() < 1e-12 && r.v3_violations == 0,
        detail: format!(
            "{} w-fields, {} v_T-fields, worst {:.1e} (w3 {:.1e} w4 {:.1e} w6 {:.1e} v1 {:.1e} v2 {:.1e} v4 {:.1e}), support leaks {}, ‖∇w‖/h_z ≤ {:.3}",
            r.w_fields, r.v_fields, r.max_violation(), r.w3, r.w4, r.w6, r.v1, r.v2, r.v4, r.v3_violations, r.w7_constant
        ),
    })
}

fn singular_lemma() -> Result<Outcome> {
    let rows = singular_lemma_suite(50, 13)?;
    let worst = rows.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    Ok(Outcome {
        passed: worst < 1e-11,
        detail: rows.iter().map(|(n, v)| format!("{n} {v:.1e}")).collect::<Vec<_>>().join(", "),
    })
}

fn right_inverse_grid() -> Result<Outcome> {
    let mut worst = [0.0_f64; 4];
    let mut runs = 0;
    for k in [4, 5] {
        for family in [MeshFamily::Diagonal, MeshFamily::Crisscross, MeshFamily::PerturbedDiagonal] {
            for n in [1, 2, 4] {
                let mesh = generate_mesh(family, n, None, DEFAULT_PERTURB_MAGNITUDE)?;
                let class = classify(&mesh)?;
                let v = build_velocity_space(&mesh, k)?;
                let p = build_pressure_space(&mesh, k, &class)?;
                let ri = RightInverse::new(&mesh, &v, &p, &class, Step1Space::BernardiRaugel)?;
                let mut rng = ChaCha8Rng::seed_from_u64(100 + n as u64);
                let r = ri.apply(&p.random_member(&mut rng))?;
                let vals = [r.final_residual, r.step1_mean_residual, r.step2_vertex_residual, r.step2_mean_residual];
                for (w, x) in worst.iter_mut().zip(vals) {
                    *w = w.max(x);
                }
                runs += 1;
            }
        }
    }
    Ok(Outcome {
        passed: worst[0] <= 1e-10 && worst[1..].iter().all(|x| *x <= 1e-11),
        detail: format!(
            "{runs} runs, final {:.1e}, step-1 means {:.1e}, step-2 vertices {:.1e}, step-2 means {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    })
}

fn h_independence() -> Result<Outcome> {
    let rows = refinement_study(MeshFamily::PerturbedDiagonal, 4, &[1, 2, 4, 8], &InfSupOptions::default())?;
    let s = summarize_refinement(&rows);
    let spread = s.ratio_spread.unwrap_or(f64::INFINITY);
    let betas = rows.iter().map(|r| format!("{:.4}", r.beta_h)).collect::<Vec<_>>().join("/");
    let ratios = rows
        .iter()
        .map(|r| format!("{:.3}", r.stability_ratio.unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join("/");
    Ok(Outcome {
        passed: s.beta_floor >= 0.25 && spread < 3.0,
        detail: format!("β_h {betas} (floor {:.3}), ratio {ratios} (spread {spread:.3})", s.beta_floor),
    })
}

fn theta_study() -> Result<Outcome> {
    let st = degeneracy_study(4, &[0.5, 0.1, 0.02], &InfSupOptions::default())?;
    let c = &st.collapsed;
    let collapsed_ok = st.collapsed_singular
        && c.final_residual <= 1e-10
        && c.step1_mean_residual <= 1e-11
        && c.step2_vertex_residual <= 1e-11
        && c.step2_mean_residual <= 1e-11;
    let rows = st
        .rows
        .iter()
        .map(|r| format!("Θ={:.3} ratio {:.3} ≤ {:.3} (β_h {:.4})", r.theta_min, r.ratio, r.bound, r.beta_h))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome {
        passed: st.within_bound() && collapsed_ok,
        detail: format!(
            "{rows}; collapsed: singular={} rows={} final {:.1e}",
            st.collapsed_singular, st.collapsed_constraint_rows, c.final_residual
        ),
    })
}

fn stokes() -> Result<Outcome> {
    let mesh = generate_mesh(MeshFamily::Diagonal, 4, None, 0.0)?;
    let s = solve_stokes(&mesh, 4, StokesForcing::Manufactured, 8)?;
    Ok(Outcome {
        passed: s.max_div <= 1e-10 * s.grad_norm,
        detail: format!(
            "max |div u_h| {:.1e}, ‖∇u_h‖ {:.4}, H¹ error {:.2e}",
            s.max_div,
            s.grad_norm,
            s.errors.map_or(f64::NAN, |e| e.velocity_h1)
        ),
    })
}

fn cross_validation() -> Result<Outcome> {
    let cases = [
        (MeshFamily::Diagonal, 1, 4),
        (MeshFamily::Diagonal, 2, 4),
        (MeshFamily::Crisscross, 2, 4),
        (MeshFamily::PerturbedDiagonal, 2, 4),
        (MeshFamily::Crisscross, 1, 5),
    ];
    let opts = InfSupOptions {
        cross_check: true,
        ..Default::default()
    };
    let mut worst_rel: f64 = 0.0;
    let mut worst_gap = f64::NEG_INFINITY;
    for (family, n, k) in cases {
        let mesh = generate_mesh(family, n, None, DEFAULT_PERTURB_MAGNITUDE)?;
        let r = compute_infsup(&mesh, k, &format!("{},{n}", family.name()), &opts)?;
        let it = r.beta_h_iterative.unwrap_or(f64::NAN);
        worst_rel = worst_rel.max((it - r.beta_h).abs() / r.beta_h);
        worst_gap = worst_gap.max(r.constructive_lb.unwrap_or(f64::NAN) - r.beta_h);
    }
    Ok(Outcome {
        passed: worst_rel <= 1e-8 && worst_gap <= 1e-8,
        detail: format!("dense vs iterative {worst_rel:.1e}, max(lb − β_h) {worst_gap:.2e}"),
    })
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 9] = [
        ("1 edge-integral identities", edge_identities),
        ("2 dimension theory", dimension_theory),
        ("3 fundamental field properties", fundamental_fields),
        ("4 singular-vertex lemma", singular_lemma),
        ("5 constructive right inverse", right_inverse_grid),
        ("6 h-independence", h_independence),
        ("7 Θ_min study", theta_study),
        ("8 divergence-free Stokes", stokes),
        ("9 cross-validation", cross_validation),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        println!(
            "criterion {name}: {} [{:.1}s] {detail}",
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
