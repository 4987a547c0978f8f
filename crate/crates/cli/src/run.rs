use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svfem::config::{parse_pressure, FieldSelector, MeshSource, PressureSource, RunConfig};
use svfem::fields::{field_csv, vertex_correction, w_field};
use svfem::linalg::write_matrix_market;
use svfem::mesh::{generate_mesh, load_mesh, write_mesh, Mesh, DEFAULT_PERTURB_MAGNITUDE, DEFAULT_PERTURB_SEED};
use svfem::rightinverse::{RightInverse, Step1Space};
use svfem::spaces::{assemble, build_pressure_space, build_velocity_space, PressureSpace, VelocitySpace};
use svfem::topology::{classification_csv, classify, ClassificationTable};
use svfem::verify::{
    compute_infsup, degeneracy_study, run_selftest, solve_stokes, InfSupOptions, InfSupOutcome, InfSupReport,
    StokesForcing,
};
use svfem::SvError;

use crate::args::Cli;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_K: usize = 4;
pub const DEFAULT_TOL_FINAL: f64 = 1e-10;
const STOKES_DIV_TOL: f64 = 1e-10;

pub enum Failure {
    Usage(String),
    Lib(SvError),
    Check(String),
}

impl From<SvError> for Failure {
    fn from(e: SvError) -> Self {
        Failure::Lib(e)
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

fn require<T: Clone>(v: &Option<T>, flag: &str) -> Res<T> {
    v.clone().ok_or_else(|| Failure::Usage(format!("missing required option `--{flag}`")))
}

fn emit(cfg: &RunConfig, body: &str) -> Res<()> {
    let text = format!("{}{body}", cfg.comment_header("svfem", version()));
    match &cfg.out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Lib(e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn meshes(cfg: &RunConfig) -> Res<Vec<(String, usize, Mesh)>> {
    let src = require(&cfg.mesh, "mesh")?;
    match src {
        MeshSource::File(path) => {
            let text = fs::read_to_string(&path).map_err(|e| Failure::Lib(e.into()))?;
            let stem = path.file_stem().map_or_else(|| "mesh".into(), |s| s.to_string_lossy().into_owned());
            Ok(vec![(stem, 0, load_mesh(&text)?)])
        }
        MeshSource::Family { family, ns } => {
            let ns = match (cfg.levels, ns.as_slice()) {
                (Some(l), [n]) => (0..l).map(|j| n << j).collect(),
                (Some(_), _) => return Err(Failure::Usage("`--levels` needs a single starting n".into())),
                (None, _) => ns,
            };
            let seed = cfg.perturb_seed.unwrap_or(DEFAULT_PERTURB_SEED);
            let mag = cfg.perturb_magnitude.unwrap_or(DEFAULT_PERTURB_MAGNITUDE);
            ns.into_iter()
                .map(|n| Ok((family.name().to_string(), n, generate_mesh(family, n, Some(seed), mag)?)))
                .collect()
        }
    }
}

fn single_mesh(cfg: &RunConfig) -> Res<(String, usize, Mesh)> {
    let mut all = meshes(cfg)?;
    if all.len() != 1 {
        return Err(Failure::Usage("this command takes exactly one mesh".into()));
    }
    Ok(all.remove(0))
}

fn seed(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or(DEFAULT_SEED)
}

fn dump_ops(dir: &Path, mesh: &Mesh, v: &VelocitySpace, p: &PressureSpace, tag: &str) -> Res<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Lib(e.into()))?;
    let ops = assemble(mesh, v, p)?;
    for (name, m) in [
        ("a", &ops.a),
        ("m_u", &ops.m_u),
        ("m_p", &ops.m_p),
        ("b", &ops.b),
        ("n", p.null_basis()),
    ] {
        write_matrix_market(&dir.join(format!("{tag}{name}.mtx")), m)?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Res<()> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Lib(e.into()))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    let flags = cli.flags()?;
    if let (Some(a), Some(b)) = (&cfg.command, &flags.command) {
        if a != b {
            return Err(Failure::Usage(format!("config is for `{a}`, but `{b}` was requested")));
        }
    }
    cfg.merge(flags);
    let command = cfg.command.clone().unwrap_or_default();
    if matches!(command.as_str(), "rightinv" | "infsup" | "selftest") {
        cfg.seed.get_or_insert(DEFAULT_SEED);
    }
    if matches!(command.as_str(), "rightinv" | "infsup" | "stokes") {
        cfg.k.get_or_insert(DEFAULT_K);
    }
    match cfg.command.as_deref() {
        Some("gen") => gen(&cfg),
        Some("classify") => classify_cmd(&cfg),
        Some("rightinv") => rightinv(&cfg),
        Some("infsup") => infsup(&cfg),
        Some("stokes") => stokes(&cfg),
        Some("selftest") => selftest(&cfg),
        other => Err(Failure::Usage(format!("unknown command {other:?}"))),
    }
}

fn gen(cfg: &RunConfig) -> Res<()> {
    let (_, _, mesh) = single_mesh(cfg)?;
    emit(cfg, &write_mesh(&mesh))
}

fn classify_cmd(cfg: &RunConfig) -> Res<()> {
    let (_, _, mesh) = single_mesh(cfg)?;
    let table = classify(&mesh)?;
    emit(cfg, &classification_csv(&mesh, &table))
}

fn load_pressure(cfg: &RunConfig, p: &PressureSpace, tag_seed: u64) -> Res<DVector<f64>> {
    match cfg.pressure.clone().unwrap_or(PressureSource::Random(None)) {
        PressureSource::Random(s) => Ok(p.random_member(&mut ChaCha8Rng::seed_from_u64(s.unwrap_or(tag_seed)))),
        PressureSource::File(path) => {
            let text = fs::read_to_string(&path).map_err(|e| Failure::Lib(e.into()))?;
            let values = parse_pressure(&text)?;
            if values.len() != p.n_dg() {
                return Err(SvError::InvalidArgument(format!(
                    "pressure file has {} values, the mesh needs {}",
                    values.len(),
                    p.n_dg()
                ))
                .into());
            }
            Ok(DVector::from_vec(values))
        }
    }
}

fn field_path(cfg: &RunConfig, sel: FieldSelector) -> PathBuf {
    let name = match sel {
        FieldSelector::Vertex(i) => format!("field-vertex-{i}.csv"),
        FieldSelector::Edge(i) => format!("field-edge-{i}.csv"),
    };
    match cfg.out.as_ref().and_then(|p| p.parent()) {
        Some(dir) => dir.join(name),
        None => PathBuf::from(name),
    }
}

fn dump_field(
    cfg: &RunConfig,
    sel: FieldSelector,
    mesh: &Mesh,
    class: &ClassificationTable,
    p: &PressureSpace,
    q: &DVector<f64>,
    k: usize,
) -> Res<()> {
    let field = match sel {
        FieldSelector::Edge(e) => {
            let edge = mesh
                .edges()
                .get(e)
                .ok_or_else(|| SvError::InvalidArgument(format!("edge {e} does not exist")))?;
            w_field(mesh, e, edge.verts[0])?
        }
        FieldSelector::Vertex(z) => {
            let patch = class
                .patches
                .get(z)
                .ok_or_else(|| SvError::InvalidArgument(format!("vertex {z} does not exist")))?;
            let a: Vec<f64> = patch
                .tris
                .iter()
                .map(|&t| p.vertex_value(q, t, mesh.local_index(t, z).expect("fan triangle")))
                .collect();
            vertex_correction(mesh, patch, &class.classes[z], &a, q.amax())?.field
        }
    };
    let text = format!("{}{}", cfg.comment_header("svfem", version()), field_csv(mesh, &field, k));
    fs::write(field_path(cfg, sel), text).map_err(|e| Failure::Lib(e.into()))
}

fn rightinv(cfg: &RunConfig) -> Res<()> {
    let k = cfg.k.unwrap_or(DEFAULT_K);
    let tol = cfg.tol_final.unwrap_or(DEFAULT_TOL_FINAL);
    let step1 = cfg.step1.unwrap_or(Step1Space::BernardiRaugel);
    let all = meshes(cfg)?;
    if all.len() > 1 && matches!(cfg.pressure, Some(PressureSource::File(_))) {
        return Err(Failure::Usage("a pressure file needs a single mesh".into()));
    }
    let mut body = String::from(
        "mesh,n,n_triangles,k,theta_min,predictor,p_norm,step1_mean_residual,step2_vertex_residual,step2_mean_residual,step3_residual,final_residual,grad_v1,grad_v2,grad_v3,grad_v,stability_ratio,stability_ratio_full\n",
    );
    let mut worst: f64 = 0.0;
    for (i, (name, n, mesh)) in all.iter().enumerate() {
        let class = classify(mesh)?;
        let v = build_velocity_space(mesh, k)?;
        let p = build_pressure_space(mesh, k, &class)?;
        if let Some(dir) = &cfg.dump_ops {
            dump_ops(dir, mesh, &v, &p, &format!("{name}-{n}-"))?;
        }
        let q = load_pressure(cfg, &p, seed(cfg).wrapping_add(i as u64))?;
        let ri = RightInverse::new(mesh, &v, &p, &class, step1)?;
        let r = ri.apply(&q)?;
        if let (Some(sel), 0) = (cfg.dump_field, i) {
            dump_field(cfg, sel, mesh, &class, &p, &q, k)?;
        }
        worst = worst.max(r.final_residual);
        let g = r.grad_norms;
        let _ = writeln!(
            body,
            "{name},{n},{},{k},{},{:.12e},{:.12e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            mesh.n_triangles(),
            r.theta_min.map_or_else(String::new, |t| format!("{t:.12e}")),
            r.predictor,
            r.p_norm,
            r.step1_mean_residual,
            r.step2_vertex_residual,
            r.step2_mean_residual,
            r.step3_residual,
            r.final_residual,
            g[0],
            g[1],
            g[2],
            g[3],
            r.stability_ratio,
            r.stability_ratio_full
        );
    }
    emit(cfg, &body)?;
    if worst > tol {
        return Err(Failure::Check(format!("final residual {worst:e} exceeds {tol:e}")));
    }
    Ok(())
}

fn infsup(cfg: &RunConfig) -> Res<()> {
    let k = cfg.k.unwrap_or(DEFAULT_K);
    let opts = InfSupOptions {
        samples: cfg.samples.unwrap_or(2),
        seed: seed(cfg),
        constructive: k >= 4,
        cross_check: false,
    };
    if let Some(thetas) = &cfg.thetas {
        let st = degeneracy_study(k, thetas, &opts)?;
        let mut body = String::from("target_theta,shift,theta_min,beta_h,ratio,predictor,bound\n");
        for r in &st.rows {
            let _ = writeln!(
                body,
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.target_theta, r.shift, r.theta_min, r.beta_h, r.ratio, r.predictor, r.bound
            );
        }
        let _ = writeln!(
            body,
            "# collapsed: singular={} constraint_rows={} final_residual={:.6e}",
            st.collapsed_singular, st.collapsed_constraint_rows, st.collapsed.final_residual
        );
        emit(cfg, &body)?;
        if !st.within_bound() {
            eprintln!("note: constructive ratio exceeds 5c(1/Θ+1) at some Θ");
        }
        return Ok(());
    }
    let mut body = format!("{}\n", InfSupReport::csv_header());
    for (name, n, mesh) in meshes(cfg)? {
        if let Some(dir) = &cfg.dump_ops {
            let class = classify(&mesh)?;
            let v = build_velocity_space(&mesh, k)?;
            let p = build_pressure_space(&mesh, k, &class)?;
            dump_ops(dir, &mesh, &v, &p, &format!("{name}-{n}-"))?;
        }
        let r = compute_infsup(&mesh, k, &format!("{name},{n}"), &opts)?;
        if r.outcome == InfSupOutcome::Failure {
            eprintln!("inf-sup failure on {name},{n}: λ_min = {:e}", r.lambda_min);
        }
        let _ = writeln!(body, "{}", r.csv_row());
    }
    emit(cfg, &body)
}

fn stokes(cfg: &RunConfig) -> Res<()> {
    let k = cfg.k.unwrap_or(DEFAULT_K);
    let mut body = String::from(
        "mesh,n,k,h_max,max_div,grad_norm,div_ratio,moment_residual,velocity_l2_error,velocity_h1_error,pressure_l2_error\n",
    );
    let mut worst: f64 = 0.0;
    for (name, n, mesh) in meshes(cfg)? {
        if let Some(dir) = &cfg.dump_ops {
            let class = classify(&mesh)?;
            let v = build_velocity_space(&mesh, k)?;
            let p = build_pressure_space(&mesh, k, &class)?;
            dump_ops(dir, &mesh, &v, &p, &format!("{name}-{n}-"))?;
        }
        let s = solve_stokes(&mesh, k, StokesForcing::Manufactured, 8)?;
        let ratio = s.max_div / s.grad_norm;
        worst = worst.max(ratio);
        let e = s.errors.expect("manufactured run reports errors");
        let _ = writeln!(
            body,
            "{name},{n},{k},{:.12e},{:.6e},{:.12e},{:.6e},{:.6e},{:.12e},{:.12e},{:.12e}",
            mesh.h_max(),
            s.max_div,
            s.grad_norm,
            ratio,
            s.moment_residual,
            e.velocity_l2,
            e.velocity_h1,
            e.pressure_l2
        );
    }
    emit(cfg, &body)?;
    if worst > STOKES_DIV_TOL {
        return Err(Failure::Check(format!("sampled |div u_h| / ‖∇u_h‖ = {worst:e}")));
    }
    Ok(())
}

fn selftest(cfg: &RunConfig) -> Res<()> {
    let results = run_selftest(seed(cfg))?;
    let mut body = String::from("suite,passed,detail\n");
    for r in &results {
        let _ = writeln!(body, "{},{},\"{}\"", r.name, r.passed, r.detail);
        eprintln!("{}: {} {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    emit(cfg, &body)?;
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("self-test suites failed: {}", failed.join(", "))))
    }
}
