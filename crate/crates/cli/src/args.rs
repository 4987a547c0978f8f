use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use svfem::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "svfem", version, about = "Scott-Vogelius elements: classification, right inverse, inf-sup and Stokes runs")]
pub struct Cli {
    /// `key = value` config file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for random inputs (default 1).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a structured mesh and write it in the mesh text format.
    Gen(MeshArgs),
    /// Classify every vertex and write `vertex_id,x,y,interior,N,gamma,theta,singular`.
    Classify(MeshArgs),
    /// Run the constructive right inverse on one pressure per mesh.
    Rightinv(RightInvArgs),
    /// Discrete inf-sup constants over a mesh family, or a Θ_min collapse study.
    Infsup(InfSupArgs),
    /// Divergence-free Stokes solve with a manufactured solution.
    Stokes(StokesArgs),
    /// Edge identities, dimension counts, field properties and the singular-vertex lemma.
    Selftest,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// `family:n1,n2,...` or a mesh file.
    #[arg(long, visible_alias = "family")]
    pub mesh: Option<String>,
    #[arg(long)]
    pub perturb_seed: Option<u64>,
    /// Displacement radius as a fraction of h (perturbed family).
    #[arg(long)]
    pub perturb_magnitude: Option<f64>,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RightInvArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// `random[:seed]` or a pressure file.
    #[arg(long)]
    pub pressure: Option<String>,
    /// Report file; same as `--out`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Step-1 space: `br` or `p2`.
    #[arg(long)]
    pub step1: Option<String>,
    #[arg(long)]
    pub tol_final: Option<f64>,
    /// Write A, M_u, M_p, B and the pressure basis as MatrixMarket files into this directory.
    #[arg(long)]
    pub dump_ops: Option<PathBuf>,
    /// Sample a field: `vertex <id>` (vertex correction) or `edge <id>` (w-field).
    #[arg(long)]
    pub dump_field: Option<String>,
}

#[derive(Debug, Args)]
pub struct InfSupArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// Refine a single `n` into `n, 2n, ..., 2^(levels-1) n`.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Random pressures per case for the constructive bound.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Run the collapse study at these Θ_min targets instead of a family.
    #[arg(long)]
    pub thetas: Option<String>,
    #[arg(long)]
    pub dump_ops: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StokesArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub dump_ops: Option<PathBuf>,
}

fn set_opt<T: ToString>(cfg: &mut RunConfig, key: &str, v: &Option<T>) -> svfem::Result<()> {
    match v {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn set_path(cfg: &mut RunConfig, key: &str, v: &Option<PathBuf>) -> svfem::Result<()> {
    set_opt(cfg, key, &v.as_ref().map(|p| p.display().to_string()))
}

impl MeshArgs {
    fn apply(&self, cfg: &mut RunConfig) -> svfem::Result<()> {
        set_opt(cfg, "mesh", &self.mesh)?;
        set_opt(cfg, "perturb-seed", &self.perturb_seed)?;
        set_opt(cfg, "perturb-magnitude", &self.perturb_magnitude)?;
        set_path(cfg, "out", &self.out)
    }
}

impl Cli {
    /// Flags as a [`RunConfig`] (only the ones given).
    pub fn flags(&self) -> svfem::Result<RunConfig> {
        let mut cfg = RunConfig::default();
        set_opt(&mut cfg, "seed", &self.seed)?;
        let name = match &self.command {
            Command::Gen(m) | Command::Classify(m) => {
                m.apply(&mut cfg)?;
                if matches!(self.command, Command::Gen(_)) {
                    "gen"
                } else {
                    "classify"
                }
            }
            Command::Rightinv(a) => {
                a.mesh.apply(&mut cfg)?;
                set_opt(&mut cfg, "k", &a.k)?;
                set_opt(&mut cfg, "pressure", &a.pressure)?;
                set_path(&mut cfg, "out", &a.report)?;
                set_opt(&mut cfg, "step1", &a.step1)?;
                set_opt(&mut cfg, "tol-final", &a.tol_final)?;
                set_path(&mut cfg, "dump-ops", &a.dump_ops)?;
                set_opt(&mut cfg, "dump-field", &a.dump_field)?;
                "rightinv"
            }
            Command::Infsup(a) => {
                a.mesh.apply(&mut cfg)?;
                set_opt(&mut cfg, "k", &a.k)?;
                set_opt(&mut cfg, "levels", &a.levels)?;
                set_opt(&mut cfg, "samples", &a.samples)?;
                set_opt(&mut cfg, "thetas", &a.thetas)?;
                set_path(&mut cfg, "dump-ops", &a.dump_ops)?;
                "infsup"
            }
            Command::Stokes(a) => {
                a.mesh.apply(&mut cfg)?;
                set_opt(&mut cfg, "k", &a.k)?;
                set_path(&mut cfg, "dump-ops", &a.dump_ops)?;
                "stokes"
            }
            Command::Selftest => "selftest",
        };
        cfg.command = Some(name.to_string());
        Ok(cfg)
    }
}
