//! Run configuration (`key = value` text), mesh-source strings and pressure files.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Result, SvError};
use crate::mesh::MeshFamily;
use crate::rightinverse::Step1Space;

/// Largest `n` accepted in a family source.
pub const MAX_SUBDIVISIONS: usize = 64;

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> SvError {
    SvError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Where a mesh comes from: `family:n1,n2,...` or a mesh file path.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Family { family: MeshFamily, ns: Vec<usize> },
    File(PathBuf),
}

impl FromStr for MeshSource {
    type Err = SvError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(parse_err(1, 1, "empty mesh source"));
        }
        let Some((head, params)) = s.split_once(':') else {
            if s.parse::<MeshFamily>().is_ok() {
                return Err(parse_err(1, s.len() + 1, format!("family `{s}` needs subdivisions, e.g. `{s}:2`")));
            }
            return Ok(MeshSource::File(PathBuf::from(s)));
        };
        let Ok(family) = head.parse::<MeshFamily>() else {
            return Ok(MeshSource::File(PathBuf::from(s)));
        };
        let mut ns = Vec::new();
        let mut col = head.chars().count() + 2;
        for part in params.split(',') {
            let n: usize = part
                .trim()
                .parse()
                .map_err(|_| parse_err(1, col, format!("invalid subdivision count `{part}`")))?;
            if n == 0 || n > MAX_SUBDIVISIONS {
                return Err(parse_err(1, col, format!("subdivision count {n} outside 1..={MAX_SUBDIVISIONS}")));
            }
            ns.push(n);
            col += part.chars().count() + 1;
        }
        Ok(MeshSource::Family { family, ns })
    }
}

impl std::fmt::Display for MeshSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeshSource::Family { family, ns } => {
                let ns: Vec<String> = ns.iter().map(|n| n.to_string()).collect();
                write!(f, "{family}:{}", ns.join(","))
            }
            MeshSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// Input pressure: `random[:seed]` or a pressure file path.
#[derive(Debug, Clone, PartialEq)]
pub enum PressureSource {
    Random(Option<u64>),
    File(PathBuf),
}

impl FromStr for PressureSource {
    type Err = SvError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once(':') {
            _ if s.is_empty() => Err(parse_err(1, 1, "empty pressure source")),
            _ if s == "random" => Ok(PressureSource::Random(None)),
            Some(("random", seed)) => seed
                .trim()
                .parse()
                .map(|v| PressureSource::Random(Some(v)))
                .map_err(|_| parse_err(1, 8, format!("invalid seed `{seed}`"))),
            _ => Ok(PressureSource::File(PathBuf::from(s))),
        }
    }
}

impl std::fmt::Display for PressureSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PressureSource::Random(None) => f.write_str("random"),
            PressureSource::Random(Some(s)) => write!(f, "random:{s}"),
            PressureSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// DG pressure coefficients: whitespace-separated numbers, `#` comments.
/// Values are listed triangle by triangle in local Lagrange order.
pub fn parse_pressure(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut pos = 0;
        for tok in content.split_whitespace() {
            let start = content[pos..].find(tok).map_or(pos, |o| pos + o);
            pos = start + tok.len();
            let column = content[..start].chars().count() + 1;
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(i + 1, column, format!("invalid number `{tok}`")))?;
            if !v.is_finite() {
                return Err(parse_err(i + 1, column, format!("non-finite value `{tok}`")));
            }
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(parse_err(text.lines().count().max(1), 1, "pressure file holds no values"));
    }
    Ok(out)
}

/// `(vertex|edge, id)` selector for field dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSelector {
    Vertex(usize),
    Edge(usize),
}

impl FromStr for FieldSelector {
    type Err = SvError;

    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let (Some(kind), Some(id), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(1, 1, format!("expected `vertex <id>` or `edge <id>`, found `{s}`")));
        };
        let id: usize = id
            .parse()
            .map_err(|_| parse_err(1, kind.len() + 2, format!("invalid id `{id}`")))?;
        match kind {
            "vertex" => Ok(FieldSelector::Vertex(id)),
            "edge" => Ok(FieldSelector::Edge(id)),
            other => Err(parse_err(1, 1, format!("unknown field anchor `{other}`"))),
        }
    }
}

impl std::fmt::Display for FieldSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldSelector::Vertex(i) => write!(f, "vertex {i}"),
            FieldSelector::Edge(i) => write!(f, "edge {i}"),
        }
    }
}

/// Every setting of one run. Unset fields fall back to per-command defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub command: Option<String>,
    pub mesh: Option<MeshSource>,
    pub k: Option<usize>,
    pub levels: Option<usize>,
    pub pressure: Option<PressureSource>,
    pub seed: Option<u64>,
    pub perturb_seed: Option<u64>,
    pub perturb_magnitude: Option<f64>,
    pub samples: Option<usize>,
    pub thetas: Option<Vec<f64>>,
    pub step1: Option<Step1Space>,
    pub tol_final: Option<f64>,
    pub out: Option<PathBuf>,
    pub dump_ops: Option<PathBuf>,
    pub dump_field: Option<FieldSelector>,
}

/// Keys accepted in config files, in serialization order.
pub const CONFIG_KEYS: [&str; 15] = [
    "command",
    "mesh",
    "k",
    "levels",
    "pressure",
    "seed",
    "perturb-seed",
    "perturb-magnitude",
    "samples",
    "thetas",
    "step1",
    "tol-final",
    "out",
    "dump-ops",
    "dump-field",
];

fn value<T: FromStr>(v: &str, line: usize, column: usize, key: &str) -> Result<T> {
    v.parse()
        .map_err(|_| parse_err(line, column, format!("invalid value `{v}` for `{key}`")))
}

fn relocate(e: SvError, line: usize, column: usize) -> SvError {
    match e {
        SvError::Parse { column: c, message, .. } => parse_err(line, column + c - 1, message),
        SvError::InvalidArgument(message) => parse_err(line, column, message),
        other => other,
    }
}

impl RunConfig {
    /// Parse `key = value` lines; `#` starts a comment, `_` and `-` are interchangeable in keys.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                let col = content.len() - content.trim_start().len() + 1;
                return Err(parse_err(line, col, "expected `key = value`"));
            };
            let key = k.trim().replace('_', "-");
            let key_col = k.len() - k.trim_start().len() + 1;
            let v_col = k.chars().count() + 2 + (v.len() - v.trim_start().len());
            let v = v.trim();
            if v.is_empty() {
                return Err(parse_err(line, v_col, format!("missing value for `{key}`")));
            }
            if seen.contains(&key) {
                return Err(parse_err(line, key_col, format!("duplicate key `{key}`")));
            }
            cfg.set(&key, v).map_err(|e| match e {
                SvError::Parse { message, .. } if message.starts_with("unknown key") => {
                    parse_err(line, key_col, message)
                }
                other => relocate(other, line, v_col),
            })?;
            seen.push(key);
        }
        Ok(cfg)
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let key = key.replace('_', "-");
        match key.as_str() {
            "command" => self.command = Some(v.to_string()),
            "mesh" | "family" => self.mesh = Some(v.parse()?),
            "k" => self.k = Some(value(v, 1, 1, &key)?),
            "levels" => self.levels = Some(value(v, 1, 1, &key)?),
            "pressure" => self.pressure = Some(v.parse()?),
            "seed" => self.seed = Some(value(v, 1, 1, &key)?),
            "perturb-seed" => self.perturb_seed = Some(value(v, 1, 1, &key)?),
            "perturb-magnitude" => {
                let m: f64 = value(v, 1, 1, &key)?;
                if !m.is_finite() {
                    return Err(parse_err(1, 1, format!("invalid value `{v}` for `{key}`")));
                }
                self.perturb_magnitude = Some(m);
            }
            "samples" => self.samples = Some(value(v, 1, 1, &key)?),
            "thetas" => {
                let mut list = Vec::new();
                for part in v.split(',') {
                    let t: f64 = value(part.trim(), 1, 1, &key)?;
                    if !(t > 0.0 && t <= 1.0) {
                        return Err(parse_err(1, 1, format!("Θ target {t} outside (0, 1]")));
                    }
                    list.push(t);
                }
                self.thetas = Some(list);
            }
            "step1" => self.step1 = Some(v.parse()?),
            "tol-final" => {
                let t: f64 = value(v, 1, 1, &key)?;
                if !(t > 0.0 && t.is_finite()) {
                    return Err(parse_err(1, 1, format!("tolerance {v} must be positive")));
                }
                self.tol_final = Some(t);
            }
            "out" => self.out = Some(PathBuf::from(v)),
            "dump-ops" => self.dump_ops = Some(PathBuf::from(v)),
            "dump-field" => self.dump_field = Some(v.parse()?),
            other => return Err(parse_err(1, 1, format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Fields set in `other` replace those of `self`.
    pub fn merge(&mut self, other: RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            command,
            mesh,
            k,
            levels,
            pressure,
            seed,
            perturb_seed,
            perturb_magnitude,
            samples,
            thetas,
            step1,
            tol_final,
            out,
            dump_ops,
            dump_field
        );
    }

    /// Set entries as `(key, value)` pairs in [`CONFIG_KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                e.push((k, v));
            }
        };
        push("command", self.command.clone());
        push("mesh", self.mesh.as_ref().map(|m| m.to_string()));
        push("k", self.k.map(|v| v.to_string()));
        push("levels", self.levels.map(|v| v.to_string()));
        push("pressure", self.pressure.as_ref().map(|p| p.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("perturb-seed", self.perturb_seed.map(|v| v.to_string()));
        push("perturb-magnitude", self.perturb_magnitude.map(|v| format!("{v:?}")));
        push("samples", self.samples.map(|v| v.to_string()));
        push(
            "thetas",
            self.thetas
                .as_ref()
                .map(|t| t.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")),
        );
        push("step1", self.step1.map(|s| s.name().to_string()));
        push("tol-final", self.tol_final.map(|v| format!("{v:?}")));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        push("dump-ops", self.dump_ops.as_ref().map(|p| p.display().to_string()));
        push("dump-field", self.dump_field.map(|f| f.to_string()));
        e
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// The serialized config with every line prefixed by `# `.
    pub fn comment_header(&self, tool: &str, version: &str) -> String {
        let mut s = format!("# {tool} {version}\n");
        for line in self.serialize().lines() {
            let _ = writeln!(s, "# {line}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_source_forms() {
        assert_eq!(
            "perturbed-diagonal:1,2,4".parse::<MeshSource>().unwrap(),
            MeshSource::Family {
                family: MeshFamily::PerturbedDiagonal,
                ns: vec![1, 2, 4]
            }
        );
        assert_eq!("meshes/a.mesh".parse::<MeshSource>().unwrap(), MeshSource::File("meshes/a.mesh".into()));
        assert!("crisscross".parse::<MeshSource>().is_err());
        assert!("crisscross:0".parse::<MeshSource>().is_err());
        match "diagonal:2,x".parse::<MeshSource>() {
            Err(SvError::Parse { column, .. }) => assert_eq!(column, 12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pressure_sources_and_files() {
        assert_eq!("random:5".parse::<PressureSource>().unwrap(), PressureSource::Random(Some(5)));
        assert_eq!("random".parse::<PressureSource>().unwrap(), PressureSource::Random(None));
        assert!("random:x".parse::<PressureSource>().is_err());
        assert_eq!(parse_pressure("# c\n1 2.5\n -3e-1 # t\n").unwrap(), vec![1.0, 2.5, -0.3]);
        match parse_pressure("1\n2 nan\n") {
            Err(SvError::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(parse_pressure("  # nothing\n").is_err());
    }

    #[test]
    fn config_round_trip() {
        let text = "command = infsup\nmesh = perturbed-diagonal:1,2\nk = 4\nseed = 9\nthetas = 0.5,0.1\nstep1 = p2\ndump_field = vertex 3\ntol-final = 1e-9\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.k, Some(4));
        assert_eq!(cfg.dump_field, Some(FieldSelector::Vertex(3)));
        let again = RunConfig::parse(&cfg.serialize()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn config_errors_have_positions() {
        match RunConfig::parse("k = 4\n  bogus = 1\n") {
            Err(SvError::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        match RunConfig::parse("k = four\n") {
            Err(SvError::Parse { line, column, .. }) => assert_eq!((line, column), (1, 5)),
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::parse("k = 4\nk = 5\n").is_err());
        assert!(RunConfig::parse("just words\n").is_err());
    }

    #[test]
    fn merge_prefers_other() {
        let mut a = RunConfig::parse("k = 4\nseed = 1\n").unwrap();
        a.merge(RunConfig::parse("seed = 2\n").unwrap());
        assert_eq!((a.k, a.seed), (Some(4), Some(2)));
        assert!(a.comment_header("svfem", "0.1.0").lines().all(|l| l.starts_with("# ")));
    }
}
