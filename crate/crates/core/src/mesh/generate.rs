//! Structured mesh families on the unit square.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::Mesh;
use crate::error::{Result, SvError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshFamily {
    /// Each cell split by its (0,0)-(1,1) diagonal: 2n² triangles.
    Diagonal,
    /// Each cell split by both diagonals: 4n² triangles, every cell center singular.
    Crisscross,
    /// Diagonal mesh with interior vertices displaced deterministically.
    PerturbedDiagonal,
}

impl MeshFamily {
    pub fn name(self) -> &'static str {
        match self {
            MeshFamily::Diagonal => "diagonal",
            MeshFamily::Crisscross => "crisscross",
            MeshFamily::PerturbedDiagonal => "perturbed-diagonal",
        }
    }
}

impl fmt::Display for MeshFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeshFamily {
    type Err = SvError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(MeshFamily::Diagonal),
            "crisscross" => Ok(MeshFamily::Crisscross),
            "perturbed-diagonal" => Ok(MeshFamily::PerturbedDiagonal),
            other => Err(SvError::InvalidArgument(format!("unknown mesh family `{other}`"))),
        }
    }
}

/// Default seed and magnitude of the perturbed family.
pub const DEFAULT_PERTURB_SEED: u64 = 7;
pub const DEFAULT_PERTURB_MAGNITUDE: f64 = 0.1;

// SplitMix64 finalizer.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// Uniform in [0, 1) from the top 53 bits.
fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn grid_vertices(n: usize) -> Vec<[f64; 2]> {
    let h = 1.0 / n as f64;
    let mut coords = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            coords.push([i as f64 * h, j as f64 * h]);
        }
    }
    coords
}

fn diagonal_tris(n: usize) -> Vec<[usize; 3]> {
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut tris = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    tris
}

fn crisscross(n: usize, shift: Option<(usize, [f64; 2])>) -> Result<Mesh> {
    let mut coords = grid_vertices(n);
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut tris = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let (pa, pc) = (coords[a], coords[c]);
            // Exact arithmetic mean, so the two diagonals meet exactly in floating point.
            let mut center = [(pa[0] + pc[0]) / 2.0, (pa[1] + pc[1]) / 2.0];
            if let Some((cell, s)) = shift {
                if cell == j * n + i {
                    center = [center[0] + s[0], center[1] + s[1]];
                }
            }
            let m = coords.len();
            coords.push(center);
            tris.push([a, b, m]);
            tris.push([b, c, m]);
            tris.push([c, d, m]);
            tris.push([d, a, m]);
        }
    }
    Mesh::new(coords, tris)
}

/// Generate a member of a structured family on `[0,1]²` with `n` cells per side.
///
/// `perturb_seed` and `perturb_magnitude` only affect the perturbed family; each
/// interior vertex moves by at most `perturb_magnitude · h` in a seeded direction.
pub fn generate_mesh(family: MeshFamily, n: usize, perturb_seed: Option<u64>, perturb_magnitude: f64) -> Result<Mesh> {
    if n == 0 {
        return Err(SvError::InvalidArgument("number of subdivisions must be at least 1".into()));
    }
    match family {
        MeshFamily::Diagonal => Mesh::new(grid_vertices(n), diagonal_tris(n)),
        MeshFamily::Crisscross => crisscross(n, None),
        MeshFamily::PerturbedDiagonal => {
            if !(0.0..0.3).contains(&perturb_magnitude) {
                return Err(SvError::InvalidArgument(format!(
                    "perturbation magnitude {perturb_magnitude} must lie in [0, 0.3)"
                )));
            }
            let seed = perturb_seed.unwrap_or(DEFAULT_PERTURB_SEED);
            let h = 1.0 / n as f64;
            let mut coords = grid_vertices(n);
            for j in 1..n {
                for i in 1..n {
                    let v = (j * (n + 1) + i) as u64;
                    let base = splitmix64(seed ^ splitmix64(v));
                    let r = perturb_magnitude * h * unit(base);
                    let phi = 2.0 * PI * unit(splitmix64(base));
                    let p = &mut coords[v as usize];
                    p[0] += r * phi.cos();
                    p[1] += r * phi.sin();
                }
            }
            Mesh::new(coords, diagonal_tris(n))
        }
    }
}

/// Crisscross mesh whose center in cell `cell` (row-major) is displaced by `shift`.
/// A nonzero shift makes that center a nearly-singular, non-singular vertex.
pub fn shifted_center_crisscross(n: usize, cell: usize, shift: [f64; 2]) -> Result<Mesh> {
    if n == 0 || cell >= n * n {
        return Err(SvError::InvalidArgument(format!("cell {cell} does not exist for n = {n}")));
    }
    crisscross(n, Some((cell, shift)))
}

/// Two triangles splitting `(0,0), (1,0), (0.5,1)` at the bottom midpoint: the
/// midpoint is a boundary vertex with two collinear boundary edges (singular, N = 2).
pub fn split_triangle_mesh() -> Mesh {
    Mesh::new(
        vec![[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [0.5, 1.0]],
        vec![[0, 1, 3], [1, 2, 3]],
    )
    .expect("fixed fixture is conforming")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crisscross_one_cell() {
        let m = generate_mesh(MeshFamily::Crisscross, 1, None, 0.0).unwrap();
        assert_eq!(m.n_triangles(), 4);
        let interior: Vec<_> = m.vertices().iter().filter(|v| !v.on_boundary).collect();
        assert_eq!(interior.len(), 1);
        assert_eq!(interior[0].coords(), [0.5, 0.5]);
        assert_eq!(m.vertex_tris(interior[0].id).len(), 4);
    }

    #[test]
    fn diagonal_counts() {
        let m = generate_mesh(MeshFamily::Diagonal, 2, None, 0.0).unwrap();
        assert_eq!(m.n_triangles(), 8);
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.vertices().iter().filter(|v| !v.on_boundary).count(), 1);
        for n in 1..6 {
            assert_eq!(generate_mesh(MeshFamily::Diagonal, n, None, 0.0).unwrap().n_triangles(), 2 * n * n);
            assert_eq!(generate_mesh(MeshFamily::Crisscross, n, None, 0.0).unwrap().n_triangles(), 4 * n * n);
        }
    }

    #[test]
    fn perturbed_positive_and_moved() {
        let m = generate_mesh(MeshFamily::PerturbedDiagonal, 2, Some(7), 0.1).unwrap();
        assert_eq!(m.n_triangles(), 8);
        assert!(m.triangles().iter().all(|t| t.area > 0.0));
        let c = m.vertices().iter().find(|v| !v.on_boundary).unwrap();
        assert_ne!(c.coords(), [0.5, 0.5]);
        let again = generate_mesh(MeshFamily::PerturbedDiagonal, 2, Some(7), 0.1).unwrap();
        assert_eq!(m.vertices(), again.vertices());
        // Orientation is never flipped by the generator itself.
        let base = generate_mesh(MeshFamily::Diagonal, 2, None, 0.0).unwrap();
        for (a, b) in m.triangles().iter().zip(base.triangles()) {
            assert_eq!(a.verts, b.verts);
        }
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(generate_mesh(MeshFamily::Diagonal, 0, None, 0.0).is_err());
        assert!(generate_mesh(MeshFamily::PerturbedDiagonal, 2, None, 0.3).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in [MeshFamily::Diagonal, MeshFamily::Crisscross, MeshFamily::PerturbedDiagonal] {
            assert_eq!(f.name().parse::<MeshFamily>().unwrap(), f);
        }
    }
}
