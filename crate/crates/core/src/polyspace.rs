//! Polynomial algebra in barycentric coordinates on a single triangle.
//!
//! A [`BaryPoly`] of degree `d` is stored homogeneously: a coefficient for every
//! monomial `λ1^a λ2^b λ3^c` with `a + b + c = d`. Lower-degree data is lifted by
//! multiplying with `λ1 + λ2 + λ3 = 1`, so two polynomials can always be brought to
//! a common degree. Integration over the triangle and along its edges uses the
//! closed-form monomial formulas; derivatives go through the constant gradients of
//! the barycentric coordinates. Nothing in this module uses quadrature.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{Result, SvError};
use crate::linalg;

/// Largest argument of the factorial table; integration of degree `d` needs `(d + 2)!`.
pub const FACTORIAL_CAP: usize = 30;

fn factorial(n: usize) -> f64 {
    debug_assert!(n <= FACTORIAL_CAP);
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

fn factorials() -> &'static [f64; FACTORIAL_CAP + 1] {
    static TABLE: std::sync::OnceLock<[f64; FACTORIAL_CAP + 1]> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [1.0; FACTORIAL_CAP + 1];
        for (n, slot) in t.iter_mut().enumerate() {
            *slot = factorial(n);
        }
        t
    })
}

/// Number of monomials of exact degree `d` in three variables.
pub fn n_monomials(d: usize) -> usize {
    (d + 1) * (d + 2) / 2
}

/// Exponent triples of degree `d`, lexicographically ordered in `(a, b, c)`.
pub fn exponents(d: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(n_monomials(d));
    for a in 0..=d {
        for b in 0..=(d - a) {
            out.push([a, b, d - a - b]);
        }
    }
    out
}

/// Position of `(a, b, d - a - b)` in [`exponents`]`(d)`.
pub fn exponent_index(d: usize, a: usize, b: usize) -> usize {
    // Each block with first exponent a' < a holds (d - a' + 1) entries.
    a * (d + 1) - a * (a.saturating_sub(1)) / 2 + b
}

/// Homogeneous polynomial in the barycentric coordinates of one triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct BaryPoly {
    degree: usize,
    coeffs: Vec<f64>,
}

impl BaryPoly {
    pub fn zero(degree: usize) -> Self {
        Self {
            degree,
            coeffs: vec![0.0; n_monomials(degree)],
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            degree: 0,
            coeffs: vec![value],
        }
    }

    pub fn from_coeffs(degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != n_monomials(degree) {
            return Err(SvError::InvalidArgument(format!(
                "degree {degree} needs {} coefficients, got {}",
                n_monomials(degree),
                coeffs.len()
            )));
        }
        Ok(Self { degree, coeffs })
    }

    pub fn monomial(exps: [usize; 3], coeff: f64) -> Self {
        let d = exps.iter().sum();
        let mut p = Self::zero(d);
        p.coeffs[exponent_index(d, exps[0], exps[1])] = coeff;
        p
    }

    /// The barycentric coordinate `λ_i` (`i` in 0..3).
    pub fn lambda(i: usize) -> Self {
        let mut e = [0; 3];
        e[i] = 1;
        Self::monomial(e, 1.0)
    }

    /// The cubic bubble `λ1 λ2 λ3`.
    pub fn bubble() -> Self {
        Self::monomial([1, 1, 1], 1.0)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, exps: [usize; 3]) -> f64 {
        if exps.iter().sum::<usize>() != self.degree {
            return 0.0;
        }
        self.coeffs[exponent_index(self.degree, exps[0], exps[1])]
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.max_abs() <= tol
    }

    /// Same function, represented at degree `d >= self.degree()`.
    pub fn homogenize_to(&self, d: usize) -> Self {
        assert!(d >= self.degree, "cannot lower degree {} to {d}", self.degree);
        let mut p = self.clone();
        while p.degree < d {
            p = p.raise();
        }
        p
    }

    // Multiply by (λ1 + λ2 + λ3).
    fn raise(&self) -> Self {
        let d = self.degree;
        let mut out = Self::zero(d + 1);
        for (idx, e) in exponents(d).into_iter().enumerate() {
            let c = self.coeffs[idx];
            if c == 0.0 {
                continue;
            }
            for i in 0..3 {
                let mut f = e;
                f[i] += 1;
                out.coeffs[exponent_index(d + 1, f[0], f[1])] += c;
            }
        }
        out
    }

    pub fn eval(&self, bary: [f64; 3]) -> f64 {
        exponents(self.degree)
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, c)| c * bary[0].powi(e[0] as i32) * bary[1].powi(e[1] as i32) * bary[2].powi(e[2] as i32))
            .sum()
    }

    /// Formal partial derivative with respect to `λ_i`.
    pub fn d_lambda(&self, i: usize) -> Self {
        if self.degree == 0 {
            return Self::zero(0);
        }
        let d = self.degree;
        let mut out = Self::zero(d - 1);
        for (idx, e) in exponents(d).into_iter().enumerate() {
            if e[i] == 0 || self.coeffs[idx] == 0.0 {
                continue;
            }
            let mut f = e;
            f[i] -= 1;
            out.coeffs[exponent_index(d - 1, f[0], f[1])] += self.coeffs[idx] * e[i] as f64;
        }
        out
    }

    /// `(1 / 2|T|) ∫_T p dx`, which depends only on the coefficients.
    pub fn integrate_normalized(&self) -> Result<f64> {
        let d = self.degree;
        if d + 2 > FACTORIAL_CAP {
            return Err(SvError::DegreeTooHigh {
                degree: d,
                max: FACTORIAL_CAP - 2,
            });
        }
        let f = factorials();
        Ok(exponents(d)
            .iter()
            .zip(&self.coeffs)
            .map(|(e, c)| c * f[e[0]] * f[e[1]] * f[e[2]])
            .sum::<f64>()
            / f[d + 2])
    }
}

fn common_degree(a: &BaryPoly, b: &BaryPoly) -> (BaryPoly, BaryPoly) {
    let d = a.degree.max(b.degree);
    (a.homogenize_to(d), b.homogenize_to(d))
}

impl Add<&BaryPoly> for &BaryPoly {
    type Output = BaryPoly;
    fn add(self, rhs: &BaryPoly) -> BaryPoly {
        let (mut a, b) = common_degree(self, rhs);
        a.coeffs.iter_mut().zip(&b.coeffs).for_each(|(x, y)| *x += y);
        a
    }
}

impl Sub<&BaryPoly> for &BaryPoly {
    type Output = BaryPoly;
    fn sub(self, rhs: &BaryPoly) -> BaryPoly {
        let (mut a, b) = common_degree(self, rhs);
        a.coeffs.iter_mut().zip(&b.coeffs).for_each(|(x, y)| *x -= y);
        a
    }
}

impl AddAssign<&BaryPoly> for BaryPoly {
    fn add_assign(&mut self, rhs: &BaryPoly) {
        *self = &*self + rhs;
    }
}

impl Mul<f64> for &BaryPoly {
    type Output = BaryPoly;
    fn mul(self, s: f64) -> BaryPoly {
        BaryPoly {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }
}

impl Mul<&BaryPoly> for &BaryPoly {
    type Output = BaryPoly;
    fn mul(self, rhs: &BaryPoly) -> BaryPoly {
        let d = self.degree + rhs.degree;
        let mut out = BaryPoly::zero(d);
        let ea = exponents(self.degree);
        let eb = exponents(rhs.degree);
        for (i, x) in ea.iter().enumerate() {
            let cx = self.coeffs[i];
            if cx == 0.0 {
                continue;
            }
            for (j, y) in eb.iter().enumerate() {
                let cy = rhs.coeffs[j];
                if cy == 0.0 {
                    continue;
                }
                out.coeffs[exponent_index(d, x[0] + y[0], x[1] + y[1])] += cx * cy;
            }
        }
        out
    }
}

impl Neg for &BaryPoly {
    type Output = BaryPoly;
    fn neg(self) -> BaryPoly {
        self * -1.0
    }
}

/// Vector field with two [`BaryPoly`] components on one triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBaryPoly {
    pub x: BaryPoly,
    pub y: BaryPoly,
}

impl VectorBaryPoly {
    pub fn new(x: BaryPoly, y: BaryPoly) -> Self {
        let (x, y) = common_degree(&x, &y);
        Self { x, y }
    }

    pub fn zero(degree: usize) -> Self {
        Self::new(BaryPoly::zero(degree), BaryPoly::zero(degree))
    }

    /// `p · c` for a constant vector `c`.
    pub fn from_scalar(p: &BaryPoly, c: [f64; 2]) -> Self {
        Self::new(p * c[0], p * c[1])
    }

    pub fn degree(&self) -> usize {
        self.x.degree
    }

    pub fn eval(&self, bary: [f64; 3]) -> [f64; 2] {
        [self.x.eval(bary), self.y.eval(bary)]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(&self.x * s, &self.y * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }
}

impl Add<&VectorBaryPoly> for &VectorBaryPoly {
    type Output = VectorBaryPoly;
    fn add(self, rhs: &VectorBaryPoly) -> VectorBaryPoly {
        VectorBaryPoly::new(&self.x + &rhs.x, &self.y + &rhs.y)
    }
}

impl Sub<&VectorBaryPoly> for &VectorBaryPoly {
    type Output = VectorBaryPoly;
    fn sub(self, rhs: &VectorBaryPoly) -> VectorBaryPoly {
        VectorBaryPoly::new(&self.x - &rhs.x, &self.y - &rhs.y)
    }
}

impl AddAssign<&VectorBaryPoly> for VectorBaryPoly {
    fn add_assign(&mut self, rhs: &VectorBaryPoly) {
        *self = &*self + rhs;
    }
}

/// Affine geometry of a triangle: vertex coordinates and the constant gradients
/// of its barycentric coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TriGeom {
    pub verts: [[f64; 2]; 3],
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
}

impl TriGeom {
    /// Vertices must be counter-clockwise with positive area.
    pub fn new(verts: [[f64; 2]; 3]) -> Result<Self> {
        let [p0, p1, p2] = verts;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        if !(det > 0.0) {
            return Err(SvError::Domain(format!(
                "triangle {verts:?} is not counter-clockwise with positive area"
            )));
        }
        // ∇λ_i = rot(p_{i+2} - p_{i+1}) / det, rotated by -90° for CCW vertices.
        let mut grad_lambda = [[0.0; 2]; 3];
        for (i, g) in grad_lambda.iter_mut().enumerate() {
            let a = verts[(i + 1) % 3];
            let b = verts[(i + 2) % 3];
            *g = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
        }
        Ok(Self {
            verts,
            area: 0.5 * det,
            grad_lambda,
        })
    }

    /// The reference triangle `(0,0), (1,0), (0,1)`.
    pub fn reference() -> Self {
        Self::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).expect("reference triangle")
    }

    pub fn point(&self, bary: [f64; 3]) -> [f64; 2] {
        let mut p = [0.0; 2];
        for (i, v) in self.verts.iter().enumerate() {
            p[0] += bary[i] * v[0];
            p[1] += bary[i] * v[1];
        }
        p
    }

    pub fn bary(&self, p: [f64; 2]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, g) in self.grad_lambda.iter().enumerate() {
            let v = self.verts[(i + 1) % 3];
            // λ_i vanishes at the other two vertices and is affine.
            out[i] = g[0] * (p[0] - v[0]) + g[1] * (p[1] - v[1]);
        }
        out
    }

    pub fn edge_length(&self, i: usize, j: usize) -> f64 {
        let a = self.verts[i];
        let b = self.verts[j];
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    pub fn diameter(&self) -> f64 {
        self.edge_length(0, 1)
            .max(self.edge_length(1, 2))
            .max(self.edge_length(2, 0))
    }
}

/// Exact `∫_T p dx`.
pub fn integrate_triangle(p: &BaryPoly, geom: &TriGeom) -> Result<f64> {
    Ok(2.0 * geom.area * p.integrate_normalized()?)
}

/// Exact `∫_e p ds` over the edge joining local vertices `i` and `j`.
pub fn integrate_edge(p: &BaryPoly, geom: &TriGeom, i: usize, j: usize) -> Result<f64> {
    if i > 2 || j > 2 || i == j {
        return Err(SvError::Domain(format!(
            "({i}, {j}) is not an edge of the host triangle"
        )));
    }
    let d = p.degree();
    if d + 1 > FACTORIAL_CAP {
        return Err(SvError::DegreeTooHigh {
            degree: d,
            max: FACTORIAL_CAP - 1,
        });
    }
    let off = 3 - i - j;
    let f = factorials();
    let sum: f64 = exponents(d)
        .iter()
        .zip(p.coeffs())
        .filter(|(e, _)| e[off] == 0)
        .map(|(e, c)| c * f[e[i]] * f[e[j]] / f[e[i] + e[j] + 1])
        .sum();
    Ok(geom.edge_length(i, j) * sum)
}

/// Exact gradient; the result has degree `d - 1` (or stays 0 for constants).
pub fn gradient(p: &BaryPoly, geom: &TriGeom) -> VectorBaryPoly {
    let parts: Vec<BaryPoly> = (0..3).map(|i| p.d_lambda(i)).collect();
    let mut gx = BaryPoly::zero(parts[0].degree());
    let mut gy = BaryPoly::zero(parts[0].degree());
    for (i, part) in parts.iter().enumerate() {
        gx += &(part * geom.grad_lambda[i][0]);
        gy += &(part * geom.grad_lambda[i][1]);
    }
    VectorBaryPoly::new(gx, gy)
}

pub fn divergence(v: &VectorBaryPoly, geom: &TriGeom) -> BaryPoly {
    let gx = gradient(&v.x, geom);
    let gy = gradient(&v.y, geom);
    &gx.x + &gy.y
}

/// `curl q = (∂q/∂y, -∂q/∂x)`.
pub fn curl(q: &BaryPoly, geom: &TriGeom) -> VectorBaryPoly {
    let g = gradient(q, geom);
    VectorBaryPoly::new(g.y.clone(), -&g.x)
}

/// Basis of `B^k(T) = { b_T v : v ∈ [P^{k-3}]² }`: bubble times monomial times unit vector.
pub fn bubble_space_basis(k: usize) -> Vec<VectorBaryPoly> {
    if k < 3 {
        return Vec::new();
    }
    let b = BaryPoly::bubble();
    let mut out = Vec::with_capacity((k - 2) * (k - 1));
    for e in exponents(k - 3) {
        let m = &b * &BaryPoly::monomial(e, 1.0);
        out.push(VectorBaryPoly::from_scalar(&m, [1.0, 0.0]));
        out.push(VectorBaryPoly::from_scalar(&m, [0.0, 1.0]));
    }
    out
}

/// Basis of the divergence-free bubbles `{ curl(ψ b_T²) : ψ ∈ P^{k-5} }`.
pub fn divfree_bubble_basis(k: usize, geom: &TriGeom) -> Vec<VectorBaryPoly> {
    if k < 5 {
        return Vec::new();
    }
    let b = BaryPoly::bubble();
    let b2 = &b * &b;
    exponents(k - 5)
        .into_iter()
        .map(|e| curl(&(&b2 * &BaryPoly::monomial(e, 1.0)), geom))
        .collect()
}

/// Dimensions of the local spaces behind the bubble solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriSpaceDims {
    pub k: usize,
    pub dim_m: usize,
    pub dim_b: usize,
    pub dim_z: usize,
}

pub fn space_dims(k: usize) -> TriSpaceDims {
    let dim_m = if k >= 3 { k * (k + 1) / 2 - 4 } else { 0 };
    let dim_b = if k >= 3 { (k - 2) * (k - 1) } else { 0 };
    let dim_z = if k >= 5 { (k - 4) * (k - 3) / 2 } else { 0 };
    TriSpaceDims {
        k,
        dim_m,
        dim_b,
        dim_z,
    }
}

/// Nodes of the principal lattice of order `r`, in the order of [`exponents`]`(r)`.
pub fn lattice_nodes(order: usize) -> Vec<[f64; 3]> {
    if order == 0 {
        return vec![[1.0 / 3.0; 3]];
    }
    let r = order as f64;
    exponents(order)
        .into_iter()
        .map(|e| [e[0] as f64 / r, e[1] as f64 / r, e[2] as f64 / r])
        .collect()
}

/// Lagrange basis of `P^r(T)` on the equispaced principal lattice.
///
/// `φ_(i,j,l) = Π_{m<i} (rλ1 - m)/(i - m) · Π_{m<j} (rλ2 - m)/(j - m) · Π_{m<l} (rλ3 - m)/(l - m)`,
/// with each affine factor homogenized through `m = m(λ1+λ2+λ3)`.
pub fn lagrange_basis(order: usize) -> Vec<BaryPoly> {
    if order == 0 {
        return vec![BaryPoly::constant(1.0)];
    }
    let r = order as f64;
    let sum = &(&BaryPoly::lambda(0) + &BaryPoly::lambda(1)) + &BaryPoly::lambda(2);
    exponents(order)
        .into_iter()
        .map(|e| {
            let mut p = BaryPoly::constant(1.0);
            for (axis, &n) in e.iter().enumerate() {
                for m in 0..n {
                    let factor = &(&(&BaryPoly::lambda(axis) * r) - &(&sum * m as f64)) * (1.0 / (n - m) as f64);
                    p = &p * &factor;
                }
            }
            p
        })
        .collect()
}

/// Orthonormal basis (columns, in Lagrange coordinates of `P^{k-1}`) of
/// `M^{k-1}(T)`: pressures vanishing at the three vertices with zero mean.
pub fn m_space_basis(k: usize) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(SvError::InvalidArgument("k must be at least 1".into()));
    }
    let order = k - 1;
    let basis = lagrange_basis(order);
    let n = basis.len();
    let mut functionals = DMatrix::zeros(4, n);
    let verts = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for (b, phi) in basis.iter().enumerate() {
        for (v, bary) in verts.iter().enumerate() {
            functionals[(v, b)] = phi.eval(*bary);
        }
        functionals[(3, b)] = 2.0 * phi.integrate_normalized()?;
    }
    Ok(linalg::null_space(&functionals, 1e-10))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lam(i: usize) -> BaryPoly {
        BaryPoly::lambda(i)
    }

    #[test]
    fn exponent_index_matches_enumeration() {
        for d in 0..9 {
            for (idx, e) in exponents(d).iter().enumerate() {
                assert_eq!(exponent_index(d, e[0], e[1]), idx);
            }
        }
    }

    #[test]
    fn homogenization_preserves_values() {
        let p = &(&lam(0) * &lam(1)) + &BaryPoly::constant(0.25);
        let q = p.homogenize_to(5);
        for b in [[0.2, 0.3, 0.5], [1.0, 0.0, 0.0], [0.1, 0.1, 0.8]] {
            assert!((p.eval(b) - q.eval(b)).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_integrates_to_area() {
        let g = TriGeom::new([[0.3, -0.2], [2.0, 0.1], [0.7, 1.4]]).unwrap();
        let v = integrate_triangle(&BaryPoly::constant(1.0), &g).unwrap();
        assert!((v - g.area).abs() < 1e-15);
    }

    #[test]
    fn reference_monomial_integrals() {
        let g = TriGeom::reference();
        let bubble = integrate_triangle(&BaryPoly::bubble(), &g).unwrap();
        assert!((bubble - 1.0 / 120.0).abs() < 1e-16);
        let sq = integrate_triangle(&BaryPoly::monomial([2, 0, 0], 1.0), &g).unwrap();
        assert!((sq - 1.0 / 12.0).abs() < 1e-16);
    }

    #[test]
    fn degree_cap_is_an_error() {
        let p = BaryPoly::monomial([29, 0, 0], 1.0);
        assert!(matches!(
            integrate_triangle(&p, &TriGeom::reference()),
            Err(SvError::DegreeTooHigh { .. })
        ));
    }

    #[test]
    fn edge_rejects_non_edges() {
        let g = TriGeom::reference();
        assert!(integrate_edge(&lam(0), &g, 1, 1).is_err());
        assert!(integrate_edge(&lam(0), &g, 0, 3).is_err());
    }

    #[test]
    fn edge_identities_unit_edge() {
        let g = TriGeom::reference();
        // z = vertex 0, y = vertex 1, |e| = 1.
        let z2 = &lam(0) * &lam(0);
        let eta = &z2 * &lam(1);
        let eta2 = &eta * &lam(1);
        assert!((integrate_edge(&eta, &g, 0, 1).unwrap() - 1.0 / 12.0).abs() < 1e-16);
        assert!((integrate_edge(&eta2, &g, 0, 1).unwrap() - 1.0 / 30.0).abs() < 1e-16);
        let gamma = &eta - &(&eta2 * 2.5);
        assert!(integrate_edge(&gamma, &g, 0, 1).unwrap().abs() < 1e-16);
    }

    #[test]
    fn hat_gradient_on_reference() {
        let g = TriGeom::reference();
        let grad = gradient(&lam(1), &g);
        assert_eq!(grad.eval([0.3, 0.3, 0.4]), [1.0, 0.0]);
        let sum = &(&lam(0) + &lam(1)) + &lam(2);
        assert!(gradient(&sum, &g).max_abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = TriGeom::new([[0.1, 0.0], [1.3, 0.2], [0.4, 0.9]]).unwrap();
        let p = &lam(0) * &lam(1);
        let grad = gradient(&p, &g);
        let c = [1.0 / 3.0; 3];
        let x = g.point(c);
        let f = |pt: [f64; 2]| p.eval(g.bary(pt));
        let h = 1e-6;
        let fd = [
            (f([x[0] + h, x[1]]) - f([x[0] - h, x[1]])) / (2.0 * h),
            (f([x[0], x[1] + h]) - f([x[0], x[1] - h])) / (2.0 * h),
        ];
        let an = grad.eval(c);
        assert!((fd[0] - an[0]).abs() < 1e-9 && (fd[1] - an[1]).abs() < 1e-9);
    }

    #[test]
    fn identity_field_has_divergence_two() {
        let g = TriGeom::new([[0.1, 0.0], [1.3, 0.2], [0.4, 0.9]]).unwrap();
        let coord = |c: usize| {
            (0..3).fold(BaryPoly::zero(1), |acc, i| &acc + &(&lam(i) * g.verts[i][c]))
        };
        let v = VectorBaryPoly::new(coord(0), coord(1));
        let d = divergence(&v, &g);
        for b in [[0.2, 0.3, 0.5], [0.9, 0.05, 0.05]] {
            assert!((d.eval(b) - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn curl_is_divergence_free() {
        let g = TriGeom::new([[0.1, 0.0], [1.3, 0.2], [0.4, 0.9]]).unwrap();
        let q = &(&lam(0) * &lam(1)) * &(&lam(2) + &BaryPoly::constant(3.0));
        assert!(divergence(&curl(&q, &g), &g).is_zero(1e-12));
    }

    #[test]
    fn bubble_divergence_has_zero_mean() {
        let g = TriGeom::new([[0.1, 0.0], [1.3, 0.2], [0.4, 0.9]]).unwrap();
        let v = VectorBaryPoly::from_scalar(&BaryPoly::bubble(), [1.0, 0.0]);
        let m = integrate_triangle(&divergence(&v, &g), &g).unwrap();
        assert!(m.abs() < 1e-15);
    }

    #[test]
    fn bubble_basis_sizes() {
        assert_eq!(bubble_space_basis(2).len(), 0);
        assert_eq!(bubble_space_basis(3).len(), 2);
        assert_eq!(bubble_space_basis(4).len(), 6);
        let b3 = bubble_space_basis(3);
        assert_eq!(b3[0], VectorBaryPoly::from_scalar(&BaryPoly::bubble(), [1.0, 0.0]));
        assert_eq!(b3[1], VectorBaryPoly::from_scalar(&BaryPoly::bubble(), [0.0, 1.0]));
    }

    #[test]
    fn bubbles_vanish_on_boundary() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for field in bubble_space_basis(5) {
            for _ in 0..10 {
                let t: f64 = rng.random();
                let edge = rng.random_range(0..3);
                let mut b = [0.0; 3];
                b[(edge + 1) % 3] = t;
                b[(edge + 2) % 3] = 1.0 - t;
                assert_eq!(field.eval(b), [0.0, 0.0]);
            }
        }
    }

    #[test]
    fn dims_table() {
        assert_eq!((space_dims(4).dim_m, space_dims(4).dim_b, space_dims(4).dim_z), (6, 6, 0));
        assert_eq!((space_dims(5).dim_m, space_dims(5).dim_b, space_dims(5).dim_z), (11, 12, 1));
        assert_eq!((space_dims(2).dim_m, space_dims(2).dim_b, space_dims(2).dim_z), (0, 0, 0));
        for k in 3..12 {
            let d = space_dims(k);
            assert_eq!(d.dim_b, d.dim_m + d.dim_z);
        }
    }

    #[test]
    fn divfree_bubbles() {
        let g = TriGeom::new([[0.1, 0.0], [1.3, 0.2], [0.4, 0.9]]).unwrap();
        assert!(divfree_bubble_basis(4, &g).is_empty());
        let z5 = divfree_bubble_basis(5, &g);
        assert_eq!(z5.len(), 1);
        assert!(divergence(&z5[0], &g).max_abs() < 1e-13);
        let z6 = divfree_bubble_basis(6, &g);
        assert_eq!(z6.len(), 3);
        let cols: Vec<Vec<f64>> = z6
            .iter()
            .map(|v| v.x.coeffs().iter().chain(v.y.coeffs()).copied().collect())
            .collect();
        let m = DMatrix::from_fn(cols[0].len(), 3, |i, j| cols[j][i]);
        assert_eq!(linalg::rank(&m, 1e-10), 3);
    }

    #[test]
    fn lagrange_basis_is_nodal() {
        for order in 0..7 {
            let basis = lagrange_basis(order);
            let nodes = lattice_nodes(order);
            assert_eq!(basis.len(), nodes.len());
            for (i, phi) in basis.iter().enumerate() {
                for (j, n) in nodes.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((phi.eval(*n) - expect).abs() < 1e-12, "order {order}");
                }
            }
        }
    }

    #[test]
    fn m_space_dimensions() {
        for k in 1..9 {
            assert_eq!(m_space_basis(k).unwrap().ncols(), space_dims(k).dim_m, "k = {k}");
        }
    }
}
