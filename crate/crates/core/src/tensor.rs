//! Complex 3-vectors, 3×3 dyadics and the scalar/dyadic Helmholtz kernels.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Point = [f64; 3];

pub const I: C64 = C64::new(0.0, 1.0);
const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Separations below this are treated as coincident.
pub const COINCIDENT_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CVec3(pub [C64; 3]);

impl CVec3 {
    pub const ZERO: CVec3 = CVec3([ZERO; 3]);

    pub fn new(x: C64, y: C64, z: C64) -> Self {
        CVec3([x, y, z])
    }

    pub fn from_real(v: Point) -> Self {
        CVec3([v[0].into(), v[1].into(), v[2].into()])
    }

    pub fn x(&self) -> C64 {
        self.0[0]
    }
    pub fn y(&self) -> C64 {
        self.0[1]
    }
    pub fn z(&self) -> C64 {
        self.0[2]
    }

    /// Bilinear product (no conjugation).
    pub fn dot(&self, o: &CVec3) -> C64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    /// Sesquilinear product, conjugate-linear in `self`.
    pub fn hdot(&self, o: &CVec3) -> C64 {
        self.0[0].conj() * o.0[0] + self.0[1].conj() * o.0[1] + self.0[2].conj() * o.0[2]
    }

    pub fn dot_real(&self, v: &Point) -> C64 {
        self.0[0] * v[0] + self.0[1] * v[1] + self.0[2] * v[2]
    }

    pub fn cross(&self, o: &CVec3) -> CVec3 {
        let [a1, a2, a3] = self.0;
        let [b1, b2, b3] = o.0;
        CVec3([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
    }

    /// x̂ × v for a real direction x̂.
    pub fn cross_from_real(xh: &Point, v: &CVec3) -> CVec3 {
        CVec3::from_real(*xh).cross(v)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn conj(&self) -> CVec3 {
        CVec3(self.0.map(|c| c.conj()))
    }

    pub fn scale(&self, s: C64) -> CVec3 {
        CVec3(self.0.map(|c| c * s))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl Index<usize> for CVec3 {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CVec3 {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

impl Add for CVec3 {
    type Output = CVec3;
    fn add(self, o: CVec3) -> CVec3 {
        CVec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for CVec3 {
    fn add_assign(&mut self, o: CVec3) {
        for i in 0..3 {
            self.0[i] += o.0[i];
        }
    }
}

impl Sub for CVec3 {
    type Output = CVec3;
    fn sub(self, o: CVec3) -> CVec3 {
        CVec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl SubAssign for CVec3 {
    fn sub_assign(&mut self, o: CVec3) {
        for i in 0..3 {
            self.0[i] -= o.0[i];
        }
    }
}

impl Neg for CVec3 {
    type Output = CVec3;
    fn neg(self) -> CVec3 {
        CVec3(self.0.map(|c| -c))
    }
}

impl Mul<C64> for CVec3 {
    type Output = CVec3;
    fn mul(self, s: C64) -> CVec3 {
        self.scale(s)
    }
}

impl Mul<f64> for CVec3 {
    type Output = CVec3;
    fn mul(self, s: f64) -> CVec3 {
        CVec3(self.0.map(|c| c * s))
    }
}

/// 3×3 complex tensor, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dyadic(pub [[C64; 3]; 3]);

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic([[ZERO; 3]; 3]);

    pub fn identity() -> Self {
        Self::scalar(ONE)
    }

    pub fn scalar(s: C64) -> Self {
        let mut m = Self::ZERO;
        for i in 0..3 {
            m.0[i][i] = s;
        }
        m
    }

    pub fn diag(d: [C64; 3]) -> Self {
        let mut m = Self::ZERO;
        for (i, v) in d.into_iter().enumerate() {
            m.0[i][i] = v;
        }
        m
    }

    pub fn from_real(a: [[f64; 3]; 3]) -> Self {
        Dyadic(a.map(|row| row.map(C64::from)))
    }

    /// a ⊗ b (no conjugation).
    pub fn outer(a: &CVec3, b: &CVec3) -> Self {
        let mut m = Self::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = a.0[i] * b.0[j];
            }
        }
        m
    }

    /// a ⊗ conj(b).
    pub fn outer_conj(a: &CVec3, b: &CVec3) -> Self {
        Self::outer(a, &b.conj())
    }

    pub fn apply(&self, v: &CVec3) -> CVec3 {
        let m = &self.0;
        CVec3([
            m[0][0] * v.0[0] + m[0][1] * v.0[1] + m[0][2] * v.0[2],
            m[1][0] * v.0[0] + m[1][1] * v.0[1] + m[1][2] * v.0[2],
            m[2][0] * v.0[0] + m[2][1] * v.0[1] + m[2][2] * v.0[2],
        ])
    }

    pub fn matmul(&self, o: &Dyadic) -> Dyadic {
        let mut m = Self::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = (0..3).map(|l| self.0[i][l] * o.0[l][j]).sum();
            }
        }
        m
    }

    pub fn transpose(&self) -> Dyadic {
        let mut m = Self::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[j][i];
            }
        }
        m
    }

    pub fn adjoint(&self) -> Dyadic {
        let mut m = self.transpose();
        for row in m.0.iter_mut() {
            for c in row.iter_mut() {
                *c = c.conj();
            }
        }
        m
    }

    pub fn scale(&self, s: C64) -> Dyadic {
        Dyadic(self.0.map(|r| r.map(|c| c * s)))
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> C64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse by adjugate. `None` when |det| is negligible relative to the
    /// product of row norms (Hadamard bound).
    pub fn inverse(&self) -> Option<Dyadic> {
        let m = &self.0;
        let det = self.det();
        let hadamard: f64 = m
            .iter()
            .map(|r| r.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
            .product();
        if hadamard == 0.0 || det.norm() <= 1e-10 * hadamard {
            return None;
        }
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        Some(Dyadic(adj).scale(det.inv()))
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, o: &Dyadic) -> f64 {
        let mut m = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                m = m.max((self.0[i][j] - o.0[i][j]).norm());
            }
        }
        m
    }

    /// Largest singular value, by power iteration on AᴴA.
    pub fn spectral_norm(&self) -> f64 {
        let g = self.adjoint().matmul(self);
        let mut best = 0.0f64;
        // a few deterministic starts guard against an unlucky orthogonal seed
        for seed in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.6, 0.48, 0.64]] {
            let mut v = CVec3::from_real(seed);
            let mut lam = 0.0;
            for _ in 0..500 {
                let w = g.apply(&v);
                let n = w.norm();
                if n == 0.0 {
                    lam = 0.0;
                    break;
                }
                let next = w * (1.0 / n);
                let done = (n - lam).abs() <= 1e-15 * n;
                lam = n;
                v = next;
                if done {
                    break;
                }
            }
            best = best.max(lam);
        }
        best.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl Index<(usize, usize)> for Dyadic {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Dyadic {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.0[i][j]
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(mut self, o: Dyadic) -> Dyadic {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] += o.0[i][j];
            }
        }
        self
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(mut self, o: Dyadic) -> Dyadic {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] -= o.0[i][j];
            }
        }
        self
    }
}

impl Mul<CVec3> for Dyadic {
    type Output = CVec3;
    fn mul(self, v: CVec3) -> CVec3 {
        self.apply(&v)
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;
    fn mul(self, o: Dyadic) -> Dyadic {
        self.matmul(&o)
    }
}

/// Serialization shape for complex numbers in reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReIm {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for ReIm {
    fn from(c: C64) -> Self {
        ReIm { re: c.re, im: c.im }
    }
}

impl From<ReIm> for C64 {
    fn from(c: ReIm) -> Self {
        C64::new(c.re, c.im)
    }
}

impl Serialize for CVec3 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.map(ReIm::from).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CVec3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = <[ReIm; 3]>::deserialize(d)?;
        Ok(CVec3(v.map(C64::from)))
    }
}

impl Serialize for Dyadic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.map(|r| r.map(ReIm::from)).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dyadic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = <[[ReIm; 3]; 3]>::deserialize(d)?;
        Ok(Dyadic(v.map(|r| r.map(C64::from))))
    }
}

pub fn sub(x: &Point, z: &Point) -> Point {
    [x[0] - z[0], x[1] - z[1], x[2] - z[2]]
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub fn cross(a: &Point, b: &Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn separation(x: &Point, z: &Point) -> Result<(Point, f64)> {
    let d = sub(x, z);
    let r = norm(&d);
    if !(r >= COINCIDENT_EPS) {
        return Err(Error::Domain(format!("coincident points (|x-z| = {r:e})")));
    }
    Ok((d, r))
}

/// Φ_k(x,z) = e^{ik|x−z|} / (4π|x−z|).
pub fn helmholtz_kernel(x: &Point, z: &Point, k: f64) -> Result<C64> {
    let (_, r) = separation(x, z)?;
    Ok(phi_r(r, k))
}

#[inline]
pub fn phi_r(r: f64, k: f64) -> C64 {
    C64::from_polar(1.0 / (4.0 * PI * r), k * r)
}

/// ∇ₓΦ_k(x,z).
pub fn helmholtz_gradient(x: &Point, z: &Point, k: f64) -> Result<CVec3> {
    let (d, r) = separation(x, z)?;
    let dphi = phi_r(r, k) * C64::new(-1.0, k * r) / r;
    Ok(CVec3::from_real([d[0] / r, d[1] / r, d[2] / r]) * dphi)
}

/// Υ_k(x,z) = ∇ₓ∇ₓΦ_k + k²Φ_k I.
pub fn dyadic_green(x: &Point, z: &Point, k: f64) -> Result<Dyadic> {
    let (d, r) = separation(x, z)?;
    Ok(dyadic_green_offset(&d, r, k))
}

/// Υ_k for a separation vector `d` of length `r > 0` (no guard).
///
/// Υ = e^{ikr}/(4πr³) [ (k²r² + ikr − 1) I + (3 − 3ikr − k²r²) r̂r̂ ]
#[inline]
pub fn dyadic_green_offset(d: &Point, r: f64, k: f64) -> Dyadic {
    let (a, b) = green_coefficients(r, k);
    let rh = [d[0] / r, d[1] / r, d[2] / r];
    let mut m = Dyadic::ZERO;
    for i in 0..3 {
        for j in 0..3 {
            m.0[i][j] = b * (rh[i] * rh[j]);
        }
        m.0[i][i] += a;
    }
    m
}

/// Coefficients (α, β) with Υ_k = α I + β r̂r̂.
#[inline]
pub fn green_coefficients(r: f64, k: f64) -> (C64, C64) {
    let kr = k * r;
    let pre = C64::from_polar(1.0 / (4.0 * PI * r * r * r), kr);
    let a = pre * C64::new(kr * kr - 1.0, kr);
    let b = pre * C64::new(3.0 - kr * kr, -3.0 * kr);
    (a, b)
}

/// Coefficients (α, β) with ∇∇Φ_k = α I + β r̂r̂ (the Hessian alone).
#[inline]
pub fn hessian_coefficients(r: f64, k: f64) -> (C64, C64) {
    let kr = k * r;
    let pre = C64::from_polar(1.0 / (4.0 * PI * r * r * r), kr);
    (pre * C64::new(-1.0, kr), pre * C64::new(3.0 - kr * kr, -3.0 * kr))
}
