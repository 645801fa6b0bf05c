use std::f64::consts::PI;

use rayon::prelude::*;

use super::{GridField, VolumeGrid};
use crate::krylov::LinearOperator;
use crate::tensor::{green_coefficients, hessian_coefficients, phi_r, CVec3, C64, I};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelKind {
    /// N^k: Φ_k, scalar.
    Newtonian,
    /// ∇M^k: −∇∇Φ_k plus depolarisation.
    Magnetization,
    /// N′: Φ₀ r̂⊗r̂ (static only).
    NPrime,
    /// −∇M^k + k²N^k, i.e. the Υ_k kernel.
    Lse,
}

/// Radius of the sphere with the same volume as a cell.
pub(crate) fn equivalent_radius(w: f64) -> f64 {
    (3.0 * w / (4.0 * PI)).cbrt()
}

/// ∫_{B_R} Φ_k(y) dy = ((1 − ikR)e^{ikR} − 1)/k².
pub(crate) fn sphere_newtonian(k: f64, r: f64) -> C64 {
    let kr = k * r;
    if kr < 0.1 {
        // Σ_n (ik)ⁿ R^{n+2} / (n!(n+2))
        let mut sum = C64::default();
        let mut term = C64::new(r * r, 0.0);
        for n in 0..30 {
            sum += term / (n as f64 + 2.0);
            term *= I * kr / (n as f64 + 1.0);
        }
        sum
    } else {
        (C64::new(1.0, -kr) * C64::from_polar(1.0, kr) - 1.0) / (k * k)
    }
}

/// Field of ∇M^k at the centre of a ball of radius R carrying a unit
/// constant density: (1 − ikR)e^{ikR}/3.
pub(crate) fn sphere_depolarization(k: f64, r: f64) -> C64 {
    let kr = k * r;
    C64::new(1.0, -kr) * C64::from_polar(1.0, kr) / 3.0
}

enum Table {
    Scalar(Vec<C64>),
    /// xx, yy, zz, xy, xz, yz
    Dyadic(Vec<[C64; 6]>),
}

/// Translation-invariant cell-to-cell operator on a grid, stored as a
/// table over lattice offsets.
pub struct Convolution {
    kind: KernelKind,
    k: f64,
    stride: [usize; 2],
    row_key: Vec<usize>,
    col_key: Vec<usize>,
    table: Table,
    self_coef: C64,
}

impl Convolution {
    pub fn new(grid: &VolumeGrid, kind: KernelKind, k: f64) -> Self {
        let k = if kind == KernelKind::NPrime { 0.0 } else { k };
        let n = grid.dims();
        let s = grid.spacing();
        let w = grid.weight();
        let ext: [usize; 3] = std::array::from_fn(|a| 2 * n[a] - 1);
        let stride = [ext[1] * ext[2], ext[2]];
        let offset = |flat: usize| -> [f64; 3] {
            let i = flat / stride[0];
            let j = (flat / stride[1]) % ext[1];
            let l = flat % ext[2];
            [
                (i as f64 - (n[0] - 1) as f64) * s[0],
                (j as f64 - (n[1] - 1) as f64) * s[1],
                (l as f64 - (n[2] - 1) as f64) * s[2],
            ]
        };
        let len = ext[0] * ext[1] * ext[2];
        let table = match kind {
            KernelKind::Newtonian => Table::Scalar(
                (0..len)
                    .into_par_iter()
                    .map(|f| {
                        let d = offset(f);
                        let r = crate::tensor::norm(&d);
                        if r == 0.0 {
                            C64::default()
                        } else {
                            phi_r(r, k) * w
                        }
                    })
                    .collect(),
            ),
            _ => Table::Dyadic(
                (0..len)
                    .into_par_iter()
                    .map(|f| {
                        let d = offset(f);
                        let r = crate::tensor::norm(&d);
                        if r == 0.0 {
                            return [C64::default(); 6];
                        }
                        let (a, b) = match kind {
                            KernelKind::Magnetization => {
                                let (a, b) = hessian_coefficients(r, k);
                                (-a * w, -b * w)
                            }
                            KernelKind::NPrime => (C64::default(), phi_r(r, 0.0) * w),
                            KernelKind::Lse => {
                                let (a, b) = green_coefficients(r, k);
                                (a * w, b * w)
                            }
                            KernelKind::Newtonian => unreachable!(),
                        };
                        let u = [d[0] / r, d[1] / r, d[2] / r];
                        [
                            a + b * (u[0] * u[0]),
                            a + b * (u[1] * u[1]),
                            a + b * (u[2] * u[2]),
                            b * (u[0] * u[1]),
                            b * (u[0] * u[2]),
                            b * (u[1] * u[2]),
                        ]
                    })
                    .collect(),
            ),
        };
        let req = equivalent_radius(w);
        let self_coef = match kind {
            KernelKind::Newtonian => sphere_newtonian(k, req),
            KernelKind::Magnetization => sphere_depolarization(k, req),
            KernelKind::NPrime => C64::new(req * req / 6.0, 0.0),
            KernelKind::Lse => -sphere_depolarization(k, req) + sphere_newtonian(k, req) * (k * k),
        };
        let mut row_key = Vec::with_capacity(grid.len());
        let mut col_key = Vec::with_capacity(grid.len());
        for c in 0..grid.len() {
            let idx = grid.cell_index(c);
            row_key.push((idx[0] + n[0] - 1) * stride[0] + (idx[1] + n[1] - 1) * stride[1] + idx[2] + n[2] - 1);
            col_key.push(idx[0] * stride[0] + idx[1] * stride[1] + idx[2]);
        }
        Convolution { kind, k, stride, row_key, col_key, table, self_coef }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn cells(&self) -> usize {
        self.row_key.len()
    }

    pub fn self_coef(&self) -> C64 {
        self.self_coef
    }

    /// Off-diagonal 3×3 block (i ≠ j) as xx, yy, zz, xy, xz, yz; scalar
    /// kernels are returned as multiples of the identity.
    pub fn block(&self, i: usize, j: usize) -> [C64; 6] {
        let t = self.row_key[i] - self.col_key[j];
        match &self.table {
            Table::Scalar(v) => [v[t], v[t], v[t], C64::default(), C64::default(), C64::default()],
            Table::Dyadic(v) => v[t],
        }
    }

    #[allow(dead_code)]
    pub(crate) fn strides(&self) -> [usize; 2] {
        self.stride
    }

    fn row(&self, i: usize, x: &[C64]) -> [C64; 3] {
        let base = self.row_key[i];
        let mut acc = [C64::default(); 3];
        match &self.table {
            Table::Scalar(v) => {
                for (j, ck) in self.col_key.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let t = v[base - ck];
                    acc[0] += t * x[3 * j];
                    acc[1] += t * x[3 * j + 1];
                    acc[2] += t * x[3 * j + 2];
                }
            }
            Table::Dyadic(v) => {
                for (j, ck) in self.col_key.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let t = &v[base - ck];
                    let (a, b, c) = (x[3 * j], x[3 * j + 1], x[3 * j + 2]);
                    acc[0] += t[0] * a + t[3] * b + t[4] * c;
                    acc[1] += t[3] * a + t[1] * b + t[5] * c;
                    acc[2] += t[4] * a + t[5] * b + t[2] * c;
                }
            }
        }
        for (c, a) in acc.iter_mut().enumerate() {
            *a += self.self_coef * x[3 * i + c];
        }
        acc
    }

    /// Scalar field application (scalar kernels only).
    pub fn apply_scalar(&self, x: &[C64], y: &mut [C64]) {
        let Table::Scalar(v) = &self.table else {
            panic!("apply_scalar on a dyadic kernel");
        };
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let base = self.row_key[i];
            let mut acc = self.self_coef * x[i];
            for (j, ck) in self.col_key.iter().enumerate() {
                if j != i {
                    acc += v[base - ck] * x[j];
                }
            }
            *yi = acc;
        });
    }

    pub fn apply_field(&self, f: &GridField) -> GridField {
        let x = f.flat();
        let mut y = vec![C64::default(); x.len()];
        self.apply(&x, &mut y);
        GridField::from_flat(&y)
    }
}

impl LinearOperator for Convolution {
    fn dim(&self) -> usize {
        3 * self.cells()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.par_chunks_mut(3).enumerate().for_each(|(i, out)| out.copy_from_slice(&self.row(i, x)));
    }
}

pub fn newtonian_apply(field: &GridField, grid: &VolumeGrid, k: f64) -> GridField {
    Convolution::new(grid, KernelKind::Newtonian, k).apply_field(field)
}

pub fn magnetization_apply(field: &GridField, grid: &VolumeGrid, k: f64) -> GridField {
    Convolution::new(grid, KernelKind::Magnetization, k).apply_field(field)
}

pub fn nprime_apply(field: &GridField, grid: &VolumeGrid) -> GridField {
    Convolution::new(grid, KernelKind::NPrime, 0.0).apply_field(field)
}

/// Largest eigenvalue of the static scalar Newtonian matrix (symmetric
/// positive definite), by power iteration.
pub fn newtonian_norm(grid: &VolumeGrid) -> f64 {
    let op = Convolution::new(grid, KernelKind::Newtonian, 0.0);
    let n = grid.len();
    let mut x = vec![C64::new(1.0 / (n as f64).sqrt(), 0.0); n];
    let mut y = vec![C64::default(); n];
    let mut lam = 0.0;
    for _ in 0..500 {
        op.apply_scalar(&x, &mut y);
        let rq: f64 = x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum();
        let ny = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
        let done = (rq - lam).abs() <= 1e-13 * rq.abs();
        lam = rq;
        if done {
            break;
        }
    }
    lam
}

fn deriv(grid: &VolumeGrid, f: &GridField, c: usize, axis: usize, comp: usize) -> Option<C64> {
    let mut e = [0i64; 3];
    e[axis] = 1;
    let p = grid.neighbor(c, e)?;
    e[axis] = -1;
    let m = grid.neighbor(c, e)?;
    Some((f.values[p][comp] - f.values[m][comp]) / (2.0 * grid.spacing()[axis]))
}

/// Centred-difference divergence; `None` where a neighbour is missing.
pub fn divergence(grid: &VolumeGrid, f: &GridField) -> Vec<Option<C64>> {
    (0..grid.len())
        .map(|c| Some(deriv(grid, f, c, 0, 0)? + deriv(grid, f, c, 1, 1)? + deriv(grid, f, c, 2, 2)?))
        .collect()
}

/// Centred-difference curl; `None` where a neighbour is missing.
pub fn curl(grid: &VolumeGrid, f: &GridField) -> Vec<Option<CVec3>> {
    (0..grid.len())
        .map(|c| {
            Some(CVec3([
                deriv(grid, f, c, 1, 2)? - deriv(grid, f, c, 2, 1)?,
                deriv(grid, f, c, 2, 0)? - deriv(grid, f, c, 0, 2)?,
                deriv(grid, f, c, 0, 1)? - deriv(grid, f, c, 1, 0)?,
            ]))
        })
        .collect()
}

/// curl curl F = Σ_{b≠a} (∂_a∂_b F_b − ∂_b² F_a), compact second differences.
pub fn curl_curl(grid: &VolumeGrid, f: &GridField) -> Vec<Option<CVec3>> {
    let h = grid.spacing();
    let at = |c: usize, off: [i64; 3], comp: usize| grid.neighbor(c, off).map(|p| f.values[p][comp]);
    (0..grid.len())
        .map(|c| {
            let mut out = CVec3::ZERO;
            for a in 0..3 {
                for b in 0..3 {
                    if a == b {
                        continue;
                    }
                    let mut eb = [0i64; 3];
                    eb[b] = 1;
                    let mut ebm = [0i64; 3];
                    ebm[b] = -1;
                    let d2 = (at(c, eb, a)? - f.values[c][a] * 2.0 + at(c, ebm, a)?) / (h[b] * h[b]);
                    let off = |sa: i64, sb: i64| {
                        let mut o = [0i64; 3];
                        o[a] = sa;
                        o[b] = sb;
                        o
                    };
                    let mixed = (at(c, off(1, 1), b)? - at(c, off(1, -1), b)? - at(c, off(-1, 1), b)? + at(c, off(-1, -1), b)?)
                        / (4.0 * h[a] * h[b]);
                    out[a] += mixed - d2;
                }
            }
            Some(out)
        })
        .collect()
}
