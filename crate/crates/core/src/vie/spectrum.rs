//! Spectrum of the static discrete Magnetization operator.
//!
//! The k = 0 matrix is real symmetric and commutes with the reflections
//! through the grid's mid-planes, so on reflection-symmetric grids it splits
//! into eight parity blocks that are diagonalised independently.

use faer::{Mat, Side};
use rayon::prelude::*;
use serde::Serialize;

use super::operators::{Convolution, KernelKind};
use super::{GridField, VolumeGrid};
use crate::error::{Error, Result};
use crate::krylov::LinearOperator;
use crate::tensor::{CVec3, C64};

/// Highest polynomial degree in the harmonic-gradient trial space.
pub const HARMONIC_MAX_DEGREE: usize = 8;

/// Trial degree used at grid resolution n: coarse grids cannot carry
/// high-degree polynomials.
pub fn harmonic_degree(n: usize) -> usize {
    (n / 2).clamp(1, HARMONIC_MAX_DEGREE)
}

struct Sector {
    parity: Option<[u8; 3]>,
    /// Representative flat index (3·cell + component) and its projection norm.
    rep: Vec<(usize, f64)>,
    /// Normalised symmetric basis vectors as (flat index, coefficient) lists.
    orbit: Vec<Vec<(usize, f64)>>,
    values: Vec<f64>,
    vectors: Mat<f64>,
}

impl Sector {
    fn dim(&self) -> usize {
        self.rep.len()
    }

    fn lift(&self, y: &[f64], out: &mut [f64]) {
        for (b, coefs) in self.orbit.iter().enumerate() {
            for &(f, c) in coefs {
                out[f] += y[b] * c;
            }
        }
    }

    fn project(&self, x: &[C64]) -> Vec<C64> {
        self.orbit.iter().map(|coefs| coefs.iter().map(|&(f, c)| x[f] * c).sum()).collect()
    }
}

/// Ritz pair of ∇M on the harmonic-gradient trial space.
#[derive(Clone, Debug, Serialize)]
pub struct RitzValue {
    pub eigenvalue: f64,
    /// ‖∇M q − λq‖ for the unit Ritz vector q: how far the trial space is
    /// from being invariant.
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub resolution: usize,
    pub cells: usize,
    pub method: String,
    pub max_degree: usize,
    /// Filtered eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub ritz: Vec<RitzValue>,
    pub raw_min: f64,
    pub raw_max: f64,
    pub raw_count: usize,
}

/// Full eigendecomposition of the static discrete ∇M on a grid.
pub struct MagnetizationEigensystem {
    grid: VolumeGrid,
    sectors: Vec<Sector>,
}

fn entry(op: &Convolution, i: usize, ci: usize, j: usize, cj: usize) -> f64 {
    if i == j {
        return if ci == cj { op.self_coef().re } else { 0.0 };
    }
    const MAP: [[usize; 3]; 3] = [[0, 3, 4], [3, 1, 5], [4, 5, 2]];
    op.block(i, j)[MAP[ci][cj]].re
}

fn parity_sectors(grid: &VolumeGrid) -> Vec<Sector> {
    let dims = grid.dims();
    let reps: Vec<usize> = (0..grid.len())
        .filter(|&c| {
            let idx = grid.cell_index(c);
            (0..3).all(|a| 2 * idx[a] + 1 >= dims[a])
        })
        .collect();
    let mut out = Vec::with_capacity(8);
    for s in 0..8u8 {
        let sigma = [s & 1, (s >> 1) & 1, (s >> 2) & 1];
        let chi = |g: usize| -> f64 {
            let mut v = 1.0;
            for (a, &s) in sigma.iter().enumerate() {
                if g >> a & 1 == 1 && s == 1 {
                    v = -v;
                }
            }
            v
        };
        let mut rep = Vec::new();
        let mut orbit = Vec::new();
        for &r in &reps {
            let idx = grid.cell_index(r);
            for c in 0..3 {
                let gc = |g: usize| if g >> c & 1 == 1 { -1.0 } else { 1.0 };
                let mut n2 = 0.0;
                let mut terms = Vec::with_capacity(8);
                for g in 0..8 {
                    let m = grid.mirror(idx, g).expect("grid is reflection symmetric");
                    if m == r {
                        n2 += chi(g) * gc(g) / 8.0;
                    }
                    terms.push((3 * m + c, chi(g) * gc(g)));
                }
                if n2 < 1e-12 {
                    continue;
                }
                let n = n2.sqrt();
                // merge repeated targets, scale to unit norm
                let mut merged: Vec<(usize, f64)> = Vec::new();
                for (f, v) in terms {
                    match merged.iter_mut().find(|(g, _)| *g == f) {
                        Some(e) => e.1 += v,
                        None => merged.push((f, v)),
                    }
                }
                merged.retain(|(_, v)| v.abs() > 1e-12);
                for e in merged.iter_mut() {
                    e.1 /= 8.0 * n;
                }
                rep.push((3 * r + c, n));
                orbit.push(merged);
            }
        }
        out.push(Sector { parity: Some(sigma), rep, orbit, values: vec![], vectors: Mat::zeros(0, 0) });
    }
    out
}

fn trivial_sector(grid: &VolumeGrid) -> Sector {
    let n = 3 * grid.len();
    Sector {
        parity: None,
        rep: (0..n).map(|f| (f, 1.0)).collect(),
        orbit: (0..n).map(|f| vec![(f, 1.0)]).collect(),
        values: vec![],
        vectors: Mat::zeros(0, 0),
    }
}


fn monomials(l: usize) -> Vec<[usize; 3]> {
    let mut v = Vec::new();
    for a in (0..=l).rev() {
        for b in (0..=l - a).rev() {
            v.push([a, b, l - a - b]);
        }
    }
    v
}

/// Coefficient vectors (over `monomials(l)`) spanning the harmonic polynomials of degree l.
fn harmonic_polynomials(l: usize) -> Vec<Vec<f64>> {
    let mons = monomials(l);
    if l < 2 {
        return (0..mons.len()).map(|i| (0..mons.len()).map(|j| (i == j) as u8 as f64).collect()).collect();
    }
    let low = monomials(l - 2);
    let pos = |m: [usize; 3]| low.iter().position(|x| *x == m).unwrap();
    // Laplacian as a (low × mons) matrix
    let mut lap = Mat::<f64>::zeros(low.len(), mons.len());
    for (j, m) in mons.iter().enumerate() {
        for a in 0..3 {
            if m[a] >= 2 {
                let mut t = *m;
                t[a] -= 2;
                lap[(pos(t), j)] += (m[a] * (m[a] - 1)) as f64;
            }
        }
    }
    let gram = lap.transpose() * &lap;
    let evd = gram.self_adjoint_eigen(Side::Lower).expect("small symmetric eigenproblem");
    let s = evd.S().column_vector();
    let u = evd.U();
    (0..mons.len()).filter(|&c| s[c].abs() < 1e-9).map(|c| (0..mons.len()).map(|r| u[(r, c)]).collect()).collect()
}

/// Orthonormal basis (flat 3N vectors) of gradients of harmonic polynomials
/// of degree 1..=max_degree sampled at the cell centres.
pub fn harmonic_gradient_basis(grid: &VolumeGrid, max_degree: usize) -> Vec<Vec<f64>> {
    let c0 = grid.domain().center();
    let r = 0.5 * grid.domain().diameter();
    let pts: Vec<[f64; 3]> =
        grid.cells().iter().map(|c| std::array::from_fn(|a| (c.center[a] - c0[a]) / r)).collect();
    let pw = |x: f64, e: usize| if e == 0 { 1.0 } else { x.powi(e as i32) };
    let mut raw: Vec<Vec<f64>> = Vec::new();
    for l in 1..=max_degree {
        let mons = monomials(l);
        for coef in harmonic_polynomials(l) {
            let mut v = vec![0.0; 3 * pts.len()];
            for (i, p) in pts.iter().enumerate() {
                for (m, &cm) in mons.iter().zip(&coef) {
                    if cm == 0.0 {
                        continue;
                    }
                    for a in 0..3 {
                        if m[a] == 0 {
                            continue;
                        }
                        let mut g = cm * m[a] as f64;
                        for b in 0..3 {
                            g *= pw(p[b], if a == b { m[b] - 1 } else { m[b] });
                        }
                        v[3 * i + a] += g;
                    }
                }
            }
            raw.push(v);
        }
    }
    // orthonormalise through the Gram matrix
    let k = raw.len();
    let gram = Mat::from_fn(k, k, |i, j| raw[i].iter().zip(&raw[j]).map(|(x, y)| x * y).sum::<f64>());
    let evd = gram.self_adjoint_eigen(Side::Lower).expect("Gram matrix is symmetric");
    let s = evd.S().column_vector();
    let smax = s.iter().fold(0.0f64, |m, x| m.max(*x));
    let u = evd.U();
    (0..k)
        .filter(|&c| s[c] > 1e-12 * smax)
        .map(|c| {
            let mut q = vec![0.0; raw[0].len()];
            for (i, ri) in raw.iter().enumerate() {
                let w = u[(i, c)] / s[c].sqrt();
                for (qv, rv) in q.iter_mut().zip(ri) {
                    *qv += w * rv;
                }
            }
            q
        })
        .collect()
}

impl MagnetizationEigensystem {
    pub fn compute(grid: &VolumeGrid) -> Result<Self> {
        Self::compute_with(grid, grid.is_reflection_symmetric())
    }

    /// `reduce = false` forces one dense block over all unknowns.
    pub fn compute_with(grid: &VolumeGrid, reduce: bool) -> Result<Self> {
        if reduce && !grid.is_reflection_symmetric() {
            return Err(Error::InvalidInput("parity reduction needs a reflection-symmetric grid".into()));
        }
        let op = Convolution::new(grid, KernelKind::Magnetization, 0.0);
        let mut sectors = if reduce { parity_sectors(grid) } else { vec![trivial_sector(grid)] };
        for s in sectors.iter_mut() {
            let m = s.dim();
            if m == 0 {
                continue;
            }
            let rows: Vec<Vec<f64>> = (0..m)
                .into_par_iter()
                .map(|a| {
                    let (fa, na) = s.rep[a];
                    let (i, ci) = (fa / 3, fa % 3);
                    (0..m)
                        .map(|b| {
                            s.orbit[b].iter().map(|&(f, c)| entry(&op, i, ci, f / 3, f % 3) * c).sum::<f64>() / na
                        })
                        .collect()
                })
                .collect();
            // symmetrise away rounding before the symmetric solver
            let mat = Mat::from_fn(m, m, |a, b| 0.5 * (rows[a][b] + rows[b][a]));
            drop(rows);
            let evd = mat
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Domain(format!("eigensolver failed: {e:?}")))?;
            s.values = evd.S().column_vector().iter().copied().collect();
            s.vectors = evd.U().to_owned();
        }
        Ok(MagnetizationEigensystem { grid: grid.clone(), sectors })
    }

    pub fn grid(&self) -> &VolumeGrid {
        &self.grid
    }

    pub fn is_parity_reduced(&self) -> bool {
        self.sectors.len() > 1
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.sectors.iter().flat_map(|s| s.values.iter().copied()).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    /// (sector, column) pairs in ascending eigenvalue order.
    pub fn modes(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> =
            self.sectors.iter().enumerate().flat_map(|(s, sec)| (0..sec.values.len()).map(move |c| (s, c))).collect();
        v.sort_by(|a, b| self.value(*a).total_cmp(&self.value(*b)));
        v
    }

    pub fn value(&self, mode: (usize, usize)) -> f64 {
        self.sectors[mode.0].values[mode.1]
    }

    pub fn parity(&self, mode: (usize, usize)) -> Option<[u8; 3]> {
        self.sectors[mode.0].parity
    }

    /// Eigenvector as a grid field, unit Euclidean norm over the flat vector.
    pub fn vector(&self, mode: (usize, usize)) -> GridField {
        let s = &self.sectors[mode.0];
        let y: Vec<f64> = (0..s.dim()).map(|b| s.vectors[(b, mode.1)]).collect();
        let mut out = vec![0.0; 3 * self.grid.len()];
        s.lift(&y, &mut out);
        GridField { values: out.chunks(3).map(|c| CVec3::from_real([c[0], c[1], c[2]])).collect() }
    }

    /// Rayleigh-Ritz values of ∇M on the gradients of harmonic polynomials
    /// of degree 1..=max_degree, ascending.
    pub fn harmonic_ritz(&self, max_degree: usize) -> Vec<RitzValue> {
        let q = harmonic_gradient_basis(&self.grid, max_degree);
        let m = q.len();
        let aq: Vec<Vec<f64>> = q
            .par_iter()
            .map(|v| {
                let x: Vec<C64> = v.iter().map(|&r| C64::new(r, 0.0)).collect();
                self.apply_function(&x, |l| C64::new(l, 0.0)).iter().map(|z| z.re).collect()
            })
            .collect();
        let dotp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let b = Mat::from_fn(m, m, |i, j| 0.5 * (dotp(&q[i], &aq[j]) + dotp(&q[j], &aq[i])));
        let evd = match b.self_adjoint_eigen(Side::Lower) {
            Ok(e) => e,
            Err(_) => return vec![],
        };
        let s = evd.S().column_vector();
        let u = evd.U();
        let mut out: Vec<RitzValue> = (0..m)
            .map(|c| {
                let lam = s[c];
                let mut r = vec![0.0; q[0].len()];
                for i in 0..m {
                    let w = u[(i, c)];
                    for ((rv, a), b) in r.iter_mut().zip(&aq[i]).zip(&q[i]) {
                        *rv += w * (a - lam * b);
                    }
                }
                RitzValue { eigenvalue: lam, residual: dotp(&r, &r).sqrt() }
            })
            .collect();
        out.sort_by(|a, b| a.eigenvalue.total_cmp(&b.eigenvalue));
        out
    }

    /// Spectrum restricted to the harmonic-gradient subspace, kept in (0, 1);
    /// `count = 0` keeps all.
    pub fn report(&self, count: usize) -> SpectrumReport {
        let all = self.eigenvalues();
        let max_degree = harmonic_degree(self.grid.resolution());
        let mut ritz: Vec<RitzValue> =
            self.harmonic_ritz(max_degree).into_iter().filter(|r| r.eigenvalue > 0.0 && r.eigenvalue < 1.0).collect();
        if count > 0 {
            ritz.truncate(count);
        }
        SpectrumReport {
            resolution: self.grid.resolution(),
            cells: self.grid.len(),
            method: if self.is_parity_reduced() { "parity-reduced".into() } else { "dense".into() },
            max_degree,
            eigenvalues: ritz.iter().map(|t| t.eigenvalue).collect(),
            ritz,
            raw_min: all.first().copied().unwrap_or(f64::NAN),
            raw_max: all.last().copied().unwrap_or(f64::NAN),
            raw_count: all.len(),
        }
    }

    /// Applies f(A) = V diag(f(λ)) Vᵀ to a complex vector.
    pub fn apply_function(&self, x: &[C64], f: impl Fn(f64) -> C64 + Sync) -> Vec<C64> {
        let parts: Vec<Vec<C64>> = self
            .sectors
            .par_iter()
            .map(|s| {
                let m = s.dim();
                let mut out = vec![C64::default(); x.len()];
                if m == 0 {
                    return out;
                }
                let y = s.project(x);
                // z = V diag(f) Vᵀ y
                let mut c = vec![C64::default(); m];
                for (col, cv) in c.iter_mut().enumerate() {
                    let mut acc = C64::default();
                    for (b, yb) in y.iter().enumerate() {
                        acc += yb * s.vectors[(b, col)];
                    }
                    *cv = acc * f(s.values[col]);
                }
                let mut z = vec![C64::default(); m];
                for (col, cv) in c.iter().enumerate() {
                    for (b, zb) in z.iter_mut().enumerate() {
                        *zb += cv * s.vectors[(b, col)];
                    }
                }
                for (b, coefs) in s.orbit.iter().enumerate() {
                    for &(f, cf) in coefs {
                        out[f] += z[b] * cf;
                    }
                }
                out
            })
            .collect();
        let mut out = vec![C64::default(); x.len()];
        for p in parts {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }
}

/// Right preconditioner (I + c·∇M)⁻¹ built from the eigensystem.
pub struct SpectralPreconditioner<'a> {
    pub system: &'a MagnetizationEigensystem,
    pub factor: C64,
}

impl LinearOperator for SpectralPreconditioner<'_> {
    fn dim(&self) -> usize {
        3 * self.system.grid.len()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let c = self.factor;
        let v = self.system.apply_function(x, |l| 1.0 / (1.0 + c * l));
        y.copy_from_slice(&v);
    }
}

pub fn magnetization_spectrum(grid: &VolumeGrid, count: usize) -> Result<SpectrumReport> {
    if grid.resolution() < 2 {
        return Err(Error::InvalidInput("spectrum needs a grid resolution of at least 2".into()));
    }
    Ok(MagnetizationEigensystem::compute(grid)?.report(count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainShape;

    #[test]
    fn parity_blocks_reproduce_dense_spectrum() {
        let g = VolumeGrid::new(&DomainShape::Box { center: [0.0; 3], extents: [1.0, 0.8, 0.6] }, 5).unwrap();
        let sys = MagnetizationEigensystem::compute(&g).unwrap();
        assert!(sys.is_parity_reduced());
        let op = Convolution::new(&g, KernelKind::Magnetization, 0.0);
        let n = 3 * g.len();
        let dense = Mat::from_fn(n, n, |a, b| entry(&op, a / 3, a % 3, b / 3, b % 3));
        let full = dense.self_adjoint_eigenvalues(Side::Lower).unwrap();
        let mine = sys.eigenvalues();
        assert_eq!(mine.len(), full.len());
        for (a, b) in mine.iter().zip(&full) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        // eigenvector check: A v = λ v
        let mode = sys.modes()[n / 2];
        let v = sys.vector(mode).flat();
        let mut av = vec![C64::default(); n];
        op.apply(&v, &mut av);
        let lam = sys.value(mode);
        let err: f64 = av.iter().zip(&v).map(|(a, b)| (a - b * lam).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-10);
        assert!((crate::krylov::norm2(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn preconditioner_inverts_shifted_operator() {
        let g = VolumeGrid::new(&DomainShape::unit_ball(), 6).unwrap();
        let sys = MagnetizationEigensystem::compute(&g).unwrap();
        let op = Convolution::new(&g, KernelKind::Magnetization, 0.0);
        let c = C64::new(-0.7, 0.1);
        let p = SpectralPreconditioner { system: &sys, factor: c };
        let n = 3 * g.len();
        let x: Vec<C64> = (0..n).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let mut px = vec![C64::default(); n];
        p.apply(&x, &mut px);
        let mut apx = vec![C64::default(); n];
        op.apply(&px, &mut apx);
        let err: f64 = (0..n).map(|i| (px[i] + c * apx[i] - x[i]).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-10 * crate::krylov::norm2(&x));
    }

    #[test]
    fn dense_path_agrees_with_reduction() {
        let g = VolumeGrid::new(&DomainShape::unit_ball(), 6).unwrap();
        let a = MagnetizationEigensystem::compute_with(&g, false).unwrap();
        let b = MagnetizationEigensystem::compute(&g).unwrap();
        assert!(!a.is_parity_reduced());
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            assert!((x - y).abs() < 1e-10);
        }
        let r = a.report(0);
        assert_eq!(r.raw_count, 3 * g.len());
        assert!(r.eigenvalues.iter().all(|l| *l > 0.0 && *l < 1.0));
    }

    #[test]
    fn harmonic_basis_is_orthonormal_with_full_dimension() {
        let g = VolumeGrid::new(&DomainShape::unit_ball(), 8).unwrap();
        for l in 1..=4 {
            assert_eq!(harmonic_polynomials(l).len(), 2 * l + 1);
        }
        let q = harmonic_gradient_basis(&g, 4);
        assert_eq!(q.len(), 4 * 4 + 2 * 4);
        for i in 0..q.len() {
            for j in 0..q.len() {
                let d: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
                assert!((d - (i == j) as u8 as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_field_ritz_value_near_one_third() {
        let g = VolumeGrid::new(&DomainShape::unit_ball(), 10).unwrap();
        let sys = MagnetizationEigensystem::compute(&g).unwrap();
        let r = sys.harmonic_ritz(1);
        assert_eq!(r.len(), 3);
        for v in r {
            assert!((v.eigenvalue - 1.0 / 3.0).abs() < 0.03, "{}", v.eigenvalue);
        }
    }
}
