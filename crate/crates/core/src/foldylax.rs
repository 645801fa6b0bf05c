//! Point-interaction (Foldy-Lax) system for the cluster and its far field.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cluster, ScaleSet};
use crate::krylov::{gmres, relative_residual, GmresOptions, LinearOperator};
use crate::tensor::{cross, dot, dyadic_green_offset, norm, sub, CVec3, Dyadic, Point, C64, I};

/// Largest system (3ℵ) solved by dense LU.
pub const DENSE_LIMIT: usize = 3000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncidentWave {
    k: f64,
    theta: Point,
    p: Point,
}

impl IncidentWave {
    pub fn new(k: f64, theta: Point, p: Point) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::InvalidInput(format!("wavenumber must be finite and non-negative (got {k})")));
        }
        if (norm(&theta) - 1.0).abs() > 1e-9 {
            return Err(Error::config("theta", format!("theta must be a unit vector (|theta| = {})", norm(&theta))));
        }
        if (norm(&p) - 1.0).abs() > 1e-9 {
            return Err(Error::config("p", format!("p must be a unit vector (|p| = {})", norm(&p))));
        }
        if dot(&theta, &p).abs() > 1e-9 {
            return Err(Error::config("p", format!("theta and p must be orthogonal (theta·p = {})", dot(&theta, &p))));
        }
        Ok(IncidentWave { k, theta, p })
    }

    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn theta(&self) -> Point {
        self.theta
    }
    pub fn p(&self) -> Point {
        self.p
    }

    /// Same direction and polarisation at another wavenumber.
    pub fn with_k(&self, k: f64) -> Result<Self> {
        IncidentWave::new(k, self.theta, self.p)
    }

    fn phase(&self, x: &Point) -> C64 {
        C64::from_polar(1.0, self.k * dot(&self.theta, x))
    }

    pub fn electric(&self, x: &Point) -> CVec3 {
        CVec3::from_real(self.p) * self.phase(x)
    }

    /// H^Inc(x) = (θ×p) e^{ikθ·x}.
    pub fn magnetic(&self, x: &Point) -> CVec3 {
        CVec3::from_real(cross(&self.theta, &self.p)) * self.phase(x)
    }
}

pub fn incident_magnetic(wave: &IncidentWave, x: &Point) -> CVec3 {
    wave.magnetic(x)
}

/// k²|η|a⁵|P₀| / (d³|1 − k²ηa²λ|); the system is uniquely solvable by
/// Neumann series when this is below one.
pub fn invertibility_margin(scales: &ScaleSet, p0: &Dyadic) -> Result<f64> {
    let den = scales.frequency_offset().abs();
    if den <= f64::EPSILON {
        return Err(Error::Degenerate("1 − k²ηa²λ vanishes (resonant frequency)".into()));
    }
    let s = scales;
    Ok(s.k * s.k * s.eta.abs() * s.a.powi(5) * p0.spectral_norm() / (s.d.powi(3) * den))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Unknowns Q_m, coupling P₀·Υ_k.
    QForm,
    /// Unknowns U_m = ±c₀a^{h−5}P₀⁻¹Q_m, coupling Υ_k·P₀.
    UForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Auto,
    Dense,
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub solver: SolverChoice,
    pub gmres: GmresOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { solver: SolverChoice::Auto, gmres: GmresOptions::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Dense,
    Iterative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldyLaxSolution {
    pub vectors: Vec<CVec3>,
    pub residual: f64,
    pub variant: Variant,
    pub method: SolveMethod,
    pub iterations: usize,
    pub margin: f64,
    /// Set when the margin is ≥ 1, i.e. outside the sufficient condition.
    pub margin_warning: bool,
}

/// X_m − α Σ_{j≠m} B(z_m,z_j) X_j, with B = P₀Υ_k or Υ_kP₀.
pub struct FoldyLaxOperator<'a> {
    centers: &'a [Point],
    k: f64,
    alpha: C64,
    p0: Dyadic,
    variant: Variant,
}

impl<'a> FoldyLaxOperator<'a> {
    pub fn new(cluster: &'a Cluster, scales: &ScaleSet, p0: &Dyadic, variant: Variant) -> Self {
        let s = scales;
        let alpha = C64::from(s.eta * s.k * s.k * s.a.powf(5.0 - s.h) / (s.sign.value() * s.c0));
        FoldyLaxOperator { centers: &cluster.centers, k: s.k, alpha, p0: *p0, variant }
    }

    fn block(&self, m: usize, j: usize) -> Dyadic {
        let d = sub(&self.centers[m], &self.centers[j]);
        let g = dyadic_green_offset(&d, norm(&d), self.k);
        match self.variant {
            Variant::QForm => self.p0.matmul(&g),
            Variant::UForm => g.matmul(&self.p0),
        }
    }

    fn row(&self, m: usize, x: &[C64]) -> [C64; 3] {
        let mut acc = CVec3::ZERO;
        for j in 0..self.centers.len() {
            if j == m {
                continue;
            }
            let xj = CVec3([x[3 * j], x[3 * j + 1], x[3 * j + 2]]);
            acc += self.block(m, j).apply(&xj);
        }
        let xm = CVec3([x[3 * m], x[3 * m + 1], x[3 * m + 2]]);
        (xm - acc * self.alpha).0
    }

    fn dense(&self) -> Mat<C64> {
        let n = self.centers.len();
        let blocks: Vec<Vec<Dyadic>> = (0..n)
            .into_par_iter()
            .map(|m| (0..n).map(|j| if m == j { Dyadic::ZERO } else { self.block(m, j) }).collect())
            .collect();
        Mat::from_fn(3 * n, 3 * n, |r, c| {
            let (m, a) = (r / 3, r % 3);
            let (j, b) = (c / 3, c % 3);
            let id = if r == c { C64::new(1.0, 0.0) } else { C64::default() };
            id - self.alpha * blocks[m][j].0[a][b]
        })
    }
}

impl LinearOperator for FoldyLaxOperator<'_> {
    fn dim(&self) -> usize {
        3 * self.centers.len()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.par_chunks_mut(3).enumerate().for_each(|(m, out)| {
            out.copy_from_slice(&self.row(m, x));
        });
    }
}

fn rhs(cluster: &Cluster, scales: &ScaleSet, p0: &Dyadic, wave: &IncidentWave, variant: Variant) -> Vec<C64> {
    let s = scales;
    let mut b = Vec::with_capacity(3 * cluster.len());
    for z in &cluster.centers {
        let h = wave.magnetic(z);
        let v = match variant {
            Variant::QForm => p0.apply(&h) * (I * s.k * s.a.powf(5.0 - s.h) / (s.sign.value() * s.c0)),
            Variant::UForm => h * (I * s.k),
        };
        b.extend_from_slice(&v.0);
    }
    b
}

pub fn dense_solve(a: Mat<C64>, b: &[C64]) -> Vec<C64> {
    let n = b.len();
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let x = a.partial_piv_lu().solve(&rhs);
    (0..n).map(|i| x[(i, 0)]).collect()
}

pub fn assemble_and_solve(cluster: &Cluster, scales: &ScaleSet, p0: &Dyadic, wave: &IncidentWave) -> Result<FoldyLaxSolution> {
    solve_with(cluster, scales, p0, wave, Variant::QForm, &SolveOptions::default())
}

pub fn solve_with(
    cluster: &Cluster,
    scales: &ScaleSet,
    p0: &Dyadic,
    wave: &IncidentWave,
    variant: Variant,
    opts: &SolveOptions,
) -> Result<FoldyLaxSolution> {
    if (wave.k() - scales.k).abs() > 1e-12 * scales.k.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "incident wavenumber {} differs from the scale-set wavenumber {}",
            wave.k(),
            scales.k
        )));
    }
    if cluster.is_empty() {
        return Err(Error::EmptyCluster { d: cluster.d });
    }
    let margin = invertibility_margin(scales, p0)?;
    let op = FoldyLaxOperator::new(cluster, scales, p0, variant);
    let b = rhs(cluster, scales, p0, wave, variant);
    let dense = match opts.solver {
        SolverChoice::Auto => op.dim() <= DENSE_LIMIT,
        SolverChoice::Dense => true,
        SolverChoice::Iterative => false,
    };
    let (x, method, iterations) = if dense {
        (dense_solve(op.dense(), &b), SolveMethod::Dense, 0)
    } else {
        let out = gmres(&op, &b, None, None, &opts.gmres);
        if !out.converged {
            return Err(Error::SolverFailure {
                reason: format!("GMRES stalled at relative residual {:e} after {} iterations", out.residual, out.iterations),
                margin,
            });
        }
        (out.x, SolveMethod::Iterative, out.iterations)
    };
    let residual = relative_residual(&op, &x, &b);
    let bound = if dense { 1e-10 } else { opts.gmres.tol.max(1e-10) * 10.0 };
    if !residual.is_finite() || residual > bound {
        return Err(Error::SolverFailure { reason: format!("relative residual {residual:e} (system near singular)"), margin });
    }
    Ok(FoldyLaxSolution {
        vectors: x.chunks(3).map(|c| CVec3([c[0], c[1], c[2]])).collect(),
        residual,
        variant,
        method,
        iterations,
        margin,
        margin_warning: margin >= 1.0,
    })
}

/// Residual of `vectors` in the given variant's system.
pub fn system_residual(
    cluster: &Cluster,
    scales: &ScaleSet,
    p0: &Dyadic,
    wave: &IncidentWave,
    variant: Variant,
    vectors: &[CVec3],
) -> f64 {
    let op = FoldyLaxOperator::new(cluster, scales, p0, variant);
    let b = rhs(cluster, scales, p0, wave, variant);
    let x: Vec<C64> = vectors.iter().flat_map(|v| v.0).collect();
    relative_residual(&op, &x, &b)
}

fn u_factor(scales: &ScaleSet) -> f64 {
    scales.sign.value() * scales.c0 * scales.a.powf(scales.h - 5.0)
}

/// U_m = ±c₀a^{h−5}P₀⁻¹Q_m.
pub fn q_to_u(q: &[CVec3], scales: &ScaleSet, p0: &Dyadic) -> Result<Vec<CVec3>> {
    let inv = p0.inverse().ok_or_else(|| Error::Degenerate("P0 is singular; the U-form is undefined".into()))?;
    let f = u_factor(scales);
    Ok(q.iter().map(|v| inv.apply(v) * f).collect())
}

pub fn u_to_q(u: &[CVec3], scales: &ScaleSet, p0: &Dyadic) -> Vec<CVec3> {
    let f = 1.0 / u_factor(scales);
    u.iter().map(|v| p0.apply(v) * f).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarFieldSamples {
    pub directions: Vec<Point>,
    pub values: Vec<CVec3>,
}

impl FarFieldSamples {
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// max over directions of |x̂·E| / |E| (0 where E vanishes).
    pub fn transversality_defect(&self) -> f64 {
        self.directions
            .iter()
            .zip(&self.values)
            .map(|(d, v)| {
                let n = v.norm();
                if n == 0.0 {
                    0.0
                } else {
                    v.dot_real(d).norm() / n
                }
            })
            .fold(0.0, f64::max)
    }

    /// Sup and RMS of |E − other| over the shared directions.
    pub fn difference(&self, other: &FarFieldSamples) -> (f64, f64) {
        let diffs: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| (*a - *b).norm()).collect();
        let sup = diffs.iter().cloned().fold(0.0, f64::max);
        let l2 = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len().max(1) as f64).sqrt();
        (sup, l2)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x1,x2,x3,re_e1,im_e1,re_e2,im_e2,re_e3,im_e3\n");
        for (d, v) in self.directions.iter().zip(&self.values) {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                d[0], d[1], d[2], v[0].re, v[0].im, v[1].re, v[1].im, v[2].re, v[2].im
            ));
        }
        s
    }
}

/// Cluster far field
///   E∞(x̂) = (ik³η/4π) Σ_m e^{−ikx̂·z_m} x̂ × Q_m.
/// The overall sign is the one for which this agrees with the effective
/// far field ±(ikξ/4π)∫e^{−ikx̂·z} x̂×(T·H) dz as the cluster is refined.
pub fn cluster_far_field(
    solution: &FoldyLaxSolution,
    cluster: &Cluster,
    scales: &ScaleSet,
    directions: &[Point],
) -> Result<FarFieldSamples> {
    if solution.variant != Variant::QForm {
        return Err(Error::InvalidInput("far field expects Q-form vectors".into()));
    }
    if solution.vectors.len() != cluster.len() {
        return Err(Error::InvalidInput("solution length does not match the cluster".into()));
    }
    let k = scales.k;
    let pre = I * (k.powi(3) * scales.eta / (4.0 * PI));
    let values = directions
        .iter()
        .map(|xh| {
            let mut acc = CVec3::ZERO;
            for (z, q) in cluster.centers.iter().zip(&solution.vectors) {
                acc += *q * C64::from_polar(1.0, -k * dot(xh, z));
            }
            CVec3::cross_from_real(xh, &acc) * pre
        })
        .collect();
    Ok(FarFieldSamples { directions: directions.to_vec(), values })
}

/// 6 axes, 8 body diagonals and 12 edge midpoints, normalised.
pub fn standard_directions() -> Vec<Point> {
    let mut out = Vec::with_capacity(26);
    for i in -1i32..=1 {
        for j in -1i32..=1 {
            for l in -1i32..=1 {
                if i == 0 && j == 0 && l == 0 {
                    continue;
                }
                let v = [i as f64, j as f64, l as f64];
                let n = norm(&v);
                out.push([v[0] / n, v[1] / n, v[2] / n]);
            }
        }
    }
    out
}

/// The standard 26 plus 26 Fibonacci-lattice directions.
pub fn doubled_directions() -> Vec<Point> {
    let mut out = standard_directions();
    let golden = PI * (3.0 - 5f64.sqrt());
    let n = 26;
    for i in 0..n {
        let z = 1.0 - (2 * i + 1) as f64 / n as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        out.push([r * phi.cos(), r * phi.sin(), z]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::{ball_moments, p0_ball, p0_from_moments};
    use crate::geometry::{derive_scales, generate_cluster, DomainShape, Sign};

    fn setup(d_over: f64) -> (ScaleSet, IncidentWave) {
        let s = derive_scales(0.01, 0.9, 1.0, 1.0, Sign::Lower, 2.0, 0.1).unwrap();
        let s = ScaleSet { d: s.d * d_over, ..s };
        let w = IncidentWave::new(s.k, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]).unwrap();
        (s, w)
    }

    #[test]
    fn wave_validation_and_values() {
        let w = IncidentWave::new(2.0, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]).unwrap();
        let h0 = incident_magnetic(&w, &[0.0; 3]);
        assert!((h0 - CVec3::from_real([0.0, 1.0, 0.0])).norm() < 1e-15);
        let h1 = incident_magnetic(&w, &[0.0, 0.0, PI / 2.0]);
        assert!((h1 - CVec3::from_real([0.0, -1.0, 0.0])).norm() < 1e-15);
        let s = 0.1f64;
        let p = [(1.0 - s * s).sqrt(), 0.0, s];
        assert!(IncidentWave::new(1.0, [0.0, 0.0, 1.0], p).is_err());
        assert!(IncidentWave::new(1.0, [0.0, 0.0, 2.0], [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn margin_matches_scalar_evaluation() {
        let s = derive_scales(0.01, 0.9, 1.0, 1.0, Sign::Lower, 2.0, 0.1).unwrap();
        let m = invertibility_margin(&s, &p0_ball()).unwrap();
        // independent scalar evaluation
        let a: f64 = 0.01;
        let k2 = (1.0 + a.powf(0.9)) / 0.1;
        let eta = 1.0 / (a * a);
        let d3 = 8.0 * a.powf(2.1);
        let want = k2 * eta * a.powi(5) * (12.0 / PI.powi(3)) / (d3 * (1.0 - k2 * eta * a * a * 0.1).abs());
        assert!((m - want).abs() <= 1e-12 * want);
        let zero = ScaleSet { eta: 0.0, ..s };
        assert_eq!(invertibility_margin(&zero, &p0_ball()).unwrap(), 0.0);
    }

    #[test]
    fn single_particle_is_analytic() {
        let (s, w) = setup(1.0);
        let c = Cluster { domain: DomainShape::unit_box(), d: s.d, centers: vec![[0.1, 0.2, -0.3]] };
        let p0 = p0_ball();
        let sol = assemble_and_solve(&c, &s, &p0, &w).unwrap();
        let want = p0.apply(&w.magnetic(&c.centers[0])) * (I * s.k * s.a.powf(5.0 - s.h) / (-s.c0));
        assert!((sol.vectors[0] - want).norm() <= 1e-12 * want.norm());
        let ff = cluster_far_field(&sol, &c, &s, &standard_directions()).unwrap();
        for (xh, v) in ff.directions.iter().zip(&ff.values) {
            let mag = s.k.powi(3) * s.eta / (4.0 * PI) * CVec3::cross_from_real(xh, &sol.vectors[0]).norm();
            assert!((v.norm() - mag).abs() <= 1e-12 * mag);
        }
    }

    #[test]
    fn symmetric_pair_has_equal_moments() {
        let (s, w) = setup(1.0);
        // separation along x, θ = z: both particles see the same incident phase
        let c = Cluster { domain: DomainShape::unit_box(), d: s.d, centers: vec![[-0.1, 0.0, 0.0], [0.1, 0.0, 0.0]] };
        let sol = assemble_and_solve(&c, &s, &p0_ball(), &w).unwrap();
        assert!((sol.vectors[0] - sol.vectors[1]).norm() <= 1e-10 * sol.vectors[0].norm());
    }

    #[test]
    fn dense_and_iterative_agree() {
        let (s, w) = setup(1.0);
        let c = generate_cluster(&DomainShape::unit_box(), 0.25).unwrap();
        let s = ScaleSet { d: 0.25, ..s };
        let p0 = p0_ball();
        let a = solve_with(&c, &s, &p0, &w, Variant::QForm, &SolveOptions { solver: SolverChoice::Dense, ..Default::default() })
            .unwrap();
        let b = solve_with(&c, &s, &p0, &w, Variant::QForm, &SolveOptions { solver: SolverChoice::Iterative, ..Default::default() })
            .unwrap();
        assert!(a.residual <= 1e-10 && b.residual <= 1e-8);
        let err: f64 = a.vectors.iter().zip(&b.vectors).map(|(x, y)| (*x - *y).norm()).fold(0.0, f64::max);
        let mag = a.vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err <= 1e-8 * mag);
    }

    #[test]
    fn u_form_is_equivalent_for_anisotropic_p0() {
        let (s, w) = setup(1.0);
        let c = generate_cluster(&DomainShape::unit_box(), 0.25).unwrap();
        let s = ScaleSet { d: 0.25, ..s };
        let mut m = ball_moments();
        m[1] = m[1].scale(1.7.into());
        m[0] += CVec3::from_real([0.0, 0.05, 0.02]);
        let p0 = p0_from_moments(&m).unwrap();
        let q = solve_with(&c, &s, &p0, &w, Variant::QForm, &SolveOptions::default()).unwrap();
        let u = solve_with(&c, &s, &p0, &w, Variant::UForm, &SolveOptions::default()).unwrap();
        let u_from_q = q_to_u(&q.vectors, &s, &p0).unwrap();
        assert!(system_residual(&c, &s, &p0, &w, Variant::UForm, &u_from_q) <= 1e-10);
        let q_from_u = u_to_q(&u.vectors, &s, &p0);
        let err: f64 = q.vectors.iter().zip(&q_from_u).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
        let mag = q.vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err <= 1e-10 * mag, "{err:e}");
    }

    #[test]
    fn far_field_is_linear_and_transverse() {
        let (s, w) = setup(1.0);
        let c = generate_cluster(&DomainShape::unit_box(), 0.5).unwrap();
        let s = ScaleSet { d: 0.5, ..s };
        let sol = assemble_and_solve(&c, &s, &p0_ball(), &w).unwrap();
        let ff = cluster_far_field(&sol, &c, &s, &doubled_directions()).unwrap();
        assert!(ff.transversality_defect() <= 1e-12);
        // doubling the source doubles the response
        let doubled: Vec<CVec3> = sol.vectors.iter().map(|v| *v * 2.0).collect();
        let sol2 = FoldyLaxSolution { vectors: doubled, ..sol.clone() };
        let ff2 = cluster_far_field(&sol2, &c, &s, &doubled_directions()).unwrap();
        for (a, b) in ff.values.iter().zip(&ff2.values) {
            assert!((*a * 2.0 - *b).norm() <= 1e-12 * b.norm().max(1e-300));
        }
    }

    #[test]
    fn direction_sets() {
        let d = standard_directions();
        assert_eq!(d.len(), 26);
        assert!(d.iter().all(|v| (norm(v) - 1.0).abs() < 1e-15));
        let dd = doubled_directions();
        assert_eq!(dd.len(), 52);
        assert!(dd.iter().all(|v| (norm(v) - 1.0).abs() < 1e-14));
    }

    #[test]
    fn csv_has_one_row_per_direction() {
        let f = FarFieldSamples { directions: standard_directions(), values: vec![CVec3::ZERO; 26] };
        assert_eq!(f.to_csv().lines().count(), 27);
    }
}
