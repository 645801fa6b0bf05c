//! Periodic cluster construction, the asymptotic scale relations and the
//! particle-counting diagnostics.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dot, norm, sub, Point};

/// Exclusive lower bound of the admissible exponent h.
pub const H_MIN: f64 = 9.0 / 11.0;
/// Exclusive upper bound of h.
pub const H_MAX: f64 = 1.0;

/// Branch of the frequency offset `1 − k²ηa²λ = ±c₀aʰ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Upper,
    Lower,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Upper => 1.0,
            Sign::Lower => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Sign::Upper => "upper",
            Sign::Lower => "lower",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainShape {
    Box { center: Point, extents: Point },
    Ball { center: Point, radius: f64 },
}

impl DomainShape {
    pub fn unit_box() -> Self {
        DomainShape::Box { center: [0.0; 3], extents: [1.0; 3] }
    }

    pub fn unit_ball() -> Self {
        DomainShape::Ball { center: [0.0; 3], radius: 1.0 }
    }

    /// Ball of unit volume centred at the origin.
    pub fn unit_volume_ball() -> Self {
        DomainShape::Ball { center: [0.0; 3], radius: (3.0 / (4.0 * PI)).cbrt() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            DomainShape::Box { center, extents } => {
                center.iter().all(|c| c.is_finite()) && extents.iter().all(|e| e.is_finite() && *e > 0.0)
            }
            DomainShape::Ball { center, radius } => center.iter().all(|c| c.is_finite()) && radius.is_finite() && *radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("domain must have finite center and positive size: {self:?}")))
        }
    }

    pub fn center(&self) -> Point {
        match self {
            DomainShape::Box { center, .. } | DomainShape::Ball { center, .. } => *center,
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            DomainShape::Box { extents, .. } => extents.iter().product(),
            DomainShape::Ball { radius, .. } => 4.0 / 3.0 * PI * radius.powi(3),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            DomainShape::Box { extents, .. } => norm(extents),
            DomainShape::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn min_extent(&self) -> f64 {
        match self {
            DomainShape::Box { extents, .. } => extents.iter().cloned().fold(f64::INFINITY, f64::min),
            DomainShape::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            DomainShape::Box { center: c, extents: e } => (
                [c[0] - e[0] / 2.0, c[1] - e[1] / 2.0, c[2] - e[2] / 2.0],
                [c[0] + e[0] / 2.0, c[1] + e[1] / 2.0, c[2] + e[2] / 2.0],
            ),
            DomainShape::Ball { center: c, radius: r } => {
                ([c[0] - r, c[1] - r, c[2] - r], [c[0] + r, c[1] + r, c[2] + r])
            }
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        match self {
            DomainShape::Box { .. } => {
                let (lo, hi) = self.bounding_box();
                (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i])
            }
            DomainShape::Ball { center, radius } => norm(&sub(p, center)) <= *radius,
        }
    }

    /// Whether the closed cube of side `d` centred at `c` lies in the domain.
    fn contains_cube(&self, c: &Point, d: f64) -> bool {
        let tol = 1e-12 * self.diameter();
        match self {
            DomainShape::Box { .. } => {
                let (lo, hi) = self.bounding_box();
                (0..3).all(|i| c[i] - d / 2.0 >= lo[i] - tol && c[i] + d / 2.0 <= hi[i] + tol)
            }
            DomainShape::Ball { center, radius } => {
                let far: Point = std::array::from_fn(|i| (c[i] - center[i]).abs() + d / 2.0);
                norm(&far) <= radius + tol
            }
        }
    }

    /// Minimum corner of lattice cell (0,0,0): the box corner, or the point
    /// that puts a cell centre on the ball centre.
    fn lattice_origin(&self, d: f64) -> Point {
        match self {
            DomainShape::Box { .. } => self.bounding_box().0,
            DomainShape::Ball { center, .. } => [center[0] - d / 2.0, center[1] - d / 2.0, center[2] - d / 2.0],
        }
    }
}

/// The asymptotic parameters of one configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub a: f64,
    pub h: f64,
    pub eta0: f64,
    pub eta: f64,
    pub c0: f64,
    pub sign: Sign,
    pub c_r: f64,
    pub lambda_n0_b: f64,
    pub d: f64,
    pub k: f64,
}

impl ScaleSet {
    /// `1 − k²ηa²λ`, which equals `±c₀aʰ` for a consistent set.
    pub fn frequency_offset(&self) -> f64 {
        1.0 - self.k * self.k * self.eta * self.a * self.a * self.lambda_n0_b
    }

    /// Particle count bound ⌊|Ω|/d³⌋ for a domain.
    pub fn max_count(&self, domain: &DomainShape) -> usize {
        (domain.volume() / self.d.powi(3)).floor() as usize
    }
}

/// d = c_r a^{(3−h)/3}.
pub fn dilution_pitch(a: f64, h: f64, c_r: f64) -> f64 {
    c_r * a.powf((3.0 - h) / 3.0)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(name, format!("{name} must be positive and finite (got {v})")))
    }
}

/// Checks the standalone invariants of the raw scale parameters.
pub fn validate_scale_inputs(a: f64, h: f64, eta0: f64, c0: f64, c_r: f64, lambda_n0_b: f64) -> Result<()> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::config("a", format!("a must lie in (0, 1) (got {a})")));
    }
    if !(h > H_MIN && h < H_MAX) {
        return Err(Error::config("h", format!("h must lie in (9/11, 1) (got {h})")));
    }
    positive("eta0", eta0)?;
    positive("c0", c0)?;
    positive("c_r", c_r)?;
    positive("lambda_n0_b", lambda_n0_b)?;
    Ok(())
}

pub fn derive_scales(a: f64, h: f64, eta0: f64, c0: f64, sign: Sign, c_r: f64, lambda_n0_b: f64) -> Result<ScaleSet> {
    validate_scale_inputs(a, h, eta0, c0, c_r, lambda_n0_b)?;
    let offset = 1.0 - sign.value() * c0 * a.powf(h);
    let k2 = offset / (eta0 * lambda_n0_b);
    if !(k2 > 0.0) {
        return Err(Error::Infeasible(format!(
            "k² = (1 ∓ c0·a^h)/(eta0·lambda_n0_b) = {k2:e} ≤ 0; c0·a^h = {} is too large for the upper branch",
            c0 * a.powf(h)
        )));
    }
    Ok(ScaleSet {
        a,
        h,
        eta0,
        eta: eta0 / (a * a),
        c0,
        sign,
        c_r,
        lambda_n0_b,
        d: dilution_pitch(a, h, c_r),
        k: k2.sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cluster {
    pub domain: DomainShape,
    pub d: f64,
    pub centers: Vec<Point>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("cluster serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Cluster = serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("cluster json: {e}")))?;
        c.domain.validate()?;
        Ok(c)
    }

    /// Axis-aligned bounding box of the union of the particle cubes.
    pub fn hull(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for c in &self.centers {
            for i in 0..3 {
                lo[i] = lo[i].min(c[i] - self.d / 2.0);
                hi[i] = hi[i].max(c[i] + self.d / 2.0);
            }
        }
        (lo, hi)
    }

    fn lattice_index(&self, c: &Point) -> [i64; 3] {
        let o = self.domain.lattice_origin(self.d);
        std::array::from_fn(|i| ((c[i] - o[i]) / self.d - 0.5).round() as i64)
    }
}

pub fn generate_cluster(domain: &DomainShape, d: f64) -> Result<Cluster> {
    domain.validate()?;
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidInput(format!("pitch d must be positive (got {d})")));
    }
    if d > domain.min_extent() * (1.0 + 1e-12) {
        return Err(Error::EmptyCluster { d });
    }
    let origin = domain.lattice_origin(d);
    let mut centers = Vec::new();
    match domain {
        DomainShape::Box { extents, .. } => {
            let n: [usize; 3] = std::array::from_fn(|i| (extents[i] / d + 1e-9).floor() as usize);
            for i in 0..n[0] {
                for j in 0..n[1] {
                    for l in 0..n[2] {
                        centers.push([
                            origin[0] + (i as f64 + 0.5) * d,
                            origin[1] + (j as f64 + 0.5) * d,
                            origin[2] + (l as f64 + 0.5) * d,
                        ]);
                    }
                }
            }
        }
        DomainShape::Ball { center, radius } => {
            let m = (radius / d + 0.5 + 1e-9).floor() as i64;
            for i in -m..=m {
                for j in -m..=m {
                    for l in -m..=m {
                        let c = [center[0] + i as f64 * d, center[1] + j as f64 * d, center[2] + l as f64 * d];
                        if domain.contains_cube(&c, d) {
                            centers.push(c);
                        }
                    }
                }
            }
        }
    }
    if centers.is_empty() {
        return Err(Error::EmptyCluster { d });
    }
    Ok(Cluster { domain: domain.clone(), d, centers })
}

/// Σ_{j≠m} |z_j − z_m|^{−κ}.
pub fn counting_sum(cluster: &Cluster, kappa: f64, m: usize) -> Result<f64> {
    let zm = cluster
        .centers
        .get(m)
        .ok_or_else(|| Error::InvalidInput(format!("particle index {m} out of range (count {})", cluster.len())))?;
    Ok(cluster
        .centers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != m)
        .map(|(_, z)| norm(&sub(z, zm)).powf(-kappa))
        .sum())
}

/// max_m Σ_{j≠m} |z_j − z_m|^{−κ}.
pub fn max_counting_sum(cluster: &Cluster, kappa: f64) -> f64 {
    (0..cluster.len()).map(|m| counting_sum(cluster, kappa, m).unwrap()).fold(0.0, f64::max)
}

/// Midpoint quadrature nodes and weights for Ω minus the union of particle
/// cubes; every uncovered lattice cell meeting Ω is split into `sub³` pieces.
/// Box domains clip the pieces to Ω (exact volume); balls keep the pieces
/// whose midpoint lies inside.
pub fn complement_quadrature(cluster: &Cluster, sub: usize) -> (Vec<Point>, Vec<f64>) {
    let d = cluster.d;
    let origin = cluster.domain.lattice_origin(d);
    let occupied: HashSet<[i64; 3]> = cluster.centers.iter().map(|c| cluster.lattice_index(c)).collect();
    let (lo, hi) = cluster.domain.bounding_box();
    let first: [i64; 3] = std::array::from_fn(|i| ((lo[i] - origin[i]) / d).floor() as i64 - 1);
    let last: [i64; 3] = std::array::from_fn(|i| ((hi[i] - origin[i]) / d).ceil() as i64 + 1);
    let hs = d / sub as f64;
    let is_box = matches!(cluster.domain, DomainShape::Box { .. });
    let mut pts = Vec::new();
    let mut weights = Vec::new();
    for i in first[0]..=last[0] {
        for j in first[1]..=last[1] {
            for l in first[2]..=last[2] {
                if occupied.contains(&[i, j, l]) {
                    continue;
                }
                let corner = [origin[0] + i as f64 * d, origin[1] + j as f64 * d, origin[2] + l as f64 * d];
                for a in 0..sub {
                    for b in 0..sub {
                        for c in 0..sub {
                            let s0 = [
                                corner[0] + a as f64 * hs,
                                corner[1] + b as f64 * hs,
                                corner[2] + c as f64 * hs,
                            ];
                            if is_box {
                                let a0: Point = std::array::from_fn(|x| s0[x].max(lo[x]));
                                let a1: Point = std::array::from_fn(|x| (s0[x] + hs).min(hi[x]));
                                let len: Point = std::array::from_fn(|x| a1[x] - a0[x]);
                                if len.iter().all(|v| *v > 1e-14 * d) {
                                    pts.push(std::array::from_fn(|x| 0.5 * (a0[x] + a1[x])));
                                    weights.push(len[0] * len[1] * len[2]);
                                }
                            } else {
                                let p = [s0[0] + 0.5 * hs, s0[1] + 0.5 * hs, s0[2] + 0.5 * hs];
                                if cluster.domain.contains(&p) {
                                    pts.push(p);
                                    weights.push(hs * hs * hs);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (pts, weights)
}

/// Σ_m (∫_{Ω∖∪Ω_m} |z_m − z|⁻³ dz)² with 4³ subcells per boundary cell.
pub fn boundary_counting_statistic(cluster: &Cluster) -> f64 {
    boundary_counting_statistic_with(cluster, 4)
}

pub fn boundary_counting_statistic_with(cluster: &Cluster, sub: usize) -> f64 {
    let (pts, w) = complement_quadrature(cluster, sub);
    cluster
        .centers
        .iter()
        .map(|z| {
            let s: f64 = pts
                .iter()
                .zip(&w)
                .map(|(p, wi)| {
                    let r = sub_norm(p, z);
                    wi / (r * r * r)
                })
                .sum();
            s * s
        })
        .sum()
}

fn sub_norm(a: &Point, b: &Point) -> f64 {
    let d = sub(a, b);
    dot(&d, &d).sqrt()
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_slope(&lx, &ly)
}

pub fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
