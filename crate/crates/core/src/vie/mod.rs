//! Voxel discretisation of the effective Lippmann–Schwinger equation and the
//! volume operators N^k, ∇M^k, N′.

mod lse;
mod operators;
mod resonance;
mod spectrum;

pub use lse::{
    effective_far_field, incident_rhs, solve_effective_lse, solve_effective_lse_with, LseOperator, LseOptions, LseSolution,
};
pub use operators::{
    curl, curl_curl, divergence, magnetization_apply, newtonian_apply, newtonian_norm, nprime_apply, Convolution,
    KernelKind,
};
pub use resonance::{
    alignment_angle, resonance_amplification_scan, select_resonant_mode, ScanOptions, ScanReport, ScanRow, ScanTemplate,
};
pub use spectrum::{
    harmonic_degree, harmonic_gradient_basis, magnetization_spectrum, MagnetizationEigensystem, RitzValue,
    SpectralPreconditioner, SpectrumReport, HARMONIC_MAX_DEGREE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DomainShape;
use crate::tensor::{CVec3, Point, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub center: Point,
    pub weight: f64,
}

/// Uniform voxel grid over a domain. Box domains are tiled exactly; balls
/// keep the cells whose centres lie inside (staircase), then the lattice is
/// dilated slightly so the cell volumes add up to |Ω|.
#[derive(Clone, Debug)]
pub struct VolumeGrid {
    domain: DomainShape,
    resolution: usize,
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: Point,
    cells: Vec<Cell>,
    index: Vec<[usize; 3]>,
    lookup: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl VolumeGrid {
    /// `n` cells along the longest box side, or across the ball diameter.
    pub fn new(domain: &DomainShape, n: usize) -> Result<Self> {
        domain.validate()?;
        if n == 0 {
            return Err(Error::InvalidInput("grid resolution must be positive".into()));
        }
        let (lo, _) = domain.bounding_box();
        let (dims, spacing) = match domain {
            DomainShape::Box { extents, .. } => {
                let hmax = extents.iter().cloned().fold(0.0, f64::max) / n as f64;
                let dims: [usize; 3] = std::array::from_fn(|i| ((extents[i] / hmax).round() as usize).max(1));
                let spacing: [f64; 3] = std::array::from_fn(|i| extents[i] / dims[i] as f64);
                (dims, spacing)
            }
            DomainShape::Ball { radius, .. } => ([n; 3], [2.0 * radius / n as f64; 3]),
        };
        let mut cells = Vec::new();
        let mut index = Vec::new();
        let mut lookup = vec![NONE; dims[0] * dims[1] * dims[2]];
        let w = spacing[0] * spacing[1] * spacing[2];
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for l in 0..dims[2] {
                    let c = [
                        lo[0] + (i as f64 + 0.5) * spacing[0],
                        lo[1] + (j as f64 + 0.5) * spacing[1],
                        lo[2] + (l as f64 + 0.5) * spacing[2],
                    ];
                    let keep = match domain {
                        DomainShape::Box { .. } => true,
                        DomainShape::Ball { .. } => domain.contains(&c),
                    };
                    if keep {
                        lookup[(i * dims[1] + j) * dims[2] + l] = cells.len() as u32;
                        cells.push(Cell { center: c, weight: w });
                        index.push([i, j, l]);
                    }
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::InvalidInput("grid has no cells inside the domain".into()));
        }
        // Ball: rescale the staircase about the centre so the cells' total
        // volume is exactly |Ω| (volume-equivalent lattice).
        let (cells, spacing, lo) = match domain {
            DomainShape::Ball { center, .. } => {
                let s = (domain.volume() / (cells.len() as f64 * w)).cbrt();
                let cells = cells
                    .iter()
                    .map(|c| Cell {
                        center: std::array::from_fn(|a| center[a] + (c.center[a] - center[a]) * s),
                        weight: w * s * s * s,
                    })
                    .collect();
                (cells, spacing.map(|h| h * s), std::array::from_fn(|a| center[a] + (lo[a] - center[a]) * s))
            }
            DomainShape::Box { .. } => (cells, spacing, lo),
        };
        Ok(VolumeGrid { domain: domain.clone(), resolution: n, dims, spacing, origin: lo, cells, index, lookup })
    }

    pub fn domain(&self) -> &DomainShape {
        &self.domain
    }
    pub fn resolution(&self) -> usize {
        self.resolution
    }
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }
    pub fn origin(&self) -> Point {
        self.origin
    }
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }
    pub fn len(&self) -> usize {
        self.cells.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
    pub fn cell_index(&self, c: usize) -> [usize; 3] {
        self.index[c]
    }

    /// Common cell volume.
    pub fn weight(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    pub fn total_weight(&self) -> f64 {
        self.cells.iter().map(|c| c.weight).sum()
    }

    /// Cell at lattice index `idx + off`, if present.
    pub fn neighbor(&self, c: usize, off: [i64; 3]) -> Option<usize> {
        let idx = self.index[c];
        let mut p = [0usize; 3];
        for a in 0..3 {
            let v = idx[a] as i64 + off[a];
            if v < 0 || v >= self.dims[a] as i64 {
                return None;
            }
            p[a] = v as usize;
        }
        let id = self.lookup[(p[0] * self.dims[1] + p[1]) * self.dims[2] + p[2]];
        (id != NONE).then_some(id as usize)
    }

    /// Cells whose full (2·depth+1)³ lattice neighbourhood is in the grid.
    pub fn interior_cells(&self, depth: i64) -> Vec<usize> {
        (0..self.len())
            .filter(|&c| {
                for a in -depth..=depth {
                    for b in -depth..=depth {
                        for e in -depth..=depth {
                            if self.neighbor(c, [a, b, e]).is_none() {
                                return false;
                            }
                        }
                    }
                }
                true
            })
            .collect()
    }

    /// Cell nearest to a point.
    pub fn nearest_cell(&self, p: &Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, c) in self.cells.iter().enumerate() {
            let d = crate::tensor::norm(&crate::tensor::sub(&c.center, p));
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Whether every cell's mirror image through the grid centre planes is present.
    pub fn is_reflection_symmetric(&self) -> bool {
        (0..self.len()).all(|c| {
            let idx = self.index[c];
            (0..8).all(|g| self.mirror(idx, g).is_some())
        })
    }

    /// Cell id of `idx` reflected in the axes set in bitmask `g`.
    pub(crate) fn mirror(&self, idx: [usize; 3], g: usize) -> Option<usize> {
        let p: [usize; 3] =
            std::array::from_fn(|a| if g >> a & 1 == 1 { self.dims[a] - 1 - idx[a] } else { idx[a] });
        let id = self.lookup[(p[0] * self.dims[1] + p[1]) * self.dims[2] + p[2]];
        (id != NONE).then_some(id as usize)
    }

    pub fn inner(&self, f: &GridField, g: &GridField) -> C64 {
        self.cells.iter().zip(f.values.iter().zip(&g.values)).map(|(c, (a, b))| a.hdot(b) * c.weight).sum()
    }

    pub fn norm(&self, f: &GridField) -> f64 {
        self.cells.iter().zip(&f.values).map(|(c, v)| v.norm_sqr() * c.weight).sum::<f64>().sqrt()
    }

    pub fn sample(&self, f: impl Fn(&Point) -> CVec3) -> GridField {
        GridField { values: self.cells.iter().map(|c| f(&c.center)).collect() }
    }

    /// ∫ F over the grid.
    pub fn integrate(&self, f: &GridField) -> CVec3 {
        let mut acc = CVec3::ZERO;
        for (c, v) in self.cells.iter().zip(&f.values) {
            acc += *v * c.weight;
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub values: Vec<CVec3>,
}

impl GridField {
    pub fn zeros(n: usize) -> Self {
        GridField { values: vec![CVec3::ZERO; n] }
    }

    pub fn constant(n: usize, v: CVec3) -> Self {
        GridField { values: vec![v; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flat(&self) -> Vec<C64> {
        self.values.iter().flat_map(|v| v.0).collect()
    }

    pub fn from_flat(x: &[C64]) -> Self {
        GridField { values: x.chunks(3).map(|c| CVec3([c[0], c[1], c[2]])).collect() }
    }

    pub fn axpy(&self, a: C64, other: &GridField) -> GridField {
        GridField { values: self.values.iter().zip(&other.values).map(|(x, y)| *x + *y * a).collect() }
    }

    pub fn scaled(&self, a: C64) -> GridField {
        GridField { values: self.values.iter().map(|v| *v * a).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_csv(&self, grid: &VolumeGrid) -> String {
        let mut s = String::from("cell,x,y,z,re_f1,im_f1,re_f2,im_f2,re_f3,im_f3\n");
        for (i, (c, v)) in grid.cells().iter().zip(&self.values).enumerate() {
            s.push_str(&format!(
                "{i},{},{},{},{},{},{},{},{},{}\n",
                c.center[0], c.center[1], c.center[2], v[0].re, v[0].im, v[1].re, v[1].im, v[2].re, v[2].im
            ));
        }
        s
    }
}

impl Serialize for GridField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.values.serialize(s)
    }
}
