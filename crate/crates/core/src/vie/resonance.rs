use serde::Serialize;

use super::lse::{effective_far_field, incident_rhs, solve_effective_lse_with, LseOptions};
use super::spectrum::{harmonic_degree, harmonic_gradient_basis, MagnetizationEigensystem, SpectralPreconditioner};
use crate::effective::{detuned_xi, p0_ball, plasmonic_frequency, tensor_t};
use crate::error::{Error, Result};
use crate::foldylax::{standard_directions, IncidentWave};
use crate::krylov::LinearOperator;
use crate::geometry::{linear_slope, Sign};
use crate::tensor::{cross, dot, CVec3, Point, C64};

/// Everything but β that fixes a resonance run.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScanTemplate {
    pub eta0: f64,
    pub lambda_n0_b: f64,
    pub theta: Point,
    pub p: Point,
}

#[derive(Clone, Copy, Debug)]
pub struct ScanOptions {
    pub lse: LseOptions,
    pub precondition: bool,
    /// Rows with |β| at or below this enter the slope fit.
    pub fit_max_beta: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { lse: LseOptions::default(), precondition: true, fit_max_beta: 1e-4 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub beta: f64,
    pub xi: f64,
    pub k: f64,
    pub h_norm: f64,
    pub incident_norm: f64,
    pub ratio: f64,
    pub far_max: f64,
    /// Angle in degrees between E∞(−θ) and p.
    pub backscatter_angle: f64,
    pub residual: f64,
    pub iterations: usize,
    pub status: String,
}

impl ScanRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub lambda_target: f64,
    pub rows: Vec<ScanRow>,
    /// Least-squares slope of log‖H‖ against log|β| over the resonant rows.
    pub slope: f64,
    /// Back-scatter angle at the row with the largest ‖H‖.
    pub peak_alignment: f64,
}

/// Angle (degrees) between a complex vector and a real unit direction.
pub fn alignment_angle(e: &CVec3, p: &Point) -> f64 {
    let n = e.norm();
    if n == 0.0 {
        return f64::NAN;
    }
    (e.dot_real(p).norm() / n).min(1.0).acos().to_degrees()
}

/// Eigenmode above 1/3 (+ margin) with the largest overlap with the
/// harmonic-gradient part of the first-order incident profile (θ·x)(θ×p).
/// Returns (mode, λ).
pub fn select_resonant_mode(
    system: &MagnetizationEigensystem,
    theta: &Point,
    p: &Point,
    margin: f64,
) -> Result<((usize, usize), f64)> {
    let grid = system.grid();
    let dir = cross(theta, p);
    let profile = grid.sample(|x| CVec3::from_real(dir) * dot(theta, x)).flat();
    // keep only the profile's harmonic-gradient part
    let mut target = vec![0.0; profile.len()];
    for q in harmonic_gradient_basis(grid, harmonic_degree(grid.resolution())) {
        let c: f64 = q.iter().zip(&profile).map(|(a, b)| a * b.re).sum();
        for (t, v) in target.iter_mut().zip(&q) {
            *t += c * v;
        }
    }
    let mut best: Option<((usize, usize), f64, f64)> = None;
    for m in system.modes() {
        let lam = system.value(m);
        if !(lam > 1.0 / 3.0 + margin && lam < 1.0) {
            continue;
        }
        let v = system.vector(m);
        // eigenvectors are real with unit norm
        let ov = v.values.iter().flat_map(|c| c.0).zip(&target).map(|(a, b)| a.re * b).sum::<f64>().abs();
        if best.map_or(true, |b| ov > b.2) {
            best = Some((m, lam, ov));
        }
    }
    best.map(|(m, l, _)| (m, l))
        .ok_or_else(|| Error::Domain("no harmonic mode above 1/3 couples to the incident wave".into()))
}

/// For each β: ξ = detuned_xi(λ, β), k from the plasmonic dispersion, lower
/// sign, ball T; solve the LSE and record field and far-field sizes.
pub fn resonance_amplification_scan(
    system: &MagnetizationEigensystem,
    lambda_target: f64,
    betas: &[f64],
    template: &ScanTemplate,
    opts: &ScanOptions,
) -> Result<ScanReport> {
    if !(lambda_target > 1.0 / 3.0) {
        return Err(Error::OutOfBranch { lambda: lambda_target });
    }
    let grid = system.grid();
    let sign = Sign::Lower;
    let back = [-template.theta[0], -template.theta[1], -template.theta[2]];
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let xi = detuned_xi(lambda_target, beta);
        let mut row = ScanRow {
            beta,
            xi,
            k: f64::NAN,
            h_norm: f64::NAN,
            incident_norm: f64::NAN,
            ratio: f64::NAN,
            far_max: f64::NAN,
            backscatter_angle: f64::NAN,
            residual: f64::NAN,
            iterations: 0,
            status: "ok".into(),
        };
        let run = |row: &mut ScanRow| -> Result<()> {
            let k = plasmonic_frequency(template.eta0, template.lambda_n0_b, lambda_target, beta)?.k();
            let wave = IncidentWave::new(k, template.theta, template.p)?;
            let t = tensor_t(xi, &p0_ball(), sign)?;
            // static part of the operator is I + (ξτ/s)∇M
            let factor = C64::new(xi / sign.value(), 0.0) * t.0[0][0];
            let pre = SpectralPreconditioner { system, factor };
            let precond: Option<&dyn LinearOperator> = if opts.precondition { Some(&pre) } else { None };
            let sol = solve_effective_lse_with(grid, xi, &t, k, &wave, sign, precond, &opts.lse)?;
            let ff = effective_far_field(&sol.field, grid, xi, &t, k, sign, &standard_directions())?;
            let bs = effective_far_field(&sol.field, grid, xi, &t, k, sign, &[back])?;
            row.k = k;
            row.h_norm = grid.norm(&sol.field);
            row.incident_norm = grid.norm(&incident_rhs(grid, &wave));
            row.ratio = row.h_norm / row.incident_norm;
            row.far_max = ff.max_norm();
            row.backscatter_angle = alignment_angle(&bs.values[0], &template.p);
            row.residual = sol.residual;
            row.iterations = sol.iterations;
            Ok(())
        };
        if let Err(e) = run(&mut row) {
            row.status = e.to_string();
        }
        rows.push(row);
    }
    let fit: Vec<&ScanRow> = rows.iter().filter(|r| r.ok() && r.beta.abs() <= opts.fit_max_beta).collect();
    let slope = if fit.len() >= 2 {
        let x: Vec<f64> = fit.iter().map(|r| r.beta.abs().ln()).collect();
        let y: Vec<f64> = fit.iter().map(|r| r.h_norm.ln()).collect();
        linear_slope(&x, &y)
    } else {
        f64::NAN
    };
    let peak_alignment = rows
        .iter()
        .filter(|r| r.ok())
        .max_by(|a, b| a.h_norm.total_cmp(&b.h_norm))
        .map_or(f64::NAN, |r| r.backscatter_angle);
    Ok(ScanReport { lambda_target, rows, slope, peak_alignment })
}
