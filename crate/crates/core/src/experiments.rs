//! Studies: homogenisation convergence, regime map, resonance amplification
//! and the counting-law regressions.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::effective::{
    classify_regime, coercivity_window, coupling_xi, effective_mu, p0_ball, tensor_t, Regime,
};
use crate::error::{Error, Result};
use crate::foldylax::{
    cluster_far_field, doubled_directions, solve_with, standard_directions, FarFieldSamples, IncidentWave,
    SolveOptions, Variant,
};
use crate::geometry::{
    boundary_counting_statistic_with, derive_scales, Cluster, generate_cluster, loglog_slope,
    max_counting_sum, DomainShape, ScaleSet, Sign,
};
use crate::tensor::Point;
use crate::vie::{
    effective_far_field, resonance_amplification_scan, select_resonant_mode, solve_effective_lse, MagnetizationEigensystem,
    ScanOptions, ScanReport, ScanTemplate, VolumeGrid,
};

const PI3: f64 = PI * PI * PI;

fn nonempty<T>(key: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(Error::config(key, format!("{key} must not be empty")))
    } else {
        Ok(())
    }
}

/// Slope fitted on the last ⌈n/2⌉ points (at least two).
pub fn tail_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = n.div_ceil(2).max(2);
    loglog_slope(&x[n - m..], &y[n - m..])
}

// ---------------------------------------------------------------- convergence

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub domain: DomainShape,
    pub a_values: Vec<f64>,
    pub h: f64,
    pub eta0: f64,
    pub c0: f64,
    pub c_r: f64,
    pub lambda_n0_b: f64,
    pub sign: Sign,
    pub theta: Point,
    pub p: Point,
    /// LSE cells along the longest side of the cluster hull.
    pub grid_n: usize,
    /// Finer LSE grid re-run at the smallest a as a sanity row; 0 skips it.
    pub refine_n: usize,
}

impl ConvergeConfig {
    /// Positive-regime baseline used by the acceptance run.
    pub fn baseline() -> Self {
        ConvergeConfig {
            domain: DomainShape::unit_box(),
            a_values: vec![0.04, 0.03, 0.02, 0.015, 0.01],
            h: 0.9,
            eta0: 5.0,
            c0: 1.25,
            c_r: 2.0,
            lambda_n0_b: 0.1,
            sign: Sign::Lower,
            theta: [0.0, 0.0, 1.0],
            p: [1.0, 0.0, 0.0],
            grid_n: 20,
            refine_n: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        nonempty("a_values", &self.a_values)?;
        if self.a_values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("a_values", "a_values must be strictly decreasing"));
        }
        for &a in &self.a_values {
            derive_scales(a, self.h, self.eta0, self.c0, self.sign, self.c_r, self.lambda_n0_b)?;
        }
        IncidentWave::new(1.0, self.theta, self.p)?;
        if self.grid_n < 2 {
            return Err(Error::config("grid_n", "grid_n must be at least 2"));
        }
        if self.refine_n != 0 && self.refine_n <= self.grid_n {
            return Err(Error::config("refine_n", "refine_n must be 0 or exceed grid_n"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub a: f64,
    pub d: f64,
    pub count: usize,
    pub k: f64,
    pub xi: f64,
    pub sup_error: f64,
    pub l2_error: f64,
    pub relative_error: f64,
    /// Sup error on the doubled direction set.
    pub sup_error_doubled: f64,
    pub foldylax_residual: f64,
    pub lse_residual: f64,
    pub lse_iterations: usize,
    pub degenerate: bool,
    /// Wall time; kept out of reports so reruns are byte-identical.
    #[serde(skip)]
    pub seconds: f64,
    pub status: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub slope: f64,
    pub monotone: bool,
    pub refinement: Option<RefinementRow>,
}

/// The smallest-a row re-solved on a finer LSE grid.
#[derive(Clone, Debug, Serialize)]
pub struct RefinementRow {
    pub a: f64,
    pub grid_n: usize,
    pub sup_error: f64,
    /// sup |E∞_eff(grid_n) − E∞_eff(refine_n)| over the direction set.
    pub lse_change: f64,
    pub lse_residual: f64,
    pub lse_iterations: usize,
    pub status: String,
}

struct Matched {
    scales: ScaleSet,
    count: usize,
    xi: f64,
    fl: FarFieldSamples,
    fl_doubled: FarFieldSamples,
    fl_residual: f64,
    eff: FarFieldSamples,
    eff_doubled: FarFieldSamples,
    lse_residual: f64,
    lse_iterations: usize,
}

struct EffectiveRun {
    xi: f64,
    eff: FarFieldSamples,
    eff_doubled: FarFieldSamples,
    residual: f64,
    iterations: usize,
}

fn effective_run(cfg: &ConvergeConfig, scales: &ScaleSet, cluster: &Cluster, n: usize) -> Result<EffectiveRun> {
    // the LSE lives on the region the particles actually fill
    let (lo, hi) = cluster.hull();
    let hull = DomainShape::Box {
        center: std::array::from_fn(|i| 0.5 * (lo[i] + hi[i])),
        extents: std::array::from_fn(|i| hi[i] - lo[i]),
    };
    let grid = VolumeGrid::new(&hull, n)?;
    let wave = IncidentWave::new(scales.k, cfg.theta, cfg.p)?;
    let xi = coupling_xi(cfg.eta0, scales.k, cfg.c0, cfg.c_r);
    let t = tensor_t(xi, &p0_ball(), cfg.sign)?;
    let lse = solve_effective_lse(&grid, xi, &t, scales.k, &wave, cfg.sign)?;
    let eff = effective_far_field(&lse.field, &grid, xi, &t, scales.k, cfg.sign, &standard_directions())?;
    let eff_doubled = effective_far_field(&lse.field, &grid, xi, &t, scales.k, cfg.sign, &doubled_directions())?;
    Ok(EffectiveRun { xi, eff, eff_doubled, residual: lse.residual, iterations: lse.iterations })
}

fn matched_run(cfg: &ConvergeConfig, a: f64) -> Result<Matched> {
    let scales = derive_scales(a, cfg.h, cfg.eta0, cfg.c0, cfg.sign, cfg.c_r, cfg.lambda_n0_b)?;
    let cluster = generate_cluster(&cfg.domain, scales.d)?;
    let wave = IncidentWave::new(scales.k, cfg.theta, cfg.p)?;
    let sol = solve_with(&cluster, &scales, &p0_ball(), &wave, Variant::QForm, &SolveOptions::default())?;
    let fl = cluster_far_field(&sol, &cluster, &scales, &standard_directions())?;
    let fl_doubled = cluster_far_field(&sol, &cluster, &scales, &doubled_directions())?;
    let e = effective_run(cfg, &scales, &cluster, cfg.grid_n)?;
    Ok(Matched {
        scales,
        count: cluster.len(),
        xi: e.xi,
        fl,
        fl_doubled,
        fl_residual: sol.residual,
        eff: e.eff,
        eff_doubled: e.eff_doubled,
        lse_residual: e.residual,
        lse_iterations: e.iterations,
    })
}

fn refinement_row(cfg: &ConvergeConfig, a: f64) -> RefinementRow {
    let mut row = RefinementRow {
        a,
        grid_n: cfg.refine_n,
        sup_error: f64::NAN,
        lse_change: f64::NAN,
        lse_residual: f64::NAN,
        lse_iterations: 0,
        status: "ok".into(),
    };
    let run = |row: &mut RefinementRow| -> Result<()> {
        let m = matched_run(cfg, a)?;
        let cluster = generate_cluster(&cfg.domain, m.scales.d)?;
        let fine = effective_run(cfg, &m.scales, &cluster, cfg.refine_n)?;
        row.sup_error = fine.eff.difference(&m.fl).0;
        row.lse_change = fine.eff.difference(&m.eff).0;
        row.lse_residual = fine.residual;
        row.lse_iterations = fine.iterations;
        Ok(())
    };
    if let Err(e) = run(&mut row) {
        row.status = e.to_string();
    }
    row
}

pub fn run_convergence(cfg: &ConvergeConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.a_values.len());
    for &a in &cfg.a_values {
        let start = Instant::now();
        let mut row = ConvergenceRow {
            a,
            d: f64::NAN,
            count: 0,
            k: f64::NAN,
            xi: f64::NAN,
            sup_error: f64::NAN,
            l2_error: f64::NAN,
            relative_error: f64::NAN,
            sup_error_doubled: f64::NAN,
            foldylax_residual: f64::NAN,
            lse_residual: f64::NAN,
            lse_iterations: 0,
            degenerate: false,
            seconds: 0.0,
            status: "ok".into(),
        };
        match matched_run(cfg, a) {
            Ok(m) => {
                let (sup, l2) = m.eff.difference(&m.fl);
                let (sup2, _) = m.eff_doubled.difference(&m.fl_doubled);
                let scale = m.fl.max_norm().max(m.eff.max_norm());
                row.d = m.scales.d;
                row.count = m.count;
                row.k = m.scales.k;
                row.xi = m.xi;
                row.sup_error = sup;
                row.l2_error = l2;
                row.sup_error_doubled = sup2;
                row.degenerate = scale < 1e-12 * m.scales.k.max(1.0);
                row.relative_error = if row.degenerate { f64::NAN } else { sup / scale };
                row.foldylax_residual = m.fl_residual;
                row.lse_residual = m.lse_residual;
                row.lse_iterations = m.lse_iterations;
            }
            Err(e) => row.status = e.to_string(),
        }
        row.seconds = start.elapsed().as_secs_f64();
        rows.push(row);
    }
    let ok: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.status == "ok" && !r.degenerate).collect();
    let a: Vec<f64> = ok.iter().map(|r| r.a).collect();
    let e: Vec<f64> = ok.iter().map(|r| r.sup_error).collect();
    let slope = tail_slope(&a, &e);
    let monotone = ok.len() == rows.len() && e.windows(2).all(|w| w[1] < w[0]);
    let refinement = match (cfg.refine_n, cfg.a_values.last()) {
        (0, _) | (_, None) => None,
        (_, Some(&a)) => Some(refinement_row(cfg, a)),
    };
    Ok(ConvergenceReport { rows, slope, monotone, refinement })
}

// ----------------------------------------------------------------- regime map

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeMapConfig {
    pub xi_min: f64,
    pub xi_max: f64,
    pub steps: usize,
    pub log_spacing: bool,
    pub signs: Vec<Sign>,
    /// Frequency, domain and spectral-gap constant for the coercivity column.
    pub k: f64,
    pub domain: DomainShape,
    pub delta: f64,
}

impl RegimeMapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi_min.is_finite() && self.xi_max.is_finite() && self.xi_min < self.xi_max) {
            return Err(Error::config("xi_min", "xi range must satisfy xi_min < xi_max"));
        }
        if self.log_spacing && !(self.xi_min > 0.0) {
            return Err(Error::config("xi_min", "log spacing needs xi_min > 0"));
        }
        if self.steps < 2 {
            return Err(Error::config("steps", "steps must be at least 2"));
        }
        nonempty("signs", &self.signs)?;
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::config("k", "k must be finite and non-negative"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("delta", "delta must be positive"));
        }
        self.domain.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeRow {
    pub xi: f64,
    pub sign: Sign,
    /// μ̊r is a multiple of the identity for the ball P₀; NaN at the pole.
    pub mu: f64,
    pub regime: String,
    pub in_window: bool,
}

/// Grid points plus the pole and sign-change points of both branches.
pub fn run_regime_map(cfg: &RegimeMapConfig) -> Result<Vec<RegimeRow>> {
    cfg.validate()?;
    let mut xs: Vec<f64> = (0..cfg.steps)
        .map(|i| {
            let t = i as f64 / (cfg.steps - 1) as f64;
            if cfg.log_spacing {
                (cfg.xi_min.ln() + t * (cfg.xi_max / cfg.xi_min).ln()).exp()
            } else {
                cfg.xi_min + t * (cfg.xi_max - cfg.xi_min)
            }
        })
        .collect();
    for special in [PI3 / 8.0, PI3 / 4.0] {
        if special >= cfg.xi_min && special <= cfg.xi_max {
            xs.push(special);
        }
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    let window = coercivity_window(cfg.k, cfg.domain.diameter(), cfg.domain.volume(), cfg.delta);
    let p0 = p0_ball();
    let mut rows = Vec::new();
    for &sign in &cfg.signs {
        for &xi in &xs {
            let regime = classify_regime(xi, sign);
            let mu = match (regime, effective_mu(xi, &p0, sign)) {
                (Regime::Degenerate, _) | (_, Err(_)) => f64::NAN,
                (_, Ok(m)) => m.0[0][0].re,
            };
            rows.push(RegimeRow { xi, sign, mu, regime: regime.label().into(), in_window: window.contains(xi) });
        }
    }
    Ok(rows)
}

// ------------------------------------------------------------------ resonance

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceConfig {
    /// Cells across the unit-ball diameter.
    pub grid_n: usize,
    pub eta0: f64,
    pub lambda_n0_b: f64,
    pub theta: Point,
    pub p: Point,
    pub betas: Vec<f64>,
    /// Only modes with λ > 1/3 + margin are targeted.
    pub margin: f64,
    pub fit_max_beta: f64,
    pub precondition: bool,
}

impl ResonanceConfig {
    pub fn baseline() -> Self {
        let mut betas = Vec::new();
        for i in 0..4 {
            let b = 1e-9 * 10f64.powf(0.5 * i as f64);
            betas.push(b);
            betas.push(-b);
        }
        ResonanceConfig {
            grid_n: 20,
            eta0: 1e13,
            lambda_n0_b: 0.1,
            theta: [1.0, 0.0, 0.0],
            p: [0.0, 1.0, 0.0],
            betas,
            margin: 0.02,
            fit_max_beta: 1e-4,
            precondition: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 2 {
            return Err(Error::config("grid_n", "grid_n must be at least 2"));
        }
        if !(self.eta0 > 0.0) {
            return Err(Error::config("eta0", "eta0 must be positive"));
        }
        if !(self.lambda_n0_b > 0.0) {
            return Err(Error::config("lambda_n0_b", "lambda_n0_b must be positive"));
        }
        nonempty("betas", &self.betas)?;
        if self.betas.iter().any(|b| *b == 0.0 || !b.is_finite()) {
            return Err(Error::config("betas", "betas must be finite and non-zero"));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::config("margin", "margin must be non-negative"));
        }
        IncidentWave::new(1.0, self.theta, self.p)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResonanceStudy {
    pub resolution: usize,
    pub cells: usize,
    pub lambda_target: f64,
    pub parity: Option<[u8; 3]>,
    /// β whose ξ is ≈ 1, i.e. far from the resonance.
    pub off_resonance_beta: f64,
    pub scan: ScanReport,
}

pub fn run_resonance(cfg: &ResonanceConfig) -> Result<ResonanceStudy> {
    cfg.validate()?;
    let grid = VolumeGrid::new(&DomainShape::unit_ball(), cfg.grid_n)?;
    let system = MagnetizationEigensystem::compute(&grid)?;
    let (mode, lambda) = select_resonant_mode(&system, &cfg.theta, &cfg.p, cfg.margin)?;
    // ξ(λ, β) = 1
    let off = 4.0 / PI3 - 1.0 / (3.0 * lambda - 1.0);
    let mut betas = cfg.betas.clone();
    betas.push(off);
    let template = ScanTemplate { eta0: cfg.eta0, lambda_n0_b: cfg.lambda_n0_b, theta: cfg.theta, p: cfg.p };
    let opts = ScanOptions { precondition: cfg.precondition, fit_max_beta: cfg.fit_max_beta, ..Default::default() };
    let scan = resonance_amplification_scan(&system, lambda, &betas, &template, &opts)?;
    Ok(ResonanceStudy {
        resolution: cfg.grid_n,
        cells: grid.len(),
        lambda_target: lambda,
        parity: system.parity(mode),
        off_resonance_beta: off,
        scan,
    })
}

// ------------------------------------------------------------------- counting

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingConfig {
    pub domain: DomainShape,
    pub d_values: Vec<f64>,
    pub kappas: Vec<f64>,
    /// Domain and pitches for the boundary statistic.
    pub boundary_domain: DomainShape,
    pub boundary_d_values: Vec<f64>,
    /// Subcells per side in the complement quadrature.
    pub boundary_sub: usize,
}

impl CountingConfig {
    pub fn baseline() -> Self {
        CountingConfig {
            domain: DomainShape::unit_box(),
            d_values: vec![0.25, 0.2, 0.16, 0.125, 0.1, 0.08],
            kappas: vec![1.0, 3.0, 4.0],
            boundary_domain: DomainShape::unit_volume_ball(),
            boundary_d_values: (6..=14).map(|n| 1.0 / n as f64).collect(),
            boundary_sub: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.boundary_domain.validate()?;
        if !matches!(self.domain, DomainShape::Box { .. }) {
            return Err(Error::config("domain", "the counting study needs a box domain"));
        }
        if self.d_values.len() < 2 {
            return Err(Error::config("d_values", "need at least two pitches"));
        }
        if self.d_values.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::config("d_values", "pitches must be positive"));
        }
        if self.boundary_d_values.len() < 2 || self.boundary_d_values.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::config("boundary_d_values", "need at least two positive pitches"));
        }
        nonempty("kappas", &self.kappas)?;
        if self.boundary_sub == 0 {
            return Err(Error::config("boundary_sub", "boundary_sub must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CountingRow {
    pub d: f64,
    pub count: usize,
    /// max_m Σ_{j≠m}|z_j − z_m|^{−κ}, one per κ.
    pub sums: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryRow {
    pub d: f64,
    pub count: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CountingReport {
    pub kappas: Vec<f64>,
    pub rows: Vec<CountingRow>,
    pub slopes: Vec<f64>,
    pub boundary_rows: Vec<BoundaryRow>,
    pub boundary_slope: f64,
}

pub fn run_counting(cfg: &CountingConfig) -> Result<CountingReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &d in &cfg.d_values {
        let cluster = generate_cluster(&cfg.domain, d)?;
        let sums = cfg.kappas.iter().map(|&k| max_counting_sum(&cluster, k)).collect();
        rows.push(CountingRow { d, count: cluster.len(), sums });
    }
    let mut boundary_rows = Vec::new();
    for &d in &cfg.boundary_d_values {
        let c = generate_cluster(&cfg.boundary_domain, d)?;
        boundary_rows.push(BoundaryRow { d, count: c.len(), value: boundary_counting_statistic_with(&c, cfg.boundary_sub) });
    }
    let ds: Vec<f64> = rows.iter().map(|r| r.d).collect();
    let slopes = (0..cfg.kappas.len())
        .map(|i| loglog_slope(&ds, &rows.iter().map(|r| r.sums[i]).collect::<Vec<_>>()))
        .collect();
    let bd: Vec<f64> = boundary_rows.iter().map(|r| r.d).collect();
    let bs: Vec<f64> = boundary_rows.iter().map(|r| r.value).collect();
    let boundary_slope = if bs.iter().all(|b| *b > 0.0) { loglog_slope(&bd, &bs) } else { f64::NAN };
    Ok(CountingReport { kappas: cfg.kappas.clone(), rows, slopes, boundary_rows, boundary_slope })
}
