//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Failures are reported, not asserted; the process only exits non-zero if a
//! check cannot be evaluated at all.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dielhom::effective::{ball_moments, ball_mu_scalar, classify_regime, coupling_xi, p0_ball, p0_from_moments, tensor_t, Regime};
use dielhom::experiments::{
    run_convergence, run_counting, run_regime_map, run_resonance, ConvergeConfig, CountingConfig, RegimeMapConfig,
    ResonanceConfig,
};
use dielhom::foldylax::{
    cluster_far_field, doubled_directions, invertibility_margin, solve_with, standard_directions, FoldyLaxOperator,
    IncidentWave, SolveMethod, SolveOptions, SolverChoice, Variant,
};
use dielhom::geometry::{derive_scales, generate_cluster, Cluster, DomainShape, ScaleSet, Sign};
use dielhom::io::{convergence_table, counting_table, regime_table, scan_table, spectrum_table};
use dielhom::krylov::{norm2, LinearOperator};
use dielhom::tensor::{dyadic_green, helmholtz_gradient, helmholtz_kernel, CVec3, Dyadic, Point, C64, I};
use dielhom::vie::{
    curl_curl, effective_far_field, magnetization_apply, magnetization_spectrum, newtonian_apply, newtonian_norm,
    solve_effective_lse, GridField, MagnetizationEigensystem, VolumeGrid,
};

const PI3: f64 = PI * PI * PI;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: usize, name: &str, budget_s: f64, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let secs = t.elapsed().as_secs_f64();
    let in_time = secs <= budget_s;
    let pass = out.pass && in_time;
    let timing = if in_time { format!("{secs:.1} s") } else { format!("{secs:.1} s > budget {budget_s} s") };
    println!("{} [{id:>2}] {name}: {} ({timing})", if pass { "PASS" } else { "FAIL" }, out.detail);
    pass
}

// ------------------------------------------------------------------ 1 kernel

/// Central differences of the analytic ∇Φ_k, plus k²Φ_k I.
fn fd_green(x: &Point, z: &Point, k: f64) -> Dyadic {
    let r = ((x[0] - z[0]).powi(2) + (x[1] - z[1]).powi(2) + (x[2] - z[2]).powi(2)).sqrt();
    let h = 1e-4 * r.min(1.0 / k.max(1e-300));
    let mut m = Dyadic::ZERO;
    for j in 0..3 {
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += h;
        xm[j] -= h;
        let gp = helmholtz_gradient(&xp, z, k).unwrap();
        let gm = helmholtz_gradient(&xm, z, k).unwrap();
        for i in 0..3 {
            m.0[i][j] = (gp.0[i] - gm.0[i]) / (2.0 * h);
        }
    }
    m + Dyadic::scalar(helmholtz_kernel(x, z, k).unwrap() * (k * k))
}

fn kernel_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x: Point = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let mut z: Point;
        loop {
            z = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let r2: f64 = (0..3).map(|i| (x[i] - z[i]).powi(2)).sum();
            if r2 > 0.01 {
                break;
            }
        }
        let k = rng.gen_range(0.0..4.0);
        let g = dyadic_green(&x, &z, k).unwrap();
        let fd = fd_green(&x, &z, k);
        worst = worst.max(g.max_abs_diff(&fd) / g.frobenius());
    }
    Outcome { pass: worst <= 1e-6, detail: format!("worst relative deviation {worst:.2e} over 100 samples (≤ 1e-6)") }
}

// --------------------------------------------------------------- 2 P0 ball

fn ball_polarization() -> Outcome {
    let p0 = p0_from_moments(&ball_moments()).unwrap();
    let err = p0.max_abs_diff(&Dyadic::scalar(C64::new(12.0 / PI3, 0.0)));
    Outcome { pass: err <= 1e-12, detail: format!("max |P0 − (12/π³)I| = {err:.2e} (≤ 1e-12)") }
}

// ------------------------------------------------------------- 3 regime map

fn regime_config() -> RegimeMapConfig {
    RegimeMapConfig {
        xi_min: 1e-3,
        xi_max: 1e3,
        steps: 2001,
        log_spacing: true,
        signs: vec![Sign::Lower, Sign::Upper],
        k: 1.0,
        domain: DomainShape::unit_ball(),
        delta: 1.0,
    }
}

fn regime_map() -> Outcome {
    let eps = 1e-9;
    let flips = |x0: f64, sign: Sign| {
        let lo = ball_mu_scalar(x0 * (1.0 - eps), sign);
        let hi = ball_mu_scalar(x0 * (1.0 + eps), sign);
        lo.signum() != hi.signum() && classify_regime(x0, sign) == Regime::Degenerate
    };
    let lower = flips(PI3 / 8.0, Sign::Lower);
    let upper = flips(PI3 / 4.0, Sign::Upper);
    // no other sign change on a fine scan
    let rows = run_regime_map(&regime_config()).unwrap();
    let mut changes = [0usize; 2];
    for (s, sign) in [Sign::Lower, Sign::Upper].into_iter().enumerate() {
        let mu: Vec<f64> = rows.iter().filter(|r| r.sign == sign && r.mu.is_finite()).map(|r| r.mu).collect();
        changes[s] = mu.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
    }
    let limit = [Sign::Lower, Sign::Upper].map(|s| (ball_mu_scalar(1e6, s) + 2.0).abs());
    let limit_ok = limit.iter().all(|d| *d <= 1e-5);
    Outcome {
        pass: lower && upper && changes == [1, 1] && limit_ok,
        detail: format!(
            "sign change at π³/8 (lower) {lower}, at π³/4 (upper) {upper}, scan changes {changes:?}; \
             |μ(1e6) + 2| = {:.2e} / {:.2e} (≤ 1e-5)",
            limit[0], limit[1]
        ),
    }
}

// -------------------------------------------------------------- 4 Foldy-Lax

fn q_rhs(cluster: &Cluster, s: &ScaleSet, p0: &Dyadic, wave: &IncidentWave) -> Vec<C64> {
    let c = I * (s.k * s.a.powf(5.0 - s.h) / (s.sign.value() * s.c0));
    cluster.centers.iter().flat_map(|z| (p0.apply(&wave.magnetic(z)) * c).0).collect()
}

fn foldy_lax() -> Outcome {
    let p0 = p0_ball();
    // one particle
    let s = derive_scales(0.04, 0.9, 5.0, 1.25, Sign::Lower, 2.0, 0.1).unwrap();
    let wave = IncidentWave::new(s.k, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]).unwrap();
    let one = Cluster { domain: DomainShape::unit_box(), d: s.d, centers: vec![[0.1, -0.2, 0.3]] };
    let sol = solve_with(&one, &s, &p0, &wave, Variant::QForm, &SolveOptions::default()).unwrap();
    let exact = q_rhs(&one, &s, &p0, &wave);
    let got: Vec<C64> = sol.vectors.iter().flat_map(|v| v.0).collect();
    let single: f64 = got.iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / norm2(&exact);

    // Neumann series on the 64-particle baseline cluster
    let cluster = generate_cluster(&DomainShape::unit_box(), s.d).unwrap();
    let margin = invertibility_margin(&s, &p0).unwrap();
    let direct = solve_with(&cluster, &s, &p0, &wave, Variant::QForm, &SolveOptions::default()).unwrap();
    let op = FoldyLaxOperator::new(&cluster, &s, &p0, Variant::QForm);
    let b = q_rhs(&cluster, &s, &p0, &wave);
    let mut x = b.clone();
    let mut ax = vec![C64::default(); b.len()];
    for _ in 0..30 {
        op.apply(&x, &mut ax);
        for i in 0..x.len() {
            x[i] = b[i] + x[i] - ax[i];
        }
    }
    let xd: Vec<C64> = direct.vectors.iter().flat_map(|v| v.0).collect();
    let neumann = xd.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / norm2(&xd);
    let neumann_tol = margin.powi(30) + 1e-8;

    // direct solve with ℵ ≤ 1000
    let s2 = derive_scales(0.015, 0.9, 5.0, 1.25, Sign::Lower, 2.0, 0.1).unwrap();
    let w2 = wave.with_k(s2.k).unwrap();
    let big = generate_cluster(&DomainShape::unit_box(), s2.d).unwrap();
    let opts = SolveOptions { solver: SolverChoice::Dense, ..Default::default() };
    let sol2 = solve_with(&big, &s2, &p0, &w2, Variant::QForm, &opts).unwrap();
    let pass = single <= 1e-12
        && margin < 0.5
        && cluster.len() <= 64
        && neumann <= neumann_tol
        && big.len() <= 1000
        && sol2.method == SolveMethod::Dense
        && sol2.residual <= 1e-10;
    Outcome {
        pass,
        detail: format!(
            "ℵ=1 error {single:.1e}; ℵ={} margin {margin:.2e}, Neumann gap {neumann:.1e} (≤ {neumann_tol:.1e}); \
             ℵ={} direct residual {:.1e}",
            cluster.len(),
            big.len(),
            sol2.residual
        ),
    }
}

// -------------------------------------------------------- 5 transversality

fn transversality() -> Outcome {
    let p0 = p0_ball();
    let mut worst: f64 = 0.0;
    for (a, sign) in [(0.04, Sign::Lower), (0.03, Sign::Upper)] {
        let s = derive_scales(a, 0.9, 5.0, 1.25, sign, 2.0, 0.1).unwrap();
        let wave = IncidentWave::new(s.k, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]).unwrap();
        let cluster = generate_cluster(&DomainShape::unit_box(), s.d).unwrap();
        let sol = solve_with(&cluster, &s, &p0, &wave, Variant::QForm, &SolveOptions::default()).unwrap();
        let grid = VolumeGrid::new(&DomainShape::unit_box(), 10).unwrap();
        let xi = coupling_xi(s.eta0, s.k, s.c0, s.c_r);
        let t = tensor_t(xi, &p0, sign).unwrap();
        let lse = solve_effective_lse(&grid, xi, &t, s.k, &wave, sign).unwrap();
        for dirs in [standard_directions(), doubled_directions()] {
            let fl = cluster_far_field(&sol, &cluster, &s, &dirs).unwrap();
            let ef = effective_far_field(&lse.field, &grid, xi, &t, s.k, sign, &dirs).unwrap();
            worst = worst.max(fl.transversality_defect()).max(ef.transversality_defect());
        }
    }
    Outcome { pass: worst <= 1e-12, detail: format!("max |x̂·E∞|/|E∞| = {worst:.2e} (≤ 1e-12)") }
}

// ------------------------------------------------------- 6 volume operators

fn operators() -> Outcome {
    let mut norms = vec![];
    let mut detail = String::new();
    let mut pass = true;
    for n in [24usize, 32] {
        let g = VolumeGrid::new(&DomainShape::unit_ball(), n).unwrap();
        norms.push(newtonian_norm(&g));
        if n != 24 {
            continue;
        }
        let c = g.nearest_cell(&[0.0; 3]);
        let mut n_err: f64 = 0.0;
        let mut m_err: f64 = 0.0;
        for e in 0..3 {
            let mut v = [0.0; 3];
            v[e] = 1.0;
            let f = GridField::constant(g.len(), CVec3::from_real(v));
            let nf = newtonian_apply(&f, &g, 0.0);
            let mf = magnetization_apply(&f, &g, 0.0);
            n_err = n_err.max((nf.values[c] - CVec3::from_real(v) * C64::new(0.5, 0.0)).norm() / 0.5);
            m_err = m_err.max((mf.values[c] - CVec3::from_real(v) * C64::new(1.0 / 3.0, 0.0)).norm() * 3.0);
        }
        let fld = g.sample(|x| CVec3::from_real([x[1] * x[1] + 0.3, x[0] * x[2], 1.0 - x[2]]));
        let m = magnetization_apply(&fld, &g, 0.0);
        let cc = curl_curl(&g, &newtonian_apply(&fld, &g, 0.0));
        let mut worst: f64 = 0.0;
        for i in g.interior_cells(2) {
            let r = m.values[i] + cc[i].expect("interior stencil") - fld.values[i];
            worst = worst.max(r.norm() / fld.values[i].norm());
        }
        pass &= n_err <= 0.01 && m_err <= 0.01 && worst <= 0.02;
        detail = format!("n=24: N(1) err {n_err:.2e}, ∇M(1) err {m_err:.2e}, identity worst {worst:.2e}; ");
    }
    let target = 4.0 / (PI * PI);
    let gaps: Vec<f64> = norms.iter().map(|v| (v - target).abs() / target).collect();
    pass &= gaps[0] <= 0.10 && gaps[1] < gaps[0];
    detail += &format!("|N| = {:.5} / {:.5} vs 4/π² (gap {:.2e} → {:.2e})", norms[0], norms[1], gaps[0], gaps[1]);
    Outcome { pass, detail }
}

// --------------------------------------------------------------- 7 spectrum

fn spectrum() -> Outcome {
    let g = VolumeGrid::new(&DomainShape::unit_ball(), 20).unwrap();
    let r = magnetization_spectrum(&g, 0).unwrap();
    let near_third = r.eigenvalues.iter().map(|l| (l - 1.0 / 3.0).abs()).fold(f64::INFINITY, f64::min);
    let lo = r.eigenvalues.first().copied().unwrap_or(f64::NAN);
    let hi = r.eigenvalues.last().copied().unwrap_or(f64::NAN);
    let contained = r.eigenvalues.iter().all(|l| *l > 0.25 - 0.05 && *l < 0.75 + 0.05);
    let cluster = r.eigenvalues.iter().filter(|l| (*l - 0.5).abs() <= 0.05).count();

    // rotation by 90° about z maps the box [1, .75, .5] onto [.75, 1, .5]
    let a = VolumeGrid::new(&DomainShape::Box { center: [0.0; 3], extents: [1.0, 0.75, 0.5] }, 12).unwrap();
    let b = VolumeGrid::new(&DomainShape::Box { center: [0.0; 3], extents: [0.75, 1.0, 0.5] }, 12).unwrap();
    let ea = MagnetizationEigensystem::compute(&a).unwrap();
    let eb = MagnetizationEigensystem::compute(&b).unwrap();
    let (va, vb) = (ea.eigenvalues(), eb.eigenvalues());
    let mut rot = if va.len() == vb.len() { 0.0f64 } else { f64::INFINITY };
    for (x, y) in va.iter().zip(&vb) {
        rot = rot.max((x - y).abs());
    }
    let (fa, fb) = (ea.report(0).eigenvalues, eb.report(0).eigenvalues);
    let mut rot_f = if fa.len() == fb.len() { 0.0f64 } else { f64::INFINITY };
    for (x, y) in fa.iter().zip(&fb) {
        rot_f = rot_f.max((x - y).abs());
    }
    Outcome {
        pass: near_third <= 0.03 && contained && cluster >= 10 && rot <= 1e-8 && rot_f <= 1e-8,
        detail: format!(
            "{} filtered of {} raw; |λ − 1/3| min {near_third:.2e}; range [{lo:.4}, {hi:.4}] ⊂ (0.20, 0.80) {contained}; \
             {cluster} within 0.05 of 1/2; rotation gap raw {rot:.1e}, filtered {rot_f:.1e}",
            r.eigenvalues.len(),
            r.raw_count
        ),
    }
}

// ------------------------------------------------------------ 8 convergence

fn convergence() -> Outcome {
    let cfg = ConvergeConfig::baseline();
    let r = run_convergence(&cfg).unwrap();
    let clean = r
        .rows
        .iter()
        .all(|row| row.status == "ok" && row.foldylax_residual <= 1e-10 && row.lse_residual <= 1e-8 && row.count <= 3000);
    let refine_ok = r.refinement.as_ref().map_or(true, |f| f.status == "ok" && f.lse_residual <= 1e-8);
    let errs: Vec<String> = r.rows.iter().map(|row| format!("{:.3e}", row.sup_error)).collect();
    let fine = r.refinement.as_ref().map_or(String::new(), |f| {
        format!("; n={} row: error {:.3e}, LSE change {:.2e}", f.grid_n, f.sup_error, f.lse_change)
    });
    Outcome {
        pass: r.monotone && r.slope > 0.0 && clean && refine_ok,
        detail: format!(
            "sup errors [{}] strictly decreasing {}, slope {:.3}, residuals clean {clean}{fine}",
            errs.join(", "),
            r.monotone,
            r.slope
        ),
    }
}

// -------------------------------------------------------------- 9 resonance

fn resonance() -> Outcome {
    let cfg = ResonanceConfig::baseline();
    let s = run_resonance(&cfg).unwrap();
    let fit: Vec<f64> =
        s.scan.rows.iter().filter(|r| r.ok() && r.beta.abs() <= cfg.fit_max_beta).map(|r| r.beta.abs()).collect();
    let span = fit.iter().cloned().fold(0.0, f64::max).log10() - fit.iter().cloned().fold(f64::INFINITY, f64::min).log10();
    let off = s.scan.rows.iter().find(|r| r.beta == s.off_resonance_beta).map_or(f64::NAN, |r| r.ratio);
    Outcome {
        pass: s.lambda_target > 1.0 / 3.0
            && span >= 1.5 - 1e-12
            && (s.scan.slope + 1.0).abs() <= 0.25
            && s.scan.peak_alignment <= 10.0,
        detail: format!(
            "λ_target {:.5}, |β| span {span:.2} decades, slope {:.4} (−1 ± 0.25), back-scatter angle {:.2}° (≤ 10°), \
             off-resonance ratio {off:.3}",
            s.lambda_target, s.scan.slope, s.scan.peak_alignment
        ),
    }
}

// --------------------------------------------------------------- 10 counting

fn counting() -> Outcome {
    let cfg = CountingConfig::baseline();
    let r = run_counting(&cfg).unwrap();
    let slope = |kappa: f64| r.kappas.iter().position(|k| *k == kappa).map_or(f64::NAN, |i| r.slopes[i]);
    let (s1, s3, s4) = (slope(1.0), slope(3.0), slope(4.0));
    let ok1 = (-3.3..=-2.7).contains(&s1);
    let ok4 = (-4.3..=-3.7).contains(&s4);
    let okb = (-1.4..=-0.6).contains(&r.boundary_slope);
    Outcome {
        pass: ok1 && ok4 && okb,
        detail: format!(
            "κ=1 slope {s1:.3} ∈ [−3.3, −2.7] {ok1}; κ=4 slope {s4:.3} ∈ [−4.3, −3.7] {ok4}; \
             boundary slope {:.3} ∈ [−1.4, −0.6] {okb}; κ=3 slope {s3:.3} (reported)",
            r.boundary_slope
        ),
    }
}

// ----------------------------------------------------------- 11 determinism

/// Byte-identical, or every numeric cell within 1e-8 relative.
fn same(a: &str, b: &str) -> (bool, bool) {
    if a == b {
        return (true, true);
    }
    let la: Vec<&str> = a.lines().collect();
    let lb: Vec<&str> = b.lines().collect();
    if la.len() != lb.len() {
        return (false, false);
    }
    for (x, y) in la.iter().zip(&lb) {
        let cx: Vec<&str> = x.split(',').collect();
        let cy: Vec<&str> = y.split(',').collect();
        if cx.len() != cy.len() {
            return (false, false);
        }
        for (p, q) in cx.iter().zip(&cy) {
            match (p.parse::<f64>(), q.parse::<f64>()) {
                (Ok(u), Ok(v)) if u.is_nan() && v.is_nan() => {}
                (Ok(u), Ok(v)) if (u - v).abs() <= 1e-8 * u.abs().max(v.abs()).max(1e-300) => {}
                _ if p == q => {}
                _ => return (false, false),
            }
        }
    }
    (false, true)
}

type Study = (&'static str, bool, Box<dyn Fn() -> String + Sync + Send>);

fn determinism() -> Outcome {
    let conv = ConvergeConfig { a_values: vec![0.04, 0.03], refine_n: 0, ..ConvergeConfig::baseline() };
    let res = ResonanceConfig { grid_n: 12, ..ResonanceConfig::baseline() };
    let studies: Vec<Study> = vec![
        ("regime", true, Box::new(|| regime_table(&run_regime_map(&regime_config()).unwrap()).to_csv())),
        ("counting", true, Box::new(|| counting_table(&run_counting(&CountingConfig::baseline()).unwrap()).to_csv())),
        (
            "spectrum",
            true,
            Box::new(|| {
                let g = VolumeGrid::new(&DomainShape::unit_ball(), 12).unwrap();
                spectrum_table(&magnetization_spectrum(&g, 0).unwrap()).to_csv()
            }),
        ),
        ("convergence", false, Box::new(move || convergence_table(&run_convergence(&conv).unwrap()).to_csv())),
        ("resonance", false, Box::new(move || scan_table(&run_resonance(&res).unwrap().scan).to_csv())),
    ];
    let mut pass = true;
    let mut parts = vec![];
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    for (name, direct, run) in &studies {
        let (a1, a2) = (run(), run());
        let (b1, b2) = pool.install(|| (run(), run()));
        let (i1, n1) = same(&a1, &a2);
        let (i2, n2) = same(&b1, &b2);
        let ok = if *direct { i1 && i2 } else { n1 && n2 };
        pass &= ok;
        let tag = match (i1 && i2, n1 && n2) {
            (true, _) => "identical",
            (false, true) => "within 1e-8",
            _ => "differs",
        };
        let cross = match same(&a1, &b1) {
            (true, _) => "same",
            (false, true) => "within 1e-8",
            _ => "differs",
        };
        parts.push(format!("{name} {tag} (1 vs 2 threads: {cross})"));
    }
    Outcome { pass, detail: format!("reruns at fixed thread count: {}", parts.join(", ")) }
}

fn main() {
    // as in the CLI: sequential dense kernels
    faer::set_global_parallelism(faer::Par::Seq);
    println!("acceptance criteria");
    let results = [
        check(1, "kernel finite-difference oracle", 1.0, kernel_oracle),
        check(2, "ball polarization tensor", 1.0, ball_polarization),
        check(3, "regime map", 1.0, regime_map),
        check(4, "Foldy-Lax correctness", 30.0, foldy_lax),
        check(5, "far-field transversality", 30.0, transversality),
        check(6, "volume operators", 300.0, operators),
        check(7, "Magnetization spectrum", 600.0, spectrum),
        check(8, "homogenisation convergence", 900.0, convergence),
        check(9, "plasmonic amplification", 900.0, resonance),
        check(10, "counting regressions", 60.0, counting),
        check(11, "determinism", f64::INFINITY, determinism),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("{passed}/{} criteria passed", results.len());
}
