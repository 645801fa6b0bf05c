//! Closed-form effective-medium algebra: coupling ξ, polarisation tensor P₀,
//! the tensor T, the effective permeability and the resonance bookkeeping.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Sign;
use crate::tensor::{CVec3, Dyadic, C64};

const PI3: f64 = PI * PI * PI;

/// Relative size below which a pole or zero is treated as hit.
const POLE_TOL: f64 = 1e-10;

/// ξ = η₀k²/(c₀c_r³).
pub fn coupling_xi(eta0: f64, k: f64, c0: f64, c_r: f64) -> f64 {
    eta0 * k * k / (c0 * c_r.powi(3))
}

/// Moment vectors ∫_B φ_ℓ of the first Newtonian eigenfunctions of the unit ball.
pub fn ball_moments() -> [CVec3; 3] {
    let s6 = (6.0 / PI).sqrt() / PI;
    let s3 = 2.0 * (3.0 / PI).sqrt() / PI;
    [
        CVec3::new(s6.into(), C64::new(0.0, -s6), 0.0.into()),
        CVec3::new(0.0.into(), 0.0.into(), s3.into()),
        CVec3::new((-s6).into(), C64::new(0.0, -s6), 0.0.into()),
    ]
}

/// P₀ = Σ_ℓ v_ℓ ⊗ conj(v_ℓ).
pub fn p0_from_moments(moments: &[CVec3]) -> Result<Dyadic> {
    if moments.is_empty() {
        return Err(Error::InvalidInput("P0 needs at least one moment vector".into()));
    }
    Ok(moments.iter().fold(Dyadic::ZERO, |acc, v| acc + Dyadic::outer_conj(v, v)))
}

/// (12/π³) I.
pub fn p0_ball() -> Dyadic {
    Dyadic::scalar((12.0 / PI3).into())
}

/// T = (I − (ξ/(±3))P₀)⁻¹P₀.
pub fn tensor_t(xi: f64, p0: &Dyadic, sign: Sign) -> Result<Dyadic> {
    let m = Dyadic::identity() - p0.scale((xi / (3.0 * sign.value())).into());
    let inv = m
        .inverse()
        .ok_or_else(|| Error::Degenerate(format!("I − (ξ/±3)P0 is singular at ξ = {xi} ({} branch)", sign.label())))?;
    Ok(inv.matmul(p0))
}

/// μ̊r = I + (ξ/±1)T.
pub fn effective_mu(xi: f64, p0: &Dyadic, sign: Sign) -> Result<Dyadic> {
    let t = tensor_t(xi, p0, sign)?;
    Ok(Dyadic::identity() + t.scale((xi / sign.value()).into()))
}

/// Scalar value of T for the ball: (12/π³)/(1 ∓ 4ξ/π³).
pub fn ball_t_scalar(xi: f64, sign: Sign) -> f64 {
    (12.0 / PI3) / (1.0 - sign.value() * 4.0 * xi / PI3)
}

/// Ball μ̊r = (π³ ± 8ξ)/(π³ ∓ 4ξ).
pub fn ball_mu_scalar(xi: f64, sign: Sign) -> f64 {
    let s = sign.value();
    (PI3 + s * 8.0 * xi) / (PI3 - s * 4.0 * xi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensors {
    pub xi: f64,
    pub p0: Dyadic,
    pub t: Dyadic,
    pub mu_eff: Dyadic,
    pub eps_eff: Dyadic,
    pub sign: Sign,
}

pub fn effective_tensors(xi: f64, p0: &Dyadic, sign: Sign) -> Result<EffectiveTensors> {
    let t = tensor_t(xi, p0, sign)?;
    let mu_eff = Dyadic::identity() + t.scale((xi / sign.value()).into());
    Ok(EffectiveTensors { xi, p0: *p0, t, mu_eff, eps_eff: Dyadic::identity(), sign })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    DielectricPositive,
    PlasmonicNegative,
    Degenerate,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::DielectricPositive => "dielectric-positive",
            Regime::PlasmonicNegative => "plasmonic-negative",
            Regime::Degenerate => "degenerate",
        }
    }
}

/// Sign regime of the ball μ̊r.
pub fn classify_regime(xi: f64, sign: Sign) -> Regime {
    let s = sign.value();
    let num = PI3 + s * 8.0 * xi;
    let den = PI3 - s * 4.0 * xi;
    let scale = PI3 + 8.0 * xi.abs();
    if num.abs() < POLE_TOL * scale || den.abs() < POLE_TOL * scale || !xi.is_finite() {
        return Regime::Degenerate;
    }
    if num / den > 0.0 {
        Regime::DielectricPositive
    } else {
        Regime::PlasmonicNegative
    }
}

/// ξ_n = π³/(4(3λ − 1)).
pub fn dispersion_xi(lambda: f64) -> Result<f64> {
    if !(lambda > 1.0 / 3.0) {
        return Err(Error::OutOfBranch { lambda });
    }
    Ok(PI3 / (4.0 * (3.0 * lambda - 1.0)))
}

/// ξ = (π³/4)(1/(3λ−1) + β).
pub fn detuned_xi(lambda: f64, beta: f64) -> f64 {
    PI3 / 4.0 * (1.0 / (3.0 * lambda - 1.0) + beta)
}

/// f(λ,β) = |β|(3λ−1)²/(3λ).
pub fn amplification_f(lambda: f64, beta: f64) -> f64 {
    beta.abs() * (3.0 * lambda - 1.0).powi(2) / (3.0 * lambda)
}

/// g(β) = (πλ/|Ω|) β (2 − 3λ − 1/(3λ)) / (1 + β(3λ−1)).
pub fn correction_g(lambda: f64, beta: f64, vol: f64) -> f64 {
    PI * lambda / vol * beta * (2.0 - 3.0 * lambda - 1.0 / (3.0 * lambda)) / (1.0 + beta * (3.0 * lambda - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlasmonicFrequency {
    pub k2: f64,
    /// Leading-order c₀c_r³ consistent with the detuned ξ.
    pub c0_cr3: f64,
}

impl PlasmonicFrequency {
    pub fn k(&self) -> f64 {
        self.k2.sqrt()
    }
}

/// k² = (1 + β(3λ−1))/(η₀λ_n0_B) together with c₀c_r³ = (4/π³)(3λ−1)/λ_n0_B.
pub fn plasmonic_frequency(eta0: f64, lambda_n0_b: f64, lambda_m0: f64, beta: f64) -> Result<PlasmonicFrequency> {
    if !(lambda_m0 > 1.0 / 3.0) {
        return Err(Error::OutOfBranch { lambda: lambda_m0 });
    }
    if !(eta0 > 0.0 && lambda_n0_b > 0.0) {
        return Err(Error::InvalidInput("eta0 and lambda_n0_b must be positive".into()));
    }
    let k2 = (1.0 + beta * (3.0 * lambda_m0 - 1.0)) / (eta0 * lambda_n0_b);
    if !(k2 > 0.0) {
        return Err(Error::Infeasible(format!("plasmonic k² = {k2:e} ≤ 0 for β = {beta}")));
    }
    Ok(PlasmonicFrequency { k2, c0_cr3: 4.0 / PI3 * (3.0 * lambda_m0 - 1.0) / lambda_n0_b })
}

/// k⁴ = π³c₀c_r³/(6η₀⟨(N+N′)e, e⟩).
pub fn ball_resonance_k4(c0: f64, c_r: f64, eta0: f64, inner: f64) -> Result<f64> {
    if !(inner > 0.0) {
        return Err(Error::InvalidInput(format!("⟨(N+N')e, e⟩ must be positive (got {inner})")));
    }
    Ok(PI3 * c0 * c_r.powi(3) / (6.0 * eta0 * inner))
}

/// e^x − 1 − x without cancellation.
fn exp_rem2(x: f64) -> f64 {
    if x.abs() < 0.5 {
        let mut term = x * x / 2.0;
        let mut sum: f64 = 0.0;
        let mut n = 2.0;
        while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
            sum += term;
            n += 1.0;
            term *= x / n;
        }
        sum
    } else {
        x.exp_m1() - x
    }
}

/// c(k) = k² + k³/6 + (k²/(4D))Σ_{n≥2}(kD)ⁿ/n! + (k³/16)Σ_{n≥1}(kD)ⁿ/n!.
pub fn frequency_function_c(k: f64, diam: f64) -> f64 {
    let x = k * diam;
    k * k + k.powi(3) / 6.0 + k * k / (4.0 * diam) * exp_rem2(x) + k.powi(3) / 16.0 * x.exp_m1()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityWindow {
    pub xi_min: f64,
    pub xi_max: f64,
}

impl CoercivityWindow {
    /// Empty also when the bounds coincide up to rounding.
    pub fn is_empty(&self) -> bool {
        self.xi_min >= self.xi_max * (1.0 - 1e-12)
    }

    pub fn contains(&self, xi: f64) -> bool {
        xi > self.xi_min && xi < self.xi_max
    }

    pub fn describe(&self) -> String {
        if self.is_empty() {
            format!("coercivity window ({}, {}) is empty", self.xi_min, self.xi_max)
        } else {
            format!("coercivity window ({}, {})", self.xi_min, self.xi_max)
        }
    }
}

/// (2δπ³, π⁴/(12|Ω|c(k))).
pub fn coercivity_window(k: f64, diam: f64, vol: f64, delta: f64) -> CoercivityWindow {
    coercivity_window_from_c(frequency_function_c(k, diam), vol, delta)
}

pub fn coercivity_window_from_c(c: f64, vol: f64, delta: f64) -> CoercivityWindow {
    let xi_max = if c > 0.0 { PI3 * PI / (12.0 * vol * c) } else { f64::INFINITY };
    CoercivityWindow { xi_min: 2.0 * delta * PI3, xi_max }
}

/// δ⋆ = min |λ − 1/3| over eigenvalues above 1/3; δ = 1 + ⌊1/(12δ⋆)⌋.
pub fn spectral_gap(eigenvalues: &[f64]) -> Option<(f64, f64)> {
    let dstar = eigenvalues
        .iter()
        .filter(|l| **l > 1.0 / 3.0)
        .map(|l| l - 1.0 / 3.0)
        .fold(f64::INFINITY, f64::min);
    if !dstar.is_finite() || dstar <= 0.0 {
        return None;
    }
    Some((1.0 + (1.0 / (12.0 * dstar)).floor(), dstar))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceParams {
    pub lambda_m0: f64,
    pub beta: f64,
    pub xi_m0: f64,
    pub xi: f64,
    pub f: f64,
    pub g: f64,
    pub lambda_n0_b: f64,
    pub delta: f64,
    pub delta_star: f64,
}

impl ResonanceParams {
    pub fn new(lambda_m0: f64, beta: f64, lambda_n0_b: f64, vol: f64, eigenvalues: &[f64]) -> Result<Self> {
        let xi_m0 = dispersion_xi(lambda_m0)?;
        let (delta, delta_star) = spectral_gap(eigenvalues)
            .ok_or_else(|| Error::InvalidInput("no eigenvalue above 1/3 to define the spectral gap".into()))?;
        Ok(ResonanceParams {
            lambda_m0,
            beta,
            xi_m0,
            xi: detuned_xi(lambda_m0, beta),
            f: amplification_f(lambda_m0, beta),
            g: correction_g(lambda_m0, beta, vol),
            lambda_n0_b,
            delta,
            delta_star,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn coupling_examples() {
        assert_eq!(coupling_xi(1.0, 1.0, 1.0, 1.0), 1.0);
        assert_eq!(coupling_xi(1.0, 2.0, 1.0, 1.0), 4.0);
        assert!((coupling_xi(3.0, 1.0, 2.0, 2.0) - 3.0 / 16.0).abs() < 1e-16);
    }

    #[test]
    fn ball_p0() {
        let p = p0_from_moments(&ball_moments()).unwrap();
        assert!(p.max_abs_diff(&p0_ball()) <= 1e-12);
        assert!((p0_ball().trace().re - 36.0 / PI3).abs() < 1e-15);
        assert!((p0_ball().spectral_norm() - 12.0 / PI3).abs() < 1e-15);
        assert!((12.0 / PI3 - 0.3870185).abs() < 1e-7);
        let single = p0_from_moments(&[CVec3::from_real([0.0, 0.0, 1.0])]).unwrap();
        assert_eq!(single, Dyadic::diag([0.0.into(), 0.0.into(), 1.0.into()]));
        assert!(p0_from_moments(&[]).is_err());
    }

    #[test]
    fn conjugate_pair_is_real() {
        let v = CVec3::new(C64::new(0.3, 0.7), C64::new(-0.1, 0.2), C64::new(0.5, -0.4));
        let p = p0_from_moments(&[v, v.conj()]).unwrap();
        assert!(p.0.iter().flatten().all(|c| c.im.abs() < 1e-16));
        assert!(p.max_abs_diff(&p.transpose()) < 1e-16);
    }

    #[test]
    fn t_and_mu_examples() {
        let p0 = p0_ball();
        assert_eq!(tensor_t(0.0, &p0, Sign::Lower).unwrap(), p0);
        let t = tensor_t(PI3 / 4.0, &p0, Sign::Lower).unwrap();
        assert!(t.max_abs_diff(&p0.scale(0.5.into())) < 1e-15);
        assert_eq!(effective_mu(0.0, &p0, Sign::Upper).unwrap(), Dyadic::identity());
        let mu = effective_mu(PI3 / 8.0, &p0, Sign::Lower).unwrap();
        assert!(mu.frobenius() < 1e-14);
        // μ + 2 = 3π³/(π³ ∓ 4ξ): about 2.3e-5 at ξ = 1e6
        for sign in [Sign::Upper, Sign::Lower] {
            let xi = 1e6;
            let mu = effective_mu(xi, &p0, sign).unwrap();
            let dev = mu.max_abs_diff(&Dyadic::scalar((-2.0).into()));
            let want = (3.0 * PI3 / (PI3 - sign.value() * 4.0 * xi)).abs();
            assert!((dev - want).abs() < 1e-12, "{dev:e} vs {want:e}");
            assert!(dev < 3e-5);
        }
        assert!(matches!(tensor_t(PI3 / 4.0, &p0, Sign::Upper), Err(Error::Degenerate(_))));
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(PI3 / 16.0, Sign::Lower), Regime::DielectricPositive);
        assert_eq!(classify_regime(PI3 / 2.0, Sign::Upper), Regime::PlasmonicNegative);
        assert_eq!(classify_regime(PI3 / 4.0, Sign::Upper), Regime::Degenerate);
        assert_eq!(classify_regime(PI3 / 8.0, Sign::Lower), Regime::Degenerate);
        assert_eq!(classify_regime(PI3 / 8.0 * 1.001, Sign::Lower), Regime::PlasmonicNegative);
    }

    #[test]
    fn dispersion() {
        assert!((dispersion_xi(0.5).unwrap() - PI3 / 2.0).abs() < 1e-13);
        assert!((dispersion_xi(0.5).unwrap() - 15.5031).abs() < 1e-4);
        assert!((dispersion_xi(2.0 / 3.0).unwrap() - PI3 / 4.0).abs() < 1e-13);
        assert!(dispersion_xi(1.0 / 3.0).is_err());
        for lam in [0.34, 0.4, 0.5, 0.9] {
            let xi = dispersion_xi(lam).unwrap();
            assert!((PI3 + 4.0 * xi * (1.0 - 3.0 * lam)).abs() <= 1e-10 * PI3);
        }
    }

    #[test]
    fn detuning_f_g() {
        assert_eq!(detuned_xi(0.5, 0.0), dispersion_xi(0.5).unwrap());
        assert_eq!(amplification_f(0.5, 0.0), 0.0);
        assert!((amplification_f(0.5, 0.01) - 1.0 / 600.0).abs() < 1e-16);
        let r1 = correction_g(0.45, 1e-4, 1.0) / 1e-4;
        let r2 = correction_g(0.45, 1e-7, 1.0) / 1e-7;
        assert!((r1 - r2).abs() < 1e-3 * r2.abs());
    }

    #[test]
    fn plasmonic_examples() {
        let p = plasmonic_frequency(100.0, 0.1, 0.5, 0.0).unwrap();
        assert!((p.k2 - 0.1).abs() < 1e-16);
        let p = plasmonic_frequency(100.0, 0.1, 0.5, 0.02).unwrap();
        assert!((p.k2 - 0.101).abs() < 1e-15);
        // ξ from (k, c0 c_r^3) agrees with the detuned root
        for beta in [1e-2, 1e-3] {
            let (lam, eta0, ln) = (0.45, 1e4, 0.2);
            let p = plasmonic_frequency(eta0, ln, lam, beta).unwrap();
            let xi = eta0 * p.k2 / p.c0_cr3;
            assert!((xi - detuned_xi(lam, beta)).abs() <= 1e-12 * xi);
        }
        assert!(plasmonic_frequency(1.0, 0.1, 0.3, 0.0).is_err());
        assert!(plasmonic_frequency(1.0, 0.1, 0.5, -3.0).is_err());
    }

    #[test]
    fn resonance_k4() {
        assert!((ball_resonance_k4(1.0, 1.0, 1.0, PI3 / 6.0).unwrap() - 1.0).abs() < 1e-15);
        let a = ball_resonance_k4(1.0, 2.0, 1.0, 0.5).unwrap();
        let b = ball_resonance_k4(1.0, 2.0, 2.0, 0.5).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-14 * a);
        assert!(ball_resonance_k4(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn frequency_function() {
        assert_eq!(frequency_function_c(0.0, 1.0), 0.0);
        let (k, dm) = (1.0f64, 2.0f64);
        let x = k * dm;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut term = 1.0;
        for n in 1..=200 {
            term *= x / n as f64;
            s1 += term;
            if n >= 2 {
                s2 += term;
            }
        }
        let partial = k * k + k.powi(3) / 6.0 + k * k / (4.0 * dm) * s2 + k.powi(3) / 16.0 * s1;
        assert!((frequency_function_c(k, dm) - partial).abs() < 1e-12);
        let mut prev = 0.0;
        for i in 1..=40 {
            let c = frequency_function_c(0.1 * i as f64, 1.7);
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn coercivity() {
        let w = coercivity_window_from_c(PI / 24.0, 1.0, 1.0);
        assert!((w.xi_min - 2.0 * PI3).abs() < 1e-12 && (w.xi_max - 2.0 * PI3).abs() < 1e-12);
        assert!(w.is_empty());
        assert!(!coercivity_window(1e-9, 1.0, 1.0, 50.0).is_empty());
        let a = coercivity_window(0.5, 2.0, 1.0, 1.0);
        let b = coercivity_window(0.2, 2.0, 1.0, 1.0);
        assert!(b.xi_max >= a.xi_max && b.xi_min == a.xi_min);
    }

    #[test]
    fn gap_and_params() {
        let (delta, dstar) = spectral_gap(&[0.2, 1.0 / 3.0, 0.4, 0.45]).unwrap();
        assert!((dstar - (0.4 - 1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(delta, 1.0 + (1.0 / (12.0 * dstar)).floor());
        let p = ResonanceParams::new(0.4, 1e-3, 0.1, 1.0, &[1.0 / 3.0, 0.4]).unwrap();
        assert!(p.f > 0.0);
        assert!(ResonanceParams::new(1.0 / 3.0, 1e-3, 0.1, 1.0, &[0.4]).is_err());
    }

    proptest! {
        #[test]
        fn mu_minus_identity_is_xi_t(xi in 0.0f64..100.0, upper in any::<bool>()) {
            let sign = if upper { Sign::Upper } else { Sign::Lower };
            prop_assume!((xi - PI3 / 4.0).abs() > 0.1);
            let p0 = p0_ball();
            let t = tensor_t(xi, &p0, sign).unwrap();
            let mu = effective_mu(xi, &p0, sign).unwrap();
            let d = mu - Dyadic::identity() - t.scale((sign.value() * xi).into());
            prop_assert!(d.frobenius() <= 1e-12 * mu.frobenius().max(1.0));
            // generic matrix path vs closed forms
            let ts = ball_t_scalar(xi, sign);
            prop_assert!(t.max_abs_diff(&Dyadic::scalar(ts.into())) <= 1e-12 * ts.abs().max(1.0));
            let ms = ball_mu_scalar(xi, sign);
            prop_assert!(mu.max_abs_diff(&Dyadic::scalar(ms.into())) <= 1e-12 * ms.abs().max(1.0));
            // fixed point T(I + (ξ/±3)T)⁻¹ = P₀
            let back = t.matmul(&(Dyadic::identity() + t.scale((xi / (3.0 * sign.value())).into())).inverse().unwrap());
            prop_assert!(back.max_abs_diff(&p0) <= 1e-12);
            // classification follows the sign of μ
            let r = classify_regime(xi, sign);
            if r != Regime::Degenerate {
                prop_assert_eq!(r == Regime::DielectricPositive, ms > 0.0);
            }
        }
    }
}
