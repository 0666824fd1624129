//! Loss calculus for robust logistic regression.
//!
//! The building blocks are the logistic link `F`, the Bernoulli deviance
//! `d(y, t)`, a nondecreasing transform `rho` with derivative `psi`, the
//! Fisher-consistency correction `G(t) = ∫_0^t psi(-log u) du`, and the
//! composite per-observation loss
//!
//! ```text
//! phi(y, t) = rho(d(y, t)) + G(F(t)) + G(1 - F(t))
//! ```
//!
//! together with its analytic derivative `score(y, t) = -(y - F(t)) nu(t)`.
//! Two loss families are provided: the classical `rho(t) = t`, which makes
//! `phi` equal the deviance plus one, and the bounded Croux–Haesbroeck
//! family with tuning constant `c` (default 0.5).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Deviances are capped here before entering `rho`; beyond this the loss is
/// flat to double precision anyway and the cap avoids overflow in callers
/// that exponentiate.
const DEVIANCE_CAP: f64 = 745.0;

/// Rounding slack: arguments of `rho`/`psi` mathematically lie in `[0, ∞)`
/// but may come out a hair negative from floating-point cancellation.
const NEG_SLACK: f64 = 1e-9;

/// Loss family selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossSpec {
    /// `rho(t) = t`: the fit coincides with maximum likelihood.
    Classical,
    /// Bounded loss of Croux and Haesbroeck with tuning constant `c > 0`.
    CrouxHaesbroeck { c: f64 },
}

impl LossSpec {
    /// Croux–Haesbroeck loss with the default tuning constant `c = 0.5`.
    pub fn ch_default() -> Self {
        LossSpec::CrouxHaesbroeck { c: 0.5 }
    }

    /// Supremum of `rho`; infinite for the classical loss.
    pub fn rho_sup(&self) -> f64 {
        match *self {
            LossSpec::Classical => f64::INFINITY,
            LossSpec::CrouxHaesbroeck { c } => {
                let sc = c.sqrt();
                (-sc).exp() * (2.0 * (1.0 + sc) + c)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::Classical => Ok(()),
            LossSpec::CrouxHaesbroeck { c } if c > 0.0 && c.is_finite() => Ok(()),
            LossSpec::CrouxHaesbroeck { c } => Err(Error::InvalidInput(format!(
                "Croux-Haesbroeck tuning constant must be positive, got {c}"
            ))),
        }
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic link `F(t) = e^t / (1 + e^t)`, computed on the stable branch.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli deviance `d(y, t) = -y log F(t) - (1 - y) log(1 - F(t))`.
///
/// Uses `-log F(t) = softplus(-t)` and `-log(1 - F(t)) = softplus(t)`, so the
/// result is nonnegative for any finite `t`. Capped at 745.
pub fn deviance(y: u8, t: f64) -> f64 {
    let d = if y == 1 { softplus(-t) } else { softplus(t) };
    d.min(DEVIANCE_CAP)
}

fn rho_raw(spec: LossSpec, t: f64) -> f64 {
    let t = t.max(0.0);
    match spec {
        LossSpec::Classical => t,
        LossSpec::CrouxHaesbroeck { c } => {
            if t <= c {
                t * (-c.sqrt()).exp()
            } else {
                let st = t.sqrt();
                let sc = c.sqrt();
                -2.0 * (-st).exp() * (1.0 + st) + (-sc).exp() * (2.0 * (1.0 + sc) + c)
            }
        }
    }
}

fn psi_raw(spec: LossSpec, t: f64) -> f64 {
    let t = t.max(0.0);
    match spec {
        LossSpec::Classical => 1.0,
        LossSpec::CrouxHaesbroeck { c } => {
            if t <= c {
                (-c.sqrt()).exp()
            } else {
                (-t.sqrt()).exp()
            }
        }
    }
}

fn check_nonneg(name: &str, t: f64) -> Result<f64> {
    if t < -NEG_SLACK || t.is_nan() {
        Err(Error::Domain(format!("{name} requires t >= 0, got {t}")))
    } else {
        Ok(t.max(0.0))
    }
}

/// `rho(t)` for `t >= 0`; tiny negative `t` from rounding is clamped to 0.
pub fn rho(spec: LossSpec, t: f64) -> Result<f64> {
    Ok(rho_raw(spec, check_nonneg("rho", t)?))
}

/// `psi(t) = rho'(t)` for `t >= 0` in closed form.
pub fn psi(spec: LossSpec, t: f64) -> Result<f64> {
    Ok(psi_raw(spec, check_nonneg("psi", t)?))
}

fn big_g_raw(spec: LossSpec, t: f64) -> f64 {
    match spec {
        LossSpec::Classical => t,
        LossSpec::CrouxHaesbroeck { c } => {
            // Split the integrand psi(-log u) at u = e^{-c}. Above the split
            // it is the constant e^{-sqrt(c)}; below, the substitution
            // s = sqrt(-log u) turns it into a Gaussian tail:
            //   ∫_0^t e^{-sqrt(-log u)} du
            //     = e^{1/4} [ e^{-(s+1/2)^2} - (sqrt(pi)/2) erfc(s + 1/2) ],
            // with s = sqrt(-log t).
            let ec = (-c).exp();
            let lower = |u: f64| -> f64 {
                if u <= 0.0 {
                    return 0.0;
                }
                let s = (-u.ln()).max(0.0).sqrt();
                let v = s + 0.5;
                0.25f64.exp()
                    * ((-v * v).exp() - 0.5 * std::f64::consts::PI.sqrt() * statrs::function::erf::erfc(v))
            };
            if t < ec {
                lower(t)
            } else {
                lower(ec) + (t - ec) * (-c.sqrt()).exp()
            }
        }
    }
}

/// Correction integral `G(t) = ∫_0^t psi(-log u) du` for `t ∈ [0, 1]`.
pub fn big_g(spec: LossSpec, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("G requires t in [0, 1], got {t}")));
    }
    Ok(big_g_raw(spec, t))
}

/// Composite loss `phi(y, t) = rho(d(y, t)) + G(F(t)) + G(1 - F(t))`.
pub fn phi(spec: LossSpec, y: u8, t: f64) -> f64 {
    let f = logistic(t);
    rho_raw(spec, deviance(y, t)) + big_g_raw(spec, f) + big_g_raw(spec, 1.0 - f)
}

/// `phi` extended linearly in the response:
/// `p rho(-log F(t)) + (1 - p) rho(-log(1 - F(t))) + G(F(t)) + G(1 - F(t))`.
///
/// Coincides with [`phi`] at `p ∈ {0, 1}` and is the population loss kernel
/// whose pointwise minimum over `t` sits at `F(t) = p`.
pub fn phi_expected(spec: LossSpec, p: f64, t: f64) -> f64 {
    let f = logistic(t);
    let d1 = softplus(-t).min(DEVIANCE_CAP);
    let d0 = softplus(t).min(DEVIANCE_CAP);
    p * rho_raw(spec, d1) + (1.0 - p) * rho_raw(spec, d0) + big_g_raw(spec, f) + big_g_raw(spec, 1.0 - f)
}

/// `nu(t) = psi(-log F(t)) (1 - F(t)) + psi(-log(1 - F(t))) F(t)`.
///
/// Strictly positive, bounded, and symmetric about 0.
pub fn nu(spec: LossSpec, t: f64) -> f64 {
    let f = logistic(t);
    psi_raw(spec, softplus(-t)) * (1.0 - f) + psi_raw(spec, softplus(t)) * f
}

/// Score `Psi(y, t) = ∂phi/∂t = -(y - F(t)) nu(t)`.
pub fn score(spec: LossSpec, y: u8, t: f64) -> f64 {
    -(f64::from(y) - logistic(t)) * nu(spec, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const CH: LossSpec = LossSpec::CrouxHaesbroeck { c: 0.5 };

    /// Adaptive Simpson quadrature, the independent oracle for `big_g`.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fb: f64, fm: f64, eps: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            left + right + (left + right - whole) / 15.0
        } else {
            simpson(f, a, m, fa, fm, flm, eps / 2.0, depth - 1)
                + simpson(f, m, b, fm, fb, frm, eps / 2.0, depth - 1)
        }
    }

    fn big_g_quadrature(spec: LossSpec, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let f = |u: f64| psi_raw(spec, if u > 0.0 { -u.ln() } else { 700.0 });
        // integrand is bounded by psi(0+) and continuous on (0, t]; start a
        // hair above zero where the integrand has already decayed to ~0
        let a = 1e-300;
        simpson(&f, a, t, f(a), f(t), f(0.5 * (a + t)), 1e-13, 60)
    }

    #[test]
    fn logistic_basics() {
        assert_abs_diff_eq!(logistic(0.0), 0.5);
        assert_abs_diff_eq!(logistic(3f64.ln()), 0.75, epsilon = 1e-15);
        for t in [-5.0, -0.3, 0.0, 1.7, 20.0] {
            assert_abs_diff_eq!(logistic(-t), 1.0 - logistic(t), epsilon = 1e-15);
        }
        assert!(logistic(700.0) <= 1.0 && logistic(700.0) > 0.99);
        assert!(logistic(-700.0) >= 0.0 && logistic(-700.0) < 1e-300);
    }

    #[test]
    fn deviance_values() {
        assert_abs_diff_eq!(deviance(1, 0.0), 2f64.ln(), epsilon = 1e-15);
        // -log F(2), frozen from direct evaluation
        assert_abs_diff_eq!(deviance(1, 2.0), 0.12692801104297263, epsilon = 1e-15);
        for t in [-8.0, -1.0, 0.0, 0.5, 30.0] {
            assert_abs_diff_eq!(deviance(0, t), deviance(1, -t), epsilon = 1e-15);
        }
    }

    #[test]
    fn rho_ch_branch_values() {
        assert_eq!(rho(CH, 0.0).unwrap(), 0.0);
        // t <= c branch: 0.25 * e^{-sqrt(0.5)}
        assert_abs_diff_eq!(rho(CH, 0.25).unwrap(), 0.12326717284880995, epsilon = 1e-15);
        // supremum, frozen from the limit of the t > c branch
        assert_abs_diff_eq!(CH.rho_sup(), 1.9299761590408018, epsilon = 1e-15);
        assert_abs_diff_eq!(rho(CH, 1e9).unwrap(), CH.rho_sup(), epsilon = 1e-6);
        // continuity at the branch point
        let left = rho(CH, 0.5).unwrap();
        let right = {
            let t = 0.5 + 1e-14;
            rho(CH, t).unwrap()
        };
        assert_abs_diff_eq!(left, right, epsilon = 1e-12);
        assert_abs_diff_eq!(left, 0.5 * 0.4930686913952398, epsilon = 1e-15);
        assert!(rho(CH, -1.0).is_err());
        assert!(rho(LossSpec::Classical, 3.0).unwrap() == 3.0);
    }

    #[test]
    fn psi_matches_rho_derivative() {
        assert_abs_diff_eq!(psi(CH, 0.1).unwrap(), 0.4930686913952398, epsilon = 1e-15);
        assert_abs_diff_eq!(psi(CH, 1.0).unwrap(), (-1f64).exp(), epsilon = 1e-15);
        let h = 1e-6;
        for t in [0.1, 0.5 - 1e-3, 0.5 + 1e-3, 2.0] {
            let fd = (rho_raw(CH, t + h) - rho_raw(CH, t - h)) / (2.0 * h);
            assert_abs_diff_eq!(psi(CH, t).unwrap(), fd, epsilon = 1e-6);
        }
        assert!(psi(CH, -0.5).is_err());
        // rounding slack: barely-negative arguments clamp instead of erroring
        assert_eq!(psi(CH, -1e-12).unwrap(), psi(CH, 0.0).unwrap());
    }

    #[test]
    fn big_g_closed_form_vs_quadrature() {
        for spec in [LossSpec::Classical, CH] {
            assert_eq!(big_g(spec, 0.0).unwrap(), 0.0);
            for t in [0.01, (-0.5f64).exp(), 0.3, 0.5, 0.99, 1.0] {
                let closed = big_g(spec, t).unwrap();
                let quad = big_g_quadrature(spec, t);
                assert_abs_diff_eq!(closed, quad, epsilon = 1e-10);
            }
        }
        assert_eq!(big_g(LossSpec::Classical, 1.0).unwrap(), 1.0);
        // constant-integrand segment: G(1) - G(e^{-c}) = (1 - e^{-c}) e^{-sqrt(c)}
        let seg = big_g(CH, 1.0).unwrap() - big_g(CH, (-0.5f64).exp()).unwrap();
        assert_abs_diff_eq!(seg, 0.19400741271964012, epsilon = 1e-12);
        assert!(big_g(CH, -0.1).is_err());
        assert!(big_g(CH, 1.1).is_err());
    }

    #[test]
    fn phi_forms_agree() {
        // classical: phi = deviance + 1 exactly
        for y in [0u8, 1u8] {
            for i in 0..=40 {
                let t = -10.0 + 0.5 * i as f64;
                let p = phi(LossSpec::Classical, y, t);
                assert_abs_diff_eq!(p - deviance(y, t), 1.0, epsilon = 1e-12);
                // the y-linear form reproduces phi at y in {0, 1}
                let alt = phi_expected(CH, f64::from(y), t);
                assert_abs_diff_eq!(phi(CH, y, t), alt, epsilon = 1e-12);
                assert!(phi(CH, y, t) >= 0.0);
            }
        }
        assert_abs_diff_eq!(phi(LossSpec::Classical, 1, 0.0), 2f64.ln() + 1.0, epsilon = 1e-15);
        // bounded loss: sup phi <= 2 rho_sup + 1 on a wide grid
        let cap = 2.0 * CH.rho_sup() + 1.0;
        for i in 0..=200 {
            let t = -100.0 + i as f64;
            assert!(phi(CH, 0, t) <= cap && phi(CH, 1, t) <= cap);
        }
    }

    #[test]
    fn nu_and_score_values() {
        // nu(0) = psi(log 2) since F(0) = 1/2
        assert_abs_diff_eq!(nu(CH, 0.0), 0.4349367715757099, epsilon = 1e-15);
        assert_abs_diff_eq!(score(CH, 1, 0.0), -0.21746838578785496, epsilon = 1e-15);
        for t in [-3.0, 0.7, 3.0] {
            assert_abs_diff_eq!(nu(CH, t), nu(CH, -t), epsilon = 1e-15);
            assert!(nu(CH, t) > 0.0);
        }
        assert_abs_diff_eq!(nu(LossSpec::Classical, 2.7), 1.0, epsilon = 1e-15);
        // stationarity when the response equals the model probability
        for t0 in [-2.0, 0.0, 1.3] {
            let p0 = logistic(t0);
            let g = -(p0 - logistic(t0)) * nu(CH, t0);
            assert_abs_diff_eq!(g, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn score_matches_phi_derivative() {
        let h = 1e-5;
        for spec in [LossSpec::Classical, CH] {
            for y in [0u8, 1u8] {
                for t in [-3.0, 0.0, 3.0] {
                    let fd = (phi(spec, y, t + h) - phi(spec, y, t - h)) / (2.0 * h);
                    let s = score(spec, y, t);
                    let scale = s.abs().max(1.0);
                    assert!((fd - s).abs() / scale < 1e-6, "spec {spec:?} y {y} t {t}: {fd} vs {s}");
                }
            }
        }
    }

    #[test]
    fn population_loss_minimized_at_truth() {
        // phi(F(t0), t) over a t-grid attains its minimum at t = t0
        for t0 in [-1.5, 0.0, 0.8] {
            let p0 = logistic(t0);
            let mut best = (f64::INFINITY, f64::NAN);
            for i in 0..=800 {
                let t = -4.0 + i as f64 * 0.01;
                let v = phi_expected(CH, p0, t);
                if v < best.0 {
                    best = (v, t);
                }
            }
            assert!((best.1 - t0).abs() <= 0.011, "argmin {} vs t0 {}", best.1, t0);
        }
    }
}
