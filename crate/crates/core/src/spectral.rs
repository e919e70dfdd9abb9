//! Electronic and phononic spectral amplitudes of the pair state.
//!
//! Frequencies are angular wavenumbers (2π times spectroscopic cm⁻¹)
//! everywhere in this module; [`SpectroscopicParams`] is the only place where
//! spectroscopic values enter.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{faddeeva_w, integrate_gk, Complex64};

/// Laser and phonon parameters in angular wavenumbers (cm⁻¹).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    pub omega_c: f64,
    /// Gaussian amplitude width `W`.
    pub width: f64,
    pub omega_ph: f64,
    /// Phonon decay rate.
    pub gamma: f64,
}

impl SpectralParams {
    pub fn new(omega_c: f64, width: f64, omega_ph: f64, gamma: f64) -> Result<Self> {
        let sp = SpectralParams {
            omega_c,
            width,
            omega_ph,
            gamma,
        };
        sp.validate()?;
        Ok(sp)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega_c, self.width, self.omega_ph, self.gamma]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("spectral", "all parameters must be finite"));
        }
        if self.width <= 0.0 {
            return Err(Error::invalid("width", "must be positive"));
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid("gamma", "must be positive"));
        }
        if !(self.omega_c > self.omega_ph && self.omega_ph > 0.0) {
            return Err(Error::invalid("omega_ph", "must satisfy 0 < omega_ph < omega_c"));
        }
        Ok(())
    }

    /// Diamond at 781 nm pumping with `W = 24 γ`.
    pub fn diamond() -> Self {
        SpectralParams {
            omega_c: TAU * 12.7e3,
            width: 24.0 * 11.0,
            omega_ph: TAU * 1332.0,
            gamma: 11.0,
        }
    }

    pub fn with_width(self, width: f64) -> Result<Self> {
        SpectralParams { width, ..self }.validate_into()
    }

    fn validate_into(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    /// Phonon frequency in spectroscopic cm⁻¹.
    pub fn phonon_shift_cm1(&self) -> f64 {
        self.omega_ph / TAU
    }

    /// Laser power-spectrum FWHM in spectroscopic cm⁻¹.
    pub fn fwhm_cm1(&self) -> f64 {
        fwhm_from_width(self.width)
    }

    pub fn spectroscopic(&self) -> SpectroscopicParams {
        SpectroscopicParams {
            center_cm1: self.omega_c / TAU,
            phonon_cm1: self.phonon_shift_cm1(),
            gamma_cm1: self.gamma,
            fwhm_cm1: None,
            width_cm1: None,
            width_angular: Some(self.width),
        }
    }
}

/// FWHM (spectroscopic) of the power spectrum for an amplitude width `W` (angular).
pub fn fwhm_from_width(width: f64) -> f64 {
    2.0 * 2f64.ln().sqrt() * width / TAU
}

/// Amplitude width `W` (angular) for a power-spectrum FWHM (spectroscopic).
pub fn width_from_fwhm(fwhm_cm1: f64) -> f64 {
    TAU * fwhm_cm1 / (2.0 * 2f64.ln().sqrt())
}

/// User-facing parameters: `ω_c/2π`, `ω_ph/2π` in spectroscopic cm⁻¹, and
/// exactly one of the three laser-width forms. `γ` is taken as quoted for the
/// phonon line, in the same convention as the angular width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectroscopicParams {
    pub center_cm1: f64,
    pub phonon_cm1: f64,
    pub gamma_cm1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fwhm_cm1: Option<f64>,
    /// `W/2π` in spectroscopic cm⁻¹.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_cm1: Option<f64>,
    /// `W` in angular cm⁻¹.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_angular: Option<f64>,
}

impl Default for SpectroscopicParams {
    fn default() -> Self {
        SpectralParams::diamond().spectroscopic()
    }
}

impl SpectroscopicParams {
    pub fn to_params(&self) -> Result<SpectralParams> {
        from_spectroscopic(self)
    }
}

pub fn from_spectroscopic(p: &SpectroscopicParams) -> Result<SpectralParams> {
    for (name, v) in [
        ("center_cm1", p.center_cm1),
        ("phonon_cm1", p.phonon_cm1),
        ("gamma_cm1", p.gamma_cm1),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(name, "must be positive and finite"));
        }
    }
    let given: Vec<(&str, f64)> = [
        ("fwhm_cm1", p.fwhm_cm1),
        ("width_cm1", p.width_cm1),
        ("width_angular", p.width_angular),
    ]
    .into_iter()
    .filter_map(|(n, v)| v.map(|v| (n, v)))
    .collect();
    let (name, value) = match given.as_slice() {
        [one] => *one,
        [] => {
            return Err(Error::ConflictingWidth(
                "no laser width given (fwhm_cm1, width_cm1 or width_angular)".into(),
            ))
        }
        many => {
            let names: Vec<&str> = many.iter().map(|(n, _)| *n).collect();
            return Err(Error::ConflictingWidth(format!(
                "exactly one width expected, got {}",
                names.join(", ")
            )));
        }
    };
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::invalid(name, "must be positive and finite"));
    }
    let width = match name {
        "fwhm_cm1" => width_from_fwhm(value),
        "width_cm1" => TAU * value,
        _ => value,
    };
    SpectralParams::new(TAU * p.center_cm1, width, TAU * p.phonon_cm1, p.gamma_cm1)
}

/// Stokes and anti-Stokes angular frequencies of a detected pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPair {
    pub omega_s: f64,
    pub omega_as: f64,
}

impl FrequencyPair {
    pub fn new(omega_s: f64, omega_as: f64) -> Result<Self> {
        if !(omega_s > 0.0 && omega_as > 0.0 && omega_s.is_finite() && omega_as.is_finite()) {
            return Err(Error::invalid("frequency pair", "both frequencies must be positive"));
        }
        Ok(FrequencyPair { omega_s, omega_as })
    }

    /// Symmetric detection `ω_S = ω_c − δω`, `ω_aS = ω_c + δω` for a Raman
    /// shift given in spectroscopic cm⁻¹.
    pub fn symmetric(sp: &SpectralParams, shift_cm1: f64) -> Result<Self> {
        let d = TAU * shift_cm1;
        Self::new(sp.omega_c - d, sp.omega_c + d)
    }

    /// Mean detuning `ω̄ = (ω_S + ω_aS)/2 − ω_c`.
    pub fn mean_detuning(&self, sp: &SpectralParams) -> f64 {
        0.5 * (self.omega_s + self.omega_as) - sp.omega_c
    }

    /// Raman detuning `Ω = (ω_aS − ω_S)/2 − ω_ph`.
    pub fn raman_detuning(&self, sp: &SpectralParams) -> f64 {
        0.5 * (self.omega_as - self.omega_s) - sp.omega_ph
    }
}

/// Electronic amplitude `f^E = exp(−ω̄²/W²)`.
pub fn f_e(fp: &FrequencyPair, sp: &SpectralParams) -> Complex64 {
    Complex64::new(electronic_factor(fp.mean_detuning(sp), sp.width), 0.0)
}

fn electronic_factor(mean: f64, width: f64) -> f64 {
    let r = mean / width;
    (-r * r).exp()
}

/// Phononic amplitude `f^R`.
///
/// With `ζ = (−Ω + iγ/2)/W` the Gaussian-Lorentzian product
/// `exp(−(Ω − iγ/2)²/W²) erfc(γ/2W + iΩ/W)` equals `w(ζ)`, so
/// `f^R = f^E · γ w(ζ) / (2i√π W)`.
pub fn f_r(fp: &FrequencyPair, sp: &SpectralParams) -> Complex64 {
    f_r_detuned(fp.mean_detuning(sp), fp.raman_detuning(sp), sp)
}

/// `f^R` as a function of the mean and Raman detunings alone.
pub fn f_r_detuned(mean: f64, raman: f64, sp: &SpectralParams) -> Complex64 {
    let w = sp.width;
    let zeta = Complex64::new(-raman / w, 0.5 * sp.gamma / w);
    let prefactor = Complex64::new(0.0, -sp.gamma / (2.0 * PI.sqrt() * w));
    electronic_factor(mean, w) * prefactor * faddeeva_w(zeta)
}

/// Narrow-laser limit of `f^R`: `f^E γ / (2π (−Ω + iγ/2))`.
pub fn f_r_narrow_limit(fp: &FrequencyPair, sp: &SpectralParams) -> Complex64 {
    let raman = fp.raman_detuning(sp);
    let lorentz = sp.gamma / Complex64::new(-raman, 0.5 * sp.gamma);
    f_e(fp, sp) * lorentz / TAU
}

/// Numerical evaluation of the pair-amplitude integral over the laser spectrum,
/// used to check [`f_r`].
///
/// Integrates `G(ω_S + ω) G(ω_aS − ω) γ/(ω_ph − ω + iγ/2)` over `ω` with the
/// normalized Gaussian `G`. The electronic bracket (constant 1) integrates to
/// `f^E` under this normalization; the closed-form `f^R` carries an extra
/// `1/2π` relative to the Lorentzian bracket, which is applied here.
pub fn f_r_quadrature_oracle(fp: &FrequencyPair, sp: &SpectralParams) -> Result<Complex64> {
    let raw = pair_integral(fp, sp, |omega| {
        sp.gamma / Complex64::new(sp.omega_ph - omega, 0.5 * sp.gamma)
    })?;
    Ok(raw / TAU)
}

/// Numerical electronic term (bracket constant 1); equals `f^E`.
pub fn f_e_quadrature(fp: &FrequencyPair, sp: &SpectralParams) -> Result<Complex64> {
    pair_integral(fp, sp, |_| Complex64::new(1.0, 0.0))
}

fn pair_integral<B: Fn(f64) -> Complex64>(fp: &FrequencyPair, sp: &SpectralParams, bracket: B) -> Result<Complex64> {
    let w = sp.width;
    let norm = (PI * w * w).powf(-0.25);
    let gauss = |x: f64| {
        let d = (x - sp.omega_c) / w;
        norm * (-0.5 * d * d).exp()
    };
    let integrand = |omega: f64| gauss(fp.omega_s + omega) * gauss(fp.omega_as - omega) * bracket(omega);

    // The Gaussian product is centred at (ω_aS − ω_S)/2 with width W; beyond
    // 12 W it is below exp(−144) of its peak.
    let centre = 0.5 * (fp.omega_as - fp.omega_s);
    let (lo, hi) = (centre - 12.0 * w, centre + 12.0 * w);
    let mut points = vec![lo, hi, centre - w, centre, centre + w];
    for k in [0.0, -5.0, 5.0, -50.0, 50.0] {
        let p = sp.omega_ph + k * sp.gamma;
        if p > lo && p < hi {
            points.push(p);
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();

    let (q, ok) = integrate_gk(integrand, &points, 1e-11, 1e-300, 20_000);
    if !ok {
        return Err(Error::QuadratureNotConverged {
            estimate: q.error / q.value.norm(),
        });
    }
    Ok(q.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    fn diamond_spectroscopic(fwhm: Option<f64>, w2pi: Option<f64>, wang: Option<f64>) -> SpectroscopicParams {
        SpectroscopicParams {
            center_cm1: 12.7e3,
            phonon_cm1: 1332.0,
            gamma_cm1: 11.0,
            fwhm_cm1: fwhm,
            width_cm1: w2pi,
            width_angular: wang,
        }
    }

    #[test]
    fn fwhm_seventy_is_twenty_four_gamma() {
        let sp = from_spectroscopic(&diamond_spectroscopic(Some(70.0), None, None)).unwrap();
        assert!((sp.width / TAU - 42.0).abs() < 0.05, "{}", sp.width / TAU);
        assert!((sp.width - 264.0).abs() < 0.5);
        assert!((sp.width / sp.gamma - 24.0).abs() < 0.05);
        assert!((sp.omega_ph - TAU * 1332.0).abs() < 1e-9);
    }

    #[test]
    fn fwhm_round_trip() {
        for f in [1.0, 70.0, 333.3] {
            let back = fwhm_from_width(width_from_fwhm(f));
            assert!((back - f).abs() <= 1e-12 * f);
        }
    }

    #[test]
    fn conflicting_or_missing_widths_rejected() {
        let both = diamond_spectroscopic(Some(70.0), Some(42.0), None);
        assert!(matches!(from_spectroscopic(&both), Err(Error::ConflictingWidth(_))));
        let none = diamond_spectroscopic(None, None, None);
        assert!(matches!(from_spectroscopic(&none), Err(Error::ConflictingWidth(_))));
        let bad = diamond_spectroscopic(None, Some(-1.0), None);
        assert!(from_spectroscopic(&bad).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SpectralParams::new(100.0, 0.0, 10.0, 1.0).is_err());
        assert!(SpectralParams::new(100.0, 1.0, 10.0, 0.0).is_err());
        assert!(SpectralParams::new(10.0, 1.0, 100.0, 1.0).is_err());
    }

    #[test]
    fn electronic_amplitude_values() {
        let sp = SpectralParams::diamond();
        let w = sp.width;
        let at = |mean: f64| {
            let fp = FrequencyPair::new(sp.omega_c - 5000.0 + mean, sp.omega_c + 5000.0 + mean).unwrap();
            f_e(&fp, &sp)
        };
        assert_eq!(at(0.0), Complex64::new(1.0, 0.0));
        assert!((at(w).re - (-1f64).exp()).abs() < 1e-12);
        assert!((at(3.0 * w).re - (-9f64).exp()).abs() < 1e-15);
        assert_eq!(at(w).im, 0.0);
    }

    #[test]
    fn raman_amplitude_on_resonance() {
        let sp = SpectralParams::diamond();
        let fp = FrequencyPair::symmetric(&sp, 1332.0).unwrap();
        let v = f_r(&fp, &sp).norm();
        assert!((v - 0.01149).abs() < 5e-5, "{v}");
    }

    #[test]
    fn raman_amplitude_depends_on_detunings_only() {
        let sp = SpectralParams::new(80_000.0, 264.0, 8_000.0, 11.0).unwrap();
        let shifted = SpectralParams::new(81_024.0, 264.0, 8_000.0, 11.0).unwrap();
        let a = FrequencyPair::new(72_100.0, 88_000.0).unwrap();
        let b = FrequencyPair::new(73_124.0, 89_024.0).unwrap();
        assert_eq!(a.mean_detuning(&sp), b.mean_detuning(&shifted));
        assert_eq!(a.raman_detuning(&sp), b.raman_detuning(&shifted));
        assert_eq!(f_r(&a, &sp), f_r(&b, &shifted));
    }

    #[test]
    fn raman_tail_decays_monotonically() {
        let sp = SpectralParams::diamond();
        let w = sp.width;
        let mut last = f64::INFINITY;
        for k in 0..200 {
            let omega = 5.0 * w + k as f64 * 0.25 * w;
            let v = f_r_detuned(0.0, omega, &sp).norm();
            assert!(v < last);
            last = v;
        }
        let mut last = f64::INFINITY;
        for k in 0..200 {
            let omega = -5.0 * w - k as f64 * 0.25 * w;
            let v = f_r_detuned(0.0, omega, &sp).norm();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn symmetric_detection_is_favoured() {
        let sp = SpectralParams::diamond();
        for raman in [-800.0, -100.0, 0.0, 250.0] {
            let peak = f_r_detuned(0.0, raman, &sp).norm();
            for mean in [-300.0, -10.0, 0.5, 40.0, 900.0] {
                assert!(f_r_detuned(mean, raman, &sp).norm() < peak);
            }
        }
    }

    #[test]
    fn real_part_changes_sign_at_resonance() {
        let sp = SpectralParams::diamond();
        let step = 1.0;
        let below = f_r_detuned(0.0, -step, &sp).re;
        let above = f_r_detuned(0.0, step, &sp).re;
        assert!(below > 0.0 && above < 0.0);
        assert!(f_r_detuned(0.0, 0.0, &sp).re.abs() < 1e-15);
    }

    #[test]
    fn electronic_quadrature_reproduces_gaussian_factor() {
        let sp = SpectralParams::diamond();
        let fp = FrequencyPair::new(sp.omega_c - 8000.0, sp.omega_c + 8100.0).unwrap();
        let q = f_e_quadrature(&fp, &sp).unwrap();
        assert!(rel(q, f_e(&fp, &sp)) < 1e-9);
    }

    #[test]
    fn oracle_matches_closed_form_at_resonance() {
        let sp = SpectralParams::diamond();
        let fp = FrequencyPair::symmetric(&sp, 1332.0).unwrap();
        let q = f_r_quadrature_oracle(&fp, &sp).unwrap();
        assert!(rel(f_r(&fp, &sp), q) < 1e-6);
    }

    #[test]
    fn oracle_matches_far_detuned() {
        let sp = SpectralParams::diamond();
        for k in [-10.0, 10.0] {
            let shift = (sp.omega_ph + k * sp.width) / TAU;
            let fp = FrequencyPair::symmetric(&sp, shift).unwrap();
            let q = f_r_quadrature_oracle(&fp, &sp).unwrap();
            assert!(rel(f_r(&fp, &sp), q) < 1e-6);
        }
    }

    #[test]
    fn oracle_matches_broad_phonon_line() {
        let base = SpectralParams::diamond();
        let sp = SpectralParams {
            gamma: 100.0 * base.width,
            ..base
        };
        let fp = FrequencyPair::symmetric(&sp, 1332.0 + 30.0).unwrap();
        let q = f_r_quadrature_oracle(&fp, &sp).unwrap();
        assert!(rel(f_r(&fp, &sp), q) < 1e-5);
    }

    #[test]
    fn narrow_laser_limit() {
        let base = SpectralParams::diamond();
        let sp = base.with_width(base.gamma / 100.0).unwrap();
        for shift in [1300.0, 1330.0, 1332.0, 1333.5, 1400.0] {
            let fp = FrequencyPair::symmetric(&sp, shift).unwrap();
            let limit = f_r_narrow_limit(&fp, &sp);
            assert!(rel(f_r(&fp, &sp), limit) < 0.01, "shift {shift}");
        }
    }
}
