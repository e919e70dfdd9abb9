//! Third-order susceptibility of the O_h point group and the crystal-angle
//! dependent amplitude factors of the pair state.
//!
//! A [`TensorSet`] stores the reference electronic component `A^E_xxxx` (in
//! √counts) and all other components as ratios to it. Only the sum
//! `A_xxyy + A_xyxy` is kept because the amplitude factors never use the two
//! terms separately.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{complex_pair, Complex64};

/// Mean VV(0°) coincidence counts of the diamond measurement.
pub const DIAMOND_VV0_MEAN_COUNTS: f64 = 27.5e3;
/// Fitted Raman amplitude for HH(0°) and VV(45°) of the diamond measurement.
pub const DIAMOND_RAMAN_Y: f64 = 51450.0;

/// Photon-pair polarization (Stokes, anti-Stokes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    VV,
    HH,
    VH,
}

impl Polarization {
    pub const ALL: [Polarization; 3] = [Polarization::VV, Polarization::HH, Polarization::VH];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarization::VV => "VV",
            Polarization::HH => "HH",
            Polarization::VH => "VH",
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "VV" => Ok(Polarization::VV),
            "HH" => Ok(Polarization::HH),
            "VH" | "HV" => Ok(Polarization::VH),
            _ => Err(Error::Parse(format!("unknown polarization `{s}` (VV, HH or VH)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorSet {
    /// Reference amplitude `A^E_xxxx`, in √counts.
    #[serde(with = "complex_pair")]
    pub a_exxxx: Complex64,
    /// `A^E_xyyx / A^E_xxxx`
    #[serde(with = "complex_pair")]
    pub re_xyyx: Complex64,
    /// `(A^E_xxyy + A^E_xyxy) / A^E_xxxx`
    #[serde(with = "complex_pair")]
    pub re_sum: Complex64,
    /// `A^R_xxxx / A^E_xxxx` (zero for a T_2g phonon)
    #[serde(with = "complex_pair")]
    pub rr_xxxx: Complex64,
    #[serde(with = "complex_pair")]
    pub rr_xyyx: Complex64,
    #[serde(with = "complex_pair")]
    pub rr_sum: Complex64,
}

impl TensorSet {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a_exxxx,
            self.re_xyyx,
            self.re_sum,
            self.rr_xxxx,
            self.rr_xyyx,
            self.rr_sum,
        ];
        if all.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::invalid("tensor", "all components must be finite"));
        }
        if self.a_exxxx.norm() == 0.0 {
            return Err(Error::invalid("a_exxxx", "reference amplitude must be non-zero"));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let ts: TensorSet = serde_json::from_str(s)?;
        ts.validate()?;
        Ok(ts)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Table of measured ratios for diamond.
    pub fn table1() -> Self {
        TensorSet {
            a_exxxx: Complex64::new(DIAMOND_VV0_MEAN_COUNTS.sqrt(), 0.0),
            re_xyyx: Complex64::new(0.37, -0.07),
            re_sum: Complex64::new(0.89, -0.07),
            rr_xxxx: Complex64::new(0.0, 0.0),
            rr_xyyx: Complex64::new(171.0, 0.0),
            rr_sum: Complex64::new(171.0, 0.0),
        }
    }

    /// Ratios implied by the fitted amplitude factors of the diamond spectra
    /// (HH(0°), VV(45°) electronic factors and the shared Raman factor).
    pub fn fig1_fit() -> Self {
        let a = Complex64::new(DIAMOND_VV0_MEAN_COUNTS.sqrt(), 0.0);
        let measured = MeasuredY {
            e_vv0: a,
            e_hh0: a * Complex64::new(0.68, -0.12),
            e_45: Diagonal45::Vv(a * Complex64::new(1.61, -0.55)),
            r_vv0: Complex64::new(0.0, 0.0),
            r_hh0: Complex64::new(DIAMOND_RAMAN_Y, 0.0),
            r_45: Diagonal45::Vv(Complex64::new(DIAMOND_RAMAN_Y, 0.0)),
        };
        invert_y(&measured).expect("non-singular by construction")
    }

    /// Textbook electronic ratios `χ_xxxx = 3χ_xyyx = 3χ_xxyy = 3χ_xyxy`
    /// combined with the measured Raman ratios.
    pub fn ideal_centrosymmetric() -> Self {
        TensorSet {
            re_xyyx: Complex64::new(1.0 / 3.0, 0.0),
            re_sum: Complex64::new(2.0 / 3.0, 0.0),
            ..Self::table1()
        }
    }
}

/// Named tensor presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Table1,
    Fig1Fit,
    IdealCentrosymmetric,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Table1, Preset::Fig1Fit, Preset::IdealCentrosymmetric];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Fig1Fit => "fig1-fit",
            Preset::IdealCentrosymmetric => "ideal-centrosymmetric",
        }
    }

    pub fn tensor(self) -> TensorSet {
        match self {
            Preset::Table1 => TensorSet::table1(),
            Preset::Fig1Fit => TensorSet::fig1_fit(),
            Preset::IdealCentrosymmetric => TensorSet::ideal_centrosymmetric(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Electronic (`e_*`) and Raman (`r_*`) amplitude factors at one crystal angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YFactors {
    pub e_vv: Complex64,
    pub e_hh: Complex64,
    pub e_vh: Complex64,
    pub r_vv: Complex64,
    pub r_hh: Complex64,
    pub r_vh: Complex64,
}

impl YFactors {
    pub fn electronic(&self, pol: Polarization) -> Complex64 {
        match pol {
            Polarization::VV => self.e_vv,
            Polarization::HH => self.e_hh,
            Polarization::VH => self.e_vh,
        }
    }

    pub fn raman(&self, pol: Polarization) -> Complex64 {
        match pol {
            Polarization::VV => self.r_vv,
            Polarization::HH => self.r_hh,
            Polarization::VH => self.r_vh,
        }
    }
}

/// `(VV, HH, VH)` combinations for one susceptibility family.
fn angular_combination(
    theta: f64,
    xxxx: Complex64,
    xyyx: Complex64,
    sum: Complex64,
) -> (Complex64, Complex64, Complex64) {
    let (s, c) = theta.sin_cos();
    let (s2, c2) = (s * s, c * c);
    let quartic = s2 * s2 + c2 * c2;
    let mixed = 2.0 * s2 * c2;
    let vv = quartic * xxxx + mixed * (xyyx + sum);
    let hh = mixed * xxxx + quartic * xyyx - mixed * sum;
    let vh = (s2 - c2) * s * c * (xxxx - xyyx - sum);
    (vv, hh, vh)
}

/// Amplitude factors for a laser polarization at angle `theta` (radians) from
/// the crystallographic x axis.
pub fn y_factors(ts: &TensorSet, theta: f64) -> YFactors {
    let a = ts.a_exxxx;
    let one = Complex64::new(1.0, 0.0);
    let (e_vv, e_hh, e_vh) = angular_combination(theta, one, ts.re_xyyx, ts.re_sum);
    let (r_vv, r_hh, r_vh) = angular_combination(theta, ts.rr_xxxx, ts.rr_xyyx, ts.rr_sum);
    YFactors {
        e_vv: a * e_vv,
        e_hh: a * e_hh,
        e_vh: a * e_vh,
        r_vv: a * r_vv,
        r_hh: a * r_hh,
        r_vh: a * r_vh,
    }
}

/// Crystal angle folded into `[0, π/4]`.
///
/// The factors have period π/2 in `θ`; reflections `θ → −θ` and
/// `θ → π/2 − θ` keep VV and HH and flip the sign of VH. `vh_sign` records
/// that flip, which amounts to relabeling `|H⟩ → −|H⟩` on both photons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedAngle {
    pub theta: f64,
    pub vh_sign: f64,
}

pub fn periodicity_reduce(theta: f64) -> ReducedAngle {
    let t = theta.rem_euclid(FRAC_PI_2);
    if t > 0.5 * FRAC_PI_2 {
        ReducedAngle {
            theta: FRAC_PI_2 - t,
            vh_sign: -1.0,
        }
    } else {
        ReducedAngle { theta: t, vh_sign: 1.0 }
    }
}

/// One diagonal-polarization amplitude factor measured at 45°.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diagonal45 {
    Vv(Complex64),
    Hh(Complex64),
}

/// Amplitude factors measured at 0° and 45°, the two angles without a VH
/// component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredY {
    pub e_vv0: Complex64,
    pub e_hh0: Complex64,
    pub e_45: Diagonal45,
    pub r_vv0: Complex64,
    pub r_hh0: Complex64,
    pub r_45: Diagonal45,
}

/// Solves the 0°/45° amplitude factors for the tensor ratios.
///
/// At 0°: `VV = xxxx`, `HH = xyyx`. At 45°: `VV = (xxxx + xyyx + sum)/2`,
/// `HH = (xxxx + xyyx − sum)/2`.
pub fn invert_y(m: &MeasuredY) -> Result<TensorSet> {
    let values = [m.e_vv0, m.e_hh0, m.r_vv0, m.r_hh0];
    let diag = |d: Diagonal45| match d {
        Diagonal45::Vv(v) | Diagonal45::Hh(v) => v,
    };
    if values
        .iter()
        .chain([diag(m.e_45), diag(m.r_45)].iter())
        .any(|c| !(c.re.is_finite() && c.im.is_finite()))
    {
        return Err(Error::invalid("measured Y", "all values must be finite"));
    }
    let a = m.e_vv0;
    if a.norm() == 0.0 {
        return Err(Error::Singular("electronic VV(0°) factor is zero".into()));
    }
    let sum_from = |d: Diagonal45, xxxx: Complex64, xyyx: Complex64| match d {
        Diagonal45::Vv(v) => 2.0 * v - xxxx - xyyx,
        Diagonal45::Hh(v) => xxxx + xyyx - 2.0 * v,
    };
    let e_xxxx = Complex64::new(1.0, 0.0);
    let re_xyyx = m.e_hh0 / a;
    let re_sum = sum_from(scale_diag(m.e_45, a), e_xxxx, re_xyyx);
    let rr_xxxx = m.r_vv0 / a;
    let rr_xyyx = m.r_hh0 / a;
    let rr_sum = sum_from(scale_diag(m.r_45, a), rr_xxxx, rr_xyyx);
    let ts = TensorSet {
        a_exxxx: a,
        re_xyyx,
        re_sum,
        rr_xxxx,
        rr_xyyx,
        rr_sum,
    };
    ts.validate()?;
    Ok(ts)
}

fn scale_diag(d: Diagonal45, a: Complex64) -> Diagonal45 {
    match d {
        Diagonal45::Vv(v) => Diagonal45::Vv(v / a),
        Diagonal45::Hh(v) => Diagonal45::Hh(v / a),
    }
}

/// Amplitude factors of `ts` at 0° and 45°, in the form [`invert_y`] accepts.
pub fn measured_from(ts: &TensorSet, use_vv45: bool) -> MeasuredY {
    let y0 = y_factors(ts, 0.0);
    let y45 = y_factors(ts, 0.5 * FRAC_PI_2);
    let (e_45, r_45) = if use_vv45 {
        (Diagonal45::Vv(y45.e_vv), Diagonal45::Vv(y45.r_vv))
    } else {
        (Diagonal45::Hh(y45.e_hh), Diagonal45::Hh(y45.r_hh))
    };
    MeasuredY {
        e_vv0: y0.e_vv,
        e_hh0: y0.e_hh,
        e_45,
        r_vv0: y0.r_vv,
        r_hh0: y0.r_hh,
        r_45,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1.0)
    }

    #[test]
    fn zero_angle_factors() {
        let ts = TensorSet::table1();
        let y = y_factors(&ts, 0.0);
        assert_eq!(y.e_vv, ts.a_exxxx);
        assert!(close(y.e_hh, ts.a_exxxx * ts.re_xyyx, 1e-15));
        assert_eq!(y.e_vh.norm(), 0.0);
        assert_eq!(y.r_vh.norm(), 0.0);
        assert_eq!(y.r_vv.norm(), 0.0);
    }

    #[test]
    fn raman_vv45_equals_hh0() {
        let ts = TensorSet::table1();
        let y0 = y_factors(&ts, 0.0);
        let y45 = y_factors(&ts, FRAC_PI_4);
        assert!(close(y45.r_vv, ts.a_exxxx * 171.0, 1e-14));
        assert!(close(y45.r_vv, y0.r_hh, 1e-14));
        assert!(y45.r_hh.norm() < 1e-10);
    }

    #[test]
    fn electronic_hh45_from_table() {
        let ts = TensorSet::table1();
        let y45 = y_factors(&ts, FRAC_PI_4);
        let ratio = y45.e_hh / ts.a_exxxx;
        assert!(close(ratio, Complex64::new(0.24, 0.0), 1e-14), "{ratio}");
        let from_counts = (1.60e3f64 / 27.5e3).sqrt();
        assert!((ratio.norm() - from_counts).abs() < 0.005);
    }

    #[test]
    fn vh_vanishes_at_zero_and_diagonal_and_flips_sign() {
        let ts = TensorSet::table1();
        assert!(y_factors(&ts, FRAC_PI_4).e_vh.norm() < 1e-14 * ts.a_exxxx.norm());
        let below = y_factors(&ts, FRAC_PI_4 - 0.01).e_vh;
        let above = y_factors(&ts, FRAC_PI_4 + 0.01).e_vh;
        assert!((below + above).norm() < 1e-12 * below.norm());
        assert!(below.norm() > 0.0);
    }

    #[test]
    fn isotropic_sum_is_angle_invariant() {
        let ts = TensorSet {
            re_xyyx: Complex64::new(1.0, 0.0),
            re_sum: Complex64::new(0.0, 0.0),
            ..TensorSet::table1()
        };
        let reference = {
            let y = y_factors(&ts, 0.0);
            y.e_vv + y.e_hh
        };
        for k in 0..40 {
            let y = y_factors(&ts, k as f64 * 0.1);
            assert!(close(y.e_vv + y.e_hh, reference, 1e-13));
        }
    }

    #[test]
    fn periodicity_reduce_examples() {
        let deg = |d: f64| d.to_radians();
        let r = periodicity_reduce(deg(90.0));
        assert!(r.theta.abs() < 1e-15);
        let r = periodicity_reduce(deg(60.0));
        assert!((r.theta - deg(30.0)).abs() < 1e-14);
        assert_eq!(r.vh_sign, -1.0);
        let r = periodicity_reduce(deg(-10.0));
        assert!((r.theta - deg(10.0)).abs() < 1e-14);
        assert_eq!(r.vh_sign, -1.0);
        let r = periodicity_reduce(deg(100.0));
        assert!((r.theta - deg(10.0)).abs() < 1e-14);
        assert_eq!(r.vh_sign, 1.0);
    }

    #[test]
    fn reduced_angle_reproduces_factors() {
        let ts = TensorSet::fig1_fit();
        for k in -40..40 {
            let theta = k as f64 * 0.137;
            let red = periodicity_reduce(theta);
            assert!((0.0..=FRAC_PI_4 + 1e-15).contains(&red.theta));
            let full = y_factors(&ts, theta);
            let folded = y_factors(&ts, red.theta);
            let tol = 1e-12;
            assert!(close(full.e_vv, folded.e_vv, tol));
            assert!(close(full.e_hh, folded.e_hh, tol));
            assert!(close(full.r_vv, folded.r_vv, tol));
            assert!(close(full.r_hh, folded.r_hh, tol));
            assert!(close(full.e_vh, red.vh_sign * folded.e_vh, tol));
            assert!(close(full.r_vh, red.vh_sign * folded.r_vh, tol));
        }
    }

    #[test]
    fn fig1_fit_preset_reproduces_caption_factors() {
        let ts = TensorSet::fig1_fit();
        let a = ts.a_exxxx;
        let y0 = y_factors(&ts, 0.0);
        let y45 = y_factors(&ts, FRAC_PI_4);
        assert!(close(y0.e_hh / a, Complex64::new(0.68, -0.12), 1e-14));
        assert!(close(y45.e_vv / a, Complex64::new(1.61, -0.55), 1e-14));
        assert!(close(y0.r_hh, Complex64::new(51450.0, 0.0), 1e-14));
        assert!(close(y45.r_vv, Complex64::new(51450.0, 0.0), 1e-14));
        let expected = 51450.0 / 27.5e3f64.sqrt();
        assert!((ts.rr_xyyx.re - expected).abs() < 1e-10);
        assert!((ts.rr_xyyx.re - 310.26).abs() < 0.01);
        assert!(close(ts.re_xyyx, Complex64::new(0.68, -0.12), 1e-14));
    }

    #[test]
    fn ideal_reference_ratios() {
        let ts = TensorSet::ideal_centrosymmetric();
        let y0 = y_factors(&ts, 0.0);
        assert!(close(y0.e_vv, 3.0 * y0.e_hh, 1e-14));
        assert!(close(ts.re_sum, 2.0 * ts.re_xyyx, 1e-15));
    }

    #[test]
    fn invert_round_trip_presets() {
        for preset in Preset::ALL {
            let ts = preset.tensor();
            for use_vv in [true, false] {
                let back = invert_y(&measured_from(&ts, use_vv)).unwrap();
                for (x, y) in [
                    (back.a_exxxx, ts.a_exxxx),
                    (back.re_xyyx, ts.re_xyyx),
                    (back.re_sum, ts.re_sum),
                    (back.rr_xxxx, ts.rr_xxxx),
                    (back.rr_xyyx, ts.rr_xyyx),
                    (back.rr_sum, ts.rr_sum),
                ] {
                    assert!(close(x, y, 1e-12), "{preset}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn invert_rejects_zero_reference() {
        let z = Complex64::new(0.0, 0.0);
        let m = MeasuredY {
            e_vv0: z,
            e_hh0: z,
            e_45: Diagonal45::Vv(z),
            r_vv0: z,
            r_hh0: z,
            r_45: Diagonal45::Hh(z),
        };
        assert!(matches!(invert_y(&m), Err(Error::Singular(_))));
    }

    #[test]
    fn preset_names_and_json() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("diamond".parse::<Preset>().is_err());
        let ts = TensorSet::table1();
        let json = serde_json::to_string(&ts).unwrap();
        assert_eq!(TensorSet::from_json_str(&json).unwrap(), ts);
        let bad = json.replacen("\"rr_sum\"", "\"rr_other\"", 1);
        assert!(TensorSet::from_json_str(&bad).is_err());
    }
}
