//! Coincidence spectra, accidental-count model and g²(0) curves.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Complex64;
use crate::spectral::{f_r_detuned, SpectralParams};
use crate::tensor::{y_factors, Polarization, TensorSet};

/// Intensity over a grid of Raman shifts (cm⁻¹) for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSeries {
    pub delta_omega: Vec<f64>,
    pub intensity: Vec<f64>,
    pub label: String,
}

impl SpectrumSeries {
    pub fn new(delta_omega: Vec<f64>, intensity: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let s = SpectrumSeries {
            delta_omega,
            intensity,
            label: label.into(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_omega.len() != self.intensity.len() {
            return Err(Error::GridMismatch(format!(
                "{}: {} shifts but {} intensities",
                self.label,
                self.delta_omega.len(),
                self.intensity.len()
            )));
        }
        check_grid(&self.delta_omega)?;
        if let Some(v) = self.intensity.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(
                "intensity",
                format!("{}: value {v} is not a non-negative number", self.label),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.delta_omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_omega.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.intensity.iter().sum::<f64>() / self.len().max(1) as f64
    }

    /// `(max − min) / mean` of the intensity.
    pub fn relative_variation(&self) -> f64 {
        let (lo, hi) = self
            .intensity
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        (hi - lo) / self.mean()
    }

    /// Intensity at the grid point nearest to `shift`.
    pub fn at(&self, shift: f64) -> Option<f64> {
        let i = self
            .delta_omega
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - shift).abs().total_cmp(&(b.1 - shift).abs()))?
            .0;
        Some(self.intensity[i])
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must not be empty"));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("grid", "values must be finite"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid", "must be strictly increasing"));
    }
    Ok(())
}

/// `lo, lo + step, …` up to and including `hi` (within a small tolerance).
pub fn linear_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && lo.is_finite() && hi.is_finite() && hi >= lo) {
        return Err(Error::invalid("grid", format!("bad range {lo}..{hi} step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| lo + i as f64 * step).collect())
}

/// 850 to 1500 cm⁻¹ in 1 cm⁻¹ steps.
pub fn default_grid() -> Vec<f64> {
    (850..=1500).map(f64::from).collect()
}

/// A measured configuration: polarization pair and crystal angle (0° or 45°).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub pol: Polarization,
    pub theta_deg: u8,
}

impl Configuration {
    pub const VV0: Self = Self::new(Polarization::VV, 0);
    pub const HH0: Self = Self::new(Polarization::HH, 0);
    pub const VV45: Self = Self::new(Polarization::VV, 45);
    pub const HH45: Self = Self::new(Polarization::HH, 45);
    pub const VH0: Self = Self::new(Polarization::VH, 0);
    pub const VH45: Self = Self::new(Polarization::VH, 45);
    pub const ALL: [Self; 6] = [Self::VV0, Self::HH0, Self::VV45, Self::HH45, Self::VH0, Self::VH45];

    const fn new(pol: Polarization, theta_deg: u8) -> Self {
        Configuration { pol, theta_deg }
    }

    pub fn theta(self) -> f64 {
        f64::from(self.theta_deg).to_radians()
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.pol, self.theta_deg)
    }
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        Configuration::ALL
            .into_iter()
            .find(|c| c.to_string() == t)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown configuration label `{s}` (expected VV0, HH0, VV45, HH45, VH0 or VH45)"
                ))
            })
    }
}

/// Label for an arbitrary angle, e.g. `HH0`, `VV22.5`.
pub fn config_label(pol: Polarization, theta: f64) -> String {
    let deg = theta.to_degrees();
    let rounded = (deg * 1e6).round() / 1e6;
    format!("{pol}{rounded}")
}

/// Amplitude of a polarization pair under symmetric detection (`ω̄ = 0`,
/// hence `f^E = 1`) at the Raman shift `shift_cm1`.
pub fn symmetric_amplitude(
    ts: &TensorSet,
    theta: f64,
    pol: Polarization,
    sp: &SpectralParams,
    shift_cm1: f64,
) -> Complex64 {
    let y = y_factors(ts, theta);
    let fr = f_r_detuned(0.0, TAU * shift_cm1 - sp.omega_ph, sp);
    y.electronic(pol) + y.raman(pol) * fr
}

/// Predicted coincidence counts `|Y^E + Y^R f^R|²` over the grid.
pub fn predict_spectrum(
    ts: &TensorSet,
    theta: f64,
    pol: Polarization,
    sp: &SpectralParams,
    grid: &[f64],
) -> Result<SpectrumSeries> {
    check_grid(grid)?;
    let intensity = grid
        .iter()
        .map(|&d| symmetric_amplitude(ts, theta, pol, sp, d).norm_sqr())
        .collect();
    SpectrumSeries::new(grid.to_vec(), intensity, config_label(pol, theta))
}

/// Pointwise `g²(0) = (correlated + accidental) / accidental`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Series {
    pub delta_omega: Vec<f64>,
    pub g2: Vec<f64>,
    pub accidental: Vec<f64>,
}

impl G2Series {
    pub fn at(&self, shift: f64) -> Option<f64> {
        let i = self
            .delta_omega
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - shift).abs().total_cmp(&(b.1 - shift).abs()))?
            .0;
        Some(self.g2[i])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delta_omega_cm1", "g2", "accidental"])?;
        for i in 0..self.delta_omega.len() {
            w.write_record([
                self.delta_omega[i].to_string(),
                self.g2[i].to_string(),
                self.accidental[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// Relative tolerance when matching two grids.
const GRID_TOL: f64 = 1e-9;

pub fn g2_curve(correlated: &SpectrumSeries, accidental: &SpectrumSeries) -> Result<G2Series> {
    correlated.validate()?;
    accidental.validate()?;
    if correlated.len() != accidental.len() {
        return Err(Error::GridMismatch(format!(
            "correlated has {} points, accidental has {}",
            correlated.len(),
            accidental.len()
        )));
    }
    for (a, b) in correlated.delta_omega.iter().zip(&accidental.delta_omega) {
        if (a - b).abs() > GRID_TOL * a.abs().max(b.abs()).max(1.0) {
            return Err(Error::GridMismatch(format!("shift {a} vs {b}")));
        }
    }
    let mut g2 = Vec::with_capacity(correlated.len());
    for i in 0..correlated.len() {
        let acc = accidental.intensity[i];
        if acc <= 0.0 {
            return Err(Error::NonPositiveAccidental {
                delta_omega: accidental.delta_omega[i],
            });
        }
        g2.push((correlated.intensity[i] + acc) / acc);
    }
    Ok(G2Series {
        delta_omega: correlated.delta_omega.clone(),
        g2,
        accidental: accidental.intensity.clone(),
    })
}

/// Stand-in accidental counts: `baseline + amplitude · |f^R(Ω)|² / |f^R(0)|²`,
/// a peak symmetric about the phonon shift.
pub fn accidental_model(sp: &SpectralParams, amplitude: f64, baseline: f64, grid: &[f64]) -> Result<SpectrumSeries> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::invalid("amplitude", "must be non-negative"));
    }
    if !(baseline >= 0.0 && baseline.is_finite()) {
        return Err(Error::invalid("baseline", "must be non-negative"));
    }
    check_grid(grid)?;
    let peak = f_r_detuned(0.0, 0.0, sp).norm_sqr();
    let intensity = grid
        .iter()
        .map(|&d| baseline + amplitude * f_r_detuned(0.0, TAU * d - sp.omega_ph, sp).norm_sqr() / peak)
        .collect();
    SpectrumSeries::new(grid.to_vec(), intensity, "accidental")
}

/// Multiplies every point by `1 + rel_sigma · N(0, 1)` (clamped at zero) with a
/// seeded generator.
pub fn with_multiplicative_noise(series: &SpectrumSeries, rel_sigma: f64, seed: u64) -> Result<SpectrumSeries> {
    let normal = Normal::new(0.0, rel_sigma).map_err(|e| Error::invalid("noise", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intensity = series
        .intensity
        .iter()
        .map(|&v| (v * (1.0 + normal.sample(&mut rng))).max(0.0))
        .collect();
    SpectrumSeries::new(series.delta_omega.clone(), intensity, series.label.clone())
}

/// Writes series as long-form CSV `delta_omega_cm1,intensity,label`.
pub fn write_spectra_csv<W: Write>(out: W, series: &[SpectrumSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delta_omega_cm1", "intensity", "label"])?;
    for s in series {
        for (d, i) in s.delta_omega.iter().zip(&s.intensity) {
            w.write_record([d.to_string(), i.to_string(), s.label.clone()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn write_spectra_file(path: &Path, series: &[SpectrumSeries]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_spectra_csv(std::io::BufWriter::new(f), series)
}

/// Spectra read from CSV, in order of first appearance of each label.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    pub series: Vec<SpectrumSeries>,
    /// Accidental counts per label when the file carries an `accidental` column.
    pub accidental: Vec<Option<SpectrumSeries>>,
}

impl SpectrumTable {
    pub fn get(&self, label: &str) -> Option<&SpectrumSeries> {
        self.series.iter().find(|s| s.label == label)
    }

    pub fn accidental_for(&self, label: &str) -> Option<&SpectrumSeries> {
        let i = self.series.iter().position(|s| s.label == label)?;
        self.accidental[i].as_ref()
    }
}

/// Shift, value and accidental columns of one label.
type Columns = (Vec<f64>, Vec<f64>, Vec<f64>);

/// Reads `delta_omega_cm1,intensity,label` or the measured layout
/// `delta_omega_cm1,counts,label[,accidental]`. Rows of each label must be
/// sorted by shift.
pub fn read_spectra_csv<R: Read>(input: R) -> Result<SpectrumTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let shift_col = col("delta_omega_cm1").ok_or_else(|| Error::Parse("missing column `delta_omega_cm1`".into()))?;
    let value_col = col("intensity")
        .or_else(|| col("counts"))
        .ok_or_else(|| Error::Parse("missing column `intensity` or `counts`".into()))?;
    let label_col = col("label").ok_or_else(|| Error::Parse("missing column `label`".into()))?;
    let acc_col = col("accidental");

    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Columns> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize, what: &str| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| Error::Parse(format!("row {}: `{raw}` is not a number ({what})", line + 2)))
        };
        let label = rec.get(label_col).unwrap_or("").to_string();
        if label.is_empty() {
            return Err(Error::Parse(format!("row {}: empty label", line + 2)));
        }
        let entry = rows.entry(label.clone()).or_insert_with(|| {
            order.push(label.clone());
            Default::default()
        });
        entry.0.push(num(shift_col, "shift")?);
        entry.1.push(num(value_col, "counts")?);
        if let Some(c) = acc_col {
            entry.2.push(num(c, "accidental")?);
        }
    }
    if order.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let mut series = Vec::new();
    let mut accidental = Vec::new();
    for label in order {
        let (d, v, a) = rows.remove(&label).unwrap_or_default();
        series.push(SpectrumSeries::new(d.clone(), v, label.clone())?);
        accidental.push(if acc_col.is_some() {
            Some(SpectrumSeries::new(d, a, format!("{label}-accidental"))?)
        } else {
            None
        });
    }
    Ok(SpectrumTable { series, accidental })
}

pub fn read_spectra_file(path: &Path) -> Result<SpectrumTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_spectra_csv(std::io::BufReader::new(f))
}

/// Reads a measured-spectrum file; every label must name one of the six
/// measured configurations.
pub fn read_measured_file(path: &Path) -> Result<Vec<(Configuration, SpectrumSeries, Option<SpectrumSeries>)>> {
    let table = read_spectra_file(path)?;
    measured_from_table(table)
}

pub fn measured_from_table(
    table: SpectrumTable,
) -> Result<Vec<(Configuration, SpectrumSeries, Option<SpectrumSeries>)>> {
    table
        .series
        .into_iter()
        .zip(table.accidental)
        .map(|(s, a)| Ok((s.label.parse::<Configuration>()?, s, a)))
        .collect()
}
