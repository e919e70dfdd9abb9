//! Least-squares extraction of amplitude factors from coincidence spectra.
//!
//! Model per configuration, under symmetric detection (`f^E = 1`):
//!
//! * flat configurations (VV0, HH45, VH0, VH45): `I = a²` with `a ≥ 0`;
//! * resonant configurations (HH0, VV45): `I(δω) = |y_E + y_R f^R(δω)|²` with a
//!   complex `y_E` per configuration and one real `y_R ≥ 0` shared by both.
//!
//! The unobservable global phase is fixed by taking the VV0 factor positive
//! real and `y_R` real. Flat factors decouple from everything else and have the
//! closed form `a = √mean(I)`; the resonant block is solved by
//! Levenberg-Marquardt from a linear least-squares starting point.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{complex_pair, Complex64};
use crate::spectra::{Configuration, SpectrumSeries};
use crate::spectral::{f_r_detuned, SpectralParams};
use crate::tensor::{invert_y, Diagonal45, MeasuredY, TensorSet};

pub fn is_resonant(c: Configuration) -> bool {
    c == Configuration::HH0 || c == Configuration::VV45
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub observations: Vec<(Configuration, SpectrumSeries)>,
    pub sp: SpectralParams,
}

impl FitProblem {
    pub fn new(observations: Vec<(Configuration, SpectrumSeries)>, sp: SpectralParams) -> Result<Self> {
        sp.validate()?;
        let mut seen = Vec::new();
        for (c, s) in &observations {
            s.validate()?;
            if seen.contains(c) {
                return Err(Error::invalid("observations", format!("configuration {c} given twice")));
            }
            seen.push(*c);
        }
        if observations.is_empty() {
            return Err(Error::invalid("observations", "no spectra to fit"));
        }
        Ok(FitProblem { observations, sp })
    }

    pub fn has_resonant(&self) -> bool {
        self.observations.iter().any(|(c, _)| is_resonant(*c))
    }
}

/// Fit options; serialized as the fit configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Scaled-gradient tolerance: stop when every `|J_jᵀ r| / (‖J_j‖ ‖r‖)`
    /// falls below it.
    pub gradient_tol: f64,
    /// Relative parameter-step tolerance.
    pub step_tol: f64,
    /// Freeze `y_R` at this value instead of fitting it.
    pub fixed_y_r: Option<f64>,
    /// Lower and upper bound on `y_R` (count-amplitude units).
    pub y_r_bounds: Option<[f64; 2]>,
    /// Optional starting values for the resonant electronic factors by label.
    #[serde(with = "init_map")]
    pub init_y_e: BTreeMap<String, Complex64>,
    pub init_y_r: Option<f64>,
    /// Number of starting points; starts beyond the first are seeded
    /// perturbations of it.
    pub starts: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 200,
            gradient_tol: 1e-13,
            step_tol: 1e-15,
            fixed_y_r: None,
            y_r_bounds: None,
            init_y_e: BTreeMap::new(),
            init_y_r: None,
            starts: 1,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: FitConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be positive"));
        }
        if !(self.gradient_tol > 0.0 && self.step_tol > 0.0) {
            return Err(Error::invalid("tolerances", "must be positive"));
        }
        if self.starts == 0 {
            return Err(Error::invalid("starts", "must be at least 1"));
        }
        if let Some([lo, hi]) = self.y_r_bounds {
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::invalid("y_r_bounds", "need 0 <= lower <= upper < inf"));
            }
        }
        if let Some(v) = self.fixed_y_r {
            if !v.is_finite() {
                return Err(Error::invalid("fixed_y_r", "must be finite"));
            }
        }
        for label in self.init_y_e.keys() {
            let c: Configuration = label.parse()?;
            if !is_resonant(c) {
                return Err(Error::invalid(
                    "init_y_e",
                    format!("{label} is not a resonant configuration"),
                ));
            }
        }
        Ok(())
    }
}

mod init_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "complex_pair")] Complex64);

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, Complex64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let w: BTreeMap<&String, Wrap> = m.iter().map(|(k, v)| (k, Wrap(*v))).collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<String, Complex64>, D::Error> {
        let w: BTreeMap<String, Wrap> = BTreeMap::deserialize(d)?;
        Ok(w.into_iter().map(|(k, v)| (k, v.0)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub uncertainty: f64,
}

/// Electronic factor of one configuration, and its ratio to VV0 when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationY {
    pub label: String,
    #[serde(with = "complex_pair")]
    pub y_e: Complex64,
    #[serde(with = "option_pair", default)]
    pub ratio_to_vv0: Option<Complex64>,
}

mod option_pair {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "complex_pair")] Complex64);

    pub fn serialize<S: Serializer>(v: &Option<Complex64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.map(Wrap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Complex64>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Real parameters in fit order: flat magnitudes, then `re`/`im` of each
    /// resonant factor, then `yR` when it was fitted.
    pub parameters: Vec<Parameter>,
    /// Covariance of `parameters`, `s² (JᵀJ)⁻¹` with `s²` the residual variance.
    pub covariance: Vec<Vec<f64>>,
    pub configurations: Vec<ConfigurationY>,
    pub y_r: f64,
    pub y_r_fixed: bool,
    /// `y_R` divided by the VV0 factor, when VV0 was fitted.
    pub y_r_normalized: Option<f64>,
    pub residual_norm: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective `½‖r‖²` after each accepted step of the resonant block.
    pub cost_history: Vec<f64>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn y_e(&self, c: Configuration) -> Option<Complex64> {
        let label = c.to_string();
        self.configurations.iter().find(|y| y.label == label).map(|y| y.y_e)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Resonant-block parameter layout: `(re, im)` per resonant configuration,
/// then `y_R` if free.
struct Block<'a> {
    configs: Vec<(Configuration, &'a SpectrumSeries, Vec<Complex64>)>,
    y_r_fixed: Option<f64>,
}

impl Block<'_> {
    fn n_params(&self) -> usize {
        2 * self.configs.len() + usize::from(self.y_r_fixed.is_none())
    }

    fn n_points(&self) -> usize {
        self.configs.iter().map(|c| c.1.len()).sum()
    }

    fn y_r(&self, x: &DVector<f64>) -> f64 {
        self.y_r_fixed.unwrap_or_else(|| x[x.len() - 1])
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let yr = self.y_r(x);
        let mut r = DVector::zeros(self.n_points());
        let mut row = 0;
        for (k, (_, s, f)) in self.configs.iter().enumerate() {
            let ye = Complex64::new(x[2 * k], x[2 * k + 1]);
            for (i, fi) in f.iter().enumerate() {
                r[row] = (ye + yr * fi).norm_sqr() - s.intensity[i];
                row += 1;
            }
        }
        r
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let yr = self.y_r(x);
        let mut j = DMatrix::zeros(self.n_points(), self.n_params());
        let mut row = 0;
        for (k, (_, _, f)) in self.configs.iter().enumerate() {
            let ye = Complex64::new(x[2 * k], x[2 * k + 1]);
            for fi in f {
                let amp = ye + yr * fi;
                j[(row, 2 * k)] = 2.0 * amp.re;
                j[(row, 2 * k + 1)] = 2.0 * amp.im;
                if self.y_r_fixed.is_none() {
                    j[(row, 2 * self.configs.len())] = 2.0 * (amp.conj() * fi).re;
                }
                row += 1;
            }
        }
        j
    }
}

fn raman_kernel(sp: &SpectralParams, s: &SpectrumSeries) -> Vec<Complex64> {
    s.delta_omega
        .iter()
        .map(|&d| f_r_detuned(0.0, TAU * d - sp.omega_ph, sp))
        .collect()
}

/// Starting point from the linear model
/// `I = |y_E|² + 2 Re(y_E y_R*) Re f + 2 Im(y_E y_R*) Im f + y_R² |f|²`.
fn linear_start(block: &Block) -> Result<DVector<f64>> {
    let mut x = DVector::zeros(block.n_params());
    let mut cross = Vec::new();
    let mut yr2 = Vec::new();
    for (c, s, f) in &block.configs {
        let a = DMatrix::from_fn(f.len(), 4, |i, k| match k {
            0 => 1.0,
            1 => 2.0 * f[i].re,
            2 => 2.0 * f[i].im,
            _ => f[i].norm_sqr(),
        });
        let b = DVector::from_column_slice(&s.intensity);
        let p = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::RankDeficient(format!("{c}: {e}")))?;
        cross.push(Complex64::new(p[1], p[2]));
        yr2.push(p[3]);
    }
    let positive: Vec<f64> = yr2.iter().copied().filter(|v| *v > 0.0).collect();
    let yr = match block.y_r_fixed {
        Some(v) => v,
        None if positive.is_empty() => 1.0,
        None => (positive.iter().sum::<f64>() / positive.len() as f64).sqrt(),
    };
    for (k, xc) in cross.iter().enumerate() {
        let ye = if yr != 0.0 { xc / yr } else { Complex64::new(0.0, 0.0) };
        x[2 * k] = ye.re;
        x[2 * k + 1] = ye.im;
    }
    if block.y_r_fixed.is_none() {
        let n = x.len();
        x[n - 1] = yr;
    }
    Ok(x)
}

struct LmOutcome {
    x: DVector<f64>,
    cost: f64,
    converged: bool,
    iterations: usize,
    history: Vec<f64>,
}

fn scaled_gradient(j: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let g = j.transpose() * r;
    (0..j.ncols())
        .map(|c| {
            let cn = j.column(c).norm();
            if cn == 0.0 {
                0.0
            } else {
                g[c].abs() / (cn * rn)
            }
        })
        .fold(0.0, f64::max)
}

fn clamp_y_r(block: &Block, x: &mut DVector<f64>, bounds: Option<[f64; 2]>) {
    if let (None, Some([lo, hi])) = (block.y_r_fixed, bounds) {
        let n = x.len();
        x[n - 1] = x[n - 1].clamp(lo, hi);
    }
}

fn levenberg_marquardt(block: &Block, x0: DVector<f64>, cfg: &FitConfig) -> Result<LmOutcome> {
    let mut x = x0;
    clamp_y_r(block, &mut x, cfg.y_r_bounds);
    let mut r = block.residuals(&x);
    let mut cost = 0.5 * r.norm_squared();
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let j = block.jacobian(&x);
        if scaled_gradient(&j, &r) <= cfg.gradient_tol || cost == 0.0 {
            converged = true;
            break;
        }
        let jtj = j.transpose() * &j;
        if (0..jtj.ncols()).any(|c| jtj[(c, c)] == 0.0) {
            return Err(Error::RankDeficient(
                "a parameter has no influence on the residuals".into(),
            ));
        }
        let g = j.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e20 {
            let mut a = jtj.clone();
            for c in 0..a.ncols() {
                a[(c, c)] *= 1.0 + lambda;
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let mut trial = &x + &step;
            clamp_y_r(block, &mut trial, cfg.y_r_bounds);
            let r_trial = block.residuals(&trial);
            let c_trial = 0.5 * r_trial.norm_squared();
            if c_trial < cost {
                let small_step = step
                    .iter()
                    .zip(x.iter())
                    .all(|(d, v)| d.abs() <= cfg.step_tol * (v.abs() + cfg.step_tol));
                x = trial;
                r = r_trial;
                cost = c_trial;
                history.push(cost);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small_step {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No decrease is possible at working precision: a stationary point
            // when the gradient is already at round-off level.
            let j = block.jacobian(&x);
            converged = scaled_gradient(&j, &r) <= 1e-9;
            break;
        }
        if converged {
            break;
        }
    }
    Ok(LmOutcome {
        x,
        cost,
        converged,
        iterations,
        history,
    })
}

/// Fits the amplitude factors of every observed configuration.
///
/// A result with `converged == false` carries the best point reached.
pub fn fit_y(problem: &FitProblem, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let sp = &problem.sp;
    let y_r_fixed = cfg.fixed_y_r.or_else(|| (!problem.has_resonant()).then_some(0.0));

    // A vanishing fixed Raman factor makes every configuration flat.
    let zero_raman = y_r_fixed == Some(0.0);
    let flat: Vec<&(Configuration, SpectrumSeries)> = problem
        .observations
        .iter()
        .filter(|(c, _)| zero_raman || !is_resonant(*c))
        .collect();
    let block = Block {
        configs: problem
            .observations
            .iter()
            .filter(|(c, _)| !zero_raman && is_resonant(*c))
            .map(|(c, s)| (*c, s, raman_kernel(sp, s)))
            .collect(),
        y_r_fixed,
    };
    if block.n_points() < block.n_params() {
        return Err(Error::invalid(
            "observations",
            format!("{} points for {} free parameters", block.n_points(), block.n_params()),
        ));
    }

    let mut outcome = LmOutcome {
        x: DVector::zeros(0),
        cost: 0.0,
        converged: true,
        iterations: 0,
        history: vec![0.0],
    };
    if block.n_params() > 0 {
        let mut x0 = linear_start(&block)?;
        for (k, (c, _, _)) in block.configs.iter().enumerate() {
            if let Some(v) = cfg.init_y_e.get(&c.to_string()) {
                x0[2 * k] = v.re;
                x0[2 * k + 1] = v.im;
            }
        }
        if let (None, Some(v)) = (block.y_r_fixed, cfg.init_y_r) {
            let n = x0.len();
            x0[n - 1] = v;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut best: Option<LmOutcome> = None;
        for start in 0..cfg.starts {
            let mut x = x0.clone();
            if start > 0 {
                for v in x.iter_mut() {
                    *v *= 1.0 + rng.random_range(-0.5..0.5);
                }
            }
            let out = levenberg_marquardt(&block, x, cfg)?;
            if best.as_ref().is_none_or(|b| out.cost < b.cost) {
                best = Some(out);
            }
        }
        outcome = best.expect("at least one start");
    }

    // The sign of (y_E, y_R) is unobservable; keep y_R non-negative.
    let mut x = outcome.x.clone();
    let mut y_r = block.y_r(&x);
    if block.y_r_fixed.is_none() && y_r < 0.0 {
        x.neg_mut();
        y_r = -y_r;
    }

    let flat_values: Vec<(Configuration, f64)> = flat.iter().map(|(c, s)| (*c, s.mean().sqrt())).collect();
    let flat_residual: f64 = flat
        .iter()
        .zip(&flat_values)
        .map(|((_, s), (_, a))| s.intensity.iter().map(|v| (a * a - v).powi(2)).sum::<f64>())
        .sum();

    // Full Jacobian over flat and resonant parameters for the covariance.
    let n_flat = flat.len();
    let n_block = block.n_params();
    let n_points = flat.iter().map(|(_, s)| s.len()).sum::<usize>() + block.n_points();
    let n_par = n_flat + n_block;
    let mut jac = DMatrix::zeros(n_points, n_par);
    let mut res = DVector::zeros(n_points);
    let mut row = 0;
    for (k, ((_, s), (_, a))) in flat.iter().zip(&flat_values).enumerate() {
        for v in &s.intensity {
            jac[(row, k)] = 2.0 * a;
            res[row] = a * a - v;
            row += 1;
        }
    }
    if n_block > 0 {
        let jb = block.jacobian(&x);
        let rb = block.residuals(&x);
        jac.view_mut((row, n_flat), (block.n_points(), n_block)).copy_from(&jb);
        res.rows_mut(row, block.n_points()).copy_from(&rb);
    }
    let residual_norm = (flat_residual + 2.0 * outcome.cost).sqrt();
    let gradient_norm = (jac.transpose() * &res).norm();
    let dof = n_points.saturating_sub(n_par).max(1) as f64;
    let s2 = res.norm_squared() / dof;
    let jtj = jac.transpose() * &jac;
    let inv = jtj
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::RankDeficient("normal matrix is singular at the optimum".into()))?;
    let cov = inv * s2;

    let mut names = Vec::with_capacity(n_par);
    let mut values = Vec::with_capacity(n_par);
    for (c, a) in &flat_values {
        names.push(c.to_string());
        values.push(*a);
    }
    for (k, (c, _, _)) in block.configs.iter().enumerate() {
        names.push(format!("{c}.re"));
        values.push(x[2 * k]);
        names.push(format!("{c}.im"));
        values.push(x[2 * k + 1]);
    }
    if block.y_r_fixed.is_none() {
        names.push("yR".into());
        values.push(y_r);
    }
    let parameters = names
        .into_iter()
        .zip(values)
        .enumerate()
        .map(|(i, (name, value))| Parameter {
            name,
            value,
            uncertainty: cov[(i, i)].max(0.0).sqrt(),
        })
        .collect();

    let vv0 = flat_values
        .iter()
        .find(|(c, _)| *c == Configuration::VV0)
        .map(|(_, a)| *a)
        .filter(|a| *a > 0.0);
    let mut configurations: Vec<ConfigurationY> = flat_values
        .iter()
        .map(|(c, a)| (c, Complex64::new(*a, 0.0)))
        .chain(
            block
                .configs
                .iter()
                .enumerate()
                .map(|(k, (c, _, _))| (c, Complex64::new(x[2 * k], x[2 * k + 1]))),
        )
        .map(|(c, y)| ConfigurationY {
            label: c.to_string(),
            y_e: y,
            ratio_to_vv0: vv0.map(|a| y / a),
        })
        .collect();
    configurations.sort_by_key(|y| {
        Configuration::ALL
            .iter()
            .position(|c| c.to_string() == y.label)
            .unwrap_or(usize::MAX)
    });

    Ok(FitResult {
        parameters,
        covariance: (0..n_par).map(|i| cov.row(i).iter().copied().collect()).collect(),
        configurations,
        y_r,
        y_r_fixed: block.y_r_fixed.is_some(),
        y_r_normalized: vv0.map(|a| y_r / a),
        residual_norm,
        gradient_norm,
        converged: outcome.converged,
        iterations: outcome.iterations,
        cost_history: outcome.history,
    })
}

/// Tensor ratios from fitted factors, with linearly propagated uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTensor {
    pub tensor: TensorSet,
    /// Standard deviations of (re, im) for each ratio, by field name.
    pub uncertainty: BTreeMap<String, [f64; 2]>,
}

const TENSOR_FIELDS: [&str; 6] = ["a_exxxx", "re_xyyx", "re_sum", "rr_xxxx", "rr_xyyx", "rr_sum"];

fn tensor_vector(ts: &TensorSet) -> [Complex64; 6] {
    [ts.a_exxxx, ts.re_xyyx, ts.re_sum, ts.rr_xxxx, ts.rr_xyyx, ts.rr_sum]
}

/// Converts fitted 0°/45° factors into tensor ratios.
///
/// Needs VV0, HH0 and one of VV45 or HH45. The Raman factor enters HH0 and
/// VV45 (`y_R`) and is absent from VV0 and HH45.
pub fn tensor_from_fit(result: &FitResult) -> Result<FittedTensor> {
    let names: Vec<&str> = result.parameters.iter().map(|p| p.name.as_str()).collect();
    let values: Vec<f64> = result.parameters.iter().map(|p| p.value).collect();
    let require = |c: Configuration| result.y_e(c).ok_or_else(|| Error::MissingConfiguration(c.to_string()));
    require(Configuration::VV0)?;
    require(Configuration::HH0)?;
    if result.y_e(Configuration::VV45).is_none() && result.y_e(Configuration::HH45).is_none() {
        return Err(Error::MissingConfiguration("VV45 or HH45".into()));
    }

    let fixed_y_r = result.y_r;
    let build = |v: &[f64]| -> Result<TensorSet> {
        let get = |name: &str| names.iter().position(|n| *n == name).map(|i| v[i]);
        let complex_of = |c: Configuration| -> Option<Complex64> {
            let l = c.to_string();
            match (get(&format!("{l}.re")), get(&format!("{l}.im"))) {
                (Some(re), Some(im)) => Some(Complex64::new(re, im)),
                _ => get(&l).map(|a| Complex64::new(a, 0.0)),
            }
        };
        let zero = Complex64::new(0.0, 0.0);
        let y_r = Complex64::new(get("yR").unwrap_or(fixed_y_r), 0.0);
        let e_vv0 = complex_of(Configuration::VV0).unwrap_or(zero);
        let e_hh0 = complex_of(Configuration::HH0).unwrap_or(zero);
        let (e_45, r_45) = match complex_of(Configuration::VV45) {
            Some(v) => (Diagonal45::Vv(v), Diagonal45::Vv(y_r)),
            None => (
                Diagonal45::Hh(complex_of(Configuration::HH45).unwrap_or(zero)),
                Diagonal45::Hh(zero),
            ),
        };
        let r_hh0 = if is_resonant_fitted(&names, Configuration::HH0) {
            y_r
        } else {
            zero
        };
        invert_y(&MeasuredY {
            e_vv0,
            e_hh0,
            e_45,
            r_vv0: zero,
            r_hh0,
            r_45,
        })
    };

    let tensor = build(&values)?;

    // Central differences of the real tensor components w.r.t. each parameter.
    let n = values.len();
    let mut grad = DMatrix::zeros(12, n);
    for p in 0..n {
        let h = 1e-6 * values[p].abs().max(1e-3);
        let mut up = values.clone();
        let mut dn = values.clone();
        up[p] += h;
        dn[p] -= h;
        let (tu, td) = (tensor_vector(&build(&up)?), tensor_vector(&build(&dn)?));
        for k in 0..6 {
            let d = (tu[k] - td[k]) / (2.0 * h);
            grad[(2 * k, p)] = d.re;
            grad[(2 * k + 1, p)] = d.im;
        }
    }
    let cov = DMatrix::from_fn(n, n, |i, j| result.covariance[i][j]);
    let out_cov = &grad * cov * grad.transpose();
    let uncertainty = TENSOR_FIELDS
        .iter()
        .enumerate()
        .map(|(k, name)| {
            (
                name.to_string(),
                [
                    out_cov[(2 * k, 2 * k)].max(0.0).sqrt(),
                    out_cov[(2 * k + 1, 2 * k + 1)].max(0.0).sqrt(),
                ],
            )
        })
        .collect();
    Ok(FittedTensor { tensor, uncertainty })
}

fn is_resonant_fitted(names: &[&str], c: Configuration) -> bool {
    names.contains(&format!("{c}.re").as_str())
}

/// Noiseless model spectra of the given configurations, as a fit input.
pub fn synthetic_observations(
    ts: &TensorSet,
    configs: &[Configuration],
    sp: &SpectralParams,
    grid: &[f64],
) -> Result<Vec<(Configuration, SpectrumSeries)>> {
    configs
        .iter()
        .map(|&c| {
            let mut s = crate::spectra::predict_spectrum(ts, c.theta(), c.pol, sp, grid)?;
            s.label = c.to_string();
            Ok((c, s))
        })
        .collect()
}

/// The four configurations used to determine the tensor ratios.
pub const STANDARD_CONFIGURATIONS: [Configuration; 4] = [
    Configuration::VV0,
    Configuration::HH0,
    Configuration::VV45,
    Configuration::HH45,
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{default_grid, with_multiplicative_noise};
    use crate::tensor::{DIAMOND_RAMAN_Y, DIAMOND_VV0_MEAN_COUNTS};

    fn synthetic() -> FitProblem {
        let sp = SpectralParams::diamond();
        let obs =
            synthetic_observations(&TensorSet::fig1_fit(), &STANDARD_CONFIGURATIONS, &sp, &default_grid()).unwrap();
        FitProblem::new(obs, sp).unwrap()
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn noiseless_round_trip() {
        let r = fit_y(&synthetic(), &FitConfig::default()).unwrap();
        assert!(r.converged);
        let a = r.y_e(Configuration::VV0).unwrap();
        assert!((a.re - DIAMOND_VV0_MEAN_COUNTS.sqrt()).abs() < 1e-9 * a.re);
        assert!(rel(r.y_e(Configuration::HH0).unwrap() / a, Complex64::new(0.68, -0.12)) < 1e-6);
        assert!(rel(r.y_e(Configuration::VV45).unwrap() / a, Complex64::new(1.61, -0.55)) < 1e-6);
        assert!((r.y_r / DIAMOND_RAMAN_Y - 1.0).abs() < 1e-6);
        let norm = DIAMOND_RAMAN_Y / DIAMOND_VV0_MEAN_COUNTS.sqrt();
        assert!((r.y_r_normalized.unwrap() / norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cost_history_never_increases() {
        let cfg = FitConfig {
            init_y_e: [("HH0".to_string(), Complex64::new(50.0, 30.0))].into(),
            init_y_r: Some(20000.0),
            ..FitConfig::default()
        };
        let r = fit_y(&synthetic(), &cfg).unwrap();
        assert!(r.cost_history.len() > 2);
        assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn noisy_fit_is_stationary() {
        let p = synthetic();
        let obs = p
            .observations
            .iter()
            .enumerate()
            .map(|(k, (c, s))| (*c, with_multiplicative_noise(s, 0.02, 11 + k as u64).unwrap()))
            .collect();
        let p = FitProblem::new(obs, p.sp).unwrap();
        let r = fit_y(&p, &FitConfig::default()).unwrap();
        assert!(r.converged);
        assert!(
            r.gradient_norm <= 1e-8 * r.residual_norm,
            "{} {}",
            r.gradient_norm,
            r.residual_norm
        );
        assert!(r.param("yR").unwrap().uncertainty > 0.0);
    }

    #[test]
    fn scale_gauge_invariance() {
        let k = 7.3;
        let p = synthetic();
        let scaled: Vec<_> = p
            .observations
            .iter()
            .map(|(c, s)| {
                let mut s = s.clone();
                s.intensity.iter_mut().for_each(|v| *v *= k);
                (*c, s)
            })
            .collect();
        let a = fit_y(&p, &FitConfig::default()).unwrap();
        let b = fit_y(&FitProblem::new(scaled, p.sp).unwrap(), &FitConfig::default()).unwrap();
        for c in STANDARD_CONFIGURATIONS {
            let (ya, yb) = (
                a.configurations.iter().find(|y| y.label == c.to_string()).unwrap(),
                b.configurations.iter().find(|y| y.label == c.to_string()).unwrap(),
            );
            assert!((ya.ratio_to_vv0.unwrap() - yb.ratio_to_vv0.unwrap()).norm() < 1e-10);
        }
        assert!((a.y_r_normalized.unwrap() / b.y_r_normalized.unwrap() - 1.0).abs() < 1e-10);
        assert!((b.y_r / a.y_r - k.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn flat_only_with_frozen_raman() {
        let grid = default_grid();
        let s = SpectrumSeries::new(
            grid.clone(),
            grid.iter().map(|x| 100.0 + (x * 0.37).sin()).collect(),
            "VV0",
        )
        .unwrap();
        let mean = s.mean();
        let p = FitProblem::new(vec![(Configuration::VV0, s)], SpectralParams::diamond()).unwrap();
        let cfg = FitConfig {
            fixed_y_r: Some(0.0),
            ..FitConfig::default()
        };
        let r = fit_y(&p, &cfg).unwrap();
        assert_eq!(r.y_e(Configuration::VV0).unwrap().re, mean.sqrt());
    }

    #[test]
    fn sign_convention_keeps_raman_positive() {
        let cfg = FitConfig {
            init_y_e: [
                ("HH0".to_string(), Complex64::new(-112.0, 20.0)),
                ("VV45".to_string(), Complex64::new(-267.0, 91.0)),
            ]
            .into(),
            init_y_r: Some(-50000.0),
            ..FitConfig::default()
        };
        let r = fit_y(&synthetic(), &cfg).unwrap();
        assert!(r.y_r > 0.0);
        let a = r.y_e(Configuration::VV0).unwrap();
        assert!(rel(r.y_e(Configuration::HH0).unwrap() / a, Complex64::new(0.68, -0.12)) < 1e-6);
    }

    #[test]
    fn rejects_too_few_points() {
        let s = SpectrumSeries::new(vec![1300.0, 1301.0], vec![1.0, 2.0], "HH0").unwrap();
        let p = FitProblem::new(vec![(Configuration::HH0, s)], SpectralParams::diamond()).unwrap();
        assert!(fit_y(&p, &FitConfig::default()).is_err());
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let cfg = FitConfig {
            max_iterations: 1,
            init_y_e: [("HH0".to_string(), Complex64::new(10.0, 10.0))].into(),
            init_y_r: Some(1000.0),
            ..FitConfig::default()
        };
        let r = fit_y(&synthetic(), &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn tensor_from_exact_fit() {
        let r = fit_y(&synthetic(), &FitConfig::default()).unwrap();
        let t = tensor_from_fit(&r).unwrap().tensor;
        assert!(rel(t.re_xyyx, Complex64::new(0.68, -0.12)) < 1e-6);
        let preset = TensorSet::fig1_fit();
        assert!(rel(t.rr_xyyx, preset.rr_xyyx) < 1e-6);
        assert!(rel(t.re_sum, preset.re_sum) < 1e-6);
    }

    #[test]
    fn tensor_from_fit_requires_configurations() {
        let mut r = fit_y(&synthetic(), &FitConfig::default()).unwrap();
        r.configurations.retain(|y| y.label != "HH0");
        assert!(matches!(tensor_from_fit(&r), Err(Error::MissingConfiguration(_))));
    }

    #[test]
    fn table_forward_backward_identity() {
        for use_vv45 in [true, false] {
            let ts = TensorSet::table1();
            let m = crate::tensor::measured_from(&ts, use_vv45);
            let back = invert_y(&m).unwrap();
            for (a, b) in tensor_vector(&back).iter().zip(tensor_vector(&ts)) {
                assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
            }
        }
    }

    #[test]
    fn uncertainty_propagates_proportionally() {
        let a = 165.0;
        let hh0 = Complex64::new(0.68, -0.12) * a;
        let names = ["VV0", "HH45", "HH0.re", "HH0.im", "VV45.re", "VV45.im", "yR"];
        let values = [a, 40.0, hh0.re, hh0.im, 1.61 * a, -0.55 * a, 51450.0];
        let n = names.len();
        let mut covariance = vec![vec![0.0; n]; n];
        covariance[2][2] = (0.1 * hh0.re).powi(2);
        let r = FitResult {
            parameters: names
                .iter()
                .zip(values)
                .map(|(nm, v)| Parameter {
                    name: nm.to_string(),
                    value: v,
                    uncertainty: 0.0,
                })
                .collect(),
            covariance,
            configurations: vec![
                ConfigurationY {
                    label: "VV0".into(),
                    y_e: Complex64::new(a, 0.0),
                    ratio_to_vv0: None,
                },
                ConfigurationY {
                    label: "HH0".into(),
                    y_e: hh0,
                    ratio_to_vv0: None,
                },
                ConfigurationY {
                    label: "VV45".into(),
                    y_e: Complex64::new(values[4], values[5]),
                    ratio_to_vv0: None,
                },
            ],
            y_r: 51450.0,
            y_r_fixed: false,
            y_r_normalized: None,
            residual_norm: 0.0,
            gradient_norm: 0.0,
            converged: true,
            iterations: 1,
            cost_history: vec![0.0],
        };
        let t = tensor_from_fit(&r).unwrap();
        let s = t.uncertainty["re_xyyx"];
        assert!((s[0] / (0.1 * t.tensor.re_xyyx.re) - 1.0).abs() < 1e-6, "{s:?}");
        assert!(s[1] < 1e-9);
        assert!(t.uncertainty["rr_xyyx"][0] < 1e-9);
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let cfg = FitConfig {
            init_y_e: [("HH0".to_string(), Complex64::new(1.0, -2.0))].into(),
            y_r_bounds: Some([0.0, 1e6]),
            seed: 3,
            ..FitConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(FitConfig::from_json_str(&text).unwrap(), cfg);
        assert!(FitConfig::from_json_str(r#"{"bogus": 1}"#).is_err());
        assert!(FitConfig::from_json_str(r#"{"init_y_e": {"VV0": {"re": 1}}}"#).is_err());
        assert!(FitConfig::from_json_str(r#"{"starts": 0}"#).is_err());
    }
}
