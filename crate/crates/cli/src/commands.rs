//! Subcommand implementations.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;

use sas_core::fit::{fit_y, tensor_from_fit, FitConfig, FitProblem, STANDARD_CONFIGURATIONS};
use sas_core::maps::{
    default_theta_axis, default_width_axis, export_grid, log_grid, sweep, EntanglementGrid, ExportFormat, SweepSpec,
    VerticalAxis,
};
use sas_core::spectra::{
    accidental_model, default_grid, g2_curve, linear_grid, predict_spectrum, read_measured_file, read_spectra_file,
    with_multiplicative_noise, write_spectra_file, Configuration, SpectrumSeries, SpectrumTable,
};
use sas_core::state::{build_state, chsh_optimal_angles, chsh_scan_optimum, Analyzer, ChshOptimum};
use sas_core::{Complex64, Error, FrequencyPair, Polarization, TwoPhotonState};

use crate::config::{resolve, CommonArgs, Resolved};

/// A fit that ran but did not meet its convergence tolerance.
#[derive(Debug, thiserror::Error)]
#[error("fit did not converge after {0} iterations")]
pub struct NotConverged(usize);

/// 1 for numerical failures, 2 for usage and input errors.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<NotConverged>() {
            return 1;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::DegenerateState
                | Error::Singular(_)
                | Error::QuadratureNotConverged { .. }
                | Error::RankDeficient(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

#[derive(Debug, Clone, Default, Args)]
pub struct GridArgs {
    /// First Raman shift of the grid (cm⁻¹).
    #[arg(long, value_name = "CM1")]
    pub grid_start: Option<f64>,
    /// Last Raman shift of the grid (cm⁻¹).
    #[arg(long, value_name = "CM1")]
    pub grid_stop: Option<f64>,
    /// Grid step (cm⁻¹).
    #[arg(long, value_name = "CM1")]
    pub grid_step: Option<f64>,
}

impl GridArgs {
    fn points(&self, r: &Resolved) -> Result<Vec<f64>> {
        let base = r.cfg.grid;
        if base.is_none() && self.grid_start.is_none() && self.grid_stop.is_none() && self.grid_step.is_none() {
            return Ok(default_grid());
        }
        let pick = |flag: Option<f64>, from_cfg: Option<f64>, default: f64| flag.or(from_cfg).unwrap_or(default);
        let start = pick(self.grid_start, base.map(|g| g.start_cm1), 850.0);
        let stop = pick(self.grid_stop, base.map(|g| g.stop_cm1), 1500.0);
        let step = pick(self.grid_step, base.map(|g| g.step_cm1), 1.0);
        Ok(linear_grid(start, stop, step)?)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Summaries name artifacts relative to the output directory so they do not
/// depend on where the run was written.
fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn header(r: &Resolved) -> String {
    let s = &r.spectroscopic;
    let width = if let Some(v) = s.fwhm_cm1 {
        format!("fwhm_cm1 {v}")
    } else if let Some(v) = s.width_cm1 {
        format!("width_cm1 {v}")
    } else {
        format!("width_angular {}", s.width_angular.unwrap_or(r.sp.width))
    };
    format!(
        "sas {}\ntensor {}\nspectral center_cm1 {} phonon_cm1 {} gamma_cm1 {} {} (W = {:.4} gamma)\n",
        env!("CARGO_PKG_VERSION"),
        r.tensor_name,
        s.center_cm1,
        s.phonon_cm1,
        s.gamma_cm1,
        width,
        r.sp.width / r.sp.gamma
    )
}

fn fmt_c(z: Complex64) -> String {
    format!("{:+.6}{:+.6}i", z.re, z.im)
}

#[derive(Debug, Clone, Copy, Serialize)]
struct C {
    re: f64,
    im: f64,
}

impl From<Complex64> for C {
    fn from(z: Complex64) -> Self {
        C { re: z.re, im: z.im }
    }
}

// state and bell

#[derive(Debug, Clone, Args)]
pub struct PointArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Crystal angle in degrees.
    #[arg(long, value_name = "DEG", allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Raman shift δω in cm⁻¹ (symmetric detection).
    #[arg(long, value_name = "CM1")]
    pub shift: Option<f64>,
    /// Half-width of the near-resonance region, in units of W.
    #[arg(long, value_name = "K")]
    pub hatch_half_width: Option<f64>,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct StateArgs {
    #[command(flatten)]
    pub point: PointArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BellArgs {
    #[command(flatten)]
    pub point: PointArgs,
    /// Also verify the optimum with an independent angle scan of this many
    /// polar steps.
    #[arg(long, value_name = "N")]
    pub scan_steps: Option<usize>,
}

struct Point {
    r: Resolved,
    theta_deg: f64,
    shift: f64,
    hatched: bool,
    state: TwoPhotonState,
}

fn point(a: &PointArgs) -> Result<Point> {
    let r = resolve(&a.common)?;
    let theta_deg = a
        .theta
        .or(r.cfg.theta_deg)
        .ok_or_else(|| anyhow!("missing --theta (or `theta_deg` in the run configuration)"))?;
    let shift = a
        .shift
        .or(r.cfg.shift_cm1)
        .ok_or_else(|| anyhow!("missing --shift (or `shift_cm1` in the run configuration)"))?;
    if !theta_deg.is_finite() {
        bail!("--theta: must be finite");
    }
    let k = a
        .hatch_half_width
        .or(r.cfg.map.as_ref().and_then(|m| m.hatch_half_width))
        .unwrap_or(1.0);
    if !(k >= 0.0 && k.is_finite()) {
        bail!("--hatch-half-width: must be non-negative");
    }
    let fp = FrequencyPair::symmetric(&r.sp, shift).context("--shift")?;
    let hatched = (TAU * shift - r.sp.omega_ph).abs() <= k * r.sp.width;
    if hatched {
        eprintln!(
            "warning: shift {shift} cm^-1 lies within {k} W of the phonon line ({} cm^-1); the flat-spectrum approximation breaks down there",
            r.sp.phonon_shift_cm1()
        );
    }
    let state = build_state(&r.tensor, theta_deg.to_radians(), &fp, &r.sp)
        .with_context(|| format!("state at theta {theta_deg} deg, shift {shift} cm^-1"))?;
    Ok(Point {
        r,
        theta_deg,
        shift,
        hatched,
        state,
    })
}

#[derive(Debug, Serialize)]
struct AnalyzerReport {
    angle_deg: f64,
    phase_deg: f64,
    linear: bool,
}

impl From<Analyzer> for AnalyzerReport {
    fn from(a: Analyzer) -> Self {
        AnalyzerReport {
            angle_deg: a.angle.to_degrees(),
            phase_deg: a.phase.to_degrees(),
            linear: a.is_linear(),
        }
    }
}

#[derive(Debug, Serialize)]
struct ChshReport {
    value: f64,
    a: AnalyzerReport,
    a_prime: AnalyzerReport,
    b: AnalyzerReport,
    b_prime: AnalyzerReport,
}

impl From<ChshOptimum> for ChshReport {
    fn from(o: ChshOptimum) -> Self {
        ChshReport {
            value: o.value,
            a: o.settings.a.into(),
            a_prime: o.settings.a_prime.into(),
            b: o.settings.b.into(),
            b_prime: o.settings.b_prime.into(),
        }
    }
}

#[derive(Debug, Serialize)]
struct StateReport {
    tensor: String,
    theta_deg: f64,
    shift_cm1: f64,
    hatched: bool,
    vv: C,
    hh: C,
    vh: C,
    hv: C,
    ratio_hh_vv: f64,
    entropy: f64,
    concurrence: f64,
    linear_entropy: f64,
    gisin_f: f64,
    schmidt_coefficients: [f64; 2],
    chsh: ChshReport,
}

fn state_report(p: &Point) -> StateReport {
    let s = &p.state;
    StateReport {
        tensor: p.r.tensor_name.clone(),
        theta_deg: p.theta_deg,
        shift_cm1: p.shift,
        hatched: p.hatched,
        vv: s.vv().into(),
        hh: s.hh().into(),
        vh: s.vh().into(),
        hv: s.hv().into(),
        ratio_hh_vv: s.hh().norm() / s.vv().norm(),
        entropy: s.entanglement_entropy(),
        concurrence: s.concurrence(),
        linear_entropy: s.linear_entropy(),
        gisin_f: s.gisin_f(),
        schmidt_coefficients: s.schmidt().coefficients,
        chsh: chsh_optimal_angles(s).into(),
    }
}

fn analyzer_line(name: &str, a: &AnalyzerReport) -> String {
    if a.linear {
        format!("  {name:<3} linear {:.4} deg\n", a.angle_deg)
    } else {
        format!(
            "  {name:<3} angle {:.4} deg phase {:.4} deg\n",
            a.angle_deg, a.phase_deg
        )
    }
}

fn chsh_text(c: &ChshReport) -> String {
    let mut s = format!("CHSH optimum {:.6}\n", c.value);
    s += &analyzer_line("a", &c.a);
    s += &analyzer_line("a'", &c.a_prime);
    s += &analyzer_line("b", &c.b);
    s += &analyzer_line("b'", &c.b_prime);
    s
}

fn state_text(p: &Point, rep: &StateReport) -> String {
    let s = &p.state;
    let mut out = header(&p.r);
    let _ = writeln!(
        out,
        "theta_deg {} shift_cm1 {}{}",
        p.theta_deg,
        p.shift,
        if p.hatched { " (near resonance)" } else { "" }
    );
    let _ = writeln!(out, "amplitudes");
    for (name, z) in [("VV", s.vv()), ("HH", s.hh()), ("VH", s.vh()), ("HV", s.hv())] {
        let _ = writeln!(out, "  {name} {}", fmt_c(z));
    }
    let _ = writeln!(out, "|c_HH/c_VV| {:.4}", rep.ratio_hh_vv);
    let _ = writeln!(out, "E {:.4}", rep.entropy);
    let _ = writeln!(out, "C {:.4}", rep.concurrence);
    let _ = writeln!(out, "P {:.4}", rep.linear_entropy);
    let _ = writeln!(out, "F {:.4}", rep.gisin_f);
    let _ = writeln!(
        out,
        "Schmidt coefficients {:.6} {:.6}",
        rep.schmidt_coefficients[0], rep.schmidt_coefficients[1]
    );
    out += &chsh_text(&rep.chsh);
    out
}

pub fn state(a: &StateArgs) -> Result<()> {
    let p = point(&a.point)?;
    let rep = state_report(&p);
    if a.point.json {
        println!("{}", serde_json::to_string_pretty(&rep)?);
    } else {
        print!("{}", state_text(&p, &rep));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BellReport {
    #[serde(flatten)]
    state: StateReport,
    classical_bound: f64,
    violates: bool,
    scan: Option<ChshReport>,
}

pub fn bell(a: &BellArgs) -> Result<()> {
    let p = point(&a.point)?;
    let scan = match a.scan_steps {
        Some(0) => bail!("--scan-steps: must be positive"),
        Some(n) => Some(chsh_scan_optimum(&p.state, n).into()),
        None => None,
    };
    let rep = BellReport {
        classical_bound: 2.0,
        violates: p.state.gisin_f() > 2.0 + 1e-12,
        state: state_report(&p),
        scan,
    };
    let mut text = header(&p.r);
    let _ = writeln!(text, "theta_deg {} shift_cm1 {}", p.theta_deg, p.shift);
    let _ = writeln!(
        text,
        "F {:.6} (classical bound 2, Tsirelson bound 2.828427)",
        rep.state.gisin_f
    );
    text += &chsh_text(&rep.state.chsh);
    if let Some(s) = &rep.scan {
        let _ = writeln!(
            text,
            "independent scan {:.6} (difference {:.2e})",
            s.value,
            s.value - rep.state.chsh.value
        );
    }
    let _ = writeln!(text, "violates CHSH {}", if rep.violates { "yes" } else { "no" });

    let dir = &p.r.out_dir;
    ensure_dir(dir)?;
    write_file(&dir.join("bell.json"), &(serde_json::to_string_pretty(&rep)? + "\n"))?;
    write_file(&dir.join("bell_summary.txt"), &text)?;
    if a.point.json {
        println!("{}", serde_json::to_string_pretty(&rep)?);
    } else {
        print!("{text}");
    }
    Ok(())
}

// spectrum and synth

fn parse_pol(s: &str) -> Result<Polarization> {
    Polarization::ALL
        .into_iter()
        .find(|p| p.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| anyhow!("unknown polarization `{s}` (VV, HH or VH)"))
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Configurations to predict, e.g. VV0,HH0,VV45,HH45.
    #[arg(long, value_delimiter = ',', value_name = "LABELS", conflicts_with_all = ["theta", "pol"])]
    pub configs: Vec<String>,
    /// Arbitrary crystal angle in degrees (with --pol).
    #[arg(long, value_name = "DEG", requires = "pol", allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Polarization pair VV, HH or VH (with --theta).
    #[arg(long, requires = "theta")]
    pub pol: Option<String>,
}

fn configurations(labels: &[String]) -> Result<Vec<Configuration>> {
    if labels.is_empty() {
        return Ok(STANDARD_CONFIGURATIONS.to_vec());
    }
    labels
        .iter()
        .map(|l| l.parse::<Configuration>().context("--configs"))
        .collect()
}

fn spectra_summary(title: &str, series: &[SpectrumSeries]) -> String {
    let mut out = format!("{title}\n");
    let _ = writeln!(
        out,
        "{:<8} {:>6} {:>14} {:>14} {:>14} {:>12}",
        "label", "points", "mean", "min", "max", "rel_var"
    );
    for s in series {
        let min = s.intensity.iter().copied().fold(f64::INFINITY, f64::min);
        let max = s.intensity.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>14.6e} {:>14.6e} {:>14.6e} {:>12.3e}",
            s.label,
            s.len(),
            s.mean(),
            min,
            max,
            s.relative_variation()
        );
    }
    out
}

pub fn spectrum(a: &SpectrumArgs) -> Result<()> {
    let r = resolve(&a.common)?;
    let grid = a.grid.points(&r)?;
    let series = match (&a.theta, &a.pol) {
        (Some(t), Some(p)) => vec![predict_spectrum(
            &r.tensor,
            t.to_radians(),
            parse_pol(p)?,
            &r.sp,
            &grid,
        )?],
        _ => configurations(&a.configs)?
            .into_iter()
            .map(|c| {
                let mut s = predict_spectrum(&r.tensor, c.theta(), c.pol, &r.sp, &grid)?;
                s.label = c.to_string();
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    ensure_dir(&r.out_dir)?;
    let csv = r.out_dir.join("spectrum.csv");
    write_spectra_file(&csv, &series)?;
    let text = header(&r) + &spectra_summary(&format!("predicted spectra -> {}", file_name(&csv)), &series);
    write_file(&r.out_dir.join("spectrum_summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Configurations to generate (default VV0,HH0,VV45,HH45).
    #[arg(long, value_delimiter = ',', value_name = "LABELS")]
    pub configs: Vec<String>,
    /// Relative Gaussian noise per point.
    #[arg(long, value_name = "SIGMA")]
    pub noise: Option<f64>,
    /// Noise seed; series k uses seed + k.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (default <out-dir>/synthetic.csv).
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let r = resolve(&a.common)?;
    let grid = a.grid.points(&r)?;
    let noise = a.noise.or(r.cfg.noise).unwrap_or(0.0);
    if !(noise >= 0.0 && noise.is_finite()) {
        bail!("--noise: must be non-negative");
    }
    let seed = a.seed.or(r.cfg.seed).unwrap_or(0);
    let mut series = Vec::new();
    for (k, c) in configurations(&a.configs)?.into_iter().enumerate() {
        let mut s = predict_spectrum(&r.tensor, c.theta(), c.pol, &r.sp, &grid)?;
        s.label = c.to_string();
        if noise > 0.0 {
            s = with_multiplicative_noise(&s, noise, seed.wrapping_add(k as u64))?;
        }
        series.push(s);
    }
    let path = a.output.clone().unwrap_or_else(|| r.out_dir.join("synthetic.csv"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_spectra_file(&path, &series)?;
    let mut text = header(&r);
    let _ = writeln!(text, "noise {noise} seed {seed}");
    text += &spectra_summary(&format!("synthetic spectra -> {}", file_name(&path)), &series);
    let summary = path.with_file_name(format!(
        "{}_summary.txt",
        path.file_stem().and_then(|s| s.to_str()).unwrap_or("synthetic")
    ));
    write_file(&summary, &text)?;
    print!("{text}");
    Ok(())
}

// g2

#[derive(Debug, Clone, Args)]
pub struct G2Args {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Correlated coincidence counts (spectra CSV).
    #[arg(long, value_name = "FILE")]
    pub correlated: PathBuf,
    /// Accidental coincidence counts (spectra CSV). Without it the
    /// `accidental` column of the correlated file or the model is used.
    #[arg(long, value_name = "FILE")]
    pub accidental: Option<PathBuf>,
    /// Series label to use when a file holds several.
    #[arg(long)]
    pub label: Option<String>,
    /// Peak height of the model accidental counts.
    #[arg(long, value_name = "COUNTS")]
    pub acc_amplitude: Option<f64>,
    /// Baseline of the model accidental counts.
    #[arg(long, value_name = "COUNTS")]
    pub acc_baseline: Option<f64>,
}

fn pick_series<'a>(table: &'a SpectrumTable, label: Option<&str>, file: &Path) -> Result<&'a SpectrumSeries> {
    match label {
        Some(l) => table
            .get(l)
            .ok_or_else(|| anyhow!("{}: no series labelled `{l}`", file.display())),
        None if table.series.len() == 1 => Ok(&table.series[0]),
        None => {
            let labels: Vec<&str> = table.series.iter().map(|s| s.label.as_str()).collect();
            bail!(
                "{}: several series ({}); choose one with --label",
                file.display(),
                labels.join(", ")
            )
        }
    }
}

pub fn g2(a: &G2Args) -> Result<()> {
    let r = resolve(&a.common)?;
    let table = read_spectra_file(&a.correlated).with_context(|| format!("--correlated {}", a.correlated.display()))?;
    let corr = pick_series(&table, a.label.as_deref(), &a.correlated)?;

    let model = match (a.acc_amplitude, a.acc_baseline, r.cfg.accidental) {
        (None, None, None) => None,
        (amp, base, cfg) => Some((
            amp.or(cfg.map(|c| c.amplitude)).unwrap_or(0.0),
            base.or(cfg.map(|c| c.baseline)).unwrap_or(0.0),
        )),
    };
    let (acc, source) = if let Some(path) = &a.accidental {
        let at = read_spectra_file(path).with_context(|| format!("--accidental {}", path.display()))?;
        let s = match at.get(&corr.label) {
            Some(s) => s,
            None => pick_series(&at, None, path)?,
        };
        (s.clone(), path.display().to_string())
    } else if let Some(s) = table.accidental_for(&corr.label) {
        (s.clone(), format!("{} (accidental column)", a.correlated.display()))
    } else if let Some((amp, base)) = model {
        (
            accidental_model(&r.sp, amp, base, &corr.delta_omega)?,
            format!("model amplitude {amp} baseline {base}"),
        )
    } else {
        bail!("no accidental counts: give --accidental, an `accidental` column, or --acc-amplitude/--acc-baseline");
    };

    let g = g2_curve(corr, &acc)?;
    ensure_dir(&r.out_dir)?;
    let csv = r.out_dir.join("g2.csv");
    let mut buf = Vec::new();
    g.write_csv(&mut buf)?;
    write_file(&csv, std::str::from_utf8(&buf)?)?;

    let (imin, imax) = extrema(&g.g2);
    let mut text = header(&r);
    let _ = writeln!(
        text,
        "g2 of `{}` from {} -> {}",
        corr.label,
        a.correlated.display(),
        file_name(&csv)
    );
    let _ = writeln!(text, "accidental {source}");
    let _ = writeln!(text, "points {}", g.g2.len());
    let _ = writeln!(text, "min g2 {:.6} at {} cm^-1", g.g2[imin], g.delta_omega[imin]);
    let _ = writeln!(text, "max g2 {:.6} at {} cm^-1", g.g2[imax], g.delta_omega[imax]);
    let _ = writeln!(text, "mean g2 {:.6}", g.g2.iter().sum::<f64>() / g.g2.len() as f64);
    write_file(&r.out_dir.join("g2_summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn extrema(v: &[f64]) -> (usize, usize) {
    let mut lo = 0;
    let mut hi = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[lo] {
            lo = i;
        }
        if *x > v[hi] {
            hi = i;
        }
    }
    (lo, hi)
}

// fit

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Measured spectra (delta_omega_cm1, counts, label).
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Hold the Raman factor at this value.
    #[arg(long, value_name = "Y")]
    pub fixed_y_r: Option<f64>,
    /// Iteration limit.
    #[arg(long, value_name = "N")]
    pub max_iterations: Option<usize>,
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let r = resolve(&a.common)?;
    let mut cfg: FitConfig = r.cfg.fit.clone().unwrap_or_default();
    if a.fixed_y_r.is_some() {
        cfg.fixed_y_r = a.fixed_y_r;
    }
    if let Some(n) = a.max_iterations {
        cfg.max_iterations = n;
    }
    cfg.validate().context("fit configuration")?;

    let measured = read_measured_file(&a.data).with_context(|| format!("--data {}", a.data.display()))?;
    let obs = measured.into_iter().map(|(c, s, _)| (c, s)).collect();
    let problem = FitProblem::new(obs, r.sp)?;
    let result = fit_y(&problem, &cfg)?;

    ensure_dir(&r.out_dir)?;
    write_file(&r.out_dir.join("fit_result.json"), &(result.to_json()? + "\n"))?;
    let tensor = tensor_from_fit(&result);
    if let Ok(t) = &tensor {
        write_file(
            &r.out_dir.join("fitted_tensor.json"),
            &(serde_json::to_string_pretty(t)? + "\n"),
        )?;
    }

    let mut text = header(&r);
    let _ = writeln!(text, "fit of {}", a.data.display());
    let _ = writeln!(
        text,
        "converged {} after {} iterations, residual norm {:.6e}, gradient norm {:.3e}",
        result.converged, result.iterations, result.residual_norm, result.gradient_norm
    );
    let _ = writeln!(text, "{:<8} {:>16} {:>14}", "param", "value", "uncertainty");
    for p in &result.parameters {
        let _ = writeln!(text, "{:<8} {:>16.8e} {:>14.4e}", p.name, p.value, p.uncertainty);
    }
    let _ = writeln!(
        text,
        "yR {:.6e}{}",
        result.y_r,
        if result.y_r_fixed { " (fixed)" } else { "" }
    );
    for c in &result.configurations {
        match c.ratio_to_vv0 {
            Some(q) => {
                let _ = writeln!(text, "Y_E({}) {}  ratio to VV0 {}", c.label, fmt_c(c.y_e), fmt_c(q));
            }
            None => {
                let _ = writeln!(text, "Y_E({}) {}", c.label, fmt_c(c.y_e));
            }
        }
    }
    match &tensor {
        Ok(t) => {
            let _ = writeln!(text, "tensor {}", serde_json::to_string(&t.tensor)?);
        }
        Err(e) => {
            let _ = writeln!(text, "tensor not determined: {e}");
        }
    }
    write_file(&r.out_dir.join("fit_summary.txt"), &text)?;
    print!("{text}");
    if !result.converged {
        return Err(NotConverged(result.iterations).into());
    }
    Ok(())
}

// map

#[derive(Debug, Clone, Args)]
pub struct MapArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Vertical axis: theta (crystal angle) or width (laser width).
    #[arg(long, value_name = "AXIS")]
    pub axis: Option<String>,
    /// Crystal angle in degrees for the width axis.
    #[arg(long, value_name = "DEG", allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Angle step of the theta axis (0 to 45 degrees).
    #[arg(long, value_name = "DEG")]
    pub theta_step: Option<f64>,
    /// Number of log-spaced widths on the width axis.
    #[arg(long, value_name = "N")]
    pub width_points: Option<usize>,
    /// Largest width on the width axis, in units of gamma.
    #[arg(long, value_name = "X")]
    pub width_max_gamma: Option<f64>,
    /// Half-width of the near-resonance mask, in units of W.
    #[arg(long, value_name = "K")]
    pub hatch_half_width: Option<f64>,
    /// F level marking the smallest-F cells.
    #[arg(long, value_name = "F")]
    pub f_min_level: Option<f64>,
    /// Output formats: csv, svg, json.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub formats: Vec<String>,
    /// Evaluate on one thread.
    #[arg(long)]
    pub serial: bool,
}

fn map_summary(g: &EntanglementGrid, files: &[PathBuf]) -> String {
    let m = &g.metadata;
    let mut out = format!("map over shift x {} ({} x {} cells)\n", m.vertical_axis, g.nx(), g.ny());
    for f in files {
        let _ = writeln!(out, "  -> {}", file_name(f));
    }
    let finite = |v: &[f64]| -> (f64, f64) {
        v.iter()
            .filter(|x| x.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
    };
    let (e0, e1) = finite(&g.e);
    let (f0, f1) = finite(&g.f);
    let count = |v: &[bool]| v.iter().filter(|&&b| b).count();
    let _ = writeln!(out, "E range {e0:.6} .. {e1:.6}");
    let _ = writeln!(out, "F range {f0:.6} .. {f1:.6}");
    let _ = writeln!(
        out,
        "cells maximal (E > {}) {}, hatched {}, F < {} {}, degenerate {}",
        m.maximal_e,
        count(&g.maximal),
        count(&g.hatched),
        m.f_min_level,
        count(&g.f_minimum),
        count(&g.degenerate)
    );
    for (iy, name) in [(0, "first"), (g.ny() - 1, "last")] {
        let regions: Vec<String> = g.maximal_regions(iy).iter().map(|(a, b)| format!("{a}..{b}")).collect();
        let max_e = g
            .row_e(iy)
            .iter()
            .copied()
            .filter(|x| x.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            out,
            "{name} row ({} = {}): max E {:.6}, maximal regions [{}]",
            m.vertical_axis,
            g.y[iy],
            max_e,
            regions.join(", ")
        );
    }
    match g.last_row_with_maximal() {
        Some(y) => {
            let _ = writeln!(out, "largest {} with maximal cells {y}", m.vertical_axis);
        }
        None => {
            let _ = writeln!(out, "no maximal cells");
        }
    }
    out
}

pub fn map(a: &MapArgs) -> Result<()> {
    let r = resolve(&a.common)?;
    let mc = r.cfg.map.clone().unwrap_or_default();
    let axis = a.axis.clone().or(mc.axis.clone()).unwrap_or_else(|| "theta".into());
    let mut spec = match axis.to_ascii_lowercase().as_str() {
        "theta" => {
            let mut spec = SweepSpec::theta_sweep(r.tensor, &r.tensor_name, r.sp);
            if let Some(step) = a.theta_step.or(mc.theta_step_deg) {
                spec.vertical = VerticalAxis::Theta {
                    degrees: linear_grid(0.0, 45.0, step).context("--theta-step")?,
                };
            } else {
                spec.vertical = VerticalAxis::Theta {
                    degrees: default_theta_axis(),
                };
            }
            spec
        }
        "width" => {
            let theta = a.theta.or(r.cfg.theta_deg).unwrap_or(0.0);
            let mut spec = SweepSpec::width_sweep(r.tensor, &r.tensor_name, r.sp, theta);
            let n = a.width_points.or(mc.width_points);
            let hi = a.width_max_gamma.or(mc.width_max_gamma);
            if n.is_some() || hi.is_some() {
                let n = n.unwrap_or(200);
                let hi = hi.unwrap_or(190.0);
                if n == 0 || !(hi > 0.1 && hi.is_finite()) {
                    bail!("--width-points must be positive and --width-max-gamma above 0.1");
                }
                spec.vertical = VerticalAxis::Width {
                    gamma_multiples: log_grid(0.1, hi, n),
                    theta_deg: theta,
                };
            } else {
                spec.vertical = VerticalAxis::Width {
                    gamma_multiples: default_width_axis(),
                    theta_deg: theta,
                };
            }
            spec
        }
        other => bail!("--axis: unknown axis `{other}` (theta or width)"),
    };
    spec.shifts = a.grid.points(&r)?;
    if let Some(k) = a.hatch_half_width.or(mc.hatch_half_width) {
        spec.hatch_half_width = k;
    }
    if let Some(f) = a.f_min_level.or(mc.f_min_level) {
        spec.f_min_level = f;
    }
    let names = if a.formats.is_empty() {
        mc.formats.clone().unwrap_or_else(|| vec!["csv".into(), "svg".into()])
    } else {
        a.formats.clone()
    };
    let formats = names
        .iter()
        .map(|f| f.parse::<ExportFormat>().context("--formats"))
        .collect::<Result<Vec<_>>>()?;
    spec.validate()?;

    let grid = sweep(&spec, !a.serial)?;
    ensure_dir(&r.out_dir)?;
    let stem = format!("map_{}", axis.to_ascii_lowercase());
    let mut files = Vec::new();
    for f in formats {
        let path = r.out_dir.join(format!("{stem}.{}", f.extension()));
        export_grid(&grid, f, &path)?;
        files.push(path);
    }
    let text = header(&r) + &map_summary(&grid, &files);
    write_file(&r.out_dir.join(format!("{stem}_summary.txt")), &text)?;
    print!("{text}");
    Ok(())
}
