//! Entanglement maps over Raman shift and crystal angle or laser width.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{FrequencyPair, SpectralParams};
use crate::state::build_state;
use crate::tensor::TensorSet;

pub const MAXIMAL_E: f64 = 0.999;
pub const DEFAULT_F_MIN_LEVEL: f64 = 2.01;

/// Vertical axis of a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VerticalAxis {
    /// Crystal angles in degrees at the sweep's laser width.
    Theta { degrees: Vec<f64> },
    /// Laser widths in units of `γ` at a fixed crystal angle (degrees).
    Width { gamma_multiples: Vec<f64>, theta_deg: f64 },
}

impl VerticalAxis {
    pub fn values(&self) -> &[f64] {
        match self {
            VerticalAxis::Theta { degrees } => degrees,
            VerticalAxis::Width { gamma_multiples, .. } => gamma_multiples,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VerticalAxis::Theta { .. } => "theta_deg",
            VerticalAxis::Width { .. } => "width_gamma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Raman shifts in spectroscopic cm⁻¹.
    pub shifts: Vec<f64>,
    pub vertical: VerticalAxis,
    pub tensor: TensorSet,
    pub sp: SpectralParams,
    /// Name recorded in the output metadata.
    pub tensor_name: String,
    /// Hatched half-width in units of `W`.
    pub hatch_half_width: f64,
    pub f_min_level: f64,
}

/// 0° to 45° in 0.5° steps.
pub fn default_theta_axis() -> Vec<f64> {
    (0..=90).map(|k| 0.5 * f64::from(k)).collect()
}

/// 200 log-spaced widths from 0.1γ to 190γ.
pub fn default_width_axis() -> Vec<f64> {
    log_grid(0.1, 190.0, 200)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

impl SweepSpec {
    pub fn theta_sweep(tensor: TensorSet, tensor_name: &str, sp: SpectralParams) -> Self {
        SweepSpec {
            shifts: crate::spectra::default_grid(),
            vertical: VerticalAxis::Theta {
                degrees: default_theta_axis(),
            },
            tensor,
            sp,
            tensor_name: tensor_name.to_string(),
            hatch_half_width: 1.0,
            f_min_level: DEFAULT_F_MIN_LEVEL,
        }
    }

    pub fn width_sweep(tensor: TensorSet, tensor_name: &str, sp: SpectralParams, theta_deg: f64) -> Self {
        SweepSpec {
            vertical: VerticalAxis::Width {
                gamma_multiples: default_width_axis(),
                theta_deg,
            },
            ..Self::theta_sweep(tensor, tensor_name, sp)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sp.validate()?;
        self.tensor.validate()?;
        check_axis("shifts", &self.shifts)?;
        check_axis(self.vertical.name(), self.vertical.values())?;
        if let Some(&max) = self.shifts.last() {
            if self.shifts[0] <= 0.0 || std::f64::consts::TAU * max >= self.sp.omega_c {
                return Err(Error::invalid(
                    "shifts",
                    "must lie strictly between 0 and the laser centre",
                ));
            }
        }
        if let VerticalAxis::Width {
            gamma_multiples,
            theta_deg,
        } = &self.vertical
        {
            if gamma_multiples[0] <= 0.0 {
                return Err(Error::invalid("width_gamma", "widths must be positive"));
            }
            if !theta_deg.is_finite() {
                return Err(Error::invalid("theta_deg", "must be finite"));
            }
        }
        if !(self.hatch_half_width >= 0.0 && self.hatch_half_width.is_finite()) {
            return Err(Error::invalid("hatch_half_width", "must be non-negative"));
        }
        if !self.f_min_level.is_finite() {
            return Err(Error::invalid("f_min_level", "must be finite"));
        }
        Ok(())
    }

    /// Crystal angle (radians) and spectral parameters of one row.
    fn row(&self, iy: usize) -> Result<(f64, SpectralParams)> {
        match &self.vertical {
            VerticalAxis::Theta { degrees } => Ok((degrees[iy].to_radians(), self.sp)),
            VerticalAxis::Width {
                gamma_multiples,
                theta_deg,
            } => Ok((
                theta_deg.to_radians(),
                self.sp.with_width(gamma_multiples[iy] * self.sp.gamma)?,
            )),
        }
    }
}

fn check_axis(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(name, "must not be empty"));
    }
    if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(name, "must be finite and strictly increasing"));
    }
    Ok(())
}

/// Provenance written with every export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMetadata {
    pub tool: String,
    pub version: String,
    pub tensor_name: String,
    pub tensor: TensorSet,
    pub sp: SpectralParams,
    pub vertical_axis: String,
    pub theta_deg: Option<f64>,
    pub hatch_half_width: f64,
    pub f_min_level: f64,
    pub maximal_e: f64,
}

/// Per-cell results, stored row-major (`index = iy · nx + ix`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntanglementGrid {
    pub metadata: GridMetadata,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub concurrence: Vec<f64>,
    pub maximal: Vec<bool>,
    pub hatched: Vec<bool>,
    pub f_minimum: Vec<bool>,
    pub degenerate: Vec<bool>,
}

impl EntanglementGrid {
    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn ny(&self) -> usize {
        self.y.len()
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx() + ix
    }

    pub fn row_e(&self, iy: usize) -> &[f64] {
        &self.e[iy * self.nx()..(iy + 1) * self.nx()]
    }

    /// Shift intervals `[first, last]` of contiguous maximal cells in a row.
    pub fn maximal_regions(&self, iy: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        for ix in 0..=self.nx() {
            let on = ix < self.nx() && self.maximal[self.index(ix, iy)];
            match (on, start) {
                (true, None) => start = Some(ix),
                (false, Some(s)) => {
                    out.push((self.x[s], self.x[ix - 1]));
                    start = None;
                }
                _ => {}
            }
        }
        out
    }

    /// Largest vertical value whose row contains a maximal cell.
    pub fn last_row_with_maximal(&self) -> Option<f64> {
        (0..self.ny())
            .rev()
            .find(|&iy| (0..self.nx()).any(|ix| self.maximal[self.index(ix, iy)]))
            .map(|iy| self.y[iy])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let g: EntanglementGrid = serde_json::from_str(s)?;
        let n = g.nx() * g.ny();
        let lens = [
            g.e.len(),
            g.f.len(),
            g.concurrence.len(),
            g.maximal.len(),
            g.hatched.len(),
            g.f_minimum.len(),
            g.degenerate.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::GridMismatch(format!("expected {n} cells per field")));
        }
        Ok(g)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

/// Hatched cells: `|2π δω − ω_ph| ≤ k W` with the row's `W`.
pub fn hatched_mask(spec: &SweepSpec) -> Result<Vec<bool>> {
    spec.validate()?;
    let ny = spec.vertical.values().len();
    let mut out = Vec::with_capacity(ny * spec.shifts.len());
    for iy in 0..ny {
        let (_, sp) = spec.row(iy)?;
        out.extend(
            spec.shifts
                .iter()
                .map(|&d| (std::f64::consts::TAU * d - sp.omega_ph).abs() <= spec.hatch_half_width * sp.width),
        );
    }
    Ok(out)
}

struct Cell {
    e: f64,
    f: f64,
    c: f64,
    degenerate: bool,
}

fn eval_cell(spec: &SweepSpec, rows: &[(f64, SpectralParams)], idx: usize) -> Result<Cell> {
    let nx = spec.shifts.len();
    let (theta, sp) = &rows[idx / nx];
    let fp = FrequencyPair::symmetric(sp, spec.shifts[idx % nx])?;
    match build_state(&spec.tensor, *theta, &fp, sp) {
        Ok(s) => Ok(Cell {
            e: s.entanglement_entropy(),
            f: s.gisin_f(),
            c: s.concurrence(),
            degenerate: false,
        }),
        Err(Error::DegenerateState) => Ok(Cell {
            e: 0.0,
            f: 2.0,
            c: 0.0,
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

/// Evaluates every cell; `parallel` spreads cells over the rayon pool. The
/// result does not depend on the evaluation order.
pub fn sweep(spec: &SweepSpec, parallel: bool) -> Result<EntanglementGrid> {
    spec.validate()?;
    let ny = spec.vertical.values().len();
    let n = ny * spec.shifts.len();
    let rows: Vec<(f64, SpectralParams)> = (0..ny).map(|iy| spec.row(iy)).collect::<Result<_>>()?;
    let cells: Vec<Cell> = if parallel {
        (0..n)
            .into_par_iter()
            .map(|i| eval_cell(spec, &rows, i))
            .collect::<Result<_>>()?
    } else {
        (0..n).map(|i| eval_cell(spec, &rows, i)).collect::<Result<_>>()?
    };
    let hatched = hatched_mask(spec)?;
    let theta_deg = match &spec.vertical {
        VerticalAxis::Width { theta_deg, .. } => Some(*theta_deg),
        VerticalAxis::Theta { .. } => None,
    };
    Ok(EntanglementGrid {
        metadata: GridMetadata {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            tensor_name: spec.tensor_name.clone(),
            tensor: spec.tensor,
            sp: spec.sp,
            vertical_axis: spec.vertical.name().to_string(),
            theta_deg,
            hatch_half_width: spec.hatch_half_width,
            f_min_level: spec.f_min_level,
            maximal_e: MAXIMAL_E,
        },
        x: spec.shifts.clone(),
        y: spec.vertical.values().to_vec(),
        maximal: cells.iter().map(|c| c.e > MAXIMAL_E).collect(),
        f_minimum: cells.iter().map(|c| c.f < spec.f_min_level).collect(),
        degenerate: cells.iter().map(|c| c.degenerate).collect(),
        e: cells.iter().map(|c| c.e).collect(),
        f: cells.iter().map(|c| c.f).collect(),
        concurrence: cells.iter().map(|c| c.c).collect(),
        hatched,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            "svg" => Ok(ExportFormat::Svg),
            _ => Err(Error::Parse(format!("unknown format `{s}` (csv, json or svg)"))),
        }
    }
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
            ExportFormat::Svg => "svg",
        }
    }
}

fn metadata_lines(g: &EntanglementGrid) -> Result<Vec<String>> {
    let m = &g.metadata;
    Ok(vec![
        format!("{} {}", m.tool, m.version),
        format!("tensor {} {}", m.tensor_name, serde_json::to_string(&m.tensor)?),
        format!("spectral {}", serde_json::to_string(&m.sp)?),
        format!(
            "grid shifts {}..{} ({} points) {} {}..{} ({} points){}",
            g.x[0],
            g.x[g.nx() - 1],
            g.nx(),
            m.vertical_axis,
            g.y[0],
            g.y[g.ny() - 1],
            g.ny(),
            m.theta_deg.map(|t| format!(" theta_deg {t}")).unwrap_or_default()
        ),
        format!(
            "masks maximal E > {} hatched |shift - phonon| <= {} W f_minimum F < {}",
            m.maximal_e, m.hatch_half_width, m.f_min_level
        ),
    ])
}

pub fn write_csv<W: Write>(g: &EntanglementGrid, mut out: W) -> Result<()> {
    let io = |e| Error::io("<csv output>", e);
    for line in metadata_lines(g)? {
        writeln!(out, "# {line}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "shift_cm1",
        g.metadata.vertical_axis.as_str(),
        "E",
        "F",
        "concurrence",
        "maximal",
        "hatched",
        "f_minimum",
        "degenerate",
    ])?;
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    for iy in 0..g.ny() {
        for ix in 0..g.nx() {
            let i = g.index(ix, iy);
            w.write_record([
                g.x[ix].to_string(),
                g.y[iy].to_string(),
                g.e[i].to_string(),
                g.f[i].to_string(),
                g.concurrence[i].to_string(),
                flag(g.maximal[i]),
                flag(g.hatched[i]),
                flag(g.f_minimum[i]),
                flag(g.degenerate[i]),
            ])?;
        }
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn csv_string(g: &EntanglementGrid) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(g, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

const PLOT_W: f64 = 650.0;
const PLOT_H: f64 = 360.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 50.0;
const MARGIN_R: f64 = 90.0;

/// Blue-to-yellow ramp for `E ∈ [0, 1]`.
fn colour(e: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [48.0, 18.0, 59.0]),
        (0.25, [50.0, 101.0, 176.0]),
        (0.5, [35.0, 170.0, 150.0]),
        (0.75, [150.0, 210.0, 80.0]),
        (1.0, [250.0, 230.0, 60.0]),
    ];
    let e = e.clamp(0.0, 1.0);
    let k = STOPS.iter().position(|s| s.0 >= e).unwrap_or(4).max(1);
    let (a, b) = (STOPS[k - 1], STOPS[k]);
    let t = (e - a.0) / (b.0 - a.0);
    let c = |i: usize| (a.1[i] + t * (b.1[i] - a.1[i])).round() as u8;
    (c(0), c(1), c(2))
}

/// Line segments of the `level` contour of a row-major field, in cell-index
/// coordinates (marching squares).
fn contour_segments(field: &[f64], nx: usize, ny: usize, level: f64) -> Vec<[(f64, f64); 2]> {
    let mut segs = Vec::new();
    if nx < 2 || ny < 2 {
        return segs;
    }
    let v = |ix: usize, iy: usize| field[iy * nx + ix];
    let lerp = |a: f64, b: f64| if a == b { 0.5 } else { (level - a) / (b - a) };
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let c = [v(ix, iy), v(ix + 1, iy), v(ix + 1, iy + 1), v(ix, iy + 1)];
            let idx = c
                .iter()
                .enumerate()
                .fold(0, |acc, (k, &x)| acc | (usize::from(x > level) << k));
            if idx == 0 || idx == 15 {
                continue;
            }
            let (x, y) = (ix as f64, iy as f64);
            let edge = |k: usize| match k {
                0 => (x + lerp(c[0], c[1]), y),
                1 => (x + 1.0, y + lerp(c[1], c[2])),
                2 => (x + lerp(c[3], c[2]), y + 1.0),
                _ => (x, y + lerp(c[0], c[3])),
            };
            let pairs: &[(usize, usize)] = match idx {
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(3, 2)],
                5 => &[(3, 0), (1, 2)],
                10 => &[(0, 1), (2, 3)],
                _ => &[],
            };
            for &(a, b) in pairs {
                segs.push([edge(a), edge(b)]);
            }
        }
    }
    segs
}

fn svg_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace("--", "- -")
}

pub fn svg_string(g: &EntanglementGrid) -> Result<String> {
    let (nx, ny) = (g.nx(), g.ny());
    let cw = PLOT_W / nx as f64;
    let ch = PLOT_H / ny as f64;
    // Row 0 at the bottom of the plot.
    let px = |ix: f64| MARGIN_L + ix * cw;
    let py = |iy: f64| MARGIN_T + PLOT_H - iy * ch;
    let total_w = MARGIN_L + PLOT_W + MARGIN_R;
    let total_h = MARGIN_T + PLOT_H + MARGIN_B;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" viewBox="0 0 {total_w} {total_h}">"#
    );
    s.push_str("<!--\n");
    for line in metadata_lines(g)? {
        let _ = writeln!(s, "{}", svg_escape(&line));
    }
    s.push_str("-->\n");
    s.push_str(concat!(
        r##"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">"##,
        r##"<line x1="0" y1="0" x2="0" y2="6" stroke="#000" stroke-width="1.2" stroke-opacity="0.6"/></pattern></defs>"##,
        "\n"
    ));
    let _ = writeln!(s, r##"<rect width="{total_w}" height="{total_h}" fill="#fff"/>"##);

    // E field as run-length merged cells per row.
    s.push_str("<g shape-rendering=\"crispEdges\">\n");
    for iy in 0..ny {
        let mut ix = 0;
        while ix < nx {
            let col = colour(g.e[g.index(ix, iy)]);
            let mut end = ix + 1;
            while end < nx && colour(g.e[g.index(end, iy)]) == col {
                end += 1;
            }
            let _ = writeln!(
                s,
                r##"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#{:02x}{:02x}{:02x}"/>"##,
                px(ix as f64),
                py(iy as f64 + 1.0),
                (end - ix) as f64 * cw,
                ch,
                col.0,
                col.1,
                col.2
            );
            ix = end;
        }
    }
    s.push_str("</g>\n");

    let overlay = |s: &mut String, mask: &[bool], fill: &str, id: &str| {
        let _ = writeln!(s, r#"<g id="{id}" fill="{fill}" shape-rendering="crispEdges">"#);
        for iy in 0..ny {
            let mut ix = 0;
            while ix < nx {
                if !mask[g.index(ix, iy)] {
                    ix += 1;
                    continue;
                }
                let mut end = ix + 1;
                while end < nx && mask[g.index(end, iy)] {
                    end += 1;
                }
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}"/>"#,
                    px(ix as f64),
                    py(iy as f64 + 1.0),
                    (end - ix) as f64 * cw,
                    ch
                );
                ix = end;
            }
        }
        s.push_str("</g>\n");
    };
    overlay(&mut s, &g.f_minimum, "#ffffff", "f-minimum");
    overlay(&mut s, &g.maximal, "#d62728", "maximal");
    overlay(&mut s, &g.hatched, "url(#hatch)", "hatched");

    // Gisin F contours, sampled at cell centres.
    s.push_str("<g id=\"f-contours\" stroke=\"#1f4fd6\" stroke-width=\"1\" fill=\"none\">\n");
    for k in 1..=8 {
        let level = 2.0 + 0.1 * f64::from(k);
        let mut d = String::new();
        for [(x0, y0), (x1, y1)] in contour_segments(&g.f, nx, ny, level) {
            let _ = write!(
                d,
                "M{:.2} {:.2}L{:.2} {:.2}",
                px(x0 + 0.5),
                py(y0 + 0.5),
                px(x1 + 0.5),
                py(y1 + 0.5)
            );
        }
        if !d.is_empty() {
            let _ = writeln!(s, r#"<path data-level="{level:.1}" d="{d}"/>"#);
        }
    }
    s.push_str("</g>\n");

    // Frame, ticks and labels.
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="#000"/>"##
    );
    s.push_str("<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#000\">\n");
    for k in 0..=4 {
        let fx = k as f64 / 4.0;
        let xv = g.x[0] + fx * (g.x[nx - 1] - g.x[0]);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_L + fx * PLOT_W,
            MARGIN_T + PLOT_H + 18.0,
            format_tick(xv)
        );
        let yv = g.y[0] + fx * (g.y[ny - 1] - g.y[0]);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            MARGIN_T + PLOT_H - fx * PLOT_H + 4.0,
            format_tick(yv)
        );
    }
    let ylabel = match g.metadata.vertical_axis.as_str() {
        "theta_deg" => "theta (deg)",
        _ => "W / gamma",
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Raman shift (cm-1)</text>"#,
        MARGIN_L + PLOT_W / 2.0,
        total_h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{ylabel}</text>"#,
        MARGIN_T + PLOT_H / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN_L}" y="{:.2}">Entropy of entanglement E ({})</text>"#,
        MARGIN_T - 16.0,
        svg_escape(&g.metadata.tensor_name)
    );
    s.push_str("</g>\n");

    // Colour bar.
    let bar_x = MARGIN_L + PLOT_W + 20.0;
    for k in 0..50 {
        let e = (k as f64 + 0.5) / 50.0;
        let (r, gg, b) = colour(e);
        let _ = writeln!(
            s,
            r##"<rect x="{bar_x}" y="{:.3}" width="16" height="{:.3}" fill="#{r:02x}{gg:02x}{b:02x}"/>"##,
            MARGIN_T + PLOT_H * (1.0 - (k + 1) as f64 / 50.0),
            PLOT_H / 50.0
        );
    }
    let _ = writeln!(
        s,
        r#"<g font-family="sans-serif" font-size="12"><text x="{:.1}" y="{:.1}">1</text><text x="{:.1}" y="{:.1}">0</text></g>"#,
        bar_x + 20.0,
        MARGIN_T + 10.0,
        bar_x + 20.0,
        MARGIN_T + PLOT_H
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn format_tick(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round())
    } else {
        format!("{v:.1}")
    }
}

/// Writes `grid` to `path` in the requested format.
pub fn export_grid(g: &EntanglementGrid, format: ExportFormat, path: &Path) -> Result<()> {
    let body = match format {
        ExportFormat::Csv => csv_string(g)?,
        ExportFormat::Json => g.to_json()? + "\n",
        ExportFormat::Svg => svg_string(g)?,
    };
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}
