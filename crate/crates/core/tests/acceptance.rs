//! Acceptance suite: one pass/fail line per criterion, non-zero exit on any
//! failure.

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sas_core::fit::{fit_y, synthetic_observations, FitConfig, FitProblem, STANDARD_CONFIGURATIONS};
use sas_core::maps::{csv_string, sweep, SweepSpec};
use sas_core::numerics::{erfc_complex, faddeeva_w};
use sas_core::spectra::{
    accidental_model, default_grid, g2_curve, predict_spectrum, with_multiplicative_noise, Configuration,
    SpectrumSeries,
};
use sas_core::spectral::{f_r, f_r_narrow_limit, f_r_quadrature_oracle, FrequencyPair};
use sas_core::state::{binary_entropy, build_state, chsh_scan_optimum, Subsystem};
use sas_core::tensor::{DIAMOND_RAMAN_Y, DIAMOND_VV0_MEAN_COUNTS};
use sas_core::{Complex64, Polarization, SpectralParams, TensorSet, TwoPhotonState};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

fn benchmark_900() -> Outcome {
    let sp = SpectralParams::diamond();
    let fp = FrequencyPair::symmetric(&sp, 900.0).map_err(|e| e.to_string())?;
    let s = build_state(&TensorSet::table1(), 0.0, &fp, &sp).map_err(|e| e.to_string())?;
    let ratio = s.hh().norm() / s.vv().norm();
    let e = s.entanglement_entropy();
    let f = s.gisin_f();
    check(
        (ratio - 0.49).abs() <= 0.02 && (e - 0.70).abs() <= 0.05 && (f - 2.5).abs() <= 0.1,
        format!("|c_HH/c_VV| = {ratio:.4}, E = {e:.4}, F = {f:.4}"),
    )
}

fn theta_spec() -> SweepSpec {
    SweepSpec::theta_sweep(TensorSet::table1(), "table1", SpectralParams::diamond())
}

fn map_maxima() -> Outcome {
    let g = sweep(&theta_spec(), true).map_err(|e| e.to_string())?;
    let row0 = g.maximal_regions(0);
    let low = row0.iter().any(|&(a, b)| a >= 1150.0 && b <= 1250.0);
    let high = row0.iter().any(|&(a, b)| a >= 1350.0 && b <= 1450.0);
    let last = g.ny() - 1;
    let max45 = g.row_e(last).iter().copied().fold(0.0, f64::max);
    check(
        low && high && g.y[last] == 45.0 && max45 < 0.999,
        format!("theta = 0 maximal regions {row0:?}, max E at 45 deg = {max45:.5}"),
    )
}

fn bandwidth_threshold() -> Outcome {
    let spec = SweepSpec::width_sweep(TensorSet::table1(), "table1", SpectralParams::diamond(), 0.0);
    let g = sweep(&spec, true).map_err(|e| e.to_string())?;
    let last = g.last_row_with_maximal().ok_or("no maximal cell at any width")?;
    check(
        (55.0..=85.0).contains(&last),
        format!("largest W with E > 0.999: {last:.2} gamma"),
    )
}

fn flat_configurations() -> Outcome {
    let sp = SpectralParams::diamond();
    let grid = default_grid();
    let ts = TensorSet::table1();
    let vv = predict_spectrum(&ts, 0.0, Polarization::VV, &sp, &grid).map_err(|e| e.to_string())?;
    let hh = predict_spectrum(&ts, 45f64.to_radians(), Polarization::HH, &sp, &grid).map_err(|e| e.to_string())?;
    let ok = vv.relative_variation() <= 1e-12
        && hh.relative_variation() <= 1e-12
        && (vv.mean() - 27.5e3).abs() <= 3.5e3
        && (hh.mean() - 1.60e3).abs() <= 0.28e3;
    check(
        ok,
        format!(
            "VV(0) = {:.1} (variation {:.1e}), HH(45) = {:.1} (variation {:.1e})",
            vv.mean(),
            vv.relative_variation(),
            hh.mean(),
            hh.relative_variation()
        ),
    )
}

fn kernel_oracle() -> Outcome {
    let sp = SpectralParams::diamond();
    let w = sp.width;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for i in 0..10 {
        let mean = -2.0 * w + 4.0 * w * i as f64 / 9.0;
        for k in 0..20 {
            let raman = -10.0 * w + 20.0 * w * k as f64 / 19.0;
            let half_sum = sp.omega_c + mean;
            let half_diff = sp.omega_ph + raman;
            let fp = FrequencyPair::new(half_sum - half_diff, half_sum + half_diff).map_err(|e| e.to_string())?;
            let q = f_r_quadrature_oracle(&fp, &sp).map_err(|e| e.to_string())?;
            worst = worst.max(rel(f_r(&fp, &sp), q));
            count += 1;
        }
    }
    let narrow = sp.with_width(sp.gamma / 100.0).map_err(|e| e.to_string())?;
    let mut worst_narrow: f64 = 0.0;
    for shift in [1300.0, 1325.0, 1331.0, 1332.0, 1333.0, 1340.0, 1400.0] {
        let fp = FrequencyPair::symmetric(&narrow, shift).map_err(|e| e.to_string())?;
        worst_narrow = worst_narrow.max(rel(f_r(&fp, &narrow), f_r_narrow_limit(&fp, &narrow)));
    }
    check(
        count == 200 && worst <= 1e-6 && worst_narrow <= 0.01,
        format!("{count} quadrature points, worst relative {worst:.2e}; narrow-laser limit worst {worst_narrow:.2e}"),
    )
}

fn read_table(name: &str) -> Vec<(Complex64, Complex64)> {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "data", name].iter().collect();
    let mut rdr = csv::Reader::from_path(&path).expect("reference table");
    rdr.records()
        .map(|r| {
            let r = r.expect("row");
            let v = |i: usize| r[i].parse::<f64>().expect("number");
            (Complex64::new(v(0), v(1)), Complex64::new(v(2), v(3)))
        })
        .collect()
}

fn special_functions() -> Outcome {
    let mut worst_w: f64 = 0.0;
    for (z, v) in read_table("faddeeva_w.csv") {
        worst_w = worst_w.max(rel(faddeeva_w(z), v));
    }
    let mut worst_erfc: f64 = 0.0;
    for (z, v) in read_table("erfc.csv") {
        worst_erfc = worst_erfc.max(rel(erfc_complex(z), v));
    }
    // Identities: w(-conj z) = conj w(z); erfc(z) + erfc(-z) = 2;
    // erfc(conj z) = conj erfc(z); on the real axis Re w(x) = exp(-x²) and
    // erfc(x) is real.
    let mut worst_id: f64 = 0.0;
    for i in 0..41 {
        let x = -10.0 + 0.5 * i as f64;
        for y in [0.0, 0.3, 1.0, 4.0] {
            let z = Complex64::new(x, y);
            worst_id = worst_id.max(rel(faddeeva_w(-z.conj()), faddeeva_w(z).conj()));
            let s = erfc_complex(z) + erfc_complex(-z);
            worst_id = worst_id.max((s - 2.0).norm() / 2.0);
            let c = erfc_complex(z.conj());
            worst_id = worst_id.max(rel(c, erfc_complex(z).conj()));
        }
        let wx = faddeeva_w(Complex64::new(x, 0.0));
        worst_id = worst_id.max((wx.re - (-x * x).exp()).abs() / wx.norm());
        let ex = erfc_complex(Complex64::new(x, 0.0));
        worst_id = worst_id.max(ex.im.abs() / ex.norm());
    }
    check(
        worst_w <= 1e-10 && worst_erfc <= 1e-10 && worst_id <= 1e-12,
        format!("w worst {worst_w:.2e}, erfc worst {worst_erfc:.2e}, identities worst {worst_id:.2e}"),
    )
}

fn random_state(rng: &mut ChaCha8Rng) -> TwoPhotonState {
    let mut c = || {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im)
    };
    let (a, b, d, e) = (c(), c(), c(), c());
    TwoPhotonState::from_amplitudes(a, b, d, e).expect("non-zero draw")
}

fn entanglement_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20240501);
    let (mut we, mut wf, mut ws): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let s = random_state(&mut rng);
        let c = s.concurrence();
        let e_closed = binary_entropy(0.5 * (1.0 + (1.0 - c * c).max(0.0).sqrt()));
        we = we.max((s.entanglement_entropy() - e_closed).abs());
        wf = wf.max((chsh_scan_optimum(&s, 6).value - s.gisin_f()).abs());
        let a = s.reduced_density_of(Subsystem::Stokes).entropy();
        let b = s.reduced_density_of(Subsystem::AntiStokes).entropy();
        ws = ws.max((a - b).abs());
    }
    check(
        we <= 1e-10 && wf <= 1e-6 && ws <= 1e-12,
        format!("1000 states: E vs closed form {we:.1e}, F vs CHSH scan {wf:.1e}, subsystem entropies {ws:.1e}"),
    )
}

fn caption_targets() -> [Complex64; 2] {
    [Complex64::new(0.68, -0.12), Complex64::new(1.61, -0.55)]
}

fn fit_errors(obs: Vec<(Configuration, SpectrumSeries)>, sp: SpectralParams) -> Result<f64, String> {
    let p = FitProblem::new(obs, sp).map_err(|e| e.to_string())?;
    let r = fit_y(&p, &FitConfig::default()).map_err(|e| e.to_string())?;
    if !r.converged {
        return Err("fit did not converge".into());
    }
    let a = r.y_e(Configuration::VV0).ok_or("no VV0")?;
    let [hh0, vv45] = caption_targets();
    let e1 = rel(r.y_e(Configuration::HH0).ok_or("no HH0")? / a, hh0);
    let e2 = rel(r.y_e(Configuration::VV45).ok_or("no VV45")? / a, vv45);
    let e3 = (r.y_r / DIAMOND_RAMAN_Y - 1.0).abs();
    let e4 = (a.re / DIAMOND_VV0_MEAN_COUNTS.sqrt() - 1.0).abs();
    Ok(e1.max(e2).max(e3).max(e4))
}

fn fit_round_trip() -> Outcome {
    let sp = SpectralParams::diamond();
    let grid = default_grid();
    let clean = synthetic_observations(&TensorSet::fig1_fit(), &STANDARD_CONFIGURATIONS, &sp, &grid)
        .map_err(|e| e.to_string())?;
    let noiseless = fit_errors(clean.clone(), sp)?;
    let mut noisy: f64 = 0.0;
    for seed in 0..20u64 {
        let obs = clean
            .iter()
            .enumerate()
            .map(|(k, (c, s))| Ok((*c, with_multiplicative_noise(s, 0.02, 1000 * seed + k as u64)?)))
            .collect::<sas_core::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        noisy = noisy.max(fit_errors(obs, sp)?);
    }
    check(
        noiseless <= 1e-6 && noisy <= 0.05,
        format!("noiseless worst relative {noiseless:.1e}; 2% noise worst over 20 seeds {noisy:.2e}"),
    )
}

fn g2_limits() -> Outcome {
    let sp = SpectralParams::diamond();
    let grid = default_grid();
    let acc = accidental_model(&sp, 3.0e4, 1.5e3, &grid).map_err(|e| e.to_string())?;
    let same = SpectrumSeries::new(grid.clone(), acc.intensity.clone(), "c").map_err(|e| e.to_string())?;
    let zero = SpectrumSeries::new(grid.clone(), vec![0.0; grid.len()], "c").map_err(|e| e.to_string())?;
    let g_same = g2_curve(&same, &acc).map_err(|e| e.to_string())?;
    let g_zero = g2_curve(&zero, &acc).map_err(|e| e.to_string())?;
    let hh0 = predict_spectrum(&TensorSet::fig1_fit(), 0.0, Polarization::HH, &sp, &grid).map_err(|e| e.to_string())?;
    let g = g2_curve(&hh0, &acc).map_err(|e| e.to_string())?;
    let (below, above) = (g.at(1300.0).unwrap_or(0.0), g.at(1364.0).unwrap_or(0.0));
    let ok = g_same.g2.iter().all(|&v| v == 2.0) && g_zero.g2.iter().all(|&v| v == 1.0) && below > above;
    check(
        ok,
        format!("classical limit 2 and floor 1 exact; g2(1300) = {below:.3} > g2(1364) = {above:.3}"),
    )
}

fn determinism() -> Outcome {
    let spec = theta_spec();
    let serial = csv_string(&sweep(&spec, false).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let parallel = csv_string(&sweep(&spec, true).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    check(
        serial == parallel,
        format!(
            "serial and parallel CSV: {} bytes each, identical = {}",
            serial.len(),
            serial == parallel
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("900 cm-1 benchmark", benchmark_900),
        ("angle-map maxima", map_maxima),
        ("bandwidth threshold", bandwidth_threshold),
        ("flat configurations", flat_configurations),
        ("spectral-kernel oracle", kernel_oracle),
        ("special functions", special_functions),
        ("entanglement self-consistency", entanglement_consistency),
        ("fit round trip", fit_round_trip),
        ("g2 limits and asymmetry", g2_limits),
        ("map determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
