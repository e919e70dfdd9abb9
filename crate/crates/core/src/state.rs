//! Polarization two-photon state and its entanglement and Bell quantities.
//!
//! Amplitudes are ordered VV, HH, VH, HV with the Stokes photon first. The
//! 2×2 amplitude matrix `M[s][a]` has the Stokes polarization as row index and
//! the anti-Stokes polarization as column index (V = 0, H = 1).

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Complex64;
use crate::spectral::{f_e, f_r, FrequencyPair, SpectralParams};
use crate::tensor::{y_factors, TensorSet};

/// Reduced-state eigenvalues above this negative floor are clamped to zero.
const EIGEN_FLOOR: f64 = -1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhotonState {
    vv: Complex64,
    hh: Complex64,
    vh: Complex64,
    hv: Complex64,
}

/// Which photon is kept when tracing out the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Stokes,
    AntiStokes,
}

impl TwoPhotonState {
    /// Normalizes the given amplitudes; a vanishing vector is rejected.
    pub fn from_amplitudes(vv: Complex64, hh: Complex64, vh: Complex64, hv: Complex64) -> Result<Self> {
        let amps = [vv, hh, vh, hv];
        if amps.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::invalid("amplitudes", "must be finite"));
        }
        // Rescale by the largest modulus first so tiny amplitudes do not underflow.
        let scale = amps.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(Error::DegenerateState);
        }
        let scaled = amps.map(|c| c / scale);
        let norm = scaled.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let [vv, hh, vh, hv] = scaled.map(|c| c / norm);
        Ok(TwoPhotonState { vv, hh, vh, hv })
    }

    /// `(|VV⟩ + |HH⟩)/√2`
    pub fn bell() -> Self {
        let a = Complex64::new(1.0 / SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        TwoPhotonState {
            vv: a,
            hh: a,
            vh: z,
            hv: z,
        }
    }

    pub fn product_vv() -> Self {
        let z = Complex64::new(0.0, 0.0);
        TwoPhotonState {
            vv: Complex64::new(1.0, 0.0),
            hh: z,
            vh: z,
            hv: z,
        }
    }

    pub fn vv(&self) -> Complex64 {
        self.vv
    }
    pub fn hh(&self) -> Complex64 {
        self.hh
    }
    pub fn vh(&self) -> Complex64 {
        self.vh
    }
    pub fn hv(&self) -> Complex64 {
        self.hv
    }

    pub fn amplitudes(&self) -> [Complex64; 4] {
        [self.vv, self.hh, self.vh, self.hv]
    }

    pub fn amplitude_matrix(&self) -> Matrix2<Complex64> {
        Matrix2::new(self.vv, self.vh, self.hv, self.hh)
    }

    /// Multiplies every amplitude by `exp(iφ)`.
    pub fn with_global_phase(&self, phi: f64) -> Self {
        let p = Complex64::from_polar(1.0, phi);
        TwoPhotonState {
            vv: self.vv * p,
            hh: self.hh * p,
            vh: self.vh * p,
            hv: self.hv * p,
        }
    }

    pub fn reduced_density(&self) -> ReducedState {
        self.reduced_density_of(Subsystem::Stokes)
    }

    /// Partial trace over the other photon.
    pub fn reduced_density_of(&self, keep: Subsystem) -> ReducedState {
        let m = self.amplitude_matrix();
        let rho = match keep {
            Subsystem::Stokes => m * m.adjoint(),
            Subsystem::AntiStokes => (m.adjoint() * m).transpose(),
        };
        // Enforce exact Hermiticity of the off-diagonal pair.
        let off = 0.5 * (rho[(0, 1)] + rho[(1, 0)].conj());
        ReducedState {
            matrix: Matrix2::new(
                Complex64::new(rho[(0, 0)].re, 0.0),
                off,
                off.conj(),
                Complex64::new(rho[(1, 1)].re, 0.0),
            ),
        }
    }

    /// Base-2 entropy of entanglement.
    pub fn entanglement_entropy(&self) -> f64 {
        self.reduced_density().entropy()
    }

    /// `P = 1 − Tr ρ²` of the reduced state.
    pub fn linear_entropy(&self) -> f64 {
        self.reduced_density().linear_entropy()
    }

    /// `C = 2 |c_VV c_HH − c_VH c_HV|`
    pub fn concurrence(&self) -> f64 {
        (2.0 * (self.vv * self.hh - self.vh * self.hv).norm()).min(1.0)
    }

    /// Maximal CHSH value `F = 2√(1 + C²)`.
    pub fn gisin_f(&self) -> f64 {
        let c = self.concurrence();
        2.0 * (1.0 + c * c).sqrt()
    }

    pub fn schmidt(&self) -> SchmidtDecomposition {
        schmidt(self)
    }
}

/// Gisin parameter from the linear entropy, `F = 2√(1 + 2P)`.
///
/// For pure states `2P = C²`, so this agrees with [`TwoPhotonState::gisin_f`]:
/// `F(P = 0) = 2` and `F(P = 1/2) = 2√2`.
pub fn gisin_f_from_linear_entropy(p: f64) -> f64 {
    2.0 * (1.0 + 2.0 * p).sqrt()
}

/// The printed closed form `2(1 − P)^{1/2}`, kept for comparison only: it gives
/// 2 for product states but √2 for maximally entangled ones.
pub fn gisin_f_as_printed(p: f64) -> f64 {
    2.0 * (1.0 - p).sqrt()
}

/// Binary entropy in bits with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Amplitudes below this fraction of the tensor's own scale count as zero;
/// they are what remains of exact cancellations after rounding.
const DEGENERATE_REL: f64 = 1e-12;

/// Builds the normalized pair state for a crystal angle and detected
/// frequency pair.
pub fn build_state(ts: &TensorSet, theta: f64, fp: &FrequencyPair, sp: &SpectralParams) -> Result<TwoPhotonState> {
    let y = y_factors(ts, theta);
    let fe = f_e(fp, sp);
    let fr = f_r(fp, sp);
    let vv = y.e_vv * fe + y.r_vv * fr;
    let hh = y.e_hh * fe + y.r_hh * fr;
    let cross = y.e_vh * fe + y.r_vh * fr;
    let electronic = [1.0, ts.re_xyyx.norm(), ts.re_sum.norm()]
        .into_iter()
        .fold(0.0, f64::max);
    let raman = [ts.rr_xxxx.norm(), ts.rr_xyyx.norm(), ts.rr_sum.norm()]
        .into_iter()
        .fold(0.0, f64::max);
    let scale = ts.a_exxxx.norm() * (electronic * fe.norm() + raman * fr.norm());
    let size = (vv.norm_sqr() + hh.norm_sqr() + 2.0 * cross.norm_sqr()).sqrt();
    if size <= DEGENERATE_REL * scale {
        return Err(Error::DegenerateState);
    }
    TwoPhotonState::from_amplitudes(vv, hh, cross, cross)
}

/// One-photon density matrix in the (V, H) basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedState {
    pub matrix: Matrix2<Complex64>,
}

impl ReducedState {
    pub fn trace(&self) -> f64 {
        self.matrix[(0, 0)].re + self.matrix[(1, 1)].re
    }

    /// Eigenvalues in descending order, negative round-off clamped to zero.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.matrix[(0, 0)].re;
        let d = self.matrix[(1, 1)].re;
        let b = self.matrix[(0, 1)];
        let mean = 0.5 * (a + d);
        let half_gap = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        let hi = mean + half_gap;
        // det / λ_max keeps the small eigenvalue accurate for nearly pure states.
        let det = a * d - b.norm_sqr();
        let lo = if hi > 0.0 { det / hi } else { mean - half_gap };
        let clamp = |x: f64| if (EIGEN_FLOOR..0.0).contains(&x) { 0.0 } else { x };
        [clamp(hi), clamp(lo)]
    }

    pub fn entropy(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|&l| if l > 0.0 { -l * l.log2() } else { 0.0 })
            .sum()
    }

    pub fn linear_entropy(&self) -> f64 {
        let purity: f64 = self.matrix.iter().map(|c| c.norm_sqr()).sum();
        1.0 - purity
    }
}

/// `|ψ⟩ = Σ_k λ_k |s_k⟩|a_k⟩` with `λ_0 ≥ λ_1 ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchmidtDecomposition {
    pub coefficients: [f64; 2],
    /// Stokes-photon basis states as (V, H) components.
    pub stokes: [[Complex64; 2]; 2],
    /// Anti-Stokes-photon basis states as (V, H) components.
    pub anti_stokes: [[Complex64; 2]; 2],
}

impl SchmidtDecomposition {
    /// Amplitude matrix rebuilt from the decomposition.
    pub fn reconstruct(&self) -> Matrix2<Complex64> {
        let mut m = Matrix2::zeros();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    m[(i, j)] += self.coefficients[k] * self.stokes[k][i] * self.anti_stokes[k][j];
                }
            }
        }
        m
    }
}

pub fn schmidt(state: &TwoPhotonState) -> SchmidtDecomposition {
    let m = state.amplitude_matrix();
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let s = svd.singular_values;
    let order = if s[0] >= s[1] { [0, 1] } else { [1, 0] };
    let mut out = SchmidtDecomposition {
        coefficients: [0.0; 2],
        stokes: [[Complex64::new(0.0, 0.0); 2]; 2],
        anti_stokes: [[Complex64::new(0.0, 0.0); 2]; 2],
    };
    for (slot, &k) in order.iter().enumerate() {
        out.coefficients[slot] = s[k];
        out.stokes[slot] = [u[(0, k)], u[(1, k)]];
        out.anti_stokes[slot] = [v_t[(k, 0)], v_t[(k, 1)]];
    }
    out
}

/// Polarization analyzer projecting onto `cos α |V⟩ + e^{iχ} sin α |H⟩`
/// (outcome +1) or its orthogonal state (−1). `phase = 0` is a linear
/// polarizer at angle `α` from V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Analyzer {
    pub angle: f64,
    pub phase: f64,
}

impl Analyzer {
    pub fn linear(angle: f64) -> Self {
        Analyzer { angle, phase: 0.0 }
    }

    pub fn is_linear(&self) -> bool {
        self.phase == 0.0
    }

    /// Bloch vector `(σ_x, σ_y, σ_z)` of the +1 outcome, with `σ_z = |V⟩⟨V| − |H⟩⟨H|`.
    pub fn bloch(&self) -> Vector3<f64> {
        let (s2, c2) = (2.0 * self.angle).sin_cos();
        Vector3::new(s2 * self.phase.cos(), s2 * self.phase.sin(), c2)
    }

    /// Analyzer whose +1 outcome has the given (unit) Bloch vector; in-plane
    /// vectors map to linear polarizers.
    pub fn from_bloch(n: &Vector3<f64>) -> Self {
        let n = n.normalize();
        if n.y.abs() < 1e-12 {
            Analyzer::linear(0.5 * n.x.atan2(n.z))
        } else {
            Analyzer {
                angle: 0.5 * n.z.clamp(-1.0, 1.0).acos(),
                phase: n.y.atan2(n.x),
            }
        }
    }

    fn observable(&self) -> Matrix2<Complex64> {
        let n = self.bloch();
        Matrix2::new(
            Complex64::new(n.z, 0.0),
            Complex64::new(n.x, -n.y),
            Complex64::new(n.x, n.y),
            Complex64::new(-n.z, 0.0),
        )
    }
}

/// Analyzer settings `(a, a′)` for the Stokes photon and `(b, b′)` for the
/// anti-Stokes photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: Analyzer,
    pub a_prime: Analyzer,
    pub b: Analyzer,
    pub b_prime: Analyzer,
}

impl ChshSettings {
    pub fn linear(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        ChshSettings {
            a: Analyzer::linear(a),
            a_prime: Analyzer::linear(a_prime),
            b: Analyzer::linear(b),
            b_prime: Analyzer::linear(b_prime),
        }
    }
}

/// `⟨ψ| A ⊗ B |ψ⟩ = Tr(M† A M Bᵀ)`.
pub fn correlator(state: &TwoPhotonState, a: &Analyzer, b: &Analyzer) -> f64 {
    let m = state.amplitude_matrix();
    (m.adjoint() * a.observable() * m * b.observable().transpose())
        .trace()
        .re
}

/// `S = E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)`.
pub fn chsh_value(state: &TwoPhotonState, s: &ChshSettings) -> f64 {
    correlator(state, &s.a, &s.b) - correlator(state, &s.a, &s.b_prime)
        + correlator(state, &s.a_prime, &s.b)
        + correlator(state, &s.a_prime, &s.b_prime)
}

/// Correlation matrix `T_ij = ⟨σ_i ⊗ σ_j⟩`.
pub fn correlation_matrix(state: &TwoPhotonState) -> Matrix3<f64> {
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()].map(|n| Analyzer::from_bloch(&n));
    Matrix3::from_fn(|i, j| correlator(state, &axes[i], &axes[j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshOptimum {
    pub settings: ChshSettings,
    pub value: f64,
}

/// Analyzer settings reaching the maximal CHSH value of the state.
///
/// With `T = Σ σ_k u_k v_kᵀ`, choosing `b, b′ = cos t v_1 ± sin t v_2`,
/// `a′ = u_1`, `a = u_2` and `tan t = σ_2/σ_1` gives `S = 2√(σ_1² + σ_2²)`.
/// When the linear-polarizer (x–z) block of `T` already reaches the optimum,
/// the settings are chosen among linear polarizers.
pub fn chsh_optimal_angles(state: &TwoPhotonState) -> ChshOptimum {
    let t = correlation_matrix(state);
    let full = top_two(&t);

    let block = nalgebra::Matrix2::new(t[(0, 0)], t[(0, 2)], t[(2, 0)], t[(2, 2)]);
    let planar = {
        let svd = block.svd(true, true);
        let (u, vt, s) = (svd.u.unwrap(), svd.v_t.unwrap(), svd.singular_values);
        let order = if s[0] >= s[1] { [0, 1] } else { [1, 0] };
        let embed = |x: f64, z: f64| Vector3::new(x, 0.0, z);
        let us = order.map(|k| embed(u[(0, k)], u[(1, k)]));
        let vs = order.map(|k| embed(vt[(k, 0)], vt[(k, 1)]));
        (order.map(|k| s[k]), us, vs)
    };
    let planar_value = 2.0 * planar.0[0].hypot(planar.0[1]);
    let full_value = 2.0 * full.0[0].hypot(full.0[1]);

    let (sig, us, vs) = if planar_value >= full_value - 1e-12 {
        planar
    } else {
        full
    };
    let angle = sig[1].atan2(sig[0]);
    let (st, ct) = angle.sin_cos();
    let b = vs[0] * ct + vs[1] * st;
    let b_prime = vs[0] * ct - vs[1] * st;
    let settings = ChshSettings {
        a: Analyzer::from_bloch(&us[1]),
        a_prime: Analyzer::from_bloch(&us[0]),
        b: Analyzer::from_bloch(&b),
        b_prime: Analyzer::from_bloch(&b_prime),
    };
    ChshOptimum {
        value: chsh_value(state, &settings),
        settings,
    }
}

/// Independent numerical optimum of the CHSH value.
///
/// For fixed Stokes settings the best anti-Stokes settings are known in closed
/// form, `S(a, a′) = ‖Tᵀ(a + a′)‖ + ‖Tᵀ(a′ − a)‖`, so only the two Stokes Bloch
/// directions are scanned: a coarse polar/azimuth grid of `steps × 2·steps`
/// points per direction, followed by a compass search from the best few cells.
pub fn chsh_scan_optimum(state: &TwoPhotonState, steps: usize) -> ChshOptimum {
    let t = correlation_matrix(state);
    let tt = t.transpose();
    let dir = |p: f64, q: f64| Vector3::new(p.sin() * q.cos(), p.sin() * q.sin(), p.cos());
    let objective = |x: &[f64; 4]| {
        let a = dir(x[0], x[1]);
        let ap = dir(x[2], x[3]);
        (tt * (a + ap)).norm() + (tt * (ap - a)).norm()
    };

    let steps = steps.max(2);
    let polar: Vec<f64> = (0..steps).map(|i| (i as f64 + 0.5) * PI / steps as f64).collect();
    let azim: Vec<f64> = (0..2 * steps).map(|i| i as f64 * PI / steps as f64).collect();
    let cells: Vec<(f64, f64)> = polar.iter().flat_map(|&p| azim.iter().map(move |&q| (p, q))).collect();
    let mut starts: Vec<([f64; 4], f64)> = Vec::with_capacity(cells.len() * cells.len());
    for &(p, q) in &cells {
        for &(r, s) in &cells {
            let x = [p, q, r, s];
            starts.push((x, objective(&x)));
        }
    }
    starts.sort_by(|u, v| v.1.total_cmp(&u.1));

    let mut best = starts[0];
    for &(x0, f0) in starts.iter().take(4) {
        let (x, f) = compass_search(&objective, x0, f0, PI / steps as f64, 1e-10);
        if f > best.1 {
            best = (x, f);
        }
    }

    let x = best.0;
    let a = dir(x[0], x[1]);
    let ap = dir(x[2], x[3]);
    let plus = tt * (a + ap);
    let minus = tt * (ap - a);
    let unit = |v: Vector3<f64>| if v.norm() > 0.0 { v.normalize() } else { Vector3::z() };
    let settings = ChshSettings {
        a: Analyzer::from_bloch(&a),
        a_prime: Analyzer::from_bloch(&ap),
        b: Analyzer::from_bloch(&unit(plus)),
        b_prime: Analyzer::from_bloch(&unit(minus)),
    };
    ChshOptimum {
        value: chsh_value(state, &settings),
        settings,
    }
}

fn compass_search<F: Fn(&[f64; 4]) -> f64>(
    f: &F,
    mut x: [f64; 4],
    mut fx: f64,
    mut step: f64,
    min_step: f64,
) -> ([f64; 4], f64) {
    while step > min_step {
        let mut improved = false;
        for k in 0..4 {
            for sign in [1.0, -1.0] {
                let mut y = x;
                y[k] += sign * step;
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

type SingularPairs = ([f64; 2], [Vector3<f64>; 2], [Vector3<f64>; 2]);

fn top_two(t: &Matrix3<f64>) -> SingularPairs {
    let svd = t.svd(true, true);
    let (u, vt, s) = (svd.u.unwrap(), svd.v_t.unwrap(), svd.singular_values);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let pick = |k: usize| {
        (
            s[k],
            Vector3::new(u[(0, k)], u[(1, k)], u[(2, k)]),
            Vector3::new(vt[(k, 0)], vt[(k, 1)], vt[(k, 2)]),
        )
    };
    let (s0, u0, v0) = pick(idx[0]);
    let (s1, u1, v1) = pick(idx[1]);
    ([s0, s1], [u0, u1], [v0, v1])
}
