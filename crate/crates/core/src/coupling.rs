//! One- and two-photon couplings, spectral function and regime diagnostics.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    fmt_f64, from_collective, gaussian_tail_mass, trap_weight, PhysicalParams, C64,
};

/// Default pole floor relative to the widest Gaussian scale.
pub const POLE_FLOOR_FACTOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Linear,
    Cubic,
}

/// Sampled magnitude of the propagation mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct ModeProfile {
    pub samples: Vec<(f64, f64)>,
    pub kind: Interpolation,
    #[serde(skip)]
    second_derivs: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    samples: Vec<(f64, f64)>,
    #[serde(default)]
    kind: Interpolation,
}

impl TryFrom<RawProfile> for ModeProfile {
    type Error = Error;
    fn try_from(r: RawProfile) -> Result<Self> {
        ModeProfile::new(r.samples, r.kind)
    }
}

impl ModeProfile {
    pub fn new(samples: Vec<(f64, f64)>, kind: Interpolation) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Config("mode profile needs at least two samples".into()));
        }
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 || !w[1].0.is_finite() || !w[0].0.is_finite() {
                return Err(Error::Config("mode profile abscissae must increase strictly".into()));
            }
        }
        if samples.iter().any(|&(_, u)| !(u >= 0.0) || !u.is_finite()) {
            return Err(Error::Config("mode profile values must be finite and nonnegative".into()));
        }
        let second_derivs = match kind {
            Interpolation::Linear => Vec::new(),
            Interpolation::Cubic => natural_spline(&samples),
        };
        Ok(ModeProfile { samples, kind, second_derivs })
    }

    /// Tabulates `f` on `n` uniform nodes of [lo, hi].
    pub fn from_fn(lo: f64, hi: f64, n: usize, kind: Interpolation, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config("mode profile needs at least two samples".into()));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let samples = (0..n).map(|k| {
            let w = lo + k as f64 * h;
            (w, f(w))
        });
        ModeProfile::new(samples.collect(), kind)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    pub fn eval(&self, omega: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(omega >= lo && omega <= hi) {
            return Err(Error::Domain(format!(
                "mode profile evaluated at {omega} outside [{lo}, {hi}]"
            )));
        }
        let s = &self.samples;
        let k = match s.binary_search_by(|p| p.0.partial_cmp(&omega).unwrap()) {
            Ok(k) => return Ok(s[k].1),
            Err(k) => k - 1,
        };
        let (x0, y0) = s[k];
        let (x1, y1) = s[k + 1];
        let h = x1 - x0;
        let t = (omega - x0) / h;
        let v = match self.kind {
            Interpolation::Linear => y0 + t * (y1 - y0),
            Interpolation::Cubic => {
                if self.second_derivs.len() != s.len() {
                    return Err(Error::Config("cubic mode profile not prepared".into()));
                }
                let (m0, m1) = (self.second_derivs[k], self.second_derivs[k + 1]);
                let a = 1.0 - t;
                a * y0 + t * y1 + ((a * a * a - a) * m0 + (t * t * t - t) * m1) * h * h / 6.0
            }
        };
        // Spline overshoot below zero is clipped: u is a magnitude.
        Ok(v.max(0.0))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["omega", "u"])?;
        for &(x, u) in &self.samples {
            w.write_record([fmt_f64(x), fmt_f64(u)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, kind: Interpolation) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut samples = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let p = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Config(format!("bad mode csv record {rec:?}")))
            };
            samples.push((p(0)?, p(1)?));
        }
        ModeProfile::new(samples, kind)
    }
}

fn natural_spline(s: &[(f64, f64)]) -> Vec<f64> {
    let n = s.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior second derivatives.
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = s[i].0 - s[i - 1].0;
        let h1 = s[i + 1].0 - s[i].0;
        let rhs = 6.0 * ((s[i + 1].1 - s[i].1) / h1 - (s[i].1 - s[i - 1].1) / h0);
        let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
        c[i] = h1 / diag;
        d[i] = (rhs - h0 * d[i - 1]) / diag;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

fn check_floor(name: &str, detuning: f64, floor: f64) -> Result<()> {
    if detuning.abs() < floor {
        Err(Error::Domain(format!(
            "{name} detuning {detuning:e} is inside the pole floor {floor:e}"
        )))
    } else {
        Ok(())
    }
}

/// Two-photon coupling of one transition path.
pub fn branch_coupling(
    params: &PhysicalParams,
    g_exc: impl Fn(f64) -> C64,
    g_biexc: impl Fn(f64) -> C64,
    omega_prime: f64,
    omega: f64,
    pole_floor: f64,
) -> Result<C64> {
    let de = omega - params.omega_x;
    let db = omega_prime - (params.omega_2x - params.omega_x);
    check_floor("excitonic", de, pole_floor)?;
    check_floor("biexcitonic", db, pole_floor)?;
    Ok(g_biexc(omega_prime) * g_exc(omega) * (1.0 / de - 1.0 / db))
}

/// Non-separable four-term bracket of the combined two-photon coupling.
pub fn nonseparable_bracket(params: &PhysicalParams, omega_prime: f64, omega: f64, pole_floor: f64) -> Result<f64> {
    let wx = params.omega_x;
    let wb = params.omega_x - params.delta_x;
    let d1 = omega - wx;
    let d2 = omega_prime - wb;
    let d3 = omega_prime - wx;
    let d4 = omega - wb;
    check_floor("excitonic", d1, pole_floor)?;
    check_floor("biexcitonic", d2, pole_floor)?;
    check_floor("excitonic", d3, pole_floor)?;
    check_floor("biexcitonic", d4, pole_floor)?;
    // 1/d1 − 1/d2 + 1/d3 − 1/d4, paired so δ_X = 0 cancels exactly.
    Ok(params.delta_x * (1.0 / (d1 * d4) + 1.0 / (d2 * d3)))
}

/// Both interaction paths combined, with the propagation-mode magnitude.
pub fn combined_coupling(
    params: &PhysicalParams,
    mode: &ModeProfile,
    omega_prime: f64,
    omega: f64,
    pole_floor: f64,
) -> Result<f64> {
    let h = nonseparable_bracket(params, omega_prime, omega, pole_floor)?;
    Ok(params.d * mode.eval(omega_prime)? * mode.eval(omega)? * h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingSpec {
    Physical {
        params: PhysicalParams,
        mode: ModeProfile,
        pole_floor: f64,
    },
    Gaussian {
        beta: f64,
        gamma: f64,
        center: f64,
    },
}

impl CouplingSpec {
    /// Gaussian coupling with the total rate shared equally by the four channels.
    pub fn isotropic(beta: f64, gamma_total: f64, center: f64) -> Self {
        CouplingSpec::Gaussian { beta, gamma: gamma_total / 4.0, center }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CouplingSpec::Gaussian { beta, gamma, center } => {
                if !(*beta > 0.0) || !(*gamma >= 0.0) || !center.is_finite() {
                    return Err(Error::Config("gaussian coupling needs beta > 0, gamma >= 0".into()));
                }
            }
            CouplingSpec::Physical { params, pole_floor, .. } => {
                params.validate()?;
                if !(*pole_floor >= 0.0) {
                    return Err(Error::Config("pole_floor must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    /// Per-channel coupling at collective coordinates (ω_Σ, ω_Δ).
    pub fn eval(&self, omega_sigma: f64, omega_delta: f64) -> Result<f64> {
        match self {
            CouplingSpec::Gaussian { beta, gamma, center } => {
                Ok(gaussian_coupling(*beta, *gamma, *center, omega_delta))
            }
            CouplingSpec::Physical { params, mode, pole_floor } => {
                let (w, wp) = from_collective(omega_sigma, omega_delta);
                combined_coupling(params, mode, wp, w, *pole_floor)
            }
        }
    }

    /// Multiplies the coupling amplitude by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        match self.clone() {
            CouplingSpec::Gaussian { beta, gamma, center } => {
                CouplingSpec::Gaussian { beta, gamma: gamma * c * c, center }
            }
            CouplingSpec::Physical { mut params, mode, pole_floor } => {
                params.d *= c;
                CouplingSpec::Physical { params, mode, pole_floor }
            }
        }
    }
}

/// √(γ/π)·(exp(−(ω_Δ−c)²/β²)/(2πβ²))^{1/4}.
#[inline]
pub fn gaussian_coupling(beta: f64, gamma: f64, center: f64, omega_delta: f64) -> f64 {
    let x = omega_delta - center;
    (gamma / PI).sqrt() * ((-(x * x) / (beta * beta)).exp() / (2.0 * PI * beta * beta)).powf(0.25)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Window {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 3 || !(hi > lo) {
            return Err(Error::Config("window needs n >= 3 and hi > lo".into()));
        }
        Ok(Window { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralValue {
    pub value: f64,
    /// Estimated fraction of ∫|g|² outside the window.
    pub tail_mass: f64,
}

impl SpectralValue {
    pub fn window_ok(&self) -> bool {
        self.tail_mass <= 1e-6
    }
}

/// Number of output channels (μ', μ).
pub const CHANNELS: f64 = 4.0;

/// J(ω_Σ) = π Σ_channels ∫|g|² dω_Δ by trapezoid quadrature over `window`.
pub fn spectral_function(spec: &CouplingSpec, omega_sigma: f64, window: Window) -> Result<SpectralValue> {
    let h = window.step();
    let mut sum = 0.0;
    let mut peak: f64 = 0.0;
    let mut edge: f64 = 0.0;
    for k in 0..window.n {
        let g2 = spec.eval(omega_sigma, window.node(k))?.powi(2);
        sum += trap_weight(k, window.n) * g2;
        peak = peak.max(g2);
        if k == 0 || k + 1 == window.n {
            edge = edge.max(g2);
        }
    }
    let tail_mass = match spec {
        CouplingSpec::Gaussian { beta, center, .. } => {
            gaussian_tail_mass(window.lo, window.hi, *center, *beta)
        }
        CouplingSpec::Physical { .. } => {
            if peak > 0.0 {
                edge / peak
            } else {
                0.0
            }
        }
    };
    Ok(SpectralValue { value: PI * CHANNELS * sum * h, tail_mass })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrincipalValue {
    pub value: f64,
    /// Difference against the same rule at half the step.
    pub error: f64,
}

/// PV ∫_lo^hi f(x)/(pole − x) dx by singularity subtraction and the trapezoid rule.
pub fn principal_value(f: impl Fn(f64) -> f64, pole: f64, lo: f64, hi: f64, n: usize) -> Result<PrincipalValue> {
    if !(pole > lo && pole < hi) {
        return Err(Error::Domain("principal-value pole must lie inside the window".into()));
    }
    if n < 3 {
        return Err(Error::Config("principal value needs n >= 3".into()));
    }
    let fp = f(pole);
    let rule = |n: usize| {
        let h = (hi - lo) / (n - 1) as f64;
        let mut s = 0.0;
        for k in 0..n {
            let x = lo + k as f64 * h;
            let v = if (x - pole).abs() < 1e-9 * h {
                -(f(pole + h) - f(pole - h)) / (2.0 * h)
            } else {
                (f(x) - fp) / (pole - x)
            };
            s += trap_weight(k, n) * v;
        }
        s * h + fp * ((pole - lo) / (hi - pole)).ln()
    };
    let fine = rule(2 * n - 1);
    let coarse = rule(n);
    Ok(PrincipalValue { value: fine, error: (fine - coarse).abs() })
}

/// Frequency shift PV ∫ J(ω_Σ)/(ω_2X − ω_Σ) dω_Σ, J from `spectral_function`.
pub fn lamb_shift(
    spec: &CouplingSpec,
    omega_2x: f64,
    sigma_window: Window,
    delta_window: Window,
) -> Result<PrincipalValue> {
    // Evaluate once to surface domain errors before the closure.
    spectral_function(spec, omega_2x, delta_window)?;
    let j = |s: f64| spectral_function(spec, s, delta_window).map(|v| v.value).unwrap_or(f64::NAN);
    let pv = principal_value(j, omega_2x, sigma_window.lo, sigma_window.hi, sigma_window.n)?;
    if !pv.value.is_finite() {
        return Err(Error::Domain("spectral function not evaluable on the lamb-shift window".into()));
    }
    Ok(pv)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Condition {
    pub holds: bool,
    /// Ratio against the required factor; ≥ 1 when the condition holds.
    pub margin: f64,
}

impl Condition {
    fn at_least(value: f64) -> Self {
        Condition { holds: value >= 1.0, margin: value }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    pub interaction_time: f64,
    pub factor: f64,
    /// T ≫ 1/δ_e.
    pub one_photon_averaging: Condition,
    /// T ≪ 1/Δω for both photon bandwidths.
    pub quasi_static_two_photon: Condition,
    /// T ≫ 1/Γ.
    pub emitter_decayed: Condition,
    /// δ_e ≫ Σ‖g‖.
    pub dispersive: Condition,
    /// S ≪ Σ‖g‖.
    pub fss_negligible: Condition,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl RegimeReport {
    pub fn timescales_hold(&self) -> bool {
        self.one_photon_averaging.holds && self.quasi_static_two_photon.holds && self.emitter_decayed.holds
    }
}

/// Time-scale conditions and operator-norm bounds for adiabatic elimination.
pub fn regime_check(
    params: &PhysicalParams,
    t: f64,
    coupling_l2_norms: &[f64],
    bandwidths: (f64, f64),
    delta_e: f64,
    factor: f64,
) -> RegimeReport {
    let sum_g: f64 = coupling_l2_norms.iter().sum();
    let s = params.s;
    let b1 = 2.0 * SQRT_2 * sum_g / (t * delta_e);
    let b2 = 2.0 * SQRT_2 * sum_g * sum_g / (t * delta_e * delta_e);
    let b3 = SQRT_2
        * coupling_l2_norms
            .iter()
            .map(|g| 2.0 * s * g / (delta_e * delta_e * t) + s * g / delta_e)
            .sum::<f64>();
    let bw = bandwidths.0.max(bandwidths.1);
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::INFINITY };
    RegimeReport {
        interaction_time: t,
        factor,
        one_photon_averaging: Condition::at_least(t * delta_e / factor),
        quasi_static_two_photon: Condition::at_least(ratio(1.0, factor * t * bw)),
        emitter_decayed: Condition::at_least(t * params.gamma / factor),
        dispersive: Condition::at_least(ratio(delta_e, factor * sum_g)),
        fss_negligible: Condition::at_least(ratio(sum_g, factor * s)),
        b1,
        b2,
        b3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_bracket_on_two_photon_resonance() {
        let p = PhysicalParams::default();
        let one = |_: f64| C64::new(1.0, 0.0);
        let w = p.omega_2x / 2.0;
        let v = branch_coupling(&p, one, one, w, w, 0.0).unwrap();
        assert!((v.re + 4.0 / p.delta_x).abs() < 1e-9 * (4.0 / p.delta_x));
        let zero = |_: f64| C64::new(0.0, 0.0);
        assert_eq!(branch_coupling(&p, zero, one, 0.49, 0.51, 0.0).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn branch_bracket_reflection() {
        let p = PhysicalParams::default();
        let one = |_: f64| C64::new(1.0, 0.0);
        let (cx, cb) = (p.omega_x, p.omega_2x - p.omega_x);
        for &(a, b) in &[(1e-3, 2e-3), (-3e-4, 7e-4), (5e-3, -1e-3)] {
            let v = branch_coupling(&p, one, one, cb + b, cx + a, 0.0).unwrap();
            let r = branch_coupling(&p, one, one, cb - b, cx - a, 0.0).unwrap();
            assert!((v + r).norm() < 1e-9 * v.norm().max(1.0));
        }
    }

    #[test]
    fn pole_floor_is_enforced() {
        let p = PhysicalParams::default();
        assert!(nonseparable_bracket(&p, 0.49, p.omega_x + 1e-9, 1e-6).is_err());
    }

    #[test]
    fn gaussian_peak_and_norm() {
        let (beta, gamma) = (2e-5, 3e-6);
        let peak = gaussian_coupling(beta, gamma, 0.0, 0.0);
        let expect = (gamma / PI).sqrt() * (2.0 * PI * beta * beta).powf(-0.25);
        assert!((peak - expect).abs() < 1e-14 * expect);
        let w = Window::new(-12.0 * beta, 12.0 * beta, 2001).unwrap();
        let s: f64 = (0..w.n)
            .map(|k| trap_weight(k, w.n) * gaussian_coupling(beta, gamma, 0.0, w.node(k)).powi(2))
            .sum::<f64>()
            * w.step();
        assert!((s - gamma / PI).abs() < 1e-8 * gamma / PI);
    }

    #[test]
    fn spectral_function_equals_gamma() {
        let gamma = 1e-5;
        let spec = CouplingSpec::isotropic(4e-6, gamma, 0.0052);
        let w = Window::new(0.0052 - 60e-6, 0.0052 + 60e-6, 1201).unwrap();
        let j = spectral_function(&spec, 1.0, w).unwrap();
        assert!(j.window_ok());
        assert!((j.value - gamma).abs() < 1e-8 * gamma);
        let j2 = spectral_function(&spec.scaled(3.0), 1.0, w).unwrap();
        assert!((j2.value - 9.0 * j.value).abs() < 1e-12 * j2.value);
        let narrow = Window::new(0.0052 - 4e-6, 0.0052 + 4e-6, 101).unwrap();
        assert!(!spectral_function(&spec, 1.0, narrow).unwrap().window_ok());
    }

    #[test]
    fn principal_value_oracles() {
        let sym = principal_value(|x| (-(x - 1.0) * (x - 1.0) * 1e4).exp(), 1.0, 0.9, 1.1, 401).unwrap();
        assert!(sym.value.abs() < 1e-12);
        let flat = principal_value(|_| 2.0, 0.0, -1.0, 1.0, 101).unwrap();
        assert!(flat.value.abs() < 1e-12);
        // Box on [a, b] above the pole.
        let (a, b, j0) = (0.1, 0.4, 1.5);
        let boxf = |x: f64| if x >= a && x <= b { j0 } else { 0.0 };
        let pv = principal_value(boxf, 0.0, -1.0, 1.0, 4001).unwrap();
        let expect = -(b / a).ln() * j0;
        assert!((pv.value - expect).abs() < 2e-3 * expect.abs(), "{} vs {}", pv.value, expect);
    }

    #[test]
    fn lamb_shift_vanishes_for_flat_spectrum() {
        let spec = CouplingSpec::isotropic(4e-6, 1e-5, 0.0);
        let sw = Window::new(1.0 - 1e-4, 1.0 + 1e-4, 201).unwrap();
        let dw = Window::new(-60e-6, 60e-6, 401).unwrap();
        let ls = lamb_shift(&spec, 1.0, sw, dw).unwrap();
        assert!(ls.value.abs() < 1e-14, "{}", ls.value);
    }

    #[test]
    fn regime_limits() {
        let mut p = PhysicalParams::default();
        let norms = [1e-3, 2e-3];
        let r = regime_check(&p, 1e12, &norms, (1e-5, 1e-5), 2.5e-3, 10.0);
        assert!(r.b1 < 1e-9 && r.b2 < 1e-9);
        let lim = SQRT_2 * p.s * 3e-3 / 2.5e-3;
        assert!((r.b3 - lim).abs() < 1e-9 * lim);
        p.s = 0.0;
        assert_eq!(regime_check(&p, 1e4, &norms, (1e-5, 1e-5), 2.5e-3, 10.0).b3, 0.0);
    }

    #[test]
    fn cubic_and_linear_profiles() {
        let f = |w: f64| (-(w - 0.5) * (w - 0.5) / 2e-6).exp();
        let lin = ModeProfile::from_fn(0.495, 0.505, 201, Interpolation::Linear, f).unwrap();
        let cub = ModeProfile::from_fn(0.495, 0.505, 201, Interpolation::Cubic, f).unwrap();
        for &(x, u) in &lin.samples {
            assert_eq!(lin.eval(x).unwrap(), u);
            assert_eq!(cub.eval(x).unwrap(), u);
        }
        let mid = 0.5 + 0.25e-4;
        assert!((cub.eval(mid).unwrap() - f(mid)).abs() < 1e-6);
        assert!(lin.eval(0.6).is_err());
        assert!(ModeProfile::new(vec![(0.0, 1.0), (0.0, 1.0)], Interpolation::Linear).is_err());
        assert!(ModeProfile::new(vec![(0.0, -1.0), (1.0, 1.0)], Interpolation::Linear).is_err());
    }
}
