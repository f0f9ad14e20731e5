//! Input states, the Markovian two-photon scattering map and its closed forms.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingSpec, CHANNELS};
use crate::error::{Error, Result};
use crate::spectral::{
    gaussian_tail_mass, integrate2d, lorentzian_emission, to_collective, trap_weight, BiphotonField,
    ChannelLabel, FrequencyGrid, PhysicalParams, C64,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianInput {
    pub alpha: f64,
    pub omega_e: f64,
    pub omega_b: f64,
}

impl GaussianInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.omega_e.is_finite() || !self.omega_b.is_finite() {
            return Err(Error::Config("gaussian input needs alpha > 0 and finite centers".into()));
        }
        Ok(())
    }

    /// Unrenormalized amplitude, Gaussian of width α along both collective axes.
    pub fn amplitude(&self, omega: f64, omega_prime: f64) -> f64 {
        let (s, d) = to_collective(omega, omega_prime);
        let (cs, cd) = to_collective(self.omega_e, self.omega_b);
        let a2 = self.alpha * self.alpha;
        (2.0 * PI * a2).powf(-0.5) * (-(s - cs).powi(2) / (4.0 * a2)).exp() * (-(d - cd).powi(2) / (4.0 * a2)).exp()
    }

    /// Factor that brings `amplitude` to unit norm on `grid`.
    pub fn grid_scale(&self, grid: &FrequencyGrid) -> Result<f64> {
        self.validate()?;
        // |C|² has standard deviation α/√2 along each of ω and ω'.
        let s = self.alpha / 2f64.sqrt();
        let t1 = gaussian_tail_mass(grid.omega_min, grid.omega_max, self.omega_e, s);
        let t2 = gaussian_tail_mass(grid.omega_prime_min, grid.omega_prime_max, self.omega_b, s);
        let tail = 1.0 - (1.0 - t1) * (1.0 - t2);
        if tail > 1e-9 {
            return Err(Error::Domain(format!(
                "grid window misses {tail:.3e} of the input mass (limit 1e-9)"
            )));
        }
        let n = crate::spectral::integrate_nodes(grid, |i, j| {
            self.amplitude(grid.omega(i), grid.omega_prime(j)).powi(2)
        });
        Ok(1.0 / n.sqrt())
    }
}

/// Input field on `grid`, channel (+,+), normalized in the (ω, ω') plane.
pub fn gaussian_input(spec: &GaussianInput, grid: &FrequencyGrid) -> Result<BiphotonField> {
    let k = spec.grid_scale(grid)?;
    let mut f = BiphotonField::from_fn(grid.clone(), ChannelLabel::PP, |w, wp| {
        C64::new(k * spec.amplitude(w, wp), 0.0)
    })?;
    f.normalized = true;
    Ok(f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombFilter {
    pub fsr: f64,
    pub peak_width: f64,
    #[serde(default)]
    pub n_range: Option<usize>,
    #[serde(default)]
    pub shift_to_centers: bool,
}

impl CombFilter {
    pub fn validate(&self) -> Result<()> {
        if !(self.fsr > 0.0) || !(self.peak_width > 0.0) {
            return Err(Error::Config("comb filter needs fsr > 0 and peak_width > 0".into()));
        }
        Ok(())
    }

    pub fn high_finesse(&self) -> bool {
        self.fsr >= 5.0 * self.peak_width
    }

    /// Truncation half-width for a window of the given half-width.
    pub fn range_for(&self, half_width: f64) -> usize {
        self.n_range.unwrap_or((half_width / self.fsr).ceil() as usize + 3)
    }

    /// f(x) = Σ_n exp(−(x − c − n ω̄)²/(2δω²)), summed over the `range` peaks nearest x.
    pub fn response(&self, x: f64, c: f64, range: usize) -> f64 {
        let n0 = ((x - c) / self.fsr).round();
        let r = range as i64;
        let mut s = 0.0;
        for k in -r..=r {
            let y = x - c - (n0 + k as f64) * self.fsr;
            s += (-(y * y) / (2.0 * self.peak_width * self.peak_width)).exp();
        }
        s
    }

    /// Relative size of the first neglected comb term.
    pub fn truncation_error(&self, range: usize) -> f64 {
        let y = (range as f64 + 0.5) * self.fsr;
        (-(y * y) / (2.0 * self.peak_width * self.peak_width)).exp()
    }
}

/// Pointwise multiplication by f(ω)·f(ω'); the result is left unnormalized.
pub fn apply_comb_filter(field: &BiphotonField, filter: &CombFilter, centers: (f64, f64)) -> Result<BiphotonField> {
    filter.validate()?;
    let g = &field.grid;
    let half = 0.5 * (g.omega_max - g.omega_min).max(g.omega_prime_max - g.omega_prime_min);
    let range = filter.range_for(half);
    let (c, cp) = if filter.shift_to_centers { centers } else { (0.0, 0.0) };
    let fw: Vec<f64> = g.omegas().iter().map(|&w| filter.response(w, c, range)).collect();
    let fwp: Vec<f64> = g.omega_primes().iter().map(|&w| filter.response(w, cp, range)).collect();
    let np = g.n_omega_prime;
    let values = field
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| v * (fw[k / np] * fwp[k % np]))
        .collect();
    BiphotonField::new(g.clone(), values, field.channel)
}

#[derive(Clone, Debug)]
pub struct ScatterResult {
    /// One field per channel, in `ChannelLabel::ALL` order.
    pub fields: Vec<BiphotonField>,
    pub input_norm: f64,
    pub params: PhysicalParams,
    pub coupling: Option<CouplingSpec>,
    pub tau: f64,
    /// Relative spread of J(ω_Σ) over the grid, for non-Gaussian couplings.
    pub markov_variation: Option<f64>,
    pub warnings: Vec<String>,
}

impl ScatterResult {
    pub fn field(&self, ch: ChannelLabel) -> &BiphotonField {
        let k = ChannelLabel::ALL.iter().position(|c| *c == ch).unwrap();
        &self.fields[k]
    }

    /// Per-channel probabilities relative to the input norm.
    pub fn probabilities(&self) -> Vec<(ChannelLabel, f64)> {
        self.fields
            .iter()
            .map(|f| (f.channel, integrate2d(f) / self.input_norm))
            .collect()
    }
}

/// Applies the Markovian scattering map to an input in channel (+,+).
///
/// Lines of constant ω_Σ are the anti-diagonals i + j = s of an equal-step grid,
/// so the ω_Δ' integral is one trapezoid sum per line with step 2h.
pub fn scatter(input: &BiphotonField, coupling: &CouplingSpec, params: &PhysicalParams) -> Result<ScatterResult> {
    coupling.validate()?;
    params.validate()?;
    let grid = &input.grid;
    if !grid.equal_spacing() {
        return Err(Error::Config("scatter needs equal ω and ω' steps".into()));
    }
    if input.channel != ChannelLabel::PP {
        return Err(Error::Config("scatter expects the input in channel (+,+)".into()));
    }
    let input_norm = integrate2d(input);
    if !(input_norm > 0.0) {
        return Err(Error::Domain("input field has zero norm".into()));
    }
    let (n, np) = (grid.n_omega, grid.n_omega_prime);
    let h = grid.d_omega();
    let sigma0 = grid.omega_min + grid.omega_prime_min;

    let g: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..np)
                .map(|j| {
                    let (s, d) = to_collective(grid.omega(i), grid.omega_prime(j));
                    coupling.eval(s, d)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .concat();

    let lines = n + np - 1;
    let integrals: Vec<C64> = (0..lines)
        .into_par_iter()
        .map(|s| {
            let i_lo = s.saturating_sub(np - 1);
            let i_hi = s.min(n - 1);
            let m = i_hi - i_lo + 1;
            if m < 2 {
                return C64::new(0.0, 0.0);
            }
            let mut acc = C64::new(0.0, 0.0);
            for (k, i) in (i_lo..=i_hi).enumerate() {
                let idx = i * np + (s - i);
                acc += input.values[idx] * (g[idx] * trap_weight(k, m));
            }
            acc * (2.0 * h)
        })
        .collect();

    let tau = params.tau;
    let rows: Vec<(Vec<C64>, Vec<C64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut direct = Vec::with_capacity(np);
            let mut scattered = Vec::with_capacity(np);
            for j in 0..np {
                let s = i + j;
                let sigma = sigma0 + s as f64 * h;
                let phase = C64::from_polar(1.0, -sigma * tau);
                let idx = i * np + j;
                let lor = lorentzian_emission(sigma, params) / params.gamma;
                let sc = -PI * g[idx] * lor * integrals[s] * phase;
                direct.push(input.values[idx] * phase + sc);
                scattered.push(sc);
            }
            (direct, scattered)
        })
        .collect();
    let mut pp = Vec::with_capacity(n * np);
    let mut other = Vec::with_capacity(n * np);
    for (d, s) in rows {
        pp.extend(d);
        other.extend(s);
    }

    let mut fields = Vec::with_capacity(4);
    for ch in ChannelLabel::ALL {
        let vals = if ch == ChannelLabel::PP { pp.clone() } else { other.clone() };
        fields.push(BiphotonField::new(grid.clone(), vals, ch)?);
    }

    // J along the central half of the constant-ω_Σ lines, from the sampled coupling.
    let markov_variation = match coupling {
        CouplingSpec::Gaussian { .. } => None,
        CouplingSpec::Physical { .. } => {
            let js: Vec<f64> = (lines / 4..=3 * lines / 4)
                .map(|s| {
                    let i_lo = s.saturating_sub(np - 1);
                    let i_hi = s.min(n - 1);
                    let m = i_hi - i_lo + 1;
                    let sum: f64 = (i_lo..=i_hi)
                        .enumerate()
                        .map(|(k, i)| trap_weight(k, m) * g[i * np + s - i].powi(2))
                        .sum();
                    PI * CHANNELS * sum * 2.0 * h
                })
                .collect();
            let hi = js.iter().cloned().fold(f64::MIN, f64::max);
            let lo = js.iter().cloned().fold(f64::MAX, f64::min);
            Some(if hi > 0.0 { (hi - lo) / hi } else { 0.0 })
        }
    };

    Ok(ScatterResult {
        fields,
        input_norm,
        params: params.clone(),
        coupling: Some(coupling.clone()),
        tau,
        markov_variation,
        warnings: Vec::new(),
    })
}

/// Scattered amplitude of a Gaussian input under isotropic Gaussian coupling, before the grid scale.
fn gaussian_scattered(spec: &GaussianInput, beta: f64, params: &PhysicalParams, w: f64, wp: f64) -> C64 {
    let (s, d) = to_collective(w, wp);
    let (cs, cd) = to_collective(spec.omega_e, spec.omega_b);
    let a2 = spec.alpha * spec.alpha;
    let b2 = beta * beta;
    let pref = (1.0 / (16.0 * PI * (a2 + b2))).sqrt();
    let env = (-(s - cs).powi(2) / (4.0 * a2)).exp() * (-(d - cd).powi(2) / (4.0 * b2)).exp();
    lorentzian_emission(s, params) * (pref * env)
}

/// Closed-form outputs for a Gaussian input and isotropic Gaussian coupling of width β
/// centered on ω_e − ω_b.
pub fn analytic_gaussian_outputs(
    spec: &GaussianInput,
    beta: f64,
    params: &PhysicalParams,
    grid: &FrequencyGrid,
) -> Result<ScatterResult> {
    params.validate()?;
    if !(beta > 0.0) {
        return Err(Error::Config("beta must be positive".into()));
    }
    let k = spec.grid_scale(grid)?;
    let tau = params.tau;
    let phase = |w: f64, wp: f64| C64::from_polar(1.0, -(w + wp) * tau);
    let mut fields = Vec::with_capacity(4);
    for ch in ChannelLabel::ALL {
        let f = if ch == ChannelLabel::PP {
            BiphotonField::from_fn(grid.clone(), ch, |w, wp| {
                (C64::new(spec.amplitude(w, wp), 0.0) - gaussian_scattered(spec, beta, params, w, wp))
                    * phase(w, wp)
                    * k
            })?
        } else {
            BiphotonField::from_fn(grid.clone(), ch, |w, wp| {
                -gaussian_scattered(spec, beta, params, w, wp) * phase(w, wp) * k
            })?
        };
        fields.push(f);
    }
    Ok(ScatterResult {
        fields,
        input_norm: 1.0,
        params: params.clone(),
        coupling: Some(CouplingSpec::isotropic(beta, params.gamma, spec.omega_e - spec.omega_b)),
        tau,
        markov_variation: None,
        warnings: Vec::new(),
    })
}

/// Limit joint spectral intensity of a non-input channel for Γ ≫ α.
pub fn limit_jsi(spec: &GaussianInput, beta: f64, omega: f64, omega_prime: f64) -> f64 {
    let (s, d) = to_collective(omega, omega_prime);
    let (cs, cd) = to_collective(spec.omega_e, spec.omega_b);
    let (a2, b2) = (spec.alpha * spec.alpha, beta * beta);
    (-(d - cd).powi(2) / (2.0 * b2)).exp() * (-(s - cs).powi(2) / (2.0 * a2)).exp() / (4.0 * PI * (a2 + b2))
}

#[derive(Clone, Debug)]
pub struct QuditOutput {
    pub field: BiphotonField,
    /// Largest boundary term of the (n, m) sum relative to the largest term.
    pub truncation: f64,
    pub warnings: Vec<String>,
}

/// Comb terms (Σ-center, weight) of the closed-form qudit output, grouped by n + m,
/// and the relative size of the largest boundary term.
fn qudit_comb_terms(
    spec: &GaussianInput,
    filter: &CombFilter,
    beta: f64,
    half: f64,
    sig_range: (f64, f64),
) -> (Vec<(f64, f64)>, f64) {
    let (a2, b2) = (spec.alpha * spec.alpha, beta * beta);
    let dw2 = filter.peak_width * filter.peak_width;
    let fsr = filter.fsr;
    let (cs_env, cd_env) = to_collective(spec.omega_e, spec.omega_b);
    // Comb indices are centered on the peaks nearest each photon center.
    let (c_sigma, c_delta, n0, m0) = if filter.shift_to_centers {
        (cs_env, 0.0, 0i64, 0i64)
    } else {
        (0.0, cd_env, (spec.omega_e / fsr).round() as i64, (spec.omega_b / fsr).round() as i64)
    };
    let r = filter.range_for(half) as i64;
    let denom = a2 * b2 + dw2 * (a2 + b2);
    // Size of a peak's Σ-Gaussian at the nearest point of the window.
    let on_window = |s: i64| {
        let c = c_sigma + fsr * s as f64;
        let y = if c < sig_range.0 {
            sig_range.0 - c
        } else if c > sig_range.1 {
            c - sig_range.1
        } else {
            0.0
        };
        (-(y * y) / (4.0 * dw2)).exp()
    };
    let mut by_sum = std::collections::BTreeMap::<i64, f64>::new();
    let mut max_term: f64 = 0.0;
    let mut max_edge: f64 = 0.0;
    for n in n0 - r..=n0 + r {
        for m in m0 - r..=m0 + r {
            let x = c_delta - fsr * (n - m) as f64;
            let e = (-0.25 * (a2 + b2) * x * x / denom).exp();
            *by_sum.entry(n + m).or_insert(0.0) += e;
            let seen = e * on_window(n + m);
            max_term = max_term.max(seen);
            if (n - n0).abs() == r || (m - m0).abs() == r {
                max_edge = max_edge.max(seen);
            }
        }
    }
    let truncation = if max_term > 0.0 { max_edge / max_term } else { 0.0 };
    let terms = by_sum.iter().map(|(&s, &a)| (c_sigma + fsr * s as f64, a)).collect();
    (terms, truncation)
}

/// Span of the 1-D quadratures below, in units of α.
const QUDIT_SPAN_SIGMAS: f64 = 12.0;

/// Success probability of the closed-form qudit output. The ω_Δ integral is done
/// exactly and the ω_Σ, ω, ω' integrals on 1-D grids finer than δω and α, so the
/// result stays accurate when β is below any practical 2-D grid step.
pub fn qudit_success_closed_form(
    spec: &GaussianInput,
    filter: &CombFilter,
    beta: f64,
    params: &PhysicalParams,
) -> Result<f64> {
    spec.validate()?;
    filter.validate()?;
    params.validate()?;
    if !(beta > 0.0) {
        return Err(Error::Config("beta must be positive".into()));
    }
    let alpha = spec.alpha;
    let (a2, b2) = (alpha * alpha, beta * beta);
    let dw2 = filter.peak_width * filter.peak_width;
    let denom = a2 * b2 + dw2 * (a2 + b2);
    let half = QUDIT_SPAN_SIGMAS * alpha;
    let step = filter.peak_width.min(alpha) / 16.0;
    let n = (2.0 * half / step).ceil() as usize + 1;
    let trap = |c: f64, span: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        let h = 2.0 * span / (n - 1) as f64;
        (0..n).map(|k| trap_weight(k, n) * f(c - span + k as f64 * h)).sum::<f64>() * h
    };
    let (cs, _) = to_collective(spec.omega_e, spec.omega_b);
    let (terms, _) = qudit_comb_terms(spec, filter, beta, half, (cs - 2.0 * half, cs + 2.0 * half));
    let comb = |s: f64| terms.iter().map(|&(c, a)| a * (-(s - c).powi(2) / (4.0 * dw2)).exp()).sum::<f64>();
    let sigma_int = trap(cs, half, &|s| {
        lorentzian_emission(s, params).norm_sqr() * (-(s - cs).powi(2) / (2.0 * a2)).exp() * comb(s).powi(2)
    });
    // dω dω' = dω_Σ dω_Δ / 2.
    let per_channel = dw2 / (16.0 * PI * denom) * (2.0 * PI).sqrt() * beta / 2.0 * sigma_int;

    let range = filter.range_for(half);
    let photon = |c: f64, shift: f64| {
        trap(c, half, &|w| (-(w - c).powi(2) / a2).exp() * filter.response(w, shift, range).powi(2))
    };
    let (se, sb) = if filter.shift_to_centers { (spec.omega_e, spec.omega_b) } else { (0.0, 0.0) };
    let input = photon(spec.omega_e, se) * photon(spec.omega_b, sb) / (2.0 * PI * a2);
    Ok(3.0 * per_channel / input)
}

/// Closed-form non-input-channel output for a comb-filtered Gaussian input.
pub fn analytic_qudit_output(
    spec: &GaussianInput,
    filter: &CombFilter,
    beta: f64,
    params: &PhysicalParams,
    grid: &FrequencyGrid,
) -> Result<QuditOutput> {
    filter.validate()?;
    params.validate()?;
    if !(beta > 0.0) {
        return Err(Error::Config("beta must be positive".into()));
    }
    let k = spec.grid_scale(grid)?;
    let (a2, b2) = (spec.alpha * spec.alpha, beta * beta);
    let dw2 = filter.peak_width * filter.peak_width;
    let (cs_env, cd_env) = to_collective(spec.omega_e, spec.omega_b);
    let half = 0.5 * (grid.omega_max - grid.omega_min).max(grid.omega_prime_max - grid.omega_prime_min);
    let sig_range = (grid.omega_min + grid.omega_prime_min, grid.omega_max + grid.omega_prime_max);
    let (terms, truncation) = qudit_comb_terms(spec, filter, beta, half, sig_range);
    let denom = a2 * b2 + dw2 * (a2 + b2);
    let mut warnings = Vec::new();
    if truncation > 1e-10 {
        warnings.push(format!("comb truncation term {truncation:.3e} exceeds 1e-10; raise n_range"));
    }
    let pref = (dw2 / (16.0 * PI * denom)).sqrt();
    let tau = params.tau;
    let field = BiphotonField::from_fn(grid.clone(), ChannelLabel::MM, |w, wp| {
        let (s, d) = to_collective(w, wp);
        let mut comb = 0.0;
        for &(c, a) in &terms {
            let y = s - c;
            comb += a * (-(y * y) / (4.0 * dw2)).exp();
        }
        let env = (-(d - cd_env).powi(2) / (4.0 * b2)).exp() * (-(s - cs_env).powi(2) / (4.0 * a2)).exp();
        -C64::from_polar(1.0, -s * tau) * lorentzian_emission(s, params) * (k * pref * env * comb)
    })?;
    Ok(QuditOutput { field, truncation, warnings })
}

/// Relative RMS distance ‖a − b‖/‖b‖ over grid nodes.
pub fn relative_rms(a: &BiphotonField, b: &BiphotonField) -> f64 {
    let num: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.values.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn narrow_pulse() -> (GaussianInput, PhysicalParams) {
        let p = PhysicalParams::default();
        (GaussianInput { alpha: 1e-6, omega_e: p.omega_e, omega_b: p.omega_b }, p)
    }

    #[test]
    fn input_is_normalized_and_peaked() {
        let (spec, _) = narrow_pulse();
        let grid = FrequencyGrid::centered(spec.omega_e, spec.omega_b, 6e-6, 121).unwrap();
        let f = gaussian_input(&spec, &grid).unwrap();
        assert!((integrate2d(&f) - 1.0).abs() < 1e-8);
        let (mut best, mut at) = (0.0, (0, 0));
        for i in 0..grid.n_omega {
            for j in 0..grid.n_omega_prime {
                if f.at(i, j).norm() > best {
                    best = f.at(i, j).norm();
                    at = (i, j);
                }
            }
        }
        assert_eq!(at, (60, 60));
    }

    #[test]
    fn narrow_window_rejected() {
        let (spec, _) = narrow_pulse();
        let grid = FrequencyGrid::centered(spec.omega_e, spec.omega_b, 2e-6, 41).unwrap();
        assert!(matches!(gaussian_input(&spec, &grid), Err(Error::Domain(_))));
    }

    #[test]
    fn comb_response_examples() {
        let f = CombFilter { fsr: 1e-5, peak_width: 1e-6, n_range: None, shift_to_centers: false };
        let at_peak = f.response(0.5, 0.0, 5);
        assert!((at_peak - 1.0).abs() < 1e-20 + 2.0 * (-50.0f64).exp());
        let mid = f.response(0.5 + 0.5e-5, 0.0, 5);
        let expect = 2.0 * (-(1e-5f64).powi(2) / (8.0 * 1e-12)).exp();
        assert!((mid - expect).abs() < 1e-6 * expect);
    }

    #[test]
    fn zero_coupling_passes_through() {
        let (spec, mut p) = narrow_pulse();
        p.tau = 3e5;
        let grid = FrequencyGrid::centered(spec.omega_e, spec.omega_b, 6e-6, 61).unwrap();
        let input = gaussian_input(&spec, &grid).unwrap();
        let zero = CouplingSpec::Gaussian { beta: 4e-6, gamma: 1e-300, center: 0.0052 };
        let out = scatter(&input, &zero, &p).unwrap();
        for i in 0..grid.n_omega {
            for j in 0..grid.n_omega_prime {
                let s = grid.omega(i) + grid.omega_prime(j);
                let want = input.at(i, j) * C64::from_polar(1.0, -s * p.tau);
                assert!((out.field(ChannelLabel::PP).at(i, j) - want).norm() < 1e-9 * input.at(30, 30).norm());
                assert!(out.field(ChannelLabel::MM).at(i, j).norm() < 1e-100);
            }
        }
    }

    #[test]
    fn non_input_channels_identical() {
        let (spec, p) = narrow_pulse();
        let grid = FrequencyGrid::centered(spec.omega_e, spec.omega_b, 24e-6, 129).unwrap();
        let input = gaussian_input(&spec, &grid).unwrap();
        let out = scatter(&input, &CouplingSpec::isotropic(4e-6, p.gamma, 0.0052), &p).unwrap();
        let mm = out.field(ChannelLabel::MM);
        for ch in [ChannelLabel::MP, ChannelLabel::PM] {
            let f = out.field(ch);
            assert!(f.values.iter().zip(&mm.values).all(|(a, b)| (a.norm() - b.norm()).abs() <= 1e-12 * b.norm().max(1e-300)));
        }
    }

    #[test]
    fn qudit_closed_form_success_matches_grid() {
        let p = PhysicalParams { gamma: 2e-4, ..PhysicalParams::default() };
        let spec = GaussianInput { alpha: 2e-5, omega_e: p.omega_e, omega_b: p.omega_b };
        let filter = CombFilter { fsr: 1e-5, peak_width: 1e-6, n_range: None, shift_to_centers: true };
        let beta = 5e-6;
        let grid = FrequencyGrid::centered(spec.omega_e, spec.omega_b, 1.2e-4, 801).unwrap();
        let input = apply_comb_filter(&gaussian_input(&spec, &grid).unwrap(), &filter, (spec.omega_e, spec.omega_b)).unwrap();
        let out = analytic_qudit_output(&spec, &filter, beta, &p, &grid).unwrap();
        let on_grid = 3.0 * integrate2d(&out.field) / integrate2d(&input);
        let quad = qudit_success_closed_form(&spec, &filter, beta, &p).unwrap();
        assert!((on_grid / quad - 1.0).abs() < 2e-3, "{on_grid} vs {quad}");
    }
}
