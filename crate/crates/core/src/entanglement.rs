//! Continuous-variable Schmidt decomposition, success probabilities and sweeps.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingSpec;
use crate::error::{Error, Result};
use crate::scattering::{
    apply_comb_filter, gaussian_input, qudit_success_closed_form, scatter, CombFilter, GaussianInput, ScatterResult,
};
use crate::spectral::{
    integrate2d, integrate_nodes, trap_weight, BiphotonField, ChannelLabel, FrequencyGrid, PhysicalParams, C64,
    DEFAULT_WINDOW_SIGMAS,
};

/// Highest Hermite-Gauss order accepted.
pub const MAX_ORDER: usize = 500;
/// Default number of basis functions per axis.
pub const DEFAULT_COUNT: usize = 60;
/// Reconstruction error above which the truncation is reported insufficient.
pub const RECONSTRUCTION_GATE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub center: f64,
    pub scale: f64,
    pub count: usize,
}

impl BasisSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || self.count == 0 || !self.center.is_finite() {
            return Err(Error::Config("basis needs scale > 0 and count >= 1".into()));
        }
        if self.count > MAX_ORDER + 1 {
            return Err(Error::Domain(format!("basis order above {MAX_ORDER} is unstable")));
        }
        Ok(())
    }

    /// Rows are orders 0..count, columns the sample points.
    pub fn table(&self, omegas: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let mut out = vec![vec![0.0; omegas.len()]; self.count];
        for (k, &w) in omegas.iter().enumerate() {
            let col = hermite_gauss_all(self.count - 1, self, w);
            for (n, v) in col.into_iter().enumerate() {
                out[n][k] = v;
            }
        }
        Ok(out)
    }
}

/// Orthonormal Hermite-Gauss functions of orders 0..=n_max at `omega`.
fn hermite_gauss_all(n_max: usize, spec: &BasisSpec, omega: f64) -> Vec<f64> {
    let t = (omega - spec.center) / spec.scale;
    let mut p = Vec::with_capacity(n_max + 1);
    p.push(PI.powf(-0.25) * (-0.5 * t * t).exp() / spec.scale.sqrt());
    if n_max >= 1 {
        p.push(2f64.sqrt() * t * p[0]);
    }
    for k in 2..=n_max {
        let kf = k as f64;
        let v = (2.0 / kf).sqrt() * t * p[k - 1] - ((kf - 1.0) / kf).sqrt() * p[k - 2];
        p.push(v);
    }
    p
}

/// Orthonormal Hermite-Gauss function of order `n`.
pub fn hermite_gauss(n: usize, spec: &BasisSpec, omega: f64) -> Result<f64> {
    if n > MAX_ORDER {
        return Err(Error::Domain(format!("order {n} above the stable range {MAX_ORDER}")));
    }
    if !(spec.scale > 0.0) {
        return Err(Error::Config("basis scale must be positive".into()));
    }
    Ok(hermite_gauss_all(n, spec, omega)[n])
}

#[derive(Clone, Debug)]
pub struct Projection {
    /// Rows index the ω' basis, columns the ω basis.
    pub coeffs: DMatrix<C64>,
    pub basis_omega: BasisSpec,
    pub basis_omega_prime: BasisSpec,
    /// ‖C − Σ C(n,m) O_n O_m‖ / ‖C‖.
    pub reconstruction_error: f64,
}

/// Expands a field on the product of two Hermite-Gauss bases.
pub fn project(field: &BiphotonField, basis_omega: &BasisSpec, basis_omega_prime: &BasisSpec) -> Result<Projection> {
    let g = &field.grid;
    let (n, np) = (g.n_omega, g.n_omega_prime);
    let o1 = basis_omega.table(&g.omegas())?;
    let o2 = basis_omega_prime.table(&g.omega_primes())?;
    let (c1, c2) = (basis_omega.count, basis_omega_prime.count);
    let (h, hp) = (g.d_omega(), g.d_omega_prime());

    // t[i][a] = Σ_j C(ω_i, ω'_j) O2_a(ω'_j) w_j h'
    let t: Vec<Vec<C64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..c2)
                .map(|a| {
                    let mut s = C64::new(0.0, 0.0);
                    for j in 0..np {
                        s += field.at(i, j) * (o2[a][j] * trap_weight(j, np));
                    }
                    s * hp
                })
                .collect()
        })
        .collect();
    let mut coeffs = DMatrix::<C64>::zeros(c2, c1);
    for a in 0..c2 {
        for b in 0..c1 {
            let mut s = C64::new(0.0, 0.0);
            for i in 0..n {
                s += t[i][a] * (o1[b][i] * trap_weight(i, n));
            }
            coeffs[(a, b)] = s * h;
        }
    }

    // bm[b][j] = Σ_a C(a,b) O2_a(ω'_j); reconstruction = Σ_b O1_b(ω_i) bm[b][j].
    let bm: Vec<Vec<C64>> = (0..c1)
        .map(|b| (0..np).map(|j| (0..c2).map(|a| coeffs[(a, b)] * o2[a][j]).sum()).collect())
        .collect();
    let norm = integrate2d(field);
    let diff = integrate_nodes(g, |i, j| {
        let mut r = C64::new(0.0, 0.0);
        for b in 0..c1 {
            r += bm[b][j] * o1[b][i];
        }
        (field.at(i, j) - r).norm_sqr()
    });
    let reconstruction_error = if norm > 0.0 { (diff / norm).sqrt() } else { f64::NAN };
    Ok(Projection {
        coeffs,
        basis_omega: *basis_omega,
        basis_omega_prime: *basis_omega_prime,
        reconstruction_error,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SchmidtSpectrum {
    pub lambdas: Vec<f64>,
    /// Mode k of the ω' photon as coefficients over its basis (or grid samples).
    #[serde(skip)]
    pub modes_omega_prime: Vec<Vec<C64>>,
    /// Mode k of the ω photon.
    #[serde(skip)]
    pub modes_omega: Vec<Vec<C64>>,
    pub schmidt_number: f64,
    pub entropy_nats: f64,
    pub entropy_bits: f64,
    /// Entropy divided by ln(number of retained coefficients).
    pub normalized_entropy: f64,
    pub truncation: (usize, usize),
    pub reconstruction_error: f64,
}

/// SVD of a coefficient matrix, singular values renormalized to Σλ² = 1.
pub fn schmidt_decompose(c: &DMatrix<C64>) -> Result<SchmidtSpectrum> {
    if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Domain("coefficient matrix is not finite".into()));
    }
    let svd = c.clone().svd(true, true);
    let sv = &svd.singular_values;
    let total: f64 = sv.iter().map(|s| s * s).sum();
    if !(total > 0.0) {
        return Err(Error::Domain("coefficient matrix is zero".into()));
    }
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let lambdas: Vec<f64> = order.iter().map(|&k| sv[k] / total.sqrt()).collect();
    let modes_omega_prime = order.iter().map(|&k| u.column(k).iter().cloned().collect()).collect();
    let modes_omega = order.iter().map(|&k| vt.row(k).iter().cloned().collect()).collect();
    let k = schmidt_number(&lambdas)?;
    let e = entanglement_entropy(&lambdas)?;
    Ok(SchmidtSpectrum {
        lambdas,
        modes_omega_prime,
        modes_omega,
        schmidt_number: k,
        entropy_nats: e.nats,
        entropy_bits: e.bits,
        normalized_entropy: e.normalized,
        truncation: (c.nrows(), c.ncols()),
        reconstruction_error: 0.0,
    })
}

/// K = 1/Σλ⁴.
pub fn schmidt_number(lambdas: &[f64]) -> Result<f64> {
    if lambdas.is_empty() {
        return Err(Error::Domain("empty Schmidt spectrum".into()));
    }
    Ok(1.0 / lambdas.iter().map(|l| l.powi(4)).sum::<f64>())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Entropy {
    pub nats: f64,
    pub bits: f64,
    pub normalized: f64,
}

pub fn entanglement_entropy(lambdas: &[f64]) -> Result<Entropy> {
    if lambdas.is_empty() {
        return Err(Error::Domain("empty Schmidt spectrum".into()));
    }
    let nats: f64 = lambdas
        .iter()
        .map(|l| l * l)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    let nats = nats.max(0.0);
    let normalized = if lambdas.len() > 1 { nats / (lambdas.len() as f64).ln() } else { 0.0 };
    Ok(Entropy { nats, bits: nats / 2f64.ln(), normalized })
}

/// Schmidt number of the double-Gaussian amplitude with width ratio r.
pub fn thermal_schmidt_number(r: f64) -> f64 {
    0.5 * (r + 1.0 / r)
}

/// Ratio λ²_{k+1}/λ²_k of the double-Gaussian spectrum.
pub fn thermal_ratio(r: f64) -> f64 {
    ((r - 1.0) / (r + 1.0)).powi(2)
}

pub fn thermal_entropy(r: f64) -> f64 {
    let q = thermal_ratio(r);
    if q == 0.0 {
        return 0.0;
    }
    -(1.0 - q).ln() - q * q.ln() / (1.0 - q)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mean_omega: f64,
    pub mean_omega_prime: f64,
    pub var_omega: f64,
    pub var_omega_prime: f64,
    pub cov: f64,
}

/// First and second moments of |C|² in the (ω, ω') plane.
pub fn moments(field: &BiphotonField) -> Result<Moments> {
    let g = &field.grid;
    let norm = integrate2d(field);
    if !(norm > 0.0) {
        return Err(Error::Domain("field has zero norm".into()));
    }
    let (w0, wp0) = (0.5 * (g.omega_min + g.omega_max), 0.5 * (g.omega_prime_min + g.omega_prime_max));
    let m = |f: &(dyn Fn(f64, f64) -> f64 + Sync)| {
        integrate_nodes(g, |i, j| field.at(i, j).norm_sqr() * f(g.omega(i) - w0, g.omega_prime(j) - wp0)) / norm
    };
    let mx = m(&|x, _| x);
    let my = m(&|_, y| y);
    let vx = m(&|x, _| (x - mx) * (x - mx));
    let vy = m(&|_, y| (y - my) * (y - my));
    let cxy = m(&|x, y| (x - mx) * (y - my));
    if !(vx > 0.0) || !(vy > 0.0) {
        return Err(Error::Domain("field has zero variance".into()));
    }
    Ok(Moments { mean_omega: mx + w0, mean_omega_prime: my + wp0, var_omega: vx, var_omega_prime: vy, cov: cxy })
}

/// Basis centers at the marginal means; scales from the covariance of |C|².
pub fn bases_from_moments(field: &BiphotonField, counts: (usize, usize)) -> Result<(BasisSpec, BasisSpec)> {
    let m = moments(field)?;
    let det = (m.var_omega * m.var_omega_prime - m.cov * m.cov).max(0.0).sqrt();
    let (sx, sy) = (m.var_omega.sqrt(), m.var_omega_prime.sqrt());
    let det = if det > 0.0 { det } else { sx * sy };
    let scale_x = (2.0 * det * sx / sy).sqrt();
    let scale_y = (2.0 * det * sy / sx).sqrt();
    Ok((
        BasisSpec { center: m.mean_omega, scale: scale_x, count: counts.0 },
        BasisSpec { center: m.mean_omega_prime, scale: scale_y, count: counts.1 },
    ))
}

#[derive(Clone, Debug)]
pub struct FieldSchmidt {
    pub spectrum: SchmidtSpectrum,
    pub projection: Projection,
    pub warnings: Vec<String>,
}

impl FieldSchmidt {
    /// Schmidt mode `k` of each photon sampled on the grid, as (ω-mode, ω'-mode).
    pub fn mode_samples(&self, grid: &FrequencyGrid, k: usize) -> Result<(Vec<C64>, Vec<C64>)> {
        let o1 = self.projection.basis_omega.table(&grid.omegas())?;
        let o2 = self.projection.basis_omega_prime.table(&grid.omega_primes())?;
        let a = &self.spectrum.modes_omega[k];
        let b = &self.spectrum.modes_omega_prime[k];
        let f1 = (0..grid.n_omega).map(|i| (0..a.len()).map(|m| a[m] * o1[m][i]).sum()).collect();
        let f2 = (0..grid.n_omega_prime).map(|j| (0..b.len()).map(|n| b[n] * o2[n][j]).sum()).collect();
        Ok((f1, f2))
    }
}

/// Normalizes, projects on moment-matched Hermite-Gauss bases, and decomposes.
pub fn schmidt_of_field(field: &BiphotonField, counts: (usize, usize)) -> Result<FieldSchmidt> {
    let f = field.clone().normalize()?;
    let (b1, b2) = bases_from_moments(&f, counts)?;
    let projection = project(&f, &b1, &b2)?;
    let mut spectrum = schmidt_decompose(&projection.coeffs)?;
    spectrum.reconstruction_error = projection.reconstruction_error;
    let mut warnings = Vec::new();
    if projection.reconstruction_error > RECONSTRUCTION_GATE {
        warnings.push(format!(
            "basis truncation insufficient: reconstruction error {:.3e} above {RECONSTRUCTION_GATE:e}",
            projection.reconstruction_error
        ));
    }
    Ok(FieldSchmidt { spectrum, projection, warnings })
}

/// Schmidt spectrum from the SVD of the quadrature-weighted grid samples.
pub fn schmidt_on_grid(field: &BiphotonField) -> Result<SchmidtSpectrum> {
    let g = &field.grid;
    let (n, np) = (g.n_omega, g.n_omega_prime);
    let (h, hp) = (g.d_omega(), g.d_omega_prime());
    let m = DMatrix::<C64>::from_fn(np, n, |j, i| {
        field.at(i, j) * (trap_weight(i, n) * h * trap_weight(j, np) * hp).sqrt()
    });
    schmidt_decompose(&m)
}

#[derive(Clone, Debug, Serialize)]
pub struct SuccessProbabilities {
    pub per_channel: Vec<(String, f64)>,
    pub p_success: f64,
}

/// Channel probabilities relative to the input norm; success sums the non-input channels.
pub fn success_probability_numeric(result: &ScatterResult, input: &BiphotonField) -> Result<SuccessProbabilities> {
    let n_in = integrate2d(input);
    if !(n_in > 0.0) {
        return Err(Error::Domain("input field has zero norm".into()));
    }
    let mut per_channel = Vec::new();
    let mut p_success = 0.0;
    for f in &result.fields {
        let p = integrate2d(f) / n_in;
        if f.channel != input.channel {
            p_success += p;
        }
        per_channel.push((f.channel.to_string(), p));
    }
    Ok(SuccessProbabilities { per_channel, p_success })
}

/// 3r/(2(1+r²)).
pub fn success_probability_analytic(r: f64) -> f64 {
    1.5 * r / (1.0 + r * r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistributionStats {
    pub sigma_sigma: f64,
    pub sigma_delta: f64,
    pub ellipticity: f64,
}

/// Widths of |C|² along ω_Σ and ω_Δ and the eccentricity of its covariance ellipse.
pub fn distribution_stats(field: &BiphotonField) -> Result<DistributionStats> {
    let m = moments(field)?;
    let vs = m.var_omega + m.var_omega_prime + 2.0 * m.cov;
    let vd = m.var_omega + m.var_omega_prime - 2.0 * m.cov;
    let tr = m.var_omega + m.var_omega_prime;
    let disc = ((m.var_omega - m.var_omega_prime).powi(2) + 4.0 * m.cov * m.cov).sqrt();
    let (l_max, l_min) = (0.5 * (tr + disc), 0.5 * (tr - disc));
    if !(l_max > 0.0) {
        return Err(Error::Domain("degenerate distribution".into()));
    }
    Ok(DistributionStats {
        sigma_sigma: vs.max(0.0).sqrt(),
        sigma_delta: vd.max(0.0).sqrt(),
        ellipticity: (1.0 - (l_min / l_max).max(0.0)).sqrt(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffConfig {
    pub alpha: f64,
    pub points: usize,
    #[serde(default = "default_window_sigmas")]
    pub window_sigmas: f64,
    #[serde(default = "default_counts")]
    pub counts: (usize, usize),
}

fn default_window_sigmas() -> f64 {
    DEFAULT_WINDOW_SIGMAS
}

fn default_counts() -> (usize, usize) {
    (DEFAULT_COUNT, DEFAULT_COUNT)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub p_success: f64,
    /// Reference success probability: the wide-linewidth formula for Gaussian inputs,
    /// the 1-D quadrature of the closed form for comb-filtered ones.
    pub p_success_reference: f64,
    /// False when the grid step exceeds half the coupling width β.
    pub resolved: bool,
    pub schmidt_number: f64,
    pub entropy_nats: f64,
    pub entropy_normalized: f64,
    pub reconstruction_error: f64,
    pub regime: String,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(ratio: f64, e: Error) -> Self {
        SweepRow {
            ratio,
            p_success: f64::NAN,
            p_success_reference: f64::NAN,
            resolved: false,
            schmidt_number: f64::NAN,
            entropy_nats: f64::NAN,
            entropy_normalized: f64::NAN,
            reconstruction_error: f64::NAN,
            regime: String::new(),
            error: Some(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Index of the row with the smallest Schmidt number.
    pub argmin_schmidt: Option<usize>,
    /// K non-increasing before the minimum and non-decreasing after it.
    pub schmidt_unimodal: bool,
    pub argmax_success: Option<usize>,
}

fn summarize(rows: Vec<SweepRow>) -> SweepReport {
    let ok: Vec<usize> = (0..rows.len()).filter(|&k| rows[k].error.is_none()).collect();
    let with_k: Vec<usize> = ok.iter().cloned().filter(|&k| rows[k].schmidt_number.is_finite()).collect();
    let argmin = with_k.iter().cloned().min_by(|&a, &b| rows[a].schmidt_number.total_cmp(&rows[b].schmidt_number));
    let argmax = ok.iter().cloned().max_by(|&a, &b| rows[a].p_success.total_cmp(&rows[b].p_success));
    let unimodal = argmin.is_some_and(|m| {
        let ks: Vec<(usize, f64)> = with_k.iter().map(|&k| (k, rows[k].schmidt_number)).collect();
        ks.windows(2).all(|w| {
            let tol = 1e-9 * w[0].1.max(w[1].1);
            if w[1].0 <= m {
                w[1].1 <= w[0].1 + tol
            } else {
                w[1].1 + tol >= w[0].1
            }
        })
    });
    SweepReport { rows, argmin_schmidt: argmin, schmidt_unimodal: unimodal, argmax_success: argmax }
}

fn width_regime(beta: f64, alpha: f64) -> String {
    let r = beta / alpha;
    if r < 0.5 {
        "anticorrelated".into()
    } else if r <= 2.0 {
        "near-separable".into()
    } else {
        "correlated".into()
    }
}

/// One Gaussian-input point: numeric scatter, success probability and Schmidt metrics.
pub fn tradeoff_point(r: f64, cfg: &TradeoffConfig, params: &PhysicalParams) -> Result<SweepRow> {
    let alpha = cfg.alpha;
    let beta = r * alpha;
    let spec = GaussianInput { alpha, omega_e: params.omega_e, omega_b: params.omega_b };
    let grid = FrequencyGrid::centered(
        params.omega_e,
        params.omega_b,
        cfg.window_sigmas * alpha.max(beta),
        cfg.points,
    )?;
    let input = gaussian_input(&spec, &grid)?;
    let coupling = CouplingSpec::isotropic(beta, params.gamma, params.omega_e - params.omega_b);
    let out = scatter(&input, &coupling, params)?;
    let p = success_probability_numeric(&out, &input)?;
    let s = schmidt_of_field(out.field(ChannelLabel::MM), cfg.counts)?;
    Ok(SweepRow {
        ratio: r,
        p_success: p.p_success,
        p_success_reference: success_probability_analytic(r),
        resolved: grid.d_omega() <= 0.5 * beta,
        schmidt_number: s.spectrum.schmidt_number,
        entropy_nats: s.spectrum.entropy_nats,
        entropy_normalized: s.spectrum.normalized_entropy,
        reconstruction_error: s.spectrum.reconstruction_error,
        regime: width_regime(beta, alpha),
        error: None,
    })
}

/// Sweep of β/α; failing points are reported and the sweep continues.
pub fn tradeoff_sweep(r_values: &[f64], cfg: &TradeoffConfig, params: &PhysicalParams) -> SweepReport {
    let rows = r_values
        .iter()
        .map(|&r| tradeoff_point(r, cfg, params).unwrap_or_else(|e| SweepRow::failed(r, e)))
        .collect();
    summarize(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuditConfig {
    pub alpha: f64,
    pub filter: CombFilter,
    pub points: usize,
    #[serde(default = "default_window_sigmas")]
    pub window_sigmas: f64,
    /// Every `schmidt_stride`-th node of the central `schmidt_window_sigmas`·α window
    /// enters the grid SVD.
    #[serde(default = "default_stride")]
    pub schmidt_stride: usize,
    #[serde(default = "default_schmidt_window")]
    pub schmidt_window_sigmas: f64,
    #[serde(default = "default_true")]
    pub compute_schmidt: bool,
}

fn default_stride() -> usize {
    2
}

fn default_schmidt_window() -> f64 {
    3.0
}

fn default_true() -> bool {
    true
}

/// Comb-filtered input on the qudit grid; returns (grid, filtered input).
pub fn qudit_input(cfg: &QuditConfig, params: &PhysicalParams) -> Result<(GaussianInput, BiphotonField)> {
    let spec = GaussianInput { alpha: cfg.alpha, omega_e: params.omega_e, omega_b: params.omega_b };
    let grid = FrequencyGrid::centered(params.omega_e, params.omega_b, cfg.window_sigmas * cfg.alpha, cfg.points)?;
    let input = gaussian_input(&spec, &grid)?;
    let filtered = apply_comb_filter(&input, &cfg.filter, (params.omega_e, params.omega_b))?;
    Ok((spec, filtered))
}

/// Crops to the central window and keeps every `stride`-th node.
pub fn subsample(field: &BiphotonField, half_width: f64, centers: (f64, f64), stride: usize) -> Result<BiphotonField> {
    let g = &field.grid;
    let stride = stride.max(1);
    let pick = |lo: f64, h: f64, n: usize, c: f64| -> Vec<usize> {
        (0..n).filter(|&k| ((lo + k as f64 * h) - c).abs() <= half_width + 1e-12 * h).step_by(stride).collect()
    };
    let is = pick(g.omega_min, g.d_omega(), g.n_omega, centers.0);
    let js = pick(g.omega_prime_min, g.d_omega_prime(), g.n_omega_prime, centers.1);
    if is.len() < 2 || js.len() < 2 {
        return Err(Error::Config("subsample window too small".into()));
    }
    let grid = FrequencyGrid::new(
        g.omega(is[0]),
        g.omega(*is.last().unwrap()),
        is.len(),
        g.omega_prime(js[0]),
        g.omega_prime(*js.last().unwrap()),
        js.len(),
    )?;
    let mut values = Vec::with_capacity(is.len() * js.len());
    for &i in &is {
        for &j in &js {
            values.push(field.at(i, j));
        }
    }
    BiphotonField::new(grid, values, field.channel)
}

pub fn qudit_point(ratio: f64, cfg: &QuditConfig, params: &PhysicalParams) -> Result<SweepRow> {
    let beta = ratio * cfg.filter.peak_width;
    let (spec, input) = qudit_input(cfg, params)?;
    let reference = qudit_success_closed_form(&spec, &cfg.filter, beta, params)?;
    let coupling = CouplingSpec::isotropic(beta, params.gamma, params.omega_e - params.omega_b);
    let out = scatter(&input, &coupling, params)?;
    let p = success_probability_numeric(&out, &input)?;
    let (k, s, sn) = if cfg.compute_schmidt {
        let sub = subsample(
            out.field(ChannelLabel::MM),
            cfg.schmidt_window_sigmas * cfg.alpha,
            (params.omega_e, params.omega_b),
            cfg.schmidt_stride,
        )?;
        let sp = schmidt_on_grid(&sub)?;
        (sp.schmidt_number, sp.entropy_nats, sp.normalized_entropy)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(SweepRow {
        ratio,
        p_success: p.p_success,
        p_success_reference: reference,
        resolved: input.grid.d_omega() <= 0.5 * beta,
        schmidt_number: k,
        entropy_nats: s,
        entropy_normalized: sn,
        reconstruction_error: f64::NAN,
        regime: width_regime(beta, cfg.alpha),
        error: None,
    })
}

/// Sweep of β/δω for comb-filtered inputs.
pub fn qudit_sweep(ratios: &[f64], cfg: &QuditConfig, params: &PhysicalParams) -> SweepReport {
    let rows = ratios
        .iter()
        .map(|&r| qudit_point(r, cfg, params).unwrap_or_else(|e| SweepRow::failed(r, e)))
        .collect();
    summarize(rows)
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_mode_closed_form() {
        let b = BasisSpec { center: 0.5, scale: 2e-6, count: 1 };
        for &x in &[0.5, 0.5 + 1e-6, 0.5 - 3e-6] {
            let t: f64 = (x - 0.5) / 2e-6;
            let want = (PI * 4e-12).powf(-0.25) * (-t * t / 2.0).exp();
            assert!((hermite_gauss(0, &b, x).unwrap() - want).abs() < 1e-12 * want);
        }
        assert!(hermite_gauss(501, &b, 0.5).is_err());
    }

    #[test]
    fn orthonormality() {
        let b = BasisSpec { center: 0.0, scale: 1.0, count: 8 };
        let n = 4001;
        let xs: Vec<f64> = (0..n).map(|k| -20.0 + 40.0 * k as f64 / (n - 1) as f64).collect();
        let t = b.table(&xs).unwrap();
        let dot = |a: usize, c: usize| (0..n).map(|k| trap_weight(k, n) * t[a][k] * t[c][k]).sum::<f64>() * 0.01;
        assert!(dot(3, 5).abs() < 1e-8);
        assert!((dot(7, 7) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn entropy_examples() {
        let d = 7;
        let l = vec![(1.0 / d as f64).sqrt(); d];
        assert!((schmidt_number(&l).unwrap() - d as f64).abs() < 1e-12);
        assert!((entanglement_entropy(&l).unwrap().nats - (d as f64).ln()).abs() < 1e-12);
        let one = [1.0];
        assert_eq!(schmidt_number(&one).unwrap(), 1.0);
        assert_eq!(entanglement_entropy(&one).unwrap().nats, 0.0);
        assert!(schmidt_number(&[]).is_err());
        assert!((thermal_entropy(10.0) - 1.92).abs() < 0.005);
    }

    #[test]
    fn analytic_success() {
        assert_eq!(success_probability_analytic(1.0), 0.75);
        assert!((success_probability_analytic(10.0) - 0.14851).abs() < 1e-5);
        assert!((success_probability_analytic(30.0) - 0.04995).abs() < 1e-5);
        assert!(success_probability_analytic(1e-12) < 1e-11);
    }

    #[test]
    fn zero_matrix_rejected() {
        assert!(schmidt_decompose(&DMatrix::<C64>::zeros(3, 3)).is_err());
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(0.1, 45.0, 5);
        assert!((v[0] - 0.1).abs() < 1e-15 && (v[4] - 45.0).abs() < 1e-12);
    }
}
