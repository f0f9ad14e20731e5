//! Biexciton decay on a discretized photon continuum.
//!
//! The state holds C_2X, C_X±(ω_k) and the symmetric two-photon amplitude
//! C_0(ω_k, ω_l) packed as an upper triangle. Energies are measured from ω_2X.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{PhysicalParams, C64};

/// RK4 stability limit on |λ|·dt for purely oscillatory modes, with margin.
const RK4_STABILITY: f64 = 2.5;

/// Fixed block count keeps the derivative independent of the thread count.
const BLOCKS: usize = 16;

/// Rise in ln P_2X inside the fit window that marks Rabi-dominated dynamics.
const RABI_RISE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    #[serde(default)]
    pub params: PhysicalParams,
    #[serde(default = "default_n")]
    pub n_freq: usize,
    /// Overall coupling amplitude g₀.
    pub g0: f64,
    /// Standard deviation of the Gaussian mode magnitude u(ω).
    pub bandwidth: f64,
    /// Mode center; defaults to ω_X − δ_X/2.
    #[serde(default)]
    pub mode_center: Option<f64>,
    /// Window half-width in units of `bandwidth`, centered at ω_2X/2.
    #[serde(default = "default_half_width")]
    pub half_width_sigmas: f64,
    pub t_max: f64,
    pub step: f64,
    #[serde(default = "default_record")]
    pub record_every: usize,
    /// Norm drift that aborts the run.
    #[serde(default = "default_drift")]
    pub drift_limit: f64,
}

fn default_n() -> usize {
    400
}

fn default_half_width() -> f64 {
    4.0
}

fn default_record() -> usize {
    20
}

fn default_drift() -> f64 {
    1e-5
}

impl DecayConfig {
    /// Dispersive preset: one-photon resonances far outside the mode bandwidth.
    pub fn adiabatic() -> Self {
        DecayConfig {
            params: PhysicalParams { s: 1e-5, ..PhysicalParams::from_exciton(0.5025, 0.005) },
            n_freq: 400,
            g0: 0.0142,
            bandwidth: 2.5e-4,
            mode_center: None,
            half_width_sigmas: 4.0,
            t_max: 3e5,
            step: 25.0,
            record_every: 20,
            drift_limit: 1e-5,
        }
    }

    /// Resonant preset: both one-photon transitions inside the mode bandwidth.
    pub fn resonant() -> Self {
        DecayConfig {
            params: PhysicalParams { s: 1e-5, ..PhysicalParams::from_exciton(0.5 + 1.25e-5, 2.5e-5) },
            n_freq: 400,
            g0: 8e-3,
            bandwidth: 2.5e-5,
            mode_center: None,
            half_width_sigmas: 4.0,
            t_max: 1.5e6,
            step: 100.0,
            record_every: 20,
            drift_limit: 1e-5,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "adiabatic" => Ok(Self::adiabatic()),
            "resonant" => Ok(Self::resonant()),
            other => Err(Error::Config(format!("unknown decay preset {other:?}"))),
        }
    }

    pub fn center(&self) -> f64 {
        self.mode_center.unwrap_or(self.params.omega_x - self.params.delta_x / 2.0)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let c = self.params.omega_2x / 2.0;
        let hw = self.half_width_sigmas * self.bandwidth;
        let n = self.n_freq;
        (0..n).map(|k| c - hw + 2.0 * hw * k as f64 / (n - 1) as f64).collect()
    }

    pub fn d_omega(&self) -> f64 {
        2.0 * self.half_width_sigmas * self.bandwidth / (self.n_freq - 1) as f64
    }

    /// Discrete couplings g₀·√ω·u(ω)·√Δω.
    pub fn couplings(&self) -> Vec<f64> {
        let c = self.center();
        let b = self.bandwidth;
        let sw = self.d_omega().sqrt();
        self.frequencies()
            .iter()
            .map(|&w| self.g0 * w.sqrt() * (-(w - c) * (w - c) / (2.0 * b * b)).exp() * sw)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_freq < 50 {
            return Err(Error::Config("n_freq must be at least 50".into()));
        }
        if !(self.bandwidth > 0.0) || !(self.half_width_sigmas > 0.0) || !(self.g0 >= 0.0) {
            return Err(Error::Config("decay needs bandwidth > 0, window > 0, g0 >= 0".into()));
        }
        if !(self.step > 0.0) || !(self.t_max > 0.0) || self.record_every == 0 {
            return Err(Error::Config("decay needs step > 0, t_max > 0, record_every >= 1".into()));
        }
        let lam = self.spectral_radius_bound();
        if lam * self.step > RK4_STABILITY {
            return Err(Error::Config(format!(
                "step {} exceeds the RK4 stability bound {:.4e}",
                self.step,
                RK4_STABILITY / lam
            )));
        }
        Ok(())
    }

    /// Gershgorin-style bound on the generator's largest frequency.
    pub fn spectral_radius_bound(&self) -> f64 {
        let w = self.frequencies();
        let p = &self.params;
        let (lo, hi) = (w[0], w[w.len() - 1]);
        let g = self.couplings();
        let gmax = g.iter().cloned().fold(0.0, f64::max);
        let gsum: f64 = g.iter().sum();
        let two = (2.0 * lo - p.omega_2x).abs().max((2.0 * hi - p.omega_2x).abs());
        let one = (lo + p.omega_x - p.omega_2x).abs().max((hi + p.omega_x - p.omega_2x).abs());
        let row_x = one + p.s + gmax + SQRT_2 * gsum;
        let row_0 = two + SQRT_2 * 2.0 * gmax;
        let row_2 = 2.0 * gsum;
        row_x.max(row_0).max(row_2)
    }
}

/// Sector Hamiltonian in the basis {|0;ω_i,ω_j⟩, |X+;ω_i⟩, |X−;ω_i⟩, |X+;ω_j⟩, |X−;ω_j⟩, |2X⟩}.
///
/// `g0x(ω)` couples |X±;ω_i⟩ to |0;ω_i,ω_j⟩ and is evaluated at the photon emitted
/// in that step, ω_j (and ω_i for the |X±;ω_j⟩ states).
pub fn sector_hamiltonian(
    params: &PhysicalParams,
    g0x: impl Fn(f64) -> C64,
    gx2x: impl Fn(f64) -> C64,
    omega_i: f64,
    omega_j: f64,
) -> [[C64; 6]; 6] {
    let z = C64::new(0.0, 0.0);
    let r = |x: f64| C64::new(x, 0.0);
    let mut h = [[z; 6]; 6];
    h[0][0] = r(omega_i + omega_j);
    h[1][1] = r(omega_i + params.omega_x);
    h[2][2] = h[1][1];
    h[3][3] = r(omega_j + params.omega_x);
    h[4][4] = h[3][3];
    h[5][5] = r(2.0 * params.omega_x - params.delta_x);
    let (a, b) = (g0x(omega_j), g0x(omega_i));
    for (col, v) in [(1, a), (2, a), (3, b), (4, b)] {
        h[0][col] = v;
        h[col][0] = v.conj();
    }
    for (x, y) in [(1, 2), (3, 4)] {
        h[x][y] = r(params.s);
        h[y][x] = r(params.s);
    }
    let (c, d) = (gx2x(omega_i), gx2x(omega_j));
    for (row, v) in [(1, c), (2, c), (3, d), (4, d)] {
        h[row][5] = v;
        h[5][row] = v.conj();
    }
    h
}

/// Global generator assembled from the sector couplings.
pub struct DecaySystem {
    n: usize,
    g: Vec<f64>,
    /// Photon detuning ω_k − ω_2X/2.
    det: Vec<f64>,
    /// Exciton energy ω_k + ω_X − ω_2X.
    ex: Vec<f64>,
    s: f64,
    omega_2x: f64,
    row_off: Vec<usize>,
    /// Row ranges of roughly equal packed size.
    blocks: Vec<(usize, usize)>,
}

impl DecaySystem {
    pub fn new(cfg: &DecayConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_freq;
        let omegas = cfg.frequencies();
        let p = &cfg.params;
        let det = omegas.iter().map(|w| w - p.omega_2x / 2.0).collect();
        let ex = omegas.iter().map(|w| w + p.omega_x - p.omega_2x).collect();
        // Row k of the packed triangle holds l = k..n.
        let row_off = (0..n).map(|k| k * n - k * k.saturating_sub(1) / 2).collect();
        let row_off: Vec<usize> = row_off;
        let total = n * (n + 1) / 2;
        let mut blocks = Vec::with_capacity(BLOCKS);
        let mut k0 = 0;
        for b in 1..=BLOCKS {
            let target = total * b / BLOCKS;
            let mut k1 = k0;
            while k1 < n && row_off[k1] < target {
                k1 += 1;
            }
            if b == BLOCKS {
                k1 = n;
            }
            if k1 > k0 {
                blocks.push((k0, k1));
                k0 = k1;
            }
        }
        Ok(DecaySystem { n, det, g: cfg.couplings(), ex, s: p.s, omega_2x: p.omega_2x, row_off, blocks })
    }

    pub fn dim(&self) -> usize {
        1 + 2 * self.n + self.n * (self.n + 1) / 2
    }

    #[inline]
    pub fn packed_index(&self, k: usize, l: usize) -> usize {
        let (a, b) = if k <= l { (k, l) } else { (l, k) };
        1 + 2 * self.n + self.row_off[a] + (b - a)
    }

    pub fn initial(&self) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim()];
        y[0] = C64::new(1.0, 0.0);
        y
    }

    /// dy = −i H y.
    pub fn deriv(&self, y: &[C64], dy: &mut [C64]) {
        let n = self.n;
        let mi = C64::new(0.0, -1.0);
        let c2 = y[0];
        let xp = &y[1..1 + n];
        let xm = &y[1 + n..1 + 2 * n];
        let g = &self.g;

        let x: Vec<C64> = (0..n).map(|k| xp[k] + xm[k]).collect();
        let (head, tail) = dy.split_at_mut(1 + 2 * n);
        let psi = &y[1 + 2 * n..];

        // One pass over the packed triangle in fixed row blocks: writes dC_0 and
        // accumulates Σ_l g_l C_0(k, l) per block, summed afterwards in block order.
        let inv = 1.0 / SQRT_2;
        let det = &self.det;
        let mut blocks: Vec<(usize, usize, &mut [C64])> = Vec::with_capacity(self.blocks.len());
        let mut rest = tail;
        for &(k0, k1) in &self.blocks {
            let len = self.row_off.get(k1).copied().unwrap_or(psi.len()) - self.row_off[k0];
            let (b, r) = rest.split_at_mut(len);
            blocks.push((k0, k1, b));
            rest = r;
        }
        let partial: Vec<Vec<C64>> = blocks
            .into_par_iter()
            .map(|(k0, k1, out)| {
                let mut acc = vec![C64::new(0.0, 0.0); n];
                let mut pos = 0;
                for k in k0..k1 {
                    let base = self.row_off[k];
                    let m = n - k;
                    let (xk, gk, dk) = (x[k], g[k], det[k]);
                    let prow = &psi[base..base + m];
                    let orow = &mut out[pos..pos + m];
                    let mut row = C64::new(0.0, 0.0);
                    for ((((v, o), &gl), &xl), (&dl, a)) in prow
                        .iter()
                        .zip(orow.iter_mut())
                        .zip(&g[k..])
                        .zip(&x[k..])
                        .zip(det[k..].iter().zip(acc[k..].iter_mut()))
                    {
                        row += v * gl;
                        *a += v * gk;
                        *o = mi * (v * (dk + dl) + (xk * gl + xl * gk) * inv);
                    }
                    // The diagonal was added to acc[k] above; it belongs once, via `row`.
                    acc[k] += row - psi[base] * gk;
                    pos += m;
                }
                acc
            })
            .collect();
        let mut sums = vec![C64::new(0.0, 0.0); n];
        for acc in &partial {
            for (s, a) in sums.iter_mut().zip(acc) {
                *s += a;
            }
        }

        let mut d2 = C64::new(0.0, 0.0);
        for k in 0..n {
            d2 += x[k] * g[k];
        }
        head[0] = mi * d2;
        for k in 0..n {
            let common = c2 * g[k] + sums[k] * SQRT_2;
            head[1 + k] = mi * (xp[k] * self.ex[k] + xm[k] * self.s + common);
            head[1 + n + k] = mi * (xm[k] * self.ex[k] + xp[k] * self.s + common);
        }
    }

    /// (P_0, P_X, P_2X).
    pub fn populations(&self, y: &[C64]) -> (f64, f64, f64) {
        let n = self.n;
        let p2 = y[0].norm_sqr();
        let px: f64 = y[1..1 + 2 * n].iter().map(|c| c.norm_sqr()).sum();
        let mut p0 = 0.0;
        for k in 0..n {
            let base = 1 + 2 * n + self.row_off[k];
            p0 += y[base].norm_sqr();
            for m in 1..n - k {
                p0 += 2.0 * y[base + m].norm_sqr();
            }
        }
        (p0, px, p2)
    }

    /// ⟨H⟩ in the frame where the biexciton has zero energy.
    pub fn energy(&self, y: &[C64]) -> f64 {
        let mut hy = vec![C64::new(0.0, 0.0); y.len()];
        self.deriv(y, &mut hy);
        let n = self.n;
        let mut e = 0.0;
        for (idx, (a, b)) in y.iter().zip(&hy).enumerate() {
            // H y = i·dy
            let v = (a.conj() * b * C64::new(0.0, 1.0)).re;
            let w = if idx < 1 + 2 * n {
                1.0
            } else {
                let p = idx - 1 - 2 * n;
                let k = self.row_off.partition_point(|&o| o <= p) - 1;
                if p == self.row_off[k] {
                    1.0
                } else {
                    2.0
                }
            };
            e += w * v;
        }
        e
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub gamma: f64,
    /// RMS residual of ln P_2X about the fitted line.
    pub residual: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayTrajectory {
    pub times: Vec<f64>,
    pub p0: Vec<f64>,
    pub px: Vec<f64>,
    pub p2x: Vec<f64>,
    pub norm: Vec<f64>,
    pub energy_drift: f64,
    pub fit: Option<DecayFit>,
    pub fit_error: Option<String>,
}

impl DecayTrajectory {
    pub fn max_px(&self) -> f64 {
        self.px.iter().cloned().fold(0.0, f64::max)
    }

    /// Mean exciton population over the last tenth of the run.
    pub fn late_px(&self) -> f64 {
        let k = self.px.len() - (self.px.len() / 10).max(1);
        let tail = &self.px[k..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    pub fn mean_px(&self) -> f64 {
        self.px.iter().sum::<f64>() / self.px.len() as f64
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.norm.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Fixed-step RK4 from the biexciton state.
pub fn evolve(cfg: &DecayConfig) -> Result<DecayTrajectory> {
    let sys = DecaySystem::new(cfg)?;
    let mut y = sys.initial();
    let dim = y.len();
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![C64::default(); dim], vec![C64::default(); dim], vec![C64::default(); dim], vec![C64::default(); dim]);
    let mut tmp = vec![C64::default(); dim];
    let h = cfg.step;
    let steps = (cfg.t_max / h).ceil() as usize;
    let e0 = sys.energy(&y) + sys.omega_2x;
    let mut traj = DecayTrajectory {
        times: Vec::new(),
        p0: Vec::new(),
        px: Vec::new(),
        p2x: Vec::new(),
        norm: Vec::new(),
        energy_drift: 0.0,
        fit: None,
        fit_error: None,
    };
    let record = |t: f64, y: &[C64], traj: &mut DecayTrajectory| -> Result<()> {
        let (p0, px, p2) = sys.populations(y);
        let norm = p0 + px + p2;
        traj.times.push(t);
        traj.p0.push(p0);
        traj.px.push(px);
        traj.p2x.push(p2);
        traj.norm.push(norm);
        if (norm - 1.0).abs() > cfg.drift_limit {
            return Err(Error::Convergence(format!(
                "norm drift {:.3e} at t = {t:.6e} exceeds {:.1e}; reduce step below {}",
                norm - 1.0,
                cfg.drift_limit,
                h
            )));
        }
        Ok(())
    };
    record(0.0, &y, &mut traj)?;
    let axpy = |out: &mut [C64], y: &[C64], k: &[C64], a: f64| {
        out.par_iter_mut().zip(y.par_iter().zip(k.par_iter())).for_each(|(o, (a0, b))| *o = a0 + b * a);
    };
    for step in 1..=steps {
        sys.deriv(&y, &mut k1);
        axpy(&mut tmp, &y, &k1, h / 2.0);
        sys.deriv(&tmp, &mut k2);
        axpy(&mut tmp, &y, &k2, h / 2.0);
        sys.deriv(&tmp, &mut k3);
        axpy(&mut tmp, &y, &k3, h);
        sys.deriv(&tmp, &mut k4);
        y.par_iter_mut().enumerate().for_each(|(i, v)| {
            *v += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        });
        if step % cfg.record_every == 0 || step == steps {
            record(step as f64 * h, &y, &mut traj)?;
        }
    }
    let e1 = sys.energy(&y) + sys.omega_2x;
    traj.energy_drift = ((e1 - e0) / e0).abs();
    match fit_decay_rate(&traj.times, &traj.p2x) {
        Ok(f) => traj.fit = Some(f),
        Err(e) => traj.fit_error = Some(e.to_string()),
    }
    Ok(traj)
}

/// Least-squares slope of ln P_2X over the samples with 0.1 ≤ P_2X ≤ 0.9.
pub fn fit_decay_rate(times: &[f64], p2x: &[f64]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(p2x)
        .filter(|(_, &p)| (0.1..=0.9).contains(&p))
        .map(|(&t, &p)| (t, p.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Convergence("fewer than 3 samples with 0.1 <= P_2X <= 0.9".into()));
    }
    if pts.windows(2).any(|w| w[1].1 > w[0].1 + RABI_RISE) {
        return Err(Error::Convergence("P_2X not monotone over the fit window (Rabi-dominated)".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let stl: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let slope = stl / stt;
    let icpt = ml - slope * mt;
    let residual = (pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit { gamma: -slope, residual, points: pts.len() })
}

/// (Σ‖g‖/δ_e)² with δ_e the distance from the window center to ω_X.
pub fn virtual_population_estimate(cfg: &DecayConfig) -> f64 {
    let norm: f64 = cfg.couplings().iter().map(|g| g * g).sum::<f64>().sqrt();
    let de = (cfg.params.omega_x - cfg.params.omega_2x / 2.0).abs();
    (2.0 * norm / de).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sector_matrix_examples() {
        let p = PhysicalParams::default();
        let g = |w: f64| C64::new(1e-3 * w, 2e-4);
        let h = sector_hamiltonian(&p, g, g, 0.4999, 0.5003);
        for a in 0..6 {
            for b in 0..6 {
                assert!((h[a][b] - h[b][a].conj()).norm() <= 1e-15);
            }
        }
        assert!((h[5][5].re - p.omega_2x).abs() < 1e-15);
        let mut p0 = p.clone();
        p0.s = 0.0;
        let z = |_: f64| C64::new(0.0, 0.0);
        let h = sector_hamiltonian(&p0, z, z, 0.4999, 0.5003);
        let diag = [0.4999 + 0.5003, 0.4999 + p.omega_x, 0.4999 + p.omega_x, 0.5003 + p.omega_x, 0.5003 + p.omega_x, 1.0];
        for a in 0..6 {
            for b in 0..6 {
                let want = if a == b { diag[a] } else { 0.0 };
                assert!((h[a][b] - C64::new(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn exact_exponential_fit() {
        let g = 3.7e-5;
        let t: Vec<f64> = (0..400).map(|k| k as f64 * 250.0).collect();
        let p: Vec<f64> = t.iter().map(|t| (-g * t).exp()).collect();
        let f = fit_decay_rate(&t, &p).unwrap();
        assert!((f.gamma - g).abs() < 1e-10 * g);
    }

    #[test]
    fn rising_window_flagged() {
        let t: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let p: Vec<f64> = t.iter().map(|t| 0.5 + 0.3 * (t * 0.5).sin()).collect();
        assert!(fit_decay_rate(&t, &p).is_err());
    }

    #[test]
    fn uncoupled_biexciton_stays() {
        let mut cfg = DecayConfig::adiabatic();
        cfg.g0 = 0.0;
        cfg.n_freq = 50;
        cfg.t_max = 2000.0;
        let tr = evolve(&cfg).unwrap();
        assert!(tr.p2x.iter().all(|p| (p - 1.0).abs() < 1e-14));
    }

    #[test]
    fn packed_dimension() {
        let mut cfg = DecayConfig::adiabatic();
        cfg.n_freq = 60;
        let s = DecaySystem::new(&cfg).unwrap();
        assert_eq!(s.dim(), 1 + 120 + 60 * 61 / 2);
        assert_eq!(s.packed_index(59, 59), s.dim() - 1);
        assert_eq!(s.packed_index(3, 7), s.packed_index(7, 3));
    }
}
