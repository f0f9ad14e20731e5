//! Propagation-mode design: find u with u(ω)u(ω′)·h(ω′,ω) ≈ g_target(ω′,ω).

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{gaussian_coupling, nonseparable_bracket, Interpolation, ModeProfile, POLE_FLOOR_FACTOR};
use crate::error::{Error, Result};
use crate::spectral::{fmt_f64, PhysicalParams};

pub const DEFAULT_MODE_POINTS: usize = 200;
pub const MAX_ITERATIONS: usize = 500;
pub const STOP_IMPROVEMENT: f64 = 1e-12;
/// Residual above which a stalled refinement marks the target as ill-posed.
pub const ILL_POSED_RESIDUAL: f64 = 0.5;
/// Allowed disagreement where the two windows overlap.
pub const OVERLAP_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeOptConfig {
    #[serde(default)]
    pub params: PhysicalParams,
    /// Input pulse width; sets the window half-width.
    pub alpha: f64,
    /// Target Gaussian width in ω_Δ.
    pub beta: f64,
    /// Target rate per channel; defaults to Γ/4.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Target center in ω_Δ; defaults to ω_e − ω_b.
    #[serde(default)]
    pub center: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_sigmas")]
    pub window_sigmas: f64,
    #[serde(default)]
    pub pole_floor: Option<f64>,
}

fn default_points() -> usize {
    DEFAULT_MODE_POINTS
}

fn default_sigmas() -> f64 {
    6.0
}

impl ModeOptConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.alpha > 0.0) || !(self.beta > 0.0) || !(self.window_sigmas > 0.0) {
            return Err(Error::Config("mode optimization needs alpha, beta, window_sigmas > 0".into()));
        }
        if self.points < 2 {
            return Err(Error::Config("mode optimization needs at least 2 points per window".into()));
        }
        Ok(())
    }

    pub fn windows(&self) -> (Vec<f64>, Vec<f64>) {
        let hw = self.window_sigmas * self.alpha;
        let lin = |c: f64| -> Vec<f64> {
            let n = self.points;
            (0..n).map(|k| c - hw + 2.0 * hw * k as f64 / (n - 1) as f64).collect()
        };
        (lin(self.params.omega_e), lin(self.params.omega_b))
    }

    pub fn target_gamma(&self) -> f64 {
        self.gamma.unwrap_or(self.params.gamma / 4.0)
    }

    pub fn target_center(&self) -> f64 {
        self.center.unwrap_or(self.params.omega_e - self.params.omega_b)
    }

    pub fn floor(&self) -> f64 {
        self.pole_floor.unwrap_or(POLE_FLOOR_FACTOR * self.alpha.max(self.beta))
    }
}

/// Rows index ω′, columns index ω.
#[derive(Clone, Debug)]
pub struct TargetMatrix {
    pub omega: Vec<f64>,
    pub omega_prime: Vec<f64>,
    pub t: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub params: PhysicalParams,
    pub pole_floor: f64,
}

impl TargetMatrix {
    /// T = g/(D·h) from arbitrary samples.
    pub fn from_fn(
        params: &PhysicalParams,
        omega: Vec<f64>,
        omega_prime: Vec<f64>,
        pole_floor: f64,
        g: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Result<Self> {
        let (n, np) = (omega.len(), omega_prime.len());
        if n == 0 || np == 0 {
            return Err(Error::Config("empty mode window".into()));
        }
        let rows: Vec<Vec<(f64, f64)>> = omega_prime
            .par_iter()
            .map(|&wp| {
                omega
                    .iter()
                    .map(|&w| Ok((g(wp, w), nonseparable_bracket(params, wp, w, pole_floor)?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let gm = DMatrix::from_fn(np, n, |i, j| rows[i][j].0);
        let hm = DMatrix::from_fn(np, n, |i, j| rows[i][j].1);
        if hm.iter().any(|&h| h == 0.0) {
            return Err(Error::Domain("non-separable bracket vanishes on the window (δ_X = 0?)".into()));
        }
        let t = DMatrix::from_fn(np, n, |i, j| gm[(i, j)] / (params.d * hm[(i, j)]));
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("target matrix has non-finite entries".into()));
        }
        Ok(TargetMatrix { omega, omega_prime, t, g: gm, h: hm, params: params.clone(), pole_floor })
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.t.clone().svd(false, false).singular_values.iter().cloned().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// √(Σ_{k≥2} σ_k²)/‖T‖.
    pub fn rank1_bound(&self) -> f64 {
        let s = self.singular_values();
        let total: f64 = s.iter().map(|x| x * x).sum();
        (s[1..].iter().map(|x| x * x).sum::<f64>() / total).sqrt()
    }
}

/// Target Gaussian coupling over the ω and ω′ windows.
pub fn build_target(cfg: &ModeOptConfig) -> Result<TargetMatrix> {
    cfg.validate()?;
    let (w, wp) = cfg.windows();
    let (beta, gamma, c) = (cfg.beta, cfg.target_gamma(), cfg.target_center());
    TargetMatrix::from_fn(&cfg.params, w, wp, cfg.floor(), |wp, w| gaussian_coupling(beta, gamma, c, w - wp))
}

/// Leading singular pair, sign-canonicalized. Returns (u over ω, u′ over ω′).
pub fn rank1_init(t: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let svd = t.clone().svd(true, true);
    let (k, s1) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (k, &s)| if s > acc.1 { (k, s) } else { acc });
    if !(s1 > 0.0) {
        return Err(Error::Domain("target matrix is zero".into()));
    }
    let left = svd.u.as_ref().unwrap().column(k);
    let right = svd.v_t.as_ref().unwrap().row(k);
    let r = s1.sqrt();
    let mut up: Vec<f64> = left.iter().map(|x| x * r).collect();
    let mut u: Vec<f64> = right.iter().map(|x| x * r).collect();
    let negatives = u.iter().chain(&up).filter(|&&x| x < 0.0).count();
    if 2 * negatives > u.len() + up.len() {
        u.iter_mut().for_each(|x| *x = -*x);
        up.iter_mut().for_each(|x| *x = -*x);
    }
    Ok((u, up))
}

/// ‖u′uᵀ − T‖_F/‖T‖_F.
pub fn residual(t: &DMatrix<f64>, u: &[f64], u_prime: &[f64]) -> f64 {
    let mut num = 0.0;
    for j in 0..t.ncols() {
        for i in 0..t.nrows() {
            let d = u_prime[i] * u[j] - t[(i, j)];
            num += d * d;
        }
    }
    (num / t.norm_squared()).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeSolution {
    pub omega: Vec<f64>,
    pub omega_prime: Vec<f64>,
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
    pub residual: f64,
    pub init_residual: f64,
    pub rank1_bound: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    /// Common norm ‖u‖ = ‖u′‖ after gauge fixing.
    pub gauge_norm: f64,
    pub singular_values_head: Vec<f64>,
    /// Pearson correlation of u(ω_k) with u(ω′_k) across the two windows.
    pub window_correlation: f64,
}

impl ModeSolution {
    pub fn anticorrelated(&self) -> bool {
        self.window_correlation < 0.0
    }

    /// Relative RMS of D·u(ω)u(ω′)h against the target g.
    pub fn coupling_rms(&self, target: &TargetMatrix) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.omega_prime.len() {
            for j in 0..self.omega.len() {
                let g = target.g[(i, j)];
                let fit = target.params.d * self.u[j] * self.u_prime[i] * target.h[(i, j)];
                num += (fit - g).powi(2);
                den += g * g;
            }
        }
        (num / den).sqrt()
    }

    pub fn write_csv(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let mut out = Vec::new();
        for (name, w, u) in [("mode_omega.csv", &self.omega, &self.u), ("mode_omega_prime.csv", &self.omega_prime, &self.u_prime)] {
            let path = dir.join(name);
            let mut wr = csv::Writer::from_path(&path)?;
            wr.write_record(["omega", "u"])?;
            for (a, b) in w.iter().zip(u) {
                wr.write_record([fmt_f64(*a), fmt_f64(*b)])?;
            }
            wr.flush()?;
            out.push(path);
        }
        Ok(out)
    }
}

/// Alternating nonnegative least squares from `init`.
pub fn refine(target: &TargetMatrix, init: (Vec<f64>, Vec<f64>)) -> Result<ModeSolution> {
    let t = &target.t;
    let (np, n) = t.shape();
    let (mut u, mut up) = init;
    if u.len() != n || up.len() != np {
        return Err(Error::Config("initial vectors do not match the target shape".into()));
    }
    u.iter_mut().for_each(|x| *x = x.max(0.0));
    up.iter_mut().for_each(|x| *x = x.max(0.0));
    let init_residual = residual(t, &u, &up);
    let mut history = vec![init_residual];
    let mut prev = init_residual;
    let mut iterations = 0;
    let tt = t.transpose();
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let nup: f64 = up.iter().map(|x| x * x).sum();
        if nup == 0.0 {
            return Err(Error::Convergence("mode vector collapsed to zero under the nonnegativity clamp".into()));
        }
        for (j, uj) in u.iter_mut().enumerate() {
            let dot: f64 = tt.row(j).iter().zip(&up).map(|(a, b)| a * b).sum();
            *uj = (dot / nup).max(0.0);
        }
        let nu: f64 = u.iter().map(|x| x * x).sum();
        if nu == 0.0 {
            return Err(Error::Convergence("mode vector collapsed to zero under the nonnegativity clamp".into()));
        }
        for (i, ui) in up.iter_mut().enumerate() {
            let dot: f64 = t.row(i).iter().zip(&u).map(|(a, b)| a * b).sum();
            *ui = (dot / nu).max(0.0);
        }
        let r = residual(t, &u, &up);
        if r > prev * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::Convergence(format!("residual increased from {prev:e} to {r:e} at iteration {iterations}")));
        }
        history.push(r);
        let improvement = if prev > 0.0 { (prev - r) / prev } else { 0.0 };
        prev = r;
        if improvement < STOP_IMPROVEMENT {
            break;
        }
    }
    if prev > ILL_POSED_RESIDUAL {
        return Err(Error::Convergence(format!("refinement stalled at residual {prev:.3e}; target is ill-posed for a rank-1 mode")));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nup = up.iter().map(|x| x * x).sum::<f64>().sqrt();
    let c = (nup / nu).sqrt();
    u.iter_mut().for_each(|x| *x *= c);
    up.iter_mut().for_each(|x| *x /= c);
    let gauge_norm = (nu * nup).sqrt();
    let s = target.singular_values();
    let total: f64 = s.iter().map(|x| x * x).sum();
    let rank1_bound = (s[1..].iter().map(|x| x * x).sum::<f64>() / total).sqrt();
    let res = residual(t, &u, &up);
    Ok(ModeSolution {
        omega: target.omega.clone(),
        omega_prime: target.omega_prime.clone(),
        window_correlation: pearson(&u, &up),
        u,
        u_prime: up,
        residual: res,
        init_residual,
        rank1_bound,
        iterations,
        history,
        gauge_norm,
        singular_values_head: s.into_iter().take(5).collect(),
    })
}

pub fn optimize_mode(cfg: &ModeOptConfig) -> Result<(TargetMatrix, ModeSolution)> {
    let target = build_target(cfg)?;
    let init = rank1_init(&target.t)?;
    let sol = refine(&target, init)?;
    Ok((target, sol))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let (x, y) = (a[k] - ma, b[k] - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct MergedProfile {
    pub profile: ModeProfile,
    /// Largest relative disagreement between the windows where they overlap.
    pub overlap_disagreement: Option<f64>,
}

/// One profile over both windows; ω-window samples win inside an overlap.
pub fn interpolate_profile(sol: &ModeSolution, kind: Interpolation) -> Result<MergedProfile> {
    let a: Vec<(f64, f64)> = sol.omega.iter().cloned().zip(sol.u.iter().cloned()).collect();
    let b: Vec<(f64, f64)> = sol.omega_prime.iter().cloned().zip(sol.u_prime.iter().cloned()).collect();
    let (alo, ahi) = (a[0].0, a[a.len() - 1].0);
    let (blo, bhi) = (b[0].0, b[b.len() - 1].0);
    let mut overlap = None;
    if alo <= bhi && blo <= ahi {
        let pa = ModeProfile::new(a.clone(), Interpolation::Linear)?;
        let pb = ModeProfile::new(b.clone(), Interpolation::Linear)?;
        let scale = a.iter().chain(&b).map(|p| p.1).fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for &(w, _) in a.iter().chain(&b) {
            if w >= alo.max(blo) && w <= ahi.min(bhi) {
                worst = worst.max((pa.eval(w)? - pb.eval(w)?).abs() / scale);
            }
        }
        if worst > OVERLAP_TOLERANCE {
            return Err(Error::Convergence(format!(
                "mode windows overlap with {:.1}% disagreement",
                100.0 * worst
            )));
        }
        overlap = Some(worst);
    }
    let mut samples = a;
    samples.extend(b.into_iter().filter(|&(w, _)| w < alo || w > ahi));
    samples.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(MergedProfile { profile: ModeProfile::new(samples, kind)?, overlap_disagreement: overlap })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_cfg() -> ModeOptConfig {
        ModeOptConfig {
            params: PhysicalParams::default(),
            alpha: 1e-6,
            beta: 1e-4,
            gamma: None,
            center: None,
            points: 60,
            window_sigmas: 6.0,
            pole_floor: None,
        }
    }

    #[test]
    fn separable_target_is_rank_one() {
        let p = PhysicalParams::default();
        let cfg = base_cfg();
        let (w, wp) = cfg.windows();
        let t = TargetMatrix::from_fn(&p, w, wp, 1e-9, |wp, w| {
            (1.0 + 1e3 * (w - 0.5026)) * (2.0 - 1e4 * (wp - 0.4974)).exp()
                * nonseparable_bracket(&p, wp, w, 0.0).unwrap()
        })
        .unwrap();
        let s = t.singular_values();
        assert!(s[1] / s[0] < 1e-10);
        let sol = refine(&t, rank1_init(&t.t).unwrap()).unwrap();
        assert!(sol.residual < 1e-10);
        let nu: f64 = sol.u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nup: f64 = sol.u_prime.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((nu - nup).abs() < 1e-12 * nu);
    }

    #[test]
    fn target_scales_linearly() {
        let cfg = base_cfg();
        let a = build_target(&cfg).unwrap();
        let mut c2 = cfg.clone();
        c2.gamma = Some(cfg.target_gamma() * 9.0);
        let b = build_target(&c2).unwrap();
        assert!((&b.t - &a.t * 3.0).norm() < 1e-12 * b.t.norm());
    }

    #[test]
    fn default_windows_anticorrelate() {
        let (t, sol) = optimize_mode(&base_cfg()).unwrap();
        assert!(sol.anticorrelated());
        assert!(sol.coupling_rms(&t) < 5e-2);
        assert!(sol.residual >= sol.rank1_bound - 1e-10);
        assert!(sol.residual <= sol.init_residual + 1e-15);
    }

    #[test]
    fn zero_binding_rejected() {
        let mut cfg = base_cfg();
        cfg.params.delta_x = 0.0;
        cfg.params.omega_x = 0.5;
        assert!(build_target(&cfg).is_err());
    }
}
