//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any gating
//! criterion fails; criterion 8 is reported but never gates.

use std::io::Write;
use std::time::Instant;

use frengate::coupling::{gaussian_coupling, nonseparable_bracket, spectral_function, CouplingSpec, Window};
use frengate::dynamics::{evolve, DecayConfig};
use frengate::entanglement::{
    distribution_stats, log_space, qudit_sweep, schmidt_of_field, schmidt_on_grid, success_probability_analytic,
    success_probability_numeric, thermal_ratio, thermal_schmidt_number, QuditConfig,
};
use frengate::modeopt::{rank1_init, refine, TargetMatrix};
use frengate::scattering::{
    analytic_gaussian_outputs, analytic_qudit_output, apply_comb_filter, gaussian_input, relative_rms, scatter,
    CombFilter, GaussianInput,
};
use frengate::spectral::{BiphotonField, ChannelLabel, FrequencyGrid, PhysicalParams, C64, DEFAULT_POINTS};

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn line(&mut self, n: usize, ok: bool, gating: bool, secs: f64, detail: String) {
        let tag = match (ok, gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FLAG",
        };
        if !ok && gating {
            self.failed.push(n);
        }
        let mut err = std::io::stderr();
        let _ = writeln!(err, "criterion {n}: {tag} [{secs:.1}s] {detail}");
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn params_with_gamma(gamma: f64) -> PhysicalParams {
    PhysicalParams { gamma, ..PhysicalParams::default() }
}

/// Gaussian input scattered through the isotropic coupling on the default grid.
fn gaussian_run(alpha: f64, beta: f64, p: &PhysicalParams) -> (BiphotonField, frengate::scattering::ScatterResult, FrequencyGrid) {
    let spec = GaussianInput { alpha, omega_e: p.omega_e, omega_b: p.omega_b };
    let grid = FrequencyGrid::centered(p.omega_e, p.omega_b, 6.0 * alpha.max(beta), DEFAULT_POINTS).unwrap();
    let input = gaussian_input(&spec, &grid).unwrap();
    let out = scatter(&input, &CouplingSpec::isotropic(beta, p.gamma, p.omega_e - p.omega_b), p).unwrap();
    (input, out, grid)
}

fn criterion1(r: &mut Report) {
    let t = Instant::now();
    let (a, b, c) = (success_probability_analytic(1.0), success_probability_analytic(10.0), success_probability_analytic(30.0));
    let ok = a == 0.75 && (b - 0.14851).abs() <= 1e-5 && (c - 0.04995).abs() <= 1e-5;
    r.line(1, ok, true, t.elapsed().as_secs_f64(), format!("P(1)={a} P(10)={b:.6} P(30)={c:.6}"));
}

fn criterion2(r: &mut Report) {
    let t = Instant::now();
    let alpha = 1e-6;
    let p = params_with_gamma(10.0 * alpha);
    let mut ok = true;
    let mut parts = Vec::new();
    for ratio in [0.5, 1.0, 4.0, 10.0] {
        let (input, out, _) = gaussian_run(alpha, ratio * alpha, &p);
        let num = success_probability_numeric(&out, &input).unwrap().p_success;
        let ana = success_probability_analytic(ratio);
        let e = rel(num, ana);
        ok &= e <= 0.01;
        parts.push(format!("r={ratio}: {num:.5} vs {ana:.5} ({:.2}%)", 100.0 * e));
    }
    let p = PhysicalParams::default();
    let (input, out, _) = gaussian_run(1e-6, 4e-6, &p);
    let pp = success_probability_numeric(&out, &input).unwrap().per_channel[0].1;
    ok &= (pp - 0.66).abs() <= 0.01;
    parts.push(format!("P++ (α=1e-6, β=4α, Γ=1e-5) = {pp:.4}"));
    r.line(2, ok, true, t.elapsed().as_secs_f64(), parts.join("; "));
}

fn double_gaussian(alpha: f64, beta: f64, n: usize) -> BiphotonField {
    let w = 8.0 * alpha.max(beta);
    let grid = FrequencyGrid::centered(0.5, 0.5, w, n).unwrap();
    BiphotonField::from_fn(grid, ChannelLabel::MM, |x, y| {
        let (s, d) = (x + y - 1.0, x - y);
        C64::new((-(s * s) / (4.0 * alpha * alpha) - d * d / (4.0 * beta * beta)).exp(), 0.0)
    })
    .unwrap()
}

fn criterion3(r: &mut Report) {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    let p = PhysicalParams::default();
    let alpha = 1e-6;
    let spec = GaussianInput { alpha, omega_e: p.omega_e, omega_b: p.omega_b };
    let grid = FrequencyGrid::centered(p.omega_e, p.omega_b, 6.0 * alpha, DEFAULT_POINTS).unwrap();
    let input = gaussian_input(&spec, &grid).unwrap();
    let sep = schmidt_of_field(&input, (40, 40)).unwrap().spectrum;
    ok &= (sep.schmidt_number - 1.0).abs() <= 0.01 && sep.entropy_nats.abs() <= 0.01;
    parts.push(format!("separable K={:.4} S={:.4}", sep.schmidt_number, sep.entropy_nats));

    // Window half-width max(α, β) on a 100×100 grid, SVD of the sampled field.
    let beta = 10.0 * alpha;
    let g = FrequencyGrid::centered(p.omega_e, p.omega_b, beta, 100).unwrap();
    let inp = gaussian_input(&spec, &g).unwrap();
    let out = scatter(&inp, &CouplingSpec::isotropic(beta, p.gamma, p.omega_e - p.omega_b), &p).unwrap();
    let sampled = schmidt_on_grid(&out.field(ChannelLabel::MM).clone().normalize().unwrap()).unwrap();
    ok &= rel(sampled.schmidt_number, 4.72) <= 0.05;
    parts.push(format!("r=10 output K={:.4} (window β, 100 pts)", sampled.schmidt_number));

    let (inp, out, _) = gaussian_run(alpha, beta, &p);
    let _ = inp;
    let conv = schmidt_of_field(out.field(ChannelLabel::MM), (60, 60)).unwrap().spectrum;
    parts.push(format!("converged K={:.4} (window 6β, info)", conv.schmidt_number));

    for ratio in [4.0, 10.0] {
        let f = double_gaussian(1e-6, ratio * 1e-6, 400).normalize().unwrap();
        let sp = schmidt_on_grid(&f).unwrap();
        let k_ok = rel(sp.schmidt_number, thermal_schmidt_number(ratio)) <= 0.02;
        let mu = thermal_ratio(ratio);
        let geo = (0..5).all(|k| rel((sp.lambdas[k + 1] / sp.lambdas[k]).powi(2), mu) <= 0.01);
        ok &= k_ok && geo;
        parts.push(format!(
            "double Gaussian r={ratio}: K={:.4} vs {:.4}, geometric λ² ratio {}",
            sp.schmidt_number,
            thermal_schmidt_number(ratio),
            if geo { "ok" } else { "off" }
        ));
    }
    r.line(3, ok, true, t.elapsed().as_secs_f64(), parts.join("; "));
}

fn qudit_cfg() -> (QuditConfig, PhysicalParams) {
    let cfg = QuditConfig {
        alpha: 2e-5,
        filter: CombFilter { fsr: 1e-5, peak_width: 1e-6, n_range: None, shift_to_centers: true },
        points: 1024,
        window_sigmas: 6.0,
        schmidt_stride: 2,
        schmidt_window_sigmas: 3.0,
        compute_schmidt: false,
    };
    (cfg, params_with_gamma(2e-4))
}

fn criterion4(r: &mut Report) {
    let t = Instant::now();
    let p = PhysicalParams::default();
    let (alpha, beta) = (1e-6, 4e-6);
    let (_, out, grid) = gaussian_run(alpha, beta, &p);
    let spec = GaussianInput { alpha, omega_e: p.omega_e, omega_b: p.omega_b };
    let ana = analytic_gaussian_outputs(&spec, beta, &p, &grid).unwrap();
    let e1 = ChannelLabel::ALL
        .iter()
        .map(|&ch| relative_rms(out.field(ch), ana.field(ch)))
        .fold(0.0, f64::max);

    let (cfg, qp) = qudit_cfg();
    let qspec = GaussianInput { alpha: cfg.alpha, omega_e: qp.omega_e, omega_b: qp.omega_b };
    let qgrid = FrequencyGrid::centered(qp.omega_e, qp.omega_b, cfg.window_sigmas * cfg.alpha, cfg.points).unwrap();
    let input = apply_comb_filter(&gaussian_input(&qspec, &qgrid).unwrap(), &cfg.filter, (qp.omega_e, qp.omega_b)).unwrap();
    let qbeta = 5.0 * cfg.filter.peak_width;
    let qout = scatter(&input, &CouplingSpec::isotropic(qbeta, qp.gamma, qp.omega_e - qp.omega_b), &qp).unwrap();
    let qana = analytic_qudit_output(&qspec, &cfg.filter, qbeta, &qp, &qgrid).unwrap();
    let e2 = relative_rms(qout.field(ChannelLabel::MM), &qana.field);
    let ok = e1 < 1e-4 && e2 < 1e-4;
    r.line(4, ok, true, t.elapsed().as_secs_f64(), format!("Gaussian closed form rms={e1:.3e}; qudit closed form rms={e2:.3e}"));
}

fn criterion5(r: &mut Report) {
    let t = Instant::now();
    let (cfg, p) = qudit_cfg();
    let ratios = log_space(0.1, 45.0, 25);
    let rep = qudit_sweep(&ratios, &cfg, &p);
    // The reference column resolves β below the 2-D grid step; grid values are shown alongside.
    let vals: Vec<f64> = rep.rows.iter().map(|r| r.p_success_reference).collect();
    let (imax, max) = vals.iter().cloned().enumerate().fold((0, f64::MIN), |a, (k, v)| if v > a.1 { (k, v) } else { a });
    let (lo_end, hi_end) = (vals[0], vals[vals.len() - 1]);
    let errors = rep.rows.iter().filter(|r| r.error.is_some()).count();
    let agree = rep
        .rows
        .iter()
        .filter(|r| r.resolved)
        .map(|r| rel(r.p_success, r.p_success_reference))
        .fold(0.0, f64::max);
    let grid = |k: usize| rep.rows[k].p_success;
    let ok = errors == 0 && agree <= 0.01 && (max - 0.19).abs() <= 0.02 && lo_end <= 0.02 && hi_end <= 0.02;
    r.line(
        5,
        ok,
        true,
        t.elapsed().as_secs_f64(),
        format!(
            "max P={max:.4} at β/δω={:.3}; P(0.1)={lo_end:.4}, P(45)={hi_end:.4}; grid values {:.4} / {:.4} / {:.4}; \
             resolved-point agreement {:.1e}; failed points {errors}",
            rep.rows[imax].ratio,
            grid(imax),
            grid(0),
            grid(vals.len() - 1),
            agree
        ),
    );
}

fn criterion6(r: &mut Report) {
    let t = Instant::now();
    let a = evolve(&DecayConfig::adiabatic());
    let b = evolve(&DecayConfig::resonant());
    let (ok, detail) = match (a, b) {
        (Ok(a), Ok(b)) => {
            let gamma = a.fit.as_ref().map(|f| f.gamma).unwrap_or(f64::NAN);
            let drift = a.max_norm_drift().max(b.max_norm_drift());
            let ok = (0.04..=0.10).contains(&a.max_px())
                && (0.008..=0.03).contains(&a.late_px())
                && gamma >= 1e-5 / 3.0
                && gamma <= 3e-5
                && (0.35..=0.60).contains(&b.max_px())
                && drift <= 1e-6;
            (
                ok,
                format!(
                    "adiabatic max P_X={:.4} late P_X={:.4} Γ_fit={gamma:.3e}; resonant max P_X={:.4}; norm drift {drift:.2e}",
                    a.max_px(),
                    a.late_px(),
                    b.max_px()
                ),
            )
        }
        (a, b) => (false, format!("run failed: {:?} / {:?}", a.err(), b.err())),
    };
    r.line(6, ok, true, t.elapsed().as_secs_f64(), detail);
}

fn criterion7(r: &mut Report) {
    let t = Instant::now();
    let mut parts = Vec::new();
    let p = PhysicalParams::default();

    let mut sym: f64 = 0.0;
    for &(a, b) in &[(0.4971, 0.5029), (0.49, 0.51), (0.4961, 0.5044)] {
        let (x, y) = (nonseparable_bracket(&p, a, b, 0.0).unwrap(), nonseparable_bracket(&p, b, a, 0.0).unwrap());
        sym = sym.max((x - y).abs() / x.abs());
    }
    let zero = PhysicalParams { omega_x: 0.5, delta_x: 0.0, ..p.clone() };
    let vanish = nonseparable_bracket(&zero, 0.4974, 0.5026, 0.0).unwrap().abs();
    let small = |d: f64| nonseparable_bracket(&PhysicalParams::from_exciton(0.5 + d / 2.0, d), 0.4974, 0.5026, 0.0).unwrap();
    let linear = rel(small(2e-8) / small(1e-8), 2.0);
    let ok_c = sym <= 1e-12 && vanish == 0.0 && linear <= 1e-3;
    parts.push(format!("bracket symmetry {sym:.1e}, δ_X=0 → {vanish:e}, linear order {linear:.1e}"));

    let beta = 4e-6;
    let j = spectral_function(&CouplingSpec::isotropic(beta, p.gamma, 0.0052), 1.0, Window::new(0.0052 - 12.0 * beta, 0.0052 + 12.0 * beta, 4001).unwrap())
        .unwrap()
        .value;
    let ok_j = rel(j, p.gamma) <= 1e-8;
    parts.push(format!("J(ω_2X)/Γ-1 = {:.1e}", j / p.gamma - 1.0));
    let _ = gaussian_coupling;

    let f = double_gaussian(1e-6, 3e-6, 120);
    let sp = schmidt_on_grid(&f.clone().normalize().unwrap()).unwrap();
    let norm_err = (sp.lambdas.iter().map(|l| l * l).sum::<f64>() - 1.0).abs();
    let phased = BiphotonField::from_fn(f.grid.clone(), f.channel, |x, y| {
        let i = ((x - f.grid.omega_min) / f.grid.d_omega()).round() as usize;
        let j = ((y - f.grid.omega_prime_min) / f.grid.d_omega_prime()).round() as usize;
        f.at(i, j) * C64::from_polar(1.0, 3e5 * x * x) * C64::from_polar(1.0, -7e4 * y)
    })
    .unwrap();
    let sp2 = schmidt_on_grid(&phased.normalize().unwrap()).unwrap();
    let inv = sp.lambdas.iter().zip(&sp2.lambdas).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ok_s = norm_err <= 1e-10 && inv <= 1e-8;
    parts.push(format!("Σλ²-1 = {norm_err:.1e}, phase invariance {inv:.1e}"));

    let omega: Vec<f64> = (0..40).map(|k| 0.5026 + (k as f64 - 20.0) * 3e-7).collect();
    let omega_p: Vec<f64> = (0..40).map(|k| 0.4974 + (k as f64 - 20.0) * 3e-7).collect();
    let t1 = TargetMatrix::from_fn(&p, omega.clone(), omega_p.clone(), 0.0, |wp, w| {
        (1.0 + 2e3 * (w - 0.5026)) * (1.5 + 1e3 * (wp - 0.4974)) * nonseparable_bracket(&p, wp, w, 0.0).unwrap()
    })
    .unwrap();
    let s1 = refine(&t1, rank1_init(&t1.t).unwrap()).unwrap();
    let t2 = TargetMatrix::from_fn(&p, omega, omega_p, 0.0, |wp, w| {
        (-(w - 0.5026).powi(2) / 1e-11 - (wp - 0.4974).powi(2) / 2e-11).exp()
            + 0.2 * (-(w - wp - 0.0052).powi(2) / 1e-11).exp()
    })
    .unwrap();
    let s2 = refine(&t2, rank1_init(&t2.t).unwrap()).unwrap();
    let mono = s2.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let ok_m = s1.residual < 1e-10 && mono && s2.residual >= s2.rank1_bound - 1e-10;
    parts.push(format!("rank-1 recovery {:.1e}, ALS monotone {mono}", s1.residual));

    let run = || {
        let (_, out, _) = gaussian_run(1e-6, 2e-6, &p);
        out.fields.iter().flat_map(|f| f.values.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()])).collect::<Vec<u64>>()
    };
    let det = run() == run();
    parts.push(format!("bitwise rerun {det}"));
    r.line(7, ok_c && ok_j && ok_s && ok_m && det, true, t.elapsed().as_secs_f64(), parts.join("; "));
}

fn criterion8(r: &mut Report) {
    let t = Instant::now();
    let p = PhysicalParams::default();
    let alpha = 1e-6;
    let beta = 10.0 * alpha;
    let spec = GaussianInput { alpha, omega_e: p.omega_e, omega_b: p.omega_b };
    let g = FrequencyGrid::centered(p.omega_e, p.omega_b, beta, 100).unwrap();
    let inp = gaussian_input(&spec, &g).unwrap();
    let out = scatter(&inp, &CouplingSpec::isotropic(beta, p.gamma, p.omega_e - p.omega_b), &p).unwrap();
    let field = out.field(ChannelLabel::MM).clone().normalize().unwrap();
    let sp = schmidt_on_grid(&field).unwrap();
    let (_, full, _) = gaussian_run(alpha, beta, &p);
    let ell = distribution_stats(full.field(ChannelLabel::MM)).unwrap().ellipticity;
    let ok = (sp.normalized_entropy - 0.39).abs() <= 0.05 && (100.0 * ell - 98.0).abs() <= 2.0;
    r.line(
        8,
        ok,
        false,
        t.elapsed().as_secs_f64(),
        format!(
            "normalized entropy S/ln(n)={:.3} with n={} retained (target 0.39); covariance eccentricity {:.2}% (target 98%)",
            sp.normalized_entropy,
            sp.lambdas.len(),
            100.0 * ell
        ),
    );
}

fn main() {
    let mut r = Report { failed: Vec::new() };
    criterion1(&mut r);
    criterion2(&mut r);
    criterion3(&mut r);
    criterion4(&mut r);
    criterion5(&mut r);
    criterion6(&mut r);
    criterion7(&mut r);
    criterion8(&mut r);
    if r.failed.is_empty() {
        eprintln!("acceptance: all gating criteria pass");
    } else {
        eprintln!("acceptance: failing criteria {:?}", r.failed);
        std::process::exit(1);
    }
}
