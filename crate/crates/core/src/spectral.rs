//! Parameters, frequency grids and sampled two-photon amplitudes.
//!
//! Frequencies are dimensionless multiples of the biexciton frequency.

use std::fmt;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default sample count per grid axis.
pub const DEFAULT_POINTS: usize = 512;
/// Default window half-width in units of the widest Gaussian scale.
pub const DEFAULT_WINDOW_SIGMAS: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    pub omega_2x: f64,
    pub omega_x: f64,
    pub delta_x: f64,
    pub s: f64,
    pub gamma: f64,
    pub d: f64,
    pub omega_e: f64,
    pub omega_b: f64,
    pub tau: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            omega_2x: 1.0,
            omega_x: 0.5025,
            delta_x: 0.005,
            s: 1e-5,
            gamma: 1e-5,
            d: 1.0,
            omega_e: 0.5026,
            omega_b: 0.4974,
            tau: 0.0,
        }
    }
}

impl PhysicalParams {
    /// Builds parameters from the exciton frequency and binding frequency,
    /// with the biexciton frequency fixed to one.
    pub fn from_exciton(omega_x: f64, delta_x: f64) -> Self {
        PhysicalParams {
            omega_x,
            delta_x,
            omega_2x: 2.0 * omega_x - delta_x,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.omega_2x, self.omega_x, self.delta_x, self.s, self.gamma, self.d, self.omega_e,
            self.omega_b, self.tau,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("physical parameters must be finite".into()));
        }
        let expect = 2.0 * self.omega_x - self.delta_x;
        if (self.omega_2x - expect).abs() > 1e-12 * self.omega_2x.abs().max(1.0) {
            return Err(Error::Config(format!(
                "omega_2x = {} but 2*omega_x - delta_x = {}",
                self.omega_2x, expect
            )));
        }
        if self.gamma <= 0.0 {
            return Err(Error::Config("gamma must be positive".into()));
        }
        if self.delta_x < 0.0 {
            return Err(Error::Config("delta_x must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_omega: usize,
    pub omega_prime_min: f64,
    pub omega_prime_max: f64,
    pub n_omega_prime: usize,
}

impl FrequencyGrid {
    pub fn new(
        omega_min: f64,
        omega_max: f64,
        n_omega: usize,
        omega_prime_min: f64,
        omega_prime_max: f64,
        n_omega_prime: usize,
    ) -> Result<Self> {
        let g = FrequencyGrid {
            omega_min,
            omega_max,
            n_omega,
            omega_prime_min,
            omega_prime_max,
            n_omega_prime,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square window of half-width `half_width` on both axes around (omega_c, omega_prime_c).
    pub fn centered(omega_c: f64, omega_prime_c: f64, half_width: f64, n: usize) -> Result<Self> {
        Self::new(
            omega_c - half_width,
            omega_c + half_width,
            n,
            omega_prime_c - half_width,
            omega_prime_c + half_width,
            n,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_omega < 2 || self.n_omega_prime < 2 {
            return Err(Error::Config("grid needs at least 2 points per axis".into()));
        }
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && hi > lo;
        if !ok(self.omega_min, self.omega_max) || !ok(self.omega_prime_min, self.omega_prime_max) {
            return Err(Error::Config("grid bounds must be finite with max > min".into()));
        }
        if self.cell_area() <= 0.0 {
            return Err(Error::Config("grid cell area vanishes".into()));
        }
        Ok(())
    }

    pub fn d_omega(&self) -> f64 {
        (self.omega_max - self.omega_min) / (self.n_omega - 1) as f64
    }

    pub fn d_omega_prime(&self) -> f64 {
        (self.omega_prime_max - self.omega_prime_min) / (self.n_omega_prime - 1) as f64
    }

    pub fn omega(&self, i: usize) -> f64 {
        self.omega_min + i as f64 * self.d_omega()
    }

    pub fn omega_prime(&self, j: usize) -> f64 {
        self.omega_prime_min + j as f64 * self.d_omega_prime()
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.n_omega).map(|i| self.omega(i)).collect()
    }

    pub fn omega_primes(&self) -> Vec<f64> {
        (0..self.n_omega_prime).map(|j| self.omega_prime(j)).collect()
    }

    pub fn len(&self) -> usize {
        self.n_omega * self.n_omega_prime
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.d_omega() * self.d_omega_prime()
    }

    /// Both axes share the same step, so lines of constant sum fall on grid nodes.
    pub fn equal_spacing(&self) -> bool {
        let (a, b) = (self.d_omega(), self.d_omega_prime());
        (a - b).abs() <= 1e-9 * a.max(b)
    }

    /// Same window with each axis refined by `factor` (n -> factor*(n-1)+1).
    pub fn refined(&self, factor: usize) -> Self {
        FrequencyGrid {
            n_omega: factor * (self.n_omega - 1) + 1,
            n_omega_prime: factor * (self.n_omega_prime - 1) + 1,
            ..self.clone()
        }
    }
}

/// Trapezoid weight of node `i` among `n` nodes (unit step).
#[inline]
pub fn trap_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i + 1 == n {
        0.5
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    R,
    L,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelLabel {
    pub mu_prime: Direction,
    pub mu: Direction,
}

impl ChannelLabel {
    pub const PP: ChannelLabel = ChannelLabel { mu_prime: Direction::Plus, mu: Direction::Plus };
    pub const MM: ChannelLabel = ChannelLabel { mu_prime: Direction::Minus, mu: Direction::Minus };
    pub const MP: ChannelLabel = ChannelLabel { mu_prime: Direction::Minus, mu: Direction::Plus };
    pub const PM: ChannelLabel = ChannelLabel { mu_prime: Direction::Plus, mu: Direction::Minus };

    pub const ALL: [ChannelLabel; 4] = [Self::PP, Self::MM, Self::MP, Self::PM];

    /// Polarizations (sigma', sigma) fixed by the selection rules.
    pub fn polarizations(&self) -> (Polarization, Polarization) {
        use Direction::*;
        use Polarization::*;
        match (self.mu_prime, self.mu) {
            (Plus, Plus) => (L, R),
            (Minus, Minus) => (R, L),
            (Minus, Plus) => (R, R),
            (Plus, Minus) => (L, L),
        }
    }

    pub fn sigma_prime(&self) -> Polarization {
        self.polarizations().0
    }

    pub fn sigma(&self) -> Polarization {
        self.polarizations().1
    }

    /// Short file-name friendly tag, e.g. "pp" for (+,+).
    pub fn tag(&self) -> &'static str {
        use Direction::*;
        match (self.mu_prime, self.mu) {
            (Plus, Plus) => "pp",
            (Minus, Minus) => "mm",
            (Minus, Plus) => "mp",
            (Plus, Minus) => "pm",
        }
    }
}

impl fmt::Display for ChannelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = |x: Direction| if x == Direction::Plus { '+' } else { '-' };
        let (sp, s) = self.polarizations();
        write!(f, "({},{})->({:?},{:?})", d(self.mu_prime), d(self.mu), sp, s)
    }
}

#[inline]
pub fn to_collective(omega: f64, omega_prime: f64) -> (f64, f64) {
    (omega + omega_prime, omega - omega_prime)
}

#[inline]
pub fn from_collective(omega_sigma: f64, omega_delta: f64) -> (f64, f64) {
    ((omega_sigma + omega_delta) / 2.0, (omega_sigma - omega_delta) / 2.0)
}

/// Markovian emission factor Γ/(Γ/2 + i(ω_2X − ω_Σ)).
#[inline]
pub fn lorentzian_emission(omega_sigma: f64, params: &PhysicalParams) -> C64 {
    let g = params.gamma;
    C64::new(g, 0.0) / C64::new(g / 2.0, params.omega_2x - omega_sigma)
}

/// Two-photon amplitude sampled on a grid; `values[i * n_omega_prime + j]` is C(ω'_j, ω_i).
#[derive(Clone, Debug)]
pub struct BiphotonField {
    pub grid: FrequencyGrid,
    pub values: Vec<C64>,
    pub channel: ChannelLabel,
    pub normalized: bool,
}

impl BiphotonField {
    pub fn new(grid: FrequencyGrid, values: Vec<C64>, channel: ChannelLabel) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "field has {} samples, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Domain("field contains non-finite values".into()));
        }
        Ok(BiphotonField { grid, values, channel, normalized: false })
    }

    pub fn zeros(grid: FrequencyGrid, channel: ChannelLabel) -> Self {
        let n = grid.len();
        BiphotonField { grid, values: vec![C64::new(0.0, 0.0); n], channel, normalized: false }
    }

    /// Samples `f(ω, ω')` on every node, rows in parallel.
    pub fn from_fn<F>(grid: FrequencyGrid, channel: ChannelLabel, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> C64 + Sync,
    {
        let np = grid.n_omega_prime;
        let values: Vec<C64> = (0..grid.n_omega)
            .into_par_iter()
            .flat_map_iter(|i| {
                let w = grid.omega(i);
                let g = &grid;
                let f = &f;
                (0..np).map(move |j| f(w, g.omega_prime(j)))
            })
            .collect();
        Self::new(grid, values, channel)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.values[i * self.grid.n_omega_prime + j]
    }

    pub fn norm_sq(&self) -> f64 {
        integrate2d(self)
    }

    /// Rescales to unit norm in the (ω, ω') plane.
    pub fn normalize(mut self) -> Result<Self> {
        let n = self.norm_sq();
        if n <= 0.0 || !n.is_finite() {
            return Err(Error::Domain("cannot normalize a zero field".into()));
        }
        let k = 1.0 / n.sqrt();
        self.values.iter_mut().for_each(|c| *c *= k);
        self.normalized = true;
        Ok(self)
    }

    pub fn scaled(mut self, k: C64) -> Self {
        self.values.iter_mut().for_each(|c| *c *= k);
        self.normalized = false;
        self
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(std::fs::File::create(path)?));
        w.write_record(["omega", "omega_prime", "re", "im"])?;
        for i in 0..self.grid.n_omega {
            let wi = fmt_f64(self.grid.omega(i));
            for j in 0..self.grid.n_omega_prime {
                let c = self.at(i, j);
                w.write_record([
                    wi.as_str(),
                    &fmt_f64(self.grid.omega_prime(j)),
                    &fmt_f64(c.re),
                    &fmt_f64(c.im),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// JSON sidecar with grid, channel and parameters.
    pub fn write_sidecar(&self, path: &Path, params: &PhysicalParams) -> Result<()> {
        let side = FieldSidecar {
            grid: self.grid.clone(),
            channel: self.channel,
            normalized: self.normalized,
            params: params.clone(),
        };
        let mut f = std::fs::File::create(path)?;
        f.write_all(serde_json::to_string_pretty(&side)?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Reads a field written by `write_csv`, with its sidecar.
    pub fn read(csv_path: &Path, sidecar_path: &Path) -> Result<(Self, PhysicalParams)> {
        let side: FieldSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
        let mut r = csv::Reader::from_path(csv_path)?;
        let mut values = Vec::with_capacity(side.grid.len());
        for rec in r.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Config(format!("bad field csv record {rec:?}")))
            };
            values.push(C64::new(parse(2)?, parse(3)?));
        }
        let mut f = BiphotonField::new(side.grid, values, side.channel)?;
        f.normalized = side.normalized;
        Ok((f, side.params))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldSidecar {
    grid: FrequencyGrid,
    channel: ChannelLabel,
    normalized: bool,
    params: PhysicalParams,
}

/// Trapezoid integral of |C|² over the (ω, ω') plane.
pub fn integrate2d(field: &BiphotonField) -> f64 {
    integrate_nodes(&field.grid, |i, j| field.at(i, j).norm_sqr())
}

/// Trapezoid integral of `f(i, j)` over grid nodes; rows summed in index order.
pub fn integrate_nodes<F>(grid: &FrequencyGrid, f: F) -> f64
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let (n, np) = (grid.n_omega, grid.n_omega_prime);
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..np {
                s += trap_weight(j, np) * f(i, j);
            }
            trap_weight(i, n) * s
        })
        .collect();
    rows.iter().sum::<f64>() * grid.cell_area()
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Mass of a normal density (mean `c`, std `s`) outside [lo, hi].
pub fn gaussian_tail_mass(lo: f64, hi: f64, c: f64, s: f64) -> f64 {
    let k = std::f64::consts::SQRT_2 * s;
    0.5 * libm::erfc((hi - c) / k) + 0.5 * libm::erfc((c - lo) / k)
}
