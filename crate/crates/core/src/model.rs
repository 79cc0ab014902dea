//! Two-band model: band energies, interaction protocol U(t), the
//! dipole pulse, and the single-particle Hamiltonian h(k;t).
//!
//! Band order is 0 = valence, 1 = conduction.

use num_complex::Complex64 as C64;

use crate::kgrid::KGrid;
use crate::linalg::Mat2;
use crate::{Error, Result};

/// Time dependence of the on-site interband interaction.
#[derive(Clone, Debug, PartialEq)]
pub enum UProtocol {
    Constant(f64),
    /// One value per time-grid point `t_i = i·dt`.
    Tabulated(Vec<f64>),
}

impl UProtocol {
    /// U at grid index `i`.
    pub fn at_index(&self, i: usize) -> f64 {
        match self {
            UProtocol::Constant(u) => *u,
            UProtocol::Tabulated(v) => v[i],
        }
    }

    /// U at the midpoint between grid indices `i - 1` and `i`.
    pub fn at_midpoint(&self, i: usize) -> f64 {
        match self {
            UProtocol::Constant(u) => *u,
            UProtocol::Tabulated(v) => 0.5 * (v[i - 1] + v[i]),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            UProtocol::Constant(u) => *u == 0.0,
            UProtocol::Tabulated(v) => v.iter().all(|&u| u == 0.0),
        }
    }
}

/// Mean-field (Hartree-Fock) contribution to h.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HfMode {
    #[default]
    Off,
    On,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub band_gap: f64,
    pub hopping: f64,
    pub u: UProtocol,
    pub pulse_intensity: f64,
    pub pulse_center: f64,
    /// Interband dipole matrix element, uniform in k.
    pub dipole: C64,
    pub hf_mode: HfMode,
    /// Tabulated valence band, overrides the cosine dispersion.
    pub valence_band: Option<Vec<f64>>,
    /// Tabulated conduction band, overrides the cosine dispersion.
    pub conduction_band: Option<Vec<f64>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            band_gap: 2.0,
            hopping: 0.5,
            u: UProtocol::Constant(0.0),
            pulse_intensity: 0.0,
            pulse_center: 0.5,
            dipole: C64::new(1.0, 0.0),
            hf_mode: HfMode::Off,
            valence_band: None,
            conduction_band: None,
        }
    }
}

impl ModelConfig {
    /// Checks the invariants that do not depend on the k-grid.
    /// `n_steps` is the number of time steps the run will take.
    pub fn validate(&self, n_k: usize, n_steps: usize) -> Result<()> {
        if !self.band_gap.is_finite() {
            return Err(Error::config("band_gap", "must be finite"));
        }
        if !(self.hopping >= 0.0 && self.hopping.is_finite()) {
            return Err(Error::config("hopping", "must be finite and >= 0"));
        }
        if !self.pulse_intensity.is_finite() {
            return Err(Error::config("pulse_intensity", "must be finite"));
        }
        if !(self.pulse_center >= 0.0 && self.pulse_center.is_finite()) {
            return Err(Error::config("pulse_center", "must be finite and >= 0"));
        }
        match &self.u {
            UProtocol::Constant(u) if !u.is_finite() => {
                return Err(Error::config("u", "must be finite"));
            }
            UProtocol::Tabulated(v) => {
                if v.len() < n_steps + 1 {
                    return Err(Error::config(
                        "u",
                        format!("needs at least {} values, got {}", n_steps + 1, v.len()),
                    ));
                }
                if v.iter().any(|u| !u.is_finite()) {
                    return Err(Error::config("u", "must be finite"));
                }
            }
            _ => {}
        }
        for (key, band) in [
            ("valence_band", &self.valence_band),
            ("conduction_band", &self.conduction_band),
        ] {
            if let Some(b) = band {
                if b.len() != n_k {
                    return Err(Error::config(
                        key,
                        format!("needs {n_k} values, got {}", b.len()),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Band energies `(ε_v, ε_c)` per k.
///
/// Default dispersion: `ε_c(k) = gap/2 + 2·hopping·(1 - cos k)`, `ε_v = -ε_c`.
pub fn band_energies(config: &ModelConfig, grid: &KGrid) -> (Vec<f64>, Vec<f64>) {
    let cosine: Vec<f64> = grid
        .k_values()
        .iter()
        .map(|&k| 0.5 * config.band_gap + 2.0 * config.hopping * (1.0 - k.cos()))
        .collect();
    let ec = config.conduction_band.clone().unwrap_or_else(|| cosine.clone());
    let ev = config
        .valence_band
        .clone()
        .unwrap_or_else(|| cosine.iter().map(|e| -e).collect());
    (ev, ec)
}

/// Grid index of the pulse, the point nearest `pulse_center`.
pub fn pulse_index(config: &ModelConfig, dt: f64) -> usize {
    (config.pulse_center / dt).round() as usize
}

/// Discretised delta pulse: `I/dt` at the grid point nearest the pulse
/// centre, zero elsewhere. `t` is mapped to its nearest grid point.
pub fn pulse_amplitude(t: f64, config: &ModelConfig, dt: f64) -> f64 {
    if config.pulse_intensity == 0.0 {
        return 0.0;
    }
    let i = (t / dt).round();
    if i >= 0.0 && i as usize == pulse_index(config, dt) {
        config.pulse_intensity / dt
    } else {
        0.0
    }
}

/// h(k) for every k of a grid, band order (valence, conduction).
#[derive(Clone, Debug, PartialEq)]
pub struct SingleParticleH {
    pub h: Vec<Mat2>,
}

impl SingleParticleH {
    /// Largest `|h - h†|` entry over all k.
    pub fn hermiticity_residual(&self) -> f64 {
        self.h
            .iter()
            .map(|m| (*m - m.adjoint()).max_abs())
            .fold(0.0, f64::max)
    }
}

/// Precomputed, time-independent pieces of the model on a grid.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub eps_v: Vec<f64>,
    pub eps_c: Vec<f64>,
    pub dt: f64,
}

impl Model {
    pub fn new(config: ModelConfig, grid: &KGrid, dt: f64) -> Self {
        let (eps_v, eps_c) = band_energies(&config, grid);
        Model {
            config,
            eps_v,
            eps_c,
            dt,
        }
    }

    pub fn n_k(&self) -> usize {
        self.eps_v.len()
    }

    /// Assembles h(k) given an interaction value, a field amplitude, and the
    /// equal-time lesser function `rho` (all k, only read when HF is on).
    pub fn assemble(&self, u: f64, field: f64, rho: &[Mat2]) -> SingleParticleH {
        let hf = match self.config.hf_mode {
            HfMode::Off => Mat2::ZERO,
            HfMode::On => mean_field(u, rho),
        };
        let d = self.config.dipole * field;
        let h = self
            .eps_v
            .iter()
            .zip(&self.eps_c)
            .map(|(&ev, &ec)| {
                Mat2::new(
                    C64::new(ev, 0.0),
                    d.conj(),
                    d,
                    C64::new(ec - u, 0.0),
                ) + hf
            })
            .collect();
        SingleParticleH { h }
    }

    /// h(k; t_i) at a grid point.
    pub fn h_at(&self, i: usize, rho: &[Mat2]) -> SingleParticleH {
        let t = i as f64 * self.dt;
        self.assemble(
            self.config.u.at_index(i),
            pulse_amplitude(t, &self.config, self.dt),
            rho,
        )
    }

    /// Hamiltonian used for the step `t_{n-1} -> t_n`, evaluated at the
    /// midpoint. The delta kick is carried by the step that ends on the
    /// pulse grid point, so exactly one step sees it.
    pub fn h_step(&self, n: usize, rho: &[Mat2]) -> SingleParticleH {
        let field = if self.config.pulse_intensity != 0.0
            && n == pulse_index(&self.config, self.dt)
        {
            self.config.pulse_intensity / self.dt
        } else {
            0.0
        };
        self.assemble(self.config.u.at_midpoint(n), field, rho)
    }
}

/// Hartree-Fock term for the interband interaction.
///
/// With `⟨c†_m c_j⟩ = -i G<_{jm}(t,t)`, the Hartree shift on each band is
/// U times the mean occupation of the other band, and the exchange term
/// couples the bands through the mean interband coherence.
fn mean_field(u: f64, rho: &[Mat2]) -> Mat2 {
    if rho.is_empty() {
        return Mat2::ZERO;
    }
    let inv = 1.0 / rho.len() as f64;
    let mut nv = 0.0;
    let mut nc = 0.0;
    let mut coh = C64::new(0.0, 0.0);
    for g in rho {
        nv += g.get(0, 0).im;
        nc += g.get(1, 1).im;
        coh += g.get(1, 0);
    }
    let nv = nv * inv;
    let nc = nc * inv;
    // h_cv = -U/n_k Σ ⟨c†_v c_c⟩ = i U/n_k Σ G<_{cv}
    let h_cv = C64::new(0.0, u) * coh * inv;
    Mat2::new(
        C64::new(u * nc, 0.0),
        h_cv.conj(),
        h_cv,
        C64::new(u * nv, 0.0),
    )
}
