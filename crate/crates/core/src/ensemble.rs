//! The trapped atomic ensemble: spectator Zeeman populations plus coherent
//! atom classes, each carrying a Bloch vector for the clock pseudo-spin.
//!
//! Classes bin the ensemble over the probe-beam intensity profile and over
//! the trap-induced static detuning, so inhomogeneous light shifts and trap
//! dephasing act class by class. `w = +1` is all atoms in `|↑⟩ = (4, 0)`,
//! `w = -1` all in `|↓⟩ = (3, 0)`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::angular_momentum::HalfInt;
use crate::cesium_model::{MultiColorResponse, Sublevel, ZeemanPopulations};
use crate::error::{Error, Result};

/// A group of atoms sharing probe intensity and static detuning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomClass {
    pub radial_bin_center_m: f64,
    /// Probe intensity relative to the beam center, in `(0, 1]`.
    pub relative_intensity: f64,
    /// Number of atoms in the class.
    pub weight: f64,
    /// Bloch vector `(u, v, w)`; its length is below one once the class has
    /// partially decohered.
    pub bloch: [f64; 3],
    /// Trap-induced detuning of the clock transition, rad/s.
    pub static_detuning: f64,
}

impl AtomClass {
    pub fn n_up(&self) -> f64 {
        self.weight * (1.0 + self.bloch[2]) / 2.0
    }

    pub fn n_down(&self) -> f64 {
        self.weight * (1.0 - self.bloch[2]) / 2.0
    }

    pub fn bloch_norm(&self) -> f64 {
        let [u, v, w] = self.bloch;
        (u * u + v * v + w * w).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState {
    /// Atoms outside the clock states, e.g. `(4, m_F != 0)` after pumping.
    pub spectators: ZeemanPopulations,
    pub classes: Vec<AtomClass>,
    /// Atoms removed from the signal (blown away or fully decohered).
    pub lost: f64,
    /// Atom-number weighted mean of the relative intensity at preparation;
    /// probe kicks are normalised to it.
    pub mean_intensity: f64,
}

impl EnsembleState {
    pub fn coherent_atoms(&self) -> f64 {
        self.classes.iter().map(|c| c.weight).sum()
    }

    /// Every atom the state accounts for, including lost ones.
    pub fn total_atoms(&self) -> f64 {
        self.coherent_atoms() + self.lost + self.spectators.total()
    }

    pub fn n_up(&self) -> f64 {
        self.classes.iter().map(AtomClass::n_up).sum()
    }

    pub fn n_down(&self) -> f64 {
        self.classes.iter().map(AtomClass::n_down).sum()
    }

    /// Full sublevel populations seen by the probe.
    pub fn populations(&self) -> ZeemanPopulations {
        let mut p = self.spectators.clone();
        p.add(Sublevel::CLOCK_UP, self.n_up());
        p.add(Sublevel::CLOCK_DOWN, self.n_down());
        p
    }

    /// Atom-weighted mean Bloch vector of the coherent classes.
    pub fn mean_bloch(&self) -> [f64; 3] {
        let total = self.coherent_atoms();
        if total <= 0.0 {
            return [0.0; 3];
        }
        let mut acc = [0.0; 3];
        for c in &self.classes {
            for (a, b) in acc.iter_mut().zip(c.bloch) {
                *a += c.weight * b;
            }
        }
        acc.map(|x| x / total)
    }

    /// Length of the mean transverse Bloch component.
    pub fn transverse_coherence(&self) -> f64 {
        let [u, v, _] = self.mean_bloch();
        u.hypot(v)
    }

    /// Phase contrast of a full `|↓⟩ -> |↑⟩` transfer, normalised to the
    /// phase with every coherent atom in `|↑⟩`.
    pub fn fringe_contrast(&self, response: &MultiColorResponse) -> f64 {
        let coherent = self.coherent_atoms();
        let mut up = self.spectators.clone();
        up.add(Sublevel::CLOCK_UP, coherent);
        let mut down = self.spectators.clone();
        down.add(Sublevel::CLOCK_DOWN, coherent);
        let phase_up = response.phase(&up);
        (phase_up - response.phase(&down)) / phase_up
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreparationConfig {
    pub total_atoms: f64,
    pub pumping_efficiency: f64,
    pub purify: bool,
    /// Radial bins over the probe intensity profile.
    pub n_classes: usize,
    pub beam_waist_m: f64,
    pub sample_diameter_m: f64,
    /// Bins of the Gaussian trap-detuning distribution.
    pub detuning_bins: usize,
    /// Standard deviation of the trap-induced detuning, rad/s.
    pub trap_spread: f64,
}

impl Default for PreparationConfig {
    fn default() -> Self {
        PreparationConfig {
            total_atoms: 2e5,
            pumping_efficiency: 0.8,
            purify: false,
            n_classes: 32,
            beam_waist_m: 60e-6,
            sample_diameter_m: 60e-6,
            detuning_bins: 8,
            // Free-precession contrast 1/e time of 10 ms: exp(-σ²t²/2) = 1/e.
            trap_spread: std::f64::consts::SQRT_2 / 10e-3,
        }
    }
}

impl PreparationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pumping_efficiency) {
            return Err(Error::Config(format!(
                "pumping efficiency {} outside [0, 1]",
                self.pumping_efficiency
            )));
        }
        if self.n_classes == 0 || self.detuning_bins == 0 {
            return Err(Error::Config("class counts must be at least one".into()));
        }
        if !(self.total_atoms >= 0.0) {
            return Err(Error::Config("atom number must be non-negative".into()));
        }
        if !(self.beam_waist_m > 0.0 && self.sample_diameter_m > 0.0) {
            return Err(Error::Config("beam waist and sample diameter must be positive".into()));
        }
        if !(self.trap_spread >= 0.0) {
            return Err(Error::Config("trap spread must be non-negative".into()));
        }
        Ok(())
    }
}

/// One radial bin of the probe profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamBin {
    pub radial_center_m: f64,
    pub relative_intensity: f64,
    pub weight_fraction: f64,
}

/// Splits a uniformly filled disk into `n_classes` annuli of equal atom
/// number and evaluates the Gaussian intensity `exp(-2r²/w²)` at each bin's
/// median radius. A single bin stands for a uniform intensity of one.
pub fn discretize_beam(n_classes: usize, beam_waist_m: f64, sample_diameter_m: f64) -> Vec<BeamBin> {
    if n_classes <= 1 {
        return vec![BeamBin {
            radial_center_m: 0.0,
            relative_intensity: 1.0,
            weight_fraction: 1.0,
        }];
    }
    let radius = sample_diameter_m / 2.0;
    let n = n_classes as f64;
    (0..n_classes)
        .map(|k| {
            // r² is uniform for a uniform disk, so equal-weight bins are
            // equal slices of r².
            let r = radius * ((k as f64 + 0.5) / n).sqrt();
            BeamBin {
                radial_center_m: r,
                relative_intensity: (-2.0 * r * r / (beam_waist_m * beam_waist_m)).exp(),
                weight_fraction: 1.0 / n,
            }
        })
        .collect()
}

/// Equal-weight standard-normal nodes, rescaled to unit variance.
fn gaussian_nodes(bins: usize) -> Vec<f64> {
    if bins <= 1 {
        return vec![0.0];
    }
    let normal = Normal::standard();
    let n = bins as f64;
    let raw: Vec<f64> = (0..bins).map(|k| normal.inverse_cdf((k as f64 + 0.5) / n)).collect();
    let var = raw.iter().map(|z| z * z).sum::<f64>() / n;
    raw.into_iter().map(|z| z / var.sqrt()).collect()
}

/// Coherent classes for `atoms` atoms on a beam × detuning grid, all with
/// the same Bloch vector.
fn build_classes(cfg: &PreparationConfig, atoms: f64, bloch: [f64; 3]) -> (Vec<AtomClass>, f64) {
    let bins = discretize_beam(cfg.n_classes, cfg.beam_waist_m, cfg.sample_diameter_m);
    let nodes = gaussian_nodes(cfg.detuning_bins);
    let per_node = 1.0 / nodes.len() as f64;
    let mut classes = Vec::with_capacity(bins.len() * nodes.len());
    for bin in &bins {
        for z in &nodes {
            classes.push(AtomClass {
                radial_bin_center_m: bin.radial_center_m,
                relative_intensity: bin.relative_intensity,
                weight: atoms * bin.weight_fraction * per_node,
                bloch,
                static_detuning: z * cfg.trap_spread,
            });
        }
    }
    let mean_intensity = bins.iter().map(|b| b.weight_fraction * b.relative_intensity).sum();
    (classes, mean_intensity)
}

/// Optical pumping into `(4, 0)`: the pumped fraction forms the coherent
/// classes at `w = +1`, the remainder spreads evenly over `(4, m_F != 0)`.
pub fn prepare_pumped(cfg: &PreparationConfig) -> Result<EnsembleState> {
    cfg.validate()?;
    let coherent = cfg.pumping_efficiency * cfg.total_atoms;
    let (classes, mean_intensity) = build_classes(cfg, coherent, [0.0, 0.0, 1.0]);

    let mut spectators = ZeemanPopulations::new();
    let f4 = HalfInt::int(4);
    let others: Vec<HalfInt> = f4.projections().filter(|m| *m != HalfInt::ZERO).collect();
    let remainder = cfg.total_atoms - coherent;
    if remainder > 0.0 {
        for m in &others {
            spectators.add(Sublevel::new(f4, *m), remainder / others.len() as f64);
        }
    }
    Ok(EnsembleState {
        spectators,
        classes,
        lost: 0.0,
        mean_intensity,
    })
}

/// Pumping followed by purification when `cfg.purify` is set.
pub fn prepare(cfg: &PreparationConfig) -> Result<EnsembleState> {
    let pumped = prepare_pumped(cfg)?;
    Ok(if cfg.purify { purify(pumped) } else { pumped })
}

/// Microwave π pulse into `|↓⟩`, then blow-away of everything left in
/// `F = 4`.
pub fn purify(mut state: EnsembleState) -> EnsembleState {
    for class in &mut state.classes {
        let [u, v, w] = class.bloch;
        // π rotation about the u axis.
        let flipped = [u, -v, -w];
        let remaining = class.weight * (1.0 - flipped[2]) / 2.0;
        state.lost += class.weight - remaining;
        class.weight = remaining;
        class.bloch = [0.0, 0.0, -1.0];
    }
    state.lost += state.spectators.total();
    state.spectators.clear();
    state
}

/// Number of `|↑⟩` atoms when `n` atoms of an equatorial coherent spin state
/// are projected.
pub fn sample_css<R: Rng + ?Sized>(n: u64, rng: &mut R) -> u64 {
    sample_projection(n, 0.5, rng)
}

/// Binomial projection of `n` atoms with `|↑⟩` probability `p_up`.
pub fn sample_projection<R: Rng + ?Sized>(n: u64, p_up: f64, rng: &mut R) -> u64 {
    if n == 0 {
        return 0;
    }
    let p = p_up.clamp(0.0, 1.0);
    Binomial::new(n, p).expect("probability clamped to [0, 1]").sample(rng)
}
