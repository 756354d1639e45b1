//! Cs D2 level scheme and the dispersive phase shift of a probe beam.
//!
//! A probe color with detuning `Δ_{F,F'}` from each hyperfine transition
//! picks up a phase
//!
//! ```text
//! Δφ = φ0 Σ_{F, m_F, F'} N_{F,m_F} C(F, m_F, F', q) (γ/2) Δ_{F,F'} / (Δ_{F,F'}² + (γ/2)²)
//! ```
//!
//! where `C = (2F'+1)(2F+1) (F' 1 F; m'_F q -m_F)² {J J' 1; F' F I}²` and
//! `φ0 = 3 l λ² (2J'+1) / (4π V)`. Every probe color sees both ground
//! levels: a color tuned near `F = 4` still picks up a small contribution
//! from `F = 3` atoms detuned by the ground splitting.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::angular_momentum::{rational_to_f64, triangle_ok, wigner_3j, wigner_6j, HalfInt};
use crate::constants::{LevelData, PLANCK, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// A ground `(F, m_F)` sublevel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Sublevel {
    pub f: HalfInt,
    pub m: HalfInt,
}

impl Sublevel {
    pub const fn new(f: HalfInt, m: HalfInt) -> Self {
        Sublevel { f, m }
    }

    /// `(F = 4, m_F = 0)`, the upper clock state.
    pub const CLOCK_UP: Sublevel = Sublevel::new(HalfInt::int(4), HalfInt::ZERO);
    /// `(F = 3, m_F = 0)`, the lower clock state.
    pub const CLOCK_DOWN: Sublevel = Sublevel::new(HalfInt::int(3), HalfInt::ZERO);
}

/// Hyperfine structure of one fine-structure transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    pub nuclear_spin: HalfInt,
    pub ground_j: HalfInt,
    pub excited_j: HalfInt,
    /// Ground hyperfine levels with their energies in MHz, ascending.
    pub ground_levels: Vec<(HalfInt, f64)>,
    /// Excited hyperfine levels with their energies in MHz, ascending.
    pub excited_levels: Vec<(HalfInt, f64)>,
    pub linewidth_mhz: f64,
    pub wavelength_m: f64,
}

impl LevelScheme {
    /// The Cs D2 line from the bundled reference data.
    pub fn cesium_d2() -> Self {
        Self::from_level_data(&LevelData::cesium_d2()).expect("bundled cesium data is valid")
    }

    /// Builds the scheme with the highest ground and excited levels at zero
    /// energy.
    pub fn from_level_data(data: &LevelData) -> Result<Self> {
        let allowed = |j: HalfInt| -> Vec<HalfInt> {
            let lo = (j.twice() - data.nuclear_spin.twice()).abs();
            let hi = j.twice() + data.nuclear_spin.twice();
            (lo..=hi).step_by(2).map(HalfInt::from_twice).collect()
        };
        let ground = allowed(data.ground_j);
        let excited = allowed(data.excited_j);
        if ground.len() != 2 {
            return Err(Error::Config(format!(
                "expected two ground hyperfine levels, found {}",
                ground.len()
            )));
        }
        let ground_levels = vec![(ground[0], -data.ground_splitting_mhz), (ground[1], 0.0)];

        // Walk down from the top excited level accumulating intervals.
        let mut excited_levels = vec![(*excited.last().expect("non-empty"), 0.0)];
        for pair in excited.windows(2).rev() {
            let interval = data.excited_interval(pair[0])?;
            let above = excited_levels.last().expect("non-empty").1;
            excited_levels.push((pair[0], above - interval));
        }
        excited_levels.reverse();

        let scheme = LevelScheme {
            nuclear_spin: data.nuclear_spin,
            ground_j: data.ground_j,
            excited_j: data.excited_j,
            ground_levels,
            excited_levels,
            linewidth_mhz: data.linewidth_mhz,
            wavelength_m: data.wavelength_m,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        for &(f, _) in &self.ground_levels {
            if !triangle_ok(self.ground_j, self.nuclear_spin, f) {
                return Err(Error::Config(format!("ground F = {f} not allowed")));
            }
        }
        for &(f, _) in &self.excited_levels {
            if !triangle_ok(self.excited_j, self.nuclear_spin, f) {
                return Err(Error::Config(format!("excited F' = {f} not allowed")));
            }
        }
        for levels in [&self.ground_levels, &self.excited_levels] {
            for pair in levels.windows(2) {
                if pair[1].0 <= pair[0].0 || pair[1].1 <= pair[0].1 {
                    return Err(Error::Config(
                        "hyperfine levels must be ascending in F and energy".into(),
                    ));
                }
            }
        }
        if !(self.linewidth_mhz > 0.0 && self.wavelength_m > 0.0) {
            return Err(Error::Config("linewidth and wavelength must be positive".into()));
        }
        Ok(())
    }

    pub fn ground_fs(&self) -> impl Iterator<Item = HalfInt> + '_ {
        self.ground_levels.iter().map(|&(f, _)| f)
    }

    pub fn excited_fs(&self) -> impl Iterator<Item = HalfInt> + '_ {
        self.excited_levels.iter().map(|&(f, _)| f)
    }

    /// Every ground sublevel `(F, m_F)`.
    pub fn sublevels(&self) -> Vec<Sublevel> {
        self.ground_fs()
            .flat_map(|f| f.projections().map(move |m| Sublevel::new(f, m)))
            .collect()
    }

    fn ground_energy(&self, f: HalfInt) -> Result<f64> {
        lookup(&self.ground_levels, f, "ground")
    }

    fn excited_energy(&self, f: HalfInt) -> Result<f64> {
        lookup(&self.excited_levels, f, "excited")
    }

    /// Transition frequency `F -> F'` in MHz relative to the top-to-top line.
    pub fn transition_mhz(&self, f: HalfInt, f_exc: HalfInt) -> Result<f64> {
        Ok(self.excited_energy(f_exc)? - self.ground_energy(f)?)
    }

    /// Detuning `Δ_{F,F'}` (MHz, positive = blue) of a probe color.
    pub fn detuning_mhz(&self, color: &ProbeColor, f: HalfInt, f_exc: HalfInt) -> Result<f64> {
        let laser = self.transition_mhz(color.reference.0, color.reference.1)? + color.detuning_mhz;
        Ok(laser - self.transition_mhz(f, f_exc)?)
    }

    /// `(2F'+1)(2F+1) (F' 1 F; m'_F q -m_F)² {J J' 1; F' F I}²`, exactly.
    ///
    /// The 3j symbol fixes `m'_F = m_F - q`; the coefficient vanishes when the
    /// selection rules forbid the transition.
    pub fn coupling_coefficient(&self, f: HalfInt, m: HalfInt, f_exc: HalfInt, q: i8) -> Result<BigRational> {
        let q = HalfInt::int(i32::from(q));
        let m_exc = m - q;
        if m_exc.twice().abs() > f_exc.twice() {
            return Ok(BigRational::zero());
        }
        let three_j = wigner_3j(f_exc, HalfInt::ONE, f, m_exc, q, -m)?;
        let six_j = wigner_6j(self.ground_j, self.excited_j, HalfInt::ONE, f_exc, f, self.nuclear_spin)?;
        let degeneracy = BigRational::from_integer(BigInt::from(f_exc.multiplicity() * f.multiplicity()));
        Ok(degeneracy * three_j.square() * six_j.square())
    }
}

fn lookup(levels: &[(HalfInt, f64)], f: HalfInt, which: &str) -> Result<f64> {
    levels
        .iter()
        .find(|&&(g, _)| g == f)
        .map(|&(_, e)| e)
        .ok_or_else(|| Error::Domain(format!("no {which} level with F = {f}")))
}

/// Sample geometry entering the phase scale `φ0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeGeometry {
    pub sample_length_m: f64,
    pub sample_volume_m3: f64,
    pub wavelength_m: f64,
}

impl ProbeGeometry {
    /// A cylinder of the given diameter and length along the probe.
    pub fn cylinder(diameter_m: f64, length_m: f64, wavelength_m: f64) -> Result<Self> {
        let radius = diameter_m / 2.0;
        let geom = ProbeGeometry {
            sample_length_m: length_m,
            sample_volume_m3: PI * radius * radius * length_m,
            wavelength_m,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// 60 μm diameter cylinder with equal length, probed on the Cs D2 line.
    pub fn default_cesium() -> Self {
        let scheme = LevelScheme::cesium_d2();
        Self::cylinder(60e-6, 60e-6, scheme.wavelength_m).expect("positive geometry")
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_length_m > 0.0 && self.sample_volume_m3 > 0.0 && self.wavelength_m > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("probe geometry must be strictly positive".into()))
        }
    }

    /// `φ0 = 3 l λ² (2J'+1) / (4π V)`, radians per atom.
    pub fn phi0(&self, excited_j: HalfInt) -> f64 {
        3.0 * self.sample_length_m * self.wavelength_m * self.wavelength_m * f64::from(excited_j.multiplicity())
            / (4.0 * PI * self.sample_volume_m3)
    }
}

/// One probe laser frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeColor {
    /// `(F, F')` transition the detuning refers to.
    pub reference: (HalfInt, HalfInt),
    /// Detuning from the reference transition, MHz (positive = blue).
    pub detuning_mhz: f64,
    /// Polarization component `q` in `{-1, 0, 1}`.
    pub polarization: i8,
    pub photon_number: f64,
    /// Weight sign when colors are combined.
    pub sign: f64,
}

impl ProbeColor {
    pub fn new(reference: (HalfInt, HalfInt), detuning_mhz: f64, photon_number: f64) -> Self {
        ProbeColor {
            reference,
            detuning_mhz,
            polarization: 0,
            photon_number,
            sign: 1.0,
        }
    }

    /// Probe referenced to `F = 4 -> F' = 5`.
    pub fn f4_f5(detuning_mhz: f64, photon_number: f64) -> Self {
        Self::new((HalfInt::int(4), HalfInt::int(5)), detuning_mhz, photon_number)
    }

    /// Probe referenced to `F = 3 -> F' = 2`.
    pub fn f3_f2(detuning_mhz: f64, photon_number: f64) -> Self {
        Self::new((HalfInt::int(3), HalfInt::int(2)), detuning_mhz, photon_number)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1..=1).contains(&self.polarization) {
            return Err(Error::Config(format!("polarization q = {}", self.polarization)));
        }
        if !(self.photon_number >= 0.0) {
            return Err(Error::Config("photon number must be non-negative".into()));
        }
        if self.sign.abs() != 1.0 {
            return Err(Error::Config("color sign must be +1 or -1".into()));
        }
        Ok(())
    }
}

/// Mean atom number in each ground sublevel.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZeemanPopulations {
    counts: BTreeMap<Sublevel, f64>,
}

impl ZeemanPopulations {
    pub fn new() -> Self {
        Self::default()
    }

    /// `n_up` atoms in `(4, 0)` and `n_down` in `(3, 0)`.
    pub fn clock(n_up: f64, n_down: f64) -> Self {
        let mut p = Self::new();
        p.add(Sublevel::CLOCK_UP, n_up);
        p.add(Sublevel::CLOCK_DOWN, n_down);
        p
    }

    pub fn get(&self, level: Sublevel) -> f64 {
        self.counts.get(&level).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, level: Sublevel, n: f64) {
        debug_assert!(n >= 0.0, "negative population {n}");
        self.counts.insert(level, n);
    }

    pub fn add(&mut self, level: Sublevel, n: f64) {
        *self.counts.entry(level).or_insert(0.0) += n;
    }

    pub fn total(&self) -> f64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Sublevel, f64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    pub fn clear(&mut self) {
        self.counts.clear();
    }
}

/// `(γ/2) Δ / (Δ² + (γ/2)²)`.
pub fn dispersive_lineshape(detuning: f64, linewidth: f64) -> f64 {
    let half = linewidth / 2.0;
    half * detuning / (detuning * detuning + half * half)
}

/// Phase per atom in each sublevel for one color, precomputed so repeated
/// evaluations reduce to a dot product.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorResponse {
    per_atom: BTreeMap<Sublevel, f64>,
}

impl ColorResponse {
    pub fn new(color: &ProbeColor, geom: &ProbeGeometry, scheme: &LevelScheme) -> Result<Self> {
        color.validate()?;
        let phi0 = geom.phi0(scheme.excited_j);
        let mut per_atom = BTreeMap::new();
        for level in scheme.sublevels() {
            let mut acc = 0.0;
            for f_exc in scheme.excited_fs() {
                let c = scheme.coupling_coefficient(level.f, level.m, f_exc, color.polarization)?;
                if c.is_zero() {
                    continue;
                }
                let delta = scheme.detuning_mhz(color, level.f, f_exc)?;
                acc += rational_to_f64(&c) * dispersive_lineshape(delta, scheme.linewidth_mhz);
            }
            per_atom.insert(level, phi0 * acc);
        }
        Ok(ColorResponse { per_atom })
    }

    /// Phase shift of one atom in `level`.
    pub fn per_atom(&self, level: Sublevel) -> f64 {
        self.per_atom.get(&level).copied().unwrap_or(0.0)
    }

    pub fn phase(&self, populations: &ZeemanPopulations) -> f64 {
        populations.iter().map(|(level, n)| n * self.per_atom(level)).sum()
    }
}

/// Photon-weighted combination of several colors sharing one interferometer.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiColorResponse {
    parts: Vec<(f64, ColorResponse)>,
}

impl MultiColorResponse {
    pub fn new(colors: &[ProbeColor], geom: &ProbeGeometry, scheme: &LevelScheme) -> Result<Self> {
        let weights = photon_weights(colors);
        let parts = colors
            .iter()
            .zip(weights)
            .map(|(c, w)| Ok((w, ColorResponse::new(c, geom, scheme)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiColorResponse { parts })
    }

    pub fn per_atom(&self, level: Sublevel) -> f64 {
        self.parts.iter().map(|(w, r)| w * r.per_atom(level)).sum()
    }

    pub fn phase(&self, populations: &ZeemanPopulations) -> f64 {
        self.parts.iter().map(|(w, r)| w * r.phase(populations)).sum()
    }
}

/// Photon-number fractions times each color's sign. Colors without photons
/// share equal weight.
fn photon_weights(colors: &[ProbeColor]) -> Vec<f64> {
    let total: f64 = colors.iter().map(|c| c.photon_number).sum();
    colors
        .iter()
        .map(|c| {
            let fraction = if total > 0.0 {
                c.photon_number / total
            } else {
                1.0 / colors.len() as f64
            };
            c.sign * fraction
        })
        .collect()
}

/// Dispersive phase shift of one color through the ensemble, radians.
pub fn phase_shift(
    populations: &ZeemanPopulations,
    color: &ProbeColor,
    geom: &ProbeGeometry,
    scheme: &LevelScheme,
) -> Result<f64> {
    Ok(ColorResponse::new(color, geom, scheme)?.phase(populations))
}

/// The `(4, 0) -> F' = 5` term alone: `C φ0 N_{4,0} L(Δ_{4,5})` with
/// `C = 5/36`.
pub fn phase_shift_f4(n_up: f64, color: &ProbeColor, geom: &ProbeGeometry, scheme: &LevelScheme) -> Result<f64> {
    let f4 = HalfInt::int(4);
    let f5 = HalfInt::int(5);
    let c = scheme.coupling_coefficient(f4, HalfInt::ZERO, f5, color.polarization)?;
    let delta = scheme.detuning_mhz(color, f4, f5)?;
    Ok(geom.phi0(scheme.excited_j) * rational_to_f64(&c) * n_up * dispersive_lineshape(delta, scheme.linewidth_mhz))
}

/// Photon-weighted phase of two simultaneous colors.
pub fn two_color_phase(
    populations: &ZeemanPopulations,
    color_a: &ProbeColor,
    color_b: &ProbeColor,
    geom: &ProbeGeometry,
    scheme: &LevelScheme,
) -> Result<f64> {
    let response = MultiColorResponse::new(&[color_a.clone(), color_b.clone()], geom, scheme)?;
    Ok(response.phase(populations))
}

/// Number of photons in a pulse of power `power_w` lasting `duration_s`.
pub fn photons_from_power(power_w: f64, duration_s: f64, wavelength_m: f64) -> f64 {
    power_w * duration_s * wavelength_m / (PLANCK * SPEED_OF_LIGHT)
}

/// Result of [`solve_balance`].
#[derive(Clone, Debug, PartialEq)]
pub struct BalanceSolution {
    /// Color B detuning from `F = 3 -> F' = 2`, MHz.
    pub detuning_mhz: f64,
    pub color_b: ProbeColor,
    /// Two-color phase for one atom split equally between the clock states.
    pub residual: f64,
    /// Single-color (A) phase for the same population, the residual's scale.
    pub single_color_phase: f64,
}

impl BalanceSolution {
    pub fn relative_residual(&self) -> f64 {
        (self.residual / self.single_color_phase).abs()
    }
}

/// Search window and resolution for [`solve_balance`].
#[derive(Clone, Debug, PartialEq)]
pub struct BalanceSearch {
    pub min_mhz: f64,
    pub max_mhz: f64,
    pub step_mhz: f64,
    /// The root closest to this detuning is returned.
    pub hint_mhz: f64,
}

impl Default for BalanceSearch {
    fn default() -> Self {
        BalanceSearch {
            min_mhz: -2000.0,
            max_mhz: 2000.0,
            step_mhz: 0.25,
            hint_mhz: -135.0,
        }
    }
}

/// Detuning of a second color, referenced to `F = 3 -> F' = 2` and carrying
/// the same photon number as `color_a`, for which equal clock-state
/// populations give zero two-color phase.
pub fn solve_balance(
    color_a: &ProbeColor,
    scheme: &LevelScheme,
    geom: &ProbeGeometry,
    search: &BalanceSearch,
) -> Result<BalanceSolution> {
    let half = ZeemanPopulations::clock(0.5, 0.5);
    let response_a = ColorResponse::new(color_a, geom, scheme)?;
    let phase_a = response_a.phase(&half);
    let color_b_at = |x: f64| {
        let mut c = ProbeColor::f3_f2(x, color_a.photon_number);
        c.polarization = color_a.polarization;
        c
    };
    let objective = |x: f64| -> f64 {
        let b = ColorResponse::new(&color_b_at(x), geom, scheme).expect("validated color");
        let weights = photon_weights(&[color_a.clone(), color_b_at(x)]);
        weights[0] * phase_a + weights[1] * b.phase(&half)
    };
    let root = find_root_nearest(objective, search)?;
    let color_b = color_b_at(root);
    let residual = two_color_phase(&half, color_a, &color_b, geom, scheme)?;
    Ok(BalanceSolution {
        detuning_mhz: root,
        color_b,
        residual,
        single_color_phase: phase_a,
    })
}

/// Scans `search` for sign changes of `f`, refines each by bisection down to
/// floating-point resolution and returns the root closest to the hint.
pub fn find_root_nearest(f: impl Fn(f64) -> f64, search: &BalanceSearch) -> Result<f64> {
    if !(search.step_mhz > 0.0 && search.max_mhz > search.min_mhz) {
        return Err(Error::Config("empty balance search window".into()));
    }
    let n = ((search.max_mhz - search.min_mhz) / search.step_mhz).ceil() as usize;
    let xs: Vec<f64> = (0..=n)
        .map(|k| (search.min_mhz + k as f64 * search.step_mhz).min(search.max_mhz))
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();

    let mut roots = Vec::new();
    for k in 0..n {
        let (x0, x1, y0, y1) = (xs[k], xs[k + 1], ys[k], ys[k + 1]);
        if y0 == 0.0 {
            roots.push(x0);
        } else if y0.signum() != y1.signum() && y1 != 0.0 {
            roots.push(bisect(&f, x0, x1, y0));
        }
    }
    if ys[n] == 0.0 {
        roots.push(xs[n]);
    }

    roots
        .into_iter()
        .min_by(|a, b| (a - search.hint_mhz).abs().total_cmp(&(b - search.hint_mhz).abs()))
        .ok_or_else(|| Error::NoRoot {
            reason: format!("no sign change in [{}, {}] MHz", search.min_mhz, search.max_mhz),
            diagnostic: scan_table(&xs, &ys),
        })
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    // Return whichever end has the smaller residual.
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

fn scan_table(xs: &[f64], ys: &[f64]) -> String {
    let stride = (xs.len() / 20).max(1);
    let mut out = String::from("detuning_mhz, objective\n");
    for k in (0..xs.len()).step_by(stride) {
        let _ = writeln!(out, "{:.3}, {:.6e}", xs[k], ys[k]);
    }
    out
}
