//! Interferometric phase readout, the projection-noise scan and its variance
//! decomposition, and Rabi-trace experiments with damped-sine fits.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cesium_model::{LevelScheme, MultiColorResponse, ProbeColor, ProbeGeometry, Sublevel, ZeemanPopulations};
use crate::dynamics::{run_schedule, DynamicsModels, PhaseReadout, Schedule, TimeSeries};
use crate::ensemble::{prepare, sample_css, PreparationConfig};
use crate::error::{Error, Result};
use crate::fit::{fit_damped_sine, weighted_least_squares, DampedSineFit, WlsFit};
use crate::rng::stream;

/// Relative-amplitude and relative-phase fluctuations of two independent
/// probe lasers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassicalNoise {
    pub relative_amplitude_rms: f64,
    /// rad.
    pub relative_phase_rms: f64,
}

impl ClassicalNoise {
    pub fn is_off(&self) -> bool {
        self.relative_amplitude_rms == 0.0 && self.relative_phase_rms == 0.0
    }

    /// Phase error for a single-color atomic phase `single_phase`: an
    /// amplitude term linear in the imbalance and a phase term from the
    /// reduced overlap `cos θ` of the two probes.
    pub fn jitter<R: Rng + ?Sized>(&self, single_phase: f64, rng: &mut R) -> f64 {
        let mut out = 0.0;
        if self.relative_amplitude_rms > 0.0 {
            let g: f64 = rng.sample(StandardNormal);
            out += self.relative_amplitude_rms * single_phase * g;
        }
        if self.relative_phase_rms > 0.0 {
            let g: f64 = rng.sample(StandardNormal);
            let theta = self.relative_phase_rms * g;
            out += single_phase * (1.0 - theta.cos());
        }
        out
    }
}

/// Mach-Zehnder readout model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterferometerModel {
    pub shot_noise_enabled: bool,
    /// rad².
    pub electronic_noise_variance: f64,
    /// Fringe visibility; shot-noise variance is `1 / (n V²)`.
    pub visibility: f64,
    pub classical_two_color: ClassicalNoise,
}

impl Default for InterferometerModel {
    fn default() -> Self {
        InterferometerModel {
            shot_noise_enabled: true,
            electronic_noise_variance: 0.0,
            visibility: 1.0,
            classical_two_color: ClassicalNoise::default(),
        }
    }
}

impl InterferometerModel {
    pub fn noiseless() -> Self {
        InterferometerModel {
            shot_noise_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.classical_two_color;
        if !(self.electronic_noise_variance >= 0.0 && c.relative_amplitude_rms >= 0.0 && c.relative_phase_rms >= 0.0) {
            return Err(Error::Config("noise strengths must be non-negative".into()));
        }
        if !(self.visibility > 0.0 && self.visibility <= 1.0) {
            return Err(Error::Config("visibility must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Readout variance for `n_photons`, rad².
    pub fn readout_variance(&self, n_photons: f64) -> f64 {
        let shot = if self.shot_noise_enabled {
            1.0 / (n_photons * self.visibility * self.visibility)
        } else {
            0.0
        };
        shot + self.electronic_noise_variance
    }
}

/// Measured interferometer phase: the true phase plus shot and electronic
/// noise.
pub fn measure_phase<R: Rng + ?Sized>(
    true_phase: f64,
    n_photons: f64,
    model: &InterferometerModel,
    rng: &mut R,
) -> Result<f64> {
    if !(n_photons > 0.0) {
        return Err(Error::Domain(format!("cannot measure with {n_photons} photons")));
    }
    let mut phase = true_phase;
    if model.shot_noise_enabled {
        let sd = 1.0 / (n_photons.sqrt() * model.visibility);
        let g: f64 = rng.sample(StandardNormal);
        phase += sd * g;
    }
    if model.electronic_noise_variance > 0.0 {
        let g: f64 = rng.sample(StandardNormal);
        phase += model.electronic_noise_variance.sqrt() * g;
    }
    Ok(phase)
}

/// One probe pulse as recorded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseRecord {
    pub time_s: f64,
    pub true_phase: f64,
    pub measured_phase: Option<f64>,
    pub photon_number: f64,
    pub n_up: f64,
    pub n_down: f64,
}

/// Shot-noise readout for schedule runs.
pub struct InterferometerReadout<R> {
    pub model: InterferometerModel,
    pub rng: R,
}

impl<R: Rng> PhaseReadout for InterferometerReadout<R> {
    fn read(&mut self, true_phase: f64, photon_number: f64) -> Result<Option<f64>> {
        if photon_number <= 0.0 {
            return Ok(None);
        }
        measure_phase(true_phase, photon_number, &self.model, &mut self.rng).map(Some)
    }
}

/// Inputs of the projection-noise scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseScanConfig {
    /// Coherent atoms on the equator at each scan point.
    pub atom_numbers: Vec<u64>,
    pub reps: usize,
    /// F = 4 color; its single-color pole phase is the scan's x-axis.
    pub color_a: ProbeColor,
    pub color_b: ProbeColor,
}

impl NoiseScanConfig {
    pub fn photon_number(&self) -> f64 {
        self.color_a.photon_number + self.color_b.photon_number
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisePoint {
    pub n_atoms: u64,
    /// Color-A phase with all atoms in `(4, 0)`.
    pub pole_phase: f64,
    pub samples: Vec<f64>,
}

impl NoisePoint {
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let n = self.samples.len() as f64;
        self.samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    /// Normal-theory standard error of the variance, `σ² √(2/(n-1))`.
    pub fn variance_err(&self) -> f64 {
        self.variance() * (2.0 / (self.samples.len() as f64 - 1.0)).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseScan {
    pub points: Vec<NoisePoint>,
    pub photon_number: f64,
}

/// Monte Carlo of the two-color measurement on equatorial coherent spin
/// states. Each replicate draws `N_up` binomially, evaluates the two-color
/// phase, adds classical two-color jitter proportional to the single-color
/// pole phase and reads out through the interferometer.
///
/// Refuses with [`Error::Refused`] when equal populations leave a two-color
/// phase of 1% or more of the pole phase.
pub fn run_projection_noise_scan(
    cfg: &NoiseScanConfig,
    model: &InterferometerModel,
    scheme: &LevelScheme,
    geom: &ProbeGeometry,
    master_seed: u64,
) -> Result<NoiseScan> {
    model.validate()?;
    if cfg.reps < 2 {
        return Err(Error::Config("noise scan needs at least two repetitions".into()));
    }
    let photons = cfg.photon_number();
    if !(photons > 0.0) {
        return Err(Error::Config("noise scan needs probe photons".into()));
    }
    let two_color = MultiColorResponse::new(&[cfg.color_a.clone(), cfg.color_b.clone()], geom, scheme)?;
    let single = MultiColorResponse::new(std::slice::from_ref(&cfg.color_a), geom, scheme)?;
    let pole_per_atom = single.per_atom(Sublevel::CLOCK_UP);
    let equal = two_color.phase(&ZeemanPopulations::clock(0.5, 0.5));
    if pole_per_atom == 0.0 || (equal / pole_per_atom).abs() >= 0.01 {
        return Err(Error::Refused(format!(
            "colors are unbalanced: equal populations give {:.4e} rad per atom against a pole phase of {:.4e} rad per atom ({:.2}%)",
            equal,
            pole_per_atom,
            100.0 * (equal / pole_per_atom).abs()
        )));
    }
    let k_up = two_color.per_atom(Sublevel::CLOCK_UP);
    let k_down = two_color.per_atom(Sublevel::CLOCK_DOWN);

    let points = cfg
        .atom_numbers
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let pole_phase = pole_per_atom * n as f64;
            let samples = (0..cfg.reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = stream(master_seed, "noise-scan", &[i as u64, rep as u64]);
                    let n_up = sample_css(n, &mut rng) as f64;
                    let phase = k_up * n_up + k_down * (n as f64 - n_up);
                    let jitter = model.classical_two_color.jitter(pole_phase, &mut rng);
                    measure_phase(phase + jitter, photons, model, &mut rng)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(NoisePoint {
                n_atoms: n,
                pole_phase,
                samples,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseScan {
        points,
        photon_number: photons,
    })
}

/// `variance = a + b φ̄ + c φ̄²` fitted to a noise scan.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDecomposition {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub a_err: f64,
    pub b_err: f64,
    pub c_err: f64,
    pub r_squared: f64,
    /// `b` is negative by more than two standard errors.
    pub negative_b: bool,
}

/// Design matrix, responses and weights of a variance fit.
type VarianceFitInputs = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>);

fn scan_design(scan: &NoiseScan, order: usize) -> Result<VarianceFitInputs> {
    let mut distinct: Vec<u64> = scan.points.iter().map(|p| p.n_atoms).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < order + 2 {
        return Err(Error::Fit(format!(
            "{} distinct atom numbers; need at least {}",
            distinct.len(),
            order + 2
        )));
    }
    let design = scan
        .points
        .iter()
        .map(|p| (0..=order).map(|k| p.pole_phase.powi(k as i32)).collect())
        .collect();
    let y = scan.points.iter().map(NoisePoint::variance).collect();
    let w = scan
        .points
        .iter()
        .map(|p| {
            let v = p.variance();
            (p.samples.len() as f64 - 1.0) / (2.0 * v * v)
        })
        .collect();
    Ok((design, y, w))
}

/// Weighted least squares of the sample variance on `{1, φ̄, φ̄²}` with
/// weights `(reps - 1) / (2 σ⁴)`.
pub fn decompose_noise(scan: &NoiseScan) -> Result<NoiseDecomposition> {
    let (design, y, w) = scan_design(scan, 2)?;
    let fit = weighted_least_squares(&design, &y, &w)?;
    let b_err = fit.std_error(1);
    Ok(NoiseDecomposition {
        a: fit.coefficients[0],
        b: fit.coefficients[1],
        c: fit.coefficients[2],
        a_err: fit.std_error(0),
        b_err,
        c_err: fit.std_error(2),
        r_squared: fit.r_squared,
        negative_b: fit.coefficients[1] < -2.0 * b_err,
    })
}

/// Straight-line version of [`decompose_noise`].
pub fn fit_noise_linear(scan: &NoiseScan) -> Result<WlsFit> {
    let (design, y, w) = scan_design(scan, 1)?;
    weighted_least_squares(&design, &y, &w)
}

/// A complete Rabi-trace experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct RabiExperiment {
    pub preparation: PreparationConfig,
    pub schedule: Schedule,
    pub models: DynamicsModels,
    pub interferometer: InterferometerModel,
    pub sample_interval: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RabiRun {
    pub series: TimeSeries,
    pub fit: Option<DampedSineFit>,
    pub fit_failed: bool,
}

impl RabiRun {
    /// Measured phases where recorded, else true phases.
    pub fn trace(&self) -> (Vec<f64>, Vec<f64>) {
        self.series
            .probes
            .iter()
            .map(|p| (p.time_s, p.measured_phase.unwrap_or(p.true_phase)))
            .unzip()
    }
}

/// Runs one replicate of `exp` and fits a damped sinusoid to its probe
/// phases. A fit that fails or does not converge is flagged, not an error.
pub fn run_rabi_experiment(exp: &RabiExperiment, master_seed: u64, replicate: u64) -> Result<RabiRun> {
    let mut run = run_rabi_unfitted(exp, master_seed, replicate)?;
    let (t, y) = run.trace();
    if let Ok(fit) = fit_damped_sine(&t, &y) {
        run.fit_failed = !fit.converged;
        run.fit = Some(fit);
    }
    Ok(run)
}

fn run_rabi_unfitted(exp: &RabiExperiment, master_seed: u64, replicate: u64) -> Result<RabiRun> {
    exp.interferometer.validate()?;
    let mut state = prepare(&exp.preparation)?;
    let mut readout = InterferometerReadout {
        model: exp.interferometer,
        rng: stream(master_seed, "rabi-readout", &[replicate]),
    };
    let series = run_schedule(
        &mut state,
        &exp.schedule,
        &exp.models,
        &mut readout,
        exp.sample_interval,
    )?;
    Ok(RabiRun {
        series,
        fit: None,
        fit_failed: true,
    })
}

/// Runs `replicates` seeds in parallel, in replicate order, without
/// per-replicate fits; fit the average instead.
pub fn run_rabi_replicates(exp: &RabiExperiment, master_seed: u64, replicates: u64) -> Result<Vec<RabiRun>> {
    (0..replicates)
        .into_par_iter()
        .map(|r| run_rabi_unfitted(exp, master_seed, r))
        .collect()
}

/// Pulse-by-pulse mean of several traces recorded on the same schedule.
pub fn average_traces(runs: &[RabiRun]) -> Result<Vec<PulseRecord>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Config("no traces to average".into()))?;
    let len = first.series.probes.len();
    if runs.iter().any(|r| r.series.probes.len() != len) {
        return Err(Error::Config("traces differ in length".into()));
    }
    let m = runs.len() as f64;
    Ok((0..len)
        .map(|k| {
            let mut rec = first.series.probes[k];
            rec.true_phase = runs.iter().map(|r| r.series.probes[k].true_phase).sum::<f64>() / m;
            rec.measured_phase = runs
                .iter()
                .map(|r| r.series.probes[k].measured_phase)
                .sum::<Option<f64>>()
                .map(|s| s / m);
            rec.n_up = runs.iter().map(|r| r.series.probes[k].n_up).sum::<f64>() / m;
            rec.n_down = runs.iter().map(|r| r.series.probes[k].n_down).sum::<f64>() / m;
            rec
        })
        .collect())
}

/// Draws `count` empty-interferometer measurements and returns their
/// sample variance.
pub fn empty_interferometer_variance<R: Rng + ?Sized>(
    n_photons: f64,
    count: usize,
    model: &InterferometerModel,
    rng: &mut R,
) -> Result<f64> {
    let draws = (0..count)
        .map(|_| measure_phase(0.0, n_photons, model, rng))
        .collect::<Result<Vec<f64>>>()?;
    let mean = draws.iter().sum::<f64>() / count as f64;
    Ok(draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count as f64 - 1.0))
}

#[derive(Serialize)]
struct TraceRow {
    t_s: f64,
    true_phase_rad: f64,
    measured_phase_rad: Option<f64>,
}

pub fn write_rabi_trace<W: Write>(out: W, records: &[PulseRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(TraceRow {
            t_s: r.time_s,
            true_phase_rad: r.true_phase,
            measured_phase_rad: r.measured_phase,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ScanRow {
    pole_phase_rad: f64,
    n_atoms: u64,
    variance_rad2: f64,
    variance_err_rad2: f64,
}

pub fn write_noise_scan<W: Write>(out: W, scan: &NoiseScan) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &scan.points {
        w.serialize(ScanRow {
            pole_phase_rad: p.pole_phase,
            n_atoms: p.n_atoms,
            variance_rad2: p.variance(),
            variance_err_rad2: p.variance_err(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rabi_trace_file(path: &Path, records: &[PulseRecord]) -> Result<()> {
    write_rabi_trace(std::fs::File::create(path)?, records)
}

pub fn write_noise_scan_file(path: &Path, scan: &NoiseScan) -> Result<()> {
    write_noise_scan(std::fs::File::create(path)?, scan)
}
