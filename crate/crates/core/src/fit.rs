//! Least-squares fitting: weighted linear regression and a damped-sinusoid
//! Levenberg-Marquardt fit.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Result of a weighted linear least-squares fit.
#[derive(Clone, Debug, PartialEq)]
pub struct WlsFit {
    pub coefficients: Vec<f64>,
    /// `(Xᵀ W X)⁻¹`; weights are taken as inverse variances.
    pub covariance: Vec<Vec<f64>>,
    pub chi_squared: f64,
    /// Weighted coefficient of determination.
    pub r_squared: f64,
}

impl WlsFit {
    pub fn std_error(&self, k: usize) -> f64 {
        self.covariance[k][k].sqrt()
    }
}

/// Minimises `Σ w_i (y_i - Σ_k c_k x_ik)²`. Each row of `design` holds the
/// regressors of one observation.
pub fn weighted_least_squares(design: &[Vec<f64>], y: &[f64], weights: &[f64]) -> Result<WlsFit> {
    let n = y.len();
    if design.len() != n || weights.len() != n {
        return Err(Error::Fit("design, data and weights differ in length".into()));
    }
    let p = design.first().map_or(0, Vec::len);
    if p == 0 || n < p {
        return Err(Error::Fit(format!("{n} observations for {p} parameters")));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Fit("weights must be positive and finite".into()));
    }

    let x = DMatrix::from_fn(n, p, |i, k| design[i][k]);
    let w = DVector::from_column_slice(weights);
    let yv = DVector::from_column_slice(y);

    // Scale columns to unit norm for conditioning, undo afterwards.
    let scales: Vec<f64> = (0..p)
        .map(|k| {
            let s = x.column(k).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let xs = DMatrix::from_fn(n, p, |i, k| x[(i, k)] / scales[k]);
    let xtw = DMatrix::from_fn(p, n, |k, i| xs[(i, k)] * w[i]);
    let normal = &xtw * &xs;
    let rhs = &xtw * &yv;
    let inv = normal
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular normal equations".into()))?;
    let beta_s = &inv * rhs;

    let coefficients: Vec<f64> = (0..p).map(|k| beta_s[k] / scales[k]).collect();
    let covariance: Vec<Vec<f64>> = (0..p)
        .map(|a| (0..p).map(|b| inv[(a, b)] / (scales[a] * scales[b])).collect())
        .collect();

    let fitted: Vec<f64> = design
        .iter()
        .map(|row| row.iter().zip(&coefficients).map(|(x, c)| x * c).sum())
        .collect();
    let chi_squared: f64 = (0..n).map(|i| weights[i] * (y[i] - fitted[i]).powi(2)).sum();
    let w_sum: f64 = weights.iter().sum();
    let y_bar: f64 = (0..n).map(|i| weights[i] * y[i]).sum::<f64>() / w_sum;
    let ss_tot: f64 = (0..n).map(|i| weights[i] * (y[i] - y_bar).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - chi_squared / ss_tot } else { 1.0 };

    Ok(WlsFit {
        coefficients,
        covariance,
        chi_squared,
        r_squared,
    })
}

/// `A e^{-Γ s} cos(2π f s + θ) + B + D s` with `s = t - t_ref`. The linear
/// baseline `D` absorbs slow drifts such as atom loss; `D = 0` is the plain
/// damped sinusoid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DampedSine {
    pub amplitude: f64,
    pub decay_rate: f64,
    pub frequency_hz: f64,
    pub phase: f64,
    pub offset: f64,
    pub drift: f64,
    pub t_ref: f64,
}

impl DampedSine {
    pub fn eval(&self, t: f64) -> f64 {
        let s = t - self.t_ref;
        self.amplitude * (-self.decay_rate * s).exp() * (TAU * self.frequency_hz * s + self.phase).cos()
            + self.offset
            + self.drift * s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DampedSineFit {
    pub model: DampedSine,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits a damped sinusoid, seeding the frequency from a periodogram peak.
pub fn fit_damped_sine(t: &[f64], y: &[f64]) -> Result<DampedSineFit> {
    let f0 = periodogram_peak(t, y)?;
    fit_damped_sine_from(t, y, f0)
}

/// Fits a damped sinusoid starting from frequency `f0_hz`.
pub fn fit_damped_sine_from(t: &[f64], y: &[f64], f0_hz: f64) -> Result<DampedSineFit> {
    if t.len() != y.len() {
        return Err(Error::Fit("time and data lengths differ".into()));
    }
    if t.len() < 6 {
        return Err(Error::Fit("need at least six samples".into()));
    }
    let t_ref = t[0];
    let s: Vec<f64> = t.iter().map(|x| x - t_ref).collect();

    // Linear seed for amplitude, phase and offset at fixed frequency.
    let omega0 = TAU * f0_hz;
    let (a0, b0, c0) = linear_sine(&s, y, omega0)?;
    // Parameters: [a, b, Γ, ω, B, D] with model
    // e^{-Γs}(a cos ωs + b sin ωs) + B + D s.
    let mut p = [a0, b0, 0.0, omega0, c0, 0.0];
    let mut cost = sse(&s, y, &p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..500 {
        iterations = it + 1;
        let (jtj, jtr) = normal_equations(&s, y, &p);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..NP {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(delta) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: [f64; NP] = std::array::from_fn(|k| p[k] + delta[k]);
            let trial_cost = sse(&s, y, &trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                let rel = (cost - trial_cost) / cost.max(1e-300);
                let step = (0..NP)
                    .map(|k| (delta[k] / p[k].abs().max(1e-12)).abs())
                    .fold(0.0, f64::max);
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-12 || step < 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // No downhill step at any damping: a stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }

    if !p.iter().all(|x| x.is_finite()) {
        return Err(Error::Fit("non-finite parameters".into()));
    }
    let [a, b, gamma, omega, offset, drift] = p;
    // a cos ωs + b sin ωs = A cos(ωs + θ) with A cos θ = a, A sin θ = -b.
    let mut amplitude = a.hypot(b);
    let mut phase = (-b).atan2(a);
    let mut omega = omega;
    if omega < 0.0 {
        omega = -omega;
        phase = -phase;
    }
    if amplitude == 0.0 {
        phase = 0.0;
        amplitude = 0.0;
    }
    let model = DampedSine {
        amplitude,
        decay_rate: gamma,
        frequency_hz: omega / TAU,
        phase,
        offset,
        drift,
        t_ref,
    };
    let residual_rms = (cost / t.len() as f64).sqrt();
    Ok(DampedSineFit {
        model,
        residual_rms,
        iterations,
        converged,
    })
}

const NP: usize = 6;

fn model_terms(s: f64, p: &[f64; NP]) -> (f64, f64, f64, f64) {
    let env = (-p[2] * s).exp();
    let (sin, cos) = (p[3] * s).sin_cos();
    (env, cos, sin, env * (p[0] * cos + p[1] * sin) + p[4] + p[5] * s)
}

fn sse(s: &[f64], y: &[f64], p: &[f64; NP]) -> f64 {
    s.iter()
        .zip(y)
        .map(|(&si, &yi)| (model_terms(si, p).3 - yi).powi(2))
        .sum()
}

fn normal_equations(s: &[f64], y: &[f64], p: &[f64; NP]) -> (DMatrix<f64>, DVector<f64>) {
    let mut jtj = DMatrix::zeros(NP, NP);
    let mut jtr = DVector::zeros(NP);
    for (&si, &yi) in s.iter().zip(y) {
        let (env, cos, sin, value) = model_terms(si, p);
        let osc = p[0] * cos + p[1] * sin;
        let grad = [
            env * cos,
            env * sin,
            -si * env * osc,
            env * si * (-p[0] * sin + p[1] * cos),
            1.0,
            si,
        ];
        let r = value - yi;
        for a in 0..NP {
            jtr[a] += grad[a] * r;
            for b in 0..NP {
                jtj[(a, b)] += grad[a] * grad[b];
            }
        }
    }
    (jtj, jtr)
}

/// Least-squares `a cos ωs + b sin ωs + c`.
fn linear_sine(s: &[f64], y: &[f64], omega: f64) -> Result<(f64, f64, f64)> {
    let design: Vec<Vec<f64>> = s
        .iter()
        .map(|&si| {
            let (sin, cos) = (omega * si).sin_cos();
            vec![cos, sin, 1.0]
        })
        .collect();
    let ones = vec![1.0; s.len()];
    let fit = weighted_least_squares(&design, y, &ones)?;
    Ok((fit.coefficients[0], fit.coefficients[1], fit.coefficients[2]))
}

/// Frequency of the largest peak of the classical periodogram of the
/// linearly detrended data, scanned up to the mean-sampling Nyquist frequency.
pub fn periodogram_peak(t: &[f64], y: &[f64]) -> Result<f64> {
    let n = t.len();
    if n < 4 || y.len() != n {
        return Err(Error::Fit("periodogram needs at least four samples".into()));
    }
    let span = t[n - 1] - t[0];
    if !(span > 0.0) {
        return Err(Error::Fit("samples span zero time".into()));
    }
    let nyquist = 0.5 * (n - 1) as f64 / span;
    let df = 1.0 / (8.0 * span);
    let f_start = 0.5 / span;
    let steps = ((nyquist - f_start) / df).floor() as usize + 1;
    // Remove a straight-line trend so slow drifts do not masquerade as the
    // lowest-frequency peak.
    let design: Vec<Vec<f64>> = t.iter().map(|&ti| vec![1.0, ti - t[0]]).collect();
    let trend = weighted_least_squares(&design, y, &vec![1.0; n])?.coefficients;
    let detrended: Vec<f64> = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| yi - trend[0] - trend[1] * (ti - t[0]))
        .collect();

    // Accumulate Σ (y - ȳ) e^{i 2π f_k s} over the frequency grid, stepping
    // each sample's phasor by e^{i 2π df s} instead of calling sin/cos.
    let mut re = vec![0.0; steps];
    let mut im = vec![0.0; steps];
    for (&ti, &amp) in t.iter().zip(&detrended) {
        let s = ti - t[0];
        let (mut ps, mut pc) = (TAU * f_start * s).sin_cos();
        let (ds, dc) = (TAU * df * s).sin_cos();
        for k in 0..steps {
            re[k] += amp * pc;
            im[k] += amp * ps;
            let next_c = pc * dc - ps * ds;
            ps = ps * dc + pc * ds;
            pc = next_c;
        }
    }
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..steps {
        let power = re[k] * re[k] + im[k] * im[k];
        if power > best.1 {
            best = (f_start + k as f64 * df, power);
        }
    }
    if best.1 <= 0.0 {
        return Err(Error::Fit("flat periodogram".into()));
    }
    Ok(best.0)
}
