//! Multi-resolution STFT distance and spectral peak analysis.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal::{stft_magnitude, AudioBuffer, Spectrogram};

/// Floor applied to magnitudes before taking logs.
pub const LOG_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct MrStftConfig {
    pub window_lengths: Vec<usize>,
    pub epsilon: f64,
}

impl Default for MrStftConfig {
    fn default() -> Self {
        Self {
            window_lengths: vec![512, 1024, 2048],
            epsilon: LOG_EPSILON,
        }
    }
}

impl MrStftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_lengths.is_empty()
            || self.window_lengths.iter().any(|m| !m.is_power_of_two() || *m < 4)
            || self.window_lengths.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidArgument(format!(
                "window lengths {:?} must be sorted distinct powers of two",
                self.window_lengths
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Analysis hop for window `m`: 75% overlap.
pub fn hop_for(window: usize) -> usize {
    window / 4
}

fn spectra(x: &AudioBuffer, y: &AudioBuffer, m: usize) -> Result<(Spectrogram, Spectrogram)> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "signals differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    Ok((stft_magnitude(x, m, hop_for(m))?, stft_magnitude(y, m, hop_for(m))?))
}

fn sc_from(sx: &Spectrogram, sy: &Spectrogram) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in sx.magnitudes().iter().zip(sy.magnitudes()) {
        num += (a - b) * (a - b);
        den += a * a;
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric(
            "spectral convergence is undefined for a silent reference".into(),
        ));
    }
    Ok(num.sqrt() / den.sqrt())
}

fn lm_from(sx: &Spectrogram, sy: &Spectrogram, m: usize, eps: f64) -> f64 {
    let sum: f64 = sx
        .magnitudes()
        .iter()
        .zip(sy.magnitudes())
        .map(|(a, b)| (a.max(eps).ln() - b.max(eps).ln()).abs())
        .sum();
    sum / m as f64
}

/// `‖|X| - |X̂|‖_F / ‖|X|‖_F` at window length `m`.
pub fn spectral_convergence(x: &AudioBuffer, x_hat: &AudioBuffer, m: usize) -> Result<f64> {
    let (sx, sy) = spectra(x, x_hat, m)?;
    sc_from(&sx, &sy)
}

/// `(1/m) ‖log|X| - log|X̂|‖_1` at window length `m`, magnitudes floored at `epsilon`.
pub fn log_magnitude_distance(x: &AudioBuffer, x_hat: &AudioBuffer, m: usize, epsilon: f64) -> Result<f64> {
    let (sx, sy) = spectra(x, x_hat, m)?;
    Ok(lm_from(&sx, &sy, m, epsilon))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleLoss {
    pub window: usize,
    pub spectral_convergence: f64,
    pub log_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrStftReport {
    pub scales: Vec<ScaleLoss>,
    /// Mean over scales of `spectral_convergence + log_magnitude`.
    pub total: f64,
}

/// Per-scale terms and their mean.
pub fn mr_stft_report(x: &AudioBuffer, x_hat: &AudioBuffer, cfg: &MrStftConfig) -> Result<MrStftReport> {
    cfg.validate()?;
    let mut scales = Vec::with_capacity(cfg.window_lengths.len());
    for &m in &cfg.window_lengths {
        let (sx, sy) = spectra(x, x_hat, m)?;
        scales.push(ScaleLoss {
            window: m,
            spectral_convergence: sc_from(&sx, &sy)?,
            log_magnitude: lm_from(&sx, &sy, m, cfg.epsilon),
        });
    }
    let total = scales
        .iter()
        .map(|s| s.spectral_convergence + s.log_magnitude)
        .sum::<f64>()
        / scales.len() as f64;
    Ok(MrStftReport { scales, total })
}

pub fn mr_stft_loss(x: &AudioBuffer, x_hat: &AudioBuffer, cfg: &MrStftConfig) -> Result<f64> {
    Ok(mr_stft_report(x, x_hat, cfg)?.total)
}

/// Relative level, in dB below the strongest harmonic, at which a harmonic counts as present.
pub const PEAK_THRESHOLD_DB: f64 = -40.0;

/// Peak magnitude near each harmonic `k * f0` below Nyquist, from the mean spectrum.
///
/// Uses the largest power-of-two window (up to 8192) that fits the signal.
pub fn harmonic_levels(x: &AudioBuffer, f0: f64, max_k: usize) -> Result<Vec<(usize, f64)>> {
    if !(f0 > 0.0) {
        return Err(Error::InvalidArgument("f0 must be positive".into()));
    }
    if x.len() < 64 {
        return Err(Error::EmptySpectrogram("signal too short for peak analysis".into()));
    }
    let mut m = 8192;
    while m > x.len() {
        m /= 2;
    }
    let spec = stft_magnitude(x, m, m / 4)?.mean_spectrum();
    let sr = x.sample_rate() as f64;
    let bin_hz = sr / m as f64;
    let nyquist = sr / 2.0;
    // search radius: the Hann main lobe, but never past half the harmonic spacing
    let radius = 2usize.min(((f0 / bin_hz) / 2.0).floor().max(0.0) as usize);
    Ok((1..=max_k)
        .take_while(|&k| k as f64 * f0 < nyquist)
        .map(|k| {
            let centre = (k as f64 * f0 / bin_hz).round() as usize;
            let lo = centre.saturating_sub(radius);
            let hi = (centre + radius).min(spec.len() - 1);
            let peak = spec[lo..=hi].iter().cloned().fold(0.0, f64::max);
            (k, peak)
        })
        .collect())
}

/// Harmonic indices within [`PEAK_THRESHOLD_DB`] of the strongest harmonic.
pub fn harmonic_peak_set(x: &AudioBuffer, f0: f64, max_k: usize) -> Result<BTreeSet<usize>> {
    let levels = harmonic_levels(x, f0, max_k)?;
    let max = levels.iter().map(|(_, l)| *l).fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(BTreeSet::new());
    }
    let floor = max * 10f64.powf(PEAK_THRESHOLD_DB / 20.0);
    Ok(levels.into_iter().filter(|(_, l)| *l > floor).map(|(k, _)| k).collect())
}
