//! Filtered-noise path: per-frame FIR magnitude responses from the control embedding,
//! turned into windowed linear-phase filters and applied to white noise.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner};

use crate::control::ControlEmbedding;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, LayerNormMlp};
use crate::signal::{hann_window, FftConvolver};

/// Maps a network output to a bounded, strictly positive magnitude: `2 σ(x)^ln 10`.
#[inline]
pub fn magnitude_from_logit(x: f32) -> f32 {
    2.0 * sigmoid(x).powf(std::f32::consts::LN_10)
}

/// Per-frame magnitude responses, `num_frames × num_bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterFrameBank {
    magnitudes: Vec<f32>,
    num_bins: usize,
}

impl FilterFrameBank {
    pub fn new(magnitudes: Vec<f32>, num_bins: usize) -> Result<Self> {
        if num_bins < 2 || magnitudes.len() % num_bins != 0 {
            return Err(Error::Schema(format!(
                "{} magnitudes do not form frames of {num_bins} bins",
                magnitudes.len()
            )));
        }
        if magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidInput("magnitudes must be finite and nonnegative".into()));
        }
        Ok(Self {
            magnitudes,
            num_bins,
        })
    }

    /// The same response repeated for `num_frames` frames.
    pub fn repeat(response: &[f32], num_frames: usize) -> Result<Self> {
        Self::new(response.repeat(num_frames), response.len())
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_frames(&self) -> usize {
        self.magnitudes.len() / self.num_bins
    }

    pub fn frame(&self, k: usize) -> &[f32] {
        &self.magnitudes[k * self.num_bins..(k + 1) * self.num_bins]
    }

    pub fn magnitudes(&self) -> &[f32] {
        &self.magnitudes
    }

    /// Number of FIR taps these responses describe.
    pub fn taps(&self) -> usize {
        2 * (self.num_bins - 1)
    }
}

/// Noise MLP followed by [`magnitude_from_logit`].
pub fn noise_mlp_forward(z: &ControlEmbedding, mlp: &LayerNormMlp) -> Result<FilterFrameBank> {
    if z.dim() != mlp.in_dim() {
        return Err(Error::Schema(format!(
            "embedding width {} does not match MLP input {}",
            z.dim(),
            mlp.in_dim()
        )));
    }
    let mut out = mlp.forward_rows(z.values());
    out.iter_mut().for_each(|v| *v = magnitude_from_logit(*v));
    FilterFrameBank::new(out, mlp.out_dim())
}

/// Window-design FIR construction with a cached inverse FFT plan.
pub struct FirDesigner {
    taps: usize,
    inverse: Arc<dyn ComplexToReal<f64>>,
    window: Vec<f64>,
}

impl std::fmt::Debug for FirDesigner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FirDesigner").field("taps", &self.taps).finish()
    }
}

impl FirDesigner {
    pub fn new(taps: usize) -> Result<Self> {
        if taps < 2 || taps % 2 != 0 {
            return Err(Error::InvalidArgument(format!("FIR length {taps} must be even and >= 2")));
        }
        // Hann window of length taps + 1 without its last point: symmetric about taps / 2,
        // which is where the rotated zero-phase response is centred.
        let mut window = hann_window(taps + 1)?;
        window.pop();
        Ok(Self {
            taps,
            inverse: RealFftPlanner::<f64>::new().plan_fft_inverse(taps),
            window,
        })
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    /// Inverse real DFT of a zero-phase magnitude response, rotated by `taps / 2`
    /// into causal linear-phase form, then Hann-windowed.
    pub fn design(&self, magnitude: &[f32]) -> Result<Vec<f32>> {
        let bins = self.taps / 2 + 1;
        if magnitude.len() != bins {
            return Err(Error::InvalidArgument(format!(
                "magnitude response has {} bins, expected {bins}",
                magnitude.len()
            )));
        }
        let mut spectrum = self.inverse.make_input_vec();
        for (s, &m) in spectrum.iter_mut().zip(magnitude) {
            s.re = m as f64;
            s.im = 0.0;
        }
        let mut zero_phase = self.inverse.make_output_vec();
        self.inverse
            .process(&mut spectrum, &mut zero_phase)
            .expect("planned sizes");
        let half = self.taps / 2;
        let scale = 1.0 / self.taps as f64;
        Ok((0..self.taps)
            .map(|n| (zero_phase[(n + half) % self.taps] * scale * self.window[n]) as f32)
            .collect())
    }
}

/// Designs one filter; see [`FirDesigner::design`].
pub fn design_fir(magnitude: &[f32]) -> Result<Vec<f32>> {
    if magnitude.len() < 2 {
        return Err(Error::InvalidArgument("magnitude response needs at least 2 bins".into()));
    }
    FirDesigner::new(2 * (magnitude.len() - 1))?.design(magnitude)
}

/// Sample `index` of the white noise stream for `seed`, uniform on `[-1, 1)`.
///
/// A SplitMix64 hash of `seed + (index + 1) * golden_gamma`, top 24 bits scaled to
/// `[0, 1)` then mapped affinely. Counter-based, so any sample is addressable and the
/// sequence is easy to reproduce outside Rust.
pub fn white_noise_sample(seed: u64, index: u64) -> f32 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 40) as f32 * (2.0 / (1u64 << 24) as f32) - 1.0
}

/// Streaming state of the noise path.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseState {
    seed: u64,
    counter: u64,
    tail: Vec<f32>,
}

impl NoiseState {
    pub fn new(seed: u64, taps: usize) -> Self {
        Self {
            seed,
            counter: 0,
            tail: vec![0.0; taps.saturating_sub(1)],
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Noise samples drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn tail(&self) -> &[f32] {
        &self.tail
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.seed, self.tail.len() + 1);
    }
}

/// Renders filtered noise: each frame filters `hop` fresh uniform samples in `[-1, 1]`
/// with that frame's FIR, overlap-adding the convolution tail into later output.
#[derive(Debug)]
pub struct NoiseSynth {
    designer: FirDesigner,
    convolver: FftConvolver,
    hop: usize,
}

impl NoiseSynth {
    pub fn new(taps: usize, hop: usize) -> Result<Self> {
        if hop == 0 {
            return Err(Error::InvalidArgument("hop must be positive".into()));
        }
        Ok(Self {
            designer: FirDesigner::new(taps)?,
            convolver: FftConvolver::new(hop, taps),
            hop,
        })
    }

    pub fn taps(&self) -> usize {
        self.designer.taps()
    }

    pub fn render(&self, bank: &FilterFrameBank, state: &mut NoiseState) -> Result<Vec<f32>> {
        let taps = self.taps();
        if bank.taps() != taps {
            return Err(Error::Schema(format!(
                "filter bank describes {} taps, synth expects {taps}",
                bank.taps()
            )));
        }
        if state.tail.len() != taps - 1 {
            return Err(Error::Schema("noise state tail does not match filter length".into()));
        }
        let hop = self.hop;
        let mut out = Vec::with_capacity(bank.num_frames() * hop);
        let mut noise = vec![0.0f32; hop];
        let mut conv = vec![0.0f64; hop + taps - 1];
        let mut acc = vec![0.0f64; hop + taps - 1];
        for k in 0..bank.num_frames() {
            for v in noise.iter_mut() {
                *v = white_noise_sample(state.seed, state.counter);
                state.counter += 1;
            }
            let ir = self.designer.design(bank.frame(k))?;
            self.convolver.convolve_into(&noise, &ir, &mut conv)?;
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (a, t) in acc.iter_mut().zip(&state.tail) {
                *a = *t as f64;
            }
            for (a, c) in acc.iter_mut().zip(&conv) {
                *a += c;
            }
            out.extend(acc[..hop].iter().map(|&v| v as f32));
            for (t, a) in state.tail.iter_mut().zip(&acc[hop..]) {
                *t = *a as f32;
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`NoiseSynth::render`].
pub fn render_noise(bank: &FilterFrameBank, hop: usize, state: &mut NoiseState) -> Result<Vec<f32>> {
    NoiseSynth::new(bank.taps(), hop)?.render(bank, state)
}
