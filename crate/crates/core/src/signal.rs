//! Signal containers and the DSP primitives shared by every synthesis stage.

use std::f64::consts::PI;
use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silent(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f32) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate,
        )
    }
}

/// Frame-rate data: `num_frames` rows of `channels` values, one row per hop.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    values: Vec<f32>,
    channels: usize,
    hop_size: usize,
    sample_rate: u32,
}

impl FrameSeries {
    /// `values` is row-major (`num_frames × channels`).
    pub fn new(values: Vec<f32>, channels: usize, hop_size: usize, sample_rate: u32) -> Result<Self> {
        if channels == 0 || hop_size == 0 || sample_rate == 0 {
            return Err(Error::InvalidArgument(
                "channels, hop size and sample rate must be positive".into(),
            ));
        }
        if values.len() % channels != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not divide into {channels} channels",
                values.len()
            )));
        }
        Ok(Self {
            values,
            channels,
            hop_size,
            sample_rate,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn hop_size(&self) -> usize {
        self.hop_size
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, k: usize) -> &[f32] {
        &self.values[k * self.channels..(k + 1) * self.channels]
    }

    /// Number of audio samples this series aligns to.
    pub fn audio_len(&self) -> usize {
        self.num_frames() * self.hop_size
    }
}

/// Magnitude spectrogram, `num_frames × num_bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    magnitudes: Vec<f64>,
    num_frames: usize,
    num_bins: usize,
    window_length: usize,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        &self.magnitudes[k * self.num_bins..(k + 1) * self.num_bins]
    }

    /// Mean magnitude per bin across all frames.
    pub fn mean_spectrum(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.num_bins];
        for k in 0..self.num_frames {
            for (a, m) in acc.iter_mut().zip(self.frame(k)) {
                *a += m;
            }
        }
        let n = self.num_frames.max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// Symmetric Hann window: `0.5 - 0.5 cos(2πn / (len - 1))`.
pub fn hann_window(length: usize) -> Result<Vec<f64>> {
    match length {
        0 => Err(Error::InvalidArgument("window length must be at least 1".into())),
        1 => Ok(vec![1.0]),
        _ => {
            let denom = (length - 1) as f64;
            Ok((0..length)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / denom).cos())
                .collect())
        }
    }
}

/// Hann-windowed magnitude STFT without padding or centering.
pub fn stft_magnitude(x: &AudioBuffer, window_length: usize, hop: usize) -> Result<Spectrogram> {
    stft_magnitude_slice(x.samples(), window_length, hop)
}

pub(crate) fn stft_magnitude_slice(x: &[f32], window_length: usize, hop: usize) -> Result<Spectrogram> {
    if window_length == 0 || hop == 0 {
        return Err(Error::InvalidArgument("window length and hop must be positive".into()));
    }
    if hop > window_length {
        return Err(Error::InvalidArgument(format!(
            "hop {hop} exceeds window length {window_length}"
        )));
    }
    if x.len() < window_length {
        return Err(Error::EmptySpectrogram(format!(
            "{} samples is shorter than one {window_length}-sample window",
            x.len()
        )));
    }
    let window = hann_window(window_length)?;
    let num_frames = (x.len() - window_length) / hop + 1;
    let num_bins = window_length / 2 + 1;
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(window_length);
    let mut input = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut magnitudes = Vec::with_capacity(num_frames * num_bins);
    for k in 0..num_frames {
        let frame = &x[k * hop..k * hop + window_length];
        for ((dst, &s), w) in input.iter_mut().zip(frame).zip(&window) {
            *dst = s as f64 * w;
        }
        fft.process(&mut input, &mut spectrum)
            .expect("buffer sizes come from the plan");
        magnitudes.extend(spectrum.iter().map(|c| c.norm()));
    }
    Ok(Spectrogram {
        magnitudes,
        num_frames,
        num_bins,
        window_length,
    })
}

/// Full linear convolution via the frequency domain, for fixed maximum operand lengths.
///
/// Plans are created once so the convolver can be reused per frame.
pub struct FftConvolver {
    max_signal: usize,
    max_kernel: usize,
    fft_len: usize,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for FftConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftConvolver")
            .field("max_signal", &self.max_signal)
            .field("max_kernel", &self.max_kernel)
            .field("fft_len", &self.fft_len)
            .finish()
    }
}

impl FftConvolver {
    pub fn new(max_signal: usize, max_kernel: usize) -> Self {
        let fft_len = (max_signal + max_kernel).saturating_sub(1).max(2).next_power_of_two();
        let mut planner = RealFftPlanner::<f64>::new();
        Self {
            max_signal,
            max_kernel,
            fft_len,
            forward: planner.plan_fft_forward(fft_len),
            inverse: planner.plan_fft_inverse(fft_len),
        }
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    /// Writes `x * h` (length `x.len() + h.len() - 1`) into `out`.
    pub fn convolve_into(&self, x: &[f32], h: &[f32], out: &mut [f64]) -> Result<()> {
        if x.is_empty() || h.is_empty() {
            return Err(Error::InvalidArgument("convolution operands must be nonempty".into()));
        }
        if x.len() > self.max_signal || h.len() > self.max_kernel {
            return Err(Error::InvalidArgument(format!(
                "operands ({}, {}) exceed planned sizes ({}, {})",
                x.len(),
                h.len(),
                self.max_signal,
                self.max_kernel
            )));
        }
        let out_len = x.len() + h.len() - 1;
        if out.len() != out_len {
            return Err(Error::InvalidArgument(format!(
                "output length {} != {out_len}",
                out.len()
            )));
        }
        let mut buf = self.forward.make_input_vec();
        let mut xs = self.forward.make_output_vec();
        let mut hs = self.forward.make_output_vec();
        load_padded(&mut buf, x);
        self.forward.process(&mut buf, &mut xs).expect("planned sizes");
        load_padded(&mut buf, h);
        self.forward.process(&mut buf, &mut hs).expect("planned sizes");
        for (a, b) in xs.iter_mut().zip(&hs) {
            *a *= b;
        }
        // c2r requires exactly real DC and Nyquist bins.
        xs[0].im = 0.0;
        if let Some(last) = xs.last_mut() {
            last.im = 0.0;
        }
        self.inverse.process(&mut xs, &mut buf).expect("planned sizes");
        let scale = 1.0 / self.fft_len as f64;
        for (o, v) in out.iter_mut().zip(&buf) {
            *o = v * scale;
        }
        Ok(())
    }
}

fn load_padded(buf: &mut [f64], src: &[f32]) {
    for (d, s) in buf.iter_mut().zip(src) {
        *d = *s as f64;
    }
    buf[src.len()..].iter_mut().for_each(|d| *d = 0.0);
}

/// Full linear convolution of `x` with `h`.
pub fn fft_convolve(x: &AudioBuffer, h: &[f32]) -> Result<AudioBuffer> {
    if x.is_empty() || h.is_empty() {
        return Err(Error::InvalidArgument("convolution operands must be nonempty".into()));
    }
    let conv = FftConvolver::new(x.len(), h.len());
    let mut out = vec![0.0; x.len() + h.len() - 1];
    conv.convolve_into(x.samples(), h, &mut out)?;
    AudioBuffer::new(out.into_iter().map(|v| v as f32).collect(), x.sample_rate())
}

/// Linear ramp from `from` towards `to` over `out.len()` samples, starting exactly at `from`.
///
/// Every audio-rate upsampling in the crate goes through this so that offline and
/// streaming paths share the same arithmetic.
#[inline]
pub(crate) fn ramp_into(from: f32, to: f32, out: &mut [f32]) {
    let n = out.len() as f64;
    let (a, b) = (from as f64, to as f64);
    let delta = b - a;
    for (j, o) in out.iter_mut().enumerate() {
        *o = (a + delta * (j as f64 / n)) as f32;
    }
}

/// Upsamples each channel to audio rate.
///
/// `out[c][k * hop] == frames[k][c]`, linear in between, and the last frame value is held
/// for the final hop. Returns `channels` vectors of `num_frames * hop` samples.
pub fn upsample_linear(frames: &FrameSeries) -> Result<Vec<Vec<f32>>> {
    let num_frames = frames.num_frames();
    if num_frames == 0 {
        return Err(Error::InvalidArgument("cannot upsample zero frames".into()));
    }
    let hop = frames.hop_size();
    let mut out = vec![vec![0.0f32; num_frames * hop]; frames.channels()];
    for (c, channel) in out.iter_mut().enumerate() {
        for k in 0..num_frames {
            let from = frames.frame(k)[c];
            let to = if k + 1 < num_frames {
                frames.frame(k + 1)[c]
            } else {
                from
            };
            ramp_into(from, to, &mut channel[k * hop..(k + 1) * hop]);
        }
    }
    Ok(out)
}

/// Multi-channel audio-rate block, channel-major (`channels × len`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBlock {
    data: Vec<f32>,
    channels: usize,
    len: usize,
}

impl ChannelBlock {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            data: vec![0.0; channels * len],
            channels,
            len,
        }
    }

    pub fn from_channels(channels: Vec<Vec<f32>>) -> Result<Self> {
        let len = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidArgument("channels differ in length".into()));
        }
        Ok(Self {
            channels: channels.len(),
            len,
            data: channels.concat(),
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channel(&self, i: usize) -> &[f32] {
        &self.data[i * self.len..(i + 1) * self.len]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.len..(i + 1) * self.len]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hann_degenerate_and_small() {
        assert_eq!(hann_window(1).unwrap(), vec![1.0]);
        let w = hann_window(4).unwrap();
        for (a, b) in w.iter().zip([0.0, 0.75, 0.75, 0.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert!(matches!(hann_window(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn hann_odd_midpoint_is_one_and_symmetric() {
        for len in [3usize, 5, 17, 255] {
            let w = hann_window(len).unwrap();
            assert_abs_diff_eq!(w[len / 2], 1.0, epsilon = 1e-15);
            for n in 0..len {
                assert_abs_diff_eq!(w[n], w[len - 1 - n], epsilon = 1e-15);
                assert!((0.0..=1.0).contains(&w[n]));
            }
        }
    }

    #[test]
    fn stft_of_silence_is_zero() {
        let x = AudioBuffer::silent(4096, 16000).unwrap();
        let s = stft_magnitude(&x, 1024, 256).unwrap();
        assert_eq!(s.num_bins(), 513);
        assert_eq!(s.num_frames(), (4096 - 1024) / 256 + 1);
        assert!(s.magnitudes().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn stft_cosine_peaks_at_analytic_bin() {
        let sr = 16000;
        let x: Vec<f32> = (0..8000)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / sr as f64).cos() as f32)
            .collect();
        let s = stft_magnitude(&AudioBuffer::new(x, sr).unwrap(), 1024, 256).unwrap();
        for k in 0..s.num_frames() {
            let frame = s.frame(k);
            let argmax = (0..frame.len())
                .max_by(|&a, &b| frame[a].total_cmp(&frame[b]))
                .unwrap();
            assert_eq!(argmax, 64);
        }
    }

    #[test]
    fn stft_too_short_is_empty_error() {
        let x = AudioBuffer::silent(100, 16000).unwrap();
        assert!(matches!(
            stft_magnitude(&x, 512, 128),
            Err(Error::EmptySpectrogram(_))
        ));
    }

    #[test]
    fn stft_doubling_input_doubles_magnitudes() {
        let x: Vec<f32> = (0..3000).map(|n| ((n * 7919) % 101) as f32 / 50.0 - 1.0).collect();
        let a = AudioBuffer::new(x, 16000).unwrap();
        let b = a.scaled(2.0).unwrap();
        let sa = stft_magnitude(&a, 512, 128).unwrap();
        let sb = stft_magnitude(&b, 512, 128).unwrap();
        for (m1, m2) in sa.magnitudes().iter().zip(sb.magnitudes()) {
            assert_eq!(2.0 * m1, *m2);
        }
    }

    #[test]
    fn convolve_identity_and_delay() {
        let x = AudioBuffer::new(vec![1.0, 2.0, 3.0], 16000).unwrap();
        let y = fft_convolve(&x, &[1.0]).unwrap();
        for (a, b) in y.samples().iter().zip([1.0, 2.0, 3.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
        }
        let y = fft_convolve(&x, &[0.0, 1.0]).unwrap();
        assert_eq!(y.len(), 4);
        for (a, b) in y.samples().iter().zip([0.0, 1.0, 2.0, 3.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn convolve_rejects_empty() {
        let x = AudioBuffer::new(vec![], 16000).unwrap();
        assert!(matches!(fft_convolve(&x, &[1.0]), Err(Error::InvalidArgument(_))));
        let x = AudioBuffer::new(vec![1.0], 16000).unwrap();
        assert!(matches!(fft_convolve(&x, &[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn upsample_examples() {
        let f = FrameSeries::new(vec![0.0, 1.0], 1, 4, 16000).unwrap();
        assert_eq!(
            upsample_linear(&f).unwrap()[0],
            vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0, 1.0]
        );
        let f = FrameSeries::new(vec![0.0, 2.0, 4.0], 1, 2, 16000).unwrap();
        assert_eq!(upsample_linear(&f).unwrap()[0], vec![0.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        let f = FrameSeries::new(vec![0.3; 10], 2, 8, 16000).unwrap();
        let up = upsample_linear(&f).unwrap();
        assert_eq!(up.len(), 2);
        assert!(up.iter().flatten().all(|&v| v == 0.3));
    }

    #[test]
    fn upsample_rejects_zero_frames() {
        let f = FrameSeries::new(vec![], 2, 8, 16000).unwrap();
        assert!(matches!(upsample_linear(&f), Err(Error::InvalidArgument(_))));
    }
}
