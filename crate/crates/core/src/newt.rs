//! Neural waveshaping units.
//!
//! Each channel computes `x[n] = α_N f(α_a y[n] + β_a) + β_N`, where `f` is a small
//! sine-activated MLP or, after baking, a linearly interpolated lookup table. The four
//! affine parameters come from a frame-rate MLP over the control embedding and are
//! upsampled to audio rate before use.

use crate::control::ControlEmbedding;
use crate::error::{Error, Result};
use crate::nn::{LayerNormMlp, Linear};
use crate::signal::{ramp_into, ChannelBlock};
use crate::weights::{TensorStore, MAX_SHAPER_WIDTH};

/// Default lookup table resolution.
pub const DEFAULT_TABLE_SIZE: usize = 4096;
/// Default lookup table domain.
pub const DEFAULT_TABLE_DOMAIN: (f32, f32) = (-3.0, 3.0);
/// Probe grid density, relative to table resolution, used to measure bake error.
pub const BAKE_PROBE_FACTOR: usize = 16;

/// A scalar shaping function.
pub trait Shaper {
    fn shape(&self, x: f32) -> f32;
}

/// Sine-activated MLP `1 -> hidden -> ... -> 1`; `sin` after every layer but the last.
#[derive(Debug, Clone, PartialEq)]
pub struct ShaperMlp {
    layers: Vec<Linear>,
}

impl ShaperMlp {
    pub fn new(layers: Vec<Linear>) -> Result<Self> {
        let (first, last) = match (layers.first(), layers.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::Schema("shaper needs at least one layer".into())),
        };
        if first.in_dim() != 1 || last.out_dim() != 1 {
            return Err(Error::Schema("shaper must map a scalar to a scalar".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Schema("shaper layer widths do not chain".into()));
            }
        }
        if layers.iter().any(|l| l.out_dim() > MAX_SHAPER_WIDTH) {
            return Err(Error::Schema(format!("shaper wider than {MAX_SHAPER_WIDTH}")));
        }
        Ok(Self { layers })
    }

    pub(crate) fn from_store(store: &TensorStore, channel: usize, widths: &[usize]) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(j, w)| Linear::from_store(store, &format!("newt.shaper.{channel}.layer{j}"), w[0], w[1]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    /// `|W_last|_1 + |b_last|`, a bound on the output magnitude.
    pub fn output_bound(&self) -> f32 {
        let last = self.layers.last().expect("validated nonempty");
        last.weight().iter().map(|w| w.abs()).sum::<f32>() + last.bias()[0].abs()
    }
}

impl Shaper for ShaperMlp {
    #[inline]
    fn shape(&self, x: f32) -> f32 {
        let mut a = [0.0f32; MAX_SHAPER_WIDTH];
        let mut b = [0.0f32; MAX_SHAPER_WIDTH];
        a[0] = x;
        let mut width = 1;
        let last = self.layers.len() - 1;
        for (j, layer) in self.layers.iter().enumerate() {
            let out = layer.out_dim();
            layer.forward(&a[..width], &mut b[..out]);
            if j != last {
                b[..out].iter_mut().for_each(|v| *v = v.sin());
            }
            std::mem::swap(&mut a, &mut b);
            width = out;
        }
        a[0]
    }
}

/// Free-function form of [`Shaper::shape`] for an MLP bank.
pub fn shaper_eval(x: f32, channel: usize, shapers: &[ShaperMlp]) -> f32 {
    shapers[channel].shape(x)
}

/// A shaping function sampled on a uniform grid over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FastNewtTable {
    samples: Vec<f32>,
    lo: f32,
    hi: f32,
    scale: f64,
}

impl FastNewtTable {
    pub fn from_samples(samples: Vec<f32>, lo: f32, hi: f32) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("table needs at least 2 samples".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!("invalid table domain [{lo}, {hi}]")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("table contains non-finite values".into()));
        }
        let scale = (samples.len() - 1) as f64 / (hi as f64 - lo as f64);
        Ok(Self {
            samples,
            lo,
            hi,
            scale,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn lo(&self) -> f32 {
        self.lo
    }

    pub fn hi(&self) -> f32 {
        self.hi
    }

    /// Grid abscissa of sample `j`; the endpoints are exact.
    pub fn grid_point(&self, j: usize) -> f32 {
        grid_point(self.lo, self.hi, self.samples.len(), j)
    }
}

fn grid_point(lo: f32, hi: f32, size: usize, j: usize) -> f32 {
    if j + 1 == size {
        hi
    } else {
        (lo as f64 + (hi as f64 - lo as f64) * j as f64 / (size - 1) as f64) as f32
    }
}

impl Shaper for FastNewtTable {
    /// Linear interpolation, clamped to the endpoint values outside the domain.
    #[inline]
    fn shape(&self, x: f32) -> f32 {
        if !(x > self.lo) {
            return self.samples[0];
        }
        if x >= self.hi {
            return self.samples[self.samples.len() - 1];
        }
        let pos = (x as f64 - self.lo as f64) * self.scale;
        let i = (pos as usize).min(self.samples.len() - 2);
        let frac = (pos - i as f64) as f32;
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        a + (b - a) * frac
    }
}

pub fn table_lookup(x: f32, table: &FastNewtTable) -> f32 {
    table.shape(x)
}

/// Samples `shaper` at `table_size` evenly spaced points over `[lo, hi]`.
pub fn bake_fastnewt(shaper: &impl Shaper, table_size: usize, lo: f32, hi: f32) -> Result<FastNewtTable> {
    if table_size < 2 {
        return Err(Error::InvalidArgument("table size must be at least 2".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!("invalid table domain [{lo}, {hi}]")));
    }
    let samples = (0..table_size)
        .map(|j| shaper.shape(grid_point(lo, hi, table_size, j)))
        .collect();
    FastNewtTable::from_samples(samples, lo, hi)
}

/// Table-vs-shaper discrepancy measured on a grid `probe_factor` times denser than the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BakeError {
    pub max_abs: f32,
    /// `max - min` of the shaper over the probe grid.
    pub output_range: f32,
}

impl BakeError {
    /// `max_abs / output_range`, or `max_abs` for a constant shaper.
    pub fn relative(&self) -> f32 {
        if self.output_range > 0.0 {
            self.max_abs / self.output_range
        } else {
            self.max_abs
        }
    }
}

pub fn bake_error(shaper: &impl Shaper, table: &FastNewtTable, probe_factor: usize) -> BakeError {
    let probes = (table.len() - 1) * probe_factor.max(1) + 1;
    let (mut max_abs, mut lo, mut hi) = (0.0f32, f32::INFINITY, f32::NEG_INFINITY);
    for j in 0..probes {
        let x = grid_point(table.lo(), table.hi(), probes, j);
        let exact = shaper.shape(x);
        max_abs = max_abs.max((table.shape(x) - exact).abs());
        lo = lo.min(exact);
        hi = hi.max(exact);
    }
    BakeError {
        max_abs,
        output_range: hi - lo,
    }
}

/// Frame-rate affine parameters, `num_frames × 4C` row-major in the order
/// `[α_a (C), β_a (C), α_N (C), β_N (C)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams {
    values: Vec<f32>,
    channels: usize,
}

/// Parameter planes in storage order.
pub const AFFINE_PLANES: usize = 4;

impl AffineParams {
    pub fn new(values: Vec<f32>, channels: usize) -> Result<Self> {
        if channels == 0 || values.len() % (AFFINE_PLANES * channels) != 0 {
            return Err(Error::Schema(format!(
                "{} values do not form frames of {} affine parameters",
                values.len(),
                AFFINE_PLANES * channels
            )));
        }
        Ok(Self { values, channels })
    }

    /// Uniform parameters for every frame and channel.
    pub fn constant(num_frames: usize, channels: usize, alpha_a: f32, beta_a: f32, alpha_n: f32, beta_n: f32) -> Self {
        let mut frame = Vec::with_capacity(AFFINE_PLANES * channels);
        for v in [alpha_a, beta_a, alpha_n, beta_n] {
            frame.extend(std::iter::repeat_n(v, channels));
        }
        Self {
            values: frame.repeat(num_frames),
            channels,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_frames(&self) -> usize {
        self.values.len() / (AFFINE_PLANES * self.channels)
    }

    pub fn frame(&self, k: usize) -> &[f32] {
        let w = AFFINE_PLANES * self.channels;
        &self.values[k * w..(k + 1) * w]
    }

    fn plane(&self, k: usize, p: usize) -> &[f32] {
        &self.frame(k)[p * self.channels..(p + 1) * self.channels]
    }

    pub fn alpha_a(&self, k: usize) -> &[f32] {
        self.plane(k, 0)
    }

    pub fn beta_a(&self, k: usize) -> &[f32] {
        self.plane(k, 1)
    }

    pub fn alpha_n(&self, k: usize) -> &[f32] {
        self.plane(k, 2)
    }

    pub fn beta_n(&self, k: usize) -> &[f32] {
        self.plane(k, 3)
    }

    /// Upsamples with ramps anchored at `k * hop` and the last frame held.
    pub fn upsample_linear(&self, hop: usize) -> Result<UpsampledAffine> {
        let n = self.num_frames();
        if n == 0 {
            return Err(Error::InvalidArgument("cannot upsample zero frames".into()));
        }
        Ok(self.upsample_with(hop, |k| (self.frame(k), self.frame((k + 1).min(n - 1)))))
    }

    /// Upsamples so that the samples of frame `k` ramp from frame `k - 1` towards
    /// frame `k`, where frame `-1` is `previous` (or frame 0 at stream start).
    ///
    /// This equals [`Self::upsample_linear`] applied to `[previous, frames..]` and
    /// truncated to `num_frames * hop` samples, and only depends on past frames.
    pub fn upsample_causal(&self, hop: usize, previous: Option<&[f32]>) -> Result<UpsampledAffine> {
        let n = self.num_frames();
        if n == 0 {
            return Err(Error::InvalidArgument("cannot upsample zero frames".into()));
        }
        let prev0 = previous.unwrap_or(self.frame(0));
        if prev0.len() != AFFINE_PLANES * self.channels {
            return Err(Error::Schema("previous affine frame has the wrong width".into()));
        }
        Ok(self.upsample_with(hop, |k| (if k == 0 { prev0 } else { self.frame(k - 1) }, self.frame(k))))
    }

    fn upsample_with<'a>(&'a self, hop: usize, seg: impl Fn(usize) -> (&'a [f32], &'a [f32])) -> UpsampledAffine {
        let n = self.num_frames();
        let c = self.channels;
        let mut planes: [ChannelBlock; AFFINE_PLANES] = std::array::from_fn(|_| ChannelBlock::zeros(c, n * hop));
        for k in 0..n {
            let (from, to) = seg(k);
            for (p, plane) in planes.iter_mut().enumerate() {
                for i in 0..c {
                    let idx = p * c + i;
                    ramp_into(from[idx], to[idx], &mut plane.channel_mut(i)[k * hop..(k + 1) * hop]);
                }
            }
        }
        let [alpha_a, beta_a, alpha_n, beta_n] = planes;
        UpsampledAffine {
            alpha_a,
            beta_a,
            alpha_n,
            beta_n,
        }
    }
}

/// Audio-rate affine parameters, one `channels × len` block per plane.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsampledAffine {
    pub alpha_a: ChannelBlock,
    pub beta_a: ChannelBlock,
    pub alpha_n: ChannelBlock,
    pub beta_n: ChannelBlock,
}

impl UpsampledAffine {
    pub fn len(&self) -> usize {
        self.alpha_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_a.is_empty()
    }
}

/// Affine parameter network over the control embedding.
pub fn affine_mlp_forward(z: &ControlEmbedding, mlp: &LayerNormMlp, channels: usize) -> Result<AffineParams> {
    if z.dim() != mlp.in_dim() {
        return Err(Error::Schema(format!(
            "embedding width {} does not match MLP input {}",
            z.dim(),
            mlp.in_dim()
        )));
    }
    if mlp.out_dim() != AFFINE_PLANES * channels {
        return Err(Error::Schema(format!(
            "affine MLP emits {} values, expected {}",
            mlp.out_dim(),
            AFFINE_PLANES * channels
        )));
    }
    AffineParams::new(mlp.forward_rows(z.values()), channels)
}

fn check_newt_inputs<S>(exciter: &ChannelBlock, params: &UpsampledAffine, shapers: &[S]) -> Result<()> {
    let c = exciter.channels();
    if shapers.len() != c || params.alpha_a.channels() != c {
        return Err(Error::Schema(format!(
            "{} exciter channels, {} parameter channels, {} shapers",
            c,
            params.alpha_a.channels(),
            shapers.len()
        )));
    }
    if params.len() != exciter.len() {
        return Err(Error::InvalidInput(format!(
            "upsampled parameters cover {} samples but the exciter has {}",
            params.len(),
            exciter.len()
        )));
    }
    Ok(())
}

#[inline]
fn shape_channel<S: Shaper>(shaper: &S, i: usize, exciter: &ChannelBlock, p: &UpsampledAffine, acc: &mut [f32]) {
    let y = exciter.channel(i);
    let (aa, ba) = (p.alpha_a.channel(i), p.beta_a.channel(i));
    let (an, bn) = (p.alpha_n.channel(i), p.beta_n.channel(i));
    for n in 0..acc.len() {
        acc[n] += an[n] * shaper.shape(aa[n] * y[n] + ba[n]) + bn[n];
    }
}

/// Applies every channel and sums them to mono, in channel order.
pub fn newt_forward<S: Shaper>(exciter: &ChannelBlock, params: &UpsampledAffine, shapers: &[S]) -> Result<Vec<f32>> {
    check_newt_inputs(exciter, params, shapers)?;
    let mut out = vec![0.0f32; exciter.len()];
    for (i, s) in shapers.iter().enumerate() {
        shape_channel(s, i, exciter, params, &mut out);
    }
    Ok(out)
}

/// Per-channel outputs before the mono sum.
pub fn newt_forward_channels<S: Shaper>(
    exciter: &ChannelBlock,
    params: &UpsampledAffine,
    shapers: &[S],
) -> Result<ChannelBlock> {
    check_newt_inputs(exciter, params, shapers)?;
    let mut out = ChannelBlock::zeros(exciter.channels(), exciter.len());
    for (i, s) in shapers.iter().enumerate() {
        shape_channel(s, i, exciter, params, out.channel_mut(i));
    }
    Ok(out)
}
