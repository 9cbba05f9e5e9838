//! Control encoder: standardized F0/loudness frames through a causal GRU and a
//! time-distributed dense layer, producing the control embedding.

use crate::error::{Error, Result};
use crate::nn::{dot, sigmoid, Linear};
use crate::signal::FrameSeries;
use crate::weights::{NormalizationStats, TensorStore, CONTROL_CHANNELS};

/// Framewise control signals, one value per hop.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrack {
    f0: Vec<f32>,
    loudness: Vec<f32>,
    confidence: Option<Vec<f32>>,
    hop_size: usize,
}

impl ControlTrack {
    pub fn new(f0: Vec<f32>, loudness: Vec<f32>, confidence: Option<Vec<f32>>, hop_size: usize) -> Result<Self> {
        if hop_size == 0 {
            return Err(Error::InvalidArgument("hop size must be positive".into()));
        }
        if f0.len() != loudness.len() || confidence.as_ref().is_some_and(|c| c.len() != f0.len()) {
            return Err(Error::InvalidInput("control sequences differ in length".into()));
        }
        if let Some(k) = f0.iter().chain(&loudness).position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite control value at frame {}",
                k % f0.len().max(1)
            )));
        }
        if let Some(c) = &confidence {
            if let Some(k) = c.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidInput(format!("confidence out of [0, 1] at frame {k}")));
            }
        }
        Ok(Self {
            f0,
            loudness,
            confidence,
            hop_size,
        })
    }

    /// A track holding `f0_hz` and `loudness_db` fixed for `num_frames` frames.
    pub fn constant(f0_hz: f32, loudness_db: f32, num_frames: usize, hop_size: usize) -> Result<Self> {
        Self::new(vec![f0_hz; num_frames], vec![loudness_db; num_frames], None, hop_size)
    }

    pub fn f0(&self) -> &[f32] {
        &self.f0
    }

    pub fn loudness(&self) -> &[f32] {
        &self.loudness
    }

    pub fn confidence(&self) -> Option<&[f32]> {
        self.confidence.as_deref()
    }

    pub fn hop_size(&self) -> usize {
        self.hop_size
    }

    pub fn num_frames(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    /// Frames `range` as a new track.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            f0: self.f0[range.clone()].to_vec(),
            loudness: self.loudness[range.clone()].to_vec(),
            confidence: self.confidence.as_ref().map(|c| c[range].to_vec()),
            hop_size: self.hop_size,
        }
    }

    /// Splits into consecutive chunks of `frames_per_chunk` frames (the last may be shorter).
    pub fn chunks(&self, frames_per_chunk: usize) -> Vec<Self> {
        let n = self.num_frames();
        (0..n)
            .step_by(frames_per_chunk.max(1))
            .map(|start| self.slice(start..(start + frames_per_chunk).min(n)))
            .collect()
    }
}

/// `(x - mean) / std` per channel; output channels are `[f0, loudness]`.
pub fn standardize(track: &ControlTrack, stats: &NormalizationStats, sample_rate: u32) -> Result<FrameSeries> {
    if stats.std.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("normalization std must be positive".into()));
    }
    let mut values = Vec::with_capacity(track.num_frames() * CONTROL_CHANNELS);
    for (k, (&f, &l)) in track.f0.iter().zip(&track.loudness).enumerate() {
        if !f.is_finite() || !l.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite control value at frame {k}")));
        }
        values.push((f - stats.mean[0]) / stats.std[0]);
        values.push((l - stats.mean[1]) / stats.std[1]);
    }
    FrameSeries::new(values, CONTROL_CHANNELS, track.hop_size, sample_rate)
}

/// GRU parameters with gates packed `(reset, update, candidate)` along the first axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    w_ih: Vec<f32>,
    w_hh: Vec<f32>,
    b_ih: Vec<f32>,
    b_hh: Vec<f32>,
    input: usize,
    hidden: usize,
}

impl GruWeights {
    pub fn new(
        w_ih: Vec<f32>,
        w_hh: Vec<f32>,
        b_ih: Vec<f32>,
        b_hh: Vec<f32>,
        input: usize,
        hidden: usize,
    ) -> Result<Self> {
        let g = 3 * hidden;
        if w_ih.len() != g * input || w_hh.len() != g * hidden || b_ih.len() != g || b_hh.len() != g {
            return Err(Error::Schema(format!(
                "GRU tensors do not match input {input} / hidden {hidden}"
            )));
        }
        Ok(Self {
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            input,
            hidden,
        })
    }

    pub(crate) fn from_store(store: &TensorStore, input: usize, hidden: usize) -> Result<Self> {
        Self::new(
            store.expect("control_gru.w_ih", &[3 * hidden, input])?.to_vec(),
            store.expect("control_gru.w_hh", &[3 * hidden, hidden])?.to_vec(),
            store.expect("control_gru.b_ih", &[3 * hidden])?.to_vec(),
            store.expect("control_gru.b_hh", &[3 * hidden])?.to_vec(),
            input,
            hidden,
        )
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }
}

/// Recurrent state of one stream. Starts at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GruState {
    pub h: Vec<f32>,
}

impl GruState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden] }
    }

    pub fn reset(&mut self) {
        self.h.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// One GRU update:
///
/// ```text
/// r  = σ(W_ir x + b_ir + W_hr h + b_hr)
/// u  = σ(W_iu x + b_iu + W_hu h + b_hu)
/// n  = tanh(W_in x + b_in + r ∘ (W_hn h + b_hn))
/// h' = (1 - u) ∘ n + u ∘ h
/// ```
pub fn gru_step(x: &[f32], state: &mut GruState, w: &GruWeights) -> Result<()> {
    if x.len() != w.input || state.h.len() != w.hidden {
        return Err(Error::Schema(format!(
            "gru_step got input {} / state {}, expected {} / {}",
            x.len(),
            state.h.len(),
            w.input,
            w.hidden
        )));
    }
    let hs = w.hidden;
    let h = &state.h;
    let mut next = vec![0.0f32; hs];
    let row_i = |g: usize, j: usize| &w.w_ih[(g * hs + j) * w.input..(g * hs + j + 1) * w.input];
    let row_h = |g: usize, j: usize| &w.w_hh[(g * hs + j) * hs..(g * hs + j + 1) * hs];
    for (j, out) in next.iter_mut().enumerate() {
        let r = sigmoid(dot(row_i(0, j), x) + w.b_ih[j] + dot(row_h(0, j), h) + w.b_hh[j]);
        let u = sigmoid(dot(row_i(1, j), x) + w.b_ih[hs + j] + dot(row_h(1, j), h) + w.b_hh[hs + j]);
        let n = (dot(row_i(2, j), x) + w.b_ih[2 * hs + j] + r * (dot(row_h(2, j), h) + w.b_hh[2 * hs + j])).tanh();
        *out = (1.0 - u) * n + u * h[j];
    }
    state.h = next;
    Ok(())
}

/// Control embedding `z`, `num_frames × dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlEmbedding {
    values: Vec<f32>,
    dim: usize,
}

impl ControlEmbedding {
    pub fn new(values: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::Schema(format!("{} values do not form rows of {dim}", values.len())));
        }
        Ok(Self { values, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_frames(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, k: usize) -> &[f32] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
}

/// GRU followed by a time-distributed dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlEncoder {
    gru: GruWeights,
    dense: Linear,
}

impl ControlEncoder {
    pub fn new(gru: GruWeights, dense: Linear) -> Result<Self> {
        if dense.in_dim() != gru.hidden_size() {
            return Err(Error::Schema("dense layer input must match GRU hidden size".into()));
        }
        Ok(Self { gru, dense })
    }

    pub(crate) fn from_store(store: &TensorStore, control_dim: usize) -> Result<Self> {
        Self::new(
            GruWeights::from_store(store, CONTROL_CHANNELS, control_dim)?,
            Linear::from_store(store, "control_dense", control_dim, control_dim)?,
        )
    }

    pub fn gru(&self) -> &GruWeights {
        &self.gru
    }

    pub fn initial_state(&self) -> GruState {
        GruState::zeros(self.gru.hidden_size())
    }

    /// `z[k] = dense(gru(frames[..=k]))`, continuing from `state`.
    pub fn encode(&self, frames: &FrameSeries, state: &mut GruState) -> Result<ControlEmbedding> {
        if frames.channels() != self.gru.input_size() {
            return Err(Error::Schema(format!(
                "encoder expects {} control channels, got {}",
                self.gru.input_size(),
                frames.channels()
            )));
        }
        let dim = self.dense.out_dim();
        let mut z = vec![0.0; frames.num_frames() * dim];
        for (k, row) in z.chunks_exact_mut(dim).enumerate() {
            gru_step(frames.frame(k), state, &self.gru)?;
            self.dense.forward(&state.h, row);
        }
        ControlEmbedding::new(z, dim)
    }
}
