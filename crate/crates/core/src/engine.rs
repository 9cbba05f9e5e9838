//! The full synthesis graph and its offline, streaming and benchmark entry points.
//!
//! Per block: standardize -> encode -> (affine MLP, noise MLP) at frame rate ->
//! causal upsampling -> exciter -> waveshaping units -> + filtered noise -> reverb.
//!
//! Every stage is either frame-local or carries its state explicitly in
//! [`EngineState`], and the reverb partitions at the hop size, so rendering a track
//! in one pass or in any sequence of hop-aligned blocks gives identical samples.

use std::sync::OnceLock;
use std::time::Instant;

use crate::control::{standardize, ControlEncoder, ControlTrack, GruState};
use crate::error::{Error, Result};
use crate::exciter::{ExciterWeights, OscillatorState};
use crate::newt::{
    affine_mlp_forward, bake_fastnewt, newt_forward, FastNewtTable, ShaperMlp, AFFINE_PLANES, DEFAULT_TABLE_DOMAIN,
    DEFAULT_TABLE_SIZE,
};
use crate::nn::LayerNormMlp;
use crate::noise::{noise_mlp_forward, NoiseState, NoiseSynth};
use crate::reverb::{Reverb, ReverbIr, ReverbState};
use crate::signal::{ramp_into, AudioBuffer};
use crate::weights::{load_model, ModelConfig, ModelFile, NormalizationStats};

/// A loaded, validated model. Immutable and shareable between streams.
#[derive(Debug)]
pub struct Model {
    config: ModelConfig,
    stats: NormalizationStats,
    encoder: ControlEncoder,
    exciter: ExciterWeights,
    affine: LayerNormMlp,
    noise_mlp: LayerNormMlp,
    shapers: Option<Vec<ShaperMlp>>,
    stored_tables: Option<Vec<FastNewtTable>>,
    baked_tables: OnceLock<Vec<FastNewtTable>>,
    ir: ReverbIr,
    noise: NoiseSynth,
    reverb: Reverb,
}

impl Model {
    /// Builds the runtime graph, rejecting non-finite tensors and a nonzero `reverb.ir[0]`.
    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let cfg = &file.config;
        cfg.validate()?;
        if let Some((name, _)) = file
            .tensors
            .iter()
            .find(|(_, t)| t.data().iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Schema(format!("tensor {name} contains non-finite values")));
        }
        let store = &file.tensors;
        let c = cfg.n_newt_channels;
        let shapers = if file.has_shapers() {
            let widths = cfg.shaper_widths();
            Some(
                (0..c)
                    .map(|i| ShaperMlp::from_store(store, i, &widths))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        if shapers.is_none() && file.tables.is_none() {
            return Err(Error::Schema("model has neither shaper MLPs nor baked tables".into()));
        }
        if let Some(tables) = &file.tables {
            if tables.len() != c {
                return Err(Error::Schema(format!("{} tables for {c} channels", tables.len())));
            }
        }
        let ir = ReverbIr::new(store.expect("reverb.ir", &[cfg.reverb_length])?.to_vec())?;
        Ok(Self {
            encoder: ControlEncoder::from_store(store, cfg.control_dim)?,
            exciter: ExciterWeights::from_store(store, cfg.n_harmonics, c)?,
            affine: LayerNormMlp::from_store(
                store,
                "newt.mlp",
                cfg.control_dim,
                cfg.mlp_hidden,
                AFFINE_PLANES * c,
                cfg.mlp_depth,
            )?,
            noise_mlp: LayerNormMlp::from_store(
                store,
                "noise.mlp",
                cfg.control_dim,
                cfg.mlp_hidden,
                cfg.noise_bins(),
                cfg.mlp_depth,
            )?,
            noise: NoiseSynth::new(cfg.noise_fir_taps, cfg.hop_size)?,
            reverb: Reverb::new(&ir, cfg.hop_size)?,
            ir,
            shapers,
            stored_tables: file.tables.clone(),
            baked_tables: OnceLock::new(),
            stats: file.stats.clone(),
            config: cfg.clone(),
        })
    }

    pub fn load(bytes: &[u8]) -> Result<Self> {
        Self::from_file(&load_model(bytes)?)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    pub fn encoder(&self) -> &ControlEncoder {
        &self.encoder
    }

    pub fn exciter(&self) -> &ExciterWeights {
        &self.exciter
    }

    pub fn affine_mlp(&self) -> &LayerNormMlp {
        &self.affine
    }

    pub fn noise_mlp(&self) -> &LayerNormMlp {
        &self.noise_mlp
    }

    pub fn reverb_ir(&self) -> &ReverbIr {
        &self.ir
    }

    pub fn shapers(&self) -> Option<&[ShaperMlp]> {
        self.shapers.as_deref()
    }

    /// Tables stored in the model file, if any.
    pub fn stored_tables(&self) -> Option<&[FastNewtTable]> {
        self.stored_tables.as_deref()
    }

    /// Tables used for lookup-table rendering: the stored ones, or a default bake of
    /// the MLP shapers made on first use.
    pub fn tables(&self) -> &[FastNewtTable] {
        if let Some(t) = &self.stored_tables {
            return t;
        }
        self.baked_tables.get_or_init(|| {
            self.bake(DEFAULT_TABLE_SIZE, DEFAULT_TABLE_DOMAIN.0, DEFAULT_TABLE_DOMAIN.1)
                .expect("default bake of validated shapers")
        })
    }

    /// Samples every MLP shaper into a table.
    pub fn bake(&self, table_size: usize, lo: f32, hi: f32) -> Result<Vec<FastNewtTable>> {
        let shapers = self
            .shapers
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model has no MLP shapers to bake".into()))?;
        shapers
            .iter()
            .map(|s| bake_fastnewt(s, table_size, lo, hi))
            .collect()
    }

    pub fn new_state(&self, opts: &RenderOptions) -> EngineState {
        EngineState {
            gru: self.encoder.initial_state(),
            osc: OscillatorState::default(),
            noise: NoiseState::new(opts.noise_seed, self.config.noise_fir_taps),
            reverb: self.reverb.initial_state(),
            prev_affine: None,
            prev_f0: None,
            frames_consumed: 0,
        }
    }

    /// Renders one hop-aligned chunk of control frames, advancing `state`.
    pub fn process_chunk(&self, chunk: &ControlTrack, opts: &RenderOptions, state: &mut EngineState) -> Result<Vec<f32>> {
        let cfg = &self.config;
        let hop = cfg.hop_size;
        if chunk.hop_size() != hop {
            return Err(Error::Alignment(format!(
                "control hop {} does not match model hop {hop}",
                chunk.hop_size()
            )));
        }
        if chunk.is_empty() {
            return Ok(Vec::new());
        }
        if state.noise.seed() != opts.noise_seed {
            return Err(Error::InvalidArgument("state was created with a different noise seed".into()));
        }
        let frames = standardize(chunk, &self.stats, cfg.sample_rate)?;
        let z = self.encoder.encode(&frames, &mut state.gru)?;
        let affine = affine_mlp_forward(&z, &self.affine, cfg.n_newt_channels)?;
        let bank = noise_mlp_forward(&z, &self.noise_mlp)?;

        let params = affine.upsample_causal(hop, state.prev_affine.as_deref())?;
        state.prev_affine = Some(affine.frame(affine.num_frames() - 1).to_vec());
        let f0 = chunk.f0();
        let mut f0_audio = vec![0.0f32; f0.len() * hop];
        let mut prev = state.prev_f0.unwrap_or(f0[0]);
        for (seg, &f) in f0_audio.chunks_exact_mut(hop).zip(f0) {
            ramp_into(prev, f, seg);
            prev = f;
        }
        state.prev_f0 = Some(prev);

        let excitation = self.exciter.render(&f0_audio, &mut state.osc, cfg.sample_rate)?;
        let mut dry = if opts.use_fastnewt {
            newt_forward(&excitation, &params, self.tables())?
        } else {
            let shapers = self.shapers.as_deref().ok_or_else(|| {
                Error::InvalidArgument("model has no MLP shapers; render with lookup tables".into())
            })?;
            newt_forward(&excitation, &params, shapers)?
        };
        let noise = self.noise.render(&bank, &mut state.noise)?;
        for (d, n) in dry.iter_mut().zip(&noise) {
            *d += n;
        }
        state.frames_consumed += chunk.num_frames() as u64;
        if !opts.enable_reverb {
            return Ok(dry);
        }
        let mut out = vec![0.0f32; dry.len()];
        self.reverb.process(&dry, &mut state.reverb, &mut out)?;
        Ok(out)
    }

    /// Renders a whole track in a single pass.
    pub fn render(&self, track: &ControlTrack, opts: &RenderOptions) -> Result<AudioBuffer> {
        if track.is_empty() {
            return Err(Error::InvalidInput("control track is empty".into()));
        }
        let mut state = self.new_state(opts);
        let samples = self.process_chunk(track, opts, &mut state)?;
        AudioBuffer::new(samples, self.config.sample_rate)
    }

    /// Renders `track` in blocks of `opts.block_size` samples, returning each block.
    pub fn render_streaming(
        &self,
        track: &ControlTrack,
        opts: &RenderOptions,
        state: &mut EngineState,
    ) -> Result<Vec<Vec<f32>>> {
        let frames = opts.frames_per_block(self.config.hop_size)?;
        track
            .chunks(frames)
            .iter()
            .map(|c| self.process_chunk(c, opts, state))
            .collect()
    }
}

/// Per-render switches.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    /// Use lookup-table shapers instead of the MLPs.
    pub use_fastnewt: bool,
    pub noise_seed: u64,
    pub enable_reverb: bool,
    /// Streaming block size in samples; a positive multiple of the hop size.
    pub block_size: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            use_fastnewt: false,
            noise_seed: 0,
            enable_reverb: true,
            block_size: 256,
        }
    }
}

impl RenderOptions {
    pub fn frames_per_block(&self, hop: usize) -> Result<usize> {
        if self.block_size == 0 || self.block_size % hop != 0 {
            return Err(Error::Alignment(format!(
                "block size {} is not a positive multiple of the hop size {hop}",
                self.block_size
            )));
        }
        Ok(self.block_size / hop)
    }
}

/// Mutable state of one render stream.
#[derive(Debug, Clone)]
pub struct EngineState {
    pub gru: GruState,
    pub osc: OscillatorState,
    pub noise: NoiseState,
    pub reverb: ReverbState,
    /// Last frame of affine parameters, the start point of the next ramp.
    pub prev_affine: Option<Vec<f32>>,
    pub prev_f0: Option<f32>,
    pub frames_consumed: u64,
}

impl EngineState {
    /// Back to the initial condition of a fresh stream.
    pub fn reset(&mut self) {
        self.gru.reset();
        self.osc.reset();
        self.noise.reset();
        self.reverb.reset();
        self.prev_affine = None;
        self.prev_f0 = None;
        self.frames_consumed = 0;
    }
}

/// How a benchmark run drives the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderMode {
    OneShot,
    Streaming { block_size: usize },
}

/// Real-time factor statistics: processing time over audio duration, per run.
#[derive(Debug, Clone, PartialEq)]
pub struct RtfStats {
    pub runs: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub min: f64,
    pub max: f64,
}

impl RtfStats {
    pub fn from_runs(runs: Vec<f64>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::InvalidArgument("need at least one run".into()));
        }
        let mut sorted = runs.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = |q: f64| sorted[((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
        Ok(Self {
            mean: runs.iter().sum::<f64>() / runs.len() as f64,
            median: rank(0.5),
            p90: rank(0.9),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            runs,
        })
    }
}

/// `processing_time / audio_duration`.
pub fn real_time_factor(processing_secs: f64, audio_secs: f64) -> f64 {
    processing_secs / audio_secs
}

/// The control track used for benchmarks: a 440 Hz note at -30 dB.
pub fn benchmark_track(config: &ModelConfig, duration_secs: f64) -> Result<ControlTrack> {
    let frames = (duration_secs * config.sample_rate as f64 / config.hop_size as f64).round() as usize;
    ControlTrack::constant(440.0, -30.0, frames.max(1), config.hop_size)
}

/// Times `repetitions` renders of `duration_secs` of audio after one untimed warm-up.
pub fn measure_rtf(
    model: &Model,
    duration_secs: f64,
    opts: &RenderOptions,
    repetitions: usize,
    mode: RenderMode,
) -> Result<RtfStats> {
    if !(duration_secs > 0.0) || repetitions == 0 {
        return Err(Error::InvalidArgument("duration and repetitions must be positive".into()));
    }
    let track = benchmark_track(model.config(), duration_secs)?;
    let audio_secs = (track.num_frames() * model.config().hop_size) as f64 / model.config().sample_rate as f64;
    let mut opts = opts.clone();
    let run = |opts: &RenderOptions| -> Result<()> {
        match mode {
            RenderMode::OneShot => model.render(&track, opts).map(drop),
            RenderMode::Streaming { .. } => {
                let mut state = model.new_state(opts);
                model.render_streaming(&track, opts, &mut state).map(drop)
            }
        }
    };
    if let RenderMode::Streaming { block_size } = mode {
        opts.block_size = block_size;
    }
    if model.shapers().is_some() && opts.use_fastnewt {
        // table baking is a load-time cost, keep it out of the timings
        model.tables();
    }
    run(&opts)?;
    let mut runs = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        run(&opts)?;
        runs.push(real_time_factor(start.elapsed().as_secs_f64(), audio_secs));
    }
    RtfStats::from_runs(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::random_model;

    fn tiny() -> ModelConfig {
        ModelConfig {
            sample_rate: 8000,
            hop_size: 32,
            n_harmonics: 12,
            n_newt_channels: 4,
            shaper_depth: 4,
            shaper_hidden: 8,
            control_dim: 16,
            mlp_depth: 4,
            mlp_hidden: 16,
            noise_fir_taps: 32,
            reverb_length: 500,
        }
    }

    #[test]
    fn rtf_arithmetic() {
        assert_eq!(real_time_factor(2.0, 4.0), 0.5);
        let s = RtfStats::from_runs((1..=10).map(f64::from).collect()).unwrap();
        assert_eq!(s.mean, 5.5);
        assert_eq!(s.p90, 9.0);
        assert_eq!(s.median, 5.0);
    }

    #[test]
    fn render_length_and_finite() {
        let model = Model::from_file(&random_model(&tiny(), 1).unwrap()).unwrap();
        let track = ControlTrack::constant(300.0, -60.0, 50, 32).unwrap();
        let out = model.render(&track, &RenderOptions::default()).unwrap();
        assert_eq!(out.len(), 50 * 32);
    }

    #[test]
    fn block_size_must_align() {
        let model = Model::from_file(&random_model(&tiny(), 1).unwrap()).unwrap();
        let track = ControlTrack::constant(300.0, -60.0, 8, 32).unwrap();
        let opts = RenderOptions {
            block_size: 48,
            ..Default::default()
        };
        let mut state = model.new_state(&opts);
        assert!(matches!(
            model.render_streaming(&track, &opts, &mut state),
            Err(Error::Alignment(_))
        ));
        let wrong_hop = ControlTrack::constant(300.0, -60.0, 8, 64).unwrap();
        assert!(matches!(
            model.render(&wrong_hop, &RenderOptions::default()),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn reset_restores_initial_render() {
        let model = Model::from_file(&random_model(&tiny(), 2).unwrap()).unwrap();
        let track = ControlTrack::constant(220.0, -30.0, 10, 32).unwrap();
        let opts = RenderOptions::default();
        let mut state = model.new_state(&opts);
        let first = model.process_chunk(&track, &opts, &mut state).unwrap();
        state.reset();
        assert_eq!(state.frames_consumed, 0);
        let again = model.process_chunk(&track, &opts, &mut state).unwrap();
        assert_eq!(first, again);
    }

    #[test]
    fn nonzero_first_reverb_tap_rejected() {
        let mut file = random_model(&tiny(), 1).unwrap();
        file.tensors.get_mut("reverb.ir").unwrap().data_mut()[0] = 0.5;
        assert!(matches!(Model::from_file(&file), Err(Error::Schema(_))));
    }

    #[test]
    fn nan_tensor_rejected_by_name() {
        let mut file = random_model(&tiny(), 1).unwrap();
        file.tensors.get_mut("exciter.mixer.weight").unwrap().data_mut()[3] = f32::NAN;
        match Model::from_file(&file) {
            Err(Error::Schema(msg)) => assert!(msg.contains("exciter.mixer.weight")),
            other => panic!("{other:?}"),
        }
    }
}
