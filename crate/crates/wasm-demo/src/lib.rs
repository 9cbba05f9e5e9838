//! Browser bindings: load or generate a model, draw its shaping curves, inspect the
//! band-limited exciter, and render a short note.

use newt_core::exciter::OscillatorState;
use newt_core::init::random_model;
use newt_core::newt::{Shaper, DEFAULT_TABLE_DOMAIN};
use newt_core::signal::{stft_magnitude, AudioBuffer};
use newt_core::{load_model, ControlTrack, Model, ModelConfig, RenderOptions};
use wasm_bindgen::prelude::*;

const SPECTRUM_WINDOW: usize = 2048;

fn js_err(e: newt_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Small enough to render a few seconds interactively in a browser tab.
fn demo_config() -> ModelConfig {
    ModelConfig {
        n_newt_channels: 16,
        control_dim: 64,
        mlp_hidden: 64,
        reverb_length: 8000,
        ..ModelConfig::default()
    }
}

#[wasm_bindgen]
pub struct Synth {
    model: Model,
}

#[wasm_bindgen]
impl Synth {
    /// Untrained model with a seeded random initialization.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<Synth, JsError> {
        let file = random_model(&demo_config(), seed).map_err(js_err)?;
        Ok(Synth {
            model: Model::from_file(&file).map_err(js_err)?,
        })
    }

    /// Loads a `.newt` file picked by the user.
    pub fn from_bytes(bytes: &[u8]) -> Result<Synth, JsError> {
        let file = load_model(bytes).map_err(js_err)?;
        Ok(Synth {
            model: Model::from_file(&file).map_err(js_err)?,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.model.config().sample_rate
    }

    pub fn channels(&self) -> usize {
        self.model.config().n_newt_channels
    }

    pub fn harmonics(&self) -> usize {
        self.model.config().n_harmonics
    }

    pub fn has_mlp(&self) -> bool {
        self.model.shapers().is_some()
    }

    /// `points` evenly spaced samples of one channel's shaper over the table domain.
    /// Falls back to the lookup table when `table` is set or the MLP was stripped.
    pub fn shaper_curve(&self, channel: usize, points: usize, table: bool) -> Result<Vec<f32>, JsError> {
        if channel >= self.channels() || points < 2 {
            return Err(JsError::new("channel out of range or fewer than 2 points"));
        }
        let (lo, hi) = DEFAULT_TABLE_DOMAIN;
        let xs = (0..points).map(|i| lo + (hi - lo) * i as f32 / (points - 1) as f32);
        Ok(match self.model.shapers() {
            Some(mlps) if !table => xs.map(|x| mlps[channel].shape(x)).collect(),
            _ => {
                let t = &self.model.tables()[channel];
                xs.map(|x| t.shape(x)).collect()
            }
        })
    }

    /// Mean magnitude spectrum in dB of one exciter channel driven at a constant `f0`.
    /// Bin `i` sits at `i * sample_rate / 2048` Hz.
    pub fn exciter_spectrum(&self, channel: usize, f0: f32) -> Result<Vec<f32>, JsError> {
        if channel >= self.channels() {
            return Err(JsError::new("channel out of range"));
        }
        let sr = self.sample_rate();
        let block = self
            .model
            .exciter()
            .render(&vec![f0; 4 * SPECTRUM_WINDOW], &mut OscillatorState::default(), sr)
            .map_err(js_err)?;
        let x = AudioBuffer::new(block.channel(channel).to_vec(), sr).map_err(js_err)?;
        let spec = stft_magnitude(&x, SPECTRUM_WINDOW, SPECTRUM_WINDOW / 4).map_err(js_err)?;
        Ok(spec
            .mean_spectrum()
            .iter()
            .map(|&m| (20.0 * (m + 1e-9).log10()) as f32)
            .collect())
    }

    /// Highest harmonic index the exciter keeps at `f0`.
    pub fn active_harmonics(&self, f0: f32) -> usize {
        let sr = self.sample_rate();
        (1..=self.harmonics())
            .take_while(|&k| newt_core::exciter::antialias_mask(f0 as f64, k, sr))
            .count()
    }

    /// Renders a note gliding from `f0_start` to `f0_end` with a fixed loudness.
    pub fn render(
        &self,
        f0_start: f32,
        f0_end: f32,
        loudness_db: f32,
        seconds: f32,
        fastnewt: bool,
        reverb: bool,
        seed: u64,
    ) -> Result<Vec<f32>, JsError> {
        let cfg = self.model.config();
        let frames = ((seconds.clamp(0.05, 10.0) * cfg.sample_rate as f32) as usize / cfg.hop_size).max(1);
        let f0 = (0..frames)
            .map(|k| {
                let t = k as f32 / frames.max(2).saturating_sub(1) as f32;
                f0_start * (f0_end / f0_start).powf(t)
            })
            .collect();
        let track = ControlTrack::new(f0, vec![loudness_db; frames], None, cfg.hop_size).map_err(js_err)?;
        let opts = RenderOptions {
            use_fastnewt: fastnewt,
            noise_seed: seed,
            enable_reverb: reverb,
            ..RenderOptions::default()
        };
        let audio = self.model.render(&track, &opts).map_err(js_err)?;
        Ok(audio.into_samples())
    }
}
