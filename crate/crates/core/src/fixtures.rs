//! Fixture bundles: a directory of raw little-endian f32 arrays plus a JSON manifest,
//! holding reference outputs of an independent forward pass for parity checks.
//!
//! Recognized arrays (all row-major):
//!
//! | name              | shape         | content                                   |
//! |-------------------|---------------|-------------------------------------------|
//! | `f0_hz`           | `[N]`         | control F0, required                      |
//! | `loudness_db`     | `[N]`         | control loudness, required                |
//! | `z`               | `[N, D]`      | control embedding                         |
//! | `affine`          | `[N, 4C]`     | frame-rate affine parameters              |
//! | `noise_magnitudes`| `[N, bins]`   | noise filter magnitude responses          |
//! | `shaper_x`        | `[P]`         | shaper probe inputs                       |
//! | `shaper_y`        | `[C, P]`      | shaper outputs at `shaper_x`              |
//! | `audio`           | `[N * hop]`   | full render                               |
//! | `perturbed_audio` | `[N * hop]`   | a perturbed copy of `audio`               |
//!
//! Scalar `mr_stft_perturbed` is the multi-resolution STFT distance between `audio`
//! and `perturbed_audio`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{standardize, ControlTrack};
use crate::engine::{Model, RenderOptions};
use crate::error::{Error, Result};
use crate::metrics::{mr_stft_loss, MrStftConfig};
use crate::newt::{affine_mlp_forward, Shaper};
use crate::noise::noise_mlp_forward;
use crate::signal::AudioBuffer;
use crate::weights::{load_model, save_model};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Largest sample difference accepted between a bundle's render and the engine's.
pub const AUDIO_PARITY_TOLERANCE: f64 = 1e-4;
/// Tolerance for the frame-rate intermediates and shaper samples.
pub const STAGE_PARITY_TOLERANCE: f64 = 1e-4;
/// Tolerance for the pinned loss value.
pub const LOSS_PARITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleRender {
    pub noise_seed: u64,
    pub use_fastnewt: bool,
    pub enable_reverb: bool,
}

impl From<&BundleRender> for RenderOptions {
    fn from(r: &BundleRender) -> Self {
        RenderOptions {
            use_fastnewt: r.use_fastnewt,
            noise_seed: r.noise_seed,
            enable_reverb: r.enable_reverb,
            ..RenderOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub schema_version: u32,
    /// Model file, relative to the bundle directory.
    pub model: String,
    pub render: BundleRender,
    pub arrays: BTreeMap<String, ArrayEntry>,
    #[serde(default)]
    pub scalars: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureBundle {
    pub dir: PathBuf,
    pub manifest: BundleManifest,
    arrays: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl FixtureBundle {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read(dir.join(MANIFEST_FILE))?;
        let manifest: BundleManifest =
            serde_json::from_slice(&text).map_err(|e| Error::Format(format!("{MANIFEST_FILE}: {e}")))?;
        if manifest.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "fixture schema version {} (expected {BUNDLE_SCHEMA_VERSION})",
                manifest.schema_version
            )));
        }
        let mut arrays = BTreeMap::new();
        for (name, entry) in &manifest.arrays {
            let bytes = std::fs::read(dir.join(&entry.file))?;
            let n: usize = entry.shape.iter().product();
            if bytes.len() != n * 4 {
                return Err(Error::Format(format!(
                    "array {name}: {} bytes for shape {:?}",
                    bytes.len(),
                    entry.shape
                )));
            }
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            arrays.insert(name.clone(), (entry.shape.clone(), data));
        }
        for required in ["f0_hz", "loudness_db"] {
            if !arrays.contains_key(required) {
                return Err(Error::Schema(format!("fixture bundle lacks array {required}")));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            arrays,
        })
    }

    /// Writes the manifest and every array into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, entry) in &self.manifest.arrays {
            let (_, data) = &self.arrays[name];
            let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
            std::fs::write(dir.join(&entry.file), bytes)?;
        }
        let json = serde_json::to_vec_pretty(&self.manifest).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), json)?;
        Ok(())
    }

    pub fn array(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.arrays.get(name).map(|(s, d)| (s.as_slice(), d.as_slice()))
    }

    pub fn insert_array(&mut self, name: &str, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Schema(format!("array {name}: shape {shape:?} vs {} values", data.len())));
        }
        self.manifest.arrays.insert(
            name.to_string(),
            ArrayEntry {
                file: format!("{name}.f32"),
                shape: shape.clone(),
            },
        );
        self.arrays.insert(name.to_string(), (shape, data));
        Ok(())
    }

    pub fn model_path(&self) -> PathBuf {
        self.dir.join(&self.manifest.model)
    }

    pub fn load_model(&self) -> Result<Model> {
        Model::from_file(&load_model(&std::fs::read(self.model_path())?)?)
    }

    pub fn control_track(&self, hop_size: usize) -> Result<ControlTrack> {
        let f0 = self.array("f0_hz").expect("checked on load").1.to_vec();
        let loudness = self.array("loudness_db").expect("checked on load").1.to_vec();
        ControlTrack::new(f0, loudness, None, hop_size)
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions::from(&self.manifest.render)
    }
}

/// Renders `track` with `model` and records every stage, producing a bundle that
/// [`check_parity`] accepts for the same model. The model file is written as `model.newt`.
pub fn export_bundle(
    model_bytes: &[u8],
    track: &ControlTrack,
    opts: &RenderOptions,
    shaper_x: &[f32],
    dir: &Path,
) -> Result<FixtureBundle> {
    let model = Model::from_file(&load_model(model_bytes)?)?;
    let stages = Stages::compute(&model, track, shaper_x)?;
    let audio = model.render(track, opts)?;
    let mut bundle = FixtureBundle {
        dir: dir.to_path_buf(),
        manifest: BundleManifest {
            schema_version: BUNDLE_SCHEMA_VERSION,
            model: "model.newt".into(),
            render: BundleRender {
                noise_seed: opts.noise_seed,
                use_fastnewt: opts.use_fastnewt,
                enable_reverb: opts.enable_reverb,
            },
            arrays: BTreeMap::new(),
            scalars: BTreeMap::new(),
        },
        arrays: BTreeMap::new(),
    };
    let n = track.num_frames();
    bundle.insert_array("f0_hz", vec![n], track.f0().to_vec())?;
    bundle.insert_array("loudness_db", vec![n], track.loudness().to_vec())?;
    bundle.insert_array("z", vec![n, stages.z_dim], stages.z)?;
    bundle.insert_array("affine", vec![n, stages.affine_dim], stages.affine)?;
    bundle.insert_array("noise_magnitudes", vec![n, stages.bins], stages.noise)?;
    if !shaper_x.is_empty() {
        bundle.insert_array("shaper_x", vec![shaper_x.len()], shaper_x.to_vec())?;
        bundle.insert_array("shaper_y", vec![stages.channels, shaper_x.len()], stages.shaper_y)?;
    }
    let perturbed: Vec<f32> = audio
        .samples()
        .iter()
        .enumerate()
        .map(|(i, v)| v * 0.9 + 1e-3 * crate::noise::white_noise_sample(u64::MAX, i as u64))
        .collect();
    let perturbed_buf = AudioBuffer::new(perturbed, audio.sample_rate())?;
    if let Ok(loss) = mr_stft_loss(&audio, &perturbed_buf, &MrStftConfig::default()) {
        bundle.manifest.scalars.insert("mr_stft_perturbed".into(), loss);
    }
    bundle.insert_array("perturbed_audio", vec![audio.len()], perturbed_buf.into_samples())?;
    bundle.insert_array("audio", vec![audio.len()], audio.into_samples())?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("model.newt"), save_model(&load_model(model_bytes)?)?)?;
    bundle.save(dir)?;
    Ok(bundle)
}

struct Stages {
    z: Vec<f32>,
    z_dim: usize,
    affine: Vec<f32>,
    affine_dim: usize,
    noise: Vec<f32>,
    bins: usize,
    shaper_y: Vec<f32>,
    channels: usize,
}

impl Stages {
    fn compute(model: &Model, track: &ControlTrack, shaper_x: &[f32]) -> Result<Self> {
        let cfg = model.config();
        let frames = standardize(track, model.stats(), cfg.sample_rate)?;
        let z = model.encoder().encode(&frames, &mut model.encoder().initial_state())?;
        let affine = affine_mlp_forward(&z, model.affine_mlp(), cfg.n_newt_channels)?;
        let bank = noise_mlp_forward(&z, model.noise_mlp())?;
        let shaper_y = match model.shapers() {
            Some(shapers) => shapers
                .iter()
                .flat_map(|s| shaper_x.iter().map(move |&x| s.shape(x)))
                .collect(),
            None => model
                .tables()
                .iter()
                .flat_map(|t| shaper_x.iter().map(move |&x| t.shape(x)))
                .collect(),
        };
        Ok(Self {
            z_dim: z.dim(),
            z: z.values().to_vec(),
            affine_dim: affine.channels() * crate::newt::AFFINE_PLANES,
            affine: (0..affine.num_frames()).flat_map(|k| affine.frame(k).to_vec()).collect(),
            bins: bank.num_bins(),
            noise: bank.magnitudes().to_vec(),
            shaper_y,
            channels: cfg.n_newt_channels,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityCheck {
    pub stage: String,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityReport {
    pub checks: Vec<ParityCheck>,
}

impl ParityReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, stage: &str) -> Option<&ParityCheck> {
        self.checks.iter().find(|c| c.stage == stage)
    }
}

fn compare(stage: &str, want_shape: &[usize], want: &[f32], got_shape: &[usize], got: &[f32], tol: f64) -> ParityCheck {
    let max_abs_error = if want_shape != got_shape {
        f64::INFINITY
    } else {
        let diffs = want.iter().zip(got).map(|(a, b)| (*a as f64 - *b as f64).abs());
        diffs.fold(0.0, |m: f64, e| if e.is_nan() || m.is_nan() { f64::NAN } else { m.max(e) })
    };
    ParityCheck {
        stage: stage.into(),
        max_abs_error,
        tolerance: tol,
        passed: max_abs_error < tol,
    }
}

/// Compares every stage present in `bundle` against `model`.
pub fn check_parity(model: &Model, bundle: &FixtureBundle) -> Result<ParityReport> {
    let cfg = model.config();
    let track = bundle.control_track(cfg.hop_size)?;
    let n = track.num_frames();
    let shaper_x = bundle.array("shaper_x").map(|(_, x)| x.to_vec()).unwrap_or_default();
    let stages = Stages::compute(model, &track, &shaper_x)?;
    let mut checks = Vec::new();
    let mut cmp = |name: &str, shape: Vec<usize>, got: &[f32], tol: f64| {
        if let Some((want_shape, want)) = bundle.array(name) {
            checks.push(compare(name, want_shape, want, &shape, got, tol));
        }
    };
    cmp("z", vec![n, stages.z_dim], &stages.z, STAGE_PARITY_TOLERANCE);
    cmp("affine", vec![n, stages.affine_dim], &stages.affine, STAGE_PARITY_TOLERANCE);
    cmp("noise_magnitudes", vec![n, stages.bins], &stages.noise, STAGE_PARITY_TOLERANCE);
    if !shaper_x.is_empty() {
        cmp("shaper_y", vec![stages.channels, shaper_x.len()], &stages.shaper_y, STAGE_PARITY_TOLERANCE);
    }
    let audio = model.render(&track, &bundle.render_options())?;
    cmp("audio", vec![audio.len()], audio.samples(), AUDIO_PARITY_TOLERANCE);

    if let (Some((_, golden)), Some((_, perturbed)), Some(&want)) = (
        bundle.array("audio"),
        bundle.array("perturbed_audio"),
        bundle.manifest.scalars.get("mr_stft_perturbed"),
    ) {
        let a = AudioBuffer::new(golden.to_vec(), cfg.sample_rate)?;
        let b = AudioBuffer::new(perturbed.to_vec(), cfg.sample_rate)?;
        let got = mr_stft_loss(&a, &b, &MrStftConfig::default())?;
        let err = (got - want).abs();
        checks.push(ParityCheck {
            stage: "mr_stft_perturbed".into(),
            max_abs_error: err,
            tolerance: LOSS_PARITY_TOLERANCE,
            passed: err < LOSS_PARITY_TOLERANCE,
        });
    }
    Ok(ParityReport { checks })
}
