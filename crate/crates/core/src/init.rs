//! Random initialization of untrained models, for fixtures, benchmarks and the demo.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::reverb::init_reverb_ir;
use crate::weights::{ModelConfig, ModelFile, NormalizationStats, Tensor, TensorStore};

/// Input gain folded into the first shaper layer.
pub const SHAPER_FIRST_LAYER_GAIN: f32 = 3.0;

const REVERB_SEED_OFFSET: u64 = 0x2e7e_7b00;

/// Control statistics given to untrained models: F0 around 400 Hz, loudness around -40 dB.
pub const UNTRAINED_STATS: ([f32; 2], [f32; 2]) = ([400.0, -40.0], [200.0, 15.0]);

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f32) -> Vec<f32> {
    let d = Uniform::new_inclusive(-bound, bound);
    (0..n).map(|_| d.sample(rng)).collect()
}

/// Builds an untrained model with PyTorch-style uniform initialization.
pub fn random_model(config: &ModelConfig, seed: u64) -> Result<ModelFile> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let required = config.required_tensors();
    let shapes: BTreeMap<&str, &[usize]> = required.iter().map(|(n, s)| (n.as_str(), s.as_slice())).collect();
    let mut tensors = TensorStore::new();
    for (name, shape) in &required {
        let n: usize = shape.iter().product();
        let data = if name == "reverb.ir" {
            init_reverb_ir(shape[0], seed.wrapping_add(REVERB_SEED_OFFSET))?.taps().to_vec()
        } else if name.ends_with(".ln.gain") {
            vec![1.0; n]
        } else if name.ends_with(".ln.bias") {
            vec![0.0; n]
        } else if name.starts_with("control_gru.") {
            uniform(&mut rng, n, 1.0 / (config.control_dim as f32).sqrt())
        } else {
            let (layer, kind) = name.rsplit_once('.').expect("dotted tensor name");
            let fan_in = shapes[format!("{layer}.weight").as_str()][1] as f32;
            let bound = match (name.starts_with("newt.shaper."), kind) {
                (true, "weight") if layer.ends_with("layer0") => SHAPER_FIRST_LAYER_GAIN,
                (true, "weight") => (6.0 / fan_in).sqrt(),
                _ => 1.0 / fan_in.sqrt(),
            };
            uniform(&mut rng, n, bound)
        };
        tensors.insert(name.clone(), Tensor::new(shape.clone(), data)?)?;
    }
    let (mean, std) = UNTRAINED_STATS;
    Ok(ModelFile {
        config: config.clone(),
        tensors,
        stats: NormalizationStats::new(mean, std)?,
        tables: None,
    })
}
