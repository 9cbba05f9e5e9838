#![allow(dead_code)]

use newt_core::ModelConfig;

/// Direct-form full linear convolution in f64.
pub fn direct_convolve(x: &[f32], h: &[f32]) -> Vec<f64> {
    let mut y = vec![0.0f64; x.len() + h.len() - 1];
    for (i, &a) in x.iter().enumerate() {
        for (j, &b) in h.iter().enumerate() {
            y[i + j] += a as f64 * b as f64;
        }
    }
    y
}

pub fn cosine(freq: f64, amp: f64, len: usize, sr: u32) -> Vec<f32> {
    (0..len)
        .map(|n| (amp * (std::f64::consts::TAU * freq * n as f64 / sr as f64).cos()) as f32)
        .collect()
}

pub fn db(ratio: f64) -> f64 {
    20.0 * ratio.log10()
}

/// Small but structurally complete model configuration for fast tests.
pub fn small_config() -> ModelConfig {
    ModelConfig {
        n_harmonics: 16,
        n_newt_channels: 4,
        control_dim: 16,
        mlp_hidden: 16,
        noise_fir_taps: 64,
        reverb_length: 2000,
        ..ModelConfig::default()
    }
}
