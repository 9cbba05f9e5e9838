//! Harmonic exciter: a band-limited bank of harmonic cosines mixed into one
//! weighted mixture per waveshaping channel.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::signal::ChannelBlock;
use crate::weights::TensorStore;

/// Accumulated phase of the fundamental, kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OscillatorState {
    pub phase: f64,
}

impl OscillatorState {
    pub fn reset(&mut self) {
        self.phase = 0.0;
    }
}

/// True when harmonic `k` of `f0` lies strictly below Nyquist.
#[inline]
pub fn antialias_mask(f0: f64, k: usize, sample_rate: u32) -> bool {
    (k as f64) * f0 < sample_rate as f64 / 2.0
}

/// Number of harmonics `1..=max_k` that pass the antialias mask for `f0`.
#[inline]
fn active_harmonics(f0: f64, max_k: usize, sample_rate: u32) -> usize {
    let nyquist = sample_rate as f64 / 2.0;
    let mut k = ((nyquist / f0).ceil() as usize).saturating_sub(1).min(max_k);
    // correct for rounding at the boundary
    while k < max_k && antialias_mask(f0, k + 1, sample_rate) {
        k += 1;
    }
    while k > 0 && !antialias_mask(f0, k, sample_rate) {
        k -= 1;
    }
    k
}

/// Mixer from `n_harmonics` oscillators to `n_newt_channels` exciter channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ExciterWeights {
    mixer: Linear,
}

impl ExciterWeights {
    /// `weight` is `[n_channels, n_harmonics]`, row-major.
    pub fn new(weight: Vec<f32>, bias: Vec<f32>, n_harmonics: usize, n_channels: usize) -> Result<Self> {
        Ok(Self {
            mixer: Linear::new(weight, bias, n_harmonics, n_channels)?,
        })
    }

    pub(crate) fn from_store(store: &TensorStore, n_harmonics: usize, n_channels: usize) -> Result<Self> {
        Ok(Self {
            mixer: Linear::from_store(store, "exciter.mixer", n_harmonics, n_channels)?,
        })
    }

    pub fn n_harmonics(&self) -> usize {
        self.mixer.in_dim()
    }

    pub fn n_channels(&self) -> usize {
        self.mixer.out_dim()
    }

    /// Renders `y_i[n] = Σ_k A(k f0[n]) w_ik cos(k φ[n]) + b_i` with
    /// `φ[n] = φ[n-1] + 2π f0[n] / sr`, continuing from `state`.
    pub fn render(&self, f0: &[f32], state: &mut OscillatorState, sample_rate: u32) -> Result<ChannelBlock> {
        if let Some(n) = f0.iter().position(|&f| !(f.is_finite() && f > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "f0 must be positive and finite, got {} at sample {n}",
                f0[n]
            )));
        }
        let len = f0.len();
        let n_harm = self.n_harmonics();
        let mut harmonics = vec![0.0f32; n_harm * len];
        let mut max_active = 0;
        let inc_scale = TAU / sample_rate as f64;
        let mut phase = state.phase;
        for (n, &f) in f0.iter().enumerate() {
            let f = f as f64;
            phase += inc_scale * f;
            if phase >= TAU {
                phase = phase.rem_euclid(TAU);
            }
            let active = active_harmonics(f, n_harm, sample_rate);
            max_active = max_active.max(active);
            // cos(kφ) by the Chebyshev recurrence
            let c1 = phase.cos();
            let (mut prev, mut cur) = (1.0f64, c1);
            for k in 0..active {
                harmonics[k * len + n] = cur as f32;
                let next = 2.0 * c1 * cur - prev;
                prev = cur;
                cur = next;
            }
        }
        state.phase = phase;

        let mut out = ChannelBlock::zeros(self.n_channels(), len);
        let weight = self.mixer.weight();
        for (i, &b) in self.mixer.bias().iter().enumerate() {
            let row = &weight[i * n_harm..(i + 1) * n_harm];
            let y = out.channel_mut(i);
            for (k, &w) in row.iter().enumerate().take(max_active) {
                let h = &harmonics[k * len..(k + 1) * len];
                for (acc, &hv) in y.iter_mut().zip(h) {
                    *acc += w * hv;
                }
            }
            y.iter_mut().for_each(|v| *v += b);
        }
        Ok(out)
    }
}

/// Free-function form of [`ExciterWeights::render`].
pub fn render_exciter(
    f0_audio_rate: &[f32],
    weights: &ExciterWeights,
    state: &mut OscillatorState,
    sample_rate: u32,
) -> Result<ChannelBlock> {
    weights.render(f0_audio_rate, state, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_examples() {
        let active: Vec<usize> = (1..=101).filter(|&k| antialias_mask(440.0, k, 16000)).collect();
        assert_eq!(active, (1..=18).collect::<Vec<_>>());
        assert!(!antialias_mask(4001.0, 2, 16000));
        assert!(antialias_mask(7999.0, 1, 16000));
        // exactly at Nyquist is masked
        assert!(!antialias_mask(1000.0, 8, 16000));
    }

    #[test]
    fn active_count_matches_mask() {
        for f0 in [1.0, 55.0, 440.0, 1000.0, 1333.3, 4000.0, 4001.0, 7999.9, 9000.0] {
            let brute = (1..=101).filter(|&k| antialias_mask(f0, k, 16000)).count();
            assert_eq!(active_harmonics(f0, 101, 16000), brute, "f0 {f0}");
        }
    }

    #[test]
    fn bias_only_is_constant() {
        let w = ExciterWeights::new(vec![0.0; 3 * 5], vec![0.3; 3], 5, 3).unwrap();
        let out = w.render(&[220.0; 64], &mut OscillatorState::default(), 16000).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn single_harmonic_is_unit_cosine() {
        let mut weight = vec![0.0; 2 * 4];
        weight[0] = 1.0;
        let w = ExciterWeights::new(weight, vec![0.0; 2], 4, 2).unwrap();
        let out = w.render(&[500.0; 200], &mut OscillatorState::default(), 16000).unwrap();
        for (n, &v) in out.channel(0).iter().enumerate() {
            let expect = (TAU * 500.0 * (n + 1) as f64 / 16000.0).cos();
            assert!((v as f64 - expect).abs() < 1e-6);
        }
        assert!(out.channel(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_non_positive_f0() {
        let w = ExciterWeights::new(vec![0.0; 4], vec![0.0], 4, 1).unwrap();
        let err = w.render(&[100.0, 0.0], &mut OscillatorState::default(), 16000);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn phase_stays_wrapped() {
        let w = ExciterWeights::new(vec![1.0; 4], vec![0.0], 4, 1).unwrap();
        let mut s = OscillatorState::default();
        w.render(&[7000.0; 1000], &mut s, 16000).unwrap();
        assert!((0.0..TAU).contains(&s.phase));
    }
}
