mod common;

use newt_core::metrics::{
    hop_for, log_magnitude_distance, mr_stft_report, spectral_convergence, MrStftConfig, LOG_EPSILON,
};
use newt_core::signal::stft_magnitude;
use newt_core::AudioBuffer;
use proptest::prelude::*;

fn audio(x: Vec<f32>) -> AudioBuffer {
    AudioBuffer::new(x, 16000).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn loss_identities(x in prop::collection::vec(-1.0f32..1.0, 2048..5000)) {
        let a = audio(x.clone());
        let half = audio(x.iter().map(|v| v * 0.5).collect());
        let double = audio(x.iter().map(|v| v * 2.0).collect());
        for m in [512usize, 1024, 2048] {
            prop_assert_eq!(spectral_convergence(&a, &a, m).unwrap(), 0.0);
            prop_assert!((spectral_convergence(&a, &half, m).unwrap() - 0.5).abs() < 1e-6);
            let spec = stft_magnitude(&a, m, hop_for(m)).unwrap();
            // every element shifts by ln 2 once both magnitudes clear the floor
            let elements = spec.magnitudes().iter().filter(|&&v| v > LOG_EPSILON).count();
            prop_assert_eq!(elements, spec.magnitudes().len());
            let want = elements as f64 / m as f64 * std::f64::consts::LN_2;
            let got = log_magnitude_distance(&a, &double, m, LOG_EPSILON).unwrap();
            prop_assert!((got - want).abs() < 1e-6, "m {}: {} vs {}", m, got, want);
        }
    }
}

#[test]
fn report_total_is_mean_of_scale_sums() {
    let x: Vec<f32> = common::cosine(300.0, 0.5, 6000, 16000);
    let y: Vec<f32> = common::cosine(310.0, 0.4, 6000, 16000);
    let r = mr_stft_report(&audio(x), &audio(y), &MrStftConfig::default()).unwrap();
    assert_eq!(r.scales.len(), 3);
    let mean = r.scales.iter().map(|s| s.spectral_convergence + s.log_magnitude).sum::<f64>() / 3.0;
    assert!((r.total - mean).abs() < 1e-12);
}

#[test]
fn too_short_for_largest_window() {
    let x = audio(vec![0.1; 1000]);
    assert!(matches!(
        mr_stft_report(&x, &x, &MrStftConfig::default()),
        Err(newt_core::Error::EmptySpectrogram(_))
    ));
}
