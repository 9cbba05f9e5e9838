mod common;

use common::small_config;
use newt_core::control::standardize;
use newt_core::engine::benchmark_track;
use newt_core::init::random_model;
use newt_core::verify::verify_model;
use newt_core::weights::Tensor;
use newt_core::{load_model, save_model, ControlTrack, Error, Model, ModelConfig, RenderOptions};
use proptest::prelude::*;

fn small_model(seed: u64) -> Model {
    Model::from_file(&random_model(&small_config(), seed).unwrap()).unwrap()
}

fn varied_track(frames: usize, hop: usize) -> ControlTrack {
    let f0 = (0..frames).map(|k| 180.0 + 150.0 * (k as f32 * 0.05).sin()).collect();
    let loud = (0..frames).map(|k| -40.0 + 15.0 * (k as f32 * 0.031).cos()).collect();
    ControlTrack::new(f0, loud, None, hop).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn encoder_is_causal_and_splits(cut in 1usize..40, change_at in 0usize..40) {
        let model = small_model(4);
        let enc = model.encoder();
        let track = varied_track(40, 128);
        let frames = standardize(&track, model.stats(), 16000).unwrap();
        let whole = enc.encode(&frames, &mut enc.initial_state()).unwrap();

        let mut state = enc.initial_state();
        let a = enc.encode(&standardize(&track.slice(0..cut), model.stats(), 16000).unwrap(), &mut state).unwrap();
        let b = enc.encode(&standardize(&track.slice(cut..40), model.stats(), 16000).unwrap(), &mut state).unwrap();
        let joined: Vec<f32> = a.values().iter().chain(b.values()).copied().collect();
        prop_assert_eq!(joined.as_slice(), whole.values());

        let mut f0 = track.f0().to_vec();
        f0[change_at] += 200.0;
        let altered = ControlTrack::new(f0, track.loudness().to_vec(), None, 128).unwrap();
        let z2 = enc.encode(&standardize(&altered, model.stats(), 16000).unwrap(), &mut enc.initial_state()).unwrap();
        for k in 0..change_at {
            prop_assert_eq!(z2.frame(k), whole.frame(k));
        }
        prop_assert_ne!(z2.frame(change_at), whole.frame(change_at));
    }

    #[test]
    fn streaming_matches_one_shot_for_any_block(blocks in 1usize..12, fast in any::<bool>()) {
        let model = small_model(5);
        let track = varied_track(37, 128);
        let opts = RenderOptions { use_fastnewt: fast, block_size: blocks * 128, ..RenderOptions::default() };
        let one = model.render(&track, &opts).unwrap();
        let mut state = model.new_state(&opts);
        let streamed: Vec<f32> = model.render_streaming(&track, &opts, &mut state).unwrap().concat();
        prop_assert_eq!(streamed.as_slice(), one.samples());
    }
}

#[test]
fn reference_model_renders_four_seconds() {
    let model = Model::from_file(&random_model(&ModelConfig::default(), 1).unwrap()).unwrap();
    let track = varied_track(500, 128);
    let audio = model.render(&track, &RenderOptions::default()).unwrap();
    assert_eq!(audio.len(), 64000);
    assert!(audio.samples().iter().all(|v| v.is_finite()));
    assert!(audio.samples().iter().any(|&v| v != 0.0));
}

#[test]
fn causal_render_prefix_is_unaffected_by_future_controls() {
    let model = small_model(6);
    let track = varied_track(30, 128);
    let mut f0 = track.f0().to_vec();
    f0[20] = 900.0;
    let altered = ControlTrack::new(f0, track.loudness().to_vec(), None, 128).unwrap();
    let a = model.render(&track, &RenderOptions::default()).unwrap();
    let b = model.render(&altered, &RenderOptions::default()).unwrap();
    assert_eq!(a.samples()[..20 * 128], b.samples()[..20 * 128]);
    assert_ne!(a.samples()[20 * 128..], b.samples()[20 * 128..]);
}

#[test]
fn reset_state_reproduces_render() {
    let model = small_model(8);
    let track = varied_track(12, 128);
    let opts = RenderOptions::default();
    let mut state = model.new_state(&opts);
    let first = model.process_chunk(&track, &opts, &mut state).unwrap();
    state.reset();
    let second = model.process_chunk(&track, &opts, &mut state).unwrap();
    assert_eq!(first, second);
}

#[test]
fn seed_controls_noise() {
    let model = small_model(9);
    let track = varied_track(20, 128);
    let render = |seed| {
        model
            .render(&track, &RenderOptions { noise_seed: seed, ..RenderOptions::default() })
            .unwrap()
    };
    assert_eq!(render(3), render(3));
    assert_ne!(render(3), render(4));
}

#[test]
fn non_finite_tensor_is_named() {
    let mut file = random_model(&small_config(), 2).unwrap();
    file.tensors.get_mut("noise.mlp.layer1.bias").unwrap().data_mut()[0] = f32::NAN;
    match Model::from_file(&file) {
        Err(Error::Schema(msg)) => assert!(msg.contains("noise.mlp.layer1.bias")),
        other => panic!("{other:?}"),
    }
    let report = verify_model(&file);
    assert!(!report.passed());
    assert!(report.failures().any(|c| c.detail.contains("noise.mlp.layer1.bias")));
}

#[test]
fn nonzero_first_reverb_tap_rejected() {
    let mut file = random_model(&small_config(), 2).unwrap();
    file.tensors.get_mut("reverb.ir").unwrap().data_mut()[0] = 0.5;
    assert!(matches!(Model::from_file(&file), Err(Error::Schema(_))));
    let report = verify_model(&file);
    assert!(report.failures().any(|c| c.module == "reverb"));
}

#[test]
fn extra_tensor_rejected_on_load() {
    let mut file = random_model(&small_config(), 2).unwrap();
    file.tensors.insert("bonus.weight", Tensor::new(vec![1], vec![0.0]).unwrap()).unwrap();
    // saving validates the schema too
    assert!(matches!(save_model(&file), Err(Error::Schema(m)) if m.contains("bonus.weight")));
}

#[test]
fn verify_passes_fresh_and_baked_models() {
    let mut file = random_model(&small_config(), 3).unwrap();
    let report = verify_model(&file);
    assert!(report.passed(), "{report:#?}");

    let model = Model::from_file(&file).unwrap();
    file.tables = Some(model.bake(4096, -3.0, 3.0).unwrap());
    let report = verify_model(&file);
    assert!(report.passed(), "{report:#?}");
    let errs = report.bake_errors.unwrap();
    assert_eq!(errs.len(), 4);
    assert!(errs.iter().all(|e| *e < 1e-2));

    // a table that disagrees with its shaper fails the fidelity check
    let mut bad = file.tables.clone().unwrap();
    let mut samples = bad[1].samples().to_vec();
    samples[2000] += 5.0;
    bad[1] = newt_core::newt::FastNewtTable::from_samples(samples, -3.0, 3.0).unwrap();
    file.tables = Some(bad);
    assert!(!verify_model(&file).passed());
}

#[test]
fn baked_only_model_renders_with_tables() {
    let full = random_model(&small_config(), 3).unwrap();
    let model = Model::from_file(&full).unwrap();
    let mut baked = full.clone();
    baked.tables = Some(model.bake(4096, -3.0, 3.0).unwrap());
    for name in small_config().shaper_tensors().into_iter().map(|(n, _)| n) {
        baked.tensors.remove(&name);
    }
    let reloaded = load_model(&save_model(&baked).unwrap()).unwrap();
    assert!(!reloaded.has_shapers());
    let baked_model = Model::from_file(&reloaded).unwrap();
    let track = benchmark_track(&small_config(), 0.5).unwrap();
    let fast = RenderOptions { use_fastnewt: true, ..RenderOptions::default() };
    assert_eq!(
        baked_model.render(&track, &fast).unwrap(),
        model.render(&track, &fast).unwrap()
    );
    assert!(baked_model.render(&track, &RenderOptions::default()).is_err());
    assert!(verify_model(&reloaded).passed());
}

#[test]
fn hop_mismatch_is_alignment_error() {
    let model = small_model(1);
    let track = ControlTrack::constant(200.0, -30.0, 4, 64).unwrap();
    assert!(matches!(model.render(&track, &RenderOptions::default()), Err(Error::Alignment(_))));
}
