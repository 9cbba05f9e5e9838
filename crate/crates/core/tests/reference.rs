//! Agreement with PyTorch / NumPy reference outputs (tests/fixtures/gen_reference.py).

use std::sync::OnceLock;

use newt_core::control::{gru_step, GruState, GruWeights};
use newt_core::exciter::{ExciterWeights, OscillatorState};
use newt_core::metrics::{mr_stft_report, MrStftConfig};
use newt_core::newt::{Shaper, ShaperMlp};
use newt_core::nn::{LayerNorm, LayerNormMlp, Linear};
use newt_core::noise::{design_fir, magnitude_from_logit};
use newt_core::signal::stft_magnitude;
use newt_core::AudioBuffer;
use serde_json::Value;

fn fixture() -> &'static Value {
    static F: OnceLock<Value> = OnceLock::new();
    F.get_or_init(|| {
        let text = include_str!("fixtures/reference.json");
        serde_json::from_str(text).expect("fixture parses")
    })
}

fn floats(v: &Value) -> Vec<f32> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap() as f32).collect()
}

fn floats64(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn usize_of(v: &Value) -> usize {
    v.as_u64().unwrap() as usize
}

fn assert_close(got: &[f32], want: &[f64], tol: f64, what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        let err = (*g as f64 - w).abs();
        assert!(err <= tol * w.abs().max(1.0), "{what}[{i}]: got {g}, want {w}");
    }
}

#[test]
fn gru_matches_torch() {
    let g = &fixture()["gru"];
    let (inp, hid) = (usize_of(&g["input"]), usize_of(&g["hidden"]));
    let w = GruWeights::new(
        floats(&g["w_ih"]),
        floats(&g["w_hh"]),
        floats(&g["b_ih"]),
        floats(&g["b_hh"]),
        inp,
        hid,
    )
    .unwrap();
    let x = floats(&g["x"]);
    let mut state = GruState { h: floats(&g["h0"]) };
    let mut got = Vec::new();
    for step in x.chunks(inp) {
        gru_step(step, &mut state, &w).unwrap();
        got.extend_from_slice(&state.h);
    }
    assert_close(&got, &floats64(&g["outputs"]), 1e-5, "gru");
}

#[test]
fn layer_norm_mlp_matches_torch() {
    let m = &fixture()["ln_mlp"];
    let dims: Vec<usize> = m["dims"].as_array().unwrap().iter().map(usize_of).collect();
    let layers = m["layers"].as_array().unwrap();
    let lin = |j: usize| {
        Linear::new(floats(&layers[j]["weight"]), floats(&layers[j]["bias"]), dims[j], dims[j + 1]).unwrap()
    };
    let hidden = (0..3)
        .map(|j| {
            let ln = LayerNorm::new(floats(&layers[j]["ln_gain"]), floats(&layers[j]["ln_bias"])).unwrap();
            (lin(j), ln)
        })
        .collect();
    let mlp = LayerNormMlp::new(hidden, lin(3)).unwrap();
    let got = mlp.forward_rows(&floats(&m["x"]));
    assert_close(&got, &floats64(&m["y"]), 1e-5, "ln_mlp");
}

#[test]
fn shaper_matches_torch() {
    let s = &fixture()["shaper"];
    let widths: Vec<usize> = s["widths"].as_array().unwrap().iter().map(usize_of).collect();
    let layers = s["layers"].as_array().unwrap();
    let shaper = ShaperMlp::new(
        (0..4)
            .map(|j| {
                Linear::new(floats(&layers[j]["weight"]), floats(&layers[j]["bias"]), widths[j], widths[j + 1])
                    .unwrap()
            })
            .collect(),
    )
    .unwrap();
    let got: Vec<f32> = floats(&s["x"]).iter().map(|&x| shaper.shape(x)).collect();
    assert_close(&got, &floats64(&s["y"]), 1e-5, "shaper");
}

#[test]
fn magnitude_map_matches_torch() {
    let m = &fixture()["magnitude_map"];
    let got: Vec<f32> = floats(&m["x"]).iter().map(|&x| magnitude_from_logit(x)).collect();
    assert_close(&got, &floats64(&m["y"]), 1e-6, "magnitude_map");
}

#[test]
fn design_fir_matches_numpy() {
    let d = &fixture()["design_fir"];
    let got = design_fir(&floats(&d["magnitude"])).unwrap();
    assert_close(&got, &floats64(&d["taps"]), 1e-6, "design_fir");
}

#[test]
fn stft_matches_torch() {
    let s = &fixture()["stft"];
    let x = AudioBuffer::new(floats(&s["signal"]), 16000).unwrap();
    let spec = stft_magnitude(&x, usize_of(&s["window"]), usize_of(&s["hop"])).unwrap();
    assert_eq!(spec.num_frames(), usize_of(&s["frames"]));
    let got: Vec<f32> = spec.magnitudes().iter().map(|&v| v as f32).collect();
    assert_close(&got, &floats64(&s["magnitudes"]), 1e-5, "stft");
}

#[test]
fn mr_stft_matches_torch() {
    let m = &fixture()["mr_stft"];
    let a = AudioBuffer::new(floats(&m["a"]), 16000).unwrap();
    let b = AudioBuffer::new(floats(&m["b"]), 16000).unwrap();
    let report = mr_stft_report(&a, &b, &MrStftConfig::default()).unwrap();
    for (got, want) in report.scales.iter().zip(m["scales"].as_array().unwrap()) {
        assert_eq!(got.window, usize_of(&want["window"]));
        assert!((got.spectral_convergence - want["sc"].as_f64().unwrap()).abs() < 1e-9);
        assert!((got.log_magnitude - want["lm"].as_f64().unwrap()).abs() < 1e-7);
    }
    assert!((report.total - m["total"].as_f64().unwrap()).abs() < 1e-7);
}

#[test]
fn exciter_matches_numpy() {
    let e = &fixture()["exciter"];
    let (k, c) = (usize_of(&e["n_harmonics"]), usize_of(&e["n_channels"]));
    let w = ExciterWeights::new(floats(&e["weight"]), floats(&e["bias"]), k, c).unwrap();
    let f0 = floats(&e["f0"]);
    let out = w
        .render(&f0, &mut OscillatorState::default(), e["sample_rate"].as_u64().unwrap() as u32)
        .unwrap();
    let got: Vec<f32> = (0..c).flat_map(|i| out.channel(i).to_vec()).collect();
    assert_close(&got, &floats64(&e["y"]), 2e-5, "exciter");
}
