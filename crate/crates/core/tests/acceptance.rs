//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::path::PathBuf;
use std::time::Instant;

use newt_core::engine::{measure_rtf, RenderMode};
use newt_core::exciter::{antialias_mask, ExciterWeights, OscillatorState};
use newt_core::fixtures::{check_parity, FixtureBundle};
use newt_core::init::random_model;
use newt_core::metrics::{
    harmonic_levels, hop_for, log_magnitude_distance, mr_stft_loss, spectral_convergence, MrStftConfig, LOG_EPSILON,
};
use newt_core::newt::{bake_error, bake_fastnewt, Shaper, BAKE_PROBE_FACTOR};
use newt_core::noise::design_fir;
use newt_core::reverb::{apply_reverb, Reverb, ReverbIr};
use newt_core::signal::{fft_convolve, stft_magnitude};
use newt_core::{save_model, AudioBuffer, ControlTrack, Model, ModelConfig, RenderOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SR: u32 = 16000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn fixture_model() -> Model {
    Model::from_file(&random_model(&ModelConfig::default(), 1).expect("init")).expect("model")
}

fn four_second_track() -> ControlTrack {
    let frames = 500;
    let f0 = (0..frames)
        .map(|k| 196.0 * 2f32.powf(k as f32 / 250.0) * (1.0 + 0.01 * (k as f32 * 0.6).sin()))
        .collect();
    let loud = (0..frames)
        .map(|k| -50.0 + 25.0 * (std::f32::consts::PI * k as f32 / 500.0).sin())
        .collect();
    ControlTrack::new(f0, loud, None, 128).expect("track")
}

fn direct(x: &[f32], h: &[f32]) -> Vec<f64> {
    let mut y = vec![0.0f64; x.len() + h.len() - 1];
    for (i, &a) in x.iter().enumerate() {
        for (j, &b) in h.iter().enumerate() {
            y[i + j] += a as f64 * b as f64;
        }
    }
    y
}

fn streaming(model: &Model, track: &ControlTrack) -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f32;
    let mut sizes = Vec::new();
    for use_fastnewt in [false, true] {
        let base = RenderOptions { use_fastnewt, ..RenderOptions::default() };
        let one = model.render(track, &base).expect("render");
        for b in (8..=15).map(|e| 1usize << e) {
            let opts = RenderOptions { block_size: b, ..base.clone() };
            let mut state = model.new_state(&opts);
            let s = model.render_streaming(track, &opts, &mut state).expect("stream").concat();
            let diff = if s.len() == one.len() {
                s.iter().zip(one.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max)
            } else {
                f32::INFINITY
            };
            worst = worst.max(diff);
            if !use_fastnewt {
                sizes.push(b);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst == 0.0 && secs < 60.0,
        format!("B = {sizes:?}, NWS and NWS-FN, max abs diff {worst:e}, {secs:.1} s"),
    )
}

fn real_time(model: &Model) -> Outcome {
    let runs = 100;
    let nws = measure_rtf(model, 4.0, &RenderOptions::default(), runs, RenderMode::OneShot).expect("rtf");
    let fast = RenderOptions { use_fastnewt: true, ..RenderOptions::default() };
    let fnws = measure_rtf(model, 4.0, &fast, runs, RenderMode::OneShot).expect("rtf");
    outcome(
        nws.mean < 1.0 && fnws.mean < 1.0 && fnws.mean <= nws.mean,
        format!(
            "{runs} runs x 4 s: NWS mean {:.4} (p90 {:.4}), NWS-FN mean {:.4} (p90 {:.4})",
            nws.mean, nws.p90, fnws.mean, fnws.p90
        ),
    )
}

fn fastnewt_fidelity(model: &Model, track: &ControlTrack) -> Outcome {
    let a = model.render(track, &RenderOptions::default()).expect("render");
    let b = model
        .render(track, &RenderOptions { use_fastnewt: true, ..RenderOptions::default() })
        .expect("render");
    let loss = mr_stft_loss(&a, &b, &MrStftConfig::default()).expect("loss");
    let tables = model.bake(4096, -3.0, 3.0).expect("bake");
    let errs: Vec<f32> = model
        .shapers()
        .expect("shapers")
        .iter()
        .zip(&tables)
        .map(|(s, t)| bake_error(s, t, BAKE_PROBE_FACTOR).relative())
        .collect();
    let worst = errs.iter().copied().fold(0.0f32, f32::max);
    let mean = errs.iter().sum::<f32>() / errs.len() as f32;
    outcome(
        loss < 0.1 && worst < 1e-2,
        format!(
            "mr-STFT(NWS, NWS-FN) {loss:.5}; bake error over {} channels: worst {worst:.2e}, mean {mean:.2e} of range",
            errs.len()
        ),
    )
}

fn dsp_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let instances = 120;
    let (mut conv_err, mut rev_err) = (0.0f64, 0.0f64);
    for _ in 0..instances {
        let nx = rng.gen_range(1..=256);
        let nh = rng.gen_range(1..=256);
        let x: Vec<f32> = (0..nx).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f32> = (0..nh).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = fft_convolve(&AudioBuffer::new(x.clone(), SR).unwrap(), &h).unwrap();
        let want = direct(&x, &h);
        conv_err = y.samples().iter().zip(&want).map(|(a, b)| (*a as f64 - b).abs()).fold(conv_err, f64::max);
        if y.len() != want.len() {
            conv_err = f64::INFINITY;
        }

        let part = rng.gen_range(1..=64);
        let blocks = rng.gen_range(1..=8);
        let mut ir = h.clone();
        ir[0] = 0.0;
        let reverb = Reverb::new(&ReverbIr::new(ir.clone()).unwrap(), part).unwrap();
        let sig: Vec<f32> = (0..part * blocks).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = apply_reverb(&AudioBuffer::new(sig.clone(), SR).unwrap(), &reverb, &mut reverb.initial_state()).unwrap();
        let wet = direct(&sig, &ir);
        rev_err = out
            .samples()
            .iter()
            .enumerate()
            .map(|(n, v)| (*v as f64 - (sig[n] as f64 + wet[n])).abs())
            .fold(rev_err, f64::max);
    }
    let mut bins_ok = true;
    for bin in [2usize, 8, 31, 64, 120] {
        let mut mag = vec![0.0f32; 129];
        mag[bin] = 1.0;
        let ir = design_fir(&mag).unwrap();
        let spec = stft_magnitude(&AudioBuffer::new(ir, SR).unwrap(), 256, 256).unwrap();
        let frame = spec.frame(0);
        let peak = (0..frame.len()).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap();
        bins_ok &= peak == bin;
    }
    outcome(
        conv_err < 1e-5 && rev_err < 1e-5 && bins_ok,
        format!(
            "{instances} instances: fft_convolve max err {conv_err:.2e}, apply_reverb max err {rev_err:.2e}; design_fir peak bins {}",
            if bins_ok { "match" } else { "MISMATCH" }
        ),
    )
}

struct Chebyshev(usize);
impl Shaper for Chebyshev {
    fn shape(&self, x: f32) -> f32 {
        let x = x as f64;
        let (mut a, mut b) = (1.0f64, x);
        for _ in 1..self.0 {
            (a, b) = (b, 2.0 * x * b - a);
        }
        b as f32
    }
}

fn waveshaping_theory() -> Outcome {
    let f0 = 250.0;
    let x: Vec<f32> = (0..16384)
        .map(|n| (std::f64::consts::TAU * f0 * n as f64 / SR as f64).cos() as f32)
        .collect();
    let mut margins = Vec::new();
    for k in 2..=5 {
        let table = bake_fastnewt(&Chebyshev(k), 4096, -1.0, 1.0).unwrap();
        let y: Vec<f32> = x.iter().map(|&v| table.shape(v)).collect();
        let levels = harmonic_levels(&AudioBuffer::new(y, SR).unwrap(), f0, 31).unwrap();
        let target = levels.iter().find(|(h, _)| *h == k).unwrap().1;
        let other = levels.iter().filter(|(h, _)| *h != k).map(|(_, l)| *l).fold(0.0, f64::max);
        margins.push(20.0 * (target / other).log10());
    }
    let cheb_ok = margins.iter().all(|&m| m >= 40.0);

    // exciter: nothing but the masked harmonics, so no energy away from them
    let k = 80;
    let weights = ExciterWeights::new(vec![1.0; k], vec![0.0], k, 1).unwrap();
    let mut worst_alias = f64::NEG_INFINITY;
    for f0 in [110.0f32, 440.0, 1234.5, 3001.0, 7000.0] {
        let y = weights.render(&vec![f0; 16384], &mut OscillatorState::default(), SR).unwrap();
        let m = 8192;
        let spec = stft_magnitude(&AudioBuffer::new(y.channel(0).to_vec(), SR).unwrap(), m, m / 4)
            .unwrap()
            .mean_spectrum();
        let bin_hz = SR as f64 / m as f64;
        let active: Vec<f64> = (1..=k)
            .filter(|&h| antialias_mask(f0 as f64, h, SR))
            .map(|h| h as f64 * f0 as f64)
            .collect();
        let peak = spec.iter().cloned().fold(0.0, f64::max);
        for (b, &v) in spec.iter().enumerate() {
            let f = b as f64 * bin_hz;
            if active.iter().all(|h| (f - h).abs() > 10.0 * bin_hz) {
                worst_alias = worst_alias.max(20.0 * (v / peak).log10());
            }
        }
    }
    outcome(
        cheb_ok && worst_alias < -60.0,
        format!(
            "T_2..T_5 dominance {} dB (need >= 40); exciter off-harmonic energy <= {worst_alias:.1} dB",
            margins.iter().map(|m| format!("{m:.1}")).collect::<Vec<_>>().join("/")
        ),
    )
}

fn loss_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f32> = (0..8000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a = AudioBuffer::new(x.clone(), SR).unwrap();
    let half = a.scaled(0.5).unwrap();
    let double = a.scaled(2.0).unwrap();
    let mut worst_sc0 = 0.0f64;
    let mut worst_sc = 0.0f64;
    let mut worst_lm = 0.0f64;
    for m in [512usize, 1024, 2048] {
        worst_sc0 = worst_sc0.max(spectral_convergence(&a, &a, m).unwrap());
        worst_sc = worst_sc.max((spectral_convergence(&a, &half, m).unwrap() - 0.5).abs());
        let frames = (x.len() - m) / hop_for(m) + 1;
        let analytic = (frames * (m / 2 + 1)) as f64 / m as f64 * std::f64::consts::LN_2;
        worst_lm = worst_lm.max((log_magnitude_distance(&a, &double, m, LOG_EPSILON).unwrap() - analytic).abs());
    }
    outcome(
        worst_sc0 == 0.0 && worst_sc < 1e-6 && worst_lm < 1e-6,
        format!("L_sc(x,x) = {worst_sc0}, |L_sc(x,0.5x) - 0.5| <= {worst_sc:.1e}, |L_m(x,2x) - analytic| <= {worst_lm:.1e}"),
    )
}

fn parameter_count() -> Outcome {
    let bytes = save_model(&random_model(&ModelConfig::default(), 0).unwrap()).unwrap();
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let meta: serde_json::Value = serde_json::from_slice(&bytes[12..12 + meta_len]).unwrap();
    let count: u64 = meta["tensors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["shape"].as_array().unwrap().iter().map(|d| d.as_u64().unwrap()).product::<u64>())
        .sum();
    let rel = (count as f64 - 266_000.0).abs() / 266_000.0;
    outcome(rel <= 0.05, format!("{count} parameters in manifest ({:+.2}% vs 266k)", 100.0 * (count as f64 / 266_000.0 - 1.0)))
}

fn cross_implementation_parity() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/parity");
    let bundle = FixtureBundle::load(&dir).expect("bundle");
    let report = check_parity(&bundle.load_model().expect("model"), &bundle).expect("parity");
    let audio = report.get("audio").expect("audio stage");
    outcome(
        report.passed(),
        format!("reference float64 forward pass, 4 s: audio max abs err {:.2e} (< 1e-4), all {} stages within tolerance", audio.max_abs_error, report.checks.len()),
    )
}

fn main() {
    let model = fixture_model();
    let track = four_second_track();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("streaming/causality", Box::new(|| streaming(&model, &track))),
        ("real-time performance", Box::new(|| real_time(&model))),
        ("FastNEWT fidelity", Box::new(|| fastnewt_fidelity(&model, &track))),
        ("DSP oracle equivalence", Box::new(dsp_oracles)),
        ("waveshaping theory", Box::new(waveshaping_theory)),
        ("loss identities", Box::new(loss_identities)),
        ("model shape", Box::new(parameter_count)),
        ("cross-implementation parity (secondary interface)", Box::new(cross_implementation_parity)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let o = run();
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
