//! Learned convolutional reverb: `out = x + c * x` with a long causal impulse response.
//!
//! Streaming uses uniformly partitioned overlap-add convolution. The partition length
//! is fixed per [`Reverb`] (the engine uses the hop size), so the arithmetic is the same
//! for every caller block size and output is independent of how the input is split.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::signal::AudioBuffer;

/// Standard deviation of the initial impulse response taps (variance 1e-6).
pub const IR_INIT_STD: f64 = 1e-3;

/// Reverb impulse response with `c[0] == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverbIr {
    taps: Vec<f32>,
}

impl ReverbIr {
    pub fn new(taps: Vec<f32>) -> Result<Self> {
        match taps.first() {
            None => return Err(Error::InvalidArgument("impulse response must be nonempty".into())),
            Some(&c0) if c0 != 0.0 => {
                return Err(Error::Schema(format!("reverb.ir[0] must be exactly 0, found {c0}")))
            }
            _ => {}
        }
        if let Some(n) = taps.iter().position(|v| !v.is_finite()) {
            return Err(Error::Schema(format!("reverb.ir[{n}] is not finite")));
        }
        Ok(Self { taps })
    }

    pub fn taps(&self) -> &[f32] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// `c[0] = 0`, `c[n >= 1] ~ N(0, 1e-6)` i.i.d., deterministic per seed.
pub fn init_reverb_ir(length: usize, seed: u64) -> Result<ReverbIr> {
    if length == 0 {
        return Err(Error::InvalidArgument("impulse response length must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, IR_INIT_STD).expect("valid std");
    let mut taps = Vec::with_capacity(length);
    taps.push(0.0);
    taps.extend((1..length).map(|_| normal.sample(&mut rng) as f32));
    ReverbIr::new(taps)
}

/// Frequency-domain delay line and pending overlap for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverbState {
    history: Vec<Complex<f32>>,
    head: usize,
    overlap: Vec<f32>,
}

impl ReverbState {
    pub fn reset(&mut self) {
        self.history.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        self.overlap.iter_mut().for_each(|v| *v = 0.0);
        self.head = 0;
    }

    pub fn overlap(&self) -> &[f32] {
        &self.overlap
    }
}

/// Partitioned convolution engine for one impulse response.
pub struct Reverb {
    partition: usize,
    bins: usize,
    spectra: Vec<Complex<f32>>,
    silent: bool,
    forward: Arc<dyn RealToComplex<f32>>,
    inverse: Arc<dyn ComplexToReal<f32>>,
}

impl std::fmt::Debug for Reverb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Reverb")
            .field("partition", &self.partition)
            .field("partitions", &self.partitions())
            .field("silent", &self.silent)
            .finish()
    }
}

impl Reverb {
    pub fn new(ir: &ReverbIr, partition: usize) -> Result<Self> {
        if partition == 0 {
            return Err(Error::InvalidArgument("partition length must be positive".into()));
        }
        let fft_len = 2 * partition;
        let bins = partition + 1;
        let mut planner = RealFftPlanner::<f32>::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let parts = ir.len().div_ceil(partition);
        let mut spectra = Vec::with_capacity(parts * bins);
        let mut buf = forward.make_input_vec();
        let mut spec = forward.make_output_vec();
        // fold the inverse FFT scale into the stored spectra
        let scale = 1.0 / fft_len as f32;
        for chunk in ir.taps().chunks(partition) {
            buf.iter_mut().for_each(|v| *v = 0.0);
            for (b, &c) in buf.iter_mut().zip(chunk) {
                *b = c * scale;
            }
            forward.process(&mut buf, &mut spec).expect("planned sizes");
            spectra.extend_from_slice(&spec);
        }
        Ok(Self {
            partition,
            bins,
            spectra,
            silent: ir.taps().iter().all(|&c| c == 0.0),
            forward,
            inverse,
        })
    }

    pub fn partition(&self) -> usize {
        self.partition
    }

    pub fn partitions(&self) -> usize {
        self.spectra.len() / self.bins
    }

    /// Added latency in samples.
    pub fn latency(&self) -> usize {
        0
    }

    pub fn initial_state(&self) -> ReverbState {
        ReverbState {
            history: vec![Complex::new(0.0, 0.0); self.spectra.len()],
            head: 0,
            overlap: vec![0.0; self.partition],
        }
    }

    /// Writes `x + c * x` into `out`. `x.len()` must be a multiple of the partition.
    pub fn process(&self, x: &[f32], state: &mut ReverbState, out: &mut [f32]) -> Result<()> {
        if x.len() % self.partition != 0 {
            return Err(Error::Alignment(format!(
                "reverb input of {} samples is not a multiple of the {}-sample partition",
                x.len(),
                self.partition
            )));
        }
        if out.len() != x.len() {
            return Err(Error::InvalidArgument("output length must equal input length".into()));
        }
        if state.history.len() != self.spectra.len() || state.overlap.len() != self.partition {
            return Err(Error::Schema("reverb state belongs to a different impulse response".into()));
        }
        if self.silent {
            out.copy_from_slice(x);
            return Ok(());
        }
        let (p, bins, parts) = (self.partition, self.bins, self.partitions());
        let mut buf = self.forward.make_input_vec();
        let mut acc = self.forward.make_output_vec();
        let mut wet = self.inverse.make_output_vec();
        for (xb, ob) in x.chunks_exact(p).zip(out.chunks_exact_mut(p)) {
            buf[..p].copy_from_slice(xb);
            buf[p..].iter_mut().for_each(|v| *v = 0.0);
            let head = state.head;
            let slot = &mut state.history[head * bins..(head + 1) * bins];
            self.forward.process(&mut buf, slot).expect("planned sizes");

            acc.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for j in 0..parts {
                let age = (head + parts - j) % parts;
                let past = &state.history[age * bins..(age + 1) * bins];
                let h = &self.spectra[j * bins..(j + 1) * bins];
                for ((a, xs), hs) in acc.iter_mut().zip(past).zip(h) {
                    *a += xs * hs;
                }
            }
            acc[0].im = 0.0;
            acc[bins - 1].im = 0.0;
            self.inverse.process(&mut acc, &mut wet).expect("planned sizes");

            for n in 0..p {
                ob[n] = xb[n] + (wet[n] + state.overlap[n]);
            }
            state.overlap.copy_from_slice(&wet[p..]);
            state.head = (head + 1) % parts;
        }
        Ok(())
    }
}

/// Applies the reverb to a whole buffer, partitioning at `partition` samples.
pub fn apply_reverb(x: &AudioBuffer, reverb: &Reverb, state: &mut ReverbState) -> Result<AudioBuffer> {
    let mut out = vec![0.0; x.len()];
    reverb.process(x.samples(), state, &mut out)?;
    AudioBuffer::new(out, x.sample_rate())
}
