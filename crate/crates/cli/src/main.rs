use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use newt_core::engine::{measure_rtf, real_time_factor, RenderMode, RtfStats};
use newt_core::fixtures::{check_parity, FixtureBundle};
use newt_core::init::random_model;
use newt_core::io::{read_control_csv_file, read_wav, write_wav, WavFormat};
use newt_core::metrics::{mr_stft_report, MrStftConfig};
use newt_core::newt::{bake_error, BAKE_PROBE_FACTOR};
use newt_core::verify::verify_model;
use newt_core::{load_model, save_model, Model, ModelConfig, ModelFile, RenderOptions};
use serde::Serialize;

/// Version of the JSON reports written by `bench` and `compare`.
const REPORT_SCHEMA_VERSION: u32 = 1;
const SWEEP_SIZES: [usize; 8] = [256, 512, 1024, 2048, 4096, 8192, 16384, 32768];

#[derive(Parser)]
#[command(name = "newt", version, about = "Neural waveshaping synthesis: render, benchmark, bake and verify .newt models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a control CSV (frame,f0_hz,loudness_db[,confidence]) to a mono WAV.
    Render(RenderArgs),
    /// Measure the real-time factor over repeated renders.
    Bench(BenchArgs),
    /// Sample every shaper into a lookup table and write a new model file.
    Bake(BakeArgs),
    /// Check a model file against the engine's invariants.
    Verify(VerifyArgs),
    /// Multi-resolution STFT distance between two WAV files.
    Compare(CompareArgs),
    /// Write a randomly initialized (untrained) model.
    Init(InitArgs),
}

#[derive(Args)]
struct RenderArgs {
    model: PathBuf,
    control: PathBuf,
    out: PathBuf,
    /// Use lookup-table shapers.
    #[arg(long)]
    fastnewt: bool,
    /// Noise generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_reverb: bool,
    /// Write 32-bit float samples instead of 16-bit PCM.
    #[arg(long)]
    float32: bool,
    /// Render in streaming blocks of this many samples (a multiple of the hop size).
    #[arg(long)]
    block_size: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    model: PathBuf,
    /// Seconds of audio per run.
    #[arg(long, default_value_t = 4.0)]
    duration: f64,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Also time streaming renders at every block size from 256 to 32768.
    #[arg(long)]
    buffer_sweep: bool,
    /// Include the lookup-table variant alongside the MLP one.
    #[arg(long)]
    fastnewt: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BakeArgs {
    model: PathBuf,
    out: PathBuf,
    #[arg(long, default_value_t = 4096)]
    table_size: usize,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, default_values_t = [-3.0, 3.0])]
    domain: Vec<f32>,
    /// Drop the MLP shapers from the output file.
    #[arg(long)]
    strip_shapers: bool,
}

#[derive(Args)]
struct VerifyArgs {
    model: PathBuf,
    /// Also compare against a fixture bundle directory.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CompareArgs {
    reference: PathBuf,
    candidate: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InitArgs {
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON model configuration; defaults to the reference configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Failure classes with distinct exit codes.
enum Failure {
    /// Anything else, including failed checks: exit 1.
    General(anyhow::Error),
    /// The model file could not be read or validated: exit 2.
    Model(anyhow::Error),
    /// The control file is missing or malformed: exit 3.
    Control(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::General(_) => 1,
            Failure::Model(_) => 2,
            Failure::Control(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::General(e)
    }
}

type CmdResult = Result<(), Failure>;

fn read_model_file(path: &Path) -> Result<ModelFile, Failure> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot read model {}", path.display()))
        .map_err(Failure::Model)?;
    load_model(&bytes)
        .with_context(|| format!("invalid model {}", path.display()))
        .map_err(Failure::Model)
}

fn build_model(path: &Path, file: &ModelFile) -> Result<Model, Failure> {
    Model::from_file(file)
        .with_context(|| format!("invalid model {}", path.display()))
        .map_err(Failure::Model)
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct RenderMeta {
    samples: usize,
    sample_rate: u32,
    audio_secs: f64,
    render_secs: f64,
    rtf: f64,
    noise_seed: u64,
    fastnewt: bool,
    reverb: bool,
    block_size: Option<usize>,
}

fn cmd_render(args: RenderArgs) -> CmdResult {
    if args.block_size == Some(0) {
        return Err(anyhow!("--block-size must be positive").into());
    }
    let file = read_model_file(&args.model)?;
    let model = build_model(&args.model, &file)?;
    let hop = model.config().hop_size;
    if let Some(b) = args.block_size {
        if b % hop != 0 {
            return Err(anyhow!("--block-size {b} is not a multiple of the hop size {hop}").into());
        }
    }
    let track = read_control_csv_file(&args.control, hop)
        .with_context(|| format!("control file {}", args.control.display()))
        .map_err(Failure::Control)?;
    if track.is_empty() {
        return Err(Failure::Control(anyhow!("control file {} has no frames", args.control.display())));
    }
    let opts = RenderOptions {
        use_fastnewt: args.fastnewt,
        noise_seed: args.seed,
        enable_reverb: !args.no_reverb,
        block_size: args.block_size.unwrap_or(RenderOptions::default().block_size),
    };
    if args.fastnewt && file.has_shapers() {
        // baking is load-time work, not rendering
        model.tables();
    }
    let start = Instant::now();
    let samples = match args.block_size {
        Some(_) => {
            let mut state = model.new_state(&opts);
            model.render_streaming(&track, &opts, &mut state).context("render failed")?.concat()
        }
        None => model.render(&track, &opts).context("render failed")?.into_samples(),
    };
    let render_secs = start.elapsed().as_secs_f64();
    let sr = model.config().sample_rate;
    let audio = newt_core::AudioBuffer::new(samples, sr).context("render produced invalid audio")?;
    let format = if args.float32 { WavFormat::Float32 } else { WavFormat::Pcm16 };
    write_wav(&args.out, &audio, format).with_context(|| format!("cannot write {}", args.out.display()))?;
    let meta = RenderMeta {
        samples: audio.len(),
        sample_rate: sr,
        audio_secs: audio.duration_secs(),
        render_secs,
        rtf: real_time_factor(render_secs, audio.duration_secs()),
        noise_seed: args.seed,
        fastnewt: args.fastnewt,
        reverb: !args.no_reverb,
        block_size: args.block_size,
    };
    eprintln!(
        "rendered {:.2} s in {:.3} s (RTF {:.4}) -> {}",
        meta.audio_secs,
        meta.render_secs,
        meta.rtf,
        args.out.display()
    );
    emit_json(&meta, None)?;
    Ok(())
}

#[derive(Serialize)]
struct BenchEntry {
    variant: &'static str,
    mode: &'static str,
    block_size: Option<usize>,
    mean_rtf: f64,
    median_rtf: f64,
    p90_rtf: f64,
    min_rtf: f64,
    max_rtf: f64,
}

#[derive(Serialize)]
struct BenchReport {
    schema_version: u32,
    model: String,
    duration_secs: f64,
    runs: usize,
    results: Vec<BenchEntry>,
}

fn bench_entry(variant: &'static str, mode: RenderMode, s: RtfStats) -> BenchEntry {
    let (mode, block_size) = match mode {
        RenderMode::OneShot => ("one_shot", None),
        RenderMode::Streaming { block_size } => ("streaming", Some(block_size)),
    };
    BenchEntry {
        variant,
        mode,
        block_size,
        mean_rtf: s.mean,
        median_rtf: s.median,
        p90_rtf: s.p90,
        min_rtf: s.min,
        max_rtf: s.max,
    }
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    if !(args.duration > 0.0) || args.runs == 0 {
        return Err(anyhow!("--duration and --runs must be positive").into());
    }
    let file = read_model_file(&args.model)?;
    let model = build_model(&args.model, &file)?;
    let mut variants = Vec::new();
    if file.has_shapers() {
        variants.push(("NWS", false));
    }
    if args.fastnewt || !file.has_shapers() {
        variants.push(("NWS-FN", true));
    }
    let mut results = Vec::new();
    for (name, fast) in variants {
        let opts = RenderOptions {
            use_fastnewt: fast,
            ..RenderOptions::default()
        };
        let mut modes = vec![RenderMode::OneShot];
        if args.buffer_sweep {
            modes.extend(SWEEP_SIZES.iter().map(|&block_size| RenderMode::Streaming { block_size }));
        }
        for mode in modes {
            let stats = measure_rtf(&model, args.duration, &opts, args.runs, mode).context("benchmark failed")?;
            eprintln!("{name:<7} {mode:?}: mean RTF {:.4}, p90 {:.4}", stats.mean, stats.p90);
            results.push(bench_entry(name, mode, stats));
        }
    }
    let report = BenchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model: args.model.display().to_string(),
        duration_secs: args.duration,
        runs: args.runs,
        results,
    };
    emit_json(&report, args.out.as_deref())?;
    Ok(())
}

fn cmd_bake(args: BakeArgs) -> CmdResult {
    let (lo, hi) = (args.domain[0], args.domain[1]);
    if args.table_size < 2 {
        return Err(anyhow!("--table-size must be at least 2").into());
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(anyhow!("--domain needs finite LO < HI").into());
    }
    let mut file = read_model_file(&args.model)?;
    if !file.has_shapers() {
        eprintln!("warning: {} is already baked-only; nothing to do", args.model.display());
        return Ok(());
    }
    let model = build_model(&args.model, &file)?;
    let tables = model.bake(args.table_size, lo, hi).context("bake failed")?;
    let shapers = model.shapers().expect("checked above");
    let mut worst = 0.0f32;
    for (i, (s, t)) in shapers.iter().zip(&tables).enumerate() {
        let e = bake_error(s, t, BAKE_PROBE_FACTOR);
        worst = worst.max(e.relative());
        println!(
            "channel {i:>3}: max error {:.3e} ({:.3e} of output range {:.3})",
            e.max_abs,
            e.relative(),
            e.output_range
        );
    }
    file.tables = Some(tables);
    if args.strip_shapers {
        for (name, _) in file.config.shaper_tensors() {
            file.tensors.remove(&name);
        }
    }
    let bytes = save_model(&file).context("cannot serialize baked model")?;
    std::fs::write(&args.out, bytes).with_context(|| format!("cannot write {}", args.out.display()))?;
    eprintln!(
        "baked {} tables of {} samples over [{lo}, {hi}], worst relative error {worst:.3e} -> {}",
        file.config.n_newt_channels,
        args.table_size,
        args.out.display()
    );
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let bytes = std::fs::read(&args.model)
        .with_context(|| format!("cannot read model {}", args.model.display()))
        .map_err(Failure::Model)?;
    let file = match load_model(&bytes) {
        Ok(f) => f,
        Err(e) => {
            println!("FAIL weights-io: file loads ({e})");
            return Err(Failure::Model(anyhow!("invalid model {}: {e}", args.model.display())));
        }
    };
    let report = verify_model(&file);
    let parity = match &args.fixtures {
        Some(dir) => {
            let bundle = FixtureBundle::load(dir).with_context(|| format!("fixture bundle {}", dir.display()))?;
            let model = build_model(&args.model, &file)?;
            Some(check_parity(&model, &bundle).context("parity check failed to run")?)
        }
        None => None,
    };
    if args.json {
        emit_json(&serde_json::json!({ "checks": report.checks, "bake_errors": report.bake_errors, "parity": parity }), None)?;
    } else {
        for c in &report.checks {
            println!("{} {}: {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.module, c.invariant, c.detail);
        }
        if let Some(p) = &parity {
            for c in &p.checks {
                println!(
                    "{} fixtures: {} max abs error {:.3e} (tolerance {:.0e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.stage,
                    c.max_abs_error,
                    c.tolerance
                );
            }
        }
    }
    let failures = report.failures().count() + parity.map_or(0, |p| p.checks.iter().filter(|c| !c.passed).count());
    if failures > 0 {
        return Err(anyhow!("{failures} check(s) failed").into());
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareReport {
    schema_version: u32,
    reference: String,
    candidate: String,
    scales: Vec<newt_core::metrics::ScaleLoss>,
    total: f64,
}

fn cmd_compare(args: CompareArgs) -> CmdResult {
    let a = read_wav(&args.reference).with_context(|| format!("cannot read {}", args.reference.display()))?;
    let b = read_wav(&args.candidate).with_context(|| format!("cannot read {}", args.candidate.display()))?;
    if a.sample_rate() != b.sample_rate() {
        return Err(anyhow!("sample rates differ ({} vs {})", a.sample_rate(), b.sample_rate()).into());
    }
    let r = mr_stft_report(&a, &b, &MrStftConfig::default()).context("cannot compare")?;
    emit_json(
        &CompareReport {
            schema_version: REPORT_SCHEMA_VERSION,
            reference: args.reference.display().to_string(),
            candidate: args.candidate.display().to_string(),
            scales: r.scales,
            total: r.total,
        },
        args.out.as_deref(),
    )?;
    Ok(())
}

fn cmd_init(args: InitArgs) -> CmdResult {
    let config: ModelConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
            serde_json::from_slice(&text).with_context(|| format!("bad configuration {}", path.display()))?
        }
        None => ModelConfig::default(),
    };
    let file = random_model(&config, args.seed).context("cannot initialize model")?;
    let bytes = save_model(&file).context("cannot serialize model")?;
    std::fs::write(&args.out, bytes).with_context(|| format!("cannot write {}", args.out.display()))?;
    eprintln!("wrote untrained model with {} parameters -> {}", file.parameter_count(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Render(a) => cmd_render(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Bake(a) => cmd_bake(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Init(a) => cmd_init(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::General(e) | Failure::Model(e) | Failure::Control(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
