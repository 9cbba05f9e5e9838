//! Structural and numerical self-checks for a model file.

use serde::Serialize;

use crate::control::ControlTrack;
use crate::engine::{Model, RenderOptions};
use crate::newt::{bake_error, BAKE_PROBE_FACTOR};
use crate::weights::{check_schema, ModelFile};

/// Largest bake error accepted, as a fraction of the shaper's output range.
pub const MAX_BAKE_RELATIVE_ERROR: f32 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub module: &'static str,
    pub invariant: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    /// Relative bake error per channel, when both shapers and tables are present.
    pub bake_errors: Option<Vec<f32>>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn check(module: &'static str, invariant: &'static str, outcome: std::result::Result<String, String>) -> Check {
    let (passed, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    Check { module, invariant, passed, detail }
}

/// Runs every check that applies to `file`. Never fails early: each problem is reported.
pub fn verify_model(file: &ModelFile) -> VerifyReport {
    let mut checks = Vec::new();
    let mut bake_errors = None;

    checks.push(check(
        "weights-io",
        "tensor manifest matches the configuration",
        check_schema(&file.config, &file.tensors, file.tables.is_some())
            .map(|_| format!("{} tensors, {} parameters", file.tensors.len(), file.parameter_count()))
            .map_err(|e| e.to_string()),
    ));

    let bad: Vec<String> = file
        .tensors
        .iter()
        .filter(|(_, t)| t.data().iter().any(|v| !v.is_finite()))
        .map(|(n, _)| n.clone())
        .collect();
    checks.push(check(
        "weights-io",
        "all tensors finite",
        if bad.is_empty() {
            Ok("ok".into())
        } else {
            Err(format!("non-finite values in {}", bad.join(", ")))
        },
    ));

    checks.push(check(
        "reverb",
        "impulse response has c[0] = 0",
        match file.tensors.get("reverb.ir").and_then(|t| t.data().first().copied()) {
            Some(c0) if c0 == 0.0 => Ok("ok".into()),
            Some(c0) => Err(format!("reverb.ir[0] = {c0}")),
            None => Err("reverb.ir missing".into()),
        },
    ));

    if let Some(tables) = &file.tables {
        let bad = tables.iter().position(|t| t.samples().iter().any(|v| !v.is_finite()));
        checks.push(check(
            "newt",
            "baked tables finite",
            match bad {
                None => Ok(format!("{} tables of {} samples", tables.len(), tables[0].len())),
                Some(i) => Err(format!("newt.table.{i} contains non-finite values")),
            },
        ));
    }

    let model = match Model::from_file(file) {
        Ok(m) => m,
        Err(e) => {
            checks.push(check("engine", "model builds", Err(e.to_string())));
            return VerifyReport { checks, bake_errors };
        }
    };

    if let (Some(shapers), Some(tables)) = (model.shapers(), model.stored_tables()) {
        let errs: Vec<f32> = shapers
            .iter()
            .zip(tables)
            .map(|(s, t)| bake_error(s, t, BAKE_PROBE_FACTOR).relative())
            .collect();
        let (worst_ch, worst) = errs
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0f32), |a, (i, e)| if e > a.1 || e.is_nan() { (i, e) } else { a });
        checks.push(check(
            "newt",
            "baked tables match shapers within 1% of output range",
            if worst < MAX_BAKE_RELATIVE_ERROR {
                Ok(format!("worst channel {worst_ch}: {worst:.3e}"))
            } else {
                Err(format!("channel {worst_ch}: relative error {worst:.3e}"))
            },
        ));
        bake_errors = Some(errs);
    }

    let cfg = model.config();
    let frames = (cfg.sample_rate as usize / 2).div_ceil(cfg.hop_size).max(4);
    let track = ControlTrack::constant(220.0, -30.0, frames, cfg.hop_size).expect("valid constant track");
    for use_fastnewt in [false, true] {
        if !use_fastnewt && model.shapers().is_none() {
            continue;
        }
        let opts = RenderOptions { use_fastnewt, ..RenderOptions::default() };
        let label = if use_fastnewt { "lookup tables" } else { "MLP shapers" };
        let one_shot = model.render(&track, &opts);
        checks.push(check(
            "engine",
            if use_fastnewt { "lookup-table render is finite" } else { "MLP render is finite" },
            match &one_shot {
                Ok(a) if a.samples().iter().all(|v| v.is_finite()) => Ok(format!("{} samples", a.len())),
                Ok(_) => Err(format!("{label} render produced non-finite samples")),
                Err(e) => Err(e.to_string()),
            },
        ));
        let Ok(one_shot) = one_shot else { continue };
        let mut state = model.new_state(&opts);
        let streamed = model.render_streaming(&track, &opts, &mut state).map(|b| b.concat());
        checks.push(check(
            "engine",
            if use_fastnewt {
                "lookup-table streaming equals one-shot"
            } else {
                "MLP streaming equals one-shot"
            },
            match streamed {
                Ok(s) if s == one_shot.samples() => Ok("bit-identical".into()),
                Ok(s) => {
                    let diff = s
                        .iter()
                        .zip(one_shot.samples())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f32, f32::max);
                    Err(format!("max difference {diff:e} over {} samples", s.len()))
                }
                Err(e) => Err(e.to_string()),
            },
        ));
    }

    VerifyReport { checks, bake_errors }
}
