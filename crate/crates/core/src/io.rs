//! Control CSV input and WAV output.

use std::io::Read;
use std::path::Path;

use crate::control::ControlTrack;
use crate::error::{Error, Result};
use crate::signal::AudioBuffer;

/// Sample encoding for WAV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    /// 16-bit PCM with saturating quantization.
    Pcm16,
    /// 32-bit IEEE float, lossless.
    Float32,
}

/// Parses `frame,f0_hz,loudness_db[,confidence]`, one row per hop.
///
/// Frames must be numbered `0, 1, 2, ...`; f0 must be positive and finite and loudness
/// finite. Errors carry the 1-based line number.
pub fn read_control_csv<R: Read>(reader: R, hop_size: usize) -> Result<ControlTrack> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header_err = |message: String| Error::Control { row: 1, message };
    let headers = rdr.headers().map_err(|e| header_err(e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let with_confidence = match names.as_slice() {
        ["frame", "f0_hz", "loudness_db"] => false,
        ["frame", "f0_hz", "loudness_db", "confidence"] => true,
        _ => {
            return Err(header_err(format!(
                "expected header frame,f0_hz,loudness_db[,confidence], found {}",
                names.join(",")
            )))
        }
    };
    let (mut f0, mut loudness, mut confidence) = (Vec::new(), Vec::new(), Vec::new());
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx as u64 + 2;
        let rec = rec.map_err(|e| Error::Control {
            row: e.position().map_or(line, |p| p.line()),
            message: e.to_string(),
        })?;
        let fail = |message: String| Error::Control { row: line, message };
        let field = |i: usize, name: &str| -> Result<f32> {
            let raw = rec.get(i).unwrap_or("");
            let v: f32 = raw
                .parse()
                .map_err(|_| fail(format!("{name} {raw:?} is not a number")))?;
            if !v.is_finite() {
                return Err(fail(format!("{name} is not finite")));
            }
            Ok(v)
        };
        let frame: usize = rec
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| fail("frame index is not an integer".into()))?;
        if frame != idx {
            return Err(fail(format!("frame index {frame}, expected {idx}")));
        }
        let f = field(1, "f0_hz")?;
        if f <= 0.0 {
            return Err(fail(format!("f0_hz must be positive, got {f}")));
        }
        f0.push(f);
        loudness.push(field(2, "loudness_db")?);
        if with_confidence {
            let c = field(3, "confidence")?;
            if !(0.0..=1.0).contains(&c) {
                return Err(fail(format!("confidence {c} outside [0, 1]")));
            }
            confidence.push(c);
        }
    }
    ControlTrack::new(f0, loudness, with_confidence.then_some(confidence), hop_size)
}

pub fn read_control_csv_file(path: &Path, hop_size: usize) -> Result<ControlTrack> {
    read_control_csv(std::fs::File::open(path)?, hop_size)
}

/// Writes `track` in the format accepted by [`read_control_csv`].
pub fn write_control_csv<W: std::io::Write>(track: &ControlTrack, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let conf = track.confidence();
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if conf.is_some() {
        w.write_record(["frame", "f0_hz", "loudness_db", "confidence"]).map_err(csv_err)?;
    } else {
        w.write_record(["frame", "f0_hz", "loudness_db"]).map_err(csv_err)?;
    }
    for k in 0..track.num_frames() {
        let mut row = vec![k.to_string(), track.f0()[k].to_string(), track.loudness()[k].to_string()];
        if let Some(c) = conf {
            row.push(c[k].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Saturating conversion to 16-bit PCM, full scale 32768 (so +1.0 clips to 32767).
pub fn quantize_i16(x: f32) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_wav(path: &Path, audio: &AudioBuffer, format: WavFormat) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in audio.samples() {
        match format {
            WavFormat::Pcm16 => w.write_sample(quantize_i16(s))?,
            WavFormat::Float32 => w.write_sample(s)?,
        }
    }
    w.finalize()?;
    Ok(())
}

/// Reads a mono WAV (integer PCM scaled to [-1, 1], or float).
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(Error::InvalidInput(format!("{} channels, expected mono", spec.channels)));
    }
    let samples = match spec.sample_format {
        hound::SampleFormat::Float => r.samples::<f32>().collect::<std::result::Result<Vec<_>, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u32 << (spec.bits_per_sample - 1)) as f32;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<Vec<_>, _>>()?
        }
    };
    AudioBuffer::new(samples, spec.sample_rate)
}
