//! Neural waveshaping synthesis: a small learned synthesizer that turns F0 and
//! loudness contours into audio, fast enough to run in real time on one CPU core.

pub mod control;
pub mod engine;
pub mod error;
pub mod exciter;
pub mod fixtures;
pub mod init;
pub mod io;
pub mod metrics;
pub mod newt;
pub mod nn;
pub mod noise;
pub mod reverb;
pub mod signal;
pub mod verify;
pub mod weights;

pub use control::ControlTrack;
pub use engine::{EngineState, Model, RenderMode, RenderOptions, RtfStats};
pub use error::{Error, Result};
pub use signal::AudioBuffer;
pub use weights::{load_model, save_model, ModelConfig, ModelFile};
