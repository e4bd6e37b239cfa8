//! Crate-level error wrapper with exit-code classification for the CLI:
//! 2 for data/format problems, 3 for numerical failures.

use thiserror::Error;

use crate::audio::AudioError;
use crate::config::ConfigError;
use crate::corpus::CorpusError;
use crate::frontend::FrontendError;
use crate::orbit::OrbitError;
use crate::rls::RlsError;
use crate::segment::SegmentError;
use crate::signature::SignatureError;
use crate::synth::SynthError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("audio: {0}")]
    Audio(#[from] AudioError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("frontend: {0}")]
    Frontend(#[from] FrontendError),
    #[error("segment: {0}")]
    Segment(#[from] SegmentError),
    #[error("orbit: {0}")]
    Orbit(#[from] OrbitError),
    #[error("signature: {0}")]
    Signature(#[from] SignatureError),
    #[error("rls: {0}")]
    Rls(#[from] RlsError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("pipeline: {0}")]
    Pipeline(#[from] crate::pipeline::PipelineError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 = data/format error,
    /// 3 = numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Frontend(FrontendError::NumericallySingular(_))
            | Error::Frontend(FrontendError::NonFinite { .. })
            | Error::Rls(RlsError::NumericalFailure(_))
            | Error::Signature(SignatureError::DegenerateVector(_))
            | Error::Orbit(OrbitError::DegenerateVector { .. }) => 3,
            _ => 2,
        }
    }
}
