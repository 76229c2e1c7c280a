// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the analysis pipeline and its harnesses.
#[derive(Debug, Error)]
pub enum Error {
    /// A value fell outside the domain of an operation (bad rate, unsupported
    /// language, non-SAT finding passed to the PoC emitter, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Something outside the analysis failed: a solver process could not be
    /// spawned, a model could not be parsed, a provider was unreachable.
    #[error("infrastructure error: {0}")]
    Infra(String),

    #[error("failed to load {path}: {detail}")]
    Load { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn infra(msg: impl Into<String>) -> Self {
        Error::Infra(msg.into())
    }

    /// True for failures of the environment rather than of the input.
    pub fn is_infrastructure(&self) -> bool {
        matches!(self, Error::Infra(_) | Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
