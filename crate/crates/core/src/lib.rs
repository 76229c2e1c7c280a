// SPDX-License-Identifier: Apache-2.0

pub mod cfront;
pub mod encode;
pub mod error;
pub mod fixtures;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod poc;
pub mod pyfront;
pub mod report;
pub mod smt;

pub use error::{Error, Result};
