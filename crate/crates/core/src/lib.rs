//! Core library for review-driven misuse audits of mobile apps.
//!
//! The pipeline ingests app reviews, learns to predict how convincing and
//! severe a misuse report is, aggregates those predictions per app into an
//! exploitable score, and evaluates rankings against labeled ground truth.

pub mod affect;
pub mod annotation;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod keywords;
pub mod pipeline;
pub mod regressor;
pub mod scoring;
pub mod verdict;

pub use error::{Error, ErrorKind, Result};
