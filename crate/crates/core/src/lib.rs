//! Anchor-based discriminative visual tracking.
//!
//! The crate covers the whole pipeline at desk scale: anchor-grid geometry
//! and label maps, a small reverse-mode tensor engine, symbolic network specs
//! with receptive-field arithmetic and teacher/student surgery, the dual
//! classification loss, an online tracker, OTB/VOT style evaluation and a
//! synthetic sequence generator.

pub mod config;
pub mod error;
pub mod evalbench;
pub mod geometry;
pub mod image;
pub mod io_util;
pub mod losses;
pub mod netspec;
pub mod results;
pub mod runner;
pub mod sequence;
pub mod synthseq;
pub mod tensor;
pub mod tracker;

pub use error::{Error, Result};
