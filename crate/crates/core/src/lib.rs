//! Cross-modal training for point-cloud classifiers.
//!
//! A multi-view image teacher is trained on depth images projected from each
//! point cloud. A cross-modal point generator (CMPG) learns to map teacher
//! features back to point sets under the Earth Mover's Distance. The point
//! student is then trained with cross-entropy plus two enhancement terms:
//! an EMD between CMPG reconstructions of student and teacher features, and a
//! KL term between the student classifier's outputs on both features.
//!
//! Everything runs in double precision on explicit forward/backward layers so
//! that every gradient path can be checked against finite differences.

pub mod diffcore;
pub mod distill;
pub mod emd;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod networks;
pub mod pipeline;
pub mod projection;

pub use error::{Error, Result};
