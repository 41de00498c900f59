//! Body-part motion retargeting with pose-aware attention.
//!
//! Motions are parsed from BVH, localized and cut into clips
//! ([`motion_io`]), encoded per body part ([`body_parts`], [`networks`]),
//! trained adversarially across two skeletal structures ([`training`]) and
//! scored with the metrics in [`evaluation`].

pub mod body_parts;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod kinematics;
pub mod motion_io;
pub mod networks;
pub mod training;

pub use error::{Error, Result};
