//! BVH ingestion, facing localization, clip windowing, z-score statistics
//! and dataset manifests.

mod bvh;
mod clip;
mod manifest;
mod mapping;
mod norm;
mod skeleton;
pub mod synthetic;

pub use bvh::{parse_bvh, parse_bvh_str, save_bvh, write_bvh, RawMotion};
pub use clip::{decimation_stride, localize_and_clip, localize_and_clip_with, ClipOptions, MotionClip};
pub use manifest::{DatasetManifest, ManifestEntry, Split};
pub use mapping::{JointMapping, ZERO_BONE};
pub use norm::{NormStats, STD_FLOOR};
pub use skeleton::{default_joint_channels, default_root_channels, Channel, JointDef, SkeletonDef};
