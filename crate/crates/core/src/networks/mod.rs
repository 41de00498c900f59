//! Learnable components: joint embedding, pose-aware attention, per-part
//! temporal convolutions, skeleton encoder, decoder and discriminator.

mod layers;
mod model;
mod pan;

pub use layers::{AttentionLayer, Conv1d, Linear, Mlp3};
pub use model::{Discriminator, Generator, ModelParams, MotionDecoder, MotionEncoder, NetConfig, SkeletonEncoder};
pub use pan::{pan_forward, PanOutput};

#[cfg(test)]
mod tests;
