//! Losses, batching and the adversarial training loop over two structures.

mod data;
pub mod losses;
mod trainer;

pub use data::{group_skeletons, Batch, StructureData};
pub use losses::{AdvConvention, LossWeights, VelocityStats};
pub use trainer::{
    all_params_mut, check_common_parts, discriminator_loss, discriminator_params_mut, generator_loss,
    generator_params_mut, retarget, retarget_batch, EpochSummary, GeneratorLoss, LossReport, Mode, StructureModel,
    TrainConfig, Trainer, STRUCTURE_TAGS,
};
