//! CycleGAN between the abdominal and fetal domains: networks, losses,
//! the training schedule, extraction and checkpoints.

mod arch;
pub mod checkpoint;
mod losses;
mod model;

pub use arch::{ArchConfig, Discriminator, Generator};
pub use losses::{
    combined_adversarial_loss, cycle_l1, cycle_loss, discriminator_loss, generator_adversarial, l1_adversarial_loss,
    lsgan_discriminator, power_loss, spectral_loss, temporal_loss, LossParts, LossTerm, LossWeights,
    SPECTRAL_DENOM_FLOOR,
};
pub use model::{
    batch_tensor, extract_fecg, CycleGanModel, EpochRecord, History, PairedSegments, StepReport, TrainConfig,
    EXTRACT_BATCH,
};
