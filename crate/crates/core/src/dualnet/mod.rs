//! Dual-branch denoiser: latent surrogate, noise schedule, masked joint
//! self-attention, and the trainable epsilon predictor.

mod attention;
mod checkpoint;
mod latent;
pub mod layers;
mod model;
mod optim;
mod schedule;

pub use attention::{
    build_attention_mask, joint_self_attention, masked_attention, masked_attention_backward, AttentionLayer,
    AttentionMask, AttentionMode, AttentionProbs,
};
pub use checkpoint::{
    check_config, decode_checkpoint, encode_checkpoint, load_checkpoint, round_to_f32, save_checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use latent::{downsample_mask, from_latent, mask_to_latent, to_latent, LatentBlock};
pub use model::{
    denoiser_forward, timestep_embedding, BlockWeights, BranchMode, BranchWeights, Denoiser, DenoiserConfig,
    DenoiserInput, Prediction, TrainingExample,
};
pub use optim::{Adam, AdamConfig};
pub use schedule::{add_noise, NoiseSchedule, ScheduleConfig};
