use crate::dualnet::{AttentionMode, BranchMode};
use crate::error::{Error, Result};
use crate::masking::ReferenceMasking;

use super::train::TrainConfig;

/// Ablation settings, from the bare single-branch model to the full one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Target branch only, uniform reference masking.
    NoCloudBranch,
    /// Both branches with unrestricted joint attention, uniform reference
    /// masking, no cloud masking.
    NoMaskedAttention,
    /// Masked joint attention, uniform reference masking, no cloud masking.
    NoTargetAwareMasking,
    /// Masked joint attention with target-aware reference and cloud masking.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] =
        [Variant::NoCloudBranch, Variant::NoMaskedAttention, Variant::NoTargetAwareMasking, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NoCloudBranch => "no-cloud-branch",
            Variant::NoMaskedAttention => "no-cm-jsa",
            Variant::NoTargetAwareMasking => "no-tam",
            Variant::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            Error::Config(format!("unknown variant '{s}' (expected no-cloud-branch, no-cm-jsa, no-tam, full)"))
        })
    }

    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        let (branches, attention, masking, cloud_masking) = match self {
            Variant::NoCloudBranch => (BranchMode::TargetOnly, AttentionMode::Masked, ReferenceMasking::Uniform, false),
            Variant::NoMaskedAttention => (BranchMode::Dual, AttentionMode::Unmasked, ReferenceMasking::Uniform, false),
            Variant::NoTargetAwareMasking => (BranchMode::Dual, AttentionMode::Masked, ReferenceMasking::Uniform, false),
            Variant::Full => (BranchMode::Dual, AttentionMode::Masked, ReferenceMasking::TargetAware, true),
        };
        cfg.model.branches = branches;
        cfg.model.attention = attention;
        cfg.sampling.reference_masking = masking;
        cfg.sampling.cloud_masking = cloud_masking;
        cfg
    }
}
