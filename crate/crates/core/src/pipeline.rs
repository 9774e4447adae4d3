//! Image → feature-stack front end shared by training, evaluation and the CLI.

use crate::classifier::{concat_features, FeatureStack};
use crate::error::Result;
use crate::lga::{extract_lga, LgaConfig};
use crate::lvp::{code_histogram, extract_lvp, pattern_entropy, LvpWeights};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureConfig {
    pub lga: LgaConfig,
    pub lvp_weights: LvpWeights,
}

/// Per-image diagnostics reported next to the feature files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSummary {
    pub mean_abs_lga: f64,
    /// `None` when the LVP weights are not powers of two.
    pub pattern_entropy: Option<f64>,
}

pub fn extract_features(x: &Tensor, cfg: &FeatureConfig) -> Result<(FeatureStack, FeatureSummary)> {
    let lga = extract_lga(x, &cfg.lga)?;
    let lvp = extract_lvp(x, &cfg.lvp_weights, cfg.lga.padding)?;
    let entropy = if cfg.lvp_weights.is_powers_of_two() {
        Some(pattern_entropy(&code_histogram(&lvp)?)?)
    } else {
        None
    };
    let summary = FeatureSummary {
        mean_abs_lga: lga.map.mean_abs(),
        pattern_entropy: entropy,
    };
    Ok((concat_features(&lga, &lvp)?, summary))
}
