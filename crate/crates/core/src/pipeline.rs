//! The QA → index → threshold → median-filter chain.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::indices::{
    classify_with, compute_acmi_with, compute_bci_with, AcmiParams, IndexKind, IndexRaster,
};
use crate::postprocess::{median_filter_3x3_with, qa_invalid, QaBitConfig};
use crate::raster::{BinaryMask, ReflectanceScene};
use crate::tiling::Tiling;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub index: IndexKind,
    pub acmi: AcmiParams,
    pub median_filter: bool,
    pub qa_bits: QaBitConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            index: IndexKind::Acmi,
            acmi: AcmiParams::default(),
            median_filter: true,
            qa_bits: QaBitConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_index(index: IndexKind) -> Self {
        Self {
            index,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.acmi.validate()?;
        self.qa_bits.validate()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// The continuous index; `None` for BCI, which is a rule rather than an index.
    pub index: Option<IndexRaster>,
    /// Classification before the median filter.
    pub raw_mask: BinaryMask,
    pub mask: BinaryMask,
}

pub fn run_pipeline(
    scene: &ReflectanceScene,
    qa: Option<&Array2<u16>>,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    run_pipeline_with(scene, qa, cfg, Tiling::default())
}

/// QA-flagged pixels become nodata before the index is computed, so they are nodata
/// in every product.
pub fn run_pipeline_with(
    scene: &ReflectanceScene,
    qa: Option<&Array2<u16>>,
    cfg: &PipelineConfig,
    tiling: Tiling,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let masked;
    let scene = match qa {
        Some(qa) => {
            masked = scene.clone().mask_out(&qa_invalid(qa, &cfg.qa_bits)?)?;
            &masked
        }
        None => scene,
    };
    let (index, raw_mask) = match cfg.index {
        IndexKind::Acmi => {
            let idx = compute_acmi_with(scene, &cfg.acmi, tiling)?;
            let mask = classify_with(&idx, cfg.acmi.classify_threshold, tiling);
            (Some(idx), mask)
        }
        IndexKind::Bci => (None, compute_bci_with(scene, tiling)?),
    };
    let mask = if cfg.median_filter {
        median_filter_3x3_with(&raw_mask, tiling)
    } else {
        raw_mask.clone()
    };
    Ok(PipelineOutput {
        index,
        raw_mask,
        mask,
    })
}
