//! Mask clean-up: 3×3 median filtering and QA-band masking.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::raster::{BinaryMask, MaskValue};
use crate::tiling::Tiling;
use crate::{Error, Result};

/// QA_PIXEL bits that invalidate a pixel. Defaults follow Landsat Collection 2
/// (bit 3 cloud, bit 4 cloud shadow).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QaBitConfig {
    pub cloud_bit: u8,
    pub shadow_bit: u8,
    pub extra_bits: Vec<u8>,
}

impl Default for QaBitConfig {
    fn default() -> Self {
        Self {
            cloud_bit: 3,
            shadow_bit: 4,
            extra_bits: Vec::new(),
        }
    }
}

impl QaBitConfig {
    /// Builds a config from an explicit list: cloud bit, shadow bit, then any extras.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let [cloud, shadow, rest @ ..] = bits else {
            return Err(Error::InvalidConfig(
                "QA bit list needs at least the cloud and shadow bits".into(),
            ));
        };
        let cfg = Self {
            cloud_bit: *cloud,
            shadow_bit: *shadow,
            extra_bits: rest.to_vec(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn all_bits(&self) -> impl Iterator<Item = u8> + '_ {
        [self.cloud_bit, self.shadow_bit]
            .into_iter()
            .chain(self.extra_bits.iter().copied())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.all_bits().find(|&b| b > 15) {
            return Err(Error::InvalidConfig(format!("QA bit {b} outside 0..=15")));
        }
        let mut bits: Vec<u8> = self.all_bits().collect();
        bits.sort_unstable();
        if bits.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(
                "QA bits must be pairwise distinct".into(),
            ));
        }
        Ok(())
    }

    pub fn bitmask(&self) -> u16 {
        self.all_bits().fold(0u16, |m, b| m | (1 << b))
    }
}

/// 3×3 median of the EC(1)/non-EC(0) values around each pixel.
///
/// Out-of-image and nodata neighbors count as non-EC; nodata pixels stay nodata.
pub fn median_filter_3x3(mask: &BinaryMask) -> BinaryMask {
    median_filter_3x3_with(mask, Tiling::default())
}

pub fn median_filter_3x3_with(mask: &BinaryMask, tiling: Tiling) -> BinaryMask {
    let (w, h) = mask.dims();
    let src = mask.as_slice();
    let px = tiling.map_pixels(w, h, |r, c| {
        if src[r * w + c] == MaskValue::Nodata {
            return MaskValue::Nodata;
        }
        let mut ec = 0u8;
        for rr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
            for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                ec += u8::from(src[rr * w + cc] == MaskValue::Ec);
            }
        }
        // the median of nine binary values is 1 iff at least five are 1
        MaskValue::from_bool(ec >= 5)
    });
    BinaryMask::from_vec(w, h, px)
}

/// Marks pixels whose QA word has any configured bit set as nodata.
pub fn apply_qa_mask(mask: &BinaryMask, qa: &Array2<u16>, cfg: &QaBitConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    if qa.dim() != mask.values().dim() {
        return Err(Error::DimensionMismatch {
            expected: mask.dims(),
            found: (qa.ncols(), qa.nrows()),
        });
    }
    let bits = cfg.bitmask();
    let mut out = mask.clone();
    for ((r, c), &word) in qa.indexed_iter() {
        if word & bits != 0 {
            out.set(r, c, MaskValue::Nodata);
        }
    }
    Ok(out)
}

/// Per-pixel flag: true where the QA word has any configured bit set.
pub fn qa_invalid(qa: &Array2<u16>, cfg: &QaBitConfig) -> Result<Array2<bool>> {
    cfg.validate()?;
    let bits = cfg.bitmask();
    Ok(qa.mapv(|w| w & bits != 0))
}
