//! Per-pixel spectral indices and thresholding.
//!
//! All operators are pure maps over an immutable scene and accept a [`Tiling`] so the
//! raster can be processed in parallel strips; results do not depend on the strip size.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::geotiff::{self, GeoInfo};
use crate::raster::{BinaryMask, MaskValue, ReflectanceScene, SemanticBand};
use crate::tiling::Tiling;
use crate::{Error, Result};

/// Value written for nodata pixels when an index raster is saved.
pub const INDEX_NODATA: f32 = -9999.0;

/// BCI reflectance ceiling for the SWIR2 band.
pub const BCI_SWIR2_CEILING: f64 = 0.15;

/// Coefficients and thresholds of the coal mapping index.
///
/// The defaults give
/// `4.75·blue − green − 4.5·nir + 0.25·swir1 + swir2 + 0.1`,
/// with water (MNDWI > 0) and bright pixels (max visible > 0.075) forced to −1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcmiParams {
    pub c_blue: f64,
    pub c_green: f64,
    pub c_nir: f64,
    pub c_swir1: f64,
    pub c_swir2: f64,
    pub c_const: f64,
    pub bright_threshold: f64,
    pub mndwi_threshold: f64,
    pub suppressed_value: f64,
    pub classify_threshold: f64,
}

impl Default for AcmiParams {
    fn default() -> Self {
        Self {
            c_blue: 4.75,
            c_green: -1.0,
            c_nir: -4.5,
            c_swir1: 0.25,
            c_swir2: 1.0,
            c_const: 0.1,
            bright_threshold: 0.075,
            mndwi_threshold: 0.0,
            suppressed_value: -1.0,
            classify_threshold: 0.0,
        }
    }
}

impl AcmiParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c_blue,
            self.c_green,
            self.c_nir,
            self.c_swir1,
            self.c_swir2,
            self.c_const,
            self.bright_threshold,
            self.mndwi_threshold,
            self.suppressed_value,
            self.classify_threshold,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "ACMI parameters must be finite".into(),
            ));
        }
        if self.bright_threshold <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "bright_threshold must be positive, got {}",
                self.bright_threshold
            )));
        }
        Ok(())
    }

    /// The unsuppressed linear form for one pixel.
    #[inline]
    pub fn linear(&self, blue: f64, green: f64, nir: f64, swir1: f64, swir2: f64) -> f64 {
        self.c_blue * blue
            + self.c_green * green
            + self.c_nir * nir
            + self.c_swir1 * swir1
            + self.c_swir2 * swir2
            + self.c_const
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Acmi,
    Bci,
}

/// Real-valued per-pixel index with its own nodata mask. Nodata pixels hold NaN.
#[derive(Debug, Clone)]
pub struct IndexRaster {
    values: Array2<f32>,
    nodata: Array2<bool>,
}

impl IndexRaster {
    pub fn new(values: Array2<f32>, nodata: Array2<bool>) -> Result<Self> {
        if values.dim() != nodata.dim() {
            return Err(Error::DimensionMismatch {
                expected: (values.ncols(), values.nrows()),
                found: (nodata.ncols(), nodata.nrows()),
            });
        }
        Ok(Self {
            values: values.as_standard_layout().into_owned(),
            nodata: nodata.as_standard_layout().into_owned(),
        })
    }

    fn from_pixels(width: usize, height: usize, px: Vec<Option<f32>>) -> Self {
        let nodata = px.iter().map(Option::is_none).collect();
        let values = px.into_iter().map(|v| v.unwrap_or(f32::NAN)).collect();
        Self {
            values: Array2::from_shape_vec((height, width), values).expect("dims"),
            nodata: Array2::from_shape_vec((height, width), nodata).expect("dims"),
        }
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn nodata_mask(&self) -> &Array2<bool> {
        &self.nodata
    }

    /// `None` for nodata pixels.
    pub fn get(&self, row: usize, col: usize) -> Option<f32> {
        (!self.nodata[[row, col]]).then(|| self.values[[row, col]])
    }

    /// Saves as a 32-bit float GeoTIFF with nodata written as [`INDEX_NODATA`].
    pub fn write(&self, path: impl AsRef<Path>, geo: &GeoInfo) -> Result<()> {
        let out: Vec<f32> = self
            .values
            .iter()
            .zip(self.nodata.iter())
            .map(|(&v, &nd)| if nd { INDEX_NODATA } else { v })
            .collect();
        geotiff::write_bands(
            path,
            self.width(),
            self.height(),
            &[&out],
            geo,
            Some(f64::from(INDEX_NODATA)),
        )
    }
}

/// (green − swir1)/(green + swir1); `None` when the denominator is zero.
#[inline]
fn mndwi(green: f64, swir1: f64) -> Option<f64> {
    let den = green + swir1;
    (den != 0.0).then(|| (green - swir1) / den)
}

pub fn compute_mndwi(scene: &ReflectanceScene) -> Result<IndexRaster> {
    compute_mndwi_with(scene, Tiling::default())
}

pub fn compute_mndwi_with(scene: &ReflectanceScene, tiling: Tiling) -> Result<IndexRaster> {
    let (w, h) = scene.dims();
    let g = scene.band_slice(SemanticBand::Green)?;
    let s1 = scene.band_slice(SemanticBand::Swir1)?;
    let nd = scene.nodata_slice();
    let px = tiling.map_pixels(w, h, |r, c| {
        let i = r * w + c;
        if nd[i] {
            return None;
        }
        mndwi(f64::from(g[i]), f64::from(s1[i])).map(|v| v as f32)
    });
    Ok(IndexRaster::from_pixels(w, h, px))
}

pub fn compute_acmi(scene: &ReflectanceScene, params: &AcmiParams) -> Result<IndexRaster> {
    compute_acmi_with(scene, params, Tiling::default())
}

/// Evaluates the piecewise coal mapping index.
///
/// Water (MNDWI above `mndwi_threshold`) and bright pixels (max of blue, green, red above
/// `bright_threshold`) take `suppressed_value`; everything else takes the linear form.
/// A zero MNDWI denominator makes the pixel nodata.
pub fn compute_acmi_with(
    scene: &ReflectanceScene,
    params: &AcmiParams,
    tiling: Tiling,
) -> Result<IndexRaster> {
    params.validate()?;
    let (w, h) = scene.dims();
    let b = scene.band_slice(SemanticBand::Blue)?;
    let g = scene.band_slice(SemanticBand::Green)?;
    let r = scene.band_slice(SemanticBand::Red)?;
    let n = scene.band_slice(SemanticBand::Nir)?;
    let s1 = scene.band_slice(SemanticBand::Swir1)?;
    let s2 = scene.band_slice(SemanticBand::Swir2)?;
    let nd = scene.nodata_slice();
    let px = tiling.map_pixels(w, h, |row, col| {
        let i = row * w + col;
        if nd[i] {
            return None;
        }
        let (blue, green, red) = (f64::from(b[i]), f64::from(g[i]), f64::from(r[i]));
        let water = mndwi(green, f64::from(s1[i]))?;
        let value = if water > params.mndwi_threshold
            || blue.max(green).max(red) > params.bright_threshold
        {
            params.suppressed_value
        } else {
            params.linear(
                blue,
                green,
                f64::from(n[i]),
                f64::from(s1[i]),
                f64::from(s2[i]),
            )
        };
        Some(value as f32)
    });
    Ok(IndexRaster::from_pixels(w, h, px))
}

/// EC where the index is strictly above `threshold`; nodata propagates.
pub fn classify(index: &IndexRaster, threshold: f64) -> BinaryMask {
    classify_with(index, threshold, Tiling::default())
}

pub fn classify_with(index: &IndexRaster, threshold: f64, tiling: Tiling) -> BinaryMask {
    let (w, h) = (index.width(), index.height());
    let v = index.values.as_slice().expect("standard layout");
    let nd = index.nodata.as_slice().expect("standard layout");
    let px = tiling.map_pixels(w, h, |r, c| {
        let i = r * w + c;
        if nd[i] {
            MaskValue::Nodata
        } else {
            MaskValue::from_bool(f64::from(v[i]) > threshold)
        }
    });
    BinaryMask::from_vec(w, h, px)
}

pub fn compute_bci(scene: &ReflectanceScene) -> Result<BinaryMask> {
    compute_bci_with(scene, Tiling::default())
}

/// Bare coal index: EC iff `nir < swir1 < swir2 < 0.15`, all strict.
pub fn compute_bci_with(scene: &ReflectanceScene, tiling: Tiling) -> Result<BinaryMask> {
    let (w, h) = scene.dims();
    let n = scene.band_slice(SemanticBand::Nir)?;
    let s1 = scene.band_slice(SemanticBand::Swir1)?;
    let s2 = scene.band_slice(SemanticBand::Swir2)?;
    let nd = scene.nodata_slice();
    let px = tiling.map_pixels(w, h, |r, c| {
        let i = r * w + c;
        if nd[i] {
            return MaskValue::Nodata;
        }
        let (nir, swir1, swir2) = (f64::from(n[i]), f64::from(s1[i]), f64::from(s2[i]));
        MaskValue::from_bool(nir < swir1 && swir1 < swir2 && swir2 < BCI_SWIR2_CEILING)
    });
    Ok(BinaryMask::from_vec(w, h, px))
}
