//! Synthetic reflectance scenes with known ground truth.
//!
//! Each pixel belongs to one rectangular region whose class spectrum gives a per-band
//! Gaussian; draws are clamped to [0, 1]. Preset means are chosen so that the ACMI and
//! BCI decision at the mean follows by direct substitution.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geotiff::{write_bands, GeoInfo};
use crate::raster::{BandMap, BinaryMask, MaskValue, ReflectanceScene, ScaleOffset, SemanticBand};
use crate::{Error, Result};

/// Class reflectance model, bands ordered blue, green, red, NIR, SWIR1, SWIR2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpectrum {
    pub class_name: String,
    pub mean: [f64; 6],
    pub stddev: [f64; 6],
    /// Whether pixels of this class are exposed coal in the ground truth.
    #[serde(default)]
    pub is_ec: bool,
}

impl ClassSpectrum {
    pub fn new(class_name: &str, mean: [f64; 6], stddev: [f64; 6], is_ec: bool) -> Result<Self> {
        let s = Self {
            class_name: class_name.to_string(),
            mean,
            stddev,
            is_ec,
        };
        s.validate()?;
        Ok(s)
    }

    /// Checks `stddev ≥ 0` and `mean ± 3·stddev ⊂ [0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for (m, s) in self.mean.iter().zip(&self.stddev) {
            if !(m.is_finite() && s.is_finite() && *s >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "class {}: mean and stddev must be finite with stddev >= 0",
                    self.class_name
                )));
            }
            if m - 3.0 * s < 0.0 || m + 3.0 * s > 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "class {}: mean {m} ± 3·{s} leaves [0, 1]",
                    self.class_name
                )));
            }
        }
        Ok(())
    }

    /// The same class with all noise removed.
    pub fn noiseless(&self) -> Self {
        Self {
            stddev: [0.0; 6],
            ..self.clone()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        presets().into_iter().find(|s| s.class_name == name)
    }
}

fn preset(name: &str, mean: [f64; 6], stddev: [f64; 6], is_ec: bool) -> ClassSpectrum {
    ClassSpectrum {
        class_name: name.to_string(),
        mean,
        stddev,
        is_ec,
    }
}

/// Built-in spectra: exposed coal, a coal variant with SWIR1 above SWIR2, and seven
/// background covers.
pub fn presets() -> Vec<ClassSpectrum> {
    const SD: [f64; 6] = [0.005; 6];
    vec![
        preset("ec", [0.045, 0.048, 0.05, 0.055, 0.065, 0.07], SD, true),
        preset(
            "ec_swapped_swir",
            [0.045, 0.048, 0.05, 0.055, 0.095, 0.06],
            SD,
            true,
        ),
        preset(
            "water",
            [0.06, 0.07, 0.05, 0.03, 0.01, 0.005],
            [0.003, 0.003, 0.003, 0.002, 0.001, 0.001],
            false,
        ),
        preset(
            "vegetation",
            [0.03, 0.06, 0.04, 0.35, 0.18, 0.09],
            [0.004, 0.005, 0.004, 0.02, 0.01, 0.008],
            false,
        ),
        preset(
            "bright_soil",
            [0.12, 0.15, 0.18, 0.22, 0.28, 0.25],
            [0.01; 6],
            false,
        ),
        preset(
            "dark_soil",
            [0.05, 0.065, 0.07, 0.12, 0.13, 0.11],
            SD,
            false,
        ),
        preset(
            "bright_bus",
            [0.15, 0.16, 0.17, 0.2, 0.22, 0.2],
            [0.01; 6],
            false,
        ),
        preset(
            "dark_bus",
            [0.05, 0.062, 0.068, 0.12, 0.11, 0.10],
            SD,
            false,
        ),
        preset(
            "red_bus",
            [0.06, 0.07, 0.14, 0.16, 0.18, 0.16],
            [0.008; 6],
            false,
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub class: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneLayout {
    pub width: usize,
    pub height: usize,
    pub regions: Vec<Region>,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SceneLayout {
    /// One class over the whole raster.
    pub fn uniform(width: usize, height: usize, class: &str, rng_seed: u64) -> Self {
        Self {
            width,
            height,
            regions: vec![Region {
                x: 0,
                y: 0,
                width,
                height,
                class: class.to_string(),
            }],
            rng_seed,
        }
    }

    /// Four quadrants in reading order: top-left, top-right, bottom-left, bottom-right.
    pub fn quadrants(width: usize, height: usize, classes: [&str; 4], rng_seed: u64) -> Self {
        let (hw, hh) = (width / 2, height / 2);
        let rects = [
            (0, 0, hw, hh),
            (hw, 0, width - hw, hh),
            (0, hh, hw, height - hh),
            (hw, hh, width - hw, height - hh),
        ];
        Self {
            width,
            height,
            regions: rects
                .iter()
                .zip(classes)
                .map(|(&(x, y, w, h), c)| Region {
                    x,
                    y,
                    width: w,
                    height: h,
                    class: c.to_string(),
                })
                .collect(),
            rng_seed,
        }
    }

    /// Region index per pixel, or an error unless the regions tile the raster exactly.
    fn owner_map(&self) -> Result<Array2<usize>> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidLayout("raster must be non-empty".into()));
        }
        let mut owner = Array2::from_elem((self.height, self.width), usize::MAX);
        for (k, r) in self.regions.iter().enumerate() {
            if r.width == 0 || r.height == 0 {
                return Err(Error::InvalidLayout(format!("region {k} is empty")));
            }
            if r.x + r.width > self.width || r.y + r.height > self.height {
                return Err(Error::InvalidLayout(format!(
                    "region {k} exceeds the raster"
                )));
            }
            for row in r.y..r.y + r.height {
                for col in r.x..r.x + r.width {
                    let o = &mut owner[[row, col]];
                    if *o != usize::MAX {
                        return Err(Error::InvalidLayout(format!(
                            "regions {} and {k} overlap at ({col}, {row})",
                            *o
                        )));
                    }
                    *o = k;
                }
            }
        }
        if let Some(((row, col), _)) = owner.indexed_iter().find(|(_, &o)| o == usize::MAX) {
            return Err(Error::InvalidLayout(format!(
                "pixel ({col}, {row}) is not covered"
            )));
        }
        Ok(owner)
    }

    pub fn validate(&self) -> Result<()> {
        self.owner_map().map(|_| ())
    }
}

/// Draws a scene from `layout`. Spectra are looked up by class name; the result
/// uses the six-band custom band map and has no georeferencing.
pub fn generate_scene(
    layout: &SceneLayout,
    spectra: &[ClassSpectrum],
) -> Result<(ReflectanceScene, BinaryMask)> {
    let owner = layout.owner_map()?;
    let classes: Vec<&ClassSpectrum> = layout
        .regions
        .iter()
        .map(|r| {
            spectra
                .iter()
                .find(|s| s.class_name == r.class)
                .ok_or_else(|| Error::UnknownClass(r.class.clone()))
        })
        .collect::<Result<_>>()?;
    for c in &classes {
        c.validate()?;
    }
    let normals: Vec<[Normal<f64>; 6]> = classes
        .iter()
        .map(|c| std::array::from_fn(|b| Normal::new(c.mean[b], c.stddev[b]).expect("validated")))
        .collect();

    // single RNG stream in row-major, band-minor order
    let (w, h) = (layout.width, layout.height);
    let mut rng = ChaCha8Rng::seed_from_u64(layout.rng_seed);
    let mut planes = vec![vec![0f32; w * h]; 6];
    let mut truth = Vec::with_capacity(w * h);
    for (i, &k) in owner.iter().enumerate() {
        for (b, plane) in planes.iter_mut().enumerate() {
            let v = if classes[k].stddev[b] == 0.0 {
                classes[k].mean[b]
            } else {
                normals[k][b].sample(&mut rng).clamp(0.0, 1.0)
            };
            plane[i] = v as f32;
        }
        truth.push(MaskValue::from_bool(classes[k].is_ec));
    }
    let bands = planes
        .into_iter()
        .map(|p| Array2::from_shape_vec((h, w), p).expect("shape"))
        .collect();
    let scene = ReflectanceScene::new(
        bands,
        BandMap::preset(crate::raster::Sensor::Custom),
        GeoInfo::default(),
    )?;
    Ok((scene, BinaryMask::from_vec(w, h, truth)))
}

/// Layout file: a [`SceneLayout`] plus optional extra or overriding spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutDocument {
    #[serde(flatten)]
    pub layout: SceneLayout,
    #[serde(default)]
    pub spectra: Vec<ClassSpectrum>,
}

impl LayoutDocument {
    /// Presets with same-named custom spectra replaced and new ones appended.
    pub fn resolved_spectra(&self) -> Vec<ClassSpectrum> {
        let custom: BTreeSet<&str> = self.spectra.iter().map(|s| s.class_name.as_str()).collect();
        presets()
            .into_iter()
            .filter(|p| !custom.contains(p.class_name.as_str()))
            .chain(self.spectra.iter().cloned())
            .collect()
    }
}

/// Writes a scene as a seven-band u16 DN stack laid out like an OLI surface-reflectance
/// product (band 1 repeats blue), so the default band map and scaling read it back.
pub fn write_scene_dn(
    scene: &ReflectanceScene,
    path: impl AsRef<Path>,
    scale: &ScaleOffset,
) -> Result<()> {
    scale.validate()?;
    let (w, h) = scene.dims();
    let nodata = scene.nodata_mask();
    let fill = scale.nodata_dn.unwrap_or(0).clamp(0, u16::MAX as i64) as u16;
    let order = [
        SemanticBand::Blue,
        SemanticBand::Blue,
        SemanticBand::Green,
        SemanticBand::Red,
        SemanticBand::Nir,
        SemanticBand::Swir1,
        SemanticBand::Swir2,
    ];
    let planes = order
        .iter()
        .map(|&b| {
            let band = scene.get_band(b)?;
            Ok(ndarray::Zip::from(band)
                .and(nodata)
                .map_collect(|&v, &nd| {
                    if nd {
                        fill
                    } else {
                        scale.recover_dn(v).clamp(0.0, u16::MAX as f64) as u16
                    }
                })
                .into_raw_vec_and_offset()
                .0)
        })
        .collect::<Result<Vec<Vec<u16>>>>()?;
    let refs: Vec<&[u16]> = planes.iter().map(Vec::as_slice).collect();
    write_bands(
        path,
        w,
        h,
        &refs,
        scene.geo(),
        scale.nodata_dn.map(|d| d as f64),
    )
}
