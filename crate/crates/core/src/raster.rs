//! Scene ingestion, band semantics and the three-state classification mask.

use std::fmt;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::geotiff::{self, GeoInfo};
use crate::{Error, Result};

/// Valid reflectance after scaling; anything outside becomes nodata.
pub const REFLECTANCE_RANGE: (f32, f32) = (-0.2, 1.6);

/// Value written for nodata pixels in 8-bit mask rasters.
pub const MASK_NODATA: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticBand {
    Blue,
    Green,
    Red,
    Nir,
    Swir1,
    Swir2,
}

impl SemanticBand {
    pub const ALL: [SemanticBand; 6] = [
        SemanticBand::Blue,
        SemanticBand::Green,
        SemanticBand::Red,
        SemanticBand::Nir,
        SemanticBand::Swir1,
        SemanticBand::Swir2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SemanticBand::Blue => "blue",
            SemanticBand::Green => "green",
            SemanticBand::Red => "red",
            SemanticBand::Nir => "nir",
            SemanticBand::Swir1 => "swir1",
            SemanticBand::Swir2 => "swir2",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SemanticBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensor {
    Tm,
    EtmPlus,
    Oli,
    Custom,
}

/// Maps the six semantic bands to 1-based indices in the assembled band stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BandMapRepr", into = "BandMapRepr")]
pub struct BandMap {
    sensor: Sensor,
    assignments: [Option<usize>; 6],
}

#[derive(Serialize, Deserialize)]
struct BandMapRepr {
    sensor: Sensor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bands: Option<std::collections::BTreeMap<SemanticBand, usize>>,
}

impl TryFrom<BandMapRepr> for BandMap {
    type Error = Error;

    fn try_from(r: BandMapRepr) -> Result<Self> {
        match (r.sensor, r.bands) {
            (Sensor::Custom, Some(bands)) => BandMap::custom(bands),
            (Sensor::Custom, None) => Err(Error::InvalidConfig(
                "custom band map requires a \"bands\" object".into(),
            )),
            (sensor, None) => Ok(BandMap::preset(sensor)),
            (_, Some(_)) => Err(Error::InvalidConfig(
                "explicit \"bands\" are only accepted with sensor \"custom\"".into(),
            )),
        }
    }
}

impl From<BandMap> for BandMapRepr {
    fn from(m: BandMap) -> Self {
        let bands = (m.sensor == Sensor::Custom).then(|| {
            SemanticBand::ALL
                .iter()
                .filter_map(|&b| m.source_index(b).map(|i| (b, i)))
                .collect()
        });
        BandMapRepr {
            sensor: m.sensor,
            bands,
        }
    }
}

impl BandMap {
    /// Standard band designations: TM/ETM+ 1,2,3,4,5,7 and OLI 2,3,4,5,6,7.
    /// `Sensor::Custom` yields the identity 1..=6.
    pub fn preset(sensor: Sensor) -> Self {
        let idx = match sensor {
            Sensor::Tm | Sensor::EtmPlus => [1, 2, 3, 4, 5, 7],
            Sensor::Oli => [2, 3, 4, 5, 6, 7],
            Sensor::Custom => [1, 2, 3, 4, 5, 6],
        };
        Self {
            sensor,
            assignments: idx.map(Some),
        }
    }

    pub fn tm() -> Self {
        Self::preset(Sensor::Tm)
    }

    pub fn etm_plus() -> Self {
        Self::preset(Sensor::EtmPlus)
    }

    pub fn oli() -> Self {
        Self::preset(Sensor::Oli)
    }

    /// Builds a custom map; indices are 1-based and must be distinct.
    pub fn custom(assign: impl IntoIterator<Item = (SemanticBand, usize)>) -> Result<Self> {
        let mut assignments = [None; 6];
        for (band, idx) in assign {
            if idx == 0 {
                return Err(Error::InvalidConfig(format!(
                    "band indices are 1-based; {band} mapped to 0"
                )));
            }
            if assignments[band.slot()].is_some() {
                return Err(Error::InvalidConfig(format!("{band} assigned twice")));
            }
            assignments[band.slot()] = Some(idx);
        }
        let mut used: Vec<usize> = assignments.iter().flatten().copied().collect();
        used.sort_unstable();
        if used.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(
                "band map is not injective: two semantic bands share a source band".into(),
            ));
        }
        Ok(Self {
            sensor: Sensor::Custom,
            assignments,
        })
    }

    /// Parses `b,g,r,nir,swir1,swir2` as six 1-based source indices.
    pub fn from_list(list: &str) -> Result<Self> {
        let idx: Vec<usize> = list
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidConfig(format!("bad band list {list:?}: {e}")))?;
        if idx.len() != 6 {
            return Err(Error::InvalidConfig(format!(
                "band list needs 6 indices (blue,green,red,nir,swir1,swir2), got {}",
                idx.len()
            )));
        }
        Self::custom(SemanticBand::ALL.into_iter().zip(idx))
    }

    pub fn sensor(&self) -> Sensor {
        self.sensor
    }

    /// 1-based source band index for `band`, if assigned.
    pub fn source_index(&self, band: SemanticBand) -> Option<usize> {
        self.assignments[band.slot()]
    }

    pub fn is_total(&self) -> bool {
        self.assignments.iter().all(Option::is_some)
    }
}

impl Default for BandMap {
    fn default() -> Self {
        Self::oli()
    }
}

/// Affine DN → reflectance conversion and the integer fill sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleOffset {
    pub scale: f64,
    pub offset: f64,
    /// DN marking fill pixels; `None` disables sentinel detection.
    pub nodata_dn: Option<i64>,
}

impl Default for ScaleOffset {
    /// Landsat Collection-2 Level-2 surface reflectance.
    fn default() -> Self {
        Self {
            scale: 2.75e-5,
            offset: -0.2,
            nodata_dn: Some(0),
        }
    }
}

impl ScaleOffset {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset: 0.0,
            nodata_dn: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "scale must be positive and finite, got {}",
                self.scale
            )));
        }
        if !self.offset.is_finite() {
            return Err(Error::InvalidConfig("offset must be finite".into()));
        }
        Ok(())
    }

    pub fn to_reflectance(&self, dn: f64) -> f32 {
        (dn * self.scale + self.offset) as f32
    }

    pub fn to_dn(&self, reflectance: f32) -> f64 {
        (f64::from(reflectance) - self.offset) / self.scale
    }

    /// Inverse scaling snapped to the integer DN grid. Reflectance is stored as f32,
    /// whose spacing near −0.2 is coarse enough that the plain inverse drifts by up to
    /// ~5e-4 DN; that is far below half a DN, so rounding recovers integer inputs exactly.
    pub fn recover_dn(&self, reflectance: f32) -> f64 {
        self.to_dn(reflectance).round()
    }

    pub fn is_sentinel(&self, dn: f64) -> bool {
        self.nodata_dn.is_some_and(|nd| dn == nd as f64)
    }
}

/// Multi-band surface reflectance on a common grid.
///
/// Bands are stored in stack order; `band_map` resolves the six semantic bands into it.
/// A pixel is nodata when any semantic band is a fill value, non-finite, or outside
/// [`REFLECTANCE_RANGE`].
#[derive(Debug, Clone)]
pub struct ReflectanceScene {
    width: usize,
    height: usize,
    bands: Vec<Array2<f32>>,
    band_map: BandMap,
    nodata: Array2<bool>,
    geo: GeoInfo,
}

fn plausible(v: f32) -> bool {
    v.is_finite() && (REFLECTANCE_RANGE.0..=REFLECTANCE_RANGE.1).contains(&v)
}

impl ReflectanceScene {
    /// Builds a scene from reflectance planes, flagging implausible values as nodata.
    pub fn new(bands: Vec<Array2<f32>>, band_map: BandMap, geo: GeoInfo) -> Result<Self> {
        let nodata = match bands.first() {
            Some(b) => Array2::from_elem(b.dim(), false),
            None => return Err(Error::InvalidConfig("scene has no bands".into())),
        };
        Self::with_nodata(bands, band_map, nodata, geo)
    }

    /// Like [`ReflectanceScene::new`] but starting from an existing nodata mask.
    pub fn with_nodata(
        bands: Vec<Array2<f32>>,
        band_map: BandMap,
        mut nodata: Array2<bool>,
        geo: GeoInfo,
    ) -> Result<Self> {
        let (height, width) = nodata.dim();
        for b in &bands {
            if b.dim() != (height, width) {
                return Err(Error::DimensionMismatch {
                    expected: (width, height),
                    found: (b.ncols(), b.nrows()),
                });
            }
        }
        for band in SemanticBand::ALL {
            let idx = band_map
                .source_index(band)
                .ok_or(Error::UnresolvedBand(band.name()))?;
            let plane = bands.get(idx - 1).ok_or(Error::BandCount {
                index: idx,
                available: bands.len(),
            })?;
            ndarray::Zip::from(&mut nodata)
                .and(plane)
                .for_each(|nd, &v| *nd |= !plausible(v));
        }
        let bands = bands
            .into_iter()
            .map(|b| b.as_standard_layout().into_owned())
            .collect();
        Ok(Self {
            width,
            height,
            bands,
            band_map,
            nodata,
            geo,
        })
    }

    /// Adds `extra` (true = invalid) to the nodata mask.
    pub fn mask_out(mut self, extra: &Array2<bool>) -> Result<Self> {
        if extra.dim() != self.nodata.dim() {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                found: (extra.ncols(), extra.nrows()),
            });
        }
        ndarray::Zip::from(&mut self.nodata)
            .and(extra)
            .for_each(|nd, &e| *nd |= e);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn band_map(&self) -> &BandMap {
        &self.band_map
    }

    pub fn bands(&self) -> &[Array2<f32>] {
        &self.bands
    }

    pub fn nodata_mask(&self) -> &Array2<bool> {
        &self.nodata
    }

    pub fn is_nodata(&self, row: usize, col: usize) -> bool {
        self.nodata[[row, col]]
    }

    pub fn geo(&self) -> &GeoInfo {
        &self.geo
    }

    /// The plane for `which`, resolved through the band map.
    pub fn get_band(&self, which: SemanticBand) -> Result<&Array2<f32>> {
        let idx = self
            .band_map
            .source_index(which)
            .ok_or(Error::UnresolvedBand(which.name()))?;
        self.bands.get(idx - 1).ok_or(Error::BandCount {
            index: idx,
            available: self.bands.len(),
        })
    }

    pub(crate) fn band_slice(&self, which: SemanticBand) -> Result<&[f32]> {
        Ok(self
            .get_band(which)?
            .as_slice()
            .expect("scene bands are stored in standard layout"))
    }

    pub(crate) fn nodata_slice(&self) -> &[bool] {
        self.nodata
            .as_slice()
            .expect("nodata mask is stored in standard layout")
    }
}

/// Reads and scales a scene from one multiband file or several band files.
///
/// Files are stacked in the order given; `band_map` indexes into that stack (1-based).
pub fn load_scene<P: AsRef<Path>>(
    paths: &[P],
    band_map: &BandMap,
    scale_offset: &ScaleOffset,
) -> Result<ReflectanceScene> {
    scale_offset.validate()?;
    if paths.is_empty() {
        return Err(Error::InvalidConfig("no input rasters given".into()));
    }
    let mut dims: Option<(usize, usize)> = None;
    let mut geo = GeoInfo::default();
    let mut stack: Vec<Vec<f64>> = Vec::new();
    for (i, p) in paths.iter().enumerate() {
        let r = geotiff::read_raster(p)?;
        match dims {
            None => dims = Some((r.width, r.height)),
            Some(d) if d != (r.width, r.height) => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: (r.width, r.height),
                })
            }
            Some(_) => {}
        }
        if i == 0 {
            geo = r.geo;
        }
        stack.extend(r.bands);
    }
    let (width, height) = dims.expect("at least one path");

    let mut nodata = Array2::from_elem((height, width), false);
    for band in SemanticBand::ALL {
        let idx = band_map
            .source_index(band)
            .ok_or(Error::UnresolvedBand(band.name()))?;
        let dn = stack.get(idx - 1).ok_or(Error::BandCount {
            index: idx,
            available: stack.len(),
        })?;
        for (nd, &v) in nodata.iter_mut().zip(dn) {
            *nd |= scale_offset.is_sentinel(v) || !v.is_finite();
        }
    }
    let bands = stack
        .into_iter()
        .map(|dn| {
            let refl = dn
                .into_iter()
                .map(|v| scale_offset.to_reflectance(v))
                .collect();
            Array2::from_shape_vec((height, width), refl).expect("plane length matches dims")
        })
        .collect();
    ReflectanceScene::with_nodata(bands, band_map.clone(), nodata, geo)
}

/// Reads a single-band integer raster such as a QA_PIXEL band.
pub fn load_qa_band(path: impl AsRef<Path>) -> Result<Array2<u16>> {
    let path = path.as_ref();
    let r = geotiff::read_raster(path)?;
    let plane = r.bands.into_iter().next().unwrap_or_default();
    let words = plane
        .into_iter()
        .map(|v| {
            if v.fract() == 0.0 && (0.0..=f64::from(u16::MAX)).contains(&v) {
                Ok(v as u16)
            } else {
                Err(Error::UnsupportedRaster(format!(
                    "{}: QA value {v} is not a 16-bit word",
                    path.display()
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Array2::from_shape_vec((r.height, r.width), words).expect("plane length matches dims"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum MaskValue {
    #[default]
    NonEc = 0,
    Ec = 1,
    Nodata = MASK_NODATA,
}

impl MaskValue {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(MaskValue::NonEc),
            1 => Some(MaskValue::Ec),
            MASK_NODATA => Some(MaskValue::Nodata),
            _ => None,
        }
    }

    pub fn from_bool(ec: bool) -> Self {
        if ec {
            MaskValue::Ec
        } else {
            MaskValue::NonEc
        }
    }
}

/// Per-pixel EC / non-EC / nodata classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    values: Array2<MaskValue>,
}

impl BinaryMask {
    pub fn new(values: Array2<MaskValue>) -> Self {
        Self {
            values: values.as_standard_layout().into_owned(),
        }
    }

    pub fn filled(width: usize, height: usize, value: MaskValue) -> Self {
        Self {
            values: Array2::from_elem((height, width), value),
        }
    }

    pub(crate) fn from_vec(width: usize, height: usize, v: Vec<MaskValue>) -> Self {
        Self {
            values: Array2::from_shape_vec((height, width), v).expect("buffer matches dims"),
        }
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    pub fn values(&self) -> &Array2<MaskValue> {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> MaskValue {
        self.values[[row, col]]
    }

    pub fn set(&mut self, row: usize, col: usize, v: MaskValue) {
        self.values[[row, col]] = v;
    }

    pub(crate) fn as_slice(&self) -> &[MaskValue] {
        self.values
            .as_slice()
            .expect("mask stored in standard layout")
    }

    pub fn count(&self, v: MaskValue) -> usize {
        self.values.iter().filter(|&&x| x == v).count()
    }

    pub fn to_codes(&self) -> Vec<u8> {
        self.values.iter().map(|v| v.code()).collect()
    }
}

/// Writes a mask as 8-bit GeoTIFF: 0 non-EC, 1 EC, 255 nodata.
pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>, geo: &GeoInfo) -> Result<()> {
    let codes = mask.to_codes();
    geotiff::write_bands(
        path,
        mask.width(),
        mask.height(),
        &[&codes],
        geo,
        Some(f64::from(MASK_NODATA)),
    )
}

/// Reads a mask written by [`write_mask`] (or any 0/1/255 8-bit raster).
pub fn read_mask(path: impl AsRef<Path>) -> Result<(BinaryMask, GeoInfo)> {
    let path = path.as_ref();
    let r = geotiff::read_raster(path)?;
    let plane = r.bands.into_iter().next().unwrap_or_default();
    let values = plane
        .into_iter()
        .map(|v| {
            (v.fract() == 0.0 && (0.0..=255.0).contains(&v))
                .then(|| MaskValue::from_code(v as u8))
                .flatten()
                .ok_or_else(|| {
                    Error::UnsupportedRaster(format!(
                        "{}: mask value {v} is not one of 0, 1, 255",
                        path.display()
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((BinaryMask::from_vec(r.width, r.height, values), r.geo))
}
