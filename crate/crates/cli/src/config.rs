//! Flag definitions and their resolution against an optional JSON config file.
//! Precedence: built-in defaults, then `--config`, then explicit flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use coalmap_core::assessment::{DEFAULT_N_BG, DEFAULT_N_EC};
use coalmap_core::indices::{AcmiParams, IndexKind};
use coalmap_core::pipeline::PipelineConfig;
use coalmap_core::postprocess::QaBitConfig;
use coalmap_core::raster::{BandMap, ScaleOffset, Sensor};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SensorArg {
    Tm,
    Etm,
    Oli,
}

impl From<SensorArg> for Sensor {
    fn from(s: SensorArg) -> Self {
        match s {
            SensorArg::Tm => Sensor::Tm,
            SensorArg::Etm => Sensor::EtmPlus,
            SensorArg::Oli => Sensor::Oli,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndexArg {
    Acmi,
    Bci,
}

impl From<IndexArg> for IndexKind {
    fn from(i: IndexArg) -> Self {
        match i {
            IndexArg::Acmi => IndexKind::Acmi,
            IndexArg::Bci => IndexKind::Bci,
        }
    }
}

/// Contents accepted by `--config`. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub band_map: Option<BandMap>,
    pub scale_offset: Option<ScaleOffset>,
    pub pipeline: Option<PipelineConfig>,
    pub n_ec: Option<usize>,
    pub n_bg: Option<usize>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// Input raster(s): one multiband file or one file per band, stacked in order
    #[arg(long = "input", short = 'i', required = true)]
    pub inputs: Vec<PathBuf>,
    /// Sensor band-numbering preset
    #[arg(long, value_enum, conflicts_with = "bands")]
    pub sensor: Option<SensorArg>,
    /// Explicit 1-based source bands for blue,green,red,nir,swir1,swir2
    #[arg(long, value_name = "B,G,R,NIR,SWIR1,SWIR2")]
    pub bands: Option<String>,
    /// Reflectance = DN × scale + offset
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<f64>,
    /// Fill DN marking nodata
    #[arg(long, allow_hyphen_values = true, conflicts_with = "no_nodata_dn")]
    pub nodata_dn: Option<i64>,
    /// Disable fill-DN detection (for float reflectance inputs)
    #[arg(long)]
    pub no_nodata_dn: bool,
}

impl SceneArgs {
    pub fn band_map(&self, file: &FileConfig) -> CliResult<BandMap> {
        Ok(match (&self.bands, self.sensor) {
            (Some(list), _) => BandMap::from_list(list)?,
            (None, Some(s)) => BandMap::preset(s.into()),
            (None, None) => file.band_map.clone().unwrap_or_default(),
        })
    }

    pub fn scale_offset(&self, file: &FileConfig) -> CliResult<ScaleOffset> {
        let mut so = file.scale_offset.unwrap_or_default();
        if let Some(s) = self.scale {
            so.scale = s;
        }
        if let Some(o) = self.offset {
            so.offset = o;
        }
        if let Some(nd) = self.nodata_dn {
            so.nodata_dn = Some(nd);
        }
        if self.no_nodata_dn {
            so.nodata_dn = None;
        }
        so.validate()?;
        Ok(so)
    }
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    /// Decision threshold on the index (ACMI only)
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// JSON file with index coefficients and thresholds
    #[arg(long, value_name = "JSON")]
    pub params: Option<PathBuf>,
    /// Skip the 3×3 median filter
    #[arg(long)]
    pub no_median_filter: bool,
    /// QA_PIXEL raster; flagged pixels become nodata
    #[arg(long)]
    pub qa: Option<PathBuf>,
    /// QA bits that invalidate a pixel: cloud,shadow[,extra...]
    #[arg(long, value_name = "BITS", requires = "qa")]
    pub qa_bits: Option<String>,
}

impl MethodArgs {
    pub fn pipeline(
        &self,
        file: &FileConfig,
        index: Option<IndexArg>,
    ) -> CliResult<PipelineConfig> {
        let mut cfg = file.pipeline.clone().unwrap_or_default();
        if let Some(i) = index {
            cfg.index = i.into();
        }
        if let Some(p) = &self.params {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            cfg.acmi = serde_json::from_str::<AcmiParams>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        }
        if let Some(t) = self.threshold {
            cfg.acmi.classify_threshold = t;
        }
        if self.no_median_filter {
            cfg.median_filter = false;
        }
        if let Some(bits) = &self.qa_bits {
            cfg.qa_bits = parse_qa_bits(bits)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_qa_bits(s: &str) -> CliResult<QaBitConfig> {
    let bits = s
        .split(',')
        .map(|b| b.trim().parse::<u8>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("bad QA bit list {s:?}: {e}")))?;
    Ok(QaBitConfig::from_bits(&bits)?)
}

#[derive(Debug, Clone, Args)]
pub struct TruthArgs {
    /// Reference EC polygons (GeoJSON or pixel-space JSON)
    #[arg(long, conflicts_with = "truth_raster")]
    pub truth: Option<PathBuf>,
    /// Reference raster: 1 EC, 0 background, 255 excluded
    #[arg(long)]
    pub truth_raster: Option<PathBuf>,
    /// Samples drawn inside EC polygons
    #[arg(long)]
    pub n_ec: Option<usize>,
    /// Samples drawn outside EC polygons
    #[arg(long)]
    pub n_bg: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Resolved sampling design.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SamplingConfig {
    pub n_ec: usize,
    pub n_bg: usize,
    pub seed: u64,
}

impl TruthArgs {
    pub fn given(&self) -> bool {
        self.truth.is_some() || self.truth_raster.is_some()
    }

    pub fn sampling(&self, file: &FileConfig) -> SamplingConfig {
        SamplingConfig {
            n_ec: self.n_ec.or(file.n_ec).unwrap_or(DEFAULT_N_EC),
            n_bg: self.n_bg.or(file.n_bg).unwrap_or(DEFAULT_N_BG),
            seed: self.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        }
    }
}
