//! Accuracy report rows and the truth-to-samples step shared by `assess` and `compare`.

use std::fmt::Write as _;
use std::path::Path;

use coalmap_core::assessment::{
    evaluate, metrics, stratified_sample, PolygonSet, SamplePoint, Strata, Truth,
};
use coalmap_core::geotiff::GeoInfo;
use coalmap_core::raster::{read_mask, BinaryMask, MaskValue};
use serde::Serialize;

use crate::config::{SamplingConfig, TruthArgs};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    /// Percent; null when nothing was predicted EC.
    pub ua: Option<f64>,
    pub pa: f64,
    /// Fraction in [0, 1].
    pub f1: f64,
    pub oa: f64,
    pub nodata_excluded: u64,
}

pub fn assess_mask(
    method: &str,
    mask: &BinaryMask,
    samples: &[SamplePoint],
) -> CliResult<MethodReport> {
    let ev = evaluate(mask, samples)?;
    let r = metrics(&ev.matrix)?;
    Ok(MethodReport {
        method: method.to_string(),
        tp: r.matrix.tp,
        fp: r.matrix.fp,
        fn_: r.matrix.fn_,
        tn: r.matrix.tn,
        ua: r.ua,
        pa: r.pa,
        f1: r.f1,
        oa: r.oa,
        nodata_excluded: ev.nodata_excluded,
    })
}

/// Percentages to two decimals, UA as `-` when undefined, F1 both as fraction and percent.
pub fn reports_csv(rows: &[MethodReport]) -> String {
    let mut s = String::from(
        "method,tp,fp,fn,tn,ua_percent,pa_percent,f1,f1_percent,oa_percent,nodata_excluded\n",
    );
    for r in rows {
        let ua = r.ua.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{ua},{:.2},{:.4},{:.2},{:.2},{}",
            r.method,
            r.tp,
            r.fp,
            r.fn_,
            r.tn,
            r.pa,
            r.f1,
            r.f1 * 100.0,
            r.oa,
            r.nodata_excluded
        );
    }
    s
}

pub fn samples_csv(samples: &[SamplePoint], masks: &[(&str, &BinaryMask)]) -> String {
    let mut s = String::from("col,row,truth");
    for (name, _) in masks {
        let _ = write!(s, ",{name}");
    }
    s.push('\n');
    for p in samples {
        let truth = match p.truth {
            Truth::Ec => 1,
            Truth::Background => 0,
        };
        let _ = write!(s, "{},{},{truth}", p.col, p.row);
        for (_, m) in masks {
            let _ = write!(s, ",{}", m.get(p.row, p.col).code());
        }
        s.push('\n');
    }
    s
}

/// Draws the stratified sample from reference polygons or a reference raster.
/// Polygons in map coordinates are projected through the raster's geotransform.
pub fn draw_samples(
    truth: &TruthArgs,
    sampling: &SamplingConfig,
    dims: (usize, usize),
    geo: &GeoInfo,
) -> CliResult<Vec<SamplePoint>> {
    if let Some(path) = &truth.truth {
        let polys = PolygonSet::from_file(path)?.to_pixel_space(geo.geo_transform.as_ref())?;
        Ok(stratified_sample(
            dims,
            &polys,
            sampling.n_ec,
            sampling.n_bg,
            sampling.seed,
        )?)
    } else if let Some(path) = &truth.truth_raster {
        let mask = read_truth_raster(path, dims)?;
        Ok(Strata::from_truth_mask(&mask).sample(sampling.n_ec, sampling.n_bg, sampling.seed)?)
    } else {
        Err(CliError::Config(
            "one of --truth or --truth-raster is required".into(),
        ))
    }
}

fn read_truth_raster(path: &Path, dims: (usize, usize)) -> CliResult<BinaryMask> {
    let (mask, _) = read_mask(path)?;
    if mask.dims() != dims {
        return Err(coalmap_core::Error::DimensionMismatch {
            expected: dims,
            found: mask.dims(),
        }
        .into());
    }
    log::info!(
        "truth raster: {} EC, {} background, {} excluded",
        mask.count(MaskValue::Ec),
        mask.count(MaskValue::NonEc),
        mask.count(MaskValue::Nodata)
    );
    Ok(mask)
}
