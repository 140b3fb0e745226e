//! Subcommand implementations. Each validates its flags, reads inputs, and writes
//! every output through [`Outputs`] so a failure leaves nothing behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use coalmap_core::geotiff::write_bands;
use coalmap_core::indices::IndexKind;
use coalmap_core::pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
use coalmap_core::raster::{
    load_qa_band, load_scene, read_mask, write_mask, BandMap, BinaryMask, MaskValue,
    ReflectanceScene, ScaleOffset, MASK_NODATA,
};
use coalmap_core::spectral_stats::{
    class_stats, jm_matrix, ClassSampleSet, ClassStats, Separability,
};
use coalmap_core::synth::{generate_scene, write_scene_dn, LayoutDocument};
use serde::Serialize;

use crate::config::{FileConfig, IndexArg, MethodArgs, SamplingConfig, SceneArgs, TruthArgs};
use crate::error::{CliError, CliResult};
use crate::output::{hash_file, hash_files, InputRecord, Outputs, Provenance};
use crate::report::{assess_mask, draw_samples, reports_csv, samples_csv, MethodReport};

#[derive(Debug, Clone, Serialize)]
struct SceneConfig {
    band_map: BandMap,
    scale_offset: ScaleOffset,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct MaskCounts {
    ec: usize,
    non_ec: usize,
    nodata: usize,
}

impl MaskCounts {
    fn of(m: &BinaryMask) -> Self {
        Self {
            ec: m.count(MaskValue::Ec),
            non_ec: m.count(MaskValue::NonEc),
            nodata: m.count(MaskValue::Nodata),
        }
    }
}

struct LoadedScene {
    scene: ReflectanceScene,
    qa: Option<ndarray::Array2<u16>>,
    inputs: Vec<InputRecord>,
    config: SceneConfig,
}

fn load(scene_args: &SceneArgs, method: &MethodArgs, file: &FileConfig) -> CliResult<LoadedScene> {
    let config = SceneConfig {
        band_map: scene_args.band_map(file)?,
        scale_offset: scene_args.scale_offset(file)?,
    };
    let mut inputs = hash_files(scene_args.inputs.iter().map(PathBuf::as_path))?;
    let scene = load_scene(&scene_args.inputs, &config.band_map, &config.scale_offset)?;
    log::info!(
        "loaded {}x{} scene, {} nodata pixels",
        scene.width(),
        scene.height(),
        scene.nodata_mask().iter().filter(|&&v| v).count()
    );
    let qa = match &method.qa {
        Some(p) => {
            inputs.push(hash_file(p)?);
            Some(load_qa_band(p)?)
        }
        None => None,
    };
    Ok(LoadedScene {
        scene,
        qa,
        inputs,
        config,
    })
}

fn run(loaded: &LoadedScene, cfg: &PipelineConfig) -> CliResult<PipelineOutput> {
    Ok(run_pipeline(&loaded.scene, loaded.qa.as_ref(), cfg)?)
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Index used for classification
    #[arg(long, value_enum)]
    pub index: Option<IndexArg>,
    /// Output mask raster (u8: 0 non-EC, 1 EC, 255 nodata)
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    /// Also write the continuous index as float32 (ACMI only)
    #[arg(long, value_name = "PATH")]
    pub emit_index: Option<PathBuf>,
    /// JSON summary with configuration, input hashes and class counts
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Serialize)]
struct ClassifyConfig<'a> {
    scene: &'a SceneConfig,
    pipeline: &'a PipelineConfig,
}

#[derive(Serialize)]
struct ClassifySummary<'a> {
    #[serde(flatten)]
    provenance: Provenance<ClassifyConfig<'a>>,
    counts: MaskCounts,
}

pub fn classify(args: &ClassifyArgs, file: &FileConfig, out: &mut Outputs) -> CliResult<()> {
    let cfg = args.method.pipeline(file, args.index)?;
    if args.emit_index.is_some() && cfg.index == IndexKind::Bci {
        return Err(CliError::Config(
            "--emit-index needs a continuous index; BCI is a rule".into(),
        ));
    }
    let loaded = load(&args.scene, &args.method, file)?;
    let result = run(&loaded, &cfg)?;
    let geo = loaded.scene.geo();
    write_mask(&result.mask, out.claim(&args.out)?, geo)?;
    if let (Some(path), Some(index)) = (&args.emit_index, &result.index) {
        index.write(out.claim(path)?, geo)?;
    }
    let counts = MaskCounts::of(&result.mask);
    log::info!(
        "{} EC, {} non-EC, {} nodata",
        counts.ec,
        counts.non_ec,
        counts.nodata
    );
    if let Some(path) = &args.report {
        let config = ClassifyConfig {
            scene: &loaded.config,
            pipeline: &cfg,
        };
        let summary = ClassifySummary {
            provenance: Provenance::new("classify", config, loaded.inputs.clone()),
            counts,
        };
        out.write_json(path, &summary)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub truth: TruthArgs,
    /// Directory for masks, the agreement raster and reports
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct CompareConfig<'a> {
    scene: &'a SceneConfig,
    acmi: &'a PipelineConfig,
    bci: &'a PipelineConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampling: Option<SamplingConfig>,
}

#[derive(Serialize)]
struct AgreementCounts {
    both_non_ec: usize,
    acmi_only: usize,
    bci_only: usize,
    both_ec: usize,
    nodata: usize,
}

#[derive(Serialize)]
struct CompareSummary<'a> {
    #[serde(flatten)]
    provenance: Provenance<CompareConfig<'a>>,
    acmi: MaskCounts,
    bci: MaskCounts,
    agreement: AgreementCounts,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    reports: Vec<MethodReport>,
}

/// 0 both non-EC, 1 ACMI only, 2 BCI only, 3 both EC, 255 nodata in either.
fn agreement(acmi: &BinaryMask, bci: &BinaryMask) -> (Vec<u8>, AgreementCounts) {
    let mut counts = AgreementCounts {
        both_non_ec: 0,
        acmi_only: 0,
        bci_only: 0,
        both_ec: 0,
        nodata: 0,
    };
    let codes = acmi
        .values()
        .iter()
        .zip(bci.values().iter())
        .map(|(&a, &b)| {
            if a == MaskValue::Nodata || b == MaskValue::Nodata {
                counts.nodata += 1;
                return MASK_NODATA;
            }
            let code = u8::from(a == MaskValue::Ec) | (u8::from(b == MaskValue::Ec) << 1);
            match code {
                0 => counts.both_non_ec += 1,
                1 => counts.acmi_only += 1,
                2 => counts.bci_only += 1,
                _ => counts.both_ec += 1,
            }
            code
        })
        .collect();
    (codes, counts)
}

pub fn compare(args: &CompareArgs, file: &FileConfig, out: &mut Outputs) -> CliResult<()> {
    // one configuration for both methods so post-processing is identical
    let acmi_cfg = args.method.pipeline(file, Some(IndexArg::Acmi))?;
    let bci_cfg = PipelineConfig {
        index: IndexKind::Bci,
        ..acmi_cfg.clone()
    };
    let sampling = args.truth.given().then(|| args.truth.sampling(file));
    let mut loaded = load(&args.scene, &args.method, file)?;
    let acmi = run(&loaded, &acmi_cfg)?;
    let bci = run(&loaded, &bci_cfg)?;
    let geo = loaded.scene.geo().clone();
    let (w, h) = loaded.scene.dims();

    let dir = &args.out_dir;
    out.ensure_dir(dir)?;
    write_mask(&acmi.mask, out.claim(&dir.join("acmi_mask.tif"))?, &geo)?;
    write_mask(&bci.mask, out.claim(&dir.join("bci_mask.tif"))?, &geo)?;
    let (codes, agreement) = agreement(&acmi.mask, &bci.mask);
    write_bands(
        out.claim(&dir.join("agreement.tif"))?,
        w,
        h,
        &[codes.as_slice()],
        &geo,
        Some(f64::from(MASK_NODATA)),
    )?;

    let mut reports = Vec::new();
    if let Some(sampling) = &sampling {
        let truth_path = args
            .truth
            .truth
            .as_ref()
            .or(args.truth.truth_raster.as_ref())
            .expect("truth given");
        loaded.inputs.push(hash_file(truth_path)?);
        let samples = draw_samples(&args.truth, sampling, (w, h), &geo)?;
        reports.push(assess_mask("acmi", &acmi.mask, &samples)?);
        reports.push(assess_mask("bci", &bci.mask, &samples)?);
        out.write_text(&dir.join("report.csv"), &reports_csv(&reports))?;
        out.write_text(
            &dir.join("samples.csv"),
            &samples_csv(&samples, &[("acmi", &acmi.mask), ("bci", &bci.mask)]),
        )?;
    }
    let config = CompareConfig {
        scene: &loaded.config,
        acmi: &acmi_cfg,
        bci: &bci_cfg,
        sampling,
    };
    let summary = CompareSummary {
        provenance: Provenance::new("compare", config, loaded.inputs.clone()),
        acmi: MaskCounts::of(&acmi.mask),
        bci: MaskCounts::of(&bci.mask),
        agreement,
        reports,
    };
    out.write_json(&dir.join("report.json"), &summary)
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    /// Classified mask to assess (u8: 0 non-EC, 1 EC, 255 nodata)
    #[arg(long)]
    pub mask: PathBuf,
    #[command(flatten)]
    pub truth: TruthArgs,
    /// JSON report
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// CSV report
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// Per-sample CSV: col,row,truth,predicted
    #[arg(long)]
    pub samples_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct AssessSummary {
    #[serde(flatten)]
    provenance: Provenance<SamplingConfig>,
    report: MethodReport,
}

pub fn assess(args: &AssessArgs, file: &FileConfig, out: &mut Outputs) -> CliResult<()> {
    if !args.truth.given() {
        return Err(CliError::Config(
            "assess needs --truth or --truth-raster".into(),
        ));
    }
    if args.out_json.is_none() && args.out_csv.is_none() {
        return Err(CliError::Config(
            "assess needs --out-json and/or --out-csv".into(),
        ));
    }
    let sampling = args.truth.sampling(file);
    let truth_path = args
        .truth
        .truth
        .as_ref()
        .or(args.truth.truth_raster.as_ref())
        .expect("truth given");
    let inputs = vec![hash_file(&args.mask)?, hash_file(truth_path)?];
    let (mask, geo) = read_mask(&args.mask)?;
    let samples = draw_samples(&args.truth, &sampling, mask.dims(), &geo)?;
    let report = assess_mask("mask", &mask, &samples)?;
    log::info!("F1 {:.4}, OA {:.2}%", report.f1, report.oa);
    if let Some(p) = &args.out_csv {
        out.write_text(p, &reports_csv(std::slice::from_ref(&report)))?;
    }
    if let Some(p) = &args.samples_out {
        out.write_text(p, &samples_csv(&samples, &[("predicted", &mask)]))?;
    }
    if let Some(p) = &args.out_json {
        let summary = AssessSummary {
            provenance: Provenance::new("assess", sampling, inputs),
            report,
        };
        out.write_json(p, &summary)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// CSV rows: class,blue,green,red,nir,swir1,swir2 (a header row is optional)
    #[arg(long)]
    pub samples: PathBuf,
    /// Directory for percentiles.csv, jm.csv and stats.json
    #[arg(long)]
    pub out_dir: PathBuf,
}

const BAND_NAMES: [&str; 6] = ["blue", "green", "red", "nir", "swir1", "swir2"];

/// Groups rows by class in order of first appearance.
fn read_class_samples(path: &Path) -> CliResult<Vec<ClassSampleSet>> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if i == 0
            && record
                .get(0)
                .is_some_and(|c| c.eq_ignore_ascii_case("class"))
        {
            continue;
        }
        if record.len() != 7 {
            return Err(CliError::Data(format!(
                "{} line {}: expected 7 fields, found {}",
                path.display(),
                i + 1,
                record.len()
            )));
        }
        let spectrum = record
            .iter()
            .skip(1)
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        let class = record[0].to_string();
        if !groups.contains_key(&class) {
            order.push(class.clone());
        }
        groups.entry(class).or_default().push(spectrum);
    }
    if order.is_empty() {
        return Err(CliError::Data(format!("{}: no samples", path.display())));
    }
    Ok(order
        .into_iter()
        .map(|c| ClassSampleSet {
            spectra: groups.remove(&c).unwrap_or_default(),
            class_name: c,
        })
        .collect())
}

#[derive(Serialize)]
struct StatsReport<'a> {
    #[serde(flatten)]
    provenance: Provenance<StatsConfig>,
    bands: [&'static str; 6],
    classes: &'a [ClassStats],
    jm: &'a [Vec<Separability>],
}

#[derive(Serialize)]
struct StatsConfig {
    percentile_method: &'static str,
    covariance: &'static str,
}

pub fn stats(args: &StatsArgs, out: &mut Outputs) -> CliResult<()> {
    let inputs = vec![hash_file(&args.samples)?];
    let sets = read_class_samples(&args.samples)?;
    let stats = sets
        .iter()
        .map(class_stats)
        .collect::<Result<Vec<_>, _>>()?;
    let jm = jm_matrix(&stats)?;

    let mut pct = String::from("class,band,n,min,p25,p50,p75,max,mean\n");
    for s in &stats {
        for (b, name) in BAND_NAMES.iter().enumerate() {
            let q = &s.bands[b];
            pct.push_str(&format!(
                "{},{name},{},{},{},{},{},{},{}\n",
                s.class_name, s.n, q.min, q.p25, q.p50, q.p75, q.max, s.mean[b]
            ));
        }
    }
    let mut jm_csv = String::from("class");
    for s in &stats {
        jm_csv.push(',');
        jm_csv.push_str(&s.class_name);
    }
    jm_csv.push('\n');
    for (s, row) in stats.iter().zip(&jm) {
        jm_csv.push_str(&s.class_name);
        for v in row {
            jm_csv.push_str(&format!(",{:.6}", v.jm));
        }
        jm_csv.push('\n');
    }
    for (i, row) in jm.iter().enumerate() {
        for (j, v) in row.iter().enumerate().skip(i + 1) {
            if v.regularized.0 || v.regularized.1 {
                log::warn!(
                    "{} / {}: covariance regularized",
                    stats[i].class_name,
                    stats[j].class_name
                );
            }
        }
    }

    let dir = &args.out_dir;
    out.ensure_dir(dir)?;
    out.write_text(&dir.join("percentiles.csv"), &pct)?;
    out.write_text(&dir.join("jm.csv"), &jm_csv)?;
    let config = StatsConfig {
        percentile_method: "linear interpolation between order statistics (type 7)",
        covariance: "unbiased (n - 1)",
    };
    let report = StatsReport {
        provenance: Provenance::new("stats", config, inputs),
        bands: BAND_NAMES,
        classes: &stats,
        jm: &jm,
    };
    out.write_json(&dir.join("stats.json"), &report)
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Layout JSON: width, height, regions, optional rng_seed and spectra
    #[arg(long)]
    pub layout: PathBuf,
    /// Overrides the layout's rng_seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scene raster (7-band u16 DN, OLI band order)
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    /// Ground-truth mask raster
    #[arg(long)]
    pub truth: PathBuf,
}

pub fn synth(args: &SynthArgs, file: &FileConfig, out: &mut Outputs) -> CliResult<()> {
    let text = fs::read_to_string(&args.layout).map_err(|e| CliError::io(&args.layout, e))?;
    let mut doc: LayoutDocument = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.layout.display())))?;
    if let Some(seed) = args.seed.or(file.seed) {
        doc.layout.rng_seed = seed;
    }
    let (scene, truth) = generate_scene(&doc.layout, &doc.resolved_spectra())?;
    let scale = file.scale_offset.unwrap_or_default();
    write_scene_dn(&scene, out.claim(&args.out)?, &scale)?;
    write_mask(&truth, out.claim(&args.truth)?, scene.geo())?;
    log::info!(
        "{}x{} scene, {} EC pixels, seed {}",
        doc.layout.width,
        doc.layout.height,
        truth.count(MaskValue::Ec),
        doc.layout.rng_seed
    );
    Ok(())
}
