//! Minimal GeoTIFF reader/writer on top of the pure-Rust `tiff` crate.
//!
//! Supports strip/tile layouts of any integer or float sample type, chunky or planar
//! multiband stacks, the affine georeferencing tags and the GDAL nodata tag.

use std::fs::File;
use std::io::{BufReader, BufWriter, Seek, Write};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::encoder::colortype::ColorType;
use tiff::encoder::{TiffEncoder, TiffValue};
use tiff::tags::{PhotometricInterpretation, PlanarConfiguration, SampleFormat, Tag};

use crate::{Error, Result};

const GT_MODEL_TYPE_GEO_KEY: u16 = 1024;
const GT_RASTER_TYPE_GEO_KEY: u16 = 1025;
const GEOGRAPHIC_TYPE_GEO_KEY: u16 = 2048;
const PROJECTED_CS_TYPE_GEO_KEY: u16 = 3072;
const MODEL_TYPE_PROJECTED: u16 = 1;
const MODEL_TYPE_GEOGRAPHIC: u16 = 2;
const RASTER_PIXEL_IS_AREA: u16 = 1;

/// Georeferencing carried alongside a raster.
///
/// `geo_transform` uses the GDAL ordering
/// `[origin_x, pixel_width, row_rotation, origin_y, col_rotation, pixel_height]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeoInfo {
    pub geo_transform: Option<[f64; 6]>,
    pub crs_id: Option<String>,
}

/// A decoded raster: one row-major `f64` plane per band.
#[derive(Debug, Clone)]
pub struct RasterData {
    pub width: usize,
    pub height: usize,
    pub bands: Vec<Vec<f64>>,
    pub geo: GeoInfo,
    pub nodata: Option<f64>,
}

fn to_f64(result: DecodingResult) -> Vec<f64> {
    match result {
        DecodingResult::U8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U64(v) => v.into_iter().map(|x| x as f64).collect(),
        DecodingResult::F16(v) => v.into_iter().map(|x| x.to_f64()).collect(),
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F64(v) => v,
        DecodingResult::I8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I64(v) => v.into_iter().map(|x| x as f64).collect(),
    }
}

fn geokeys_to_crs(keys: &[u16]) -> Option<String> {
    if keys.len() < 4 {
        return None;
    }
    let count = keys[3] as usize;
    keys[4..]
        .chunks_exact(4)
        .take(count)
        .find(|k| {
            (k[0] == PROJECTED_CS_TYPE_GEO_KEY || k[0] == GEOGRAPHIC_TYPE_GEO_KEY)
                && k[1] == 0
                && k[3] != 0
                && k[3] != 32767
        })
        .map(|k| format!("EPSG:{}", k[3]))
}

fn read_geo<R: std::io::Read + Seek>(decoder: &mut Decoder<R>) -> Result<GeoInfo> {
    let tiff_err = |e| Error::UnsupportedRaster(format!("bad georeferencing tag: {e}"));
    let transform = decoder
        .find_tag(Tag::ModelTransformationTag)
        .map_err(tiff_err)?
        .map(|v| v.into_f64_vec())
        .transpose()
        .map_err(tiff_err)?;
    let scale = decoder
        .find_tag(Tag::ModelPixelScaleTag)
        .map_err(tiff_err)?
        .map(|v| v.into_f64_vec())
        .transpose()
        .map_err(tiff_err)?;
    let tie = decoder
        .find_tag(Tag::ModelTiepointTag)
        .map_err(tiff_err)?
        .map(|v| v.into_f64_vec())
        .transpose()
        .map_err(tiff_err)?;

    let geo_transform = match (transform, scale, tie) {
        (Some(m), _, _) if m.len() >= 8 => Some([m[3], m[0], m[1], m[7], m[4], m[5]]),
        (_, Some(s), Some(t)) if s.len() >= 2 && t.len() >= 6 => Some([
            t[3] - t[0] * s[0],
            s[0],
            0.0,
            t[4] + t[1] * s[1],
            0.0,
            -s[1],
        ]),
        _ => None,
    };
    let crs_id = decoder
        .find_tag(Tag::GeoKeyDirectoryTag)
        .map_err(tiff_err)?
        .map(|v| v.into_u16_vec())
        .transpose()
        .map_err(tiff_err)?
        .and_then(|keys| geokeys_to_crs(&keys));
    Ok(GeoInfo {
        geo_transform,
        crs_id,
    })
}

/// Reads every band of a (Geo)TIFF into `f64` planes.
pub fn read_raster(path: impl AsRef<Path>) -> Result<RasterData> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = Decoder::new(BufReader::new(file))
        .map_err(|e| Error::tiff(path, e))?
        .with_limits(Limits::unlimited());
    let (w, h) = decoder.dimensions().map_err(|e| Error::tiff(path, e))?;
    let (width, height) = (w as usize, h as usize);
    let samples = match decoder.colortype().map_err(|e| Error::tiff(path, e))? {
        tiff::ColorType::Gray(_) => 1,
        tiff::ColorType::Multiband { num_samples, .. } => num_samples as usize,
        other => {
            return Err(Error::UnsupportedRaster(format!(
                "{}: photometric color type {other:?} is not a band stack",
                path.display()
            )))
        }
    };
    let planar = decoder
        .find_tag_unsigned::<u16>(Tag::PlanarConfiguration)
        .map_err(|e| Error::tiff(path, e))?
        .and_then(PlanarConfiguration::from_u16)
        .unwrap_or(PlanarConfiguration::Chunky);

    let geo = read_geo(&mut decoder)?;
    let nodata = decoder
        .find_tag(Tag::GdalNodata)
        .ok()
        .flatten()
        .and_then(|v| v.into_string().ok())
        .and_then(|s| s.trim().trim_end_matches('\0').parse::<f64>().ok());

    let mut buf = DecodingResult::U8(Vec::new());
    let layout = decoder
        .read_image_to_buffer(&mut buf)
        .map_err(|e| Error::tiff(path, e))?;
    if buf.as_buffer(0).as_bytes().len() < layout.complete_len {
        return Err(Error::UnsupportedRaster(format!(
            "{}: image planes do not fit in memory limits",
            path.display()
        )));
    }
    let flat = to_f64(buf);
    let n = width * height;
    if flat.len() < n * samples {
        return Err(Error::UnsupportedRaster(format!(
            "{}: decoded {} samples, expected {}",
            path.display(),
            flat.len(),
            n * samples
        )));
    }
    let bands = match (samples, planar) {
        (1, _) => vec![flat[..n].to_vec()],
        (_, PlanarConfiguration::Planar) => flat
            .chunks_exact(n)
            .take(samples)
            .map(<[f64]>::to_vec)
            .collect(),
        _ => (0..samples)
            .map(|b| {
                flat.iter()
                    .skip(b)
                    .step_by(samples)
                    .take(n)
                    .copied()
                    .collect()
            })
            .collect(),
    };
    Ok(RasterData {
        width,
        height,
        bands,
        geo,
        nodata,
    })
}

/// Chunky band stack of `N` samples per pixel.
struct BandStack<T, const N: usize>(std::marker::PhantomData<T>);

macro_rules! band_stack {
    ($inner:ty, $bits:expr, $fmt:expr) => {
        impl<const N: usize> ColorType for BandStack<$inner, N> {
            type Inner = $inner;
            const TIFF_VALUE: PhotometricInterpretation = PhotometricInterpretation::BlackIsZero;
            const BITS_PER_SAMPLE: &'static [u16] = &[$bits; N];
            const SAMPLE_FORMAT: &'static [SampleFormat] = &[$fmt; N];

            fn horizontal_predict(row: &[Self::Inner], result: &mut Vec<Self::Inner>) {
                result.extend_from_slice(row);
            }
        }
    };
}

band_stack!(u8, 8, SampleFormat::Uint);
band_stack!(u16, 16, SampleFormat::Uint);
band_stack!(f32, 32, SampleFormat::IEEEFP);

/// Sample types this module can write.
pub trait Sample: Copy + Send + Sync + 'static {
    #[doc(hidden)]
    fn write_stack<W: Write + Seek>(
        enc: &mut TiffEncoder<W>,
        width: u32,
        height: u32,
        bands: usize,
        interleaved: &[Self],
        geo: &GeoInfo,
        nodata: Option<f64>,
    ) -> tiff::TiffResult<()>;
}

macro_rules! dispatch_bands {
    ($t:ty, $enc:expr, $w:expr, $h:expr, $n:expr, $data:expr, $geo:expr, $nd:expr; $($k:literal)*) => {
        match $n {
            $($k => write_image::<BandStack<$t, $k>, W>($enc, $w, $h, $data, $geo, $nd),)*
            other => Err(tiff::TiffError::UnsupportedError(
                tiff::TiffUnsupportedError::UnsupportedSampleDepth(other.min(255) as u8),
            )),
        }
    };
}

macro_rules! impl_sample {
    ($t:ty) => {
        impl Sample for $t {
            fn write_stack<W: Write + Seek>(
                enc: &mut TiffEncoder<W>,
                width: u32,
                height: u32,
                bands: usize,
                interleaved: &[Self],
                geo: &GeoInfo,
                nodata: Option<f64>,
            ) -> tiff::TiffResult<()> {
                dispatch_bands!($t, enc, width, height, bands, interleaved, geo, nodata;
                    1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16)
            }
        }
    };
}

impl_sample!(u8);
impl_sample!(u16);
impl_sample!(f32);

fn write_image<C: ColorType, W: Write + Seek>(
    enc: &mut TiffEncoder<W>,
    width: u32,
    height: u32,
    data: &[C::Inner],
    geo: &GeoInfo,
    nodata: Option<f64>,
) -> tiff::TiffResult<()>
where
    [C::Inner]: TiffValue,
{
    let mut image = enc.new_image::<C>(width, height)?;
    if C::BITS_PER_SAMPLE.len() > 1 {
        image.encoder().write_tag(
            Tag::PlanarConfiguration,
            PlanarConfiguration::Chunky.to_u16(),
        )?;
    }
    if let Some(gt) = geo.geo_transform {
        if gt[2] == 0.0 && gt[4] == 0.0 {
            let scale = [gt[1], -gt[5], 0.0];
            let tie = [0.0, 0.0, 0.0, gt[0], gt[3], 0.0];
            image
                .encoder()
                .write_tag(Tag::ModelPixelScaleTag, &scale[..])?;
            image.encoder().write_tag(Tag::ModelTiepointTag, &tie[..])?;
        } else {
            let m = [
                gt[1], gt[2], 0.0, gt[0], //
                gt[4], gt[5], 0.0, gt[3], //
                0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ];
            image
                .encoder()
                .write_tag(Tag::ModelTransformationTag, &m[..])?;
        }
    }
    if geo.geo_transform.is_some() || geo.crs_id.is_some() {
        let keys = geokey_directory(geo.crs_id.as_deref());
        image
            .encoder()
            .write_tag(Tag::GeoKeyDirectoryTag, &keys[..])?;
    }
    if let Some(nd) = nodata {
        image
            .encoder()
            .write_tag(Tag::GdalNodata, format!("{nd}").as_str())?;
    }
    image.write_data(data)
}

fn parse_epsg(crs: &str) -> Option<u16> {
    let code = crs.trim();
    let code = code
        .strip_prefix("EPSG:")
        .or_else(|| code.strip_prefix("epsg:"))
        .unwrap_or(code);
    code.parse().ok()
}

fn geokey_directory(crs: Option<&str>) -> Vec<u16> {
    let mut keys = vec![(GT_RASTER_TYPE_GEO_KEY, RASTER_PIXEL_IS_AREA)];
    if let Some(code) = crs.and_then(parse_epsg) {
        if (4000..5000).contains(&code) {
            keys.push((GT_MODEL_TYPE_GEO_KEY, MODEL_TYPE_GEOGRAPHIC));
            keys.push((GEOGRAPHIC_TYPE_GEO_KEY, code));
        } else {
            keys.push((GT_MODEL_TYPE_GEO_KEY, MODEL_TYPE_PROJECTED));
            keys.push((PROJECTED_CS_TYPE_GEO_KEY, code));
        }
    }
    keys.sort_by_key(|k| k.0);
    let mut dir = vec![1, 1, 0, keys.len() as u16];
    for (id, value) in keys {
        dir.extend_from_slice(&[id, 0, 1, value]);
    }
    dir
}

/// Writes one or more equally sized row-major planes as a chunky GeoTIFF.
pub fn write_bands<T: Sample>(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    bands: &[&[T]],
    geo: &GeoInfo,
    nodata: Option<f64>,
) -> Result<()> {
    let path = path.as_ref();
    let n = width * height;
    if bands.is_empty() {
        return Err(Error::InvalidConfig("no bands to write".into()));
    }
    if let Some(bad) = bands.iter().find(|b| b.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: (width, height),
            found: (bad.len(), 1),
        });
    }
    let interleaved: Vec<T> = if bands.len() == 1 {
        bands[0].to_vec()
    } else {
        (0..n)
            .flat_map(|i| bands.iter().map(move |b| b[i]))
            .collect()
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| Error::tiff(path, e))?;
    T::write_stack(
        &mut enc,
        width as u32,
        height as u32,
        bands.len(),
        &interleaved,
        geo,
        nodata,
    )
    .map_err(|e| Error::tiff(path, e))
}
