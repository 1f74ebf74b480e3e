//! Line-delimited record files, weight files and netpbm images.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::evaluation::{FrameBox, GroundTruthTrack, OutputTrack};
use crate::features::{extract_appearance, Appearance, RegionPixels};
use crate::model::{BBox2D, DetectedObject, FeatureId, FeatureWeights, WorldPoint3};
use crate::tracking::Trajectory;

/// One detection line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub frame: u32,
    pub bbox: BBox2D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldPoint3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Appearance>,
    /// Frame image (PPM), relative to the detection file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_image: Option<String>,
    /// Foreground mask (PGM) for the same frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_image: Option<String>,
}

/// One ground-truth line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub gt_id: u64,
    pub frame: u32,
    pub bbox: BBox2D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldPoint3>,
}

/// One output track line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub track_id: u64,
    pub frame: u32,
    pub bbox: BBox2D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldPoint3>,
    #[serde(default)]
    pub interpolated: bool,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads detections sorted by frame (stable). The second value lists
/// warnings, such as input that was not already in frame order.
pub fn parse_detections_with_warnings(
    path: impl AsRef<Path>,
) -> Result<(Vec<DetectionRecord>, Vec<String>)> {
    let path = path.as_ref();
    let mut recs: Vec<DetectionRecord> = parse_lines(path)?;
    let mut warnings = Vec::new();
    if recs.windows(2).any(|w| w[0].frame > w[1].frame) {
        warnings.push(format!(
            "{}: records not in frame order; sorted",
            path.display()
        ));
        recs.sort_by_key(|r| r.frame);
    }
    Ok((recs, warnings))
}

pub fn parse_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    parse_detections_with_warnings(path).map(|r| r.0)
}

pub fn write_detections(records: &[DetectionRecord], path: impl AsRef<Path>) -> Result<()> {
    write_lines(path.as_ref(), records)
}

pub fn parse_ground_truth_records(path: impl AsRef<Path>) -> Result<Vec<GroundTruthRecord>> {
    parse_lines(path.as_ref())
}

pub fn write_ground_truth(records: &[GroundTruthRecord], path: impl AsRef<Path>) -> Result<()> {
    write_lines(path.as_ref(), records)
}

/// Reads ground truth and groups it into tracks ordered by id.
pub fn parse_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthTrack>> {
    let path = path.as_ref();
    let recs = parse_ground_truth_records(path)?;
    ground_truth_tracks(&recs).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn ground_truth_tracks(recs: &[GroundTruthRecord]) -> Result<Vec<GroundTruthTrack>> {
    let mut by_id: BTreeMap<u64, Vec<FrameBox>> = BTreeMap::new();
    for r in recs {
        by_id.entry(r.gt_id).or_default().push(FrameBox {
            frame: r.frame,
            bbox: r.bbox,
            world: r.world,
        });
    }
    by_id
        .into_iter()
        .map(|(id, mut boxes)| {
            boxes.sort_by_key(|b| b.frame);
            GroundTruthTrack::new(id, boxes)
        })
        .collect()
}

/// Per-frame records of the trajectories, ordered by (track_id, frame).
pub fn trajectory_records(tracks: &[Trajectory]) -> Vec<TrackRecord> {
    let mut out: Vec<TrackRecord> = tracks
        .iter()
        .flat_map(|t| {
            t.per_frame_boxes().into_iter().map(move |b| TrackRecord {
                track_id: t.track_id(),
                frame: b.frame,
                bbox: b.bbox,
                world: b.world,
                interpolated: b.interpolated,
            })
        })
        .collect();
    out.sort_by_key(|r| (r.track_id, r.frame));
    out
}

pub fn write_trajectories(tracks: &[Trajectory], path: impl AsRef<Path>) -> Result<()> {
    write_track_records(&trajectory_records(tracks), path)
}

pub fn write_track_records(records: &[TrackRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.track_id, r.frame));
    write_lines(path.as_ref(), &sorted)
}

pub fn parse_track_records(path: impl AsRef<Path>) -> Result<Vec<TrackRecord>> {
    parse_lines(path.as_ref())
}

pub fn output_tracks(recs: &[TrackRecord]) -> Result<Vec<OutputTrack>> {
    let mut by_id: BTreeMap<u64, Vec<FrameBox>> = BTreeMap::new();
    for r in recs {
        by_id.entry(r.track_id).or_default().push(FrameBox {
            frame: r.frame,
            bbox: r.bbox,
            world: r.world,
        });
    }
    by_id
        .into_iter()
        .map(|(id, mut boxes)| {
            boxes.sort_by_key(|b| b.frame);
            OutputTrack::new(id, boxes)
        })
        .collect()
}

/// Reads a track file into evaluation tracks.
pub fn parse_tracks(path: impl AsRef<Path>) -> Result<Vec<OutputTrack>> {
    let path = path.as_ref();
    output_tracks(&parse_track_records(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Weights as `name = value` lines, one per feature.
pub fn weights_to_string(w: &FeatureWeights) -> String {
    let mut s = String::new();
    for k in FeatureId::ALL {
        writeln!(s, "{} = {:?}", k.name(), w.get(k)).unwrap();
    }
    s
}

pub fn weights_from_str(text: &str) -> std::result::Result<FeatureWeights, String> {
    let table: BTreeMap<String, f64> = toml::from_str(text).map_err(|e| e.to_string())?;
    let mut pairs = Vec::new();
    for (name, v) in table {
        let k: FeatureId = name
            .parse()
            .map_err(|_| format!("unknown feature `{name}`"))?;
        pairs.push((k, v));
    }
    FeatureWeights::from_pairs(&pairs).map_err(|e| e.to_string())
}

pub fn write_weights(w: &FeatureWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, weights_to_string(w)).map_err(|e| Error::io(path, e))
}

pub fn parse_weights(path: impl AsRef<Path>) -> Result<FeatureWeights> {
    let path = path.as_ref();
    weights_from_str(&read_text(path)?).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

/// An 8-bit RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

/// An 8-bit single-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn image_err(path: &Path, e: image::ImageError) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn open_pnm(path: &Path) -> Result<image::DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
        .map_err(|e| image_err(path, e))
}

fn save_pnm(
    path: &Path,
    data: &[u8],
    w: usize,
    h: usize,
    color: ExtendedColorType,
    sub: PnmSubtype,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    PnmEncoder::new(&mut out)
        .with_subtype(sub)
        .write_image(data, w as u32, h as u32, color)
        .map_err(|e| image_err(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = open_pnm(path)?.to_rgb8();
    Ok(RgbImage {
        width: img.width() as usize,
        height: img.height() as usize,
        pixels: img.pixels().map(|p| p.0).collect(),
    })
}

pub fn write_ppm(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u8> = img.pixels.iter().flatten().copied().collect();
    save_pnm(
        path.as_ref(),
        &data,
        img.width,
        img.height,
        ExtendedColorType::Rgb8,
        PnmSubtype::Pixmap(SampleEncoding::Binary),
    )
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = open_pnm(path)?.to_luma8();
    Ok(GrayImage {
        width: img.width() as usize,
        height: img.height() as usize,
        pixels: img.into_raw(),
    })
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    save_pnm(
        path.as_ref(),
        &img.pixels,
        img.width,
        img.height,
        ExtendedColorType::L8,
        PnmSubtype::Graymap(SampleEncoding::Binary),
    )
}

/// Cuts the pixels under `bbox` out of a frame; mask values above 127 are
/// foreground, and without a mask every pixel is.
pub fn crop_region(
    frame: &RgbImage,
    mask: Option<&GrayImage>,
    bbox: &BBox2D,
) -> Result<RegionPixels> {
    let x0 = bbox.x().floor().max(0.0) as usize;
    let y0 = bbox.y().floor().max(0.0) as usize;
    let x1 = ((bbox.x() + bbox.w()).ceil().max(0.0) as usize).min(frame.width);
    let y1 = ((bbox.y() + bbox.h()).ceil().max(0.0) as usize).min(frame.height);
    if x1 <= x0 || y1 <= y0 {
        return Err(Error::InvalidRegion("box lies outside the frame".into()));
    }
    if let Some(m) = mask {
        if (m.width, m.height) != (frame.width, frame.height) {
            return Err(Error::InvalidRegion("mask and frame sizes differ".into()));
        }
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let mut rgb = Vec::with_capacity(w * h);
    let mut fg = Vec::with_capacity(w * h);
    for y in y0..y1 {
        for x in x0..x1 {
            let i = y * frame.width + x;
            rgb.push(frame.pixels[i]);
            fg.push(mask.is_none_or(|m| m.pixels[i] > 127));
        }
    }
    Ok(RegionPixels::new(w, h, rgb, fg)?.with_origin(x0 as f64, y0 as f64))
}

/// Turns records into detected objects, numbering detections within each
/// frame in file order. Appearance comes from the `features` payload when
/// present, otherwise from the referenced images, resolved against `base`.
pub fn load_objects(
    records: &[DetectionRecord],
    base: &Path,
    cfg: &TrackerConfig,
) -> Result<Vec<DetectedObject>> {
    let mut out = Vec::with_capacity(records.len());
    let mut next_index: BTreeMap<u32, u32> = BTreeMap::new();
    let mut frame_cache: Option<(PathBuf, RgbImage)> = None;
    let mut mask_cache: Option<(PathBuf, GrayImage)> = None;
    for r in records {
        let idx = next_index.entry(r.frame).or_default();
        let mut o = DetectedObject::new(r.frame, *idx, r.bbox);
        *idx += 1;
        if let Some(w) = r.world {
            o = o.with_world(w);
        }
        if let Some(a) = &r.features {
            o = o.with_appearance(a.clone());
        } else if let Some(img) = &r.frame_image {
            let fp = base.join(img);
            if frame_cache.as_ref().is_none_or(|(p, _)| *p != fp) {
                frame_cache = Some((fp.clone(), read_ppm(&fp)?));
            }
            let mask = match &r.mask_image {
                Some(m) => {
                    let mp = base.join(m);
                    if mask_cache.as_ref().is_none_or(|(p, _)| *p != mp) {
                        mask_cache = Some((mp.clone(), read_pgm(&mp)?));
                    }
                    mask_cache.as_ref().map(|c| &c.1)
                }
                None => None,
            };
            let frame = &frame_cache.as_ref().expect("cached frame").1;
            let region = crop_region(frame, mask, &r.bbox).map_err(|e| Error::Format {
                path: fp.clone(),
                message: format!("frame {}: {e}", r.frame),
            })?;
            o = o.with_appearance(extract_appearance(&region, cfg));
        }
        out.push(o);
    }
    Ok(out)
}

/// Groups detected objects by frame, for learning.
pub fn objects_by_frame(objects: &[DetectedObject]) -> Vec<Vec<DetectedObject>> {
    let mut by: BTreeMap<u32, Vec<DetectedObject>> = BTreeMap::new();
    for o in objects {
        by.entry(o.frame()).or_default().push(o.clone());
    }
    by.into_values().collect()
}
