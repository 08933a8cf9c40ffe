//! File formats: PNG/JPEG images, annotation JSON, curve and calibration
//! JSON, and CSV report dumps.
//!
//! Annotation files map image id to an ordered list of
//! `{"patch_id": n, "rect": [x, y, w, h]}` objects. Curves serialise as
//! `{"name": ..., "samples": [...]}`; calibration files add the method,
//! provenance, score, and the root seed that produced them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibrate::{CalibrationMethod, CalibrationResult, Provenance};
use crate::curve::ResponseCurve;
use crate::error::{Error, Result};
use crate::handshake::HandshakeReport;
use crate::image_buf::{ImageBuffer, PatchAnnotation, Rect};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn json_err(path: &Path, source: serde_json::Error) -> Error {
    Error::Json {
        path: path.display().to_string(),
        source,
    }
}

/// Decode an 8-bit PNG or JPEG into a floating-point buffer (v/255).
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.display().to_string(),
            source,
        })?
        .to_rgb8();
    let (width, height) = (img.width() as usize, img.height() as usize);
    let pixels = img
        .pixels()
        .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
        .collect();
    ImageBuffer::new(width, height, pixels)
}

/// Encode to 8-bit PNG, rounding each channel to the nearest level.
pub fn save_image_png(path: &Path, image: &ImageBuffer) -> Result<()> {
    let mut out = image::RgbImage::new(image.width() as u32, image.height() as u32);
    for (dst, src) in out.pixels_mut().zip(image.pixels()) {
        *dst = image::Rgb(src.map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    out.save(path).map_err(|source| Error::Image {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationEntry {
    patch_id: usize,
    rect: [usize; 4],
}

/// Read an annotation file: image id -> ordered patch list.
pub fn read_annotations(path: &Path) -> Result<BTreeMap<String, Vec<PatchAnnotation>>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let raw: BTreeMap<String, Vec<AnnotationEntry>> =
        serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    let mut out = BTreeMap::new();
    for (image_id, entries) in raw {
        let mut seen = std::collections::BTreeSet::new();
        let mut anns = Vec::with_capacity(entries.len());
        for e in entries {
            if !seen.insert(e.patch_id) {
                return Err(Error::Annotation(format!(
                    "duplicate patch id {} in image '{image_id}'",
                    e.patch_id
                )));
            }
            anns.push(PatchAnnotation {
                image_id: image_id.clone(),
                patch_id: e.patch_id,
                region: Rect::new(e.rect[0], e.rect[1], e.rect[2], e.rect[3]),
            });
        }
        out.insert(image_id, anns);
    }
    Ok(out)
}

pub fn write_annotations(
    path: &Path,
    annotations: &BTreeMap<String, Vec<PatchAnnotation>>,
) -> Result<()> {
    let raw: BTreeMap<&String, Vec<AnnotationEntry>> = annotations
        .iter()
        .map(|(id, anns)| {
            let entries = anns
                .iter()
                .map(|a| AnnotationEntry {
                    patch_id: a.patch_id,
                    rect: [a.region.x, a.region.y, a.region.width, a.region.height],
                })
                .collect();
            (id, entries)
        })
        .collect();
    let text = serde_json::to_string_pretty(&raw).map_err(|e| json_err(path, e))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_curve_json(path: &Path, curve: &ResponseCurve) -> Result<()> {
    let text = serde_json::to_string_pretty(curve).map_err(|e| json_err(path, e))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_curve_json(path: &Path) -> Result<ResponseCurve> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| json_err(path, e))
}

/// On-disk calibration record.
#[derive(Debug, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub seed: u64,
    pub method: CalibrationMethod,
    pub provenance: Provenance,
    pub score: f64,
    pub icrf: ResponseCurve,
}

pub fn write_calibration(path: &Path, result: &CalibrationResult, seed: u64) -> Result<()> {
    let file = CalibrationFile {
        seed,
        method: result.method,
        provenance: result.provenance.clone(),
        score: result.score,
        icrf: result.icrf.clone(),
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| json_err(path, e))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_calibration(path: &Path) -> Result<CalibrationFile> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| json_err(path, e))
}

/// Read a curve from either a bare curve file or a calibration file.
pub fn read_icrf(path: &Path) -> Result<ResponseCurve> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    if let Ok(file) = serde_json::from_str::<CalibrationFile>(&text) {
        return Ok(file.icrf);
    }
    serde_json::from_str(&text).map_err(|e| json_err(path, e))
}

/// CSV dump of a mean distance curve: `column,dbar` rows.
pub fn write_dbar_csv(path: &Path, dbar: &[f64]) -> Result<()> {
    let mut text = String::from("column,dbar\n");
    for (i, v) in dbar.iter().enumerate() {
        text.push_str(&format!("{i},{v}\n"));
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// CSV dump of the pairwise heatmap matrix with camera ids as headers.
pub fn write_heatmap_csv(path: &Path, report: &HandshakeReport) -> Result<()> {
    let mut text = String::from("source\\target");
    for id in &report.camera_ids {
        text.push(',');
        text.push_str(id);
    }
    text.push('\n');
    for (u, id) in report.camera_ids.iter().enumerate() {
        text.push_str(id);
        for v in 0..report.camera_ids.len() {
            text.push(',');
            match report.pairwise_medians[u][v] {
                Some(value) => text.push_str(&format!("{value}")),
                None => text.push_str(""),
            }
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// JSON summary of a handshake run.
#[derive(Debug, Serialize, Deserialize)]
pub struct HandshakeSummary {
    pub seed: u64,
    pub metric: String,
    pub median: f64,
    pub count: usize,
    pub single_counts: Vec<usize>,
    pub cross_count: usize,
}

pub fn write_handshake_summary(path: &Path, report: &HandshakeReport, seed: u64) -> Result<()> {
    let summary = HandshakeSummary {
        seed,
        metric: format!("{:?}", report.metric).to_ascii_lowercase(),
        median: report.median,
        count: report.count,
        single_counts: report.single_counts.clone(),
        cross_count: report.cross_count,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| json_err(path, e))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn png_round_trip_is_within_quantisation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = ImageBuffer::new(
            2,
            2,
            vec![
                [0.1, 0.2, 0.3],
                [0.4, 0.5, 0.6],
                [0.7, 0.8, 0.9],
                [0.0, 1.0, 0.5],
            ],
        )
        .unwrap();
        save_image_png(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            for ch in 0..3 {
                assert!((a[ch] - b[ch]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn annotations_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("anns.json");
        let mut map = BTreeMap::new();
        map.insert(
            "img_000".to_string(),
            vec![
                PatchAnnotation {
                    image_id: "img_000".into(),
                    patch_id: 0,
                    region: Rect::new(4, 4, 16, 16),
                },
                PatchAnnotation {
                    image_id: "img_000".into(),
                    patch_id: 1,
                    region: Rect::new(24, 4, 16, 16),
                },
            ],
        );
        write_annotations(&path, &map).unwrap();
        let back = read_annotations(&path).unwrap();
        assert_eq!(map, back);
    }

    #[test]
    fn duplicate_patch_ids_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"img": [{"patch_id": 0, "rect": [0,0,4,4]}, {"patch_id": 0, "rect": [8,0,4,4]}]}"#,
        )
        .unwrap();
        assert!(matches!(
            read_annotations(&path),
            Err(Error::Annotation(_))
        ));
    }

    #[test]
    fn curve_json_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("curve.json");
        let curve = ResponseCurve::from_fn("g", 128, |t| t.powf(1.0 / 2.4)).unwrap();
        write_curve_json(&path, &curve).unwrap();
        let back = read_curve_json(&path).unwrap();
        assert_eq!(curve, back);
    }

    #[test]
    fn missing_file_is_io_error_with_path() {
        let err = read_curve_json(Path::new("/nonexistent/nope.json")).unwrap_err();
        match err {
            Error::Io { path, .. } => assert!(path.contains("nope.json")),
            other => panic!("unexpected {other}"),
        }
    }
}
