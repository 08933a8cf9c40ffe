//! All-pairs "handshake" evaluation of colour alignment quality.
//!
//! Items are images represented by their extracted patch samples, grouped by
//! camera. Within one camera every unordered image pair is compared once
//! (N images give N(N-1)/2 comparisons). Across cameras, each unordered
//! camera pair {u, v} with u < v contributes one comparison per unordered
//! image-index pair (i, j) with i < j, directed from (u, i) to (v, j); with
//! m images per camera and c cameras the pooled cross-camera vector has
//! m(m-1)/2 * c(c-1)/2 entries. The heatmap keeps both directions per camera
//! pair (alignment from A to B generally differs from B to A), while the
//! pooled vector and its median follow the single-direction enumeration.
//!
//! Before measuring, the source item is aligned to the target through the
//! configured pipeline: per-camera response linearisation, then a linear
//! match fitted on a patch subset and applied to all patches.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::ResponseCurve;
use crate::error::{Error, Result};
use crate::image_buf::{ColorPatchSample, Rgb};
use crate::matching::{fit_linear_match, modify_sample, LineariseMode};
use crate::metrics::{delta_e2000, rae_mean, rmse, Metric};

/// One camera's items: per-image patch sample lists plus the calibrated
/// inverse response curve (absent means no linearisation).
#[derive(Debug, Clone)]
pub struct CameraGroup {
    pub camera_id: String,
    pub images: Vec<Vec<ColorPatchSample>>,
    pub icrf: Option<ResponseCurve>,
}

/// Alignment applied to the source of each comparison.
#[derive(Debug, Clone, Default)]
pub struct AlignmentPipeline {
    /// Patch indices used to fit the match; `None` fits on all patches.
    pub match_indices: Option<Vec<usize>>,
    /// Disable to measure the raw (unaligned) baseline.
    pub enable_matching: bool,
    pub linearise_mode: LineariseMode,
}

impl AlignmentPipeline {
    /// Full alignment fitting the match on all patches.
    pub fn full() -> Self {
        AlignmentPipeline {
            match_indices: None,
            enable_matching: true,
            linearise_mode: LineariseMode::PerChannel,
        }
    }

    /// No linearisation (curves are ignored), no matching.
    pub fn raw() -> Self {
        AlignmentPipeline::default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandshakeReport {
    pub metric: Metric,
    pub camera_ids: Vec<String>,
    /// c x c matrix of per-cell medians; `None` where a cell has no
    /// comparisons. Diagonal cells hold single-camera results; cell (u, v)
    /// holds comparisons directed from camera u to camera v.
    pub pairwise_medians: Vec<Vec<Option<f64>>>,
    /// Pooled result vector: single-camera comparisons when one camera is
    /// evaluated, the cross-camera enumeration otherwise.
    pub pooled: Vec<f64>,
    /// Single-camera comparison count per camera: N(N-1)/2 each.
    pub single_counts: Vec<usize>,
    /// Cross-camera pooled comparison count: m(m-1)/2 * c(c-1)/2.
    pub cross_count: usize,
    /// Median of the pooled vector.
    pub median: f64,
    /// Length of the pooled vector.
    pub count: usize,
}

/// Median of a non-empty slice: middle element for odd lengths, the mean of
/// the two middle elements for even lengths.
pub fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn linearise_samples(
    samples: &[ColorPatchSample],
    icrf: Option<&ResponseCurve>,
    mode: LineariseMode,
) -> Vec<ColorPatchSample> {
    match icrf {
        None => samples.to_vec(),
        Some(curve) => samples
            .iter()
            .map(|s| {
                let rgb: Rgb = match mode {
                    LineariseMode::PerChannel => s.rgb.map(|c| curve.eval_clamped(c)),
                    LineariseMode::PerIntensity => {
                        let mean = (s.rgb[0] + s.rgb[1] + s.rgb[2]) / 3.0;
                        if mean <= 0.0 {
                            s.rgb
                        } else {
                            let gain = curve.eval_clamped(mean) / mean;
                            s.rgb.map(|c| (c * gain).clamp(0.0, 1.0))
                        }
                    }
                };
                ColorPatchSample::from_rgb(rgb)
            })
            .collect(),
    }
}

fn subset<'a>(
    samples: &'a [ColorPatchSample],
    indices: Option<&[usize]>,
) -> Result<Vec<ColorPatchSample>> {
    match indices {
        None => Ok(samples.to_vec()),
        Some(idx) => idx
            .iter()
            .map(|&i| {
                samples.get(i).copied().ok_or(Error::Annotation(format!(
                    "match patch index {i} out of range ({} patches)",
                    samples.len()
                )))
            })
            .collect(),
    }
}

/// Align source to target and reduce the patch-wise differences to one
/// scalar: sequence RMSE, mean angular error, or the median patch CIEDE2000.
fn compare_pair(
    source: &[ColorPatchSample],
    source_icrf: Option<&ResponseCurve>,
    target: &[ColorPatchSample],
    target_icrf: Option<&ResponseCurve>,
    metric: Metric,
    pipeline: &AlignmentPipeline,
) -> Result<f64> {
    let src = linearise_samples(source, source_icrf, pipeline.linearise_mode);
    let tgt = linearise_samples(target, target_icrf, pipeline.linearise_mode);
    let src = if pipeline.enable_matching {
        let fit_src = subset(&src, pipeline.match_indices.as_deref())?;
        let fit_tgt = subset(&tgt, pipeline.match_indices.as_deref())?;
        let coeffs = fit_linear_match(&fit_src, &fit_tgt)?;
        src.iter().map(|s| modify_sample(s, &coeffs)).collect()
    } else {
        src
    };

    let a: Vec<Rgb> = src.iter().map(|s| s.rgb).collect();
    let b: Vec<Rgb> = tgt.iter().map(|s| s.rgb).collect();
    match metric {
        Metric::Rmse => rmse(&a, &b),
        Metric::Rae => rae_mean(&a, &b),
        Metric::De2000 => {
            let per_patch: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| delta_e2000(*x, *y))
                .collect();
            Ok(median(&per_patch))
        }
    }
}

/// Expected single-camera comparison count N(N-1)/2.
pub fn single_camera_count(images: usize) -> usize {
    images * images.saturating_sub(1) / 2
}

/// Expected pooled cross-camera count m(m-1)/2 * c(c-1)/2.
pub fn cross_camera_count(images_per_camera: usize, cameras: usize) -> usize {
    single_camera_count(images_per_camera) * cameras * cameras.saturating_sub(1) / 2
}

type PairJob = (usize, usize, usize, usize, bool); // (cam_u, img_i, cam_v, img_j, pooled)

/// Run the handshake protocol over camera groups.
pub fn handshake_evaluate(
    groups: &[CameraGroup],
    metric: Metric,
    pipeline: &AlignmentPipeline,
) -> Result<HandshakeReport> {
    let total_items: usize = groups.iter().map(|g| g.images.len()).sum();
    if total_items < 2 {
        return Err(Error::InsufficientData {
            context: "handshake items",
            required: 2,
            actual: total_items,
        });
    }
    let c = groups.len();
    if c > 1 {
        let m = groups[0].images.len();
        if groups.iter().any(|g| g.images.len() != m) {
            return Err(Error::Config(
                "cross-camera evaluation needs the same image count per camera".into(),
            ));
        }
    }

    // Enumerate jobs in a fixed order; comparisons then run in parallel and
    // reduce back by that order.
    let mut jobs: Vec<PairJob> = Vec::new();
    for (u, g) in groups.iter().enumerate() {
        for i in 0..g.images.len() {
            for j in i + 1..g.images.len() {
                jobs.push((u, i, u, j, c == 1));
            }
        }
    }
    for u in 0..c {
        for v in 0..c {
            if u == v {
                continue;
            }
            let m = groups[u].images.len().min(groups[v].images.len());
            for i in 0..m {
                for j in i + 1..m {
                    jobs.push((u, i, v, j, u < v));
                }
            }
        }
    }

    let results: Result<Vec<f64>> = jobs
        .par_iter()
        .map(|&(u, i, v, j, _)| {
            compare_pair(
                &groups[u].images[i],
                groups[u].icrf.as_ref(),
                &groups[v].images[j],
                groups[v].icrf.as_ref(),
                metric,
                pipeline,
            )
        })
        .collect();
    let results = results?;

    let mut cells: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); c]; c];
    let mut pooled = Vec::new();
    for (&(u, _, v, _, pool), &value) in jobs.iter().zip(&results) {
        cells[u][v].push(value);
        if pool {
            pooled.push(value);
        }
    }

    let pairwise_medians = cells
        .iter()
        .map(|row| {
            row.iter()
                .map(|cell| (!cell.is_empty()).then(|| median(cell)))
                .collect()
        })
        .collect();
    let single_counts = (0..c).map(|u| cells[u][u].len()).collect();
    let cross_count = if c > 1 { pooled.len() } else { 0 };
    let overall = median(&pooled);

    Ok(HandshakeReport {
        metric,
        camera_ids: groups.iter().map(|g| g.camera_id.clone()).collect(),
        pairwise_medians,
        count: pooled.len(),
        pooled,
        single_counts,
        cross_count,
        median: overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set(base: f64) -> Vec<ColorPatchSample> {
        (0..4)
            .map(|i| {
                ColorPatchSample::from_rgb([
                    (base + 0.1 * i as f64).min(1.0),
                    (base + 0.05 * i as f64).min(1.0),
                    (base + 0.02 * i as f64).min(1.0),
                ])
            })
            .collect()
    }

    fn one_camera(n: usize) -> CameraGroup {
        CameraGroup {
            camera_id: "cam".into(),
            images: (0..n).map(|i| sample_set(0.1 + 0.05 * i as f64)).collect(),
            icrf: None,
        }
    }

    #[test]
    fn four_images_one_camera_gives_six_comparisons() {
        let report =
            handshake_evaluate(&[one_camera(4)], Metric::Rmse, &AlignmentPipeline::raw()).unwrap();
        assert_eq!(report.single_counts, vec![6]);
        assert_eq!(report.count, 6);
        assert_eq!(report.cross_count, 0);
    }

    #[test]
    fn cross_camera_counts_match_closed_form() {
        for (m, c) in [(2, 2), (4, 3), (10, 6)] {
            let groups: Vec<CameraGroup> = (0..c)
                .map(|k| CameraGroup {
                    camera_id: format!("cam{k}"),
                    images: (0..m).map(|i| sample_set(0.1 + 0.04 * i as f64)).collect(),
                    icrf: None,
                })
                .collect();
            let report =
                handshake_evaluate(&groups, Metric::Rmse, &AlignmentPipeline::raw()).unwrap();
            assert_eq!(
                report.cross_count,
                cross_camera_count(m, c),
                "m={m} c={c}"
            );
            for count in &report.single_counts {
                assert_eq!(*count, single_camera_count(m));
            }
        }
        assert_eq!(cross_camera_count(10, 6), 675);
    }

    #[test]
    fn identical_items_have_zero_median() {
        let img = sample_set(0.3);
        let groups: Vec<CameraGroup> = (0..2)
            .map(|k| CameraGroup {
                camera_id: format!("cam{k}"),
                images: vec![img.clone(), img.clone(), img.clone()],
                icrf: None,
            })
            .collect();
        for metric in [Metric::Rmse, Metric::Rae, Metric::De2000] {
            let report = handshake_evaluate(&groups, metric, &AlignmentPipeline::raw()).unwrap();
            assert_eq!(report.median, 0.0, "{metric:?}");
        }
    }

    #[test]
    fn fewer_than_two_items_is_an_error() {
        assert!(matches!(
            handshake_evaluate(&[one_camera(1)], Metric::Rmse, &AlignmentPipeline::raw()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn heatmap_is_asymmetric_but_complete() {
        let groups: Vec<CameraGroup> = (0..3)
            .map(|k| CameraGroup {
                camera_id: format!("cam{k}"),
                images: (0..3)
                    .map(|i| sample_set(0.1 + 0.07 * (i + k) as f64))
                    .collect(),
                icrf: None,
            })
            .collect();
        let report =
            handshake_evaluate(&groups, Metric::Rmse, &AlignmentPipeline::raw()).unwrap();
        for u in 0..3 {
            for v in 0..3 {
                assert!(report.pairwise_medians[u][v].is_some(), "cell ({u},{v})");
            }
        }
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
