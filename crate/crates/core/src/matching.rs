//! Response linearisation and pixel-wise linear colour matching.
//!
//! After linearisation, a source image is matched to a target by three
//! independent least-squares fits on corresponding colour patches: raw
//! intensity sum I = R+G+B, red chromaticity, and blue chromaticity. The
//! fitted coefficients are applied pixel-wise in two stages that do not
//! contaminate each other: the intensity stage rescales and redistributes
//! the offset proportionally so chromaticity is untouched, and the
//! chromaticity stage rewrites r and b while conserving the channel sum.
//! Clamping happens once at the very end so the conservation laws hold
//! exactly in the interior.

use serde::{Deserialize, Serialize};

use crate::curve::ResponseCurve;
use crate::error::{Error, Result};
use crate::image_buf::{ColorPatchSample, ImageBuffer, Rgb};

/// How images are mapped through the inverse response curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LineariseMode {
    /// Apply the curve to each channel independently (default).
    #[default]
    PerChannel,
    /// Apply the curve to the pixel's mean intensity and rescale the
    /// channels by the common gain, preserving chromaticity.
    PerIntensity,
}

/// The six linear coefficients of the colour matching step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchCoefficients {
    pub alpha_i: f64,
    pub beta_i: f64,
    pub alpha_r: f64,
    pub beta_r: f64,
    pub alpha_b: f64,
    pub beta_b: f64,
}

impl MatchCoefficients {
    pub const IDENTITY: MatchCoefficients = MatchCoefficients {
        alpha_i: 1.0,
        beta_i: 0.0,
        alpha_r: 1.0,
        beta_r: 0.0,
        alpha_b: 1.0,
        beta_b: 0.0,
    };

    /// An orientation-reversing intensity match (alpha_I <= 0) usually means
    /// the patch pairing is wrong; callers should warn.
    pub fn is_orientation_preserving(&self) -> bool {
        self.alpha_i > 0.0
    }
}

/// Map every channel of every pixel through the curve; output clamped.
pub fn linearise_image(image: &ImageBuffer, icrf: &ResponseCurve) -> ImageBuffer {
    linearise_image_mode(image, icrf, LineariseMode::PerChannel)
}

pub fn linearise_image_mode(
    image: &ImageBuffer,
    icrf: &ResponseCurve,
    mode: LineariseMode,
) -> ImageBuffer {
    match mode {
        LineariseMode::PerChannel => image.map_pixels(|p| p.map(|c| icrf.eval_clamped(c))),
        LineariseMode::PerIntensity => image.map_pixels(|p| {
            let mean = (p[0] + p[1] + p[2]) / 3.0;
            if mean <= 0.0 {
                return p;
            }
            let gain = icrf.eval_clamped(mean) / mean;
            p.map(|c| c * gain)
        }),
    }
}

/// Ordinary least squares y = alpha*x + beta.
fn linear_regression(xs: &[f64], ys: &[f64], context: &'static str) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx <= 0.0 {
        return Err(Error::DegenerateRegression { context });
    }
    let alpha = sxy / sxx;
    Ok((alpha, mean_y - alpha * mean_x))
}

/// Fit the six matching coefficients mapping source patches onto target
/// patches: target = alpha * source + beta for intensity sum, red
/// chromaticity, and blue chromaticity. With exactly two patches the fits
/// interpolate both points.
pub fn fit_linear_match(
    source: &[ColorPatchSample],
    target: &[ColorPatchSample],
) -> Result<MatchCoefficients> {
    if source.len() != target.len() {
        return Err(Error::DimensionMismatch {
            context: "matching patch count",
            expected: source.len(),
            actual: target.len(),
        });
    }
    if source.len() < 2 {
        return Err(Error::InsufficientData {
            context: "patches for colour matching",
            required: 2,
            actual: source.len(),
        });
    }
    let src_i: Vec<f64> = source.iter().map(|s| s.intensity_sum()).collect();
    let tgt_i: Vec<f64> = target.iter().map(|s| s.intensity_sum()).collect();
    let src_r: Vec<f64> = source.iter().map(|s| s.chroma_r).collect();
    let tgt_r: Vec<f64> = target.iter().map(|s| s.chroma_r).collect();
    let src_b: Vec<f64> = source.iter().map(|s| s.chroma_b).collect();
    let tgt_b: Vec<f64> = target.iter().map(|s| s.chroma_b).collect();

    let (alpha_i, beta_i) = linear_regression(&src_i, &tgt_i, "intensity")?;
    let (alpha_r, beta_r) = linear_regression(&src_r, &tgt_r, "red chromaticity")?;
    let (alpha_b, beta_b) = linear_regression(&src_b, &tgt_b, "blue chromaticity")?;
    Ok(MatchCoefficients {
        alpha_i,
        beta_i,
        alpha_r,
        beta_r,
        alpha_b,
        beta_b,
    })
}

/// Intensity-then-chromaticity modification of one pixel, before clamping.
/// Zero-sum pixels pass through unchanged (the chromaticity rewrite would
/// divide by zero).
pub fn modify_pixel(p: Rgb, c: &MatchCoefficients) -> Rgb {
    let sum = p[0] + p[1] + p[2];
    if sum <= 0.0 {
        return p;
    }

    // Intensity stage: scale all channels, then fold the offset in
    // proportionally so (r, b) stay exactly as they were.
    let rp = c.alpha_i * p[0];
    let gp = c.alpha_i * p[1];
    let bp = c.alpha_i * p[2];
    let sp = rp + gp + bp;
    let (r1, g1, b1) = if sp != 0.0 {
        let r = (sp + c.beta_i) * rp / sp;
        let b = (sp + c.beta_i) * bp / sp;
        (r, sp + c.beta_i - r - b, b)
    } else {
        (rp, gp, bp)
    };

    // Chromaticity stage: rewrite r and b, keeping the channel sum fixed at
    // every sub-step.
    let s1 = r1 + g1 + b1;
    let rp = c.alpha_r * r1;
    let bp = c.alpha_b * b1;
    let gp = s1 - rp - bp;
    let s2 = rp + gp + bp; // equals s1 by construction
    let r2 = c.beta_r * s2 + rp;
    let b2 = c.beta_b * s2 + bp;
    let g2 = s2 - r2 - b2;
    [r2, g2, b2]
}

/// Apply the matching coefficients to every pixel; clamped at the end only.
pub fn apply_colour_modification(image: &ImageBuffer, coeffs: &MatchCoefficients) -> ImageBuffer {
    image.map_pixels(|p| modify_pixel(p, coeffs))
}

/// Extract patches from both images, fit source -> target coefficients, and
/// return the corrected source image together with the coefficients.
pub fn match_images(
    source: &ImageBuffer,
    target: &ImageBuffer,
    source_annotations: &[crate::image_buf::PatchAnnotation],
    target_annotations: &[crate::image_buf::PatchAnnotation],
) -> Result<(ImageBuffer, MatchCoefficients)> {
    if source_annotations.len() != target_annotations.len() {
        return Err(Error::DimensionMismatch {
            context: "annotation count",
            expected: source_annotations.len(),
            actual: target_annotations.len(),
        });
    }
    let src = crate::image_buf::extract_patches(source, source_annotations)?;
    let tgt = crate::image_buf::extract_patches(target, target_annotations)?;
    let coeffs = fit_linear_match(&src, &tgt)?;
    Ok((apply_colour_modification(source, &coeffs), coeffs))
}

/// Apply the matching transform to an already-extracted patch sample.
/// Equivalent to extracting from the modified image when patches are
/// uniform regions.
pub fn modify_sample(sample: &ColorPatchSample, coeffs: &MatchCoefficients) -> ColorPatchSample {
    ColorPatchSample::from_rgb(modify_pixel(sample.rgb, coeffs).map(|v| v.clamp(0.0, 1.0)))
}
