//! Floating-point RGB images, patch annotations, and colour patch samples.
//!
//! Channel values live in [0, 1]; 8-bit inputs are mapped by v/255 on decode.
//! Colour intensity here is the channel mean (R+G+B)/3 so that intensity and
//! channel values share the same [0, 1] curve domain. Blue-and-red
//! chromaticity is the usual ratio to the channel sum: r = R/(R+G+B),
//! b = B/(R+G+B), with g = 1 - r - b implied.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One pixel or mean colour: `[R, G, B]`, each channel in [0, 1].
pub type Rgb = [f64; 3];

pub(crate) fn rgb_sum(rgb: Rgb) -> f64 {
    rgb[0] + rgb[1] + rgb[2]
}

pub(crate) fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Blue-and-red chromaticity of an RGB triple: `(r, b)` with
/// r = R/(R+G+B) and b = B/(R+G+B).
///
/// Scale-invariant: `chromaticity(s * rgb) == chromaticity(rgb)` for s > 0.
/// Fails with [`Error::ZeroIntensity`] when R+G+B = 0; the caller decides
/// the fallback.
pub fn chromaticity(rgb: Rgb) -> Result<(f64, f64)> {
    let sum = rgb_sum(rgb);
    if sum <= 0.0 {
        return Err(Error::ZeroIntensity);
    }
    Ok((rgb[0] / sum, rgb[2] / sum))
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Rect {
            x,
            y,
            width,
            height,
        }
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

/// A labelled colour-patch region inside one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchAnnotation {
    pub image_id: String,
    pub patch_id: usize,
    pub region: Rect,
}

/// Mean colour of one patch plus its derived intensity and chromaticity.
///
/// `intensity` is (R+G+B)/3; `chroma_r`/`chroma_b` are the BR chromaticity of
/// the mean colour, with a neutral (1/3, 1/3) fallback for a pure black patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorPatchSample {
    pub rgb: Rgb,
    pub intensity: f64,
    pub chroma_r: f64,
    pub chroma_b: f64,
}

impl ColorPatchSample {
    /// Derive intensity and chromaticity from a mean RGB triple.
    pub fn from_rgb(rgb: Rgb) -> Self {
        let intensity = rgb_sum(rgb) / 3.0;
        let (chroma_r, chroma_b) = chromaticity(rgb).unwrap_or((1.0 / 3.0, 1.0 / 3.0));
        ColorPatchSample {
            rgb,
            intensity,
            chroma_r,
            chroma_b,
        }
    }

    /// Raw channel sum R+G+B, the intensity scale used by the matching
    /// algorithms.
    pub fn intensity_sum(&self) -> f64 {
        rgb_sum(self.rgb)
    }
}

/// Row-major floating-point RGB raster with channels clamped to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl ImageBuffer {
    /// Build from row-major pixels, clamping every channel into [0, 1].
    /// Non-finite channels are clamped to 0.
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                context: "pixel count must equal width*height",
                expected: width * height,
                actual: pixels.len(),
            });
        }
        let pixels = pixels
            .into_iter()
            .map(|p| p.map(|c| if c.is_finite() { clamp01(c) } else { 0.0 }))
            .collect();
        Ok(ImageBuffer {
            width,
            height,
            pixels,
        })
    }

    /// Uniform image filled with one colour.
    pub fn filled(width: usize, height: usize, rgb: Rgb) -> Self {
        ImageBuffer {
            width,
            height,
            pixels: vec![rgb.map(clamp01); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    /// Apply a per-pixel transform, clamping the result back into [0, 1].
    pub fn map_pixels(&self, f: impl Fn(Rgb) -> Rgb + Sync) -> ImageBuffer {
        let pixels = self.pixels.iter().map(|&p| f(p).map(clamp01)).collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    fn check_region(&self, ann: &PatchAnnotation) -> Result<()> {
        let r = &ann.region;
        if r.area() == 0 {
            return Err(Error::DegenerateRegion {
                patch: ann.patch_id,
            });
        }
        if r.x + r.width > self.width || r.y + r.height > self.height {
            return Err(Error::RegionOutOfBounds {
                patch: ann.patch_id,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

/// Mean colour over an annotated patch region.
///
/// The plain arithmetic mean of all pixels in the region; intensity and
/// chromaticity derive from that mean.
pub fn extract_patch(image: &ImageBuffer, annotation: &PatchAnnotation) -> Result<ColorPatchSample> {
    image.check_region(annotation)?;
    let r = &annotation.region;
    let mut acc = [0.0f64; 3];
    for y in r.y..r.y + r.height {
        for x in r.x..r.x + r.width {
            let p = image.pixel(x, y);
            acc[0] += p[0];
            acc[1] += p[1];
            acc[2] += p[2];
        }
    }
    let n = r.area() as f64;
    Ok(ColorPatchSample::from_rgb([
        acc[0] / n,
        acc[1] / n,
        acc[2] / n,
    ]))
}

/// Extract one sample per annotation, in annotation order.
pub fn extract_patches(
    image: &ImageBuffer,
    annotations: &[PatchAnnotation],
) -> Result<Vec<ColorPatchSample>> {
    annotations
        .iter()
        .map(|ann| extract_patch(image, ann))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn chromaticity_of_grey_is_one_third() {
        let (r, b) = chromaticity([1.0, 1.0, 1.0]).unwrap();
        assert!(close(r, 1.0 / 3.0, 1e-15));
        assert!(close(b, 1.0 / 3.0, 1e-15));
    }

    #[test]
    fn chromaticity_is_plain_ratio() {
        let (r, b) = chromaticity([0.6, 0.3, 0.1]).unwrap();
        assert!(close(r, 0.6, 1e-15));
        assert!(close(b, 0.1, 1e-15));
    }

    #[test]
    fn chromaticity_is_scale_invariant() {
        let (r, b) = chromaticity([1.2, 0.6, 0.2]).unwrap();
        assert!(close(r, 0.6, 1e-12));
        assert!(close(b, 0.1, 1e-12));
    }

    #[test]
    fn chromaticity_rejects_black() {
        assert!(matches!(
            chromaticity([0.0, 0.0, 0.0]),
            Err(Error::ZeroIntensity)
        ));
    }

    #[test]
    fn extract_patch_uniform_region() {
        let img = ImageBuffer::filled(8, 8, [0.6, 0.3, 0.1]);
        let ann = PatchAnnotation {
            image_id: "img".into(),
            patch_id: 0,
            region: Rect::new(1, 1, 4, 4),
        };
        let s = extract_patch(&img, &ann).unwrap();
        assert!(close(s.rgb[0], 0.6, 1e-12));
        assert!(close(s.rgb[1], 0.3, 1e-12));
        assert!(close(s.rgb[2], 0.1, 1e-12));
        assert!(close(s.intensity, 1.0 / 3.0, 1e-12));
        assert!(close(s.chroma_r, 0.6, 1e-12));
        assert!(close(s.chroma_b, 0.1, 1e-12));
    }

    #[test]
    fn extract_patch_white_region() {
        let img = ImageBuffer::filled(4, 4, [1.0, 1.0, 1.0]);
        let ann = PatchAnnotation {
            image_id: "img".into(),
            patch_id: 0,
            region: Rect::new(0, 0, 4, 4),
        };
        let s = extract_patch(&img, &ann).unwrap();
        assert!(close(s.intensity, 1.0, 1e-12));
        assert!(close(s.chroma_r, 1.0 / 3.0, 1e-12));
        assert!(close(s.chroma_b, 1.0 / 3.0, 1e-12));
    }

    #[test]
    fn extract_patch_averages_two_pixels() {
        let img =
            ImageBuffer::new(2, 1, vec![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]).unwrap();
        let ann = PatchAnnotation {
            image_id: "img".into(),
            patch_id: 0,
            region: Rect::new(0, 0, 2, 1),
        };
        let s = extract_patch(&img, &ann).unwrap();
        assert!(close(s.rgb[0], 0.5, 1e-12));
        assert!(close(s.rgb[1], 0.5, 1e-12));
        assert!(close(s.rgb[2], 0.5, 1e-12));
    }

    #[test]
    fn extract_patch_out_of_bounds() {
        let img = ImageBuffer::filled(4, 4, [0.5, 0.5, 0.5]);
        let ann = PatchAnnotation {
            image_id: "img".into(),
            patch_id: 7,
            region: Rect::new(2, 2, 4, 4),
        };
        assert!(matches!(
            extract_patch(&img, &ann),
            Err(Error::RegionOutOfBounds { patch: 7, .. })
        ));
    }

    #[test]
    fn extract_patch_zero_area() {
        let img = ImageBuffer::filled(4, 4, [0.5, 0.5, 0.5]);
        let ann = PatchAnnotation {
            image_id: "img".into(),
            patch_id: 3,
            region: Rect::new(1, 1, 0, 2),
        };
        assert!(matches!(
            extract_patch(&img, &ann),
            Err(Error::DegenerateRegion { patch: 3 })
        ));
    }

    #[test]
    fn image_buffer_clamps_channels() {
        let img = ImageBuffer::new(1, 1, vec![[1.5, -0.2, 0.5]]).unwrap();
        assert_eq!(img.pixel(0, 0), [1.0, 0.0, 0.5]);
    }

    #[test]
    fn sample_components_sum_to_one() {
        let s = ColorPatchSample::from_rgb([0.2, 0.5, 0.25]);
        let g = 1.0 - s.chroma_r - s.chroma_b;
        assert!(close(s.chroma_r + s.chroma_b + g, 1.0, 1e-12));
        assert!(close(s.intensity, (0.2 + 0.5 + 0.25) / 3.0, 1e-12));
    }
}
