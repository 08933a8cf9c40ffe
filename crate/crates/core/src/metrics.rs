//! Colour difference metrics and statistical white-balance baselines.
//!
//! RMSE is reported on the 0-255 scale so magnitudes line up with the usual
//! 8-bit intensity convention; RAE is the angle in degrees between RGB
//! vectors; CIEDE2000 runs on CIELAB converted from sRGB with the D65 white
//! point and the standard 2-degree observer (kL = kC = kH = 1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_buf::{ColorPatchSample, ImageBuffer, Rgb};

/// Metric selector used by reports and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rmse,
    Rae,
    #[default]
    De2000,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rmse" => Ok(Metric::Rmse),
            "rae" => Ok(Metric::Rae),
            "de2000" | "deltae2000" | "de" => Ok(Metric::De2000),
            other => Err(Error::Config(format!("unknown metric '{other}'"))),
        }
    }
}

/// Root mean square Euclidean RGB distance over paired colours, scaled to
/// 0-255.
pub fn rmse(a: &[Rgb], b: &[Rgb]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "rmse sequence length",
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InsufficientData {
            context: "colour pairs",
            required: 1,
            actual: 0,
        });
    }
    let acc: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)
        })
        .sum();
    Ok((acc / a.len() as f64).sqrt() * 255.0)
}

/// Recovery angular error between two RGB vectors, in degrees.
///
/// Computed as atan2(|a x b|, a . b), which stays accurate for near-parallel
/// vectors where the arccosine form loses digits.
pub fn rae(a: Rgb, b: Rgb) -> Result<f64> {
    if a == [0.0; 3] || b == [0.0; 3] {
        return Err(Error::ZeroVector);
    }
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let cross_norm = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    Ok(cross_norm.atan2(dot).to_degrees())
}

/// Mean recovery angular error over paired sequences.
pub fn rae_mean(a: &[Rgb], b: &[Rgb]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "rae sequence length",
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InsufficientData {
            context: "colour pairs",
            required: 1,
            actual: 0,
        });
    }
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += rae(*x, *y)?;
    }
    Ok(acc / a.len() as f64)
}

/// CIELAB coordinates (D65, 2-degree observer).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

// D65 reference white in XYZ, Y normalised to 1.
const D65_XN: f64 = 0.95047;
const D65_YN: f64 = 1.00000;
const D65_ZN: f64 = 1.08883;

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// sRGB (channels in [0, 1]) to CIELAB via XYZ.
pub fn srgb_to_lab(rgb: Rgb) -> Lab {
    let r = srgb_to_linear(rgb[0]);
    let g = srgb_to_linear(rgb[1]);
    let b = srgb_to_linear(rgb[2]);

    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;

    let fx = lab_f(x / D65_XN);
    let fy = lab_f(y / D65_YN);
    let fz = lab_f(z / D65_ZN);
    Lab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

fn hue_angle_deg(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        return 0.0;
    }
    let h = b.atan2(a).to_degrees();
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

/// CIEDE2000 colour difference between two Lab colours (kL = kC = kH = 1).
pub fn delta_e2000_lab(lab1: Lab, lab2: Lab) -> f64 {
    const POW25_7: f64 = 6103515625.0; // 25^7

    let c1_ab = lab1.a.hypot(lab1.b);
    let c2_ab = lab2.a.hypot(lab2.b);
    let c_ab_mean = (c1_ab + c2_ab) / 2.0;
    let c_mean_pow7 = c_ab_mean.powi(7);
    let g = 0.5 * (1.0 - (c_mean_pow7 / (c_mean_pow7 + POW25_7)).sqrt());

    let a1p = (1.0 + g) * lab1.a;
    let a2p = (1.0 + g) * lab2.a;
    let c1p = a1p.hypot(lab1.b);
    let c2p = a2p.hypot(lab2.b);
    let h1p = hue_angle_deg(a1p, lab1.b);
    let h2p = hue_angle_deg(a2p, lab2.b);

    let dl = lab2.l - lab1.l;
    let dc = c2p - c1p;
    let dhp = if c1p * c2p == 0.0 {
        0.0
    } else {
        let dh = h2p - h1p;
        if dh.abs() <= 180.0 {
            dh
        } else if dh > 180.0 {
            dh - 360.0
        } else {
            dh + 360.0
        }
    };
    let dh_big = 2.0 * (c1p * c2p).sqrt() * (dhp.to_radians() / 2.0).sin();

    let l_mean = (lab1.l + lab2.l) / 2.0;
    let c_mean = (c1p + c2p) / 2.0;
    let h_mean = if c1p * c2p == 0.0 {
        h1p + h2p
    } else {
        let sum = h1p + h2p;
        if (h1p - h2p).abs() <= 180.0 {
            sum / 2.0
        } else if sum < 360.0 {
            (sum + 360.0) / 2.0
        } else {
            (sum - 360.0) / 2.0
        }
    };

    let t = 1.0 - 0.17 * (h_mean - 30.0).to_radians().cos()
        + 0.24 * (2.0 * h_mean).to_radians().cos()
        + 0.32 * (3.0 * h_mean + 6.0).to_radians().cos()
        - 0.20 * (4.0 * h_mean - 63.0).to_radians().cos();

    let dtheta = 30.0 * (-((h_mean - 275.0) / 25.0).powi(2)).exp();
    let c_mean_pow7 = c_mean.powi(7);
    let rc = 2.0 * (c_mean_pow7 / (c_mean_pow7 + POW25_7)).sqrt();
    let rt = -(2.0 * dtheta).to_radians().sin() * rc;

    let l50 = (l_mean - 50.0).powi(2);
    let sl = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let sc = 1.0 + 0.045 * c_mean;
    let sh = 1.0 + 0.015 * c_mean * t;

    let tl = dl / sl;
    let tc = dc / sc;
    let th = dh_big / sh;
    (tl * tl + tc * tc + th * th + rt * tc * th).sqrt()
}

/// CIEDE2000 between two sRGB colours.
pub fn delta_e2000(a: Rgb, b: Rgb) -> f64 {
    delta_e2000_lab(srgb_to_lab(a), srgb_to_lab(b))
}

/// Blue-red chromaticity ratio max(b/r, r/b) of a patch sample.
pub fn br_ratio(sample: &ColorPatchSample) -> Result<f64> {
    let (r, b) = (sample.chroma_r, sample.chroma_b);
    if r <= 0.0 || b <= 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok((b / r).max(r / b))
}

/// Grey-world white balance: scale each channel so its mean equals the mean
/// intensity over all channels.
pub fn wb_grey_world(image: &ImageBuffer) -> Result<ImageBuffer> {
    let n = image.pixels().len() as f64;
    let mut means = [0.0f64; 3];
    for p in image.pixels() {
        for (m, c) in means.iter_mut().zip(p) {
            *m += c;
        }
    }
    for m in means.iter_mut() {
        *m /= n;
    }
    let grand = (means[0] + means[1] + means[2]) / 3.0;
    for (ch, m) in means.iter().enumerate() {
        if *m <= 0.0 {
            return Err(Error::DegenerateChannel {
                channel: ch,
                reason: "zero channel mean".into(),
            });
        }
    }
    let gains = means.map(|m| grand / m);
    Ok(image.map_pixels(|p| [p[0] * gains[0], p[1] * gains[1], p[2] * gains[2]]))
}

/// White-patch white balance: scale each channel so its maximum maps to 1.
pub fn wb_white_patch(image: &ImageBuffer) -> Result<ImageBuffer> {
    let mut maxes = [0.0f64; 3];
    for p in image.pixels() {
        for (m, c) in maxes.iter_mut().zip(p) {
            *m = m.max(*c);
        }
    }
    for (ch, m) in maxes.iter().enumerate() {
        if *m <= 0.0 {
            return Err(Error::DegenerateChannel {
                channel: ch,
                reason: "zero channel maximum".into(),
            });
        }
    }
    let gains = maxes.map(|m| 1.0 / m);
    Ok(image.map_pixels(|p| [p[0] * gains[0], p[1] * gains[1], p[2] * gains[2]]))
}
