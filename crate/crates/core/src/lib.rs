//! Colour alignment for relative colour constancy.
//!
//! Aligns the colours of images taken by different cameras and under varied
//! illuminations in three steps:
//!
//! 1. **Camera response calibration** — estimate the inverse camera response
//!    function (iCRF) of each camera from a handful of images of shared colour
//!    patches, without knowing any true colour values. The candidate iCRFs are
//!    scored by the balance-of-linear-distances (BoLD) value; calibration
//!    either selects the best curve from a response-curve database or fits
//!    low-dimensional model coefficients by gradient descent.
//! 2. **Response linearisation** — map images through the calibrated iCRF so
//!    pixel intensities become linear in scene irradiance.
//! 3. **Colour matching** — fit per-image linear intensity and chromaticity
//!    transforms on corresponding colour patches (two patches suffice) and
//!    apply them pixel-wise without cross-contaminating intensity and
//!    chromaticity.
//!
//! The crate also ships the evaluation side: RMSE / recovery-angular-error /
//! CIEDE2000 metrics, the all-pairs "handshake" comparison protocol, two
//! statistical white-balance baselines, and a synthetic scene generator with
//! known ground truth used to validate every stage.

pub mod bold;
pub mod calibrate;
pub mod ccp;
pub mod curve;
pub mod emor;
pub mod error;
pub mod handshake;
pub mod image_buf;
pub mod ingest;
pub mod io;
pub mod matching;
pub mod metrics;
pub mod synth;

pub use bold::{BoldBreakdown, BoldParams, SkewnessSource};
pub use calibrate::{CalibrationMethod, CalibrationResult, OptimParams};
pub use ccp::CcpMatrix;
pub use curve::{ResponseCurve, CURVE_SAMPLES};
pub use emor::{EmorBasis, EmorCoefficients, EmorKind};
pub use error::{Error, Result};
pub use image_buf::{ColorPatchSample, ImageBuffer, PatchAnnotation, Rect, Rgb};
pub use ingest::DorfDatabase;
pub use matching::{LineariseMode, MatchCoefficients};
pub use metrics::Metric;
