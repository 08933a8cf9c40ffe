//! Synthetic calibration and test data with known ground truth.
//!
//! Stands in for camera datasets that cannot ship with the artifact: scenes
//! are grids of uniform colour patches rendered through a known forward
//! response curve, with optional Gaussian noise added in the linear domain
//! (before the curve, mirroring sensor noise). The module also generates a
//! database of diverse synthetic response curves and derives a PCA basis
//! from their inverses, and runs the calibration recovery study used to
//! validate the selection approach end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibrate::{select_icrf, CalibrationResult};
use crate::ccp::{CcpChannel, CcpMatrix};
use crate::curve::{ResponseCurve, CURVE_SAMPLES};
use crate::emor::{EmorBasis, EmorKind};
use crate::error::{Error, Result};
use crate::image_buf::{extract_patches, ImageBuffer, PatchAnnotation, Rect, Rgb};
use crate::ingest::DorfDatabase;
use crate::BoldParams;

/// Patch square side in pixels.
pub const PATCH_SIDE: usize = 16;
/// Gap between patches and around the border.
pub const PATCH_GUTTER: usize = 4;
/// Background grey of rendered scenes.
const BACKGROUND: Rgb = [0.25, 0.25, 0.25];

/// Specification of one synthetic multi-image scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    /// Per-image positive RGB illumination gains (length = image count).
    pub gains: Vec<Rgb>,
    /// Base patch reflectances in [0, 1] (length = patch count).
    pub reflectances: Vec<Rgb>,
    /// Forward response curve applied after the linear phase.
    pub crf: ResponseCurve,
    /// Gaussian noise sigma in the linear domain.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSceneSpec {
    fn check(&self) -> Result<()> {
        if self.gains.is_empty() || self.reflectances.is_empty() {
            return Err(Error::Config("scene needs gains and reflectances".into()));
        }
        if self.gains.iter().flatten().any(|&g| g <= 0.0 || !g.is_finite()) {
            return Err(Error::Config("illumination gains must be positive".into()));
        }
        if self
            .reflectances
            .iter()
            .flatten()
            .any(|&r| !(0.0..=1.0).contains(&r))
        {
            return Err(Error::Config("reflectances must lie in [0, 1]".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// A generated scene: rendered images, their annotations, and the ground
/// truth needed by recovery tests.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub images: Vec<ImageBuffer>,
    /// One annotation list per image, ordered by patch id.
    pub annotations: Vec<Vec<PatchAnnotation>>,
    /// Pre-noise linear patch values, image-major: `linear_ccps[i][j]`.
    pub linear_ccps: Vec<Vec<Rgb>>,
    /// The forward curve the scene was rendered through.
    pub crf: ResponseCurve,
}

/// Patch grid layout for `n` patches: near-square, fixed patch size.
pub fn patch_layout(n: usize) -> (usize, usize, Vec<Rect>) {
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let pitch = PATCH_SIDE + PATCH_GUTTER;
    let width = cols * pitch + PATCH_GUTTER;
    let height = rows * pitch + PATCH_GUTTER;
    let rects = (0..n)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            Rect::new(
                PATCH_GUTTER + c * pitch,
                PATCH_GUTTER + r * pitch,
                PATCH_SIDE,
                PATCH_SIDE,
            )
        })
        .collect();
    (width, height, rects)
}

/// Render the scene: per image i and patch j the linear value is
/// `gain_i * reflectance_j` (clipped to [0, 1]); Gaussian sensor noise is
/// added per pixel in the linear domain and the forward curve then maps each
/// pixel to its rendered value. Patches are same-sized rectangles on a fixed
/// grid, so extraction averages the pixel noise down by the patch area.
pub fn generate_scene(spec: &SyntheticSceneSpec) -> Result<SyntheticScene> {
    spec.check()?;
    let m = spec.gains.len();
    let n = spec.reflectances.len();
    let (width, height, rects) = patch_layout(n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("bad noise sigma: {e}")))?;

    let mut images = Vec::with_capacity(m);
    let mut annotations = Vec::with_capacity(m);
    let mut linear_ccps = Vec::with_capacity(m);

    for (i, gain) in spec.gains.iter().enumerate() {
        let image_id = format!("img_{i:03}");
        let mut pixels = vec![BACKGROUND; width * height];
        let mut linear_row = Vec::with_capacity(n);
        let mut anns = Vec::with_capacity(n);
        for (j, refl) in spec.reflectances.iter().enumerate() {
            let linear: Rgb = [
                (gain[0] * refl[0]).clamp(0.0, 1.0),
                (gain[1] * refl[1]).clamp(0.0, 1.0),
                (gain[2] * refl[2]).clamp(0.0, 1.0),
            ];
            linear_row.push(linear);
            let rect = rects[j];
            for y in rect.y..rect.y + rect.height {
                for x in rect.x..rect.x + rect.width {
                    let rendered = if spec.noise_sigma > 0.0 {
                        linear.map(|v| {
                            spec.crf
                                .eval_clamped((v + noise.sample(&mut rng)).clamp(0.0, 1.0))
                        })
                    } else {
                        linear.map(|v| spec.crf.eval_clamped(v))
                    };
                    pixels[y * width + x] = rendered;
                }
            }
            anns.push(PatchAnnotation {
                image_id: image_id.clone(),
                patch_id: j,
                region: rect,
            });
        }
        images.push(ImageBuffer::new(width, height, pixels)?);
        annotations.push(anns);
        linear_ccps.push(linear_row);
    }

    Ok(SyntheticScene {
        images,
        annotations,
        linear_ccps,
        crf: spec.crf.clone(),
    })
}

/// Intensity CCP matrix extracted from a scene's rendered images.
pub fn scene_intensity_ccps(scene: &SyntheticScene) -> Result<CcpMatrix> {
    let samples: Result<Vec<_>> = scene
        .images
        .iter()
        .zip(&scene.annotations)
        .map(|(img, anns)| extract_patches(img, anns))
        .collect();
    CcpMatrix::from_samples(&samples?, CcpChannel::Intensity)
}

/// Strictly increasing blend of a power curve, a normalised logistic
/// shoulder, and a localised knee. The knee puts structure at a random
/// position that an affine re-alignment cannot absorb, which is what makes
/// neighbouring family members distinguishable; pure power laws compose into
/// power laws and would be mutually ambiguous.
fn family_curve(
    gamma: f64,
    mix: f64,
    steep: f64,
    center: f64,
    knee_pos: f64,
    knee_width: f64,
    knee_amp: f64,
) -> Vec<f64> {
    let sig = |t: f64| 1.0 / (1.0 + (-steep * (t - center)).exp());
    let (s0, s1) = (sig(0.0), sig(1.0));
    let knee = |t: f64| 1.0 / (1.0 + (-(t - knee_pos) / knee_width).exp());
    let (k0, k1) = (knee(0.0), knee(1.0));
    (0..CURVE_SAMPLES)
        .map(|i| {
            let t = i as f64 / (CURVE_SAMPLES - 1) as f64;
            let p = t.powf(gamma);
            let s = (sig(t) - s0) / (s1 - s0);
            let k = (knee(t) - k0) / (k1 - k0);
            (1.0 - knee_amp) * (mix * p + (1.0 - mix) * s) + knee_amp * k
        })
        .collect()
}

/// Generate `count` diverse synthetic forward response curves.
///
/// Deterministic in the seed. Every curve is strictly increasing with exact
/// endpoints {0, 1}.
pub fn synthetic_dorf(count: usize, seed: u64) -> Result<DorfDatabase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curves = Vec::with_capacity(count);
    for i in 0..count {
        let gamma = rng.gen_range(0.35..2.6);
        let mix = rng.gen_range(0.25..0.9);
        let steep = rng.gen_range(3.0..9.0);
        let center = rng.gen_range(0.3..0.7);
        let knee_pos = rng.gen_range(0.15..0.85);
        let knee_width = rng.gen_range(0.04..0.15);
        let knee_amp = rng.gen_range(0.1..0.35);
        let samples = family_curve(gamma, mix, steep, center, knee_pos, knee_width, knee_amp);
        let curve = ResponseCurve::new(format!("synth_{i:03}"), samples)?;
        curves.push(curve.normalised(1e-9)?);
    }
    DorfDatabase::from_curves(curves)
}

/// Derive a PCA basis (mean plus first k orthonormal eigenvectors) from a
/// set of sampled curves. Eigenvectors come from the Gram-matrix route, so
/// the cost scales with the curve count rather than the sample count.
pub fn derive_emor_basis(curves: &[ResponseCurve], kind: EmorKind, k: usize) -> Result<EmorBasis> {
    let n = curves.len();
    if n < 2 {
        return Err(Error::InsufficientData {
            context: "curves for PCA basis",
            required: 2,
            actual: n,
        });
    }
    if k == 0 || k >= n {
        return Err(Error::Config(format!(
            "basis size k={k} must lie in 1..{n}"
        )));
    }
    let s = curves[0].len();
    for c in curves {
        if c.len() != s {
            return Err(Error::DimensionMismatch {
                context: "curve sample count",
                expected: s,
                actual: c.len(),
            });
        }
    }

    let mut mean = vec![0.0; s];
    for c in curves {
        for (m, v) in mean.iter_mut().zip(c.samples()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    // Centered data rows.
    let centered: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| {
            c.samples()
                .iter()
                .zip(&mean)
                .map(|(v, m)| v - m)
                .collect()
        })
        .collect();

    // Gram matrix G = X X^T (n x n).
    let mut gram = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let dot: f64 = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum();
            gram[(i, j)] = dot;
            gram[(j, i)] = dot;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut eigenvectors = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let lambda = eig.eigenvalues[idx];
        if lambda <= 1e-12 {
            return Err(Error::Config(format!(
                "basis size k={k} exceeds the data rank"
            )));
        }
        let weights = eig.eigenvectors.column(idx);
        let mut component = vec![0.0; s];
        for (row, w) in centered.iter().zip(weights.iter()) {
            for (c, v) in component.iter_mut().zip(row) {
                *c += w * v;
            }
        }
        let norm = component.iter().map(|v| v * v).sum::<f64>().sqrt();
        for c in component.iter_mut() {
            *c /= norm;
        }
        eigenvectors.push(component);
    }
    EmorBasis::new(kind, mean, eigenvectors)
}

/// Derive the inverse-curve basis from a forward-curve database.
pub fn derive_inverse_emor(db: &DorfDatabase, k: usize) -> Result<EmorBasis> {
    derive_emor_basis(db.inverses(), EmorKind::Inverse, k)
}

/// Template for one recovery trial batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryTemplate {
    pub image_count: usize,
    pub patch_count: usize,
    /// Per-channel illumination gains are drawn uniformly from this range.
    pub gain_range: (f64, f64),
    pub noise_sigma: f64,
    /// A trial succeeds when the mean absolute deviation between recovered
    /// and true inverse curve is at or below this.
    pub tolerance: f64,
    pub bold: BoldParams,
    pub seed: u64,
}

impl Default for RecoveryTemplate {
    fn default() -> Self {
        RecoveryTemplate {
            image_count: 8,
            patch_count: 24,
            gain_range: (0.3, 1.0),
            noise_sigma: 0.005,
            tolerance: 0.02,
            bold: BoldParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryTrial {
    pub trial: usize,
    pub curve_index: usize,
    pub selected_name: String,
    /// Mean absolute deviation between recovered and true inverse curve.
    pub deviation: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryStudy {
    pub trials: Vec<RecoveryTrial>,
    pub fraction_ok: f64,
    pub mean_deviation: f64,
}

/// Mean absolute deviation between two equally sampled curves.
pub fn curve_deviation(a: &ResponseCurve, b: &ResponseCurve) -> f64 {
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.len() as f64
}

/// Draw a calibration scene spec for one trial: a random curve from the
/// database, neutral per-image gains, and grey patch reflectances.
///
/// Calibration scores candidates on the channel-mean intensity, and only
/// neutral patches make that intensity transform exactly through the per
/// channel response curve (the mean of per-channel curve outputs is not the
/// curve output of the mean when channels differ). Grey patches under
/// intensity-varying neutral illumination are also the standard radiometric
/// calibration target.
pub fn trial_scene_spec(
    db: &DorfDatabase,
    template: &RecoveryTemplate,
    trial: usize,
) -> (SyntheticSceneSpec, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(
        template
            .seed
            .wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    );
    let curve_index = rng.gen_range(0..db.len());
    let (lo, hi) = template.gain_range;
    let gains: Vec<Rgb> = (0..template.image_count)
        .map(|_| {
            let u = rng.gen_range(lo..hi);
            [u, u, u]
        })
        .collect();
    // Stratified grey levels: even coverage of [0.03, 0.97] with jitter, so
    // every intensity region constrains the curve shape.
    let n = template.patch_count;
    let reflectances: Vec<Rgb> = (0..n)
        .map(|j| {
            let base = 0.03 + 0.94 * (j as f64 + rng.gen_range(0.05..0.95)) / n as f64;
            [base, base, base]
        })
        .collect();
    let spec = SyntheticSceneSpec {
        gains,
        reflectances,
        crf: db.curve(curve_index).clone(),
        noise_sigma: template.noise_sigma,
        seed: rng.gen(),
    };
    (spec, curve_index)
}

/// Run `trial_count` selection-recovery trials: sample a database curve,
/// render a scene through it, calibrate by exhaustive selection, and measure
/// the deviation between the recovered and the true inverse curve.
pub fn recovery_study(
    db: &DorfDatabase,
    trial_count: usize,
    template: &RecoveryTemplate,
) -> Result<RecoveryStudy> {
    let mut trials = Vec::with_capacity(trial_count);
    for t in 0..trial_count {
        let (spec, curve_index) = trial_scene_spec(db, template, t);
        let scene = generate_scene(&spec)?;
        let ccps = scene_intensity_ccps(&scene)?;
        let result: CalibrationResult = select_icrf(&ccps, db, &template.bold)?;
        let deviation = curve_deviation(&result.icrf, db.inverse(curve_index));
        trials.push(RecoveryTrial {
            trial: t,
            curve_index,
            selected_name: result.icrf.name.clone(),
            deviation,
            ok: deviation <= template.tolerance,
        });
    }
    let ok = trials.iter().filter(|t| t.ok).count();
    let mean_deviation = trials.iter().map(|t| t.deviation).sum::<f64>() / trial_count.max(1) as f64;
    Ok(RecoveryStudy {
        fraction_ok: ok as f64 / trial_count.max(1) as f64,
        mean_deviation,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn small_spec(noise: f64, crf: ResponseCurve) -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            gains: vec![[1.0, 0.9, 0.8], [0.5, 0.6, 0.7], [0.35, 0.4, 0.45]],
            reflectances: vec![
                [0.1, 0.2, 0.3],
                [0.5, 0.4, 0.6],
                [0.9, 0.8, 0.7],
                [0.3, 0.7, 0.2],
            ],
            crf,
            noise_sigma: noise,
            seed: 99,
        }
    }

    #[test]
    fn noise_free_identity_scene_reproduces_products() {
        let spec = small_spec(0.0, ResponseCurve::identity(CURVE_SAMPLES));
        let scene = generate_scene(&spec).unwrap();
        for (i, gain) in spec.gains.iter().enumerate() {
            let samples = extract_patches(&scene.images[i], &scene.annotations[i]).unwrap();
            for (j, refl) in spec.reflectances.iter().enumerate() {
                for ch in 0..3 {
                    let expect = (gain[ch] * refl[ch]).clamp(0.0, 1.0);
                    assert!(
                        close(samples[j].rgb[ch], expect, 1e-9),
                        "image {i} patch {j} ch {ch}"
                    );
                    assert!(close(scene.linear_ccps[i][j][ch], expect, 1e-15));
                }
            }
        }
    }

    #[test]
    fn noise_free_gamma_scene_matches_closed_form() {
        let crf = ResponseCurve::from_fn("enc", CURVE_SAMPLES, |t| t.powf(1.0 / 2.2)).unwrap();
        let spec = small_spec(0.0, crf);
        let scene = generate_scene(&spec).unwrap();
        let samples = extract_patches(&scene.images[0], &scene.annotations[0]).unwrap();
        for (j, refl) in spec.reflectances.iter().enumerate() {
            for ch in 0..3 {
                let linear = (spec.gains[0][ch] * refl[ch]).clamp(0.0, 1.0);
                let expect = linear.powf(1.0 / 2.2);
                // within curve-sampling quantisation
                assert!(
                    (samples[j].rgb[ch] - expect).abs() < 1e-3,
                    "patch {j} ch {ch}: {} vs {expect}",
                    samples[j].rgb[ch]
                );
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_images_bit_for_bit() {
        let crf = ResponseCurve::from_fn("enc", 256, |t| t.powf(0.6)).unwrap();
        let spec = small_spec(0.01, crf);
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn linear_ground_truth_rows_are_proportional() {
        let spec = small_spec(0.003, ResponseCurve::identity(256));
        let scene = generate_scene(&spec).unwrap();
        // row i / row k per channel equals the gain ratio wherever unclipped
        let (a, b) = (0, 1);
        for ch in 0..3 {
            let ratio = spec.gains[a][ch] / spec.gains[b][ch];
            for j in 0..spec.reflectances.len() {
                let va = scene.linear_ccps[a][j][ch];
                let vb = scene.linear_ccps[b][j][ch];
                if va < 1.0 && vb < 1.0 && vb > 0.0 {
                    assert!(close(va / vb, ratio, 1e-12));
                }
            }
        }
    }

    #[test]
    fn synthetic_database_is_deterministic_and_normalised() {
        let a = synthetic_dorf(25, 7).unwrap();
        let b = synthetic_dorf(25, 7).unwrap();
        assert_eq!(a.len(), 25);
        for (x, y) in a.curves().iter().zip(b.curves()) {
            assert_eq!(x, y);
            x.check_normalised().unwrap();
        }
    }

    #[test]
    fn pca_basis_reconstructs_member_curves() {
        let db = synthetic_dorf(40, 3).unwrap();
        let basis = derive_inverse_emor(&db, 8).unwrap();
        assert_eq!(basis.k(), 8);
        // Projection residual should be small for a member of the data set.
        let target = db.inverse(5);
        let theta = basis.project(target.samples()).unwrap();
        let rec = crate::emor::emor_reconstruct(&basis, &theta).unwrap();
        let dev = curve_deviation(&rec, target);
        assert!(dev < 0.01, "truncation residual {dev}");
    }

    #[test]
    fn pca_eigenvectors_are_orthonormal() {
        let db = synthetic_dorf(30, 11).unwrap();
        let basis = derive_inverse_emor(&db, 5).unwrap();
        for i in 0..5 {
            for j in i..5 {
                let dot: f64 = basis.eigenvectors()[i]
                    .iter()
                    .zip(&basis.eigenvectors()[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(close(dot, expect, 1e-9), "({i},{j}) dot {dot}");
            }
        }
    }

    #[test]
    fn patch_layout_covers_all_patches_without_overlap() {
        let (w, h, rects) = patch_layout(24);
        assert_eq!(rects.len(), 24);
        for (i, a) in rects.iter().enumerate() {
            assert!(a.x + a.width <= w && a.y + a.height <= h);
            for b in rects.iter().skip(i + 1) {
                let overlap_x = a.x < b.x + b.width && b.x < a.x + a.width;
                let overlap_y = a.y < b.y + b.height && b.y < a.y + a.height;
                assert!(!(overlap_x && overlap_y), "patches overlap");
            }
        }
    }
}
