//! Parsers for the published response-curve text distributions.
//!
//! The curve database is distributed as plain text: repeated records of a
//! name line, an info line, the irradiance axis, and the brightness samples,
//! with optional `I =` / `B =` marker lines and values wrapped over several
//! lines. The model file carries named blocks (`E =`, `f0 =`/`g0 =`,
//! `h(1) =`, ...) each followed by the sample values.
//!
//! Parsed curves are resampled onto the uniform grid when the stated
//! irradiance axis is non-uniform, and normalised: monotonicity jitter up to
//! [`MONOTONICITY_REPAIR_TOL`] is isotonically clipped, anything worse
//! rejects the curve with a warning instead of failing the whole parse.

use std::sync::OnceLock;

use crate::curve::ResponseCurve;
use crate::emor::{EmorBasis, EmorKind};
use crate::error::{Error, Result};

/// Largest monotonicity violation repaired silently during ingest.
pub const MONOTONICITY_REPAIR_TOL: f64 = 1e-4;

/// Loaded forward response curves plus lazily computed inverses.
#[derive(Debug)]
pub struct DorfDatabase {
    curves: Vec<ResponseCurve>,
    inverses: OnceLock<Vec<ResponseCurve>>,
    /// Names of records rejected during parsing, with reasons.
    pub rejected: Vec<String>,
}

impl DorfDatabase {
    /// Build from already-normalised forward curves.
    pub fn from_curves(curves: Vec<ResponseCurve>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::Config("response-curve database is empty".into()));
        }
        for curve in &curves {
            curve.check_normalised()?;
        }
        Ok(DorfDatabase {
            curves,
            inverses: OnceLock::new(),
            rejected: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn curves(&self) -> &[ResponseCurve] {
        &self.curves
    }

    pub fn curve(&self, index: usize) -> &ResponseCurve {
        &self.curves[index]
    }

    /// Inverse curves, computed once on first use. Infallible because the
    /// constructor enforces normalised (monotone, non-constant) curves.
    pub fn inverses(&self) -> &[ResponseCurve] {
        self.inverses.get_or_init(|| {
            self.curves
                .iter()
                .map(|c| c.inverted().expect("normalised curve is invertible"))
                .collect()
        })
    }

    pub fn inverse(&self, index: usize) -> &ResponseCurve {
        &self.inverses()[index]
    }
}

#[derive(Debug, PartialEq)]
enum Line<'a> {
    MarkerI,
    MarkerB,
    Numeric(&'a str),
    Text(&'a str),
}

fn classify(line: &str) -> Option<Line<'_>> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return None;
    }
    match trimmed {
        "I =" | "I=" => return Some(Line::MarkerI),
        "B =" | "B=" => return Some(Line::MarkerB),
        _ => {}
    }
    let numeric = trimmed
        .split_whitespace()
        .all(|tok| tok.parse::<f64>().is_ok());
    if numeric {
        Some(Line::Numeric(trimmed))
    } else {
        Some(Line::Text(trimmed))
    }
}

fn parse_floats(into: &mut Vec<f64>, line: &str) {
    into.extend(
        line.split_whitespace()
            .map(|tok| tok.parse::<f64>().expect("pre-classified numeric line")),
    );
}

/// Resample `(xs, ys)` onto `len` uniform abscissae over [0, 1] by linear
/// interpolation; pass-through when the axis is already the uniform grid.
fn resample_to_uniform(xs: &[f64], ys: &[f64], len: usize) -> Vec<f64> {
    let n = xs.len();
    let step = 1.0 / (n - 1) as f64;
    let uniform = xs
        .iter()
        .enumerate()
        .all(|(i, &x)| (x - i as f64 * step).abs() < 1e-9);
    if uniform && n == len {
        return ys.to_vec();
    }
    let out_step = 1.0 / (len - 1) as f64;
    let mut out = Vec::with_capacity(len);
    let mut seg = 0;
    for i in 0..len {
        let x = i as f64 * out_step;
        if x <= xs[0] {
            out.push(ys[0]);
            continue;
        }
        if x >= xs[n - 1] {
            out.push(ys[n - 1]);
            continue;
        }
        while xs[seg + 1] < x {
            seg += 1;
        }
        let span = xs[seg + 1] - xs[seg];
        let t = if span > 0.0 { (x - xs[seg]) / span } else { 0.0 };
        out.push(ys[seg] + t * (ys[seg + 1] - ys[seg]));
    }
    out
}

/// Parse the response-curve database text format.
///
/// Records failing monotonicity beyond the repair tolerance are skipped and
/// listed in [`DorfDatabase::rejected`]; structural damage (a truncated
/// record) is a hard error naming the record index.
pub fn parse_dorf(text: &str) -> Result<DorfDatabase> {
    let lines: Vec<Line> = text.lines().filter_map(classify).collect();
    let mut curves = Vec::new();
    let mut rejected = Vec::new();
    let mut i = 0;
    let mut block = 0;

    while i < lines.len() {
        block += 1;
        let name = match &lines[i] {
            Line::Text(t) => (*t).to_string(),
            other => {
                return Err(Error::Parse {
                    block,
                    reason: format!("expected record name line, found {other:?}"),
                })
            }
        };
        i += 1;
        match lines.get(i) {
            Some(Line::Text(_)) => i += 1,
            _ => {
                return Err(Error::Parse {
                    block,
                    reason: format!("record '{name}' is missing its info line"),
                })
            }
        }

        let mut irradiance = Vec::new();
        let mut brightness = Vec::new();
        match lines.get(i) {
            Some(Line::MarkerI) => {
                i += 1;
                while let Some(Line::Numeric(l)) = lines.get(i) {
                    parse_floats(&mut irradiance, l);
                    i += 1;
                }
                match lines.get(i) {
                    Some(Line::MarkerB) => i += 1,
                    _ => {
                        return Err(Error::Parse {
                            block,
                            reason: format!("record '{name}' truncated before brightness values"),
                        })
                    }
                }
                while let Some(Line::Numeric(l)) = lines.get(i) {
                    parse_floats(&mut brightness, l);
                    i += 1;
                }
            }
            Some(Line::Numeric(l)) => {
                // Compact layout: one line per axis, no markers.
                parse_floats(&mut irradiance, l);
                i += 1;
                match lines.get(i) {
                    Some(Line::Numeric(l)) => {
                        parse_floats(&mut brightness, l);
                        i += 1;
                    }
                    _ => {
                        return Err(Error::Parse {
                            block,
                            reason: format!("record '{name}' truncated before brightness values"),
                        })
                    }
                }
            }
            _ => {
                return Err(Error::Parse {
                    block,
                    reason: format!("record '{name}' has no sample values"),
                })
            }
        }

        if irradiance.len() != brightness.len() || irradiance.len() < 2 {
            return Err(Error::Parse {
                block,
                reason: format!(
                    "record '{name}' has {} irradiance but {} brightness values",
                    irradiance.len(),
                    brightness.len()
                ),
            });
        }
        if irradiance.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parse {
                block,
                reason: format!("record '{name}' has a non-ascending irradiance axis"),
            });
        }

        let len = brightness.len();
        let samples = resample_to_uniform(&irradiance, &brightness, len);
        let curve = match ResponseCurve::new(name.clone(), clamp_unit(samples)) {
            Ok(c) => c,
            Err(e) => {
                rejected.push(format!("{name}: {e}"));
                continue;
            }
        };
        match curve.normalised(MONOTONICITY_REPAIR_TOL) {
            Ok(c) => curves.push(c),
            Err(e) => rejected.push(format!("{name}: {e}")),
        }
    }

    if curves.is_empty() {
        return Err(Error::Parse {
            block: 0,
            reason: "no usable curves in input".into(),
        });
    }
    let mut db = DorfDatabase::from_curves(curves)?;
    db.rejected = rejected;
    Ok(db)
}

fn clamp_unit(samples: Vec<f64>) -> Vec<f64> {
    samples.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// Parse the curve-model text format into a mean curve plus eigenvectors.
///
/// Block names: `f0` (forward mean) or `g0` (inverse mean); `h(i)` or
/// `hinv(i)` eigenvectors ordered by index; `E`/`B` axis blocks are accepted
/// and used only to detect a non-uniform grid.
pub fn parse_emor(text: &str, kind: EmorKind) -> Result<EmorBasis> {
    let mut blocks: Vec<(String, Vec<f64>)> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let is_header = trimmed.ends_with('=')
            || (trimmed.contains('=') && {
                let (before, after) = trimmed.split_once('=').unwrap();
                !before.trim().is_empty()
                    && before.trim().parse::<f64>().is_err()
                    && after.trim().is_empty()
            });
        if is_header {
            let name = trimmed.trim_end_matches('=').trim().to_string();
            blocks.push((name, Vec::new()));
            continue;
        }
        let block_index = blocks.len();
        let Some((_, values)) = blocks.last_mut() else {
            return Err(Error::Parse {
                block: 0,
                reason: format!("values before any block header: '{trimmed}'"),
            });
        };
        for tok in trimmed.split_whitespace() {
            let v = tok.parse::<f64>().map_err(|_| Error::Parse {
                block: block_index,
                reason: format!("non-numeric token '{tok}'"),
            })?;
            values.push(v);
        }
    }
    if blocks.is_empty() {
        return Err(Error::Parse {
            block: 0,
            reason: "empty model stream".into(),
        });
    }

    let mut axis: Option<Vec<f64>> = None;
    let mut mean: Option<Vec<f64>> = None;
    let mut eigen: Vec<(usize, Vec<f64>)> = Vec::new();
    for (name, values) in blocks {
        let lower = name.to_ascii_lowercase();
        match lower.as_str() {
            "e" | "b" => axis = Some(values),
            "f0" | "g0" => mean = Some(values),
            _ => {
                let idx = lower
                    .trim_start_matches("hinv")
                    .trim_start_matches('h')
                    .trim_matches(|c| c == '(' || c == ')')
                    .parse::<usize>()
                    .map_err(|_| Error::Parse {
                        block: eigen.len() + 1,
                        reason: format!("unrecognised block name '{name}'"),
                    })?;
                eigen.push((idx, values));
            }
        }
    }

    let mean = mean.ok_or_else(|| Error::Parse {
        block: 0,
        reason: "missing mean-curve block (f0/g0)".into(),
    })?;
    let s = mean.len();
    if s < 2 {
        return Err(Error::Parse {
            block: 0,
            reason: "mean curve has fewer than 2 samples".into(),
        });
    }
    eigen.sort_by_key(|(idx, _)| *idx);
    let mut eigenvectors = Vec::with_capacity(eigen.len());
    for (_, ev) in eigen {
        if ev.len() != s {
            return Err(Error::DimensionMismatch {
                context: "eigenvector sample count",
                expected: s,
                actual: ev.len(),
            });
        }
        eigenvectors.push(ev);
    }

    let (mean, eigenvectors) = match axis {
        Some(ax) if ax.len() == s => {
            let mean = resample_to_uniform(&ax, &mean, s);
            let eigenvectors = eigenvectors
                .into_iter()
                .map(|ev| resample_to_uniform(&ax, &ev, s))
                .collect();
            (mean, eigenvectors)
        }
        _ => (mean, eigenvectors),
    };

    EmorBasis::new(kind, mean, eigenvectors)
}

/// Serialise curves to the artifact's JSON format: a list of
/// `{name, samples}` objects.
pub fn curves_to_json(curves: &[ResponseCurve]) -> serde_json::Result<String> {
    serde_json::to_string_pretty(curves)
}

pub fn curves_from_json(json: &str) -> serde_json::Result<Vec<ResponseCurve>> {
    serde_json::from_str(json)
}
