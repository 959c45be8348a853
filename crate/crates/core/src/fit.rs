//! Weighted single-parameter fits of `(g2, V)` data for the signal overlap.
//!
//! Under every supported noise model the separable visibility is affine in
//! `m_s` at fixed `g2`, `V = a(g2) m_s + b(g2)`, so the fit is closed-form
//! weighted least squares. Errors on `g2` enter through the effective
//! variance `v_sigma^2 + (dV/dg2)^2 g2_sigma^2`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analytics::{separable_unchecked, BeamSplitter};
use crate::error::{HomError, Result};
use crate::temporal::csv_io;
use crate::warning::Warning;

/// Floor on `v_sigma` for noiseless synthetic data.
pub const SIGMA_FLOOR: f64 = 1e-6;

const MAX_REWEIGHT: usize = 100;

/// One measured point; columns of the dataset CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub g2: f64,
    pub g2_sigma: f64,
    pub v: f64,
    pub v_sigma: f64,
}

impl DataPoint {
    pub fn new(g2: f64, g2_sigma: f64, v: f64, v_sigma: f64) -> Result<Self> {
        DataPoint {
            g2,
            g2_sigma,
            v,
            v_sigma,
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        if !self.g2.is_finite() || self.g2 < 0.0 {
            return Err(HomError::invalid(
                "g2",
                format!("must be non-negative, got {}", self.g2),
            ));
        }
        if !self.g2_sigma.is_finite() || self.g2_sigma < 0.0 {
            return Err(HomError::invalid("g2_sigma", "must be non-negative"));
        }
        if !(-1.0..=1.0).contains(&self.v) {
            return Err(HomError::invalid(
                "v",
                format!("must lie in [-1, 1], got {}", self.v),
            ));
        }
        if !self.v_sigma.is_finite() || self.v_sigma <= 0.0 {
            return Err(HomError::invalid("v_sigma", "must be positive"));
        }
        Ok(self)
    }
}

/// Rule tying the signal-noise overlap to the fitted `m_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `m_sn = 0`
    Distinguishable,
    /// `m_sn = m_s`
    Identical,
    FixedOverlap {
        m_sn: f64,
    },
}

impl FromStr for ModelKind {
    type Err = HomError;

    /// Accepts `distinguishable`, `identical` or `fixed:<m_sn>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distinguishable" => Ok(ModelKind::Distinguishable),
            "identical" => Ok(ModelKind::Identical),
            _ => {
                let m = s
                    .strip_prefix("fixed:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        HomError::invalid(
                            "model",
                            format!(
                                "expected distinguishable, identical or fixed:<m_sn>, got `{s}`"
                            ),
                        )
                    })?;
                ModelKind::FixedOverlap { m_sn: m }.validated()
            }
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Distinguishable => f.write_str("distinguishable"),
            ModelKind::Identical => f.write_str("identical"),
            ModelKind::FixedOverlap { m_sn } => write!(f, "fixed:{m_sn}"),
        }
    }
}

impl ModelKind {
    fn validated(self) -> Result<Self> {
        if let ModelKind::FixedOverlap { m_sn } = self {
            if !(0.0..=1.0).contains(&m_sn) {
                return Err(HomError::invalid(
                    "m_sn",
                    format!("must lie in [0, 1], got {m_sn}"),
                ));
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub bs: BeamSplitter,
}

impl NoiseModel {
    pub fn new(kind: ModelKind, bs: BeamSplitter) -> Result<Self> {
        Ok(NoiseModel {
            kind: kind.validated()?,
            bs,
        })
    }

    pub fn distinguishable(bs: BeamSplitter) -> Self {
        NoiseModel {
            kind: ModelKind::Distinguishable,
            bs,
        }
    }

    pub fn identical(bs: BeamSplitter) -> Self {
        NoiseModel {
            kind: ModelKind::Identical,
            bs,
        }
    }

    fn m_sn(&self, m_s: f64) -> f64 {
        match self.kind {
            ModelKind::Distinguishable => 0.0,
            ModelKind::Identical => m_s,
            ModelKind::FixedOverlap { m_sn } => m_sn,
        }
    }

    /// Model visibility at `(m_s, g2)`.
    pub fn visibility(&self, m_s: f64, g2: f64) -> f64 {
        separable_unchecked(m_s, self.m_sn(m_s), g2, self.bs)
    }

    /// `(a, b)` with `V = a m_s + b`.
    fn affine(&self, g2: f64) -> (f64, f64) {
        let k = self.bs.four_rt();
        match self.kind {
            ModelKind::Identical => (k, k * (1.0 - g2) - 1.0),
            _ => {
                let a = k * (1.0 - g2 / (1.0 + self.m_sn(0.0)));
                (a, a - 1.0)
            }
        }
    }

    /// `dV/dg2` at fixed `m_s`.
    fn g2_slope(&self, m_s: f64) -> f64 {
        let k = self.bs.four_rt();
        match self.kind {
            ModelKind::Identical => -k,
            _ => -k * (1.0 + m_s) / (1.0 + self.m_sn(0.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub m_s: f64,
    pub m_s_sigma: f64,
    pub chi2: f64,
    pub dof: usize,
    pub model: NoiseModel,
    /// Least-squares optimum before clamping to `[0, 1]`.
    pub m_s_unconstrained: f64,
    pub at_boundary: bool,
    pub warnings: Vec<Warning>,
}

struct Sums {
    m: f64,
    sigma: f64,
}

fn solve(points: &[DataPoint], model: &NoiseModel, weights: &[f64]) -> Result<Sums> {
    let (mut saa, mut say) = (0.0, 0.0);
    for (p, w) in points.iter().zip(weights) {
        let (a, b) = model.affine(p.g2);
        saa += w * a * a;
        say += w * a * (p.v - b);
    }
    if !saa.is_finite() || saa <= 0.0 {
        return Err(HomError::Fit(
            "singular normal equation: data do not constrain m_s".into(),
        ));
    }
    Ok(Sums {
        m: say / saa,
        sigma: saa.sqrt().recip(),
    })
}

fn weights_at(points: &[DataPoint], model: &NoiseModel, m_s: f64) -> Vec<f64> {
    let slope = model.g2_slope(m_s);
    points
        .iter()
        .map(|p| 1.0 / (p.v_sigma * p.v_sigma + slope * slope * p.g2_sigma * p.g2_sigma))
        .collect()
}

/// Weighted least-squares estimate of `m_s`; the uncertainty is the
/// `chi2 + 1` half-width.
pub fn fit(points: &[DataPoint], model: NoiseModel) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(HomError::Fit(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    for p in points {
        p.validated()?;
    }
    let model = NoiseModel::new(model.kind, model.bs)?;

    let mut weights: Vec<f64> = points.iter().map(|p| p.v_sigma.powi(-2)).collect();
    let mut sums = solve(points, &model, &weights)?;
    if points.iter().any(|p| p.g2_sigma > 0.0) {
        for _ in 0..MAX_REWEIGHT {
            weights = weights_at(points, &model, sums.m.clamp(0.0, 1.0));
            let next = solve(points, &model, &weights)?;
            let done = (next.m - sums.m).abs() <= 1e-14 * (1.0 + sums.m.abs());
            sums = next;
            if done {
                break;
            }
        }
    }

    let unconstrained = sums.m;
    let m_s = unconstrained.clamp(0.0, 1.0);
    let at_boundary = m_s != unconstrained;
    let chi2 = points
        .iter()
        .zip(&weights)
        .map(|(p, w)| {
            let r = p.v - model.visibility(m_s, p.g2);
            w * r * r
        })
        .sum();
    let mut warnings = Vec::new();
    if at_boundary {
        let w = Warning::ClampedToBoundary {
            value: unconstrained,
        };
        log::warn!("{w}");
        warnings.push(w);
    }
    Ok(FitResult {
        m_s,
        m_s_sigma: sums.sigma,
        chi2,
        dof: points.len() - 1,
        model,
        m_s_unconstrained: unconstrained,
        at_boundary,
        warnings,
    })
}

/// `(lower, upper)`: the identical-noise fit and the distinguishable-noise fit.
pub fn bound_ms(points: &[DataPoint], bs: BeamSplitter) -> Result<(FitResult, FitResult)> {
    Ok((
        fit(points, NoiseModel::identical(bs))?,
        fit(points, NoiseModel::distinguishable(bs))?,
    ))
}

/// Points on the model line plus Gaussian noise of width `noise_sigma`.
pub fn synthesize_dataset(
    m_s: f64,
    model: NoiseModel,
    g2_values: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<DataPoint>> {
    if !(0.0..=1.0).contains(&m_s) {
        return Err(HomError::invalid(
            "m_s",
            format!("must lie in [0, 1], got {m_s}"),
        ));
    }
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(HomError::invalid("noise_sigma", "must be non-negative"));
    }
    let model = NoiseModel::new(model.kind, model.bs)?;
    let normal = Normal::new(0.0, noise_sigma)
        .map_err(|e| HomError::invalid("noise_sigma", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    g2_values
        .iter()
        .map(|&g2| {
            if !g2.is_finite() || g2 < 0.0 {
                return Err(HomError::invalid(
                    "g2",
                    format!("must be non-negative, got {g2}"),
                ));
            }
            let noise = if noise_sigma > 0.0 {
                normal.sample(&mut rng)
            } else {
                0.0
            };
            Ok(DataPoint {
                g2,
                g2_sigma: 0.0,
                v: model.visibility(m_s, g2) + noise,
                v_sigma: noise_sigma.max(SIGMA_FLOOR),
            })
        })
        .collect()
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<DataPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<DataPoint>().enumerate() {
        let line = i as u64 + 2;
        let p = row.map_err(|e| HomError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(line),
            message: e.to_string(),
        })?;
        out.push(p.validated().map_err(|e| HomError::Parse {
            line,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_dataset<W: Write>(points: &[DataPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::extract_ms;
    use approx::assert_abs_diff_eq;

    fn g2_grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.01 + 0.2 * i as f64 / n as f64).collect()
    }

    #[test]
    fn noiseless_identical_roundtrip() {
        let bs = BeamSplitter::balanced();
        let pts =
            synthesize_dataset(0.89, NoiseModel::identical(bs), &g2_grid(20), 0.0, 1).unwrap();
        for p in &pts {
            assert_abs_diff_eq!(p.v, 0.89 - p.g2, epsilon = 1e-15);
        }
        let r = fit(&pts, NoiseModel::identical(bs)).unwrap();
        assert_abs_diff_eq!(r.m_s, 0.89, epsilon = 1e-10);
        assert!(r.chi2 < 1e-12);
        assert_eq!(r.dof, 19);
        assert!(!r.at_boundary);
    }

    #[test]
    fn noiseless_distinguishable_roundtrip() {
        let bs = BeamSplitter::balanced();
        let pts = synthesize_dataset(0.94, NoiseModel::distinguishable(bs), &g2_grid(20), 0.0, 1)
            .unwrap();
        for p in &pts {
            assert_abs_diff_eq!(p.v, 0.94 - 1.94 * p.g2, epsilon = 1e-14);
        }
        let r = fit(&pts, NoiseModel::distinguishable(bs)).unwrap();
        assert_abs_diff_eq!(r.m_s, 0.94, epsilon = 1e-10);
    }

    #[test]
    fn single_point_matches_extraction() {
        let bs = BeamSplitter::balanced();
        let p = DataPoint::new(0.05, 0.0, 0.824, 0.01).unwrap();
        let r = fit(&[p, p], NoiseModel::distinguishable(bs)).unwrap();
        assert_abs_diff_eq!(r.m_s, 0.92, epsilon = 1e-12);
        assert_abs_diff_eq!(r.m_s, extract_ms(0.824, 0.05, bs).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn fixed_overlap_model() {
        let bs = BeamSplitter::new(0.45, 0.0).unwrap();
        let model = NoiseModel::new(ModelKind::FixedOverlap { m_sn: 0.3 }, bs).unwrap();
        let pts = synthesize_dataset(0.8, model, &g2_grid(10), 0.0, 0).unwrap();
        assert_abs_diff_eq!(fit(&pts, model).unwrap().m_s, 0.8, epsilon = 1e-10);
    }

    #[test]
    fn bounds_are_ordered() {
        let bs = BeamSplitter::balanced();
        let pts = synthesize_dataset(0.94, NoiseModel::distinguishable(bs), &g2_grid(30), 0.0, 3)
            .unwrap();
        let (lower, upper) = bound_ms(&pts, bs).unwrap();
        assert_abs_diff_eq!(upper.m_s, 0.94, epsilon = 1e-10);
        assert!(lower.m_s < 0.94);
    }

    #[test]
    fn models_coincide_at_zero_g2() {
        let bs = BeamSplitter::balanced();
        let pts = vec![DataPoint::new(0.0, 0.0, 0.9, 0.01).unwrap(); 3];
        let (lower, upper) = bound_ms(&pts, bs).unwrap();
        assert_abs_diff_eq!(lower.m_s, upper.m_s, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let bs = BeamSplitter::balanced();
        assert!(fit(&[], NoiseModel::identical(bs)).is_err());
        assert!(bound_ms(&[], bs).is_err());
        let bad = DataPoint {
            g2: 0.1,
            g2_sigma: 0.0,
            v: 0.5,
            v_sigma: 0.0,
        };
        assert!(fit(&[bad, bad], NoiseModel::identical(bs)).is_err());
        // R = 0 gives a zero design vector
        let dark = BeamSplitter::new(0.0, 0.0).unwrap();
        let p = DataPoint::new(0.1, 0.0, -1.0, 0.01).unwrap();
        assert!(matches!(
            fit(&[p, p], NoiseModel::identical(dark)),
            Err(HomError::Fit(_))
        ));
    }

    #[test]
    fn clamps_with_warning() {
        let bs = BeamSplitter::balanced();
        let p = DataPoint::new(0.0, 0.0, 1.0, 0.01).unwrap();
        let q = DataPoint::new(0.01, 0.0, 1.0, 0.01).unwrap();
        let r = fit(&[p, q], NoiseModel::distinguishable(bs)).unwrap();
        assert_eq!(r.m_s, 1.0);
        assert!(r.at_boundary);
        assert!(r.m_s_unconstrained > 1.0);
        assert!(matches!(r.warnings[0], Warning::ClampedToBoundary { .. }));
    }

    #[test]
    fn g2_errors_widen_sigma() {
        let bs = BeamSplitter::balanced();
        let pts = synthesize_dataset(0.9, NoiseModel::distinguishable(bs), &g2_grid(10), 0.01, 5)
            .unwrap();
        let plain = fit(&pts, NoiseModel::distinguishable(bs)).unwrap();
        let with_g: Vec<_> = pts
            .iter()
            .map(|p| DataPoint {
                g2_sigma: 0.01,
                ..*p
            })
            .collect();
        let wide = fit(&with_g, NoiseModel::distinguishable(bs)).unwrap();
        assert!(wide.m_s_sigma > plain.m_s_sigma);
    }

    #[test]
    fn synthesis_is_seeded() {
        let bs = BeamSplitter::balanced();
        let m = NoiseModel::identical(bs);
        let a = synthesize_dataset(0.9, m, &g2_grid(10), 0.01, 42).unwrap();
        assert_eq!(
            a,
            synthesize_dataset(0.9, m, &g2_grid(10), 0.01, 42).unwrap()
        );
        assert_ne!(
            a,
            synthesize_dataset(0.9, m, &g2_grid(10), 0.01, 43).unwrap()
        );
    }

    #[test]
    fn model_parsing() {
        assert_eq!(
            "identical".parse::<ModelKind>().unwrap(),
            ModelKind::Identical
        );
        assert_eq!(
            "fixed:0.25".parse::<ModelKind>().unwrap(),
            ModelKind::FixedOverlap { m_sn: 0.25 }
        );
        assert!("fixed:1.5".parse::<ModelKind>().is_err());
        assert!("other".parse::<ModelKind>().is_err());
        let kind = ModelKind::FixedOverlap { m_sn: 0.5 };
        assert_eq!(kind.to_string().parse::<ModelKind>().unwrap(), kind);
    }

    #[test]
    fn dataset_csv_round_trip() {
        let bs = BeamSplitter::balanced();
        let pts = synthesize_dataset(0.9, NoiseModel::identical(bs), &g2_grid(5), 0.02, 9).unwrap();
        let mut buf = Vec::new();
        write_dataset(&pts, &mut buf).unwrap();
        assert!(buf.starts_with(b"g2,g2_sigma,v,v_sigma\n"));
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), pts);
        assert!(matches!(
            read_dataset("g2,g2_sigma,v,v_sigma\n0.1,0,0.5,0\n".as_bytes()),
            Err(HomError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn model_json_shape() {
        let m = NoiseModel::new(
            ModelKind::FixedOverlap { m_sn: 0.2 },
            BeamSplitter::balanced(),
        )
        .unwrap();
        let json = serde_json::to_value(m).unwrap();
        assert_eq!(json["kind"], "fixed_overlap");
        assert_eq!(json["m_sn"], 0.2);
        let back: NoiseModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);
    }
}
