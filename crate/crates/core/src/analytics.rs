//! Closed-form HOM visibilities for imperfect sources.
//!
//! Everything here is a direct formula evaluation. The brute-force checks
//! live in [`crate::fock`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{HomError, Result};
use crate::temporal::csv_io;
use crate::warning::Warning;

/// Slack allowed on overlap and probability ranges for rounding.
const RANGE_TOL: f64 = 1e-9;

/// Lossless two-port beam splitter.
///
/// Outputs relate to inputs as `a3 = cos(theta) a1 - e^{-i phi} sin(theta) a2`
/// and `a4 = e^{i phi} sin(theta) a1 + cos(theta) a2`, with
/// `R = sin^2(theta)` and `T = cos^2(theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBeamSplitter")]
pub struct BeamSplitter {
    reflectivity: f64,
    transmittance: f64,
    phi: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBeamSplitter {
    reflectivity: f64,
    #[serde(default)]
    transmittance: Option<f64>,
    #[serde(default)]
    phi: f64,
}

impl TryFrom<RawBeamSplitter> for BeamSplitter {
    type Error = HomError;

    fn try_from(raw: RawBeamSplitter) -> Result<Self> {
        let bs = BeamSplitter::new(raw.reflectivity, raw.phi)?;
        if let Some(t) = raw.transmittance {
            if (t + raw.reflectivity - 1.0).abs() > 1e-12 {
                return Err(HomError::invalid("transmittance", "R + T must equal 1"));
            }
        }
        Ok(bs)
    }
}

impl BeamSplitter {
    pub fn new(reflectivity: f64, phi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&reflectivity) {
            return Err(HomError::invalid(
                "reflectivity",
                format!("must lie in [0, 1], got {reflectivity}"),
            ));
        }
        if !phi.is_finite() {
            return Err(HomError::invalid("phi", "must be finite"));
        }
        Ok(BeamSplitter {
            reflectivity,
            transmittance: 1.0 - reflectivity,
            phi,
        })
    }

    /// Beam splitter with mixing angle `theta`.
    pub fn from_angle(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(HomError::invalid("theta", "must be finite"));
        }
        let (s, c) = theta.sin_cos();
        let mut bs = BeamSplitter::new(s * s, phi)?;
        bs.transmittance = c * c;
        Ok(bs)
    }

    pub fn balanced() -> Self {
        BeamSplitter {
            reflectivity: 0.5,
            transmittance: 0.5,
            phi: 0.0,
        }
    }

    pub fn reflectivity(&self) -> f64 {
        self.reflectivity
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// `4 R T`, the prefactor shared by every visibility formula.
    pub fn four_rt(&self) -> f64 {
        4.0 * self.reflectivity * self.transmittance
    }
}

/// Mean photon number and `g2` of one interferometer input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub mu: f64,
    pub g2: f64,
}

impl InputSummary {
    pub fn new(mu: f64, g2: f64) -> Result<Self> {
        if !mu.is_finite() || mu <= 0.0 {
            return Err(HomError::invalid(
                "mu",
                format!("must be positive, got {mu}"),
            ));
        }
        if !g2.is_finite() || g2 < 0.0 {
            return Err(HomError::invalid(
                "g2",
                format!("must be non-negative, got {g2}"),
            ));
        }
        Ok(InputSummary { mu, g2 })
    }
}

/// One point of the `{g2(eta), V(eta)}` curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub eta: f64,
    pub g2: f64,
    pub v_hom: f64,
}

fn check_unit(name: &'static str, x: f64) -> Result<()> {
    if (-RANGE_TOL..=1.0 + RANGE_TOL).contains(&x) {
        Ok(())
    } else {
        Err(HomError::invalid(
            name,
            format!("must lie in [0, 1], got {x}"),
        ))
    }
}

fn check_g2(g2: f64) -> Result<()> {
    if !g2.is_finite() || g2 < 0.0 {
        return Err(HomError::invalid(
            "g2",
            format!("must be non-negative, got {g2}"),
        ));
    }
    if let Some(w) = Warning::check_g2(g2) {
        log::warn!("{w}");
    }
    Ok(())
}

/// HOM visibility of two unentangled inputs with arbitrary intensities.
pub fn visibility_general(
    in1: InputSummary,
    in2: InputSummary,
    m12: f64,
    bs: BeamSplitter,
) -> Result<f64> {
    let (r, t) = (bs.reflectivity, bs.transmittance);
    let denom = (t * in1.mu + r * in2.mu) * (t * in2.mu + r * in1.mu);
    if denom <= 0.0 {
        return Err(HomError::ZeroDenominator("visibility_general"));
    }
    let bracket = (1.0 - in1.g2) * in1.mu * in1.mu
        + 2.0 * m12 * in1.mu * in2.mu
        + (1.0 - in2.g2) * in2.mu * in2.mu;
    Ok(2.0 * r * t * bracket / denom - 1.0)
}

/// Equal-intensity inputs: `V = 4RT (M12 + 1 - g2_mean) - 1`.
pub fn visibility_balanced(m12: f64, g2_mean: f64, bs: BeamSplitter) -> Result<f64> {
    check_unit("m12", m12)?;
    check_g2(g2_mean)?;
    Ok(bs.four_rt() * (m12 + 1.0 - g2_mean) - 1.0)
}

/// Small-`g2` visibility of a separable-noise source.
pub fn visibility_separable(m_s: f64, m_sn: f64, g2: f64, bs: BeamSplitter) -> Result<f64> {
    check_unit("m_s", m_s)?;
    check_unit("m_sn", m_sn)?;
    check_g2(g2)?;
    if m_sn > m_s + RANGE_TOL {
        return Err(HomError::invalid(
            "m_sn",
            format!("must not exceed m_s ({m_sn} > {m_s})"),
        ));
    }
    Ok(separable_unchecked(m_s, m_sn, g2, bs))
}

pub(crate) fn separable_unchecked(m_s: f64, m_sn: f64, g2: f64, bs: BeamSplitter) -> f64 {
    bs.four_rt() * (1.0 + m_s - (1.0 + m_s) / (1.0 + m_sn) * g2) - 1.0
}

/// Limiting slope `dV/dg2` of the parametric curve as `eta -> 0`.
pub fn slope_at_origin(m_s: f64, m_sn: f64, m_sn_prime: f64, bs: BeamSplitter) -> Result<f64> {
    check_unit("m_s", m_s)?;
    check_unit("m_sn", m_sn)?;
    check_unit("m_sn_prime", m_sn_prime.abs())?;
    Ok(-bs.four_rt() * (1.0 + m_s + (m_sn - m_sn_prime)) / (1.0 + m_sn))
}

/// Evaluates `g2(eta)` and `V(eta)` at each noise parameter.
pub fn parametric_sweep(
    m_s: f64,
    m_n: f64,
    m_sn: f64,
    m_sn_prime: f64,
    bs: BeamSplitter,
    eta_values: &[f64],
) -> Result<Vec<SweepRecord>> {
    check_unit("m_s", m_s)?;
    check_unit("m_n", m_n)?;
    check_unit("m_sn", m_sn)?;
    check_unit("m_sn_prime", m_sn_prime.abs())?;
    eta_values
        .iter()
        .map(|&eta| {
            if !(0.0..=std::f64::consts::FRAC_PI_2 + RANGE_TOL).contains(&eta) {
                return Err(HomError::invalid(
                    "eta",
                    format!("must lie in [0, pi/2], got {eta}"),
                ));
            }
            let (s, c) = eta.sin_cos();
            let (c2, s2) = (c * c, s * s);
            let cross = c2 * s2;
            let v_hom = bs.four_rt()
                * (1.0 + m_s * c2 * c2 + m_n * s2 * s2 - 2.0 * (1.0 + m_sn - m_sn_prime) * cross)
                - 1.0;
            Ok(SweepRecord {
                eta,
                g2: 2.0 * (1.0 + m_sn) * cross,
                v_hom,
            })
        })
        .collect()
}

/// Intrinsic single-photon overlap from a measured `(V, g2)` pair, assuming
/// distinguishable noise.
pub fn extract_ms(v_hom: f64, g2: f64, bs: BeamSplitter) -> Result<f64> {
    extract_ms_with_overlap(v_hom, g2, 0.0, bs)
}

/// Inverts [`visibility_separable`] for `m_s` at a known, fixed `m_sn`.
pub fn extract_ms_with_overlap(v_hom: f64, g2: f64, m_sn: f64, bs: BeamSplitter) -> Result<f64> {
    check_g2(g2)?;
    check_unit("m_sn", m_sn)?;
    if g2 >= 1.0 {
        return Err(HomError::invalid(
            "g2",
            format!("must be below 1, got {g2}"),
        ));
    }
    let denom = bs.four_rt() * (1.0 - g2 / (1.0 + m_sn));
    if denom <= 0.0 {
        return Err(HomError::ZeroDenominator("extract_ms"));
    }
    Ok((v_hom + 1.0 - denom) / denom)
}

/// [`extract_ms_with_overlap`] with first-order propagation of independent
/// errors on `V` and `g2`. Returns `(m_s, sigma)`.
pub fn extract_ms_with_sigma(
    v_hom: f64,
    v_sigma: f64,
    g2: f64,
    g2_sigma: f64,
    m_sn: f64,
    bs: BeamSplitter,
) -> Result<(f64, f64)> {
    if !(v_sigma >= 0.0 && g2_sigma >= 0.0) {
        return Err(HomError::invalid(
            "sigma",
            "uncertainties must be non-negative",
        ));
    }
    let m_s = extract_ms_with_overlap(v_hom, g2, m_sn, bs)?;
    let denom = bs.four_rt() * (1.0 - g2 / (1.0 + m_sn));
    let d_v = 1.0 / denom;
    let d_g = (v_hom + 1.0) * bs.four_rt() / ((1.0 + m_sn) * denom * denom);
    Ok((m_s, (d_v * v_sigma).hypot(d_g * g2_sigma)))
}

/// Writes records as CSV with columns `eta_rad,g2,v_hom`.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["eta_rad", "g2", "v_hom"]).map_err(csv_io)?;
    for r in records {
        w.write_record([r.eta.to_string(), r.g2.to_string(), r.v_hom.to_string()])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}
