//! Separable-noise source model.
//!
//! An ideal single photon and a weak noise field (at most one photon) enter
//! the two ports of a beam splitter with angle `theta_mix`; the reflected
//! port is discarded. The transmitted field is summarized by its
//! photon-number distribution, `g2`, the total mean wavepacket overlap and
//! the noise parameter `eta`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{HomError, Result};
use crate::temporal::{mean_wavepacket_overlap, PhaseSpec, TemporalDensityMatrix};
use crate::warning::Warning;

const PROB_TOL: f64 = 1e-12;

/// Vacuum plus one-photon description of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceState {
    p_vac: f64,
    p_one: f64,
    one_photon: TemporalDensityMatrix,
}

impl SourceState {
    pub fn new(p_one: f64, one_photon: TemporalDensityMatrix) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_one) {
            return Err(HomError::invalid(
                "p_one",
                format!("must lie in [0, 1], got {p_one}"),
            ));
        }
        Ok(SourceState {
            p_vac: 1.0 - p_one,
            p_one,
            one_photon,
        })
    }

    /// Deterministic single photon.
    pub fn single_photon(one_photon: TemporalDensityMatrix) -> Self {
        SourceState {
            p_vac: 0.0,
            p_one: 1.0,
            one_photon,
        }
    }

    pub fn p_vac(&self) -> f64 {
        self.p_vac
    }

    pub fn p_one(&self) -> f64 {
        self.p_one
    }

    pub fn one_photon(&self) -> &TemporalDensityMatrix {
        &self.one_photon
    }
}

/// Mixing beam splitter angle, `0 <= theta_mix <= pi/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixAngle(f64);

impl MixAngle {
    pub fn new(theta_mix: f64) -> Result<Self> {
        if !(0.0..=FRAC_PI_2).contains(&theta_mix) {
            return Err(HomError::invalid(
                "theta_mix",
                format!("must lie in [0, pi/2], got {theta_mix}"),
            ));
        }
        Ok(MixAngle(theta_mix))
    }

    pub fn radians(&self) -> f64 {
        self.0
    }
}

/// Wavepacket overlaps entering the mixed-source formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlaps {
    pub m_s: f64,
    pub m_n: f64,
    pub m_sn: f64,
    pub m_sn_prime: f64,
}

impl Overlaps {
    pub fn compute(
        signal: &TemporalDensityMatrix,
        noise: &TemporalDensityMatrix,
        phase: PhaseSpec,
    ) -> Result<Self> {
        Ok(Overlaps {
            m_s: signal.trace_purity()?,
            m_n: noise.trace_purity()?,
            m_sn: mean_wavepacket_overlap(signal, noise, PhaseSpec::zero())?,
            m_sn_prime: mean_wavepacket_overlap(signal, noise, phase)?,
        })
    }
}

/// Transmitted field of the noise-mixing beam splitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImperfectSource {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub mu: f64,
    pub g2: f64,
    pub m_tot: f64,
    pub eta: f64,
    pub m_s: f64,
    pub m_n: f64,
    pub m_sn: f64,
    pub m_sn_prime: f64,
    #[serde(default)]
    pub warnings: Vec<Warning>,
}

/// Mixes `signal` and `noise` on a beam splitter of angle `angle`.
///
/// `phase` is the relative propagation phase of the signal with respect to
/// the noise; it enters `m_tot` through `m_sn_prime` only.
pub fn mix_sources(
    signal: &SourceState,
    noise: &SourceState,
    angle: MixAngle,
    phase: PhaseSpec,
) -> Result<ImperfectSource> {
    let overlaps = Overlaps::compute(&signal.one_photon, &noise.one_photon, phase)?;
    mix_from_overlaps(signal.p_one, noise.p_one, angle, overlaps)
}

/// Scalar core of [`mix_sources`], for callers that already know the overlaps.
pub fn mix_from_overlaps(
    p_s1: f64,
    p_n1: f64,
    angle: MixAngle,
    overlaps: Overlaps,
) -> Result<ImperfectSource> {
    check_prob("p_s1", p_s1)?;
    check_prob("p_n1", p_n1)?;
    let (s, c) = angle.radians().sin_cos();
    let (c2, s2) = (c * c, s * s);
    let w_s = p_s1 * c2;
    let w_n = p_n1 * s2;
    let mu = w_s + w_n;
    if mu <= 0.0 {
        return Err(HomError::ZeroMeanPhotonNumber);
    }

    // Photon-number distribution of the transmitted port. Both photons are
    // transmitted with probability c2 s2 (1 + M_sn).
    let both = p_s1 * p_n1;
    let p2 = both * c2 * s2 * (1.0 + overlaps.m_sn);
    let p1 = p_s1 * (1.0 - p_n1) * c2
        + (1.0 - p_s1) * p_n1 * s2
        + both * (1.0 - 2.0 * c2 * s2 * (1.0 + overlaps.m_sn));
    let p0 = 1.0 - p1 - p2;

    let g2 = 2.0 * p2 / (mu * mu);
    let m_tot = (w_s * w_s * overlaps.m_s
        + w_n * w_n * overlaps.m_n
        + 2.0 * w_s * w_n * overlaps.m_sn_prime)
        / (mu * mu);
    let eta = eta_of(p_s1, p_n1, angle)?;

    let mut warnings = Vec::new();
    if let Some(w) = Warning::check_g2(g2) {
        log::debug!("{w}");
        warnings.push(w);
    }
    if overlaps.m_sn > overlaps.m_s + 1e-12 {
        warnings.push(Warning::OverlapExceedsPurity {
            m_sn: overlaps.m_sn,
            m_s: overlaps.m_s,
        });
    }

    Ok(ImperfectSource {
        p0,
        p1,
        p2,
        mu,
        g2,
        m_tot,
        eta,
        m_s: overlaps.m_s,
        m_n: overlaps.m_n,
        m_sn: overlaps.m_sn,
        m_sn_prime: overlaps.m_sn_prime,
        warnings,
    })
}

/// Noise parameter: `cos^2(eta) = p_s1 cos^2(theta) / mu`.
pub fn eta_of(p_s1: f64, p_n1: f64, angle: MixAngle) -> Result<f64> {
    check_prob("p_s1", p_s1)?;
    check_prob("p_n1", p_n1)?;
    let (s, c) = angle.radians().sin_cos();
    let w_s = p_s1 * c * c;
    let w_n = p_n1 * s * s;
    if w_s + w_n <= 0.0 {
        return Err(HomError::ZeroMeanPhotonNumber);
    }
    Ok(w_n.sqrt().atan2(w_s.sqrt()))
}

fn check_prob(name: &'static str, p: f64) -> Result<()> {
    if (-PROB_TOL..=1.0 + PROB_TOL).contains(&p) {
        Ok(())
    } else {
        Err(HomError::invalid(
            name,
            format!("must lie in [0, 1], got {p}"),
        ))
    }
}
