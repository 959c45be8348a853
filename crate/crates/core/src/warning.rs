use std::fmt;

use serde::{Deserialize, Serialize};

/// `g2` above which the weak-noise approximation is flagged.
pub const G2_VALIDITY_LIMIT: f64 = 0.3;

/// Non-fatal conditions attached to results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// The one-extra-photon noise model is only trustworthy for small `g2`.
    HighG2 { g2: f64 },
    /// The signal-noise overlap exceeds the signal purity.
    OverlapExceedsPurity { m_sn: f64, m_s: f64 },
    /// A fitted parameter was clamped to its physical range.
    ClampedToBoundary { value: f64 },
}

impl Warning {
    pub fn check_g2(g2: f64) -> Option<Warning> {
        (g2 > G2_VALIDITY_LIMIT).then_some(Warning::HighG2 { g2 })
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::HighG2 { g2 } => write!(
                f,
                "g2 = {g2:.4} exceeds {G2_VALIDITY_LIMIT}; weak-noise model may be inaccurate"
            ),
            Warning::OverlapExceedsPurity { m_sn, m_s } => {
                write!(
                    f,
                    "signal-noise overlap {m_sn:.4} exceeds signal purity {m_s:.4}"
                )
            }
            Warning::ClampedToBoundary { value } => {
                write!(f, "unconstrained estimate {value:.6} clamped to [0, 1]")
            }
        }
    }
}
