//! Hong-Ou-Mandel interference with imperfect single-photon sources.
//!
//! - [`temporal`]: one-photon states as discretized density wavefunctions.
//! - [`noise`]: mixing a signal photon with weak noise.
//! - [`analytics`]: closed-form visibility, `g2` sweeps and `m_s` extraction.
//! - [`fock`]: brute-force few-photon oracle; [`campaign`] cross-checks it
//!   against the closed forms.
//! - [`histogram`] and [`fit`]: the measurement side.

pub mod analytics;
pub mod campaign;
pub mod error;
pub mod fit;
pub mod fock;
pub mod histogram;
pub mod noise;
pub mod temporal;
pub mod warning;

pub use analytics::{
    extract_ms, extract_ms_with_overlap, extract_ms_with_sigma, parametric_sweep, slope_at_origin,
    visibility_balanced, visibility_general, visibility_separable, BeamSplitter, InputSummary,
    SweepRecord,
};
pub use campaign::{run_campaign, CampaignConfig, OracleRecord, OracleReport, ORACLE_TOLERANCE};
pub use error::{ErrorKind, HomError, Result};
pub use fit::{bound_ms, fit, synthesize_dataset, DataPoint, FitResult, ModelKind, NoiseModel};
pub use fock::{
    apply_loss, beam_split, embed, oracle_g2, oracle_hom, oracle_mix, CoincidenceResult,
    FockBudget, FockState,
};
pub use histogram::{
    analyze_histogram, g2_from_histogram, ingest_histogram, integrate_peaks, vhom_from_histogram,
    Histogram, HistogramReport, PeakAreas, RepRateConfig,
};
pub use noise::{mix_sources, ImperfectSource, MixAngle, Overlaps, SourceState};
pub use temporal::{
    build_grid, make_exciton_beat, make_exponential, make_gaussian_pulse, mean_wavepacket_overlap,
    PhaseSpec, TemporalDensityMatrix, TimeGrid,
};
pub use warning::Warning;
