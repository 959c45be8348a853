//! Randomized equivalence campaign between the closed-form model and the
//! Fock-space oracle.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{visibility_general, BeamSplitter, InputSummary};
use crate::error::Result;
use crate::fock::{embed, oracle_g2, oracle_hom, oracle_mix, FockBudget, FockState};
use crate::noise::{mix_sources, MixAngle, SourceState};
use crate::temporal::{
    build_grid, mean_wavepacket_overlap, PhaseSpec, TemporalDensityMatrix, TimeGrid,
};

/// Agreement required between the two routes.
pub const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub instances: usize,
    pub seed: u64,
    /// Instances draw `n_bins` uniformly from `1..=max_bins`.
    pub max_bins: usize,
    pub budget: FockBudget,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            instances: 100,
            seed: 0,
            max_bins: 8,
            budget: FockBudget::default(),
        }
    }
}

/// One randomized instance. `analytic_v`/`oracle_v` compare the HOM
/// visibility of two vacuum + one-photon inputs; the `g2` fields compare the
/// mixed-source `g2`; `hbt_p34` is the same source split against vacuum at
/// 50:50, which must reproduce `g2`; `m_tot` compares the phased total overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub instance_seed: u64,
    pub n_bins: usize,
    pub reflectivity: f64,
    pub analytic_v: f64,
    pub oracle_v: f64,
    pub abs_diff: f64,
    pub analytic_g2: f64,
    pub oracle_g2: f64,
    pub g2_abs_diff: f64,
    pub hbt_p34: f64,
    pub hbt_abs_diff: f64,
    pub analytic_m_tot: f64,
    pub oracle_m_tot: f64,
    pub m_tot_abs_diff: f64,
    pub error: Option<String>,
}

impl OracleRecord {
    pub fn max_diff(&self) -> f64 {
        [
            self.abs_diff,
            self.g2_abs_diff,
            self.hbt_abs_diff,
            self.m_tot_abs_diff,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub config: CampaignConfig,
    pub max_abs_diff: f64,
    pub max_g2_abs_diff: f64,
    pub failures: usize,
    pub passed: bool,
    pub records: Vec<OracleRecord>,
}

/// Random normalized density wavefunction of random rank.
pub fn random_density(grid: TimeGrid, rng: &mut impl Rng) -> Result<TemporalDensityMatrix> {
    let n = grid.n_bins();
    let rank = rng.random_range(1..=n);
    let a = DMatrix::from_fn(n, rank, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    TemporalDensityMatrix::from_matrix(grid, &a * a.adjoint())?.normalize()
}

fn draw_splitter(rng: &mut impl Rng, index: usize) -> Result<BeamSplitter> {
    let phi = rng.random_range(-3.0..3.0);
    let r = match index % 25 {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random_range(0.0..=1.0),
    };
    BeamSplitter::new(r, phi)
}

fn run_instance(instance_seed: u64, index: usize, cfg: &CampaignConfig) -> OracleRecord {
    let mut rec = OracleRecord {
        instance_seed,
        n_bins: 0,
        reflectivity: f64::NAN,
        analytic_v: f64::NAN,
        oracle_v: f64::NAN,
        abs_diff: 0.0,
        analytic_g2: f64::NAN,
        oracle_g2: f64::NAN,
        g2_abs_diff: 0.0,
        hbt_p34: f64::NAN,
        hbt_abs_diff: 0.0,
        analytic_m_tot: f64::NAN,
        oracle_m_tot: f64::NAN,
        m_tot_abs_diff: 0.0,
        error: None,
    };
    if let Err(e) = fill_instance(&mut rec, index, cfg) {
        rec.error = Some(e.to_string());
    }
    rec
}

fn fill_instance(rec: &mut OracleRecord, index: usize, cfg: &CampaignConfig) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(rec.instance_seed);
    let n_bins = rng.random_range(1..=cfg.max_bins.max(1));
    rec.n_bins = n_bins;
    let span = rng.random_range(0.5..20.0);
    let grid = build_grid(0.0, span, n_bins)?;
    let phase = PhaseSpec::new(rng.random_range(-2.0..2.0) * n_bins as f64 / span)?;

    // HOM between two vacuum + one-photon inputs
    let xi_a = random_density(grid, &mut rng)?;
    let xi_b = random_density(grid, &mut rng)?;
    let p_a = rng.random_range(0.05..=1.0);
    let p_b = rng.random_range(0.05..=1.0);
    let bs = draw_splitter(&mut rng, index)?;
    rec.reflectivity = bs.reflectivity();
    let m12 = mean_wavepacket_overlap(&xi_a, &xi_b, phase)?;
    rec.analytic_v = visibility_general(
        InputSummary::new(p_a, 0.0)?,
        InputSummary::new(p_b, 0.0)?,
        m12,
        bs,
    )?;
    let a = embed(&SourceState::new(p_a, xi_a.with_phase(phase))?, cfg.budget)?;
    let b = embed(&SourceState::new(p_b, xi_b)?, cfg.budget)?;
    rec.oracle_v = oracle_hom(&a, &b, bs)?.v_hom;
    rec.abs_diff = (rec.analytic_v - rec.oracle_v).abs();

    // mixed source: g2, HBT route and total overlap
    let signal = SourceState::new(
        rng.random_range(0.05..=1.0),
        random_density(grid, &mut rng)?,
    )?;
    let noise = SourceState::new(
        rng.random_range(0.05..=1.0),
        random_density(grid, &mut rng)?,
    )?;
    let angle = MixAngle::new(rng.random_range(0.0..=FRAC_PI_2))?;
    let scalar = mix_sources(&signal, &noise, angle, phase)?;
    rec.analytic_g2 = scalar.g2;
    rec.analytic_m_tot = scalar.m_tot;

    let mixed = oracle_mix(&signal, &noise, angle, cfg.budget)?;
    rec.oracle_g2 = oracle_g2(&mixed)?;
    rec.g2_abs_diff = (rec.analytic_g2 - rec.oracle_g2).abs();

    let vacuum = FockState::vacuum(grid, cfg.budget)?;
    rec.hbt_p34 = oracle_hom(&mixed, &vacuum, BeamSplitter::balanced())?.p34;
    rec.hbt_abs_diff = (rec.analytic_g2 - rec.hbt_p34).abs();

    let phased_signal = SourceState::new(signal.p_one(), signal.one_photon().with_phase(phase))?;
    let phased = oracle_mix(&phased_signal, &noise, angle, cfg.budget)?;
    rec.oracle_m_tot = phased.total_overlap()?;
    rec.m_tot_abs_diff = (rec.analytic_m_tot - rec.oracle_m_tot).abs();
    Ok(())
}

/// Runs `cfg.instances` seeded instances; instance `i` uses seed `cfg.seed + i`.
pub fn run_campaign(cfg: CampaignConfig) -> OracleReport {
    let records: Vec<OracleRecord> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| run_instance(cfg.seed.wrapping_add(i as u64), i, &cfg))
        .collect();
    let max_abs_diff = records
        .iter()
        .map(OracleRecord::max_diff)
        .fold(0.0, f64::max);
    let max_g2_abs_diff = records
        .iter()
        .map(|r| r.g2_abs_diff.max(r.hbt_abs_diff))
        .fold(0.0, f64::max);
    let failures = records
        .iter()
        .filter(|r| r.error.is_some() || r.max_diff() > ORACLE_TOLERANCE)
        .count();
    log::info!(
        "oracle campaign: {} instances, {failures} failures, max diff {max_abs_diff:.2e}",
        cfg.instances
    );
    OracleReport {
        config: cfg,
        max_abs_diff,
        max_g2_abs_diff,
        failures,
        passed: failures == 0,
        records,
    }
}
