//! One function per subcommand. Each takes its merged parameter set and
//! returns a JSON report; file side effects go to `ctx.output_dir`.

use std::path::{Path, PathBuf};

use clap::Args;
use hom_core::analytics::{extract_ms_with_sigma, parametric_sweep, slope_at_origin, BeamSplitter};
use hom_core::campaign::{run_campaign, CampaignConfig};
use hom_core::fit::{bound_ms, fit, read_dataset, ModelKind, NoiseModel};
use hom_core::fock::FockBudget;
use hom_core::histogram::{
    analyze_histogram, ingest_histogram_file, HistogramReport, RepRateConfig,
};
use hom_core::noise::{mix_from_overlaps, mix_sources, MixAngle, Overlaps, SourceState};
use hom_core::temporal::{
    build_grid, make_exciton_beat, make_exponential, make_gaussian_pulse, mean_wavepacket_overlap,
    PhaseSpec, TemporalDensityMatrix, DEFAULT_EXCITON_GAMMA, DEFAULT_FSS_RATE, HBAR_EV_PS,
};
use hom_core::Warning;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::output::write_text;

/// Settings shared by all commands.
#[derive(Debug, Clone)]
pub struct Context {
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for Context {
    fn default() -> Self {
        Context {
            output_dir: PathBuf::from("."),
            seed: 0,
        }
    }
}

type CmdResult = Result<Value, CliError>;

fn to_value<T: Serialize>(v: &T) -> CmdResult {
    serde_json::to_value(v).map_err(|e| CliError::numerical(e.to_string()))
}

fn require<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::validation(format!("missing required parameter `{name}`")))
}

fn splitter(reflectivity: Option<f64>, phi: Option<f64>) -> Result<BeamSplitter, CliError> {
    Ok(BeamSplitter::new(
        reflectivity.unwrap_or(0.5),
        phi.unwrap_or(0.0),
    )?)
}

fn read_xi(path: &Path) -> Result<TemporalDensityMatrix, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    TemporalDensityMatrix::from_json(&text).map_err(|e| CliError::from(e).context(path.display()))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum WavepacketModel {
    /// Monoexponential decay with rate `gamma`.
    Exponential,
    /// Monoexponential decay, 170 ps lifetime unless overridden.
    Trion,
    /// Cross-polarized exciton with fine-structure beats.
    Exciton,
    /// Transform-limited Gaussian pulse.
    Gaussian,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: Option<WavepacketModel>,
    /// Decay rate in 1/ps.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Radiative lifetime in ps; alternative to --gamma.
    #[arg(long)]
    pub lifetime: Option<f64>,
    /// Pure-dephasing rate in 1/ps.
    #[arg(long)]
    pub gamma_dephasing: Option<f64>,
    /// Fine-structure beat rate in rad/ps.
    #[arg(long)]
    pub fss_rate: Option<f64>,
    /// Fine-structure splitting in ueV; alternative to --fss-rate.
    #[arg(long)]
    pub fss_uev: Option<f64>,
    /// Gaussian pulse center in ps.
    #[arg(long)]
    pub center: Option<f64>,
    /// Gaussian intensity FWHM in ps.
    #[arg(long)]
    pub fwhm: Option<f64>,
    #[arg(long)]
    pub t_start: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub n_bins: Option<usize>,
}

fn decay_rate(args: &ModelArgs, default_lifetime: Option<f64>) -> Result<f64, CliError> {
    match (args.gamma, args.lifetime) {
        (Some(_), Some(_)) => Err(CliError::validation(
            "give either gamma or lifetime, not both",
        )),
        (Some(g), None) => Ok(g),
        (None, Some(l)) if l > 0.0 && l.is_finite() => Ok(1.0 / l),
        (None, Some(l)) => Err(CliError::validation(format!(
            "invalid parameter `lifetime`: must be positive, got {l}"
        ))),
        (None, None) => default_lifetime
            .map(|l| 1.0 / l)
            .ok_or_else(|| CliError::validation("missing required parameter `gamma`")),
    }
}

/// Builds a wavepacket, writes `xi.json` and `trace.csv`.
pub fn cmd_model(args: &ModelArgs, ctx: &Context) -> CmdResult {
    let model = require(args.model, "model")?;
    let n_bins = args.n_bins.unwrap_or(512);
    let dephasing = args.gamma_dephasing.unwrap_or(0.0);
    // emitters span 12 lifetimes, pulses 4 FWHM either side
    let span = |start: f64, rate: f64| {
        let rate = if rate > 0.0 { rate } else { 1.0 };
        (
            args.t_start.unwrap_or(start),
            args.t_end.unwrap_or(start + 12.0 / rate),
        )
    };
    let (xi, params) = match model {
        WavepacketModel::Exponential | WavepacketModel::Trion => {
            let default = (model == WavepacketModel::Trion).then_some(170.0);
            let gamma = decay_rate(args, default)?;
            let (t0, t1) = span(0.0, gamma);
            let grid = build_grid(t0, t1, n_bins)?;
            let xi = make_exponential(grid, gamma, dephasing)?;
            (xi, json!({ "gamma": gamma, "gamma_dephasing": dephasing }))
        }
        WavepacketModel::Exciton => {
            let gamma = match (args.gamma, args.lifetime) {
                (None, None) => DEFAULT_EXCITON_GAMMA,
                _ => decay_rate(args, None)?,
            };
            let fss_rate = match (args.fss_rate, args.fss_uev) {
                (Some(_), Some(_)) => {
                    return Err(CliError::validation(
                        "give either fss_rate or fss_uev, not both",
                    ))
                }
                (Some(r), None) => r,
                (None, Some(e)) => e * 1e-6 / HBAR_EV_PS,
                (None, None) => DEFAULT_FSS_RATE,
            };
            let (t0, t1) = span(0.0, gamma);
            let grid = build_grid(t0, t1, n_bins)?;
            let xi = make_exciton_beat(grid, gamma, fss_rate, dephasing)?;
            (
                xi,
                json!({ "gamma": gamma, "fss_rate": fss_rate, "gamma_dephasing": dephasing }),
            )
        }
        WavepacketModel::Gaussian => {
            let center = args.center.unwrap_or(0.0);
            let fwhm = args.fwhm.unwrap_or(15.0);
            let t0 = args.t_start.unwrap_or(center - 4.0 * fwhm);
            let t1 = args.t_end.unwrap_or(center + 4.0 * fwhm);
            let grid = build_grid(t0, t1, n_bins)?;
            let xi = make_gaussian_pulse(grid, center, fwhm)?;
            (xi, json!({ "center": center, "fwhm": fwhm }))
        }
    };
    ensure_dir(&ctx.output_dir)?;
    let xi_path = ctx.output_dir.join("xi.json");
    let trace_path = ctx.output_dir.join("trace.csv");
    write_text(&xi_path, &xi.to_json()?)?;
    let mut buf = Vec::new();
    xi.write_trace_csv(&mut buf)?;
    write_text(&trace_path, &String::from_utf8_lossy(&buf))?;
    log::info!("wrote {} and {}", xi_path.display(), trace_path.display());
    let grid = xi.grid();
    Ok(json!({
        "model": model,
        "parameters": params,
        "t_start": grid.t_start(),
        "t_end": grid.t_end(),
        "n_bins": grid.n_bins(),
        "dt": grid.dt(),
        "trace_purity": xi.trace_purity()?,
        "xi_file": xi_path,
        "trace_file": trace_path,
    }))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapArgs {
    /// First wavepacket (`xi.json` from `model`).
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Second wavepacket; defaults to the first.
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Relative phase rate in rad/ps applied to the first wavepacket.
    #[arg(long)]
    pub phase_rate: Option<f64>,
}

pub fn cmd_overlap(args: &OverlapArgs, _ctx: &Context) -> CmdResult {
    let a = read_xi(&require(args.a.clone(), "a")?)?;
    let b = match &args.b {
        Some(p) => read_xi(p)?,
        None => a.clone(),
    };
    let phase = PhaseSpec::new(args.phase_rate.unwrap_or(0.0))?;
    Ok(json!({
        "overlap": mean_wavepacket_overlap(&a, &b, phase)?,
        "purity_a": a.trace_purity()?,
        "purity_b": b.trace_purity()?,
        "phase_rate": phase.rate,
    }))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixArgs {
    /// Signal wavepacket file; without files the overlaps are given directly.
    #[arg(long)]
    pub signal: Option<PathBuf>,
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// One-photon probability of the signal field.
    #[arg(long)]
    pub p_signal: Option<f64>,
    /// One-photon probability of the noise field.
    #[arg(long)]
    pub p_noise: Option<f64>,
    /// Mixing angle in rad, in [0, pi/2].
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub phase_rate: Option<f64>,
    #[arg(long)]
    pub m_s: Option<f64>,
    #[arg(long)]
    pub m_n: Option<f64>,
    #[arg(long)]
    pub m_sn: Option<f64>,
    #[arg(long)]
    pub m_sn_prime: Option<f64>,
}

pub fn cmd_mix(args: &MixArgs, _ctx: &Context) -> CmdResult {
    let p_s = args.p_signal.unwrap_or(1.0);
    let p_n = require(args.p_noise, "p_noise")?;
    let angle = MixAngle::new(require(args.theta, "theta")?)?;
    let src = match (&args.signal, &args.noise) {
        (Some(s), Some(n)) => {
            if args.m_s.is_some()
                || args.m_n.is_some()
                || args.m_sn.is_some()
                || args.m_sn_prime.is_some()
            {
                return Err(CliError::validation(
                    "overlaps are computed from the wavepacket files; drop m_s/m_n/m_sn/m_sn_prime",
                ));
            }
            let phase = PhaseSpec::new(args.phase_rate.unwrap_or(0.0))?;
            mix_sources(
                &SourceState::new(p_s, read_xi(s)?)?,
                &SourceState::new(p_n, read_xi(n)?)?,
                angle,
                phase,
            )?
        }
        (None, None) => {
            let m_sn = args.m_sn.unwrap_or(0.0);
            let overlaps = Overlaps {
                m_s: args.m_s.unwrap_or(1.0),
                m_n: args.m_n.unwrap_or(1.0),
                m_sn,
                m_sn_prime: args.m_sn_prime.unwrap_or(m_sn),
            };
            mix_from_overlaps(p_s, p_n, angle, overlaps)?
        }
        _ => {
            return Err(CliError::validation(
                "give both signal and noise files, or neither",
            ))
        }
    };
    to_value(&src)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepArgs {
    #[arg(long)]
    pub m_s: Option<f64>,
    /// Noise purity; defaults to 1.
    #[arg(long)]
    pub m_n: Option<f64>,
    #[arg(long)]
    pub m_sn: Option<f64>,
    /// Phase-shifted signal-noise overlap; defaults to m_sn.
    #[arg(long)]
    pub m_sn_prime: Option<f64>,
    /// HOM beam-splitter reflectivity.
    #[arg(long = "R", visible_alias = "reflectivity")]
    pub reflectivity: Option<f64>,
    #[arg(long)]
    pub eta_min: Option<f64>,
    #[arg(long)]
    pub eta_max: Option<f64>,
    /// Number of evenly spaced noise parameters.
    #[arg(long)]
    pub points: Option<usize>,
}

pub fn cmd_sweep(args: &SweepArgs, _ctx: &Context) -> CmdResult {
    let m_s = require(args.m_s, "m_s")?;
    let m_sn = args.m_sn.unwrap_or(0.0);
    let bs = splitter(args.reflectivity, None)?;
    let lo = args.eta_min.unwrap_or(0.0);
    let hi = args.eta_max.unwrap_or(0.5);
    let n = args.points.unwrap_or(51);
    if n == 0 {
        return Err(CliError::validation(
            "invalid parameter `points`: must be at least 1",
        ));
    }
    if hi < lo {
        return Err(CliError::validation(
            "invalid parameter `eta_max`: below eta_min",
        ));
    }
    let etas: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect();
    let recs = parametric_sweep(
        m_s,
        args.m_n.unwrap_or(1.0),
        m_sn,
        args.m_sn_prime.unwrap_or(m_sn),
        bs,
        &etas,
    )?;
    to_value(&recs)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeArgs {
    #[arg(long)]
    pub m_s: Option<f64>,
    #[arg(long)]
    pub m_sn: Option<f64>,
    #[arg(long)]
    pub m_sn_prime: Option<f64>,
    #[arg(long = "R", visible_alias = "reflectivity")]
    pub reflectivity: Option<f64>,
}

pub fn cmd_slope(args: &SlopeArgs, _ctx: &Context) -> CmdResult {
    let m_s = require(args.m_s, "m_s")?;
    let m_sn = args.m_sn.unwrap_or(0.0);
    let m_sn_prime = args.m_sn_prime.unwrap_or(m_sn);
    let bs = splitter(args.reflectivity, None)?;
    Ok(json!({
        "m_s": m_s,
        "m_sn": m_sn,
        "m_sn_prime": m_sn_prime,
        "reflectivity": bs.reflectivity(),
        "slope": slope_at_origin(m_s, m_sn, m_sn_prime, bs)?,
    }))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractArgs {
    /// Measured HOM visibility.
    #[arg(long)]
    pub v: Option<f64>,
    #[arg(long)]
    pub v_sigma: Option<f64>,
    #[arg(long)]
    pub g2: Option<f64>,
    #[arg(long)]
    pub g2_sigma: Option<f64>,
    /// Signal-noise overlap; 0 for distinguishable noise.
    #[arg(long)]
    pub m_sn: Option<f64>,
    #[arg(long = "R", visible_alias = "reflectivity")]
    pub reflectivity: Option<f64>,
}

pub fn cmd_extract(args: &ExtractArgs, _ctx: &Context) -> CmdResult {
    let v = require(args.v, "v")?;
    let g2 = require(args.g2, "g2")?;
    let bs = splitter(args.reflectivity, None)?;
    let (m_s, sigma) = extract_ms_with_sigma(
        v,
        args.v_sigma.unwrap_or(0.0),
        g2,
        args.g2_sigma.unwrap_or(0.0),
        args.m_sn.unwrap_or(0.0),
        bs,
    )?;
    let warnings: Vec<Warning> = Warning::check_g2(g2).into_iter().collect();
    Ok(json!({ "m_s": m_s, "m_s_sigma": sigma, "warnings": warnings }))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    /// Dataset CSV with columns g2,g2_sigma,v,v_sigma.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// distinguishable, identical or fixed:<m_sn>.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long = "R", visible_alias = "reflectivity")]
    pub reflectivity: Option<f64>,
    /// Fit both limiting models and report them as lower/upper bounds.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bounds: Option<bool>,
}

pub fn cmd_fit(args: &FitArgs, _ctx: &Context) -> CmdResult {
    let path = require(args.data.clone(), "data")?;
    let file =
        std::fs::File::open(&path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let points = read_dataset(std::io::BufReader::new(file))
        .map_err(|e| CliError::from(e).context(path.display()))?;
    let bs = splitter(args.reflectivity, None)?;
    if args.bounds.unwrap_or(false) {
        if args.model.is_some() {
            return Err(CliError::validation(
                "bounds fits both models; drop `model`",
            ));
        }
        let (lower, upper) = bound_ms(&points, bs)?;
        return Ok(json!({ "lower": lower, "upper": upper }));
    }
    let kind: ModelKind = args.model.as_deref().unwrap_or("distinguishable").parse()?;
    to_value(&fit(&points, NoiseModel::new(kind, bs)?)?)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleArgs {
    #[arg(long)]
    pub instances: Option<usize>,
    /// Largest grid drawn per instance.
    #[arg(long)]
    pub max_bins: Option<usize>,
    /// Grid-size budget of the Fock-space engine.
    #[arg(long)]
    pub budget_bins: Option<usize>,
}

/// Runs the equivalence campaign; fails with a numerical error when the
/// report does not pass.
pub fn cmd_oracle(args: &OracleArgs, ctx: &Context) -> Result<(Value, bool), CliError> {
    let cfg = CampaignConfig {
        instances: args.instances.unwrap_or(100),
        seed: ctx.seed,
        max_bins: args.max_bins.unwrap_or(8),
        budget: FockBudget {
            max_bins: args.budget_bins.unwrap_or(16),
            ..FockBudget::default()
        },
    };
    if cfg.max_bins == 0 {
        return Err(CliError::validation(
            "invalid parameter `max_bins`: must be at least 1",
        ));
    }
    let report = run_campaign(cfg);
    Ok((to_value(&report)?, report.passed))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeArgs {
    /// HBT coincidence histogram CSV (time_ns,counts).
    #[arg(long)]
    pub g2_hist: Option<PathBuf>,
    /// HOM coincidence histogram CSV (time_ns,counts).
    #[arg(long)]
    pub hom_hist: Option<PathBuf>,
    /// Pulse period in ns.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Zero-delay position in ns.
    #[arg(long)]
    pub center: Option<f64>,
    /// Integration window in ns; defaults to tau / 2.
    #[arg(long)]
    pub window: Option<f64>,
    /// First side-peak order treated as uncorrelated.
    #[arg(long)]
    pub kmin: Option<usize>,
    #[arg(long = "R", visible_alias = "reflectivity")]
    pub reflectivity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub g2: f64,
    pub g2_sigma: f64,
    pub v_hom: f64,
    pub v_sigma: f64,
    pub m_s_corrected: f64,
    pub m_s_sigma: f64,
    pub g2_histogram: HistogramReport,
    pub hom_histogram: HistogramReport,
    pub warnings: Vec<Warning>,
}

fn load_and_analyze(path: &Path, cfg: RepRateConfig) -> Result<HistogramReport, CliError> {
    let h = ingest_histogram_file(path).map_err(|e| CliError::from(e).context(path.display()))?;
    analyze_histogram(&h, cfg).map_err(|e| CliError::from(e).context(path.display()))
}

/// `g2` from the HBT histogram, `V` from the HOM histogram, and the
/// distinguishable-noise corrected `m_s`.
pub fn cmd_analyze(args: &AnalyzeArgs, _ctx: &Context) -> Result<AnalyzeReport, CliError> {
    let g2_path = require(args.g2_hist.clone(), "g2_hist")?;
    let hom_path = require(args.hom_hist.clone(), "hom_hist")?;
    let tau = require(args.tau, "tau")?;
    let mut cfg = RepRateConfig::new(tau, args.center.unwrap_or(0.0))?;
    if let Some(w) = args.window {
        cfg.integration_window = w;
    }
    if let Some(k) = args.kmin {
        cfg.k_min = k;
    }
    let cfg = cfg.validated()?;
    let bs = splitter(args.reflectivity, None)?;

    let g = load_and_analyze(&g2_path, cfg)?;
    let h = load_and_analyze(&hom_path, cfg)?;
    let (m_s, m_s_sigma) = extract_ms_with_sigma(h.v_hom, h.v_sigma, g.g2, g.g2_sigma, 0.0, bs)?;
    let warnings = Warning::check_g2(g.g2).into_iter().collect();
    Ok(AnalyzeReport {
        g2: g.g2,
        g2_sigma: g.g2_sigma,
        v_hom: h.v_hom,
        v_sigma: h.v_sigma,
        m_s_corrected: m_s,
        m_s_sigma,
        g2_histogram: g,
        hom_histogram: h,
        warnings,
    })
}
