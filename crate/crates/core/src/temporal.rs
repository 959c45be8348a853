//! Discretized temporal-mode description of one-photon states.
//!
//! A one-photon state is stored as its two-time density wavefunction
//! `xi(t, t')` sampled at the bin centers of a uniform [`TimeGrid`]. All
//! integrals use the midpoint rule, so a double integral is a plain sum
//! weighted by `dt * dt`.

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HomError, Result};

/// Fraction of the analytic norm a constructor must capture on its grid.
const MIN_CAPTURED_WEIGHT: f64 = 0.99;
/// Relative Hermiticity tolerance for user-supplied matrices.
const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues down to `-PSD_TOL * max(trace, max |xi|)` are accepted as
/// rounding noise.
const PSD_TOL: f64 = 1e-10;
/// Trace deviation above which a matrix is treated as unnormalized.
const NORMALIZED_TOL: f64 = 1e-6;

/// Reduced Planck constant in eV ps.
pub const HBAR_EV_PS: f64 = 6.582_119_569e-4;
/// Exciton decay rate for a 250 ps lifetime, in 1/ps.
pub const DEFAULT_EXCITON_GAMMA: f64 = 1.0 / 250.0;
/// Beat rate of a 10 ueV fine-structure splitting, in rad/ps.
pub const DEFAULT_FSS_RATE: f64 = 10.0e-6 / HBAR_EV_PS;

/// Uniform time grid in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_bins: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    t_start: f64,
    t_end: f64,
    n_bins: usize,
}

impl TryFrom<RawGrid> for TimeGrid {
    type Error = HomError;

    fn try_from(raw: RawGrid) -> Result<Self> {
        build_grid(raw.t_start, raw.t_end, raw.n_bins)
    }
}

/// Builds a grid of `n_bins` equal bins covering `[t_start, t_end]`.
pub fn build_grid(t_start: f64, t_end: f64, n_bins: usize) -> Result<TimeGrid> {
    if !t_start.is_finite() || !t_end.is_finite() {
        return Err(HomError::invalid("t_start/t_end", "bounds must be finite"));
    }
    if t_end <= t_start {
        return Err(HomError::invalid("t_end", "must exceed t_start"));
    }
    if n_bins == 0 {
        return Err(HomError::invalid("n_bins", "must be at least 1"));
    }
    Ok(TimeGrid {
        t_start,
        t_end,
        n_bins,
    })
}

impl TimeGrid {
    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_bins as f64
    }

    /// Center of bin `k`.
    pub fn center(&self, k: usize) -> f64 {
        self.t_start + (k as f64 + 0.5) * self.dt()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|k| self.center(k)).collect()
    }
}

/// Relative propagation phase rate `phi_s - phi_n` in rad/ps, applied to a
/// correlation function as `exp(i * rate * (t - t'))`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub rate: f64,
}

impl PhaseSpec {
    pub fn new(rate: f64) -> Result<Self> {
        if !rate.is_finite() {
            return Err(HomError::invalid("phase.rate", "must be finite"));
        }
        Ok(PhaseSpec { rate })
    }

    pub fn zero() -> Self {
        PhaseSpec { rate: 0.0 }
    }

    fn factors(&self, grid: &TimeGrid) -> Vec<Complex64> {
        grid.centers()
            .into_iter()
            .map(|t| Complex64::from_polar(1.0, self.rate * t))
            .collect()
    }
}

/// Two-time density wavefunction of a one-photon state, in 1/ps.
///
/// `xi[(j, k)]` is `xi(t_j, t_k)`. The matrix is Hermitian and positive
/// semidefinite; constructors return it normalized so that
/// `sum_k xi[(k, k)] * dt == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalDensityMatrix {
    grid: TimeGrid,
    xi: DMatrix<Complex64>,
}

impl TemporalDensityMatrix {
    /// Wraps a user-supplied matrix after checking shape, Hermiticity and
    /// positivity. The trace is left untouched; call [`normalize`].
    ///
    /// [`normalize`]: TemporalDensityMatrix::normalize
    pub fn from_matrix(grid: TimeGrid, xi: DMatrix<Complex64>) -> Result<Self> {
        let n = grid.n_bins();
        if xi.nrows() != n || xi.ncols() != n {
            return Err(HomError::ShapeMismatch {
                rows: xi.nrows(),
                cols: xi.ncols(),
                n_bins: n,
            });
        }
        if xi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(HomError::invalid("xi", "entries must be finite"));
        }
        let scale = xi.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let deviation = hermitian_deviation(&xi);
        if deviation > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(HomError::NotHermitian { deviation });
        }
        // symmetrize away rounding, then factor xi + tol * I, which has only
        // positive pivots exactly when no eigenvalue lies below -tol
        let xi = (&xi + xi.adjoint()).scale(0.5);
        let trace: f64 = xi.diagonal().iter().map(|z| z.re).sum();
        let tolerance = PSD_TOL * trace.max(scale) + f64::MIN_POSITIVE;
        if !has_positive_pivots(&xi, tolerance) {
            return Err(HomError::NotPositive { tolerance });
        }
        Ok(TemporalDensityMatrix { grid, xi })
    }

    /// Pure state `xi(t, t') = a(t) conj(a(t'))` from amplitudes sampled at
    /// bin centers, normalized on the grid.
    pub fn from_amplitude(grid: TimeGrid, amplitude: &[Complex64]) -> Result<Self> {
        if amplitude.len() != grid.n_bins() {
            return Err(HomError::ShapeMismatch {
                rows: amplitude.len(),
                cols: 1,
                n_bins: grid.n_bins(),
            });
        }
        let n = grid.n_bins();
        let xi = DMatrix::from_fn(n, n, |j, k| amplitude[j] * amplitude[k].conj());
        TemporalDensityMatrix { grid, xi }.normalize()
    }

    /// Incoherent mixture `sum_i w_i xi_i`; weights are renormalized.
    pub fn mixture(components: &[(f64, &TemporalDensityMatrix)]) -> Result<Self> {
        let (_, first) = components
            .first()
            .ok_or_else(|| HomError::invalid("components", "empty mixture"))?;
        let grid = first.grid;
        let mut xi = DMatrix::zeros(grid.n_bins(), grid.n_bins());
        for (w, c) in components {
            if c.grid != grid {
                return Err(HomError::GridMismatch);
            }
            if !w.is_finite() || *w < 0.0 {
                return Err(HomError::invalid(
                    "weight",
                    "must be finite and non-negative",
                ));
            }
            xi += c.xi.scale(*w);
        }
        TemporalDensityMatrix { grid, xi }.normalize()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn xi(&self) -> &DMatrix<Complex64> {
        &self.xi
    }

    /// `sum_k xi[(k, k)] * dt`.
    pub fn trace(&self) -> f64 {
        self.xi.diagonal().iter().map(|z| z.re).sum::<f64>() * self.grid.dt()
    }

    /// Rescales so that the trace is one.
    pub fn normalize(mut self) -> Result<Self> {
        let trace = self.trace();
        if !trace.is_finite() || trace <= 0.0 {
            return Err(HomError::ZeroTrace);
        }
        let inv = 1.0 / trace;
        self.xi.iter_mut().for_each(|z| *z *= inv);
        Ok(self)
    }

    /// Single-photon trace purity `Tr[rho^2] = iint |xi|^2 dt dt'`.
    pub fn trace_purity(&self) -> Result<f64> {
        mean_wavepacket_overlap(self, self, PhaseSpec::zero())
    }

    /// Returns `xi(t, t') * exp(i * rate * (t - t'))`.
    pub fn with_phase(&self, phase: PhaseSpec) -> Self {
        let f = phase.factors(&self.grid);
        let n = self.grid.n_bins();
        let xi = DMatrix::from_fn(n, n, |j, k| self.xi[(j, k)] * (f[j] * f[k].conj()));
        TemporalDensityMatrix {
            grid: self.grid,
            xi,
        }
    }

    /// Bin-averages blocks of `factor x factor` entries onto a grid with
    /// `n_bins / factor` bins, then renormalizes.
    pub fn coarse_grain(&self, factor: usize) -> Result<Self> {
        let n = self.grid.n_bins();
        if factor == 0 || !n.is_multiple_of(factor) {
            return Err(HomError::invalid(
                "factor",
                format!("must divide n_bins = {n}"),
            ));
        }
        let m = n / factor;
        let grid = build_grid(self.grid.t_start, self.grid.t_end, m)?;
        let norm = 1.0 / (factor * factor) as f64;
        let xi = DMatrix::from_fn(m, m, |a, b| {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in a * factor..(a + 1) * factor {
                for k in b * factor..(b + 1) * factor {
                    acc += self.xi[(j, k)];
                }
            }
            acc * norm
        });
        TemporalDensityMatrix { grid, xi }.normalize()
    }

    /// Diagonal `(t, xi(t, t))` pairs, the photon's time trace.
    pub fn intensity(&self) -> Vec<(f64, f64)> {
        self.grid
            .centers()
            .into_iter()
            .zip(self.xi.diagonal().iter().map(|z| z.re))
            .collect()
    }

    /// Writes the time trace as CSV with columns `t_ps,intensity`.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_ps", "intensity"]).map_err(csv_io)?;
        for (t, i) in self.intensity() {
            w.write_record([t.to_string(), i.to_string()])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn check_normalized(&self) -> Result<()> {
        let trace = self.trace();
        if (trace - 1.0).abs() > NORMALIZED_TOL {
            return Err(HomError::Unnormalized { trace });
        }
        Ok(())
    }
}

pub(crate) fn csv_io(e: csv::Error) -> HomError {
    HomError::Io(std::io::Error::other(e))
}

/// Cholesky of `xi + shift * I`. The pivots of a Hermitian matrix are real;
/// a negative one shows up as an imaginary square root on the diagonal.
fn has_positive_pivots(xi: &DMatrix<Complex64>, shift: f64) -> bool {
    let n = xi.nrows();
    let shifted = xi + DMatrix::<Complex64>::identity(n, n).scale(shift);
    match shifted.cholesky() {
        None => false,
        Some(c) => c
            .l_dirty()
            .diagonal()
            .iter()
            .all(|d| d.im == 0.0 && d.re > 0.0),
    }
}

fn hermitian_deviation(xi: &DMatrix<Complex64>) -> f64 {
    let n = xi.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for k in j..n {
            worst = worst.max((xi[(j, k)] - xi[(k, j)].conj()).norm());
        }
    }
    worst
}

/// Mean wavepacket overlap
/// `iint Re(xi_a(t,t') conj(xi_b(t,t')) exp(i rate (t - t'))) dt dt'`.
pub fn mean_wavepacket_overlap(
    a: &TemporalDensityMatrix,
    b: &TemporalDensityMatrix,
    phase: PhaseSpec,
) -> Result<f64> {
    if a.grid != b.grid {
        return Err(HomError::GridMismatch);
    }
    a.check_normalized()?;
    b.check_normalized()?;
    let f = phase.factors(&a.grid);
    let n = a.grid.n_bins();
    let mut acc = 0.0;
    for k in 0..n {
        let fk = f[k].conj();
        for (j, fj) in f.iter().enumerate() {
            acc += (a.xi[(j, k)] * b.xi[(j, k)].conj() * (fj * fk)).re;
        }
    }
    let dt = a.grid.dt();
    Ok(acc * dt * dt)
}

/// Builds `xi(t,t') = A(t) A(t') exp(-gamma_dephasing |t - t'|)` from a real
/// amplitude, checking the captured weight against the analytic norm.
fn dephased_from_real_amplitude(
    grid: TimeGrid,
    amplitude: impl Fn(f64) -> f64,
    analytic_norm: f64,
    gamma_dephasing: f64,
) -> Result<TemporalDensityMatrix> {
    let centers = grid.centers();
    let amp: Vec<f64> = centers.iter().map(|&t| amplitude(t)).collect();
    let captured = amp.iter().map(|a| a * a).sum::<f64>() * grid.dt() / analytic_norm;
    if captured < MIN_CAPTURED_WEIGHT {
        return Err(HomError::Truncation {
            captured,
            required: MIN_CAPTURED_WEIGHT,
        });
    }
    let n = grid.n_bins();
    let xi = DMatrix::from_fn(n, n, |j, k| {
        let kernel = (-gamma_dephasing * (centers[j] - centers[k]).abs()).exp();
        Complex64::new(amp[j] * amp[k] * kernel, 0.0)
    });
    TemporalDensityMatrix { grid, xi }.normalize()
}

fn check_rate(name: &'static str, value: f64, allow_zero: bool) -> Result<()> {
    let ok = value.is_finite() && (value > 0.0 || (allow_zero && value == 0.0));
    if ok {
        Ok(())
    } else {
        let bound = if allow_zero { ">= 0" } else { "> 0" };
        Err(HomError::invalid(
            name,
            format!("must be finite and {bound}, got {value}"),
        ))
    }
}

/// Monoexponential emitter switched on at `t = 0`, with Markovian pure
/// dephasing: `xi(t,t') = gamma exp(-gamma (t+t')/2) exp(-gamma_dephasing |t-t'|)`.
///
/// Its trace purity is `gamma / (gamma + 2 gamma_dephasing)`.
pub fn make_exponential(
    grid: TimeGrid,
    gamma: f64,
    gamma_dephasing: f64,
) -> Result<TemporalDensityMatrix> {
    check_rate("gamma", gamma, false)?;
    check_rate("gamma_dephasing", gamma_dephasing, true)?;
    let amp = move |t: f64| {
        if t < 0.0 {
            0.0
        } else {
            (gamma * (-gamma * t).exp()).sqrt()
        }
    };
    dephased_from_real_amplitude(grid, amp, 1.0, gamma_dephasing)
}

/// Cross-polarized exciton emission: amplitude `sin(fss_rate t / 2) exp(-gamma t / 2)`
/// for `t >= 0`, giving a delayed rise and beats at the fine-structure period
/// `2 pi / fss_rate`.
pub fn make_exciton_beat(
    grid: TimeGrid,
    gamma: f64,
    fss_rate: f64,
    gamma_dephasing: f64,
) -> Result<TemporalDensityMatrix> {
    check_rate("gamma", gamma, false)?;
    check_rate("fss_rate", fss_rate, false)?;
    check_rate("gamma_dephasing", gamma_dephasing, true)?;
    // int_0^inf sin^2(w t / 2) e^{-g t} dt
    let norm = fss_rate * fss_rate / (2.0 * gamma * (gamma * gamma + fss_rate * fss_rate));
    let amp = move |t: f64| {
        if t < 0.0 {
            0.0
        } else {
            (0.5 * fss_rate * t).sin() * (-0.5 * gamma * t).exp()
        }
    };
    dephased_from_real_amplitude(grid, amp, norm, gamma_dephasing)
}

/// Transform-limited Gaussian pulse whose intensity has the given FWHM.
pub fn make_gaussian_pulse(
    grid: TimeGrid,
    center: f64,
    fwhm: f64,
) -> Result<TemporalDensityMatrix> {
    if !center.is_finite() {
        return Err(HomError::invalid("center", "must be finite"));
    }
    check_rate("fwhm", fwhm, false)?;
    let norm = fwhm * (PI / (4.0 * LN_2)).sqrt();
    let amp = move |t: f64| (-2.0 * LN_2 * (t - center).powi(2) / (fwhm * fwhm)).exp();
    dephased_from_real_amplitude(grid, amp, norm, 0.0)
}

// Serialized form: {grid: {...}, xi_re: [[..]], xi_im: [[..]]}
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TdmFile {
    grid: TimeGrid,
    xi_re: Vec<Vec<f64>>,
    xi_im: Vec<Vec<f64>>,
}

impl Serialize for TemporalDensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.grid.n_bins();
        let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..n)
                .map(|j| (0..n).map(|k| f(&self.xi[(j, k)])).collect())
                .collect()
        };
        TdmFile {
            grid: self.grid,
            xi_re: rows(|z| z.re),
            xi_im: rows(|z| z.im),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TemporalDensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let file = TdmFile::deserialize(d)?;
        let n = file.grid.n_bins();
        let shape_ok = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if !shape_ok(&file.xi_re) || !shape_ok(&file.xi_im) {
            return Err(D::Error::custom(format!("xi_re/xi_im must be {n}x{n}")));
        }
        let xi = DMatrix::from_fn(n, n, |j, k| {
            Complex64::new(file.xi_re[j][k], file.xi_im[j][k])
        });
        TemporalDensityMatrix::from_matrix(file.grid, xi).map_err(D::Error::custom)
    }
}
