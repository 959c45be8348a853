//! Coincidence-histogram analysis for pulsed `g2` and HOM measurements.
//!
//! Peaks repeat every pulse period `tau`. The zero-delay peak area `a0` is
//! compared with the mean area of uncorrelated side peaks at
//! `center ± k tau`, `k >= k_min`.

use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{HomError, Result};

/// Binned coincidence counts; times in ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bin_edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(HomError::Histogram("no bins".into()));
        }
        if bin_edges.len() != counts.len() + 1 {
            return Err(HomError::Histogram(format!(
                "{} edges for {} bins",
                bin_edges.len(),
                counts.len()
            )));
        }
        if bin_edges
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(HomError::Histogram("bin edges must increase".into()));
        }
        Ok(Histogram { bin_edges, counts })
    }

    /// Builds a histogram from bin centers (the CSV convention). Interior
    /// edges sit halfway between centers; the outer edges mirror the first
    /// and last half-spacing.
    pub fn from_centers(centers: &[f64], counts: Vec<u64>) -> Result<Self> {
        if centers.len() != counts.len() {
            return Err(HomError::Histogram(
                "centers and counts differ in length".into(),
            ));
        }
        if centers.len() < 2 {
            return Err(HomError::Histogram("need at least two bins".into()));
        }
        let n = centers.len();
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(centers[0] - 0.5 * (centers[1] - centers[0]));
        for w in centers.windows(2) {
            edges.push(0.5 * (w[0] + w[1]));
        }
        edges.push(centers[n - 1] + 0.5 * (centers[n - 1] - centers[n - 2]));
        Histogram::new(edges, counts)
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }

    /// Sum of counts whose bin center lies within `window / 2` of `center`.
    pub fn window_sum(&self, center: f64, window: f64) -> u64 {
        let half = 0.5 * window;
        self.centers()
            .zip(&self.counts)
            .filter(|(t, _)| (t - center).abs() <= half)
            .map(|(_, c)| *c)
            .sum()
    }

    /// Multiplies every count by `factor`.
    pub fn scaled(&self, factor: u64) -> Histogram {
        Histogram {
            bin_edges: self.bin_edges.clone(),
            counts: self.counts.iter().map(|c| c * factor).collect(),
        }
    }

    fn span(&self) -> (f64, f64) {
        (self.bin_edges[0], self.bin_edges[self.bin_edges.len() - 1])
    }
}

/// Reads a two-column `time_ns,counts` CSV. A non-numeric first row is
/// treated as a header.
pub fn ingest_histogram<R: Read>(reader: R) -> Result<Histogram> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut times = Vec::new();
    let mut counts = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| HomError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(row as u64 + 1);
        if record.len() != 2 {
            return Err(HomError::Parse {
                line,
                message: format!("expected 2 columns, found {}", record.len()),
            });
        }
        let t = record[0].parse::<f64>();
        if row == 0 && t.is_err() {
            continue;
        }
        let t = t.map_err(|_| HomError::Parse {
            line,
            message: format!("invalid time `{}`", &record[0]),
        })?;
        if !t.is_finite() {
            return Err(HomError::Parse {
                line,
                message: "time must be finite".into(),
            });
        }
        let c = parse_count(&record[1]).ok_or_else(|| HomError::Parse {
            line,
            message: format!(
                "invalid count `{}` (must be a non-negative integer)",
                &record[1]
            ),
        })?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(HomError::Parse {
                    line,
                    message: format!("time {t} does not increase (previous {prev})"),
                });
            }
        }
        times.push(t);
        counts.push(c);
    }
    if times.is_empty() {
        return Err(HomError::Histogram("empty file".into()));
    }
    Histogram::from_centers(&times, counts)
}

fn parse_count(s: &str) -> Option<u64> {
    if let Ok(c) = s.parse::<u64>() {
        return Some(c);
    }
    // tolerate "12.0" style exports
    let f = s.parse::<f64>().ok()?;
    (f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64).then_some(f as u64)
}

pub fn ingest_histogram_file(path: &Path) -> Result<Histogram> {
    let file = std::fs::File::open(path)?;
    ingest_histogram(std::io::BufReader::new(file))
}

/// Writes `time_ns,counts` rows at bin centers.
pub fn write_histogram_csv<W: std::io::Write>(h: &Histogram, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time_ns", "counts"])
        .map_err(crate::temporal::csv_io)?;
    for (t, c) in h.centers().zip(&h.counts) {
        w.write_record([t.to_string(), c.to_string()])
            .map_err(crate::temporal::csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Pulse train geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepRateConfig {
    /// Pulse period in ns.
    pub tau: f64,
    pub zero_delay_position: f64,
    pub integration_window: f64,
    /// First side-peak order counted as uncorrelated.
    pub k_min: usize,
}

impl RepRateConfig {
    /// Window `0.5 tau`, `k_min = 2`.
    pub fn new(tau: f64, zero_delay_position: f64) -> Result<Self> {
        RepRateConfig {
            tau,
            zero_delay_position,
            integration_window: 0.5 * tau,
            k_min: 2,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(HomError::invalid("tau", "must be positive"));
        }
        if !self.zero_delay_position.is_finite() {
            return Err(HomError::invalid("center", "must be finite"));
        }
        if !(self.integration_window > 0.0 && self.integration_window < self.tau) {
            return Err(HomError::invalid("window", "must lie in (0, tau)"));
        }
        if self.k_min == 0 {
            return Err(HomError::invalid("kmin", "must be at least 1"));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakAreas {
    pub a0: f64,
    pub a_uncor: f64,
    pub n_side_peaks: usize,
    pub window: f64,
}

/// Integrates the zero-delay peak and every side peak whose window fits
/// inside the histogram span.
pub fn integrate_peaks(h: &Histogram, cfg: RepRateConfig) -> Result<PeakAreas> {
    let cfg = cfg.validated()?;
    let (lo, hi) = h.span();
    let half = 0.5 * cfg.integration_window;
    let c = cfg.zero_delay_position;
    if c - half < lo || c + half > hi {
        return Err(HomError::Histogram(
            "zero-delay window lies outside the histogram".into(),
        ));
    }
    let mut total = 0u64;
    let mut n = 0usize;
    for k in cfg.k_min.. {
        let mut any = false;
        for sign in [-1.0, 1.0] {
            let pos = c + sign * k as f64 * cfg.tau;
            if pos - half >= lo && pos + half <= hi {
                total += h.window_sum(pos, cfg.integration_window);
                n += 1;
                any = true;
            }
        }
        if !any {
            break;
        }
    }
    if n < 2 {
        return Err(HomError::Histogram(format!(
            "only {n} uncorrelated side peaks fit in the histogram (need 2)"
        )));
    }
    let a_uncor = total as f64 / n as f64;
    if a_uncor <= 0.0 {
        return Err(HomError::Histogram("uncorrelated peaks are empty".into()));
    }
    Ok(PeakAreas {
        a0: h.window_sum(c, cfg.integration_window) as f64,
        a_uncor,
        n_side_peaks: n,
        window: cfg.integration_window,
    })
}

/// Poisson error of `a0 / a_uncor`; the `a0` term vanishes when `a0 = 0`.
fn ratio_with_sigma(p: &PeakAreas) -> Result<(f64, f64)> {
    if p.a_uncor <= 0.0 {
        return Err(HomError::ZeroDenominator("a_uncor"));
    }
    let ratio = p.a0 / p.a_uncor;
    let mut rel = 1.0 / (p.n_side_peaks as f64 * p.a_uncor);
    if p.a0 > 0.0 {
        rel += 1.0 / p.a0;
    }
    Ok((ratio, ratio * rel.sqrt()))
}

/// `g2 = a0 / a_uncor` with its Poisson error.
pub fn g2_from_histogram(p: &PeakAreas) -> Result<(f64, f64)> {
    ratio_with_sigma(p)
}

/// `V = 1 - 2 a0 / a_uncor` with its Poisson error.
pub fn vhom_from_histogram(p: &PeakAreas) -> Result<(f64, f64)> {
    let (ratio, sigma) = ratio_with_sigma(p)?;
    Ok((1.0 - 2.0 * ratio, 2.0 * sigma))
}

/// Everything reported for one histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub g2: f64,
    pub g2_sigma: f64,
    pub v_hom: f64,
    pub v_sigma: f64,
    pub a0: f64,
    pub a_uncor: f64,
    pub n_side_peaks: usize,
    pub window_ns: f64,
}

pub fn analyze_histogram(h: &Histogram, cfg: RepRateConfig) -> Result<HistogramReport> {
    let p = integrate_peaks(h, cfg)?;
    let (g2, g2_sigma) = g2_from_histogram(&p)?;
    let (v_hom, v_sigma) = vhom_from_histogram(&p)?;
    Ok(HistogramReport {
        g2,
        g2_sigma,
        v_hom,
        v_sigma,
        a0: p.a0,
        a_uncor: p.a_uncor,
        n_side_peaks: p.n_side_peaks,
        window_ns: p.window,
    })
}

/// Forward model of a pulsed coincidence histogram: two-sided exponential
/// peaks of decay time `peak_decay` at every multiple of `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombSpec {
    pub tau: f64,
    pub bin_width: f64,
    /// Side-peak orders on each side of zero delay.
    pub n_periods: usize,
    pub peak_decay: f64,
    pub center_area: f64,
    pub side_area: f64,
    /// Areas of peaks `±1, ±2, ...` overriding `side_area` (e.g. the
    /// partially correlated `±tau` peaks of a delayed-arm HOM setup).
    #[serde(default)]
    pub near_areas: Vec<f64>,
}

impl CombSpec {
    /// HBT histogram for a given `g2`.
    pub fn for_g2(g2: f64, side_area: f64) -> Self {
        CombSpec {
            tau: 12.5,
            bin_width: 0.05,
            n_periods: 6,
            peak_decay: 0.17,
            center_area: g2 * side_area,
            side_area,
            near_areas: Vec::new(),
        }
    }

    /// Delayed-arm HOM histogram for a given visibility; the `±tau` peaks
    /// carry 3/4 of the uncorrelated area.
    pub fn for_visibility(v_hom: f64, side_area: f64) -> Self {
        CombSpec {
            center_area: 0.5 * (1.0 - v_hom) * side_area,
            near_areas: vec![0.75 * side_area],
            ..CombSpec::for_g2(0.0, side_area)
        }
    }

    fn area(&self, k: usize) -> f64 {
        match k {
            0 => self.center_area,
            k => self
                .near_areas
                .get(k - 1)
                .copied()
                .unwrap_or(self.side_area),
        }
    }
}

/// Expected counts per bin, or Poisson-sampled counts when `seed` is given.
/// Expected counts are rounded to the nearest integer.
pub fn synthesize_histogram(spec: &CombSpec, seed: Option<u64>) -> Result<Histogram> {
    if !(spec.tau > 0.0 && spec.bin_width > 0.0 && spec.peak_decay > 0.0) {
        return Err(HomError::invalid(
            "comb",
            "tau, bin_width and peak_decay must be positive",
        ));
    }
    if spec.center_area < 0.0 || spec.side_area < 0.0 || spec.near_areas.iter().any(|a| *a < 0.0) {
        return Err(HomError::invalid("comb", "areas must be non-negative"));
    }
    let half_span = (spec.n_periods as f64 + 0.5) * spec.tau;
    let n_bins = (2.0 * half_span / spec.bin_width).round() as usize;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| -half_span + i as f64 * spec.bin_width)
        .collect();
    // Laplace CDF of a peak centered at `pos`
    let cdf = |x: f64, pos: f64| {
        let z = (x - pos) / spec.peak_decay;
        if z < 0.0 {
            0.5 * z.exp()
        } else {
            1.0 - 0.5 * (-z).exp()
        }
    };
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut counts = Vec::with_capacity(n_bins);
    for w in edges.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let k = (mid / spec.tau).round();
        let pos = k * spec.tau;
        let area = spec.area(k.abs() as usize);
        let expected = area * (cdf(w[1], pos) - cdf(w[0], pos));
        let c = match rng.as_mut() {
            Some(r) if expected > 0.0 => Poisson::new(expected)
                .map_err(|e| HomError::invalid("comb", e.to_string()))?
                .sample(r) as u64,
            Some(_) => 0,
            None => expected.round() as u64,
        };
        counts.push(c);
    }
    Histogram::new(edges, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Rectangular peaks on 1 ns bins: every count of a peak sits in one bin.
    fn comb(center: u64, side: u64, periods: i64) -> Histogram {
        let reach = 10 * periods + 4;
        let times: Vec<f64> = (-reach..=reach).map(|t| t as f64).collect();
        let counts = (-reach..=reach)
            .map(|t| match (t % 10, t) {
                (_, 0) => center,
                (0, _) => side,
                _ => 0,
            })
            .collect();
        Histogram::from_centers(&times, counts).unwrap()
    }

    fn cfg() -> RepRateConfig {
        RepRateConfig::new(10.0, 0.0).unwrap()
    }

    #[test]
    fn ingest_well_formed_with_header() {
        let text = "time_ns,counts\n-1.0,3\n0.0,10\n1.0,4\n";
        let h = ingest_histogram(text.as_bytes()).unwrap();
        assert_eq!(h.counts(), &[3, 10, 4]);
        assert_eq!(h.total(), 17);
        assert_eq!(h.bin_edges(), &[-1.5, -0.5, 0.5, 1.5]);
    }

    #[test]
    fn ingest_reports_negative_count_line() {
        let text = "time_ns,counts\n0.0,3\n1.0,-2\n";
        match ingest_histogram(text.as_bytes()) {
            Err(HomError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_errors() {
        assert!(matches!(
            ingest_histogram("".as_bytes()),
            Err(HomError::Histogram(_))
        ));
        assert!(matches!(
            ingest_histogram("t,c\n".as_bytes()),
            Err(HomError::Histogram(_))
        ));
        match ingest_histogram("0,1\n2,1\n1,1\n".as_bytes()) {
            Err(HomError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            ingest_histogram("0,1\nabc,2\n".as_bytes()),
            Err(HomError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            ingest_histogram("0,1,5\n".as_bytes()),
            Err(HomError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn comb_areas() {
        let p = integrate_peaks(&comb(50, 1000, 5), cfg()).unwrap();
        assert_eq!(p.a0, 50.0);
        assert_eq!(p.a_uncor, 1000.0);
        assert_eq!(p.n_side_peaks, 8);
        let p = integrate_peaks(&comb(0, 1000, 5), cfg()).unwrap();
        assert_eq!(p.a0, 0.0);
    }

    #[test]
    fn too_few_side_peaks() {
        assert!(matches!(
            integrate_peaks(&comb(50, 1000, 1), cfg()),
            Err(HomError::Histogram(_))
        ));
        // k_min = 2 leaves exactly the two peaks at ±2 tau
        assert_eq!(
            integrate_peaks(&comb(50, 1000, 2), cfg())
                .unwrap()
                .n_side_peaks,
            2
        );
    }

    #[test]
    fn ratio_examples() {
        let p = PeakAreas {
            a0: 50.0,
            a_uncor: 1000.0,
            n_side_peaks: 10,
            window: 5.0,
        };
        assert_abs_diff_eq!(g2_from_histogram(&p).unwrap().0, 0.05, epsilon = 1e-15);
        let p = PeakAreas { a0: 100.0, ..p };
        let (g2, sigma) = g2_from_histogram(&p).unwrap();
        assert_abs_diff_eq!(g2, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(sigma, 0.1 * (0.01f64 + 0.0001).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(sigma, 0.01005, epsilon = 1e-5);
        assert_abs_diff_eq!(vhom_from_histogram(&p).unwrap().0, 0.8, epsilon = 1e-15);

        let p0 = PeakAreas { a0: 0.0, ..p };
        assert_eq!(g2_from_histogram(&p0).unwrap(), (0.0, 0.0));
        assert_eq!(vhom_from_histogram(&p0).unwrap().0, 1.0);
        let half = PeakAreas { a0: 500.0, ..p };
        assert_abs_diff_eq!(vhom_from_histogram(&half).unwrap().0, 0.0, epsilon = 1e-15);

        let empty = PeakAreas { a_uncor: 0.0, ..p };
        assert!(g2_from_histogram(&empty).is_err());
        assert!(vhom_from_histogram(&empty).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RepRateConfig::new(0.0, 0.0).is_err());
        let bad = RepRateConfig {
            integration_window: 12.0,
            ..cfg()
        };
        assert!(bad.validated().is_err());
        let bad = RepRateConfig { k_min: 0, ..cfg() };
        assert!(bad.validated().is_err());
    }

    #[test]
    fn synthesized_comb_integrates_to_its_areas() {
        let spec = CombSpec::for_g2(0.05, 1.0e5);
        let h = synthesize_histogram(&spec, None).unwrap();
        let p = integrate_peaks(&h, RepRateConfig::new(spec.tau, 0.0).unwrap()).unwrap();
        // rounding to whole counts per bin costs at most half a count per bin
        assert_abs_diff_eq!(p.a0, 5000.0, epsilon = 125.0);
        assert_abs_diff_eq!(p.a_uncor, 1.0e5, epsilon = 125.0);
    }

    #[test]
    fn csv_round_trip() {
        let h = comb(5, 100, 3);
        let mut buf = Vec::new();
        write_histogram_csv(&h, &mut buf).unwrap();
        let back = ingest_histogram(buf.as_slice()).unwrap();
        assert_eq!(back.counts(), h.counts());
        for (a, b) in back.bin_edges().iter().zip(h.bin_edges()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}
