//! Brute-force few-photon simulation in a discretized temporal-mode basis.
//!
//! Each time bin of each of two spatial modes is an independent bosonic
//! mode. States are density operators over all occupation patterns with at
//! most `max_photons` photons in total. Beam splitters mix the two spatial
//! modes bin by bin; detectors count photons per bin. Nothing here uses the
//! closed-form visibility formulas, so it serves as an independent check on
//! [`crate::analytics`] and [`crate::noise`].

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytics::BeamSplitter;
use crate::error::{HomError, Result};
use crate::noise::{MixAngle, SourceState};
use crate::temporal::TimeGrid;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Size limits for the truncated basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockBudget {
    /// Maximum total photon number over all modes.
    pub max_photons: usize,
    /// Maximum number of time bins per spatial mode.
    pub max_bins: usize,
}

impl Default for FockBudget {
    fn default() -> Self {
        FockBudget {
            max_photons: 2,
            max_bins: 16,
        }
    }
}

/// Occupation patterns, each stored as the sorted list of occupied mode
/// indices (with repetition). Mode `spatial * n_bins + bin`.
#[derive(Debug)]
struct Basis {
    n_bins: usize,
    states: Vec<Vec<u16>>,
    index: HashMap<Vec<u16>, usize>,
}

impl Basis {
    fn new(n_bins: usize, max_photons: usize) -> Self {
        let n_modes = 2 * n_bins;
        let mut states: Vec<Vec<u16>> = vec![Vec::new()];
        let mut layer: Vec<Vec<u16>> = vec![Vec::new()];
        for _ in 0..max_photons {
            let mut next = Vec::new();
            for s in &layer {
                let from = s.last().copied().unwrap_or(0);
                for m in from..n_modes as u16 {
                    let mut t = s.clone();
                    t.push(m);
                    next.push(t);
                }
            }
            states.extend(next.iter().cloned());
            layer = next;
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Basis {
            n_bins,
            states,
            index,
        }
    }

    fn dim(&self) -> usize {
        self.states.len()
    }

    fn idx(&self, modes: &[u16]) -> usize {
        self.index[modes]
    }

    fn spatial(&self, mode: u16) -> usize {
        mode as usize / self.n_bins
    }

    fn count_spatial(&self, i: usize, spatial: usize) -> usize {
        self.states[i]
            .iter()
            .filter(|&&m| self.spatial(m) == spatial)
            .count()
    }

    /// `prod_m sqrt(n_m!)` for a sorted mode list.
    fn factorial_norm(modes: &[u16]) -> f64 {
        let mut norm = 1.0;
        let mut run = 0usize;
        for (i, m) in modes.iter().enumerate() {
            run = if i > 0 && modes[i - 1] == *m {
                run + 1
            } else {
                1
            };
            norm *= run as f64;
        }
        norm.sqrt()
    }
}

type BasisCache = std::sync::Mutex<HashMap<(usize, usize), Arc<Basis>>>;

fn basis_for(n_bins: usize, max_photons: usize) -> Arc<Basis> {
    use std::sync::{Mutex, OnceLock};
    static CACHE: OnceLock<BasisCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry((n_bins, max_photons))
        .or_insert_with(|| Arc::new(Basis::new(n_bins, max_photons)))
        .clone()
}

/// Density operator of up to `max_photons` photons in two spatial modes.
#[derive(Debug, Clone)]
pub struct FockState {
    grid: TimeGrid,
    budget: FockBudget,
    basis: Arc<Basis>,
    rho: DMatrix<Complex64>,
}

/// Normalized coincidence statistics of the two outputs of a beam splitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceResult {
    /// `<N3 N4> / (<N3> <N4>)`.
    pub p34: f64,
    pub v_hom: f64,
    /// `<n3(t_j) n4(t_k)>` per bin pair, normalized like `p34`.
    pub g34_matrix: Vec<Vec<f64>>,
}

impl FockState {
    fn check_budget(grid: &TimeGrid, budget: FockBudget) -> Result<()> {
        if grid.n_bins() > budget.max_bins {
            return Err(HomError::BudgetExceeded(format!(
                "{} bins exceed the configured maximum of {}",
                grid.n_bins(),
                budget.max_bins
            )));
        }
        if 2 * grid.n_bins() > u16::MAX as usize {
            return Err(HomError::BudgetExceeded("too many modes".into()));
        }
        Ok(())
    }

    fn zeros(grid: TimeGrid, budget: FockBudget) -> Result<Self> {
        Self::check_budget(&grid, budget)?;
        let basis = basis_for(grid.n_bins(), budget.max_photons);
        let dim = basis.dim();
        Ok(FockState {
            grid,
            budget,
            basis,
            rho: DMatrix::zeros(dim, dim),
        })
    }

    pub fn vacuum(grid: TimeGrid, budget: FockBudget) -> Result<Self> {
        let mut s = Self::zeros(grid, budget)?;
        s.rho[(0, 0)] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    /// Pure state `sum_i c_i |pattern_i>` where each pattern lists the
    /// `(spatial, bin)` mode of every photon. Amplitudes refer to normalized
    /// Fock basis states; the result is renormalized.
    pub fn pure(
        grid: TimeGrid,
        budget: FockBudget,
        terms: &[(Vec<(usize, usize)>, Complex64)],
    ) -> Result<Self> {
        let mut s = Self::zeros(grid, budget)?;
        let n_bins = grid.n_bins();
        let mut psi = vec![ZERO; s.basis.dim()];
        for (pattern, amp) in terms {
            if pattern.len() > budget.max_photons {
                return Err(HomError::BudgetExceeded(format!(
                    "{} photons exceed the cap of {}",
                    pattern.len(),
                    budget.max_photons
                )));
            }
            let mut modes = Vec::with_capacity(pattern.len());
            for &(sp, bin) in pattern {
                if sp > 1 || bin >= n_bins {
                    return Err(HomError::invalid(
                        "pattern",
                        format!("mode ({sp}, {bin}) out of range"),
                    ));
                }
                modes.push((sp * n_bins + bin) as u16);
            }
            modes.sort_unstable();
            psi[s.basis.idx(&modes)] += *amp;
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm <= 0.0 {
            return Err(HomError::ZeroTrace);
        }
        for (i, a) in psi.iter().enumerate() {
            for (j, b) in psi.iter().enumerate() {
                s.rho[(i, j)] = a * b.conj() / norm;
            }
        }
        Ok(s)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn budget(&self) -> FockBudget {
        self.budget
    }

    pub fn density_matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.diagonal().iter().map(|z| z.re).sum()
    }

    /// Probability of each total photon number `0..=max_photons`.
    pub fn photon_number_distribution(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.budget.max_photons + 1];
        for (i, s) in self.basis.states.iter().enumerate() {
            p[s.len()] += self.rho[(i, i)].re;
        }
        p
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.photon_number_distribution()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    fn occupies_spatial(&self, spatial: usize) -> bool {
        (0..self.basis.dim())
            .any(|i| self.rho[(i, i)].norm() > 0.0 && self.basis.count_spatial(i, spatial) > 0)
    }

    /// First-order correlation `G[j][k] = <a^dag(t_k) a(t_j)>` of one spatial
    /// mode, in per-bin (not per-ps) units.
    pub fn first_order_correlation(&self, spatial: usize) -> DMatrix<Complex64> {
        let n = self.grid.n_bins();
        let basis = &self.basis;
        let mut g = DMatrix::zeros(n, n);
        for (i, state) in basis.states.iter().enumerate() {
            for (pos, &mj) in state.iter().enumerate() {
                if basis.spatial(mj) != spatial || (pos > 0 && state[pos - 1] == mj) {
                    continue;
                }
                let nj = state.iter().filter(|&&m| m == mj).count() as f64;
                let mut reduced = state.clone();
                reduced.remove(pos);
                for k in 0..n {
                    let mk = (spatial * n + k) as u16;
                    let mut raised = reduced.clone();
                    let at = raised.partition_point(|&m| m <= mk);
                    raised.insert(at, mk);
                    let nk = raised.iter().filter(|&&m| m == mk).count() as f64;
                    let ip = basis.idx(&raised);
                    // <a_k^dag a_j> = sum rho[i, ip] <ip| a_k^dag a_j |i>
                    g[(j_bin(mj, n), k)] += self.rho[(i, ip)] * (nj * nk).sqrt();
                }
            }
        }
        g
    }

    /// Purity `Tr[rho_1^2] / p_1^2` of the normalized one-photon block.
    pub fn one_photon_purity(&self) -> Result<f64> {
        let ones: Vec<usize> = (0..self.basis.dim())
            .filter(|&i| self.basis.states[i].len() == 1)
            .collect();
        let p1: f64 = ones.iter().map(|&i| self.rho[(i, i)].re).sum();
        if p1 <= 0.0 {
            return Err(HomError::ZeroMeanPhotonNumber);
        }
        let mut acc = 0.0;
        for &i in &ones {
            for &j in &ones {
                acc += self.rho[(i, j)].norm_sqr();
            }
        }
        Ok(acc / (p1 * p1))
    }

    /// Total mean wavepacket overlap of spatial mode 0 from the explicit
    /// state: `sum |G|^2 / mu^2`.
    pub fn total_overlap(&self) -> Result<f64> {
        let g = self.first_order_correlation(0);
        let mu: f64 = g.diagonal().iter().map(|z| z.re).sum();
        if mu <= 0.0 {
            return Err(HomError::ZeroMeanPhotonNumber);
        }
        Ok(g.iter().map(|z| z.norm_sqr()).sum::<f64>() / (mu * mu))
    }

    /// Applies a beam splitter between the two spatial modes, bin by bin.
    pub fn apply_beam_splitter(&self, bs: BeamSplitter) -> FockState {
        let (c, s) = (bs.transmittance().sqrt(), bs.reflectivity().sqrt());
        let phase = Complex64::from_polar(1.0, bs.phi());
        // u[out][in]: a3 = c a1 - e^{-i phi} s a2, a4 = e^{i phi} s a1 + c a2
        let u = [
            [Complex64::new(c, 0.0), -phase.conj() * s],
            [phase * s, Complex64::new(c, 0.0)],
        ];
        let basis = &self.basis;
        let n = basis.n_bins;
        let images: Vec<Vec<(usize, Complex64)>> = basis
            .states
            .iter()
            .map(|state| {
                let pre = 1.0 / Basis::factorial_norm(state);
                let mut acc: HashMap<Vec<u16>, Complex64> = HashMap::new();
                let k = state.len();
                for choice in 0..(1usize << k) {
                    let mut amp = Complex64::new(pre, 0.0);
                    let mut out = Vec::with_capacity(k);
                    for (p, &m) in state.iter().enumerate() {
                        let input = m as usize / n;
                        let bin = m as usize % n;
                        let output = (choice >> p) & 1;
                        amp *= u[output][input];
                        out.push((output * n + bin) as u16);
                    }
                    if amp.norm() == 0.0 {
                        continue;
                    }
                    out.sort_unstable();
                    let norm = Basis::factorial_norm(&out);
                    *acc.entry(out).or_insert(ZERO) += amp * norm;
                }
                let mut v: Vec<(usize, Complex64)> = acc
                    .into_iter()
                    .filter(|(_, a)| a.norm() > 0.0)
                    .map(|(modes, a)| (basis.idx(&modes), a))
                    .collect();
                v.sort_unstable_by_key(|(i, _)| *i);
                v
            })
            .collect();

        let dim = basis.dim();
        let mut rho = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..dim {
                let r = self.rho[(i, j)];
                if r == ZERO {
                    continue;
                }
                for &(a, ua) in &images[i] {
                    let left = ua * r;
                    for &(b, ub) in &images[j] {
                        rho[(a, b)] += left * ub.conj();
                    }
                }
            }
        }
        FockState {
            grid: self.grid,
            budget: self.budget,
            basis: self.basis.clone(),
            rho,
        }
    }

    /// Partial trace over one spatial mode; the result occupies the other.
    pub fn trace_out_spatial(&self, spatial: usize) -> FockState {
        let basis = &self.basis;
        let dim = basis.dim();
        let split = |i: usize| -> (Vec<u16>, Vec<u16>) {
            basis.states[i]
                .iter()
                .partition(|&&m| basis.spatial(m) != spatial)
        };
        let parts: Vec<(usize, Vec<u16>)> = (0..dim)
            .map(|i| {
                let (keep, traced) = split(i);
                (basis.idx(&keep), traced)
            })
            .collect();
        let mut rho = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                if parts[i].1 == parts[j].1 {
                    rho[(parts[i].0, parts[j].0)] += self.rho[(i, j)];
                }
            }
        }
        FockState {
            grid: self.grid,
            budget: self.budget,
            basis: self.basis.clone(),
            rho,
        }
    }

    /// Moves everything in spatial mode 0 to spatial mode 1.
    fn shifted_to_second_port(&self) -> Result<FockState> {
        if self.occupies_spatial(1) {
            return Err(HomError::invalid(
                "state",
                "input must occupy spatial mode 0 only",
            ));
        }
        let basis = &self.basis;
        let n = basis.n_bins as u16;
        let dim = basis.dim();
        let map: Vec<usize> = (0..dim)
            .map(|i| {
                let mut moved: Vec<u16> = basis.states[i]
                    .iter()
                    .map(|&m| if m < n { m + n } else { m - n })
                    .collect();
                moved.sort_unstable();
                basis.idx(&moved)
            })
            .collect();
        let mut rho = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                rho[(map[i], map[j])] = self.rho[(i, j)];
            }
        }
        Ok(FockState {
            grid: self.grid,
            budget: self.budget,
            basis: self.basis.clone(),
            rho,
        })
    }

    /// Product state with `a` in spatial mode 0 and `b` in spatial mode 1.
    pub fn combine(a: &FockState, b: &FockState) -> Result<FockState> {
        if a.grid != b.grid {
            return Err(HomError::GridMismatch);
        }
        if a.budget != b.budget {
            return Err(HomError::invalid("budget", "inputs use different budgets"));
        }
        if a.occupies_spatial(1) {
            return Err(HomError::invalid(
                "state",
                "input must occupy spatial mode 0 only",
            ));
        }
        let b = b.shifted_to_second_port()?;
        let basis = &a.basis;
        let dim = basis.dim();
        let cap = a.budget.max_photons;
        let nz = |m: &DMatrix<Complex64>| -> Vec<(usize, usize, Complex64)> {
            let mut v = Vec::new();
            for j in 0..dim {
                for i in 0..dim {
                    if m[(i, j)] != ZERO {
                        v.push((i, j, m[(i, j)]));
                    }
                }
            }
            v
        };
        let (ea, eb) = (nz(&a.rho), nz(&b.rho));
        let mut out = FockState::zeros(a.grid, a.budget)?;
        for &(i, j, ra) in &ea {
            for &(k, l, rb) in &eb {
                let left_len = basis.states[i].len() + basis.states[k].len();
                let right_len = basis.states[j].len() + basis.states[l].len();
                if left_len > cap || right_len > cap {
                    return Err(HomError::BudgetExceeded(format!(
                        "combined input carries more than {cap} photons"
                    )));
                }
                let merge = |x: &[u16], y: &[u16]| {
                    let mut v = [x, y].concat();
                    v.sort_unstable();
                    basis.idx(&v)
                };
                let r = merge(&basis.states[i], &basis.states[k]);
                let c = merge(&basis.states[j], &basis.states[l]);
                out.rho[(r, c)] += ra * rb;
            }
        }
        Ok(out)
    }

    fn diag_moments(&self) -> (f64, f64, f64) {
        let (mut e3, mut e4, mut e34) = (0.0, 0.0, 0.0);
        for i in 0..self.basis.dim() {
            let p = self.rho[(i, i)].re;
            let n3 = self.basis.count_spatial(i, 0) as f64;
            let n4 = self.basis.count_spatial(i, 1) as f64;
            e3 += p * n3;
            e4 += p * n4;
            e34 += p * n3 * n4;
        }
        (e3, e4, e34)
    }
}

fn j_bin(mode: u16, n_bins: usize) -> usize {
    mode as usize % n_bins
}

/// Lifts a vacuum + one-photon source into spatial mode 0.
pub fn embed(source: &SourceState, budget: FockBudget) -> Result<FockState> {
    let xi = source.one_photon();
    let grid = *xi.grid();
    let mut s = FockState::zeros(grid, budget)?;
    if budget.max_photons < 1 && source.p_one() > 0.0 {
        return Err(HomError::BudgetExceeded("photon cap is zero".into()));
    }
    s.rho[(0, 0)] = Complex64::new(source.p_vac(), 0.0);
    let n = grid.n_bins();
    if source.p_one() > 0.0 {
        let w = source.p_one() * grid.dt();
        for j in 0..n {
            for k in 0..n {
                let (a, b) = (s.basis.idx(&[j as u16]), s.basis.idx(&[k as u16]));
                s.rho[(a, b)] = xi.xi()[(j, k)] * w;
            }
        }
    }
    Ok(s)
}

/// `a` enters port 1 and `b` port 2 of `bs`.
pub fn beam_split(a: &FockState, b: &FockState, bs: BeamSplitter) -> Result<FockState> {
    Ok(FockState::combine(a, b)?.apply_beam_splitter(bs))
}

/// Coincidence probability and visibility of `a` and `b` interfering on `bs`.
pub fn oracle_hom(a: &FockState, b: &FockState, bs: BeamSplitter) -> Result<CoincidenceResult> {
    let out = beam_split(a, b, bs)?;
    let (e3, e4, e34) = out.diag_moments();
    let norm = e3 * e4;
    if norm <= 0.0 {
        return Err(HomError::ZeroDenominator(
            "oracle_hom: an output port is dark",
        ));
    }
    let n = out.grid.n_bins();
    let mut g34 = vec![vec![0.0; n]; n];
    let basis = &out.basis;
    for i in 0..basis.dim() {
        let p = out.rho[(i, i)].re;
        if p == 0.0 {
            continue;
        }
        for &m3 in basis.states[i].iter().filter(|&&m| basis.spatial(m) == 0) {
            for &m4 in basis.states[i].iter().filter(|&&m| basis.spatial(m) == 1) {
                g34[j_bin(m3, n)][j_bin(m4, n)] += p / norm;
            }
        }
    }
    let p34 = e34 / norm;
    Ok(CoincidenceResult {
        p34,
        v_hom: 1.0 - 2.0 * p34,
        g34_matrix: g34,
    })
}

/// `<N(N-1)> / <N>^2` of the explicit state.
pub fn oracle_g2(s: &FockState) -> Result<f64> {
    let dist = s.photon_number_distribution();
    let mu: f64 = dist.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    if mu <= 0.0 {
        return Err(HomError::ZeroMeanPhotonNumber);
    }
    let fact2: f64 = dist
        .iter()
        .enumerate()
        .map(|(n, p)| (n * n.saturating_sub(1)) as f64 * p)
        .sum();
    Ok(fact2 / (mu * mu))
}

/// Each photon independently survives with probability `transmission`.
pub fn apply_loss(s: &FockState, transmission: f64) -> Result<FockState> {
    if !(transmission > 0.0 && transmission <= 1.0) {
        return Err(HomError::invalid(
            "transmission",
            format!("must lie in (0, 1], got {transmission}"),
        ));
    }
    if transmission == 1.0 {
        return Ok(s.clone());
    }
    let basis = &s.basis;
    let dim = basis.dim();
    let mut rho = s.rho.clone();
    let coef = |n: usize, k: usize| -> f64 {
        let binom = (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
        (binom * transmission.powi((n - k) as i32) * (1.0 - transmission).powi(k as i32)).sqrt()
    };
    for mode in 0..(2 * basis.n_bins) as u16 {
        let occ: Vec<usize> = basis
            .states
            .iter()
            .map(|st| st.iter().filter(|&&m| m == mode).count())
            .collect();
        if occ.iter().all(|&o| o == 0) {
            continue;
        }
        // removing k photons of this mode from each basis state
        let lowered: Vec<Vec<usize>> = (0..dim)
            .map(|i| {
                (0..=occ[i])
                    .map(|k| {
                        let mut v = basis.states[i].clone();
                        for _ in 0..k {
                            let pos = v.iter().position(|&m| m == mode).unwrap_or(0);
                            v.remove(pos);
                        }
                        basis.idx(&v)
                    })
                    .collect()
            })
            .collect();
        let mut next = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..dim {
                let r = rho[(i, j)];
                if r == ZERO {
                    continue;
                }
                for k in 0..=occ[i].min(occ[j]) {
                    let w = coef(occ[i], k) * coef(occ[j], k);
                    next[(lowered[i][k], lowered[j][k])] += r * w;
                }
            }
        }
        rho = next;
    }
    Ok(FockState {
        grid: s.grid,
        budget: s.budget,
        basis: s.basis.clone(),
        rho,
    })
}

/// Explicit transmitted state of the noise-mixing beam splitter: signal on
/// port 1, noise on port 2, reflected port traced out.
pub fn oracle_mix(
    signal: &SourceState,
    noise: &SourceState,
    angle: MixAngle,
    budget: FockBudget,
) -> Result<FockState> {
    let s = embed(signal, budget)?;
    let n = embed(noise, budget)?;
    let bs = BeamSplitter::from_angle(angle.radians(), 0.0)?;
    Ok(beam_split(&s, &n, bs)?.trace_out_spatial(1))
}
