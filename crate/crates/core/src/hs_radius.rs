//! Bounds on the Hale–Silkowski radius
//!
//! ```text
//! ρ_HS(M) = sup_ξ ρ( ∫ e^{iξ(θ)} dM(θ) )
//! ```
//!
//! over measurable phase functions `ξ`. Lower bounds come from simple
//! functions: the support of `μ_M` is cut into bins `E_k` with matrices
//! `B_k = μ_M(E_k)` and `ρ(Σ B_k e^{iθ_k})` is maximized over the torus.
//! The upper bound is `Var(M)`.
//!
//! The module also builds destabilizing delay perturbations for systems with
//! `ρ_HS >= 1` and samples random near-identity perturbations.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat};
use crate::measure::MatrixNbv;
use crate::perturbation::{Bin, Binning, Perturbation, PiecewiseLinear};
use crate::spectrum::{self, StripQuery};

/// Restarts used when the caller does not choose.
pub const DEFAULT_RESTARTS: usize = 16;
/// Density bins added to the atom bins by default.
pub const DEFAULT_DENSITY_BINS: usize = 8;

const ASCENT_TOL: f64 = 1e-10;
const EIGEN_GAP_TOL: f64 = 1e-8;
const CONVERGED_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 200;
const SCAN_POINTS: usize = 16;
const GOLDEN_ITERS: usize = 48;

/// Subset `E_k` of `[-1, 0]` carrying one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinDescriptor {
    /// The single point `θ = -tau` of atom `index`.
    Atom { index: usize, tau: f64 },
    /// Density mass on `(lo, hi)`, atoms excluded.
    Interval { lo: f64, hi: f64 },
}

impl BinDescriptor {
    pub fn diameter(&self) -> f64 {
        match *self {
            BinDescriptor::Atom { .. } => 0.0,
            BinDescriptor::Interval { lo, hi } => hi - lo,
        }
    }

    /// `(inf E, sup E)`.
    pub fn extent(&self) -> (f64, f64) {
        match *self {
            BinDescriptor::Atom { tau, .. } => (-tau, -tau),
            BinDescriptor::Interval { lo, hi } => (lo, hi),
        }
    }
}

/// Simple phase function `ξ = Σ θ_k 1_{E_k}` together with `B_k = μ_M(E_k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseAssignment {
    pub bins: Vec<BinDescriptor>,
    pub phases: Vec<f64>,
    pub bin_matrices: Vec<Mat>,
}

impl PhaseAssignment {
    /// Bins of `m`: one per atom and `density_bins` uniform sub-intervals of
    /// the nonzero density pieces (at least one per piece, split in
    /// proportion to length). All phases start at zero.
    pub fn bins_of(m: &MatrixNbv, density_bins: usize) -> PhaseAssignment {
        let mut bins = Vec::new();
        let mut mats = Vec::new();
        for (index, a) in m.atoms().iter().enumerate() {
            bins.push(BinDescriptor::Atom { index, tau: a.tau });
            mats.push(a.matrix.clone());
        }
        let pieces: Vec<(f64, f64, &Mat)> =
            m.density().intervals().filter(|(_, _, c)| !linalg::is_zero(c)).collect();
        let support: f64 = pieces.iter().map(|(lo, hi, _)| hi - lo).sum();
        for &(lo, hi, c) in &pieces {
            let share = density_bins as f64 * (hi - lo) / support;
            let n = (share.round() as usize).max(1);
            let w = (hi - lo) / n as f64;
            for i in 0..n {
                let a = lo + w * i as f64;
                let b = if i + 1 == n { hi } else { lo + w * (i + 1) as f64 };
                bins.push(BinDescriptor::Interval { lo: a, hi: b });
                mats.push(c * (b - a));
            }
        }
        let phases = vec![0.0; bins.len()];
        PhaseAssignment { bins, phases, bin_matrices: mats }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn with_phases(&self, phases: Vec<f64>) -> Result<PhaseAssignment> {
        if phases.len() != self.bins.len() {
            return Err(Error::InvalidArgument(format!(
                "{} phases for {} bins",
                phases.len(),
                self.bins.len()
            )));
        }
        Ok(PhaseAssignment { phases, ..self.clone() })
    }

    /// `Σ B_k e^{iθ_k}`.
    pub fn combined(&self) -> CMat {
        combine(&self.bin_matrices, &self.phases)
    }
}

fn dim_of(mats: &[Mat]) -> usize {
    mats.first().map(|m| m.nrows()).unwrap_or(0)
}

fn combine(mats: &[Mat], phases: &[f64]) -> CMat {
    let d = dim_of(mats);
    let mut acc = CMat::zeros(d, d);
    for (b, &t) in mats.iter().zip(phases) {
        add_scaled(&mut acc, b, Complex64::from_polar(1.0, t));
    }
    acc
}

fn add_scaled(acc: &mut CMat, b: &Mat, w: Complex64) {
    for (dst, src) in acc.iter_mut().zip(b.iter()) {
        *dst += w * *src;
    }
}

/// `ρ(Σ B_k e^{iθ_k})`.
pub fn rho_of_phases(pa: &PhaseAssignment) -> f64 {
    if pa.is_empty() {
        return 0.0;
    }
    linalg::spectral_radius(&pa.combined())
}

/// Lower and upper bounds on `ρ_HS(M)`.
#[derive(Debug, Clone, Serialize)]
pub struct HsEstimate {
    pub lower: f64,
    pub upper: f64,
    pub witness: PhaseAssignment,
    pub bin_count: usize,
    pub converged: bool,
}

/// Multistart torus maximization. `bin_count` counts atom bins plus density
/// bins; restart `i` draws its initial phases from a generator seeded with
/// `seed + i`, and one extra start uses all-zero phases.
pub fn estimate_rho_hs(
    m: &MatrixNbv,
    bin_count: usize,
    restarts: usize,
    seed: u64,
) -> Result<HsEstimate> {
    let n_atoms = m.atoms().len();
    if bin_count < n_atoms {
        return Err(Error::InvalidArgument(format!(
            "bin_count {bin_count} is below the number of atoms {n_atoms}"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let density_bins = bin_count - n_atoms;
    let bins = PhaseAssignment::bins_of(m, density_bins);
    let upper = m.total_variation();
    let bin_count = bins.len();
    if bins.is_empty() {
        return Ok(HsEstimate { lower: 0.0, upper, witness: bins, bin_count, converged: true });
    }
    if m.dim() == 1 {
        let phases = bins.bin_matrices.iter().map(|b| if b[(0, 0)] < 0.0 { PI } else { 0.0 }).collect();
        let witness = bins.with_phases(phases)?;
        return Ok(HsEstimate { lower: upper, upper, witness, bin_count, converged: true });
    }
    // An even density bin count refines the half count, so the coarse witness
    // lifted to these bins is an extra start; the estimate never drops under
    // this refinement.
    let mut extra = Vec::new();
    if m.has_density() && density_bins >= 2 && density_bins.is_multiple_of(2) {
        let coarse = estimate_rho_hs(m, n_atoms + density_bins / 2, restarts, seed)?;
        extra.push(lift_phases(&coarse.witness, &bins));
    }
    let (lower, phases, converged) = maximize_from(&bins.bin_matrices, restarts, seed, &extra);
    let witness = bins.with_phases(phases)?;
    Ok(HsEstimate { lower: lower.min(upper), upper, witness, bin_count, converged })
}

/// Best value, its phases and whether two or more starts agree within
/// `1e-8`.
pub fn maximize_on_torus(mats: &[Mat], restarts: usize, seed: u64) -> (f64, Vec<f64>, bool) {
    maximize_from(mats, restarts, seed, &[])
}

/// [`maximize_on_torus`] with additional starting points.
fn maximize_from(mats: &[Mat], restarts: usize, seed: u64, extra: &[Vec<f64>]) -> (f64, Vec<f64>, bool) {
    let n = mats.len();
    let runs: Vec<(f64, Vec<f64>)> = (0..=restarts + extra.len())
        .into_par_iter()
        .map(|i| {
            let start = if i > restarts {
                let p = &extra[i - restarts - 1];
                p.iter().map(|t| t - p[0]).collect()
            } else if i == restarts {
                vec![0.0; n]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
                p[0] = 0.0;
                p
            };
            ascend(mats, start)
        })
        .collect();
    let (best, phases) = runs
        .iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(v, p)| (*v, p.clone()))
        .expect("at least one start");
    let agreeing = runs.iter().filter(|r| best - r.0 <= CONVERGED_TOL).count();
    (best, phases.into_iter().map(|t| t.rem_euclid(TAU)).collect(), agreeing >= 2)
}

/// Phases on `fine` taken from the bin of `coarse` holding each atom or
/// interval midpoint.
fn lift_phases(coarse: &PhaseAssignment, fine: &PhaseAssignment) -> Vec<f64> {
    fine.bins
        .iter()
        .map(|b| {
            let hit = coarse.bins.iter().position(|c| match (*c, *b) {
                (BinDescriptor::Atom { index: i, .. }, BinDescriptor::Atom { index: j, .. }) => i == j,
                (BinDescriptor::Interval { lo, hi }, BinDescriptor::Interval { lo: a, hi: z }) => {
                    let mid = 0.5 * (a + z);
                    lo <= mid && mid <= hi
                }
                _ => false,
            });
            hit.map_or(0.0, |k| coarse.phases[k])
        })
        .collect()
}

/// Cyclic coordinate ascent with eigenvalue-gradient steps. The phase of
/// bin 0 stays fixed: a common rotation does not change `ρ`.
fn ascend(mats: &[Mat], mut phases: Vec<f64>) -> (f64, Vec<f64>) {
    let mut value = linalg::spectral_radius(&combine(mats, &phases));
    for _ in 0..MAX_SWEEPS {
        let before = value;
        for k in 1..mats.len() {
            let mut rest = combine(mats, &phases);
            add_scaled(&mut rest, &mats[k], -Complex64::from_polar(1.0, phases[k]));
            let f = |t: f64| {
                let mut s = rest.clone();
                add_scaled(&mut s, &mats[k], Complex64::from_polar(1.0, t));
                linalg::spectral_radius(&s)
            };
            let (t, v) = maximize_1d(&f, phases[k], value);
            if v > value {
                phases[k] = t;
                value = v;
            }
        }
        if let Some((p, v)) = gradient_step(mats, &phases, value) {
            phases = p;
            value = v;
        }
        if value - before < ASCENT_TOL {
            break;
        }
    }
    (value, phases)
}

/// Coarse scan followed by golden-section search around the best scan
/// point.
fn maximize_1d(f: &impl Fn(f64) -> f64, current: f64, current_value: f64) -> (f64, f64) {
    let step = TAU / SCAN_POINTS as f64;
    let (mut best_t, mut best_v) = (current, current_value);
    for i in 0..SCAN_POINTS {
        let t = current + step * i as f64;
        let v = f(t);
        if v > best_v {
            best_t = t;
            best_v = v;
        }
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (best_t - step, best_t + step);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    let (t, v) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if v > best_v {
        (t, v)
    } else {
        (best_t, best_v)
    }
}

/// One backtracking step along `∂|λ|/∂θ_k`, using
/// `dλ/dθ_k = i e^{iθ_k} (y* B_k x) / (y* x)` for a simple dominant
/// eigenvalue. Returns `None` near ties or when no step improves.
fn gradient_step(mats: &[Mat], phases: &[f64], value: f64) -> Option<(Vec<f64>, f64)> {
    let s = combine(mats, phases);
    let de = linalg::dominant_eigen(&s);
    if de.gap < EIGEN_GAP_TOL || de.value.norm() == 0.0 {
        return None;
    }
    let yx = de.left.dotc(&de.right);
    if yx.norm() < 1e-12 {
        return None;
    }
    let lam = de.value;
    let grad: Vec<f64> = mats
        .iter()
        .zip(phases)
        .enumerate()
        .map(|(k, (b, &t))| {
            if k == 0 {
                return 0.0;
            }
            let bx = linalg::to_complex(b) * &de.right;
            let dl = Complex64::i() * Complex64::from_polar(1.0, t) * de.left.dotc(&bx) / yx;
            (lam.conj() * dl).re / lam.norm()
        })
        .collect();
    let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !(gnorm > 1e-12) {
        return None;
    }
    let mut step = 0.5 / gnorm;
    for _ in 0..30 {
        let cand: Vec<f64> = phases.iter().zip(&grad).map(|(t, g)| t + step * g).collect();
        let v = linalg::spectral_radius(&combine(mats, &cand));
        if v > value {
            return Some((cand, v));
        }
        step *= 0.5;
    }
    None
}

/// Outcome of [`check_disk_vs_torus`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiskReport {
    pub samples: usize,
    pub torus_lower: f64,
    pub max_value: f64,
    /// `max(0, max_value - torus_lower)`.
    pub max_violation: f64,
    /// Samples exceeding the torus bound by more than `tolerance`.
    pub violations: usize,
    pub tolerance: f64,
}

/// Samples `t` uniformly in the closed unit polydisk and compares
/// `ρ(Σ B_k t_k)` with the torus lower bound of `est`.
pub fn check_disk_vs_torus(est: &HsEstimate, samples: usize, seed: u64) -> DiskReport {
    const TOL: f64 = 1e-6;
    const CHUNK: usize = 256;
    let mats = &est.witness.bin_matrices;
    let d = dim_of(mats);
    let chunks = samples.div_ceil(CHUNK);
    let values: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c as u64));
            let count = CHUNK.min(samples - c * CHUNK);
            (0..count)
                .map(|_| {
                    let mut s = CMat::zeros(d, d);
                    for b in mats {
                        let r = rng.gen::<f64>().sqrt();
                        let t = rng.gen_range(0.0..TAU);
                        add_scaled(&mut s, b, Complex64::from_polar(r, t));
                    }
                    if d == 0 {
                        0.0
                    } else {
                        linalg::spectral_radius(&s)
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let max_value = values.iter().copied().fold(0.0, f64::max);
    DiskReport {
        samples,
        torus_lower: est.lower,
        max_value,
        max_violation: (max_value - est.lower).max(0.0),
        violations: values.iter().filter(|&&v| v > est.lower + TOL).count(),
        tolerance: TOL,
    }
}

/// How the new delays are placed inside their windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayChoice {
    /// `τ_k = (2π m_k - θ'_k) / y` for a common frequency `y`, so that
    /// `e^{-iyτ_k}` reproduces the witness phases exactly and the predicted
    /// root sits near `Im s = y`.
    #[default]
    PhaseAligned,
    /// `√p_k` multiples (`p_k` the k-th prime) folded into each window.
    IrrationalMultiples,
}

/// Everything [`build_destabilizer`] chose.
#[derive(Debug, Clone, Serialize)]
pub struct DestabilizerDiagnostics {
    pub rho_lower: f64,
    pub delta_used: f64,
    pub delta1: f64,
    pub rho_target: f64,
    pub witness_rho: f64,
    pub sup_distance: f64,
    pub frequency: f64,
    /// New delay of each witness bin, in bin order.
    pub delays: Vec<f64>,
    pub windows: Vec<(f64, f64)>,
    /// `A_k = μ_M(E_k)` of the resulting difference system.
    pub matrices: Vec<Mat>,
    pub witness: PhaseAssignment,
    /// Imaginary half-height that contains the predicted root.
    pub suggested_im_max: f64,
    pub delay_choice: DelayChoice,
}

#[derive(Debug, Clone)]
pub struct Destabilizer {
    pub perturbation: Binning,
    pub diagnostics: DestabilizerDiagnostics,
}

/// Binning `φ` with `‖φ - id‖_∞ < eps` whose pushforward has a root with
/// real part at least `ln ρ_0 - delta`, where `ρ_0 >= 1` is the torus lower
/// bound. For `ρ_0 > 1`, `delta` is capped at `ln ρ_0`.
pub fn build_destabilizer(
    m: &MatrixNbv,
    eps: f64,
    delta: f64,
    seed: u64,
    choice: DelayChoice,
) -> Result<Destabilizer> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let n_atoms = m.atoms().len();
    let coarse = estimate_rho_hs(m, n_atoms + DEFAULT_DENSITY_BINS, DEFAULT_RESTARTS, seed)?;
    let rho0 = coarse.lower;
    if rho0 < 1.0 {
        return Err(Error::HypothesisNotMet { rho_lower: rho0 });
    }
    let delta_used = if rho0 > 1.0 { delta.min(rho0.ln()) } else { delta };
    let delta1 = if rho0 > 1.0 { delta_used / 2.0 } else { eps * delta_used / 16.0 };
    let rho_target = rho0 * (-delta1).exp();

    let witness = refine_witness(&coarse.witness, eps / 2.0);
    let witness_rho = rho_of_phases(&witness);
    if witness_rho < rho_target {
        return Err(Error::Construction(format!(
            "refined witness lost mass: {witness_rho} < {rho_target}"
        )));
    }

    let windows: Vec<(f64, f64)> = witness
        .bins
        .iter()
        .map(|b| {
            let (inf, sup) = b.extent();
            ((inf - eps / 4.0).max(-1.0), (sup + eps / 4.0).min(-eps / 8.0))
        })
        .collect();
    if let Some((lo, hi)) = windows.iter().find(|(lo, hi)| hi - lo < eps / 8.0 * (1.0 - 1e-12)) {
        return Err(Error::Construction(format!("delay window ({lo}, {hi}) shorter than eps/8")));
    }
    let min_len = windows.iter().map(|(lo, hi)| hi - lo).fold(f64::INFINITY, f64::min);

    let rotation = if witness.is_empty() {
        0.0
    } else {
        linalg::dominant_eigen(&witness.combined()).value.arg()
    };
    let (delays, frequency) = match choice {
        DelayChoice::PhaseAligned => {
            let y = 1.05 * TAU / min_len;
            let delays: Vec<f64> = windows
                .iter()
                .zip(&witness.phases)
                .map(|(&(lo, hi), &theta)| {
                    // τ ∈ (-hi, -lo) with y τ ≡ -(θ - rotation) (mod 2π)
                    let target = (-(theta - rotation)).rem_euclid(TAU);
                    let (tmin, tmax) = (-hi, -lo);
                    let k = ((y * tmin - target) / TAU).ceil();
                    let mut tau = (target + TAU * k) / y;
                    if tau <= tmin {
                        tau += TAU / y;
                    }
                    debug_assert!(tau < tmax);
                    tau
                })
                .collect();
            (delays, y)
        }
        DelayChoice::IrrationalMultiples => {
            let delays: Vec<f64> = windows
                .iter()
                .enumerate()
                .map(|(k, &(lo, hi))| {
                    let r = (nth_prime(k + (seed % 7) as usize) as f64).sqrt();
                    let frac = r.fract();
                    let u = 0.05 + 0.9 * frac;
                    -(lo + u * (hi - lo))
                })
                .collect();
            (delays, f64::NAN)
        }
    };

    let perturbation = binning_for(&witness, &delays, eps)?;
    let sup_distance = perturbation.sup_distance_to_identity();
    if !(sup_distance < eps) {
        return Err(Error::Construction(format!(
            "perturbation distance {sup_distance} is not below eps = {eps}"
        )));
    }
    let suggested_im_max = if frequency.is_finite() {
        frequency + TAU + 10.0
    } else {
        spectrum::IM_MAX_CAP
    };
    let diagnostics = DestabilizerDiagnostics {
        rho_lower: rho0,
        delta_used,
        delta1,
        rho_target,
        witness_rho,
        sup_distance,
        frequency,
        delays,
        windows,
        matrices: witness.bin_matrices.clone(),
        witness,
        suggested_im_max,
        delay_choice: choice,
    };
    Ok(Destabilizer { perturbation, diagnostics })
}

/// Splits interval bins to diameter below `max_diam`, each piece keeping the
/// phase of its parent; the combined matrix is unchanged.
fn refine_witness(pa: &PhaseAssignment, max_diam: f64) -> PhaseAssignment {
    let mut out = PhaseAssignment { bins: Vec::new(), phases: Vec::new(), bin_matrices: Vec::new() };
    for ((b, &t), mat) in pa.bins.iter().zip(&pa.phases).zip(&pa.bin_matrices) {
        match *b {
            BinDescriptor::Atom { .. } => {
                out.bins.push(*b);
                out.phases.push(t);
                out.bin_matrices.push(mat.clone());
            }
            BinDescriptor::Interval { lo, hi } => {
                let n = ((hi - lo) / (0.99 * max_diam)).ceil().max(1.0) as usize;
                let w = (hi - lo) / n as f64;
                for i in 0..n {
                    let a = lo + w * i as f64;
                    let c = if i + 1 == n { hi } else { lo + w * (i + 1) as f64 };
                    out.bins.push(BinDescriptor::Interval { lo: a, hi: c });
                    out.phases.push(t);
                    out.bin_matrices.push(mat * ((c - a) / (hi - lo)));
                }
            }
        }
    }
    out
}

/// Binning sending each witness bin to `-τ_k`; uncovered stretches carry no
/// mass and are cut into cells shorter than `eps / 2` mapped to their own
/// midpoints.
fn binning_for(witness: &PhaseAssignment, delays: &[f64], eps: f64) -> Result<Binning> {
    let mut cells = Vec::new();
    let mut covered: Vec<(f64, f64, f64)> = Vec::new();
    for (b, &tau) in witness.bins.iter().zip(delays) {
        match *b {
            BinDescriptor::Atom { tau: t0, .. } => {
                cells.push(Bin { from: (-t0, -t0), to: -tau });
            }
            BinDescriptor::Interval { lo, hi } => covered.push((lo, hi, -tau)),
        }
    }
    covered.sort_by(|a, b| a.0.total_cmp(&b.0));
    let filler = |a: f64, b: f64, cells: &mut Vec<Bin>| {
        if b - a <= 0.0 {
            return;
        }
        let n = ((b - a) / (0.49 * eps)).ceil().max(1.0) as usize;
        let w = (b - a) / n as f64;
        for i in 0..n {
            let lo = a + w * i as f64;
            let hi = if i + 1 == n { b } else { a + w * (i + 1) as f64 };
            cells.push(Bin { from: (lo, hi), to: 0.5 * (lo + hi) });
        }
    };
    let mut cursor = -1.0;
    for &(lo, hi, to) in &covered {
        filler(cursor, lo, &mut cells);
        cells.push(Bin { from: (lo, hi), to });
        cursor = hi;
    }
    filler(cursor, 0.0, &mut cells);
    Binning::new(cells)
}

fn nth_prime(n: usize) -> u64 {
    let mut count = 0;
    let mut p = 1u64;
    while count <= n {
        p += 1;
        if (2..).take_while(|q| q * q <= p).all(|q| !p.is_multiple_of(q)) {
            count += 1;
        }
    }
    p
}

/// One sampled perturbation.
#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub index: usize,
    #[serde(skip)]
    pub perturbation: Perturbation,
    pub sup_distance: f64,
    /// `None` when the pushforward is not well posed or the count failed.
    pub abscissa: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SamplingReport {
    pub eps: f64,
    pub rho_lower: f64,
    pub max_abscissa: f64,
    /// `-max_abscissa`.
    pub margin: f64,
    /// Present when `rho_lower < 1`: whether every sampled abscissa is
    /// negative.
    pub all_negative: Option<bool>,
    pub trials: Vec<TrialResult>,
}

/// Random perturbation with `‖φ - id‖_∞ < eps`: even draws jitter the knots
/// of a piecewise-linear map, odd draws bin `[-1, 0]` into cells shorter than
/// `eps`.
pub fn random_perturbation(eps: f64, rng: &mut ChaCha8Rng, binning: bool) -> Result<Perturbation> {
    if binning {
        let mut cells = Vec::new();
        let mut a = -1.0;
        while a < 0.0 {
            let len = rng.gen_range(0.2 * eps..0.95 * eps);
            let b: f64 = if a + len >= -1e-9 { 0.0 } else { a + len };
            let lo = (b - 0.95 * eps).max(-1.0);
            let hi = (a + 0.95 * eps).min(0.0);
            cells.push(Bin { from: (a, b), to: rng.gen_range(lo..=hi) });
            a = b;
        }
        Ok(Perturbation::Binning(Binning::new(cells)?))
    } else {
        let k = rng.gen_range(4..=16usize);
        let mut knots = Vec::with_capacity(k + 1);
        let mut prev = -1.0f64;
        for i in 0..=k {
            let t = if i == k { 0.0 } else { -1.0 + i as f64 / k as f64 };
            let v = (t + rng.gen_range(-0.9 * eps..0.9 * eps)).clamp(-1.0, 0.0).max(prev);
            knots.push((t, v));
            prev = v;
        }
        Ok(Perturbation::PiecewiseLinear(PiecewiseLinear::new(knots)?))
    }
}

/// Spectral abscissa of `trials` random pushforwards. Trial `i` uses a
/// generator seeded with `seed + i`; `im_max` overrides the default window.
pub fn sample_strong_stability(
    m: &MatrixNbv,
    eps: f64,
    trials: usize,
    seed: u64,
    im_max: Option<f64>,
) -> Result<SamplingReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let wp = m.check_wellposed();
    if !wp.is_ok() {
        return Err(Error::NotWellPosed { det: wp.det() });
    }
    let n_atoms = m.atoms().len();
    let rho_lower =
        estimate_rho_hs(m, n_atoms + DEFAULT_DENSITY_BINS, DEFAULT_RESTARTS, seed)?.lower;
    let results: Vec<TrialResult> = (0..trials)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
            let phi = random_perturbation(eps, &mut rng, index % 2 == 1)
                .expect("random perturbations satisfy their invariants");
            let sup_distance = phi.sup_distance_to_identity();
            let pushed = m.pushforward(&phi);
            let mut q = StripQuery::default_for(&pushed);
            if let Some(im) = im_max {
                q.im_max = im;
            }
            let (abscissa, error) = match spectrum::spectral_abscissa(&pushed, &q) {
                Ok(r) => (Some(r.abscissa()), None),
                Err(e) => (None, Some(e.to_string())),
            };
            TrialResult { index, perturbation: phi, sup_distance, abscissa, error }
        })
        .collect();
    let max_abscissa =
        results.iter().filter_map(|t| t.abscissa).fold(f64::NEG_INFINITY, f64::max);
    Ok(SamplingReport {
        eps,
        rho_lower,
        max_abscissa,
        margin: -max_abscissa,
        all_negative: (rho_lower < 1.0).then_some(max_abscissa < 0.0),
        trials: results,
    })
}
