//! Characteristic roots, spectral abscissa and growth bounds.
//!
//! Roots are counted with the argument principle on rectangle boundaries and
//! located by recursive subdivision followed by damped Newton polishing. The
//! rightmost real part is bracketed by bisection on root counts, which is
//! robust for the complex-valued `Δ`.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::fmt::Write as _;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::Serialize;

use crate::charfun::{self, eval_delta, CharEval};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::measure::MatrixNbv;

/// Abscissa brackets are refined to this width.
pub const BRACKET_WIDTH: f64 = 1e-8;
/// Bisection width before roots are located in the remaining band.
const COARSE_WIDTH: f64 = 0.05;
/// Newton success threshold relative to `1 + ‖L(s)‖`.
pub const NEWTON_TOL: f64 = 1e-12;
/// Reported roots never exceed this residual relative to `1 + ‖L(s)‖`.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-9;
/// Upper limit on the default imaginary window.
pub const IM_MAX_CAP: f64 = 400.0;

const BOUNDARY_TOL: f64 = 1e-12;
const MAX_DEPTH: u32 = 48;
const NEWTON_MAX_ITER: usize = 50;
const INFLATE_RETRIES: usize = 5;

/// Axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Rect { re_min, re_max, im_min, im_max }
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn contains(&self, z: Complex64, slack: f64) -> bool {
        z.re >= self.re_min - slack
            && z.re <= self.re_max + slack
            && z.im >= self.im_min - slack
            && z.im <= self.im_max + slack
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))
    }

    /// Scales the rectangle about its center.
    pub fn inflate(&self, factor: f64) -> Rect {
        let c = self.center();
        let (hw, hh) = (0.5 * self.width() * factor, 0.5 * self.height() * factor);
        Rect::new(c.re - hw, c.re + hw, c.im - hh, c.im + hh)
    }
}

/// Search window for root finding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StripQuery {
    pub re_min: f64,
    pub re_max: f64,
    /// Roots are searched in `|Im s| <= im_max`.
    pub im_max: f64,
    /// Initial contour samples per unit length.
    pub grid_density: usize,
}

impl StripQuery {
    pub fn new(re_min: f64, re_max: f64, im_max: f64) -> Result<Self> {
        if !(re_min < re_max) || !(im_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "strip query needs re_min < re_max and im_max > 0 (got {re_min}, {re_max}, {im_max})"
            )));
        }
        Ok(StripQuery { re_min, re_max, im_max, grid_density: 4 })
    }

    /// Window heuristics: a full period (plus one) for commensurate atom
    /// systems, `2π/min_gap + 10` otherwise, capped at [`IM_MAX_CAP`].
    pub fn default_for(m: &MatrixNbv) -> Self {
        let im_max = match detect_commensurate_base(m) {
            Some(h) => TAU / h + 1.0,
            None => TAU / min_delay_gap(m) + 10.0,
        }
        .min(IM_MAX_CAP);
        let bound = m
            .reduce_zero_atom()
            .ok()
            .and_then(|r| certified_growth_bound(&r).ok())
            .filter(|b| b.is_finite())
            .unwrap_or(0.0);
        StripQuery { re_min: bound.min(0.0) - 20.0, re_max: f64::INFINITY, im_max, grid_density: 4 }
    }

    pub fn with_im_max(mut self, im_max: f64) -> Self {
        self.im_max = im_max;
        self
    }

    pub fn with_re_min(mut self, re_min: f64) -> Self {
        self.re_min = re_min;
        self
    }
}

/// Smallest spacing in `{0} ∪ {τ_k}`; `1` without atoms.
fn min_delay_gap(m: &MatrixNbv) -> f64 {
    let mut taus: Vec<f64> = std::iter::once(0.0).chain(m.atoms().iter().map(|a| a.tau)).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus.windows(2).map(|w| w[1] - w[0]).fold(1.0, f64::min).max(1e-6)
}

/// How much of the spectrum a [`SpectrumResult`] accounts for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowTag {
    /// Roots with `|Im s| > im_max` are not excluded.
    WindowLimited,
    /// Atoms-only commensurate system; the window covers a full period of
    /// the root pattern, so nothing is missed to the right of `re_min`.
    PeriodComplete,
    /// `Δ ≡ const`: there are no roots at all.
    NoRoots,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountCertificate {
    pub rect: Rect,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    /// Polished roots near the right edge of the spectrum, rightmost first.
    pub roots: Vec<Complex64>,
    pub abscissa_bracket: (f64, f64),
    pub tag: WindowTag,
    pub count_certificates: Vec<CountCertificate>,
    pub certified_bound: f64,
}

impl SpectrumResult {
    pub fn rightmost(&self) -> Option<Complex64> {
        self.roots.iter().copied().max_by(|a, b| a.re.total_cmp(&b.re))
    }

    /// Real part of the rightmost polished root, or the bracket's upper end
    /// when no located root lies in the bracket.
    pub fn abscissa(&self) -> f64 {
        let (lo, hi) = self.abscissa_bracket;
        match self.rightmost() {
            Some(r) if r.re >= lo - BRACKET_WIDTH && r.re <= hi + BRACKET_WIDTH => r.re,
            _ => hi,
        }
    }
}

/// `g(a) = Σ‖A_k‖e^{-aτ_k} + Σ‖C_j‖ ∫_{b_{j-1}}^{b_j} e^{aθ}dθ`.
fn growth_majorant(m: &MatrixNbv, a: f64) -> f64 {
    let norm = m.norm();
    let atoms: f64 = m.atoms().iter().map(|at| norm.of(&at.matrix) * (-a * at.tau).exp()).sum();
    let dens: f64 = m
        .density()
        .intervals()
        .map(|(lo, hi, c)| {
            let len = hi - lo;
            let w = if a == 0.0 { len } else { (a * lo).exp() * (a * len).exp_m1() / a };
            norm.of(c) * w
        })
        .sum();
    atoms + dens
}

/// The unique `a*` with `g(a*) = 1`. Since `‖L(s)‖ <= g(Re s)`, no root of
/// `Δ` lies to the right of `a*`. Returns `-∞` for the zero measure.
pub fn certified_growth_bound(m: &MatrixNbv) -> Result<f64> {
    if m.zero_atom().is_some() {
        return Err(Error::AtomAtZero);
    }
    if m.total_variation() == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let g = |a: f64| growth_majorant(m, a);
    let (mut lo, mut hi) = (0.0, 0.0);
    if g(0.0) >= 1.0 {
        hi = 1.0;
        while g(hi) >= 1.0 {
            lo = hi;
            hi *= 2.0;
        }
    } else {
        lo = -1.0;
        while g(lo) < 1.0 {
            hi = lo;
            lo *= 2.0;
        }
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CountFailure {
    BoundaryRoot,
    Indeterminate,
}

struct Sample {
    z: Complex64,
    f: Complex64,
    log_deriv: Complex64,
}

fn sample(m: &MatrixNbv, z: Complex64) -> std::result::Result<Sample, CountFailure> {
    let e = eval_delta(m, z);
    let scale = (1.0 + linalg::frobenius(&e.l)).powi(m.dim() as i32);
    if !(e.delta.norm() > BOUNDARY_TOL * scale) {
        return Err(CountFailure::BoundaryRoot);
    }
    Ok(Sample { z, f: e.delta, log_deriv: e.delta_prime / e.delta })
}

/// Phase increment of `Δ` along a segment; subdivides until each piece moves
/// less than π/4, its complex log increment agrees with the trapezoid
/// estimate of `∫ Δ'/Δ`, and it is no longer than the Newton distance
/// `|Δ/Δ'|` at either end. The last two keep a pair of roots close to the
/// segment from cancelling its phase swing modulo 2π.
fn segment_phase(
    m: &MatrixNbv,
    a: &Sample,
    b: &Sample,
    depth: u32,
) -> std::result::Result<f64, CountFailure> {
    let dlog = (b.f / a.f).ln();
    let h = b.z - a.z;
    let trap = h * (a.log_deriv + b.log_deriv) * 0.5;
    let reach = h.norm() * a.log_deriv.norm().max(b.log_deriv.norm());
    if dlog.im.abs() < FRAC_PI_4 && (trap - dlog).norm() < 0.1 && reach <= 1.0 {
        return Ok(dlog.im);
    }
    if depth >= MAX_DEPTH {
        return Err(CountFailure::Indeterminate);
    }
    let mid = sample(m, (a.z + b.z) * 0.5)?;
    Ok(segment_phase(m, a, &mid, depth + 1)? + segment_phase(m, &mid, b, depth + 1)?)
}

fn edge_phase(
    m: &MatrixNbv,
    z0: Complex64,
    z1: Complex64,
    density: usize,
) -> std::result::Result<f64, CountFailure> {
    let n = (((z1 - z0).norm() * density as f64).ceil() as usize).max(1);
    let mut prev = sample(m, z0)?;
    let mut total = 0.0;
    for i in 1..=n {
        let z = if i == n { z1 } else { z0 + (z1 - z0) * (i as f64 / n as f64) };
        let next = sample(m, z)?;
        total += segment_phase(m, &prev, &next, 0)?;
        prev = next;
    }
    Ok(total)
}

fn winding(m: &MatrixNbv, r: &Rect, density: usize) -> std::result::Result<usize, CountFailure> {
    let c = [
        Complex64::new(r.re_min, r.im_min),
        Complex64::new(r.re_max, r.im_min),
        Complex64::new(r.re_max, r.im_max),
        Complex64::new(r.re_min, r.im_max),
    ];
    let mut total = 0.0;
    for i in 0..4 {
        total += edge_phase(m, c[i], c[(i + 1) % 4], density)?;
    }
    winding_number(total)
}

fn winding_number(total_phase: f64) -> std::result::Result<usize, CountFailure> {
    let w = total_phase / TAU;
    let k = w.round();
    if (w - k).abs() > 0.1 || k < 0.0 {
        return Err(CountFailure::Indeterminate);
    }
    Ok(k as usize)
}

/// Root count with the chosen rectangle; see [`count_roots_rect`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootCount {
    pub count: usize,
    pub rect: Rect,
}

/// Number of roots of `Δ` (with multiplicity) inside `rect`. A root on the
/// boundary triggers up to five 1% inflations of the rectangle; the rectangle
/// actually used is returned.
pub fn count_roots_rect(m: &MatrixNbv, rect: Rect) -> Result<RootCount> {
    let mut r = rect;
    for _ in 0..=INFLATE_RETRIES {
        match winding(m, &r, 4) {
            Ok(count) => return Ok(RootCount { count, rect: r }),
            Err(CountFailure::BoundaryRoot) => r = r.inflate(1.01),
            Err(CountFailure::Indeterminate) => break,
        }
    }
    Err(Error::IndeterminateCount(format!(
        "argument principle failed on [{}, {}] x [{}, {}]",
        rect.re_min, rect.re_max, rect.im_min, rect.im_max
    )))
}

/// Count of `[re_min, right] x [-im, im]` reusing the phase increment
/// `right_phase` of the fixed right edge; falls back to [`count_nudged`]
/// when the cheaper contour touches a root.
fn count_left_of(
    m: &MatrixNbv,
    rect: Rect,
    right_phase: f64,
    density: usize,
) -> Result<RootCount> {
    let c = [
        Complex64::new(rect.re_min, rect.im_min),
        Complex64::new(rect.re_max, rect.im_min),
        Complex64::new(rect.re_max, rect.im_max),
        Complex64::new(rect.re_min, rect.im_max),
    ];
    let phase = edge_phase(m, c[0], c[1], density).and_then(|bottom| {
        let top = edge_phase(m, c[2], c[3], density)?;
        let left = edge_phase(m, c[3], c[0], density)?;
        Ok(bottom + right_phase + top + left)
    });
    match phase.and_then(winding_number) {
        Ok(count) => Ok(RootCount { count, rect }),
        Err(CountFailure::BoundaryRoot) => count_nudged(m, rect, density),
        Err(CountFailure::Indeterminate) => Err(Error::IndeterminateCount(format!(
            "argument principle failed on [{}, {}] x [{}, {}]",
            rect.re_min, rect.re_max, rect.im_min, rect.im_max
        ))),
    }
}

/// Count used inside the solvers: a boundary hit nudges the edges by a
/// negligible amount instead of inflating the rectangle.
fn count_nudged(m: &MatrixNbv, rect: Rect, density: usize) -> Result<RootCount> {
    for k in 0..8 {
        let eps = 3e-10 * k as f64;
        let r = Rect::new(
            rect.re_min - eps * (1.0 + rect.re_min.abs()),
            rect.re_max + 0.5 * eps * (1.0 + rect.re_max.abs()),
            rect.im_min - 300.0 * eps,
            rect.im_max + 250.0 * eps,
        );
        match winding(m, &r, density) {
            Ok(count) => return Ok(RootCount { count, rect: r }),
            Err(CountFailure::BoundaryRoot) => continue,
            Err(CountFailure::Indeterminate) => break,
        }
    }
    Err(Error::IndeterminateCount(format!(
        "argument principle failed on [{}, {}] x [{}, {}]",
        rect.re_min, rect.re_max, rect.im_min, rect.im_max
    )))
}

fn newton_converged(m: &MatrixNbv, e: &CharEval, tol: f64) -> bool {
    e.delta.norm() <= tol * (1.0 + m.norm().of_complex(&e.l))
}

/// Damped Newton on `Δ` from `s0`: full steps, halved while `|Δ|` fails to
/// decrease. Returns the root when `|Δ| <= 1e-12 (1 + ‖L‖)` (or the looser
/// reporting threshold once the iteration stalls).
pub fn polish_root(m: &MatrixNbv, s0: Complex64) -> Option<Complex64> {
    let mut s = s0;
    let mut e = eval_delta(m, s);
    for _ in 0..NEWTON_MAX_ITER {
        if newton_converged(m, &e, NEWTON_TOL) {
            return Some(s);
        }
        if e.delta_prime.norm() == 0.0 || !e.delta_prime.is_finite() {
            break;
        }
        let step = e.delta / e.delta_prime;
        let mut lambda = 1.0;
        loop {
            let cand = s - step * lambda;
            let ec = eval_delta(m, cand);
            if !ec.delta.is_finite() || !ec.l.iter().all(|v| v.is_finite()) {
                if lambda < 1e-4 {
                    return None;
                }
                lambda *= 0.5;
                continue;
            }
            if ec.delta.norm() < e.delta.norm() || lambda < 1e-4 {
                s = cand;
                e = ec;
                break;
            }
            lambda *= 0.5;
        }
    }
    if newton_converged(m, &e, ROOT_RESIDUAL_TOL) && s.re.is_finite() {
        Some(s)
    } else {
        None
    }
}

/// All roots inside `rect`, by recursive subdivision and Newton polishing.
/// Clusters narrower than `1e-7` are reported once.
pub fn find_roots(m: &MatrixNbv, rect: Rect) -> Result<Vec<Complex64>> {
    let mut out = Vec::new();
    let total = count_nudged(m, rect, 4)?;
    locate(m, total.rect, total.count, &mut out)?;
    out.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

fn locate(m: &MatrixNbv, rect: Rect, count: usize, out: &mut Vec<Complex64>) -> Result<()> {
    if count == 0 {
        return Ok(());
    }
    let side = rect.width().max(rect.height());
    if count == 1 && side <= 2.0 {
        if let Some(r) = polish_root(m, rect.center()) {
            if rect.contains(r, 1e-9) {
                out.push(r);
                return Ok(());
            }
        }
    }
    if side < 1e-7 {
        match polish_root(m, rect.center()) {
            Some(r) => out.push(r),
            None => {
                return Err(Error::IndeterminateCount(format!(
                    "Newton failed to converge near {}",
                    rect.center()
                )))
            }
        }
        return Ok(());
    }
    let (first, second) = if rect.width() >= rect.height() {
        let mid = 0.5 * (rect.re_min + rect.re_max);
        (Rect { re_max: mid, ..rect }, Rect { re_min: mid, ..rect })
    } else {
        let mid = 0.5 * (rect.im_min + rect.im_max);
        (Rect { im_max: mid, ..rect }, Rect { im_min: mid, ..rect })
    };
    let c1 = count_nudged(m, first, 4)?;
    let used = c1.rect;
    // The second half must share the (possibly nudged) split line.
    let second = if rect.width() >= rect.height() {
        Rect { re_min: used.re_max, ..second }
    } else {
        Rect { im_min: used.im_max, ..second }
    };
    let first = Rect { re_min: rect.re_min, im_min: rect.im_min, ..used };
    let first = if rect.width() >= rect.height() {
        Rect { im_max: rect.im_max, ..first }
    } else {
        Rect { re_max: rect.re_max, ..first }
    };
    if c1.count > count {
        return Err(Error::IndeterminateCount(format!(
            "sub-rectangle count {} exceeds parent count {count}",
            c1.count
        )));
    }
    locate(m, first, c1.count, out)?;
    locate(m, second, count - c1.count, out)
}

/// Brackets the spectral abscissa inside the strip and polishes the
/// rightmost roots.
pub fn spectral_abscissa(m: &MatrixNbv, q: &StripQuery) -> Result<SpectrumResult> {
    let wp = m.check_wellposed();
    if !wp.is_ok() {
        return Err(Error::NotWellPosed { det: wp.det() });
    }
    let reduced = m.reduce_zero_atom()?;
    let bound = certified_growth_bound(&reduced)?;
    let periodic = detect_commensurate_base(m).is_some_and(|h| q.im_max >= PI / h);
    let tag = if periodic { WindowTag::PeriodComplete } else { WindowTag::WindowLimited };
    if bound == f64::NEG_INFINITY {
        return Ok(SpectrumResult {
            roots: Vec::new(),
            abscissa_bracket: (f64::NEG_INFINITY, f64::NEG_INFINITY),
            tag: WindowTag::NoRoots,
            count_certificates: Vec::new(),
            certified_bound: bound,
        });
    }
    let right = (bound + 1e-3 * (1.0 + bound.abs())).min(q.re_max);
    let left = q.re_min.min(right - 1.0);
    let density = q.grid_density.max(1);
    let mut certs = Vec::new();

    let strip = |re_min: f64| Rect::new(re_min, right, -q.im_max, q.im_max);
    let right_phase = edge_phase(
        &reduced,
        Complex64::new(right, -q.im_max),
        Complex64::new(right, q.im_max),
        density,
    )
    .ok();
    let count_strip = |re_min: f64| match right_phase {
        Some(p) => count_left_of(&reduced, strip(re_min), p, density),
        None => count_nudged(&reduced, strip(re_min), density),
    };
    let full = count_strip(left)?;
    certs.push(CountCertificate { rect: full.rect, count: full.count });
    if full.count == 0 {
        return Ok(SpectrumResult {
            roots: Vec::new(),
            abscissa_bracket: (f64::NEG_INFINITY, left),
            tag,
            count_certificates: certs,
            certified_bound: bound,
        });
    }

    let bisect = |mut lo: f64, mut hi: f64, width: f64| -> Result<(f64, f64)> {
        while hi - lo > width {
            let c = count_strip(0.5 * (lo + hi))?;
            if c.count > 0 {
                lo = c.rect.re_min;
            } else {
                hi = c.rect.re_min;
            }
        }
        Ok((lo, hi))
    };
    let (lo, hi) = bisect(left, right, COARSE_WIDTH)?;
    let band = Rect::new((lo - 0.1).max(left), right, -q.im_max, q.im_max);
    let roots = find_roots(&reduced, band)?;

    // Certify a narrow bracket around the rightmost located root; fall back
    // to plain bisection when a root above it was missed.
    let mut bracket = None;
    if let Some(r) = roots.iter().map(|r| r.re).reduce(f64::max) {
        let pad = 0.5 * BRACKET_WIDTH;
        let above = count_strip(r + pad)?;
        if above.count == 0 {
            let below = count_strip(r - pad)?;
            if below.count > 0 {
                certs.push(CountCertificate { rect: above.rect, count: 0 });
                certs.push(CountCertificate { rect: below.rect, count: below.count });
                bracket = Some((below.rect.re_min.min(r), above.rect.re_min.max(r)));
            }
        }
    }
    let (blo, bhi) = match bracket {
        Some(b) => b,
        None => {
            let (lo, hi) = bisect(lo, hi, BRACKET_WIDTH)?;
            let c = count_strip(lo)?;
            certs.push(CountCertificate { rect: c.rect, count: c.count });
            (lo, hi)
        }
    };
    Ok(SpectrumResult {
        roots,
        abscissa_bracket: (blo, bhi),
        tag,
        count_certificates: certs,
        certified_bound: bound,
    })
}

/// Base `h = 1/q` (`q <= 1000`) making every positive delay an integer
/// multiple, for atoms-only systems.
pub fn detect_commensurate_base(m: &MatrixNbv) -> Option<f64> {
    if m.has_density() || m.atoms().iter().all(|a| a.tau == 0.0) {
        return None;
    }
    (1..=1000u32).find_map(|q| {
        let qf = q as f64;
        m.atoms()
            .iter()
            .all(|a| {
                let x = a.tau * qf;
                (x - x.round()).abs() <= 1e-9 * x.max(1.0)
            })
            .then_some(1.0 / qf)
    })
}

/// Exact spectral abscissa of an atoms-only system whose delays are integer
/// multiples `m_k h`: the roots of `P(z) = det(I - Σ A_k z^{m_k})` give
/// `Re s = -ln|z| / h`.
pub fn commensurate_oracle(m: &MatrixNbv, h: f64) -> Result<f64> {
    if m.has_density() {
        return Err(Error::DensityPresent);
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("commensurate base must be positive, got {h}")));
    }
    let d = m.dim();
    let mut powers = Vec::with_capacity(m.atoms().len());
    for a in m.atoms() {
        let x = a.tau / h;
        let k = x.round();
        if (x - k).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::NotCommensurate {
                base: h,
                detail: format!("tau {} is not an integer multiple", a.tau),
            });
        }
        powers.push(k as usize);
    }
    let g = powers.iter().copied().fold(0, gcd).max(1);
    powers.iter_mut().for_each(|p| *p /= g);
    let h = h * g as f64;
    let degree = d * powers.iter().copied().max().unwrap_or(0);
    let coeffs = char_poly_coefficients(m, &powers, degree);
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut n = coeffs.len();
    while n > 1 && coeffs[n - 1].norm() <= 1e-13 * scale {
        n -= 1;
    }
    if n <= 1 {
        return Ok(f64::NEG_INFINITY);
    }
    let roots = poly_roots(&coeffs[..n]);
    Ok(roots.iter().map(|z| -z.norm().ln() / h).fold(f64::NEG_INFINITY, f64::max))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Coefficients of `det(I - Σ A_k z^{m_k})` by evaluation at the
/// `degree + 1` roots of unity and an inverse DFT.
fn char_poly_coefficients(m: &MatrixNbv, powers: &[usize], degree: usize) -> Vec<Complex64> {
    let d = m.dim();
    let n = degree + 1;
    let values: Vec<Complex64> = (0..n)
        .map(|j| {
            let w = Complex64::from_polar(1.0, TAU * j as f64 / n as f64);
            let mut a = CMat::identity(d, d);
            for (atom, &p) in m.atoms().iter().zip(powers) {
                let zp = w.powu(p as u32);
                for (dst, src) in a.iter_mut().zip(atom.matrix.iter()) {
                    *dst -= zp * *src;
                }
            }
            linalg::det(&a)
        })
        .collect();
    (0..n)
        .map(|k| {
            let sum: Complex64 = values
                .iter()
                .enumerate()
                .map(|(j, v)| v * Complex64::from_polar(1.0, -TAU * ((j * k) % n) as f64 / n as f64))
                .sum();
            sum / n as f64
        })
        .collect()
}

/// Roots of `Σ c_k z^k` (real coefficients up to rounding) from the companion
/// matrix, refined by a few Newton steps on the polynomial.
fn poly_roots(c: &[Complex64]) -> Vec<Complex64> {
    let deg = c.len() - 1;
    let lead = c[deg].re;
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i].re / lead;
    }
    let eval = |z: Complex64| {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for k in (0..=deg).rev() {
            dp = dp * z + p;
            p = p * z + c[k].re;
        }
        (p, dp)
    };
    let initial: Vec<Complex64> = match Schur::try_new(comp, f64::EPSILON, 10_000) {
        Some(schur) => schur.complex_eigenvalues().iter().copied().collect(),
        None => aberth(c),
    };
    initial
        .into_iter()
        .map(|z0| {
            let mut z = z0;
            for _ in 0..3 {
                let (p, dp) = eval(z);
                if dp.norm() == 0.0 {
                    break;
                }
                let next = z - p / dp;
                if eval(next).0.norm() < p.norm() {
                    z = next;
                } else {
                    break;
                }
            }
            z
        })
        .collect()
}

/// Simultaneous Aberth iteration on `Σ c_k z^k`, started on a circle of
/// the Cauchy bound radius.
fn aberth(c: &[Complex64]) -> Vec<Complex64> {
    let deg = c.len() - 1;
    let lead = c[deg];
    let radius = 1.0 + c[..deg].iter().map(|x| (x / lead).norm()).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| Complex64::from_polar(0.5 * radius, TAU * (k as f64 + 0.25) / deg as f64))
        .collect();
    let eval = |x: Complex64| {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for k in (0..=deg).rev() {
            dp = dp * x + p;
            p = p * x + c[k];
        }
        (p, dp)
    };
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..deg {
            let (p, dp) = eval(z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 =
                (0..deg).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            z[i] -= step;
            moved = moved.max(step.norm() / (1.0 + z[i].norm()));
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

/// One row of a continuity probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRow {
    pub var_diff: f64,
    pub abscissa: f64,
}

/// `(Var(M - N_n), S_{N_n})` for each system of the sequence.
pub fn abscissa_tv_continuity_probe(m: &MatrixNbv, seq: &[MatrixNbv]) -> Result<Vec<ProbeRow>> {
    seq.iter()
        .map(|n| {
            let var_diff = m.diff(n)?.total_variation();
            let q = StripQuery::default_for(n);
            let abscissa = spectral_abscissa(n, &q)?.abscissa();
            Ok(ProbeRow { var_diff, abscissa })
        })
        .collect()
}

pub fn probe_csv(rows: &[ProbeRow]) -> String {
    let mut s = String::from("var_diff,abscissa\n");
    for r in rows {
        let _ = writeln!(s, "{:.16e},{:.16e}", r.var_diff, r.abscissa);
    }
    s
}

/// CSV with columns `re,im,abs_delta_residual`.
pub fn roots_csv(m: &MatrixNbv, roots: &[Complex64]) -> String {
    let mut s = String::from("re,im,abs_delta_residual\n");
    for r in roots {
        let res = charfun::delta(m, *r).norm();
        let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", r.re, r.im, res);
    }
    s
}
