//! Matrix-valued measures of bounded variation on `[-1, 0]` without singular
//! part: finitely many atoms plus a piecewise-constant density.
//!
//! A system `x(t) = ∫ dM(θ) x(t+θ)` is described by a [`MatrixNbv`]. The NBV
//! function `M(θ) = μ([-1, θ])` and the measure `μ` are two views of the same
//! object; [`MatrixNbv::value_at`] evaluates the former, every other routine
//! works with the latter.
//!
//! Atoms are stored by delay `tau`, i.e. the point mass `A_k δ_{-τ_k}`. A
//! delay of `0` is the instantaneous part `A_M = M(0) - M(0⁻)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, MatrixNorm};
use crate::perturbation::{Binning, Perturbation, PiecewiseLinear};

/// Two atom positions closer than this are the same point.
pub const MERGE_TOL: f64 = 1e-12;

/// `|det(I - A_M)|` at or below this is treated as singular.
pub const DET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub tau: f64,
    pub matrix: Mat,
}

impl Atom {
    pub fn new(tau: f64, matrix: Mat) -> Self {
        Atom { tau, matrix }
    }

    /// Position of the point mass in `[-1, 0]`.
    pub fn theta(&self) -> f64 {
        -self.tau
    }
}

/// Piecewise-constant density `N'(θ) = C_j` on `[b_{j-1}, b_j)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Density {
    breakpoints: Vec<f64>,
    pieces: Vec<Mat>,
}

impl Density {
    pub fn none() -> Self {
        Density::default()
    }

    /// Density equal to `c` on all of `[-1, 0]`.
    pub fn constant(c: Mat) -> Self {
        Density { breakpoints: vec![-1.0, 0.0], pieces: vec![c] }
    }

    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Mat>) -> Result<Self> {
        if pieces.is_empty() {
            if breakpoints.len() > 2 {
                return Err(Error::InvalidSystem(
                    "density.breakpoints: given without pieces".into(),
                ));
            }
            return Ok(Density::none());
        }
        if breakpoints.len() != pieces.len() + 1 {
            return Err(Error::InvalidSystem(format!(
                "density: {} breakpoints for {} pieces (expected {})",
                breakpoints.len(),
                pieces.len(),
                pieces.len() + 1
            )));
        }
        if breakpoints[0] != -1.0 || *breakpoints.last().unwrap() != 0.0 {
            return Err(Error::InvalidSystem(
                "density.breakpoints: must start at -1 and end at 0".into(),
            ));
        }
        for (j, w) in breakpoints.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidSystem(format!(
                    "density.breakpoints[{}]: not strictly increasing",
                    j + 1
                )));
            }
        }
        for (j, c) in pieces.iter().enumerate() {
            if !linalg::is_finite(c) {
                return Err(Error::InvalidSystem(format!(
                    "density.pieces[{j}]: non-finite entry"
                )));
            }
        }
        Ok(Density { breakpoints, pieces })
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Mat] {
        &self.pieces
    }

    /// `(b_{j-1}, b_j, C_j)` for every piece.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, &Mat)> + '_ {
        self.pieces
            .iter()
            .enumerate()
            .map(move |(j, c)| (self.breakpoints[j], self.breakpoints[j + 1], c))
    }

    /// Density value at `theta` (the right-open piece convention, with `0`
    /// belonging to the last piece).
    pub fn value_at(&self, theta: f64) -> Option<&Mat> {
        if self.is_empty() || !(-1.0..=0.0).contains(&theta) {
            return None;
        }
        let j = self.breakpoints[1..].partition_point(|b| *b <= theta);
        Some(&self.pieces[j.min(self.pieces.len() - 1)])
    }

    /// `∫_a^b N'(θ) dθ` for `-1 <= a <= b <= 0`.
    pub fn integral(&self, dim: usize, a: f64, b: f64) -> Mat {
        let mut acc = Mat::zeros(dim, dim);
        for (lo, hi, c) in self.intervals() {
            let len = hi.min(b) - lo.max(a);
            if len > 0.0 {
                acc += c * len;
            }
        }
        acc
    }

    /// Builds a density from consecutive `(lo, hi, C)` pieces that are
    /// ordered and non-overlapping; gaps are filled with zero, equal
    /// neighbours are merged and an all-zero result becomes no density.
    fn from_sorted_pieces(dim: usize, pieces: Vec<(f64, f64, Mat)>) -> Density {
        let zero = Mat::zeros(dim, dim);
        let mut bps = vec![-1.0];
        let mut mats: Vec<Mat> = Vec::new();
        let push = |hi: f64, m: Mat, bps: &mut Vec<f64>, mats: &mut Vec<Mat>| {
            let last = *bps.last().unwrap();
            if !(hi > last) {
                return;
            }
            if let Some(prev) = mats.last() {
                if *prev == m {
                    *bps.last_mut().unwrap() = hi;
                    return;
                }
            }
            bps.push(hi);
            mats.push(m);
        };
        for (lo, hi, m) in pieces {
            let cur = *bps.last().unwrap();
            if lo > cur {
                push(lo.min(0.0), zero.clone(), &mut bps, &mut mats);
            }
            push(hi.min(0.0), m, &mut bps, &mut mats);
        }
        if *bps.last().unwrap() < 0.0 {
            push(0.0, zero.clone(), &mut bps, &mut mats);
        }
        if mats.iter().all(linalg::is_zero) {
            return Density::none();
        }
        Density { breakpoints: bps, pieces: mats }
    }
}

/// Result of the well-posedness test on `det(I - A_M)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WellPosedness {
    Ok { det: f64 },
    Singular { det: f64 },
}

impl WellPosedness {
    pub fn is_ok(&self) -> bool {
        matches!(self, WellPosedness::Ok { .. })
    }

    pub fn det(&self) -> f64 {
        match *self {
            WellPosedness::Ok { det } | WellPosedness::Singular { det } => det,
        }
    }
}

/// A system datum `M`: atoms sorted by increasing delay, plus a density.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixNbv {
    dim: usize,
    atoms: Vec<Atom>,
    density: Density,
    norm: MatrixNorm,
}

impl MatrixNbv {
    pub fn new(dim: usize, atoms: Vec<Atom>, density: Density, norm: MatrixNorm) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSystem("dimension: must be positive".into()));
        }
        for (k, a) in atoms.iter().enumerate() {
            if a.matrix.nrows() != dim || a.matrix.ncols() != dim {
                return Err(Error::InvalidSystem(format!(
                    "atoms[{k}].matrix: expected {dim}x{dim}, got {}x{}",
                    a.matrix.nrows(),
                    a.matrix.ncols()
                )));
            }
            if !a.tau.is_finite() || !(0.0..=1.0).contains(&a.tau) {
                return Err(Error::InvalidSystem(format!(
                    "atoms[{k}].tau: {} not in [0, 1]",
                    a.tau
                )));
            }
            if !linalg::is_finite(&a.matrix) {
                return Err(Error::InvalidSystem(format!(
                    "atoms[{k}].matrix: non-finite entry"
                )));
            }
        }
        for (j, c) in density.pieces().iter().enumerate() {
            if c.nrows() != dim || c.ncols() != dim {
                return Err(Error::InvalidSystem(format!(
                    "density.pieces[{j}]: expected {dim}x{dim}, got {}x{}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.tau.total_cmp(&b.tau));
        for w in atoms.windows(2) {
            if w[0].tau == w[1].tau {
                return Err(Error::InvalidSystem(format!(
                    "atoms: duplicate tau {}",
                    w[0].tau
                )));
            }
        }
        Ok(MatrixNbv { dim, atoms, density, norm })
    }

    pub fn zero(dim: usize) -> Self {
        MatrixNbv { dim, atoms: Vec::new(), density: Density::none(), norm: MatrixNorm::default() }
    }

    /// Atoms-only system from `(tau, matrix)` pairs.
    pub fn from_atoms(dim: usize, atoms: Vec<(f64, Mat)>) -> Result<Self> {
        let atoms = atoms.into_iter().map(|(t, m)| Atom::new(t, m)).collect();
        MatrixNbv::new(dim, atoms, Density::none(), MatrixNorm::default())
    }

    /// Scalar atoms-only system.
    pub fn scalar_atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        MatrixNbv::from_atoms(
            1,
            atoms.iter().map(|&(t, a)| (t, Mat::from_element(1, 1, a))).collect(),
        )
    }

    pub fn with_density(mut self, density: Density) -> Result<Self> {
        let atoms = std::mem::take(&mut self.atoms);
        MatrixNbv::new(self.dim, atoms, density, self.norm)
    }

    pub fn with_norm(mut self, norm: MatrixNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn norm(&self) -> MatrixNorm {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().all(|a| linalg::is_zero(&a.matrix))
            && self.density.pieces().iter().all(linalg::is_zero)
    }

    pub fn has_density(&self) -> bool {
        !self.density.is_empty()
    }

    /// Matrix of the atom at `θ = 0`, if any.
    pub fn zero_atom(&self) -> Option<&Mat> {
        self.atoms.first().filter(|a| a.tau == 0.0).map(|a| &a.matrix)
    }

    /// `A_M = M(0) - M(0⁻)`.
    pub fn a_m(&self) -> Mat {
        self.zero_atom().cloned().unwrap_or_else(|| Mat::zeros(self.dim, self.dim))
    }

    /// Largest delay carrying mass (atoms or density support).
    pub fn max_delay(&self) -> f64 {
        let atom_max = self.atoms.iter().map(|a| a.tau).fold(0.0, f64::max);
        let dens_max = self
            .density
            .intervals()
            .find(|(_, _, c)| !linalg::is_zero(c))
            .map(|(lo, _, _)| -lo)
            .unwrap_or(0.0);
        atom_max.max(dens_max)
    }

    /// The NBV function `M(θ) = μ([-1, θ])`.
    pub fn value_at(&self, theta: f64) -> Mat {
        let mut acc = self.density.integral(self.dim, -1.0, theta.min(0.0));
        for a in &self.atoms {
            if a.theta() <= theta {
                acc += &a.matrix;
            }
        }
        acc
    }

    /// `Σ‖A_k‖ + Σ‖C_j‖ (b_j - b_{j-1})` in the configured induced norm.
    pub fn total_variation(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| self.norm.of(&a.matrix)).sum();
        let dens: f64 = self.density.intervals().map(|(lo, hi, c)| self.norm.of(c) * (hi - lo)).sum();
        atoms + dens
    }

    /// `μ([-1, 0]) = M(0)`.
    pub fn total_mass(&self) -> Mat {
        let mut acc = self.density.integral(self.dim, -1.0, 0.0);
        for a in &self.atoms {
            acc += &a.matrix;
        }
        acc
    }

    pub fn check_wellposed(&self) -> WellPosedness {
        let det = match self.zero_atom() {
            None => 1.0,
            Some(a) => (Mat::identity(self.dim, self.dim) - a).determinant(),
        };
        if det.abs() > DET_TOL {
            WellPosedness::Ok { det }
        } else {
            WellPosedness::Singular { det }
        }
    }

    /// `M - N` with matching atoms subtracted and the density grids merged.
    pub fn diff(&self, other: &MatrixNbv) -> Result<MatrixNbv> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: other.dim });
        }
        let mut raw: Vec<(f64, Mat)> =
            self.atoms.iter().map(|a| (a.theta(), a.matrix.clone())).collect();
        raw.extend(other.atoms.iter().map(|a| (a.theta(), -&a.matrix)));
        let atoms = merge_atoms(raw);

        let mut grid: Vec<f64> = self
            .density
            .breakpoints()
            .iter()
            .chain(other.density.breakpoints())
            .copied()
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|b, a| (*b - *a).abs() <= MERGE_TOL);
        let zero = Mat::zeros(self.dim, self.dim);
        let pieces = grid
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let p = self.density.value_at(mid).unwrap_or(&zero);
                let q = other.density.value_at(mid).unwrap_or(&zero);
                (w[0], w[1], p - q)
            })
            .collect();
        let density = Density::from_sorted_pieces(self.dim, pieces);
        Ok(MatrixNbv { dim: self.dim, atoms, density, norm: self.norm })
    }

    /// Multiplies every matrix of the measure by `c`.
    pub fn scaled(&self, c: f64) -> MatrixNbv {
        self.map_matrices(|m| m * c)
    }

    /// Applies `f` to every atom and density matrix.
    pub fn map_matrices(&self, f: impl Fn(&Mat) -> Mat) -> MatrixNbv {
        MatrixNbv {
            dim: self.dim,
            atoms: self.atoms.iter().map(|a| Atom::new(a.tau, f(&a.matrix))).collect(),
            density: Density {
                breakpoints: self.density.breakpoints.clone(),
                pieces: self.density.pieces.iter().map(&f).collect(),
            },
            norm: self.norm,
        }
    }

    /// Removes an instantaneous atom `A` by left-multiplying the rest of the
    /// measure with `(I - A)^{-1}`. The reduced system has the same
    /// trajectories and `Δ_reduced = Δ / det(I - A)`.
    pub fn reduce_zero_atom(&self) -> Result<MatrixNbv> {
        let Some(a0) = self.zero_atom() else {
            return Ok(self.clone());
        };
        let wp = self.check_wellposed();
        if !wp.is_ok() {
            return Err(Error::NotWellPosed { det: wp.det() });
        }
        let inv = (Mat::identity(self.dim, self.dim) - a0)
            .try_inverse()
            .ok_or(Error::NotWellPosed { det: wp.det() })?;
        let rest = MatrixNbv {
            dim: self.dim,
            atoms: self.atoms.iter().filter(|a| a.tau > 0.0).cloned().collect(),
            density: self.density.clone(),
            norm: self.norm,
        };
        Ok(rest.map_matrices(|m| &inv * m))
    }

    /// Exact pushforward `φ_*μ` of the measure under a perturbation.
    pub fn pushforward(&self, phi: &Perturbation) -> MatrixNbv {
        match phi {
            Perturbation::PiecewiseLinear(pl) => self.pushforward_linear(pl),
            Perturbation::Binning(b) => self.pushforward_binning(b),
        }
    }

    fn pushforward_linear(&self, phi: &PiecewiseLinear) -> MatrixNbv {
        let mut raw: Vec<(f64, Mat)> =
            self.atoms.iter().map(|a| (phi.apply(a.theta()), a.matrix.clone())).collect();
        let mut image: Vec<(f64, f64, Mat)> = Vec::new();
        let knots = phi.knots();
        for seg in knots.windows(2) {
            let ((t0, v0), (t1, v1)) = (seg[0], seg[1]);
            let slope = (v1 - v0) / (t1 - t0);
            let eval = |x: f64| {
                if v0 == t0 && v1 == t1 {
                    x
                } else if x == t0 {
                    v0
                } else if x == t1 {
                    v1
                } else {
                    v0 + slope * (x - t0)
                }
            };
            for (lo, hi, c) in self.density.intervals() {
                let (u, w) = (lo.max(t0), hi.min(t1));
                if !(w > u) {
                    continue;
                }
                if v1 == v0 {
                    raw.push((v0, c * (w - u)));
                    continue;
                }
                let (pu, pw) = (eval(u), eval(w));
                if pw > pu {
                    image.push((pu, pw, c / slope));
                } else {
                    raw.push((pu, c * (w - u)));
                }
            }
        }
        MatrixNbv {
            dim: self.dim,
            atoms: merge_atoms(raw),
            density: Density::from_sorted_pieces(self.dim, image),
            norm: self.norm,
        }
    }

    fn pushforward_binning(&self, phi: &Binning) -> MatrixNbv {
        let mut raw: Vec<(f64, Mat)> =
            self.atoms.iter().map(|a| (phi.apply(a.theta()), a.matrix.clone())).collect();
        if self.has_density() {
            for bin in phi.intervals() {
                let mass = self.density.integral(self.dim, bin.from.0, bin.from.1);
                raw.push((bin.to, mass));
            }
        }
        MatrixNbv {
            dim: self.dim,
            atoms: merge_atoms(raw),
            density: Density::none(),
            norm: self.norm,
        }
    }
}

/// Sorts `(θ, A)` point masses, sums those within [`MERGE_TOL`], drops exact
/// zeros and converts positions to delays (snapping to `0` and `1`).
fn merge_atoms(mut raw: Vec<(f64, Mat)>) -> Vec<Atom> {
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<(f64, Mat)> = Vec::new();
    for (pos, m) in raw {
        match groups.last_mut() {
            Some((p, acc)) if (pos - *p).abs() <= MERGE_TOL => *acc += m,
            _ => groups.push((pos, m)),
        }
    }
    let mut atoms: Vec<Atom> = groups
        .into_iter()
        .filter(|(_, m)| !linalg::is_zero(m))
        .map(|(pos, m)| {
            let tau = if pos.abs() <= MERGE_TOL {
                0.0
            } else if (pos + 1.0).abs() <= MERGE_TOL {
                1.0
            } else {
                (-pos).clamp(0.0, 1.0)
            };
            Atom::new(tau, m)
        })
        .collect();
    atoms.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    atoms
}

/// Convenience: `d x d` matrix from row-major data.
pub fn mat(dim: usize, rows: &[f64]) -> Mat {
    DMatrix::from_row_slice(dim, dim, rows)
}
