//! Method-of-steps integration on a uniform grid `h = 1/n`.
//!
//! The right-hand side `∫ dM(θ) x(t + θ)` is discretized once into a kernel
//! `x(t) ≈ Σ_{j=0}^{n} W_j x(t - jh)`: atoms by linear interpolation between
//! the two neighbouring grid points, density pieces by exact integration of
//! the piecewise-linear interpolant. `W_0` is handled implicitly.

use std::fmt::Write as _;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CVec, Mat};
use crate::measure::MatrixNbv;

pub type Vector = DVector<f64>;

/// Windows whose sup-norm drops below this are treated as fully decayed.
pub const DECAYED: f64 = 1e-300;

/// Discretized right-hand side.
#[derive(Debug, Clone)]
pub struct Kernel {
    n: usize,
    weights: Vec<Mat>,
    /// `(I - W_0)`, factored.
    implicit: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    interpolated: bool,
}

impl Kernel {
    pub fn new(m: &MatrixNbv, n: usize) -> Result<Kernel> {
        if n == 0 {
            return Err(Error::InvalidArgument("grid resolution must be positive".into()));
        }
        let wp = m.check_wellposed();
        if !wp.is_ok() {
            return Err(Error::NotWellPosed { det: wp.det() });
        }
        let d = m.dim();
        let nf = n as f64;
        let h = 1.0 / nf;
        let mut weights = vec![Mat::zeros(d, d); n + 1];
        let mut interpolated = false;
        for a in m.atoms() {
            let p = a.tau * nf;
            let r = p.round();
            if (p - r).abs() <= 1e-9 * p.max(1.0) {
                weights[r as usize] += &a.matrix;
            } else {
                interpolated = true;
                let j = p.floor() as usize;
                let frac = p - j as f64;
                weights[j] += &a.matrix * (1.0 - frac);
                weights[(j + 1).min(n)] += &a.matrix * frac;
            }
        }
        // In offset coordinates u = -θ/h the node j sits at u = j; the hat
        // functions integrate exactly against the constant piece.
        for (lo, hi, c) in m.density().intervals() {
            let (u0, u1) = (-hi * nf, -lo * nf);
            let first = u0.floor().max(0.0) as usize;
            let last = (u1.ceil() as usize).min(n);
            for j in first..last {
                let (a, b) = ((j as f64).max(u0), ((j + 1) as f64).min(u1));
                if b <= a {
                    continue;
                }
                // ∫_a^b (j+1-u) du and ∫_a^b (u-j) du, times h for dθ
                let w_right = h * ((j as f64 + 1.0) * (b - a) - 0.5 * (b * b - a * a));
                let w_left = h * (0.5 * (b * b - a * a) - j as f64 * (b - a));
                weights[j] += c * w_right;
                weights[j + 1] += c * w_left;
            }
        }
        let implicit = (Mat::identity(d, d) - &weights[0]).lu();
        if implicit.determinant().abs() <= 1e-12 {
            return Err(Error::NotWellPosed { det: implicit.determinant() });
        }
        Ok(Kernel { n, weights, implicit, interpolated })
    }

    pub fn weights(&self) -> &[Mat] {
        &self.weights
    }

    /// Whether some atom delay is off the grid.
    pub fn interpolated(&self) -> bool {
        self.interpolated
    }

    /// `Σ_{j>=1} W_j x_{i-j}`; `past(j)` returns `x_{i-j}`.
    fn explicit_part<'a>(&self, past: impl Fn(usize) -> &'a Vector) -> Vector {
        let d = self.weights[0].nrows();
        let mut acc = Vector::zeros(d);
        for (j, w) in self.weights.iter().enumerate().skip(1) {
            if w.iter().any(|v| *v != 0.0) {
                acc += w * past(j);
            }
        }
        acc
    }

    fn solve(&self, rhs: &Vector) -> Vector {
        self.implicit.solve(rhs).expect("I - W_0 is invertible")
    }

    /// `x_i - Σ_j W_j x_{i-j}` for the last sample of `xs` (needs `n + 1`
    /// samples).
    pub fn residual(&self, xs: &[Vector]) -> Result<Vector> {
        let i = xs.len().checked_sub(1).filter(|&i| i >= self.n).ok_or_else(|| {
            Error::InvalidArgument(format!("residual needs {} samples", self.n + 1))
        })?;
        let mut r = &xs[i] - self.explicit_part(|j| &xs[i - j]);
        r -= &self.weights[0] * &xs[i];
        Ok(r)
    }
}

/// Initial condition sampled on `[-1, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Constant(Vec<f64>),
    /// `Re(e^{sθ} v)`.
    Exponential { s: Complex64, v: Vec<Complex64> },
    /// `n + 1` samples at `θ = -1, -1 + h, …, 0`.
    Samples(Vec<Vec<f64>>),
}

impl InitialCondition {
    pub fn sample(&self, dim: usize, n: usize) -> Result<Vec<Vector>> {
        let h = 1.0 / n as f64;
        let theta = |i: usize| if i == n { 0.0 } else { -1.0 + i as f64 * h };
        let check = |len: usize| {
            if len != dim {
                Err(Error::DimensionMismatch { left: len, right: dim })
            } else {
                Ok(())
            }
        };
        match self {
            InitialCondition::Constant(c) => {
                check(c.len())?;
                Ok(vec![Vector::from_column_slice(c); n + 1])
            }
            InitialCondition::Exponential { s, v } => {
                check(v.len())?;
                let v = CVec::from_column_slice(v);
                Ok((0..=n).map(|i| (v.clone() * (s * theta(i)).exp()).map(|z| z.re)).collect())
            }
            InitialCondition::Samples(rows) => {
                if rows.len() != n + 1 {
                    return Err(Error::InvalidArgument(format!(
                        "initial condition has {} samples, grid needs {}",
                        rows.len(),
                        n + 1
                    )));
                }
                rows.iter()
                    .map(|r| {
                        check(r.len())?;
                        Ok(Vector::from_column_slice(r))
                    })
                    .collect()
            }
        }
    }
}

/// Replaces the value at `θ = 0` by the discretized `∫ dM(θ) φ(θ)`, so that
/// the data satisfy the compatibility condition of the scheme.
pub fn project_initial(m: &MatrixNbv, phi0: &[Vector]) -> Result<Vec<Vector>> {
    let n = phi0.len().checked_sub(1).filter(|&n| n > 0).ok_or_else(|| {
        Error::InvalidArgument("initial condition needs at least two samples".into())
    })?;
    let k = Kernel::new(m, n)?;
    Ok(project_with(&k, phi0))
}

fn project_with(k: &Kernel, phi0: &[Vector]) -> Vec<Vector> {
    let n = k.n;
    let mut out = phi0.to_vec();
    let rhs = k.explicit_part(|j| &phi0[n - j]);
    out[n] = k.solve(&rhs);
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub h: f64,
    pub n: usize,
    pub horizon: f64,
    /// `x(-1 + i h)`.
    pub samples: Vec<Vec<f64>>,
    /// `(k, sup_{[k-1, k]} ‖x‖_∞)` for `k = 1, 2, …`.
    pub window_norms: Vec<(f64, f64)>,
    pub interpolated: bool,
}

impl Trajectory {
    pub fn time(&self, i: usize) -> f64 {
        if i == self.n {
            0.0
        } else {
            -1.0 + i as f64 * self.h
        }
    }
}

/// Integrates from the (already projected) history `phi0` on `n + 1` grid
/// points up to `horizon`.
pub fn integrate(m: &MatrixNbv, phi0: &[Vector], horizon: f64, n: usize) -> Result<Trajectory> {
    if phi0.len() != n + 1 {
        return Err(Error::InvalidArgument(format!(
            "initial condition has {} samples, grid needs {}",
            phi0.len(),
            n + 1
        )));
    }
    if let Some(bad) = phi0.iter().find(|v| v.len() != m.dim()) {
        return Err(Error::DimensionMismatch { left: bad.len(), right: m.dim() });
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let k = Kernel::new(m, n)?;
    let h = 1.0 / n as f64;
    let steps = (horizon * n as f64).round() as usize;
    let mut xs: Vec<Vector> = Vec::with_capacity(n + 1 + steps);
    xs.extend_from_slice(phi0);
    for step in 1..=steps {
        let i = n + step;
        let rhs = k.explicit_part(|j| &xs[i - j]);
        let x = k.solve(&rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { t: step as f64 * h });
        }
        xs.push(x);
    }
    let sup = |v: &Vector| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let windows = steps / n;
    let window_norms = (1..=windows)
        .map(|w| {
            let lo = n + (w - 1) * n;
            let s = xs[lo..=lo + n].iter().map(sup).fold(0.0, f64::max);
            (w as f64, s)
        })
        .collect();
    Ok(Trajectory {
        h,
        n,
        horizon: steps as f64 * h,
        samples: xs.into_iter().map(|v| v.iter().copied().collect()).collect(),
        window_norms,
        interpolated: k.interpolated(),
    })
}

/// Least-squares slope of `ln sup_{[k-1,k]} ‖x‖_∞` over windows ending in
/// `[burn_in · T, T]`. Returns `-∞` once the trajectory has decayed to zero.
pub fn fit_decay_rate(traj: &Trajectory, burn_in_fraction: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::InvalidArgument(format!(
            "burn-in fraction must lie in [0, 1), got {burn_in_fraction}"
        )));
    }
    let start = burn_in_fraction * traj.horizon;
    let windows: Vec<(f64, f64)> =
        traj.window_norms.iter().copied().filter(|&(t, _)| t >= start).collect();
    if windows.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "{} unit windows after burn-in, need at least 4",
            windows.len()
        )));
    }
    let pts: Vec<(f64, f64)> =
        windows.iter().take_while(|w| w.1 >= DECAYED).map(|&(t, s)| (t, s.ln())).collect();
    if pts.len() < 2 {
        return Ok(f64::NEG_INFINITY);
    }
    let nf = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    Ok(sxy / sxx)
}

/// CSV with columns `t,x_1,…,x_d`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let d = traj.samples.first().map_or(0, Vec::len);
    let mut s = String::from("t");
    for k in 1..=d {
        let _ = write!(s, ",x_{k}");
    }
    s.push('\n');
    for (i, x) in traj.samples.iter().enumerate() {
        let _ = write!(s, "{:.16e}", traj.time(i));
        for v in x {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

/// CSV with columns `t,sup_norm,log_sup_norm`.
pub fn window_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t,sup_norm,log_sup_norm\n");
    for &(t, n) in &traj.window_norms {
        let _ = writeln!(s, "{t:.16e},{n:.16e},{:.16e}", n.ln());
    }
    s
}
