//! Delay perturbations `φ: [-1, 0] → [-1, 0]`.
//!
//! Two families are supported, both with exact pushforwards:
//! nondecreasing piecewise-linear maps and binnings that send each cell of a
//! partition of `[-1, 0]` to a single point.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    PiecewiseLinear(PiecewiseLinear),
    Binning(Binning),
}

impl Perturbation {
    pub fn identity() -> Self {
        Perturbation::PiecewiseLinear(PiecewiseLinear::identity())
    }

    pub fn apply(&self, theta: f64) -> f64 {
        match self {
            Perturbation::PiecewiseLinear(p) => p.apply(theta),
            Perturbation::Binning(b) => b.apply(theta),
        }
    }

    /// `‖φ - id‖_∞` over `[-1, 0]`.
    pub fn sup_distance_to_identity(&self) -> f64 {
        match self {
            Perturbation::PiecewiseLinear(p) => p.sup_distance_to_identity(),
            Perturbation::Binning(b) => b.sup_distance_to_identity(),
        }
    }
}

/// Nondecreasing piecewise-linear map through `(θ_i, φ(θ_i))` with
/// `θ_0 = -1` and `θ_last = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        let err = |msg: String| Err(Error::InvalidPerturbation(msg));
        if knots.len() < 2 {
            return err("knots: need at least two knots".into());
        }
        if knots[0].0 != -1.0 || knots[knots.len() - 1].0 != 0.0 {
            return err("knots: first abscissa must be -1 and last must be 0".into());
        }
        for (i, &(t, v)) in knots.iter().enumerate() {
            if !t.is_finite() || !v.is_finite() {
                return err(format!("knots[{i}]: non-finite value"));
            }
            if !(-1.0..=0.0).contains(&v) {
                return err(format!("knots[{i}]: value {v} outside [-1, 0]"));
            }
        }
        for (i, w) in knots.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return err(format!("knots[{}]: abscissae not strictly increasing", i + 1));
            }
            if w[1].1 < w[0].1 {
                return err(format!("knots[{}]: map is decreasing", i + 1));
            }
        }
        Ok(PiecewiseLinear { knots })
    }

    pub fn identity() -> Self {
        PiecewiseLinear { knots: vec![(-1.0, -1.0), (0.0, 0.0)] }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn apply(&self, theta: f64) -> f64 {
        let k = &self.knots;
        let i = k[1..].partition_point(|&(t, _)| t < theta).min(k.len() - 2);
        let ((t0, v0), (t1, v1)) = (k[i], k[i + 1]);
        if v0 == t0 && v1 == t1 {
            theta
        } else if theta == t0 {
            v0
        } else if theta == t1 {
            v1
        } else {
            v0 + (v1 - v0) / (t1 - t0) * (theta - t0)
        }
    }

    /// The difference to the identity is piecewise linear, so its sup is
    /// attained at a knot.
    pub fn sup_distance_to_identity(&self) -> f64 {
        self.knots.iter().map(|&(t, v)| (v - t).abs()).fold(0.0, f64::max)
    }

    /// `outer ∘ self`. Preimages of outer knots are evaluated at the outer
    /// knot itself, so flat outer segments stay exactly flat.
    pub fn then(&self, outer: &PiecewiseLinear) -> PiecewiseLinear {
        let mut pts: Vec<(f64, f64)> = self.knots.clone();
        for w in self.knots.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if v1 == v0 {
                continue;
            }
            for &(x, _) in outer.knots() {
                if x > v0 && x < v1 {
                    let t = t0 + (x - v0) * (t1 - t0) / (v1 - v0);
                    if t > t0 && t < t1 {
                        pts.push((t, x));
                    }
                }
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        let mut knots: Vec<(f64, f64)> =
            pts.into_iter().map(|(t, inner)| (t, outer.apply(inner).clamp(-1.0, 0.0))).collect();
        // Rounding in the preimage can break monotonicity by one ulp.
        for i in 1..knots.len() {
            if knots[i].1 < knots[i - 1].1 {
                knots[i].1 = knots[i - 1].1;
            }
        }
        PiecewiseLinear { knots }
    }
}

/// One cell of a binning. `from = (a, b)` with `a < b` is the interval
/// `(a, b]` (closed at `-1` for the first cell); `a == b` is the single
/// point `{a}`, which takes precedence over the interval containing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub from: (f64, f64),
    pub to: f64,
}

impl Bin {
    pub fn is_point(&self) -> bool {
        self.from.0 == self.from.1
    }

    fn distance_to_identity(&self) -> f64 {
        (self.to - self.from.0).abs().max((self.to - self.from.1).abs())
    }
}

/// Piecewise-constant map sending every cell of a partition of `[-1, 0]` to
/// a target point.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    intervals: Vec<Bin>,
    points: Vec<Bin>,
}

/// Interval cells may meet up to this gap.
const CONTIGUITY_TOL: f64 = 1e-12;

impl Binning {
    pub fn new(bins: Vec<Bin>) -> Result<Self> {
        let err = |msg: String| Err(Error::InvalidPerturbation(msg));
        for (i, b) in bins.iter().enumerate() {
            let (a, c) = b.from;
            if !(a.is_finite() && c.is_finite() && b.to.is_finite()) {
                return err(format!("bins[{i}]: non-finite value"));
            }
            if a > c {
                return err(format!("bins[{i}].from: reversed interval [{a}, {c}]"));
            }
            if a < -1.0 || c > 0.0 {
                return err(format!("bins[{i}].from: [{a}, {c}] not inside [-1, 0]"));
            }
            if !(-1.0..=0.0).contains(&b.to) {
                return err(format!("bins[{i}].to: {} outside [-1, 0]", b.to));
            }
        }
        let (mut points, mut intervals): (Vec<Bin>, Vec<Bin>) =
            bins.into_iter().partition(Bin::is_point);
        intervals.sort_by(|x, y| x.from.0.total_cmp(&y.from.0));
        points.sort_by(|x, y| x.from.0.total_cmp(&y.from.0));
        if intervals.is_empty() {
            return err("bins: interval cells must cover [-1, 0]".into());
        }
        if intervals[0].from.0 != -1.0 {
            return err("bins: first interval must start at -1".into());
        }
        if intervals[intervals.len() - 1].from.1 != 0.0 {
            return err("bins: last interval must end at 0".into());
        }
        for w in intervals.windows(2) {
            if (w[1].from.0 - w[0].from.1).abs() > CONTIGUITY_TOL {
                return err(format!(
                    "bins: intervals ending at {} and starting at {} leave a gap or overlap",
                    w[0].from.1, w[1].from.0
                ));
            }
        }
        for w in points.windows(2) {
            if w[0].from.0 == w[1].from.0 {
                return err(format!("bins: duplicate point cell at {}", w[0].from.0));
            }
        }
        Ok(Binning { intervals, points })
    }

    pub fn intervals(&self) -> &[Bin] {
        &self.intervals
    }

    pub fn points(&self) -> &[Bin] {
        &self.points
    }

    /// All cells, intervals first.
    pub fn bins(&self) -> Vec<Bin> {
        self.intervals.iter().chain(&self.points).copied().collect()
    }

    pub fn apply(&self, theta: f64) -> f64 {
        if let Ok(i) = self.points.binary_search_by(|b| b.from.0.total_cmp(&theta)) {
            return self.points[i].to;
        }
        // Cell i covers (a_i, b_i]; theta = -1 belongs to the first cell.
        let i = self.intervals.partition_point(|b| b.from.1 < theta);
        self.intervals[i.min(self.intervals.len() - 1)].to
    }

    pub fn sup_distance_to_identity(&self) -> f64 {
        self.intervals
            .iter()
            .chain(&self.points)
            .map(Bin::distance_to_identity)
            .fold(0.0, f64::max)
    }
}
