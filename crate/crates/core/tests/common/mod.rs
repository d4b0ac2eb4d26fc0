#![allow(dead_code)]

use ddstab::{Density, Mat, MatrixNbv, PiecewiseLinear};
use proptest::prelude::*;

pub fn matrix(d: usize, scale: f64) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-scale..scale, d * d).prop_map(move |v| Mat::from_row_slice(d, d, &v))
}

/// Up to four atoms with delays in `[0.02, 1)` at least `1e-3` apart and up
/// to three density pieces.
pub fn system(d: usize, scale: f64) -> impl Strategy<Value = MatrixNbv> {
    (
        prop::collection::vec((0.02f64..1.0, matrix(d, scale)), 0..=4),
        prop::collection::vec(-0.95f64..-0.05, 0..=2),
        prop::collection::vec(matrix(d, scale), 3),
        any::<bool>(),
    )
        .prop_map(move |(atoms, bps, mats, with_density)| {
            let mut kept: Vec<(f64, Mat)> = Vec::new();
            for (t, a) in atoms {
                if kept.iter().all(|(u, _)| (u - t).abs() > 1e-3) {
                    kept.push((t, a));
                }
            }
            let no_atoms = kept.is_empty();
            let m = MatrixNbv::from_atoms(d, kept).unwrap();
            if !(with_density || no_atoms) {
                return m;
            }
            let mut inner = bps;
            inner.sort_by(f64::total_cmp);
            inner.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let mut b = vec![-1.0];
            b.extend(inner);
            b.push(0.0);
            let pieces = mats.into_iter().take(b.len() - 1).collect();
            m.with_density(Density::new(b, pieces).unwrap()).unwrap()
        })
}

pub fn any_system(scale: f64) -> impl Strategy<Value = MatrixNbv> {
    (1..=3usize).prop_flat_map(move |d| system(d, scale))
}

/// Atoms-only systems on the grid `k / 4`, `k = 1..=4`.
pub fn grid_atoms(d: usize, scale: f64) -> impl Strategy<Value = MatrixNbv> {
    prop::collection::vec((1..=4usize, matrix(d, scale)), 1..=3).prop_map(move |atoms| {
        let mut kept: Vec<(f64, Mat)> = Vec::new();
        for (k, a) in atoms {
            let t = k as f64 / 4.0;
            if kept.iter().all(|(u, _)| *u != t) {
                kept.push((t, a));
            }
        }
        MatrixNbv::from_atoms(d, kept).unwrap()
    })
}

/// Nondecreasing piecewise-linear map within `shift` of the identity.
pub fn piecewise_linear(shift: f64) -> impl Strategy<Value = PiecewiseLinear> {
    (
        prop::collection::vec(-0.99f64..-0.01, 0..=6),
        prop::collection::vec(-1.0f64..1.0, 8),
    )
        .prop_map(move |(mut ts, jitter)| {
            ts.sort_by(f64::total_cmp);
            ts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            let mut abscissae = vec![-1.0];
            abscissae.extend(ts);
            abscissae.push(0.0);
            let mut prev = -1.0f64;
            let knots = abscissae
                .iter()
                .zip(jitter.iter().cycle())
                .map(|(&t, &j)| {
                    let v = (t + shift * j).clamp(-1.0, 0.0).max(prev);
                    prev = v;
                    (t, v)
                })
                .collect();
            PiecewiseLinear::new(knots).unwrap()
        })
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}
