//! Characteristic function `Δ_M(s) = det(I - L(s))` with
//! `L(s) = ∫_{-1}^0 e^{sθ} dM(θ)`, evaluated in closed form.

use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{self, CMat, Mat};
use crate::measure::MatrixNbv;
use crate::perturbation::Perturbation;

/// Below this `|s|` the piece integrals switch to their Taylor series.
pub const SERIES_RADIUS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CharEval {
    pub s: Complex64,
    pub l: CMat,
    pub delta: Complex64,
    pub delta_prime: Complex64,
}

/// `e^z - 1` without cancellation for small `|z|`.
fn expm1(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let half_sin = (0.5 * y).sin();
    let re = x.exp_m1() * y.cos() - 2.0 * half_sin * half_sin;
    let im = x.exp() * y.sin();
    Complex64::new(re, im)
}

/// `∫_a^b e^{sθ} dθ`.
fn piece_integral(s: Complex64, a: f64, b: f64) -> Complex64 {
    if s.norm() < SERIES_RADIUS {
        return Complex64::new(b - a, 0.0) + s * (b * b - a * a) * 0.5;
    }
    (s * a).exp() * expm1(s * (b - a)) / s
}

/// `∫_a^b θ e^{sθ} dθ`.
fn piece_moment(s: Complex64, a: f64, b: f64) -> Complex64 {
    let scale = a.abs().max(b.abs());
    if s.norm() * scale < 1e-3 {
        // Σ_n s^n/n! ∫ θ^{n+1} dθ
        let mut acc = Complex64::new(0.0, 0.0);
        let mut sn = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        for n in 0..8 {
            let p: i32 = n + 2;
            acc += sn * ((b.powi(p) - a.powi(p)) / (fact * p as f64));
            sn *= s;
            fact *= (n + 1) as f64;
        }
        return acc;
    }
    ((s * b).exp() * b - (s * a).exp() * a) / s - piece_integral(s, a, b) / s
}

fn accumulate(acc: &mut CMat, m: &Mat, w: Complex64) {
    for (dst, src) in acc.iter_mut().zip(m.iter()) {
        *dst += w * *src;
    }
}

/// Above this `|s| (b - a)` a piece integral is taken as a difference of the
/// exponentials at its breakpoints, which adjacent pieces share.
const SHARED_EXP_MIN: f64 = 0.5;

/// `(∫_a^b e^{sθ} dθ, ∫_a^b θ e^{sθ} dθ)` for every density piece, given
/// `e^{s b_j}` at every breakpoint.
fn density_weights(
    m: &MatrixNbv,
    s: Complex64,
    with_moment: bool,
) -> impl Iterator<Item = (Complex64, Complex64, &Mat)> + '_ {
    let bps = m.density().breakpoints();
    let exps: Vec<Complex64> = bps.iter().map(|&b| (s * b).exp()).collect();
    m.density().intervals().enumerate().map(move |(j, (a, b, c))| {
        let zero = Complex64::new(0.0, 0.0);
        if s.norm() * (b - a) < SHARED_EXP_MIN {
            let moment = if with_moment { piece_moment(s, a, b) } else { zero };
            return (piece_integral(s, a, b), moment, c);
        }
        let integral = (exps[j + 1] - exps[j]) / s;
        let moment =
            if with_moment { (exps[j + 1] * b - exps[j] * a - integral) / s } else { zero };
        (integral, moment, c)
    })
}

/// `L(s)`.
pub fn eval_l(m: &MatrixNbv, s: Complex64) -> CMat {
    let d = m.dim();
    let mut l = CMat::zeros(d, d);
    for a in m.atoms() {
        accumulate(&mut l, &a.matrix, (-s * a.tau).exp());
    }
    for (w, _, c) in density_weights(m, s, false) {
        accumulate(&mut l, c, w);
    }
    l
}

/// `L(s)` and `L'(s)`.
pub fn eval_l_with_derivative(m: &MatrixNbv, s: Complex64) -> (CMat, CMat) {
    let d = m.dim();
    let mut l = CMat::zeros(d, d);
    let mut lp = CMat::zeros(d, d);
    for a in m.atoms() {
        let e = (-s * a.tau).exp();
        accumulate(&mut l, &a.matrix, e);
        if a.tau != 0.0 {
            accumulate(&mut lp, &a.matrix, e * (-a.tau));
        }
    }
    for (w, wm, c) in density_weights(m, s, true) {
        accumulate(&mut l, c, w);
        accumulate(&mut lp, c, wm);
    }
    (l, lp)
}

/// `Δ(s)` and `Δ'(s)` (Jacobi's formula; the adjugate form is used when
/// `I - L(s)` is close to singular).
pub fn eval_delta(m: &MatrixNbv, s: Complex64) -> CharEval {
    let d = m.dim();
    let (l, lp) = eval_l_with_derivative(m, s);
    let a = CMat::identity(d, d) - &l;
    let delta = linalg::det(&a);
    let scale = (1.0 + linalg::frobenius(&l)).powi(d as i32);
    let neg_lp = -lp;
    let delta_prime = if d == 1 {
        neg_lp[(0, 0)]
    } else if delta.norm() > 1e-8 * scale {
        match a.clone().try_inverse() {
            Some(inv) => delta * (inv * &neg_lp).trace(),
            None => (linalg::adjugate(&a) * &neg_lp).trace(),
        }
    } else {
        (linalg::adjugate(&a) * &neg_lp).trace()
    };
    CharEval { s, l, delta, delta_prime }
}

/// `Δ(s)` alone.
pub fn delta(m: &MatrixNbv, s: Complex64) -> Complex64 {
    let d = m.dim();
    linalg::det(&(CMat::identity(d, d) - eval_l(m, s)))
}

/// Characteristic function of the perturbed system `φ_*μ`.
pub fn eval_delta_perturbed(m: &MatrixNbv, phi: &Perturbation, s: Complex64) -> Result<Complex64> {
    Ok(eval_delta(&m.pushforward(phi), s).delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{mat, Density};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn l_at_zero_is_total_mass() {
        let m = MatrixNbv::from_atoms(2, vec![(0.4, mat(2, &[0.1, 0.2, 0.3, 0.4]))])
            .unwrap()
            .with_density(
                Density::new(
                    vec![-1.0, -0.3, 0.0],
                    vec![mat(2, &[1.0, 0.0, 0.5, -1.0]), mat(2, &[0.0, 2.0, 0.0, 0.0])],
                )
                .unwrap(),
            )
            .unwrap();
        let l = eval_l(&m, c(0.0, 0.0));
        let mass = linalg::to_complex(&m.total_mass());
        assert!((l - mass).norm() < 1e-15);
    }

    #[test]
    fn scalar_atom_and_density() {
        let m = MatrixNbv::scalar_atoms(&[(1.0, 0.3)]).unwrap();
        let l = eval_l(&m, c(0.7, 0.0));
        assert!((l[(0, 0)].re - 0.3 * (-0.7f64).exp()).abs() < 1e-15);

        let m = MatrixNbv::zero(1).with_density(Density::constant(mat(1, &[1.0]))).unwrap();
        let l = eval_l(&m, c(1.0, 0.0));
        assert!((l[(0, 0)].re - 0.632_120_558_828_557_7).abs() < 1e-15);
    }

    #[test]
    fn series_branch_is_continuous() {
        for &(a, b) in &[(-1.0, 0.0), (-0.7, -0.2), (-0.3, 0.0)] {
            let s0 = c(0.9e-8, 0.3e-8);
            let s1 = c(1.1e-8, 0.3e-8);
            // three Taylor terms; the remainder is O(|s|^3)
            let series = |s: Complex64| {
                Complex64::new(b - a, 0.0)
                    + s * ((b * b - a * a) / 2.0)
                    + s * s * ((b * b * b - a * a * a) / 6.0)
            };
            for s in [s0, s1] {
                assert!((piece_integral(s, a, b) - series(s)).norm() < 1e-15);
            }
            let m0 = piece_moment(c(0.99e-3, 0.0), a, b);
            let m1 = piece_moment(c(1.01e-3, 0.0), a, b);
            // composite Simpson on θ e^{sθ}
            let simpson = |s: f64| {
                let n = 2000;
                let h = (b - a) / n as f64;
                let f = |t: f64| t * (s * t).exp();
                let mut acc = f(a) + f(b);
                for i in 1..n {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += w * f(a + i as f64 * h);
                }
                acc * h / 3.0
            };
            assert!((m0.re - simpson(0.99e-3)).abs() < 1e-12);
            assert!((m1.re - simpson(1.01e-3)).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_root_at_minus_ln2() {
        let m = MatrixNbv::scalar_atoms(&[(1.0, 0.5)]).unwrap();
        let e = eval_delta(&m, c(-(2f64.ln()), 0.0));
        assert!(e.delta.norm() < 1e-15);
        // Δ'(s) = 0.5 e^{-s}
        assert!((e.delta_prime - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn delta_tends_to_det_i_minus_am() {
        let m = MatrixNbv::from_atoms(
            2,
            vec![(0.5, mat(2, &[2.0, 1.0, -1.0, 3.0])), (0.9, mat(2, &[0.0, 1.0, 1.0, 0.0]))],
        )
        .unwrap();
        assert!((delta(&m, c(50.0, 0.0)) - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn singular_point_uses_adjugate() {
        // I - L(s) has a double zero eigenvalue at s = -ln 2.
        let m = MatrixNbv::from_atoms(2, vec![(1.0, mat(2, &[0.5, 0.0, 0.0, 0.5]))]).unwrap();
        let e = eval_delta(&m, c(-(2f64.ln()), 0.0));
        assert!(e.delta.norm() < 1e-15);
        assert!(e.delta_prime.norm() < 1e-14);
        assert!(e.delta_prime.re.is_finite());
    }
}
