mod common;

use common::{any_system, matrix, system};
use ddstab::charfun::{delta, eval_delta, eval_l};
use ddstab::{linalg, MatrixNorm};
use num_complex::Complex64;
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Complex64> {
    (-3.0f64..3.0, -60.0f64..60.0).prop_map(|(re, im)| Complex64::new(re, im))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn conjugate_symmetry(m in any_system(1.0), s in point()) {
        let a = delta(&m, s.conj());
        let b = delta(&m, s).conj();
        prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
    }

    #[test]
    fn transform_is_bounded_by_variation_on_right_half_plane(
        m in any_system(1.0),
        re in 0.0f64..5.0,
        im in -100.0f64..100.0,
    ) {
        let m = m.with_norm(MatrixNorm::Op2);
        let l = eval_l(&m, Complex64::new(re, im));
        prop_assert!(MatrixNorm::Op2.of_complex(&l) <= m.total_variation() * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn delta_matches_determinant_and_derivative(m in any_system(1.0), s in point()) {
        let e = eval_delta(&m, s);
        let d = m.dim();
        let det = linalg::det(&(ddstab::CMat::identity(d, d) - &e.l));
        prop_assert!((e.delta - det).norm() <= 1e-12 * (1.0 + det.norm()));
        let h = 1e-5;
        let fd = (delta(&m, s + h) - delta(&m, s - h)) / (2.0 * h);
        let scale = 1.0 + e.delta_prime.norm() + fd.norm();
        prop_assert!((fd - e.delta_prime).norm() <= 1e-6 * scale * (1.0 + s.re.abs()).exp());
    }

    #[test]
    fn difference_is_lipschitz_in_variation(
        (m, e) in (1..=3usize).prop_flat_map(|d| (system(d, 0.5), matrix(d, 1.0))),
        tau in 0.05f64..1.0,
    ) {
        // N_t = M + t E δ_{-tau}: the ratio |Δ_M - Δ_N| / Var(M - N) stays
        // bounded as t -> 0 on the line Re s = 0.
        let ratio = |t: f64| {
            let n = m.diff(&ddstab::MatrixNbv::from_atoms(m.dim(), vec![(tau, &e * -t)]).unwrap()).unwrap();
            let var = m.diff(&n).unwrap().total_variation();
            (0..40)
                .map(|k| {
                    let s = Complex64::new(0.0, -50.0 + 2.5 * k as f64);
                    (delta(&m, s) - delta(&n, s)).norm() / var
                })
                .fold(0.0, f64::max)
        };
        let coarse = ratio(1e-2);
        let fine = ratio(1e-6);
        prop_assert!(fine.is_finite() && fine <= 1.5 * coarse + 1e-9, "{} vs {}", fine, coarse);
    }
}

#[test]
fn constant_density_transform() {
    // ∫_{-1}^0 c e^{sθ} dθ = c (1 - e^{-s}) / s
    let c = 0.7;
    let m = ddstab::MatrixNbv::zero(1)
        .with_density(ddstab::Density::constant(ddstab::measure::mat(1, &[c])))
        .unwrap();
    for s in [Complex64::new(0.5, 3.0), Complex64::new(-2.0, 0.1)] {
        let expected = c * (1.0 - (-s).exp()) / s;
        assert!((eval_l(&m, s)[(0, 0)] - expected).norm() <= 1e-12);
    }
    // series 1 - s/2 + s^2/6 near the origin
    let s = Complex64::new(1e-9, 2e-10);
    let expected = c * (1.0 - s / 2.0 + s * s / 6.0);
    assert!((eval_l(&m, s)[(0, 0)] - expected).norm() <= 1e-15);
}
