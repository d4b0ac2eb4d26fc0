mod common;

use common::{any_system, max_abs, piecewise_linear, system};
use ddstab::charfun;
use ddstab::hs_radius::random_perturbation;
use ddstab::{MatrixNbv, Perturbation};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variation_is_nonnegative_and_vanishes_only_on_zero(m in any_system(1.0)) {
        let v = m.total_variation();
        prop_assert!(v >= 0.0);
        prop_assert_eq!(v == 0.0, m.is_zero());
        prop_assert!((m.scaled(0.0).total_variation()) == 0.0);
    }

    #[test]
    fn triangle_inequality(
        (m, n) in (1..=3usize).prop_flat_map(|d| (system(d, 1.0), system(d, 1.0)))
    ) {
        let lhs = m.diff(&n).unwrap().total_variation();
        prop_assert!(lhs <= m.total_variation() + n.total_variation() + 1e-12);
    }

    #[test]
    fn pushforward_conserves_mass_and_contracts_variation(
        m in any_system(1.0),
        phi in piecewise_linear(0.1),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in [
            Perturbation::PiecewiseLinear(phi),
            random_perturbation(0.1, &mut rng, true).unwrap(),
        ] {
            let pushed = m.pushforward(&p);
            let scale = 1.0 + m.total_variation();
            prop_assert!(max_abs(&(pushed.total_mass() - m.total_mass())) <= 1e-12 * scale);
            prop_assert!(pushed.total_variation() <= m.total_variation() + 1e-12);
        }
    }

    #[test]
    fn identity_pushforward_is_exact(m in any_system(1.0)) {
        prop_assert_eq!(m.pushforward(&Perturbation::identity()), m);
    }

    #[test]
    fn composition_of_piecewise_linear_maps(
        m in any_system(1.0),
        phi in piecewise_linear(0.2),
        psi in piecewise_linear(0.2),
    ) {
        let twice = m
            .pushforward(&Perturbation::PiecewiseLinear(phi.clone()))
            .pushforward(&Perturbation::PiecewiseLinear(psi.clone()));
        let once = m.pushforward(&Perturbation::PiecewiseLinear(phi.then(&psi)));
        assert_same_measure(&twice, &once)?;
    }
}

/// Atom lists agree up to position rounding, and `L(s)` agrees on a few
/// test points (which also compares the densities).
fn assert_same_measure(a: &MatrixNbv, b: &MatrixNbv) -> Result<(), TestCaseError> {
    let merged = |m: &MatrixNbv| {
        let mut out: Vec<(f64, ddstab::Mat)> = Vec::new();
        for at in m.atoms() {
            match out.last_mut() {
                Some((t, acc)) if (at.tau - *t).abs() <= 1e-12 => *acc += &at.matrix,
                _ => out.push((at.tau, at.matrix.clone())),
            }
        }
        out
    };
    let (ma, mb) = (merged(a), merged(b));
    prop_assert_eq!(ma.len(), mb.len());
    for ((ta, xa), (tb, xb)) in ma.iter().zip(&mb) {
        prop_assert!((ta - tb).abs() <= 1e-12, "atom at {} vs {}", ta, tb);
        prop_assert!(max_abs(&(xa - xb)) <= 1e-12, "atom at {}: {} vs {}", ta, xa, xb);
    }
    for s in [Complex64::new(0.3, 0.0), Complex64::new(-0.5, 7.0), Complex64::new(1.0, -40.0)] {
        let diff = charfun::eval_l(a, s) - charfun::eval_l(b, s);
        let tol = 1e-10 * (1.0 + a.total_variation()) * (1.0 + s.re.abs()).exp();
        prop_assert!(diff.iter().all(|z| z.norm() <= tol));
    }
    Ok(())
}

#[test]
fn delay_shift_doubles_the_atom_norm() {
    let a = ddstab::measure::mat(2, &[0.3, -1.2, 0.4, 0.8]);
    let m = MatrixNbv::from_atoms(2, vec![(0.3, a.clone())]).unwrap();
    let n = MatrixNbv::from_atoms(2, vec![(0.7, a.clone())]).unwrap();
    let norm = m.total_variation();
    assert!((m.diff(&n).unwrap().total_variation() - 2.0 * norm).abs() <= 1e-14);
}
