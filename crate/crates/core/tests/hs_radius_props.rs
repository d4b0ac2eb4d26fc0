mod common;

use common::{any_system, matrix, max_abs, system};
use ddstab::hs_radius::{
    self, build_destabilizer, estimate_rho_hs, rho_of_phases, BinDescriptor, DelayChoice,
    PhaseAssignment,
};
use ddstab::spectrum::{self, StripQuery};
use ddstab::{Density, Mat, MatrixNbv, Perturbation};
use proptest::prelude::*;

fn phases(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..std::f64::consts::TAU, n)
}

/// Splits every density bin of `pa` in two; each half keeps its parent's
/// phase.
fn refine(pa: &PhaseAssignment) -> PhaseAssignment {
    let mut bins = Vec::new();
    let mut mats = Vec::new();
    let mut ph = Vec::new();
    for ((b, m), &t) in pa.bins.iter().zip(&pa.bin_matrices).zip(&pa.phases) {
        match *b {
            BinDescriptor::Atom { .. } => {
                bins.push(*b);
                mats.push(m.clone());
                ph.push(t);
            }
            BinDescriptor::Interval { lo, hi } => {
                let mid = 0.5 * (lo + hi);
                bins.push(BinDescriptor::Interval { lo, hi: mid });
                bins.push(BinDescriptor::Interval { lo: mid, hi });
                mats.push(m * ((mid - lo) / (hi - lo)));
                mats.push(m * ((hi - mid) / (hi - lo)));
                ph.extend([t, t]);
            }
        }
    }
    PhaseAssignment { bins, phases: ph, bin_matrices: mats }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bins_partition_the_mass(m in any_system(1.0), extra in 0usize..10) {
        let pa = PhaseAssignment::bins_of(&m, extra);
        let sum = pa.bin_matrices.iter().fold(Mat::zeros(m.dim(), m.dim()), |acc, b| acc + b);
        prop_assert!(max_abs(&(sum - m.total_mass())) <= 1e-12 * (1.0 + m.total_variation()));
    }

    #[test]
    fn objective_scales_with_the_measure(
        (m, th) in any_system(1.0).prop_flat_map(|m| {
            let n = PhaseAssignment::bins_of(&m, 4).len();
            (Just(m), phases(n))
        }),
        c in prop::sample::select(vec![-3.0, -0.5, 0.25, 2.0, 7.5]),
    ) {
        let pa = PhaseAssignment::bins_of(&m, 4).with_phases(th.clone()).unwrap();
        let pc = PhaseAssignment::bins_of(&m.scaled(c), 4).with_phases(th).unwrap();
        let (r, rc) = (rho_of_phases(&pa), rho_of_phases(&pc));
        prop_assert!((rc - c.abs() * r).abs() <= 1e-12 * (1.0 + rc));
    }

    #[test]
    fn estimate_is_sandwiched(m in any_system(1.0), seed in 0u64..1000) {
        let est = estimate_rho_hs(&m, m.atoms().len() + 4, 4, seed).unwrap();
        prop_assert!(est.lower <= est.upper);
        prop_assert!(est.upper <= m.total_variation() + 1e-12);
        prop_assert!((rho_of_phases(&est.witness) - est.lower).abs() <= 1e-9 * (1.0 + est.lower));
        if m.dim() == 1 {
            prop_assert_eq!(est.lower, m.total_variation());
        }
    }

    #[test]
    fn refinement_embeds_coarse_assignments(
        (m, th) in (2..=3usize).prop_flat_map(|d| system(d, 1.0)).prop_flat_map(|m| {
            let n = PhaseAssignment::bins_of(&m, 3).len();
            (Just(m), phases(n))
        }),
    ) {
        let coarse = PhaseAssignment::bins_of(&m, 3).with_phases(th).unwrap();
        let fine = refine(&coarse);
        prop_assert!((rho_of_phases(&fine) - rho_of_phases(&coarse)).abs() <= 1e-10);
    }

    #[test]
    fn refined_estimate_does_not_drop(
        (atoms, c) in (prop::collection::vec((0.05f64..1.0, matrix(2, 0.6)), 1..=2), matrix(2, 0.6)),
    ) {
        // One density piece: 2k uniform density bins refine k bins.
        let mut taus: Vec<(f64, Mat)> = Vec::new();
        for (t, a) in atoms {
            if taus.iter().all(|(u, _)| (u - t).abs() > 1e-3) {
                taus.push((t, a));
            }
        }
        let n_atoms = taus.len();
        let m = MatrixNbv::from_atoms(2, taus).unwrap().with_density(Density::constant(c)).unwrap();
        let coarse = estimate_rho_hs(&m, n_atoms + 2, 8, 5).unwrap();
        let fine = estimate_rho_hs(&m, n_atoms + 4, 8, 5).unwrap();
        prop_assert!(fine.lower >= coarse.lower - 1e-10, "{} < {}", fine.lower, coarse.lower);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn destabilizer_reaches_its_target(
        (a, b, t1, t2) in (0.3f64..0.9, -0.9f64..-0.3, 0.1f64..0.45, 0.55f64..1.0),
        seed in 0u64..100,
    ) {
        let m = MatrixNbv::scalar_atoms(&[(t1, a), (t2, b)]).unwrap();
        prop_assume!(m.total_variation() > 1.05);
        let d = build_destabilizer(&m, 0.05, 0.1, seed, DelayChoice::PhaseAligned).unwrap();
        let phi = Perturbation::Binning(d.perturbation.clone());
        prop_assert!(phi.sup_distance_to_identity() < 0.05);
        let pushed = m.pushforward(&phi);
        let q = StripQuery::default_for(&pushed).with_im_max(d.diagnostics.suggested_im_max);
        let s = spectrum::spectral_abscissa(&pushed, &q).unwrap().abscissa();
        prop_assert!(s >= d.diagnostics.rho_lower.ln() - 0.1 - 1e-3);
    }
}

#[test]
fn disk_never_beats_the_torus_for_commuting_atoms() {
    let m = MatrixNbv::from_atoms(
        2,
        vec![
            (0.3, ddstab::measure::mat(2, &[0.4, 0.0, 0.0, -0.2])),
            (0.8, ddstab::measure::mat(2, &[-0.3, 0.0, 0.0, 0.5])),
        ],
    )
    .unwrap();
    let est = estimate_rho_hs(&m, 2, 8, 1).unwrap();
    // diagonal: ρ_HS = max over the diagonal entries of Σ |a_kk| = 0.7
    assert!((est.lower - 0.7).abs() <= 1e-9);
    let report = hs_radius::check_disk_vs_torus(&est, 2000, 3);
    assert_eq!(report.violations, 0);
}
