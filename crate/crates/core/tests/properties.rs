use proptest::prelude::*;

use branchctl_core::config::Preset;
use branchctl_core::dephasing::{generate_path, NoiseGrid, NoiseSeed};
use branchctl_core::eigen::{
    branching_deviation_of, null_eigenvector_of, strong_limit_pair_of, weak_limit_spectrum_of,
    ResonantSpectrum,
};
use branchctl_core::model::{PulseSet, SimConfig, Window};
use branchctl_core::propagator::{basis_state, populations, propagate, BranchingRatio, StateVector};
use num_complex::Complex64;

fn pulses() -> impl Strategy<Value = PulseSet> {
    prop::array::uniform5(1.0f64..100.0).prop_map(|p| PulseSet::new(p[0], p[1], p[2], p[3], p[4]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn spectrum_is_symmetric_and_traces_match(p in pulses(), xi in -1.5f64..2.5) {
        let r = p.envelopes(xi);
        let s = ResonantSpectrum::from_rabi(&r);
        let vals = s.eigenvalues();
        let mut sorted = vals;
        sorted.sort_by(f64::total_cmp);
        for i in 0..2 {
            prop_assert!((sorted[i] + sorted[3 - i]).abs() <= 1e-9 * sorted[3].abs());
        }
        // tr(H_r^2) = 2 * Omega_M^2 counts each +-lambda pair twice.
        let sum: f64 = vals.iter().map(|v| v * v).sum();
        prop_assert!((sum - 2.0 * r.omega_m_sq()).abs() <= 1e-10 * r.omega_m_sq());
    }

    #[test]
    fn closed_form_vectors_are_orthonormal_eigenvectors(p in pulses(), xi in -1.0f64..2.0) {
        let r = p.envelopes(xi);
        let s = ResonantSpectrum::from_rabi(&r);
        prop_assume!(!s.degenerate);
        let h = r.resonant_matrix();
        let null = null_eigenvector_of(&r).unwrap();
        prop_assert!((h * null).norm() <= 1e-12 * r.omega_m_sq().sqrt().max(1.0));
        let mut vs = vec![null];
        for k in 2..=5 {
            let v = s.eigenvector(k).unwrap();
            let lam = s.branch(k).unwrap().lambda;
            prop_assert!((h * v - v * lam).norm() <= 1e-9 * lam.abs().max(1.0));
            vs.push(v);
        }
        for i in 0..5 {
            prop_assert!((vs[i].norm() - 1.0).abs() <= 1e-12);
            for j in 0..i {
                prop_assert!(vs[i].dot(&vs[j]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn deviation_matches_vector_ratio(p in pulses(), xi in -1.0f64..2.0, k in 2usize..=5) {
        let r = p.envelopes(xi);
        let s = ResonantSpectrum::from_rabi(&r);
        prop_assume!(!s.degenerate);
        let v = s.eigenvector(k).unwrap();
        prop_assume!(v[3].abs() > 1e-6);
        let direct = (v[2] / v[3]).powi(2) - (r.b4 / r.b3).powi(2);
        let d = branching_deviation_of(&r, k).unwrap();
        prop_assert!((d - direct).abs() <= 1e-10 * direct.abs().max(1.0), "{} vs {}", d, direct);
    }

    #[test]
    fn weak_limit_is_dissipative(p in pulses(), xi in -1.0f64..2.0, gamma in 0.0f64..10.0) {
        let r = p.envelopes(xi);
        prop_assume!(!ResonantSpectrum::from_rabi(&r).degenerate);
        for z in weak_limit_spectrum_of(&r, gamma).unwrap() {
            prop_assert!(z.im <= 0.0);
        }
    }

    #[test]
    fn strong_pair_is_normalized_and_decaying(p in pulses(), xi in -1.0f64..2.0, gamma in 100.0f64..1e5) {
        let pair = strong_limit_pair_of(&p.envelopes(xi), gamma).unwrap();
        prop_assert!((pair.vector.norm() - 1.0).abs() <= 1e-12);
        prop_assert!(pair.lambda.im < 0.0 && pair.lambda.re == 0.0);
        prop_assert_eq!(pair.vector[1], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn populations_sum_to_squared_norm(re in prop::array::uniform5(-1.0f64..1.0), im in prop::array::uniform5(-1.0f64..1.0)) {
        let psi = StateVector::from_fn(|k, _| Complex64::new(re[k], im[k]));
        let p = populations(&psi);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - psi.norm_squared()).abs() <= 1e-14);
    }

    #[test]
    fn branching_markers(num in 0.0f64..1.0, den in 0.0f64..1.0) {
        let floor = 1e-10;
        match BranchingRatio::from_parts(num, den, floor) {
            BranchingRatio::Finite(b) => prop_assert!(den >= floor && (b - num / den).abs() <= 1e-15 * b.max(1.0)),
            BranchingRatio::Infinite => prop_assert!(den < floor && num >= floor),
            BranchingRatio::Indeterminate => prop_assert!(den < floor && num < floor),
        }
    }

    #[test]
    fn noise_paths_reproducible_and_degenerate(master in any::<u64>(), realization in 0u64..1_000_000) {
        let grid = NoiseGrid::covering(Window { start: 0.0, end: 0.2 }, 0.002);
        let seed = NoiseSeed { master, realization };
        let a = generate_path(15.0, 0.02, grid, seed).unwrap();
        let b = generate_path(15.0, 0.02, grid, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for n in 0..grid.len {
            let d = a.diagonal(n);
            prop_assert_eq!(d[2].to_bits(), d[3].to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn norm_non_increasing_under_dissipation(p in pulses(), gamma in 0.0f64..2000.0, g3 in 0.0f64..2.0, g4 in 0.0f64..2.0) {
        let cfg = SimConfig {
            gamma,
            product_decay: [g3, g4],
            output_samples: 100,
            tolerance: 1e-8,
            ..SimConfig::default()
        };
        let rec = propagate(&p, &cfg, None, &basis_state(1)).unwrap();
        for w in rec.norm.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10);
        }
    }
}

#[test]
fn larger_branch_carries_larger_deviation() {
    let p = Preset::Fig3.pulses();
    for i in 0..=40 {
        let xi = -1.0 + 0.075 * i as f64;
        let r = p.envelopes(xi);
        let s = ResonantSpectrum::from_rabi(&r);
        if s.degenerate {
            continue;
        }
        // Branches are ordered small-then-large within each sign.
        let small = branching_deviation_of(&r, 3).unwrap().abs();
        let large = branching_deviation_of(&r, 5).unwrap().abs();
        assert!(large >= small, "xi {xi}: {large} < {small}");
    }
}
