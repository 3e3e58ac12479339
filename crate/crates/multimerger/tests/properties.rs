//! Property suites over randomly drawn measures, sample sizes, and
//! seeds: merger-rate consistency under sample growth, the spectrum
//! identity for the mean pairwise distance, ultrametric root paths, and
//! the demographic time change against its inverse.

use multimerger::demography::{SizeProfile, TimeChange, TimeScaleExponent};
use multimerger::genealogy::simulate;
use multimerger::measures::Measure;
use multimerger::mutstats::drop_mutations;
use proptest::prelude::*;

const IDENTITY_TOLERANCE: f64 = 1e-9;

fn arbitrary_measure() -> impl Strategy<Value = Measure> {
    prop_oneof![
        Just(Measure::Kingman),
        Just(Measure::BolthausenSznitman),
        (0.05f64..1.95).prop_map(|alpha| Measure::beta_from_alpha(alpha).unwrap()),
        (0.05f64..0.95).prop_map(|p| Measure::dirac(p).unwrap()),
        (0.05f64..0.95).prop_map(|psi| Measure::eldon_wakeley(psi).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rates_are_consistent_under_sample_growth(
        measure in arbitrary_measure(),
        n in 2u32..40,
    ) {
        for k in 2..=n {
            let coarse = measure.merger_rate(n, k).unwrap();
            let keep = measure.merger_rate(n + 1, k).unwrap();
            let absorb = measure.merger_rate(n + 1, k + 1).unwrap();
            let gap = (coarse - keep - absorb).abs();
            prop_assert!(
                gap <= IDENTITY_TOLERANCE * coarse.max(1.0),
                "rate split fails at n={n}, k={k}: {coarse} vs {keep} + {absorb}"
            );
        }
    }

    #[test]
    fn mean_pairwise_distance_equals_the_spectrum_identity(
        measure in arbitrary_measure(),
        n in 2u32..30,
        theta in 0.5f64..8.0,
        seed in 0u64..1_000_000,
    ) {
        let genealogy = simulate(&measure, n, seed).unwrap();
        let sites = drop_mutations(&genealogy, theta, seed ^ 0x5eed).unwrap();
        let pi = sites.mean_pairwise_distance();
        let nf = f64::from(n);
        let pairs = nf * (nf - 1.0) / 2.0;
        let from_spectrum: f64 = sites
            .sfs()
            .iter()
            .enumerate()
            .map(|(idx, &count)| {
                let i = (idx + 1) as f64;
                i * (nf - i) * count as f64
            })
            .sum::<f64>()
            / pairs;
        prop_assert!(
            (pi - from_spectrum).abs() <= IDENTITY_TOLERANCE * pi.max(1.0),
            "pi {pi} disagrees with the spectrum identity {from_spectrum}"
        );
    }

    #[test]
    fn root_paths_are_ultrametric(
        measure in arbitrary_measure(),
        n in 2u32..40,
        seed in 0u64..1_000_000,
    ) {
        let genealogy = simulate(&measure, n, seed).unwrap();
        let parents = genealogy.parents();
        let lengths = genealogy.branch_lengths();
        let height = genealogy.height();
        for leaf in 0..n {
            let mut depth = 0.0f64;
            let mut block = leaf as usize;
            while let Some(parent) = parents[block] {
                depth += lengths[block];
                block = parent as usize;
            }
            prop_assert!(
                (depth - height).abs() <= IDENTITY_TOLERANCE * height.max(1.0),
                "leaf {leaf} sits at depth {depth} in a tree of height {height}"
            );
        }
    }

    #[test]
    fn time_change_round_trips_through_its_inverse(
        rho in 0.01f64..50.0,
        t in 0.0f64..5.0,
    ) {
        let change = TimeChange::new(
            SizeProfile::exponential_growth(rho).unwrap(),
            TimeScaleExponent::wright_fisher(),
        )
        .unwrap();
        let forward = change.intensity(t).unwrap();
        let back = change.inverse_intensity(forward).unwrap();
        prop_assert!(
            (back - t).abs() <= IDENTITY_TOLERANCE * t.max(1.0),
            "round trip sends {t} to {back} at rho={rho}"
        );
    }
}
