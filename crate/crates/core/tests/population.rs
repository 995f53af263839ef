use std::collections::HashSet;

use cellinfect::analytics::{mean_population, LinearDivisionParams};
use cellinfect::model::{CellPolicy, JumpMeasure, ModelSpec, ParasiteLaw, Profile, SharingKernel, SizeLaw};
use cellinfect::montecarlo::{equivalence_test, replicate, Estimator, SeedPlan, Summary};
use cellinfect::population::{
    run_population, write_snapshots_csv, CellStatus, PopulationConfig, PopulationRun, PopulationState,
    SNAPSHOT_CSV_HEADER,
};
use proptest::prelude::*;

fn runs(spec: &ModelSpec, config: &PopulationConfig, n: usize, seed: u64) -> Vec<PopulationRun> {
    replicate(n, SeedPlan::new(seed), 1, |_, rng| run_population(spec, config, rng))
        .unwrap()
        .into_result()
        .unwrap()
}

fn column(runs: &[PopulationRun], k: usize, f: impl Fn(&cellinfect::population::PopulationSnapshotStats) -> f64) -> Estimator {
    Estimator::new("col", runs.iter().map(|r| f(&r.snapshots[k])).collect())
}

#[test]
fn extinction_frequency_of_zero_trait_birth_death() {
    let spec = ModelSpec::new(
        ParasiteLaw::geometric(1.0, 0.2),
        CellPolicy::constant(1.0, 0.5, SharingKernel::Uniform),
        0.0,
    )
    .with_horizon(200.0)
    .with_time_step(0.5);
    let config = PopulationConfig::at_times(vec![]).with_survival_threshold(100);
    let out = runs(&spec, &config, 4_000, 21);
    assert!(out.iter().all(|r| r.extinct || r.reached_threshold));
    let est = Estimator::new("extinct", out.iter().map(|r| r.extinct as u8 as f64).collect());
    let eq = equivalence_test(est.summary(), Summary::exact(0.5), 3.0);
    assert!(eq.pass, "{eq:?}");
}

#[test]
fn pure_birth_mean_is_exponential() {
    let spec = ModelSpec::new(
        ParasiteLaw::geometric(0.5, 0.1),
        CellPolicy::constant(1.0, 0.0, SharingKernel::Uniform),
        1.0,
    )
    .with_horizon(2.0)
    .with_time_step(0.1);
    let out = runs(&spec, &PopulationConfig::at_times(vec![2.0]), 4_000, 22);
    let est = column(&out, 0, |s| s.alive as f64);
    let eq = equivalence_test(est.summary(), Summary::exact(2f64.exp()), 3.0);
    assert!(eq.pass, "{eq:?}");
}

#[test]
fn no_events_leaves_one_cell() {
    let spec = ModelSpec::new(
        ParasiteLaw::geometric(0.5, 0.1),
        CellPolicy::constant(0.0, 0.0, SharingKernel::Uniform),
        1.0,
    )
    .with_horizon(5.0);
    let out = runs(&spec, &PopulationConfig::at_times(vec![1.0, 5.0]), 20, 23);
    for r in &out {
        assert!(r.snapshots.iter().all(|s| s.alive == 1 && s.counted == 1));
    }
}

#[test]
fn linear_division_mean_matches_closed_form() {
    let (alpha, beta, g, q) = (1.0, 2.0, 1.0, 0.5);
    let spec = ModelSpec::new(
        ParasiteLaw::geometric(g, 0.0),
        CellPolicy::linear_division(alpha, beta, q, SharingKernel::Uniform),
        1.0,
    )
    .with_horizon(1.0)
    .with_time_step(0.1);
    let out = runs(&spec, &PopulationConfig::at_times(vec![0.5, 1.0]), 4_000, 24);
    let p = LinearDivisionParams::new(alpha, beta, g, q);
    for (k, t) in [0.5, 1.0].iter().enumerate() {
        let est = column(&out, k, |s| s.alive as f64);
        let eq = equivalence_test(est.summary(), Summary::exact(mean_population(1.0, 0.0, *t, p).unwrap()), 3.0);
        assert!(eq.pass, "t = {t}: {eq:?}");
    }
}

#[test]
fn halving_the_step_keeps_the_mean_count() {
    // Non-affine noise forces the trapezoid hazard.
    let law = ParasiteLaw {
        drift: Profile::linear(1.0),
        diffusion: Profile::power_sum(&[(0.3, 1.0)]),
        jump_rate: Profile::zero(),
        jumps: None,
        stable: None,
    };
    let policy = CellPolicy::linear_division(0.5, 1.0, 0.2, SharingKernel::Uniform);
    let config = PopulationConfig::at_times(vec![1.5]);
    let base = ModelSpec::new(law, policy, 1.0).with_horizon(1.5);
    let a = column(&runs(&base.clone().with_time_step(0.1), &config, 3_000, 25), 0, |s| s.alive as f64);
    let b = column(&runs(&base.with_time_step(0.05), &config, 3_000, 26), 0, |s| s.alive as f64);
    let eq = equivalence_test(a.summary(), b.summary(), 2.0);
    assert!(eq.pass, "{eq:?}");
}

#[test]
fn death_marking_factorizes_the_death_rate() {
    let q = 0.4;
    let spec = ModelSpec::new(
        ParasiteLaw::geometric(0.5, 0.1),
        CellPolicy::constant(1.0, q, SharingKernel::Uniform),
        1.0,
    )
    .with_horizon(2.0)
    .with_time_step(0.1);
    let config = PopulationConfig::at_times(vec![1.0, 2.0]).with_death_marking();
    let out = runs(&spec, &config, 4_000, 27);
    for (k, t) in [1.0f64, 2.0].iter().enumerate() {
        let alive = column(&out, k, |s| s.alive as f64);
        let all = column(&out, k, |s| s.unmarked_and_marked as f64);
        assert!(out.iter().all(|r| r.snapshots[k].alive <= r.snapshots[k].unmarked_and_marked));
        let eq = equivalence_test(alive.summary(), all.summary().scale((-q * t).exp()), 3.0);
        assert!(eq.pass, "t = {t}: {eq:?}");
        // The q = 0 population has the pure-birth mean.
        let eq = equivalence_test(all.summary(), Summary::exact(t.exp()), 3.0);
        assert!(eq.pass, "t = {t}: {eq:?}");
    }
}

#[test]
fn population_cap_flags_truncation() {
    let spec = ModelSpec::new(
        ParasiteLaw::geometric(0.0, 0.0),
        CellPolicy::constant(3.0, 0.0, SharingKernel::EqualSharing),
        1.0,
    )
    .with_horizon(5.0)
    .with_time_step(0.1);
    let config = PopulationConfig::at_times(vec![1.0, 5.0]).with_max_cells(50);
    let out = runs(&spec, &config, 10, 28);
    assert!(out.iter().all(|r| r.truncated && r.snapshots.len() < 2));
}

#[test]
fn snapshot_csv_layout() {
    let spec = ModelSpec::new(
        ParasiteLaw::geometric(1.0, 0.0),
        CellPolicy::constant(1.0, 0.0, SharingKernel::Uniform),
        1.0,
    )
    .with_horizon(1.0);
    let config = PopulationConfig::at_times(vec![0.5, 1.0]).with_thresholds(vec![0.5]);
    let out = runs(&spec, &config, 2, 29);
    let mut buf = Vec::new();
    let rows: Vec<(usize, &[_])> = out.iter().enumerate().map(|(i, r)| (i, r.snapshots.as_slice())).collect();
    write_snapshots_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(SNAPSHOT_CSV_HEADER));
    assert_eq!(lines.count(), 4);
}

#[test]
fn rejects_observation_times_beyond_horizon() {
    let spec = ModelSpec::new(
        ParasiteLaw::geometric(1.0, 0.0),
        CellPolicy::constant(1.0, 0.0, SharingKernel::Uniform),
        1.0,
    )
    .with_horizon(1.0);
    let mut rng = SeedPlan::new(1).rng(0);
    assert!(run_population(&spec, &PopulationConfig::at_times(vec![2.0]), &mut rng).is_err());
}

fn kernel_strategy() -> impl Strategy<Value = SharingKernel> {
    prop_oneof![
        Just(SharingKernel::Uniform),
        Just(SharingKernel::EqualSharing),
        (0.01..0.49f64).prop_map(|t| SharingKernel::two_point(t).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn division_conserves_mass_and_labels_form_an_antichain(
        kernel in kernel_strategy(),
        r in 0.5..3.0f64,
        x0 in 0.1..10.0f64,
        seed in 0u64..10_000,
    ) {
        let spec = ModelSpec::new(ParasiteLaw::geometric(0.0, 0.0), CellPolicy::constant(r, 0.0, kernel), x0)
            .with_horizon(2.0);
        let mut state = PopulationState::new(&spec, false, 100_000).unwrap();
        let mut rng = SeedPlan::new(seed).rng(0);
        let mut last = 1;
        for _ in 0..20 {
            state.step(0.1, &mut rng).unwrap();
            let total: f64 = state.cells.iter().map(|c| c.trait_value).sum();
            prop_assert!((total - x0).abs() <= 1e-12 * x0 * state.cells.len() as f64);
            prop_assert!(state.alive() >= last);
            last = state.alive();
        }
        let labels: HashSet<_> = state.cells.iter().map(|c| c.label.clone()).collect();
        prop_assert_eq!(labels.len(), state.cells.len());
        for a in &state.cells {
            for b in &state.cells {
                prop_assert!(!a.label.is_ancestor_of(&b.label));
            }
            if let Some(parent) = a.label.parent() {
                prop_assert!(!labels.contains(&parent));
            }
        }
    }

    #[test]
    fn counters_match_recounts(
        q in 0.0..1.0f64,
        g in 0.0..3.0f64,
        seed in 0u64..10_000,
    ) {
        let law = ParasiteLaw::geometric(g, 0.2).with_jumps(
            Profile::linear(1.0),
            JumpMeasure { mass: 1.0, sizes: SizeLaw::Exponential { mean: 0.5 } },
        );
        let spec = ModelSpec::new(law, CellPolicy::constant(1.0, q, SharingKernel::Uniform), 1.0)
            .with_horizon(2.0)
            .with_explosion_cap(20.0);
        let mut state = PopulationState::new(&spec, false, 100_000).unwrap();
        let mut rng = SeedPlan::new(seed).rng(0);
        for _ in 0..10 {
            state.step(0.2, &mut rng).unwrap();
            let snap = state.snapshot(&[0.5, 2.0], &[1.0]);
            let alive = state.cells.iter().filter(|c| !c.marked).count();
            let counted = state.cells.iter().filter(|c| c.status == CellStatus::Alive).count();
            prop_assert_eq!(snap.alive, alive);
            prop_assert_eq!(snap.counted, counted);
            prop_assert!(snap.counted <= snap.alive);
            prop_assert_eq!(snap.exploded, alive - counted);
            prop_assert!(snap.above.iter().all(|a| *a <= snap.counted));
            prop_assert!(snap.above[1] <= snap.above[0]);
            prop_assert!(snap.positive <= snap.counted);
            prop_assert!(state.dead.iter().all(|c| c.status == CellStatus::Dead));
        }
    }
}
