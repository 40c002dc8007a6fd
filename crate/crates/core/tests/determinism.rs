use guesswork_core::experiments::{
    concentration_report, most_likely_panel, run_experiment, sweep_rate, Engine, ExperimentConfig,
    Mode,
};
use guesswork_core::ScenarioParams;

fn base(mode: Mode) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(
        mode,
        ScenarioParams {
            s: 0.9,
            p: 0.3,
            m: 8,
            n: 24,
            theta: None,
        },
    );
    c.trials = 400;
    c
}

#[test]
fn estimates_are_bit_identical_across_worker_counts() {
    for mode in [
        Mode::AllocatedOnline,
        Mode::AllocatedOffline,
        Mode::UnallocatedOnline,
        Mode::UnallocatedOffline,
        Mode::NoAllocationKeyed,
    ] {
        for engine in [Engine::Exhaustive, Engine::Sampled] {
            let mut c = base(mode);
            c.engine = engine;
            let runs: Vec<_> = [1, 2, 5]
                .into_iter()
                .map(|w| {
                    c.workers = Some(w);
                    run_experiment(&c).unwrap()
                })
                .collect();
            for r in &runs[1..] {
                assert_eq!(r.estimate.mean.to_bits(), runs[0].estimate.mean.to_bits());
                assert_eq!(r.estimate.half_width_95.to_bits(), runs[0].estimate.half_width_95.to_bits());
                assert_eq!(r.records, runs[0].records);
            }
        }
    }
}

#[test]
fn sweeps_and_panels_replay_exactly() {
    let mut c = base(Mode::AllocatedOnline);
    c.m_sweep = Some(vec![6, 7, 8]);
    c.workers = Some(1);
    let a = serde_json::to_string(&sweep_rate(&c).unwrap()).unwrap();
    c.workers = Some(4);
    let b = serde_json::to_string(&sweep_rate(&c).unwrap()).unwrap();
    assert_eq!(a, b);

    let mut c = base(Mode::UnallocatedOffline);
    c.users = Some(3);
    let a = serde_json::to_string(&most_likely_panel(&c).unwrap()).unwrap();
    c.workers = Some(3);
    let b = serde_json::to_string(&most_likely_panel(&c).unwrap()).unwrap();
    assert_eq!(a, b);

    let c = base(Mode::AllocatedOnline);
    let a = concentration_report(&c, 1.0, &[0.5, 1.0]).unwrap();
    let b = concentration_report(&c, 1.0, &[0.5, 1.0]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn different_seeds_differ() {
    let mut c = base(Mode::AllocatedOnline);
    let a = run_experiment(&c).unwrap();
    c.seed += 1;
    let b = run_experiment(&c).unwrap();
    assert_ne!(a.estimate.mean, b.estimate.mean);
}
