use criterion::{criterion_group, criterion_main, Criterion};
use guesswork_core::experiments::{run_experiment, Engine, ExperimentConfig, Mode};
use guesswork_core::rates::password_bits_for;
use guesswork_core::ScenarioParams;

fn config(mode: Mode, engine: Engine) -> ExperimentConfig {
    let (m, s, p) = (10, 0.9, 0.3);
    let n = password_bits_for(m, s, p, 0.25).unwrap();
    let mut cfg = ExperimentConfig::new(mode, ScenarioParams { s, p, m, n, theta: None });
    cfg.trials = 1000;
    cfg.engine = engine;
    cfg.workers = Some(1);
    cfg
}

fn experiments(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_experiment");
    g.sample_size(10);
    for mode in [Mode::AllocatedOnline, Mode::UnallocatedOffline] {
        for engine in [Engine::Exhaustive, Engine::Sampled] {
            let cfg = config(mode, engine);
            g.bench_function(format!("{mode}/{}", engine.as_str()), |b| b.iter(|| run_experiment(&cfg).unwrap()));
        }
    }
    g.finish();
}

criterion_group!(benches, experiments);
criterion_main!(benches);
