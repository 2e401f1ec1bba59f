//! End-to-end adaptation-step throughput at desk scale.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mdaa_core::adapter::{init_from_source, ModelConfig};
use mdaa_core::classifier::UpdateStrategy;
use mdaa_core::sim::{
    generate_task, stream, CorruptionKind, CorruptionSpec, Modality, Phase, PhaseSchedule,
    ScheduleMode, TaskConfig,
};

fn bench_adapt_step(c: &mut Criterion) {
    let task_cfg = TaskConfig::default_desk(42);
    let (task, source, _) = generate_task(&task_cfg).unwrap();

    let mut group = c.benchmark_group("infer_and_adapt");
    group.sample_size(10);
    for (phi, batch, strategy) in [
        (256usize, 64usize, UpdateStrategy::Refactor),
        (512, 64, UpdateStrategy::Refactor),
        (512, 1, UpdateStrategy::IncrementalFactor),
    ] {
        let config = ModelConfig {
            expanded_dim: phi,
            seed: 42,
            strategy,
            ..ModelConfig::default()
        };
        let schedule = PhaseSchedule::new(
            ScheduleMode::ProgressiveSingleModality,
            vec![Phase {
                corruption: Some(CorruptionSpec {
                    modality: Modality::Audio,
                    kind: CorruptionKind::AdditiveGaussian,
                    severity: 4.0,
                }),
                samples: batch,
                batch_size: batch,
            }],
        )
        .unwrap();
        let batch_data = stream(&task, &schedule).next().unwrap();
        let id = format!("phi{phi}_b{batch}_{strategy:?}");
        group.bench_function(BenchmarkId::from_parameter(id), |bench| {
            bench.iter_batched(
                || {
                    init_from_source(&config, &source.audio, &source.video, &source.labels, 10)
                        .unwrap()
                },
                |mut model| {
                    model
                        .infer_and_adapt(
                            black_box(&batch_data.features.audio),
                            &batch_data.features.video,
                        )
                        .unwrap()
                },
                criterion::BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, bench_adapt_step);
criterion_main!(benches);
