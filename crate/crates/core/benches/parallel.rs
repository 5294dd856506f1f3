//! Parallel vs sequential throughput on the two data-parallel hot spots:
//! per-sample knowledge extraction and the (algorithm x seed) run sweep.
//! Both paths produce bit-identical results; this measures the speedup only.
//!
//! `cargo bench -p ppdl-core` runs with the rayon-backed `parallel` feature;
//! the `*/sequential` entries are the single-thread baseline.

use criterion::{criterion_group, criterion_main, Criterion};

use ppdl_core::data::{gen_synthetic, InstitutionSpec, SplitRatios, SyntheticSpec};
use ppdl_core::exec;
use ppdl_core::review::{
    knowledge_extraction, knowledge_extraction_seq, ExtractionSchedule, ReviewConfig, ReviewState,
};
use ppdl_core::rng::stream_rng;
use ppdl_core::train::{
    initial_model, prepare_ll_visits, train_single, HyperParams, InstitutionData, PreparedVisit,
};

fn extraction_state(n_generated: usize) -> (ReviewState, ppdl_core::data::ColumnSchema) {
    let mut rng = stream_rng(1, &[1]);
    let snapshot = ppdl_core::nn::Mlp::new(8, &[32], 0.0, &mut rng).unwrap();
    let schema = ppdl_core::data::ColumnSchema::generated(2, 6).unwrap();
    let state = ReviewState::restore(
        ReviewConfig {
            temperature: 5.0,
            n_generated,
            fv_learning_rate: 1e-2,
            schedule: ExtractionSchedule::PerEpoch,
        },
        Some(snapshot),
        Some([-1.0, 1.0]),
        1000,
    )
    .unwrap();
    (state, schema)
}

fn bench_extraction(c: &mut Criterion) {
    let (state, schema) = extraction_state(128);
    let mut group = c.benchmark_group("knowledge_extraction_128");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| knowledge_extraction(&state, &schema, 7, 200, 0.05).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| knowledge_extraction_seq(&state, &schema, 7, 200, 0.05).unwrap())
    });
    group.finish();
}

fn sweep_visits() -> Vec<PreparedVisit> {
    let spec = SyntheticSpec {
        n_binary: 1,
        n_continuous: 3,
        institutions: vec![InstitutionSpec {
            name: None,
            rows: 600,
            angle_deg: 0.0,
        }],
        case_ratio: 0.3,
        class_separation: 2.0,
        noise_sd: 1.0,
        binary_p_control: 0.3,
        binary_p_case: 0.5,
    };
    let ds = gen_synthetic(&spec, 3).unwrap().remove(0);
    let inst = InstitutionData::from_split(&ds, SplitRatios::default(), 4).unwrap();
    prepare_ll_visits(std::slice::from_ref(&inst)).unwrap()
}

fn bench_seed_sweep(c: &mut Criterion) {
    let visits = sweep_visits();
    let visit = &visits[0];
    let run_seed = |seed: u64| {
        let hyper = HyperParams {
            hidden_layers: vec![16],
            max_epochs: 4,
            batch_size: 32,
            eval_interval_updates: 10,
            seed,
            ..HyperParams::default()
        };
        let model = initial_model(4, &hyper).unwrap();
        train_single(model, &visit.train, &visit.val, &hyper, seed)
            .unwrap()
            .trail
            .len()
    };
    let mut group = c.benchmark_group("seed_sweep_4_runs");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| exec::map_indexed(4, |i| run_seed(i as u64)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| exec::map_indexed_seq(4, |i| run_seed(i as u64)))
    });
    group.finish();
}

criterion_group!(benches, bench_extraction, bench_seed_sweep);
criterion_main!(benches);
