//! Diagnose extraction convergence on the toy trained model: where do the
//! non-converged samples get stuck?

use ppdl_core::data::{gen_synthetic, InstitutionSpec, SplitRatios, SyntheticSpec};
use ppdl_core::review::{
    knowledge_extraction, measure_class_logits, ExtractionSchedule, ReviewConfig, ReviewState,
};
use ppdl_core::train::{
    initial_model, prepare_ll_visits, train_single, HyperParams, InstitutionData,
};

fn main() {
    let spec = SyntheticSpec {
        n_binary: 2,
        n_continuous: 2,
        institutions: vec![InstitutionSpec {
            name: None,
            rows: 2000,
            angle_deg: 30.0,
        }],
        case_ratio: 0.3,
        class_separation: 2.5,
        noise_sd: 1.0,
        binary_p_control: 0.3,
        binary_p_case: 0.6,
    };
    let ds = gen_synthetic(&spec, 555).unwrap().remove(0);
    let inst = InstitutionData::from_split(&ds, SplitRatios::default(), 556).unwrap();
    let visits = prepare_ll_visits(std::slice::from_ref(&inst)).unwrap();
    let hyper = HyperParams {
        max_epochs: 30,
        seed: 5,
        ..HyperParams::default()
    };
    let model = initial_model(4, &hyper).unwrap();
    let trained = train_single(model, &visits[0].train, &visits[0].val, &hyper, 1)
        .unwrap()
        .model;
    let targets = measure_class_logits(&trained, &visits[0].train, None).unwrap();
    println!("targets: {targets:?}");

    let state = ReviewState::restore(
        ReviewConfig {
            temperature: 5.0,
            n_generated: 512,
            fv_learning_rate: 1e-2,
            schedule: ExtractionSchedule::PerEpoch,
        },
        Some(trained.clone()),
        Some(targets),
        visits[0].train.n() as u64,
    )
    .unwrap();
    for max_steps in [500, 2000] {
        let batch =
            knowledge_extraction(&state, visits[0].train.schema(), 557, max_steps, 0.05).unwrap();
        let conv = batch.converged_fraction();
        let mut fail_errs: Vec<(usize, u8, f64)> = batch
            .diagnostics
            .iter()
            .enumerate()
            .filter(|(_, d)| !d.converged)
            .map(|(i, d)| (i, batch.target_class[i], d.final_error))
            .collect();
        fail_errs.sort_by(|a, b| b.2.total_cmp(&a.2));
        println!(
            "max_steps {max_steps}: converged {:.1}%, failures {} (worst: {:?})",
            conv * 100.0,
            fail_errs.len(),
            &fail_errs[..fail_errs.len().min(8)]
        );
        let steps: Vec<usize> = batch.diagnostics.iter().map(|d| d.steps).collect();
        let mean_steps = steps.iter().sum::<usize>() as f64 / steps.len() as f64;
        println!("  mean steps {mean_steps:.0}");
    }
}
