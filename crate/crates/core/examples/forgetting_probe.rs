//! Quick probe of the forgetting dynamics on the heterogeneous synthetic
//! task: prints per-seed TL/RL/CDS/LL scores so the task parameters can be
//! sanity-checked. Not part of the test suite.

use std::time::Instant;

use ppdl_core::data::{gen_synthetic, InstitutionSpec, SplitRatios, SyntheticSpec};
use ppdl_core::metrics::{auroc, PredictionSet};
use ppdl_core::train::{
    predict_on_institution, train_cds, train_ll, train_rl, train_tl, HyperParams, InstitutionData,
    VisitOrder,
};

fn main() {
    let angles = [0.0, 67.5, 135.0];
    let rows = [3200, 3000, 2800];
    let spec = SyntheticSpec {
        n_binary: 2,
        n_continuous: 6,
        institutions: angles
            .iter()
            .zip(rows)
            .map(|(&angle_deg, rows)| InstitutionSpec {
                name: None,
                rows,
                angle_deg,
            })
            .collect(),
        case_ratio: 0.08,
        class_separation: 2.5,
        noise_sd: 1.0,
        binary_p_control: 0.3,
        binary_p_case: 0.5,
    };
    let datasets = gen_synthetic(&spec, 12345).unwrap();
    let institutions: Vec<InstitutionData> = datasets
        .iter()
        .map(|ds| InstitutionData::from_split(ds, SplitRatios::default(), 777).unwrap())
        .collect();

    let mut rl_minus_tl = Vec::new();
    let mut tl_drop = Vec::new();
    for seed in 0..5u64 {
        let t0 = Instant::now();
        let hyper = HyperParams {
            seed,
            ..HyperParams::default()
        };
        let tl = train_tl(&institutions, &hyper, VisitOrder::Desc).unwrap();
        let t_tl = t0.elapsed().as_secs_f64();
        let (rl, _) = train_rl(&institutions, &hyper, VisitOrder::Desc).unwrap();
        let t_rl = t0.elapsed().as_secs_f64() - t_tl;
        let cds = train_cds(&institutions, &hyper, false).unwrap();
        let ll = train_ll(&institutions, &hyper).unwrap();

        let score = |model: &ppdl_core::nn::Mlp,
                     stats: &ppdl_core::data::ColumnStats,
                     inst: &InstitutionData| {
            let p = predict_on_institution(model, stats, &inst.test).unwrap();
            auroc(&p).unwrap()
        };
        let global = |model: &ppdl_core::nn::Mlp, stats: &ppdl_core::data::ColumnStats| {
            let parts: Vec<PredictionSet> = institutions
                .iter()
                .map(|i| predict_on_institution(model, stats, &i.test).unwrap())
                .collect();
            let refs: Vec<&PredictionSet> = parts.iter().collect();
            auroc(&PredictionSet::concat(&refs, "global").unwrap()).unwrap()
        };

        let tl_final = tl.visits.last().unwrap();
        let rl_final = rl.visits.last().unwrap();
        let tl_inst1 = score(&tl_final.model, &tl_final.stats, &institutions[0]);
        let tl_own = score(&tl_final.model, &tl_final.stats, &institutions[2]);
        let rl_inst1 = score(&rl_final.model, &rl_final.stats, &institutions[0]);
        let tl_global = global(&tl_final.model, &tl_final.stats);
        let rl_global = global(&rl_final.model, &rl_final.stats);
        let cds_global = global(&cds.visits[0].model, &cds.visits[0].stats);
        let ll_globals: Vec<f64> = ll
            .visits
            .iter()
            .map(|v| global(&v.model, &v.stats))
            .collect();
        let ll_mean = ll_globals.iter().sum::<f64>() / ll_globals.len() as f64;

        println!(
            "seed {seed}: TL inst1 {tl_inst1:.3} own {tl_own:.3} | RL inst1 {rl_inst1:.3} | \
             globals TL {tl_global:.3} RL {rl_global:.3} CDS {cds_global:.3} LL {ll_mean:.3} | \
             times tl {t_tl:.1}s rl {t_rl:.1}s"
        );
        rl_minus_tl.push(rl_inst1 - tl_inst1);
        tl_drop.push(tl_own - tl_inst1);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "seed-mean: TL drop {:.3} (need >= 0.10), RL - TL on inst1 {:.3} (need >= 0.05)",
        mean(&tl_drop),
        mean(&rl_minus_tl)
    );
}
