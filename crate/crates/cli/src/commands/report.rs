//! `report`: plot-ready data derived from the flat metric table.
//!
//! Emits global-AUROC-by-visit trajectory series per (algorithm, order) and
//! one local-MCC grid per (algorithm, order) with models as rows and
//! institutions as columns. Data only; no rendering.

use std::fs;

use ppdl_core::data::StatsExchangeFile;
use ppdl_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::layout::Layout;

use super::evaluate::{load_flat_table, mean_and_se, summarize};

pub const TRAJECTORY_HEADER: &str =
    "algorithm,order,visit,visit_institution,global_auroc_mean,global_auroc_se";

pub fn cmd_report(config: &ExperimentConfig, layout: &Layout) -> Result<()> {
    config.validate()?;
    let rows = load_flat_table(layout)?;
    let stats = StatsExchangeFile::load(&layout.stats_file())?;
    let institution_names: Vec<String> =
        stats.institutions.iter().map(|(n, _)| n.clone()).collect();
    fs::create_dir_all(layout.report_dir())?;

    let groups = summarize(&rows);

    // Trajectories: the global series per (algorithm, order), by visit.
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for g in &groups {
        if g.eval_institution != "global" {
            continue;
        }
        let (mean, se) = mean_and_se(&g.aurocs);
        out.push_str(&format!(
            "{},{},{},{},{mean},{se}\n",
            g.algorithm, g.order, g.visit, g.visit_institution
        ));
    }
    fs::write(layout.trajectories_file(), out)?;

    // Local grids: per (algorithm, order), rows = model visits, columns =
    // institutions in "local 1..n" order.
    let mut series: Vec<(String, String)> = Vec::new();
    for g in &groups {
        let key = (g.algorithm.clone(), g.order.clone());
        if !series.contains(&key) {
            series.push(key);
        }
    }
    for (algorithm, order) in series {
        let label = if order == "-" {
            algorithm.clone()
        } else {
            format!("{algorithm}_{order}")
        };
        let mut grid = String::from("model_visit");
        for name in &institution_names {
            grid.push(',');
            grid.push_str(name);
        }
        grid.push('\n');
        let mut visits: Vec<(usize, String)> = groups
            .iter()
            .filter(|g| g.algorithm == algorithm && g.order == order)
            .map(|g| (g.visit, g.visit_institution.clone()))
            .collect();
        visits.sort();
        visits.dedup();
        for (visit, visit_inst) in visits {
            grid.push_str(&format!("{visit}:{visit_inst}"));
            for name in &institution_names {
                let cell = groups
                    .iter()
                    .find(|g| {
                        g.algorithm == algorithm
                            && g.order == order
                            && g.visit == visit
                            && &g.eval_institution == name
                    })
                    .ok_or_else(|| {
                        Error::Data(format!(
                            "missing {algorithm}/{order} visit {visit} score on {name}"
                        ))
                    })?;
                let (mcc_mean, _) = mean_and_se(&cell.mccs);
                grid.push(',');
                grid.push_str(&format!("{mcc_mean}"));
            }
            grid.push('\n');
        }
        fs::write(layout.grid_file(&label), grid)?;
    }
    Ok(())
}
