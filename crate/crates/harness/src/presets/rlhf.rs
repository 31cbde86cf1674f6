//! Five-item reward learning with greedy deployment: strict comparisons
//! only against a mixture with spurious-only ties.

use serde::{Deserialize, Serialize};
use tielab::deployment::{greedy_policy_eval, GreedyInstance};
use tielab::moments::weighted_norm;
use tielab::trainer::{fit_weighted, TrainConfig};

use crate::run::{cell_stream, run_cells, RunOutput};
use crate::svg::PlotSpec;
use crate::table::{Cell, ResultTable};
use crate::{AtCell, HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub strict_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub sigma: f64,
    pub ns: Vec<usize>,
    pub arms: Vec<Arm>,
    pub replicates: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            ns: vec![1000, 3000, 10_000, 30_000, 100_000],
            arms: vec![
                Arm {
                    name: "strict".into(),
                    strict_fraction: 1.0,
                },
                Arm {
                    name: "tie".into(),
                    strict_fraction: 0.75,
                },
            ],
            replicates: 30,
        }
    }
}

pub const COLUMNS: [&str; 11] = [
    "n",
    "arm",
    "strict_fraction",
    "seed",
    "theta_s_abs",
    "theta_2",
    "est_error",
    "subopt_adv",
    "subopt_sup",
    "choice_adv",
    "choice_sup",
];

pub fn run(p: &Params, seed: u64) -> Result<RunOutput> {
    if let Some(a) = p.arms.iter().find(|a| !(a.strict_fraction > 0.0 && a.strict_fraction <= 1.0)) {
        return Err(HarnessError::Config(format!("arm {} has strict fraction {}", a.name, a.strict_fraction)));
    }
    let inst = GreedyInstance::five_item(p.sigma);
    let (adv, sup) = (inst.shifted(-1.0), inst.shifted(0.0));
    let grid: Vec<(usize, usize)> = (0..p.arms.len()).flat_map(|a| (0..p.ns.len()).map(move |i| (a, i))).collect();
    let cells: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..p.replicates).map(move |r| (g, r))).collect();
    let mut table = ResultTable::new(&COLUMNS);
    run_cells(&mut table, &cells, |&(g, r)| {
        let (arm, n) = (&p.arms[grid[g].0], p.ns[grid[g].1]);
        let here = || format!("arm={} n={n} seed={r}", arm.name);
        let batch = inst.sample(n, arm.strict_fraction, seed, cell_stream(g, r)).at(here)?;
        let (rows, w) = batch.compress();
        let cfg = TrainConfig::new(1.0, batch.dc, batch.ds);
        let theta = fit_weighted(&rows, &w, batch.dc, batch.ds, &cfg).at(here)?.theta_tilde_hat.to_vec();
        let sigma_hat = batch.moments().at(here)?.second_moment.assemble();
        let diff: Vec<f64> = theta.iter().zip(&inst.theta_star).map(|(a, b)| a - b).collect();
        let err = weighted_norm(&diff, &sigma_hat).at(here)?;
        let (choice_adv, regret_adv) = greedy_policy_eval(&theta, &adv, &inst.theta_star).at(here)?;
        let (choice_sup, regret_sup) = greedy_policy_eval(&theta, &sup, &inst.theta_star).at(here)?;
        Ok(vec![vec![
            n.into(),
            Cell::from(arm.name.as_str()),
            arm.strict_fraction.into(),
            r.into(),
            theta[theta.len() - 1].abs().into(),
            theta[1].into(),
            err.into(),
            regret_adv.into(),
            regret_sup.into(),
            choice_adv.into(),
            choice_sup.into(),
        ]])
    })?;
    Ok(RunOutput::new(
        table,
        Some(PlotSpec {
            title: "learned spurious weight vs n".into(),
            x: "n".into(),
            ys: vec!["theta_s_abs".into(), "subopt_adv".into()],
            group: Some("arm".into()),
            log_x: true,
        }),
    ))
}
