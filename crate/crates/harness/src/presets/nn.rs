//! MLP scorer proxy metrics across the strict fraction and training size.

use serde::{Deserialize, Serialize};
use tielab::rng::substream;
use tielab_nn::{build_eval_suite, run_cell, LatentSpec, Mixer, MixerSpec, NnTrainConfig, ScorerSpec};

use crate::run::{cell_stream, run_cells, RunOutput};
use crate::svg::PlotSpec;
use crate::table::ResultTable;
use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Common {
    pub latent: LatentSpec,
    pub mixer: MixerSpec,
    pub scorer: ScorerSpec,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub eval_pairs: usize,
    pub eval_counterfactual: usize,
}

impl Default for Common {
    fn default() -> Self {
        let t = NnTrainConfig::default();
        Self {
            latent: LatentSpec::default(),
            mixer: MixerSpec::default(),
            scorer: ScorerSpec::default(),
            epochs: t.epochs,
            lr: t.lr,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            eval_pairs: 30_000,
            eval_counterfactual: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSweepParams {
    pub common: Common,
    pub n: usize,
    pub alphas: Vec<f64>,
    pub replicates: usize,
}

impl Default for AlphaSweepParams {
    fn default() -> Self {
        Self {
            common: Common::default(),
            n: 50_000,
            alphas: vec![1.0, 0.9, 0.85, 0.8, 0.75, 0.7, 0.6, 0.5],
            replicates: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NSweepParams {
    pub common: Common,
    pub ns: Vec<usize>,
    pub alphas: Vec<f64>,
    pub replicates: usize,
}

impl Default for NSweepParams {
    fn default() -> Self {
        Self {
            common: Common::default(),
            ns: vec![2000, 4000, 8000, 16_000, 32_000, 64_000, 128_000],
            alphas: vec![1.0, 0.75],
            replicates: 5,
        }
    }
}

pub const COLUMNS: [&str; 11] = [
    "alpha",
    "tie_fraction",
    "n",
    "seed",
    "spurious_gap",
    "adv_acc",
    "cf_margin",
    "in_dist_acc",
    "aligned_acc",
    "misaligned_acc",
    "final_loss",
];

fn sweep(c: &Common, grid: &[(f64, usize)], replicates: usize, seed: u64) -> Result<ResultTable> {
    c.latent.validate().map_err(HarnessError::Config)?;
    if let Some((a, _)) = grid.iter().find(|(a, n)| !(*a > 0.0 && *a <= 1.0) || *n == 0) {
        return Err(HarnessError::Config(format!("bad grid point alpha={a}")));
    }
    let mixer: Mixer<f32> = Mixer::new(&c.mixer, c.latent.dim());
    let suite = build_eval_suite(
        &c.latent,
        &mixer,
        c.eval_pairs,
        c.eval_counterfactual,
        seed,
        substream(cell_stream(usize::MAX, 0), 0x6576_616c),
    );
    let cells: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..replicates).map(move |r| (g, r))).collect();
    let mut table = ResultTable::new(&COLUMNS);
    run_cells(&mut table, &cells, |&(g, r)| {
        let (alpha, n) = grid[g];
        let cfg = NnTrainConfig {
            epochs: c.epochs,
            lr: c.lr,
            weight_decay: c.weight_decay,
            batch_size: c.batch_size,
            seed,
            // training data depend on the replicate only, so grid points
            // with the same seed share their strict pool
            stream: cell_stream(0, r),
        };
        let (m, loss) = run_cell(&c.latent, &mixer, &c.scorer, &cfg, alpha, n, &suite);
        Ok(vec![vec![
            alpha.into(),
            (1.0 - alpha).into(),
            n.into(),
            r.into(),
            m.spurious_gap.into(),
            m.adversarial_accuracy.into(),
            m.counterfactual_margin.into(),
            m.in_dist_accuracy.into(),
            m.aligned_accuracy.into(),
            m.misaligned_accuracy.into(),
            loss.into(),
        ]])
    })?;
    Ok(table)
}

pub fn run_alpha_sweep(p: &AlphaSweepParams, seed: u64) -> Result<RunOutput> {
    let grid: Vec<(f64, usize)> = p.alphas.iter().map(|&a| (a, p.n)).collect();
    let table = sweep(&p.common, &grid, p.replicates, seed)?;
    Ok(RunOutput::new(
        table,
        Some(PlotSpec {
            title: "scorer proxies vs tie fraction".into(),
            x: "tie_fraction".into(),
            ys: vec!["spurious_gap".into(), "adv_acc".into(), "cf_margin".into(), "in_dist_acc".into()],
            group: None,
            log_x: false,
        }),
    ))
}

pub fn run_n_sweep(p: &NSweepParams, seed: u64) -> Result<RunOutput> {
    let grid: Vec<(f64, usize)> = p.alphas.iter().flat_map(|&a| p.ns.iter().map(move |&n| (a, n))).collect();
    let table = sweep(&p.common, &grid, p.replicates, seed)?;
    Ok(RunOutput::new(
        table,
        Some(PlotSpec {
            title: "scorer proxies vs training size".into(),
            x: "n".into(),
            ys: vec!["adv_acc".into(), "spurious_gap".into()],
            group: Some("alpha".into()),
            log_x: true,
        }),
    ))
}
