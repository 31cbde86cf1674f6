//! Minibatch SGD under three data laws against the closed form.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use tielab::datagen::{sample_strict_batch, FeatureLawSpec, Regime, StrictSampler, TeacherSpec};
use tielab::equilibrium::{curvature_correction, linearized_equilibrium};
use tielab::moments::{BlockMatrix, BlockMoments};
use tielab::rng::substream;
use tielab::trainer::{sgd_trajectory, TrainConfig};
use tielab::BlockVector;

use crate::run::{cell_stream, run_cells, RunOutput};
use crate::svg::PlotSpec;
use crate::table::{Cell, ResultTable};
use crate::{AtCell, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub d: usize,
    pub beta: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub replicates: usize,
    pub record_every: usize,
    pub margin_subsample: usize,
    /// Sample size behind the plug-in moments of the labeled laws.
    pub reference_n: usize,
    pub regimes: Vec<String>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            d: 5,
            beta: 0.5,
            learning_rate: 5e-3,
            iterations: 15_000,
            batch_size: 64,
            replicates: 30,
            record_every: 100,
            margin_subsample: 1000,
            reference_n: 200_000,
            regimes: vec!["no_bt".into(), "bt_causal".into(), "bt_full".into()],
        }
    }
}

pub const COLUMNS: [&str; 10] = [
    "regime",
    "regime_index",
    "seed",
    "final_spurious_norm",
    "final_causal_norm",
    "linear_spurious_norm",
    "corrected_spurious_norm",
    "zeta",
    "max_margin",
    "final_margin",
];

fn law_of(name: &str, d: usize) -> Result<(FeatureLawSpec, TeacherSpec)> {
    let eye = DMatrix::<f64>::identity(d, d);
    let teacher = |c: f64, s: f64| TeacherSpec {
        theta_dagger: BlockVector::new(vec![c; d], vec![s; d]).expect("equal blocks"),
        beta_teacher: 1.0,
    };
    Ok(match name {
        "no_bt" => {
            let mut law = FeatureLawSpec::isotropic(Regime::NoBt, d, d, 1.0, 0.0);
            law.mean = BlockVector::new(vec![0.02; d], vec![0.02; d]).expect("equal blocks");
            law.covariance = BlockMatrix::new(eye.clone(), &eye * 0.3, eye.clone()).at(|| name.into())?;
            (law, teacher(0.0, 0.0))
        }
        "bt_causal" => (FeatureLawSpec::isotropic(Regime::BtCausal, d, d, 1.0, 0.5), teacher(1.0, 0.0)),
        "bt_full" => {
            let mut law = FeatureLawSpec::isotropic(Regime::BtFull, d, d, 1.0, 0.0);
            law.covariance.cs = &eye * 0.5;
            (law, teacher(0.5, 0.3))
        }
        other => return Err(crate::HarnessError::Config(format!("unknown regime {other:?}"))),
    })
}

pub fn run(p: &Params, seed: u64) -> Result<RunOutput> {
    // reference moments and the curvature sample, one per regime
    let refs: Vec<(FeatureLawSpec, TeacherSpec, BlockMoments, tielab::datagen::PreferenceBatch)> = p
        .regimes
        .iter()
        .enumerate()
        .map(|(g, name)| {
            let (law, teacher) = law_of(name, p.d)?;
            let here = || format!("regime={name} reference");
            let sample = sample_strict_batch(&law, &teacher, p.reference_n, seed, substream(cell_stream(g, 0), 0x7265_66)).at(here)?;
            let m = match law.population_moments() {
                Some(m) => m,
                None => sample.moments().at(here)?,
            };
            Ok((law, teacher, m, sample))
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..p.regimes.len()).flat_map(|g| (0..p.replicates).map(move |r| (g, r))).collect();
    let mut table = ResultTable::new(&COLUMNS);
    run_cells(&mut table, &cells, |&(g, r)| {
        let name = &p.regimes[g];
        let here = || format!("regime={name} seed={r}");
        let (law, teacher, m, sample) = &refs[g];
        let lin = linearized_equilibrium(m, p.beta).at(here)?.theta_tilde;
        let mut source = StrictSampler::new(law, teacher).at(here)?;
        let mut cfg = TrainConfig::new(p.beta, p.d, p.d);
        cfg.learning_rate = p.learning_rate;
        cfg.iterations = p.iterations;
        cfg.batch_size = p.batch_size;
        cfg.record_every = p.record_every;
        cfg.margin_subsample = p.margin_subsample;
        cfg.seed = seed;
        cfg.stream = cell_stream(g, r);
        let res = sgd_trajectory(&mut source, &cfg).at(here)?;
        let traj = res.trajectory.as_deref().unwrap_or_default();
        let max_margin = traj.iter().map(|t| t.margin_diag).fold(0.0, f64::max);
        let final_margin = traj.last().map(|t| t.margin_diag).unwrap_or(f64::NAN);
        let (curv, corrected) = curvature_correction(&lin, &res.theta_tilde_hat, sample, p.beta).at(here)?;
        Ok(vec![vec![
            Cell::from(name.as_str()),
            g.into(),
            r.into(),
            res.theta_tilde_hat.spurious_norm().into(),
            res.theta_tilde_hat.causal_norm().into(),
            lin.spurious_norm().into(),
            corrected.spurious_norm().into(),
            curv.zeta.into(),
            max_margin.into(),
            final_margin.into(),
        ]])
    })?;
    Ok(RunOutput::new(
        table,
        Some(PlotSpec {
            title: "SGD spurious norm by regime".into(),
            x: "regime_index".into(),
            ys: vec![
                "final_spurious_norm".into(),
                "linear_spurious_norm".into(),
                "corrected_spurious_norm".into(),
            ],
            group: None,
            log_x: false,
        }),
    ))
}
