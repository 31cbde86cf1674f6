//! Named experiments. Each module owns a parameter struct with defaults and
//! a body that fills a [`ResultTable`](crate::ResultTable).

pub mod deployment;
pub mod hotel;
pub mod mechanism;
pub mod nn;
pub mod rlhf;
pub mod sgd;
pub mod ties;

use serde_json::Value;
use tielab::datagen::PreferenceBatch;
use tielab::trainer::{fit_ridge_mle, TrainConfig, TrainResult};

use crate::run::{defaults_of, typed, RunOutput};
use crate::{HarnessError, Result};

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub defaults: fn() -> Value,
    pub run: fn(&Value, u64) -> Result<RunOutput>,
}

macro_rules! preset {
    ($name:literal, $summary:literal, $params:ty, $body:path) => {
        Preset {
            name: $name,
            summary: $summary,
            defaults: defaults_of::<$params>,
            run: |v, s| typed::<$params>(v, s, $body),
        }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!(
        "mechanism_beta_sweep",
        "learned spurious norm against the linear and curvature-corrected closed forms across beta",
        mechanism::Params,
        mechanism::run
    ),
    preset!(
        "sgd_ablation",
        "minibatch SGD under three data laws against the closed form",
        sgd::Params,
        sgd::run
    ),
    preset!(
        "deployment_subopt",
        "deployment suboptimality, its decomposition and the bound across n",
        deployment::Params,
        deployment::run
    ),
    preset!(
        "tie_reduction",
        "spurious norm ratio under exact ties against the isotropic reduction factor",
        ties::ReductionParams,
        ties::run_reduction
    ),
    preset!(
        "decontamination",
        "distance of the causal block to the pure-causal solution across tie mass",
        ties::DecontaminationParams,
        ties::run_decontamination
    ),
    preset!(
        "near_tie",
        "spurious and causal ratios under near ties",
        ties::NearTieParams,
        ties::run_near_tie
    ),
    preset!(
        "nn_alpha_sweep",
        "MLP scorer proxy metrics across the strict fraction",
        nn::AlphaSweepParams,
        nn::run_alpha_sweep
    ),
    preset!(
        "nn_n_sweep",
        "MLP scorer proxy metrics across training size",
        nn::NSweepParams,
        nn::run_n_sweep
    ),
    preset!(
        "rlhf_greedy",
        "five-item reward learning with greedy deployment, strict versus tie training",
        rlhf::Params,
        rlhf::run
    ),
    preset!(
        "hotel_generate",
        "hotel preference pairs per correlation mode with signature checks",
        hotel::Params,
        hotel::run
    ),
];

pub fn find(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| HarnessError::UnknownPreset(name.to_string()))
}

/// Full-batch fit with ridge `lambda` inside the ball of radius `radius`.
pub(crate) fn fit(batch: &PreferenceBatch, beta: f64, lambda: f64, radius: f64) -> tielab::Result<TrainResult> {
    let mut cfg = TrainConfig::new(beta, batch.dc, batch.ds);
    cfg.ridge_lambda = lambda;
    cfg.ball_radius = radius;
    fit_ridge_mle(batch, &cfg)
}

/// Rows of `a` followed by rows of `b`.
pub(crate) fn concat(a: &PreferenceBatch, b: &PreferenceBatch) -> PreferenceBatch {
    let mut out = a.clone();
    for i in 0..b.len() {
        out.push(b.row(i), b.provenance[i]);
    }
    out
}
