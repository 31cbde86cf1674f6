//! Nonlinear preference regime: latent-quality items seen through a frozen
//! random network, a small MLP scorer trained on pairwise comparisons, and
//! accuracy-based proxies for spurious reliance.

pub mod latent;
pub mod mlp;
pub mod scorer;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};

/// Floating-point element type of networks and features.
pub trait Real: Float + FromPrimitive + LinalgScalar + ScalarOperand + std::fmt::Debug + Send + Sync {}

impl Real for f32 {}
impl Real for f64 {}

pub use latent::{
    build_eval_suite, generate_nonlinear_pairs, training_set, EvalSuite, LatentSpec, Mixer, MixerSpec, Mode,
};
pub use mlp::{Activation, AdamW, Mlp};
pub use scorer::{
    init_scorer, pairwise_loss_grad, proxy_metrics, train_pairwise_scorer, NnTrainConfig, ProxyMetrics, ScorerSpec,
    TrainedScorer,
};

/// Train one scorer on `n` pairs at strict fraction `alpha` and evaluate it.
pub fn run_cell(
    spec: &LatentSpec,
    mixer: &Mixer<f32>,
    scorer: &ScorerSpec,
    cfg: &NnTrainConfig,
    alpha: f64,
    n: usize,
    suite: &EvalSuite<f32>,
) -> (ProxyMetrics, f64) {
    let data = training_set(spec, mixer, alpha, n, cfg.seed, cfg.stream);
    let trained = train_pairwise_scorer(&data.winners, &data.losers, scorer, cfg);
    (proxy_metrics(&trained.model, suite, cfg.seed), trained.final_loss)
}
