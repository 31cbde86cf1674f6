//! Pairwise-logistic training of a scalar MLP scorer and its proxy metrics.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tielab::rng::{stream_rng, substream};

use crate::latent::{EvalPairs, EvalSuite};
use crate::mlp::{AdamW, Activation, Dense, Mlp};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerSpec {
    /// Number of affine layers.
    pub depth: usize,
    pub hidden_width: usize,
    pub model_beta: f64,
}

impl Default for ScorerSpec {
    fn default() -> Self {
        Self {
            depth: 3,
            hidden_width: 128,
            model_beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub stream: u64,
}

impl Default for NnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            lr: 2e-3,
            weight_decay: 1e-4,
            batch_size: 1024,
            seed: 0,
            stream: 0,
        }
    }
}

/// Fresh scorer `input → hidden → … → 1` with rectifiers between layers.
pub fn init_scorer<F: Real>(spec: &ScorerSpec, input_dim: usize, seed: u64, stream: u64) -> Mlp<F> {
    let depth = spec.depth.max(1);
    let mut sizes = vec![input_dim];
    sizes.extend(std::iter::repeat_n(spec.hidden_width, depth - 1));
    sizes.push(1);
    let mut acts = vec![Activation::Relu; depth - 1];
    acts.push(Activation::Identity);
    Mlp::uniform(&sizes, &acts, &mut stream_rng(seed, substream(stream, 5)))
}

fn softplus<F: Real>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

fn logistic<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Mean of `−log σ(β (r(w) − r(l)))` over the rows and its parameter
/// gradient.
pub fn pairwise_loss_grad<F: Real>(
    model: &Mlp<F>,
    winners: ArrayView2<F>,
    losers: ArrayView2<F>,
    beta: f64,
) -> (f64, Vec<Dense<F>>) {
    let m = winners.nrows();
    let x = concatenate(Axis(0), &[winners, losers]).expect("matching widths");
    let trace = model.forward_trace(x.view());
    let r = trace.last().unwrap();
    let b = F::from_f64(beta).unwrap();
    let inv = F::one() / F::from_usize(m).unwrap();
    let mut g = Array2::zeros((2 * m, 1));
    let mut loss = 0.0;
    for i in 0..m {
        let d = b * (r[(i, 0)] - r[(m + i, 0)]);
        loss += softplus(-d).to_f64().unwrap();
        let s = logistic(-d) * b * inv;
        g[(i, 0)] = -s;
        g[(m + i, 0)] = s;
    }
    (loss / m as f64, model.backward(&trace, g))
}

/// Loss only, in chunks.
pub fn pairwise_loss<F: Real>(model: &Mlp<F>, winners: ArrayView2<F>, losers: ArrayView2<F>, beta: f64) -> f64 {
    let rw = scores(model, winners);
    let rl = scores(model, losers);
    let total: f64 = rw
        .iter()
        .zip(&rl)
        .map(|(a, b)| softplus(F::from_f64(beta).unwrap() * (*b - *a)).to_f64().unwrap())
        .sum();
    total / rw.len() as f64
}

/// Scalar scores for every row, evaluated in chunks.
pub fn scores<F: Real>(model: &Mlp<F>, x: ArrayView2<F>) -> Vec<F> {
    let mut out = Vec::with_capacity(x.nrows());
    for chunk in x.axis_chunks_iter(Axis(0), 4096) {
        out.extend(model.forward(chunk).column(0).iter().copied());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedScorer<F> {
    pub model: Mlp<F>,
    /// Mean loss over the last epoch (loss at the start when no epochs run).
    pub final_loss: f64,
}

pub fn train_pairwise_scorer<F: Real>(
    winners: &Array2<F>,
    losers: &Array2<F>,
    spec: &ScorerSpec,
    cfg: &NnTrainConfig,
) -> TrainedScorer<F> {
    let init = init_scorer(spec, winners.ncols(), cfg.seed, cfg.stream);
    train_from(init, winners, losers, spec, cfg)
}

/// Minibatch AdamW from a given initialization with a fresh shuffle per
/// epoch.
pub fn train_from<F: Real>(
    mut model: Mlp<F>,
    winners: &Array2<F>,
    losers: &Array2<F>,
    spec: &ScorerSpec,
    cfg: &NnTrainConfig,
) -> TrainedScorer<F> {
    assert!(winners.nrows() > 0 && winners.dim() == losers.dim(), "nonempty, matching batches");
    let n = winners.nrows();
    let mut opt = AdamW::new(&model, cfg.lr, cfg.weight_decay);
    let mut rng = stream_rng(cfg.seed, substream(cfg.stream, 7));
    let mut order: Vec<usize> = (0..n).collect();
    let bs = cfg.batch_size.max(1);
    let mut final_loss = if cfg.epochs == 0 {
        pairwise_loss(&model, winners.view(), losers.view(), spec.model_beta)
    } else {
        f64::NAN
    };
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(bs) {
            let w = winners.select(Axis(0), idx);
            let l = losers.select(Axis(0), idx);
            let (loss, grads) = pairwise_loss_grad(&model, w.view(), l.view(), spec.model_beta);
            opt.step(&mut model, &grads);
            epoch_loss += loss * idx.len() as f64;
        }
        final_loss = epoch_loss / n as f64;
    }
    TrainedScorer { model, final_loss }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyMetrics {
    pub spurious_gap: f64,
    pub adversarial_accuracy: f64,
    pub counterfactual_margin: f64,
    pub in_dist_accuracy: f64,
    pub aligned_accuracy: f64,
    pub misaligned_accuracy: f64,
}

/// Fraction of pairs ordered like the true quality; exact score ties are
/// settled by a fair coin drawn from `seed`.
pub fn pair_accuracy<F: Real>(model: &Mlp<F>, pairs: &EvalPairs<F>, seed: u64, stream: u64) -> f64 {
    assert!(!pairs.is_empty(), "eval batch must be nonempty");
    let ra = scores(model, pairs.a.view());
    let rb = scores(model, pairs.b.view());
    let mut rng = stream_rng(seed, stream);
    let correct = ra
        .iter()
        .zip(&rb)
        .zip(&pairs.a_better)
        .filter(|((a, b), better)| {
            let pick_a = if a == b { rng.random::<bool>() } else { a > b };
            pick_a == **better
        })
        .count();
    correct as f64 / pairs.len() as f64
}

pub fn counterfactual_margin<F: Real>(model: &Mlp<F>, items: &Array2<F>, flipped: &Array2<F>) -> f64 {
    let a = scores(model, items.view());
    let b = scores(model, flipped.view());
    a.iter().zip(&b).map(|(x, y)| (*x - *y).abs().to_f64().unwrap()).sum::<f64>() / a.len() as f64
}

pub fn proxy_metrics<F: Real>(model: &Mlp<F>, suite: &EvalSuite<F>, seed: u64) -> ProxyMetrics {
    let aligned = pair_accuracy(model, &suite.aligned, seed, substream(0xacc, 0));
    let misaligned = pair_accuracy(model, &suite.misaligned, seed, substream(0xacc, 1));
    ProxyMetrics {
        spurious_gap: aligned - misaligned,
        adversarial_accuracy: pair_accuracy(model, &suite.adversarial, seed, substream(0xacc, 2)),
        counterfactual_margin: counterfactual_margin(model, &suite.counterfactual.0, &suite.counterfactual.1),
        in_dist_accuracy: pair_accuracy(model, &suite.in_dist, seed, substream(0xacc, 3)),
        aligned_accuracy: aligned,
        misaligned_accuracy: misaligned,
    }
}
