//! Latent-quality data generator and the frozen nonlinear mixer.
//!
//! Each item has a scalar quality `q ~ N(0, 1)`. The causal block tracks
//! `f_c(q)`, the spurious block and the shortcut scalar track `f_s(q)` with a
//! sign that flips under the adversarial law. Observed features are the
//! latent vector pushed through a randomly drawn, never-trained network.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use tielab::datagen::sigmoid;
use tielab::rng::{stream_rng, substream, LabRng};

use crate::mlp::{Activation, Dense, Mlp};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Square,
    Sin,
}

impl Transform {
    pub fn apply(self, q: f64) -> f64 {
        match self {
            Transform::Identity => q,
            Transform::Square => q * q,
            Transform::Sin => q.sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub d_c_latent: usize,
    pub d_s_latent: usize,
    pub shortcut_dim: usize,
    pub rho: f64,
    pub alpha_spur: f64,
    /// `(σ_c, σ_s, σ_t)`.
    pub noise: (f64, f64, f64),
    pub beta_teacher: f64,
    pub f_c: Transform,
    pub f_s: Transform,
}

impl Default for LatentSpec {
    fn default() -> Self {
        Self {
            d_c_latent: 10,
            d_s_latent: 10,
            shortcut_dim: 1,
            rho: 0.9,
            alpha_spur: 6.0,
            noise: (1.0, 1.0, 0.15),
            beta_teacher: 1.0,
            f_c: Transform::Identity,
            f_s: Transform::Identity,
        }
    }
}

impl LatentSpec {
    pub fn dim(&self) -> usize {
        self.d_c_latent + self.d_s_latent + self.shortcut_dim
    }

    /// Columns holding the spurious block and the shortcut.
    pub fn spurious_range(&self) -> std::ops::Range<usize> {
        self.d_c_latent..self.dim()
    }

    pub fn validate(&self) -> Result<(), String> {
        let (a, b, c) = self.noise;
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err("noise scales must be positive".into());
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(format!("rho must lie in [-1, 1], got {}", self.rho));
        }
        if self.dim() == 0 {
            return Err("latent dimension must be positive".into());
        }
        Ok(())
    }
}

/// Which law the spurious blocks follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    P,
    QAdv,
}

impl Mode {
    pub fn sign(self) -> f64 {
        match self {
            Mode::P => 1.0,
            Mode::QAdv => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixerSpec {
    pub hidden_width: usize,
    pub seed: u64,
}

impl Default for MixerSpec {
    fn default() -> Self {
        Self {
            hidden_width: 64,
            seed: 0,
        }
    }
}

/// Frozen map from latents to observed features.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixer<F> {
    net: Mlp<F>,
}

impl<F: Real> Mixer<F> {
    /// Linear–tanh–linear–tanh with output width equal to the input width.
    pub fn new(spec: &MixerSpec, dim: usize) -> Self {
        let mut rng = stream_rng(spec.seed, substream(0, 0x6d69_78));
        Self {
            net: Mlp::uniform(
                &[dim, spec.hidden_width, dim],
                &[Activation::Tanh, Activation::Tanh],
                &mut rng,
            ),
        }
    }

    /// The identity map, for tests that need features equal to latents.
    pub fn identity(dim: usize) -> Self {
        Self {
            net: Mlp {
                layers: vec![Dense {
                    w: Array2::eye(dim),
                    b: Array1::zeros(dim),
                }],
                activations: vec![Activation::Identity],
            },
        }
    }

    pub fn apply(&self, latent: &Array2<f64>) -> Array2<F> {
        let x = latent.mapv(|v| F::from_f64(v).unwrap());
        self.net.forward(x.view())
    }

    pub fn params(&self) -> Vec<F> {
        self.net.flat_params()
    }
}

/// `n` items: qualities and latent rows `[c; s; t]`.
pub fn sample_items(spec: &LatentSpec, mode: Mode, n: usize, rng: &mut LabRng) -> (Vec<f64>, Array2<f64>) {
    let (dc, ds, dt) = (spec.d_c_latent, spec.d_s_latent, spec.shortcut_dim);
    let (sc, ss, st) = spec.noise;
    let sign = mode.sign();
    let resid = (1.0 - spec.rho * spec.rho).max(0.0).sqrt() * ss;
    let mut q = Vec::with_capacity(n);
    let mut z = Array2::zeros((n, spec.dim()));
    for mut row in z.rows_mut() {
        let qi: f64 = rng.sample(StandardNormal);
        let (fc, fs) = (spec.f_c.apply(qi), spec.f_s.apply(qi));
        for j in 0..dc {
            row[j] = fc + sc * rng.sample::<f64, _>(StandardNormal);
        }
        for j in dc..dc + ds {
            row[j] = sign * spec.rho * fs + resid * rng.sample::<f64, _>(StandardNormal);
        }
        for j in dc + ds..dc + ds + dt {
            row[j] = sign * spec.alpha_spur * fs + st * rng.sample::<f64, _>(StandardNormal);
        }
        q.push(qi);
    }
    (q, z)
}

/// Negate the spurious block and the shortcut.
pub fn flip_spurious(spec: &LatentSpec, z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    out.slice_mut(s![.., spec.spurious_range()]).mapv_inplace(|v| -v);
    out
}

/// Two-item comparisons with their latents, mixed features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch<F> {
    pub q_a: Vec<f64>,
    pub q_b: Vec<f64>,
    pub latent_a: Array2<f64>,
    pub latent_b: Array2<f64>,
    pub x_a: Array2<F>,
    pub x_b: Array2<F>,
    /// Teacher draw `P(a wins) = σ(β_t (q_a − q_b))`.
    pub a_wins: Vec<bool>,
}

/// Latents, qualities and teacher labels of `n` comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPairs {
    pub q_a: Vec<f64>,
    pub q_b: Vec<f64>,
    pub latent_a: Array2<f64>,
    pub latent_b: Array2<f64>,
    pub a_wins: Vec<bool>,
}

pub fn generate_latent_pairs(spec: &LatentSpec, mode: Mode, n: usize, seed: u64, stream: u64) -> LatentPairs {
    let mut rng = stream_rng(seed, stream);
    let (q_a, latent_a) = sample_items(spec, mode, n, &mut rng);
    let (q_b, latent_b) = sample_items(spec, mode, n, &mut rng);
    let a_wins = q_a
        .iter()
        .zip(&q_b)
        .map(|(a, b)| rng.random::<f64>() < sigmoid(spec.beta_teacher * (a - b)))
        .collect();
    LatentPairs {
        q_a,
        q_b,
        latent_a,
        latent_b,
        a_wins,
    }
}

pub fn generate_nonlinear_pairs<F: Real>(
    spec: &LatentSpec,
    mixer: &Mixer<F>,
    mode: Mode,
    n: usize,
    seed: u64,
    stream: u64,
) -> PairBatch<F> {
    let p = generate_latent_pairs(spec, mode, n, seed, stream);
    PairBatch {
        x_a: mixer.apply(&p.latent_a),
        x_b: mixer.apply(&p.latent_b),
        q_a: p.q_a,
        q_b: p.q_b,
        latent_a: p.latent_a,
        latent_b: p.latent_b,
        a_wins: p.a_wins,
    }
}

/// Oriented training rows: `round(α n)` teacher-labeled pairs followed by
/// spurious-flip ties `(c, s, t)` vs `(c, −s, −t)` with a fair-coin winner.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<F> {
    pub winners: Array2<F>,
    pub losers: Array2<F>,
    pub strict_count: usize,
}

pub fn training_set<F: Real>(
    spec: &LatentSpec,
    mixer: &Mixer<F>,
    alpha: f64,
    n: usize,
    seed: u64,
    stream: u64,
) -> TrainingSet<F> {
    let k = ((alpha * n as f64).round() as usize).min(n);
    let dim = spec.dim();
    let mut win = Array2::zeros((n, dim));
    let mut lose = Array2::zeros((n, dim));
    if k > 0 {
        let p = generate_latent_pairs(spec, Mode::P, k, seed, stream);
        for i in 0..k {
            let (w, l) = if p.a_wins[i] { (&p.latent_a, &p.latent_b) } else { (&p.latent_b, &p.latent_a) };
            win.row_mut(i).assign(&w.row(i));
            lose.row_mut(i).assign(&l.row(i));
        }
    }
    if k < n {
        let mut rng = stream_rng(seed, substream(stream, 1));
        let (_, z) = sample_items(spec, Mode::P, n - k, &mut rng);
        let f = flip_spurious(spec, &z);
        for i in 0..n - k {
            let (w, l) = if rng.random::<f64>() < 0.5 { (&z, &f) } else { (&f, &z) };
            win.row_mut(k + i).assign(&w.row(i));
            lose.row_mut(k + i).assign(&l.row(i));
        }
    }
    TrainingSet {
        winners: mixer.apply(&win),
        losers: mixer.apply(&lose),
        strict_count: k,
    }
}

/// Comparisons scored against the true quality ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPairs<F> {
    pub a: Array2<F>,
    pub b: Array2<F>,
    pub a_better: Vec<bool>,
}

impl<F: Real> EvalPairs<F> {
    fn from_latents(mixer: &Mixer<F>, za: &Array2<f64>, zb: &Array2<f64>, qa: &[f64], qb: &[f64]) -> Self {
        Self {
            a: mixer.apply(za),
            b: mixer.apply(zb),
            a_better: qa.iter().zip(qb).map(|(a, b)| a > b).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.a_better.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_better.is_empty()
    }
}

/// Everything the proxy metrics consume.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSuite<F> {
    pub aligned: EvalPairs<F>,
    /// The aligned pairs with spurious blocks and shortcuts swapped.
    pub misaligned: EvalPairs<F>,
    pub adversarial: EvalPairs<F>,
    pub in_dist: EvalPairs<F>,
    /// Items and their spurious-flipped counterparts.
    pub counterfactual: (Array2<F>, Array2<F>),
}

pub fn build_eval_suite<F: Real>(
    spec: &LatentSpec,
    mixer: &Mixer<F>,
    n_pairs: usize,
    n_cf: usize,
    seed: u64,
    stream: u64,
) -> EvalSuite<F> {
    let p = generate_latent_pairs(spec, Mode::P, n_pairs, seed, substream(stream, 0));
    let aligned = EvalPairs::from_latents(mixer, &p.latent_a, &p.latent_b, &p.q_a, &p.q_b);
    let r = spec.spurious_range();
    let mut sa = p.latent_a.clone();
    let mut sb = p.latent_b.clone();
    sa.slice_mut(s![.., r.clone()]).assign(&p.latent_b.slice(s![.., r.clone()]));
    sb.slice_mut(s![.., r.clone()]).assign(&p.latent_a.slice(s![.., r]));
    let misaligned = EvalPairs::from_latents(mixer, &sa, &sb, &p.q_a, &p.q_b);
    let q = generate_latent_pairs(spec, Mode::QAdv, n_pairs, seed, substream(stream, 1));
    let adversarial = EvalPairs::from_latents(mixer, &q.latent_a, &q.latent_b, &q.q_a, &q.q_b);
    let d = generate_latent_pairs(spec, Mode::P, n_pairs, seed, substream(stream, 2));
    let in_dist = EvalPairs::from_latents(mixer, &d.latent_a, &d.latent_b, &d.q_a, &d.q_b);
    let mut rng = stream_rng(seed, substream(stream, 3));
    let (_, z) = sample_items(spec, Mode::P, n_cf, &mut rng);
    let counterfactual = (mixer.apply(&z), mixer.apply(&flip_spurious(spec, &z)));
    EvalSuite {
        aligned,
        misaligned,
        adversarial,
        in_dist,
        counterfactual,
    }
}

/// Sample correlation between `q` and column `col` of the latent rows.
pub fn latent_correlation(q: &[f64], z: &Array2<f64>, col: usize) -> f64 {
    let c: Vec<f64> = z.index_axis(Axis(1), col).to_vec();
    tielab::stats::pearson(q, &c)
}
