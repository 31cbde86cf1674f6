//! Log-linear DPO fitting.
//!
//! The per-pair loss is `−log σ(β θ̃ᵀΔφ)` with `θ̃ = θ − θ_ref`. Full-batch
//! fitting minimizes the mean loss plus `(λ/2)‖θ̃‖²` over the ball
//! `‖θ̃‖ ≤ B` by projected gradient descent with a backtracking line search.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::{PreferenceBatch, StrictSampler};
use crate::error::{dim_err, LabError, Result};
use crate::moments::{dot, BlockVector};
use crate::rng::{stream_rng, substream, LabRng};

/// `η_t` as a function of the iteration index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrSchedule {
    Constant,
    /// `η / (1 + t / t0)`.
    InverseTime { t0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta: f64,
    pub ridge_lambda: f64,
    pub ball_radius: f64,
    pub theta_ref: BlockVector,
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub stream: u64,
    /// Stopping tolerance on the projected-gradient norm (full batch).
    pub grad_tol: f64,
    /// Iteration cap for the full-batch solver.
    pub max_iterations: usize,
    pub schedule: LrSchedule,
    /// Size of the fixed subsample used for the margin diagnostic.
    pub margin_subsample: usize,
    /// Keep every k-th trajectory point (the last one is always kept).
    pub record_every: usize,
}

impl TrainConfig {
    pub fn new(beta: f64, dc: usize, ds: usize) -> Self {
        Self {
            beta,
            ridge_lambda: 0.0,
            ball_radius: f64::INFINITY,
            theta_ref: BlockVector::zeros(dc, ds),
            learning_rate: 5e-3,
            iterations: 15_000,
            batch_size: 64,
            seed: 0,
            stream: 0,
            grad_tol: 1e-8,
            max_iterations: 50_000,
            schedule: LrSchedule::Constant,
            margin_subsample: 1000,
            record_every: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(LabError::DegenerateInput(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(LabError::DegenerateInput("ridge_lambda must be nonnegative".into()));
        }
        if !(self.ball_radius > 0.0) {
            return Err(LabError::DegenerateInput("ball_radius must be positive".into()));
        }
        Ok(())
    }

    fn learning_rate_at(&self, t: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::InverseTime { t0 } => self.learning_rate / (1.0 + t as f64 / t0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub theta_tilde: Vec<f64>,
    pub spurious_norm: f64,
    pub causal_norm: f64,
    pub margin_diag: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub theta_hat: BlockVector,
    pub theta_tilde_hat: BlockVector,
    pub trajectory: Option<Vec<TrajectoryPoint>>,
    pub final_loss: f64,
    pub iterations: usize,
    /// Projected-gradient norm at the returned point (full batch only).
    pub grad_norm: f64,
    /// Objective value after every accepted step (full batch only).
    pub objective_trace: Vec<f64>,
}

/// `softplus(−z) = −log σ(z)` and `σ(−z) = 1 − σ(z)` from one exponential.
#[inline]
fn loss_and_weight(z: f64) -> (f64, f64) {
    if z >= 0.0 {
        let e = (-z).exp();
        (e.ln_1p(), e / (1.0 + e))
    } else {
        let e = z.exp();
        (-z + e.ln_1p(), 1.0 / (1.0 + e))
    }
}

/// Loss `−log σ(β θ̃ᵀΔφ)` and its gradient `−β (1 − σ) Δφ`.
pub fn dpo_loss_grad(theta_tilde: &BlockVector, diff: &BlockVector, beta: f64) -> Result<(f64, BlockVector)> {
    if theta_tilde.dims() != diff.dims() {
        return Err(dim_err(format!("{:?}", theta_tilde.dims()), format!("{:?}", diff.dims())));
    }
    let (loss, w) = loss_and_weight(beta * theta_tilde.dot(diff));
    Ok((loss, diff.scaled(-beta * w)))
}

/// Largest `|β θ̃ᵀΔφ|` over the rows of `diffs`.
pub fn local_regime_margin(theta_tilde: &BlockVector, diffs: &PreferenceBatch, beta: f64) -> Result<f64> {
    if diffs.is_empty() {
        return Err(LabError::DegenerateInput("no diffs".into()));
    }
    if theta_tilde.dims() != (diffs.dc, diffs.ds) {
        return Err(dim_err(format!("{:?}", (diffs.dc, diffs.ds)), format!("{:?}", theta_tilde.dims())));
    }
    Ok(max_margin(&theta_tilde.to_vec(), &diffs.data, beta))
}

fn max_margin(theta: &[f64], rows: &[f64], beta: f64) -> f64 {
    rows.chunks_exact(theta.len())
        .map(|r| (beta * dot(theta, r)).abs())
        .fold(0.0, f64::max)
}

fn mean_loss(theta: &[f64], rows: &[f64], beta: f64) -> f64 {
    let n = rows.len() / theta.len();
    rows.chunks_exact(theta.len())
        .map(|r| loss_and_weight(beta * dot(theta, r)).0)
        .sum::<f64>()
        / n as f64
}

fn project(theta: &mut [f64], radius: f64) {
    let norm = dot(theta, theta).sqrt();
    if norm > radius {
        let s = radius / norm;
        theta.iter_mut().for_each(|x| *x *= s);
    }
}

/// Weighted regularized objective and its gradient.
struct Objective<'a> {
    rows: &'a [f64],
    weights: &'a [f64],
    total_weight: f64,
    beta: f64,
    lambda: f64,
    d: usize,
}

impl Objective<'_> {
    fn eval(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let mut f = Neumaier::default();
        for (r, &w) in self.rows.chunks_exact(self.d).zip(self.weights) {
            let (l, s) = loss_and_weight(self.beta * dot(theta, r));
            f.add(w * l);
            let c = -self.beta * w * s;
            for (g, x) in grad.iter_mut().zip(r) {
                *g += c * x;
            }
        }
        let inv = 1.0 / self.total_weight;
        let mut reg = 0.0;
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = *g * inv + self.lambda * t;
            reg += t * t;
        }
        f.total() * inv + 0.5 * self.lambda * reg
    }
}

/// Compensated summation; keeps the objective accurate enough for the line
/// search near the optimum.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Full-batch regularized MLE over `batch`.
pub fn fit_ridge_mle(batch: &PreferenceBatch, cfg: &TrainConfig) -> Result<TrainResult> {
    if batch.is_empty() {
        return Err(LabError::DegenerateInput("empty batch".into()));
    }
    let weights = vec![1.0; batch.len()];
    fit_weighted(&batch.data, &weights, batch.dc, batch.ds, cfg)
}

/// Same as [`fit_ridge_mle`] for row-major `rows` with nonnegative
/// multiplicities `weights` (see `PreferenceBatch::compress`).
pub fn fit_weighted(rows: &[f64], weights: &[f64], dc: usize, ds: usize, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let d = dc + ds;
    if d == 0 || rows.len() != weights.len() * d {
        return Err(dim_err(weights.len() * d, rows.len()));
    }
    if cfg.theta_ref.dims() != (dc, ds) {
        return Err(dim_err(format!("{:?}", (dc, ds)), format!("{:?}", cfg.theta_ref.dims())));
    }
    let total_weight: f64 = weights.iter().sum();
    if !(total_weight > 0.0) || weights.iter().any(|w| *w < 0.0) {
        return Err(LabError::DegenerateInput("weights must be nonnegative with positive sum".into()));
    }
    let obj = Objective {
        rows,
        weights,
        total_weight,
        beta: cfg.beta,
        lambda: cfg.ridge_lambda,
        d,
    };

    let mut theta = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut f = obj.eval(&theta, &mut grad);
    let mut trace = vec![f];
    let mut step = 1.0;
    let mut cand = vec![0.0; d];
    let mut cand_grad = vec![0.0; d];
    let mut gm = f64::INFINITY;

    for it in 0..cfg.max_iterations {
        gm = mapping_norm(&theta, &grad, cfg.ball_radius);
        if gm <= cfg.grad_tol {
            return Ok(finish(theta, dc, cfg, f, it, gm, trace));
        }
        let mut accepted = None;
        for _ in 0..80 {
            for i in 0..d {
                cand[i] = theta[i] - step * grad[i];
            }
            project(&mut cand, cfg.ball_radius);
            let fc = obj.eval(&cand, &mut cand_grad);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..d {
                let s = cand[i] - theta[i];
                lin += grad[i] * s;
                sq += s * s;
            }
            if fc <= f + lin + sq / (2.0 * step) && fc <= f {
                accepted = Some(fc);
                break;
            }
            // Near the optimum the decrease falls below the rounding floor of
            // f and the test above is uninformative. For a convex objective a
            // nonpositive slope at the candidate along the step certifies
            // f(cand) <= f(theta) without comparing function values.
            let slope: f64 = (0..d).map(|i| cand_grad[i] * (cand[i] - theta[i])).sum();
            let floor = 4.0 * f64::EPSILON * f.abs().max(1.0);
            if slope <= 0.0 && fc - f <= floor {
                accepted = Some(fc);
                break;
            }
            step *= 0.5;
        }
        let Some(fc) = accepted else {
            break;
        };
        // Barzilai-Borwein proposal for the next trial step
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..d {
            let s = cand[i] - theta[i];
            ss += s * s;
            sy += s * (cand_grad[i] - grad[i]);
        }
        step = if sy > 0.0 { (ss / sy).min(1e8) } else { step * 2.0 };
        std::mem::swap(&mut theta, &mut cand);
        std::mem::swap(&mut grad, &mut cand_grad);
        f = fc;
        trace.push(f);
    }
    gm = gm.min(mapping_norm(&theta, &grad, cfg.ball_radius));
    if gm <= cfg.grad_tol {
        let n = trace.len() - 1;
        return Ok(finish(theta, dc, cfg, f, n, gm, trace));
    }
    Err(LabError::NotConverged {
        iterations: trace.len() - 1,
        grad_norm: gm,
        last: Box::new(BlockVector::from_slice(&theta, dc)),
    })
}

/// `‖θ − P(θ − ∇f)‖`, which is the gradient norm inside the ball.
fn mapping_norm(theta: &[f64], grad: &[f64], radius: f64) -> f64 {
    let mut p: Vec<f64> = theta.iter().zip(grad).map(|(t, g)| t - g).collect();
    project(&mut p, radius);
    theta
        .iter()
        .zip(&p)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn finish(
    theta: Vec<f64>,
    dc: usize,
    cfg: &TrainConfig,
    f: f64,
    iterations: usize,
    grad_norm: f64,
    trace: Vec<f64>,
) -> TrainResult {
    let tilde = BlockVector::from_slice(&theta, dc);
    TrainResult {
        theta_hat: cfg.theta_ref.add(&tilde),
        theta_tilde_hat: tilde,
        trajectory: None,
        final_loss: f,
        iterations,
        grad_norm,
        objective_trace: trace,
    }
}

/// Anything that can hand out minibatches of oriented differences.
pub trait PairSource {
    fn dim(&self) -> usize;
    /// Replace `out` with `m` row-major records.
    fn draw_into(&mut self, rng: &mut LabRng, m: usize, out: &mut Vec<f64>);
}

/// Minibatches from a fixed batch: shuffled epochs, without replacement.
pub struct BatchSource<'a> {
    batch: &'a PreferenceBatch,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> BatchSource<'a> {
    pub fn new(batch: &'a PreferenceBatch) -> Self {
        Self {
            batch,
            order: (0..batch.len()).collect(),
            cursor: batch.len(),
        }
    }
}

impl PairSource for BatchSource<'_> {
    fn dim(&self) -> usize {
        self.batch.dim()
    }

    fn draw_into(&mut self, rng: &mut LabRng, m: usize, out: &mut Vec<f64>) {
        out.clear();
        for _ in 0..m {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            out.extend_from_slice(self.batch.row(self.order[self.cursor]));
            self.cursor += 1;
        }
    }
}

impl PairSource for StrictSampler {
    fn dim(&self) -> usize {
        let (dc, ds) = self.dims();
        dc + ds
    }

    fn draw_into(&mut self, rng: &mut LabRng, m: usize, out: &mut Vec<f64>) {
        let d = PairSource::dim(self);
        out.clear();
        out.resize(m * d, 0.0);
        for r in out.chunks_exact_mut(d) {
            self.draw(rng, r);
        }
    }
}

/// Projected minibatch SGD from `θ̃ = 0`, recording the spurious norm and the
/// margin diagnostic on a fixed subsample after every update.
pub fn sgd_trajectory(source: &mut dyn PairSource, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if cfg.iterations == 0 || cfg.batch_size == 0 {
        return Err(LabError::DegenerateInput("iterations and batch_size must be >= 1".into()));
    }
    let (dc, ds) = cfg.theta_ref.dims();
    let d = dc + ds;
    if source.dim() != d {
        return Err(dim_err(d, source.dim()));
    }
    let mut diag = Vec::new();
    let mut diag_rng = stream_rng(cfg.seed, substream(cfg.stream, 99));
    source.draw_into(&mut diag_rng, cfg.margin_subsample.max(1), &mut diag);
    let mut rng = stream_rng(cfg.seed, cfg.stream);

    let every = cfg.record_every.max(1);
    let mut theta = vec![0.0; d];
    let mut points = vec![point(0, &theta, dc, &diag, cfg.beta)];
    let mut mb = Vec::with_capacity(cfg.batch_size * d);
    let mut grad = vec![0.0; d];
    for t in 0..cfg.iterations {
        source.draw_into(&mut rng, cfg.batch_size, &mut mb);
        grad.fill(0.0);
        for r in mb.chunks_exact(d) {
            let (_, w) = loss_and_weight(cfg.beta * dot(&theta, r));
            let c = -cfg.beta * w;
            for (g, x) in grad.iter_mut().zip(r) {
                *g += c * x;
            }
        }
        let eta = cfg.learning_rate_at(t);
        let inv = 1.0 / cfg.batch_size as f64;
        for i in 0..d {
            theta[i] -= eta * (grad[i] * inv + cfg.ridge_lambda * theta[i]);
        }
        project(&mut theta, cfg.ball_radius);
        let it = t + 1;
        if it % every == 0 || it == cfg.iterations {
            points.push(point(it, &theta, dc, &diag, cfg.beta));
        }
    }
    let tilde = BlockVector::from_slice(&theta, dc);
    let final_loss = points.last().map(|p| p.loss).unwrap_or(f64::NAN);
    Ok(TrainResult {
        theta_hat: cfg.theta_ref.add(&tilde),
        theta_tilde_hat: tilde,
        trajectory: Some(points),
        final_loss,
        iterations: cfg.iterations,
        grad_norm: f64::NAN,
        objective_trace: Vec::new(),
    })
}

fn point(iteration: usize, theta: &[f64], dc: usize, diag: &[f64], beta: f64) -> TrajectoryPoint {
    let v = BlockVector::from_slice(theta, dc);
    TrajectoryPoint {
        iteration,
        theta_tilde: theta.to_vec(),
        spurious_norm: v.spurious_norm(),
        causal_norm: v.causal_norm(),
        margin_diag: max_margin(theta, diag, beta),
        loss: mean_loss(theta, diag, beta),
    }
}

/// CSV rows `iteration, spurious_norm, causal_norm, margin_diag, loss`.
pub fn write_trajectory_csv<W: Write>(points: &[TrajectoryPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "iteration,spurious_norm,causal_norm,margin_diag,loss")?;
    for p in points {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e}",
            p.iteration, p.spurious_norm, p.causal_norm, p.margin_diag, p.loss
        )?;
    }
    Ok(())
}
