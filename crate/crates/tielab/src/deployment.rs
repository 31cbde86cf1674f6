//! Deployment-side quantities: expected margins, population objectives,
//! the suboptimality split into shift and estimation parts, the
//! high-probability bound and greedy decoding over a finite item set.

use gauss_quad::GaussHermite;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::{sigmoid, PreferenceBatch, Provenance};
use crate::error::{dim_err, LabError, Result};
use crate::moments::{dot, max_eigenvalue, spd_cholesky, spd_solve, symmetrize, BlockMatrix, BlockVector};
use crate::rng::stream_rng;
use crate::trainer::{fit_weighted, TrainConfig, TrainResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub total: f64,
    pub causal: f64,
    pub spurious: f64,
}

/// `m = β θ̃ᵀμ` split into its causal and spurious contributions.
pub fn expected_margin(theta_tilde: &BlockVector, mu: &BlockVector, beta: f64) -> Result<MarginReport> {
    if theta_tilde.dims() != mu.dims() {
        return Err(dim_err(format!("{:?}", mu.dims()), format!("{:?}", theta_tilde.dims())));
    }
    let causal = beta * dot(&theta_tilde.causal, &mu.causal);
    let spurious = beta * dot(&theta_tilde.spurious, &mu.spurious);
    Ok(MarginReport {
        total: causal + spurious,
        causal,
        spurious,
    })
}

/// `log σ(z)` without overflow.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Sample mean of `log σ(β θ̃ᵀΔφ)` with its standard error.
pub fn population_objective(theta_tilde: &BlockVector, batch: &PreferenceBatch, beta: f64) -> Result<ObjectiveEstimate> {
    if batch.is_empty() {
        return Err(LabError::DegenerateInput("empty batch".into()));
    }
    if theta_tilde.dims() != (batch.dc, batch.ds) {
        return Err(dim_err(format!("{:?}", (batch.dc, batch.ds)), format!("{:?}", theta_tilde.dims())));
    }
    let t = theta_tilde.to_vec();
    let n = batch.len() as f64;
    let (mut s, mut s2) = (0.0, 0.0);
    for r in batch.rows() {
        let v = log_sigmoid(beta * dot(&t, r));
        s += v;
        s2 += v * v;
    }
    let mean = s / n;
    let var = if batch.len() > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(ObjectiveEstimate {
        value: mean,
        std_error: (var / n).sqrt(),
    })
}

/// Plain sample mean of `log σ(β θ̃ᵀΔφ)` over row-major data.
pub fn objective_on_rows(theta_tilde: &[f64], rows: &[f64], beta: f64) -> f64 {
    let d = theta_tilde.len();
    let n = rows.len() / d;
    rows.chunks_exact(d).map(|r| log_sigmoid(beta * dot(theta_tilde, r))).sum::<f64>() / n as f64
}

/// `E log σ(β θ̃ᵀΔφ)` for `Δφ ~ N(mean, cov)` by Gauss-Hermite quadrature
/// over the scalar margin.
pub fn gaussian_objective(theta_tilde: &BlockVector, mean: &BlockVector, cov: &BlockMatrix, beta: f64) -> Result<f64> {
    if theta_tilde.dims() != mean.dims() || mean.dims() != (cov.dc(), cov.ds()) {
        return Err(dim_err(format!("{:?}", mean.dims()), format!("{:?}", theta_tilde.dims())));
    }
    let t = theta_tilde.to_dvector();
    let loc = beta * t.dot(&mean.to_dvector());
    let var = beta * beta * (t.transpose() * cov.assemble() * &t)[(0, 0)];
    if var < -1e-12 {
        return Err(LabError::NotPSD {
            what: "margin variance".into(),
            min_eig: var,
        });
    }
    let sd = var.max(0.0).sqrt();
    if sd == 0.0 {
        return Ok(log_sigmoid(loc));
    }
    let quad = GaussHermite::new(80).map_err(|e| LabError::DegenerateInput(e.to_string()))?;
    let scale = std::f64::consts::SQRT_2 * sd;
    Ok(quad.integrate(|x| log_sigmoid(loc + scale * x)) / std::f64::consts::PI.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuboptReport {
    pub total: f64,
    pub shift_term: f64,
    pub estimation_term: f64,
    pub theta_q_star: BlockVector,
    /// Objective under Q at the labelled parameter points.
    pub j_q_at: Vec<(String, f64)>,
}

/// Maximizer of the unregularized Q objective over `‖θ̃‖ ≤ B`.
pub fn q_optimum(q_batch: &PreferenceBatch, beta: f64, ball_radius: f64) -> Result<TrainResult> {
    let mut cfg = TrainConfig::new(beta, q_batch.dc, q_batch.ds);
    cfg.ball_radius = ball_radius;
    let (rows, w) = q_batch.compress();
    fit_weighted(&rows, &w, q_batch.dc, q_batch.ds, &cfg)
}

/// `SubOpt_Q(θ̂) = [J^Q(θ★_Q) − J^Q(θ_train)] + [J^Q(θ_train) − J^Q(θ̂)]`
/// with `θ★_Q` fitted on `q_batch`.
pub fn subopt_decomposition(
    theta_hat: &BlockVector,
    theta_train: &BlockVector,
    q_batch: &PreferenceBatch,
    beta: f64,
    ball_radius: f64,
) -> Result<SuboptReport> {
    let star = q_optimum(q_batch, beta, ball_radius)?;
    subopt_with_optimum(theta_hat, theta_train, &star.theta_tilde_hat, q_batch, beta)
}

/// As [`subopt_decomposition`] with a precomputed `θ★_Q`.
pub fn subopt_with_optimum(
    theta_hat: &BlockVector,
    theta_train: &BlockVector,
    theta_q_star: &BlockVector,
    q_batch: &PreferenceBatch,
    beta: f64,
) -> Result<SuboptReport> {
    let d = (q_batch.dc, q_batch.ds);
    for v in [theta_hat, theta_train, theta_q_star] {
        if v.dims() != d {
            return Err(dim_err(format!("{d:?}"), format!("{:?}", v.dims())));
        }
    }
    if q_batch.is_empty() {
        return Err(LabError::DegenerateInput("empty Q batch".into()));
    }
    let j = |v: &BlockVector| objective_on_rows(&v.to_vec(), &q_batch.data, beta);
    let (j_star, j_train, j_hat) = (j(theta_q_star), j(theta_train), j(theta_hat));
    let shift_term = j_star - j_train;
    let estimation_term = j_train - j_hat;
    Ok(SuboptReport {
        total: shift_term + estimation_term,
        shift_term,
        estimation_term,
        theta_q_star: theta_q_star.clone(),
        j_q_at: vec![
            ("theta_q_star".into(), j_star),
            ("theta_train".into(), j_train),
            ("theta_hat".into(), j_hat),
        ],
    })
}

/// `Γₙ = 2β √(2(d + ln(1/δ))/n) + B √λ`.
pub fn gamma_n(d: usize, n: usize, delta: f64, beta: f64, ball_radius: f64, ridge_lambda: f64) -> f64 {
    2.0 * beta * (2.0 * (d as f64 + (1.0 / delta).ln()) / n as f64).sqrt() + ball_radius * ridge_lambda.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub d: usize,
    pub n: usize,
    pub delta: f64,
    pub beta: f64,
    pub ball_radius: f64,
    pub ridge_lambda: f64,
    pub kappa_pi: f64,
    pub h_p: DMatrix<f64>,
    pub g_q: f64,
    pub gamma_n: f64,
}

impl BoundInputs {
    /// Fill `gamma_n` from the other fields.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d: usize,
        n: usize,
        delta: f64,
        beta: f64,
        ball_radius: f64,
        ridge_lambda: f64,
        constants: &BoundConstants,
    ) -> Self {
        Self {
            d,
            n,
            delta,
            beta,
            ball_radius,
            ridge_lambda,
            kappa_pi: constants.kappa_pi,
            h_p: constants.h_p.clone(),
            g_q: constants.g_q,
            gamma_n: gamma_n(d, n, delta, beta, ball_radius, ridge_lambda),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub bound: f64,
    pub gamma_n: f64,
}

/// `shift + G_Q Γₙ + (κ_Π/2) Γₙ²`.
pub fn deployment_bound(inputs: &BoundInputs, shift_term: f64) -> Result<BoundValue> {
    let vals = [inputs.g_q, inputs.gamma_n, inputs.kappa_pi, shift_term];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(LabError::DegenerateInput("bound inputs must be finite".into()));
    }
    let g = inputs.gamma_n;
    Ok(BoundValue {
        bound: shift_term + inputs.g_q * g + 0.5 * inputs.kappa_pi * g * g,
        gamma_n: g,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants {
    pub h_p: DMatrix<f64>,
    pub g_q: f64,
    pub kappa_pi: f64,
}

/// Fisher curvature `H_P`, the Q-gradient size `G_Q` in the `H_P⁻¹` norm and
/// the transfer constant `κ_Π`.
pub fn bound_constants(
    theta_train: &BlockVector,
    p_batch: &PreferenceBatch,
    q_batch: &PreferenceBatch,
    beta: f64,
    ridge_lambda: f64,
) -> Result<BoundConstants> {
    if p_batch.is_empty() || q_batch.is_empty() {
        return Err(LabError::DegenerateInput("empty batch".into()));
    }
    let dims = theta_train.dims();
    if (p_batch.dc, p_batch.ds) != dims || (q_batch.dc, q_batch.ds) != dims {
        return Err(dim_err(format!("{dims:?}"), format!("{:?}", (p_batch.dc, p_batch.ds))));
    }
    let d = theta_train.dim();
    let t = theta_train.to_vec();

    let mut h = DMatrix::<f64>::zeros(d, d);
    for r in p_batch.rows() {
        let s = sigmoid(beta * dot(&t, r));
        let w = beta * beta * s * (1.0 - s);
        let x = DVector::from_column_slice(r);
        h.ger(w, &x, &x, 1.0);
    }
    h /= p_batch.len() as f64;
    for i in 0..d {
        h[(i, i)] += ridge_lambda;
    }
    let h = symmetrize(&h);

    let mut g = DVector::<f64>::zeros(d);
    let mut sq = DMatrix::<f64>::zeros(d, d);
    for r in q_batch.rows() {
        let x = DVector::from_column_slice(r);
        g.axpy(beta * sigmoid(-beta * dot(&t, r)), &x, 1.0);
        sq.ger(1.0, &x, &x, 1.0);
    }
    let nq = q_batch.len() as f64;
    g /= nq;
    sq *= beta * beta / 4.0 / nq;

    let g_q = g.dot(&spd_solve(&h, &g, "H_P")?).max(0.0).sqrt();
    let chol = spd_cholesky(&h, "H_P")?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| LabError::SingularBlock { block: "H_P".into() })?;
    let reduced = symmetrize(&(&l_inv * sq * l_inv.transpose()));
    Ok(BoundConstants {
        h_p: h,
        g_q,
        kappa_pi: max_eigenvalue(&reduced).max(1.0),
    })
}

/// Greedy item under `theta_hat` (lowest index on ties) and its regret under
/// `theta_star`. Rows of `phi` are item features.
pub fn greedy_policy_eval(theta_hat: &[f64], phi: &DMatrix<f64>, theta_star: &[f64]) -> Result<(usize, f64)> {
    if phi.nrows() == 0 {
        return Err(LabError::DegenerateInput("no items".into()));
    }
    if theta_hat.len() != phi.ncols() || theta_star.len() != phi.ncols() {
        return Err(dim_err(phi.ncols(), theta_hat.len()));
    }
    let scores = |t: &[f64]| -> Vec<f64> {
        (0..phi.nrows())
            .map(|i| (0..phi.ncols()).map(|j| phi[(i, j)] * t[j]).sum())
            .collect()
    };
    let learned = scores(theta_hat);
    let mut chosen = 0;
    for (i, s) in learned.iter().enumerate() {
        if *s > learned[chosen] {
            chosen = i;
        }
    }
    let truth = scores(theta_star);
    let best = truth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((chosen, best - truth[chosen]))
}

/// The five-item reward-learning instance: three causal coordinates and one
/// spurious coordinate with strength `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyInstance {
    pub phi: DMatrix<f64>,
    pub theta_star: Vec<f64>,
    /// Compared item pairs `(i, j)`; the difference is `φ_i − φ_j`.
    pub pairs: Vec<(usize, usize)>,
}

impl GreedyInstance {
    pub fn five_item(sigma: f64) -> Self {
        #[rustfmt::skip]
        let phi = DMatrix::from_row_slice(5, 4, &[
            1.0, 1.0, 0.0, sigma,
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, sigma,
            0.0, 0.0, 1.0, 0.0,
        ]);
        Self {
            phi,
            theta_star: vec![-1.0, 0.1, 0.05, 0.0],
            pairs: vec![(0, 1), (1, 2), (4, 2)],
        }
    }

    /// Item features seen at deployment: the spurious column scaled by
    /// `factor` (−1 reverses it, 0 suppresses it).
    pub fn shifted(&self, factor: f64) -> DMatrix<f64> {
        let mut q = self.phi.clone();
        let last = q.ncols() - 1;
        q.column_mut(last).scale_mut(factor);
        q
    }

    /// `n` comparisons: the first `round(strict_fraction · n)` cycle through
    /// the pairs with Bradley-Terry labels; the rest are ties, i.e. pure
    /// spurious differences `±e_s` with a fair-coin orientation.
    pub fn sample(&self, n: usize, strict_fraction: f64, seed: u64, stream: u64) -> Result<PreferenceBatch> {
        if !(strict_fraction > 0.0 && strict_fraction <= 1.0) {
            return Err(LabError::InvalidMixing(strict_fraction));
        }
        let d = self.phi.ncols();
        let k = (strict_fraction * n as f64).round() as usize;
        let mut rng = stream_rng(seed, stream);
        let mut batch = PreferenceBatch::empty(d - 1, 1, seed, stream);
        let mut row = vec![0.0; d];
        for i in 0..n {
            if i < k {
                let (a, b) = self.pairs[i % self.pairs.len()];
                for (j, r) in row.iter_mut().enumerate() {
                    *r = self.phi[(a, j)] - self.phi[(b, j)];
                }
                let p = sigmoid(dot(&self.theta_star, &row));
                if rand::Rng::random::<f64>(&mut rng) >= p {
                    row.iter_mut().for_each(|x| *x = -*x);
                }
                batch.push(&row, Provenance::Strict);
            } else {
                row.fill(0.0);
                row[d - 1] = if rand::Rng::random::<f64>(&mut rng) < 0.5 { 1.0 } else { -1.0 };
                batch.push(&row, Provenance::Tie);
            }
        }
        Ok(batch)
    }
}
