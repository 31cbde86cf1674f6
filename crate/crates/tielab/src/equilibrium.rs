//! Closed-form predictors for the log-linear DPO stationary point.
//!
//! Linearizing the sigmoid at zero margin turns the population first-order
//! condition into `Σ θ̃ = (2/β) μ`. The spurious block then splits into a
//! term driven by the spurious mean and a term leaked through `Σ_sc`.

use nalgebra::{DMatrix, DVector};

use crate::datagen::{sigmoid, PreferenceBatch, TieKind, TieSpec};
use crate::error::{dim_err, LabError, Result};
use crate::moments::{
    schur_of, spd_solve, symmetrize, BlockMatrix, BlockMoments, BlockVector, SchurParts,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub theta_tilde: BlockVector,
    pub mean_bias_term: Vec<f64>,
    pub leakage_term: Vec<f64>,
    /// `b_s = (I + Σ_sc S_c⁻¹ Σ_cs Σ_ss⁻¹) μ_s − Σ_sc S_c⁻¹ μ_c`.
    pub b_s: Vec<f64>,
    pub schur: SchurParts,
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(LabError::DegenerateInput(format!("beta must be positive, got {beta}")))
    }
}

fn solve_full(m: &BlockMoments, beta: f64) -> Result<DVector<f64>> {
    let sigma = m.second_moment.assemble();
    let rhs = m.mean.to_dvector() * (2.0 / beta);
    spd_solve(&sigma, &rhs, "full")
}

struct Terms {
    mean_bias: DVector<f64>,
    leakage: DVector<f64>,
    b_s: DVector<f64>,
    schur: SchurParts,
}

fn decompose(sigma: &BlockMatrix, mean: &BlockVector, beta: f64) -> Result<Terms> {
    let schur = schur_of(sigma)?;
    let (dc, ds) = (sigma.dc(), sigma.ds());
    let mu_c = DVector::from_column_slice(&mean.causal);
    let mu_s = DVector::from_column_slice(&mean.spurious);
    let (mix_s, leak_s) = if dc == 0 {
        (mu_s.clone(), DVector::zeros(ds))
    } else {
        let sc_inv = crate::moments::spd_inverse(&schur.schur_c, "schur_c")?;
        let sc = sigma.sc();
        let amplified = &mu_s + &sc * &sc_inv * &sigma.cs * &schur.ss_inverse * &mu_s;
        (amplified, -(&sc * &sc_inv * &mu_c))
    };
    let scale = 2.0 / beta;
    let mean_bias = &schur.ss_inverse * &mix_s * scale;
    let leakage = &schur.ss_inverse * &leak_s * scale;
    Ok(Terms {
        mean_bias,
        leakage,
        b_s: mix_s + leak_s,
        schur,
    })
}

/// Solution of `Σ θ̃ = (2/β) μ` with its spurious-block decomposition.
pub fn linearized_equilibrium(m: &BlockMoments, beta: f64) -> Result<EquilibriumReport> {
    check_beta(beta)?;
    let (dc, ds) = m.dims();
    let theta = solve_full(m, beta)?;
    let terms = if ds == 0 {
        Terms {
            mean_bias: DVector::zeros(0),
            leakage: DVector::zeros(0),
            b_s: DVector::zeros(0),
            schur: SchurParts {
                schur_c: m.second_moment.cc.clone(),
                ss_inverse: DMatrix::zeros(0, 0),
            },
        }
    } else {
        decompose(&m.second_moment, &m.mean, beta)?
    };
    Ok(EquilibriumReport {
        theta_tilde: BlockVector::from_dvector(&theta, dc),
        mean_bias_term: terms.mean_bias.as_slice().to_vec(),
        leakage_term: terms.leakage.as_slice().to_vec(),
        b_s: terms.b_s.as_slice().to_vec(),
        schur: terms.schur,
    })
}

/// The mean-bias and correlation-leakage parts of the spurious block.
pub fn spurious_block_solution(m: &BlockMoments, beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_beta(beta)?;
    let t = decompose(&m.second_moment, &m.mean, beta)?;
    Ok((t.mean_bias.as_slice().to_vec(), t.leakage.as_slice().to_vec()))
}

/// Moments of `α P + (1 − α) P_tie` for a zero-mean tie law with the given
/// second moment.
pub fn mixed_moments(strict_m: &BlockMoments, tie_second: &BlockMatrix, alpha: f64) -> Result<BlockMoments> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(LabError::InvalidMixing(alpha));
    }
    if (tie_second.dc(), tie_second.ds()) != strict_m.dims() {
        return Err(dim_err(format!("{:?}", strict_m.dims()), format!("({}, {})", tie_second.dc(), tie_second.ds())));
    }
    Ok(BlockMoments {
        mean: strict_m.mean.scaled(alpha),
        second_moment: strict_m
            .second_moment
            .scaled(alpha)
            .add(&tie_second.scaled(1.0 - alpha)),
        sample_count: strict_m.sample_count,
    })
}

/// Mixed-training equilibrium `(2α/β)(Σ^mix)⁻¹ μ^P` with exact ties whose
/// spurious second moment is `tie_ss`.
pub fn mixed_equilibrium(
    strict_m: &BlockMoments,
    tie_ss: &DMatrix<f64>,
    alpha: f64,
    beta: f64,
) -> Result<EquilibriumReport> {
    let (dc, ds) = strict_m.dims();
    let tie = BlockMatrix {
        cc: DMatrix::zeros(dc, dc),
        cs: DMatrix::zeros(dc, ds),
        ss: tie_ss.clone(),
    };
    mixed_equilibrium_general(strict_m, &tie, alpha, beta)
}

/// Mixed equilibrium for any zero-mean tie law (near ties add a causal block).
pub fn mixed_equilibrium_general(
    strict_m: &BlockMoments,
    tie_second: &BlockMatrix,
    alpha: f64,
    beta: f64,
) -> Result<EquilibriumReport> {
    linearized_equilibrium(&mixed_moments(strict_m, tie_second, alpha)?, beta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureEstimate {
    pub zeta: f64,
    pub correction_factor: f64,
}

/// Average logistic weight `ζ` at `fitted_theta` over `batch` and the
/// rescaled prediction `((1/4)/ζ) θ_lin`.
pub fn curvature_correction(
    theta_lin: &BlockVector,
    fitted_theta: &BlockVector,
    batch: &PreferenceBatch,
    beta: f64,
) -> Result<(CurvatureEstimate, BlockVector)> {
    if batch.is_empty() {
        return Err(LabError::DegenerateInput("empty batch".into()));
    }
    let zeta = logistic_weight_mean(fitted_theta, batch, beta);
    Ok(curvature_from_zeta(theta_lin, zeta))
}

pub fn logistic_weight_mean(theta: &BlockVector, batch: &PreferenceBatch, beta: f64) -> f64 {
    let t = theta.to_vec();
    let total: f64 = batch
        .rows()
        .map(|r| {
            let s = sigmoid(beta * crate::moments::dot(&t, r));
            s * (1.0 - s)
        })
        .sum();
    total / batch.len() as f64
}

pub fn curvature_from_zeta(theta_lin: &BlockVector, zeta: f64) -> (CurvatureEstimate, BlockVector) {
    let factor = 0.25 / zeta;
    (
        CurvatureEstimate {
            zeta,
            correction_factor: factor,
        },
        theta_lin.scaled(factor),
    )
}

/// `αλ₀ / (αλ₀ + (1 − α)σ²)`.
pub fn isotropic_reduction_ratio(alpha: f64, lambda0: f64, sigma_sq: f64) -> f64 {
    alpha * lambda0 / (alpha * lambda0 + (1.0 - alpha) * sigma_sq)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecontaminationReport {
    pub omega: f64,
    pub gamma: f64,
    pub theta_c_mix: Vec<f64>,
    pub theta_c_pure: Vec<f64>,
    pub theta_c_strict: Vec<f64>,
    pub relative_distance: f64,
}

/// Causal block of the mixed equilibrium for isotropic spurious curvature.
///
/// With `Σ_ss^P = λ₀ I` the tie mass enters the causal block only through
/// `ω(α) = α/(αλ₀ + (1−α)σ²)` and, for near ties, `γ(α) = (1−α)τ²/α`:
/// `θ_c,mix = (2/β)(Σ_cc + γI − ω Σ_cs Σ_sc)⁻¹ (μ_c − ω Σ_cs μ_s)`.
pub fn decontamination(strict_m: &BlockMoments, tie: &TieSpec, alpha: f64, beta: f64) -> Result<DecontaminationReport> {
    check_beta(beta)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(LabError::InvalidMixing(alpha));
    }
    let sigma = &strict_m.second_moment;
    let (dc, ds) = strict_m.dims();
    if ds == 0 || dc == 0 {
        return Err(LabError::DegenerateInput("decontamination needs both blocks".into()));
    }
    let lambda0 = sigma.ss.trace() / ds as f64;
    let dev = (&sigma.ss - DMatrix::<f64>::identity(ds, ds) * lambda0).amax();
    if dev > 1e-9 {
        return Err(LabError::NotIsotropic(dev));
    }
    let omega_of = |a: f64| a / (a * lambda0 + (1.0 - a) * tie.sigma_sq);
    let tau_sq = if tie.kind == TieKind::Near { tie.tau_sq } else { 0.0 };
    let causal_block = |omega: f64, gamma: f64| -> Result<Vec<f64>> {
        let a = symmetrize(
            &(&sigma.cc + DMatrix::<f64>::identity(dc, dc) * gamma - &sigma.cs * sigma.sc() * omega),
        );
        let rhs = (DVector::from_column_slice(&strict_m.mean.causal)
            - &sigma.cs * DVector::from_column_slice(&strict_m.mean.spurious) * omega)
            * (2.0 / beta);
        Ok(spd_solve(&a, &rhs, "mixed causal")?.as_slice().to_vec())
    };
    let omega = omega_of(alpha);
    let gamma = (1.0 - alpha) * tau_sq / alpha;
    let theta_c_mix = causal_block(omega, gamma)?;
    let theta_c_strict = causal_block(omega_of(1.0), 0.0)?;
    let theta_c_pure = spd_solve(
        &sigma.cc,
        &(DVector::from_column_slice(&strict_m.mean.causal) * (2.0 / beta)),
        "cc",
    )?
    .as_slice()
    .to_vec();
    let dist = |a: &[f64]| -> f64 {
        a.iter().zip(&theta_c_pure).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let denom = dist(&theta_c_strict);
    if denom == 0.0 {
        return Err(LabError::DegenerateInput(
            "strict and pure causal solutions coincide; relative distance undefined".into(),
        ));
    }
    Ok(DecontaminationReport {
        omega,
        gamma,
        relative_distance: dist(&theta_c_mix) / denom,
        theta_c_mix,
        theta_c_pure,
        theta_c_strict,
    })
}

/// Comparison of the two quadratic forms in the driving-term stability
/// condition: `b_s(Σ^mix, μ^P)ᵀ (Σ_ss^P)⁻¹ b_s(Σ^mix, μ^P)` against the
/// strict counterpart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivingTermCheck {
    pub mixed_form: f64,
    pub strict_form: f64,
    pub holds: bool,
}

pub fn driving_term_check(strict_m: &BlockMoments, tie_second: &BlockMatrix, alpha: f64) -> Result<DrivingTermCheck> {
    let mixed = mixed_moments(strict_m, tie_second, alpha)?;
    let strict_terms = decompose(&strict_m.second_moment, &strict_m.mean, 1.0)?;
    let mixed_terms = decompose(&mixed.second_moment, &strict_m.mean, 1.0)?;
    let inv = &strict_terms.schur.ss_inverse;
    let form = |b: &DVector<f64>| b.dot(&(inv * b));
    let strict_form = form(&strict_terms.b_s);
    let mixed_form = form(&mixed_terms.b_s);
    Ok(DrivingTermCheck {
        mixed_form,
        strict_form,
        holds: mixed_form <= strict_form * (1.0 + 1e-12) + 1e-15,
    })
}
