//! Tie-mixing experiments: spurious norm reduction under exact ties, causal
//! decontamination, and near ties.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use tielab::datagen::{
    sample_near_tie_batch, sample_strict_batch, sample_tie_batch, FeatureLawSpec, PreferenceBatch, Regime, TeacherSpec,
    TieKind, TieSpec,
};
use tielab::equilibrium::{decontamination, isotropic_reduction_ratio, linearized_equilibrium, mixed_equilibrium_general};
use tielab::{BlockMatrix, BlockMoments, BlockVector};

use super::{concat, fit};
use crate::run::{cell_stream, run_cells, RunOutput};
use crate::svg::PlotSpec;
use crate::table::{Cell, ResultTable};
use crate::{AtCell, HarnessError, Result};

fn default_alphas() -> Vec<f64> {
    vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    match alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        Some(a) => Err(HarnessError::Config(format!("alpha {a} outside (0, 1]"))),
        None => Ok(()),
    }
}

/// Fits of the strict batch and of every mixture. The mixture at `α` keeps
/// the first `round(αN)` strict rows and fills the rest from the ties, so
/// all mixtures of one replicate share their strict prefix.
struct MixFits {
    strict: BlockVector,
    mixed: Vec<BlockVector>,
}

fn fit_mixtures(
    strict: &PreferenceBatch,
    ties: &PreferenceBatch,
    alphas: &[f64],
    beta: f64,
    here: &dyn Fn() -> String,
) -> Result<MixFits> {
    let n = strict.len();
    let strict_fit = fit(strict, beta, 0.0, f64::INFINITY).at(here)?.theta_tilde_hat;
    let mixed = alphas
        .iter()
        .map(|&a| {
            let k = (a * n as f64).round() as usize;
            if k == n {
                return Ok(strict_fit.clone());
            }
            let mix = concat(&strict.prefix(k), &ties.prefix(n - k));
            Ok(fit(&mix, beta, 0.0, f64::INFINITY).at(|| format!("{} alpha={a}", here()))?.theta_tilde_hat)
        })
        .collect::<Result<_>>()?;
    Ok(MixFits { strict: strict_fit, mixed })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionParams {
    pub dc: usize,
    pub ds: usize,
    pub lambda0: f64,
    pub theta_dagger: f64,
    pub n: usize,
    pub beta: f64,
    pub sigma_sq: f64,
    pub alphas: Vec<f64>,
    pub replicates: usize,
}

impl Default for ReductionParams {
    fn default() -> Self {
        Self {
            dc: 5,
            ds: 5,
            lambda0: 1.0,
            theta_dagger: 0.15,
            n: 8000,
            beta: 0.3,
            sigma_sq: 5.0,
            alphas: default_alphas(),
            replicates: 30,
        }
    }
}

pub const REDUCTION_COLUMNS: [&str; 6] = [
    "alpha",
    "seed",
    "spurious_norm_mix",
    "spurious_norm_strict",
    "ratio",
    "predicted_ratio",
];

pub fn run_reduction(p: &ReductionParams, seed: u64) -> Result<RunOutput> {
    check_alphas(&p.alphas)?;
    let law = FeatureLawSpec::isotropic(Regime::BtFull, p.dc, p.ds, p.lambda0, 0.0);
    let teacher = TeacherSpec {
        theta_dagger: BlockVector::new(vec![p.theta_dagger; p.dc], vec![p.theta_dagger; p.ds]).at(|| "teacher".into())?,
        beta_teacher: 1.0,
    };
    let tie = TieSpec::exact(p.sigma_sq);
    let cells: Vec<usize> = (0..p.replicates).collect();
    let mut table = ResultTable::new(&REDUCTION_COLUMNS);
    run_cells(&mut table, &cells, |&r| {
        let here = || format!("seed={r}");
        let strict = sample_strict_batch(&law, &teacher, p.n, seed, cell_stream(0, r)).at(here)?;
        let ties = sample_tie_batch(&tie, (p.dc, p.ds), p.n, seed, cell_stream(1, r)).at(here)?;
        let fits = fit_mixtures(&strict, &ties, &p.alphas, p.beta, &here)?;
        let s = fits.strict.spurious_norm();
        Ok(p.alphas
            .iter()
            .zip(&fits.mixed)
            .map(|(&a, m)| {
                let mix = m.spurious_norm();
                vec![
                    a.into(),
                    r.into(),
                    mix.into(),
                    s.into(),
                    (mix / s).into(),
                    isotropic_reduction_ratio(a, p.lambda0, p.sigma_sq).into(),
                ]
            })
            .collect())
    })?;
    Ok(RunOutput::new(
        table,
        Some(PlotSpec {
            title: "spurious norm ratio vs strict fraction".into(),
            x: "alpha".into(),
            ys: vec!["ratio".into(), "predicted_ratio".into()],
            group: None,
            log_x: false,
        }),
    ))
}

/// Unlabeled law with second moment `[[I, ρI], [ρI, I]]`, causal mean
/// `m_c u` and spurious mean `m_s (1.2 u + v)`, where `u` is the normalized
/// all-ones vector and `v = (e₁ − e₂)/√2`.
fn correlated_law(d: usize, rho: f64, m_c: f64, m_s: f64) -> Result<FeatureLawSpec> {
    if d < 2 {
        return Err(HarnessError::Config("d must be at least 2".into()));
    }
    let u = 1.0 / (d as f64).sqrt();
    let mut v = vec![0.0; d];
    v[0] = std::f64::consts::FRAC_1_SQRT_2;
    v[1] = -std::f64::consts::FRAC_1_SQRT_2;
    let mean = BlockVector::new(vec![m_c * u; d], v.iter().map(|x| m_s * (1.2 * u + x)).collect())
        .at(|| "law".into())?;
    let eye = DMatrix::<f64>::identity(d, d);
    let target = BlockMatrix::new(eye.clone(), &eye * rho, eye.clone()).at(|| "law".into())?;
    FeatureLawSpec::direct_with_second_moment(mean, &target).at(|| "law".into())
}

fn unit_teacher(d: usize) -> TeacherSpec {
    TeacherSpec {
        theta_dagger: BlockVector::zeros(d, d),
        beta_teacher: 1.0,
    }
}

fn zero_spurious(batch: &PreferenceBatch) -> PreferenceBatch {
    let mut out = batch.clone();
    let (dc, d) = (batch.dc, batch.dim());
    for r in out.data.chunks_exact_mut(d) {
        r[dc..].fill(0.0);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecontaminationParams {
    pub d: usize,
    pub rho: f64,
    pub causal_mean: f64,
    pub spurious_mean: f64,
    pub n: usize,
    pub beta: f64,
    pub sigma_sq: f64,
    pub alphas: Vec<f64>,
    pub replicates: usize,
}

impl Default for DecontaminationParams {
    fn default() -> Self {
        Self {
            d: 5,
            rho: 0.5,
            causal_mean: 0.1,
            spurious_mean: 0.1,
            n: 20_000,
            beta: 0.3,
            sigma_sq: 5.0,
            alphas: default_alphas(),
            replicates: 10,
        }
    }
}

pub const DECONTAMINATION_COLUMNS: [&str; 8] = [
    "alpha",
    "seed",
    "relative_distance",
    "predicted_relative_distance",
    "r_th",
    "causal_norm_ratio",
    "spurious_norm_ratio",
    "omega",
];

pub fn run_decontamination(p: &DecontaminationParams, seed: u64) -> Result<RunOutput> {
    check_alphas(&p.alphas)?;
    let law = correlated_law(p.d, p.rho, p.causal_mean, p.spurious_mean)?;
    let pop = law.population_moments().expect("unlabeled law has closed-form moments");
    let tie = TieSpec::exact(p.sigma_sq);
    let predicted = p
        .alphas
        .iter()
        .map(|&a| decontamination(&pop, &tie, a, p.beta).at(|| format!("alpha={a}")))
        .collect::<Result<Vec<_>>>()?;
    let lambda0 = pop.second_moment.ss[(0, 0)];
    let teacher = unit_teacher(p.d);
    let cells: Vec<usize> = (0..p.replicates).collect();
    let mut table = ResultTable::new(&DECONTAMINATION_COLUMNS);
    run_cells(&mut table, &cells, |&r| {
        let here = || format!("seed={r}");
        let strict = sample_strict_batch(&law, &teacher, p.n, seed, cell_stream(0, r)).at(here)?;
        let ties = sample_tie_batch(&tie, (p.d, p.d), p.n, seed, cell_stream(1, r)).at(here)?;
        let fits = fit_mixtures(&strict, &ties, &p.alphas, p.beta, &here)?;
        let pure = fit(&zero_spurious(&strict), p.beta, 0.0, f64::INFINITY).at(here)?.theta_tilde_hat;
        let denom = dist(&fits.strict.causal, &pure.causal);
        Ok(p.alphas
            .iter()
            .zip(&fits.mixed)
            .zip(&predicted)
            .map(|((&a, m), pred)| {
                vec![
                    a.into(),
                    r.into(),
                    (dist(&m.causal, &pure.causal) / denom).into(),
                    pred.relative_distance.into(),
                    isotropic_reduction_ratio(a, lambda0, p.sigma_sq).into(),
                    (m.causal_norm() / fits.strict.causal_norm()).into(),
                    (m.spurious_norm() / fits.strict.spurious_norm()).into(),
                    pred.omega.into(),
                ]
            })
            .collect())
    })?;
    Ok(RunOutput::new(
        table,
        Some(PlotSpec {
            title: "causal distance to the pure solution vs strict fraction".into(),
            x: "alpha".into(),
            ys: vec!["relative_distance".into(), "predicted_relative_distance".into(), "r_th".into()],
            group: None,
            log_x: false,
        }),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NearTieParams {
    pub d: usize,
    pub rho: f64,
    pub causal_mean: f64,
    pub spurious_mean: f64,
    pub n: usize,
    pub beta: f64,
    pub tau_sq: f64,
    pub sigma_sq: f64,
    pub alphas: Vec<f64>,
    pub replicates: usize,
}

impl Default for NearTieParams {
    fn default() -> Self {
        Self {
            d: 5,
            rho: 0.5,
            causal_mean: 0.1,
            spurious_mean: 0.1,
            n: 20_000,
            beta: 0.3,
            tau_sq: 0.1,
            sigma_sq: 5.0,
            alphas: default_alphas(),
            replicates: 10,
        }
    }
}

pub const NEAR_TIE_COLUMNS: [&str; 7] = [
    "alpha",
    "seed",
    "spurious_ratio",
    "predicted_spurious_ratio",
    "causal_norm_ratio",
    "predicted_causal_norm_ratio",
    "causal_distance_ratio",
];

pub fn run_near_tie(p: &NearTieParams, seed: u64) -> Result<RunOutput> {
    check_alphas(&p.alphas)?;
    let law = correlated_law(p.d, p.rho, p.causal_mean, p.spurious_mean)?;
    let pop: BlockMoments = law.population_moments().expect("unlabeled law has closed-form moments");
    let tie = TieSpec::near(p.tau_sq, p.sigma_sq);
    debug_assert_eq!(tie.kind, TieKind::Near);
    let strict_lin = linearized_equilibrium(&pop, p.beta).at(|| "strict".into())?.theta_tilde;
    let predicted = p
        .alphas
        .iter()
        .map(|&a| {
            let m = mixed_equilibrium_general(&pop, &tie.second_moment(p.d, p.d), a, p.beta)
                .at(|| format!("alpha={a}"))?
                .theta_tilde;
            Ok((
                m.spurious_norm() / strict_lin.spurious_norm(),
                m.causal_norm() / strict_lin.causal_norm(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let teacher = unit_teacher(p.d);
    let cells: Vec<usize> = (0..p.replicates).collect();
    let mut table = ResultTable::new(&NEAR_TIE_COLUMNS);
    run_cells(&mut table, &cells, |&r| {
        let here = || format!("seed={r}");
        let strict = sample_strict_batch(&law, &teacher, p.n, seed, cell_stream(0, r)).at(here)?;
        let ties = sample_near_tie_batch(&tie, (p.d, p.d), p.n, seed, cell_stream(1, r)).at(here)?;
        let fits = fit_mixtures(&strict, &ties, &p.alphas, p.beta, &here)?;
        let pure = fit(&zero_spurious(&strict), p.beta, 0.0, f64::INFINITY).at(here)?.theta_tilde_hat;
        let denom = dist(&fits.strict.causal, &pure.causal);
        Ok(p.alphas
            .iter()
            .zip(&fits.mixed)
            .zip(&predicted)
            .map(|((&a, m), &(ps, pc))| {
                vec![
                    a.into(),
                    r.into(),
                    (m.spurious_norm() / fits.strict.spurious_norm()).into(),
                    ps.into(),
                    (norm(&m.causal) / norm(&fits.strict.causal)).into(),
                    pc.into(),
                    Cell::from(dist(&m.causal, &pure.causal) / denom),
                ]
            })
            .collect())
    })?;
    Ok(RunOutput::new(
        table,
        Some(PlotSpec {
            title: "near ties: spurious and causal ratios vs strict fraction".into(),
            x: "alpha".into(),
            ys: vec![
                "spurious_ratio".into(),
                "predicted_spurious_ratio".into(),
                "causal_norm_ratio".into(),
            ],
            group: None,
            log_x: false,
        }),
    ))
}
