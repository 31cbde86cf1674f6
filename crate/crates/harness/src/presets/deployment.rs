//! Deployment suboptimality under an adversarial spurious shift, its
//! decomposition into shift and estimation terms, and the bound.

use serde::{Deserialize, Serialize};
use tielab::datagen::{sample_strict_batch, shifted_distribution, FeatureLawSpec, PreferenceBatch, Regime, Scenario, ShiftSpec, TeacherSpec};
use tielab::deployment::{bound_constants, deployment_bound, q_optimum, subopt_with_optimum, BoundInputs};
use tielab::moments::weighted_norm;
use tielab::rng::substream;
use tielab::BlockVector;

use super::fit;
use crate::run::{cell_stream, run_cells, RunOutput};
use crate::svg::PlotSpec;
use crate::table::{Cell, ResultTable};
use crate::{AtCell, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub dc: usize,
    pub ds: usize,
    /// Norm of the oriented spurious mean under P.
    pub spurious_mean_norm: f64,
    pub theta_causal: f64,
    pub beta: f64,
    pub ridge_lambda: f64,
    pub ball_radius: f64,
    pub delta: f64,
    pub ns: Vec<usize>,
    pub replicates: usize,
    /// Size of the P and Q samples standing in for the populations.
    pub reference_n: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            dc: 5,
            ds: 5,
            spurious_mean_norm: 0.75,
            theta_causal: 1.0,
            beta: 1.0,
            ridge_lambda: 1e-4,
            ball_radius: 1.0,
            delta: 0.05,
            ns: vec![200, 400, 1000, 2000, 5000, 10_000, 20_000, 50_000],
            replicates: 20,
            reference_n: 200_000,
        }
    }
}

pub const COLUMNS: [&str; 15] = [
    "n",
    "beta",
    "seed",
    "subopt_total",
    "shift",
    "estimation",
    "gamma_n",
    "bound",
    "g_q",
    "kappa_pi",
    "estimation_error_hp",
    "acc_p",
    "acc_q",
    "bound_holds",
    "spurious_norm",
];

fn accuracy(theta: &BlockVector, batch: &PreferenceBatch) -> f64 {
    let t = theta.to_vec();
    let hits = batch
        .rows()
        .filter(|r| r.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() > 0.0)
        .count();
    hits as f64 / batch.len() as f64
}

pub fn run(p: &Params, seed: u64) -> Result<RunOutput> {
    let here = || "reference".to_string();
    let mut law = FeatureLawSpec::isotropic(Regime::LabelCoupled, p.dc, p.ds, 1.0, 0.0);
    law.mean.spurious = vec![p.spurious_mean_norm / (p.ds as f64).sqrt(); p.ds];
    let q_law = shifted_distribution(&law, &ShiftSpec::of(Scenario::Adversarial)).at(here)?;
    let teacher = TeacherSpec {
        theta_dagger: BlockVector::new(vec![p.theta_causal; p.dc], vec![0.0; p.ds]).at(here)?,
        beta_teacher: 1.0,
    };
    let ref_stream = substream(cell_stream(usize::MAX, 0), 0x7265_66);
    let p_ref = sample_strict_batch(&law, &teacher, p.reference_n, seed, substream(ref_stream, 0)).at(here)?;
    let q_ref = sample_strict_batch(&q_law, &teacher, p.reference_n, seed, substream(ref_stream, 1)).at(here)?;
    let theta_train = fit(&p_ref, p.beta, 0.0, p.ball_radius).at(here)?.theta_tilde_hat;
    let theta_q = q_optimum(&q_ref, p.beta, p.ball_radius).at(here)?.theta_tilde_hat;
    let consts = bound_constants(&theta_train, &p_ref, &q_ref, p.beta, p.ridge_lambda).at(here)?;
    let d = p.dc + p.ds;

    let cells: Vec<(usize, usize)> = (0..p.ns.len()).flat_map(|g| (0..p.replicates).map(move |r| (g, r))).collect();
    let mut table = ResultTable::new(&COLUMNS);
    run_cells(&mut table, &cells, |&(g, r)| {
        let n = p.ns[g];
        let here = || format!("n={n} seed={r}");
        let batch = sample_strict_batch(&law, &teacher, n, seed, cell_stream(g, r)).at(here)?;
        let hat = fit(&batch, p.beta, p.ridge_lambda, p.ball_radius).at(here)?.theta_tilde_hat;
        let sub = subopt_with_optimum(&hat, &theta_train, &theta_q, &q_ref, p.beta).at(here)?;
        let inputs = BoundInputs::new(d, n, p.delta, p.beta, p.ball_radius, p.ridge_lambda, &consts);
        let bound = deployment_bound(&inputs, sub.shift_term).at(here)?;
        let err = weighted_norm(&hat.sub(&theta_train).to_vec(), &consts.h_p).at(here)?;
        Ok(vec![vec![
            n.into(),
            p.beta.into(),
            r.into(),
            sub.total.into(),
            sub.shift_term.into(),
            sub.estimation_term.into(),
            bound.gamma_n.into(),
            bound.bound.into(),
            consts.g_q.into(),
            consts.kappa_pi.into(),
            err.into(),
            accuracy(&hat, &p_ref).into(),
            accuracy(&hat, &q_ref).into(),
            Cell::from(sub.total <= bound.bound),
            hat.spurious_norm().into(),
        ]])
    })?;
    Ok(RunOutput::new(
        table,
        Some(PlotSpec {
            title: "deployment suboptimality vs n".into(),
            x: "n".into(),
            ys: vec!["subopt_total".into(), "shift".into(), "estimation".into()],
            group: None,
            log_x: true,
        }),
    ))
}
