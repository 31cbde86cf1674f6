//! Learned spurious norm against the linearized and curvature-corrected
//! closed forms on one strict batch per replicate.

use serde::{Deserialize, Serialize};
use tielab::datagen::{sample_strict_batch, FeatureLawSpec, Regime, TeacherSpec};
use tielab::equilibrium::{curvature_correction, linearized_equilibrium};
use tielab::trainer::local_regime_margin;
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
    pub n: usize,
    pub theta_causal: f64,
    pub theta_spurious: f64,
    pub betas: Vec<f64>,
    pub replicates: usize,
    pub margin_subsample: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            dc: 5,
            ds: 5,
            n: 100_000,
            theta_causal: 0.8,
            theta_spurious: 0.6,
            betas: vec![0.01, 0.1, 1.0],
            replicates: 1,
            margin_subsample: 1000,
        }
    }
}

pub const COLUMNS: [&str; 10] = [
    "beta",
    "replicate",
    "empirical_spurious_norm",
    "linear_spurious_norm",
    "corrected_spurious_norm",
    "zeta",
    "rel_err_linear",
    "rel_err_corrected",
    "max_margin",
    "iterations",
];

pub fn run(p: &Params, seed: u64) -> Result<RunOutput> {
    let law = FeatureLawSpec::isotropic(Regime::BtFull, p.dc, p.ds, 1.0, 0.0);
    let teacher = TeacherSpec {
        theta_dagger: BlockVector::new(vec![p.theta_causal; p.dc], vec![p.theta_spurious; p.ds]).at(|| "teacher".into())?,
        beta_teacher: 1.0,
    };
    let cells: Vec<(f64, usize)> = p.betas.iter().flat_map(|&b| (0..p.replicates).map(move |r| (b, r))).collect();
    let mut table = ResultTable::new(&COLUMNS);
    run_cells(&mut table, &cells, |&(beta, r)| {
        let here = || format!("beta={beta} replicate={r}");
        // the data do not depend on beta, so every beta sees the same batch
        let batch = sample_strict_batch(&law, &teacher, p.n, seed, cell_stream(0, r)).at(here)?;
        let lin = linearized_equilibrium(&batch.moments().at(here)?, beta).at(here)?.theta_tilde;
        let fitted = fit(&batch, beta, 0.0, f64::INFINITY).at(here)?;
        let (curv, corrected) = curvature_correction(&lin, &fitted.theta_tilde_hat, &batch, beta).at(here)?;
        let margin = local_regime_margin(&fitted.theta_tilde_hat, &batch.prefix(p.margin_subsample), beta).at(here)?;
        let emp = fitted.theta_tilde_hat.spurious_norm();
        let (l, c) = (lin.spurious_norm(), corrected.spurious_norm());
        Ok(vec![vec![
            beta.into(),
            r.into(),
            emp.into(),
            l.into(),
            c.into(),
            curv.zeta.into(),
            ((l - emp).abs() / emp).into(),
            ((c - emp).abs() / emp).into(),
            margin.into(),
            Cell::from(fitted.iterations),
        ]])
    })?;
    Ok(RunOutput::new(
        table,
        Some(PlotSpec {
            title: "spurious norm vs beta".into(),
            x: "beta".into(),
            ys: vec![
                "empirical_spurious_norm".into(),
                "linear_spurious_norm".into(),
                "corrected_spurious_norm".into(),
            ],
            group: None,
            log_x: true,
        }),
    ))
}
