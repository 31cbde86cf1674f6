//! Hotel preference pairs per correlation mode, with the rank correlation
//! signature of each mode measured on a fresh corpus.

use hotelgen::{correlation_signatures, generate_corpus, generate_pairs, write_pairs, Context, CorpusSpec, CorrelationMode, Format, Label, PairKind, TiePlan};
use serde::{Deserialize, Serialize};
use tielab::rng::{stream_rng, substream};

use crate::run::{cell_stream, RunOutput};
use crate::svg::PlotSpec;
use crate::table::{Cell, ResultTable};
use crate::{AtCell, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub modes: Vec<CorrelationMode>,
    pub n_strict: usize,
    pub corpus: CorpusSpec,
    pub plan: TiePlan,
    /// Hotels in the corpus used for the correlation signature.
    pub signature_size: usize,
    /// Attach the pair files as artifacts.
    pub emit_pairs: bool,
    pub replicates: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            modes: vec![CorrelationMode::Normal, CorrelationMode::Suppression, CorrelationMode::Adversarial],
            n_strict: 1000,
            corpus: CorpusSpec::default(),
            plan: TiePlan::default(),
            signature_size: 10_000,
            emit_pairs: true,
            replicates: 1,
        }
    }
}

pub const SIGNATURE_ATTRIBUTES: [&str; 7] = [
    "street_number",
    "floor_number",
    "building_age",
    "renovation_year",
    "chain_tier",
    "lobby_size_sqft",
    "employee_count",
];

pub fn columns() -> Vec<String> {
    let mut c: Vec<String> = ["mode", "mode_index", "seed", "n_pairs", "n_strict", "n_ties", "tie_a_rate", "strict_agreement"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    c.extend(SIGNATURE_ATTRIBUTES.iter().map(|a| format!("spearman_{a}")));
    c
}

pub fn mode_name(m: CorrelationMode) -> &'static str {
    match m {
        CorrelationMode::Normal => "normal",
        CorrelationMode::Suppression => "suppression",
        CorrelationMode::Adversarial => "adversarial",
    }
}

type CellOut = (Vec<Cell>, Vec<(String, Vec<u8>)>, f64);

pub fn run(p: &Params, seed: u64) -> Result<RunOutput> {
    let cells: Vec<(usize, usize)> = (0..p.modes.len()).flat_map(|g| (0..p.replicates).map(move |r| (g, r))).collect();
    let outs: Vec<CellOut> = {
        // artifacts ride alongside the rows, so collect them per cell
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|&(g, r)| -> Result<CellOut> {
                let t = std::time::Instant::now();
                let mode = p.modes[g];
                let name = mode_name(mode);
                let here = || format!("mode={name} seed={r}");
                let cell_seed = substream(seed, cell_stream(g, r));
                let pairs = generate_pairs(&p.corpus, mode, p.n_strict, &p.plan, cell_seed).at(here)?;
                let ties: Vec<_> = pairs.iter().filter(|q| q.kind != PairKind::Strict).collect();
                let n_ties = ties.len();
                let tie_a = ties.iter().filter(|q| q.label == Label::A).count();
                let strict: Vec<_> = pairs.iter().filter(|q| q.kind == PairKind::Strict).collect();
                let agree = strict
                    .iter()
                    .filter(|q| (q.label == Label::A) == (q.a.u > q.b.u))
                    .count();
                let ctx = Context::random(&mut stream_rng(cell_seed, 0x7369_67));
                let corpus = generate_corpus(p.signature_size, &ctx, mode, cell_seed, 0x7369_6701).at(here)?;
                let sig = correlation_signatures(&corpus);
                let mut row: Vec<Cell> = vec![
                    name.into(),
                    g.into(),
                    r.into(),
                    pairs.len().into(),
                    strict.len().into(),
                    n_ties.into(),
                    (if n_ties > 0 { tie_a as f64 / n_ties as f64 } else { f64::NAN }).into(),
                    (agree as f64 / strict.len().max(1) as f64).into(),
                ];
                row.extend(sig.iter().map(|(_, v)| Cell::from(*v)));
                let mut files = Vec::new();
                if p.emit_pairs {
                    for (fmt, tag) in [(Format::TabularJsonl, "tabular"), (Format::TextJsonl, "text")] {
                        let mut buf = Vec::new();
                        write_pairs(&pairs, fmt, &mut buf).at(here)?;
                        files.push((format!("hotel_{name}_r{r}_{tag}.jsonl"), buf));
                    }
                }
                Ok((row, files, t.elapsed().as_secs_f64()))
            })
            .collect::<Result<_>>()?
    };
    let cols = columns();
    let mut table = ResultTable::new(&cols.iter().map(String::as_str).collect::<Vec<_>>());
    let mut artifacts = Vec::new();
    for (row, files, secs) in outs {
        table.push(row, secs);
        artifacts.extend(files);
    }
    let mut out = RunOutput::new(
        table,
        Some(PlotSpec {
            title: "spurious rank correlations by mode".into(),
            x: "mode_index".into(),
            ys: SIGNATURE_ATTRIBUTES.iter().map(|a| format!("spearman_{a}")).collect(),
            group: None,
            log_x: false,
        }),
    );
    out.artifacts = artifacts;
    Ok(out)
}
