//! Strict and tie pair construction over per-context corpora.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tielab::rng::{stream_rng, substream};

use crate::record::{generate_corpus, monotone_block, Context, CorrelationMode, HotelRecord};
use crate::{HotelError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    /// Hotels per context.
    pub corpus_size: usize,
    /// Distinct traveller contexts; each pair draws one.
    pub n_contexts: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            corpus_size: 10_000,
            n_contexts: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiePlan {
    /// Share of ties among all emitted pairs, `1 − α`.
    pub tie_fraction: f64,
    /// Probability a tie is informative rather than monotone.
    pub informative_prob: f64,
    /// Maximum `|u_norm(A) − u_norm(B)|` for a tie; strict pairs are at
    /// least this far apart.
    pub tau: f64,
}

impl Default for TiePlan {
    fn default() -> Self {
        Self {
            tie_fraction: 0.3,
            informative_prob: 1.0,
            tau: 0.05,
        }
    }
}

impl TiePlan {
    pub fn tie_count(&self, n_strict: usize) -> usize {
        (n_strict as f64 * self.tie_fraction / (1.0 - self.tie_fraction)).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tie_fraction) {
            return Err(HotelError::InvalidPlan(format!("tie fraction {} not in [0, 1)", self.tie_fraction)));
        }
        if !(0.0..=1.0).contains(&self.informative_prob) {
            return Err(HotelError::InvalidPlan(format!(
                "informative probability {} not in [0, 1]",
                self.informative_prob
            )));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(HotelError::InvalidPlan(format!("tau {} not in (0, 1)", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Strict,
    TieInformative,
    TieNoninformative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotelPair {
    pub context: Context,
    pub a: HotelRecord,
    pub b: HotelRecord,
    pub label: Label,
    pub kind: PairKind,
}

/// Draws allowed per requested pair before giving up.
pub const RETRY_CAP: usize = 1000;

/// Strict pairs labeled by utility, then ties with fair-coin labels, in a
/// seeded shuffled order.
pub fn generate_pairs(
    spec: &CorpusSpec,
    mode: CorrelationMode,
    n_strict: usize,
    plan: &TiePlan,
    seed: u64,
) -> Result<Vec<HotelPair>> {
    plan.validate()?;
    if spec.n_contexts == 0 {
        return Err(HotelError::InvalidPlan("need at least one context".into()));
    }
    let mut ctx_rng = stream_rng(seed, 0);
    let contexts: Vec<Context> = (0..spec.n_contexts).map(|_| Context::random(&mut ctx_rng)).collect();
    let corpora = contexts
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut h = generate_corpus(spec.corpus_size, c, mode, seed, substream(1, k as u64))?;
            h.sort_by(|x, y| x.u_norm.total_cmp(&y.u_norm));
            Ok(h)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = stream_rng(seed, 2);
    let mut out = Vec::new();
    for _ in 0..n_strict {
        let k = rng.random_range(0..contexts.len());
        let hotels = &corpora[k];
        let mut found = None;
        for _ in 0..RETRY_CAP {
            let i = rng.random_range(0..hotels.len());
            let j = rng.random_range(0..hotels.len());
            if (hotels[i].u_norm - hotels[j].u_norm).abs() >= plan.tau {
                found = Some((i, j));
                break;
            }
        }
        let (i, j) = found.ok_or(HotelError::QuotaUnmet {
            kind: "strict",
            requested: n_strict,
            filled: out.len(),
        })?;
        let (a, b) = (hotels[i].clone(), hotels[j].clone());
        let label = if a.u > b.u { Label::A } else { Label::B };
        out.push(HotelPair {
            context: contexts[k].clone(),
            a,
            b,
            label,
            kind: PairKind::Strict,
        });
    }

    let n_ties = plan.tie_count(n_strict);
    let (hi, lo) = (monotone_block(1.0), monotone_block(0.0));
    for t in 0..n_ties {
        let k = rng.random_range(0..contexts.len());
        let hotels = &corpora[k];
        let mut found = None;
        for _ in 0..RETRY_CAP {
            let i = rng.random_range(0..hotels.len());
            // neighbours within tau in the sorted corpus
            let u = hotels[i].u_norm;
            let start = hotels.partition_point(|h| h.u_norm <= u - plan.tau);
            let end = hotels.partition_point(|h| h.u_norm < u + plan.tau);
            if end - start < 2 {
                continue;
            }
            let mut j = rng.random_range(start..end - 1);
            if j >= i {
                j += 1;
            }
            if (hotels[j].u_norm - u).abs() < plan.tau {
                found = Some((i, j));
                break;
            }
        }
        let (i, j) = found.ok_or(HotelError::QuotaUnmet {
            kind: "tie",
            requested: n_ties,
            filled: t,
        })?;
        let (mut a, mut b) = (hotels[i].clone(), hotels[j].clone());
        let kind = if rng.random::<f64>() < plan.informative_prob {
            if rng.random::<bool>() {
                a.set_spurious(&hi);
                b.set_spurious(&lo);
            } else {
                a.set_spurious(&lo);
                b.set_spurious(&hi);
            }
            PairKind::TieInformative
        } else {
            a.set_spurious(&monotone_block(a.u_norm));
            b.set_spurious(&monotone_block(b.u_norm));
            PairKind::TieNoninformative
        };
        let label = if rng.random::<bool>() { Label::A } else { Label::B };
        out.push(HotelPair {
            context: contexts[k].clone(),
            a,
            b,
            label,
            kind,
        });
    }
    out.shuffle(&mut rng);
    Ok(out)
}
