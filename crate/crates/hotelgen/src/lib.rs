//! Synthetic hotel-preference benchmark: a latent utility over causal
//! attributes, seven spurious attributes whose link to utility is set by a
//! correlation mode, strict and tie pairs, and JSONL rendering.

pub mod pairs;
pub mod record;
pub mod render;

use thiserror::Error;

pub use pairs::{generate_pairs, CorpusSpec, HotelPair, Label, PairKind, TiePlan};
pub use record::{
    assign_spurious, generate_corpus, true_utility, CausalAttributes, ChainTier, Context, CorrelationMode,
    HotelRecord, SpuriousBlock,
};
pub use render::{read_tabular, render_text, write_pairs, Format, TextRecord};

#[derive(Debug, Error)]
pub enum HotelError {
    #[error("{field} = {value} is outside its range")]
    Range { field: &'static str, value: f64 },
    #[error("unknown amenity {0:?}")]
    UnknownAmenity(String),
    #[error("could only fill {filled} of {requested} {kind} pairs")]
    QuotaUnmet {
        kind: &'static str,
        requested: usize,
        filled: usize,
    },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HotelError>;

/// Spearman correlation of `u_norm` with each numeric spurious attribute.
pub fn correlation_signatures(hotels: &[HotelRecord]) -> Vec<(&'static str, f64)> {
    if hotels.is_empty() {
        return Vec::new();
    }
    let u: Vec<f64> = hotels.iter().map(|h| h.u_norm).collect();
    let blocks: Vec<_> = hotels.iter().map(|h| h.spurious().numeric()).collect();
    (0..7)
        .map(|k| {
            let col: Vec<f64> = blocks.iter().map(|b| b[k].1).collect();
            (blocks[0][k].0, tielab::stats::spearman(&u, &col))
        })
        .collect()
}
