//! JSONL emission: one attribute object per pair, or a templated prompt.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::pairs::{HotelPair, Label, PairKind};
use crate::record::HotelRecord;
use crate::{HotelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    TabularJsonl,
    TextJsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    pub prompt: String,
    pub label: Label,
    pub kind: PairKind,
}

fn describe(h: &HotelRecord) -> String {
    let amenities = if h.amenities.is_empty() {
        "none listed".to_string()
    } else {
        h.amenities.join(", ")
    };
    format!(
        "{} sits at {} {}. A night costs ${:.2}; it is {:.1} km from the destination and rated {} stars.\n\
         Amenities: {}.\n\
         Building: {} years old, renovated in {}, rooms from floor {}.\n\
         Chain tier: {}. Lobby: {} sq ft. Staff: {} employees.",
        h.name,
        h.street_number,
        h.street,
        h.price,
        h.distance,
        h.star_rating,
        amenities,
        h.building_age,
        h.renovation_year,
        h.floor_number,
        h.chain_tier.as_str(),
        h.lobby_size_sqft,
        h.employee_count,
    )
}

/// Prompt text for one pair. Utilities never appear.
pub fn render_text(pair: &HotelPair) -> String {
    format!(
        "A traveller is picking a hotel and cares about: {}.\n\n\
         --- Option A ---\n{}\n\n\
         --- Option B ---\n{}\n\n\
         --- Task ---\n\
         Reply with A or B to name the hotel that suits this traveller better.",
        pair.context.requested.join(", "),
        describe(&pair.a),
        describe(&pair.b),
    )
}

pub fn write_pairs<W: Write>(pairs: &[HotelPair], format: Format, mut out: W) -> Result<()> {
    if pairs.is_empty() {
        return Err(HotelError::InvalidPlan("nothing to render".into()));
    }
    for p in pairs {
        let line = match format {
            Format::TabularJsonl => serde_json::to_string(p)?,
            Format::TextJsonl => serde_json::to_string(&TextRecord {
                prompt: render_text(p),
                label: p.label,
                kind: p.kind,
            })?,
        };
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_tabular<R: BufRead>(input: R) -> Result<Vec<HotelPair>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
