//! Hotel attributes, the latent utility and spurious-attribute assignment.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tielab::rng::{stream_rng, substream, LabRng};

use crate::{HotelError, Result};

pub const PRICE_RANGE: (f64, f64) = (40.0, 600.0);
pub const DISTANCE_RANGE: (f64, f64) = (0.1, 25.0);
pub const STAR_RANGE: (u8, u8) = (1, 5);
pub const STREET_NUMBER_RANGE: (u32, u32) = (100, 9999);
pub const FLOOR_RANGE: (u32, u32) = (1, 20);
pub const BUILDING_AGE_RANGE: (u32, u32) = (1, 50);
pub const RENOVATION_RANGE: (u32, u32) = (2000, 2024);
pub const LOBBY_RANGE: (u32, u32) = (500, 5000);
pub const EMPLOYEE_RANGE: (u32, u32) = (10, 200);

/// Utility weights on the normalized price, distance, stars and amenity match.
pub const UTILITY_WEIGHTS: [f64; 4] = [-1.0, -0.5, 0.8, 0.4];

pub const AMENITIES: [&str; 8] = [
    "wifi",
    "pool",
    "gym",
    "spa",
    "parking",
    "breakfast",
    "pet friendly",
    "airport shuttle",
];

const BRANDS: [&str; 10] = [
    "Harbor", "Summit", "Maple", "Crown", "Lakeside", "Riverside", "Grand", "Cedar", "Union", "Meridian",
];
const SUFFIXES: [&str; 6] = ["Inn", "Suites", "Hotel", "Lodge", "Residences", "House"];
const STREETS: [&str; 8] = [
    "Main St", "Oak Ave", "Market St", "Park Blvd", "Elm St", "Bay Rd", "Hill St", "Station Sq",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChainTier {
    Budget,
    Standard,
    Premium,
}

impl ChainTier {
    pub fn as_str(self) -> &'static str {
        match self {
            ChainTier::Budget => "Budget",
            ChainTier::Standard => "Standard",
            ChainTier::Premium => "Premium",
        }
    }

    pub fn rank(self) -> u32 {
        self as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    Normal,
    Suppression,
    Adversarial,
}

/// The amenities a traveller asks for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub requested: Vec<String>,
}

impl Context {
    pub fn random(rng: &mut LabRng) -> Self {
        let k = rng.random_range(1..=3);
        let mut requested: Vec<String> = AMENITIES.choose_multiple(rng, k).map(|s| s.to_string()).collect();
        requested.sort();
        Self { requested }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalAttributes {
    pub price: f64,
    pub distance: f64,
    pub star_rating: u8,
    pub amenities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpuriousBlock {
    pub street_number: u32,
    pub floor_number: u32,
    pub building_age: u32,
    pub renovation_year: u32,
    pub chain_tier: ChainTier,
    pub lobby_size_sqft: u32,
    pub employee_count: u32,
}

impl SpuriousBlock {
    /// Numeric attributes by name, with the chain tier as its rank.
    pub fn numeric(&self) -> [(&'static str, f64); 7] {
        [
            ("street_number", self.street_number as f64),
            ("floor_number", self.floor_number as f64),
            ("building_age", self.building_age as f64),
            ("renovation_year", self.renovation_year as f64),
            ("chain_tier", self.chain_tier.rank() as f64),
            ("lobby_size_sqft", self.lobby_size_sqft as f64),
            ("employee_count", self.employee_count as f64),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotelRecord {
    pub name: String,
    pub street: String,
    pub price: f64,
    pub distance: f64,
    pub star_rating: u8,
    pub amenities: Vec<String>,
    pub street_number: u32,
    pub floor_number: u32,
    pub building_age: u32,
    pub renovation_year: u32,
    pub chain_tier: ChainTier,
    pub lobby_size_sqft: u32,
    pub employee_count: u32,
    pub u: f64,
    pub u_norm: f64,
}

impl HotelRecord {
    pub fn causal(&self) -> CausalAttributes {
        CausalAttributes {
            price: self.price,
            distance: self.distance,
            star_rating: self.star_rating,
            amenities: self.amenities.clone(),
        }
    }

    pub fn spurious(&self) -> SpuriousBlock {
        SpuriousBlock {
            street_number: self.street_number,
            floor_number: self.floor_number,
            building_age: self.building_age,
            renovation_year: self.renovation_year,
            chain_tier: self.chain_tier,
            lobby_size_sqft: self.lobby_size_sqft,
            employee_count: self.employee_count,
        }
    }

    pub fn set_spurious(&mut self, s: &SpuriousBlock) {
        self.street_number = s.street_number;
        self.floor_number = s.floor_number;
        self.building_age = s.building_age;
        self.renovation_year = s.renovation_year;
        self.chain_tier = s.chain_tier;
        self.lobby_size_sqft = s.lobby_size_sqft;
        self.employee_count = s.employee_count;
    }
}

fn check(field: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(HotelError::Range { field, value })
    }
}

fn unit(v: f64, (lo, hi): (f64, f64)) -> f64 {
    (v - lo) / (hi - lo)
}

/// Weighted sum of range-normalized price, distance, stars and the fraction
/// of requested amenities the hotel offers.
pub fn true_utility(attrs: &CausalAttributes, context: &Context) -> Result<f64> {
    check("price", attrs.price, PRICE_RANGE.0, PRICE_RANGE.1)?;
    check("distance", attrs.distance, DISTANCE_RANGE.0, DISTANCE_RANGE.1)?;
    let stars = attrs.star_rating as f64;
    check("star_rating", stars, STAR_RANGE.0 as f64, STAR_RANGE.1 as f64)?;
    for a in &attrs.amenities {
        if !AMENITIES.contains(&a.as_str()) {
            return Err(HotelError::UnknownAmenity(a.clone()));
        }
    }
    let matched = if context.requested.is_empty() {
        0.0
    } else {
        context.requested.iter().filter(|r| attrs.amenities.contains(r)).count() as f64
            / context.requested.len() as f64
    };
    let [wp, wd, ws, wa] = UTILITY_WEIGHTS;
    Ok(wp * unit(attrs.price, PRICE_RANGE)
        + wd * unit(attrs.distance, DISTANCE_RANGE)
        + ws * unit(stars, (STAR_RANGE.0 as f64, STAR_RANGE.1 as f64))
        + wa * matched)
}

fn affine((lo, hi): (u32, u32), v: f64) -> u32 {
    (lo as f64 + v * (hi - lo) as f64).round() as u32
}

fn tier(v: f64) -> ChainTier {
    if v < 1.0 / 3.0 {
        ChainTier::Budget
    } else if v < 2.0 / 3.0 {
        ChainTier::Standard
    } else {
        ChainTier::Premium
    }
}

/// Monotone assignment at level `v ∈ [0, 1]`: higher is better on every
/// attribute, so building age decreases.
pub fn monotone_block(v: f64) -> SpuriousBlock {
    let v = v.clamp(0.0, 1.0);
    SpuriousBlock {
        street_number: affine(STREET_NUMBER_RANGE, v),
        floor_number: affine(FLOOR_RANGE, v),
        building_age: affine(BUILDING_AGE_RANGE, 1.0 - v),
        renovation_year: affine(RENOVATION_RANGE, v),
        chain_tier: tier(v),
        lobby_size_sqft: affine(LOBBY_RANGE, v),
        employee_count: affine(EMPLOYEE_RANGE, v),
    }
}

pub fn assign_spurious(u_norm: f64, mode: CorrelationMode, seed: u64, stream: u64) -> SpuriousBlock {
    match mode {
        CorrelationMode::Normal => monotone_block(u_norm),
        CorrelationMode::Adversarial => monotone_block(1.0 - u_norm),
        CorrelationMode::Suppression => {
            let mut rng = stream_rng(seed, stream);
            let mut draw = |(lo, hi): (u32, u32)| rng.random_range(lo..=hi);
            SpuriousBlock {
                street_number: draw(STREET_NUMBER_RANGE),
                floor_number: draw(FLOOR_RANGE),
                building_age: draw(BUILDING_AGE_RANGE),
                renovation_year: draw(RENOVATION_RANGE),
                chain_tier: [ChainTier::Budget, ChainTier::Standard, ChainTier::Premium][draw((0, 2)) as usize],
                lobby_size_sqft: draw(LOBBY_RANGE),
                employee_count: draw(EMPLOYEE_RANGE),
            }
        }
    }
}

fn causal_draw(rng: &mut LabRng) -> (String, String, CausalAttributes) {
    let name = format!("{} {}", BRANDS.choose(rng).unwrap(), SUFFIXES.choose(rng).unwrap());
    let street = STREETS.choose(rng).unwrap().to_string();
    let price = (rng.random_range(PRICE_RANGE.0..=PRICE_RANGE.1) * 100.0).round() / 100.0;
    let distance = (rng.random_range(DISTANCE_RANGE.0..=DISTANCE_RANGE.1) * 10.0).round() / 10.0;
    let star_rating = rng.random_range(STAR_RANGE.0..=STAR_RANGE.1);
    let amenities = AMENITIES
        .iter()
        .filter(|_| rng.random::<f64>() < 0.4)
        .map(|s| s.to_string())
        .collect();
    (
        name,
        street,
        CausalAttributes {
            price,
            distance,
            star_rating,
            amenities,
        },
    )
}

/// `n` hotels scored under one context, utilities min-max normalized over
/// the corpus and spurious blocks assigned by `mode`. Hotel `i` draws from
/// its own stream.
pub fn generate_corpus(
    n: usize,
    context: &Context,
    mode: CorrelationMode,
    seed: u64,
    stream: u64,
) -> Result<Vec<HotelRecord>> {
    if n < 2 {
        return Err(HotelError::InvalidPlan("corpus needs at least two hotels".into()));
    }
    let mut draws = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(seed, substream(stream, i as u64));
        let (name, street, attrs) = causal_draw(&mut rng);
        let u = true_utility(&attrs, context)?;
        draws.push((name, street, attrs, u));
    }
    let lo = draws.iter().map(|d| d.3).fold(f64::INFINITY, f64::min);
    let hi = draws.iter().map(|d| d.3).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    Ok(draws
        .into_iter()
        .enumerate()
        .map(|(i, (name, street, a, u))| {
            let u_norm = (u - lo) / span;
            let s = assign_spurious(u_norm, mode, seed, substream(substream(stream, i as u64), 1));
            let mut h = HotelRecord {
                name,
                street,
                price: a.price,
                distance: a.distance,
                star_rating: a.star_rating,
                amenities: a.amenities,
                street_number: 0,
                floor_number: 0,
                building_age: 0,
                renovation_year: 0,
                chain_tier: ChainTier::Budget,
                lobby_size_sqft: 0,
                employee_count: 0,
                u,
                u_norm,
            };
            h.set_spurious(&s);
            h
        })
        .collect())
}
