use hotelgen::record::monotone_block;
use hotelgen::*;
use proptest::prelude::*;

fn ctx(items: &[&str]) -> Context {
    Context {
        requested: items.iter().map(|s| s.to_string()).collect(),
    }
}

fn attrs(price: f64, distance: f64, stars: u8, amenities: &[&str]) -> CausalAttributes {
    CausalAttributes {
        price,
        distance,
        star_rating: stars,
        amenities: amenities.iter().map(|s| s.to_string()).collect(),
    }
}

proptest! {
    #[test]
    fn utility_is_monotone_in_each_causal_attribute(
        price in 40.0f64..599.0,
        distance in 0.1f64..24.0,
        stars in 1u8..5,
        dp in 0.01f64..1.0,
    ) {
        let c = ctx(&["wifi", "pool"]);
        let base = true_utility(&attrs(price, distance, stars, &["gym"]), &c).unwrap();
        prop_assert!(true_utility(&attrs(price + dp, distance, stars, &["gym"]), &c).unwrap() < base);
        prop_assert!(true_utility(&attrs(price, distance + dp, stars, &["gym"]), &c).unwrap() < base);
        prop_assert!(true_utility(&attrs(price, distance, stars + 1, &["gym"]), &c).unwrap() > base);
        prop_assert!(true_utility(&attrs(price, distance, stars, &["gym", "wifi"]), &c).unwrap() > base);
    }

    #[test]
    fn monotone_blocks_stay_in_range_and_order(v in 0.0f64..1.0, w in 0.0f64..1.0) {
        let (lo, hi) = if v <= w { (v, w) } else { (w, v) };
        let (a, b) = (monotone_block(lo), monotone_block(hi));
        prop_assert!(a.lobby_size_sqft <= b.lobby_size_sqft);
        prop_assert!(a.employee_count <= b.employee_count);
        prop_assert!(a.building_age >= b.building_age);
        prop_assert!(a.chain_tier <= b.chain_tier);
        prop_assert!((100..=9999).contains(&b.street_number) && (1..=20).contains(&b.floor_number));
        prop_assert!((2000..=2024).contains(&b.renovation_year) && (1..=50).contains(&a.building_age));
    }
}

#[test]
fn identical_records_have_equal_utility() {
    let c = ctx(&["spa"]);
    let a = attrs(120.0, 3.0, 4, &["spa"]);
    assert_eq!(true_utility(&a, &c).unwrap(), true_utility(&a.clone(), &c).unwrap());
}

#[test]
fn out_of_range_attributes_are_rejected() {
    let c = ctx(&["spa"]);
    assert!(matches!(
        true_utility(&attrs(10.0, 3.0, 4, &[]), &c),
        Err(HotelError::Range { field: "price", .. })
    ));
    assert!(matches!(
        true_utility(&attrs(100.0, 3.0, 9, &[]), &c),
        Err(HotelError::Range { field: "star_rating", .. })
    ));
    assert!(matches!(
        true_utility(&attrs(100.0, 3.0, 3, &["sauna"]), &c),
        Err(HotelError::UnknownAmenity(_))
    ));
}

#[test]
fn corpus_utility_is_min_max_normalized() {
    let h = generate_corpus(10_000, &ctx(&["wifi"]), CorrelationMode::Normal, 3, 0).unwrap();
    let lo = h.iter().map(|x| x.u_norm).fold(f64::INFINITY, f64::min);
    let hi = h.iter().map(|x| x.u_norm).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!((lo, hi), (0.0, 1.0));
}

#[test]
fn assignment_endpoints() {
    let top = assign_spurious(1.0, CorrelationMode::Normal, 0, 0);
    assert_eq!(top.chain_tier, ChainTier::Premium);
    assert_eq!(top.lobby_size_sqft, 5000);
    assert_eq!(top.employee_count, 200);
    assert_eq!(top.building_age, 1);
    assert_eq!(assign_spurious(1.0, CorrelationMode::Adversarial, 0, 0), assign_spurious(0.0, CorrelationMode::Normal, 0, 0));
    let bottom = assign_spurious(0.0, CorrelationMode::Normal, 0, 0);
    assert_eq!((bottom.chain_tier, bottom.lobby_size_sqft, bottom.building_age), (ChainTier::Budget, 500, 50));
}

fn signature(mode: CorrelationMode, name: &str) -> f64 {
    let h = generate_corpus(10_000, &ctx(&["pool", "gym"]), mode, 11, 0).unwrap();
    correlation_signatures(&h).into_iter().find(|(n, _)| *n == name).unwrap().1
}

#[test]
fn mode_signatures() {
    assert!(signature(CorrelationMode::Normal, "lobby_size_sqft") >= 0.9);
    assert!(signature(CorrelationMode::Adversarial, "lobby_size_sqft") <= -0.9);
    assert!(signature(CorrelationMode::Normal, "building_age") <= -0.9);
    assert!(signature(CorrelationMode::Adversarial, "building_age") >= 0.9);
    let h = generate_corpus(10_000, &ctx(&["pool", "gym"]), CorrelationMode::Suppression, 11, 0).unwrap();
    for (name, r) in correlation_signatures(&h) {
        assert!(r.abs() <= 0.05, "{name} {r}");
    }
}

#[test]
fn strict_labels_follow_utility_and_ties_are_close() {
    let plan = TiePlan {
        tie_fraction: 0.3,
        informative_prob: 0.5,
        tau: 0.05,
    };
    let spec = CorpusSpec {
        corpus_size: 2000,
        n_contexts: 3,
    };
    let pairs = generate_pairs(&spec, CorrelationMode::Normal, 700, &plan, 4).unwrap();
    assert_eq!(pairs.len(), 1000);
    let (hi, lo) = (monotone_block(1.0), monotone_block(0.0));
    for p in &pairs {
        let gap = (p.a.u_norm - p.b.u_norm).abs();
        match p.kind {
            PairKind::Strict => {
                assert!(gap >= plan.tau);
                assert_eq!(p.label, if p.a.u > p.b.u { Label::A } else { Label::B });
            }
            PairKind::TieInformative => {
                assert!(gap < plan.tau);
                let (sa, sb) = (p.a.spurious(), p.b.spurious());
                assert!((sa == hi && sb == lo) || (sa == lo && sb == hi));
            }
            PairKind::TieNoninformative => {
                assert!(gap < plan.tau);
                assert_eq!(p.a.spurious(), monotone_block(p.a.u_norm));
            }
        }
    }
}

#[test]
fn tie_labels_are_fair() {
    let plan = TiePlan {
        tie_fraction: 0.5,
        informative_prob: 1.0,
        tau: 0.05,
    };
    let spec = CorpusSpec {
        corpus_size: 3000,
        n_contexts: 2,
    };
    let pairs = generate_pairs(&spec, CorrelationMode::Normal, 10_000, &plan, 8).unwrap();
    let ties: Vec<_> = pairs.iter().filter(|p| p.kind != PairKind::Strict).collect();
    assert_eq!(ties.len(), 10_000);
    let rate = ties.iter().filter(|p| p.label == Label::A).count() as f64 / ties.len() as f64;
    assert!((rate - 0.5).abs() <= 0.015, "{rate}");
}

#[test]
fn impossible_tie_quota_is_reported() {
    let plan = TiePlan {
        tie_fraction: 0.5,
        informative_prob: 1.0,
        tau: 1e-12,
    };
    let spec = CorpusSpec {
        corpus_size: 2,
        n_contexts: 1,
    };
    let r = generate_pairs(&spec, CorrelationMode::Normal, 1, &plan, 0);
    assert!(matches!(r, Err(HotelError::QuotaUnmet { kind: "tie", .. })));
}

#[test]
fn generation_is_deterministic() {
    let spec = CorpusSpec {
        corpus_size: 500,
        n_contexts: 2,
    };
    let a = generate_pairs(&spec, CorrelationMode::Adversarial, 50, &TiePlan::default(), 6).unwrap();
    let b = generate_pairs(&spec, CorrelationMode::Adversarial, 50, &TiePlan::default(), 6).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tabular_round_trip_and_text_markers() {
    let spec = CorpusSpec {
        corpus_size: 500,
        n_contexts: 2,
    };
    let pairs = generate_pairs(&spec, CorrelationMode::Normal, 40, &TiePlan::default(), 2).unwrap();
    let mut buf = Vec::new();
    write_pairs(&pairs, Format::TabularJsonl, &mut buf).unwrap();
    assert_eq!(read_tabular(buf.as_slice()).unwrap(), pairs);

    let mut text = Vec::new();
    write_pairs(&pairs, Format::TextJsonl, &mut text).unwrap();
    for line in String::from_utf8(text).unwrap().lines() {
        let r: TextRecord = serde_json::from_str(line).unwrap();
        for marker in ["--- Option A ---", "--- Option B ---", "--- Task ---"] {
            assert!(r.prompt.contains(marker));
        }
        assert!(!line.contains("u_norm") && !line.contains("\"u\""));
    }
    assert!(write_pairs(&[], Format::TextJsonl, Vec::new()).is_err());
}

#[test]
fn empty_amenities_render_cleanly() {
    let spec = CorpusSpec {
        corpus_size: 50,
        n_contexts: 1,
    };
    let mut p = generate_pairs(&spec, CorrelationMode::Normal, 1, &TiePlan::default(), 1).unwrap()[0].clone();
    p.a.amenities.clear();
    p.b.amenities = vec!["wifi".into(), "spa".into()];
    let text = render_text(&p);
    assert!(text.contains("Amenities: none listed."));
    assert!(text.contains("Amenities: wifi, spa."));
    assert!(!text.contains(", ."));
    assert!(!text.contains(": ,"));
}
