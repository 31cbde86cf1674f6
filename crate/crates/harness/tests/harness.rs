use lab_harness::config::{config_hash, merge};
use lab_harness::presets::{find, PRESETS};
use lab_harness::svg::{self, PlotSpec};
use lab_harness::{emit_outputs, run_experiment, Cell, ExperimentConfig, Format, HarnessError, ResultTable};
use serde_json::json;

fn small_table() -> ResultTable {
    let mut t = ResultTable::new(&["x", "group", "y"]);
    for (x, g, y) in [(1.0, "a", 0.5), (2.0, "a", 0.25), (1.0, "b", 0.1), (2.0, "b", 1.0 / 3.0), (2.0, "b", 0.3)] {
        t.push(vec![x.into(), g.into(), y.into()], 0.0);
    }
    t
}

#[test]
fn set_builds_nested_overrides() {
    let mut c = ExperimentConfig::new("tie_reduction");
    c.set("alphas=[0.5,1.0]").unwrap();
    c.set("a.b=3").unwrap();
    c.set("name=plain").unwrap();
    assert_eq!(c.overrides, json!({"alphas": [0.5, 1.0], "a": {"b": 3}, "name": "plain"}));
    assert!(matches!(c.set("novalue"), Err(HarnessError::Config(_))));
    assert!(matches!(c.set("a..b=1"), Err(HarnessError::Config(_))));
}

#[test]
fn merge_rejects_unknown_keys() {
    let mut base = json!({"n": 1, "inner": {"k": 2}});
    merge(&mut base, &json!({"inner": {"k": 5}}), "").unwrap();
    assert_eq!(base, json!({"n": 1, "inner": {"k": 5}}));
    let err = merge(&mut base, &json!({"inner": {"typo": 1}}), "").unwrap_err();
    assert!(matches!(err, HarnessError::Config(_)));
}

#[test]
fn config_hash_is_stable_and_sensitive() {
    let a = json!({"x": 1, "y": [1, 2]});
    assert_eq!(config_hash(&a), config_hash(&a.clone()));
    assert_ne!(config_hash(&a), config_hash(&json!({"x": 2, "y": [1, 2]})));
    assert_eq!(config_hash(&a).len(), 64);
}

#[test]
fn every_preset_has_defaults_with_replicates() {
    for p in PRESETS {
        let d = (p.defaults)();
        assert!(d["replicates"].as_u64().unwrap() >= 1, "{}", p.name);
    }
}

#[test]
fn unknown_preset_is_a_config_error() {
    let err = run_experiment(&ExperimentConfig::new("no_such_preset")).unwrap_err();
    assert!(matches!(err, HarnessError::UnknownPreset(_)));
    assert_eq!(err.exit_code(), 2);
    assert!(find("no_such_preset").is_err());
}

#[test]
fn bad_override_type_is_a_config_error() {
    let mut c = ExperimentConfig::new("tie_reduction");
    c.set("n=\"many\"").unwrap();
    let err = run_experiment(&c).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn numeric_failure_maps_to_exit_code_three() {
    let mut c = ExperimentConfig::new("tie_reduction");
    c.set("beta=-1").unwrap();
    c.set("replicates=1").unwrap();
    let err = run_experiment(&c).unwrap_err();
    assert!(matches!(err, HarnessError::Numeric { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn csv_round_trips_every_cell() {
    let mut t = small_table();
    t.push(vec![Cell::Float(f64::MIN_POSITIVE), "a".into(), Cell::Float(-1e300)], 0.0);
    t.push(vec![Cell::Int(-7), "with,comma".into(), Cell::Float(0.1 + 0.2)], 0.0);
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let back = ResultTable::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.columns, t.columns);
    assert_eq!(back.rows, t.rows);
}

#[test]
fn empty_table_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = lab_harness::RunOutput::new(ResultTable::new(&["x"]), None);
    let err = emit_outputs(&out, &out_dir, "empty", &[Format::Csv, Format::Svg]).unwrap_err();
    assert!(matches!(err, HarnessError::EmptyTable));
    assert!(!out_dir.exists());
    let mut buf = Vec::new();
    assert!(ResultTable::new(&["x"]).write_csv(&mut buf).is_err());
}

#[test]
fn svg_is_well_formed_with_one_line_per_series() {
    let t = small_table();
    let spec = PlotSpec {
        title: "a <b> & \"c\"".into(),
        x: "x".into(),
        ys: vec!["y".into()],
        group: Some("group".into()),
        log_x: false,
    };
    let text = svg::render(&t, &spec).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let lines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
    let bands = doc.descendants().filter(|n| n.has_tag_name("polygon")).count();
    assert_eq!(lines, 2);
    assert_eq!(bands, 2);
    assert!(doc.descendants().any(|n| n.text() == Some("a <b> & \"c\"")));
}

#[test]
fn summarize_reports_mean_and_sd() {
    let t = small_table();
    let spec = PlotSpec {
        title: String::new(),
        x: "x".into(),
        ys: vec!["y".into()],
        group: Some("group".into()),
        log_x: false,
    };
    let s = svg::summarize(&t, &spec).unwrap();
    let b = &s.iter().find(|(l, _)| l.contains("b")).unwrap().1;
    let (x, m, sd) = b[1];
    assert_eq!(x, 2.0);
    let mean = (1.0 / 3.0 + 0.3) / 2.0;
    assert!((m - mean).abs() < 1e-15);
    let var = ((1.0 / 3.0 - mean).powi(2) + (0.3 - mean).powi(2)) / 1.0;
    assert!((sd - var.sqrt()).abs() < 1e-15);
}

#[test]
fn tie_reduction_emits_one_row_per_alpha_and_seed() {
    let out = run_experiment(&ExperimentConfig::new("tie_reduction")).unwrap();
    assert_eq!(out.table.len(), 180);
    assert_eq!(out.table.wall_seconds.len(), 180);
    let prov = out.table.provenance.as_ref().unwrap();
    assert_eq!((prov.preset.as_str(), prov.replicates), ("tie_reduction", 30));
}

#[test]
fn emitted_files_carry_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::new("rlhf_greedy");
    c.set("ns=[300]").unwrap();
    c.replicates = Some(2);
    c.master_seed = 9;
    let out = run_experiment(&c).unwrap();
    let files = emit_outputs(&out, dir.path(), "rlhf", &[Format::Csv, Format::Svg]).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for n in ["rlhf.csv", "rlhf.config.json", "rlhf.timing.csv", "rlhf.svg"] {
        assert!(names.contains(&n.to_string()), "{n}");
    }
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rlhf.config.json")).unwrap()).unwrap();
    assert_eq!(side["config"]["params"]["ns"], json!([300]));
    assert_eq!(side["config"]["params"]["replicates"], json!(2));
    assert_eq!(side["config"]["master_seed"], json!(9));
    assert_eq!(side["rows"], json!(4));
    assert!(!std::fs::read_dir(dir.path()).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().ends_with(".partial")));
}

#[test]
fn format_list_parsing() {
    assert_eq!(Format::parse_list("csv,svg").unwrap(), vec![Format::Csv, Format::Svg]);
    assert_eq!(Format::parse_list("svg").unwrap(), vec![Format::Svg]);
    assert!(Format::parse_list("png").is_err());
}
