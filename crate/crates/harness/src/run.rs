//! Preset execution and output emission.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use tielab::rng::substream;

use crate::config::{config_hash, merge, ExperimentConfig};
use crate::presets;
use crate::svg::{self, PlotSpec};
use crate::table::{Cell, Provenance, ResultTable};
use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Svg,
}

impl Format {
    pub fn parse_list(s: &str) -> Result<Vec<Format>> {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| match t.trim() {
                "csv" => Ok(Format::Csv),
                "svg" => Ok(Format::Svg),
                other => Err(HarnessError::Config(format!("unknown format {other:?}"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: ResultTable,
    pub plot: Option<PlotSpec>,
    /// Extra files `(name, bytes)` written next to the table.
    pub artifacts: Vec<(String, Vec<u8>)>,
    /// Preset defaults merged with the overrides, plus the seed.
    pub effective_config: Value,
}

impl RunOutput {
    pub fn new(table: ResultTable, plot: Option<PlotSpec>) -> Self {
        Self {
            table,
            plot,
            artifacts: Vec::new(),
            effective_config: Value::Null,
        }
    }
}

/// Stream id of replicate `rep` at grid point `grid`.
pub fn cell_stream(grid: usize, rep: usize) -> u64 {
    substream(substream(0x6c61_62, grid as u64), rep as u64)
}

/// Evaluate `cells` in parallel and gather their rows in input order. Each
/// row is charged an equal share of its cell's wall time.
pub fn run_cells<C, F>(table: &mut ResultTable, cells: &[C], f: F) -> Result<()>
where
    C: Sync,
    F: Fn(&C) -> Result<Vec<Vec<Cell>>> + Sync,
{
    let done: Vec<(Vec<Vec<Cell>>, f64)> = cells
        .par_iter()
        .map(|c| {
            let t = Instant::now();
            let rows = f(c)?;
            Ok((rows, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    for (rows, secs) in done {
        let share = secs / rows.len().max(1) as f64;
        for r in rows {
            table.push(r, share);
        }
    }
    Ok(())
}

/// Deserialize merged parameters and run a typed preset body.
pub(crate) fn typed<P: DeserializeOwned>(
    params: &Value,
    seed: u64,
    body: fn(&P, u64) -> Result<RunOutput>,
) -> Result<RunOutput> {
    let p: P = serde_json::from_value(params.clone()).map_err(|e| HarnessError::Config(e.to_string()))?;
    body(&p, seed)
}

pub(crate) fn defaults_of<P: Serialize + Default>() -> Value {
    serde_json::to_value(P::default()).expect("defaults serialize")
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let preset = presets::find(&cfg.preset)?;
    let mut params = (preset.defaults)();
    merge(&mut params, &cfg.overrides, "")?;
    if let Some(r) = cfg.replicates {
        if r == 0 {
            return Err(HarnessError::Config("replicates must be positive".into()));
        }
        params["replicates"] = json!(r);
    }
    let replicates = params["replicates"].as_u64().unwrap_or(1) as usize;
    let effective = json!({
        "preset": preset.name,
        "master_seed": cfg.master_seed,
        "params": params,
    });
    let mut out = (preset.run)(&params, cfg.master_seed)?;
    if out.table.is_empty() {
        return Err(HarnessError::EmptyTable);
    }
    out.table.provenance = Some(Provenance {
        preset: preset.name.to_string(),
        config_hash: config_hash(&effective),
        master_seed: cfg.master_seed,
        replicates,
    });
    out.effective_config = effective;
    Ok(out)
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.partial"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Write `<name>.csv` with its `<name>.config.json` sidecar and
/// `<name>.timing.csv`, `<name>.svg` when asked, and any artifacts.
/// Everything is rendered before the first file is created.
pub fn emit_outputs(out: &RunOutput, dir: &Path, name: &str, formats: &[Format]) -> Result<Vec<PathBuf>> {
    if out.table.is_empty() {
        return Err(HarnessError::EmptyTable);
    }
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    if formats.contains(&Format::Csv) {
        let mut csv = Vec::new();
        out.table.write_csv(&mut csv)?;
        files.push((format!("{name}.csv"), csv));
        let sidecar = json!({
            "config": out.effective_config,
            "provenance": out.table.provenance,
            "columns": out.table.columns,
            "rows": out.table.len(),
        });
        let mut text = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
        text.push(b'\n');
        files.push((format!("{name}.config.json"), text));
        let mut timing = Vec::new();
        out.table.write_timing_csv(&mut timing)?;
        files.push((format!("{name}.timing.csv"), timing));
    }
    if formats.contains(&Format::Svg) {
        if let Some(spec) = &out.plot {
            files.push((format!("{name}.svg"), svg::render(&out.table, spec)?.into_bytes()));
        }
    }
    files.extend(out.artifacts.iter().cloned());
    std::fs::create_dir_all(dir)?;
    files.iter().map(|(n, b)| write_atomic(dir, n, b)).collect()
}
