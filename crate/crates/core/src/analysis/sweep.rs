//! Accuracy over a grid of (layer, h, r) cells with an append-only ledger, so
//! an interrupted sweep resumes where it stopped.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{csv_writer, finish, fmt_float};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::hybrid::{build_hybrid, evaluate};
use crate::koopman::{collect_trajectories, fit_dmd, hankelize, RankPolicy, TrajectoryBatch};
use crate::linalg::RealMatrix;
use crate::scaling::ScaledNetwork;

pub const DEFAULT_SWEEP_H: [usize; 4] = [1, 2, 5, 10];
pub const DEFAULT_SWEEP_R: [usize; 3] = [10, 50, 500];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub dataset: String,
    pub layers: Vec<usize>,
    #[serde(default = "default_h")]
    pub h: Vec<usize>,
    #[serde(default = "default_r")]
    pub r: Vec<usize>,
    #[serde(default)]
    pub rank: RankPolicy,
    #[serde(default)]
    pub clamp_relu: bool,
}

fn default_h() -> Vec<usize> {
    DEFAULT_SWEEP_H.to_vec()
}

fn default_r() -> Vec<usize> {
    DEFAULT_SWEEP_R.to_vec()
}

impl SweepSpec {
    /// Cells in evaluation order: layer, then r, then h.
    pub fn cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for &layer in &self.layers {
            for &r in &self.r {
                for &h in &self.h {
                    out.push((layer, h, r));
                }
            }
        }
        out
    }
}

/// One ledger line. `accuracy` is absent for skipped cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCell {
    pub layer: usize,
    pub h: usize,
    pub r: usize,
    pub accuracy: Option<f64>,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// The deterministic part of a cell, as written to the result tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub layer: usize,
    pub h: usize,
    pub r: usize,
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl From<&SweepCell> for SweepRow {
    fn from(c: &SweepCell) -> Self {
        SweepRow {
            layer: c.layer,
            h: c.h,
            r: c.r,
            accuracy: c.accuracy,
            skipped: c.skipped.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    /// Every cell of the grid, in grid order.
    pub cells: Vec<SweepCell>,
    /// Cells computed (or skipped) during this call.
    pub evaluated: usize,
    /// Cells taken from the ledger.
    pub reused: usize,
}

impl SweepOutcome {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells.iter().map(SweepRow::from).collect()
    }

    pub fn accuracy(&self, layer: usize, h: usize, r: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| (c.layer, c.h, c.r) == (layer, h, r))
            .and_then(|c| c.accuracy)
    }
}

/// Reads a JSON-lines ledger. A final line without its newline is a write
/// cut short and is ignored; any other malformed line is an error.
pub fn read_ledger(path: &Path) -> Result<Vec<SweepCell>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut cells = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SweepCell>(line) {
            Ok(c) => cells.push(c),
            Err(_) if i + 1 == lines.len() && !complete => break,
            Err(e) => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    detail: format!("line {}: {e}", i + 1),
                })
            }
        }
    }
    Ok(cells)
}

fn append(path: &Path, cell: &SweepCell) -> Result<()> {
    let mut line = serde_json::to_string(cell)?;
    line.push('\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    // One write per line keeps each append whole.
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}

/// Evaluates every cell of `spec` not already in the ledger. Trajectories come
/// from the first r rows of `train_inputs`; accuracy is measured on `test`.
/// Cells with h > k or r beyond the available samples, and fits that fail on
/// degenerate data, are recorded as skipped.
pub fn run_sweep(
    spec: &SweepSpec,
    scaled: &[ScaledNetwork],
    train_inputs: &RealMatrix,
    test: &LabeledDataset,
    ledger: &Path,
) -> Result<SweepOutcome> {
    let mut by_layer = HashMap::new();
    for s in scaled {
        by_layer.insert(s.target_index, s);
    }
    for layer in &spec.layers {
        if !by_layer.contains_key(layer) {
            return Err(Error::Config(format!("no scaled network for layer {layer}")));
        }
    }
    if let Some(dir) = ledger.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut done: BTreeMap<(usize, usize, usize), SweepCell> = BTreeMap::new();
    for c in read_ledger(ledger)? {
        done.insert((c.layer, c.h, c.r), c);
    }

    let mut trajectories: HashMap<(usize, usize), TrajectoryBatch> = HashMap::new();
    let (mut evaluated, mut reused) = (0, 0);
    let mut cells = Vec::new();
    for (layer, h, r) in spec.cells() {
        if let Some(c) = done.get(&(layer, h, r)) {
            reused += 1;
            cells.push(c.clone());
            continue;
        }
        let net = by_layer[&layer];
        let start = Instant::now();
        let outcome = if h > net.k() {
            Err(format!("h = {h} exceeds k = {}", net.k()))
        } else if r > train_inputs.rows() {
            Err(format!("r = {r} exceeds the {} available samples", train_inputs.rows()))
        } else {
            let batch = match trajectories.entry((layer, r)) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(collect_trajectories(net, train_inputs, r)?)
                }
            };
            match cell_accuracy(net, batch, h, spec, test) {
                Ok(a) => Ok(a),
                Err(e @ (Error::Degenerate(_) | Error::NoConvergence { .. })) => Err(e.to_string()),
                Err(e) => return Err(e),
            }
        };
        let cell = SweepCell {
            layer,
            h,
            r,
            accuracy: outcome.as_ref().ok().copied(),
            wall_ms: start.elapsed().as_millis() as u64,
            skipped: outcome.err(),
        };
        append(ledger, &cell)?;
        evaluated += 1;
        cells.push(cell);
    }
    Ok(SweepOutcome {
        cells,
        evaluated,
        reused,
    })
}

fn cell_accuracy(
    net: &ScaledNetwork,
    batch: &TrajectoryBatch,
    h: usize,
    spec: &SweepSpec,
    test: &LabeledDataset,
) -> Result<f64> {
    let dmd = fit_dmd(&hankelize(batch, h)?, spec.rank)?;
    let hybrid = build_hybrid(net, &dmd, spec.clamp_relu)?;
    Ok(evaluate(&hybrid, test)?.accuracy)
}

/// Columns `layer,h,r,accuracy`; skipped cells leave accuracy empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(["layer", "h", "r", "accuracy"])?;
    for row in rows {
        wtr.write_record([
            row.layer.to_string(),
            row.h.to_string(),
            row.r.to_string(),
            row.accuracy.map(fmt_float).unwrap_or_default(),
        ])?;
    }
    finish(wtr)
}

pub fn write_sweep_json<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, rows)?;
    w.write_all(b"\n").map_err(|e| Error::io("<sweep json>", e))
}
