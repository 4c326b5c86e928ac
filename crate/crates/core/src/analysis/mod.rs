//! CSV exports behind every figure: spectra, right singular vectors, decision
//! boundaries, layer trajectories and (h, r) accuracy sweeps.
//!
//! All files are comma-separated with a header row and `\n` line endings.
//! Floats are written in their shortest exact decimal form.

mod sweep;

pub use sweep::{
    read_ledger, run_sweep, write_sweep_csv, write_sweep_json, SweepCell, SweepOutcome, SweepRow,
    SweepSpec, DEFAULT_SWEEP_H, DEFAULT_SWEEP_R,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::datasets::decision_grid;
use crate::error::{Error, Result};
use crate::hybrid::predict_classes;
use crate::koopman::{rsv_curves, spectrum, DmdModel, HankelEmbedding, DEFAULT_SENTINEL};
use crate::linalg::RealMatrix;
use crate::nn::Classifier;
use crate::scaling::ScaledNetwork;

pub const SPECTRUM_HEADER: [&str; 3] = ["re", "im", "modulus"];
pub const RSV_HEADER: [&str; 4] = ["vector_index", "position", "value", "sigma"];
pub const BOUNDARY_HEADER: [&str; 3] = ["x", "y", "class"];
pub const TRAJECTORY_HEADER: [&str; 4] = ["state_index", "step", "value", "network"];

/// Shortest decimal that parses back to exactly `v`. Plain notation inside
/// [1e-5, 1e16), exponent notation outside it.
pub fn fmt_float(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn to_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn finish<W: Write>(wtr: csv::Writer<W>) -> Result<()> {
    wtr.into_inner()
        .map_err(|e| Error::Csv(csv::Error::from(e.into_error())))?;
    Ok(())
}

/// One row per eigenvalue, descending modulus.
pub fn write_spectrum<W: Write>(dmd: &DmdModel, w: W) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(SPECTRUM_HEADER)?;
    for p in spectrum(dmd) {
        wtr.write_record([fmt_float(p.re), fmt_float(p.im), fmt_float(p.modulus)])?;
    }
    finish(wtr)
}

pub fn export_spectrum(dmd: &DmdModel, path: &Path) -> Result<()> {
    to_file(path, |w| write_spectrum(dmd, w))
}

/// The `top` leading right singular vectors of the stacked Hankel matrix,
/// one row per entry.
pub fn write_rsv<W: Write>(emb: &HankelEmbedding, top: usize, w: W) -> Result<()> {
    let curves = rsv_curves(emb, top)?;
    let mut wtr = csv_writer(w);
    wtr.write_record(RSV_HEADER)?;
    for (i, sigma) in curves.sigma.iter().enumerate() {
        for (j, v) in curves.vectors.row(i).iter().enumerate() {
            wtr.write_record([i.to_string(), j.to_string(), fmt_float(*v), fmt_float(*sigma)])?;
        }
    }
    finish(wtr)
}

pub fn export_rsv(emb: &HankelEmbedding, top: usize, path: &Path) -> Result<()> {
    to_file(path, |w| write_rsv(emb, top, w))
}

/// Predicted class on a `resolution × resolution` grid over the unit square,
/// x varying fastest.
pub fn write_boundary<W: Write>(model: &dyn Classifier, resolution: usize, w: W) -> Result<()> {
    let grid = decision_grid(resolution)?;
    let classes = predict_classes(model, &grid)?;
    let mut wtr = csv_writer(w);
    wtr.write_record(BOUNDARY_HEADER)?;
    for (i, c) in classes.iter().enumerate() {
        wtr.write_record([fmt_float(grid[(i, 0)]), fmt_float(grid[(i, 1)]), c.to_string()])?;
    }
    finish(wtr)
}

pub fn export_boundary(model: &dyn Classifier, resolution: usize, path: &Path) -> Result<()> {
    to_file(path, |w| write_boundary(model, resolution, w))
}

/// A sample's path through the replaced layer, in the original network
/// (2 steps) and in the scaled one (k+2 steps). Each is d1 × steps, the
/// layer output padded with sentinels below d2.
pub struct LayerTrajectories {
    pub original: RealMatrix,
    pub scaled: RealMatrix,
}

pub fn layer_trajectories(
    scaled: &ScaledNetwork,
    inputs: &RealMatrix,
    sample_index: usize,
) -> Result<LayerTrajectories> {
    if sample_index >= inputs.rows() {
        return Err(Error::InvalidArgument(format!(
            "sample {sample_index} requested from {} inputs",
            inputs.rows()
        )));
    }
    let x = inputs.row_range(sample_index, sample_index + 1);
    let states = scaled.snapshots(&x)?;
    let d1 = scaled.d1();
    let column = |s: &RealMatrix| {
        let mut col = vec![DEFAULT_SENTINEL; d1];
        col[..s.cols()].copy_from_slice(s.row(0));
        col
    };
    let start = &states[0];
    let original_end = scaled.target().forward(start)?;
    Ok(LayerTrajectories {
        original: RealMatrix::from_columns(&[column(start), column(&original_end)])?,
        scaled: RealMatrix::from_columns(&states.iter().map(column).collect::<Vec<_>>())?,
    })
}

pub fn write_trajectory<W: Write>(
    scaled: &ScaledNetwork,
    inputs: &RealMatrix,
    sample_index: usize,
    w: W,
) -> Result<()> {
    let t = layer_trajectories(scaled, inputs, sample_index)?;
    let mut wtr = csv_writer(w);
    wtr.write_record(TRAJECTORY_HEADER)?;
    for (name, m) in [("original", &t.original), ("scaled", &t.scaled)] {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                wtr.write_record([i.to_string(), j.to_string(), fmt_float(m[(i, j)]), name.to_string()])?;
            }
        }
    }
    finish(wtr)
}

pub fn export_trajectory(
    scaled: &ScaledNetwork,
    inputs: &RealMatrix,
    sample_index: usize,
    path: &Path,
) -> Result<()> {
    to_file(path, |w| write_trajectory(scaled, inputs, sample_index, w))
}
