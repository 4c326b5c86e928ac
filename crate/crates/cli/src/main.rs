//! `koopnet`: train, scale, fit, replace, evaluate, sweep and export.
//!
//! Every command prints one JSON summary line on stdout and writes its
//! artifact under the output directory. Failures print a JSON error object on
//! stderr and exit with status 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use koopnet::analysis::{self, write_sweep_csv, write_sweep_json};
use koopnet::hybrid::evaluate;
use koopnet::koopman::{collect_trajectories, hankelize, spectrum};
use koopnet::pipeline::{
    fit_layer, load_datasets, paths, replace_layer, scale_layer, train_baseline, write_atomic,
    Artifact, ArtifactKind, RunConfig,
};
use koopnet::{Error, Result};

#[derive(Parser)]
#[command(name = "koopnet", version, about = "Koopman hybrid models for trained MLPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the baseline classifier.
    Train(Common),
    /// Insert and distill scaling layers before a hidden layer.
    Scale {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        layer: Option<usize>,
        /// Baseline model artifact; defaults to <out>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit DMD to the scaled layer's delay-embedded trajectories.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long)]
        h: Option<usize>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        scaled: Option<PathBuf>,
    },
    /// Build the hybrid model from a scaled network and a DMD fit.
    Replace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long)]
        h: Option<usize>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        clamp_relu: bool,
        #[arg(long)]
        scaled: Option<PathBuf>,
        #[arg(long)]
        dmd: Option<PathBuf>,
    },
    /// Test-set accuracy of a model, scaled or hybrid artifact.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to <out>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Accuracy over a (layer, h, r) grid; resumes from its ledger.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "layer")]
        layers: Vec<usize>,
        #[arg(long = "h")]
        hs: Vec<usize>,
        #[arg(long = "r")]
        rs: Vec<usize>,
        #[arg(long)]
        clamp_relu: bool,
    },
    /// Write the CSV behind a figure.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(value_enum)]
        kind: ExportKind,
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long)]
        h: Option<usize>,
        #[arg(long)]
        r: Option<usize>,
        /// Classifier artifact for `boundary`; defaults to <out>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Grid points per axis for `boundary`.
        #[arg(long, default_value_t = 200)]
        resolution: usize,
        /// Number of singular vectors for `rsv`.
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Training sample traced by `trajectory`.
        #[arg(long, default_value_t = 0)]
        sample: usize,
        /// Output CSV; defaults to a name under <out>.
        #[arg(long)]
        path: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Spectrum,
    Rsv,
    Boundary,
    Trajectory,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn new(c: &Common) -> Result<Self> {
        let mut cfg = RunConfig::load(&c.config)?;
        if let Some(seed) = c.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &c.out {
            cfg.out_dir = out.clone();
        }
        let out = cfg.out_dir.clone();
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Ctx { cfg, out })
    }

    fn layer(&self, layer: Option<usize>) -> Result<usize> {
        let layer = layer.unwrap_or(self.cfg.scaling.target_index);
        let hidden = 1..self.cfg.architecture.len() - 2;
        if !hidden.contains(&layer) {
            return Err(Error::InvalidArgument(format!(
                "layer {layer} is not a replaceable hidden layer (valid: {hidden:?})"
            )));
        }
        Ok(layer)
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_train(c: &Common) -> Result<Value> {
    let ctx = Ctx::new(c)?;
    let (train_d, test_d) = load_datasets(&ctx.cfg)?;
    let (model, summary) = train_baseline(&ctx.cfg, &train_d)?;
    let acc = evaluate(&model, &test_d)?.accuracy;
    let path = paths::model(&ctx.out);
    Artifact::model(&model, ctx.cfg.seeds())?
        .with("training", &summary)?
        .with("test_accuracy", acc)?
        .save(&path)?;
    Ok(json!({
        "command": "train",
        "artifact": path_str(&path),
        "dataset": ctx.cfg.dataset.id(),
        "test_accuracy": acc,
        "final_loss": summary.report.final_loss(),
        "restart": summary.restart,
        "seed": ctx.cfg.seed,
    }))
}

fn cmd_scale(c: &Common, layer: Option<usize>, model: Option<PathBuf>) -> Result<Value> {
    let ctx = Ctx::new(c)?;
    let layer = ctx.layer(layer)?;
    let model_path = model.unwrap_or_else(|| paths::model(&ctx.out));
    let base = Artifact::load(&model_path)?.to_model()?;
    let (train_d, test_d) = load_datasets(&ctx.cfg)?;
    let (scaled, report) = scale_layer(&ctx.cfg, &base, layer, &train_d)?;
    let acc = evaluate(&scaled, &test_d)?.accuracy;
    let path = paths::scaled(&ctx.out, layer);
    Artifact::scaled(&scaled, ctx.cfg.seeds())?
        .with("distill", &report)?
        .with("test_accuracy", acc)?
        .save(&path)?;
    Ok(json!({
        "command": "scale",
        "artifact": path_str(&path),
        "layer": layer,
        "k": scaled.k(),
        "final_loss": report.final_loss,
        "test_accuracy": acc,
    }))
}

fn cmd_fit(c: &Common, layer: Option<usize>, h: Option<usize>, r: Option<usize>, scaled: Option<PathBuf>) -> Result<Value> {
    let ctx = Ctx::new(c)?;
    let layer = ctx.layer(layer)?;
    let (h, r) = (h.unwrap_or(ctx.cfg.dmd.h), r.unwrap_or(ctx.cfg.dmd.r));
    let scaled_path = scaled.unwrap_or_else(|| paths::scaled(&ctx.out, layer));
    let net = Artifact::load(&scaled_path)?.to_scaled()?;
    let (train_d, _) = load_datasets(&ctx.cfg)?;
    let dmd = fit_layer(&net, &train_d.inputs, h, r, ctx.cfg.dmd.rank)?;
    let path = paths::dmd(&ctx.out, layer, h, r);
    Artifact::dmd(&dmd, layer, r, ctx.cfg.seeds())?.save(&path)?;
    let max_modulus = spectrum(&dmd).first().map(|p| p.modulus);
    Ok(json!({
        "command": "fit",
        "artifact": path_str(&path),
        "layer": layer,
        "h": h,
        "r": r,
        "rank": dmd.rank,
        "residual": dmd.residual,
        "max_modulus": max_modulus,
    }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_replace(
    c: &Common,
    layer: Option<usize>,
    h: Option<usize>,
    r: Option<usize>,
    clamp_relu: bool,
    scaled: Option<PathBuf>,
    dmd: Option<PathBuf>,
) -> Result<Value> {
    let ctx = Ctx::new(c)?;
    let layer = ctx.layer(layer)?;
    let (h, r) = (h.unwrap_or(ctx.cfg.dmd.h), r.unwrap_or(ctx.cfg.dmd.r));
    let net = Artifact::load(&scaled.unwrap_or_else(|| paths::scaled(&ctx.out, layer)))?.to_scaled()?;
    let fit = Artifact::load(&dmd.unwrap_or_else(|| paths::dmd(&ctx.out, layer, h, r)))?.to_dmd()?;
    let hybrid = replace_layer(&net, &fit, clamp_relu || ctx.cfg.dmd.clamp_relu)?;
    let path = paths::hybrid(&ctx.out, layer, fit.h, r);
    Artifact::hybrid(&hybrid, r, ctx.cfg.seeds())?.save(&path)?;
    Ok(json!({
        "command": "replace",
        "artifact": path_str(&path),
        "layer": layer,
        "h": fit.h,
        "r": r,
        "clamp_relu": hybrid.clamp_relu,
    }))
}

fn cmd_eval(c: &Common, model: Option<PathBuf>) -> Result<Value> {
    let ctx = Ctx::new(c)?;
    let model_path = model.unwrap_or_else(|| paths::model(&ctx.out));
    let art = Artifact::load(&model_path)?;
    let classifier = art.to_classifier()?;
    let (_, test_d) = load_datasets(&ctx.cfg)?;
    let report = evaluate(classifier.as_ref(), &test_d)?;
    let stem = model_path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let path = ctx.out.join(format!("eval_{stem}.json"));
    let mut out = Artifact::new(ArtifactKind::Eval, ctx.cfg.seeds(), &report)?
        .with("evaluated", format!("{:?}", art.kind).to_lowercase())?
        .with("dataset", test_d.name.clone())?;
    for (k, v) in &art.meta {
        if matches!(k.as_str(), "layer" | "h" | "r") {
            out = out.with(k, v)?;
        }
    }
    out.save(&path)?;
    Ok(json!({
        "command": "eval",
        "artifact": path_str(&path),
        "model": path_str(&model_path),
        "accuracy": report.accuracy,
        "correct": report.correct,
        "total": report.total,
    }))
}

fn cmd_sweep(c: &Common, layers: Vec<usize>, hs: Vec<usize>, rs: Vec<usize>, clamp_relu: bool) -> Result<Value> {
    let ctx = Ctx::new(c)?;
    let mut spec = ctx.cfg.sweep_spec();
    if !layers.is_empty() {
        spec.layers = layers;
    }
    if !hs.is_empty() {
        spec.h = hs;
    }
    if !rs.is_empty() {
        spec.r = rs;
    }
    spec.clamp_relu |= clamp_relu;
    let mut scaled = Vec::new();
    for &layer in &spec.layers {
        let p = paths::scaled(&ctx.out, ctx.layer(Some(layer))?);
        if !p.exists() {
            return Err(Error::Config(format!(
                "{} is missing; run `koopnet scale --layer {layer}` first",
                p.display()
            )));
        }
        scaled.push(Artifact::load(&p)?.to_scaled()?);
    }
    let (train_d, test_d) = load_datasets(&ctx.cfg)?;
    let ledger = ctx.out.join("sweep.jsonl");
    let outcome = analysis::run_sweep(&spec, &scaled, &train_d.inputs, &test_d, &ledger)?;
    let rows = outcome.rows();
    let (csv_path, json_path) = (ctx.out.join("sweep.csv"), ctx.out.join("sweep.json"));
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf)?;
    write_atomic(&csv_path, &buf)?;
    let mut buf = Vec::new();
    write_sweep_json(&rows, &mut buf)?;
    write_atomic(&json_path, &buf)?;
    Ok(json!({
        "command": "sweep",
        "artifact": path_str(&csv_path),
        "json": path_str(&json_path),
        "ledger": path_str(&ledger),
        "cells": rows.len(),
        "evaluated": outcome.evaluated,
        "reused": outcome.reused,
        "skipped": rows.iter().filter(|r| r.skipped.is_some()).count(),
    }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_export(
    c: &Common,
    kind: ExportKind,
    layer: Option<usize>,
    h: Option<usize>,
    r: Option<usize>,
    model: Option<PathBuf>,
    resolution: usize,
    top: usize,
    sample: usize,
    path: Option<PathBuf>,
) -> Result<Value> {
    let ctx = Ctx::new(c)?;
    let (h, r) = (h.unwrap_or(ctx.cfg.dmd.h), r.unwrap_or(ctx.cfg.dmd.r));
    let (name, target) = match kind {
        ExportKind::Spectrum => {
            let layer = ctx.layer(layer)?;
            let dmd = Artifact::load(&paths::dmd(&ctx.out, layer, h, r))?.to_dmd()?;
            let p = path.unwrap_or_else(|| ctx.out.join(format!("spectrum_L{layer}_h{h}_r{r}.csv")));
            analysis::export_spectrum(&dmd, &p)?;
            ("spectrum", p)
        }
        ExportKind::Rsv => {
            let layer = ctx.layer(layer)?;
            let net = Artifact::load(&paths::scaled(&ctx.out, layer))?.to_scaled()?;
            let (train_d, _) = load_datasets(&ctx.cfg)?;
            let emb = hankelize(&collect_trajectories(&net, &train_d.inputs, r)?, h)?;
            let p = path.unwrap_or_else(|| ctx.out.join(format!("rsv_L{layer}_h{h}_r{r}.csv")));
            analysis::export_rsv(&emb, top, &p)?;
            ("rsv", p)
        }
        ExportKind::Boundary => {
            if ctx.cfg.architecture[0] != 2 {
                return Err(Error::InvalidArgument(
                    "decision boundaries need a two-dimensional input".into(),
                ));
            }
            let model_path = model.unwrap_or_else(|| paths::model(&ctx.out));
            let classifier = Artifact::load(&model_path)?.to_classifier()?;
            let stem = model_path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
            let p = path.unwrap_or_else(|| ctx.out.join(format!("boundary_{stem}.csv")));
            analysis::export_boundary(classifier.as_ref(), resolution, &p)?;
            ("boundary", p)
        }
        ExportKind::Trajectory => {
            let layer = ctx.layer(layer)?;
            let net = Artifact::load(&paths::scaled(&ctx.out, layer))?.to_scaled()?;
            let (train_d, _) = load_datasets(&ctx.cfg)?;
            let p = path.unwrap_or_else(|| ctx.out.join(format!("trajectory_L{layer}_s{sample}.csv")));
            analysis::export_trajectory(&net, &train_d.inputs, sample, &p)?;
            ("trajectory", p)
        }
    };
    Ok(json!({ "command": "export", "kind": name, "artifact": path_str(&target) }))
}

fn run(cli: Cli) -> Result<Value> {
    match cli.command {
        Command::Train(c) => cmd_train(&c),
        Command::Scale { common, layer, model } => cmd_scale(&common, layer, model),
        Command::Fit { common, layer, h, r, scaled } => cmd_fit(&common, layer, h, r, scaled),
        Command::Replace { common, layer, h, r, clamp_relu, scaled, dmd } => {
            cmd_replace(&common, layer, h, r, clamp_relu, scaled, dmd)
        }
        Command::Eval { common, model } => cmd_eval(&common, model),
        Command::Sweep { common, layers, hs, rs, clamp_relu } => cmd_sweep(&common, layers, hs, rs, clamp_relu),
        Command::Export { common, kind, layer, h, r, model, resolution, top, sample, path } => {
            cmd_export(&common, kind, layer, h, r, model, resolution, top, sample, path)
        }
    }
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string()),
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
