//! End-to-end acceptance run. One line per criterion:
//!
//! ```text
//! PASS  <id>  <measurements>
//! FAIL  <id>  <measurements>
//! ```
//!
//! Criteria listed in `KNOWN_GAPS` are still run and still print FAIL when
//! they fail, tagged `[known gap]`; they do not affect the exit status unless
//! `KOOPNET_ACCEPTANCE_STRICT=1`. Any other failure exits 1. Positional
//! arguments select criteria by id substring.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use koopnet::analysis::{
    export_boundary, export_rsv, export_spectrum, export_trajectory, run_sweep, write_sweep_csv, write_sweep_json,
    SweepSpec,
};
use koopnet::datasets::LabeledDataset;
use koopnet::hybrid::{evaluate, HybridModel};
use koopnet::koopman::{collect_trajectories, fit_dmd, hankelize, hankelize_sequences, DmdModel, RankPolicy};
use koopnet::linalg::RealMatrix;
use koopnet::nn::{grad_check, train, DenseLayer, Loss, MlpModel, Target};
use koopnet::pipeline::{
    fit_layer, load_datasets, paths, replace_layer, scale_layer, train_baseline, Artifact, ArtifactKind, RunConfig,
};
use koopnet::scaling::{ablate, insert_scaling, ScaledNetwork};
use rand::Rng;

// Accuracy thresholds are fractions.
const YY_BASELINE_MIN: f64 = 0.970;
const YY_BASELINE_BUDGET: Duration = Duration::from_secs(5 * 60);
const YY_HYBRID_MIN: [(usize, f64); 3] = [(1, 0.86), (2, 0.65), (3, 0.94)];
const YY_HYBRID_H: usize = 10;
const YY_HYBRID_R: usize = 1000;
const YY_HYBRID_BUDGET: Duration = Duration::from_secs(10 * 60);

const MNIST_BASELINE_MIN: f64 = 0.965;
const MNIST_BASELINE_BUDGET: Duration = Duration::from_secs(30 * 60);
const MNIST_HYBRID_MIN: [(usize, f64); 3] = [(1, 0.895), (2, 0.925), (3, 0.940)];
const MNIST_R: usize = 500;
const MNIST_H: [usize; 4] = [1, 2, 5, 10];
/// Allowed drop between consecutive h, in accuracy fraction (one point).
const MONOTONE_SLACK: f64 = 0.01;

const LOW_DATA_LAYER: usize = 1;
const LOW_DATA_R: usize = 50;
const LOW_DATA_GAP: f64 = 0.10;

const ORACLE_TRIALS: usize = 50;
const ORACLE_MAX_DIM: usize = 6;
const ORACLE_SPECTRUM_TOL: f64 = 1e-8;
const ORACLE_COMPANION_TOL: f64 = 1e-6;
const ORACLE_CONJUGATE_TOL: f64 = 1e-8;
const ORACLE_RESIDUAL_TOL: f64 = 1e-6;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);

const NUMERICS_SVD_TOL: f64 = 1e-10;
const NUMERICS_EIG_TOL: f64 = 1e-8;
const NUMERICS_PINV_TOL: f64 = 1e-8;
const NUMERICS_GRAD_TOL: f64 = 1e-4;
const NUMERICS_CASES: usize = 60;
const NUMERICS_BUDGET: Duration = Duration::from_secs(120);

/// Unattainable with faithful settings; see README.
const KNOWN_GAPS: [&str; 2] = ["yinyang-hybrid", "low-data"];

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

struct Suite {
    filters: Vec<String>,
    outcomes: Vec<Outcome>,
}

impl Suite {
    fn wants(&self, id: &str) -> bool {
        self.filters.is_empty() || self.filters.iter().any(|f| id.contains(f.as_str()))
    }

    fn record(&mut self, id: &'static str, pass: bool, detail: String) {
        let tag = if pass {
            "PASS"
        } else {
            "FAIL"
        };
        let gap = if !pass && KNOWN_GAPS.contains(&id) { "  [known gap]" } else { "" };
        println!("{tag}  {id}  {detail}{gap}");
        self.outcomes.push(Outcome { id, pass, detail });
    }

    fn error(&mut self, id: &'static str, err: impl std::fmt::Display) {
        self.record(id, false, format!("error: {err}"));
    }
}

fn config(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn pct(a: f64) -> String {
    format!("{:.2}%", 100.0 * a)
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn accuracy(model: &dyn koopnet::nn::Classifier, data: &LabeledDataset) -> koopnet::Result<f64> {
    Ok(evaluate(model, data)?.accuracy)
}

/// Baseline, scaled networks and fits that later criteria reuse.
struct Run {
    model: MlpModel,
    scaled: Vec<ScaledNetwork>,
    fits: Vec<(usize, DmdModel, HybridModel)>,
}

fn yinyang(suite: &mut Suite) -> Option<Run> {
    let cfg = config("yinyang.json");
    let (train_d, test_d) = load_datasets(&cfg).ok()?;

    let start = Instant::now();
    let (model, summary) = match train_baseline(&cfg, &train_d) {
        Ok(m) => m,
        Err(e) => {
            suite.error("yinyang-baseline", e);
            return None;
        }
    };
    let took = start.elapsed();
    let acc = accuracy(&model, &test_d).ok()?;
    suite.record(
        "yinyang-baseline",
        acc >= YY_BASELINE_MIN && took <= YY_BASELINE_BUDGET,
        format!(
            "accuracy {} (min {}), restart {} of {}, {} (max {})",
            pct(acc),
            pct(YY_BASELINE_MIN),
            summary.restart,
            cfg.restarts,
            secs(took),
            secs(YY_BASELINE_BUDGET)
        ),
    );

    let start = Instant::now();
    let mut run = Run {
        model: model.clone(),
        scaled: Vec::new(),
        fits: Vec::new(),
    };
    let mut accs = BTreeMap::new();
    for (layer, _) in YY_HYBRID_MIN {
        let step = (|| -> koopnet::Result<()> {
            let (scaled, _) = scale_layer(&cfg, &model, layer, &train_d)?;
            let dmd = fit_layer(&scaled, &train_d.inputs, YY_HYBRID_H, YY_HYBRID_R, cfg.dmd.rank)?;
            let hybrid = replace_layer(&scaled, &dmd, cfg.dmd.clamp_relu)?;
            accs.insert(layer, accuracy(&hybrid, &test_d)?);
            run.scaled.push(scaled);
            run.fits.push((layer, dmd, hybrid));
            Ok(())
        })();
        if let Err(e) = step {
            suite.error("yinyang-hybrid", format!("layer {layer}: {e}"));
            return Some(run);
        }
    }
    let took = start.elapsed();
    let bands = YY_HYBRID_MIN.iter().all(|(l, min)| accs[l] >= *min);
    let ordering = accs[&3] > accs[&1] && accs[&1] > accs[&2];
    suite.record(
        "yinyang-hybrid",
        bands && ordering && took <= YY_HYBRID_BUDGET,
        format!(
            "h={YY_HYBRID_H} r={YY_HYBRID_R}: {}; bands {}; ordering L3 > L1 > L2 {}; {} (max {})",
            YY_HYBRID_MIN
                .iter()
                .map(|(l, min)| format!("L{l} {} (min {})", pct(accs[l]), pct(*min)))
                .collect::<Vec<_>>()
                .join(", "),
            if bands { "met" } else { "missed" },
            if ordering { "holds" } else { "violated" },
            secs(took),
            secs(YY_HYBRID_BUDGET)
        ),
    );
    Some(run)
}

fn mnist(suite: &mut Suite, fits: &mut Vec<(usize, DmdModel, HybridModel)>) {
    let want_hybrid = suite.wants("mnist-hybrid") || suite.wants("low-data");
    let cfg = config("mnist.json");
    let (train_d, test_d) = match load_datasets(&cfg) {
        Ok(d) => d,
        Err(e) => {
            for id in ["mnist-baseline", "mnist-hybrid", "low-data"] {
                if suite.wants(id) {
                    suite.error(id, &e);
                }
            }
            return;
        }
    };

    let start = Instant::now();
    let (model, _) = match train_baseline(&cfg, &train_d) {
        Ok(m) => m,
        Err(e) => {
            suite.error("mnist-baseline", e);
            return;
        }
    };
    let took = start.elapsed();
    match accuracy(&model, &test_d) {
        Ok(acc) => suite.record(
            "mnist-baseline",
            acc >= MNIST_BASELINE_MIN && took <= MNIST_BASELINE_BUDGET,
            format!(
                "accuracy {} (min {}), {} (max {})",
                pct(acc),
                pct(MNIST_BASELINE_MIN),
                secs(took),
                secs(MNIST_BASELINE_BUDGET)
            ),
        ),
        Err(e) => suite.error("mnist-baseline", e),
    }
    if !want_hybrid {
        return;
    }

    let mut scaled = Vec::new();
    for (layer, _) in MNIST_HYBRID_MIN {
        match scale_layer(&cfg, &model, layer, &train_d) {
            Ok((s, _)) => scaled.push(s),
            Err(e) => {
                suite.error("mnist-hybrid", format!("scaling layer {layer}: {e}"));
                return;
            }
        }
    }

    // h = 10 is fitted directly so its model can join the spectral checks;
    // the rest of the grid goes through the sweep driver.
    let mut acc: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for s in &scaled {
        let layer = s.target_index;
        let h = *MNIST_H.last().unwrap();
        let step = (|| -> koopnet::Result<()> {
            let dmd = fit_layer(s, &train_d.inputs, h, MNIST_R, cfg.dmd.rank)?;
            let hybrid = replace_layer(s, &dmd, cfg.dmd.clamp_relu)?;
            acc.insert((layer, h, MNIST_R), accuracy(&hybrid, &test_d)?);
            fits.push((layer, dmd, hybrid));
            Ok(())
        })();
        if let Err(e) = step {
            suite.error("mnist-hybrid", format!("layer {layer}: {e}"));
            return;
        }
    }
    let dir = tempfile::tempdir().expect("tempdir");
    let grids = [
        (
            MNIST_HYBRID_MIN.iter().map(|(l, _)| *l).collect::<Vec<_>>(),
            MNIST_H[..MNIST_H.len() - 1].to_vec(),
            vec![MNIST_R],
        ),
        (vec![LOW_DATA_LAYER], vec![1, 10], vec![LOW_DATA_R]),
    ];
    for (i, (layers, h, r)) in grids.into_iter().enumerate() {
        let spec = SweepSpec {
            dataset: cfg.dataset.id().to_string(),
            layers,
            h,
            r,
            rank: cfg.dmd.rank,
            clamp_relu: cfg.dmd.clamp_relu,
        };
        match run_sweep(&spec, &scaled, &train_d.inputs, &test_d, &dir.path().join(format!("sweep{i}.jsonl"))) {
            Ok(out) => {
                for c in out.cells {
                    if let Some(a) = c.accuracy {
                        acc.insert((c.layer, c.h, c.r), a);
                    }
                }
            }
            Err(e) => {
                suite.error("mnist-hybrid", format!("sweep: {e}"));
                return;
            }
        }
    }

    let get = |l: usize, h: usize, r: usize| acc.get(&(l, h, r)).copied();
    let mut pass = true;
    let mut parts = Vec::new();
    for (layer, min) in MNIST_HYBRID_MIN {
        let curve: Vec<Option<f64>> = MNIST_H.iter().map(|&h| get(layer, h, MNIST_R)).collect();
        let at10 = curve.last().copied().flatten();
        let threshold = at10.is_some_and(|a| a >= min);
        let monotone = curve.iter().all(Option::is_some)
            && curve.windows(2).all(|w| w[1].unwrap() >= w[0].unwrap() - MONOTONE_SLACK);
        pass &= threshold && monotone;
        parts.push(format!(
            "L{layer} h=10 {} (min {}), h-curve [{}] {}",
            at10.map(pct).unwrap_or_else(|| "n/a".into()),
            pct(min),
            curve
                .iter()
                .map(|a| a.map(pct).unwrap_or_else(|| "n/a".into()))
                .collect::<Vec<_>>()
                .join(" "),
            if monotone { "monotone" } else { "not monotone" }
        ));
    }
    suite.record(
        "mnist-hybrid",
        pass,
        format!("r={MNIST_R}, slack {}: {}", pct(MONOTONE_SLACK), parts.join("; ")),
    );

    let (lo, hi) = (get(LOW_DATA_LAYER, 1, LOW_DATA_R), get(LOW_DATA_LAYER, 10, LOW_DATA_R));
    match (lo, hi) {
        (Some(lo), Some(hi)) => suite.record(
            "low-data",
            hi - lo >= LOW_DATA_GAP,
            format!(
                "L{LOW_DATA_LAYER} r={LOW_DATA_R}: h=1 {} -> h=10 {}, gain {:.2} points (min {:.0})",
                pct(lo),
                pct(hi),
                100.0 * (hi - lo),
                100.0 * LOW_DATA_GAP
            ),
        ),
        _ => suite.record("low-data", false, "a low-data cell was skipped".into()),
    }
}

fn dmd_oracles(suite: &mut Suite, fits: &[(usize, DmdModel, HybridModel)], yy: Option<&Run>) {
    let start = Instant::now();
    let mut r = rng(0x0dd);
    let mut a_worst: f64 = 0.0;
    for trial in 0..ORACLE_TRIALS {
        a_worst = a_worst.max(stable_system_trial(&mut r, 1 + trial % ORACLE_MAX_DIM));
    }
    let mut b_worst: f64 = 0.0;
    for d in 1..=ORACLE_MAX_DIM {
        for _ in 0..5 {
            let (gap, truth) = companion_trial(&mut r, d);
            b_worst = b_worst.max(gap).max(truth);
        }
    }
    let c_worst = fits
        .iter()
        .map(|(_, dmd, _)| conjugate_symmetry_error(&dmd.eigenvalues))
        .fold(0.0, f64::max);

    // Residual consistency on full-rank refits of real trajectories plus
    // synthetic rectified sequences.
    let mut d_worst: f64 = 0.0;
    let mut d_cases = 0;
    if let Some(run) = yy {
        let (train_d, _) = load_datasets(&config("yinyang.json")).expect("yin-yang data");
        for s in &run.scaled {
            for h in [1, 3] {
                let batch = collect_trajectories(s, &train_d.inputs, 200).expect("trajectories");
                let emb = hankelize(&batch, h).expect("embedding");
                let dmd = fit_dmd(&emb, RankPolicy::Fixed(usize::MAX)).expect("fit");
                d_worst = d_worst.max(residual_consistency(&emb, &dmd));
                d_cases += 1;
            }
        }
    }
    for seed in 0..20u64 {
        let mut g = rng(seed);
        let d = 1 + (seed as usize % 4);
        let a = random_matrix(&mut g, d, d).scale(0.5);
        let seqs: Vec<RealMatrix> = (0..10)
            .map(|_| {
                let mut cols = vec![(0..d).map(|_| g.random_range(0.0..1.0)).collect::<Vec<f64>>()];
                for _ in 1..8 {
                    let next: Vec<f64> =
                        a.matvec(cols.last().unwrap()).unwrap().iter().map(|v| v.max(0.0) + 0.1).collect();
                    cols.push(next);
                }
                RealMatrix::from_columns(&cols).unwrap()
            })
            .collect();
        let emb = hankelize_sequences(&seqs, 1 + seed as usize % 3).unwrap();
        let dmd = fit_dmd(&emb, RankPolicy::Fixed(usize::MAX)).unwrap();
        d_worst = d_worst.max(residual_consistency(&emb, &dmd));
        d_cases += 1;
    }
    let took = start.elapsed();
    let pass = a_worst < ORACLE_SPECTRUM_TOL
        && b_worst < ORACLE_COMPANION_TOL
        && c_worst < ORACLE_CONJUGATE_TOL
        && d_worst < ORACLE_RESIDUAL_TOL
        && took <= ORACLE_BUDGET;
    suite.record(
        "dmd-oracles",
        pass,
        format!(
            "(a) {ORACLE_TRIALS} systems dim<={ORACLE_MAX_DIM} max err {a_worst:.1e} (tol {ORACLE_SPECTRUM_TOL:.0e}); \
             (b) companion vs exact {b_worst:.1e} (tol {ORACLE_COMPANION_TOL:.0e}); \
             (c) {} real fits conjugate err {c_worst:.1e} (tol {ORACLE_CONJUGATE_TOL:.0e}); \
             (d) {d_cases} fits residual gap {d_worst:.1e} (tol {ORACLE_RESIDUAL_TOL:.0e}); {} (max {})",
            fits.len(),
            secs(took),
            secs(ORACLE_BUDGET)
        ),
    );
}

fn numerics(suite: &mut Suite) {
    let start = Instant::now();
    let mut r = rng(0x5eed);
    let (mut svd, mut eig, mut pinv_err, mut grad) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut sorted = true;
    for case in 0..NUMERICS_CASES {
        let m = r.random_range(1..80);
        let n = r.random_range(1..80);
        let a = if case % 2 == 0 {
            random_matrix(&mut r, m, n)
        } else {
            let k = r.random_range(1..6);
            random_rank_deficient(&mut r, m.max(2), n.max(2), k.min(m.max(2)).min(n.max(2)))
        };
        let c = svd_check(&a);
        svd = svd.max(c.worst());
        sorted &= c.descending;
        pinv_err = pinv_err.max(pinv_check(&a, 1e-10));
        let sq = random_matrix(&mut r, m.min(50), m.min(50));
        eig = eig.max(eig_residual(&sq));
        if case % 4 == 0 {
            let model = MlpModel::init(&[3, 5, 4, 3], case as u64).unwrap();
            let batch = 1 + case % 5;
            let x = random_matrix(&mut r, batch, 3);
            let labels: Vec<usize> = (0..batch).map(|i| i % 3).collect();
            grad = grad.max(grad_check(&model, &x, Target::Labels(&labels), Loss::CrossEntropy).unwrap());
            let y = random_matrix(&mut r, batch, 3).scale(2.0);
            grad = grad.max(grad_check(&model, &x, Target::Values(&y), Loss::Huber { delta: 1.0 }).unwrap());
        }
    }
    let big = svd_check(&random_matrix(&mut r, 200, 200));
    svd = svd.max(big.worst());
    let fixture = svd_check(&load_fixture("svd_subnormal_40x20.json"));
    svd = svd.max(fixture.worst());
    sorted &= big.descending && fixture.descending;
    let took = start.elapsed();
    suite.record(
        "numerics",
        sorted
            && svd < NUMERICS_SVD_TOL
            && eig < NUMERICS_EIG_TOL
            && pinv_err < NUMERICS_PINV_TOL
            && grad < NUMERICS_GRAD_TOL
            && took <= NUMERICS_BUDGET,
        format!(
            "{NUMERICS_CASES} random cases + 200x200: svd {svd:.1e} (tol {NUMERICS_SVD_TOL:.0e}), \
             eig {eig:.1e} (tol {NUMERICS_EIG_TOL:.0e}), pinv {pinv_err:.1e} (tol {NUMERICS_PINV_TOL:.0e}), \
             grad {grad:.1e} (tol {NUMERICS_GRAD_TOL:.0e}); {} (max {})",
            secs(took),
            secs(NUMERICS_BUDGET)
        ),
    );
}

fn layer_bits(l: &DenseLayer) -> Vec<u64> {
    l.weight.as_slice().iter().chain(&l.bias).map(|v| v.to_bits()).collect()
}

fn param_bits(m: &MlpModel) -> Vec<u64> {
    m.layers.iter().flat_map(layer_bits).collect()
}

/// Trains a shrunken Yin-Yang pipeline and writes every artifact kind.
fn write_run(cfg: &RunConfig, out: &Path) -> koopnet::Result<()> {
    let seeds = cfg.seeds();
    let (train_d, test_d) = load_datasets(cfg)?;
    let (model, _) = train_baseline(cfg, &train_d)?;
    Artifact::model(&model, seeds)?.save(&paths::model(out))?;
    let layer = 3;
    let (scaled, _) = scale_layer(cfg, &model, layer, &train_d)?;
    Artifact::scaled(&scaled, seeds)?.save(&paths::scaled(out, layer))?;
    let (h, r) = (5, 100);
    let dmd = fit_layer(&scaled, &train_d.inputs, h, r, cfg.dmd.rank)?;
    Artifact::dmd(&dmd, layer, r, seeds)?.save(&paths::dmd(out, layer, h, r))?;
    let hybrid = replace_layer(&scaled, &dmd, cfg.dmd.clamp_relu)?;
    Artifact::hybrid(&hybrid, r, seeds)?.save(&paths::hybrid(out, layer, h, r))?;
    let report = evaluate(&hybrid, &test_d)?;
    Artifact::new(ArtifactKind::Eval, seeds, &report)?.save(&out.join("eval_hybrid.json"))?;

    let mut spec = cfg.sweep_spec();
    spec.layers = vec![layer];
    spec.h = vec![1, 5];
    spec.r = vec![20, 100];
    let sweep = run_sweep(&spec, &[scaled.clone()], &train_d.inputs, &test_d, &out.join("sweep.jsonl"))?;
    let mut csv = Vec::new();
    write_sweep_csv(&sweep.rows(), &mut csv)?;
    std::fs::write(out.join("sweep.csv"), csv).map_err(|e| koopnet::Error::io(out, e))?;
    let mut json = Vec::new();
    write_sweep_json(&sweep.rows(), &mut json)?;
    std::fs::write(out.join("sweep.json"), json).map_err(|e| koopnet::Error::io(out, e))?;

    export_spectrum(&dmd, &out.join("spectrum.csv"))?;
    let emb = hankelize(&collect_trajectories(&scaled, &train_d.inputs, r)?, h)?;
    export_rsv(&emb, 5, &out.join("rsv.csv"))?;
    export_boundary(&hybrid, 40, &out.join("boundary.csv"))?;
    export_trajectory(&scaled, &train_d.inputs, 0, &out.join("trajectory.csv"))?;
    Ok(())
}

/// Files under `dir` except the timing-bearing sweep ledger.
fn artifact_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("run dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.file_name().is_some_and(|n| n != "sweep.jsonl"))
        .map(|p| (PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).expect("artifact")))
        .collect()
}

fn structural(suite: &mut Suite, yy: Option<&Run>) {
    let mut checks: Vec<(String, bool)> = Vec::new();
    let mut cfg = config("yinyang.json");

    // Ablation: before and after distillation.
    let base = match yy {
        Some(run) => run.model.clone(),
        None => MlpModel::init(&cfg.architecture, 7).unwrap(),
    };
    let fresh = insert_scaling(&base, 2, 4, cfg.scaling.init, 1).unwrap();
    let mut ablation = param_bits(&ablate(&fresh)) == param_bits(&base) && ablate(&fresh).widths() == base.widths();
    if let Some(run) = yy {
        for s in &run.scaled {
            ablation &= param_bits(&ablate(s)) == param_bits(&base);
        }
    }
    checks.push(("ablation bitwise".into(), ablation));

    // Frozen parameters survive training; trainable ones move.
    let (train_d, test_d) = load_datasets(&cfg).expect("yin-yang data");
    let mut model = MlpModel::init(&cfg.architecture, 11).unwrap();
    let frozen = [0usize, 2, 4];
    for &i in &frozen {
        model.layers[i].trainable = false;
    }
    let before: Vec<Vec<u64>> = model.layers.iter().map(|l| layer_bits(l)).collect();
    let mut short = cfg.train.clone();
    short.epochs = 20;
    train(&mut model, &train_d, &short, 5).unwrap();
    let after: Vec<Vec<u64>> = model.layers.iter().map(|l| layer_bits(l)).collect();
    let frozen_ok = (0..before.len()).all(|i| (before[i] == after[i]) == frozen.contains(&i));
    checks.push(("frozen invariance".into(), frozen_ok));

    // De-augmentation: every narrowing layer hands exactly d2 values on.
    let mut deaug = true;
    let layers: Vec<(usize, ScaledNetwork)> = match yy {
        Some(run) => run.scaled.iter().map(|s| (s.target_index, s.clone())).collect(),
        None => (1..=3)
            .map(|l| (l, insert_scaling(&base, l, 3, cfg.scaling.init, l as u64).unwrap()))
            .collect(),
    };
    for (_, s) in &layers {
        let batch = collect_trajectories(s, &test_d.inputs, 50).unwrap();
        let aug = batch.augment_count();
        for d in &batch.per_sample {
            let last = d.cols() - 1;
            deaug &= (0..s.d2()).all(|i| d[(i, last)] >= 0.0);
            deaug &= (s.d2()..s.d1()).all(|i| d[(i, last)] == batch.sentinel);
        }
        let dmd = fit_dmd(&hankelize(&batch, 2).unwrap(), RankPolicy::default()).unwrap();
        let hybrid = replace_layer(s, &dmd, false).unwrap();
        let x = test_d.inputs.row_range(0, 10);
        let replaced = hybrid.replaced_output(&x).unwrap();
        deaug &= aug == s.d1() - s.d2() && replaced.cols() == s.d2();
        deaug &= hybrid.forward_batch(&x).unwrap().cols() == base.output_dim();
    }
    checks.push((
        format!(
            "de-augmentation ({})",
            layers.iter().map(|(l, s)| format!("L{l} {}->{}", s.d1(), s.d2())).collect::<Vec<_>>().join(", ")
        ),
        deaug,
    ));

    // Two identical shrunken runs must write identical bytes.
    cfg.train.epochs = 60;
    cfg.restarts = 2;
    cfg.scaling.train.epochs = 5;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let same = match (write_run(&cfg, a.path()), write_run(&cfg, b.path())) {
        (Ok(()), Ok(())) => {
            let (x, y) = (artifact_bytes(a.path()), artifact_bytes(b.path()));
            let differing: Vec<_> = x.keys().filter(|k| x.get(*k) != y.get(*k)).cloned().collect();
            checks.push((format!("{} artifacts compared", x.len()), x.len() >= 10 && x.len() == y.len()));
            differing.is_empty()
        }
        (Err(e), _) | (_, Err(e)) => {
            checks.push((format!("pipeline error: {e}"), false));
            false
        }
    };
    checks.push(("byte-identical reruns".into(), same));

    let pass = checks.iter().all(|(_, ok)| *ok);
    suite.record(
        "structural",
        pass,
        checks
            .iter()
            .map(|(name, ok)| format!("{name} {}", if *ok { "ok" } else { "FAILED" }))
            .collect::<Vec<_>>()
            .join("; "),
    );
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let strict = std::env::var("KOOPNET_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut suite = Suite {
        filters,
        outcomes: Vec::new(),
    };
    let start = Instant::now();

    let yy = if suite.wants("yinyang") || suite.wants("dmd-oracles") || suite.wants("structural") {
        yinyang(&mut suite)
    } else {
        None
    };
    let mut fits: Vec<(usize, DmdModel, HybridModel)> = yy.as_ref().map(|r| r.fits.clone()).unwrap_or_default();
    if suite.wants("mnist") || suite.wants("low-data") {
        mnist(&mut suite, &mut fits);
    }
    if suite.wants("dmd-oracles") {
        dmd_oracles(&mut suite, &fits, yy.as_ref());
    }
    if suite.wants("numerics") {
        numerics(&mut suite);
    }
    if suite.wants("structural") {
        structural(&mut suite, yy.as_ref());
    }

    let failed: Vec<&Outcome> = suite.outcomes.iter().filter(|o| !o.pass).collect();
    let blocking: Vec<&&Outcome> = failed.iter().filter(|o| strict || !KNOWN_GAPS.contains(&o.id)).collect();
    println!(
        "acceptance: {} passed, {} failed ({} known gaps) in {}",
        suite.outcomes.len() - failed.len(),
        failed.len(),
        failed.len() - blocking.len(),
        secs(start.elapsed())
    );
    for o in &blocking {
        eprintln!("blocking failure: {} ({})", o.id, o.detail);
    }
    if !blocking.is_empty() {
        std::process::exit(1);
    }
}
