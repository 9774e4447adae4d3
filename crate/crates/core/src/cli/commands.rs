use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::featfile::{feature_path, read_features, write_features};
use super::record::ExperimentRecord;
use crate::classifier::checkpoint::Checkpoint;
use crate::classifier::{predict_all, train_with_state, FeatureStack, ModelParams};
use crate::corpus::{
    decode_image, emit_image, encode_png, load_manifest, synth_pair, write_manifest, ManifestEntry,
};
use crate::error::{Error, Result};
use crate::lga::{directional_gradients, extract_lga, gradient_magnitude, GradientOperator};
use crate::lvp::extract_lvp;
use crate::metrics::{scored, EvalReport};
use crate::pipeline::{extract_features, FeatureConfig, FeatureSummary};
use crate::tensor::Tensor;

/// One manifest row with its path resolved against the manifest's directory.
#[derive(Debug, Clone)]
struct Item {
    entry: ManifestEntry,
    file: PathBuf,
}

fn load_items(manifest: &Path) -> Result<Vec<Item>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    Ok(load_manifest(manifest)?
        .into_iter()
        .map(|entry| Item {
            file: entry.resolve(base),
            entry,
        })
        .collect())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let fail = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(err) => Error::io(path, err),
        other => Error::Contract(format!("csv error: {other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn finish(mut record: ExperimentRecord, started: Instant, dir: &Path) -> Result<ExperimentRecord> {
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    let path = record.write(dir)?;
    println!("record: {}", path.display());
    Ok(record)
}

fn decode_all(items: &[Item]) -> Result<Vec<Tensor>> {
    items.par_iter().map(|it| decode_image(&it.file)).collect()
}

fn extract_all(images: &[Tensor], fc: &FeatureConfig) -> Result<Vec<FeatureStack>> {
    images
        .par_iter()
        .map(|x| extract_features(x, fc).map(|(f, _)| f))
        .collect()
}

fn read_all_features(cfg: &RunConfig, items: &[Item]) -> Result<Vec<FeatureStack>> {
    items
        .par_iter()
        .map(|it| read_features(&feature_path(&cfg.features_dir, &it.entry.path)))
        .collect()
}

fn labels(items: &[Item]) -> Vec<bool> {
    items.iter().map(|it| it.entry.label).collect()
}

/// Scores `xs` in order and summarizes at `threshold`.
pub fn evaluate(params: &ModelParams, xs: &[FeatureStack], labels: &[bool], threshold: f64) -> Result<EvalReport> {
    let want = params.arch.in_channels;
    if let Some(x) = xs.iter().find(|x| x.tensor().channels() != want) {
        return Err(Error::Contract(format!(
            "architecture mismatch: checkpoint expects {want} feature channels, features have {}",
            x.tensor().channels()
        )));
    }
    let refs: Vec<&FeatureStack> = xs.iter().collect();
    let probs = predict_all(params, &refs)?;
    EvalReport::from_samples(&scored(&probs, labels), threshold)
}

fn pr_rows(report: &EvalReport) -> Vec<Vec<String>> {
    report
        .pr_points
        .iter()
        .map(|(r, p)| vec![r.to_string(), p.to_string()])
        .collect()
}

/// Seeded held-out pair indices: `round(count · fraction)` pairs, at least
/// one and never all of them when `count ≥ 2`.
pub fn test_pairs(count: usize, fraction: f64, seed: u64) -> Vec<usize> {
    if count < 2 {
        return Vec::new();
    }
    let n = ((count as f64 * fraction).round() as usize).clamp(1, count - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Stream reserved for the split, apart from the per-image streams.
    rng.set_stream(u64::MAX);
    let mut picked = rand::seq::index::sample(&mut rng, count, n).into_vec();
    picked.sort_unstable();
    picked
}

/// Writes `<corpus_dir>/{natural,smoothed}/<i>.png` plus `manifest.csv`,
/// `train.csv` and `test.csv`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<ExperimentRecord> {
    let started = Instant::now();
    let sc = cfg.synth_config();
    let root = &cfg.corpus_dir;
    for sub in ["natural", "smoothed"] {
        ensure_dir(&root.join(sub))?;
    }
    let encoded: Vec<(Vec<u8>, Vec<u8>)> = (0..sc.count)
        .into_par_iter()
        .map(|i| {
            let (nat, smooth) = synth_pair(&sc, i)?;
            Ok((encode_png(&nat)?, encode_png(&smooth)?))
        })
        .collect::<Result<_>>()?;

    let held_out = test_pairs(sc.count, cfg.test_fraction, cfg.seed);
    let (mut all, mut train, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, (nat, smooth)) in encoded.iter().enumerate() {
        let pair = [
            (format!("natural/{i}.png"), nat, false),
            (format!("smoothed/{i}.png"), smooth, true),
        ];
        for (rel, bytes, label) in pair {
            let path = root.join(&rel);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            let entry = ManifestEntry::new(rel, label);
            if held_out.binary_search(&i).is_ok() {
                test.push(entry.clone());
            } else {
                train.push(entry.clone());
            }
            all.push(entry);
        }
    }
    write_manifest(&root.join("manifest.csv"), &all)?;
    write_manifest(&root.join("train.csv"), &train)?;
    write_manifest(&root.join("test.csv"), &test)?;
    println!(
        "synth: {} images ({} train, {} test) in {}",
        all.len(),
        train.len(),
        test.len(),
        root.display()
    );
    finish(ExperimentRecord::new("synth", cfg), started, root)
}

/// Per-image feature files under `features_dir` plus `summary.csv`.
pub fn cmd_extract(cfg: &RunConfig) -> Result<ExperimentRecord> {
    let started = Instant::now();
    let items = load_items(&cfg.manifest_path())?;
    let fc = cfg.feature_config();
    ensure_dir(&cfg.features_dir)?;
    let results: Vec<Result<FeatureSummary>> = items
        .par_iter()
        .map(|it| {
            let (features, summary) = extract_features(&decode_image(&it.file)?, &fc)?;
            write_features(&feature_path(&cfg.features_dir, &it.entry.path), &features)?;
            Ok(summary)
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = 0;
    for (it, r) in items.iter().zip(results) {
        match r {
            Ok(s) => rows.push(vec![
                it.entry.path.display().to_string(),
                u8::from(it.entry.label).to_string(),
                s.mean_abs_lga.to_string(),
                s.pattern_entropy.map(|e| e.to_string()).unwrap_or_default(),
            ]),
            Err(e) => {
                failures += 1;
                eprintln!("extract: skipping {}: {e}", it.file.display());
            }
        }
    }
    if failures * 2 > items.len() {
        return Err(Error::Contract(format!(
            "{failures} of {} images failed to extract",
            items.len()
        )));
    }
    write_csv(
        &cfg.features_dir.join("summary.csv"),
        &["path", "label", "mean_abs_lga", "pattern_entropy"],
        &rows,
    )?;
    println!(
        "extract: {} feature files in {} ({failures} skipped)",
        rows.len(),
        cfg.features_dir.display()
    );
    finish(ExperimentRecord::new("extract", cfg), started, &cfg.features_dir)
}

/// Trains on the train manifest; writes the checkpoint and `history.json`.
pub fn cmd_train(cfg: &RunConfig) -> Result<ExperimentRecord> {
    let started = Instant::now();
    let items = load_items(&cfg.train_manifest_path())?;
    let xs = read_all_features(cfg, &items)?;
    let ys = labels(&items);
    let samples: Vec<(FeatureStack, bool)> = xs.into_iter().zip(ys.iter().copied()).collect();
    let (params, state, history) = train_with_state(&samples, &cfg.train_config())?;

    ensure_dir(&cfg.out_dir)?;
    let ckpt_path = cfg.checkpoint_path();
    if let Some(parent) = ckpt_path.parent() {
        ensure_dir(parent)?;
    }
    Checkpoint {
        params,
        adam: Some(state),
    }
    .save(&ckpt_path)?;
    write_json(&cfg.out_dir.join("history.json"), &history)?;
    let last = history.last().expect("epochs >= 1");
    println!(
        "train: {} epochs, final loss {:.6}, training ACC {:.4}; checkpoint {}",
        history.len(),
        last.loss,
        last.acc,
        ckpt_path.display()
    );
    finish(ExperimentRecord::new("train", cfg), started, &cfg.out_dir)
}

/// Scores the eval manifest; writes `eval.json` and `pr_curve.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<ExperimentRecord> {
    let started = Instant::now();
    let ckpt = Checkpoint::load(&cfg.checkpoint_path())?;
    let items = load_items(&cfg.eval_manifest_path())?;
    let xs = read_all_features(cfg, &items)?;
    let report = evaluate(&ckpt.params, &xs, &labels(&items), cfg.threshold)?;

    ensure_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("eval.json"), &report)?;
    write_csv(&cfg.out_dir.join("pr_curve.csv"), &["recall", "precision"], &pr_rows(&report))?;
    println!(
        "eval: ACC {:.4} AP {:.4} over {} images ({} generated)",
        report.acc,
        report.ap,
        report.n_pos + report.n_neg,
        report.n_pos
    );
    let mut record = ExperimentRecord::new("eval", cfg);
    record.reports.insert("eval".into(), report);
    finish(record, started, &cfg.out_dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `sigma` or `operator`.
    pub sweep: String,
    pub sigma: f64,
    pub operator: String,
    pub acc: f64,
    pub ap: f64,
    pub train_acc: f64,
}

/// σ and gradient-operator sweeps, each trained on the train split and scored
/// on the test split. Writes `ablation.csv` and `ablation.json`.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<ExperimentRecord> {
    let started = Instant::now();
    let train_items = load_items(&cfg.train_manifest_path())?;
    let test_items = load_items(&cfg.test_manifest_path())?;
    let train_images = decode_all(&train_items)?;
    let test_images = decode_all(&test_items)?;
    let (train_labels, test_labels) = (labels(&train_items), labels(&test_items));

    let mut plan: Vec<(&str, f64, GradientOperator)> = Vec::new();
    plan.extend(cfg.ablate_sigmas.iter().map(|&s| ("sigma", s, cfg.lga.operator)));
    plan.extend(cfg.ablate_operators.iter().map(|&op| ("operator", cfg.lga.sigma, op)));

    // Rows naming the same setting share one run.
    let mut done: Vec<((u64, GradientOperator), (EvalReport, f64))> = Vec::new();
    let mut rows = Vec::new();
    let mut record = ExperimentRecord::new("ablate", cfg);
    for (sweep, sigma, operator) in plan {
        let key = (sigma.to_bits(), operator);
        let (report, train_acc) = match done.iter().find(|(k, _)| *k == key) {
            Some((_, r)) => r.clone(),
            None => {
                let mut fc = cfg.feature_config();
                fc.lga.sigma = sigma;
                fc.lga.operator = operator;
                let train_x = extract_all(&train_images, &fc)?;
                let test_x = extract_all(&test_images, &fc)?;
                let samples: Vec<_> = train_x.into_iter().zip(train_labels.iter().copied()).collect();
                let (params, _, history) = train_with_state(&samples, &cfg.train_config())?;
                let report = evaluate(&params, &test_x, &test_labels, cfg.threshold)?;
                let r = (report, history.last().expect("epochs >= 1").acc);
                done.push((key, r.clone()));
                r
            }
        };
        println!(
            "ablate: {sweep:<8} sigma={sigma:<4} operator={operator:<7} ACC {:.4} AP {:.4}",
            report.acc, report.ap
        );
        let name = match sweep {
            "sigma" => format!("sigma={sigma}"),
            _ => format!("operator={operator}"),
        };
        rows.push(AblationRow {
            sweep: sweep.to_string(),
            sigma,
            operator: operator.to_string(),
            acc: report.acc,
            ap: report.ap,
            train_acc,
        });
        record.reports.insert(name, report);
    }

    ensure_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("ablation.json"), &rows)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.sweep.clone(),
                r.sigma.to_string(),
                r.operator.clone(),
                r.acc.to_string(),
                r.ap.to_string(),
                r.train_acc.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("ablation.csv"),
        &["sweep", "sigma", "operator", "acc", "ap", "train_acc"],
        &csv_rows,
    )?;
    finish(record, started, &cfg.out_dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbRow {
    /// `none` for the unperturbed row, otherwise `blur`, `resize` or `jpeg`.
    pub perturbation: String,
    pub parameter: String,
    pub acc: f64,
    pub ap: f64,
    pub n_images: usize,
    /// Range of the perturbed pixel values across all images.
    pub value_min: f64,
    pub value_max: f64,
    pub all_finite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbTable {
    pub identity: PerturbRow,
    pub rows: Vec<PerturbRow>,
}

fn perturb_row(
    name: &str,
    parameter: String,
    images: &[Tensor],
    params: &ModelParams,
    cfg: &RunConfig,
    labels: &[bool],
) -> Result<(PerturbRow, EvalReport)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut finite = true;
    for x in images {
        finite &= x.all_finite();
        let (a, b) = x.min_max();
        lo = lo.min(a as f64);
        hi = hi.max(b as f64);
    }
    if !finite || lo < 0.0 || hi > 1.0 {
        return Err(Error::Contract(format!(
            "{name}:{parameter} produced values outside [0, 1] (min {lo}, max {hi}, finite {finite})"
        )));
    }
    let xs = extract_all(images, &cfg.feature_config())?;
    let report = evaluate(params, &xs, labels, cfg.threshold)?;
    let row = PerturbRow {
        perturbation: name.to_string(),
        parameter,
        acc: report.acc,
        ap: report.ap,
        n_images: images.len(),
        value_min: lo,
        value_max: hi,
        all_finite: finite,
    };
    Ok((row, report))
}

/// Re-scores the eval manifest after each perturbation. Writes `perturb.json`
/// and `perturb.csv`; the first CSV row is the unperturbed baseline.
pub fn cmd_perturb_eval(cfg: &RunConfig) -> Result<ExperimentRecord> {
    let started = Instant::now();
    let ckpt = Checkpoint::load(&cfg.checkpoint_path())?;
    let items = load_items(&cfg.eval_manifest_path())?;
    let images = decode_all(&items)?;
    let ys = labels(&items);

    let mut record = ExperimentRecord::new("perturb-eval", cfg);
    let (identity, report) = perturb_row("none", String::new(), &images, &ckpt.params, cfg, &ys)?;
    record.reports.insert("none".into(), report);
    let mut rows = Vec::new();
    for spec in &cfg.perturbations {
        let perturbed: Vec<Tensor> = images.par_iter().map(|x| spec.apply(x)).collect::<Result<_>>()?;
        let (row, report) = perturb_row(spec.kind(), spec.parameter(), &perturbed, &ckpt.params, cfg, &ys)?;
        println!("perturb-eval: {spec:<11} ACC {:.4} AP {:.4}", row.acc, row.ap);
        record.reports.insert(spec.to_string(), report);
        rows.push(row);
    }
    let table = PerturbTable { identity, rows };

    ensure_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("perturb.json"), &table)?;
    let csv_rows: Vec<Vec<String>> = std::iter::once(&table.identity)
        .chain(&table.rows)
        .map(|r| {
            vec![
                r.perturbation.clone(),
                r.parameter.clone(),
                r.acc.to_string(),
                r.ap.to_string(),
                r.n_images.to_string(),
                r.value_min.to_string(),
                r.value_max.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("perturb.csv"),
        &["perturbation", "parameter", "acc", "ap", "n_images", "value_min", "value_max"],
        &csv_rows,
    )?;
    finish(record, started, &cfg.out_dir)
}

/// Min-max normalizes one plane; a flat plane maps to zero.
fn normalize(plane: &[f32]) -> (Vec<f32>, f32, f32) {
    let lo = plane.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = plane.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = hi - lo;
    let out = if span > 0.0 {
        plane.iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.0; plane.len()]
    };
    (out, lo, hi)
}

/// Per-pixel gradient magnitude averaged over channels.
fn mean_gradient_magnitude(x: &Tensor, cfg: &RunConfig) -> Result<Tensor> {
    let (gx, gy) = directional_gradients(x, cfg.lga.operator, cfg.lga.padding)?;
    let g = gradient_magnitude(&gx, &gy, cfg.lga.epsilon)?;
    let (c, h, w) = g.shape();
    Tensor::from_fn(1, h, w, |_, y, xx| {
        ((0..c).map(|ch| g.get(ch, y, xx) as f64).sum::<f64>() / c as f64) as f32
    })
}

fn write_heatmaps(x: &Tensor, cfg: &RunConfig, prefix: &str, ranges: &mut String) -> Result<()> {
    let lga = extract_lga(x, &cfg.lga)?;
    let lvp = extract_lvp(x, &cfg.lvp_weights(), cfg.lga.padding)?;
    let abs_lga = lga.map.map(f32::abs);
    let (_, h, w) = x.shape();
    for (kind, map) in [("lga", &abs_lga), ("lvp", &lvp.map)] {
        for c in 0..map.channels() {
            let (plane, lo, hi) = normalize(map.channel(c));
            let name = format!("{prefix}_{kind}_c{c}.png");
            emit_image(&Tensor::new(1, h, w, plane)?, &cfg.out_dir.join(&name))?;
            let line = format!("{name} min={lo} max={hi}");
            println!("heatmap: {line}");
            ranges.push_str(&line);
            ranges.push('\n');
        }
    }
    Ok(())
}

/// `|LGA|` and LVP heatmaps per channel (`a_*` for `heatmap.image`, `b_*` for
/// `heatmap.image2`), their ranges in `heatmap_ranges.txt`, and with two images
/// a `scatter.csv` of paired gradient magnitudes.
pub fn cmd_heatmap(cfg: &RunConfig) -> Result<ExperimentRecord> {
    let started = Instant::now();
    let first = cfg
        .heatmap_image
        .as_ref()
        .ok_or_else(|| Error::Config("heatmap.image is not set".into()))?;
    let a = decode_image(first)?;
    let b = cfg.heatmap_image2.as_ref().map(|p| decode_image(p)).transpose()?;

    ensure_dir(&cfg.out_dir)?;
    let mut ranges = String::new();
    write_heatmaps(&a, cfg, "a", &mut ranges)?;
    if let Some(b) = &b {
        write_heatmaps(b, cfg, "b", &mut ranges)?;
        let ga = mean_gradient_magnitude(&a, cfg)?;
        let gb = mean_gradient_magnitude(b, cfg)?;
        // Pixels are paired by position over the overlapping top-left region.
        let h = ga.height().min(gb.height());
        let w = ga.width().min(gb.width());
        let rows: Vec<Vec<String>> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .map(|(y, x)| {
                vec![
                    y.to_string(),
                    x.to_string(),
                    ga.get(0, y, x).to_string(),
                    gb.get(0, y, x).to_string(),
                ]
            })
            .collect();
        write_csv(&cfg.out_dir.join("scatter.csv"), &["y", "x", "grad_a", "grad_b"], &rows)?;
        println!("heatmap: scatter.csv with {} pixel pairs", rows.len());
    }
    let path = cfg.out_dir.join("heatmap_ranges.txt");
    std::fs::write(&path, ranges).map_err(|e| Error::io(&path, e))?;
    finish(ExperimentRecord::new("heatmap", cfg), started, &cfg.out_dir)
}
