use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rbox_geoloc::clickmap::{make_click_map, ClickPoint, ImagePlane};
use rbox_geoloc::dataset::masks::{read_mask_image, read_rle_lines};
use rbox_geoloc::dataset::synth::{scene_record, synth_batch, SynthConfig};
use rbox_geoloc::dataset::{
    cost_summary, hbox_from_rbox_record, read_predictions, read_records, read_records_strict, validate as validate_records,
    write_predictions, write_records, AnnotationRecord, CostEntry, CostLedger, CostSummary, PredictionRecord,
    ValidateOptions,
};
use rbox_geoloc::decode::{export_sam_prompt, DetBox};
use rbox_geoloc::eval::{
    acc_at, criterion_gap, mask_metrics, rotation_stats, BinaryMask, Criterion, EvalReport, GsdConfig, MaskMetrics,
    RotationStats,
};
use rbox_geoloc::experiments::{gradcheck as run_gradcheck, perturbed_start, GradcheckReport};
use rbox_geoloc::geometry::{rbox_to_hbox, RBox};
use rbox_geoloc::losses::{fit_rbox, OsLossParams};
use rbox_geoloc::mcp::write_pyramid;
use rbox_geoloc::pipeline::{run_pipeline, PipelineConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::*;
use crate::output::{create_output, log, open_input, pct, read_text, table, thread_pool, usage, verdict, write_report};
use crate::svg::line_plot;

fn os_params(alpha: f64, beta: f64) -> Result<OsLossParams> {
    OsLossParams::new(alpha, beta).map_err(|e| usage(e.to_string()))
}

fn gt_records(path: &Path) -> Result<Vec<AnnotationRecord>> {
    read_records_strict(open_input(path)?).with_context(|| format!("reading {}", path.display()))
}

fn predictions_by_id(path: &Path) -> Result<BTreeMap<String, PredictionRecord>> {
    let mut map = BTreeMap::new();
    for p in read_predictions(open_input(path)?).with_context(|| format!("reading {}", path.display()))? {
        let id = p.id.clone();
        if map.insert(id.clone(), p).is_some() {
            bail!("{}: duplicate prediction for {id:?}", path.display());
        }
    }
    Ok(map)
}

pub fn validate(a: ValidateArgs) -> Result<bool> {
    let lines = read_records(open_input(&a.input)?).with_context(|| format!("reading {}", a.input.display()))?;
    let query_bounds = match a.query_size {
        Some((h, w)) => Some(ImagePlane::new(h, w).map_err(|e| usage(e.to_string()))?),
        None => None,
    };
    let report = validate_records(&lines, &ValidateOptions { query_bounds });
    let rows: Vec<Vec<String>> = report
        .violations
        .iter()
        .map(|v| vec![v.line.to_string(), v.id.clone().unwrap_or_else(|| "-".into()), v.rule.clone(), v.detail.clone()])
        .collect();
    if !rows.is_empty() {
        print!("{}", table(&["line", "id", "rule", "detail"], &rows));
    }
    println!("{} records, {} violations  {}", report.records, report.violations.len(), verdict(report.is_clean()));
    write_report(a.output.as_deref(), "validate", &a, &report)?;
    Ok(report.is_clean())
}

pub fn convert(a: ConvertArgs) -> Result<bool> {
    let recs: Vec<AnnotationRecord> = gt_records(&a.input)?.iter().map(hbox_from_rbox_record).collect();
    let mut out = create_output(&a.output)?;
    write_records(&recs, &mut out)?;
    out.flush()?;
    println!("converted {} records -> {}", recs.len(), a.output.display());
    Ok(true)
}

#[derive(Serialize)]
struct SynthManifest<'a> {
    seed: u64,
    count: usize,
    config: &'a SynthConfig,
    annotations: &'a str,
    pyramids: Option<&'a str>,
}

pub fn synth(a: SynthArgs) -> Result<bool> {
    let cfg = SynthConfig { noise: a.noise, rotated_fraction: a.rotated_fraction, channels: a.channels, ..Default::default() };
    cfg.check().map_err(|e| usage(e.to_string()))?;
    if a.count == 0 {
        return Err(usage("--count must be positive"));
    }
    let scenes = thread_pool(a.workers)?.install(|| synth_batch(a.seed, a.count, &cfg))?;
    std::fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    let recs: Vec<AnnotationRecord> = scenes.iter().map(scene_record).collect();
    let mut out = create_output(&a.output.join("annotations.jsonl"))?;
    write_records(&recs, &mut out)?;
    out.flush()?;
    if !a.no_pyramids {
        let dir = a.output.join("pyramids");
        for (s, r) in scenes.iter().zip(&recs) {
            for (name, p) in [("query", &s.query), ("reference", &s.reference)] {
                let mut f = create_output(&dir.join(format!("{}.{name}.bin", r.id)))?;
                write_pyramid(p, &mut f)?;
                f.flush()?;
            }
        }
    }
    let manifest = SynthManifest {
        seed: a.seed,
        count: a.count,
        config: &cfg,
        annotations: "annotations.jsonl",
        pyramids: (!a.no_pyramids).then_some("pyramids"),
    };
    let mut m = create_output(&a.output.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut m, &manifest)?;
    writeln!(m)?;
    m.flush()?;
    let stats = rotation_stats(&recs.iter().map(|r| r.gt_rbox).collect::<Vec<_>>(), 1.0)?;
    println!("{} scenes -> {}  (rotated fraction {:.3})", a.count, a.output.display(), stats.fraction_rotated);
    Ok(true)
}

/// PFM: `Pf`, `W H`, negative scale for little-endian, rows bottom to top.
fn write_pfm(path: &Path, h: usize, w: usize, values: &[f64]) -> Result<()> {
    let mut out = create_output(path)?;
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    for i in (0..h).rev() {
        for v in &values[i * w..(i + 1) * w] {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn clickmap(a: ClickmapArgs) -> Result<bool> {
    let plane = ImagePlane::new(a.height, a.width).map_err(|e| usage(e.to_string()))?;
    let map = make_click_map(plane, ClickPoint { x: a.x, y: a.y }).map_err(|e| usage(e.to_string()))?;
    write_pfm(&a.output, map.h, map.w, &map.values)?;
    let max = map.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = map.values.iter().copied().fold(f64::INFINITY, f64::min);
    println!("{}x{} click map, range [{min:.6}, {max:.6}] -> {}", map.h, map.w, a.output.display());
    Ok(true)
}

fn load_masks(path: &Path, ids: &[&str]) -> Result<BTreeMap<String, BinaryMask>> {
    if path.is_dir() {
        let mut out = BTreeMap::new();
        for id in ids {
            for ext in ["png", "pgm", "pbm"] {
                let p = path.join(format!("{id}.{ext}"));
                if p.exists() {
                    out.insert(id.to_string(), read_mask_image(&p)?);
                    break;
                }
            }
        }
        Ok(out)
    } else {
        let text = read_text(path)?;
        let mut out = BTreeMap::new();
        for (id, m) in read_rle_lines(&text).with_context(|| format!("reading {}", path.display()))? {
            if out.insert(id.clone(), m).is_some() {
                bail!("{}: duplicate mask for {id:?}", path.display());
            }
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct EvalResult {
    report: EvalReport,
    missing_predictions: Vec<String>,
    mask_pairs: usize,
}

pub fn eval(a: EvalArgs) -> Result<bool> {
    let gsd = GsdConfig::new(a.gsd).map_err(|e| usage(e.to_string()))?;
    let gts = gt_records(&a.gt)?;
    if gts.is_empty() {
        bail!("{} holds no records", a.gt.display());
    }
    let preds = predictions_by_id(&a.input)?;
    let criterion: Criterion = a.criterion.into();
    let mut pairs = Vec::new();
    let mut missing = Vec::new();
    for g in &gts {
        match preds.get(&g.id) {
            Some(p) => pairs.push((p.det, DetBox::Rbox(g.gt_rbox))),
            None => missing.push(g.id.clone()),
        }
    }
    if !missing.is_empty() {
        log(&format!("{} records have no prediction and count as misses", missing.len()));
    }
    let n = gts.len();
    let acc = |t: f64| -> Result<f64> {
        if pairs.is_empty() {
            return Ok(0.0);
        }
        Ok(acc_at(&pairs, t, criterion)? * pairs.len() as f64 / n as f64)
    };
    let (acc25, acc50, acc75) = thread_pool(a.workers)?.install(|| -> Result<_> { Ok((acc(0.25)?, acc(0.5)?, acc(0.75)?)) })?;
    let mut report = EvalReport { n, criterion, acc25, acc50, acc75, masks: None };
    let mut mask_pairs = 0;
    if let (Some(pm), Some(gm)) = (&a.pred_masks, &a.gt_masks) {
        let ids: Vec<&str> = gts.iter().map(|g| g.id.as_str()).collect();
        let pred_masks = load_masks(pm, &ids)?;
        let gt_masks = load_masks(gm, &ids)?;
        let mp: Vec<(BinaryMask, BinaryMask)> = ids
            .iter()
            .filter_map(|id| Some((pred_masks.get(*id)?.clone(), gt_masks.get(*id)?.clone())))
            .collect();
        mask_pairs = mp.len();
        if mp.is_empty() {
            bail!("no record has both a predicted and a ground-truth mask");
        }
        let m: MaskMetrics = mask_metrics(&mp, &gsd, a.centroid.into())?;
        report.masks = Some(m);
    }
    print!("{}", report.to_table());
    write_report(a.output.as_deref(), "eval", &a, &EvalResult { report, missing_predictions: missing, mask_pairs })?;
    Ok(true)
}

pub fn gap(a: GapArgs) -> Result<bool> {
    if !(a.thr > 0.0 && a.thr <= 1.0) {
        return Err(usage(format!("--thr must lie in (0, 1], got {}", a.thr)));
    }
    let gts = gt_records(&a.gt)?;
    let preds = match &a.input {
        Some(p) => Some(predictions_by_id(p)?),
        None => None,
    };
    let mut pairs = Vec::with_capacity(gts.len());
    for g in &gts {
        let pred = match &preds {
            Some(map) => map.get(&g.id).with_context(|| format!("no prediction for {:?}", g.id))?.det.as_rbox(),
            None => RBox::from_hbox(&rbox_to_hbox(&g.gt_rbox)),
        };
        pairs.push((pred, g.gt_rbox));
    }
    let r = criterion_gap(&pairs, a.thr)?;
    let rows = vec![
        vec!["n".into(), r.n.to_string()],
        vec!["thr".into(), format!("{}", r.thr)],
        vec!["acc_hbox".into(), pct(r.acc_hbox)],
        vec!["acc_rbox".into(), pct(r.acc_rbox)],
        vec!["gap".into(), pct(r.gap)],
    ];
    print!("{}", table(&["metric", "value"], &rows));
    write_report(a.output.as_deref(), "gap", &a, &r)?;
    Ok(true)
}

#[derive(Serialize)]
struct StatsResult {
    rotation: RotationStats,
    costs: Option<CostSummary>,
}

pub fn stats(a: StatsArgs) -> Result<bool> {
    let boxes: Vec<RBox> = gt_records(&a.input)?.iter().map(|r| r.gt_rbox).collect();
    let rotation = rotation_stats(&boxes, a.thr).map_err(|e| usage(e.to_string()))?;
    let costs = match &a.costs {
        Some(path) => {
            let mut ledger = CostLedger::default();
            for (n, line) in open_input(path)?.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: CostEntry = serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), n + 1))?;
                ledger.record(e.record_id, e.kind, e.seconds)?;
            }
            Some(cost_summary(&ledger)?)
        }
        None => None,
    };
    let mut rows = vec![
        vec!["n".into(), rotation.n.to_string()],
        vec![format!("rotated (>{}°)", rotation.threshold_deg), rotation.rotated.to_string()],
        vec!["fraction".into(), format!("{:.3}", rotation.fraction_rotated)],
    ];
    for (b, c) in rotation.histogram.iter().enumerate() {
        rows.push(vec![format!("|θ| {:>2}-{:>2}°", 5 * b, 5 * b + 5), c.to_string()]);
    }
    if let Some(c) = &costs {
        for k in &c.per_kind {
            rows.push(vec![format!("mean s ({})", k.kind), format!("{:.2}", k.mean_seconds)]);
        }
        for r in &c.ratios {
            rows.push(vec![format!("{}/{}", r.numerator, r.denominator), format!("{:.2}", r.ratio)]);
        }
    }
    print!("{}", table(&["statistic", "value"], &rows));
    write_report(a.output.as_deref(), "stats", &a, &StatsResult { rotation, costs })?;
    Ok(true)
}

pub fn gradcheck(a: GradcheckArgs) -> Result<bool> {
    let params = os_params(a.alpha, a.beta)?;
    if a.seeds == 0 {
        return Err(usage("--seeds must be positive"));
    }
    let r: GradcheckReport = run_gradcheck(a.seeds, a.seed, &params)?;
    let names = ["cx", "cy", "w", "h", "theta"];
    let rows: Vec<Vec<String>> = (0..5)
        .map(|i| vec![names[i].to_string(), format!("{:.3e}", r.max_abs_err[i]), format!("{:.3}%", 100.0 * r.max_rel_err[i])])
        .collect();
    print!("{}", table(&["component", "max abs err", "max rel err"], &rows));
    let ok = r.passed == r.tuples;
    println!("{}/{} tuples within max(1e-4, 2%)  {}", r.passed, r.tuples, verdict(ok));
    write_report(a.output.as_deref(), "gradcheck", &a, &r)?;
    Ok(ok)
}

fn rbox_from_degrees(v: [f64; 5]) -> Result<RBox> {
    RBox::new(v[0], v[1], v[2], v[3], v[4].to_radians()).map_err(|e| usage(e.to_string()))
}

#[derive(Serialize)]
struct TrajectoryLine {
    step: usize,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    theta_deg: f64,
    loss: f64,
}

pub fn fitbox(a: FitboxArgs) -> Result<bool> {
    let params = os_params(a.alpha, a.beta)?;
    if !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(usage(format!("--lr must be positive, got {}", a.lr)));
    }
    let gt = rbox_from_degrees(a.gt)?;
    let init = match a.init {
        Some(v) => rbox_from_degrees(v)?,
        None => perturbed_start(&mut ChaCha8Rng::seed_from_u64(a.seed), &gt, 20.0, 45.0, 0.1)?,
    };
    let t = fit_rbox(&init, &gt, &params, a.lr, a.steps)?;
    let mut out = create_output(&a.output)?;
    for s in &t.steps {
        let b = s.rbox;
        let line =
            TrajectoryLine { step: s.step, cx: b.cx, cy: b.cy, w: b.w, h: b.h, theta_deg: b.theta.to_degrees(), loss: s.loss };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    out.flush()?;
    if let Some(p) = &a.plot {
        let losses: Vec<f64> = t.steps.iter().map(|s| s.loss).collect();
        let mut f = create_output(p)?;
        f.write_all(line_plot(&losses, "OS-loss during box fitting", "step", "loss").as_bytes())?;
        f.flush()?;
    }
    let last = t.last();
    let center = (last.rbox.cx - gt.cx).hypot(last.rbox.cy - gt.cy);
    let sin = (last.rbox.theta - gt.theta).sin().abs();
    let rows = vec![
        vec!["steps".into(), (t.steps.len() - 1).to_string()],
        vec!["initial loss".into(), format!("{:.6}", t.steps[0].loss)],
        vec!["final loss".into(), format!("{:.6}", last.loss)],
        vec!["center error (px)".into(), format!("{center:.4}")],
        vec!["|sin dθ|".into(), format!("{sin:.5}")],
    ];
    print!("{}", table(&["fit", "value"], &rows));
    if let Some(d) = &t.diverged {
        log(&format!("fit diverged: {d}"));
        return Ok(false);
    }
    Ok(true)
}

#[derive(Serialize)]
struct PipelineEcho<'a> {
    seeds: usize,
    seed: u64,
    pipeline: &'a PipelineConfig,
}

pub fn pipeline(a: PipelineArgs) -> Result<bool> {
    if a.seeds == 0 {
        return Err(usage("--seeds must be positive"));
    }
    if !(a.noise >= 0.0 && a.noise.is_finite()) {
        return Err(usage(format!("--noise must be non-negative, got {}", a.noise)));
    }
    if !(a.eps > 0.0 && a.eps.is_finite()) {
        return Err(usage(format!("--eps must be positive, got {}", a.eps)));
    }
    let mut cfg = PipelineConfig::with_noise(a.noise);
    cfg.eps = a.eps;
    cfg.criterion = a.criterion.into();
    cfg.loss.os = os_params(a.alpha, a.beta)?;
    let report = run_pipeline(a.seed, a.seeds, &cfg, a.workers)?;
    let ids: Vec<String> = report.scenes.iter().map(|s| format!("scene-{:06}", s.seed)).collect();
    if let Some(p) = &a.predictions {
        let preds: Vec<PredictionRecord> = report
            .scenes
            .iter()
            .zip(&ids)
            .map(|(s, id)| PredictionRecord { id: id.clone(), det: s.prediction.det, score: Some(s.prediction.score) })
            .collect();
        let mut out = create_output(p)?;
        write_predictions(&preds, &mut out)?;
        out.flush()?;
    }
    if let Some(p) = &a.prompts {
        let mut out = create_output(p)?;
        for (s, id) in report.scenes.iter().zip(&ids) {
            writeln!(out, "{}", export_sam_prompt(id, &s.prediction, a.prompt_mode.into()).to_json_line()?)?;
        }
        out.flush()?;
    }
    print!("{}", report.eval.to_table());
    println!("mean loss  {:.6}", report.mean_loss);
    let echo = PipelineEcho { seeds: a.seeds, seed: a.seed, pipeline: &cfg };
    write_report(a.output.as_deref(), "pipeline", &echo, &report)?;
    Ok(true)
}
