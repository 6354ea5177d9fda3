mod common;

use rand::Rng;
use rbox_geoloc::dataset::synth::{planted_cosines, rotation_plan, scene_record, synth_batch, synth_scene, SynthConfig};
use rbox_geoloc::dataset::{read_records_strict, write_records, AnnotationRecord};
use rbox_geoloc::decode::DetBox;
use rbox_geoloc::eval::{
    acc_at, criterion_gap, mask_pair_metrics, rotation_stats, BinaryMask, CentroidMode, Criterion, GsdConfig,
};
use rbox_geoloc::geometry::{rbox_to_hbox, RBox};
use rbox_geoloc::mcp::{mcp_forward_with_attention, DEFAULT_ATTENTION_EPS};
use rbox_geoloc::pipeline::{run_pipeline, PipelineConfig};

fn random_mask(r: &mut rand_chacha::ChaCha8Rng, h: usize, w: usize, p: f64) -> BinaryMask {
    BinaryMask::new(h, w, (0..h * w).map(|_| r.random_bool(p)).collect()).unwrap()
}

#[test]
fn dice_iou_identity_and_gsd_scaling() {
    let mut r = common::rng(51);
    for _ in 0..200 {
        let (h, w) = (r.random_range(1..30usize), r.random_range(1..30usize));
        let a = random_mask(&mut r, h, w, 0.4);
        let b = random_mask(&mut r, h, w, 0.4);
        let m1 = mask_pair_metrics(&a, &b, &GsdConfig::new(0.3).unwrap(), CentroidMode::PixelMean).unwrap();
        assert!((m1.dice - 2.0 * m1.iou / (1.0 + m1.iou)).abs() < 1e-12);
        let m2 = mask_pair_metrics(&a, &b, &GsdConfig::new(0.6).unwrap(), CentroidMode::PixelMean).unwrap();
        assert_eq!(m2.area_error, 4.0 * m1.area_error);
        assert_eq!(m2.center_error.map(|e| e / 2.0), m1.center_error);
        assert_eq!((m2.iou, m2.dice), (m1.iou, m1.dice));
    }
}

#[test]
fn accuracy_is_monotone_and_criteria_agree_when_axis_aligned() {
    let mut r = common::rng(52);
    let pairs: Vec<(DetBox, DetBox)> = (0..300)
        .map(|_| {
            let gt = common::random_rbox(&mut r, (100.0, 100.0), 0.0, (10.0, 60.0));
            let p = common::random_rbox(&mut r, (gt.cx, gt.cy), 8.0, (10.0, 60.0));
            (DetBox::Rbox(p), DetBox::Rbox(gt))
        })
        .collect();
    for crit in [Criterion::Rbox, Criterion::Hbox] {
        let accs: Vec<f64> = (1..=20).map(|n| acc_at(&pairs, n as f64 / 20.0, crit).unwrap()).collect();
        assert!(accs.windows(2).all(|a| a[1] <= a[0]));
    }
    // axis-aligned pairs score the same under both criteria
    let aligned: Vec<(DetBox, DetBox)> = pairs
        .iter()
        .map(|(p, g)| {
            let (p, g) = (p.as_rbox(), g.as_rbox());
            (DetBox::Rbox(RBox { theta: 0.0, ..p }), DetBox::Rbox(RBox { theta: 0.0, ..g }))
        })
        .collect();
    for t in [0.25, 0.5, 0.75] {
        assert_eq!(acc_at(&aligned, t, Criterion::Rbox).unwrap(), acc_at(&aligned, t, Criterion::Hbox).unwrap());
    }
}

#[test]
fn hull_predictions_open_a_criterion_gap() {
    let cfg = SynthConfig { rotated_fraction: Some(1.0), ..Default::default() };
    let scenes = synth_batch(0, 200, &cfg).unwrap();
    let pairs: Vec<(RBox, RBox)> =
        scenes.iter().map(|s| (RBox::from_hbox(&rbox_to_hbox(&s.gt_rbox)), s.gt_rbox)).collect();
    let g = criterion_gap(&pairs, 0.5).unwrap();
    assert_eq!(g.acc_hbox, 1.0);
    assert!(g.gap >= 0.10, "{g:?}");
}

#[test]
fn planted_rotation_fraction_is_exact() {
    for (n, frac) in [(500, 0.6), (100, 0.25), (7, 0.5)] {
        let k = (frac * n as f64).round() as usize;
        assert_eq!(rotation_plan(9, n, frac).iter().filter(|b| **b).count(), k);
    }
    let cfg = SynthConfig { rotated_fraction: Some(0.6), ..Default::default() };
    let boxes: Vec<RBox> = synth_batch(100, 500, &cfg).unwrap().iter().map(|s| s.gt_rbox).collect();
    let st = rotation_stats(&boxes, 1.0).unwrap();
    assert_eq!(st.rotated, 300);
    assert_eq!(format!("{:.3}", st.fraction_rotated), "0.600");
}

#[test]
fn planted_signal_separates_and_attention_peaks_inside() {
    let cfg = SynthConfig::default();
    for seed in 0..100 {
        let scene = synth_scene(seed, &cfg).unwrap();
        let (inside, outside) = planted_cosines(&scene);
        let min_in = inside.iter().copied().fold(f64::INFINITY, f64::min);
        let max_out = outside.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(min_in - max_out >= 0.5, "seed {seed}");

        let (_, att) = mcp_forward_with_attention(&scene.query, &scene.reference, DEFAULT_ATTENTION_EPS).unwrap();
        for (a, lvl) in att.iter().zip(&scene.reference.levels) {
            let s = lvl.stride();
            let inside_any = (0..lvl.h).any(|i| {
                (0..lvl.w).any(|j| {
                    common::inside(
                        (s / 2 + j as u32 * s) as f64,
                        (s / 2 + i as u32 * s) as f64,
                        &scene.gt_rbox,
                    )
                })
            });
            if inside_any {
                let (i, j) = a.argmax();
                let (x, y) = ((s / 2 + j as u32 * s) as f64, (s / 2 + i as u32 * s) as f64);
                assert!(common::inside(x, y, &scene.gt_rbox), "seed {seed} level {}", lvl.k);
            }
        }
    }
}

#[test]
fn scene_records_round_trip_through_jsonl() {
    let cfg = SynthConfig { noise: 0.1, ..Default::default() };
    let recs: Vec<AnnotationRecord> = synth_batch(3, 20, &cfg).unwrap().iter().map(scene_record).collect();
    let mut buf = Vec::new();
    write_records(&recs, &mut buf).unwrap();
    let back = read_records_strict(&buf[..]).unwrap();
    let mut again = Vec::new();
    write_records(&back, &mut again).unwrap();
    assert_eq!(buf, again);
    for (a, b) in recs.iter().zip(&back) {
        assert!((a.gt_rbox.theta - b.gt_rbox.theta).abs() < 1e-9);
    }
}

#[test]
fn pipeline_localizes_planted_targets() {
    let clean = run_pipeline(0, 50, &PipelineConfig::default(), 0).unwrap();
    assert_eq!(clean.eval.acc50, 1.0);
    assert!(clean.eval.acc75 >= 0.9, "{:?}", clean.eval);
    let noisy = run_pipeline(0, 50, &PipelineConfig::with_noise(0.3), 0).unwrap();
    assert!(noisy.eval.acc50 >= 0.8, "{:?}", noisy.eval);
}
