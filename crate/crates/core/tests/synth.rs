mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ctsd_core::biometrics::{aggregate_video, measure_frame, InvalidFramePolicy};
use ctsd_core::pipeline_io::{load_manifest, read_mask_dir, Split};
use ctsd_core::raster::{chain_perimeter, feret_extents, largest_component, pixel_area, trace_contour};
use ctsd_core::synth::{
    gen_dataset, gen_video, perturb_mask, ramanujan_perimeter, render_ellipse_mask, PerturbMode, SweepProfile,
    SynthDatasetSpec, VideoTruth, CTS_SR_CUTOFF, NORMAL_SR_CEILING, TRUTH_FILE,
};
use ctsd_core::{Calibration, FrameMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn ramanujan_forms_agree() {
    for (a, b) in [(10.0, 10.0), (30.0, 20.0), (40.0, 10.0), (25.5, 12.25)] {
        let (x, y) = (ramanujan_perimeter(a, b), oracle::ramanujan(a, b));
        assert!((x / y - 1.0).abs() < 1e-3, "{a} {b}: {x} vs {y}");
    }
    assert!((ramanujan_perimeter(7.0, 7.0) - 14.0 * std::f64::consts::PI).abs() < 1e-9);
}

#[test]
fn ellipse_raster_matches_area_and_single_pixel_rule() {
    let m = render_ellipse_mask((64.0, 64.0), (30.0, 20.0), (128, 128)).unwrap();
    let area = std::f64::consts::PI * 600.0;
    assert!((m.count() as f64 / area - 1.0).abs() < 0.02);
    let dot = render_ellipse_mask((5.5, 5.5), (0.6, 0.6), (11, 11)).unwrap();
    assert_eq!(dot.count(), 1);
    assert!(dot.get(5, 5));
    assert!(render_ellipse_mask((5.0, 5.0), (6.0, 2.0), (20, 20)).is_err());
}

#[test]
fn ellipse_raster_is_mirror_symmetric_about_pixel_centre_grid() {
    let m = render_ellipse_mask((20.5, 15.5), (11.3, 6.7), (41, 31)).unwrap();
    for r in 0..31 {
        for c in 0..41 {
            assert_eq!(m.get(c, r), m.get(40 - c, r));
            assert_eq!(m.get(c, r), m.get(c, 30 - r));
        }
    }
}

#[test]
fn random_ellipses_measure_close_to_analytic_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..60 {
        let (a, b) = (rng.gen_range(10.0..40.0), rng.gen_range(10.0..40.0));
        let center = (50.0 + rng.gen_range(0.0..1.0), 50.0 + rng.gen_range(0.0..1.0));
        let m = render_ellipse_mask(center, (a, b), (100, 100)).unwrap();
        let unit = Calibration::unit();
        let comp = largest_component(&m).unwrap();
        assert!((pixel_area(&comp, &unit) / (std::f64::consts::PI * a * b) - 1.0).abs() < 0.02);
        let (w, h) = feret_extents(&comp, &unit).unwrap();
        assert!(
            (w - 2.0 * a).abs() <= 1.0 && (h - 2.0 * b).abs() <= 1.0,
            "{a} {b}: {w} {h}"
        );
        let p = chain_perimeter(&trace_contour(&comp).unwrap(), &unit);
        assert!((p / oracle::ramanujan(a, b) - 1.0).abs() < 0.08);
    }
}

fn profile(csa_ratio: f64) -> SweepProfile {
    SweepProfile {
        n_frames: 16,
        base_axes_px: (24.0, 14.0),
        csa_ratio,
        compression_center: 0.5,
        compression_width: 0.3,
        fr_peak: 2.6,
        center_drift_px: 2.0,
        label: u8::from(csa_ratio >= CTS_SR_CUTOFF),
    }
}

#[test]
fn video_truth_matches_measurement_and_is_seeded() {
    let v = gen_video(&profile(1.75), (128, 128), 3).unwrap();
    assert_eq!(v, gen_video(&profile(1.75), (128, 128), 3).unwrap());
    assert!((v.analytic_max_fr() - 2.6).abs() < 1e-12);
    let calib = Calibration::unit();
    for (m, t) in v.masks.iter().zip(&v.truth) {
        let FrameMeasure::Valid(f) = measure_frame(m, &calib) else {
            panic!("invalid frame")
        };
        assert!((f.csa_mm2 / t.area_px - 1.0).abs() < 0.02);
        assert!((f.width_mm - 2.0 * t.semi_axes.0).abs() <= 1.0);
        assert!((f.ad_mm - 2.0 * t.semi_axes.1).abs() <= 1.0);
        assert!((f.perimeter_mm / t.perimeter_px - 1.0).abs() < 0.08);
    }
}

#[test]
fn perturbations_behave() {
    let m = render_ellipse_mask((32.0, 32.0), (12.0, 8.0), (64, 64)).unwrap();
    assert_eq!(perturb_mask(&m, PerturbMode::Dilate, 0, 1), m);
    assert!(perturb_mask(&m, PerturbMode::Dilate, 1, 1).count() > m.count());
    assert!(perturb_mask(&m, PerturbMode::Erode, 1, 1).count() < m.count());
    let s = perturb_mask(&m, PerturbMode::Shift, 2, 5);
    assert_eq!(s.count(), m.count());
    assert_eq!(s, perturb_mask(&m, PerturbMode::Shift, 2, 5));
    let tiny = render_ellipse_mask((5.5, 5.5), (0.6, 0.6), (11, 11)).unwrap();
    assert!(perturb_mask(&tiny, PerturbMode::Erode, 1, 0).is_empty());
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn dataset_is_deterministic_labelled_and_split() {
    let spec = SynthDatasetSpec {
        n_cts: 5,
        n_normal: 5,
        n_frames: 8,
        ..SynthDatasetSpec::default()
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let m1 = gen_dataset(&spec, d1.path()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| gen_dataset(&spec, d2.path())).unwrap();
    assert_eq!(tree(d1.path()), tree(d2.path()));
    assert_eq!(m1.videos.len(), 10);
    assert_eq!(load_manifest(&d1.path().join("manifest.json")).unwrap(), m1);

    for rec in &m1.videos {
        let dir = d1.path().join(&rec.frames_dir);
        let truth: VideoTruth = serde_json::from_str(&fs::read_to_string(dir.join(TRUTH_FILE)).unwrap()).unwrap();
        assert_eq!(Some(truth.label), rec.label);
        if truth.label == 1 {
            assert!(truth.analytic_sr >= CTS_SR_CUTOFF);
        } else {
            assert!(truth.analytic_sr < NORMAL_SR_CEILING);
        }
        let masks = read_mask_dir(&d1.path().join(rec.gt_masks_dir.as_ref().unwrap())).unwrap();
        assert_eq!(masks.len(), 8);
        let calib = Calibration::new(rec.mm_per_px_x, rec.mm_per_px_y).unwrap();
        let frames: Vec<FrameMeasure> = masks.iter().map(|m| measure_frame(m, &calib)).collect();
        assert!(frames.iter().all(FrameMeasure::is_valid));
        let d = aggregate_video(&frames, InvalidFramePolicy::Exclude).unwrap();
        assert!((d.sr / truth.analytic_sr - 1.0).abs() < 0.02);
    }
    let splits = spec.split_assignment();
    let n = |s: Split| splits.iter().filter(|&&x| x == s).count();
    assert_eq!((n(Split::Train), n(Split::Val), n(Split::Test)), (8, 1, 1));
}
