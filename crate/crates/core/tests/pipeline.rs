use proptest::prelude::*;

use dategrade::align::MirrorMode;
use dategrade::cli::{generate_scene, process_pair, FixtureSpec, GridConfig, PipelineConfig};
use dategrade::dataset::{AnnotationSet, View, ViewKey};
use dategrade::detect::OracleBackend;
use dategrade::grade::{StageTimings, WeightCalibration};

fn small_config(rows: usize, cols: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(WeightCalibration::new(0.5, 0.1).unwrap());
    cfg.tray_mm = [80.0, 112.5];
    cfg.grid = GridConfig { rows, cols };
    cfg.emit_timings = false;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn jitter_free_oracle_reproduces_truth(
        seed in any::<u64>(),
        rows in 2usize..6,
        cols in 2usize..8,
        perspective in 0.0f64..0.12,
        center_jitter in 0.0f64..0.1,
    ) {
        let cfg = small_config(rows, cols);
        let mut spec = FixtureSpec::for_config(&cfg, 1, seed);
        spec.perspective = perspective;
        spec.center_jitter = center_jitter;
        let g = generate_scene(&spec, 0);
        let id = &g.truth.id;
        let mut set = AnnotationSet::new(cfg.taxonomy.names());
        set.insert(ViewKey::new(id.as_str(), View::Top), g.top_labels.clone()).unwrap();
        set.insert(ViewKey::new(id.as_str(), View::Bottom), g.bottom_labels.clone()).unwrap();
        let backend = OracleBackend::new(set, 0.0, seed);
        let rep = process_pair(id, &g.top, &g.bottom, &cfg, &backend, StageTimings::default()).unwrap();

        prop_assert_eq!(cfg.mirror, MirrorMode::Horizontal);
        prop_assert_eq!(rep.unassigned_count, 0);
        prop_assert_eq!(rep.total_dates, rows * cols);
        for d in &g.truth.dates {
            let r = rep.records.iter().find(|r| (r.row, r.col) == (d.row, d.col)).unwrap();
            prop_assert_eq!(r.top_class, Some(d.top_class));
            prop_assert_eq!(r.bottom_class, Some(d.bottom_class));
            prop_assert_eq!(r.final_class, d.final_class);
            // weight follows the calibration on the measured area
            prop_assert!((r.weight_g - (0.5 * r.area_mm2 + 0.1)).abs() < 1e-9);
        }
        let counts: Vec<usize> = rep.per_class.iter().map(|c| c.count).collect();
        prop_assert_eq!(counts, g.truth.class_counts(cfg.taxonomy.len()));
    }
}

#[test]
fn measured_area_tracks_ellipse_area() {
    let cfg = PipelineConfig::new(WeightCalibration::new(1.0, 0.0).unwrap());
    let spec = FixtureSpec::for_config(&cfg, 1, 11);
    let g = generate_scene(&spec, 0);
    let id = &g.truth.id;
    let mut set = AnnotationSet::new(cfg.taxonomy.names());
    set.insert(ViewKey::new(id.as_str(), View::Top), g.top_labels.clone()).unwrap();
    set.insert(ViewKey::new(id.as_str(), View::Bottom), g.bottom_labels.clone()).unwrap();
    let backend = OracleBackend::new(set, 0.0, 0);
    let rep = process_pair(id, &g.top, &g.bottom, &cfg, &backend, StageTimings::default()).unwrap();
    for d in &g.truth.dates {
        let r = rep.records.iter().find(|r| (r.row, r.col) == (d.row, d.col)).unwrap();
        let rel = (r.area_mm2 - d.area_mm2).abs() / d.area_mm2;
        assert!(rel < 0.03, "cell ({}, {}): {} vs {}", d.row, d.col, r.area_mm2, d.area_mm2);
    }
}
