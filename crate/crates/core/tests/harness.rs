//! Harness pipeline: artifacts, plot files and file formats.

use std::fs;

use metafp_core::harness::{
    dataset_to_bytes, export_dataset, import_dataset, run_experiment, write_artifacts, ClassifierSpec, ExperimentConfig,
    ExperimentKind,
};
use metafp_core::Error;

fn rows(path: &std::path::Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

/// The distance preset with the fast centroid classifier.
fn quick_distance(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Distance, seed).unwrap();
    cfg.classifier = ClassifierSpec::Centroid {
        train_fraction: 0.5,
        epsilon: 1e-6,
    };
    cfg.packets_per_code = 40;
    cfg
}

#[test]
fn distance_plots_have_expected_shape() {
    let cfg = quick_distance(4);
    let dir = tempfile::tempdir().unwrap();
    let artifacts = run_experiment(&cfg).unwrap();
    write_artifacts(&artifacts, dir.path()).unwrap();

    let acc = rows(&dir.path().join("accuracy.csv"));
    assert_eq!(acc.len(), 3);
    let distances: Vec<f64> = acc.iter().map(|r| num(&r[1])).collect();
    assert_eq!(distances, vec![7.0, 27.0, 53.0]);
    for v in &artifacts.report.variants {
        let roc = rows(&dir.path().join(format!("roc-{}.csv", v.scenario_id)));
        let tpr: Vec<f64> = roc.iter().map(|r| num(&r[1])).collect();
        let fpr: Vec<f64> = roc.iter().map(|r| num(&r[0])).collect();
        assert!(tpr.windows(2).all(|w| w[1] >= w[0]));
        assert!(fpr.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!((fpr[0], tpr[0]), (0.0, 0.0));
        assert_eq!((*fpr.last().unwrap(), *tpr.last().unwrap()), (1.0, 1.0));
    }
}

#[test]
fn attack_box_statistics_are_ordered() {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Attack, 6).unwrap();
    cfg.attack.as_mut().unwrap().replay_packets = 50;
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(&run_experiment(&cfg).unwrap(), dir.path()).unwrap();
    let boxes = rows(&dir.path().join("mahalanobis-box.csv"));
    assert_eq!(boxes.len(), 12);
    for r in &boxes {
        for part in [&r[1..6], &r[6..11]] {
            let v: Vec<f64> = part.iter().map(|s| num(s)).collect();
            assert!(v.windows(2).all(|w| w[0] <= w[1]), "{v:?}");
        }
    }
    let replay = rows(&dir.path().join("replay.csv"));
    assert_eq!(replay.len(), 3);
}

#[test]
fn dataset_files_round_trip_and_report_truncation() {
    let cfg = quick_distance(8);
    let ds = metafp_core::harness::generate_datasets(&cfg).unwrap().remove(0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.mfpd");
    export_dataset(&ds, &path).unwrap();
    let back = import_dataset(&path).unwrap();
    assert_eq!(dataset_to_bytes(&back).unwrap(), fs::read(&path).unwrap());
    assert_eq!(back.records.len(), ds.records.len());

    let bytes = fs::read(&path).unwrap();
    let cut = dir.path().join("cut.mfpd");
    fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    match import_dataset(&cut) {
        Err(Error::Parse { offset, .. }) => assert_eq!(offset, bytes.len() as u64 - 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn config_files_with_includes_load() {
    let dir = tempfile::tempdir().unwrap();
    let base = ExperimentConfig::preset(ExperimentKind::Custom, 1).unwrap();
    fs::write(dir.path().join("base.json"), serde_json::to_string(&base).unwrap()).unwrap();
    fs::write(
        dir.path().join("run.json"),
        r#"{"include": "base.json", "seed": 77, "packets_per_code": 12}"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&dir.path().join("run.json")).unwrap();
    assert_eq!(cfg.seed, 77);
    assert_eq!(cfg.packets_per_code, 12);
    assert_eq!(cfg.scenarios, base.scenarios);
    assert_ne!(cfg.digest().unwrap(), base.digest().unwrap());
}
