//! Plot-ready CSV files derived from a run report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::run::RunReport;
use crate::error::Result;

/// Write one CSV per figure analogue and return their paths:
/// `roc-<scenario>.csv` (micro-averaged ROC), `accuracy.csv` (one row per
/// scenario, with distance and orientation), `training-<scenario>.csv`
/// (learning curves, CNN only) and, for attack runs, `mahalanobis-box.csv`
/// and `replay.csv`.
pub fn emit_plots_csv(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };

    let mut acc = String::from("scenario,distance_m,orientation_deg,snr_db,n_classes,accuracy,f1_macro,auc_micro\n");
    for v in &report.variants {
        let e = &v.evaluation;
        writeln!(
            acc,
            "{},{},{},{:.3},{},{:.6},{:.6},{:.6}",
            v.scenario_id, v.distance, v.orientation, v.snr_db, v.n_classes, e.accuracy, e.f1_macro, e.auc_micro
        )
        .expect("string write");

        let mut roc = String::from("fpr,tpr\n");
        for (fpr, tpr) in &e.roc_micro {
            writeln!(roc, "{fpr},{tpr}").expect("string write");
        }
        put(format!("roc-{}.csv", v.scenario_id), roc)?;

        if let Some(t) = &v.training {
            let mut out = Vec::new();
            t.write_csv(&mut out)?;
            put(format!("training-{}.csv", v.scenario_id), String::from_utf8(out).expect("ascii"))?;
        }
    }
    put("accuracy.csv".into(), acc)?;

    if let Some(a) = &report.attack {
        let mut boxes = String::from(
            "test,min,q1,median,q3,max,genuine_min,genuine_q1,genuine_median,genuine_q3,genuine_max,separation,accepted\n",
        );
        for (i, t) in a.feature.tests.iter().enumerate() {
            let (x, g) = (&t.attacker, &t.genuine);
            writeln!(
                boxes,
                "{i},{},{},{},{},{},{},{},{},{},{},{},{}",
                x.min, x.q1, x.median, x.q3, x.max, g.min, g.q1, g.median, g.q3, g.max, t.separation, t.accepted
            )
            .expect("string write");
        }
        put("mahalanobis-box.csv".into(), boxes)?;

        let mut replay = String::from("attack,distance_m,packets,accepted,acceptance_rate,correlation\n");
        for (name, r) in [("signal_colocated", &a.signal_colocated), ("signal_far", &a.signal_far)] {
            writeln!(
                replay,
                "{name},{},{},{},{},{}",
                r.attacker_distance, r.packets, r.accepted, r.acceptance_rate, r.correlation
            )
            .expect("string write");
        }
        writeln!(
            replay,
            "feature_burst,,{},{},{},",
            a.feature.burst_packets, a.feature.burst_accepted, a.feature.acceptance_rate
        )
        .expect("string write");
        put("replay.csv".into(), replay)?;
    }
    Ok(written)
}
