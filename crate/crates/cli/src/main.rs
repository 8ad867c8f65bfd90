//! `metafp`: run the fingerprint experiments from the command line.
//!
//! Exit codes: 0 success, 2 configuration error (including bad arguments),
//! 3 data or file error, 4 numeric failure, 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use metafp_core::auth::{authenticate_p1, authenticate_p2, authenticate_p3, AuthServer, EnrollOptions};
use metafp_core::harness::{
    emit_plots_csv, export_dataset, generate_datasets, import_dataset, load_model, run_experiment, save_model,
    train_variant, write_artifacts, write_dataset_csv, ExperimentConfig, ExperimentKind, RunReport,
    TrainedModel,
};
use metafp_core::metrics::evaluate;
use metafp_core::phy::{generate_dataset, Dataset, Transmitter};
use metafp_core::{Error, Result, SeedTree};

#[derive(Parser, Debug)]
#[command(name = "metafp", version, about = "Metasurface RF-fingerprint experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config file (JSON, may `include` others).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Built-in experiment used when no config is given.
    #[arg(long, short, default_value = "custom")]
    experiment: String,
    /// Master seed; overrides the config's seed.
    #[arg(long, short)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's, then `out`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Use the full packet counts instead of desk-scale ones.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the datasets of an experiment.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Also write each dataset as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Train the experiment's classifier and save the models.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory with previously generated datasets.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run an experiment end to end, or score a saved model on a dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Saved model to score (`.mfpm` network or `.json` centroid model).
        #[arg(long, requires = "dataset")]
        model: Option<PathBuf>,
        /// Dataset (`.mfpd`) whose records are all scored.
        #[arg(long, requires = "model")]
        dataset: Option<PathBuf>,
    },
    /// Enroll a node and walk through the three protocols.
    AuthDemo {
        #[command(flatten)]
        common: Common,
    },
    /// Run the replay attacks.
    Attack {
        #[command(flatten)]
        common: Common,
    },
    /// Summarise a report and re-emit its plot CSVs.
    Report {
        /// Path to a `report.json`.
        report: PathBuf,
        /// Directory for plot CSVs.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 3,
        Error::Numeric(_) | Error::Domain(_) => 4,
        Error::Stage { .. } => 1,
    }
}

fn load_config(common: &Common, default_kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let kind = match default_kind {
                Some(k) if common.experiment == "custom" => k,
                _ => ExperimentKind::parse(&common.experiment)?,
            };
            ExperimentConfig::preset(kind, 0)?
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.paper_scale {
        cfg.paper_scale = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn generate(common: &Common, csv: bool) -> Result<()> {
    let cfg = load_config(common, None)?;
    let dir = out_dir(common, &cfg)?;
    for (s, ds) in cfg.scenarios.iter().zip(generate_datasets(&cfg)?) {
        let path = dir.join(format!("dataset-{}.mfpd", s.id));
        export_dataset(&ds, &path)?;
        if csv {
            let file = std::fs::File::create(dir.join(format!("dataset-{}.csv", s.id)))?;
            write_dataset_csv(&ds, std::io::BufWriter::new(file))?;
        }
        println!("{}: {} records, {} classes -> {}", s.id, ds.len(), ds.n_classes(), path.display());
    }
    Ok(())
}

fn train_cmd(common: &Common, data: Option<&Path>) -> Result<()> {
    let cfg = load_config(common, None)?;
    let dir = out_dir(common, &cfg)?;
    let datasets: Vec<Dataset> = match data {
        Some(d) => cfg
            .scenarios
            .iter()
            .map(|s| import_dataset(&d.join(format!("dataset-{}.mfpd", s.id))))
            .collect::<Result<_>>()?,
        None => generate_datasets(&cfg)?,
    };
    for (s, ds) in cfg.scenarios.iter().zip(&datasets) {
        let (model, train_idx, test_idx, report) = train_variant(&cfg, &s.id, ds)?;
        match &model {
            TrainedModel::Cnn(m) => save_model(m, &dir.join(format!("model-{}.mfpm", s.id)))?,
            TrainedModel::Centroid(c) => write_json(&dir.join(format!("model-{}.json", s.id)), c)?,
        }
        if let Some(r) = &report {
            r.write_csv(std::fs::File::create(dir.join(format!("training-{}.csv", s.id)))?)?;
        }
        write_json(
            &dir.join(format!("split-{}.json", s.id)),
            &serde_json::json!({ "train": train_idx, "test": test_idx }),
        )?;
        println!("{}: trained on {} records, {} held out", s.id, train_idx.len(), test_idx.len());
    }
    Ok(())
}

fn evaluate_cmd(common: &Common, model: Option<&Path>, dataset: Option<&Path>) -> Result<()> {
    if let (Some(m), Some(d)) = (model, dataset) {
        let model = if m.extension().is_some_and(|e| e == "json") {
            TrainedModel::Centroid(serde_json::from_slice(&std::fs::read(m)?)?)
        } else {
            TrainedModel::Cnn(load_model(m)?)
        };
        let ds = import_dataset(d)?;
        let all: Vec<usize> = (0..ds.len()).collect();
        let scores = model.scores(&ds, &all)?;
        let report = evaluate(&scores, &ds.labels())?;
        println!("accuracy {:.4}  f1 macro {:.4}  auc micro {:.4}", report.accuracy, report.f1_macro, report.auc_micro);
        if let Some(out) = &common.out {
            std::fs::create_dir_all(out)?;
            write_json(&out.join("evaluation.json"), &report)?;
        }
        return Ok(());
    }
    let cfg = load_config(common, None)?;
    let dir = out_dir(common, &cfg)?;
    run_and_write(&cfg, &dir)
}

/// Run, write artifacts, and keep the wall-clock time out of the
/// deterministic report in `timing.json`.
fn run_and_write(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let started = std::time::Instant::now();
    let artifacts = run_experiment(cfg)?;
    let elapsed = started.elapsed().as_secs_f64();
    let written = write_artifacts(&artifacts, dir)?;
    write_json(
        &dir.join("timing.json"),
        &serde_json::json!({ "config_digest": artifacts.report.config_digest, "wall_clock_s": elapsed }),
    )?;
    print_summary(&artifacts.report);
    info!("wrote {} files in {elapsed:.1} s", written.len() + 1);
    Ok(())
}

fn auth_demo(common: &Common) -> Result<()> {
    let cfg = load_config(common, Some(ExperimentKind::Attack))?;
    let dir = out_dir(common, &cfg)?;
    // Protocol 3 needs enrollments on at least two channels.
    let mut scenario = cfg.scenarios[0].clone();
    let channel = scenario.channels[0];
    if scenario.channels.len() < 2 {
        scenario.channels.push(if channel > 1 { channel - 1 } else { channel + 1 });
    }
    let n_ch = scenario.channels.len();
    let codes = cfg.codes.resolve(&cfg.surface, channel)?;
    let seeds = SeedTree::new(cfg.seed).subtree("auth-demo");
    let ds = generate_dataset(&cfg.surface, &scenario, &codes, cfg.packets(), &seeds)?;
    let mut server = AuthServer::new(Default::default(), cfg.seed)?;
    let half = codes.len() / 2;
    let labels = |codes: std::ops::Range<usize>| codes.flat_map(|c| c * n_ch..(c + 1) * n_ch).collect::<Vec<_>>();
    server.enroll("node-a", &ds.select_classes(&labels(0..half)), &EnrollOptions::default())?;
    server.enroll("node-b", &ds.select_classes(&labels(half..codes.len())), &EnrollOptions::default())?;
    server.save(&dir.join("auth-db.json"))?;

    let tx = Transmitter::new(&cfg.surface, &scenario, &seeds)?;
    // Node A's local label `l` is code `l / n_ch` on channel index `l % n_ch`.
    let fresh = |label: usize, n: u64| {
        tx.packet(
            &codes[label / n_ch],
            scenario.channels[label % n_ch],
            &mut seeds.stream(&format!("demo/{label}/{n}")),
        )
    };
    let record = server.record("node-a").expect("enrolled").clone();
    let node = server.provision("node-a")?;
    let mut lines = Vec::new();
    let mut show = |name: &str, outcome: &metafp_core::ProtocolOutcome| {
        let last = outcome.transcript.last().map(|m| format!("{m:?}")).unwrap_or_default();
        let verdict = if outcome.accepted { "accepted" } else { "rejected" };
        println!("{name:<34} {verdict:<9} {}", last.chars().take(60).collect::<String>());
        lines.push(serde_json::json!({ "case": name, "accepted": outcome.accepted, "last": last }));
    };
    show("P1 genuine", &authenticate_p1(&server, &fresh(0, 0)?, "node-a")?);
    show("P1 other node's code", &authenticate_p1(&server, &fresh(half * n_ch, 0)?, "node-a")?);
    show("P1 unknown device", &authenticate_p1(&server, &fresh(0, 1)?, "node-x")?);
    let designated: Vec<usize> = record
        .designated_sequence
        .iter()
        .map(|&g| server.classes[g as usize].1 as usize)
        .collect();
    let sequence = designated.iter().enumerate().map(|(i, &l)| fresh(l, 10 + i as u64)).collect::<Result<Vec<_>>>()?;
    show("P2 designated sequence", &authenticate_p2(&server, &node, &sequence)?);
    let mut wrong = sequence.clone();
    wrong.reverse();
    show("P2 reordered sequence", &authenticate_p2(&server, &node, &wrong)?);
    let mut forged = node.clone();
    forged.expected_digest = vec![0; forged.expected_digest.len()];
    show("P2 node with wrong digest", &authenticate_p2(&server, &forged, &sequence)?);
    let per_channel = record
        .channel_labels
        .iter()
        .map(|(&ch, &g)| Ok((ch, fresh(server.classes[g as usize].1 as usize, 20 + ch as u64)?)))
        .collect::<Result<_>>()?;
    show("P3 every allowed channel", &authenticate_p3(&server, &per_channel, "node-a")?);
    write_json(&dir.join("auth-demo.json"), &lines)?;
    Ok(())
}

fn attack_cmd(common: &Common) -> Result<()> {
    let cfg = load_config(common, Some(ExperimentKind::Attack))?;
    if cfg.attack.is_none() {
        return Err(Error::config("config has no attack block"));
    }
    let dir = out_dir(common, &cfg)?;
    run_and_write(&cfg, &dir)
}

fn report_cmd(path: &Path, plots: Option<&Path>) -> Result<()> {
    let report: RunReport = serde_json::from_slice(&std::fs::read(path)?)
        .map_err(|e| Error::Parse { offset: e.column() as u64, message: format!("{}: {e}", path.display()) })?;
    print_summary(&report);
    if let Some(dir) = plots {
        for p in emit_plots_csv(&report, dir)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn print_summary(report: &RunReport) {
    println!("experiment {} seed {} digest {}", report.experiment.name(), report.seed, &report.config_digest[..12]);
    println!("{:<24} {:>9} {:>8} {:>8} {:>9} {:>9}", "scenario", "distance", "snr_db", "classes", "accuracy", "f1_macro");
    for v in &report.variants {
        println!(
            "{:<24} {:>9.2} {:>8.1} {:>8} {:>9.4} {:>9.4}",
            v.scenario_id, v.distance, v.snr_db, v.n_classes, v.evaluation.accuracy, v.evaluation.f1_macro
        );
    }
    if let Some(a) = &report.attack {
        println!("legitimate acceptance      {:.4}", a.legitimate_acceptance);
        for (name, r) in [("co-located signal replay", &a.signal_colocated), ("far signal replay", &a.signal_far)] {
            println!(
                "{name:<26} {}/{} accepted at {:.4} m (correlation {:.4})",
                r.accepted, r.packets, r.attacker_distance, r.correlation
            );
        }
        println!(
            "feature replay             {}/{} accepted, min separation {:.3}",
            a.feature.burst_accepted, a.feature.burst_packets, a.feature.min_separation
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { common, csv } => generate(common, *csv),
        Command::Train { common, data } => train_cmd(common, data.as_deref()),
        Command::Evaluate { common, model, dataset } => evaluate_cmd(common, model.as_deref(), dataset.as_deref()),
        Command::AuthDemo { common } => auth_demo(common),
        Command::Attack { common } => attack_cmd(common),
        Command::Report { report, plots } => report_cmd(report, plots.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_root_cause() {
        assert_eq!(exit_code(&Error::config("x")), 2);
        assert_eq!(exit_code(&Error::data("x")), 3);
        assert_eq!(exit_code(&Error::numeric("x")), 4);
        assert_eq!(exit_code(&Error::numeric("x").in_stage("train")), 4);
        assert_eq!(exit_code(&Error::config("x").in_stage("config")), 2);
    }
}
