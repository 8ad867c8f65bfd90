//! Write every built-in experiment configuration as JSON.
//!
//! `cargo run --example dump_presets -- configs` produces editable starting
//! points for `metafp -c`.

use std::path::PathBuf;

use metafp_core::harness::{ExperimentConfig, ExperimentKind};

fn main() -> metafp_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "configs".into()));
    std::fs::create_dir_all(&dir)?;
    for kind in ExperimentKind::ALL {
        let cfg = ExperimentConfig::preset(kind, 1)?;
        let path = dir.join(format!("{}.json", kind.name()));
        std::fs::write(&path, serde_json::to_string_pretty(&cfg)? + "\n")?;
        println!("{}", path.display());
    }
    Ok(())
}
