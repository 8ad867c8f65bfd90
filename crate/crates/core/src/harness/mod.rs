//! Reproducible experiments: configuration, orchestration, persistence and
//! report emission.

pub mod config;
pub mod io;
pub mod plots;
pub mod run;

pub use config::{sweep_cv, AttackSpec, ClassifierSpec, CodeSpec, ExperimentConfig, ExperimentKind};
pub use io::{
    dataset_from_bytes, dataset_to_bytes, export_dataset, import_dataset, load_model, model_from_bytes,
    model_to_bytes, save_model, write_dataset_csv, SavedModel,
};
pub use plots::emit_plots_csv;
pub use run::{
    attack_bed, generate_datasets, run_attack, run_experiment, train_variant, write_artifacts, AttackBed,
    AttackReport, RunArtifacts, RunReport, TrainedModel, VariantReport, RETIRED_DEVICE, TARGET_DEVICE,
};
