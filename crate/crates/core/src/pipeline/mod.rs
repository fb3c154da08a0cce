//! Experiment configuration, end-to-end runs and their file artifacts.

pub mod artifacts;
pub mod config;
mod run;

pub use artifacts::{
    export_scatter, read_assignments, read_matrix, read_report, scatter_svg, write_assignments,
    write_embeddings, write_matrix, write_report, Overlay, ReportRow, INVALID, REPORT_HEADER,
};
pub use config::{
    DataConfig, Descriptor, EncoderSettings, ExperimentConfig, Method, PipelineConfig,
    PipelineKind, Reduction, SourceKind,
};
pub use run::{
    baseline_descriptors, cluster_with, encode_all, evaluate, load_data, load_raw, obtain_encoder,
    reduce_points, run, run_baseline, run_strats, LoadedData, RunOutput,
};
