//! Benchmark sweep: configuration, cell execution and reports.

use std::path::{Path, PathBuf};

use thiserror::Error;

mod config;
mod report;
mod run;

pub use config::{BenchConfig, GarmentChoice, MethodConfig, MotionConfig, MotionSource};
pub use report::{
    emit_plot_data, plot_tables, write_report, BenchmarkReport, CellResult, CellStatus, CellTiming, ReportMetadata,
    ReportRow, CRMSE_NOTE, CSV_HEADER, PLOT_METRICS,
};
pub use run::{cells, dress, run_benchmark, run_cells, simulate, simulate_cell, CellArtifacts, CellCoord};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("unknown cell `{0}` (expected motion/build/drape_class/method)")]
    UnknownCell(String),
    #[error("report json: {0}")]
    Json(String),
}

impl BenchError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        BenchError::Io { path: path.to_path_buf(), message: e.to_string() }
    }
}
