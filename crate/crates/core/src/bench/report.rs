use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{BenchConfig, GarmentChoice};
use super::BenchError;
use crate::cloth::ClothParams;
use crate::garment::DrapeClassTable;
use crate::kinematics::MotionClass;
use crate::mesh::BuildLabel;

pub const CRMSE_NOTE: &str =
    "CRMSE is swing-only: joint angles are recovered from positions, so bone twist is not measured";

pub const CSV_HEADER: &str = "motion_class,build,drape_class,method,variant,mpjpe_m,crmse,crmse_deg,frames,source";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub engine_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub crmse_note: String,
    pub noise_rms: f64,
    pub garment: GarmentChoice,
    pub drape_table: DrapeClassTable,
    pub cloth: ClothParams,
}

impl ReportMetadata {
    pub fn new(config: &BenchConfig) -> Self {
        Self {
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            crmse_note: CRMSE_NOTE.to_string(),
            noise_rms: config.noise_rms,
            garment: config.garment,
            drape_table: config.drape_table,
            cloth: config.cloth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { error: String },
}

impl CellStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, CellStatus::Ok)
    }
}

/// One metric variant of a cell. Failed cells and variants with nothing to
/// score keep the row with empty values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: String,
    pub mpjpe_m: Option<f64>,
    pub crmse: Option<f64>,
    pub crmse_deg: Option<f64>,
    pub frames: usize,
    /// Joints scored by this variant.
    pub joints: usize,
}

impl ReportRow {
    pub fn empty(variant: &str) -> Self {
        Self { variant: variant.to_string(), mpjpe_m: None, crmse: None, crmse_deg: None, frames: 0, joints: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub id: String,
    pub motion: String,
    pub motion_class: MotionClass,
    pub build: BuildLabel,
    pub drape_class: u8,
    pub method: String,
    /// `markers`, `ingest` or `surrogate`.
    pub source: String,
    pub status: CellStatus,
    pub measured_drape: Option<f64>,
    pub cloth_marker_joints: Option<usize>,
    pub rows: Vec<ReportRow>,
}

impl CellResult {
    pub fn row(&self, variant: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub id: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub metadata: ReportMetadata,
    pub cells: Vec<CellResult>,
    /// Wall-clock time per cell; the only part that differs between runs.
    #[serde(default)]
    pub timing: Vec<CellTiming>,
}

#[derive(Serialize)]
struct Body<'a> {
    metadata: &'a ReportMetadata,
    cells: &'a [CellResult],
}

impl BenchmarkReport {
    pub fn all_ok(&self) -> bool {
        self.cells.iter().all(|c| c.status.is_ok())
    }

    pub fn cell(&self, id: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.id == id)
    }

    /// Pretty JSON without the timing section, for reproducibility checks.
    pub fn body_json(&self) -> String {
        serde_json::to_string_pretty(&Body { metadata: &self.metadata, cells: &self.cells })
            .expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        serde_json::from_str(text).map_err(|e| BenchError::Json(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_json(&text).map_err(|e| BenchError::Json(format!("{}: {e}", path.display())))
    }

    /// Flat rows, one per cell variant.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            for r in &c.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    c.motion,
                    c.build,
                    c.drape_class,
                    c.method,
                    r.variant,
                    num(r.mpjpe_m),
                    num(r.crmse),
                    num(r.crmse_deg),
                    r.frames,
                    c.source
                );
            }
        }
        out
    }
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

fn write(path: PathBuf, body: &str) -> Result<PathBuf, BenchError> {
    std::fs::write(&path, body).map_err(|e| BenchError::io(&path, e))?;
    Ok(path)
}

/// Writes `report.json` and `report.csv` into `dir`.
pub fn write_report(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    Ok(vec![
        write(dir.join("report.json"), &report.to_json())?,
        write(dir.join("report.csv"), &report.to_csv())?,
    ])
}

pub const PLOT_METRICS: [&str; 2] = ["mpjpe_m", "crmse_deg"];

/// Plot tables keyed by `(motion, metric)`: drape class down, one column per
/// `method/variant`, each value the mean over builds of the successful cells.
pub fn plot_tables(report: &BenchmarkReport) -> BTreeMap<(String, String), String> {
    let mut out = BTreeMap::new();
    let motions: Vec<String> = {
        let mut m: Vec<String> = report.cells.iter().map(|c| c.motion.clone()).collect();
        m.dedup();
        m.sort();
        m.dedup();
        m
    };
    for motion in motions {
        let cells: Vec<&CellResult> = report.cells.iter().filter(|c| c.motion == motion).collect();
        let mut series: Vec<String> = Vec::new();
        let mut classes: Vec<u8> = Vec::new();
        for c in &cells {
            for r in &c.rows {
                let s = format!("{}/{}", c.method, r.variant);
                if !series.contains(&s) {
                    series.push(s);
                }
            }
            if !classes.contains(&c.drape_class) {
                classes.push(c.drape_class);
            }
        }
        classes.sort();
        for metric in PLOT_METRICS {
            let mut t = String::from("drape_class");
            for s in &series {
                t.push(',');
                t.push_str(s);
            }
            t.push('\n');
            for &class in &classes {
                t.push_str(&class.to_string());
                for s in &series {
                    let vals: Vec<f64> = cells
                        .iter()
                        .filter(|c| c.drape_class == class && c.status.is_ok())
                        .flat_map(|c| c.rows.iter().filter(|r| format!("{}/{}", c.method, r.variant) == *s))
                        .filter_map(|r| if metric == "mpjpe_m" { r.mpjpe_m } else { r.crmse_deg })
                        .collect();
                    t.push(',');
                    if !vals.is_empty() {
                        t.push_str(&format!("{:.9}", vals.iter().sum::<f64>() / vals.len() as f64));
                    }
                }
                t.push('\n');
            }
            out.insert((motion.clone(), metric.to_string()), t);
        }
    }
    out
}

/// Writes the plot tables as `<dir>/plots/<motion>_<metric>.csv`.
pub fn emit_plot_data(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if report.cells.is_empty() {
        return Err(BenchError::Config("no cells to plot".into()));
    }
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| BenchError::io(&plots, e))?;
    plot_tables(report)
        .into_iter()
        .map(|((motion, metric), body)| write(plots.join(format!("{motion}_{metric}.csv")), &body))
        .collect()
}
