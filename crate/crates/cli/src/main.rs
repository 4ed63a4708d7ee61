//! `bench`: command-line driver for the garment mocap benchmark.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use garment_mocap::bench::{
    emit_plot_data, run_benchmark, simulate_cell, write_report, BenchConfig, BenchmarkReport, CellCoord,
};
use garment_mocap::garment::{classify_drape, generate_garment, measure_drape, GarmentCategory, GarmentSpec};
use garment_mocap::kinematics::Skeleton;
use garment_mocap::mesh::{build_parametric_body, cap_boundaries, parse_obj, write_obj, BuildLabel, TriMesh};

#[derive(Parser)]
#[command(name = "bench", version, about = "Garment drape vs. motion capture accuracy benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of a sweep and write report.json, report.csv and plot tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `output_dir`, relative to the config file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drape ratio of a garment OBJ over a covered-body OBJ. Open meshes are capped first.
    Drape {
        #[arg(long)]
        garment: PathBuf,
        #[arg(long)]
        body: PathBuf,
    },
    /// Run one cell (`motion/build/drape_class/method`) and write its artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cell: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit the CSV (and optionally plot tables) of a saved report.json.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        plots: bool,
        /// Defaults to the directory holding the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a garment and write it, with its covered body, as OBJ files.
    Garment {
        #[arg(long, default_value = "male_medium")]
        build: BuildLabel,
        #[arg(long, default_value = "tshirt")]
        category: GarmentCategory,
        #[arg(long)]
        class: u8,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = BenchConfig::load(&config)?;
            let base = base_dir(&config);
            let out = out.unwrap_or_else(|| base.join(&cfg.output_dir));
            let report = run_benchmark(&cfg, &base)?;
            for path in write_report(&report, &out)?.into_iter().chain(emit_plot_data(&report, &out)?) {
                println!("wrote {}", path.display());
            }
            let failed: Vec<_> = report.cells.iter().filter(|c| !c.status.is_ok()).collect();
            for c in &failed {
                eprintln!("cell {} failed: {:?}", c.id, c.status);
            }
            println!("{} cells, {} failed", report.cells.len(), failed.len());
            Ok(failed.is_empty())
        }
        Command::Drape { garment, body } => {
            let g = load_closed(&garment)?;
            let b = load_closed(&body)?;
            let ratio = measure_drape(&g, &b)?;
            println!("drape {ratio:.6} class {}", classify_drape(ratio));
            Ok(true)
        }
        Command::Simulate { config, cell, out } => {
            let cfg = BenchConfig::load(&config)?;
            let base = base_dir(&config);
            let coord = CellCoord::parse(&cell, &cfg)?;
            let out = out.unwrap_or_else(|| base.join(&cfg.output_dir).join("cells").join(cell.replace('/', "_")));
            let (result, artifacts) = simulate_cell(&cfg, &base, coord)?;
            std::fs::create_dir_all(&out).with_context(|| out.display().to_string())?;
            for (name, body) in &artifacts.files {
                let path = out.join(name);
                std::fs::write(&path, body).with_context(|| path.display().to_string())?;
                println!("wrote {}", path.display());
            }
            let path = out.join("cell.json");
            std::fs::write(&path, serde_json::to_string_pretty(&result)?).with_context(|| path.display().to_string())?;
            println!("wrote {}", path.display());
            if !result.status.is_ok() {
                eprintln!("cell {} failed: {:?}", result.id, result.status);
            }
            Ok(result.status.is_ok())
        }
        Command::Report { input, plots, out } => {
            let report = BenchmarkReport::load(&input)?;
            let out = out.unwrap_or_else(|| base_dir(&input));
            std::fs::create_dir_all(&out).with_context(|| out.display().to_string())?;
            let path = out.join("report.csv");
            std::fs::write(&path, report.to_csv()).with_context(|| path.display().to_string())?;
            println!("wrote {}", path.display());
            if plots {
                for path in emit_plot_data(&report, &out)? {
                    println!("wrote {}", path.display());
                }
            }
            Ok(report.all_ok())
        }
        Command::Garment { build, category, class, out } => {
            let body = build_parametric_body(build, &Skeleton::smpl())?;
            let g = generate_garment(&body, &GarmentSpec::new(category, class, build)?)?;
            std::fs::create_dir_all(&out).with_context(|| out.display().to_string())?;
            for (name, mesh) in [("garment.obj", &g.mesh), ("covered.obj", &g.covered_body), ("body.obj", &body.template)] {
                let path = out.join(name);
                std::fs::write(&path, write_obj(mesh)).with_context(|| path.display().to_string())?;
                println!("wrote {}", path.display());
            }
            println!("drape {:.6} class {}", g.drape, classify_drape(g.drape));
            Ok(true)
        }
    }
}

fn load_closed(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let mesh = parse_obj(&text).with_context(|| path.display().to_string())?;
    if mesh.is_watertight() {
        return Ok(mesh);
    }
    if mesh.faces().is_empty() {
        bail!("{}: no faces", path.display());
    }
    cap_boundaries(&mesh).with_context(|| format!("{}: capping open boundaries", path.display()))
}
