use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{BenchConfig, GarmentChoice, MethodConfig, MotionSource};
use super::report::{BenchmarkReport, CellResult, CellStatus, CellTiming, ReportMetadata, ReportRow};
use super::BenchError;
use crate::cloth::{build_spring_network, simulate_network, BodyFrame, ClothParams, ClothState};
use crate::garment::{generate_garment_with, Garment, GarmentCategory, GarmentSpec};
use crate::kinematics::smpl::JOINT_NAMES;
use crate::kinematics::{parse_bvh, procedural_motion, write_bvh, JointTransform, MotionSequence, Skeleton};
use crate::markerless::{ingest_estimates, normalize_estimate, pelvis_align, surrogate_estimator, ExternalEstimate, JointMap, SURROGATE_SOURCE};
use crate::mesh::{build_parametric_body, surface_point_position, write_obj, BuildLabel, SkinnedBody, TriMesh};
use crate::metrics::{angles_from_positions, crmse_over, mpjpe_over, JointPositionsFrame};
use crate::mocap_marker::{add_marker_noise, cloth_joints, place_markers, reconstruct_pose_from_markers, trajectory_to_csv, MarkerSpec, MarkerTarget, MarkerTrajectory};
use crate::rng::derive_seed;
use crate::Vec3;

/// Coordinates of one benchmark cell, as indices into the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellCoord {
    pub motion: usize,
    pub build: BuildLabel,
    pub drape_class: u8,
    pub method: usize,
}

impl CellCoord {
    /// `motion/build/drape_class/method`, e.g. `basic/male_medium/3/marker_based`.
    pub fn id(&self, config: &BenchConfig) -> String {
        format!(
            "{}/{}/{}/{}",
            config.motions[self.motion].label(),
            self.build,
            self.drape_class,
            config.methods[self.method].kind()
        )
    }

    pub fn parse(id: &str, config: &BenchConfig) -> Result<Self, BenchError> {
        let unknown = || BenchError::UnknownCell(id.to_string());
        let parts: Vec<&str> = id.split('/').collect();
        let [motion, build, class, method] = parts.as_slice() else { return Err(unknown()) };
        let motion = config.motions.iter().position(|m| m.label() == *motion).ok_or_else(unknown)?;
        let build: BuildLabel = build.parse().map_err(|_| unknown())?;
        let drape_class: u8 = class.parse().map_err(|_| unknown())?;
        let method = config.methods.iter().position(|m| m.kind() == *method).ok_or_else(unknown)?;
        if !config.builds.contains(&build) || !config.drape_classes.contains(&drape_class) {
            return Err(unknown());
        }
        Ok(Self { motion, build, drape_class, method })
    }
}

/// Every cell of the sweep, in report order.
pub fn cells(config: &BenchConfig) -> Vec<CellCoord> {
    let mut out = Vec::new();
    for motion in 0..config.motions.len() {
        for &build in &config.builds {
            for &drape_class in &config.drape_classes {
                for method in 0..config.methods.len() {
                    out.push(CellCoord { motion, build, drape_class, method });
                }
            }
        }
    }
    out.sort();
    out
}

/// Text artifacts of one cell, written on request.
#[derive(Debug, Clone, Default)]
pub struct CellArtifacts {
    pub files: Vec<(String, String)>,
}

/// Shared, read-only inputs: bodies per build and source motions.
struct Context<'a> {
    config: &'a BenchConfig,
    base_dir: PathBuf,
    bodies: HashMap<BuildLabel, Result<SkinnedBody, String>>,
    motions: Vec<Result<MotionSequence, String>>,
}

impl<'a> Context<'a> {
    fn new(config: &'a BenchConfig, base_dir: &Path, builds: &[BuildLabel], motions: &[usize]) -> Self {
        let skeleton = Skeleton::smpl();
        let bodies = builds
            .par_iter()
            .map(|&b| (b, build_parametric_body(b, &skeleton).map_err(|e| e.to_string())))
            .collect();
        let motions = (0..config.motions.len())
            .into_par_iter()
            .map(|i| if motions.contains(&i) { load_motion(config, base_dir, i) } else { Err("not loaded".into()) })
            .collect();
        Self { config, base_dir: base_dir.to_path_buf(), bodies, motions }
    }
}

fn load_motion(config: &BenchConfig, base_dir: &Path, index: usize) -> Result<MotionSequence, String> {
    let m = &config.motions[index];
    match &m.source {
        MotionSource::Procedural => {
            let seed = derive_seed(config.seed, &["motion", &m.label()]);
            procedural_motion(m.class, m.duration, m.fps, seed).map_err(|e| e.to_string())
        }
        MotionSource::Bvh(path) => {
            let path = base_dir.join(path);
            let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let seq = parse_bvh(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            let mut seq = seq.reorder_joints(&JOINT_NAMES).map_err(|e| format!("{}: {e}", path.display()))?;
            if !seq.skeleton.is_smpl24() {
                return Err(format!("{}: not the 24-joint SMPL hierarchy", path.display()));
            }
            let keep = ((m.duration * seq.fps).round() as usize).max(1);
            seq.frames.truncate(keep);
            seq.motion_class = m.class;
            Ok(seq)
        }
    }
}

/// Runs every cell of the sweep. Relative paths in the configuration resolve
/// against `base_dir`.
pub fn run_benchmark(config: &BenchConfig, base_dir: &Path) -> Result<BenchmarkReport, BenchError> {
    run_cells(config, base_dir, &cells(config))
}

/// Runs a subset of cells; rows are identical to those of the full sweep.
pub fn run_cells(config: &BenchConfig, base_dir: &Path, coords: &[CellCoord]) -> Result<BenchmarkReport, BenchError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| BenchError::Config(format!("worker pool: {e}")))?;
    let mut coords = coords.to_vec();
    coords.sort();
    let results: Vec<(CellResult, CellTiming, CellArtifacts)> = pool.install(|| {
        let builds: Vec<BuildLabel> = config.builds.iter().copied().filter(|b| coords.iter().any(|c| c.build == *b)).collect();
        let motions: Vec<usize> = (0..config.motions.len()).filter(|m| coords.iter().any(|c| c.motion == *m)).collect();
        let ctx = Context::new(config, base_dir, &builds, &motions);
        coords
            .par_iter()
            .map(|c| {
                let t = Instant::now();
                let (result, artifacts) = run_cell(&ctx, *c, config.export_artifacts);
                let timing = CellTiming { id: result.id.clone(), wall_time_s: t.elapsed().as_secs_f64() };
                log::info!("cell {} {}", result.id, if result.status.is_ok() { "ok" } else { "FAILED" });
                (result, timing, artifacts)
            })
            .collect()
    });
    if config.export_artifacts {
        let out = base_dir.join(&config.output_dir).join("cells");
        for (r, _, a) in &results {
            let dir = out.join(r.id.replace('/', "_"));
            for (name, body) in &a.files {
                std::fs::create_dir_all(&dir).map_err(|e| BenchError::io(&dir, e))?;
                let path = dir.join(name);
                std::fs::write(&path, body).map_err(|e| BenchError::io(&path, e))?;
            }
        }
    }
    let mut cells = Vec::with_capacity(results.len());
    let mut timing = Vec::with_capacity(results.len());
    for (r, t, _) in results {
        cells.push(r);
        timing.push(t);
    }
    Ok(BenchmarkReport { metadata: ReportMetadata::new(config), cells, timing })
}

/// One cell, with its text artifacts (BVH estimate, marker CSV, garment OBJ).
pub fn simulate_cell(
    config: &BenchConfig,
    base_dir: &Path,
    coord: CellCoord,
) -> Result<(CellResult, CellArtifacts), BenchError> {
    config.validate()?;
    let ctx = Context::new(config, base_dir, &[coord.build], &[coord.motion]);
    Ok(run_cell(&ctx, coord, true))
}

fn run_cell(ctx: &Context, coord: CellCoord, keep: bool) -> (CellResult, CellArtifacts) {
    let config = ctx.config;
    let method = &config.methods[coord.method];
    let motion_cfg = &config.motions[coord.motion];
    let mut result = CellResult {
        id: coord.id(config),
        motion: motion_cfg.label(),
        motion_class: motion_cfg.class,
        build: coord.build,
        drape_class: coord.drape_class,
        method: method.kind().to_string(),
        source: match method {
            MethodConfig::MarkerBased => "markers".into(),
            MethodConfig::MarkerlessSurrogate(_) => SURROGATE_SOURCE.into(),
            MethodConfig::MarkerlessIngest { .. } => "ingest".into(),
        },
        status: CellStatus::Ok,
        measured_drape: None,
        cloth_marker_joints: None,
        rows: Vec::new(),
    };
    let mut artifacts = CellArtifacts::default();
    let outcome = catch_unwind(AssertUnwindSafe(|| execute(ctx, coord, &mut result, &mut artifacts, keep)))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panic: {msg}"))
        });
    if let Err(error) = outcome {
        result.status = CellStatus::Failed { error };
        result.rows = method.variants().iter().map(|v| ReportRow::empty(v)).collect();
    }
    (result, artifacts)
}

fn execute(
    ctx: &Context,
    coord: CellCoord,
    result: &mut CellResult,
    artifacts: &mut CellArtifacts,
    keep: bool,
) -> Result<(), String> {
    let config = ctx.config;
    let body = ctx.bodies.get(&coord.build).ok_or("body not built")?.as_ref().map_err(|e| format!("body: {e}"))?;
    let source = ctx.motions[coord.motion].as_ref().map_err(|e| format!("motion: {e}"))?;
    let motion = source.retarget(&body.skeleton).map_err(|e| e.to_string())?;
    let gt: Vec<JointPositionsFrame> = motion.joint_positions().into_iter().map(JointPositionsFrame::all_valid).collect();
    let gt_angles = angles_from_positions(&body.skeleton, &gt).map_err(|e| e.to_string())?;
    let cell_seed = derive_seed(config.seed, &["cell", &result.id]);
    match &config.methods[coord.method] {
        MethodConfig::MarkerBased => {
            let transforms = motion.global_transforms();
            let garment = dress(body, config, coord.drape_class)?;
            result.measured_drape = garment.as_ref().map(|g| g.drape);
            let specs = place_markers(body, garment.as_ref().map(|g| &g.mesh)).map_err(|e| e.to_string())?;
            let states = match &garment {
                Some(g) => simulate(body, g, &transforms, &config.cloth, motion.fps)?,
                None => Vec::new(),
            };
            let traj = track(&specs, body, &transforms, garment.as_ref().map(|g| &g.mesh), &states, motion.fps)?;
            let noisy = add_marker_noise(&traj, config.noise_rms, cell_seed).map_err(|e| e.to_string())?;
            let est = reconstruct_pose_from_markers(&noisy, &body.skeleton, motion.motion_class).map_err(|e| e.to_string())?;
            let est_pos: Vec<JointPositionsFrame> =
                est.joint_positions().into_iter().map(JointPositionsFrame::all_valid).collect();
            let est_angles = angles_from_positions(&body.skeleton, &est_pos).map_err(|e| e.to_string())?;
            let cloth = cloth_joints(&specs, body.skeleton.len());
            result.cloth_marker_joints = Some(cloth.iter().filter(|c| **c).count());
            let all = vec![true; body.skeleton.len()];
            for (variant, mask) in [("all_markers", &all), ("cloth_markers", &cloth)] {
                result.rows.push(score(variant, &gt, &est_pos, &gt_angles, &est_angles, mask));
            }
            if keep {
                artifacts.files.push(("estimate.bvh".into(), write_bvh(&est)));
                artifacts.files.push(("markers.csv".into(), trajectory_to_csv(&noisy)));
                if let Some(g) = &garment {
                    artifacts.files.push(("garment.obj".into(), write_obj(&g.mesh)));
                }
            }
        }
        MethodConfig::MarkerlessSurrogate(profile) => {
            let est = surrogate_estimator(&motion, profile, cell_seed).map_err(|e| e.to_string())?;
            score_markerless(result, &est, body, &gt, &gt_angles)?;
            if keep {
                artifacts.files.push(("estimate.json".into(), crate::markerless::export_estimate(&est)));
            }
        }
        MethodConfig::MarkerlessIngest { path } => {
            let path = path
                .replace("{motion}", &result.motion)
                .replace("{build}", coord.build.as_str())
                .replace("{drape_class}", &coord.drape_class.to_string());
            let est = ingest_estimates(&ctx.base_dir.join(path)).map_err(|e| e.to_string())?;
            if est.source_label == SURROGATE_SOURCE {
                result.source = SURROGATE_SOURCE.into();
            }
            if est.frames.len() != gt.len() {
                return Err(format!("estimate has {} frames, motion has {}", est.frames.len(), gt.len()));
            }
            score_markerless(result, &est, body, &gt, &gt_angles)?;
        }
    }
    Ok(())
}

fn score(
    variant: &str,
    gt: &[JointPositionsFrame],
    est: &[JointPositionsFrame],
    gt_angles: &[crate::metrics::JointAnglesFrame],
    est_angles: &[crate::metrics::JointAnglesFrame],
    mask: &[bool],
) -> ReportRow {
    let mut row = ReportRow::empty(variant);
    row.frames = gt.len();
    row.joints = mask.iter().filter(|m| **m).count();
    if let Ok(m) = mpjpe_over(gt, est, Some(mask)) {
        row.mpjpe_m = Some(m);
    }
    if let Ok(c) = crmse_over(gt_angles, est_angles, Some(mask)) {
        row.crmse = Some(c.value);
        row.crmse_deg = Some(c.degrees);
    }
    row
}

fn score_markerless(
    result: &mut CellResult,
    est: &ExternalEstimate,
    body: &SkinnedBody,
    gt: &[JointPositionsFrame],
    gt_angles: &[crate::metrics::JointAnglesFrame],
) -> Result<(), String> {
    let map = JointMap::builtin(est.convention);
    let norm = normalize_estimate(est, &map, body.skeleton.rest_height()).map_err(|e| e.to_string())?;
    let present = map.present();
    let est_angles = angles_from_positions(&body.skeleton, &norm.absolute).map_err(|e| e.to_string())?;
    result.rows.push(score("absolute", gt, &norm.absolute, gt_angles, &est_angles, &present));
    let gt_aligned: Vec<JointPositionsFrame> = gt.iter().map(pelvis_align).collect();
    result.rows.push(score("pelvis_aligned", &gt_aligned, &norm.pelvis_aligned, gt_angles, &est_angles, &present));
    Ok(())
}

/// Garment for a cell, or `None` when the configuration leaves the body bare.
pub fn dress(body: &SkinnedBody, config: &BenchConfig, class: u8) -> Result<Option<Garment>, String> {
    let categories: &[GarmentCategory] = match config.garment {
        GarmentChoice::None => return Ok(None),
        GarmentChoice::Pair => &[GarmentCategory::Tshirt, GarmentCategory::Trousers],
        GarmentChoice::Tshirt => &[GarmentCategory::Tshirt],
        GarmentChoice::Trousers => &[GarmentCategory::Trousers],
        GarmentChoice::Unicloth => &[GarmentCategory::Unicloth],
    };
    let parts = categories
        .iter()
        .map(|&c| {
            let spec = GarmentSpec::new(c, class, body.build_label).map_err(|e| e.to_string())?;
            generate_garment_with(body, &spec, &config.drape_table).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, String>>()?;
    Garment::combine(&parts).map(Some).map_err(|e| e.to_string())
}

/// Cloth states, one per motion frame.
pub fn simulate(
    body: &SkinnedBody,
    garment: &Garment,
    transforms: &[Vec<JointTransform>],
    params: &ClothParams,
    fps: f64,
) -> Result<Vec<ClothState>, String> {
    let net = build_spring_network(&garment.mesh).map_err(|e| e.to_string())?;
    let frames: Vec<BodyFrame> = transforms
        .iter()
        .map(|t| BodyFrame { capsules: body.posed_capsules(t), pin_positions: garment.pin_targets(body, t) })
        .collect();
    let start = garment.posed_vertices(body, &transforms[0]);
    simulate_network(start, &net, &garment.pinned, params, &frames, fps).map_err(|e| e.to_string())
}

/// Marker positions per frame. Skin markers are skinned directly from the
/// template, which equals reading them off the fully skinned mesh.
fn track(
    specs: &[MarkerSpec],
    body: &SkinnedBody,
    transforms: &[Vec<JointTransform>],
    garment: Option<&TriMesh>,
    cloth: &[ClothState],
    fps: f64,
) -> Result<MarkerTrajectory, String> {
    let rest = body.skeleton.rest_positions();
    let faces = body.template.faces();
    let mut frames = Vec::with_capacity(transforms.len());
    for (f, t) in transforms.iter().enumerate() {
        let cloth_mesh = match garment {
            Some(g) if specs.iter().any(|s| s.target == MarkerTarget::Cloth) => {
                let state = cloth.get(f).ok_or("cloth frame missing")?;
                Some(g.with_positions(state.positions.clone()).map_err(|e| e.to_string())?)
            }
            _ => None,
        };
        let mut row = vec![Vec3::zeros(); specs.len()];
        for s in specs {
            row[s.id()] = match s.target {
                MarkerTarget::Skin => {
                    let face = faces[s.attachment.face];
                    let pts: Vec<Vec3> = face.iter().map(|&v| body.template.vertices()[v]).collect();
                    let w: Vec<_> = face.iter().map(|&v| body.weights[v].clone()).collect();
                    let posed = crate::mesh::skin_points(&pts, &w, &rest, t);
                    posed.iter().zip(s.attachment.barycentric).map(|(p, b)| p * b).sum()
                }
                MarkerTarget::Cloth => {
                    surface_point_position(cloth_mesh.as_ref().ok_or("no cloth")?, &s.attachment).map_err(|e| e.to_string())?
                }
            };
        }
        frames.push(row);
    }
    Ok(MarkerTrajectory { fps, noise_seed: None, frames })
}
