use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use map_eval::estimation::estimate_target as run_estimate;
use map_eval::geometry::{PlaneModel, Point3, TargetPosePair};
use map_eval::io::{read_gps_poses, read_pcd, write_gps_poses, write_pcd, PcdEncoding};
use map_eval::metrics::DimensionMode;
use map_eval::pipeline::{check_keys, run_evaluation, target_seed, tight_crop, RunConfig, TargetFailure};
use map_eval::registration::{fit_rigid_2d, RegistrationError};
use map_eval::report::{write_absolute_table, write_relative_table, RegistrationSummary, ReportDocument};
use map_eval::scene::{generate_scene, write_labels, SceneSpec};
use serde::Serialize;

use crate::{CropArgs, EstimateArgs, EvaluateArgs, Failure, RegisterArgs, RunArgs, SynthArgs};

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).map_err(input)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
        }
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Input(format!("stdout: {e}"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))
}

fn failure_list(failures: &[TargetFailure]) -> String {
    failures
        .iter()
        .map(|f| {
            if f.target_id.is_empty() {
                format!("{}: {}", f.code, f.message)
            } else {
                format!("{}: {}: {}", f.target_id, f.code, f.message)
            }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.run)?;
    if let Some(p) = args.map {
        cfg.map_path = Some(p);
        cfg.pre_cropped_dir = None;
    }
    if let Some(d) = args.pre_cropped {
        cfg.pre_cropped_dir = Some(d);
        cfg.map_path = None;
    }
    if let Some(g) = args.gps {
        cfg.gps_path = Some(g);
    }
    if let Some(m) = args.registration_mode {
        cfg.registration_mode = m;
    }
    if let Some(d) = args.dim {
        cfg.dimension_mode = d;
    }

    let outcome = run_evaluation(&cfg).map_err(input)?;
    let doc = ReportDocument::from_outcome(&outcome);
    emit(args.out.as_deref(), &doc.to_json())?;

    if let Some(dir) = &args.csv_dir {
        if let Some(report) = &outcome.report {
            create_dir(dir)?;
            let rows = [(args.sequence.as_str(), report)];
            let open = |name: &str| File::create(dir.join(name)).map_err(|e| Failure::Input(format!("{name}: {e}")));
            write_relative_table(&rows, open("relative.csv")?).map_err(input)?;
            write_absolute_table(&rows, open("absolute.csv")?).map_err(input)?;
        }
    }

    match (&doc.relative_error, &doc.absolute_error) {
        (Some(r), Some(a)) => eprintln!(
            "{} targets: E_rel {:.4} m (σ {:.4}), E_abs {:.4} m (σ {:.4})",
            outcome.estimates.len(),
            r.mean,
            r.std,
            a.mean,
            a.std
        ),
        _ => eprintln!("{} targets estimated; no metrics", outcome.estimates.len()),
    }
    if outcome.is_complete() {
        Ok(())
    } else {
        Err(Failure::Estimation(failure_list(&outcome.failures)))
    }
}

#[derive(Serialize)]
struct EstimateOutput {
    target_id: String,
    position: Point3,
    sample_spread: Point3,
    retries_used: usize,
    samples: usize,
}

pub fn estimate_target(args: EstimateArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.run)?;
    cfg.estimation.validate().map_err(input)?;
    let cloud = read_pcd(&args.cloud).map_err(input)?.cloud;
    let id = args.id.unwrap_or_else(|| cloud.frame_label.clone());
    let est = run_estimate(&cloud, &PlaneModel::ground(), &id, cfg.seed, &cfg.estimation)
        .map_err(|e| Failure::Estimation(format!("{}: {e}", e.name())))?;
    let out = EstimateOutput {
        target_id: est.target_id,
        position: est.position,
        sample_spread: est.sample_spread,
        retries_used: est.retries_used,
        samples: est.sample_positions.len(),
    };
    emit(args.out.as_deref(), &to_json(&out))
}

#[derive(Serialize)]
struct CroppedTarget {
    target_id: String,
    path: PathBuf,
    loose_points: usize,
    tight_points: usize,
    ground: PlaneModel,
}

#[derive(Serialize)]
struct CropOutput {
    targets: Vec<CroppedTarget>,
    failures: Vec<TargetFailure>,
}

pub fn crop(args: CropArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.run)?;
    cfg.crop.validate().map_err(input)?;
    let map_path = args
        .map
        .or(cfg.map_path.clone())
        .ok_or_else(|| Failure::Input("map_path is required (config key or --map)".into()))?;
    let gps_path = args
        .gps
        .or(cfg.gps_path.clone())
        .ok_or_else(|| Failure::Input("gps_path is required (config key or --gps)".into()))?;
    let map = read_pcd(&map_path).map_err(input)?.cloud;
    let mut gps = read_gps_poses(&gps_path).map_err(input)?;
    gps.sort_by(|a, b| a.target_id.cmp(&b.target_id));
    create_dir(&args.out_dir)?;

    let mut out = CropOutput { targets: Vec::new(), failures: Vec::new() };
    for (index, target) in gps.iter().enumerate() {
        match tight_crop(&map, target, &cfg.crop, target_seed(cfg.seed, index)) {
            Ok((loose, tight, ground)) => {
                let path = args.out_dir.join(format!("{}.pcd", target.target_id));
                write_pcd(&tight, &path, PcdEncoding::Binary).map_err(input)?;
                out.targets.push(CroppedTarget {
                    target_id: target.target_id.clone(),
                    path,
                    loose_points: loose.len(),
                    tight_points: tight.len(),
                    ground,
                });
            }
            Err(f) => out.failures.push(f),
        }
    }
    emit(None, &to_json(&out))?;
    if out.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Estimation(failure_list(&out.failures)))
    }
}

#[derive(Serialize)]
struct RegisteredTarget {
    target_id: String,
    estimated: Point3,
    registered: Point3,
    ground_truth: Point3,
    residual: f64,
    error: f64,
}

#[derive(Serialize)]
struct RegisterOutput {
    registration: RegistrationSummary,
    dimension_mode: DimensionMode,
    targets: Vec<RegisteredTarget>,
}

pub fn register(args: RegisterArgs) -> Result<(), Failure> {
    let estimates = read_gps_poses(&args.estimates).map_err(input)?;
    let truth: BTreeMap<String, Point3> =
        read_gps_poses(&args.gps).map_err(input)?.into_iter().map(|g| (g.target_id, g.position)).collect();
    let mut pairs = Vec::new();
    for e in &estimates {
        let g =
            truth.get(&e.target_id).ok_or_else(|| Failure::Input(format!("no ground truth for `{}`", e.target_id)))?;
        pairs.push(TargetPosePair::new(e.target_id.clone(), e.position, *g));
    }
    pairs.sort_by(|a, b| a.target_id.cmp(&b.target_id));
    let fit = fit_rigid_2d(&pairs, args.registration_mode).map_err(|e| match e {
        RegistrationError::TooFewPairs(_) => input(e),
        other => Failure::Estimation(other.to_string()),
    })?;
    let t = &fit.transform;
    let m = t.rotation();
    let targets = pairs
        .iter()
        .zip(&fit.residuals)
        .map(|(p, r)| {
            let registered = t.apply(&p.estimated);
            RegisteredTarget {
                target_id: p.target_id.clone(),
                estimated: p.estimated,
                registered,
                ground_truth: p.ground_truth,
                residual: *r,
                error: args.dim.distance(&registered, &p.ground_truth),
            }
        })
        .collect();
    let out = RegisterOutput {
        registration: RegistrationSummary {
            mode: args.registration_mode,
            rotation_deg: t.angle().to_degrees(),
            rotation: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
            translation: [t.translation().x, t.translation().y],
            objective: fit.objective,
            iterations: fit.iterations,
        },
        dimension_mode: args.dim,
        targets,
    };
    emit(args.out.as_deref(), &to_json(&out))
}

fn load_scene_spec(path: &Path) -> Result<SceneSpec, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let known = serde_json::to_value(SceneSpec::default()).expect("serializable");
    check_keys(&value, &known).map_err(input)?;
    serde_json::from_value(value).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

pub fn synth(args: SynthArgs) -> Result<(), Failure> {
    let mut spec = match &args.config {
        Some(p) => load_scene_spec(p)?,
        None => SceneSpec { targets: SceneSpec::ellipse_targets(5, 15.0, 10.0), ..SceneSpec::default() },
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let scene = generate_scene(&spec).map_err(input)?;
    create_dir(&args.out_dir)?;
    let encoding = if args.ascii { PcdEncoding::Ascii } else { PcdEncoding::Binary };
    write_pcd(&scene.map, args.out_dir.join("map.pcd"), encoding).map_err(input)?;
    write_gps_poses(&scene.truth, args.out_dir.join("truth.csv")).map_err(input)?;
    write_labels(&scene, &spec.targets, args.out_dir.join("labels.csv")).map_err(input)?;
    eprintln!("{} points, {} targets written to {}", scene.map.len(), scene.truth.len(), args.out_dir.display());
    Ok(())
}
