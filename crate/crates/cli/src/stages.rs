//! The processing stages. Each stage reads its inputs from files and writes
//! its outputs to files, so running them one by one and running the
//! pipeline produce the same bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hdr_fringe::io::{
    read_image_stack, read_phase_map, read_point_cloud, read_saturation_map, read_text,
    write_pgm, write_phase_map, write_point_cloud, write_saturation_map, write_text,
};
use hdr_fringe::sim::{render_stacks, Scene, View, BUILTIN_SCENES};
use hdr_fringe::stereo::{read_cameras, write_cameras};
use hdr_fringe::{
    densest_only, fuse_levels, gen_phase_shifting, match_pair, naive_phase_shifting, sat_map,
    triangulate, FusionReport, PhaseKind, PhaseMap, RectifiedPair, TriangulationConfig,
};

use crate::compare::{compare_maps, CompareOptions, Comparison};
use crate::config::PipelineConfig;
use crate::error::CliError;

pub const VIEWS: [View; 2] = [View::Left, View::Right];

/// File names of the dataset and of every stage output.
pub mod layout {
    use super::*;

    /// Fringe image `n` (0-based) of level `m` (1-based).
    pub fn fringe(root: &Path, view: View, m: usize, n: usize) -> PathBuf {
        root.join(view.name()).join(format!("level{m}_shift{n:02}.pgm"))
    }

    pub fn truth_phase(root: &Path, view: View) -> PathBuf {
        root.join("truth").join(format!("{}_phase.pfm", view.name()))
    }

    /// Ground-truth surface point of every left pixel, row-major.
    pub fn truth_cloud(root: &Path) -> PathBuf {
        root.join("truth").join("cloud.ply")
    }

    pub fn wrapped(root: &Path, view: View, m: usize) -> PathBuf {
        root.join("phase").join(format!("{}_level{m}_wrapped.pfm", view.name()))
    }

    pub fn satmap(root: &Path, view: View, m: usize) -> PathBuf {
        root.join("phase").join(format!("{}_level{m}_satmap.pgm", view.name()))
    }

    pub fn fused(root: &Path, view: View) -> PathBuf {
        root.join("fused").join(format!("{}.pfm", view.name()))
    }

    pub fn source(root: &Path, view: View) -> PathBuf {
        root.join("fused").join(format!("{}_source.pgm", view.name()))
    }

    pub fn report_text(root: &Path, view: View) -> PathBuf {
        root.join("fused").join(format!("{}_report.txt", view.name()))
    }

    pub fn report_kv(root: &Path, view: View) -> PathBuf {
        root.join("fused").join(format!("{}_report.kv", view.name()))
    }

    pub fn matches(root: &Path) -> PathBuf {
        root.join("matches.txt")
    }

    pub fn cloud(root: &Path) -> PathBuf {
        root.join("cloud.ply")
    }

    pub fn metrics(root: &Path) -> PathBuf {
        root.join("metrics.kv")
    }
}

fn require(stage: &'static str, path: PathBuf) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingInput { stage, path })
    }
}

fn create_dirs(stage: &'static str, path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Stage {
        stage,
        source: hdr_fringe::Error::Io {
            path: path.to_path_buf(),
            source,
        },
    })
}

fn parent_dir(stage: &'static str, file: &Path) -> Result<(), CliError> {
    match file.parent() {
        Some(p) => create_dirs(stage, p),
        None => Ok(()),
    }
}

/// Resolves a built-in scene name or a scene file path.
pub fn load_scene(cfg: &PipelineConfig) -> Result<Scene, CliError> {
    let name = &cfg.simulation.scene;
    if BUILTIN_SCENES.contains(&name.as_str()) {
        return Scene::builtin_with(name, &cfg.simulation.scene_params)
            .map_err(CliError::stage("simulate"));
    }
    let path = Path::new(name);
    if path.is_file() {
        return Scene::load(path).map_err(CliError::stage("simulate"));
    }
    Err(CliError::UnknownScene {
        name: name.clone(),
        known: BUILTIN_SCENES.join(", "),
    })
}

/// Renders a dataset into `cfg.output`: fringe images of both views, the
/// ground-truth phase and cloud, and the camera file. Returns the files
/// written.
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    const STAGE: &str = "simulate";
    let scene = load_scene(cfg)?;
    let (left, right) = cfg.simulation.rig.cameras().map_err(CliError::stage(STAGE))?;
    let out = render_stacks(
        &scene,
        &cfg.projector(),
        &cfg.simulation.sensor,
        &left,
        &right,
        cfg.seed,
    )
    .map_err(CliError::stage(STAGE))?;
    let root = &cfg.output;
    let mut written = Vec::new();
    for view in VIEWS {
        for (m, (stack, _)) in out.view(view).levels().iter().enumerate() {
            for (n, img) in stack.samples().iter().enumerate() {
                let path = layout::fringe(root, view, m + 1, n);
                parent_dir(STAGE, &path)?;
                write_pgm(img, &path).map_err(CliError::stage(STAGE))?;
                written.push(path);
            }
        }
        let path = layout::truth_phase(root, view);
        parent_dir(STAGE, &path)?;
        write_phase_map(&out.truth.view(view).phase, &path).map_err(CliError::stage(STAGE))?;
        written.push(path);
    }
    let path = layout::truth_cloud(root);
    write_point_cloud(&out.truth.cloud, &path).map_err(CliError::stage(STAGE))?;
    written.push(path);
    let path = root.join(&cfg.camera_file);
    parent_dir(STAGE, &path)?;
    write_cameras(&path, &left, &right).map_err(CliError::stage(STAGE))?;
    written.push(path);
    Ok(written)
}

/// Saturation maps and wrapped phases of every level of both views.
pub fn cmd_phase(cfg: &PipelineConfig, naive: bool) -> Result<(), CliError> {
    const STAGE: &str = "phase";
    let hdr = cfg.hdr()?;
    create_dirs(STAGE, &cfg.output.join("phase"))?;
    for view in VIEWS {
        for (m, level) in cfg.levels.iter().enumerate() {
            let paths = (0..level.steps)
                .map(|n| require(STAGE, layout::fringe(&cfg.input, view, m + 1, n)))
                .collect::<Result<Vec<_>, _>>()?;
            let shifts = hdr_fringe::phase::uniform_shifts(level.steps);
            let stack = read_image_stack(&paths, &shifts, level.period).map_err(CliError::stage(STAGE))?;
            let sat = sat_map(&stack, &hdr);
            let wrapped = if naive {
                naive_phase_shifting(&stack)
            } else {
                gen_phase_shifting(&stack, &sat, &hdr)
            }
            .map_err(CliError::stage(STAGE))?;
            write_saturation_map(&sat, layout::satmap(&cfg.output, view, m + 1))
                .map_err(CliError::stage(STAGE))?;
            write_phase_map(&wrapped, layout::wrapped(&cfg.output, view, m + 1))
                .map_err(CliError::stage(STAGE))?;
        }
    }
    Ok(())
}

fn read_levels(cfg: &PipelineConfig, view: View, stage: &'static str) -> Result<Vec<PhaseMap>, CliError> {
    (1..=cfg.levels.len())
        .map(|m| {
            let p = require(stage, layout::wrapped(&cfg.output, view, m))?;
            read_phase_map(p, PhaseKind::Wrapped).map_err(CliError::stage(stage))
        })
        .collect()
}

/// Multi-frequency fusion of both views; with `naive` set, the densest
/// unwrapped level is written instead.
pub fn cmd_fuse(cfg: &PipelineConfig, naive: bool) -> Result<(), CliError> {
    const STAGE: &str = "fuse";
    let hdr = cfg.hdr()?;
    create_dirs(STAGE, &cfg.output.join("fused"))?;
    for view in VIEWS {
        let wrapped = read_levels(cfg, view, STAGE)?;
        if naive {
            let phase = densest_only(&wrapped, &cfg.periods()).map_err(CliError::stage(STAGE))?;
            write_phase_map(&phase, layout::fused(&cfg.output, view)).map_err(CliError::stage(STAGE))?;
            continue;
        }
        let satmaps = cfg
            .levels
            .iter()
            .enumerate()
            .map(|(m, level)| {
                let p = require(STAGE, layout::satmap(&cfg.output, view, m + 1))?;
                read_saturation_map(p, level.steps).map_err(CliError::stage(STAGE))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let fused = fuse_levels(&satmaps, &cfg.steps(), &cfg.periods(), &wrapped, &hdr)
            .map_err(CliError::stage(STAGE))?;
        let out = &cfg.output;
        write_phase_map(&fused.phase, layout::fused(out, view)).map_err(CliError::stage(STAGE))?;
        write_pgm(&fused.source, layout::source(out, view)).map_err(CliError::stage(STAGE))?;
        write_text(layout::report_text(out, view), &fused.report.to_text())
            .map_err(CliError::stage(STAGE))?;
        write_text(layout::report_kv(out, view), &fused.report.to_key_value())
            .map_err(CliError::stage(STAGE))?;
    }
    Ok(())
}

fn read_fused(cfg: &PipelineConfig, view: View, stage: &'static str) -> Result<PhaseMap, CliError> {
    let p = require(stage, layout::fused(&cfg.output, view))?;
    read_phase_map(p, PhaseKind::Equivalent).map_err(CliError::stage(stage))
}

/// Sub-pixel correspondences between the fused phase maps.
pub fn cmd_match(cfg: &PipelineConfig) -> Result<usize, CliError> {
    const STAGE: &str = "match";
    let left = read_fused(cfg, View::Left, STAGE)?;
    let right = read_fused(cfg, View::Right, STAGE)?;
    let pair = RectifiedPair::new(&left, &right).map_err(CliError::stage(STAGE))?;
    let matches = match_pair(&pair, cfg.max_phase_gap);
    write_text(layout::matches(&cfg.output), &matches.to_text()).map_err(CliError::stage(STAGE))?;
    Ok(matches.len())
}

fn camera_file(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    let path = cfg.camera_path();
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::CameraFileNotFound { path })
    }
}

fn rms(errors: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = errors.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    (n > 0).then(|| (s / n as f64).sqrt())
}

/// Triangulates the matches and writes the cloud and the metrics file.
/// Returns the metrics text.
pub fn cmd_reconstruct(cfg: &PipelineConfig, naive: bool) -> Result<String, CliError> {
    const STAGE: &str = "reconstruct";
    let cams = camera_file(cfg)?;
    let (left, right) = read_cameras(&cams).map_err(CliError::stage(STAGE))?;
    let mpath = require(STAGE, layout::matches(&cfg.output))?;
    let text = read_text(&mpath).map_err(CliError::stage(STAGE))?;
    let matches = hdr_fringe::MatchList::from_text(&text).map_err(|e| CliError::Stage {
        stage: STAGE,
        source: hdr_fringe::Error::Format {
            format: "match list",
            path: mpath.clone(),
            reason: e.to_string(),
        },
    })?;
    let tri_cfg = TriangulationConfig {
        max_residual: cfg.max_residual,
    };
    let tri = triangulate(&matches, &left, &right, &tri_cfg).map_err(CliError::stage(STAGE))?;
    write_point_cloud(&tri.cloud, layout::cloud(&cfg.output)).map_err(CliError::stage(STAGE))?;

    let (w, h) = (matches.width, matches.height);
    let mut m = String::new();
    let _ = writeln!(m, "mode={}", if naive { "naive" } else { "hdr" });
    let _ = writeln!(m, "pixels={}", w * h);
    for view in VIEWS {
        let fused = read_fused(cfg, view, STAGE)?;
        let _ = writeln!(m, "valid_fraction_{}={:?}", view.name(), fused.valid_fraction());
        let report = layout::report_kv(&cfg.output, view);
        if !naive && report.is_file() {
            let r = read_text(&report)
                .and_then(|t| FusionReport::from_key_value(&t))
                .map_err(CliError::stage(STAGE))?;
            let dense = 1.0 - r.densest_invalid as f64 / r.pixels.max(1) as f64;
            let _ = writeln!(m, "densest_valid_fraction_{}={:?}", view.name(), dense);
        }
        let truth = layout::truth_phase(&cfg.input, view);
        if truth.is_file() {
            let truth = read_phase_map(&truth, PhaseKind::Equivalent).map_err(CliError::stage(STAGE))?;
            let c = compare_maps(&fused, &fused, &truth, &CompareOptions::default())
                .map_err(CliError::stage(STAGE))?;
            let _ = writeln!(m, "rms_phase_{}={:?}", view.name(), c.fused.rms);
        }
    }
    let _ = writeln!(m, "matches={}", matches.len());
    let _ = writeln!(m, "points={}", tri.cloud.len());
    let _ = writeln!(m, "rejected_rank={}", tri.rejected_rank);
    let _ = writeln!(m, "rejected_residual={}", tri.rejected_residual);
    let truth = layout::truth_cloud(&cfg.input);
    if truth.is_file() {
        let pts = read_point_cloud(&truth).map_err(CliError::stage(STAGE))?;
        if pts.len() != w * h {
            return Err(CliError::DimensionMismatch {
                stage: STAGE,
                detail: format!(
                    "ground-truth cloud has {} points, expected one per pixel ({})",
                    pts.len(),
                    w * h
                ),
            });
        }
        let errs = tri
            .cloud
            .points()
            .iter()
            .zip(tri.cloud.provenance())
            .map(|(p, &(u, v))| p[2] - pts[v * w + u][2]);
        if let Some(r) = rms(errs) {
            let _ = writeln!(m, "rms_z={r:?}");
        }
    }
    write_text(layout::metrics(&cfg.output), &m).map_err(CliError::stage(STAGE))?;
    Ok(m)
}

/// phase, fuse, match and reconstruct in sequence.
pub fn cmd_pipeline(cfg: &PipelineConfig, naive: bool) -> Result<String, CliError> {
    camera_file(cfg)?;
    cmd_phase(cfg, naive)?;
    cmd_fuse(cfg, naive)?;
    cmd_match(cfg)?;
    cmd_reconstruct(cfg, naive)
}

/// Loads three densest-scale phase maps and compares them.
pub fn cmd_compare(
    fused: &Path,
    naive: &Path,
    truth: &Path,
    opts: &CompareOptions,
) -> Result<Comparison, CliError> {
    const STAGE: &str = "compare";
    let load = |p: &Path| -> Result<PhaseMap, CliError> {
        let p = require(STAGE, p.to_path_buf())?;
        read_phase_map(p, PhaseKind::Equivalent).map_err(CliError::stage(STAGE))
    };
    let (f, n, t) = (load(fused)?, load(naive)?, load(truth)?);
    compare_maps(&f, &n, &t, opts).map_err(CliError::stage(STAGE))
}
