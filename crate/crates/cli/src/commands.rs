//! The `render`, `compare`, `calibrate` and `bench` subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use radsim_core::calibration::{calibrate, CalibrationResult};
use radsim_core::imaging::{quantize, read_pgm, write_pgm, GrayImage};
use radsim_core::metrics::{mutual_information, ssim, MetricConfig};
use radsim_core::rng::derive_seed;
use radsim_core::{PolarImage, Pose, Simulation};
use serde::Serialize;

use crate::config::{load_scene, LoadedScene, OutputConfig};
use crate::error::{CliError, Result};
use crate::trajectory::{load_trajectory, Trajectory};

pub const MANIFEST_FILE: &str = "manifest.csv";

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index}.pgm")
}

/// Seed of frame `index` under base seed `seed`.
pub fn frame_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RenderOptions {
    /// Render with the lidar-like baseline instead of the full model.
    pub lidar_like: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestRow {
    pub index: usize,
    pub timestamp: f64,
    pub seed: u64,
}

fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let probe = dir.join(".radsim-write-probe");
    fs::write(&probe, b"").map_err(CliError::io(&probe))?;
    fs::remove_file(&probe).map_err(CliError::io(&probe))
}

fn export(img: &PolarImage, output: &OutputConfig) -> Result<GrayImage> {
    quantize(img, output.bit_depth, output.scale).map_err(|source| CliError::Image { path: PathBuf::new(), source })
}

/// Renders every trajectory pose to `out_dir/frame_<i>.pgm` plus a manifest.
pub fn render_frames(
    scene: &LoadedScene,
    trajectory: &Trajectory,
    out_dir: &Path,
    opts: RenderOptions,
) -> Result<Vec<ManifestRow>> {
    ensure_writable(out_dir)?;
    let mut sim = scene.simulation.clone();
    if opts.lidar_like {
        sim.trace.lidar_like = true;
        sim.trace.max_bounces = 1;
    }
    let mut rows = Vec::with_capacity(trajectory.len());
    for (index, record) in trajectory.records.iter().enumerate() {
        let seed = frame_seed(scene.config.seed, index);
        let mut img = sim.render(&record.pose, seed)?;
        img.timestamp = record.timestamp;
        let path = out_dir.join(frame_file_name(index));
        write_pgm(&export(&img, &scene.config.output)?, &path)
            .map_err(|source| CliError::Image { path: path.clone(), source })?;
        rows.push(ManifestRow { index, timestamp: record.timestamp, seed });
    }
    let manifest = out_dir.join(MANIFEST_FILE);
    let mut w = csv::Writer::from_path(&manifest).map_err(CliError::csv(&manifest))?;
    for r in &rows {
        w.serialize(r).map_err(CliError::csv(&manifest))?;
    }
    w.flush().map_err(CliError::io(&manifest))?;
    Ok(rows)
}

pub fn cmd_render(config: &Path, trajectory: &Path, out_dir: &Path, opts: RenderOptions) -> Result<Vec<ManifestRow>> {
    let scene = load_scene(config)?;
    let trajectory = load_trajectory(trajectory)?;
    render_frames(&scene, &trajectory, out_dir, opts)
}

/// `frame_<i>.pgm` files of a directory, sorted by index.
pub fn list_frames(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        let index = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("frame_")?.strip_suffix(".pgm")?.parse::<usize>().ok());
        if let Some(i) = index {
            frames.push((i, path));
        }
    }
    frames.sort();
    Ok(frames)
}

pub fn read_frame(path: &Path) -> Result<PolarImage> {
    let gray = read_pgm(path).map_err(|source| CliError::Image { path: path.to_path_buf(), source })?;
    Ok(gray.to_polar(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameScore {
    pub frame_id: usize,
    pub mis: f64,
    pub ssi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub frames: Vec<FrameScore>,
    pub mean_mis: f64,
    pub std_mis: f64,
    pub mean_ssi: f64,
    pub std_ssi: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Scores frame pairs with matching indices in two directories.
pub fn compare_dirs(dir_a: &Path, dir_b: &Path, metric: &MetricConfig) -> Result<Comparison> {
    let a = list_frames(dir_a)?;
    let b = list_frames(dir_b)?;
    if a.is_empty() {
        return Err(CliError::Input(format!("no frame_<i>.pgm files in {}", dir_a.display())));
    }
    if a.len() != b.len() {
        return Err(CliError::Input(format!(
            "frame counts differ: {} in {}, {} in {}",
            a.len(),
            dir_a.display(),
            b.len(),
            dir_b.display()
        )));
    }
    let mut frames = Vec::with_capacity(a.len());
    for ((ia, pa), (ib, pb)) in a.iter().zip(&b) {
        if ia != ib {
            return Err(CliError::Input(format!("frame {ia} has no counterpart in {}", dir_b.display())));
        }
        let (fa, fb) = (read_frame(pa)?, read_frame(pb)?);
        if fa.dims() != fb.dims() {
            return Err(CliError::Input(format!("frame {ia}: dimensions {:?} vs {:?}", fa.dims(), fb.dims())));
        }
        frames.push(FrameScore {
            frame_id: *ia,
            mis: mutual_information(&fa, &fb, metric)?,
            ssi: ssim(&fa, &fb, metric)?,
        });
    }
    let (mean_mis, std_mis) = mean_std(&frames.iter().map(|f| f.mis).collect::<Vec<_>>());
    let (mean_ssi, std_ssi) = mean_std(&frames.iter().map(|f| f.ssi).collect::<Vec<_>>());
    Ok(Comparison { frames, mean_mis, std_mis, mean_ssi, std_ssi })
}

/// CSV `frame_id,mis,ssi`, one row per frame, then `mean` and `std` rows.
pub fn write_comparison(cmp: &Comparison, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::csv(path))?;
    let mut rec = |r: [String; 3]| w.write_record(&r).map_err(CliError::csv(path));
    rec(["frame_id".into(), "mis".into(), "ssi".into()])?;
    for f in &cmp.frames {
        rec([f.frame_id.to_string(), f.mis.to_string(), f.ssi.to_string()])?;
    }
    rec(["mean".into(), cmp.mean_mis.to_string(), cmp.mean_ssi.to_string()])?;
    rec(["std".into(), cmp.std_mis.to_string(), cmp.std_ssi.to_string()])?;
    w.flush().map_err(CliError::io(path))
}

pub fn cmd_compare(dir_a: &Path, dir_b: &Path, out_csv: &Path) -> Result<Comparison> {
    let cmp = compare_dirs(dir_a, dir_b, &MetricConfig::default())?;
    write_comparison(&cmp, out_csv)?;
    Ok(cmp)
}

#[derive(Debug, Clone, Default)]
pub struct CalibrateOptions {
    pub max_evals: Option<usize>,
    pub tolerance: Option<f64>,
}

/// Fits the `[calibration]` parameters of `scene` against reference frames
/// `references/frame_<i>.pgm`, one per trajectory pose. Every candidate is
/// rendered with the config's base seed. Returns the fitted config too.
pub fn calibrate_scene(
    scene: &LoadedScene,
    trajectory: &Trajectory,
    references: &Path,
    opts: &CalibrateOptions,
) -> Result<(CalibrationResult, crate::config::SceneConfig)> {
    let spec = scene.config.param_spec()?;
    let cal = scene.config.calibration.as_ref().expect("param_spec checked the section");
    let (na, nr) = (scene.simulation.sensor.n_azimuth as usize, scene.simulation.sensor.n_range_bins as usize);
    let refs = (0..trajectory.len())
        .map(|i| {
            let path = references.join(frame_file_name(i));
            let img = read_frame(&path)?;
            if img.dims() != (na, nr) {
                return Err(CliError::Input(format!(
                    "{}: dimensions {:?} do not match the sensor ({na}, {nr})",
                    path.display(),
                    img.dims()
                )));
            }
            Ok(img)
        })
        .collect::<Result<Vec<_>>>()?;
    let result = calibrate(
        &spec,
        &scene.simulation,
        &trajectory.poses(),
        &refs,
        scene.config.seed,
        &MetricConfig::default(),
        opts.max_evals.unwrap_or(cal.max_evals),
        opts.tolerance.unwrap_or(cal.tolerance),
    )?;
    let mut fitted = scene.config.clone();
    for (name, &v) in result.names.iter().zip(&result.best) {
        fitted.set_param(name, v)?;
    }
    Ok((result, fitted))
}

pub fn cmd_calibrate(
    config: &Path,
    trajectory: &Path,
    references: &Path,
    out_config: &Path,
    out_trace: &Path,
    opts: &CalibrateOptions,
) -> Result<CalibrationResult> {
    let scene = load_scene(config)?;
    let trajectory = load_trajectory(trajectory)?;
    let (result, fitted) = calibrate_scene(&scene, &trajectory, references, opts)?;
    fs::write(out_config, fitted.to_toml()).map_err(CliError::io(out_config))?;
    let mut w = csv::Writer::from_path(out_trace).map_err(CliError::csv(out_trace))?;
    w.write_record(["iteration", "best_objective"]).map_err(CliError::csv(out_trace))?;
    for (i, v) in result.trace.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()]).map_err(CliError::csv(out_trace))?;
    }
    w.flush().map_err(CliError::io(out_trace))?;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    #[serde(rename = "N_s")]
    pub n_samples: u32,
    pub mean_ms: f64,
    pub std_ms: f64,
}

pub const MIN_REPEATS: usize = 3;

/// Wall-clock time of one full frame per `N_s`. Each setting renders one
/// discarded warmup frame; the timed repeats are interleaved across
/// settings (round-robin) so slow drift of the machine affects all of them
/// alike.
pub fn bench(sim: &Simulation, pose: &Pose, samples: &[u32], repeats: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if samples.is_empty() {
        return Err(CliError::Input("samples list is empty".into()));
    }
    if repeats < MIN_REPEATS {
        return Err(CliError::Input(format!("repeats={repeats} must be >= {MIN_REPEATS}")));
    }
    let sims: Vec<Simulation> = samples
        .iter()
        .map(|&n| {
            let mut s = sim.clone();
            s.sensor.beam.n_samples = n;
            s
        })
        .collect();
    for s in &sims {
        s.render(pose, seed)?;
    }
    let mut times = vec![Vec::with_capacity(repeats); sims.len()];
    for r in 0..repeats {
        for (s, t) in sims.iter().zip(&mut times) {
            let start = Instant::now();
            s.render(pose, derive_seed(seed, r as u64))?;
            t.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    Ok(samples
        .iter()
        .zip(&times)
        .map(|(&n, t)| {
            let (mean_ms, std_ms) = mean_std(t);
            BenchRow { n_samples: n, mean_ms, std_ms }
        })
        .collect())
}

pub fn write_bench(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::csv(path))?;
    for r in rows {
        w.serialize(r).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Benchmarks at the first trajectory pose, or the origin without one.
pub fn cmd_bench(
    config: &Path,
    trajectory: Option<&Path>,
    samples: &[u32],
    repeats: usize,
    out_csv: &Path,
) -> Result<Vec<BenchRow>> {
    let scene = load_scene(config)?;
    let pose = match trajectory {
        Some(p) => load_trajectory(p)?.records[0].pose,
        None => Pose::IDENTITY,
    };
    let rows = bench(&scene.simulation, &pose, samples, repeats, scene.config.seed)?;
    write_bench(&rows, out_csv)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn frame_seeds_are_distinct() {
        let seeds: std::collections::HashSet<_> = (0..100).map(|i| frame_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_eq!(frame_seed(7, 3), frame_seed(7, 3));
    }

    #[test]
    fn frame_names() {
        assert_eq!(frame_file_name(12), "frame_12.pgm");
    }
}
